//! `train` and `gibbs-train`: run a sampler on a two-layer net, streaming the
//! risk trace to CSV and keeping the run record current.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use multilevel_core::nnet::misclassification_rate;
use multilevel_core::sampler::{gibbs_sampler, multilevel_metropolis, StepRecord, TwoLayerNet};
use multilevel_core::{empirical_risk, Dataset, NetParams, NetSpec};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::{
    config_hash, ExperimentConfig, RunRecord, RunStatus, SCHEMA_VERSION, TRACE_FILE, WEIGHTS_FILE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Two-level Metropolis with a nested inner chain.
    Multilevel,
    /// Joint random-walk Metropolis on the Gibbs posterior.
    Gibbs,
}

impl Method {
    pub fn command(self) -> &'static str {
        match self {
            Method::Multilevel => "train",
            Method::Gibbs => "gibbs-train",
        }
    }
}

pub const TRACE_HEADER: [&str; 5] = ["iter", "train_risk", "test_risk_every_k", "accept_outer", "accept_inner"];

#[derive(Serialize)]
struct WeightsSnapshot {
    iter: usize,
    /// Row-major `rows × cols` matrices, input layer first.
    layers: Vec<MatrixSnapshot>,
}

#[derive(Serialize)]
struct MatrixSnapshot {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

fn snapshot(m: &DMatrix<f64>) -> MatrixSnapshot {
    MatrixSnapshot { rows: m.nrows(), cols: m.ncols(), values: m.transpose().as_slice().to_vec() }
}

/// Runs every configured seed; several seeds run concurrently, each in
/// `out/seed-<seed>/`. Returns one record per seed, in config order.
pub fn run(config: &ExperimentConfig, method: Method, out: &Path) -> Result<Vec<RunRecord>> {
    config.validate()?;
    if method == Method::Gibbs && config.gibbs.is_none() {
        bail!("gibbs-train needs a [gibbs] section with gamma");
    }
    let spec = config.net_spec()?;
    let (train, test) = config.load_data(&spec)?;
    let seeds = config.seeds();
    if seeds.len() == 1 {
        return Ok(vec![run_seed(config, method, &spec, &train, test.as_ref(), seeds[0], out)?]);
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let dir = out.join(format!("seed-{seed}"));
                let (spec, train, test) = (&spec, &train, test.as_ref());
                scope.spawn(move || run_seed(config, method, spec, train, test, seed, &dir))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().map_err(|_| anyhow!("a sampler thread panicked"))?)
            .collect()
    })
}

struct TraceWriter {
    csv: csv::Writer<BufWriter<File>>,
}

impl TraceWriter {
    fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut csv = csv::Writer::from_writer(BufWriter::new(file));
        csv.write_record(TRACE_HEADER)?;
        csv.flush()?;
        Ok(Self { csv })
    }

    fn row(&mut self, iter: usize, train: f64, test: Option<f64>, outer: f64, inner: Option<f64>) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        self.csv.write_record([iter.to_string(), train.to_string(), opt(test), outer.to_string(), opt(inner)])?;
        // flushed per row so an interrupted run still leaves a readable prefix
        self.csv.flush()?;
        Ok(())
    }
}

struct Observer<'a> {
    spec: &'a NetSpec,
    test: Option<&'a Dataset>,
    test_every: usize,
    last_iter: usize,
    deadline: Option<(Instant, f64)>,
    writer: TraceWriter,
    last: Option<(usize, DMatrix<f64>, DMatrix<f64>)>,
    error: Option<anyhow::Error>,
}

impl Observer<'_> {
    fn step(&mut self, r: &StepRecord<'_, DMatrix<f64>, DMatrix<f64>>) -> ControlFlow<()> {
        let out_of_time = self.deadline.is_some_and(|(start, limit)| start.elapsed().as_secs_f64() >= limit);
        let stopping = out_of_time || r.iter == self.last_iter;
        let test = match self.test {
            Some(test) if r.iter % self.test_every == 0 || stopping => {
                let params = NetParams::new(vec![r.w1.clone(), r.w2.clone()]);
                match empirical_risk(self.spec, &params, test) {
                    Ok(v) => Some(v),
                    Err(e) => return self.fail(e.into()),
                }
            }
            _ => None,
        };
        if let Err(e) = self.writer.row(r.iter, r.risk, test, r.accept_rate_outer, r.accept_inner) {
            return self.fail(e);
        }
        if stopping {
            self.last = Some((r.iter, r.w1.clone(), r.w2.clone()));
        }
        if out_of_time {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    }

    fn fail(&mut self, e: anyhow::Error) -> ControlFlow<()> {
        self.error = Some(e);
        ControlFlow::Break(())
    }
}

fn metrics(spec: &NetSpec, params: &NetParams, data: &Dataset) -> Result<(f64, Option<f64>)> {
    let loss = empirical_risk(spec, params, data)?;
    let miss = match data.classes() {
        Some(_) => Some(misclassification_rate(spec, params, data)?),
        None => None,
    };
    Ok((loss, miss))
}

/// One chain. The record is written as incomplete before sampling starts and
/// rewritten when the chain finishes.
pub fn run_seed(
    config: &ExperimentConfig,
    method: Method,
    spec: &NetSpec,
    train: &Dataset,
    test: Option<&Dataset>,
    seed: u64,
    dir: &Path,
) -> Result<RunRecord> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let start = Instant::now();
    let mut echoed = config.clone();
    echoed.sampler.seed = Some(seed);
    echoed.sampler.seeds = None;
    echoed.out_dir = None;
    let mut record = RunRecord {
        schema_version: SCHEMA_VERSION,
        command: method.command().into(),
        status: RunStatus::Incomplete,
        seed,
        config_hash: config_hash(&echoed)?,
        trace: PathBuf::from(TRACE_FILE),
        weights: None,
        iterations_completed: 0,
        accept_rate_outer: None,
        mean_accept_inner: None,
        final_train_loss: None,
        final_train_misclassification: None,
        final_test_loss: None,
        final_test_misclassification: None,
        wall_time_seconds: 0.0,
        config: echoed,
    };
    record.write(dir)?;

    let model = TwoLayerNet::new(spec, train, config.priors(), config.proposal_scales())?;
    let sampler_cfg = config.sampler_config(seed)?;
    let init = (spec.layers()[0].reference().clone(), spec.layers()[1].reference().clone());
    let mut obs = Observer {
        spec,
        test,
        test_every: config.sampler.test_every,
        last_iter: sampler_cfg.outer_iters - 1,
        deadline: config.sampler.max_wall_seconds.map(|s| (start, s)),
        writer: TraceWriter::create(&dir.join(TRACE_FILE))?,
        last: None,
        error: None,
    };
    let trace = match method {
        Method::Multilevel => multilevel_metropolis(&model, &sampler_cfg, init, 0, |r| obs.step(r)),
        Method::Gibbs => {
            let gamma = config.gibbs.as_ref().map(|g| g.gamma).unwrap_or_default();
            gibbs_sampler(&model, gamma, &sampler_cfg, init, 0, |r| obs.step(r))
        }
    };
    let finish = |record: &mut RunRecord| -> Result<()> {
        record.wall_time_seconds = start.elapsed().as_secs_f64();
        record.write(dir)
    };
    let trace = match trace {
        Ok(t) => t,
        Err(e) => {
            finish(&mut record)?;
            return Err(e.into());
        }
    };
    record.iterations_completed = trace.risk_trace.len();
    record.accept_rate_outer = Some(trace.accept_rate_outer);
    record.mean_accept_inner = trace.mean_accept_inner;
    if let Some(e) = obs.error.take() {
        finish(&mut record)?;
        return Err(e.context("writing trace"));
    }
    if let Some((iter, w1, w2)) = obs.last.take() {
        let params = NetParams::new(vec![w1, w2]);
        let (loss, miss) = metrics(spec, &params, train)?;
        record.final_train_loss = Some(loss);
        record.final_train_misclassification = miss;
        if let Some(test) = test {
            let (loss, miss) = metrics(spec, &params, test)?;
            record.final_test_loss = Some(loss);
            record.final_test_misclassification = miss;
        }
        let snap = WeightsSnapshot { iter, layers: params.weights.iter().map(snapshot).collect() };
        let path = dir.join(WEIGHTS_FILE);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, &snap)?;
        w.flush()?;
        record.weights = Some(PathBuf::from(WEIGHTS_FILE));
    }
    if trace.completed {
        record.status = RunStatus::Complete;
    }
    finish(&mut record)?;
    Ok(record)
}

/// Reads a trace back as numeric columns; empty cells become `None`.
pub fn read_trace(path: &Path) -> Result<Vec<Vec<Option<f64>>>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != TRACE_HEADER {
        bail!("{}: unexpected header {header:?}", path.display());
    }
    let mut cols = vec![Vec::new(); TRACE_HEADER.len()];
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        for (c, cell) in row.iter().enumerate() {
            let v = if cell.is_empty() {
                None
            } else {
                Some(cell.parse::<f64>().with_context(|| format!("row {}: column {} is not a number", line + 2, TRACE_HEADER[c]))?)
            };
            cols[c].push(v);
        }
    }
    Ok(cols)
}
