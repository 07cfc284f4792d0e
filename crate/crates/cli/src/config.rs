//! Experiment configuration and run records, both stored as TOML.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use multilevel_core::data::mnist::{load_mnist, MNIST_RADIUS};
use multilevel_core::data::synth::{random_teacher, synth_dataset, InputKind, LabelKind, SynthSpec};
use multilevel_core::sampler::{LayerPrior, SamplerConfig};
use multilevel_core::{Dataset, NetSpec, OutputActivation, TemperatureVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

/// Radius used when `net.radii` is omitted: large enough that the balls never bind.
pub const DEFAULT_RADIUS: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub dataset: DatasetConfig,
    pub net: NetConfig,
    pub sampler: SamplerSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gibbs: Option<GibbsSection>,
    /// Default output directory; `--out` overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetConfig {
    Mnist {
        /// Directory holding `train-*` and `t10k-*` IDX files (raw or gzipped).
        path: PathBuf,
        /// Use only the first `train_subsample` training examples.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train_subsample: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_subsample: Option<usize>,
    },
    Synthetic {
        n: usize,
        #[serde(default)]
        test_n: usize,
        classes: usize,
        inputs: InputKind,
        labels: LabelKind,
        seed: u64,
        input_radius: f64,
        /// Teacher distance from the references, as a fraction of each radius.
        #[serde(default = "default_teacher_fraction")]
        teacher_fraction: f64,
    },
}

fn default_teacher_fraction() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    /// Layer widths from input to output, e.g. `[784, 100, 10]`.
    pub dims: Vec<usize>,
    pub output: OutputActivation,
    /// Ball radii `α_k` (dimensionless, relative to `‖M_k‖₂`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    /// `(a₁, a₂)`
    pub temps: Vec<f64>,
    pub outer_iters: usize,
    pub inner_iters: usize,
    /// Gaussian random-walk standard deviation per layer.
    pub proposal_std: Vec<f64>,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Several seeds run as concurrent chains, one subdirectory each.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    /// Test risk is evaluated every `test_every` outer iterations.
    #[serde(default = "default_test_every")]
    pub test_every: usize,
    #[serde(default = "default_priors")]
    pub priors: Vec<LayerPrior>,
    /// Stop cleanly (record marked incomplete) after this many seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_wall_seconds: Option<f64>,
}

fn default_thin() -> usize {
    100
}

fn default_test_every() -> usize {
    100
}

fn default_priors() -> Vec<LayerPrior> {
    vec![LayerPrior::Flat, LayerPrior::Flat]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GibbsSection {
    /// Inverse temperature `γ` of the joint Gibbs posterior.
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Incomplete,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub schema_version: u32,
    pub command: String,
    pub status: RunStatus,
    pub seed: u64,
    /// `sha256:<hex>` of the canonical TOML of `config`.
    pub config_hash: String,
    /// Relative to the record's directory.
    pub trace: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
    pub iterations_completed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accept_rate_outer: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_accept_inner: Option<f64>,
    /// Mean squared ℓ2 loss of the final sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_train_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_train_misclassification: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_test_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_test_misclassification: Option<f64>,
    pub wall_time_seconds: f64,
    pub config: ExperimentConfig,
}

pub const RECORD_FILE: &str = "run.toml";
pub const TRACE_FILE: &str = "trace.csv";
pub const WEIGHTS_FILE: &str = "weights.json";

impl RunRecord {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = toml::to_string(self).context("serializing run record")?;
        let path = dir.join(RECORD_FILE);
        // write-then-rename so a crash never leaves a half-written record
        let tmp = dir.join(format!("{RECORD_FILE}.tmp"));
        fs::write(&tmp, text).with_context(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, &path).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing run record {}", path.display()))
    }
}

/// Reads either an experiment config or a run record; a record yields its
/// echoed config pinned to the seed it ran with, so the run replays exactly.
/// A relative dataset path is resolved against the file's directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let table: toml::Table = text.parse().with_context(|| format!("parsing {}", path.display()))?;
    let config = if table.contains_key("config") && table.contains_key("status") {
        let record: RunRecord = toml::from_str(&text).with_context(|| format!("parsing run record {}", path.display()))?;
        let mut config = record.config;
        config.sampler.seed = Some(record.seed);
        config.sampler.seeds = None;
        config
    } else {
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
    };
    let mut config = config;
    if let (DatasetConfig::Mnist { path: data, .. }, Some(base)) = (&mut config.dataset, path.parent()) {
        if data.is_relative() {
            *data = base.join(&*data);
        }
    }
    config.validate()?;
    Ok(config)
}

pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    let canonical = toml::to_string(config).context("serializing config")?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(format!("sha256:{}", digest.iter().map(|b| format!("{b:02x}")).collect::<String>()))
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.schema_version == SCHEMA_VERSION,
            "schema_version {} is not supported (expected {SCHEMA_VERSION})",
            self.schema_version
        );
        let s = &self.sampler;
        ensure!(s.temps.len() == 2, "sampler.temps needs 2 entries, got {}", s.temps.len());
        TemperatureVector::new(s.temps.clone()).context("sampler.temps")?;
        ensure!(s.outer_iters >= 1 && s.inner_iters >= 1, "sampler.outer_iters and sampler.inner_iters must be >= 1");
        ensure!(s.proposal_std.len() == 2, "sampler.proposal_std needs 2 entries, got {}", s.proposal_std.len());
        ensure!(
            s.proposal_std.iter().all(|&v| v > 0.0 && v.is_finite()),
            "sampler.proposal_std entries must be finite and > 0"
        );
        ensure!(s.thin >= 1, "sampler.thin must be >= 1");
        ensure!(s.test_every >= 1, "sampler.test_every must be >= 1");
        ensure!(s.priors.len() == 2, "sampler.priors needs 2 entries, got {}", s.priors.len());
        if let Some(seeds) = &s.seeds {
            ensure!(!seeds.is_empty(), "sampler.seeds is empty");
            let mut sorted = seeds.clone();
            sorted.sort_unstable();
            sorted.dedup();
            ensure!(sorted.len() == seeds.len(), "sampler.seeds contains duplicates");
        }
        if let Some(w) = s.max_wall_seconds {
            ensure!(w > 0.0, "sampler.max_wall_seconds must be > 0");
        }
        ensure!(self.net.dims.len() == 3, "net.dims must list 3 widths for a two-layer net, got {}", self.net.dims.len());
        if let Some(r) = &self.net.radii {
            ensure!(r.len() == 2, "net.radii needs 2 entries, got {}", r.len());
        }
        if let Some(g) = &self.gibbs {
            ensure!(g.gamma >= 0.0 && g.gamma.is_finite(), "gibbs.gamma must be finite and >= 0");
        }
        match &self.dataset {
            DatasetConfig::Mnist { path, train_subsample, test_subsample } => {
                ensure!(path.is_dir(), "dataset.path {} is not a directory", path.display());
                ensure!(train_subsample.is_none_or(|n| n >= 1), "dataset.train_subsample must be >= 1");
                ensure!(test_subsample.is_none_or(|n| n >= 1), "dataset.test_subsample must be >= 1");
            }
            DatasetConfig::Synthetic { n, classes, input_radius, teacher_fraction, .. } => {
                ensure!(*n >= 1 && *classes >= 1, "dataset.n and dataset.classes must be >= 1");
                ensure!(*input_radius > 0.0, "dataset.input_radius must be > 0");
                ensure!((0.0..=1.0).contains(teacher_fraction), "dataset.teacher_fraction must lie in [0, 1]");
            }
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        match (&self.sampler.seeds, self.sampler.seed) {
            (Some(seeds), _) => seeds.clone(),
            (None, Some(seed)) => vec![seed],
            (None, None) => vec![0],
        }
    }

    pub fn input_radius(&self) -> f64 {
        match &self.dataset {
            DatasetConfig::Mnist { .. } => MNIST_RADIUS,
            DatasetConfig::Synthetic { input_radius, .. } => *input_radius,
        }
    }

    pub fn net_spec(&self) -> Result<NetSpec> {
        let radii = self.net.radii.clone().unwrap_or_else(|| vec![DEFAULT_RADIUS; self.net.dims.len() - 1]);
        NetSpec::identity(&self.net.dims, &radii, self.net.output, self.input_radius()).context("net")
    }

    pub fn sampler_config(&self, seed: u64) -> Result<SamplerConfig> {
        let s = &self.sampler;
        let mut cfg = SamplerConfig::new(TemperatureVector::new(s.temps.clone())?, s.outer_iters, s.inner_iters, seed);
        cfg.thin = s.thin;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn priors(&self) -> [LayerPrior; 2] {
        [self.sampler.priors[0], self.sampler.priors[1]]
    }

    pub fn proposal_scales(&self) -> [f64; 2] {
        [self.sampler.proposal_std[0], self.sampler.proposal_std[1]]
    }

    /// Training set and optional test set described by `[dataset]`.
    pub fn load_data(&self, spec: &NetSpec) -> Result<(Dataset, Option<Dataset>)> {
        let (train, test) = match &self.dataset {
            DatasetConfig::Mnist { path, train_subsample, test_subsample } => {
                let m = load_mnist(path).with_context(|| format!("loading MNIST from {}", path.display()))?;
                let train = match train_subsample {
                    Some(n) => m.train.head(*n),
                    None => m.train,
                };
                let test = match test_subsample {
                    Some(n) => m.test.head(*n),
                    None => m.test,
                };
                (train, Some(test))
            }
            DatasetConfig::Synthetic { n, test_n, classes, inputs, labels, seed, input_radius, teacher_fraction } => {
                let teacher = random_teacher(spec, *seed, *teacher_fraction);
                let teacher = (*labels == LabelKind::Teacher).then_some((spec, &teacher));
                let make = |count: usize, data_seed: u64| {
                    synth_dataset(
                        &SynthSpec {
                            n: count,
                            input_dim: spec.input_dim(),
                            num_classes: *classes,
                            seed: data_seed,
                            inputs: *inputs,
                            labels: *labels,
                            input_radius: *input_radius,
                        },
                        teacher,
                    )
                };
                let train = make(*n, *seed)?;
                let test = if *test_n > 0 { Some(make(*test_n, seed.wrapping_add(1))?) } else { None };
                (train, test)
            }
        };
        if train.input_dim() != spec.input_dim() || train.label_dim() != spec.output_dim() {
            bail!(
                "dataset is {}→{} but net.dims is {:?}",
                train.input_dim(),
                train.label_dim(),
                self.net.dims
            );
        }
        Ok((train, test))
    }
}

/// A small synthetic configuration, used by tests and as a template.
pub fn synthetic_example(outer_iters: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        dataset: DatasetConfig::Synthetic {
            n: 64,
            test_n: 32,
            classes: 3,
            inputs: InputKind::Gaussian,
            labels: LabelKind::Teacher,
            seed: 7,
            input_radius: 2.0,
            teacher_fraction: 0.5,
        },
        net: NetConfig { dims: vec![6, 8, 3], output: OutputActivation::Softmax, radii: Some(vec![0.5, 0.5]) },
        sampler: SamplerSection {
            temps: vec![0.02, 0.01],
            outer_iters,
            inner_iters: 5,
            proposal_std: vec![0.02, 0.02],
            thin: 10,
            seed: Some(seed),
            seeds: None,
            test_every: 10,
            priors: default_priors(),
            max_wall_seconds: None,
        },
        gibbs: Some(GibbsSection { gamma: 200.0 }),
        out_dir: None,
    }
}
