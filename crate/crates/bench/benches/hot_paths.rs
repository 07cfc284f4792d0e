use std::hint::black_box;
use std::ops::ControlFlow;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use multilevel_core::data::synth::{synth_dataset, InputKind, LabelKind, SynthSpec};
use multilevel_core::nnet::spectral_norm_default;
use multilevel_core::sampler::rng::chain_rng;
use multilevel_core::sampler::{multilevel_metropolis, LayerPrior, SamplerConfig, TwoLayerNet};
use multilevel_core::{mt_solve, reference_problems, NetSpec, OutputActivation, TemperatureVector};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn spectral(c: &mut Criterion) {
    let mut group = c.benchmark_group("spectral_norm");
    let mut rng = chain_rng(1, 0);
    for (rows, cols) in [(10, 100), (100, 784)] {
        let a = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
        group.bench_with_input(BenchmarkId::from_parameter(format!("{rows}x{cols}")), &a, |b, a| {
            b.iter(|| spectral_norm_default(black_box(a)))
        });
    }
    group.finish();
}

fn marginalize_tilt(c: &mut Criterion) {
    let problems = reference_problems();
    c.bench_function("mt_solve/8_reference_problems", |b| {
        b.iter(|| {
            for (_, p) in &problems {
                black_box(mt_solve(p).unwrap());
            }
        })
    });
}

/// Ten outer iterations (each with a T′ = 10 inner chain) of the MNIST-shaped
/// 784-100-10 net on 1000 synthetic examples.
fn sampler_steps(c: &mut Criterion) {
    let spec = NetSpec::identity(&[784, 100, 10], &[1e3, 1e3], OutputActivation::Softmax, 28.0).unwrap();
    let data = synth_dataset(
        &SynthSpec {
            n: 1000,
            input_dim: 784,
            num_classes: 10,
            seed: 3,
            inputs: InputKind::Gaussian,
            labels: LabelKind::Random,
            input_radius: 28.0,
        },
        None,
    )
    .unwrap();
    let model = TwoLayerNet::new(&spec, &data, [LayerPrior::Flat; 2], [0.001, 0.0005]).unwrap();
    let init = (spec.layers()[0].reference().clone(), spec.layers()[1].reference().clone());
    let cfg = SamplerConfig::new(TemperatureVector::new(vec![2e-6, 1e-6]).unwrap(), 10, 10, 5);
    let mut group = c.benchmark_group("two_level_metropolis");
    group.sample_size(10);
    group.bench_function("784-100-10/n=1000/10_outer_steps", |b| {
        b.iter(|| multilevel_metropolis(&model, &cfg, init.clone(), 0, |_| ControlFlow::Continue(())).unwrap())
    });
    group.finish();
}

criterion_group!(benches, spectral, marginalize_tilt, sampler_steps);
criterion_main!(benches);
