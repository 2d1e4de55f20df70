use criterion::{criterion_group, criterion_main, Criterion};
use dynoclust::datagen::{gen_moving_gaussians, gen_moving_rings};
use dynoclust::{run_stream, Algorithm, DMeansConfig, EngineSpec, GaussianStreamCfg, KernelSpec, RingStreamCfg};

fn gaussians(c: &mut Criterion) {
    let stream = gen_moving_gaussians(&GaussianStreamCfg { steps: 30, ..Default::default() }).unwrap();
    let mut g = c.benchmark_group("gaussians_30_steps");
    g.sample_size(10);
    let specs = [
        ("dmeans", EngineSpec::new(Algorithm::DMeans, None, DMeansConfig::from_reparam(0.04, 6.8, 1.01).unwrap())),
        (
            "kdmeans",
            EngineSpec::new(Algorithm::KdMeans, Some(KernelSpec::Rbf { omega: 0.08 }), DMeansConfig::from_reparam(2.0, 6.8, 1.5).unwrap()),
        ),
        (
            "sdmeans",
            EngineSpec::new(Algorithm::SdMeans, Some(KernelSpec::MstRbf { omega: 0.06 }), DMeansConfig::from_reparam(3.0, 6.8, 1.5).unwrap()),
        ),
    ];
    for (name, spec) in specs {
        let spec = spec.unwrap();
        g.bench_function(name, |b| b.iter(|| run_stream(&spec, &stream.batches).unwrap()));
    }
    g.finish();
}

fn rings(c: &mut Criterion) {
    let stream = gen_moving_rings(&RingStreamCfg { steps: 2, ..Default::default() }).unwrap();
    let spec = EngineSpec::new(
        Algorithm::SdMeans,
        Some(KernelSpec::MstRbf { omega: 0.07 }),
        DMeansConfig::from_reparam(55.0, 13.0, 4.5).unwrap(),
    )
    .unwrap();
    let mut g = c.benchmark_group("rings_2_steps");
    g.sample_size(10);
    g.bench_function("sdmeans", |b| b.iter(|| run_stream(&spec, &stream.batches).unwrap()));
    g.finish();
}

criterion_group!(benches, gaussians, rings);
criterion_main!(benches);
