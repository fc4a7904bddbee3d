//! Feature extraction and inference, on all cores and on one thread, with and
//! without the neighborhood map. Build with `--no-default-features` to time
//! the sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ps3d::features::{build_pyramid, Descriptor, DescriptorConfig, PyramidConfig};
use ps3d::inference::{dp_infer, InferConfig, PruneMode};
use ps3d::model::{PartSpec, PsModel, Variant};
use ps3d::par;
use ps3d::synthgen::{generate_scene, SceneConfig};

fn model() -> PsModel {
    let desc = DescriptorConfig::new(vec![Descriptor::IHog, Descriptor::Hdd]);
    let mut m = PsModel::zeros(Variant::Psi3d4, PartSpec::upper_body(), vec![2; 9], desc, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for t in m.templates.iter_mut().flatten() {
        t.iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
    }
    for e in m.edges.iter_mut().flatten() {
        e.weights = vec![-3.0, 0.0, -0.1, 0.0, -0.1];
        e.anchor.dist = 0.3;
    }
    m.pyramid = PyramidConfig { max_levels: 2, ..m.pyramid };
    m
}

fn bench(c: &mut Criterion) {
    let m = model();
    let frame = generate_scene(&SceneConfig::default(), 0).unwrap();
    let pyramid = build_pyramid(&frame, &m.descriptors, &m.pyramid).unwrap();
    let threads = [("all", 0), ("one", 1)];

    let mut g = c.benchmark_group("pyramid");
    g.sample_size(10);
    for (name, n) in threads {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| par::with_threads(n, || build_pyramid(&frame, &m.descriptors, &m.pyramid).unwrap()))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("inference");
    g.sample_size(10);
    for prune in [PruneMode::Paper, PruneMode::Off] {
        let cfg = InferConfig { prune, threshold: Some(f64::NEG_INFINITY), ..InferConfig::default() };
        for (name, n) in threads {
            g.bench_function(BenchmarkId::new(prune.name(), name), |b| {
                b.iter(|| par::with_threads(n, || dp_infer(&m, &pyramid, &frame, &cfg).unwrap()))
            });
        }
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
