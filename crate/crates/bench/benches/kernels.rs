use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use rntm_core::lid::PoolingHead;
use rntm_core::nnet::{BiLstm, Init, ParamStore, Rng, SequenceTensor};
use rntm_core::transducer::{rnnt_loss_from_logits, ModelDims, RnntModel, Vocab};

fn random_seq(rng: &mut Rng, frames: usize, width: usize) -> SequenceTensor {
    SequenceTensor::new(frames, width, (0..frames * width).map(|_| rng.normal()).collect()).unwrap()
}

fn rnnt_loss(c: &mut Criterion) {
    let mut group = c.benchmark_group("rnnt_loss");
    let vocab = 30;
    for (frames, labels) in [(50, 10), (200, 40)] {
        let mut rng = Rng::new(1);
        let logits: Vec<f64> = (0..frames * (labels + 1) * vocab).map(|_| rng.normal()).collect();
        let target: Vec<usize> = (0..labels).map(|_| 1 + rng.below(vocab - 1)).collect();
        group.bench_with_input(BenchmarkId::from_parameter(format!("{frames}x{labels}")), &(), |b, _| {
            b.iter(|| rnnt_loss_from_logits(black_box(&logits), frames, &target, vocab, 0).unwrap())
        });
    }
    group.finish();
}

fn model_loss_and_grad(c: &mut Criterion) {
    let chars: Vec<String> = (0..20).map(|i| format!("s{i}")).collect();
    let model = RnntModel::new(ModelDims::default(), Vocab::with_blank(&chars).unwrap(), 2).unwrap();
    let mut rng = Rng::new(3);
    let x = random_seq(&mut rng, 40, 16);
    let target: Vec<usize> = (0..9).map(|_| 1 + rng.below(20)).collect();
    c.bench_function("model_loss_and_grad/40x9", |b| {
        b.iter(|| {
            let mut g = model.params().grad_buffer();
            model.loss_and_grad(black_box(&x), &target, &mut g).unwrap()
        })
    });
}

fn bilstm(c: &mut Criterion) {
    let mut group = c.benchmark_group("bilstm_forward");
    let mut rng = Rng::new(4);
    let mut store = ParamStore::new();
    let layer = BiLstm::new(&mut store, &mut Init::Random(&mut rng), "bi", 16, 32).unwrap();
    for frames in [50, 300] {
        let x = random_seq(&mut rng, frames, 16);
        group.bench_with_input(BenchmarkId::from_parameter(frames), &x, |b, x| {
            b.iter(|| layer.forward(&store, black_box(x)).0)
        });
    }
    group.finish();
}

fn pooling(c: &mut Criterion) {
    let mut group = c.benchmark_group("pooling");
    let mut rng = Rng::new(5);
    let mut store = ParamStore::new();
    let head = PoolingHead::new(&mut store, &mut Init::Random(&mut rng), "pool", 32, 4, 8).unwrap();
    for frames in [50, 300] {
        let x = random_seq(&mut rng, frames, 32);
        group.bench_with_input(BenchmarkId::new("forward", frames), &x, |b, x| {
            b.iter(|| head.forward(&store, black_box(x)).0)
        });
        let (y, cache) = head.forward(&store, &x);
        let dy = vec![1.0; y.len()];
        group.bench_with_input(BenchmarkId::new("backward", frames), &x, |b, x| {
            b.iter(|| {
                let mut g = store.grad_buffer();
                head.backward(&store, black_box(x), &cache, &dy, &mut g)
            })
        });
    }
    group.finish();
}

criterion_group!(benches, rnnt_loss, model_loss_and_grad, bilstm, pooling);
criterion_main!(benches);
