#![allow(dead_code)]

use con4m::autodiff::{ParamStore, Tape, Tensor, Var};
use con4m::encoder::{ConAttentionLayer, EncoderConfig, GateMode, LayerTrace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Largest relative error between tape gradients and central differences.
pub fn max_grad_error<F>(store: &ParamStore, h: f64, build: F) -> f64
where
    F: Fn(&mut Tape, &ParamStore) -> Var,
{
    let mut tape = Tape::new();
    let loss = build(&mut tape, store);
    let grads = tape.backward(loss).expect("backward");
    let eval = |s: &ParamStore| {
        let mut t = Tape::new();
        let l = build(&mut t, s);
        t.value(l).item()
    };
    let mut worst = 0.0f64;
    let mut probe = store.clone();
    for id in store.ids() {
        let analytic = grads.get(id, store);
        for k in 0..store.get(id).len() {
            let orig = store.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = orig + h;
            let up = eval(&probe);
            probe.get_mut(id).data_mut()[k] = orig - h;
            let down = eval(&probe);
            probe.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.data()[k];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
            worst = worst.max(err);
        }
    }
    worst
}

/// Worst relative gradient error of each differentiable op in isolation.
pub fn op_gradient_errors() -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::new();
    let a = store.register("a", random(&mut rng, &[3, 4]));
    let b = store.register("b", random(&mut rng, &[4, 2]));
    let c = store.register("c", random(&mut rng, &[3, 4]));
    let row = store.register("row", random(&mut rng, &[4]));
    let col = store.register("col", random(&mut rng, &[3, 1]));
    let sig = store.register("sig", Tensor::new(vec![4, 1], vec![0.7, 1.3, 2.2, 0.9]).unwrap());
    let seq = store.register("seq", random(&mut rng, &[2 * 6, 2]));
    let weights: &'static Tensor = Box::leak(Box::new(random(&mut rng, &[64])));

    // Reduce any tensor to a scalar with fixed pseudo-random weights so every
    // output element contributes a distinct coefficient.
    let reduce = move |t: &mut Tape, v: con4m::autodiff::Var| {
        let n = t.value(v).len();
        let w = Tensor::new(t.value(v).shape().to_vec(), weights.data()[..n].to_vec()).unwrap();
        let wv = t.constant(w);
        let p = t.mul(v, wv).unwrap();
        t.sum(p)
    };

    type Build = Box<dyn Fn(&mut Tape, &ParamStore) -> con4m::autodiff::Var>;
    let cases: Vec<(&str, Build)> = vec![
        ("matmul", Box::new(move |t, s| { let (x, y) = (t.param(s, a), t.param(s, b)); let o = t.matmul(x, y).unwrap(); reduce(t, o) })),
        ("transpose", Box::new(move |t, s| { let x = t.param(s, a); let o = t.transpose(x).unwrap(); reduce(t, o) })),
        ("add", Box::new(move |t, s| { let (x, y) = (t.param(s, a), t.param(s, c)); let o = t.add(x, y).unwrap(); reduce(t, o) })),
        ("sub", Box::new(move |t, s| { let (x, y) = (t.param(s, a), t.param(s, c)); let o = t.sub(x, y).unwrap(); reduce(t, o) })),
        ("mul", Box::new(move |t, s| { let (x, y) = (t.param(s, a), t.param(s, c)); let o = t.mul(x, y).unwrap(); reduce(t, o) })),
        ("add_row", Box::new(move |t, s| { let (x, y) = (t.param(s, a), t.param(s, row)); let o = t.add_row(x, y).unwrap(); reduce(t, o) })),
        ("mul_row", Box::new(move |t, s| { let (x, y) = (t.param(s, a), t.param(s, row)); let o = t.mul_row(x, y).unwrap(); reduce(t, o) })),
        ("mul_col", Box::new(move |t, s| { let (x, y) = (t.param(s, a), t.param(s, col)); let o = t.mul_col(x, y).unwrap(); reduce(t, o) })),
        ("scale", Box::new(move |t, s| { let x = t.param(s, a); let o = t.scale(x, -1.7); reduce(t, o) })),
        ("add_scalar", Box::new(move |t, s| { let x = t.param(s, a); let o = t.add_scalar(x, 0.3); let o = t.mul(o, o).unwrap(); reduce(t, o) })),
        ("tanh", Box::new(move |t, s| { let x = t.param(s, a); let o = t.tanh(x); reduce(t, o) })),
        ("exp", Box::new(move |t, s| { let x = t.param(s, a); let o = t.exp(x); reduce(t, o) })),
        ("log", Box::new(move |t, s| { let x = t.param(s, a); let e = t.exp(x); let e = t.add_scalar(e, 0.5); let o = t.log(e).unwrap(); reduce(t, o) })),
        ("gelu", Box::new(move |t, s| { let x = t.param(s, a); let o = t.gelu(x); reduce(t, o) })),
        ("softplus", Box::new(move |t, s| { let x = t.param(s, a); let o = t.softplus(x); reduce(t, o) })),
        ("softmax", Box::new(move |t, s| { let x = t.param(s, a); let o = t.softmax_rows(x); reduce(t, o) })),
        ("concat", Box::new(move |t, s| { let (x, y) = (t.param(s, a), t.param(s, col)); let o = t.concat_cols(x, y).unwrap(); reduce(t, o) })),
        ("slice_cols", Box::new(move |t, s| { let x = t.param(s, a); let o = t.slice_cols(x, 1, 3).unwrap(); reduce(t, o) })),
        ("slice_rows", Box::new(move |t, s| { let x = t.param(s, a); let o = t.slice_rows(x, 1, 3).unwrap(); reduce(t, o) })),
        ("reshape", Box::new(move |t, s| { let x = t.param(s, a); let o = t.reshape(x, &[4, 3]).unwrap(); reduce(t, o) })),
        ("mean", Box::new(move |t, s| { let x = t.param(s, a); let sq = t.mul(x, x).unwrap(); t.mean(sq) })),
        ("cross_entropy", Box::new(move |t, s| {
            let x = t.param(s, a);
            let p = t.softmax_rows(x);
            let tgt = Tensor::from_rows(&[vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.5, 0.5, 0.0], vec![0.1, 0.2, 0.3, 0.4]]).unwrap();
            t.cross_entropy(p, &tgt).unwrap()
        })),
        ("mse", Box::new(move |t, s| { let (x, y) = (t.param(s, a), t.param(s, c)); t.mse(x, y).unwrap() })),
        ("layer_norm", Box::new(move |t, s| { let x = t.param(s, a); let o = t.layer_norm(x, 1e-5); reduce(t, o) })),
        ("gaussian", Box::new(move |t, s| { let x = t.param(s, sig); let o = t.gaussian_weights(x).unwrap(); reduce(t, o) })),
        ("unfold", Box::new(move |t, s| { let x = t.param(s, seq); let o = t.unfold(x, 2, 3, 2).unwrap(); reduce(t, o) })),
        ("block_mean", Box::new(move |t, s| { let x = t.param(s, seq); let o = t.block_mean(x, 3).unwrap(); reduce(t, o) })),
        ("pairwise_sum", Box::new(move |t, s| { let (x, y) = (t.param(s, a), t.param(s, c)); let o = t.pairwise_sum(x, y).unwrap(); let o = t.tanh(o); reduce(t, o) })),
    ];
    cases
        .into_iter()
        .map(|(name, build)| (name, max_grad_error(&store, 1e-5, |t, s| build(t, s))))
        .collect()
}

/// Worst relative gradient error over one full Con-Attention layer.
pub fn layer_gradient_error(gate: GateMode, seed: u64) -> f64 {
    let cfg = EncoderConfig {
        d_model: 8,
        d_ff: 16,
        heads: 2,
        dropout: 0.0,
        gate,
        ..EncoderConfig::default()
    };
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layer = ConAttentionLayer::new(&mut store, &mut rng, &cfg, 0);
    // Move σ off its initial value so the kernel slope is not tiny.
    for h in 0..2 {
        store.get_mut(layer.sigma_bias(h)).data_mut()[0] = 0.3;
    }
    let input = random(&mut rng, &[4, 8]);
    let weights = random(&mut rng, &[4, 8]);
    max_grad_error(&store, 1e-5, move |t, s| {
        let x = t.constant(input.clone());
        let mut trace = LayerTrace::default();
        let y = layer.forward(t, s, x, None, &mut trace).unwrap();
        let w = t.constant(weights.clone());
        let p = t.mul(y, w).unwrap();
        t.sum(p)
    })
}
