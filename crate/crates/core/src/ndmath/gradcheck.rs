//! Central finite-difference checks for every graph primitive.

use proptest::prelude::*;

use super::{Graph, Rng, Tensor, Var};

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-5;

type Build = dyn Fn(&mut Graph, &[Var]) -> Var;

fn eval(build: &Build, params: &[Tensor]) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.constant(p.clone())).collect();
    let l = build(&mut g, &vars);
    g.value(l).data()[0]
}

/// Largest relative error between backward and central differences.
pub(crate) fn max_rel_error(build: &Build, params: &[Tensor]) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let l = build(&mut g, &vars);
    let grads = g.backward(l).unwrap();
    let mut worst: f64 = 0.0;
    for (pi, p) in params.iter().enumerate() {
        let analytic = grads
            .get(vars[pi])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(p.shape()));
        for i in 0..p.len() {
            let mut plus = params.to_vec();
            plus[pi].data_mut()[i] += STEP;
            let mut minus = params.to_vec();
            minus[pi].data_mut()[i] -= STEP;
            let fd = (eval(build, &plus) - eval(build, &minus)) / (2.0 * STEP);
            let a = analytic.data()[i];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-4);
            worst = worst.max(rel);
        }
    }
    worst
}

fn rand_tensor(seed: u64, shape: &[usize]) -> Tensor {
    Rng::new(seed).standard_normal(shape).unwrap()
}

#[test]
fn every_primitive_passes_finite_differences() {
    let a = rand_tensor(1, &[3, 4]);
    let b = rand_tensor(2, &[4, 2]);
    let r = rand_tensor(3, &[2]);
    let v = rand_tensor(4, &[4]).map(|x| x.abs() + 0.1);
    let build: Box<Build> = Box::new(|g: &mut Graph, p: &[Var]| {
        let ab = g.matmul(p[0], p[1]).unwrap();
        let s = g.sigmoid(ab);
        let t = g.tanh(ab);
        let st = g.mul(s, t).unwrap();
        let biased = g.add_row(st, p[2]).unwrap();
        let e = g.exp(biased);
        let sc = g.scale(e, 0.3);
        let sq = g.square(sc);
        let d = g.sub(sq, ab).unwrap();
        let cat = g.concat_cols(&[d, ab]).unwrap();
        let sl = g.slice_cols(cat, 1, 2).unwrap();
        let rows = g.concat_rows(&[sl, ab]).unwrap();
        let gathered = g.gather_rows(rows, &[0, 5, 2, 2]).unwrap();
        let bv = g.broadcast_rows(p[3], 4).unwrap();
        let root = g.safe_sqrt(bv, 1e-16);
        let xent = g.softmax_xent(gathered, &[1, 0, 1, 1]).unwrap();
        let rs = g.sum(root);
        let tot = g.add(xent, rs).unwrap();
        let extra = g.sum(rows);
        g.add(tot, extra).unwrap()
    });
    let err = max_rel_error(&*build, &[a, b, r, v]);
    assert!(err <= TOL, "max rel error {err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_lstm_like_compositions(seed in 0u64..10_000, rows in 1usize..4, k in 1usize..5, n in 1usize..4) {
        let x = rand_tensor(seed, &[rows, k]);
        let w = rand_tensor(seed + 1, &[k, n]).map(|v| 0.5 * v);
        let bias = rand_tensor(seed + 2, &[n]);
        let logv = rand_tensor(seed + 3, &[k, n]);
        let eps = rand_tensor(seed + 4, &[rows, n]);
        let build: Box<Build> = Box::new(move |g: &mut Graph, p: &[Var]| {
            let mean = g.matmul(p[0], p[1]).unwrap();
            let x2 = g.square(p[0]);
            let s2 = g.exp(p[3]);
            let var = g.matmul(x2, s2).unwrap();
            let std = g.safe_sqrt(var, 1e-16);
            let e = g.constant(eps.clone());
            let noise = g.mul(e, std).unwrap();
            let pre = g.add(mean, noise).unwrap();
            let pre = g.add_row(pre, p[2]).unwrap();
            let h = g.tanh(pre);
            let gate = g.sigmoid(pre);
            let out = g.mul(h, gate).unwrap();
            let sq = g.square(out);
            g.sum(sq)
        });
        let err = max_rel_error(&*build, &[x, w, bias, logv]);
        prop_assert!(err <= TOL, "max rel error {}", err);
    }
}
