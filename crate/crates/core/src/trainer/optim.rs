use crate::error::{Error, Result};
use crate::ndmath::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moments for each parameter, plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            v: m.clone(),
            m,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. `None` gradients leave their parameter and
/// moments untouched. Any non-finite gradient aborts the whole step.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[Option<Tensor>], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if let Some(g) = g {
            if g.shape() != p.shape() || state.m[i].shape() != p.shape() {
                return Err(Error::Shape(format!("adam: gradient {i} is {:?} for {:?}", g.shape(), p.shape())));
            }
            if let Some(j) = g.first_non_finite() {
                return Err(Error::Divergence(format!("non-finite gradient in parameter {i} entry {j}")));
            }
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let Some(g) = g else { continue };
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
            *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
            *w -= lr * (*mi / c1) / ((*vi / c2).sqrt() + EPSILON);
        }
    }
    Ok(())
}

/// Global-norm clipping: if the joint L2 norm exceeds `threshold`, scale every
/// gradient by `threshold / norm`. Returns the norm before clipping.
pub fn clip_gradients(grads: &mut [Option<Tensor>], threshold: f64) -> Result<f64> {
    if !(threshold > 0.0) {
        return Err(Error::Invalid(format!("clip threshold must be positive, got {threshold}")));
    }
    let norm = grads.iter().flatten().map(Tensor::sq_norm).sum::<f64>().sqrt();
    if norm > threshold {
        let s = threshold / norm;
        for g in grads.iter_mut().flatten() {
            for x in g.data_mut() {
                *x *= s;
            }
        }
    }
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Tensor::scalar(0.0);
        let mut st = AdamState::new([&p]);
        adam_step(&mut [&mut p], &[Some(Tensor::scalar(2.0))], &mut st, 0.001).unwrap();
        // m̂ = 2, v̂ = 4, update = -lr * 2 / (2 + 1e-8)
        let want = -0.001 * 2.0 / (2.0 + 1e-8);
        assert!((p.data()[0] - want).abs() < 1e-15);
        assert_eq!(st.step(), 1);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = Tensor::vector(vec![0.3, -1.0]).unwrap();
        let before = p.clone();
        let mut st = AdamState::new([&p]);
        adam_step(&mut [&mut p], &[Some(Tensor::zeros(&[2]))], &mut st, 0.01).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn nan_aborts_without_changes() {
        let mut a = Tensor::scalar(1.0);
        let mut b = Tensor::scalar(2.0);
        let mut st = AdamState::new([&a, &b]);
        let grads = [Some(Tensor::scalar(1.0)), Some(Tensor::scalar(f64::NAN))];
        let e = adam_step(&mut [&mut a, &mut b], &grads, &mut st, 0.1).unwrap_err();
        assert!(matches!(e, Error::Divergence(_)));
        assert_eq!((a.data()[0], b.data()[0], st.step()), (1.0, 2.0, 0));
    }

    #[test]
    fn clipping() {
        let mut g = vec![Some(Tensor::vector(vec![3.0, 4.0]).unwrap())];
        let n = clip_gradients(&mut g, 1.0).unwrap();
        assert_eq!(n, 5.0);
        let d = g[0].as_ref().unwrap().data();
        assert!((d[0] - 0.6).abs() < 1e-15 && (d[1] - 0.8).abs() < 1e-15);
        let mut small = vec![Some(Tensor::vector(vec![0.1, 0.2]).unwrap()), None];
        let before = small.clone();
        clip_gradients(&mut small, 1.0).unwrap();
        assert_eq!(small, before);
        assert!(clip_gradients(&mut small, 0.0).is_err());
    }
}
