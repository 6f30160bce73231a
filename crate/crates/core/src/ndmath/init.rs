use super::{Rng, Tensor};
use crate::error::{Error, Result};

/// Random matrix with orthonormal columns (or rows, whichever is fewer).
///
/// QR of a standard-normal matrix via Householder reflections; each column of
/// Q is multiplied by `sign(R_jj)` so the result is distributed uniformly.
pub fn orthogonal_init(rng: &mut Rng, rows: usize, cols: usize) -> Result<Tensor> {
    if rows == 0 || cols == 0 {
        return Err(Error::Invalid(format!(
            "orthogonal init needs positive dims, got {rows}x{cols}"
        )));
    }
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let a = rng.standard_normal(&[tall, short])?;
    let q = householder_q(a.data(), tall, short);
    let q = Tensor::from_parts(vec![tall, short], q);
    Ok(if rows >= cols { q } else { q.transpose() })
}

/// Thin Q factor (`m×n`, `m >= n`) of `a`, sign-corrected so diag(R) > 0.
fn householder_q(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut r = a.to_vec();
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut signs = vec![1.0; n];

    for j in 0..n {
        let norm = (j..m).map(|i| r[i * n + j].powi(2)).sum::<f64>().sqrt();
        let mut v = vec![0.0; m];
        if norm == 0.0 {
            vs.push(v);
            continue;
        }
        let x0 = r[j * n + j];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        for i in j..m {
            v[i] = r[i * n + j];
        }
        v[j] -= alpha;
        let vnorm2: f64 = v[j..].iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for c in j..n {
                let dot: f64 = (j..m).map(|i| v[i] * r[i * n + c]).sum();
                let s = 2.0 * dot / vnorm2;
                for i in j..m {
                    r[i * n + c] -= s * v[i];
                }
            }
        }
        // R_jj == alpha after the reflection
        signs[j] = if alpha >= 0.0 { 1.0 } else { -1.0 };
        vs.push(v);
    }

    // Q = H_0 H_1 ... H_{n-1} applied to the first n columns of I.
    let mut q = vec![0.0; m * n];
    for j in 0..n {
        q[j * n + j] = 1.0;
    }
    for j in (0..n).rev() {
        let v = &vs[j];
        let vnorm2: f64 = v[j..].iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for c in 0..n {
            let dot: f64 = (j..m).map(|i| v[i] * q[i * n + c]).sum();
            let s = 2.0 * dot / vnorm2;
            for i in j..m {
                q[i * n + c] -= s * v[i];
            }
        }
    }
    for (j, s) in signs.iter().enumerate() {
        // renormalize to clean up rounding; exact ±1 in the 1x1 case
        let norm = (0..m).map(|i| q[i * n + j].powi(2)).sum::<f64>().sqrt();
        for i in 0..m {
            q[i * n + j] *= s / norm;
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gram_cols(q: &Tensor) -> Tensor {
        let (r, c) = (q.rows(), q.cols());
        let mut g = Tensor::zeros(&[c, c]);
        for a in 0..c {
            for b in 0..c {
                let dot: f64 = (0..r).map(|i| q.get(i, a) * q.get(i, b)).sum();
                g.set(a, b, dot);
            }
        }
        g
    }

    #[test]
    fn square_is_orthogonal() {
        let q = orthogonal_init(&mut Rng::new(3), 4, 4).unwrap();
        assert!(gram_cols(&q).max_abs_diff(&Tensor::identity(4)) <= 1e-10);
    }

    #[test]
    fn one_by_one_is_unit() {
        for seed in 0..10 {
            let q = orthogonal_init(&mut Rng::new(seed), 1, 1).unwrap();
            assert_eq!(q.data()[0].abs(), 1.0);
        }
    }

    #[test]
    fn tall_has_orthonormal_columns() {
        let q = orthogonal_init(&mut Rng::new(11), 8, 4).unwrap();
        assert_eq!(q.shape(), &[8, 4]);
        assert!(gram_cols(&q).max_abs_diff(&Tensor::identity(4)) <= 1e-10);
    }

    #[test]
    fn wide_has_orthonormal_rows() {
        let q = orthogonal_init(&mut Rng::new(12), 3, 7).unwrap();
        assert_eq!(q.shape(), &[3, 7]);
        let g = gram_cols(&q.transpose());
        assert!(g.max_abs_diff(&Tensor::identity(3)) <= 1e-10);
    }

    #[test]
    fn large_square_is_orthogonal() {
        let q = orthogonal_init(&mut Rng::new(5), 64, 64).unwrap();
        assert!(gram_cols(&q).max_abs_diff(&Tensor::identity(64)) <= 1e-10);
    }

    #[test]
    fn rejects_zero_dims() {
        assert!(orthogonal_init(&mut Rng::new(0), 0, 3).is_err());
    }
}
