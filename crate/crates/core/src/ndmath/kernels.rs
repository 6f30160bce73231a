//! Dense matrix kernels over row-major slices.
//!
//! Loop orders are fixed, so results are bit-reproducible for a given input on
//! a given machine. Both operands are packed into zero-padded panels feeding a
//! 6×8 register tile. On x86-64 with AVX2+FMA the tile uses fused
//! multiply-add, selected at runtime; the portable path computes the same
//! sums without it.

use std::sync::OnceLock;

const MR: usize = 6;
const NR: usize = 8;

/// `a[m×k]` packed into zero-padded `MR`-row panels, `k`-major inside a panel.
fn pack_a(a: &[f64], m: usize, k: usize) -> Vec<f64> {
    let panels = m.div_ceil(MR);
    let mut out = vec![0.0; panels * MR * k];
    for p in 0..panels {
        let dst = &mut out[p * MR * k..(p + 1) * MR * k];
        for r in 0..MR.min(m - p * MR) {
            let row = &a[(p * MR + r) * k..(p * MR + r + 1) * k];
            for (kk, &v) in row.iter().enumerate() {
                dst[kk * MR + r] = v;
            }
        }
    }
    out
}

/// Columns `j..j+NR` of `b[k×n]`, zero-padded past `n`.
fn pack_b(b: &[f64], k: usize, n: usize, j: usize, panel: &mut [f64]) {
    let w = NR.min(n - j);
    for kk in 0..k {
        let dst = &mut panel[kk * NR..(kk + 1) * NR];
        dst[..w].copy_from_slice(&b[kk * n + j..kk * n + j + w]);
        dst[w..].fill(0.0);
    }
}

type Tile = [[f64; NR]; MR];

/// One `MR×NR` tile: `Σ_kk ap[kk, :] ⊗ panel[kk, :]`.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn tile_avx2(ap: &[f64], panel: &[f64], k: usize) -> Tile {
    use std::arch::x86_64::*;
    assert!(ap.len() >= k * MR && panel.len() >= k * NR);
    let mut acc = [[_mm256_setzero_pd(); 2]; MR];
    let (a, b) = (ap.as_ptr(), panel.as_ptr());
    for kk in 0..k {
        // SAFETY: kk < k and the asserts above bound every offset.
        let b0 = _mm256_loadu_pd(b.add(kk * NR));
        let b1 = _mm256_loadu_pd(b.add(kk * NR + 4));
        for (r, row) in acc.iter_mut().enumerate() {
            let av = _mm256_broadcast_sd(&*a.add(kk * MR + r));
            row[0] = _mm256_fmadd_pd(av, b0, row[0]);
            row[1] = _mm256_fmadd_pd(av, b1, row[1]);
        }
    }
    let mut out = [[0.0; NR]; MR];
    for (o, row) in out.iter_mut().zip(&acc) {
        _mm256_storeu_pd(o.as_mut_ptr(), row[0]);
        _mm256_storeu_pd(o.as_mut_ptr().add(4), row[1]);
    }
    out
}

fn tile_portable(ap: &[f64], panel: &[f64], k: usize) -> Tile {
    let mut acc = [[0.0; NR]; MR];
    for kk in 0..k {
        let bb = &panel[kk * NR..(kk + 1) * NR];
        for (r, row) in acc.iter_mut().enumerate() {
            let av = ap[kk * MR + r];
            for (x, &bv) in row.iter_mut().zip(bb) {
                *x += av * bv;
            }
        }
    }
    acc
}

fn packed_gemm(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize, fast: bool) {
    let apack = pack_a(a, m, k);
    let mut panel = vec![0.0f64; k * NR];
    for j in (0..n).step_by(NR) {
        pack_b(b, k, n, j, &mut panel);
        let w = NR.min(n - j);
        for (p, ap) in apack.chunks_exact(MR * k).enumerate() {
            let acc = if fast {
                #[cfg(target_arch = "x86_64")]
                // SAFETY: `fast` is only set after detecting avx2 and fma.
                unsafe {
                    tile_avx2(ap, &panel, k)
                }
                #[cfg(not(target_arch = "x86_64"))]
                unreachable!()
            } else {
                tile_portable(ap, &panel, k)
            };
            for (r, row) in acc.iter().enumerate().take(MR.min(m - p * MR)) {
                let base = (p * MR + r) * n + j;
                for (o, v) in out[base..base + w].iter_mut().zip(row) {
                    *o += v;
                }
            }
        }
    }
}

fn use_avx2() -> bool {
    static DETECTED: OnceLock<bool> = OnceLock::new();
    *DETECTED.get_or_init(|| {
        #[cfg(target_arch = "x86_64")]
        {
            std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma")
        }
        #[cfg(not(target_arch = "x86_64"))]
        {
            false
        }
    })
}

/// `out[m×n] += a[m×k] · b[k×n]`
pub fn gemm_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(out.len(), m * n);
    if k == 0 || m == 0 || n == 0 {
        return;
    }
    packed_gemm(a, b, out, m, k, n, use_avx2());
}

/// `out[k×n] += aᵀ · g` for `a[m×k]`, `g[m×n]`.
pub fn gemm_tn_acc(a: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    assert_eq!(a.len(), m * k);
    let at = transpose(a, m, k);
    gemm_acc(&at, g, out, k, m, n);
}

/// `out[m×k] += g · bᵀ` for `g[m×n]`, `b[k×n]`.
pub fn gemm_nt_acc(g: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    assert_eq!(b.len(), k * n);
    let bt = transpose(b, k, n);
    gemm_acc(g, &bt, out, m, n, k);
}

pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    const B: usize = 32;
    for i0 in (0..rows).step_by(B) {
        for j0 in (0..cols).step_by(B) {
            for i in i0..(i0 + B).min(rows) {
                for j in j0..(j0 + B).min(cols) {
                    out[j * rows + i] = a[i * cols + j];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for kk in 0..k {
                    out[i * n + j] += a[i * k + kk] * b[kk * n + j];
                }
            }
        }
        out
    }

    fn seq(len: usize, scale: f64) -> Vec<f64> {
        (0..len).map(|i| ((i * 37 % 11) as f64 - 5.0) * scale).collect()
    }

    #[test]
    fn tiles_and_edges_agree_with_naive() {
        for &(m, k, n) in &[(7, 5, 9), (8, 3, 8), (17, 9, 25), (1, 1, 1), (16, 4, 3), (6, 0, 8), (13, 1, 17)] {
            let a = seq(m * k, 0.3);
            let b = seq(k * n, 0.7);
            let mut c = vec![0.0; m * n];
            gemm_acc(&a, &b, &mut c, m, k, n);
            let want = naive(&a, &b, m, k, n);
            for (x, y) in c.iter().zip(&want) {
                assert!((x - y).abs() < 1e-12, "{m}x{k}x{n}");
            }
            let mut p = vec![0.0; m * n];
            if m * k * n > 0 {
                packed_gemm(&a, &b, &mut p, m, k, n, false);
            }
            for (x, y) in p.iter().zip(&want) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transposed_variants_agree_with_naive() {
        let (m, k, n) = (7, 5, 9);
        let a = seq(m * k, 0.3);
        let b = seq(k * n, 0.7);
        let c = naive(&a, &b, m, k, n);

        let at = transpose(&a, m, k);
        let mut tn = vec![0.0; k * n];
        gemm_tn_acc(&a, &c, &mut tn, m, k, n);
        let want = naive(&at, &c, k, m, n);
        for (x, y) in tn.iter().zip(&want) {
            assert!((x - y).abs() < 1e-9);
        }

        let bt = transpose(&b, k, n);
        let mut nt = vec![0.0; m * k];
        gemm_nt_acc(&c, &b, &mut nt, m, k, n);
        let want = naive(&c, &bt, m, n, k);
        for (x, y) in nt.iter().zip(&want) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
