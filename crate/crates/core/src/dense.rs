//! Dense Fock-space operations used by the oracles and the superoperator.
//!
//! Basis convention for `n` fermionic sites: index `b` has bit `s` equal to
//! the occupation of site `s` (0-based), and the basis ket is
//! `(c†_0)^{n_0} (c†_1)^{n_1} ... |0>`, so `c_s` picks up the Jordan-Wigner
//! sign `(-1)^{n_0 + ... + n_{s-1}}`.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;

use crate::{Error, Result};

/// Jordan-Wigner sign of acting at `site` on basis index `b`.
#[inline]
pub(crate) fn jw_sign(b: usize, site: usize) -> f64 {
    let below = b & ((1usize << site) - 1);
    if below.count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Accumulates `w * c†_a c_b |v>` into `out` (sites 0-based, `a != b` or
/// `a == b` both supported).
pub fn accumulate_hop(a: usize, b: usize, w: C64, v: &Array1<C64>, out: &mut Array1<C64>) {
    let dim = v.len();
    let bit_a = 1usize << a;
    let bit_b = 1usize << b;
    if a == b {
        for s in 0..dim {
            if s & bit_a != 0 {
                out[s] += w * v[s];
            }
        }
        return;
    }
    for s in 0..dim {
        if s & bit_b != 0 && s & bit_a == 0 {
            let sign_b = jw_sign(s, b);
            let mid = s & !bit_b;
            let sign_a = jw_sign(mid, a);
            out[mid | bit_a] += w * sign_a * sign_b * v[s];
        }
    }
}

/// Accumulates `w * c†_a c†_b |v>` into `out` (`a != b`; the `b` operator
/// acts first).
pub fn accumulate_pair_create(a: usize, b: usize, w: C64, v: &Array1<C64>, out: &mut Array1<C64>) {
    debug_assert_ne!(a, b);
    let dim = v.len();
    let bit_a = 1usize << a;
    let bit_b = 1usize << b;
    for s in 0..dim {
        if s & (bit_a | bit_b) == 0 {
            let sign_b = jw_sign(s, b);
            let mid = s | bit_b;
            let sign_a = jw_sign(mid, a);
            out[mid | bit_a] += w * sign_a * sign_b * v[s];
        }
    }
}

/// Accumulates `w * c_outer c_inner |v>` into `out` (`outer != inner`; the
/// `inner` operator acts first).
pub fn accumulate_pair_annihilate(
    outer: usize,
    inner: usize,
    w: C64,
    v: &Array1<C64>,
    out: &mut Array1<C64>,
) {
    debug_assert_ne!(outer, inner);
    let dim = v.len();
    let bit_o = 1usize << outer;
    let bit_i = 1usize << inner;
    for s in 0..dim {
        if s & (bit_o | bit_i) == bit_o | bit_i {
            let sign_i = jw_sign(s, inner);
            let mid = s & !bit_i;
            let sign_o = jw_sign(mid, outer);
            out[mid & !bit_o] += w * sign_o * sign_i * v[s];
        }
    }
}

/// Action of the Majorana operator at slot `k` on the basis ket `idx`:
/// returns `(new index, phase)`.
pub fn majorana_on_basis(k: usize, idx: usize) -> (usize, C64) {
    let site = k / 2;
    let bit = 1usize << site;
    let sign = jw_sign(idx, site);
    if k % 2 == 0 {
        (idx ^ bit, C64::new(sign, 0.0))
    } else {
        // -i (c - c†): phase -i on an occupied site, +i on an empty one.
        let phase = if idx & bit != 0 {
            C64::new(0.0, -sign)
        } else {
            C64::new(0.0, sign)
        };
        (idx ^ bit, phase)
    }
}

/// Applies the Majorana operator with 0-based slot `k` over `n_sites` modes:
/// slot `2m` is `c_m + c†_m` and slot `2m+1` is `-i (c_m - c†_m)`.
pub fn apply_majorana(k: usize, n_sites: usize, v: &Array1<C64>) -> Array1<C64> {
    debug_assert!(k < 2 * n_sites);
    let site = k / 2;
    let bit = 1usize << site;
    let mut out = Array1::zeros(v.len());
    if k % 2 == 0 {
        for s in 0..v.len() {
            out[s ^ bit] += jw_sign(s, site) * v[s];
        }
    } else {
        for s in 0..v.len() {
            let phase = if s & bit != 0 {
                C64::new(0.0, -1.0)
            } else {
                C64::new(0.0, 1.0)
            };
            out[s ^ bit] += phase * jw_sign(s, site) * v[s];
        }
    }
    out
}

/// Dense matrix of a number-conserving quadratic form `Σ q[j][k] c†_j c_k`
/// over `n_sites` modes.
pub fn quadratic_operator(q: &Array2<f64>, n_sites: usize) -> Array2<f64> {
    let dim = 1usize << n_sites;
    let mut m = Array2::zeros((dim, dim));
    for s in 0..dim {
        for k in 0..n_sites {
            if s & (1 << k) == 0 {
                continue;
            }
            let sign_k = jw_sign(s, k);
            let mid = s & !(1 << k);
            for j in 0..n_sites {
                if mid & (1 << j) != 0 {
                    continue;
                }
                let w = q[[j, k]];
                if w == 0.0 {
                    continue;
                }
                m[[mid | (1 << j), s]] += w * sign_k * jw_sign(mid, j);
            }
        }
    }
    m
}

/// Matrix exponential of a real symmetric matrix via eigendecomposition.
pub fn expm_symmetric(m: &Array2<f64>) -> Result<Array2<f64>> {
    let (vals, vecs) = m.eigh(UPLO::Lower)?;
    let mut scaled = vecs.clone();
    for (mut col, &lambda) in scaled.columns_mut().into_iter().zip(vals.iter()) {
        let e = lambda.exp();
        col.mapv_inplace(|v| v * e);
    }
    Ok(scaled.dot(&vecs.t()))
}

/// Signed-permutation form of an ordered Majorana string: `op |b> =
/// sign[b] |perm[b]>`.
struct SignedPermutation {
    perm: Vec<usize>,
    sign: Vec<f64>,
}

impl SignedPermutation {
    fn identity(dim: usize) -> Self {
        Self {
            perm: (0..dim).collect(),
            sign: vec![1.0; dim],
        }
    }

    /// Left-multiplies by the real string factor at slot `k` (0-based):
    /// `c_m + c†_m` for `k = 2m`, `c_m - c†_m` for `k = 2m+1`.
    fn left_multiply_factor(&mut self, k: usize) {
        let site = k / 2;
        let bit = 1usize << site;
        for b in 0..self.perm.len() {
            let cur = self.perm[b];
            let mut s = jw_sign(cur, site);
            if k % 2 == 1 && cur & bit == 0 {
                s = -s;
            }
            self.perm[b] = cur ^ bit;
            self.sign[b] *= s;
        }
    }
}

/// Expands a first-space operator over the ordered Majorana string basis.
///
/// Entry `t` of the result (bits of `t` = string occupations over the `2N`
/// slots) is `2^{-N} tr(s†_t rho)`, the coefficient of the corresponding
/// second-space Fock ket. For real `rho` the coefficients are real.
pub fn string_coefficients(rho: &Array2<f64>, n_sites: usize) -> Result<Array1<f64>> {
    let dim = 1usize << n_sites;
    if rho.nrows() != dim || rho.ncols() != dim {
        return Err(Error::DimensionMismatch {
            context: "string expansion",
            expected: dim,
            got: rho.nrows(),
        });
    }
    let n_strings = 1usize << (2 * n_sites);
    let scale = 1.0 / dim as f64;
    let mut coeffs = Array1::zeros(n_strings);
    for t in 0..n_strings {
        let mut op = SignedPermutation::identity(dim);
        // Rightmost factor acts first: compose in descending slot order.
        for k in (0..2 * n_sites).rev() {
            if t & (1 << k) != 0 {
                op.left_multiply_factor(k);
            }
        }
        let mut tr = 0.0;
        for a in 0..dim {
            tr += op.sign[a] * rho[[op.perm[a], a]];
        }
        coeffs[t] = scale * tr;
    }
    Ok(coeffs)
}
