//! Real canonical factorization of antisymmetric matrices and Givens-rotation
//! folding.
//!
//! An antisymmetric real matrix factors as `A = U Λ Uᵀ` with `U` orthonormal
//! and `Λ` block-diagonal in `2x2` blocks `[[0, α], [-α, 0]]`. The orthonormal
//! factor can then be folded to the identity by a schedule of plane rotations
//! acting on adjacent rows; replaying the schedule in reverse maps local
//! operations on the folded frame back to the original one.

use ndarray::{s, Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;

use crate::{Error, Result};

/// `A = U Λ(α) Uᵀ` with `U` real orthonormal and pair amplitudes `α`.
#[derive(Debug, Clone)]
pub struct CanonicalFactorization {
    /// Orthonormal `2N x 2N` factor; columns `(2l, 2l+1)` span pair plane `l`.
    pub u: Array2<f64>,
    /// Pair amplitudes, `|α|` descending as produced by [`youla_factorize`].
    pub alpha: Vec<f64>,
}

impl CanonicalFactorization {
    /// Block-diagonal `Λ(α)`.
    pub fn lambda_matrix(&self) -> Array2<f64> {
        let dim = 2 * self.alpha.len();
        let mut l = Array2::zeros((dim, dim));
        for (i, &a) in self.alpha.iter().enumerate() {
            l[[2 * i, 2 * i + 1]] = a;
            l[[2 * i + 1, 2 * i]] = -a;
        }
        l
    }

    /// `U Λ Uᵀ`.
    pub fn reconstruct(&self) -> Array2<f64> {
        self.u.dot(&self.lambda_matrix()).dot(&self.u.t())
    }

    /// Swaps the two columns of pair `l` and negates `α_l`; this leaves the
    /// reconstructed matrix unchanged and flips `det U`.
    pub fn flip_pair(&mut self, l: usize) {
        let dim = self.u.nrows();
        for r in 0..dim {
            self.u.swap([r, 2 * l], [r, 2 * l + 1]);
        }
        self.alpha[l] = -self.alpha[l];
    }
}

fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn orthonormality_deviation(u: &Array2<f64>) -> f64 {
    let g = u.t().dot(u);
    let mut dev: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let expect = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((g[[i, j]] - expect).abs());
        }
    }
    dev
}

/// Factorizes a real antisymmetric matrix as `U Λ Uᵀ`.
///
/// Pairs are built from the eigenvectors of the Hermitian matrix `iA`; within
/// the zero eigenspace real vectors are paired by Gram-Schmidt in index order.
/// Pair planes are gauge-fixed deterministically (pivot entry of the first
/// column positive, its second-column partner zero, secondary pivot of the
/// second column positive), so `A = [[0, a], [-a, 0]]` maps to `U = 1`,
/// `α = (a)` for either sign of `a`.
pub fn youla_factorize(a: &Array2<f64>) -> Result<CanonicalFactorization> {
    let dim = a.nrows();
    if a.ncols() != dim {
        return Err(Error::DimensionMismatch {
            context: "antisymmetric factorization",
            expected: dim,
            got: a.ncols(),
        });
    }
    if dim % 2 != 0 || dim == 0 {
        return Err(Error::OddDimension { dim });
    }
    let scale = frobenius(a).max(f64::MIN_POSITIVE);
    let sym_dev = frobenius(&(a + &a.t().to_owned()));
    if sym_dev > 1e-12 * scale {
        return Err(Error::NotAntisymmetric {
            dev: sym_dev / scale,
        });
    }

    // Hermitian eigenproblem for iA; eigenvalues come in ± pairs. The LAPACK
    // wrapper may hand back eigenvectors of the transpose depending on
    // layout, so each column is re-paired through its Rayleigh quotient and
    // conjugated when that is what makes it an eigenvector.
    let m = a.mapv(|v| C64::new(0.0, v));
    let (_, vecs_raw) = m.eigh(UPLO::Lower)?;
    let residual = |mv: &Array1<C64>, lam: f64, v: &Array1<C64>| -> f64 {
        mv.iter()
            .zip(v.iter())
            .map(|(x, y)| (x - lam * y).norm_sqr())
            .sum::<f64>()
            .sqrt()
    };
    let mut cols: Vec<(f64, Array1<C64>)> = Vec::with_capacity(dim);
    for c in 0..dim {
        let mut v = vecs_raw.column(c).to_owned();
        let mut mv = m.dot(&v);
        let mut lam: f64 = v
            .iter()
            .zip(mv.iter())
            .map(|(x, y)| (x.conj() * y).re)
            .sum();
        if residual(&mv, lam, &v) > 1e-8 * scale {
            v.mapv_inplace(|z| z.conj());
            mv = m.dot(&v);
            lam = v
                .iter()
                .zip(mv.iter())
                .map(|(x, y)| (x.conj() * y).re)
                .sum();
            let res = residual(&mv, lam, &v);
            if res > 1e-8 * scale {
                return Err(Error::Integrity {
                    context: "eigenpairs of the antisymmetric factorization",
                    dev: res / scale,
                });
            }
        }
        cols.push((lam, v));
    }
    cols.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let zero_tol = 1e-12 * cols.iter().fold(0.0f64, |acc, c| acc.max(c.0.abs())).max(1.0);

    // Positive eigenvalues, descending.
    let mut pairs: Vec<(f64, Array1<f64>, Array1<f64>)> = Vec::new();
    for idx in (0..dim).rev() {
        let lambda = cols[idx].0;
        if lambda <= zero_tol {
            break;
        }
        let mut v = cols[idx].1.clone();
        // Deterministic phase: largest-magnitude entry real positive (first
        // maximum on ties).
        let mut pivot = 0;
        for (i, z) in v.iter().enumerate() {
            if z.norm() > v[pivot].norm() {
                pivot = i;
            }
        }
        let phase = v[pivot] / v[pivot].norm();
        v.mapv_inplace(|z| z / phase);
        let re = v.mapv(|z| z.re * std::f64::consts::SQRT_2);
        let im = v.mapv(|z| z.im * std::f64::consts::SQRT_2);
        // With v = (x + i y)/√2: A x = λ y and A y = -λ x, so the column
        // pair (y, x) carries the block [[0, λ], [-λ, 0]].
        pairs.push((lambda, im, re));
    }

    // Real orthonormal basis of the kernel by Gram-Schmidt in index order.
    let n_zero = dim - 2 * pairs.len();
    if n_zero > 0 {
        let mut basis: Vec<Array1<f64>> = Vec::with_capacity(n_zero);
        let mut candidates: Vec<Array1<f64>> = Vec::new();
        for (lam, v) in &cols {
            if lam.abs() <= zero_tol {
                candidates.push(v.mapv(|z| z.re));
                candidates.push(v.mapv(|z| z.im));
            }
        }
        for mut cand in candidates {
            if basis.len() == n_zero {
                break;
            }
            for b in &basis {
                let proj = cand.dot(b);
                cand.scaled_add(-proj, b);
            }
            let norm = cand.dot(&cand).sqrt();
            if norm > 1e-8 {
                cand.mapv_inplace(|v| v / norm);
                basis.push(cand);
            }
        }
        if basis.len() != n_zero {
            return Err(Error::Integrity {
                context: "kernel basis of antisymmetric factorization",
                dev: (n_zero - basis.len()) as f64,
            });
        }
        for chunk in basis.chunks(2) {
            pairs.push((0.0, chunk[0].clone(), chunk[1].clone()));
        }
    }

    // Assemble U and gauge-fix each pair plane.
    let mut u = Array2::zeros((dim, dim));
    let mut alpha = Vec::with_capacity(dim / 2);
    for (l, (lambda, c1, c2)) in pairs.into_iter().enumerate() {
        let mut u1 = c1;
        let mut u2 = c2;
        let mut pivot = 0;
        for r in 0..dim {
            if u1[r] * u1[r] + u2[r] * u2[r] > u1[pivot] * u1[pivot] + u2[pivot] * u2[pivot] {
                pivot = r;
            }
        }
        let phi = u2[pivot].atan2(u1[pivot]);
        let (sin, cos) = phi.sin_cos();
        for r in 0..dim {
            let x = u1[r];
            let y = u2[r];
            u1[r] = cos * x + sin * y;
            u2[r] = cos * y - sin * x;
        }
        let mut amp = lambda;
        let mut p2 = 0;
        for r in 0..dim {
            if u2[r].abs() > u2[p2].abs() {
                p2 = r;
            }
        }
        if u2[p2] < 0.0 {
            u2.mapv_inplace(|v| -v);
            amp = -amp;
        }
        u.slice_mut(s![.., 2 * l]).assign(&u1);
        u.slice_mut(s![.., 2 * l + 1]).assign(&u2);
        alpha.push(amp);
    }

    let fact = CanonicalFactorization { u, alpha };
    let orth_dev = orthonormality_deviation(&fact.u);
    if orth_dev > 1e-10 {
        return Err(Error::Integrity {
            context: "orthonormality of the canonical factor",
            dev: orth_dev,
        });
    }
    let rec_dev = frobenius(&(&fact.reconstruct() - a));
    if rec_dev > 1e-10 * scale.max(1.0) {
        return Err(Error::Integrity {
            context: "reconstruction of the antisymmetric matrix",
            dev: rec_dev / scale.max(1.0),
        });
    }
    Ok(fact)
}

/// One plane rotation: rows `(plane, plane+1)` of the acted matrix mix with
/// angle `angle`; `col` records which entry the fold targeted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GivensRotation {
    pub plane: usize,
    pub col: usize,
    pub angle: f64,
}

/// Ordered rotation schedule produced by [`fold_to_identity`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GivensSchedule {
    pub rotations: Vec<GivensRotation>,
}

impl GivensSchedule {
    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }
}

/// Replay direction for a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

fn rotate_rows(m: &mut Array2<f64>, plane: usize, angle: f64) {
    let (sin, cos) = angle.sin_cos();
    for c in 0..m.ncols() {
        let x = m[[plane, c]];
        let y = m[[plane + 1, c]];
        m[[plane, c]] = cos * x + sin * y;
        m[[plane + 1, c]] = cos * y - sin * x;
    }
}

/// Folds an orthonormal matrix to the identity column by column.
///
/// Sweeps columns left to right and, inside each column, rows bottom-up,
/// zeroing `U[j][k]` with the rotation `tan θ = U[j][k]/U[j-1][k]` (angles
/// from `atan2`). Exact no-ops are skipped. Proper rotations cannot reach
/// matrices of determinant `-1`; those are rejected.
pub fn fold_to_identity(u: &Array2<f64>) -> Result<GivensSchedule> {
    let dim = u.nrows();
    if u.ncols() != dim {
        return Err(Error::DimensionMismatch {
            context: "fold of orthonormal matrix",
            expected: dim,
            got: u.ncols(),
        });
    }
    let orth = orthonormality_deviation(u);
    if orth > 1e-10 {
        return Err(Error::NotOrthonormal { dev: orth });
    }
    let mut m = u.to_owned();
    let mut rotations = Vec::new();
    for col in 0..dim.saturating_sub(1) {
        for row in (col + 1..dim).rev() {
            let angle = m[[row, col]].atan2(m[[row - 1, col]]);
            // Rotations this small move entries at the 1e-14 scale; dropping
            // them keeps numerically-identity inputs at an empty schedule
            // while the final identity check still guards the result.
            if angle.abs() <= 1e-14 {
                continue;
            }
            rotate_rows(&mut m, row - 1, angle);
            rotations.push(GivensRotation {
                plane: row - 1,
                col,
                angle,
            });
        }
    }
    if m[[dim - 1, dim - 1]] < 0.0 {
        return Err(Error::DetMinusOne);
    }
    let mut dev: f64 = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            let expect = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((m[[i, j]] - expect).abs());
        }
    }
    if dev > 1e-10 {
        return Err(Error::Integrity {
            context: "fold to identity",
            dev,
        });
    }
    Ok(GivensSchedule { rotations })
}

/// Applies a schedule to a matrix: `Forward` replays the fold rotations in
/// order, `Inverse` the transposed rotations in reverse order, so the two
/// compose to the identity.
pub fn apply_givens(
    m: &Array2<f64>,
    schedule: &GivensSchedule,
    direction: Direction,
) -> Result<Array2<f64>> {
    let rows = m.nrows();
    for r in &schedule.rotations {
        if r.plane + 1 >= rows {
            return Err(Error::PlaneOutOfRange {
                plane: r.plane,
                dim: rows,
            });
        }
    }
    let mut out = m.to_owned();
    match direction {
        Direction::Forward => {
            for r in &schedule.rotations {
                rotate_rows(&mut out, r.plane, r.angle);
            }
        }
        Direction::Inverse => {
            for r in schedule.rotations.iter().rev() {
                rotate_rows(&mut out, r.plane, -r.angle);
            }
        }
    }
    Ok(out)
}
