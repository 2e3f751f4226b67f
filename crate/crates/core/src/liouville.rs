//! Second-space Liouvillian of quadratic Hamiltonians with linear baths.
//!
//! In the second space the Lindblad generator is a quadratic form in the
//! doubled fermionic algebra. Two equivalent assemblies are kept:
//!
//! * the mode form
//!   `i Σ h_{jk} (c̃†_{2k} c̃_{2j-1} + c̃†_{2j-1} c̃_{2k}) + 2 Σ_n (bath
//!   bilinears)`, expanded into normal-ordered hopping `c̃† c̃` and pair
//!   `c̃† c̃†` monomials ([`build_superoperator`]); and
//! * the Majorana structure matrix `Σ 𝓛_{jk} γ̃_j γ̃_k`
//!   ([`build_structure_matrix`]), whose antisymmetric part plus scalar
//!   rebuilds the same operator.
//!
//! Stationary states live in the kernel of the superoperator. The kernel is
//! extracted densely by SVD at small sizes and by blocked power iteration on
//! the matrix-free normal operator at larger ones. A product-form builder
//! climbs from the fully-occupied eigenstate with normal-mode ladder
//! operators of the structure matrix and falls back to the kernel solver
//! when the mode selection degenerates.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, SVD};
use num_complex::Complex64 as C64;

use crate::dense::{
    accumulate_hop, accumulate_pair_annihilate, accumulate_pair_create, majorana_on_basis,
};
use crate::model::{BathSet, CoefficientMatrix};
use crate::mps::{CanonicalMps, MpsOptions};
use crate::{Error, Result};

/// One normal-ordered quadratic monomial acting on the second space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadTerm {
    /// `w c̃†_a c̃_b`
    Hop { a: usize, b: usize, w: C64 },
    /// `w c̃†_a c̃†_b` with `a < b`
    PairCreate { a: usize, b: usize, w: C64 },
}

/// Matrix-free second-space Liouvillian over `2N` fermionic sites
/// (dimension `4^N`), split into Hamiltonian and bath monomials.
#[derive(Debug, Clone)]
pub struct SuperOperator {
    n_modes: usize,
    ham: Vec<QuadTerm>,
    bath: Vec<QuadTerm>,
}

fn collect_terms(hops: BTreeMap<(usize, usize), C64>, pairs: BTreeMap<(usize, usize), C64>) -> Vec<QuadTerm> {
    let mut out = Vec::new();
    for ((a, b), w) in hops {
        if w != C64::new(0.0, 0.0) {
            out.push(QuadTerm::Hop { a, b, w });
        }
    }
    for ((a, b), w) in pairs {
        if w != C64::new(0.0, 0.0) {
            out.push(QuadTerm::PairCreate { a, b, w });
        }
    }
    out
}

/// Assembles the mode-form Liouvillian from the Hamiltonian coefficients and
/// the bath family. Guarded to `N ≤ 12`.
pub fn build_superoperator(h: &CoefficientMatrix, baths: &BathSet) -> Result<SuperOperator> {
    let n = h.n_sites();
    if baths.n_sites() != n {
        return Err(Error::DimensionMismatch {
            context: "superoperator assembly",
            expected: n,
            got: baths.n_sites(),
        });
    }
    if n > 12 {
        return Err(Error::ResourceGuard {
            context: "superoperator assembly",
            n,
            max: 12,
        });
    }
    let mut ham_hops: BTreeMap<(usize, usize), C64> = BTreeMap::new();
    for j in 0..n {
        for k in 0..n {
            let w = C64::new(0.0, h.matrix()[[j, k]]);
            if w != C64::new(0.0, 0.0) {
                // i h_jk (c̃†_{2k} c̃_{2j-1} + c̃†_{2j-1} c̃_{2k}), with the
                // 1-based slots 2j-1, 2k mapping to 0-based 2j, 2k+1.
                *ham_hops.entry((2 * k + 1, 2 * j)).or_default() += w;
                *ham_hops.entry((2 * j, 2 * k + 1)).or_default() += w;
            }
        }
    }

    // Bath part: 2 Σ_n Σ_jk [F1(j) F2(k) + F3(j) F4(k)] with every factor a
    // short list of (coefficient, dagger?, mode) monomials.
    let mut bath_hops: BTreeMap<(usize, usize), C64> = BTreeMap::new();
    let mut bath_pairs: BTreeMap<(usize, usize), C64> = BTreeMap::new();
    let b = baths.rows();
    for row in 0..baths.n_baths() {
        for j in 0..n {
            let bo = b[[row, 2 * j]];
            let be = b[[row, 2 * j + 1]];
            let f1 = [(-bo, 2 * j), (be, 2 * j + 1)];
            let f3 = [(bo, 2 * j), (be, 2 * j + 1)];
            for k in 0..n {
                let co = b[[row, 2 * k]];
                let ce = b[[row, 2 * k + 1]];
                // (coefficient, dagger?, mode)
                let f2 = [
                    (co, false, 2 * k),
                    (co, true, 2 * k),
                    (-ce, false, 2 * k + 1),
                    (ce, true, 2 * k + 1),
                ];
                let f4 = [
                    (-co, false, 2 * k),
                    (co, true, 2 * k),
                    (-ce, false, 2 * k + 1),
                    (-ce, true, 2 * k + 1),
                ];
                for (left, right) in [(&f1, &f2), (&f3, &f4)] {
                    for &(w1, a) in left.iter() {
                        if w1 == 0.0 {
                            continue;
                        }
                        for &(w2, dagger, m) in right.iter() {
                            let w = C64::new(2.0 * w1 * w2, 0.0);
                            if w == C64::new(0.0, 0.0) {
                                continue;
                            }
                            if !dagger {
                                *bath_hops.entry((a, m)).or_default() += w;
                            } else if a != m {
                                if a < m {
                                    *bath_pairs.entry((a, m)).or_default() += w;
                                } else {
                                    *bath_pairs.entry((m, a)).or_default() -= w;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(SuperOperator {
        n_modes: 2 * n,
        ham: collect_terms(ham_hops, BTreeMap::new()),
        bath: collect_terms(bath_hops, bath_pairs),
    })
}

fn apply_terms(terms: &[QuadTerm], v: &Array1<C64>, out: &mut Array1<C64>) {
    for t in terms {
        match *t {
            QuadTerm::Hop { a, b, w } => accumulate_hop(a, b, w, v, out),
            QuadTerm::PairCreate { a, b, w } => accumulate_pair_create(a, b, w, v, out),
        }
    }
}

fn apply_terms_adjoint(terms: &[QuadTerm], v: &Array1<C64>, out: &mut Array1<C64>) {
    for t in terms {
        match *t {
            QuadTerm::Hop { a, b, w } => accumulate_hop(b, a, w.conj(), v, out),
            // (c̃†_a c̃†_b)† = c̃_b c̃_a
            QuadTerm::PairCreate { a, b, w } => {
                accumulate_pair_annihilate(b, a, w.conj(), v, out)
            }
        }
    }
}

impl SuperOperator {
    /// Number of second-space fermionic sites (`2N`).
    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Fock-space dimension `4^N`.
    pub fn dim(&self) -> usize {
        1usize << self.n_modes
    }

    /// Number of stored monomials.
    pub fn nnz_terms(&self) -> usize {
        self.ham.len() + self.bath.len()
    }

    pub fn matvec(&self, v: &Array1<C64>) -> Array1<C64> {
        let mut out = Array1::zeros(v.len());
        apply_terms(&self.ham, v, &mut out);
        apply_terms(&self.bath, v, &mut out);
        out
    }

    pub fn matvec_ham(&self, v: &Array1<C64>) -> Array1<C64> {
        let mut out = Array1::zeros(v.len());
        apply_terms(&self.ham, v, &mut out);
        out
    }

    pub fn matvec_bath(&self, v: &Array1<C64>) -> Array1<C64> {
        let mut out = Array1::zeros(v.len());
        apply_terms(&self.bath, v, &mut out);
        out
    }

    pub fn matvec_adjoint(&self, v: &Array1<C64>) -> Array1<C64> {
        let mut out = Array1::zeros(v.len());
        apply_terms_adjoint(&self.ham, v, &mut out);
        apply_terms_adjoint(&self.bath, v, &mut out);
        out
    }

    /// Hamiltonian and bath monomials (for term-wise application to states).
    pub fn ham_terms(&self) -> &[QuadTerm] {
        &self.ham
    }

    pub fn bath_terms(&self) -> &[QuadTerm] {
        &self.bath
    }

    /// Deterministic power-iteration estimate of the spectral norm.
    pub fn op_norm_estimate(&self) -> f64 {
        let dim = self.dim();
        let mut v: Array1<C64> = Array1::from_shape_fn(dim, |i| {
            // Fixed pseudo-random start; any vector with broad support works.
            let x = ((i as f64 + 1.0) * 0.754877666).fract() - 0.5;
            let y = ((i as f64 + 1.0) * 0.569840290).fract() - 0.5;
            C64::new(x, y)
        });
        let mut norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.mapv_inplace(|z| z / norm);
        let mut sigma = 0.0f64;
        for _ in 0..30 {
            let w = self.matvec_adjoint(&self.matvec(&v));
            norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let next = norm.sqrt();
            let rel = (next - sigma).abs() / next.max(1e-300);
            sigma = next;
            v = w / C64::new(norm, 0.0);
            if rel < 1e-8 {
                break;
            }
        }
        sigma
    }

    /// Iterates over the nonzero entries `(row, col, w)` of the dense matrix.
    fn for_each_entry<F: FnMut(usize, usize, C64)>(&self, mut f: F) {
        let dim = self.dim();
        for t in self.ham.iter().chain(self.bath.iter()) {
            match *t {
                QuadTerm::Hop { a, b, w } => {
                    let (bit_a, bit_b) = (1usize << a, 1usize << b);
                    for s in 0..dim {
                        if a == b {
                            if s & bit_a != 0 {
                                f(s, s, w);
                            }
                        } else if s & bit_b != 0 && s & bit_a == 0 {
                            let sign_b = crate::dense::jw_sign(s, b);
                            let mid = s & !bit_b;
                            let sign_a = crate::dense::jw_sign(mid, a);
                            f(mid | bit_a, s, w * sign_a * sign_b);
                        }
                    }
                }
                QuadTerm::PairCreate { a, b, w } => {
                    let (bit_a, bit_b) = (1usize << a, 1usize << b);
                    for s in 0..dim {
                        if s & (bit_a | bit_b) == 0 {
                            let sign_b = crate::dense::jw_sign(s, b);
                            let mid = s | bit_b;
                            let sign_a = crate::dense::jw_sign(mid, a);
                            f(mid | bit_a, s, w * sign_a * sign_b);
                        }
                    }
                }
            }
        }
    }

    /// Dense matrix of the superoperator; guarded to `N ≤ 6`.
    pub fn dense(&self) -> Result<Array2<C64>> {
        if self.n_modes > 12 {
            return Err(Error::ResourceGuard {
                context: "dense superoperator export",
                n: self.n_modes / 2,
                max: 6,
            });
        }
        let dim = self.dim();
        let mut m = Array2::zeros((dim, dim));
        self.for_each_entry(|r, c, w| m[[r, c]] += w);
        Ok(m)
    }

    /// Writes the merged nonzero entries as `row col re im` lines
    /// (0-based indices); guarded like [`Self::dense`].
    pub fn export_coo_text<W: Write>(&self, w: &mut W) -> Result<()> {
        let dense = self.dense()?;
        for ((r, c), v) in dense.indexed_iter() {
            if *v != C64::new(0.0, 0.0) {
                writeln!(w, "{r} {c} {:.17e} {:.17e}", v.re, v.im)?;
            }
        }
        Ok(())
    }
}

/// Majorana structure of the Liouvillian: raw coefficients `𝓛_{jk}` of
/// `Σ 𝓛_{jk} γ̃_j γ̃_k`, the antisymmetric part, and the scalar left by
/// normal ordering (`tr 𝓛`, since `γ̃_j² = 1`).
#[derive(Debug, Clone)]
pub struct StructureMatrix {
    pub coeffs: Array2<C64>,
    pub antisym: Array2<C64>,
    pub scalar: C64,
}

/// Fills `𝓛_{jk}` by direct correspondence with the Majorana expansion of
/// the Liouvillian.
pub fn build_structure_matrix(h: &CoefficientMatrix, baths: &BathSet) -> Result<StructureMatrix> {
    let n = h.n_sites();
    if baths.n_sites() != n {
        return Err(Error::DimensionMismatch {
            context: "structure matrix assembly",
            expected: n,
            got: baths.n_sites(),
        });
    }
    let mut l = Array2::<C64>::zeros((4 * n, 4 * n));
    // Slot map for mode j (0-based): the four Majorana slots of the pair of
    // second-space sites (2j, 2j+1) are s1 = 4j, s2 = 4j+1, s3 = 4j+2,
    // s4 = 4j+3 (1-based 4j-3 .. 4j in the expansion).
    for j in 0..n {
        for k in 0..n {
            let w = h.matrix()[[j, k]] / 2.0;
            if w != 0.0 {
                l[[4 * k + 3, 4 * j]] += C64::new(w, 0.0);
                l[[4 * j + 1, 4 * k + 2]] += C64::new(w, 0.0);
            }
        }
    }
    let b = baths.rows();
    for row in 0..baths.n_baths() {
        for j in 0..n {
            let bo = b[[row, 2 * j]];
            let be = b[[row, 2 * j + 1]];
            for k in 0..n {
                let co = b[[row, 2 * k]];
                let ce = b[[row, 2 * k + 1]];
                l[[4 * j + 3, 4 * k + 3]] += C64::new(-be * ce, 0.0);
                l[[4 * j + 2, 4 * k + 2]] += C64::new(-be * ce, 0.0);
                l[[4 * j + 1, 4 * k + 1]] += C64::new(-bo * co, 0.0);
                l[[4 * j, 4 * k]] += C64::new(-bo * co, 0.0);
                l[[4 * j + 1, 4 * k + 3]] += C64::new(2.0 * bo * ce, 0.0);
                l[[4 * j + 2, 4 * k]] += C64::new(2.0 * be * co, 0.0);
                l[[4 * j + 1, 4 * k]] += C64::new(0.0, 2.0 * bo * co);
                l[[4 * j + 3, 4 * k + 2]] += C64::new(0.0, 2.0 * be * ce);
                l[[4 * j, 4 * k + 3]] += C64::new(0.0, 2.0 * bo * ce);
                l[[4 * j + 1, 4 * k + 2]] += C64::new(0.0, 2.0 * bo * ce);
            }
        }
    }
    let scalar = (0..4 * n).map(|i| l[[i, i]]).sum();
    let antisym = (&l - &l.t().to_owned()) / C64::new(2.0, 0.0);
    Ok(StructureMatrix {
        coeffs: l,
        antisym,
        scalar,
    })
}

/// Dense operator `Σ A_{jk} γ̃_j γ̃_k + scalar` rebuilt from the
/// antisymmetric part; used to cross-check the two assemblies.
pub fn structure_matrix_dense(sm: &StructureMatrix, n_sites: usize) -> Result<Array2<C64>> {
    let slots = sm.antisym.nrows();
    if slots != 4 * n_sites || n_sites > 6 {
        return Err(Error::ResourceGuard {
            context: "dense structure-matrix rebuild",
            n: n_sites,
            max: 6,
        });
    }
    let dim = 1usize << (2 * n_sites);
    let mut m = Array2::<C64>::zeros((dim, dim));
    for col in 0..dim {
        for k in 0..slots {
            let (mid, pk) = majorana_on_basis(k, col);
            for j in 0..slots {
                let w = sm.antisym[[j, k]];
                if w == C64::new(0.0, 0.0) {
                    continue;
                }
                let (row, pj) = majorana_on_basis(j, mid);
                m[[row, col]] += w * pj * pk;
            }
        }
        m[[col, col]] += sm.scalar;
    }
    Ok(m)
}

/// Kernel vectors of the Liouvillian.
#[derive(Debug, Clone)]
pub struct NessKernel {
    /// Unit-norm kernel vectors, phase-fixed so the all-zeros amplitude is
    /// real positive where it is nonzero. At most eight are returned.
    pub vectors: Vec<Array1<C64>>,
    /// Rank-revealing count of singular values below tolerance (dense path)
    /// or converged block vectors (iterative path).
    pub kernel_dim: usize,
    /// Relative residuals `‖L v‖ / ‖L‖` of the returned vectors.
    pub residuals: Vec<f64>,
    /// Spectral norm used for the relative residuals.
    pub op_norm: f64,
}

impl NessKernel {
    /// Trace-normalized copy of vector `i` (`2^N` times the all-zeros
    /// amplitude equals one), when that amplitude is nonzero.
    pub fn trace_normalized(&self, i: usize) -> Option<Array1<C64>> {
        let v = self.vectors.get(i)?;
        let n_modes = (v.len() as f64).log2() as usize;
        let scale = C64::new((1usize << (n_modes / 2)) as f64, 0.0) * v[0];
        if scale.norm() < 1e-300 {
            return None;
        }
        Some(v.mapv(|z| z / scale))
    }
}

fn phase_fix(v: &mut Array1<C64>) {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        for z in v.iter_mut() {
            *z /= norm;
        }
    }
    if v[0].norm() > 1e-12 {
        let phase = v[0] / v[0].norm();
        for z in v.iter_mut() {
            *z /= phase;
        }
    }
}

/// Extracts stationary vectors: dense SVD null space up to dimension 1024,
/// blocked power iteration on `1 - c L†L` beyond.
pub fn ness_kernel(su: &SuperOperator, tol: f64) -> Result<NessKernel> {
    let dim = su.dim();
    if dim <= 1024 {
        ness_kernel_dense(su, tol)
    } else {
        ness_kernel_iterative(su, tol)
    }
}

fn ness_kernel_dense(su: &SuperOperator, tol: f64) -> Result<NessKernel> {
    let m = su.dense()?;
    let (_, s, vh_opt) = m.svd(false, true)?;
    let vh = vh_opt.expect("svd with vt requested");
    let dim = su.dim();
    let sigma_max = s[0];
    if sigma_max == 0.0 {
        // Zero operator: the whole space is stationary.
        let mut vectors = Vec::new();
        for i in 0..dim.min(8) {
            let mut v = Array1::zeros(dim);
            v[i] = C64::new(1.0, 0.0);
            vectors.push(v);
        }
        return Ok(NessKernel {
            residuals: vec![0.0; vectors.len()],
            kernel_dim: dim,
            vectors,
            op_norm: 0.0,
        });
    }
    let cut = sigma_max * tol;
    let kernel_dim = s.iter().filter(|x| **x <= cut).count();
    let mut vectors = Vec::new();
    let mut residuals = Vec::new();
    for i in (dim - kernel_dim..dim).take(8) {
        let mut v: Array1<C64> = vh.row(i).mapv(|z| z.conj());
        phase_fix(&mut v);
        let r = su.matvec(&v);
        let rn = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() / sigma_max;
        vectors.push(v);
        residuals.push(rn);
    }
    Ok(NessKernel {
        vectors,
        kernel_dim,
        residuals,
        op_norm: sigma_max,
    })
}

fn norm_c(v: &Array1<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Fixed-budget conjugate gradient for `(L†L + μ) x = rhs`.
fn cg_normal_solve(su: &SuperOperator, mu: f64, rhs: &Array1<C64>, iters: usize) -> Array1<C64> {
    let apply = |v: &Array1<C64>| -> Array1<C64> {
        let mut out = su.matvec_adjoint(&su.matvec(v));
        out.zip_mut_with(v, |a, b| *a += C64::new(mu, 0.0) * b);
        out
    };
    let mut x: Array1<C64> = Array1::zeros(rhs.len());
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rs: f64 = r.iter().map(|z| z.norm_sqr()).sum();
    let rhs_norm = norm_c(rhs).max(1e-300);
    for _ in 0..iters {
        if rs.sqrt() <= 1e-14 * rhs_norm {
            break;
        }
        let ap = apply(&p);
        let pap: f64 = p
            .iter()
            .zip(ap.iter())
            .map(|(a, b)| (a.conj() * b).re)
            .sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rs / pap;
        x.zip_mut_with(&p, |a, b| *a += C64::new(alpha, 0.0) * b);
        r.zip_mut_with(&ap, |a, b| *a -= C64::new(alpha, 0.0) * b);
        let rs_next: f64 = r.iter().map(|z| z.norm_sqr()).sum();
        let beta = rs_next / rs;
        rs = rs_next;
        let old_p = p.clone();
        p = r.clone();
        p.zip_mut_with(&old_p, |a, b| *a += C64::new(beta, 0.0) * b);
    }
    x
}

/// Inverse iteration on the regularized normal operator `L†L + μ`; the
/// inner solves act as a strong low-pass filter around the kernel, so a
/// handful of outer sweeps converge even for stiff decay spectra.
fn ness_kernel_iterative(su: &SuperOperator, tol: f64) -> Result<NessKernel> {
    let dim = su.dim();
    let sigma = su.op_norm_estimate();
    if sigma == 0.0 {
        let mut v = Array1::zeros(dim);
        v[0] = C64::new(1.0, 0.0);
        return Ok(NessKernel {
            vectors: vec![v],
            kernel_dim: dim,
            residuals: vec![0.0],
            op_norm: 0.0,
        });
    }
    let mu = 1e-12 * sigma * sigma;
    let block = 4usize;
    let mut xs: Vec<Array1<C64>> = (0..block)
        .map(|b| {
            Array1::from_shape_fn(dim, |i| {
                let t = (i * (2 * b + 3) + 7) as f64;
                C64::new((t * 0.618033988).fract() - 0.5, (t * 0.414213562).fract() - 0.5)
            })
        })
        .collect();
    let orthonormalize = |xs: &mut Vec<Array1<C64>>| {
        for i in 0..xs.len() {
            for j in 0..i {
                let proj: C64 = xs[j]
                    .iter()
                    .zip(xs[i].iter())
                    .map(|(a, b)| a.conj() * b)
                    .sum();
                let prev = xs[j].clone();
                xs[i].zip_mut_with(&prev, |a, b| *a -= proj * b);
            }
            let norm = norm_c(&xs[i]);
            if norm > 1e-300 {
                xs[i].mapv_inplace(|z| z / norm);
            }
        }
    };
    orthonormalize(&mut xs);
    let max_outer = 40;
    let mut best = f64::INFINITY;
    for _ in 0..max_outer {
        for x in xs.iter_mut() {
            let y = cg_normal_solve(su, mu, x, 200);
            let n = norm_c(&y);
            if n > 1e-300 {
                *x = y / C64::new(n, 0.0);
            }
        }
        orthonormalize(&mut xs);
        best = xs
            .iter()
            .map(|x| norm_c(&su.matvec(x)) / sigma)
            .fold(f64::INFINITY, f64::min);
        if best <= tol {
            break;
        }
    }
    let mut vectors = Vec::new();
    let mut residuals = Vec::new();
    for x in xs.iter() {
        let rn = norm_c(&su.matvec(x)) / sigma;
        if rn <= tol {
            let mut v = x.clone();
            phase_fix(&mut v);
            vectors.push(v);
            residuals.push(rn);
        }
    }
    if vectors.is_empty() {
        return Err(Error::NonConvergence {
            residual: best,
            iterations: max_outer,
        });
    }
    let kernel_dim = vectors.len();
    Ok(NessKernel {
        vectors,
        kernel_dim,
        residuals,
        op_norm: sigma,
    })
}

/// How a stationary-state build was obtained.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NessRoute {
    /// Normal-mode ladder product applied to the fully occupied state.
    ProductForm,
    /// The product construction was rejected; the kernel solver supplied the
    /// state instead.
    KernelFallback { reason: String },
}

/// Stationary state as a matrix-product state, trace-normalized
/// (`2^N` times the all-zeros amplitude equals one).
///
/// The construction lifts the fully occupied eigenstate by applying `2N`
/// ladder combinations `Σ_k R_{j,k} γ̃_k` built from eigenvectors of the
/// antisymmetric structure matrix, one per `±` eigenvalue pair, chosen so
/// the accumulated eigenvalue shifts cancel the fully-occupied eigenvalue.
/// Degenerate or inconsistent mode selections fall back to [`ness_kernel`].
pub fn ness_product_form(
    sm: &StructureMatrix,
    su: &SuperOperator,
    options: MpsOptions,
) -> Result<(CanonicalMps, NessRoute)> {
    let n_modes = su.n_modes();
    let n = n_modes / 2;
    if n > 5 {
        return Err(Error::ResourceGuard {
            context: "product-form stationary state",
            n,
            max: 5,
        });
    }
    match product_form_dense(sm, su) {
        Ok(vec) => {
            let mps = CanonicalMps::from_dense(&vec, n_modes, options)?;
            Ok((mps, NessRoute::ProductForm))
        }
        Err(reason) => {
            let kernel = ness_kernel(su, 1e-10)?;
            let v = kernel
                .trace_normalized(0)
                .ok_or(Error::Integrity {
                    context: "traceless kernel vector in stationary-state fallback",
                    dev: 0.0,
                })?;
            let mps = CanonicalMps::from_dense(&v, n_modes, options)?;
            Ok((
                mps,
                NessRoute::KernelFallback {
                    reason: reason.to_string(),
                },
            ))
        }
    }
}

/// Dense normal-mode construction; any structural failure is reported as a
/// fallback reason rather than an error.
fn product_form_dense(sm: &StructureMatrix, su: &SuperOperator) -> std::result::Result<Array1<C64>, String> {
    let slots = sm.antisym.nrows();
    let (vals, vecs) = sm
        .antisym
        .eig()
        .map_err(|e| format!("eigendecomposition failed: {e}"))?;
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.norm())).max(1e-300);
    // Rayleigh re-estimation guards against transpose conventions of the
    // backend; for an antisymmetric matrix a transposed eigenvector simply
    // belongs to the negated eigenvalue.
    let mut modes: Vec<(C64, Array1<C64>)> = Vec::with_capacity(slots);
    for c in 0..slots {
        let v = vecs.column(c).to_owned();
        let mv = sm.antisym.dot(&v);
        let vv: C64 = v.iter().map(|z| z.conj() * z).sum();
        let lam: C64 = v
            .iter()
            .zip(mv.iter())
            .map(|(a, b)| a.conj() * b)
            .sum::<C64>()
            / vv;
        let res: f64 = mv
            .iter()
            .zip(v.iter())
            .map(|(a, b)| (a - lam * b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if res > 1e-8 * scale {
            return Err(format!(
                "ill-conditioned normal mode (residual {res:e})"
            ));
        }
        modes.push((lam, v));
    }
    // Pair ± eigenvalues, largest magnitude first.
    modes.sort_by(|a, b| b.0.norm().partial_cmp(&a.0.norm()).unwrap());
    let mut used = vec![false; slots];
    let mut chosen: Vec<Array1<C64>> = Vec::with_capacity(slots / 2);
    let mut shift_sum = C64::new(0.0, 0.0);
    for i in 0..slots {
        if used[i] {
            continue;
        }
        used[i] = true;
        let (lam_i, _) = (modes[i].0, ());
        let mut partner: Option<(usize, f64)> = None;
        for j in i + 1..slots {
            if used[j] {
                continue;
            }
            let dev = (modes[j].0 + lam_i).norm();
            if partner.map_or(true, |(_, d)| dev < d) {
                partner = Some((j, dev));
            }
        }
        let (j, dev) = partner.ok_or_else(|| "odd number of normal modes".to_string())?;
        if dev > 1e-6 * scale {
            return Err(format!("unpaired normal-mode eigenvalue (deviation {dev:e})"));
        }
        used[j] = true;
        // Pick the member with positive real part (ties: positive imaginary).
        let pick = if lam_i.re > modes[j].0.re
            || (lam_i.re == modes[j].0.re && lam_i.im >= modes[j].0.im)
        {
            i
        } else {
            j
        };
        shift_sum += modes[pick].0;
        chosen.push(modes[pick].1.clone());
    }
    // The accumulated shift must cancel the fully-occupied eigenvalue
    // L = 2 scalar: L + 4 Σ λ = 0.
    let l_full = sm.scalar * 2.0;
    let closure = (l_full + shift_sum * 4.0).norm();
    if closure > 1e-6 * (l_full.norm() + 4.0 * scale).max(1.0) {
        return Err(format!(
            "mode selection does not close the ladder (residue {closure:e})"
        ));
    }
    // Apply the ladder product to the fully occupied state.
    let dim = su.dim();
    let n_sites = su.n_modes();
    let mut state: Array1<C64> = Array1::zeros(dim);
    state[dim - 1] = C64::new(1.0, 0.0);
    for coeffs in chosen.iter().rev() {
        let mut next: Array1<C64> = Array1::zeros(dim);
        for (k, &w) in coeffs.iter().enumerate() {
            if w == C64::new(0.0, 0.0) {
                continue;
            }
            let out = crate::dense::apply_majorana(k, n_sites, &state);
            next.zip_mut_with(&out, |a, b| *a += w * b);
        }
        state = next;
    }
    let norm = state.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm < 1e-10 {
        return Err("ladder product annihilated the seed state".to_string());
    }
    // Residual check against the superoperator.
    let r = su.matvec(&state);
    let op_norm = su.op_norm_estimate().max(1e-300);
    let rel = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() / (norm * op_norm);
    if rel > 1e-8 {
        return Err(format!("ladder state is not stationary (residual {rel:e})"));
    }
    // Trace normalization.
    let trace = state[0] * C64::new((1usize << (n_sites / 2)) as f64, 0.0);
    if trace.norm() < 1e-12 * norm {
        return Err("stationary candidate has vanishing trace".to_string());
    }
    Ok(state.mapv(|z| z / trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stationary::{theorem1_baths, theorem1_state, Branch, Theorem1Config};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> CoefficientMatrix {
        let mut h = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let v = rng.gen_range(-1.0..1.0);
                h[[i, j]] = v;
                h[[j, i]] = v;
            }
        }
        CoefficientMatrix::new(h).unwrap()
    }

    fn random_baths(n: usize, rows: usize, rng: &mut ChaCha8Rng) -> BathSet {
        let b = Array2::from_shape_fn((rows, 2 * n), |_| rng.gen_range(-1.0..1.0));
        BathSet::from_rows(b).unwrap()
    }

    #[test]
    fn zero_inputs_build_the_zero_operator() {
        let h = CoefficientMatrix::new(Array2::zeros((2, 2))).unwrap();
        let baths = BathSet::zero(1, 2);
        let su = build_superoperator(&h, &baths).unwrap();
        assert_eq!(su.nnz_terms(), 0);
        let sm = build_structure_matrix(&h, &baths).unwrap();
        assert!(sm.coeffs.iter().all(|z| *z == c(0.0, 0.0)));
        assert_eq!(sm.scalar, c(0.0, 0.0));
    }

    #[test]
    fn fully_occupied_state_is_an_eigenstate() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for _ in 0..100 {
            let n = rng.gen_range(1..=3);
            let h = random_symmetric(n, &mut rng);
            let baths = random_baths(n, rng.gen_range(1..=n.max(1)), &mut rng);
            let su = build_superoperator(&h, &baths).unwrap();
            let dim = su.dim();
            let mut v = Array1::zeros(dim);
            v[dim - 1] = c(1.0, 0.0);
            let out = su.matvec(&v);
            let l = -4.0 * baths.total_strength();
            let mut dev = 0.0f64;
            for (i, z) in out.iter().enumerate() {
                let expect = if i == dim - 1 { c(l, 0.0) } else { c(0.0, 0.0) };
                dev = dev.max((z - expect).norm());
            }
            assert!(dev <= 1e-10 * l.abs().max(1.0), "deviation {dev:e}");
        }
    }

    #[test]
    fn single_mode_bath_eigenvalue_reference() {
        // b = 1, x = -0.5, "+" branch: L = -4 (1 + (2-√3)²).
        let cfg = Theorem1Config {
            x: -0.5,
            amplitudes: vec![1.0],
            branch: Branch::Plus,
        };
        let baths = theorem1_baths(&cfg).unwrap();
        let h = CoefficientMatrix::new(Array2::zeros((1, 1))).unwrap();
        let su = build_superoperator(&h, &baths).unwrap();
        let mut v = Array1::zeros(4);
        v[3] = c(1.0, 0.0);
        let out = su.matvec(&v);
        let ratio: f64 = 2.0 - 3.0f64.sqrt();
        let l = -4.0 * (1.0 + ratio * ratio);
        assert_abs_diff_eq!(out[3].re, l, epsilon = 1e-10);
        assert_abs_diff_eq!(l, -4.287187078898031, epsilon = 1e-9);
    }

    #[test]
    fn trace_preservation_row_is_exactly_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        let h = random_symmetric(2, &mut rng);
        let baths = random_baths(2, 2, &mut rng);
        let su = build_superoperator(&h, &baths).unwrap();
        let dense = su.dense().unwrap();
        for col in 0..su.dim() {
            assert_eq!(dense[[0, col]], c(0.0, 0.0));
        }
    }

    #[test]
    fn structure_matrix_pure_hamiltonian_slots() {
        let h = CoefficientMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let baths = BathSet::zero(1, 2);
        let sm = build_structure_matrix(&h, &baths).unwrap();
        // Expected support: (4k-1+? ...) in 0-based terms the two slot
        // families (4k+3, 4j) and (4j+1, 4k+2) for the nonzero h entries.
        let mut expect = Array2::<C64>::zeros((8, 8));
        for (j, k) in [(0usize, 1usize), (1, 0)] {
            expect[[4 * k + 3, 4 * j]] += c(0.5, 0.0);
            expect[[4 * j + 1, 4 * k + 2]] += c(0.5, 0.0);
        }
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(sm.coeffs[[i, j]], expect[[i, j]], "slot ({i},{j})");
            }
        }
        assert_eq!(sm.scalar, c(0.0, 0.0));
    }

    #[test]
    fn structure_matrix_rebuild_matches_the_mode_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(107);
        for n in [1usize, 2] {
            let h = random_symmetric(n, &mut rng);
            let baths = random_baths(n, n, &mut rng);
            let su = build_superoperator(&h, &baths).unwrap();
            let sm = build_structure_matrix(&h, &baths).unwrap();
            let a = su.dense().unwrap();
            let b = structure_matrix_dense(&sm, n).unwrap();
            let scale = a.iter().map(|z| z.norm()).fold(0.0f64, f64::max).max(1.0);
            for (x, y) in a.iter().zip(b.iter()) {
                assert!(
                    (x - y).norm() <= 1e-10 * scale,
                    "mismatch {:e}",
                    (x - y).norm()
                );
            }
        }
    }

    #[test]
    fn spectrum_is_closed_under_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(109);
        let h = random_symmetric(2, &mut rng);
        let baths = random_baths(2, 2, &mut rng);
        let su = build_superoperator(&h, &baths).unwrap();
        let dense = su.dense().unwrap();
        let (vals, _) = dense.eig().unwrap();
        let mut sorted: Vec<C64> = vals.to_vec();
        // Each eigenvalue must have a conjugate partner.
        for z in vals.iter() {
            let best = sorted
                .iter()
                .map(|w| (w - z.conj()).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(best <= 1e-9 * (1.0 + z.norm()), "unpaired eigenvalue {z}");
        }
        sorted.clear();
    }

    #[test]
    fn kernel_of_single_mode_bath() {
        let cfg = Theorem1Config {
            x: -0.5,
            amplitudes: vec![1.0],
            branch: Branch::Plus,
        };
        let baths = theorem1_baths(&cfg).unwrap();
        let h = CoefficientMatrix::new(Array2::zeros((1, 1))).unwrap();
        let su = build_superoperator(&h, &baths).unwrap();
        let kernel = ness_kernel(&su, 1e-10).unwrap();
        assert_eq!(kernel.kernel_dim, 1);
        let v = &kernel.vectors[0];
        // Vector proportional to |00) - 0.5 |11).
        let ratio = v[3] / v[0];
        assert_abs_diff_eq!(ratio.re, -0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(ratio.im, 0.0, epsilon = 1e-10);
        assert!(kernel.residuals[0] <= 1e-10);
    }

    #[test]
    fn kernel_matches_the_closed_form_builder() {
        let cfg = Theorem1Config {
            x: -0.5,
            amplitudes: vec![1.0, 1.0, 1.0],
            branch: Branch::Plus,
        };
        let baths = theorem1_baths(&cfg).unwrap();
        let h = CoefficientMatrix::tridiagonal(3, 1.0, 0.0).unwrap();
        let su = build_superoperator(&h, &baths).unwrap();
        let kernel = ness_kernel(&su, 1e-10).unwrap();
        assert_eq!(kernel.kernel_dim, 1);
        let state = theorem1_state(-0.5, 3, MpsOptions::default()).unwrap();
        let dense = state.to_dense().unwrap();
        let norm = dense.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let overlap: C64 = kernel.vectors[0]
            .iter()
            .zip(dense.iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        let fidelity = overlap.norm() / norm;
        assert!(fidelity >= 1.0 - 1e-10, "fidelity {fidelity}");
    }

    #[test]
    fn bath_free_kernel_dimension_matches_the_commutant() {
        let h = CoefficientMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let baths = BathSet::zero(1, 2);
        let su = build_superoperator(&h, &baths).unwrap();
        let kernel = ness_kernel(&su, 1e-9).unwrap();
        // Commutant oracle: pairs of equal many-body energies. Spectrum of
        // the two-site hopping Hamiltonian: 0, -1, 1, 0 over the four Fock
        // states, so 6 coincident pairs.
        let energies = [0.0f64, -1.0, 1.0, 0.0];
        let mut pairs = 0usize;
        for a in energies {
            for b in energies {
                if (a - b).abs() < 1e-12 {
                    pairs += 1;
                }
            }
        }
        assert_eq!(kernel.kernel_dim, pairs);

        // Zero Hamiltonian and zero baths: everything is stationary.
        let h0 = CoefficientMatrix::new(Array2::zeros((2, 2))).unwrap();
        let su0 = build_superoperator(&h0, &baths).unwrap();
        let k0 = ness_kernel(&su0, 1e-9).unwrap();
        assert_eq!(k0.kernel_dim, su0.dim());
    }

    #[test]
    fn iterative_kernel_agrees_with_dense_at_moderate_size() {
        // N = 3 is dense territory; force the iterative path and compare.
        let cfg = Theorem1Config {
            x: -0.5,
            amplitudes: vec![1.0, 1.0, 1.0],
            branch: Branch::Plus,
        };
        let baths = theorem1_baths(&cfg).unwrap();
        let h = CoefficientMatrix::tridiagonal(3, 1.0, 0.0).unwrap();
        let su = build_superoperator(&h, &baths).unwrap();
        let dense = ness_kernel_dense(&su, 1e-10).unwrap();
        let iter = ness_kernel_iterative(&su, 1e-8).unwrap();
        assert!(iter.kernel_dim >= 1);
        let overlap: C64 = dense.vectors[0]
            .iter()
            .zip(iter.vectors[0].iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        assert!(overlap.norm() >= 1.0 - 1e-6, "overlap {}", overlap.norm());
    }

    #[test]
    fn product_form_matches_the_kernel() {
        for n in [1usize, 2] {
            let cfg = Theorem1Config {
                x: -0.5,
                amplitudes: vec![1.0; n],
                branch: Branch::Plus,
            };
            let baths = theorem1_baths(&cfg).unwrap();
            let h = CoefficientMatrix::tridiagonal(n, 1.0, 0.0).unwrap();
            let su = build_superoperator(&h, &baths).unwrap();
            let sm = build_structure_matrix(&h, &baths).unwrap();
            let (mps, route) = ness_product_form(&sm, &su, MpsOptions::default()).unwrap();
            assert_eq!(route, NessRoute::ProductForm);
            let kernel = ness_kernel(&su, 1e-10).unwrap();
            let dense = mps.to_dense().unwrap();
            let norm = dense.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let overlap: C64 = kernel.vectors[0]
                .iter()
                .zip(dense.iter())
                .map(|(a, b)| a.conj() * b)
                .sum();
            let fidelity = overlap.norm() / norm;
            assert!(fidelity >= 1.0 - 1e-8, "fidelity {fidelity}");
        }
    }

    #[test]
    fn product_form_falls_back_on_degenerate_baths() {
        let h = CoefficientMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let baths = BathSet::zero(1, 2);
        let su = build_superoperator(&h, &baths).unwrap();
        let sm = build_structure_matrix(&h, &baths).unwrap();
        let out = ness_product_form(&sm, &su, MpsOptions::default());
        match out {
            Ok((_, NessRoute::KernelFallback { .. })) => {}
            Ok((_, NessRoute::ProductForm)) => panic!("expected a fallback"),
            Err(_) => {} // A degenerate kernel may also surface as an error.
        }
    }

    #[test]
    fn ness_residuals_are_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(113);
        for _ in 0..5 {
            let n = rng.gen_range(1..=3);
            let cfg = Theorem1Config {
                x: rng.gen_range(-0.8..0.8),
                amplitudes: (0..n).map(|_| rng.gen_range(0.2..1.5)).collect(),
                branch: Branch::Plus,
            };
            if cfg.x.abs() < 1e-3 {
                continue;
            }
            let baths = theorem1_baths(&cfg).unwrap();
            let h = random_symmetric(n, &mut rng);
            let su = build_superoperator(&h, &baths).unwrap();
            let kernel = ness_kernel(&su, 1e-9).unwrap();
            for r in &kernel.residuals {
                assert!(*r <= 1e-9);
            }
        }
    }

    #[test]
    fn coo_export_round_trips_against_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(127);
        let h = random_symmetric(2, &mut rng);
        let baths = random_baths(2, 1, &mut rng);
        let su = build_superoperator(&h, &baths).unwrap();
        let mut buf = Vec::new();
        su.export_coo_text(&mut buf).unwrap();
        let dense = su.dense().unwrap();
        let mut rebuilt = Array2::<C64>::zeros(dense.dim());
        for line in String::from_utf8(buf).unwrap().lines() {
            let mut parts = line.split_whitespace();
            let r: usize = parts.next().unwrap().parse().unwrap();
            let cidx: usize = parts.next().unwrap().parse().unwrap();
            let re: f64 = parts.next().unwrap().parse().unwrap();
            let im: f64 = parts.next().unwrap().parse().unwrap();
            rebuilt[[r, cidx]] = c(re, im);
        }
        for (x, y) in rebuilt.iter().zip(dense.iter()) {
            assert_abs_diff_eq!((x - y).norm(), 0.0, epsilon = 1e-15);
        }
    }
}
