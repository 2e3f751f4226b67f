//! Hamiltonian and bath data for number-conserving quadratic fermion systems.
//!
//! A system of `N` single-body states is described by a real symmetric
//! coefficient matrix `h`, a grand-canonical parameter pair `(β, βμ)` and a
//! family of linear baths `L_n = Σ_j v_j c_j + w_j c†_j`. This module holds
//! those inputs, the single-body spectrum, and the argument matrices
//! `R = -β h + βμ 1` and its antisymmetric Majorana form `A` that feed the
//! matrix-product construction of the thermal state.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};

use crate::{Error, Result};

/// Real symmetric single-body Hamiltonian coefficients `h` over `N` sites.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    h: Array2<f64>,
}

impl CoefficientMatrix {
    /// Wraps a dense matrix, requiring exact (bitwise) symmetry and finite
    /// entries.
    pub fn new(h: Array2<f64>) -> Result<Self> {
        let n = h.nrows();
        if h.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "coefficient matrix",
                expected: n,
                got: h.ncols(),
            });
        }
        if n == 0 {
            return Err(Error::InvalidParameter("empty coefficient matrix".into()));
        }
        for i in 0..n {
            for j in 0..n {
                let v = h[[i, j]];
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        context: "coefficient matrix",
                    });
                }
                if i < j && v != h[[j, i]] {
                    return Err(Error::NotSymmetric {
                        i,
                        j,
                        dev: (v - h[[j, i]]).abs(),
                    });
                }
            }
        }
        Ok(Self { h })
    }

    /// Uniform tridiagonal couplings `h[j][k] = offdiag` for `|j-k| = 1` plus a
    /// constant diagonal.
    pub fn tridiagonal(n: usize, offdiag: f64, diagonal: f64) -> Result<Self> {
        let mut h = Array2::zeros((n, n));
        for j in 0..n {
            h[[j, j]] = diagonal;
            if j + 1 < n {
                h[[j, j + 1]] = offdiag;
                h[[j + 1, j]] = offdiag;
            }
        }
        Self::new(h)
    }

    /// Purely diagonal coefficients.
    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let mut h = Array2::zeros((diag.len(), diag.len()));
        for (j, &d) in diag.iter().enumerate() {
            h[[j, j]] = d;
        }
        Self::new(h)
    }

    /// Diagonal entries plus one uniform value on every off-diagonal slot.
    pub fn diagonal_plus_uniform_offdiag(diag: &[f64], offdiag: f64) -> Result<Self> {
        let n = diag.len();
        let mut h = Array2::from_elem((n, n), offdiag);
        for (j, &d) in diag.iter().enumerate() {
            h[[j, j]] = d;
        }
        Self::new(h)
    }

    /// Direct sum of dense blocks.
    pub fn block_diagonal(blocks: &[Array2<f64>]) -> Result<Self> {
        let n: usize = blocks.iter().map(|b| b.nrows()).sum();
        let mut h = Array2::zeros((n, n));
        let mut off = 0;
        for b in blocks {
            let d = b.nrows();
            if b.ncols() != d {
                return Err(Error::DimensionMismatch {
                    context: "block of coefficient matrix",
                    expected: d,
                    got: b.ncols(),
                });
            }
            for i in 0..d {
                for j in 0..d {
                    h[[off + i, off + j]] = b[[i, j]];
                }
            }
            off += d;
        }
        Self::new(h)
    }

    pub fn n_sites(&self) -> usize {
        self.h.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.h
    }
}

/// Grand-canonical parameters.
///
/// Stored as the pair `(β, βμ)` so that the constant-fugacity limit `β → 0`
/// with `βμ` held fixed stays representable; every downstream formula only
/// ever needs `β ε` and `βμ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermoParams {
    beta: f64,
    beta_mu: f64,
}

impl ThermoParams {
    /// Inverse temperature `β ≥ 0` and chemical potential `μ`.
    pub fn new(beta: f64, mu: f64) -> Result<Self> {
        if !beta.is_finite() || !mu.is_finite() || beta < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "thermo parameters need finite beta >= 0 and finite mu, got beta={beta}, mu={mu}"
            )));
        }
        Ok(Self {
            beta,
            beta_mu: beta * mu,
        })
    }

    /// Parameterization by `β` and the product `βμ` (fixed fugacity `e^{βμ}`).
    pub fn from_beta_mu(beta: f64, beta_mu: f64) -> Result<Self> {
        if !beta.is_finite() || !beta_mu.is_finite() || beta < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "thermo parameters need finite beta >= 0 and finite beta*mu, got beta={beta}, beta*mu={beta_mu}"
            )));
        }
        Ok(Self { beta, beta_mu })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn beta_mu(&self) -> f64 {
        self.beta_mu
    }

    /// Chemical potential; `±∞` in the constant-fugacity limit `β = 0`,
    /// `βμ ≠ 0`.
    pub fn mu(&self) -> f64 {
        if self.beta == 0.0 && self.beta_mu == 0.0 {
            0.0
        } else {
            self.beta_mu / self.beta
        }
    }
}

/// Bath coefficients `B` indexed by bath row and Majorana slot.
///
/// Row `n` holds `B^(n)` over `2N` slots; slot `2j` (0-based) pairs with
/// `c_j + c†_j` and slot `2j+1` with the conjugate quadrature, i.e.
/// `B[2j] = (v_j + w_j)/2` and `B[2j+1] = (v_j - w_j)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct BathSet {
    b: Array2<f64>,
}

impl BathSet {
    /// Wraps a prebuilt `n_baths x 2N` coefficient matrix.
    pub fn from_rows(b: Array2<f64>) -> Result<Self> {
        if b.ncols() % 2 != 0 || b.ncols() == 0 || b.nrows() == 0 {
            return Err(Error::InvalidParameter(format!(
                "bath matrix must be n_baths x 2N with N >= 1, got {} x {}",
                b.nrows(),
                b.ncols()
            )));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "bath set" });
        }
        Ok(Self { b })
    }

    /// Builds `B` from per-bath annihilation and creation amplitudes `v, w`
    /// (both `n_baths x N`).
    pub fn from_vw(v: &Array2<f64>, w: &Array2<f64>) -> Result<Self> {
        if v.dim() != w.dim() {
            return Err(Error::DimensionMismatch {
                context: "bath v/w amplitudes",
                expected: v.len(),
                got: w.len(),
            });
        }
        let (rows, n) = v.dim();
        let mut b = Array2::zeros((rows, 2 * n));
        for r in 0..rows {
            for j in 0..n {
                b[[r, 2 * j]] = (v[[r, j]] + w[[r, j]]) / 2.0;
                b[[r, 2 * j + 1]] = (v[[r, j]] - w[[r, j]]) / 2.0;
            }
        }
        Self::from_rows(b)
    }

    /// All-zero bath family (pure Hamiltonian flow).
    pub fn zero(n_baths: usize, n_sites: usize) -> Self {
        Self {
            b: Array2::zeros((n_baths, 2 * n_sites)),
        }
    }

    pub fn n_baths(&self) -> usize {
        self.b.nrows()
    }

    pub fn n_sites(&self) -> usize {
        self.b.ncols() / 2
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.b
    }

    /// Sum over baths and sites of `B[2j]^2 + B[2j+1]^2`.
    pub fn total_strength(&self) -> f64 {
        self.b.iter().map(|v| v * v).sum()
    }
}

/// Single-body eigenvalues (ascending) and orthonormal eigenvectors
/// (columns); the sign of each eigenvector is fixed by making its first
/// component of magnitude above `1e-12` positive.
#[derive(Debug, Clone)]
pub struct SingleBodySpectrum {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
}

/// Solves `h v_k = ε_k v_k` for the symmetric coefficient matrix.
pub fn single_body_spectrum(h: &CoefficientMatrix) -> Result<SingleBodySpectrum> {
    let (eigenvalues, mut eigenvectors) = h.matrix().eigh(UPLO::Lower)?;
    for mut col in eigenvectors.columns_mut() {
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                col.mapv_inplace(|v| -v);
            }
        }
    }
    Ok(SingleBodySpectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// Mode occupation `1/(e^{β(ε-μ)} + 1)`; saturates to `0` or `1` at extreme
/// arguments.
pub fn fermi_dirac(epsilon: f64, p: &ThermoParams) -> f64 {
    let x = p.beta() * epsilon - p.beta_mu();
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Grand-canonical partition function with its log-space companion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrandPartition {
    /// `Ξ = Π_j (1 + e^{-β(ε_j-μ)})`; `+∞` if the product overflows.
    pub xi: f64,
    /// `log Ξ`, always finite.
    pub log_xi: f64,
}

/// Evaluates `Ξ = Π_j (1 + e^{-β(ε_j-μ)})` in log space.
pub fn grand_partition_closed_form(eigenvalues: &Array1<f64>, p: &ThermoParams) -> GrandPartition {
    let n = eigenvalues.len();
    if p.beta() == 0.0 && p.beta_mu() == 0.0 {
        // Infinite temperature at zero fugacity: exactly 2^N.
        let log_xi = n as f64 * std::f64::consts::LN_2;
        return GrandPartition {
            xi: (n as f64).exp2(),
            log_xi,
        };
    }
    let mut log_xi = 0.0;
    for &eps in eigenvalues {
        let y = p.beta_mu() - p.beta() * eps;
        log_xi += y.max(0.0) + (-y.abs()).exp().ln_1p();
    }
    GrandPartition {
        xi: log_xi.exp(),
        log_xi,
    }
}

/// Mode index carrying Majorana slot `l` (both 1-based): `(2l+1-(-1)^l)/4`.
pub fn mode_of_majorana(l: usize) -> usize {
    if l % 2 == 0 {
        l / 2
    } else {
        (l + 1) / 2
    }
}

/// Argument matrices of the thermal state: `R = -β h + βμ 1`, its
/// antisymmetric Majorana form `A` and the scalar `A0 = tr R / 2`.
#[derive(Debug, Clone)]
pub struct ArgumentMatrices {
    /// Real symmetric `N x N`.
    pub r: Array2<f64>,
    /// Real antisymmetric `2N x 2N` with exact checkerboard support.
    pub a: Array2<f64>,
    /// Scalar part `tr R / 2`.
    pub a0: f64,
}

/// Builds `R`, `A` and `A0` for the thermal-state pipeline.
pub fn argument_matrices(h: &CoefficientMatrix, p: &ThermoParams) -> ArgumentMatrices {
    let n = h.n_sites();
    let mut r = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            r[[i, j]] = -p.beta() * h.matrix()[[i, j]];
        }
        r[[i, i]] += p.beta_mu();
    }
    let a0 = 0.5 * (0..n).map(|i| r[[i, i]]).sum::<f64>();
    let mut a = Array2::zeros((2 * n, 2 * n));
    for pq in 0..2 * n {
        for q in 0..2 * n {
            // 1-based slot parities: (-1)^k - (-1)^j.
            let sj = if (pq + 1) % 2 == 0 { 1.0 } else { -1.0 };
            let sk = if (q + 1) % 2 == 0 { 1.0 } else { -1.0 };
            let factor = sk - sj;
            if factor != 0.0 {
                a[[pq, q]] = factor * r[[pq / 2, q / 2]];
            }
        }
    }
    ArgumentMatrices { r, a, a0 }
}

/// Connected components of the nonzero pattern of `h` (exact stored zeros).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    /// Site groups, each sorted ascending, ordered by smallest member.
    pub components: Vec<Vec<usize>>,
}

impl BlockPartition {
    pub fn is_irreducible(&self) -> bool {
        self.components.len() == 1
    }

    pub fn n_blocks(&self) -> usize {
        self.components.len()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.components.iter().map(|c| c.len()).collect()
    }
}

/// Partitions the sites of `h` into the connected components of the graph
/// with an edge wherever `h[j][k] != 0`.
pub fn irreducibility_check(h: &CoefficientMatrix) -> BlockPartition {
    let n = h.n_sites();
    let m = h.matrix();
    let mut seen = vec![false; n];
    let mut components = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for u in 0..n {
                if !seen[u] && u != v && m[[v, u]] != 0.0 {
                    seen[u] = true;
                    comp.push(u);
                    stack.push(u);
                }
            }
        }
        comp.sort_unstable();
        components.push(comp);
    }
    BlockPartition { components }
}
