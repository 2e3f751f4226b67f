//! Closed-form stationary states of the Lindblad flow and their
//! thermal classification.
//!
//! Two families are covered. For irreducible Hamiltonian coefficients and
//! baths localized one per site with `B_{2n} = r(x) B_{2n-1}`,
//! `r(x) = (-1 ± √(1-x²))/x`, the pair-product state with amplitude `x` on
//! every pair is stationary (an infinite-temperature state at fixed
//! fugacity). For block-diagonal coefficients the same construction holds
//! block by block with per-block amplitudes `x_l`; such states match a
//! thermal state only when every block is a single site, in which case
//! `x_l = tanh(β(μ - ε_l)/2)` determines `(β, μ)`.

use num_complex::Complex64 as C64;

use crate::liouville::{build_superoperator, QuadTerm, SuperOperator};
use crate::model::{BathSet, CoefficientMatrix};
use crate::mps::{inner_with_ops, CanonicalMps, MpsOptions};
use crate::{Error, Result};

/// Root branch of the bath-coefficient ratio `(-1 ± √(1-x²))/x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

/// Single-block configuration: one bath per site, amplitudes `b_j`, shared
/// pair amplitude `x` with `|x| < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Config {
    pub x: f64,
    pub amplitudes: Vec<f64>,
    pub branch: Branch,
}

/// One irreducible block of the block-diagonal family.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem2Block {
    pub size: usize,
    pub x: f64,
    pub bath_row: Vec<f64>,
}

/// Block-diagonal configuration; bath rows live inside their blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem2Config {
    pub blocks: Vec<Theorem2Block>,
}

impl Theorem2Config {
    pub fn n_sites(&self) -> usize {
        self.blocks.iter().map(|b| b.size).sum()
    }
}

/// Ratio `B_{2n}/B_{2n-1} = (-1 ± √(1-x²))/x`; the `+` branch continues
/// through `x = 0` as `-x/2`, the `-` branch diverges there and is rejected
/// below `|x| < 1e-8`.
pub fn bath_ratio(x: f64, branch: Branch) -> Result<f64> {
    if !x.is_finite() || x.abs() >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "pair amplitude must satisfy |x| < 1, got {x}"
        )));
    }
    let root = (1.0 - x * x).sqrt();
    match branch {
        Branch::Plus => {
            if x.abs() < 1e-8 {
                // (-1 + √(1-x²))/x = -x/2 - x³/8 - ...
                Ok(-x / 2.0)
            } else {
                Ok((-1.0 + root) / x)
            }
        }
        Branch::Minus => {
            if x.abs() < 1e-8 {
                Err(Error::InvalidParameter(
                    "the '-' branch diverges as x -> 0".into(),
                ))
            } else {
                Ok((-1.0 - root) / x)
            }
        }
    }
}

/// Bath family of the single-block solution: `B^(n)_{2j-1} = δ_j^n b_j`,
/// `B^(n)_{2j} = r(x) B^(n)_{2j-1}`.
pub fn theorem1_baths(cfg: &Theorem1Config) -> Result<BathSet> {
    let n = cfg.amplitudes.len();
    if n == 0 || cfg.amplitudes.iter().all(|b| *b == 0.0) {
        return Err(Error::InvalidParameter(
            "at least one bath amplitude must be nonzero".into(),
        ));
    }
    let ratio = bath_ratio(cfg.x, cfg.branch)?;
    let mut b = ndarray::Array2::zeros((n, 2 * n));
    for (j, &amp) in cfg.amplitudes.iter().enumerate() {
        b[[j, 2 * j]] = amp;
        b[[j, 2 * j + 1]] = ratio * amp;
    }
    BathSet::from_rows(b)
}

/// Bath family of the block-diagonal solution; bath `n` sits on global site
/// `n` with the ratio of its block.
pub fn theorem2_baths(cfg: &Theorem2Config) -> Result<BathSet> {
    let n = cfg.n_sites();
    if n == 0 {
        return Err(Error::InvalidParameter("empty block list".into()));
    }
    let mut b = ndarray::Array2::zeros((n, 2 * n));
    let mut offset = 0;
    for block in &cfg.blocks {
        if block.bath_row.len() != block.size || block.size == 0 {
            return Err(Error::DimensionMismatch {
                context: "block bath row",
                expected: block.size,
                got: block.bath_row.len(),
            });
        }
        if block.bath_row.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidParameter(
                "every block needs a nonzero bath amplitude".into(),
            ));
        }
        let ratio = bath_ratio(block.x, Branch::Plus)?;
        for (jp, &amp) in block.bath_row.iter().enumerate() {
            let site = offset + jp;
            b[[site, 2 * site]] = amp;
            b[[site, 2 * site + 1]] = ratio * amp;
        }
        offset += block.size;
    }
    BathSet::from_rows(b)
}

/// Largest residual of the defining identity
/// `2 B_{2n-1} B_{2n} + x_n (B_{2n-1}² + B_{2n}²)` over the bath rows.
pub fn bath_identity_residual(baths: &BathSet, x_per_site: &[f64]) -> f64 {
    let b = baths.rows();
    let mut worst: f64 = 0.0;
    for n in 0..baths.n_baths().min(x_per_site.len()) {
        let bo = b[[n, 2 * n]];
        let be = b[[n, 2 * n + 1]];
        worst = worst.max((2.0 * bo * be + x_per_site[n] * (bo * bo + be * be)).abs());
    }
    worst
}

/// `|ρ_it) = 2^{-N} ⊗ [ |00) + x |11) ]`.
pub fn theorem1_state(x: f64, n_sites: usize, options: MpsOptions) -> Result<CanonicalMps> {
    let pairs = vec![(C64::new(1.0, 0.0), C64::new(x, 0.0)); n_sites];
    CanonicalMps::product_state_log(&pairs, -(n_sites as f64) * std::f64::consts::LN_2, options)
}

/// `2^{-N} ⊗_blocks ⊗_sites [ |00) + x_l |11) ]`.
pub fn theorem2_state(cfg: &Theorem2Config, options: MpsOptions) -> Result<CanonicalMps> {
    let n = cfg.n_sites();
    let mut pairs = Vec::with_capacity(n);
    for block in &cfg.blocks {
        for _ in 0..block.size {
            pairs.push((C64::new(1.0, 0.0), C64::new(block.x, 0.0)));
        }
    }
    CanonicalMps::product_state_log(&pairs, -(n as f64) * std::f64::consts::LN_2, options)
}

/// Residual report of one stationarity check.
#[derive(Debug, Clone)]
pub struct StationarityReport {
    /// `‖L_ham |ρ)‖ / ‖ρ‖`.
    pub ham_residual: f64,
    /// `‖L_bath |ρ)‖ / ‖ρ‖`.
    pub bath_residual: f64,
    /// `‖L |ρ)‖ / ‖ρ‖`.
    pub total_residual: f64,
    /// Spectral-norm estimate (dense route) or coefficient-sum bound
    /// (matrix-product route) used for the relative residual.
    pub op_norm: f64,
    /// `total_residual / op_norm`.
    pub relative: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Site-operator string of one normal-ordered monomial.
fn term_site_ops(term: &QuadTerm) -> (C64, Vec<(usize, [[C64; 2]; 2])>) {
    let zero = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let raise = [[zero, zero], [one, zero]];
    let lower = [[zero, one], [zero, zero]];
    let number = [[zero, zero], [zero, one]];
    let zop = [[one, zero], [zero, -one]];
    match *term {
        QuadTerm::Hop { a, b, w } if a == b => (w, vec![(a, number)]),
        QuadTerm::Hop { a, b, w } => {
            let mut ops = vec![(a, raise), (b, lower)];
            for s in a.min(b) + 1..a.max(b) {
                ops.push((s, zop));
            }
            (w, ops)
        }
        QuadTerm::PairCreate { a, b, w } => {
            let mut ops = vec![(a, raise), (b, raise)];
            for s in a + 1..b {
                ops.push((s, zop));
            }
            (w, ops)
        }
    }
}

/// Residual of the Liouvillian applied to a matrix-product state through
/// pairwise term contractions (no dense vectors).
fn mps_residual_sq(state: &CanonicalMps, terms: &[(C64, Vec<(usize, [[C64; 2]; 2])>)]) -> Result<f64> {
    let mut acc = C64::new(0.0, 0.0);
    for (wi, ops_i) in terms {
        for (wj, ops_j) in terms {
            let overlap = inner_with_ops(state, ops_i, state, ops_j)?;
            acc += wi.conj() * wj * overlap;
        }
    }
    Ok(acc.re.max(0.0))
}

/// Checks `L |ρ) = 0`, splitting the Hamiltonian- and bath-part residuals.
///
/// Uses a dense matrix-vector product up to `N ≤ 6` and term-wise
/// matrix-product contractions beyond (guarded to `N ≤ 12` by the
/// superoperator assembly).
pub fn verify_stationarity(
    state: &CanonicalMps,
    h: &CoefficientMatrix,
    baths: &BathSet,
    tolerance: f64,
) -> Result<StationarityReport> {
    let su = build_superoperator(h, baths)?;
    if state.n_sites() != su.n_modes() {
        return Err(Error::DimensionMismatch {
            context: "stationarity check",
            expected: su.n_modes(),
            got: state.n_sites(),
        });
    }
    let (ham_res, bath_res, total_res, op_norm);
    if h.n_sites() <= 6 {
        let v = state.to_dense()?;
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let nrm = |w: ndarray::Array1<C64>| {
            w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() / norm
        };
        ham_res = nrm(su.matvec_ham(&v));
        bath_res = nrm(su.matvec_bath(&v));
        total_res = nrm(su.matvec(&v));
        op_norm = su.op_norm_estimate();
    } else {
        let ham_terms: Vec<_> = su.ham_terms().iter().map(term_site_ops).collect();
        let bath_terms: Vec<_> = su.bath_terms().iter().map(term_site_ops).collect();
        let all_terms: Vec<_> = ham_terms.iter().chain(bath_terms.iter()).cloned().collect();
        // Mantissa states are unit-norm, so these are already relative.
        ham_res = mps_residual_sq(state, &ham_terms)?.sqrt();
        bath_res = mps_residual_sq(state, &bath_terms)?.sqrt();
        total_res = mps_residual_sq(state, &all_terms)?.sqrt();
        op_norm = su
            .ham_terms()
            .iter()
            .chain(su.bath_terms().iter())
            .map(|t| match t {
                QuadTerm::Hop { w, .. } | QuadTerm::PairCreate { w, .. } => w.norm(),
            })
            .sum();
    }
    let relative = if op_norm > 0.0 {
        total_res / op_norm
    } else {
        total_res
    };
    Ok(StationarityReport {
        ham_residual: ham_res,
        bath_residual: bath_res,
        total_residual: total_res,
        op_norm,
        relative,
        tolerance,
        pass: relative <= tolerance,
    })
}

/// Thermal classification of a closed-form stationary state.
#[derive(Debug, Clone, PartialEq)]
pub enum ThermalMatch {
    /// `β = 0` at fixed fugacity `e^{βμ}`.
    InfiniteTemperature { beta_mu: f64 },
    /// Matches the grand-canonical state of the diagonal coefficients.
    Thermal {
        beta: f64,
        mu: f64,
        max_deviation: f64,
    },
    /// Single block (or a single distinct energy): the two-parameter fit is
    /// not pinned down.
    Underdetermined,
    /// Diagonal data exists but is inconsistent with any `(β, μ)`.
    NonThermal { max_deviation: f64 },
    /// Blocks of size above one cannot match a thermal state.
    NonThermalStructure,
}

/// Classification of the single-block solution: infinite temperature with
/// `βμ = 2 atanh x`.
pub fn thermal_match_theorem1(x: f64) -> ThermalMatch {
    ThermalMatch::InfiniteTemperature {
        beta_mu: 2.0 * x.atanh(),
    }
}

/// Classification of the block-diagonal solution against per-block energies
/// (the diagonal coefficients), solving `2 atanh x_l = βμ - β ε_l` exactly
/// from two distinct energies and checking the rest within `1e-9`.
pub fn thermal_match_theorem2(cfg: &Theorem2Config, block_energies: &[f64]) -> ThermalMatch {
    if cfg.blocks.iter().any(|b| b.size > 1) {
        return ThermalMatch::NonThermalStructure;
    }
    let n = cfg.blocks.len();
    if n != block_energies.len() || n < 2 {
        return ThermalMatch::Underdetermined;
    }
    let y: Vec<f64> = cfg.blocks.iter().map(|b| 2.0 * b.x.atanh()).collect();
    let eps = block_energies;
    let mut pair = None;
    'outer: for i in 0..n {
        for j in i + 1..n {
            if (eps[i] - eps[j]).abs() > 1e-9 {
                pair = Some((i, j));
                break 'outer;
            }
        }
    }
    let Some((i, j)) = pair else {
        return ThermalMatch::Underdetermined;
    };
    let beta = (y[i] - y[j]) / (eps[j] - eps[i]);
    let beta_mu = y[i] + beta * eps[i];
    let scale = y.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut max_dev: f64 = 0.0;
    for l in 0..n {
        max_dev = max_dev.max((y[l] - (beta_mu - beta * eps[l])).abs());
    }
    if max_dev > 1e-9 * scale {
        return ThermalMatch::NonThermal {
            max_deviation: max_dev,
        };
    }
    if beta.abs() <= 1e-12 {
        return ThermalMatch::InfiniteTemperature { beta_mu };
    }
    ThermalMatch::Thermal {
        beta,
        mu: beta_mu / beta,
        max_deviation: max_dev,
    }
}

/// Convenience wrapper: superoperator of a theorem-style configuration.
pub fn theorem_superoperator(h: &CoefficientMatrix, baths: &BathSet) -> Result<SuperOperator> {
    build_superoperator(h, baths)
}
