//! Construction of the grand-canonical state as a second-space
//! matrix-product state.
//!
//! Pipeline: factorize the antisymmetric argument matrix `A = U Λ Uᵀ`, match
//! the pair amplitudes `α_l` to the single-body spectrum through
//! `-α_k/2 = β(ε_k - μ)`, build the reduced pair-product state
//! `e^{A0} ⊗_l [cosh(α_l/4)|00) + sinh(α_l/4)|11)]`, fold `U` to the
//! identity with a Givens schedule, and unfold the reduced state by applying
//! the inverse second-space gates in reverse. The unfolded state is the
//! string-basis expansion of `e^{-β(H-μM)}`, which the dense oracle
//! [`dense_thermo_oracle`] reproduces independently at small sizes.

use ndarray::Array1;
use ndarray_linalg::Determinant;
use num_complex::Complex64 as C64;

use crate::canonical::{fold_to_identity, youla_factorize, CanonicalFactorization, GivensSchedule};
use crate::dense::{expm_symmetric, quadratic_operator, string_coefficients};
use crate::model::{
    argument_matrices, grand_partition_closed_form, single_body_spectrum, CoefficientMatrix,
    GrandPartition, SingleBodySpectrum, ThermoParams,
};
use crate::mps::{majorana_plane_gate, CanonicalMps, MpsOptions};
use crate::{Error, Result};

/// Magnitude-and-sign form of a pair amplitude, safe for any `β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogAmplitude {
    pub sign: f64,
    pub log_abs: f64,
}

/// The fully assembled thermal state and its building blocks.
#[derive(Debug, Clone)]
pub struct ThermoState {
    /// Unfolded second-space state `|Ξ ρ_th)`.
    pub state: CanonicalMps,
    /// Reduced pair-product state `|Ξ ρ'_th)`.
    pub reduced: CanonicalMps,
    /// Sign-matched factorization of the argument matrix.
    pub factorization: CanonicalFactorization,
    /// Fold schedule of the orthonormal factor.
    pub schedule: GivensSchedule,
    pub spectrum: SingleBodySpectrum,
    pub params: ThermoParams,
    pub a0: f64,
}

/// Reorders and sign-normalizes the factorization pairs so that
/// `α_k = -2 β (ε_k - μ)` holds in ascending-spectrum order, keeping
/// `det U = +1` (a zero pair is flipped if needed; flips of nonzero pairs
/// are fixed by the matching itself).
pub fn match_pairs_to_spectrum(
    fact: &CanonicalFactorization,
    targets: &[f64],
) -> Result<CanonicalFactorization> {
    let n = targets.len();
    if fact.alpha.len() != n {
        return Err(Error::DimensionMismatch {
            context: "pair matching",
            expected: n,
            got: fact.alpha.len(),
        });
    }
    let scale = targets.iter().fold(1.0f64, |acc, t| acc.max(t.abs()));
    let tol = 1e-8 * scale;
    let mut used = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for &t in targets {
        let mut best: Option<(usize, f64)> = None;
        for l in 0..n {
            if used[l] {
                continue;
            }
            let dev = (fact.alpha[l].abs() - t.abs()).abs();
            if best.map_or(true, |(_, d)| dev < d) {
                best = Some((l, dev));
            }
        }
        let (l, dev) = best.expect("n targets, n pairs");
        if dev > tol {
            return Err(Error::SignMatch { dev });
        }
        used[l] = true;
        order.push(l);
    }
    let dim = fact.u.nrows();
    let mut matched = CanonicalFactorization {
        u: ndarray::Array2::zeros((dim, dim)),
        alpha: vec![0.0; n],
    };
    for (k, &l) in order.iter().enumerate() {
        let mut alpha = fact.alpha[l];
        let flip = alpha * targets[k] < 0.0 && targets[k].abs() > tol;
        for r in 0..dim {
            if flip {
                matched.u[[r, 2 * k]] = fact.u[[r, 2 * l + 1]];
                matched.u[[r, 2 * k + 1]] = fact.u[[r, 2 * l]];
            } else {
                matched.u[[r, 2 * k]] = fact.u[[r, 2 * l]];
                matched.u[[r, 2 * k + 1]] = fact.u[[r, 2 * l + 1]];
            }
        }
        if flip {
            alpha = -alpha;
        }
        matched.alpha[k] = alpha;
    }
    if matched.u.det()? < 0.0 {
        // A proper-rotation fold needs det +1; only a zero pair can absorb
        // the sign without disturbing the matched amplitudes.
        let zero = matched
            .alpha
            .iter()
            .position(|a| a.abs() <= tol.max(1e-12))
            .ok_or(Error::Integrity {
                context: "determinant restoration in pair matching",
                dev: -1.0,
            })?;
        matched.flip_pair(zero);
    }
    Ok(matched)
}

/// Pair amplitudes `(cosh(α/4), sinh(α/4))` in magnitude/sign form.
pub fn reduced_pair_amplitudes(alpha: &[f64]) -> Vec<(LogAmplitude, LogAmplitude)> {
    alpha
        .iter()
        .map(|&a| {
            let m = (a / 4.0).abs();
            // cosh m = e^m (1 + e^{-2m})/2, sinh m = e^m (1 - e^{-2m})/2.
            let cosh = LogAmplitude {
                sign: 1.0,
                log_abs: m + ((-2.0 * m).exp().ln_1p() - std::f64::consts::LN_2),
            };
            let sinh_mag = if m == 0.0 {
                f64::NEG_INFINITY
            } else {
                m + (-(-2.0 * m).exp()).ln_1p() - std::f64::consts::LN_2
            };
            let sinh = LogAmplitude {
                sign: if a >= 0.0 { 1.0 } else { -1.0 },
                log_abs: sinh_mag,
            };
            (cosh, sinh)
        })
        .collect()
}

/// Builds the reduced state `|Ξ ρ'_th) = e^{A0} ⊗_l [cosh(α_l/4)|00) +
/// sinh(α_l/4)|11)]` with the exponential factors kept in log space.
pub fn reduced_thermo_state(
    fact: &CanonicalFactorization,
    a0: f64,
    options: MpsOptions,
) -> Result<CanonicalMps> {
    let mut log_scale = a0;
    let mut pairs = Vec::with_capacity(fact.alpha.len());
    for &alpha in &fact.alpha {
        let m = (alpha / 4.0).abs();
        log_scale += m;
        let a = ((-2.0 * m).exp() + 1.0) / 2.0;
        let b = (1.0 - (-2.0 * m).exp()) / 2.0 * if alpha >= 0.0 { 1.0 } else { -1.0 };
        pairs.push((C64::new(a, 0.0), C64::new(b, 0.0)));
    }
    CanonicalMps::product_state_log(&pairs, log_scale, options)
}

/// Applies the inverse fold gates in reverse order, turning the reduced
/// state into `|Ξ ρ_th)`.
pub fn unfold_thermo_state(
    reduced: &CanonicalMps,
    schedule: &GivensSchedule,
) -> Result<CanonicalMps> {
    let mut state = reduced.clone();
    let n = state.n_sites();
    for rot in schedule.rotations.iter().rev() {
        if rot.plane + 1 >= n {
            return Err(Error::PlaneOutOfRange {
                plane: rot.plane,
                dim: n,
            });
        }
        let gate = majorana_plane_gate(rot.plane, -rot.angle);
        state.apply_two_site_gate(rot.plane, &gate)?;
    }
    Ok(state)
}

/// Full pipeline from `(h, β, μ)` to the second-space thermal state.
pub fn build_thermo_state(
    h: &CoefficientMatrix,
    params: &ThermoParams,
    options: MpsOptions,
) -> Result<ThermoState> {
    let spectrum = single_body_spectrum(h)?;
    let am = argument_matrices(h, params);
    let raw = youla_factorize(&am.a)?;
    let targets: Vec<f64> = spectrum
        .eigenvalues
        .iter()
        .map(|&eps| 2.0 * (params.beta_mu() - params.beta() * eps))
        .collect();
    let factorization = match_pairs_to_spectrum(&raw, &targets)?;
    let reduced = reduced_thermo_state(&factorization, am.a0, options)?;
    let schedule = fold_to_identity(&factorization.u)?;
    let state = unfold_thermo_state(&reduced, &schedule)?;
    Ok(ThermoState {
        state,
        reduced,
        factorization,
        schedule,
        spectrum,
        params: *params,
        a0: am.a0,
    })
}

/// Partition function read off a second-space state: `Ξ = 2^N (0|Ξρ)`.
///
/// The all-zeros amplitude must be real and positive; a relative imaginary
/// or negative residue beyond `1e-10` is an integrity error.
pub fn partition_function_from_state(state: &CanonicalMps) -> Result<GrandPartition> {
    let n_modes = state.n_sites() / 2;
    let bits = vec![0u8; state.n_sites()];
    let (mantissa, log) = state.amplitude_parts(&bits)?;
    if mantissa.norm() == 0.0 || mantissa.im.abs() > 1e-10 * mantissa.norm() || mantissa.re <= 0.0
    {
        return Err(Error::Integrity {
            context: "trace amplitude of the thermal state",
            dev: if mantissa.re <= 0.0 {
                mantissa.re
            } else {
                mantissa.im.abs() / mantissa.norm()
            },
        });
    }
    let log_xi = n_modes as f64 * std::f64::consts::LN_2 + log + mantissa.re.ln();
    Ok(GrandPartition {
        xi: log_xi.exp(),
        log_xi,
    })
}

/// Partition function from the pair amplitudes:
/// `Ξ = 2^N e^{A0} Π_l cosh(α_l/4)`.
pub fn partition_function_from_alpha(alpha: &[f64], a0: f64) -> GrandPartition {
    let mut log_xi = alpha.len() as f64 * std::f64::consts::LN_2 + a0;
    for &a in alpha {
        let m = (a / 4.0).abs();
        log_xi += m + ((-2.0 * m).exp().ln_1p() - std::f64::consts::LN_2);
    }
    GrandPartition {
        xi: log_xi.exp(),
        log_xi,
    }
}

/// Three partition-function routes: state trace, eigenvalue product and the
/// pair-amplitude formula.
pub fn partition_three_way(ts: &ThermoState) -> Result<[GrandPartition; 3]> {
    let from_state = partition_function_from_state(&ts.state)?;
    let closed = grand_partition_closed_form(&ts.spectrum.eigenvalues, &ts.params);
    let from_alpha = partition_function_from_alpha(&ts.factorization.alpha, ts.a0);
    Ok([from_state, closed, from_alpha])
}

/// Eigenmode occupations from the reduced state.
///
/// Reads `f_k = (1 + 2^N (0..1_{2k-1}1_{2k}..0 | Ξρ'_th)/Ξ)/2` off the pair
/// amplitudes and cross-checks against both `(1 + tanh(α_k/4))/2` and the
/// Fermi-Dirac value of the matched spectrum; a deviation beyond `1e-8` is
/// a sign-convention integrity error.
pub fn occupations_from_reduced(ts: &ThermoState) -> Result<Vec<f64>> {
    let n = ts.factorization.alpha.len();
    let log_xi = partition_function_from_alpha(&ts.factorization.alpha, ts.a0).log_xi;
    let mut occs = Vec::with_capacity(n);
    for k in 0..n {
        let mut bits = vec![0u8; 2 * n];
        bits[2 * k] = 1;
        bits[2 * k + 1] = 1;
        let (mantissa, log) = ts.reduced.amplitude_parts(&bits)?;
        if mantissa.im.abs() > 1e-10 * mantissa.norm().max(1e-300) {
            return Err(Error::Integrity {
                context: "pair amplitude of the reduced state",
                dev: mantissa.im.abs(),
            });
        }
        // 2^N amp / Ξ = tanh(α_k/4), assembled in log space.
        let ratio = if mantissa.re == 0.0 {
            0.0
        } else {
            mantissa.re.signum()
                * (n as f64 * std::f64::consts::LN_2 + log + mantissa.re.abs().ln() - log_xi).exp()
        };
        let f = 0.5 * (1.0 + ratio);
        let alpha = ts.factorization.alpha[k];
        let f_alpha = 0.5 * (1.0 + (alpha / 4.0).tanh());
        let f_fd = crate::model::fermi_dirac(ts.spectrum.eigenvalues[k], &ts.params);
        let dev = (f - f_alpha).abs().max((f - f_fd).abs());
        if dev > 1e-8 {
            return Err(Error::SignMatch { dev });
        }
        occs.push(f);
    }
    Ok(occs)
}

/// Dense oracle: expands `e^{-β(H - μM)}` over the ordered Majorana string
/// basis, giving the exact second-space coefficient vector (length `4^N`).
/// Guarded to `N ≤ 6`.
pub fn dense_thermo_oracle(h: &CoefficientMatrix, params: &ThermoParams) -> Result<Array1<f64>> {
    let n = h.n_sites();
    if n > 6 {
        return Err(Error::ResourceGuard {
            context: "dense thermal oracle",
            n,
            max: 6,
        });
    }
    let am = argument_matrices(h, params);
    let op = quadratic_operator(&am.r, n);
    let rho = expm_symmetric(&op)?;
    string_coefficients(&rho, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

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

    fn compare_to_oracle(ts: &ThermoState, h: &CoefficientMatrix, p: &ThermoParams, tol: f64) {
        let oracle = dense_thermo_oracle(h, p).unwrap();
        let dense = ts.state.to_dense().unwrap();
        let mut dev = 0.0f64;
        for (got, want) in dense.iter().zip(oracle.iter()) {
            dev = dev.max((got - C64::new(*want, 0.0)).norm());
        }
        assert!(dev <= tol, "oracle deviation {dev:e}");
    }

    #[test]
    fn infinite_temperature_is_the_vacuum_string() {
        let h = CoefficientMatrix::tridiagonal(3, 1.0, 0.0).unwrap();
        let p = ThermoParams::new(0.0, 0.0).unwrap();
        let ts = build_thermo_state(&h, &p, MpsOptions::default()).unwrap();
        let amp = ts.state.amplitude(&[0u8; 6]).unwrap();
        assert_abs_diff_eq!(amp.re, 1.0, epsilon = 1e-12);
        let xi = partition_function_from_state(&ts.state).unwrap();
        assert_abs_diff_eq!(xi.xi, 8.0, epsilon = 1e-9);
    }

    #[test]
    fn single_mode_amplitudes_follow_the_pair_formula() {
        let eps = 0.83;
        let h = CoefficientMatrix::new(array![[eps]]).unwrap();
        let p = ThermoParams::new(1.3, 0.2).unwrap();
        let ts = build_thermo_state(&h, &p, MpsOptions::default()).unwrap();
        let r = p.beta_mu() - p.beta() * eps;
        let alpha = 2.0 * r;
        assert_abs_diff_eq!(ts.factorization.alpha[0], alpha, epsilon = 1e-12);
        let a0 = r / 2.0;
        let amp00 = ts.reduced.amplitude(&[0, 0]).unwrap();
        let amp11 = ts.reduced.amplitude(&[1, 1]).unwrap();
        assert_abs_diff_eq!(amp00.re, a0.exp() * (alpha / 4.0).cosh(), epsilon = 1e-12);
        assert_abs_diff_eq!(amp11.re, a0.exp() * (alpha / 4.0).sinh(), epsilon = 1e-12);
        // Ξ = 1 + e^{-β(ε-μ)}.
        let xi = partition_function_from_state(&ts.state).unwrap();
        assert_abs_diff_eq!(xi.xi, 1.0 + r.exp(), epsilon = 1e-12);
    }

    #[test]
    fn reduced_state_matches_the_diagonal_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let h = random_symmetric(2, &mut rng);
        let p = ThermoParams::new(0.7, 0.3).unwrap();
        let ts = build_thermo_state(&h, &p, MpsOptions::default()).unwrap();
        // The reduced state is the thermal state of the diagonalized
        // Hamiltonian.
        let diag: Vec<f64> = ts.spectrum.eigenvalues.iter().copied().collect();
        let hd = CoefficientMatrix::diagonal(&diag).unwrap();
        let oracle = dense_thermo_oracle(&hd, &p).unwrap();
        let dense = ts.reduced.to_dense().unwrap();
        for (got, want) in dense.iter().zip(oracle.iter()) {
            assert!((got - C64::new(*want, 0.0)).norm() <= 1e-9);
        }
    }

    #[test]
    fn unfolded_state_matches_the_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let h = random_symmetric(3, &mut rng);
        let p = ThermoParams::new(0.5, 0.2).unwrap();
        let ts = build_thermo_state(&h, &p, MpsOptions::default()).unwrap();
        compare_to_oracle(&ts, &h, &p, 1e-9);
        assert!(ts.state.canonicality_deviation() < 1e-9);
    }

    #[test]
    fn empty_schedule_leaves_the_reduced_state_unchanged() {
        // A single diagonal site folds trivially.
        let h = CoefficientMatrix::diagonal(&[-0.9]).unwrap();
        let p = ThermoParams::new(1.1, 0.3).unwrap();
        let ts = build_thermo_state(&h, &p, MpsOptions::default()).unwrap();
        assert!(ts.schedule.is_empty());
        let a = ts.state.to_dense().unwrap();
        let b = ts.reduced.to_dense().unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_abs_diff_eq!((x - y).norm(), 0.0, epsilon = 1e-12);
        }
        // Diagonal h at any size still reproduces the dense oracle; the
        // schedule may be a pair permutation when the spectrum reorders.
        let h = CoefficientMatrix::diagonal(&[0.4, -0.9]).unwrap();
        let ts = build_thermo_state(&h, &p, MpsOptions::default()).unwrap();
        compare_to_oracle(&ts, &h, &p, 1e-10);
    }

    #[test]
    fn unfolding_preserves_the_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        let h = random_symmetric(4, &mut rng);
        let p = ThermoParams::new(0.9, -0.2).unwrap();
        let ts = build_thermo_state(&h, &p, MpsOptions::default()).unwrap();
        assert_abs_diff_eq!(
            ts.state.log_norm(),
            ts.reduced.log_norm(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn partition_function_three_way_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        for n in [2usize, 3, 4] {
            let h = random_symmetric(n, &mut rng);
            for beta in [0.0, 0.5, 1.7] {
                let p = ThermoParams::new(beta, 0.4).unwrap();
                let ts = build_thermo_state(&h, &p, MpsOptions::default()).unwrap();
                let [a, b, c] = partition_three_way(&ts).unwrap();
                assert_abs_diff_eq!(a.log_xi, b.log_xi, epsilon = 1e-9);
                assert_abs_diff_eq!(b.log_xi, c.log_xi, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn alpha_matching_recovers_the_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(89);
        let h = random_symmetric(5, &mut rng);
        let p = ThermoParams::new(1.2, 0.1).unwrap();
        let ts = build_thermo_state(&h, &p, MpsOptions::default()).unwrap();
        let mut lhs: Vec<f64> = ts.factorization.alpha.iter().map(|a| -a / 2.0).collect();
        let mut rhs: Vec<f64> = ts
            .spectrum
            .eigenvalues
            .iter()
            .map(|&e| p.beta() * e - p.beta_mu())
            .collect();
        lhs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rhs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (x, y) in lhs.iter().zip(rhs.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-9);
        }
    }

    #[test]
    fn occupations_match_fermi_dirac() {
        // Two-site hopping: ε = ∓1, f = (1/(e^{-1}+1), 1/(e+1)).
        let h = CoefficientMatrix::tridiagonal(2, 1.0, 0.0).unwrap();
        let p = ThermoParams::new(1.0, 0.0).unwrap();
        let ts = build_thermo_state(&h, &p, MpsOptions::default()).unwrap();
        let occ = occupations_from_reduced(&ts).unwrap();
        assert_abs_diff_eq!(occ[0], 1.0 / ((-1.0f64).exp() + 1.0), epsilon = 1e-10);
        assert_abs_diff_eq!(occ[1], 1.0 / (1.0f64.exp() + 1.0), epsilon = 1e-10);

        // β = 0 gives half filling everywhere.
        let p0 = ThermoParams::new(0.0, 0.0).unwrap();
        let ts0 = build_thermo_state(&h, &p0, MpsOptions::default()).unwrap();
        for f in occupations_from_reduced(&ts0).unwrap() {
            assert_abs_diff_eq!(f, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn oracle_reduces_to_the_identity_string_at_beta_zero() {
        let h = CoefficientMatrix::tridiagonal(2, 1.0, 0.0).unwrap();
        let p = ThermoParams::new(0.0, 0.0).unwrap();
        let v = dense_thermo_oracle(&h, &p).unwrap();
        assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-13);
        for t in 1..v.len() {
            assert_abs_diff_eq!(v[t], 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn oracle_guard_rejects_large_systems() {
        let h = CoefficientMatrix::tridiagonal(7, 1.0, 0.0).unwrap();
        let p = ThermoParams::new(1.0, 0.0).unwrap();
        assert!(matches!(
            dense_thermo_oracle(&h, &p),
            Err(Error::ResourceGuard { .. })
        ));
    }

    #[test]
    fn large_beta_stays_finite_in_log_space() {
        let h = CoefficientMatrix::tridiagonal(3, 1.0, 0.0).unwrap();
        let p = ThermoParams::new(2000.0, 0.5).unwrap();
        let ts = build_thermo_state(&h, &p, MpsOptions::default()).unwrap();
        let amps = reduced_pair_amplitudes(&ts.factorization.alpha);
        for (cosh, sinh) in &amps {
            assert!(cosh.log_abs.is_finite());
            assert!(sinh.log_abs.is_finite() || sinh.log_abs == f64::NEG_INFINITY);
        }
        let [a, b, c] = partition_three_way(&ts).unwrap();
        assert!(a.log_xi.is_finite());
        assert_abs_diff_eq!(a.log_xi, b.log_xi, epsilon = 1e-6 * b.log_xi.abs());
        assert_abs_diff_eq!(c.log_xi, b.log_xi, epsilon = 1e-6 * b.log_xi.abs());
    }
}
