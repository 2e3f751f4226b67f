//! Canonical matrix-product states over the second-space Fock basis.
//!
//! A state over `n` fermionic sites (always `n = 2N`, two Majorana slots per
//! physical mode) is stored in the Schmidt canonical form
//!
//! ```text
//! |ρ) = Σ λ^{L-1}_μ Γ^{k L}_{μν} λ^L_ν |μ) |k) |ν),
//! ```
//!
//! one `Γ` tensor per site with axes `[left bond, k, right bond]` and one
//! Schmidt vector `λ` per interior bond. Schmidt vectors are kept
//! nonnegative and descending, the mantissa state is normalized to unit
//! Euclidean norm, and the physical magnitude of the state is carried
//! separately as `log_scale`, so `amplitude = contraction * exp(log_scale)`.
//! This keeps thermal states with very large or very small partition
//! functions representable.
//!
//! Two-site unitary gates are applied with the standard local update:
//! contract the two sites with their boundary Schmidt vectors, apply the
//! gate, split with an SVD, and divide the boundary Schmidt vectors back
//! out. Schmidt values below `max(τ, 1e-14)` relative to the largest value
//! at the bond are dropped; in exact mode (`τ = 0`) exceeding the bond cap
//! `χ` is an error rather than a silent truncation.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, Array3};
use ndarray_linalg::{JobSvd, SVDDC};
use num_complex::Complex64 as C64;

use crate::{Error, Result};

/// Relative floor under which Schmidt values are treated as numerical zeros.
const SCHMIDT_FLOOR: f64 = 1e-14;

/// Bond cap and truncation threshold for MPS operations.
///
/// `trunc_tol` is relative to the largest Schmidt value at the bond;
/// `trunc_tol = 0` is exact mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpsOptions {
    pub chi_max: usize,
    pub trunc_tol: f64,
}

impl Default for MpsOptions {
    fn default() -> Self {
        Self {
            chi_max: 256,
            trunc_tol: 0.0,
        }
    }
}

/// Two-site operator on adjacent sites in the ordered local basis
/// `|00), |01), |10), |11)`.
///
/// Gates must conserve occupation parity: entries connecting the even block
/// `{|00), |11)}` with the odd block `{|01), |10)}` must be exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSiteGate {
    m: Array2<C64>,
    unitary: bool,
}

impl TwoSiteGate {
    pub fn new(m: Array2<C64>) -> Result<Self> {
        if m.dim() != (4, 4) {
            return Err(Error::DimensionMismatch {
                context: "two-site gate",
                expected: 4,
                got: m.nrows(),
            });
        }
        let parity = |i: usize| (i.count_ones() % 2) as usize;
        let mut off = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                if parity(i) != parity(j) {
                    off = off.max(m[[i, j]].norm());
                }
            }
        }
        if off != 0.0 {
            return Err(Error::GateParity { dev: off });
        }
        // Unitarity flag: g† g = 1 within 1e-12.
        let mut dev = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..4 {
                    acc += m[[k, i]].conj() * m[[k, j]];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((acc - expect).norm());
            }
        }
        Ok(Self {
            m,
            unitary: dev <= 1e-12,
        })
    }

    pub fn identity() -> Self {
        let mut m = Array2::zeros((4, 4));
        for i in 0..4 {
            m[[i, i]] = C64::new(1.0, 0.0);
        }
        Self { m, unitary: true }
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.m
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary
    }
}

/// Second-space image of the Majorana plane rotation `exp(θ/2 γ_j γ_{j+1})`
/// acting by conjugation, as a gate on adjacent sites `(left_site,
/// left_site + 1)` (0-based).
///
/// The gate is `exp(iθ s (c†_{j+1} c_j + c†_j c_{j+1}))` with
/// `s = (-1)^{left_site}`: identity on `{|00), |11)}` and a rotation mixing
/// `|01), |10)`.
pub fn majorana_plane_gate(left_site: usize, theta: f64) -> TwoSiteGate {
    let s = if left_site % 2 == 0 { 1.0 } else { -1.0 };
    let (sin, cos) = theta.sin_cos();
    let mut m = Array2::zeros((4, 4));
    m[[0, 0]] = C64::new(1.0, 0.0);
    m[[3, 3]] = C64::new(1.0, 0.0);
    m[[1, 1]] = C64::new(cos, 0.0);
    m[[2, 2]] = C64::new(cos, 0.0);
    m[[1, 2]] = C64::new(0.0, s * sin);
    m[[2, 1]] = C64::new(0.0, s * sin);
    TwoSiteGate { m, unitary: true }
}

/// Canonical matrix-product state; see the module documentation for the
/// storage conventions.
#[derive(Debug, Clone)]
pub struct CanonicalMps {
    gammas: Vec<Array3<C64>>,
    lambdas: Vec<Array1<f64>>,
    log_scale: f64,
    options: MpsOptions,
    truncation_weight: f64,
}

/// Result of one SVD split: left factor, kept Schmidt values (unit norm),
/// right factor, log of the kept norm, discarded relative weight.
struct Split {
    u: Array2<C64>,
    s: Array1<f64>,
    vh: Array2<C64>,
    log_norm: f64,
    discarded: f64,
}

/// SVD with deterministic phase gauge, relative floor/truncation and bond
/// cap. Returns an error in exact mode if the rank exceeds the cap.
fn split_matrix(m: &Array2<C64>, opts: &MpsOptions, bond: usize) -> Result<Split> {
    let (u_opt, s, vh_opt) = m.svddc(JobSvd::Some)?;
    let mut u = u_opt.expect("svd with u requested");
    let mut vh = vh_opt.expect("svd with vh requested");
    let s_max = s[0];
    if !(s_max > 0.0) || !s_max.is_finite() {
        return Err(Error::Integrity {
            context: "svd of a zero or non-finite block",
            dev: s_max,
        });
    }
    let drop_tol = s_max * opts.trunc_tol.max(SCHMIDT_FLOOR);
    let mut rank = s.iter().take_while(|v| **v > drop_tol).count().max(1);
    let full_weight: f64 = s.iter().map(|v| v * v).sum();
    if rank > opts.chi_max {
        if opts.trunc_tol == 0.0 {
            return Err(Error::BondOverflow {
                bond,
                needed: rank,
                cap: opts.chi_max,
            });
        }
        rank = opts.chi_max;
    }
    let kept_weight: f64 = s.iter().take(rank).map(|v| v * v).sum();
    let discarded = (full_weight - kept_weight).max(0.0) / full_weight;
    let norm = kept_weight.sqrt();

    let mut s_kept = Array1::zeros(rank);
    for i in 0..rank {
        s_kept[i] = s[i] / norm;
    }
    // Phase gauge: largest-magnitude entry of each kept left vector made
    // real positive, compensated on the right factor.
    for c in 0..rank {
        let mut pivot = 0;
        for r in 0..u.nrows() {
            if u[[r, c]].norm() > u[[pivot, c]].norm() {
                pivot = r;
            }
        }
        let mag = u[[pivot, c]].norm();
        if mag > 0.0 {
            let phase = u[[pivot, c]] / mag;
            for r in 0..u.nrows() {
                u[[r, c]] /= phase;
            }
            for col in 0..vh.ncols() {
                vh[[c, col]] *= phase;
            }
        }
    }
    let u = u.slice(ndarray::s![.., ..rank]).to_owned();
    let vh = vh.slice(ndarray::s![..rank, ..]).to_owned();
    Ok(Split {
        u,
        s: s_kept,
        vh,
        log_norm: norm.ln(),
        discarded,
    })
}

impl CanonicalMps {
    /// Pair-product state `scale · ⊗_l [ a_l |00) + b_l |11) ]` over
    /// `2 · pairs.len()` sites with the stated bond layout: dimension at
    /// most 2 inside a pair, 1 between pairs.
    pub fn product_state(pairs: &[(C64, C64)], scale: f64, options: MpsOptions) -> Result<Self> {
        if !scale.is_finite() || scale == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "product state scale must be finite and nonzero, got {scale}"
            )));
        }
        let log_scale = scale.abs().ln();
        let mut signed = pairs.to_vec();
        if scale < 0.0 {
            signed[0].0 = -signed[0].0;
            signed[0].1 = -signed[0].1;
        }
        Self::product_state_log(&signed, log_scale, options)
    }

    /// Same as [`Self::product_state`] with the scale given directly as a
    /// log magnitude; used when `scale` itself would overflow.
    pub fn product_state_log(
        pairs: &[(C64, C64)],
        log_scale: f64,
        options: MpsOptions,
    ) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidParameter("empty pair list".into()));
        }
        let mut tensors = Vec::with_capacity(2 * pairs.len());
        for &(a, b) in pairs {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::NonFinite {
                    context: "pair amplitudes",
                });
            }
            if a.norm() == 0.0 && b.norm() == 0.0 {
                return Err(Error::InvalidParameter(
                    "pair amplitudes must not both vanish".into(),
                ));
            }
            let mut left = Array3::zeros((1, 2, 2));
            left[[0, 0, 0]] = a;
            left[[0, 1, 1]] = b;
            let mut right = Array3::zeros((2, 2, 1));
            right[[0, 0, 0]] = C64::new(1.0, 0.0);
            right[[1, 1, 0]] = C64::new(1.0, 0.0);
            tensors.push(left);
            tensors.push(right);
        }
        Self::from_raw_train(tensors, log_scale, options)
    }

    /// Factorizes a dense second-space vector (length `2^n`, site 0 the
    /// least significant bit) into canonical form.
    pub fn from_dense(dense: &Array1<C64>, n_sites: usize, options: MpsOptions) -> Result<Self> {
        if n_sites == 0 || dense.len() != 1usize << n_sites {
            return Err(Error::DimensionMismatch {
                context: "dense state factorization",
                expected: 1usize << n_sites,
                got: dense.len(),
            });
        }
        // Reorder so that site 0 is the slowest index for row-major splits.
        let mut data = Array1::zeros(dense.len());
        for idx in 0..dense.len() {
            let mut rev = 0usize;
            for s in 0..n_sites {
                if idx & (1 << s) != 0 {
                    rev |= 1 << (n_sites - 1 - s);
                }
            }
            data[rev] = dense[idx];
        }
        let mut tensors = Vec::with_capacity(n_sites);
        let mut log_scale = 0.0;
        let mut rest = Array2::from_shape_fn((1, data.len()), |(_, j)| data[j]);
        for site in 0..n_sites - 1 {
            let rows = rest.nrows() * 2;
            let cols = rest.len() / rows;
            let m = Array2::from_shape_fn((rows, cols), |(i, j)| {
                rest[[i / 2, (i % 2) * cols + j]]
            });
            let split = split_matrix(&m, &options, site)?;
            let rank = split.s.len();
            let mut g = Array3::zeros((rest.nrows(), 2, rank));
            for i in 0..rows {
                for r in 0..rank {
                    g[[i / 2, i % 2, r]] = split.u[[i, r]];
                }
            }
            tensors.push(g);
            log_scale += split.log_norm;
            let mut carry = Array2::zeros((rank, cols));
            for r in 0..rank {
                for j in 0..cols {
                    carry[[r, j]] = split.s[r] * split.vh[[r, j]];
                }
            }
            rest = carry;
        }
        let rank = rest.nrows();
        let mut g = Array3::zeros((rank, 2, 1));
        for r in 0..rank {
            g[[r, 0, 0]] = rest[[r, 0]];
            g[[r, 1, 0]] = rest[[r, 1]];
        }
        tensors.push(g);
        Self::from_raw_train(tensors, log_scale, options)
    }

    /// Canonicalizes an arbitrary tensor train (amplitude = plain product of
    /// the site tensors times `exp(log_scale)`).
    fn from_raw_train(
        mut tensors: Vec<Array3<C64>>,
        mut log_scale: f64,
        options: MpsOptions,
    ) -> Result<Self> {
        let n = tensors.len();
        if n < 2 {
            return Err(Error::InvalidParameter(
                "a matrix-product state needs at least two sites".into(),
            ));
        }
        // Left sweep: make every tensor but the last left-isometric.
        for site in 0..n - 1 {
            let (dl, _, dr) = tensors[site].dim();
            let m = Array2::from_shape_fn((dl * 2, dr), |(i, j)| tensors[site][[i / 2, i % 2, j]]);
            let split = split_matrix(&m, &options, site)?;
            let rank = split.s.len();
            let mut g = Array3::zeros((dl, 2, rank));
            for i in 0..dl * 2 {
                for r in 0..rank {
                    g[[i / 2, i % 2, r]] = split.u[[i, r]];
                }
            }
            tensors[site] = g;
            log_scale += split.log_norm;
            // carry = s · vh into the next site.
            let (nl, _, nr) = tensors[site + 1].dim();
            debug_assert_eq!(nl, dr);
            let mut next = Array3::zeros((rank, 2, nr));
            for r in 0..rank {
                for k in 0..2 {
                    for j in 0..nr {
                        let mut acc = C64::new(0.0, 0.0);
                        for q in 0..dr {
                            acc += split.s[r] * split.vh[[r, q]] * tensors[site + 1][[q, k, j]];
                        }
                        next[[r, k, j]] = acc;
                    }
                }
            }
            tensors[site + 1] = next;
        }
        // Right sweep: extract Schmidt vectors, leave right-isometric parts.
        let mut lambdas: Vec<Array1<f64>> = vec![Array1::zeros(0); n - 1];
        for site in (1..n).rev() {
            let (dl, _, dr) = tensors[site].dim();
            let m = Array2::from_shape_fn((dl, 2 * dr), |(i, j)| tensors[site][[i, j / dr, j % dr]]);
            let split = split_matrix(&m, &options, site - 1)?;
            let rank = split.s.len();
            let mut b = Array3::zeros((rank, 2, dr));
            for r in 0..rank {
                for j in 0..2 * dr {
                    b[[r, j / dr, j % dr]] = split.vh[[r, j]];
                }
            }
            tensors[site] = b;
            lambdas[site - 1] = split.s.clone();
            log_scale += split.log_norm;
            // Absorb u · s into the previous site.
            let (pl, _, pr) = tensors[site - 1].dim();
            debug_assert_eq!(pr, dl);
            let mut prev = Array3::zeros((pl, 2, rank));
            for i in 0..pl {
                for k in 0..2 {
                    for r in 0..rank {
                        let mut acc = C64::new(0.0, 0.0);
                        for q in 0..dl {
                            acc += tensors[site - 1][[i, k, q]] * split.u[[q, r]] * split.s[r];
                        }
                        prev[[i, k, r]] = acc;
                    }
                }
            }
            tensors[site - 1] = prev;
        }
        // Convert to Γ form: divide the right-bond Schmidt vector out of each
        // tensor except the last.
        for site in 0..n - 1 {
            let lam = &lambdas[site];
            let (dl, _, dr) = tensors[site].dim();
            debug_assert_eq!(dr, lam.len());
            for i in 0..dl {
                for k in 0..2 {
                    for j in 0..dr {
                        tensors[site][[i, k, j]] /= lam[j];
                    }
                }
            }
        }
        Ok(Self {
            gammas: tensors,
            lambdas,
            log_scale,
            options,
            truncation_weight: 0.0,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.gammas.len()
    }

    pub fn options(&self) -> MpsOptions {
        self.options
    }

    /// Interior bond dimensions.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.lambdas.iter().map(|l| l.len()).collect()
    }

    pub fn lambda(&self, bond: usize) -> &Array1<f64> {
        &self.lambdas[bond]
    }

    /// Log of the physical norm of the state.
    pub fn log_norm(&self) -> f64 {
        let mantissa: f64 = self.lambdas[0].iter().map(|v| v * v).sum();
        self.log_scale + 0.5 * mantissa.ln()
    }

    /// Physical norm; may overflow to `+∞` for extreme `log_scale`.
    pub fn norm(&self) -> f64 {
        self.log_norm().exp()
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// Multiplies the state by `exp(delta)`.
    pub fn scale_log(&mut self, delta: f64) {
        self.log_scale += delta;
    }

    /// Cumulative relative Schmidt weight discarded by truncation.
    pub fn truncation_weight(&self) -> f64 {
        self.truncation_weight
    }

    /// Site tensor with the right-bond Schmidt vector absorbed (plain
    /// product form).
    fn b_tensor(&self, site: usize) -> Array3<C64> {
        let g = &self.gammas[site];
        if site + 1 == self.n_sites() {
            return g.clone();
        }
        let lam = &self.lambdas[site];
        let (dl, _, dr) = g.dim();
        let mut b = Array3::zeros((dl, 2, dr));
        for i in 0..dl {
            for k in 0..2 {
                for j in 0..dr {
                    b[[i, k, j]] = g[[i, k, j]] * lam[j];
                }
            }
        }
        b
    }

    /// Coefficient of the Fock basis ket with the given occupations
    /// (`bits.len() == n_sites`, entries 0 or 1), including the scale.
    pub fn amplitude(&self, bits: &[u8]) -> Result<C64> {
        let (mantissa, log) = self.amplitude_parts(bits)?;
        Ok(mantissa * log.exp())
    }

    /// Amplitude as `(mantissa, log_scale)` with `amplitude = mantissa *
    /// exp(log_scale)`.
    pub fn amplitude_parts(&self, bits: &[u8]) -> Result<(C64, f64)> {
        if bits.len() != self.n_sites() {
            return Err(Error::DimensionMismatch {
                context: "amplitude bitstring",
                expected: self.n_sites(),
                got: bits.len(),
            });
        }
        let mut row: Array1<C64> = Array1::from_elem(1, C64::new(1.0, 0.0));
        for (site, &bit) in bits.iter().enumerate() {
            let b = self.b_tensor(site);
            let (dl, _, dr) = b.dim();
            debug_assert_eq!(dl, row.len());
            let mut next = Array1::zeros(dr);
            for j in 0..dr {
                let mut acc = C64::new(0.0, 0.0);
                for i in 0..dl {
                    acc += row[i] * b[[i, bit as usize, j]];
                }
                next[j] = acc;
            }
            row = next;
        }
        Ok((row[0], self.log_scale))
    }

    /// Dense second-space vector (site 0 = least significant bit), including
    /// the scale. Guarded to 12 sites.
    pub fn to_dense(&self) -> Result<Array1<C64>> {
        let n = self.n_sites();
        if n > 12 {
            return Err(Error::ResourceGuard {
                context: "dense expansion of a matrix-product state",
                n,
                max: 12,
            });
        }
        let scale = self.log_scale.exp();
        // carry[(prefix index), bond] built site by site.
        let mut carry: Array2<C64> = Array2::from_elem((1, 1), C64::new(1.0, 0.0));
        for site in 0..n {
            let b = self.b_tensor(site);
            let (dl, _, dr) = b.dim();
            let rows = carry.nrows();
            let mut next = Array2::zeros((rows * 2, dr));
            for p in 0..rows {
                for k in 0..2 {
                    for j in 0..dr {
                        let mut acc = C64::new(0.0, 0.0);
                        for i in 0..dl {
                            acc += carry[[p, i]] * b[[i, k, j]];
                        }
                        // bit `site` toggles stride 2^site in the output.
                        next[[p + k * rows, j]] = acc;
                    }
                }
            }
            carry = next;
        }
        let dim = 1usize << n;
        let mut out = Array1::zeros(dim);
        for idx in 0..dim {
            out[idx] = carry[[idx, 0]] * scale;
        }
        Ok(out)
    }

    /// Hermitian inner product `(self | other)`, scales included.
    pub fn inner_product(&self, other: &Self) -> Result<C64> {
        let (mantissa, log) = self.inner_product_parts(other)?;
        Ok(mantissa * log.exp())
    }

    /// Inner product as `(mantissa, log)` with the value `mantissa *
    /// exp(log)`.
    pub fn inner_product_parts(&self, other: &Self) -> Result<(C64, f64)> {
        inner_with_ops(self, &[], other, &[])
            .map(|m| (m, self.log_scale + other.log_scale))
    }

    /// Overlap of the two states normalized to unit vectors:
    /// `|(self|other)| / (‖self‖ ‖other‖)`.
    pub fn normalized_overlap(&self, other: &Self) -> Result<f64> {
        let (mantissa, _) = self.inner_product_parts(other)?;
        let n1: f64 = self.lambdas[0].iter().map(|v| v * v).sum();
        let n2: f64 = other.lambdas[0].iter().map(|v| v * v).sum();
        Ok(mantissa.norm() / (n1 * n2).sqrt())
    }

    /// Applies a parity-conserving unitary gate to sites `(left_site,
    /// left_site + 1)` and restores canonical form locally.
    pub fn apply_two_site_gate(&mut self, left_site: usize, gate: &TwoSiteGate) -> Result<()> {
        let n = self.n_sites();
        if left_site + 1 >= n {
            return Err(Error::PlaneOutOfRange {
                plane: left_site,
                dim: n,
            });
        }
        let lam_left: Array1<f64> = if left_site == 0 {
            Array1::ones(1)
        } else {
            self.lambdas[left_site - 1].clone()
        };
        let lam_right: Array1<f64> = if left_site + 2 == n {
            Array1::ones(1)
        } else {
            self.lambdas[left_site + 1].clone()
        };
        let g1 = &self.gammas[left_site];
        let g2 = &self.gammas[left_site + 1];
        let lam_mid = &self.lambdas[left_site];
        let (dl, _, dm) = g1.dim();
        let (_, _, dr) = g2.dim();

        // theta[(μ k), (k' ν)] with all boundary Schmidt vectors attached.
        let mut theta = Array2::zeros((dl * 2, 2 * dr));
        for mu in 0..dl {
            for k in 0..2 {
                for kp in 0..2 {
                    for nu in 0..dr {
                        let mut acc = C64::new(0.0, 0.0);
                        for rho in 0..dm {
                            acc += g1[[mu, k, rho]] * lam_mid[rho] * g2[[rho, kp, nu]];
                        }
                        theta[[mu * 2 + k, kp * dr + nu]] =
                            acc * lam_left[mu] * lam_right[nu];
                    }
                }
            }
        }
        // Gate action on the joint physical index.
        let gm = gate.matrix();
        let mut rotated = Array2::zeros((dl * 2, 2 * dr));
        for mu in 0..dl {
            for nu in 0..dr {
                for k in 0..2 {
                    for kp in 0..2 {
                        let row = 2 * k + kp;
                        let mut acc = C64::new(0.0, 0.0);
                        for q in 0..2 {
                            for qp in 0..2 {
                                let col = 2 * q + qp;
                                if gm[[row, col]] != C64::new(0.0, 0.0) {
                                    acc += gm[[row, col]] * theta[[mu * 2 + q, qp * dr + nu]];
                                }
                            }
                        }
                        rotated[[mu * 2 + k, kp * dr + nu]] = acc;
                    }
                }
            }
        }
        let split = split_matrix(&rotated, &self.options, left_site)?;
        let rank = split.s.len();
        self.truncation_weight += split.discarded;
        self.log_scale += split.log_norm;
        let mut new_g1 = Array3::zeros((dl, 2, rank));
        for i in 0..dl * 2 {
            for r in 0..rank {
                new_g1[[i / 2, i % 2, r]] = split.u[[i, r]] / lam_left[i / 2];
            }
        }
        let mut new_g2 = Array3::zeros((rank, 2, dr));
        for r in 0..rank {
            for j in 0..2 * dr {
                new_g2[[r, j / dr, j % dr]] = split.vh[[r, j]] / lam_right[j % dr];
            }
        }
        self.gammas[left_site] = new_g1;
        self.gammas[left_site + 1] = new_g2;
        self.lambdas[left_site] = split.s;
        Ok(())
    }

    /// Largest deviation from the Schmidt transfer identities over all bonds.
    pub fn canonicality_deviation(&self) -> f64 {
        let n = self.n_sites();
        let norm_sq: f64 = self.lambdas[0].iter().map(|v| v * v).sum();
        let mut dev: f64 = 0.0;
        // Bond-independent norm.
        for lam in &self.lambdas {
            let s: f64 = lam.iter().map(|v| v * v).sum();
            dev = dev.max((s - norm_sq).abs());
            // Nonnegative, descending.
            for w in lam.windows(2) {
                if w[1] > w[0] {
                    dev = dev.max(w[1] - w[0]);
                }
            }
            if lam.iter().any(|v| *v < 0.0) {
                dev = dev.max(1.0);
            }
        }
        // With the mantissa at unit norm, both transfer identities reduce to
        // the identity matrix: Σ_{μk} λL_μ² Γ̄_{μν} Γ_{μν'} = δ (left, the
        // Schmidt vectors built from the left are orthonormal) and
        // Σ_{νk} Γ_{μν} Γ̄_{μ'ν} λR_ν² = δ (right).
        let mut lam_left: Array1<f64> = Array1::ones(1);
        for site in 0..n {
            let g = &self.gammas[site];
            let (dl, _, dr) = g.dim();
            for nu in 0..dr {
                for nup in 0..dr {
                    let mut acc = C64::new(0.0, 0.0);
                    for mu in 0..dl {
                        let w = lam_left[mu] * lam_left[mu];
                        for k in 0..2 {
                            acc += g[[mu, k, nu]].conj() * g[[mu, k, nup]] * w;
                        }
                    }
                    let expect = if nu == nup { 1.0 } else { 0.0 };
                    dev = dev.max((acc - expect).norm());
                }
            }
            if site + 1 < n {
                lam_left = self.lambdas[site].clone();
            }
        }
        let mut lam_right: Array1<f64> = Array1::ones(1);
        for site in (0..n).rev() {
            let g = &self.gammas[site];
            let (dl, _, dr) = g.dim();
            for mu in 0..dl {
                for mup in 0..dl {
                    let mut acc = C64::new(0.0, 0.0);
                    for nu in 0..dr {
                        let w = lam_right[nu] * lam_right[nu];
                        for k in 0..2 {
                            acc += g[[mu, k, nu]] * g[[mup, k, nu]].conj() * w;
                        }
                    }
                    let expect = if mu == mup { 1.0 } else { 0.0 };
                    dev = dev.max((acc - expect).norm());
                }
            }
            if site > 0 {
                lam_right = self.lambdas[site - 1].clone();
            }
        }
        dev
    }

    /// Writes the state in the binary snapshot layout (see the README);
    /// the round trip is bit-exact.
    pub fn write_snapshot<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(b"LFMP")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.n_sites() as u32).to_le_bytes())?;
        w.write_all(&(self.options.chi_max as u32).to_le_bytes())?;
        w.write_all(&self.options.trunc_tol.to_le_bytes())?;
        w.write_all(&self.log_scale.to_le_bytes())?;
        w.write_all(&self.truncation_weight.to_le_bytes())?;
        for g in &self.gammas {
            let (dl, dk, dr) = g.dim();
            w.write_all(&(dl as u32).to_le_bytes())?;
            w.write_all(&(dk as u32).to_le_bytes())?;
            w.write_all(&(dr as u32).to_le_bytes())?;
            for v in g.iter() {
                w.write_all(&v.re.to_le_bytes())?;
                w.write_all(&v.im.to_le_bytes())?;
            }
        }
        for lam in &self.lambdas {
            w.write_all(&(lam.len() as u32).to_le_bytes())?;
            for v in lam.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a snapshot produced by [`Self::write_snapshot`].
    pub fn read_snapshot<R: Read>(r: &mut R) -> Result<Self> {
        fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        }
        fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        }
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"LFMP" {
            return Err(Error::SnapshotFormat("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != 1 {
            return Err(Error::SnapshotFormat(format!(
                "unsupported version {version}"
            )));
        }
        let n = read_u32(r)? as usize;
        if n < 2 {
            return Err(Error::SnapshotFormat(format!("bad site count {n}")));
        }
        let chi_max = read_u32(r)? as usize;
        let trunc_tol = read_f64(r)?;
        let log_scale = read_f64(r)?;
        let truncation_weight = read_f64(r)?;
        let mut gammas = Vec::with_capacity(n);
        for _ in 0..n {
            let dl = read_u32(r)? as usize;
            let dk = read_u32(r)? as usize;
            let dr = read_u32(r)? as usize;
            if dk != 2 {
                return Err(Error::SnapshotFormat(format!("bad local dimension {dk}")));
            }
            let mut g = Array3::zeros((dl, 2, dr));
            for i in 0..dl {
                for k in 0..2 {
                    for j in 0..dr {
                        let re = read_f64(r)?;
                        let im = read_f64(r)?;
                        g[[i, k, j]] = C64::new(re, im);
                    }
                }
            }
            gammas.push(g);
        }
        let mut lambdas = Vec::with_capacity(n - 1);
        for _ in 0..n - 1 {
            let len = read_u32(r)? as usize;
            let mut lam = Array1::zeros(len);
            for i in 0..len {
                lam[i] = read_f64(r)?;
            }
            lambdas.push(lam);
        }
        // Structural consistency.
        for site in 0..n {
            let (dl, _, dr) = gammas[site].dim();
            let want_l = if site == 0 { 1 } else { lambdas[site - 1].len() };
            let want_r = if site + 1 == n { 1 } else { lambdas[site].len() };
            if dl != want_l || dr != want_r {
                return Err(Error::SnapshotFormat(format!(
                    "tensor dims at site {site} do not match bond lengths"
                )));
            }
        }
        Ok(Self {
            gammas,
            lambdas,
            log_scale,
            options: MpsOptions { chi_max, trunc_tol },
            truncation_weight,
        })
    }
}

/// Transfer-matrix contraction of `(bra | ops | ket)` with optional 2x2
/// operators inserted on specific sites (composed in application order if a
/// site appears more than once). Scales are not included.
pub(crate) fn inner_with_ops(
    bra: &CanonicalMps,
    bra_ops: &[(usize, [[C64; 2]; 2])],
    ket: &CanonicalMps,
    ket_ops: &[(usize, [[C64; 2]; 2])],
) -> Result<C64> {
    let n = bra.n_sites();
    if ket.n_sites() != n {
        return Err(Error::DimensionMismatch {
            context: "inner product",
            expected: n,
            got: ket.n_sites(),
        });
    }
    let site_op = |ops: &[(usize, [[C64; 2]; 2])], site: usize| -> Option<[[C64; 2]; 2]> {
        let mut acc: Option<[[C64; 2]; 2]> = None;
        for (s, op) in ops {
            if *s == site {
                acc = Some(match acc {
                    None => *op,
                    // Compose: later entries act after earlier ones.
                    Some(prev) => {
                        let mut out = [[C64::new(0.0, 0.0); 2]; 2];
                        for i in 0..2 {
                            for j in 0..2 {
                                for k in 0..2 {
                                    out[i][j] += op[i][k] * prev[k][j];
                                }
                            }
                        }
                        out
                    }
                });
            }
        }
        acc
    };
    let apply = |t: &Array3<C64>, op: Option<[[C64; 2]; 2]>| -> Array3<C64> {
        match op {
            None => t.clone(),
            Some(o) => {
                let (dl, _, dr) = t.dim();
                let mut out = Array3::zeros((dl, 2, dr));
                for i in 0..dl {
                    for j in 0..dr {
                        for k in 0..2 {
                            out[[i, k, j]] = o[k][0] * t[[i, 0, j]] + o[k][1] * t[[i, 1, j]];
                        }
                    }
                }
                out
            }
        }
    };
    let mut env: Array2<C64> = Array2::from_elem((1, 1), C64::new(1.0, 0.0));
    for site in 0..n {
        let tb = apply(&bra.b_tensor(site), site_op(bra_ops, site));
        let tk = apply(&ket.b_tensor(site), site_op(ket_ops, site));
        let (bl, _, br) = tb.dim();
        let (kl, _, kr) = tk.dim();
        let mut next = Array2::zeros((br, kr));
        for k in 0..2 {
            // next += tb^k† env tk^k
            for b2 in 0..br {
                for k2 in 0..kr {
                    let mut acc = C64::new(0.0, 0.0);
                    for b1 in 0..bl {
                        for k1 in 0..kl {
                            acc += tb[[b1, k, b2]].conj() * env[[b1, k1]] * tk[[k1, k, k2]];
                        }
                    }
                    next[[b2, k2]] += acc;
                }
            }
        }
        env = next;
    }
    Ok(env[[0, 0]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_pairs(n: usize, rng: &mut ChaCha8Rng) -> Vec<(C64, C64)> {
        (0..n)
            .map(|_| {
                (
                    c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                    c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                )
            })
            .collect()
    }

    /// Dense pair-product oracle with site 0 as least significant bit.
    fn dense_product(pairs: &[(C64, C64)], scale: f64) -> Array1<C64> {
        let n = 2 * pairs.len();
        let mut out = Array1::zeros(1usize << n);
        for idx in 0..out.len() {
            let mut amp = c(scale, 0.0);
            for (l, &(a, b)) in pairs.iter().enumerate() {
                let b1 = (idx >> (2 * l)) & 1;
                let b2 = (idx >> (2 * l + 1)) & 1;
                amp *= match (b1, b2) {
                    (0, 0) => a,
                    (1, 1) => b,
                    _ => c(0.0, 0.0),
                };
            }
            out[idx] = amp;
        }
        out
    }

    fn random_parity_unitary(rng: &mut ChaCha8Rng) -> TwoSiteGate {
        // Random unitaries on the even block {00, 11} and the odd block
        // {01, 10}, assembled into a parity-conserving 4x4.
        let block = |rng: &mut ChaCha8Rng| -> [[C64; 2]; 2] {
            // 2x2 unitary from a random complex matrix via Gram-Schmidt.
            let a = [
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            ];
            let mut b = [
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            ];
            let na = (a[0].norm_sqr() + a[1].norm_sqr()).sqrt();
            let a = [a[0] / na, a[1] / na];
            let proj = a[0].conj() * b[0] + a[1].conj() * b[1];
            b = [b[0] - proj * a[0], b[1] - proj * a[1]];
            let nb = (b[0].norm_sqr() + b[1].norm_sqr()).sqrt();
            let b = [b[0] / nb, b[1] / nb];
            [[a[0], b[0]], [a[1], b[1]]]
        };
        let even = block(rng);
        let odd = block(rng);
        let mut m = Array2::zeros((4, 4));
        let eidx = [0usize, 3];
        let oidx = [1usize, 2];
        for i in 0..2 {
            for j in 0..2 {
                m[[eidx[i], eidx[j]]] = even[i][j];
                m[[oidx[i], oidx[j]]] = odd[i][j];
            }
        }
        TwoSiteGate::new(m).unwrap()
    }

    fn dense_apply_gate(state: &Array1<C64>, _n: usize, left: usize, g: &TwoSiteGate) -> Array1<C64> {
        let mut out = Array1::zeros(state.len());
        let gm = g.matrix();
        for idx in 0..state.len() {
            let k = (idx >> left) & 1;
            let kp = (idx >> (left + 1)) & 1;
            // Local basis |k_left k_right) with row = 2 k_left + k_right.
            let col = 2 * k + kp;
            for row in 0..4 {
                let (nk, nkp) = (row / 2, row % 2);
                if gm[[row, col]] == c(0.0, 0.0) {
                    continue;
                }
                let mut nidx = idx & !((1 << left) | (1 << (left + 1)));
                nidx |= nk << left;
                nidx |= nkp << (left + 1);
                out[nidx] += gm[[row, col]] * state[idx];
            }
        }
        out
    }

    #[test]
    fn vacuum_product_state() {
        let pairs = vec![(c(1.0, 0.0), c(0.0, 0.0)); 3];
        let s = CanonicalMps::product_state(&pairs, 1.0, MpsOptions::default()).unwrap();
        assert_eq!(s.n_sites(), 6);
        let amp = s.amplitude(&[0; 6]).unwrap();
        assert_abs_diff_eq!(amp.re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(amp.im, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.norm(), 1.0, epsilon = 1e-12);
        assert!(s.canonicality_deviation() < 1e-12);
        // Zero-amplitude pair branch keeps the inside-pair bond at 1.
        assert_eq!(s.bond_dims(), vec![1; 5]);
    }

    #[test]
    fn single_pair_amplitudes_with_scale() {
        let alpha = 1.7f64;
        let a0 = -0.35f64;
        let pairs = vec![(c((alpha / 4.0).cosh(), 0.0), c((alpha / 4.0).sinh(), 0.0))];
        let s = CanonicalMps::product_state(&pairs, a0.exp(), MpsOptions::default()).unwrap();
        let amp00 = s.amplitude(&[0, 0]).unwrap();
        let amp11 = s.amplitude(&[1, 1]).unwrap();
        assert_abs_diff_eq!(amp00.re, a0.exp() * (alpha / 4.0).cosh(), epsilon = 1e-12);
        assert_abs_diff_eq!(amp11.re, a0.exp() * (alpha / 4.0).sinh(), epsilon = 1e-12);
        assert_abs_diff_eq!(s.amplitude(&[0, 1]).unwrap().norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn product_state_matches_kronecker_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let pairs = random_pairs(2, &mut rng);
        let s = CanonicalMps::product_state(&pairs, 0.8, MpsOptions::default()).unwrap();
        let dense = dense_product(&pairs, 0.8);
        let got = s.to_dense().unwrap();
        for (x, y) in got.iter().zip(dense.iter()) {
            assert_abs_diff_eq!((x - y).norm(), 0.0, epsilon = 1e-12);
        }
        assert!(s.canonicality_deviation() < 1e-10);
    }

    #[test]
    fn from_dense_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 6;
        let dense = Array1::from_shape_fn(1 << n, |_| {
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let s = CanonicalMps::from_dense(&dense, n, MpsOptions::default()).unwrap();
        let back = s.to_dense().unwrap();
        for (x, y) in back.iter().zip(dense.iter()) {
            assert_abs_diff_eq!((x - y).norm(), 0.0, epsilon = 1e-12);
        }
        assert!(s.canonicality_deviation() < 1e-10);
    }

    #[test]
    fn identity_gate_leaves_the_state_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let pairs = random_pairs(2, &mut rng);
        let mut s = CanonicalMps::product_state(&pairs, 1.0, MpsOptions::default()).unwrap();
        let before = s.to_dense().unwrap();
        for left in 0..3 {
            s.apply_two_site_gate(left, &TwoSiteGate::identity()).unwrap();
        }
        let after = s.to_dense().unwrap();
        for (x, y) in after.iter().zip(before.iter()) {
            assert_abs_diff_eq!((x - y).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn plane_gate_limits() {
        // θ = 0 is the identity.
        let g = majorana_plane_gate(0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!((g.matrix()[[i, j]] - expect).norm(), 0.0, epsilon = 1e-15);
            }
        }
        // θ = π applied twice is the identity.
        let g = majorana_plane_gate(1, std::f64::consts::PI);
        let sq = g.matrix().dot(g.matrix());
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!((sq[[i, j]] - expect).norm(), 0.0, epsilon = 1e-12);
            }
        }
        // Even and odd planes with the same angle are inverse gates.
        let ge = majorana_plane_gate(2, 0.3);
        let go = majorana_plane_gate(3, 0.3);
        let prod = ge.matrix().dot(go.matrix());
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!((prod[[i, j]] - expect).norm(), 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn plane_gate_matches_series_exponential() {
        // Oracle: exp(iθ s G) summed as a matrix power series, with G the
        // swap generator on {|01), |10)}.
        let theta = 0.3f64;
        for left in [0usize, 1] {
            let s = if left % 2 == 0 { 1.0 } else { -1.0 };
            let mut gen = Array2::<C64>::zeros((4, 4));
            gen[[1, 2]] = c(0.0, s * theta);
            gen[[2, 1]] = c(0.0, s * theta);
            let mut term = Array2::<C64>::eye(4);
            let mut series = Array2::<C64>::eye(4);
            for k in 1..40 {
                term = term.dot(&gen) / c(k as f64, 0.0);
                series = series + &term;
            }
            let g = majorana_plane_gate(left, theta);
            for i in 0..4 {
                for j in 0..4 {
                    assert_abs_diff_eq!(
                        (series[[i, j]] - g.matrix()[[i, j]]).norm(),
                        0.0,
                        epsilon = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn swap_phase_gate_fixes_the_vacuum() {
        let pairs = vec![(c(1.0, 0.0), c(0.0, 0.0)); 2];
        let mut s = CanonicalMps::product_state(&pairs, 1.0, MpsOptions::default()).unwrap();
        let g = majorana_plane_gate(1, std::f64::consts::FRAC_PI_2);
        s.apply_two_site_gate(1, &g).unwrap();
        let amp = s.amplitude(&[0, 0, 0, 0]).unwrap();
        assert_abs_diff_eq!((amp - c(1.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn random_gates_match_the_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let pairs = random_pairs(3, &mut rng);
        let mut s = CanonicalMps::product_state(&pairs, 1.0, MpsOptions::default()).unwrap();
        let mut dense = s.to_dense().unwrap();
        let n = 6;
        for _ in 0..12 {
            let left = rng.gen_range(0..n - 1);
            let g = random_parity_unitary(&mut rng);
            s.apply_two_site_gate(left, &g).unwrap();
            dense = dense_apply_gate(&dense, n, left, &g);
        }
        let got = s.to_dense().unwrap();
        for (x, y) in got.iter().zip(dense.iter()) {
            assert!((x - y).norm() <= 1e-10, "dense mismatch {:e}", (x - y).norm());
        }
        assert!(s.canonicality_deviation() < 1e-10);
        // Unitary gates preserve the norm.
        let dense_norm: f64 = dense.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert_abs_diff_eq!(s.norm(), dense_norm, epsilon = 1e-10);
    }

    #[test]
    fn exact_mode_reports_bond_overflow() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let pairs = random_pairs(2, &mut rng);
        let opts = MpsOptions {
            chi_max: 1,
            trunc_tol: 0.0,
        };
        let mut s = CanonicalMps::product_state(&pairs, 1.0, opts);
        // The pair bond already needs dimension 2 at construction time, or
        // the overflow shows up at the first entangling gate.
        if let Ok(state) = s.as_mut() {
            let g = random_parity_unitary(&mut rng);
            let err = state.apply_two_site_gate(0, &g).unwrap_err();
            assert!(matches!(err, Error::BondOverflow { .. }));
        } else {
            assert!(matches!(s.unwrap_err(), Error::BondOverflow { .. }));
        }
    }

    #[test]
    fn inner_products_match_the_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let pairs1 = random_pairs(3, &mut rng);
        let pairs2 = random_pairs(3, &mut rng);
        let s1 = CanonicalMps::product_state(&pairs1, 1.0, MpsOptions::default()).unwrap();
        let s2 = CanonicalMps::product_state(&pairs2, 1.0, MpsOptions::default()).unwrap();
        let d1 = s1.to_dense().unwrap();
        let d2 = s2.to_dense().unwrap();
        let dense: C64 = d1.iter().zip(d2.iter()).map(|(x, y)| x.conj() * y).sum();
        let got = s1.inner_product(&s2).unwrap();
        assert_abs_diff_eq!((got - dense).norm(), 0.0, epsilon = 1e-12);
        // Conjugate symmetry.
        let rev = s2.inner_product(&s1).unwrap();
        assert_abs_diff_eq!((rev - dense.conj()).norm(), 0.0, epsilon = 1e-12);
        // Orthogonal basis states.
        let vac = CanonicalMps::product_state(
            &vec![(c(1.0, 0.0), c(0.0, 0.0)); 3],
            1.0,
            MpsOptions::default(),
        )
        .unwrap();
        let full = CanonicalMps::product_state(
            &vec![(c(0.0, 0.0), c(1.0, 0.0)); 3],
            1.0,
            MpsOptions::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(vac.inner_product(&vac).unwrap().re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vac.inner_product(&full).unwrap().norm(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn unitary_gates_preserve_inner_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        for _ in 0..4 {
            let mut s1 =
                CanonicalMps::product_state(&random_pairs(3, &mut rng), 1.0, MpsOptions::default())
                    .unwrap();
            let mut s2 =
                CanonicalMps::product_state(&random_pairs(3, &mut rng), 1.0, MpsOptions::default())
                    .unwrap();
            let before = s1.inner_product(&s2).unwrap();
            for _ in 0..6 {
                let left = rng.gen_range(0..5);
                let g = random_parity_unitary(&mut rng);
                s1.apply_two_site_gate(left, &g).unwrap();
                s2.apply_two_site_gate(left, &g).unwrap();
            }
            let after = s1.inner_product(&s2).unwrap();
            assert!((after - before).norm() <= 1e-9);
        }
    }

    #[test]
    fn amplitude_separability_and_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let pairs = random_pairs(3, &mut rng);
        let s = CanonicalMps::product_state(&pairs, 1.0, MpsOptions::default()).unwrap();
        // String 11 on pair 1 only: b_1 · a_0 · a_2.
        let amp = s.amplitude(&[0, 0, 1, 1, 0, 0]).unwrap();
        let expect = pairs[0].0 * pairs[1].1 * pairs[2].0;
        assert_abs_diff_eq!((amp - expect).norm(), 0.0, epsilon = 1e-12);
        // Linearity against the dense sum of two states.
        let pairs2 = random_pairs(3, &mut rng);
        let s2 = CanonicalMps::product_state(&pairs2, 1.0, MpsOptions::default()).unwrap();
        let summed = &s.to_dense().unwrap() + &s2.to_dense().unwrap();
        let joint = CanonicalMps::from_dense(&summed, 6, MpsOptions::default()).unwrap();
        for bits in [[0u8, 0, 0, 0, 0, 0], [1, 1, 0, 0, 1, 1], [0, 1, 1, 0, 0, 1]] {
            let lhs = joint.amplitude(&bits).unwrap();
            let rhs = s.amplitude(&bits).unwrap() + s2.amplitude(&bits).unwrap();
            assert_abs_diff_eq!((lhs - rhs).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn gate_parity_violation_is_rejected() {
        let mut m = Array2::<C64>::eye(4);
        m[[0, 1]] = c(0.1, 0.0);
        assert!(matches!(TwoSiteGate::new(m), Err(Error::GateParity { .. })));
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let mut s =
            CanonicalMps::product_state(&random_pairs(3, &mut rng), 0.3, MpsOptions::default())
                .unwrap();
        for left in [0usize, 2, 3] {
            let g = random_parity_unitary(&mut rng);
            s.apply_two_site_gate(left, &g).unwrap();
        }
        let mut buf = Vec::new();
        s.write_snapshot(&mut buf).unwrap();
        let r = CanonicalMps::read_snapshot(&mut buf.as_slice()).unwrap();
        assert_eq!(r.n_sites(), s.n_sites());
        assert_eq!(r.log_scale().to_bits(), s.log_scale().to_bits());
        for (a, b) in r.gammas.iter().zip(s.gammas.iter()) {
            assert_eq!(a.dim(), b.dim());
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x.re.to_bits(), y.re.to_bits());
                assert_eq!(x.im.to_bits(), y.im.to_bits());
            }
        }
        for (a, b) in r.lambdas.iter().zip(s.lambdas.iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
