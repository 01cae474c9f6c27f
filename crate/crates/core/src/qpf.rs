//! Partition-function estimation by counting eigenstates per energy bin.
//!
//! The energy range `[0, 1)` is split into `num_bins` intervals
//! `I_j = [(j−1)/num_bins, j/num_bins)` and
//! `Z̃ = Σ_j M̃_j e^{−(j−1)Δ}` with `Δ = β/num_bins`; the reported estimate is
//! `Z̃/2`. Counts come either from the exact spectrum (ideal backend, with
//! optional seeded noise inside the allowed band) or from simulated phase
//! estimation and quantum counting (simulated backend).

use num_complex::Complex64;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

use crate::hamiltonian::HamiltonianSpec;
use crate::linalg::{expm_i_hermitian, identity, CMat, CVec, C64, ONE, ZERO};
use crate::spectra::{eigenvalues, hermitian_eigen, log_partition_function, realize_dense, SpectraError};

/// Largest `ℓ + log2(dim)` simulated as a statevector.
pub const STATEVECTOR_CAP: usize = 22;
/// Largest register for a dense interval marker.
pub const MARKER_CAP: usize = 12;
/// Unitarity tolerance `‖U†U − I‖_F`.
pub const UNITARY_TOL: f64 = 1e-10;
/// Eigenvector residual tolerance.
pub const EIGVEC_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpfError {
    #[error("operator is not unitary (defect {defect:.3e})")]
    NotUnitary { defect: f64 },
    #[error("state is not an eigenvector (residual {residual:.3e})")]
    NotEigenvector { residual: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{qubits} qubits exceeds the cap of {cap}")]
    CapExceeded { qubits: usize, cap: usize },
    #[error("spectrum outside [0, 1): min {min_eig}, max {max_eig}")]
    NormalizationViolated { min_eig: f64, max_eig: f64 },
    #[error("relative error {delta} is below the supported minimum {min}")]
    DeltaTooSmall { delta: f64, min: f64 },
    #[error("thresholds overlap: ln((1−δ)e^(−βa)) = {yes_line:.6} ≤ ln((1+δ)e^(−βb+0.7n)) = {no_line:.6}")]
    ThresholdsOverlap { yes_line: f64, no_line: f64 },
    #[error("estimate ln Z = {ln_z:.6} lies between the YES line {yes_line:.6} and the NO line {no_line:.6}")]
    Inconclusive { ln_z: f64, yes_line: f64, no_line: f64 },
    #[error("thresholds a={a} and b={b} do not satisfy b > a")]
    InvalidThresholds { a: f64, b: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("spectra: {0}")]
    Spectra(#[from] SpectraError),
}

// -------------------------------------------------------------- bins

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBins {
    pub num_bins: usize,
    /// `Δ = β / num_bins`.
    pub delta: f64,
    pub beta: f64,
}

impl EnergyBins {
    pub fn new(num_bins: usize, beta: f64) -> Result<Self, QpfError> {
        if num_bins == 0 || !beta.is_finite() || beta < 0.0 {
            return Err(QpfError::InvalidParameter(format!("num_bins={num_bins}, beta={beta}")));
        }
        Ok(Self {
            num_bins,
            delta: beta / num_bins as f64,
            beta,
        })
    }

    /// `num_bins = 4·n^c`.
    pub fn for_qubits(n: usize, c: u32, beta: f64) -> Result<Self, QpfError> {
        Self::new(4 * n.max(1).pow(c), beta)
    }

    pub fn width(&self) -> f64 {
        1.0 / self.num_bins as f64
    }

    /// `[lower, upper)` of bin `j` (1-based).
    pub fn interval(&self, j: usize) -> (f64, f64) {
        let w = self.width();
        ((j - 1) as f64 * w, j as f64 * w)
    }

    /// 1-based bin of an exact energy in `[0, 1)`.
    pub fn bin_of(&self, e: f64) -> Option<usize> {
        if !(0.0..1.0).contains(&e) {
            return None;
        }
        Some(((e * self.num_bins as f64).floor() as usize).min(self.num_bins - 1) + 1)
    }

    /// `[lower − ε/2, upper + ε/2)` of bin `j`, open-ended below the first
    /// bin and above the last so no estimate is lost.
    pub fn widened_interval(&self, j: usize, eps: f64) -> (f64, f64) {
        let (lo, hi) = self.interval(j);
        let lo = if j == 1 { f64::NEG_INFINITY } else { lo - eps / 2.0 };
        let hi = if j == self.num_bins { f64::INFINITY } else { hi + eps / 2.0 };
        (lo, hi)
    }

    /// Whether an energy *estimate* flags bin `j`. An estimate within
    /// `ε/2` of an eigenvalue in `I_j` always flags it; one that flags it
    /// always comes from an eigenvalue within `ε` of `I_j`.
    pub fn flags(&self, j: usize, estimate: f64, eps: f64) -> bool {
        let (lo, hi) = self.widened_interval(j, eps);
        estimate >= lo && estimate < hi
    }
}

/// Tolerance for eigenvalues that should be exactly 0.
const PSD_TOL: f64 = 1e-9;

fn check_normalized(eigs: &[f64]) -> Result<(), QpfError> {
    let min_eig = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    let max_eig = eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min_eig < -PSD_TOL || max_eig >= 1.0 {
        return Err(QpfError::NormalizationViolated { min_eig, max_eig });
    }
    Ok(())
}

pub fn bin_counts_from_spectrum(eigs: &[f64], bins: &EnergyBins) -> Result<Vec<u64>, QpfError> {
    check_normalized(eigs)?;
    let mut m = vec![0u64; bins.num_bins];
    for &e in eigs {
        m[bins.bin_of(e.max(0.0)).expect("normalized") - 1] += 1;
    }
    Ok(m)
}

/// `M_j = #{p : E_p ∈ I_j}`.
pub fn bin_counts_exact(spec: &HamiltonianSpec, bins: &EnergyBins) -> Result<Vec<u64>, QpfError> {
    bin_counts_from_spectrum(&eigenvalues(spec)?, bins)
}

/// `M^ε_j`: eigenvalues in `[lower − ε, upper + ε)` of bin `j`.
pub fn widened_count(eigs: &[f64], bins: &EnergyBins, j: usize, eps: f64) -> u64 {
    let (lo, hi) = bins.widened_interval(j, 2.0 * eps);
    eigs.iter().filter(|&&e| e >= lo && e < hi).count() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    Exact,
    Perturbed,
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountEstimate {
    /// 1-based.
    pub bin_index: usize,
    pub m_tilde: f64,
    pub mode: CountMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    /// Fraction of counting samples within the targeted phase accuracy.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub success_fraction: Option<f64>,
    /// Marked squared amplitude the counting run estimated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marked_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpfEstimate {
    /// `Z̃ / 2`.
    pub z_tilde_half: f64,
    pub bins: Vec<CountEstimate>,
    pub relative_error_target: f64,
    pub energy_bins: EnergyBins,
}

/// `½ Σ_j M̃_j e^{−(j−1)Δ}`.
pub fn z_half(counts: &[f64], bins: &EnergyBins) -> f64 {
    0.5 * counts
        .iter()
        .enumerate()
        .map(|(i, m)| m * (-(i as f64) * bins.delta).exp())
        .sum::<f64>()
}

pub fn estimate_z_from_counts(counts: &[f64], bins: &EnergyBins) -> Result<QpfEstimate, QpfError> {
    if counts.len() != bins.num_bins {
        return Err(QpfError::DimensionMismatch {
            expected: bins.num_bins,
            got: counts.len(),
        });
    }
    Ok(QpfEstimate {
        z_tilde_half: z_half(counts, bins),
        bins: counts
            .iter()
            .enumerate()
            .map(|(i, &m)| CountEstimate {
                bin_index: i + 1,
                m_tilde: m,
                mode: CountMode::Exact,
                ell: None,
                reps: None,
                success_fraction: None,
                marked_fraction: None,
            })
            .collect(),
        relative_error_target: 0.5,
        energy_bins: *bins,
    })
}

// -------------------------------------------------- phase estimation

fn unitarity_defect(u: &CMat) -> f64 {
    (u.adjoint() * u - identity(u.nrows())).norm()
}

fn check_unitary(u: &CMat) -> Result<(), QpfError> {
    if !u.is_square() {
        return Err(QpfError::DimensionMismatch {
            expected: u.nrows(),
            got: u.ncols(),
        });
    }
    let defect = unitarity_defect(u);
    if defect >= UNITARY_TOL {
        return Err(QpfError::NotUnitary { defect });
    }
    Ok(())
}

fn check_state(u: &CMat, state: &[C64]) -> Result<(), QpfError> {
    if state.len() != u.nrows() {
        return Err(QpfError::DimensionMismatch {
            expected: u.nrows(),
            got: state.len(),
        });
    }
    Ok(())
}

fn check_pe_size(ell: usize, dim: usize) -> Result<(), QpfError> {
    let q = ell + dim.next_power_of_two().trailing_zeros() as usize;
    if ell == 0 || q > STATEVECTOR_CAP {
        return Err(QpfError::CapExceeded {
            qubits: q,
            cap: STATEVECTOR_CAP,
        });
    }
    Ok(())
}

/// Post-QFT† amplitudes of the phase-estimation circuit: `out[k]` is the
/// (unnormalised) system state paired with control outcome `k`.
///
/// Controlled powers turn `Σ_x |x⟩|ψ⟩/√2^ℓ` into `Σ_x |x⟩ U^x|ψ⟩/√2^ℓ`;
/// the inverse QFT over `x` is one FFT per system amplitude.
pub fn pe_amplitudes(u: &CMat, state: &[C64], ell: usize) -> Result<Vec<Vec<C64>>, QpfError> {
    check_state(u, state)?;
    check_pe_size(ell, u.nrows())?;
    let dim = u.nrows();
    let size = 1usize << ell;
    // columns[s][x] = (U^x ψ)_s
    let mut columns = vec![vec![ZERO; size]; dim];
    let mut cur = CVec::from_column_slice(state);
    for x in 0..size {
        for s in 0..dim {
            columns[s][x] = cur[s];
        }
        if x + 1 < size {
            cur = u * cur;
        }
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(size);
    let norm = 1.0 / size as f64;
    columns.par_iter_mut().for_each(|col| {
        fft.process(col);
        for v in col.iter_mut() {
            *v *= norm;
        }
    });
    Ok((0..size).map(|k| (0..dim).map(|s| columns[s][k]).collect()).collect())
}

/// Outcome distribution over the `2^ℓ` control values.
pub fn pe_distribution(u: &CMat, state: &[C64], ell: usize) -> Result<Vec<f64>, QpfError> {
    Ok(pe_amplitudes(u, state, ell)?
        .iter()
        .map(|v| v.iter().map(|a| a.norm_sqr()).sum())
        .collect())
}

/// Outcome distribution for an eigenphase `θ` directly (one-dimensional
/// system).
pub fn pe_distribution_for_phase(theta: f64, ell: usize) -> Vec<f64> {
    let u = CMat::from_element(1, 1, Complex64::from_polar(1.0, theta));
    pe_distribution(&u, &[ONE], ell).expect("1x1 phase is a valid input")
}

pub fn outcome_to_phase(k: usize, ell: usize) -> f64 {
    TAU * k as f64 / (1usize << ell) as f64
}

/// Circular distance on `[0, 2π)`.
pub fn phase_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn eigen_residual(u: &CMat, v: &[C64]) -> f64 {
    let v = CVec::from_column_slice(v);
    let uv = u * &v;
    let lambda = v.dotc(&uv) / v.dotc(&v);
    (uv - v * lambda).norm()
}

/// One phase-estimation sample `θ̃ ∈ [0, 2π)` for an eigenvector input.
pub fn phase_estimation<R: Rng>(u: &CMat, eigvec: &[C64], ell: usize, rng: &mut R) -> Result<f64, QpfError> {
    check_unitary(u)?;
    check_state(u, eigvec)?;
    let residual = eigen_residual(u, eigvec);
    if residual >= EIGVEC_TOL {
        return Err(QpfError::NotEigenvector { residual });
    }
    let dist = pe_distribution(u, eigvec, ell)?;
    let k = WeightedIndex::new(&dist).expect("distribution").sample(rng);
    Ok(outcome_to_phase(k, ell))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseEstimateRun {
    pub ell: usize,
    pub reps: usize,
    /// Raw control outcomes, in measurement order.
    pub samples: Vec<usize>,
    pub theta_tilde: f64,
}

/// Runs the phase-estimation circuit `reps` times on one system register,
/// collapsing it after each measurement. Returns the raw outcomes.
pub fn sequential_pe<R: Rng>(
    u: &CMat,
    state: &[C64],
    ell: usize,
    reps: usize,
    rng: &mut R,
) -> Result<Vec<usize>, QpfError> {
    let mut sys: Vec<C64> = state.to_vec();
    let mut out = Vec::with_capacity(reps);
    for _ in 0..reps {
        let amps = pe_amplitudes(u, &sys, ell)?;
        let probs: Vec<f64> = amps.iter().map(|v| v.iter().map(|a| a.norm_sqr()).sum()).collect();
        let k = WeightedIndex::new(&probs).expect("distribution").sample(rng);
        let norm = probs[k].sqrt();
        sys = amps[k].iter().map(|a| a / norm).collect();
        out.push(k);
    }
    Ok(out)
}

/// Lower median.
pub fn lower_median<T: PartialOrd + Copy>(xs: &[T]) -> T {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("comparable"));
    v[(v.len() - 1) / 2]
}

fn check_reps(reps: usize) -> Result<(), QpfError> {
    if reps == 0 || reps.is_multiple_of(2) {
        return Err(QpfError::InvalidParameter(format!("reps must be odd, got {reps}")));
    }
    Ok(())
}

/// Median of `reps` phase-estimation outcomes on an eigenvector.
pub fn median_amplified_pe<R: Rng>(
    u: &CMat,
    eigvec: &[C64],
    ell: usize,
    reps: usize,
    rng: &mut R,
) -> Result<PhaseEstimateRun, QpfError> {
    check_reps(reps)?;
    check_unitary(u)?;
    check_state(u, eigvec)?;
    let residual = eigen_residual(u, eigvec);
    if residual >= EIGVEC_TOL {
        return Err(QpfError::NotEigenvector { residual });
    }
    let samples = sequential_pe(u, eigvec, ell, reps, rng)?;
    let theta_tilde = outcome_to_phase(lower_median(&samples), ell);
    Ok(PhaseEstimateRun {
        ell,
        reps,
        samples,
        theta_tilde,
    })
}

/// `Pr[Bin(m, q) ≥ k]`.
pub fn binomial_tail(m: usize, q: f64, k: usize) -> f64 {
    let mut total = 0.0;
    for i in k..=m {
        let ln_c = ln_choose(m, i);
        total += (ln_c + i as f64 * q.ln() + (m - i) as f64 * (1.0 - q).ln()).exp();
    }
    total.min(1.0)
}

fn ln_choose(n: usize, k: usize) -> f64 {
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

/// Smallest odd `m` whose median fails with probability ≤ `eta` when each
/// sample independently fails with probability `q`.
pub fn reps_for_confidence(q: f64, eta: f64) -> usize {
    let mut m = 1;
    while binomial_tail(m, q, m.div_ceil(2)) > eta {
        m += 2;
    }
    m
}

// ----------------------------------------------------------- counting

/// `G = U(2|ψ⟩⟨ψ| − I)U†(2|0⟩⟨0|_flag − I)` with the flag on qubit 0 (the
/// most significant) of `u_mark`'s register; flag = 1 marks good states.
pub fn grover_operator(u_mark: &CMat, psi: &[C64]) -> Result<CMat, QpfError> {
    check_state(u_mark, psi)?;
    let dim = u_mark.nrows();
    if dim < 2 || !dim.is_power_of_two() {
        return Err(QpfError::DimensionMismatch {
            expected: dim.next_power_of_two().max(2),
            got: dim,
        });
    }
    let p = CVec::from_column_slice(psi);
    let refl_psi = (&p * p.adjoint()) * Complex64::new(2.0, 0.0) - identity(dim);
    let half = dim / 2;
    let flag_refl = CMat::from_fn(dim, dim, |i, j| {
        if i != j {
            ZERO
        } else if i < half {
            ONE
        } else {
            -ONE
        }
    });
    Ok(u_mark * refl_psi * u_mark.adjoint() * flag_refl)
}

/// Classical marker on `flag ⊗ n` qubits: flips the flag on every basis
/// state listed in `marked`.
pub fn marker_unitary(n: usize, marked: &[usize]) -> CMat {
    let n_states = 1usize << n;
    let dim = 2 * n_states;
    let mut m = CMat::zeros(dim, dim);
    for s in 0..n_states {
        let flip = marked.contains(&s);
        for f in 0..2 {
            let to = if flip { 1 - f } else { f };
            m[(to * n_states + s, f * n_states + s)] = ONE;
        }
    }
    m
}

/// `|0⟩_flag ⊗ |+⟩^{⊗n}`.
pub fn uniform_flag_state(n: usize) -> Vec<C64> {
    let n_states = 1usize << n;
    let a = Complex64::new(1.0 / (n_states as f64).sqrt(), 0.0);
    let mut v = vec![ZERO; 2 * n_states];
    v[..n_states].fill(a);
    v
}

/// One-qubit marker with `Pr[flag = 1] = p` on `|0⟩`: a `y`-rotation.
pub fn amplitude_marker(p: f64) -> CMat {
    let p = p.clamp(0.0, 1.0);
    let (c, s) = ((1.0 - p).sqrt(), p.sqrt());
    CMat::from_row_slice(2, 2, &[Complex64::new(c, 0.0), Complex64::new(-s, 0.0), Complex64::new(s, 0.0), Complex64::new(c, 0.0)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingRun {
    pub m_tilde: f64,
    /// Folded phase `min(θ', 2π − θ')`.
    pub theta_tilde: f64,
    pub ell: usize,
    pub reps: usize,
    pub samples: Vec<usize>,
}

/// Quantum counting: median-amplified phase estimation of the Grover
/// operator on `U|ψ⟩`, then `M̃ = scale · sin²(θ̃/2)`.
///
/// Each sample is folded to `min(θ', 2π − θ')` before taking the median, so
/// outcomes from the two conjugate eigenphases agree.
pub fn quantum_counting<R: Rng>(
    u_mark: &CMat,
    psi: &[C64],
    ell: usize,
    reps: usize,
    scale: f64,
    rng: &mut R,
) -> Result<CountingRun, QpfError> {
    check_reps(reps)?;
    check_unitary(u_mark)?;
    let g = grover_operator(u_mark, psi)?;
    let start: Vec<C64> = (u_mark * CVec::from_column_slice(psi)).iter().copied().collect();
    let samples = sequential_pe(&g, &start, ell, reps, rng)?;
    let folded: Vec<f64> = samples
        .iter()
        .map(|&k| {
            let t = outcome_to_phase(k, ell);
            t.min(TAU - t)
        })
        .collect();
    let theta_tilde = lower_median(&folded);
    Ok(CountingRun {
        m_tilde: scale * (theta_tilde / 2.0).sin().powi(2),
        theta_tilde,
        ell,
        reps,
        samples,
    })
}

/// `(√(2NM) + NΔθ/2)·Δθ`.
pub fn counting_error_bound(n_states: f64, m: f64, dtheta: f64) -> f64 {
    ((2.0 * n_states * m).sqrt() + n_states * dtheta / 2.0) * dtheta
}

/// `Σ_q |q⟩|q⟩ / √2^n`.
pub fn epr_counting_state(n: usize) -> Result<CVec, QpfError> {
    if 2 * n > STATEVECTOR_CAP {
        return Err(QpfError::CapExceeded {
            qubits: 2 * n,
            cap: STATEVECTOR_CAP,
        });
    }
    let d = 1usize << n;
    let a = Complex64::new(1.0 / (d as f64).sqrt(), 0.0);
    let mut v = CVec::zeros(d * d);
    for q in 0..d {
        v[q * d + q] = a;
    }
    Ok(v)
}

/// `Σ_p V|p⟩ ⊗ V*|p⟩ / √2^n` for a unitary `V`.
pub fn epr_in_basis(v: &CMat) -> CVec {
    let d = v.nrows();
    let a = 1.0 / (d as f64).sqrt();
    let mut out = CVec::zeros(d * d);
    for p in 0..d {
        let col = v.column(p);
        for q in 0..d {
            for r in 0..d {
                out[q * d + r] += col[q] * col[r].conj() * a;
            }
        }
    }
    out
}

/// Applies `u` to the leading qubits of `state`, leaving the trailing
/// `partner_qubits` untouched.
pub fn apply_on_first_half(u: &CMat, state: &CVec, partner_qubits: usize) -> CVec {
    let p = 1usize << partner_qubits;
    let d = u.nrows();
    assert_eq!(state.len(), d * p);
    let mut out = CVec::zeros(d * p);
    for r in 0..p {
        let col = CVec::from_fn(d, |i, _| state[i * p + r]);
        let new = u * col;
        for i in 0..d {
            out[i * p + r] = new[i];
        }
    }
    out
}

// ------------------------------------------------- energy estimation

/// Decoded energy for control outcome `k` when phase-estimating `e^{−iH}`:
/// `−θ̃` wrapped into `(−π, π]`.
pub fn decode_energy(k: usize, ell: usize) -> f64 {
    let e = -outcome_to_phase(k, ell);
    let w = e.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Interval marker `U_j = U_dec · U_EE` on `flag ⊗ energy(ℓ) ⊗ ext(n + 1)`.
///
/// `U_EE` phase-estimates `e^{−iH}` (exact exponential) into the energy
/// register; `U_dec` flips the flag when the decoded energy flags bin `j`
/// (see [`EnergyBins::flags`]) and the extension qubit (most significant
/// of `ext`) is 0.
pub fn build_interval_marker(
    spec: &HamiltonianSpec,
    bins: &EnergyBins,
    j: usize,
    ell_ee: usize,
    eps: f64,
) -> Result<CMat, QpfError> {
    let n = spec.total_qubits;
    let total = 1 + ell_ee + n + 1;
    if total > MARKER_CAP {
        return Err(QpfError::CapExceeded {
            qubits: total,
            cap: MARKER_CAP,
        });
    }
    if j == 0 || j > bins.num_bins {
        return Err(QpfError::InvalidParameter(format!("bin {j} of {}", bins.num_bins)));
    }
    let h = realize_dense(spec)?;
    check_normalized(&hermitian_eigen(&h).0)?;
    let w = kron_id_front(&expm_i_hermitian(&h, 1.0), 2);
    let d_sys = w.nrows();
    let size = 1usize << ell_ee;
    // U_EE on energy ⊗ ext: QFT† · Σ_x |x⟩⟨x| ⊗ W^x · (H^{⊗ℓ} ⊗ I).
    let mut powers = Vec::with_capacity(size);
    let mut cur = identity(d_sys);
    for _ in 0..size {
        powers.push(cur.clone());
        cur = &w * cur;
    }
    let sz = size as f64;
    let dim = size * d_sys;
    // ⟨k, s'| U_EE |y, s⟩ = (1/2^ℓ) Σ_x e^{−2πi kx/2^ℓ} (W^x)_{s' s}, independent of y's sign pattern
    // only through the Hadamard phases (−1)^{x·y}.
    let mut u_ee = CMat::zeros(dim, dim);
    for k in 0..size {
        for y in 0..size {
            for x in 0..size {
                let sign = if (x & y).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                let ph = Complex64::from_polar(sign / sz, -TAU * (k * x) as f64 / sz);
                let wx = &powers[x];
                for s2 in 0..d_sys {
                    for s in 0..d_sys {
                        let v = wx[(s2, s)];
                        if v != ZERO {
                            u_ee[(k * d_sys + s2, y * d_sys + s)] += ph * v;
                        }
                    }
                }
            }
        }
    }
    let full_ee = kron_id_front(&u_ee, 2);
    let half_sys = d_sys / 2;
    let flips: Vec<bool> = (0..dim)
        .map(|i| {
            let (k, s) = (i / d_sys, i % d_sys);
            s < half_sys && bins.flags(j, decode_energy(k, ell_ee), eps)
        })
        .collect();
    let mut dec = CMat::zeros(2 * dim, 2 * dim);
    for f in 0..2 {
        for (i, &flip) in flips.iter().enumerate() {
            let to = if flip { 1 - f } else { f };
            dec[(to * dim + i, f * dim + i)] = ONE;
        }
    }
    Ok(dec * full_ee)
}

/// `I_{dim} ⊗ m`.
fn kron_id_front(m: &CMat, dim: usize) -> CMat {
    crate::linalg::kron(&identity(dim), m)
}

/// Probability that the median of `reps` energy estimates of an eigenvalue
/// `e` flags bin `j`, for every `j`.
pub fn median_bin_probabilities(e: f64, bins: &EnergyBins, ell: usize, reps: usize, eps: f64) -> Vec<f64> {
    let dist = pe_distribution_for_phase(-e, ell);
    // decoded energies in ascending order with their probabilities
    let mut pts: Vec<(f64, f64)> = dist.iter().enumerate().map(|(k, &p)| (decode_energy(k, ell), p)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let need = reps.div_ceil(2);
    // Pr[median < x] = Pr[Bin(reps, Pr[sample < x]) ≥ need]
    let below = |x: f64| {
        let q: f64 = pts.iter().take_while(|(e, _)| *e < x).map(|(_, p)| p).sum();
        binomial_tail(reps, q.clamp(0.0, 1.0), need)
    };
    (1..=bins.num_bins)
        .map(|j| {
            let (lo, hi) = bins.widened_interval(j, eps);
            let p_hi = if hi.is_finite() { below(hi) } else { 1.0 };
            let p_lo = if lo.is_finite() { below(lo) } else { 0.0 };
            (p_hi - p_lo).max(0.0)
        })
        .collect()
}

// ---------------------------------------------------------- algorithm

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Ideal,
    Simulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpfConfig {
    /// Exponent in `num_bins = 4n^c` and `δ ≥ ½ + 1/n^c`.
    pub c: u32,
    pub num_bins: Option<usize>,
    /// Energy-estimation additive error `ε` as a fraction of the bin width.
    pub eps_bin_fraction: f64,
    /// Per-call failure budget of the energy estimate.
    pub eta_ee: f64,
    pub ell_ee: Option<usize>,
    pub reps_ee: Option<usize>,
    pub ell_count: Option<usize>,
    pub reps_count: usize,
    /// Ideal backend: perturb exact counts within `±1/(4n^c)`.
    pub perturb: bool,
}

impl Default for QpfConfig {
    fn default() -> Self {
        Self {
            c: 1,
            num_bins: None,
            eps_bin_fraction: 0.125,
            eta_ee: 1e-4,
            ell_ee: None,
            reps_ee: None,
            ell_count: None,
            reps_count: 9,
            perturb: true,
        }
    }
}

/// Derived parameters of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpfParams {
    pub n: usize,
    pub bins: EnergyBins,
    /// Relative count tolerance `1/(4n^c)`.
    pub rho: f64,
    /// Energy-estimation additive error `ε` (an eighth of a bin width).
    pub eps: f64,
    pub ell_ee: usize,
    pub reps_ee: usize,
    pub ell_count: usize,
    pub reps_count: usize,
}

impl QpfParams {
    pub fn new(n: usize, beta: f64, cfg: &QpfConfig) -> Result<Self, QpfError> {
        let n = n.max(1);
        let bins = match cfg.num_bins {
            Some(t) => EnergyBins::new(t, beta)?,
            None => EnergyBins::for_qubits(n, cfg.c, beta)?,
        };
        let nc = (n as f64).powi(cfg.c as i32);
        let rho = 1.0 / (4.0 * nc);
        if !(cfg.eps_bin_fraction > 0.0 && cfg.eps_bin_fraction <= 1.0) {
            return Err(QpfError::InvalidParameter(format!("eps_bin_fraction={}", cfg.eps_bin_fraction)));
        }
        let eps = bins.width() * cfg.eps_bin_fraction;
        // |θ̃ − θ| ≤ 2π/2^b ≤ ε/2, and ℓ = b + 2
        let b_ee = (4.0 * PI / eps).log2().ceil() as usize;
        let ell_ee = cfg.ell_ee.unwrap_or(b_ee + 2);
        let reps_ee = cfg.reps_ee.unwrap_or_else(|| reps_for_confidence(0.25, cfg.eta_ee));
        // counting: error bound at M = 1 no larger than ρ
        let scale = (1usize << (n + 1)) as f64;
        let mut b = 1usize;
        while counting_error_bound(scale, 1.0, TAU / (1u64 << b) as f64) > rho {
            b += 1;
        }
        let ell_count = cfg.ell_count.unwrap_or(b + 2);
        check_reps(cfg.reps_count)?;
        check_reps(reps_ee)?;
        Ok(Self {
            n,
            bins,
            rho,
            eps,
            ell_ee,
            reps_ee,
            ell_count,
            reps_count: cfg.reps_count,
        })
    }
}

/// Minimum supported relative error `½ + 1/n^c`.
pub fn min_delta(n: usize, c: u32) -> f64 {
    0.5 + 1.0 / (n.max(1) as f64).powi(c as i32)
}

pub fn qpf_algorithm(
    spec: &HamiltonianSpec,
    beta: f64,
    delta: f64,
    backend: Backend,
    cfg: &QpfConfig,
    seed: u64,
) -> Result<QpfEstimate, QpfError> {
    let n = spec.total_qubits;
    let min = min_delta(n, cfg.c);
    if delta < min {
        return Err(QpfError::DeltaTooSmall { delta, min });
    }
    let eigs = eigenvalues(spec)?;
    qpf_from_spectrum(&eigs, n, beta, delta, backend, cfg, seed)
}

/// [`qpf_algorithm`] on a known spectrum of an `n`-qubit operator.
pub fn qpf_from_spectrum(
    eigs: &[f64],
    n: usize,
    beta: f64,
    delta: f64,
    backend: Backend,
    cfg: &QpfConfig,
    seed: u64,
) -> Result<QpfEstimate, QpfError> {
    if eigs.len() != 1 << n {
        return Err(QpfError::DimensionMismatch {
            expected: 1 << n,
            got: eigs.len(),
        });
    }
    check_normalized(eigs)?;
    let params = QpfParams::new(n, beta, cfg)?;
    let bins = params.bins;
    let estimates = match backend {
        Backend::Ideal => {
            let exact = bin_counts_from_spectrum(eigs, &bins)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            exact
                .iter()
                .enumerate()
                .map(|(i, &m)| {
                    let (m_tilde, mode) = if cfg.perturb {
                        (m as f64 * (1.0 + rng.gen_range(-params.rho..=params.rho)), CountMode::Perturbed)
                    } else {
                        (m as f64, CountMode::Exact)
                    };
                    CountEstimate {
                        bin_index: i + 1,
                        m_tilde,
                        mode,
                        ell: None,
                        reps: None,
                        success_fraction: None,
                        marked_fraction: None,
                    }
                })
                .collect::<Vec<_>>()
        }
        Backend::Simulated => simulated_counts(eigs, &params, seed)?,
    };
    let counts: Vec<f64> = estimates.iter().map(|e| e.m_tilde).collect();
    Ok(QpfEstimate {
        z_tilde_half: z_half(&counts, &bins),
        bins: estimates,
        relative_error_target: delta,
        energy_bins: bins,
    })
}

/// Marked counts `M'_j = Σ_p Pr[median energy estimate of E_p flags j]` —
/// the squared flag-1 amplitude `U_j` produces on the extended EPR input,
/// times `2N`.
pub fn marked_counts(eigs: &[f64], params: &QpfParams) -> Vec<f64> {
    let per: Vec<Vec<f64>> = eigs
        .par_iter()
        .map(|&e| median_bin_probabilities(e, &params.bins, params.ell_ee, params.reps_ee, params.eps))
        .collect();
    (0..params.bins.num_bins).map(|j| per.iter().map(|p| p[j]).sum()).collect()
}

/// Simulated backend: exact marked fractions `a_j = M'_j / 2N`, then
/// quantum counting on the Grover rotation they define. The rotation acts
/// on a two-dimensional invariant subspace, so counting on a one-qubit
/// marker with the same `a_j` reproduces the full circuit's statistics.
fn simulated_counts(eigs: &[f64], params: &QpfParams, seed: u64) -> Result<Vec<CountEstimate>, QpfError> {
    let scale = (2 * eigs.len()) as f64;
    let marked = marked_counts(eigs, params);
    let dtheta_target = TAU / (1u64 << (params.ell_count - 2)) as f64;
    marked
        .par_iter()
        .enumerate()
        .map(|(i, &mp)| {
            let a = mp / scale;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1)));
            let run = quantum_counting(&amplitude_marker(a), &[ONE, ZERO], params.ell_count, params.reps_count, scale, &mut rng)?;
            let theta = 2.0 * a.sqrt().asin();
            let ok = run
                .samples
                .iter()
                .filter(|&&k| {
                    let t = outcome_to_phase(k, params.ell_count);
                    (t.min(TAU - t) - theta).abs() <= dtheta_target
                })
                .count();
            Ok(CountEstimate {
                bin_index: i + 1,
                m_tilde: run.m_tilde,
                mode: CountMode::Simulated,
                ell: Some(params.ell_count),
                reps: Some(params.reps_count),
                success_fraction: Some(ok as f64 / run.samples.len() as f64),
                marked_fraction: Some(a),
            })
        })
        .collect()
}

// ------------------------------------------------- LH via partition fn

/// Anything that returns `ln Z_out` for `(H, β, δ)`.
pub trait QpfOracle {
    fn ln_estimate(&mut self, spec: &HamiltonianSpec, beta: f64, delta: f64) -> Result<f64, QpfError>;
}

/// Exact `ln Z(β)` from the full spectrum.
#[derive(Debug, Default, Clone, Copy)]
pub struct ExactOracle;

impl QpfOracle for ExactOracle {
    fn ln_estimate(&mut self, spec: &HamiltonianSpec, beta: f64, _delta: f64) -> Result<f64, QpfError> {
        Ok(log_partition_function(spec, beta)?)
    }
}

/// [`qpf_algorithm`] as an oracle.
#[derive(Debug, Clone, Copy)]
pub struct AlgorithmOracle {
    pub backend: Backend,
    pub config: QpfConfig,
    pub seed: u64,
}

impl QpfOracle for AlgorithmOracle {
    fn ln_estimate(&mut self, spec: &HamiltonianSpec, beta: f64, delta: f64) -> Result<f64, QpfError> {
        let est = qpf_algorithm(spec, beta, delta, self.backend, &self.config, self.seed)?;
        Ok(est.z_tilde_half.ln())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub struct LhViaQpfOptions {
    /// Defaults to `2·β₀`.
    pub beta: Option<f64>,
    /// Defaults to `δ₀`.
    pub delta: Option<f64>,
}


#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LhViaQpfDecision {
    pub answer: crate::spectra::LhAnswer,
    pub beta: f64,
    pub delta: f64,
    pub ln_z_out: f64,
    pub yes_line: f64,
    pub no_line: f64,
}

/// `β₀ = n/(b − a)`.
pub fn beta_zero(n: usize, a: f64, b: f64) -> f64 {
    n as f64 / (b - a)
}

/// `δ₀` with `(1 − δ₀)/(1 + δ₀) = e^{−0.3n}`.
pub fn delta_zero(n: usize) -> f64 {
    (0.15 * n as f64).tanh()
}

/// `(ln((1−δ)e^{−βa}), ln((1+δ)e^{−βb + 0.7n}))`.
pub fn decision_lines(n: usize, a: f64, b: f64, beta: f64, delta: f64) -> (f64, f64) {
    let yes = (1.0 - delta).ln() - beta * a;
    let no = (1.0 + delta).ln() - beta * b + 0.7 * n as f64;
    (yes, no)
}

/// Decides `LH(H, a, b)` with one partition-function query: YES if
/// `Z_out ≥ (1−δ)e^{−βa}`, NO if `Z_out ≤ (1+δ)e^{−βb+0.7n}`. Compared in
/// the log domain.
pub fn decide_lh_via_qpf(
    oracle: &mut dyn QpfOracle,
    spec: &HamiltonianSpec,
    a: f64,
    b: f64,
    opts: &LhViaQpfOptions,
) -> Result<LhViaQpfDecision, QpfError> {
    if b <= a {
        return Err(QpfError::InvalidThresholds { a, b });
    }
    let n = spec.total_qubits;
    let beta = opts.beta.unwrap_or(2.0 * beta_zero(n, a, b));
    let delta = opts.delta.unwrap_or_else(|| delta_zero(n));
    let (yes_line, no_line) = decision_lines(n, a, b, beta, delta);
    if !(yes_line > no_line) {
        return Err(QpfError::ThresholdsOverlap { yes_line, no_line });
    }
    let ln_z_out = oracle.ln_estimate(spec, beta, delta)?;
    let answer = if ln_z_out >= yes_line {
        crate::spectra::LhAnswer::Yes
    } else if ln_z_out <= no_line {
        crate::spectra::LhAnswer::No
    } else {
        return Err(QpfError::Inconclusive {
            ln_z: ln_z_out,
            yes_line,
            no_line,
        });
    };
    Ok(LhViaQpfDecision {
        answer,
        beta,
        delta,
        ln_z_out,
        yes_line,
        no_line,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{LocalTerm, TermGroup};
    use crate::linalg::{ketbra, pauli_z};

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn diag_spec(vals: &[f64]) -> HamiltonianSpec {
        // one qubit: diag(v0, v1)
        let block = CMat::from_diagonal(&CVec::from_vec(vals.iter().map(|&v| Complex64::new(v, 0.0)).collect()));
        HamiltonianSpec::new(1, 1, vec![LocalTerm::new(1.0, &[0], block, TermGroup::Prop, None).unwrap()]).unwrap()
    }

    #[test]
    fn bins_and_counts() {
        let b = EnergyBins::new(4, 1.0).unwrap();
        assert!((b.delta * 4.0 - 1.0).abs() < 1e-12);
        let zero = HamiltonianSpec::new(2, 1, vec![]).unwrap();
        assert_eq!(bin_counts_exact(&zero, &b).unwrap(), vec![4, 0, 0, 0]);
        let b2 = EnergyBins::new(2, 1.0).unwrap();
        assert_eq!(bin_counts_exact(&diag_spec(&[0.0, 0.6]), &b2).unwrap(), vec![1, 1]);
        assert!(matches!(
            bin_counts_exact(&diag_spec(&[0.0, 1.0]), &b2),
            Err(QpfError::NormalizationViolated { .. })
        ));
    }

    #[test]
    fn estimator_on_zero_hamiltonian() {
        let b = EnergyBins::new(8, 2.0).unwrap();
        let mut counts = vec![0.0; 8];
        counts[0] = 16.0;
        assert_eq!(estimate_z_from_counts(&counts, &b).unwrap().z_tilde_half, 8.0);
        assert_eq!(z_half(&[0.0; 8], &b), 0.0);
    }

    #[test]
    fn representable_phase_is_exact() {
        let z = pauli_z();
        let mut r = rng();
        for _ in 0..20 {
            let t = phase_estimation(&z, &[ZERO, ONE], 3, &mut r).unwrap();
            assert!((t - PI).abs() < 1e-12);
        }
        let run = median_amplified_pe(&z, &[ZERO, ONE], 3, 5, &mut r).unwrap();
        assert!((run.theta_tilde - PI).abs() < 1e-12);
    }

    #[test]
    fn one_bit_distribution_closed_form() {
        // ℓ = 1: Pr[k = 0] = cos²(θ/2)
        let theta = PI / 4.0;
        let d = pe_distribution_for_phase(theta, 1);
        assert!((d[0] - (theta / 2.0).cos().powi(2)).abs() < 1e-12);
        assert!((d[1] - (theta / 2.0).sin().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn pe_rejects_bad_inputs() {
        let mut r = rng();
        let not_u = ketbra(0, 0);
        assert!(matches!(phase_estimation(&not_u, &[ONE, ZERO], 2, &mut r), Err(QpfError::NotUnitary { .. })));
        let h = crate::linalg::hadamard();
        assert!(matches!(phase_estimation(&pauli_z(), &[h[(0, 0)], h[(1, 0)]], 2, &mut r), Err(QpfError::NotEigenvector { .. })));
    }

    #[test]
    fn grover_phase_matches_marked_fraction() {
        let u = marker_unitary(3, &[1, 6]);
        let psi = uniform_flag_state(3);
        let g = grover_operator(&u, &psi).unwrap();
        let start = &u * CVec::from_column_slice(&psi);
        // G acts on span{good, bad} as a rotation by θ with sin(θ/2) = 1/2
        let theta = 2.0 * (0.5f64).asin();
        let gs = &g * &start;
        let gs2 = &g * &gs;
        // rotation: G²s − 2cosθ·Gs + s = 0
        let resid = gs2 - &gs * Complex64::new(2.0 * theta.cos(), 0.0) + &start;
        assert!(resid.norm() < 1e-12);
    }

    #[test]
    fn counting_extremes() {
        let mut r = rng();
        let none = quantum_counting(&marker_unitary(3, &[]), &uniform_flag_state(3), 6, 3, 8.0, &mut r).unwrap();
        assert_eq!(none.m_tilde, 0.0);
        let all: Vec<usize> = (0..8).collect();
        let full = quantum_counting(&marker_unitary(3, &all), &uniform_flag_state(3), 6, 3, 8.0, &mut r).unwrap();
        assert!((full.m_tilde - 8.0).abs() < 1e-9);
    }

    #[test]
    fn epr_state() {
        let e = epr_counting_state(1).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((e[0].re - s).abs() < 1e-15 && (e[3].re - s).abs() < 1e-15);
        assert!((e.norm() - 1.0).abs() < 1e-12);
        let h = crate::linalg::hadamard();
        assert!((epr_in_basis(&h) - e).norm() < 1e-12);
    }

    #[test]
    fn marker_flags_representable_energy() {
        // E = 0.25 in bin 2 of 4; e^{−iE} phase −0.25 is not a multiple of
        // 2π/2^ℓ, so use the flag probability instead of determinism.
        let spec = diag_spec(&[0.25 + 1.0 / 16.0, 0.9]);
        let bins = EnergyBins::new(4, 1.0).unwrap();
        let u = build_interval_marker(&spec, &bins, 2, 6, bins.width() / 8.0).unwrap();
        assert!(crate::linalg::is_unitary(&u, 1e-9));
        // input |0⟩_flag |0⟩_energy |0⟩_ext-extra |0⟩_sys
        let dim = u.nrows();
        let mut v = CVec::zeros(dim);
        v[0] = ONE;
        let out = &u * v;
        let p1: f64 = out.iter().skip(dim / 2).map(|a| a.norm_sqr()).sum();
        assert!(p1 > 0.9, "flag probability {p1}");
    }

    #[test]
    fn reps_for_confidence_is_odd_and_sufficient() {
        let m = reps_for_confidence(0.25, 1e-4);
        assert_eq!(m % 2, 1);
        assert!(binomial_tail(m, 0.25, m.div_ceil(2)) <= 1e-4);
        assert!(binomial_tail(m - 2, 0.25, (m - 2).div_ceil(2)) > 1e-4);
    }

    #[test]
    fn lh_via_exact_oracle() {
        let yes = diag_spec(&[0.0, 1.0]);
        let d = decide_lh_via_qpf(&mut ExactOracle, &yes, 0.1, 0.9, &LhViaQpfOptions::default()).unwrap();
        assert_eq!(d.answer, crate::spectra::LhAnswer::Yes);
        let no = diag_spec(&[1.0, 1.0]);
        let d = decide_lh_via_qpf(&mut ExactOracle, &no, 0.1, 0.9, &LhViaQpfOptions::default()).unwrap();
        assert_eq!(d.answer, crate::spectra::LhAnswer::No);
        let small_beta = LhViaQpfOptions { beta: Some(0.1), delta: None };
        assert!(matches!(
            decide_lh_via_qpf(&mut ExactOracle, &no, 0.1, 0.9, &small_beta),
            Err(QpfError::ThresholdsOverlap { .. })
        ));
    }

    #[test]
    fn delta_zero_solves_its_equation() {
        for n in 1..20 {
            let d = delta_zero(n);
            assert!(((1.0 - d) / (1.0 + d) - (-0.3 * n as f64).exp()).abs() < 1e-12);
        }
    }
}
