//! Realizing specs as operators and extracting spectral data: ground
//! energies (dense or Lanczos), partition functions, history states and the
//! projection-lemma check.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{apply_gate, embed_input, CircuitError, GateKind, QuantumCircuit};
use crate::clock::{clock_index, ClockError, ClockSchedule};
use crate::hamiltonian::{HamiltonianSpec, LocalTerm};
use crate::linalg::{hermitian_norm, CMat, CVec, C64, ZERO};

/// Largest register realized as a dense matrix.
pub const DENSE_CAP: usize = 12;
/// Largest register handled by the matrix-free solver.
pub const ITERATIVE_CAP: usize = 24;
/// Residual target of the iterative solver.
pub const LANCZOS_TOL: f64 = 1e-9;
/// Eigenvalues below this count as zero (kernel detection, decisions).
pub const SPECTRAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectraError {
    #[error("{qubits} qubits exceeds the cap of {cap}")]
    DimensionCapExceeded { qubits: usize, cap: usize },
    #[error("Lanczos did not converge after {restarts} restarts (residual {residual:.3e})")]
    ConvergenceFailure { restarts: usize, residual: f64 },
    #[error("projection lemma needs J > 2‖H1‖, got J={j}, ‖H1‖={h1_norm}")]
    HypothesisViolated { j: f64, h1_norm: f64 },
    #[error("H2 has no nonzero eigenvalue, or an empty kernel")]
    DegenerateKernel,
    #[error("supplied subspace is not the kernel of H2: {0}")]
    SubspaceNotKernel(String),
    #[error("λ={lambda} lies strictly between a={a} and b={b}")]
    PromiseViolated { lambda: f64, a: f64, b: f64 },
    #[error("thresholds a={a} and b={b} do not satisfy b > a")]
    InvalidThresholds { a: f64, b: f64 },
    #[error("input state has length {got}, expected {expected}")]
    StateLength { expected: usize, got: usize },
    #[error("circuit: {0}")]
    Circuit(#[from] CircuitError),
    #[error("clock: {0}")]
    Clock(#[from] ClockError),
}

// --------------------------------------------------------- term plans

/// Precomputed index arithmetic for applying one term.
struct TermPlan {
    coeff: f64,
    mask: usize,
    /// Bit masks of the support, most significant block bit first.
    bits: Vec<usize>,
    /// `scatter[s]`: global bits set by block index `s`.
    scatter: Vec<usize>,
    /// Row-major block entries.
    block: Vec<C64>,
    k: usize,
}

impl TermPlan {
    fn new(n: usize, t: &LocalTerm) -> Self {
        let k = t.support.len();
        let bits: Vec<usize> = t.support.iter().map(|&q| 1usize << (n - 1 - q)).collect();
        let mask = bits.iter().fold(0, |m, b| m | b);
        let scatter = (0..1usize << k)
            .map(|s| {
                bits.iter()
                    .enumerate()
                    .filter(|(j, _)| (s >> (k - 1 - j)) & 1 == 1)
                    .fold(0, |acc, (_, b)| acc | b)
            })
            .collect();
        let dim = 1 << k;
        let block = (0..dim * dim).map(|i| t.block[(i / dim, i % dim)]).collect();
        Self {
            coeff: t.coefficient,
            mask,
            bits,
            scatter,
            block,
            k,
        }
    }

    #[inline]
    fn gather(&self, i: usize) -> usize {
        self.bits.iter().fold(0, |acc, &b| (acc << 1) | (i & b != 0) as usize)
    }
}

fn plans(spec: &HamiltonianSpec) -> Vec<TermPlan> {
    spec.terms
        .iter()
        .filter(|t| t.coefficient != 0.0)
        .map(|t| TermPlan::new(spec.total_qubits, t))
        .collect()
}

fn check_cap(n: usize, cap: usize) -> Result<(), SpectraError> {
    if n > cap {
        Err(SpectraError::DimensionCapExceeded { qubits: n, cap })
    } else {
        Ok(())
    }
}

/// Dense matrix of `spec`; errors above [`DENSE_CAP`].
pub fn realize_dense(spec: &HamiltonianSpec) -> Result<CMat, SpectraError> {
    check_cap(spec.total_qubits, DENSE_CAP)?;
    Ok(realize_dense_uncapped(spec))
}

/// [`realize_dense`] without the cap check; columns are filled in parallel.
pub fn realize_dense_uncapped(spec: &HamiltonianSpec) -> CMat {
    let dim = 1usize << spec.total_qubits;
    let plans = plans(spec);
    let mut m = CMat::zeros(dim, dim);
    m.as_mut_slice()
        .par_chunks_mut(dim)
        .enumerate()
        .for_each(|(col, column)| {
            for p in &plans {
                let sc = p.gather(col);
                let rest = col & !p.mask;
                let bd = 1 << p.k;
                for sr in 0..bd {
                    let v = p.block[sr * bd + sc];
                    if v != ZERO {
                        column[rest | p.scatter[sr]] += v * p.coeff;
                    }
                }
            }
        });
    m
}

/// Diagonal of `spec` (exact even for non-diagonal specs).
pub fn diagonal(spec: &HamiltonianSpec) -> Vec<f64> {
    let dim = 1usize << spec.total_qubits;
    let plans = plans(spec);
    (0..dim)
        .into_par_iter()
        .map(|i| {
            plans
                .iter()
                .map(|p| {
                    let s = p.gather(i);
                    p.coeff * p.block[s * (1 << p.k) + s].re
                })
                .sum()
        })
        .collect()
}

/// Matrix-free `H·v`.
pub struct SpecOperator {
    dim: usize,
    plans: Vec<TermPlan>,
}

impl SpecOperator {
    pub fn new(spec: &HamiltonianSpec) -> Self {
        Self {
            dim: 1 << spec.total_qubits,
            plans: plans(spec),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `out = H·v`, each output row pulled independently.
    pub fn apply(&self, v: &[C64], out: &mut [C64]) {
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let mut acc = ZERO;
            for p in &self.plans {
                let si = p.gather(i);
                let rest = i & !p.mask;
                let bd = 1 << p.k;
                let row = &p.block[si * bd..(si + 1) * bd];
                let mut s = ZERO;
                for (sc, &b) in row.iter().enumerate() {
                    if b != ZERO {
                        s += b * v[rest | p.scatter[sc]];
                    }
                }
                acc += s * p.coeff;
            }
            *o = acc;
        });
    }
}

/// `⟨v|H|v⟩ / ⟨v|v⟩`.
pub fn rayleigh_quotient(spec: &HamiltonianSpec, v: &[C64]) -> f64 {
    let op = SpecOperator::new(spec);
    let mut w = vec![ZERO; v.len()];
    op.apply(v, &mut w);
    let num: C64 = v.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
    let den: f64 = v.iter().map(|a| a.norm_sqr()).sum();
    num.re / den
}

// ------------------------------------------------------- eigensolvers

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dense,
    Iterative,
    /// Diagonal spec: minimum read off directly.
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    Auto,
    Dense,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub method: MethodChoice,
    pub seed: u64,
    pub tol: f64,
    pub krylov_dim: usize,
    pub max_restarts: usize,
    pub dense_cap: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: MethodChoice::Auto,
            seed: 0x5eed,
            tol: LANCZOS_TOL,
            krylov_dim: 60,
            max_restarts: 500,
            dense_cap: DENSE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    pub ground_energy: f64,
    pub ground_vector: Option<CVec>,
    pub method: Method,
    /// `‖Hv − λv‖` for the reported pair.
    pub residual: f64,
}

/// Eigenvalues and eigenvectors of a Hermitian matrix, ascending. Uses the
/// real solver when every entry is real.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let (vals, vecs) = if m.iter().all(|z| z.im == 0.0) {
        let r = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].re);
        let e = SymmetricEigen::new(r);
        (e.eigenvalues.as_slice().to_vec(), e.eigenvectors.map(|x| C64::new(x, 0.0)))
    } else {
        let e = SymmetricEigen::new(m.clone());
        (e.eigenvalues.as_slice().to_vec(), e.eigenvectors)
    };
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let sorted_vals = order.iter().map(|&i| vals[i]).collect();
    let sorted_vecs = CMat::from_fn(vecs.nrows(), vecs.ncols(), |i, j| vecs[(i, order[j])]);
    (sorted_vals, sorted_vecs)
}

/// Eigenvalues only, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let mut v: Vec<f64> = if m.iter().all(|z| z.im == 0.0) {
        let r = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].re);
        SymmetricEigen::new(r).eigenvalues.as_slice().to_vec()
    } else {
        m.clone().symmetric_eigenvalues().as_slice().to_vec()
    };
    v.sort_by(f64::total_cmp);
    v
}

/// All eigenvalues of `spec`, ascending.
pub fn eigenvalues(spec: &HamiltonianSpec) -> Result<Vec<f64>, SpectraError> {
    if spec.is_diagonal() {
        check_cap(spec.total_qubits, ITERATIVE_CAP)?;
        let mut d = diagonal(spec);
        d.sort_by(f64::total_cmp);
        return Ok(d);
    }
    Ok(hermitian_eigenvalues(&realize_dense(spec)?))
}

pub fn ground_energy(spec: &HamiltonianSpec) -> Result<SpectrumResult, SpectraError> {
    ground_energy_with(spec, &SolverOptions::default())
}

pub fn ground_energy_with(spec: &HamiltonianSpec, opts: &SolverOptions) -> Result<SpectrumResult, SpectraError> {
    let n = spec.total_qubits;
    check_cap(n, ITERATIVE_CAP)?;
    let dim = 1usize << n;
    if opts.method == MethodChoice::Auto && spec.is_diagonal() {
        let d = diagonal(spec);
        let (i, &e) = d
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
            .expect("dim ≥ 1");
        let mut v = CVec::zeros(dim);
        v[i] = C64::new(1.0, 0.0);
        return Ok(SpectrumResult {
            ground_energy: e,
            ground_vector: Some(v),
            method: Method::Diagonal,
            residual: 0.0,
        });
    }
    let dense = match opts.method {
        MethodChoice::Dense => true,
        MethodChoice::Iterative => false,
        MethodChoice::Auto => n <= opts.dense_cap,
    };
    if dense {
        check_cap(n, opts.dense_cap)?;
        let m = realize_dense_uncapped(spec);
        let (vals, vecs) = hermitian_eigen(&m);
        let v = vecs.column(0).into_owned();
        let residual = (&m * &v - &v * C64::new(vals[0], 0.0)).norm();
        return Ok(SpectrumResult {
            ground_energy: vals[0],
            ground_vector: Some(v),
            method: Method::Dense,
            residual,
        });
    }
    let op = SpecOperator::new(spec);
    let (e, v, residual) = lanczos_ground(|x, y| op.apply(x, y), dim, opts)?;
    Ok(SpectrumResult {
        ground_energy: e,
        ground_vector: Some(CVec::from_vec(v)),
        method: Method::Iterative,
        residual,
    })
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.par_iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.par_iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(y: &mut [C64], alpha: C64, x: &[C64]) {
    y.par_iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

fn scale(y: &mut [C64], s: f64) {
    y.par_iter_mut().for_each(|v| *v *= s);
}

/// Smallest eigenpair of a Hermitian operator by restarted Lanczos with
/// full reorthogonalization. Each cycle restarts from the current Ritz
/// vector. Returns `(λ, v, ‖Hv − λv‖)`.
pub fn lanczos_ground<F>(apply: F, dim: usize, opts: &SolverOptions) -> Result<(f64, Vec<C64>, f64), SpectraError>
where
    F: Fn(&[C64], &mut [C64]),
{
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v: Vec<C64> = (0..dim)
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let nv = norm(&v);
    scale(&mut v, 1.0 / nv);
    let m = opts.krylov_dim.clamp(1, dim);
    let mut w = vec![ZERO; dim];
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_restarts.max(1) {
        let mut basis = vec![v.clone()];
        let mut alpha = Vec::with_capacity(m);
        let mut beta: Vec<f64> = Vec::with_capacity(m);
        for j in 0..m {
            apply(&basis[j], &mut w);
            let a = dot(&basis[j], &w).re;
            alpha.push(a);
            // full reorthogonalization, twice
            for _ in 0..2 {
                for b in &basis {
                    let p = dot(b, &w);
                    axpy(&mut w, -p, b);
                }
            }
            let bn = norm(&w);
            if j + 1 == m || bn < 1e-12 * (1.0 + a.abs()) {
                break;
            }
            beta.push(bn);
            let mut next = w.clone();
            scale(&mut next, 1.0 / bn);
            basis.push(next);
        }
        let k = alpha.len();
        let t = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j {
                beta[i]
            } else if j + 1 == i {
                beta[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let (idx, &theta) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("k ≥ 1");
        let y: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
        let mut x = vec![ZERO; dim];
        for (i, b) in basis.iter().take(k).enumerate() {
            axpy(&mut x, C64::new(y[i], 0.0), b);
        }
        let nx = norm(&x);
        scale(&mut x, 1.0 / nx);
        apply(&x, &mut w);
        axpy(&mut w, C64::new(-theta, 0.0), &x);
        residual = norm(&w);
        if residual <= opts.tol {
            return Ok((theta, x, residual));
        }
        v = x;
    }
    Err(SpectraError::ConvergenceFailure {
        restarts: opts.max_restarts,
        residual,
    })
}

// -------------------------------------------------- partition function

/// `Z(β) = Σ_p e^{−βE_p}` from the full spectrum.
pub fn partition_function_exact(spec: &HamiltonianSpec, beta: f64) -> Result<f64, SpectraError> {
    Ok(partition_from_spectrum(&eigenvalues(spec)?, beta))
}

pub fn partition_from_spectrum(eigs: &[f64], beta: f64) -> f64 {
    eigs.iter().map(|e| (-beta * e).exp()).sum()
}

/// `ln Z(β)`, stable for large `β`.
pub fn log_partition_function(spec: &HamiltonianSpec, beta: f64) -> Result<f64, SpectraError> {
    Ok(log_partition_from_spectrum(&eigenvalues(spec)?, beta))
}

pub fn log_partition_from_spectrum(eigs: &[f64], beta: f64) -> f64 {
    let top = eigs.iter().map(|e| -beta * e).fold(f64::NEG_INFINITY, f64::max);
    top + eigs.iter().map(|e| (-beta * e - top).exp()).sum::<f64>().ln()
}

// ------------------------------------------------------ history states

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryState {
    /// Amplitudes over `circuit ⊗ clock`, clock qubits least significant.
    pub vector: CVec,
    pub circuit_qubits: usize,
    pub clock_qubits: usize,
    pub total_steps: usize,
}

/// Snapshots `V_t⋯V_1|ψ, 0⟩` for `t = 0..=steps`; `V_t = I` past the last
/// gate.
fn snapshots(circ: &QuantumCircuit, psi: &[C64], steps: usize) -> Result<Vec<Vec<C64>>, SpectraError> {
    let n_in = circ.layout.num_inputs();
    if psi.len() != 1 << n_in {
        return Err(SpectraError::StateLength {
            expected: 1 << n_in,
            got: psi.len(),
        });
    }
    let nq = circ.num_qubits();
    let mut state = embed_input(circ, psi);
    let mut out = vec![state.clone()];
    for t in 1..=steps {
        if let Some(g) = circ.gates.get(t - 1) {
            if g.kind != GateKind::Identity {
                apply_gate(&mut state, nq, g);
            }
        }
        out.push(state.clone());
    }
    Ok(out)
}

/// `Σ_t V_t⋯V_1|ψ, 0⟩ ⊗ |γ_t⟩ / √(T + 1)` over all `T + 1` steps of `sched`.
pub fn history_state(circ: &QuantumCircuit, sched: &ClockSchedule, psi: &[C64]) -> Result<HistoryState, SpectraError> {
    history_state_truncated(circ, sched, psi, sched.total_steps())
}

/// As [`history_state`] but only over steps `0..=steps` (used when the
/// clock path is longer than the encoded circuit).
pub fn history_state_truncated(
    circ: &QuantumCircuit,
    sched: &ClockSchedule,
    psi: &[C64],
    steps: usize,
) -> Result<HistoryState, SpectraError> {
    let nq = circ.num_qubits();
    let n_cl = sched.n_cl;
    check_cap(nq + n_cl, ITERATIVE_CAP)?;
    let snaps = snapshots(circ, psi, steps)?;
    let mut v = CVec::zeros(1 << (nq + n_cl));
    let w = 1.0 / ((steps + 1) as f64).sqrt();
    for (t, s) in snaps.iter().enumerate() {
        let ci = clock_index(sched, t)?;
        for (x, &a) in s.iter().enumerate() {
            if a != ZERO {
                v[(x << n_cl) | ci] += a * w;
            }
        }
    }
    Ok(HistoryState {
        vector: v,
        circuit_qubits: nq,
        clock_qubits: n_cl,
        total_steps: steps,
    })
}

/// History state on `circuit ⊗ (T + 1)`-level clock, index `x·(T + 1) + t`.
pub fn history_state_abstract(circ: &QuantumCircuit, total_steps: usize, psi: &[C64]) -> Result<CVec, SpectraError> {
    let snaps = snapshots(circ, psi, total_steps)?;
    let l = total_steps + 1;
    let dc = snaps[0].len();
    let w = 1.0 / (l as f64).sqrt();
    Ok(CVec::from_fn(dc * l, |i, _| snaps[i % l][i / l] * w))
}

// --------------------------------------------------- projection lemma

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionReport {
    /// `λ(H1 + H2)`.
    pub lambda_full: f64,
    /// `λ(H1|_S)` with `S = ker H2`.
    pub lambda_restricted: f64,
    pub h1_norm: f64,
    /// Smallest nonzero eigenvalue of `H2`.
    pub j: f64,
    pub kernel_dim: usize,
    /// `‖H1‖² / (J − 2‖H1‖)`.
    pub loss: f64,
    /// `λ(H1 + H2) ≥ λ(H1|_S) − loss` (to [`SPECTRAL_TOL`]).
    pub holds: bool,
}

/// Checks `λ(H1 + H2) ≥ λ(H1|_S) − ‖H1‖²/(J − 2‖H1‖)` densely. `S` is the
/// numerical kernel of `H2`; a supplied `subspace` (columns) must span it.
pub fn projection_lemma_check(
    h1: &HamiltonianSpec,
    h2: &HamiltonianSpec,
    subspace: Option<&CMat>,
) -> Result<ProjectionReport, SpectraError> {
    let m1 = realize_dense(h1)?;
    let m2 = realize_dense(h2)?;
    projection_lemma_check_dense(&m1, &m2, subspace)
}

pub fn projection_lemma_check_dense(
    m1: &CMat,
    m2: &CMat,
    subspace: Option<&CMat>,
) -> Result<ProjectionReport, SpectraError> {
    let (vals, vecs) = hermitian_eigen(m2);
    let kernel: Vec<usize> = (0..vals.len()).filter(|&i| vals[i].abs() < SPECTRAL_TOL).collect();
    let j = vals
        .iter()
        .copied()
        .filter(|v| v.abs() >= SPECTRAL_TOL)
        .fold(f64::INFINITY, f64::min);
    if kernel.is_empty() || !j.is_finite() {
        return Err(SpectraError::DegenerateKernel);
    }
    let basis = match subspace {
        None => CMat::from_fn(vecs.nrows(), kernel.len(), |r, c| vecs[(r, kernel[c])]),
        Some(s) => {
            if s.ncols() != kernel.len() {
                return Err(SpectraError::SubspaceNotKernel(format!(
                    "{} vectors for a kernel of dimension {}",
                    s.ncols(),
                    kernel.len()
                )));
            }
            let leak = (m2 * s).norm();
            if leak > 1e-9 * (1.0 + s.norm()) {
                return Err(SpectraError::SubspaceNotKernel(format!("‖H2·S‖ = {leak:.3e}")));
            }
            let q = s.clone().qr().q();
            if q.ncols() != kernel.len() {
                return Err(SpectraError::SubspaceNotKernel("rank deficient".into()));
            }
            q
        }
    };
    let h1_norm = hermitian_norm(m1);
    if j <= 2.0 * h1_norm {
        return Err(SpectraError::HypothesisViolated { j, h1_norm });
    }
    let restricted = basis.adjoint() * m1 * &basis;
    let lambda_restricted = hermitian_eigenvalues(&restricted)[0];
    let lambda_full = hermitian_eigenvalues(&(m1 + m2))[0];
    let loss = h1_norm * h1_norm / (j - 2.0 * h1_norm);
    Ok(ProjectionReport {
        lambda_full,
        lambda_restricted,
        h1_norm,
        j,
        kernel_dim: kernel.len(),
        loss,
        holds: lambda_full >= lambda_restricted - loss - SPECTRAL_TOL,
    })
}

// ------------------------------------------------------------ decision

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LhAnswer {
    Yes,
    No,
}

/// YES iff `λ ≤ a`, NO iff `λ ≥ b`; anything strictly between breaks the
/// promise.
pub fn decide_lh(spec: &HamiltonianSpec, a: f64, b: f64) -> Result<LhAnswer, SpectraError> {
    if b <= a {
        return Err(SpectraError::InvalidThresholds { a, b });
    }
    decide_from_lambda(ground_energy(spec)?.ground_energy, a, b)
}

pub fn decide_from_lambda(lambda: f64, a: f64, b: f64) -> Result<LhAnswer, SpectraError> {
    if lambda <= a + SPECTRAL_TOL {
        Ok(LhAnswer::Yes)
    } else if lambda >= b - SPECTRAL_TOL {
        Ok(LhAnswer::No)
    } else {
        Err(SpectraError::PromiseViolated { lambda, a, b })
    }
}
