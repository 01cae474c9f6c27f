//! Local-term Hamiltonians and the reductions that produce them.
//!
//! * [`build_trivial_sat_hamiltonian`]: one diagonal projector per clause.
//! * [`build_hu_5local`]: circuit-to-Hamiltonian with a Johnson-graph clock,
//!   `H_in + H_out + H_prop + H_stab`, locality `d + 3`.
//! * [`build_restricted_prop`]: the same operator restricted to legal clock
//!   states, written on an abstract `(T + 1)`-level clock.
//! * [`build_hu_3local`]: the CZ-sandwich variant on a two-step `d = 2`
//!   clock, locality 3, with penalty coefficients chosen by the projection
//!   lemma.
//!
//! Circuit qubits come first; clock qubit `i` (1-based) sits at
//! `circuit_qubits + i − 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{CircuitError, CzSandwichCircuit, GateKind, QuantumCircuit};
use crate::clock::{
    binomial, hop_roles, transition_descriptor, validate_schedule, ClockError, ClockSchedule,
    TransitionKind, ViolationKind,
};
use crate::cnf::CnfFormula;
use crate::linalg::{
    basis_projector, c, hermitian_norm, hermiticity_defect, identity, ketbra, kron, kron_all,
    op_norm, sort_support, CMat, C64, ONE, ZERO,
};

/// Hermiticity tolerance for term blocks.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HamiltonianError {
    #[error("circuit has {gates} gates but the clock only has {steps} steps")]
    ScheduleTooShort { gates: usize, steps: usize },
    #[error("gate {index} ({kind}) acts on more than two qubits")]
    UnsupportedGate { index: usize, kind: GateKind },
    #[error("schedule lacks the two-step overlap property at step {index}")]
    ScheduleLacksTwoStepProperty { index: usize },
    #[error("normal form needs {steps} steps, the clock provides {available}")]
    GateCountExceedsSchedule { steps: usize, available: usize },
    #[error("thresholds a={a} and b={b} do not satisfy b > a")]
    InvalidThresholds { a: f64, b: f64 },
    #[error("term block is not Hermitian (defect {defect:.3e})")]
    NotHermitian { defect: f64 },
    #[error("term block is {rows}x{cols}, support of {support} qubits needs {expected}")]
    BlockShape {
        rows: usize,
        cols: usize,
        support: usize,
        expected: usize,
    },
    #[error("qubit {qubit} repeated in a term support")]
    DuplicateQubit { qubit: usize },
    #[error("term touches qubit {qubit}, spec has {total}")]
    SupportOutOfRange { qubit: usize, total: usize },
    #[error("term support of {support} qubits exceeds locality {locality}")]
    LocalityViolated { support: usize, locality: usize },
    #[error("clock: {0}")]
    Clock(#[from] ClockError),
    #[error("circuit: {0}")]
    Circuit(#[from] CircuitError),
    #[error("json: {0}")]
    Json(String),
}

/// Which part of a construction a term belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermGroup {
    Clause,
    In,
    Out,
    Prop,
    Prop1,
    Qubit,
    Time,
    Stab,
}

impl TermGroup {
    /// Penalty (stabilizer) terms; everything else is the `H1` part of the
    /// projection-lemma split.
    pub fn is_stab(self) -> bool {
        self == TermGroup::Stab
    }
}

/// `coefficient · block` acting on `support` (ascending qubit ids, first
/// most significant within the block).
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTerm {
    pub coefficient: f64,
    pub support: Vec<usize>,
    pub block: CMat,
    pub group: TermGroup,
    pub step: Option<usize>,
}

impl LocalTerm {
    /// Builds a term from a block written on `qubits` in any order.
    pub fn new(
        coefficient: f64,
        qubits: &[usize],
        block: CMat,
        group: TermGroup,
        step: Option<usize>,
    ) -> Result<Self, HamiltonianError> {
        let expected = 1usize << qubits.len();
        if block.nrows() != expected || block.ncols() != expected {
            return Err(HamiltonianError::BlockShape {
                rows: block.nrows(),
                cols: block.ncols(),
                support: qubits.len(),
                expected,
            });
        }
        for (i, q) in qubits.iter().enumerate() {
            if qubits[i + 1..].contains(q) {
                return Err(HamiltonianError::DuplicateQubit { qubit: *q });
            }
        }
        let defect = hermiticity_defect(&block);
        if defect > HERMITIAN_TOL {
            return Err(HamiltonianError::NotHermitian { defect });
        }
        let (support, block) = sort_support(qubits, &block);
        Ok(Self {
            coefficient,
            support,
            block,
            group,
            step,
        })
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.block.nrows();
        (0..n).all(|i| (0..n).all(|j| i == j || self.block[(i, j)] == ZERO))
    }

    pub fn is_real(&self) -> bool {
        self.block.iter().all(|z| z.im == 0.0)
    }

    /// `|coefficient| · ‖block‖`.
    pub fn norm(&self) -> f64 {
        self.coefficient.abs() * op_norm(&self.block)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub a: f64,
    pub b: f64,
}

impl Thresholds {
    pub fn checked(a: f64, b: f64) -> Result<Self, HamiltonianError> {
        if b > a {
            Ok(Self { a, b })
        } else {
            Err(HamiltonianError::InvalidThresholds { a, b })
        }
    }
}

/// Penalty coefficients of the 3-local construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub j_in: f64,
    pub j_prop1: f64,
    pub j_prop2: f64,
    pub j_stab: f64,
    /// `‖H1‖` used to pick `j_stab`.
    pub h1_norm: f64,
    /// Whether `h1_norm` is exact (dense) or a triangle-inequality bound.
    pub h1_norm_exact: bool,
}

/// Register bookkeeping for specs produced from circuits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecLayout {
    pub n_in: usize,
    pub n_anc: usize,
    pub n_cl: usize,
    pub d: usize,
    /// Id of clock element 1.
    pub clock_offset: usize,
    /// Last clock step the Hamiltonian treats as legal.
    pub total_steps: usize,
    /// Gates (or normal-form steps) of the encoded circuit.
    pub circuit_steps: usize,
    pub out: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSpec {
    pub total_qubits: usize,
    pub locality: usize,
    pub terms: Vec<LocalTerm>,
    pub thresholds: Option<Thresholds>,
    pub coefficients: Option<Coefficients>,
    pub layout: Option<SpecLayout>,
    /// Declared bound on every `|coefficient|·‖block‖`, when the
    /// construction has one.
    pub term_norm_bound: Option<f64>,
    /// Circuit soundness parameter used for the thresholds.
    pub mu: Option<f64>,
}

impl HamiltonianSpec {
    /// Checks supports against `total_qubits` and `locality`.
    pub fn new(total_qubits: usize, locality: usize, terms: Vec<LocalTerm>) -> Result<Self, HamiltonianError> {
        for t in &terms {
            if let Some(&q) = t.support.iter().find(|&&q| q >= total_qubits) {
                return Err(HamiltonianError::SupportOutOfRange {
                    qubit: q,
                    total: total_qubits,
                });
            }
            if t.support.len() > locality {
                return Err(HamiltonianError::LocalityViolated {
                    support: t.support.len(),
                    locality,
                });
            }
        }
        Ok(Self {
            total_qubits,
            locality,
            terms,
            thresholds: None,
            coefficients: None,
            layout: None,
            term_norm_bound: None,
            mu: None,
        })
    }

    pub fn is_diagonal(&self) -> bool {
        self.terms.iter().all(LocalTerm::is_diagonal)
    }

    /// Terms satisfying `keep`, same register and metadata.
    pub fn filtered(&self, keep: impl Fn(&LocalTerm) -> bool) -> Self {
        Self {
            terms: self.terms.iter().filter(|t| keep(t)).cloned().collect(),
            ..self.clone()
        }
    }

    /// Every term scaled by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.coefficient *= s;
        }
        out
    }

    /// Triangle-inequality bound `Σ |c_i|·‖B_i‖`.
    pub fn norm_upper_bound(&self) -> f64 {
        self.terms.iter().map(LocalTerm::norm).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SpecJson::from(self)).expect("spec serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, HamiltonianError> {
        let j: SpecJson = serde_json::from_str(s).map_err(|e| HamiltonianError::Json(e.to_string()))?;
        j.try_into()
    }
}

/// Largest term support.
pub fn locality_of(spec: &HamiltonianSpec) -> usize {
    spec.terms.iter().map(|t| t.support.len()).max().unwrap_or(0)
}

// ---------------------------------------------------------------- JSON

#[derive(Serialize, Deserialize)]
struct TermJson {
    coeff: f64,
    support: Vec<usize>,
    /// Row-major `[re, im]` pairs.
    block: Vec<[f64; 2]>,
    group: TermGroup,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    step: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct SpecJson {
    total_qubits: usize,
    locality: usize,
    thresholds: Option<Thresholds>,
    coefficients: Option<Coefficients>,
    #[serde(default)]
    layout: Option<SpecLayout>,
    #[serde(default)]
    term_norm_bound: Option<f64>,
    #[serde(default)]
    mu: Option<f64>,
    terms: Vec<TermJson>,
}

impl From<&HamiltonianSpec> for SpecJson {
    fn from(s: &HamiltonianSpec) -> Self {
        let terms = s
            .terms
            .iter()
            .map(|t| {
                let n = t.block.nrows();
                let mut block = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        let z = t.block[(i, j)];
                        block.push([z.re, z.im]);
                    }
                }
                TermJson {
                    coeff: t.coefficient,
                    support: t.support.clone(),
                    block,
                    group: t.group,
                    step: t.step,
                }
            })
            .collect();
        SpecJson {
            total_qubits: s.total_qubits,
            locality: s.locality,
            thresholds: s.thresholds,
            coefficients: s.coefficients,
            layout: s.layout.clone(),
            term_norm_bound: s.term_norm_bound,
            mu: s.mu,
            terms,
        }
    }
}

impl TryFrom<SpecJson> for HamiltonianSpec {
    type Error = HamiltonianError;

    fn try_from(j: SpecJson) -> Result<Self, Self::Error> {
        let terms = j
            .terms
            .into_iter()
            .map(|t| {
                let dim = 1usize << t.support.len();
                if t.block.len() != dim * dim {
                    return Err(HamiltonianError::BlockShape {
                        rows: t.block.len(),
                        cols: 1,
                        support: t.support.len(),
                        expected: dim,
                    });
                }
                let block = CMat::from_row_iterator(dim, dim, t.block.iter().map(|p| C64::new(p[0], p[1])));
                LocalTerm::new(t.coeff, &t.support, block, t.group, t.step)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut spec = HamiltonianSpec::new(j.total_qubits, j.locality, terms)?;
        spec.thresholds = j.thresholds;
        spec.coefficients = j.coefficients;
        spec.layout = j.layout;
        spec.term_norm_bound = j.term_norm_bound;
        spec.mu = j.mu;
        Ok(spec)
    }
}

// ------------------------------------------------------------ builders

/// One diagonal term per clause: the projector onto the clause's unique
/// falsifying sub-assignment, so the diagonal entry at `x` counts the
/// clauses `x` violates. Thresholds `a = 1/n`, `b = 1 − 1/n` are recorded
/// as given (they only separate for `n ≥ 3`).
pub fn build_trivial_sat_hamiltonian(phi: &CnfFormula) -> HamiltonianSpec {
    let terms = phi
        .clauses()
        .iter()
        .map(|cl| {
            let support: Vec<usize> = cl.literals().iter().map(|l| l.var - 1).collect();
            LocalTerm::new(
                1.0,
                &support,
                basis_projector(&cl.falsifying_bits()),
                TermGroup::Clause,
                None,
            )
            .expect("projector is a valid block")
        })
        .collect();
    let mut spec = HamiltonianSpec::new(phi.num_vars(), phi.arity_bound(), terms).expect("supports in range");
    let n = phi.num_vars().max(1) as f64;
    spec.thresholds = Some(Thresholds {
        a: 1.0 / n,
        b: 1.0 - 1.0 / n,
    });
    spec.term_norm_bound = Some(1.0);
    spec
}

/// Threshold policy of the 5-local construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveLocalConfig {
    /// `a = a_const · μ / (T + 1)`.
    pub a_const: f64,
    /// `b = b_const · (1 − √μ) / (T + 1)³`.
    pub b_const: f64,
    /// Soundness μ; `None` picks 0 for deterministic circuits and
    /// `2^{−n_in}` otherwise.
    pub mu: Option<f64>,
}

impl Default for FiveLocalConfig {
    fn default() -> Self {
        Self {
            a_const: 2.0,
            b_const: 0.125,
            mu: None,
        }
    }
}

pub fn default_mu(circ: &QuantumCircuit) -> f64 {
    if circ.deterministic {
        0.0
    } else {
        0.5f64.powi(circ.layout.num_inputs() as i32)
    }
}

fn ones_projector(k: usize) -> CMat {
    basis_projector(&vec![true; k])
}

fn proj1() -> CMat {
    ketbra(1, 1)
}

fn proj0() -> CMat {
    ketbra(0, 0)
}

/// Gate matrix and qubits, or `None` for steps where `V_t = I`.
fn step_gate(circ_gates: &[crate::circuit::Gate], t: usize) -> Option<(Vec<usize>, CMat)> {
    let g = circ_gates.get(t.wrapping_sub(1))?;
    if g.kind == GateKind::Identity {
        return None;
    }
    Some((g.qubits(), g.matrix()))
}

/// The `(d + 3)`-local circuit Hamiltonian on `circuit ⊗ clock`.
pub fn build_hu_5local(
    circ: &QuantumCircuit,
    sched: &ClockSchedule,
    cfg: &FiveLocalConfig,
) -> Result<HamiltonianSpec, HamiltonianError> {
    for (index, g) in circ.gates.iter().enumerate() {
        if g.arity() > 2 {
            return Err(HamiltonianError::UnsupportedGate { index, kind: g.kind });
        }
    }
    let g = circ.len();
    let big_t = sched.total_steps();
    if g > big_t {
        return Err(HamiltonianError::ScheduleTooShort { gates: g, steps: big_t });
    }
    let nq = circ.num_qubits();
    let d = sched.d;
    let cq = |i: usize| nq + i - 1;
    let clock_qs = |s: &[usize]| s.iter().map(|&i| cq(i)).collect::<Vec<_>>();
    let mut terms = Vec::new();

    // H_in: ancillas must start at |0⟩.
    let s0 = clock_qs(sched.vertex(0)?);
    for a in circ.layout.ancillas.clone() {
        let mut qs = vec![a];
        qs.extend(&s0);
        terms.push(LocalTerm::new(
            1.0,
            &qs,
            kron(&proj1(), &ones_projector(d)),
            TermGroup::In,
            Some(0),
        )?);
    }

    // H_out: reject at the final step.
    let mut qs = vec![circ.layout.out];
    qs.extend(clock_qs(sched.vertex(big_t)?));
    terms.push(LocalTerm::new(
        1.0,
        &qs,
        kron(&proj0(), &ones_projector(d)),
        TermGroup::Out,
        Some(big_t),
    )?);

    // H_prop,t for t = 1..T, with V_t = I past the last gate.
    for t in 1..=big_t {
        let desc = transition_descriptor(sched, t, TransitionKind::Forward)?;
        let (h, l, e) = (desc.held.len(), desc.leaving.len(), desc.entering.len());
        let f = desc.block();
        let ones = |k: usize| ones_projector(k);
        let p_t = kron_all(&[ones(h), identity(1 << l), ones(e)]);
        let p_prev = kron_all(&[ones(h), ones(l), identity(1 << e)]);
        let mut qs: Vec<usize> = Vec::new();
        let (v, dim_v) = match step_gate(&circ.gates, t) {
            Some((gq, m)) => {
                qs.extend(gq);
                let dim = m.nrows();
                (m, dim)
            }
            None => (identity(1), 1),
        };
        qs.extend(clock_qs(&desc.qubits()));
        let vf = kron(&v, &f);
        let block = (kron(&identity(dim_v), &(p_t + p_prev)) - &vf - vf.adjoint()) * c(0.5);
        terms.push(LocalTerm::new(1.0, &qs, block, TermGroup::Prop, Some(t))?);
    }

    terms.extend(stab_terms_5local(sched, nq)?);

    let total = nq + sched.n_cl;
    terms.sort_by_key(|t| (t.group, t.step));
    let mut spec = HamiltonianSpec::new(total, d + 3, terms)?;
    let mu = cfg.mu.unwrap_or_else(|| default_mu(circ));
    let tp1 = (big_t + 1) as f64;
    let a = cfg.a_const * mu / tp1;
    let b = cfg.b_const * (1.0 - mu.sqrt()) / tp1.powi(3);
    spec.thresholds = Some(Thresholds::checked(a, b)?);
    spec.mu = Some(mu);
    spec.term_norm_bound = Some(1.0);
    spec.layout = Some(SpecLayout {
        n_in: circ.layout.num_inputs(),
        n_anc: circ.layout.num_ancillas(),
        n_cl: sched.n_cl,
        d,
        clock_offset: nq,
        total_steps: big_t,
        circuit_steps: g,
        out: circ.layout.out,
    });
    Ok(spec)
}

/// All `k`-subsets of `[1, n]`, lexicographic.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..=n {
            if n - i + 1 < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(1, n, k, &mut Vec::new(), &mut out);
    out
}

/// `H_{>d} + H_{<d} − ((C − 1)/C)·I` with `C = C(n_cl, d)`; zero exactly on
/// weight-d clock strings.
pub fn stab_terms_5local(sched: &ClockSchedule, offset: usize) -> Result<Vec<LocalTerm>, HamiltonianError> {
    let (n_cl, d) = (sched.n_cl, sched.d);
    let cc = binomial(n_cl, d) as f64;
    let place = |s: &[usize]| s.iter().map(|&i| offset + i - 1).collect::<Vec<_>>();
    let mut terms = Vec::new();
    for s in subsets(n_cl, d + 1) {
        terms.push(LocalTerm::new(1.0, &place(&s), ones_projector(d + 1), TermGroup::Stab, None)?);
    }
    let not_ones = identity(1 << d) - ones_projector(d);
    for s in subsets(n_cl, d) {
        terms.push(LocalTerm::new(1.0 / cc, &place(&s), not_ones.clone(), TermGroup::Stab, None)?);
    }
    terms.push(LocalTerm::new(-(cc - 1.0) / cc, &[], identity(1), TermGroup::Stab, None)?);
    Ok(terms)
}

/// `H'` on `circuit ⊗ (T + 1)`-level clock; basis index
/// `x·(T + 1) + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedProp {
    pub circuit_qubits: usize,
    pub total_steps: usize,
    pub h_in: CMat,
    pub h_out: CMat,
    pub h_prop: CMat,
}

impl RestrictedProp {
    pub fn total(&self) -> CMat {
        &self.h_in + &self.h_out + &self.h_prop
    }

    pub fn dim(&self) -> usize {
        (1 << self.circuit_qubits) * (self.total_steps + 1)
    }
}

/// Builds `H' = H'_in + H'_out + H'_prop`. `H'_in` penalises each set
/// ancilla separately (`Σ_i |1⟩⟨1|_{anc i} ⊗ |0⟩⟨0|`), matching what
/// `H_in` of the full construction restricts to.
pub fn build_restricted_prop(circ: &QuantumCircuit, total_steps: usize) -> Result<RestrictedProp, HamiltonianError> {
    for (index, g) in circ.gates.iter().enumerate() {
        if g.arity() > 2 {
            return Err(HamiltonianError::UnsupportedGate { index, kind: g.kind });
        }
    }
    if circ.len() > total_steps {
        return Err(HamiltonianError::ScheduleTooShort {
            gates: circ.len(),
            steps: total_steps,
        });
    }
    let nq = circ.num_qubits();
    if nq > crate::circuit::UNITARY_QUBIT_CAP {
        return Err(CircuitError::CapExceeded {
            qubits: nq,
            cap: crate::circuit::UNITARY_QUBIT_CAP,
        }
        .into());
    }
    let dc = 1usize << nq;
    let l = total_steps + 1;
    let clock = |a: usize, b: usize| {
        let mut m = CMat::zeros(l, l);
        m[(a, b)] = ONE;
        m
    };
    let mut anc_count = CMat::zeros(dc, dc);
    for x in 0..dc {
        let ones = circ
            .layout
            .ancillas
            .clone()
            .filter(|&q| (x >> (nq - 1 - q)) & 1 == 1)
            .count();
        anc_count[(x, x)] = c(ones as f64);
    }
    let h_in = kron(&anc_count, &clock(0, 0));
    let mut out0 = CMat::zeros(dc, dc);
    for x in 0..dc {
        if (x >> (nq - 1 - circ.layout.out)) & 1 == 0 {
            out0[(x, x)] = ONE;
        }
    }
    let h_out = kron(&out0, &clock(total_steps, total_steps));
    let mut h_prop = CMat::zeros(dc * l, dc * l);
    for t in 1..=total_steps {
        let v = match circ.gates.get(t - 1) {
            Some(g) => crate::circuit::gates_unitary(std::slice::from_ref(g), nq)?,
            None => identity(dc),
        };
        let fwd = kron(&v, &clock(t, t - 1));
        h_prop += (kron(&identity(dc), &(clock(t, t) + clock(t - 1, t - 1))) - &fwd - fwd.adjoint()) * c(0.5);
    }
    Ok(RestrictedProp {
        circuit_qubits: nq,
        total_steps,
        h_in,
        h_out,
        h_prop,
    })
}

/// Coefficient policy for the 3-local construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeLocalConfig {
    /// `J_prop1`; `None` means `T + 1`.
    pub j_prop1: Option<f64>,
    /// Ratio `J_prop2 / J_prop1` and `J_in / J_prop2`.
    pub cascade: f64,
    /// `J_stab`; `None` derives it from `‖H1‖` so the projection-lemma loss
    /// `‖H1‖² / (J − 2‖H1‖)` stays below 1/8.
    pub j_stab: Option<f64>,
    /// Largest register for which `‖H1‖` is computed exactly.
    pub dense_norm_cap: usize,
    /// Soundness parameter recorded in the thresholds `(μ, ½ − μ)`; `None`
    /// means 0 for deterministic circuits and `2^{−n_in}` otherwise.
    pub mu: Option<f64>,
}

impl Default for ThreeLocalConfig {
    fn default() -> Self {
        Self {
            j_prop1: None,
            cascade: 4.0,
            j_stab: None,
            dense_norm_cap: 10,
            mu: None,
        }
    }
}

/// `J_stab = 2‖H1‖ + 8‖H1‖² + 1`, which makes the projection-lemma loss
/// strictly below 1/8.
pub fn j_stab_for(h1_norm: f64) -> f64 {
    2.0 * h1_norm + 8.0 * h1_norm * h1_norm + 1.0
}

/// `|0⟩⟨1|` on `from`'s private qubit and `|1⟩⟨0|` on `to`'s: the clock
/// hop `|γ_to⟩⟨γ_from|` restricted to the two qubits that change.
fn hop_block() -> CMat {
    kron(&ketbra(0, 1), &ketbra(1, 0))
}

/// The 3-local circuit Hamiltonian on `circuit ⊗ clock` for a CZ-sandwich
/// circuit and a two-step `d = 2` clock.
pub fn build_hu_3local(
    czc: &CzSandwichCircuit,
    sched: &ClockSchedule,
    cfg: &ThreeLocalConfig,
) -> Result<HamiltonianSpec, HamiltonianError> {
    if sched.d != 2 {
        return Err(ClockError::InvalidParameters {
            n_cl: sched.n_cl,
            d: sched.d,
            reason: "the 3-local clock needs d = 2".into(),
        }
        .into());
    }
    let report = validate_schedule(sched, true);
    if let Some(v) = report.violations.first() {
        if v.kind == ViolationKind::TwoStepOverlap {
            return Err(HamiltonianError::ScheduleLacksTwoStepProperty { index: v.index });
        }
        return Err(ClockError::InvalidParameters {
            n_cl: sched.n_cl,
            d: sched.d,
            reason: format!("schedule violates {:?} at {}", v.kind, v.index),
        }
        .into());
    }
    if let Err(t) = czc.check() {
        let index = t.saturating_sub(1);
        let kind = czc.gates.get(index).map_or(GateKind::Identity, |g| g.kind);
        return Err(HamiltonianError::UnsupportedGate { index, kind });
    }
    let big_t = czc.total_steps();
    let big_l = sched.total_steps();
    if big_t > big_l {
        return Err(HamiltonianError::GateCountExceedsSchedule {
            steps: big_t,
            available: big_l,
        });
    }
    let nq = czc.layout.num_qubits;
    let cq = |i: usize| nq + i - 1;
    let pair = |t: usize| -> Result<Vec<usize>, HamiltonianError> {
        Ok(sched.vertex(t)?.iter().map(|&i| cq(i)).collect())
    };
    let p11 = ones_projector(2);
    // Symmetric hop between steps a and b on the two qubits that change.
    let hop = |a: usize, b: usize| -> Result<(Vec<usize>, CMat), HamiltonianError> {
        let (leaving, entering, _) = hop_roles(sched, a, b)?;
        debug_assert_eq!((leaving.len(), entering.len()), (1, 1));
        let qs = vec![cq(leaving[0]), cq(entering[0])];
        let h = hop_block();
        Ok((qs, &h + h.adjoint()))
    };

    let j_prop1 = cfg.j_prop1.unwrap_or((big_t + 1) as f64);
    let j_prop2 = cfg.cascade * j_prop1;
    let j_in = cfg.cascade * j_prop2;
    let mut terms = Vec::new();

    // (T + 1)·H_out
    let mut qs = vec![czc.layout.out];
    qs.extend(pair(big_t)?);
    terms.push(LocalTerm::new(
        (big_t + 1) as f64,
        &qs,
        kron(&proj0(), &p11),
        TermGroup::Out,
        Some(big_t),
    )?);

    // J_in·H_in
    for a in czc.layout.ancillas.clone() {
        let mut qs = vec![a];
        qs.extend(pair(0)?);
        terms.push(LocalTerm::new(j_in, &qs, kron(&proj1(), &p11), TermGroup::In, Some(0))?);
    }

    // J_prop1·H_prop,t for one-qubit steps.
    for &t in &czc.t1_set {
        terms.push(LocalTerm::new(0.5 * j_prop1, &pair(t)?, p11.clone(), TermGroup::Prop1, Some(t))?);
        terms.push(LocalTerm::new(0.5 * j_prop1, &pair(t - 1)?, p11.clone(), TermGroup::Prop1, Some(t))?);
        let (leaving, entering, _) = hop_roles(sched, t - 1, t)?;
        let clock_qs = [cq(leaving[0]), cq(entering[0])];
        let g = czc.gate_at(t);
        let (mut qs, u) = if g.kind == GateKind::Identity {
            (Vec::new(), identity(1))
        } else {
            (g.qubits(), g.matrix())
        };
        qs.extend(clock_qs);
        let fwd = kron(&u, &hop_block());
        let block = (&fwd + fwd.adjoint()) * c(-0.5);
        terms.push(LocalTerm::new(j_prop1, &qs, block, TermGroup::Prop1, Some(t))?);
    }

    // J_prop2·(H_qubit,t + H_time,t) for CZ steps.
    let o = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(-1.0), c(0.5)]));
    let in_range = |t: isize| t >= 0 && t as usize <= big_t;
    for (&t, &(f, s)) in czc.t2_set.iter().zip(&czc.cz_pairs) {
        let (cqs, h) = hop(t - 1, t)?;
        for q in [f, s] {
            let mut qs = vec![q];
            qs.extend(&cqs);
            terms.push(LocalTerm::new(j_prop2, &qs, kron(&o, &h), TermGroup::Qubit, Some(t))?);
        }
        let ti = t as isize;
        for (base, weights) in [(ti, [1.0, 6.0, 1.0]), (ti - 3, [1.0, 6.0, 1.0])] {
            let steps = [base, base + 1, base + 2];
            for (k, &u) in steps.iter().enumerate() {
                if in_range(u) {
                    let w = weights[k] / 8.0;
                    terms.push(LocalTerm::new(j_prop2 * w, &pair(u as usize)?, p11.clone(), TermGroup::Time, Some(t))?);
                }
            }
            for (a, b, w) in [(0, 2, 2.0), (0, 1, 1.0), (1, 2, 1.0)] {
                let (ua, ub) = (steps[a], steps[b]);
                if in_range(ua) && in_range(ub) {
                    let (qs, h) = hop(ua as usize, ub as usize)?;
                    terms.push(LocalTerm::new(j_prop2 * w / 8.0, &qs, h, TermGroup::Time, Some(t))?);
                }
            }
        }
    }

    let total = nq + sched.n_cl;
    let h1 = HamiltonianSpec::new(total, 3, terms.clone())?;
    let (h1_norm, exact) = if total <= cfg.dense_norm_cap {
        (hermitian_norm(&crate::spectra::realize_dense_uncapped(&h1)), true)
    } else {
        (h1.norm_upper_bound(), false)
    };
    let j_stab = cfg.j_stab.unwrap_or_else(|| j_stab_for(h1_norm));

    terms.extend(stab_terms_3local(sched, nq, big_t)?.into_iter().map(|mut t| {
        t.coefficient *= j_stab;
        t
    }));

    terms.sort_by_key(|t| (t.group, t.step));
    let mut spec = HamiltonianSpec::new(total, 3, terms)?;
    let mu = cfg.mu.unwrap_or(if czc.deterministic {
        0.0
    } else {
        0.5f64.powi(czc.layout.num_inputs() as i32)
    });
    spec.mu = Some(mu);
    spec.thresholds = Thresholds::checked(mu, 0.5 - mu).ok();
    spec.coefficients = Some(Coefficients {
        j_in,
        j_prop1,
        j_prop2,
        j_stab,
        h1_norm,
        h1_norm_exact: exact,
    });
    spec.layout = Some(SpecLayout {
        n_in: czc.layout.num_inputs(),
        n_anc: czc.layout.num_ancillas(),
        n_cl: sched.n_cl,
        d: 2,
        clock_offset: nq,
        total_steps: big_t,
        circuit_steps: big_t,
        out: czc.layout.out,
    });
    Ok(spec)
}

/// Unnormalised 3-local penalty: `C·Σ|111⟩⟨111| + Σ_pairs (I − |11⟩⟨11|)
/// + Σ_{t > T} |11⟩⟨11|_{S_t} − (C − 1)·I`. Its kernel is spanned by the
/// clock states `γ_0 … γ_T` and its smallest nonzero eigenvalue is 1.
pub fn stab_terms_3local(
    sched: &ClockSchedule,
    offset: usize,
    big_t: usize,
) -> Result<Vec<LocalTerm>, HamiltonianError> {
    let n_cl = sched.n_cl;
    let cc = binomial(n_cl, 2) as f64;
    let place = |s: &[usize]| s.iter().map(|&i| offset + i - 1).collect::<Vec<_>>();
    let mut terms = Vec::new();
    for s in subsets(n_cl, 3) {
        terms.push(LocalTerm::new(cc, &place(&s), ones_projector(3), TermGroup::Stab, None)?);
    }
    let not11 = identity(4) - ones_projector(2);
    for s in subsets(n_cl, 2) {
        terms.push(LocalTerm::new(1.0, &place(&s), not11.clone(), TermGroup::Stab, None)?);
    }
    for t in big_t + 1..=sched.total_steps() {
        terms.push(LocalTerm::new(1.0, &place(sched.vertex(t)?), ones_projector(2), TermGroup::Stab, Some(t))?);
    }
    terms.push(LocalTerm::new(-(cc - 1.0), &[], identity(1), TermGroup::Stab, None)?);
    Ok(terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{Gate, RegisterLayout};
    use crate::clock::johnson_path_d2;
    use crate::spectra::realize_dense_uncapped as dense;

    #[test]
    fn trivial_sat_single_clause() {
        let phi = CnfFormula::from_signed(1, &[&[1]]).unwrap();
        let h = build_trivial_sat_hamiltonian(&phi);
        assert_eq!(h.terms.len(), 1);
        // penalises x1 = 0 only
        let m = dense(&h);
        assert_eq!((m[(0, 0)].re, m[(1, 1)].re), (1.0, 0.0));
        assert_eq!(locality_of(&h), 1);
        assert!(h.is_diagonal());
    }

    #[test]
    fn trivial_sat_contradiction() {
        let phi = CnfFormula::from_signed(1, &[&[1], &[-1]]).unwrap();
        let m = dense(&build_trivial_sat_hamiltonian(&phi));
        assert_eq!((m[(0, 0)].re, m[(1, 1)].re), (1.0, 1.0));
    }

    #[test]
    fn trivial_sat_locality_is_arity() {
        let phi = CnfFormula::from_signed(4, &[&[1, -2, 3], &[2, 4]]).unwrap();
        assert_eq!(locality_of(&build_trivial_sat_hamiltonian(&phi)), 3);
    }

    #[test]
    fn json_round_trip() {
        let phi = CnfFormula::from_signed(3, &[&[1, -2, 3], &[-1]]).unwrap();
        let h = build_trivial_sat_hamiltonian(&phi);
        let back = HamiltonianSpec::from_json(&h.to_json()).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn local_term_checks() {
        assert!(matches!(
            LocalTerm::new(1.0, &[0], ketbra(0, 1), TermGroup::Prop, None),
            Err(HamiltonianError::NotHermitian { .. })
        ));
        assert!(matches!(
            LocalTerm::new(1.0, &[0, 0], identity(4), TermGroup::Prop, None),
            Err(HamiltonianError::DuplicateQubit { qubit: 0 })
        ));
        assert!(matches!(
            LocalTerm::new(1.0, &[0, 1], identity(2), TermGroup::Prop, None),
            Err(HamiltonianError::BlockShape { .. })
        ));
    }

    fn identity_circuit() -> QuantumCircuit {
        QuantumCircuit::new(RegisterLayout::new(1, 0, 0), vec![]).unwrap()
    }

    #[test]
    fn five_local_structure() {
        let s = johnson_path_d2(3).unwrap();
        let h = build_hu_5local(&identity_circuit(), &s, &FiveLocalConfig::default()).unwrap();
        assert_eq!(h.total_qubits, 4);
        assert!(!h.terms.iter().any(|t| t.group == TermGroup::In));
        assert!(h.terms.iter().all(|t| t.norm() <= 1.0 + 1e-12));
        let not = QuantumCircuit::new(RegisterLayout::new(2, 0, 1), vec![Gate::cnot(0, 1)]).unwrap();
        let h = build_hu_5local(&not, &s, &FiveLocalConfig::default()).unwrap();
        assert_eq!(locality_of(&h), 5);
    }

    #[test]
    fn five_local_rejects_bad_input() {
        let s = johnson_path_d2(3).unwrap();
        let toff = QuantumCircuit::new(RegisterLayout::new(3, 0, 2), vec![Gate::toffoli(0, 1, 2)]).unwrap();
        assert!(matches!(
            build_hu_5local(&toff, &s, &FiveLocalConfig::default()),
            Err(HamiltonianError::UnsupportedGate { .. })
        ));
        let long = QuantumCircuit::new(RegisterLayout::new(1, 0, 0), vec![Gate::not(0); 3]).unwrap();
        assert!(matches!(
            build_hu_5local(&long, &s, &FiveLocalConfig::default()),
            Err(HamiltonianError::ScheduleTooShort { gates: 3, steps: 2 })
        ));
    }

    #[test]
    fn restricted_prop_single_hadamard() {
        let c1 = QuantumCircuit::new(RegisterLayout::new(1, 0, 0), vec![Gate::h(0)]).unwrap();
        let r = build_restricted_prop(&c1, 1).unwrap();
        let hg = crate::linalg::hadamard();
        let want = (kron(&identity(2), &identity(2)) - kron(&hg, &ketbra(1, 0)) - kron(&hg, &ketbra(0, 1))) * c(0.5);
        assert!((r.h_prop - want).norm() < 1e-14);
    }

    #[test]
    fn restricted_prop_identity_laplacian() {
        let r = build_restricted_prop(&identity_circuit(), 2).unwrap();
        // clock Laplacian of a path on 3 sites, tensored with I_2
        let ev = nalgebra::SymmetricEigen::new(r.h_prop.clone()).eigenvalues;
        let mut ev: Vec<f64> = ev.iter().cloned().collect();
        ev.sort_by(f64::total_cmp);
        assert!(ev[0].abs() < 1e-12 && ev[1].abs() < 1e-12);
        let mut uni = crate::linalg::CVec::zeros(6);
        for t in 0..3 {
            uni[t] = c(1.0 / 3f64.sqrt());
        }
        assert!((&r.h_prop * &uni).norm() < 1e-12);
    }

    #[test]
    fn stab_3local_kernel() {
        let s = johnson_path_d2(4).unwrap();
        let terms = stab_terms_3local(&s, 0, 3).unwrap();
        let spec = HamiltonianSpec::new(4, 3, terms).unwrap();
        let m = dense(&spec);
        for x in 0..16usize {
            let v = m[(x, x)].re;
            let legal = (0..=3).any(|t| crate::clock::clock_index(&s, t).unwrap() == x);
            if legal {
                assert!(v.abs() < 1e-12);
            } else {
                assert!(v >= 1.0 - 1e-12, "x={x:04b} penalty {v}");
            }
        }
    }

    #[test]
    fn three_local_is_three_local() {
        let cz = QuantumCircuit::new(RegisterLayout::new(1, 1, 1), vec![Gate::cz(0, 1)]).unwrap();
        let czc = crate::circuit::cz_sandwich_normalize(&cz).unwrap();
        let s = johnson_path_d2(4).unwrap();
        let h = build_hu_3local(&czc, &s, &ThreeLocalConfig::default()).unwrap();
        assert_eq!(locality_of(&h), 3);
        let co = h.coefficients.unwrap();
        assert!(co.j_in >= co.j_prop2 && co.j_prop2 >= co.j_prop1 && co.j_prop1 >= 6.0);
        assert!(co.h1_norm.powi(2) / (co.j_stab - 2.0 * co.h1_norm) < 0.125);
    }

    #[test]
    fn three_local_rejects_short_schedule() {
        let cz = QuantumCircuit::new(RegisterLayout::new(2, 0, 1), vec![Gate::cz(0, 1), Gate::h(0)]).unwrap();
        let czc = crate::circuit::cz_sandwich_normalize(&cz).unwrap();
        let s = johnson_path_d2(3).unwrap();
        assert!(matches!(
            build_hu_3local(&czc, &s, &ThreeLocalConfig::default()),
            Err(HamiltonianError::GateCountExceedsSchedule { steps: 6, available: 2 })
        ));
        let generic = crate::clock::johnson_path_generic(5, 2).unwrap();
        let czc1 = crate::circuit::cz_sandwich_normalize(
            &QuantumCircuit::new(RegisterLayout::new(2, 0, 1), vec![Gate::cz(0, 1)]).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            build_hu_3local(&czc1, &generic, &ThreeLocalConfig::default()),
            Err(HamiltonianError::ScheduleLacksTwoStepProperty { .. })
        ));
    }
}
