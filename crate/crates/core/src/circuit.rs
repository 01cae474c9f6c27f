//! Gate-level circuits over named registers.
//!
//! Covers the SAT-verifier construction `U_Φ` (clause gates, a controlled
//! counter and a comparator), multi-control decompositions, gate-count
//! certificates, basis-state and statevector simulation, and the CZ
//! sandwich normal form consumed by the 3-local reduction.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::CnfFormula;
use crate::linalg::{CMat, C64, ONE, ZERO};

/// Largest register the dense unitary helpers accept.
pub const UNITARY_QUBIT_CAP: usize = 12;

/// Elementary operations per Toffoli in [`decompose_toffoli`].
pub const TOFFOLI_COST: u64 = 15;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CircuitError {
    #[error("invalid {kind} gate: {reason}")]
    InvalidGate { kind: GateKind, reason: String },
    #[error("gate {index} touches qubit {qubit}, circuit has {num_qubits}")]
    QubitOutOfRange {
        index: usize,
        qubit: usize,
        num_qubits: usize,
    },
    #[error("decomposition needs {needed} scratch qubits, {available} available")]
    InsufficientScratch { needed: usize, available: usize },
    #[error("clause index {index} out of range for {num_clauses} clauses")]
    ClauseIndexOutOfRange { index: usize, num_clauses: usize },
    #[error("gate {index} ({kind}) is not classical-reversible")]
    NonReversibleGate { index: usize, kind: GateKind },
    #[error("gate {index} ({kind}) is not supported here")]
    UnsupportedGateKind { index: usize, kind: GateKind },
    #[error("input has {got} bits, circuit has {expected} qubits")]
    LengthMismatch { expected: usize, got: usize },
    #[error("{qubits} qubits exceeds the dense cap of {cap}")]
    CapExceeded { qubits: usize, cap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GateKind {
    Not,
    Cnot,
    Toffoli,
    #[serde(rename = "CK_NOT")]
    CkNot,
    Hadamard,
    TGate,
    Z,
    Cz,
    Identity,
}

impl GateKind {
    /// NOT-family gates: permutations of the computational basis.
    pub fn is_classical(self) -> bool {
        matches!(
            self,
            GateKind::Not | GateKind::Cnot | GateKind::Toffoli | GateKind::CkNot | GateKind::Identity
        )
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GateKind::Not => "NOT",
            GateKind::Cnot => "CNOT",
            GateKind::Toffoli => "TOFFOLI",
            GateKind::CkNot => "CK_NOT",
            GateKind::Hadamard => "HADAMARD",
            GateKind::TGate => "T_GATE",
            GateKind::Z => "Z",
            GateKind::Cz => "CZ",
            GateKind::Identity => "IDENTITY",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub controls: Vec<usize>,
    pub targets: Vec<usize>,
}

impl Gate {
    /// Checked constructor.
    pub fn new(kind: GateKind, controls: Vec<usize>, targets: Vec<usize>) -> Result<Self, CircuitError> {
        let g = Self {
            kind,
            controls,
            targets,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        let bad = |reason: &str| CircuitError::InvalidGate {
            kind: self.kind,
            reason: reason.into(),
        };
        if self.targets.len() != 1 {
            return Err(bad("expected exactly one target"));
        }
        let nc = self.controls.len();
        let ok = match self.kind {
            GateKind::Not | GateKind::Hadamard | GateKind::TGate | GateKind::Z | GateKind::Identity => nc == 0,
            GateKind::Cnot | GateKind::Cz => nc == 1,
            GateKind::Toffoli => nc == 2,
            GateKind::CkNot => nc >= 1,
        };
        if !ok {
            return Err(bad(&format!("wrong number of controls ({nc})")));
        }
        let qs = self.qubits();
        for (i, a) in qs.iter().enumerate() {
            if qs[i + 1..].contains(a) {
                return Err(bad(&format!("qubit {a} used twice")));
            }
        }
        Ok(())
    }

    pub fn not(q: usize) -> Self {
        Self::raw(GateKind::Not, vec![], q)
    }

    pub fn cnot(ctrl: usize, target: usize) -> Self {
        Self::raw(GateKind::Cnot, vec![ctrl], target)
    }

    pub fn toffoli(a: usize, b: usize, target: usize) -> Self {
        Self::raw(GateKind::Toffoli, vec![a, b], target)
    }

    /// Multi-controlled NOT. Zero controls degrade to NOT, one to CNOT and
    /// two to a Toffoli, so the kind always reflects the arity.
    pub fn cknot(controls: Vec<usize>, target: usize) -> Self {
        match controls.len() {
            0 => Self::not(target),
            1 => Self::cnot(controls[0], target),
            2 => Self::toffoli(controls[0], controls[1], target),
            _ => Self::raw(GateKind::CkNot, controls, target),
        }
    }

    pub fn h(q: usize) -> Self {
        Self::raw(GateKind::Hadamard, vec![], q)
    }

    pub fn t(q: usize) -> Self {
        Self::raw(GateKind::TGate, vec![], q)
    }

    pub fn z(q: usize) -> Self {
        Self::raw(GateKind::Z, vec![], q)
    }

    pub fn cz(a: usize, b: usize) -> Self {
        Self::raw(GateKind::Cz, vec![a], b)
    }

    pub fn identity(q: usize) -> Self {
        Self::raw(GateKind::Identity, vec![], q)
    }

    fn raw(kind: GateKind, controls: Vec<usize>, target: usize) -> Self {
        let g = Self {
            kind,
            controls,
            targets: vec![target],
        };
        debug_assert!(g.validate().is_ok(), "{g:?}");
        g
    }

    pub fn target(&self) -> usize {
        self.targets[0]
    }

    /// Controls followed by the target.
    pub fn qubits(&self) -> Vec<usize> {
        let mut q = self.controls.clone();
        q.extend_from_slice(&self.targets);
        q
    }

    pub fn arity(&self) -> usize {
        self.controls.len() + self.targets.len()
    }

    /// Dense matrix on [`Gate::qubits`] order (first qubit most significant).
    pub fn matrix(&self) -> CMat {
        let k = self.arity();
        let dim = 1 << k;
        let mut m = CMat::zeros(dim, dim);
        for col in 0..dim {
            let mut v = vec![ZERO; dim];
            v[col] = ONE;
            let local = Gate {
                kind: self.kind,
                controls: (0..k - 1).collect(),
                targets: vec![k - 1],
            };
            apply_gate(&mut v, k, &local);
            for (row, a) in v.into_iter().enumerate() {
                m[(row, col)] = a;
            }
        }
        m
    }

    /// Elementary-operation cost after full decomposition, counting T† as
    /// a single operation.
    pub fn elementary_cost(&self) -> u64 {
        match self.kind {
            GateKind::Toffoli => TOFFOLI_COST,
            GateKind::CkNot => match self.controls.len() {
                0 | 1 => 1,
                2 => TOFFOLI_COST,
                k => TOFFOLI_COST * (2 * k as u64 - 3),
            },
            _ => 1,
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        write!(f, "(")?;
        for (i, q) in self.qubits().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{q}")?;
        }
        write!(f, ")")
    }
}

/// Register layout. Ids are 0-based; inputs come first and everything after
/// them is ancilla. `out` may sit in either block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterLayout {
    pub num_qubits: usize,
    pub inputs: Range<usize>,
    pub ancillas: Range<usize>,
    pub out: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cls: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cnt: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scratch: Vec<usize>,
}

impl RegisterLayout {
    /// Plain layout with `n_in` inputs and `n_anc` ancillas.
    pub fn new(n_in: usize, n_anc: usize, out: usize) -> Self {
        let num_qubits = n_in + n_anc;
        assert!(out < num_qubits, "out qubit {out} outside {num_qubits} qubits");
        Self {
            num_qubits,
            inputs: 0..n_in,
            ancillas: n_in..num_qubits,
            out,
            cls: None,
            cnt: Vec::new(),
            scratch: Vec::new(),
        }
    }

    /// The verifier layout for `phi`: inputs, `cls`, `cnt` (most significant
    /// bit first), `out`, then the shared decomposition scratch pool.
    pub fn for_formula(phi: &CnfFormula) -> Self {
        let n = phi.num_vars();
        let r = counter_width(phi.num_clauses());
        let pool = phi.arity_bound().max(r).saturating_sub(2);
        let cls = n;
        let cnt: Vec<usize> = (n + 1..n + 1 + r).collect();
        let out = n + 1 + r;
        let scratch: Vec<usize> = (out + 1..out + 1 + pool).collect();
        let num_qubits = out + 1 + pool;
        Self {
            num_qubits,
            inputs: 0..n,
            ancillas: n..num_qubits,
            out,
            cls: Some(cls),
            cnt,
            scratch,
        }
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn num_ancillas(&self) -> usize {
        self.ancillas.len()
    }
}

/// Counter width: enough bits to hold the value `m`.
pub fn counter_width(m: usize) -> usize {
    (usize::BITS - m.leading_zeros()) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumCircuit {
    pub layout: RegisterLayout,
    pub gates: Vec<Gate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_count_certificate: Option<u64>,
    /// Set when every basis input maps to a basis output (possibly through
    /// non-classical gates, e.g. a decomposed Toffoli).
    #[serde(default)]
    pub deterministic: bool,
}

impl QuantumCircuit {
    /// Builds a circuit, checking every gate and qubit reference.
    pub fn new(layout: RegisterLayout, gates: Vec<Gate>) -> Result<Self, CircuitError> {
        for (index, g) in gates.iter().enumerate() {
            g.validate()?;
            if let Some(&qubit) = g.qubits().iter().find(|&&q| q >= layout.num_qubits) {
                return Err(CircuitError::QubitOutOfRange {
                    index,
                    qubit,
                    num_qubits: layout.num_qubits,
                });
            }
        }
        let deterministic = gates.iter().all(|g| g.kind.is_classical());
        Ok(Self {
            layout,
            gates,
            gate_count_certificate: None,
            deterministic,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.layout.num_qubits
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn is_classical_reversible(&self) -> bool {
        self.gates.iter().all(|g| g.kind.is_classical())
    }

    /// Elementary-gate count after full decomposition.
    pub fn elementary_count(&self) -> u64 {
        self.gates.iter().map(Gate::elementary_cost).sum()
    }

    /// Largest gate arity.
    pub fn max_arity(&self) -> usize {
        self.gates.iter().map(Gate::arity).max().unwrap_or(0)
    }

    /// Gate list of the inverse circuit. Valid for the gate set here: every
    /// gate is self-inverse except T, whose inverse is T⁷.
    pub fn inverse_gates(&self) -> Vec<Gate> {
        let mut out = Vec::with_capacity(self.gates.len());
        for g in self.gates.iter().rev() {
            if g.kind == GateKind::TGate {
                out.extend(std::iter::repeat_n(g.clone(), 7));
            } else {
                out.push(g.clone());
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("circuit serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Applies one gate to a statevector over `n` qubits.
pub fn apply_gate(state: &mut [C64], n: usize, g: &Gate) {
    let bit = |q: usize| 1usize << (n - 1 - q);
    let t = bit(g.target());
    match g.kind {
        GateKind::Not | GateKind::Cnot | GateKind::Toffoli | GateKind::CkNot => {
            let mask = g.controls.iter().fold(0, |m, &q| m | bit(q));
            for i in 0..state.len() {
                if i & mask == mask && i & t == 0 {
                    state.swap(i, i | t);
                }
            }
        }
        GateKind::Hadamard => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            for i in 0..state.len() {
                if i & t == 0 {
                    let (a, b) = (state[i], state[i | t]);
                    state[i] = (a + b) * s;
                    state[i | t] = (a - b) * s;
                }
            }
        }
        GateKind::TGate => {
            let w = C64::from_polar(1.0, std::f64::consts::FRAC_PI_4);
            for (i, a) in state.iter_mut().enumerate() {
                if i & t != 0 {
                    *a *= w;
                }
            }
        }
        GateKind::Z => {
            for (i, a) in state.iter_mut().enumerate() {
                if i & t != 0 {
                    *a = -*a;
                }
            }
        }
        GateKind::Cz => {
            let mask = t | bit(g.controls[0]);
            for (i, a) in state.iter_mut().enumerate() {
                if i & mask == mask {
                    *a = -*a;
                }
            }
        }
        GateKind::Identity => {}
    }
}

/// Applies a gate list to a statevector.
pub fn simulate(gates: &[Gate], n: usize, state: &mut [C64]) {
    for g in gates {
        apply_gate(state, n, g);
    }
}

/// Dense unitary of a gate list on `n` qubits.
pub fn gates_unitary(gates: &[Gate], n: usize) -> Result<CMat, CircuitError> {
    if n > UNITARY_QUBIT_CAP {
        return Err(CircuitError::CapExceeded {
            qubits: n,
            cap: UNITARY_QUBIT_CAP,
        });
    }
    let dim = 1 << n;
    let mut u = CMat::zeros(dim, dim);
    let mut v = vec![ZERO; dim];
    for col in 0..dim {
        v.iter_mut().for_each(|a| *a = ZERO);
        v[col] = ONE;
        simulate(gates, n, &mut v);
        for (row, a) in v.iter().enumerate() {
            u[(row, col)] = *a;
        }
    }
    Ok(u)
}

pub fn circuit_unitary(circ: &QuantumCircuit) -> Result<CMat, CircuitError> {
    gates_unitary(&circ.gates, circ.num_qubits())
}

/// Basis-state simulation of a classical-reversible circuit.
pub fn run_reversible(circ: &QuantumCircuit, x: &[bool]) -> Result<Vec<bool>, CircuitError> {
    if x.len() != circ.num_qubits() {
        return Err(CircuitError::LengthMismatch {
            expected: circ.num_qubits(),
            got: x.len(),
        });
    }
    let mut y = x.to_vec();
    for (index, g) in circ.gates.iter().enumerate() {
        if !g.kind.is_classical() {
            return Err(CircuitError::NonReversibleGate {
                index,
                kind: g.kind,
            });
        }
        if g.kind != GateKind::Identity && g.controls.iter().all(|&q| y[q]) {
            let t = g.target();
            y[t] = !y[t];
        }
    }
    Ok(y)
}

/// V-chain decomposition of a C^kNOT into `2k − 3` Toffolis using `k − 2`
/// clean scratch qubits, which are returned to |0⟩. Gates with fewer than
/// three controls pass through unchanged.
pub fn decompose_cknot(g: &Gate, scratch: &[usize]) -> Result<Vec<Gate>, CircuitError> {
    if !matches!(
        g.kind,
        GateKind::Not | GateKind::Cnot | GateKind::Toffoli | GateKind::CkNot
    ) {
        return Err(CircuitError::UnsupportedGateKind {
            index: 0,
            kind: g.kind,
        });
    }
    let k = g.controls.len();
    if k < 3 {
        return Ok(vec![Gate::cknot(g.controls.clone(), g.target())]);
    }
    if scratch.len() < k - 2 {
        return Err(CircuitError::InsufficientScratch {
            needed: k - 2,
            available: scratch.len(),
        });
    }
    let cs = &g.controls;
    let a = &scratch[..k - 2];
    let mut compute = vec![Gate::toffoli(cs[0], cs[1], a[0])];
    for i in 2..k - 1 {
        compute.push(Gate::toffoli(cs[i], a[i - 2], a[i - 1]));
    }
    let mut out = compute.clone();
    out.push(Gate::toffoli(cs[k - 1], a[k - 3], g.target()));
    out.extend(compute.into_iter().rev());
    Ok(out)
}

/// One step of the Toffoli decomposition. `TDagger` is kept as a single
/// operation for counting and expands to seven T gates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Elementary {
    Gate(Gate),
    TDagger(usize),
}

impl Elementary {
    pub fn gates(&self) -> Vec<Gate> {
        match self {
            Elementary::Gate(g) => vec![g.clone()],
            Elementary::TDagger(q) => vec![Gate::t(*q); 7],
        }
    }
}

/// Exact 15-operation Clifford+T decomposition of a Toffoli.
pub fn decompose_toffoli(g: &Gate) -> Result<Vec<Elementary>, CircuitError> {
    if g.kind != GateKind::Toffoli {
        return Err(CircuitError::UnsupportedGateKind {
            index: 0,
            kind: g.kind,
        });
    }
    let (a, b, t) = (g.controls[0], g.controls[1], g.target());
    use Elementary::{Gate as E, TDagger};
    Ok(vec![
        E(Gate::h(t)),
        E(Gate::cnot(b, t)),
        TDagger(t),
        E(Gate::cnot(a, t)),
        E(Gate::t(t)),
        E(Gate::cnot(b, t)),
        TDagger(t),
        E(Gate::cnot(a, t)),
        E(Gate::t(b)),
        E(Gate::t(t)),
        E(Gate::h(t)),
        E(Gate::cnot(a, b)),
        E(Gate::t(a)),
        TDagger(b),
        E(Gate::cnot(a, b)),
    ])
}

/// Rewrites every C^kNOT (k ≥ 3) with the layout's scratch pool.
pub fn to_toffoli_level(circ: &QuantumCircuit) -> Result<QuantumCircuit, CircuitError> {
    let mut gates = Vec::new();
    for g in &circ.gates {
        if g.kind == GateKind::CkNot {
            gates.extend(decompose_cknot(g, &circ.layout.scratch)?);
        } else {
            gates.push(g.clone());
        }
    }
    let mut out = QuantumCircuit::new(circ.layout.clone(), gates)?;
    out.gate_count_certificate = circ.gate_count_certificate;
    out.deterministic = circ.deterministic;
    Ok(out)
}

/// Rewrites down to {NOT, CNOT, HADAMARD, T_GATE}, expanding T† into seven
/// T gates. The result acts on at most two qubits per gate.
pub fn to_elementary(circ: &QuantumCircuit) -> Result<QuantumCircuit, CircuitError> {
    let toff = to_toffoli_level(circ)?;
    let mut gates = Vec::new();
    for g in &toff.gates {
        if g.kind == GateKind::Toffoli {
            for e in decompose_toffoli(g)? {
                gates.extend(e.gates());
            }
        } else {
            gates.push(g.clone());
        }
    }
    let mut out = QuantumCircuit::new(circ.layout.clone(), gates)?;
    out.gate_count_certificate = circ.gate_count_certificate;
    out.deterministic = circ.deterministic;
    Ok(out)
}

fn check_clause_index(phi: &CnfFormula, i: usize) -> Result<(), CircuitError> {
    if i >= phi.num_clauses() {
        return Err(CircuitError::ClauseIndexOutOfRange {
            index: i,
            num_clauses: phi.num_clauses(),
        });
    }
    Ok(())
}

/// `W_i`: NOT on the positive-literal qubits, C^{k_i}NOT from the clause's
/// qubits onto `cls`, then NOT on `cls`. Leaves `cls = φ_i(x)`; the input
/// register is left NOT-conjugated until the reversed list undoes it.
/// `i` is 0-based.
pub fn build_clause_gate(
    phi: &CnfFormula,
    i: usize,
    layout: &RegisterLayout,
) -> Result<QuantumCircuit, CircuitError> {
    check_clause_index(phi, i)?;
    let cls = layout.cls.expect("verifier layout has a cls qubit");
    let clause = &phi.clauses()[i];
    let mut gates: Vec<Gate> = clause
        .literals()
        .iter()
        .filter(|l| !l.negated)
        .map(|l| Gate::not(l.var - 1))
        .collect();
    let support: Vec<usize> = clause.literals().iter().map(|l| l.var - 1).collect();
    gates.push(Gate::cknot(support, cls));
    gates.push(Gate::not(cls));
    QuantumCircuit::new(layout.clone(), gates)
}

/// Controlled increment on `cnt`, controlled by `cls`. Layer q (1-based,
/// most significant first) flips `cnt[q]` when `cls` and every lower bit
/// are set.
pub fn build_addone(layout: &RegisterLayout) -> Result<QuantumCircuit, CircuitError> {
    let cls = layout.cls.expect("verifier layout has a cls qubit");
    let cnt = &layout.cnt;
    let gates = (0..cnt.len())
        .map(|q| {
            let mut controls = vec![cls];
            controls.extend_from_slice(&cnt[q + 1..]);
            Gate::cknot(controls, cnt[q])
        })
        .collect();
    QuantumCircuit::new(layout.clone(), gates)
}

/// Sets `out` iff the counter equals `m`: NOT the zero bits of bin(m),
/// C^rNOT onto `out`, then undo the NOTs.
pub fn build_compare(m: usize, layout: &RegisterLayout) -> Result<QuantumCircuit, CircuitError> {
    let r = layout.cnt.len();
    let zeros: Vec<Gate> = (0..r)
        .filter(|&q| (m >> (r - 1 - q)) & 1 == 0)
        .map(|q| Gate::not(layout.cnt[q]))
        .collect();
    let mut gates = zeros.clone();
    gates.push(Gate::cknot(layout.cnt.clone(), layout.out));
    gates.extend(zeros);
    QuantumCircuit::new(layout.clone(), gates)
}

/// Upper bound on the elementary-gate count of `U_Φ` for `n` variables,
/// `m` clauses and arity `k`, writing `n^c := max(m, n)` (so
/// `c = max(1, log_n m)`) and `c·log n := log2 max(m, n)`.
pub fn certificate_bound(n: usize, m: usize, k: usize) -> u64 {
    let nc = n.max(m).max(1) as f64;
    let clog = nc.log2();
    let b = 34.0 * clog * clog * nc + (70.0 * k as f64 + 2.0) * nc + 35.0 * clog;
    b.ceil() as u64
}

/// The exponent c with `m = n^c`, clamped below at 1.
pub fn certificate_exponent(n: usize, m: usize) -> f64 {
    if n < 2 || m <= n {
        1.0
    } else {
        (m as f64).ln() / (n as f64).ln()
    }
}

/// `U_Φ = COUNT† ∘ COMPARE ∘ COUNT` with `COUNT = Π_i (W_i† · C-ADDONE · W_i)`,
/// multi-control gates left undecomposed. The trailing `COUNT†` returns the
/// counter to zero so every ancilla except `out` is clean. Carries the
/// elementary-gate certificate.
pub fn build_sat_verifier(phi: &CnfFormula) -> Result<QuantumCircuit, CircuitError> {
    let layout = RegisterLayout::for_formula(phi);
    let addone = build_addone(&layout)?;
    let mut count = Vec::new();
    for i in 0..phi.num_clauses() {
        let w = build_clause_gate(phi, i, &layout)?;
        count.extend(w.gates.iter().cloned());
        count.extend(addone.gates.iter().cloned());
        count.extend(w.inverse_gates());
    }
    let uncount = QuantumCircuit::new(layout.clone(), count.clone())?.inverse_gates();
    let mut gates = count;
    gates.extend(build_compare(phi.num_clauses(), &layout)?.gates);
    gates.extend(uncount);
    let mut circ = QuantumCircuit::new(layout, gates)?;
    circ.gate_count_certificate = Some(certificate_bound(
        phi.num_vars(),
        phi.num_clauses(),
        phi.arity_bound(),
    ));
    Ok(circ)
}

/// Replaces each CNOT by `H(t)·CZ·H(t)`; other one-qubit gates and CZ pass
/// through. Toffoli and C^kNOT must be decomposed first.
pub fn recompile_to_cz(circ: &QuantumCircuit) -> Result<QuantumCircuit, CircuitError> {
    let mut gates = Vec::new();
    for (index, g) in circ.gates.iter().enumerate() {
        match g.kind {
            GateKind::Cnot => {
                let (ctl, t) = (g.controls[0], g.target());
                gates.extend([Gate::h(t), Gate::cz(ctl, t), Gate::h(t)]);
            }
            GateKind::Toffoli | GateKind::CkNot => {
                return Err(CircuitError::UnsupportedGateKind {
                    index,
                    kind: g.kind,
                })
            }
            _ => gates.push(g.clone()),
        }
    }
    let mut out = QuantumCircuit::new(circ.layout.clone(), gates)?;
    out.deterministic = circ.deterministic;
    Ok(out)
}

/// Circuit in CZ-sandwich normal form. Time `t` (1-based) runs gate
/// `gates[t − 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CzSandwichCircuit {
    pub layout: RegisterLayout,
    pub gates: Vec<Gate>,
    /// Times of one-qubit gates.
    pub t1_set: Vec<usize>,
    /// Times of CZ gates, evenly spaced.
    pub t2_set: Vec<usize>,
    /// `(f_t, s_t)` for each entry of `t2_set`.
    pub cz_pairs: Vec<(usize, usize)>,
    pub stride: Option<usize>,
    /// Gate count of the circuit this was normalised from.
    pub source_gate_count: usize,
    #[serde(default)]
    pub deterministic: bool,
}

impl CzSandwichCircuit {
    pub fn total_steps(&self) -> usize {
        self.gates.len()
    }

    pub fn gate_at(&self, t: usize) -> &Gate {
        &self.gates[t - 1]
    }

    pub fn to_circuit(&self) -> QuantumCircuit {
        let mut c = QuantumCircuit::new(self.layout.clone(), self.gates.clone())
            .expect("normal form is well-formed");
        c.deterministic = self.deterministic;
        c
    }

    /// Re-checks the normal-form structure; returns the first offending
    /// time step.
    pub fn check(&self) -> Result<(), usize> {
        let t_max = self.gates.len();
        for (&t, &(f, s)) in self.t2_set.iter().zip(&self.cz_pairs) {
            if t < 3 || t + 2 > t_max {
                return Err(t);
            }
            let g = self.gate_at(t);
            if g.kind != GateKind::Cz || g.controls[0] != f || g.target() != s {
                return Err(t);
            }
            let is_z = |u: usize, q: usize| {
                let h = self.gate_at(u);
                h.kind == GateKind::Z && h.target() == q
            };
            if !(is_z(t - 2, f) && is_z(t - 1, s) && is_z(t + 1, f) && is_z(t + 2, s)) {
                return Err(t);
            }
        }
        if let Some(s) = self.stride {
            if let Some(w) = self.t2_set.windows(2).find(|w| w[1] - w[0] != s) {
                return Err(w[1]);
            }
        }
        for &t in &self.t1_set {
            if self.gate_at(t).arity() != 1 {
                return Err(t);
            }
        }
        Ok(())
    }
}

/// Puts a circuit of one-qubit gates and CZs into sandwich normal form:
/// each CZ gets Z on both its qubits immediately before and after, and
/// IDENTITY padding (on the next CZ's first qubit) spaces the CZ times
/// evenly. The stride is the widest natural gap between consecutive CZs.
pub fn cz_sandwich_normalize(circ: &QuantumCircuit) -> Result<CzSandwichCircuit, CircuitError> {
    // Segments: the gates preceding each CZ, then the trailing gates.
    let mut segments: Vec<Vec<Gate>> = vec![Vec::new()];
    let mut czs = Vec::new();
    for (index, g) in circ.gates.iter().enumerate() {
        match g.kind {
            GateKind::Cz => {
                czs.push((g.controls[0], g.target()));
                segments.push(Vec::new());
            }
            _ if g.arity() == 1 => segments.last_mut().expect("nonempty").push(g.clone()),
            _ => {
                return Err(CircuitError::UnsupportedGateKind {
                    index,
                    kind: g.kind,
                })
            }
        }
    }
    // Between CZ i and CZ i+1 there are 2 trailing Zs, the segment, 2
    // leading Zs and the CZ itself.
    let gap = |seg: &Vec<Gate>| seg.len() + 5;
    let stride = (1..czs.len()).map(|i| gap(&segments[i])).max();

    let mut gates = segments[0].clone();
    let mut t2_set = Vec::new();
    for (i, &(f, s)) in czs.iter().enumerate() {
        if i > 0 {
            gates.extend(segments[i].iter().cloned());
            let pad = stride.expect("two or more CZs") - gap(&segments[i]);
            gates.extend(std::iter::repeat_n(Gate::identity(f), pad));
        }
        gates.extend([Gate::z(f), Gate::z(s), Gate::cz(f, s)]);
        t2_set.push(gates.len());
        gates.extend([Gate::z(f), Gate::z(s)]);
    }
    if !czs.is_empty() {
        gates.extend(segments[czs.len()].iter().cloned());
    }
    let t1_set = (1..=gates.len()).filter(|t| !t2_set.contains(t)).collect();
    let out = CzSandwichCircuit {
        layout: circ.layout.clone(),
        gates,
        t1_set,
        t2_set,
        cz_pairs: czs,
        stride,
        source_gate_count: circ.gates.len(),
        deterministic: circ.deterministic,
    };
    debug_assert!(out.check().is_ok());
    Ok(out)
}

/// Probability that measuring `out` after running `circ` on the basis input
/// `x` (ancillas |0⟩) yields 1.
pub fn acceptance_probability_basis(circ: &QuantumCircuit, x: u64) -> Result<f64, CircuitError> {
    let mut state = input_state_basis(circ, x)?;
    simulate(&circ.gates, circ.num_qubits(), &mut state);
    Ok(prob_one(&state, circ.num_qubits(), circ.layout.out))
}

/// Statevector `|x⟩_in |0⟩_anc`.
pub fn input_state_basis(circ: &QuantumCircuit, x: u64) -> Result<Vec<C64>, CircuitError> {
    let n = circ.num_qubits();
    if n > 26 {
        return Err(CircuitError::CapExceeded { qubits: n, cap: 26 });
    }
    let mut state = vec![ZERO; 1 << n];
    state[(x as usize) << circ.layout.num_ancillas()] = ONE;
    Ok(state)
}

/// Embeds an input-register state as `|ψ⟩_in |0⟩_anc`.
pub fn embed_input(circ: &QuantumCircuit, psi: &[C64]) -> Vec<C64> {
    let na = circ.layout.num_ancillas();
    let mut state = vec![ZERO; 1 << circ.num_qubits()];
    for (x, a) in psi.iter().enumerate() {
        state[x << na] = *a;
    }
    state
}

/// Probability that qubit `q` reads 1.
pub fn prob_one(state: &[C64], n: usize, q: usize) -> f64 {
    let b = 1 << (n - 1 - q);
    state
        .iter()
        .enumerate()
        .filter(|(i, _)| i & b != 0)
        .map(|(_, a)| a.norm_sqr())
        .sum()
}

/// Acceptance probability for an arbitrary input-register state.
pub fn acceptance_probability(circ: &QuantumCircuit, psi: &[C64]) -> f64 {
    let mut state = embed_input(circ, psi);
    simulate(&circ.gates, circ.num_qubits(), &mut state);
    prob_one(&state, circ.num_qubits(), circ.layout.out)
}

/// Maximum acceptance probability over input states: the top eigenvalue of
/// `Π_in U† Π_out U Π_in` restricted to the input register.
pub fn max_acceptance(circ: &QuantumCircuit) -> Result<f64, CircuitError> {
    let n = circ.num_qubits();
    let n_in = circ.layout.num_inputs();
    if n > UNITARY_QUBIT_CAP {
        return Err(CircuitError::CapExceeded {
            qubits: n,
            cap: UNITARY_QUBIT_CAP,
        });
    }
    let dim_in = 1 << n_in;
    // Columns U|x⟩|0⟩ for each input basis x.
    let cols: Vec<Vec<C64>> = (0..dim_in)
        .map(|x| {
            let mut s = input_state_basis(circ, x as u64).expect("within cap");
            simulate(&circ.gates, n, &mut s);
            s
        })
        .collect();
    let ob = 1 << (n - 1 - circ.layout.out);
    let m = CMat::from_fn(dim_in, dim_in, |i, j| {
        cols[i]
            .iter()
            .zip(&cols[j])
            .enumerate()
            .filter(|(k, _)| k & ob != 0)
            .map(|(_, (a, b))| a.conj() * b)
            .sum()
    });
    let ev = nalgebra::SymmetricEigen::new(m).eigenvalues;
    Ok(ev.iter().cloned().fold(0.0, f64::max).clamp(0.0, 1.0))
}

/// Dense 8×8 Toffoli on (a, b, target).
pub fn toffoli_matrix() -> CMat {
    let mut m = CMat::identity(8, 8);
    m[(6, 6)] = ZERO;
    m[(7, 7)] = ZERO;
    m[(6, 7)] = ONE;
    m[(7, 6)] = ONE;
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnf::{Assignment, CnfFormula};
    use crate::linalg::{op_norm, phase_insensitive_distance};

    fn bits(x: u64, n: usize) -> Vec<bool> {
        (0..n).map(|i| (x >> (n - 1 - i)) & 1 == 1).collect()
    }

    #[test]
    fn not_and_cnot_truth_tables() {
        let c = QuantumCircuit::new(RegisterLayout::new(1, 0, 0), vec![Gate::not(0)]).unwrap();
        assert_eq!(run_reversible(&c, &[false]).unwrap(), vec![true]);
        let c = QuantumCircuit::new(RegisterLayout::new(2, 0, 1), vec![Gate::cnot(0, 1)]).unwrap();
        assert_eq!(run_reversible(&c, &[true, false]).unwrap(), vec![true, true]);
    }

    #[test]
    fn gate_validation() {
        assert!(Gate::new(GateKind::Cnot, vec![0], vec![0]).is_err());
        assert!(Gate::new(GateKind::Toffoli, vec![0], vec![1]).is_err());
        assert!(Gate::new(GateKind::CkNot, vec![0, 1, 2], vec![3]).is_ok());
        assert!(QuantumCircuit::new(RegisterLayout::new(1, 0, 0), vec![Gate::not(1)]).is_err());
    }

    #[test]
    fn cknot_k3_uses_three_toffolis() {
        let g = Gate::cknot(vec![0, 1, 2], 3);
        let d = decompose_cknot(&g, &[4]).unwrap();
        assert_eq!(d.len(), 3);
        assert!(d.iter().all(|g| g.kind == GateKind::Toffoli));
        assert!(matches!(
            decompose_cknot(&g, &[]),
            Err(CircuitError::InsufficientScratch { needed: 1, .. })
        ));
    }

    #[test]
    fn cknot_k2_passthrough() {
        let g = Gate::toffoli(0, 1, 2);
        assert_eq!(decompose_cknot(&g, &[]).unwrap(), vec![g]);
    }

    #[test]
    fn cknot_k4_exhaustive() {
        // controls 0..4, target 4, scratch 5, 6
        let g = Gate::cknot(vec![0, 1, 2, 3], 4);
        let d = decompose_cknot(&g, &[5, 6]).unwrap();
        assert_eq!(d.len(), 5);
        let c = QuantumCircuit::new(RegisterLayout::new(5, 2, 4), d).unwrap();
        for x in 0..32u64 {
            let mut input = bits(x, 5);
            input.extend([false, false]);
            let y = run_reversible(&c, &input).unwrap();
            let want_t = input[4] ^ input[..4].iter().all(|&b| b);
            assert_eq!(y[4], want_t, "x={x:05b}");
            assert_eq!(&y[..4], &input[..4]);
            assert!(!y[5] && !y[6]);
        }
    }

    #[test]
    fn toffoli_decomposition_is_exact() {
        let d = decompose_toffoli(&Gate::toffoli(0, 1, 2)).unwrap();
        assert_eq!(d.len(), 15);
        let gates: Vec<Gate> = d.iter().flat_map(Elementary::gates).collect();
        let u = gates_unitary(&gates, 3).unwrap();
        assert!(op_norm(&(&u - toffoli_matrix())) < 1e-10);
        assert!(phase_insensitive_distance(&u, &toffoli_matrix()) < 1e-10);
        // |110⟩ → |111⟩
        assert!((u[(7, 6)] - ONE).norm() < 1e-12);
    }

    fn verifier_layout(phi: &CnfFormula) -> RegisterLayout {
        RegisterLayout::for_formula(phi)
    }

    fn run_w(phi: &CnfFormula, i: usize, x: u64) -> bool {
        let layout = verifier_layout(phi);
        let w = build_clause_gate(phi, i, &layout).unwrap();
        let w = to_toffoli_level(&w).unwrap();
        let mut input = bits(x, phi.num_vars());
        input.resize(layout.num_qubits, false);
        let y = run_reversible(&w, &input).unwrap();
        // W† restores the input
        let back = QuantumCircuit::new(layout.clone(), w.inverse_gates()).unwrap();
        let z = run_reversible(&back, &y).unwrap();
        assert_eq!(z, input);
        y[layout.cls.unwrap()]
    }

    #[test]
    fn clause_gate_examples() {
        let phi = CnfFormula::from_signed(2, &[&[1, -2]]).unwrap();
        assert!(run_w(&phi, 0, 0b00));
        let phi = CnfFormula::from_signed(1, &[&[1]]).unwrap();
        assert!(!run_w(&phi, 0, 0));
        let phi = CnfFormula::from_signed(3, &[&[-1, 2, -3]]).unwrap();
        for x in 0..8 {
            let want = phi.eval(&Assignment::from_index(x, 3)).unwrap();
            assert_eq!(run_w(&phi, 0, x), want);
        }
        assert!(matches!(
            build_clause_gate(&phi, 1, &verifier_layout(&phi)),
            Err(CircuitError::ClauseIndexOutOfRange { index: 1, .. })
        ));
    }

    fn counter_layout(r: usize) -> RegisterLayout {
        // cls = 0, cnt = 1..=r, out = r+1, scratch after
        let pool = r.saturating_sub(2);
        RegisterLayout {
            num_qubits: r + 2 + pool,
            inputs: 0..0,
            ancillas: 0..r + 2 + pool,
            out: r + 1,
            cls: Some(0),
            cnt: (1..=r).collect(),
            scratch: (r + 2..r + 2 + pool).collect(),
        }
    }

    fn run_counter(c: &QuantumCircuit, cls: bool, y: u64, r: usize) -> (u64, Vec<bool>) {
        let c = to_toffoli_level(c).unwrap();
        let mut input = vec![cls];
        input.extend(bits(y, r));
        input.resize(c.num_qubits(), false);
        let out = run_reversible(&c, &input).unwrap();
        let v = out[1..=r].iter().fold(0, |a, &b| (a << 1) | b as u64);
        (v, out)
    }

    #[test]
    fn addone_examples() {
        let l = counter_layout(4);
        let a = build_addone(&l).unwrap();
        assert_eq!(run_counter(&a, true, 0b0000, 4).0, 0b0001);
        assert_eq!(run_counter(&a, false, 0b0101, 4).0, 0b0101);
        assert_eq!(run_counter(&a, true, 0b0111, 4).0, 0b1000);
        for y in 0..15 {
            let (v, out) = run_counter(&a, true, y, 4);
            assert_eq!(v, y + 1);
            assert!(out[0]);
            assert!(out[6..].iter().all(|b| !b));
        }
    }

    #[test]
    fn compare_examples() {
        let l = counter_layout(3);
        let c3 = build_compare(3, &l).unwrap();
        let out_of = |c: &QuantumCircuit, y| run_counter(c, false, y, 3).1[l.out];
        assert!(out_of(&c3, 0b011));
        assert!(!out_of(&c3, 0b010));
        let c5 = build_compare(5, &l).unwrap();
        for y in 0..8 {
            assert_eq!(out_of(&c5, y), y == 5);
            assert_eq!(run_counter(&c5, false, y, 3).0, y, "counter restored");
        }
    }

    fn verify_all(phi: &CnfFormula) {
        let u = to_toffoli_level(&build_sat_verifier(phi).unwrap()).unwrap();
        let n = phi.num_vars();
        for x in 0..1u64 << n {
            let mut input = bits(x, n);
            input.resize(u.num_qubits(), false);
            let y = run_reversible(&u, &input).unwrap();
            let want = phi.eval(&Assignment::from_index(x, n)).unwrap();
            assert_eq!(y[u.layout.out], want, "{phi} at {x:b}");
            assert_eq!(&y[..n], &input[..n]);
            assert!(!y[u.layout.cls.unwrap()]);
            for &s in &u.layout.scratch {
                assert!(!y[s]);
            }
        }
    }

    #[test]
    fn verifier_examples() {
        verify_all(&CnfFormula::from_signed(1, &[&[1]]).unwrap());
        verify_all(&CnfFormula::from_signed(2, &[&[1, 2], &[-1, -2]]).unwrap());
        verify_all(&CnfFormula::from_signed(2, &[&[1, 2]]).unwrap());
        verify_all(&CnfFormula::from_signed(3, &[&[1, 2, 3], &[-1], &[2, -3], &[1, -2, 3]]).unwrap());
        verify_all(&CnfFormula::from_signed(2, &[]).unwrap());
    }

    #[test]
    fn verifier_on_x_or_y_restores_ancillas() {
        let phi = CnfFormula::from_signed(2, &[&[1, 2]]).unwrap();
        let u = build_sat_verifier(&phi).unwrap();
        let mut input = vec![true, false];
        input.resize(u.num_qubits(), false);
        let y = run_reversible(&u, &input).unwrap();
        assert!(y[u.layout.out]);
        assert!(!y[u.layout.cls.unwrap()]);
        assert!(u.layout.cnt.iter().all(|&q| !y[q]));
    }

    #[test]
    fn verifier_ancilla_budget() {
        let phi = CnfFormula::from_signed(4, &[&[1, 2, 3], &[-1, 4], &[2, 3, -4], &[1]]).unwrap();
        let u = build_sat_verifier(&phi).unwrap();
        let r = counter_width(4);
        assert_eq!(u.layout.num_ancillas(), r + 2 + u.layout.scratch.len());
        assert!(u.layout.scratch.len() <= r.max(3));
    }

    #[test]
    fn certificate_bounds_count() {
        let phi = CnfFormula::from_signed(
            6,
            &[
                &[1, 2, 3],
                &[-1, 4, 5],
                &[2, -5, 6],
                &[-2, -3, -6],
                &[1, 3, 5],
                &[-4, 5, -6],
                &[2, 4, 6],
                &[-1, -3, 4],
                &[3, -5, 6],
                &[1, -2, -6],
            ],
        )
        .unwrap();
        let u = build_sat_verifier(&phi).unwrap();
        assert!(u.elementary_count() <= u.gate_count_certificate.unwrap());
        // Full Toffoli-level expansion agrees with the per-gate cost model.
        let toff = to_toffoli_level(&u).unwrap();
        assert_eq!(toff.elementary_count(), u.elementary_count());
    }

    #[test]
    fn elementary_circuit_is_two_local_and_correct() {
        let phi = CnfFormula::from_signed(2, &[&[1, -2], &[2]]).unwrap();
        let u = to_elementary(&build_sat_verifier(&phi).unwrap()).unwrap();
        assert!(u.max_arity() <= 2);
        for x in 0..4 {
            let p = acceptance_probability_basis(&u, x).unwrap();
            let want = phi.eval(&Assignment::from_index(x, 2)).unwrap();
            assert!((p - want as u8 as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn sandwich_single_cz() {
        let c = QuantumCircuit::new(RegisterLayout::new(2, 0, 1), vec![Gate::cz(0, 1)]).unwrap();
        let s = cz_sandwich_normalize(&c).unwrap();
        assert_eq!(
            s.gates,
            vec![Gate::z(0), Gate::z(1), Gate::cz(0, 1), Gate::z(0), Gate::z(1)]
        );
        assert_eq!(s.t2_set, vec![3]);
        assert_eq!(s.total_steps(), 5);
    }

    #[test]
    fn sandwich_no_cz() {
        let c = QuantumCircuit::new(RegisterLayout::new(1, 0, 0), vec![Gate::h(0)]).unwrap();
        let s = cz_sandwich_normalize(&c).unwrap();
        assert_eq!(s.gates, vec![Gate::h(0)]);
        assert!(s.t2_set.is_empty());
    }

    #[test]
    fn sandwich_preserves_unitary_and_spacing() {
        let c = QuantumCircuit::new(
            RegisterLayout::new(3, 0, 2),
            vec![Gate::cz(0, 1), Gate::h(0), Gate::cz(1, 2)],
        )
        .unwrap();
        let s = cz_sandwich_normalize(&c).unwrap();
        let u0 = circuit_unitary(&c).unwrap();
        let u1 = circuit_unitary(&s.to_circuit()).unwrap();
        assert!(op_norm(&(u0 - u1)) < 1e-10);
        assert_eq!(s.t2_set.len(), 2);
        assert_eq!(s.t2_set[1] - s.t2_set[0], s.stride.unwrap());
        assert!(s.check().is_ok());
    }

    #[test]
    fn sandwich_rejects_cnot() {
        let c = QuantumCircuit::new(RegisterLayout::new(2, 0, 1), vec![Gate::cnot(0, 1)]).unwrap();
        assert!(matches!(
            cz_sandwich_normalize(&c),
            Err(CircuitError::UnsupportedGateKind { .. })
        ));
        let r = recompile_to_cz(&c).unwrap();
        assert!(op_norm(&(circuit_unitary(&c).unwrap() - circuit_unitary(&r).unwrap())) < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let phi = CnfFormula::from_signed(2, &[&[1, 2]]).unwrap();
        let u = build_sat_verifier(&phi).unwrap();
        let s = u.to_json();
        assert!(s.contains("\"kind\": \"CK_NOT\"") || s.contains("\"kind\": \"CNOT\""));
        assert_eq!(QuantumCircuit::from_json(&s).unwrap(), u);
    }

    #[test]
    fn max_acceptance_of_hadamard() {
        let c = QuantumCircuit::new(RegisterLayout::new(1, 0, 0), vec![Gate::h(0)]).unwrap();
        assert!((max_acceptance(&c).unwrap() - 1.0).abs() < 1e-12);
        let c = QuantumCircuit::new(RegisterLayout::new(0, 1, 0), vec![Gate::h(0)]).unwrap();
        assert!((max_acceptance(&c).unwrap() - 0.5).abs() < 1e-12);
    }
}
