//! Johnson-graph clocks.
//!
//! A clock over `n_cl` qubits with weight `d` is a Hamiltonian path
//! `S_0, …, S_T` through the d-subsets of `[1, n_cl]`; the clock state
//! `|γ_t⟩` has ones exactly at `S_t`. Subsets are 1-based; a consumer
//! placing the clock at qubit offset `o` maps element `i` to `o + i − 1`.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{basis_projector, CMat, ONE};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClockError {
    #[error("need at least 3 clock qubits for the two-step path, got {0}")]
    TooFewClockQubits(usize),
    #[error("invalid clock parameters n_cl={n_cl}, d={d}: {reason}")]
    InvalidParameters {
        n_cl: usize,
        d: usize,
        reason: String,
    },
    #[error("step {t} outside 0..={max}")]
    StepOutOfRange { t: usize, max: usize },
}

/// Sorted d-subset of `[1, n_cl]`.
pub type JohnsonVertex = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockSchedule {
    pub n_cl: usize,
    pub d: usize,
    pub path: Vec<JohnsonVertex>,
}

impl ClockSchedule {
    /// Index of the last vertex, `T`.
    pub fn total_steps(&self) -> usize {
        self.path.len() - 1
    }

    pub fn vertex(&self, t: usize) -> Result<&JohnsonVertex, ClockError> {
        self.path.get(t).ok_or(ClockError::StepOutOfRange {
            t,
            max: self.total_steps(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.path).expect("path serializes")
    }
}

/// `C(n, k)`, saturating on overflow.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc.min(usize::MAX as u128) as usize
}

/// Smallest `n_cl` with `C(n_cl, d) ≥ steps + 1`, i.e. a full path with at
/// least `steps` transitions.
pub fn min_clock_qubits(steps: usize, d: usize, floor: usize) -> usize {
    let mut n = floor.max(d + 1);
    while binomial(n, d) < steps + 1 {
        n += 1;
    }
    n
}

/// Hamiltonian path in J(n_cl, 2) with `|S_t ∩ S_{t+2}| = 1` throughout.
///
/// Built recursively from `({1,2},{2,3},{1,3})`: given the path on `[n−1]`
/// ending at `{x, n−1}`, append `{n−1, n}`, `{x, n}`, then `{z, n}` for the
/// remaining `z` in increasing order.
pub fn johnson_path_d2(n_cl: usize) -> Result<ClockSchedule, ClockError> {
    if n_cl < 3 {
        return Err(ClockError::TooFewClockQubits(n_cl));
    }
    let mut path: Vec<JohnsonVertex> = vec![vec![1, 2], vec![2, 3], vec![1, 3]];
    for n in 4..=n_cl {
        let last = path.last().expect("nonempty");
        let x = if last[0] == n - 1 { last[1] } else { last[0] };
        path.push(vec![n - 1, n]);
        path.push(vec![x, n]);
        path.extend((1..n - 1).filter(|&z| z != x).map(|z| vec![z, n]));
    }
    Ok(ClockSchedule { n_cl, d: 2, path })
}

/// Revolving-door ordering of the d-subsets of `[1, n_cl]`: consecutive
/// subsets differ by one swap, so the ordering is a Hamiltonian path in the
/// Johnson graph.
pub fn johnson_path_generic(n_cl: usize, d: usize) -> Result<ClockSchedule, ClockError> {
    if d == 0 || d >= n_cl {
        return Err(ClockError::InvalidParameters {
            n_cl,
            d,
            reason: "need 1 ≤ d < n_cl".into(),
        });
    }
    Ok(ClockSchedule {
        n_cl,
        d,
        path: revolving_door(n_cl, d),
    })
}

// R(n, k) = R(n−1, k) followed by reverse(R(n−1, k−1)) with n appended.
fn revolving_door(n: usize, k: usize) -> Vec<JohnsonVertex> {
    if k == 0 {
        return vec![vec![]];
    }
    if k == n {
        return vec![(1..=n).collect()];
    }
    let mut out = revolving_door(n - 1, k);
    out.extend(revolving_door(n - 1, k - 1).into_iter().rev().map(|mut s| {
        s.push(n);
        s
    }));
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockState {
    pub t: usize,
    pub bits: Vec<bool>,
}

impl fmt::Display for ClockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            write!(f, "{}", b as u8)?;
        }
        Ok(())
    }
}

pub fn clock_state(sched: &ClockSchedule, t: usize) -> Result<ClockState, ClockError> {
    let s = sched.vertex(t)?;
    let mut bits = vec![false; sched.n_cl];
    for &i in s {
        bits[i - 1] = true;
    }
    Ok(ClockState { t, bits })
}

/// Basis index of `|γ_t⟩` within the clock register.
pub fn clock_index(sched: &ClockSchedule, t: usize) -> Result<usize, ClockError> {
    let s = sched.vertex(t)?;
    Ok(s.iter().fold(0, |acc, &i| acc | 1 << (sched.n_cl - i)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransitionKind {
    /// `F_t = |γ_t⟩⟨γ_{t−1}|`, `1 ≤ t ≤ T`.
    Forward,
    /// `F_t†`.
    Backward,
    /// `P_t = |γ_t⟩⟨γ_t|`, `0 ≤ t ≤ T`.
    Pause,
}

/// Role sets of a clock transition; 1-based clock elements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockTermDescriptor {
    pub kind: TransitionKind,
    pub t: usize,
    /// In the source vertex only.
    pub leaving: Vec<usize>,
    /// In the destination vertex only.
    pub entering: Vec<usize>,
    /// In both (for a pause, the whole vertex).
    pub held: Vec<usize>,
}

impl ClockTermDescriptor {
    /// Qubits touched, in block order: held, leaving, entering.
    pub fn qubits(&self) -> Vec<usize> {
        let mut q = self.held.clone();
        q.extend(&self.leaving);
        q.extend(&self.entering);
        q
    }

    /// Operator block on [`Self::qubits`].
    ///
    /// Forward maps (held = 1, leaving = 1, entering = 0) to (1, 0, 1);
    /// backward is its adjoint; pause projects onto all ones.
    pub fn block(&self) -> CMat {
        let h = self.held.len();
        let l = self.leaving.len();
        let e = self.entering.len();
        let src: Vec<bool> = std::iter::repeat_n(true, h + l)
            .chain(std::iter::repeat_n(false, e))
            .collect();
        let dst: Vec<bool> = std::iter::repeat_n(true, h)
            .chain(std::iter::repeat_n(false, l))
            .chain(std::iter::repeat_n(true, e))
            .collect();
        match self.kind {
            TransitionKind::Pause => basis_projector(&src),
            TransitionKind::Forward | TransitionKind::Backward => {
                let idx = |b: &[bool]| b.iter().fold(0usize, |a, &x| (a << 1) | x as usize);
                let dim = 1 << (h + l + e);
                let mut m = CMat::zeros(dim, dim);
                let (to, from) = (idx(&dst), idx(&src));
                if self.kind == TransitionKind::Forward {
                    m[(to, from)] = ONE;
                } else {
                    m[(from, to)] = ONE;
                }
                m
            }
        }
    }
}

/// Role sets for the transition of `kind` at step `t`.
pub fn transition_descriptor(
    sched: &ClockSchedule,
    t: usize,
    kind: TransitionKind,
) -> Result<ClockTermDescriptor, ClockError> {
    match kind {
        TransitionKind::Pause => Ok(ClockTermDescriptor {
            kind,
            t,
            leaving: vec![],
            entering: vec![],
            held: sched.vertex(t)?.clone(),
        }),
        TransitionKind::Forward | TransitionKind::Backward => {
            if t == 0 {
                return Err(ClockError::StepOutOfRange {
                    t,
                    max: sched.total_steps(),
                });
            }
            let (leaving, entering, held) = hop_roles(sched, t - 1, t)?;
            Ok(ClockTermDescriptor {
                kind,
                t,
                leaving,
                entering,
                held,
            })
        }
    }
}

/// `(S_from ∖ S_to, S_to ∖ S_from, S_from ∩ S_to)` for any two steps; used
/// with `to = from + 2` for the two-step transitions of the 3-local clock.
pub fn hop_roles(
    sched: &ClockSchedule,
    from: usize,
    to: usize,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>), ClockError> {
    let a = sched.vertex(from)?;
    let b = sched.vertex(to)?;
    let leaving = a.iter().copied().filter(|x| !b.contains(x)).collect();
    let entering = b.iter().copied().filter(|x| !a.contains(x)).collect();
    let held = a.iter().copied().filter(|x| b.contains(x)).collect();
    Ok((leaving, entering, held))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    WrongSize,
    OutOfRange,
    Unsorted,
    Repeated,
    NotAdjacent,
    TwoStepOverlap,
    /// The path misses some vertex of the Johnson graph.
    NotSpanning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub violations: Vec<Violation>,
}

impl ScheduleReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every schedule invariant, listing each violating index.
pub fn validate_schedule(sched: &ClockSchedule, require_two_step: bool) -> ScheduleReport {
    let mut violations = Vec::new();
    let mut push = |index, kind| violations.push(Violation { index, kind });
    let mut seen = HashSet::new();
    for (t, s) in sched.path.iter().enumerate() {
        if s.len() != sched.d {
            push(t, ViolationKind::WrongSize);
        }
        if s.iter().any(|&i| i == 0 || i > sched.n_cl) {
            push(t, ViolationKind::OutOfRange);
        }
        if s.windows(2).any(|w| w[0] >= w[1]) {
            push(t, ViolationKind::Unsorted);
        }
        if !seen.insert(s.clone()) {
            push(t, ViolationKind::Repeated);
        }
    }
    let overlap = |a: &JohnsonVertex, b: &JohnsonVertex| a.iter().filter(|x| b.contains(x)).count();
    for t in 0..sched.path.len().saturating_sub(1) {
        if overlap(&sched.path[t], &sched.path[t + 1]) + 1 != sched.d {
            push(t, ViolationKind::NotAdjacent);
        }
    }
    if require_two_step {
        for t in 0..sched.path.len().saturating_sub(2) {
            if overlap(&sched.path[t], &sched.path[t + 2]) != 1 {
                push(t, ViolationKind::TwoStepOverlap);
            }
        }
    }
    if sched.path.len() != binomial(sched.n_cl, sched.d) {
        push(sched.path.len(), ViolationKind::NotSpanning);
    }
    ScheduleReport { violations }
}
