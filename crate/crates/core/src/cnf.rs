//! k-CNF formulas: DIMACS ingestion, evaluation and the exhaustive oracle.
//!
//! Variables are 1-based as in DIMACS. An [`Assignment`] stores bit `i` for
//! variable `i + 1`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of variables the exhaustive oracle will accept.
pub const DEFAULT_ORACLE_CAP: usize = 24;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CnfError {
    #[error("line {line}: malformed header: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("line {line}: malformed clause: {reason}")]
    MalformedClause { line: usize, reason: String },
    #[error("line {line}: literal {literal} out of range for {num_vars} variables")]
    LiteralOutOfRange {
        line: usize,
        literal: i64,
        num_vars: usize,
    },
    #[error("line {line}: clause contains x{var} and its negation")]
    TautologicalClause { line: usize, var: usize },
    #[error("line {line}: clause repeats literal on x{var}")]
    DuplicateLiteral { line: usize, var: usize },
    #[error("header declares {declared} clauses, found {found}")]
    ClauseCountMismatch { declared: usize, found: usize },
    #[error("clause has {len} literals, above arity bound {bound}")]
    ArityExceeded { len: usize, bound: usize },
    #[error("assignment has {got} bits, formula has {expected} variables")]
    LengthMismatch { expected: usize, got: usize },
    #[error("oracle cap exceeded: {num_vars} variables > cap {cap}")]
    OracleCapExceeded { num_vars: usize, cap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Literal {
    /// 1-based variable index.
    pub var: usize,
    pub negated: bool,
}

impl Literal {
    pub fn pos(var: usize) -> Self {
        Self {
            var,
            negated: false,
        }
    }

    pub fn neg(var: usize) -> Self {
        Self { var, negated: true }
    }

    /// Signed DIMACS form.
    pub fn to_dimacs(self) -> i64 {
        if self.negated {
            -(self.var as i64)
        } else {
            self.var as i64
        }
    }

    /// Truth value under a full assignment.
    #[inline]
    pub fn eval(self, x: &Assignment) -> bool {
        x.get(self.var) != self.negated
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            write!(f, "¬x{}", self.var)
        } else {
            write!(f, "x{}", self.var)
        }
    }
}

/// A disjunction of literals over distinct variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Clause {
    literals: Vec<Literal>,
}

impl Clause {
    /// Builds a clause, rejecting repeated variables.
    pub fn new(literals: Vec<Literal>) -> Result<Self, CnfError> {
        Self::checked(literals, 0)
    }

    fn checked(literals: Vec<Literal>, line: usize) -> Result<Self, CnfError> {
        for (i, a) in literals.iter().enumerate() {
            if a.var == 0 {
                return Err(CnfError::MalformedClause {
                    line,
                    reason: "variable index 0".into(),
                });
            }
            for b in &literals[i + 1..] {
                if a.var == b.var {
                    return Err(if a.negated == b.negated {
                        CnfError::DuplicateLiteral { line, var: a.var }
                    } else {
                        CnfError::TautologicalClause { line, var: a.var }
                    });
                }
            }
        }
        Ok(Self { literals })
    }

    pub fn literals(&self) -> &[Literal] {
        &self.literals
    }

    pub fn len(&self) -> usize {
        self.literals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.literals.is_empty()
    }

    pub fn eval(&self, x: &Assignment) -> bool {
        self.literals.iter().any(|l| l.eval(x))
    }

    /// The unique assignment to this clause's variables (in literal order)
    /// that falsifies it: every literal set to false.
    pub fn falsifying_bits(&self) -> Vec<bool> {
        self.literals.iter().map(|l| l.negated).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnfFormula {
    num_vars: usize,
    arity_bound: usize,
    clauses: Vec<Clause>,
}

impl CnfFormula {
    /// Builds a formula with an explicit arity bound `k`.
    pub fn new(num_vars: usize, arity_bound: usize, clauses: Vec<Clause>) -> Result<Self, CnfError> {
        for c in &clauses {
            if c.len() > arity_bound {
                return Err(CnfError::ArityExceeded {
                    len: c.len(),
                    bound: arity_bound,
                });
            }
            if let Some(l) = c.literals.iter().find(|l| l.var > num_vars) {
                return Err(CnfError::LiteralOutOfRange {
                    line: 0,
                    literal: l.to_dimacs(),
                    num_vars,
                });
            }
        }
        Ok(Self {
            num_vars,
            arity_bound,
            clauses,
        })
    }

    /// Builds a formula from signed DIMACS-style clause lists; the arity
    /// bound is the longest clause.
    pub fn from_signed(num_vars: usize, clauses: &[&[i64]]) -> Result<Self, CnfError> {
        let clauses = clauses
            .iter()
            .map(|c| {
                Clause::new(
                    c.iter()
                        .map(|&v| Literal {
                            var: v.unsigned_abs() as usize,
                            negated: v < 0,
                        })
                        .collect(),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let k = clauses.iter().map(Clause::len).max().unwrap_or(0);
        Self::new(num_vars, k, clauses)
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    pub fn arity_bound(&self) -> usize {
        self.arity_bound
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn eval(&self, x: &Assignment) -> Result<bool, CnfError> {
        self.check_len(x)?;
        Ok(self.clauses.iter().all(|c| c.eval(x)))
    }

    /// Number of clauses `x` falsifies.
    pub fn violations(&self, x: &Assignment) -> Result<usize, CnfError> {
        self.check_len(x)?;
        Ok(self.clauses.iter().filter(|c| !c.eval(x)).count())
    }

    fn check_len(&self, x: &Assignment) -> Result<(), CnfError> {
        if x.len() != self.num_vars {
            return Err(CnfError::LengthMismatch {
                expected: self.num_vars,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Removes clause `i`, keeping the arity bound.
    pub fn without_clause(&self, i: usize) -> Self {
        let mut clauses = self.clauses.clone();
        clauses.remove(i);
        Self {
            num_vars: self.num_vars,
            arity_bound: self.arity_bound,
            clauses,
        }
    }

    /// Canonical DIMACS text, preceded by a generator comment.
    pub fn to_dimacs(&self) -> String {
        let mut out = String::from("c generated by hamreduce\n");
        out.push_str(&format!("p cnf {} {}\n", self.num_vars, self.clauses.len()));
        for c in &self.clauses {
            for l in &c.literals {
                out.push_str(&l.to_dimacs().to_string());
                out.push(' ');
            }
            out.push_str("0\n");
        }
        out
    }
}

impl fmt::Display for CnfFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.clauses.is_empty() {
            return write!(f, "⊤");
        }
        for (i, c) in self.clauses.iter().enumerate() {
            if i > 0 {
                write!(f, " ∧ ")?;
            }
            write!(f, "(")?;
            for (j, l) in c.literals.iter().enumerate() {
                if j > 0 {
                    write!(f, " ∨ ")?;
                }
                write!(f, "{l}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// A full assignment; bit `i` holds variable `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    bits: Vec<bool>,
}

impl Assignment {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// Assignment read from an integer with variable 1 as the most
    /// significant of `n` bits, matching basis-state ordering.
    pub fn from_index(index: u64, n: usize) -> Self {
        Self {
            bits: (0..n).map(|i| (index >> (n - 1 - i)) & 1 == 1).collect(),
        }
    }

    /// Parses a string of '0'/'1' characters, variable 1 first.
    pub fn from_str_bits(s: &str) -> Option<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(Self::new)
    }

    pub fn to_index(&self) -> u64 {
        self.bits.iter().fold(0, |acc, &b| (acc << 1) | b as u64)
    }

    /// Value of 1-based variable `var`.
    #[inline]
    pub fn get(&self, var: usize) -> bool {
        self.bits[var - 1]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            write!(f, "{}", b as u8)?;
        }
        Ok(())
    }
}

/// Parses DIMACS CNF text.
///
/// The arity bound of the result is the length of the longest clause.
/// Clauses may span lines; a `%` line ends the clause section (some
/// benchmark files carry one).
pub fn parse_dimacs(text: &str) -> Result<CnfFormula, CnfError> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses = Vec::new();
    let mut current: Vec<Literal> = Vec::new();
    let mut current_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        if line.starts_with('%') {
            break;
        }
        if line.starts_with('p') {
            if header.is_some() {
                return Err(CnfError::MalformedHeader {
                    line: line_no,
                    reason: "duplicate header".into(),
                });
            }
            header = Some(parse_header(line, line_no)?);
            continue;
        }
        let Some((num_vars, _)) = header else {
            return Err(CnfError::MalformedHeader {
                line: line_no,
                reason: "clause before 'p cnf' header".into(),
            });
        };
        for tok in line.split_whitespace() {
            let v: i64 = tok.parse().map_err(|_| CnfError::MalformedClause {
                line: line_no,
                reason: format!("not an integer: {tok:?}"),
            })?;
            if current.is_empty() {
                current_line = line_no;
            }
            if v == 0 {
                clauses.push(Clause::checked(std::mem::take(&mut current), current_line)?);
                continue;
            }
            let var = v.unsigned_abs() as usize;
            if var > num_vars {
                return Err(CnfError::LiteralOutOfRange {
                    line: line_no,
                    literal: v,
                    num_vars,
                });
            }
            current.push(Literal {
                var,
                negated: v < 0,
            });
        }
    }

    let Some((num_vars, declared)) = header else {
        return Err(CnfError::MalformedHeader {
            line: 0,
            reason: "missing 'p cnf' header".into(),
        });
    };
    if !current.is_empty() {
        // Final clause without its terminating 0.
        clauses.push(Clause::checked(current, current_line)?);
    }
    if clauses.len() != declared {
        return Err(CnfError::ClauseCountMismatch {
            declared,
            found: clauses.len(),
        });
    }
    let k = clauses.iter().map(Clause::len).max().unwrap_or(0);
    CnfFormula::new(num_vars, k, clauses)
}

fn parse_header(line: &str, line_no: usize) -> Result<(usize, usize), CnfError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    let bad = |reason: &str| CnfError::MalformedHeader {
        line: line_no,
        reason: reason.into(),
    };
    if fields.len() != 4 || fields[0] != "p" || fields[1] != "cnf" {
        return Err(bad("expected 'p cnf <vars> <clauses>'"));
    }
    let n = fields[2].parse().map_err(|_| bad("bad variable count"))?;
    let m = fields[3].parse().map_err(|_| bad("bad clause count"))?;
    Ok((n, m))
}

/// Result of the exhaustive violation scan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinViolations {
    pub min_count: usize,
    pub witness: Assignment,
}

/// Exhaustive minimum number of falsified clauses over all `2^n`
/// assignments, with the default cap.
pub fn brute_force_min_violations(phi: &CnfFormula) -> Result<MinViolations, CnfError> {
    brute_force_min_violations_capped(phi, DEFAULT_ORACLE_CAP)
}

/// As [`brute_force_min_violations`] with an explicit variable cap.
///
/// Ties go to the lexicographically smallest assignment (variable 1 most
/// significant), so the parallel scan returns the same witness as a
/// sequential one.
pub fn brute_force_min_violations_capped(
    phi: &CnfFormula,
    cap: usize,
) -> Result<MinViolations, CnfError> {
    let n = phi.num_vars();
    if n > cap {
        return Err(CnfError::OracleCapExceeded { num_vars: n, cap });
    }
    // Clause masks over the index encoding: variable v sits at bit n - v.
    let masks: Vec<(u64, u64)> = phi
        .clauses()
        .iter()
        .map(|c| {
            c.literals().iter().fold((0u64, 0u64), |(care, val), l| {
                let bit = 1u64 << (n - l.var);
                (care | bit, if l.negated { val } else { val | bit })
            })
        })
        .collect();
    // A clause is falsified iff every literal is false, i.e. the cared bits
    // equal the negation pattern.
    let count = |x: u64| {
        masks
            .iter()
            .filter(|&&(care, pos)| x & care == (!pos) & care)
            .count()
    };
    let (min_count, index) = (0..1u64 << n)
        .into_par_iter()
        .map(|x| (count(x), x))
        .min()
        .expect("at least one assignment");
    Ok(MinViolations {
        min_count,
        witness: Assignment::from_index(index, n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_two_literal_clause() {
        let f = parse_dimacs("p cnf 2 1\n1 -2 0").unwrap();
        assert_eq!(f.num_vars(), 2);
        assert_eq!(f.num_clauses(), 1);
        assert_eq!(f.arity_bound(), 2);
        assert_eq!(f.clauses()[0].literals(), &[Literal::pos(1), Literal::neg(2)]);
    }

    #[test]
    fn rejects_tautology() {
        assert!(matches!(
            parse_dimacs("p cnf 1 1\n1 -1 0"),
            Err(CnfError::TautologicalClause { line: 2, var: 1 })
        ));
    }

    #[test]
    fn parses_mixed_arity() {
        let f = parse_dimacs("p cnf 3 2\n1 2 3 0\n-1 -2 0").unwrap();
        assert_eq!((f.num_vars(), f.num_clauses(), f.arity_bound()), (3, 2, 3));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            parse_dimacs("p cnf x 1\n1 0"),
            Err(CnfError::MalformedHeader { line: 1, .. })
        ));
        assert!(matches!(
            parse_dimacs("1 0"),
            Err(CnfError::MalformedHeader { .. })
        ));
        assert!(matches!(
            parse_dimacs("p cnf 2 1\n1 3 0"),
            Err(CnfError::LiteralOutOfRange { literal: 3, .. })
        ));
        assert!(matches!(
            parse_dimacs("p cnf 2 1\n1 1 0"),
            Err(CnfError::DuplicateLiteral { var: 1, .. })
        ));
        assert!(matches!(
            parse_dimacs("p cnf 2 2\n1 2 0"),
            Err(CnfError::ClauseCountMismatch {
                declared: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn comments_and_multiline_clauses() {
        let f = parse_dimacs("c hello\np cnf 3 2\n1\n2 0 -3\n0\n").unwrap();
        assert_eq!(f.clauses()[0].len(), 2);
        assert_eq!(f.clauses()[1].literals(), &[Literal::neg(3)]);
    }

    #[test]
    fn serializer_emits_comment() {
        let f = CnfFormula::from_signed(2, &[&[1, -2]]).unwrap();
        let s = f.to_dimacs();
        assert!(s.starts_with("c generated by hamreduce\np cnf 2 1\n"));
        assert_eq!(parse_dimacs(&s).unwrap(), f);
    }

    #[test]
    fn eval_examples() {
        let f = CnfFormula::from_signed(2, &[&[1, -2], &[-1, 2]]).unwrap();
        assert!(f.eval(&Assignment::from_str_bits("11").unwrap()).unwrap());
        let contra = CnfFormula::from_signed(1, &[&[1], &[-1]]).unwrap();
        for x in ["0", "1"] {
            assert!(!contra.eval(&Assignment::from_str_bits(x).unwrap()).unwrap());
        }
        let f3 = CnfFormula::from_signed(3, &[&[1, 2, 3]]).unwrap();
        assert!(!f3.eval(&Assignment::from_str_bits("000").unwrap()).unwrap());
        assert!(matches!(
            f3.eval(&Assignment::from_str_bits("00").unwrap()),
            Err(CnfError::LengthMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn min_violations_examples() {
        let contra = CnfFormula::from_signed(1, &[&[1], &[-1]]).unwrap();
        let r = brute_force_min_violations(&contra).unwrap();
        assert_eq!(r.min_count, 1);
        assert_eq!(r.witness.to_string(), "0");

        let or = CnfFormula::from_signed(2, &[&[1, 2]]).unwrap();
        let r = brute_force_min_violations(&or).unwrap();
        assert_eq!(r.min_count, 0);
        // lowest satisfying assignment in lexicographic order
        assert_eq!(r.witness.to_string(), "01");

        let f = CnfFormula::from_signed(2, &[&[1], &[2], &[-1, -2]]).unwrap();
        assert_eq!(brute_force_min_violations(&f).unwrap().min_count, 1);
    }

    #[test]
    fn oracle_cap() {
        let f = CnfFormula::from_signed(5, &[&[1]]).unwrap();
        assert!(matches!(
            brute_force_min_violations_capped(&f, 4),
            Err(CnfError::OracleCapExceeded { num_vars: 5, cap: 4 })
        ));
    }

    #[test]
    fn falsifying_bits_falsify() {
        let c = Clause::new(vec![Literal::pos(1), Literal::neg(3)]).unwrap();
        assert_eq!(c.falsifying_bits(), vec![false, true]);
    }
}
