//! Instance generators shared by the integration tests and the acceptance
//! suite.
#![allow(dead_code)]

use hamreduce::cnf::{Clause, CnfFormula, Literal};
use hamreduce::hamiltonian::{HamiltonianSpec, LocalTerm, TermGroup};
use hamreduce::linalg::{CMat, C64};
use hamreduce::spectra::eigenvalues;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn random_cnf<R: Rng>(rng: &mut R, n: usize, m: usize, k: usize) -> CnfFormula {
    let vars: Vec<usize> = (1..=n).collect();
    let clauses = (0..m)
        .map(|_| {
            let width = rng.gen_range(1..=k.min(n));
            let lits = vars
                .choose_multiple(rng, width)
                .map(|&v| Literal { var: v, negated: rng.gen() })
                .collect();
            Clause::new(lits).expect("distinct variables")
        })
        .collect();
    CnfFormula::new(n, k, clauses).expect("arity respected")
}

pub fn random_block<R: Rng>(rng: &mut R, k: usize) -> CMat {
    let d = 1 << k;
    CMat::from_fn(d, d, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

/// Random PSD spec whose largest eigenvalue is rescaled to `top`.
pub fn random_psd_spec<R: Rng>(rng: &mut R, n: usize, num_terms: usize, top: f64) -> HamiltonianSpec {
    let qubits: Vec<usize> = (0..n).collect();
    let terms: Vec<LocalTerm> = (0..num_terms)
        .map(|_| {
            let k = rng.gen_range(1..=2.min(n));
            let support: Vec<usize> = qubits.choose_multiple(rng, k).copied().collect();
            let b = random_block(rng, k);
            LocalTerm::new(rng.gen_range(0.1..1.0), &support, b.adjoint() * b, TermGroup::Prop, None).expect("valid term")
        })
        .collect();
    let spec = HamiltonianSpec::new(n, 2.min(n), terms).expect("valid spec");
    let max = eigenvalues(&spec).expect("small").last().copied().unwrap_or(0.0);
    if max <= 0.0 {
        spec
    } else {
        spec.scaled(top / max)
    }
}

/// Random Hermitian spec (not necessarily PSD) with 1- and 2-local terms.
pub fn random_hermitian_spec<R: Rng>(rng: &mut R, n: usize, num_terms: usize) -> HamiltonianSpec {
    let qubits: Vec<usize> = (0..n).collect();
    let terms: Vec<LocalTerm> = (0..num_terms)
        .map(|_| {
            let k = rng.gen_range(1..=2.min(n));
            let support: Vec<usize> = qubits.choose_multiple(rng, k).copied().collect();
            let b = random_block(rng, k);
            LocalTerm::new(rng.gen_range(-1.0..1.0), &support, (&b + b.adjoint()) * C64::new(0.5, 0.0), TermGroup::Prop, None).expect("valid term")
        })
        .collect();
    HamiltonianSpec::new(n, 2.min(n), terms).expect("valid spec")
}

/// Haar-ish random unitary from the QR of a complex Gaussian-like matrix.
pub fn random_unitary<R: Rng>(rng: &mut R, k: usize) -> CMat {
    let m = random_block(rng, k);
    m.qr().q()
}
