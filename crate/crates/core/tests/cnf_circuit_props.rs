mod common;

use hamreduce::circuit::{
    build_sat_verifier, circuit_unitary, cz_sandwich_normalize, decompose_cknot, recompile_to_cz, run_reversible, Gate, GateKind,
    QuantumCircuit, RegisterLayout,
};
use hamreduce::clock::{binomial, johnson_path_generic, validate_schedule};
use hamreduce::cnf::{brute_force_min_violations, parse_dimacs, Assignment};
use hamreduce::linalg::op_norm;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn formula(seed: u64, n: usize, m: usize, k: usize) -> hamreduce::cnf::CnfFormula {
    common::random_cnf(&mut ChaCha8Rng::seed_from_u64(seed), n, m, k)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dimacs_round_trip(seed in any::<u64>(), n in 1usize..10, m in 0usize..20, k in 1usize..4) {
        let phi = formula(seed, n, m, k);
        let back = parse_dimacs(&phi.to_dimacs()).unwrap();
        prop_assert_eq!(back.num_vars(), phi.num_vars());
        prop_assert_eq!(back.clauses(), phi.clauses());
    }

    #[test]
    fn witness_satisfies_iff_min_is_zero(seed in any::<u64>(), n in 1usize..=12, m in 1usize..30) {
        let phi = formula(seed, n, m, 3);
        let mv = brute_force_min_violations(&phi).unwrap();
        prop_assert_eq!(phi.eval(&mv.witness).unwrap(), mv.min_count == 0);
        prop_assert_eq!(phi.violations(&mv.witness).unwrap(), mv.min_count);
    }

    #[test]
    fn clause_removal_keeps_satisfying_assignments(seed in any::<u64>(), n in 1usize..8, m in 1usize..12) {
        let phi = formula(seed, n, m, 3);
        for x in 0..1u64 << n {
            let a = Assignment::from_index(x, n);
            if phi.eval(&a).unwrap() {
                for i in 0..phi.num_clauses() {
                    prop_assert!(phi.without_clause(i).eval(&a).unwrap());
                }
            }
        }
    }

    #[test]
    fn verifier_is_correct_and_clean(seed in any::<u64>(), n in 1usize..=6, m in 1usize..=8, k in 2usize..=3) {
        let phi = formula(seed, n, m, k);
        let u = build_sat_verifier(&phi).unwrap();
        prop_assert!(u.elementary_count() <= u.gate_count_certificate.unwrap());
        for x in 0..1u64 << n {
            let mut bits = vec![false; u.num_qubits()];
            for v in 0..n {
                bits[v] = (x >> (n - 1 - v)) & 1 == 1;
            }
            let y = run_reversible(&u, &bits).unwrap();
            prop_assert_eq!(y[u.layout.out], phi.eval(&Assignment::from_index(x, n)).unwrap());
            for q in u.layout.ancillas.clone().filter(|&q| q != u.layout.out) {
                prop_assert!(!y[q], "ancilla {} dirty", q);
            }
        }
    }

    #[test]
    fn sandwich_preserves_unitary(seed in any::<u64>(), nq in 2usize..=4, len in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gates: Vec<Gate> = (0..len)
            .map(|_| {
                let a = rng.gen_range(0..nq);
                let mut b = rng.gen_range(0..nq - 1);
                if b >= a {
                    b += 1;
                }
                match rng.gen_range(0..6) {
                    0 => Gate::h(a),
                    1 => Gate::t(a),
                    2 => Gate::not(a),
                    3 => Gate::z(a),
                    4 => Gate::cnot(a, b),
                    _ => Gate::cz(a, b),
                }
            })
            .collect();
        let circ = QuantumCircuit::new(RegisterLayout::new(nq, 0, 0), gates).unwrap();
        let s = cz_sandwich_normalize(&recompile_to_cz(&circ).unwrap()).unwrap();
        prop_assert!(s.check().is_ok());
        let d = op_norm(&(circuit_unitary(&s.to_circuit()).unwrap() - circuit_unitary(&circ).unwrap()));
        prop_assert!(d < 1e-10, "distance {}", d);
        // constant stride between consecutive CZ times
        let gaps: Vec<usize> = s.t2_set.windows(2).map(|w| w[1] - w[0]).collect();
        if let Some(stride) = s.stride {
            prop_assert!(gaps.iter().all(|&g| g == stride), "gaps {:?} stride {}", gaps, stride);
        } else {
            prop_assert!(s.t2_set.len() <= 1);
        }
    }

    #[test]
    fn generic_paths_are_hamiltonian(n_cl in 2usize..=16, d in 1usize..=5) {
        prop_assume!(d < n_cl && binomial(n_cl, d) <= 20_000);
        let s = johnson_path_generic(n_cl, d).unwrap();
        prop_assert_eq!(s.path.len(), binomial(n_cl, d));
        let r = validate_schedule(&s, false);
        prop_assert!(r.ok(), "{:?}", r.violations);
    }
}

#[test]
fn cknot_decomposition_truth_table() {
    for k in 3..=6usize {
        let controls: Vec<usize> = (0..k).collect();
        let scratch: Vec<usize> = (k + 1..2 * k - 1).collect();
        let g = Gate::cknot(controls, k);
        let parts = decompose_cknot(&g, &scratch).unwrap();
        assert_eq!(parts.len(), 2 * k - 3);
        assert!(parts.iter().all(|p| p.kind == GateKind::Toffoli));
        let nq = 2 * k - 1;
        let circ = QuantumCircuit::new(RegisterLayout::new(k + 1, k - 2, k), parts).unwrap();
        for x in 0..1usize << (k + 1) {
            let mut bits = vec![false; nq];
            for (q, b) in bits.iter_mut().enumerate().take(k + 1) {
                *b = (x >> (k - q)) & 1 == 1;
            }
            let y = run_reversible(&circ, &bits).unwrap();
            let all = bits[..k].iter().all(|&b| b);
            assert_eq!(y[k], bits[k] ^ all, "k={k}, x={x:b}");
            assert_eq!(&y[..k], &bits[..k]);
            assert!(y[k + 1..].iter().all(|&b| !b), "scratch dirty");
        }
    }
}
