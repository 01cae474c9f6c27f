//! Small dense complex linear-algebra helpers shared by the builders and
//! the spectral code.
//!
//! Basis ordering is big-endian throughout: qubit 0 is the most
//! significant bit of a basis index.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[inline]
pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Kronecker product of a list, left to right.
pub fn kron_all(ops: &[CMat]) -> CMat {
    ops.iter()
        .fold(CMat::identity(1, 1), |acc, op| kron(&acc, op))
}

pub fn identity(dim: usize) -> CMat {
    CMat::identity(dim, dim)
}

/// `|a⟩⟨b|` on one qubit.
pub fn ketbra(a: u8, b: u8) -> CMat {
    let mut m = CMat::zeros(2, 2);
    m[(a as usize, b as usize)] = ONE;
    m
}

/// Projector onto the computational basis string `bits` (first bit most
/// significant).
pub fn basis_projector(bits: &[bool]) -> CMat {
    let dim = 1 << bits.len();
    let idx = bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
    let mut m = CMat::zeros(dim, dim);
    m[(idx, idx)] = ONE;
    m
}

pub fn pauli_x() -> CMat {
    CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_z() -> CMat {
    CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

pub fn hadamard() -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_row_slice(2, 2, &[c(s), c(s), c(s), c(-s)])
}

pub fn t_gate() -> CMat {
    CMat::from_row_slice(
        2,
        2,
        &[ONE, ZERO, ZERO, C64::from_polar(1.0, std::f64::consts::FRAC_PI_4)],
    )
}

/// Largest absolute deviation from Hermiticity.
pub fn hermiticity_defect(m: &CMat) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    m.is_square() && hermiticity_defect(m) <= tol
}

/// Operator (spectral) norm.
pub fn op_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let gram = m.adjoint() * m;
    let ev = SymmetricEigen::new(gram).eigenvalues;
    ev.iter().cloned().fold(0.0f64, f64::max).max(0.0).sqrt()
}

/// Operator norm of a Hermitian matrix: largest |eigenvalue|.
pub fn hermitian_norm(m: &CMat) -> f64 {
    let ev = SymmetricEigen::new(m.clone()).eigenvalues;
    ev.iter().fold(0.0f64, |acc, e| acc.max(e.abs()))
}

pub fn is_unitary(u: &CMat, tol: f64) -> bool {
    u.is_square() && op_norm(&(u.adjoint() * u - identity(u.nrows()))) < tol
}

/// `‖a − e^{iφ} b‖` minimised over the global phase φ.
pub fn phase_insensitive_distance(a: &CMat, b: &CMat) -> f64 {
    let overlap = (b.adjoint() * a).trace();
    let phase = if overlap.norm() > 1e-300 {
        overlap / overlap.norm()
    } else {
        ONE
    };
    op_norm(&(a - b * phase))
}

/// `e^{-i s H}` for Hermitian `h`, via its eigendecomposition.
pub fn expm_i_hermitian(h: &CMat, s: f64) -> CMat {
    let eig = SymmetricEigen::new(h.clone());
    let v = &eig.eigenvectors;
    let phases = CVec::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&e| C64::from_polar(1.0, -s * e)),
    );
    v * CMat::from_diagonal(&phases) * v.adjoint()
}

/// Reorders an operator written on `order` (qubit ids, first most
/// significant) into ascending qubit order. Returns the sorted ids and the
/// permuted matrix.
pub fn sort_support(order: &[usize], m: &CMat) -> (Vec<usize>, CMat) {
    let k = order.len();
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted == order {
        return (sorted, m.clone());
    }
    // position of each sorted qubit within `order`
    let pos: Vec<usize> = sorted
        .iter()
        .map(|q| order.iter().position(|p| p == q).expect("present"))
        .collect();
    let to_order = |s: usize| {
        let mut o = 0usize;
        for (i, &p) in pos.iter().enumerate() {
            if (s >> (k - 1 - i)) & 1 == 1 {
                o |= 1 << (k - 1 - p);
            }
        }
        o
    };
    let dim = 1 << k;
    let map: Vec<usize> = (0..dim).map(to_order).collect();
    let out = CMat::from_fn(dim, dim, |i, j| m[(map[i], map[j])]);
    (sorted, out)
}

/// Embeds `block` (on sorted `support`) into an `n`-qubit operator.
pub fn embed(n: usize, support: &[usize], block: &CMat) -> CMat {
    let dim = 1usize << n;
    let k = support.len();
    let bits: Vec<usize> = support.iter().map(|&q| 1 << (n - 1 - q)).collect();
    let mask = bits.iter().fold(0, |m, b| m | b);
    let gather = |i: usize| {
        bits.iter()
            .fold(0usize, |acc, &b| (acc << 1) | (i & b != 0) as usize)
    };
    let scatter = |rest: usize, sub: usize| {
        bits.iter().enumerate().fold(rest, |acc, (j, &b)| {
            if (sub >> (k - 1 - j)) & 1 == 1 {
                acc | b
            } else {
                acc
            }
        })
    };
    let mut out = CMat::zeros(dim, dim);
    for col in 0..dim {
        let sc = gather(col);
        let rest = col & !mask;
        for sr in 0..1usize << k {
            let v = block[(sr, sc)];
            if v != ZERO {
                out[(scatter(rest, sr), col)] += v;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_orders_first_factor_high() {
        // |1⟩⟨1| ⊗ I has its support on indices 2, 3
        let m = kron(&ketbra(1, 1), &identity(2));
        assert_eq!(m[(2, 2)], ONE);
        assert_eq!(m[(3, 3)], ONE);
        assert_eq!(m[(0, 0)], ZERO);
    }

    #[test]
    fn sort_support_swaps_factors() {
        let a = ketbra(1, 0);
        let b = hadamard();
        let ab = kron(&a, &b);
        let (s, m) = sort_support(&[5, 2], &ab);
        assert_eq!(s, vec![2, 5]);
        assert!((m - kron(&b, &a)).norm() < 1e-15);
    }

    #[test]
    fn embed_matches_kron() {
        let h = hadamard();
        let want = kron(&identity(2), &kron(&h, &identity(2)));
        assert!((embed(3, &[1], &h) - want).norm() < 1e-15);
        // I - |0⟩⟨0| on qubit 0 of 2 → diag(0,0,1,1)
        let p = identity(2) - ketbra(0, 0);
        let m = embed(2, &[0], &p);
        let d: Vec<f64> = (0..4).map(|i| m[(i, i)].re).collect();
        assert_eq!(d, vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn expm_of_z_is_phase() {
        let u = expm_i_hermitian(&pauli_z(), 0.3);
        assert!((u[(0, 0)] - C64::from_polar(1.0, -0.3)).norm() < 1e-14);
        assert!((u[(1, 1)] - C64::from_polar(1.0, 0.3)).norm() < 1e-14);
        assert!(is_unitary(&u, 1e-12));
    }

    #[test]
    fn norms() {
        assert!((op_norm(&hadamard()) - 1.0).abs() < 1e-12);
        assert!((hermitian_norm(&(pauli_z() * c(3.0))) - 3.0).abs() < 1e-12);
    }
}
