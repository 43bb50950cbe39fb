//! Qubit-register operators.
//!
//! Basis convention: single-qubit state `|1⟩` is spin up and `|0⟩` spin down,
//! so `σ⁻ = |0⟩⟨1|`, `σ⁺ = |1⟩⟨0|`, `σᶻ = [σ⁺, σ⁻] = diag(−1, +1)` and
//! `σ^± = (σˣ ± iσʸ)/2`. Spin operators are `ŝ = σ/2`. Qubit (site) 0 is the
//! most significant bit of a register basis index.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{dagger, identity, kron, CMatrix, C64, I, ONE, ZERO};

/// Size of a qubit register.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HilbertSpec {
    n_qubits: usize,
    dim: usize,
}

impl HilbertSpec {
    pub fn new(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::InvalidInput("a register needs at least one qubit".into()));
        }
        if n_qubits > 12 {
            return Err(Error::InvalidInput(format!("{n_qubits} qubits exceeds dense limits")));
        }
        Ok(Self { n_qubits, dim: 1 << n_qubits })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of up spins in basis state `index`.
    pub fn up_count(&self, index: usize) -> u32 {
        index.count_ones()
    }

    /// Whether `site` is up in basis state `index`.
    pub fn is_up(&self, index: usize, site: usize) -> bool {
        index >> (self.n_qubits - 1 - site) & 1 == 1
    }
}

pub fn sigma_x() -> CMatrix {
    ndarray::array![[ZERO, ONE], [ONE, ZERO]]
}

pub fn sigma_y() -> CMatrix {
    ndarray::array![[ZERO, I], [-I, ZERO]]
}

pub fn sigma_z() -> CMatrix {
    ndarray::array![[-ONE, ZERO], [ZERO, ONE]]
}

pub fn sigma_plus() -> CMatrix {
    ndarray::array![[ZERO, ZERO], [ONE, ZERO]]
}

pub fn sigma_minus() -> CMatrix {
    ndarray::array![[ZERO, ONE], [ZERO, ZERO]]
}

/// Embeds a single-qubit operator at `site`.
pub fn site_operator(space: HilbertSpec, site: usize, op: &CMatrix) -> CMatrix {
    let mut out = identity(1);
    for k in 0..space.n_qubits() {
        out = if k == site { kron(&out, op) } else { kron(&out, &identity(2)) };
    }
    out
}

/// `Σ_n c_n op_n` for a site-dependent weight `c_n`.
pub fn collective(space: HilbertSpec, op: &CMatrix, weight: impl Fn(usize) -> f64) -> CMatrix {
    let d = space.dim();
    let mut out = CMatrix::zeros((d, d));
    for site in 0..space.n_qubits() {
        let w = weight(site);
        if w != 0.0 {
            out.scaled_add(C64::new(w, 0.0), &site_operator(space, site, op));
        }
    }
    out
}

/// Total spin squared `J² = (Σ_n ŝ_n)²`.
pub fn total_spin_squared(space: HilbertSpec) -> CMatrix {
    let d = space.dim();
    let mut out = CMatrix::zeros((d, d));
    for op in [sigma_x(), sigma_y(), sigma_z()] {
        let j = collective(space, &op, |_| 0.5);
        out = out + j.dot(&j);
    }
    out
}

/// `σ_x^{⊗n}`, the global π rotation applied by each decoupling pulse.
pub fn global_flip(space: HilbertSpec) -> CMatrix {
    let mut out = identity(1);
    for _ in 0..space.n_qubits() {
        out = kron(&out, &sigma_x());
    }
    out
}

pub fn conjugate(unitary: &CMatrix, op: &CMatrix) -> CMatrix {
    unitary.dot(op).dot(&dagger(unitary))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> CMatrix {
        match self {
            Pauli::I => identity(2),
            Pauli::X => sigma_x(),
            Pauli::Y => sigma_y(),
            Pauli::Z => sigma_z(),
        }
    }

    fn anticommutes(self, other: Pauli) -> bool {
        self != Pauli::I && other != Pauli::I && self != other
    }
}

/// Tensor product of single-site Pauli operators.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliString(Vec<Pauli>);

impl PauliString {
    pub fn new(ops: Vec<Pauli>) -> Self {
        Self(ops)
    }

    pub fn identity(n: usize) -> Self {
        Self(vec![Pauli::I; n])
    }

    /// Parses strings like `"XZII"`.
    pub fn parse(text: &str) -> Result<Self> {
        text.chars()
            .map(|c| match c {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => Err(Error::InvalidInput(format!("unknown Pauli symbol {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn with(mut self, site: usize, op: Pauli) -> Self {
        self.0[site] = op;
        self
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn site(&self, k: usize) -> Pauli {
        self.0[k]
    }

    pub fn ops(&self) -> &[Pauli] {
        &self.0
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        let clashes = self.0.iter().zip(&other.0).filter(|(a, b)| a.anticommutes(**b)).count();
        clashes % 2 == 0
    }

    pub fn matrix(&self) -> CMatrix {
        self.0.iter().fold(identity(1), |acc, p| kron(&acc, &p.matrix()))
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.0 {
            let c = match p {
                Pauli::I => 'I',
                Pauli::X => 'X',
                Pauli::Y => 'Y',
                Pauli::Z => 'Z',
            };
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{commutator, hermitian_eigenvalues, max_abs};

    #[test]
    fn ladder_operators_match_cartesian_combination() {
        let plus = (sigma_x() + sigma_y().mapv(|z| z * I)).mapv(|z| z * 0.5);
        let minus = (sigma_x() - sigma_y().mapv(|z| z * I)).mapv(|z| z * 0.5);
        assert!(max_abs(&(plus - sigma_plus())) < 1e-15);
        assert!(max_abs(&(minus - sigma_minus())) < 1e-15);
        assert!(max_abs(&(commutator(&sigma_plus(), &sigma_minus()) - sigma_z())) < 1e-15);
        // [σx, σy] = 2iσz
        let lhs = commutator(&sigma_x(), &sigma_y());
        assert!(max_abs(&(lhs - sigma_z().mapv(|z| z * 2.0 * I))) < 1e-15);
    }

    #[test]
    fn total_spin_spectrum_two_qubits() {
        let space = HilbertSpec::new(2).unwrap();
        let vals = hermitian_eigenvalues(&total_spin_squared(space)).unwrap();
        // one singlet (0) and a triplet (2)
        let expected = [0.0, 2.0, 2.0, 2.0];
        for (v, e) in vals.iter().zip(expected) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn site_zero_is_most_significant() {
        let space = HilbertSpec::new(3).unwrap();
        let z0 = site_operator(space, 0, &sigma_z());
        // index 0b100 has site 0 up
        assert_eq!(z0[[0b100, 0b100]], ONE);
        assert_eq!(z0[[0b011, 0b011]], -ONE);
        assert!(space.is_up(0b100, 0));
        assert!(!space.is_up(0b100, 2));
    }

    #[test]
    fn pauli_string_commutation() {
        let a = PauliString::parse("XZII").unwrap();
        let b = PauliString::parse("ZXZI").unwrap();
        let c = PauliString::parse("IZXI").unwrap();
        assert!(a.commutes_with(&b));
        assert!(a.commutes_with(&c));
        let x1 = PauliString::parse("XIII").unwrap();
        let z1 = PauliString::parse("ZIII").unwrap();
        assert!(!x1.commutes_with(&z1));
        assert_eq!(a.to_string(), "XZII");
        assert!(PauliString::parse("XQ").is_err());
    }

    #[test]
    fn zero_qubits_rejected() {
        assert!(HilbertSpec::new(0).is_err());
    }
}
