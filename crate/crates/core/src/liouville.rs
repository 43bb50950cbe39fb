//! Density matrices, Lindblad generators and their propagation.
//!
//! Superoperators act on operators flattened in column-stacked order
//! (`|a⟩⟨b|` ↦ index `a + b·dim`). A superoperator may be restricted to an
//! invariant subspace of matrix units (an [`OperatorBasis`] sector), which is
//! how the six-qubit experiments stay at a 924-dimensional Liouville space
//! instead of 4096.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::linalg::{
    self, dagger, hermiticity_defect, CMatrix, CVector, C64, I, ONE, ZERO,
};
use crate::spin::HilbertSpec;

const HERMITIAN_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-8;
const POSITIVITY_TOL: f64 = 1e-8;
const LEAK_TOL: f64 = 1e-12;

/// A validated qubit-register state.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    space: HilbertSpec,
    entries: CMatrix,
}

impl DensityMatrix {
    /// Checks Hermiticity, unit trace and positivity.
    pub fn new(space: HilbertSpec, entries: CMatrix) -> Result<Self> {
        let rho = Self::new_unchecked(space, entries)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Only checks the shape; used for intermediate propagation results.
    pub fn new_unchecked(space: HilbertSpec, entries: CMatrix) -> Result<Self> {
        if entries.dim() != (space.dim(), space.dim()) {
            return Err(Error::Dimension(format!(
                "density matrix {:?} for register of dim {}",
                entries.dim(),
                space.dim()
            )));
        }
        Ok(Self { space, entries })
    }

    pub fn basis_state(space: HilbertSpec, index: usize) -> Result<Self> {
        if index >= space.dim() {
            return Err(Error::InvalidInput(format!("basis index {index} out of range")));
        }
        let mut m = CMatrix::zeros((space.dim(), space.dim()));
        m[[index, index]] = ONE;
        Ok(Self { space, entries: m })
    }

    /// `|ψ⟩⟨ψ|` for a normalized copy of `psi`.
    pub fn pure(space: HilbertSpec, psi: &CVector) -> Result<Self> {
        if psi.len() != space.dim() {
            return Err(Error::Dimension(format!("state vector of length {}", psi.len())));
        }
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidInput("zero state vector".into()));
        }
        let psi = psi.mapv(|z| z / norm);
        let d = space.dim();
        let m = CMatrix::from_shape_fn((d, d), |(i, j)| psi[i] * psi[j].conj());
        Ok(Self { space, entries: m })
    }

    pub fn maximally_mixed(space: HilbertSpec) -> Self {
        let d = space.dim();
        let m = CMatrix::from_diag_elem(d, C64::new(1.0 / d as f64, 0.0));
        Self { space, entries: m }
    }

    pub fn space(&self) -> HilbertSpec {
        self.space
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.entries).re
    }

    /// `Tr(op ρ)`, real part.
    pub fn expectation(&self, op: &CMatrix) -> f64 {
        // Tr(AB) = Σ_ij A_ij B_ji
        op.indexed_iter().map(|((i, j), a)| (a * self.entries[[j, i]]).re).sum()
    }

    /// `⟨ψ|ρ|ψ⟩` for a normalized `psi`.
    pub fn fidelity_with_pure(&self, psi: &CVector) -> f64 {
        let rho_psi = self.entries.dot(psi);
        psi.iter().zip(rho_psi.iter()).map(|(a, b)| (a.conj() * b).re).sum()
    }

    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        linalg::trace_distance(&self.entries, &other.entries)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let vals = linalg::hermitian_eigenvalues(&self.entries)?;
        Ok(vals.iter().cloned().fold(f64::INFINITY, f64::min))
    }

    pub fn validate(&self) -> Result<()> {
        let herm = hermiticity_defect(&self.entries);
        if herm > HERMITIAN_TOL {
            return Err(Error::Invariant(format!("density matrix not Hermitian ({herm:.2e})")));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::Invariant(format!("density matrix trace {tr}")));
        }
        let min = self.min_eigenvalue()?;
        if min < -POSITIVITY_TOL {
            return Err(Error::Invariant(format!("density matrix eigenvalue {min:.2e}")));
        }
        Ok(())
    }
}

/// An ordered set of matrix units `|a⟩⟨b|` spanning (part of) operator space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorBasis {
    dim: usize,
    pairs: Vec<(usize, usize)>,
    lookup: Vec<u32>,
}

const ABSENT: u32 = u32::MAX;

impl OperatorBasis {
    /// All `dim²` matrix units in column-stacked order.
    pub fn full(dim: usize) -> Self {
        Self::from_predicate(dim, |_, _| true)
    }

    /// Units `|a⟩⟨b|` whose up-spin counts differ by `q` (`n_up(a) − n_up(b) = q`).
    ///
    /// Generators that commute with the total `σᶻ` superrotation leave every
    /// such sector invariant.
    pub fn magnetization_sector(space: HilbertSpec, q: i32) -> Self {
        Self::from_predicate(space.dim(), |a, b| {
            a.count_ones() as i32 - b.count_ones() as i32 == q
        })
    }

    pub fn from_predicate(dim: usize, keep: impl Fn(usize, usize) -> bool) -> Self {
        let mut pairs = Vec::new();
        let mut lookup = vec![ABSENT; dim * dim];
        for b in 0..dim {
            for a in 0..dim {
                if keep(a, b) {
                    lookup[a + b * dim] = pairs.len() as u32;
                    pairs.push((a, b));
                }
            }
        }
        Self { dim, pairs, lookup }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.pairs.len() == self.dim * self.dim
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn index_of(&self, a: usize, b: usize) -> Option<usize> {
        match self.lookup[a + b * self.dim] {
            ABSENT => None,
            k => Some(k as usize),
        }
    }

    /// Coordinates of `op` in this basis. Weight outside the basis is dropped;
    /// [`Self::outside_weight`] reports it.
    pub fn vectorize(&self, op: &CMatrix) -> CVector {
        self.pairs.iter().map(|&(a, b)| op[[a, b]]).collect()
    }

    pub fn devectorize(&self, v: &CVector) -> CMatrix {
        let mut out = CMatrix::zeros((self.dim, self.dim));
        for (&(a, b), z) in self.pairs.iter().zip(v.iter()) {
            out[[a, b]] = *z;
        }
        out
    }

    pub fn outside_weight(&self, op: &CMatrix) -> f64 {
        op.indexed_iter()
            .filter(|((a, b), _)| self.lookup[a + b * self.dim] == ABSENT)
            .map(|(_, z)| z.norm())
            .fold(0.0, f64::max)
    }

    /// Weights `w` with `Tr(op ρ) = Σ_k w_k v_k` for `v` the coordinates of `ρ`.
    pub fn expectation_functional(&self, op: &CMatrix) -> CVector {
        self.pairs.iter().map(|&(a, b)| op[[b, a]]).collect()
    }

    /// Coordinates of the identity operator (for trace functionals).
    pub fn trace_functional(&self) -> Array1<f64> {
        self.pairs.iter().map(|&(a, b)| if a == b { 1.0 } else { 0.0 }).collect()
    }
}

/// Linear map on operator space, stored as a dense matrix over an [`OperatorBasis`].
#[derive(Debug, Clone)]
pub struct Superoperator {
    space: HilbertSpec,
    basis: Arc<OperatorBasis>,
    matrix: CMatrix,
}

impl Superoperator {
    pub fn from_matrix(space: HilbertSpec, basis: Arc<OperatorBasis>, matrix: CMatrix) -> Result<Self> {
        if basis.dim() != space.dim() {
            return Err(Error::Dimension("basis and register disagree".into()));
        }
        if matrix.dim() != (basis.len(), basis.len()) {
            return Err(Error::Dimension(format!(
                "superoperator matrix {:?} for basis of size {}",
                matrix.dim(),
                basis.len()
            )));
        }
        Ok(Self { space, basis, matrix })
    }

    pub fn zero(space: HilbertSpec, basis: Arc<OperatorBasis>) -> Self {
        let n = basis.len();
        Self { space, basis, matrix: CMatrix::zeros((n, n)) }
    }

    pub fn identity(space: HilbertSpec, basis: Arc<OperatorBasis>) -> Self {
        let n = basis.len();
        Self { space, basis, matrix: linalg::identity(n) }
    }

    pub fn space(&self) -> HilbertSpec {
        self.space
    }

    pub fn basis(&self) -> &Arc<OperatorBasis> {
        &self.basis
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn size(&self) -> usize {
        self.basis.len()
    }

    fn check_compatible(&self, other: &Superoperator) -> Result<()> {
        if self.space != other.space || self.basis != other.basis {
            return Err(Error::Dimension(format!(
                "superoperators on {} and {} basis elements (dims {} / {})",
                self.basis.len(),
                other.basis.len(),
                self.space.dim(),
                other.space.dim()
            )));
        }
        Ok(())
    }

    pub fn apply_vec(&self, v: &CVector) -> CVector {
        self.matrix.dot(v)
    }

    /// `G[op]`; weight of `op` outside the basis is ignored.
    pub fn apply(&self, op: &CMatrix) -> Result<CMatrix> {
        if op.dim() != (self.space.dim(), self.space.dim()) {
            return Err(Error::Dimension(format!("operator {:?}", op.dim())));
        }
        Ok(self.basis.devectorize(&self.apply_vec(&self.basis.vectorize(op))))
    }

    /// `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &Superoperator) -> Result<Superoperator> {
        self.check_compatible(other)?;
        Ok(self.with_matrix(self.matrix.dot(&other.matrix)))
    }

    pub fn plus(&self, other: &Superoperator) -> Result<Superoperator> {
        self.check_compatible(other)?;
        Ok(self.with_matrix(&self.matrix + &other.matrix))
    }

    pub fn minus(&self, other: &Superoperator) -> Result<Superoperator> {
        self.check_compatible(other)?;
        Ok(self.with_matrix(&self.matrix - &other.matrix))
    }

    /// `self + c·other`.
    pub fn plus_scaled(&self, c: f64, other: &Superoperator) -> Result<Superoperator> {
        self.check_compatible(other)?;
        let mut m = self.matrix.clone();
        m.scaled_add(C64::new(c, 0.0), &other.matrix);
        Ok(self.with_matrix(m))
    }

    pub fn scaled(&self, c: f64) -> Superoperator {
        self.with_matrix(self.matrix.mapv(|z| z * c))
    }

    pub fn with_matrix(&self, matrix: CMatrix) -> Superoperator {
        Superoperator { space: self.space, basis: Arc::clone(&self.basis), matrix }
    }

    /// Spectral norm of the matrix representation.
    pub fn norm(&self) -> Result<f64> {
        linalg::spectral_norm(&self.matrix)
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(&self.matrix)
    }

    /// `exp(d·G)`.
    pub fn exp(&self, duration: f64) -> Result<CMatrix> {
        linalg::expm(&self.matrix.mapv(|z| z * duration))
    }

    /// The superrotation `ρ ↦ U ρ U†` on this basis.
    pub fn unitary_action(space: HilbertSpec, basis: Arc<OperatorBasis>, unitary: &CMatrix) -> Result<Self> {
        if unitary.dim() != (space.dim(), space.dim()) {
            return Err(Error::Dimension(format!("unitary {:?}", unitary.dim())));
        }
        let columns = SparseColumns::new(unitary);
        let n = basis.len();
        let mut m = CMatrix::zeros((n, n));
        let mut leak = 0.0f64;
        for (col, &(a, b)) in basis.pairs().iter().enumerate() {
            for &(i, ui) in &columns.entries[a] {
                for &(j, uj) in &columns.entries[b] {
                    let val = ui * uj.conj();
                    match basis.index_of(i, j) {
                        Some(row) => m[[row, col]] += val,
                        None => leak = leak.max(val.norm()),
                    }
                }
            }
        }
        if leak > LEAK_TOL {
            return Err(Error::Invariant(format!("unitary action leaves the operator basis ({leak:.2e})")));
        }
        Self::from_matrix(space, basis, m)
    }

    /// `ρ ↦ U G[U† ρ U] U†`.
    pub fn conjugated_by(&self, unitary: &CMatrix) -> Result<Superoperator> {
        let forward = Self::unitary_action(self.space, Arc::clone(&self.basis), unitary)?;
        let backward = Self::unitary_action(self.space, Arc::clone(&self.basis), &dagger(unitary))?;
        Ok(self.with_matrix(forward.matrix.dot(&self.matrix).dot(&backward.matrix)))
    }
}

/// Hamiltonian plus jump operators; rates are folded into the jump normalization.
#[derive(Debug, Clone)]
pub struct LindbladChannel {
    space: HilbertSpec,
    hamiltonian: CMatrix,
    jumps: Vec<CMatrix>,
}

impl LindbladChannel {
    pub fn new(space: HilbertSpec, hamiltonian: CMatrix, jumps: Vec<CMatrix>) -> Result<Self> {
        let d = space.dim();
        if hamiltonian.dim() != (d, d) {
            return Err(Error::Dimension(format!("hamiltonian {:?} for dim {d}", hamiltonian.dim())));
        }
        for (k, l) in jumps.iter().enumerate() {
            if l.dim() != (d, d) {
                return Err(Error::Dimension(format!("jump {k} has shape {:?} for dim {d}", l.dim())));
            }
        }
        let defect = hermiticity_defect(&hamiltonian);
        if defect > HERMITIAN_TOL {
            return Err(Error::InvalidInput(format!("hamiltonian not Hermitian ({defect:.2e})")));
        }
        Ok(Self { space, hamiltonian, jumps })
    }

    pub fn space(&self) -> HilbertSpec {
        self.space
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[CMatrix] {
        &self.jumps
    }

    /// `𝓛[ρ]` evaluated directly on a matrix.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let h = &self.hamiltonian;
        let mut out = (h.dot(rho) - rho.dot(h)).mapv(|z| -I * z);
        for l in &self.jumps {
            let ld = dagger(l);
            let ldl = ld.dot(l);
            out = out + l.dot(rho).dot(&ld) - (ldl.dot(rho) + rho.dot(&ldl)).mapv(|z| z * 0.5);
        }
        out
    }
}

struct SparseColumns {
    // entries[col] = [(row, value)]
    entries: Vec<Vec<(usize, C64)>>,
}

impl SparseColumns {
    fn new(m: &CMatrix) -> Self {
        let entries = (0..m.ncols())
            .map(|c| {
                m.column(c)
                    .iter()
                    .enumerate()
                    .filter(|(_, z)| **z != ZERO)
                    .map(|(r, z)| (r, *z))
                    .collect()
            })
            .collect();
        Self { entries }
    }

    fn rows(m: &CMatrix) -> Self {
        Self::new(&m.t().to_owned())
    }
}

/// Generator `𝓛[ρ] = −i[H,ρ] + Σ_j (L_j ρ L_j† − ½{L_j†L_j, ρ})` on the full operator space.
pub fn lindblad_generator(channel: &LindbladChannel) -> Result<Superoperator> {
    let basis = Arc::new(OperatorBasis::full(channel.space.dim()));
    lindblad_generator_in(channel, basis)
}

/// Same generator restricted to an invariant operator basis. Fails if the
/// generator maps basis elements outside the basis.
pub fn lindblad_generator_in(channel: &LindbladChannel, basis: Arc<OperatorBasis>) -> Result<Superoperator> {
    let d = channel.space.dim();
    if basis.dim() != d {
        return Err(Error::Dimension(format!("basis for dim {} used with dim {d}", basis.dim())));
    }
    let mut k = CMatrix::zeros((d, d));
    for l in &channel.jumps {
        k = k + dagger(l).dot(l);
    }
    // A = −iH − ½K acts from the left, A† from the right: 𝓛[ρ] = Aρ + ρA† + Σ LρL†
    let a = channel.hamiltonian.mapv(|z| -I * z) - k.mapv(|z| z * 0.5);
    let a_cols = SparseColumns::new(&a);
    let a_dag_rows = SparseColumns::rows(&dagger(&a));
    let jump_cols: Vec<SparseColumns> = channel.jumps.iter().map(SparseColumns::new).collect();

    let n = basis.len();
    let mut m = CMatrix::zeros((n, n));
    let mut leak = 0.0f64;
    let mut put = |m: &mut CMatrix, i: usize, j: usize, col: usize, val: C64| match basis.index_of(i, j) {
        Some(row) => m[[row, col]] += val,
        None => leak = leak.max(val.norm()),
    };
    for (col, &(a_idx, b_idx)) in basis.pairs().iter().enumerate() {
        // (A E_ab)[i, b] = A[i, a]
        for &(i, v) in &a_cols.entries[a_idx] {
            put(&mut m, i, b_idx, col, v);
        }
        // (E_ab A†)[a, j] = A†[b, j]
        for &(j, v) in &a_dag_rows.entries[b_idx] {
            put(&mut m, a_idx, j, col, v);
        }
        // (L E_ab L†)[i, j] = L[i, a] conj(L[j, b])
        for cols in &jump_cols {
            for &(i, li) in &cols.entries[a_idx] {
                for &(j, lj) in &cols.entries[b_idx] {
                    put(&mut m, i, j, col, li * lj.conj());
                }
            }
        }
    }
    if leak > LEAK_TOL {
        return Err(Error::Invariant(format!(
            "generator maps the operator basis outside itself (leak {leak:.2e})"
        )));
    }
    Superoperator::from_matrix(channel.space, basis, m)
}

/// `[A, B] = A∘B − B∘A`.
pub fn poisson_bracket(a: &Superoperator, b: &Superoperator) -> Result<Superoperator> {
    a.check_compatible(b)?;
    let ab = a.matrix.dot(&b.matrix);
    let ba = b.matrix.dot(&a.matrix);
    Ok(a.with_matrix(ab - ba))
}

/// Exponentials of piecewise-constant generators, cached per (generator, duration).
#[derive(Default)]
pub struct ExpCache {
    entries: HashMap<(usize, u64), CMatrix>,
}

impl ExpCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// `exp(d·G)` for the generator identified by `key`.
    pub fn get(&mut self, key: usize, generator: &Superoperator, duration: f64) -> Result<&CMatrix> {
        let slot = (key, duration.to_bits());
        if !self.entries.contains_key(&slot) {
            let e = generator.exp(duration)?;
            self.entries.insert(slot, e);
        }
        Ok(&self.entries[&slot])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn generator_keys(segments: &[(&Superoperator, f64)]) -> Vec<usize> {
    let mut distinct: Vec<*const Superoperator> = Vec::new();
    segments
        .iter()
        .map(|(g, _)| {
            let p = *g as *const Superoperator;
            match distinct.iter().position(|q| *q == p) {
                Some(k) => k,
                None => {
                    distinct.push(p);
                    distinct.len() - 1
                }
            }
        })
        .collect()
}

fn check_segments(segments: &[(&Superoperator, f64)]) -> Result<()> {
    let Some((first, _)) = segments.first() else {
        return Ok(());
    };
    for (k, (g, d)) in segments.iter().enumerate() {
        first.check_compatible(g)?;
        if !(*d >= 0.0) || !d.is_finite() {
            return Err(Error::InvalidInput(format!("segment {k} has duration {d}")));
        }
    }
    Ok(())
}

/// Product `Π_k exp(d_k G_k)` in temporal order (first segment acts first).
pub fn piecewise_propagator(segments: &[(&Superoperator, f64)]) -> Result<CMatrix> {
    check_segments(segments)?;
    let Some((first, _)) = segments.first() else {
        return Err(Error::InvalidInput("empty segment list has no basis".into()));
    };
    let keys = generator_keys(segments);
    let mut cache = ExpCache::new();
    let mut u = linalg::identity(first.size());
    for (k, ((g, d), key)) in segments.iter().zip(keys).enumerate() {
        let e = cache.get(key, g, *d)?;
        if e.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFiniteSegment { segment: k });
        }
        u = e.dot(&u);
    }
    Ok(u)
}

/// Result of propagating a state.
#[derive(Debug, Clone)]
pub struct Propagated {
    pub state: DensityMatrix,
    pub trace_drift: f64,
    pub renormalized: bool,
}

fn finish_state(space: HilbertSpec, mut entries: CMatrix) -> Result<Propagated> {
    if entries.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("propagated state".into()));
    }
    let tr = linalg::trace(&entries).re;
    let drift = (tr - 1.0).abs();
    let renormalized = drift > TRACE_TOL;
    if renormalized {
        entries.mapv_inplace(|z| z / tr);
    }
    Ok(Propagated {
        state: DensityMatrix::new_unchecked(space, entries)?,
        trace_drift: drift,
        renormalized,
    })
}

/// Applies `exp(d_k G_k)` segment by segment to `rho0`.
pub fn propagate_piecewise(rho0: &DensityMatrix, segments: &[(&Superoperator, f64)]) -> Result<Propagated> {
    check_segments(segments)?;
    let Some((first, _)) = segments.first() else {
        return Ok(Propagated { state: rho0.clone(), trace_drift: 0.0, renormalized: false });
    };
    if first.space != rho0.space {
        return Err(Error::Dimension("state and generator registers differ".into()));
    }
    let basis = Arc::clone(&first.basis);
    let keys = generator_keys(segments);
    let mut cache = ExpCache::new();
    let mut v = basis.vectorize(&rho0.entries);
    for (k, ((g, d), key)) in segments.iter().zip(keys).enumerate() {
        let e = cache.get(key, g, *d)?;
        v = e.dot(&v);
        if v.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFiniteSegment { segment: k });
        }
    }
    finish_state(rho0.space, basis.devectorize(&v))
}

/// Outcome of a fixed-point iteration.
#[derive(Debug, Clone)]
pub struct SteadyState {
    pub state: DensityMatrix,
    pub units: u64,
    pub last_distance: f64,
    pub trace_drift: f64,
}

/// Trace distance between two vectorized states, skipping the eigen-solve
/// when the Frobenius lower bound already exceeds `tol`.
fn screened_distance(basis: &OperatorBasis, a: &CVector, b: &CVector, tol: f64) -> Result<f64> {
    let diff: CVector = a - b;
    let fro = diff.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if 0.5 * fro >= tol {
        return Ok(0.5 * fro);
    }
    linalg::trace_distance(&basis.devectorize(a), &basis.devectorize(b))
}

/// Iterates the one-unit propagator from `rho0` until two successive unit
/// outputs are closer than `tol` in trace distance.
///
/// Between checks the iteration jumps ahead by a stride that doubles each
/// time (using squared propagators), so slow transients cost O(log units).
pub fn steady_state_by_evolution(
    rho0: &DensityMatrix,
    unit: &[(&Superoperator, f64)],
    tol: f64,
    max_units: u64,
) -> Result<SteadyState> {
    let t_unit: f64 = unit.iter().map(|(_, d)| d).sum();
    if !(t_unit > 0.0) {
        return Err(Error::InvalidInput("unit durations must sum to a positive time".into()));
    }
    let u = piecewise_propagator(unit)?;
    let basis = Arc::clone(&unit[0].0.basis);
    iterate_to_fixed_point(&basis, rho0, &u, tol, max_units)
}

pub(crate) fn iterate_to_fixed_point(
    basis: &OperatorBasis,
    rho0: &DensityMatrix,
    u: &CMatrix,
    tol: f64,
    max_units: u64,
) -> Result<SteadyState> {
    let mut v = basis.vectorize(&rho0.entries);
    let mut units = 0u64;
    let mut stride = 1u64;
    let mut stride_op = u.clone();
    let mut last = f64::INFINITY;
    while units < max_units {
        let next = u.dot(&v);
        units += 1;
        if next.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFiniteSegment { segment: 0 });
        }
        last = screened_distance(basis, &next, &v, tol)?;
        if last < tol {
            let out = finish_state(rho0.space, basis.devectorize(&next))?;
            return Ok(SteadyState {
                state: out.state,
                units,
                last_distance: last,
                trace_drift: out.trace_drift,
            });
        }
        v = next;
        if units + stride < max_units {
            v = stride_op.dot(&v);
            units += stride;
            if units >= 64 {
                stride_op = stride_op.dot(&stride_op);
                stride *= 2;
            }
        }
    }
    Err(Error::NotConverged { units, last_distance: last })
}

/// Eigen-decomposition `G = V diag(λ) V⁻¹` used to apply `exp(dG)` for many
/// distinct durations `d` at the cost of a diagonal scaling.
#[derive(Debug, Clone)]
pub struct SpectralPropagator {
    eigenvalues: CVector,
    vectors: CMatrix,
    inverse: CMatrix,
}

impl SpectralPropagator {
    /// Fails if the generator is numerically defective (reconstruction error
    /// above `1e-8` relative to `‖G‖_max`).
    pub fn new(generator: &Superoperator) -> Result<Self> {
        let (eigenvalues, vectors) = linalg::eig(&generator.matrix)?;
        let inverse = linalg::inverse(&vectors)?;
        let scaled = &vectors * &eigenvalues.view().insert_axis(ndarray::Axis(0));
        let residual = linalg::max_abs(&(scaled.dot(&inverse) - &generator.matrix));
        let scale = generator.max_abs().max(1.0);
        if !(residual <= 1e-8 * scale) {
            return Err(Error::Invariant(format!(
                "generator is not safely diagonalizable (reconstruction error {residual:.2e})"
            )));
        }
        Ok(Self { eigenvalues, vectors, inverse })
    }

    pub fn eigenvalues(&self) -> &CVector {
        &self.eigenvalues
    }

    pub fn vectors(&self) -> &CMatrix {
        &self.vectors
    }

    pub fn inverse(&self) -> &CMatrix {
        &self.inverse
    }

    /// Coordinates in the eigenbasis.
    pub fn to_eigenbasis(&self, v: &CVector) -> CVector {
        self.inverse.dot(v)
    }

    pub fn from_eigenbasis(&self, y: &CVector) -> CVector {
        self.vectors.dot(y)
    }

    /// `y ← exp(dλ) ∘ y` in eigen-coordinates.
    pub fn evolve_eigen(&self, y: &mut CVector, duration: f64) {
        y.zip_mut_with(&self.eigenvalues, |z, l| *z *= (l * duration).exp());
    }

    /// `exp(dG) v`.
    pub fn apply(&self, v: &CVector, duration: f64) -> CVector {
        let mut y = self.to_eigenbasis(v);
        self.evolve_eigen(&mut y, duration);
        self.from_eigenbasis(&y)
    }
}

/// `∫‖𝓛[t]‖dt` for a piecewise-constant generator (spectral norm).
pub fn magnus_convergence_bound(segments: &[(&Superoperator, f64)]) -> Result<f64> {
    check_segments(segments)?;
    let keys = generator_keys(segments);
    let mut norms: HashMap<usize, f64> = HashMap::new();
    let mut total = 0.0;
    for ((g, d), key) in segments.iter().zip(keys) {
        let n = match norms.get(&key) {
            Some(n) => *n,
            None => {
                let n = g.norm()?;
                norms.insert(key, n);
                n
            }
        };
        total += n * d;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{collective, sigma_minus, sigma_x, sigma_z, site_operator};
    use ndarray::array;

    fn one_qubit() -> HilbertSpec {
        HilbertSpec::new(1).unwrap()
    }

    fn damping(gamma: f64) -> LindbladChannel {
        let l = sigma_minus().mapv(|z| z * gamma.sqrt());
        LindbladChannel::new(one_qubit(), CMatrix::zeros((2, 2)), vec![l]).unwrap()
    }

    #[test]
    fn amplitude_damping_on_excited_state() {
        let gamma = 0.3;
        let g = lindblad_generator(&damping(gamma)).unwrap();
        let rho = DensityMatrix::basis_state(one_qubit(), 1).unwrap();
        let out = g.apply(rho.entries()).unwrap();
        let expected = array![[C64::new(gamma, 0.0), ZERO], [ZERO, C64::new(-gamma, 0.0)]];
        assert!(linalg::max_abs(&(out - expected)) < 1e-15);
    }

    #[test]
    fn generator_matrix_matches_direct_application() {
        let space = HilbertSpec::new(2).unwrap();
        let h = site_operator(space, 0, &sigma_z()).mapv(|z| z * 0.7) + site_operator(space, 1, &sigma_x());
        let l1 = collective(space, &sigma_minus(), |_| 1.0);
        let l2 = site_operator(space, 1, &sigma_z()).mapv(|z| z * 0.4);
        let ch = LindbladChannel::new(space, h, vec![l1, l2]).unwrap();
        let g = lindblad_generator(&ch).unwrap();
        let rho = CMatrix::from_shape_fn((4, 4), |(i, j)| C64::new((i + 2 * j) as f64, (i as f64) - (j as f64)));
        let direct = ch.apply(&rho);
        let via = g.apply(&rho).unwrap();
        assert!(linalg::max_abs(&(direct - via)) < 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let space = HilbertSpec::new(2).unwrap();
        let bad = LindbladChannel::new(space, CMatrix::zeros((2, 2)), vec![]);
        assert!(matches!(bad, Err(Error::Dimension(_))));
        let bad_jump = LindbladChannel::new(space, CMatrix::zeros((4, 4)), vec![sigma_minus()]);
        assert!(matches!(bad_jump, Err(Error::Dimension(_))));
        let a = lindblad_generator(&damping(1.0)).unwrap();
        let b = Superoperator::zero(space, Arc::new(OperatorBasis::full(4)));
        assert!(poisson_bracket(&a, &b).is_err());
    }

    #[test]
    fn non_hermitian_hamiltonian_rejected() {
        let h = sigma_minus();
        assert!(LindbladChannel::new(one_qubit(), h, vec![]).is_err());
    }

    #[test]
    fn empty_segments_leave_state_unchanged() {
        let rho = DensityMatrix::basis_state(one_qubit(), 1).unwrap();
        let out = propagate_piecewise(&rho, &[]).unwrap();
        assert_eq!(out.state.entries(), rho.entries());
        assert!(!out.renormalized);
    }

    #[test]
    fn long_damping_reaches_ground_state() {
        let g = lindblad_generator(&damping(1.0)).unwrap();
        let rho = DensityMatrix::basis_state(one_qubit(), 1).unwrap();
        let out = propagate_piecewise(&rho, &[(&g, 40.0)]).unwrap();
        let ground = DensityMatrix::basis_state(one_qubit(), 0).unwrap();
        assert!(out.state.trace_distance(&ground).unwrap() < 1e-6);
    }

    #[test]
    fn unitary_segments_invert() {
        let h = sigma_x().mapv(|z| z * 0.9) + sigma_z().mapv(|z| z * 0.3);
        let ch = LindbladChannel::new(one_qubit(), h, vec![]).unwrap();
        let g = lindblad_generator(&ch).unwrap();
        let neg = g.scaled(-1.0);
        let rho = DensityMatrix::pure(one_qubit(), &array![ONE, C64::new(0.3, 0.2)]).unwrap();
        let out = propagate_piecewise(&rho, &[(&g, 1.3), (&neg, 1.3)]).unwrap();
        assert!(linalg::max_abs(&(out.state.entries() - rho.entries())) < 1e-8);
    }

    #[test]
    fn negative_duration_rejected() {
        let g = lindblad_generator(&damping(1.0)).unwrap();
        let rho = DensityMatrix::basis_state(one_qubit(), 1).unwrap();
        assert!(propagate_piecewise(&rho, &[(&g, -1.0)]).is_err());
    }

    #[test]
    fn overflowing_generator_reported_with_segment() {
        let g = lindblad_generator(&damping(1.0)).unwrap();
        let blow = g.scaled(-1.0);
        let rho = DensityMatrix::basis_state(one_qubit(), 1).unwrap();
        let err = propagate_piecewise(&rho, &[(&g, 0.1), (&blow, 1e6)]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteSegment { segment: 1 } | Error::NonFinite(_)), "{err}");
    }

    #[test]
    fn damping_fixed_point_from_any_state() {
        let g = lindblad_generator(&damping(1.0)).unwrap();
        let rho = DensityMatrix::pure(one_qubit(), &array![ONE, ONE]).unwrap();
        let ss = steady_state_by_evolution(&rho, &[(&g, 0.1)], 1e-10, 100_000).unwrap();
        let ground = DensityMatrix::basis_state(one_qubit(), 0).unwrap();
        assert!(ss.state.trace_distance(&ground).unwrap() < 1e-8);
    }

    #[test]
    fn dephasing_leaves_diagonal_states_fixed() {
        let l = sigma_z().mapv(|z| z * 0.5);
        let ch = LindbladChannel::new(one_qubit(), CMatrix::zeros((2, 2)), vec![l]).unwrap();
        let g = lindblad_generator(&ch).unwrap();
        let rho = DensityMatrix::new(one_qubit(), array![[C64::new(0.3, 0.0), ZERO], [ZERO, C64::new(0.7, 0.0)]]).unwrap();
        let ss = steady_state_by_evolution(&rho, &[(&g, 0.5)], 1e-7, 10).unwrap();
        assert_eq!(ss.units, 1);
        assert!(ss.state.trace_distance(&rho).unwrap() < 1e-12);
    }

    #[test]
    fn non_convergence_reports_distance() {
        // pure rotation never settles
        let ch = LindbladChannel::new(one_qubit(), sigma_x(), vec![]).unwrap();
        let g = lindblad_generator(&ch).unwrap();
        let rho = DensityMatrix::basis_state(one_qubit(), 1).unwrap();
        match steady_state_by_evolution(&rho, &[(&g, 0.3)], 1e-9, 50) {
            Err(Error::NotConverged { units, last_distance }) => {
                assert!(units <= 50);
                assert!(last_distance > 1e-9);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn spectral_propagator_matches_expm() {
        let space = HilbertSpec::new(2).unwrap();
        let l1 = collective(space, &sigma_minus(), |_| 1.0);
        let l2 = collective(space, &crate::spin::sigma_plus(), |n| if n == 0 { -0.3 } else { 0.3 });
        let h = collective(space, &sigma_z(), |n| 0.7 - n as f64);
        let ch = LindbladChannel::new(space, h, vec![l1, l2]).unwrap();
        let g = lindblad_generator(&ch).unwrap();
        let sp = SpectralPropagator::new(&g).unwrap();
        let rho = DensityMatrix::basis_state(space, 0).unwrap();
        let v = g.basis().vectorize(rho.entries());
        for d in [0.01, 0.7, 3.0] {
            let a = sp.apply(&v, d);
            let b = g.exp(d).unwrap().dot(&v);
            let err = (&a - &b).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(err < 1e-10, "{d} {err}");
        }
    }

    #[test]
    fn expectation_functional_matches_trace() {
        let space = HilbertSpec::new(2).unwrap();
        let basis = OperatorBasis::full(4);
        let op = site_operator(space, 0, &sigma_x()) + site_operator(space, 1, &sigma_z());
        let rho = DensityMatrix::pure(space, &array![ONE, C64::new(0.5, 0.1), ZERO, C64::new(0.0, -0.4)]).unwrap();
        let w = basis.expectation_functional(&op);
        let via: C64 = w.iter().zip(basis.vectorize(rho.entries()).iter()).map(|(a, b)| a * b).sum();
        assert!((via.re - rho.expectation(&op)).abs() < 1e-14);
    }

    #[test]
    fn convergence_bound_of_constant_segment() {
        let g = lindblad_generator(&damping(2.0)).unwrap();
        let n = g.norm().unwrap();
        let b = magnus_convergence_bound(&[(&g, 0.25)]).unwrap();
        assert!((b - 0.25 * n).abs() < 1e-12);
        let z = Superoperator::zero(one_qubit(), Arc::clone(g.basis()));
        assert_eq!(magnus_convergence_bound(&[(&z, 3.0)]).unwrap(), 0.0);
    }

    #[test]
    fn sector_restriction_agrees_with_full_generator() {
        let space = HilbertSpec::new(3).unwrap();
        let l1 = collective(space, &sigma_minus(), |_| 1.0);
        let l2 = collective(space, &crate::spin::sigma_plus(), |n| if n % 2 == 0 { -0.5 } else { 0.5 });
        let h = collective(space, &sigma_z(), |n| n as f64 - 1.0);
        let ch = LindbladChannel::new(space, h, vec![l1, l2]).unwrap();
        let full = lindblad_generator(&ch).unwrap();
        let sector = Arc::new(OperatorBasis::magnetization_sector(space, 0));
        let reduced = lindblad_generator_in(&ch, Arc::clone(&sector)).unwrap();
        assert_eq!(sector.len(), 20);
        let rho = DensityMatrix::basis_state(space, 0b101).unwrap();
        let a = full.apply(rho.entries()).unwrap();
        let b = reduced.apply(rho.entries()).unwrap();
        assert!(linalg::max_abs(&(a - b)) < 1e-13);
    }

    #[test]
    fn sector_restriction_rejects_non_invariant_generator() {
        let space = HilbertSpec::new(2).unwrap();
        let h = site_operator(space, 0, &sigma_x());
        let ch = LindbladChannel::new(space, h, vec![]).unwrap();
        let sector = Arc::new(OperatorBasis::magnetization_sector(space, 0));
        assert!(lindblad_generator_in(&ch, sector).is_err());
    }

    #[test]
    fn conjugation_by_flip_matches_conjugated_channel() {
        let space = HilbertSpec::new(2).unwrap();
        let l = collective(space, &sigma_minus(), |_| 1.0);
        let ch = LindbladChannel::new(space, CMatrix::zeros((4, 4)), vec![l.clone()]).unwrap();
        let flip = crate::spin::global_flip(space);
        let flipped = LindbladChannel::new(space, CMatrix::zeros((4, 4)), vec![crate::spin::conjugate(&flip, &l)]).unwrap();
        let g = lindblad_generator(&ch).unwrap();
        let lhs = g.conjugated_by(&flip).unwrap();
        let rhs = lindblad_generator(&flipped).unwrap();
        assert!(linalg::max_abs(&(lhs.matrix() - rhs.matrix())) < 1e-14);
    }
}
