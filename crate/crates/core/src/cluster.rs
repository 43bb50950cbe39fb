//! Linear-cluster-state preparation by stabilizer pumping, at the qubit level.
//!
//! Each stabilizer `S_k` gets a jump `L_k = √γ A_k (I − S_k)/2`, with `A_k` a
//! single-site Pauli anticommuting with `S_k`. The cluster state is dark for
//! every jump.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::liouville::{lindblad_generator_in, DensityMatrix, LindbladChannel, OperatorBasis, Superoperator};
use crate::protocol::{evolve, Diagnostics, Protection, RunOptions, ToggledSystem};
use crate::pulses::random_schedule;
use crate::singlet::{dephasing_generator, InhomogeneousNoiseSpec, IntervalParity};
use crate::spin::{conjugate, global_flip, site_operator, HilbertSpec, Pauli, PauliString};

#[derive(Debug, Clone, PartialEq)]
pub struct StabilizerSpec {
    n_qubits: usize,
    stabilizers: Vec<PauliString>,
}

impl StabilizerSpec {
    pub fn new(n_qubits: usize, stabilizers: Vec<PauliString>) -> Result<Self> {
        HilbertSpec::new(n_qubits)?;
        for (k, s) in stabilizers.iter().enumerate() {
            if s.len() != n_qubits {
                return Err(Error::Dimension(format!("stabilizer {k} ({s}) acts on {} sites", s.len())));
            }
        }
        for (i, a) in stabilizers.iter().enumerate() {
            for (j, b) in stabilizers.iter().enumerate().skip(i + 1) {
                if !a.commutes_with(b) {
                    return Err(Error::InvalidInput(format!("stabilizers {i} ({a}) and {j} ({b}) anticommute")));
                }
            }
        }
        Ok(Self { n_qubits, stabilizers })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn stabilizers(&self) -> &[PauliString] {
        &self.stabilizers
    }

    pub fn space(&self) -> HilbertSpec {
        HilbertSpec::new(self.n_qubits).expect("validated at construction")
    }
}

/// `X₁Z₂, Z_{k−1}X_kZ_{k+1}, …, Z_{n−1}X_n`.
pub fn linear_cluster_stabilizers(n: usize) -> Result<StabilizerSpec> {
    if n < 2 {
        return Err(Error::InvalidInput("a linear cluster needs at least two qubits".into()));
    }
    let gens = (0..n)
        .map(|k| {
            let mut s = PauliString::identity(n).with(k, Pauli::X);
            if k > 0 {
                s = s.with(k - 1, Pauli::Z);
            }
            if k + 1 < n {
                s = s.with(k + 1, Pauli::Z);
            }
            s
        })
        .collect();
    StabilizerSpec::new(n, gens)
}

/// Projector onto the joint +1 eigenspace.
pub fn code_projector(spec: &StabilizerSpec) -> CMatrix {
    let d = spec.space().dim();
    spec.stabilizers.iter().fold(linalg::identity(d), |acc, s| {
        let half = (linalg::identity(d) + s.matrix()).mapv(|z| z * 0.5);
        acc.dot(&half)
    })
}

/// The unique joint +1 eigenstate of a complete stabilizer set.
pub fn stabilizer_state(spec: &StabilizerSpec) -> Result<DensityMatrix> {
    let p = code_projector(spec);
    let rank = linalg::trace(&p).re;
    if (rank - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("stabilizer set fixes a {rank:.0}-dimensional space")));
    }
    DensityMatrix::new(spec.space(), p)
}

pub fn cluster_state(n: usize) -> Result<DensityMatrix> {
    stabilizer_state(&linear_cluster_stabilizers(n)?)
}

/// Pump rate and the single-site flip `A_k` used for each stabilizer.
#[derive(Debug, Clone, PartialEq)]
pub struct PumpSpec {
    pub gamma: f64,
    pub flips: Vec<(usize, Pauli)>,
}

impl PumpSpec {
    /// `σᶻ` on the lowest site where the stabilizer carries `σˣ` (or `σʸ`).
    pub fn standard(spec: &StabilizerSpec, gamma: f64) -> Result<Self> {
        let flips = spec
            .stabilizers
            .iter()
            .map(|s| {
                s.ops()
                    .iter()
                    .position(|p| matches!(p, Pauli::X | Pauli::Y))
                    .map(|site| (site, Pauli::Z))
                    .ok_or_else(|| Error::InvalidInput(format!("stabilizer {s} has no X-type site")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { gamma, flips })
    }

    pub fn validate(&self, spec: &StabilizerSpec) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidInput(format!("pump rate {} must be positive", self.gamma)));
        }
        if self.flips.len() != spec.stabilizers.len() {
            return Err(Error::Dimension(format!(
                "{} flip operators for {} stabilizers",
                self.flips.len(),
                spec.stabilizers.len()
            )));
        }
        for (k, (&(site, op), s)) in self.flips.iter().zip(&spec.stabilizers).enumerate() {
            if site >= spec.n_qubits {
                return Err(Error::InvalidInput(format!("flip site {site} out of range")));
            }
            let single = PauliString::identity(spec.n_qubits).with(site, op);
            if single.commutes_with(s) {
                return Err(Error::InvalidInput(format!("flip {op:?}@{site} does not anticommute with stabilizer {k} ({s})")));
            }
        }
        Ok(())
    }
}

fn pump_jump(space: HilbertSpec, gamma: f64, stabilizer: &PauliString, flip: (usize, Pauli)) -> CMatrix {
    let d = space.dim();
    let project = (linalg::identity(d) - stabilizer.matrix()).mapv(|z| z * 0.5);
    site_operator(space, flip.0, &flip.1.matrix()).dot(&project).mapv(|z| z * gamma.sqrt())
}

/// Simultaneous pumping of every stabilizer; odd intervals use the
/// `σₓ^{⊗n}`-conjugated jumps.
pub fn pump_channel(spec: &StabilizerSpec, pump: &PumpSpec, parity: IntervalParity) -> Result<LindbladChannel> {
    pump.validate(spec)?;
    let space = spec.space();
    let flip = global_flip(space);
    let jumps = spec
        .stabilizers
        .iter()
        .zip(&pump.flips)
        .map(|(s, &f)| {
            let l = pump_jump(space, pump.gamma, s, f);
            match parity {
                IntervalParity::Even => l,
                IntervalParity::Odd => conjugate(&flip, &l),
            }
        })
        .collect();
    LindbladChannel::new(space, CMatrix::zeros((space.dim(), space.dim())), jumps)
}

/// Single-stabilizer channel, for stabilizer-by-stabilizer pumping.
pub fn single_pump_channel(spec: &StabilizerSpec, pump: &PumpSpec, k: usize) -> Result<LindbladChannel> {
    pump.validate(spec)?;
    let space = spec.space();
    let s = spec
        .stabilizers
        .get(k)
        .ok_or_else(|| Error::InvalidInput(format!("no stabilizer {k}")))?;
    let l = pump_jump(space, pump.gamma, s, pump.flips[k]);
    LindbladChannel::new(space, CMatrix::zeros((space.dim(), space.dim())), vec![l])
}

/// Precomputed generators for one (stabilizers, pump, noise) point.
#[derive(Debug, Clone)]
pub struct ClusterScheme {
    stabilizers: StabilizerSpec,
    pump: PumpSpec,
    system: ToggledSystem,
    target: DensityMatrix,
    initial: DensityMatrix,
    functional: CVector,
}

impl ClusterScheme {
    pub fn new(stabilizers: StabilizerSpec, pump: PumpSpec, noise: &InhomogeneousNoiseSpec) -> Result<Self> {
        let space = stabilizers.space();
        let basis = Arc::new(OperatorBasis::full(space.dim()));
        let l_p0 = lindblad_generator_in(&pump_channel(&stabilizers, &pump, IntervalParity::Even)?, Arc::clone(&basis))?;
        let l_n = dephasing_generator(space, noise, Arc::clone(&basis))?;
        let target = stabilizer_state(&stabilizers)?;
        let functional = basis.expectation_functional(target.entries());
        Ok(Self {
            stabilizers,
            pump,
            system: ToggledSystem::new(l_p0, l_n)?,
            target,
            initial: DensityMatrix::basis_state(space, 0)?,
            functional,
        })
    }

    /// Linear cluster on `n` qubits with standard flips and the evenly spread
    /// offset profile of strength `delta`.
    pub fn linear(n: usize, gamma: f64, delta: f64) -> Result<Self> {
        let stabilizers = linear_cluster_stabilizers(n)?;
        let pump = PumpSpec::standard(&stabilizers, gamma)?;
        Self::new(stabilizers, pump, &InhomogeneousNoiseSpec::linear(n, delta)?)
    }

    pub fn with_initial_state(mut self, rho: DensityMatrix) -> Result<Self> {
        if rho.space() != self.initial.space() {
            return Err(Error::Dimension("initial state on a different register".into()));
        }
        self.initial = rho;
        Ok(self)
    }

    pub fn system(&self) -> &ToggledSystem {
        &self.system
    }

    pub fn target(&self) -> &DensityMatrix {
        &self.target
    }

    pub fn stabilizers(&self) -> &StabilizerSpec {
        &self.stabilizers
    }

    pub fn pump(&self) -> &PumpSpec {
        &self.pump
    }
}

#[derive(Debug, Clone)]
pub struct ClusterOutcome {
    pub state: DensityMatrix,
    pub fidelity: f64,
    pub diagnostics: Diagnostics,
}

/// Evolves under simultaneous pumping with the given protection; reports `⟨C|ρ|C⟩`.
pub fn run_protected_cluster(scheme: &ClusterScheme, protection: &Protection, opts: &RunOptions) -> Result<ClusterOutcome> {
    let out = evolve(&scheme.system, &scheme.initial, &scheme.functional, protection, opts)?;
    Ok(ClusterOutcome { state: out.state, fidelity: out.observable, diagnostics: out.diagnostics })
}

/// Stabilizer-by-stabilizer pumping: slot `j` of duration `slot` pumps only
/// stabilizer `j mod n`, while `𝓛_N` follows the pulse signs. Runs for a
/// fixed `time`.
pub fn run_sequential_cluster(
    scheme: &ClusterScheme,
    noise: &InhomogeneousNoiseSpec,
    protection: &Protection,
    slot: f64,
    time: f64,
) -> Result<ClusterOutcome> {
    if !(slot > 0.0) || !(time > 0.0) {
        return Err(Error::InvalidInput("slot and time must be positive".into()));
    }
    let space = scheme.stabilizers.space();
    let basis = Arc::clone(scheme.system.basis());
    let l_n = dephasing_generator(space, noise, Arc::clone(&basis))?;
    let n_stab = scheme.stabilizers.stabilizers.len();
    let mut gens: Vec<[Superoperator; 2]> = Vec::with_capacity(n_stab);
    for k in 0..n_stab {
        let g = lindblad_generator_in(&single_pump_channel(&scheme.stabilizers, &scheme.pump, k)?, Arc::clone(&basis))?;
        gens.push([g.plus(&l_n)?, g.minus(&l_n)?]);
    }
    let pulses: Vec<f64> = match protection {
        Protection::Free => Vec::new(),
        Protection::Periodic(seq) => {
            let reps = (time / seq.t_p()).ceil() as usize;
            seq.repeated(reps.max(1))?.times().to_vec()
        }
        Protection::Random { density, seed } => random_schedule(*density, time, *seed)?.flatten(),
    };
    let mut cuts: Vec<(f64, bool)> = pulses.into_iter().filter(|&t| t < time).map(|t| (t, true)).collect();
    let mut s = slot;
    while s < time {
        cuts.push((s, false));
        s += slot;
    }
    cuts.push((time, false));
    cuts.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut cache: HashMap<(usize, usize, u64), CMatrix> = HashMap::new();
    let mut v = basis.vectorize(scheme.initial.entries());
    let (mut t, mut sign, mut segments) = (0.0, 0usize, 0u64);
    for (cut, is_pulse) in cuts {
        let d = cut - t;
        if d > 0.0 {
            let k = ((t / slot).floor() as usize) % n_stab;
            let key = (k, sign, d.to_bits());
            if !cache.contains_key(&key) {
                cache.insert(key, gens[k][sign].exp(d)?);
            }
            v = cache[&key].dot(&v);
            segments += 1;
            t = cut;
        }
        if is_pulse {
            sign ^= 1;
        }
    }
    let mut m = basis.devectorize(&v);
    let tr = linalg::trace(&m).re;
    let drift = (tr - 1.0).abs();
    if drift > 1e-8 {
        m.mapv_inplace(|z| z / tr);
    }
    let state = DensityMatrix::new_unchecked(space, m)?;
    let fidelity = state.expectation(scheme.target.entries());
    Ok(ClusterOutcome {
        state,
        fidelity,
        diagnostics: Diagnostics { units: segments, time, trace_drift: drift, renormalized: drift > 1e-8, ..Default::default() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liouville::lindblad_generator;
    use crate::protocol::SteadyCriterion;

    #[test]
    fn four_qubit_generators_match_listing() {
        let s = linear_cluster_stabilizers(4).unwrap();
        let names: Vec<String> = s.stabilizers().iter().map(|p| p.to_string()).collect();
        assert_eq!(names, ["XZII", "ZXZI", "IZXZ", "IIZX"]);
        assert!(linear_cluster_stabilizers(1).is_err());
    }

    #[test]
    fn anticommuting_set_rejected() {
        let bad = vec![PauliString::parse("XI").unwrap(), PauliString::parse("ZI").unwrap()];
        assert!(StabilizerSpec::new(2, bad).is_err());
    }

    #[test]
    fn cluster_state_is_stabilized() {
        let spec = linear_cluster_stabilizers(4).unwrap();
        let c = cluster_state(4).unwrap();
        for s in spec.stabilizers() {
            let m = s.matrix();
            let image = m.dot(c.entries()).dot(&m);
            assert!(linalg::max_abs(&(image - c.entries())) < 1e-14);
        }
        assert!((c.expectation(c.entries()) - 1.0).abs() < 1e-12);
        let mixed = DensityMatrix::maximally_mixed(spec.space());
        assert!((mixed.expectation(c.entries()) - 1.0 / 16.0).abs() < 1e-14);
    }

    #[test]
    fn cluster_state_is_dark() {
        let spec = linear_cluster_stabilizers(4).unwrap();
        let pump = PumpSpec::standard(&spec, 1.0).unwrap();
        let c = cluster_state(4).unwrap();
        let ch = pump_channel(&spec, &pump, IntervalParity::Even).unwrap();
        for l in ch.jumps() {
            assert!(linalg::max_abs(&l.dot(c.entries())) < 1e-14);
        }
        let g = lindblad_generator(&ch).unwrap();
        assert!(linalg::max_abs(&g.apply(c.entries()).unwrap()) < 1e-12);
    }

    #[test]
    fn flip_must_anticommute() {
        let spec = linear_cluster_stabilizers(3).unwrap();
        let pump = PumpSpec { gamma: 1.0, flips: vec![(0, Pauli::X), (1, Pauli::Z), (2, Pauli::Z)] };
        assert!(pump_channel(&spec, &pump, IntervalParity::Even).is_err());
    }

    #[test]
    fn single_stabilizer_pumps_into_plus_eigenstate() {
        let spec = StabilizerSpec::new(1, vec![PauliString::parse("Z").unwrap()]).unwrap();
        let pump = PumpSpec { gamma: 1.0, flips: vec![(0, Pauli::X)] };
        let ch = pump_channel(&spec, &pump, IntervalParity::Even).unwrap();
        let g = lindblad_generator(&ch).unwrap();
        let start = DensityMatrix::basis_state(spec.space(), 0).unwrap();
        let ss = crate::liouville::steady_state_by_evolution(&start, &[(&g, 1.0)], 1e-12, 1000).unwrap();
        let plus = stabilizer_state(&spec).unwrap();
        assert!(ss.state.trace_distance(&plus).unwrap() < 1e-9);
        // with σᶻ = diag(−1, +1) the +1 eigenstate is basis state 1
        assert!((ss.state.entries()[[1, 1]].re - 1.0).abs() < 1e-9);
    }

    #[test]
    fn noiseless_fidelity_reaches_one() {
        let scheme = ClusterScheme::linear(4, 1.0, 0.0).unwrap();
        let out = run_protected_cluster(&scheme, &Protection::Free, &RunOptions::default()).unwrap();
        assert!(out.fidelity > 0.999, "{}", out.fidelity);
    }

    #[test]
    fn sequential_mode_without_noise_converges() {
        let scheme = ClusterScheme::linear(3, 1.0, 0.0).unwrap();
        let noise = InhomogeneousNoiseSpec::linear(3, 0.0).unwrap();
        let out = run_sequential_cluster(&scheme, &noise, &Protection::Free, 0.5, 40.0).unwrap();
        assert!(out.fidelity > 0.99, "{}", out.fidelity);
        let simultaneous = run_protected_cluster(
            &scheme,
            &Protection::Free,
            &RunOptions { criterion: SteadyCriterion::Horizon { time: 40.0 }, ..Default::default() },
        )
        .unwrap();
        assert!(simultaneous.fidelity > 0.99);
    }
}
