//! Collective-pumping preparation of many-body singlets under inhomogeneous
//! dephasing.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, C64};
use crate::liouville::{lindblad_generator_in, DensityMatrix, LindbladChannel, OperatorBasis, Superoperator};
use crate::protocol::{evolve, Diagnostics, Protection, RunOptions, ToggledSystem};
use crate::spin::{collective, sigma_minus, sigma_plus, sigma_z, total_spin_squared, HilbertSpec};

const SINGLET_EIG_TOL: f64 = 1e-8;

/// Even or odd free interval of a pulse sequence (laboratory frame).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalParity {
    Even,
    Odd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingletChannelSpec {
    pub n_qubits: usize,
    pub lambda_h: f64,
    pub lambda_i: f64,
}

impl SingletChannelSpec {
    pub fn new(n_qubits: usize, lambda_h: f64, lambda_i: f64) -> Result<Self> {
        let spec = Self { n_qubits, lambda_h, lambda_i };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 || self.n_qubits % 2 == 1 {
            return Err(Error::InvalidInput(format!(
                "singlet pumping needs an even number of qubits, got {}",
                self.n_qubits
            )));
        }
        if !(self.lambda_h > 0.0) || !(self.lambda_i > 0.0) {
            return Err(Error::InvalidInput("pumping rates must be positive".into()));
        }
        Ok(())
    }

    pub fn space(&self) -> Result<HilbertSpec> {
        HilbertSpec::new(self.n_qubits)
    }
}

/// Static resonance offsets `ω_i` entering `H_N = Σ_i ω_i σ_i^z`.
#[derive(Debug, Clone, PartialEq)]
pub struct InhomogeneousNoiseSpec {
    pub omegas: Vec<f64>,
}

impl InhomogeneousNoiseSpec {
    pub fn new(omegas: Vec<f64>) -> Result<Self> {
        if omegas.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidInput("resonance offsets must be finite".into()));
        }
        Ok(Self { omegas })
    }

    /// Evenly spread offsets `ω_i = Δ(n + 1 − 2i)/(n − 1)`, `i = 1..n`, from `+Δ` down to `−Δ`.
    pub fn linear(n: usize, delta: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput("a linear profile needs at least two qubits".into()));
        }
        let span = (n - 1) as f64;
        Self::new((1..=n).map(|i| delta * (n as f64 + 1.0 - 2.0 * i as f64) / span).collect())
    }

    pub fn hamiltonian(&self, space: HilbertSpec) -> Result<CMatrix> {
        if self.omegas.len() != space.n_qubits() {
            return Err(Error::Dimension(format!(
                "{} resonance offsets for {} qubits",
                self.omegas.len(),
                space.n_qubits()
            )));
        }
        Ok(collective(space, &sigma_z(), |i| self.omegas[i]))
    }
}

/// Jump operators of the pumping channel. The staggered sign is `(−)^n` with
/// sites numbered `n = 1..N`.
pub fn build_pump_channel(spec: &SingletChannelSpec, parity: IntervalParity) -> Result<LindbladChannel> {
    spec.validate()?;
    let space = spec.space()?;
    let (homogeneous, staggered) = match parity {
        IntervalParity::Even => (sigma_minus(), sigma_plus()),
        IntervalParity::Odd => (sigma_plus(), sigma_minus()),
    };
    let l1 = collective(space, &homogeneous, |_| spec.lambda_h.sqrt());
    let l2 = collective(space, &staggered, |i| {
        let sign = if (i + 1) % 2 == 0 { 1.0 } else { -1.0 };
        sign * spec.lambda_i.sqrt()
    });
    LindbladChannel::new(space, CMatrix::zeros((space.dim(), space.dim())), vec![l1, l2])
}

/// `𝓛_N[ρ] = −i[Σ_i ω_i σ_i^z, ρ]` on the given operator basis.
pub fn dephasing_generator(
    space: HilbertSpec,
    noise: &InhomogeneousNoiseSpec,
    basis: Arc<OperatorBasis>,
) -> Result<Superoperator> {
    let channel = LindbladChannel::new(space, noise.hamiltonian(space)?, vec![])?;
    lindblad_generator_in(&channel, basis)
}

/// Projector onto the `J = 0` eigenspace of total spin.
pub fn singlet_projector(space: HilbertSpec) -> Result<CMatrix> {
    let (vals, vecs) = linalg::hermitian_eigh(&total_spin_squared(space))?;
    let d = space.dim();
    let mut p = CMatrix::zeros((d, d));
    for (k, &v) in vals.iter().enumerate() {
        if v.abs() < SINGLET_EIG_TOL {
            let col = vecs.column(k);
            for i in 0..d {
                for j in 0..d {
                    p[[i, j]] += col[i] * col[j].conj();
                }
            }
        }
    }
    Ok(p)
}

/// `P(J=0) = Tr(Π_{J=0} ρ)`.
pub fn singlet_population(rho: &DensityMatrix) -> Result<f64> {
    let space = rho.space();
    if space.n_qubits() % 2 == 1 {
        return Err(Error::InvalidInput("odd registers have no J = 0 sector".into()));
    }
    Ok(rho.expectation(&singlet_projector(space)?))
}

/// All spins down.
pub fn fully_polarized(space: HilbertSpec) -> DensityMatrix {
    DensityMatrix::basis_state(space, 0).expect("index 0 exists")
}

/// Two-qubit singlet `(|01⟩ − |10⟩)/√2`.
pub fn two_qubit_singlet() -> DensityMatrix {
    let space = HilbertSpec::new(2).expect("two qubits");
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let psi: CVector = ndarray::array![C64::new(0.0, 0.0), C64::new(s, 0.0), C64::new(-s, 0.0), C64::new(0.0, 0.0)];
    DensityMatrix::pure(space, &psi).expect("normalized")
}

/// Precomputed toggling-frame generators of one (spec, noise) point,
/// restricted to the zero-magnetization operator sector.
#[derive(Debug, Clone)]
pub struct SingletScheme {
    spec: SingletChannelSpec,
    noise: InhomogeneousNoiseSpec,
    system: ToggledSystem,
    initial: DensityMatrix,
    functional: CVector,
}

impl SingletScheme {
    pub fn new(spec: SingletChannelSpec, noise: InhomogeneousNoiseSpec) -> Result<Self> {
        let space = spec.space()?;
        let basis = Arc::new(OperatorBasis::magnetization_sector(space, 0));
        let l_p0 = lindblad_generator_in(&build_pump_channel(&spec, IntervalParity::Even)?, Arc::clone(&basis))?;
        let l_n = dephasing_generator(space, &noise, Arc::clone(&basis))?;
        let functional = basis.expectation_functional(&singlet_projector(space)?);
        Ok(Self {
            spec,
            noise,
            system: ToggledSystem::new(l_p0, l_n)?,
            initial: fully_polarized(space),
            functional,
        })
    }

    /// Scheme with the evenly spread offset profile of strength `delta`.
    pub fn with_linear_profile(spec: SingletChannelSpec, delta: f64) -> Result<Self> {
        let noise = InhomogeneousNoiseSpec::linear(spec.n_qubits, delta)?;
        Self::new(spec, noise)
    }

    pub fn spec(&self) -> &SingletChannelSpec {
        &self.spec
    }

    pub fn noise(&self) -> &InhomogeneousNoiseSpec {
        &self.noise
    }

    pub fn system(&self) -> &ToggledSystem {
        &self.system
    }

    pub fn initial_state(&self) -> &DensityMatrix {
        &self.initial
    }

    pub fn population_functional(&self) -> &CVector {
        &self.functional
    }
}

#[derive(Debug, Clone)]
pub struct PreparationOutcome {
    pub state: DensityMatrix,
    pub p_j0: f64,
    pub diagnostics: Diagnostics,
}

/// Evolves the fully polarized state under the protected scheme and reports `P(J=0)`.
pub fn run_protected_preparation(
    scheme: &SingletScheme,
    protection: &Protection,
    opts: &RunOptions,
) -> Result<PreparationOutcome> {
    let out = evolve(&scheme.system, &scheme.initial, &scheme.functional, protection, opts)?;
    Ok(PreparationOutcome { state: out.state, p_j0: out.observable, diagnostics: out.diagnostics })
}

/// Power-law fit `deficit ≈ c Δ^a τ̄^b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidueFit {
    pub delta_exponent: f64,
    pub tau_exponent: f64,
    pub log_prefactor: f64,
    /// Indices dropped for non-positive deficit.
    pub rejected: Vec<usize>,
}

impl ResidueFit {
    /// Slope `d log n̄ / d log Δ` of the iso-deficit lines (`n̄ ∝ 1/τ̄`).
    pub fn contour_slope(&self) -> f64 {
        self.delta_exponent / self.tau_exponent
    }
}

/// Least-squares fit of `log deficit = log c + a log Δ + b log τ̄` over
/// `(Δ, τ̄, deficit)` triples.
pub fn fit_residue_exponents(points: &[(f64, f64, f64)]) -> Result<ResidueFit> {
    let mut rejected = Vec::new();
    let mut rows = Vec::new();
    for (k, &(delta, tau, deficit)) in points.iter().enumerate() {
        if !(delta > 0.0 && tau > 0.0) {
            return Err(Error::InvalidInput(format!("point {k} needs positive Δ and τ̄")));
        }
        if deficit > 0.0 && deficit.is_finite() {
            rows.push([1.0, delta.ln(), tau.ln(), deficit.ln()]);
        } else {
            rejected.push(k);
        }
    }
    if rows.len() < 4 {
        return Err(Error::InvalidInput(format!("{} usable points, need at least 4", rows.len())));
    }
    let mut normal = [[0.0f64; 4]; 3];
    for r in &rows {
        for i in 0..3 {
            for j in 0..3 {
                normal[i][j] += r[i] * r[j];
            }
            normal[i][3] += r[i] * r[3];
        }
    }
    // Gaussian elimination with partial pivoting on the 3×3 system
    for c in 0..3 {
        let p = (c..3).max_by(|&a, &b| normal[a][c].abs().total_cmp(&normal[b][c].abs())).unwrap();
        normal.swap(c, p);
        if normal[c][c].abs() < 1e-12 {
            return Err(Error::InvalidInput("Δ and τ̄ grids do not span two directions".into()));
        }
        for r in 0..3 {
            if r != c {
                let f = normal[r][c] / normal[c][c];
                for k in c..4 {
                    normal[r][k] -= f * normal[c][k];
                }
            }
        }
    }
    let x: Vec<f64> = (0..3).map(|i| normal[i][3] / normal[i][i]).collect();
    Ok(ResidueFit { log_prefactor: x[0], delta_exponent: x[1], tau_exponent: x[2], rejected })
}
