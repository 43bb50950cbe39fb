use ddprep_core::cluster::{linear_cluster_stabilizers, pump_channel, PumpSpec};
use ddprep_core::linalg::{self, CMatrix, CVector, C64};
use ddprep_core::liouville::{lindblad_generator, poisson_bracket, DensityMatrix, LindbladChannel, Superoperator};
use ddprep_core::magnus::{coefficients, coefficients_repeated, coefficients_scaled, MagnusOrder};
use ddprep_core::ode::{integrate_adaptive, AdaptiveOptions};
use ddprep_core::pulses::{cdd_unit, random_schedule, udd_unit, PulseSequence};
use ddprep_core::singlet::{build_pump_channel, singlet_population, IntervalParity, SingletChannelSpec};
use ddprep_core::spin::{global_flip, HilbertSpec};
use ndarray::Array2;
use proptest::prelude::*;

fn complex_matrix(dim: usize, scale: f64) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), dim * dim).prop_map(move |v| {
        Array2::from_shape_vec((dim, dim), v.into_iter().map(|(a, b)| C64::new(a * scale, b * scale)).collect()).unwrap()
    })
}

fn channel(n_qubits: usize) -> impl Strategy<Value = LindbladChannel> {
    let dim = 1 << n_qubits;
    (complex_matrix(dim, 1.0), prop::collection::vec(complex_matrix(dim, 0.7), 1..3)).prop_map(move |(h, jumps)| {
        let space = HilbertSpec::new(n_qubits).unwrap();
        LindbladChannel::new(space, linalg::hermitian_part(&h), jumps).unwrap()
    })
}

fn density(n_qubits: usize) -> impl Strategy<Value = DensityMatrix> {
    complex_matrix(1 << n_qubits, 1.0).prop_map(move |a| {
        let space = HilbertSpec::new(n_qubits).unwrap();
        let m = a.dot(&linalg::dagger(&a));
        let tr = linalg::trace(&m).re;
        DensityMatrix::new(space, m.mapv(|z| z / tr)).unwrap()
    })
}

fn normalized_times(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001..0.999f64, 0..max).prop_map(|mut v| {
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        v
    })
}

fn bracket_residual(a: &Superoperator, b: &Superoperator, c: &Superoperator) -> f64 {
    let ab_c = poisson_bracket(&poisson_bracket(a, b).unwrap(), c).unwrap();
    let bc_a = poisson_bracket(&poisson_bracket(b, c).unwrap(), a).unwrap();
    let ca_b = poisson_bracket(&poisson_bracket(c, a).unwrap(), b).unwrap();
    linalg::max_abs(&(ab_c.matrix() + bc_a.matrix() + ca_b.matrix()))
}

/// Coefficients by adaptive quadrature of the defining integrals, one
/// free interval at a time.
fn quadrature_coefficients(seq: &PulseSequence) -> [f64; 4] {
    let segs = seq.segments();
    let mut y = CVector::zeros(4);
    let mut t = 0.0;
    for (k, &(len, sign)) in segs.iter().enumerate() {
        let f = f64::from(sign);
        if k == 0 {
            // c₁ = 1 and g = 0 on the first interval
            y[0] = C64::new(len, 0.0);
            t = len;
            continue;
        }
        let rhs = |s: f64, y: &CVector| {
            let c1 = y[0].re / s;
            let c2 = y[1].re / (2.0 * s * s);
            let g = c1 - f;
            let h = 6.0 * c2 - g;
            CVector::from(vec![
                C64::new(f, 0.0),
                C64::new(s * g, 0.0),
                C64::new(s * s * h, 0.0),
                C64::new(s * s * (6.0 * c2 * f - c1 * g), 0.0),
            ])
        };
        let opts = AdaptiveOptions { rtol: 1e-13, atol: 1e-15, ..Default::default() };
        y = integrate_adaptive(rhs, t, t + len, &y, opts).unwrap().0;
        t += len;
    }
    let tp = seq.t_p();
    [y[0].re / tp, y[1].re / (2.0 * tp * tp), y[2].re / (12.0 * tp.powi(3)), y[3].re / (12.0 * tp.powi(3))]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lindblad_evolution_is_cptp(ch in channel(2), rho in density(2), t in 0.01..2.0f64) {
        let g = lindblad_generator(&ch).unwrap();
        let trace_w = g.basis().trace_functional();
        let leak = trace_w.mapv(|x| C64::new(x, 0.0)).dot(g.matrix());
        prop_assert!(leak.iter().all(|z| z.norm() < 1e-12));
        let out = g.exp(t).unwrap().dot(&g.basis().vectorize(rho.entries()));
        let m = g.basis().devectorize(&out);
        prop_assert!((linalg::trace(&m).re - 1.0).abs() < 1e-10);
        prop_assert!(linalg::hermiticity_defect(&m) < 1e-10);
        let min = linalg::hermitian_eigenvalues(&m).unwrap().iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(min > -1e-8, "eigenvalue {min}");
    }

    #[test]
    fn bracket_is_antisymmetric_and_satisfies_jacobi(a in channel(1), b in channel(1), c in channel(1)) {
        let (a, b, c) = (lindblad_generator(&a).unwrap(), lindblad_generator(&b).unwrap(), lindblad_generator(&c).unwrap());
        let ab = poisson_bracket(&a, &b).unwrap();
        let ba = poisson_bracket(&b, &a).unwrap();
        prop_assert!(linalg::max_abs(&(ab.matrix() + ba.matrix())) < 1e-12);
        let scale = a.max_abs() * b.max_abs() * c.max_abs();
        prop_assert!(bracket_residual(&a, &b, &c) < 1e-12 * scale.max(1.0));
    }

    #[test]
    fn first_coefficient_is_signed_balance(times in normalized_times(12), tp in 0.01..10.0f64) {
        let seq = PulseSequence::from_normalized(&times, tp, "random").unwrap();
        prop_assert!((coefficients(&seq).alpha1 - seq.signed_balance() / tp).abs() < 1e-14);
    }

    #[test]
    fn scaling_law_holds(mut times in normalized_times(10), l in prop::sample::select(vec![2usize, 3, 5])) {
        // an odd count makes the repeated toggling sign anti-periodic
        if times.len() % 2 == 1 {
            times.pop();
        }
        let seq = PulseSequence::from_normalized(&times, 1.0, "random").unwrap();
        for order in [MagnusOrder::Two, MagnusOrder::ThreeA, MagnusOrder::ThreeB] {
            let direct = coefficients_repeated(&seq, l, order).unwrap();
            let scaled = coefficients_scaled(&seq, l, order).unwrap();
            prop_assert!((direct - scaled).abs() < 1e-12, "{order} l={l}: {direct} vs {scaled}");
        }
    }

    #[test]
    fn toggled_singlet_channel_is_flip_conjugate(n in prop::sample::select(vec![2usize, 4]), lh in 0.1..100.0f64, li in 0.1..10.0f64) {
        let spec = SingletChannelSpec::new(n, lh, li).unwrap();
        let even = lindblad_generator(&build_pump_channel(&spec, IntervalParity::Even).unwrap()).unwrap();
        let odd = lindblad_generator(&build_pump_channel(&spec, IntervalParity::Odd).unwrap()).unwrap();
        let conj = even.conjugated_by(&global_flip(spec.space().unwrap())).unwrap();
        prop_assert!(linalg::max_abs(&(conj.matrix() - odd.matrix())) < 1e-12 * lh.max(li));
    }

    #[test]
    fn toggled_cluster_channel_is_flip_conjugate(n in 2usize..5, gamma in 0.1..10.0f64) {
        let stabs = linear_cluster_stabilizers(n).unwrap();
        let pump = PumpSpec::standard(&stabs, gamma).unwrap();
        let even = lindblad_generator(&pump_channel(&stabs, &pump, IntervalParity::Even).unwrap()).unwrap();
        let odd = lindblad_generator(&pump_channel(&stabs, &pump, IntervalParity::Odd).unwrap()).unwrap();
        let conj = even.conjugated_by(&global_flip(stabs.space())).unwrap();
        prop_assert!(linalg::max_abs(&(conj.matrix() - odd.matrix())) < 1e-12 * gamma);
    }

    #[test]
    fn singlet_population_is_flip_invariant(rho in density(4)) {
        let x = global_flip(rho.space());
        let flipped = DensityMatrix::new(rho.space(), x.dot(rho.entries()).dot(&x)).unwrap();
        let (p, q) = (singlet_population(&rho).unwrap(), singlet_population(&flipped).unwrap());
        prop_assert!((0.0..=1.0 + 1e-12).contains(&p));
        prop_assert!((p - q).abs() < 1e-12);
    }

    #[test]
    fn named_sequences_are_valid(n in 1usize..12, order in 1usize..7, tp in 1e-4..1.0f64) {
        for seq in [udd_unit(n, tp).unwrap(), cdd_unit(order, tp).unwrap()] {
            let t = seq.normalized_times();
            prop_assert!(t.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(t.iter().all(|&x| x > 0.0 && x < 1.0));
            let total: f64 = seq.segments().iter().map(|s| s.0).sum();
            prop_assert!((total - tp).abs() < 1e-12 * tp);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn coefficients_match_quadrature(times in normalized_times(8), tp in 0.1..5.0f64) {
        let seq = PulseSequence::from_normalized(&times, tp, "random").unwrap();
        let exact = coefficients(&seq);
        let quad = quadrature_coefficients(&seq);
        for (k, order) in MagnusOrder::ALL.into_iter().enumerate() {
            prop_assert!((exact.get(order) - quad[k]).abs() < 1e-9, "{order}: {} vs {}", exact.get(order), quad[k]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn poisson_gaps_are_exponential(seed in any::<u64>(), density in 0.5..50.0f64) {
        let sched = random_schedule(density, 4000.0 / density, seed).unwrap();
        let times = sched.flatten();
        let mut counts = [0usize; 10];
        let mut prev = 0.0;
        for &t in &times {
            let u = 1.0 - (-(t - prev) * density).exp();
            counts[((u * 10.0) as usize).min(9)] += 1;
            prev = t;
        }
        let n = times.len() as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - n / 10.0).powi(2) / (n / 10.0)).sum();
        // 9 degrees of freedom, p ≈ 1e-4
        prop_assert!(chi2 < 33.7, "χ² = {chi2}");
        prop_assert!((n / 4000.0 - 1.0).abs() < 0.08);
    }
}
