use cqflow_core::discharge::{q_cumulant, DischargeModel};
use cqflow_core::ig::StepCoefficients;
use cqflow_core::measures::{quantile_atoms, MixingMeasure};
use cqflow_core::memory::{CoupledConfig, CoupledSimulator, MemoryModel};
use cqflow_core::riccati::{solve_riccati, RiccatiOptions};
use cqflow_core::rng::RngStream;
use cqflow_core::stats::{kl_misspecification, DischargeMoments, IntegralGrid, MemoryStatistics};
use proptest::prelude::*;

fn table4() -> DischargeModel {
    DischargeModel::new(1.752, 1.608, 2.985, 1.510e-3, 0.7998).unwrap()
}

fn discharge() -> impl Strategy<Value = DischargeModel> {
    (1.2f64..4.0, 0.3f64..3.0, 0.5f64..5.0, 5e-4f64..5e-3, 0.3f64..0.9)
        .prop_map(|(al, be, a1, a2, a3)| DischargeModel::new(al, be, a1, a2, a3).unwrap())
}

fn rho() -> impl Strategy<Value = MixingMeasure> {
    prop_oneof![
        (0.2f64..3.0, 0.05f64..1.5).prop_map(|(z, x)| MixingMeasure::gamma(z, x).unwrap()),
        (0.02f64..2.0).prop_map(|x| MixingMeasure::dirac(x).unwrap()),
    ]
}

fn memory() -> impl Strategy<Value = MemoryModel> {
    (0.0f64..2.0, 0.0f64..0.05, 0.05f64..3.0, rho()).prop_map(|(a, b, s, r)| MemoryModel::new(a, b, s, r).unwrap())
}

fn statistics(dis: &DischargeModel, mem: &MemoryModel, n: usize) -> (MemoryStatistics, IntegralGrid) {
    let q = DischargeMoments { mean: q_cumulant(1, dis).unwrap(), variance: q_cumulant(2, dis).unwrap() };
    let grid = IntegralGrid::new(&dis.autocorrelation_measure().unwrap(), &mem.rho, n).unwrap();
    (MemoryStatistics::new(mem, q, &grid).unwrap(), grid)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scheme_never_leaves_the_nonnegative_half_line(
        rate in 1e-3f64..20.0,
        level in 0.0f64..50.0,
        // Diffusion far above the Feller threshold is included.
        noise in 0.0f64..200.0,
        x0 in 0.0f64..50.0,
        dt in 1e-4f64..1.0,
        seed in any::<u64>(),
    ) {
        let c = StepCoefficients::new(rate, dt);
        let mut rng = RngStream::new(seed, 0);
        let mut x = x0;
        for _ in 0..500 {
            x = c.step(x, level, noise, &mut rng);
            prop_assert!(x >= 0.0 && x.is_finite(), "x = {}", x);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn coupled_states_stay_nonnegative(
        a in 0.0f64..1.0,
        b in 0.0f64..0.05,
        log_sigma in -2.0f64..3.0,
        r in rho(),
        seed in any::<u64>(),
    ) {
        let mem = MemoryModel::new(a, b, log_sigma.exp(), r).unwrap();
        let mut sim = CoupledSimulator::new(&table4(), &mem, &CoupledConfig::new(8, 0.05), seed, 0).unwrap();
        for _ in 0..2000 {
            let (q, m) = sim.step();
            prop_assert!(q >= 0.0 && m >= 0.0 && m.is_finite());
            prop_assert!(sim.memory.components.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn covariance_branches_respect_their_bounds(dis in discharge(), mem in memory()) {
        let n = 32;
        let (s, _) = statistics(&dis, &mem, n);
        let theta = quantile_atoms(&dis.autocorrelation_measure().unwrap(), n).unwrap();
        let mean_rate = quantile_atoms(&mem.rho, n).unwrap().mean();
        let mut prev = f64::INFINITY;
        for k in 0..120 {
            let l = k as f64 * 0.25;
            let (f, g) = (s.f_unit(l), s.g_unit(l));
            let tol = 1e-12 * (1.0 + l * mean_rate);
            prop_assert!(f <= 1.0 + l * mean_rate + tol, "F({}) = {}", l, f);
            prop_assert!(g <= theta.exp_transform(l).unwrap() + 1e-12, "G({}) = {}", l, g);
            prop_assert!(g <= prev);
            prev = g;
        }
    }

    #[test]
    fn autocorrelation_is_one_at_zero_and_covariance_is_continuous(dis in discharge(), mem in memory()) {
        let (s, _) = statistics(&dis, &mem, 32);
        prop_assert_eq!(s.autocorrelation(0.0).unwrap(), 1.0);
        prop_assert_eq!(s.j_term(0.0), 0.0);
        let l0 = s.lambda0();
        prop_assert!((s.f_unit(0.0) - s.g_unit(0.0)).abs() <= 1e-12 * s.g_unit(0.0));
        prop_assert!((s.mutual_covariance(0.0) - s.mutual_covariance(-1e-300)).abs() <= 1e-12 * l0.abs().max(1e-300));
    }

    #[test]
    fn misspecification_divergence_is_convex(
        zeta in 0.1f64..5.0,
        d1 in -0.9f64..2.0,
        d2 in -0.9f64..2.0,
    ) {
        let kl = |d: f64| kl_misspecification(zeta, d).unwrap();
        let mid = kl(0.5 * (d1 + d2));
        prop_assert!(mid <= 0.5 * (kl(d1) + kl(d2)) + 1e-12 * (1.0 + kl(d1) + kl(d2)));
        prop_assert!(kl(d1) >= 0.0);
    }

    #[test]
    fn mgf_lies_in_the_unit_interval(mem in memory(), varpi in -2.0f64..0.0) {
        let sol = solve_riccati(8, varpi, &mem, &table4(), &RiccatiOptions::default()).unwrap();
        let m = vec![mem.a / 8.0; 8];
        let q = vec![0.0; 8];
        let v = sol.log_mgf_at(&m, &q).exp();
        prop_assert!(v > 0.0 && v <= 1.0 + 1e-12, "{}", v);
    }
}
