//! Acceptance run: one PASS/FAIL line per criterion, checked at the
//! published tolerances. Failures are reported, never raised, so this
//! target always exits successfully.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use cqflow::commands::{cmd_calibrate, cmd_riccati_check, cmd_simulate, cmd_stats, cmd_validate_cir, StatsOutput};
use cqflow::config::reference_discharge;
use cqflow::{Context, RawConfig, RunConfig, Scale};
use cqflow_core::discharge::{q_cumulant, DischargeModel, DischargeStats};
use cqflow_core::ig::{StepCoefficients, ValidationCase, ValidationReport};
use cqflow_core::measures::{quantile_atoms, MixingMeasure};
use cqflow_core::memory::{CoupledConfig, CoupledSimulator, MemoryModel};
use cqflow_core::rng::RngStream;
use cqflow_core::stats::{kl_misspecification, DischargeMoments, IntegralGrid, MemoryStatistics};
use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestRunner};

type Outcome = Result<(bool, String), String>;

fn context(text: &str, out: &Path) -> Result<Context, String> {
    let raw = RawConfig::parse(text).map_err(|e| e.to_string())?;
    let mut cfg = RunConfig::from_raw(&raw, Scale::Desk, None).map_err(|e| e.to_string())?;
    cfg.run.out = out.to_path_buf();
    Context::new(cfg).map_err(|e| e.to_string())
}

fn rel(x: f64, target: f64) -> f64 {
    (x - target).abs() / target.abs()
}

/// Largest `|mean - exact| / SE` over the comparison grid. The standard
/// error uses the exact variance: in case C every sampled path can be
/// absorbed while the exact mean is still carried by rare survivors, and
/// the sample variance then collapses to zero.
fn worst_mean_z(r: &ValidationReport) -> f64 {
    let n = r.n_paths as f64;
    r.mean
        .iter()
        .zip(&r.exact_mean)
        .zip(&r.exact_variance)
        .filter(|(_, &v)| v > 0.0)
        .map(|((&m, &e), &v)| (m - e).abs() / (v / n).sqrt())
        .fold(0.0, f64::max)
}

struct Scheme {
    coarse: Vec<ValidationReport>,
    fine_c: Option<ValidationReport>,
    fine_secs: f64,
}

fn scheme_runs(dir: &Path) -> Result<Scheme, String> {
    let ctx = context("[validate]\ncases = A, B, C\ndt = 0.1, 0.01\npaths = 1e5\n", &dir.join("coarse"))?;
    let coarse = cmd_validate_cir(&ctx).map_err(|e| e.to_string())?.reports;
    let t = Instant::now();
    let ctx = context("[validate]\ncases = C\ndt = 0.001\npaths = 1e5\n", &dir.join("fine"))?;
    let fine_c = cmd_validate_cir(&ctx).map_err(|e| e.to_string())?.reports.into_iter().next();
    Ok(Scheme { coarse, fine_c, fine_secs: t.elapsed().as_secs_f64() })
}

fn criterion1(s: &Scheme) -> Outcome {
    let r = s.fine_c.as_ref().ok_or("no case C report")?;
    let tau = r.hit_time_mean.ok_or("no hitting time")?;
    let err = (tau - 0.289273).abs();
    Ok((
        err <= 0.01 && s.fine_secs < 120.0,
        format!(
            "E[tau] = {tau:.6} (SE {:.2e}, {} unhit) vs 0.289273, |error| = {err:.3e}, tolerance 1e-2, {:.0} s",
            r.hit_time_se.unwrap_or(f64::NAN),
            r.unhit,
            s.fine_secs
        ),
    ))
}

fn criterion2(s: &Scheme) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for r in s.coarse.iter().filter(|r| r.dt == 0.01) {
        let z = worst_mean_z(r);
        ok &= z <= 4.0;
        parts.push(format!("{} trajectory max z {z:.2}", r.case.label()));
    }
    for (k, case) in ValidationCase::ALL.iter().enumerate() {
        let p = case.params();
        let dt = 0.01;
        let c = StepCoefficients::new(p.rate, dt);
        let mut rng = RngStream::new(1, 9000 + k as u64);
        let n = 100_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = c.step(p.x0, p.level, p.noise, &mut rng);
            s1 += x;
            s2 += x * x;
        }
        let mean = s1 / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        let decay = (-p.rate * dt).exp();
        let exact = p.x0 * decay + p.level * (1.0 - decay);
        let z = (mean - exact).abs() / se;
        ok &= z <= 4.0;
        parts.push(format!("{} one-step z {z:.2}", case.label()));
    }
    if parts.len() != 6 {
        return Err(format!("expected trajectories for A-C at dt 0.01, found {}", parts.len() - 3));
    }
    Ok((ok, format!("{} (limit 4 SE, 1e5 paths)", parts.join(", "))))
}

fn criterion3(s: &Scheme) -> Outcome {
    let err = |dt: f64| {
        s.coarse
            .iter()
            .find(|r| r.case == ValidationCase::B && r.dt == dt)
            .map(|r| r.var_lsq_error)
            .ok_or(format!("no case B report at dt {dt}"))
    };
    let (a, b) = (err(0.1)?, err(0.01)?);
    let ratio = a / b;
    Ok((
        (5.0..=20.0).contains(&ratio),
        format!("variance error {a:.4e} -> {b:.4e}, ratio {ratio:.3}, accepted [5, 20]"),
    ))
}

fn criterion4() -> Outcome {
    let t = Instant::now();
    let s = DischargeStats::of_model(&reference_discharge()).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let pairs = [
        ("mean", s.mean, 41.560),
        ("variance", s.variance, 2754.8),
        ("skewness", s.skewness, 10.096),
        ("kurtosis", s.kurtosis, 210.19),
    ];
    let ok = pairs.iter().all(|&(_, x, t)| rel(x, t) <= 0.01) && secs < 1.0;
    let detail = pairs.iter().map(|(n, x, t)| format!("{n} {x:.5} vs {t} ({:+.3}%)", 100.0 * (x - t) / t)).collect::<Vec<_>>();
    Ok((ok, format!("{}; {secs:.3} s", detail.join(", "))))
}

struct Memory {
    tn: StatsOutput,
    tp: StatsOutput,
    toc: StatsOutput,
    secs: f64,
}

fn memory_stats(dir: &Path) -> Result<Memory, String> {
    let t = Instant::now();
    let run = |preset: &str, deltas: &str| -> Result<StatsOutput, String> {
        let ctx = context(
            &format!("[memory]\npreset = {preset}\n[stats]\nn_int = 2048\ndeltas = {deltas}\n"),
            &dir.join(preset),
        )?;
        cmd_stats(&ctx).map_err(|e| e.to_string())
    };
    let tn = run("tn", "-0.5, -0.4, -0.3, -0.2, -0.1, 0, 0.1, 0.2, 0.3, 0.4, 0.5")?;
    let tp = run("tp", "0")?;
    let toc = run("toc", "0")?;
    Ok(Memory { tn, tp, toc, secs: t.elapsed().as_secs_f64() })
}

fn criterion5(m: &Memory) -> Outcome {
    let checks = [
        ("TN E[M]", m.tn.mean, 1.084, 5e-4 / 1.084),
        ("TN V[M]", m.tn.variance, 0.2676, 0.01),
        ("TN lambda(0)", m.tn.lambda0, 9.766, 0.01),
        ("TP lambda(0)", m.tp.lambda0, 28.79, 0.01),
        ("TOC lambda(0)", m.toc.lambda0, 19.36, 0.01),
    ];
    let ok = checks.iter().all(|&(_, x, t, tol)| rel(x, t) <= tol) && m.secs < 60.0;
    let detail: Vec<String> = checks
        .iter()
        .map(|&(n, x, t, tol)| format!("{n} {x:.5} vs {t} ({:+.2}%, {})", 100.0 * (x - t) / t, if rel(x, t) <= tol { "ok" } else { "out" }))
        .collect();
    Ok((ok, format!("{}; {:.1} s", detail.join(", "), m.secs)))
}

const TABLE8: [(f64, f64, f64, f64); 11] = [
    (-0.5, 1.74, 1.034e-1, 6.794),
    (-0.4, 1.53, 5.935e-2, 7.508),
    (-0.3, 1.37, 3.035e-2, 8.149),
    (-0.2, 1.25, 1.239e-2, 8.733),
    (-0.1, 1.15, 2.871e-3, 9.269),
    (0.0, 1.07, 0.0, 9.766),
    (0.1, 1.00, 2.511e-3, 1.023e1),
    (0.2, 0.94, 9.467e-3, 1.066e1),
    (0.3, 0.89, 2.015e-2, 1.107e1),
    (0.4, 0.85, 3.402e-2, 1.145e1),
    (0.5, 0.81, 5.062e-2, 1.182e1),
];

fn four_figures(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x:.3e}")
    }
}

fn criterion6(m: &Memory) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, s, target) in [("TN", &m.tn, 1.07), ("TP", &m.tp, 1.20), ("TOC", &m.toc, 1.42)] {
        let p = s.peak.ok_or(format!("{name}: no interior peak"))?;
        ok &= (p - target).abs() <= 0.02;
        parts.push(format!("{name} peak {p:.4} vs {target}"));
    }
    let (mut peak_bad, mut kl_bad, mut l0_bad) = (0, 0, 0);
    let mut worst_l0 = 0.0f64;
    for &(delta, peak, kl, l0) in &TABLE8 {
        let row = m.tn.sweep.iter().find(|r| (r.delta - delta).abs() < 1e-12).ok_or(format!("no sweep row at {delta}"))?;
        if !row.peak.is_some_and(|p| (p - peak).abs() <= 0.02) {
            peak_bad += 1;
        }
        if row.kl.map(four_figures) != Some(four_figures(kl)) {
            kl_bad += 1;
        }
        let e = rel(row.lambda0, l0);
        worst_l0 = worst_l0.max(e);
        if e > 0.01 {
            l0_bad += 1;
        }
    }
    ok &= peak_bad == 0 && kl_bad == 0 && l0_bad == 0;
    parts.push(format!(
        "Table 8 rows off: peak {peak_bad}/11, KL {kl_bad}/11, lambda(0) {l0_bad}/11 (worst {:.1}%)",
        100.0 * worst_l0
    ));
    let row = m.tn.sweep.iter().find(|r| (r.delta + 0.2).abs() < 1e-12).ok_or("no -0.2 row")?;
    parts.push(format!("lambda(0) at delta -0.2 {:.4} vs 8.733", row.lambda0));
    Ok((ok, parts.join(", ")))
}

fn criterion7(dir: &Path) -> Outcome {
    let t = Instant::now();
    let ctx = context("[memory]\npreset = tn\n[simulate]\ncomponents = 512\ndt = 0.02\nyears = 50\nburn_in_years = 50\n", dir)?;
    let out = cmd_simulate(&ctx).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let (mean, var) = (out.m.mean(), out.m.variance());
    let ok = rel(mean, 1.084) <= 0.03 && rel(var, 0.2676) <= 0.15 && secs < 600.0;
    Ok((
        ok,
        format!(
            "mean {mean:.4} vs 1.084 ({:+.1}%, limit 3%), variance {var:.4} vs 0.2676 ({:+.1}%, limit 15%), seed 1, 50-year burn-in, {secs:.0} s",
            100.0 * (mean - 1.084) / 1.084,
            100.0 * (var - 0.2676) / 0.2676
        ),
    ))
}

fn criterion8(dir: &Path) -> Outcome {
    let calibrate = |preset: &str| -> Result<MemoryModel, String> {
        let ctx = context(&format!("[memory]\npreset = {preset}\n[calibrate]\nsynthetic = true\n"), &dir.join(preset))?;
        Ok(cmd_calibrate(&ctx).map_err(|e| e.to_string())?.report.memory.model)
    };
    let tn = calibrate("tn")?;
    let tp = calibrate("tp")?;
    let xi = match tp.rho {
        MixingMeasure::Dirac { atom } => atom,
        _ => return Err("TP calibration did not return a Dirac law".into()),
    };
    let checks = [
        ("TN sigma", tn.sigma, 0.5412, 0.10),
        ("TN b", tn.b, 0.01684, 0.15),
        ("TP xi", xi, 0.294, 0.15),
    ];
    let ok = checks.iter().all(|&(_, x, t, tol)| rel(x, t) <= tol);
    let detail: Vec<String> = checks
        .iter()
        .map(|&(n, x, t, tol)| format!("{n} {x:.5} vs {t} ({:+.1}%, limit {:.0}%)", 100.0 * (x - t) / t, 100.0 * tol))
        .collect();
    Ok((ok, format!("{}; 30-year weekly synthetic record, seed 1", detail.join(", "))))
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(PtConfig { cases, failure_persistence: None, ..PtConfig::default() })
}

fn memory_models() -> impl Strategy<Value = MemoryModel> {
    let rho = prop_oneof![
        (0.2f64..3.0, 0.05f64..1.5).prop_map(|(z, x)| MixingMeasure::gamma(z, x).unwrap()),
        (0.02f64..2.0).prop_map(|x| MixingMeasure::dirac(x).unwrap()),
    ];
    (0.0f64..2.0, 0.0f64..0.05, -2.0f64..3.0, rho).prop_map(|(a, b, ls, r)| MemoryModel::new(a, b, ls.exp(), r).unwrap())
}

fn statistics(dis: &DischargeModel, mem: &MemoryModel, n: usize) -> MemoryStatistics {
    let q = DischargeMoments { mean: q_cumulant(1, dis).unwrap(), variance: q_cumulant(2, dis).unwrap() };
    let grid = IntegralGrid::new(&dis.autocorrelation_measure().unwrap(), &mem.rho, n).unwrap();
    MemoryStatistics::new(mem, q, &grid).unwrap()
}

fn criterion9(dir: &Path) -> Outcome {
    let dis = reference_discharge();
    let mut parts = Vec::new();
    let mut ok = true;
    let mut record = |name: &str, r: Result<(), String>| {
        ok &= r.is_ok();
        parts.push(match r {
            Ok(()) => format!("{name} ok"),
            Err(e) => format!("{name} FAILED ({e})"),
        });
    };

    let scheme = (1e-3f64..20.0, 0.0f64..50.0, 0.0f64..200.0, 0.0f64..50.0, 1e-4f64..1.0, any::<u64>());
    record(
        "scheme non-negativity",
        runner(256)
            .run(&scheme, |(rate, level, noise, x0, dt, seed)| {
                let c = StepCoefficients::new(rate, dt);
                let mut rng = RngStream::new(seed, 0);
                let mut x = x0;
                for _ in 0..500 {
                    x = c.step(x, level, noise, &mut rng);
                    prop_assert!(x >= 0.0 && x.is_finite());
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );
    record(
        "coupled non-negativity incl. sigma^2 >> 2(a+bQ)",
        runner(48)
            .run(&(memory_models(), any::<u64>()), |(mem, seed)| {
                let mut sim = CoupledSimulator::new(&dis, &mem, &CoupledConfig::new(8, 0.05), seed, 0).unwrap();
                for _ in 0..2000 {
                    let (q, m) = sim.step();
                    prop_assert!(q >= 0.0 && m >= 0.0);
                    prop_assert!(sim.memory.components.iter().all(|&x| x >= 0.0));
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );
    record(
        "A17/A18 bounds, A_M(0) = 1, lambda continuity",
        runner(96)
            .run(&memory_models(), |mem| {
                let n = 32;
                let s = statistics(&dis, &mem, n);
                let theta = quantile_atoms(&dis.autocorrelation_measure().unwrap(), n).unwrap();
                let mean_rate = quantile_atoms(&mem.rho, n).unwrap().mean();
                prop_assert_eq!(s.autocorrelation(0.0).unwrap(), 1.0);
                prop_assert!((s.f_unit(0.0) - s.g_unit(0.0)).abs() <= 1e-12 * s.g_unit(0.0));
                for k in 0..120 {
                    let l = k as f64 * 0.25;
                    prop_assert!(s.f_unit(l) <= (1.0 + l * mean_rate) * (1.0 + 1e-12));
                    prop_assert!(s.g_unit(l) <= theta.exp_transform(l).unwrap() + 1e-12);
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );
    record(
        "KL convexity",
        runner(512)
            .run(&(0.1f64..5.0, -0.9f64..2.0, -0.9f64..2.0), |(z, d1, d2)| {
                let kl = |d: f64| kl_misspecification(z, d).unwrap();
                prop_assert!(kl(0.5 * (d1 + d2)) <= 0.5 * (kl(d1) + kl(d2)) + 1e-12 * (1.0 + kl(d1) + kl(d2)));
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    let t = Instant::now();
    let ctx = context("[memory]\npreset = tn\n[riccati]\nn = 256\nvarpis = -0.5, 0\n", dir)?;
    let out = cmd_riccati_check(&ctx).map_err(|e| e.to_string())?;
    let row = out.configured.rows.iter().find(|r| r.varpi == -0.5).ok_or("no -0.5 row")?;
    let d = row.relative_difference.ok_or("Monte Carlo side missing")?;
    record(
        &format!(
            "Riccati {:.5} vs Monte Carlo {:.5} at varpi -0.5 ({:+.2}%, {} paths, {:.0} s)",
            row.riccati,
            row.monte_carlo.unwrap_or(f64::NAN),
            100.0 * d,
            out.configured.paths,
            t.elapsed().as_secs_f64()
        ),
        if d.abs() < 0.02 { Ok(()) } else { Err("above 2%".into()) },
    );
    Ok((ok, parts.join("; ")))
}

fn report(id: u32, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
    });
    let secs = t.elapsed().as_secs_f64();
    let (pass, detail) = match r {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    println!("criterion {id}: {} | {detail} [{secs:.1} s]", if pass { "PASS" } else { "FAIL" });
    pass
}

fn main() {
    // `cargo test` passes harness flags such as `--list`; nothing to enumerate.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => {
            println!("acceptance: cannot create a scratch directory: {e}");
            return;
        }
    };
    let root = dir.path();
    let start = Instant::now();

    println!("acceptance: running criteria 1-9 (seed 1)");
    let scheme = catch_unwind(AssertUnwindSafe(|| scheme_runs(root)))
        .unwrap_or_else(|_| Err("validation run panicked".into()));
    let memory =
        catch_unwind(AssertUnwindSafe(|| memory_stats(root))).unwrap_or_else(|_| Err("statistics run panicked".into()));

    let mut results = Vec::new();
    results.push(report(1, || scheme.as_ref().map_err(Clone::clone).and_then(criterion1)));
    results.push(report(2, || scheme.as_ref().map_err(Clone::clone).and_then(criterion2)));
    results.push(report(3, || scheme.as_ref().map_err(Clone::clone).and_then(criterion3)));
    results.push(report(4, criterion4));
    results.push(report(5, || memory.as_ref().map_err(Clone::clone).and_then(criterion5)));
    results.push(report(6, || memory.as_ref().map_err(Clone::clone).and_then(criterion6)));
    results.push(report(7, || criterion7(&root.join("simulate"))));
    results.push(report(8, || criterion8(&root.join("calibrate"))));
    results.push(report(9, || criterion9(&root.join("riccati"))));
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/9 criteria pass in {:.0} s", start.elapsed().as_secs_f64());
}
