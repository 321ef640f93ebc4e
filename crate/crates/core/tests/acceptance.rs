//! Acceptance criteria 1-10, one PASS/FAIL line each.

use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;
use surge_core::harness::Verification;
use surge_core::model::{GaussianBump, ModeProfile, Nonlinearity};
use surge_core::principles::{instance_rng, records_csv};
use surge_core::refsolver::{integrate, reference_grid, ObservedOrder, TransportSystem};
use surge_core::spectral::pseudo_inverse_apply;
use surge_core::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn repo_file(rel: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn canonical() -> (ProblemSpec, SpectralData) {
    let spec = canonical_problem();
    let sd = eigendecompose(&spec.operator, &spec.weights).expect("canonical spectrum");
    (spec, sd)
}

fn criterion1() -> Result<Outcome> {
    let (spec, sd) = canonical();
    let kc = KernelCoefficients::new(&sd, &spec.speeds)?;
    let errs = [
        (kc.b - 2.0 / 3.0).abs(),
        (kc.g + 1.0 / 8.0).abs(),
        (kc.mu - 1.0 / 18.0).abs(),
        (sd.gap - 2.0).abs(),
    ];
    let worst = errs.iter().copied().fold(0.0f64, f64::max);
    Ok(outcome(
        worst <= 1e-10,
        format!("B={} g={} mu={} k={} max dev {worst:.1e}", kc.b, kc.g, kc.mu, sd.gap),
    ))
}

fn criterion2() -> Result<Outcome> {
    let canonical = check_conditions(&load_problem(&repo_file("configs/canonical.cfg"))?);
    let equal = check_conditions(&load_problem(&repo_file("crates/cli/tests/fixtures/equal_speeds.cfg"))?);
    let metzler = check_conditions(&load_problem(&repo_file("crates/cli/tests/fixtures/negative_offdiag.cfg"))?);
    let pass = canonical.overall() && equal.failing() == ["III"] && metzler.failing() == ["VII"];
    Ok(outcome(
        pass,
        format!(
            "canonical failing {:?}, equal speeds failing {:?}, negative off-diagonal failing {:?}",
            canonical.failing(),
            equal.failing(),
            metzler.failing()
        ),
    ))
}

fn criterion3() -> Result<Outcome> {
    let mut worst_residual = 0.0f64;
    let mut worst_kernel = 0.0f64;
    for i in 0..100 {
        let mut rng = instance_rng(0x5eed, i);
        let m = rng.random_range(2..=8);
        let mut l = DMatrix::<f64>::zeros(m, m);
        for r in 0..m {
            for c in 0..m {
                if r != c {
                    l[(r, c)] = rng.random_range(0.1..2.0);
                }
            }
            let off: f64 = l.row(r).iter().sum();
            l[(r, r)] = -off;
        }
        let weights: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..2.0)).collect();
        let sd = eigendecompose(&l, &weights)?;
        let raw: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (h0, h0s) = zero_mode(&sd)?;
        let c = sd.inner(&raw, &h0s);
        let f: Vec<f64> = raw.iter().zip(&h0).map(|(v, h)| v - c * h).collect();
        let gf = pseudo_inverse_apply(&sd, &f)?;
        let lg = &l * nalgebra::DVector::from_column_slice(&gf);
        let fnorm = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let res = lg.iter().zip(&f).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        worst_residual = worst_residual.max(res / fnorm);
        worst_kernel = worst_kernel.max(sd.inner(&gf, &h0s).abs());
    }
    Ok(outcome(
        worst_residual <= 1e-10 && worst_kernel <= 1e-12,
        format!("max |L(Gf)-f|/|f| = {worst_residual:.1e}, max |(Gf,h0*)| = {worst_kernel:.1e} over 100 specs"),
    ))
}

fn slope_criterion(v: &Verification, required: f64) -> Outcome {
    let r = &v.report;
    let pass = r.error_fit.slope >= required && r.ratio_spread() <= 10.0 && v.verdict.pass;
    outcome(
        pass,
        format!(
            "slope {:.3} (need {required}), ratio spread {:.2}, C = {:.4}, oracle separated {}, monotone {}",
            r.error_fit.slope,
            r.ratio_spread(),
            r.c_hat,
            r.oracle_separated,
            r.monotone
        ),
    )
}

fn criterion6(runs: &[Verification]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for v in runs {
        let n = v.report.order as f64;
        let s = v.report.defect_projected_fit.slope;
        pass &= v.verdict.pass && s >= n + 1.6;
        parts.push(format!(
            "N={} defect exponent {s:.3} (need {}), unprojected {:.3}",
            v.report.order,
            n + 1.6,
            v.report.defect_fit.slope
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion7() -> Result<Outcome> {
    let (mut spec, sd) = canonical();
    spec.initial.push(ModeProfile {
        bumps: vec![GaussianBump::new(0.7, 1.0, 0.2)],
    });
    let kc = KernelCoefficients::new(&sd, &spec.speeds)?;
    let bt = BoundaryTerms::new(&spec, &sd, &kc)?;
    let sup = |tau: f64| {
        (0..=4000)
            .map(|i| -10.0 + 0.005 * i as f64)
            .flat_map(|xi| bt.p0(xi, tau))
            .fold(0.0f64, |a, v| a.max(v.abs()))
    };
    let (s0, s3) = (sup(0.0), sup(3.0));
    let bound = (-sd.gap * 3.0).exp() * (1.0 + 1e-6);
    Ok(outcome(
        s0 > 0.0 && s3 <= bound * s0,
        format!("sup p0(3)/sup p0(0) = {:.9e}, bound {bound:.9e}", s3 / s0),
    ))
}

fn criterion8() -> Result<Outcome> {
    let cfg = SuiteConfig::new(canonical_problem().seed.unwrap_or(0));
    let (records, summaries) = run_suites(&cfg, &[1, 2, 3, 4, 5])?;
    let mut pass = true;
    for s in &summaries {
        pass &= s.pass();
        if s.lemma <= 3 {
            pass &= s.passed >= 50;
        }
    }
    let lemma_rows = records_csv(&records).lines().count() - 1;
    let detail: Vec<String> = summaries.iter().map(|s| s.to_string()).collect();
    Ok(outcome(pass, format!("{lemma_rows} instances; {}", detail.join(" | "))))
}

fn criterion9() -> Result<Outcome> {
    let (spec, sd) = canonical();
    let report = self_convergence(&spec, &sd, 0.2, 4, 0.2, &SolverOptions::default())?;
    let order = match report.order {
        ObservedOrder::Order(p) => p,
        ObservedOrder::Exact => f64::INFINITY,
    };

    let c = 0.7;
    let grid = UniformGrid::new(0.0, 0.01, 64)?;
    let mut flat = GridField::zeros(grid, 2);
    flat.values.iter_mut().for_each(|v| *v = c);
    let sys = TransportSystem {
        relax: &spec.operator / 0.01,
        speeds: spec.speeds.clone(),
        reaction: None,
    };
    let (out, _) = integrate(&sys, Scheme::Spectral, flat, 0.0, &[1.0], 0.004, None)?;
    let drift = out[0].values.iter().fold(0.0f64, |a, v| a.max((v - c).abs()));

    let mut lin = spec.clone();
    lin.nonlinearity = Nonlinearity::zero(2);
    lin.initial.push(ModeProfile {
        bumps: vec![GaussianBump::new(0.4, 1.0, 0.5)],
    });
    let eps = 0.05;
    let opts = SolverOptions::default();
    let (lo, hi) = lin.influence_window(eps, 0.3);
    let g = reference_grid(lo, hi, eps, &opts)?;
    let sol = solve_reference(&lin, &sd, eps, g, &[0.0, 0.1, 0.2, 0.3], &opts)?;
    let (_, h0s) = zero_mode(&sd)?;
    let mass = |f: &GridField| (0..g.len).map(|i| lin.inner(f.row(i), &h0s)).sum::<f64>() * g.step;
    let m0 = mass(&sol.snapshots[0]);
    let mass_drift = sol.snapshots.iter().fold(0.0f64, |a, f| a.max((mass(f) - m0).abs()));

    Ok(outcome(
        order >= 1.8 && drift <= 1e-10 && mass_drift <= 1e-6,
        format!(
            "order {order:.3} (differences {:?}), equilibrium drift {drift:.1e}, mass drift {mass_drift:.1e}",
            report.differences
        ),
    ))
}

fn artifacts(runs: &[Verification]) -> Result<Vec<Vec<u8>>> {
    let dir = tempfile::tempdir()?;
    let mut out = Vec::new();
    for v in runs {
        let sub = dir.path().join(format!("order{}", v.report.order));
        std::fs::create_dir_all(&sub)?;
        for p in emit_report(&v.report, &v.manifest, &sub)? {
            if p.extension().is_some_and(|e| e == "csv") {
                out.push(std::fs::read(p)?);
            }
        }
    }
    Ok(out)
}

fn criterion10(spec: &ProblemSpec, sd: &SpectralData, first: &[Verification]) -> Result<Outcome> {
    let cfg = SweepConfig::for_spec(spec);
    let second = verify(spec, sd, &[0, 1], &cfg, 0.3)?;
    let (a, b) = (artifacts(first)?, artifacts(&second)?);
    let bytes: usize = a.iter().map(Vec::len).sum();
    let manifests_equal = first
        .iter()
        .zip(&second)
        .all(|(x, y)| x.manifest == y.manifest);
    Ok(outcome(
        a == b && !a.is_empty() && manifests_equal,
        format!("{} CSV files, {bytes} bytes compared", a.len()),
    ))
}

fn report(id: usize, elapsed: Duration, limit: Option<f64>, result: Result<Outcome>) -> bool {
    let (pass, detail) = match result {
        Ok(o) => (o.pass, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let secs = elapsed.as_secs_f64();
    let in_time = limit.is_none_or(|l| secs <= l);
    let ok = pass && in_time;
    let budget = limit.map(|l| format!(" (limit {l} s)")).unwrap_or_default();
    println!(
        "criterion {id:2}: {} [{secs:.2} s{budget}] {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    ok
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed())
}

fn main() {
    let mut all = true;

    let (r, d) = timed(criterion1);
    all &= report(1, d, Some(1.0), r);
    let (r, d) = timed(criterion2);
    all &= report(2, d, Some(1.0), r);
    let (r, d) = timed(criterion3);
    all &= report(3, d, Some(5.0), r);

    let (spec, sd) = canonical();
    let cfg = SweepConfig::for_spec(&spec);
    let (runs, sweep_time) = timed(|| verify(&spec, &sd, &[0, 1], &cfg, 0.3));
    match runs {
        Ok(runs) => {
            all &= report(4, sweep_time, Some(300.0), Ok(slope_criterion(&runs[0], 0.9)));
            all &= report(5, sweep_time, Some(600.0), Ok(slope_criterion(&runs[1], 1.8)));
            all &= report(6, sweep_time, None, Ok(criterion6(&runs)));
            let (r, d) = timed(criterion7);
            all &= report(7, d, None, r);
            let (r, d) = timed(criterion8);
            all &= report(8, d, Some(300.0), r);
            let (r, d) = timed(criterion9);
            all &= report(9, d, None, r);
            let (r, d) = timed(|| criterion10(&spec, &sd, &runs));
            all &= report(10, d, None, r);
        }
        Err(e) => {
            for id in [4, 5, 6, 10] {
                all &= report(id, sweep_time, None, Err(Error::Usage(format!("sweep failed: {e}"))));
            }
            let (r, d) = timed(criterion7);
            all &= report(7, d, None, r);
            let (r, d) = timed(criterion8);
            all &= report(8, d, Some(300.0), r);
            let (r, d) = timed(criterion9);
            all &= report(9, d, None, r);
        }
    }

    println!("acceptance: {}", if all { "PASS" } else { "FAIL" });
    if !all {
        std::process::exit(1);
    }
}
