//! `surge`: condition checks, expansion, reference solves, lemma suites and
//! theorem verification for a problem configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use surge_core::harness::{emit_report, spec_hash, sweep_expansion, verify, SweepConfig};
use surge_core::principles::{records_csv, run_suites, SuiteConfig};
use surge_core::refsolver::{reference_grid, solve_reference, Edge, Interpolation, Scheme, SolverOptions};
use surge_core::{check_conditions, eigendecompose, load_problem, Error, ProblemSpec, UniformGrid};

#[derive(Parser, Debug)]
#[command(name = "surge", version, about = "Surge/boundary-function asymptotics of stiff relaxation transport systems")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "./out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check Conditions I-VIII.
    Check { config: PathBuf },
    /// Build the expansion and write coefficients, profiles and U_N.
    Expand {
        config: PathBuf,
        /// Small parameter for the assembled U_N.
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 1)]
        order: usize,
    },
    /// Solve the full system with the reference scheme.
    Solve {
        config: PathBuf,
        #[arg(long)]
        eps: f64,
        /// Snapshot times; defaults to the sweep snapshots.
        #[arg(long, value_delimiter = ',')]
        times: Vec<f64>,
        #[arg(long, value_enum, default_value_t = SchemeArg::Spectral)]
        scheme: SchemeArg,
        #[arg(long, default_value_t = 16.0)]
        points_per_eps: f64,
    },
    /// Run the randomized maximum-principle suites.
    Lemmas {
        /// Optional configuration supplying the seed.
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1u8, 2, 3, 4, 5])]
        lemma: Vec<u8>,
        #[arg(long)]
        seed: Option<u64>,
        /// Instance count for every randomized suite.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 0.02)]
        dx: f64,
    },
    /// Measure ||U - U_N|| over an eps sweep and check the O(eps^(N+1)) bound.
    Verify {
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        order: usize,
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
        /// Slope slack delta.
        #[arg(long, default_value_t = 0.3)]
        slack: f64,
    },
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SchemeArg {
    Spectral,
    SemiLagrangian,
}

/// Record of one invocation, written as `manifest.json`.
#[derive(Serialize, Debug)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    command: String,
    spec_path: Option<String>,
    spec_sha256: Option<String>,
    parameters: BTreeMap<String, String>,
    stage_seconds: BTreeMap<String, f64>,
    outcome: String,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            spec_path: None,
            spec_sha256: None,
            parameters: BTreeMap::new(),
            stage_seconds: BTreeMap::new(),
            outcome: String::new(),
        }
    }

    fn param(&mut self, k: &str, v: impl ToString) {
        self.parameters.insert(k.into(), v.to_string());
    }

    fn stage(&mut self, name: &str, start: Instant) {
        self.stage_seconds.insert(name.into(), start.elapsed().as_secs_f64());
    }

    fn write(&self, dir: &Path) -> Result<(), Error> {
        fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.into()))?;
        fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

enum Outcome {
    Success,
    Verdict,
}

fn load(path: &Path, manifest: &mut RunManifest) -> Result<ProblemSpec, Error> {
    let text = fs::read_to_string(path)?;
    manifest.spec_path = Some(path.display().to_string());
    manifest.spec_sha256 = Some(spec_hash(&text));
    load_problem(&text)
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";")
}

fn check(config: &Path, out: &Path) -> Result<Outcome, Error> {
    let mut manifest = RunManifest::new("check");
    let start = Instant::now();
    let spec = load(config, &mut manifest)?;
    let report = check_conditions(&spec);
    manifest.stage("check", start);
    println!("{report}");
    fs::create_dir_all(out)?;
    fs::write(out.join("conditions.csv"), report.to_csv())?;
    manifest.outcome = if report.overall() { "pass" } else { "fail" }.into();
    manifest.write(out)?;
    Ok(if report.overall() { Outcome::Success } else { Outcome::Verdict })
}

fn expand(config: &Path, eps: Option<f64>, order: usize, out: &Path) -> Result<Outcome, Error> {
    if order > 1 {
        return Err(Error::Usage("order must be 0 or 1".into()));
    }
    let mut manifest = RunManifest::new("expand");
    let spec = load(config, &mut manifest)?;
    let report = check_conditions(&spec);
    if !report.overall() {
        println!("{report}");
        manifest.outcome = "conditions failed".into();
        manifest.write(out)?;
        return Ok(Outcome::Verdict);
    }
    let start = Instant::now();
    let sd = eigendecompose(&spec.operator, &spec.weights)?;
    let mut cfg = SweepConfig::for_spec(&spec);
    if let Some(e) = eps {
        cfg.eps = vec![e];
    }
    if cfg.eps.is_empty() {
        return Err(Error::invalid("run.eps", "no eps given in the config or on the command line"));
    }
    let set = sweep_expansion(&spec, &sd, &cfg)?;
    manifest.stage("expansion", start);
    fs::create_dir_all(out)?;

    let k = &set.kernel;
    let mut c = String::from("key,value\n");
    let mut kv = |key: &str, v: String| {
        let _ = writeln!(c, "{key},{v}");
    };
    kv("B", format!("{:.15e}", k.b));
    kv("g", format!("{:.15e}", k.g));
    kv("mu", format!("{:.15e}", k.mu));
    kv("k", format!("{:.15e}", set.gap));
    kv("fbar_linear", format!("{:.15e}", set.equation.linear));
    kv("fbar_quadratic", format!("{:.15e}", set.equation.quadratic));
    kv("rho_first", format!("{:.15e}", set.equation.source.first));
    kv("rho_quadratic", format!("{:.15e}", set.equation.source.quadratic));
    kv("rho_third", format!("{:.15e}", set.equation.source.third));
    kv("h0", list(&k.h0));
    kv("h0_star", list(&k.h0_star));
    kv("psi0", list(&k.psi0));
    kv("corrector", list(&k.corrector));
    fs::write(out.join("coefficients.csv"), c)?;

    let mut p = String::from("t,zeta,phi0,phi1\n");
    let zg = set.phi0.zeta;
    let stride = (0.05 / zg.step).round().max(1.0) as usize;
    for &t in set.phi0.times.iter().step_by(5) {
        for i in (0..zg.len).step_by(stride) {
            let z = zg.at(i);
            let _ = writeln!(p, "{t:.6e},{z:.6e},{:.12e},{:.12e}", set.phi0.eval(z, t)?, set.phi1.eval(z, t)?);
        }
    }
    fs::write(out.join("profiles.csv"), p)?;

    let eps = cfg.eps[cfg.eps.len() - 1];
    let (lo, hi) = spec.influence_window(eps, cfg.horizon);
    let grid = UniformGrid::covering(lo, hi, eps / 8.0)?;
    let mut u = String::from("t,x,state,value\n");
    for t in cfg.snapshot_times(eps) {
        let f = set.assemble(order, eps, grid, t)?;
        for (i, x) in grid.points().enumerate() {
            for j in 0..f.states {
                let _ = writeln!(u, "{t:.12e},{x:.12e},{j},{:.15e}", f.get(i, j));
            }
        }
    }
    fs::write(out.join("expansion.csv"), u)?;
    println!("B = {:.6}, g = {:.6}, mu = {:.6}, k = {:.6}", k.b, k.g, k.mu, set.gap);
    manifest.param("order", order);
    manifest.param("eps", eps);
    manifest.param("dzeta", cfg.dzeta);
    manifest.param("profile_dt", cfg.profile_dt);
    manifest.param("horizon", cfg.horizon);
    manifest.outcome = "success".into();
    manifest.write(out)?;
    Ok(Outcome::Success)
}

fn solve(config: &Path, eps: f64, times: Vec<f64>, scheme: SchemeArg, ppe: f64, out: &Path) -> Result<Outcome, Error> {
    let mut manifest = RunManifest::new("solve");
    let spec = load(config, &mut manifest)?;
    let sd = eigendecompose(&spec.operator, &spec.weights)?;
    let cfg = SweepConfig::for_spec(&spec);
    let opts = SolverOptions {
        scheme: match scheme {
            SchemeArg::Spectral => Scheme::Spectral,
            SchemeArg::SemiLagrangian => Scheme::SemiLagrangian(Interpolation::Cubic, Edge::Zero),
        },
        points_per_eps: ppe,
        ..SolverOptions::default()
    };
    let times = if times.is_empty() { cfg.snapshot_times(eps) } else { times };
    let t_end = times.iter().copied().fold(0.0, f64::max);
    let (lo, hi) = spec.influence_window(eps, t_end);
    let grid = reference_grid(lo, hi, eps, &opts)?;
    let start = Instant::now();
    let sol = solve_reference(&spec, &sd, eps, grid, &times, &opts)?;
    manifest.stage("solve", start);
    fs::create_dir_all(out)?;
    fs::write(out.join("snapshots.csv"), sol.to_csv())?;
    println!(
        "{}: {} nodes, dx = {:.3e}, dt = {:.3e}, {} snapshots",
        sol.info.scheme,
        grid.len,
        sol.info.dx,
        sol.info.dt,
        sol.times.len()
    );
    manifest.param("eps", eps);
    manifest.param("scheme", &sol.info.scheme);
    manifest.param("dx", sol.info.dx);
    manifest.param("dt", sol.info.dt);
    manifest.param("cfl", sol.info.cfl);
    manifest.param("splitting_order", sol.info.splitting_order);
    manifest.param("points_per_eps", ppe);
    manifest.param("times", list(&times));
    manifest.param("window", format!("{};{}", grid.start, grid.end()));
    manifest.outcome = "success".into();
    manifest.write(out)?;
    Ok(Outcome::Success)
}

fn lemmas(
    config: Option<&Path>,
    which: &[u8],
    seed: Option<u64>,
    samples: Option<usize>,
    dx: f64,
    out: &Path,
) -> Result<Outcome, Error> {
    let mut manifest = RunManifest::new("lemmas");
    let spec_seed = match config {
        Some(p) => load(p, &mut manifest)?.seed,
        None => None,
    };
    let seed = seed.or(spec_seed).unwrap_or(20240611);
    if !(dx > 0.0) {
        return Err(Error::Usage("dx must be positive".into()));
    }
    let mut cfg = SuiteConfig::new(seed);
    cfg.dx = dx;
    if let Some(n) = samples {
        cfg.lemma1 = n;
        cfg.lemma2 = n;
        cfg.lemma3 = n;
        cfg.lemma4 = n;
    }
    let start = Instant::now();
    let (records, summaries) = run_suites(&cfg, which)?;
    manifest.stage("suites", start);
    fs::create_dir_all(out)?;
    fs::write(out.join("lemmas.csv"), records_csv(&records))?;
    for s in &summaries {
        println!("{s}");
    }
    let pass = summaries.iter().all(|s| s.pass());
    manifest.param("seed", seed);
    manifest.param("lemmas", which.iter().map(u8::to_string).collect::<Vec<_>>().join(";"));
    manifest.param("samples", format!("{};{};{};{}", cfg.lemma1, cfg.lemma2, cfg.lemma3, cfg.lemma4));
    manifest.param("dx", dx);
    manifest.outcome = if pass { "pass" } else { "fail" }.into();
    manifest.write(out)?;
    Ok(if pass { Outcome::Success } else { Outcome::Verdict })
}

fn run_verify(config: &Path, order: usize, eps: Vec<f64>, slack: f64, out: &Path) -> Result<Outcome, Error> {
    if order > 1 {
        return Err(Error::Usage("order must be 0 or 1".into()));
    }
    if !(slack >= 0.0) {
        return Err(Error::Usage("slack must be nonnegative".into()));
    }
    let mut manifest = RunManifest::new("verify");
    let spec = load(config, &mut manifest)?;
    let report = check_conditions(&spec);
    if !report.overall() {
        println!("{report}");
        manifest.outcome = "conditions failed".into();
        manifest.write(out)?;
        return Ok(Outcome::Verdict);
    }
    let sd = eigendecompose(&spec.operator, &spec.weights)?;
    let mut cfg = SweepConfig::for_spec(&spec);
    if !eps.is_empty() {
        cfg.eps = eps;
    }
    let start = Instant::now();
    let runs = verify(&spec, &sd, &[order], &cfg, slack)?;
    manifest.stage("sweep", start);
    let v = &runs[0];
    emit_report(&v.report, &v.manifest, out)?;
    for e in &v.report.entries {
        println!(
            "eps = {:<8} E = {:.4e}  E/eps^{} = {:.4}  defect = {:.3e}  projected defect = {:.3e}",
            e.eps,
            e.error,
            order + 1,
            e.ratio,
            e.defect,
            e.defect_projected
        );
    }
    println!(
        "slope {:.3} (required {:.3}), ratio spread {:.3}, C = {:.4}: {}",
        v.verdict.slope,
        v.verdict.required_slope,
        v.verdict.ratio_spread,
        v.verdict.c_hat,
        if v.verdict.pass { "PASS" } else { "FAIL" }
    );
    for r in &v.verdict.reasons {
        println!("  {r}");
    }
    manifest.param("order", order);
    manifest.param("eps", list(&cfg.eps));
    manifest.param("slack", slack);
    for (k, val) in &v.manifest {
        manifest.param(k, val);
    }
    manifest.outcome = if v.verdict.pass { "pass" } else { "fail" }.into();
    manifest.write(out)?;
    Ok(if v.verdict.pass { Outcome::Success } else { Outcome::Verdict })
}

fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::Parse { .. } | Error::Invalid { .. } | Error::Usage(_) | Error::Io(_))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let out = cli.out.as_path();
    let result = match cli.command {
        Command::Check { config } => check(&config, out),
        Command::Expand { config, eps, order } => expand(&config, eps, order, out),
        Command::Solve {
            config,
            eps,
            times,
            scheme,
            points_per_eps,
        } => solve(&config, eps, times, scheme, points_per_eps, out),
        Command::Lemmas {
            config,
            lemma,
            seed,
            samples,
            dx,
        } => lemmas(config.as_deref(), &lemma, seed, samples, dx, out),
        Command::Verify {
            config,
            order,
            eps,
            slack,
        } => run_verify(&config, order, eps, slack, out),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Verdict) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_config_error(&e) { 2 } else { 1 })
        }
    }
}
