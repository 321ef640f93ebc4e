//! Residual measurement: defect of an approximate solution, error of `U_N`
//! against the reference solver over an `eps` sweep, slope fits and the
//! `||R_N|| <= C eps^(N+1)` verdict.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::expansion::{build_expansion, zeta_span, ExpansionOptions, ExpansionSet};
use crate::model::{GridField, ProblemSpec, UniformGrid};
use crate::refsolver::{reference_grid, solve_reference, SolverOptions, SpaceTimeField};
use crate::spectral::{KernelCoefficients, SpectralData};

/// Defaults of one sweep; every field is echoed into the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub eps: Vec<f64>,
    /// Evaluation horizon `T0`.
    pub horizon: f64,
    pub solver: SolverOptions,
    /// Earliest time at which the defect is sampled.
    pub defect_t_min: f64,
    /// Centered-difference step in `x` as a fraction of `eps`.
    pub fd_fraction: f64,
    pub dzeta: f64,
    pub profile_dt: f64,
    /// Nodes dropped at each end of the reference grid.
    pub edge_nodes: usize,
    /// Reference error estimate must stay below this fraction of `E`.
    pub oracle_fraction: f64,
}

impl SweepConfig {
    pub fn for_spec(spec: &ProblemSpec) -> Self {
        let horizon = spec.horizon.min(0.5);
        Self {
            eps: spec.eps.clone(),
            horizon,
            solver: SolverOptions::default(),
            defect_t_min: 0.5 * horizon,
            fd_fraction: 0.005,
            dzeta: 0.01,
            profile_dt: 0.01,
            edge_nodes: 2,
            oracle_fraction: 0.1,
        }
    }

    /// `{k T0 / 10}` together with the layer times `eps^2 (1/4, 1/2, 1, 2, 4)`.
    pub fn snapshot_times(&self, eps: f64) -> Vec<f64> {
        let mut t: Vec<f64> = (1..=10).map(|k| k as f64 * self.horizon / 10.0).collect();
        t.extend(
            [0.25, 0.5, 1.0, 2.0, 4.0]
                .iter()
                .map(|c| c * eps * eps)
                .filter(|&s| s < self.horizon),
        );
        t.sort_by(f64::total_cmp);
        t.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        t
    }

    pub fn defect_times(&self) -> Vec<f64> {
        (1..=10)
            .map(|k| k as f64 * self.horizon / 10.0)
            .filter(|&t| t >= self.defect_t_min - 1e-12)
            .collect()
    }
}

/// Pointwise defect `eps^2 (U_t + D U_x) - L U - eps^2 F(U)`.
#[derive(Debug, Clone)]
pub struct DefectReport {
    pub times: Vec<f64>,
    pub fields: Vec<GridField>,
    /// Sup over all points and states.
    pub sup: f64,
    /// Sup of the kernel component `(defect, h0*)`.
    pub sup_projected: f64,
}

fn defect_at(spec: &ProblemSpec, eps: f64, u: &[f64], ut: &[f64], ux: &[f64], out: &mut [f64]) {
    let m = spec.states();
    for r in 0..m {
        let lu: f64 = (0..m).map(|c| spec.operator[(r, c)] * u[c]).sum();
        out[r] = eps * eps * (ut[r] + spec.speeds[r] * ux[r] - spec.nonlinearity.eval(r, u[r])) - lu;
    }
}

/// Defect of `u(x, t)` by centered differences with steps `hx`, `ht`.
#[allow(clippy::too_many_arguments)]
pub fn defect<U>(
    u: U,
    spec: &ProblemSpec,
    kernel: &KernelCoefficients,
    eps: f64,
    grid: UniformGrid,
    times: &[f64],
    hx: f64,
    ht: f64,
) -> Result<DefectReport>
where
    U: Fn(f64, f64) -> Result<Vec<f64>>,
{
    if times.is_empty() {
        return Err(Error::invalid("times", "no defect times"));
    }
    let m = spec.states();
    let mut fields = Vec::with_capacity(times.len());
    let (mut sup, mut sup_projected) = (0.0f64, 0.0f64);
    let mut d = vec![0.0; m];
    for &t in times {
        if t - ht < 0.0 {
            return Err(Error::invalid("times", "time differencing needs t >= ht"));
        }
        let mut field = GridField::zeros(grid, m);
        for (i, x) in grid.points().enumerate() {
            let c = u(x, t)?;
            let (tp, tm) = (u(x, t + ht)?, u(x, t - ht)?);
            let (xp, xm) = (u(x + hx, t)?, u(x - hx, t)?);
            let ut: Vec<f64> = tp.iter().zip(&tm).map(|(a, b)| (a - b) / (2.0 * ht)).collect();
            let ux: Vec<f64> = xp.iter().zip(&xm).map(|(a, b)| (a - b) / (2.0 * hx)).collect();
            defect_at(spec, eps, &c, &ut, &ux, &mut d);
            for (j, v) in d.iter().enumerate() {
                field.set(i, j, *v);
                sup = sup.max(v.abs());
            }
            sup_projected = sup_projected.max(spec.inner(&d, &kernel.h0_star).abs());
        }
        fields.push(field);
    }
    Ok(DefectReport {
        times: times.to_vec(),
        fields,
        sup,
        sup_projected,
    })
}

/// Defect of a stored solution at interior snapshots with equal spacing on
/// both sides.
pub fn defect_of_field(sol: &SpaceTimeField, spec: &ProblemSpec, kernel: &KernelCoefficients) -> Result<DefectReport> {
    let n = sol.times.len();
    let m = sol.states;
    let grid = sol.grid;
    let mut times = Vec::new();
    let mut fields = Vec::new();
    let (mut sup, mut sup_projected) = (0.0f64, 0.0f64);
    let mut d = vec![0.0; m];
    for k in 1..n.saturating_sub(1) {
        let (a, b) = (sol.times[k] - sol.times[k - 1], sol.times[k + 1] - sol.times[k]);
        if (a - b).abs() > 1e-9 * a.max(b) {
            continue;
        }
        let interior = UniformGrid::new(grid.at(1), grid.step, grid.len.saturating_sub(2))?;
        let mut field = GridField::zeros(interior, m);
        for i in 1..grid.len - 1 {
            let u = sol.snapshots[k].row(i);
            let ut: Vec<f64> = (0..m)
                .map(|j| (sol.snapshots[k + 1].get(i, j) - sol.snapshots[k - 1].get(i, j)) / (a + b))
                .collect();
            let ux: Vec<f64> = (0..m)
                .map(|j| (sol.snapshots[k].get(i + 1, j) - sol.snapshots[k].get(i - 1, j)) / (2.0 * grid.step))
                .collect();
            defect_at(spec, sol.eps, u, &ut, &ux, &mut d);
            for (j, v) in d.iter().enumerate() {
                field.set(i - 1, j, *v);
                sup = sup.max(v.abs());
            }
            sup_projected = sup_projected.max(spec.inner(&d, &kernel.h0_star).abs());
        }
        times.push(sol.times[k]);
        fields.push(field);
    }
    if times.is_empty() {
        return Err(Error::invalid(
            "snapshots",
            "insufficient snapshots for time differencing",
        ));
    }
    Ok(DefectReport {
        times,
        fields,
        sup,
        sup_projected,
    })
}

/// Least-squares line through `(log eps, log E)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute residual in log units.
    pub residual: f64,
}

pub fn fit_slope(pairs: &[(f64, f64)]) -> Result<SlopeFit> {
    if pairs.len() < 3 {
        return Err(Error::invalid("pairs", "at least three points are needed"));
    }
    if pairs.iter().any(|&(e, v)| !(e > 0.0) || !(v > 0.0)) {
        return Err(Error::invalid("pairs", "nonpositive entries cannot be fitted in log scale"));
    }
    let pts: Vec<(f64, f64)> = pairs.iter().map(|&(e, v)| (e.ln(), v.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("pairs", "eps values must differ"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).abs())
        .fold(0.0, f64::max);
    Ok(SlopeFit {
        slope,
        intercept,
        residual,
    })
}

/// One reference solve with its time-step error estimate.
#[derive(Debug, Clone)]
pub struct ReferenceRun {
    pub eps: f64,
    pub solution: SpaceTimeField,
    /// Sup difference against the same solve with half the step, over the
    /// evaluation window.
    pub estimate: f64,
}

fn window_sup(a: &GridField, b: &GridField, edge: usize) -> f64 {
    let m = a.states;
    let n = a.grid.len;
    let mut s = 0.0f64;
    for i in edge..n.saturating_sub(edge) {
        for j in 0..m {
            s = s.max((a.get(i, j) - b.get(i, j)).abs());
        }
    }
    s
}

pub fn reference_run(spec: &ProblemSpec, sd: &SpectralData, eps: f64, cfg: &SweepConfig) -> Result<ReferenceRun> {
    let (lo, hi) = spec.influence_window(eps, cfg.horizon);
    let grid = reference_grid(lo, hi, eps, &cfg.solver)?;
    let times = cfg.snapshot_times(eps);
    let coarse = solve_reference(spec, sd, eps, grid, &times, &cfg.solver)?;
    let half = SolverOptions {
        dt_scale: cfg.solver.dt_scale * 0.5,
        ..cfg.solver
    };
    let fine = solve_reference(spec, sd, eps, grid, &times, &half)?;
    let estimate = coarse
        .snapshots
        .iter()
        .zip(&fine.snapshots)
        .map(|(a, b)| window_sup(a, b, cfg.edge_nodes))
        .fold(0.0, f64::max);
    Ok(ReferenceRun {
        eps,
        solution: fine,
        estimate,
    })
}

/// Expansion whose profile grid covers every window of the sweep.
pub fn sweep_expansion(spec: &ProblemSpec, sd: &SpectralData, cfg: &SweepConfig) -> Result<ExpansionSet> {
    let kernel = KernelCoefficients::new(sd, &spec.speeds)?;
    let horizon = cfg.horizon + 2.0 * cfg.profile_dt;
    let mut extent = 0.0f64;
    for &eps in &cfg.eps {
        let (lo, hi) = spec.influence_window(eps, cfg.horizon);
        let (zl, zh) = zeta_span(kernel.b, eps, lo - eps, hi + eps, horizon);
        extent = extent.max(zl.abs()).max(zh.abs());
    }
    let opts = ExpansionOptions {
        dzeta: cfg.dzeta,
        zeta_extent: Some(extent + 1.0),
        horizon,
        snapshot_dt: cfg.profile_dt,
    };
    build_expansion(spec, sd, &opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMeta {
    pub eps: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub nodes: usize,
    pub dx: f64,
    pub dt: f64,
    pub snapshots: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub eps: f64,
    /// `sup |U_ref - U_N|` over the window, all snapshots and states.
    pub error: f64,
    pub error_time: f64,
    pub error_x: f64,
    pub reference_estimate: f64,
    pub defect: f64,
    pub defect_projected: f64,
    /// `error / eps^(N+1)`.
    pub ratio: f64,
}

/// Outcome of one sweep at fixed order `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub order: usize,
    pub entries: Vec<SweepEntry>,
    pub error_fit: SlopeFit,
    pub defect_fit: SlopeFit,
    pub defect_projected_fit: SlopeFit,
    /// `max error / eps^(N+1)`.
    pub c_hat: f64,
    pub grids: Vec<GridMeta>,
    /// Every reference estimate is within `oracle_fraction` of its error.
    pub oracle_separated: bool,
    /// `E` strictly decreases with `eps`.
    pub monotone: bool,
}

impl ConvergenceReport {
    pub fn ratio_spread(&self) -> f64 {
        let max = self.entries.iter().map(|e| e.ratio).fold(0.0, f64::max);
        let min = self.entries.iter().map(|e| e.ratio).fold(f64::INFINITY, f64::min);
        max / min
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "order,eps,error,defect,defect_projected,ratio,reference_estimate,error_t,error_x\n",
        );
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{},{:.6e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                self.order,
                e.eps,
                e.error,
                e.defect,
                e.defect_projected,
                e.ratio,
                e.reference_estimate,
                e.error_time,
                e.error_x
            );
        }
        s
    }
}

fn check_eps_list(eps: &[f64]) -> Result<()> {
    if eps.len() < 3 {
        return Err(Error::invalid("eps", "a sweep needs at least three values"));
    }
    if eps.windows(2).any(|w| !(w[1] < w[0])) || eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::invalid("eps", "values must lie in (0, 1) and strictly decrease"));
    }
    Ok(())
}

/// Measures `U_N` against precomputed reference runs.
pub fn error_sweep(
    spec: &ProblemSpec,
    set: &ExpansionSet,
    order: usize,
    runs: &[ReferenceRun],
    cfg: &SweepConfig,
) -> Result<ConvergenceReport> {
    if order > 1 {
        return Err(Error::Usage("order must be 0 or 1".into()));
    }
    let eps_list: Vec<f64> = runs.iter().map(|r| r.eps).collect();
    check_eps_list(&eps_list)?;
    let rows: Vec<Result<(SweepEntry, GridMeta)>> = runs
        .par_iter()
        .map(|run| sweep_entry(spec, set, order, run, cfg))
        .collect();
    let mut entries = Vec::with_capacity(rows.len());
    let mut grids = Vec::with_capacity(rows.len());
    for r in rows {
        let (e, g) = r?;
        entries.push(e);
        grids.push(g);
    }
    let fit = |f: &dyn Fn(&SweepEntry) -> f64| -> Result<SlopeFit> {
        let pairs: Vec<(f64, f64)> = entries.iter().map(|e| (e.eps, f(e).max(1e-300))).collect();
        fit_slope(&pairs)
    };
    let error_fit = fit(&|e| e.error)?;
    let defect_fit = fit(&|e| e.defect)?;
    let defect_projected_fit = fit(&|e| e.defect_projected)?;
    let c_hat = entries.iter().map(|e| e.ratio).fold(0.0, f64::max);
    let oracle_separated = entries
        .iter()
        .all(|e| e.reference_estimate <= cfg.oracle_fraction * e.error);
    let monotone = entries.windows(2).all(|w| w[1].error < w[0].error);
    Ok(ConvergenceReport {
        order,
        entries,
        error_fit,
        defect_fit,
        defect_projected_fit,
        c_hat,
        grids,
        oracle_separated,
        monotone,
    })
}

fn sweep_entry(
    spec: &ProblemSpec,
    set: &ExpansionSet,
    order: usize,
    run: &ReferenceRun,
    cfg: &SweepConfig,
) -> Result<(SweepEntry, GridMeta)> {
    let eps = run.eps;
    let sol = &run.solution;
    let grid = sol.grid;
    let (mut error, mut error_time, mut error_x) = (0.0f64, 0.0, 0.0);
    for (&t, reference) in sol.times.iter().zip(&sol.snapshots) {
        let approx = set.assemble(order, eps, grid, t)?;
        for i in cfg.edge_nodes..grid.len.saturating_sub(cfg.edge_nodes) {
            for j in 0..sol.states {
                let d = (approx.get(i, j) - reference.get(i, j)).abs();
                if d > error {
                    error = d;
                    error_time = t;
                    error_x = grid.at(i);
                }
            }
        }
    }
    let interior = UniformGrid::new(
        grid.at(cfg.edge_nodes),
        grid.step,
        grid.len.saturating_sub(2 * cfg.edge_nodes),
    )?;
    let hx = cfg.fd_fraction * eps;
    let ht = set.b().abs() * hx;
    let d = defect(
        |x, t| set.evaluate(order, eps, x, t),
        spec,
        &set.kernel,
        eps,
        interior,
        &cfg.defect_times(),
        hx,
        ht,
    )?;
    let entry = SweepEntry {
        eps,
        error,
        error_time,
        error_x,
        reference_estimate: run.estimate,
        defect: d.sup,
        defect_projected: d.sup_projected,
        ratio: error / eps.powi(order as i32 + 1),
    };
    let meta = GridMeta {
        eps,
        x_lo: grid.start,
        x_hi: grid.end(),
        nodes: grid.len,
        dx: grid.step,
        dt: sol.info.dt,
        snapshots: sol.times.len(),
    };
    Ok((entry, meta))
}

/// Reference runs for every `eps` of the sweep, in sweep order.
pub fn reference_runs(spec: &ProblemSpec, sd: &SpectralData, cfg: &SweepConfig) -> Result<Vec<ReferenceRun>> {
    check_eps_list(&cfg.eps)?;
    cfg.eps
        .par_iter()
        .map(|&eps| reference_run(spec, sd, eps, cfg))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremVerdict {
    pub pass: bool,
    pub slope: f64,
    pub required_slope: f64,
    pub ratio_spread: f64,
    pub c_hat: f64,
    pub reasons: Vec<String>,
}

/// Pass iff the error slope is at least `N + 1 - delta`, the ratios
/// `E / eps^(N+1)` stay within a factor 10, the sweep is monotone and the
/// reference solver is separated from the measured error.
pub fn theorem_check(report: &ConvergenceReport, delta: f64) -> TheoremVerdict {
    let required = report.order as f64 + 1.0 - delta;
    let slope = report.error_fit.slope;
    let spread = report.ratio_spread();
    let mut reasons = Vec::new();
    if !(slope >= required) {
        reasons.push(format!("slope {slope:.3} < {required:.3}"));
    }
    if !(spread <= 10.0) {
        reasons.push(format!("E/eps^(N+1) spread {spread:.3} > 10"));
    }
    if !report.monotone {
        reasons.push("inconclusive sweep: error is not decreasing in eps".into());
    }
    if !report.oracle_separated {
        reasons.push("invalid sweep: reference error estimate exceeds 0.1 E".into());
    }
    TheoremVerdict {
        pass: reasons.is_empty(),
        slope,
        required_slope: required,
        ratio_spread: spread,
        c_hat: report.c_hat,
        reasons,
    }
}

pub fn spec_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Key/value metadata written next to the error table.
pub fn manifest_rows(
    spec: &ProblemSpec,
    sd: &SpectralData,
    kernel: &KernelCoefficients,
    report: &ConvergenceReport,
    cfg: &SweepConfig,
) -> Vec<(String, String)> {
    let mut rows = vec![
        ("spec_normalized_sha256".to_string(), spec_hash(&spec.to_config_text())),
        ("order".into(), report.order.to_string()),
        ("seed".into(), spec.seed.map_or("none".into(), |s| s.to_string())),
        ("B".into(), format!("{:.15e}", kernel.b)),
        ("g".into(), format!("{:.15e}", kernel.g)),
        ("mu".into(), format!("{:.15e}", kernel.mu)),
        ("k".into(), format!("{:.15e}", sd.gap)),
        ("T0".into(), format!("{:.6e}", cfg.horizon)),
        ("scheme".into(), cfg.solver.scheme.name()),
        ("points_per_eps".into(), format!("{}", cfg.solver.points_per_eps)),
        ("cfl".into(), format!("{}", cfg.solver.cfl)),
        ("dzeta".into(), format!("{}", cfg.dzeta)),
        ("profile_dt".into(), format!("{}", cfg.profile_dt)),
        ("fd_fraction".into(), format!("{}", cfg.fd_fraction)),
        ("defect_t_min".into(), format!("{}", cfg.defect_t_min)),
        ("edge_nodes".into(), cfg.edge_nodes.to_string()),
        ("oracle_fraction".into(), format!("{}", cfg.oracle_fraction)),
    ];
    for g in &report.grids {
        rows.push((
            format!("grid_eps_{:.6e}", g.eps),
            format!(
                "x=[{:.6e};{:.6e}] nodes={} dx={:.6e} dt={:.6e} snapshots={}",
                g.x_lo, g.x_hi, g.nodes, g.dx, g.dt, g.snapshots
            ),
        ));
    }
    rows
}

fn plot_script(order: usize) -> String {
    format!(
        r#"#!/usr/bin/env python3
"""Log-log plot of errors.csv with a slope-{p} guide."""
import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(here, "errors.csv")
eps, err, dft = [], [], []
with open(path) as fh:
    for row in csv.DictReader(fh):
        eps.append(float(row["eps"]))
        err.append(float(row["error"]))
        dft.append(float(row["defect_projected"]))
guide = [err[0] * (e / eps[0]) ** {p} for e in eps]
plt.loglog(eps, err, "o-", label="sup error, N={n}")
plt.loglog(eps, dft, "s-", label="projected defect")
plt.loglog(eps, guide, "k--", label="slope {p}")
plt.xlabel("eps")
plt.ylabel("sup norm")
plt.legend()
plt.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
"#,
        p = order + 1,
        n = order
    )
}

/// Writes `errors.csv`, `manifest.csv` and `plot_errors.py` into `dir`.
pub fn emit_report(report: &ConvergenceReport, manifest: &[(String, String)], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let errors = dir.join("errors.csv");
    fs::write(&errors, report.to_csv())?;
    let mut m = String::from("key,value\n");
    for (k, v) in manifest {
        let _ = writeln!(m, "{k},{v}");
    }
    let man = dir.join("manifest.csv");
    fs::write(&man, m)?;
    let plot = dir.join("plot_errors.py");
    fs::write(&plot, plot_script(report.order))?;
    Ok(vec![errors, man, plot])
}

/// Full pipeline for one order: reference runs, expansion, sweep, verdict.
#[derive(Debug, Clone)]
pub struct Verification {
    pub report: ConvergenceReport,
    pub verdict: TheoremVerdict,
    pub manifest: Vec<(String, String)>,
}

pub fn verify(
    spec: &ProblemSpec,
    sd: &SpectralData,
    orders: &[usize],
    cfg: &SweepConfig,
    delta: f64,
) -> Result<Vec<Verification>> {
    if let Some(&bad) = orders.iter().find(|&&n| n > 1) {
        return Err(Error::Usage(format!("order must be 0 or 1 (got {bad})")));
    }
    let runs = reference_runs(spec, sd, cfg)?;
    let set = sweep_expansion(spec, sd, cfg)?;
    orders
        .iter()
        .map(|&order| {
            let report = error_sweep(spec, &set, order, &runs, cfg)?;
            let verdict = theorem_check(&report, delta);
            let manifest = manifest_rows(spec, sd, &set.kernel, &report, cfg);
            Ok(Verification {
                report,
                verdict,
                manifest,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{canonical_problem, Nonlinearity};
    use crate::spectral::eigendecompose;

    fn synthetic(order: usize, f: impl Fn(f64) -> f64) -> ConvergenceReport {
        let entries: Vec<SweepEntry> = [0.2, 0.1, 0.05, 0.025]
            .iter()
            .map(|&eps| SweepEntry {
                eps,
                error: f(eps),
                error_time: 0.0,
                error_x: 0.0,
                reference_estimate: 0.0,
                defect: eps,
                defect_projected: eps,
                ratio: f(eps) / eps.powi(order as i32 + 1),
            })
            .collect();
        let pairs: Vec<(f64, f64)> = entries.iter().map(|e| (e.eps, e.error)).collect();
        let fit = fit_slope(&pairs).unwrap();
        ConvergenceReport {
            order,
            c_hat: entries.iter().map(|e| e.ratio).fold(0.0, f64::max),
            monotone: true,
            oracle_separated: true,
            entries,
            error_fit: fit,
            defect_fit: fit,
            defect_projected_fit: fit,
            grids: Vec::new(),
        }
    }

    #[test]
    fn slope_of_exact_powers() {
        let f = fit_slope(&[(0.2, 0.2), (0.1, 0.1), (0.05, 0.05)]).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12 && f.residual < 1e-12);
        let f = fit_slope(&[(0.2, 0.12), (0.1, 0.03), (0.05, 0.0075)]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(fit_slope(&[(0.2, 0.1), (0.1, 0.0), (0.05, 0.01)]).is_err());
        assert!(fit_slope(&[(0.2, 0.1), (0.1, 0.05)]).is_err());
    }

    #[test]
    fn synthetic_verdicts() {
        let v = theorem_check(&synthetic(1, |e| 2.0 * e * e), 0.2);
        assert!(v.pass, "{v:?}");
        assert!((v.c_hat - 2.0).abs() < 1e-12);
        let v = theorem_check(&synthetic(0, |e| e.sqrt()), 0.2);
        assert!(!v.pass);
        assert!((v.slope - 0.5).abs() < 1e-12);
    }

    #[test]
    fn defect_of_trivial_fields() {
        let mut spec = canonical_problem();
        let sd = eigendecompose(&spec.operator, &spec.weights).unwrap();
        let k = KernelCoefficients::new(&sd, &spec.speeds).unwrap();
        let grid = UniformGrid::new(-1.0, 0.1, 21).unwrap();
        let zero = defect(|_, _| Ok(vec![0.0, 0.0]), &spec, &k, 0.1, grid, &[0.1, 0.2], 1e-3, 1e-3).unwrap();
        assert_eq!(zero.sup, 0.0);
        spec.nonlinearity = Nonlinearity::zero(2);
        let flat = defect(|_, _| Ok(vec![0.3, 0.3]), &spec, &k, 0.1, grid, &[0.1], 1e-3, 1e-3).unwrap();
        assert_eq!(flat.sup, 0.0);
        assert!(defect(|_, _| Ok(vec![0.0, 0.0]), &spec, &k, 0.1, grid, &[0.0], 1e-3, 1e-3).is_err());
    }

    #[test]
    fn snapshot_times_include_layer() {
        let spec = canonical_problem();
        let cfg = SweepConfig::for_spec(&spec);
        let t = cfg.snapshot_times(0.1);
        assert_eq!(t.len(), 15);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        assert!((t[0] - 0.0025).abs() < 1e-15);
        assert_eq!(cfg.defect_times().len(), 6);
    }
}
