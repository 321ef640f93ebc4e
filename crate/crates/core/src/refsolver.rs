//! Reference solver for `U_t + D U_x = L U / eps^2 + F(U)`.
//!
//! Two split schemes share one driver:
//!
//! * [`Scheme::Spectral`] on a periodic window: the linear part
//!   `L / eps^2 - i k D` is propagated exactly per Fourier mode and the
//!   pointwise reaction is Strang-split around it.
//! * [`Scheme::SemiLagrangian`] on a truncated line: exact shifts by
//!   `D_j dt / 2` with interpolation, exact relaxation `exp(L dt / 2 eps^2)`,
//!   and the reaction in the middle.
//!
//! Both are second order in `dt`. The reaction sub-step is classical RK4.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::model::{sample_initial, GridField, ProblemSpec, UniformGrid};
use crate::spectral::SpectralData;

pub const CFL: f64 = 0.9;
const BLOW_UP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    /// Four-point Lagrange.
    Cubic,
    /// Four-point Lagrange clamped to the two bracketing nodes (monotone).
    ClampedCubic,
    /// Two-point linear (monotone, first order).
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Zero,
    Clamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Spectral,
    SemiLagrangian(Interpolation, Edge),
}

impl Scheme {
    pub fn name(&self) -> String {
        match self {
            Scheme::Spectral => "fourier-exponential-strang".into(),
            Scheme::SemiLagrangian(i, e) => format!("semi-lagrangian-strang/{i:?}/{e:?}").to_lowercase(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub scheme: Scheme,
    /// Grid points per unit of `eps` when the solver chooses the grid.
    pub points_per_eps: f64,
    pub cfl: f64,
    /// Multiplier applied to the admissible time step (`<= 1`).
    pub dt_scale: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            scheme: Scheme::Spectral,
            points_per_eps: 16.0,
            cfl: CFL,
            dt_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeInfo {
    pub scheme: String,
    pub dx: f64,
    /// Largest step used.
    pub dt: f64,
    pub cfl: f64,
    pub splitting_order: u32,
}

/// Snapshots `U(., t_k)` of one solve.
#[derive(Debug, Clone)]
pub struct SpaceTimeField {
    pub grid: UniformGrid,
    pub states: usize,
    pub eps: f64,
    pub times: Vec<f64>,
    pub snapshots: Vec<GridField>,
    pub info: SchemeInfo,
}

impl SpaceTimeField {
    pub fn at(&self, t: f64) -> Option<&GridField> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * (1.0 + t.abs()))
            .map(|k| &self.snapshots[k])
    }

    /// Rows `t,x,state,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,x,state,value\n");
        for (t, f) in self.times.iter().zip(&self.snapshots) {
            for (i, x) in f.grid.points().enumerate() {
                for j in 0..self.states {
                    s.push_str(&format!("{t:.12e},{x:.12e},{j},{:.15e}\n", f.get(i, j)));
                }
            }
        }
        s
    }
}

/// Pointwise reaction `(x, t, u) -> du/dt`.
pub type Reaction<'a> = dyn Fn(f64, f64, &[f64], &mut [f64]) + Sync + 'a;

/// `u_t + diag(speeds) u_x = relax u + reaction(x, t, u)`.
pub struct TransportSystem<'a> {
    pub relax: DMatrix<f64>,
    pub speeds: Vec<f64>,
    pub reaction: Option<&'a Reaction<'a>>,
}

impl TransportSystem<'_> {
    fn states(&self) -> usize {
        self.speeds.len()
    }
}

/// Steps between consecutive targets, each interval split into equal steps
/// no longer than `dt_max`.
fn plan_steps(t0: f64, targets: &[f64], dt_max: f64) -> Result<Vec<(usize, f64)>> {
    let mut prev = t0;
    let mut plan = Vec::with_capacity(targets.len());
    for &t in targets {
        if !(t >= prev) {
            return Err(Error::invalid("snapshot_times", "must be nondecreasing and >= start"));
        }
        let span = t - prev;
        let n = (span / dt_max * (1.0 - 1e-12)).ceil().max(if span > 0.0 { 1.0 } else { 0.0 });
        let n = n as usize;
        plan.push((n, if n > 0 { span / n as f64 } else { 0.0 }));
        prev = t;
    }
    Ok(plan)
}

fn rk4_pointwise(
    reaction: &Reaction<'_>,
    x: f64,
    t: f64,
    h: f64,
    u: &mut [f64],
    work: &mut [Vec<f64>; 5],
) {
    let [k1, k2, k3, k4, tmp] = work;
    reaction(x, t, u, k1);
    for ((t_, a), k) in tmp.iter_mut().zip(u.iter()).zip(k1.iter()) {
        *t_ = a + 0.5 * h * k;
    }
    reaction(x, t + 0.5 * h, tmp, k2);
    for ((t_, a), k) in tmp.iter_mut().zip(u.iter()).zip(k2.iter()) {
        *t_ = a + 0.5 * h * k;
    }
    reaction(x, t + 0.5 * h, tmp, k3);
    for ((t_, a), k) in tmp.iter_mut().zip(u.iter()).zip(k3.iter()) {
        *t_ = a + h * k;
    }
    reaction(x, t + h, tmp, k4);
    for (j, a) in u.iter_mut().enumerate() {
        *a += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
}

fn react(field: &mut GridField, reaction: Option<&Reaction<'_>>, t: f64, h: f64) {
    let Some(r) = reaction else { return };
    let m = field.states;
    let mut work: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; m]);
    let grid = field.grid;
    for (i, row) in field.values.chunks_mut(m).enumerate() {
        rk4_pointwise(r, grid.at(i), t, h, row, &mut work);
    }
}

fn check_finite(field: &GridField, t: f64) -> Result<()> {
    if field.values.iter().all(|v| v.is_finite() && v.abs() < BLOW_UP) {
        Ok(())
    } else {
        Err(Error::SolverBlowUp { t })
    }
}

struct SpectralStepper {
    n: usize,
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    wavenumbers: Vec<f64>,
    buffers: Vec<Vec<Complex64>>,
    scratch: Vec<Complex64>,
}

impl SpectralStepper {
    fn new(grid: UniformGrid, m: usize) -> Self {
        let n = grid.len;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let period = n as f64 * grid.step;
        let wavenumbers = (0..n)
            .map(|i| {
                let k = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
                2.0 * std::f64::consts::PI * k / period
            })
            .collect();
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            n,
            m,
            forward,
            inverse,
            wavenumbers,
            buffers: vec![vec![Complex64::new(0.0, 0.0); n]; m],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    /// `exp(h (relax - i k D))` for every wavenumber.
    fn propagators(&self, sys: &TransportSystem<'_>, h: f64) -> Vec<DMatrix<Complex64>> {
        let m = self.m;
        let base: DMatrix<Complex64> = sys.relax.map(|v| Complex64::new(v * h, 0.0));
        self.wavenumbers
            .iter()
            .map(|&k| {
                let mut a = base.clone();
                for j in 0..m {
                    a[(j, j)] -= Complex64::new(0.0, k * sys.speeds[j] * h);
                }
                a.exp()
            })
            .collect()
    }

    fn linear(&mut self, field: &mut GridField, props: &[DMatrix<Complex64>]) {
        let (n, m) = (self.n, self.m);
        for j in 0..m {
            let buf = &mut self.buffers[j];
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(field.values[i * m + j], 0.0);
            }
            self.forward.process_with_scratch(buf, &mut self.scratch);
        }
        let mut v = vec![Complex64::new(0.0, 0.0); m];
        for (i, p) in props.iter().enumerate() {
            for (r, slot) in v.iter_mut().enumerate() {
                *slot = (0..m).map(|c| p[(r, c)] * self.buffers[c][i]).sum();
            }
            for (r, val) in v.iter().enumerate() {
                self.buffers[r][i] = *val;
            }
        }
        let scale = 1.0 / n as f64;
        for j in 0..m {
            let buf = &mut self.buffers[j];
            self.inverse.process_with_scratch(buf, &mut self.scratch);
            for (i, b) in buf.iter().enumerate() {
                field.values[i * m + j] = b.re * scale;
            }
        }
    }
}

struct ShiftWeights {
    offset: isize,
    weights: [f64; 4],
}

fn shift_weights(shift_nodes: f64, interp: Interpolation) -> ShiftWeights {
    // Value at node i comes from position i - shift_nodes.
    let s = -shift_nodes;
    let base = s.floor();
    let th = s - base;
    let weights = match interp {
        Interpolation::Linear => [0.0, 1.0 - th, th, 0.0],
        _ => [
            -th * (th - 1.0) * (th - 2.0) / 6.0,
            (th + 1.0) * (th - 1.0) * (th - 2.0) / 2.0,
            -(th + 1.0) * th * (th - 2.0) / 2.0,
            (th + 1.0) * th * (th - 1.0) / 6.0,
        ],
    };
    ShiftWeights {
        offset: base as isize,
        weights,
    }
}

fn advect(field: &mut GridField, speeds: &[f64], h: f64, interp: Interpolation, edge: Edge, work: &mut Vec<f64>) {
    let n = field.grid.len;
    let m = field.states;
    let dx = field.grid.step;
    work.resize(n, 0.0);
    for (j, &d) in speeds.iter().enumerate() {
        let sw = shift_weights(d * h / dx, interp);
        let fetch = |k: isize, vals: &[f64]| -> f64 {
            if k >= 0 && (k as usize) < n {
                vals[k as usize * m + j]
            } else {
                match edge {
                    Edge::Zero => 0.0,
                    Edge::Clamp => vals[k.clamp(0, n as isize - 1) as usize * m + j],
                }
            }
        };
        for (i, out) in work.iter_mut().enumerate() {
            let c = i as isize + sw.offset;
            let mut v = 0.0;
            for (q, w) in sw.weights.iter().enumerate() {
                if *w != 0.0 {
                    v += w * fetch(c - 1 + q as isize, &field.values);
                }
            }
            if interp == Interpolation::ClampedCubic {
                let a = fetch(c, &field.values);
                let b = fetch(c + 1, &field.values);
                v = v.clamp(a.min(b), a.max(b));
            }
            *out = v;
        }
        for (i, v) in work.iter().enumerate() {
            field.values[i * m + j] = *v;
        }
    }
}

fn relax(field: &mut GridField, prop: &DMatrix<f64>) {
    let m = field.states;
    let mut tmp = vec![0.0; m];
    for row in field.values.chunks_mut(m) {
        for (r, t) in tmp.iter_mut().enumerate() {
            *t = (0..m).map(|c| prop[(r, c)] * row[c]).sum();
        }
        row.copy_from_slice(&tmp);
    }
}

/// Observer called with `(t, field)` at the start and after every step.
pub type Observer<'a> = dyn FnMut(f64, &GridField) + 'a;

/// Integrates from `t0` and returns the fields at `targets`.
pub fn integrate(
    sys: &TransportSystem<'_>,
    scheme: Scheme,
    initial: GridField,
    t0: f64,
    targets: &[f64],
    dt_max: f64,
    mut observer: Option<&mut Observer<'_>>,
) -> Result<(Vec<GridField>, f64)> {
    if initial.states != sys.states() {
        return Err(Error::invalid("initial", "state count mismatch"));
    }
    if !(dt_max > 0.0) {
        return Err(Error::invalid("dt", "time step must be positive"));
    }
    let plan = plan_steps(t0, targets, dt_max)?;
    let mut field = initial;
    let mut t = t0;
    let mut out = Vec::with_capacity(targets.len());
    let mut largest = 0.0f64;
    if let Some(obs) = observer.as_mut() {
        obs(t, &field);
    }
    match scheme {
        Scheme::Spectral => {
            let mut stepper = SpectralStepper::new(field.grid, sys.states());
            for (&(steps, h), &target) in plan.iter().zip(targets) {
                if steps > 0 {
                    let props = stepper.propagators(sys, h);
                    for s in 0..steps {
                        react(&mut field, sys.reaction, t, 0.5 * h);
                        stepper.linear(&mut field, &props);
                        react(&mut field, sys.reaction, t + 0.5 * h, 0.5 * h);
                        t = if s + 1 == steps { target } else { t + h };
                        check_finite(&field, t)?;
                        if let Some(obs) = observer.as_mut() {
                            obs(t, &field);
                        }
                    }
                    largest = largest.max(h);
                }
                out.push(field.clone());
            }
        }
        Scheme::SemiLagrangian(interp, edge) => {
            let mut work = Vec::new();
            for (&(steps, h), &target) in plan.iter().zip(targets) {
                if steps > 0 {
                    let half = (&sys.relax * (0.5 * h)).exp();
                    for s in 0..steps {
                        advect(&mut field, &sys.speeds, 0.5 * h, interp, edge, &mut work);
                        relax(&mut field, &half);
                        react(&mut field, sys.reaction, t, h);
                        relax(&mut field, &half);
                        advect(&mut field, &sys.speeds, 0.5 * h, interp, edge, &mut work);
                        t = if s + 1 == steps { target } else { t + h };
                        check_finite(&field, t)?;
                        if let Some(obs) = observer.as_mut() {
                            obs(t, &field);
                        }
                    }
                    largest = largest.max(h);
                }
                out.push(field.clone());
            }
        }
    }
    Ok((out, largest))
}

/// Admissible step: transport CFL and the reaction bound `0.1 / (1 + max|F'|)`.
pub fn admissible_dt(spec: &ProblemSpec, dx: f64, cfl: f64) -> f64 {
    let amp = 2.0 * spec.decay_certificate().envelope.max(1e-300);
    let transport = cfl * dx / spec.max_abs_speed();
    transport.min(0.1 / (1.0 + spec.nonlinearity.lipschitz(amp)))
}

/// Grid over `[lo, hi]` with spacing at most `eps / points_per_eps`; the
/// spectral scheme gets a power-of-two node count.
pub fn reference_grid(lo: f64, hi: f64, eps: f64, opts: &SolverOptions) -> Result<UniformGrid> {
    let dx = eps / opts.points_per_eps;
    match opts.scheme {
        Scheme::Spectral => {
            let n = ((hi - lo) / dx).ceil().max(8.0) as usize;
            let n = n.next_power_of_two();
            UniformGrid::new(lo, (hi - lo) / n as f64, n)
        }
        Scheme::SemiLagrangian(..) => UniformGrid::covering(lo, hi, dx),
    }
}

/// Solves `eps^2 (U_t + D U_x) = L U + eps^2 F(U)`, `U(x, 0) = w(x / eps)`.
pub fn solve_reference(
    spec: &ProblemSpec,
    modes: &SpectralData,
    eps: f64,
    grid: UniformGrid,
    snapshot_times: &[f64],
    opts: &SolverOptions,
) -> Result<SpaceTimeField> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid("eps", "must lie in (0, 1)"));
    }
    let xi_grid = UniformGrid::new(grid.start / eps, grid.step / eps, grid.len)?;
    let mut initial = sample_initial(spec, modes, xi_grid)?;
    initial.grid = grid;
    let f = spec.nonlinearity.clone();
    let reaction = move |_x: f64, _t: f64, u: &[f64], out: &mut [f64]| {
        for (j, o) in out.iter_mut().enumerate() {
            *o = f.eval(j, u[j]);
        }
    };
    let sys = TransportSystem {
        relax: &spec.operator / (eps * eps),
        speeds: spec.speeds.clone(),
        reaction: if spec.nonlinearity.is_zero() { None } else { Some(&reaction) },
    };
    let dt_max = admissible_dt(spec, grid.step, opts.cfl) * opts.dt_scale;
    let (snapshots, dt) = integrate(&sys, opts.scheme, initial, 0.0, snapshot_times, dt_max, None)?;
    Ok(SpaceTimeField {
        grid,
        states: spec.states(),
        eps,
        times: snapshot_times.to_vec(),
        snapshots,
        info: SchemeInfo {
            scheme: opts.scheme.name(),
            dx: grid.step,
            dt,
            cfl: opts.cfl,
            splitting_order: 2,
        },
    })
}

/// Observed order from successive refinements.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservedOrder {
    /// Differences at roundoff level on every level.
    Exact,
    Order(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub dx: Vec<f64>,
    /// Sup difference between consecutive levels on the coarse nodes.
    pub differences: Vec<f64>,
    pub orders: Vec<f64>,
    pub order: ObservedOrder,
}

/// Richardson estimate of the scheme order from `levels >= 3` solves at
/// `t_end`, refining `dx` and `dt` together by 2 from `dx = eps / 8`.
pub fn self_convergence(
    spec: &ProblemSpec,
    modes: &SpectralData,
    eps: f64,
    levels: usize,
    t_end: f64,
    opts: &SolverOptions,
) -> Result<ConvergenceReport> {
    if levels < 3 {
        return Err(Error::invalid("refinements", "at least three grid levels are needed"));
    }
    let (lo, hi) = spec.influence_window(eps, t_end);
    let coarse_opts = SolverOptions {
        points_per_eps: 8.0,
        ..*opts
    };
    let coarse = reference_grid(lo, hi, eps, &coarse_opts)?;
    let coarse_dt = admissible_dt(spec, coarse.step, opts.cfl) * opts.dt_scale;
    let mut finals = Vec::with_capacity(levels);
    let mut dxs = Vec::with_capacity(levels);
    for l in 0..levels {
        let r = 1usize << l;
        let len = match opts.scheme {
            Scheme::Spectral => coarse.len * r,
            Scheme::SemiLagrangian(..) => (coarse.len - 1) * r + 1,
        };
        let grid = UniformGrid::new(coarse.start, coarse.step / r as f64, len)?;
        let xi_grid = UniformGrid::new(grid.start / eps, grid.step / eps, grid.len)?;
        let mut initial = sample_initial(spec, modes, xi_grid)?;
        initial.grid = grid;
        let f = spec.nonlinearity.clone();
        let reaction = move |_x: f64, _t: f64, u: &[f64], out: &mut [f64]| {
            for (j, o) in out.iter_mut().enumerate() {
                *o = f.eval(j, u[j]);
            }
        };
        let sys = TransportSystem {
            relax: &spec.operator / (eps * eps),
            speeds: spec.speeds.clone(),
            reaction: if spec.nonlinearity.is_zero() { None } else { Some(&reaction) },
        };
        let (mut fields, _) = integrate(&sys, opts.scheme, initial, 0.0, &[t_end], coarse_dt / r as f64, None)?;
        let fine = fields.pop().expect("one target");
        let mut on_coarse = GridField::zeros(coarse, spec.states());
        for i in 0..coarse.len {
            for j in 0..spec.states() {
                on_coarse.set(i, j, fine.get(i * r, j));
            }
        }
        finals.push(on_coarse);
        dxs.push(grid.step);
    }
    convergence_from_levels(&finals, dxs)
}

/// Order estimate from solutions sampled on a common coarse grid.
pub fn convergence_from_levels(levels: &[GridField], dx: Vec<f64>) -> Result<ConvergenceReport> {
    let scale = levels
        .iter()
        .map(GridField::sup_norm)
        .fold(0.0, f64::max)
        .max(1e-300);
    let differences: Vec<f64> = levels
        .windows(2)
        .map(|w| {
            w[0].values
                .iter()
                .zip(&w[1].values)
                .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()))
        })
        .collect();
    let roundoff = 1e-12 * scale;
    if differences.iter().all(|&d| d <= roundoff) {
        return Ok(ConvergenceReport {
            dx,
            differences,
            orders: Vec::new(),
            order: ObservedOrder::Exact,
        });
    }
    if differences.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Inconclusive(format!(
            "level differences {differences:?} are not decreasing"
        )));
    }
    let orders: Vec<f64> = differences.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let order = *orders.last().expect("at least two differences");
    Ok(ConvergenceReport {
        dx,
        differences,
        orders,
        order: ObservedOrder::Order(order),
    })
}
