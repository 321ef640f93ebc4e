//! Surge/boundary-function expansion
//!
//! `U_N(x, t) = sum_{i <= N} eps^i (s_i(zeta, t) + p_i(xi, tau))` with
//! `zeta = (t - B x) / eps`, `xi = x / eps`, `tau = t / eps^2`, for `N` in `{0, 1}`.
//!
//! Surge terms:
//!
//! * `s0 = phi0 h0`
//! * `s1 = -B phi0_zeta G(Psi0 h0) + phi1 h0`
//!
//! where `phi0_t = mu phi0_zz + Fbar(phi0)` with `mu = -B^2 g` and
//! `Fbar(phi) = (F(phi h0), h0*)`, and `phi1` solves the linearization about
//! `phi0` forced by the order-`eps^3` solvability source `rho1`.
//!
//! Boundary terms solve `p0_tau = L p0` and `p1_tau = L p1 - D p0_xi`; the
//! initial value of `phi1` is chosen so that `p1` carries no kernel component
//! as `tau -> infinity`.

pub mod boundary;
pub mod profile;

pub use boundary::BoundaryTerms;
pub use profile::{
    solve_phi0, solve_phi1, solve_profiles, Profile, ProfileEquation, ProfileGrids,
    SourceCoefficients,
};

use crate::error::{Error, Result};
use crate::model::{GridField, Nonlinearity, ProblemSpec, UniformGrid};
use crate::spectral::{pseudo_inverse_apply, KernelCoefficients, SpectralData};

#[derive(Debug, Clone, Copy)]
pub struct ExpansionOptions {
    pub dzeta: f64,
    /// Half-width of the symmetric `zeta` grid; `None` sizes it from the data.
    pub zeta_extent: Option<f64>,
    pub horizon: f64,
    pub snapshot_dt: f64,
}

impl ExpansionOptions {
    pub fn new(horizon: f64) -> Self {
        Self {
            dzeta: 0.01,
            zeta_extent: None,
            horizon,
            snapshot_dt: 0.01,
        }
    }
}

/// Order-`eps^3` source coefficients for `phi1`.
///
/// With `a = Psi0 G(Psi0 h0)`, `e1 = c1 h0`, `e2 = c2 h0^2` and `P` the
/// projection removing the `h0` component:
///
/// * `third = B^3 (Psi0 G(P a), h0*)`
/// * `first = -B [(c1 G(Psi0 h0), h0*) + (Psi0 G(P e1), h0*)]`
/// * `quadratic = -B [(c2 h0 G(Psi0 h0), h0*) + (Psi0 G(P e2), h0*)]`
pub fn source_coefficients(
    sd: &SpectralData,
    kernel: &KernelCoefficients,
    f: &Nonlinearity,
) -> Result<SourceCoefficients> {
    let k = kernel;
    let b = k.b;
    let mul = |a: &[f64], c: &[f64]| -> Vec<f64> { a.iter().zip(c).map(|(x, y)| x * y).collect() };
    let through = |v: &[f64]| -> Result<f64> {
        let g = pseudo_inverse_apply(sd, &k.project_out(sd, v))?;
        Ok(sd.inner(&mul(&k.psi0, &g), &k.h0_star))
    };
    let a = mul(&k.psi0, &k.corrector);
    let e1 = mul(&f.linear, &k.h0);
    let e2 = mul(&mul(&f.quadratic, &k.h0), &k.h0);
    let third = b * b * b * through(&a)?;
    let first = -b * (sd.inner(&mul(&f.linear, &k.corrector), &k.h0_star) + through(&e1)?);
    let quadratic = -b
        * (sd.inner(&mul(&mul(&f.quadratic, &k.h0), &k.corrector), &k.h0_star) + through(&e2)?);
    let clean = |v: f64| if v.abs() < 1e-14 { 0.0 } else { v };
    Ok(SourceCoefficients {
        first: clean(first),
        quadratic: clean(quadratic),
        third: clean(third),
    })
}

/// `Fbar(phi) = (F(phi h0), h0*) = linear phi + quadratic phi^2`.
pub fn projected_nonlinearity(sd: &SpectralData, kernel: &KernelCoefficients, f: &Nonlinearity) -> (f64, f64) {
    let e1: Vec<f64> = f.linear.iter().zip(&kernel.h0).map(|(c, h)| c * h).collect();
    let e2: Vec<f64> = f
        .quadratic
        .iter()
        .zip(&kernel.h0)
        .map(|(c, h)| c * h * h)
        .collect();
    (sd.inner(&e1, &kernel.h0_star), sd.inner(&e2, &kernel.h0_star))
}

/// Built expansion terms; immutable and shareable once constructed.
#[derive(Debug, Clone)]
pub struct ExpansionSet {
    pub kernel: KernelCoefficients,
    pub gap: f64,
    pub equation: ProfileEquation,
    pub phi0: Profile,
    pub phi1: Profile,
    pub dphi0: Profile,
    pub boundary: BoundaryTerms,
    pub states: usize,
}

/// `zeta` range swept by `x in [x_lo, x_hi]`, `t in [0, t_max]`.
pub fn zeta_span(b: f64, eps: f64, x_lo: f64, x_hi: f64, t_max: f64) -> (f64, f64) {
    let corners = [
        (0.0 - b * x_lo) / eps,
        (0.0 - b * x_hi) / eps,
        (t_max - b * x_lo) / eps,
        (t_max - b * x_hi) / eps,
    ];
    (
        corners.iter().copied().fold(f64::INFINITY, f64::min),
        corners.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    )
}

pub fn build_expansion(spec: &ProblemSpec, sd: &SpectralData, opts: &ExpansionOptions) -> Result<ExpansionSet> {
    let kernel = KernelCoefficients::new(sd, &spec.speeds)?;
    if !(kernel.mu > 0.0) {
        return Err(Error::Spectral(format!(
            "Condition III violated: g = {:e}, the profile equation is not parabolic",
            kernel.g
        )));
    }
    let boundary = build_boundary_terms(spec, sd, &kernel)?;
    let (linear, quadratic) = projected_nonlinearity(sd, &kernel, &spec.nonlinearity);
    let equation = ProfileEquation {
        mu: kernel.mu,
        linear,
        quadratic,
        source: source_coefficients(sd, &kernel, &spec.nonlinearity)?,
    };
    let b = kernel.b;
    let extent = opts.zeta_extent.unwrap_or_else(|| {
        let (lo, hi) = spec.data_support();
        b.abs() * lo.abs().max(hi.abs()) + 10.0 * (kernel.mu * opts.horizon).sqrt() + 1.0
    });
    let grids = ProfileGrids::symmetric(extent, opts.dzeta, opts.horizon, opts.snapshot_dt)?;
    let w0 = spec.initial.first().cloned().unwrap_or_default();
    let phi0_init = move |z: f64| w0.value(-z / b);
    let bt = boundary.clone();
    let phi1_init = move |z: f64| bt.phi1_matching(-z / b);
    let (phi0, phi1) = solve_profiles(&equation, &grids, &phi0_init, Some(&phi1_init))?;
    let dphi0 = phi0.zeta_derivative();
    Ok(ExpansionSet {
        gap: sd.gap,
        kernel,
        equation,
        phi0,
        phi1,
        dphi0,
        boundary,
        states: spec.states(),
    })
}

pub fn build_boundary_terms(spec: &ProblemSpec, sd: &SpectralData, kernel: &KernelCoefficients) -> Result<BoundaryTerms> {
    BoundaryTerms::new(spec, sd, kernel)
}

/// `s0 = phi0 h0`, `s1 = -B dphi0 G(Psi0 h0) + phi1 h0` from profile values.
pub fn build_surge_terms(
    kernel: &KernelCoefficients,
    phi0: f64,
    dphi0: f64,
    phi1: f64,
) -> (Vec<f64>, Vec<f64>) {
    let s0 = kernel.h0.iter().map(|h| phi0 * h).collect();
    let s1 = kernel
        .h0
        .iter()
        .zip(&kernel.corrector)
        .map(|(h, c)| -kernel.b * dphi0 * c + phi1 * h)
        .collect();
    (s0, s1)
}

impl ExpansionSet {
    pub fn b(&self) -> f64 {
        self.kernel.b
    }

    pub fn mu(&self) -> f64 {
        self.kernel.mu
    }

    pub fn surge_terms(&self, zeta: f64, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok(build_surge_terms(
            &self.kernel,
            self.phi0.eval(zeta, t)?,
            self.dphi0.eval(zeta, t)?,
            self.phi1.eval(zeta, t)?,
        ))
    }

    /// `U_N(x, t)` at a single point.
    pub fn evaluate(&self, order: usize, eps: f64, x: f64, t: f64) -> Result<Vec<f64>> {
        if order > 1 {
            return Err(Error::Usage("order must be 0 or 1".into()));
        }
        let zeta = (t - self.b() * x) / eps;
        let xi = x / eps;
        let tau = t / (eps * eps);
        let phi0 = self.phi0.eval(zeta, t)?;
        let mut u: Vec<f64> = self.kernel.h0.iter().map(|h| phi0 * h).collect();
        for (a, p) in u.iter_mut().zip(self.boundary.p0(xi, tau)) {
            *a += p;
        }
        if order == 1 {
            let (_, s1) = build_surge_terms(
                &self.kernel,
                phi0,
                self.dphi0.eval(zeta, t)?,
                self.phi1.eval(zeta, t)?,
            );
            for ((a, s), p) in u.iter_mut().zip(s1).zip(self.boundary.p1(xi, tau)) {
                *a += eps * (s + p);
            }
        }
        Ok(u)
    }

    /// `U_N(., t, .)` on `x_grid`.
    pub fn assemble(&self, order: usize, eps: f64, x_grid: UniformGrid, t: f64) -> Result<GridField> {
        if order > 1 {
            return Err(Error::Usage("order must be 0 or 1".into()));
        }
        let (lo, hi) = zeta_span(self.b(), eps, x_grid.start, x_grid.end(), t);
        self.phi0.covers(lo, hi, t, t)?;
        let mut field = GridField::zeros(x_grid, self.states);
        for (i, x) in x_grid.points().enumerate() {
            let u = self.evaluate(order, eps, x, t)?;
            field.values[i * self.states..(i + 1) * self.states].copy_from_slice(&u);
        }
        Ok(field)
    }
}

/// `U_N` on `x_grid` at time `t`.
pub fn assemble_un(set: &ExpansionSet, order: usize, eps: f64, x_grid: UniformGrid, t: f64) -> Result<GridField> {
    set.assemble(order, eps, x_grid, t)
}
