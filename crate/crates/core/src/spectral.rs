//! Eigenstructure of the relaxation operator and the kernel coefficients
//! derived from it: the zero-mode pair, the pseudo-inverse, the drift `B`,
//! the multiplier `Psi0` and the effective diffusion `g`, `mu = -B^2 g`.
//!
//! Adjoints are taken with respect to the weighted bilinear product
//! `(a, b) = sum_j w_j a_j b_j`, so `L* = W^-1 L^T W`.

use std::fmt;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::ProblemSpec;

pub const TOL_ZERO: f64 = 1e-9;
pub const TOL_ORTHO: f64 = 1e-10;
pub const TOL_PAIR: f64 = 1e-9;
pub const TOL_DISTINCT: f64 = 1e-8;
pub const TOL_SOLV: f64 = 1e-9;

/// Eigenvalues and biorthonormal right/left mode families of `L`.
#[derive(Debug, Clone)]
pub struct SpectralData {
    /// `lambda_0 = 0` first, the rest by decreasing real part.
    pub eigenvalues: Vec<Complex64>,
    /// `right[i][p] = h_i(p)`, unit max-norm.
    pub right: Vec<Vec<Complex64>>,
    /// `left[i][p] = h_i*(p)`, with `(h_i, h_j*) = delta_ij`.
    pub left: Vec<Vec<Complex64>>,
    /// `k = -max Re lambda_i` over `i >= 1`.
    pub gap: f64,
    /// Modulus of the eigenvalue declared zero.
    pub zero_residual: f64,
    pub weights: Vec<f64>,
    pub operator: DMatrix<f64>,
    bordered: Option<LU<f64, Dyn, Dyn>>,
}

fn max_row_sum(l: &DMatrix<f64>) -> f64 {
    l.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn normalize_max(v: &mut [Complex64]) {
    let peak = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .copied()
        .find(|c| c.norm() >= peak * (1.0 - 1e-12))
        .unwrap_or(Complex64::new(1.0, 0.0));
    for c in v.iter_mut() {
        *c /= pivot;
    }
}

/// Inverse iteration for the eigenvector of `a` belonging to `lambda`.
fn eigenvector(a: &DMatrix<Complex64>, lambda: Complex64, scale: f64) -> Option<Vec<Complex64>> {
    let m = a.nrows();
    let delta = 1e-10 * scale.max(1.0);
    let shift = if lambda.im == 0.0 {
        lambda + delta
    } else {
        lambda + Complex64::new(delta, delta)
    };
    let shifted = a - DMatrix::<Complex64>::identity(m, m) * shift;
    let lu = shifted.lu();
    let mut v = DVector::from_fn(m, |j, _| Complex64::new(1.0 + 0.1 * j as f64, 0.0));
    for _ in 0..4 {
        v = lu.solve(&v)?;
        let n = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if !n.is_finite() || n == 0.0 {
            return None;
        }
        v /= Complex64::new(n, 0.0);
    }
    let mut out: Vec<Complex64> = v.iter().copied().collect();
    normalize_max(&mut out);
    if lambda.im == 0.0 {
        for c in out.iter_mut() {
            c.im = 0.0;
        }
    }
    Some(out)
}

/// Full eigendecomposition of `L` with the left family taken as the adjoint
/// eigenvectors under the weighted product.
pub fn eigendecompose(l: &DMatrix<f64>, weights: &[f64]) -> Result<SpectralData> {
    let m = l.nrows();
    if l.ncols() != m || weights.len() != m || m == 0 {
        return Err(Error::Spectral("operator/weight dimension mismatch".into()));
    }
    let norm = max_row_sum(l);
    let scale = if norm > 0.0 { norm } else { 1.0 };
    let raw: Vec<Complex64> = l.complex_eigenvalues().iter().copied().collect();

    for i in 0..m {
        for j in i + 1..m {
            if (raw[i] - raw[j]).norm() <= TOL_DISTINCT * scale {
                return Err(Error::Spectral(format!(
                    "Condition V violated: repeated eigenvalue {:.6e}{:+.6e}i",
                    raw[i].re, raw[i].im
                )));
            }
        }
    }
    let zero_idx = (0..m)
        .min_by(|&a, &b| raw[a].norm().total_cmp(&raw[b].norm()))
        .unwrap();
    let zero_residual = raw[zero_idx].norm();
    if zero_residual > TOL_ZERO * scale {
        return Err(Error::Spectral(format!(
            "no zero mode: smallest |lambda| = {zero_residual:e}"
        )));
    }
    let mut rest: Vec<Complex64> = (0..m).filter(|&i| i != zero_idx).map(|i| raw[i]).collect();
    rest.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
    let mut eigenvalues = vec![Complex64::new(0.0, 0.0)];
    eigenvalues.extend(rest);

    let lc = l.map(|v| Complex64::new(v, 0.0));
    let mut right = Vec::with_capacity(m);
    for (i, &lambda) in eigenvalues.iter().enumerate() {
        let target = if i == 0 { raw[zero_idx] } else { lambda };
        let v = eigenvector(&lc, target, scale).ok_or_else(|| {
            Error::Spectral(format!("eigenvector iteration failed for mode {i}"))
        })?;
        right.push(v);
    }
    let vmat = DMatrix::from_fn(m, m, |p, i| right[i][p]);
    let inv = vmat.clone().lu().try_inverse().ok_or_else(|| {
        Error::Spectral("Condition V violated: eigenvectors are not independent".into())
    })?;
    let left: Vec<Vec<Complex64>> = (0..m)
        .map(|i| (0..m).map(|p| inv[(i, p)] / weights[p]).collect())
        .collect();

    let gap = -eigenvalues[1..]
        .iter()
        .map(|c| c.re)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut sd = SpectralData {
        eigenvalues,
        right,
        left,
        gap,
        zero_residual,
        weights: weights.to_vec(),
        operator: l.clone(),
        bordered: None,
    };
    if let Ok((h0, h0s)) = zero_mode(&sd) {
        let mut b = DMatrix::<f64>::zeros(m + 1, m + 1);
        b.view_mut((0, 0), (m, m)).copy_from(l);
        for p in 0..m {
            b[(p, m)] = h0[p];
            b[(m, p)] = weights[p] * h0s[p];
        }
        sd.bordered = Some(b.lu());
    }
    Ok(sd)
}

impl SpectralData {
    pub fn states(&self) -> usize {
        self.weights.len()
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * x * y)
            .sum()
    }

    pub fn inner_c(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| x * y * *w)
            .sum()
    }

    pub fn is_real_mode(&self, i: usize) -> bool {
        self.eigenvalues[i].im == 0.0
    }

    /// Real right mode `h_i`; errors for a mode belonging to a complex eigenvalue.
    pub fn real_right_mode(&self, i: usize) -> Result<Vec<f64>> {
        if i >= self.states() {
            return Err(Error::Spectral(format!("mode {i} does not exist")));
        }
        if !self.is_real_mode(i) {
            return Err(Error::Spectral(format!(
                "mode {i} belongs to a complex eigenvalue; initial data must use real modes"
            )));
        }
        Ok(self.right[i].iter().map(|c| c.re).collect())
    }

    pub fn real_left_mode(&self, i: usize) -> Result<Vec<f64>> {
        self.real_right_mode(i)?;
        Ok(self.left[i].iter().map(|c| c.re).collect())
    }

    /// `max |(h_i, h_j*) - delta_ij|`.
    pub fn biorthogonality_residual(&self) -> f64 {
        let m = self.states();
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                let p = self.inner_c(&self.right[i], &self.left[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p - target).norm());
            }
        }
        worst
    }

    /// `|(h0, h0*)|` with both vectors scaled to unit max-norm.
    pub fn zero_pairing(&self) -> f64 {
        let peak_r = self.right[0].iter().map(|c| c.norm()).fold(0.0, f64::max);
        let peak_l = self.left[0].iter().map(|c| c.norm()).fold(0.0, f64::max);
        if peak_r == 0.0 || peak_l == 0.0 {
            return 0.0;
        }
        self.inner_c(&self.right[0], &self.left[0]).norm() / (peak_r * peak_l)
    }
}

/// Zero-mode pair `(h0, h0*)` with `(h0, h0*) = 1` and `h0` of unit max-norm,
/// oriented so its largest component is positive.
pub fn zero_mode(sd: &SpectralData) -> Result<(Vec<f64>, Vec<f64>)> {
    if sd.zero_pairing() <= TOL_PAIR {
        return Err(Error::Spectral(format!(
            "Condition II violated: (h0, h0*) = {:e}",
            sd.zero_pairing()
        )));
    }
    let mut h0: Vec<f64> = sd.right[0].iter().map(|c| c.re).collect();
    let peak = h0.iter().fold(0.0f64, |a, v| if v.abs() > a.abs() { *v } else { a });
    for v in h0.iter_mut() {
        *v /= peak;
    }
    let raw: Vec<f64> = sd.left[0].iter().map(|c| c.re).collect();
    let pair = sd.inner(&h0, &raw);
    let h0s = raw.iter().map(|v| v / pair).collect();
    Ok((h0, h0s))
}

/// `Gf` with the gauge `(Gf, h0*) = 0`, via the bordered system
/// `[[L, h0], [(W h0*)^T, 0]] [u; c] = [f; 0]`.
pub fn pseudo_inverse_apply(sd: &SpectralData, f: &[f64]) -> Result<Vec<f64>> {
    let m = sd.states();
    let scale = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return Ok(vec![0.0; m]);
    }
    let (_, h0s) = zero_mode(sd)?;
    let residual = sd.inner(f, &h0s);
    if residual.abs() > TOL_SOLV * scale {
        return Err(Error::NotSolvable { residual });
    }
    let lu = sd
        .bordered
        .as_ref()
        .ok_or_else(|| Error::Spectral("pseudo-inverse unavailable".into()))?;
    let rhs = DVector::from_fn(m + 1, |i, _| if i < m { f[i] } else { 0.0 });
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Spectral("bordered system is singular".into()))?;
    Ok(sol.iter().take(m).copied().collect())
}

/// `Gf = sum_{i >= 1} (f, h_i*) / lambda_i h_i`, evaluated in the eigenbasis.
pub fn pseudo_inverse_modal(sd: &SpectralData, f: &[f64]) -> Result<Vec<f64>> {
    let m = sd.states();
    let scale = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let fc: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let residual = sd.inner_c(&fc, &sd.left[0]).re;
    if residual.abs() > TOL_SOLV * scale {
        return Err(Error::NotSolvable { residual });
    }
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    for i in 1..m {
        let coef = sd.inner_c(&fc, &sd.left[i]) / sd.eigenvalues[i];
        for (o, h) in out.iter_mut().zip(&sd.right[i]) {
            *o += coef * h;
        }
    }
    Ok(out.iter().map(|c| c.re).collect())
}

/// `B = (h0, h0*) / (D h0, h0*)`.
pub fn drift_coefficient(sd: &SpectralData, speeds: &[f64]) -> Result<f64> {
    let (h0, h0s) = zero_mode(sd)?;
    let dh0: Vec<f64> = speeds.iter().zip(&h0).map(|(d, h)| d * h).collect();
    let value = sd.inner(&dh0, &h0s);
    let scale = speeds.iter().fold(0.0f64, |a, d| a.max(d.abs()));
    if value.abs() <= TOL_PAIR * scale.max(1.0) {
        return Err(Error::DegenerateDrift { value });
    }
    Ok(sd.inner(&h0, &h0s) / value)
}

/// `Psi0_j = D_j - (D h0, h0*)`.
pub fn psi0(sd: &SpectralData, speeds: &[f64]) -> Result<Vec<f64>> {
    let (h0, h0s) = zero_mode(sd)?;
    let dh0: Vec<f64> = speeds.iter().zip(&h0).map(|(d, h)| d * h).collect();
    let mean = sd.inner(&dh0, &h0s);
    Ok(speeds.iter().map(|d| d - mean).collect())
}

/// `g = (Psi0 G (Psi0 h0), h0*)` and `mu = -B^2 g`.
pub fn diffusion_coefficient(sd: &SpectralData, speeds: &[f64]) -> Result<(f64, f64)> {
    let k = KernelCoefficients::new(sd, speeds)?;
    Ok((k.g, k.mu))
}

/// Everything the expansion needs from the kernel of `L`.
#[derive(Debug, Clone)]
pub struct KernelCoefficients {
    pub h0: Vec<f64>,
    pub h0_star: Vec<f64>,
    pub b: f64,
    pub psi0: Vec<f64>,
    /// `G(Psi0 h0)`.
    pub corrector: Vec<f64>,
    pub g: f64,
    pub mu: f64,
}

impl KernelCoefficients {
    pub fn new(sd: &SpectralData, speeds: &[f64]) -> Result<Self> {
        let (h0, h0_star) = zero_mode(sd)?;
        let b = drift_coefficient(sd, speeds)?;
        let psi0 = psi0(sd, speeds)?;
        let psi_h0: Vec<f64> = psi0.iter().zip(&h0).map(|(a, h)| a * h).collect();
        let corrector = pseudo_inverse_apply(sd, &psi_h0)?;
        let inner: Vec<f64> = psi0.iter().zip(&corrector).map(|(a, c)| a * c).collect();
        let g = sd.inner(&inner, &h0_star);
        Ok(Self {
            h0,
            h0_star,
            b,
            psi0,
            corrector,
            g,
            mu: -b * b * g,
        })
    }

    /// Removes the `h0` component: `f - (f, h0*) h0`.
    pub fn project_out(&self, sd: &SpectralData, f: &[f64]) -> Vec<f64> {
        let c = sd.inner(f, &self.h0_star);
        f.iter().zip(&self.h0).map(|(v, h)| v - c * h).collect()
    }
}

/// Condition VII witness: `K = min_j L_jj - 1`, pass iff `L` is Metzler.
pub fn metzler_witness(l: &DMatrix<f64>) -> (bool, f64) {
    let m = l.nrows();
    let metzler = (0..m).all(|i| (0..m).all(|j| i == j || l[(i, j)] >= 0.0));
    let k = (0..m).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min) - 1.0;
    (metzler, k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionVerdict {
    pub name: &'static str,
    pub pass: bool,
    pub witness: String,
}

#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub verdicts: Vec<ConditionVerdict>,
    pub gap: Option<f64>,
    pub g: Option<f64>,
    pub metzler_k: f64,
    pub h0: Option<Vec<f64>>,
}

impl ConditionReport {
    pub fn overall(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn verdict(&self, name: &str) -> Option<&ConditionVerdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn failing(&self) -> Vec<&'static str> {
        self.verdicts.iter().filter(|v| !v.pass).map(|v| v.name).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("condition,verdict,witness\n");
        for v in &self.verdicts {
            s.push_str(&format!(
                "{},{},\"{}\"\n",
                v.name,
                if v.pass { "pass" } else { "fail" },
                v.witness.replace('"', "'")
            ));
        }
        s
    }
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.verdicts {
            writeln!(
                f,
                "{:<6} {:<5} {}",
                v.name,
                if v.pass { "pass" } else { "FAIL" },
                v.witness
            )?;
        }
        write!(f, "overall {}", if self.overall() { "pass" } else { "FAIL" })
    }
}

fn verdict(name: &'static str, pass: bool, witness: impl Into<String>) -> ConditionVerdict {
    ConditionVerdict {
        name,
        pass,
        witness: witness.into(),
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

/// Evaluates conditions I-VIII. Failures are verdicts, never errors.
pub fn check_conditions(spec: &ProblemSpec) -> ConditionReport {
    let (metzler, k_witness) = metzler_witness(&spec.operator);
    let seven = verdict(
        "VII",
        metzler,
        format!(
            "K = {k_witness:.6} ({})",
            if metzler {
                "off-diagonal entries nonnegative"
            } else {
                "negative off-diagonal entry"
            }
        ),
    );
    let sd = match eigendecompose(&spec.operator, &spec.weights) {
        Ok(sd) => sd,
        Err(e) => {
            let msg = e.to_string();
            let five_fail = msg.contains("Condition V");
            let unavailable = |name| verdict(name, false, format!("unavailable: {msg}"));
            return ConditionReport {
                verdicts: vec![
                    if five_fail {
                        unavailable("I")
                    } else {
                        verdict("I", false, msg.clone())
                    },
                    unavailable("II"),
                    unavailable("III"),
                    verdict("IV", true, "finite spectrum"),
                    if five_fail {
                        verdict("V", false, msg.clone())
                    } else {
                        unavailable("V")
                    },
                    unavailable("VI"),
                    seven,
                    unavailable("VIII"),
                ],
                gap: None,
                g: None,
                metzler_k: k_witness,
                h0: None,
            };
        }
    };

    let m = sd.states();
    let one = verdict("I", sd.gap > 0.0, format!("k = {:.6}", sd.gap));
    let pair = sd.zero_pairing();
    let two = verdict("II", pair > TOL_PAIR, format!("|(h0, h0*)| = {pair:.6e}"));

    let kernel = KernelCoefficients::new(&sd, &spec.speeds);
    let (three, g) = match &kernel {
        Ok(k) => (
            verdict("III", k.g < 0.0, format!("g = {:.6e}, mu = {:.6e}", k.g, k.mu)),
            Some(k.g),
        ),
        Err(e) => (verdict("III", false, e.to_string()), None),
    };
    let four = verdict("IV", true, format!("{m} eigenvalues"));

    let mut min_sep = f64::INFINITY;
    for i in 0..m {
        for j in i + 1..m {
            min_sep = min_sep.min((sd.eigenvalues[i] - sd.eigenvalues[j]).norm());
        }
    }
    let peak = sd
        .right
        .iter()
        .flatten()
        .map(|c| c.norm())
        .fold(0.0, f64::max);
    let ortho = sd.biorthogonality_residual();
    let five = verdict(
        "V",
        peak.is_finite() && ortho <= 1e-8,
        format!("min separation {min_sep:.3e}, max |h_ij| = {peak:.3}, biorthogonality {ortho:.1e}"),
    );

    let mut coefficients = Vec::new();
    let mut six_ok = true;
    for (i, profile) in spec.initial.iter().enumerate() {
        if profile.is_zero() {
            continue;
        }
        let amp: f64 = profile.bumps.iter().map(|b| b.amplitude).sum();
        if i >= m || !sd.is_real_mode(i) {
            six_ok = false;
        }
        coefficients.push(format!("w{i}: sum A = {amp:.6}"));
    }
    let six = verdict(
        "VI",
        six_ok,
        if coefficients.is_empty() {
            "zero data".to_string()
        } else {
            coefficients.join("; ")
        },
    );

    let h0 = zero_mode(&sd).ok().map(|(h, _)| h);
    let eight = match &h0 {
        Some(h) => verdict("VIII", h.iter().all(|v| *v > 0.0), format!("h0 = {}", fmt_vec(h))),
        None => verdict("VIII", false, "zero mode unavailable"),
    };

    ConditionReport {
        verdicts: vec![one, two, three, four, five, six, seven, eight],
        gap: Some(sd.gap),
        g,
        metzler_k: k_witness,
        h0,
    }
}
