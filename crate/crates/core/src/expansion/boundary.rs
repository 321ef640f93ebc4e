//! Initial-layer (boundary) functions in `(xi, tau) = (x / eps, t / eps^2)`,
//! evaluated in closed form in the eigenbasis of `L`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{ModeProfile, ProblemSpec};
use crate::spectral::{KernelCoefficients, SpectralData};

/// `int_0^tau exp(b (tau - s)) exp(a s) ds`.
fn layer_integral(a: Complex64, b: Complex64, tau: f64) -> Complex64 {
    let d = a - b;
    let eb = (b * tau).exp();
    if (d * tau).norm() < 1e-6 {
        eb * tau * (1.0 + d * tau / 2.0)
    } else {
        ((a * tau).exp() - eb) / d
    }
}

/// `p0`, `p1` of the expansion.
#[derive(Debug, Clone)]
pub struct BoundaryTerms {
    m: usize,
    eigenvalues: Vec<Complex64>,
    right: Vec<Vec<Complex64>>,
    left: Vec<Vec<Complex64>>,
    weights: Vec<f64>,
    /// `coupling[j][i] = (D h_i, h_j*)`.
    coupling: Vec<Vec<Complex64>>,
    /// Real data profiles `w_i`, `i >= 1`.
    modes: Vec<(usize, ModeProfile)>,
    w0: ModeProfile,
    corrector: Vec<f64>,
    h0: Vec<f64>,
}

impl BoundaryTerms {
    pub fn new(spec: &ProblemSpec, sd: &SpectralData, kernel: &KernelCoefficients) -> Result<Self> {
        let m = sd.states();
        let mut modes = Vec::new();
        for (i, profile) in spec.initial.iter().enumerate().skip(1) {
            if profile.is_zero() {
                continue;
            }
            if !sd.is_real_mode(i) {
                return Err(Error::Spectral(format!(
                    "initial data on mode {i}, which belongs to a complex eigenvalue"
                )));
            }
            modes.push((i, profile.clone()));
        }
        let coupling = (0..m)
            .map(|j| {
                (0..m)
                    .map(|i| {
                        let dh: Vec<Complex64> = sd.right[i]
                            .iter()
                            .zip(&spec.speeds)
                            .map(|(h, d)| h * *d)
                            .collect();
                        sd.inner_c(&dh, &sd.left[j])
                    })
                    .collect()
            })
            .collect();
        let mut eigenvalues = sd.eigenvalues.clone();
        eigenvalues[0] = Complex64::new(0.0, 0.0);
        let terms = Self {
            m,
            eigenvalues,
            right: sd.right.clone(),
            left: sd.left.clone(),
            weights: sd.weights.clone(),
            coupling,
            modes,
            w0: spec.initial.first().cloned().unwrap_or_default(),
            corrector: kernel.corrector.clone(),
            h0: kernel.h0.clone(),
        };
        terms.check_matching()?;
        Ok(terms)
    }

    pub fn is_trivial(&self) -> bool {
        self.modes.is_empty() && self.w0.is_zero()
    }

    /// `phi1(-B xi, 0) = sum_{i >= 1} (D h_i, h0*) w_i'(xi) / lambda_i`, the value
    /// that makes `(p1, h0*)` vanish as `tau -> infinity`.
    pub fn phi1_matching(&self, xi: f64) -> f64 {
        self.modes
            .iter()
            .map(|(i, w)| (self.coupling[0][*i] / self.eigenvalues[*i]).re * w.derivative(xi))
            .sum()
    }

    pub fn p0(&self, xi: f64, tau: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (i, w) in &self.modes {
            let a = w.value(xi) * (self.eigenvalues[*i].re * tau).exp();
            if a == 0.0 {
                continue;
            }
            for (o, h) in out.iter_mut().zip(&self.right[*i]) {
                *o += a * h.re;
            }
        }
        out
    }

    fn p1_coefficients(&self, xi: f64, tau: f64) -> Vec<Complex64> {
        let m = self.m;
        let w0d = self.w0.derivative(xi);
        let phi1 = self.phi1_matching(xi);
        let init: Vec<f64> = (0..m)
            .map(|p| -w0d * self.corrector[p] - phi1 * self.h0[p])
            .collect();
        let slopes: Vec<(usize, f64)> = self
            .modes
            .iter()
            .map(|(i, w)| (*i, w.derivative(xi)))
            .collect();
        (0..m)
            .map(|j| {
                let c0: Complex64 = init
                    .iter()
                    .zip(&self.left[j])
                    .zip(&self.weights)
                    .map(|((a, l), w)| l * (a * w))
                    .sum();
                let lj = self.eigenvalues[j];
                let mut c = (lj * tau).exp() * c0;
                for &(i, wd) in &slopes {
                    c -= self.coupling[j][i] * wd * layer_integral(self.eigenvalues[i], lj, tau);
                }
                c
            })
            .collect()
    }

    /// `p1` solving `p1_tau = L p1 - D p0_xi` with `p1(xi, 0) = -s1(-B xi, 0)`.
    pub fn p1(&self, xi: f64, tau: f64) -> Vec<f64> {
        let c = self.p1_coefficients(xi, tau);
        let mut out = vec![0.0; self.m];
        for (cj, h) in c.iter().zip(&self.right) {
            for (o, hp) in out.iter_mut().zip(h) {
                *o += (cj * hp).re;
            }
        }
        out
    }

    /// Kernel amplitude `(p1, h0*)` as `tau -> infinity`.
    pub fn p1_kernel_limit(&self, xi: f64) -> f64 {
        let c0 = self.p1_coefficients(xi, 0.0)[0].re;
        let drained: f64 = self
            .modes
            .iter()
            .map(|(i, w)| (self.coupling[0][*i] / self.eigenvalues[*i]).re * w.derivative(xi))
            .sum();
        c0 + drained
    }

    fn check_matching(&self) -> Result<()> {
        for k in -40..=40 {
            let xi = k as f64 * 0.1;
            let limit = self.p1_kernel_limit(xi);
            if limit.abs() > 1e-10 {
                return Err(Error::Matching(format!(
                    "(p1, h0*) tends to {limit:e} at xi = {xi}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{canonical_problem, GaussianBump};
    use crate::spectral::eigendecompose;

    fn with_mode1() -> (ProblemSpec, SpectralData, KernelCoefficients) {
        let mut spec = canonical_problem();
        spec.initial = vec![
            ModeProfile::default(),
            ModeProfile {
                bumps: vec![GaussianBump::new(1.0, 1.0, 0.0)],
            },
        ];
        let sd = eigendecompose(&spec.operator, &spec.weights).unwrap();
        let k = KernelCoefficients::new(&sd, &spec.speeds).unwrap();
        (spec, sd, k)
    }

    #[test]
    fn kernel_only_data_has_no_p0() {
        let spec = canonical_problem();
        let sd = eigendecompose(&spec.operator, &spec.weights).unwrap();
        let k = KernelCoefficients::new(&sd, &spec.speeds).unwrap();
        let b = BoundaryTerms::new(&spec, &sd, &k).unwrap();
        for xi in [-1.0, 0.0, 0.5] {
            assert_eq!(b.p0(xi, 0.3), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn p0_decays_with_lambda1() {
        let (spec, sd, k) = with_mode1();
        let b = BoundaryTerms::new(&spec, &sd, &k).unwrap();
        for &(xi, tau) in &[(0.0f64, 0.0f64), (0.3, 1.0), (-1.2, 2.5)] {
            let p = b.p0(xi, tau);
            let expect = (-xi * xi).exp() * (-2.0 * tau).exp();
            assert!((p[0] - expect).abs() < 1e-14);
            assert!((p[1] + expect).abs() < 1e-14);
        }
    }

    #[test]
    fn p1_matches_initial_and_drains_kernel() {
        let (spec, sd, k) = with_mode1();
        let b = BoundaryTerms::new(&spec, &sd, &k).unwrap();
        // phi1(-B xi, 0) = (D h1, h0*) / lambda1 * w1' = 0.5 / -2 * w1'.
        for xi in [-0.7f64, 0.2, 1.1] {
            let w1d = -2.0 * xi * (-xi * xi).exp();
            assert!((b.phi1_matching(xi) + 0.25 * w1d).abs() < 1e-14);
            let p = b.p1(xi, 0.0);
            // -s1 = -(w0' G(Psi0 h0) + phi1 h0) with w0 = 0.
            assert!((p[0] - 0.25 * w1d).abs() < 1e-13);
            assert!((p[1] - 0.25 * w1d).abs() < 1e-13);
            let far = b.p1(xi, 40.0);
            assert!(far.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn p1_solves_layer_equation() {
        let (mut spec, _, _) = with_mode1();
        spec.initial[0].bumps.push(GaussianBump::new(0.7, 2.0, 0.1));
        let sd = eigendecompose(&spec.operator, &spec.weights).unwrap();
        let k = KernelCoefficients::new(&sd, &spec.speeds).unwrap();
        let b = BoundaryTerms::new(&spec, &sd, &k).unwrap();
        let (xi, tau, h) = (0.4, 0.8, 1e-4);
        let dt: Vec<f64> = b
            .p1(xi, tau + h)
            .iter()
            .zip(b.p1(xi, tau - h))
            .map(|(a, c)| (a - c) / (2.0 * h))
            .collect();
        let dxi: Vec<f64> = b
            .p0(xi + h, tau)
            .iter()
            .zip(b.p0(xi - h, tau))
            .map(|(a, c)| (a - c) / (2.0 * h))
            .collect();
        let p = b.p1(xi, tau);
        for r in 0..2 {
            let lp: f64 = (0..2).map(|c| spec.operator[(r, c)] * p[c]).sum();
            let resid = dt[r] - (lp - spec.speeds[r] * dxi[r]);
            assert!(resid.abs() < 1e-7, "state {r}: {resid}");
        }
    }
}
