//! Kernel-amplitude profiles `phi0(zeta, t)`, `phi1(zeta, t)` of the surge
//! terms: reaction-diffusion equations in the characteristic variable, solved
//! by fourth-order differences in `zeta` and classical RK4 in `t`.

use crate::error::{Error, Result};
use crate::model::UniformGrid;

/// Snapshots of a profile with values and time derivatives, interpolated by
/// cubic Hermite in both `zeta` and `t`.
#[derive(Debug, Clone)]
pub struct Profile {
    pub zeta: UniformGrid,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub rates: Vec<Vec<f64>>,
    value_slopes: Vec<Vec<f64>>,
    rate_slopes: Vec<Vec<f64>>,
}

/// Fourth-order first derivative with zero extension past the ends.
pub fn d1(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let at = |i: isize| -> f64 {
        if i < 0 || i as usize >= n {
            0.0
        } else {
            v[i as usize]
        }
    };
    (0..n as isize)
        .map(|i| (at(i - 2) - 8.0 * at(i - 1) + 8.0 * at(i + 1) - at(i + 2)) / (12.0 * h))
        .collect()
}

fn d2_into(v: &[f64], h: f64, out: &mut [f64]) {
    let n = v.len();
    let at = |i: isize| -> f64 {
        if i < 0 || i as usize >= n {
            0.0
        } else {
            v[i as usize]
        }
    };
    let c = 1.0 / (12.0 * h * h);
    for (i, o) in out.iter_mut().enumerate() {
        let i = i as isize;
        *o = c
            * (-at(i - 2) + 16.0 * at(i - 1) - 30.0 * at(i) + 16.0 * at(i + 1) - at(i + 2));
    }
}

fn d3(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let at = |i: isize| -> f64 {
        if i < 0 || i as usize >= n {
            0.0
        } else {
            v[i as usize]
        }
    };
    let c = 1.0 / (8.0 * h * h * h);
    (0..n as isize)
        .map(|i| {
            c * (-at(i + 3) + 8.0 * at(i + 2) - 13.0 * at(i + 1) + 13.0 * at(i - 1)
                - 8.0 * at(i - 2)
                + at(i - 3))
        })
        .collect()
}

#[inline]
fn hermite(y0: f64, m0: f64, y1: f64, m1: f64, h: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * h * m0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * h * m1
}

impl Profile {
    pub fn new(zeta: UniformGrid, times: Vec<f64>, values: Vec<Vec<f64>>, rates: Vec<Vec<f64>>) -> Self {
        let value_slopes = values.iter().map(|v| d1(v, zeta.step)).collect();
        let rate_slopes = rates.iter().map(|v| d1(v, zeta.step)).collect();
        Self {
            zeta,
            times,
            values,
            rates,
            value_slopes,
            rate_slopes,
        }
    }

    pub fn zero(zeta: UniformGrid, times: Vec<f64>) -> Self {
        let z = vec![vec![0.0; zeta.len]; times.len()];
        Self::new(zeta, times, z.clone(), z)
    }

    /// `d/dzeta` of this profile as a new profile on the same grids.
    pub fn zeta_derivative(&self) -> Profile {
        let h = self.zeta.step;
        Profile::new(
            self.zeta,
            self.times.clone(),
            self.value_slopes.clone(),
            self.rates.iter().map(|r| d1(r, h)).collect(),
        )
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().flatten().all(|v| *v == 0.0)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |a, v| a.max(v.abs()))
    }

    fn zeta_range(&self) -> (f64, f64) {
        (self.zeta.start, self.zeta.end())
    }

    /// Checks `[lo, hi] x [t_lo, t_hi]` lies inside the stored grids.
    pub fn covers(&self, lo: f64, hi: f64, t_lo: f64, t_hi: f64) -> Result<()> {
        let (a, b) = self.zeta_range();
        if lo < a || hi > b {
            return Err(Error::GridUnderflow {
                axis: "zeta",
                need_lo: lo,
                need_hi: hi,
                have_lo: a,
                have_hi: b,
            });
        }
        let t0 = self.times[0];
        let t1 = *self.times.last().unwrap();
        if t_lo < t0 - 1e-12 || t_hi > t1 + 1e-12 {
            return Err(Error::GridUnderflow {
                axis: "t",
                need_lo: t_lo,
                need_hi: t_hi,
                have_lo: t0,
                have_hi: t1,
            });
        }
        Ok(())
    }

    fn snapshot_at(&self, k: usize, i: usize, s: f64) -> (f64, f64) {
        let h = self.zeta.step;
        let v = &self.values[k];
        let r = &self.rates[k];
        let dv = &self.value_slopes[k];
        let dr = &self.rate_slopes[k];
        if s == 0.0 || i + 1 >= self.zeta.len {
            return (v[i], r[i]);
        }
        (
            hermite(v[i], dv[i], v[i + 1], dv[i + 1], h, s),
            hermite(r[i], dr[i], r[i + 1], dr[i + 1], h, s),
        )
    }

    /// Interpolated value at `(zeta, t)`.
    pub fn eval(&self, zeta: f64, t: f64) -> Result<f64> {
        self.covers(zeta, zeta, t, t)?;
        let pos = (zeta - self.zeta.start) / self.zeta.step;
        let i = (pos.floor() as usize).min(self.zeta.len - 1);
        let s = (pos - i as f64).clamp(0.0, 1.0);
        let n = self.times.len();
        if n == 1 {
            return Ok(self.snapshot_at(0, i, s).0);
        }
        let k = match self.times.binary_search_by(|p| p.total_cmp(&t)) {
            Ok(k) => k.min(n - 2),
            Err(k) => k.saturating_sub(1).min(n - 2),
        };
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let (v0, r0) = self.snapshot_at(k, i, s);
        let (v1, r1) = self.snapshot_at(k + 1, i, s);
        let dt = t1 - t0;
        let u = ((t - t0) / dt).clamp(0.0, 1.0);
        Ok(hermite(v0, r0, v1, r1, dt, u))
    }
}

/// Coefficients of the order-eps^3 source `rho1 = a3 phi0''' + a1 phi0' + 2 a2 phi0 phi0'`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SourceCoefficients {
    pub first: f64,
    pub quadratic: f64,
    pub third: f64,
}

impl SourceCoefficients {
    pub fn is_zero(&self) -> bool {
        self.first == 0.0 && self.quadratic == 0.0 && self.third == 0.0
    }
}

/// `phi_t = mu phi'' + a1 phi + a2 phi^2` (projected nonlinearity) for `phi0`
/// and its linearization plus `rho1` for `phi1`.
#[derive(Debug, Clone, Copy)]
pub struct ProfileEquation {
    pub mu: f64,
    /// Projected nonlinearity `Fbar(phi) = linear phi + quadratic phi^2`.
    pub linear: f64,
    pub quadratic: f64,
    pub source: SourceCoefficients,
}

impl ProfileEquation {
    pub fn fbar(&self, phi: f64) -> f64 {
        phi * (self.linear + self.quadratic * phi)
    }

    pub fn fbar_prime(&self, phi: f64) -> f64 {
        self.linear + 2.0 * self.quadratic * phi
    }

    fn rhs(&self, h: f64, phi0: &[f64], phi1: &[f64], with_phi1: bool, out0: &mut [f64], out1: &mut [f64]) {
        d2_into(phi0, h, out0);
        for (o, &p) in out0.iter_mut().zip(phi0) {
            *o = self.mu * *o + self.fbar(p);
        }
        if !with_phi1 {
            return;
        }
        d2_into(phi1, h, out1);
        for ((o, &p1), &p0) in out1.iter_mut().zip(phi1).zip(phi0) {
            *o = self.mu * *o + self.fbar_prime(p0) * p1;
        }
        if !self.source.is_zero() {
            let d = d1(phi0, h);
            let t = if self.source.third != 0.0 {
                d3(phi0, h)
            } else {
                vec![0.0; phi0.len()]
            };
            for (i, o) in out1.iter_mut().enumerate() {
                *o += self.source.third * t[i]
                    + (self.source.first + 2.0 * self.source.quadratic * phi0[i]) * d[i];
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ProfileGrids {
    pub zeta: UniformGrid,
    pub horizon: f64,
    /// Spacing of stored snapshots.
    pub snapshot_dt: f64,
}

impl ProfileGrids {
    pub fn symmetric(extent: f64, dzeta: f64, horizon: f64, snapshot_dt: f64) -> Result<Self> {
        let half = (extent / dzeta).ceil().max(4.0) as usize;
        let zeta = UniformGrid::new(-(half as f64) * dzeta, dzeta, 2 * half + 1)?;
        Ok(Self {
            zeta,
            horizon,
            snapshot_dt,
        })
    }
}

/// Integrates `phi0` and (when `phi1_init` is given) `phi1` together.
/// Returns `(phi0, phi1)`; `phi1` is the zero profile when not requested.
pub fn solve_profiles(
    eq: &ProfileEquation,
    grids: &ProfileGrids,
    phi0_init: &dyn Fn(f64) -> f64,
    phi1_init: Option<&dyn Fn(f64) -> f64>,
) -> Result<(Profile, Profile)> {
    if !(eq.mu > 0.0) {
        return Err(Error::invalid("mu", "profile equation requires mu > 0"));
    }
    let zg = grids.zeta;
    let h = zg.step;
    let n = zg.len;
    let with_phi1 = phi1_init.is_some();

    let mut p0: Vec<f64> = zg.points().map(phi0_init).collect();
    let mut p1: Vec<f64> = match phi1_init {
        Some(f) => zg.points().map(f).collect(),
        None => vec![0.0; n],
    };
    let amp = p0.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let stiff = eq.fbar_prime(amp).abs().max(eq.fbar_prime(-amp).abs());
    let dt_max = (0.4 * h * h / eq.mu).min(0.1 / (1.0 + stiff));

    let n_snap = (grids.horizon / grids.snapshot_dt).ceil().max(1.0) as usize;
    let snap_dt = grids.horizon / n_snap as f64;
    let substeps = (snap_dt / dt_max).ceil().max(1.0) as usize;
    let dt = snap_dt / substeps as f64;

    let mut times = vec![0.0];
    let mut v0 = Vec::with_capacity(n_snap + 1);
    let mut r0 = Vec::with_capacity(n_snap + 1);
    let mut v1 = Vec::with_capacity(n_snap + 1);
    let mut r1 = Vec::with_capacity(n_snap + 1);

    let mut k = [(); 4].map(|_| (vec![0.0; n], vec![0.0; n]));
    let mut s0 = vec![0.0; n];
    let mut s1 = vec![0.0; n];

    let record = |p0: &[f64], p1: &[f64], k0: &mut (Vec<f64>, Vec<f64>), v0: &mut Vec<Vec<f64>>, r0: &mut Vec<Vec<f64>>, v1: &mut Vec<Vec<f64>>, r1: &mut Vec<Vec<f64>>| {
        eq.rhs(h, p0, p1, with_phi1, &mut k0.0, &mut k0.1);
        v0.push(p0.to_vec());
        r0.push(k0.0.clone());
        if with_phi1 {
            v1.push(p1.to_vec());
            r1.push(k0.1.clone());
        }
    };
    record(&p0, &p1, &mut k[0], &mut v0, &mut r0, &mut v1, &mut r1);

    for snap in 1..=n_snap {
        for _ in 0..substeps {
            eq.rhs(h, &p0, &p1, with_phi1, &mut k[0].0, &mut k[0].1);
            for stage in 1..4 {
                let c = if stage == 3 { dt } else { 0.5 * dt };
                for i in 0..n {
                    s0[i] = p0[i] + c * k[stage - 1].0[i];
                    if with_phi1 {
                        s1[i] = p1[i] + c * k[stage - 1].1[i];
                    }
                }
                let (_, tail) = k.split_at_mut(stage);
                eq.rhs(h, &s0, &s1, with_phi1, &mut tail[0].0, &mut tail[0].1);
            }
            for i in 0..n {
                p0[i] += dt / 6.0 * (k[0].0[i] + 2.0 * k[1].0[i] + 2.0 * k[2].0[i] + k[3].0[i]);
                if with_phi1 {
                    p1[i] += dt / 6.0 * (k[0].1[i] + 2.0 * k[1].1[i] + 2.0 * k[2].1[i] + k[3].1[i]);
                }
            }
        }
        let t = snap as f64 * snap_dt;
        if p0.iter().chain(p1.iter()).any(|v| !v.is_finite() || v.abs() > 1e6) {
            return Err(Error::ProfileBlowUp { t });
        }
        times.push(t);
        record(&p0, &p1, &mut k[0], &mut v0, &mut r0, &mut v1, &mut r1);
    }

    let phi0 = Profile::new(zg, times.clone(), v0, r0);
    let phi1 = if with_phi1 {
        Profile::new(zg, times, v1, r1)
    } else {
        Profile::zero(zg, times)
    };
    Ok((phi0, phi1))
}

/// Leading profile alone: `phi0_t = mu phi0'' + Fbar(phi0)`, `phi0(zeta, 0) = init(zeta)`.
pub fn solve_phi0(
    mu: f64,
    fbar: (f64, f64),
    init: &dyn Fn(f64) -> f64,
    grids: &ProfileGrids,
) -> Result<Profile> {
    let eq = ProfileEquation {
        mu,
        linear: fbar.0,
        quadratic: fbar.1,
        source: SourceCoefficients::default(),
    };
    Ok(solve_profiles(&eq, grids, init, None)?.0)
}

/// First-order profile: `phi1_t = mu phi1'' + Fbar'(phi0) phi1 + rho1(phi0)`.
pub fn solve_phi1(
    eq: &ProfileEquation,
    phi0_init: &dyn Fn(f64) -> f64,
    phi1_init: &dyn Fn(f64) -> f64,
    grids: &ProfileGrids,
) -> Result<Profile> {
    Ok(solve_profiles(eq, grids, phi0_init, Some(phi1_init))?.1)
}
