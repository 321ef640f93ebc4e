//! Problem instances: the stiff transport system
//! `eps^2 (U_t + D U_x) = L U + eps^2 F(U)`, `U(x, 0) = w(x / eps)`,
//! with a finite set of states standing in for the velocity parameter.
//!
//! Instances are read from a small sectioned key/value format:
//!
//! ```text
//! # canonical two-state model
//! [operator]
//! row = -1, 1
//! row = 1, -1
//! weights = 1, 1
//!
//! [speeds]
//! D = 2, 1
//!
//! [nonlinearity]
//! c1 = 0, 0
//! c2 = -1, -1
//!
//! [initial]
//! # mode, amplitude, beta, center
//! bump = 0, 1, 1, 0
//!
//! [run]
//! T = 0.5
//! ```
//!
//! `[speeds]` may carry an explicit lower bound `D0`; otherwise `D0 = min |D_j|`.
//! `[run]` may carry `eps` (comma list) and `seed` defaults for the command line.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spectral::SpectralData;

/// `A * exp(-beta * (z - center)^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBump {
    pub amplitude: f64,
    pub beta: f64,
    pub center: f64,
}

impl GaussianBump {
    pub fn new(amplitude: f64, beta: f64, center: f64) -> Self {
        Self {
            amplitude,
            beta,
            center,
        }
    }

    pub fn value(&self, z: f64) -> f64 {
        let d = z - self.center;
        self.amplitude * (-self.beta * d * d).exp()
    }

    pub fn derivative(&self, z: f64) -> f64 {
        let d = z - self.center;
        -2.0 * self.beta * d * self.value(z)
    }
}

/// Sum of Gaussian bumps; the empty sum is the zero profile.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModeProfile {
    pub bumps: Vec<GaussianBump>,
}

impl ModeProfile {
    pub fn is_zero(&self) -> bool {
        self.bumps.iter().all(|b| b.amplitude == 0.0)
    }

    pub fn value(&self, z: f64) -> f64 {
        self.bumps.iter().map(|b| b.value(z)).sum()
    }

    pub fn derivative(&self, z: f64) -> f64 {
        self.bumps.iter().map(|b| b.derivative(z)).sum()
    }
}

/// Per-state quadratic nonlinearity `F_j(U) = c1_j U_j + c2_j U_j^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Nonlinearity {
    pub linear: Vec<f64>,
    pub quadratic: Vec<f64>,
}

impl Nonlinearity {
    pub fn zero(m: usize) -> Self {
        Self {
            linear: vec![0.0; m],
            quadratic: vec![0.0; m],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.linear.iter().chain(&self.quadratic).all(|&c| c == 0.0)
    }

    #[inline]
    pub fn eval(&self, state: usize, u: f64) -> f64 {
        u * (self.linear[state] + self.quadratic[state] * u)
    }

    #[inline]
    pub fn derivative(&self, state: usize, u: f64) -> f64 {
        self.linear[state] + 2.0 * self.quadratic[state] * u
    }

    /// Upper bound of `|F'|` over `|u| <= amplitude`.
    pub fn lipschitz(&self, amplitude: f64) -> f64 {
        self.linear
            .iter()
            .zip(&self.quadratic)
            .map(|(a, b)| a.abs() + 2.0 * b.abs() * amplitude)
            .fold(0.0, f64::max)
    }
}

/// A validated problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub operator: DMatrix<f64>,
    pub speeds: Vec<f64>,
    /// Lower bound `D0` with `min |D_j| >= D0 > 0`.
    pub speed_floor: f64,
    pub weights: Vec<f64>,
    pub nonlinearity: Nonlinearity,
    /// Initial-data profiles `w_i`, indexed by eigenmode; missing entries are zero.
    pub initial: Vec<ModeProfile>,
    pub horizon: f64,
    pub eps: Vec<f64>,
    pub seed: Option<u64>,
}

/// Envelope `|w(z)| <= C exp(-beta_min z^2)` (up to bump centers).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayCertificate {
    pub envelope: f64,
    pub beta_min: f64,
}

/// Uniform grid `start + i * step`, `i < len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl UniformGrid {
    pub fn new(start: f64, step: f64, len: usize) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() || !start.is_finite() {
            return Err(Error::invalid("grid", "spacing must be positive and finite"));
        }
        Ok(Self { start, step, len })
    }

    /// Grid covering `[lo, hi]` with at most `step` spacing.
    pub fn covering(lo: f64, hi: f64, step: f64) -> Result<Self> {
        let n = ((hi - lo) / step).ceil().max(1.0) as usize;
        Self::new(lo, (hi - lo) / n as f64, n + 1)
    }

    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn end(&self) -> f64 {
        self.at(self.len.saturating_sub(1))
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |i| self.at(i))
    }
}

/// Values sampled on a uniform x-grid, one row of `m` states per node.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub grid: UniformGrid,
    pub states: usize,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: UniformGrid, states: usize) -> Self {
        Self {
            grid,
            states,
            values: vec![0.0; grid.len * states],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, state: usize) -> f64 {
        self.values[i * self.states + state]
    }

    #[inline]
    pub fn set(&mut self, i: usize, state: usize, v: f64) {
        self.values[i * self.states + state] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.states..(i + 1) * self.states]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl ProblemSpec {
    pub fn states(&self) -> usize {
        self.speeds.len()
    }

    pub fn speed_min(&self) -> f64 {
        self.speeds.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn speed_max(&self) -> f64 {
        self.speeds.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs_speed(&self) -> f64 {
        self.speeds.iter().fold(0.0, |a, d| a.max(d.abs()))
    }

    /// Weighted inner product `(a, b) = sum_j weights_j a_j b_j`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * x * y)
            .sum()
    }

    pub fn mode_profile(&self, mode: usize) -> Option<&ModeProfile> {
        self.initial.get(mode).filter(|p| !p.is_zero())
    }

    /// Checks every structural invariant; `load_problem` calls this.
    pub fn validate(&self) -> Result<()> {
        let m = self.states();
        if m < 2 {
            return Err(Error::invalid("speeds.D", "at least two states are required"));
        }
        if self.operator.nrows() != m || self.operator.ncols() != m {
            return Err(Error::invalid(
                "operator.row",
                format!(
                    "operator is {}x{}, expected {m}x{m}",
                    self.operator.nrows(),
                    self.operator.ncols()
                ),
            ));
        }
        if self.operator.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("operator.row", "non-finite entry"));
        }
        if self.weights.len() != m {
            return Err(Error::invalid("operator.weights", format!("expected {m} weights")));
        }
        if self.weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::invalid("operator.weights", "weights must be positive"));
        }
        if self.speeds.iter().any(|d| !d.is_finite()) {
            return Err(Error::invalid("speeds.D", "non-finite speed"));
        }
        if !(self.speed_floor > 0.0)
            || self.speeds.iter().any(|d| d.abs() < self.speed_floor)
        {
            return Err(Error::invalid("speeds.D", "speed lower bound violated"));
        }
        if self.nonlinearity.linear.len() != m || self.nonlinearity.quadratic.len() != m {
            return Err(Error::invalid(
                "nonlinearity",
                format!("expected {m} coefficients per list"),
            ));
        }
        if self.initial.len() > m {
            return Err(Error::invalid(
                "initial.bump",
                format!("mode index {} out of range for {m} states", self.initial.len() - 1),
            ));
        }
        for bump in self.initial.iter().flat_map(|p| &p.bumps) {
            if !(bump.beta > 0.0) || !bump.beta.is_finite() {
                return Err(Error::invalid(
                    "initial.bump",
                    "initial data not Gaussian-decaying",
                ));
            }
            if !bump.amplitude.is_finite() || !bump.center.is_finite() {
                return Err(Error::invalid("initial.bump", "non-finite bump parameter"));
            }
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::invalid("run.T", "time horizon must be positive"));
        }
        if self.eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(Error::invalid("run.eps", "eps values must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Smallest bump width parameter and the summed amplitude envelope.
    pub fn decay_certificate(&self) -> DecayCertificate {
        let bumps = self.initial.iter().flat_map(|p| &p.bumps);
        DecayCertificate {
            envelope: bumps.clone().map(|b| b.amplitude.abs()).sum(),
            beta_min: bumps.map(|b| b.beta).fold(f64::INFINITY, f64::min),
        }
    }

    /// Range `[lo, hi]` in the stretched variable `z` outside which the data
    /// is below `exp(-64)` of its envelope.
    pub fn data_support(&self) -> (f64, f64) {
        let cert = self.decay_certificate();
        if !cert.beta_min.is_finite() {
            return (0.0, 0.0);
        }
        let reach = 8.0 / cert.beta_min.sqrt();
        let centers = self.initial.iter().flat_map(|p| &p.bumps).map(|b| b.center);
        let lo = centers.clone().fold(f64::INFINITY, f64::min);
        let hi = centers.fold(f64::NEG_INFINITY, f64::max);
        (lo - reach, hi + reach)
    }

    /// Truncated x-window containing the domain of influence of the data up to
    /// `horizon`, for initial data `w(x / eps)`.
    pub fn influence_window(&self, eps: f64, horizon: f64) -> (f64, f64) {
        let (zlo, zhi) = self.data_support();
        let lo = eps * zlo + (self.speed_min() * horizon).min(0.0);
        let hi = eps * zhi + (self.speed_max() * horizon).max(0.0);
        (lo, hi)
    }

    pub fn to_config_text(&self) -> String {
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let mut s = String::new();
        s.push_str("[operator]\n");
        for r in 0..self.operator.nrows() {
            let row: Vec<f64> = self.operator.row(r).iter().copied().collect();
            let _ = writeln!(s, "row = {}", list(&row));
        }
        let _ = writeln!(s, "weights = {}", list(&self.weights));
        s.push_str("\n[speeds]\n");
        let _ = writeln!(s, "D = {}", list(&self.speeds));
        let _ = writeln!(s, "D0 = {:?}", self.speed_floor);
        s.push_str("\n[nonlinearity]\n");
        let _ = writeln!(s, "c1 = {}", list(&self.nonlinearity.linear));
        let _ = writeln!(s, "c2 = {}", list(&self.nonlinearity.quadratic));
        s.push_str("\n[initial]\n");
        for (mode, profile) in self.initial.iter().enumerate() {
            for b in &profile.bumps {
                let _ = writeln!(
                    s,
                    "bump = {mode}, {:?}, {:?}, {:?}",
                    b.amplitude, b.beta, b.center
                );
            }
        }
        s.push_str("\n[run]\n");
        let _ = writeln!(s, "T = {:?}", self.horizon);
        if !self.eps.is_empty() {
            let _ = writeln!(s, "eps = {}", list(&self.eps));
        }
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed = {seed}");
        }
        s
    }
}

fn parse_list(line: usize, field: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|tok| {
            let tok = tok.trim();
            tok.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("`{field}`: `{tok}` is not a finite number"),
                })
        })
        .collect()
}

fn parse_scalar(line: usize, field: &str, value: &str) -> Result<f64> {
    let v = parse_list(line, field, value)?;
    match v.as_slice() {
        [x] => Ok(*x),
        _ => Err(Error::Parse {
            line,
            message: format!("`{field}` expects a single number"),
        }),
    }
}

/// Parses and validates a configuration document.
pub fn load_problem(config_text: &str) -> Result<ProblemSpec> {
    let mut section = String::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut weights = None;
    let mut speeds = None;
    let mut floor = None;
    let mut c1 = None;
    let mut c2 = None;
    let mut bumps: Vec<(usize, GaussianBump)> = Vec::new();
    let mut horizon = None;
    let mut eps = Vec::new();
    let mut seed = None;

    for (idx, raw) in config_text.lines().enumerate() {
        let line = idx + 1;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        if let Some(name) = text.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| Error::Parse {
                line,
                message: "unterminated section header".into(),
            })?;
            section = name.trim().to_string();
            if !["operator", "speeds", "nonlinearity", "initial", "run"]
                .contains(&section.as_str())
            {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown section `[{section}]`"),
                });
            }
            continue;
        }
        let (key, value) = text.split_once('=').ok_or_else(|| Error::Parse {
            line,
            message: "expected `key = value`".into(),
        })?;
        let key = key.trim();
        let value = value.trim();
        let field = format!("{section}.{key}");
        match (section.as_str(), key) {
            ("operator", "row") => rows.push(parse_list(line, &field, value)?),
            ("operator", "weights") => weights = Some(parse_list(line, &field, value)?),
            ("speeds", "D") => speeds = Some(parse_list(line, &field, value)?),
            ("speeds", "D0") => floor = Some(parse_scalar(line, &field, value)?),
            ("nonlinearity", "c1") => c1 = Some(parse_list(line, &field, value)?),
            ("nonlinearity", "c2") => c2 = Some(parse_list(line, &field, value)?),
            ("initial", "bump") => {
                let v = parse_list(line, &field, value)?;
                if v.len() != 4 || v[0] < 0.0 || v[0].fract() != 0.0 {
                    return Err(Error::Parse {
                        line,
                        message: "`bump` expects `mode, amplitude, beta, center`".into(),
                    });
                }
                bumps.push((v[0] as usize, GaussianBump::new(v[1], v[2], v[3])));
            }
            ("run", "T") => horizon = Some(parse_scalar(line, &field, value)?),
            ("run", "eps") => eps = parse_list(line, &field, value)?,
            ("run", "seed") => {
                seed = Some(value.parse::<u64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("`{field}` expects an unsigned integer"),
                })?)
            }
            _ => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown key `{field}`"),
                })
            }
        }
    }

    let speeds = speeds.ok_or_else(|| Error::invalid("speeds.D", "missing"))?;
    let m = speeds.len();
    if rows.is_empty() {
        return Err(Error::invalid("operator.row", "missing"));
    }
    if rows.iter().any(|r| r.len() != rows.len()) {
        return Err(Error::invalid("operator.row", "operator must be square"));
    }
    let n = rows.len();
    let operator = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let mut initial: Vec<ModeProfile> = Vec::new();
    for (mode, bump) in bumps {
        if initial.len() <= mode {
            initial.resize_with(mode + 1, ModeProfile::default);
        }
        initial[mode].bumps.push(bump);
    }
    let speed_floor =
        floor.unwrap_or_else(|| speeds.iter().fold(f64::INFINITY, |a, d| a.min(d.abs())));
    let spec = ProblemSpec {
        operator,
        weights: weights.unwrap_or_else(|| vec![1.0; m]),
        speed_floor,
        speeds,
        nonlinearity: Nonlinearity {
            linear: c1.unwrap_or_else(|| vec![0.0; m]),
            quadratic: c2.unwrap_or_else(|| vec![0.0; m]),
        },
        initial,
        horizon: horizon.ok_or_else(|| Error::invalid("run.T", "missing"))?,
        eps,
        seed,
    };
    spec.validate()?;
    Ok(spec)
}

/// The two-state model used throughout the tests and the shipped config:
/// `L = [[-1, 1], [1, -1]]`, `D = (2, 1)`, `F_j(U) = -U_j^2`, `w = exp(-z^2) h0`.
pub fn canonical_problem() -> ProblemSpec {
    ProblemSpec {
        operator: DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]),
        speeds: vec![2.0, 1.0],
        speed_floor: 1.0,
        weights: vec![1.0, 1.0],
        nonlinearity: Nonlinearity {
            linear: vec![0.0, 0.0],
            quadratic: vec![-1.0, -1.0],
        },
        initial: vec![ModeProfile {
            bumps: vec![GaussianBump::new(1.0, 1.0, 0.0)],
        }],
        horizon: 0.5,
        eps: vec![0.2, 0.1, 0.05, 0.025],
        seed: Some(20240611),
    }
}

/// Initial field `w(xi, p) = sum_i w_i(xi) h_i(p)` on `xi_grid`.
pub fn sample_initial(
    spec: &ProblemSpec,
    modes: &SpectralData,
    xi_grid: UniformGrid,
) -> Result<GridField> {
    let m = spec.states();
    if spec.initial.len() > modes.states() || modes.states() != m {
        return Err(Error::invalid(
            "initial.bump",
            format!(
                "{} mode profiles for {} eigenmodes",
                spec.initial.len(),
                modes.states()
            ),
        ));
    }
    let mut shapes = Vec::new();
    for (i, profile) in spec.initial.iter().enumerate() {
        if profile.is_zero() {
            continue;
        }
        shapes.push((profile, modes.real_right_mode(i)?));
    }
    let mut field = GridField::zeros(xi_grid, m);
    for (k, xi) in xi_grid.points().enumerate() {
        for (profile, h) in &shapes {
            let a = profile.value(xi);
            for (j, hj) in h.iter().enumerate() {
                field.values[k * m + j] += a * hj;
            }
        }
    }
    Ok(field)
}

pub fn validate_initial_decay(spec: &ProblemSpec) -> DecayCertificate {
    spec.decay_certificate()
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANONICAL: &str = "\
# canonical
[operator]
row = -1, 1
row = 1, -1
weights = 1, 1

[speeds]
D = 2, 1

[nonlinearity]
c2 = -1, -1

[initial]
bump = 0, 1, 1, 0

[run]
T = 0.5
";

    #[test]
    fn canonical_document_loads() {
        let spec = load_problem(CANONICAL).unwrap();
        assert_eq!(spec.states(), 2);
        assert_eq!(spec.speed_floor, 1.0);
        assert_eq!(spec.speeds, vec![2.0, 1.0]);
        assert_eq!(spec.nonlinearity.quadratic, vec![-1.0, -1.0]);
        assert_eq!(spec.nonlinearity.linear, vec![0.0, 0.0]);
        assert_eq!(spec.operator[(0, 1)], 1.0);
        assert_eq!(spec.initial.len(), 1);
    }

    #[test]
    fn zero_speed_rejected() {
        let doc = CANONICAL.replace("D = 2, 1", "D = 1, 0");
        let err = load_problem(&doc).unwrap_err().to_string();
        assert!(err.contains("speed lower bound violated"), "{err}");
    }

    #[test]
    fn negative_beta_rejected() {
        let doc = CANONICAL.replace("bump = 0, 1, 1, 0", "bump = 0, 1, -1, 0");
        let err = load_problem(&doc).unwrap_err().to_string();
        assert!(err.contains("initial data not Gaussian-decaying"), "{err}");
    }

    #[test]
    fn parse_errors_carry_line() {
        let doc = CANONICAL.replace("D = 2, 1", "D = 2, x");
        match load_problem(&doc) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 8),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn explicit_floor_checked() {
        let doc = CANONICAL.replace("D = 2, 1", "D = 2, 1\nD0 = 1.5");
        assert!(load_problem(&doc).is_err());
    }

    #[test]
    fn decay_certificates() {
        let mut spec = canonical_problem();
        assert_eq!(
            validate_initial_decay(&spec),
            DecayCertificate { envelope: 1.0, beta_min: 1.0 }
        );
        spec.initial[0].bumps.push(GaussianBump::new(0.5, 2.0, 0.0));
        assert_eq!(
            validate_initial_decay(&spec),
            DecayCertificate { envelope: 1.5, beta_min: 1.0 }
        );
        spec.initial.clear();
        let cert = validate_initial_decay(&spec);
        assert_eq!(cert.envelope, 0.0);
        assert_eq!(cert.beta_min, f64::INFINITY);
    }

    #[test]
    fn round_trip_canonical() {
        let spec = load_problem(CANONICAL).unwrap();
        let again = load_problem(&spec.to_config_text()).unwrap();
        assert_eq!(spec, again);
    }
}
