use std::path::Path;

use surge_core::harness::Verification;
use surge_core::model::{GaussianBump, ModeProfile, Nonlinearity};
use surge_core::*;

fn load(rel: &str) -> ProblemSpec {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel);
    load_problem(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn run(spec: &ProblemSpec, orders: &[usize]) -> Vec<Verification> {
    let sd = eigendecompose(&spec.operator, &spec.weights).unwrap();
    let cfg = SweepConfig::for_spec(spec);
    verify(spec, &sd, orders, &cfg, 0.3).unwrap()
}

#[test]
fn three_state_instance_converges_at_both_orders() {
    let spec = load("configs/three_state.cfg");
    assert!(check_conditions(&spec).overall());
    let runs = run(&spec, &[0, 1]);
    let (n0, n1) = (&runs[0].report, &runs[1].report);
    assert!(runs[0].verdict.pass, "{:?}", runs[0].verdict);
    assert!(runs[1].verdict.pass, "{:?}", runs[1].verdict);
    assert!(n0.error_fit.slope >= 0.9, "{:?}", n0.error_fit);
    assert!(n1.error_fit.slope >= 1.8, "{:?}", n1.error_fit);
    assert!(n1.defect_projected_fit.slope >= 2.6, "{:?}", n1.defect_projected_fit);
    assert!(n0.oracle_separated && n1.oracle_separated);
}

#[test]
fn linear_kernel_data_first_order_slope() {
    let mut spec = canonical_problem();
    spec.nonlinearity = Nonlinearity::zero(2);
    spec.initial = vec![ModeProfile {
        bumps: vec![GaussianBump::new(1e-3, 1.0, 0.0)],
    }];
    let runs = run(&spec, &[0]);
    let r = &runs[0].report;
    assert!((0.9..=1.3).contains(&r.error_fit.slope), "{:?}", r.error_fit);
    assert!(r.monotone && r.oracle_separated);
}

#[test]
fn canonical_leading_order_defect_and_fit_quality() {
    let mut spec = canonical_problem();
    spec.eps = vec![0.2, 0.1, 0.05];
    let runs = run(&spec, &[0]);
    let r = &runs[0].report;
    assert_eq!(r.entries.len(), 3);
    assert!(r.defect_projected_fit.slope >= 1.9, "{:?}", r.defect_projected_fit);
    assert!(r.error_fit.residual <= 0.15, "{:?}", r.error_fit);
    assert!(r.entries.iter().all(|e| e.error >= 0.0 && e.reference_estimate <= 0.1 * e.error));
}

#[test]
fn report_files_have_one_row_per_eps() {
    let mut spec = canonical_problem();
    spec.eps = vec![0.2, 0.1, 0.05];
    let runs = run(&spec, &[1]);
    let dir = tempfile::tempdir().unwrap();
    let written = emit_report(&runs[0].report, &runs[0].manifest, dir.path()).unwrap();
    assert_eq!(written.len(), 3);
    let errors = std::fs::read_to_string(dir.path().join("errors.csv")).unwrap();
    assert_eq!(errors.lines().count(), 4);
    let script = std::fs::read_to_string(dir.path().join("plot_errors.py")).unwrap();
    assert!(script.contains("errors.csv"));
    let manifest = std::fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
    assert!(manifest.contains("spec_normalized_sha256"));
}

#[test]
fn sampling_rejects_extra_profiles() {
    let mut spec = canonical_problem();
    let sd = eigendecompose(&spec.operator, &spec.weights).unwrap();
    spec.initial = vec![ModeProfile::default(); 3];
    let grid = UniformGrid::new(0.0, 0.1, 4).unwrap();
    assert!(sample_initial(&spec, &sd, grid).is_err());
}

#[test]
fn sampled_data_follows_mode_shapes() {
    let mut spec = canonical_problem();
    spec.initial.push(ModeProfile {
        bumps: vec![GaussianBump::new(0.5, 2.0, 0.0)],
    });
    let sd = eigendecompose(&spec.operator, &spec.weights).unwrap();
    let grid = UniformGrid::new(-1.0, 0.5, 5).unwrap();
    let field = sample_initial(&spec, &sd, grid).unwrap();
    for (i, xi) in grid.points().enumerate() {
        let w0 = (-xi * xi).exp();
        let w1 = 0.5 * (-2.0 * xi * xi).exp();
        assert!((field.get(i, 0) - (w0 + w1)).abs() < 1e-14);
        assert!((field.get(i, 1) - (w0 - w1)).abs() < 1e-14);
    }
}
