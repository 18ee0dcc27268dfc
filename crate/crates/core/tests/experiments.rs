use std::fs;

use skcov_core::experiments::{
    emit_report, read_report, read_samples_csv, run_experiment, Blocks, ExperimentConfig, ExperimentError,
    ExperimentKind, Method, Mode, OutputFormat,
};

fn small(grid: &[usize], replicas: usize) -> ExperimentConfig {
    ExperimentConfig { n_grid: grid.to_vec(), replicas, bootstrap_reps: 40, ..ExperimentConfig::default() }
}

#[test]
fn no_interaction_gives_a_point_mass() {
    let cfg = ExperimentConfig { t: 0.0, ..small(&[6, 8], 10) };
    let out = run_experiment(ExperimentKind::Fluctuation, &cfg, Some(1)).unwrap();
    assert!(out.samples.iter().all(|r| r.value == 0.0 && r.std_error.is_none()));
    let Blocks::Fluctuation { blocks, .. } = &out.report.results else { panic!("wrong block kind") };
    for b in blocks {
        assert_eq!(b.ks.value, 0.0);
        assert_eq!(b.w1.value, 0.0);
        assert_eq!(b.method, Method::Exact);
    }
}

#[test]
fn no_interaction_truncation_and_cavity_are_exact() {
    let cfg = ExperimentConfig { t: 0.0, depth: 2, ..small(&[6], 8) };
    let out = run_experiment(ExperimentKind::Truncation, &cfg, Some(1)).unwrap();
    let Blocks::Truncation { blocks, .. } = &out.report.results else { panic!() };
    assert!(blocks[0].rms_by_depth.iter().all(|e| e.value == 0.0));

    let out = run_experiment(ExperimentKind::Cavity, &cfg, Some(1)).unwrap();
    let Blocks::Cavity { blocks, .. } = &out.report.results else { panic!() };
    assert!(blocks[0].residual_rms.value < 1e-15);
    assert_eq!(blocks[0].degenerate_replicas, 8);
    assert!(blocks[0].standardized_field.is_none());
}

#[test]
fn deeper_truncation_extends_the_sweep() {
    let shallow = run_experiment(ExperimentKind::Truncation, &ExperimentConfig { depth: 1, ..small(&[8], 12) }, None).unwrap();
    let deep = run_experiment(ExperimentKind::Truncation, &ExperimentConfig { depth: 2, ..small(&[8], 12) }, None).unwrap();
    let (Blocks::Truncation { blocks: a, .. }, Blocks::Truncation { blocks: b, .. }) =
        (&shallow.report.results, &deep.report.results)
    else {
        panic!()
    };
    assert_eq!(a[0].rms_by_depth[..], b[0].rms_by_depth[..2]);
    let last: Vec<f64> = deep.samples.iter().filter(|r| r.experiment == "truncation_m2").map(|r| r.value).collect();
    let rms = (last.iter().map(|v| v * v).sum::<f64>() / last.len() as f64).sqrt();
    assert_eq!(rms, b[0].rms_by_depth[2].value);
}

#[test]
fn report_round_trips_and_csv_has_one_row_per_replica() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(&[6, 7], 9);
    let out = run_experiment(ExperimentKind::VectorCov, &ExperimentConfig { depth: 1, ..cfg }, Some(2)).unwrap();
    emit_report(&out, OutputFormat::Csv, dir.path()).unwrap();
    assert_eq!(read_report(&dir.path().join("report.json")).unwrap(), out.report);
    let rows = read_samples_csv(&dir.path().join("samples.csv")).unwrap();
    assert_eq!(rows, out.samples);
    // Series T0, X0, T1, X1 for each of two sizes.
    assert_eq!(rows.len(), 2 * 4 * 9);
    for n in [6, 7] {
        assert_eq!(rows.iter().filter(|r| r.n == n && r.experiment == "vector_cov_T1").count(), 9);
    }
    let header = fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    assert!(header.starts_with("experiment,N,replica,seed,value,std_error\n"));
    let text = fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert!(text.contains("\"schema\": 1"));
}

#[test]
fn output_is_independent_of_worker_count() {
    let cfg = small(&[8], 16);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    emit_report(&run_experiment(ExperimentKind::Cavity, &cfg, Some(1)).unwrap(), OutputFormat::Json, a.path()).unwrap();
    emit_report(&run_experiment(ExperimentKind::Cavity, &cfg, Some(3)).unwrap(), OutputFormat::Json, b.path()).unwrap();
    for f in ["report.json", "samples.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn mcmc_mode_propagates_errors() {
    let cfg = ExperimentConfig {
        mode: Mode::Mcmc,
        mcmc_sweeps: 600,
        mcmc_burn_in: 100,
        mcmc_chains: 2,
        ..small(&[10], 4)
    };
    let out = run_experiment(ExperimentKind::Fluctuation, &cfg, None).unwrap();
    assert!(out.samples.iter().all(|r| r.std_error.is_some_and(|s| s > 0.0)));
    let Blocks::Fluctuation { blocks, .. } = &out.report.results else { panic!() };
    assert_eq!(blocks[0].method, Method::Mcmc);
    assert!(blocks[0].mean_mcmc_std_error.is_some());
    // Exact-only experiments refuse the sampler.
    let err = run_experiment(ExperimentKind::Truncation, &cfg, None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn failures_map_to_exit_codes() {
    let at = ExperimentConfig { t: 1.5, h: 0.0, ..small(&[6], 2) };
    let err = run_experiment(ExperimentKind::Fluctuation, &at, None).unwrap_err();
    assert!(matches!(err, ExperimentError::ATViolation { .. }));
    assert_eq!(err.exit_code(), 4);

    let big = ExperimentConfig { enumeration_cap: 10, ..small(&[12], 2) };
    assert_eq!(run_experiment(ExperimentKind::Cavity, &big, None).unwrap_err().exit_code(), 3);

    let memo = ExperimentConfig { memo_cap: 5, ..small(&[8], 2) };
    assert_eq!(run_experiment(ExperimentKind::Truncation, &memo, None).unwrap_err().exit_code(), 3);

    let deep = ExperimentConfig { depth: 4, ..small(&[8], 2) };
    assert_eq!(run_experiment(ExperimentKind::VectorCov, &deep, None).unwrap_err().exit_code(), 2);

    assert_eq!(run_experiment(ExperimentKind::Cavity, &small(&[8], 2), Some(0)).unwrap_err().exit_code(), 2);
}
