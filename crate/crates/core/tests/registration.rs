use dses_core::benchgen::{make_instance_with_alignment, sample_grid_transform, PoseRecord, ScenarioConfig, ShapeSpec};
use dses_core::harness::register_files;
use dses_core::metrics::evaluate_pose;
use dses_core::{dses, exhaustive_search, io, ErrorMetric, Execution, SearchConfig};

fn on_grid_case(seed: u64) -> (dses_core::benchgen::ScenarioInstance, SearchConfig) {
    let cfg = SearchConfig::new(3, 4f64.to_radians(), 6, 0.03);
    let scenario = ScenarioConfig {
        shape: ShapeSpec::Torus,
        points_reference: 160,
        points_source: 160,
        noise_sigma: 0.0,
        shared_sample: true,
        rng_seed: seed,
        ..ScenarioConfig::default()
    };
    let alignment = sample_grid_transform(cfg.rot_step, 3, cfg.trans_bin, 6, seed);
    (make_instance_with_alignment(&scenario, alignment).unwrap(), cfg)
}

#[test]
fn generated_files_register_back_to_the_stored_pose() {
    let (instance, cfg) = on_grid_case(21);
    let dir = tempfile::tempdir().unwrap();
    let [source, reference, pose] = instance.write(dir.path().join("case")).unwrap();
    let (result, report) = register_files(&source, &reference, &cfg, false).unwrap();
    let stored = PoseRecord::from_json_file(&pose).unwrap().to_transform().unwrap();
    let eval = evaluate_pose(&result.best, &stored);
    assert!(eval.mae_r < 1e-9 && eval.mae_t < 1e-12, "{eval:?}");
    assert!(report.chamfer_before > report.chamfer_after);
    assert_eq!(io::read_cloud(&source).unwrap().points(), instance.source.points());
}

#[test]
fn sequential_and_parallel_runs_agree_exactly() {
    let (instance, cfg) = on_grid_case(22);
    let seq = dses(&instance.source, &instance.reference, &cfg.clone().with_execution(Execution::Sequential)).unwrap();
    let par = dses(&instance.source, &instance.reference, &cfg.with_execution(Execution::Parallel)).unwrap();
    assert_eq!(seq.best, par.best);
    assert_eq!(seq.best_error.to_bits(), par.best_error.to_bits());
    assert_eq!(seq.candidates_refined, par.candidates_refined);
}

#[test]
fn exhaustive_search_finds_the_same_inlier_count_as_dses() {
    let (instance, cfg) = on_grid_case(23);
    let cfg = cfg.with_metric(ErrorMetric::SaturatedL0 { bin: 0.03 });
    let fast = dses(&instance.source, &instance.reference, &cfg).unwrap();
    let full = exhaustive_search(&instance.source, &instance.reference, &cfg).unwrap();
    assert_eq!(fast.best_inliers, full.best_inliers);
    assert_eq!(fast.best_inliers, instance.source.len());
}
