use std::fs::File;

use mbic_core::datagen::{generate, write_instance_csv, DesignKind, ErrorFamily, Scenario};
use mbic_core::dataset::load_csv;
use mbic_core::experiment::{read_replicates_csv, rescore, run_experiment, write_replicates_csv, ExperimentConfig};

#[test]
fn instance_csv_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let inst = generate::<f64>(&Scenario {
        n: 20,
        p: 6,
        p0: 2,
        beta_magnitude: 1.5,
        design: DesignKind::Orthogonalized,
        error: ErrorFamily::UniformSym,
        seed: 4,
    })
    .unwrap();
    write_instance_csv(&inst, File::create(&path).unwrap()).unwrap();
    let data = load_csv(&path, "y").unwrap();
    assert_eq!(data.y, inst.y);
    assert_eq!(data.x, inst.x);
    assert_eq!(data.names, ["x1", "x2", "x3", "x4", "x5", "x6"]);
}

#[test]
fn experiment_tables_reload_and_rescore() {
    let cfg = ExperimentConfig::from_json(
        r#"{"n": [40], "p_rule": "n^1.2", "p0": [2], "beta": [0.8], "errors": ["uniform_sym", "rademacher"],
            "replicates": 4, "criteria": ["bic", "mbic", "mbic2"], "strategy": "forward", "seed": 5,
            "identifiability_k": 2}"#,
    )
    .unwrap();
    let res = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("replicates.csv");
    write_replicates_csv(&res.outcomes, File::create(&path).unwrap()).unwrap();
    let records = read_replicates_csv(File::open(&path).unwrap()).unwrap();
    assert_eq!(records.len(), 2 * 4 * 3);
    for rec in &records {
        assert!((rescore(rec).unwrap() - rec.total).abs() <= 1e-9);
    }
    assert!(res.outcomes.iter().all(|o| o.identifiability.is_some_and(|r| r > 0.0)));
}
