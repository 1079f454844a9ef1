use mbic_core::datagen::{generate, DesignKind, ErrorFamily, Scenario};
use mbic_core::search::forward_path;
use mbic_core::{extend_fit, fit_model, FactorState, ModelIndexSet};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64) -> mbic_core::Instance {
    generate(&Scenario {
        n: 100,
        p: 50,
        p0: 5,
        beta_magnitude: 0.5,
        design: DesignKind::IidNormal,
        error: ErrorFamily::StandardNormal,
        seed,
    })
    .unwrap()
}

#[test]
fn extend_fit_tracks_scratch_fits_on_random_paths() {
    for seed in 0..60u64 {
        let inst = instance(seed);
        let mut order: Vec<usize> = (0..50).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut state = FactorState::new(&inst.x, &inst.y).unwrap();
        let mut model = ModelIndexSet::empty();
        for &j in &order {
            let (fit, next) = extend_fit(state, &inst.x, j).unwrap();
            state = next;
            model = model.with(j);
            let scratch = fit_model(&inst.x, &inst.y, &model).unwrap();
            assert!(
                (fit.rss - scratch.rss).abs() <= 1e-8 * scratch.rss,
                "seed {seed} size {}: {} vs {}",
                model.len(),
                fit.rss,
                scratch.rss
            );
            assert_eq!(fit.rank, scratch.rank);
        }
    }
}

#[test]
fn forward_path_rss_matches_scratch_fits() {
    for seed in 0..20u64 {
        let inst = instance(500 + seed);
        let path = forward_path(&inst.x, &inst.y, 20).unwrap();
        for (k, (model, &rss)) in path.models.iter().zip(&path.rss).enumerate() {
            assert_eq!(model.len(), k);
            let scratch = fit_model(&inst.x, &inst.y, model).unwrap().rss;
            assert!((rss - scratch).abs() <= 1e-8 * scratch);
            if k > 0 {
                assert!(rss <= path.rss[k - 1] * (1.0 + 1e-12));
            }
        }
    }
}

#[test]
fn f32_and_f64_fits_agree_loosely() {
    let inst = instance(9);
    let x32 = mbic_core::DesignMatrix::<f32>::from_col_major(
        100,
        50,
        inst.x.as_col_major().iter().map(|&v| v as f32).collect(),
    )
    .unwrap();
    let y32: Vec<f32> = inst.y.iter().map(|&v| v as f32).collect();
    let s = ModelIndexSet::new(vec![0, 1, 2, 3, 4, 17]);
    let a = fit_model(&inst.x, &inst.y, &s).unwrap().rss;
    let b = fit_model(&x32, &y32, &s).unwrap().rss as f64;
    assert!((a - b).abs() <= 1e-4 * a);
}
