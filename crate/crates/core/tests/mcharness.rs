use heterospectra::estimators::{gram, hetero_pca, HeteroPcaConfig};
use heterospectra::inference::{ellipse, ellipse_at};
use heterospectra::matlin::*;
use heterospectra::mcharness::*;
use heterospectra::synthgen::*;
use heterospectra::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn small_signal() -> SignalModel {
    build_signal(&Preset::Figure2 { n: 60 }.spec().unwrap()).unwrap()
}

#[test]
fn rotated_truth_has_zero_error_rows() {
    let s = small_signal();
    let t = 0.7f64;
    let r = Mat::from_rows(&[vec![t.cos(), -t.sin()], vec![t.sin(), t.cos()]]).unwrap();
    let uhat = s.u.rotate(&r).unwrap();
    let rows: Vec<usize> = (0..s.n()).collect();
    let e = align_and_extract(&uhat, &s, &rows).unwrap();
    assert!(e.raw.iter().chain(&e.scaled).flatten().all(|x| x.abs() < 1e-10));
}

#[test]
fn single_perturbed_entry_is_extracted_to_first_order() {
    let n = 200;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = Mat::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let u = Frame::orthonormalize(&g).unwrap();
    let v = Frame::orthonormalize(&Mat::from_fn(5, 2, |i, j| ((i + 2 * j) % 3) as f64 + 0.5 * j as f64)).unwrap();
    let lambdas = vec![3.0, 2.0];
    let ul = Mat::from_fn(n, 2, |i, j| u.mat()[(i, j)] * lambdas[j]);
    let s = SignalModel {
        m: matmul_nt(&ul, v.mat()).unwrap(),
        u: u.clone(),
        lambdas,
        v,
        labels: vec![0; n],
    };
    let delta = 1e-4;
    let mut m = u.mat().clone();
    m[(1, 0)] += delta;
    let uhat = Frame::orthonormalize(&m).unwrap();
    let e = align_and_extract(&uhat, &s, &[1, 2]).unwrap();
    assert!((e.raw[0][0] - delta).abs() < 0.05 * delta, "{:?}", e.raw[0]);
    assert!(e.raw[0][1].abs() < 0.05 * delta);
    assert!(e.raw[1].iter().all(|x| x.abs() < 0.05 * delta));
    assert!((e.scaled[0][0] - 3.0 * e.raw[0][0]).abs() < 1e-15);
    assert!((e.scaled[0][1] - 2.0 * e.raw[0][1]).abs() < 1e-15);
}

#[test]
fn noise_free_estimate_has_tiny_error_rows() {
    let s = small_signal();
    let est = hetero_pca(&gram(&s.m), &HeteroPcaConfig::new(2)).unwrap();
    let rows: Vec<usize> = (0..s.n()).collect();
    let e = align_and_extract(&est.frame, &s, &rows).unwrap();
    assert!(e.raw.iter().flatten().all(|x| x.abs() < 1e-7));
}

#[test]
fn ks_calibration() {
    let mut over = 0;
    for seed in 0..20 {
        let k = ks_stat(&normals(10_000, seed)).unwrap();
        assert!(k < 0.03, "seed {} ks {}", seed, k);
        if k >= 0.02 {
            over += 1;
        }
    }
    assert!(over <= 2);
    assert_eq!(ks_stat(&[0.0; 50]).unwrap(), 0.5);
    let wide: Vec<f64> = normals(10_000, 99).iter().map(|x| 2.0 * x).collect();
    assert!(ks_stat(&wide).unwrap() > 0.05);
    assert!(matches!(ks_stat(&[1.0]), Err(Error::Parameter(_))));
    assert!(matches!(ks_stat(&[]), Err(Error::Parameter(_))));
}

#[test]
fn slope_fit_recovers_a_power_law() {
    let x = [0.05f64, 0.1, 0.2, 0.4];
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = x.iter().map(|v| (3.0 * v.powf(1.25)).ln()).collect();
    assert!((fit_slope(&lx, &ly).unwrap() - 1.25).abs() < 1e-12);
    assert!(matches!(fit_slope(&[1.0, 1.0], &[0.0, 2.0]), Err(Error::Parameter(_))));
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
}

#[test]
fn ellipse_mismatch_reference_shapes() {
    let a = ellipse(&Mat::identity(2), 0.95, 100).unwrap();
    assert!(ellipse_mismatch(&a, &a, 400) < 1e-12);
    let big = ellipse(&Mat::identity(2).scale(4.0), 0.95, 100).unwrap();
    // areas π and 4π: difference 3π over union 4π
    assert!((ellipse_mismatch(&a, &big, 400) - 0.75).abs() < 0.02);
    let far = ellipse_at(&Mat::identity(2), [100.0, 0.0], 0.95, 100).unwrap();
    assert!((ellipse_mismatch(&a, &far, 400) - 1.0).abs() < 1e-12);
}

#[test]
fn noise_free_single_replicate() {
    let mut cfg = ExperimentConfig::from_preset(Preset::Figure2 { n: 60 }, 2, 1, 0);
    cfg.noise_scale = 0.0;
    let s = run_experiment(&cfg).unwrap();
    assert_eq!(s.replicates, 1);
    assert!(s.rows.iter().all(|r| r.raw.abs() < 1e-7));
    assert!(s.coverage.overall.is_none());
    assert_eq!(s.coverage.undefined, 1);
}

#[test]
fn noise_free_comparison_only_deletion_is_biased() {
    // with n = 1000 the hollowed signal keeps its second direction, so the
    // deletion estimate is biased but still alignable
    let spec = MixtureSpec {
        d: 20,
        sizes: vec![200, 400, 400],
        means: section5_means(20, 5.5),
        covs: vec![CovSpec::Spherical { variance: 1.0 }; 3],
        noise_driver: NoiseDriver::Gaussian,
    };
    let mut cfg = ExperimentConfig::from_spec(spec, 2, 2, 0);
    cfg.noise_scale = 0.0;
    cfg.methods = vec![Method::Hetero, Method::Deletion, Method::Vanilla, Method::Oracle];
    let table = method_comparison(&cfg).unwrap();
    for m in &table {
        if m.method == Method::Deletion {
            assert!(m.median > 1e-4, "deletion {}", m.median);
        } else {
            assert!(m.median < 1e-7, "{} {}", m.method, m.median);
        }
    }
    cfg.methods = vec![Method::Hetero];
    assert!(matches!(method_comparison(&cfg), Err(Error::Config { .. })));
}

#[test]
fn zero_replicates_is_a_config_error() {
    let cfg = ExperimentConfig::from_preset(Preset::Figure2 { n: 60 }, 2, 0, 0);
    assert!(matches!(run_experiment(&cfg), Err(Error::Config { .. })));
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let mut cfg = ExperimentConfig::from_preset(Preset::Figure2 { n: 90 }, 2, 8, 4);
    cfg.methods = vec![Method::Hetero, Method::Deletion];
    cfg.outputs.rows = vec![0, 45];
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_experiment(&cfg).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.rows_csv(), b.rows_csv());
    assert_eq!(a.ks_csv(), b.ks_csv());
    assert_eq!(a.l2inf_csv(), b.l2inf_csv());
    assert_eq!(a.coverage_json().unwrap(), b.coverage_json().unwrap());
}

#[test]
fn scaling_grid_needs_four_points() {
    let cfg = ExperimentConfig::from_preset(Preset::Figure2 { n: 60 }, 2, 2, 0);
    for grid in [&[][..], &[0.1, 0.2, 0.4][..]] {
        assert!(matches!(scaling_study(&cfg, ScaleAxis::Noise, grid), Err(Error::Parameter(_))));
    }
}

#[test]
fn figure2_ellipses_are_close_at_reduced_scale() {
    let cfg = ExperimentConfig::from_preset(Preset::Figure2 { n: 300 }, 2, 400, 8);
    let s = run_experiment(&cfg).unwrap();
    assert_eq!(s.ellipses.len(), 1);
    assert!(s.ellipses[0].mismatch < 0.15, "{}", s.ellipses[0].mismatch);
    assert!(s.ks.iter().all(|k| (0.0..=1.0).contains(&k.ks)));
    let c = s.coverage.overall.unwrap();
    assert!((0.0..=1.0).contains(&c));
}

#[test]
fn hetero_never_loses_to_deletion_on_shipped_presets() {
    let presets = [
        Preset::Figure1,
        Preset::Figure2 { n: 300 },
        Preset::Elliptical,
        Preset::SphericalReference,
        Preset::Angle { theta: 0.5 },
    ];
    for p in presets {
        let mut cfg = ExperimentConfig::from_preset(p, 2, 4, 5);
        cfg.methods = vec![Method::Hetero, Method::Deletion];
        let table = method_comparison(&cfg).unwrap();
        let h = table.iter().find(|m| m.method == Method::Hetero).unwrap();
        let d = table.iter().find(|m| m.method == Method::Deletion).unwrap();
        assert!(h.median <= d.median, "{}: hetero {} deletion {}", p, h.median, d.median);
    }
}

#[test]
fn config_json_rejects_unknown_keys_and_round_trips() {
    let cfg = ExperimentConfig::from_preset(Preset::Angle { theta: 0.5 }, 2, 10, 3);
    let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(serde_json::to_string(&back).unwrap(), serde_json::to_string(&cfg).unwrap());
    let bad = r#"{"preset": "figure1", "rank": 2, "replicates": 1, "colour": "red"}"#;
    assert!(serde_json::from_str::<ExperimentConfig>(bad).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ks_is_a_distance_in_unit_interval(v in prop::collection::vec(-10.0f64..10.0, 2..200)) {
        let k = ks_stat(&v).unwrap();
        prop_assert!((0.0..=1.0).contains(&k));
        // the statistic only depends on the sample as a multiset
        let mut rev = v.clone();
        rev.reverse();
        prop_assert_eq!(ks_stat(&rev).unwrap(), k);
    }

    #[test]
    fn ellipse_mismatch_is_symmetric(a in 0.2f64..3.0, b in 0.2f64..3.0, shift in -2.0f64..2.0) {
        let e1 = ellipse(&Mat::from_diag(&[a, 1.0]), 0.95, 60).unwrap();
        let e2 = ellipse_at(&Mat::from_diag(&[1.0, b]), [shift, 0.0], 0.95, 60).unwrap();
        let m12 = ellipse_mismatch(&e1, &e2, 200);
        let m21 = ellipse_mismatch(&e2, &e1, 200);
        prop_assert!((0.0..=1.0).contains(&m12));
        prop_assert!((m12 - m21).abs() < 1e-12);
    }
}
