use heterospectra::estimators::*;
use heterospectra::matlin::*;
use heterospectra::synthgen::{build_signal, generate_dataset, realize_all, replicate_seed, Preset};
use heterospectra::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn frame(n: usize, r: usize, seed: u64) -> Frame {
    Frame::orthonormalize(&gaussian(n, r, seed)).unwrap()
}

/// `U diag(vals) Uᵀ`
fn low_rank(u: &Frame, vals: &[f64]) -> Mat {
    let scaled = Mat::from_fn(u.n(), u.r(), |i, j| u.mat()[(i, j)] * vals[j]);
    let mut a = matmul_nt(&scaled, u.mat()).unwrap();
    a.symmetrize();
    a
}

fn frame_of(e: &SubspaceEstimate) -> &Frame {
    &e.frame
}

#[test]
fn gram_examples() {
    assert_eq!(gram(&Mat::identity(3)), Mat::identity(3));
    let row = Mat::from_rows(&[vec![1.0, 2.0, 2.0]]).unwrap();
    assert_eq!(gram(&row), Mat::from_diag(&[9.0]));
    let g = gram(&gaussian(5, 8, 1));
    assert_eq!(g, g.transpose());
    let e = sym_eig(&g, DEFAULT_EIG_TOL).unwrap();
    assert!(e.values.iter().all(|&v| v >= -1e-10));
}

#[test]
fn rank_one_flat_signal_matches_scalar_recursion() {
    // N_T = a_T I + (J - I)/4 by symmetry, so the iteration reduces to
    // a_{T+1} = (a_T + 3/4)/4 with the same stopping rule
    let u = vec![0.5; 4];
    let a = Mat::from_fn(4, 4, |i, j| u[i] * u[j]);
    let cfg = HeteroPcaConfig::new(1);
    let run = hetero_pca_observed(&a, &cfg, |_, _| {}).unwrap();

    let mut diag = 0.0f64;
    let mut steps = 0;
    loop {
        let next = (diag + 0.75) / 4.0;
        let change = (next - diag).abs();
        let scale = diag.abs();
        diag = next;
        steps += 1;
        if change <= cfg.tol * (1.0 + scale) {
            break;
        }
    }
    assert!(steps <= 50);
    assert_eq!(run.estimate.iterations, steps);
    assert!(run.estimate.converged);
    for &x in &run.diagonal {
        assert!((x - diag).abs() < 1e-12);
        assert!((x - 0.25).abs() < 1e-8);
    }
    let truth = Frame::new(Mat::from_columns(&[u]).unwrap()).unwrap();
    assert!(sin_theta(frame_of(&run.estimate), &truth).unwrap() < 1e-8);
}

#[test]
fn diagonal_input_has_no_rank_r_structure() {
    let a = Mat::from_diag(&[1.0, 2.0, 3.0]);
    assert!(matches!(
        hetero_pca(&a, &HeteroPcaConfig::new(1)),
        Err(Error::DegenerateSpectrum(_))
    ));
    assert!(matches!(diagonal_deletion_pca(&a, 1), Err(Error::DegenerateSpectrum(_))));
}

#[test]
fn rank_must_be_below_dimension() {
    let a = Mat::identity(3);
    for r in [0, 3, 4] {
        assert!(matches!(hetero_pca(&a, &HeteroPcaConfig::new(r)), Err(Error::Parameter(_))));
        assert!(matches!(diagonal_deletion_pca(&a, r), Err(Error::Parameter(_))));
        assert!(matches!(vanilla_pca(&a, r), Err(Error::Parameter(_))));
    }
    assert!(matches!(
        hetero_pca(&a, &HeteroPcaConfig::new(1).with_tol(0.0)),
        Err(Error::Parameter(_))
    ));
    assert!(matches!(
        idealized_oracle(&a, &Mat::zeros(2, 2), 1),
        Err(Error::Shape(_))
    ));
}

#[test]
fn deletion_is_hetero_with_no_iterations() {
    let u = frame(25, 2, 4);
    let mut a = low_rank(&u, &[9.0, 4.0]);
    let noise = gaussian(25, 25, 5);
    a = a.add(&noise.add(&noise.transpose()).unwrap().scale(0.05)).unwrap();
    a.symmetrize();
    let h = hetero_pca(&a, &HeteroPcaConfig::new(2).with_max_iter(0)).unwrap();
    let d = diagonal_deletion_pca(&a, 2).unwrap();
    assert_eq!(h.iterations, 0);
    assert_eq!(d.iterations, 0);
    assert!(h.diag_trace.is_empty());
    assert!(sin_theta(&h.frame, &d.frame).unwrap() < 1e-10);
}

#[test]
fn off_diagonal_is_never_rewritten() {
    let u = frame(30, 2, 8);
    let a = low_rank(&u, &[10.0, 3.0]).add(&Mat::from_diag(&(0..30).map(|i| i as f64 * 0.1).collect::<Vec<_>>())).unwrap();
    let mut seen = 0;
    hetero_pca_observed(&a, &HeteroPcaConfig::new(2), |_, it| {
        seen += 1;
        for i in 0..30 {
            for j in 0..30 {
                if i != j {
                    assert_eq!(it[(i, j)].to_bits(), a[(i, j)].to_bits());
                }
            }
        }
    })
    .unwrap();
    assert!(seen >= 2);
}

#[test]
fn noise_free_low_rank_is_a_fixed_point() {
    for seed in 0..5 {
        let u = frame(30, 2, 100 + seed);
        let a = low_rank(&u, &[5.0, 2.0]);
        let run = hetero_pca_observed(&a, &HeteroPcaConfig::new(2).with_max_iter(1000), |_, _| {}).unwrap();
        assert!(run.estimate.converged);
        let diag = a.diag();
        for (x, y) in run.diagonal.iter().zip(&diag) {
            assert!((x - y).abs() < 1e-7, "{} vs {}", x, y);
        }
        assert!(sin_theta(&run.estimate.frame, &u).unwrap() < 1e-7);
        assert_eq!(run.estimate.diag_trace.len(), run.estimate.iterations);
    }
}

#[test]
fn vanilla_recovers_noise_free_and_degrades_with_diagonal_spread() {
    let n = 20;
    let u = frame(n, 1, 11);
    let a = low_rank(&u, &[10.0]);
    assert!(sin_theta(&vanilla_pca(&a, 1).unwrap().frame, &u).unwrap() < 1e-10);
    let mut last = 0.0;
    for spread in [0.5, 2.0, 8.0] {
        let t: Vec<f64> = (0..n).map(|i| spread * i as f64 / n as f64).collect();
        let ahat = a.add(&Mat::from_diag(&t)).unwrap();
        let got = sin_theta(&vanilla_pca(&ahat, 1).unwrap().frame, &u).unwrap();
        // independent full eigendecomposition
        let e = sym_eig(&ahat, DEFAULT_EIG_TOL).unwrap();
        let top = (0..n).max_by(|&x, &y| e.values[x].total_cmp(&e.values[y])).unwrap();
        let direct = Frame::new(Mat::from_fn(n, 1, |i, _| e.vectors[(i, top)])).unwrap();
        assert!((got - sin_theta(&direct, &u).unwrap()).abs() < 1e-10);
        assert!(got > last);
        last = got;
    }
}

#[test]
fn oracle_examples() {
    let u = frame(15, 2, 12);
    let a = low_rank(&u, &[4.0, 1.0]);
    let exact = idealized_oracle(&a, &Mat::zeros(15, 15), 2).unwrap();
    assert!(sin_theta(&exact.frame, &u).unwrap() < 1e-10);
    let z = Mat::from_diag(&(0..15).map(|i| 3.0 * i as f64).collect::<Vec<_>>());
    let o = idealized_oracle(&a, &z, 2).unwrap();
    let v = vanilla_pca(&a, 2).unwrap();
    assert!(sin_theta(&o.frame, &v.frame).unwrap() < 1e-12);
}

#[test]
fn permuting_the_input_permutes_the_rows() {
    let n = 20;
    let u = frame(n, 2, 13);
    let mut a = low_rank(&u, &[8.0, 3.0]);
    let noise = gaussian(n, n, 14);
    a = a.add(&noise.add(&noise.transpose()).unwrap().scale(0.1)).unwrap();
    a.symmetrize();
    let perm: Vec<usize> = (0..n).map(|i| (7 * i + 3) % n).collect();
    let pa = Mat::from_fn(n, n, |i, j| a[(perm[i], perm[j])]);
    let cfg = HeteroPcaConfig::new(2);
    let base = hetero_pca(&a, &cfg).unwrap();
    let moved = hetero_pca(&pa, &cfg).unwrap();
    let permuted = Frame::new(base.frame.mat().select_rows(&perm)).unwrap();
    assert!(sin_theta(&permuted, &moved.frame).unwrap() < 1e-10);
}

#[test]
fn figure2_diagonal_change_settles_across_seeds() {
    let spec = Preset::Figure2 { n: 600 }.spec().unwrap();
    let signal = build_signal(&spec).unwrap();
    let covs = realize_all(&spec, &signal, 0).unwrap();
    let cfg = HeteroPcaConfig::new(2);
    for t in 0..20 {
        let data = generate_dataset(&signal, &covs, spec.noise_driver, 1.0, replicate_seed(21, t)).unwrap();
        let est = hetero_pca(&gram(&data.mhat), &cfg).unwrap();
        assert!(est.converged);
        let tr = &est.diag_trace;
        let last = *tr.last().unwrap();
        let scale = 1.0 + tr[0];
        assert!(last <= cfg.tol * scale * 10.0);
        // after the first step the change shrinks every iteration
        for w in tr[1..].windows(2) {
            assert!(w[1] <= w[0], "trace {:?}", tr);
        }
    }
}

/// Row distances after aligning each estimate to the truth.
fn aligned(f: &Frame, truth: &Frame) -> Mat {
    matmul(f.mat(), &procrustes(f, truth).unwrap()).unwrap()
}

fn row_dist(a: &Mat, b: &Mat, i: usize) -> f64 {
    a.row(i).iter().zip(b.row(i)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}

#[test]
fn figure1_hetero_sits_near_the_oracle() {
    let spec = Preset::Figure1.spec().unwrap();
    let signal = build_signal(&spec).unwrap();
    let covs = realize_all(&spec, &signal, 0).unwrap();
    let a = gram(&signal.m);
    let class1: Vec<usize> = (0..signal.n()).filter(|&i| signal.labels[i] == 0).collect();
    let mut closer = Vec::new();
    for t in 0..3 {
        let data = generate_dataset(&signal, &covs, spec.noise_driver, 1.0, replicate_seed(17, t)).unwrap();
        let ahat = gram(&data.mhat);
        let h = hetero_pca(&ahat, &HeteroPcaConfig::new(2)).unwrap();
        let d = diagonal_deletion_pca(&ahat, 2).unwrap();
        let o = idealized_oracle(&a, &ahat.sub(&a).unwrap(), 2).unwrap();
        assert!(sin_theta(&d.frame, &signal.u).unwrap() > sin_theta(&h.frame, &signal.u).unwrap());

        let (hu, du, ou) = (aligned(&h.frame, &signal.u), aligned(&d.frame, &signal.u), aligned(&o.frame, &signal.u));
        let mean = |f: &dyn Fn(usize) -> f64| class1.iter().map(|&i| f(i)).sum::<f64>() / class1.len() as f64;
        let h_to_o = mean(&|i| row_dist(&hu, &ou, i));
        let d_to_o = mean(&|i| row_dist(&du, &ou, i));
        closer.push(d_to_o - h_to_o);

        // spread of the oracle's class-1 rows around their centroid
        let r = ou.cols();
        let centroid: Vec<f64> = (0..r).map(|j| mean(&|i| ou[(i, j)])).collect();
        let spread = mean(&|i| ou.row(i).iter().zip(&centroid).map(|(x, c)| (x - c) * (x - c)).sum::<f64>().sqrt());
        let all: Vec<usize> = (0..signal.n()).collect();
        let h_all = all.iter().map(|&i| row_dist(&hu, &ou, i)).sum::<f64>() / all.len() as f64;
        assert!(h_all < 2.0 * spread, "{} vs spread {}", h_all, spread);
    }
    assert!(median(closer) > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn estimates_are_orthonormal_with_consistent_traces(seed in 0u64..10_000, n in 6usize..20, r in 1usize..3) {
        let u = frame(n, r, seed);
        let vals: Vec<f64> = (0..r).map(|j| 10.0 / (j + 1) as f64).collect();
        let noise = gaussian(n, n, seed + 1);
        let mut a = low_rank(&u, &vals).add(&noise.add(&noise.transpose()).unwrap().scale(0.05)).unwrap();
        a.symmetrize();
        for est in [
            hetero_pca(&a, &HeteroPcaConfig::new(r)).unwrap(),
            diagonal_deletion_pca(&a, r).unwrap(),
            vanilla_pca(&a, r).unwrap(),
        ] {
            let f = est.frame.mat();
            prop_assert!(matmul_tn(f, f).unwrap().sub(&Mat::identity(r)).unwrap().max_abs() < 1e-10);
            prop_assert_eq!(est.diag_trace.len(), est.iterations);
            prop_assert_eq!(est.eigenvalues.len(), r);
        }
    }

    #[test]
    fn estimate_json_round_trips(seed in 0u64..1000) {
        let u = frame(8, 1, seed);
        let est = hetero_pca(&low_rank(&u, &[3.0]), &HeteroPcaConfig::new(1)).unwrap();
        let json = serde_json::to_string(&est).unwrap();
        let back: SubspaceEstimate = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back.frame.mat(), est.frame.mat());
        prop_assert_eq!(back.diag_trace, est.diag_trace);
        prop_assert_eq!(back.iterations, est.iterations);
    }
}
