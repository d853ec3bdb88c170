use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use srca::data::split_train_test;
use srca::metrics::{mse, out_of_sample_mse};
use srca::solver::{fit_exhaustive, fit_l1};
use srca::synthetic::{generate, GeneratorKind, GeneratorSpec};
use srca::{fit, DataMatrix, FitConfig, RotationMethod, Strategy};

fn random_rotation(seed: u64, d: usize) -> DMatrix<f64> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    a.qr().q()
}

fn moved(x: &DataMatrix, q: &DMatrix<f64>, b: &DVector<f64>) -> DataMatrix {
    let mut v = x.values() * q.transpose();
    for mut row in v.row_iter_mut() {
        row += b.transpose();
    }
    DataMatrix::new(v).unwrap()
}

#[test]
fn rigid_motion_equivariance() {
    for (kind, dp) in [(GeneratorKind::Torus, 1), (GeneratorKind::Gem, 2), (GeneratorKind::OrthogonalLoops, 1)] {
        let x = generate(&GeneratorSpec::new(kind, 200, 21).with_noise(0.01)).unwrap();
        let q = random_rotation(3, 3);
        let b = DVector::from_vec(vec![5.0, -2.0, 0.5]);
        let xm = moved(&x, &q, &b);
        let mut cfg = FitConfig::new(dp);
        cfg.restarts = 3;
        let m = fit(&x, &cfg).unwrap();
        let mm = fit(&xm, &cfg).unwrap();
        let y = m.transform(&x).unwrap();
        let ym = mm.transform(&xm).unwrap();
        let (e, em) = (mse(&x, &y).unwrap(), mse(&xm, &ym).unwrap());
        assert!((e - em).abs() <= 1e-8 * e, "{kind}: {e} vs {em}");
        let diff = (moved(&y, &q, &b).values() - ym.values()).abs().max();
        assert!(diff < 1e-6, "{kind}: outputs differ by {diff}");
    }
}

#[test]
fn fits_are_deterministic() {
    let x = generate(&GeneratorSpec::new(GeneratorKind::Gem, 300, 4).with_noise(0.02)).unwrap();
    let mut cfg = FitConfig::new(1);
    cfg.restarts = 4;
    cfg.seed = 9;
    assert_eq!(fit_exhaustive(&x, &cfg).unwrap(), fit_exhaustive(&x, &cfg).unwrap());
    assert_eq!(fit_l1(&x, &cfg).unwrap(), fit_l1(&x, &cfg).unwrap());
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let serial = one.install(|| fit_exhaustive(&x, &cfg).unwrap());
    assert_eq!(serial, fit_exhaustive(&x, &cfg).unwrap());
}

#[test]
fn unseen_points_land_on_the_sphere() {
    let x = generate(&GeneratorSpec::new(GeneratorKind::Sphere, 400, 5).with_noise(0.01)).unwrap();
    let (train, test) = split_train_test(&x, 0.2, 1).unwrap();
    let m = fit(&train, &FitConfig::new(2)).unwrap();
    let y = m.transform(&test).unwrap();
    let c = m.ambient_center();
    let r = m.radius().unwrap();
    for i in 0..y.rows() {
        assert!(((y.row(i) - &c).norm() - r).abs() < 1e-9);
    }
    let oos = out_of_sample_mse(&m, &test).unwrap();
    assert!(oos < 3.0 * 0.01 && oos > 0.0);
}

#[test]
fn exhaustive_never_loses_to_l1() {
    for seed in 0..6 {
        let x = generate(&GeneratorSpec::new(GeneratorKind::Torus, 150, seed).with_noise(0.05)).unwrap();
        let cfg = FitConfig::new(1);
        let ex = fit_exhaustive(&x, &cfg).unwrap();
        let l1 = fit_l1(&x, &cfg).unwrap();
        assert!(l1.final_loss >= ex.final_loss - 1e-9 * (1.0 + ex.final_loss));
    }
}

#[test]
fn identity_rotation_keeps_axes() {
    let rows: Vec<Vec<f64>> = (0..24)
        .map(|k| {
            let t = k as f64 * std::f64::consts::TAU / 24.0;
            vec![7.0, 2.0 * t.cos() + 1.0, -4.0, 2.0 * t.sin()]
        })
        .collect();
    let x = DataMatrix::from_rows(&rows).unwrap();
    let mut cfg = FitConfig::new(1);
    cfg.rotation = RotationMethod::Identity;
    cfg.strategy = Strategy::Exhaustive;
    let m = fit(&x, &cfg).unwrap();
    assert_eq!(m.index_set.one_based(), vec![2, 4]);
    assert!((m.radius().unwrap() - 2.0).abs() < 1e-9);
    let c = m.ambient_center();
    for (j, want) in [7.0, 1.0, -4.0, 0.0].into_iter().enumerate() {
        assert!((c[j] - want).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn srca_never_worse_than_pca(seed in 0u64..1000, dp in 1usize..3) {
        let x = generate(&GeneratorSpec::new(GeneratorKind::Gem, 90, seed).with_noise(0.05)).unwrap();
        let (_, y) = srca::baselines::pca_fit_reduce(&x, dp).unwrap();
        let pca = mse(&x, &y).unwrap();
        let m = fit(&x, &FitConfig::new(dp)).unwrap();
        let s = mse(&x, &m.transform(&x).unwrap()).unwrap();
        prop_assert!(s <= pca + 1e-9 * pca);
    }

    #[test]
    fn transform_is_idempotent(seed in 0u64..1000) {
        let x = generate(&GeneratorSpec::new(GeneratorKind::Torus, 60, seed).with_noise(0.02)).unwrap();
        let m = fit(&x, &FitConfig::new(1)).unwrap();
        let y = m.transform(&x).unwrap();
        let z = m.transform(&y).unwrap();
        prop_assert!((y.values() - z.values()).abs().max() < 1e-10);
    }
}
