//! Relaxed subset search against the exhaustive one on a 10-D embedding
//! of a circle.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srca::solver::{binomial, fit_exhaustive, fit_l1};
use srca::{DataMatrix, FitConfig, RotationMethod};

fn main() -> srca::Result<()> {
    let (n, d) = (200, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = DMatrix::from_fn(n, d, |i, j| {
        let t = i as f64 * std::f64::consts::TAU / n as f64;
        let e = 0.02 * rng.random_range(-1.0..1.0);
        match j {
            3 => 1.5 * t.cos() + e,
            7 => 1.5 * t.sin() + e,
            _ => j as f64 + e,
        }
    });
    let x = DataMatrix::new(x)?;
    let mut cfg = FitConfig::new(1);
    cfg.rotation = RotationMethod::Identity;
    println!("{} subsets for the exhaustive search", binomial(d, 2));
    let ex = fit_exhaustive(&x, &cfg)?;
    let l1 = fit_l1(&x, &cfg)?;
    println!("exhaustive  I = {}  loss {:.6}", ex.index_set, ex.final_loss);
    println!("l1 relaxed  I = {}  loss {:.6}", l1.index_set, l1.final_loss);
    if let Some(v) = &l1.relaxation {
        let shown: Vec<String> = v.values.iter().map(|w| format!("{w:.3}")).collect();
        println!("relaxed weights [{}]", shown.join(", "));
    }
    Ok(())
}
