//! Fit on 80% of the rows, score the held-out 20%.

use srca::baselines::{pca_fit_reduce, spca_fit};
use srca::data::split_train_test;
use srca::metrics::out_of_sample_mse;
use srca::synthetic::{generate, GeneratorKind, GeneratorSpec};
use srca::{fit, FitConfig};

fn main() -> srca::Result<()> {
    let x = generate(&GeneratorSpec::new(GeneratorKind::Torus, 500, 8).with_noise(0.01))?;
    let (train, test) = split_train_test(&x, 0.2, 0)?;
    for dp in [1, 2] {
        let pca = out_of_sample_mse(&pca_fit_reduce(&train, dp)?.0, &test)?;
        let spca = out_of_sample_mse(&spca_fit(&train, dp)?, &test)?;
        let mut cfg = FitConfig::new(dp);
        cfg.restarts = 3;
        let srca = out_of_sample_mse(&fit(&train, &cfg)?, &test)?;
        println!("d'={dp}  PCA {pca:.5}  SPCA {spca:.5}  SRCA {srca:.5}");
    }
    Ok(())
}
