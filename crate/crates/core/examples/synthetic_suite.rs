//! Training MSE of PCA, SPCA and SRCA on every synthetic shape.

use srca::baselines::{pca_fit_reduce, spca_fit};
use srca::metrics::{mse, Reducer};
use srca::synthetic::{generate, GeneratorKind, GeneratorSpec};
use srca::{fit, FitConfig};

fn main() -> srca::Result<()> {
    println!("{:<18}{:>4}{:>14}{:>14}{:>14}", "dataset", "d'", "PCA", "SPCA", "SRCA");
    for kind in GeneratorKind::ALL {
        let x = generate(&GeneratorSpec::new(kind, 400, 7))?;
        for dp in [1, 2] {
            let (_, pca) = pca_fit_reduce(&x, dp)?;
            let spca = spca_fit(&x, dp).and_then(|m| m.reduce(&x)).map(|y| mse(&x, &y));
            let mut cfg = FitConfig::new(dp);
            cfg.restarts = 3;
            let model = fit(&x, &cfg)?;
            let spca = match spca {
                Ok(Ok(v)) => format!("{v:.6}"),
                _ => "n/a".into(),
            };
            println!(
                "{:<18}{:>4}{:>14.6}{:>14}{:>14.6}",
                kind.to_string(),
                dp,
                mse(&x, &pca)?,
                spca,
                mse(&x, &model.transform(&x)?)?
            );
        }
    }
    Ok(())
}
