//! Cluster separation of the three gem batches before and after reduction.

use srca::baselines::pca_fit_reduce;
use srca::metrics::{evaluate, silhouette};
use srca::synthetic::{generate, GeneratorKind, GeneratorSpec};
use srca::{fit, FitConfig};

fn main() -> srca::Result<()> {
    let x = generate(&GeneratorSpec::new(GeneratorKind::Gem, 300, 6).with_noise(0.01))?;
    let labels = x.labels().expect("gem data carries batch labels").to_vec();
    println!("original SC {:.4}", silhouette(&x, &labels)?);

    let (_, pca) = pca_fit_reduce(&x, 2)?;
    let mut cfg = FitConfig::new(2);
    cfg.restarts = 3;
    let srca = fit(&x, &cfg)?.transform(&x)?;
    for (name, y) in [("PCA", &pca), ("SRCA", &srca)] {
        let r = evaluate(&x, y, Some(&labels), None)?;
        println!(
            "{name:<5} SC {:.4}  CHI {:.2}  DBI {:.4}  MSE {:.5}",
            r.sc.unwrap(),
            r.chi.unwrap(),
            r.dbi.unwrap(),
            r.mse
        );
    }
    Ok(())
}
