//! The same fit under each rotation method.

use srca::metrics::mse;
use srca::synthetic::{generate, GeneratorKind, GeneratorSpec};
use srca::{fit, FitConfig, RotationMethod};

fn main() -> srca::Result<()> {
    let x = generate(&GeneratorSpec::new(GeneratorKind::Gem, 300, 3).with_noise(0.01))?;
    for rot in ["identity", "pca", "varimax", "quartimax", "equamax", "parsimax", "orthomax:0.5"] {
        let mut cfg = FitConfig::new(1);
        cfg.rotation = rot.parse::<RotationMethod>()?;
        cfg.restarts = 3;
        let m = fit(&x, &cfg)?;
        println!("{rot:<14} I = {:<8} mse {:.6}", m.index_set.to_string(), mse(&x, &m.transform(&x)?)?);
    }
    Ok(())
}
