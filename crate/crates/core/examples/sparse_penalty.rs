//! Coranking scores as the sparsity penalty grows.

use srca::metrics::{coranking_matrix, coranking_scores};
use srca::synthetic::{generate, GeneratorKind, GeneratorSpec};
use srca::{fit, FitConfig};

fn main() -> srca::Result<()> {
    let x = generate(&GeneratorSpec::new(GeneratorKind::Sphere, 300, 12).with_noise(0.01))?;
    println!("{:>8} {:>10} {:>10} {:>10}", "lambda", "CC", "AUC", "WAUC");
    for lambda in [0.0, 1e-5, 1e-4, 1e-3, 1e-2] {
        let mut cfg = FitConfig::new(2);
        cfg.penalty_lambda = lambda;
        let y = fit(&x, &cfg)?.transform(&x)?;
        let s = coranking_scores(&coranking_matrix(&x, &y)?, &x, &y)?;
        println!("{lambda:>8} {:>10.6} {:>10.6} {:>10.6}", s.cc, s.auc, s.wauc);
    }
    Ok(())
}
