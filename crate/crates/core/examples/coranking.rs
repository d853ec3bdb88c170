//! Coranking matrix and R_NX curve for a torus reduced to a circle.

use srca::metrics::{coranking_matrix, coranking_scores};
use srca::synthetic::{generate, GeneratorKind, GeneratorSpec};
use srca::{fit, FitConfig};

fn main() -> srca::Result<()> {
    let x = generate(&GeneratorSpec::new(GeneratorKind::Torus, 150, 2))?;
    let y = fit(&x, &FitConfig::new(1))?.transform(&x)?;
    let q = coranking_matrix(&x, &y)?;
    let r = q.r_nx();
    for k in [1, 2, 5, 10, 20, 50, 100] {
        println!("R_NX({k:>3}) = {:.4}", r[k - 1]);
    }
    let s = coranking_scores(&q, &x, &y)?;
    println!("CC {:.4}  AUC {:.4}  WAUC {:.4}", s.cc, s.auc, s.wauc);
    Ok(())
}
