//! Two orthogonal unit circles under growing noise: PCA, SPCA and SRCA
//! at d' = 2.

use srca::baselines::{pca_fit_reduce, spca_fit};
use srca::metrics::{mse, Reducer};
use srca::synthetic::gen_orthogonal_loops;
use srca::{fit, FitConfig};

fn main() -> srca::Result<()> {
    println!("{:>6} {:>10} {:>10} {:>10}", "sd", "PCA", "SPCA", "SRCA");
    for sd in [0.0, 0.01, 0.05, 0.1, 0.2, 0.4, 1.0] {
        let x = gen_orthogonal_loops(400, sd * sd, 0)?;
        let (_, p) = pca_fit_reduce(&x, 2)?;
        let s = spca_fit(&x, 2)?.reduce(&x)?;
        let mut cfg = FitConfig::new(2);
        cfg.restarts = 3;
        let r = fit(&x, &cfg)?.transform(&x)?;
        println!("{sd:>6} {:>10.5} {:>10.5} {:>10.5}", mse(&x, &p)?, mse(&x, &s)?, mse(&x, &r)?);
    }
    Ok(())
}
