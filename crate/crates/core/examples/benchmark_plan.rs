//! A small benchmark grid run through the library, printed as CSV.

use srca::cli::{run_benchmark, BenchmarkPlan};

const PLAN: &str = r#"{
  "datasets": [
    {"name": "torus", "source": {"generator": {"kind": "torus", "n": 300, "seed": 1, "noise_var": 0.001}}},
    {"name": "loops", "source": {"generator": {"kind": "orthogonal_loops", "n": 400, "seed": 0}}}
  ],
  "methods": ["pca", "spca", "srca"],
  "d_prime": [1, 2],
  "output_dir": "unused"
}"#;

fn main() -> srca::Result<()> {
    let plan: BenchmarkPlan = serde_json::from_str(PLAN)?;
    let tables = run_benchmark(&plan, true, None)?;
    println!("training MSE\n{}", tables.mse.to_csv());
    if let Some(t) = tables.oos_mse {
        println!("held-out MSE\n{}", t.to_csv());
    }
    Ok(())
}
