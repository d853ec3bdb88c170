//! Write every synthetic dataset to CSV in a temporary directory.

use srca::data::write_csv;
use srca::synthetic::{generate, GeneratorKind, GeneratorSpec};

fn main() -> srca::Result<()> {
    let dir = std::env::temp_dir().join("srca_datasets");
    std::fs::create_dir_all(&dir).expect("create output directory");
    for kind in GeneratorKind::ALL {
        let x = generate(&GeneratorSpec::new(kind, 400, 0).with_noise(0.01))?;
        let path = dir.join(format!("{kind}.csv"));
        write_csv(&path, &x, None, x.labels().is_some())?;
        println!("{:<18} {}x{} -> {}", kind.to_string(), x.rows(), x.cols(), path.display());
    }
    Ok(())
}
