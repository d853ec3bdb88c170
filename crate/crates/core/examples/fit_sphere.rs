//! Fit a 2-sphere to noisy points, then save and reload the model.

use srca::synthetic::{generate, GeneratorKind, GeneratorSpec};
use srca::{fit, FitConfig, SphereModel};

fn main() -> srca::Result<()> {
    let x = generate(&GeneratorSpec::new(GeneratorKind::Sphere, 500, 1).with_noise(0.01))?;
    let model = fit(&x, &FitConfig::new(2))?;
    println!("index set   {}", model.index_set);
    println!("center      {:?}", model.ambient_center().as_slice());
    println!("radius      {:.6}", model.radius().unwrap_or(f64::INFINITY));
    println!("loss / n    {:.6}", model.final_loss / x.rows() as f64);

    let path = std::env::temp_dir().join("srca_sphere_model.json");
    model.save(&path)?;
    let back = SphereModel::load(&path)?;
    assert_eq!(back.transform(&x)?, model.transform(&x)?);
    println!("saved and reloaded {}", path.display());
    Ok(())
}
