//! Lebesgue measure on the Kronecker torus is harmonic; a Dirac mass is not.

use std::f64::consts::PI;

use leafwise::geometry::ScalarField;
use leafwise::lamination::{check_harmonicity_laplacian, check_very_weak_harmonicity, HarmonicMeasureModel, LaminationModel};

fn main() -> leafwise::Result<()> {
    let torus = LaminationModel::kronecker_torus((5f64.sqrt() - 1.0) / 2.0)?;
    let fields = [
        ScalarField::new("sin x cos y", |p| (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).cos()),
        ScalarField::new("cos(x + 2y)", |p| (2.0 * PI * (p[0] + 2.0 * p[1])).cos()),
        ScalarField::new("bump", |p| (-((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2)) / 0.02).exp()),
    ];
    let lebesgue = HarmonicMeasureModel::canonical(torus.clone());
    let dirac = HarmonicMeasureModel::dirac(torus, vec![0.5, 0.5])?;
    for f in &fields {
        let w = check_very_weak_harmonicity(&lebesgue, f, 1.0, 256)?;
        let l = check_harmonicity_laplacian(&lebesgue, f, 256)?;
        let wd = check_very_weak_harmonicity(&dirac, f, 1.0, 0)?;
        println!("{:<12} Lebesgue: |∫D₁f − ∫f| = {:.1e}, |∫Δf| = {:.1e};  Dirac: {:.3}", f.name(), w.value, l.value, wd.value);
    }
    Ok(())
}
