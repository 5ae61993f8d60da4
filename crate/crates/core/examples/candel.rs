//! Rank-one exponents against the integral of the Laplacian of the
//! specialization.

use nalgebra::{DMatrix, DVector};

use leafwise::bounds::{candel_exponent, Sites};
use leafwise::cocycle::{CocycleSpec, Potential};
use leafwise::lamination::{HarmonicMeasureModel, LaminationModel};
use leafwise::lyapunov::vector_exponent;

fn main() -> leafwise::Result<()> {
    let h2 = LaminationModel::single_hyperbolic_leaf([0.0, 1.0])?;
    let torus = LaminationModel::kronecker_torus((5f64.sqrt() - 1.0) / 2.0)?;
    let scalar = |p, a: f64| CocycleSpec::one_form(vec![(p, DMatrix::from_element(1, 1, a))]);
    let cases = [
        ("busemann", CocycleSpec::busemann(), h2.clone()),
        ("half busemann", scalar(Potential::LogHeight, 0.5)?, h2),
        ("torus coordinate", scalar(Potential::Coordinate(0), 1.0)?, torus),
    ];
    for (name, c, lam) in cases {
        let mu = HarmonicMeasureModel::canonical(lam);
        let sites = if mu.lamination().is_compact() { Sites::sample(&mu, 16, 42)? } else { Sites::point(mu.lamination().leaf(), vec![0.0, 1.0])? };
        let integral = candel_exponent(&c, &sites, 1e-2)?;
        let mc = vector_exponent(&c, &mu.ensemble(64.0, 1.0 / 64.0, 400, 42)?, &DVector::from_element(1, 1.0))?;
        println!("{name:<18} integral {:+.4}   Monte Carlo {:+.4} ± {:.4}", integral.value, mc.mean, mc.stderr);
    }
    Ok(())
}
