//! The averaged one-step functional φ_n computed two ways: Monte Carlo over
//! paths of length n, and nested quadrature of the one-step functional.

use nalgebra::DVector;

use leafwise::bounds::{phi_functional, PhiOptions};
use leafwise::cocycle::CocycleSpec;
use leafwise::geometry::LeafModel;

fn main() -> leafwise::Result<()> {
    let h2 = LeafModel::hyperbolic_plane();
    let c = CocycleSpec::diagonal_busemann(vec![1.0, 2.0])?;
    let u = DVector::from_vec(vec![1.0, 1.0]).normalize();
    for n in 1..=3 {
        let e = phi_functional(&c, &h2, &[0.0, 1.0], &u, n, &PhiOptions::default())?;
        println!(
            "n = {n}: Monte Carlo {:+.4} ± {:.4}   quadrature {:+.6} (± {:.1e})",
            e.route_a.value, e.route_a.stderr, e.route_b.value, e.route_b.error
        );
    }
    Ok(())
}
