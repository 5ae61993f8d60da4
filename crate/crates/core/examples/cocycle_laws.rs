//! Law checks on genuine cocycles and on a planted non-cocycle, plus the
//! moderate-growth fit.

use nalgebra::DMatrix;

use leafwise::cocycle::{law_check, moderate_check, CocycleSpec, Potential};
use leafwise::geometry::LeafModel;

fn main() -> leafwise::Result<()> {
    let h2 = LeafModel::hyperbolic_plane();
    let plane = LeafModel::euclidean(2)?;
    let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    let cases = [
        ("busemann", CocycleSpec::busemann(), h2),
        (
            "conjugated diagonal-busemann",
            CocycleSpec::conjugated(CocycleSpec::diagonal_busemann(vec![1.0, 2.0])?, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]))?,
            h2,
        ),
        (
            "path-ordered rotation",
            CocycleSpec::path_ordered(vec![(Potential::Coordinate(0), rot.clone()), (Potential::Coordinate(1), DMatrix::from_diagonal_element(2, 2, 0.5))])?,
            plane,
        ),
        (
            "winding angle (not a cocycle)",
            CocycleSpec::one_form(vec![(Potential::WindingAngle { center: [0.5, 0.6] }, DMatrix::from_element(1, 1, 1.0))])?,
            plane,
        ),
    ];
    for (name, c, leaf) in &cases {
        let r = law_check(c, leaf, 32, 42)?;
        println!(
            "{name:<30} identity {:.1e}  multiplicative {:.1e}  homotopy {:.1e}  flagged {}",
            r.identity_residual, r.multiplicative_residual, r.homotopy_residual, r.flagged
        );
    }
    let fit = moderate_check(&CocycleSpec::busemann(), &h2, 64, 42, Some((1.0, 0.0)))?;
    println!("busemann moderate growth: C = {:.3}, R = {:.3}, violations of (1, 0): {}", fit.c_hat, fit.r_hat, fit.violations.len());
    Ok(())
}
