//! Derivative-of-holonomy cocycles for models with linear transverse structure.

use crate::error::{Error, Result};
use crate::lamination::{transport_transversal, LaminationKind, LaminationModel};

use super::CocycleSpec;

/// Holonomy cocycle in the frame given by the transversal coordinate `θ`.
/// Both shipped models have isometric holonomy, so the cocycle is trivial.
pub fn holonomy_cocycle(model: &LaminationModel) -> Result<CocycleSpec> {
    match model.kind() {
        LaminationKind::KroneckerTorus { .. } | LaminationKind::SuspensionLine { .. } => Ok(CocycleSpec::holonomy_of(model.kind().clone())),
        _ => Err(Error::capability(
            "cocycle::holonomy_cocycle",
            format!("{} has no linear transverse structure", model.name()),
        )),
    }
}

/// Holonomy map along a leaf segment of length `s` from `base`, acting on
/// transversal offsets `tau`.
pub fn holonomy_map(model: &LaminationModel, base: &[f64], s: f64, tau: f64) -> Result<f64> {
    transport_transversal(model, base, s, tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::evaluate;
    use crate::rng::StreamSeed;
    use crate::wiener::sample_path;

    #[test]
    fn holonomy_is_trivial_and_matches_finite_differences() {
        for lam in [LaminationModel::kronecker_torus(0.618_033_988_749_895).unwrap(), LaminationModel::suspension_line(0.37).unwrap()] {
            let c = holonomy_cocycle(&lam).unwrap();
            let base = [0.21, 0.64];
            let (leaf, emb) = lam.leaf_factory(&base).unwrap();
            let p = sample_path(&leaf, &emb.origin(), 8.0, 1.0 / 16.0, StreamSeed::new(42)).unwrap();
            for t in [1.0, 4.0, 8.0] {
                let a = evaluate(&c, &p, t).unwrap().to_matrix()[(0, 0)];
                assert_eq!(a, 1.0);
                let s = p.point_at(t).unwrap()[0];
                let eps = 1e-6;
                let fd = (holonomy_map(&lam, &base, s, eps).unwrap() - holonomy_map(&lam, &base, s, -eps).unwrap()) / (2.0 * eps);
                assert!((fd - a).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn other_models_are_unsupported() {
        let lam = LaminationModel::single_hyperbolic_leaf([0.0, 1.0]).unwrap();
        assert!(matches!(holonomy_cocycle(&lam), Err(Error::Capability { .. })));
    }
}
