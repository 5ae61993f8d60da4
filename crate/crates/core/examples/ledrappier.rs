//! Fixed points of the projective transfer operator and the exponents they
//! carry.

use leafwise::bounds::{ledrappier_check, LedrappierOptions};
use leafwise::cocycle::CocycleSpec;
use leafwise::geometry::LeafModel;

fn main() -> leafwise::Result<()> {
    let h2 = LeafModel::hyperbolic_plane();
    let c = CocycleSpec::diagonal_busemann(vec![1.0, 2.0])?;
    let r = ledrappier_check(&c, &h2, &[0.0, 1.0], Some(&[-1.0, -2.0]), &LedrappierOptions::default())?;
    println!("grid of {} lines, {} fixed points", r.grid.len(), r.fixed_points.len());
    for f in &r.fixed_points {
        let v = f.value.map_or(f64::NAN, |v| v.value);
        println!("  value {v:+.4}  sweeps {}  converged {}  matched exponent {:?}", f.state.sweeps, f.converged, f.matched);
    }
    println!("distinct values {:?}", r.distinct_values(0.1));
    Ok(())
}
