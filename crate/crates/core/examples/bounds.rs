//! The Laplacian functionals bracketing the top and bottom exponents.

use leafwise::bounds::{chi_bounds, delta_functionals, DeltaOptions, Sites};
use leafwise::cocycle::CocycleSpec;
use leafwise::geometry::LeafModel;
use leafwise::lyapunov::spectrum_qr;
use leafwise::wiener::Ensemble;

fn main() -> leafwise::Result<()> {
    let h2 = LeafModel::hyperbolic_plane();
    let c = CocycleSpec::diagonal_busemann(vec![1.0, 2.0])?;
    let d = delta_functionals(&c, &h2, &[0.0, 1.0], &DeltaOptions::default())?;
    println!("upper functional {:+.4} at u = {:?}", d.upper, d.argmax.as_slice());
    println!("lower functional {:+.4} at u = {:?}", d.lower, d.argmin.as_slice());

    let b = chi_bounds(&c, &Sites::point(h2, vec![0.0, 1.0])?, &DeltaOptions::default())?;
    let ens = Ensemble::new(h2, vec![0.0, 1.0], 50.0, 1.0 / 64.0, 200, 42)?;
    let s = spectrum_qr(&c, &ens, 3200)?;
    println!("chi_max: {:+.3} <= {:+.3} <= {:+.3}", b.chi_max_lower.value, s.raw[0], b.chi_max_upper.value);
    println!("chi_min: {:+.3} <= {:+.3} <= {:+.3}", b.chi_min_lower.value, s.raw[1], b.chi_min_upper.value);
    println!("bracketed within 3 SE: {}", b.brackets((s.raw[0], s.raw_stderr[0]), (s.raw[1], s.raw_stderr[1]), 3.0));
    Ok(())
}
