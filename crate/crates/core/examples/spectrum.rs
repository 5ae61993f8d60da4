//! QR spectrum of a diagonal Busemann cocycle, with the wedge and dual
//! consistency checks.

use leafwise::cocycle::CocycleSpec;
use leafwise::geometry::LeafModel;
use leafwise::lyapunov::{dual_consistency, spectrum_qr, wedge_consistency};
use leafwise::wiener::Ensemble;

fn main() -> leafwise::Result<()> {
    let c = CocycleSpec::diagonal_busemann(vec![1.0, 2.0, 3.0])?;
    let ens = Ensemble::new(LeafModel::hyperbolic_plane(), vec![0.0, 1.0], 50.0, 1.0 / 64.0, 200, 42)?;
    let s = spectrum_qr(&c, &ens, 640)?;
    for (i, e) in s.exponents.iter().enumerate() {
        println!("chi_{} = {e:+.4} ± {:.4}  multiplicity {}", i + 1, s.stderr[i], s.multiplicities[i]);
    }
    for (t, v) in &s.convergence {
        println!("  t = {t:>4}: {:?}", v.iter().map(|x| format!("{x:+.3}")).collect::<Vec<_>>());
    }
    println!("telescoping residual {:.1e}", s.telescoping_residual);

    let w = wedge_consistency(&c, 2, &ens, 640)?;
    println!("top of ∧²: {:+.4}, chi_1 + chi_2: {:+.4}", w.top_wedge, w.sum_top_k);
    let d = dual_consistency(&c, &ens, 640)?;
    println!("dual spectrum {:?}, largest mismatch {:.3}", d.dual, d.max_discrepancy);
    Ok(())
}
