//! Oseledec subspaces of a conjugated cocycle: they should be the columns of
//! the conjugating matrix. Also the backward exponent and angle decay.

use nalgebra::{DMatrix, DVector};

use leafwise::cocycle::CocycleSpec;
use leafwise::geometry::LeafModel;
use leafwise::linalg::subspace_distance;
use leafwise::lyapunov::{angle_decay, backward_vector_exponent, oseledec_spaces, spectrum_qr, AngleOptions, OseledecOptions};
use leafwise::wiener::Ensemble;

fn main() -> leafwise::Result<()> {
    let h2 = LeafModel::hyperbolic_plane();
    let p = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.2, 0.0, 1.0, 0.3, 0.4, 0.0, 1.0]);
    let c = CocycleSpec::conjugated(CocycleSpec::diagonal_busemann(vec![1.0, 2.0, 3.0])?, p.clone())?;
    let ens = Ensemble::new(h2, vec![0.0, 1.0], 40.0, 1.0 / 64.0, 64, 42)?;
    let s = spectrum_qr(&c, &ens, 64)?;
    let dec = oseledec_spaces(&c, &ens, &s, &OseledecOptions::default())?;
    for (i, h) in dec.subspaces.iter().enumerate() {
        let col = DMatrix::from_column_slice(3, 1, p.column(i).normalize().as_slice());
        println!("H_{} for chi = {:+.3}: angle to P e_{} = {:.2e} rad", i + 1, dec.exponents[i], i + 1, subspace_distance(h, &col));
    }
    println!("invariance residual {:.3} rad (per block {:?})", dec.invariance_residual, dec.block_residuals);

    let a = angle_decay(&c, &dec, &ens, &[0], &AngleOptions::default())?;
    println!("(1/t) log sin angle(H_1, H_2 + H_3) at t = {}: {:+.4}", a.series.last().map_or(0.0, |s| s.0), a.terminal);

    let b = backward_vector_exponent(&CocycleSpec::busemann(), &ens, &DVector::from_element(1, 1.0))?;
    println!("busemann backward exponent {:+.3} ± {:.3}", b.mean, b.stderr);
    Ok(())
}
