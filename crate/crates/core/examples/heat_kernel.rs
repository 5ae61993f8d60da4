//! Heat kernels under the generator-Δ convention, geodesic distances and a
//! stencil Laplacian.

use leafwise::geometry::{heat_kernel, laplacian_estimate, leaf_distance, LeafModel, ScalarField};

fn main() -> leafwise::Result<()> {
    let line = LeafModel::euclidean(1)?;
    let h2 = LeafModel::hyperbolic_plane();

    println!("p_R(0, 0, 1)        = {:.7}", heat_kernel(&line, &[0.0], &[0.0], 1.0)?);
    println!("(4π)^(-1/2)         = {:.7}", (4.0 * std::f64::consts::PI).powf(-0.5));
    for t in [0.25, 1.0, 4.0] {
        let p = heat_kernel(&h2, &[0.0, 1.0], &[0.5, 1.5], t)?;
        println!("p_H2((0,1), (0.5,1.5), {t:<4}) = {p:.6e}");
    }
    println!("d_H2((0,1), (0,e))  = {}", leaf_distance(&h2, &[0.0, 1.0], &[0.0, 1f64.exp()]));

    // log y is the Busemann function: its Laplacian is −1 everywhere
    let busemann = ScalarField::new("log y", |p| p[1].ln());
    let est = laplacian_estimate(&h2, &busemann, &[0.3, 2.0], 1e-2)?;
    println!("Δ log y at (0.3, 2) = {:.8} ± {:.1e}", est.value, est.error);
    Ok(())
}
