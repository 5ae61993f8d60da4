//! Leafwise Brownian paths: the exact log-height law on the half-plane and a
//! reproducible path dump.

use leafwise::geometry::LeafModel;
use leafwise::rng::StreamSeed;
use leafwise::wiener::{dump_paths, sample_path, Ensemble};

fn main() -> leafwise::Result<()> {
    let h2 = LeafModel::hyperbolic_plane();
    let t = 4.0;
    let ens = Ensemble::new(h2, vec![0.0, 1.0], t, 1.0 / 64.0, 4000, 42)?;
    let logs = ens.map(|_, p| Ok(p.end()[1].ln()))?;
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0);
    // log y(t) = √2 B_t − t
    println!("E log y({t}) = {mean:.4}   (exact {:.4})", -t);
    println!("Var log y({t}) = {var:.4} (exact {:.4})", 2.0 * t);

    let root = StreamSeed::new(7);
    let paths: Vec<_> = (0..2)
        .map(|i| sample_path(&h2, &[0.0, 1.0], 0.125, 1.0 / 16.0, root.child(i)))
        .collect::<leafwise::Result<_>>()?;
    let mut out = Vec::new();
    dump_paths(&mut out, &paths, 7)?;
    print!("{}", String::from_utf8_lossy(&out));
    Ok(())
}
