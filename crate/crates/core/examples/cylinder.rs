//! Cylinder-set probabilities by nested quadrature and by Monte Carlo.

use leafwise::geometry::LeafModel;
use leafwise::wiener::{cylinder_probability, CylinderEvent, CylinderSet};

fn main() -> leafwise::Result<()> {
    let line = LeafModel::euclidean(1)?;
    let h2 = LeafModel::hyperbolic_plane();
    let ev = |time, set| CylinderEvent { time, set };
    let cases = [
        ("ω(1) ≥ 0", line, vec![0.0], vec![ev(1.0, CylinderSet::Interval { lo: 0.0, hi: f64::INFINITY })]),
        (
            "ω(1) ∈ [0, 1], ω(2) ∈ [−1, 0.5]",
            line,
            vec![0.0],
            vec![ev(1.0, CylinderSet::Interval { lo: 0.0, hi: 1.0 }), ev(2.0, CylinderSet::Interval { lo: -1.0, hi: 0.5 })],
        ),
        ("y(2) ≤ 1/2", h2, vec![0.0, 1.0], vec![ev(2.0, CylinderSet::Heights { lo: 0.0, hi: 0.5 })]),
    ];
    for (name, model, x, events) in cases {
        let r = cylinder_probability(&model, &x, &events, 20_000, 1.0 / 16.0, 42)?;
        println!("{name:<34} quadrature {:.5}   Monte Carlo {:.5} ± {:.5}", r.quadrature.unwrap_or(f64::NAN), r.monte_carlo, r.mc_stderr);
    }
    Ok(())
}
