//! The batch runner driven from an in-memory config; prints the summary CSV.

use leafwise::experiment::{execute, ExperimentConfig};

const CONFIG: &str = r#"
model.kind = "hyperbolic-leaf"
cocycle.kind = "conjugated"
cocycle.base.kind = "diagonal-busemann"
cocycle.base.rates = [1.0, 2.0]
cocycle.p = [[1.0, 1.0], [0.0, 1.0]]
estimator.kind = "oseledec"
run.T = 24
run.dt = 0.015625
run.paths = 64
run.seed = 42
"#;

fn main() -> leafwise::Result<()> {
    let cfg = ExperimentConfig::parse(CONFIG)?;
    let out = execute(&cfg)?;
    print!("{}", String::from_utf8_lossy(&out.summary_csv("example", &cfg)?));
    for w in &out.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
