//! Balance diagnostics at a chosen lambda: SMDs, PBR, ESS and the
//! coefficient of variation of the weights.
//!
//! cargo run --release --example balance_diagnostics -- [lambda]

use balpath::bench::synthetic_dataset;
use balpath::{fit_balnet, report, PathOptions, PenaltySpec, SolverConfig, Target};

fn main() -> balpath::Result<()> {
    let lambda: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0.05);
    let ds = synthetic_dataset(3_000, 12, 11)?;
    let options = PathOptions {
        max_imbalance: Some(0.02),
        ..Default::default()
    };
    let fit = fit_balnet(&ds, Target::Att, &PenaltySpec::lasso(ds.p()), &options, &SolverConfig::default())?;

    let baseline = &report(&fit, fit.paths[0].lambda_max())?[0];
    let at = &report(&fit, lambda)?[0];
    println!("{:>6} {:>11} {:>11}", "", "unweighted", "weighted");
    for (j, name) in fit.feature_names.iter().enumerate() {
        println!("{name:>6} {:>11.4} {:>11.4}", baseline.smd[j], at.smd[j]);
    }
    println!();
    println!("lambda       {:.5}", at.lambda);
    println!("avg |SMD|    {:.5} (was {:.5})", at.avg_abs_smd, baseline.avg_abs_smd);
    println!("max |SMD|    {:.5}", at.max_abs_smd);
    println!("PBR          {:.1}%", at.pbr);
    println!("ESS          {:.1}%", at.ess);
    println!("weight CV    {:.4}", at.weight_cv);
    println!("nonzero      {}", at.nonzero);
    for w in &at.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}
