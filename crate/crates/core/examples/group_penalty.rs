//! Group-lasso penalty over blocks of related covariates, with one block
//! left unpenalized so it is balanced exactly at every lambda.
//!
//! cargo run --release --example group_penalty

use balpath::bench::synthetic_dataset;
use balpath::diagnostics::group_smd;
use balpath::{fit_balnet, report, PathOptions, PenaltySpec, SolverConfig, Target};

fn main() -> balpath::Result<()> {
    let ds = synthetic_dataset(3_000, 12, 5)?;
    let labels: Vec<String> = (0..ds.p())
        .map(|j| match j {
            0..=2 => "core".to_string(),
            3..=7 => "history".to_string(),
            _ => "region".to_string(),
        })
        .collect();
    // features are reordered so each group is contiguous
    let ds = ds.with_group_labels(&labels)?;
    let groups = ds.groups().cloned().expect("groups attached");

    let pen = PenaltySpec::grouped(groups.clone(), 0.9).with_factors(vec![0.0, 1.0, 1.0])?;
    let fit = fit_balnet(&ds, Target::Att, &pen, &PathOptions::default(), &SolverConfig::default())?;
    let path = &fit.paths[0];
    println!("path {}/{}", path.len(), path.requested_len());

    for lambda in [path.lambda_max(), 0.1, 0.02] {
        let rep = &report(&fit, lambda)?[0];
        println!("\nlambda {:.4}", rep.lambda);
        for g in group_smd(&rep.smd, &groups)? {
            println!("  {:<8} mean|SMD| {:.4}  max|SMD| {:.4}  ({} features)", g.name, g.mean_abs, g.max_abs, g.count);
        }
    }
    Ok(())
}
