//! ATT weights along a lasso path down to a balance target, printed in the
//! usual per-model table.
//!
//! cargo run --release --example att_path

use balpath::bench::synthetic_dataset;
use balpath::cli::format_path_table;
use balpath::{fit_balnet, PathOptions, PenaltySpec, SolverConfig, Target};

fn main() -> balpath::Result<()> {
    let ds = synthetic_dataset(5_000, 40, 7)?;
    println!("n = {}, p = {}, treated = {}", ds.n(), ds.p(), ds.n1());

    let options = PathOptions {
        nlambda: 100,
        max_imbalance: Some(0.05),
        min_ratio: None,
    };
    let fit = fit_balnet(&ds, Target::Att, &PenaltySpec::lasso(ds.p()), &options, &SolverConfig::default())?;

    // ATT fits one model, reweighting controls toward the treated means.
    let path = &fit.paths[0];
    print!("{}", format_path_table(path));
    for w in &path.warnings {
        eprintln!("warning: {w}");
    }
    let last = path.summary.last().expect("path keeps lambda_max");
    println!(
        "\nat lambda {:.5}: max|SMD| = {:.5}, ESS = {:.1}%",
        last.lambda, last.max_abs_smd, last.ess
    );
    Ok(())
}
