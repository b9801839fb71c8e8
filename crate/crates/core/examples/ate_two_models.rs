//! ATE fits two independent models, one per arm, each reweighted toward the
//! pooled covariate means.
//!
//! cargo run --release --example ate_two_models

use balpath::bench::synthetic_dataset;
use balpath::cli::format_path_table;
use balpath::{fit_balnet, report, PathOptions, PenaltySpec, SolverConfig, Target};

fn main() -> balpath::Result<()> {
    let ds = synthetic_dataset(4_000, 25, 3)?;
    let options = PathOptions {
        nlambda: 50,
        ..Default::default()
    };
    let fit = fit_balnet(&ds, Target::Ate, &PenaltySpec::lasso(ds.p()), &options, &SolverConfig::default())?;
    for path in &fit.paths {
        print!("{}", format_path_table(path));
        println!();
    }

    // Weighted arm means estimate the pooled means, so the contrast of
    // weighted outcome means targets the ATE.
    let lambda = fit.paths.iter().filter_map(|p| p.achieved_lambda_min()).fold(0.0, f64::max);
    for r in report(&fit, lambda)? {
        let total: f64 = r.weights.iter().sum();
        println!(
            "{:?} model at lambda {:.4}: weights sum to {:.2} (n = {}), ESS {:.1}%",
            r.label,
            r.lambda,
            total,
            ds.n(),
            r.ess
        );
    }
    Ok(())
}
