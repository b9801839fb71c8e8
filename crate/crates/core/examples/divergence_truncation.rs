//! When the requested balance is infeasible the path stops at the last
//! lambda that converged instead of returning garbage weights.
//!
//! cargo run --release --example divergence_truncation

use balpath::cli::format_path_table;
use balpath::{fit_balnet, Dataset, Matrix, PathOptions, PenaltySpec, SolverConfig, Target};

fn main() -> balpath::Result<()> {
    // Treated units sit at x in [2, 3] and controls at [0, 1]. No positive
    // reweighting of the treated can reach the pooled mean.
    let n = 60;
    let x: Vec<f64> = (0..n)
        .map(|i| if i < 30 { 2.0 + i as f64 / 29.0 } else { (i - 30) as f64 / 29.0 })
        .collect();
    let w: Vec<bool> = (0..n).map(|i| i < 30).collect();
    let ds = Dataset::new(Matrix::from_columns(n, vec![x])?, w, vec!["x".into()])?;

    let options = PathOptions {
        nlambda: 40,
        max_imbalance: Some(1e-4),
        min_ratio: None,
    };
    let fit = fit_balnet(&ds, Target::Treated, &PenaltySpec::lasso(1), &options, &SolverConfig::default())?;
    let path = &fit.paths[0];
    print!("{}", format_path_table(path));
    for w in &path.warnings {
        println!("warning: {w}");
    }
    match path.truncated_at {
        Some(k) => println!(
            "\nstopped before lambda {:.5}; smallest fitted lambda {:.5}",
            path.lambdas[k],
            path.achieved_lambda_min().unwrap_or(f64::NAN)
        ),
        None => println!("\npath completed"),
    }
    Ok(())
}
