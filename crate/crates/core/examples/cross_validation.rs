//! K-fold cross-validation of the held-out balancing loss over the lambda
//! grid, with lambda.min and lambda.1se.
//!
//! cargo run --release --example cross_validation -- [folds] [seed]

use balpath::bench::synthetic_dataset;
use balpath::cli::format_cv_table;
use balpath::cv::cross_validate;
use balpath::{PathOptions, PenaltySpec, SolverConfig, Target};

fn main() -> balpath::Result<()> {
    let mut args = std::env::args().skip(1).filter_map(|a| a.parse::<u64>().ok());
    let folds = args.next().unwrap_or(5) as usize;
    let seed = args.next().unwrap_or(1);
    let ds = synthetic_dataset(2_000, 15, 9)?;
    let options = PathOptions {
        nlambda: 30,
        ..Default::default()
    };
    let results = cross_validate(&ds, Target::Ate, &PenaltySpec::lasso(ds.p()), &options, folds, seed, &SolverConfig::default())?;
    for res in &results {
        print!("{}", format_cv_table(res));
        for w in &res.warnings {
            eprintln!("warning: {w}");
        }
        println!();
    }
    Ok(())
}
