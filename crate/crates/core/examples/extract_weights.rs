//! Save a fit, reload it from disk and extract per-unit weights and
//! coefficients at a lambda between grid points.
//!
//! cargo run --release --example extract_weights

use balpath::artifact::{DataSource, FitArtifact};
use balpath::data::{destandardize, write_csv};
use balpath::diagnostics::{interpolate, unit_weights};
use balpath::{fit_balnet, load_csv, PathOptions, PenaltySpec, SolverConfig, Target};

fn main() -> balpath::Result<()> {
    let dir = std::env::temp_dir().join("balpath-extract-weights");
    std::fs::create_dir_all(&dir).map_err(|source| balpath::BalError::Io { path: dir.clone(), source })?;
    let csv = dir.join("data.csv");
    let ds = balpath::bench::synthetic_dataset(1_000, 6, 2)?;
    let mut file = std::fs::File::create(&csv).map_err(|source| balpath::BalError::Io { path: csv.clone(), source })?;
    write_csv(&ds, "treat", &mut file)?;

    let ds = load_csv(&csv, "treat", None)?;
    let fit = fit_balnet(&ds, Target::Att, &PenaltySpec::lasso(ds.p()), &PathOptions::default(), &SolverConfig::default())?;
    let source = DataSource {
        path: csv.clone(),
        treatment: "treat".into(),
        groups: None,
    };
    let saved = dir.join("fit.json");
    FitArtifact::from_fit(&fit, &ds, Some(source)).save(&saved)?;

    // the artifact stores the data by reference and re-standardizes on load
    let art = FitArtifact::load(&saved)?;
    let fit = art.restore(&art.load_dataset(None)?)?;
    let path = &fit.paths[0];
    let lambda = 0.5 * (path.lambdas[10] + path.lambdas[11]);

    let (weights, warnings) = unit_weights(&fit, lambda)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    println!("unit,arm,weight");
    for (i, (w, &t)) in weights.iter().zip(fit.design.treatment()).enumerate().take(8) {
        println!("{},{},{:.6}", i + 1, if t { "treated" } else { "control" }, w);
    }
    println!("... {} rows", weights.len());

    let sol = interpolate(path, lambda)?;
    let beta = sol.coefs.to_dense(fit.design.p());
    let (b0, raw) = destandardize(sol.intercept, &beta, fit.design.spec())?;
    println!("\nlambda {lambda:.5}: intercept {b0:.4}");
    for (name, (s, r)) in fit.feature_names.iter().zip(beta.iter().zip(&raw)) {
        println!("  {name}: standardized {s:+.4}, original {r:+.4}");
    }
    Ok(())
}
