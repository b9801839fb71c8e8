//! Write the three figures: PBR/ESS path, SMD dot plot and weight histogram.
//!
//! cargo run --release --example svg_plots -- [out_dir]

use std::path::PathBuf;

use balpath::bench::synthetic_dataset;
use balpath::plot::{path_plot, smd_panels, smd_plot, weights_plot};
use balpath::{fit_balnet, BalError, PathOptions, PenaltySpec, SolverConfig, Target};

fn main() -> balpath::Result<()> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "plots".into()).into();
    std::fs::create_dir_all(&out).map_err(|source| BalError::Io { path: out.clone(), source })?;
    let ds = synthetic_dataset(3_000, 30, 4)?;
    let options = PathOptions {
        max_imbalance: Some(0.02),
        ..Default::default()
    };
    let fit = fit_balnet(&ds, Target::Ate, &PenaltySpec::lasso(ds.p()), &options, &SolverConfig::default())?;

    let lambda = 0.05;
    let figures = [
        ("path.svg", path_plot(&fit)?),
        ("smd.svg", smd_plot(&smd_panels(&fit, lambda, 15, None)?)?),
        ("weights.svg", weights_plot(&fit, lambda, 30)?),
    ];
    for (name, svg) in figures {
        let file = out.join(name);
        std::fs::write(&file, svg).map_err(|source| BalError::Io { path: file.clone(), source })?;
        println!("wrote {}", file.display());
    }
    Ok(())
}
