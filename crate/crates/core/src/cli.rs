//! Command-line front end: `fit`, `weights`, `coef`, `cv`, `plot`, `bench`.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::artifact::{DataSource, FitArtifact};
use crate::bench::{run_bench, BenchConfig};
use crate::cv::{cross_validate, CvResult};
use crate::data::{destandardize, load_csv, read_name_map, Dataset, FeatureGroups, Target};
use crate::diagnostics::unit_weights;
use crate::error::{BalError, Result};
use crate::path::{fit_balnet_with_progress, BalNetFit, PathFit, PathOptions, Progress};
use crate::penalty::PenaltySpec;
use crate::plot;
use crate::solver::SolverConfig;

#[derive(Debug, Parser)]
#[command(name = "balpath", version, about = "Covariate balancing weights along a regularization path")]
pub struct Cli {
    /// Worker threads (defaults to the available cores).
    #[arg(long, global = true, env = "BALPATH_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit balancing weight paths and save the fit.
    Fit(FitArgs),
    /// Per-unit weights at a given lambda, as CSV.
    Weights(ArtifactArgs),
    /// Coefficients at a given lambda, standardized and on the raw scale.
    Coef(ArtifactArgs),
    /// Cross-validate the balancing loss over the lambda grid.
    Cv(CvArgs),
    /// Render an SVG figure from a saved fit.
    Plot(PlotArgs),
    /// Time ATT paths on synthetic data.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Input CSV with a header row.
    pub data: PathBuf,
    /// Name of the 0/1 treatment column.
    #[arg(long)]
    pub treatment: String,
    #[arg(long, value_enum, default_value_t = TargetArg::Att)]
    pub target: TargetArg,
    #[arg(long, default_value_t = 100)]
    pub nlambda: usize,
    /// Smallest lambda of the path; under the lasso, the largest allowed |SMD|.
    #[arg(long, conflicts_with = "min_ratio")]
    pub max_imbalance: Option<f64>,
    /// Smallest lambda as a fraction of lambda_max (default 0.01).
    #[arg(long)]
    pub min_ratio: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Two-column file of penalty factors keyed by feature (or group) name.
    #[arg(long)]
    pub penalty_factors: Option<PathBuf>,
    /// Two-column file assigning features to penalty groups.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_outer: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_inner: usize,
    /// Print one line per lambda with the current max |SMD|.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Where to write the fit (JSON).
    #[arg(long, default_value = "fit.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ArtifactArgs {
    /// Saved fit.
    pub fit: PathBuf,
    /// Penalty level; 0 selects the smallest fitted value.
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    /// Data file to use instead of the recorded one.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output file (standard output when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotMode {
    Path,
    Smd,
    Weights,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    pub fit: PathBuf,
    #[arg(long, value_enum, default_value_t = PlotMode::Path)]
    pub mode: PlotMode,
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    /// Number of covariates shown in the SMD plot.
    #[arg(long, default_value_t = 20)]
    pub max: usize,
    /// Aggregate the SMD plot by the groups in this file.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    pub bins: usize,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[arg(long, default_value_t = 500)]
    pub p: usize,
    /// Balance targets to time; repeat the flag for several.
    #[arg(long, default_values_t = [0.05, 0.01])]
    pub max_imbalance: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub doublings: usize,
    #[arg(long, default_value_t = 100)]
    pub nlambda: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Treated,
    Control,
    Ate,
    Att,
}

impl From<TargetArg> for Target {
    fn from(t: TargetArg) -> Target {
        match t {
            TargetArg::Treated => Target::Treated,
            TargetArg::Control => Target::Control,
            TargetArg::Ate => Target::Ate,
            TargetArg::Att => Target::Att,
        }
    }
}

/// Parse `args` and run, writing results to `out` and messages to `err`.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return e.exit_code();
        }
    };
    let threads = cli.threads.unwrap_or_else(|| {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    });
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start thread pool: {e}");
            return 2;
        }
    };
    match pool.install(|| dispatch(cli.command, out, err)) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> Result<i32> {
    match cmd {
        Command::Fit(a) => cmd_fit(&a, out, err),
        Command::Weights(a) => cmd_weights(&a, out, err),
        Command::Coef(a) => cmd_coef(&a, out, err),
        Command::Cv(a) => cmd_cv(&a, out, err),
        Command::Plot(a) => cmd_plot(&a, out, err),
        Command::Bench(a) => cmd_bench(&a, out, err),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BalError + '_ {
    move |source| BalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn stdout_err(source: std::io::Error) -> BalError {
    BalError::Io {
        path: "<stdout>".into(),
        source,
    }
}

struct Model {
    ds: Dataset,
    target: Target,
    penalty: PenaltySpec,
    options: PathOptions,
    solver: SolverConfig,
}

fn build_model(a: &ModelArgs) -> Result<Model> {
    let ds = load_csv(&a.data, &a.treatment, a.groups.as_deref())?;
    let groups = ds
        .groups()
        .cloned()
        .unwrap_or_else(|| FeatureGroups::singletons(ds.feature_names()));
    let mut penalty = PenaltySpec::grouped(groups, a.alpha);
    if let Some(pf) = &a.penalty_factors {
        let names = penalty.groups.names().to_vec();
        let map = read_name_map(pf, &names)?;
        let factors = names
            .iter()
            .map(|g| match map.get(g) {
                None => Ok(1.0),
                Some(v) => v.parse::<f64>().map_err(|_| {
                    BalError::data(format!("penalty factor for '{g}' is not a number: '{v}'"))
                }),
            })
            .collect::<Result<Vec<f64>>>()?;
        penalty = penalty.with_factors(factors)?;
    }
    penalty.validate()?;
    let solver = SolverConfig {
        tol: a.tol,
        max_outer: a.max_outer,
        max_inner: a.max_inner,
        ..Default::default()
    };
    solver.validate()?;
    Ok(Model {
        ds,
        target: a.target.into(),
        penalty,
        options: PathOptions {
            nlambda: a.nlambda,
            max_imbalance: a.max_imbalance,
            min_ratio: a.min_ratio,
        },
        solver,
    })
}

/// Per-arm path table: header `Control (path: K/N)`, then index, nonzero
/// count, average |SMD| and λ with five decimals.
pub fn format_path_table(path: &PathFit) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} (path: {}/{})",
        path.label.title(),
        path.len(),
        path.requested_len()
    );
    let idx_w = path.len().to_string().len().max(1);
    let rows: Vec<(String, String)> = path
        .summary
        .iter()
        .map(|r| (format!("{:.5}", r.avg_abs_smd), format!("{:.5}", r.lambda)))
        .collect();
    let smd_w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(8);
    let lam_w = rows.iter().map(|r| r.1.len()).max().unwrap_or(0).max(6);
    let _ = writeln!(
        s,
        "{:>idx_w$} {:>7} {:>smd_w$} {:>lam_w$}",
        "", "Nonzero", "Avg|SMD|", "Lambda"
    );
    for (k, (row, (smd, lam))) in path.summary.iter().zip(&rows).enumerate() {
        let _ = writeln!(
            s,
            "{:>idx_w$} {:>7} {:>smd_w$} {:>lam_w$}",
            k + 1,
            row.nonzero,
            smd,
            lam
        );
    }
    s
}

fn write_fit_report(fit: &BalNetFit, out: &mut (dyn Write + Send)) -> Result<()> {
    for (k, path) in fit.paths.iter().enumerate() {
        if k > 0 {
            writeln!(out).map_err(stdout_err)?;
        }
        write!(out, "{}", format_path_table(path)).map_err(stdout_err)?;
    }
    Ok(())
}

fn cmd_fit(a: &FitArgs, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> Result<i32> {
    let m = build_model(&a.model)?;
    let progress = |p: &Progress| {
        eprintln!(
            "[{}] lambda {}/{} = {:.5}  max|SMD| = {:.5}  nonzero = {}",
            p.label.title(),
            p.index + 1,
            p.total,
            p.lambda,
            p.max_abs_smd,
            p.nonzero
        );
    };
    let fit = fit_balnet_with_progress(
        &m.ds,
        m.target,
        &m.penalty,
        &m.options,
        &m.solver,
        a.model.verbose.then_some(&progress as _),
    )?;
    let source = DataSource {
        path: std::fs::canonicalize(&a.model.data).unwrap_or_else(|_| a.model.data.clone()),
        treatment: a.model.treatment.clone(),
        groups: a
            .model
            .groups
            .as_ref()
            .map(|g| std::fs::canonicalize(g).unwrap_or_else(|_| g.clone())),
    };
    FitArtifact::from_fit(&fit, &m.ds, Some(source)).save(&a.out)?;
    write_fit_report(&fit, out)?;
    let mut code = 0;
    for path in &fit.paths {
        for w in &path.warnings {
            let _ = writeln!(err, "warning: {w}");
        }
        if path.len() <= 1 && path.requested_len() > 1 {
            let _ = writeln!(
                err,
                "error: {} model: no lambda below lambda_max could be solved",
                path.label.title()
            );
            code = 4;
        }
    }
    Ok(code)
}

fn load_fit(fit: &Path, data: Option<&Path>) -> Result<(FitArtifact, BalNetFit)> {
    let art = FitArtifact::load(fit)?;
    let ds = art.load_dataset(data)?;
    let restored = art.restore(&ds)?;
    Ok((art, restored))
}

fn open_out(path: Option<&Path>, out: &mut (dyn Write + Send), body: &[u8]) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, body).map_err(io_err(p)),
        None => out.write_all(body).map_err(stdout_err),
    }
}

fn clamp_warning(fit: &BalNetFit, lambda: f64, err: &mut (dyn Write + Send)) {
    for p in &fit.paths {
        if let Some(min) = p.achieved_lambda_min() {
            if lambda > 0.0 && lambda < min {
                let _ = writeln!(
                    err,
                    "warning: {} model: lambda {lambda} is below the smallest fitted value {min:.5}; using {min:.5}",
                    p.label.title()
                );
            }
        }
    }
}

fn cmd_weights(a: &ArtifactArgs, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> Result<i32> {
    let (_, fit) = load_fit(&a.fit, a.data.as_deref())?;
    clamp_warning(&fit, a.lambda, err);
    let (weights, _) = unit_weights(&fit, a.lambda)?;
    let mut body = String::from("unit,arm,weight\n");
    for (i, (w, &t)) in weights.iter().zip(fit.design.treatment()).enumerate() {
        let _ = writeln!(body, "{},{},{}", i + 1, if t { "treated" } else { "control" }, w);
    }
    open_out(a.out.as_deref(), out, body.as_bytes())?;
    Ok(0)
}

fn cmd_coef(a: &ArtifactArgs, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> Result<i32> {
    let (_, fit) = load_fit(&a.fit, a.data.as_deref())?;
    clamp_warning(&fit, a.lambda, err);
    let p = fit.design.p();
    let mut body = String::from("model,lambda,term,standardized,original\n");
    for path in &fit.paths {
        let sol = crate::diagnostics::interpolate(path, a.lambda)?;
        let beta = sol.coefs.to_dense(p);
        let (b0, raw) = destandardize(sol.intercept, &beta, fit.design.spec())?;
        let model = path.label.title().to_lowercase();
        let _ = writeln!(body, "{model},{},(Intercept),{},{}", sol.lambda, sol.intercept, b0);
        for j in 0..p {
            let _ = writeln!(
                body,
                "{model},{},{},{},{}",
                sol.lambda, fit.feature_names[j], beta[j], raw[j]
            );
        }
    }
    open_out(a.out.as_deref(), out, body.as_bytes())?;
    Ok(0)
}

/// Per-model CV table with the selected values marked.
pub fn format_cv_table(res: &CvResult) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} ({} folds, seed {})",
        res.label.title(),
        res.folds,
        res.seed
    );
    let _ = writeln!(s, "{:>4} {:>12} {:>12} {:>12}", "", "Lambda", "Loss", "SE");
    let (imin, i1se) = (res.index_min(), res.index_1se());
    for k in 0..res.lambdas.len() {
        let mark = match (k == imin, k == i1se) {
            (true, true) => " min,1se",
            (true, false) => " min",
            (false, true) => " 1se",
            _ => "",
        };
        let _ = writeln!(
            s,
            "{:>4} {:>12.5} {:>12.5} {:>12.5}{mark}",
            k + 1,
            res.lambdas[k],
            res.mean_loss[k],
            res.std_err[k]
        );
    }
    let _ = writeln!(s, "lambda.min = {:.5}", res.lambda_min_cv);
    let _ = writeln!(s, "lambda.1se = {:.5}", res.lambda_1se);
    s
}

fn cmd_cv(a: &CvArgs, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> Result<i32> {
    if a.folds < 2 {
        return Err(BalError::usage("--folds must be at least 2"));
    }
    let m = build_model(&a.model)?;
    let results = cross_validate(
        &m.ds, m.target, &m.penalty, &m.options, a.folds, a.seed, &m.solver,
    )?;
    for (k, r) in results.iter().enumerate() {
        if k > 0 {
            writeln!(out).map_err(stdout_err)?;
        }
        write!(out, "{}", format_cv_table(r)).map_err(stdout_err)?;
        for w in &r.warnings {
            let _ = writeln!(err, "warning: {w}");
        }
    }
    Ok(0)
}

fn cmd_plot(a: &PlotArgs, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> Result<i32> {
    let (_, fit) = load_fit(&a.fit, a.data.as_deref())?;
    let svg = match a.mode {
        PlotMode::Path => plot::path_plot(&fit)?,
        PlotMode::Smd => {
            clamp_warning(&fit, a.lambda, err);
            let labels = match &a.groups {
                None => None,
                Some(g) => {
                    let map = read_name_map(g, &fit.feature_names)?;
                    Some(
                        fit.feature_names
                            .iter()
                            .map(|f| map.get(f).cloned().unwrap_or_else(|| f.clone()))
                            .collect::<Vec<_>>(),
                    )
                }
            };
            if labels.is_none() && a.max > fit.design.p() {
                let _ = writeln!(err, "note: --max {} exceeds p = {}; showing all", a.max, fit.design.p());
            }
            let panels = plot::smd_panels(&fit, a.lambda, a.max.min(fit.design.p()), labels.as_deref())?;
            plot::smd_plot(&panels)?
        }
        PlotMode::Weights => {
            clamp_warning(&fit, a.lambda, err);
            plot::weights_plot(&fit, a.lambda, a.bins)?
        }
    };
    open_out(a.out.as_deref(), out, svg.as_bytes())?;
    Ok(0)
}

fn cmd_bench(a: &BenchArgs, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> Result<i32> {
    if a.n == 0 || a.p == 0 {
        return Err(BalError::usage("--n and --p must be positive"));
    }
    let cfg = BenchConfig {
        n: a.n,
        p: a.p,
        doublings: a.doublings,
        max_imbalance: a.max_imbalance.clone(),
        nlambda: a.nlambda,
        seed: a.seed,
        solver: SolverConfig::default(),
    };
    let report = run_bench(&cfg, |r| {
        let _ = writeln!(
            err,
            "n={} p={} max.imbalance={}: {:.2} s ({}/{} points)",
            r.n, r.p, r.max_imbalance, r.runtime_secs, r.path_len, r.requested_len
        );
    })?;
    writeln!(out, "{report}").map_err(stdout_err)?;
    Ok(0)
}
