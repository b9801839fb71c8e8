//! Synthetic timing benchmark: ATT paths over a doubling grid of problem
//! sizes and a list of balance targets.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::data::{standardize, Dataset, Matrix, Target};
use crate::error::{BalError, Result};
use crate::path::{fit_design, PathOptions};
use crate::penalty::PenaltySpec;
use crate::solver::SolverConfig;

/// Coefficients of the assignment model on the leading covariates.
const ASSIGNMENT: [f64; 5] = [0.4, -0.3, 0.25, -0.2, 0.15];
const ASSIGNMENT_OFFSET: f64 = -0.25;

/// Gaussian covariates with treatment drawn from a logistic model on the
/// first few columns. Identical for a given `(n, p, seed)`.
pub fn synthetic_dataset(n: usize, p: usize, seed: u64) -> Result<Dataset> {
    if n < 4 || p == 0 {
        return Err(BalError::usage("benchmark needs n >= 4 and p >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Matrix::zeros(n, p)?;
    for j in 0..p {
        for v in x.col_mut(j) {
            *v = rng.sample(StandardNormal);
        }
    }
    let mut treatment: Vec<bool> = (0..n)
        .map(|i| {
            let eta = ASSIGNMENT
                .iter()
                .enumerate()
                .take(p)
                .fold(ASSIGNMENT_OFFSET, |acc, (j, c)| acc + c * x.get(i, j));
            rng.gen::<f64>() < 1.0 / (1.0 + (-eta).exp())
        })
        .collect();
    // keep both arms non-empty on tiny draws
    treatment[0] = true;
    treatment[1] = false;
    let names = (0..p).map(|j| format!("x{}", j + 1)).collect();
    Dataset::new(x, treatment, names)
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub n: usize,
    pub p: usize,
    /// Number of times both `n` and `p` are doubled after the base size.
    pub doublings: usize,
    pub max_imbalance: Vec<f64>,
    pub nlambda: usize,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            n: 100_000,
            p: 500,
            doublings: 1,
            max_imbalance: vec![0.05, 0.01],
            nlambda: 100,
            seed: 1,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub p: usize,
    pub max_imbalance: f64,
    pub runtime_secs: f64,
    /// Runtime over the previous size at the same balance target.
    pub np_scaling: Option<f64>,
    /// Runtime over the first balance target at the same size.
    pub lambda_min_scaling: Option<f64>,
    pub path_len: usize,
    pub requested_len: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub threads: usize,
    pub rows: Vec<BenchRow>,
}

/// Time one ATT path, standardization included.
pub fn time_att_path(
    ds: &Dataset,
    max_imbalance: f64,
    nlambda: usize,
    conf: &SolverConfig,
) -> Result<(f64, usize, usize)> {
    let start = Instant::now();
    let design = Arc::new(standardize(ds, Target::Att)?);
    let options = PathOptions {
        nlambda,
        max_imbalance: Some(max_imbalance),
        min_ratio: None,
    };
    let fit = fit_design(design, Target::Att, &PenaltySpec::lasso(ds.p()), &options, conf, None)?;
    let secs = start.elapsed().as_secs_f64();
    let path = &fit.paths[0];
    Ok((secs, path.len(), path.requested_len()))
}

/// Run the full grid. `on_row` sees each row as soon as it is timed.
pub fn run_bench(cfg: &BenchConfig, mut on_row: impl FnMut(&BenchRow)) -> Result<BenchReport> {
    if cfg.max_imbalance.is_empty() {
        return Err(BalError::usage("at least one max imbalance is required"));
    }
    let mut times = vec![vec![0.0; cfg.doublings + 1]; cfg.max_imbalance.len()];
    let mut rows = Vec::new();
    for level in 0..=cfg.doublings {
        let (n, p) = (cfg.n << level, cfg.p << level);
        let ds = synthetic_dataset(n, p, cfg.seed)?;
        for (m, &mi) in cfg.max_imbalance.iter().enumerate() {
            let (secs, len, req) = time_att_path(&ds, mi, cfg.nlambda, &cfg.solver)?;
            times[m][level] = secs;
            let row = BenchRow {
                n,
                p,
                max_imbalance: mi,
                runtime_secs: secs,
                np_scaling: (level > 0).then(|| secs / times[m][level - 1]),
                lambda_min_scaling: (m > 0).then(|| secs / times[0][level]),
                path_len: len,
                requested_len: req,
            };
            on_row(&row);
            rows.push(row);
        }
    }
    // Table layout: grouped by balance target, then by size.
    rows.sort_by(|a, b| {
        let ka = cfg.max_imbalance.iter().position(|&m| m == a.max_imbalance);
        let kb = cfg.max_imbalance.iter().position(|&m| m == b.max_imbalance);
        ka.cmp(&kb).then(a.n.cmp(&b.n))
    });
    Ok(BenchReport {
        threads: rayon::current_num_threads(),
        rows,
    })
}

fn ratio(v: Option<f64>) -> String {
    v.map_or("--".into(), |r| format!("{r:.1}"))
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>10} {:>6} {:>14} {:>12} {:>16} {:>20}",
            "n", "p", "max.imbalance", "Runtime (s)", "n,p scaling (x)", "lambda_min scaling (x)"
        )?;
        let mut last: Option<f64> = None;
        for r in &self.rows {
            if last.is_some_and(|m| m != r.max_imbalance) {
                writeln!(f, "{}", "-".repeat(83))?;
            }
            last = Some(r.max_imbalance);
            writeln!(
                f,
                "{:>10} {:>6} {:>14} {:>12.2} {:>16} {:>20}",
                r.n,
                r.p,
                r.max_imbalance,
                r.runtime_secs,
                ratio(r.np_scaling),
                ratio(r.lambda_min_scaling)
            )?;
        }
        write!(f, "threads: {}", self.threads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_data_is_deterministic() {
        let a = synthetic_dataset(500, 7, 11).unwrap();
        let b = synthetic_dataset(500, 7, 11).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        assert_ne!(a.content_hash(), synthetic_dataset(500, 7, 12).unwrap().content_hash());
        let share = a.n1() as f64 / a.n() as f64;
        assert!(share > 0.3 && share < 0.6, "treated share {share}");
    }

    #[test]
    fn small_grid_layout() {
        let cfg = BenchConfig {
            n: 400,
            p: 4,
            doublings: 1,
            max_imbalance: vec![0.1, 0.05],
            nlambda: 10,
            ..Default::default()
        };
        let report = run_bench(&cfg, |_| {}).unwrap();
        assert_eq!(report.rows.len(), 4);
        assert_eq!(report.rows[0].max_imbalance, 0.1);
        assert_eq!(report.rows[1].n, 800);
        assert!(report.rows[1].np_scaling.is_some());
        assert!(report.rows[2].lambda_min_scaling.is_some());
        let text = report.to_string();
        assert!(text.contains("Runtime (s)"));
        assert!(text.contains("--"));
    }
}
