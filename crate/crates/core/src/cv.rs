//! K-fold cross-validation of the balancing loss over a fixed λ grid.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{standardize, Dataset, StandardizedDesign, Target};
use crate::error::{BalError, Result};
use crate::family::{arm_configs, exp_neg, ArmConfig, ArmLabel};
use crate::path::{fit_path, lambda_max, LambdaSequence, PathOptions};
use crate::penalty::PenaltySpec;
use crate::solver::SolverConfig;

#[derive(Debug, Clone, Serialize)]
pub struct CvResult {
    pub label: ArmLabel,
    pub lambdas: Vec<f64>,
    pub mean_loss: Vec<f64>,
    pub std_err: Vec<f64>,
    /// Per-fold held-out losses, `fold_loss[k][l]` for fold `k`, grid point `l`.
    pub fold_loss: Vec<Vec<f64>>,
    pub lambda_min_cv: f64,
    pub lambda_1se: f64,
    pub folds: usize,
    pub seed: u64,
    pub warnings: Vec<String>,
}

impl CvResult {
    pub fn index_min(&self) -> usize {
        self.lambdas
            .iter()
            .position(|&l| l == self.lambda_min_cv)
            .expect("selected lambda is on the grid")
    }

    pub fn index_1se(&self) -> usize {
        self.lambdas
            .iter()
            .position(|&l| l == self.lambda_1se)
            .expect("selected lambda is on the grid")
    }
}

/// Fold index of every unit. Each arm is shuffled separately and dealt
/// round-robin, so every fold gets a near-equal share of both arms.
pub fn stratified_folds(treatment: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(BalError::usage("cross-validation needs at least 2 folds"));
    }
    if k > treatment.len() {
        return Err(BalError::usage(format!(
            "{k} folds requested for {} units",
            treatment.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut treated: Vec<usize> = (0..treatment.len()).filter(|&i| treatment[i]).collect();
    let mut control: Vec<usize> = (0..treatment.len()).filter(|&i| !treatment[i]).collect();
    treated.shuffle(&mut rng);
    control.shuffle(&mut rng);
    let mut fold = vec![0; treatment.len()];
    for (pos, &i) in treated.iter().chain(&control).enumerate() {
        fold[i] = pos % k;
    }
    Ok(fold)
}

/// Held-out balancing loss normalized per unit like the full-data loss.
pub(crate) fn heldout_loss(eta: &[f64], cfg: &ArmConfig, norm: f64) -> f64 {
    let total: f64 = eta
        .iter()
        .zip(&cfg.arm)
        .map(|(&e, &a)| if a { exp_neg(e).0 } else { e })
        .sum();
    total / norm
}

/// Cross-validate every balancing model of `target`.
pub fn cross_validate(
    ds: &Dataset,
    target: Target,
    pen: &PenaltySpec,
    options: &PathOptions,
    folds: usize,
    seed: u64,
    conf: &SolverConfig,
) -> Result<Vec<CvResult>> {
    let design = standardize(ds, target)?;
    cross_validate_design(&design, target, pen, options, folds, seed, conf)
}

/// As [`cross_validate`] on an already standardized design. Folds reuse the
/// full-data standardization and λ grid.
pub fn cross_validate_design(
    design: &StandardizedDesign,
    target: Target,
    pen: &PenaltySpec,
    options: &PathOptions,
    folds: usize,
    seed: u64,
    conf: &SolverConfig,
) -> Result<Vec<CvResult>> {
    let fold_of = stratified_folds(design.treatment(), folds, seed)?;
    cross_validate_folds(design, target, pen, options, &fold_of, seed, conf)
}

/// Cross-validation over a caller-supplied fold assignment (`fold_of[i]`
/// is the fold of unit `i`, numbered from 0). `seed` is only recorded.
pub fn cross_validate_folds(
    design: &StandardizedDesign,
    target: Target,
    pen: &PenaltySpec,
    options: &PathOptions,
    fold_of: &[usize],
    seed: u64,
    conf: &SolverConfig,
) -> Result<Vec<CvResult>> {
    let w = design.treatment();
    if fold_of.len() != w.len() {
        return Err(BalError::Dimension {
            expected: w.len(),
            actual: fold_of.len(),
        });
    }
    let folds = fold_of.iter().max().map_or(0, |m| m + 1);
    if folds < 2 {
        return Err(BalError::usage("cross-validation needs at least 2 folds"));
    }
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..folds)
        .map(|k| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..w.len()).partition(|&i| fold_of[i] == k);
            (train, test)
        })
        .collect();
    for (k, (train, test)) in splits.iter().enumerate() {
        if test.is_empty() {
            return Err(BalError::usage(format!("fold {k} is empty")));
        }
        let t = train.iter().filter(|&&i| w[i]).count();
        if t == 0 || t == train.len() {
            return Err(BalError::data(format!(
                "training split of fold {k} lacks a treatment arm"
            )));
        }
    }
    let n = w.len() as f64;
    arm_configs(target, w)
        .iter()
        .map(|cfg| {
            let seq = options.sequence(lambda_max(design, cfg, pen)?)?;
            cv_one_model(design, target, cfg, pen, &seq, &splits, n, seed, conf)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn cv_one_model(
    design: &StandardizedDesign,
    target: Target,
    cfg: &ArmConfig,
    pen: &PenaltySpec,
    seq: &LambdaSequence,
    splits: &[(Vec<usize>, Vec<usize>)],
    n: f64,
    seed: u64,
    conf: &SolverConfig,
) -> Result<CvResult> {
    let w = design.treatment();
    let fold_losses: Vec<Vec<f64>> = splits
        .par_iter()
        .map(|(train, test)| -> Result<Vec<f64>> {
            let d_train = design.select_rows(train)?;
            let c_train = cfg.select_rows(target, w, train);
            let path = fit_path(&d_train, &c_train, pen, seq, conf)?;
            let d_test = design.select_rows(test)?;
            let c_test = ArmConfig {
                arm: test.iter().map(|&i| cfg.arm[i]).collect(),
                ..cfg.clone()
            };
            let norm = test.len() as f64 * cfg.norm / n;
            Ok(path
                .solutions
                .iter()
                .map(|s| heldout_loss(&s.linear_predictor(&d_test), &c_test, norm))
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut warnings = seq.warning.iter().cloned().collect::<Vec<_>>();
    let common = fold_losses.iter().map(Vec::len).min().unwrap_or(0);
    if common == 0 {
        return Err(BalError::numerical(format!(
            "{} model: a fold path retained no points",
            cfg.label.title()
        )));
    }
    if common < seq.values.len() {
        warnings.push(format!(
            "fold paths truncated; grid restricted to the first {common} of {} lambda values",
            seq.values.len()
        ));
    }
    let k = splits.len() as f64;
    let lambdas = seq.values[..common].to_vec();
    let mut mean_loss = Vec::with_capacity(common);
    let mut std_err = Vec::with_capacity(common);
    for l in 0..common {
        let vals: Vec<f64> = fold_losses.iter().map(|f| f[l]).collect();
        let mean = vals.iter().sum::<f64>() / k;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
        mean_loss.push(mean);
        std_err.push((var / k).sqrt());
    }
    let best = (0..common).fold(0, |b, l| if mean_loss[l] < mean_loss[b] { l } else { b });
    let bound = mean_loss[best] + std_err[best];
    let one_se = (0..=best)
        .find(|&l| mean_loss[l] <= bound)
        .unwrap_or(best);
    Ok(CvResult {
        label: cfg.label,
        lambda_min_cv: lambdas[best],
        lambda_1se: lambdas[one_se],
        lambdas,
        mean_loss,
        std_err,
        fold_loss: fold_losses.into_iter().map(|mut f| {
            f.truncate(common);
            f
        }).collect(),
        folds: splits.len(),
        seed,
        warnings,
    })
}
