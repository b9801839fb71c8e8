//! λ sequences, pathwise fitting with warm starts, and the top-level fit.
//!
//! Under the lasso the KKT conditions bound every standardized imbalance
//! by λ, so a path from `λ_max` down to a requested maximum imbalance is a
//! sequence of progressively better balanced weightings. A point the solver
//! cannot converge on marks where the penalized problem stops having a
//! finite minimizer; the path ends just before it.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{standardize, Dataset, StandardizedDesign, Target};
use crate::diagnostics;
use crate::error::{BalError, Result};
use crate::family::{arm_configs, weights_from_eta, ArmConfig, ArmLabel};
use crate::penalty::PenaltySpec;
use crate::solver::{loss_gradient, solve_screened, solve_single, Solution, SolverConfig};

/// Intercept minimizing the loss when every coefficient is zero:
/// `log(n_A / (n − n_A))`.
pub fn null_intercept(cfg: &ArmConfig) -> Result<f64> {
    let n_arm = cfg.n_arm();
    let rest = cfg.n() - n_arm;
    if n_arm == 0 || rest == 0 {
        return Err(BalError::data(format!(
            "degenerate arm counts ({n_arm} in arm, {rest} outside)"
        )));
    }
    Ok((n_arm as f64 / rest as f64).ln())
}

/// Smallest λ at which the zero coefficient vector is optimal.
///
/// This is the largest penalty-scaled group norm of the loss gradient at
/// the null fit. Groups with a zero penalty factor are fitted first and
/// excluded from the maximum.
pub fn lambda_max(design: &StandardizedDesign, cfg: &ArmConfig, pen: &PenaltySpec) -> Result<f64> {
    pen.validate()?;
    if pen.alpha == 0.0 {
        return Err(BalError::usage(
            "alpha = 0 (pure ridge) has no finite lambda_max; use a small positive alpha",
        ));
    }
    if pen.num_features() != design.p() {
        return Err(BalError::Dimension {
            expected: design.p(),
            actual: pen.num_features(),
        });
    }
    let null = if pen.factors.contains(&0.0) {
        let sol = solve_single(design, cfg, pen, 1e100, None, &SolverConfig::default())?;
        if !sol.converged {
            return Err(BalError::numerical(
                "the unpenalized features admit no finite fit",
            ));
        }
        sol
    } else {
        Solution::null(cfg, 0.0)?
    };
    let eta = null.linear_predictor(design);
    let (grad, _) = loss_gradient(design, cfg, &eta);
    let mut best: f64 = 0.0;
    for (g, r) in pen.groups.ranges().enumerate() {
        let pf = pen.factors[g];
        if pf > 0.0 {
            let norm = grad[r].iter().map(|x| x * x).sum::<f64>().sqrt();
            best = best.max(norm / (pen.alpha * pf));
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaOrigin {
    MaxImbalance,
    MinRatio,
}

/// Decreasing, log-equally-spaced penalty levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSequence {
    #[serde(with = "crate::hexfloat::vec")]
    pub values: Vec<f64>,
    #[serde(with = "crate::hexfloat")]
    pub lambda_max: f64,
    #[serde(with = "crate::hexfloat")]
    pub lambda_min: f64,
    pub origin: LambdaOrigin,
    pub warning: Option<String>,
}

pub const DEFAULT_MIN_RATIO: f64 = 1e-2;

/// `nlambda` values from `lambda_max` down to `max_imbalance`, or to
/// `min_ratio · lambda_max` (default ratio `1e-2`).
pub fn make_lambda_sequence(
    lambda_max: f64,
    nlambda: usize,
    max_imbalance: Option<f64>,
    min_ratio: Option<f64>,
) -> Result<LambdaSequence> {
    if nlambda == 0 {
        return Err(BalError::usage("nlambda must be at least 1"));
    }
    if !(lambda_max >= 0.0 && lambda_max.is_finite()) {
        return Err(BalError::numerical(format!("invalid lambda_max {lambda_max}")));
    }
    let (lambda_min, origin) = match (max_imbalance, min_ratio) {
        (Some(_), Some(_)) => {
            return Err(BalError::usage(
                "give either a maximum imbalance or a minimum ratio, not both",
            ))
        }
        (Some(m), None) => {
            if !(m > 0.0 && m.is_finite()) {
                return Err(BalError::usage("max imbalance must be positive"));
            }
            (m, LambdaOrigin::MaxImbalance)
        }
        (None, r) => {
            let r = r.unwrap_or(DEFAULT_MIN_RATIO);
            if !(r > 0.0 && r < 1.0) {
                return Err(BalError::usage("min ratio must lie in (0, 1)"));
            }
            (r * lambda_max, LambdaOrigin::MinRatio)
        }
    };
    let single = |warning: Option<String>| LambdaSequence {
        values: vec![lambda_max],
        lambda_max,
        lambda_min: lambda_max,
        origin,
        warning,
    };
    if lambda_max == 0.0 {
        return Ok(single(Some(
            "covariates are already exactly balanced (lambda_max = 0)".into(),
        )));
    }
    if lambda_min >= lambda_max {
        return Ok(single(Some(format!(
            "requested maximum imbalance {lambda_min} is not below the unweighted imbalance {lambda_max}"
        ))));
    }
    if nlambda == 1 {
        return Ok(single(None));
    }
    let (hi, lo) = (lambda_max.ln(), lambda_min.ln());
    let step = (lo - hi) / (nlambda - 1) as f64;
    let mut values: Vec<f64> = (0..nlambda).map(|k| (hi + step * k as f64).exp()).collect();
    values[0] = lambda_max;
    values[nlambda - 1] = lambda_min;
    Ok(LambdaSequence {
        values,
        lambda_max,
        lambda_min,
        origin,
        warning: None,
    })
}

/// Per-λ balance summary printed alongside the path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    #[serde(with = "crate::hexfloat")]
    pub lambda: f64,
    pub nonzero: usize,
    #[serde(with = "crate::hexfloat")]
    pub avg_abs_smd: f64,
    #[serde(with = "crate::hexfloat")]
    pub max_abs_smd: f64,
    #[serde(with = "crate::hexfloat")]
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFit {
    pub label: ArmLabel,
    /// Requested grid.
    #[serde(with = "crate::hexfloat::vec")]
    pub lambdas: Vec<f64>,
    /// Converged solutions, one per retained grid point.
    pub solutions: Vec<Solution>,
    /// Index of the first grid point that failed to converge.
    pub truncated_at: Option<usize>,
    pub summary: Vec<SummaryRow>,
    /// Average |SMD| of the unweighted arm.
    #[serde(with = "crate::hexfloat")]
    pub baseline_avg_abs_smd: f64,
    pub warnings: Vec<String>,
}

impl PathFit {
    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn requested_len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambdas[0]
    }

    pub fn requested_lambda_min(&self) -> f64 {
        *self.lambdas.last().expect("non-empty grid")
    }

    pub fn achieved_lambda_min(&self) -> Option<f64> {
        self.solutions.last().map(|s| s.lambda)
    }
}

/// Progress event emitted after each converged path point.
#[derive(Debug, Clone)]
pub struct Progress {
    pub label: ArmLabel,
    pub index: usize,
    pub total: usize,
    pub lambda: f64,
    pub max_abs_smd: f64,
    pub nonzero: usize,
}

pub type ProgressFn<'a> = &'a (dyn Fn(&Progress) + Sync);

/// Fit every λ of `seq` in order, warm-starting each point from the last.
pub fn fit_path(
    design: &StandardizedDesign,
    cfg: &ArmConfig,
    pen: &PenaltySpec,
    seq: &LambdaSequence,
    conf: &SolverConfig,
) -> Result<PathFit> {
    fit_path_with_progress(design, cfg, pen, seq, conf, None)
}

pub fn fit_path_with_progress(
    design: &StandardizedDesign,
    cfg: &ArmConfig,
    pen: &PenaltySpec,
    seq: &LambdaSequence,
    conf: &SolverConfig,
    progress: Option<ProgressFn<'_>>,
) -> Result<PathFit> {
    let uniform: Vec<f64> = cfg.arm.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
    let baseline = diagnostics::smd_standardized(design, &uniform, &cfg.arm)?;
    let mut fit = PathFit {
        label: cfg.label,
        lambdas: seq.values.clone(),
        solutions: Vec::with_capacity(seq.values.len()),
        truncated_at: None,
        summary: Vec::with_capacity(seq.values.len()),
        baseline_avg_abs_smd: diagnostics::mean_abs(&baseline),
        warnings: seq.warning.iter().cloned().collect(),
    };
    let mut previous_gradient: Option<Vec<f64>> = None;
    for (k, &lambda) in seq.values.iter().enumerate() {
        let warm = fit.solutions.last();
        let prev = previous_gradient
            .as_deref()
            .zip(warm.map(|s| s.lambda));
        let out = solve_screened(design, cfg, pen, lambda, warm, prev, conf)?;
        if !out.solution.converged {
            fit.truncated_at = Some(k);
            let achieved = warm.map_or(f64::NAN, |s| s.lambda);
            fit.warnings.push(format!(
                "{} path truncated at {}/{}: no convergence at lambda {:.5}; requested lambda_min {:.5}, achieved {:.5}",
                cfg.label.title(),
                k,
                seq.values.len(),
                lambda,
                seq.lambda_min,
                achieved
            ));
            break;
        }
        let sol = out.solution;
        if sol.overflow {
            fit.warnings.push(format!(
                "exponent clipped while fitting lambda {lambda:.5}; weights may be extreme"
            ));
        }
        let eta = sol.linear_predictor(design);
        let weights = weights_from_eta(&eta, cfg);
        let smd = diagnostics::smd_standardized(design, &weights, &cfg.arm)?;
        if k == 0 && sol.nonzero() == 0 {
            // constant weights: same balance as uniform, and bit-identical to
            // what a report at λ_max recomputes
            fit.baseline_avg_abs_smd = diagnostics::mean_abs(&smd);
        }
        let row = SummaryRow {
            lambda,
            nonzero: sol.nonzero(),
            avg_abs_smd: diagnostics::mean_abs(&smd),
            max_abs_smd: diagnostics::max_abs(&smd),
            ess: diagnostics::ess(&arm_values(&weights, &cfg.arm))?,
        };
        if let Some(cb) = progress {
            cb(&Progress {
                label: cfg.label,
                index: k,
                total: seq.values.len(),
                lambda,
                max_abs_smd: row.max_abs_smd,
                nonzero: row.nonzero,
            });
        }
        fit.summary.push(row);
        fit.solutions.push(sol);
        previous_gradient = Some(out.gradient);
    }
    Ok(fit)
}

pub(crate) fn arm_values(weights: &[f64], arm: &[bool]) -> Vec<f64> {
    weights
        .iter()
        .zip(arm)
        .filter(|(_, &a)| a)
        .map(|(&w, _)| w)
        .collect()
}

/// Path construction options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathOptions {
    pub nlambda: usize,
    #[serde(with = "crate::hexfloat::option")]
    pub max_imbalance: Option<f64>,
    #[serde(with = "crate::hexfloat::option")]
    pub min_ratio: Option<f64>,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions {
            nlambda: 100,
            max_imbalance: None,
            min_ratio: None,
        }
    }
}

impl PathOptions {
    pub fn sequence(&self, lambda_max: f64) -> Result<LambdaSequence> {
        make_lambda_sequence(lambda_max, self.nlambda, self.max_imbalance, self.min_ratio)
    }
}

/// A fitted set of balancing models for one target.
#[derive(Debug, Clone)]
pub struct BalNetFit {
    pub target: Target,
    /// One path, or two for ATE (treated model first).
    pub paths: Vec<PathFit>,
    pub design: Arc<StandardizedDesign>,
    pub feature_names: Vec<String>,
    pub penalty: PenaltySpec,
    pub options: PathOptions,
    pub solver: SolverConfig,
}

impl BalNetFit {
    pub fn arm_configs(&self) -> Vec<ArmConfig> {
        arm_configs(self.target, self.design.treatment())
    }

    pub fn path(&self, label: ArmLabel) -> Option<&PathFit> {
        self.paths.iter().find(|p| p.label == label)
    }
}

/// Standardize, then fit one path per balancing model. The two ATE models
/// share no parameters and run concurrently.
pub fn fit_balnet(
    ds: &Dataset,
    target: Target,
    pen: &PenaltySpec,
    options: &PathOptions,
    conf: &SolverConfig,
) -> Result<BalNetFit> {
    fit_balnet_with_progress(ds, target, pen, options, conf, None)
}

pub fn fit_balnet_with_progress(
    ds: &Dataset,
    target: Target,
    pen: &PenaltySpec,
    options: &PathOptions,
    conf: &SolverConfig,
    progress: Option<ProgressFn<'_>>,
) -> Result<BalNetFit> {
    let design = Arc::new(standardize(ds, target)?);
    let mut fit = fit_design(design, target, pen, options, conf, progress)?;
    fit.feature_names = ds.feature_names().to_vec();
    Ok(fit)
}

/// As [`fit_balnet_with_progress`] on an already standardized design.
pub fn fit_design(
    design: Arc<StandardizedDesign>,
    target: Target,
    pen: &PenaltySpec,
    options: &PathOptions,
    conf: &SolverConfig,
    progress: Option<ProgressFn<'_>>,
) -> Result<BalNetFit> {
    pen.validate()?;
    conf.validate()?;
    let cfgs = arm_configs(target, design.treatment());
    let run = |cfg: &ArmConfig| -> Result<PathFit> {
        let lmax = lambda_max(&design, cfg, pen)?;
        let seq = options.sequence(lmax)?;
        fit_path_with_progress(&design, cfg, pen, &seq, conf, progress)
    };
    let paths = match cfgs.as_slice() {
        [one] => vec![run(one)?],
        [a, b] => {
            let (pa, pb) = rayon::join(|| run(a), || run(b));
            vec![pa?, pb?]
        }
        _ => unreachable!("one or two balancing models per target"),
    };
    let feature_names = (0..design.p()).map(|j| format!("x{j}")).collect();
    Ok(BalNetFit {
        target,
        paths,
        design,
        feature_names,
        penalty: pen.clone(),
        options: options.clone(),
        solver: conf.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Matrix;
    use crate::family::gradient_eta;
    use approx::assert_abs_diff_eq;

    fn toy() -> Dataset {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]).unwrap();
        Dataset::new(x, vec![true, true, false, false], vec!["x1".into()]).unwrap()
    }

    fn cfg_with(arm: &[bool]) -> ArmConfig {
        ArmConfig {
            arm: arm.to_vec(),
            norm: arm.len() as f64,
            label: ArmLabel::Treated,
            weight_kind: crate::family::WeightKind::InverseProbability,
        }
    }

    #[test]
    fn null_intercept_examples() {
        assert_eq!(null_intercept(&cfg_with(&[true, false, true, false])).unwrap(), 0.0);
        let c = cfg_with(&[true, false, false, false]);
        let b0 = null_intercept(&c).unwrap();
        assert_abs_diff_eq!(b0, (1.0f64 / 3.0).ln(), epsilon = 1e-15);
        // 1-D grid search over the intercept-only loss
        let loss_at = |b: f64| crate::family::loss(&[b; 4], &c);
        let grid_best = (0..20001)
            .map(|k| -3.0 + 3.0 * k as f64 / 20000.0)
            .min_by(|a, b| loss_at(*a).total_cmp(&loss_at(*b)))
            .unwrap();
        assert!((grid_best - b0).abs() < 2e-4);
        let g = gradient_eta(&[b0; 4], &c);
        assert!(g.iter().sum::<f64>().abs() < 1e-10);
        assert!(null_intercept(&cfg_with(&[true, true])).is_err());
    }

    #[test]
    fn lambda_max_toy_att() {
        let ds = toy();
        let d = standardize(&ds, Target::Att).unwrap();
        let cfg = &arm_configs(Target::Att, d.treatment())[0];
        let lmax = lambda_max(&d, cfg, &PenaltySpec::lasso(1)).unwrap();
        // (2.1213 + 3.5355) / 2 from the treated-standardized column
        assert_abs_diff_eq!(lmax, 2.0 * std::f64::consts::SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn lambda_max_zero_when_balanced() {
        let x = Matrix::from_rows(&[vec![1.0], vec![3.0], vec![3.0], vec![1.0]]).unwrap();
        let ds = Dataset::new(x, vec![true, true, false, false], vec!["x".into()]).unwrap();
        let d = standardize(&ds, Target::Att).unwrap();
        let cfg = &arm_configs(Target::Att, d.treatment())[0];
        assert!(lambda_max(&d, cfg, &PenaltySpec::lasso(1)).unwrap().abs() < 1e-15);
    }

    #[test]
    fn lambda_max_rejects_ridge() {
        let d = standardize(&toy(), Target::Att).unwrap();
        let cfg = &arm_configs(Target::Att, d.treatment())[0];
        assert!(lambda_max(&d, cfg, &PenaltySpec::elastic_net(1, 0.0)).is_err());
    }

    #[test]
    fn sequence_examples() {
        let s = make_lambda_sequence(1.0, 3, None, Some(0.01)).unwrap();
        assert_eq!(s.values[0], 1.0);
        assert_abs_diff_eq!(s.values[1], 0.1, epsilon = 1e-15);
        assert_eq!(s.values[2], 0.01);

        let s = make_lambda_sequence(467.85832, 100, Some(0.05), None).unwrap();
        assert_eq!(s.values.len(), 100);
        assert_eq!(s.values[0], 467.85832);
        assert_eq!(s.values[99], 0.05);
        assert_eq!(s.origin, LambdaOrigin::MaxImbalance);

        let s = make_lambda_sequence(2.0, 1, Some(0.5), None).unwrap();
        assert_eq!(s.values, vec![2.0]);

        let s = make_lambda_sequence(0.04, 100, Some(0.05), None).unwrap();
        assert_eq!(s.values, vec![0.04]);
        assert!(s.warning.is_some());

        assert!(make_lambda_sequence(1.0, 10, Some(0.1), Some(0.1)).is_err());
        assert!(make_lambda_sequence(1.0, 0, None, None).is_err());
        let d = make_lambda_sequence(3.0, 5, None, None).unwrap();
        assert_abs_diff_eq!(d.lambda_min, 0.03, epsilon = 1e-15);
    }

    #[test]
    fn sequence_is_log_linear() {
        let s = make_lambda_sequence(7.3, 57, Some(0.002), None).unwrap();
        let logs: Vec<f64> = s.values.iter().map(|v| v.ln()).collect();
        let step = logs[1] - logs[0];
        for w in logs.windows(2) {
            assert!(w[1] < w[0]);
            assert!((w[1] - w[0] - step).abs() < 1e-12);
        }
    }

    #[test]
    fn att_fit_has_one_control_path() {
        let fit = fit_balnet(
            &toy(),
            Target::Att,
            &PenaltySpec::lasso(1),
            &PathOptions { nlambda: 5, ..Default::default() },
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(fit.paths.len(), 1);
        assert_eq!(fit.paths[0].label, ArmLabel::Control);
    }
}
