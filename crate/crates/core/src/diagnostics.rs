//! Balance and weight diagnostics: SMD, PBR, ESS, coefficient of variation
//! of the weights, interpolation along the path and grouped summaries.

use serde::Serialize;

use crate::data::{dot, FeatureGroups, Matrix, StandardizationSpec, StandardizedDesign, Target};
use crate::error::{BalError, Result};
use crate::family::{weights_from_eta, ArmConfig, ArmLabel};
use crate::path::{arm_values, BalNetFit, PathFit};
use crate::solver::{SparseCoefs, Solution};

pub fn mean_abs(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solution at an arbitrary λ. λ is clamped to the retained range, so
/// `λ = 0` gives the last converged point.
pub fn interpolate(path: &PathFit, lambda: f64) -> Result<Solution> {
    let sols = &path.solutions;
    let (first, last) = match (sols.first(), sols.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(BalError::numerical("path has no converged points")),
    };
    if lambda >= first.lambda {
        return Ok(first.clone());
    }
    if lambda <= last.lambda {
        return Ok(last.clone());
    }
    // grid is strictly decreasing: find k with λ_k > λ ≥ λ_{k+1}
    let k = sols.partition_point(|s| s.lambda > lambda) - 1;
    let (hi, lo) = (&sols[k], &sols[k + 1]);
    if lo.lambda == lambda {
        return Ok(lo.clone());
    }
    let w = (lambda - lo.lambda) / (hi.lambda - lo.lambda);
    let p = hi
        .coefs
        .indices
        .iter()
        .chain(&lo.coefs.indices)
        .max()
        .map_or(0, |m| m + 1);
    let (bh, bl) = (hi.coefs.to_dense(p), lo.coefs.to_dense(p));
    let beta: Vec<f64> = bh.iter().zip(&bl).map(|(a, b)| w * a + (1.0 - w) * b).collect();
    Ok(Solution {
        lambda,
        intercept: w * hi.intercept + (1.0 - w) * lo.intercept,
        coefs: SparseCoefs::from_dense(&beta),
        converged: hi.converged && lo.converged,
        outer_iters: 0,
        inner_iters: 0,
        grad_supnorm: f64::NAN,
        overflow: hi.overflow || lo.overflow,
        degenerate: Vec::new(),
    })
}

/// Standardized mean differences on the raw covariate scale: Hájek
/// weighted arm mean minus reference mean, over the reference SD.
pub fn smd(x: &Matrix, weights: &[f64], arm: &[bool], spec: &StandardizationSpec) -> Result<Vec<f64>> {
    let masked: Vec<f64> = arm_masked(weights, arm);
    let total: f64 = masked.iter().sum();
    if !(total > 0.0) {
        return Err(BalError::numerical("arm weights sum to zero"));
    }
    Ok((0..x.ncols())
        .map(|j| {
            let mean = dot(x.col(j), &masked) / total;
            (mean - spec.centers[j]) / spec.scales[j]
        })
        .collect())
}

/// [`smd`] computed on an already standardized design, where the reference
/// mean is zero and the reference SD is one.
pub fn smd_standardized(design: &StandardizedDesign, weights: &[f64], arm: &[bool]) -> Result<Vec<f64>> {
    let masked = arm_masked(weights, arm);
    let total: f64 = masked.iter().sum();
    if !(total > 0.0) {
        return Err(BalError::numerical("arm weights sum to zero"));
    }
    Ok(design
        .transpose_mul(&masked)
        .into_iter()
        .map(|v| v / total)
        .collect())
}

fn arm_masked(weights: &[f64], arm: &[bool]) -> Vec<f64> {
    weights
        .iter()
        .zip(arm)
        .map(|(&w, &a)| if a { w } else { 0.0 })
        .collect()
}

/// Effective sample size as a percentage of the arm size.
pub fn ess(weights: &[f64]) -> Result<f64> {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if weights.is_empty() || !(s2 > 0.0) {
        return Err(BalError::numerical("effective sample size of all-zero weights"));
    }
    Ok(100.0 * s * s / (weights.len() as f64 * s2))
}

/// Percentage bias reduction. A zero baseline yields 0 and a warning.
pub fn pbr(avg_abs_smd: f64, baseline: f64) -> (f64, Option<String>) {
    if baseline > 0.0 {
        (100.0 * (1.0 - avg_abs_smd / baseline), None)
    } else {
        (
            0.0,
            Some("unweighted data is already balanced; PBR set to 0".into()),
        )
    }
}

/// Coefficient of variation of the arm weights, through its ESS identity.
pub fn weight_cv(ess: f64) -> f64 {
    (100.0 / ess - 1.0).max(0.0).sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub label: ArmLabel,
    pub lambda: f64,
    pub smd: Vec<f64>,
    pub avg_abs_smd: f64,
    pub max_abs_smd: f64,
    pub pbr: f64,
    pub ess: f64,
    pub weight_cv: f64,
    pub nonzero: usize,
    /// One weight per unit. Units outside the arm carry 0, except the
    /// treated units under ATT, which carry 1.
    pub weights: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Report for one balancing model at `lambda`.
pub fn report_path(
    design: &StandardizedDesign,
    cfg: &ArmConfig,
    path: &PathFit,
    target: Target,
    lambda: f64,
) -> Result<DiagnosticsReport> {
    let mut warnings = Vec::new();
    if let Some(min) = path.achieved_lambda_min() {
        if lambda < min && lambda != 0.0 {
            warnings.push(format!(
                "lambda {lambda} is below the smallest fitted value {min}; clamped"
            ));
        }
    }
    let sol = interpolate(path, lambda)?;
    let eta = sol.linear_predictor(design);
    let mut weights = weights_from_eta(&eta, cfg);
    let smd = smd_standardized(design, &weights, &cfg.arm)?;
    let ess = ess(&arm_values(&weights, &cfg.arm))?;
    let avg = mean_abs(&smd);
    let (pbr, warn) = pbr(avg, path.baseline_avg_abs_smd);
    warnings.extend(warn);
    if target == Target::Att {
        for (w, &t) in weights.iter_mut().zip(design.treatment()) {
            if t {
                *w = 1.0;
            }
        }
    }
    Ok(DiagnosticsReport {
        label: cfg.label,
        lambda: sol.lambda,
        max_abs_smd: max_abs(&smd),
        avg_abs_smd: avg,
        smd,
        pbr,
        ess,
        weight_cv: weight_cv(ess),
        nonzero: sol.nonzero(),
        weights,
        warnings,
    })
}

/// One report per balancing model of the fit.
pub fn report(fit: &BalNetFit, lambda: f64) -> Result<Vec<DiagnosticsReport>> {
    fit.arm_configs()
        .iter()
        .zip(&fit.paths)
        .map(|(cfg, path)| report_path(&fit.design, cfg, path, fit.target, lambda))
        .collect()
}

/// Per-unit weights at `lambda`, each unit taking the weight from the model
/// of its own arm. Treated units under ATT get 1.
pub fn unit_weights(fit: &BalNetFit, lambda: f64) -> Result<(Vec<f64>, Vec<String>)> {
    let reports = report(fit, lambda)?;
    let mut out = vec![0.0; fit.design.n()];
    let mut warnings = Vec::new();
    for (cfg, rep) in fit.arm_configs().iter().zip(&reports) {
        for (i, &a) in cfg.arm.iter().enumerate() {
            if a {
                out[i] = rep.weights[i];
            }
        }
        warnings.extend(rep.warnings.iter().cloned());
    }
    if fit.target == Target::Att {
        for (w, &t) in out.iter_mut().zip(fit.design.treatment()) {
            if t {
                *w = 1.0;
            }
        }
    }
    warnings.dedup();
    Ok((out, warnings))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub name: String,
    pub mean_abs: f64,
    pub max_abs: f64,
    pub count: usize,
}

/// Aggregate |SMD| by feature group, in group order.
pub fn group_smd(smd: &[f64], groups: &FeatureGroups) -> Result<Vec<GroupSummary>> {
    if groups.num_features() != smd.len() {
        return Err(BalError::Dimension {
            expected: groups.num_features(),
            actual: smd.len(),
        });
    }
    Ok(groups
        .ranges()
        .zip(groups.names())
        .map(|(r, name)| GroupSummary {
            name: name.clone(),
            mean_abs: mean_abs(&smd[r.clone()]),
            max_abs: max_abs(&smd[r.clone()]),
            count: r.len(),
        })
        .collect())
}

/// [`group_smd`] for an arbitrary feature-to-label assignment. Groups are
/// reported in order of first appearance.
pub fn group_smd_by_label(smd: &[f64], labels: &[String]) -> Result<Vec<GroupSummary>> {
    if labels.len() != smd.len() {
        return Err(BalError::Dimension {
            expected: smd.len(),
            actual: labels.len(),
        });
    }
    let mut order: Vec<&String> = Vec::new();
    for l in labels {
        if !order.contains(&l) {
            order.push(l);
        }
    }
    Ok(order
        .into_iter()
        .map(|name| {
            let vals: Vec<f64> = smd
                .iter()
                .zip(labels)
                .filter(|(_, l)| *l == name)
                .map(|(&v, _)| v)
                .collect();
            GroupSummary {
                name: name.clone(),
                mean_abs: mean_abs(&vals),
                max_abs: max_abs(&vals),
                count: vals.len(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{standardize, Dataset};
    use crate::penalty::PenaltySpec;
    use crate::path::{fit_balnet, PathOptions};
    use crate::solver::SolverConfig;
    use approx::assert_abs_diff_eq;

    fn toy() -> Dataset {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]).unwrap();
        Dataset::new(x, vec![true, true, false, false], vec!["x1".into()]).unwrap()
    }

    #[test]
    fn ess_examples() {
        assert_abs_diff_eq!(ess(&[1.0, 1.0, 1.0]).unwrap(), 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ess(&[1.0, 0.0, 0.0]).unwrap(), 100.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ess(&[2.0, 1.0, 1.0]).unwrap(), 1600.0 / 18.0, epsilon = 1e-12);
        assert!(ess(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn pbr_examples() {
        assert_eq!(pbr(0.4, 0.4).0, 0.0);
        assert_eq!(pbr(0.2, 0.4).0, 50.0);
        assert_eq!(pbr(0.0, 0.4).0, 100.0);
        let (v, w) = pbr(0.0, 0.0);
        assert_eq!(v, 0.0);
        assert!(w.is_some());
    }

    #[test]
    fn weight_cv_identity() {
        let w = [2.0, 1.0, 1.0];
        let mean = 4.0 / 3.0;
        let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 3.0;
        assert_abs_diff_eq!(weight_cv(ess(&w).unwrap()), var.sqrt() / mean, epsilon = 1e-12);
        assert_eq!(weight_cv(100.0), 0.0);
    }

    #[test]
    fn smd_examples() {
        let ds = toy();
        let d = standardize(&ds, Target::Att).unwrap();
        let arm = [false, false, true, true];
        let uniform = [0.0, 0.0, 1.0, 1.0];
        let s = smd(ds.x(), &uniform, &arm, d.spec()).unwrap();
        assert_abs_diff_eq!(s[0], 2.0 * std::f64::consts::SQRT_2, epsilon = 1e-12);
        let fast = smd_standardized(&d, &uniform, &arm).unwrap();
        assert_abs_diff_eq!(fast[0], s[0], epsilon = 1e-12);
        // point mass on unit 3 (x = 4)
        let s = smd(ds.x(), &[0.0, 0.0, 0.0, 5.0], &arm, d.spec()).unwrap();
        assert_abs_diff_eq!(s[0], (4.0 - 1.5) / 0.5f64.sqrt(), epsilon = 1e-12);
        assert!(smd(ds.x(), &[1.0, 1.0, 0.0, 0.0], &arm, d.spec()).is_err());
    }

    #[test]
    fn group_smd_examples() {
        let g = FeatureGroups::new(vec!["a".into(), "b".into()], &[1, 2]).unwrap();
        let out = group_smd(&[0.1, -0.3, 0.3], &g).unwrap();
        assert_abs_diff_eq!(out[0].mean_abs, 0.1);
        assert_abs_diff_eq!(out[1].mean_abs, 0.3);
        assert_abs_diff_eq!(out[1].max_abs, 0.3);
        assert_eq!(out[1].count, 2);
        assert!(group_smd(&[0.0; 2], &g).is_err());
        let labels: Vec<String> = ["b", "a", "b"].iter().map(|s| s.to_string()).collect();
        let by = group_smd_by_label(&[0.3, 0.1, -0.3], &labels).unwrap();
        assert_eq!(by[0].name, "b");
        assert_eq!(by[0].count, 2);
        assert_abs_diff_eq!(by[0].mean_abs, 0.3);
        assert_abs_diff_eq!(by[1].max_abs, 0.1);
        let all = group_smd_by_label(&[0.0; 3], &labels).unwrap();
        assert!(all.iter().all(|g| g.mean_abs == 0.0 && g.max_abs == 0.0));
    }

    #[test]
    fn interpolation_and_report() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let w: Vec<bool> = (0..60).map(|i| i % 2 == 0).collect();
        let ds = Dataset::new(Matrix::from_rows(&rows).unwrap(), w, vec!["a".into(), "b".into()]).unwrap();
        let fit = fit_balnet(
            &ds,
            Target::Ate,
            &PenaltySpec::lasso(2),
            &PathOptions { nlambda: 10, ..Default::default() },
            &SolverConfig::default(),
        )
        .unwrap();
        let path = &fit.paths[0];
        let s3 = interpolate(path, path.solutions[3].lambda).unwrap();
        assert_eq!(s3, path.solutions[3]);
        let mid = 0.5 * (path.solutions[3].lambda + path.solutions[4].lambda);
        let sm = interpolate(path, mid).unwrap();
        let (a, b) = (path.solutions[3].coefs.to_dense(2), path.solutions[4].coefs.to_dense(2));
        let dense = sm.coefs.to_dense(2);
        for j in 0..2 {
            assert_abs_diff_eq!(dense[j], 0.5 * (a[j] + b[j]), epsilon = 1e-14);
        }
        let last = interpolate(path, 0.0).unwrap();
        assert_eq!(last.lambda, path.achieved_lambda_min().unwrap());

        let top = report(&fit, f64::INFINITY).unwrap();
        for r in &top {
            assert_eq!(r.nonzero, 0);
            assert_abs_diff_eq!(r.pbr, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(r.ess, 100.0, epsilon = 1e-9);
        }
        for r in report(&fit, 0.0).unwrap() {
            assert!(r.max_abs_smd <= r.lambda + 1e-6);
            assert_eq!(r.weight_cv, (100.0 / r.ess - 1.0).max(0.0).sqrt());
        }
        let (w, _) = unit_weights(&fit, 0.0).unwrap();
        assert_eq!(w.len(), 60);
        assert!(path.truncated_at.is_none());
        assert!(w.iter().all(|&v| v > 1.0));
    }
}
