//! Single-λ minimizer of `ℓ(η) + λ P(β)`.
//!
//! Outer proximal Newton iterations build a quadratic model of the loss in
//! the linear predictors; inner cyclic coordinate descent minimizes the
//! penalized model over a working set of groups. The working set starts
//! from the strong rule and grows with KKT violators found by a full
//! gradient pass, so screening never changes the answer.

use std::collections::{BTreeSet, HashMap};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{dot, sum, StandardizedDesign, PAR_CHUNK};
use crate::error::{BalError, Result};
use crate::family::{self, ArmConfig, LossState};
use crate::path::null_intercept;
use crate::penalty::{soft_threshold, BlockHessian, PenaltySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Screening {
    Strong,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// KKT tolerance in gradient units; also scales the inner stopping rule.
    #[serde(with = "crate::hexfloat")]
    pub tol: f64,
    pub max_outer: usize,
    /// Coordinate-descent sweeps per Newton step.
    pub max_inner: usize,
    #[serde(with = "crate::hexfloat")]
    pub curvature_floor: f64,
    pub screening: Screening,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-7,
            max_outer: 100,
            max_inner: 1000,
            curvature_floor: 1e-10,
            screening: Screening::Strong,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_outer == 0 || self.max_inner == 0 {
            return Err(BalError::usage(
                "tol, max_outer and max_inner must all be positive",
            ));
        }
        if !(self.curvature_floor > 0.0) {
            return Err(BalError::usage("curvature floor must be positive"));
        }
        Ok(())
    }
}

/// Sparse coefficient vector on the standardized scale.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseCoefs {
    pub indices: Vec<usize>,
    #[serde(with = "crate::hexfloat::vec")]
    pub values: Vec<f64>,
}

impl SparseCoefs {
    pub fn from_dense(beta: &[f64]) -> Self {
        let (indices, values) = beta
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0.0)
            .map(|(j, &b)| (j, b))
            .unzip();
        SparseCoefs { indices, values }
    }

    pub fn to_dense(&self, p: usize) -> Vec<f64> {
        let mut out = vec![0.0; p];
        for (&j, &b) in self.indices.iter().zip(&self.values) {
            out[j] = b;
        }
        out
    }

    pub fn pairs(&self) -> Vec<(usize, f64)> {
        self.indices.iter().copied().zip(self.values.iter().copied()).collect()
    }

    pub fn nnz(&self) -> usize {
        self.values.iter().filter(|&&b| b != 0.0).count()
    }
}

/// One point on a regularization path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    #[serde(with = "crate::hexfloat")]
    pub lambda: f64,
    #[serde(with = "crate::hexfloat")]
    pub intercept: f64,
    pub coefs: SparseCoefs,
    pub converged: bool,
    pub outer_iters: usize,
    pub inner_iters: usize,
    /// Largest KKT violation (intercept included) at termination.
    #[serde(with = "crate::hexfloat")]
    pub grad_supnorm: f64,
    pub overflow: bool,
    /// Features whose coordinate has no curvature in the quadratic model;
    /// their coefficient is held at its starting value.
    pub degenerate: Vec<usize>,
}

impl Solution {
    /// Intercept-only solution at the closed-form optimum.
    pub fn null(cfg: &ArmConfig, lambda: f64) -> Result<Self> {
        Ok(Solution {
            lambda,
            intercept: null_intercept(cfg)?,
            coefs: SparseCoefs::default(),
            converged: true,
            outer_iters: 0,
            inner_iters: 0,
            grad_supnorm: 0.0,
            overflow: false,
            degenerate: Vec::new(),
        })
    }

    pub fn nonzero(&self) -> usize {
        self.coefs.nnz()
    }

    pub fn linear_predictor(&self, design: &StandardizedDesign) -> Vec<f64> {
        design.linear_predictor(self.intercept, &self.coefs.pairs())
    }

    /// Penalized objective `ℓ(η) + λ P(β)`.
    pub fn objective(&self, design: &StandardizedDesign, cfg: &ArmConfig, pen: &PenaltySpec) -> f64 {
        let eta = self.linear_predictor(design);
        family::loss(&eta, cfg) + self.lambda * pen.value(&self.coefs.to_dense(design.p()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum KktSite {
    Intercept,
    Group(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktViolation {
    pub site: KktSite,
    pub magnitude: f64,
}

/// Stationarity residual of one group given its loss gradient.
fn group_violation(grad: &[f64], beta: &[f64], lambda: f64, pf: f64, alpha: f64) -> f64 {
    let bnorm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        (gnorm - lambda * pf * alpha).max(0.0)
    } else {
        grad.iter()
            .zip(beta)
            .map(|(g, b)| {
                let sub = g + lambda * pf * (alpha * b / bnorm + (1.0 - alpha) * b);
                sub * sub
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// β-gradient of the loss and the intercept derivative at `eta`.
pub fn loss_gradient(design: &StandardizedDesign, cfg: &ArmConfig, eta: &[f64]) -> (Vec<f64>, f64) {
    let g = family::gradient_eta(eta, cfg);
    (design.transpose_mul(&g), sum(&g))
}

/// KKT violations exceeding `10·tol`, intercept first, then groups in
/// order. Empty means the solution is optimal to that tolerance.
pub fn kkt_check(
    sol: &Solution,
    design: &StandardizedDesign,
    cfg: &ArmConfig,
    pen: &PenaltySpec,
    tol: f64,
) -> Vec<KktViolation> {
    let eta = sol.linear_predictor(design);
    let (grad, g0) = loss_gradient(design, cfg, &eta);
    let beta = sol.coefs.to_dense(design.p());
    let mut out = Vec::new();
    let limit = 10.0 * tol;
    if g0.abs() > limit {
        out.push(KktViolation {
            site: KktSite::Intercept,
            magnitude: g0.abs(),
        });
    }
    for (g, r) in pen.groups.ranges().enumerate() {
        let v = group_violation(&grad[r.clone()], &beta[r], sol.lambda, pen.factors[g], pen.alpha);
        if v > limit {
            out.push(KktViolation {
                site: KktSite::Group(g),
                magnitude: v,
            });
        }
    }
    out
}

/// `r ← r − d · h ∘ x`, chunked the same way as [`dot`].
fn downdate(r: &mut [f64], h: &[f64], x: &[f64], d: f64) {
    let body = |r: &mut [f64], h: &[f64], x: &[f64]| {
        for ((ri, hi), xi) in r.iter_mut().zip(h).zip(x) {
            *ri -= d * hi * xi;
        }
    };
    if r.len() <= PAR_CHUNK {
        body(r, h, x);
    } else {
        r.par_chunks_mut(PAR_CHUNK)
            .zip(h.par_chunks(PAR_CHUNK))
            .zip(x.par_chunks(PAR_CHUNK))
            .for_each(|((r, h), x)| body(r, h, x));
    }
}

fn weighted_sq(h: &[f64], x: &[f64]) -> f64 {
    let hx: Vec<f64> = h.iter().zip(x).map(|(a, b)| a * b).collect();
    dot(&hx, x)
}

/// Per-group curvature of the quadratic model.
enum Curvature {
    Scalar(f64),
    Block(BlockHessian),
}

struct Problem<'a> {
    design: &'a StandardizedDesign,
    cfg: &'a ArmConfig,
    pen: &'a PenaltySpec,
    lambda: f64,
    conf: &'a SolverConfig,
}

struct State {
    beta: Vec<f64>,
    intercept: f64,
    eta: Vec<f64>,
    outer: usize,
    inner: usize,
    overflow: bool,
    degenerate: BTreeSet<usize>,
}

enum NewtonExit {
    Converged,
    IterationCap,
    Stalled,
}

impl Problem<'_> {
    fn threshold(&self, g: usize) -> (f64, f64) {
        let pf = self.pen.factors[g];
        (
            self.lambda * pf * self.pen.alpha,
            self.lambda * pf * (1.0 - self.pen.alpha),
        )
    }

    fn penalized(&self, beta: &[f64], loss: f64) -> f64 {
        loss + self.lambda * self.pen.value(beta)
    }

    /// Proximal Newton restricted to `work`; groups outside stay fixed.
    fn newton(&self, st: &mut State, work: &[usize]) -> NewtonExit {
        let design = self.design;
        let groups = &self.pen.groups;
        let conf = self.conf;
        let work_features: Vec<usize> = work.iter().flat_map(|&g| groups.range(g)).collect();
        loop {
            let ls = LossState::evaluate(st.eta.clone(), self.cfg);
            st.overflow |= ls.overflow;
            let grad_w: Vec<f64> = work_features
                .par_iter()
                .map(|&j| dot(design.col(j), &ls.gradient))
                .collect();
            let grad_of: HashMap<usize, f64> =
                work_features.iter().copied().zip(grad_w.iter().copied()).collect();
            let mut viol = sum(&ls.gradient).abs();
            for &g in work {
                let r = groups.range(g);
                let gg: Vec<f64> = r.clone().map(|j| grad_of[&j]).collect();
                let pf = self.pen.factors[g];
                viol = viol.max(group_violation(&gg, &st.beta[r], self.lambda, pf, self.pen.alpha));
            }
            if viol <= conf.tol {
                return NewtonExit::Converged;
            }
            if st.outer >= conf.max_outer {
                return NewtonExit::IterationCap;
            }
            st.outer += 1;

            let h: Vec<f64> = ls
                .curvature
                .iter()
                .zip(&self.cfg.arm)
                .map(|(&c, &a)| if a { c.max(conf.curvature_floor) } else { 0.0 })
                .collect();
            let sum_h = sum(&h);
            let curv: Vec<Curvature> = work
                .par_iter()
                .map(|&g| {
                    let r = groups.range(g);
                    if r.len() == 1 {
                        Curvature::Scalar(weighted_sq(&h, design.col(r.start)))
                    } else {
                        let k = r.len();
                        let mut m = DMatrix::zeros(k, k);
                        for a in 0..k {
                            let xa = design.col(r.start + a);
                            let hx: Vec<f64> = h.iter().zip(xa).map(|(u, v)| u * v).collect();
                            for b in a..k {
                                let v = dot(&hx, design.col(r.start + b));
                                m[(a, b)] = v;
                                m[(b, a)] = v;
                            }
                        }
                        Curvature::Block(BlockHessian::new(m))
                    }
                })
                .collect();

            let mut r: Vec<f64> = ls.gradient.iter().map(|g| -g).collect();
            let mut beta_new = st.beta.clone();
            let mut b0_new = st.intercept;
            let inner_tol = (0.1 * conf.tol).powi(2).max((0.05 * viol).powi(2));
            st.inner += self.coordinate_descent(
                work,
                &curv,
                &h,
                sum_h,
                &mut r,
                &mut beta_new,
                &mut b0_new,
                inner_tol,
                &mut st.degenerate,
            );

            // Δη from the coefficient change
            let d0 = b0_new - st.intercept;
            let mut delta = vec![d0; design.n()];
            for &j in &work_features {
                let d = beta_new[j] - st.beta[j];
                if d != 0.0 {
                    for (e, x) in delta.iter_mut().zip(design.col(j)) {
                        *e += d * x;
                    }
                }
            }

            let old = self.penalized(&st.beta, ls.value);
            let slack = 1e-10 * old.abs().max(1.0);
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..=20 {
                let eta: Vec<f64> = st.eta.iter().zip(&delta).map(|(e, d)| e + step * d).collect();
                let beta: Vec<f64> = if step == 1.0 {
                    beta_new.clone()
                } else {
                    st.beta
                        .iter()
                        .zip(&beta_new)
                        .map(|(b, n)| b + step * (n - b))
                        .collect()
                };
                let obj = self.penalized(&beta, family::loss(&eta, self.cfg));
                if obj.is_finite() && obj <= old + slack {
                    st.beta = beta;
                    st.intercept += step * d0;
                    st.eta = eta;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                return NewtonExit::Stalled;
            }
        }
    }

    /// Cyclic coordinate descent on the quadratic model, alternating full
    /// sweeps over `work` with sweeps over its nonzero groups. Returns the
    /// number of sweeps.
    #[allow(clippy::too_many_arguments)]
    fn coordinate_descent(
        &self,
        work: &[usize],
        curv: &[Curvature],
        h: &[f64],
        sum_h: f64,
        r: &mut [f64],
        beta: &mut [f64],
        intercept: &mut f64,
        inner_tol: f64,
        degenerate: &mut BTreeSet<usize>,
    ) -> usize {
        let design = self.design;
        let groups = &self.pen.groups;
        let max_sweeps = self.conf.max_inner;

        let mut sweep = |slots: &[usize], beta: &mut [f64], r: &mut [f64], intercept: &mut f64| -> f64 {
            let mut change: f64 = 0.0;
            for &slot in slots {
                let g = work[slot];
                let range = groups.range(g);
                let (t, rho) = self.threshold(g);
                match &curv[slot] {
                    Curvature::Scalar(hj) => {
                        let j = range.start;
                        if *hj + rho <= 0.0 {
                            degenerate.insert(j);
                            continue;
                        }
                        let x = design.col(j);
                        let z = hj * beta[j] + dot(x, r);
                        let new = soft_threshold(z, t) / (hj + rho);
                        let d = new - beta[j];
                        if d != 0.0 {
                            downdate(r, h, x, d);
                            beta[j] = new;
                            change = change.max(hj * d * d);
                        }
                    }
                    Curvature::Block(block) => {
                        if block.max_eigenvalue() + rho <= 0.0 {
                            degenerate.extend(range);
                            continue;
                        }
                        let old = beta[range.clone()].to_vec();
                        let hb = block.mul(&old);
                        let v: Vec<f64> = range
                            .clone()
                            .zip(&hb)
                            .map(|(j, hbj)| hbj + dot(design.col(j), r))
                            .collect();
                        let new = block.solve(&v, t, rho);
                        let d: Vec<f64> = new.iter().zip(&old).map(|(a, b)| a - b).collect();
                        if d.iter().any(|&x| x != 0.0) {
                            for (k, j) in range.clone().enumerate() {
                                if d[k] != 0.0 {
                                    downdate(r, h, design.col(j), d[k]);
                                }
                            }
                            beta[range].copy_from_slice(&new);
                            change = change.max(block.quad(&d));
                        }
                    }
                }
            }
            let d0 = sum(r) / sum_h;
            if d0 != 0.0 {
                for (ri, hi) in r.iter_mut().zip(h) {
                    *ri -= d0 * hi;
                }
                *intercept += d0;
                change = change.max(sum_h * d0 * d0);
            }
            change
        };

        let all: Vec<usize> = (0..work.len()).collect();
        let mut sweeps = 0;
        loop {
            let change = sweep(&all, beta, r, intercept);
            sweeps += 1;
            if change < inner_tol || sweeps >= max_sweeps {
                break;
            }
            loop {
                let active: Vec<usize> = all
                    .iter()
                    .copied()
                    .filter(|&s| {
                        let g = work[s];
                        self.pen.factors[g] == 0.0 || beta[groups.range(g)].iter().any(|&b| b != 0.0)
                    })
                    .collect();
                let change = sweep(&active, beta, r, intercept);
                sweeps += 1;
                if change < inner_tol || sweeps >= max_sweeps {
                    break;
                }
            }
            if sweeps >= max_sweeps {
                break;
            }
        }
        sweeps
    }
}

fn validate_inputs(
    design: &StandardizedDesign,
    cfg: &ArmConfig,
    pen: &PenaltySpec,
    lambda: f64,
    conf: &SolverConfig,
) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(BalError::usage(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    pen.validate()?;
    conf.validate()?;
    if pen.num_features() != design.p() {
        return Err(BalError::Dimension {
            expected: design.p(),
            actual: pen.num_features(),
        });
    }
    if cfg.n() != design.n() {
        return Err(BalError::Dimension {
            expected: design.n(),
            actual: cfg.n(),
        });
    }
    Ok(())
}

/// Solver output together with the full loss gradient at the solution,
/// which the path carries forward for strong-rule screening.
pub(crate) struct SolveOutput {
    pub solution: Solution,
    pub gradient: Vec<f64>,
}

/// Minimize `ℓ(η; A, c) + λ P(β)` with an unpenalized intercept.
///
/// Without a warm start the solve begins at `β = 0` and the closed-form
/// null intercept. A solve that hits `max_outer` (or cannot make progress)
/// returns `converged = false`, which the path treats as divergence.
pub fn solve_single(
    design: &StandardizedDesign,
    cfg: &ArmConfig,
    pen: &PenaltySpec,
    lambda: f64,
    warm: Option<&Solution>,
    conf: &SolverConfig,
) -> Result<Solution> {
    solve_screened(design, cfg, pen, lambda, warm, None, conf).map(|o| o.solution)
}

/// As [`solve_single`], with the previous path point's gradient and λ for
/// the strong rule.
pub(crate) fn solve_screened(
    design: &StandardizedDesign,
    cfg: &ArmConfig,
    pen: &PenaltySpec,
    lambda: f64,
    warm: Option<&Solution>,
    previous: Option<(&[f64], f64)>,
    conf: &SolverConfig,
) -> Result<SolveOutput> {
    validate_inputs(design, cfg, pen, lambda, conf)?;
    let p = design.p();
    let groups = &pen.groups;
    let (beta, intercept) = match warm {
        Some(w) => (w.coefs.to_dense(p), w.intercept),
        None => (vec![0.0; p], null_intercept(cfg)?),
    };
    let eta = design.linear_predictor(intercept, &SparseCoefs::from_dense(&beta).pairs());
    let mut st = State {
        beta,
        intercept,
        eta,
        outer: 0,
        inner: 0,
        overflow: false,
        degenerate: BTreeSet::new(),
    };
    let prob = Problem {
        design,
        cfg,
        pen,
        lambda,
        conf,
    };

    let mut in_work = vec![false; groups.len()];
    match conf.screening {
        Screening::None => in_work.iter_mut().for_each(|w| *w = true),
        Screening::Strong => {
            let owned;
            let (grad, prev_lambda) = match previous {
                Some((g, l)) => (g, l),
                None => {
                    owned = loss_gradient(design, cfg, &st.eta).0;
                    (owned.as_slice(), lambda)
                }
            };
            let cut = 2.0 * lambda - prev_lambda;
            for (g, r) in groups.ranges().enumerate() {
                let pf = pen.factors[g];
                let gnorm = grad[r.clone()].iter().map(|x| x * x).sum::<f64>().sqrt();
                in_work[g] = pf == 0.0
                    || st.beta[r].iter().any(|&b| b != 0.0)
                    || gnorm >= pen.alpha * pf * cut;
            }
        }
    }

    let (converged, gradient, supnorm) = loop {
        let work: Vec<usize> = (0..groups.len()).filter(|&g| in_work[g]).collect();
        let exit = prob.newton(&mut st, &work);
        let (grad, g0) = loss_gradient(design, cfg, &st.eta);
        let mut supnorm = g0.abs();
        let mut added = false;
        for (g, r) in groups.ranges().enumerate() {
            let v = group_violation(&grad[r.clone()], &st.beta[r], lambda, pen.factors[g], pen.alpha);
            supnorm = supnorm.max(v);
            if !in_work[g] && v > conf.tol {
                in_work[g] = true;
                added = true;
            }
        }
        match exit {
            NewtonExit::Converged if !added => break (true, grad, supnorm),
            NewtonExit::Converged => continue,
            NewtonExit::IterationCap | NewtonExit::Stalled => break (false, grad, supnorm),
        }
    };

    st.overflow |= family::clipped(&st.eta, cfg);
    Ok(SolveOutput {
        solution: Solution {
            lambda,
            intercept: st.intercept,
            coefs: SparseCoefs::from_dense(&st.beta),
            converged,
            outer_iters: st.outer,
            inner_iters: st.inner,
            grad_supnorm: supnorm,
            overflow: st.overflow,
            degenerate: st.degenerate.into_iter().collect(),
        },
        gradient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{standardize, Dataset, Matrix, Target};
    use crate::family::arm_configs;
    use crate::path::lambda_max;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_design(n: usize, p: usize, seed: u64, target: Target) -> StandardizedDesign {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect()).collect();
        let w: Vec<bool> = rows.iter().map(|r| rng.gen::<f64>() < 1.0 / (1.0 + (-r[0]).exp())).collect();
        let names = (0..p).map(|j| format!("x{j}")).collect();
        let ds = Dataset::new(Matrix::from_rows(&rows).unwrap(), w, names).unwrap();
        standardize(&ds, target).unwrap()
    }

    #[test]
    fn above_lambda_max_stays_null() {
        let d = random_design(60, 4, 1, Target::Att);
        let cfg = &arm_configs(Target::Att, d.treatment())[0];
        let pen = PenaltySpec::lasso(4);
        let lmax = lambda_max(&d, cfg, &pen).unwrap();
        let sol = solve_single(&d, cfg, &pen, lmax * 1.01, None, &SolverConfig::default()).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.nonzero(), 0);
        assert_abs_diff_eq!(sol.intercept, null_intercept(cfg).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn six_unit_att_balances_exactly() {
        let x = Matrix::from_rows(&[
            vec![0.2], vec![1.1], vec![0.7], vec![-0.4], vec![0.9], vec![0.1],
        ])
        .unwrap();
        let w = vec![true, true, false, false, false, false];
        let ds = Dataset::new(x, w, vec!["x".into()]).unwrap();
        let d = standardize(&ds, Target::Att).unwrap();
        let cfg = &arm_configs(Target::Att, d.treatment())[0];
        let conf = SolverConfig { tol: 1e-10, ..Default::default() };
        let sol = solve_single(&d, cfg, &PenaltySpec::lasso(1), 0.0, None, &conf).unwrap();
        assert!(sol.converged);
        let eta = sol.linear_predictor(&d);
        let gamma = family::weights_from_eta(&eta, cfg);
        let xt = d.col(0);
        let weighted: f64 = (0..6).filter(|&i| cfg.arm[i]).map(|i| gamma[i] * xt[i]).sum();
        let treated: f64 = (0..6).filter(|&i| !cfg.arm[i]).map(|i| xt[i]).sum();
        let total: f64 = gamma.iter().sum();
        assert_abs_diff_eq!(weighted, treated, epsilon = 1e-6);
        assert_abs_diff_eq!(total, 2.0, epsilon = 1e-6);
    }

    #[test]
    fn screening_does_not_change_the_answer() {
        let d = random_design(120, 12, 7, Target::Treated);
        let cfg = &arm_configs(Target::Treated, d.treatment())[0];
        let pen = PenaltySpec::lasso(12);
        let lmax = lambda_max(&d, cfg, &pen).unwrap();
        let strong = SolverConfig::default();
        let none = SolverConfig { screening: Screening::None, ..Default::default() };
        for frac in [0.7, 0.3, 0.1] {
            let a = solve_single(&d, cfg, &pen, lmax * frac, None, &strong).unwrap();
            let b = solve_single(&d, cfg, &pen, lmax * frac, None, &none).unwrap();
            assert!(a.converged && b.converged);
            let (oa, ob) = (a.objective(&d, cfg, &pen), b.objective(&d, cfg, &pen));
            assert!((oa - ob).abs() <= 10.0 * strong.tol, "{oa} vs {ob}");
        }
    }

    #[test]
    fn warm_and_cold_starts_agree() {
        let d = random_design(150, 6, 11, Target::Att);
        let cfg = &arm_configs(Target::Att, d.treatment())[0];
        let pen = PenaltySpec::lasso(6);
        let conf = SolverConfig::default();
        let lmax = lambda_max(&d, cfg, &pen).unwrap();
        let first = solve_single(&d, cfg, &pen, 0.5 * lmax, None, &conf).unwrap();
        let warm = solve_single(&d, cfg, &pen, 0.2 * lmax, Some(&first), &conf).unwrap();
        let cold = solve_single(&d, cfg, &pen, 0.2 * lmax, None, &conf).unwrap();
        let (ow, oc) = (warm.objective(&d, cfg, &pen), cold.objective(&d, cfg, &pen));
        assert!((ow - oc).abs() <= 10.0 * conf.tol);
    }

    #[test]
    fn kkt_check_flags_suboptimal_null() {
        let d = random_design(80, 3, 5, Target::Att);
        let cfg = &arm_configs(Target::Att, d.treatment())[0];
        let pen = PenaltySpec::lasso(3);
        let lmax = lambda_max(&d, cfg, &pen).unwrap();
        let tol = 1e-7;
        assert!(kkt_check(&Solution::null(cfg, lmax).unwrap(), &d, cfg, &pen, tol).is_empty());
        let v = kkt_check(&Solution::null(cfg, 0.5 * lmax).unwrap(), &d, cfg, &pen, tol);
        assert!(!v.is_empty());
        assert!(v.iter().all(|x| matches!(x.site, KktSite::Group(_))));
    }

    #[test]
    fn converged_solution_passes_kkt() {
        let d = random_design(100, 5, 3, Target::Control);
        let cfg = &arm_configs(Target::Control, d.treatment())[0];
        let pen = PenaltySpec::elastic_net(5, 0.6);
        let lmax = lambda_max(&d, cfg, &pen).unwrap();
        let conf = SolverConfig::default();
        let sol = solve_single(&d, cfg, &pen, 0.2 * lmax, None, &conf).unwrap();
        assert!(sol.converged);
        assert!(sol.grad_supnorm <= conf.tol);
        assert!(kkt_check(&sol, &d, cfg, &pen, conf.tol).is_empty());
    }

    #[test]
    fn grouped_penalty_converges() {
        let d = random_design(200, 6, 9, Target::Treated);
        let cfg = &arm_configs(Target::Treated, d.treatment())[0];
        let groups = crate::data::FeatureGroups::new(vec!["a".into(), "b".into(), "c".into()], &[1, 2, 3]).unwrap();
        let pen = PenaltySpec::grouped(groups, 0.9);
        let lmax = lambda_max(&d, cfg, &pen).unwrap();
        let conf = SolverConfig::default();
        let sol = solve_single(&d, cfg, &pen, 0.1 * lmax, None, &conf).unwrap();
        assert!(sol.converged);
        assert!(kkt_check(&sol, &d, cfg, &pen, conf.tol).is_empty());
        let none = SolverConfig { screening: Screening::None, ..Default::default() };
        let other = solve_single(&d, cfg, &pen, 0.1 * lmax, None, &none).unwrap();
        assert!((sol.objective(&d, cfg, &pen) - other.objective(&d, cfg, &pen)).abs() <= 1e-6);
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = random_design(30, 2, 2, Target::Att);
        let cfg = &arm_configs(Target::Att, d.treatment())[0];
        let conf = SolverConfig::default();
        assert!(solve_single(&d, cfg, &PenaltySpec::lasso(2), -1.0, None, &conf).is_err());
        assert!(solve_single(&d, cfg, &PenaltySpec::lasso(3), 0.1, None, &conf).is_err());
    }
}
