//! Logistic covariate balancing loss.
//!
//! Every target is served by one form,
//!
//! ```text
//! ℓ(η; A, c) = (1/c) Σᵢ [ Aᵢ exp(−ηᵢ) + (1 − Aᵢ) ηᵢ ]
//! ```
//!
//! where `A` marks the arm being reweighted. Setting the β-gradient to zero
//! equates the weighted arm covariate sums with the target sums, so the
//! fitted linear predictor yields balancing weights directly. The control
//! arm uses the same form with `A = 1 − W`; the sign flip of the linear
//! predictor is absorbed by the fit.

use serde::{Deserialize, Serialize};

use crate::data::Target;

/// Arguments of `exp` are clamped to `[-EXP_CLIP, EXP_CLIP]`.
pub const EXP_CLIP: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArmLabel {
    /// Model reweighting the treated units.
    Treated,
    /// Model reweighting the control units.
    Control,
}

impl ArmLabel {
    pub fn title(self) -> &'static str {
        match self {
            ArmLabel::Treated => "Treated",
            ArmLabel::Control => "Control",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    /// `1 + exp(−η)`: the inverse propensity of belonging to the arm.
    InverseProbability,
    /// `exp(−η)`: propensity odds, used for ATT control weights.
    Odds,
}

/// One balancing model: which units are reweighted and how the loss is
/// normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmConfig {
    pub arm: Vec<bool>,
    /// Normalization count `c`: `n`, or `n1` for ATT.
    pub norm: f64,
    pub label: ArmLabel,
    pub weight_kind: WeightKind,
}

impl ArmConfig {
    pub fn n(&self) -> usize {
        self.arm.len()
    }

    /// Number of units in the reweighted arm.
    pub fn n_arm(&self) -> usize {
        self.arm.iter().filter(|&&a| a).count()
    }

    /// Same model restricted to a subset of units, renormalized by the
    /// subset's own counts.
    pub fn select_rows(&self, target: Target, treatment: &[bool], rows: &[usize]) -> ArmConfig {
        let sub: Vec<bool> = rows.iter().map(|&i| treatment[i]).collect();
        arm_configs(target, &sub)
            .into_iter()
            .find(|c| c.label == self.label)
            .expect("target produces this arm")
    }
}

/// Models fitted for a target. ATE yields the treated model then the
/// control model; every other target yields a single model.
pub fn arm_configs(target: Target, treatment: &[bool]) -> Vec<ArmConfig> {
    let n = treatment.len() as f64;
    let n1 = treatment.iter().filter(|&&t| t).count() as f64;
    let treated = || ArmConfig {
        arm: treatment.to_vec(),
        norm: n,
        label: ArmLabel::Treated,
        weight_kind: WeightKind::InverseProbability,
    };
    let control = |norm, weight_kind| ArmConfig {
        arm: treatment.iter().map(|&t| !t).collect(),
        norm,
        label: ArmLabel::Control,
        weight_kind,
    };
    match target {
        Target::Treated => vec![treated()],
        Target::Control => vec![control(n, WeightKind::InverseProbability)],
        Target::Att => vec![control(n1, WeightKind::Odds)],
        Target::Ate => vec![treated(), control(n, WeightKind::InverseProbability)],
    }
}

/// `exp(−η)` with the argument clamped; the flag reports whether clamping
/// happened.
#[inline]
pub fn exp_neg(eta: f64) -> (f64, bool) {
    let arg = -eta;
    if arg > EXP_CLIP {
        (EXP_CLIP.exp(), true)
    } else if arg < -EXP_CLIP {
        ((-EXP_CLIP).exp(), true)
    } else {
        (arg.exp(), false)
    }
}

/// Whether evaluating the loss at `eta` clamps any exponent.
pub fn clipped(eta: &[f64], cfg: &ArmConfig) -> bool {
    eta.iter()
        .zip(&cfg.arm)
        .any(|(&e, &a)| a && e.abs() > EXP_CLIP)
}

pub fn loss(eta: &[f64], cfg: &ArmConfig) -> f64 {
    debug_assert_eq!(eta.len(), cfg.arm.len());
    let mut acc = 0.0;
    for (&e, &a) in eta.iter().zip(&cfg.arm) {
        acc += if a { exp_neg(e).0 } else { e };
    }
    acc / cfg.norm
}

/// Derivative of the loss with respect to each linear predictor.
pub fn gradient_eta(eta: &[f64], cfg: &ArmConfig) -> Vec<f64> {
    let inv = 1.0 / cfg.norm;
    eta.iter()
        .zip(&cfg.arm)
        .map(|(&e, &a)| if a { -exp_neg(e).0 * inv } else { inv })
        .collect()
}

/// Second derivative of the loss in each linear predictor (the Hessian is
/// diagonal). Exactly zero off the arm, where the loss is linear.
pub fn curvature_eta(eta: &[f64], cfg: &ArmConfig) -> Vec<f64> {
    let inv = 1.0 / cfg.norm;
    eta.iter()
        .zip(&cfg.arm)
        .map(|(&e, &a)| if a { exp_neg(e).0 * inv } else { 0.0 })
        .collect()
}

/// Balancing weight of each unit: fitted weight on the arm, zero elsewhere.
pub fn weights_from_eta(eta: &[f64], cfg: &ArmConfig) -> Vec<f64> {
    eta.iter()
        .zip(&cfg.arm)
        .map(|(&e, &a)| {
            if !a {
                return 0.0;
            }
            let odds = exp_neg(e).0;
            match cfg.weight_kind {
                WeightKind::InverseProbability => 1.0 + odds,
                WeightKind::Odds => odds,
            }
        })
        .collect()
}

/// Loss value together with its η-derivatives at one point.
#[derive(Debug, Clone)]
pub struct LossState {
    pub eta: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub curvature: Vec<f64>,
    pub overflow: bool,
}

impl LossState {
    pub fn evaluate(eta: Vec<f64>, cfg: &ArmConfig) -> Self {
        let inv = 1.0 / cfg.norm;
        let n = eta.len();
        let mut gradient = Vec::with_capacity(n);
        let mut curvature = Vec::with_capacity(n);
        let mut value = 0.0;
        let mut overflow = false;
        for (&e, &a) in eta.iter().zip(&cfg.arm) {
            if a {
                let (q, clip) = exp_neg(e);
                overflow |= clip;
                value += q;
                gradient.push(-q * inv);
                curvature.push(q * inv);
            } else {
                value += e;
                gradient.push(inv);
                curvature.push(0.0);
            }
        }
        LossState {
            eta,
            value: value / cfg.norm,
            gradient,
            curvature,
            overflow,
        }
    }
}
