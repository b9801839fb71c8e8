//! Group elastic-net penalty and its proximal operators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::FeatureGroups;
use crate::error::{BalError, Result};

/// `P(β) = Σ_g pf_g [ α‖β_g‖₂ + (1−α)/2 ‖β_g‖₂² ]`. Singleton groups give
/// the ordinary elastic net; `α = 1` with singletons is the lasso.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    #[serde(with = "crate::hexfloat")]
    pub alpha: f64,
    /// One factor per group.
    #[serde(with = "crate::hexfloat::vec")]
    pub factors: Vec<f64>,
    pub groups: FeatureGroups,
}

impl PenaltySpec {
    pub fn lasso(p: usize) -> Self {
        Self::elastic_net(p, 1.0)
    }

    pub fn elastic_net(p: usize, alpha: f64) -> Self {
        let names: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
        PenaltySpec {
            alpha,
            factors: vec![1.0; p],
            groups: FeatureGroups::singletons(&names),
        }
    }

    pub fn grouped(groups: FeatureGroups, alpha: f64) -> Self {
        PenaltySpec {
            alpha,
            factors: vec![1.0; groups.len()],
            groups,
        }
    }

    pub fn with_factors(mut self, factors: Vec<f64>) -> Result<Self> {
        if factors.len() != self.groups.len() {
            return Err(BalError::Dimension {
                expected: self.groups.len(),
                actual: factors.len(),
            });
        }
        self.factors = factors;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(BalError::usage(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.factors.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return Err(BalError::usage("penalty factors must be finite and non-negative"));
        }
        if !self.factors.iter().any(|&f| f > 0.0) {
            return Err(BalError::usage("at least one penalty factor must be positive"));
        }
        if self.factors.len() != self.groups.len() {
            return Err(BalError::Dimension {
                expected: self.groups.len(),
                actual: self.factors.len(),
            });
        }
        Ok(())
    }

    pub fn num_features(&self) -> usize {
        self.groups.num_features()
    }

    /// Penalty value at a dense coefficient vector.
    pub fn value(&self, beta: &[f64]) -> f64 {
        self.groups
            .ranges()
            .zip(&self.factors)
            .map(|(r, &pf)| {
                if pf == 0.0 {
                    return 0.0;
                }
                let sq: f64 = beta[r].iter().map(|b| b * b).sum();
                pf * (self.alpha * sq.sqrt() + 0.5 * (1.0 - self.alpha) * sq)
            })
            .sum()
    }
}

/// `sign(z)·max(|z| − t, 0)`.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Proximal operator of `t‖·‖₂`: zero inside the ball, radial shrink
/// outside.
pub fn group_threshold(z: &[f64], t: f64) -> Vec<f64> {
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= t {
        return vec![0.0; z.len()];
    }
    let scale = 1.0 - t / norm;
    z.iter().map(|v| v * scale).collect()
}

/// Eigendecomposition of one group's block of the quadratic model.
#[derive(Debug, Clone)]
pub(crate) struct BlockHessian {
    matrix: DMatrix<f64>,
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl BlockHessian {
    pub(crate) fn new(h: DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(h.clone());
        BlockHessian {
            matrix: h,
            values: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        }
    }

    pub(crate) fn max_eigenvalue(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// `H b`.
    pub(crate) fn mul(&self, b: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(b)).iter().copied().collect()
    }

    /// `bᵀ H b`.
    pub(crate) fn quad(&self, b: &[f64]) -> f64 {
        let u = self.vectors.tr_mul(&DVector::from_column_slice(b));
        u.iter().zip(&self.values).map(|(x, d)| d * x * x).sum()
    }

    /// Minimizer of `½ bᵀHb − vᵀb + t‖b‖₂ + ρ/2 ‖b‖₂²`.
    ///
    /// With `H = Q D Qᵀ` and `u = Qᵀv`, a nonzero solution satisfies
    /// `b = Q (D + ρ + t/s)⁻¹ u` where `s = ‖b‖`, so `s` is the root of the
    /// decreasing function `Σ_k u_k² / ((d_k + ρ) s + t)² − 1`.
    pub(crate) fn solve(&self, v: &[f64], t: f64, rho: f64) -> Vec<f64> {
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vnorm <= t {
            return vec![0.0; v.len()];
        }
        let u = self.vectors.tr_mul(&DVector::from_column_slice(v));
        let top = self.max_eigenvalue() + rho;
        let floor = (1e-12 * top).max(f64::MIN_POSITIVE);
        let diag: Vec<f64> = self.values.iter().map(|d| (d + rho).max(floor)).collect();
        let coef = |s: f64| -> Vec<f64> { diag.iter().map(|d| s / (d * s + t)).collect() };
        let root = if t == 0.0 {
            None
        } else {
            let phi = |s: f64| -> (f64, f64) {
                let mut f = -1.0;
                let mut df = 0.0;
                for (uk, dk) in u.iter().zip(&diag) {
                    let den = dk * s + t;
                    f += uk * uk / (den * den);
                    df -= 2.0 * uk * uk * dk / (den * den * den);
                }
                (f, df)
            };
            let dmin = diag.iter().copied().fold(f64::INFINITY, f64::min);
            let (mut lo, mut hi) = (0.0, (vnorm - t) / dmin);
            let mut s = 0.5 * hi;
            for _ in 0..200 {
                let (f, df) = phi(s);
                if f > 0.0 {
                    lo = s;
                } else {
                    hi = s;
                }
                if f.abs() < 1e-15 || hi - lo <= 1e-15 * hi {
                    break;
                }
                let newton = s - f / df;
                s = if newton > lo && newton < hi {
                    newton
                } else {
                    0.5 * (lo + hi)
                };
            }
            Some(s)
        };
        let scaled: Vec<f64> = match root {
            Some(s) => u.iter().zip(coef(s)).map(|(uk, c)| uk * c).collect(),
            None => u.iter().zip(&diag).map(|(uk, d)| uk / d).collect(),
        };
        (&self.vectors * DVector::from_vec(scaled)).iter().copied().collect()
    }
}
