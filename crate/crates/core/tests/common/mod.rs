//! Reference implementations used as oracles. Nothing here calls into the
//! solver; only plain slices go in and out.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use balpath::{Dataset, Matrix};

/// Gaussian covariates, logistic assignment on the first two columns with
/// strength `shift`.
pub fn gaussian_dataset(n: usize, p: usize, shift: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let mut w: Vec<bool> = (0..n)
        .map(|i| {
            let eta = shift * (cols[0][i] - if p > 1 { 0.5 * cols[1][i] } else { 0.0 });
            rng.gen::<f64>() < 1.0 / (1.0 + (-eta).exp())
        })
        .collect();
    w[0] = true;
    w[1] = false;
    let names = (0..p).map(|j| format!("x{j}")).collect();
    Dataset::new(Matrix::from_columns(n, cols).unwrap(), w, names).unwrap()
}

/// Smooth part of the objective, written out directly.
pub fn balancing_loss(eta: &[f64], arm: &[bool], c: f64) -> f64 {
    eta.iter()
        .zip(arm)
        .map(|(&e, &a)| if a { (-e).exp() } else { e })
        .sum::<f64>()
        / c
}

/// `l₀(η) = (1/n) Σ [(1 − W) exp(η) − W η]`, coded from its definition.
pub fn l0(eta: &[f64], w: &[bool]) -> f64 {
    let n = eta.len() as f64;
    eta.iter()
        .zip(w)
        .map(|(&e, &t)| if t { -e } else { e.exp() })
        .sum::<f64>()
        / n
}

/// Group elastic-net penalty over explicit group ranges.
pub fn penalty(beta: &[f64], groups: &[std::ops::Range<usize>], factors: &[f64], alpha: f64) -> f64 {
    groups
        .iter()
        .zip(factors)
        .map(|(r, &pf)| {
            let sq: f64 = beta[r.clone()].iter().map(|b| b * b).sum();
            pf * (alpha * sq.sqrt() + 0.5 * (1.0 - alpha) * sq)
        })
        .sum()
}

pub struct Problem<'a> {
    /// Columns of the design.
    pub x: &'a [Vec<f64>],
    pub arm: &'a [bool],
    pub c: f64,
    pub groups: Vec<std::ops::Range<usize>>,
    pub factors: Vec<f64>,
    pub alpha: f64,
    pub lambda: f64,
}

impl Problem<'_> {
    pub fn eta(&self, b0: f64, beta: &[f64]) -> Vec<f64> {
        let n = self.arm.len();
        (0..n)
            .map(|i| b0 + self.x.iter().zip(beta).map(|(col, b)| col[i] * b).sum::<f64>())
            .collect()
    }

    pub fn smooth(&self, b0: f64, beta: &[f64]) -> f64 {
        balancing_loss(&self.eta(b0, beta), self.arm, self.c)
    }

    pub fn objective(&self, b0: f64, beta: &[f64]) -> f64 {
        self.smooth(b0, beta) + self.lambda * penalty(beta, &self.groups, &self.factors, self.alpha)
    }

    /// Gradient of the smooth part in (intercept, β).
    pub fn grad(&self, b0: f64, beta: &[f64]) -> (f64, Vec<f64>) {
        let eta = self.eta(b0, beta);
        let g: Vec<f64> = eta
            .iter()
            .zip(self.arm)
            .map(|(&e, &a)| if a { -(-e).exp() / self.c } else { 1.0 / self.c })
            .collect();
        let gb = self
            .x
            .iter()
            .map(|col| col.iter().zip(&g).map(|(x, v)| x * v).sum())
            .collect();
        (g.iter().sum(), gb)
    }

    fn prox(&self, v: &[f64], step: f64) -> Vec<f64> {
        let mut out = v.to_vec();
        for (r, &pf) in self.groups.iter().zip(&self.factors) {
            let t1 = step * self.lambda * pf * self.alpha;
            let t2 = step * self.lambda * pf * (1.0 - self.alpha);
            let norm = v[r.clone()].iter().map(|x| x * x).sum::<f64>().sqrt();
            let scale = if norm <= t1 { 0.0 } else { (1.0 - t1 / norm) / (1.0 + t2) };
            for j in r.clone() {
                out[j] = v[j] * scale;
            }
        }
        out
    }

    /// Accelerated proximal gradient with backtracking and adaptive
    /// restart, run until the gradient mapping falls below `tol` or plain
    /// steps stop decreasing the objective.
    pub fn prox_gradient(&self, tol: f64, max_iter: usize) -> (f64, Vec<f64>) {
        let p = self.x.len();
        let (mut b0, mut beta) = (0.0, vec![0.0; p]);
        let (mut y0, mut y) = (b0, beta.clone());
        let mut t: f64 = 1.0;
        let mut step = 1.0;
        let mut prev_obj = self.objective(b0, &beta);
        for _ in 0..max_iter {
            let (g0, gb) = self.grad(y0, &y);
            let fy = self.smooth(y0, &y);
            let (nb0, nbeta) = loop {
                let nb0 = y0 - step * g0;
                let v: Vec<f64> = y.iter().zip(&gb).map(|(a, g)| a - step * g).collect();
                let nbeta = self.prox(&v, step);
                let d0 = nb0 - y0;
                let d: Vec<f64> = nbeta.iter().zip(&y).map(|(a, b)| a - b).collect();
                let quad = fy + g0 * d0 + gb.iter().zip(&d).map(|(g, x)| g * x).sum::<f64>()
                    + (d0 * d0 + d.iter().map(|x| x * x).sum::<f64>()) / (2.0 * step);
                if self.smooth(nb0, &nbeta) <= quad + 1e-15 * quad.abs() {
                    break (nb0, nbeta);
                }
                step *= 0.5;
            };
            let obj = self.objective(nb0, &nbeta);
            // norm of the gradient mapping at the extrapolated point
            let gmap = (nb0 - y0)
                .abs()
                .max(nbeta.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                / step;
            if gmap < tol {
                if obj <= prev_obj {
                    b0 = nb0;
                    beta = nbeta;
                }
                break;
            }
            if obj > prev_obj {
                if t == 1.0 {
                    // a plain step no longer decreases the objective:
                    // round-off floor
                    break;
                }
                // restart momentum from the current point
                t = 1.0;
                y0 = b0;
                y = beta.clone();
                continue;
            }
            let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let mom = (t - 1.0) / tn;
            y0 = nb0 + mom * (nb0 - b0);
            y = nbeta.iter().zip(&beta).map(|(a, b)| a + mom * (a - b)).collect();
            b0 = nb0;
            beta = nbeta;
            t = tn;
            prev_obj = obj;
            step = (step * 1.5).min(1e4);
        }
        (b0, beta)
    }
}

/// Unpenalized Newton minimization of `f` given its gradient and Hessian.
pub fn newton<F, G, H>(f: F, grad: G, hess: H, x0: Vec<f64>, tol: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
    H: Fn(&[f64]) -> nalgebra::DMatrix<f64>,
{
    let mut x = x0;
    for _ in 0..200 {
        let g = nalgebra::DVector::from_vec(grad(&x));
        if g.amax() < tol {
            break;
        }
        let step = hess(&x).lu().solve(&g).expect("non-singular Hessian");
        let mut t: f64 = 1.0;
        let fx = f(&x);
        loop {
            let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a - t * d).collect();
            if f(&cand) <= fx || t < 1e-12 {
                x = cand;
                break;
            }
            t *= 0.5;
        }
    }
    x
}

/// Central finite difference of `f` along coordinate `k`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], k: usize, h: f64) -> f64 {
    let mut a = x.to_vec();
    let mut b = x.to_vec();
    a[k] += h;
    b[k] -= h;
    (f(&a) - f(&b)) / (2.0 * h)
}

/// Columns of a standardized design as owned vectors.
pub fn columns(design: &balpath::StandardizedDesign) -> Vec<Vec<f64>> {
    (0..design.p()).map(|j| design.col(j).to_vec()).collect()
}

/// Unnormalized standardized imbalance: the weighted arm sum of each
/// covariate minus its target sum, over the loss normalization.
pub fn imbalance(x: &[Vec<f64>], w: &[f64], arm: &[bool], odds: bool, c: f64) -> Vec<f64> {
    x.iter()
        .map(|col| {
            let mut acc = 0.0;
            for i in 0..col.len() {
                if arm[i] {
                    acc += w[i] * col[i];
                }
                // the inverse-probability target is every unit; the odds
                // target is the other arm
                if !odds || !arm[i] {
                    acc -= col[i];
                }
            }
            acc / c
        })
        .collect()
}
