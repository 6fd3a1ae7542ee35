//! ε-insensitive support vector regression with a Gaussian RBF kernel.
//!
//! The dual is solved over the `2N` variables `(α, α*)` with an SMO solver
//! that repeatedly optimizes the maximal KKT-violating pair:
//!
//! ```text
//! min_a  ½ aᵀQa + pᵀa    s.t.  0 ≤ a ≤ C,  sᵀa = 0
//! a = [α; α*],  s = [+1; -1],  p = [ε - y; ε + y],  Q_tu = s_t s_u K(z_t, z_u)
//! ```
//!
//! Predictions are `Σ βᵢ K(z, zᵢ) + b` with `βᵢ = αᵢ - αᵢ*`.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `exp(-‖a - b‖² / (2γ²))`.
pub fn rbf_kernel(a: &[f64], b: &[f64], gamma: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if !(gamma > 0.0) {
        return Err(Error::OutOfRange {
            name: "gamma",
            value: gamma,
        });
    }
    Ok(rbf(a, b, gamma))
}

#[inline]
fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-d2 / (2.0 * gamma * gamma)).exp()
}

/// Kernel width such that the median pairwise distance maps to `e⁻¹`,
/// i.e. `median distance / √2`. Returns 1 when the median distance is zero.
///
/// Sets larger than 1000 points are thinned to 1000 evenly spaced points.
pub fn median_gamma(points: &[Vec<f64>]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument("median_gamma needs at least 2 points".into()));
    }
    const MAX_POINTS: usize = 1000;
    let picked: Vec<&Vec<f64>> = if points.len() > MAX_POINTS {
        (0..MAX_POINTS)
            .map(|k| &points[k * points.len() / MAX_POINTS])
            .collect()
    } else {
        points.iter().collect()
    };
    let mut dists = Vec::with_capacity(picked.len() * (picked.len() - 1) / 2);
    for (i, a) in picked.iter().enumerate() {
        for b in &picked[i + 1..] {
            let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
            dists.push(d2.sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let m = dists.len();
    let median = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    if median > 0.0 && median.is_finite() {
        Ok(median / std::f64::consts::SQRT_2)
    } else {
        Ok(1.0)
    }
}

/// Regularization, tube half-width and kernel width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvrHyperParams {
    pub c: f64,
    pub epsilon: f64,
    pub gamma: f64,
}

impl SvrHyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::OutOfRange {
                name: "C",
                value: self.c,
            });
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::OutOfRange {
                name: "epsilon",
                value: self.epsilon,
            });
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::OutOfRange {
                name: "gamma",
                value: self.gamma,
            });
        }
        Ok(())
    }
}

/// Config-level SVR settings; `gamma = None` selects [`median_gamma`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvrConfig {
    pub c: f64,
    pub epsilon: f64,
    pub gamma: Option<f64>,
    pub tol: f64,
    /// Iteration cap is `max_passes * N`; `None` means `10 * N` passes.
    pub max_passes: Option<usize>,
}

impl Default for SvrConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            epsilon: 0.1,
            gamma: None,
            tol: 1e-3,
            max_passes: None,
        }
    }
}

impl SvrConfig {
    pub fn resolve(&self, points: &[Vec<f64>]) -> Result<SvrHyperParams> {
        let gamma = match self.gamma {
            Some(g) => g,
            None => median_gamma(points)?,
        };
        let hp = SvrHyperParams {
            c: self.c,
            epsilon: self.epsilon,
            gamma,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn max_passes_for(&self, n: usize) -> usize {
        self.max_passes.unwrap_or(10 * n)
    }

    pub fn fit(&self, points: &[Vec<f64>], y: &[f64]) -> Result<SvrModel> {
        let hp = self.resolve(points)?;
        fit_svr(points, y, &hp, self.tol, self.max_passes_for(points.len()))
    }
}

/// Fitted kernel expansion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub support_points: Vec<Vec<f64>>,
    /// `αᵢ - αᵢ*` for each support point.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub hyper: SvrHyperParams,
    pub converged: bool,
    pub iterations: usize,
    /// Maximal KKT violation at termination.
    pub kkt_gap: f64,
    /// Dual objective `yᵀβ - ε Σ(α+α*) - ½ βᵀKβ` at termination.
    pub dual_objective: f64,
}

impl SvrModel {
    /// A model that predicts `bias` everywhere.
    pub fn constant(bias: f64, hyper: SvrHyperParams) -> Self {
        Self {
            support_points: Vec::new(),
            dual_coefs: Vec::new(),
            bias,
            gamma: hyper.gamma,
            hyper,
            converged: true,
            iterations: 0,
            kkt_gap: 0.0,
            dual_objective: 0.0,
        }
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.support_points.first().map(Vec::len)
    }
}

/// `Σ βᵢ K(z, zᵢ) + b`.
pub fn predict_svr(model: &SvrModel, z: &[f64]) -> Result<f64> {
    if let Some(d) = model.input_dim() {
        if d != z.len() {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: z.len(),
            });
        }
    }
    Ok(model
        .support_points
        .iter()
        .zip(&model.dual_coefs)
        .map(|(sv, b)| b * rbf(z, sv, model.gamma))
        .sum::<f64>()
        + model.bias)
}

/// Full dual state returned by [`fit_svr_detailed`].
#[derive(Clone, Debug)]
pub struct SvrSolution {
    pub model: SvrModel,
    pub alpha: Vec<f64>,
    pub alpha_star: Vec<f64>,
    /// Dual objective sampled after every `N` solver iterations, plus the
    /// final value.
    pub objective_trace: Vec<f64>,
}

impl SvrSolution {
    /// Per-point KKT violation of the returned model on its training data.
    pub fn kkt_residuals(&self, points: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
        let c = self.model.hyper.c;
        let eps = self.model.hyper.epsilon;
        let at_bound = |v: f64| v >= c * (1.0 - 1e-12);
        points
            .iter()
            .zip(y)
            .zip(self.alpha.iter().zip(&self.alpha_star))
            .map(|((z, &yi), (&a, &a_s))| {
                let r = yi - predict_svr(&self.model, z)?;
                Ok(if a > 0.0 {
                    if at_bound(a) {
                        (eps - r).max(0.0)
                    } else {
                        (r - eps).abs()
                    }
                } else if a_s > 0.0 {
                    if at_bound(a_s) {
                        (r + eps).max(0.0)
                    } else {
                        (r + eps).abs()
                    }
                } else {
                    (r.abs() - eps).max(0.0)
                })
            })
            .collect()
    }
}

const TAU: f64 = 1e-12;
/// Largest training set whose kernel matrix is precomputed.
const DENSE_KERNEL_LIMIT: usize = 4096;

struct KernelRows<'a> {
    points: &'a [Vec<f64>],
    gamma: f64,
    dense: Option<Vec<f64>>,
}

impl<'a> KernelRows<'a> {
    fn new(points: &'a [Vec<f64>], gamma: f64) -> Self {
        let n = points.len();
        let dense = (n <= DENSE_KERNEL_LIMIT).then(|| {
            let mut k = vec![0.0; n * n];
            for i in 0..n {
                k[i * n + i] = 1.0;
                for j in i + 1..n {
                    let v = rbf(&points[i], &points[j], gamma);
                    k[i * n + j] = v;
                    k[j * n + i] = v;
                }
            }
            k
        });
        Self { points, gamma, dense }
    }

    fn row(&self, i: usize) -> Cow<'_, [f64]> {
        let n = self.points.len();
        match &self.dense {
            Some(k) => Cow::Borrowed(&k[i * n..(i + 1) * n]),
            None => Cow::Owned(
                self.points
                    .iter()
                    .map(|p| rbf(&self.points[i], p, self.gamma))
                    .collect(),
            ),
        }
    }
}

pub fn fit_svr(points: &[Vec<f64>], y: &[f64], hp: &SvrHyperParams, tol: f64, max_passes: usize) -> Result<SvrModel> {
    Ok(fit_svr_detailed(points, y, hp, tol, max_passes)?.model)
}

/// Solves the ε-SVR dual. Stops once the maximal KKT violation falls below
/// `tol` or after `max_passes * N` pair updates; in the latter case the model
/// is returned with `converged = false`.
pub fn fit_svr_detailed(
    points: &[Vec<f64>],
    y: &[f64],
    hp: &SvrHyperParams,
    tol: f64,
    max_passes: usize,
) -> Result<SvrSolution> {
    hp.validate()?;
    let n = points.len();
    if n < 2 {
        return Err(Error::InvalidArgument("SVR needs at least 2 samples".into()));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    let dim = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    if points.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("SVR training data"));
    }
    if !(tol > 0.0) {
        return Err(Error::OutOfRange {
            name: "tol",
            value: tol,
        });
    }

    let c = hp.c;
    let l = 2 * n;
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let p: Vec<f64> = (0..l)
        .map(|t| {
            if t < n {
                hp.epsilon - y[t]
            } else {
                hp.epsilon + y[t - n]
            }
        })
        .collect();
    let kernel = KernelRows::new(points, hp.gamma);
    let mut a = vec![0.0; l];
    let mut grad = p.clone();
    let objective = |a: &[f64], g: &[f64]| -> f64 {
        -0.5 * a
            .iter()
            .zip(g.iter().zip(&p))
            .map(|(a, (g, p))| a * (g + p))
            .sum::<f64>()
    };
    let in_up = |t: usize, a: f64| if t < n { a < c } else { a > 0.0 };
    let in_low = |t: usize, a: f64| if t < n { a > 0.0 } else { a < c };

    let max_iter = max_passes.saturating_mul(n);
    let mut trace = vec![objective(&a, &grad)];
    let mut iterations = 0usize;
    let mut converged = false;
    let mut gap;
    loop {
        // maximal violating pair
        let (mut gmax, mut gmin) = (f64::NEG_INFINITY, f64::INFINITY);
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        for t in 0..l {
            let v = -sign(t) * grad[t];
            if in_up(t, a[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if in_low(t, a[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        gap = gmax - gmin;
        if i == usize::MAX || j == usize::MAX || gap < tol {
            converged = true;
            gap = gap.max(0.0);
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let (si, sj) = (sign(i), sign(j));
        let ki = kernel.row(i % n);
        let kj = kernel.row(j % n);
        let q_ii = ki[i % n];
        let q_jj = kj[j % n];
        let q_ij = si * sj * ki[j % n];
        let (old_i, old_j) = (a[i], a[j]);
        if si != sj {
            let quad = (q_ii + q_jj + 2.0 * q_ij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = a[i] - a[j];
            a[i] += delta;
            a[j] += delta;
            if diff > 0.0 {
                if a[j] < 0.0 {
                    a[j] = 0.0;
                    a[i] = diff;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = -diff;
            }
            if diff > 0.0 {
                if a[i] > c {
                    a[i] = c;
                    a[j] = c - diff;
                }
            } else if a[j] > c {
                a[j] = c;
                a[i] = c + diff;
            }
        } else {
            let quad = (q_ii + q_jj - 2.0 * q_ij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = a[i] + a[j];
            a[i] -= delta;
            a[j] += delta;
            if sum > c {
                if a[i] > c {
                    a[i] = c;
                    a[j] = sum - c;
                }
            } else if a[j] < 0.0 {
                a[j] = 0.0;
                a[i] = sum;
            }
            if sum > c {
                if a[j] > c {
                    a[j] = c;
                    a[i] = sum - c;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = sum;
            }
        }
        let (di, dj) = (a[i] - old_i, a[j] - old_j);
        for t in 0..l {
            let st = sign(t);
            grad[t] += st * (si * ki[t % n] * di + sj * kj[t % n] * dj);
        }
        if iterations.is_multiple_of(n) {
            trace.push(objective(&a, &grad));
        }
    }

    // α and α* of one point never need to be positive together; removing the
    // common part keeps β (and so the gradient) and does not lower the dual.
    for t in 0..n {
        let m = a[t].min(a[t + n]);
        if m > 0.0 {
            a[t] -= m;
            a[t + n] -= m;
        }
    }
    let dual_objective = objective(&a, &grad);
    trace.push(dual_objective);

    let rho = {
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut sum_free, mut n_free) = (0.0, 0usize);
        for t in 0..l {
            let yg = sign(t) * grad[t];
            let upper = a[t] >= c;
            let lower = a[t] <= 0.0;
            if upper {
                if sign(t) < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if lower {
                if sign(t) > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                sum_free += yg;
                n_free += 1;
            }
        }
        if n_free > 0 {
            sum_free / n_free as f64
        } else {
            0.5 * (ub + lb)
        }
    };

    let (alpha, alpha_star) = (a[..n].to_vec(), a[n..].to_vec());
    let mut support_points = Vec::new();
    let mut dual_coefs = Vec::new();
    for i in 0..n {
        let beta = alpha[i] - alpha_star[i];
        if beta != 0.0 {
            support_points.push(points[i].clone());
            dual_coefs.push(beta);
        }
    }
    Ok(SvrSolution {
        model: SvrModel {
            support_points,
            dual_coefs,
            bias: -rho,
            gamma: hp.gamma,
            hyper: *hp,
            converged,
            iterations,
            kkt_gap: gap,
            dual_objective,
        },
        alpha,
        alpha_star,
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn hp(c: f64, epsilon: f64, gamma: f64) -> SvrHyperParams {
        SvrHyperParams { c, epsilon, gamma }
    }

    fn random_set(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut r = crate::rng::seeded(seed, 0);
        let z: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)])
            .collect();
        let y = z
            .iter()
            .map(|p| (2.0 * p[0]).sin() + 0.5 * p[1] + 0.1 * r.gen_range(-1.0..1.0))
            .collect();
        (z, y)
    }

    #[test]
    fn kernel_values() {
        assert_eq!(rbf_kernel(&[1.0, 2.0], &[1.0, 2.0], 0.7).unwrap(), 1.0);
        // distance γ√2 gives e^-1
        let g = 0.8;
        let d = g * 2f64.sqrt();
        let k = rbf_kernel(&[0.0, 0.0], &[d, 0.0], g).unwrap();
        assert!((k - (-1.0f64).exp()).abs() < 1e-15);
        assert!(rbf_kernel(&[1.0], &[1.0, 2.0], 1.0).is_err());
        assert!(rbf_kernel(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn median_gamma_cases() {
        let two = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        assert!((median_gamma(&two).unwrap() - 1.0).abs() < 1e-15);
        let same = vec![vec![3.0, 1.0]; 4];
        assert_eq!(median_gamma(&same).unwrap(), 1.0);
        let (z, _) = random_set(4, 9);
        let scaled: Vec<Vec<f64>> = z.iter().map(|p| p.iter().map(|v| 3.0 * v).collect()).collect();
        let g1 = median_gamma(&z).unwrap();
        let g3 = median_gamma(&scaled).unwrap();
        assert!((g3 - 3.0 * g1).abs() < 1e-12);
        assert!(median_gamma(&two[..1]).is_err());
    }

    #[test]
    fn constant_targets_stay_in_tube() {
        let (z, _) = random_set(1, 10);
        let y = vec![4.2; 10];
        let m = fit_svr(&z, &y, &hp(1.0, 0.1, 0.5), 1e-3, 100).unwrap();
        assert!(m.dual_coefs.is_empty());
        assert!((m.bias - 4.2).abs() < 1e-12);
        assert!((predict_svr(&m, &[0.3, 0.3]).unwrap() - 4.2).abs() < 1e-12);
        assert!(m.converged);
    }

    #[test]
    fn predict_edge_cases() {
        let h = hp(1.0, 0.1, 1.0);
        let empty = SvrModel::constant(2.5, h);
        assert_eq!(predict_svr(&empty, &[9.0, 9.0]).unwrap(), 2.5);
        let mut one = SvrModel::constant(0.0, h);
        one.support_points = vec![vec![1.0, -1.0]];
        one.dual_coefs = vec![1.0];
        assert_eq!(predict_svr(&one, &[1.0, -1.0]).unwrap(), 1.0);
        assert!(predict_svr(&one, &[1.0]).is_err());
    }

    #[test]
    fn duplicated_points_same_predictions() {
        // With C loose enough that no multiplier reaches the box, the primal
        // weight vector is unique and duplication cannot move it.
        let (z, y) = random_set(8, 12);
        let h = hp(1000.0, 0.05, 0.6);
        let m1 = fit_svr(&z, &y, &h, 1e-8, 10_000).unwrap();
        let z2: Vec<Vec<f64>> = z.iter().chain(&z).cloned().collect();
        let y2: Vec<f64> = y.iter().chain(&y).copied().collect();
        let m2 = fit_svr(&z2, &y2, &h, 1e-8, 10_000).unwrap();
        assert!(m1.converged && m2.converged);
        assert!(m1.dual_coefs.iter().all(|b| b.abs() < 0.5 * h.c));
        let (probe, _) = random_set(99, 20);
        for p in &probe {
            let a = predict_svr(&m1, p).unwrap();
            let b = predict_svr(&m2, p).unwrap();
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn training_predictions_respect_tube() {
        let (z, y) = random_set(3, 40);
        let sol = fit_svr_detailed(&z, &y, &hp(2.0, 0.1, 0.5), 1e-3, 400).unwrap();
        assert!(sol.model.converged);
        let res = sol.kkt_residuals(&z, &y).unwrap();
        assert!(res.iter().all(|&r| r < 1e-3), "{res:?}");
        for (i, p) in z.iter().enumerate() {
            let f = predict_svr(&sol.model, p).unwrap();
            let slack = if sol.alpha[i] > 0.0 || sol.alpha_star[i] > 0.0 {
                f64::INFINITY
            } else {
                1e-3
            };
            assert!((y[i] - f).abs() <= sol.model.hyper.epsilon + slack);
        }
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let (z, y) = random_set(5, 30);
        let m = fit_svr(&z, &y, &hp(10.0, 0.0, 0.3), 1e-12, 0).unwrap();
        assert!(!m.converged);
        assert_eq!(m.iterations, 0);
    }

    #[test]
    fn rejects_bad_input() {
        let h = hp(1.0, 0.1, 1.0);
        assert!(fit_svr(&[vec![1.0]], &[1.0], &h, 1e-3, 10).is_err());
        assert!(fit_svr(&[vec![1.0], vec![f64::NAN]], &[1.0, 2.0], &h, 1e-3, 10).is_err());
        assert!(fit_svr(&[vec![1.0], vec![2.0]], &[1.0, 2.0], &hp(0.0, 0.1, 1.0), 1e-3, 10).is_err());
    }

    proptest! {
        #[test]
        fn dual_feasibility_and_monotone_objective(
            seed in any::<u64>(),
            n in 2usize..25,
            c in 0.05f64..20.0,
            eps in 0.0f64..0.4,
        ) {
            let (z, y) = random_set(seed, n);
            let gamma = median_gamma(&z).unwrap();
            let sol = fit_svr_detailed(&z, &y, &hp(c, eps, gamma), 1e-3, 10 * n).unwrap();
            let sum: f64 = sol.alpha.iter().zip(&sol.alpha_star).map(|(a, b)| a - b).sum();
            prop_assert!(sum.abs() < 1e-6);
            for (a, b) in sol.alpha.iter().zip(&sol.alpha_star) {
                prop_assert!(*a >= 0.0 && *a <= c && *b >= 0.0 && *b <= c);
                prop_assert!(a * b == 0.0);
            }
            for w in sol.objective_trace.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0));
            }
            prop_assert!(sol.model.dual_coefs.iter().all(|b| b.abs() <= c));
        }
    }
}
