//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-d2 / (2.0 * gamma * gamma)).exp()
}

pub fn gram(points: &[Vec<f64>], gamma: f64) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|a| points.iter().map(|b| rbf(a, b, gamma)).collect())
        .collect()
}

/// `yᵀβ - ε Σ|βᵢ| - ½ βᵀKβ`, the ε-SVR dual in terms of `β = α - α*`.
pub fn dual_objective(k: &[Vec<f64>], y: &[f64], eps: f64, beta: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += beta[i] * beta[j] * k[i][j];
        }
    }
    let lin: f64 = y.iter().zip(beta).map(|(a, b)| a * b).sum();
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    lin - eps * l1 - 0.5 * quad
}

/// Euclidean projection of `v` onto `{0 ≤ u ≤ c, Σ sᵢuᵢ = 0}` with `sᵢ = ±1`,
/// by bisection on the hyperplane multiplier.
fn project(v: &[f64], s: &[f64], c: f64) -> Vec<f64> {
    let at = |lam: f64| -> (Vec<f64>, f64) {
        let u: Vec<f64> = v.iter().zip(s).map(|(vi, si)| (vi - lam * si).clamp(0.0, c)).collect();
        let g = u.iter().zip(s).map(|(ui, si)| ui * si).sum();
        (u, g)
    };
    let bound = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        // Σ sᵢuᵢ(λ) is non-increasing in λ
        if at(mid).1 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi)).0
}

/// Maximizes the ε-SVR dual over `(α, α*)` with accelerated projected
/// gradient ascent. Returns `β = α - α*`.
pub fn svr_dual_oracle(points: &[Vec<f64>], y: &[f64], c: f64, eps: f64, gamma: f64) -> Vec<f64> {
    let n = y.len();
    let k = gram(points, gamma);
    // variables u = [α; α*], constraint Σα - Σα* = 0
    let s: Vec<f64> = (0..2 * n).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
    let step = 1.0 / (2.0 * n as f64);
    let objective = |u: &[f64]| {
        let beta: Vec<f64> = (0..n).map(|i| u[i] - u[n + i]).collect();
        let quad: f64 = (0..n)
            .map(|i| beta[i] * (0..n).map(|j| k[i][j] * beta[j]).sum::<f64>())
            .sum();
        y.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() - eps * u.iter().sum::<f64>() - 0.5 * quad
    };
    let grad = |u: &[f64]| -> Vec<f64> {
        let beta: Vec<f64> = (0..n).map(|i| u[i] - u[n + i]).collect();
        let kb: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k[i][j] * beta[j]).sum()).collect();
        (0..2 * n)
            .map(|i| {
                if i < n {
                    y[i] - eps - kb[i]
                } else {
                    -y[i - n] - eps + kb[i - n]
                }
            })
            .collect()
    };
    let mut x = vec![0.0; 2 * n];
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut best = objective(&x);
    for _ in 0..100_000 {
        let g = grad(&z);
        let cand: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi + step * gi).collect();
        let next = project(&cand, &s, c);
        let f = objective(&next);
        if f < best {
            // restart momentum when the objective stops improving
            t = 1.0;
            z = x.clone();
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = next
            .iter()
            .zip(&x)
            .map(|(a, b)| a + (t - 1.0) / t_next * (a - b))
            .collect();
        let done = next.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-12);
        x = next;
        best = f;
        t = t_next;
        if done {
            break;
        }
    }
    (0..n).map(|i| x[i] - x[n + i]).collect()
}

pub struct SvrCase {
    pub points: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub c: f64,
    pub epsilon: f64,
    pub gamma: f64,
}

/// Random small regression problem: 2..=12 points in 1..=3 dimensions.
pub fn random_svr_case(seed: u64) -> SvrCase {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = r.gen_range(2..=12);
    let d = r.gen_range(1..=3);
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| r.gen_range(-2.0..2.0)).collect())
        .collect();
    let y = points
        .iter()
        .map(|p| p.iter().map(|v| v.sin()).sum::<f64>() + r.gen_range(-0.3..0.3))
        .collect();
    SvrCase {
        points,
        y,
        c: [0.5, 1.0, 5.0][r.gen_range(0..3)],
        epsilon: r.gen_range(0.01..0.2),
        gamma: r.gen_range(0.3..2.0),
    }
}

/// Closed-batch moisture: `M_e + (M₀ - M_e) e^{-Kt}`.
pub fn analytic_moisture(m0: f64, me: f64, k: f64, t: f64) -> f64 {
    me + (m0 - me) * (-k * t).exp()
}
