//! Renewal function, tilted renewal measures and exponential moments of `N(T)`.
//!
//! The renewal equation `lambda = G + lambda * G` is marched on a uniform grid
//! with an implicit trapezoidal Stieltjes rule for the continuous part of `G`
//! and exact jump accounting for its atoms. The tilted measures reuse the same
//! weights, so a unit weight reproduces `lambda` node for node.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::marginals::Marginal;
use crate::rng;

/// Largest continuous mass of `G` allowed in one grid cell.
const MAX_CELL_MASS: f64 = 0.05;
const MAX_ARRIVALS: usize = 1_000_000;
const MC_BATCH: u64 = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct RenewalGrid {
    step: f64,
    t_max: f64,
    lambda: Vec<f64>,
    dist: Marginal,
    /// `G(t_k)` including atoms.
    cdf: Vec<f64>,
    /// Continuous part of `G(t_{k-1}, t_k]`.
    cont_inc: Vec<f64>,
    atoms: Vec<(f64, f64)>,
    residual: f64,
}

/// Index of the grid node at or just left of `t`, tolerant to rounding at nodes.
fn floor_index(t: f64, h: f64) -> usize {
    (t / h + 1e-9).floor().max(0.0) as usize
}

impl RenewalGrid {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    /// `lambda(k h)` for `k = 0..=K`.
    pub fn values(&self) -> &[f64] {
        &self.lambda
    }

    pub fn dist(&self) -> &Marginal {
        &self.dist
    }

    /// Largest renewal-equation residual of the left-endpoint rule, relative to `1 + lambda`.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// `lambda(t)`, right-continuous at atoms of `G` and linearly interpolated otherwise.
    pub fn value_at(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let k = floor_index(t, self.step).min(self.len() - 1);
        if !self.atoms.is_empty() || k + 1 >= self.len() {
            return self.lambda[k];
        }
        let frac = (t / self.step - k as f64).clamp(0.0, 1.0);
        self.lambda[k] + frac * (self.lambda[k + 1] - self.lambda[k])
    }

    /// `lambda` at `t_k - a`, for atoms of `G` at `a`.
    fn lambda_before(&self, k: usize, a: f64) -> Option<f64> {
        let t = self.time(k) - a;
        (t >= -1e-9 * self.step).then(|| self.lambda[floor_index(t, self.step).min(k)])
    }
}

/// Solves `lambda(t) = G(t) + int_0^t lambda(t - s) G(ds)` on `[0, T]` with step `h`.
pub fn renewal_function(g: &Marginal, t_max: f64, h: f64) -> Result<RenewalGrid> {
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(invalid(format!("horizon must be positive and finite, got {t_max}")));
    }
    if !(h > 0.0) || h > t_max / 10.0 {
        return Err(invalid(format!("step must lie in (0, T/10], got {h} for T={t_max}")));
    }
    let atoms = g.atoms();
    if atoms.iter().any(|a| a.0 <= 0.0) {
        return Err(invalid("inter-arrival law has an atom at zero"));
    }
    let n = (t_max / h).round() as usize;
    let atom_cdf = |t: f64| atoms.iter().filter(|a| a.0 <= t + 1e-9 * h).map(|a| a.1).sum::<f64>();
    let cdf: Vec<f64> = (0..=n).map(|k| g.cdf(k as f64 * h).max(atom_cdf(k as f64 * h))).collect();
    let cont: Vec<f64> = (0..=n).map(|k| (cdf[k] - atom_cdf(k as f64 * h)).max(0.0)).collect();
    let mut cont_inc = vec![0.0; n + 1];
    for k in 1..=n {
        cont_inc[k] = (cont[k] - cont[k - 1]).max(0.0);
    }
    let worst = cont_inc.iter().cloned().fold(0.0, f64::max);
    if worst > MAX_CELL_MASS {
        return Err(Error::Discretization(format!(
            "one step of h={h} carries {worst:.3} of the inter-arrival mass (limit {MAX_CELL_MASS})"
        )));
    }

    let mut grid = RenewalGrid {
        step: h,
        t_max: n as f64 * h,
        lambda: vec![0.0; n + 1],
        dist: g.clone(),
        cdf,
        cont_inc,
        atoms,
        residual: 0.0,
    };
    grid.lambda[0] = grid.cdf[0];
    let half_first = 0.5 * grid.cont_inc.get(1).copied().unwrap_or(0.0);
    for k in 1..=n {
        let lam = &grid.lambda;
        let mut rhs = grid.cdf[k] + half_first * lam[k - 1];
        for j in 2..=k {
            rhs += 0.5 * (lam[k - j] + lam[k - j + 1]) * grid.cont_inc[j];
        }
        for &(a, p) in &grid.atoms {
            if let Some(l) = grid.lambda_before(k, a) {
                rhs += p * l;
            }
        }
        grid.lambda[k] = (rhs / (1.0 - half_first)).max(lam[k - 1]);
    }

    let mut residual = 0.0f64;
    for k in 1..=n {
        let lam = &grid.lambda;
        let mut conv: f64 = (1..=k).map(|j| lam[k - j] * grid.cont_inc[j]).sum();
        for &(a, p) in &grid.atoms {
            if let Some(l) = grid.lambda_before(k, a) {
                conv += p * l;
            }
        }
        residual = residual.max((lam[k] - grid.cdf[k] - conv).abs() / (1.0 + lam[k]));
    }
    grid.residual = residual;
    Ok(grid)
}

/// Largest change of `lambda` on the coarse nodes when the step is halved.
pub fn step_halving_gap(g: &Marginal, t_max: f64, h: f64) -> Result<f64> {
    let coarse = renewal_function(g, t_max, h)?;
    let fine = renewal_function(g, t_max, h / 2.0)?;
    Ok((0..coarse.len())
        .map(|k| (coarse.lambda[k] - fine.lambda[2 * k]).abs() / (1.0 + coarse.lambda[k]))
        .fold(0.0, f64::max))
}

/// `Lambda = {t : lambda(t) > 0}` described by its lower end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSupport {
    pub lower: f64,
    /// Whether `lower` itself belongs to `Lambda` (an atom of `G` sits there).
    pub closed: bool,
}

impl LambdaSupport {
    pub fn contains(&self, t: f64) -> bool {
        t > self.lower || (self.closed && t == self.lower)
    }
}

pub fn lambda_support(g: &Marginal) -> LambdaSupport {
    let lower = g.support_lower();
    let closed = g.atoms().iter().any(|a| a.0 == lower && a.1 > 0.0);
    LambdaSupport { lower, closed }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    H1,
    H2,
    G,
    Unit,
}

/// `lambda~(t) = int_0^t (1 + lambda(t - u)) w(u) G(du)` on the renewal grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedMeasure {
    pub kind: WeightKind,
    pub step: f64,
    /// Cumulative values at the grid nodes.
    pub values: Vec<f64>,
    /// `values[k] - values[k - 1]`, with `increments[0] = values[0]`.
    pub increments: Vec<f64>,
}

impl TiltedMeasure {
    pub fn value_at(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        self.values[floor_index(t, self.step).min(self.values.len() - 1)]
    }
}

pub fn tilted_measure(grid: &RenewalGrid, kind: WeightKind, weight: impl Fn(f64) -> f64) -> Result<TiltedMeasure> {
    let n = grid.len() - 1;
    let w: Vec<f64> = (0..=n).map(|k| weight(grid.time(k))).collect();
    if let Some(k) = w.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(invalid(format!("weight is not positive and finite at t={}", grid.time(k))));
    }
    let atom_w: Vec<f64> = grid.atoms.iter().map(|a| weight(a.0)).collect();
    if atom_w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(invalid("weight is not positive and finite at an atom of G"));
    }
    let lam = &grid.lambda;
    let mut values = vec![0.0; n + 1];
    for (k, value) in values.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 1..=k {
            acc += 0.5 * ((1.0 + lam[k - j]) * w[j] + (1.0 + lam[k - j + 1]) * w[j - 1]) * grid.cont_inc[j];
        }
        for (&(a, p), &wa) in grid.atoms.iter().zip(&atom_w) {
            if let Some(l) = grid.lambda_before(k, a) {
                acc += p * (1.0 + l) * wa;
            }
        }
        *value = acc;
    }
    let mut increments = vec![0.0; n + 1];
    increments[0] = values[0];
    for k in 1..=n {
        increments[k] = values[k] - values[k - 1];
    }
    Ok(TiltedMeasure { kind, step: grid.step, values, increments })
}

/// Mean and standard error of `N(t)` on each requested time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McPoint {
    pub t: f64,
    pub mean: f64,
    pub std_error: f64,
}

/// Arrival times up to `t_max`.
fn arrivals<R: rand::Rng + ?Sized>(g: &Marginal, t_max: f64, rng: &mut R, out: &mut Vec<f64>) -> Result<()> {
    out.clear();
    let mut sigma = 0.0;
    loop {
        sigma += g.sample(rng);
        if sigma > t_max {
            return Ok(());
        }
        out.push(sigma);
        if out.len() > MAX_ARRIVALS {
            return Err(Error::PathLength(MAX_ARRIVALS));
        }
    }
}

pub fn renewal_function_mc(g: &Marginal, times: &[f64], n_paths: u64, seed: u64) -> Result<Vec<McPoint>> {
    if n_paths < 10_000 {
        return Err(invalid(format!("renewal MC needs at least 1e4 paths, got {n_paths}")));
    }
    let t_max = times.iter().cloned().fold(0.0, f64::max);
    let per_batch: Vec<Vec<(f64, f64)>> = rng::batches(n_paths, MC_BATCH)
        .into_par_iter()
        .map(|(b, size)| {
            let mut r = rng::substream(seed, b, rng::CLAIMS);
            let mut acc = vec![(0.0, 0.0); times.len()];
            let mut arr = Vec::new();
            for _ in 0..size {
                arrivals(g, t_max, &mut r, &mut arr)?;
                for (slot, &t) in acc.iter_mut().zip(times) {
                    let c = arr.partition_point(|&s| s <= t) as f64;
                    slot.0 += c;
                    slot.1 += c * c;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let n = n_paths as f64;
    Ok(times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let (s, s2) = per_batch.iter().fold((0.0, 0.0), |a, b| (a.0 + b[i].0, a.1 + b[i].1));
            let mean = s / n;
            let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
            McPoint { t, mean, std_error: (var / n).sqrt() }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpMoment {
    pub value: f64,
    pub std_error: f64,
    pub n: u64,
    /// The top 0.1% of paths carry more than half of the sum.
    pub unreliable: bool,
}

/// Monte Carlo estimate of `E exp(beta N(T))`.
pub fn exp_moment_n(g: &Marginal, beta: f64, t_max: f64, n_paths: u64, seed: u64) -> Result<ExpMoment> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(invalid(format!("beta must be >= 0, got {beta}")));
    }
    if n_paths < 2 {
        return Err(invalid("need at least two paths"));
    }
    let per_batch: Vec<Vec<u64>> = rng::batches(n_paths, MC_BATCH)
        .into_par_iter()
        .map(|(b, size)| {
            let mut r = rng::substream(seed, b, rng::CLAIMS);
            let mut counts = Vec::new();
            let mut arr = Vec::new();
            for _ in 0..size {
                arrivals(g, t_max, &mut r, &mut arr)?;
                if counts.len() <= arr.len() {
                    counts.resize(arr.len() + 1, 0);
                }
                counts[arr.len()] += 1;
            }
            Ok(counts)
        })
        .collect::<Result<_>>()?;
    let width = per_batch.iter().map(Vec::len).max().unwrap_or(0);
    let mut counts = vec![0u64; width];
    for b in &per_batch {
        for (c, v) in counts.iter_mut().zip(b) {
            *c += v;
        }
    }
    let n = n_paths as f64;
    let (mut mean, mut second) = (0.0, 0.0);
    for (k, &c) in counts.iter().enumerate() {
        let share = c as f64 / n;
        let v = (beta * k as f64).exp();
        mean += share * v;
        second += share * v * v;
    }
    let var = (second - mean * mean).max(0.0) * n / (n - 1.0);

    let mut top = (n_paths as f64 * 0.001).ceil() as u64;
    let mut top_sum = 0.0;
    for (k, &c) in counts.iter().enumerate().rev() {
        let take = c.min(top);
        top_sum += take as f64 * (beta * k as f64).exp();
        top -= take;
        if top == 0 {
            break;
        }
    }
    Ok(ExpMoment { value: mean, std_error: (var / n).sqrt(), n: n_paths, unreliable: top_sum > 0.5 * mean * n })
}
