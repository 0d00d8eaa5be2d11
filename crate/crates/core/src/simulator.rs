//! Exact Monte Carlo of the bidimensional renewal risk model.
//!
//! Paths are generated in fixed batches, each with its own substream, and the
//! per-batch integer tallies are merged in batch order. Results therefore do not
//! depend on the number of worker threads.

use rand::Rng;
use rayon::prelude::*;
use statrs::function::beta::beta_reg;

use crate::asymptotics::Box2;
use crate::copulas::DependenceSpec;
use crate::error::{invalid, Error, Result};
use crate::marginals::Marginal;
use crate::renewal::lambda_support;
use crate::rng;

pub const MAX_ARRIVALS: usize = 1_000_000;
pub const UNRELIABLE_HITS: u64 = 30;
const EXACT_CI_HITS: u64 = 100;
const Z95: f64 = 1.959_963_984_540_054;
/// Pilot paths per main path for the stratum weights.
const PILOT_FACTOR: u64 = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum Premium {
    Linear { rate: f64 },
    CompoundPoisson { rate: f64, jump: Marginal },
}

impl Premium {
    fn validate(&self) -> Result<()> {
        let rate = match self {
            Premium::Linear { rate } | Premium::CompoundPoisson { rate, .. } => *rate,
        };
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(invalid(format!("premium rate must be finite and >= 0, got {rate}")));
        }
        if let Premium::CompoundPoisson { jump, .. } = self {
            if jump.support_lower() < 0.0 {
                return Err(invalid("premium jumps must be nonnegative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub spec: DependenceSpec,
    /// Force of interest.
    pub r: f64,
    pub premiums: [Premium; 2],
    pub horizon: f64,
    pub seed: u64,
    pub n_samples: u64,
    pub n_batches: u64,
}

impl ModelConfig {
    pub fn new(spec: DependenceSpec, r: f64, horizon: f64, seed: u64, n_samples: u64) -> Result<Self> {
        let cfg = Self {
            spec,
            r,
            premiums: [Premium::Linear { rate: 0.0 }, Premium::Linear { rate: 0.0 }],
            horizon,
            seed,
            n_samples,
            n_batches: 64,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 0.0) || !self.r.is_finite() {
            return Err(invalid(format!("force of interest must be finite and >= 0, got {}", self.r)));
        }
        if !self.horizon.is_finite() || !lambda_support(&self.spec.inter_arrival).contains(self.horizon) {
            return Err(invalid(format!("horizon T={} does not lie in Lambda", self.horizon)));
        }
        if self.n_samples == 0 || self.n_batches == 0 {
            return Err(invalid("n_samples and n_batches must be >= 1"));
        }
        if self.spec.inter_arrival.atoms().iter().any(|a| a.0 <= 0.0) {
            return Err(invalid("inter-arrival law has an atom at zero"));
        }
        self.premiums.iter().try_for_each(Premium::validate)
    }

    fn batch_plan(&self) -> Vec<(u64, u64)> {
        rng::batches(self.n_samples, self.n_samples.div_ceil(self.n_batches))
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0) || t > self.horizon {
            return Err(Error::OutOfRange(format!("t={t} outside [0, T={}]", self.horizon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub ci95: (f64, f64),
    pub hits: u64,
    pub n: u64,
    pub unreliable: bool,
}

fn normal_ci(value: f64, se: f64) -> (f64, f64) {
    ((value - Z95 * se).max(0.0), value + Z95 * se)
}

impl Estimate {
    /// Binomial estimate, Clopper-Pearson interval below 100 hits.
    pub fn from_hits(hits: u64, n: u64) -> Self {
        let nf = n as f64;
        let value = hits as f64 / nf;
        let std_error = (value * (1.0 - value) / nf).sqrt();
        let ci95 = if hits < EXACT_CI_HITS {
            clopper_pearson(hits, n)
        } else {
            let (lo, hi) = normal_ci(value, std_error);
            (lo, hi.min(1.0))
        };
        Self { value, std_error, ci95, hits, n, unreliable: hits < UNRELIABLE_HITS }
    }

    /// Mean of nonnegative integer scores; `hits` counts nonzero scores.
    pub fn from_scores(sum: u64, sum_sq: u64, hits: u64, n: u64) -> Self {
        let nf = n as f64;
        let value = sum as f64 / nf;
        let var = if n > 1 { ((sum_sq as f64 / nf - value * value) * nf / (nf - 1.0)).max(0.0) } else { 0.0 };
        let std_error = (var / nf).sqrt();
        Self { value, std_error, ci95: normal_ci(value, std_error), hits, n, unreliable: hits < UNRELIABLE_HITS }
    }

    pub fn overlaps(&self, other: &Estimate) -> bool {
        self.ci95.0 <= other.ci95.1 && other.ci95.0 <= self.ci95.1
    }
}

pub fn clopper_pearson(hits: u64, n: u64) -> (f64, f64) {
    let (k, nf) = (hits as f64, n as f64);
    let lo = if hits == 0 { 0.0 } else { beta_quantile(k, nf - k + 1.0, 0.025) };
    let hi = if hits == n { 1.0 } else { beta_quantile(k + 1.0, nf - k, 0.975) };
    (lo, hi)
}

/// Bisection on the regularized incomplete beta; robust for very unbalanced shapes.
fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if beta_reg(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy)]
struct Arrival {
    sigma: f64,
    /// Claims discounted to time 0.
    y: [f64; 2],
}

#[derive(Debug, Default)]
struct Path {
    arrivals: Vec<Arrival>,
    /// Premium jumps `(time, discounted size)` per class.
    premium_jumps: [Vec<(f64, f64)>; 2],
}

impl Path {
    fn count(&self, t: f64) -> usize {
        self.arrivals.partition_point(|a| a.sigma <= t)
    }

    fn discounted_claims(&self, t: f64) -> [f64; 2] {
        let mut d = [0.0, 0.0];
        for a in &self.arrivals[..self.count(t)] {
            d[0] += a.y[0];
            d[1] += a.y[1];
        }
        d
    }

    /// `int_0^t e^{-ry} C_i(dy)`.
    fn discounted_premium(&self, cfg: &ModelConfig, i: usize, t: f64) -> f64 {
        match &cfg.premiums[i] {
            Premium::Linear { rate } => {
                let r = cfg.r;
                rate * if r == 0.0 { t } else { -(-r * t).exp_m1() / r }
            }
            Premium::CompoundPoisson { .. } => {
                self.premium_jumps[i].iter().take_while(|j| j.0 <= t).map(|j| j.1).sum()
            }
        }
    }
}

struct Streams {
    claims: rand_chacha::ChaCha8Rng,
    premium: [rand_chacha::ChaCha8Rng; 2],
}

impl Streams {
    fn new(seed: u64, batch: u64) -> Self {
        Self {
            claims: rng::substream(seed, batch, rng::CLAIMS),
            premium: [rng::substream(seed, batch, rng::PREMIUM_1), rng::substream(seed, batch, rng::PREMIUM_2)],
        }
    }
}

fn fill_path(cfg: &ModelConfig, t_max: f64, streams: &mut Streams, path: &mut Path, premiums: bool) -> Result<()> {
    path.arrivals.clear();
    let r = cfg.r;
    let mut sigma = 0.0;
    loop {
        let (x1, x2, theta) = cfg.spec.sample_triple(&mut streams.claims)?;
        sigma += theta;
        if sigma > t_max {
            break;
        }
        let disc = if r == 0.0 { 1.0 } else { (-r * sigma).exp() };
        path.arrivals.push(Arrival { sigma, y: [x1 * disc, x2 * disc] });
        if path.arrivals.len() > MAX_ARRIVALS {
            return Err(Error::PathLength(MAX_ARRIVALS));
        }
    }
    if premiums {
        for i in 0..2 {
            path.premium_jumps[i].clear();
            if let Premium::CompoundPoisson { rate, jump } = &cfg.premiums[i] {
                if *rate == 0.0 {
                    continue;
                }
                let rng = &mut streams.premium[i];
                let mut tau = 0.0;
                loop {
                    tau += -(1.0 - rng.random::<f64>()).ln() / rate;
                    if tau > t_max {
                        break;
                    }
                    let size = jump.sample(rng) * if r == 0.0 { 1.0 } else { (-r * tau).exp() };
                    path.premium_jumps[i].push((tau, size));
                    if path.premium_jumps[i].len() > MAX_ARRIVALS {
                        return Err(Error::PathLength(MAX_ARRIVALS));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Runs every batch of `cfg` and returns the per-batch tallies in batch order.
///
/// Paths always extend to the model horizon, so a query sees the same paths
/// whichever other queries share the run.
fn run_batches<F>(cfg: &ModelConfig, premiums: bool, width: usize, visit: F) -> Result<Vec<u64>>
where
    F: Fn(&Path, &mut [u64]) + Sync,
{
    let per_batch: Vec<Vec<u64>> = cfg
        .batch_plan()
        .into_par_iter()
        .map(|(b, size)| {
            let mut streams = Streams::new(cfg.seed, b);
            let mut path = Path::default();
            let mut tally = vec![0u64; width];
            for _ in 0..size {
                fill_path(cfg, cfg.horizon, &mut streams, &mut path, premiums)?;
                visit(&path, &mut tally);
            }
            Ok(tally)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![0u64; width];
    for tally in per_batch {
        for (t, v) in total.iter_mut().zip(tally) {
            *t += v;
        }
    }
    Ok(total)
}

/// `P(D_r(t) in box)` for every pair of `times` and `boxes`, from one set of paths.
pub fn scan_discounted_claims(cfg: &ModelConfig, times: &[f64], boxes: &[Box2]) -> Result<Vec<Vec<Estimate>>> {
    times.iter().try_for_each(|&t| cfg.check_time(t))?;
    let t_max = times.iter().cloned().fold(0.0, f64::max);
    let floor = boxes.iter().map(|b| b.x[0].min(b.x[1])).fold(f64::INFINITY, f64::min);
    let width = times.len() * boxes.len();
    let tally = run_batches(cfg, false, width, |path, tally| {
        let full = path.discounted_claims(t_max);
        // D is nondecreasing in t, so a path below every level never hits
        if full[0] <= floor && full[1] <= floor {
            return;
        }
        for (ti, &t) in times.iter().enumerate() {
            let d = path.discounted_claims(t);
            for (bi, bx) in boxes.iter().enumerate() {
                if bx.contains(d) {
                    tally[ti * boxes.len() + bi] += 1;
                }
            }
        }
    })?;
    Ok((0..times.len())
        .map(|ti| (0..boxes.len()).map(|bi| Estimate::from_hits(tally[ti * boxes.len() + bi], cfg.n_samples)).collect())
        .collect())
}

pub fn simulate_discounted_claims(cfg: &ModelConfig, t: f64, bx: &Box2) -> Result<Estimate> {
    Ok(scan_discounted_claims(cfg, &[t], std::slice::from_ref(bx))?.remove(0).remove(0))
}

/// `P(-U(x, t) in (0, d])` with `-U = e^{rt} (D_r(t) - x - int_0^t e^{-ry} C(dy))`.
pub fn simulate_net_loss(cfg: &ModelConfig, x: [f64; 2], t: f64, d: [f64; 2]) -> Result<Estimate> {
    cfg.check_time(t)?;
    let bx = Box2::new(x[0], x[1], d[0], d[1])?;
    let grow = (cfg.r * t).exp();
    let tally = run_batches(cfg, true, 1, |path, tally| {
        let claims = path.discounted_claims(t);
        let hit = (0..2).all(|i| {
            let loss = grow * claims[i] - grow * bx.x[i] - grow * path.discounted_premium(cfg, i, t);
            loss > 0.0 && loss <= bx.d[i]
        });
        if hit {
            tally[0] += 1;
        }
    })?;
    Ok(Estimate::from_hits(tally[0], cfg.n_samples))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stratum {
    /// `Some(n)` for `{N(t) = n}`, `None` for the remainder `{N(t) > n_cap}`.
    pub count: Option<usize>,
    /// Pilot estimate of the stratum probability.
    pub weight: f64,
    pub paths: u64,
    pub hits: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedEstimate {
    pub estimate: Estimate,
    pub strata: Vec<Stratum>,
}

/// Post-stratified estimate of `P(D_r(t) in box)` over `{N(t) = n}`, `n <= n_cap`.
///
/// Stratum weights come from an independent pilot of inter-arrival times only.
/// With `n_cap = 0` the plain estimator is returned.
pub fn stratified_estimate(cfg: &ModelConfig, t: f64, bx: &Box2, n_cap: usize) -> Result<StratifiedEstimate> {
    cfg.check_time(t)?;
    if n_cap == 0 {
        let estimate = simulate_discounted_claims(cfg, t, bx)?;
        let strata = vec![Stratum { count: None, weight: 1.0, paths: estimate.n, hits: estimate.hits }];
        return Ok(StratifiedEstimate { estimate, strata });
    }
    let k = n_cap + 2;
    let tally = run_batches(cfg, false, 2 * k, |path, tally| {
        let s = path.count(t).min(n_cap + 1);
        tally[s] += 1;
        if bx.contains(path.discounted_claims(t)) {
            tally[k + s] += 1;
        }
    })?;

    let g = &cfg.spec.inter_arrival;
    let pilot: Vec<Vec<u64>> = cfg
        .batch_plan()
        .into_par_iter()
        .map(|(b, size)| {
            let mut r = rng::substream(cfg.seed, b, rng::PILOT);
            let mut counts = vec![0u64; k];
            for _ in 0..size * PILOT_FACTOR {
                let mut sigma = 0.0;
                let mut n = 0;
                while n <= n_cap {
                    sigma += g.sample(&mut r);
                    if sigma > t {
                        break;
                    }
                    n += 1;
                }
                counts[n] += 1;
            }
            counts
        })
        .collect();
    let n_pilot = cfg.n_samples * PILOT_FACTOR;
    let mut counts = vec![0u64; k];
    for c in pilot {
        for (a, v) in counts.iter_mut().zip(c) {
            *a += v;
        }
    }

    let strata: Vec<Stratum> = (0..k)
        .map(|s| Stratum {
            count: (s <= n_cap).then_some(s),
            weight: counts[s] as f64 / n_pilot as f64,
            paths: tally[s],
            hits: tally[k + s],
        })
        .collect();
    let (mut value, mut var_within, mut second) = (0.0, 0.0, 0.0);
    for st in &strata {
        if st.paths == 0 {
            continue;
        }
        let p = st.hits as f64 / st.paths as f64;
        value += st.weight * p;
        var_within += st.weight * st.weight * p * (1.0 - p) / st.paths as f64;
        second += st.weight * p * p;
    }
    let var_weights = (second - value * value).max(0.0) / n_pilot as f64;
    let std_error = (var_within + var_weights).sqrt();
    let hits = strata.iter().map(|s| s.hits).sum();
    let estimate = Estimate {
        value,
        std_error,
        ci95: normal_ci(value, std_error),
        hits,
        n: cfg.n_samples,
        unreliable: hits < UNRELIABLE_HITS,
    };
    Ok(StratifiedEstimate { estimate, strata })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma33 {
    /// `P(sum_k X_k e^{-r sigma_k} in x + Delta, N(t) = n)`.
    pub lhs: Estimate,
    /// `sum_k sum_j P(X1_k e^{-r sigma_k} in x1 + Delta1, X2_j e^{-r sigma_j} in x2 + Delta2, N(t) = n)`.
    pub rhs: Estimate,
    pub ratio: f64,
}

pub fn lemma33_check(cfg: &ModelConfig, n: usize, t: f64, bx: &Box2) -> Result<Lemma33> {
    if !(1..=3).contains(&n) {
        return Err(invalid(format!("number of arrivals must be 1, 2 or 3, got {n}")));
    }
    cfg.check_time(t)?;
    if !lambda_support(&cfg.spec.inter_arrival).contains(t) {
        return Err(Error::OutOfRange(format!("t={t} is not in Lambda")));
    }
    let tally = run_batches(cfg, false, 4, |path, tally| {
        if path.count(t) != n {
            return;
        }
        let arr = &path.arrivals[..n];
        let sum = [arr.iter().map(|a| a.y[0]).sum(), arr.iter().map(|a| a.y[1]).sum()];
        if bx.contains(sum) {
            tally[0] += 1;
        }
        let inside = |i: usize| arr.iter().filter(|a| a.y[i] > bx.x[i] && a.y[i] <= bx.x[i] + bx.d[i]).count() as u64;
        let score = inside(0) * inside(1);
        if score > 0 {
            tally[1] += 1;
            tally[2] += score;
            tally[3] += score * score;
        }
    })?;
    let lhs = Estimate::from_hits(tally[0], cfg.n_samples);
    let rhs = Estimate::from_scores(tally[2], tally[3], tally[1], cfg.n_samples);
    let ratio = lhs.value / rhs.value;
    Ok(Lemma33 { lhs, rhs, ratio })
}
