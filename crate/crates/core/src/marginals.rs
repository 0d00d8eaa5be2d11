//! Univariate laws used for the claim sizes and the inter-arrival time, plus
//! grid diagnostics for the local long-tailed and almost-decreasing properties.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::counterexample::CounterexampleDensity;
use crate::error::{invalid, Error, Result};

/// The window `(x, x + d]`; `d = +inf` stands for the tail `(x, inf)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalWindow {
    pub x: f64,
    pub d: f64,
}

impl LocalWindow {
    pub fn new(x: f64, d: f64) -> Result<Self> {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(invalid(format!("window left endpoint must be finite and >= 0, got {x}")));
        }
        if !(d > 0.0) {
            return Err(invalid(format!("window width must be > 0, got {d}")));
        }
        Ok(Self { x, d })
    }

    pub fn tail(x: f64) -> Result<Self> {
        Self::new(x, f64::INFINITY)
    }

    pub fn is_tail(&self) -> bool {
        self.d.is_infinite()
    }
}

#[derive(Clone, PartialEq)]
pub enum Marginal {
    /// `F(x) = 1 - (1 + x)^(-alpha)` on `[0, inf)`.
    Pareto { alpha: f64 },
    /// `F(x) = 1 - exp(-(x / scale)^shape)`.
    Weibull { shape: f64, scale: f64 },
    Exponential { rate: f64 },
    /// Point mass at `point`.
    Deterministic { point: f64 },
    Counterexample(Arc<CounterexampleDensity>),
}

impl fmt::Debug for Marginal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Marginal::Pareto { alpha } => write!(f, "Pareto(alpha={alpha})"),
            Marginal::Weibull { shape, scale } => write!(f, "Weibull(shape={shape}, scale={scale})"),
            Marginal::Exponential { rate } => write!(f, "Exponential(rate={rate})"),
            Marginal::Deterministic { point } => write!(f, "Deterministic({point})"),
            Marginal::Counterexample(c) => write!(f, "Counterexample(n_max={})", c.table().n_max()),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(format!("{name} must be finite and > 0, got {v}")))
    }
}

impl Marginal {
    pub fn pareto(alpha: f64) -> Result<Self> {
        Ok(Marginal::Pareto { alpha: positive("Pareto alpha", alpha)? })
    }

    /// Heavy-tailed Weibull; the shape must lie in `(0, 1)`.
    pub fn weibull(shape: f64, scale: f64) -> Result<Self> {
        let shape = positive("Weibull shape", shape)?;
        if shape >= 1.0 {
            return Err(invalid(format!("Weibull shape must be < 1 for a heavy tail, got {shape}")));
        }
        Ok(Marginal::Weibull { shape, scale: positive("Weibull scale", scale)? })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Ok(Marginal::Exponential { rate: positive("Exponential rate", rate)? })
    }

    pub fn deterministic(point: f64) -> Result<Self> {
        if !(point >= 0.0) || !point.is_finite() {
            return Err(invalid(format!("Deterministic point must be finite and >= 0, got {point}")));
        }
        Ok(Marginal::Deterministic { point })
    }

    pub fn counterexample(density: CounterexampleDensity) -> Self {
        Marginal::Counterexample(Arc::new(density))
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self, Marginal::Deterministic { .. })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match self {
            Marginal::Pareto { alpha } => -(-alpha * x.ln_1p()).exp_m1(),
            Marginal::Weibull { shape, scale } => -(-(x / scale).powf(*shape)).exp_m1(),
            Marginal::Exponential { rate } => -(-rate * x).exp_m1(),
            Marginal::Deterministic { point } => {
                if x >= *point {
                    1.0
                } else {
                    0.0
                }
            }
            Marginal::Counterexample(c) => c.cdf_clamped(x),
        }
    }

    /// Survival function `1 - F(x)`, evaluated without cancellation.
    pub fn sf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0;
        }
        match self {
            Marginal::Pareto { alpha } => (-alpha * x.ln_1p()).exp(),
            Marginal::Weibull { shape, scale } => (-(x / scale).powf(*shape)).exp(),
            Marginal::Exponential { rate } => (-rate * x).exp(),
            Marginal::Deterministic { point } => {
                if x >= *point {
                    0.0
                } else {
                    1.0
                }
            }
            Marginal::Counterexample(c) => c.sf_clamped(x),
        }
    }

    /// `F(x, x + d]`, with `d = inf` meaning the tail.
    pub fn local_prob(&self, w: &LocalWindow) -> f64 {
        self.interval_prob(w.x, w.d)
    }

    /// `F(x, x + d]` for any real `x`, used by the diagnostics where `x + y`
    /// may fall left of the support.
    pub(crate) fn interval_prob(&self, x: f64, d: f64) -> f64 {
        if d.is_infinite() {
            return self.sf(x);
        }
        (self.sf(x) - self.sf(x + d)).max(0.0)
    }

    /// `P(X e^{-ru} in (x, x + d])`.
    pub fn scaled_local_prob(&self, w: &LocalWindow, r: f64, u: f64) -> Result<f64> {
        if !(r >= 0.0) || !(u >= 0.0) {
            return Err(Error::Domain(format!("discount rate and time must be >= 0, got r={r}, u={u}")));
        }
        let factor = (r * u).exp();
        if !factor.is_finite() {
            return Err(Error::Domain(format!("exp(r*u) overflows for r*u={}", r * u)));
        }
        if w.is_tail() {
            return Ok(self.sf(w.x * factor));
        }
        Ok((self.sf(w.x * factor) - self.sf((w.x + w.d) * factor)).max(0.0))
    }

    /// Same as [`Marginal::scaled_local_prob`] for a finite window with a
    /// precomputed growth factor `e^{ru}`; used in the quadrature inner loops.
    #[inline]
    pub(crate) fn scaled_window(&self, x: f64, d: f64, factor: f64) -> f64 {
        (self.sf(x * factor) - self.sf((x + d) * factor)).max(0.0)
    }

    /// `inf{x : F(x) >= p}` for `p` in `[0, 1)`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::OutOfRange(format!("quantile level must lie in [0, 1), got {p}")));
        }
        Ok(self.quantile_unchecked(p))
    }

    pub(crate) fn quantile_unchecked(&self, p: f64) -> f64 {
        match self {
            Marginal::Pareto { alpha } => ((-p).ln_1p() * (-1.0 / alpha)).exp_m1(),
            Marginal::Weibull { shape, scale } => scale * (-(-p).ln_1p()).powf(1.0 / shape),
            Marginal::Exponential { rate } => -(-p).ln_1p() / rate,
            Marginal::Deterministic { point } => *point,
            Marginal::Counterexample(c) => c.quantile_bisect(p),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Marginal::Deterministic { point } => *point,
            _ => self.quantile_unchecked(rng.random::<f64>()),
        }
    }

    /// Infimum of the support.
    pub fn support_lower(&self) -> f64 {
        match self {
            Marginal::Deterministic { point } => *point,
            _ => 0.0,
        }
    }

    /// Point masses as `(location, mass)` pairs.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        match self {
            Marginal::Deterministic { point } => vec![(*point, 1.0)],
            _ => Vec::new(),
        }
    }

    /// Kinks of the CDF or density that a uniform grid could step over.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Marginal::Deterministic { point } => vec![*point],
            Marginal::Counterexample(c) => c.table().knots().iter().map(|k| k.0).collect(),
            _ => Vec::new(),
        }
    }
}

/// Grid resolution for [`lloc_ratio_diagnostic`].
#[derive(Debug, Clone, Copy)]
pub struct LlocGrid {
    pub y_step: f64,
    pub width_points: usize,
}

impl LlocGrid {
    /// Shift step `0.01 * a` and 20 widths across `(a, b]`.
    pub fn default_for(a: f64) -> Self {
        Self { y_step: 0.01 * a, width_points: 20 }
    }
}

/// For each `x`, a grid lower bound of
/// `sup_{|y| <= y_bound, d, s in (a, b]} |F(x + y + Δ_d) / F(x + Δ_s) - d / s|`.
///
/// For a local long-tailed law the returned sequence tends to zero as `x` grows.
pub fn lloc_ratio_diagnostic(
    dist: &Marginal,
    x_grid: &[f64],
    y_bound: f64,
    range: (f64, f64),
    grid: LlocGrid,
) -> Result<Vec<f64>> {
    let (a, b) = range;
    if !(a > 0.0 && b > a) {
        return Err(invalid(format!("width range must satisfy 0 < a < b, got ({a}, {b}]")));
    }
    if !(y_bound > 0.0) {
        return Err(invalid(format!("y_bound must be > 0, got {y_bound}")));
    }
    if !(grid.y_step > 0.0) || grid.width_points == 0 {
        return Err(Error::InvalidGrid("lloc grid needs a positive step and at least one width".into()));
    }
    let widths: Vec<f64> = (1..=grid.width_points)
        .map(|k| a + (b - a) * k as f64 / grid.width_points as f64)
        .collect();
    let n_y = (y_bound / grid.y_step).round() as i64;
    let shifts: Vec<f64> = (-n_y..=n_y)
        .map(|k| (k as f64 * grid.y_step).clamp(-y_bound, y_bound))
        .collect();

    x_grid
        .iter()
        .map(|&x| {
            let base: Vec<f64> = widths.iter().map(|&s| dist.interval_prob(x, s)).collect();
            if let Some(pos) = base.iter().position(|&p| p <= 0.0) {
                return Err(Error::Degenerate(format!(
                    "F(x + Δ_s) = 0 at x={x}, s={}",
                    widths[pos]
                )));
            }
            let mut worst = 0.0f64;
            for &y in &shifts {
                for &d in &widths {
                    let shifted = dist.interval_prob(x + y, d);
                    for (&s, &den) in widths.iter().zip(&base) {
                        worst = worst.max((shifted / den - d / s).abs());
                    }
                }
            }
            Ok(worst)
        })
        .collect()
}

/// Grid lower bound of `C_4`: `sup_{0 <= x <= y <= grid_max} F(y + Δ_d) / F(x + Δ_d) - 1`.
///
/// The grid is uniform with the given step (default `0.01 * d`) and is refined
/// with the distribution's breakpoints, so kinks of piecewise densities are hit.
pub fn almost_decreasing_constant(
    dist: &Marginal,
    d: f64,
    grid_max: f64,
    step: Option<f64>,
) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(invalid(format!("window width must be finite and > 0, got {d}")));
    }
    if !(grid_max > 0.0) {
        return Err(invalid(format!("grid_max must be > 0, got {grid_max}")));
    }
    let step = step.unwrap_or(0.01 * d);
    if !(step > 0.0) {
        return Err(Error::InvalidGrid(format!("step must be > 0, got {step}")));
    }
    let n = (grid_max / step).ceil() as usize;
    if n > 50_000_000 {
        return Err(Error::InvalidGrid(format!("{n} grid points requested; increase the step")));
    }
    let mut points: Vec<f64> = (0..=n).map(|k| (k as f64 * step).min(grid_max)).collect();
    for bp in dist.breakpoints() {
        for p in [bp, bp - d] {
            if (0.0..=grid_max).contains(&p) {
                points.push(p);
            }
        }
    }
    points.sort_by(f64::total_cmp);
    points.dedup();

    let mut running_min = f64::INFINITY;
    let mut sup_ratio = 1.0f64;
    for &x in &points {
        let mass = dist.interval_prob(x, d);
        if mass <= 0.0 {
            continue;
        }
        running_min = running_min.min(mass);
        sup_ratio = sup_ratio.max(mass / running_min);
    }
    Ok(sup_ratio - 1.0)
}
