//! Quadrature of the local asymptotic formula for the discounted aggregate claims.
//!
//! The double Stieltjes integral against `lambda~_2(dv) lambda~_1(du)` is a sum over
//! grid cells with the integrand taken at cell midpoints. Cells straddling the
//! line `u + v = t` are counted in full.

use crate::copulas::DependenceSpec;
use crate::error::{invalid, Error, Result};
use crate::marginals::Marginal;
use crate::renewal::{lambda_support, renewal_function, tilted_measure, RenewalGrid, TiltedMeasure, WeightKind};
use crate::simulator::{scan_discounted_claims, Estimate, ModelConfig};

/// Initial levels and window widths of the two claim classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box2 {
    pub x: [f64; 2],
    pub d: [f64; 2],
}

impl Box2 {
    /// Widths must be finite; a zero width is the empty window.
    pub fn new(x1: f64, x2: f64, d1: f64, d2: f64) -> Result<Self> {
        for x in [x1, x2] {
            if !(x >= 0.0) || !x.is_finite() {
                return Err(invalid(format!("levels must be finite and >= 0, got {x}")));
            }
        }
        for d in [d1, d2] {
            if !(d >= 0.0) || !d.is_finite() {
                return Err(invalid(format!("window widths must be finite and >= 0, got {d}")));
            }
        }
        Ok(Self { x: [x1, x2], d: [d1, d2] })
    }

    pub fn square(x: f64, d: f64) -> Result<Self> {
        Self::new(x, x, d, d)
    }

    pub fn contains(&self, v: [f64; 2]) -> bool {
        (0..2).all(|i| v[i] > self.x[i] && v[i] <= self.x[i] + self.d[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticValue {
    pub total: f64,
    pub cross_term: f64,
    pub diagonal_term: f64,
}

impl AsymptoticValue {
    fn new(cross_term: f64, diagonal_term: f64) -> Self {
        Self { total: cross_term + diagonal_term, cross_term, diagonal_term }
    }
}

/// Renewal grid together with the three tilted measures of a dependence structure.
#[derive(Debug, Clone)]
pub struct TiltedSet {
    pub grid: RenewalGrid,
    pub h1: TiltedMeasure,
    pub h2: TiltedMeasure,
    pub g: TiltedMeasure,
}

impl TiltedSet {
    pub fn new(spec: &DependenceSpec, t_max: f64, h: f64) -> Result<Self> {
        let grid = renewal_function(&spec.inter_arrival, t_max, h)?;
        let h1 = tilted_measure(&grid, WeightKind::H1, |s| spec.h(1, s))?;
        let h2 = tilted_measure(&grid, WeightKind::H2, |s| spec.h(2, s))?;
        let g = tilted_measure(&grid, WeightKind::G, |s| spec.g(s))?;
        Ok(Self { grid, h1, h2, g })
    }

    pub fn rhs(&self, spec: &DependenceSpec, bx: &Box2, r: f64, t: f64) -> Result<AsymptoticValue> {
        theorem21_rhs(spec.claim(1), spec.claim(2), bx, r, t, &self.h1, &self.h2, &self.g)
    }
}

fn check_measures(t: f64, ms: [&TiltedMeasure; 3]) -> Result<(f64, usize)> {
    let h = ms[0].step;
    let len = ms[0].increments.len();
    if ms.iter().any(|m| m.step != h || m.increments.len() != len) {
        return Err(Error::InvalidGrid("tilted measures live on different grids".into()));
    }
    let t_max = (len - 1) as f64 * h;
    if !(t >= 0.0) || t > t_max * (1.0 + 1e-12) {
        return Err(Error::OutOfRange(format!("t={t} outside the grid [0, {t_max}]")));
    }
    Ok((h, ((t / h + 1e-9).floor() as usize).min(len - 1)))
}

/// `P(X e^{-r s} in x + (0, d])`.
fn discounted_window(f: &Marginal, x: f64, d: f64, r: f64, s: f64) -> f64 {
    f.scaled_window(x, d, (r * s).exp())
}

/// Node index of the lower end of cell `i`; cell 0 is the point `{0}`.
fn lower(i: usize) -> usize {
    i.saturating_sub(1)
}

/// Cell midpoint in half steps.
fn mid_half(i: usize) -> usize {
    if i == 0 {
        0
    } else {
        2 * i - 1
    }
}

/// Right-hand side of the local asymptotic formula at time `t`, snapped down to a grid node.
#[allow(clippy::too_many_arguments)]
pub fn theorem21_rhs(
    f1: &Marginal,
    f2: &Marginal,
    bx: &Box2,
    r: f64,
    t: f64,
    l1: &TiltedMeasure,
    l2: &TiltedMeasure,
    lg: &TiltedMeasure,
) -> Result<AsymptoticValue> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(invalid(format!("force of interest must be >= 0, got {r}")));
    }
    let (h, k) = check_measures(t, [l1, l2, lg])?;
    let half: Vec<[f64; 2]> = (0..=4 * k.max(1))
        .map(|q| {
            let s = q as f64 * h / 2.0;
            [discounted_window(f1, bx.x[0], bx.d[0], r, s), discounted_window(f2, bx.x[1], bx.d[1], r, s)]
        })
        .collect();

    let mut cross = 0.0;
    for i in 0..=k {
        let du = l1.increments[i];
        if du == 0.0 {
            continue;
        }
        let mi = mid_half(i);
        let mut inner = 0.0;
        for j in 0..=k {
            if lower(i) + lower(j) >= k && !(i == 0 && j == 0) {
                break;
            }
            let mj = mid_half(j);
            let s = mi + mj;
            inner += (half[s][0] * half[mj][1] + half[mi][0] * half[s][1]) * l2.increments[j];
        }
        cross += inner * du;
    }
    let diag: f64 = (0..=k).map(|i| half[mid_half(i)][0] * half[mid_half(i)][1] * lg.increments[i]).sum();
    Ok(AsymptoticValue::new(cross, diag))
}

/// The `r = 0` reduction `F1 F2 [2 int lambda~_2(t - u) lambda~_1(du) + lambda~~(t)]` on the same cells.
pub fn theorem21_rhs_r0(
    f1: &Marginal,
    f2: &Marginal,
    bx: &Box2,
    t: f64,
    l1: &TiltedMeasure,
    l2: &TiltedMeasure,
    lg: &TiltedMeasure,
) -> Result<AsymptoticValue> {
    let (_, k) = check_measures(t, [l1, l2, lg])?;
    let p = f1.interval_prob(bx.x[0], bx.d[0]) * f2.interval_prob(bx.x[1], bx.d[1]);
    let conv = if k == 0 {
        l1.increments[0] * l2.increments[0]
    } else {
        (0..=k).map(|i| l1.increments[i] * l2.values[k - lower(i)]).sum()
    };
    Ok(AsymptoticValue::new(2.0 * p * conv, p * lg.values[k]))
}

/// Window of the discounted claims equivalent to `-U(x, t) in (0, d]` under linear premiums.
pub fn net_loss_window_shift(bx: &Box2, rates: [f64; 2], r: f64, t: f64) -> Box2 {
    let premium = if r == 0.0 { t } else { -(-r * t).exp_m1() / r };
    let shrink = (-r * t).exp();
    Box2 {
        x: [bx.x[0] + rates[0] * premium, bx.x[1] + rates[1] * premium],
        d: [bx.d[0] * shrink, bx.d[1] * shrink],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub t: f64,
    pub bx: Box2,
    pub r: f64,
    pub asymptotic: AsymptoticValue,
    pub empirical: Estimate,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformityScan {
    pub rows: Vec<ScanRow>,
    /// Times dropped for lying within two grid steps of the lower end of `Lambda`.
    pub excluded: Vec<f64>,
    /// `(x, max over t of |ratio - 1|)` in the order of the level grid.
    pub max_deviation: Vec<(f64, f64)>,
    /// Whether `max_deviation` is non-increasing along the level grid.
    pub shrinking: bool,
    /// Some row rests on fewer than 30 hits.
    pub unreliable: bool,
}

/// Asymptotic versus Monte Carlo on a `(t, x)` grid with square boxes of width `d`.
pub fn uniformity_scan(
    config: &ModelConfig,
    tilted: &TiltedSet,
    t_grid: &[f64],
    x_grid: &[f64],
    d: [f64; 2],
) -> Result<UniformityScan> {
    if t_grid.is_empty() || x_grid.is_empty() {
        return Err(Error::InvalidGrid("t and x grids must be nonempty".into()));
    }
    let support = lambda_support(&config.spec.inter_arrival);
    let cutoff = support.lower + 2.0 * tilted.grid.step();
    let (times, excluded): (Vec<f64>, Vec<f64>) = t_grid.iter().partition(|&&t| t >= cutoff);
    let boxes = x_grid.iter().map(|&x| Box2::new(x, x, d[0], d[1])).collect::<Result<Vec<_>>>()?;
    let empirical = scan_discounted_claims(config, &times, &boxes)?;
    let mut rows = Vec::new();
    for (ti, &t) in times.iter().enumerate() {
        for (bi, bx) in boxes.iter().enumerate() {
            let asymptotic = tilted.rhs(&config.spec, bx, config.r, t)?;
            let est = empirical[ti][bi].clone();
            let ratio = est.value / asymptotic.total;
            rows.push(ScanRow { t, bx: *bx, r: config.r, asymptotic, empirical: est, ratio });
        }
    }
    let max_deviation: Vec<(f64, f64)> = x_grid
        .iter()
        .enumerate()
        .map(|(bi, &x)| {
            let dev = rows
                .iter()
                .skip(bi)
                .step_by(boxes.len())
                .map(|row| (row.ratio - 1.0).abs())
                .fold(0.0, f64::max);
            (x, dev)
        })
        .collect();
    let shrinking = max_deviation.windows(2).all(|w| w[1].1 <= w[0].1);
    let unreliable = rows.iter().any(|row| row.empirical.unreliable);
    Ok(UniformityScan { rows, excluded, max_deviation, shrinking, unreliable })
}
