//! A piecewise-linear density that is locally subexponential while its local
//! distribution is not almost decreasing.
//!
//! Breakpoints are `a_0 = 0`, `a_n = 2^{n^2}`, `b_n = a_n + a_{m_n} ln^2(n + 1)`
//! and `mid_n = (a_{n+1} + b_n) / 2`, with `m_n` the least integer `k` such that
//! `k >= sqrt(5/6) n`. The raw density `f0` takes the anchor values
//! `f0(a_n) = f0(mid_n) = 2 a_n^{-3}` and `f0(b_n) = f0(a_n) / ln(n + 1)` and is
//! linear in between. On the first segment `[0, a_1]` the density is held
//! constant at `f0(0) = f0(a_1) = 0.25`.
//!
//! The table stops at `a_{n_max + 1}` with `n_max <= 8`, so every breakpoint
//! is at most `2^81` and every density value stays far above the smallest
//! normal double. The mass beyond the table is bounded by
//! `sum_{n > n_max} f0(a_n) a_{n+1} = sum 2^{-2n^2 + 2n + 2}`.

use crate::error::{invalid, Error, Result};

pub const MAX_BLOCKS: u32 = 8;

/// Raw density value on the first segment `[0, a_1]`.
pub const F0_AT_ZERO: f64 = 0.25;

/// `m_n = min{k : k >= sqrt(5/6) n}`, computed exactly as the least `k` with `6k^2 >= 5n^2`.
pub fn m_index(n: u32) -> u32 {
    let target = 5 * (n as u64) * (n as u64);
    let mut k = ((5.0f64 / 6.0).sqrt() * n as f64).floor() as u64;
    while 6 * k * k < target {
        k += 1;
    }
    while k > 0 && 6 * (k - 1) * (k - 1) >= target {
        k -= 1;
    }
    k as u32
}

fn a_value(n: u32) -> f64 {
    2f64.powi((n * n) as i32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BreakpointTable {
    n_max: u32,
    /// `a[0..=n_max+1]`.
    a: Vec<f64>,
    /// `m[n]` for `1 <= n <= n_max`; `m[0]` is unused.
    m: Vec<u32>,
    b: Vec<f64>,
    mid: Vec<f64>,
    knots: Vec<(f64, f64)>,
}

impl BreakpointTable {
    pub fn new(n_max: u32) -> Result<Self> {
        if n_max == 0 || n_max > MAX_BLOCKS {
            return Err(invalid(format!("n_max must lie in 1..={MAX_BLOCKS}, got {n_max}")));
        }
        let a: Vec<f64> = (0..=n_max + 1).map(|n| if n == 0 { 0.0 } else { a_value(n) }).collect();
        let mut m = vec![0; n_max as usize + 1];
        let mut b = vec![f64::NAN; n_max as usize + 1];
        let mut mid = vec![f64::NAN; n_max as usize + 1];
        let mut knots = vec![(0.0, F0_AT_ZERO)];
        for n in 1..=n_max {
            let i = n as usize;
            let ln = ((n + 1) as f64).ln();
            let fa = 2.0 * a[i].powi(-3);
            m[i] = m_index(n);
            b[i] = a[i] + a_value(m[i]) * ln * ln;
            mid[i] = 0.5 * (a[i + 1] + b[i]);
            knots.push((a[i], fa));
            knots.push((b[i], fa / ln));
            knots.push((mid[i], fa));
        }
        let end = a[n_max as usize + 1];
        knots.push((end, 2.0 * end.powi(-3)));
        Ok(Self { n_max, a, m, b, mid, knots })
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    /// `a_n` for `0 <= n <= n_max + 1`.
    pub fn a(&self, n: u32) -> f64 {
        self.a[n as usize]
    }

    pub fn m(&self, n: u32) -> u32 {
        self.m[n as usize]
    }

    pub fn b(&self, n: u32) -> f64 {
        self.b[n as usize]
    }

    pub fn mid(&self, n: u32) -> f64 {
        self.mid[n as usize]
    }

    /// `(x, f0(x))` anchor points in increasing `x`.
    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// Right end of the tabulated support, `a_{n_max + 1}`.
    pub fn end(&self) -> f64 {
        self.a[self.n_max as usize + 1]
    }

    /// Block index `n` with `x` in `(a_n, a_{n+1}]`; `0` for `x <= a_1`.
    pub fn block_of(&self, x: f64) -> u32 {
        (1..=self.n_max).rev().find(|&n| x > self.a(n)).unwrap_or(0)
    }

    pub fn is_ordered(&self) -> bool {
        (1..=self.n_max).all(|n| {
            self.a(n) < self.b(n) && self.b(n) < self.mid(n) && self.mid(n) < self.a(n + 1)
        })
    }

    /// Raw (unnormalized) density `f0(x)`.
    pub fn density_raw(&self, x: f64) -> Result<f64> {
        if x > self.end() {
            return Err(Error::OutOfRange(format!("x={x} lies beyond a_(n_max+1)={}", self.end())));
        }
        if x < 0.0 {
            return Ok(0.0);
        }
        Ok(interpolate(&self.knots, x))
    }

    /// Certified upper bound on `∫_{a_{n_max+1}}^∞ f0`.
    ///
    /// Block `n` holds at most `f0(a_n) a_{n+1} = 2^{-2n^2 + 2n + 2}` and the ratio of
    /// consecutive terms is `2^{-4n}`, so the sum is below a geometric series.
    pub fn tail_bound_raw(&self) -> f64 {
        let n = (self.n_max + 1) as i32;
        let first = 2f64.powi(-2 * n * n + 2 * n + 2);
        first / (1.0 - 2f64.powi(-4 * n))
    }
}

fn interpolate(knots: &[(f64, f64)], x: f64) -> f64 {
    let idx = knots.partition_point(|k| k.0 <= x);
    if idx == 0 {
        return knots[0].1;
    }
    if idx == knots.len() {
        return knots[idx - 1].1;
    }
    let (x0, y0) = knots[idx - 1];
    let (x1, y1) = knots[idx];
    y0 + (y1 - y0) * ((x - x0) / (x1 - x0))
}

/// Normalized density `f = f0 / a` with closed-form CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleDensity {
    table: BreakpointTable,
    normalizer: f64,
    /// Raw area to the left of each knot.
    prefix: Vec<f64>,
    /// Raw area to the right of each knot, within the table.
    suffix: Vec<f64>,
}

/// `I(x) = ∫_0^x f(x - y) f(y) dy` split as `2 I_1 + I_2` around `cut = a_{m_n}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvolutionSplit {
    pub total: f64,
    pub i1: f64,
    pub i2: f64,
    pub cut: f64,
}

impl CounterexampleDensity {
    pub fn new(table: BreakpointTable) -> Self {
        let areas: Vec<f64> = table
            .knots
            .windows(2)
            .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
            .collect();
        let mut prefix = vec![0.0; table.knots.len()];
        for (i, area) in areas.iter().enumerate() {
            prefix[i + 1] = prefix[i] + area;
        }
        let mut suffix = vec![0.0; table.knots.len()];
        for i in (0..areas.len()).rev() {
            suffix[i] = suffix[i + 1] + areas[i];
        }
        let normalizer = prefix[areas.len()];
        Self { table, normalizer, prefix, suffix }
    }

    pub fn with_blocks(n_max: u32) -> Result<Self> {
        Ok(Self::new(BreakpointTable::new(n_max)?))
    }

    pub fn table(&self) -> &BreakpointTable {
        &self.table
    }

    /// `a = ∫_0^{a_{n_max+1}} f0`.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Bound on the mass of the normalized density beyond the table.
    pub fn tail_bound(&self) -> f64 {
        self.table.tail_bound_raw() / self.normalizer
    }

    pub fn density(&self, x: f64) -> Result<f64> {
        Ok(self.table.density_raw(x)? / self.normalizer)
    }

    fn segment(&self, x: f64) -> usize {
        self.table.knots.partition_point(|k| k.0 <= x).saturating_sub(1).min(self.table.knots.len() - 2)
    }

    /// Raw area of the segment starting at knot `i`, restricted to `[x_i, x]`.
    fn partial_area(&self, i: usize, x: f64) -> f64 {
        let (x0, y0) = self.table.knots[i];
        let fx = interpolate(&self.table.knots, x);
        0.5 * (x - x0) * (y0 + fx)
    }

    pub fn cdf_exact(&self, x: f64) -> Result<f64> {
        if x > self.table.end() {
            return Err(Error::OutOfRange(format!("x={x} lies beyond a_(n_max+1)={}", self.table.end())));
        }
        Ok(self.cdf_clamped(x))
    }

    pub(crate) fn cdf_clamped(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= self.table.end() {
            return 1.0;
        }
        let i = self.segment(x);
        ((self.prefix[i] + self.partial_area(i, x)) / self.normalizer).min(1.0)
    }

    /// `1 - F(x)` summed from the right, so far-tail values keep full precision.
    pub(crate) fn sf_clamped(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        if x >= self.table.end() {
            return 0.0;
        }
        let i = self.segment(x);
        let seg_total = self.prefix[i + 1] - self.prefix[i];
        let right_part = (seg_total - self.partial_area(i, x)).max(0.0);
        ((self.suffix[i + 1] + right_part) / self.normalizer).clamp(0.0, 1.0)
    }

    pub(crate) fn quantile_bisect(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        let target = p * self.normalizer;
        let i = self.prefix.partition_point(|&c| c < target).saturating_sub(1).min(self.prefix.len() - 2);
        let (mut lo, mut hi) = (self.table.knots[i].0, self.table.knots[i + 1].0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 1e-12 * hi.max(1.0) || mid <= lo || mid >= hi {
                break;
            }
            if self.prefix[i] + self.partial_area(i, mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// `f(mid_n) / f(b_n)`; equals `ln(n + 1)` by construction.
    pub fn almost_decreasing_witness(&self, n: u32) -> Result<f64> {
        if n == 0 || n + 1 > self.table.n_max {
            return Err(invalid(format!("witness index must lie in 1..={}, got {n}", self.table.n_max - 1)));
        }
        Ok(self.density(self.table.mid(n))? / self.density(self.table.b(n))?)
    }

    /// `f(x - t) / f(x)`.
    pub fn long_tail_ratio(&self, x: f64, t: f64) -> Result<f64> {
        if !(t >= 0.0) || t > x {
            return Err(invalid(format!("need 0 <= t <= x, got t={t}, x={x}")));
        }
        let fx = self.density(x)?;
        if fx <= 0.0 {
            return Err(Error::Degenerate(format!("zero density at x={x}")));
        }
        Ok(self.density(x - t)? / fx)
    }

    /// Knots of `y -> f(x - y)` on `[0, x]`, in increasing `y`.
    ///
    /// Positions are `x - x_i` for the knots `x_i < x`; values are the exact anchors,
    /// so no `x - y` rounding enters the reflected density.
    fn reflected_knots(&self, x: f64) -> Vec<(f64, f64)> {
        let knots = &self.table.knots;
        let mut out = vec![(0.0, interpolate(knots, x))];
        out.extend(knots.iter().rev().filter(|k| k.0 < x).map(|&(xi, fi)| (x - xi, fi)));
        out
    }

    fn product_integral(&self, reflected: &[(f64, f64)], x: f64, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let knots = &self.table.knots;
        let mut cuts: Vec<f64> = vec![lo, hi];
        cuts.extend(knots.iter().map(|k| k.0).filter(|&p| p > lo && p < hi));
        cuts.extend(reflected.iter().map(|k| k.0).filter(|&p| p > lo && p < hi));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let f = |y: f64| interpolate(knots, y);
        let g = |y: f64| interpolate(reflected, y.min(x));
        // both factors are linear on each piece, so Simpson's rule is exact
        cuts.windows(2)
            .map(|w| {
                let (l, r) = (w[0], w[1]);
                let m = 0.5 * (l + r);
                (r - l) / 6.0 * (f(l) * g(l) + 4.0 * f(m) * g(m) + f(r) * g(r))
            })
            .sum::<f64>()
            / (self.normalizer * self.normalizer)
    }

    /// Exact piecewise-quadratic evaluation of `I(x)` and of its split around `a_{m_n}`,
    /// where `n` is the block with `x` in `(a_n, a_{n+1}]`.
    pub fn convolution(&self, x: f64) -> Result<ConvolutionSplit> {
        if x < 2.0 || x > self.table.end() {
            return Err(Error::OutOfRange(format!(
                "convolution needs 2 <= x <= {}, got {x}",
                self.table.end()
            )));
        }
        let reflected = self.reflected_knots(x);
        let half = 0.5 * x;
        let n = self.table.block_of(x);
        let cut = if n == 0 { half } else { self.table.a(self.table.m(n)).min(half) };
        // the integrand is symmetric about x/2; on [0, x/2] every reflected knot is exact
        let i1 = self.product_integral(&reflected, x, 0.0, cut);
        let i2 = 2.0 * self.product_integral(&reflected, x, cut, half);
        Ok(ConvolutionSplit { total: 2.0 * i1 + i2, i1, i2, cut })
    }

    /// `I(x) / (2 f(x))`; tends to one for a locally subexponential density.
    pub fn self_convolution_ratio(&self, x: f64) -> Result<f64> {
        let split = self.convolution(x)?;
        Ok(split.total / (2.0 * self.density(x)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn density() -> CounterexampleDensity {
        CounterexampleDensity::with_blocks(8).unwrap()
    }

    #[test]
    fn m_index_matches_ceiling_formula() {
        assert_eq!(m_index(1), 1);
        assert_eq!(m_index(11), 11);
        assert_eq!(m_index(12), 11);
        for n in 1..200u32 {
            let direct = ((5.0f64 / 6.0).sqrt() * n as f64).ceil() as u32;
            assert_eq!(m_index(n), direct, "n={n}");
            let lower = (5.0f64 / 6.0).sqrt() * n as f64;
            let upper = (5.0f64 / 6.0).sqrt() * (n + 1) as f64 + 1.0;
            assert!(lower <= m_index(n) as f64 && (m_index(n) as f64) < upper);
        }
    }

    #[test]
    fn breakpoint_examples() {
        let t = BreakpointTable::new(8).unwrap();
        assert_eq!(t.a(3), 512.0);
        let ln2 = std::f64::consts::LN_2;
        assert!((t.b(1) - (2.0 + 2.0 * ln2 * ln2)).abs() < 1e-14);
        assert!((t.b(1) - 2.96088).abs() < 1e-4);
        assert!(t.is_ordered());
        assert!(BreakpointTable::new(9).is_err());
        assert!(BreakpointTable::new(0).is_err());
        assert_eq!(t.end(), 2f64.powi(81));
    }

    #[test]
    fn density_anchor_values() {
        let t = BreakpointTable::new(8).unwrap();
        assert_eq!(t.density_raw(2.0).unwrap(), 0.25);
        assert_eq!(t.density_raw(0.0).unwrap(), 0.25);
        let fb = t.density_raw(t.b(1)).unwrap();
        assert!((fb - 0.25 / std::f64::consts::LN_2).abs() < 1e-15);
        assert!((fb - 0.36067).abs() < 1e-5);
        assert_eq!(t.density_raw(t.mid(2)).unwrap(), 2.0 / 4096.0);
        assert!(t.density_raw(t.end() * 1.5).is_err());
    }

    #[test]
    fn normalization_and_tail() {
        let f = density();
        assert!(f.normalizer() > 0.0 && f.normalizer().is_finite());
        // reference value from 60-digit arithmetic
        assert!((f.normalizer() - 3.779_608_639_543_623).abs() < 1e-13);
        assert!(f.table().tail_bound_raw() < 2f64.powi(-110));
        assert!(f.tail_bound() < 2f64.powi(-110));
        assert_eq!(f.cdf_exact(0.0).unwrap(), 0.0);
        let top = f.cdf_exact(f.table().end()).unwrap();
        assert!((1.0 - top).abs() <= f.tail_bound() + 1e-15);
        assert!(f.cdf_exact(f.table().end() * 2.0).is_err());
    }

    #[test]
    fn cdf_derivative_matches_density() {
        let f = density();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            // log-uniform over the first few blocks, where a finite difference resolves
            let x = 2f64.powf(rng.random_range(-3.0..9.0));
            let h = 1e-6 * x.max(1.0);
            let knots = f.table().knots();
            if knots.iter().any(|k| (k.0 - x).abs() < 2.0 * h) {
                continue;
            }
            let fd = (f.cdf_exact(x + h).unwrap() - f.cdf_exact(x - h).unwrap()) / (2.0 * h);
            let dens = f.density(x).unwrap();
            assert!((fd - dens).abs() < 1e-8, "x={x} fd={fd} f={dens}");
        }
    }

    #[test]
    fn survival_complements_cdf() {
        let f = density();
        for x in [0.5, 3.0, 100.0, 5000.0, 1e6] {
            assert!((f.sf_clamped(x) + f.cdf_clamped(x) - 1.0).abs() < 1e-14);
        }
        // far tail keeps relative precision
        let x = f.table().a(7);
        let sf = f.sf_clamped(x);
        assert!(sf > 0.0 && sf < 1e-20);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let f = density();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let p: f64 = rng.random_range(0.001..0.999);
            let x = f.quantile_bisect(p);
            assert!((f.cdf_clamped(x) - p).abs() < 1e-12, "p={p}");
        }
    }

    #[test]
    fn witness_equals_log() {
        let f = density();
        for n in 1..=7u32 {
            let w = f.almost_decreasing_witness(n).unwrap();
            let expect = ((n + 1) as f64).ln();
            assert!((w - expect).abs() <= 1e-12 * expect, "n={n}");
        }
        assert!(f.almost_decreasing_witness(8).is_err());
        assert!(f.almost_decreasing_witness(0).is_err());
    }

    #[test]
    fn long_tail_ratio_trends_to_one() {
        let f = density();
        assert_eq!(f.long_tail_ratio(100.0, 0.0).unwrap(), 1.0);
        let r: Vec<f64> = (3..=5).map(|n| f.long_tail_ratio(f.table().a(n), 1.0).unwrap()).collect();
        // 60-digit reference values
        let reference = [138.477_527_717, 66.495_001_393_8, 9.056_494_382_57];
        for (got, want) in r.iter().zip(reference) {
            assert!((got - want).abs() < 1e-8 * want, "{got} vs {want}");
        }
        assert!(r[0] > r[1] && r[1] > r[2] && r[2] > 1.0);
        // at b_n the left neighbour differs by the J_n1 slope only
        for n in 4..=7u32 {
            let b = f.table().b(n);
            let ratio = f.long_tail_ratio(b, 1.0).unwrap();
            let t = f.table();
            let slope = (t.density_raw(t.a(n)).unwrap() - t.density_raw(b).unwrap()) / (b - t.a(n));
            let expect = 1.0 + slope / t.density_raw(b).unwrap();
            assert!((ratio - expect).abs() < 1e-12 * expect);
        }
    }

    #[test]
    fn convolution_matches_high_precision_reference() {
        let f = density();
        // reference ratios from an independent 60-digit Simpson evaluation
        let reference = [(2, 200.994_564_198), (3, 1383.093_006_73), (4, 1180.825_890_73), (5, 171.251_799_261), (6, 6.384_706_349_88)];
        for (n, want) in reference {
            let got = f.self_convolution_ratio(f.table().a(n)).unwrap();
            assert!((got - want).abs() < 1e-8 * want, "n={n}: {got} vs {want}");
        }
    }

    #[test]
    fn convolution_split_is_consistent() {
        let f = density();
        for x in [16.0, 40.0, 512.0, 3000.0, f.table().a(5), f.table().a(7)] {
            let s = f.convolution(x).unwrap();
            assert!(s.i1 > 0.0 && s.i2 >= 0.0);
            assert!(s.i2 <= s.total && s.cut <= 0.5 * x);
        }
        // away from the rounding regime the unfolded integral over [0, x] agrees
        for x in [16.0, 40.0, 512.0, 3000.0] {
            let refl = f.reflected_knots(x);
            let full = f.product_integral(&refl, x, 0.0, x);
            let s = f.convolution(x).unwrap();
            assert!((full - s.total).abs() <= 1e-12 * s.total, "x={x}");
        }
    }

    #[test]
    fn convolution_lower_bound_from_small_jumps() {
        let f = density();
        for n in 2..=6u32 {
            let x = f.table().a(n);
            let cut = f.convolution(x).unwrap().cut;
            let fx = f.density(x).unwrap();
            // f(x - y) over y <= cut is minimised at a knot or an end point
            let mut ys = vec![0.0, cut];
            ys.extend(f.table().knots().iter().map(|k| x - k.0).filter(|&y| y > 0.0 && y < cut));
            let min_ratio = ys.iter().map(|&y| f.density(x - y).unwrap() / fx).fold(f64::INFINITY, f64::min);
            let bound = f.cdf_exact(cut).unwrap() * min_ratio;
            assert!(f.self_convolution_ratio(x).unwrap() >= bound, "n={n}");
        }
    }

    #[test]
    fn big_split_term_vanishes_relative_to_density() {
        let f = density();
        // reference I_2(a_n)/f(a_n), a_n taken in block n-1
        let reference = [
            (3, 1109.536_313),
            (4, 248.927_441_2),
            (5, 3.709_628_703),
            (6, 0.003_527_316_66),
            (7, 2.114_642_522e-7),
            (8, 7.959_990_188e-13),
        ];
        let mut prev = f64::INFINITY;
        for (n, want) in reference {
            let x = f.table().a(n);
            let got = f.convolution(x).unwrap().i2 / f.density(x).unwrap();
            assert!((got - want).abs() < 1e-6 * want, "n={n}: {got} vs {want}");
            assert!(got < prev);
            prev = got;
        }
    }
}
