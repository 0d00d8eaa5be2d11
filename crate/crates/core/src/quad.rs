use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;

fn rule16() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(16).unwrap()))
}

/// 16-point Gauss-Legendre on `[a, b]`.
pub(crate) fn gl16(a: f64, b: f64, f: impl FnMut(f64) -> f64) -> f64 {
    rule16().integrate(a, b, f)
}

/// Composite 16-point Gauss-Legendre over `panels` equal panels.
pub(crate) fn gl16_composite(a: f64, b: f64, panels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels).map(|k| gl16(a + k as f64 * h, a + (k + 1) as f64 * h, &mut f)).sum()
}

/// Tensor 16x16 Gauss-Legendre over `[a1, b1] x [a2, b2]`.
pub(crate) fn gl16_2d(a1: f64, b1: f64, a2: f64, b2: f64, mut f: impl FnMut(f64, f64) -> f64) -> f64 {
    gl16(a1, b1, |x| gl16(a2, b2, |y| f(x, y)))
}
