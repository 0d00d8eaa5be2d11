//! Dependence structures for the triple `(X1, X2, theta)`.
//!
//! Every structure is a trivariate copula `C(u, v, w)` whose arguments are the
//! probability levels of the first claim, the second claim and the inter-arrival
//! time. [`DependenceSpec`] binds a copula to the three marginals and answers the
//! conditional local probabilities behind the asymptotic dependence functions
//! `h_i`, `g` and `g_ij`.
//!
//! Local windows are carried in level space as `(lo, mass)` so that tail windows
//! with tiny mass keep full relative precision.

use std::fmt;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::marginals::{LocalWindow, Marginal};
use crate::quad::{gl16, gl16_2d, gl16_composite};

const REJECTION_CAP: usize = 10_000;
/// Windows wider than this are differenced in closed form; narrower ones are integrated.
const NARROW: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Copula {
    Independent,
    /// Sarmanov law with FGM kernels `phi(t) = 1 - 2t` on the level scale.
    SarmanovFgm { g12: f64, g13: f64, g23: f64 },
    FrankTri { gamma: f64 },
    /// `C_gamma(uv, w)`, a bivariate Frank copula evaluated at the product of the claim levels.
    NestedFrankProduct { gamma: f64 },
}

impl fmt::Display for Copula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Copula::Independent => write!(f, "independent"),
            Copula::SarmanovFgm { g12, g13, g23 } => write!(f, "sarmanov_fgm({g12},{g13},{g23})"),
            Copula::FrankTri { gamma } => write!(f, "frank_tri({gamma})"),
            Copula::NestedFrankProduct { gamma } => write!(f, "nested_frank_product({gamma})"),
        }
    }
}

/// Level-space window `(lo, lo + mass]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UWindow {
    pub lo: f64,
    pub mass: f64,
}

impl UWindow {
    pub fn new(lo: f64, mass: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lo) || !(mass >= 0.0) || lo + mass > 1.0 + 1e-12 {
            return Err(invalid(format!("level window ({lo}, {lo}+{mass}] leaves [0, 1]")));
        }
        Ok(Self { lo, mass })
    }

    pub fn of(marginal: &Marginal, w: &LocalWindow) -> Self {
        Self { lo: marginal.cdf(w.x), mass: marginal.local_prob(w) }
    }

    pub fn hi(&self) -> f64 {
        (self.lo + self.mass).min(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitBox {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

struct Frank {
    g: f64,
    cap_a: f64,
}

impl Frank {
    fn new(g: f64) -> Self {
        Self { g, cap_a: (-g).exp_m1() }
    }

    fn a(&self, t: f64) -> f64 {
        (-self.g * t).exp_m1()
    }

    /// `a(lo + mass) - a(lo)` without cancellation.
    fn da(&self, win: &UWindow) -> f64 {
        (-self.g * win.lo).exp() * (-self.g * win.mass).exp_m1()
    }

    /// Bivariate Frank `P(U in win | W = w)`.
    fn cond_given_w(&self, win: &UWindow, w: f64) -> f64 {
        let ca = self.cap_a;
        let b = self.a(w);
        let (al, ah) = (self.a(win.lo), self.a(win.hi()));
        (-self.g * w).exp() * ca * self.da(win) / ((ca + al * b) * (ca + ah * b))
    }

    fn h(&self, w: f64) -> f64 {
        self.g * (self.g * w).exp() / self.g.exp_m1()
    }

    /// Bivariate Frank density.
    fn density(&self, k: f64, w: f64) -> f64 {
        let d = self.cap_a + self.a(k) * self.a(w);
        -self.g * self.cap_a * (-self.g * (k + w)).exp() / (d * d)
    }
}

fn frank_tri_pair(fr: &Frank, w1: &UWindow, w2: &UWindow, w: f64) -> f64 {
    let ca2 = fr.cap_a * fr.cap_a;
    let bb = fr.a(w);
    let (a1, a2) = (fr.a(w1.lo), fr.a(w1.hi()));
    let (b1, b2) = (fr.a(w2.lo), fr.a(w2.hi()));
    let p = |b: f64| (ca2 + a2 * b * bb) * (ca2 + a1 * b * bb);
    (-fr.g * w).exp() * ca2 * fr.da(w1) * fr.da(w2) * (ca2 * ca2 - a1 * a2 * b1 * b2 * bb * bb) / (p(b1) * p(b2))
}

fn frank_tri_given_vw(fr: &Frank, win: &UWindow, v: f64, w: f64) -> f64 {
    let ca = fr.cap_a;
    let ca2 = ca * ca;
    let c = fr.a(v) * fr.a(w);
    let (al, ah) = (fr.a(win.lo), fr.a(win.hi()));
    let k = |a: f64| ca2 + a * c;
    let k1 = ca2 + ca * c;
    let (kl, kh) = (k(al), k(ah));
    k1 * k1 / ca * fr.da(win) * (ca2 * ca2 - c * c * ah * al) / (kh * kh * kl * kl)
}

/// `phi(k) = dC(u, v, w)/dw` at `k = uv` for the nested copula, with its first two derivatives in `k`.
fn nested_phi(fr: &Frank, k: f64, w: f64) -> (f64, f64, f64) {
    let (ca, g) = (fr.cap_a, fr.g);
    let bb = fr.a(w);
    let e = (-g * w).exp();
    let a = fr.a(k);
    let den = ca + a * bb;
    let ek = (-g * k).exp();
    let (a1, a2) = (-g * ek, g * g * ek);
    let psi1 = ca / (den * den);
    let psi2 = -2.0 * ca * bb / (den * den * den);
    (e * a / den, e * psi1 * a1, e * (psi2 * a1 * a1 + psi1 * a2))
}

fn nested_pair(fr: &Frank, w1: &UWindow, w2: &UWindow, w: f64) -> f64 {
    let (u1, u2, v1, v2) = (w1.lo, w1.hi(), w2.lo, w2.hi());
    let phi = |k: f64| nested_phi(fr, k, w);
    // narrow windows are integrated over the offset from `lo`, so the exact mass sets the length
    match (w1.mass > NARROW, w2.mass > NARROW) {
        (true, true) => phi(u2 * v2).0 - phi(u1 * v2).0 - phi(u2 * v1).0 + phi(u1 * v1).0,
        (false, true) => gl16(0.0, w1.mass, |t| {
            let u = u1 + t;
            v2 * phi(u * v2).1 - v1 * phi(u * v1).1
        }),
        (true, false) => gl16(0.0, w2.mass, |t| {
            let v = v1 + t;
            u2 * phi(u2 * v).1 - u1 * phi(u1 * v).1
        }),
        (false, false) => gl16_2d(0.0, w1.mass, 0.0, w2.mass, |s, t| {
            let k = (u1 + s) * (v1 + t);
            let (_, d1, d2) = phi(k);
            d1 + k * d2
        }),
    }
}

fn nested_given_vw(fr: &Frank, win: &UWindow, v: f64, w: f64) -> f64 {
    let base = fr.density(v, w);
    let (lo, hi) = (win.lo, win.hi());
    if win.mass > NARROW {
        return (hi * fr.density(hi * v, w) - lo * fr.density(lo * v, w)) / base;
    }
    let g = fr.g;
    let bw = fr.a(w);
    gl16(0.0, win.mass, |t| {
        let k = (lo + t) * v;
        let d = fr.cap_a + fr.a(k) * bw;
        fr.density(k, w) * (1.0 + k * (-g + 2.0 * g * (-g * k).exp() * bw / d))
    }) / base
}

/// `P(W <= w | U = u, V = v)` for the nested copula.
fn nested_w_cdf(fr: &Frank, k: f64, w: f64) -> f64 {
    let aw = fr.a(w);
    let d = fr.cap_a + fr.a(k) * aw;
    (-fr.g * k).exp() * aw / d * (1.0 + fr.g * k * (aw - fr.cap_a) / d)
}

fn fgm_kappa(win: &UWindow) -> f64 {
    1.0 - 2.0 * win.lo - win.mass
}

impl Copula {
    pub fn independent() -> Self {
        Copula::Independent
    }

    pub fn sarmanov_fgm(g12: f64, g13: f64, g23: f64) -> Result<Self> {
        for (name, g) in [("gamma12", g12), ("gamma13", g13), ("gamma23", g23)] {
            if !(-1.0..=1.0).contains(&g) {
                return Err(invalid(format!("{name} must lie in [-1, 1], got {g}")));
            }
        }
        if !(1.0 + g12 + g13 + g23 > 0.0) {
            return Err(invalid(format!("FGM requires 1 + g12 + g13 + g23 > 0, got {}", 1.0 + g12 + g13 + g23)));
        }
        // the density is multilinear in the kernels, so its minimum sits on a sign vertex
        let vertices = [g12 - g13 - g23, -g12 + g13 - g23, -g12 - g13 + g23];
        if let Some(v) = vertices.iter().find(|&&v| 1.0 + v < 0.0) {
            return Err(invalid(format!("FGM density is negative on a kernel vertex (1 + {v} < 0)")));
        }
        Ok(Copula::SarmanovFgm { g12, g13, g23 })
    }

    pub fn frank_tri(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(invalid(format!("Frank parameter must be > 0, got {gamma}")));
        }
        Ok(Copula::FrankTri { gamma })
    }

    pub fn nested_frank_product(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(invalid(format!("nested Frank parameter must be > 0, got {gamma}")));
        }
        Ok(Copula::NestedFrankProduct { gamma })
    }

    /// Whether `C` is a proper copula. The nested construction has density
    /// `h(0)(1 - gamma)` at `(1, 1, 0)` and fails for `gamma > 1`.
    pub fn is_copula(&self) -> bool {
        match self {
            Copula::NestedFrankProduct { gamma } => *gamma <= 1.0,
            _ => true,
        }
    }

    pub fn warnings(&self) -> Vec<String> {
        match self {
            Copula::NestedFrankProduct { gamma } if *gamma > 1.0 => vec![format!(
                "nested Frank-product with gamma={gamma} > 1 has negative C-volumes near (1, 1, 0); sampling is refused"
            )],
            Copula::NestedFrankProduct { gamma } if *gamma == 1.0 => {
                vec!["nested Frank-product at gamma=1 has a_* = 0; Condition 3 lower bound degenerates".into()]
            }
            _ => Vec::new(),
        }
    }

    pub fn joint_cdf(&self, u: f64, v: f64, w: f64) -> f64 {
        let (u, v, w) = (u.clamp(0.0, 1.0), v.clamp(0.0, 1.0), w.clamp(0.0, 1.0));
        match *self {
            Copula::Independent => u * v * w,
            Copula::SarmanovFgm { g12, g13, g23 } => {
                let (ub, vb, wb) = (1.0 - u, 1.0 - v, 1.0 - w);
                u * v * w * (1.0 + g12 * ub * vb + g13 * ub * wb + g23 * vb * wb)
            }
            Copula::FrankTri { gamma } => {
                let fr = Frank::new(gamma);
                -(fr.a(u) * fr.a(v) * fr.a(w) / (fr.cap_a * fr.cap_a)).ln_1p() / gamma
            }
            Copula::NestedFrankProduct { gamma } => {
                let fr = Frank::new(gamma);
                -(fr.a(u * v) * fr.a(w) / fr.cap_a).ln_1p() / gamma
            }
        }
    }

    /// Alternating eight-corner sum of [`Copula::joint_cdf`].
    pub fn c_volume(&self, b: &UnitBox) -> f64 {
        let mut total = 0.0;
        for corner in 0..8u32 {
            let pick = |k: usize| if corner >> k & 1 == 1 { b.hi[k] } else { b.lo[k] };
            let sign = if (3 - corner.count_ones()) % 2 == 0 { 1.0 } else { -1.0 };
            total += sign * self.joint_cdf(pick(0), pick(1), pick(2));
        }
        total
    }

    /// Smallest C-volume over `n` seeded boxes with uniformly drawn corners.
    pub fn min_random_volume(&self, n: usize, seed: u64) -> f64 {
        let mut rng = crate::rng::substream(seed, 0, crate::rng::PILOT);
        (0..n)
            .map(|_| {
                let mut b = UnitBox { lo: [0.0; 3], hi: [0.0; 3] };
                for k in 0..3 {
                    let (p, q): (f64, f64) = (rng.random(), rng.random());
                    b.lo[k] = p.min(q);
                    b.hi[k] = p.max(q);
                }
                self.c_volume(&b)
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn fgm_density(g12: f64, g13: f64, g23: f64, u: f64, v: f64, w: f64) -> f64 {
        let (pu, pv, pw) = (1.0 - 2.0 * u, 1.0 - 2.0 * v, 1.0 - 2.0 * w);
        1.0 + g12 * pu * pv + g13 * pu * pw + g23 * pv * pw
    }

    /// Draws the levels `(u, v, w)`.
    pub fn sample_levels<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<[f64; 3]> {
        match *self {
            Copula::Independent => Ok([rng.random(), rng.random(), rng.random()]),
            Copula::SarmanovFgm { g12, g13, g23 } => {
                let envelope = 1.0 + g12.abs() + g13.abs() + g23.abs();
                for _ in 0..REJECTION_CAP {
                    let (u, v, w): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
                    if rng.random::<f64>() * envelope <= Self::fgm_density(g12, g13, g23, u, v, w) {
                        return Ok([u, v, w]);
                    }
                }
                Err(Error::RejectionCap(REJECTION_CAP))
            }
            Copula::FrankTri { gamma } => {
                let fr = Frank::new(gamma);
                let ca = fr.cap_a;
                let u: f64 = rng.random();
                let p: f64 = rng.random();
                let v = -(p * ca / (p + (1.0 - p) * (-gamma * u).exp())).ln_1p() / gamma;
                let q: f64 = rng.random();
                let c = fr.a(u) * fr.a(v);
                let k1 = ca * ca + c * ca;
                let tau = q * ca / (k1 * k1);
                let beta = 2.0 * tau * ca * ca * c - 1.0;
                let disc = (beta * beta - 4.0 * tau * tau * c * c * ca.powi(4)).max(0.0);
                let y = 2.0 * tau * ca.powi(4) / (-beta + disc.sqrt());
                let w = (-y.max(ca).ln_1p() / gamma).clamp(0.0, 1.0);
                Ok([u, v, w])
            }
            Copula::NestedFrankProduct { gamma } => {
                if gamma > 1.0 {
                    return Err(invalid(format!("nested Frank-product with gamma={gamma} > 1 is not a copula")));
                }
                let fr = Frank::new(gamma);
                let (u, v, p): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
                let k = u * v;
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                while hi - lo > 1e-12 {
                    let mid = 0.5 * (lo + hi);
                    if nested_w_cdf(&fr, k, mid) < p {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok([u, v, 0.5 * (lo + hi)])
            }
        }
    }

    /// `P(U_i in win | W = w)` where `U_1 = U`, `U_2 = V`.
    pub fn cond_given_w(&self, i: usize, win: &UWindow, w: f64) -> f64 {
        match *self {
            Copula::Independent => win.mass,
            Copula::SarmanovFgm { g13, g23, .. } => {
                let gi3 = if i == 1 { g13 } else { g23 };
                win.mass * (1.0 + gi3 * (1.0 - 2.0 * w) * fgm_kappa(win))
            }
            Copula::FrankTri { gamma } | Copula::NestedFrankProduct { gamma } => Frank::new(gamma).cond_given_w(win, w),
        }
    }

    /// `P(U in win1, V in win2 | W = w)`.
    pub fn cond_pair_given_w(&self, win1: &UWindow, win2: &UWindow, w: f64) -> f64 {
        match *self {
            Copula::Independent => win1.mass * win2.mass,
            Copula::SarmanovFgm { g12, g13, g23 } => {
                let (k1, k2, pw) = (fgm_kappa(win1), fgm_kappa(win2), 1.0 - 2.0 * w);
                win1.mass * win2.mass * (1.0 + g12 * k1 * k2 + g13 * k1 * pw + g23 * k2 * pw)
            }
            Copula::FrankTri { gamma } => frank_tri_pair(&Frank::new(gamma), win1, win2, w),
            Copula::NestedFrankProduct { gamma } => nested_pair(&Frank::new(gamma), win1, win2, w),
        }
    }

    /// `P(U_i in win | U_j = v, W = w)` with `j` the other claim.
    pub fn cond_given_vw(&self, i: usize, win: &UWindow, v: f64, w: f64) -> f64 {
        match *self {
            Copula::Independent => win.mass,
            Copula::SarmanovFgm { g12, g13, g23 } => {
                let (gi3, gj3) = if i == 1 { (g13, g23) } else { (g23, g13) };
                let (pv, pw, k) = (1.0 - 2.0 * v, 1.0 - 2.0 * w, fgm_kappa(win));
                win.mass * (1.0 + g12 * k * pv + gi3 * k * pw + gj3 * pv * pw) / (1.0 + gj3 * pv * pw)
            }
            Copula::FrankTri { gamma } => frank_tri_given_vw(&Frank::new(gamma), win, v, w),
            Copula::NestedFrankProduct { gamma } => nested_given_vw(&Frank::new(gamma), win, v, w),
        }
    }

    /// `h_i` as a function of the inter-arrival level `w = G(s)`.
    pub fn h_level(&self, i: usize, w: f64) -> f64 {
        match *self {
            Copula::Independent => 1.0,
            Copula::SarmanovFgm { g13, g23, .. } => {
                let gi3 = if i == 1 { g13 } else { g23 };
                1.0 - gi3 * (1.0 - 2.0 * w)
            }
            Copula::FrankTri { gamma } | Copula::NestedFrankProduct { gamma } => Frank::new(gamma).h(w),
        }
    }

    pub fn g_level(&self, w: f64) -> f64 {
        match *self {
            Copula::Independent => 1.0,
            Copula::SarmanovFgm { g12, g13, g23 } => 1.0 + g12 - (g13 + g23) * (1.0 - 2.0 * w),
            Copula::FrankTri { gamma } => {
                let e = (gamma * w).exp();
                gamma * gamma * (2.0 * e * e - e) / gamma.exp_m1().powi(2)
            }
            Copula::NestedFrankProduct { gamma } => {
                let fr = Frank::new(gamma);
                fr.h(w) * (1.0 - gamma + 2.0 * gamma * (gamma * w).exp_m1() / gamma.exp_m1())
            }
        }
    }

    /// `g_ij` as a function of the other claim's level `v = F_j(z)` and `w = G(s)`.
    pub fn g_ij_level(&self, i: usize, v: f64, w: f64) -> f64 {
        match *self {
            Copula::Independent => 1.0,
            Copula::SarmanovFgm { g12, g13, g23 } => {
                let (gi3, gj3) = if i == 1 { (g13, g23) } else { (g23, g13) };
                let (pv, pw) = (1.0 - 2.0 * v, 1.0 - 2.0 * w);
                1.0 + (-g12 * pv - gi3 * pw) / (1.0 + gj3 * pv * pw)
            }
            Copula::FrankTri { gamma } => {
                let fr = Frank::new(gamma);
                let c = fr.a(v) * fr.a(w);
                gamma / gamma.exp_m1() * (fr.cap_a - c) / (fr.cap_a + c)
            }
            Copula::NestedFrankProduct { gamma } => {
                let fr = Frank::new(gamma);
                let ev = (-gamma * v).exp();
                let aw = fr.a(w);
                1.0 + gamma * v * (-fr.cap_a + (ev + 1.0) * aw) / (fr.cap_a + (ev - 1.0) * aw)
            }
        }
    }

    /// Denominator of the FGM `g_ij` ratio, `1 + g_j3 phi_j phi_3`; `None` for other variants.
    fn g_ij_denominator(&self, i: usize, v: f64, w: f64) -> Option<f64> {
        match *self {
            Copula::SarmanovFgm { g13, g23, .. } => {
                let gj3 = if i == 1 { g23 } else { g13 };
                Some(1.0 + gj3 * (1.0 - 2.0 * v) * (1.0 - 2.0 * w))
            }
            _ => None,
        }
    }
}

/// The nested-copula `g` in the form printed alongside the construction; kept to
/// document that it disagrees with the exact limit used by [`Copula::g_level`].
pub fn nested_g_as_printed(gamma: f64, w: f64) -> f64 {
    let (e1, e2) = ((-gamma).exp(), (-2.0 * gamma).exp());
    let eg = (gamma * w).exp();
    (gamma * (e1 - e2) * eg + gamma * gamma * (e1 + e2) * (eg - 1.0)) / (1.0 - e1).powi(2)
}

/// Grid extrema of the dependence functions over `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub horizon: f64,
    pub b_lo: f64,
    pub b_hi: f64,
    pub d_lo: f64,
    pub d_hi: f64,
    pub a_lo: f64,
    pub a_hi: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub violations: Vec<String>,
}

impl BoundsReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// A copula bound to the marginals of `(X1, X2, theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DependenceSpec {
    pub copula: Copula,
    pub claims: [Marginal; 2],
    pub inter_arrival: Marginal,
}

fn check_index(i: usize) -> Result<()> {
    if i == 1 || i == 2 {
        Ok(())
    } else {
        Err(invalid(format!("claim index must be 1 or 2, got {i}")))
    }
}

/// Level interval `(F(s-), F(s)]` carried by the event `{X = s}`; `None` if `s` is not a possible value.
fn levels(m: &Marginal, s: f64) -> Option<(f64, f64)> {
    if !(s >= m.support_lower()) || !s.is_finite() {
        return None;
    }
    if m.is_continuous() {
        let c = m.cdf(s);
        return Some((c, c));
    }
    let mass: f64 = m.atoms().iter().filter(|a| a.0 == s).map(|a| a.1).sum();
    if mass > 0.0 {
        let c = m.cdf(s);
        Some((c - mass, c))
    } else {
        None
    }
}

fn average(lv: (f64, f64), f: impl Fn(f64) -> f64) -> f64 {
    let (lo, hi) = lv;
    if hi - lo <= 1e-15 {
        f(hi)
    } else {
        gl16_composite(lo, hi, 4, f) / (hi - lo)
    }
}

fn default_windows(m: &Marginal) -> Vec<LocalWindow> {
    let levels = [0.0, 0.1, 0.5, 0.9, 0.99, 0.999, 0.9999];
    let widths = [0.1, 1.0, 10.0, f64::INFINITY];
    let mut out = Vec::new();
    for p in levels {
        let x = m.quantile_unchecked(p);
        for d in widths {
            if let Ok(w) = LocalWindow::new(x, d) {
                if m.local_prob(&w) > 0.0 {
                    out.push(w);
                }
            }
        }
    }
    out
}

impl DependenceSpec {
    pub fn new(copula: Copula, claim1: Marginal, claim2: Marginal, inter_arrival: Marginal) -> Self {
        Self { copula, claims: [claim1, claim2], inter_arrival }
    }

    pub fn claim(&self, i: usize) -> &Marginal {
        &self.claims[i - 1]
    }

    pub fn sample_triple<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(f64, f64, f64)> {
        let [u, v, w] = self.copula.sample_levels(rng)?;
        Ok((
            self.claims[0].quantile_unchecked(u),
            self.claims[1].quantile_unchecked(v),
            self.inter_arrival.quantile_unchecked(w),
        ))
    }

    fn theta_levels(&self, s: f64) -> Result<(f64, f64)> {
        levels(&self.inter_arrival, s)
            .ok_or_else(|| Error::OutOfRange(format!("s={s} is not a possible inter-arrival value")))
    }

    /// `P(X_i in x + Delta | theta = s)`.
    pub fn cond_local_prob_given_theta(&self, i: usize, w: &LocalWindow, s: f64) -> Result<f64> {
        check_index(i)?;
        let win = UWindow::of(self.claim(i), w);
        let lv = self.theta_levels(s)?;
        Ok(average(lv, |t| self.copula.cond_given_w(i, &win, t)))
    }

    /// `P(X1 in x1 + Delta1, X2 in x2 + Delta2 | theta = s)`.
    pub fn cond_pair_local_prob_given_theta(&self, w1: &LocalWindow, w2: &LocalWindow, s: f64) -> Result<f64> {
        let (a, b) = (UWindow::of(&self.claims[0], w1), UWindow::of(&self.claims[1], w2));
        let lv = self.theta_levels(s)?;
        Ok(average(lv, |t| self.copula.cond_pair_given_w(&a, &b, t)))
    }

    /// `P(X_i in x + Delta | X_j = z, theta = s)`.
    pub fn cond_local_prob_given_claim_theta(&self, i: usize, w: &LocalWindow, z: f64, s: f64) -> Result<f64> {
        check_index(i)?;
        let win = UWindow::of(self.claim(i), w);
        let lw = self.theta_levels(s)?;
        let lv = levels(self.claim(3 - i), z)
            .ok_or_else(|| Error::OutOfRange(format!("z={z} is not a possible claim value")))?;
        Ok(average(lv, |v| average(lw, |t| self.copula.cond_given_vw(i, &win, v, t))))
    }

    /// `h_i(s)`; equals one when `s` is not a possible value of `theta`.
    pub fn h(&self, i: usize, s: f64) -> f64 {
        match levels(&self.inter_arrival, s) {
            Some(lv) => average(lv, |t| self.copula.h_level(i, t)),
            None => 1.0,
        }
    }

    pub fn g(&self, s: f64) -> f64 {
        match levels(&self.inter_arrival, s) {
            Some(lv) => average(lv, |t| self.copula.g_level(t)),
            None => 1.0,
        }
    }

    pub fn g_ij(&self, i: usize, z: f64, s: f64) -> f64 {
        match (levels(self.claim(3 - i), z), levels(&self.inter_arrival, s)) {
            (Some(lv), Some(lw)) => average(lv, |v| average(lw, |t| self.copula.g_ij_level(i, v, t))),
            _ => 1.0,
        }
    }

    fn possible_s<'a>(&'a self, s_grid: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        s_grid.iter().copied().filter(move |&s| levels(&self.inter_arrival, s).is_some())
    }

    pub fn bounds_over_horizon(&self, horizon: f64, s_grid: &[f64], z_grid: &[f64]) -> Result<BoundsReport> {
        let ss: Vec<f64> = self.possible_s(s_grid).filter(|&s| s <= horizon).collect();
        if ss.is_empty() || z_grid.is_empty() {
            return Err(Error::InvalidGrid(format!("no grid points in [0, {horizon}] or empty z grid")));
        }
        let mut violations = Vec::new();
        let extent = |vals: &[f64]| {
            vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
        };
        let hs: Vec<f64> = [1, 2].iter().flat_map(|&i| ss.iter().map(move |&s| self.h(i, s))).collect();
        let gs: Vec<f64> = ss.iter().map(|&s| self.g(s)).collect();
        let mut gijs = Vec::new();
        for i in [1, 2] {
            for &z in z_grid {
                for &s in &ss {
                    gijs.push(self.g_ij(i, z, s));
                    if let (Some(lv), Some(lw)) = (levels(self.claim(3 - i), z), levels(&self.inter_arrival, s)) {
                        if let Some(den) = self.copula.g_ij_denominator(i, lv.1, lw.1) {
                            if den.abs() < 1e-12 {
                                violations.push(format!("g_{i}{} denominator vanishes at z={z}, s={s}", 3 - i));
                            }
                        }
                    }
                }
            }
        }
        let (b_lo, b_hi) = extent(&hs);
        let (d_lo, d_hi) = extent(&gs);
        let (a_lo, a_hi) = extent(&gijs);
        for (name, lo, hi) in [("b", b_lo, b_hi), ("d", d_lo, d_hi), ("a", a_lo, a_hi)] {
            if !(lo > 0.0) {
                violations.push(format!("{name}_* = {lo} is not positive on [0, {horizon}]"));
            }
            if !hi.is_finite() {
                violations.push(format!("{name}^* is not finite on [0, {horizon}]"));
            }
        }
        if !self.copula.is_copula() {
            violations.extend(self.copula.warnings());
        }

        let windows = [default_windows(&self.claims[0]), default_windows(&self.claims[1])];
        let mut c1 = 0.0f64;
        let mut c3 = 0.0f64;
        for i in [1, 2] {
            for w in &windows[i - 1] {
                let base = self.claim(i).local_prob(w);
                for &s in &ss {
                    c1 = c1.max(self.cond_local_prob_given_theta(i, w, s)? / base - 1.0);
                    for &z in z_grid {
                        if levels(self.claim(3 - i), z).is_some() {
                            c3 = c3.max(self.cond_local_prob_given_claim_theta(i, w, z, s)? / base - 1.0);
                        }
                    }
                }
            }
        }
        let mut c2 = 0.0f64;
        for w1 in &windows[0] {
            for w2 in &windows[1] {
                let base = self.claims[0].local_prob(w1) * self.claims[1].local_prob(w2);
                for &s in &ss {
                    c2 = c2.max(self.cond_pair_local_prob_given_theta(w1, w2, s)? / base - 1.0);
                }
            }
        }
        Ok(BoundsReport { horizon, b_lo, b_hi, d_lo, d_hi, a_lo, a_hi, c1, c2, c3, violations })
    }

    fn window_mass(&self, i: usize, x: f64, d: f64) -> Result<(LocalWindow, f64)> {
        let w = LocalWindow::new(x, d)?;
        let base = self.claim(i).local_prob(&w);
        if !(base > 0.0) {
            return Err(Error::Degenerate(format!("F_{i} puts no mass on ({x}, {x}+{d}]")));
        }
        Ok((w, base))
    }

    /// For each `x`, `sup_s |P(X_i in x + Delta | theta = s) / (F_i(x + Delta) h_i(s)) - 1|`.
    pub fn condition_ratio_scan(&self, i: usize, s_grid: &[f64], x_grid: &[f64], d: f64) -> Result<Vec<f64>> {
        check_index(i)?;
        x_grid
            .iter()
            .map(|&x| {
                let (w, base) = self.window_mass(i, x, d)?;
                self.possible_s(s_grid).try_fold(0.0f64, |acc, s| {
                    let r = self.cond_local_prob_given_theta(i, &w, s)? / (base * self.h(i, s));
                    Ok(acc.max((r - 1.0).abs()))
                })
            })
            .collect()
    }

    /// Condition 2 analogue with both windows at `(x, x + d]`.
    pub fn condition2_ratio_scan(&self, s_grid: &[f64], x_grid: &[f64], d: f64) -> Result<Vec<f64>> {
        x_grid
            .iter()
            .map(|&x| {
                let (w1, b1) = self.window_mass(1, x, d)?;
                let (w2, b2) = self.window_mass(2, x, d)?;
                self.possible_s(s_grid).try_fold(0.0f64, |acc, s| {
                    let r = self.cond_pair_local_prob_given_theta(&w1, &w2, s)? / (b1 * b2 * self.g(s));
                    Ok(acc.max((r - 1.0).abs()))
                })
            })
            .collect()
    }

    /// Condition 3 analogue: supremum over `s` and `z` of the relative gap to `F_i g_ij`.
    pub fn condition3_ratio_scan(
        &self,
        i: usize,
        s_grid: &[f64],
        z_grid: &[f64],
        x_grid: &[f64],
        d: f64,
    ) -> Result<Vec<f64>> {
        check_index(i)?;
        x_grid
            .iter()
            .map(|&x| {
                let (w, base) = self.window_mass(i, x, d)?;
                let mut worst = 0.0f64;
                for s in self.possible_s(s_grid) {
                    for &z in z_grid {
                        if levels(self.claim(3 - i), z).is_none() {
                            continue;
                        }
                        let r = self.cond_local_prob_given_claim_theta(i, &w, z, s)? / (base * self.g_ij(i, z, s));
                        worst = worst.max((r - 1.0).abs());
                    }
                }
                Ok(worst)
            })
            .collect()
    }

    /// `E h_i(theta)`, which the law of total probability pins to one.
    pub fn mean_h_check(&self, i: usize) -> f64 {
        let g = &self.inter_arrival;
        gl16_composite(0.0, 1.0, 64, |p| self.h(i, g.quantile_unchecked(p)))
    }
}
