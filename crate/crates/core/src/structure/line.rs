//! Quadrature rules along the energy line `k⁰ ↦ G(k⁰, k⃗)` at fixed `k⃗`.
//!
//! Each rule lists energies with Kronrod and embedded Gauss weights that
//! already contain the propagator kernel, so a pairing is `Σ w_i G(e_i)`.
//! Poles are treated by placing nodes symmetrically around them; the kernel
//! weight uses the exact offset `e - p = ±s`.

use crate::kinematics::CutoffSpec;
use crate::quadrature::k15_nodes;
use crate::scalar::{lit, Real};

use super::QuadSettings;

#[derive(Clone, Debug, Default)]
pub(crate) struct LineRule<T> {
    pub e: Vec<T>,
    /// Offset from the pole of the window the node belongs to.
    pub xi: Vec<T>,
    pub wk: Vec<T>,
    pub wg: Vec<T>,
}

impl<T: Real> LineRule<T> {
    pub fn len(&self) -> usize {
        self.e.len()
    }

    fn push(&mut self, e: T, xi: T, wk: T, wg: T) {
        self.e.push(e);
        self.xi.push(xi);
        self.wk.push(wk);
        self.wg.push(wg);
    }
}

/// Panel count for an interval of length `len`.
pub(crate) fn panel_count<T: Real>(len: T, scale: T, freq: T, s: &QuadSettings<T>, min: usize) -> usize {
    let by_scale = (len / (scale * s.panel_widths)).to_f64().unwrap_or(1.0).ceil();
    let by_freq = if freq > T::zero() {
        (len * freq / (T::TAU() * s.periods_per_panel)).to_f64().unwrap_or(1.0).ceil()
    } else {
        0.0
    };
    (by_scale.max(by_freq) as usize).max(min).max(1)
}

/// Appends nodes of `[lo, hi]` with kernel `kern(e)`; an endpoint flagged
/// singular gets the substitution `e = end ± L u²`, which absorbs an inverse
/// square-root edge.
#[allow(clippy::too_many_arguments)]
fn piece<T: Real>(
    rule: &mut LineRule<T>,
    lo: T,
    hi: T,
    pole: T,
    panels: usize,
    sing_lo: bool,
    sing_hi: bool,
    kern: &impl Fn(T) -> T,
) {
    if hi <= lo {
        return;
    }
    if sing_lo && sing_hi {
        let mid = (lo + hi) * lit(0.5);
        let n = (panels + 1) / 2;
        piece(rule, lo, mid, pole, n, true, false, kern);
        piece(rule, mid, hi, pole, n, false, true, kern);
        return;
    }
    let len = hi - lo;
    if !sing_lo && !sing_hi {
        for nd in k15_nodes(lo, hi, panels) {
            let k = kern(nd.x);
            rule.push(nd.x, nd.x - pole, nd.w * k, nd.wg * k);
        }
        return;
    }
    for nd in k15_nodes(T::zero(), T::one(), panels) {
        let u = nd.x;
        let e = if sing_lo { lo + len * u * u } else { hi - len * u * u };
        let jac = len * u * lit(2.0);
        let k = kern(e) * jac;
        rule.push(e, e - pole, nd.w * k, nd.wg * k);
    }
}

/// Splits `[lo, hi]` at interior edges and appends each part.
#[allow(clippy::too_many_arguments)]
fn segment<T: Real>(
    rule: &mut LineRule<T>,
    lo: T,
    hi: T,
    pole: T,
    edges: &[T],
    scale: T,
    freq: T,
    s: &QuadSettings<T>,
    min_panels: usize,
    kern: &impl Fn(T) -> T,
) {
    if hi <= lo {
        return;
    }
    let mut cuts: Vec<T> = edges.iter().cloned().filter(|&e| e > lo && e < hi).collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let is_edge = |x: T| edges.iter().any(|&e| e == x);
    let mut x0 = lo;
    for x1 in cuts.into_iter().chain(std::iter::once(hi)) {
        let n = panel_count(x1 - x0, scale, freq, s, min_panels);
        piece(rule, x0, x1, pole, n, is_edge(x0), is_edge(x1), kern);
        x0 = x1;
    }
}

/// Largest fold radius around `p` that keeps clear of every edge.
fn clear_of_edges<T: Real>(p: T, delta: T, edges: &[T]) -> T {
    edges.iter().fold(delta, |d, &e| d.min((e - p).abs()))
}

/// Appends symmetric nodes `p ± s`, `s ∈ (0, δ)`, with kernel `kern_off(e, e - p)`.
fn fold_piece<T: Real>(rule: &mut LineRule<T>, pole: T, delta: T, panels: usize, kern_off: &impl Fn(T, T) -> T) {
    if delta <= T::zero() {
        return;
    }
    for nd in k15_nodes(T::zero(), delta, panels) {
        let s = nd.x;
        let kp = kern_off(pole + s, s);
        let km = kern_off(pole - s, -s);
        rule.push(pole + s, s, nd.w * kp, nd.wg * kp);
        rule.push(pole - s, -s, nd.w * km, nd.wg * km);
    }
}

/// Rule for `PV ∫_a^b G(e) de / (e² - ω²)`; `freq` is an oscillation hint for
/// multipliers carried inside `G`, `edges` are known inverse square-root edges of `G`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn full_pv_rule<T: Real>(
    a: T,
    b: T,
    omega: T,
    edges: &[T],
    scale: T,
    freq: T,
    s: &QuadSettings<T>,
) -> LineRule<T> {
    let mut rule = LineRule::default();
    if b <= a {
        return rule;
    }
    let mut folds: Vec<(T, T)> = Vec::new();
    for p in [-omega, omega] {
        if p > a && p < b {
            let delta = clear_of_edges(p, (p - a).min(b - p).min(omega), edges);
            if delta > T::zero() {
                folds.push((p, delta));
            }
        }
    }
    let kern = |e: T| T::one() / ((e - omega) * (e + omega));
    let nearest_pole = |e: T| if e < T::zero() { -omega } else { omega };
    let mut cursor = a;
    for &(p, delta) in &folds {
        let lo = p - delta;
        segment(&mut rule, cursor, lo, nearest_pole((cursor + lo) * lit(0.5)), edges, scale, freq, s, s.min_panels, &kern);
        let n = panel_count(delta, scale, freq, s, s.min_panels);
        fold_piece(&mut rule, p, delta, n, &|e: T, off: T| T::one() / (off * (e + p)));
        cursor = p + delta;
    }
    segment(&mut rule, cursor, b, nearest_pole((cursor + b) * lit(0.5)), edges, scale, freq, s, s.min_panels, &kern);
    rule
}

/// Rule for `∫ φ(e² - ω²) G(e) de / (e² - ω²)` over one χ window (`side` = ±1),
/// clipped to `[a, b]`. Offsets are measured from the window's pole `side·ω`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn window_rule<T: Real>(
    a: T,
    b: T,
    omega: T,
    side: i8,
    edges: &[T],
    cutoff: &CutoffSpec<T>,
    scale: T,
    freq: T,
    s: &QuadSettings<T>,
) -> LineRule<T> {
    let mut rule = LineRule::default();
    let w2 = omega * omega;
    let eps = cutoff.eps;
    let half = eps * lit(0.5);
    let (outer_lo, plat_lo, plat_hi, outer_hi) = ((w2 - eps).sqrt(), (w2 - half).sqrt(), (w2 + half).sqrt(), (w2 + eps).sqrt());
    let (edges4, p) = if side > 0 {
        ([outer_lo, plat_lo, plat_hi, outer_hi], omega)
    } else {
        ([-outer_hi, -plat_hi, -plat_lo, -outer_lo], -omega)
    };
    let lo = edges4[0].max(a);
    let hi = edges4[3].min(b);
    if hi <= lo {
        return rule;
    }
    let phi_kern = |e: T, off: T| cutoff.phi(off * (e + p)) / (off * (e + p));
    let kern = |e: T| phi_kern(e, e - p);
    let plateau_lo = edges4[1].max(lo);
    let plateau_hi = edges4[2].min(hi);
    let mut pieces: Vec<(T, T, bool)> = Vec::new();
    if p > plateau_lo && p < plateau_hi {
        let delta = clear_of_edges(p, (p - plateau_lo).min(plateau_hi - p), edges);
        let n = panel_count(delta, scale, freq, s, s.min_panels);
        fold_piece(&mut rule, p, delta, n, &phi_kern);
        pieces.push((plateau_lo, p - delta, false));
        pieces.push((p + delta, plateau_hi, false));
    } else {
        pieces.push((plateau_lo, plateau_hi, false));
    }
    pieces.push((lo, edges4[1].min(hi), true));
    pieces.push((edges4[2].max(lo), hi, true));
    for (x0, x1, transition) in pieces {
        let min = if transition { s.phi_panels } else { s.min_panels };
        segment(&mut rule, x0, x1, p, edges, scale, freq, s, min, &kern);
    }
    rule
}

/// Piecewise Chebyshev–Lobatto interpolant of a complex function on `[a, b]`.
pub(crate) struct ChebLine<T> {
    a: T,
    h: T,
    panels: usize,
    npts: usize,
    nodes: Vec<T>,
    bary: Vec<T>,
}

impl<T: Real> ChebLine<T> {
    pub fn new(a: T, b: T, panels: usize, npts: usize) -> Self {
        let panels = panels.max(1);
        let npts = npts.max(3);
        let h = (b - a) / lit(panels as f64);
        let m = npts - 1;
        // reference nodes on [0, 1], increasing
        let nodes: Vec<T> = (0..npts)
            .map(|k| (T::one() - (T::PI() * lit(k as f64) / lit(m as f64)).cos()) * lit(0.5))
            .collect();
        let bary: Vec<T> = (0..npts)
            .map(|k| {
                let sgn = if k % 2 == 0 { T::one() } else { -T::one() };
                if k == 0 || k == m {
                    sgn * lit(0.5)
                } else {
                    sgn
                }
            })
            .collect();
        ChebLine { a, h, panels, npts, nodes, bary }
    }

    /// All sample abscissae, panel by panel (shared end points repeated).
    pub fn sample_points(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.panels * self.npts);
        for p in 0..self.panels {
            let x0 = self.a + self.h * lit(p as f64);
            for &u in &self.nodes {
                out.push(x0 + self.h * u);
            }
        }
        out
    }

    /// Interpolates from `values` (aligned with [`Self::sample_points`]).
    pub fn eval<V>(&self, values: &[V], x: T) -> V
    where
        V: Copy + std::ops::Add<Output = V> + std::ops::Mul<T, Output = V> + std::ops::Div<T, Output = V>,
    {
        let u = (x - self.a) / self.h;
        let p = u.floor().to_f64().unwrap_or(0.0).clamp(0.0, (self.panels - 1) as f64) as usize;
        let local = u - lit(p as f64);
        let vals = &values[p * self.npts..(p + 1) * self.npts];
        let mut num: Option<V> = None;
        let mut den = T::zero();
        for k in 0..self.npts {
            let diff = local - self.nodes[k];
            if diff == T::zero() {
                return vals[k];
            }
            let w = self.bary[k] / diff;
            num = Some(match num {
                None => vals[k] * w,
                Some(acc) => acc + vals[k] * w,
            });
            den = den + w;
        }
        num.unwrap() / den
    }
}
