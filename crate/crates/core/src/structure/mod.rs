//! Structure functions `Ĝ_n`: principal-value pairings of transfer-polynomial
//! weighted test functions with the on-shell reduced integrands.

mod line;
mod reduced;

use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{chi_t, omega_unchecked, CutoffSpec, FourVector, KinematicsError, LegLabel, ModelParams};
use crate::packet::{PacketError, WavePacket};
use crate::quadrature::{adaptive, k15_nodes, QuadError, Tolerance};
use crate::scalar::{cone, czero, expi, lit, CEstimate, Real};
use crate::transfer::{TransferError, TransferPolynomial};

use line::{full_pv_rule, panel_count, window_rule, ChebLine, LineRule};
pub use reduced::ReducedIntegrand;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StructureError {
    #[error("order {0} not supported here")]
    InvalidOrder(usize),
    #[error("expected {expected} legs, got {got}")]
    LegCount { expected: usize, got: usize },
    #[error("spectral density: {0}")]
    Spectral(String),
    #[error("quadrature tolerance exceeded: error {achieved:.3e} > {requested:.3e} (worst at k = {location:?})")]
    Tolerance { achieved: f64, requested: f64, location: Vec<f64> },
    #[error("root finder failed for energy target {target}")]
    RootNotConverged { target: f64 },
    #[error(transparent)]
    Packet(#[from] PacketError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

/// Quadrature resolution for structure-function evaluations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadSettings<T> {
    /// Half-width of every packet box, in packet widths.
    pub box_widths: T,
    /// Panel length in units of the smallest packet width.
    pub panel_widths: T,
    pub min_panels: usize,
    /// Minimum panels on each smooth-cutoff transition.
    pub phi_panels: usize,
    /// Oscillation periods resolved per panel.
    pub periods_per_panel: T,
    /// Chebyshev points per interpolation panel for time tables.
    pub interp_points: usize,
    pub root_tol: T,
    pub scan_points: usize,
    /// Free-leg nodes below this fraction of the largest are dropped.
    pub prune_rel: T,
    pub rel_tol: T,
    pub abs_tol: T,
    pub enforce_tolerance: bool,
}

impl<T: Real> Default for QuadSettings<T> {
    fn default() -> Self {
        QuadSettings {
            box_widths: lit(9.0),
            panel_widths: lit(2.0),
            min_panels: 2,
            phi_panels: 4,
            periods_per_panel: lit(0.5),
            interp_points: 21,
            root_tol: lit(1e-13),
            scan_points: 64,
            prune_rel: lit(1e-18),
            rel_tol: lit(1e-6),
            abs_tol: lit(1e-13),
            enforce_tolerance: true,
        }
    }
}

impl<T: Real> QuadSettings<T> {
    /// Same settings with all panels `factor` times finer.
    pub fn refined(&self, factor: T) -> Self {
        QuadSettings {
            panel_widths: self.panel_widths / factor,
            periods_per_panel: self.periods_per_panel / factor,
            ..*self
        }
    }
}

/// Källén–Lehmann continuum density `ρ(μ)` above `support_low`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectralDensity<T> {
    Zero,
    /// `c (μ - μ₀)² exp(-(μ - μ₀)/unit)` for `μ > μ₀`.
    Polynomial { support_low: T, c: T, unit: T },
    /// A smooth bump of height `height` supported on `[low, high]`.
    Bump { low: T, high: T, height: T },
}

impl<T: Real> SpectralDensity<T> {
    /// `0.1 (μ - 1.5m)² exp(-(μ - 1.5m)/m)`.
    pub fn default_for(m: T) -> Self {
        SpectralDensity::Polynomial { support_low: m * lit(1.5), c: lit(0.1), unit: m }
    }

    pub fn support_low(&self) -> Option<T> {
        match *self {
            SpectralDensity::Zero => None,
            SpectralDensity::Polynomial { support_low, .. } => Some(support_low),
            SpectralDensity::Bump { low, .. } => Some(low),
        }
    }

    pub fn support_high(&self) -> Option<T> {
        match *self {
            SpectralDensity::Bump { high, .. } => Some(high),
            _ => None,
        }
    }

    pub fn eval(&self, mu: T) -> T {
        match *self {
            SpectralDensity::Zero => T::zero(),
            SpectralDensity::Polynomial { support_low, c, unit } => {
                if mu <= support_low {
                    T::zero()
                } else {
                    let x = mu - support_low;
                    c * x * x * (-x / unit).exp()
                }
            }
            SpectralDensity::Bump { low, high, height } => {
                if mu <= low || mu >= high {
                    T::zero()
                } else {
                    let u = (mu - low) / (high - low) * lit(2.0) - T::one();
                    height * (T::one() - T::one() / (T::one() - u * u)).exp()
                }
            }
        }
    }

    pub fn validate(&self, params: &ModelParams<T>) -> Result<(), StructureError> {
        let Some(low) = self.support_low() else { return Ok(()) };
        let m2 = params.m * params.m;
        if !(low * low > m2 + params.eps_phi) {
            return Err(StructureError::Spectral(format!(
                "continuum threshold {} overlaps the cutoff window (need μ² > m² + ε)",
                low
            )));
        }
        match *self {
            SpectralDensity::Polynomial { c, unit, .. } if !(c >= T::zero() && unit > T::zero()) => {
                Err(StructureError::Spectral("coefficient must be ≥ 0 and unit > 0".into()))
            }
            SpectralDensity::Bump { low, high, height } if !(high > low && height >= T::zero()) => {
                Err(StructureError::Spectral("bump needs high > low and height ≥ 0".into()))
            }
            _ => Ok(()),
        }
    }
}

pub type MultiplierFn<T> = Arc<dyn Fn(&FourVector<T>) -> Complex<T> + Send + Sync>;

/// A per-leg multiplier `A_j(k)` applied to a test function before pairing.
#[derive(Clone)]
pub enum LegMultiplier<T> {
    One,
    /// The finite-time multiplier `χ_t` for a label.
    Chi { label: LegLabel, t: T },
    /// Any smooth function; `freq` bounds its oscillation in `k⁰`.
    Custom { f: MultiplierFn<T>, freq: T },
}

impl<T: Real> std::fmt::Debug for LegMultiplier<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LegMultiplier::One => write!(f, "One"),
            LegMultiplier::Chi { label, t } => write!(f, "Chi({label}, t={t})"),
            LegMultiplier::Custom { freq, .. } => write!(f, "Custom(freq={freq})"),
        }
    }
}

impl<T: Real> LegMultiplier<T> {
    pub fn eval(&self, k: &FourVector<T>, params: &ModelParams<T>) -> Complex<T> {
        match self {
            LegMultiplier::One => cone(),
            LegMultiplier::Chi { label, t } => chi_t(*label, k, *t, params, &params.cutoff()),
            LegMultiplier::Custom { f, .. } => f(k),
        }
    }
}

/// How the off-shell leg's energy line is integrated.
#[derive(Clone, Copy, Debug)]
pub(crate) enum LineKind<T> {
    /// `PV ∫ G(e)/(e² - ω²) de`; `freq` hints at oscillation inside `G`.
    FullPv { freq: T },
    /// `G(sign·ω)/(2ω)`.
    OnShell { sign: i8 },
    /// `∫ χ_t(e) G(e)/(e² - ω²) de` over both cutoff windows.
    Window { sigma: i32, t: T },
}

/// Time table of one finite-time term: `P(t) = Σ_i W_i e^{-iσ ξ_i t}`.
#[derive(Clone, Debug)]
pub struct PvTable<T> {
    pub sigma: i32,
    pub t_max: T,
    xi: Vec<T>,
    w: Vec<Complex<T>>,
    d_line: Vec<Complex<T>>,
    d_outer: Vec<Complex<T>>,
}

impl<T: Real> PvTable<T> {
    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    /// Value at time `t`; resolution is guaranteed for `|t| ≤ t_max`.
    pub fn eval(&self, t: T) -> CEstimate<T> {
        let s = lit::<T>(self.sigma as f64);
        let mut v = czero::<T>();
        let mut dl = czero::<T>();
        let mut dout = czero();
        for i in 0..self.xi.len() {
            let ph = expi(-s * self.xi[i] * t);
            v = v + self.w[i] * ph;
            dl = dl + self.d_line[i] * ph;
            dout = dout + self.d_outer[i] * ph;
        }
        CEstimate::new(v, dl.norm() + dout.norm())
    }

    /// Merges another table with the same `σ`.
    pub fn merge(&mut self, other: PvTable<T>) {
        debug_assert_eq!(self.sigma, other.sigma);
        self.xi.extend(other.xi);
        self.w.extend(other.w);
        self.d_line.extend(other.d_line);
        self.d_outer.extend(other.d_outer);
        self.t_max = self.t_max.min(other.t_max);
    }
}

/// Evaluates structure functions for one model.
#[derive(Clone, Debug)]
pub struct StructureEvaluator<T> {
    pub params: ModelParams<T>,
    pub rho: SpectralDensity<T>,
    pub settings: QuadSettings<T>,
}

struct TermBox<T> {
    lo: Vec<T>,
    hi: Vec<T>,
    e_lo: T,
    e_hi: T,
    scale: T,
}

struct OuterNode<T> {
    k: Vec<T>,
    wk: T,
    wg: T,
}

impl<T: Real> StructureEvaluator<T> {
    pub fn new(params: ModelParams<T>, rho: SpectralDensity<T>, settings: QuadSettings<T>) -> Result<Self, StructureError> {
        params.validate()?;
        rho.validate(&params)?;
        Ok(StructureEvaluator { params, rho, settings })
    }

    pub fn with_settings(&self, settings: QuadSettings<T>) -> Self {
        StructureEvaluator { settings, ..self.clone() }
    }

    fn cutoff(&self) -> CutoffSpec<T> {
        self.params.cutoff()
    }

    fn check_legs(&self, legs: &[WavePacket<T>], weight: Option<&TransferPolynomial<T>>) -> Result<(), StructureError> {
        for f in legs {
            f.validate(self.params.d)?;
        }
        if let Some(p) = weight {
            if p.order() != legs.len() {
                return Err(StructureError::LegCount { expected: p.order(), got: legs.len() });
            }
        }
        Ok(())
    }

    pub(crate) fn check_tolerance(&self, r: CEstimate<T>, location: &[T]) -> Result<CEstimate<T>, StructureError> {
        let s = &self.settings;
        let target = s.abs_tol.max(s.rel_tol * r.value.norm());
        if s.enforce_tolerance && !(r.abs_err <= target) {
            return Err(StructureError::Tolerance {
                achieved: r.abs_err.to_f64().unwrap_or(f64::NAN),
                requested: target.to_f64().unwrap_or(f64::NAN),
                location: location.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect(),
            });
        }
        Ok(r)
    }

    /// The reduced integrand `g_j` (0-based `j`) for a test-function product.
    pub fn reduced_integrand<'a>(
        &'a self,
        j: usize,
        legs: &'a [WavePacket<T>],
        weight: Option<&'a TransferPolynomial<T>>,
    ) -> Result<ReducedIntegrand<'a, T>, StructureError> {
        self.check_legs(legs, weight)?;
        ReducedIntegrand::new(self, j, legs, weight, None, true)
    }

    /// Box for `k_j` from its own packet and from momentum conservation.
    fn term_box(&self, j: usize, legs: &[WavePacket<T>]) -> Option<TermBox<T>> {
        let d = self.params.d;
        let w = self.settings.box_widths;
        let fj = &legs[j];
        let mut var = T::zero();
        let mut csum = FourVector::zero(d);
        let mut scale = fj.width;
        for (l, f) in legs.iter().enumerate() {
            scale = scale.min(f.width);
            if l != j {
                var = var + f.width * f.width;
                csum = csum + f.center;
            }
        }
        let hs = var.sqrt() * w;
        let hj = fj.width * w;
        let mut lo = Vec::with_capacity(d - 1);
        let mut hi = Vec::with_capacity(d - 1);
        for a in 1..d {
            let l = (fj.center.get(a) - hj).max(-csum.get(a) - hs);
            let h = (fj.center.get(a) + hj).min(-csum.get(a) + hs);
            if l >= h {
                return None;
            }
            lo.push(l);
            hi.push(h);
        }
        let e_lo = (fj.center.energy() - hj).max(-csum.energy() - hs);
        let e_hi = (fj.center.energy() + hj).min(-csum.energy() + hs);
        if e_lo >= e_hi {
            return None;
        }
        Some(TermBox { lo, hi, e_lo, e_hi, scale })
    }

    fn outer_nodes(&self, b: &TermBox<T>) -> Vec<OuterNode<T>> {
        let s = &self.settings;
        let mut grid = vec![OuterNode { k: Vec::new(), wk: T::one(), wg: T::one() }];
        for a in 0..b.lo.len() {
            let n = panel_count(b.hi[a] - b.lo[a], b.scale, T::zero(), s, s.min_panels);
            let nodes = k15_nodes(b.lo[a], b.hi[a], n);
            let mut next = Vec::with_capacity(grid.len() * nodes.len());
            for g in &grid {
                for nd in &nodes {
                    let mut k = g.k.clone();
                    k.push(nd.x);
                    next.push(OuterNode { k, wk: g.wk * nd.w, wg: g.wg * nd.wg });
                }
            }
            grid = next;
        }
        grid
    }

    fn line_rule(&self, kind: LineKind<T>, b: &TermBox<T>, omega: T, edges: &[T]) -> LineRule<T> {
        let s = &self.settings;
        match kind {
            LineKind::FullPv { freq } => full_pv_rule(b.e_lo, b.e_hi, omega, edges, b.scale, freq, s),
            LineKind::OnShell { sign } => {
                let e = if sign > 0 { omega } else { -omega };
                let mut r = LineRule::default();
                if e >= b.e_lo && e <= b.e_hi {
                    let w = T::one() / (omega * lit(2.0));
                    r.e.push(e);
                    r.xi.push(T::zero());
                    r.wk.push(w);
                    r.wg.push(w);
                }
                r
            }
            LineKind::Window { t, .. } => {
                let cut = self.cutoff();
                let freq = t.abs();
                let mut r = window_rule(b.e_lo, b.e_hi, omega, 1, edges, &cut, b.scale, freq, s);
                let r2 = window_rule(b.e_lo, b.e_hi, omega, -1, edges, &cut, b.scale, freq, s);
                r.e.extend(r2.e);
                r.xi.extend(r2.xi);
                r.wk.extend(r2.wk);
                r.wg.extend(r2.wg);
                r
            }
        }
    }

    /// One `j`-term of a pairing with the off-shell leg integrated as `kind`.
    pub(crate) fn term(
        &self,
        j: usize,
        legs: &[WavePacket<T>],
        weight: Option<&TransferPolynomial<T>>,
        mults: Option<&[LegMultiplier<T>]>,
        kind: LineKind<T>,
    ) -> Result<(CEstimate<T>, Vec<T>), StructureError> {
        let include_own = !matches!(kind, LineKind::Window { .. });
        let integrand = ReducedIntegrand::new(self, j, legs, weight, mults, include_own)?;
        let Some(b) = self.term_box(j, legs) else { return Ok((CEstimate::zero(), Vec::new())) };
        if integrand.is_empty() {
            return Ok((CEstimate::zero(), Vec::new()));
        }
        let m = self.params.m;
        let nodes = self.outer_nodes(&b);
        let per_node: Vec<Result<(Complex<T>, Complex<T>), StructureError>> = nodes
            .par_iter()
            .map(|nd| {
                let omega = omega_unchecked(&nd.k, m);
                let edges = integrand.edges(&nd.k);
                let rule = self.line_rule(kind, &b, omega, &edges);
                if rule.len() == 0 {
                    return Ok((czero(), czero()));
                }
                let mut vals = vec![czero(); rule.len()];
                integrand.eval_line(&nd.k, &rule.e, &mut vals)?;
                let (sig, t) = match kind {
                    LineKind::Window { sigma, t } => (lit::<T>(sigma as f64), t),
                    _ => (T::zero(), T::zero()),
                };
                let mut vk = czero();
                let mut vg = czero();
                for i in 0..rule.len() {
                    let v = if t != T::zero() { vals[i] * expi(-sig * rule.xi[i] * t) } else { vals[i] };
                    vk = vk + v * rule.wk[i];
                    vg = vg + v * rule.wg[i];
                }
                Ok((vk, vg))
            })
            .collect();
        let mut value = czero::<T>();
        let mut outer_g = czero::<T>();
        let mut line_err = T::zero();
        let mut worst = (T::zero(), 0usize);
        for (i, r) in per_node.into_iter().enumerate() {
            let (vk, vg) = r?;
            let nd = &nodes[i];
            value = value + vk * nd.wk;
            outer_g = outer_g + vk * nd.wg;
            let e = (vk - vg).norm() * nd.wk.abs();
            line_err = line_err + e;
            if e > worst.0 {
                worst = (e, i);
            }
        }
        let err = (value - outer_g).norm() + line_err;
        let loc = if nodes.is_empty() { Vec::new() } else { nodes[worst.1].k.clone() };
        Ok((CEstimate::new(value, err), loc))
    }

    /// Time table for the `j`-term with leg `j` carrying `χ_t` of `label`.
    pub fn time_table(
        &self,
        j: usize,
        legs: &[WavePacket<T>],
        weight: Option<&TransferPolynomial<T>>,
        label: LegLabel,
        t_max: T,
    ) -> Result<PvTable<T>, StructureError> {
        self.time_table_impl(j, legs, weight, label, t_max, true)
    }

    /// As [`Self::time_table`] but evaluating `g_j` at every node instead of interpolating.
    pub fn time_table_direct(
        &self,
        j: usize,
        legs: &[WavePacket<T>],
        weight: Option<&TransferPolynomial<T>>,
        label: LegLabel,
        t_max: T,
    ) -> Result<PvTable<T>, StructureError> {
        self.time_table_impl(j, legs, weight, label, t_max, false)
    }

    fn time_table_impl(
        &self,
        j: usize,
        legs: &[WavePacket<T>],
        weight: Option<&TransferPolynomial<T>>,
        label: LegLabel,
        t_max: T,
        interpolate: bool,
    ) -> Result<PvTable<T>, StructureError> {
        self.check_legs(legs, weight)?;
        let sigma = label.sigma();
        let mut table =
            PvTable { sigma, t_max, xi: Vec::new(), w: Vec::new(), d_line: Vec::new(), d_outer: Vec::new() };
        if sigma == 0 {
            return Err(StructureError::Spectral("time tables need an in or out label".into()));
        }
        if legs.len() < 3 {
            return Err(StructureError::InvalidOrder(legs.len()));
        }
        let integrand = ReducedIntegrand::new(self, j, legs, weight, None, false)?;
        let Some(b) = self.term_box(j, legs) else { return Ok(table) };
        if integrand.is_empty() {
            return Ok(table);
        }
        let s = &self.settings;
        let m = self.params.m;
        let nodes = self.outer_nodes(&b);
        let kind = LineKind::Window { sigma, t: t_max };
        let parts: Vec<Result<PvTable<T>, StructureError>> = nodes
            .par_iter()
            .map(|nd| {
                let omega = omega_unchecked(&nd.k, m);
                let edges = integrand.edges(&nd.k);
                let rule = self.line_rule(kind, &b, omega, &edges);
                let mut part = PvTable {
                    sigma,
                    t_max,
                    xi: Vec::with_capacity(rule.len()),
                    w: Vec::with_capacity(rule.len()),
                    d_line: Vec::with_capacity(rule.len()),
                    d_outer: Vec::with_capacity(rule.len()),
                };
                if rule.len() == 0 {
                    return Ok(part);
                }
                let mut vals = vec![czero(); rule.len()];
                if interpolate && edges.is_empty() {
                    let lo = rule.e.iter().cloned().fold(T::infinity(), T::min);
                    let hi = rule.e.iter().cloned().fold(T::neg_infinity(), T::max);
                    let panels = panel_count(hi - lo, b.scale, T::zero(), s, 1);
                    let cheb = ChebLine::new(lo, hi, panels, s.interp_points);
                    let pts = cheb.sample_points();
                    let mut samples = vec![czero(); pts.len()];
                    integrand.eval_line(&nd.k, &pts, &mut samples)?;
                    for (i, &e) in rule.e.iter().enumerate() {
                        vals[i] = cheb.eval(&samples, e);
                    }
                } else {
                    integrand.eval_line(&nd.k, &rule.e, &mut vals)?;
                }
                for i in 0..rule.len() {
                    let wk = vals[i] * (rule.wk[i] * nd.wk);
                    part.xi.push(rule.xi[i]);
                    part.w.push(wk);
                    part.d_line.push(wk - vals[i] * (rule.wg[i] * nd.wk));
                    part.d_outer.push(wk - vals[i] * (rule.wk[i] * nd.wg));
                }
                Ok(part)
            })
            .collect();
        for p in parts {
            let p = p?;
            table.xi.extend(p.xi);
            table.w.extend(p.w);
            table.d_line.extend(p.d_line);
            table.d_outer.extend(p.d_outer);
        }
        Ok(table)
    }

    /// `∫ dk⃗/(2ω) g_j(sign·ω, k⃗)`: the on-shell atom of leg `j`. Tolerances are
    /// not enforced on single terms.
    pub fn onshell_term(
        &self,
        j: usize,
        legs: &[WavePacket<T>],
        weight: Option<&TransferPolynomial<T>>,
        sign: i8,
    ) -> Result<CEstimate<T>, StructureError> {
        self.check_legs(legs, weight)?;
        Ok(self.term(j, legs, weight, None, LineKind::OnShell { sign })?.0)
    }

    /// `PV ∫ dk g_j(k)/(k² - m²)` for one `j`.
    pub fn pv_term(
        &self,
        j: usize,
        legs: &[WavePacket<T>],
        weight: Option<&TransferPolynomial<T>>,
    ) -> Result<CEstimate<T>, StructureError> {
        self.check_legs(legs, weight)?;
        Ok(self.term(j, legs, weight, None, LineKind::FullPv { freq: T::zero() })?.0)
    }

    /// `Ĝ_n(M_n f_1 ⊗ … ⊗ f_n)`; a missing weight means `M_n = 1`.
    pub fn eval_ghat_n(
        &self,
        legs: &[WavePacket<T>],
        weight: Option<&TransferPolynomial<T>>,
    ) -> Result<CEstimate<T>, StructureError> {
        let ones = vec![LegMultiplier::One; legs.len()];
        self.pair_with_leg_multipliers(legs, &ones, weight)
    }

    /// `Ĝ_2(f_1 ⊗ f_2)` including the continuum part.
    pub fn eval_ghat_2(&self, legs: &[WavePacket<T>]) -> Result<CEstimate<T>, StructureError> {
        let ones = vec![LegMultiplier::One; 2];
        self.ghat_2_with(legs, &ones)
    }

    /// Pairing with each test function multiplied by its leg multiplier first.
    pub fn pair_with_leg_multipliers(
        &self,
        legs: &[WavePacket<T>],
        mults: &[LegMultiplier<T>],
        weight: Option<&TransferPolynomial<T>>,
    ) -> Result<CEstimate<T>, StructureError> {
        self.check_legs(legs, weight)?;
        if mults.len() != legs.len() {
            return Err(StructureError::LegCount { expected: legs.len(), got: mults.len() });
        }
        match legs.len() {
            0 | 1 => Err(StructureError::InvalidOrder(legs.len())),
            2 => {
                let r = self.ghat_2_with(legs, mults)?;
                match weight {
                    // two-point transfer polynomials are constant
                    Some(p) => Ok(r.scale(p.eval_invariants(&[T::zero(); 3]))),
                    None => Ok(r),
                }
            }
            n => {
                let mut total = CEstimate::zero();
                let mut loc = Vec::new();
                for j in 0..n {
                    let kind = match &mults[j] {
                        LegMultiplier::One | LegMultiplier::Chi { label: LegLabel::Loc, .. } => {
                            LineKind::FullPv { freq: T::zero() }
                        }
                        LegMultiplier::Chi { label, t } => LineKind::Window { sigma: label.sigma(), t: *t },
                        LegMultiplier::Custom { freq, .. } => LineKind::FullPv { freq: *freq },
                    };
                    let (r, l) = self.term(j, legs, weight, Some(mults), kind)?;
                    if l.len() > loc.len() {
                        loc = l;
                    }
                    total = total + r;
                }
                self.check_tolerance(total, &loc)
            }
        }
    }

    /// `∫ dk⃗/(2ω_μ) f_1(-ω_μ, k⃗) f_2(ω_μ, -k⃗)` with multipliers.
    pub fn two_point_shell(&self, legs: &[WavePacket<T>], mults: &[LegMultiplier<T>], mu: T) -> CEstimate<T> {
        let d = self.params.d;
        let s = &self.settings;
        let w = s.box_widths;
        let (f1, f2) = (&legs[0], &legs[1]);
        let mut lo = Vec::with_capacity(d - 1);
        let mut hi = Vec::with_capacity(d - 1);
        for a in 1..d {
            let l = (f1.center.get(a) - f1.width * w).max(-f2.center.get(a) - f2.width * w);
            let h = (f1.center.get(a) + f1.width * w).min(-f2.center.get(a) + f2.width * w);
            if l >= h {
                return CEstimate::zero();
            }
            lo.push(l);
            hi.push(h);
        }
        let b = TermBox { lo, hi, e_lo: T::zero(), e_hi: T::zero(), scale: f1.width.min(f2.width) };
        let mut vk = czero();
        let mut vg = czero();
        for nd in self.outer_nodes(&b) {
            let om = omega_unchecked(&nd.k, mu);
            let k1 = FourVector::from_parts(-om, &nd.k);
            let neg: Vec<T> = nd.k.iter().map(|&x| -x).collect();
            let k2 = FourVector::from_parts(om, &neg);
            let v = f1.value(&k1)
                * f2.value(&k2)
                * mults[0].eval(&k1, &self.params)
                * mults[1].eval(&k2, &self.params)
                / (om * lit(2.0));
            vk = vk + v * nd.wk;
            vg = vg + v * nd.wg;
        }
        CEstimate::new(vk, (vk - vg).norm())
    }

    fn ghat_2_with(&self, legs: &[WavePacket<T>], mults: &[LegMultiplier<T>]) -> Result<CEstimate<T>, StructureError> {
        if legs.len() != 2 {
            return Err(StructureError::InvalidOrder(legs.len()));
        }
        self.check_legs(legs, None)?;
        let m = self.params.m;
        let discrete = self.two_point_shell(legs, mults, m);
        let cont = self.continuum(legs, mults)?;
        let r = discrete + cont;
        self.check_tolerance(r, &[])
    }

    /// `∫ dμ ρ(μ) ∫ dk⃗/(2ω_μ) f_1 f_2` over the continuum.
    pub fn continuum(&self, legs: &[WavePacket<T>], mults: &[LegMultiplier<T>]) -> Result<CEstimate<T>, StructureError> {
        let Some(low) = self.rho.support_low() else { return Ok(CEstimate::zero()) };
        let s = &self.settings;
        let w = s.box_widths;
        let (f1, f2) = (&legs[0], &legs[1]);
        // largest shell energy the packets can see
        let wmax = (f1.width * w - f1.center.energy()).min(f2.center.energy() + f2.width * w);
        let span = self.params.m * lit(20.0);
        let cap = self.rho.support_high().unwrap_or(low + span);
        let hi = cap.min(wmax);
        if hi <= low {
            return Ok(CEstimate::zero());
        }
        let tol = Tolerance::new(s.abs_tol * lit(0.1), s.rel_tol * lit(0.01));
        let mut inner_err = T::zero();
        let r = adaptive(
            |mu: T| {
                let rho = self.rho.eval(mu);
                if rho == T::zero() {
                    return czero();
                }
                let v = self.two_point_shell(legs, mults, mu);
                inner_err = inner_err.max(v.abs_err * rho);
                v.value * rho
            },
            low,
            hi,
            tol,
        )?;
        let mut err = r.abs_err + inner_err * (hi - low);
        if hi < wmax && self.rho.support_high().is_none() {
            // tail beyond the integration cap
            let tail = self.two_point_shell(legs, mults, hi).value.norm() * self.rho.eval(hi) * self.params.m;
            err = err + tail;
        }
        Ok(CEstimate::new(r.value, err))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cheb_interpolates_smooth_function() {
        let c = ChebLine::new(-1.0f64, 2.0, 3, 21);
        let pts = c.sample_points();
        let vals: Vec<Complex<f64>> = pts.iter().map(|&x| Complex::new((3.0 * x).sin(), x * x)).collect();
        for i in 0..50 {
            let x = -1.0 + 3.0 * (i as f64 + 0.37) / 50.0;
            let v = c.eval(&vals, x);
            assert!((v - Complex::new((3.0 * x).sin(), x * x)).norm() < 1e-12, "{x}");
        }
    }

    #[test]
    fn full_pv_rule_matches_closed_form() {
        // PV ∫_{-3}^{3} e^x/(x² - 1) dx
        let s = QuadSettings::<f64>::default();
        let rule = full_pv_rule(-3.0, 3.0, 1.0, &[], 0.5, 0.0, &s);
        let v: f64 = (0..rule.len()).map(|i| rule.wk[i] * rule.e[i].exp()).sum();
        let tol = Tolerance::default();
        // partial fractions: 1/(x²-1) = ½[1/(x-1) - 1/(x+1)]
        let pf = 0.5
            * (crate::quadrature::principal_value(|x: f64| x.exp(), 1.0, -3.0, 3.0, tol).unwrap().value
                - crate::quadrature::principal_value(|x: f64| x.exp(), -1.0, -3.0, 3.0, tol).unwrap().value);
        assert!((v - pf).abs() < 1e-10, "{v} {pf}");
    }

    #[test]
    fn default_density_shape() {
        let r = SpectralDensity::default_for(1.0f64);
        assert_eq!(r.eval(1.5), 0.0);
        assert!((r.eval(2.5) - 0.1 * (-1.0f64).exp()).abs() < 1e-15);
        let p = ModelParams::new(2, 1.0).unwrap();
        assert!(r.validate(&p).is_ok());
        let bad = SpectralDensity::Polynomial { support_low: 1.1, c: 0.1, unit: 1.0 };
        assert!(bad.validate(&p).is_err());
    }
}
