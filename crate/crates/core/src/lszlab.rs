//! Finite-time multipliers `χ_t`, wave-operator pairings at finite times and
//! numerical studies of their limits.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{chi_t, fourier_1d, omega_unchecked, FourVector, KinematicsError, LegLabel, ModelParams};
use crate::packet::WavePacket;
use crate::quadrature::{adaptive, adaptive_with_breaks, principal_value, QuadError, Tolerance};
use crate::scalar::{cone, czero, expi, from_usize, lit, to_f64, CEstimate, Real};
use crate::structure::{LegMultiplier, PvTable, StructureError, StructureEvaluator};
use crate::transfer::TransferPolynomial;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LszError {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("invalid time grid: {0}")]
    Grid(String),
    #[error("time {t} outside the tabulated range |t| ≤ {t_max}")]
    TimeOutOfRange { t: f64, t_max: f64 },
    #[error("expected {expected} labels, got {got}")]
    LabelCount { expected: usize, got: usize },
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// `χ_t(a, ·)` for one leg.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeMultiplier<T> {
    pub label: LegLabel,
    pub t: T,
}

impl<T: Real> TimeMultiplier<T> {
    pub fn new(label: LegLabel, t: T) -> Self {
        TimeMultiplier { label, t }
    }

    pub fn eval(&self, k: &FourVector<T>, params: &ModelParams<T>) -> Complex<T> {
        chi_t(self.label, k, self.t, params, &params.cutoff())
    }

    pub fn leg_multiplier(&self) -> LegMultiplier<T> {
        LegMultiplier::Chi { label: self.label, t: self.t }
    }
}

/// Per-leg times and the order in which they are sent to infinity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiTimeSchedule<T> {
    pub times: Vec<T>,
    pub order: Vec<usize>,
}

fn check_order(order: &[usize], n: usize) -> Result<(), LszError> {
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(LszError::Schedule(format!("order has {} entries for {n} legs", order.len())));
    }
    for &l in order {
        if l >= n || seen[l] {
            return Err(LszError::Schedule(format!("{order:?} is not a permutation of 0..{n}")));
        }
        seen[l] = true;
    }
    Ok(())
}

impl<T: Real> MultiTimeSchedule<T> {
    pub fn new(times: Vec<T>, order: Vec<usize>) -> Result<Self, LszError> {
        if let Some(t) = times.iter().find(|t| !t.is_finite()) {
            return Err(LszError::Schedule(format!("time {t} is not finite")));
        }
        check_order(&order, times.len())?;
        Ok(MultiTimeSchedule { times, order })
    }

    /// Every leg at `t`, identity order.
    pub fn uniform(n: usize, t: T) -> Self {
        MultiTimeSchedule { times: vec![t; n], order: (0..n).collect() }
    }

    /// Point of the sequential sweep for `order`: legs before `stage` sit at
    /// `t_end`, leg `order[stage]` at `t`, the rest at `t_start`.
    pub fn sweep(order: &[usize], stage: usize, t: T, t_start: T, t_end: T) -> Result<Self, LszError> {
        check_order(order, order.len())?;
        let mut times = vec![t_start; order.len()];
        for (s, &l) in order.iter().enumerate() {
            times[l] = if s < stage {
                t_end
            } else if s == stage {
                t
            } else {
                t_start
            };
        }
        Self::new(times, order.to_vec())
    }

    pub fn multipliers(&self, labels: &[LegLabel]) -> Result<Vec<LegMultiplier<T>>, LszError> {
        if labels.len() != self.times.len() {
            return Err(LszError::LabelCount { expected: self.times.len(), got: labels.len() });
        }
        Ok(labels.iter().zip(&self.times).map(|(&a, &t)| TimeMultiplier::new(a, t).leg_multiplier()).collect())
    }
}

/// Kernel, packets and labels of one finite-time pairing.
#[derive(Clone, Copy, Debug)]
pub struct PairingSetup<'a, T> {
    pub ev: &'a StructureEvaluator<T>,
    pub legs: &'a [WavePacket<T>],
    pub labels: &'a [LegLabel],
    /// `M_n`; `None` pairs `Ĝ_n` itself.
    pub weight: Option<&'a TransferPolynomial<T>>,
}

/// `(M·Ĝ)_n(Π_l χ_{t_l}(a_l, ·) f_l)` evaluated directly.
pub fn finite_time_pairing<T: Real>(
    setup: &PairingSetup<'_, T>,
    schedule: &MultiTimeSchedule<T>,
) -> Result<CEstimate<T>, LszError> {
    let mults = schedule.multipliers(setup.labels)?;
    Ok(setup.ev.pair_with_leg_multipliers(setup.legs, &mults, setup.weight)?)
}

#[derive(Clone, Debug)]
enum TermTable<T> {
    Static(CEstimate<T>),
    Timed(PvTable<T>),
}

/// Precomputed time dependence of a finite-time pairing for `n ≥ 3`.
///
/// Term `j` only sees the multiplier of leg `j` (the other legs sit on their
/// shells), so the pairing is a sum of one-leg tables.
#[derive(Clone, Debug)]
pub struct PairingTables<T> {
    terms: Vec<TermTable<T>>,
    t_max: T,
}

impl<T: Real> PairingTables<T> {
    pub fn build(setup: &PairingSetup<'_, T>, t_max: T) -> Result<Self, LszError> {
        let n = setup.legs.len();
        if setup.labels.len() != n {
            return Err(LszError::LabelCount { expected: n, got: setup.labels.len() });
        }
        if n < 3 {
            return Err(StructureError::InvalidOrder(n).into());
        }
        let terms = (0..n)
            .map(|j| {
                Ok(match setup.labels[j] {
                    LegLabel::Loc => TermTable::Static(setup.ev.pv_term(j, setup.legs, setup.weight)?),
                    a => TermTable::Timed(setup.ev.time_table(j, setup.legs, setup.weight, a, t_max)?),
                })
            })
            .collect::<Result<Vec<_>, LszError>>()?;
        Ok(PairingTables { terms, t_max })
    }

    pub fn t_max(&self) -> T {
        self.t_max
    }

    pub fn eval(&self, times: &[T]) -> Result<CEstimate<T>, LszError> {
        if times.len() != self.terms.len() {
            return Err(LszError::LabelCount { expected: self.terms.len(), got: times.len() });
        }
        let mut total = CEstimate::zero();
        for (term, &t) in self.terms.iter().zip(times) {
            total = total
                + match term {
                    TermTable::Static(v) => *v,
                    TermTable::Timed(p) => {
                        if t.abs() > self.t_max {
                            return Err(LszError::TimeOutOfRange { t: to_f64(t), t_max: to_f64(self.t_max) });
                        }
                        p.eval(t)
                    }
                };
        }
        Ok(total)
    }
}

/// Averaging window: `samples` equally spaced points over one `period`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window<T> {
    pub period: T,
    pub samples: usize,
}

impl<T: Real> Window<T> {
    /// One period `2π/(2ω_ref)` with 8 samples.
    pub fn for_omega(omega_ref: T) -> Self {
        Window { period: T::PI() / omega_ref, samples: 8 }
    }

    pub fn offsets(&self) -> Vec<T> {
        let s = self.samples.max(1);
        (0..s).map(|i| self.period * ((from_usize::<T>(i) + lit(0.5)) / from_usize::<T>(s) - lit(0.5))).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConvergenceStatus {
    Converged,
    /// The window-averaged error envelope grew from one decade to the next.
    FailedConvergence,
}

/// Limit extrapolated along one ordering of the multi-time limit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingLimit<T> {
    pub order: Vec<usize>,
    pub limit: Complex<T>,
    pub uncertainty: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport<T> {
    pub t_grid: Vec<T>,
    pub values: Vec<Complex<T>>,
    pub abs_errors: Vec<T>,
    pub window_averaged: Vec<Complex<T>>,
    /// Largest deviation of a raw sample from its window average in the last window.
    pub oscillation_amplitude: T,
    pub extrapolated_limit: Complex<T>,
    pub limit_uncertainty: T,
    /// `(C, α)` with `|W(t) - L| ≈ C t^{-α}`; absent when fewer than two errors rise above the noise floor.
    pub fitted_rate: Option<(T, T)>,
    pub target: Option<Complex<T>>,
    /// Maximum error against the target (or limit) per decade of the grid.
    pub decade_envelope: Vec<T>,
    pub noise_floor: T,
    pub status: ConvergenceStatus,
    pub orderings: Vec<OrderingLimit<T>>,
    /// Largest pairwise distance between ordering limits.
    pub ordering_spread: T,
}

impl<T: Real> ConvergenceReport<T> {
    /// Relative error of the last window average against the target.
    pub fn final_relative_error(&self) -> Option<T> {
        let tg = self.target?;
        let w = *self.window_averaged.last()?;
        Some((w - tg).norm() / tg.norm())
    }

    /// Spread against the root-sum-square of the ordering uncertainties.
    pub fn orderings_agree(&self) -> bool {
        let comb = self.orderings.iter().map(|o| o.uncertainty * o.uncertainty).fold(T::zero(), |a, b| a + b).sqrt();
        self.ordering_spread <= comb.max(self.noise_floor)
    }
}

fn check_grid<T: Real>(t_grid: &[T]) -> Result<(), LszError> {
    if t_grid.is_empty() {
        return Err(LszError::Grid("empty".into()));
    }
    if t_grid.iter().any(|t| !t.is_finite()) || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(LszError::Grid("times must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// `n` log-spaced points in `[a, b]`.
pub fn log_grid<T: Real>(a: T, b: T, n: usize) -> Vec<T> {
    if n < 2 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n).map(|i| (la + (lb - la) * from_usize::<T>(i) / from_usize::<T>(n - 1)).exp()).collect()
}

/// Least squares for `ln e = ln C - α ln t`.
fn fit_rate<T: Real>(ts: &[T], es: &[T]) -> Option<(T, T)> {
    if ts.len() < 2 {
        return None;
    }
    let nf = from_usize::<T>(ts.len());
    let xs: Vec<T> = ts.iter().map(|t| t.ln()).collect();
    let ys: Vec<T> = es.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().cloned().sum::<T>() / nf;
    let my = ys.iter().cloned().sum::<T>() / nf;
    let sxx: T = xs.iter().map(|x| (*x - mx) * (*x - mx)).sum();
    if sxx <= T::zero() {
        return None;
    }
    let sxy: T = xs.iter().zip(&ys).map(|(x, y)| (*x - mx) * (*y - my)).sum();
    let slope = sxy / sxx;
    Some(((my - slope * mx).exp(), -slope))
}

/// Window averages, decade envelope, limit and rate of one time series.
///
/// `f` is evaluated at every grid point and, with a window, at the window's
/// offsets around it; the reported `values` are the grid-point samples.
pub fn study_series<T: Real>(
    mut f: impl FnMut(T) -> Result<CEstimate<T>, LszError>,
    t_grid: &[T],
    window: Option<Window<T>>,
    target: Option<Complex<T>>,
) -> Result<ConvergenceReport<T>, LszError> {
    check_grid(t_grid)?;
    let mut values = Vec::with_capacity(t_grid.len());
    let mut abs_errors = Vec::with_capacity(t_grid.len());
    let mut averaged = Vec::with_capacity(t_grid.len());
    let mut oscillation = T::zero();
    for (i, &t) in t_grid.iter().enumerate() {
        let v = f(t)?;
        values.push(v.value);
        match window {
            Some(w) => {
                let mut acc = czero::<T>();
                let mut err = T::zero();
                let mut samples = Vec::with_capacity(w.samples);
                for dt in w.offsets() {
                    let s = f(t + dt)?;
                    acc = acc + s.value;
                    err = err.max(s.abs_err);
                    samples.push(s.value);
                }
                let avg = acc / from_usize::<T>(samples.len());
                if i + 1 == t_grid.len() {
                    oscillation = samples.iter().map(|s| (*s - avg).norm()).fold(T::zero(), T::max);
                }
                averaged.push(avg);
                abs_errors.push(err.max(v.abs_err));
            }
            None => {
                averaged.push(v.value);
                abs_errors.push(v.abs_err);
            }
        }
    }
    let last = *averaged.last().unwrap();
    let scale = target.map(|x| x.norm()).unwrap_or(T::zero()).max(last.norm());
    let noise_floor = abs_errors.iter().cloned().fold(T::zero(), T::max).max(scale * lit(1e-12));
    let reference = target.unwrap_or(last);
    let errors: Vec<T> = averaged.iter().map(|w| (*w - reference).norm()).collect();

    // decades counted from the first grid point
    let t0 = t_grid[0];
    let ten: T = lit(10.0);
    let mut decade_envelope: Vec<T> = Vec::new();
    for (t, e) in t_grid.iter().zip(&errors) {
        let k = (*t / t0).log(ten).floor().to_usize().unwrap_or(0);
        if decade_envelope.len() <= k {
            decade_envelope.resize(k + 1, T::zero());
        }
        decade_envelope[k] = decade_envelope[k].max(*e);
    }
    let grew = decade_envelope.windows(2).any(|w| w[1] > w[0].max(noise_floor));
    let status = if grew { ConvergenceStatus::FailedConvergence } else { ConvergenceStatus::Converged };

    // with no target the last point is the reference, so late points carry no information
    let t_last = *t_grid.last().unwrap();
    let (ft, fe): (Vec<T>, Vec<T>) = t_grid
        .iter()
        .zip(&errors)
        .filter(|(t, e)| **e > noise_floor && (target.is_some() || **t <= t_last * lit(0.5)))
        .map(|(t, e)| (*t, *e))
        .unzip();
    let fitted_rate = fit_rate(&ft, &fe);
    let step = if averaged.len() > 1 { (last - averaged[averaged.len() - 2]).norm() } else { T::zero() };
    let envelope_at_end = match fitted_rate {
        Some((c, a)) if a > T::zero() => c * t_last.powf(-a),
        _ => errors.last().cloned().unwrap_or(T::zero()),
    };
    let limit_uncertainty = if target.is_some() {
        step.max(noise_floor)
    } else {
        envelope_at_end.min(step.max(noise_floor) * lit(1e3)).max(step).max(noise_floor)
    };
    Ok(ConvergenceReport {
        t_grid: t_grid.to_vec(),
        values,
        abs_errors,
        window_averaged: averaged,
        oscillation_amplitude: oscillation,
        extrapolated_limit: last,
        limit_uncertainty,
        fitted_rate,
        target,
        decade_envelope,
        noise_floor,
        status,
        orderings: Vec::new(),
        ordering_spread: T::zero(),
    })
}

/// Options of a finite-time convergence study.
#[derive(Clone, Debug)]
pub struct StudyOptions<T> {
    /// Reference frequency of the window; defaults to the mean `ω` of the packet centres.
    pub omega_ref: Option<T>,
    pub samples: usize,
    /// Value the pairing should approach, e.g. the form factor.
    pub target: Option<Complex<T>>,
    /// Evaluate through precomputed time tables (n ≥ 3).
    pub tables: bool,
}

impl<T: Real> Default for StudyOptions<T> {
    fn default() -> Self {
        StudyOptions { omega_ref: None, samples: 8, target: None, tables: true }
    }
}

fn mean_omega<T: Real>(legs: &[WavePacket<T>], m: T) -> T {
    let s: T = legs.iter().map(|f| omega_unchecked(f.center.spatial(), m)).sum();
    s / from_usize::<T>(legs.len())
}

/// Finite-time pairings along `t_grid` with every leg at the same time, plus
/// one sequential sweep per ordering. Each ordering's limit comes from its
/// last stage, where the final leg runs through the grid and all others are
/// held at the end of the grid.
pub fn convergence_study<T: Real>(
    setup: &PairingSetup<'_, T>,
    t_grid: &[T],
    orderings: &[Vec<usize>],
    opts: &StudyOptions<T>,
) -> Result<ConvergenceReport<T>, LszError> {
    check_grid(t_grid)?;
    let n = setup.legs.len();
    if setup.labels.len() != n {
        return Err(LszError::LabelCount { expected: n, got: setup.labels.len() });
    }
    for o in orderings {
        check_order(o, n)?;
    }
    let omega_ref = opts.omega_ref.unwrap_or_else(|| mean_omega(setup.legs, setup.ev.params.m));
    let window = Window { period: T::PI() / omega_ref, samples: opts.samples };
    let t_first = t_grid[0];
    let t_end = *t_grid.last().unwrap();
    let reach = t_end.abs().max(t_first.abs()) + window.period;
    let tables = if opts.tables && n >= 3 { Some(PairingTables::build(setup, reach)?) } else { None };
    let eval = |times: &[T]| -> Result<CEstimate<T>, LszError> {
        match &tables {
            Some(tb) => tb.eval(times),
            None => finite_time_pairing(setup, &MultiTimeSchedule::new(times.to_vec(), (0..n).collect())?),
        }
    };
    let mut report = study_series(|t| eval(&vec![t; n]), t_grid, Some(window), opts.target)?;
    for order in orderings {
        let last = *order.last().unwrap();
        let sub = study_series(
            |t| {
                let mut times = vec![t_end; n];
                times[last] = t;
                eval(&times)
            },
            t_grid,
            Some(window),
            None,
        )?;
        report.orderings.push(OrderingLimit {
            order: order.clone(),
            limit: sub.extrapolated_limit,
            uncertainty: sub.limit_uncertainty,
        });
    }
    let mut spread = T::zero();
    for a in &report.orderings {
        for b in &report.orderings {
            spread = spread.max((a.limit - b.limit).norm());
        }
    }
    report.ordering_spread = spread;
    Ok(report)
}

/// A one-dimensional Gaussian packet `a e^{-(ξ-c)²/(2w²)} e^{ipξ}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Packet1d<T> {
    pub amplitude: T,
    pub center: T,
    pub width: T,
    #[serde(default)]
    pub frequency: T,
}

impl<T: Real> Packet1d<T> {
    pub fn gaussian(center: T, width: T) -> Self {
        Packet1d { amplitude: T::one(), center, width, frequency: T::zero() }
    }

    pub fn eval(&self, x: T) -> Complex<T> {
        let u = (x - self.center) / self.width;
        expi(self.frequency * x) * (self.amplitude * (-u * u * lit(0.5)).exp())
    }

    /// `(1 - d²/dξ²) f`.
    pub fn one_minus_laplacian(&self, x: T) -> Complex<T> {
        let w2 = self.width * self.width;
        let s = Complex::new(-(x - self.center) / w2, self.frequency);
        self.eval(x) * (cone::<T>() - s * s + Complex::new(T::one() / w2, T::zero()))
    }

    /// Interval outside which the packet is below `e^{-72}` of its peak.
    pub fn support(&self) -> (T, T) {
        let h = self.width * lit(12.0);
        (self.center - h, self.center + h)
    }
}

/// `PV ∫ e^{iσξt} f(ξ)/ξ dξ` by folding `ξ ↔ -ξ`, so both integrands are regular at 0.
pub fn pv_oscillatory<T: Real>(
    f: &impl Fn(T) -> Complex<T>,
    half_width: T,
    t: T,
    sigma: i8,
    tol: Tolerance<T>,
) -> Result<CEstimate<T>, LszError> {
    let s = lit::<T>(sigma as f64);
    let periods = (half_width * t.abs() / T::PI()).ceil().to_usize().unwrap_or(1).clamp(1, 1_000_000);
    let h = half_width / from_usize::<T>(periods);
    let breaks: Vec<T> = (0..=periods).map(|i| if i == periods { half_width } else { h * from_usize::<T>(i) }).collect();
    let tol = Tolerance { max_intervals: tol.max_intervals.max(4 * periods), ..tol };
    let r = adaptive_with_breaks(
        |x: T| {
            let (fp, fm) = (f(x), f(-x));
            let (sn, cs) = (s * x * t).sin_cos();
            let num = (fp - fm) * cs + (fp + fm) * Complex::new(T::zero(), sn);
            if x == T::zero() {
                // limit of (f(x) - f(-x))/x is 2f'(0), but the K15 rule never samples 0
                czero()
            } else {
                num / x
            }
        },
        &breaks,
        tol,
    )?;
    Ok(CEstimate::new(r.value, r.abs_err))
}

/// `PV ∫ e^{iσξt} f(ξ)/ξ dξ → iσπ f(0)` along `t_grid`.
pub fn pv_limit_demo<T: Real>(f: &Packet1d<T>, t_grid: &[T], sigma: i8) -> Result<ConvergenceReport<T>, LszError> {
    let (a, b) = f.support();
    let half = a.abs().max(b.abs());
    let target = Complex::new(T::zero(), lit::<T>(sigma as f64) * T::PI()) * f.eval(T::zero());
    let tol = Tolerance::new(lit(1e-14), lit(1e-12));
    study_series(|t| pv_oscillatory(&|x| f.eval(x), half, t, sigma, tol), t_grid, None, Some(target))
}

/// Both sides of `1/(ξ + iε) = PV 1/ξ - iπδ(ξ)` paired with a packet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SokhotskyReport<T> {
    pub eps: T,
    /// `PV ∫ f/ξ - iπ f(0)`.
    pub distributional: Complex<T>,
    /// `∫ f/(ξ + iε)` at `eps`.
    pub raw: Complex<T>,
    /// Richardson extrapolation over `ε, 2ε, 4ε`.
    pub extrapolated: Complex<T>,
    pub raw_difference: T,
    pub extrapolated_difference: T,
}

pub fn sokhotsky_check<T: Real>(f: &Packet1d<T>, eps: T) -> Result<SokhotskyReport<T>, LszError> {
    let (a, b) = f.support();
    let half = a.abs().max(b.abs());
    let tol = Tolerance::new(lit(1e-15), lit(1e-13));
    let pv = principal_value(|x: T| f.eval(x), T::zero(), -half, half, tol)?.value;
    let distributional = pv - Complex::new(T::zero(), T::PI()) * f.eval(T::zero());
    let at = |e: T| -> Result<Complex<T>, LszError> {
        // geometric breaks resolve the width-ε peak at 0
        let mut br = vec![T::zero()];
        let mut x = e * lit(0.01);
        while x < half {
            br.push(x);
            x = x * lit(4.0);
        }
        br.push(half);
        let r = adaptive_with_breaks(
            |x: T| {
                let (fp, fm) = (f.eval(x), f.eval(-x));
                ((fp - fm) * x - (fp + fm) * Complex::new(T::zero(), e)) / (x * x + e * e)
            },
            &br,
            tol,
        )?;
        Ok(r.value)
    };
    let (r1, r2, r4) = (at(eps)?, at(eps * lit(2.0))?, at(eps * lit(4.0))?);
    // error expansion in powers of ε
    let two: T = lit(2.0);
    let a1 = r1 * two - r2;
    let a2 = r2 * two - r4;
    let extrapolated = (a1 * lit::<T>(4.0) - a2) / lit::<T>(3.0);
    let scale = distributional.norm();
    Ok(SokhotskyReport {
        eps,
        distributional,
        raw: r1,
        extrapolated,
        raw_difference: (r1 - distributional).norm() / scale,
        extrapolated_difference: (extrapolated - distributional).norm() / scale,
    })
}

/// Break points on `[a, b]` at every `π` of accumulated phase, from a fixed scan.
fn phase_breaks<T: Real>(phase: impl Fn(T) -> T, a: T, b: T) -> Vec<T> {
    let scan = 512;
    let mut br = vec![a];
    let mut prev = phase(a);
    let mut acc = T::zero();
    for i in 1..scan {
        let x = a + (b - a) * from_usize::<T>(i) / from_usize::<T>(scan);
        let p = phase(x);
        acc = acc + (p - prev).abs();
        prev = p;
        if acc >= T::PI() {
            br.push(x);
            acc = T::zero();
        }
    }
    br.push(b);
    br
}

/// Continuum term of the two-point finite-time pairing with its phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport<T> {
    pub series: ConvergenceReport<T>,
    pub initial: Complex<T>,
    /// `|value(t_last)| / |value(0)|`.
    pub final_ratio: T,
    pub decayed: bool,
}

/// `∫dμ ρ(μ) ∫dk⃗/(2ω_μ) f_1(-ω_μ, k⃗) f_2(ω_μ, -k⃗) e^{i(ω - ω_μ)t}` (d = 2).
pub fn continuum_phase_term<T: Real>(ev: &StructureEvaluator<T>, legs: &[WavePacket<T>], t: T) -> Result<CEstimate<T>, LszError> {
    if legs.len() != 2 {
        return Err(StructureError::InvalidOrder(legs.len()).into());
    }
    if ev.params.d != 2 {
        return Err(KinematicsError::BadDimension(ev.params.d).into());
    }
    let Some(low) = ev.rho.support_low() else { return Ok(CEstimate::zero()) };
    let (f1, f2) = (&legs[0], &legs[1]);
    let m = ev.params.m;
    let bw = ev.settings.box_widths;
    let kl = (f1.center.get(1) - f1.width * bw).max(-f2.center.get(1) - f2.width * bw);
    let kh = (f1.center.get(1) + f1.width * bw).min(-f2.center.get(1) + f2.width * bw);
    let emax = (f1.width * bw - f1.center.energy()).min(f2.center.energy() + f2.width * bw);
    let hi = ev.rho.support_high().unwrap_or(low + m * lit(20.0)).min(emax);
    if kl >= kh || hi <= low {
        return Ok(CEstimate::zero());
    }
    let static_scale = ev.continuum(legs, &[LegMultiplier::One, LegMultiplier::One])?.value.norm();
    let abs = (static_scale * lit(1e-9)).max(lit(1e-300));
    let inner_tol = Tolerance { max_intervals: 20_000, ..Tolerance::new(abs * lit(0.01), lit(1e-8)) };
    let mut inner_err = T::zero();
    let mut failure = None;
    let periods = ((hi - low) * t.abs() / T::PI()).ceil().to_usize().unwrap_or(1).clamp(1, 200_000);
    let h = (hi - low) / from_usize::<T>(periods);
    let breaks: Vec<T> = (0..=periods).map(|i| if i == periods { hi } else { low + h * from_usize::<T>(i) }).collect();
    let outer_tol = Tolerance { max_intervals: 4 * periods + 2000, ..Tolerance::new(abs, lit(1e-7)) };
    let r = adaptive_with_breaks(
        |mu: T| {
            let rho = ev.rho.eval(mu);
            if rho == T::zero() || failure.is_some() {
                return czero();
            }
            let kb = phase_breaks(|x: T| (omega_unchecked(&[x], m) - omega_unchecked(&[x], mu)) * t, kl, kh);
            let kper = kb.len();
            let v = adaptive_with_breaks(
                |x: T| {
                    let wm = omega_unchecked(&[x], mu);
                    let w = omega_unchecked(&[x], m);
                    let k1 = FourVector::from_parts(-wm, &[x]);
                    let k2 = FourVector::from_parts(wm, &[-x]);
                    f1.value(&k1) * f2.value(&k2) * expi((w - wm) * t) / (wm * lit(2.0))
                },
                &kb,
                Tolerance { max_intervals: inner_tol.max_intervals.max(4 * kper), ..inner_tol },
            );
            match v {
                Ok(v) => {
                    inner_err = inner_err + v.abs_err * rho * h;
                    v.value * rho
                }
                Err(e) => {
                    failure = Some(e);
                    czero()
                }
            }
        },
        &breaks,
        outer_tol,
    )?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    Ok(CEstimate::new(r.value, r.abs_err + inner_err))
}

/// Decay of the continuum term along `t_grid` (prepended with `t = 0`).
pub fn riemann_lebesgue_decay<T: Real>(
    ev: &StructureEvaluator<T>,
    legs: &[WavePacket<T>],
    t_grid: &[T],
    fraction: T,
) -> Result<DecayReport<T>, LszError> {
    check_grid(t_grid)?;
    if ev.rho.support_low().is_none() {
        return Err(StructureError::Spectral("the decay study needs a nonzero continuum".into()).into());
    }
    let initial = continuum_phase_term(ev, legs, T::zero())?.value;
    let vals: Vec<Result<CEstimate<T>, LszError>> = t_grid.par_iter().map(|&t| continuum_phase_term(ev, legs, t)).collect();
    let mut it = vals.into_iter();
    let series = study_series(|_| it.next().unwrap(), t_grid, None, Some(czero()))?;
    let last = *series.values.last().unwrap();
    let final_ratio = last.norm() / initial.norm();
    Ok(DecayReport { decayed: final_ratio < fraction, series, initial, final_ratio })
}

/// `‖𝓕f‖_{L¹}` against `π(2π)^{-1/2} ∫|(1 - d²/dξ²) f| dξ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct L1Bound<T> {
    pub lhs: T,
    pub rhs: T,
    pub pass: bool,
}

pub fn l1_fourier_bound<T: Real>(f: &Packet1d<T>) -> Result<L1Bound<T>, LszError> {
    let (a, b) = f.support();
    let tol = Tolerance::new(lit(1e-15), lit(1e-12));
    // 𝓕f sits at t = p with width 1/w
    let tc = f.frequency;
    let th = lit::<T>(12.0) / f.width;
    let mut failure = None;
    let lhs = adaptive(
        |t: T| match fourier_1d(|x: T| f.eval(x), a, b, t, Tolerance::new(lit(1e-14), lit(1e-12))) {
            Ok(v) => v.value.norm(),
            Err(e) => {
                failure.get_or_insert(e);
                T::zero()
            }
        },
        tc - th,
        tc + th,
        Tolerance::new(lit(1e-13), lit(1e-10)),
    )?
    .value;
    if let Some(e) = failure {
        return Err(e.into());
    }
    let mut br = vec![a];
    if f.frequency == T::zero() {
        // zeros of 1 + 1/w² - u²
        let w2 = f.width * f.width;
        let r = w2 * (T::one() + T::one() / w2).sqrt();
        br.extend([f.center - r, f.center + r]);
    }
    br.push(b);
    br.retain(|x| *x >= a && *x <= b);
    br.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let int = adaptive_with_breaks(|x: T| f.one_minus_laplacian(x).norm(), &br, tol)?.value;
    let rhs = T::PI() / T::TAU().sqrt() * int;
    Ok(L1Bound { lhs, rhs, pass: lhs <= rhs * (T::one() + lit(1e-6)) })
}
