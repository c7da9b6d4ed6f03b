//! Gaussian × polynomial wave packets, their tensor products and Schwartz norms.

use std::collections::BTreeMap;

use num_complex::Complex;
use num_traits::{Num, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{FourVector, MAX_DIM};
use crate::scalar::{cone, expi, lit, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PacketError {
    #[error("packet width must be positive, got {0}")]
    BadWidth(f64),
    #[error("packet dimension {0} does not match {1}")]
    DimensionMismatch(usize, usize),
    #[error("norm grid too coarse: boundary value {boundary:e} exceeds 1e-3 of the interior maximum {interior:e}")]
    GridTooCoarse { boundary: f64, interior: f64 },
}

/// One monomial: exponents per momentum component and a coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial<C> {
    pub exps: [u8; MAX_DIM],
    pub coeff: C,
}

/// Polynomial in up to four momentum components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiPoly<C> {
    terms: Vec<Monomial<C>>,
}

impl<C: Copy + Num> MultiPoly<C> {
    pub fn from_terms(terms: impl IntoIterator<Item = ([u8; MAX_DIM], C)>) -> Self {
        let mut map: BTreeMap<[u8; MAX_DIM], C> = BTreeMap::new();
        for (e, c) in terms {
            let slot = map.entry(e).or_insert_with(C::zero);
            *slot = *slot + c;
        }
        MultiPoly { terms: map.into_iter().filter(|(_, c)| !c.is_zero()).map(|(exps, coeff)| Monomial { exps, coeff }).collect() }
    }

    pub fn zero() -> Self {
        MultiPoly { terms: Vec::new() }
    }

    pub fn constant(c: C) -> Self {
        Self::from_terms([([0; MAX_DIM], c)])
    }

    pub fn one() -> Self {
        Self::constant(C::one())
    }

    /// The coordinate `x_i`.
    pub fn var(i: usize) -> Self {
        let mut e = [0; MAX_DIM];
        e[i] = 1;
        Self::from_terms([(e, C::one())])
    }

    pub fn terms(&self) -> &[Monomial<C>] {
        &self.terms
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1 && self.terms[0].exps == [0; MAX_DIM] && self.terms[0].coeff.is_one()
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().map(|t| t.exps.iter().map(|&e| e as usize).sum::<usize>()).max().unwrap_or(0)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_terms(self.terms.iter().chain(&other.terms).map(|t| (t.exps, t.coeff)))
    }

    pub fn scale(&self, c: C) -> Self {
        Self::from_terms(self.terms.iter().map(|t| (t.exps, t.coeff * c)))
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let mut e = a.exps;
                for (x, y) in e.iter_mut().zip(b.exps) {
                    *x += y;
                }
                out.push((e, a.coeff * b.coeff));
            }
        }
        Self::from_terms(out)
    }

    /// `∂/∂x_i`.
    pub fn derivative(&self, i: usize) -> Self {
        Self::from_terms(self.terms.iter().filter(|t| t.exps[i] > 0).map(|t| {
            let mut e = t.exps;
            let k = e[i];
            e[i] -= 1;
            let mut c = C::zero();
            for _ in 0..k {
                c = c + t.coeff;
            }
            (e, c)
        }))
    }

    /// `p(-x)`.
    pub fn negated_args(&self) -> Self {
        Self::from_terms(self.terms.iter().map(|t| {
            let odd = t.exps.iter().map(|&e| e as u32).sum::<u32>() % 2 == 1;
            (t.exps, if odd { C::zero() - t.coeff } else { t.coeff })
        }))
    }

    pub fn map_coeffs<D: Copy + Num>(&self, f: impl Fn(C) -> D) -> MultiPoly<D> {
        MultiPoly::from_terms(self.terms.iter().map(|t| (t.exps, f(t.coeff))))
    }

    /// Evaluates at `x` (missing trailing coordinates are zero).
    pub fn eval<T>(&self, x: &[T]) -> C
    where
        T: Real,
        C: std::ops::Mul<T, Output = C>,
    {
        let mut s = C::zero();
        for t in &self.terms {
            let mut m = T::one();
            for (i, &e) in t.exps.iter().enumerate() {
                if e > 0 {
                    m = m * x[i].powi(e as i32);
                }
            }
            s = s + t.coeff * m;
        }
        s
    }
}

impl<C: Copy + Num> Default for MultiPoly<C> {
    fn default() -> Self {
        Self::one()
    }
}

fn default_amplitude<T: Real>() -> Complex<T> {
    cone()
}

/// `f̂(k) = amplitude · poly(k) · exp(-|k - center|²/(2 width²)) · e^{i k·shift}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct WavePacket<T> {
    pub center: FourVector<T>,
    pub width: T,
    #[serde(default = "MultiPoly::one", skip_serializing_if = "MultiPoly::is_one")]
    pub poly: MultiPoly<T>,
    #[serde(default = "default_amplitude")]
    pub amplitude: Complex<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<FourVector<T>>,
}

impl<T: Real> WavePacket<T> {
    pub fn gaussian(center: FourVector<T>, width: T) -> Result<Self, PacketError> {
        if !(width > T::zero() && width.is_finite()) {
            return Err(PacketError::BadWidth(width.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(WavePacket { center, width, poly: MultiPoly::one(), amplitude: cone(), shift: None })
    }

    /// Gaussian packet centred on the mass shell at spatial momentum `p` with `sign` = ±1.
    pub fn on_shell(p: &[T], mass: T, sign: i8, width: T) -> Result<Self, PacketError> {
        let w = crate::kinematics::omega_unchecked(p, mass);
        let e = if sign > 0 { w } else { -w };
        Self::gaussian(FourVector::from_parts(e, p), width)
    }

    pub fn with_poly(mut self, poly: MultiPoly<T>) -> Self {
        self.poly = poly;
        self
    }

    pub fn with_amplitude(mut self, a: Complex<T>) -> Self {
        self.amplitude = a;
        self
    }

    pub fn with_shift(mut self, a: FourVector<T>) -> Self {
        self.shift = Some(a);
        self
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn validate(&self, d: usize) -> Result<(), PacketError> {
        if !(self.width > T::zero() && self.width.is_finite()) {
            return Err(PacketError::BadWidth(self.width.to_f64().unwrap_or(f64::NAN)));
        }
        if self.dim() != d {
            return Err(PacketError::DimensionMismatch(self.dim(), d));
        }
        if let Some(s) = &self.shift {
            if s.dim() != d {
                return Err(PacketError::DimensionMismatch(s.dim(), d));
            }
        }
        Ok(())
    }

    /// Gaussian envelope only.
    #[inline]
    pub fn envelope(&self, k: &FourVector<T>) -> T {
        let r2 = k.euclid_dist2(&self.center);
        (-r2 / (self.width * self.width * lit(2.0))).exp()
    }

    #[inline]
    pub fn value(&self, k: &FourVector<T>) -> Complex<T> {
        let g = self.envelope(k);
        let p = if self.poly.is_one() { T::one() } else { self.poly.eval(k.as_slice()) };
        let mut v = self.amplitude * (g * p);
        if let Some(a) = &self.shift {
            v = v * expi(k.dot_unchecked(a));
        }
        v
    }

    /// The packet `k ↦ conj f(-k)`.
    pub fn involution(&self) -> Self {
        WavePacket {
            center: -self.center,
            width: self.width,
            poly: self.poly.negated_args(),
            amplitude: self.amplitude.conj(),
            shift: self.shift,
        }
    }

    /// Weighted derivative polynomials `D^β f = P_β · envelope · phase` for all `|β| <= k`.
    fn derivative_polys(&self, k: usize) -> Vec<MultiPoly<Complex<T>>> {
        let d = self.dim();
        let base: MultiPoly<Complex<T>> = self.poly.map_coeffs(|c| Complex::new(c, T::zero())).scale(self.amplitude);
        let inv_s2 = T::one() / (self.width * self.width);
        let step = |p: &MultiPoly<Complex<T>>, i: usize| -> MultiPoly<Complex<T>> {
            // (x_i - c_i) as a polynomial
            let lin = MultiPoly::var(i).add(&MultiPoly::constant(Complex::new(-self.center.get(i), T::zero())));
            let mut out = p.derivative(i).add(&p.mul(&lin).scale(Complex::new(-inv_s2, T::zero())));
            if let Some(a) = &self.shift {
                let eta = if i == 0 { T::one() } else { -T::one() };
                out = out.add(&p.scale(Complex::new(T::zero(), eta * a.get(i))));
            }
            out
        };
        let mut all = vec![base];
        let mut frontier: Vec<(MultiPoly<Complex<T>>, usize)> = vec![(all[0].clone(), 0)];
        for _ in 0..k {
            let mut next = Vec::new();
            for (p, min_i) in &frontier {
                for i in *min_i..d {
                    let q = step(p, i);
                    all.push(q.clone());
                    next.push((q, i));
                }
            }
            frontier = next;
        }
        all
    }
}

/// Grid used for numerical Schwartz-norm suprema.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormGrid {
    pub points_per_dim: usize,
    pub refine_rounds: usize,
    /// Half-width of the scanned box in packet widths; derived from `K`, `L` when absent.
    #[serde(default)]
    pub half_width: Option<f64>,
}

impl Default for NormGrid {
    fn default() -> Self {
        NormGrid { points_per_dim: 401, refine_rounds: 4, half_width: None }
    }
}

impl NormGrid {
    fn points_for(&self, d: usize) -> usize {
        // keep the total node count bounded in higher dimensions
        let cap = match d {
            1 => self.points_per_dim,
            2 => self.points_per_dim.min(201),
            3 => self.points_per_dim.min(41),
            _ => self.points_per_dim.min(17),
        };
        cap.max(5) | 1
    }
}

/// `‖f‖_{K,L}` of a single packet.
pub fn packet_schwartz_norm<T: Real>(f: &WavePacket<T>, k: usize, l: usize, grid: &NormGrid) -> Result<T, PacketError> {
    let d = f.dim();
    let polys = f.derivative_polys(k);
    let lf: T = lit(l as f64);
    let eval = |x: &[T]| -> T {
        let mut r2 = T::zero();
        let mut g2 = T::zero();
        for i in 0..d {
            r2 = r2 + x[i] * x[i];
            let t = x[i] - f.center.get(i);
            g2 = g2 + t * t;
        }
        let w = (T::one() + r2).powf(lf * lit(0.5)) * (-g2 / (f.width * f.width * lit(2.0))).exp();
        let mut best = T::zero();
        for p in &polys {
            let v = p.eval(x).norm();
            if v > best {
                best = v;
            }
        }
        best * w
    };
    let sigma = f.width;
    let half = match grid.half_width {
        Some(h) => sigma * lit(h),
        None => sigma * (lit::<T>(8.0) + lit::<T>((k + l) as f64).sqrt()) + lit::<T>(0.5 * l as f64) * sigma * sigma,
    };
    let n = grid.points_for(d);
    let h = half * lit(2.0) / lit((n - 1) as f64);
    let mut idx = vec![0usize; d];
    let mut x = [T::zero(); MAX_DIM];
    let mut best = T::zero();
    let mut best_x = [T::zero(); MAX_DIM];
    let mut boundary = T::zero();
    loop {
        for i in 0..d {
            x[i] = f.center.get(i) - half + h * lit(idx[i] as f64);
        }
        let v = eval(&x[..d]);
        if v > best {
            best = v;
            best_x = x;
        }
        if idx.iter().any(|&i| i == 0 || i == n - 1) && v > boundary {
            boundary = v;
        }
        let mut c = 0;
        loop {
            if c == d {
                break;
            }
            idx[c] += 1;
            if idx[c] < n {
                break;
            }
            idx[c] = 0;
            c += 1;
        }
        if c == d {
            break;
        }
    }
    if boundary > best * lit(1e-3) {
        return Err(PacketError::GridTooCoarse { boundary: boundary.to_f64().unwrap_or(f64::NAN), interior: best.to_f64().unwrap_or(f64::NAN) });
    }
    // golden-section refinement coordinate by coordinate around the best node
    let gr: T = lit(0.618_033_988_749_894_8);
    let mut span = h;
    for _ in 0..grid.refine_rounds {
        for i in 0..d {
            let (mut a, mut b) = (best_x[i] - span, best_x[i] + span);
            let mut y = best_x;
            for _ in 0..40 {
                let c1 = b - (b - a) * gr;
                let c2 = a + (b - a) * gr;
                y[i] = c1;
                let v1 = eval(&y[..d]);
                y[i] = c2;
                let v2 = eval(&y[..d]);
                if v1 > v2 {
                    b = c2;
                } else {
                    a = c1;
                }
            }
            y[i] = (a + b) * lit(0.5);
            let v = eval(&y[..d]);
            if v > best {
                best = v;
                best_x = y;
            }
        }
        span = span * lit(0.5);
    }
    Ok(best)
}

/// `‖f₁⊗…⊗f_n‖_{K,L}`; the weight and multi-indices factorize over legs.
pub fn schwartz_norm<T: Real>(legs: &[WavePacket<T>], k: usize, l: usize, grid: &NormGrid) -> Result<T, PacketError> {
    let mut acc = T::one();
    for f in legs {
        acc = acc * packet_schwartz_norm(f, k, l, grid)?;
    }
    Ok(acc)
}

/// Value of the tensor product `∏ f_l(k_l)`.
#[inline]
pub fn product_value<T: Real>(legs: &[WavePacket<T>], ks: &[FourVector<T>]) -> Complex<T> {
    debug_assert_eq!(legs.len(), ks.len());
    let mut v = cone();
    for (f, k) in legs.iter().zip(ks) {
        v = v * f.value(k);
        if v.is_zero() {
            break;
        }
    }
    v
}

/// Leg-wise involution of a tensor product: reverse order and conjugate-reflect each leg.
pub fn product_involution<T: Real>(legs: &[WavePacket<T>]) -> Vec<WavePacket<T>> {
    legs.iter().rev().map(|f| f.involution()).collect()
}
