//! Minkowski geometry, mass shells, Lorentz invariants, cutoffs and the
//! one-dimensional Fourier convention.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{adaptive_with_breaks, QuadError, Tolerance};
use crate::scalar::{expi, lit, CEstimate, Real};

pub const MAX_DIM: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("unsupported spacetime dimension {0} (expected 2..=4)")]
    BadDimension(usize),
    #[error("negative mass {0}")]
    NegativeMass(f64),
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("fourier transform: {0}")]
    Quadrature(#[from] QuadError),
}

/// Which asymptotic or local propagator a leg carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LegLabel {
    In,
    Loc,
    Out,
}

impl LegLabel {
    /// +1 for `in`, -1 for `out`, 0 for `loc`.
    pub fn sigma(self) -> i32 {
        match self {
            LegLabel::In => 1,
            LegLabel::Loc => 0,
            LegLabel::Out => -1,
        }
    }
}

impl std::fmt::Display for LegLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LegLabel::In => "in",
            LegLabel::Loc => "loc",
            LegLabel::Out => "out",
        })
    }
}

/// Model constants: dimension, mass, gap and cutoff width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams<T> {
    pub d: usize,
    pub m: T,
    pub m0: T,
    pub eps_phi: T,
}

impl<T: Real> ModelParams<T> {
    /// Mass `m`, gap `m0 = m` and `eps_phi = m^2/2`.
    pub fn new(d: usize, m: T) -> Result<Self, KinematicsError> {
        let p = ModelParams { d, m, m0: m, eps_phi: m * m * lit(0.5) };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        if !(2..=MAX_DIM).contains(&self.d) {
            return Err(KinematicsError::BadDimension(self.d));
        }
        let ok = self.m.is_finite()
            && self.m > T::zero()
            && self.m0 > T::zero()
            && self.m0 <= self.m
            && self.eps_phi > T::zero()
            && self.eps_phi < self.m * self.m;
        if !ok {
            return Err(KinematicsError::InvalidParams(format!(
                "need 0 < m0 <= m and 0 < eps_phi < m^2, got m={}, m0={}, eps_phi={}",
                self.m, self.m0, self.eps_phi
            )));
        }
        Ok(())
    }

    pub fn cutoff(&self) -> CutoffSpec<T> {
        CutoffSpec { eps: self.eps_phi }
    }
}

/// A momentum in `d <= 4` dimensions; index 0 is the energy.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct FourVector<T> {
    c: [T; MAX_DIM],
    d: usize,
}

impl<T: Real> FourVector<T> {
    pub fn new(components: &[T]) -> Result<Self, KinematicsError> {
        let d = components.len();
        if !(1..=MAX_DIM).contains(&d) {
            return Err(KinematicsError::BadDimension(d));
        }
        let mut c = [T::zero(); MAX_DIM];
        c[..d].copy_from_slice(components);
        Ok(FourVector { c, d })
    }

    pub fn zero(d: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&d));
        FourVector { c: [T::zero(); MAX_DIM], d }
    }

    pub fn from_parts(energy: T, spatial: &[T]) -> Self {
        let d = spatial.len() + 1;
        assert!(d <= MAX_DIM, "at most {} spatial components", MAX_DIM - 1);
        let mut c = [T::zero(); MAX_DIM];
        c[0] = energy;
        c[1..d].copy_from_slice(spatial);
        FourVector { c, d }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn energy(&self) -> T {
        self.c[0]
    }

    #[inline]
    pub fn spatial(&self) -> &[T] {
        &self.c[1..self.d]
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.c[..self.d]
    }

    #[inline]
    pub fn get(&self, i: usize) -> T {
        self.c[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: T) {
        self.c[i] = v;
    }

    pub fn with_energy(mut self, e: T) -> Self {
        self.c[0] = e;
        self
    }

    /// Minkowski square `k·k`.
    #[inline]
    pub fn square(&self) -> T {
        self.dot_unchecked(self)
    }

    #[inline]
    pub fn spatial_norm2(&self) -> T {
        self.spatial().iter().fold(T::zero(), |s, &x| s + x * x)
    }

    /// Euclidean squared distance over all components.
    #[inline]
    pub fn euclid_dist2(&self, other: &Self) -> T {
        let mut s = T::zero();
        for i in 0..self.d {
            let t = self.c[i] - other.c[i];
            s = s + t * t;
        }
        s
    }

    pub fn dot(&self, other: &Self) -> Result<T, KinematicsError> {
        if self.d != other.d {
            return Err(KinematicsError::DimensionMismatch(self.d, other.d));
        }
        Ok(self.dot_unchecked(other))
    }

    #[inline]
    pub fn dot_unchecked(&self, other: &Self) -> T {
        let mut s = self.c[0] * other.c[0];
        for i in 1..self.d {
            s = s - self.c[i] * other.c[i];
        }
        s
    }

    pub fn scale(mut self, a: T) -> Self {
        for i in 0..self.d {
            self.c[i] = self.c[i] * a;
        }
        self
    }

    /// Time reflection `(k⁰, k⃗) -> (-k⁰, k⃗)`.
    pub fn time_reflected(mut self) -> Self {
        self.c[0] = -self.c[0];
        self
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.as_slice().to_vec()
    }
}

impl<T: Real> std::ops::Add for FourVector<T> {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        debug_assert_eq!(self.d, o.d);
        for i in 0..self.d {
            self.c[i] = self.c[i] + o.c[i];
        }
        self
    }
}

impl<T: Real> std::ops::Sub for FourVector<T> {
    type Output = Self;
    fn sub(mut self, o: Self) -> Self {
        debug_assert_eq!(self.d, o.d);
        for i in 0..self.d {
            self.c[i] = self.c[i] - o.c[i];
        }
        self
    }
}

impl<T: Real> std::ops::Neg for FourVector<T> {
    type Output = Self;
    fn neg(mut self) -> Self {
        for i in 0..self.d {
            self.c[i] = -self.c[i];
        }
        self
    }
}

impl<T: Real + Serialize> Serialize for FourVector<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.as_slice().serialize(s)
    }
}

impl<'de, T: Real + Deserialize<'de>> Deserialize<'de> for FourVector<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v: Vec<T> = Vec::deserialize(d)?;
        FourVector::new(&v).map_err(serde::de::Error::custom)
    }
}

/// `x·y = x⁰y⁰ − x⃗·y⃗`.
pub fn minkowski_dot<T: Real>(x: &FourVector<T>, y: &FourVector<T>) -> Result<T, KinematicsError> {
    x.dot(y)
}

/// `sqrt(|k⃗|² + mass²)`.
pub fn omega<T: Real>(spatial: &[T], mass: T) -> Result<T, KinematicsError> {
    if mass < T::zero() {
        return Err(KinematicsError::NegativeMass(mass.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(omega_unchecked(spatial, mass))
}

#[inline]
pub fn omega_unchecked<T: Real>(spatial: &[T], mass: T) -> T {
    (spatial.iter().fold(mass * mass, |s, &x| s + x * x)).sqrt()
}

/// A point on the forward (`sign = +1`) or backward (`sign = -1`) shell of mass `mass`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShellPoint<T> {
    spatial: [T; MAX_DIM - 1],
    ds: usize,
    mass: T,
    sign: i8,
}

impl<T: Real> ShellPoint<T> {
    pub fn new(spatial: &[T], mass: T, sign: i8) -> Result<Self, KinematicsError> {
        if spatial.len() + 1 > MAX_DIM || spatial.is_empty() {
            return Err(KinematicsError::BadDimension(spatial.len() + 1));
        }
        if mass < T::zero() {
            return Err(KinematicsError::NegativeMass(mass.to_f64().unwrap_or(f64::NAN)));
        }
        assert!(sign == 1 || sign == -1, "shell sign must be ±1");
        let mut s = [T::zero(); MAX_DIM - 1];
        s[..spatial.len()].copy_from_slice(spatial);
        Ok(ShellPoint { spatial: s, ds: spatial.len(), mass, sign })
    }

    pub fn spatial(&self) -> &[T] {
        &self.spatial[..self.ds]
    }

    pub fn mass(&self) -> T {
        self.mass
    }

    pub fn sign(&self) -> i8 {
        self.sign
    }

    pub fn omega(&self) -> T {
        omega_unchecked(self.spatial(), self.mass)
    }

    pub fn energy(&self) -> T {
        if self.sign > 0 {
            self.omega()
        } else {
            -self.omega()
        }
    }

    pub fn momentum(&self) -> FourVector<T> {
        FourVector::from_parts(self.energy(), self.spatial())
    }
}

/// Ordered pairwise products `(k₁², k₁·k₂, k₂², k₁·k₃, …, k_n²)`.
pub fn invariant_map<T: Real>(points: &[FourVector<T>]) -> Result<Vec<T>, KinematicsError> {
    if let Some(first) = points.first() {
        for p in points {
            if p.dim() != first.dim() {
                return Err(KinematicsError::DimensionMismatch(first.dim(), p.dim()));
            }
        }
    }
    let mut out = Vec::with_capacity(points.len() * (points.len() + 1) / 2);
    invariant_map_into(points, &mut out);
    Ok(out)
}

/// Same as [`invariant_map`] without dimension checks, reusing `out`.
pub fn invariant_map_into<T: Real>(points: &[FourVector<T>], out: &mut Vec<T>) {
    out.clear();
    for j in 0..points.len() {
        for i in 0..=j {
            out.push(points[i].dot_unchecked(&points[j]));
        }
    }
}

/// Position of `q_{ij}` (0-based, `i <= j`) in the invariant vector.
#[inline]
pub fn invariant_index(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    j * (j + 1) / 2 + i
}

/// Linear map on momenta, stored as a `d×d` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct LorentzTransform<T> {
    mat: [[T; MAX_DIM]; MAX_DIM],
    d: usize,
}

impl<T: Real> LorentzTransform<T> {
    pub fn identity(d: usize) -> Self {
        let mut mat = [[T::zero(); MAX_DIM]; MAX_DIM];
        for (i, row) in mat.iter_mut().enumerate() {
            row[i] = T::one();
        }
        LorentzTransform { mat, d }
    }

    /// Boost along spatial axis `axis` (1-based) with the given rapidity.
    pub fn boost(d: usize, axis: usize, rapidity: T) -> Self {
        assert!(axis >= 1 && axis < d);
        let mut l = Self::identity(d);
        let (ch, sh) = (rapidity.cosh(), rapidity.sinh());
        l.mat[0][0] = ch;
        l.mat[0][axis] = sh;
        l.mat[axis][0] = sh;
        l.mat[axis][axis] = ch;
        l
    }

    /// Rotation in the spatial plane `(a, b)` (1-based axes).
    pub fn rotation(d: usize, a: usize, b: usize, angle: T) -> Self {
        assert!(a >= 1 && b >= 1 && a < d && b < d && a != b);
        let mut l = Self::identity(d);
        let (s, c) = angle.sin_cos();
        l.mat[a][a] = c;
        l.mat[a][b] = -s;
        l.mat[b][a] = s;
        l.mat[b][b] = c;
        l
    }

    pub fn time_reflection(d: usize) -> Self {
        let mut l = Self::identity(d);
        l.mat[0][0] = -T::one();
        l
    }

    pub fn parity(d: usize) -> Self {
        let mut l = Self::identity(d);
        for i in 1..d {
            l.mat[i][i] = -T::one();
        }
        l
    }

    pub fn compose(&self, other: &Self) -> Self {
        let mut mat = [[T::zero(); MAX_DIM]; MAX_DIM];
        for (i, row) in mat.iter_mut().enumerate().take(self.d) {
            for (j, v) in row.iter_mut().enumerate().take(self.d) {
                let mut s = T::zero();
                for k in 0..self.d {
                    s = s + self.mat[i][k] * other.mat[k][j];
                }
                *v = s;
            }
        }
        LorentzTransform { mat, d: self.d }
    }

    pub fn apply(&self, k: &FourVector<T>) -> FourVector<T> {
        let mut out = FourVector::zero(self.d);
        for i in 0..self.d {
            let mut s = T::zero();
            for j in 0..self.d {
                s = s + self.mat[i][j] * k.get(j);
            }
            out.set(i, s);
        }
        out
    }
}

/// The smooth plateau cutoff `φ` of width `eps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec<T> {
    pub eps: T,
}

fn smooth_exp<T: Real>(s: T) -> T {
    if s <= T::zero() {
        T::zero()
    } else {
        (-T::one() / s).exp()
    }
}

impl<T: Real> CutoffSpec<T> {
    pub fn phi(&self, x: T) -> T {
        let half = self.eps * lit(0.5);
        let ax = x.abs();
        if ax <= half {
            T::one()
        } else if ax >= self.eps {
            T::zero()
        } else {
            let s = (ax - half) / half;
            let a = smooth_exp(T::one() - s);
            a / (a + smooth_exp(s))
        }
    }
}

/// `θ(sign·k⁰) φ(k² − m²)`.
pub fn chi_plus_minus<T: Real>(k: &FourVector<T>, sign: i8, params: &ModelParams<T>, cutoff: &CutoffSpec<T>) -> T {
    let e = k.energy();
    let on_side = if sign > 0 { e > T::zero() } else { e < T::zero() };
    if !on_side {
        return T::zero();
    }
    cutoff.phi(k.square() - params.m * params.m)
}

/// The finite-time multiplier `χ_t` for a leg label; `1` for `loc`.
pub fn chi_t<T: Real>(label: LegLabel, k: &FourVector<T>, t: T, params: &ModelParams<T>, cutoff: &CutoffSpec<T>) -> Complex<T> {
    let sigma = match label {
        LegLabel::Loc => return Complex::new(T::one(), T::zero()),
        LegLabel::In => T::one(),
        LegLabel::Out => -T::one(),
    };
    let w = omega_unchecked(k.spatial(), params.m);
    let e = k.energy();
    let phi = cutoff.phi(k.square() - params.m * params.m);
    if phi == T::zero() || e == T::zero() {
        return Complex::new(T::zero(), T::zero());
    }
    let xi = if e > T::zero() { e - w } else { e + w };
    expi(-sigma * xi * t) * phi
}

/// `(2π)^{-1/2} ∫ e^{-iξt} f(ξ) dξ` over `[a, b]`, adaptively.
pub fn fourier_1d<T: Real>(
    f: impl Fn(T) -> Complex<T>,
    a: T,
    b: T,
    t: T,
    tol: Tolerance<T>,
) -> Result<CEstimate<T>, KinematicsError> {
    // One break per half period keeps the adaptive rule from aliasing.
    let periods = ((b - a) * t.abs() / T::PI()).to_f64().unwrap_or(0.0).ceil() as usize;
    let nb = periods.clamp(1, 100_000);
    let h = (b - a) / lit(nb as f64);
    let breaks: Vec<T> = (0..=nb).map(|i| if i == nb { b } else { a + h * lit(i as f64) }).collect();
    let tol = Tolerance { max_intervals: tol.max_intervals.max(4 * nb), ..tol };
    let r = adaptive_with_breaks(|x: T| f(x) * expi(-x * t), &breaks, tol)?;
    let norm = T::one() / (T::TAU()).sqrt();
    Ok(CEstimate::new(r.value * norm, r.abs_err * norm))
}
