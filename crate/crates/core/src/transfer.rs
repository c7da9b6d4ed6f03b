//! Transfer polynomials `M_n` stored in Lorentz-invariant coordinates.
//!
//! Coordinates are the pairwise products `q_{ij} = k_i·k_j` (`i <= j`) in the
//! order of [`crate::kinematics::invariant_map`]. A permutation of the momenta
//! acts on them by `q_{ij} ↦ q_{σ(i)σ(j)}`.

use std::collections::BTreeMap;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{invariant_index, invariant_map_into, FourVector};
use crate::scalar::{cone, czero, lit, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransferError {
    #[error("polynomial of order {expected} evaluated at {got} momenta")]
    OrderMismatch { expected: usize, got: usize },
    #[error("degree vector has length {got}, expected {expected}")]
    BadDegreeLength { expected: usize, got: usize },
    #[error("unknown invariant name {0:?}")]
    BadInvariantName(String),
    #[error("invariant index out of range: q{0}{1} for order {2}")]
    IndexOutOfRange(usize, usize, usize),
}

/// Number of invariant coordinates for `n` momenta.
pub fn invariant_count(n: usize) -> usize {
    n * (n + 1) / 2
}

/// 0-based pairs `(i, j)`, `i <= j`, in coordinate order.
pub fn invariant_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(invariant_count(n));
    for j in 0..n {
        for i in 0..=j {
            out.push((i, j));
        }
    }
    out
}

/// Name of coordinate `q_{ij}` with 1-based indices.
pub fn invariant_name(i: usize, j: usize, n: usize) -> String {
    if n <= 9 {
        format!("q{}{}", i, j)
    } else {
        format!("q{}_{}", i, j)
    }
}

fn parse_invariant_name(s: &str, n: usize) -> Result<(usize, usize), TransferError> {
    let bad = || TransferError::BadInvariantName(s.to_string());
    let body = s.strip_prefix('q').ok_or_else(bad)?;
    let (i, j) = if let Some((a, b)) = body.split_once('_') {
        (a.parse::<usize>().map_err(|_| bad())?, b.parse::<usize>().map_err(|_| bad())?)
    } else {
        let bytes = body.as_bytes();
        if bytes.len() != 2 || !bytes.iter().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        ((bytes[0] - b'0') as usize, (bytes[1] - b'0') as usize)
    };
    if i == 0 || j == 0 || i > n || j > n {
        return Err(TransferError::IndexOutOfRange(i, j, n));
    }
    Ok(if i <= j { (i, j) } else { (j, i) })
}

/// A monomial: exponent per invariant coordinate.
pub type Degrees = Vec<u16>;

#[derive(Clone, Debug)]
struct CompiledTerm<T> {
    coeff: Complex<T>,
    factors: Vec<(usize, i32)>,
}

/// A polynomial in the invariant coordinates of `n` momenta.
#[derive(Clone, Debug)]
pub struct TransferPolynomial<T> {
    n: usize,
    terms: BTreeMap<Degrees, Complex<T>>,
    degree_bound: Option<usize>,
    compiled: Vec<CompiledTerm<T>>,
}

impl<T: Real> PartialEq for TransferPolynomial<T> {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.terms == other.terms && self.degree_bound == other.degree_bound
    }
}

impl<T: Real> TransferPolynomial<T> {
    pub fn from_map(n: usize, terms: BTreeMap<Degrees, Complex<T>>) -> Result<Self, TransferError> {
        let len = invariant_count(n);
        for k in terms.keys() {
            if k.len() != len {
                return Err(TransferError::BadDegreeLength { expected: len, got: k.len() });
            }
        }
        let terms: BTreeMap<Degrees, Complex<T>> = terms.into_iter().filter(|(_, c)| c.re != T::zero() || c.im != T::zero()).collect();
        let compiled = compile(&terms);
        Ok(TransferPolynomial { n, terms, degree_bound: None, compiled })
    }

    pub fn zero(n: usize) -> Self {
        Self::from_map(n, BTreeMap::new()).unwrap()
    }

    pub fn constant(n: usize, c: T) -> Self {
        let mut m = BTreeMap::new();
        m.insert(vec![0; invariant_count(n)], Complex::new(c, T::zero()));
        Self::from_map(n, m).unwrap()
    }

    pub fn one(n: usize) -> Self {
        Self::constant(n, T::one())
    }

    /// The single coordinate `q_{ij}` (1-based indices).
    pub fn q(n: usize, i: usize, j: usize) -> Result<Self, TransferError> {
        if i == 0 || j == 0 || i > n || j > n {
            return Err(TransferError::IndexOutOfRange(i, j, n));
        }
        let mut d = vec![0; invariant_count(n)];
        d[invariant_index(i - 1, j - 1)] = 1;
        let mut m = BTreeMap::new();
        m.insert(d, cone());
        Self::from_map(n, m)
    }

    pub fn with_degree_bound(mut self, bound: usize) -> Self {
        self.degree_bound = Some(bound);
        self
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn degree_bound(&self) -> Option<usize> {
        self.degree_bound
    }

    pub fn terms(&self) -> &BTreeMap<Degrees, Complex<T>> {
        &self.terms
    }

    pub fn is_constant_one(&self) -> bool {
        self.terms.len() == 1
            && self.terms.iter().all(|(d, c)| d.iter().all(|&e| e == 0) && *c == cone())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut m = self.terms.clone();
        for (d, c) in &other.terms {
            let slot = m.entry(d.clone()).or_insert_with(czero);
            *slot = *slot + *c;
        }
        Self::from_map(self.n, m).unwrap()
    }

    pub fn scale(&self, c: Complex<T>) -> Self {
        Self::from_map(self.n, self.terms.iter().map(|(d, v)| (d.clone(), *v * c)).collect()).unwrap()
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut m: BTreeMap<Degrees, Complex<T>> = BTreeMap::new();
        for (da, ca) in &self.terms {
            for (db, cb) in &other.terms {
                let d: Degrees = da.iter().zip(db).map(|(a, b)| a + b).collect();
                let slot = m.entry(d).or_insert_with(czero);
                *slot = *slot + *ca * *cb;
            }
        }
        Self::from_map(self.n, m).unwrap()
    }

    /// Degree in momentum `k_l` (0-based): `q_{lj}` counts 1, `q_{ll}` counts 2.
    pub fn argument_degree(&self, l: usize) -> usize {
        let pairs = invariant_pairs(self.n);
        self.terms
            .keys()
            .map(|d| {
                d.iter()
                    .zip(&pairs)
                    .map(|(&e, &(i, j))| {
                        let e = e as usize;
                        if i == l && j == l {
                            2 * e
                        } else if i == l || j == l {
                            e
                        } else {
                            0
                        }
                    })
                    .sum::<usize>()
            })
            .max()
            .unwrap_or(0)
    }

    pub fn max_argument_degree(&self) -> usize {
        (0..self.n).map(|l| self.argument_degree(l)).max().unwrap_or(0)
    }

    pub fn total_degree(&self) -> usize {
        self.terms.keys().map(|d| d.iter().map(|&e| e as usize).sum::<usize>()).max().unwrap_or(0)
    }

    /// Evaluates at an invariant vector.
    #[inline]
    pub fn eval_invariants(&self, q: &[T]) -> Complex<T> {
        let mut s = czero();
        for t in &self.compiled {
            let mut m = T::one();
            for &(i, p) in &t.factors {
                m = m * if p == 1 { q[i] } else { q[i].powi(p) };
            }
            s = s + t.coeff * m;
        }
        s
    }

    /// `M_n(k_1, …, k_n)`.
    pub fn eval(&self, momenta: &[FourVector<T>]) -> Result<Complex<T>, TransferError> {
        if momenta.len() != self.n {
            return Err(TransferError::OrderMismatch { expected: self.n, got: momenta.len() });
        }
        let mut q = Vec::with_capacity(invariant_count(self.n));
        invariant_map_into(momenta, &mut q);
        Ok(self.eval_invariants(&q))
    }

    /// Real part of [`Self::eval`].
    pub fn eval_real(&self, momenta: &[FourVector<T>]) -> Result<T, TransferError> {
        self.eval(momenta).map(|z| z.re)
    }

    /// The polynomial `P∘σ`, i.e. `q_{ij} ↦ q_{σ(i)σ(j)}` (0-based permutation).
    pub fn permuted(&self, sigma: &[usize]) -> Self {
        let map = permutation_action(self.n, sigma);
        let m = self
            .terms
            .iter()
            .map(|(d, c)| {
                let mut nd = vec![0; d.len()];
                for (k, &e) in d.iter().enumerate() {
                    nd[map[k]] += e;
                }
                (nd, *c)
            })
            .collect();
        let mut p = Self::from_map(self.n, m).unwrap();
        p.degree_bound = self.degree_bound;
        p
    }

    pub fn is_symmetric(&self) -> bool {
        adjacent_transpositions(self.n).iter().all(|s| self.permuted(s) == *self)
    }

    pub fn has_complex_coefficients(&self) -> bool {
        self.terms.values().any(|c| c.im != T::zero())
    }
}

fn compile<T: Real>(terms: &BTreeMap<Degrees, Complex<T>>) -> Vec<CompiledTerm<T>> {
    terms
        .iter()
        .map(|(d, c)| CompiledTerm {
            coeff: *c,
            factors: d.iter().enumerate().filter(|(_, &e)| e > 0).map(|(i, &e)| (i, e as i32)).collect(),
        })
        .collect()
}

/// Index map on coordinates induced by a permutation of the momenta.
pub fn permutation_action(n: usize, sigma: &[usize]) -> Vec<usize> {
    invariant_pairs(n).iter().map(|&(i, j)| invariant_index(sigma[i], sigma[j])).collect()
}

fn adjacent_transpositions(n: usize) -> Vec<Vec<usize>> {
    (0..n.saturating_sub(1))
        .map(|k| {
            let mut s: Vec<usize> = (0..n).collect();
            s.swap(k, k + 1);
            s
        })
        .collect()
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut p: Vec<usize> = (0..n).collect();
    let mut out = vec![p.clone()];
    loop {
        let Some(i) = (1..n).rev().find(|&i| p[i - 1] < p[i]) else { break };
        let j = (i..n).rev().find(|&j| p[j] > p[i - 1]).unwrap();
        p.swap(i - 1, j);
        p[i..].reverse();
        out.push(p.clone());
    }
    out
}

/// Averages the real part over the permutation action.
pub fn symmetrize_realify<T: Real>(p: &TransferPolynomial<T>) -> TransferPolynomial<T> {
    let perms = permutations(p.n);
    let w: T = T::one() / lit(perms.len() as f64);
    let mut m: BTreeMap<Degrees, Complex<T>> = BTreeMap::new();
    for s in &perms {
        let map = permutation_action(p.n, s);
        for (d, c) in &p.terms {
            let mut nd = vec![0; d.len()];
            for (k, &e) in d.iter().enumerate() {
                nd[map[k]] += e;
            }
            let slot = m.entry(nd).or_insert_with(czero);
            *slot = *slot + Complex::new(c.re * w, T::zero());
        }
    }
    let mut out = TransferPolynomial::from_map(p.n, m).unwrap();
    out.degree_bound = p.degree_bound;
    out
}

/// The family `{M_n}` with its per-argument degree bound.
#[derive(Clone, Debug)]
pub struct TransferFamily<T> {
    pub members: BTreeMap<usize, TransferPolynomial<T>>,
    pub l_max: usize,
}

impl<T: Real> TransferFamily<T> {
    pub fn new(l_max: usize) -> Self {
        TransferFamily { members: BTreeMap::new(), l_max }
    }

    pub fn with(mut self, p: TransferPolynomial<T>) -> Self {
        self.members.insert(p.order(), p);
        self
    }

    /// `M_n`, defaulting to the constant 1 for absent orders.
    pub fn get(&self, n: usize) -> TransferPolynomial<T> {
        self.members.get(&n).cloned().unwrap_or_else(|| TransferPolynomial::one(n))
    }
}

/// One violated clause of the validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "clause")]
pub enum Violation {
    /// Coefficients not invariant under a permutation (1-based witness).
    Symmetry { n: usize, permutation: Vec<usize>, monomial: String },
    /// Random evaluation changed under a permutation.
    SymmetryEvaluation { n: usize, permutation: Vec<usize>, difference: f64 },
    Reality { n: usize, monomial: String, imag: f64 },
    TwoPointNotOne { detail: String },
    DegreeBound { n: usize, argument: usize, degree: usize, bound: usize },
    OrderMismatch { key: usize, order: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub violations: Vec<Violation>,
}

fn monomial_name(d: &[u16], n: usize) -> String {
    let pairs = invariant_pairs(n);
    let parts: Vec<String> = d
        .iter()
        .zip(&pairs)
        .filter(|(&e, _)| e > 0)
        .map(|(&e, &(i, j))| if e == 1 { invariant_name(i + 1, j + 1, n) } else { format!("{}^{}", invariant_name(i + 1, j + 1, n), e) })
        .collect();
    if parts.is_empty() {
        "1".into()
    } else {
        parts.join("*")
    }
}

fn symmetry_witness<T: Real>(p: &TransferPolynomial<T>) -> Option<(Vec<usize>, String)> {
    // transpositions (1 2), (1 3), …, then (2 3), … ; they generate S_n
    let n = p.n;
    for a in 0..n {
        for b in a + 1..n {
            let mut s: Vec<usize> = (0..n).collect();
            s.swap(a, b);
            let q = p.permuted(&s);
            if q != *p {
                let mono = p
                    .terms
                    .iter()
                    .find(|(d, c)| q.terms.get(*d) != Some(c))
                    .or_else(|| q.terms.iter().find(|(d, _)| !p.terms.contains_key(*d)))
                    .map(|(d, _)| monomial_name(d, n))
                    .unwrap_or_default();
                return Some((s.iter().map(|x| x + 1).collect(), mono));
            }
        }
    }
    None
}

fn random_momenta<T: Real>(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<FourVector<T>> {
    (0..n)
        .map(|_| {
            let c: Vec<T> = (0..d).map(|_| lit(rng.gen_range(-2.0..2.0))).collect();
            FourVector::new(&c).unwrap()
        })
        .collect()
}

/// Checks symmetry, reality, `M_2 = 1` and the per-argument degree bound.
pub fn validate_family<T: Real>(fam: &TransferFamily<T>) -> ValidationReport {
    let mut v = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for (&key, p) in &fam.members {
        if key != p.n {
            v.push(Violation::OrderMismatch { key, order: p.n });
            continue;
        }
        let n = p.n;
        if let Some((perm, mono)) = symmetry_witness(p) {
            v.push(Violation::Symmetry { n, permutation: perm, monomial: mono });
        } else if n >= 2 {
            // evaluation cross-check of the structural result
            for _ in 0..16 {
                let ks: Vec<FourVector<T>> = random_momenta(&mut rng, n, 3);
                let a = p.eval(&ks).unwrap();
                let mut sw = ks.clone();
                sw.swap(0, 1);
                let b = p.eval(&sw).unwrap();
                let diff = (a - b).norm().to_f64().unwrap_or(f64::NAN);
                let scale = a.norm().max(T::one()).to_f64().unwrap_or(1.0);
                if !(diff <= 1e-10 * scale) {
                    let mut perm: Vec<usize> = (1..=n).collect();
                    perm.swap(0, 1);
                    v.push(Violation::SymmetryEvaluation { n, permutation: perm, difference: diff });
                    break;
                }
            }
        }
        for (d, c) in &p.terms {
            if c.im != T::zero() {
                v.push(Violation::Reality { n, monomial: monomial_name(d, n), imag: c.im.to_f64().unwrap_or(f64::NAN) });
                break;
            }
        }
        if n == 2 && !p.is_constant_one() {
            v.push(Violation::TwoPointNotOne { detail: format!("M_2 has {} terms, degree {}", p.terms.len(), p.total_degree()) });
        }
        for l in 0..n {
            let deg = p.argument_degree(l);
            if deg > fam.l_max {
                v.push(Violation::DegreeBound { n, argument: l + 1, degree: deg, bound: fam.l_max });
                break;
            }
        }
    }
    ValidationReport { passed: v.is_empty(), violations: v }
}

/// Compares `conj M(-k_n, …, -k_1)` with `M(k_1, …, k_n)` on the given tuples.
pub fn hermiticity_identity_check<T: Real>(p: &TransferPolynomial<T>, samples: &[Vec<FourVector<T>>]) -> bool {
    samples.iter().all(|ks| {
        let Ok(lhs) = p.eval(ks) else { return false };
        let rev: Vec<FourVector<T>> = ks.iter().rev().map(|k| -*k).collect();
        let rhs = p.eval(&rev).unwrap().conj();
        (lhs - rhs).norm() <= lit::<T>(1e-12) * lhs.norm().max(T::one())
    })
}

/// [`hermiticity_identity_check`] on `count` seeded random tuples in dimension `d`.
pub fn hermiticity_identity_check_random<T: Real>(p: &TransferPolynomial<T>, d: usize, count: usize, seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Vec<FourVector<T>>> = (0..count).map(|_| random_momenta(&mut rng, p.n, d)).collect();
    hermiticity_identity_check(p, &samples)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermJson {
    degrees: BTreeMap<String, u16>,
    coeff: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coeff_im: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolyJson {
    n: usize,
    terms: Vec<TermJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    degree_bound: Option<usize>,
}

impl<T: Real> Serialize for TransferPolynomial<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let pairs = invariant_pairs(self.n);
        let terms = self
            .terms
            .iter()
            .map(|(d, c)| TermJson {
                degrees: d
                    .iter()
                    .zip(&pairs)
                    .filter(|(&e, _)| e > 0)
                    .map(|(&e, &(i, j))| (invariant_name(i + 1, j + 1, self.n), e))
                    .collect(),
                coeff: c.re.to_f64().unwrap(),
                coeff_im: if c.im != T::zero() { Some(c.im.to_f64().unwrap()) } else { None },
            })
            .collect();
        PolyJson { n: self.n, terms, degree_bound: self.degree_bound }.serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for TransferPolynomial<T> {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let pj = PolyJson::deserialize(de)?;
        let len = invariant_count(pj.n);
        let mut m: BTreeMap<Degrees, Complex<T>> = BTreeMap::new();
        for t in pj.terms {
            let mut d = vec![0u16; len];
            for (name, e) in t.degrees {
                let (i, j) = parse_invariant_name(&name, pj.n).map_err(D::Error::custom)?;
                d[invariant_index(i - 1, j - 1)] += e;
            }
            let c = Complex::new(lit::<T>(t.coeff), lit::<T>(t.coeff_im.unwrap_or(0.0)));
            let slot = m.entry(d).or_insert_with(czero);
            *slot = *slot + c;
        }
        let mut p = TransferPolynomial::from_map(pj.n, m).map_err(D::Error::custom)?;
        p.degree_bound = pj.degree_bound;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        assert_eq!(invariant_name(1, 2, 3), "q12");
        assert_eq!(invariant_name(3, 10, 10), "q3_10");
        assert_eq!(parse_invariant_name("q21", 3).unwrap(), (1, 2));
        assert_eq!(parse_invariant_name("q3_10", 10).unwrap(), (3, 10));
        assert!(parse_invariant_name("q14", 3).is_err());
        assert!(parse_invariant_name("x12", 3).is_err());
    }

    #[test]
    fn q12_at_rest() {
        let p = TransferPolynomial::<f64>::q(3, 1, 2).unwrap();
        let k = FourVector::new(&[1.5, 0.0]).unwrap();
        let k3 = FourVector::new(&[0.2, 0.9]).unwrap();
        assert_eq!(p.eval_real(&[k, k, k3]).unwrap(), 2.25);
        assert!(p.eval(&[k, k]).is_err());
    }

    #[test]
    fn degree_accounting() {
        let p = TransferPolynomial::<f64>::q(3, 1, 1).unwrap().mul(&TransferPolynomial::q(3, 1, 2).unwrap());
        assert_eq!(p.argument_degree(0), 3);
        assert_eq!(p.argument_degree(1), 1);
        assert_eq!(p.argument_degree(2), 0);
    }

    #[test]
    fn permutation_list() {
        let p = permutations(4);
        assert_eq!(p.len(), 24);
        assert_eq!(p[1], vec![0, 1, 3, 2]);
    }
}
