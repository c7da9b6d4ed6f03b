//! Polynomial fits of reference data on the bounded-energy on-shell region.
//!
//! Points of `Q_n(E)` have the first `r` legs on the backward shell, the rest
//! forward, zero total momentum and outgoing energy at most `E`. Fits use
//! symmetric polynomials in the off-diagonal invariants `q_{ij}`, `i < j`; the
//! diagonal ones are `m²` on the shell.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{invariant_index, invariant_map_into, omega_unchecked, FourVector, ModelParams};
use crate::transfer::{invariant_count, permutations, symmetrize_realify, validate_family, TransferFamily, TransferPolynomial, Violation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("invalid leg split n = {n}, r = {r}")]
    Split { n: usize, r: usize },
    #[error("invalid fit config: {0}")]
    Config(String),
    #[error("data rows have {got} invariants, expected {expected}")]
    DataShape { expected: usize, got: usize },
    #[error("empty {0} data")]
    EmptyData(&'static str),
    #[error("training and validation share {0} points")]
    Leakage(usize),
    #[error("fit for n = {0} did not reach its target")]
    FitFailed(usize),
    #[error("fit for n = {n} has argument degree {degree} above the bound {bound}")]
    DegreeBound { n: usize, degree: usize, bound: usize },
    #[error("family fails validation: {0:?}")]
    Validation(Vec<Violation>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub e_max: f64,
    pub epsilon: f64,
    pub max_degree: usize,
    pub train_count: usize,
    pub validate_count: usize,
    pub seed: u64,
    #[serde(default = "default_attempts")]
    pub max_attempts: u64,
}

fn default_attempts() -> u64 {
    20_000_000
}

impl FitConfig {
    pub fn new(e_max: f64, epsilon: f64, max_degree: usize) -> Self {
        FitConfig { e_max, epsilon, max_degree, train_count: 2000, validate_count: 2000, seed: 1, max_attempts: default_attempts() }
    }

    pub fn validate(&self) -> Result<(), FitError> {
        if !(self.e_max > 0.0 && self.e_max.is_finite()) {
            return Err(FitError::Config(format!("e_max must be positive, got {}", self.e_max)));
        }
        if !(self.epsilon > 0.0) {
            return Err(FitError::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.train_count == 0 || self.validate_count == 0 || self.max_attempts == 0 {
            return Err(FitError::Config("sample counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SampleStatus {
    Filled,
    /// Budget exhausted before `count` points were found.
    Partial { rate: f64 },
    /// No points, with the reason.
    Empty { reason: String },
}

#[derive(Clone, Debug)]
pub struct PhaseSpaceSample {
    pub n: usize,
    pub r: usize,
    pub e_max: f64,
    pub points: Vec<Vec<FourVector<f64>>>,
    pub attempts: u64,
    pub status: SampleStatus,
}

impl PhaseSpaceSample {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.points.len() as f64 / self.attempts as f64
        }
    }
}

/// Why `Q_n(E)` with split `r` has no points, if it has none.
///
/// Equal masses forbid `1 → k` and `k → 1` for `k ≥ 2`; otherwise the set is
/// nonempty iff `max(r, n-r)·m ≤ E`.
pub fn qn_obstruction(n: usize, r: usize, e_max: f64, m: f64) -> Option<String> {
    if r == 1 || n - r == 1 {
        return Some(format!("a single particle of mass {m} cannot convert into {} particles of the same mass", n - 1));
    }
    let k = r.max(n - r);
    if k as f64 * m > e_max {
        return Some(format!("{k} particles on one side need energy {} > E_max = {e_max}", k as f64 * m));
    }
    None
}

/// Whether the union over all splits is empty.
pub fn qn_union_is_empty(n: usize, e_max: f64, m: f64) -> bool {
    (1..n).all(|r| qn_obstruction(n, r, e_max, m).is_some())
}

/// A point of `Q_n(E)` with all particles at rest, when `n` is even.
pub fn rest_configuration(n: usize, d: usize, m: f64) -> Option<Vec<FourVector<f64>>> {
    if n % 2 != 0 {
        return None;
    }
    let at = |e: f64| FourVector::from_parts(e, &vec![0.0; d - 1]);
    Some((0..n).map(|l| at(if l < n / 2 { -m } else { m })).collect())
}

fn unit_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    if dim == 1 {
        return vec![if rng.gen_bool(0.5) { 1.0 } else { -1.0 }];
    }
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s: f64 = v.iter().map(|x| x * x).sum();
        if s > 1e-6 && s <= 1.0 {
            let r = s.sqrt();
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

fn ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-radius..radius)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() <= radius * radius {
            return v;
        }
    }
}

/// One rejection-sampling draw: all but the last two legs uniform in the
/// momentum ball, the last (outgoing) pair solved in its rest frame.
fn draw(rng: &mut ChaCha8Rng, n: usize, r: usize, e_max: f64, m: f64, sd: usize) -> Option<Vec<FourVector<f64>>> {
    let mut legs = Vec::with_capacity(n);
    let mut total = vec![0.0; sd + 1];
    let mut e_in = 0.0;
    for l in 0..n - 2 {
        let p = ball(rng, sd, e_max);
        let w = omega_unchecked(&p, m);
        let e = if l < r { -w } else { w };
        if l < r {
            e_in += w;
            if e_in > e_max {
                return None;
            }
        }
        total[0] += e;
        for (t, x) in total[1..].iter_mut().zip(&p) {
            *t += x;
        }
        legs.push(FourVector::from_parts(e, &p));
    }
    let k0 = -total[0];
    let kv: Vec<f64> = total[1..].iter().map(|x| -x).collect();
    let k2 = kv.iter().map(|x| x * x).sum::<f64>();
    let mass2 = k0 * k0 - k2;
    if k0 <= 0.0 || mass2 < 4.0 * m * m {
        return None;
    }
    let mass = mass2.sqrt();
    let pstar = (mass2 / 4.0 - m * m).max(0.0).sqrt();
    let u = unit_direction(rng, sd);
    let gamma = k0 / mass;
    let beta: Vec<f64> = kv.iter().map(|x| x / k0).collect();
    let b2 = k2 / (k0 * k0);
    for s in [1.0, -1.0] {
        let p: Vec<f64> = u.iter().map(|x| s * pstar * x).collect();
        let bp: f64 = beta.iter().zip(&p).map(|(a, b)| a * b).sum();
        let e = gamma * (mass / 2.0 + bp);
        let c = if b2 > 0.0 { (gamma - 1.0) * bp / b2 } else { 0.0 } + gamma * mass / 2.0;
        let q: Vec<f64> = p.iter().zip(&beta).map(|(x, b)| x + c * b).collect();
        legs.push(FourVector::from_parts(e, &q));
    }
    let out: f64 = legs[r..].iter().map(|k| k.energy()).sum();
    (out <= e_max).then_some(legs)
}

const BATCHES_PER_ROUND: u64 = 16;
const ATTEMPTS_PER_BATCH: u64 = 4096;

/// Rejection sampling of `count` points of `Q_n(E)` with split `r`, seeded
/// and independent of the thread count.
pub fn sample_qn_with(n: usize, r: usize, count: usize, seed: u64, cfg: &FitConfig, params: &ModelParams<f64>) -> Result<PhaseSpaceSample, FitError> {
    if n < 3 || r == 0 || r >= n {
        return Err(FitError::Split { n, r });
    }
    cfg.validate()?;
    let mut sample = PhaseSpaceSample { n, r, e_max: cfg.e_max, points: Vec::new(), attempts: 0, status: SampleStatus::Filled };
    if let Some(reason) = qn_obstruction(n, r, cfg.e_max, params.m) {
        log::info!("Q_{n} with r = {r} is empty: {reason}");
        sample.status = SampleStatus::Empty { reason };
        return Ok(sample);
    }
    let sd = params.d - 1;
    let mut round = 0u64;
    while sample.points.len() < count && sample.attempts < cfg.max_attempts {
        let batches: Vec<Vec<Vec<FourVector<f64>>>> = (0..BATCHES_PER_ROUND)
            .into_par_iter()
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(round * BATCHES_PER_ROUND + b);
                (0..ATTEMPTS_PER_BATCH).filter_map(|_| draw(&mut rng, n, r, cfg.e_max, params.m, sd)).collect()
            })
            .collect();
        sample.attempts += BATCHES_PER_ROUND * ATTEMPTS_PER_BATCH;
        for b in batches {
            sample.points.extend(b);
        }
        round += 1;
    }
    sample.points.truncate(count);
    let rate = sample.acceptance_rate();
    if sample.points.is_empty() || rate < 1e-6 {
        let reason = format!("acceptance rate {rate:e} after {} attempts", sample.attempts);
        log::warn!("Q_{n} sampling gave up: {reason}");
        sample.points.clear();
        sample.status = SampleStatus::Empty { reason };
    } else if sample.points.len() < count {
        sample.status = SampleStatus::Partial { rate };
    }
    Ok(sample)
}

/// [`sample_qn_with`] drawing `cfg.train_count` points with `cfg.seed`.
pub fn sample_qn(n: usize, r: usize, cfg: &FitConfig, params: &ModelParams<f64>) -> Result<PhaseSpaceSample, FitError> {
    sample_qn_with(n, r, cfg.train_count, cfg.seed, cfg, params)
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintViolation {
    Count { expected: usize, got: usize },
    Shell { leg: usize, residual: f64 },
    Sign { leg: usize },
    Energy { outgoing: f64 },
    Conservation { component: usize, residual: f64 },
    InvariantBound { i: usize, j: usize, value: f64 },
}

/// Re-checks every defining constraint of `Q_n(E)` for one tuple.
pub fn check_qn_point(ks: &[FourVector<f64>], n: usize, r: usize, e_max: f64, m: f64, tol: f64) -> Result<(), ConstraintViolation> {
    if ks.len() != n {
        return Err(ConstraintViolation::Count { expected: n, got: ks.len() });
    }
    let scale = e_max.max(m);
    for (l, k) in ks.iter().enumerate() {
        let c = k.as_slice();
        let sq = c[0] * c[0] - c[1..].iter().map(|x| x * x).sum::<f64>();
        let res = (sq - m * m).abs() / (scale * scale);
        if !(res <= tol) {
            return Err(ConstraintViolation::Shell { leg: l + 1, residual: res });
        }
        if (l < r) != (c[0] < 0.0) || c[0] == 0.0 {
            return Err(ConstraintViolation::Sign { leg: l + 1 });
        }
    }
    let outgoing: f64 = ks[r..].iter().map(|k| k.as_slice()[0]).sum();
    if outgoing > e_max * (1.0 + tol) {
        return Err(ConstraintViolation::Energy { outgoing });
    }
    for a in 0..ks[0].dim() {
        let s: f64 = ks.iter().map(|k| k.as_slice()[a]).sum();
        if !(s.abs() / scale <= tol) {
            return Err(ConstraintViolation::Conservation { component: a, residual: s.abs() / scale });
        }
    }
    let bound = (n as f64 * e_max).powi(2);
    for i in 0..n {
        for j in i..n {
            let c = (ks[i].as_slice(), ks[j].as_slice());
            let q = c.0[0] * c.1[0] - c.0[1..].iter().zip(&c.1[1..]).map(|(x, y)| x * y).sum::<f64>();
            if q.abs() > bound {
                return Err(ConstraintViolation::InvariantBound { i: i + 1, j: j + 1, value: q });
            }
        }
    }
    Ok(())
}

/// Built-in reference functions.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Reference {
    Constant { value: f64 },
    /// `exp(-q_{ij}/m²)`, 1-based indices.
    ExpQ { i: usize, j: usize },
    /// Real part of a polynomial in the invariants.
    Polynomial { polynomial: TransferPolynomial<f64> },
}

impl Reference {
    pub fn eval(&self, ks: &[FourVector<f64>], m: f64) -> f64 {
        match self {
            Reference::Constant { value } => *value,
            Reference::ExpQ { i, j } => (-ks[i - 1].dot_unchecked(&ks[j - 1]) / (m * m)).exp(),
            Reference::Polynomial { polynomial } => polynomial.eval(ks).map(|z| z.re).unwrap_or(f64::NAN),
        }
    }
}

/// Values of a reference at full invariant vectors `(q_11, q_12, q_22, …)`.
#[derive(Clone, Debug, Default)]
pub struct FitData {
    pub invariants: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl FitData {
    pub fn from_sample(sample: &PhaseSpaceSample, f: impl Fn(&[FourVector<f64>]) -> f64 + Sync) -> Self {
        let (invariants, values) = sample
            .points
            .par_iter()
            .map(|ks| {
                let mut q = Vec::new();
                invariant_map_into(ks, &mut q);
                (q, f(ks))
            })
            .unzip();
        FitData { invariants, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Seeded shuffle, then the first `train` rows and the rest.
    pub fn split(mut self, train: usize, seed: u64) -> (FitData, FitData) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let rest = idx.split_off(train.min(idx.len()));
        let mut take = |ix: &[usize]| FitData {
            invariants: ix.iter().map(|&i| std::mem::take(&mut self.invariants[i])).collect(),
            values: ix.iter().map(|&i| self.values[i]).collect(),
        };
        let a = take(&idx);
        let b = take(&rest);
        (a, b)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check(&self, n: usize, what: &'static str) -> Result<(), FitError> {
        if self.is_empty() {
            return Err(FitError::EmptyData(what));
        }
        let want = invariant_count(n);
        match self.invariants.iter().find(|q| q.len() != want) {
            Some(q) => Err(FitError::DataShape { expected: want, got: q.len() }),
            None => Ok(()),
        }
    }
}

/// Orbit sums of monomials in the off-diagonal invariants.
#[derive(Clone, Debug)]
struct OrbitBasis {
    /// Per orbit: total degree and member exponent vectors over the off-diagonal pairs.
    orbits: Vec<(usize, Vec<Vec<u16>>)>,
    pairs: Vec<(usize, usize)>,
}

fn compositions(total: usize, parts: usize, prefix: &mut Vec<u16>, out: &mut Vec<Vec<u16>>) {
    if parts == 1 {
        prefix.push(total as u16);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for e in (0..=total).rev() {
        prefix.push(e as u16);
        compositions(total - e, parts - 1, prefix, out);
        prefix.pop();
    }
}

impl OrbitBasis {
    fn new(n: usize) -> Self {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        OrbitBasis { orbits: Vec::new(), pairs }
    }

    /// Appends the orbits of exact degree `deg`.
    fn extend(&mut self, n: usize, deg: usize) {
        let np = self.pairs.len();
        let index: BTreeMap<(usize, usize), usize> = self.pairs.iter().enumerate().map(|(k, &p)| (p, k)).collect();
        let actions: Vec<Vec<usize>> = permutations(n)
            .iter()
            .map(|s| self.pairs.iter().map(|&(i, j)| index[&(s[i].min(s[j]), s[i].max(s[j]))]).collect())
            .collect();
        let mut monos = Vec::new();
        compositions(deg, np.max(1), &mut Vec::new(), &mut monos);
        let mut seen = BTreeSet::new();
        for mono in monos {
            if seen.contains(&mono) {
                continue;
            }
            let mut orbit = BTreeSet::new();
            for a in &actions {
                let mut img = vec![0u16; np];
                for (k, &e) in mono.iter().enumerate() {
                    img[a[k]] += e;
                }
                orbit.insert(img);
            }
            seen.extend(orbit.iter().cloned());
            self.orbits.push((deg, orbit.into_iter().collect()));
        }
    }

    fn row(&self, q: &[f64], scale: f64, max_deg: usize) -> Vec<f64> {
        let x: Vec<Vec<f64>> = self
            .pairs
            .iter()
            .map(|&(i, j)| {
                let v = q[invariant_index(i, j)] / scale;
                let mut pw = vec![1.0; max_deg + 1];
                for k in 1..=max_deg {
                    pw[k] = pw[k - 1] * v;
                }
                pw
            })
            .collect();
        self.orbits
            .iter()
            .map(|(_, members)| members.iter().map(|e| e.iter().enumerate().map(|(k, &p)| x[k][p as usize]).product::<f64>()).sum())
            .collect()
    }

    fn polynomial(&self, n: usize, coeffs: &[f64], scale: f64) -> TransferPolynomial<f64> {
        let mut terms = BTreeMap::new();
        for ((deg, members), &c) in self.orbits.iter().zip(coeffs) {
            if c == 0.0 {
                continue;
            }
            let w = c / scale.powi(*deg as i32);
            for e in members {
                let mut d = vec![0u16; invariant_count(n)];
                for (k, &p) in e.iter().enumerate() {
                    let (i, j) = self.pairs[k];
                    d[invariant_index(i, j)] = p;
                }
                terms.insert(d, Complex64::new(w, 0.0));
            }
        }
        TransferPolynomial::from_map(n, terms).unwrap()
    }
}

/// Least squares via column-pivoted QR on unit-norm columns, dropping
/// directions whose pivot falls below `rtol` of the largest.
fn pivoted_least_squares(a: DMatrix<f64>, b: &DVector<f64>, rtol: f64) -> (DVector<f64>, usize) {
    let p = a.ncols();
    let norms: Vec<f64> = (0..p).map(|j| a.column(j).norm()).collect();
    let mut a = a;
    for (j, &nj) in norms.iter().enumerate() {
        if nj > 0.0 {
            a.column_mut(j).scale_mut(1.0 / nj);
        }
    }
    let qr = a.col_piv_qr();
    let mut rhs = b.clone();
    qr.q_tr_mul(&mut rhs);
    let r = qr.r();
    let top = r[(0, 0)].abs();
    let rank = (0..p).take_while(|&i| r[(i, i)].abs() > rtol * top).count();
    let mut y = DVector::zeros(p);
    for i in (0..rank).rev() {
        let mut s = rhs[i];
        for k in i + 1..rank {
            s -= r[(i, k)] * y[k];
        }
        y[i] = s / r[(i, i)];
    }
    qr.p().inv_permute_rows(&mut y);
    for (j, &nj) in norms.iter().enumerate() {
        if nj > 0.0 {
            y[j] /= nj;
        }
    }
    (y, rank)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DegreeStep {
    pub degree: usize,
    pub columns: usize,
    pub rank: usize,
    pub train_sup_error: f64,
    pub validate_sup_error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub n: usize,
    /// Symmetric real polynomial in the invariants.
    pub polynomial: TransferPolynomial<f64>,
    /// Sup error of `polynomial` on the validation points.
    pub achieved_sup_error: f64,
    pub train_sup_error: f64,
    pub degree_used: usize,
    pub train_count: usize,
    pub validate_count: usize,
    pub epsilon: f64,
    pub passed: bool,
    pub history: Vec<DegreeStep>,
}

fn sup_error(p: &TransferPolynomial<f64>, data: &FitData) -> f64 {
    data.invariants
        .par_iter()
        .zip(&data.values)
        .map(|(q, v)| (p.eval_invariants(q).re - v).abs())
        .reduce(|| 0.0, f64::max)
}

/// Least-squares fits of escalating degree until the validation sup error
/// drops below `cfg.epsilon`.
pub fn fit_data(n: usize, train: &FitData, validate: &FitData, cfg: &FitConfig) -> Result<FitReport, FitError> {
    cfg.validate()?;
    train.check(n, "training")?;
    validate.check(n, "validation")?;
    let bits = |q: &Vec<f64>| q.iter().map(|x| x.to_bits()).collect::<Vec<u64>>();
    let train_keys: BTreeSet<Vec<u64>> = train.invariants.iter().map(bits).collect();
    let shared = validate.invariants.iter().filter(|q| train_keys.contains(&bits(q))).count();
    if shared > 0 {
        return Err(FitError::Leakage(shared));
    }
    let scale = cfg.e_max * cfg.e_max;
    let b = DVector::from_column_slice(&train.values);
    let mut basis = OrbitBasis::new(n);
    let mut history = Vec::new();
    let mut best: Option<FitReport> = None;
    for degree in 0..=cfg.max_degree {
        basis.extend(n, degree);
        let cols = basis.orbits.len();
        if cols > train.len() {
            log::warn!("degree {degree} needs {cols} columns for {} training points; stopping", train.len());
            break;
        }
        let rows: Vec<Vec<f64>> = train.invariants.par_iter().map(|q| basis.row(q, scale, degree)).collect();
        let a = DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]);
        let (coef, rank) = pivoted_least_squares(a, &b, 1e-10);
        let poly = symmetrize_realify(&basis.polynomial(n, coef.as_slice(), scale));
        let (tr, va) = (sup_error(&poly, train), sup_error(&poly, validate));
        log::debug!("n = {n}, degree {degree}: {cols} columns, rank {rank}, train {tr:e}, validate {va:e}");
        history.push(DegreeStep { degree, columns: cols, rank, train_sup_error: tr, validate_sup_error: va });
        let report = FitReport {
            n,
            polynomial: poly,
            achieved_sup_error: va,
            train_sup_error: tr,
            degree_used: degree,
            train_count: train.len(),
            validate_count: validate.len(),
            epsilon: cfg.epsilon,
            passed: va < cfg.epsilon,
            history: Vec::new(),
        };
        let better = best.as_ref().map_or(true, |r| va < r.achieved_sup_error);
        let done = report.passed;
        if done || better {
            best = Some(report);
        }
        if done {
            break;
        }
    }
    let mut report = best.ok_or(FitError::Config("no degree could be fitted".into()))?;
    report.history = history;
    Ok(report)
}

/// Training data come from `sample`; validation points are drawn from a
/// separate seed stream.
pub fn fit_polynomial(
    reference: impl Fn(&[FourVector<f64>]) -> f64 + Sync,
    sample: &PhaseSpaceSample,
    cfg: &FitConfig,
    params: &ModelParams<f64>,
) -> Result<FitReport, FitError> {
    let val = sample_qn_with(sample.n, sample.r, cfg.validate_count, cfg.seed ^ 0x9e37_79b9_7f4a_7c15, cfg, params)?;
    fit_data(sample.n, &FitData::from_sample(sample, &reference), &FitData::from_sample(&val, &reference), cfg)
}

/// `M_2 = 1`, fitted members, constant 1 for every other order.
pub fn build_family(fits: &BTreeMap<usize, FitReport>, l_max: usize) -> Result<TransferFamily<f64>, FitError> {
    let mut fam = TransferFamily::new(l_max).with(TransferPolynomial::one(2));
    for (&n, f) in fits {
        if !f.passed {
            return Err(FitError::FitFailed(n));
        }
        let degree = f.polynomial.max_argument_degree();
        if degree > l_max {
            return Err(FitError::DegreeBound { n, degree, bound: l_max });
        }
        fam = fam.with(f.polynomial.clone());
    }
    let v = validate_family(&fam);
    if !v.passed {
        return Err(FitError::Validation(v.violations));
    }
    Ok(fam)
}
