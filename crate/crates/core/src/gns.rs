//! Finite-order Borchers vectors, Gram matrices of pairing functionals and
//! their metric operators. Works in `f64`.

use std::cell::RefCell;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formfactor::{FormFactorError, FormFactorEvaluator};
use crate::kinematics::{FourVector, LegLabel};
use crate::packet::{product_involution, product_value, schwartz_norm, NormGrid, PacketError, WavePacket};
use crate::truncation::{untruncate_at, TruncationError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GnsError {
    #[error("order {order} exceeds the maximum {max}")]
    OrderOverflow { order: usize, max: usize },
    #[error("positivity checks need uniform in or out labels, got {0}")]
    Label(LegLabel),
    #[error("family member {0} has zero norm")]
    ZeroNorm(usize),
    #[error("empty family")]
    EmptyFamily,
    #[error(transparent)]
    FormFactor(#[from] FormFactorError),
    #[error(transparent)]
    Packet(#[from] PacketError),
    #[error(transparent)]
    Truncation(#[from] TruncationError),
}

/// `c · f_1 ⊗ … ⊗ f_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductTerm {
    pub coefficient: Complex64,
    pub legs: Vec<WavePacket<f64>>,
}

/// `f̲ = (f_0, f_1, …)` with each component a finite sum of product tensors.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct BorchersVector {
    pub scalar: Complex64,
    pub terms: Vec<ProductTerm>,
}

impl BorchersVector {
    /// `(1, 0, 0, …)`.
    pub fn unit() -> Self {
        BorchersVector { scalar: Complex64::new(1.0, 0.0), terms: Vec::new() }
    }

    pub fn product(coefficient: Complex64, legs: Vec<WavePacket<f64>>) -> Self {
        if legs.is_empty() {
            return BorchersVector { scalar: coefficient, terms: Vec::new() };
        }
        BorchersVector { scalar: Complex64::new(0.0, 0.0), terms: vec![ProductTerm { coefficient, legs }] }
    }

    pub fn single(f: WavePacket<f64>) -> Self {
        Self::product(Complex64::new(1.0, 0.0), vec![f])
    }

    pub fn order(&self) -> usize {
        self.terms.iter().map(|t| t.legs.len()).max().unwrap_or(0)
    }

    pub fn add(mut self, other: &BorchersVector) -> Self {
        self.scalar += other.scalar;
        self.terms.extend(other.terms.iter().cloned());
        self
    }

    pub fn scale(mut self, c: Complex64) -> Self {
        self.scalar *= c;
        for t in &mut self.terms {
            t.coefficient *= c;
        }
        self
    }

    /// Order-`n` component at `ks` (`n = ks.len()`).
    pub fn component(&self, ks: &[FourVector<f64>]) -> Complex64 {
        if ks.is_empty() {
            return self.scalar;
        }
        self.terms.iter().filter(|t| t.legs.len() == ks.len()).map(|t| t.coefficient * product_value(&t.legs, ks)).sum()
    }

    /// `|f_0| + Σ |c| ‖f_1⊗…⊗f_n‖_{K,L}`.
    pub fn norm(&self, k: usize, l: usize, grid: &NormGrid) -> Result<f64, GnsError> {
        let mut acc = self.scalar.norm();
        for t in &self.terms {
            acc += t.coefficient.norm() * schwartz_norm(&t.legs, k, l, grid)?;
        }
        Ok(acc)
    }
}

/// Graded product `(f̲ ⊗ g̲)_n = Σ_{j+l=n} f_j ⊗ g_l`, up to order `max_order`.
pub fn borchers_product(f: &BorchersVector, g: &BorchersVector, max_order: usize) -> Result<BorchersVector, GnsError> {
    let order = f.order() + g.order();
    if order > max_order {
        return Err(GnsError::OrderOverflow { order, max: max_order });
    }
    let mut terms = Vec::new();
    for a in &f.terms {
        terms.push(ProductTerm { coefficient: a.coefficient * g.scalar, legs: a.legs.clone() });
    }
    for b in &g.terms {
        terms.push(ProductTerm { coefficient: f.scalar * b.coefficient, legs: b.legs.clone() });
    }
    for a in &f.terms {
        for b in &g.terms {
            let legs = a.legs.iter().chain(&b.legs).cloned().collect();
            terms.push(ProductTerm { coefficient: a.coefficient * b.coefficient, legs });
        }
    }
    terms.retain(|t| t.coefficient != Complex64::new(0.0, 0.0));
    Ok(BorchersVector { scalar: f.scalar * g.scalar, terms })
}

/// `f*_n(k_1, …, k_n) = conj f_n(-k_n, …, -k_1)`.
pub fn borchers_involution(f: &BorchersVector) -> BorchersVector {
    BorchersVector {
        scalar: f.scalar.conj(),
        terms: f
            .terms
            .iter()
            .map(|t| ProductTerm { coefficient: t.coefficient.conj(), legs: product_involution(&t.legs) })
            .collect(),
    }
}

/// A linear functional given by its values on product tensors.
pub trait PairingFunctional: Sync {
    /// Value on `f_1 ⊗ … ⊗ f_n`; `n = 0` is the scalar normalization.
    fn pair(&self, legs: &[WavePacket<f64>]) -> Result<Complex64, GnsError>;
    fn max_order(&self) -> usize;
    fn tag(&self) -> String;

    fn eval(&self, h: &BorchersVector) -> Result<Complex64, GnsError> {
        let mut acc = h.scalar * self.pair(&[])?;
        for t in &h.terms {
            acc += t.coefficient * self.pair(&t.legs)?;
        }
        Ok(acc)
    }
}

/// `F̂^G` (or `M·F̂^G`) with one label on every leg.
///
/// Truncated: `W^T_0 = W^T_1 = 0`. Untruncated: `W_0 = 1` and the partition
/// sum over truncated blocks.
pub struct FormFactorPairing<'a> {
    pub ff: &'a FormFactorEvaluator<f64>,
    pub label: LegLabel,
    pub weighted: bool,
    pub truncated: bool,
}

impl FormFactorPairing<'_> {
    fn truncated_value(&self, legs: &[WavePacket<f64>]) -> Result<Complex64, GnsError> {
        let n = legs.len();
        if n < 2 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let labels = vec![self.label; n];
        let v = if self.weighted { self.ff.eval_f_n(&labels, legs)? } else { self.ff.eval_fg_n(&labels, legs)? };
        Ok(v.value)
    }
}

impl PairingFunctional for FormFactorPairing<'_> {
    fn pair(&self, legs: &[WavePacket<f64>]) -> Result<Complex64, GnsError> {
        let n = legs.len();
        if n > self.max_order() {
            return Err(GnsError::OrderOverflow { order: n, max: self.max_order() });
        }
        if self.truncated {
            return self.truncated_value(legs);
        }
        let failure = RefCell::new(None);
        let idx: Vec<usize> = (0..n).collect();
        let v = untruncate_at(
            &|sub: &[usize]| {
                let block: Vec<WavePacket<f64>> = sub.iter().map(|&i| legs[i].clone()).collect();
                self.truncated_value(&block).unwrap_or_else(|e| {
                    failure.borrow_mut().get_or_insert(e);
                    Complex64::new(0.0, 0.0)
                })
            },
            &idx,
        )?;
        match failure.into_inner() {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }

    fn max_order(&self) -> usize {
        4
    }

    fn tag(&self) -> String {
        format!(
            "{}{}(labels={})",
            if self.weighted { "M*FG" } else { "FG" },
            if self.truncated { "^T" } else { "" },
            self.label
        )
    }
}

/// `H_ij = W(f_i* ⊗ f_j)`, Hermitian-symmetrized.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    pub entries: DMatrix<Complex64>,
    /// `max |H - H†| / max |H|` before symmetrization.
    pub hermiticity_deviation: f64,
    pub functional: String,
}

impl GramMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

pub fn gram_matrix(w: &dyn PairingFunctional, family: &[BorchersVector]) -> Result<GramMatrix, GnsError> {
    let n = family.len();
    if n == 0 {
        return Err(GnsError::EmptyFamily);
    }
    let stars: Vec<BorchersVector> = family.iter().map(borchers_involution).collect();
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let vals: Vec<Result<Complex64, GnsError>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let h = borchers_product(&stars[i], &family[j], w.max_order())?;
            w.eval(&h)
        })
        .collect();
    let mut raw = DMatrix::<Complex64>::zeros(n, n);
    for (&(i, j), v) in cells.iter().zip(vals) {
        raw[(i, j)] = v?;
    }
    let adj = raw.adjoint();
    let scale = raw.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let dev = (&raw - &adj).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let entries = (&raw + &adj).scale(0.5);
    Ok(GramMatrix { entries, hermiticity_deviation: if scale > 0.0 { dev / scale } else { 0.0 }, functional: w.tag() })
}

/// `H = U Λ U*`, `η = U sign(Λ) U*` with null directions mapped to `+1`.
#[derive(Clone, Debug)]
pub struct MetricDecomposition {
    pub eta: DMatrix<Complex64>,
    pub eigenvalues: Vec<f64>,
    pub basis: DMatrix<Complex64>,
    /// `(n₊, n₋, n₀)` with threshold `1e-10 ‖H‖`.
    pub inertia: (usize, usize, usize),
    /// `max |η² - I|`.
    pub eta_square_error: f64,
}

pub fn metric_decomposition(h: &DMatrix<Complex64>) -> MetricDecomposition {
    let n = h.nrows();
    let eig = SymmetricEigen::new(h.clone());
    let norm = eig.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let thr = 1e-10 * norm;
    let mut inertia = (0, 0, 0);
    let signs: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| {
            if norm == 0.0 || l.abs() <= thr {
                inertia.2 += 1;
                1.0
            } else if l > 0.0 {
                inertia.0 += 1;
                1.0
            } else {
                inertia.1 += 1;
                -1.0
            }
        })
        .collect();
    let u = eig.eigenvectors;
    let mut us = u.clone();
    for (c, s) in signs.iter().enumerate() {
        us.column_mut(c).scale_mut(*s);
    }
    let eta = &us * u.adjoint();
    let sq = &eta * &eta - DMatrix::<Complex64>::identity(n, n);
    let eta_square_error = sq.iter().map(|z| z.norm()).fold(0.0, f64::max);
    MetricDecomposition { eta, eigenvalues: eig.eigenvalues.iter().cloned().collect(), basis: u, inertia, eta_square_error }
}

/// Empirical continuity constant `max |H_ij| / (‖f_i‖ ‖f_j‖)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HsscEstimate {
    pub k: usize,
    pub l: usize,
    pub constant: f64,
    pub sample_size: usize,
    pub argmax: (usize, usize),
}

pub fn hssc_from_gram(gram: &GramMatrix, family: &[BorchersVector], k: usize, l: usize, grid: &NormGrid) -> Result<HsscEstimate, GnsError> {
    if family.len() != gram.dim() || family.is_empty() {
        return Err(GnsError::EmptyFamily);
    }
    let norms = family.iter().map(|f| f.norm(k, l, grid)).collect::<Result<Vec<_>, _>>()?;
    if let Some(i) = norms.iter().position(|&x| x <= 0.0) {
        return Err(GnsError::ZeroNorm(i));
    }
    let mut best = (0.0, (0, 0));
    for i in 0..family.len() {
        for j in 0..family.len() {
            let c = gram.entries[(i, j)].norm() / (norms[i] * norms[j]);
            if c > best.0 {
                best = (c, (i, j));
            }
        }
    }
    Ok(HsscEstimate { k, l, constant: best.0, sample_size: family.len(), argmax: best.1 })
}

pub fn hssc_estimate(
    w: &dyn PairingFunctional,
    family: &[BorchersVector],
    k: usize,
    l: usize,
    grid: &NormGrid,
) -> Result<HsscEstimate, GnsError> {
    hssc_from_gram(&gram_matrix(w, family)?, family, k, l, grid)
}

#[derive(Clone, Debug)]
pub struct PositivityReport {
    pub gram: GramMatrix,
    pub decomposition: MetricDecomposition,
    pub min_eigenvalue: f64,
    pub norm: f64,
    pub pass: bool,
}

/// Gram of the untruncated `F̂^G` with every leg `in` (or every leg `out`);
/// passes iff the smallest eigenvalue is `≥ -1e-8 ‖H‖`.
pub fn inout_positivity_check(
    ff: &FormFactorEvaluator<f64>,
    family: &[BorchersVector],
    label: LegLabel,
) -> Result<PositivityReport, GnsError> {
    if label == LegLabel::Loc {
        return Err(GnsError::Label(label));
    }
    let w = FormFactorPairing { ff, label, weighted: ff.transfer.is_some(), truncated: false };
    let gram = gram_matrix(&w, family)?;
    let decomposition = metric_decomposition(&gram.entries);
    let min_eigenvalue = decomposition.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let norm = decomposition.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    Ok(PositivityReport { pass: min_eigenvalue >= -1e-8 * norm, gram, decomposition, min_eigenvalue, norm })
}
