//! Form-factor components `F̂^G_n`, their transfer-weighted versions and the
//! truncated S-matrix density and amplitudes.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{FourVector, LegLabel, ShellPoint};
use crate::packet::WavePacket;
use crate::scalar::{lit, CEstimate, Real};
use crate::structure::{LegMultiplier, StructureError, StructureEvaluator};
use crate::transfer::{validate_family, TransferFamily, TransferPolynomial, ValidationReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormFactorError {
    #[error("expected {expected} labels, got {got}")]
    LabelCount { expected: usize, got: usize },
    #[error("no transfer family configured")]
    MissingTransfer,
    #[error("transfer family violates the admissibility conditions: {0:?}")]
    InvalidTransfer(ValidationReport),
    #[error("invalid amplitude request: {0}")]
    Request(String),
    #[error("leg {leg} has energy of the wrong sign for the in/out pattern")]
    SignPattern { leg: usize },
    #[error("momentum conservation violated by {residual:.3e}")]
    Conservation { residual: f64 },
    #[error(transparent)]
    Structure(#[from] StructureError),
}

/// Support of one propagator atom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AtomKind {
    /// `δ^±_m`, sign +1 forward.
    OnShell(i8),
    /// `PV 1/(k² - m²)`.
    PrincipalValue,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagatorAtom<T> {
    pub kind: AtomKind,
    pub coefficient: Complex<T>,
}

/// The atoms of `Δ̂_m(a, ·)`.
pub fn delta_hat_atoms<T: Real>(a: LegLabel) -> Vec<PropagatorAtom<T>> {
    let ipi = Complex::new(T::zero(), T::PI());
    let atom = |kind, coefficient| PropagatorAtom { kind, coefficient };
    match a {
        LegLabel::In => vec![atom(AtomKind::OnShell(1), -ipi), atom(AtomKind::OnShell(-1), ipi)],
        LegLabel::Loc => vec![atom(AtomKind::PrincipalValue, Complex::new(T::one(), T::zero()))],
        LegLabel::Out => vec![atom(AtomKind::OnShell(1), ipi), atom(AtomKind::OnShell(-1), -ipi)],
    }
}

/// Legs of a connected scattering amplitude: `r` incoming followed by outgoing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct AmplitudeRequest<T> {
    pub in_packets: Vec<WavePacket<T>>,
    pub out_packets: Vec<WavePacket<T>>,
}

impl<T: Real> AmplitudeRequest<T> {
    pub fn new(in_packets: Vec<WavePacket<T>>, out_packets: Vec<WavePacket<T>>) -> Result<Self, FormFactorError> {
        let req = AmplitudeRequest { in_packets, out_packets };
        req.validate()?;
        Ok(req)
    }

    pub fn r(&self) -> usize {
        self.in_packets.len()
    }

    pub fn n(&self) -> usize {
        self.in_packets.len() + self.out_packets.len()
    }

    /// Incoming legs must be centred at negative energy, outgoing at positive.
    pub fn validate(&self) -> Result<(), FormFactorError> {
        let (r, n) = (self.r(), self.n());
        if n < 3 || r < 1 || r >= n {
            return Err(FormFactorError::Request(format!("need n ≥ 3 and 1 ≤ r ≤ n-1, got n = {n}, r = {r}")));
        }
        for (l, f) in self.legs().iter().enumerate() {
            let e = f.center.energy();
            if (l < r && !(e < T::zero())) || (l >= r && !(e > T::zero())) {
                return Err(FormFactorError::SignPattern { leg: l + 1 });
            }
        }
        Ok(())
    }

    pub fn legs(&self) -> Vec<WavePacket<T>> {
        self.in_packets.iter().chain(&self.out_packets).cloned().collect()
    }
}

/// Form-factor and amplitude evaluation on top of a structure evaluator.
#[derive(Clone, Debug)]
pub struct FormFactorEvaluator<T> {
    pub structure: StructureEvaluator<T>,
    pub transfer: Option<TransferFamily<T>>,
}

impl<T: Real> FormFactorEvaluator<T> {
    /// Rejects a transfer family that fails validation.
    pub fn new(structure: StructureEvaluator<T>, transfer: Option<TransferFamily<T>>) -> Result<Self, FormFactorError> {
        if let Some(fam) = &transfer {
            let rep = validate_family(fam);
            if !rep.passed {
                return Err(FormFactorError::InvalidTransfer(rep));
            }
        }
        Ok(FormFactorEvaluator { structure, transfer })
    }

    fn weight(&self, n: usize) -> Result<TransferPolynomial<T>, FormFactorError> {
        self.transfer.as_ref().map(|f| f.get(n)).ok_or(FormFactorError::MissingTransfer)
    }

    /// The `j`-terms of `F̂^G_n` (n ≥ 3), optionally weighted by `M_n`.
    pub fn eval_fg_terms(
        &self,
        labels: &[LegLabel],
        legs: &[WavePacket<T>],
        weight: Option<&TransferPolynomial<T>>,
    ) -> Result<Vec<CEstimate<T>>, FormFactorError> {
        let n = legs.len();
        if labels.len() != n {
            return Err(FormFactorError::LabelCount { expected: n, got: labels.len() });
        }
        if n < 3 {
            return Err(StructureError::InvalidOrder(n).into());
        }
        let ev = &self.structure;
        let mut out = Vec::with_capacity(n);
        for (j, &a) in labels.iter().enumerate() {
            let mut term = CEstimate::zero();
            for atom in delta_hat_atoms::<T>(a) {
                let v = match atom.kind {
                    AtomKind::OnShell(sign) => ev.onshell_term(j, legs, weight, sign)?,
                    AtomKind::PrincipalValue => ev.pv_term(j, legs, weight)?,
                };
                term = term + v.scale(atom.coefficient);
            }
            out.push(term);
        }
        Ok(out)
    }

    fn fg_weighted(
        &self,
        labels: &[LegLabel],
        legs: &[WavePacket<T>],
        weight: Option<&TransferPolynomial<T>>,
    ) -> Result<CEstimate<T>, FormFactorError> {
        let n = legs.len();
        if labels.len() != n {
            return Err(FormFactorError::LabelCount { expected: n, got: labels.len() });
        }
        let ev = &self.structure;
        if n == 2 {
            let r = if labels.iter().all(|&a| a == LegLabel::Loc) {
                ev.eval_ghat_2(legs)?
            } else {
                let ones = [LegMultiplier::One, LegMultiplier::One];
                ev.check_tolerance(ev.two_point_shell(legs, &ones, ev.params.m), &[])?
            };
            return Ok(r);
        }
        let total: CEstimate<T> = self.eval_fg_terms(labels, legs, weight)?.into_iter().sum();
        Ok(ev.check_tolerance(total, &[])?)
    }

    /// `F̂^{G(a_1,…,a_n)}_n(f)`.
    pub fn eval_fg_n(&self, labels: &[LegLabel], legs: &[WavePacket<T>]) -> Result<CEstimate<T>, FormFactorError> {
        self.fg_weighted(labels, legs, None)
    }

    /// `(M·F̂^G)_n(f)` with `M_n` from the transfer family.
    pub fn eval_f_n(&self, labels: &[LegLabel], legs: &[WavePacket<T>]) -> Result<CEstimate<T>, FormFactorError> {
        let m = self.weight(legs.len())?;
        if legs.len() == 2 {
            // M_2 = 1 by validation
            return Ok(self.fg_weighted(labels, legs, None)?.scale(m.eval_invariants(&[T::zero(); 3])));
        }
        self.fg_weighted(labels, legs, Some(&m))
    }

    /// Density `2πi M_n(k)` of `Ŝ^T_{r,n-r}` at a point of the constrained shell.
    pub fn smatrix_density(&self, req: &AmplitudeRequest<T>, momenta: &[ShellPoint<T>]) -> Result<Complex<T>, FormFactorError> {
        let (r, n) = (req.r(), req.n());
        if momenta.len() != n {
            return Err(FormFactorError::LabelCount { expected: n, got: momenta.len() });
        }
        for (l, p) in momenta.iter().enumerate() {
            let want = if l < r { -1 } else { 1 };
            if p.sign() != want {
                return Err(FormFactorError::SignPattern { leg: l + 1 });
            }
        }
        let ks: Vec<FourVector<T>> = momenta.iter().map(|p| p.momentum()).collect();
        let d = ks[0].dim();
        let mut sum = FourVector::zero(d);
        let mut scale = T::one();
        for k in &ks {
            sum = sum + *k;
            scale = scale.max(k.as_slice().iter().fold(T::zero(), |a, &x| a.max(x.abs())));
        }
        let residual = sum.as_slice().iter().fold(T::zero(), |a, &x| a.max(x.abs()));
        if residual > lit::<T>(1e-10) * scale {
            return Err(FormFactorError::Conservation { residual: residual.to_f64().unwrap_or(f64::NAN) });
        }
        let m = match &self.transfer {
            Some(f) => f.get(n).eval(&ks).map_err(StructureError::from)?,
            None => Complex::new(T::one(), T::zero()),
        };
        Ok(m * Complex::new(T::zero(), T::TAU()))
    }

    /// `∫ Ŝ^T_{r,n-r} f`: the density integrated over the constrained shells
    /// against the packets.
    pub fn smatrix_amplitude(&self, req: &AmplitudeRequest<T>) -> Result<CEstimate<T>, FormFactorError> {
        req.validate()?;
        let legs = req.legs();
        let weight = self.transfer.as_ref().map(|f| f.get(legs.len()));
        let ev = &self.structure;
        // the last incoming leg carries the backward-shell atom
        let v = ev.onshell_term(req.r() - 1, &legs, weight.as_ref(), -1)?;
        let r = v.scale(Complex::new(T::zero(), T::TAU()));
        Ok(ev.check_tolerance(r, &[])?)
    }
}
