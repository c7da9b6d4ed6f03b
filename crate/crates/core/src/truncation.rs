//! Set partitions and the moment/cumulant (truncation) transforms on linear
//! and bilinear kernel families.
//!
//! Kernels are point-evaluable closures, so both directions act pointwise on
//! argument tuples and never need a discretisation.

use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use num_traits::Num;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

/// Largest order for which partitions are enumerated.
pub const MAX_PARTITION_ORDER: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TruncationError {
    #[error("order {0} outside the supported range 0..={MAX_PARTITION_ORDER}")]
    OrderOutOfRange(usize),
    #[error("order {order} exceeds the functional's maximum order {max}")]
    ExceedsMaxOrder { order: usize, max: usize },
    #[error("untruncation needs a vanishing zeroth truncated kernel")]
    NonzeroW0,
}

/// A set partition of `{0, …, n-1}` stored as a restricted growth string.
///
/// Block `b` holds the indices `i` with `labels[i] == b`; blocks are ordered by
/// their smallest element and indices inside a block keep their natural order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Partition {
    labels: [u8; MAX_PARTITION_ORDER],
    n: u8,
    count: u8,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.n as usize
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn block_count(&self) -> usize {
        self.count as usize
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    /// Blocks as bit masks over the index set.
    pub fn block_masks(&self) -> Vec<u32> {
        let mut masks = vec![0u32; self.count as usize];
        for i in 0..self.n as usize {
            masks[self.labels[i] as usize] |= 1 << i;
        }
        masks
    }

    /// Blocks as increasing 0-based index lists.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count as usize];
        for i in 0..self.n as usize {
            out[self.labels[i] as usize].push(i);
        }
        out
    }

    /// True for the one-block partition.
    pub fn is_full(&self) -> bool {
        self.count == 1
    }
}

fn generate(n: usize) -> Vec<Partition> {
    let mut out = Vec::new();
    if n == 0 {
        out.push(Partition { labels: [0; MAX_PARTITION_ORDER], n: 0, count: 0 });
        return out;
    }
    let mut labels = [0u8; MAX_PARTITION_ORDER];
    // maxes[i] = max(labels[0..i])
    fn rec(i: usize, n: usize, max: u8, labels: &mut [u8; MAX_PARTITION_ORDER], out: &mut Vec<Partition>) {
        if i == n {
            out.push(Partition { labels: *labels, n: n as u8, count: max + 1 });
            return;
        }
        for b in 0..=max + 1 {
            labels[i] = b;
            rec(i + 1, n, max.max(b), labels, out);
        }
    }
    labels[0] = 0;
    rec(1, n, 0, &mut labels, &mut out);
    out
}

static CACHE: [OnceLock<Vec<Partition>>; MAX_PARTITION_ORDER + 1] = [const { OnceLock::new() }; MAX_PARTITION_ORDER + 1];

/// All set partitions of an `n`-element set (cached per `n`).
pub fn enumerate_partitions(n: usize) -> Result<&'static [Partition], TruncationError> {
    if n > MAX_PARTITION_ORDER {
        return Err(TruncationError::OrderOutOfRange(n));
    }
    Ok(CACHE[n].get_or_init(|| generate(n)))
}

/// Bell number `B_n` by the Bell triangle.
pub fn bell_number(n: usize) -> u64 {
    let mut row = vec![1u64];
    for _ in 0..n {
        let mut next = vec![*row.last().unwrap()];
        for &x in &row {
            let v = *next.last().unwrap() + x;
            next.push(v);
        }
        row = next;
    }
    row[0]
}

pub type KernelFn<P, C> = Arc<dyn Fn(&[P]) -> C + Send + Sync>;

/// A family `{W_n}_{n <= N}` of point-evaluable kernels plus the constant `W_0`.
#[derive(Clone)]
pub struct KernelFunctional<P, C> {
    w0: C,
    kernels: Vec<KernelFn<P, C>>,
}

impl<P, C> KernelFunctional<P, C>
where
    P: Clone + Send + Sync + 'static,
    C: Clone + Num + Send + Sync + 'static,
{
    /// `kernels[n-1]` is `W_n`.
    pub fn new(w0: C, kernels: Vec<KernelFn<P, C>>) -> Self {
        KernelFunctional { w0, kernels }
    }

    /// One closure serving every order `1..=max_order`.
    pub fn from_fn(max_order: usize, w0: C, f: impl Fn(&[P]) -> C + Send + Sync + 'static) -> Self {
        let f: KernelFn<P, C> = Arc::new(f);
        KernelFunctional { w0, kernels: vec![f; max_order] }
    }

    pub fn zero(max_order: usize) -> Self {
        Self::from_fn(max_order, C::zero(), |_| C::zero())
    }

    pub fn max_order(&self) -> usize {
        self.kernels.len()
    }

    pub fn w0(&self) -> C {
        self.w0.clone()
    }

    pub fn eval(&self, points: &[P]) -> Result<C, TruncationError> {
        let n = points.len();
        if n == 0 {
            return Ok(self.w0.clone());
        }
        if n > self.kernels.len() {
            return Err(TruncationError::ExceedsMaxOrder { order: n, max: self.kernels.len() });
        }
        Ok((self.kernels[n - 1])(points))
    }

    fn kernel_fn(&self) -> impl Fn(&[P]) -> C + Send + Sync + 'static {
        let ks = self.kernels.clone();
        move |pts: &[P]| (ks[pts.len() - 1])(pts)
    }
}

fn gather<P: Clone>(points: &[P], mask: u32) -> Vec<P> {
    (0..points.len()).filter(|i| mask & (1 << i) != 0).map(|i| points[i].clone()).collect()
}

fn mask_indices(mask: u32) -> Vec<usize> {
    (0..32).filter(|i| mask & (1 << i) != 0).collect()
}

/// Sum over partitions of the `n`-set of products of `block(mask)`, skipping the
/// one-block partition when `skip_full` is set.
fn partition_sum<C: Clone + Num>(n: usize, skip_full: bool, block: &mut impl FnMut(u32) -> C) -> C {
    let parts = enumerate_partitions(n).expect("order checked by caller");
    let mut total = C::zero();
    for p in parts {
        if skip_full && p.is_full() {
            continue;
        }
        let mut prod = C::one();
        for mask in p.block_masks() {
            prod = prod * block(mask);
            if prod.is_zero() {
                break;
            }
        }
        total = total + prod;
    }
    total
}

/// Lifts a partition of `{0..k}` onto the elements of `mask`.
fn lift(mask: u32, local: u32) -> u32 {
    let idx = mask_indices(mask);
    let mut out = 0u32;
    for (j, &i) in idx.iter().enumerate() {
        if local & (1 << j) != 0 {
            out |= 1 << i;
        }
    }
    out
}

/// Truncated values on every non-empty subset mask of an `n`-set, given the full
/// values per subset.
fn truncate_all_masks<C: Clone + Num>(n: usize, mut full: impl FnMut(u32) -> C) -> Vec<C> {
    let size = 1usize << n;
    let mut wt: Vec<Option<C>> = vec![None; size];
    let mut order: Vec<u32> = (1..size as u32).collect();
    order.sort_by_key(|m| m.count_ones());
    for mask in order {
        let k = mask.count_ones() as usize;
        let w = full(mask);
        let rest = partition_sum(k, true, &mut |local| wt[lift(mask, local) as usize].clone().expect("smaller subsets first"));
        wt[mask as usize] = Some(w - rest);
    }
    wt.into_iter().map(|v| v.unwrap_or_else(C::zero)).collect()
}

/// `W(p₁…p_n) = Σ_λ Π_l W^T(λ_l)` at one argument tuple.
pub fn untruncate_at<P: Clone, C: Clone + Num>(
    wt: &impl Fn(&[P]) -> C,
    points: &[P],
) -> Result<C, TruncationError> {
    let n = points.len();
    if n > MAX_PARTITION_ORDER {
        return Err(TruncationError::OrderOutOfRange(n));
    }
    if n == 0 {
        return Ok(C::one());
    }
    let mut memo: Vec<Option<C>> = vec![None; 1 << n];
    Ok(partition_sum(n, false, &mut |mask| {
        if let Some(v) = &memo[mask as usize] {
            return v.clone();
        }
        let v = wt(&gather(points, mask));
        memo[mask as usize] = Some(v.clone());
        v
    }))
}

/// `W^T(p₁…p_n) = W(p₁…p_n) − Σ_{λ ≠ full} Π W^T(λ_l)` at one argument tuple.
pub fn truncate_at<P: Clone, C: Clone + Num>(w: &impl Fn(&[P]) -> C, points: &[P]) -> Result<C, TruncationError> {
    let n = points.len();
    if n > MAX_PARTITION_ORDER {
        return Err(TruncationError::OrderOutOfRange(n));
    }
    if n == 0 {
        return Ok(C::zero());
    }
    let all = truncate_all_masks(n, |mask| w(&gather(points, mask)));
    Ok(all[(1usize << n) - 1].clone())
}

/// The family `W` whose truncation is `wt` (requires `W^T_0 = 0`; then `W_0 = 1`).
pub fn untruncate<P, C>(wt: &KernelFunctional<P, C>) -> Result<KernelFunctional<P, C>, TruncationError>
where
    P: Clone + Send + Sync + 'static,
    C: Clone + Num + Send + Sync + 'static,
{
    if !wt.w0.is_zero() {
        return Err(TruncationError::NonzeroW0);
    }
    if wt.max_order() > MAX_PARTITION_ORDER {
        return Err(TruncationError::OrderOutOfRange(wt.max_order()));
    }
    let f = Arc::new(wt.kernel_fn());
    let kernels = (0..wt.max_order())
        .map(|_| {
            let f = f.clone();
            Arc::new(move |pts: &[P]| untruncate_at(&*f, pts).expect("order checked")) as KernelFn<P, C>
        })
        .collect();
    Ok(KernelFunctional { w0: C::one(), kernels })
}

/// The truncated family of `w`; the truncated zeroth kernel is 0.
pub fn truncate<P, C>(w: &KernelFunctional<P, C>) -> Result<KernelFunctional<P, C>, TruncationError>
where
    P: Clone + Send + Sync + 'static,
    C: Clone + Num + Send + Sync + 'static,
{
    if w.max_order() > MAX_PARTITION_ORDER {
        return Err(TruncationError::OrderOutOfRange(w.max_order()));
    }
    let f = Arc::new(w.kernel_fn());
    let kernels = (0..w.max_order())
        .map(|_| {
            let f = f.clone();
            Arc::new(move |pts: &[P]| truncate_at(&*f, pts).expect("order checked")) as KernelFn<P, C>
        })
        .collect();
    Ok(KernelFunctional { w0: C::zero(), kernels })
}

/// `(W∘A^⊗)_n(p) = W_n(p) Π A(p_i)` for a diagonal multiplier `A`.
pub fn apply_leg_multiplier<P, C>(
    w: &KernelFunctional<P, C>,
    a: impl Fn(&P) -> C + Send + Sync + 'static,
) -> KernelFunctional<P, C>
where
    P: Clone + Send + Sync + 'static,
    C: Clone + Num + Send + Sync + 'static,
{
    let a = Arc::new(a);
    let kernels = w
        .kernels
        .iter()
        .map(|k| {
            let k = k.clone();
            let a = a.clone();
            Arc::new(move |pts: &[P]| {
                let mut v = k(pts);
                for p in pts {
                    v = v * a(p);
                }
                v
            }) as KernelFn<P, C>
        })
        .collect();
    KernelFunctional { w0: w.w0.clone(), kernels }
}

pub type BilinearFn<P, C> = Arc<dyn Fn(&[P], &[P]) -> C + Send + Sync>;

/// Components `S_{r,q}(x; y)` for `r + q <= N`, evaluated by one closure.
#[derive(Clone)]
pub struct BilinearKernel<P, C> {
    max_order: usize,
    s00: C,
    f: BilinearFn<P, C>,
}

impl<P, C> BilinearKernel<P, C>
where
    P: Clone + Send + Sync + 'static,
    C: Clone + Num + Send + Sync + 'static,
{
    /// `f` receives the `r` left and `q` right arguments for `r + q >= 1`.
    pub fn new(max_order: usize, s00: C, f: impl Fn(&[P], &[P]) -> C + Send + Sync + 'static) -> Self {
        BilinearKernel { max_order, s00, f: Arc::new(f) }
    }

    /// `ι_⊗ W`: `S_{r,q}(x; y) = W_{r+q}(x, y)`.
    pub fn from_functional(w: &KernelFunctional<P, C>) -> Self {
        let f = w.kernel_fn();
        BilinearKernel {
            max_order: w.max_order(),
            s00: w.w0(),
            f: Arc::new(move |x: &[P], y: &[P]| {
                let mut all = x.to_vec();
                all.extend_from_slice(y);
                f(&all)
            }),
        }
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn eval(&self, x: &[P], y: &[P]) -> Result<C, TruncationError> {
        let n = x.len() + y.len();
        if n == 0 {
            return Ok(self.s00.clone());
        }
        if n > self.max_order {
            return Err(TruncationError::ExceedsMaxOrder { order: n, max: self.max_order });
        }
        Ok((self.f)(x, y))
    }
}

fn split_eval<P: Clone, C>(f: &impl Fn(&[P], &[P]) -> C, x: &[P], y: &[P], mask: u32) -> C {
    let r = x.len();
    let xs: Vec<P> = (0..r).filter(|i| mask & (1 << i) != 0).map(|i| x[i].clone()).collect();
    let ys: Vec<P> = (0..y.len()).filter(|j| mask & (1 << (r + j)) != 0).map(|j| y[j].clone()).collect();
    f(&xs, &ys)
}

/// `S^T(x; y)` at one argument pair, blocks split into their left and right parts.
pub fn truncate_bilinear_at<P: Clone, C: Clone + Num>(
    s: &impl Fn(&[P], &[P]) -> C,
    x: &[P],
    y: &[P],
) -> Result<C, TruncationError> {
    let n = x.len() + y.len();
    if n > MAX_PARTITION_ORDER {
        return Err(TruncationError::OrderOutOfRange(n));
    }
    if n == 0 {
        return Ok(C::zero());
    }
    let all = truncate_all_masks(n, |mask| split_eval(s, x, y, mask));
    Ok(all[(1usize << n) - 1].clone())
}

/// `S(x; y) = Σ_λ Π S^T(λ_l^<; λ_l^>)` at one argument pair.
pub fn untruncate_bilinear_at<P: Clone, C: Clone + Num>(
    st: &impl Fn(&[P], &[P]) -> C,
    x: &[P],
    y: &[P],
) -> Result<C, TruncationError> {
    let n = x.len() + y.len();
    if n > MAX_PARTITION_ORDER {
        return Err(TruncationError::OrderOutOfRange(n));
    }
    if n == 0 {
        return Ok(C::one());
    }
    Ok(partition_sum(n, false, &mut |mask| split_eval(st, x, y, mask)))
}

/// The truncated bilinear family, with `S^T_{0,0} = 0`.
pub fn truncate_bilinear<P, C>(s: &BilinearKernel<P, C>) -> Result<BilinearKernel<P, C>, TruncationError>
where
    P: Clone + Send + Sync + 'static,
    C: Clone + Num + Send + Sync + 'static,
{
    if s.max_order > MAX_PARTITION_ORDER {
        return Err(TruncationError::OrderOutOfRange(s.max_order));
    }
    let f = s.f.clone();
    Ok(BilinearKernel {
        max_order: s.max_order,
        s00: C::zero(),
        f: Arc::new(move |x: &[P], y: &[P]| truncate_bilinear_at(&|a: &[P], b: &[P]| f(a, b), x, y).expect("order checked")),
    })
}

/// Random complex kernels `W_n(x) = c_n Π(1 + b_{n,i} x_i) + e_n exp(i Σ a_{n,i} x_i)`
/// on real points, with `W_0 = 1`.
pub fn random_kernel_family(max_order: usize, seed: u64) -> KernelFunctional<f64, Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cx = |rng: &mut ChaCha8Rng| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let kernels = (1..=max_order)
        .map(|n| {
            let (c, e) = (cx(&mut rng), cx(&mut rng));
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            Arc::new(move |x: &[f64]| {
                let poly: f64 = x.iter().zip(&b).map(|(x, b)| 1.0 + b * x).product();
                let phase: f64 = x.iter().zip(&a).map(|(x, a)| x * a).sum();
                c * poly + e * Complex64::from_polar(1.0, phase)
            }) as KernelFn<f64, Complex64>
        })
        .collect();
    KernelFunctional::new(Complex64::new(1.0, 0.0), kernels)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundTripRow {
    pub order: usize,
    pub bell: u64,
    pub partitions: usize,
    pub tuples: usize,
    pub max_rel_error: f64,
}

/// `untruncate(truncate(W))` against `W` on random tuples in `[-1, 1]^n`.
pub fn round_trip_check(max_order: usize, tuples: usize, seed: u64) -> Result<Vec<RoundTripRow>, TruncationError> {
    let w = random_kernel_family(max_order, seed);
    let back = untruncate(&truncate(&w)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    (0..=max_order)
        .map(|n| {
            let mut worst = 0.0f64;
            for _ in 0..tuples {
                let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let (a, b) = (w.eval(&x)?, back.eval(&x)?);
                worst = worst.max((a - b).norm() / a.norm());
            }
            Ok(RoundTripRow { order: n, bell: bell_number(n), partitions: enumerate_partitions(n)?.len(), tuples, max_rel_error: worst })
        })
        .collect()
}
