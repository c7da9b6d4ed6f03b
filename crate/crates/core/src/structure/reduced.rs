//! The reduced integrand `g_j`: all legs but `j` integrated over their mass
//! shells (legs before `j` backward, after `j` forward) with total momentum
//! conservation, leaving a function of `k_j`.
//!
//! The last spatial coordinate of the second-to-last remaining leg (the root
//! leg) is fixed by energy conservation and solved for; the remaining leg is
//! determined by momentum conservation.

use num_complex::Complex;

use crate::kinematics::{omega_unchecked, FourVector};
use crate::packet::WavePacket;
use crate::quadrature::k15_nodes;
use crate::scalar::{czero, lit, Real};
use crate::transfer::TransferPolynomial;

use super::line::panel_count;
use super::{LegMultiplier, StructureError, StructureEvaluator};

#[derive(Clone, Debug)]
struct FreeNode<T> {
    k: FourVector<T>,
    /// Quadrature weight times `f·A/(2ω)`.
    val: Complex<T>,
}

/// `g_j` for one choice of `j` (0-based).
pub struct ReducedIntegrand<'a, T: Real> {
    ev: &'a StructureEvaluator<T>,
    legs: &'a [WavePacket<T>],
    weight: Option<&'a TransferPolynomial<T>>,
    mults: Option<&'a [LegMultiplier<T>]>,
    include_own: bool,
    j: usize,
    d: usize,
    m: T,
    signs: Vec<i8>,
    free: Vec<usize>,
    free_nodes: Vec<Vec<FreeNode<T>>>,
    root: usize,
    solved: usize,
    perp_nodes: Vec<(Vec<T>, T)>,
    root_lo: T,
    root_hi: T,
    solved_lo: Vec<T>,
    solved_hi: Vec<T>,
    empty: bool,
}

fn product_grid<T: Real>(lo: &[T], hi: &[T], panels: &[usize]) -> Vec<(Vec<T>, T)> {
    let mut grid: Vec<(Vec<T>, T)> = vec![(Vec::new(), T::one())];
    for a in 0..lo.len() {
        let nodes = k15_nodes(lo[a], hi[a], panels[a]);
        let mut next = Vec::with_capacity(grid.len() * nodes.len());
        for (p, w) in &grid {
            for nd in &nodes {
                let mut q = p.clone();
                q.push(nd.x);
                next.push((q, *w * nd.w));
            }
        }
        grid = next;
    }
    grid
}

fn signs_of(j: usize, l: usize) -> bool {
    l < j
}

impl<'a, T: Real> ReducedIntegrand<'a, T> {
    pub(crate) fn new(
        ev: &'a StructureEvaluator<T>,
        j: usize,
        legs: &'a [WavePacket<T>],
        weight: Option<&'a TransferPolynomial<T>>,
        mults: Option<&'a [LegMultiplier<T>]>,
        include_own: bool,
    ) -> Result<Self, StructureError> {
        let n = legs.len();
        if n < 3 || j >= n {
            return Err(StructureError::InvalidOrder(n));
        }
        let d = ev.params.d;
        let m = ev.params.m;
        let s = &ev.settings;
        let w = s.box_widths;
        let signs: Vec<i8> = (0..n).map(|l| if l < j { -1 } else { 1 }).collect();
        let mut others: Vec<usize> = (0..n).filter(|&l| l != j).collect();
        // the solved pair goes on a common shell: on opposite shells the
        // forward branch k_root = -k_solved makes the energy constraint degenerate
        let pair = (0..others.len())
            .rev()
            .flat_map(|q| (0..q).rev().map(move |p| (p, q)))
            .find(|&(p, q)| signs_of(j, others[p]) == signs_of(j, others[q]));
        if let Some((p, q)) = pair {
            let (lp, lq) = (others[p], others[q]);
            others.retain(|&l| l != lp && l != lq);
            others.extend([lp, lq]);
        }
        let free = others[..others.len() - 2].to_vec();
        let root = others[others.len() - 2];
        let solved = others[others.len() - 1];

        let leg_box = |l: usize| {
            let c = legs[l].center.spatial();
            let h = legs[l].width * w;
            (c.iter().map(|&x| x - h).collect::<Vec<T>>(), c.iter().map(|&x| x + h).collect::<Vec<T>>())
        };

        // energy gap pruning: the on-shell energy over the spatial box must reach the packet
        let mut empty = false;
        for &l in &others {
            let (lo, hi) = leg_box(l);
            let mut near = T::zero();
            let mut far = T::zero();
            for a in 0..d - 1 {
                let dn = if lo[a] > T::zero() {
                    lo[a]
                } else if hi[a] < T::zero() {
                    -hi[a]
                } else {
                    T::zero()
                };
                let df = lo[a].abs().max(hi[a].abs());
                near = near + dn * dn;
                far = far + df * df;
            }
            let (wmin, wmax) = ((near + m * m).sqrt(), (far + m * m).sqrt());
            let (elo, ehi) = if signs[l] > 0 { (wmin, wmax) } else { (-wmax, -wmin) };
            let c0 = legs[l].center.energy();
            let h = legs[l].width * w;
            if ehi < c0 - h || elo > c0 + h {
                empty = true;
            }
        }

        let mut free_nodes = Vec::with_capacity(free.len());
        for &l in &free {
            let (lo, hi) = leg_box(l);
            let panels: Vec<usize> = (0..d - 1)
                .map(|a| panel_count(hi[a] - lo[a], legs[l].width, T::zero(), s, s.min_panels))
                .collect();
            let mut nodes = Vec::new();
            let mut vmax = T::zero();
            for (p, wt) in product_grid(&lo, &hi, &panels) {
                let om = omega_unchecked(&p, m);
                let e = if signs[l] > 0 { om } else { -om };
                let k = FourVector::from_parts(e, &p);
                let mut v = legs[l].value(&k) * (wt / (om * lit(2.0)));
                if let Some(ms) = mults {
                    v = v * ms[l].eval(&k, &ev.params);
                }
                vmax = vmax.max(v.norm());
                nodes.push(FreeNode { k, val: v });
            }
            let cut = vmax * s.prune_rel;
            nodes.retain(|nd| nd.val.norm() > cut);
            if nodes.is_empty() {
                empty = true;
            }
            free_nodes.push(nodes);
        }

        let (rlo, rhi) = leg_box(root);
        let perp_panels: Vec<usize> = (0..d - 2)
            .map(|a| panel_count(rhi[a] - rlo[a], legs[root].width, T::zero(), s, s.min_panels))
            .collect();
        let perp_nodes = product_grid(&rlo[..d - 2], &rhi[..d - 2], &perp_panels);
        let (solved_lo, solved_hi) = leg_box(solved);

        Ok(ReducedIntegrand {
            ev,
            legs,
            weight,
            mults,
            include_own,
            j,
            d,
            m,
            signs,
            free,
            free_nodes,
            root,
            solved,
            perp_nodes,
            root_lo: rlo[d - 2],
            root_hi: rhi[d - 2],
            solved_lo,
            solved_hi,
            empty,
        })
    }

    /// True when the term vanishes identically on the quadrature boxes.
    pub fn is_empty(&self) -> bool {
        self.empty
    }

    pub fn leg(&self) -> usize {
        self.j
    }

    /// Energies along the line at `k⃗_j` where `g_j` has an inverse square-root
    /// two-body threshold. Only located exactly when no leg is integrated over.
    pub fn edges(&self, kj: &[T]) -> Vec<T> {
        let (sr, ss) = (self.signs[self.root], self.signs[self.solved]);
        if self.empty || !self.free.is_empty() || self.d != 2 || sr != ss {
            return Vec::new();
        }
        let q = -kj[0];
        let th = (self.m * self.m * lit(4.0) + q * q).sqrt();
        vec![if sr > 0 { -th } else { th }]
    }

    /// `g_j(k)` at a single point.
    pub fn eval(&self, k: &FourVector<T>) -> Result<Complex<T>, StructureError> {
        let mut out = [czero()];
        self.eval_line(k.spatial(), &[k.energy()], &mut out)?;
        Ok(out[0])
    }

    /// Adds `g_j(e_i, k⃗)` to `out[i]` for every energy `e_i`.
    pub fn eval_line(&self, kj: &[T], energies: &[T], out: &mut [Complex<T>]) -> Result<(), StructureError> {
        if self.empty || energies.is_empty() {
            return Ok(());
        }
        let d = self.d;
        let m = self.m;
        let s = &self.ev.settings;
        let mut order: Vec<usize> = (0..energies.len()).collect();
        order.sort_by(|&a, &b| energies[a].partial_cmp(&energies[b]).unwrap_or(std::cmp::Ordering::Equal));
        let own: Vec<Complex<T>> = energies
            .iter()
            .map(|&e| {
                let k = FourVector::from_parts(e, kj);
                let mut v = self.legs[self.j].value(&k);
                if self.include_own {
                    if let Some(ms) = self.mults {
                        v = v * ms[self.j].eval(&k, &self.ev.params);
                    }
                }
                v
            })
            .collect();
        if own.iter().all(|v| *v == czero()) {
            return Ok(());
        }

        let n = self.legs.len();
        let mut moms: Vec<FourVector<T>> = vec![FourVector::zero(d); n];
        let mut q = Vec::new();
        let sr = self.signs[self.root];
        let ss = self.signs[self.solved];
        let mut idx = vec![0usize; self.free.len()];
        let mut solver = Solver::new(sr, ss, s.scan_points, s.root_tol);
        loop {
            // current free configuration
            let mut pf = Complex::new(T::one(), T::zero());
            let mut cf = T::zero();
            let mut ksum = vec![T::zero(); d - 1];
            for (fi, &l) in self.free.iter().enumerate() {
                let nd = &self.free_nodes[fi][idx[fi]];
                pf = pf * nd.val;
                cf = cf + nd.k.energy();
                for a in 0..d - 1 {
                    ksum[a] = ksum[a] + nd.k.spatial()[a];
                }
                moms[l] = nd.k;
            }
            let qv: Vec<T> = (0..d - 1).map(|a| -kj[a] - ksum[a]).collect();
            let ql = qv[d - 2];
            for (y, wy) in &self.perp_nodes {
                // the solved leg's transverse momentum is fixed; it must lie in its box
                let mut inside = true;
                let mut a2 = m * m;
                let mut b2 = m * m;
                for a in 0..d - 2 {
                    let ys = qv[a] - y[a];
                    if ys < self.solved_lo[a] || ys > self.solved_hi[a] {
                        inside = false;
                    }
                    a2 = a2 + y[a] * y[a];
                    b2 = b2 + ys * ys;
                }
                if !inside {
                    continue;
                }
                let lo = self.root_lo.max(ql - self.solved_hi[d - 2]);
                let hi = self.root_hi.min(ql - self.solved_lo[d - 2]);
                if lo >= hi {
                    continue;
                }
                solver.reset(a2, b2, ql, lo, hi);
                let pw = pf * *wy;
                for &ix in &order {
                    if own[ix] == czero() {
                        continue;
                    }
                    let e = energies[ix];
                    let target = -(e + cf);
                    let roots = solver.roots(target)?;
                    for &x in roots.iter() {
                        let wr = (x * x + a2).sqrt();
                        let xs = ql - x;
                        let ws = (xs * xs + b2).sqrt();
                        let jac = (lit::<T>(sr as f64) * x / wr - lit::<T>(ss as f64) * xs / ws).abs();
                        if jac == T::zero() {
                            continue;
                        }
                        let mut kr = FourVector::zero(d);
                        let mut ks = FourVector::zero(d);
                        kr.set(0, if sr > 0 { wr } else { -wr });
                        ks.set(0, if ss > 0 { ws } else { -ws });
                        for a in 0..d - 2 {
                            kr.set(a + 1, y[a]);
                            ks.set(a + 1, qv[a] - y[a]);
                        }
                        kr.set(d - 1, x);
                        ks.set(d - 1, xs);
                        let mut v = self.legs[self.root].value(&kr) * self.legs[self.solved].value(&ks);
                        if v == czero() {
                            continue;
                        }
                        if let Some(ms) = self.mults {
                            v = v * ms[self.root].eval(&kr, &self.ev.params) * ms[self.solved].eval(&ks, &self.ev.params);
                        }
                        v = v / (wr * ws * jac * lit(4.0));
                        if let Some(p) = self.weight {
                            moms[self.root] = kr;
                            moms[self.solved] = ks;
                            moms[self.j] = FourVector::from_parts(e, kj);
                            q.clear();
                            crate::kinematics::invariant_map_into(&moms, &mut q);
                            v = v * p.eval_invariants(&q);
                        }
                        out[ix] = out[ix] + pw * own[ix] * v;
                    }
                }
            }
            // advance the odometer
            let mut a = 0;
            loop {
                if a == idx.len() {
                    return Ok(());
                }
                idx[a] += 1;
                if idx[a] < self.free_nodes[a].len() {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
        }
    }
}

/// Newton iteration safeguarded by bisection on a sign-changing bracket.
fn rtsafe<T: Real>(f: &impl Fn(T) -> (T, T), a: T, b: T, fa: T, fb: T, guess: Option<T>, tol: T) -> Option<T> {
    if fa == T::zero() {
        return Some(a);
    }
    if fb == T::zero() {
        return Some(b);
    }
    let (mut lo, mut hi) = if fa < T::zero() { (a, b) } else { (b, a) };
    let mut x = match guess {
        Some(g) if (g - a) * (g - b) < T::zero() => g,
        _ => (a + b) * lit(0.5),
    };
    let mut dx_old = (b - a).abs();
    let (mut fx, mut dfx) = f(x);
    let eps = T::epsilon() * lit(4.0);
    for _ in 0..200 {
        if fx.abs() <= tol {
            return Some(x);
        }
        if fx < T::zero() {
            lo = x;
        } else {
            hi = x;
        }
        let newton = if dfx != T::zero() {
            let xn = x - fx / dfx;
            ((xn - lo) * (xn - hi) < T::zero() && (fx * lit(2.0)).abs() <= (dx_old * dfx).abs()).then_some(xn)
        } else {
            None
        };
        let xn = newton.unwrap_or((lo + hi) * lit(0.5));
        dx_old = (xn - x).abs();
        x = xn;
        if (hi - lo).abs() <= eps * x.abs().max(T::one()) {
            return Some(x);
        }
        let r = f(x);
        fx = r.0;
        dfx = r.1;
    }
    None
}

/// Roots of `s_R ω_R(x) + s_S ω_S(x) = τ` with `ω_R = √(x² + A²)`, `ω_S = √((Q - x)² + B²)`.
struct Solver<T> {
    sr: i8,
    ss: i8,
    scan: usize,
    tol: T,
    a2: T,
    b2: T,
    q: T,
    lo: T,
    hi: T,
    // same-sign branches: (lo, hi, Φ(lo), Φ(hi), last root)
    branches: Vec<(T, T, T, T, Option<T>)>,
    // opposite signs: scan of D = ω_R − ω_S
    xs: Vec<T>,
    ds: Vec<T>,
    found: Vec<T>,
}

impl<T: Real> Solver<T> {
    fn new(sr: i8, ss: i8, scan: usize, tol: T) -> Self {
        let z = T::zero();
        Solver {
            sr,
            ss,
            scan: scan.max(2),
            tol,
            a2: z,
            b2: z,
            q: z,
            lo: z,
            hi: z,
            branches: Vec::new(),
            xs: Vec::new(),
            ds: Vec::new(),
            found: Vec::new(),
        }
    }

    fn phi(&self, x: T) -> (T, T) {
        let wr = (x * x + self.a2).sqrt();
        let xs = self.q - x;
        let ws = (xs * xs + self.b2).sqrt();
        if self.sr == self.ss {
            (wr + ws, x / wr - xs / ws)
        } else {
            (wr - ws, x / wr + xs / ws)
        }
    }

    fn reset(&mut self, a2: T, b2: T, q: T, lo: T, hi: T) {
        self.a2 = a2;
        self.b2 = b2;
        self.q = q;
        self.lo = lo;
        self.hi = hi;
        self.branches.clear();
        self.xs.clear();
        self.ds.clear();
        if self.sr == self.ss {
            let (a, b) = (a2.sqrt(), b2.sqrt());
            let xm = q * a / (a + b);
            if lo < xm {
                let r = hi.min(xm);
                self.branches.push((lo, r, self.phi(lo).0, self.phi(r).0, None));
            }
            if hi > xm {
                let l = lo.max(xm);
                self.branches.push((l, hi, self.phi(l).0, self.phi(hi).0, None));
            }
        } else {
            for i in 0..=self.scan {
                let x = lo + (hi - lo) * lit::<T>(i as f64) / lit(self.scan as f64);
                self.xs.push(x);
                self.ds.push(self.phi(x).0);
            }
        }
    }

    fn roots(&mut self, tau: T) -> Result<&[T], StructureError> {
        self.found.clear();
        let tol = self.tol * tau.abs().max(T::one());
        if self.sr == self.ss {
            let g = if self.sr > 0 { tau } else { -tau };
            for bi in 0..self.branches.len() {
                let (a, b, fa, fb, last) = self.branches[bi];
                let (fa, fb) = (fa - g, fb - g);
                if fa * fb > T::zero() {
                    continue;
                }
                let f = |x: T| {
                    let (v, dv) = self.phi(x);
                    (v - g, dv)
                };
                let x = rtsafe(&f, a, b, fa, fb, last, tol).ok_or(StructureError::RootNotConverged {
                    target: tau.to_f64().unwrap_or(f64::NAN),
                })?;
                self.branches[bi].4 = Some(x);
                self.found.push(x);
            }
        } else {
            let g = if self.sr > 0 { tau } else { -tau };
            for i in 0..self.scan {
                let (fa, fb) = (self.ds[i] - g, self.ds[i + 1] - g);
                // half-open brackets so a root on a scan point is counted once
                if fb == T::zero() && i + 1 < self.scan {
                    continue;
                }
                if fa * fb > T::zero() {
                    continue;
                }
                let f = |x: T| {
                    let (v, dv) = self.phi(x);
                    (v - g, dv)
                };
                let x = rtsafe(&f, self.xs[i], self.xs[i + 1], fa, fb, None, tol).ok_or(
                    StructureError::RootNotConverged { target: tau.to_f64().unwrap_or(f64::NAN) },
                )?;
                self.found.push(x);
            }
        }
        Ok(&self.found)
    }
}
