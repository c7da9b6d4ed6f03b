use std::sync::Arc;

use num_complex::Complex64;
use qftscat::kinematics::{chi_t, omega_unchecked, FourVector};
use qftscat::packet::{product_involution, MultiPoly};
use qftscat::quadrature::{adaptive, Tolerance};
use qftscat::structure::{LegMultiplier, MultiplierFn, QuadSettings, SpectralDensity, StructureEvaluator};
use qftscat::transfer::TransferPolynomial;
use qftscat::{LegLabel, ModelParams, WavePacket};

fn packet(e: f64, p: f64, w: f64) -> WavePacket<f64> {
    WavePacket::gaussian(FourVector::new(&[e, p]).unwrap(), w).unwrap()
}

fn evaluator() -> StructureEvaluator<f64> {
    let params = ModelParams::new(2, 1.0).unwrap();
    StructureEvaluator::new(params, SpectralDensity::Zero, QuadSettings { enforce_tolerance: false, ..Default::default() }).unwrap()
}

/// Term `j` of the n = 3 pairing with `k_j` eliminated: a regular integral
/// over the two on-shell legs (their sum never reaches the mass shell).
fn n3_oracle(legs: &[WavePacket<f64>], j: usize, weight: Option<&TransferPolynomial<f64>>) -> Complex64 {
    let others: Vec<usize> = (0..3).filter(|&l| l != j).collect();
    let sign = |l: usize| if l < j { -1.0 } else { 1.0 };
    let (a, b) = (others[0], others[1]);
    let tol = Tolerance::new(1e-15, 1e-11);
    let box_of = |l: usize| {
        let c = legs[l].center.spatial()[0];
        (c - 12.0 * legs[l].width, c + 12.0 * legs[l].width)
    };
    let (a0, a1) = box_of(a);
    let (b0, b1) = box_of(b);
    adaptive(
        |xa: f64| {
            adaptive(
                |xb: f64| {
                    let wa = omega_unchecked(&[xa], 1.0);
                    let wb = omega_unchecked(&[xb], 1.0);
                    let ka = FourVector::new(&[sign(a) * wa, xa]).unwrap();
                    let kb = FourVector::new(&[sign(b) * wb, xb]).unwrap();
                    let kj = -(ka + kb);
                    let mut ks = vec![kj; 3];
                    ks[a] = ka;
                    ks[b] = kb;
                    let m = weight.map(|p| p.eval(&ks).unwrap()).unwrap_or(Complex64::new(1.0, 0.0));
                    legs[a].value(&ka) * legs[b].value(&kb) * legs[j].value(&kj) * m
                        / (4.0 * wa * wb * (kj.square() - 1.0))
                },
                b0,
                b1,
                tol,
            )
            .unwrap()
            .value
        },
        a0,
        a1,
        tol,
    )
    .unwrap()
    .value
}

#[test]
fn n3_pairing_matches_eliminated_oracle() {
    let ev = evaluator();
    let legs = vec![packet(-2.4, 0.3, 0.3), packet(1.2, 0.5, 0.3), packet(1.25, -0.6, 0.3)];
    let t0 = std::time::Instant::now();
    let oracles: Vec<Complex64> = (0..3).map(|j| n3_oracle(&legs, j, None)).collect();
    let scale: f64 = oracles.iter().map(|o| o.norm()).sum();
    for j in 0..3 {
        let v = ev.pv_term(j, &legs, None).unwrap();
        println!("j={j} value={} err={} oracle={}", v.value, v.abs_err, oracles[j]);
        assert!((v.value - oracles[j]).norm() <= 1e-8 * scale, "j={j}: {} vs {}", v.value, oracles[j]);
    }
    let total = ev.eval_ghat_n(&legs, None).unwrap();
    let o: Complex64 = oracles.iter().sum();
    assert!((total.value - o).norm() <= 1e-8 * scale);
    println!("elapsed {:?}", t0.elapsed());
}

fn shell_packet(p: f64, sign: i8, w: f64) -> WavePacket<f64> {
    WavePacket::on_shell(&[p], 1.0, sign, w).unwrap()
}

fn scattering_legs(w: f64) -> Vec<WavePacket<f64>> {
    vec![shell_packet(0.4, -1, w), shell_packet(-0.6, -1, w), shell_packet(-0.4, 1, w), shell_packet(0.6, 1, w)]
}


/// `s_a ω_a + s_b ω_b` without cancellation.
fn energy_sum(sa: f64, xa: f64, sb: f64, xb: f64) -> f64 {
    let (wa, wb) = (omega_unchecked(&[xa], 1.0), omega_unchecked(&[xb], 1.0));
    if sa == sb {
        sa * (wa + wb)
    } else {
        sb * (xb - xa) * (xb + xa) / (wa + wb)
    }
}

/// Term `j` of the n = 4 pairing with `k_j` eliminated. The pole surface
/// `k_j² = m²` is crossed by a principal value in the last coordinate; when
/// the first two legs sit on opposite shells the surface also contains the
/// plane `x_b = -x_a`, crossed by a principal value in `x_b`.
fn n4_oracle(legs: &[WavePacket<f64>], j: usize) -> Complex64 {
    let others: Vec<usize> = (0..4).filter(|&l| l != j).collect();
    let sign = |l: usize| if l < j { -1.0 } else { 1.0 };
    let tol = Tolerance::new(1e-14, 1e-8);
    let box_of = |l: usize| {
        let c = legs[l].center.spatial()[0];
        (c - 10.0 * legs[l].width, c + 10.0 * legs[l].width)
    };
    let on = |l: usize, x: f64| FourVector::new(&[sign(l) * omega_unchecked(&[x], 1.0), x]).unwrap();
    let (a, b, c) = (others[0], others[1], others[2]);
    let ((a0, a1), (b0, b1), (c0, c1)) = (box_of(a), box_of(b), box_of(c));
    let inner = |xa: f64, xb: f64| -> Complex64 {
        let (ka, kb) = (on(a, xa), on(b, xb));
        let pre = legs[a].value(&ka) * legs[b].value(&kb) / (4.0 * ka.energy().abs() * kb.energy().abs());
        if pre.norm() < 1e-30 {
            return Complex64::new(0.0, 0.0);
        }
        let (pe, px) = (energy_sum(sign(a), xa, sign(b), xb), xa + xb);
        let h = |xc: f64| {
            let kc = on(c, xc);
            let kj = -(ka + kb + kc);
            legs[c].value(&kc) * legs[j].value(&kj) / (2.0 * kc.energy().abs())
        };
        // D = (P + k_c)² - m² = 2 P·(k_c - k_r) for any on-shell root k_r; the
        // roots are k_c = -k_a and k_c = -k_b where the shells allow it
        let mut roots: Vec<f64> = [(a, xa), (b, xb)]
            .iter()
            .filter(|&&(l, x)| sign(l) != sign(c) && -x > c0 && -x < c1)
            .map(|&(_, x)| -x)
            .collect();
        roots.sort_by(|u, v| u.partial_cmp(v).unwrap());
        let sc = sign(c);
        let bracket = |xc: f64, r: f64| {
            let (wc, wr) = (omega_unchecked(&[xc], 1.0), omega_unchecked(&[r], 1.0));
            2.0 * (pe * sc * (xc + r) / (wc + wr) - px)
        };
        let dfun = |xc: f64| match roots.first() {
            Some(&r) => (xc - r) * bracket(xc, r),
            None => {
                let kc = on(c, xc);
                pe * pe - px * px + 2.0 * (pe * kc.energy() - px * xc)
            }
        };
        // (x - r) / D(x) for the pole r
        let reg = |x: f64, k: usize| -> f64 {
            let r0 = roots[0];
            if k == 0 {
                return 1.0 / bracket(x, r0);
            }
            let r = roots[k];
            if (x - r).abs() < 1e-6 {
                let h = 1e-5;
                let db = (bracket(r + h, r0) - bracket(r - h, r0)) / (2.0 * h);
                1.0 / ((r - r0) * db)
            } else {
                (x - r) / dfun(x)
            }
        };
        let mut cuts = vec![c0];
        for w in roots.windows(2) {
            cuts.push(0.5 * (w[0] + w[1]));
        }
        cuts.push(c1);
        let mut total = Complex64::new(0.0, 0.0);
        for (i, seg) in cuts.windows(2).enumerate() {
            let (lo, hi) = (seg[0], seg[1]);
            total += match roots.get(i) {
                Some(&r) => qftscat::quadrature::principal_value(|x: f64| h(x) * reg(x, i), r, lo, hi, tol)
                    .unwrap_or_else(|e| panic!("{e:?} r={r} lo={lo} hi={hi} xa={xa} xb={xb}"))
                    .value,
                None => adaptive(|x: f64| h(x) / dfun(x), lo, hi, tol)
                    .unwrap_or_else(|e| panic!("{e:?} lo={lo} hi={hi} xa={xa} xb={xb}"))
                    .value,
            };
        }
        pre * total
    };
    adaptive(
        |xa: f64| {
            let p = -xa;
            if sign(a) != sign(b) && p > b0 && p < b1 {
                qftscat::quadrature::principal_value(|xb: f64| inner(xa, xb) * (xb - p), p, b0, b1, tol).unwrap().value
            } else {
                adaptive(|xb: f64| inner(xa, xb), b0, b1, tol).unwrap().value
            }
        },
        a0,
        a1,
        tol,
    )
    .unwrap()
    .value
}

#[test]
fn n4_pairing_matches_eliminated_oracle() {
    let ev = evaluator();
    let legs = scattering_legs(0.15);
    let mut total = Complex64::new(0.0, 0.0);
    let mut otot = Complex64::new(0.0, 0.0);
    for j in 0..4 {
        let t0 = std::time::Instant::now();
        let v = ev.pv_term(j, &legs, None).unwrap();
        let t1 = t0.elapsed();
        let o = n4_oracle(&legs, j);
        println!("j={j} value={} err={:e} oracle={o} ({t1:?} / {:?})", v.value, v.abs_err, t0.elapsed() - t1);
        total += v.value;
        otot += o;
    }
    assert!((total - otot).norm() < 2e-5 * otot.norm(), "{total} vs {otot}");
}

fn n3_legs() -> Vec<WavePacket<f64>> {
    vec![packet(-2.4, 0.3, 0.3), packet(1.2, 0.5, 0.3), packet(1.25, -0.6, 0.3)]
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn refinement_is_stable() {
    let ev = evaluator();
    let fine = ev.with_settings(ev.settings.refined(2.0));
    for legs in [n3_legs(), scattering_legs(0.15)] {
        let a = ev.eval_ghat_n(&legs, None).unwrap().value;
        let b = fine.eval_ghat_n(&legs, None).unwrap().value;
        assert!(rel(a, b) < 2e-5, "{a} vs {b}");
    }
}

/// `q_12 = k_1⁰ k_2⁰ - k_1¹ k_2¹` moved into the packets' polynomial factors.
fn q12_two_path(ev: &StructureEvaluator<f64>, legs: &[WavePacket<f64>]) -> (Complex64, Complex64) {
    let n = legs.len();
    let q = TransferPolynomial::q(n, 1, 2).unwrap();
    let direct = ev.eval_ghat_n(legs, Some(&q)).unwrap().value;
    let mut folded = Complex64::new(0.0, 0.0);
    for (mu, eta) in [(0usize, 1.0), (1, -1.0)] {
        let mut l = legs.to_vec();
        l[0] = l[0].clone().with_poly(MultiPoly::var(mu));
        l[1] = l[1].clone().with_poly(MultiPoly::var(mu));
        folded += ev.eval_ghat_n(&l, None).unwrap().value * eta;
    }
    (direct, folded)
}

#[test]
fn q12_weight_two_paths_agree() {
    let ev = evaluator();
    for legs in [n3_legs(), scattering_legs(0.15)] {
        let (a, b) = q12_two_path(&ev, &legs);
        assert!(rel(a, b) < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn hermiticity_of_pairing() {
    let ev = evaluator();
    let mut legs = n3_legs();
    legs[1] = legs[1].clone().with_amplitude(Complex64::new(0.6, 0.8));
    legs[2] = legs[2].clone().with_shift(FourVector::new(&[0.3, -0.7]).unwrap());
    for legs in [legs, scattering_legs(0.15)] {
        let v = ev.eval_ghat_n(&legs, None).unwrap().value;
        let s = ev.eval_ghat_n(&product_involution(&legs), None).unwrap().value;
        assert!((s - v.conj()).norm() < 1e-8 * v.norm(), "{s} vs {v}");
    }
}

#[test]
fn time_tables_match_direct_and_multiplier_paths() {
    let ev = evaluator();
    let legs = scattering_legs(0.15);
    let labels = [LegLabel::In, LegLabel::In, LegLabel::Out, LegLabel::Out];
    let t = 20.0;
    let mut fast = Complex64::new(0.0, 0.0);
    let mut direct = Complex64::new(0.0, 0.0);
    for (j, &a) in labels.iter().enumerate() {
        fast += ev.time_table(j, &legs, None, a, 40.0).unwrap().eval(t).value;
        direct += ev.time_table_direct(j, &legs, None, a, 40.0).unwrap().eval(t).value;
    }
    let chi: Vec<LegMultiplier<f64>> = labels.iter().map(|&label| LegMultiplier::Chi { label, t }).collect();
    let via_chi = ev.pair_with_leg_multipliers(&legs, &chi, None).unwrap().value;
    let params = ev.params;
    let custom: Vec<LegMultiplier<f64>> = labels
        .iter()
        .map(|&label| {
            let f: MultiplierFn<f64> = Arc::new(move |k: &FourVector<f64>| chi_t(label, k, t, &params, &params.cutoff()));
            LegMultiplier::Custom { f, freq: t }
        })
        .collect();
    let via_custom = ev.pair_with_leg_multipliers(&legs, &custom, None).unwrap().value;
    println!("fast {fast} direct {direct} chi {via_chi} custom {via_custom}");
    assert!(direct.norm() > 1e-6);
    assert!(rel(fast, direct) < 1e-6);
    assert!(rel(via_chi, direct) < 1e-8);
    assert!(rel(via_custom, direct) < 1e-4);
}

#[test]
fn two_point_continuum_is_additive() {
    let params = ModelParams::new(2, 1.0).unwrap();
    let rho = SpectralDensity::Bump { low: 1.6, high: 2.4, height: 0.3 };
    let with = StructureEvaluator::new(params, rho, QuadSettings::default()).unwrap();
    let without = StructureEvaluator::new(params, SpectralDensity::Zero, QuadSettings::default()).unwrap();
    let legs = vec![packet(-2.0, 0.3, 0.5), packet(2.0, -0.3, 0.5)];
    let a = with.eval_ghat_2(&legs).unwrap().value;
    let b = without.eval_ghat_2(&legs).unwrap().value;
    let tol = Tolerance::new(1e-15, 1e-11);
    let cont = adaptive(
        |mu: f64| {
            let shell = adaptive(
                |x: f64| {
                    let w = omega_unchecked(&[x], mu);
                    let k1 = FourVector::new(&[-w, x]).unwrap();
                    let k2 = FourVector::new(&[w, -x]).unwrap();
                    legs[0].value(&k1) * legs[1].value(&k2) / (2.0 * w)
                },
                -6.0,
                6.0,
                tol,
            )
            .unwrap()
            .value;
            shell * rho.eval(mu)
        },
        1.6,
        2.4,
        tol,
    )
    .unwrap()
    .value;
    assert!(cont.norm() > 1e-3 * b.norm());
    assert!(rel(a, b + cont) < 1e-8, "{a} vs {b} + {cont}");
}

/// `g_j(k_j)` for n = 3 against a grid scan with the energy δ replaced by a
/// narrow Gaussian band.
#[test]
fn n3_reduced_integrand_matches_band_scan() {
    let ev = evaluator();
    let legs = n3_legs();
    let j = 0;
    let g = ev.reduced_integrand(j, &legs, None).unwrap();
    let band = 1e-3;
    for &(e, x) in &[(-2.6, 0.1), (-2.3, -0.05), (-2.9, 0.3)] {
        let kj = FourVector::new(&[e, x]).unwrap();
        let v = g.eval(&kj).unwrap();
        // legs 1, 2 forward; x_2 = -x - x_1
        let n = 400_000;
        let (lo, hi) = (-4.0, 4.0);
        let h = (hi - lo) / n as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let x1 = lo + (i as f64 + 0.5) * h;
            let x2 = -x - x1;
            let (w1, w2) = (omega_unchecked(&[x1], 1.0), omega_unchecked(&[x2], 1.0));
            let gap = e + w1 + w2;
            if gap.abs() > 8.0 * band {
                continue;
            }
            let delta = (-gap * gap / (2.0 * band * band)).exp() / (band * (2.0 * std::f64::consts::PI).sqrt());
            let k1 = FourVector::new(&[w1, x1]).unwrap();
            let k2 = FourVector::new(&[w2, x2]).unwrap();
            acc += legs[1].value(&k1) * legs[2].value(&k2) * legs[0].value(&kj) * delta / (4.0 * w1 * w2) * h;
        }
        println!("g({e},{x}) = {v} scan {acc}");
        assert!((v - acc).norm() < 1e-3 * acc.norm().max(1e-12), "{v} vs {acc}");
    }
}
