//! One PASS/FAIL line per acceptance criterion, printed to stderr.
//!
//! Lines listed in `EXPECTED_FAIL` cannot pass as stated and are reported
//! without failing the test; every other line must pass.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use qftscat::fitter::{self, FitConfig, Reference, SampleStatus};
use qftscat::formfactor::{AmplitudeRequest, FormFactorEvaluator};
use qftscat::gns::{inout_positivity_check, BorchersVector};
use qftscat::kinematics::FourVector;
use qftscat::lszlab::{self, ConvergenceReport, ConvergenceStatus, Packet1d, PairingSetup, StudyOptions};
use qftscat::packet::MultiPoly;
use qftscat::structure::{QuadSettings, SpectralDensity, StructureEvaluator};
use qftscat::transfer::{hermiticity_identity_check_random, symmetrize_realify, validate_family, TransferFamily, TransferPolynomial};
use qftscat::truncation::{self, apply_leg_multiplier, random_kernel_family, truncate, truncate_bilinear, BilinearKernel};
use qftscat::{LegLabel, ModelParams, WavePacket};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use LegLabel::{In, Out};

const EXPECTED_FAIL: [&str; 3] = ["lsz-n3", "fit-exp-q3", "fit-empty-literal"];

struct Line {
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

#[derive(Default)]
struct Sheet {
    lines: Vec<Line>,
}

impl Sheet {
    fn record(&mut self, name: &'static str, start: Instant, limit: Option<f64>, pass: bool, detail: String) {
        let elapsed = start.elapsed();
        let in_time = limit.map_or(true, |l| elapsed.as_secs_f64() < l);
        let detail = if in_time { detail } else { format!("{detail}; over the {}s budget", limit.unwrap()) };
        let line = Line { name, pass: pass && in_time, detail, elapsed };
        // written to the stream directly so the table shows without --nocapture
        let _ = writeln!(std::io::stderr(), "{} {:<20} [{:>7.2}s] {}", if line.pass { "PASS" } else { "FAIL" }, line.name, line.elapsed.as_secs_f64(), line.detail);
        self.lines.push(line);
    }
}

fn params() -> ModelParams<f64> {
    ModelParams::new(2, 1.0).unwrap()
}

fn structure(rho: SpectralDensity<f64>, enforce: bool) -> StructureEvaluator<f64> {
    StructureEvaluator::new(params(), rho, QuadSettings { enforce_tolerance: enforce, ..QuadSettings::default() }).unwrap()
}

fn packet(e: f64, p: f64, w: f64) -> WavePacket<f64> {
    WavePacket::gaussian(FourVector::new(&[e, p]).unwrap(), w).unwrap()
}

fn shell_packet(p: f64, sign: i8, w: f64) -> WavePacket<f64> {
    WavePacket::on_shell(&[p], 1.0, sign, w).unwrap()
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    let s = a.norm().max(b.norm());
    if s == 0.0 {
        0.0
    } else {
        (a - b).norm() / s
    }
}

fn sym_q12(n: usize) -> TransferPolynomial<f64> {
    symmetrize_realify(&TransferPolynomial::q(n, 1, 2).unwrap())
}

fn truncation_round_trip(sheet: &mut Sheet) {
    let t0 = Instant::now();
    let rows = truncation::round_trip_check(5, 100, 2024).unwrap();
    let bells: Vec<u64> = rows.iter().map(|r| r.bell).collect();
    let counts: Vec<usize> = rows.iter().map(|r| r.partitions).collect();
    let worst = rows.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let pass = bells == [1, 1, 2, 5, 15, 52] && counts.iter().zip(&bells).all(|(&c, &b)| c as u64 == b) && worst <= 1e-12;
    sheet.record("truncation", t0, Some(10.0), pass, format!("partitions {counts:?}, max rel error {worst:.2e}"));
}

fn leg_multiplier_lemmas(sheet: &mut Sheet) {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut commute, mut bilinear) = (0.0f64, 0.0f64);
    for trial in 0..200 {
        let w = random_kernel_family(4, trial);
        let len = rng.gen_range(0..=4usize);
        let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let mult = move |p: &f64| Complex64::new(a * p, b + p * p);
        let lhs = truncate(&apply_leg_multiplier(&w, mult)).unwrap().eval(&x).unwrap();
        let rhs = apply_leg_multiplier(&truncate(&w).unwrap(), mult).eval(&x).unwrap();
        commute = commute.max(rel(lhs, rhs));
        let k = rng.gen_range(0..=len);
        let (l, r) = x.split_at(k);
        let st = truncate_bilinear(&BilinearKernel::from_functional(&w)).unwrap();
        bilinear = bilinear.max(rel(st.eval(l, r).unwrap(), truncate(&w).unwrap().eval(&x).unwrap()));
    }
    let pass = commute <= 1e-12 && bilinear <= 1e-12;
    sheet.record("leg-multipliers", t0, Some(10.0), pass, format!("commutation {commute:.2e}, tensor compatibility {bilinear:.2e} over 200 points"));
}

/// Finite-time pairing study against the direct amplitude.
fn lsz_study(ev: &StructureEvaluator<f64>, req: &AmplitudeRequest<f64>, labels: &[LegLabel], m: Option<&TransferPolynomial<f64>>) -> (ConvergenceReport<f64>, Complex64) {
    let fam = m.map(|p| TransferFamily::new(2).with(p.clone()));
    let weight = fam.as_ref().map(|f| f.get(req.n()));
    let amp = FormFactorEvaluator::new(ev.clone(), fam).unwrap().smatrix_amplitude(req).unwrap().value;
    let legs = req.legs();
    let n = legs.len();
    let setup = PairingSetup { ev, legs: &legs, labels, weight: weight.as_ref() };
    let opts = StudyOptions { target: Some(amp), ..StudyOptions::default() };
    let orders = [(0..n).collect::<Vec<_>>(), (0..n).rev().collect()];
    (lszlab::convergence_study(&setup, &lszlab::log_grid(1.0, 1e3, 32), &orders, &opts).unwrap(), amp)
}

fn lsz_verdict(r: &ConvergenceReport<f64>, amp: Complex64) -> (bool, String) {
    let err = (r.window_averaged.last().unwrap() - amp).norm();
    let close = err <= 1e-2 * amp.norm();
    let envelope = r.status == ConvergenceStatus::Converged;
    let comb = r.orderings.iter().map(|o| o.uncertainty * o.uncertainty).sum::<f64>().sqrt();
    let ordered = r.ordering_spread < comb;
    let peak = r.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    (
        close && envelope && ordered,
        format!("amplitude {amp:.6e}, |W(1e3) - S| = {err:.2e}, max |W| = {peak:.2e}, envelope {:?}, spread {:.2e} vs {comb:.2e}", r.status, r.ordering_spread),
    )
}

fn lsz_three_legs(sheet: &mut Sheet) {
    let t0 = Instant::now();
    let ev = structure(SpectralDensity::default_for(1.0), true);
    let req = AmplitudeRequest::new(vec![packet(-2.4, 0.1, 0.3)], vec![packet(1.2, 0.5, 0.3), packet(1.2, -0.6, 0.3)]).unwrap();
    let mut pass = true;
    let mut details = Vec::new();
    for (tag, m) in [("M=1", None), ("M=sym q12", Some(sym_q12(3)))] {
        let (r, amp) = lsz_study(&ev, &req, &[In, Out, Out], m.as_ref());
        let (ok, d) = lsz_verdict(&r, amp);
        pass &= ok;
        details.push(format!("{tag}: {d}"));
    }
    details.push("equal masses leave no three-leg on-shell configuration, so both sides are identically zero".into());
    sheet.record("lsz-n3", t0, Some(600.0), pass, details.join("; "));
}

fn two_to_two() -> AmplitudeRequest<f64> {
    AmplitudeRequest::new(vec![shell_packet(0.4, -1, 0.15), shell_packet(-0.6, -1, 0.15)], vec![shell_packet(-0.4, 1, 0.15), shell_packet(0.6, 1, 0.15)]).unwrap()
}

fn lsz_four_legs(sheet: &mut Sheet) {
    let t0 = Instant::now();
    let ev = structure(SpectralDensity::Zero, false);
    let req = two_to_two();
    let mut pass = true;
    let mut details = Vec::new();
    for (tag, m) in [("M=1", None), ("M=sym q12", Some(sym_q12(4)))] {
        let (r, amp) = lsz_study(&ev, &req, &[In, In, Out, Out], m.as_ref());
        let (ok, d) = lsz_verdict(&r, amp);
        pass &= ok;
        details.push(format!("{tag}: {d}"));
    }
    sheet.record("lsz-n4-supplement", t0, Some(600.0), pass, details.join("; "));
}

fn pv_limit(sheet: &mut Sheet) {
    let t0 = Instant::now();
    let f = Packet1d::gaussian(0.0, 1.0);
    let grid = lszlab::log_grid(1.0, 1e3, 16);
    let errs: Vec<f64> = [1i8, -1].iter().map(|&s| lszlab::pv_limit_demo(&f, &grid, s).unwrap().final_relative_error().unwrap()).collect();
    let s = lszlab::sokhotsky_check(&f, 1e-5).unwrap();
    let pass = errs.iter().all(|&e| e < 1e-2) && s.extrapolated_difference < 1e-6;
    sheet.record(
        "pv-limit",
        t0,
        Some(60.0),
        pass,
        format!(
            "rel error at t=1e3: {:.2e} (σ=+1), {:.2e} (σ=-1); Sokhotsky ε→0 {:.2e}, raw at ε=1e-5 {:.2e}",
            errs[0], errs[1], s.extrapolated_difference, s.raw_difference
        ),
    );
}

fn riemann_lebesgue(sheet: &mut Sheet) {
    let t0 = Instant::now();
    let ev = structure(SpectralDensity::default_for(1.0), true);
    let legs = vec![packet(-2.2, 0.2, 0.5), packet(2.2, -0.2, 0.5)];
    let r = lszlab::riemann_lebesgue_decay(&ev, &legs, &lszlab::log_grid(1.0, 1e3, 12), 0.05).unwrap();
    let pass = r.decayed && r.final_ratio < 0.05;
    sheet.record("riemann-lebesgue", t0, Some(60.0), pass, format!("|C(0)| = {:.3e}, |C(1e3)|/|C(0)| = {:.2e}", r.initial.norm(), r.final_ratio));
}

fn l1_bound(sheet: &mut Sheet) {
    let t0 = Instant::now();
    let g = lszlab::l1_fourier_bound(&Packet1d::gaussian(0.0, 1.0)).unwrap();
    let analytic = (2.0 * std::f64::consts::PI).sqrt();
    let mut worst = 0.0f64;
    let mut all = g.pass;
    for i in 0..20 {
        let w = 0.1 * 100f64.powf(i as f64 / 19.0);
        let f = Packet1d { amplitude: 1.0, center: 0.5 * i as f64 - 3.0, width: w, frequency: if i % 2 == 0 { 0.0 } else { 1.5 } };
        let b = lszlab::l1_fourier_bound(&f).unwrap();
        all &= b.pass && b.lhs <= b.rhs;
        worst = worst.max(b.lhs / b.rhs);
    }
    let pass = all && (g.lhs - analytic).abs() < 1e-8;
    sheet.record("l1-bound", t0, Some(30.0), pass, format!("max lhs/rhs over 20 widths {worst:.3}; Gaussian lhs - √(2π) = {:.1e}", g.lhs - analytic));
}

fn gram_positivity(sheet: &mut Sheet) {
    let t0 = Instant::now();
    let singles: Vec<BorchersVector> = [packet(1.1, 0.3, 0.3), packet(1.3, -0.5, 0.35), packet(-1.6, 0.9, 0.3), packet(1.05, 0.0, 0.4)]
        .into_iter()
        .map(BorchersVector::single)
        .collect();
    let c = Complex64::new;
    let mixed = vec![
        BorchersVector::unit(),
        BorchersVector::single(packet(1.2, 0.4, 0.35)).add(&BorchersVector::product(c(0.3, 0.2), vec![])),
        BorchersVector::product(c(0.7, -0.4), vec![packet(1.1, -0.3, 0.35), packet(1.4, 0.8, 0.35)]),
        BorchersVector::single(packet(-1.15, 0.2, 0.35)).add(&BorchersVector::product(c(0.0, 1.0), vec![packet(1.2, 0.4, 0.35), packet(-1.3, -0.7, 0.35)])),
    ];
    let checked = FormFactorEvaluator::new(structure(SpectralDensity::default_for(1.0), true), None).unwrap();
    let unchecked = FormFactorEvaluator::new(structure(SpectralDensity::default_for(1.0), false), None).unwrap();
    let mut pass = true;
    let mut details = Vec::new();
    for (tag, ff, fam) in [("singles", &checked, &singles), ("mixed orders", &unchecked, &mixed)] {
        for label in [In, Out] {
            let r = inout_positivity_check(ff, fam, label).unwrap();
            let ok = r.pass && r.decomposition.eta_square_error < 1e-12 && r.gram.hermiticity_deviation < 1e-8;
            pass &= ok;
            details.push(format!(
                "{tag}/{label}: min eigenvalue {:.2e} of ‖H‖ {:.2e}, |η²-1| {:.1e}, hermiticity {:.1e}",
                r.min_eigenvalue, r.norm, r.decomposition.eta_square_error, r.gram.hermiticity_deviation
            ));
        }
    }
    sheet.record("gram-positivity", t0, Some(60.0), pass, details.join("; "));
}

fn fit_cfg(e_max: f64, eps: f64, deg: usize, count: usize) -> FitConfig {
    FitConfig { train_count: count, validate_count: count, ..FitConfig::new(e_max, eps, deg) }
}

fn planted() -> TransferPolynomial<f64> {
    let q = |i, j| TransferPolynomial::<f64>::q(4, i, j).unwrap();
    let c = |x: f64| Complex64::new(x, 0.0);
    symmetrize_realify(
        &TransferPolynomial::constant(4, 0.5)
            .add(&q(1, 2).scale(c(0.3)))
            .add(&q(1, 2).mul(&q(1, 2)).scale(c(0.1)))
            .add(&q(1, 2).mul(&q(3, 4)).scale(c(-0.2)))
            .add(&q(1, 3).mul(&q(1, 4)).scale(c(0.05))),
    )
}

fn fit_pipeline(sheet: &mut Sheet) {
    let p = params();
    let exp12 = |ks: &[FourVector<f64>]| Reference::ExpQ { i: 1, j: 2 }.eval(ks, 1.0);

    let t0 = Instant::now();
    let c = fit_cfg(4.0, 1e-10, 4, 400);
    let s = fitter::sample_qn(4, 2, &c, &p).unwrap();
    let target = planted();
    let r = fitter::fit_polynomial(|ks| target.eval(ks).unwrap().re, &s, &c, &p).unwrap();
    let planted_ok = r.passed && r.degree_used == 2 && r.achieved_sup_error < 1e-10;
    sheet.record("fit-planted", t0, Some(120.0), planted_ok, format!("Q_4(4m): degree {}, validation sup error {:.2e}", r.degree_used, r.achieved_sup_error));

    let t1 = Instant::now();
    let fam = fitter::build_family(&BTreeMap::from([(4, r.clone())]), 4);
    let (valid, herm) = match &fam {
        Ok(f) => (validate_family(f).passed, hermiticity_identity_check_random(&r.polynomial, 2, 64, 3)),
        Err(_) => (false, false),
    };
    sheet.record("fit-family", t1, Some(120.0), valid && herm, format!("family validates: {valid}, hermiticity identity: {herm}"));

    let t2 = Instant::now();
    let c = fit_cfg(10.0, 1e-3, 12, 1000);
    let s = fitter::sample_qn(3, 1, &c, &p).unwrap();
    let (ok, detail) = match (&s.status, fitter::fit_polynomial(exp12, &s, &c, &p)) {
        (_, Ok(r)) => (r.passed, format!("degree {}, sup error {:.2e}", r.degree_used, r.achieved_sup_error)),
        (SampleStatus::Empty { reason }, Err(e)) => (false, format!("Q_3(10m) is empty ({reason}); {e}")),
        (_, Err(e)) => (false, e.to_string()),
    };
    sheet.record("fit-exp-q3", t2, Some(120.0), ok, detail);

    let t3 = Instant::now();
    let c = fit_cfg(2.5, 1e-3, 14, 1500);
    let s = fitter::sample_qn(4, 2, &c, &p).unwrap();
    let r = fitter::fit_polynomial(exp12, &s, &c, &p).unwrap();
    sheet.record("fit-exp-q4-supplement", t3, Some(120.0), r.passed, format!("Q_4(2.5m): degree {}, validation sup error {:.2e}", r.degree_used, r.achieved_sup_error));

    let t4 = Instant::now();
    let e_max = 10.0;
    let counterexamples: Vec<usize> = (11..=24)
        .filter(|&n| fitter::rest_configuration(n, 2, 1.0).is_some_and(|ks| fitter::check_qn_point(&ks, n, n / 2, e_max, 1.0, 1e-12).is_ok()))
        .collect();
    sheet.record(
        "fit-empty-literal",
        t4,
        Some(120.0),
        counterexamples.is_empty(),
        format!("claim: Q_n(10m) empty for n > 10; particles at rest give valid points for n = {counterexamples:?}"),
    );

    let t5 = Instant::now();
    let rule = (3..=24).all(|n| fitter::qn_union_is_empty(n, e_max, 1.0) == (n == 3 || n as f64 > 2.0 * e_max));
    let mut sampled = true;
    for n in [4usize, 6, 8, 21, 24] {
        let c = fit_cfg(e_max, 1e-3, 2, 20);
        let any = (1..n).any(|r| fitter::sample_qn(n, r, &c, &p).is_ok_and(|s| !s.is_empty()));
        sampled &= any == (n as f64 <= 2.0 * e_max);
    }
    // at n = 20 the region is the single configuration at rest
    let edge = fitter::rest_configuration(20, 2, 1.0).is_some_and(|ks| fitter::check_qn_point(&ks, 20, 10, e_max, 1.0, 1e-12).is_ok());
    sheet.record("fit-empty-corrected", t5, Some(120.0), rule && sampled && edge, format!("Q_n(10m) empty iff n = 3 or n > 20: rule {rule}, sampler at n = 4, 6, 8, 21, 24 {sampled}, rest point at n = 20 {edge}"));
}

/// `(1/6) Σ_{i<j} q_ij` folded into the packets as `Σ_μ η_μμ k_i^μ k_j^μ`.
fn folded_amplitude(ev: &StructureEvaluator<f64>, req: &AmplitudeRequest<f64>) -> Complex64 {
    let ff = FormFactorEvaluator::new(ev.clone(), None).unwrap();
    let (ins, outs) = (req.legs()[..req.r()].to_vec(), req.legs()[req.r()..].to_vec());
    let mut acc = Complex64::new(0.0, 0.0);
    let n = req.n();
    for i in 0..n {
        for j in i + 1..n {
            for (mu, eta) in [(0usize, 1.0), (1, -1.0)] {
                let mut l: Vec<WavePacket<f64>> = ins.iter().chain(&outs).cloned().collect();
                l[i] = l[i].clone().with_poly(MultiPoly::var(mu));
                l[j] = l[j].clone().with_poly(MultiPoly::var(mu));
                let q = AmplitudeRequest::new(l[..req.r()].to_vec(), l[req.r()..].to_vec()).unwrap();
                acc += ff.smatrix_amplitude(&q).unwrap().value * eta;
            }
        }
    }
    acc / (n * (n - 1) / 2) as f64
}

fn quadrature_consistency(sheet: &mut Sheet) {
    let t0 = Instant::now();
    let ev = structure(SpectralDensity::Zero, false);
    let fine = ev.with_settings(ev.settings.refined(2.0));
    let req3 = AmplitudeRequest::new(vec![packet(-2.4, 0.1, 0.3)], vec![packet(1.2, 0.5, 0.3), packet(1.2, -0.6, 0.3)]).unwrap();
    let req4 = two_to_two();
    let mut pass = true;
    let mut details = Vec::new();
    for (tag, req) in [("n=3", &req3), ("2→2", &req4)] {
        for (mtag, m) in [("M=1", None), ("M=sym q12", Some(sym_q12(req.n())))] {
            let fam = m.map(|p| TransferFamily::new(2).with(p));
            let amp = |e: &StructureEvaluator<f64>| FormFactorEvaluator::new(e.clone(), fam.clone()).unwrap().smatrix_amplitude(req).unwrap().value;
            let (base, refined) = (amp(&ev), amp(&fine));
            let weight = fam.as_ref().map(|f| f.get(req.n()));
            let alt = ev.onshell_term(req.r(), &req.legs(), weight.as_ref(), 1).unwrap().value * Complex64::new(0.0, std::f64::consts::TAU);
            let folded = if fam.is_some() { Some(rel(base, folded_amplitude(&ev, req))) } else { None };
            let (dr, da) = (rel(base, refined), rel(base, alt));
            pass &= dr <= 5e-3 && da <= 5e-3 && folded.map_or(true, |f| f <= 5e-3);
            let ftxt = folded.map(|f| format!(", folded weight {f:.1e}")).unwrap_or_default();
            details.push(format!("{tag} {mtag}: value {base:.6e}, refinement {dr:.1e}, alternate atom {da:.1e}{ftxt}"));
        }
    }
    sheet.record("quadrature", t0, Some(300.0), pass, details.join("; "));
}

#[test]
fn acceptance() {
    let mut sheet = Sheet::default();
    let _ = writeln!(std::io::stderr());
    truncation_round_trip(&mut sheet);
    leg_multiplier_lemmas(&mut sheet);
    lsz_three_legs(&mut sheet);
    lsz_four_legs(&mut sheet);
    pv_limit(&mut sheet);
    riemann_lebesgue(&mut sheet);
    l1_bound(&mut sheet);
    gram_positivity(&mut sheet);
    fit_pipeline(&mut sheet);
    quadrature_consistency(&mut sheet);
    let unexpected: Vec<&str> = sheet.lines.iter().filter(|l| !l.pass && !EXPECTED_FAIL.contains(&l.name)).map(|l| l.name).collect();
    assert!(unexpected.is_empty(), "failing criteria: {unexpected:?}");
}
