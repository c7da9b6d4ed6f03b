use num_complex::Complex64;
use proptest::prelude::*;
use qftscat::formfactor::FormFactorEvaluator;
use qftscat::kinematics::{FourVector, ShellPoint};
use qftscat::lszlab::*;
use qftscat::structure::{LegMultiplier, QuadSettings, SpectralDensity, StructureEvaluator};
use qftscat::{LegLabel, ModelParams, WavePacket};

use LegLabel::{In, Loc, Out};

fn params() -> ModelParams<f64> {
    ModelParams::new(2, 1.0).unwrap()
}

fn evaluator(rho: SpectralDensity<f64>, enforce: bool) -> StructureEvaluator<f64> {
    let s = QuadSettings { enforce_tolerance: enforce, ..QuadSettings::default() };
    StructureEvaluator::new(params(), rho, s).unwrap()
}

fn packet(e: f64, p: f64, w: f64) -> WavePacket<f64> {
    WavePacket::gaussian(FourVector::new(&[e, p]).unwrap(), w).unwrap()
}

fn shell_packet(p: f64, sign: i8, w: f64) -> WavePacket<f64> {
    WavePacket::on_shell(&[p], 1.0, sign, w).unwrap()
}

fn scattering_legs() -> Vec<WavePacket<f64>> {
    vec![shell_packet(0.4, -1, 0.15), shell_packet(-0.6, -1, 0.15), shell_packet(-0.4, 1, 0.15), shell_packet(0.6, 1, 0.15)]
}

fn label() -> impl Strategy<Value = LegLabel> {
    prop_oneof![Just(In), Just(Loc), Just(Out)]
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn multiplier_is_one_on_the_shell(a in label(), t in -1e4..1e4f64, x in -20.0..20.0f64, fwd in any::<bool>()) {
        let p = ShellPoint::new(&[x], 1.0, if fwd { 1 } else { -1 }).unwrap();
        let v = TimeMultiplier::new(a, t).eval(&p.momentum(), &params());
        prop_assert_eq!(v, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn multiplier_is_bounded(a in label(), t in -1e3..1e3f64, e in -5.0..5.0f64, x in -5.0..5.0f64) {
        let k = FourVector::new(&[e, x]).unwrap();
        let v = TimeMultiplier::new(a, t).eval(&k, &params());
        prop_assert!(v.norm() <= 1.0 + 1e-15);
        if a == Loc {
            prop_assert_eq!(v, Complex64::new(1.0, 0.0));
        }
    }
}

#[test]
fn schedules_validate() {
    assert!(MultiTimeSchedule::new(vec![1.0, f64::NAN], vec![0, 1]).is_err());
    assert!(MultiTimeSchedule::new(vec![1.0, 2.0], vec![0, 0]).is_err());
    assert!(MultiTimeSchedule::new(vec![1.0, 2.0], vec![1]).is_err());
    let s = MultiTimeSchedule::sweep(&[2, 0, 1], 1, 5.0, 1.0, 100.0).unwrap();
    assert_eq!(s.times, vec![5.0, 1.0, 100.0]);
}

#[test]
fn local_labels_reduce_to_the_static_pairing() {
    let ev = evaluator(SpectralDensity::Zero, true);
    let legs = vec![packet(-2.4, 0.3, 0.3), packet(1.2, 0.5, 0.3), packet(1.25, -0.6, 0.3)];
    let setup = PairingSetup { ev: &ev, legs: &legs, labels: &[Loc; 3], weight: None };
    let g = ev.eval_ghat_n(&legs, None).unwrap().value;
    for t in [0.0, 3.0, 400.0] {
        let v = finite_time_pairing(&setup, &MultiTimeSchedule::uniform(3, t)).unwrap().value;
        assert_eq!(v, g);
    }
}

#[test]
fn two_point_without_continuum_is_time_independent() {
    let ev = evaluator(SpectralDensity::Zero, true);
    let legs = vec![packet(-1.3, 0.4, 0.4), packet(1.3, -0.4, 0.4)];
    let setup = PairingSetup { ev: &ev, legs: &legs, labels: &[Out, Loc], weight: None };
    let v0 = finite_time_pairing(&setup, &MultiTimeSchedule::uniform(2, 0.0)).unwrap();
    for t in [5.0, 50.0] {
        let v = finite_time_pairing(&setup, &MultiTimeSchedule::uniform(2, t)).unwrap();
        assert!((v.value - v0.value).norm() <= v0.abs_err + v.abs_err + 1e-15, "t = {t}");
    }
    let r = convergence_study(&setup, &log_grid(1.0, 100.0, 9), &[], &StudyOptions::default()).unwrap();
    assert!(r.window_averaged.iter().all(|w| (w - v0.value).norm() < 1e-12 * v0.value.norm()));
    assert_eq!(r.status, ConvergenceStatus::Converged);
}

#[test]
fn tables_match_direct_pairing() {
    let ev = evaluator(SpectralDensity::Zero, false);
    let legs = scattering_legs();
    let labels = [In, Loc, Out, Out];
    let setup = PairingSetup { ev: &ev, legs: &legs, labels: &labels, weight: None };
    let tables = PairingTables::build(&setup, 30.0).unwrap();
    for times in [[3.0, 0.0, 10.0, 20.0], [25.0, 1.0, -4.0, 7.5]] {
        let direct = finite_time_pairing(&setup, &MultiTimeSchedule::new(times.to_vec(), vec![0, 1, 2, 3]).unwrap()).unwrap();
        let fast = tables.eval(&times).unwrap();
        assert!((direct.value - fast.value).norm() < 1e-6 * direct.value.norm(), "{times:?}");
    }
    assert!(matches!(tables.eval(&[31.0, 0.0, 0.0, 0.0]), Err(LszError::TimeOutOfRange { .. })));
}

#[test]
fn scattering_pairing_approaches_the_form_factor() {
    let ev = evaluator(SpectralDensity::Zero, false);
    let legs = scattering_legs();
    let labels = [In, In, Out, Out];
    let ff = FormFactorEvaluator::new(ev.clone(), None).unwrap();
    let target = ff.eval_fg_n(&labels, &legs).unwrap().value;
    let setup = PairingSetup { ev: &ev, legs: &legs, labels: &labels, weight: None };
    let opts = StudyOptions { target: Some(target), ..StudyOptions::default() };
    let t0 = std::time::Instant::now();
    let r = convergence_study(&setup, &log_grid(1.0, 1e3, 32), &[vec![0, 1, 2, 3], vec![3, 2, 1, 0]], &opts).unwrap();
    let rel = r.final_relative_error().unwrap();
    println!(
        "{:?}: rel {rel:e}, envelope {:?}, rate {:?}, spread {:e}, orderings {:?}",
        t0.elapsed(),
        r.decade_envelope,
        r.fitted_rate,
        r.ordering_spread,
        r.orderings
    );
    assert!(rel < 1e-2);
    assert_eq!(r.status, ConvergenceStatus::Converged);
    assert!(r.orderings_agree());
}

#[test]
fn pv_limit_sign_pairing() {
    let f = Packet1d::gaussian(0.0, 1.0);
    let grid = log_grid(1.0, 1e3, 16);
    for sigma in [1i8, -1] {
        let r = pv_limit_demo(&f, &grid, sigma).unwrap();
        assert_eq!(r.target, Some(Complex64::new(0.0, sigma as f64 * std::f64::consts::PI)));
        assert!(r.final_relative_error().unwrap() < 1e-2);
        assert_eq!(r.status, ConvergenceStatus::Converged);
    }
    // odd f: the folded integrand cancels
    let odd = |x: f64| Complex64::new(x * (-x * x / 2.0).exp(), 0.0);
    let tol = qftscat::quadrature::Tolerance::new(1e-14, 1e-12);
    let v = pv_oscillatory(&odd, 12.0, 1e3, 1, tol).unwrap().value;
    assert!(v.norm() < 1e-10, "{v}");
}

#[test]
fn sokhotsky_identity() {
    let r = sokhotsky_check(&Packet1d::gaussian(0.3, 1.0), 1e-5).unwrap();
    println!("raw {:e} extrapolated {:e}", r.raw_difference, r.extrapolated_difference);
    assert!(r.extrapolated_difference < 1e-6);
}

#[test]
fn continuum_term_decays() {
    let rho = SpectralDensity::default_for(1.0);
    let ev = evaluator(rho, true);
    let legs = vec![packet(-2.2, 0.2, 0.5), packet(2.2, -0.2, 0.5)];
    let stat = ev.continuum(&legs, &[LegMultiplier::One, LegMultiplier::One]).unwrap().value;
    let t0 = std::time::Instant::now();
    let r = riemann_lebesgue_decay(&ev, &legs, &log_grid(1.0, 1e3, 12), 0.05).unwrap();
    println!("{:?}: ratio {:e}, values {:?}", t0.elapsed(), r.final_ratio, r.series.values);
    assert!((r.initial - stat).norm() < 1e-8 * stat.norm());
    assert!(r.decayed);
    let none = evaluator(SpectralDensity::Zero, true);
    assert!(riemann_lebesgue_decay(&none, &legs, &[1.0], 0.05).is_err());
    assert_eq!(continuum_phase_term(&none, &legs, 10.0).unwrap().value, Complex64::new(0.0, 0.0));
}

#[test]
fn l1_bound_holds_across_widths() {
    let g = l1_fourier_bound(&Packet1d::gaussian(0.0, 1.0)).unwrap();
    assert!((g.lhs - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-8, "{}", g.lhs);
    assert!(g.pass);
    for i in 0..20 {
        let w = 0.1 * 100f64.powf(i as f64 / 19.0);
        let f = Packet1d { amplitude: 1.0, center: 0.5 * i as f64 - 3.0, width: w, frequency: if i % 2 == 0 { 0.0 } else { 1.5 } };
        let b = l1_fourier_bound(&f).unwrap();
        assert!(b.pass, "w = {w}: {} > {}", b.lhs, b.rhs);
        if i == 7 {
            let s = l1_fourier_bound(&Packet1d { amplitude: 10.0, ..f }).unwrap();
            assert!((s.lhs - 10.0 * b.lhs).abs() < 1e-8 * s.lhs && (s.rhs - 10.0 * b.rhs).abs() < 1e-8 * s.rhs);
            assert!(s.pass);
        }
    }
}
