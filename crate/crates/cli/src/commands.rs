use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use qftscat::fitter::{self, FitData, Reference};
use qftscat::formfactor::{AmplitudeRequest, FormFactorEvaluator};
use qftscat::gns::{self, FormFactorPairing};
use qftscat::kinematics::invariant_index;
use qftscat::lszlab::{self, ConvergenceReport, Packet1d, PairingSetup, StudyOptions};
use qftscat::transfer::{hermiticity_identity_check_random, invariant_count, invariant_pairs, invariant_name, validate_family};
use qftscat::truncation;
use qftscat::LegLabel;
use serde_json::{json, Value};

use crate::config::{section, Loaded, ReferenceConfig};
use crate::output::Tables;
use crate::CliError;

/// Result of one command: pass flag, JSON body and CSV tables.
pub struct Outcome {
    pub pass: bool,
    pub result: Value,
    pub tables: Tables,
}

fn num<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Numerical(e.to_string())
}

fn cx(z: Complex64) -> Value {
    json!([z.re, z.im])
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    let s = a.norm().max(b.norm());
    if s == 0.0 {
        0.0
    } else {
        (a - b).norm() / s
    }
}

pub fn amplitude(l: &Loaded) -> Result<Outcome, CliError> {
    let cfg = &l.config;
    let a = section(&cfg.amplitude, "amplitude")?;
    let req = AmplitudeRequest::new(a.in_packets.clone(), a.out_packets.clone()).map_err(|e| CliError::Config(format!("amplitude: {e}")))?;
    let ev = cfg.structure()?;
    let fam = cfg.family();
    let ff = FormFactorEvaluator::new(ev.clone(), fam.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let base = ff.smatrix_amplitude(&req).map_err(num)?;
    let fine_ev = qftscat::structure::StructureEvaluator::new(cfg.model, cfg.rho(), cfg.quad.refined(a.refine_factor)).map_err(num)?;
    let fine = FormFactorEvaluator::new(fine_ev, fam.clone()).map_err(num)?.smatrix_amplitude(&req).map_err(num)?;
    // the same density read off the first outgoing leg's forward-shell atom
    let legs = req.legs();
    let weight = fam.as_ref().map(|f| f.get(legs.len()));
    let alt = ev.onshell_term(req.r(), &legs, weight.as_ref(), 1).map_err(num)?.value * Complex64::new(0.0, std::f64::consts::TAU);
    let refinement = rel(base.value, fine.value);
    let two_path = rel(base.value, alt);
    let pass = refinement <= a.tolerance && two_path <= a.tolerance;
    let mut tables = Tables::default();
    let row = |path: &str, res: f64, v: Complex64, err: String| vec![path.to_string(), res.to_string(), v.re.to_string(), v.im.to_string(), err];
    tables.add(
        "amplitude.csv",
        &["path", "resolution", "value_re", "value_im", "est_error"],
        vec![
            row("base", 1.0, base.value, base.abs_err.to_string()),
            row("refined", a.refine_factor, fine.value, fine.abs_err.to_string()),
            row("alternate", 1.0, alt, String::new()),
        ],
    );
    let result = json!({
        "n": req.n(),
        "r": req.r(),
        "value": cx(base.value),
        "abs_err": base.abs_err,
        "refined_value": cx(fine.value),
        "refinement_rel_diff": refinement,
        "alternate_value": cx(alt),
        "two_path_rel_diff": two_path,
        "tolerance": a.tolerance,
    });
    Ok(Outcome { pass, result, tables })
}

fn report_json(r: &ConvergenceReport<f64>) -> Value {
    json!({
        "final_value": r.values.last().copied().map(cx),
        "final_window_average": r.window_averaged.last().copied().map(cx),
        "extrapolated_limit": cx(r.extrapolated_limit),
        "limit_uncertainty": r.limit_uncertainty,
        "oscillation_amplitude": r.oscillation_amplitude,
        "fitted_rate": r.fitted_rate.map(|(c, a)| json!({"c": c, "alpha": a})),
        "target": r.target.map(cx),
        "final_relative_error": r.final_relative_error(),
        "decade_envelope": r.decade_envelope,
        "noise_floor": r.noise_floor,
        "status": format!("{:?}", r.status),
        "orderings": r.orderings.iter().map(|o| json!({"order": o.order, "limit": cx(o.limit), "uncertainty": o.uncertainty})).collect::<Vec<_>>(),
        "ordering_spread": r.ordering_spread,
        "orderings_agree": r.orderings_agree(),
    })
}

fn series_table(r: &ConvergenceReport<f64>) -> Vec<Vec<String>> {
    (0..r.t_grid.len())
        .map(|i| {
            let rel = r.target.map(|t| ((r.window_averaged[i] - t).norm() / t.norm()).to_string()).unwrap_or_default();
            vec![
                r.t_grid[i].to_string(),
                r.values[i].re.to_string(),
                r.values[i].im.to_string(),
                r.abs_errors[i].to_string(),
                r.window_averaged[i].re.to_string(),
                r.window_averaged[i].im.to_string(),
                rel,
            ]
        })
        .collect()
}

const SERIES_COLUMNS: [&str; 7] = ["t", "re", "im", "abs_err", "avg_re", "avg_im", "rel_error"];

pub fn converge(l: &Loaded) -> Result<Outcome, CliError> {
    let cfg = &l.config;
    let c = section(&cfg.converge, "converge")?;
    if c.labels.len() != c.legs.len() || c.legs.len() < 2 {
        return Err(CliError::Config(format!("converge: {} labels for {} legs", c.labels.len(), c.legs.len())));
    }
    if !(c.t_min > 0.0 && c.t_max > c.t_min && c.points >= 2) {
        return Err(CliError::Config("converge: need 0 < t_min < t_max and points ≥ 2".into()));
    }
    let ev = cfg.structure()?;
    let fam = cfg.family();
    if c.weighted && fam.is_none() {
        return Err(CliError::Config("converge: `weighted` needs a `transfer` section".into()));
    }
    let weight = if c.weighted { fam.as_ref().map(|f| f.get(c.legs.len())) } else { None };
    let target = if c.compare_form_factor {
        let ff = FormFactorEvaluator::new(ev.clone(), fam.clone()).map_err(num)?;
        let v = if c.weighted { ff.eval_f_n(&c.labels, &c.legs) } else { ff.eval_fg_n(&c.labels, &c.legs) };
        Some(v.map_err(num)?.value)
    } else {
        None
    };
    let setup = PairingSetup { ev: &ev, legs: &c.legs, labels: &c.labels, weight: weight.as_ref() };
    let opts = StudyOptions { target, samples: c.samples, ..StudyOptions::default() };
    let grid = lszlab::log_grid(c.t_min, c.t_max, c.points);
    let r = lszlab::convergence_study(&setup, &grid, &c.orderings, &opts).map_err(num)?;
    let converged = r.status == lszlab::ConvergenceStatus::Converged;
    let close = r.final_relative_error().map_or(true, |e| e <= c.max_rel_error);
    let pass = converged && close && r.orderings_agree();
    let mut tables = Tables::default();
    tables.add("converge.csv", &SERIES_COLUMNS, series_table(&r));
    Ok(Outcome { pass, result: report_json(&r), tables })
}

fn read_table(path: &Path, n: usize, m: f64) -> Result<FitData, CliError> {
    let bad = |e: String| CliError::Config(format!("{}: {e}", path.display()));
    let mut rd = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = rd.headers().map_err(|e| bad(e.to_string()))?.clone();
    let names: BTreeMap<String, usize> = invariant_pairs(n).iter().map(|&(i, j)| (invariant_name(i + 1, j + 1, n), invariant_index(i, j))).collect();
    let mut slots = Vec::new();
    let mut value_col = None;
    for (c, h) in header.iter().enumerate() {
        match (h, names.get(h)) {
            ("value", _) => value_col = Some(c),
            (_, Some(&k)) => slots.push((c, k)),
            _ => return Err(bad(format!("unknown column `{h}`"))),
        }
    }
    let value_col = value_col.ok_or_else(|| bad("missing `value` column".into()))?;
    let mut data = FitData::default();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |c: usize| rec[c].trim().parse::<f64>().map_err(|e| bad(format!("row {}: {e}", line + 2)));
        let mut q = vec![f64::NAN; invariant_count(n)];
        for i in 0..n {
            q[invariant_index(i, i)] = m * m;
        }
        for &(c, k) in &slots {
            q[k] = field(c)?;
        }
        if q.iter().any(|x| x.is_nan()) {
            return Err(bad(format!("row {}: missing invariants", line + 2)));
        }
        data.invariants.push(q);
        data.values.push(field(value_col)?);
    }
    Ok(data)
}

pub fn fit(l: &Loaded) -> Result<Outcome, CliError> {
    let cfg = &l.config;
    let f = section(&cfg.fit, "fit")?;
    let s = &f.settings;
    s.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let m = cfg.model.m;
    let builtin = match &f.reference {
        ReferenceConfig::Constant { value } => Some(Reference::Constant { value: *value }),
        ReferenceConfig::ExpQ { i, j } => Some(Reference::ExpQ { i: *i, j: *j }),
        ReferenceConfig::Polynomial { polynomial } => Some(Reference::Polynomial { polynomial: polynomial.clone() }),
        ReferenceConfig::Table { .. } => None,
    };
    let mut sample_info = Value::Null;
    let fitted = match (&builtin, &f.reference) {
        (Some(reference), _) => {
            if let Reference::ExpQ { i, j } = reference {
                if *i == 0 || *j == 0 || *i > f.n || *j > f.n {
                    return Err(CliError::Config(format!("fit: q{i}{j} out of range for n = {}", f.n)));
                }
            }
            let sample = fitter::sample_qn(f.n, f.r, s, &cfg.model).map_err(|e| CliError::Config(e.to_string()))?;
            sample_info = json!({"points": sample.points.len(), "attempts": sample.attempts, "status": sample.status});
            if sample.is_empty() {
                None
            } else {
                Some(fitter::fit_polynomial(|ks| reference.eval(ks, m), &sample, s, &cfg.model).map_err(num)?)
            }
        }
        (None, ReferenceConfig::Table { path }) => {
            let data = read_table(&l.dir.join(path), f.n, m)?;
            let (train, val) = data.split(s.train_count, s.seed);
            Some(fitter::fit_data(f.n, &train, &val, s).map_err(num)?)
        }
        _ => unreachable!(),
    };
    let Some(report) = fitted else {
        return Ok(Outcome { pass: false, result: json!({"sample": sample_info, "report": null}), tables: Tables::default() });
    };
    let mut family = Value::Null;
    let mut family_ok = true;
    if let (Some(l_max), true) = (f.l_max, report.passed) {
        match fitter::build_family(&BTreeMap::from([(f.n, report.clone())]), l_max) {
            Ok(fam) => {
                let herm = hermiticity_identity_check_random(&report.polynomial, cfg.model.d, 64, s.seed);
                family_ok = validate_family(&fam).passed && herm;
                family = json!({"l_max": l_max, "valid": family_ok, "hermiticity": herm});
            }
            Err(e) => {
                family_ok = false;
                family = json!({"l_max": l_max, "valid": false, "error": e.to_string()});
            }
        }
    }
    let mut tables = Tables::default();
    tables.add(
        "fit_history.csv",
        &["degree", "columns", "rank", "train_sup_error", "validate_sup_error"],
        report
            .history
            .iter()
            .map(|h| vec![h.degree.to_string(), h.columns.to_string(), h.rank.to_string(), h.train_sup_error.to_string(), h.validate_sup_error.to_string()])
            .collect(),
    );
    tables.add_json("polynomial.json", serde_json::to_value(&report.polynomial).expect("polynomial serializes"));
    let pass = report.passed && family_ok;
    let result = json!({"sample": sample_info, "report": report, "family": family});
    Ok(Outcome { pass, result, tables })
}

pub fn gram(l: &Loaded) -> Result<Outcome, CliError> {
    let cfg = &l.config;
    let g = section(&cfg.gram, "gram")?;
    if g.family.is_empty() {
        return Err(CliError::Config("gram: empty family".into()));
    }
    let family: Vec<gns::BorchersVector> = g.family.iter().map(|v| v.build()).collect();
    let ff = FormFactorEvaluator::new(cfg.structure()?, cfg.family()).map_err(num)?;
    let (gram, decomposition, psd) = if g.label == LegLabel::Loc {
        let w = FormFactorPairing { ff: &ff, label: g.label, weighted: g.weighted, truncated: g.truncated };
        let gram = gns::gram_matrix(&w, &family).map_err(num)?;
        let d = gns::metric_decomposition(&gram.entries);
        (gram, d, None)
    } else {
        let r = gns::inout_positivity_check(&ff, &family, g.label).map_err(num)?;
        (r.gram, r.decomposition, Some((r.min_eigenvalue, r.pass)))
    };
    let hssc = if g.label == LegLabel::Loc {
        let w = FormFactorPairing { ff: &ff, label: g.label, weighted: g.weighted, truncated: g.truncated };
        Some(gns::hssc_from_gram(&gram, &family, g.k, g.l, &g.norm_grid).or_else(|e| match e {
            gns::GnsError::ZeroNorm(_) => Err(e),
            _ => gns::hssc_estimate(&w, &family, g.k, g.l, &g.norm_grid),
        }))
    } else {
        None
    };
    let hssc = match hssc {
        Some(Ok(h)) => json!({"k": h.k, "l": h.l, "constant": h.constant, "sample_size": h.sample_size, "argmax": h.argmax}),
        Some(Err(e)) => json!({"error": e.to_string()}),
        None => Value::Null,
    };
    let n = gram.dim();
    let matrix: Vec<Vec<Value>> = (0..n).map(|i| (0..n).map(|j| cx(gram.entries[(i, j)])).collect()).collect();
    let herm_ok = gram.hermiticity_deviation < 1e-8;
    let eta_ok = decomposition.eta_square_error < 1e-12;
    let pass = herm_ok && eta_ok && psd.map_or(true, |(_, p)| p);
    let mut tables = Tables::default();
    tables.add(
        "gram.csv",
        &["i", "j", "re", "im"],
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| {
            let z = gram.entries[(i, j)];
            vec![i.to_string(), j.to_string(), z.re.to_string(), z.im.to_string()]
        }).collect(),
    );
    let result = json!({
        "functional": gram.functional,
        "matrix": matrix,
        "hermiticity_deviation": gram.hermiticity_deviation,
        "eigenvalues": decomposition.eigenvalues,
        "inertia": decomposition.inertia,
        "eta_check": decomposition.eta_square_error,
        "min_eigenvalue": psd.map(|p| p.0),
        "hssc_constant": hssc,
    });
    Ok(Outcome { pass, result, tables })
}

pub fn truncate_demo(l: &Loaded) -> Result<Outcome, CliError> {
    let t = section(&l.config.truncate_demo, "truncate_demo")?;
    if t.max_order > truncation::MAX_PARTITION_ORDER {
        return Err(CliError::Config(format!("truncate_demo: max_order above {}", truncation::MAX_PARTITION_ORDER)));
    }
    let rows = truncation::round_trip_check(t.max_order, t.tuples, t.seed).map_err(num)?;
    let pass = rows.iter().all(|r| r.max_rel_error <= t.tolerance && r.partitions as u64 == r.bell);
    let mut tables = Tables::default();
    tables.add(
        "truncate_demo.csv",
        &["order", "bell", "partitions", "tuples", "max_rel_error"],
        rows.iter().map(|r| vec![r.order.to_string(), r.bell.to_string(), r.partitions.to_string(), r.tuples.to_string(), r.max_rel_error.to_string()]).collect(),
    );
    Ok(Outcome { pass, result: json!({"rows": rows, "tolerance": t.tolerance}), tables })
}

pub fn pvdemo(l: &Loaded) -> Result<Outcome, CliError> {
    let p = section(&l.config.pvdemo, "pvdemo")?;
    if p.sigma.abs() != 1 || !(p.packet.width > 0.0) || !(p.t_min > 0.0 && p.t_max > p.t_min) || p.points < 2 {
        return Err(CliError::Config("pvdemo: need sigma = ±1, width > 0, 0 < t_min < t_max, points ≥ 2".into()));
    }
    let f = Packet1d { amplitude: p.packet.amplitude, center: p.packet.center, width: p.packet.width, frequency: p.packet.frequency };
    let r = lszlab::pv_limit_demo(&f, &lszlab::log_grid(p.t_min, p.t_max, p.points), p.sigma).map_err(num)?;
    let s = lszlab::sokhotsky_check(&f, p.epsilon).map_err(num)?;
    let b = lszlab::l1_fourier_bound(&f).map_err(num)?;
    let pv_ok = r.final_relative_error().map_or(false, |e| e < p.max_rel_error);
    let pass = pv_ok && s.extrapolated_difference < p.sokhotsky_tolerance && b.pass;
    let mut tables = Tables::default();
    tables.add("pvdemo.csv", &SERIES_COLUMNS, series_table(&r));
    let result = json!({
        "pv_limit": report_json(&r),
        "sokhotsky": {
            "epsilon": s.eps,
            "distributional": cx(s.distributional),
            "raw": cx(s.raw),
            "extrapolated": cx(s.extrapolated),
            "raw_difference": s.raw_difference,
            "extrapolated_difference": s.extrapolated_difference,
        },
        "l1_bound": {"lhs": b.lhs, "rhs": b.rhs, "pass": b.pass},
    });
    Ok(Outcome { pass, result, tables })
}
