use std::f64::consts::{FRAC_PI_2, PI};
use std::path::{Path, PathBuf};

use floqfreeze::analytic::{freezing_frequencies, q_infinite, q_l3, rwa_mx_t};
use floqfreeze::decayfit::{
    bundled_experiment_table, corrected_q, fit_decay, inverse_correct, load_experiment_table,
    synthetic_decay,
};
use floqfreeze::fermion::{allowed_momenta, integrate_mode, mx_from_modes, ModeAmplitudes};
use floqfreeze::grape::{synthesize, ControlProblem, InitialPulse, RfEnsemble};
use floqfreeze::incoherent::q_prob;
use floqfreeze::model::{build_internal_hamiltonian, Boundary, NmrSystem};
use floqfreeze::propagate::{cycle_propagator, run_from_angle, sweep_q, SweepConfig};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{pick, FileConfig, RunConfig, DEFAULT_OMEGA_GRID};
use crate::svg::{line_chart, Series};
use crate::{CliError, FitArgs, GrapeArgs};

fn num(v: f64) -> String {
    format!("{v}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Compute(format!("writing {}: {e}", path.display()))
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn sweep(rc: &RunConfig) -> Result<(), CliError> {
    rc.prepare_out_dir()?;
    let omegas = rc
        .omegas
        .clone()
        .unwrap_or_else(|| DEFAULT_OMEGA_GRID.to_vec());
    let cfg = SweepConfig {
        steps_per_cycle: rc.steps_per_cycle,
        cycles: rc.cycles,
        angle: rc.angle,
        kind: rc.kind,
        ..SweepConfig::default()
    };
    let exact = sweep_q(&omegas, &rc.template, &rc.chain, &cfg)?;
    let mut rows = Vec::with_capacity(exact.len());
    let mut cols: [Vec<(f64, f64)>; 4] = Default::default();
    for r in &exact {
        let p = rc.params(r.omega)?;
        let vals = [r.q, q_l3(&p)?, q_infinite(&p)?, q_prob(&p, 30)?];
        for (c, v) in cols.iter_mut().zip(vals) {
            c.push((r.omega, v));
        }
        rows.push(std::iter::once(r.omega).chain(vals).map(num).collect());
    }
    write_csv(
        &rc.out_dir.join("sweep.csv"),
        &["omega", "q_exact", "q_rwa_l3", "q_infinite", "q_prob_30"],
        &rows,
    )?;
    if rc.svg() {
        let [a, b, c, d] = cols;
        let series = [
            Series {
                name: "exact",
                points: a,
            },
            Series {
                name: "RWA, L = 3",
                points: b,
            },
            Series {
                name: "L → ∞",
                points: c,
            },
            Series {
                name: "incoherent, N = 30",
                points: d,
            },
        ];
        let mx0 = rc.angle.sin();
        let title = format!("Q vs ω, mˣ(0) = {mx0:.3}");
        write_text(
            &rc.out_dir.join("sweep.svg"),
            &line_chart(&title, "ω (rad/s)", "Q", &series),
        )?;
    }
    Ok(())
}

pub fn trace(rc: &RunConfig) -> Result<(), CliError> {
    rc.prepare_out_dir()?;
    let omega = rc.single_omega(5.61)?;
    let p = rc.params(omega)?;
    let grid = rc.grid(&p)?;
    let exact = run_from_angle(&p, &rc.chain, &grid, rc.angle, rc.kind, rc.steps_per_cycle)?;
    // mode and rotating-wave columns describe the fully polarized start on the ring
    let polarized_ring =
        (rc.angle - FRAC_PI_2).abs() < 1e-12 && rc.chain.boundary == Boundary::Periodic;
    let fermion = if polarized_ring {
        let mode = allowed_momenta(3, p.j_coupling)?[1];
        let tr = integrate_mode(
            &mode,
            &p,
            grid.total_time(),
            grid.dt(),
            ModeAmplitudes::polarized(),
            grid.rule,
        )?;
        Some(mx_from_modes(&tr))
    } else {
        None
    };
    let mut rows = Vec::with_capacity(exact.len());
    let mut cols: [Vec<(f64, f64)>; 3] = Default::default();
    for (i, (&t, &m)) in exact.times.iter().zip(&exact.mx).enumerate() {
        let f = fermion.as_ref().map(|v| v[i]);
        let r = if polarized_ring {
            Some(rwa_mx_t(&p, t)?)
        } else {
            None
        };
        cols[0].push((t, m));
        if let (Some(f), Some(r)) = (f, r) {
            cols[1].push((t, f));
            cols[2].push((t, r));
        }
        rows.push(vec![
            num(t),
            num(m),
            f.map(num).unwrap_or_default(),
            r.map(num).unwrap_or_default(),
        ]);
    }
    write_csv(
        &rc.out_dir.join("trace.csv"),
        &["t", "mx_exact", "mx_fermion", "mx_rwa"],
        &rows,
    )?;
    if rc.svg() {
        let [a, b, c] = cols;
        let series = [
            Series {
                name: "exact",
                points: a,
            },
            Series {
                name: "modes",
                points: b,
            },
            Series {
                name: "RWA",
                points: c,
            },
        ];
        let title = format!("mˣ(t) at ω = {omega} rad/s");
        write_text(
            &rc.out_dir.join("trace.svg"),
            &line_chart(&title, "t (s)", "mˣ", &series),
        )?;
    }
    Ok(())
}

pub fn freeze_points(rc: &RunConfig, range: (f64, f64)) -> Result<(), CliError> {
    let h0 = rc.template.h0;
    let omegas = freezing_frequencies(h0, range)?;
    let rows: Vec<Vec<String>> = omegas
        .iter()
        .map(|&w| vec![num(w), num(2.0 * h0 / w)])
        .collect();
    println!("omega,bessel_argument");
    for r in &rows {
        println!("{}", r.join(","));
    }
    if rc.out_dir_given {
        rc.prepare_out_dir()?;
        write_csv(
            &rc.out_dir.join("freeze_points.csv"),
            &["omega", "bessel_argument"],
            &rows,
        )?;
    }
    Ok(())
}

fn read_series(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let bad = |msg: String| CliError::Usage(format!("{}: {msg}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().ne(["t", "mx"]) {
        return Err(bad("expected header t,mx".into()));
    }
    let (mut t, mut y) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let parse = |i: usize| {
            rec[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("line {line}: bad number {:?}", &rec[i])))
        };
        t.push(parse(0)?);
        y.push(parse(1)?);
    }
    Ok((t, y))
}

pub fn fit(rc: &RunConfig, file: &FileConfig, args: &FitArgs) -> Result<(), CliError> {
    rc.prepare_out_dir()?;
    let input = args.input.clone().or_else(|| file.input.clone());
    let (times, values) = match input {
        Some(path) => read_series(&path)?,
        None => {
            let t_d = pick(args.t_d, file.t_d, 0.17);
            let noise = pick(args.noise, file.noise, 0.01);
            let spacing = pick(args.sample_interval, file.sample_interval, 0.01);
            if !(t_d > 0.0 && t_d.is_finite())
                || !(noise >= 0.0 && noise.is_finite())
                || !(spacing > 0.0 && spacing.is_finite())
            {
                return Err(CliError::Usage(
                    "need t_d > 0, noise ≥ 0 and sample_interval > 0".into(),
                ));
            }
            let p = rc.params(rc.single_omega(5.61)?)?;
            let s = run_from_angle(&p, &rc.chain, &rc.grid(&p)?, rc.angle, rc.kind, 1)?;
            let times: Vec<f64> = (0..s.mx.len()).map(|n| spacing * n as f64).collect();
            let values = synthetic_decay(&s.mx, &times, t_d, noise, rc.seed)?;
            (times, values)
        }
    };
    let report = fit_decay(&times, &values, None)?;
    let f = report.fit;
    let q_raw = values.iter().sum::<f64>() / values.len() as f64;
    let q_corr = corrected_q(&f, &times)?;
    let flags = report.flags;
    let bool_str = |b: bool| if b { "true" } else { "false" }.to_string();
    write_csv(
        &rc.out_dir.join("fit_params.csv"),
        &[
            "alpha",
            "beta",
            "gamma",
            "c",
            "t_d",
            "rms",
            "iterations",
            "q_raw",
            "q_corrected",
            "not_converged",
            "c_unidentified",
            "degenerate",
            "out_of_bounds",
        ],
        &[vec![
            num(f.alpha),
            num(f.beta),
            num(f.gamma),
            num(f.c),
            num(f.t_d),
            num(report.error_bar.rms),
            report.iterations.to_string(),
            num(q_raw),
            num(q_corr),
            bool_str(flags.not_converged),
            bool_str(flags.c_unidentified),
            bool_str(flags.degenerate),
            bool_str(flags.out_of_bounds),
        ]],
    )?;
    let corrected = inverse_correct(&f, &times);
    let rows: Vec<Vec<String>> = times
        .iter()
        .zip(&values)
        .zip(&corrected)
        .map(|((&t, &y), &c)| vec![num(t), num(y), num(f.model(t)), num(c)])
        .collect();
    write_csv(
        &rc.out_dir.join("fit_series.csv"),
        &["t", "mx", "mx_model", "mx_corrected"],
        &rows,
    )?;
    println!(
        "Q raw {q_raw:.4}, corrected {q_corr:.4} ± {:.4}, T_d = {:.4} s",
        report.error_bar.rms, f.t_d
    );
    if rc.svg() {
        let series = [
            Series {
                name: "data",
                points: times.iter().copied().zip(values.iter().copied()).collect(),
            },
            Series {
                name: "fit",
                points: times.iter().map(|&t| (t, f.model(t))).collect(),
            },
            Series {
                name: "decay removed",
                points: times.iter().copied().zip(corrected).collect(),
            },
        ];
        write_text(
            &rc.out_dir.join("fit.svg"),
            &line_chart("Decay fit", "t (s)", "mˣ", &series),
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PulseReport {
    problem_sha256: String,
    omega: f64,
    segments: usize,
    segment_duration_s: f64,
    amplitude_bound_rad_s: f64,
    seed: u64,
    fidelity: f64,
    iterations: usize,
    converged: bool,
    stagnated: bool,
}

pub fn grape(rc: &RunConfig, file: &FileConfig, args: &GrapeArgs) -> Result<(), CliError> {
    rc.prepare_out_dir()?;
    let segments = pick(args.segments, file.segments, 200);
    let segment_ms = pick(args.segment_ms, file.segment_ms, 0.5);
    let bound_hz = pick(args.bound_hz, file.bound_hz, 1000.0);
    let max_iters = pick(args.max_iters, file.max_iters, 2000);
    let tol = pick(args.tol, file.tol, 0.01);
    if !(tol > 0.0 && tol < 1.0) {
        return Err(CliError::Usage(format!(
            "tol must lie in (0, 1), got {tol}"
        )));
    }
    let omega = rc.single_omega(5.61)?;
    let p = rc.params(omega)?;
    let target = cycle_propagator(&p, &rc.chain, &rc.grid(&p)?)?.into_matrix();
    let drift = build_internal_hamiltonian(&NmrSystem::example_three_spin());
    let problem = ControlProblem::new(
        &drift,
        &ControlProblem::global_rf_controls(3),
        target,
        segments,
        segment_ms * 1e-3,
        2.0 * PI * bound_hz,
        RfEnsemble::default(),
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;
    let init = InitialPulse::Random {
        seed: rc.seed,
        relative_scale: 0.05,
    };
    let report = synthesize(&problem, max_iters, tol, &init)?;
    let a = &report.schedule.amplitudes;
    let rows: Vec<Vec<String>> = (0..a.nrows())
        .map(|k| vec![k.to_string(), num(a[(k, 0)]), num(a[(k, 1)])])
        .collect();
    write_csv(
        &rc.out_dir.join("pulse.csv"),
        &["segment_index", "amplitude_x", "amplitude_y"],
        &rows,
    )?;
    let sidecar = PulseReport {
        problem_sha256: hex::encode(Sha256::digest(problem.fingerprint())),
        omega,
        segments,
        segment_duration_s: problem.segment_dt,
        amplitude_bound_rad_s: problem.amplitude_bound,
        seed: rc.seed,
        fidelity: report.schedule.achieved_fidelity,
        iterations: report.iterations,
        converged: report.converged,
        stagnated: report.stagnated,
    };
    let json =
        serde_json::to_string_pretty(&sidecar).map_err(|e| CliError::Compute(e.to_string()))?;
    write_text(&rc.out_dir.join("pulse.json"), &(json + "\n"))?;
    println!(
        "ensemble fidelity {:.5} after {} iterations{}",
        report.schedule.achieved_fidelity,
        report.iterations,
        if report.converged {
            ""
        } else {
            " (target not reached)"
        }
    );
    if rc.svg() {
        let pts = |c: usize| (0..a.nrows()).map(|k| (k as f64, a[(k, c)])).collect();
        let series = [
            Series {
                name: "x",
                points: pts(0),
            },
            Series {
                name: "y",
                points: pts(1),
            },
        ];
        write_text(
            &rc.out_dir.join("pulse.svg"),
            &line_chart("RF schedule", "segment", "amplitude (rad/s)", &series),
        )?;
    }
    Ok(())
}

pub fn validate_dataset(table: Option<PathBuf>) -> Result<(), CliError> {
    let (rows, source) = match table {
        Some(path) => (
            load_experiment_table(&path).map_err(|e| CliError::Usage(e.to_string()))?,
            path.display().to_string(),
        ),
        None => (bundled_experiment_table(), "bundled table".to_string()),
    };
    let bad: Vec<_> = rows.iter().filter(|r| !r.satisfies_invariants()).collect();
    for r in &bad {
        println!(
            "violation: omega {} has q_corrected {} < q_raw {}",
            r.omega, r.q_corrected, r.q_raw
        );
    }
    let verdict = if bad.is_empty() { "PASS" } else { "FAIL" };
    println!(
        "{verdict}: {source}, {} rows, {} satisfy q_corrected >= q_raw",
        rows.len(),
        rows.len() - bad.len()
    );
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::Compute(format!(
            "{} rows violate q_corrected >= q_raw",
            bad.len()
        )))
    }
}
