use std::f64::consts::PI;

use serde_json::json;

use spincat_core::catfit::{
    drive_point, fidelity_trace, linspace, optimize_from_scan, scan_drive, DriveScanPoint, OptimalDrive,
    OptimizeConfig, ScanConfig, ScanEntry,
};
use spincat_core::dynamics::{canonical_initial, propagate, DriveParams, Propagator, StepControl};
use spincat_core::eigen::{eigen_phase_profiles, gap_trace, initial_populations, top_eigenpairs};
use spincat_core::interferometry::{
    dft_frequencies, dip_frequency, fringe_analytic, fringe_exact, fringe_experiment, fringe_mixed, fringe_width,
    protocol_thetas, spectrum_discrete, FringeCurve, NoiseSpec,
};
use spincat_core::spin::{build_operators, mss_state, q_function, SphereGrid, SpinState, TotalSpin};

use crate::output::{Cell, Sink, Table};
use crate::{
    Cli, Command, DriveArgs, EigenArgs, EigenTrace, EvolveArgs, Failure, FringeArgs, GridArgs, NoiseArgs, OptimizeArgs,
    QGridArgs, QfuncArgs, ScanArgs, SpectrumArgs,
};

/// Reported optimal drives `(2J, ω̃/π, φ/π)`, used when none is given.
const PRESET_DRIVES: [(u32, f64, f64); 3] = [(100, 0.0204, 0.024), (149, 0.0174, 0.012), (400, 0.0151, -0.0128)];

pub(crate) fn dispatch(cli: &Cli, sink: &mut Sink) -> Result<(), Failure> {
    let seed = cli.global.seed;
    match &cli.command {
        Command::Evolve(a) => evolve(a, seed, sink),
        Command::Scan(a) => scan(a, seed, sink),
        Command::Optimize(a) => optimize(a, seed, sink),
        Command::Fringe(a) => fringe(a, seed, sink),
        Command::Spectrum(a) => spectrum(a, seed, sink),
        Command::Eigen(a) => eigen(a, seed, sink),
        Command::Qfunc(a) => qfunc(a, sink),
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn resolve_drive(spin: TotalSpin, d: &DriveArgs, r: f64) -> Result<DriveParams, Failure> {
    let (omega, phi) = match (d.omega, d.phi) {
        (Some(w), Some(p)) => (w.radians(), p.radians()),
        (None, None) if r == 0.0 => (0.0, 0.0),
        (None, None) => PRESET_DRIVES
            .iter()
            .find(|p| p.0 == spin.twice_j())
            .map(|p| (p.1 * PI, p.2 * PI))
            .ok_or_else(|| usage(format!("--omega and --phi are required for J = {spin}")))?,
        _ => return Err(usage("--omega and --phi must be given together")),
    };
    Ok(DriveParams::new(spin, omega, phi).with_r(r)?)
}

fn scan_config(seed: u64, r: f64, sample_dtau: f64, dtau: f64, tau_limit: f64) -> ScanConfig {
    let mut cfg = ScanConfig {
        sample_dtau,
        dtau,
        tau_limit,
        r,
        ..ScanConfig::default()
    };
    cfg.fit.seed = seed;
    cfg.confirm.seed = seed;
    cfg
}

fn sphere_grid(g: &QGridArgs) -> Result<SphereGrid, Failure> {
    if g.n_alpha < 2 || g.n_beta < 2 {
        return Err(usage("--n-alpha and --n-beta must be at least 2"));
    }
    Ok(SphereGrid {
        n_alpha: g.n_alpha,
        n_beta: g.n_beta,
    })
}

fn q_table(state: &SpinState, grid: &SphereGrid, comment: String) -> Result<Table, Failure> {
    let q = q_function(state, grid)?;
    let mut t = Table::new(&["alpha", "beta", "Q"]);
    let (a, b, v) = q.argmax();
    t.comment(comment).comment(format!("argmax alpha={a} beta={b} Q={v}"));
    for (a, b, v) in q.rows() {
        t.push(vec![a.into(), b.into(), v.into()]);
    }
    Ok(t)
}

fn positive(name: &str, x: f64) -> Result<(), Failure> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("--{name} must be positive, got {x}")))
    }
}

fn evolve(a: &EvolveArgs, seed: u64, sink: &mut Sink) -> Result<(), Failure> {
    let spin = a.spin.spin();
    let drive = resolve_drive(spin, &a.drive, a.r)?;
    positive("tau-end", a.tau_end)?;
    positive("sample-dtau", a.trace.sample_dtau)?;
    positive("dtau", a.trace.dtau)?;
    let n = (a.tau_end / a.trace.sample_dtau).round() as usize;
    let taus: Vec<f64> = (0..=n).map(|i| i as f64 * a.tau_end / n.max(1) as f64).collect();
    let step = StepControl::unchecked(a.trace.dtau, a.trace.sample_dtau);
    let mut fit = ScanConfig::default().fit;
    fit.seed = seed;
    let trace = fidelity_trace(&drive, &taus, &step, &fit)?;

    let mut t = Table::new(&[
        "tau",
        "F",
        "gamma_prime_0",
        "delta_0/pi",
        "alpha",
        "beta",
        "parity_residual",
    ]);
    t.comment(format!(
        "J={spin} omega={} phi={} r={}",
        drive.omega_tilde, drive.phi, drive.r
    ));
    for p in &trace {
        t.push(vec![
            p.tau.into(),
            p.fit.fidelity.into(),
            p.fit.params.gamma_prime.into(),
            (p.fit.delta0 / PI).into(),
            p.fit.params.alpha.into(),
            p.fit.params.beta.into(),
            p.parity_residual.into(),
        ]);
    }
    sink.table("trace", &t)?;

    if !a.q_at.is_empty() {
        let grid = sphere_grid(&a.grid)?;
        let mut times = a.q_at.clone();
        if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(usage("--q-at times must be non-negative"));
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mut prop = Propagator::new(&canonical_initial(spin), drive, a.trace.dtau, step.method)?;
        for tau in times {
            prop.advance_to(tau)?;
            let table = q_table(&prop.state(), &grid, format!("J={spin} tau={tau}"))?;
            sink.table(&format!("qfunc_tau{tau}"), &table)?;
        }
    }
    Ok(())
}

fn grid_config(spin: TotalSpin, g: &GridArgs, seed: u64) -> Result<OptimizeConfig, Failure> {
    if g.n_omega == 0 || g.n_phi == 0 {
        return Err(usage("--n-omega and --n-phi must be positive"));
    }
    positive("tau-limit", g.tau_limit)?;
    positive("sample-dtau", g.trace.sample_dtau)?;
    positive("dtau", g.trace.dtau)?;
    DriveParams::new(spin, 0.0, 0.0).with_r(g.r)?;
    Ok(OptimizeConfig {
        omega_min: g.omega_min.radians(),
        omega_max: g.omega_max.radians(),
        n_omega: g.n_omega,
        phi_min: g.phi_min.radians(),
        phi_max: g.phi_max.radians(),
        n_phi: g.n_phi,
        scan: scan_config(seed, g.r, g.trace.sample_dtau, g.trace.dtau, g.tau_limit),
        ..OptimizeConfig::default()
    })
}

const POINT_COLUMNS: [&str; 9] = [
    "omega/pi",
    "phi/pi",
    "tau_max",
    "F_max",
    "delta_max/pi",
    "alpha",
    "beta",
    "gamma_prime",
    "parity_residual_max",
];

fn point_row(p: &DriveScanPoint) -> Vec<Cell> {
    vec![
        (p.omega_tilde / PI).into(),
        (p.phi / PI).into(),
        p.tau_max.into(),
        p.f_max.into(),
        (p.delta_max / PI).into(),
        p.params.alpha.into(),
        p.params.beta.into(),
        p.params.gamma_prime.into(),
        p.parity_residual_max.into(),
    ]
}

fn scan_table(spin: TotalSpin, entries: &[ScanEntry]) -> Table {
    let mut cols = POINT_COLUMNS.to_vec();
    cols.push("error");
    let mut t = Table::new(&cols);
    t.comment(format!("J={spin} drives={}", entries.len()));
    for e in entries {
        let row = match &e.result {
            Ok(p) => {
                let mut r = point_row(p);
                r.push(Cell::Missing);
                r
            }
            Err(err) => {
                let mut r = vec![(e.omega_tilde / PI).into(), (e.phi / PI).into()];
                r.extend(std::iter::repeat_n(Cell::Missing, POINT_COLUMNS.len() - 2));
                r.push(err.to_string().into());
                r
            }
        };
        t.push(row);
    }
    t
}

fn scan(a: &ScanArgs, seed: u64, sink: &mut Sink) -> Result<(), Failure> {
    let spin = a.spin.spin();
    let cfg = grid_config(spin, &a.grid, seed)?;
    let entries = scan_drive(spin, &cfg.omegas(), &cfg.phis(), &cfg.scan)?;
    sink.table("scan", &scan_table(spin, &entries))
}

fn optimize(a: &OptimizeArgs, seed: u64, sink: &mut Sink) -> Result<(), Failure> {
    let spin = a.spin.spin();
    let mut cfg = grid_config(spin, &a.grid, seed)?;
    cfg.delta_threshold = a.delta_threshold.radians();
    cfg.refine_unit = a.refine_unit.radians();
    positive("refine-unit", cfg.refine_unit)?;
    let coarse = scan_drive(spin, &cfg.omegas(), &cfg.phis(), &cfg.scan)?;
    sink.table("scan", &scan_table(spin, &coarse))?;
    let report = optimize_from_scan(spin, &cfg, coarse)?;
    let mut t = Table::new(&POINT_COLUMNS);
    t.comment(format!("J={spin} refinement points"));
    for p in &report.refined {
        t.push(point_row(p));
    }
    sink.table("refined", &t)?;
    let o = &report.optimal;
    sink.json(
        "optimal",
        &json!({
            "J": spin,
            "omega_opt/pi": o.omega_opt / PI,
            "phi_opt/pi": o.phi_opt / PI,
            "tau_opt": o.tau_opt,
            "F_opt": o.f_opt,
            "delta_opt/pi": o.delta_opt / PI,
            "angles_opt": o.angles_opt,
            "coarse_best": report.coarse_best,
        }),
    )
}

fn optimal_for(spin: TotalSpin, d: &DriveArgs, seed: u64) -> Result<OptimalDrive, Failure> {
    let drive = resolve_drive(spin, d, 1.0)?;
    let cfg = scan_config(seed, 1.0, 0.05, 2e-3, 60.0);
    let p = drive_point(spin, drive.omega_tilde, drive.phi, &cfg)?;
    Ok(OptimalDrive::from_point(spin, &p))
}

fn prepared_state(o: &OptimalDrive) -> Result<SpinState, Failure> {
    let step = StepControl {
        record_every: o.tau_opt,
        ..StepControl::default()
    };
    Ok(propagate(&canonical_initial(o.spin), &o.drive(), o.tau_opt, &step)?
        .last()
        .clone())
}

fn noisy_fringe(o: &OptimalDrive, n: &NoiseArgs, seed: u64, thetas: &[f64]) -> Result<Option<FringeCurve>, Failure> {
    let Some(noise) = n.noise else { return Ok(None) };
    let spec = NoiseSpec::new(noise.target, noise.sigma_rel, n.trials, seed)?;
    Ok(Some(fringe_experiment(o, &spec, thetas, &StepControl::default())?))
}

fn drive_json(o: &OptimalDrive) -> serde_json::Value {
    json!({
        "J": o.spin,
        "omega/pi": o.omega_opt / PI,
        "phi/pi": o.phi_opt / PI,
        "tau_opt": o.tau_opt,
        "F_opt": o.f_opt,
        "delta_opt/pi": o.delta_opt / PI,
        "angles_opt": o.angles_opt,
    })
}

fn fringe(a: &FringeArgs, seed: u64, sink: &mut Sink) -> Result<(), Failure> {
    let spin = a.spin.spin();
    positive("theta-max", a.theta_max)?;
    if a.n_theta < 2 {
        return Err(usage("--n-theta must be at least 2"));
    }
    let o = optimal_for(spin, &a.drive, seed)?;
    let thetas = linspace(-a.theta_max * PI / spin.j(), a.theta_max * PI / spin.j(), a.n_theta);
    let par = o.angles_opt;
    let pure = fringe_exact(&prepared_state(&o)?, &thetas).sqrt_variance();
    let perfect = fringe_exact(&mss_state(spin, par)?, &thetas).sqrt_variance();
    let analytic = fringe_analytic(spin, par.beta, par.gamma_prime, &thetas).sqrt_variance();
    let mixed = fringe_mixed(spin, par.alpha, par.beta, par.gamma_prime, &thetas).sqrt_variance();
    let noisy = noisy_fringe(&o, &a.noise, seed, &thetas)?;

    let mut t = Table::new(&[
        "theta",
        "thetaJ/pi",
        "sqrt_var",
        "sqrt_var_noisy",
        "std_noisy",
        "perfect_mss",
        "analytic",
        "mixed",
    ]);
    t.comment(format!(
        "J={spin} omega/pi={} phi/pi={} tau_opt={} F_opt={}",
        o.omega_opt / PI,
        o.phi_opt / PI,
        o.tau_opt,
        o.f_opt
    ));
    t.comment(format!("fringe_width={}", fringe_width(spin, par.beta)));
    if let Some(n) = a.noise.noise {
        t.comment(format!(
            "noise {:?} sigma_rel={} trials={} seed={seed}",
            n.target, n.sigma_rel, a.noise.trials
        ));
    }
    for (i, &th) in thetas.iter().enumerate() {
        let (nv, ns) = match &noisy {
            Some(c) => (
                Cell::from(c.variance[i].sqrt()),
                Cell::from(c.stds.as_ref().map(|s| s[i])),
            ),
            None => (Cell::Missing, Cell::Missing),
        };
        t.push(vec![
            th.into(),
            (th * spin.j() / PI).into(),
            pure[i].into(),
            nv,
            ns,
            perfect[i].into(),
            analytic[i].into(),
            mixed[i].into(),
        ]);
    }
    sink.table("fringe", &t)?;
    sink.json("drive", &drive_json(&o))
}

fn spectrum(a: &SpectrumArgs, seed: u64, sink: &mut Sink) -> Result<(), Failure> {
    let spin = a.spin.spin();
    if a.oversample == 0 {
        return Err(usage("--oversample must be positive"));
    }
    let o = optimal_for(spin, &a.drive, seed)?;
    let beta = o.angles_opt.beta;
    let thetas = protocol_thetas(spin, beta)?;
    let dtheta = thetas[1];
    let wb = dip_frequency(spin, beta).abs();
    let omegas = dft_frequencies(dtheta, a.oversample * thetas.len(), 1.5 * wb);

    let perfect = spectrum_discrete(
        &fringe_exact(&mss_state(spin, o.angles_opt)?, &thetas),
        spin,
        beta,
        &omegas,
    )?;
    let pure = spectrum_discrete(&fringe_exact(&prepared_state(&o)?, &thetas), spin, beta, &omegas)?;
    let noisy = noisy_fringe(&o, &a.noise, seed, &thetas)?
        .map(|c| spectrum_discrete(&c, spin, beta, &omegas))
        .transpose()?;

    let mut t = Table::new(&["omega", "perfect_mss", "pure", "noisy", "analytic"]);
    t.comment(format!("J={spin} beta={beta} dtheta={dtheta} samples={}", thetas.len()));
    t.comment(format!("dip_frequency={}", perfect.dip_frequencies.1));
    for (i, &w) in omegas.iter().enumerate() {
        t.push(vec![
            w.into(),
            perfect.values[i].into(),
            pure.values[i].into(),
            noisy.as_ref().map(|s| s.values[i]).into(),
            perfect.analytic[i].into(),
        ]);
    }
    sink.table("spectrum", &t)?;
    let dips = |s: &spincat_core::interferometry::SpectrumResult| json!([s.observed_dips.0, s.observed_dips.1]);
    sink.json(
        "dips",
        &json!({
            "drive": drive_json(&o),
            "analytic": [perfect.dip_frequencies.0, perfect.dip_frequencies.1],
            "perfect_mss": dips(&perfect),
            "pure": dips(&pure),
            "noisy": noisy.as_ref().map(dips),
            "protocol_mismatch": perfect.protocol_mismatch,
        }),
    )
}

fn sample_taus(tau_end: f64, dtau: f64) -> Result<Vec<f64>, Failure> {
    positive("tau-end", tau_end)?;
    positive("sample-dtau", dtau)?;
    let n = (tau_end / dtau).round().max(1.0) as usize;
    Ok((0..=n).map(|i| i as f64 * tau_end / n as f64).collect())
}

fn eigen(a: &EigenArgs, _seed: u64, sink: &mut Sink) -> Result<(), Failure> {
    let spin = a.spin.spin();
    let drive = resolve_drive(spin, &a.drive, a.r)?;
    let header = format!("J={spin} omega={} phi={} r={}", drive.omega_tilde, drive.phi, drive.r);
    match a.trace {
        EigenTrace::Gap => {
            let g = gap_trace(&drive, &sample_taus(a.tau_end, a.sample_dtau)?)?;
            let mut t = Table::new(&["tau", "phase/pi", "gap"]);
            t.comment(header);
            t.comment(match g.closure_tau() {
                Some(c) => format!("gap_closure_tau={c}"),
                None => "gap_closure_tau=none".to_string(),
            });
            for i in 0..g.taus.len() {
                t.push(vec![g.taus[i].into(), (g.phases[i] / PI).into(), g.gaps[i].into()]);
            }
            sink.table("gap", &t)
        }
        EigenTrace::Pop => {
            let p = initial_populations(&drive)?;
            let mut t = Table::new(&["J", "p1", "p2", "pRest"]);
            t.comment(header);
            t.push(vec![spin.j().into(), p.p1.into(), p.p2.into(), p.p_rest.into()]);
            sink.table("populations", &t)
        }
        EigenTrace::Phase => {
            if a.every == 0 {
                return Err(usage("--every must be positive"));
            }
            let samples = eigen_phase_profiles(&drive, &sample_taus(a.tau_end, a.sample_dtau)?)?;
            let mut t = Table::new(&["tau", "eigenstate", "M/J", "gamma_prime", "defined", "gap_closed"]);
            t.comment(header);
            for s in &samples {
                for (k, prof) in [(1usize, &s.first), (2, &s.second)] {
                    for e in prof.iter().step_by(a.every) {
                        t.push(vec![
                            s.tau.into(),
                            k.into(),
                            (e.m / spin.j()).into(),
                            e.gamma_prime.into(),
                            e.gamma_prime.is_some().into(),
                            s.gap_closed.into(),
                        ]);
                    }
                }
            }
            sink.table("phase", &t)
        }
    }
}

fn qfunc(a: &QfuncArgs, sink: &mut Sink) -> Result<(), Failure> {
    let spin = a.spin.spin();
    let drive = resolve_drive(spin, &a.drive, a.r)?;
    let grid = sphere_grid(&a.grid)?;
    if !(a.tau >= 0.0 && a.tau.is_finite()) {
        return Err(usage("--tau must be non-negative"));
    }
    let (state, label) = match a.eigen {
        Some(0) => return Err(usage("--eigen counts from 1")),
        Some(k) => {
            let ops = build_operators(spin)?;
            let pairs = top_eigenpairs(&ops, &drive, a.tau, k)?;
            let p = pairs
                .into_iter()
                .nth(k - 1)
                .ok_or_else(|| usage(format!("only {} levels", spin.dim())))?;
            (
                p.vector,
                format!("eigenstate={k} energy={} parity={:?}", p.value, p.parity),
            )
        }
        None if a.tau == 0.0 => (canonical_initial(spin), "evolved".to_string()),
        None => {
            let step = StepControl {
                record_every: a.tau,
                ..StepControl::default()
            };
            (
                propagate(&canonical_initial(spin), &drive, a.tau, &step)?
                    .last()
                    .clone(),
                "evolved".to_string(),
            )
        }
    };
    let comment = format!(
        "J={spin} omega={} phi={} r={} tau={} {label}",
        drive.omega_tilde, drive.phi, drive.r, a.tau
    );
    sink.table("qfunc", &q_table(&state, &grid, comment)?)
}
