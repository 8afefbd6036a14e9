//! Fitting evolved states to the cat-state family, locating the first
//! fidelity maximum and scanning the drive parameters.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{canonical_initial, DriveParams, ExpMethod, Propagator, StepControl};
use crate::optim::{basin_hop, HopSettings, SimplexOptions};
use crate::spin::{branch_overlap, count_ln, half_ln_binomial, wrap_angle, CatParams, SpinState, TotalSpin};
use crate::{Error, Result, C64};

/// Amplitudes more than this many e-folds below the largest one are skipped.
const LOG_WINDOW: f64 = 40.0;

/// Distance kept from the excluded points `(0, π/2)` and `(π, π/2)`.
pub const DEGENERATE_CLAMP: f64 = 1e-6;

/// Settings for the basin-hopping maximization of the cat-state fidelity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinHopConfig {
    pub hops: usize,
    /// Uniform perturbation half-widths for `(α, β, γ′)` in radians.
    pub step_scales: [f64; 3],
    /// Metropolis temperature in fidelity units.
    pub temperature: f64,
    pub seed: u64,
    pub local: SimplexOptions,
    /// Initial simplex edges for `(α, β, γ′)`.
    pub simplex_steps: [f64; 3],
    /// How many of the best coarse seeds start a local descent.
    pub polish_seeds: usize,
    /// Largest improvement on the final hop still counted as converged.
    pub convergence_tol: f64,
    pub fail_on_unconverged: bool,
}

impl Default for BasinHopConfig {
    fn default() -> Self {
        Self {
            hops: 50,
            step_scales: [0.3, 0.3, 0.6],
            temperature: 0.1,
            seed: 0,
            local: SimplexOptions::default(),
            simplex_steps: [0.1, 0.1, 0.2],
            polish_seeds: SEED_COUNT,
            convergence_tol: 1e-6,
            fail_on_unconverged: true,
        }
    }
}

impl BasinHopConfig {
    /// Lighter search for dense time traces, where each fit is warm-started
    /// from the previous sample.
    pub fn trace_preset() -> Self {
        Self {
            hops: 4,
            polish_seeds: 2,
            local: SimplexOptions {
                ftol: 1e-13,
                xtol: 1e-7,
                max_evals: 2000,
            },
            fail_on_unconverged: false,
            ..Self::default()
        }
    }

    /// Medium search used to confirm candidate maxima found with the trace preset.
    pub fn confirm_preset() -> Self {
        Self {
            hops: 12,
            polish_seeds: SEED_COUNT,
            fail_on_unconverged: false,
            ..Self::default()
        }
    }
}

const SEED_COUNT: usize = 16;

/// Coarse seeds: `α ∈ {-π/2, 0, π/2, π}`, `β ∈ {π/8, 3π/8}`, `γ′ ∈ {0, π}`.
pub fn seed_grid() -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(SEED_COUNT);
    for alpha in [-FRAC_PI_2, 0.0, FRAC_PI_2, PI] {
        for beta in [PI / 8.0, 3.0 * PI / 8.0] {
            for gp in [0.0, PI] {
                out.push([alpha, beta, gp]);
            }
        }
    }
    out
}

/// Maps raw optimizer coordinates into the parameter domain: `α`, `γ′` wrap,
/// `β` reflects into `[0, π]` and is pushed off the excluded points.
pub fn project_params(x: [f64; 3]) -> [f64; 3] {
    let alpha = wrap_angle(x[0]);
    let mut beta = x[1].rem_euclid(2.0 * PI);
    if beta > PI {
        beta = 2.0 * PI - beta;
    }
    let near_axis = alpha.abs() < DEGENERATE_CLAMP || (alpha.abs() - PI).abs() < DEGENERATE_CLAMP;
    if near_axis && (beta - FRAC_PI_2).abs() < DEGENERATE_CLAMP {
        let side = if beta < FRAC_PI_2 { -1.0 } else { 1.0 };
        beta = FRAC_PI_2 + side * DEGENERATE_CLAMP;
    }
    [alpha, beta, wrap_angle(x[2])]
}

/// Fast evaluation of `|⟨MSS(α,β,γ′)|ψ⟩|²` for a fixed state.
///
/// Uses `⟨MSS|ψ⟩ = (⟨c|ψ⟩ + e^{-iγ′}⟨c|X̂ψ⟩)/A` with `c = CSS(α, β)`. Only the
/// binomial window around the mode of `|c_n|` is summed, walking outward with
/// the ratio `|c_{n+1}/c_n| = √((2J-n)/(n+1))·tan(β/2)`.
#[derive(Clone, Debug)]
pub struct MssOverlap {
    spin: TotalSpin,
    half_ln_c: Vec<f64>,
    /// `√((2J-n)/(n+1))` for `n = 0..2J`.
    ratios: Vec<f64>,
    psi: Vec<C64>,
    psi_flipped: Vec<C64>,
}

impl MssOverlap {
    pub fn new(state: &SpinState) -> Self {
        let spin = state.spin();
        let n_tot = spin.twice_j() as f64;
        let psi = state.amps().to_vec();
        let psi_flipped = psi.iter().rev().copied().collect();
        let ratios = (0..spin.twice_j() as usize)
            .map(|n| ((n_tot - n as f64) / (n as f64 + 1.0)).sqrt())
            .collect();
        Self {
            spin,
            half_ln_c: half_ln_binomial(spin),
            ratios,
            psi,
            psi_flipped,
        }
    }

    /// `(⟨c|ψ⟩, ⟨c|X̂ψ⟩)` for `c = CSS(α, β)`.
    pub fn branches(&self, alpha: f64, beta: f64) -> (C64, C64) {
        let top = self.spin.twice_j() as usize;
        let t = (0.5 * beta).tan();
        let term = |n: usize, mag: f64| {
            let w = C64::from_polar(mag, -(n as f64) * alpha);
            (w * self.psi[n], w * self.psi_flipped[n])
        };
        if t == 0.0 || !t.is_finite() || beta >= PI {
            let n = if t == 0.0 { 0 } else { top };
            return term(n, 1.0);
        }
        let n_tot = top as f64;
        let ln_c = (0.5 * beta).cos().ln();
        let ln_s = (0.5 * beta).sin().ln();
        let mode = ((n_tot * (0.5 * beta).sin().powi(2)).round() as usize).min(top);
        let mode_f = mode as f64;
        let mag0 = (self.half_ln_c[mode] + count_ln(n_tot - mode_f, ln_c) + count_ln(mode_f, ln_s)).exp();
        let floor = mag0 * (-LOG_WINDOW).exp();

        let (mut a, mut b) = term(mode, mag0);
        let step_up = C64::from_polar(1.0, -alpha);
        let mut mag = mag0;
        let mut phase = C64::from_polar(1.0, -mode_f * alpha);
        for n in mode + 1..=top {
            mag *= self.ratios[n - 1] * t;
            if mag < floor {
                break;
            }
            phase *= step_up;
            let w = phase * mag;
            a += w * self.psi[n];
            b += w * self.psi_flipped[n];
        }
        let step_down = step_up.conj();
        let mut mag = mag0;
        let mut phase = C64::from_polar(1.0, -mode_f * alpha);
        for n in (0..mode).rev() {
            mag /= self.ratios[n] * t;
            if mag < floor {
                break;
            }
            phase *= step_down;
            let w = phase * mag;
            a += w * self.psi[n];
            b += w * self.psi_flipped[n];
        }
        (a, b)
    }

    pub fn fidelity(&self, alpha: f64, beta: f64, gamma_prime: f64) -> f64 {
        let (a, b) = self.branches(alpha, beta);
        let norm2 = 2.0 * (1.0 + branch_overlap(self.spin, alpha, beta) * gamma_prime.cos());
        if norm2 <= f64::MIN_POSITIVE {
            return 0.0;
        }
        let amp = a + C64::from_polar(1.0, -gamma_prime) * b;
        (amp.norm_sqr() / norm2).clamp(0.0, 1.0)
    }
}

/// Best cat-state approximation of a state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub fidelity: f64,
    pub params: CatParams,
    /// Displacement angle of `params`.
    pub delta0: f64,
}

/// Largest fidelity loss accepted when snapping a fitted `γ′` to 0.
pub const GAMMA_TIE: f64 = 1e-12;

/// Picks the labelling with `β ≤ π/2` among the two equivalent ones.
fn canonical(p: [f64; 3]) -> [f64; 3] {
    if p[1] > FRAC_PI_2 {
        project_params([-p[0], PI - p[1], -p[2]])
    } else {
        p
    }
}

/// Maximizes the fidelity to the cat-state family by basin hopping.
pub fn fit_mss(state: &SpinState, config: &BasinHopConfig) -> Result<FitResult> {
    fit_mss_with_hint(state, config, None)
}

/// As [`fit_mss`], additionally starting a descent from `hint`.
pub fn fit_mss_with_hint(state: &SpinState, config: &BasinHopConfig, hint: Option<CatParams>) -> Result<FitResult> {
    let overlap = MssOverlap::new(state);
    let objective = |x: &[f64; 3]| 1.0 - overlap.fidelity(x[0], x[1], x[2]);

    let mut seeds: Vec<([f64; 3], f64)> = seed_grid()
        .into_iter()
        .map(|s| {
            let s = project_params(s);
            (s, objective(&s))
        })
        .collect();
    seeds.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut starts: Vec<[f64; 3]> = Vec::new();
    if let Some(h) = hint {
        starts.push(project_params([h.alpha, h.beta, h.gamma_prime]));
    }
    starts.extend(seeds.iter().take(config.polish_seeds.max(1)).map(|s| s.0));

    let settings = HopSettings {
        hops: config.hops,
        step_scales: config.step_scales,
        temperature: config.temperature,
        seed: config.seed,
    };
    let out = basin_hop(
        objective,
        &starts,
        config.simplex_steps,
        project_params,
        &config.local,
        &settings,
    );
    if config.fail_on_unconverged && out.final_improvement > config.convergence_tol {
        return Err(Error::NotConverged {
            moved: out.final_improvement,
        });
    }
    let mut x = canonical(out.best.x);
    // γ′ is unidentifiable where the branches coincide; prefer 0 on ties.
    if objective(&[x[0], x[1], 0.0]) <= out.best.f + GAMMA_TIE {
        x[2] = 0.0;
    }
    let params = CatParams::new(x[0], x[1], x[2])?;
    Ok(FitResult {
        fidelity: 1.0 - out.best.f,
        params,
        delta0: params.displacement_angle(),
    })
}

/// One sample of a fidelity trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub tau: f64,
    pub fit: FitResult,
    /// `‖X̂ψ - ψ‖` of the propagated state.
    pub parity_residual: f64,
}

/// Propagates the canonical initial state under `drive` and fits every
/// sample of `taus`, warm-starting each fit from the previous one.
pub fn fidelity_trace(
    drive: &DriveParams,
    taus: &[f64],
    step: &StepControl,
    fit: &BasinHopConfig,
) -> Result<Vec<TracePoint>> {
    if taus.windows(2).any(|w| w[1] <= w[0]) || taus.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::param("taus", "must be non-negative and strictly increasing"));
    }
    let mut prop = Propagator::new(&canonical_initial(drive.spin), *drive, step.dtau, step.method)?;
    let mut out = Vec::with_capacity(taus.len());
    let mut hint = None;
    for &tau in taus {
        prop.advance_to(tau)?;
        let state = prop.state();
        let f = fit_mss_with_hint(&state, fit, hint)?;
        hint = Some(f.params);
        out.push(TracePoint {
            tau,
            fit: f,
            parity_residual: state.parity_residual(),
        });
    }
    Ok(out)
}

/// Samples below this difference from a neighbor do not count as a strict
/// local maximum; fit noise is several orders of magnitude smaller.
pub const LOCAL_MAX_FLOOR: f64 = 1e-9;

/// Index of the first interior sample exceeding both neighbors.
pub fn first_local_max_index(values: &[f64]) -> Result<usize> {
    if values.len() < 3 {
        return Err(Error::param("trace", "needs at least 3 samples"));
    }
    (1..values.len() - 1)
        .find(|&i| is_local_max(values[i - 1], values[i], values[i + 1]))
        .ok_or(Error::NoLocalMax)
}

fn is_local_max(left: f64, mid: f64, right: f64) -> bool {
    mid - left > LOCAL_MAX_FLOOR && mid - right > LOCAL_MAX_FLOOR
}

/// Golden-section maximization of `f` on `[a, b]` until the bracket is
/// shorter than `tol`. `known` is an already evaluated interior point.
pub fn golden_section_max(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    tol: f64,
    known: Option<(f64, f64)>,
) -> Result<(f64, f64)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut best = known.unwrap_or((f64::NAN, f64::NEG_INFINITY));
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for (x, v) in [(x1, f1), (x2, f2)] {
        if v > best.1 {
            best = (x, v);
        }
    }
    while b - a > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1)?;
            if f1 > best.1 {
                best = (x1, f1);
            }
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2)?;
            if f2 > best.1 {
                best = (x2, f2);
            }
        }
    }
    Ok(best)
}

/// First strict local maximum of a sampled trace, refined by golden-section
/// search of `eval` between the neighboring samples.
pub fn first_local_max(
    taus: &[f64],
    values: &[f64],
    eval: impl FnMut(f64) -> Result<f64>,
    tol: f64,
) -> Result<(f64, f64)> {
    if taus.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: taus.len(),
            got: values.len(),
        });
    }
    let i = first_local_max_index(values)?;
    golden_section_max(eval, taus[i - 1], taus[i + 1], tol, Some((taus[i], values[i])))
}

/// Per-drive summary of the first fidelity maximum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveScanPoint {
    pub omega_tilde: f64,
    pub phi: f64,
    pub tau_max: f64,
    pub f_max: f64,
    pub delta_max: f64,
    pub params: CatParams,
    /// Largest `‖X̂ψ - ψ‖` seen along the sampled trajectory.
    pub parity_residual_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Spacing of the coarse fidelity trace.
    pub sample_dtau: f64,
    /// Give up if no maximum appears before this time.
    pub tau_limit: f64,
    /// Resolution of the golden-section refinement of `τ_max`.
    pub refine_tol: f64,
    pub dtau: f64,
    pub method: ExpMethod,
    pub r: f64,
    pub fit: BasinHopConfig,
    pub confirm: BasinHopConfig,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            sample_dtau: 0.05,
            tau_limit: 60.0,
            refine_tol: 1e-3,
            dtau: 2e-3,
            method: ExpMethod::Chebyshev,
            r: 1.0,
            fit: BasinHopConfig::trace_preset(),
            confirm: BasinHopConfig::confirm_preset(),
        }
    }
}

#[derive(Clone)]
struct Sample {
    prop: Propagator,
    fit: FitResult,
}

/// Finds the first fidelity maximum in time for one drive.
pub fn drive_point(spin: TotalSpin, omega_tilde: f64, phi: f64, cfg: &ScanConfig) -> Result<DriveScanPoint> {
    if !(cfg.sample_dtau > 0.0 && cfg.tau_limit > 0.0 && cfg.refine_tol > 0.0) {
        return Err(Error::param(
            "scan",
            "sample spacing, time limit and tolerance must be positive",
        ));
    }
    let drive = DriveParams::new(spin, omega_tilde, phi).with_r(cfg.r)?;
    let init = canonical_initial(spin);
    let mut prop = Propagator::new(&init, drive, cfg.dtau, cfg.method)?;
    let mut window: Vec<Sample> = Vec::with_capacity(3);
    let mut parity_max: f64 = 0.0;
    let fit_at = |p: &Propagator, hint: Option<CatParams>, cfg_fit: &BasinHopConfig| {
        fit_mss_with_hint(&p.state(), cfg_fit, hint)
    };

    let mut k = 0usize;
    loop {
        let tau = k as f64 * cfg.sample_dtau;
        if tau > cfg.tau_limit + 1e-12 {
            return Err(Error::NoLocalMax);
        }
        prop.advance_to(tau)?;
        parity_max = parity_max.max(prop.state().parity_residual());
        let hint = window.last().map(|s| s.fit.params);
        let fit = fit_at(&prop, hint, &cfg.fit)?;
        window.push(Sample {
            prop: prop.clone(),
            fit,
        });
        if window.len() > 3 {
            window.remove(0);
        }
        k += 1;
        if window.len() < 3 {
            continue;
        }
        let (l, m, r) = (window[0].fit.fidelity, window[1].fit.fidelity, window[2].fit.fidelity);
        if !is_local_max(l, m, r) {
            continue;
        }
        // A poor warm-started fit at either neighbor can fake a maximum.
        let mid_hint = Some(window[1].fit.params);
        for idx in [0, 2, 1] {
            let better = fit_at(&window[idx].prop, mid_hint, &cfg.confirm)?;
            if better.fidelity > window[idx].fit.fidelity {
                window[idx].fit = better;
            }
        }
        let (l, m, r) = (window[0].fit.fidelity, window[1].fit.fidelity, window[2].fit.fidelity);
        if !is_local_max(l, m, r) {
            continue;
        }

        let left = window[0].prop.clone();
        let t_left = left.tau();
        let t_right = window[2].prop.tau();
        let mut best_fit = window[1].fit;
        let mut best_tau = window[1].prop.tau();
        let known = Some((best_tau, best_fit.fidelity));
        let mut eval = |t: f64| -> Result<f64> {
            let mut p = left.clone();
            p.advance_to(t)?;
            let f = fit_at(&p, mid_hint, &cfg.fit)?;
            if f.fidelity > best_fit.fidelity {
                best_fit = f;
                best_tau = t;
            }
            Ok(f.fidelity)
        };
        golden_section_max(&mut eval, t_left, t_right, cfg.refine_tol, known)?;
        return Ok(DriveScanPoint {
            omega_tilde,
            phi,
            tau_max: best_tau,
            f_max: best_fit.fidelity,
            delta_max: best_fit.delta0,
            params: best_fit.params,
            parity_residual_max: parity_max,
        });
    }
}

/// `n` evenly spaced values from `lo` to `hi` inclusive (`lo` alone if `n = 1`).
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// One grid cell of a drive scan; failures are kept rather than aborting.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanEntry {
    pub i_omega: usize,
    pub i_phi: usize,
    pub omega_tilde: f64,
    pub phi: f64,
    pub result: std::result::Result<DriveScanPoint, Error>,
}

/// Evaluates every `(ω̃, φ)` pair, in parallel, returned in row-major order
/// (`ω̃` outer, `φ` inner).
pub fn scan_drive(spin: TotalSpin, omegas: &[f64], phis: &[f64], cfg: &ScanConfig) -> Result<Vec<ScanEntry>> {
    if omegas.is_empty() {
        return Err(Error::EmptyGrid("omega"));
    }
    if phis.is_empty() {
        return Err(Error::EmptyGrid("phi"));
    }
    let cells: Vec<(usize, usize)> = (0..omegas.len())
        .flat_map(|i| (0..phis.len()).map(move |j| (i, j)))
        .collect();
    Ok(cells
        .into_par_iter()
        .map(|(i, j)| ScanEntry {
            i_omega: i,
            i_phi: j,
            omega_tilde: omegas[i],
            phi: phis[j],
            result: drive_point(spin, omegas[i], phis[j], cfg),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_omega: usize,
    pub phi_min: f64,
    pub phi_max: f64,
    pub n_phi: usize,
    /// Lattice unit of the refinement stage.
    pub refine_unit: f64,
    /// Hill-climbing step sizes, in lattice units, from coarse to fine.
    pub refine_steps: Vec<u32>,
    /// Admissibility threshold on the displacement angle.
    pub delta_threshold: f64,
    pub scan: ScanConfig,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            omega_min: 0.005 * PI,
            omega_max: 0.05 * PI,
            n_omega: 51,
            phi_min: -0.05 * PI,
            phi_max: 0.05 * PI,
            n_phi: 51,
            refine_unit: 1e-4 * PI,
            refine_steps: vec![8, 4, 2, 1],
            delta_threshold: 0.4 * PI,
            scan: ScanConfig::default(),
        }
    }
}

impl OptimizeConfig {
    pub fn omegas(&self) -> Vec<f64> {
        linspace(self.omega_min, self.omega_max, self.n_omega)
    }

    pub fn phis(&self) -> Vec<f64> {
        linspace(self.phi_min, self.phi_max, self.n_phi)
    }

    fn feasible(&self, p: &DriveScanPoint) -> bool {
        p.delta_max - self.delta_threshold > 1e-9
    }
}

/// The admissible drive with the highest first-maximum fidelity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalDrive {
    pub spin: TotalSpin,
    pub omega_opt: f64,
    pub phi_opt: f64,
    pub tau_opt: f64,
    pub f_opt: f64,
    pub delta_opt: f64,
    pub angles_opt: CatParams,
}

impl OptimalDrive {
    pub fn drive(&self) -> DriveParams {
        DriveParams::new(self.spin, self.omega_opt, self.phi_opt)
    }

    /// Wraps a single evaluated drive point.
    pub fn from_point(spin: TotalSpin, p: &DriveScanPoint) -> Self {
        Self {
            spin,
            omega_opt: p.omega_tilde,
            phi_opt: p.phi,
            tau_opt: p.tau_max,
            f_opt: p.f_max,
            delta_opt: p.delta_max,
            angles_opt: p.params,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimizeReport {
    pub optimal: OptimalDrive,
    pub coarse: Vec<ScanEntry>,
    /// Coarse-grid winner the refinement started from.
    pub coarse_best: DriveScanPoint,
    /// Every point evaluated during refinement.
    pub refined: Vec<DriveScanPoint>,
}

/// Coarse scan followed by monotone lattice hill climbing.
pub fn optimize_drive(spin: TotalSpin, cfg: &OptimizeConfig) -> Result<OptimizeReport> {
    let coarse = scan_drive(spin, &cfg.omegas(), &cfg.phis(), &cfg.scan)?;
    optimize_from_scan(spin, cfg, coarse)
}

/// Refinement stage of [`optimize_drive`] on an existing coarse scan.
pub fn optimize_from_scan(spin: TotalSpin, cfg: &OptimizeConfig, coarse: Vec<ScanEntry>) -> Result<OptimizeReport> {
    let mut best: Option<DriveScanPoint> = None;
    for e in &coarse {
        if let Ok(p) = &e.result {
            if cfg.feasible(p) && best.is_none_or(|b| p.f_max > b.f_max) {
                best = Some(*p);
            }
        }
    }
    let coarse_best = best.ok_or(Error::Infeasible {
        threshold_over_pi: cfg.delta_threshold / PI,
    })?;

    let mut cache: HashMap<(i64, i64), Option<DriveScanPoint>> = HashMap::new();
    let mut refined = Vec::new();
    let mut pos = (0i64, 0i64);
    let mut current = coarse_best;
    cache.insert(pos, Some(current));
    let neighbors = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
    for &s in &cfg.refine_steps {
        let s = s as i64;
        loop {
            let todo: Vec<(i64, i64)> = neighbors
                .iter()
                .map(|&(a, b)| (pos.0 + a * s, pos.1 + b * s))
                .filter(|k| !cache.contains_key(k))
                .collect();
            let fresh: Vec<((i64, i64), Option<DriveScanPoint>)> = todo
                .into_par_iter()
                .map(|k| {
                    let omega = coarse_best.omega_tilde + k.0 as f64 * cfg.refine_unit;
                    let phi = coarse_best.phi + k.1 as f64 * cfg.refine_unit;
                    let r = if omega > 0.0 {
                        drive_point(spin, omega, phi, &cfg.scan).ok()
                    } else {
                        None
                    };
                    (k, r)
                })
                .collect();
            for (k, r) in fresh {
                if let Some(p) = r {
                    refined.push(p);
                }
                cache.insert(k, r);
            }
            let mut step_to = None;
            for &(a, b) in &neighbors {
                let k = (pos.0 + a * s, pos.1 + b * s);
                if let Some(Some(p)) = cache.get(&k) {
                    let target = step_to.map_or(current.f_max, |(_, q): ((i64, i64), DriveScanPoint)| q.f_max);
                    if cfg.feasible(p) && p.f_max > target {
                        step_to = Some((k, *p));
                    }
                }
            }
            match step_to {
                Some((k, p)) => {
                    pos = k;
                    current = p;
                }
                None => break,
            }
        }
    }
    Ok(OptimizeReport {
        optimal: OptimalDrive::from_point(spin, &current),
        coarse,
        coarse_best,
        refined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{css_state, mss_state};

    fn spin(j2: u32) -> TotalSpin {
        TotalSpin::from_twice_j(j2)
    }

    #[test]
    fn fast_overlap_matches_direct_inner_product() {
        let s = spin(21);
        let psi = mss_state(s, CatParams::new(0.7, 1.0, 0.4).unwrap()).unwrap();
        let ov = MssOverlap::new(&psi);
        for &(a, b, g) in &[(0.3, 0.4, 0.0), (-1.2, 2.0, 1.0), (2.9, 1.5, -2.0)] {
            let m = mss_state(s, CatParams::new(a, b, g).unwrap()).unwrap();
            let direct = m.overlap_probability(&psi);
            assert!((ov.fidelity(a, b, g) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_point_reports_zero_relative_phase() {
        for j2 in [20, 100] {
            let fit = fit_mss(&canonical_initial(spin(j2)), &BasinHopConfig::default()).unwrap();
            assert!(fit.fidelity > 1.0 - 1e-9);
            assert_eq!(fit.params.gamma_prime, 0.0);
        }
        let psi = mss_state(spin(21), CatParams::new(0.7, 1.0, 0.4).unwrap()).unwrap();
        let fit = fit_mss(&psi, &BasinHopConfig::default()).unwrap();
        assert!((wrap_angle(fit.params.gamma_prime) - 0.4).abs() < 1e-5, "{fit:?}");
    }

    #[test]
    fn relabeling_leaves_fidelity_unchanged() {
        let s = spin(30);
        let psi = css_state(s, 0.2, 0.9).unwrap();
        let ov = MssOverlap::new(&psi);
        for &(a, b, g) in &[(0.3, 0.4, 0.5), (-1.2, 2.0, 1.0), (2.9, 1.5, -2.0)] {
            let p = CatParams::new(a, b, g).unwrap();
            let q = p.relabeled();
            let d = ov.fidelity(p.alpha, p.beta, p.gamma_prime) - ov.fidelity(q.alpha, q.beta, q.gamma_prime);
            assert!(d.abs() < 1e-12);
        }
    }

    #[test]
    fn self_fit_recovers_parameters() {
        let s = spin(20);
        let p = CatParams::new(0.4, 0.6, 0.0).unwrap();
        let psi = mss_state(s, p).unwrap();
        let fit = fit_mss(&psi, &BasinHopConfig::default()).unwrap();
        assert!(fit.fidelity > 1.0 - 1e-8);
        let q = fit.params;
        let same = |x: CatParams| {
            (wrap_angle(x.alpha - q.alpha)).abs() < 1e-4
                && (x.beta - q.beta).abs() < 1e-4
                && wrap_angle(x.gamma_prime - q.gamma_prime).abs() < 1e-4
        };
        assert!(same(p) || same(p.relabeled()), "{q:?}");
        let direct = mss_state(s, q).unwrap().overlap_probability(&psi);
        assert!((direct - fit.fidelity).abs() < 1e-9);
    }

    #[test]
    fn coherent_state_fit_sits_at_clamped_boundary() {
        let s = spin(20);
        let psi = css_state(s, 0.0, FRAC_PI_2).unwrap();
        let fit = fit_mss(&psi, &BasinHopConfig::default()).unwrap();
        assert!(fit.fidelity > 1.0 - 1e-6);
        assert!(fit.delta0 < 1e-3);
        assert!(!fit.params.is_degenerate());
    }

    #[test]
    fn fit_is_reproducible_and_beats_seeds() {
        let s = spin(16);
        let psi = css_state(s, 1.0, 0.5).unwrap();
        let cfg = BasinHopConfig {
            seed: 5,
            ..BasinHopConfig::default()
        };
        let a = fit_mss(&psi, &cfg).unwrap();
        let b = fit_mss(&psi, &cfg).unwrap();
        assert_eq!(a, b);
        let ov = MssOverlap::new(&psi);
        let seed_best = seed_grid()
            .into_iter()
            .map(|x| {
                let x = project_params(x);
                ov.fidelity(x[0], x[1], x[2])
            })
            .fold(0.0, f64::max);
        assert!(a.fidelity >= seed_best);
    }

    #[test]
    fn projection_avoids_excluded_points() {
        let p = project_params([0.0, FRAC_PI_2, 0.0]);
        assert!((p[1] - FRAC_PI_2).abs() >= DEGENERATE_CLAMP * 0.999);
        let p = project_params([PI, FRAC_PI_2 - 1e-9, 0.0]);
        assert!(p[1] < FRAC_PI_2);
        let p = project_params([0.0, -0.3, 7.0]);
        assert!((p[1] - 0.3).abs() < 1e-15);
        assert!(p[2] > -PI && p[2] <= PI);
        let p = project_params([0.0, PI + 0.2, 0.0]);
        assert!((p[1] - (PI - 0.2)).abs() < 1e-12);
    }

    #[test]
    fn synthetic_parabola_maximum() {
        let f = |t: f64| -(t - 3.0).powi(2) + 1.0;
        let taus: Vec<f64> = (0..60).map(|i| i as f64 * 0.1).collect();
        let vals: Vec<f64> = taus.iter().map(|&t| f(t)).collect();
        let (t, v) = first_local_max(&taus, &vals, |t| Ok(f(t)), 1e-3).unwrap();
        assert!((t - 3.0).abs() < 1e-3);
        assert!((v - 1.0).abs() < 1e-6);
    }

    #[test]
    fn monotone_trace_has_no_maximum() {
        let taus: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(first_local_max(&taus, &taus, Ok, 1e-3), Err(Error::NoLocalMax));
        assert!(first_local_max_index(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn linspace_endpoints() {
        let v = linspace(-1.0, 1.0, 5);
        assert_eq!(v, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(linspace(2.0, 3.0, 1), vec![2.0]);
    }

    #[test]
    fn empty_scan_grid_is_rejected() {
        let r = scan_drive(spin(10), &[], &[0.0], &ScanConfig::default());
        assert_eq!(r.unwrap_err(), Error::EmptyGrid("omega"));
    }
}
