//! Parity-fringe witness: exact and analytic fringes, noise ensembles,
//! fringe spectra and the conversion to laboratory time.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catfit::OptimalDrive;
use crate::dynamics::{canonical_initial, propagate, DriveParams, StepControl};
use crate::spin::{parity_stats, rotate_z, SpinState, TotalSpin};
use crate::{Error, Result, C64};

/// Parity variance `⟨(ΔX̂)²⟩` against the rotation angle `θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringeCurve {
    pub thetas: Vec<f64>,
    pub variance: Vec<f64>,
    /// Per-angle standard deviation across noise trials.
    pub stds: Option<Vec<f64>>,
}

impl FringeCurve {
    fn plain(thetas: &[f64], variance: Vec<f64>) -> Self {
        Self {
            thetas: thetas.to_vec(),
            variance,
            stds: None,
        }
    }

    pub fn sqrt_variance(&self) -> Vec<f64> {
        self.variance.iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

/// Rotates about `z` by each `θ` and evaluates the parity variance exactly.
pub fn fringe_exact(state: &SpinState, thetas: &[f64]) -> FringeCurve {
    let variance = thetas
        .iter()
        .map(|&t| parity_stats(&rotate_z(state, t)).variance.clamp(0.0, 1.0))
        .collect();
    FringeCurve::plain(thetas, variance)
}

/// Gaussian approximation `1 - e^{-2Jθ² sin²β} cos²(2Jθ cosβ + γ′)`.
pub fn fringe_analytic(spin: TotalSpin, beta: f64, gamma_prime: f64, thetas: &[f64]) -> FringeCurve {
    let j = spin.j();
    let variance = thetas
        .iter()
        .map(|&t| {
            let env = (-2.0 * j * t * t * beta.sin().powi(2)).exp();
            1.0 - env * (2.0 * j * t * beta.cos() + gamma_prime).cos().powi(2)
        })
        .collect();
    FringeCurve::plain(thetas, variance)
}

/// Parity variance of the incoherent mixture of the two branches.
pub fn fringe_mixed(spin: TotalSpin, alpha: f64, beta: f64, gamma_prime: f64, thetas: &[f64]) -> FringeCurve {
    let p = spin.twice_j() as i32;
    let s = beta.sin().powi(p);
    let denom = 2.0 * (1.0 + alpha.cos().powi(p) * s * gamma_prime.cos());
    let variance = thetas
        .iter()
        .map(|&t| 1.0 - ((t + alpha).cos().powi(p) + (t - alpha).cos().powi(p)) * s / denom)
        .collect();
    FringeCurve::plain(thetas, variance)
}

/// Width of a single fringe, `π / (2J cos²β)`.
pub fn fringe_width(spin: TotalSpin, beta: f64) -> f64 {
    PI / (2.0 * spin.j() * beta.cos().powi(2))
}

/// Which quantity fluctuates between trials.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum NoiseTarget {
    /// Number of spins `N`.
    SpinNumber,
    /// Drive amplitude `Ω`.
    DriveStrength,
    /// Nonlinear energy `λ` (equivalently the preparation time).
    NonlinearEnergy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum NoiseShape {
    Gaussian,
    Uniform,
}

impl NoiseTarget {
    pub fn shape(self) -> NoiseShape {
        match self {
            NoiseTarget::SpinNumber => NoiseShape::Gaussian,
            NoiseTarget::DriveStrength | NoiseTarget::NonlinearEnergy => NoiseShape::Uniform,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub target: NoiseTarget,
    pub shape: NoiseShape,
    /// Relative width: standard deviation over mean for Gaussian noise,
    /// half-width over mean for uniform noise.
    pub sigma_rel: f64,
    pub trials: usize,
    pub seed: u64,
    pub max_batches: usize,
}

impl NoiseSpec {
    pub const DEFAULT_TRIALS: usize = 250;
    pub const DEFAULT_MAX_BATCHES: usize = 10_000;

    pub fn new(target: NoiseTarget, sigma_rel: f64, trials: usize, seed: u64) -> Result<Self> {
        let spec = Self {
            target,
            shape: target.shape(),
            sigma_rel,
            trials,
            seed,
            max_batches: Self::DEFAULT_MAX_BATCHES,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.shape != self.target.shape() {
            return Err(Error::param(
                "shape",
                format!("{:?} noise must be {:?}", self.target, self.target.shape()),
            ));
        }
        if !(self.sigma_rel >= 0.0 && self.sigma_rel.is_finite()) {
            return Err(Error::param(
                "sigma_rel",
                format!("must be non-negative, got {}", self.sigma_rel),
            ));
        }
        if self.shape == NoiseShape::Uniform && self.sigma_rel >= 1.0 {
            return Err(Error::param("sigma_rel", "uniform noise needs sigma_rel < 1"));
        }
        if self.trials == 0 {
            return Err(Error::param("trials", "need at least one trial"));
        }
        Ok(())
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Draws one batch of perturbed values, redrawing the whole batch until its
/// sample statistics match the target.
///
/// Spin numbers are rounded to integers (at least 1) and must satisfy
/// `|mean - N̄| ≤ 0.01 N̄` and `|std - σ| ≤ 0.1 σ`; uniform draws must satisfy
/// `|mean - nominal| ≤ 0.01 nominal`.
pub fn draw_noise_ensemble(spec: &NoiseSpec, nominal: f64) -> Result<Vec<f64>> {
    spec.validate()?;
    if !(nominal > 0.0 && nominal.is_finite()) {
        return Err(Error::param("nominal", format!("must be positive, got {nominal}")));
    }
    if spec.sigma_rel == 0.0 {
        return Ok(vec![nominal; spec.trials]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sigma = spec.sigma_rel * nominal;
    for _ in 0..spec.max_batches {
        let batch: Vec<f64> = match spec.shape {
            NoiseShape::Gaussian => {
                let normal = Normal::new(nominal, sigma).map_err(|e| Error::param("sigma_rel", e.to_string()))?;
                (0..spec.trials)
                    .map(|_| normal.sample(&mut rng).round().max(1.0))
                    .collect()
            }
            NoiseShape::Uniform => (0..spec.trials)
                .map(|_| rng.random_range((nominal - sigma)..=(nominal + sigma)))
                .collect(),
        };
        let (mean, std) = mean_std(&batch);
        let mean_ok = (mean - nominal).abs() <= 0.01 * nominal;
        let std_ok = spec.shape == NoiseShape::Uniform || (std - sigma).abs() <= 0.1 * sigma;
        if mean_ok && std_ok {
            return Ok(batch);
        }
    }
    Err(Error::ResamplingCap {
        batches: spec.max_batches,
    })
}

/// Drive, total spin and preparation time of one noise trial.
fn trial_setup(nominal: &OptimalDrive, target: NoiseTarget, value: f64) -> Result<(DriveParams, f64)> {
    let base = DriveParams::new(nominal.spin, nominal.omega_opt, nominal.phi_opt);
    match target {
        NoiseTarget::SpinNumber => {
            let n = value.round();
            if !(n >= 1.0 && n <= u32::MAX as f64) {
                return Err(Error::param("N", format!("invalid spin number {value}")));
            }
            let spin = TotalSpin::from_spin_count(n as u32);
            Ok((DriveParams { spin, ..base }, nominal.tau_opt))
        }
        NoiseTarget::DriveStrength => Ok((base.with_r(value)?, nominal.tau_opt)),
        NoiseTarget::NonlinearEnergy => {
            // λ → cλ rescales τ = λt, ω̃ = ω/λ and r = Ω/λ.
            let c = value;
            let drive = DriveParams {
                omega_tilde: base.omega_tilde / c,
                ..base
            }
            .with_r(base.r / c)?;
            Ok((drive, c * nominal.tau_opt))
        }
    }
}

/// Nominal value of the fluctuating quantity for an optimized drive.
pub fn noise_nominal(nominal: &OptimalDrive, target: NoiseTarget) -> f64 {
    match target {
        NoiseTarget::SpinNumber => nominal.spin.spin_count() as f64,
        NoiseTarget::DriveStrength | NoiseTarget::NonlinearEnergy => 1.0,
    }
}

/// Mean fringe and per-angle spread over a noise ensemble.
///
/// Each trial prepares the canonical initial state with the perturbed
/// quantity, propagates it to the nominal `τ_opt` and records the exact fringe.
pub fn fringe_experiment(
    nominal: &OptimalDrive,
    spec: &NoiseSpec,
    thetas: &[f64],
    step: &StepControl,
) -> Result<FringeCurve> {
    let values = draw_noise_ensemble(spec, noise_nominal(nominal, spec.target))?;
    let curves: Vec<Option<Vec<f64>>> = values
        .par_iter()
        .map(|&v| {
            let (drive, tau) = trial_setup(nominal, spec.target, v).ok()?;
            let traj = propagate(
                &canonical_initial(drive.spin),
                &drive,
                tau,
                &StepControl {
                    record_every: tau,
                    ..*step
                },
            )
            .ok()?;
            Some(fringe_exact(traj.last(), thetas).variance)
        })
        .collect();
    let ok: Vec<&Vec<f64>> = curves.iter().flatten().collect();
    let failed = curves.len() - ok.len();
    if failed * 20 > curves.len() {
        return Err(Error::TooManyFailedTrials {
            failed,
            trials: curves.len(),
        });
    }
    let mut variance = Vec::with_capacity(thetas.len());
    let mut stds = Vec::with_capacity(thetas.len());
    for i in 0..thetas.len() {
        let col: Vec<f64> = ok.iter().map(|c| c[i]).collect();
        let (m, s) = mean_std(&col);
        variance.push(m);
        stds.push(s);
    }
    Ok(FringeCurve {
        thetas: thetas.to_vec(),
        variance,
        stds: Some(stds),
    })
}

/// Spectral width `σ_s = 1/√(4J sin²β)`.
pub fn spectral_sigma(spin: TotalSpin, beta: f64) -> f64 {
    1.0 / (4.0 * spin.j() * beta.sin().powi(2)).sqrt()
}

/// Dip position `ω̄ = 4J cosβ`.
pub fn dip_frequency(spin: TotalSpin, beta: f64) -> f64 {
    4.0 * spin.j() * beta.cos()
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < PI) {
        return Err(Error::param("beta", format!("must lie in (0, π), got {beta}")));
    }
    Ok(())
}

/// Continuous spectrum of the ideal fringe residual `variance - 1`:
/// `-(σ/4)[2e^{-σ²ω²/2} + e^{-σ²(ω-ω̄)²/2} + e^{-σ²(ω+ω̄)²/2}]`.
pub fn spectrum_analytic(spin: TotalSpin, beta: f64, omegas: &[f64]) -> Result<Vec<f64>> {
    check_beta(beta)?;
    let s = spectral_sigma(spin, beta);
    let wb = dip_frequency(spin, beta);
    let g = |x: f64| (-0.5 * s * s * x * x).exp();
    Ok(omegas
        .iter()
        .map(|&w| -0.25 * s * (2.0 * g(w) + g(w - wb) + g(w + wb)))
        .collect())
}

/// Rotation angles `θ_n = nΔθ` with `Δθ = 1/(10|ω̄|)`, `n = 0..=n_max`,
/// `θ_{n_max} ≤ 10σ_s`.
pub fn protocol_thetas(spin: TotalSpin, beta: f64) -> Result<Vec<f64>> {
    check_beta(beta)?;
    let wb = dip_frequency(spin, beta).abs();
    if wb < 1e-12 {
        return Err(Error::param("beta", "dip frequency vanishes at β = π/2"));
    }
    let dtheta = 1.0 / (10.0 * wb);
    let theta_max = 10.0 * spectral_sigma(spin, beta);
    let n_max = (theta_max / dtheta + 1e-9).floor() as usize;
    Ok((0..=n_max).map(|n| n as f64 * dtheta).collect())
}

/// Symmetric frequency grid over `[-w_max, w_max]` with `2n + 1` points.
pub fn symmetric_grid(w_max: f64, n: usize) -> Vec<f64> {
    let h = if n == 0 { 0.0 } else { w_max / n as f64 };
    (0..=2 * n).map(|i| (i as f64 - n as f64) * h).collect()
}

/// Resolution `2π/(nΔθ)` of a transform over `n` samples spaced by `Δθ`.
pub fn frequency_bin(dtheta: f64, n_samples: usize) -> f64 {
    2.0 * PI / (n_samples as f64 * dtheta)
}

/// Multiples of [`frequency_bin`] covering `[-w_max, w_max]`.
pub fn dft_frequencies(dtheta: f64, n_samples: usize, w_max: f64) -> Vec<f64> {
    let bin = frequency_bin(dtheta, n_samples);
    symmetric_grid((w_max / bin).ceil() * bin, (w_max / bin).ceil() as usize)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub omegas: Vec<f64>,
    /// `√(2/π) Δθ Re Σ_n (variance_n - 1) e^{-iωθ_n}`, comparable to the
    /// continuous spectrum.
    pub values: Vec<f64>,
    /// The unscaled sum `Re Σ_n (variance_n - 1) e^{-iωθ_n}`.
    pub raw: Vec<f64>,
    pub analytic: Vec<f64>,
    /// Expected dip positions `(-ω̄, ω̄)`.
    pub dip_frequencies: (f64, f64),
    /// Grid minima of `values` on the negative and positive half-axes.
    pub observed_dips: (f64, f64),
    pub dtheta: f64,
    /// Set when the fringe was not sampled on the protocol grid.
    pub protocol_mismatch: bool,
}

/// Discrete transform of a fringe sampled at `θ_n = nΔθ`.
pub fn spectrum_discrete(fringe: &FringeCurve, spin: TotalSpin, beta: f64, omegas: &[f64]) -> Result<SpectrumResult> {
    let th = &fringe.thetas;
    if th.len() < 2 {
        return Err(Error::EmptyGrid("thetas"));
    }
    if omegas.is_empty() {
        return Err(Error::EmptyGrid("omegas"));
    }
    let dtheta = th[1] - th[0];
    let uniform = th[0].abs() < 1e-12 * dtheta.abs().max(1.0)
        && th
            .iter()
            .enumerate()
            .all(|(n, &t)| (t - n as f64 * dtheta).abs() <= 1e-9 * dtheta.max(t.abs()));
    if !(dtheta > 0.0 && uniform) {
        return Err(Error::param(
            "thetas",
            "fringe must be sampled at θ_n = nΔθ starting from 0",
        ));
    }
    let protocol = protocol_thetas(spin, beta)?;
    let protocol_mismatch = protocol.len() != th.len() || (protocol[1] - dtheta).abs() > 1e-12 * dtheta;

    let residual: Vec<f64> = fringe.variance.iter().map(|v| v - 1.0).collect();
    let scale = (2.0 / PI).sqrt() * dtheta;
    let raw: Vec<f64> = omegas
        .iter()
        .map(|&w| {
            let step = C64::from_polar(1.0, -w * dtheta);
            let mut phase = C64::new(1.0, 0.0);
            let mut acc = C64::new(0.0, 0.0);
            for &r in &residual {
                acc += r * phase;
                phase *= step;
            }
            acc.re
        })
        .collect();
    let values: Vec<f64> = raw.iter().map(|r| scale * r).collect();
    let analytic = spectrum_analytic(spin, beta, omegas)?;
    let argmin = |pred: &dyn Fn(f64) -> bool| {
        omegas
            .iter()
            .zip(&values)
            .filter(|(w, _)| pred(**w))
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map_or(f64::NAN, |(w, _)| *w)
    };
    let wb = dip_frequency(spin, beta).abs();
    let observed_dips = (argmin(&|w| w < -0.5 * wb), argmin(&|w| w > 0.5 * wb));
    Ok(SpectrumResult {
        omegas: omegas.to_vec(),
        values,
        raw,
        analytic,
        dip_frequencies: (-wb, wb),
        observed_dips,
        dtheta,
        protocol_mismatch,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalTime {
    /// `t = τ/(2χJ)`.
    pub seconds: f64,
    /// Cat-state time of undriven one-axis twisting, `π/χ`.
    pub oat_seconds: f64,
}

/// Converts a rescaled time to seconds using `λ = 2χJ`.
pub fn physical_time(tau: f64, chi: f64, spin: TotalSpin) -> Result<PhysicalTime> {
    if !(chi > 0.0 && chi.is_finite()) {
        return Err(Error::param("chi", format!("must be positive, got {chi}")));
    }
    if spin.twice_j() == 0 {
        return Err(Error::InvalidSpin(0.0));
    }
    Ok(PhysicalTime {
        seconds: tau / (2.0 * chi * spin.j()),
        oat_seconds: PI / chi,
    })
}
