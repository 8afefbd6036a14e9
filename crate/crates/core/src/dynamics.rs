//! Propagation under the driven one-axis-twisting generator
//! `h(τ) = Jz²/(2J) + r·Jx·cos(ω̃τ + φ)`.

use serde::{Deserialize, Serialize};

use crate::spin::{build_operators, css_state, norm2, OperatorSet, SpinState, TotalSpin};
use crate::tridiag::SymTridiag;
use crate::{Error, Result, C64};

/// Rescaled drive: frequency `ω̃ = ω/λ`, phase `φ` and strength `r = Ω/λ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    pub spin: TotalSpin,
    pub omega_tilde: f64,
    pub phi: f64,
    pub r: f64,
}

impl DriveParams {
    /// Drive with the default strength `r = 1`.
    pub fn new(spin: TotalSpin, omega_tilde: f64, phi: f64) -> Self {
        Self {
            spin,
            omega_tilde,
            phi,
            r: 1.0,
        }
    }

    pub fn with_r(mut self, r: f64) -> Result<Self> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::param("r", format!("must be finite and non-negative, got {r}")));
        }
        self.r = r;
        Ok(self)
    }

    /// Undriven one-axis twisting.
    pub fn oat(spin: TotalSpin) -> Self {
        Self {
            spin,
            omega_tilde: 0.0,
            phi: 0.0,
            r: 0.0,
        }
    }

    pub fn phase_at(&self, tau: f64) -> f64 {
        self.omega_tilde * tau + self.phi
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(Error::param(
                "r",
                format!("must be finite and non-negative, got {}", self.r),
            ));
        }
        if !self.omega_tilde.is_finite() || !self.phi.is_finite() {
            return Err(Error::param("drive", "frequency and phase must be finite"));
        }
        Ok(())
    }
}

/// `h(τ)` as a real symmetric tridiagonal matrix.
pub fn hamiltonian_at(ops: &OperatorSet, drive: &DriveParams, tau: f64) -> SymTridiag {
    let inv2j = 1.0 / ops.spin().twice_j() as f64;
    let diag = ops.jz2().iter().map(|m2| m2 * inv2j).collect();
    let c = drive.r * drive.phase_at(tau).cos();
    let off = ops.jx_offdiag().iter().map(|e| c * e).collect();
    SymTridiag::new(diag, off)
}

/// `⟨ψ|h(τ)|ψ⟩`.
pub fn energy(ops: &OperatorSet, drive: &DriveParams, tau: f64, state: &SpinState) -> f64 {
    let h = hamiltonian_at(ops, drive, tau);
    let hv = h.matvec_complex(state.amps());
    state.amps().iter().zip(&hv).map(|(a, b)| (a.conj() * b).re).sum()
}

/// How each midpoint exponential is applied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExpMethod {
    /// Chebyshev expansion of `e^{-iΔτ h}`; cost linear in the dimension.
    #[default]
    Chebyshev,
    /// Full eigendecomposition of the step generator.
    Eigen,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub dtau: f64,
    /// Bound on the final-state 2-norm error against a half-step run; `None`
    /// skips the check.
    pub tolerance: Option<f64>,
    pub record_every: f64,
    pub max_halvings: usize,
    pub method: ExpMethod,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            dtau: 1e-3,
            tolerance: Some(1e-8),
            record_every: 0.01,
            max_halvings: 6,
            method: ExpMethod::Chebyshev,
        }
    }
}

impl StepControl {
    pub fn unchecked(dtau: f64, record_every: f64) -> Self {
        Self {
            dtau,
            tolerance: None,
            record_every,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dtau > 0.0 && self.dtau.is_finite()) {
            return Err(Error::param("dtau", format!("must be positive, got {}", self.dtau)));
        }
        if !(self.record_every > 0.0 && self.record_every.is_finite()) {
            return Err(Error::param(
                "record_every",
                format!("must be positive, got {}", self.record_every),
            ));
        }
        if let Some(t) = self.tolerance {
            if t.is_nan() || t <= 0.0 {
                return Err(Error::param("tolerance", format!("must be positive, got {t}")));
            }
        }
        Ok(())
    }
}

/// Snapshots of a propagation at increasing times starting from 0.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub taus: Vec<f64>,
    pub states: Vec<SpinState>,
    /// Step size actually used after any halvings.
    pub dtau: f64,
    /// Final-state difference against the half-step run, if checked.
    pub error_estimate: Option<f64>,
}

impl Trajectory {
    pub fn last(&self) -> &SpinState {
        self.states.last().expect("trajectory always holds the initial state")
    }
}

/// Stateful midpoint-exponential integrator that can be advanced piecewise.
#[derive(Clone, Debug)]
pub struct Propagator {
    ops: OperatorSet,
    drive: DriveParams,
    method: ExpMethod,
    dtau: f64,
    generator: SymTridiag,
    amps: Vec<C64>,
    tau: f64,
}

impl Propagator {
    pub fn new(initial: &SpinState, drive: DriveParams, dtau: f64, method: ExpMethod) -> Result<Self> {
        drive.validate()?;
        if drive.spin != initial.spin() {
            return Err(Error::DimensionMismatch {
                expected: drive.spin.dim(),
                got: initial.spin().dim(),
            });
        }
        if !(dtau > 0.0 && dtau.is_finite()) {
            return Err(Error::param("dtau", format!("must be positive, got {dtau}")));
        }
        let ops = build_operators(drive.spin)?;
        let generator = hamiltonian_at(&ops, &drive, 0.0);
        Ok(Self {
            ops,
            drive,
            method,
            dtau,
            generator,
            amps: initial.amps().to_vec(),
            tau: 0.0,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn drive(&self) -> &DriveParams {
        &self.drive
    }

    pub fn operators(&self) -> &OperatorSet {
        &self.ops
    }

    pub fn state(&self) -> SpinState {
        SpinState::from_normalized(self.drive.spin, self.amps.clone())
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    fn step(&mut self, h: f64) -> Result<()> {
        let c = self.drive.r * self.drive.phase_at(self.tau + 0.5 * h).cos();
        for (o, e) in self.generator.off.iter_mut().zip(self.ops.jx_offdiag()) {
            *o = c * e;
        }
        self.amps = match self.method {
            ExpMethod::Chebyshev => self.generator.expm_apply(h, &self.amps),
            ExpMethod::Eigen => self.generator.expm_apply_eigen(h, &self.amps)?,
        };
        self.tau += h;
        Ok(())
    }

    /// Advance to `target` with equal substeps no longer than the step size.
    pub fn advance_to(&mut self, target: f64) -> Result<()> {
        let span = target - self.tau;
        if span < 0.0 {
            return Err(Error::param(
                "tau",
                format!("cannot go back from {} to {target}", self.tau),
            ));
        }
        if span == 0.0 {
            return Ok(());
        }
        let n = ((span / self.dtau) - 1e-9).ceil().max(1.0) as usize;
        let h = span / n as f64;
        let start = self.tau;
        for i in 0..n {
            self.step(h)?;
            // Avoid drift from repeated additions.
            self.tau = start + h * (i + 1) as f64;
        }
        self.tau = target;
        Ok(())
    }
}

/// Recording times `0, Δ, 2Δ, …` capped by `tau_end`, which is always included.
pub fn record_times(tau_end: f64, record_every: f64) -> Vec<f64> {
    let n = (tau_end / record_every - 1e-9).ceil().max(1.0) as usize;
    let mut taus: Vec<f64> = (0..n).map(|i| i as f64 * record_every).collect();
    taus.push(tau_end);
    taus
}

fn run(initial: &SpinState, drive: &DriveParams, taus: &[f64], dtau: f64, method: ExpMethod) -> Result<Vec<SpinState>> {
    let mut prop = Propagator::new(initial, *drive, dtau, method)?;
    let mut states = Vec::with_capacity(taus.len());
    for &t in taus {
        prop.advance_to(t)?;
        states.push(prop.state());
    }
    Ok(states)
}

/// Propagate `initial` from `τ = 0` to `tau_end` with midpoint exponentials.
///
/// With a tolerance set, the run is repeated at half the step size and the
/// step is halved until the final states agree; the finer run is returned.
pub fn propagate(initial: &SpinState, drive: &DriveParams, tau_end: f64, step: &StepControl) -> Result<Trajectory> {
    step.validate()?;
    if !(tau_end > 0.0 && tau_end.is_finite()) {
        return Err(Error::param("tau_end", format!("must be positive, got {tau_end}")));
    }
    let taus = record_times(tau_end, step.record_every);
    let mut dtau = step.dtau;
    let mut states = run(initial, drive, &taus, dtau, step.method)?;
    let Some(tol) = step.tolerance else {
        return Ok(Trajectory {
            taus,
            states,
            dtau,
            error_estimate: None,
        });
    };
    let mut halvings = 0;
    loop {
        let finer = run(initial, drive, &taus, 0.5 * dtau, step.method)?;
        let diff: Vec<C64> = finer
            .last()
            .unwrap()
            .amps()
            .iter()
            .zip(states.last().unwrap().amps())
            .map(|(a, b)| a - b)
            .collect();
        let err = norm2(&diff);
        dtau *= 0.5;
        states = finer;
        if err <= tol {
            return Ok(Trajectory {
                taus,
                states,
                dtau,
                error_estimate: Some(err),
            });
        }
        if halvings == step.max_halvings {
            return Err(Error::StepUnderflow {
                dtau,
                error: err,
                tolerance: tol,
                halvings,
            });
        }
        halvings += 1;
    }
}

/// The x-polarized coherent state `CSS(0, π/2)` every protocol starts from.
pub fn canonical_initial(spin: TotalSpin) -> SpinState {
    css_state(spin, 0.0, std::f64::consts::FRAC_PI_2).expect("β = π/2 is in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn dist(a: &SpinState, b: &SpinState) -> f64 {
        a.amps()
            .iter()
            .zip(b.amps())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn generator_examples() {
        let spin = TotalSpin::from_twice_j(100);
        let ops = build_operators(spin).unwrap();
        let drive = DriveParams::new(spin, 0.0204 * PI, 0.024 * PI);
        let h = hamiltonian_at(&ops, &drive, 0.0);
        let ratio = h.off[10] / ops.jx_offdiag()[10];
        assert!((ratio - 0.99716).abs() < 1e-5);

        let tau = (PI / 2.0 - drive.phi) / drive.omega_tilde;
        let h = hamiltonian_at(&ops, &drive, tau);
        assert!(h.off.iter().all(|e| e.abs() < 1e-12));
        assert!((h.diag[0] - 25.0).abs() < 1e-12);
    }

    #[test]
    fn undriven_phases_are_exact() {
        let spin = TotalSpin::from_twice_j(7);
        let init = canonical_initial(spin);
        let tau = 3.3;
        let traj = propagate(&init, &DriveParams::oat(spin), tau, &StepControl::default()).unwrap();
        for (k, (a, b)) in traj.last().amps().iter().zip(init.amps()).enumerate() {
            let m = spin.m(k);
            let expect = b * C64::from_polar(1.0, -tau * m * m / 7.0);
            assert!((a - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn canonical_initial_examples() {
        let s = canonical_initial(TotalSpin::from_twice_j(2));
        let r = [0.5, 0.5f64.sqrt(), 0.5];
        for (a, b) in s.amps().iter().zip(r) {
            assert!((a.re - b).abs() < 1e-14 && a.im.abs() < 1e-14);
        }
        for tj in [1, 4, 9, 30] {
            let s = canonical_initial(TotalSpin::from_twice_j(tj));
            assert!((s.expect_jx() - tj as f64 / 2.0).abs() < 1e-10);
            assert!(s.parity_residual() < 1e-14);
        }
    }

    #[test]
    fn record_grid_is_exact() {
        let t = record_times(0.05, 0.01);
        assert_eq!(t.len(), 6);
        assert_eq!(t[5], 0.05);
        let t = record_times(0.055, 0.01);
        assert_eq!(t.len(), 7);
    }

    #[test]
    fn chebyshev_and_eigen_routes_agree() {
        let spin = TotalSpin::from_twice_j(20);
        let init = canonical_initial(spin);
        let drive = DriveParams::new(spin, 0.03 * PI, 0.01 * PI);
        let a = propagate(&init, &drive, 2.0, &StepControl::unchecked(0.01, 0.5)).unwrap();
        let mut ctl = StepControl::unchecked(0.01, 0.5);
        ctl.method = ExpMethod::Eigen;
        let b = propagate(&init, &drive, 2.0, &ctl).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            assert!(dist(x, y) < 1e-11);
        }
    }

    #[test]
    fn second_order_convergence() {
        let spin = TotalSpin::from_twice_j(20);
        let init = canonical_initial(spin);
        let drive = DriveParams::new(spin, 0.05 * PI, 0.02 * PI);
        let reference = propagate(&init, &drive, 3.0, &StepControl::unchecked(1e-4, 3.0)).unwrap();
        let errs: Vec<f64> = [0.04, 0.02, 0.01]
            .iter()
            .map(|&dt| {
                let t = propagate(&init, &drive, 3.0, &StepControl::unchecked(dt, 3.0)).unwrap();
                dist(t.last(), reference.last())
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..4.5).contains(&ratio), "ratio {ratio}, errors {errs:?}");
        }
    }

    #[test]
    fn tolerance_is_enforced() {
        let spin = TotalSpin::from_twice_j(20);
        let init = canonical_initial(spin);
        let drive = DriveParams::new(spin, 0.05 * PI, 0.0);
        let mut ctl = StepControl {
            dtau: 0.05,
            record_every: 1.0,
            tolerance: Some(1e-6),
            ..StepControl::default()
        };
        let t = propagate(&init, &drive, 2.0, &ctl).unwrap();
        assert!(t.error_estimate.unwrap() <= 1e-6);
        assert!(t.dtau < 0.05);

        ctl.tolerance = Some(1e-30);
        ctl.max_halvings = 2;
        match propagate(&init, &drive, 2.0, &ctl) {
            Err(Error::StepUnderflow { halvings, .. }) => assert_eq!(halvings, 2),
            other => panic!("expected underflow, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let spin = TotalSpin::from_twice_j(4);
        let init = canonical_initial(spin);
        let drive = DriveParams::oat(spin);
        assert!(propagate(&init, &drive, 0.0, &StepControl::default()).is_err());
        assert!(DriveParams::new(spin, 0.1, 0.0).with_r(-1.0).is_err());
        let other = DriveParams::oat(TotalSpin::from_twice_j(5));
        assert!(matches!(
            propagate(&init, &other, 1.0, &StepControl::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
