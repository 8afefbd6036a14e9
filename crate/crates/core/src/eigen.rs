//! Instantaneous eigenstructure of the rescaled Hamiltonian: top eigenpairs,
//! gap traces, initial populations, eigenvector phase profiles and the
//! mean-field energy surface.
//!
//! `h(τ)` commutes with the parity `X̂` (index reversal in the Dicke basis),
//! so it is folded into even and odd blocks that are diagonalized
//! separately. Every returned eigenvector therefore has a definite parity,
//! also inside exactly or numerically degenerate doublets.

use std::f64::consts::FRAC_1_SQRT_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{canonical_initial, hamiltonian_at, DriveParams};
use crate::spin::{build_operators, parity_stats, relative_phase_profile, OperatorSet, PhaseEntry, SpinState};
use crate::tridiag::SymTridiag;
use crate::{Error, Result, C64};

/// Gap below which the two top levels count as degenerate.
pub const GAP_CLOSURE: f64 = 1e-6;

/// Eigenvalue separation below which two levels form a degenerate cluster.
pub const DEGENERACY: f64 = 1e-10;

/// Amplitude magnitude below which `γ′_M` is reported as undefined.
pub const PHASE_AMPLITUDE_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ParityCharacter {
    Even,
    Odd,
    Undefined,
}

impl ParityCharacter {
    /// Classifies a parity expectation value.
    pub fn from_expectation(x: f64) -> Self {
        if x.abs() > 1.0 - 1e-6 {
            if x > 0.0 {
                ParityCharacter::Even
            } else {
                ParityCharacter::Odd
            }
        } else {
            ParityCharacter::Undefined
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: SpinState,
    pub parity: ParityCharacter,
}

/// The even and odd blocks of a parity-symmetric tridiagonal matrix.
struct ParityBlocks {
    even: SymTridiag,
    odd: Option<SymTridiag>,
    dim: usize,
}

fn fold(h: &SymTridiag) -> ParityBlocks {
    let dim = h.dim();
    let (d, e) = (&h.diag, &h.off);
    if dim % 2 == 1 {
        let c = dim / 2;
        let mut off_even = e[..c].to_vec();
        if let Some(last) = off_even.last_mut() {
            *last *= std::f64::consts::SQRT_2;
        }
        let odd = (c > 0).then(|| SymTridiag::new(d[..c].to_vec(), e[..c - 1].to_vec()));
        ParityBlocks {
            even: SymTridiag::new(d[..=c].to_vec(), off_even),
            odd,
            dim,
        }
    } else {
        let n = dim / 2;
        let mut de = d[..n].to_vec();
        let mut dodd = de.clone();
        de[n - 1] += e[n - 1];
        dodd[n - 1] -= e[n - 1];
        let off = e[..n - 1].to_vec();
        ParityBlocks {
            even: SymTridiag::new(de, off.clone()),
            odd: Some(SymTridiag::new(dodd, off)),
            dim,
        }
    }
}

/// Maps a block eigenvector back to the full Dicke basis.
fn unfold(x: &[f64], dim: usize, even: bool) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    let sign = if even { 1.0 } else { -1.0 };
    let pairs = dim / 2;
    for k in 0..pairs.min(x.len()) {
        v[k] = x[k] * FRAC_1_SQRT_2;
        v[dim - 1 - k] = sign * x[k] * FRAC_1_SQRT_2;
    }
    if dim % 2 == 1 && even {
        v[pairs] = x[pairs];
    }
    v
}

/// Makes the first largest-magnitude component positive.
fn fix_sign(v: &mut [f64]) {
    let m = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if let Some(i) = v.iter().position(|x| x.abs() >= m * (1.0 - 1e-9)) {
        if v[i] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// The `k` largest eigenpairs of `h(τ)` in descending order of eigenvalue.
pub fn top_eigenpairs(ops: &OperatorSet, drive: &DriveParams, tau: f64, k: usize) -> Result<Vec<EigenPair>> {
    drive.validate()?;
    if ops.spin() != drive.spin {
        return Err(Error::DimensionMismatch {
            expected: drive.spin.dim(),
            got: ops.spin().dim(),
        });
    }
    let blocks = fold(&hamiltonian_at(ops, drive, tau));
    let mut cands: Vec<(f64, bool, &SymTridiag)> = Vec::new();
    for (block, even) in [(Some(&blocks.even), true), (blocks.odd.as_ref(), false)] {
        let Some(b) = block else { continue };
        for i in 0..k.min(b.dim()) {
            cands.push((b.kth_largest_eigenvalue(i), even, b));
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0));
    // Within a degenerate doublet the even level is listed first.
    for i in 1..cands.len() {
        if !cands[i - 1].1 && cands[i].1 && cands[i - 1].0 - cands[i].0 < DEGENERACY {
            cands.swap(i - 1, i);
        }
    }
    cands.truncate(k);
    let spin = drive.spin;
    cands
        .into_iter()
        .map(|(value, even, block)| {
            let mut v = unfold(&block.eigenvector(value), blocks.dim, even);
            fix_sign(&mut v);
            let vector = SpinState::from_amplitudes(spin, v.into_iter().map(|x| C64::new(x, 0.0)).collect())?;
            let parity = ParityCharacter::from_expectation(parity_stats(&vector).expectation);
            Ok(EigenPair { value, vector, parity })
        })
        .collect()
}

/// `‖h v - ε v‖` for an eigenpair of `h(τ)`.
pub fn eigen_residual(ops: &OperatorSet, drive: &DriveParams, tau: f64, pair: &EigenPair) -> f64 {
    let hv = hamiltonian_at(ops, drive, tau).matvec_complex(pair.vector.amps());
    hv.iter()
        .zip(pair.vector.amps())
        .map(|(a, b)| (a - pair.value * b).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

fn check_grid(taus: &[f64]) -> Result<()> {
    if taus.is_empty() {
        return Err(Error::EmptyGrid("taus"));
    }
    if taus.iter().any(|t| !t.is_finite()) || taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("taus", "grid must be finite and strictly increasing"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapTrace {
    pub taus: Vec<f64>,
    /// `ε₁ - ε₂` per sample.
    pub gaps: Vec<f64>,
    /// Drive phase `ω̃τ + φ` per sample.
    pub phases: Vec<f64>,
    /// First sample with a gap below [`GAP_CLOSURE`].
    pub closure_index: Option<usize>,
}

impl GapTrace {
    pub fn closure_tau(&self) -> Option<f64> {
        self.closure_index.map(|i| self.taus[i])
    }
}

pub fn gap_trace(drive: &DriveParams, taus: &[f64]) -> Result<GapTrace> {
    check_grid(taus)?;
    drive.validate()?;
    let ops = build_operators(drive.spin)?;
    let gaps = taus
        .par_iter()
        .map(|&t| {
            let blocks = fold(&hamiltonian_at(&ops, drive, t));
            let mut top = Vec::with_capacity(4);
            for b in std::iter::once(&blocks.even).chain(&blocks.odd) {
                top.extend((0..b.dim().min(2)).map(|i| b.kth_largest_eigenvalue(i)));
            }
            top.sort_by(|a, b| b.total_cmp(a));
            if top.len() < 2 {
                0.0
            } else {
                (top[0] - top[1]).max(0.0)
            }
        })
        .collect::<Vec<f64>>();
    let closure_index = gaps.iter().position(|g| *g < GAP_CLOSURE);
    Ok(GapTrace {
        taus: taus.to_vec(),
        gaps,
        phases: taus.iter().map(|&t| drive.phase_at(t)).collect(),
        closure_index,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Populations {
    pub p1: f64,
    pub p2: f64,
    pub p_rest: f64,
}

/// Overlap of the canonical initial state with the two top eigenstates of
/// `h(0)`.
pub fn initial_populations(drive: &DriveParams) -> Result<Populations> {
    let ops = build_operators(drive.spin)?;
    let pairs = top_eigenpairs(&ops, drive, 0.0, 2)?;
    let psi = canonical_initial(drive.spin);
    let p = |i: usize| pairs.get(i).map_or(0.0, |e| e.vector.overlap_probability(&psi));
    let (p1, p2) = (p(0), p(1));
    Ok(Populations {
        p1,
        p2,
        p_rest: 1.0 - p1 - p2,
    })
}

/// `γ′_M` profiles of the two top eigenvectors at one time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseProfileSample {
    pub tau: f64,
    pub gap: f64,
    /// Set when the gap is closed; all entries are then undefined.
    pub gap_closed: bool,
    pub first: Vec<PhaseEntry>,
    pub second: Vec<PhaseEntry>,
}

pub fn eigen_phase_profiles(drive: &DriveParams, taus: &[f64]) -> Result<Vec<PhaseProfileSample>> {
    check_grid(taus)?;
    let ops = build_operators(drive.spin)?;
    taus.par_iter()
        .map(|&tau| {
            let pairs = top_eigenpairs(&ops, drive, tau, 2)?;
            let gap = match pairs.as_slice() {
                [a, b, ..] => (a.value - b.value).max(0.0),
                _ => 0.0,
            };
            let gap_closed = gap < GAP_CLOSURE;
            let profile = |i: usize| -> Vec<PhaseEntry> {
                let Some(p) = pairs.get(i) else { return Vec::new() };
                let mut prof = relative_phase_profile(&p.vector, PHASE_AMPLITUDE_FLOOR);
                if gap_closed {
                    prof.iter_mut().for_each(|e| e.gamma_prime = None);
                }
                prof
            };
            Ok(PhaseProfileSample {
                tau,
                gap,
                gap_closed,
                first: profile(0),
                second: profile(1),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldEnergy {
    /// `J(cos²β/2 + r cosα sinβ cos(ω̃τ + φ))`.
    pub energy: f64,
    /// The level `rJ cos(ω̃τ + φ)` through the unstable point `(0, π/2)`.
    pub separatrix: f64,
}

pub fn meanfield_energy(drive: &DriveParams, alpha: f64, beta: f64, tau: f64) -> Result<MeanFieldEnergy> {
    if !(alpha.is_finite() && beta.is_finite()) {
        return Err(Error::param("angles", "must be finite"));
    }
    if !(0.0..=std::f64::consts::PI).contains(&beta) {
        return Err(Error::param("beta", format!("must lie in [0, π], got {beta}")));
    }
    let j = drive.spin.j();
    let c = drive.r * drive.phase_at(tau).cos();
    Ok(MeanFieldEnergy {
        energy: j * (0.5 * beta.cos().powi(2) + c * alpha.cos() * beta.sin()),
        separatrix: j * c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::TotalSpin;
    use std::f64::consts::PI;

    fn drive(j2: u32, w: f64, p: f64) -> DriveParams {
        DriveParams::new(TotalSpin::from_twice_j(j2), w, p)
    }

    fn dense_top(h: &SymTridiag, k: usize) -> Vec<f64> {
        let mut v = h.eigen_decompose().unwrap().values;
        v.reverse();
        v.truncate(k);
        v
    }

    #[test]
    fn folded_blocks_reproduce_full_spectrum() {
        for j2 in 1..=12 {
            let d = drive(j2, 0.03 * PI, 0.2);
            let ops = build_operators(d.spin).unwrap();
            let h = hamiltonian_at(&ops, &d, 1.3);
            let b = fold(&h);
            let mut all = b.even.eigen_decompose().unwrap().values;
            if let Some(o) = &b.odd {
                all.extend(o.eigen_decompose().unwrap().values);
            }
            all.sort_by(f64::total_cmp);
            let full = h.eigen_decompose().unwrap().values;
            assert_eq!(all.len(), full.len());
            for (a, f) in all.iter().zip(&full) {
                assert!((a - f).abs() < 1e-12, "2J={j2}: {a} vs {f}");
            }
        }
    }

    #[test]
    fn top_pairs_have_small_residual_and_definite_parity() {
        for j2 in [3, 4, 20, 149, 400] {
            let d = drive(j2, 0.0174 * PI, 0.012 * PI);
            let ops = build_operators(d.spin).unwrap();
            for tau in [0.0, 5.0, 12.0] {
                let pairs = top_eigenpairs(&ops, &d, tau, 4).unwrap();
                let want = dense_top(&hamiltonian_at(&ops, &d, tau), 4);
                for (p, w) in pairs.iter().zip(&want) {
                    assert!((p.value - w).abs() < 1e-10 * w.abs().max(1.0));
                    assert!(eigen_residual(&ops, &d, tau, p) < 1e-9);
                    assert_ne!(p.parity, ParityCharacter::Undefined);
                }
                assert!(pairs.windows(2).all(|w| w[0].value >= w[1].value));
            }
        }
    }

    #[test]
    fn initial_top_pair_is_even_then_odd() {
        let d = drive(100, 0.0204 * PI, 0.024 * PI);
        let ops = build_operators(d.spin).unwrap();
        let pairs = top_eigenpairs(&ops, &d, 0.0, 2).unwrap();
        assert_eq!(pairs[0].parity, ParityCharacter::Even);
        assert_eq!(pairs[1].parity, ParityCharacter::Odd);
    }

    #[test]
    fn undriven_top_doublet() {
        let d = drive(10, 0.0, 0.0).with_r(0.0).unwrap();
        let ops = build_operators(d.spin).unwrap();
        let pairs = top_eigenpairs(&ops, &d, 0.0, 2).unwrap();
        for p in &pairs {
            assert!((p.value - 2.5).abs() < 1e-12);
            let a = p.vector.amps();
            assert!((a[0].norm_sqr() + a[10].norm_sqr() - 1.0).abs() < 1e-12);
        }
        assert_eq!(pairs[0].parity, ParityCharacter::Even);
        assert_eq!(pairs[1].parity, ParityCharacter::Odd);
        assert!(pairs[0].vector.amps()[0].re > 0.0);
        let g = gap_trace(&d, &[0.0, 1.0]).unwrap();
        assert!(g.gaps.iter().all(|x| *x < 1e-12));
        assert_eq!(g.closure_index, Some(0));
    }

    #[test]
    fn populations_sum_to_one_and_skip_odd_level() {
        let p = initial_populations(&drive(149, 0.0174 * PI, 0.012 * PI)).unwrap();
        assert!(p.p2.abs() < 1e-10);
        assert!((p.p1 + p.p2 + p.p_rest - 1.0).abs() < 1e-12);
        assert!(p.p1 > 0.4 && p.p1 < 1.0);
    }

    #[test]
    fn phase_profiles_before_closure() {
        let d = drive(40, 0.02 * PI, 0.0);
        let prof = eigen_phase_profiles(&d, &[0.0, 0.5]).unwrap();
        for s in &prof {
            assert!(!s.gap_closed);
            for e in s.first.iter().filter_map(|e| e.gamma_prime) {
                assert_eq!(e, 0.0);
            }
            for e in s.second.iter().filter_map(|e| e.gamma_prime) {
                assert!((e.abs() - PI).abs() < 1e-12);
            }
        }
        assert!(eigen_phase_profiles(&d, &[1.0, 0.5]).is_err());
    }

    #[test]
    fn meanfield_examples() {
        let d = drive(20, 0.1, 0.3);
        let e = meanfield_energy(&d, 0.0, PI / 2.0, 2.0).unwrap();
        assert!((e.energy - e.separatrix).abs() < 1e-14);
        assert!((e.separatrix - 10.0 * (0.1 * 2.0 + 0.3f64).cos()).abs() < 1e-12);
        let d0 = d.with_r(0.0).unwrap();
        assert!((meanfield_energy(&d0, 1.0, 0.0, 0.0).unwrap().energy - 5.0).abs() < 1e-14);
        assert!(meanfield_energy(&d, 0.0, 4.0, 0.0).is_err());
    }

    #[test]
    fn sign_convention() {
        let mut v = vec![0.1, -0.7, 0.7, 0.1];
        fix_sign(&mut v);
        assert_eq!(v, vec![-0.1, 0.7, -0.7, -0.1]);
    }
}
