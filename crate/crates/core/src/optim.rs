//! Derivative-free minimization: Nelder-Mead simplex and basin hopping.

use std::cell::Cell;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Stopping rules for a single simplex descent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexOptions {
    /// Stop once the simplex spread in objective value is below this.
    pub ftol: f64,
    /// ...and the largest vertex distance from the best vertex is below this.
    pub xtol: f64,
    pub max_evals: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            ftol: 1e-14,
            xtol: 1e-9,
            max_evals: 3000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Minimum<const D: usize> {
    pub x: [f64; D],
    pub f: f64,
    pub evals: usize,
}

/// Nelder-Mead descent from `x0` with initial edge lengths `steps`.
///
/// Every trial point passes through `project` before evaluation, so
/// bounded or periodic coordinates can be handled by reflection or wrapping.
/// The returned point is projected.
pub fn nelder_mead<const D: usize>(
    mut f: impl FnMut(&[f64; D]) -> f64,
    x0: [f64; D],
    steps: [f64; D],
    project: impl Fn([f64; D]) -> [f64; D],
    opts: &SimplexOptions,
) -> Minimum<D> {
    let evals = Cell::new(0);
    // Vertices live in unprojected coordinates so wrapping a periodic
    // coordinate does not tear the simplex apart.
    let mut eval = |x: [f64; D]| -> ([f64; D], f64) {
        evals.set(evals.get() + 1);
        (x, f(&project(x)))
    };
    let mut simplex: Vec<([f64; D], f64)> = Vec::with_capacity(D + 1);
    simplex.push(eval(x0));
    for i in 0..D {
        let mut x = simplex[0].0;
        x[i] += steps[i];
        simplex.push(eval(x));
    }

    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0];
        let worst = simplex[D];
        let spread = worst.1 - best.1;
        let size = simplex[1..]
            .iter()
            .map(|(x, _)| (0..D).map(|i| (x[i] - best.0[i]).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if (spread <= opts.ftol && size <= opts.xtol) || evals.get() >= opts.max_evals {
            break;
        }

        let mut centroid = [0.0; D];
        for (x, _) in &simplex[..D] {
            for i in 0..D {
                centroid[i] += x[i] / D as f64;
            }
        }
        let along = |t: f64| -> [f64; D] {
            let mut y = [0.0; D];
            for i in 0..D {
                y[i] = centroid[i] + t * (worst.0[i] - centroid[i]);
            }
            y
        };

        let reflected = eval(along(-1.0));
        if reflected.1 < best.1 {
            let expanded = eval(along(-2.0));
            simplex[D] = if expanded.1 < reflected.1 { expanded } else { reflected };
            continue;
        }
        if reflected.1 < simplex[D - 1].1 {
            simplex[D] = reflected;
            continue;
        }
        let contracted = if reflected.1 < worst.1 {
            eval(along(-0.5))
        } else {
            eval(along(0.5))
        };
        if contracted.1 < worst.1.min(reflected.1) {
            simplex[D] = contracted;
            continue;
        }
        // Shrink toward the best vertex.
        for v in simplex.iter_mut().skip(1) {
            let y = std::array::from_fn(|i| best.0[i] + 0.5 * (v.0[i] - best.0[i]));
            *v = eval(y);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    Minimum {
        x: project(simplex[0].0),
        f: simplex[0].1,
        evals: evals.get(),
    }
}

/// Global search by repeated perturbation and local descent with Metropolis
/// acceptance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HopSettings<const D: usize> {
    pub hops: usize,
    pub step_scales: [f64; D],
    pub temperature: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HopOutcome<const D: usize> {
    pub best: Minimum<D>,
    /// Improvement of the best value achieved by the final hop (0 if none).
    pub final_improvement: f64,
    pub total_evals: usize,
}

/// Basin hopping started from the best of the local descents from `starts`.
pub fn basin_hop<const D: usize>(
    mut f: impl FnMut(&[f64; D]) -> f64,
    starts: &[[f64; D]],
    local_steps: [f64; D],
    project: impl Fn([f64; D]) -> [f64; D] + Copy,
    local: &SimplexOptions,
    settings: &HopSettings<D>,
) -> HopOutcome<D> {
    assert!(!starts.is_empty(), "basin hopping needs at least one start");
    let mut total = 0;
    let mut best: Option<Minimum<D>> = None;
    for &s in starts {
        let m = nelder_mead(&mut f, s, local_steps, project, local);
        total += m.evals;
        if best.is_none_or(|b| m.f < b.f) {
            best = Some(m);
        }
    }
    let mut best = best.unwrap();
    let mut current = best;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut final_improvement = 0.0;
    for hop in 0..settings.hops {
        let mut x = current.x;
        for (xi, scale) in x.iter_mut().zip(settings.step_scales) {
            *xi += scale * rng.random_range(-1.0..1.0);
        }
        let m = nelder_mead(&mut f, project(x), local_steps, project, local);
        total += m.evals;
        let accept = m.f < current.f
            || (settings.temperature > 0.0 && rng.random::<f64>() < (-(m.f - current.f) / settings.temperature).exp());
        if accept {
            current = m;
        }
        let improvement = best.f - m.f;
        if improvement > 0.0 {
            best = m;
        }
        if hop + 1 == settings.hops {
            final_improvement = improvement.max(0.0);
        }
    }
    HopOutcome {
        best,
        final_improvement,
        total_evals: total,
    }
}
