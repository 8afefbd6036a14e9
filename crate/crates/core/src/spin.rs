//! Dicke-basis representation of the symmetric `N`-spin subspace.
//!
//! Index `k = 0..=2J` stores the amplitude of `|J, M = J - k⟩`, i.e. `k`
//! counts down-spins. The same ordering is used by every module.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::function::gamma::ln_gamma;

use crate::{Error, Result, C64};

/// Total spin `J = N/2`, stored as the integer `2J`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TotalSpin {
    twice_j: u32,
}

impl TotalSpin {
    pub fn from_twice_j(twice_j: u32) -> Self {
        Self { twice_j }
    }

    /// Spin of an ensemble of `n` spin-1/2 particles.
    pub fn from_spin_count(n: u32) -> Self {
        Self { twice_j: n }
    }

    /// Rejects values that are negative, non-finite or not a multiple of 1/2.
    pub fn new(j: f64) -> Result<Self> {
        let twice = 2.0 * j;
        if !j.is_finite() || j < 0.0 || twice.fract() != 0.0 || twice > u32::MAX as f64 {
            return Err(Error::InvalidSpin(j));
        }
        Ok(Self { twice_j: twice as u32 })
    }

    pub fn j(&self) -> f64 {
        self.twice_j as f64 / 2.0
    }

    pub fn twice_j(&self) -> u32 {
        self.twice_j
    }

    /// Number of spins `N = 2J`.
    pub fn spin_count(&self) -> u32 {
        self.twice_j
    }

    pub fn dim(&self) -> usize {
        self.twice_j as usize + 1
    }

    pub fn is_integer(&self) -> bool {
        self.twice_j.is_multiple_of(2)
    }

    /// Magnetic quantum number stored at basis index `k`.
    pub fn m(&self, k: usize) -> f64 {
        self.j() - k as f64
    }

    /// Basis index of the parity partner `|J, -M⟩` of index `k`.
    pub fn flip_index(&self, k: usize) -> usize {
        self.twice_j as usize - k
    }

    /// `"N/2"` encoding used in JSON state files.
    pub fn as_fraction(&self) -> String {
        format!("{}/2", self.twice_j)
    }

    pub fn parse_fraction(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(num) = s.strip_suffix("/2") {
            let twice: u32 = num
                .trim()
                .parse()
                .map_err(|_| Error::param("J", format!("cannot parse `{s}`")))?;
            Ok(Self::from_twice_j(twice))
        } else {
            let j: f64 = s
                .parse()
                .map_err(|_| Error::param("J", format!("cannot parse `{s}`")))?;
            Self::new(j)
        }
    }
}

impl fmt::Display for TotalSpin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.twice_j / 2)
        } else {
            write!(f, "{}.5", self.twice_j / 2)
        }
    }
}

impl Serialize for TotalSpin {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.as_fraction())
    }
}

impl<'de> Deserialize<'de> for TotalSpin {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let s = String::deserialize(deserializer)?;
        TotalSpin::parse_fraction(&s).map_err(D::Error::custom)
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    if y <= -PI {
        y += 2.0 * PI;
    }
    y
}

/// Normalized pure state over the Dicke basis.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinState {
    spin: TotalSpin,
    amps: Vec<C64>,
}

impl SpinState {
    /// Builds a state from raw amplitudes, normalizing them.
    pub fn from_amplitudes(spin: TotalSpin, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != spin.dim() {
            return Err(Error::DimensionMismatch {
                expected: spin.dim(),
                got: amps.len(),
            });
        }
        let norm = norm2(&amps);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::param("amps", "state has zero or non-finite norm"));
        }
        let amps = amps.into_iter().map(|a| a / norm).collect();
        Ok(Self { spin, amps })
    }

    /// Wraps amplitudes that are already normalized.
    pub(crate) fn from_normalized(spin: TotalSpin, amps: Vec<C64>) -> Self {
        debug_assert_eq!(amps.len(), spin.dim());
        Self { spin, amps }
    }

    /// The Dicke state `|J, J - k⟩`.
    pub fn basis(spin: TotalSpin, k: usize) -> Result<Self> {
        if k >= spin.dim() {
            return Err(Error::param("k", format!("index {k} out of range")));
        }
        let mut amps = vec![C64::new(0.0, 0.0); spin.dim()];
        amps[k] = C64::new(1.0, 0.0);
        Ok(Self { spin, amps })
    }

    pub fn spin(&self) -> TotalSpin {
        self.spin
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amps(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.amps)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &SpinState) -> C64 {
        inner(&self.amps, &other.amps)
    }

    /// `|⟨self|other⟩|²`.
    pub fn overlap_probability(&self, other: &SpinState) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// The state with the parity `σx^{⊗N}` applied (`M -> -M`).
    pub fn flipped(&self) -> SpinState {
        let amps = self.amps.iter().rev().copied().collect();
        SpinState { spin: self.spin, amps }
    }

    /// `‖X̂ψ - ψ‖`; zero for parity-even states.
    pub fn parity_residual(&self) -> f64 {
        let n = self.amps.len();
        (0..n)
            .map(|k| (self.amps[n - 1 - k] - self.amps[k]).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn expect_jz(&self) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .map(|(k, a)| self.spin.m(k) * a.norm_sqr())
            .sum()
    }

    pub fn expect_jx(&self) -> f64 {
        let j = self.spin.j();
        let mut acc = 0.0;
        for k in 0..self.amps.len().saturating_sub(1) {
            let m = self.spin.m(k);
            let el = 0.5 * ((j + m) * (j - m + 1.0)).sqrt();
            acc += 2.0 * el * (self.amps[k].conj() * self.amps[k + 1]).re;
        }
        acc
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("state serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::param("state", e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
struct StateRecord {
    #[serde(rename = "J")]
    j: String,
    amps: Vec<[f64; 2]>,
}

impl Serialize for SpinState {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        StateRecord {
            j: self.spin.as_fraction(),
            amps: self.amps.iter().map(|a| [a.re, a.im]).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SpinState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let rec = StateRecord::deserialize(deserializer)?;
        let spin = TotalSpin::parse_fraction(&rec.j).map_err(D::Error::custom)?;
        let amps = rec.amps.iter().map(|[re, im]| C64::new(*re, *im)).collect();
        SpinState::from_amplitudes(spin, amps).map_err(D::Error::custom)
    }
}

pub(crate) fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// `Σ conj(a_k) b_k`.
pub(crate) fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Angular-momentum matrices of spin `J` in the Dicke basis.
///
/// `jz` and `jz2` are diagonal, `jx` is symmetric tridiagonal and the parity
/// `X̂ = σx^{⊗N}` is the index reversal `k -> 2J - k`.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorSet {
    spin: TotalSpin,
    jz: Vec<f64>,
    jz2: Vec<f64>,
    jx_off: Vec<f64>,
}

/// Builds `Jz`, `Jz²`, `Jx` and the parity for spin `J` (requires `2J ≥ 1`).
pub fn build_operators(spin: TotalSpin) -> Result<OperatorSet> {
    if spin.twice_j() < 1 {
        return Err(Error::InvalidSpin(spin.j()));
    }
    let j = spin.j();
    let jz: Vec<f64> = (0..spin.dim()).map(|k| spin.m(k)).collect();
    let jz2 = jz.iter().map(|m| m * m).collect();
    // ⟨J, M-1|Jx|J, M⟩ = ½√((J+M)(J-M+1))
    let jx_off = (0..spin.dim() - 1)
        .map(|k| {
            let m = spin.m(k);
            0.5 * ((j + m) * (j - m + 1.0)).sqrt()
        })
        .collect();
    Ok(OperatorSet { spin, jz, jz2, jx_off })
}

impl OperatorSet {
    pub fn spin(&self) -> TotalSpin {
        self.spin
    }

    pub fn jz(&self) -> &[f64] {
        &self.jz
    }

    pub fn jz2(&self) -> &[f64] {
        &self.jz2
    }

    /// Off-diagonal of `Jx`; entry `k` couples indices `k` and `k + 1`.
    pub fn jx_offdiag(&self) -> &[f64] {
        &self.jx_off
    }

    pub fn apply_jx(&self, v: &[C64]) -> Vec<C64> {
        let n = v.len();
        let mut out = vec![C64::new(0.0, 0.0); n];
        for k in 0..n.saturating_sub(1) {
            out[k] += self.jx_off[k] * v[k + 1];
            out[k + 1] += self.jx_off[k] * v[k];
        }
        out
    }

    pub fn apply_parity(&self, v: &[C64]) -> Vec<C64> {
        v.iter().rev().copied().collect()
    }

    pub fn dense_jz(&self) -> Vec<Vec<f64>> {
        dense_diag(&self.jz)
    }

    pub fn dense_jz2(&self) -> Vec<Vec<f64>> {
        dense_diag(&self.jz2)
    }

    pub fn dense_jx(&self) -> Vec<Vec<f64>> {
        let n = self.spin.dim();
        let mut m = vec![vec![0.0; n]; n];
        for (k, &e) in self.jx_off.iter().enumerate() {
            m[k][k + 1] = e;
            m[k + 1][k] = e;
        }
        m
    }

    pub fn dense_parity(&self) -> Vec<Vec<f64>> {
        let n = self.spin.dim();
        let mut m = vec![vec![0.0; n]; n];
        for (k, row) in m.iter_mut().enumerate() {
            row[n - 1 - k] = 1.0;
        }
        m
    }
}

fn dense_diag(d: &[f64]) -> Vec<Vec<f64>> {
    let n = d.len();
    let mut m = vec![vec![0.0; n]; n];
    for k in 0..n {
        m[k][k] = d[k];
    }
    m
}

/// One member `(α, β, γ′)` of the cat-state family.
///
/// `gamma_prime` is the relative phase between `|J, M⟩` and `|J, -M⟩`; the
/// superposition phase is `γ = γ′ + 2Jα`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma_prime: f64,
}

/// Distance below which `(α, β)` counts as one of the excluded points.
const DEGENERATE_EPS: f64 = 1e-12;

impl CatParams {
    /// Validates ranges and wraps `α`, `γ′` into `(-π, π]`.
    pub fn new(alpha: f64, beta: f64, gamma_prime: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite() && gamma_prime.is_finite()) {
            return Err(Error::param("cat params", "angles must be finite"));
        }
        if !(0.0..=PI).contains(&beta) {
            return Err(Error::param("beta", format!("{beta} outside [0, π]")));
        }
        let p = Self {
            alpha: wrap_angle(alpha),
            beta,
            gamma_prime: wrap_angle(gamma_prime),
        };
        if p.is_degenerate() {
            return Err(Error::DegenerateCat {
                alpha: p.alpha,
                beta: p.beta,
            });
        }
        Ok(p)
    }

    /// Builds parameters from the superposition phase `γ` (`γ′ = γ - 2Jα`).
    pub fn from_gamma(spin: TotalSpin, alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        Self::new(alpha, beta, gamma - spin.twice_j() as f64 * alpha)
    }

    pub fn gamma(&self, spin: TotalSpin) -> f64 {
        wrap_angle(self.gamma_prime + spin.twice_j() as f64 * self.alpha)
    }

    pub fn is_degenerate(&self) -> bool {
        let a = wrap_angle(self.alpha);
        (self.beta - PI / 2.0).abs() < DEGENERATE_EPS
            && (a.abs() < DEGENERATE_EPS || (a.abs() - PI).abs() < DEGENERATE_EPS)
    }

    /// The equivalent labelling `(-α, π - β, -γ′)` that swaps the two branches.
    pub fn relabeled(&self) -> Self {
        Self {
            alpha: wrap_angle(-self.alpha),
            beta: PI - self.beta,
            gamma_prime: wrap_angle(-self.gamma_prime),
        }
    }

    pub fn displacement_angle(&self) -> f64 {
        displacement_angle(self.alpha, self.beta)
    }
}

/// `½ ln C(2J, n)` for `n = 0..=2J`.
pub(crate) fn half_ln_binomial(spin: TotalSpin) -> Vec<f64> {
    let n_tot = spin.twice_j() as f64;
    let ln_n = ln_gamma(n_tot + 1.0);
    (0..spin.dim())
        .map(|n| {
            let n = n as f64;
            0.5 * (ln_n - ln_gamma(n + 1.0) - ln_gamma(n_tot - n + 1.0))
        })
        .collect()
}

/// `count · ln x`, with `0 · ln 0 = 0`.
#[inline]
pub(crate) fn count_ln(count: f64, ln_x: f64) -> f64 {
    if count == 0.0 {
        0.0
    } else {
        count * ln_x
    }
}

/// Writes CSS amplitudes `√C(2J,n) cos^{2J-n}(β/2) sin^n(β/2) e^{inα}` into `out`.
///
/// Magnitudes are assembled in log space so `2J` in the thousands stays finite.
/// Requires `β ∈ [0, π]` so both half-angle factors are non-negative.
pub(crate) fn css_amplitudes_into(half_ln_c: &[f64], alpha: f64, beta: f64, out: &mut [C64]) {
    let n_tot = (half_ln_c.len() - 1) as f64;
    let ln_c = (0.5 * beta).cos().abs().ln();
    let ln_s = (0.5 * beta).sin().abs().ln();
    for (n, (slot, hl)) in out.iter_mut().zip(half_ln_c).enumerate() {
        let nf = n as f64;
        let ln_mag = hl + count_ln(n_tot - nf, ln_c) + count_ln(nf, ln_s);
        *slot = C64::from_polar(ln_mag.exp(), nf * alpha);
    }
}

/// Coherent spin state `|α, β⟩^{⊗2J}`.
pub fn css_state(spin: TotalSpin, alpha: f64, beta: f64) -> Result<SpinState> {
    if !(alpha.is_finite() && beta.is_finite()) {
        return Err(Error::param("css", "angles must be finite"));
    }
    if !(0.0..=PI).contains(&beta) {
        return Err(Error::param("beta", format!("{beta} outside [0, π]")));
    }
    let hl = half_ln_binomial(spin);
    let mut amps = vec![C64::new(0.0, 0.0); spin.dim()];
    css_amplitudes_into(&hl, alpha, beta, &mut amps);
    Ok(SpinState::from_normalized(spin, amps))
}

/// `cos^{2J}α · sin^{2J}β`, the overlap `⟨CSS(α,β)|X̂|CSS(α,β)⟩`.
pub fn branch_overlap(spin: TotalSpin, alpha: f64, beta: f64) -> f64 {
    let p = spin.twice_j() as i32;
    alpha.cos().powi(p) * beta.sin().powi(p)
}

/// Normalization `A = √(2[1 + cos^{2J}α sin^{2J}β cos γ′])` in terms of `γ′`.
pub fn mss_norm_prime(spin: TotalSpin, alpha: f64, beta: f64, gamma_prime: f64) -> f64 {
    (2.0 * (1.0 + branch_overlap(spin, alpha, beta) * gamma_prime.cos()))
        .max(0.0)
        .sqrt()
}

/// Normalization of the cat state with superposition phase `γ` (`γ′ = γ - 2Jα`).
pub fn mss_norm(spin: TotalSpin, alpha: f64, beta: f64, gamma: f64) -> f64 {
    mss_norm_prime(spin, alpha, beta, gamma - spin.twice_j() as f64 * alpha)
}

/// `(|CSS(α,β)⟩ + e^{iγ} |CSS(-α, π-β)⟩) / A`.
///
/// Built as `(c + e^{iγ′} X̂c) / A` with `c = CSS(α, β)`, which is the same
/// vector since `X̂ CSS(α,β) = e^{-2iJα} CSS(-α, π-β)`.
pub fn mss_state(spin: TotalSpin, params: CatParams) -> Result<SpinState> {
    let params = CatParams::new(params.alpha, params.beta, params.gamma_prime)?;
    let css = css_state(spin, params.alpha, params.beta)?;
    let a = mss_norm_prime(spin, params.alpha, params.beta, params.gamma_prime);
    let phase = C64::from_polar(1.0, params.gamma_prime);
    let c = css.amps();
    let n = c.len();
    let amps = (0..n).map(|k| (c[k] + phase * c[n - 1 - k]) / a).collect();
    Ok(SpinState::from_normalized(spin, amps))
}

/// Great-circle angle between the two superposed coherent states.
pub fn displacement_angle(alpha: f64, beta: f64) -> f64 {
    let c2a = (2.0 * alpha).cos();
    let arg = 0.5 * (1.0 - c2a + (1.0 + c2a) * (2.0 * beta).cos());
    PI - arg.clamp(-1.0, 1.0).acos()
}

/// `e^{-i Jz θ} |ψ⟩`.
pub fn rotate_z(state: &SpinState, theta: f64) -> SpinState {
    let spin = state.spin();
    let amps = state
        .amps()
        .iter()
        .enumerate()
        .map(|(k, a)| a * C64::from_polar(1.0, -spin.m(k) * theta))
        .collect();
    SpinState::from_normalized(spin, amps)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParityStats {
    pub expectation: f64,
    /// `1 - ⟨X̂⟩²`, since `X̂² = 1`.
    pub variance: f64,
}

pub fn parity_stats(state: &SpinState) -> ParityStats {
    let amps = state.amps();
    let n = amps.len();
    let expectation: f64 = (0..n).map(|k| (amps[k].conj() * amps[n - 1 - k]).re).sum();
    ParityStats {
        expectation,
        variance: (1.0 - expectation * expectation).max(0.0),
    }
}

/// Uniform angular grid over the sphere.
///
/// `alpha_i = -π + 2π i/(n_alpha - 1)`, `beta_j = π j/(n_beta - 1)`; both
/// end points are included.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereGrid {
    pub n_alpha: usize,
    pub n_beta: usize,
}

impl Default for SphereGrid {
    fn default() -> Self {
        Self {
            n_alpha: 201,
            n_beta: 101,
        }
    }
}

impl SphereGrid {
    pub fn alphas(&self) -> Vec<f64> {
        linspace(-PI, PI, self.n_alpha)
    }

    pub fn betas(&self) -> Vec<f64> {
        linspace(0.0, PI, self.n_beta)
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (a + b)];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Husimi Q-function sampled on a [`SphereGrid`], row-major in `beta`.
#[derive(Clone, Debug, PartialEq)]
pub struct QField {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub values: Vec<f64>,
}

impl QField {
    pub fn at(&self, i_beta: usize, i_alpha: usize) -> f64 {
        self.values[i_beta * self.alphas.len() + i_alpha]
    }

    /// `(alpha, beta, Q)` at the grid maximum.
    pub fn argmax(&self) -> (f64, f64, f64) {
        let (idx, q) =
            self.values.iter().copied().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, q)| if q > acc.1 { (i, q) } else { acc },
            );
        let na = self.alphas.len();
        (self.alphas[idx % na], self.betas[idx / na], q)
    }

    /// Trapezoidal quadrature of `Q sinβ dα dβ` over the grid.
    pub fn integrate(&self) -> f64 {
        let wa = trapezoid_weights(&self.alphas);
        let wb = trapezoid_weights(&self.betas);
        let na = self.alphas.len();
        let mut total = 0.0;
        for (jb, beta) in self.betas.iter().enumerate() {
            let row: f64 = (0..na).map(|ia| wa[ia] * self.values[jb * na + ia]).sum();
            total += wb[jb] * beta.sin() * row;
        }
        total
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let na = self.alphas.len();
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &q)| (self.alphas[i % na], self.betas[i / na], q))
    }
}

fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let h = x[i + 1] - x[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

/// `Q(α, β) = (2J+1)/4π |⟨CSS(α,β)|ψ⟩|²` on `grid`.
pub fn q_function(state: &SpinState, grid: &SphereGrid) -> Result<QField> {
    if grid.n_alpha < 2 || grid.n_beta < 2 {
        return Err(Error::EmptyGrid("Q-function grid needs at least two points per axis"));
    }
    let spin = state.spin();
    let hl = half_ln_binomial(spin);
    let alphas = grid.alphas();
    let betas = grid.betas();
    let scale = spin.dim() as f64 / (4.0 * PI);
    let psi = state.amps();
    let mut mags = vec![C64::new(0.0, 0.0); spin.dim()];
    let mut values = Vec::with_capacity(alphas.len() * betas.len());
    for &beta in &betas {
        css_amplitudes_into(&hl, 0.0, beta, &mut mags);
        // b_n = |c_n(β)| ψ_n; the α dependence is the phase e^{-inα}.
        let weighted: Vec<C64> = mags.iter().zip(psi).map(|(m, p)| m.re * p).collect();
        for &alpha in &alphas {
            let step = C64::from_polar(1.0, -alpha);
            let mut phase = C64::new(1.0, 0.0);
            let mut acc = C64::new(0.0, 0.0);
            for w in &weighted {
                acc += phase * w;
                phase *= step;
            }
            values.push(scale * acc.norm_sqr());
        }
    }
    Ok(QField { alphas, betas, values })
}

pub const DEFAULT_PHASE_THRESHOLD: f64 = 1e-8;

/// Relative phase between `|J, M⟩` and `|J, -M⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhaseEntry {
    pub m: f64,
    /// `arg(a_{-M}) - arg(a_M)` in `(-π, π]`; `None` when either amplitude is
    /// below the threshold.
    pub gamma_prime: Option<f64>,
}

/// `γ′_M` for every `M = J, J-1, …, -J`.
pub fn relative_phase_profile(state: &SpinState, threshold: f64) -> Vec<PhaseEntry> {
    let spin = state.spin();
    let amps = state.amps();
    let n = amps.len();
    (0..n)
        .map(|k| {
            let a = amps[k];
            let b = amps[n - 1 - k];
            let gamma_prime = if a.norm() > threshold && b.norm() > threshold {
                let g = (b * a.conj()).arg();
                Some(if g <= -PI { PI } else { g })
            } else {
                None
            };
            PhaseEntry {
                m: spin.m(k),
                gamma_prime,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

    fn spin(j: f64) -> TotalSpin {
        TotalSpin::new(j).unwrap()
    }

    #[test]
    fn total_spin_rejects_non_half_integers() {
        assert!(TotalSpin::new(1.25).is_err());
        assert!(TotalSpin::new(-0.5).is_err());
        assert!(TotalSpin::new(f64::NAN).is_err());
        let s = spin(74.5);
        assert_eq!(s.twice_j(), 149);
        assert_eq!(s.dim(), 150);
        assert_eq!(s.to_string(), "74.5");
        assert_eq!(TotalSpin::parse_fraction("149/2").unwrap(), s);
        assert_eq!(TotalSpin::parse_fraction("74.5").unwrap(), s);
    }

    #[test]
    fn build_operators_rejects_zero_spin() {
        assert!(build_operators(TotalSpin::from_twice_j(0)).is_err());
    }

    #[test]
    fn spin_half_operators_are_pauli_over_two() {
        let ops = build_operators(spin(0.5)).unwrap();
        assert_eq!(ops.jz(), &[0.5, -0.5]);
        assert_eq!(ops.jx_offdiag(), &[0.5]);
    }

    #[test]
    fn spin_one_operators() {
        let ops = build_operators(spin(1.0)).unwrap();
        assert_eq!(ops.jz(), &[1.0, 0.0, -1.0]);
        for e in ops.jx_offdiag() {
            assert!((e - FRAC_1_SQRT_2).abs() < 1e-15);
        }
    }

    #[test]
    fn parity_maps_top_state_to_bottom() {
        let s = spin(2.0);
        let ops = build_operators(s).unwrap();
        let top = SpinState::basis(s, 0).unwrap();
        let flipped = ops.apply_parity(top.amps());
        assert_eq!(flipped[4], C64::new(1.0, 0.0));
        assert_eq!(top.flipped().amps()[4], C64::new(1.0, 0.0));
    }

    #[test]
    fn css_examples() {
        let c = css_state(spin(1.0), 0.0, FRAC_PI_2).unwrap();
        let expected = [0.5, FRAC_1_SQRT_2, 0.5];
        for (a, e) in c.amps().iter().zip(expected) {
            assert!((a - C64::new(e, 0.0)).norm() < 1e-14);
        }
        let south = css_state(spin(0.5), FRAC_PI_2, PI).unwrap();
        assert!(south.amps()[0].norm() < 1e-15);
        assert!((south.amps()[1] - C64::new(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn css_rejects_out_of_range_beta() {
        assert!(css_state(spin(1.0), 0.0, 3.5).is_err());
        assert!(css_state(spin(1.0), 0.0, -0.1).is_err());
    }

    #[test]
    fn css_is_normalized_for_large_spin() {
        for j in [250.0, 500.0] {
            let c = css_state(spin(j), 0.3, 0.6).unwrap();
            assert!((c.norm() - 1.0).abs() < 1e-10, "J={j}: {}", c.norm());
        }
    }

    #[test]
    fn mss_norm_examples() {
        let s = spin(1.0);
        assert!((mss_norm(s, 0.0, FRAC_PI_4, 0.0) - 3f64.sqrt()).abs() < 1e-14);
        for g in [-2.0, 0.0, 1.3] {
            assert!((mss_norm(s, FRAC_PI_2, FRAC_PI_2, g) - 2f64.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn mss_norm_matches_inner_product() {
        let s = spin(5.0);
        let (a, b, g) = (0.2, 0.7, 0.5);
        let c1 = css_state(s, a, b).unwrap();
        let c2 = css_state(s, -a, PI - b).unwrap();
        let ph = C64::from_polar(1.0, g);
        let sum: Vec<C64> = c1.amps().iter().zip(c2.amps()).map(|(x, y)| x + ph * y).collect();
        assert!((norm2(&sum) - mss_norm(s, a, b, g)).abs() < 1e-13);
    }

    #[test]
    fn mss_with_orthogonal_branches() {
        let s = spin(1.0);
        let m = mss_state(s, CatParams::new(FRAC_PI_2, FRAC_PI_2, 0.0).unwrap()).unwrap();
        let c1 = css_state(s, FRAC_PI_2, FRAC_PI_2).unwrap();
        let c2 = css_state(s, -FRAC_PI_2, FRAC_PI_2).unwrap();
        // γ = γ′ + 2Jα = π here, so the branches enter with opposite signs.
        for k in 0..3 {
            let e = (c1.amps()[k] - c2.amps()[k]) / 2f64.sqrt();
            assert!((m.amps()[k] - e).norm() < 1e-14);
        }
    }

    #[test]
    fn mss_relative_phase_per_component() {
        // a_{-M}/a_M = e^{iγ′} (c_n + e^{-iγ′} c_{2J-n}) / (c_n + e^{iγ′} c_{2J-n}),
        // checked against direct expansion of the two-branch formula.
        let s = spin(2.0);
        let p = CatParams::new(0.4, 0.6, 1.0).unwrap();
        let m = mss_state(s, p).unwrap();
        let c1 = css_state(s, 0.4, 0.6).unwrap();
        let c2 = css_state(s, -0.4, PI - 0.6).unwrap();
        let gamma = p.gamma(s);
        let a = mss_norm(s, 0.4, 0.6, gamma);
        let ph = C64::from_polar(1.0, gamma);
        for k in 0..s.dim() {
            let direct = (c1.amps()[k] + ph * c2.amps()[k]) / a;
            assert!((direct - m.amps()[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn degenerate_cat_points_rejected() {
        assert!(CatParams::new(0.0, FRAC_PI_2, 0.3).is_err());
        assert!(CatParams::new(PI, FRAC_PI_2, 0.3).is_err());
        assert!(CatParams::new(-PI, FRAC_PI_2, 0.3).is_err());
        assert!(CatParams::new(0.1, FRAC_PI_2, 0.3).is_ok());
    }

    #[test]
    fn displacement_angle_examples() {
        assert!((displacement_angle(FRAC_PI_2, FRAC_PI_2) - PI).abs() < 1e-7);
        assert!((displacement_angle(0.0, FRAC_PI_4) - FRAC_PI_2).abs() < 1e-14);
    }

    #[test]
    fn rotate_z_periodicity() {
        let s = spin(2.0);
        let c = css_state(s, 0.3, 0.9).unwrap();
        let r = rotate_z(&c, 2.0 * PI);
        for (a, b) in r.amps().iter().zip(c.amps()) {
            assert!((a - b).norm() < 1e-13);
        }
        let s = spin(1.5);
        let c = css_state(s, 0.3, 0.9).unwrap();
        let r = rotate_z(&c, 2.0 * PI);
        for (a, b) in r.amps().iter().zip(c.amps()) {
            assert!((a + b).norm() < 1e-13);
        }
        let id = rotate_z(&c, 0.0);
        assert_eq!(id.amps(), c.amps());
    }

    #[test]
    fn rotate_quarter_turn_kills_jx() {
        let c = css_state(spin(3.0), 0.0, FRAC_PI_2).unwrap();
        assert!((c.expect_jx() - 3.0).abs() < 1e-12);
        let r = rotate_z(&c, FRAC_PI_2);
        assert!(r.expect_jx().abs() < 1e-12);
    }

    #[test]
    fn parity_stats_examples() {
        let c = css_state(spin(4.0), 0.0, FRAC_PI_2).unwrap();
        let p = parity_stats(&c);
        assert!((p.expectation - 1.0).abs() < 1e-12);
        assert!(p.variance < 1e-11);

        let s = spin(3.0);
        let mut amps = vec![C64::new(0.0, 0.0); s.dim()];
        amps[0] = C64::new(FRAC_1_SQRT_2, 0.0);
        amps[6] = C64::new(FRAC_1_SQRT_2, 0.0);
        let ghz = SpinState::from_amplitudes(s, amps).unwrap();
        assert!((parity_stats(&ghz).expectation - 1.0).abs() < 1e-14);
    }

    #[test]
    fn q_function_peaks_at_css_direction() {
        let s = spin(10.0);
        let grid = SphereGrid::default();
        let alphas = grid.alphas();
        let betas = grid.betas();
        let (a0, b0) = (alphas[120], betas[30]);
        let c = css_state(s, a0, b0).unwrap();
        let q = q_function(&c, &grid).unwrap();
        let (a, b, qmax) = q.argmax();
        assert!((a - a0).abs() < 1e-12 && (b - b0).abs() < 1e-12);
        assert!((qmax - 21.0 / (4.0 * PI)).abs() < 1e-12);
        assert!(q.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn q_function_integrates_to_one() {
        let s = spin(10.0);
        let m = mss_state(s, CatParams::new(0.7, 0.5, 0.4).unwrap()).unwrap();
        let q = q_function(&m, &SphereGrid::default()).unwrap();
        assert!((q.integrate() - 1.0).abs() < 1e-3, "{}", q.integrate());
    }

    #[test]
    fn q_function_rejects_empty_grid() {
        let c = css_state(spin(1.0), 0.0, 1.0).unwrap();
        assert!(q_function(&c, &SphereGrid { n_alpha: 0, n_beta: 10 }).is_err());
    }

    #[test]
    fn relative_phase_examples() {
        let s = spin(2.0);
        let even = css_state(s, 0.0, FRAC_PI_2).unwrap();
        for e in relative_phase_profile(&even, DEFAULT_PHASE_THRESHOLD) {
            assert!(e.gamma_prime.unwrap().abs() < 1e-14);
        }
        let amps: Vec<C64> = (0..s.dim()).map(|k| C64::new(s.m(k), 0.3 * s.m(k))).collect();
        let odd = SpinState::from_amplitudes(s, amps).unwrap();
        for e in relative_phase_profile(&odd, DEFAULT_PHASE_THRESHOLD) {
            if e.m == 0.0 {
                assert!(e.gamma_prime.is_none());
            } else {
                assert!((e.gamma_prime.unwrap() - PI).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn state_json_round_trip() {
        let s = spin(1.5);
        let c = css_state(s, 0.3, 1.1).unwrap();
        let js = c.to_json();
        assert!(js.contains("\"J\":\"3/2\""));
        let back = SpinState::from_json(&js).unwrap();
        for (a, b) in back.amps().iter().zip(c.amps()) {
            assert!((a - b).norm() < 1e-14);
        }
    }
}
