//! Dissipation channels and master-equation integration.
//!
//! Every channel contributes `(γ/2) L[c]ρ` with
//! `L[c]ρ = 2cρc† - c†cρ - ρc†c`, i.e. a standard Lindblad term of rate γ:
//! a channel `|g><r|` of rate γ empties `|r>` as `e^{-γt}`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{embed, hermitize, Basis, DensityMatrix, Level, LevelScheme, LocalOp, OperatorMatrix};

/// Decay branching of the short-lived state p1 into g, e and h.
pub const P1_BRANCHING: [(Level, f64); 3] = [(Level::G, 1.0 / 6.0), (Level::E, 1.0 / 2.0), (Level::H, 1.0 / 3.0)];

/// Lifetime of p1, 26.2 ns.
pub const P1_LIFETIME: f64 = 2.62e-8;

/// Lifetime of p2 (6P3/2), 112 ns.
pub const P2_LIFETIME: f64 = 1.12e-7;

/// Default natural lifetime of the 100S Rydberg state (343 μs).
pub const RYDBERG_LIFETIME: f64 = 343e-6;

/// One dissipation channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub jump: OperatorMatrix,
    pub rate: f64,
    /// Single-atom form when the jump acts on one atom only.
    pub local: Option<(usize, LocalOp)>,
}

impl Channel {
    pub fn local(op: LocalOp, atom: usize, rate: f64, basis: &Basis) -> Result<Self> {
        check_rate(rate)?;
        Ok(Self { jump: embed(&op, atom, basis)?, rate, local: Some((atom, op)) })
    }

    pub fn collective(jump: OperatorMatrix, rate: f64) -> Result<Self> {
        check_rate(rate)?;
        Ok(Self { jump, rate, local: None })
    }

    pub fn basis(&self) -> &Basis {
        self.jump.basis()
    }

    pub fn is_trivial(&self) -> bool {
        self.rate == 0.0 || self.jump.is_zero()
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if rate >= 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("channel rate must be finite and >= 0, got {rate}")))
    }
}

/// `γ_eff = Ω_b²/γ`, the decay rate of `|r>` induced by weakly mixing it
/// with the fast-decaying `|p1>`.
pub fn engineered_rate(omega_b: f64, gamma: f64) -> f64 {
    omega_b * omega_b / gamma
}

pub fn engineered_decay_warnings(omega_b: f64, gamma: f64) -> Vec<String> {
    if omega_b > gamma / 3.0 {
        vec![format!("Ω_b = {omega_b:.3e} rad/s is not small against γ = {gamma:.3e} rad/s; γ_eff = Ω_b²/γ is inaccurate")]
    } else {
        Vec::new()
    }
}

/// Per atom: `|g><r|` at `γ_eff/6`, `|e><r|` at `γ_eff/2`, and `|h><r|` at
/// `γ_eff/3` when `include_h`.
pub fn engineered_decay_channels(omega_b: f64, gamma: f64, basis: &Basis, include_h: bool) -> Result<Vec<Channel>> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("p1 decay rate must be positive, got {gamma}")));
    }
    let scheme = basis.scheme();
    scheme.require(Level::R)?;
    if include_h {
        scheme.require(Level::H)?;
    }
    let g_eff = engineered_rate(omega_b, gamma);
    let mut out = Vec::new();
    for j in 0..basis.n_atoms() {
        for &(target, branch) in &P1_BRANCHING {
            if target == Level::H && !include_h {
                continue;
            }
            out.push(Channel::local(LocalOp::ket_bra(target, Level::R), j, g_eff * branch, basis)?);
        }
    }
    Ok(out)
}

/// Collective dephasing of the laser-coupled transitions:
/// `L_g = √(γ_g/2) Σ_j (|p2><p2| - |g><g|)`,
/// `L_e = √(γ_e/2) Σ_j (|p2><p2| - |e><e|)`,
/// `L_p = √(γ_p/2) Σ_j (|r><r| - |p2><p2|)`, each at unit channel rate.
pub fn dephasing_channels(gamma_g: f64, gamma_e: f64, gamma_p: f64, basis: &Basis) -> Result<Vec<Channel>> {
    if basis.scheme() != LevelScheme::FullSix {
        return Err(Error::InvalidParameter(format!(
            "collective dephasing references p2 and needs FULL_SIX, got {}",
            basis.scheme()
        )));
    }
    let specs = [(gamma_g, Level::P2, Level::G), (gamma_e, Level::P2, Level::E), (gamma_p, Level::R, Level::P2)];
    specs
        .iter()
        .map(|&(gamma, plus, minus)| {
            check_rate(gamma)?;
            let amp = (gamma / 2.0).sqrt();
            let jump = OperatorMatrix::diagonal(*basis, |i| {
                C64::from(amp * (basis.count(i, plus) as f64 - basis.count(i, minus) as f64))
            });
            Channel::collective(jump, 1.0)
        })
        .collect()
}

/// Spontaneous decay of p1 (branching 1/6, 1/2, 1/3 into g, e, h) and of r
/// (branching `r_branching` into g, e, h). Zero-rate channels are omitted.
pub fn natural_decay_channels(
    gamma_p1: f64,
    gamma_r: f64,
    r_branching: [f64; 3],
    basis: &Basis,
) -> Result<Vec<Channel>> {
    if basis.scheme() != LevelScheme::FullSix {
        return Err(Error::InvalidParameter(format!("natural decay channels need FULL_SIX, got {}", basis.scheme())));
    }
    let mut out = Vec::new();
    for j in 0..basis.n_atoms() {
        for &(target, branch) in &P1_BRANCHING {
            let rate = gamma_p1 * branch;
            if rate > 0.0 {
                out.push(Channel::local(LocalOp::ket_bra(target, Level::P1), j, rate, basis)?);
            }
        }
        for (&target, &branch) in [Level::G, Level::E, Level::H].iter().zip(&r_branching) {
            let rate = gamma_r * branch;
            if rate > 0.0 {
                out.push(Channel::local(LocalOp::ket_bra(target, Level::R), j, rate, basis)?);
            }
        }
    }
    Ok(out)
}

/// Spontaneous decay of p2 into g, e, h, with the same branching as p1.
pub fn p2_decay_channels(gamma_p2: f64, basis: &Basis) -> Result<Vec<Channel>> {
    if basis.scheme() != LevelScheme::FullSix {
        return Err(Error::InvalidParameter(format!("p2 decay channels need FULL_SIX, got {}", basis.scheme())));
    }
    let mut out = Vec::new();
    if gamma_p2 > 0.0 {
        for j in 0..basis.n_atoms() {
            for &(target, branch) in &P1_BRANCHING {
                out.push(Channel::local(LocalOp::ket_bra(target, Level::P2), j, gamma_p2 * branch, basis)?);
            }
        }
    }
    Ok(out)
}

/// `dρ/dt = -i[H, ρ] + Σ_k (γ_k/2)(2 c ρ c† - c†c ρ - ρ c†c)`.
pub fn lindblad_rhs(rho: &DensityMatrix, hamiltonian: &OperatorMatrix, channels: &[Channel]) -> Result<DMatrix<C64>> {
    rho.basis().ensure_same(hamiltonian.basis())?;
    for c in channels {
        rho.basis().ensure_same(c.basis())?;
    }
    let gen = Generator::new(rho.basis(), channels)?;
    Ok(gen.rhs(rho.data(), hamiltonian))
}

/// Precomputed pieces of the dissipator: `K = ½ Σ γ c†c` and `√γ c`.
struct Generator {
    anti: OperatorMatrix,
    jumps: Vec<(OperatorMatrix, OperatorMatrix)>,
}

impl Generator {
    fn new(basis: &Basis, channels: &[Channel]) -> Result<Self> {
        let mut anti_parts = Vec::new();
        let mut jumps = Vec::new();
        for c in channels.iter().filter(|c| !c.is_trivial()) {
            basis.ensure_same(c.basis())?;
            let cdc = c.jump.adjoint().matmul(&c.jump)?;
            anti_parts.push(cdc.scaled(C64::from(0.5 * c.rate)));
            let scaled = c.jump.scaled(C64::from(c.rate.sqrt()));
            let adj = scaled.adjoint();
            jumps.push((scaled, adj));
        }
        Ok(Self { anti: OperatorMatrix::sum(*basis, &anti_parts)?, jumps })
    }

    fn rhs(&self, rho: &DMatrix<C64>, h: &OperatorMatrix) -> DMatrix<C64> {
        let i = C64::new(0.0, 1.0);
        // -i(H_eff ρ - ρ H_eff†) with H_eff = H - iK
        let mut out = (h.mul_dense(rho) - h.dense_mul(rho)) * (-i);
        if !self.anti.is_zero() {
            out -= self.anti.mul_dense(rho) + self.anti.dense_mul(rho);
        }
        for (c, cdag) in &self.jumps {
            out += cdag.dense_mul(&c.mul_dense(rho));
        }
        out
    }
}

/// Coherent part of a segment.
pub enum Hamiltonian<'a> {
    Static(OperatorMatrix),
    TimeDependent(Box<dyn Fn(f64) -> Result<OperatorMatrix> + Send + Sync + 'a>),
}

impl Hamiltonian<'_> {
    pub fn zero(basis: Basis) -> Self {
        Hamiltonian::Static(OperatorMatrix::zeros(basis))
    }

    pub fn at(&self, t: f64) -> Result<OperatorMatrix> {
        match self {
            Hamiltonian::Static(h) => Ok(h.clone()),
            Hamiltonian::TimeDependent(f) => f(t),
        }
    }

    pub fn is_static(&self) -> bool {
        matches!(self, Hamiltonian::Static(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4Fixed,
    Rk45Adaptive,
    /// Exact or split propagators chosen per segment from its structure,
    /// falling back to RK45. Only meaningful for protocol runs.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Upper bound on the RK step; `None` derives `(1/50)·2π/ω_max` from the
    /// generator.
    #[serde(default)]
    pub max_step: Option<f64>,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Step of the split-operator propagator (static H with dissipation).
    #[serde(default = "default_split_step")]
    pub split_step: f64,
    /// Time-dependent unitary segments are integrated as a whole with RK45
    /// unless this is set, in which case they are approximated by that many
    /// piecewise-constant exact exponentials (slowly varying H only).
    #[serde(default)]
    pub quasi_static_steps: Option<usize>,
}

fn default_split_step() -> f64 {
    1e-9
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk45Adaptive,
            max_step: None,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            split_step: default_split_step(),
            quasi_static_steps: None,
        }
    }
}

impl IntegratorConfig {
    pub fn auto() -> Self {
        Self { method: Method::Auto, ..Self::default() }
    }

    pub fn rk4(max_step: f64) -> Self {
        Self { method: Method::Rk4Fixed, max_step: Some(max_step), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !(positive(self.rel_tol) && positive(self.abs_tol)) {
            return Err(Error::InvalidParameter("integrator tolerances must be positive".into()));
        }
        if self.max_step.is_some_and(|s| !positive(s)) || !positive(self.split_step) {
            return Err(Error::InvalidParameter("integrator step sizes must be positive".into()));
        }
        if self.quasi_static_steps == Some(0) {
            return Err(Error::InvalidParameter("quasi_static_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Largest absolute row sum, an upper bound on the spectral radius.
pub(crate) fn row_norm(op: &OperatorMatrix) -> f64 {
    (0..op.dim()).map(|r| op.row(r).map(|(_, v)| v.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// `(1/50)·2π/ω_max`, with ω_max bounded from the Hamiltonian at the start
/// and middle of the interval and from the channel rates.
pub(crate) fn default_max_step(hamiltonian: &Hamiltonian<'_>, channels: &[Channel], duration: f64) -> Result<f64> {
    let h0 = hamiltonian.at(0.0)?;
    let hmid = hamiltonian.at(0.5 * duration)?;
    let rates: f64 = channels.iter().map(|c| c.rate * row_norm(&c.jump).powi(2)).sum();
    let omega = row_norm(&h0).max(row_norm(&hmid)).max(rates);
    Ok(if omega > 0.0 { std::f64::consts::TAU / (50.0 * omega) } else { duration })
}

/// Integrates the master equation for `duration` seconds.
pub fn evolve(
    rho0: &DensityMatrix,
    hamiltonian: &Hamiltonian<'_>,
    channels: &[Channel],
    duration: f64,
    cfg: &IntegratorConfig,
) -> Result<DensityMatrix> {
    cfg.validate()?;
    if !(duration >= 0.0) {
        return Err(Error::InvalidParameter(format!("duration must be >= 0, got {duration}")));
    }
    let basis = *rho0.basis();
    let gen = Generator::new(&basis, channels)?;
    if duration == 0.0 {
        return Ok(rho0.clone());
    }
    let h0 = hamiltonian.at(0.0)?;
    basis.ensure_same(h0.basis())?;
    let max_step = match cfg.max_step {
        Some(s) => s,
        None => default_max_step(hamiltonian, channels, duration)?,
    };
    let f = |t: f64, y: &DMatrix<C64>| -> Result<DMatrix<C64>> {
        Ok(match hamiltonian {
            Hamiltonian::Static(h) => gen.rhs(y, h),
            Hamiltonian::TimeDependent(_) => gen.rhs(y, &hamiltonian.at(t)?),
        })
    };
    let mut y = rho0.data().clone();
    let sym = |m: &mut DMatrix<C64>| hermitize(m);
    match cfg.method {
        Method::Rk4Fixed => rk4(&mut y, f, duration, max_step, sym)?,
        Method::Rk45Adaptive | Method::Auto => dopri5(&mut y, f, duration, max_step, cfg, sym)?,
    }
    DensityMatrix::from_matrix(basis, y)
}


pub(crate) fn rk4(
    y: &mut DMatrix<C64>,
    f: impl Fn(f64, &DMatrix<C64>) -> Result<DMatrix<C64>>,
    duration: f64,
    max_step: f64,
    after_step: impl Fn(&mut DMatrix<C64>),
) -> Result<()> {
    let steps = (duration / max_step).ceil().max(1.0) as usize;
    let h = duration / steps as f64;
    let hc = C64::from(h);
    for k in 0..steps {
        let t = k as f64 * h;
        let k1 = f(t, y)?;
        let k2 = f(t + 0.5 * h, &(&*y + &k1 * (hc * 0.5)))?;
        let k3 = f(t + 0.5 * h, &(&*y + &k2 * (hc * 0.5)))?;
        let k4 = f(t + h, &(&*y + &k3 * hc))?;
        *y += (k1 + k2 * C64::from(2.0) + k3 * C64::from(2.0) + k4) * (hc / 6.0);
        after_step(y);
    }
    Ok(())
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between the 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn combo(y: &DMatrix<C64>, h: f64, terms: &[(f64, &DMatrix<C64>)]) -> DMatrix<C64> {
    let mut out = y.clone();
    for &(w, k) in terms {
        if w != 0.0 {
            out.zip_apply(k, |o, v| *o += v * (w * h));
        }
    }
    out
}

pub(crate) fn dopri5(
    state: &mut DMatrix<C64>,
    f: impl Fn(f64, &DMatrix<C64>) -> Result<DMatrix<C64>>,
    duration: f64,
    max_step: f64,
    cfg: &IntegratorConfig,
    after_step: impl Fn(&mut DMatrix<C64>),
) -> Result<()> {
    let mut t = 0.0;
    let mut h = max_step.min(duration);
    let mut k1 = f(0.0, state)?;
    let min_step = duration * 1e-14;
    while t < duration {
        if duration - t < h {
            h = duration - t;
        }
        let y = &*state;
        let k2 = f(t + C2 * h, &combo(y, h, &[(A21, &k1)]))?;
        let k3 = f(t + C3 * h, &combo(y, h, &[(A31, &k1), (A32, &k2)]))?;
        let k4 = f(t + C4 * h, &combo(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
        let k5 = f(t + C5 * h, &combo(y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
        let k6 = f(t + h, &combo(y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]))?;
        let y_new = combo(y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let k7 = f(t + h, &y_new)?;
        let err_est = combo(
            &DMatrix::zeros(y.nrows(), y.ncols()),
            h,
            &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)],
        );
        let mut err = 0.0_f64;
        for ((e, a), b) in err_est.iter().zip(y.iter()).zip(y_new.iter()) {
            let scale = cfg.abs_tol + cfg.rel_tol * a.norm().max(b.norm());
            err = err.max(e.norm() / scale);
        }
        if err <= 1.0 {
            t += h;
            *state = y_new;
            after_step(state);
            k1 = k7;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = (h * factor).min(max_step);
        if h < min_step && t < duration {
            return Err(Error::StepUnderflow { time: t, step: h });
        }
    }
    Ok(())
}
