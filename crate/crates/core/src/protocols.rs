//! Cyclic pump protocols: segment schedules, the step-C timing solver,
//! envelope and timing variants, and the runner.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::{
    drive_hamiltonian, full_ladder_hamiltonian, microwave_hamiltonian, microwave_op, rydberg_interaction, DriveSource,
    DriveSpec, Envelope, FullLadderSpec, InteractionSpec, LadderSegment, Motion,
};
use crate::hilbert::{embed_all, Basis, DensityMatrix, Level, LevelScheme, LocalOp, OperatorMatrix};
use crate::lindblad::{
    dephasing_channels, engineered_decay_channels, engineered_decay_warnings, natural_decay_channels, p2_decay_channels, Channel,
    Hamiltonian, IntegratorConfig, P2_LIFETIME, RYDBERG_LIFETIME,
};
use crate::oracle::{population, survival_amplitude, TargetState};
use crate::propagator::{Propagator, SegmentDynamics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SegmentKind {
    /// Laser pulse; Hamiltonian-only in the effective tier.
    Pulse {
        drive: DriveSpec,
        interaction: InteractionSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        motion: Option<Motion>,
    },
    /// Pump lasers off, engineered decay of `|r>` on.
    Relax { include_h: bool },
    /// Global microwave mixing of g, e and h.
    Microwave { omega_c: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub label: String,
    pub kind: SegmentKind,
    pub duration: f64,
    /// Square-pulse duration before Gaussianization, kept for restoring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub square_duration: Option<f64>,
}

impl Segment {
    pub fn pulse(label: &str, drive: DriveSpec, interaction: &InteractionSpec, duration: f64) -> Self {
        Self {
            label: label.into(),
            kind: SegmentKind::Pulse { drive, interaction: interaction.clone(), motion: None },
            duration,
            square_duration: None,
        }
    }

    pub fn relax(label: &str, include_h: bool, duration: f64) -> Self {
        Self { label: label.into(), kind: SegmentKind::Relax { include_h }, duration, square_duration: None }
    }

    pub fn microwave(label: &str, omega_c: f64, duration: f64) -> Self {
        Self { label: label.into(), kind: SegmentKind::Microwave { omega_c }, duration, square_duration: None }
    }

    pub fn is_pulse(&self) -> bool {
        matches!(self.kind, SegmentKind::Pulse { .. })
    }
}

/// Engineered-dissipation parameters: `r <-> p1` drive Ω_b and p1 decay γ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxParams {
    pub omega_b: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DephasingRates {
    pub gamma_g: f64,
    pub gamma_e: f64,
    pub gamma_p: f64,
}

impl DephasingRates {
    pub fn is_zero(&self) -> bool {
        self.gamma_g == 0.0 && self.gamma_e == 0.0 && self.gamma_p == 0.0
    }
}

/// Explicit six-level model: ladder g/e -> p2 -> r during pulses, `r <-> p1`
/// drive with natural p1 decay during relaxation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderTier {
    pub omega_a1: f64,
    pub omega_a2: f64,
    pub delta: f64,
    #[serde(default = "yes")]
    pub light_shift_compensation: bool,
    /// Natural decay rate of `|r>`.
    #[serde(default = "default_gamma_r")]
    pub gamma_r: f64,
    /// Branching of `|r>` decay into g, e, h.
    #[serde(default = "uniform_branching")]
    pub r_branching: [f64; 3],
    /// Natural decay rate of `|p2>`; branching as for p1.
    #[serde(default = "default_gamma_p2")]
    pub gamma_p2: f64,
    /// Rate of repumping `|h>` back into g and e (1:3) during relaxation;
    /// stands in for the hyperfine recycling lasers.
    pub h_recycling: f64,
    /// Collective dephasing, active while lasers are on.
    #[serde(default)]
    pub dephasing: DephasingRates,
}

fn yes() -> bool {
    true
}

fn default_gamma_r() -> f64 {
    1.0 / RYDBERG_LIFETIME
}

fn default_gamma_p2() -> f64 {
    1.0 / P2_LIFETIME
}

fn uniform_branching() -> [f64; 3] {
    [1.0 / 3.0; 3]
}

impl LadderTier {
    /// Ω_a1 = Ω_a2 = `omega`, Δ chosen to give the effective `omega_a`;
    /// recycling at the p1 decay rate.
    pub fn balanced(omega: f64, omega_a: f64, gamma: f64) -> Self {
        let spec = FullLadderSpec::balanced(omega, omega_a, DriveSource::G, 0.0);
        Self {
            omega_a1: spec.omega_a1,
            omega_a2: spec.omega_a2,
            delta: spec.delta,
            light_shift_compensation: true,
            gamma_r: default_gamma_r(),
            r_branching: uniform_branching(),
            gamma_p2: default_gamma_p2(),
            h_recycling: gamma,
            dephasing: DephasingRates::default(),
        }
    }

    pub fn effective_rabi(&self) -> f64 {
        self.omega_a1 * self.omega_a2 / (2.0 * self.delta)
    }

    fn natural_decay(&self, gamma_p1: f64, basis: &Basis) -> Result<Vec<Channel>> {
        let mut channels = natural_decay_channels(gamma_p1, self.gamma_r, self.r_branching, basis)?;
        channels.extend(p2_decay_channels(self.gamma_p2, basis)?);
        Ok(channels)
    }

    fn ladder(&self, target: DriveSource, omega_b: f64) -> FullLadderSpec {
        FullLadderSpec {
            omega_a1: self.omega_a1,
            omega_a2: self.omega_a2,
            delta: self.delta,
            target,
            omega_b,
            light_shift_compensation: self.light_shift_compensation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tier", rename_all = "snake_case")]
pub enum Tier {
    /// Adiabatically eliminated drive g/e/+ <-> r.
    Effective,
    FullLadder(LadderTier),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub name: String,
    pub n_atoms: usize,
    pub scheme: LevelScheme,
    pub relax: RelaxParams,
    pub tier: Tier,
    /// One cycle.
    pub segments: Vec<Segment>,
    pub cycles: usize,
}

/// Physical inputs shared by all protocol builders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpParams {
    pub omega_a: f64,
    pub omega_b: f64,
    pub gamma: f64,
    pub interaction: InteractionSpec,
    pub relax_duration: f64,
}

impl PumpParams {
    fn validate(&self) -> Result<()> {
        for (name, v) in [("omega_a", self.omega_a), ("omega_b", self.omega_b), ("gamma", self.gamma), ("relax_duration", self.relax_duration)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    fn relax(&self) -> RelaxParams {
        RelaxParams { omega_b: self.omega_b, gamma: self.gamma }
    }
}

/// Bell state |Φ⁺>: steps A (g), B (e) at `√2π/Ω_a` and C (+) at `2π/Ω_a`,
/// each followed by relaxation.
pub fn bell_protocol(p: &PumpParams, cycles: usize) -> Result<Protocol> {
    p.validate()?;
    let tau_ab = 2f64.sqrt() * PI / p.omega_a;
    let tau_c = TAU / p.omega_a;
    let pulse = |label, source| Segment::pulse(label, DriveSpec::resonant(source, p.omega_a), &p.interaction, if source == DriveSource::Plus { tau_c } else { tau_ab });
    Ok(Protocol {
        name: "bell".into(),
        n_atoms: 2,
        scheme: LevelScheme::ReducedGer,
        relax: p.relax(),
        tier: Tier::Effective,
        segments: vec![
            pulse("A", DriveSource::G),
            Segment::relax("relax_A", false, p.relax_duration),
            pulse("B", DriveSource::E),
            Segment::relax("relax_B", false, p.relax_duration),
            pulse("C", DriveSource::Plus),
            Segment::relax("relax_C", false, p.relax_duration),
        ],
        cycles,
    })
}

/// Qutrit state |T₁>: steps A' (g) and B' (e) with amplitude-periodic
/// pulses `2√2π/Ω_a`, relaxation into g/e/h, then one microwave segment
/// `τ_c = 2π/(7Ω_c)`.
pub fn qutrit_protocol(p: &PumpParams, omega_c: f64, cycles: usize) -> Result<Protocol> {
    p.validate()?;
    if !(omega_c > 0.0) {
        return Err(Error::InvalidParameter(format!("omega_c must be positive, got {omega_c}")));
    }
    let tau = 2.0 * 2f64.sqrt() * PI / p.omega_a;
    Ok(Protocol {
        name: "qutrit".into(),
        n_atoms: 2,
        scheme: LevelScheme::ReducedGehr,
        relax: p.relax(),
        tier: Tier::Effective,
        segments: vec![
            Segment::pulse("A", DriveSpec::resonant(DriveSource::G, p.omega_a), &p.interaction, tau),
            Segment::relax("relax_A", true, p.relax_duration),
            Segment::pulse("B", DriveSpec::resonant(DriveSource::E, p.omega_a), &p.interaction, tau),
            Segment::relax("relax_B", true, p.relax_duration),
            Segment::microwave("mw", omega_c, TAU / (7.0 * omega_c)),
        ],
        cycles,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingSolution {
    pub delta: f64,
    pub t: f64,
    pub k: u32,
    pub l: u32,
    pub j: u32,
}

impl TimingSolution {
    /// Residuals of `δt = 2kπ`, `√(δ²+4Ω²)t = 2lπ`, `√(δ²+8Ω²)t = 2jπ`.
    pub fn residuals(&self, omega_a: f64) -> [f64; 3] {
        let d2 = self.delta * self.delta;
        let o2 = omega_a * omega_a;
        [
            self.delta * self.t - TAU * self.k as f64,
            (d2 + 4.0 * o2).sqrt() * self.t - TAU * self.l as f64,
            (d2 + 8.0 * o2).sqrt() * self.t - TAU * self.j as f64,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum StepCTiming {
    /// δ = 0, `t = 2π/Ω_a`.
    Resonant,
    Detuned(TimingSolution),
}

/// Smallest-t detuned step-C'' pulse that returns both `|X_2^n>` and
/// `|X_4^n>` with amplitude +1.
///
/// Squaring the three conditions gives `t = π√(l²-k²)/Ω_a` and
/// `j² = 2l² - k²`; the amplitudes come back as `(-1)^{k+l}` and
/// `(-1)^{k+j}`, so both sums must be even.
pub fn solve_step_c_timing(omega_a: f64, max_k: u32) -> Result<TimingSolution> {
    if !(omega_a > 0.0) || max_k == 0 {
        return Err(Error::InvalidParameter(format!("need omega_a > 0 and max_k >= 1, got {omega_a}, {max_k}")));
    }
    let mut best: Option<(u64, u32, u32, u32)> = None;
    for k in 1..=max_k {
        // j <= √2·l, and l is bounded by the best t found so far.
        for l in (k + 1)..=(8 * max_k + 8) {
            let s = (l as u64).pow(2) - (k as u64).pow(2);
            if best.is_some_and(|b| s >= b.0) {
                break;
            }
            let j2 = 2 * (l as u64).pow(2) - (k as u64).pow(2);
            let j = (j2 as f64).sqrt().round() as u64;
            if j * j == j2 && (k + l) % 2 == 0 && (k as u64 + j) % 2 == 0 {
                best = Some((s, k, l, j as u32));
            }
        }
    }
    let (s, k, l, j) = best.ok_or(Error::NoTimingSolution { max_k })?;
    let t = PI * (s as f64).sqrt() / omega_a;
    let sol = TimingSolution { delta: TAU * k as f64 / t, t, k, l, j };
    for m in [2, 4] {
        let a = survival_amplitude(m, omega_a, sol.delta, sol.t);
        if (a - C64::from(1.0)).norm() > 1e-9 {
            return Err(Error::InvalidParameter(format!("timing solution fails amplitude check for m = {m}: {a}")));
        }
    }
    Ok(sol)
}

/// GHZ_n: steps A'' (g) and B'' (e) at `2π/(√n·Ω_a)`, step C'' (+) with the
/// given timing.
pub fn ghz_protocol(n: usize, p: &PumpParams, cycles: usize, timing: StepCTiming) -> Result<Protocol> {
    p.validate()?;
    if !(3..=5).contains(&n) {
        return Err(Error::InvalidParameter(format!("GHZ protocol is defined for 3..=5 atoms, got {n}")));
    }
    let (delta, tau_c) = match timing {
        StepCTiming::Resonant if n == 3 => (0.0, TAU / p.omega_a),
        StepCTiming::Resonant => return Err(Error::NonIntegerRabiRatio { n }),
        StepCTiming::Detuned(s) => (s.delta, s.t),
    };
    let tau = TAU / ((n as f64).sqrt() * p.omega_a);
    Ok(Protocol {
        name: format!("ghz{n}"),
        n_atoms: n,
        scheme: LevelScheme::ReducedGer,
        relax: p.relax(),
        tier: Tier::Effective,
        segments: vec![
            Segment::pulse("A", DriveSpec::resonant(DriveSource::G, p.omega_a), &p.interaction, tau),
            Segment::relax("relax_A", false, p.relax_duration),
            Segment::pulse("B", DriveSpec::resonant(DriveSource::E, p.omega_a), &p.interaction, tau),
            Segment::relax("relax_B", false, p.relax_duration),
            Segment::pulse("C", DriveSpec::resonant(DriveSource::Plus, p.omega_a).with_detuning(delta), &p.interaction, tau_c),
            Segment::relax("relax_C", false, p.relax_duration),
        ],
        cycles,
    })
}

/// Replaces every square pulse by a Gaussian of width `sigmas[label]`
/// spanning `6σ`.
pub fn gaussianize(p: &Protocol, sigmas: &BTreeMap<String, f64>) -> Result<Protocol> {
    let mut out = p.clone();
    for seg in out.segments.iter_mut() {
        let label = seg.label.clone();
        if let SegmentKind::Pulse { drive, .. } = &mut seg.kind {
            if drive.envelope != Envelope::Square {
                return Err(Error::InvalidParameter(format!("pulse {label} is already shaped")));
            }
            let sigma = *sigmas
                .get(&label)
                .ok_or_else(|| Error::InvalidParameter(format!("no Gaussian width given for pulse {label}")))?;
            if !(sigma > 0.0) {
                return Err(Error::InvalidParameter(format!("Gaussian width for {label} must be positive")));
            }
            drive.envelope = Envelope::Gaussian { sigma };
            seg.square_duration = Some(seg.duration);
            seg.duration = 6.0 * sigma;
        }
    }
    Ok(out)
}

/// Undoes [`gaussianize`].
pub fn restore_square(p: &Protocol) -> Result<Protocol> {
    let mut out = p.clone();
    for seg in out.segments.iter_mut() {
        let label = seg.label.clone();
        if let SegmentKind::Pulse { drive, .. } = &mut seg.kind {
            if let Envelope::Gaussian { .. } = drive.envelope {
                seg.duration = seg
                    .square_duration
                    .take()
                    .ok_or_else(|| Error::InvalidParameter(format!("pulse {label} has no recorded square duration")))?;
                drive.envelope = Envelope::Square;
            }
        }
    }
    Ok(out)
}

/// Scales every pulse duration by `1 + fraction`. A Gaussian keeps its
/// centre at 3σ, so the window simply extends.
pub fn perturb_timing(p: &Protocol, fraction: f64) -> Result<Protocol> {
    if !(fraction.abs() < 0.5) {
        return Err(Error::InvalidParameter(format!("timing perturbation must satisfy |fraction| < 0.5, got {fraction}")));
    }
    let mut out = p.clone();
    for seg in out.segments.iter_mut().filter(|s| s.is_pulse()) {
        seg.duration *= 1.0 + fraction;
    }
    Ok(out)
}

impl Protocol {
    pub fn basis(&self) -> Result<Basis> {
        Basis::new(self.n_atoms, self.scheme)
    }

    pub fn cycle_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn total_duration(&self) -> f64 {
        self.cycle_duration() * self.cycles as f64
    }

    /// Switches to the explicit six-level model.
    pub fn with_full_ladder(&self, tier: LadderTier) -> Protocol {
        Protocol { scheme: LevelScheme::FullSix, tier: Tier::FullLadder(tier), ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let basis = self.basis()?;
        if self.segments.is_empty() {
            return Err(Error::InvalidParameter("protocol has no segments".into()));
        }
        if !(self.relax.omega_b >= 0.0 && self.relax.gamma > 0.0) {
            return Err(Error::InvalidParameter("relaxation needs omega_b >= 0 and gamma > 0".into()));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            let check = || -> Result<()> {
                if !(seg.duration > 0.0 && seg.duration.is_finite()) {
                    return Err(Error::InvalidParameter(format!("duration must be positive, got {}", seg.duration)));
                }
                match &seg.kind {
                    SegmentKind::Pulse { drive, interaction, motion } => {
                        drive.validate()?;
                        interaction.max_strength(self.n_atoms)?;
                        if let Some(m) = motion {
                            if m.velocities.len() != self.n_atoms {
                                return Err(Error::InvalidParameter(format!(
                                    "motion has {} velocities for {} atoms",
                                    m.velocities.len(),
                                    self.n_atoms
                                )));
                            }
                        }
                        if let Tier::FullLadder(_) = self.tier {
                            if drive.envelope != Envelope::Square || motion.is_some() {
                                return Err(Error::InvalidParameter(
                                    "the six-level tier supports square pulses without motion only".into(),
                                ));
                            }
                        }
                        Ok(())
                    }
                    SegmentKind::Relax { include_h } => {
                        if *include_h {
                            basis.scheme().require(Level::H)?;
                        }
                        Ok(())
                    }
                    SegmentKind::Microwave { omega_c } => {
                        if !(*omega_c > 0.0) {
                            return Err(Error::InvalidParameter(format!("omega_c must be positive, got {omega_c}")));
                        }
                        basis.scheme().require(Level::H).map(|_| ())
                    }
                }
            };
            check().map_err(|e| e.in_segment(i, &seg.label))?;
        }
        Ok(())
    }

    /// Non-fatal concerns about the parameter regime.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = engineered_decay_warnings(self.relax.omega_b, self.relax.gamma);
        for seg in &self.segments {
            if let SegmentKind::Pulse { drive, interaction, .. } = &seg.kind {
                let u = interaction.max_strength(self.n_atoms).unwrap_or(f64::INFINITY);
                if self.n_atoms > 1 && u < 10.0 * drive.rabi {
                    w.push(format!(
                        "pulse {}: blockade U = {:.3e} rad/s is below 10·Ω_a = {:.3e} rad/s",
                        seg.label,
                        u,
                        10.0 * drive.rabi
                    ));
                }
                if let Tier::FullLadder(t) = &self.tier {
                    if (t.effective_rabi() - drive.rabi).abs() > 1e-6 * drive.rabi {
                        w.push(format!(
                            "pulse {}: ladder gives Ω_a = {:.6e} rad/s but the drive asks for {:.6e} rad/s",
                            seg.label,
                            t.effective_rabi(),
                            drive.rabi
                        ));
                    }
                }
            }
        }
        if let Tier::FullLadder(t) = &self.tier {
            w.extend(t.ladder(DriveSource::G, self.relax.omega_b).warnings());
        }
        w.dedup();
        w
    }

    /// Generator of one segment.
    pub fn dynamics(&self, seg: &Segment) -> Result<SegmentDynamics<'static>> {
        let basis = self.basis()?;
        let relax = self.relax;
        match (&self.tier, &seg.kind) {
            (Tier::Effective, SegmentKind::Pulse { drive, interaction, motion }) => {
                let static_part = match motion {
                    Some(m) => m.doppler_hamiltonian(&basis)?,
                    None => OperatorMatrix::zeros(basis),
                };
                let hamiltonian = if drive.is_time_independent() && motion.is_none() {
                    Hamiltonian::Static(drive_hamiltonian(drive, &basis, 0.0)?.add(&rydberg_interaction(interaction, &basis)?)?)
                } else {
                    let (drive, interaction, motion) = (drive.clone(), interaction.clone(), motion.clone());
                    let fixed_interaction = rydberg_interaction(&interaction, &basis)?;
                    Hamiltonian::TimeDependent(Box::new(move |t| {
                        let u = match &motion {
                            Some(m) => rydberg_interaction(&m.displaced(&interaction, t), &basis)?,
                            None => fixed_interaction.clone(),
                        };
                        drive_hamiltonian(&drive, &basis, t)?.add(&u)?.add(&static_part)
                    }))
                };
                let exit_frame = motion.as_ref().map(|m| m.frame_exit(&basis, seg.duration)).transpose()?;
                Ok(SegmentDynamics { hamiltonian, local_hamiltonian: None, channels: Vec::new(), exit_frame })
            }
            (Tier::Effective, SegmentKind::Relax { include_h }) => Ok(SegmentDynamics {
                hamiltonian: Hamiltonian::zero(basis),
                local_hamiltonian: None,
                channels: engineered_decay_channels(relax.omega_b, relax.gamma, &basis, *include_h)?,
                exit_frame: None,
            }),
            (tier, SegmentKind::Microwave { omega_c }) => {
                let channels = match tier {
                    Tier::Effective => Vec::new(),
                    Tier::FullLadder(t) => t.natural_decay(relax.gamma, &basis)?,
                };
                Ok(SegmentDynamics {
                    hamiltonian: Hamiltonian::Static(microwave_hamiltonian(*omega_c, &basis)?),
                    local_hamiltonian: Some(microwave_op(*omega_c)),
                    channels,
                    exit_frame: None,
                })
            }
            (Tier::FullLadder(t), SegmentKind::Pulse { drive, interaction, .. }) => {
                let spec = t.ladder(drive.source, relax.omega_b);
                let mut h = full_ladder_hamiltonian(&spec, &basis, LadderSegment::Pulse, interaction)?;
                if drive.detuning != 0.0 {
                    h = h.add(&embed_all(&LocalOp::projector(Level::R).scaled(C64::from(-drive.detuning)), &basis)?)?;
                }
                let mut channels = t.natural_decay(relax.gamma, &basis)?;
                if !t.dephasing.is_zero() {
                    let d = t.dephasing;
                    channels.extend(dephasing_channels(d.gamma_g, d.gamma_e, d.gamma_p, &basis)?);
                }
                Ok(SegmentDynamics { hamiltonian: Hamiltonian::Static(h), local_hamiltonian: None, channels, exit_frame: None })
            }
            (Tier::FullLadder(t), SegmentKind::Relax { .. }) => {
                let spec = t.ladder(DriveSource::G, relax.omega_b);
                let local = spec.local_hamiltonian(LadderSegment::Relax);
                let mut channels = t.natural_decay(relax.gamma, &basis)?;
                if t.h_recycling > 0.0 {
                    for j in 0..self.n_atoms {
                        channels.push(Channel::local(LocalOp::ket_bra(Level::G, Level::H), j, 0.25 * t.h_recycling, &basis)?);
                        channels.push(Channel::local(LocalOp::ket_bra(Level::E, Level::H), j, 0.75 * t.h_recycling, &basis)?);
                    }
                }
                Ok(SegmentDynamics {
                    hamiltonian: Hamiltonian::Static(full_ladder_hamiltonian(&spec, &basis, LadderSegment::Relax, &InteractionSpec::None)?),
                    local_hamiltonian: Some(local),
                    channels,
                    exit_frame: None,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordMode {
    Segment,
    #[default]
    Cycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub integrator: IntegratorConfig,
    pub record: RecordMode,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { integrator: IntegratorConfig::auto(), record: RecordMode::Cycle }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    /// Seconds since the start.
    pub time: f64,
    /// Completed cycles; mid-cycle records carry the cycle in progress.
    pub cycle: usize,
    pub segment: String,
    pub values: Vec<f64>,
    pub trace_error: f64,
    pub hermiticity_error: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub observables: Vec<String>,
    pub records: Vec<Record>,
    pub final_state: DensityMatrix,
    pub warnings: Vec<String>,
}

impl RunResult {
    pub fn last(&self) -> &Record {
        self.records.last().expect("a run always records its initial state")
    }

    /// Final value of the named observable.
    pub fn final_value(&self, name: &str) -> Option<f64> {
        let i = self.observables.iter().position(|o| o == name)?;
        Some(self.last().values[i])
    }

    /// Values of observable `index` at cycle boundaries, starting with cycle 0.
    pub fn cycle_series(&self, index: usize) -> Vec<f64> {
        let mut out = Vec::new();
        let mut last_cycle = None;
        for r in &self.records {
            let boundary = r.segment == "start" || r.segment == "cycle" || r.segment.ends_with("@end");
            if boundary && last_cycle != Some(r.cycle) {
                out.push(r.values[index]);
                last_cycle = Some(r.cycle);
            }
        }
        out
    }
}

enum Stepper<'a> {
    Cached(Propagator),
    Integrate(SegmentDynamics<'a>),
}

/// Runs `p.cycles` cycles from `rho0`, recording target populations.
pub fn run(p: &Protocol, rho0: &DensityMatrix, observables: &[TargetState], opts: &RunOptions) -> Result<RunResult> {
    p.validate()?;
    opts.integrator.validate()?;
    let basis = p.basis()?;
    basis.ensure_same(rho0.basis())?;
    for o in observables {
        basis.ensure_same(o.vector.basis())?;
    }
    let measure = |rho: &DensityMatrix| -> Result<Vec<f64>> { observables.iter().map(|o| population(rho, o)).collect() };
    let mut records = vec![Record {
        time: 0.0,
        cycle: 0,
        segment: "start".into(),
        values: measure(rho0)?,
        trace_error: rho0.trace_error(),
        hermiticity_error: rho0.hermiticity_error(),
    }];
    let mut steppers = Vec::with_capacity(p.segments.len());
    if p.cycles > 0 {
        for (i, seg) in p.segments.iter().enumerate() {
            let build = || -> Result<Stepper<'static>> {
                let dynamics = p.dynamics(seg)?;
                Ok(match Propagator::build(&dynamics, &basis, seg.duration, &opts.integrator)? {
                    Some(prop) => Stepper::Cached(prop),
                    None => Stepper::Integrate(dynamics),
                })
            };
            steppers.push(build().map_err(|e| e.in_segment(i, &seg.label))?);
        }
    }
    let mut rho = rho0.clone();
    let mut time = 0.0;
    let last = p.segments.len() - 1;
    for cycle in 1..=p.cycles {
        for (i, (seg, stepper)) in p.segments.iter().zip(&steppers).enumerate() {
            match stepper {
                Stepper::Cached(prop) => prop.apply(&mut rho),
                Stepper::Integrate(d) => {
                    rho = d.evolve(&rho, seg.duration, &opts.integrator).map_err(|e| e.in_segment(i, &seg.label))?
                }
            }
            time += seg.duration;
            let wanted = match opts.record {
                RecordMode::Segment => true,
                RecordMode::Cycle => i == last,
            };
            if wanted {
                let values = measure(&rho)?;
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter("non-finite observable".into()).in_segment(i, &seg.label));
                }
                let label = match (opts.record, i == last) {
                    (RecordMode::Cycle, _) => "cycle".to_string(),
                    (RecordMode::Segment, true) => format!("{}@end", seg.label),
                    (RecordMode::Segment, false) => seg.label.clone(),
                };
                records.push(Record {
                    time,
                    cycle,
                    segment: label,
                    values,
                    trace_error: rho.trace_error(),
                    hermiticity_error: rho.hermiticity_error(),
                });
            }
        }
    }
    Ok(RunResult {
        observables: observables.iter().map(|o| o.kind.label()).collect(),
        records,
        final_state: rho,
        warnings: p.warnings(),
    })
}
