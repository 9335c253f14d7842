//! Hamiltonians for the pumping protocols: effective two-photon drives,
//! van der Waals interaction, the blockade-projected two-atom drive, the
//! microwave mixer of the hyperfine ground states, and the explicit
//! g/e -> p2 -> r ladder.
//!
//! All frequencies are angular (rad/s), all times in seconds, and every
//! Hamiltonian is in units of ħ.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{embed, embed_all, Basis, Level, LevelScheme, LocalOp, OperatorMatrix};

/// `C6/2π = -56.2 THz·μm⁶` for the 100S₁/₂ Rydberg pair state, in rad/s·m⁶.
pub const C6_100S: f64 = -2.0 * PI * 56.2e12 * 1e-36;

/// Which ground superposition a drive couples to `|r>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveSource {
    G,
    E,
    /// `|+> = (|g> + |e>)/√2`; g and e are both driven at Ω, so `|+>`
    /// couples with `√2·Ω`.
    Plus,
}

impl DriveSource {
    /// Ground-state components of the source and their weights in the drive.
    pub fn components(self) -> &'static [Level] {
        match self {
            DriveSource::G => &[Level::G],
            DriveSource::E => &[Level::E],
            DriveSource::Plus => &[Level::G, Level::E],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Envelope {
    Square,
    /// `exp(-(t - 3σ)²/(2σ²))`, nominal window `[0, 6σ]`.
    Gaussian { sigma: f64 },
}

impl Envelope {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Envelope::Square => 1.0,
            Envelope::Gaussian { sigma } => {
                let x = (t - 3.0 * sigma) / sigma;
                (-0.5 * x * x).exp()
            }
        }
    }
}

/// How the two-photon detuning enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetuningFrame {
    /// `-δ Σ_j |r><r|` in the frame rotating with the laser.
    #[default]
    Static,
    /// `e^{-iδt}` on every `|r><s|` coupling, no diagonal term.
    Oscillating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    pub source: DriveSource,
    /// Peak single-transition Rabi frequency Ω_a.
    pub rabi: f64,
    #[serde(default)]
    pub detuning: f64,
    #[serde(default = "square")]
    pub envelope: Envelope,
    /// Per-atom laser phases (radians); missing entries are zero.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phases: Vec<f64>,
    #[serde(default)]
    pub frame: DetuningFrame,
}

fn square() -> Envelope {
    Envelope::Square
}

impl DriveSpec {
    pub fn resonant(source: DriveSource, rabi: f64) -> Self {
        Self { source, rabi, detuning: 0.0, envelope: Envelope::Square, phases: Vec::new(), frame: DetuningFrame::Static }
    }

    pub fn with_detuning(mut self, detuning: f64) -> Self {
        self.detuning = detuning;
        self
    }

    pub fn with_envelope(mut self, envelope: Envelope) -> Self {
        self.envelope = envelope;
        self
    }

    pub fn with_phases(mut self, phases: Vec<f64>) -> Self {
        self.phases = phases;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rabi > 0.0 && self.rabi.is_finite()) {
            return Err(Error::InvalidParameter(format!("drive Rabi frequency must be positive, got {}", self.rabi)));
        }
        if let Envelope::Gaussian { sigma } = self.envelope {
            if !(sigma > 0.0) {
                return Err(Error::InvalidParameter(format!("Gaussian width must be positive, got {sigma}")));
            }
        }
        Ok(())
    }

    pub fn is_time_independent(&self) -> bool {
        self.envelope == Envelope::Square && (self.frame == DetuningFrame::Static || self.detuning == 0.0)
    }

    fn phase(&self, atom: usize) -> f64 {
        self.phases.get(atom).copied().unwrap_or(0.0)
    }
}

/// Builds `Σ_j (Ω(t)/2) e^{iφ_j} |r>_j<s| + h.c. - δ Σ_j |r>_j<r|`.
pub fn drive_hamiltonian(spec: &DriveSpec, basis: &Basis, t: f64) -> Result<OperatorMatrix> {
    spec.validate()?;
    let scheme = basis.scheme();
    scheme.require(Level::R)?;
    for &s in spec.source.components() {
        scheme.require(s)?;
    }
    let amp = spec.rabi * spec.envelope.at(t);
    let osc = match spec.frame {
        DetuningFrame::Static => C64::from(1.0),
        DetuningFrame::Oscillating => C64::from_polar(1.0, -spec.detuning * t),
    };
    let mut parts = Vec::with_capacity(basis.n_atoms() + 1);
    for j in 0..basis.n_atoms() {
        let coeff = C64::from_polar(0.5 * amp, spec.phase(j)) * osc;
        let up = spec
            .source
            .components()
            .iter()
            .fold(LocalOp::new(), |op, &s| op.term(Level::R, s, coeff));
        let local = up.adjoint().plus(&up);
        parts.push(embed(&local, j, basis)?);
    }
    if spec.frame == DetuningFrame::Static && spec.detuning != 0.0 {
        parts.push(embed_all(&LocalOp::projector(Level::R).scaled(C64::from(-spec.detuning)), basis)?);
    }
    OperatorMatrix::sum(*basis, &parts)
}

/// Pairwise Rydberg interaction strengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InteractionSpec {
    None,
    /// Same U for every pair.
    Uniform { strength: f64 },
    /// Explicit `(i, j, U_ij)`; unlisted pairs do not interact.
    Pairs { pairs: Vec<(usize, usize, f64)> },
    /// `U_ij = -C6/|r_i - r_j|⁶` (C6 in rad/s·m⁶, positions in m).
    VanDerWaals { c6: f64, positions: Vec<[f64; 3]> },
}

impl InteractionSpec {
    pub fn uniform(strength: f64) -> Self {
        InteractionSpec::Uniform { strength }
    }

    /// Atoms on a line along z with the given spacing.
    pub fn chain(c6: f64, n_atoms: usize, spacing: f64) -> Self {
        InteractionSpec::VanDerWaals {
            c6,
            positions: (0..n_atoms).map(|j| [0.0, 0.0, j as f64 * spacing]).collect(),
        }
    }

    pub fn pair_strength(&self, i: usize, j: usize) -> Result<f64> {
        if i == j {
            return Ok(0.0);
        }
        match self {
            InteractionSpec::None => Ok(0.0),
            InteractionSpec::Uniform { strength } => Ok(*strength),
            InteractionSpec::Pairs { pairs } => Ok(pairs
                .iter()
                .filter(|&&(a, b, _)| (a, b) == (i, j) || (a, b) == (j, i))
                .map(|p| p.2)
                .sum()),
            InteractionSpec::VanDerWaals { c6, positions } => {
                let (a, b) = match (positions.get(i), positions.get(j)) {
                    (Some(a), Some(b)) => (a, b),
                    _ => {
                        return Err(Error::InvalidParameter(format!(
                            "no position for atom pair ({i}, {j}); {} positions given",
                            positions.len()
                        )))
                    }
                };
                let d = distance(a, b);
                if d == 0.0 {
                    return Err(Error::Collision { i, j, distance: d });
                }
                Ok(-c6 / d.powi(6))
            }
        }
    }

    pub fn max_strength(&self, n_atoms: usize) -> Result<f64> {
        let mut worst = 0.0_f64;
        for i in 0..n_atoms {
            for j in (i + 1)..n_atoms {
                worst = worst.max(self.pair_strength(i, j)?.abs());
            }
        }
        Ok(worst)
    }
}

/// Ballistic drift of the atoms during one pulse (segment-local time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Motion {
    /// Per-atom velocity, m/s.
    pub velocities: Vec<[f64; 3]>,
    /// Effective drive wavevector along z, rad/m.
    pub k_eff: f64,
}

impl Motion {
    /// Doppler shift `k_eff·v_z` of atom `j`.
    pub fn doppler(&self, j: usize) -> f64 {
        self.velocities.get(j).map_or(0.0, |v| self.k_eff * v[2])
    }

    /// Interaction with van der Waals positions advanced to time `t`;
    /// other kinds are unaffected.
    pub fn displaced(&self, spec: &InteractionSpec, t: f64) -> InteractionSpec {
        match spec {
            InteractionSpec::VanDerWaals { c6, positions } => InteractionSpec::VanDerWaals {
                c6: *c6,
                positions: positions
                    .iter()
                    .enumerate()
                    .map(|(j, p)| {
                        let v = self.velocities.get(j).copied().unwrap_or([0.0; 3]);
                        [p[0] + v[0] * t, p[1] + v[1] * t, p[2] + v[2] * t]
                    })
                    .collect(),
            },
            other => other.clone(),
        }
    }

    /// The drive phase `k_eff·v_z·t` ramps linearly, which is equivalent to
    /// a static detuning `+k_eff·v_z|r><r|` in the frame `exp(i k v t |r><r|)`.
    /// Returns that detuning term.
    pub fn doppler_hamiltonian(&self, basis: &Basis) -> Result<OperatorMatrix> {
        let parts = (0..basis.n_atoms())
            .map(|j| embed(&LocalOp::projector(Level::R).scaled(C64::from(self.doppler(j))), j, basis))
            .collect::<Result<Vec<_>>>()?;
        OperatorMatrix::sum(*basis, &parts)
    }

    /// Diagonal of the frame transformation at segment time `t`, taking the
    /// state back to the laboratory frame.
    pub fn frame_exit(&self, basis: &Basis, t: f64) -> Result<Vec<C64>> {
        let r = basis.scheme().require(Level::R)?;
        Ok((0..basis.dim())
            .map(|i| {
                let phase: f64 = (0..basis.n_atoms()).filter(|&j| basis.local(i, j) == r).map(|j| self.doppler(j) * t).sum();
                C64::from_polar(1.0, phase)
            })
            .collect())
    }
}

pub(crate) fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Diagonal `Σ_{i<j} U_ij |r_i r_j><r_i r_j|`.
pub fn rydberg_interaction(spec: &InteractionSpec, basis: &Basis) -> Result<OperatorMatrix> {
    let r = basis.scheme().require(Level::R)?;
    let n = basis.n_atoms();
    let mut u = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let s = spec.pair_strength(i, j)?;
            if !s.is_finite() {
                return Err(Error::InvalidParameter(format!("interaction U_{i}{j} is not finite")));
            }
            u[i][j] = s;
        }
    }
    let triplets = (0..basis.dim()).filter_map(|idx| {
        let excited: Vec<usize> = (0..n).filter(|&a| basis.local(idx, a) == r).collect();
        let mut e = 0.0;
        for (k, &i) in excited.iter().enumerate() {
            for &j in &excited[k + 1..] {
                e += u[i][j];
            }
        }
        (e != 0.0).then_some((idx, idx, C64::from(e)))
    });
    OperatorMatrix::from_triplets(*basis, triplets.collect::<Vec<_>>())
}

/// Single-atom microwave term `(Ω_c/2)(|e><g| + |h><g|) + h.c.`
pub fn microwave_op(omega_c: f64) -> LocalOp {
    let half = C64::from(0.5 * omega_c);
    let down = LocalOp::new().term(Level::E, Level::G, half).term(Level::H, Level::G, half);
    let up = down.adjoint();
    down.plus(&up)
}

/// `(Ω_c/2) Σ_j (|e>_j<g| + |h>_j<g|) + h.c.`
pub fn microwave_hamiltonian(omega_c: f64, basis: &Basis) -> Result<OperatorMatrix> {
    let scheme = basis.scheme();
    for l in [Level::G, Level::E, Level::H] {
        scheme.require(l)?;
    }
    embed_all(&microwave_op(omega_c), basis)
}

/// Two-atom drive projected onto the blockaded subspace (no `|rr>`):
/// `Ω/2 (|er><eg| + |re><ge|) + Ω/2 (|rg> + |gr>)<gg| + h.c.`
pub fn blockade_effective_hamiltonian(omega_a: f64, basis: &Basis) -> Result<OperatorMatrix> {
    if basis.n_atoms() != 2 {
        return Err(Error::InvalidParameter(format!(
            "the blockade-effective Hamiltonian is defined for 2 atoms, got {}",
            basis.n_atoms()
        )));
    }
    use Level::{E, G, R};
    let idx = |a, b| basis.encode(&[a, b]);
    let half = C64::from(0.5 * omega_a);
    let couplings = [
        (idx(E, R)?, idx(E, G)?),
        (idx(R, E)?, idx(G, E)?),
        (idx(R, G)?, idx(G, G)?),
        (idx(G, R)?, idx(G, G)?),
    ];
    OperatorMatrix::from_triplets(*basis, couplings.iter().flat_map(|&(k, b)| [(k, b, half), (b, k, half)]))
}

/// Parameters of the explicit two-photon ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullLadderSpec {
    /// Upper leg p2 -> r.
    pub omega_a1: f64,
    /// Lower leg s -> p2.
    pub omega_a2: f64,
    /// Intermediate-state detuning Δ.
    pub delta: f64,
    pub target: DriveSource,
    /// r <-> p1 drive used during relaxation.
    pub omega_b: f64,
    /// Cancel the second-order light shifts of the driven ground state and
    /// of `|r>` so the ground manifold keeps its relative phases.
    #[serde(default = "yes")]
    pub light_shift_compensation: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LadderSegment {
    Pulse,
    Relax,
}

impl FullLadderSpec {
    /// `Ω_a = Ω_a1 Ω_a2 / (2Δ)`
    pub fn effective_rabi(&self) -> f64 {
        self.omega_a1 * self.omega_a2 / (2.0 * self.delta)
    }

    /// Ω_a1 = Ω_a2 = Ω chosen so that `Ω²/(2Δ)` equals `omega_a`.
    pub fn balanced(omega: f64, omega_a: f64, target: DriveSource, omega_b: f64) -> Self {
        Self {
            omega_a1: omega,
            omega_a2: omega,
            delta: omega * omega / (2.0 * omega_a),
            target,
            omega_b,
            light_shift_compensation: true,
        }
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.delta < 10.0 * self.omega_a1.max(self.omega_a2) {
            w.push(format!(
                "intermediate detuning {:.3e} rad/s is less than 10x the ladder Rabi frequencies; \
                 adiabatic elimination is questionable",
                self.delta
            ));
        }
        w
    }

    /// Single-atom ladder terms for one segment, without interaction.
    pub fn local_hamiltonian(&self, segment: LadderSegment) -> LocalOp {
        match segment {
            LadderSegment::Pulse => {
                let lower = self.target.components().iter().fold(LocalOp::new(), |op, &s| {
                    op.term(Level::P2, s, C64::from(0.5 * self.omega_a2))
                });
                let upper = LocalOp::new().term(Level::R, Level::P2, C64::from(0.5 * self.omega_a1));
                let mut h = LocalOp::new()
                    .term(Level::P2, Level::P2, C64::from(self.delta))
                    .plus(&lower)
                    .plus(&lower.adjoint())
                    .plus(&upper)
                    .plus(&upper.adjoint());
                if self.light_shift_compensation {
                    // Second-order shift of the bright ground state is -V†V/Δ
                    // with V the lower-leg coupling; likewise for |r>.
                    let w = C64::from(0.25 * self.omega_a2 * self.omega_a2 / self.delta);
                    for &a in self.target.components() {
                        for &b in self.target.components() {
                            h = h.term(a, b, w);
                        }
                    }
                    h = h.term(Level::R, Level::R, C64::from(0.25 * self.omega_a1 * self.omega_a1 / self.delta));
                }
                h
            }
            LadderSegment::Relax => {
                let up = LocalOp::new().term(Level::P1, Level::R, C64::from(0.5 * self.omega_b));
                up.adjoint().plus(&up)
            }
        }
    }
}

/// Full six-level Hamiltonian: PULSE is the g/e -> p2 -> r ladder plus
/// interaction, RELAX is the `r <-> p1` drive.
pub fn full_ladder_hamiltonian(
    spec: &FullLadderSpec,
    basis: &Basis,
    segment: LadderSegment,
    interaction: &InteractionSpec,
) -> Result<OperatorMatrix> {
    if basis.scheme() != LevelScheme::FullSix {
        return Err(Error::InvalidParameter(format!("the ladder Hamiltonian needs FULL_SIX, got {}", basis.scheme())));
    }
    let local = embed_all(&spec.local_hamiltonian(segment), basis)?;
    match segment {
        LadderSegment::Pulse => local.add(&rydberg_interaction(interaction, basis)?),
        LadderSegment::Relax => Ok(local),
    }
}

/// `|+>` or `|->` as single-atom weights.
pub fn plus_minus(sign: f64) -> Vec<(Level, C64)> {
    vec![(Level::G, C64::from(FRAC_1_SQRT_2)), (Level::E, C64::from(sign * FRAC_1_SQRT_2))]
}
