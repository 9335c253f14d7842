//! Thermal motion Monte Carlo, trap depth, and dephasing surfaces.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::{distance, InteractionSpec, Motion};
use crate::hilbert::DensityMatrix;
use crate::oracle::TargetState;
use crate::protocols::{run, DephasingRates, Protocol, RunOptions, SegmentKind, Tier};

pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Mass of ⁸⁷Rb, kg.
pub const RB87_MASS: f64 = 1.443_160_6e-25;

/// How the trap depth is obtained when no override is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthModel {
    /// Two-level dipole potential with counter-rotating term,
    /// `3πc²Γ/(2ω₀³) · (1/(ω₀-ω') + 1/(ω₀+ω')) · I`.
    #[default]
    Dipole,
    /// `πc²Γ/(2ω₀²) · 3/(ω₀-ω') · I` taken literally. Its units are off by a
    /// factor of ω₀, so the result is only meaningful as a curiosity.
    Printed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapParams {
    /// Tweezer waist, m.
    pub waist: f64,
    /// Trap laser wavelength, m.
    pub wavelength: f64,
    /// Trap laser power, W.
    pub power: f64,
    /// Atomic transition frequency, rad/s.
    pub omega0: f64,
    /// Trap laser frequency, rad/s.
    pub omega_laser: f64,
    /// Transition linewidth, rad/s.
    pub linewidth: f64,
    pub mass: f64,
    /// Depth in joules; bypasses the formula when set.
    #[serde(default)]
    pub depth_override: Option<f64>,
    #[serde(default)]
    pub depth_model: DepthModel,
}

impl TrapParams {
    /// 830 nm tweezer with 1.2 μm waist and 174 μW, Rb D2 line.
    pub fn tweezer_830nm() -> Self {
        let wavelength = 830e-9;
        Self {
            waist: 1.2e-6,
            wavelength,
            power: 174e-6,
            omega0: TAU * SPEED_OF_LIGHT / 780.241e-9,
            omega_laser: TAU * SPEED_OF_LIGHT / wavelength,
            linewidth: TAU * 6.065e6,
            mass: RB87_MASS,
            depth_override: None,
            depth_model: DepthModel::Dipole,
        }
    }

    /// Peak intensity `2P/(πω²)`.
    pub fn intensity(&self) -> f64 {
        2.0 * self.power / (PI * self.waist * self.waist)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("waist", self.waist),
            ("wavelength", self.wavelength),
            ("power", self.power),
            ("omega0", self.omega0),
            ("omega_laser", self.omega_laser),
            ("linewidth", self.linewidth),
            ("mass", self.mass),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("trap {name} must be positive, got {v}")));
            }
        }
        if let Some(d) = self.depth_override {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidParameter(format!("trap depth override must be positive, got {d}")));
            }
        }
        Ok(())
    }
}

/// Trap depth in joules.
pub fn trap_depth(p: &TrapParams) -> Result<f64> {
    p.validate()?;
    if let Some(d) = p.depth_override {
        return Ok(d);
    }
    let detuning = p.omega0 - p.omega_laser;
    if detuning == 0.0 {
        return Err(Error::InvalidParameter("trap laser is resonant with the transition".into()));
    }
    let c2 = SPEED_OF_LIGHT * SPEED_OF_LIGHT;
    let depth = match p.depth_model {
        DepthModel::Dipole => {
            if detuning < 0.0 {
                return Err(Error::InvalidParameter("blue-detuned trap laser repels the atoms; no trap depth".into()));
            }
            3.0 * PI * c2 * p.linewidth / (2.0 * p.omega0.powi(3))
                * (1.0 / detuning + 1.0 / (p.omega0 + p.omega_laser))
                * p.intensity()
        }
        DepthModel::Printed => (PI * c2 * p.linewidth / (2.0 * p.omega0 * p.omega0) * 3.0 / detuning * p.intensity()).abs(),
    };
    Ok(depth)
}

/// Position and velocity variances per axis (m², m²/s²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalVariances {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub v: f64,
}

/// `⟨x²⟩ = ⟨y²⟩ = (ω²/4)(k_B T/U_F)`, `⟨z²⟩ = (π²ω⁴/(2λ²))(k_B T/U_F)`,
/// `⟨v²⟩ = k_B T/m`.
pub fn thermal_variances(temperature: f64, p: &TrapParams) -> Result<ThermalVariances> {
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidParameter(format!("temperature must be non-negative, got {temperature}")));
    }
    let depth = trap_depth(p)?;
    let ratio = BOLTZMANN * temperature / depth;
    let w2 = p.waist * p.waist;
    Ok(ThermalVariances {
        x: 0.25 * w2 * ratio,
        y: 0.25 * w2 * ratio,
        z: PI * PI * w2 * w2 / (2.0 * p.wavelength * p.wavelength) * ratio,
        v: BOLTZMANN * temperature / p.mass,
    })
}

/// Per-atom displacement δr (m) and velocity δv (m/s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalSample {
    pub displacements: Vec<[f64; 3]>,
    pub velocities: Vec<[f64; 3]>,
}

impl ThermalSample {
    pub fn zero(n_atoms: usize) -> Self {
        Self { displacements: vec![[0.0; 3]; n_atoms], velocities: vec![[0.0; 3]; n_atoms] }
    }

    /// Unit-variance draws scaled by the thermal widths.
    fn scaled(unit: &[[f64; 6]], v: &ThermalVariances) -> Self {
        let (sx, sy, sz, sv) = (v.x.sqrt(), v.y.sqrt(), v.z.sqrt(), v.v.sqrt());
        Self {
            displacements: unit.iter().map(|u| [sx * u[0], sy * u[1], sz * u[2]]).collect(),
            velocities: unit.iter().map(|u| [sv * u[3], sv * u[4], sv * u[5]]).collect(),
        }
    }
}

/// Random stream of trajectory `index` under `seed`.
///
/// Draws are standard normals scaled by the thermal widths, so the same
/// `(seed, index)` gives samples proportional to √T across temperatures.
fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn draw(rng: &mut ChaCha8Rng, n_atoms: usize, v: &ThermalVariances) -> ThermalSample {
    let unit: Vec<[f64; 6]> =
        (0..n_atoms).map(|_| std::array::from_fn(|_| StandardNormal.sample(&mut *rng))).collect();
    ThermalSample::scaled(&unit, v)
}

pub fn sample_trajectory(variances: &ThermalVariances, n_atoms: usize, seed: u64, index: u64) -> ThermalSample {
    draw(&mut trajectory_rng(seed, index), n_atoms, variances)
}

/// Geometry of the moving atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionParams {
    /// Spacing of the chain along z, m.
    pub z_spacing: f64,
    /// Drive wavevector along z, rad/m.
    pub k_eff: f64,
    /// Per-pulse-label wavevector overrides.
    #[serde(default)]
    pub k_overrides: BTreeMap<String, f64>,
    /// Separations below this abort the trajectory, m.
    #[serde(default = "default_min_separation")]
    pub min_separation: f64,
}

fn default_min_separation() -> f64 {
    1e-7
}

impl MotionParams {
    /// Spacing 6.3 μm with `k_eff·z = 18π`, so the static phase vanishes.
    pub fn chain_6p3um() -> Self {
        let z = 6.3e-6;
        Self { z_spacing: z, k_eff: 9.0 * TAU / z, k_overrides: BTreeMap::new(), min_separation: default_min_separation() }
    }

    pub fn k_for(&self, label: &str) -> f64 {
        self.k_overrides.get(label).copied().unwrap_or(self.k_eff)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.z_spacing > 0.0) {
            return Err(Error::InvalidParameter(format!("z spacing must be positive, got {}", self.z_spacing)));
        }
        if !(self.min_separation >= 0.0) {
            return Err(Error::InvalidParameter("min_separation must be non-negative".into()));
        }
        Ok(())
    }
}

/// Smallest separation of atoms `a` and `b` moving ballistically over `[0, t]`.
fn closest_approach(pa: [f64; 3], va: [f64; 3], pb: [f64; 3], vb: [f64; 3], t: f64) -> f64 {
    let d: [f64; 3] = std::array::from_fn(|k| pa[k] - pb[k]);
    let w: [f64; 3] = std::array::from_fn(|k| va[k] - vb[k]);
    let ww: f64 = w.iter().map(|x| x * x).sum();
    let s = if ww > 0.0 { (-d.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / ww).clamp(0.0, t) } else { 0.0 };
    distance(&std::array::from_fn(|k| d[k] + w[k] * s), &[0.0; 3])
}

/// Protocol with every pulse seeing the displaced, moving atoms: van der
/// Waals interaction `U (z/r)⁶` (so the unperturbed pair keeps the base U),
/// static laser phases `k(z_j + δz_j)`, and ballistic drift plus Doppler
/// shift within the pulse.
pub fn apply_motion(p: &Protocol, sample: &ThermalSample, m: &MotionParams) -> Result<Protocol> {
    m.validate()?;
    let n = p.n_atoms;
    if sample.displacements.len() != n || sample.velocities.len() != n {
        return Err(Error::InvalidParameter(format!(
            "thermal sample has {} atoms, protocol has {n}",
            sample.displacements.len()
        )));
    }
    let rest: Vec<[f64; 3]> = (0..n).map(|j| [0.0, 0.0, j as f64 * m.z_spacing]).collect();
    let positions: Vec<[f64; 3]> =
        rest.iter().zip(&sample.displacements).map(|(r, d)| std::array::from_fn(|k| r[k] + d[k])).collect();
    let mut out = p.clone();
    for seg in out.segments.iter_mut() {
        let duration = seg.duration;
        let label = seg.label.clone();
        let SegmentKind::Pulse { drive, interaction, motion } = &mut seg.kind else {
            continue;
        };
        let c6 = match &*interaction {
            InteractionSpec::Uniform { strength } => -strength * m.z_spacing.powi(6),
            InteractionSpec::VanDerWaals { c6, .. } => *c6,
            InteractionSpec::None => 0.0,
            InteractionSpec::Pairs { .. } => {
                return Err(Error::InvalidParameter(format!(
                    "pulse {label}: thermal motion needs a uniform or van der Waals interaction"
                )))
            }
        };
        for i in 0..n {
            for j in (i + 1)..n {
                let d = closest_approach(positions[i], sample.velocities[i], positions[j], sample.velocities[j], duration);
                if d < m.min_separation {
                    return Err(Error::Collision { i, j, distance: d });
                }
            }
        }
        let k = m.k_for(&label);
        *interaction = InteractionSpec::VanDerWaals { c6, positions: positions.clone() };
        drive.phases = positions.iter().map(|r| k * r[2]).collect();
        *motion = Some(Motion { velocities: sample.velocities.clone(), k_eff: k });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub temperature: f64,
    pub trap: TrapParams,
    pub motion: MotionParams,
    pub trajectories: usize,
    pub seed: u64,
    /// Draw a fresh sample every cycle instead of once per trajectory.
    #[serde(default)]
    pub resample_each_cycle: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub index: usize,
    /// Observable 0 at every cycle boundary; empty when invalid.
    pub series: Vec<f64>,
    pub error: Option<String>,
}

impl Trajectory {
    pub fn is_valid(&self) -> bool {
        self.error.is_none()
    }

    pub fn final_value(&self) -> Option<f64> {
        self.series.last().copied().filter(|_| self.is_valid())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub temperature: f64,
    pub variances: ThermalVariances,
    pub trajectories: Vec<Trajectory>,
    /// Mean of observable 0 over valid trajectories at each cycle.
    pub mean_curve: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl MonteCarloResult {
    pub fn valid_count(&self) -> usize {
        self.trajectories.iter().filter(|t| t.is_valid()).count()
    }

    pub fn finals(&self) -> Vec<f64> {
        self.trajectories.iter().filter_map(Trajectory::final_value).collect()
    }
}

fn one_trajectory(
    p: &Protocol,
    rho0: &DensityMatrix,
    observables: &[TargetState],
    cfg: &MonteCarloConfig,
    variances: &ThermalVariances,
    index: usize,
    opts: &RunOptions,
) -> Result<Vec<f64>> {
    let mut rng = trajectory_rng(cfg.seed, index as u64);
    if !cfg.resample_each_cycle {
        let moved = apply_motion(p, &draw(&mut rng, p.n_atoms, variances), &cfg.motion)?;
        return Ok(run(&moved, rho0, observables, opts)?.cycle_series(0));
    }
    let single = Protocol { cycles: 1, ..p.clone() };
    let mut rho = rho0.clone();
    let mut series = Vec::with_capacity(p.cycles + 1);
    for c in 0..p.cycles {
        let moved = apply_motion(&single, &draw(&mut rng, p.n_atoms, variances), &cfg.motion)?;
        let r = run(&moved, &rho, observables, opts)?;
        if c == 0 {
            series.push(r.records[0].values[0]);
        }
        series.push(r.last().values[0]);
        rho = r.final_state;
    }
    if p.cycles == 0 {
        series = run(p, rho0, observables, opts)?.cycle_series(0);
    }
    Ok(series)
}

/// Runs `cfg.trajectories` independent thermal trajectories in parallel.
/// Failed trajectories (e.g. colliding atoms) are kept with their error and
/// excluded from the statistics.
pub fn montecarlo(
    p: &Protocol,
    rho0: &DensityMatrix,
    observables: &[TargetState],
    cfg: &MonteCarloConfig,
    opts: &RunOptions,
) -> Result<MonteCarloResult> {
    if cfg.trajectories == 0 {
        return Err(Error::InvalidParameter("need at least one trajectory".into()));
    }
    if observables.is_empty() {
        return Err(Error::InvalidParameter("need at least one observable".into()));
    }
    cfg.motion.validate()?;
    p.validate()?;
    let variances = thermal_variances(cfg.temperature, &cfg.trap)?;
    let trajectories: Vec<Trajectory> = (0..cfg.trajectories)
        .into_par_iter()
        .map(|index| match one_trajectory(p, rho0, observables, cfg, &variances, index, opts) {
            Ok(series) => Trajectory { index, series, error: None },
            Err(e) => Trajectory { index, series: Vec::new(), error: Some(e.to_string()) },
        })
        .collect();
    let valid: Vec<&Trajectory> = trajectories.iter().filter(|t| t.is_valid()).collect();
    if valid.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "all {} trajectories failed; first error: {}",
            trajectories.len(),
            trajectories[0].error.as_deref().unwrap_or("")
        )));
    }
    let count = valid.len() as f64;
    let mean_curve: Vec<f64> =
        (0..valid[0].series.len()).map(|c| valid.iter().map(|t| t.series[c]).sum::<f64>() / count).collect();
    let finals: Vec<f64> = valid.iter().filter_map(|t| t.final_value()).collect();
    let mean = finals.iter().sum::<f64>() / count;
    let var = if finals.len() > 1 {
        finals.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (count - 1.0)
    } else {
        0.0
    };
    Ok(MonteCarloResult { temperature: cfg.temperature, variances, trajectories, mean_curve, mean, std: var.sqrt() })
}

/// Final populations over a `(γ_ge, γ_p)` grid; `values[i][j]` belongs to
/// `gamma_ge[i]`, `gamma_p[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DephasingSurface {
    pub gamma_ge: Vec<f64>,
    pub gamma_p: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl DephasingSurface {
    /// Largest increase found along either axis (0 for a monotone surface).
    pub fn max_increase(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.gamma_ge.len() {
            for j in 0..self.gamma_p.len() {
                if i + 1 < self.gamma_ge.len() {
                    worst = worst.max(self.values[i + 1][j] - self.values[i][j]);
                }
                if j + 1 < self.gamma_p.len() {
                    worst = worst.max(self.values[i][j + 1] - self.values[i][j]);
                }
            }
        }
        worst
    }

    /// γ_ge at which the population first falls to `level` for column `j`,
    /// by linear interpolation between grid points.
    pub fn threshold(&self, level: f64, j: usize) -> Option<f64> {
        let col: Vec<f64> = self.values.iter().map(|row| row[j]).collect();
        col.windows(2).zip(self.gamma_ge.windows(2)).find_map(|(v, g)| {
            (v[0] >= level && v[1] < level).then(|| g[0] + (g[1] - g[0]) * (v[0] - level) / (v[0] - v[1]))
        })
    }
}

/// Final value of observable 0 on a grid of collective dephasing rates
/// (γ_g = γ_e = γ_ge) for a full-ladder protocol.
pub fn dephasing_study(
    p: &Protocol,
    rho0: &DensityMatrix,
    observables: &[TargetState],
    gamma_ge: &[f64],
    gamma_p: &[f64],
    opts: &RunOptions,
) -> Result<DephasingSurface> {
    let Tier::FullLadder(tier) = &p.tier else {
        return Err(Error::InvalidParameter("dephasing study needs a full-ladder protocol".into()));
    };
    if observables.is_empty() {
        return Err(Error::InvalidParameter("need at least one observable".into()));
    }
    for &g in gamma_ge.iter().chain(gamma_p) {
        if !(g >= 0.0 && g.is_finite()) {
            return Err(Error::InvalidParameter(format!("dephasing rates must be non-negative, got {g}")));
        }
    }
    let points: Vec<(usize, usize)> =
        (0..gamma_ge.len()).flat_map(|i| (0..gamma_p.len()).map(move |j| (i, j))).collect();
    let flat = points
        .par_iter()
        .map(|&(i, j)| {
            let mut t = tier.clone();
            t.dephasing = DephasingRates { gamma_g: gamma_ge[i], gamma_e: gamma_ge[i], gamma_p: gamma_p[j] };
            let variant = Protocol { tier: Tier::FullLadder(t), ..p.clone() };
            Ok(run(&variant, rho0, observables, opts)?.last().values[0])
        })
        .collect::<Result<Vec<f64>>>()?;
    let values = flat.chunks(gamma_p.len().max(1)).map(<[f64]>::to_vec).collect();
    Ok(DephasingSurface { gamma_ge: gamma_ge.to_vec(), gamma_p: gamma_p.to_vec(), values })
}
