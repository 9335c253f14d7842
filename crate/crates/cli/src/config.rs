//! Run configuration.
//!
//! Field names carry their unit: `_mhz` and `_khz` are frequencies with the
//! 2π left implicit (so `omega_a_mhz: 2` means Ω_a = 2π×2 MHz), `_us` is
//! microseconds, `_um` micrometres, `_nm` nanometres, `_uk` microkelvin,
//! `_uw` microwatts. Unknown fields are rejected, which catches a missing
//! or wrong unit suffix.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rydpump::hamiltonians::InteractionSpec;
use rydpump::lindblad::{IntegratorConfig, Method};
use rydpump::noise::{DepthModel, MonteCarloConfig, MotionParams, TrapParams, BOLTZMANN, RB87_MASS, SPEED_OF_LIGHT};
use rydpump::oracle::{initial_state, target_state, InitialState, TargetKind, TargetState};
use rydpump::protocols::{
    bell_protocol, gaussianize, ghz_protocol, perturb_timing, qutrit_protocol, solve_step_c_timing, DephasingRates,
    LadderTier, Protocol, PumpParams, RecordMode, RunOptions, StepCTiming, TimingSolution,
};
use rydpump::DensityMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MHZ: f64 = TAU * 1e6;
pub const KHZ: f64 = TAU * 1e3;
pub const US: f64 = 1e-6;
pub const UM: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub integrator: IntegratorBlock,
    #[serde(default)]
    pub output: OutputConfig,
    /// Axes of a `sweep`; their cartesian product is run.
    #[serde(default)]
    pub sweep: Vec<SweepAxis>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolName {
    Bell,
    Qutrit,
    Ghz,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepCConfig {
    /// Resonant for Bell and GHZ₃, solved for GHZ₄ and GHZ₅.
    Auto,
    Resonant,
    Solve { max_k: u32 },
    Explicit { delta_mhz: f64, duration_us: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub name: ProtocolName,
    #[serde(default = "two")]
    pub n_atoms: usize,
    pub cycles: usize,
    #[serde(default = "d_omega_a")]
    pub omega_a_mhz: f64,
    #[serde(default = "d_omega_b")]
    pub omega_b_mhz: f64,
    #[serde(default = "d_gamma")]
    pub gamma_mhz: f64,
    #[serde(default = "d_u")]
    pub u_mhz: f64,
    #[serde(default = "d_relax")]
    pub relax_us: f64,
    #[serde(default = "d_omega_c")]
    pub omega_c_khz: f64,
    #[serde(default = "auto")]
    pub step_c: StepCConfig,
    /// Fractional change of every pulse duration.
    #[serde(default)]
    pub timing_error: f64,
    /// Gaussian width per pulse label; square pulses when absent.
    #[serde(default)]
    pub gaussian_sigma_us: Option<BTreeMap<String, f64>>,
    #[serde(default = "mixed_ge")]
    pub initial_state: InitialState,
    /// Observable labels; the protocol's natural set when empty.
    #[serde(default)]
    pub observables: Vec<String>,
    #[serde(default)]
    pub full_ladder: Option<LadderConfig>,
}

fn two() -> usize {
    2
}
fn d_omega_a() -> f64 {
    2.0
}
fn d_omega_b() -> f64 {
    1.2
}
fn d_gamma() -> f64 {
    6.0
}
fn d_u() -> f64 {
    400.0
}
fn d_relax() -> f64 {
    2.0
}
fn d_omega_c() -> f64 {
    20.0
}
fn auto() -> StepCConfig {
    StepCConfig::Auto
}
fn mixed_ge() -> InitialState {
    InitialState::FullyMixedGe
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    #[serde(default = "d_ladder")]
    pub omega_a1_mhz: f64,
    #[serde(default = "d_ladder")]
    pub omega_a2_mhz: f64,
    /// Intermediate detuning; `Ω_a1Ω_a2/(2Ω_a)` when absent.
    #[serde(default)]
    pub delta_mhz: Option<f64>,
    #[serde(default = "yes")]
    pub light_shift_compensation: bool,
    #[serde(default = "d_rydberg_lifetime")]
    pub rydberg_lifetime_us: f64,
    #[serde(default = "d_p2_lifetime")]
    pub p2_lifetime_us: f64,
    #[serde(default = "uniform3")]
    pub r_branching: [f64; 3],
    /// `|h>` repumping rate; the p1 decay rate when absent.
    #[serde(default)]
    pub h_recycling_mhz: Option<f64>,
    #[serde(default)]
    pub dephasing_g_khz: f64,
    #[serde(default)]
    pub dephasing_e_khz: f64,
    #[serde(default)]
    pub dephasing_p_khz: f64,
}

fn d_ladder() -> f64 {
    200.0
}
fn yes() -> bool {
    true
}
fn d_rydberg_lifetime() -> f64 {
    343.0
}
fn d_p2_lifetime() -> f64 {
    0.112
}
fn uniform3() -> [f64; 3] {
    [1.0 / 3.0; 3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub temperatures_uk: Vec<f64>,
    #[serde(default = "d_traj")]
    pub trajectories: usize,
    #[serde(default = "d_waist")]
    pub waist_um: f64,
    #[serde(default = "d_wavelength")]
    pub wavelength_nm: f64,
    #[serde(default = "d_power")]
    pub power_uw: f64,
    #[serde(default = "d_transition")]
    pub transition_nm: f64,
    #[serde(default = "d_linewidth")]
    pub linewidth_mhz: f64,
    #[serde(default = "d_mass")]
    pub mass_kg: f64,
    /// Trap depth as a temperature; overrides the formula when set.
    #[serde(default)]
    pub depth_uk: Option<f64>,
    #[serde(default)]
    pub depth_model: DepthModel,
    #[serde(default = "d_spacing")]
    pub z_spacing_um: f64,
    /// Drive wavevector in rad/μm; `2π·9/z` when absent.
    #[serde(default)]
    pub k_eff_per_um: Option<f64>,
    #[serde(default)]
    pub k_overrides_per_um: BTreeMap<String, f64>,
    #[serde(default = "d_min_sep")]
    pub min_separation_um: f64,
    #[serde(default)]
    pub resample_each_cycle: bool,
}

fn d_traj() -> usize {
    100
}
fn d_waist() -> f64 {
    1.2
}
fn d_wavelength() -> f64 {
    830.0
}
fn d_power() -> f64 {
    174.0
}
fn d_transition() -> f64 {
    780.241
}
fn d_linewidth() -> f64 {
    6.065
}
fn d_mass() -> f64 {
    RB87_MASS
}
fn d_spacing() -> f64 {
    6.3
}
fn d_min_sep() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Auto,
    Rk45,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorBlock {
    #[serde(default = "d_method")]
    pub method: MethodName,
    #[serde(default = "d_rel")]
    pub rel_tol: f64,
    #[serde(default = "d_abs")]
    pub abs_tol: f64,
    /// Step cap for RK45, step size for RK4.
    #[serde(default)]
    pub max_step_us: Option<f64>,
    #[serde(default = "d_split")]
    pub split_step_us: f64,
    /// Piecewise-constant steps for time-dependent pulses; Monte Carlo
    /// runs use 16 when absent.
    #[serde(default)]
    pub quasi_static_steps: Option<usize>,
}

fn d_method() -> MethodName {
    MethodName::Auto
}
fn d_rel() -> f64 {
    1e-8
}
fn d_abs() -> f64 {
    1e-10
}
fn d_split() -> f64 {
    0.001
}

impl Default for IntegratorBlock {
    fn default() -> Self {
        Self {
            method: d_method(),
            rel_tol: d_rel(),
            abs_tol: d_abs(),
            max_step_us: None,
            split_step_us: d_split(),
            quasi_static_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "d_dir")]
    pub dir: PathBuf,
    /// File name stem; the protocol name when absent.
    #[serde(default)]
    pub stem: Option<String>,
    #[serde(default)]
    pub record: RecordMode,
}

fn d_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: d_dir(), stem: None, record: RecordMode::Cycle }
    }
}

/// One sweep axis. `param` is a dotted path into the config; several
/// comma-separated paths are set to the same value together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub param: String,
    pub values: Vec<f64>,
}

/// Everything needed for one simulation.
pub struct Prepared {
    pub protocol: Protocol,
    pub rho0: DensityMatrix,
    pub observables: Vec<TargetState>,
    pub options: RunOptions,
    pub warnings: Vec<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Canonical JSON (all defaults filled in).
    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn sha256(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn stem(&self) -> String {
        self.output.stem.clone().unwrap_or_else(|| match self.protocol.name {
            ProtocolName::Ghz => format!("ghz{}", self.protocol.n_atoms),
            other => serde_json::to_value(other).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
        })
    }

    fn check(&self) -> Result<(), CliError> {
        let p = &self.protocol;
        let positive = [
            ("protocol.omega_a_mhz", p.omega_a_mhz),
            ("protocol.omega_b_mhz", p.omega_b_mhz),
            ("protocol.gamma_mhz", p.gamma_mhz),
            ("protocol.relax_us", p.relax_us),
            ("protocol.omega_c_khz", p.omega_c_khz),
            ("integrator.rel_tol", self.integrator.rel_tol),
            ("integrator.abs_tol", self.integrator.abs_tol),
            ("integrator.split_step_us", self.integrator.split_step_us),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(p.u_mhz >= 0.0 && p.u_mhz.is_finite()) {
            return Err(CliError::Config(format!("protocol.u_mhz must be non-negative, got {}", p.u_mhz)));
        }
        for axis in &self.sweep {
            if axis.values.is_empty() {
                return Err(CliError::Config(format!("sweep over {} has no values", axis.param)));
            }
        }
        if let Some(n) = &self.noise {
            if n.temperatures_uk.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
                return Err(CliError::Config("noise.temperatures_uk must be non-negative".into()));
            }
            if n.trajectories == 0 {
                return Err(CliError::Config("noise.trajectories must be at least 1".into()));
            }
        }
        Ok(())
    }

    pub fn pump(&self) -> PumpParams {
        let p = &self.protocol;
        PumpParams {
            omega_a: p.omega_a_mhz * MHZ,
            omega_b: p.omega_b_mhz * MHZ,
            gamma: p.gamma_mhz * MHZ,
            interaction: InteractionSpec::uniform(p.u_mhz * MHZ),
            relax_duration: p.relax_us * US,
        }
    }

    fn step_c(&self) -> Result<StepCTiming, CliError> {
        let p = &self.protocol;
        let omega_a = p.omega_a_mhz * MHZ;
        let solve = |max_k| solve_step_c_timing(omega_a, max_k).map(StepCTiming::Detuned).map_err(config_err);
        match &p.step_c {
            StepCConfig::Auto if p.name == ProtocolName::Ghz && p.n_atoms > 3 => solve(10),
            StepCConfig::Auto | StepCConfig::Resonant => Ok(StepCTiming::Resonant),
            StepCConfig::Solve { max_k } => solve(*max_k),
            StepCConfig::Explicit { delta_mhz, duration_us } => Ok(StepCTiming::Detuned(TimingSolution {
                delta: delta_mhz * MHZ,
                t: duration_us * US,
                k: 0,
                l: 0,
                j: 0,
            })),
        }
    }

    pub fn build_protocol(&self) -> Result<Protocol, CliError> {
        let p = &self.protocol;
        let pump = self.pump();
        let needs_two = |name: &str| -> Result<(), CliError> {
            if p.n_atoms == 2 {
                Ok(())
            } else {
                Err(CliError::Config(format!("{name} protocol needs n_atoms = 2, got {}", p.n_atoms)))
            }
        };
        let mut protocol = match p.name {
            ProtocolName::Bell => {
                needs_two("bell")?;
                if !matches!(p.step_c, StepCConfig::Auto | StepCConfig::Resonant) {
                    return Err(CliError::Config("bell protocol only supports a resonant step C".into()));
                }
                bell_protocol(&pump, p.cycles)
            }
            ProtocolName::Qutrit => {
                needs_two("qutrit")?;
                qutrit_protocol(&pump, p.omega_c_khz * KHZ, p.cycles)
            }
            ProtocolName::Ghz => ghz_protocol(p.n_atoms, &pump, p.cycles, self.step_c()?),
        }
        .map_err(config_err)?;
        if let Some(sigmas) = &p.gaussian_sigma_us {
            let si: BTreeMap<String, f64> = sigmas.iter().map(|(k, v)| (k.clone(), v * US)).collect();
            protocol = gaussianize(&protocol, &si).map_err(config_err)?;
        }
        if p.timing_error != 0.0 {
            protocol = perturb_timing(&protocol, p.timing_error).map_err(config_err)?;
        }
        if let Some(l) = &p.full_ladder {
            protocol = protocol.with_full_ladder(self.ladder_tier(l));
        }
        protocol.validate().map_err(config_err)?;
        Ok(protocol)
    }

    fn ladder_tier(&self, l: &LadderConfig) -> LadderTier {
        let omega_a = self.protocol.omega_a_mhz * MHZ;
        let (a1, a2) = (l.omega_a1_mhz * MHZ, l.omega_a2_mhz * MHZ);
        LadderTier {
            omega_a1: a1,
            omega_a2: a2,
            delta: l.delta_mhz.map_or(a1 * a2 / (2.0 * omega_a), |d| d * MHZ),
            light_shift_compensation: l.light_shift_compensation,
            gamma_r: 1.0 / (l.rydberg_lifetime_us * US),
            r_branching: l.r_branching,
            gamma_p2: 1.0 / (l.p2_lifetime_us * US),
            h_recycling: l.h_recycling_mhz.unwrap_or(self.protocol.gamma_mhz) * MHZ,
            dephasing: DephasingRates {
                gamma_g: l.dephasing_g_khz * KHZ,
                gamma_e: l.dephasing_e_khz * KHZ,
                gamma_p: l.dephasing_p_khz * KHZ,
            },
        }
    }

    pub fn integrator(&self) -> Result<IntegratorConfig, CliError> {
        let b = &self.integrator;
        let cfg = IntegratorConfig {
            method: match b.method {
                MethodName::Auto => Method::Auto,
                MethodName::Rk45 => Method::Rk45Adaptive,
                MethodName::Rk4 => Method::Rk4Fixed,
            },
            max_step: b.max_step_us.map(|s| s * US),
            rel_tol: b.rel_tol,
            abs_tol: b.abs_tol,
            split_step: b.split_step_us * US,
            quasi_static_steps: b.quasi_static_steps,
        };
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }

    pub fn observable_kinds(&self) -> Result<Vec<TargetKind>, CliError> {
        let p = &self.protocol;
        if p.observables.is_empty() {
            return Ok(match p.name {
                ProtocolName::Bell => TargetKind::BELL.to_vec(),
                ProtocolName::Qutrit => TargetKind::QUTRIT.to_vec(),
                ProtocolName::Ghz => vec![TargetKind::Ghz { n: p.n_atoms }],
            });
        }
        p.observables.iter().map(|s| s.parse().map_err(config_err)).collect()
    }

    pub fn prepare(&self) -> Result<Prepared, CliError> {
        let protocol = self.build_protocol()?;
        let basis = protocol.basis().map_err(config_err)?;
        let rho0 = initial_state(&self.protocol.initial_state, &basis).map_err(config_err)?;
        let observables = self
            .observable_kinds()?
            .into_iter()
            .map(|k| target_state(k, &basis).map_err(config_err))
            .collect::<Result<Vec<_>, _>>()?;
        let mut warnings = protocol.warnings();
        warnings.extend(self.protocol.initial_state.weight_warning());
        let options = RunOptions { integrator: self.integrator()?, record: self.output.record };
        Ok(Prepared { protocol, rho0, observables, options, warnings })
    }

    /// Monte Carlo settings for one temperature (μK).
    pub fn montecarlo(&self, temperature_uk: f64) -> Result<MonteCarloConfig, CliError> {
        let n = self.noise.as_ref().ok_or_else(|| CliError::Config("config has no noise block".into()))?;
        let trap = TrapParams {
            waist: n.waist_um * UM,
            wavelength: n.wavelength_nm * 1e-9,
            power: n.power_uw * 1e-6,
            omega0: TAU * SPEED_OF_LIGHT / (n.transition_nm * 1e-9),
            omega_laser: TAU * SPEED_OF_LIGHT / (n.wavelength_nm * 1e-9),
            linewidth: n.linewidth_mhz * MHZ,
            mass: n.mass_kg,
            depth_override: n.depth_uk.map(|d| d * 1e-6 * BOLTZMANN),
            depth_model: n.depth_model,
        };
        trap.validate().map_err(config_err)?;
        let z = n.z_spacing_um * UM;
        let motion = MotionParams {
            z_spacing: z,
            k_eff: n.k_eff_per_um.map_or(9.0 * TAU / z, |k| k / UM),
            k_overrides: n.k_overrides_per_um.iter().map(|(l, k)| (l.clone(), k / UM)).collect(),
            min_separation: n.min_separation_um * UM,
        };
        motion.validate().map_err(config_err)?;
        Ok(MonteCarloConfig {
            temperature: temperature_uk * 1e-6,
            trap,
            motion,
            trajectories: n.trajectories,
            seed: self.seed,
            resample_each_cycle: n.resample_each_cycle,
        })
    }

    /// Copy with `value` written at every comma-separated dotted `param`.
    pub fn with_param(&self, param: &str, value: f64) -> Result<RunConfig, CliError> {
        let mut v = self.to_value();
        for path in param.split(',').map(str::trim) {
            let slot = lookup(&mut v, path)
                .ok_or_else(|| CliError::Config(format!("unknown parameter {path:?}")))?;
            *slot = if slot.is_u64() && value.fract() == 0.0 && value >= 0.0 {
                Value::from(value as u64)
            } else {
                Value::from(value)
            };
        }
        let cfg: RunConfig = serde_json::from_value(v)
            .map_err(|e| CliError::Config(format!("setting {param} = {value}: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }
}

fn lookup<'a>(v: &'a mut Value, path: &str) -> Option<&'a mut Value> {
    path.split('.').try_fold(v, |node, key| match node {
        Value::Object(map) => map.get_mut(key),
        _ => None,
    })
}

pub fn config_err(e: rydpump::Error) -> CliError {
    CliError::Config(e.to_string())
}
