//! Target states, initial states, observables, and closed-form results used
//! to check the numerics.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::plus_minus;
use crate::hilbert::{Basis, DensityMatrix, Level, LevelScheme, OperatorMatrix, StateVector};

/// Amplitude that `m` atoms driven collectively (Rabi `√(2m)·Ω_a`,
/// detuning δ) are still in the ground manifold at time `t`:
/// `(P⁺e^{P⁺t} - P⁻e^{P⁻t})/(iW)`, `W = √(δ² + 2mΩ_a²)`,
/// `P^± = (i/2)(-δ ± W)`.
///
/// The closed form is written in the frame where the detuning sits on the
/// ground state; it differs from the `-δ|r><r|` frame by `e^{-iδt}`.
/// `m = 0` is uncoupled and returns 1.
pub fn survival_amplitude(m: u32, omega_a: f64, delta: f64, t: f64) -> C64 {
    if m == 0 {
        return C64::from(1.0);
    }
    let w = (delta * delta + 2.0 * m as f64 * omega_a * omega_a).sqrt();
    let i = C64::new(0.0, 1.0);
    let p_plus = i * 0.5 * (-delta + w);
    let p_minus = i * 0.5 * (-delta - w);
    (p_plus * (p_plus * t).exp() - p_minus * (p_minus * t).exp()) / (i * w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TargetKind {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
    T1,
    T2,
    T3,
    /// `(|g…g> + (-1)^n |e…e>)/√2`, the state whose `|±>` expansion has an
    /// even number of `+` atoms.
    Ghz { n: usize },
    /// Symmetric state with `m` atoms in `|+>` and `n - m` in `|->`.
    XState { m: usize, n: usize },
}

impl TargetKind {
    pub const BELL: [TargetKind; 4] = [TargetKind::PhiPlus, TargetKind::PhiMinus, TargetKind::PsiPlus, TargetKind::PsiMinus];
    pub const QUTRIT: [TargetKind; 3] = [TargetKind::T1, TargetKind::T2, TargetKind::T3];

    /// Column-friendly name.
    pub fn label(&self) -> String {
        match self {
            TargetKind::PhiPlus => "phi_plus".into(),
            TargetKind::PhiMinus => "phi_minus".into(),
            TargetKind::PsiPlus => "psi_plus".into(),
            TargetKind::PsiMinus => "psi_minus".into(),
            TargetKind::T1 => "t1".into(),
            TargetKind::T2 => "t2".into(),
            TargetKind::T3 => "t3".into(),
            TargetKind::Ghz { n } => format!("ghz{n}"),
            TargetKind::XState { m, n } => format!("x{m}_{n}"),
        }
    }
}

impl std::str::FromStr for TargetKind {
    type Err = Error;

    /// Inverse of [`TargetKind::label`].
    fn from_str(s: &str) -> Result<Self> {
        let fixed = TargetKind::BELL.iter().chain(&TargetKind::QUTRIT).find(|k| k.label() == s);
        if let Some(k) = fixed {
            return Ok(*k);
        }
        let bad = || Error::InvalidParameter(format!("unknown observable {s:?}"));
        if let Some(n) = s.strip_prefix("ghz") {
            return Ok(TargetKind::Ghz { n: n.parse().map_err(|_| bad())? });
        }
        if let Some((m, n)) = s.strip_prefix('x').and_then(|r| r.split_once('_')) {
            return Ok(TargetKind::XState { m: m.parse().map_err(|_| bad())?, n: n.parse().map_err(|_| bad())? });
        }
        Err(bad())
    }
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetState {
    pub kind: TargetKind,
    pub vector: StateVector,
}

fn combination(basis: Basis, terms: &[(f64, &[Level])]) -> Result<StateVector> {
    let mut psi = StateVector::zeros(basis);
    for &(w, levels) in terms {
        psi = psi.add_scaled(&StateVector::basis_state(basis, levels)?, C64::from(w))?;
    }
    Ok(psi)
}

fn require_atoms(basis: &Basis, n: usize) -> Result<()> {
    if basis.n_atoms() == n {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("target needs {n} atoms, basis has {}", basis.n_atoms())))
    }
}

pub fn target_state(kind: TargetKind, basis: &Basis) -> Result<TargetState> {
    use Level::{E, G, H};
    let b = *basis;
    let s2 = FRAC_1_SQRT_2;
    let s3 = 1.0 / 3f64.sqrt();
    let vector = match kind {
        TargetKind::PhiPlus | TargetKind::PhiMinus | TargetKind::PsiPlus | TargetKind::PsiMinus => {
            require_atoms(basis, 2)?;
            let sign = if matches!(kind, TargetKind::PhiPlus | TargetKind::PsiPlus) { 1.0 } else { -1.0 };
            match kind {
                TargetKind::PhiPlus | TargetKind::PhiMinus => combination(b, &[(s2, &[G, G]), (sign * s2, &[E, E])])?,
                _ => combination(b, &[(s2, &[G, E]), (sign * s2, &[E, G])])?,
            }
        }
        TargetKind::T1 | TargetKind::T2 | TargetKind::T3 => {
            require_atoms(basis, 2)?;
            basis.scheme().require(H)?;
            match kind {
                TargetKind::T1 => combination(b, &[(s3, &[E, E]), (-s3, &[G, G]), (s3, &[H, H])])?,
                TargetKind::T2 => combination(b, &[(s3, &[E, H]), (-s3, &[G, G]), (s3, &[H, E])])?,
                _ => combination(b, &[(0.5, &[E, G]), (-0.5, &[G, E]), (-0.5, &[G, H]), (0.5, &[H, G])])?,
            }
        }
        TargetKind::Ghz { n } => {
            require_atoms(basis, n)?;
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            combination(b, &[(s2, &vec![G; n]), (sign * s2, &vec![E; n])])?
        }
        TargetKind::XState { m, n } => return x_state(m, n, basis),
    };
    Ok(TargetState { kind, vector })
}

/// Uniform superposition of all `C(n, m)` placements of `m` atoms in `|+>`.
pub fn x_state(m: usize, n: usize, basis: &Basis) -> Result<TargetState> {
    require_atoms(basis, n)?;
    if m > n {
        return Err(Error::InvalidParameter(format!("x_state needs m <= n, got m = {m}, n = {n}")));
    }
    let mut psi = StateVector::zeros(*basis);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != m {
            continue;
        }
        let factors: Vec<_> = (0..n).map(|j| plus_minus(if mask >> (n - 1 - j) & 1 == 1 { 1.0 } else { -1.0 })).collect();
        psi = psi.add_scaled(&StateVector::product(*basis, &factors)?, C64::from(1.0))?;
    }
    Ok(TargetState { kind: TargetKind::XState { m, n }, vector: psi.normalized() })
}

/// `<ψ|ρ|ψ>`
pub fn population(rho: &DensityMatrix, target: &TargetState) -> Result<f64> {
    rho.overlap(&target.vector)
}

/// `‖H|ψ>‖₂`
pub fn dark_state_residual(h: &OperatorMatrix, state: &TargetState) -> Result<f64> {
    h.basis().ensure_same(state.vector.basis())?;
    Ok(h.apply(state.vector.amplitudes()).norm())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedState {
    pub weight: f64,
    pub levels: Vec<Level>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// Uniform mixture over `{g, e}^n`.
    FullyMixedGe,
    /// Uniform mixture over `{g, e, h}^n`.
    FullyMixedGeh,
    /// Weighted mixture of basis states; weights are normalized.
    Mix(Vec<WeightedState>),
}

impl InitialState {
    pub fn mix(parts: &[(f64, &[Level])]) -> Self {
        InitialState::Mix(parts.iter().map(|&(weight, l)| WeightedState { weight, levels: l.to_vec() }).collect())
    }

    /// Warning text when mixture weights do not sum to 1.
    pub fn weight_warning(&self) -> Option<String> {
        let InitialState::Mix(parts) = self else { return None };
        let total: f64 = parts.iter().map(|p| p.weight).sum();
        ((total - 1.0).abs() > 1e-9).then(|| format!("initial-state weights sum to {total}, normalizing"))
    }
}

pub fn initial_state(spec: &InitialState, basis: &Basis) -> Result<DensityMatrix> {
    let uniform = |levels: &[Level]| -> Result<DensityMatrix> {
        for &l in levels {
            basis.scheme().require(l)?;
        }
        let n = basis.n_atoms();
        let count = levels.len().pow(n as u32);
        let parts: Vec<_> = (0..count)
            .map(|mut k| {
                let mut tuple = vec![levels[0]; n];
                for slot in tuple.iter_mut().rev() {
                    *slot = levels[k % levels.len()];
                    k /= levels.len();
                }
                Ok((1.0, StateVector::basis_state(*basis, &tuple)?))
            })
            .collect::<Result<_>>()?;
        DensityMatrix::mixture(*basis, &parts)
    };
    match spec {
        InitialState::FullyMixedGe => uniform(&[Level::G, Level::E]),
        InitialState::FullyMixedGeh => uniform(&[Level::G, Level::E, Level::H]),
        InitialState::Mix(parts) => {
            if parts.is_empty() || parts.iter().any(|p| !(p.weight >= 0.0)) || parts.iter().all(|p| p.weight == 0.0) {
                return Err(Error::InvalidParameter("initial mixture needs non-negative weights with a positive sum".into()));
            }
            let states = parts
                .iter()
                .map(|p| Ok((p.weight, StateVector::basis_state(*basis, &p.levels)?)))
                .collect::<Result<Vec<_>>>()?;
            DensityMatrix::mixture(*basis, &states)
        }
    }
}

/// The three initial mixtures of the qutrit study. The second one reads
/// its last term as the diagonal `|eh><eh|`, keeping it a valid state.
pub fn qutrit_initial_states() -> [InitialState; 3] {
    use Level::{E, G, H};
    let third = 1.0 / 3.0;
    let sixth = 1.0 / 6.0;
    [
        InitialState::mix(&[(third, &[G, G]), (third, &[E, E]), (third, &[H, H])]),
        InitialState::mix(&[
            (sixth, &[G, G]),
            (sixth, &[E, E]),
            (sixth, &[H, H]),
            (sixth, &[E, G]),
            (sixth, &[G, E]),
            (sixth, &[E, H]),
        ]),
        InitialState::mix(&[(0.5, &[E, G]), (0.5, &[G, E])]),
    ]
}

/// Scheme that holds every level a target needs.
pub fn scheme_for(kind: TargetKind) -> LevelScheme {
    match kind {
        TargetKind::T1 | TargetKind::T2 | TargetKind::T3 => LevelScheme::ReducedGehr,
        _ => LevelScheme::ReducedGer,
    }
}
