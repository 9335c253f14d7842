//! Cached whole-segment propagators.
//!
//! A protocol repeats the same few segments for tens of cycles, so each
//! segment's map is built once and reused. Which map is used depends on the
//! segment's structure:
//!
//! * no dissipation, static H: exact `U = V e^{-iλt} V†`;
//! * no dissipation, time-dependent H: `U` integrated once with RK45 (or a
//!   product of piecewise-constant exponentials when requested);
//! * single-atom generators only: exact per-atom superoperator exponentials,
//!   which commute across atoms;
//! * static H with single-atom and diagonal collective channels: Strang
//!   splitting, each part exact.
//!
//! Anything else falls back to [`crate::lindblad::evolve`].

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hilbert::{hermitize, Basis, DensityMatrix, LocalOp, OperatorMatrix};
use crate::lindblad::{default_max_step, dopri5, evolve, Channel, Hamiltonian, IntegratorConfig, Method};

/// Generator of one segment.
pub struct SegmentDynamics<'a> {
    pub hamiltonian: Hamiltonian<'a>,
    /// Set when `hamiltonian` is exactly this operator applied to every atom.
    pub local_hamiltonian: Option<LocalOp>,
    pub channels: Vec<Channel>,
    /// Diagonal unitary applied after the segment (leaving a rotating frame).
    pub exit_frame: Option<Vec<C64>>,
}

impl<'a> SegmentDynamics<'a> {
    pub fn unitary(hamiltonian: Hamiltonian<'a>) -> Self {
        Self { hamiltonian, local_hamiltonian: None, channels: Vec::new(), exit_frame: None }
    }

    /// Evolves with the reference integrator, bypassing any cached map.
    pub fn evolve(&self, rho: &DensityMatrix, duration: f64, cfg: &IntegratorConfig) -> Result<DensityMatrix> {
        let mut out = evolve(rho, &self.hamiltonian, &self.channels, duration, cfg)?;
        if let Some(d) = &self.exit_frame {
            apply_diagonal_unitary(out.data_mut(), d);
        }
        Ok(out)
    }
}

/// Per-atom superoperators `(atom, S)` with `S` acting on `vec(ρ_atom)`,
/// row-major (`index = a·d + b` for `|a><b|`).
#[derive(Debug, Clone)]
struct LocalMaps {
    basis: Basis,
    maps: Vec<(usize, DMatrix<C64>)>,
}

#[derive(Debug, Clone)]
enum Kind {
    Unitary { u: DMatrix<C64>, u_adj: DMatrix<C64> },
    Local(LocalMaps),
    Split { half_local: LocalMaps, half_diag: Option<DMatrix<C64>>, u: DMatrix<C64>, u_adj: DMatrix<C64>, steps: usize },
}

#[derive(Debug, Clone)]
pub struct Propagator {
    kind: Kind,
    exit: Option<Vec<C64>>,
}

fn apply_diagonal_unitary(rho: &mut DMatrix<C64>, d: &[C64]) {
    for ((r, c), v) in rho.iter_mut().enumerate().map(|(k, v)| ((k % d.len(), k / d.len()), v)) {
        *v *= d[r] * d[c].conj();
    }
}

impl Propagator {
    /// Builds the cached map, or `None` when the segment has no exploitable
    /// structure (or the config asks for a plain RK method).
    pub fn build(dynamics: &SegmentDynamics<'_>, basis: &Basis, duration: f64, cfg: &IntegratorConfig) -> Result<Option<Self>> {
        cfg.validate()?;
        if cfg.method != Method::Auto {
            return Ok(None);
        }
        if !(duration > 0.0) {
            return Err(Error::InvalidParameter(format!("segment duration must be positive, got {duration}")));
        }
        let active: Vec<&Channel> = dynamics.channels.iter().filter(|c| !c.is_trivial()).collect();
        for c in &active {
            basis.ensure_same(c.basis())?;
        }
        if active.is_empty() {
            let u = match &dynamics.hamiltonian {
                Hamiltonian::Static(h) => {
                    basis.ensure_same(h.basis())?;
                    static_unitary(h, duration)
                }
                Hamiltonian::TimeDependent(_) => time_dependent_unitary(&dynamics.hamiltonian, basis, duration, cfg)?,
            };
            let u = match &dynamics.exit_frame {
                Some(d) => DMatrix::from_fn(u.nrows(), u.ncols(), |r, c| d[r] * u[(r, c)]),
                None => u,
            };
            let u_adj = u.adjoint();
            return Ok(Some(Self { kind: Kind::Unitary { u, u_adj }, exit: None }));
        }
        let all_local = active.iter().all(|c| c.local.is_some());
        let h_is_zero = matches!(&dynamics.hamiltonian, Hamiltonian::Static(h) if h.is_zero());
        if all_local && (h_is_zero || dynamics.local_hamiltonian.is_some()) {
            let h_local = if h_is_zero { None } else { dynamics.local_hamiltonian.as_ref() };
            let maps = LocalMaps::new(basis, h_local, &active, duration)?;
            return Ok(Some(Self { kind: Kind::Local(maps), exit: dynamics.exit_frame.clone() }));
        }
        let Hamiltonian::Static(h) = &dynamics.hamiltonian else {
            return Ok(None);
        };
        basis.ensure_same(h.basis())?;
        if active.iter().any(|c| c.local.is_none() && !c.jump.is_diagonal()) {
            return Ok(None);
        }
        let steps = (duration / cfg.split_step).ceil().max(1.0) as usize;
        let dt = duration / steps as f64;
        let local: Vec<&Channel> = active.iter().copied().filter(|c| c.local.is_some()).collect();
        let diag: Vec<&Channel> = active.iter().copied().filter(|c| c.local.is_none()).collect();
        let half_local = LocalMaps::new(basis, None, &local, 0.5 * dt)?;
        let half_diag = (!diag.is_empty()).then(|| diagonal_factors(basis.dim(), &diag, 0.5 * dt));
        let u = static_unitary(h, dt);
        let u_adj = u.adjoint();
        Ok(Some(Self { kind: Kind::Split { half_local, half_diag, u, u_adj, steps }, exit: dynamics.exit_frame.clone() }))
    }

    pub fn apply(&self, rho: &mut DensityMatrix) {
        let data = rho.data_mut();
        match &self.kind {
            Kind::Unitary { u, u_adj } => *data = u * &*data * u_adj,
            Kind::Local(maps) => maps.apply(data),
            Kind::Split { half_local, half_diag, u, u_adj, steps } => {
                for _ in 0..*steps {
                    half_local.apply(data);
                    if let Some(f) = half_diag {
                        data.component_mul_assign(f);
                    }
                    *data = u * &*data * u_adj;
                    if let Some(f) = half_diag {
                        data.component_mul_assign(f);
                    }
                    half_local.apply(data);
                }
            }
        }
        if let Some(d) = &self.exit {
            apply_diagonal_unitary(data, d);
        }
        hermitize(data);
    }

    /// Short name of the method used, for diagnostics.
    pub fn method(&self) -> &'static str {
        match self.kind {
            Kind::Unitary { .. } => "unitary",
            Kind::Local(_) => "local",
            Kind::Split { .. } => "split",
        }
    }
}

/// Exact `e^{-iHt}` from the Hermitian eigendecomposition.
pub fn static_unitary(h: &OperatorMatrix, t: f64) -> DMatrix<C64> {
    let dense = h.to_dense();
    let eig = dense.symmetric_eigen();
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        let phase = C64::from_polar(1.0, -lambda * t);
        for r in 0..scaled.nrows() {
            scaled[(r, k)] *= phase;
        }
    }
    scaled * v.adjoint()
}

fn time_dependent_unitary(h: &Hamiltonian<'_>, basis: &Basis, duration: f64, cfg: &IntegratorConfig) -> Result<DMatrix<C64>> {
    let dim = basis.dim();
    if let Some(n) = cfg.quasi_static_steps {
        let dt = duration / n as f64;
        let mut u = DMatrix::<C64>::identity(dim, dim);
        for k in 0..n {
            let hk = h.at((k as f64 + 0.5) * dt)?;
            basis.ensure_same(hk.basis())?;
            u = static_unitary(&hk, dt) * u;
        }
        return Ok(u);
    }
    let max_step = match cfg.max_step {
        Some(s) => s,
        None => default_max_step(h, &[], duration)?,
    };
    let minus_i = C64::new(0.0, -1.0);
    let mut u = DMatrix::<C64>::identity(dim, dim);
    dopri5(&mut u, |t, y| Ok(h.at(t)?.mul_dense(y) * minus_i), duration, max_step, cfg, |_| {})?;
    Ok(u)
}

/// Elementwise factors `exp(t Σ_k γ_k (c_a c̄_b - |c_a|²/2 - |c_b|²/2))`
/// solving the dissipator of diagonal jump operators exactly.
fn diagonal_factors(dim: usize, channels: &[&Channel], t: f64) -> DMatrix<C64> {
    let diags: Vec<(f64, Vec<C64>)> =
        channels.iter().map(|c| (c.rate, (0..dim).map(|i| c.jump.get(i, i)).collect())).collect();
    DMatrix::from_fn(dim, dim, |a, b| {
        let exponent: C64 = diags
            .iter()
            .map(|(rate, d)| (d[a] * d[b].conj() - 0.5 * (d[a].norm_sqr() + d[b].norm_sqr())) * *rate)
            .sum();
        (exponent * t).exp()
    })
}

/// Superoperator of `-i[h, ·] + Σ γ (c · c† - ½{c†c, ·})` on one atom.
pub fn local_superoperator(h: &DMatrix<C64>, channels: &[(f64, DMatrix<C64>)]) -> DMatrix<C64> {
    let d = h.nrows();
    let i = C64::new(0.0, 1.0);
    let mut k = DMatrix::<C64>::zeros(d, d);
    for (rate, c) in channels {
        k += c.adjoint() * c * C64::from(0.5 * rate);
    }
    // Non-Hermitian effective Hamiltonian parts: ρ' = -i h_eff ρ + i ρ h_eff†
    let left = -h * i - &k;
    let right = h * i - &k;
    let mut s = DMatrix::<C64>::zeros(d * d, d * d);
    for a in 0..d {
        for b in 0..d {
            let row = a * d + b;
            for x in 0..d {
                s[(row, x * d + b)] += left[(a, x)];
                s[(row, a * d + x)] += right[(x, b)];
            }
            for (rate, c) in channels {
                for x in 0..d {
                    for y in 0..d {
                        s[(row, x * d + y)] += c[(a, x)] * c[(b, y)].conj() * *rate;
                    }
                }
            }
        }
    }
    s
}

impl LocalMaps {
    fn new(basis: &Basis, h: Option<&LocalOp>, channels: &[&Channel], t: f64) -> Result<Self> {
        let scheme = basis.scheme();
        let d = basis.levels_per_atom();
        let h_dense = match h {
            Some(op) => op.to_dense(scheme)?,
            None => DMatrix::zeros(d, d),
        };
        let mut maps = Vec::new();
        for atom in 0..basis.n_atoms() {
            let mut atom_channels = Vec::new();
            for c in channels {
                let (j, op) = c.local.as_ref().expect("local channel");
                if *j == atom {
                    atom_channels.push((c.rate, op.to_dense(scheme)?));
                }
            }
            if h.is_none() && atom_channels.is_empty() {
                continue;
            }
            let s = local_superoperator(&h_dense, &atom_channels) * C64::from(t);
            maps.push((atom, s.exp()));
        }
        Ok(Self { basis: *basis, maps })
    }

    fn apply(&self, rho: &mut DMatrix<C64>) {
        let d = self.basis.levels_per_atom();
        let dim = self.basis.dim();
        let mut block = vec![C64::default(); d * d];
        let mut out = vec![C64::default(); d * d];
        for (atom, s) in &self.maps {
            let stride = self.basis.stride(*atom);
            let heads: Vec<usize> = (0..dim).filter(|&i| (i / stride) % d == 0).collect();
            for &j0 in &heads {
                for &i0 in &heads {
                    for a in 0..d {
                        for b in 0..d {
                            block[a * d + b] = rho[(i0 + a * stride, j0 + b * stride)];
                        }
                    }
                    for (r, o) in out.iter_mut().enumerate() {
                        *o = block.iter().enumerate().map(|(c, v)| s[(r, c)] * v).sum();
                    }
                    for a in 0..d {
                        for b in 0..d {
                            rho[(i0 + a * stride, j0 + b * stride)] = out[a * d + b];
                        }
                    }
                }
            }
        }
    }
}
