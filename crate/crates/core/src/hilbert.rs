//! Tensor-product bases for atom arrays, sparse operators lifted into them,
//! and the dense state types that evolve on them.
//!
//! Basis ordering: atom 0 is the slowest-varying tensor index, so the basis
//! index of a level tuple `(l_0, l_1, ..., l_{n-1})` is the base-`d` number
//! with digit `l_0` most significant. Result files depend on this ordering.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported atom count. Five atoms is the biggest instance the
/// protocols need; six keeps dense density matrices below 46656^2.
pub const MAX_ATOMS: usize = 6;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Atomic level labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    G,
    E,
    H,
    P1,
    P2,
    R,
}

impl Level {
    pub fn label(self) -> &'static str {
        match self {
            Level::G => "g",
            Level::E => "e",
            Level::H => "h",
            Level::P1 => "p1",
            Level::P2 => "p2",
            Level::R => "r",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "g" => Level::G,
            "e" => Level::E,
            "h" => Level::H,
            "p1" => Level::P1,
            "p2" => Level::P2,
            "r" => Level::R,
            other => return Err(Error::InvalidParameter(format!("unknown level label `{other}`"))),
        })
    }
}

/// Per-atom level structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LevelScheme {
    /// (g, e, r): effective model with the intermediate states eliminated.
    ReducedGer,
    /// (g, e, h, r): effective model keeping the third hyperfine level.
    ReducedGehr,
    /// (g, e, h, p1, p2, r): full ladder.
    FullSix,
}

impl LevelScheme {
    pub fn levels(self) -> &'static [Level] {
        match self {
            LevelScheme::ReducedGer => &[Level::G, Level::E, Level::R],
            LevelScheme::ReducedGehr => &[Level::G, Level::E, Level::H, Level::R],
            LevelScheme::FullSix => &[Level::G, Level::E, Level::H, Level::P1, Level::P2, Level::R],
        }
    }

    pub fn len(self) -> usize {
        self.levels().len()
    }

    pub fn position(self, level: Level) -> Option<usize> {
        self.levels().iter().position(|&l| l == level)
    }

    pub fn contains(self, level: Level) -> bool {
        self.position(level).is_some()
    }

    /// Local index of `level`, or an error naming the label and scheme.
    pub fn require(self, level: Level) -> Result<usize> {
        self.position(level).ok_or(Error::UnknownLevel { level, scheme: self })
    }

    pub(crate) fn labels(self) -> String {
        self.levels().iter().map(|l| l.label()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for LevelScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            LevelScheme::ReducedGer => "REDUCED_GER",
            LevelScheme::ReducedGehr => "REDUCED_GEHR",
            LevelScheme::FullSix => "FULL_SIX",
        };
        f.write_str(name)
    }
}

/// Tensor-product basis of `n_atoms` copies of a level scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Basis {
    n_atoms: usize,
    scheme: LevelScheme,
    dim: usize,
}

impl Basis {
    pub fn new(n_atoms: usize, scheme: LevelScheme) -> Result<Self> {
        if !(1..=MAX_ATOMS).contains(&n_atoms) {
            return Err(Error::AtomCount(n_atoms));
        }
        let dim = scheme.len().pow(n_atoms as u32);
        Ok(Self { n_atoms, scheme, dim })
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn scheme(&self) -> LevelScheme {
        self.scheme
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn levels_per_atom(&self) -> usize {
        self.scheme.len()
    }

    /// Index step between consecutive local levels of `atom`.
    pub fn stride(&self, atom: usize) -> usize {
        self.levels_per_atom().pow((self.n_atoms - 1 - atom) as u32)
    }

    /// Local level index of `atom` inside basis state `index`.
    pub fn local(&self, index: usize, atom: usize) -> usize {
        (index / self.stride(atom)) % self.levels_per_atom()
    }

    pub fn encode(&self, levels: &[Level]) -> Result<usize> {
        if levels.len() != self.n_atoms {
            return Err(Error::DimensionMismatch { expected: self.n_atoms, got: levels.len() });
        }
        let d = self.levels_per_atom();
        levels.iter().try_fold(0usize, |acc, &l| Ok(acc * d + self.scheme.require(l)?))
    }

    pub fn decode(&self, index: usize) -> Vec<Level> {
        let levels = self.scheme.levels();
        (0..self.n_atoms).map(|a| levels[self.local(index, a)]).collect()
    }

    /// Number of atoms sitting in `level` in basis state `index`.
    pub fn count(&self, index: usize, level: Level) -> usize {
        match self.scheme.position(level) {
            Some(k) => (0..self.n_atoms).filter(|&a| self.local(index, a) == k).count(),
            None => 0,
        }
    }

    pub(crate) fn check_atom(&self, atom: usize) -> Result<()> {
        if atom < self.n_atoms {
            Ok(())
        } else {
            Err(Error::AtomIndex { index: atom, n_atoms: self.n_atoms })
        }
    }

    pub(crate) fn ensure_same(&self, other: &Basis) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::BasisMismatch { left: self.to_string(), right: other.to_string() })
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{} (dim {})", self.n_atoms, self.scheme, self.dim)
    }
}

/// Weighted sum of single-atom ket-bras `w |a><b|`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocalOp {
    terms: Vec<(Level, Level, C64)>,
}

impl LocalOp {
    pub fn new() -> Self {
        Self::default()
    }

    /// `|ket><bra|`
    pub fn ket_bra(ket: Level, bra: Level) -> Self {
        Self { terms: vec![(ket, bra, ONE)] }
    }

    pub fn projector(level: Level) -> Self {
        Self::ket_bra(level, level)
    }

    pub fn identity(scheme: LevelScheme) -> Self {
        Self { terms: scheme.levels().iter().map(|&l| (l, l, ONE)).collect() }
    }

    pub fn term(mut self, ket: Level, bra: Level, weight: C64) -> Self {
        self.terms.push((ket, bra, weight));
        self
    }

    pub fn scaled(mut self, factor: C64) -> Self {
        for t in &mut self.terms {
            t.2 *= factor;
        }
        self
    }

    pub fn plus(mut self, other: &LocalOp) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self
    }

    pub fn adjoint(&self) -> Self {
        Self { terms: self.terms.iter().map(|&(a, b, w)| (b, a, w.conj())).collect() }
    }

    pub fn terms(&self) -> &[(Level, Level, C64)] {
        &self.terms
    }

    pub fn validate(&self, scheme: LevelScheme) -> Result<()> {
        for &(a, b, _) in &self.terms {
            scheme.require(a)?;
            scheme.require(b)?;
        }
        Ok(())
    }

    /// Dense d x d matrix in the scheme's local ordering.
    pub fn to_dense(&self, scheme: LevelScheme) -> Result<DMatrix<C64>> {
        let d = scheme.len();
        let mut m = DMatrix::zeros(d, d);
        for &(a, b, w) in &self.terms {
            m[(scheme.require(a)?, scheme.require(b)?)] += w;
        }
        Ok(m)
    }

    /// Number of distinct nonzero matrix elements.
    pub fn nnz(&self, scheme: LevelScheme) -> Result<usize> {
        Ok(self.to_dense(scheme)?.iter().filter(|v| **v != ZERO).count())
    }
}

/// Sparse complex operator on a [`Basis`], stored row-compressed.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    basis: Basis,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl OperatorMatrix {
    pub fn zeros(basis: Basis) -> Self {
        Self { basis, row_ptr: vec![0; basis.dim() + 1], cols: Vec::new(), vals: Vec::new() }
    }

    pub fn identity(basis: Basis) -> Self {
        Self::diagonal(basis, |_| ONE)
    }

    pub fn diagonal(basis: Basis, f: impl Fn(usize) -> C64) -> Self {
        Self::from_triplets(basis, (0..basis.dim()).map(|i| (i, i, f(i))))
            .expect("diagonal indices are in range")
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(
        basis: Basis,
        triplets: impl IntoIterator<Item = (usize, usize, C64)>,
    ) -> Result<Self> {
        let dim = basis.dim();
        let mut t: Vec<(usize, usize, C64)> = triplets.into_iter().collect();
        if let Some(&(r, c, _)) = t.iter().find(|&&(r, c, _)| r >= dim || c >= dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: r.max(c) + 1 });
        }
        t.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, C64)> = Vec::with_capacity(t.len());
        for (r, c, v) in t {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|&(_, _, v)| v != ZERO);

        let mut row_ptr = vec![0usize; dim + 1];
        for &(r, _, _) in &merged {
            row_ptr[r + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        let cols = merged.iter().map(|&(_, c, _)| c).collect();
        let vals = merged.iter().map(|&(_, _, v)| v).collect();
        Ok(Self { basis, row_ptr, cols, vals })
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_zero(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim()).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.row(r).find(|&(cc, _)| cc == c).map_or(ZERO, |(_, v)| v)
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.basis, self.iter().map(|(r, c, v)| (c, r, v.conj())))
            .expect("transpose stays in range")
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self::from_triplets(self.basis, self.iter().map(|(r, c, v)| (r, c, v * factor))).expect("same pattern")
    }

    pub fn add(&self, other: &OperatorMatrix) -> Result<Self> {
        self.basis.ensure_same(&other.basis)?;
        Self::from_triplets(self.basis, self.iter().chain(other.iter()))
    }

    /// Sum of operators on a common basis; an empty slice gives zero on `basis`.
    pub fn sum<'a>(basis: Basis, ops: impl IntoIterator<Item = &'a OperatorMatrix>) -> Result<Self> {
        let mut triplets = Vec::new();
        for op in ops {
            basis.ensure_same(&op.basis)?;
            triplets.extend(op.iter());
        }
        Self::from_triplets(basis, triplets)
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &OperatorMatrix) -> Result<Self> {
        self.basis.ensure_same(&other.basis)?;
        let mut triplets = Vec::new();
        for r in 0..self.dim() {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    triplets.push((r, c, a * b));
                }
            }
        }
        Self::from_triplets(self.basis, triplets)
    }

    /// Largest |A_ij - conj(A_ji)| relative to max(1, max |A_ij|).
    pub fn hermiticity_error(&self) -> f64 {
        let scale = self.vals.iter().map(|v| v.norm()).fold(1.0_f64, f64::max);
        let mut worst = 0.0_f64;
        for (r, c, v) in self.iter() {
            worst = worst.max((v - self.get(c, r).conj()).norm());
        }
        worst / scale
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    pub fn is_diagonal(&self) -> bool {
        self.iter().all(|(r, c, _)| r == c)
    }

    pub fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        DVector::from_iterator(self.dim(), (0..self.dim()).map(|r| self.row(r).map(|(c, a)| a * v[c]).sum()))
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for (r, c, v) in self.iter() {
            m[(r, c)] += v;
        }
        m
    }

    /// `self * m` for dense `m`.
    pub fn mul_dense(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, m.ncols());
        for j in 0..m.ncols() {
            let col = m.column(j);
            for r in 0..n {
                let mut acc = ZERO;
                for (c, a) in self.row(r) {
                    acc += a * col[c];
                }
                out[(r, j)] = acc;
            }
        }
        out
    }

    /// `m * self` for dense `m`.
    pub fn dense_mul(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(m.nrows(), n);
        for r in 0..n {
            for (c, a) in self.row(r) {
                let src = m.column(r);
                let mut dst = out.column_mut(c);
                for i in 0..m.nrows() {
                    dst[i] += src[i] * a;
                }
            }
        }
        out
    }

    /// `Tr(self * rho)`.
    pub fn expectation(&self, rho: &DensityMatrix) -> Result<C64> {
        self.basis.ensure_same(rho.basis())?;
        Ok(self.iter().map(|(r, c, v)| v * rho.data()[(c, r)]).sum())
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }
}

/// Lifts a single-atom operator onto `atom`: `1 ⊗ ... ⊗ op ⊗ ... ⊗ 1`.
pub fn embed(op: &LocalOp, atom: usize, basis: &Basis) -> Result<OperatorMatrix> {
    basis.check_atom(atom)?;
    let scheme = basis.scheme();
    let local: Vec<(usize, usize, C64)> = op
        .terms()
        .iter()
        .map(|&(a, b, w)| Ok((scheme.require(a)?, scheme.require(b)?, w)))
        .collect::<Result<_>>()?;
    let stride = basis.stride(atom);
    let mut triplets = Vec::with_capacity(local.len() * basis.dim() / scheme.len());
    for i in 0..basis.dim() {
        let l = basis.local(i, atom);
        for &(a, b, w) in &local {
            if b == l {
                triplets.push((i + a * stride - b * stride, i, w));
            }
        }
    }
    OperatorMatrix::from_triplets(*basis, triplets)
}

/// `Σ_j embed(op, j)` over every atom.
pub fn embed_all(op: &LocalOp, basis: &Basis) -> Result<OperatorMatrix> {
    let parts = (0..basis.n_atoms()).map(|j| embed(op, j, basis)).collect::<Result<Vec<_>>>()?;
    OperatorMatrix::sum(*basis, &parts)
}

/// Pure state on a basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    basis: Basis,
    amps: DVector<C64>,
}

impl StateVector {
    pub fn from_amplitudes(basis: Basis, amps: DVector<C64>) -> Result<Self> {
        if amps.len() != basis.dim() {
            return Err(Error::DimensionMismatch { expected: basis.dim(), got: amps.len() });
        }
        Ok(Self { basis, amps })
    }

    pub fn zeros(basis: Basis) -> Self {
        Self { basis, amps: DVector::zeros(basis.dim()) }
    }

    /// Computational basis state `|l_0 l_1 ...>`.
    pub fn basis_state(basis: Basis, levels: &[Level]) -> Result<Self> {
        let mut s = Self::zeros(basis);
        s.amps[basis.encode(levels)?] = ONE;
        Ok(s)
    }

    /// Product state from per-atom single-atom superpositions.
    pub fn product(basis: Basis, factors: &[Vec<(Level, C64)>]) -> Result<Self> {
        if factors.len() != basis.n_atoms() {
            return Err(Error::DimensionMismatch { expected: basis.n_atoms(), got: factors.len() });
        }
        let d = basis.levels_per_atom();
        let mut local = Vec::with_capacity(factors.len());
        for f in factors {
            let mut v = vec![ZERO; d];
            for &(l, w) in f {
                v[basis.scheme().require(l)?] += w;
            }
            local.push(v);
        }
        let amps = DVector::from_iterator(
            basis.dim(),
            (0..basis.dim()).map(|i| (0..basis.n_atoms()).map(|a| local[a][basis.local(i, a)]).product()),
        );
        Ok(Self { basis, amps })
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn amplitude(&self, levels: &[Level]) -> Result<C64> {
        Ok(self.amps[self.basis.encode(levels)?])
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            self.amps /= C64::from(n);
        }
        self
    }

    /// `<self|other>`
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        self.basis.ensure_same(&other.basis)?;
        Ok(self.amps.dotc(&other.amps))
    }

    pub fn add_scaled(mut self, other: &StateVector, w: C64) -> Result<Self> {
        self.basis.ensure_same(&other.basis)?;
        self.amps += &other.amps * w;
        Ok(self)
    }
}

/// Selects what a [`projector`] projects onto.
#[derive(Debug, Clone)]
pub enum StatePattern<'a> {
    /// Per-atom levels; `None` leaves that atom unconstrained (rank > 1).
    Levels(Vec<Option<Level>>),
    Vector(&'a StateVector),
}

pub fn projector(pattern: &StatePattern<'_>, basis: &Basis) -> Result<OperatorMatrix> {
    match pattern {
        StatePattern::Levels(levels) => {
            if levels.len() != basis.n_atoms() {
                return Err(Error::DimensionMismatch { expected: basis.n_atoms(), got: levels.len() });
            }
            let wanted: Vec<Option<usize>> = levels
                .iter()
                .map(|l| l.map(|l| basis.scheme().require(l)).transpose())
                .collect::<Result<_>>()?;
            let diag = (0..basis.dim()).filter(|&i| {
                wanted.iter().enumerate().all(|(a, w)| w.is_none_or(|k| basis.local(i, a) == k))
            });
            OperatorMatrix::from_triplets(*basis, diag.map(|i| (i, i, ONE)).collect::<Vec<_>>())
        }
        StatePattern::Vector(v) => {
            basis.ensure_same(v.basis())?;
            let a = v.amplitudes();
            let n2 = a.norm_squared();
            if n2 == 0.0 {
                return Err(Error::InvalidParameter("projector onto the zero vector".into()));
            }
            let nz: Vec<usize> = (0..a.len()).filter(|&i| a[i] != ZERO).collect();
            let triplets = nz
                .iter()
                .flat_map(|&r| nz.iter().map(move |&c| (r, c, a[r] * a[c].conj() / n2)))
                .collect::<Vec<_>>();
            OperatorMatrix::from_triplets(*basis, triplets)
        }
    }
}

/// Dense density matrix on a basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    basis: Basis,
    data: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn from_matrix(basis: Basis, data: DMatrix<C64>) -> Result<Self> {
        if data.nrows() != basis.dim() || data.ncols() != basis.dim() {
            return Err(Error::DimensionMismatch { expected: basis.dim(), got: data.nrows() });
        }
        Ok(Self { basis, data })
    }

    pub fn from_pure(state: &StateVector) -> Self {
        let a = state.amplitudes();
        Self { basis: *state.basis(), data: a * a.adjoint() }
    }

    /// `Σ_k w_k |ψ_k><ψ_k|` with weights renormalized to sum to one.
    pub fn mixture(basis: Basis, parts: &[(f64, StateVector)]) -> Result<Self> {
        let total: f64 = parts.iter().map(|(w, _)| *w).sum();
        if parts.is_empty() || total <= 0.0 || parts.iter().any(|(w, _)| *w < 0.0) {
            return Err(Error::InvalidParameter("mixture weights must be non-negative with positive sum".into()));
        }
        let mut data = DMatrix::zeros(basis.dim(), basis.dim());
        for (w, s) in parts {
            basis.ensure_same(s.basis())?;
            let s = s.clone().normalized();
            let a = s.amplitudes();
            data += (a * a.adjoint()) * C64::from(*w / total);
        }
        Ok(Self { basis, data })
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn data(&self) -> &DMatrix<C64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut DMatrix<C64> {
        &mut self.data
    }

    pub fn into_data(self) -> DMatrix<C64> {
        self.data
    }

    pub fn trace(&self) -> C64 {
        self.data.trace()
    }

    pub fn trace_error(&self) -> f64 {
        (self.trace() - ONE).norm()
    }

    /// `max |ρ - ρ†|`
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0_f64;
        for c in 0..n {
            for r in c..n {
                worst = worst.max((self.data[(r, c)] - self.data[(c, r)].conj()).norm());
            }
        }
        worst
    }

    /// ρ ← (ρ + ρ†)/2
    pub fn symmetrize(&mut self) {
        hermitize(&mut self.data);
    }

    pub fn normalize(&mut self) {
        let t = self.trace().re;
        if t > 0.0 {
            self.data /= C64::from(t);
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let mut h = self.data.clone();
        // symmetric_eigen reads one triangle; make it exactly Hermitian first.
        let n = self.dim();
        for c in 0..n {
            for r in (c + 1)..n {
                let avg = (h[(r, c)] + h[(c, r)].conj()) * 0.5;
                h[(r, c)] = avg;
                h[(c, r)] = avg.conj();
            }
        }
        h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Population of the diagonal entry for a level tuple.
    pub fn level_population(&self, levels: &[Level]) -> Result<f64> {
        let i = self.basis.encode(levels)?;
        Ok(self.data[(i, i)].re)
    }

    /// `<ψ|ρ|ψ>` for normalized `ψ`.
    pub fn overlap(&self, psi: &StateVector) -> Result<f64> {
        self.basis.ensure_same(psi.basis())?;
        let a = psi.amplitudes();
        Ok((a.adjoint() * &self.data * a)[(0, 0)].re / a.norm_squared())
    }

    /// Largest elementwise difference to another state.
    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        (&self.data - &other.data).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// `m ← (m + m†)/2` in place.
pub(crate) fn hermitize(m: &mut DMatrix<C64>) {
    let n = m.nrows();
    for c in 0..n {
        m[(c, c)].im = 0.0;
        for r in (c + 1)..n {
            let avg = (m[(r, c)] + m[(c, r)].conj()) * 0.5;
            m[(r, c)] = avg;
            m[(c, r)] = avg.conj();
        }
    }
}
