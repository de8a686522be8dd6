//! Effective spin Hamiltonian of a Kramers doublet coupled to a nuclear spin.
//!
//! The Hamiltonian is
//!
//! ```text
//! H = g∥ μB Bz Sz + g⊥ μB (Bx Sx + By Sy)
//!   + A Iz Sz + B (Ix Sx + Iy Sy)
//!   + P [Iz² − I(I+1)/3]
//! ```
//!
//! written in the product basis `|M_I, M_S⟩` with `M_I` as the outer index and
//! `M_S` as the inner one, both running from `+j` down to `−j`. Energies are in
//! MHz and fields in mT everywhere.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Bohr magneton in frequency units as quoted for the Nd:YLF parameter sets.
pub const MU_B_ROUNDED: f64 = 14.0;
/// CODATA value of μB/h in MHz/mT.
pub const MU_B_CODATA: f64 = 13.996_244_936;

/// Relative Frobenius residual tolerated by [`HermitianMatrix::new`].
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Eigenvalues closer than this (MHz) are treated as one degenerate cluster.
pub const DEGENERACY_GAP: f64 = 1e-6;

/// A non-negative spin quantum number stored as twice its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Spin(u32);

impl Spin {
    pub const HALF: Spin = Spin(1);

    pub const fn from_twice(twice: u32) -> Self {
        Spin(twice)
    }

    /// Accepts any non-negative multiple of 1/2.
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::invalid(format!("spin {value} must be finite and non-negative")));
        }
        let twice = 2.0 * value;
        if (twice - twice.round()).abs() > 1e-12 {
            return Err(Error::invalid(format!("spin {value} is not a multiple of 1/2")));
        }
        Ok(Spin(twice.round() as u32))
    }

    pub fn twice(self) -> u32 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub fn multiplicity(self) -> usize {
        self.0 as usize + 1
    }

    /// Projections `+j, j−1, …, −j`.
    pub fn projections(self) -> impl Iterator<Item = Projection> + Clone {
        let j = self.0 as i32;
        (0..=self.0 as i32).map(move |k| Projection(j - 2 * k))
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_multiple_of(2) {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

/// A magnetic quantum number (integer or half-integer), stored as twice its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Projection(i32);

impl Projection {
    pub const fn from_twice(twice: i32) -> Self {
        Projection(twice)
    }

    pub fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }
}

impl fmt::Display for Projection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

/// Effective-Hamiltonian parameters for one electronic state.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinParams {
    pub electron_spin: Spin,
    pub nuclear_spin: Spin,
    pub g_parallel: f64,
    pub g_perp: f64,
    /// Axial hyperfine constant `A` (MHz).
    pub a_parallel: f64,
    /// Transverse hyperfine constant `B` (MHz).
    pub b_perp: f64,
    /// Quadrupole constant `P` (MHz).
    pub quadrupole: f64,
    /// Bohr magneton in MHz/mT.
    pub mu_b: f64,
}

impl SpinParams {
    /// ¹⁴³Nd³⁺ in Y⁷LiF₄, ⁴I₉/₂(1) ground doublet.
    pub fn nd143_ground() -> Self {
        SpinParams {
            electron_spin: Spin::HALF,
            nuclear_spin: Spin::from_twice(7),
            g_parallel: 1.987,
            g_perp: 2.554,
            a_parallel: -590.0,
            b_perp: -789.0,
            quadrupole: 0.0,
            mu_b: MU_B_ROUNDED,
        }
    }

    /// ¹⁴³Nd³⁺ in Y⁷LiF₄, ⁴F₃/₂(1) excited doublet. `g_perp` is not known and left at zero.
    pub fn nd143_excited() -> Self {
        SpinParams {
            electron_spin: Spin::HALF,
            nuclear_spin: Spin::from_twice(7),
            g_parallel: 0.18,
            g_perp: 0.0,
            a_parallel: -257.0,
            b_perp: -456.0,
            quadrupole: 0.0,
            mu_b: MU_B_ROUNDED,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.electron_spin.twice() < 1 {
            return Err(Error::invalid("electron spin S must be at least 1/2"));
        }
        let scalars = [
            ("g_par", self.g_parallel),
            ("g_perp", self.g_perp),
            ("A", self.a_parallel),
            ("B_hf", self.b_perp),
            ("P", self.quadrupole),
            ("mu_B", self.mu_b),
        ];
        for (name, v) in scalars {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} = {v} is not finite")));
            }
        }
        if self.mu_b <= 0.0 {
            return Err(Error::invalid(format!("mu_B = {} must be positive", self.mu_b)));
        }
        Ok(())
    }

    pub fn basis(&self) -> ProductBasis {
        ProductBasis { electron: self.electron_spin, nuclear: self.nuclear_spin }
    }

    pub fn dimension(&self) -> usize {
        self.basis().dimension()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Applied dc field in mT; `z` is the crystal c axis.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl FieldVector {
    pub const ZERO: FieldVector = FieldVector { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        FieldVector { x, y, z }
    }

    pub const fn longitudinal(z: f64) -> Self {
        FieldVector { x: 0.0, y: 0.0, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        FieldVector { x: a[0], y: a[1], z: a[2] }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn component(self, axis: Axis) -> f64 {
        self.to_array()[axis.index()]
    }

    pub fn with_component(self, axis: Axis, value: f64) -> Self {
        let mut a = self.to_array();
        a[axis.index()] = value;
        Self::from_array(a)
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl std::ops::Add for FieldVector {
    type Output = FieldVector;
    fn add(self, o: FieldVector) -> FieldVector {
        FieldVector::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for FieldVector {
    type Output = FieldVector;
    fn sub(self, o: FieldVector) -> FieldVector {
        FieldVector::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Mul<f64> for FieldVector {
    type Output = FieldVector;
    fn mul(self, s: f64) -> FieldVector {
        FieldVector::new(self.x * s, self.y * s, self.z * s)
    }
}

/// The `|M_I, M_S⟩` product basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProductBasis {
    pub electron: Spin,
    pub nuclear: Spin,
}

impl ProductBasis {
    pub fn dimension(&self) -> usize {
        self.electron.multiplicity() * self.nuclear.multiplicity()
    }

    /// `(M_I, M_S)` of basis vector `index`.
    pub fn state(&self, index: usize) -> (Projection, Projection) {
        let ns = self.electron.multiplicity();
        let (ii, is) = (index / ns, index % ns);
        (
            Projection(self.nuclear.twice() as i32 - 2 * ii as i32),
            Projection(self.electron.twice() as i32 - 2 * is as i32),
        )
    }

    pub fn index(&self, m_i: Projection, m_s: Projection) -> Option<usize> {
        let ii = self.nuclear.twice() as i32 - m_i.0;
        let is = self.electron.twice() as i32 - m_s.0;
        let in_range = |k: i32, j: u32| k >= 0 && k <= 2 * j as i32 && k % 2 == 0;
        if !in_range(ii, self.nuclear.twice()) || !in_range(is, self.electron.twice()) {
            return None;
        }
        Some((ii / 2) as usize * self.electron.multiplicity() + (is / 2) as usize)
    }
}

/// Cartesian spin matrices `(Jx, Jy, Jz)` for spin `j`, rows ordered `m = +j … −j`.
pub fn spin_matrices(j: Spin) -> [CMatrix; 3] {
    let n = j.multiplicity();
    let jv = j.value();
    let ms: Vec<f64> = j.projections().map(Projection::value).collect();
    let mut jp = CMatrix::zeros(n, n);
    for k in 1..n {
        let m = ms[k];
        jp[(k - 1, k)] = Complex64::new((jv * (jv + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
    }
    let jm = jp.adjoint();
    let jx = (&jp + &jm) * Complex64::new(0.5, 0.0);
    let jy = (&jp - &jm) * Complex64::new(0.0, -0.5);
    let jz = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        ms.iter().map(|&m| Complex64::new(m, 0.0)),
    ));
    [jx, jy, jz]
}

/// Raising operator `J+` for spin `j`.
pub fn raising(j: Spin) -> CMatrix {
    let [jx, jy, _] = spin_matrices(j);
    jx + jy * Complex64::new(0.0, 1.0)
}

/// A square complex matrix that is Hermitian to within [`HERMITICITY_TOL`].
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    matrix: CMatrix,
    basis: Option<ProductBasis>,
}

impl HermitianMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), found: matrix.ncols() });
        }
        let residual = hermiticity_residual(&matrix);
        if residual > HERMITICITY_TOL {
            return Err(Error::NonHermitian { residual });
        }
        Ok(HermitianMatrix { matrix, basis: None })
    }

    /// Attaches the spin basis the matrix is written in.
    pub fn with_basis(mut self, basis: ProductBasis) -> Result<Self> {
        if basis.dimension() != self.dimension() {
            return Err(Error::DimensionMismatch { expected: basis.dimension(), found: self.dimension() });
        }
        self.basis = Some(basis);
        Ok(self)
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn basis(&self) -> Option<ProductBasis> {
        self.basis
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn residual(&self) -> f64 {
        hermiticity_residual(&self.matrix)
    }
}

/// `‖H − H†‖_F / ‖H‖_F`, zero for the zero matrix.
pub fn hermiticity_residual(m: &CMatrix) -> f64 {
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (m - m.adjoint()).norm() / norm
}

/// Precomputed operator pieces of the Hamiltonian for one parameter set.
///
/// `H(B) = H₀ + Bx Zx + By Zy + Bz Zz`, so the Zeeman matrices are also the
/// exact field derivatives `∂H/∂Bᵢ` used for Hellmann–Feynman gradients.
#[derive(Clone, Debug)]
pub struct SpinSystem {
    params: SpinParams,
    basis: ProductBasis,
    zero_field: CMatrix,
    zeeman: [CMatrix; 3],
}

impl SpinSystem {
    pub fn new(params: &SpinParams) -> Result<Self> {
        params.validate()?;
        let basis = params.basis();
        let [sx, sy, sz] = spin_matrices(params.electron_spin);
        let [ix, iy, iz] = spin_matrices(params.nuclear_spin);
        let e_s = CMatrix::identity(sx.nrows(), sx.nrows());
        let e_i = CMatrix::identity(ix.nrows(), ix.nrows());
        let c = |v: f64| Complex64::new(v, 0.0);

        let i_val = params.nuclear_spin.value();
        let quad = &iz * &iz - &e_i * c(i_val * (i_val + 1.0) / 3.0);
        let zero_field = iz.kronecker(&sz) * c(params.a_parallel)
            + (ix.kronecker(&sx) + iy.kronecker(&sy)) * c(params.b_perp)
            + quad.kronecker(&e_s) * c(params.quadrupole);
        let perp = params.g_perp * params.mu_b;
        let zeeman = [
            e_i.kronecker(&sx) * c(perp),
            e_i.kronecker(&sy) * c(perp),
            e_i.kronecker(&sz) * c(params.g_parallel * params.mu_b),
        ];
        Ok(SpinSystem { params: params.clone(), basis, zero_field, zeeman })
    }

    pub fn params(&self) -> &SpinParams {
        &self.params
    }

    pub fn basis(&self) -> ProductBasis {
        self.basis
    }

    pub fn dimension(&self) -> usize {
        self.basis.dimension()
    }

    /// `∂H/∂Bᵢ` in MHz/mT.
    pub fn field_derivative(&self, axis: Axis) -> &CMatrix {
        &self.zeeman[axis.index()]
    }

    pub fn hamiltonian(&self, field: &FieldVector) -> Result<HermitianMatrix> {
        if !field.is_finite() {
            return Err(Error::invalid(format!("field {field:?} is not finite")));
        }
        let mut h = self.zero_field.clone();
        for axis in Axis::ALL {
            let b = field.component(axis);
            if b != 0.0 {
                h += &self.zeeman[axis.index()] * Complex64::new(b, 0.0);
            }
        }
        // symmetrise to remove rounding asymmetry from the Sy products
        let h = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
        Ok(HermitianMatrix { matrix: h, basis: Some(self.basis) })
    }

    pub fn levels(&self, field: &FieldVector) -> Result<LevelSet> {
        diagonalize(&self.hamiltonian(field)?)
    }
}

pub fn build_hamiltonian(params: &SpinParams, field: &FieldVector) -> Result<HermitianMatrix> {
    SpinSystem::new(params)?.hamiltonian(field)
}

/// Energies (ascending, MHz) and unit eigenvectors stored as matrix columns.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSet {
    energies: Vec<f64>,
    vectors: CMatrix,
    basis: Option<ProductBasis>,
}

/// One labelled eigenstate borrowed from a [`LevelSet`].
#[derive(Clone, Copy, Debug)]
pub struct Level<'a> {
    pub label: usize,
    pub energy: f64,
    set: &'a LevelSet,
}

impl<'a> Level<'a> {
    pub fn vector(&self) -> nalgebra::DVectorView<'a, Complex64> {
        self.set.vectors.column(self.label - 1)
    }

    pub fn basis(&self) -> Option<ProductBasis> {
        self.set.basis
    }
}

impl LevelSet {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Eigenvectors as columns, column `k` belonging to label `k + 1`.
    pub fn vectors(&self) -> &CMatrix {
        &self.vectors
    }

    pub fn basis(&self) -> Option<ProductBasis> {
        self.basis
    }

    pub fn energy(&self, label: usize) -> Result<f64> {
        Ok(self.level(label)?.energy)
    }

    /// Level by 1-based label (ascending energy).
    pub fn level(&self, label: usize) -> Result<Level<'_>> {
        if label == 0 || label > self.len() {
            return Err(Error::LabelOutOfRange { label, dimension: self.len() });
        }
        Ok(Level { label, energy: self.energies[label - 1], set: self })
    }

    pub fn levels(&self) -> impl Iterator<Item = Level<'_>> {
        (1..=self.len()).map(move |label| Level { label, energy: self.energies[label - 1], set: self })
    }

    /// `‖V V† − 1‖_max`.
    pub fn unitarity_residual(&self) -> f64 {
        let n = self.len();
        let p = &self.vectors * self.vectors.adjoint();
        (p - CMatrix::identity(n, n)).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Full eigen-decomposition with energies ascending and a fixed gauge.
///
/// Within a cluster of eigenvalues closer than [`DEGENERACY_GAP`] the vectors
/// are replaced by a canonical orthonormal basis of the cluster subspace, so
/// the result depends only on the subspace. Each vector is then rotated so its
/// first largest-magnitude component is real and non-negative.
pub fn diagonalize(h: &HermitianMatrix) -> Result<LevelSet> {
    let residual = h.residual();
    if residual > HERMITICITY_TOL {
        return Err(Error::NonHermitian { residual });
    }
    let n = h.dimension();
    let eig = nalgebra::SymmetricEigen::new(h.matrix().clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let energies: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }

    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && energies[end] - energies[end - 1] < DEGENERACY_GAP {
            end += 1;
        }
        if end - start > 1 {
            canonicalize_cluster(&mut vectors, start, end);
        }
        start = end;
    }
    for k in 0..n {
        let mut col = vectors.column(k).clone_owned();
        let norm = col.norm();
        col /= Complex64::new(norm, 0.0);
        fix_gauge(&mut col);
        vectors.set_column(k, &col);
    }
    Ok(LevelSet { energies, vectors, basis: h.basis() })
}

/// Replaces columns `start..end` by an orthonormal basis built from the
/// projector onto their span: projected unit vectors are picked greedily by
/// largest remaining norm, lowest index first on ties.
fn canonicalize_cluster(vectors: &mut CMatrix, start: usize, end: usize) {
    let n = vectors.nrows();
    let span = vectors.columns(start, end - start).clone_owned();
    let projector = &span * span.adjoint();
    let mut chosen: Vec<nalgebra::DVector<Complex64>> = Vec::with_capacity(end - start);
    for _ in start..end {
        let mut best: Option<(f64, nalgebra::DVector<Complex64>)> = None;
        for j in 0..n {
            let mut v = projector.column(j).clone_owned();
            for c in &chosen {
                let overlap = c.dotc(&v);
                v -= c * overlap;
            }
            let norm = v.norm();
            if best.as_ref().is_none_or(|(b, _)| norm > *b + 1e-12) {
                best = Some((norm, v));
            }
        }
        let (norm, v) = best.expect("cluster is non-empty");
        chosen.push(v / Complex64::new(norm, 0.0));
    }
    for (k, v) in chosen.into_iter().enumerate() {
        vectors.set_column(start + k, &v);
    }
}

fn fix_gauge(v: &mut nalgebra::DVector<Complex64>) {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = v.iter().position(|z| z.norm() >= max - 1e-9).unwrap_or(0);
    let phase = v[pivot].conj() / v[pivot].norm();
    *v *= phase;
    v[pivot] = Complex64::new(v[pivot].norm(), 0.0);
}

/// One `|M_I, M_S⟩` component of an eigenvector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Component {
    pub m_i: Projection,
    pub m_s: Projection,
    pub amplitude: Complex64,
}

/// Basis components with `|amplitude| > threshold`, largest first.
pub fn state_composition(level: &Level<'_>, threshold: f64) -> Result<Vec<Component>> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::invalid(format!("composition threshold {threshold} outside [0, 1)")));
    }
    let basis = level
        .basis()
        .ok_or_else(|| Error::invalid("level set carries no spin basis"))?;
    let mut out: Vec<Component> = level
        .vector()
        .iter()
        .enumerate()
        .filter(|(_, a)| a.norm() > threshold)
        .map(|(k, &amplitude)| {
            let (m_i, m_s) = basis.state(k);
            Component { m_i, m_s, amplitude }
        })
        .collect();
    // stable sort keeps basis order among equal magnitudes
    out.sort_by(|a, b| b.amplitude.norm().total_cmp(&a.amplitude.norm()));
    Ok(out)
}
