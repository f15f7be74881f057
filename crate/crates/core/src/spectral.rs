//! Spectra of the two Laplacian realizations and the operators built from
//! them.
//!
//! All matrices live in `V'` coordinates. The ℓ² realization is `Θ'` with the
//! Euclidean inner product. The energy realization `L L*` has the same
//! coordinate matrix but is selfadjoint for the Gram matrix `Θ'`; it is
//! diagonalized in orthonormal coordinates `z = L_cᵀ u` where `Θ' = L_c L_cᵀ`,
//! which turns it into `L_cᵀ L_c`.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::energy::{grounded_laplacian, EnergySpace, EnergyVector};
use crate::error::{check_len, Error, Result};
use crate::graph::{ChainProfile, Network};
use crate::laplacian::{build_l2_laplacian, krein_apply, weighted_gradient};
use crate::linalg::{
    adjoint, gram_eigen_one_sided, jacobi_eigen, lanczos, op_norm_between, sym_function, Geometry, SparseSym,
};

/// Up to this dimension the dense backends are Jacobi methods.
const JACOBI_LIMIT: usize = 400;
/// Above this dimension eigenpairs come from Lanczos.
const DENSE_LIMIT: usize = 2000;

/// Which inner product an operator is selfadjoint for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerKind {
    L2,
    Energy,
}

impl FromStr for InnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(InnerKind::L2),
            "energy" => Ok(InnerKind::Energy),
            other => Err(Error::Precondition(format!("unknown realization {other:?} (l2 | energy)"))),
        }
    }
}

impl fmt::Display for InnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InnerKind::L2 => "l2",
            InnerKind::Energy => "energy",
        })
    }
}

/// Options for the iterative backend.
#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    pub lanczos_steps: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { lanczos_steps: 200, seed: 0 }
    }
}

/// Eigenpairs of one realization, eigenvectors as columns in `V'`
/// coordinates, orthonormal for `inner`.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    residuals: Vec<f64>,
    inner: InnerKind,
    complete: bool,
}

impl EigenSystem {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn vector(&self, k: usize) -> DVector<f64> {
        self.eigenvectors.column(k).into_owned()
    }

    /// `‖Tv − λv‖` per pair, in the declared norm.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn inner(&self) -> InnerKind {
        self.inner
    }

    /// False when only residual-accepted Ritz pairs were kept.
    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// Residual bound `1e-8 · max(1, ‖T‖)`.
    pub fn residual_tolerance(&self) -> f64 {
        let top = self.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        1e-8 * top.max(1.0)
    }

    /// `max |⟨e_i, e_j⟩ − δ_ij|` in the declared inner product.
    pub fn orthonormality_defect(&self, net: &Network) -> f64 {
        let theta = grounded_laplacian(net);
        let k = self.len();
        let images: Vec<DVector<f64>> = (0..k)
            .map(|j| {
                let v = self.vector(j);
                match self.inner {
                    InnerKind::L2 => v,
                    InnerKind::Energy => DVector::from_vec(theta.matvec(v.as_slice())),
                }
            })
            .collect();
        let mut worst = 0.0_f64;
        for i in 0..k {
            let vi = self.eigenvectors.column(i);
            for (j, img) in images.iter().enumerate().skip(i) {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((vi.dot(img) - target).abs());
            }
        }
        worst
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,lambda,residual\n");
        for (i, (l, r)) in self.eigenvalues.iter().zip(&self.residuals).enumerate() {
            let _ = writeln!(out, "{i},{l:?},{r:?}");
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "inner": self.inner,
            "complete": self.complete,
            "eigenvalues": self.eigenvalues,
            "residuals": self.residuals,
        })
    }
}

fn dense_symmetric_eigen(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if m.nrows() <= JACOBI_LIMIT {
        return jacobi_eigen(m);
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), m.nrows(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

fn residuals_of(theta: &SparseSym, values: &[f64], vectors: &DMatrix<f64>, inner: InnerKind) -> Vec<f64> {
    values
        .iter()
        .enumerate()
        .map(|(k, &l)| {
            let v = vectors.column(k);
            let tv = theta.matvec(v.as_slice());
            let r: Vec<f64> = tv.iter().zip(v.iter()).map(|(a, b)| a - l * b).collect();
            match inner {
                InnerKind::L2 => crate::linalg::norm(&r),
                InnerKind::Energy => crate::linalg::dot(&r, &theta.matvec(&r)).max(0.0).sqrt(),
            }
        })
        .collect()
}

fn lanczos_system(net: &Network, inner: InnerKind, opts: EigenOptions) -> Result<EigenSystem> {
    let theta = grounded_laplacian(net);
    let dim = theta.dim();
    let res = match inner {
        InnerKind::L2 => {
            lanczos(dim, |x| theta.matvec(x), crate::linalg::dot, opts.lanczos_steps, opts.seed)?
        }
        InnerKind::Energy => lanczos(
            dim,
            |x| {
                let u = EnergyVector::from_reduced(net, x).expect("dimension matches");
                krein_apply(net, &u).expect("dimension matches").reduced()
            },
            |a, b| crate::linalg::dot(a, &theta.matvec(b)),
            opts.lanczos_steps,
            opts.seed,
        )?,
    };
    let top = res.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    let keep: Vec<usize> = (0..res.values.len()).filter(|&i| res.residuals[i] <= 1e-8 * top).collect();
    if keep.is_empty() {
        return Err(Error::NonConvergence {
            iterations: res.steps,
            residual: res.residuals.iter().copied().fold(f64::INFINITY, f64::min),
        });
    }
    let eigenvectors = DMatrix::from_fn(dim, keep.len(), |r, c| res.vectors[keep[c]][r]);
    Ok(EigenSystem {
        eigenvalues: keep.iter().map(|&i| res.values[i]).collect(),
        residuals: keep.iter().map(|&i| res.residuals[i]).collect(),
        eigenvectors,
        inner,
        complete: keep.len() == dim,
    })
}

/// Eigen-decomposition of `Θ'` as an operator on `ℓ²(V')`.
pub fn eig_l2(net: &Network) -> Result<EigenSystem> {
    eig_l2_with(net, EigenOptions::default())
}

pub fn eig_l2_with(net: &Network, opts: EigenOptions) -> Result<EigenSystem> {
    net.ensure_valid()?;
    if net.reduced_dim() > DENSE_LIMIT {
        return lanczos_system(net, InnerKind::L2, opts);
    }
    let lap = build_l2_laplacian(net);
    let (eigenvalues, eigenvectors) = if lap.dim() <= JACOBI_LIMIT {
        // Θ' = dᵀd, diagonalized through the columns of d
        gram_eigen_one_sided(&weighted_gradient(net))?
    } else {
        dense_symmetric_eigen(&lap.to_dense())?
    };
    let residuals = residuals_of(lap.sparse(), &eigenvalues, &eigenvectors, InnerKind::L2);
    Ok(EigenSystem { eigenvalues, eigenvectors, residuals, inner: InnerKind::L2, complete: true })
}

/// Coordinate matrix of `L L*` on `H_E`, one column per reduced basis
/// function, built by composing the two maps.
pub fn krein_matrix(net: &Network) -> Result<DMatrix<f64>> {
    let dim = net.reduced_dim();
    let mut t = DMatrix::zeros(dim, dim);
    let mut e = vec![0.0; dim];
    for j in 0..dim {
        e[j] = 1.0;
        let col = krein_apply(net, &EnergyVector::from_reduced(net, &e)?)?.reduced();
        t.set_column(j, &DVector::from_vec(col));
        e[j] = 0.0;
    }
    Ok(t)
}

/// Eigen-decomposition of the Krein realization `L L*` on `H_E`, with
/// eigenvectors orthonormal in the energy inner product.
pub fn eig_energy(net: &Network) -> Result<EigenSystem> {
    eig_energy_with(net, EigenOptions::default())
}

pub fn eig_energy_with(net: &Network, opts: EigenOptions) -> Result<EigenSystem> {
    net.ensure_valid()?;
    if net.reduced_dim() > DENSE_LIMIT {
        return lanczos_system(net, InnerKind::Energy, opts);
    }
    let theta = grounded_laplacian(net);
    let geom = EnergySpace::new(net)?.geometry()?;
    let t = krein_matrix(net)?;
    let l = geom.factor();
    let dense_theta = theta.to_dense();
    // When T agrees with the Gram matrix Θ' = L Lᵀ, its orthonormal-coordinate
    // matrix Lᵀ T L⁻ᵀ is exactly Lᵀ L, which one-sided Jacobi on L
    // diagonalizes to high relative accuracy.
    let gram_form = (&t - &dense_theta).amax() <= 64.0 * f64::EPSILON * dense_theta.amax();
    let (eigenvalues, z) = if gram_form && t.nrows() <= JACOBI_LIMIT {
        gram_eigen_one_sided(l)?
    } else {
        let s = geom.op_to_ortho(&t);
        dense_symmetric_eigen(&((&s + s.transpose()) * 0.5))?
    };
    let mut eigenvectors = DMatrix::zeros(z.nrows(), z.ncols());
    for k in 0..z.ncols() {
        eigenvectors.set_column(k, &geom.from_ortho(&z.column(k).into_owned()));
    }
    let residuals = residuals_of(&theta, &eigenvalues, &eigenvectors, InnerKind::Energy);
    Ok(EigenSystem { eigenvalues, eigenvectors, residuals, inner: InnerKind::Energy, complete: true })
}

/// Pairing of the nonzero spectra of the two realizations.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralComparison {
    pub matched: bool,
    /// `max |a − b| / |a|` over the sorted pairs.
    pub max_dev: f64,
    pub zero_l2: bool,
    pub zero_energy: bool,
    pub tol: f64,
    pub pairs: Vec<(f64, f64)>,
    pub max_residual_l2: f64,
    pub max_residual_energy: f64,
    pub note: String,
}

impl SpectralComparison {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plain data serializes")
    }
}

fn split_zero(values: &[f64]) -> (bool, Vec<f64>) {
    let top = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let cut = 1e-12 * top.max(1.0);
    let nonzero: Vec<f64> = values.iter().copied().filter(|v| v.abs() > cut).collect();
    (nonzero.len() < values.len(), nonzero)
}

/// Sorted nonzero eigenvalues of `Θ'` on `ℓ²(V')` and of `L L*` on `H_E`,
/// paired and compared with the relative tolerance `|a − b| ≤ tol·|a|`.
pub fn compare_spectra(net: &Network, tol: f64) -> Result<SpectralComparison> {
    let l2 = eig_l2(net)?;
    let en = eig_energy(net)?;
    let (zero_l2, a) = split_zero(l2.eigenvalues());
    let (zero_energy, b) = split_zero(en.eigenvalues());
    if a.len() != b.len() {
        return Err(Error::Numerical(format!(
            "nonzero spectra have different sizes: {} (l2) vs {} (energy)",
            a.len(),
            b.len()
        )));
    }
    let max_dev = a.iter().zip(&b).map(|(x, y)| (x - y).abs() / x.abs()).fold(0.0, f64::max);
    Ok(SpectralComparison {
        matched: max_dev <= tol,
        max_dev,
        zero_l2,
        zero_energy,
        tol,
        pairs: a.into_iter().zip(b).collect(),
        max_residual_l2: l2.max_residual(),
        max_residual_energy: en.max_residual(),
        note: "zero flags describe this finite truncation only".into(),
    })
}

/// The polar factor `U` of `L: ℓ²(V') → H_E` together with both square-root
/// factors and their defects.
#[derive(Debug, Clone)]
pub struct PolarIsometry {
    /// `U = L (L*L)^{-1/2}` in coordinates.
    pub u: DMatrix<f64>,
    /// `U*` computed as the adjoint between the two geometries.
    pub u_adjoint: DMatrix<f64>,
    /// `(L*L)^{1/2}` on `ℓ²(V')`.
    pub sqrt_l2: DMatrix<f64>,
    /// `(LL*)^{1/2}` on `H_E`.
    pub sqrt_energy: DMatrix<f64>,
    pub energy: Geometry,
    /// `‖U*U − I‖` on `ℓ²(V')`.
    pub isometry_defect: f64,
    /// `‖L − U (L*L)^{1/2}‖` as a map `ℓ² → H_E`.
    pub right_factor_defect: f64,
    /// `‖L − (LL*)^{1/2} U‖` as a map `ℓ² → H_E`.
    pub left_factor_defect: f64,
    /// `‖P² − P‖ + ‖P − P*‖` for `P = UU*` in `H_E`.
    pub projection_defect: f64,
}

pub fn polar_isometry(net: &Network) -> Result<PolarIsometry> {
    net.ensure_valid()?;
    let dim = net.reduced_dim();
    let euclid = Geometry::euclidean(dim);
    let energy = EnergySpace::new(net)?.geometry()?;
    let l = DMatrix::<f64>::identity(dim, dim);
    let l_star = adjoint(&l, &euclid, &energy);
    let lsl = &l_star * &l;
    let lsl = (&lsl + lsl.transpose()) * 0.5;
    let sqrt_l2 = sym_function(&lsl, f64::sqrt)?;
    let inv_sqrt = sym_function(&lsl, |x| 1.0 / x.sqrt())?;
    let u = &l * inv_sqrt;
    let u_adjoint = adjoint(&u, &euclid, &energy);

    let sqrt_energy = energy.op_function(&(&l * &l_star), f64::sqrt)?;
    let id = DMatrix::<f64>::identity(dim, dim);
    let isometry_defect = euclid.op_norm(&(&u_adjoint * &u - &id));
    let right_factor_defect = op_norm_between(&(&l - &u * &sqrt_l2), &euclid, &energy);
    let left_factor_defect = op_norm_between(&(&l - &sqrt_energy * &u), &euclid, &energy);
    let p = &u * &u_adjoint;
    let projection_defect = energy.op_norm(&(&p * &p - &p)) + energy.selfadjoint_defect(&p);
    Ok(PolarIsometry {
        u,
        u_adjoint,
        sqrt_l2,
        sqrt_energy,
        energy,
        isometry_defect,
        right_factor_defect,
        left_factor_defect,
        projection_defect,
    })
}

/// The contraction `B = U (Θ' + I)^{-1} U*` on `H_E`.
#[derive(Debug, Clone)]
pub struct KreinContraction {
    pub b: DMatrix<f64>,
    /// Eigenvalues of `B` in the energy geometry, ascending.
    pub eigenvalues: Vec<f64>,
    pub selfadjoint_defect: f64,
    /// `‖B − (LL* + I)^{-1}‖` against the resolvent taken directly.
    pub resolvent_defect: f64,
    space: EnergySpace,
}

impl KreinContraction {
    pub fn apply(&self, u: &EnergyVector) -> Result<EnergyVector> {
        let net = self.space.network();
        check_len(net.n_vertices(), u.len())?;
        let y = &self.b * u.reduced_vector();
        EnergyVector::from_reduced(net, y.as_slice())
    }

    /// `‖B(φ + LL*φ) − φ‖_E`.
    pub fn identity_residual(&self, phi: &EnergyVector) -> Result<f64> {
        let net = self.space.network();
        let lhs = self.apply(&phi.axpy(1.0, &krein_apply(net, phi)?))?;
        Ok(self.space.norm_sq(&lhs.sub(phi)).max(0.0).sqrt())
    }

    /// Largest [`KreinContraction::identity_residual`] over all edge dipoles.
    pub fn dipole_span_residual(&self) -> Result<f64> {
        let mut worst = 0.0_f64;
        for e in self.space.network().edges() {
            let v = self.space.dipole(e.x, e.y)?;
            worst = worst.max(self.identity_residual(&v)?);
        }
        Ok(worst)
    }

    pub fn space(&self) -> &EnergySpace {
        &self.space
    }
}

pub fn krein_contraction(net: &Network) -> Result<KreinContraction> {
    let polar = polar_isometry(net)?;
    let dim = net.reduced_dim();
    let theta = grounded_laplacian(net).to_dense();
    let shifted = &theta + DMatrix::<f64>::identity(dim, dim);
    let resolvent = sym_function(&shifted, |x| 1.0 / x)?;
    let b = &polar.u * resolvent * &polar.u_adjoint;
    let direct = polar.energy.op_function(&krein_matrix(net)?, |x| 1.0 / (1.0 + x))?;
    let resolvent_defect = polar.energy.op_norm(&(&b - direct));
    let eigenvalues = polar.energy.op_eigenvalues(&b)?;
    let selfadjoint_defect = polar.energy.selfadjoint_defect(&b);
    Ok(KreinContraction {
        b,
        eigenvalues,
        selfadjoint_defect,
        resolvent_defect,
        space: EnergySpace::new(net)?,
    })
}

/// Atoms `(λ_i, |⟨e_i, u⟩|²)` of the spectral measure of a vector, with the
/// directly computed quantities its moments should reproduce.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralMeasure {
    pub atoms: Vec<(f64, f64)>,
    /// `‖u‖²`.
    pub norm_sq: f64,
    /// `⟨u, Tu⟩`.
    pub form: f64,
    /// `‖Tu‖²`.
    pub image_norm_sq: f64,
}

impl SpectralMeasure {
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().fold(0.0, |m, a| m + a.1)
    }

    /// `Σ λᵏ w`.
    pub fn moment(&self, k: i32) -> f64 {
        self.atoms.iter().map(|&(l, w)| l.powi(k) * w).sum()
    }

    /// Mass of the half-open interval `(a, b]`.
    pub fn interval_mass(&self, a: f64, b: f64) -> f64 {
        self.atoms.iter().filter(|&&(l, _)| l > a && l <= b).fold(0.0, |m, a| m + a.1)
    }

    /// Largest relative gap among the mass, first and second moment checks.
    pub fn moment_defect(&self) -> f64 {
        [(self.total_mass(), self.norm_sq), (self.moment(1), self.form), (self.moment(2), self.image_norm_sq)]
            .iter()
            .map(|(got, want)| (got - want).abs() / want.abs().max(1.0))
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,weight\n");
        for (l, w) in &self.atoms {
            let _ = writeln!(out, "{l:?},{w:?}");
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plain data serializes")
    }
}

/// Spectral measure of `u` (given in `V'` coordinates) for the chosen
/// realization.
pub fn spectral_measure(net: &Network, which: InnerKind, u: &[f64]) -> Result<SpectralMeasure> {
    let sys = match which {
        InnerKind::L2 => eig_l2(net)?,
        InnerKind::Energy => eig_energy(net)?,
    };
    spectral_measure_of(net, &sys, u)
}

/// As [`spectral_measure`], reusing a computed eigen-system.
pub fn spectral_measure_of(net: &Network, sys: &EigenSystem, u: &[f64]) -> Result<SpectralMeasure> {
    check_len(net.reduced_dim(), u.len())?;
    if u.iter().all(|&x| x == 0.0) {
        return Err(Error::Precondition("spectral measure of the zero vector".into()));
    }
    let theta = grounded_laplacian(net);
    let ip = |a: &[f64], b: &[f64]| match sys.inner() {
        InnerKind::L2 => crate::linalg::dot(a, b),
        InnerKind::Energy => crate::linalg::dot(a, &theta.matvec(b)),
    };
    let tu = theta.matvec(u);
    let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(sys.len());
    for (k, &l) in sys.eigenvalues().iter().enumerate() {
        let e = sys.vector(k);
        let w = ip(e.as_slice(), u).powi(2);
        match atoms.last_mut() {
            Some(last) if (last.0 - l).abs() <= 1e-12 * l.abs().max(1.0) => last.1 += w,
            _ => atoms.push((l, w)),
        }
    }
    Ok(SpectralMeasure { atoms, norm_sq: ip(u, u), form: ip(u, &tu), image_norm_sq: ip(&tu, &tu) })
}

/// Outcome of the defect recursion on a half-line chain.
#[derive(Debug, Clone, Serialize)]
pub struct DefectProbe {
    pub profile: String,
    pub n_max: usize,
    /// `S_N` for `N = 1..=n_max`.
    pub partial_sums: Vec<f64>,
    /// `S_{n_max} − S_{n_max/2}`.
    pub tail: f64,
    pub plateau: bool,
    pub threshold: f64,
}

impl DefectProbe {
    pub fn final_sum(&self) -> f64 {
        *self.partial_sums.last().expect("n_max ≥ 10")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,partial_sum\n");
        for (i, s) in self.partial_sums.iter().enumerate() {
            let _ = writeln!(out, "{},{s:?}", i + 1);
        }
        out
    }
}

/// Solves `(Δu)(n) = i·u(n)` forward from `u(0) = 1` on the half-line chain
/// with the given profile and reports the partial energy sums
/// `S_N = Σ_{n<N} c_n |u(n+1) − u(n)|²`.
///
/// The plateau flag is set when `S_N − S_{N/2} ≤ 1e-6·S_N` at `N = n_max`.
pub fn defect_probe_chain(profile: ChainProfile, n_max: usize) -> Result<DefectProbe> {
    if n_max < 10 {
        return Err(Error::Precondition(format!("insufficient horizon: n_max = {n_max} < 10")));
    }
    let cond = |n: usize| -> Result<f64> {
        match profile {
            ChainProfile::Unit => Ok(1.0),
            ChainProfile::Geometric(a) if a > 0.0 => Ok(a.powi(n as i32)),
            ChainProfile::Linear => Ok(n as f64 + 1.0),
            other => Err(Error::Precondition(format!("defect probe needs a half-line profile, got {other}"))),
        }
    };
    const GUARD: f64 = 1e300;
    let i = Complex64::i();
    let mut u = Complex64::new(1.0, 0.0);
    // current through the edge (n, n+1): J_n = c_n (u(n+1) − u(n))
    let mut current = Complex64::new(0.0, 0.0);
    let mut sum = 0.0;
    let mut partial_sums = Vec::with_capacity(n_max);
    for n in 0..n_max {
        current -= i * u;
        let c = cond(n)?;
        sum += current.norm_sqr() / c;
        u += current / c;
        if !(u.norm() < GUARD && sum < GUARD) {
            return Err(Error::Numerical(format!("defect recursion overflowed at n = {n}")));
        }
        partial_sums.push(sum);
    }
    let tail = sum - partial_sums[n_max / 2 - 1];
    let threshold = 1e-6 * sum;
    Ok(DefectProbe {
        profile: profile.to_string(),
        n_max,
        partial_sums,
        tail,
        plateau: tail <= threshold,
        threshold,
    })
}
