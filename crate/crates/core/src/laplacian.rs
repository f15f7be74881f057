//! The graph Laplacian in both realizations.
//!
//! In `ℓ²(V')` the Laplacian is the banded matrix `Θ'` (diagonal `c(x)`,
//! off-diagonal `−c_xy`). In the energy space it is realized through the
//! factorization `L L*`, where `L ξ = Σ_x ξ_x δ_x` maps `ℓ²(V')` into the
//! energy space and `L* u = (Δu)|_{V'}`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::energy::{build_frame, EnergySpace, EnergyVector, FrameSystem};
use crate::error::{check_len, Error, Result};
use crate::graph::{Network, VertexId};
use crate::io::format_matrix_market_symmetric;
use crate::linalg::SparseSym;

pub(crate) fn laplacian_values(net: &Network, u: &[f64]) -> Vec<f64> {
    (0..net.n_vertices())
        .map(|x| net.neighbors(VertexId(x)).iter().map(|&(y, c)| c * (u[x] - u[y])).sum())
        .collect()
}

/// `(Δu)(x) = Σ_{y∼x} c_xy (u(x) − u(y))` at every vertex.
pub fn apply_laplacian(net: &Network, u: &[f64]) -> Result<Vec<f64>> {
    check_len(net.n_vertices(), u.len())?;
    Ok(laplacian_values(net, u))
}

/// `C (I − P) u` assembled from the transition weights of the random walk.
pub fn apply_markov_form(net: &Network, u: &[f64]) -> Result<Vec<f64>> {
    check_len(net.n_vertices(), u.len())?;
    (0..net.n_vertices())
        .map(|x| {
            let v = VertexId(x);
            let pu: f64 = net.transition_weights(v)?.iter().map(|&(y, p)| p * u[y.index()]).sum();
            Ok(net.total_conductance(v)? * (u[x] - pu))
        })
        .collect()
}

/// `Θ'` with rows and columns indexed by `V'`.
#[derive(Debug, Clone)]
pub struct LaplacianMatrix {
    vertices: Vec<VertexId>,
    matrix: SparseSym,
}

impl LaplacianMatrix {
    pub fn dim(&self) -> usize {
        self.vertices.len()
    }

    /// Vertex of each row/column.
    pub fn vertices(&self) -> &[VertexId] {
        &self.vertices
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn sparse(&self) -> &SparseSym {
        &self.matrix
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.matrix.to_dense()
    }

    pub fn to_matrix_market(&self) -> String {
        format_matrix_market_symmetric(self.dim(), &self.matrix.lower_triplets())
    }

    /// Dense CSV with a header of vertex labels; only offered below 100
    /// vertices.
    pub fn to_dense_csv(&self, net: &Network) -> Result<String> {
        if net.n_vertices() >= 100 {
            return Err(Error::Precondition(format!(
                "dense CSV export is limited to networks below 100 vertices (got {})",
                net.n_vertices()
            )));
        }
        let mut out = String::from("vertex");
        for &v in &self.vertices {
            let _ = write!(out, ",{}", net.label(v));
        }
        out.push('\n');
        for (i, &v) in self.vertices.iter().enumerate() {
            let _ = write!(out, "{}", net.label(v));
            for j in 0..self.dim() {
                let _ = write!(out, ",{:?}", self.get(i, j));
            }
            out.push('\n');
        }
        Ok(out)
    }
}

/// Assembles `Θ'` entry by entry: `c(x)` on the diagonal and `−c_xy` for
/// adjacent pairs.
pub fn build_l2_laplacian(net: &Network) -> LaplacianMatrix {
    let mut triplets = Vec::new();
    for (i, &x) in net.reduced_vertices().iter().enumerate() {
        triplets.push((i, i, net.total_conductance(x).expect("vertex in range")));
        for &(y, c) in net.neighbors(x) {
            if let Some(j) = net.reduced_index(VertexId(y)) {
                triplets.push((i, j, -c));
            }
        }
    }
    LaplacianMatrix {
        vertices: net.reduced_vertices().to_vec(),
        matrix: SparseSym::from_triplets(net.reduced_dim(), triplets),
    }
}

/// The weighted gradient `d: ℓ²(V') → ℓ²(E)`, `(dξ)_e = √c_xy (ξ(x) − ξ(y))`
/// with `ξ(o) = 0`, so that `Θ' = dᵀd`. Rows follow the network's edge order.
pub fn weighted_gradient(net: &Network) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(net.edges().len(), net.reduced_dim());
    for (k, e) in net.edges().iter().enumerate() {
        let s = e.c.sqrt();
        if let Some(i) = net.reduced_index(e.x) {
            d[(k, i)] = s;
        }
        if let Some(j) = net.reduced_index(e.y) {
            d[(k, j)] = -s;
        }
    }
    d
}

/// `⟨δ_x, δ_y⟩_E`: `c(x)` on the diagonal, `−c_xy` for neighbours, else 0.
pub fn delta_inner(net: &Network, x: VertexId, y: VertexId) -> Result<f64> {
    net.check_vertex(x)?;
    net.check_vertex(y)?;
    if x == y {
        return net.total_conductance(x);
    }
    Ok(net.conductance(x, y).map_or(0.0, |c| -c))
}

/// `c(x) v_x − Σ_{y∼x} c_xy v_y` evaluated from dipole solves, for `x ∈ V'`.
pub fn delta_in_dipole_basis(space: &EnergySpace, x: VertexId) -> Result<EnergyVector> {
    let net = space.network();
    net.check_vertex(x)?;
    if x == net.base_point() {
        return Err(Error::Precondition("δ expansion is over V'; got the base point".into()));
    }
    let mut out = space.based_dipole(x)?.scaled(net.total_conductance(x)?);
    for &(y, c) in net.neighbors(x) {
        out = out.axpy(-c, &space.based_dipole(VertexId(y))?);
    }
    Ok(out)
}

/// Element of `ℓ²(V')`, indexed like [`Network::reduced_vertices`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct L2Vector(pub Vec<f64>);

impl L2Vector {
    pub fn zeros(net: &Network) -> Self {
        Self(vec![0.0; net.reduced_dim()])
    }

    /// Unit vector at `x ∈ V'`.
    pub fn unit(net: &Network, x: VertexId) -> Result<Self> {
        let i = net
            .reduced_index(x)
            .ok_or_else(|| Error::Precondition("ℓ²(V') has no coordinate at the base point".into()))?;
        let mut v = Self::zeros(net);
        v.0[i] = 1.0;
        Ok(v)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        crate::linalg::dot(&self.0, &other.0)
    }
}

/// `L ξ = Σ_x ξ_x δ_x`, read as a function gauge-fixed at the base point.
pub fn op_l_apply(net: &Network, xi: &L2Vector) -> Result<EnergyVector> {
    EnergyVector::from_reduced(net, &xi.0)
}

/// `L* u = (Δu)|_{V'}`.
pub fn op_lstar_apply(net: &Network, u: &EnergyVector) -> Result<L2Vector> {
    let lap = apply_laplacian(net, u.values())?;
    Ok(L2Vector(net.reduced_vertices().iter().map(|v| lap[v.index()]).collect()))
}

/// The Krein realization `L L*` of the Laplacian acting in the energy space.
///
/// On a finite network it agrees with the pointwise Laplacian at every
/// vertex of `V'` and drops the base-point value.
pub fn krein_apply(net: &Network, u: &EnergyVector) -> Result<EnergyVector> {
    op_l_apply(net, &op_lstar_apply(net, u)?)
}

/// `⟨φ, Δφ⟩_E` evaluated along two routes, plus the edgewise sum of squared
/// weighted frame coefficients for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraticForm {
    /// `⟨φ, L L* φ⟩_E` from the energy inner product.
    pub direct: f64,
    /// `Σ_{x∈V'} (Σ_{y∼x} c_xy ⟨v_xy, φ⟩)²` from frame coefficients.
    pub frame_route: f64,
    /// `Σ_{(xy)∈E} c_xy² |⟨v_xy, φ⟩|²`. Differs from the form in general.
    pub edgewise_sum: f64,
}

pub fn quadratic_form(net: &Network, phi: &EnergyVector) -> Result<QuadraticForm> {
    quadratic_form_with(&build_frame(net, 1e-12)?, phi)
}

/// As [`quadratic_form`], reusing the dipoles of an existing frame. Fails if
/// the two routes disagree by more than `1e-9` relative.
pub fn quadratic_form_with(fs: &FrameSystem, phi: &EnergyVector) -> Result<QuadraticForm> {
    let space = fs.space();
    let net = space.network();
    check_len(net.n_vertices(), phi.len())?;
    let direct = space.inner(phi, &krein_apply(net, phi)?);

    let mut current = vec![0.0; net.n_vertices()];
    let mut edgewise_sum = 0.0;
    for ((&(x, y), v), e) in fs.oriented().edges().iter().zip(fs.dipoles()).zip(net.edges()) {
        let coef = space.inner(v, phi);
        current[x.index()] += e.c * coef;
        current[y.index()] -= e.c * coef;
        edgewise_sum += e.c * e.c * coef * coef;
    }
    let frame_route: f64 = net.reduced_vertices().iter().map(|v| current[v.index()].powi(2)).sum();
    if (direct - frame_route).abs() > 1e-9 * direct.abs().max(1.0) {
        return Err(Error::Numerical(format!(
            "quadratic form routes disagree: direct {direct:e}, frame {frame_route:e}"
        )));
    }
    Ok(QuadraticForm { direct, frame_route, edgewise_sum })
}
