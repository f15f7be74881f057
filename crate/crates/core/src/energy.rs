//! The energy Hilbert space of a finite network.
//!
//! Elements are vertex functions modulo constants, stored gauge-fixed so the
//! value at the base point is zero. The inner product is
//! `⟨u, v⟩ = ½ Σ_x Σ_y c_xy (u(x) − u(y)) (v(x) − v(y))`; on gauge-fixed
//! vectors it equals `u'ᵀ Θ' v'` where `Θ'` is the Laplacian with the base
//! point row and column removed. Dipoles, the resistance metric and the
//! Gramian all come from solves against `Θ'`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::graph::{Network, VertexId};
use crate::linalg::{Geometry, SolveOptions, SparseSym, SpdSolver};

/// Gauge-fixed element of the energy space (value zero at the base point).
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyVector {
    values: Vec<f64>,
    base: usize,
}

impl EnergyVector {
    pub fn zero(net: &Network) -> Self {
        Self { values: vec![0.0; net.n_vertices()], base: net.base_point().index() }
    }

    /// Gauge-fixes an arbitrary vertex function by subtracting its value at
    /// the base point.
    pub fn from_function(net: &Network, values: &[f64]) -> Result<Self> {
        check_len(net.n_vertices(), values.len())?;
        let base = net.base_point().index();
        let shift = values[base];
        Ok(Self { values: values.iter().map(|v| v - shift).collect(), base })
    }

    /// Builds from coordinates on `V'` (base point value is zero).
    pub fn from_reduced(net: &Network, reduced: &[f64]) -> Result<Self> {
        check_len(net.reduced_dim(), reduced.len())?;
        let mut values = vec![0.0; net.n_vertices()];
        for (v, &r) in net.reduced_vertices().iter().zip(reduced) {
            values[v.index()] = r;
        }
        Ok(Self { values, base: net.base_point().index() })
    }

    /// Gauge-fixed `δ_x`; for the base point this is `δ_o − 1`.
    pub fn delta(net: &Network, x: VertexId) -> Result<Self> {
        net.check_vertex(x)?;
        let mut f = vec![0.0; net.n_vertices()];
        f[x.index()] = 1.0;
        Self::from_function(net, &f)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn at(&self, v: VertexId) -> f64 {
        self.values[v.index()]
    }

    /// Coordinates on `V'`.
    pub fn reduced(&self) -> Vec<f64> {
        self.values.iter().enumerate().filter(|&(i, _)| i != self.base).map(|(_, &v)| v).collect()
    }

    pub fn reduced_vector(&self) -> DVector<f64> {
        DVector::from_vec(self.reduced())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { values: self.values.iter().map(|v| v * s).collect(), base: self.base }
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        Self {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + s * b).collect(),
            base: self.base,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(-1.0, other)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// JSON document `{"gauge": {...}, "values": [...]}`.
    pub fn to_json(&self, net: &Network) -> serde_json::Value {
        #[derive(Serialize)]
        struct Doc<'a> {
            gauge: Gauge,
            values: &'a [f64],
        }
        #[derive(Serialize)]
        struct Gauge {
            base: i64,
            value_at_base: f64,
        }
        serde_json::to_value(Doc {
            gauge: Gauge { base: net.label(VertexId(self.base)), value_at_base: 0.0 },
            values: &self.values,
        })
        .expect("plain data serializes")
    }
}

impl AsRef<[f64]> for EnergyVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// `⟨u, v⟩_E` for two vertex functions. Invariant under adding constants.
pub fn energy_inner(net: &Network, u: &[f64], v: &[f64]) -> Result<f64> {
    check_len(net.n_vertices(), u.len())?;
    check_len(net.n_vertices(), v.len())?;
    Ok(edge_sum(net, u, v))
}

fn edge_sum(net: &Network, u: &[f64], v: &[f64]) -> f64 {
    // each undirected edge stands for both ordered pairs, which cancels the ½
    net.edges()
        .iter()
        .map(|e| {
            let (x, y) = (e.x.index(), e.y.index());
            e.c * (u[x] - u[y]) * (v[x] - v[y])
        })
        .sum()
}

/// `Θ'`: the Laplacian restricted to `V'` (base point row and column deleted).
pub fn grounded_laplacian(net: &Network) -> SparseSym {
    let mut triplets = Vec::with_capacity(net.n_vertices() + 2 * net.edges().len());
    for &v in net.reduced_vertices() {
        let i = net.reduced_index(v).expect("reduced vertex");
        triplets.push((i, i, net.total_conductance(v).expect("valid vertex")));
        for &(w, c) in net.neighbors(v) {
            if let Some(j) = net.reduced_index(VertexId(w)) {
                triplets.push((i, j, -c));
            }
        }
    }
    SparseSym::from_triplets(net.reduced_dim(), triplets)
}

/// The energy space of one network together with a factored `Θ'`.
///
/// Building it validates the network and prepares the dipole solver once;
/// all methods are pure and may be called from several threads.
#[derive(Debug, Clone)]
pub struct EnergySpace {
    net: Network,
    solver: SpdSolver,
}

impl EnergySpace {
    pub fn new(net: &Network) -> Result<Self> {
        Self::with_options(net, SolveOptions::default())
    }

    pub fn with_options(net: &Network, opts: SolveOptions) -> Result<Self> {
        net.ensure_valid()?;
        let base = net.base_point();
        let ground =
            net.reduced_vertices().iter().map(|&v| net.conductance(v, base).unwrap_or(0.0)).collect();
        let solver = SpdSolver::grounded(grounded_laplacian(net), ground, opts)?;
        Ok(Self { net: net.clone(), solver })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    /// `Θ'` as a sparse matrix.
    pub fn grounded(&self) -> &SparseSym {
        self.solver.matrix()
    }

    pub fn inner(&self, u: &EnergyVector, v: &EnergyVector) -> f64 {
        edge_sum(&self.net, u.values(), v.values())
    }

    pub fn norm_sq(&self, u: &EnergyVector) -> f64 {
        self.inner(u, u)
    }

    /// Gauge-fixed `v` with `Θ' v' = f'` for a source `f` on `V'`.
    pub fn solve_reduced(&self, rhs: &[f64]) -> Result<EnergyVector> {
        let x = self.solver.solve(rhs)?;
        EnergyVector::from_reduced(&self.net, &x)
    }

    /// The dipole `v_xy`, i.e. the solution of `Δv = δ_x − δ_y`.
    pub fn dipole(&self, x: VertexId, y: VertexId) -> Result<EnergyVector> {
        self.net.check_vertex(x)?;
        self.net.check_vertex(y)?;
        if x == y {
            return Ok(EnergyVector::zero(&self.net));
        }
        let mut rhs = vec![0.0; self.net.reduced_dim()];
        if let Some(i) = self.net.reduced_index(x) {
            rhs[i] += 1.0;
        }
        if let Some(j) = self.net.reduced_index(y) {
            rhs[j] -= 1.0;
        }
        self.solve_reduced(&rhs)
    }

    /// `v_x = v_{x,o}`; zero for the base point itself.
    pub fn based_dipole(&self, x: VertexId) -> Result<EnergyVector> {
        self.dipole(x, self.net.base_point())
    }

    /// Effective resistance `v_xy(x) − v_xy(y)`.
    pub fn resistance(&self, x: VertexId, y: VertexId) -> Result<f64> {
        let v = self.dipole(x, y)?;
        Ok(v.at(x) - v.at(y))
    }

    /// `G(x, y) = ⟨v_x, v_y⟩` for `x, y ∈ V'`.
    pub fn gramian(&self, x: VertexId, y: VertexId) -> Result<f64> {
        let base = self.net.base_point();
        for v in [x, y] {
            self.net.check_vertex(v)?;
            if v == base {
                return Err(Error::Precondition(format!(
                    "Gramian is defined on V' only; vertex {} is the base point",
                    self.net.label(v)
                )));
            }
        }
        let vx = self.based_dipole(x)?;
        let vy = self.based_dipole(y)?;
        Ok(self.inner(&vx, &vy))
    }

    /// Full Gramian on `V'`, computed column by column from based dipoles.
    pub fn gramian_matrix(&self) -> Result<DMatrix<f64>> {
        let dim = self.net.reduced_dim();
        let mut g = DMatrix::zeros(dim, dim);
        for (j, &y) in self.net.reduced_vertices().iter().enumerate() {
            let vy = self.based_dipole(y)?;
            for (i, r) in vy.reduced().into_iter().enumerate() {
                // reproducing property: ⟨v_x, v_y⟩ = v_y(x) − v_y(o) = v_y(x)
                g[(i, j)] = r;
            }
        }
        Ok(g)
    }

    /// The coordinate geometry of this space on `V'`, Gram matrix `Θ'`.
    pub fn geometry(&self) -> Result<Geometry> {
        let gram = self.grounded().to_dense();
        match self.solver.cholesky_factor() {
            Some(l) => Geometry::with_factor(gram, l),
            None => Geometry::new(gram),
        }
    }

    /// Residual `‖Δv − (δ_x − δ_y)‖_∞` of a candidate dipole.
    pub fn dipole_residual(&self, v: &EnergyVector, x: VertexId, y: VertexId) -> f64 {
        let lap = crate::laplacian::laplacian_values(&self.net, v.values());
        lap.iter()
            .enumerate()
            .map(|(i, &l)| {
                let mut target = 0.0;
                if i == x.index() {
                    target += 1.0;
                }
                if i == y.index() {
                    target -= 1.0;
                }
                (l - target).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Solves for `v_xy` and checks `‖Δv − (δ_x − δ_y)‖_∞ ≤ tol·max(1, ‖Θ'‖_∞‖v‖_∞)`
/// (the tolerance is floored at a few ulps).
pub fn solve_dipole(net: &Network, x: VertexId, y: VertexId, tol: f64) -> Result<EnergyVector> {
    let opts = SolveOptions { tol, ..SolveOptions::default() };
    let space = EnergySpace::with_options(net, opts)?;
    let v = space.dipole(x, y)?;
    let scale = (space.grounded().max_abs_row_sum() * v.max_abs()).max(1.0);
    let res = space.dipole_residual(&v, x, y);
    if res > tol.max(64.0 * f64::EPSILON) * scale {
        return Err(Error::NonConvergence { iterations: 0, residual: res });
    }
    Ok(v)
}

pub fn resistance_distance(net: &Network, x: VertexId, y: VertexId) -> Result<f64> {
    EnergySpace::new(net)?.resistance(x, y)
}

pub fn gramian(net: &Network, x: VertexId, y: VertexId) -> Result<f64> {
    EnergySpace::new(net)?.gramian(x, y)
}

/// One orientation per undirected edge.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientedEdgeSet {
    edges: Vec<(VertexId, VertexId)>,
}

impl OrientedEdgeSet {
    /// Orientation `x < y` on every edge, in the network's edge order.
    pub fn lexicographic(net: &Network) -> Self {
        Self { edges: net.edges().iter().map(|e| (e.x, e.y)).collect() }
    }

    pub fn edges(&self) -> &[(VertexId, VertexId)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// The Parseval frame `w_xy = √c_xy · v_xy` over oriented edges.
#[derive(Debug, Clone)]
pub struct FrameSystem {
    oriented: OrientedEdgeSet,
    dipoles: Vec<EnergyVector>,
    scales: Vec<f64>,
    space: EnergySpace,
}

/// Builds the frame, one dipole solve per edge.
pub fn build_frame(net: &Network, tol: f64) -> Result<FrameSystem> {
    let opts = SolveOptions { tol, ..SolveOptions::default() };
    FrameSystem::from_space(EnergySpace::with_options(net, opts)?)
}

impl FrameSystem {
    pub fn from_space(space: EnergySpace) -> Result<Self> {
        let oriented = OrientedEdgeSet::lexicographic(space.network());
        let dipoles =
            oriented.edges().iter().map(|&(x, y)| space.dipole(x, y)).collect::<Result<Vec<_>>>()?;
        let scales = space.network().edges().iter().map(|e| e.c.sqrt()).collect();
        Ok(Self { oriented, dipoles, scales, space })
    }

    pub fn oriented(&self) -> &OrientedEdgeSet {
        &self.oriented
    }

    pub fn dipoles(&self) -> &[EnergyVector] {
        &self.dipoles
    }

    /// `√c_xy` per oriented edge.
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn space(&self) -> &EnergySpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.dipoles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dipoles.is_empty()
    }

    /// Frame vector `w_j = √c_j · v_j`.
    pub fn frame_vector(&self, j: usize) -> EnergyVector {
        self.dipoles[j].scaled(self.scales[j])
    }

    /// Analysis operator: `⟨w_xy, u⟩ = √c_xy (u(x) − u(y))`.
    pub fn analyze(&self, u: &EnergyVector) -> Result<Vec<f64>> {
        check_len(self.space.network().n_vertices(), u.len())?;
        Ok(self
            .oriented
            .edges()
            .iter()
            .zip(&self.scales)
            .map(|(&(x, y), s)| s * (u.at(x) - u.at(y)))
            .collect())
    }

    /// Synthesis operator: `Σ_j γ_j w_j`.
    pub fn synthesize(&self, coeffs: &[f64]) -> Result<EnergyVector> {
        check_len(self.len(), coeffs.len())?;
        let mut out = EnergyVector::zero(self.space.network());
        for ((v, s), g) in self.dipoles.iter().zip(&self.scales).zip(coeffs) {
            out = out.axpy(g * s, v);
        }
        Ok(out)
    }

    /// Gram matrix `⟨w_i, w_j⟩` of the frame vectors.
    pub fn gram_matrix(&self) -> DMatrix<f64> {
        let m = self.len();
        let w: Vec<EnergyVector> = (0..m).map(|j| self.frame_vector(j)).collect();
        DMatrix::from_fn(m, m, |i, j| self.space.inner(&w[i], &w[j]))
    }

    /// CSV `x,y,coefficient` using vertex labels.
    pub fn coefficients_csv(&self, coeffs: &[f64]) -> Result<String> {
        check_len(self.len(), coeffs.len())?;
        let net = self.space.network();
        let mut out = String::from("x,y,coefficient\n");
        for (&(x, y), c) in self.oriented.edges().iter().zip(coeffs) {
            let _ = writeln!(out, "{},{},{c:?}", net.label(x), net.label(y));
        }
        Ok(out)
    }
}

pub fn frame_analyze(fs: &FrameSystem, u: &EnergyVector) -> Result<Vec<f64>> {
    fs.analyze(u)
}

pub fn frame_synthesize(fs: &FrameSystem, coeffs: &[f64]) -> Result<EnergyVector> {
    fs.synthesize(coeffs)
}
