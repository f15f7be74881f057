//! Two conductances `c ≤ c_A` on one graph.
//!
//! `H_A` (energy space for `c_A`) sits inside `H_C` contractively, and in
//! gauge-fixed coordinates the inclusion `j` is the identity. Its adjoint is
//! realized by solving `Θ'_A h = Θ'_C w`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::energy::{EnergySpace, EnergyVector};
use crate::error::{check_len, Error, Result};
use crate::graph::{Network, VertexId};
use crate::laplacian::{apply_laplacian, krein_apply, op_lstar_apply};
use crate::linalg::{jacobi_eigen, Geometry};
use crate::spectral::{eig_energy, spectral_measure_of, EigenSystem, SpectralMeasure};

/// A base network and an upper network with the same vertices, edges and base
/// point, and `c ≤ c_A` edgewise.
#[derive(Debug, Clone)]
pub struct ConductancePair {
    base: EnergySpace,
    upper: EnergySpace,
}

pub fn make_pair(base: &Network, upper: &Network) -> Result<ConductancePair> {
    ConductancePair::new(base, upper)
}

impl ConductancePair {
    pub fn new(base: &Network, upper: &Network) -> Result<Self> {
        let same_topology = base.labels() == upper.labels()
            && base.base_point() == upper.base_point()
            && base.edges().len() == upper.edges().len()
            && base.edges().iter().zip(upper.edges()).all(|(a, b)| a.x == b.x && a.y == b.y);
        if !same_topology {
            return Err(Error::Precondition("pair needs identical vertices, edges and base point".into()));
        }
        for (a, b) in base.edges().iter().zip(upper.edges()) {
            if b.c < a.c {
                return Err(Error::Precondition(format!(
                    "ordering violated at edge ({}, {}): c = {} > c_A = {}",
                    base.label(a.x),
                    base.label(a.y),
                    a.c,
                    b.c
                )));
            }
        }
        Ok(Self { base: EnergySpace::new(base)?, upper: EnergySpace::new(upper)? })
    }

    /// `H_C`.
    pub fn base(&self) -> &EnergySpace {
        &self.base
    }

    /// `H_A`.
    pub fn upper(&self) -> &EnergySpace {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.base.network().reduced_dim()
    }

    /// `j*: H_C → H_A`, the gauge-fixed solution of `Θ'_A h = Θ'_C w`.
    pub fn pullback(&self, w: &EnergyVector) -> Result<EnergyVector> {
        check_len(self.base.network().n_vertices(), w.len())?;
        let rhs = self.base.grounded().matvec(&w.reduced());
        self.upper.solve_reduced(&rhs)
    }

    /// `j` read in `H_C`: the same function.
    pub fn include(&self, h: &EnergyVector) -> EnergyVector {
        h.clone()
    }

    /// Identities for the pullback of a point mass.
    pub fn pullback_delta(&self, x: VertexId) -> Result<PullbackDelta> {
        let (cn, an) = (self.base.network(), self.upper.network());
        cn.check_vertex(x)?;
        let pulled = self.pullback(&EnergyVector::delta(cn, x)?)?;
        let delta_a = EnergyVector::delta(an, x)?;

        let norm = |v: &EnergyVector| self.upper.norm_sq(v).max(0.0).sqrt();
        let mut dipole_sum = EnergyVector::zero(an);
        let vx = self.upper.based_dipole(x)?;
        let dx = cn.total_conductance(x)? - an.total_conductance(x)?;
        let mut difference = vx.scaled(dx);
        let mut variant = difference.clone();
        let mut term_scale = dx.abs() * norm(&vx);
        for (&(y, c), &(_, ca)) in cn.neighbors(x).iter().zip(an.neighbors(x)) {
            let y = VertexId(y);
            let vxy = self.upper.dipole(x, y)?;
            let vy = self.upper.based_dipole(y)?;
            dipole_sum = dipole_sum.axpy(c, &vxy);
            difference = difference.axpy(-(c - ca), &vy);
            variant = variant.axpy(-(c - ca), &vxy);
            term_scale += (c - ca).abs() * norm(&vy);
        }
        let lhs = pulled.sub(&delta_a);
        Ok(PullbackDelta {
            scale: norm(&pulled).max(1.0),
            term_scale: term_scale.max(1.0),
            dipole_sum_residual: norm(&pulled.sub(&dipole_sum)),
            difference_residual: norm(&lhs.sub(&difference)),
            variant_residual: norm(&lhs.sub(&variant)),
            pullback: pulled,
        })
    }

    /// Largest `‖j Δ_A j* v − Δ_C v‖_C` over dipoles of `samples` edges
    /// spread evenly through the edge list.
    pub fn intertwine_check(&self, samples: usize) -> Result<IntertwineReport> {
        if samples == 0 {
            return Err(Error::Precondition("intertwine check needs at least one sample".into()));
        }
        let edges = self.base.network().edges();
        let picks = samples.min(edges.len());
        let mut max_residual = 0.0_f64;
        let mut max_relative = 0.0_f64;
        for k in 0..picks {
            let e = &edges[k * edges.len() / picks];
            let v = self.base.dipole(e.x, e.y)?;
            let lhs = self.include(&krein_apply(self.upper.network(), &self.pullback(&v)?)?);
            let rhs = krein_apply(self.base.network(), &v)?;
            let r = self.base.norm_sq(&lhs.sub(&rhs)).max(0.0).sqrt();
            let size = self.base.norm_sq(&rhs).max(0.0).sqrt();
            max_residual = max_residual.max(r);
            max_relative = max_relative.max(r / size.max(1.0));
        }
        Ok(IntertwineReport { samples: picks, max_residual, max_relative })
    }

    /// `‖L_A* j* w − L* w‖` in `ℓ²(V')`.
    pub fn lstar_compat_residual(&self, w: &EnergyVector) -> Result<f64> {
        let a = op_lstar_apply(self.upper.network(), &self.pullback(w)?)?;
        let b = op_lstar_apply(self.base.network(), w)?;
        Ok(a.0.iter().zip(&b.0).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
    }

    fn geometries(&self) -> Result<(Geometry, Geometry)> {
        Ok((self.base.geometry()?, self.upper.geometry()?))
    }

    /// `j j*` on `H_C`, assembled column by column from pullbacks.
    pub fn gram_operator(&self) -> Result<GramOperator> {
        let net = self.base.network();
        let dim = self.dim();
        let mut m = DMatrix::zeros(dim, dim);
        let mut e = vec![0.0; dim];
        for j in 0..dim {
            e[j] = 1.0;
            let col = self.include(&self.pullback(&EnergyVector::from_reduced(net, &e)?)?);
            m.set_column(j, &col.reduced_vector());
            e[j] = 0.0;
        }
        let geom = self.base.geometry()?;
        let eigenvalues = geom.op_eigenvalues(&m)?;
        Ok(GramOperator {
            selfadjoint_defect: geom.selfadjoint_defect(&m),
            norm: geom.op_norm(&m),
            eigenvalues,
            matrix: m,
        })
    }

    /// `max |⟨v_x, (j j*) v_y⟩_C − G_A(x, y)|` over `x, y ∈ V'`.
    pub fn gramian_identity_residual(&self, gram: &GramOperator) -> Result<f64> {
        let net = self.base.network();
        let g_a = self.upper.gramian_matrix()?;
        let dipoles: Vec<EnergyVector> =
            net.reduced_vertices().iter().map(|&x| self.base.based_dipole(x)).collect::<Result<_>>()?;
        let mut worst = 0.0_f64;
        for (j, vy) in dipoles.iter().enumerate() {
            let img = EnergyVector::from_reduced(net, (&gram.matrix * vy.reduced_vector()).as_slice())?;
            for (i, vx) in dipoles.iter().enumerate() {
                worst = worst.max((self.base.inner(vx, &img) - g_a[(i, j)]).abs());
            }
        }
        Ok(worst)
    }

    /// `trace(j j*)` in two `H_C`-orthonormal bases.
    pub fn trace_gram(&self) -> Result<TraceReport> {
        let net = self.base.network();
        let term =
            |b: &EnergyVector| -> Result<f64> { Ok(self.base.inner(b, &self.include(&self.pullback(b)?))) };

        // eigenvectors of Θ'_C are H_C-orthogonal; rescale to unit energy
        let (vals, vecs) = jacobi_eigen(&self.base.grounded().to_dense())?;
        let mut trace = 0.0;
        for (k, &l) in vals.iter().enumerate() {
            let col: Vec<f64> = vecs.column(k).iter().map(|v| v / l.sqrt()).collect();
            trace += term(&EnergyVector::from_reduced(net, &col)?)?;
        }

        let mut basis: Vec<EnergyVector> = Vec::with_capacity(self.dim());
        for &x in net.reduced_vertices() {
            let mut v = self.base.based_dipole(x)?;
            for _ in 0..2 {
                for b in &basis {
                    v = v.axpy(-self.base.inner(b, &v), b);
                }
            }
            let nv = self.base.norm_sq(&v).sqrt();
            basis.push(v.scaled(1.0 / nv));
        }
        let trace_dipole_basis = basis.iter().map(term).sum::<Result<f64>>()?;

        let geometric = match (net.path_conductances(), self.upper.network().geometric_ratio()) {
            (Some(_), Some(a)) if net.is_unit() => Some(a),
            _ => None,
        };
        let n = net.n_vertices() as i32;
        Ok(TraceReport {
            trace,
            trace_dipole_basis,
            dim: self.dim(),
            closed_form: geometric.map(|a| (1.0 - a.powi(-(n - 1))) * a / (a - 1.0)),
            limit: geometric.map(|a| a / (a - 1.0)),
        })
    }

    /// `W = j (j* j)^{-1/2}: H_A → H_C` and its checks.
    ///
    /// In orthonormal coordinates `j` becomes `J = L_Cᵀ L_A⁻ᵀ` and `W` its
    /// polar factor `U Vᵀ` from the SVD `J = U Σ Vᵀ`, which stays orthogonal
    /// however badly `j* j` is conditioned.
    pub fn isometric_factor(&self) -> Result<IsometricFactor> {
        let dim = self.dim();
        let (gc, ga) = self.geometries()?;
        let j = DMatrix::<f64>::identity(dim, dim);
        let jt = gc.factor().tr_mul(
            &ga.factor()
                .solve_lower_triangular(&j)
                .ok_or_else(|| Error::Numerical("singular energy factor".into()))?
                .transpose(),
        );
        let svd = jt.clone().svd(true, true);
        let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
        let sigma = &svd.singular_values;
        let (lo, hi) = (sigma.min(), sigma.max());
        let w_ortho = &u * &vt;
        let id = DMatrix::<f64>::identity(dim, dim);
        let isometry_defect = (w_ortho.transpose() * &w_ortho - &id).norm();
        // |J| = V Σ Vᵀ and J = W |J|
        let abs_j = vt.transpose() * DMatrix::from_diagonal(sigma) * &vt;
        let factorization_defect = (&w_ortho * abs_j - &jt).norm() / jt.norm().max(1.0);
        let w = gc.op_from_ortho_between(&w_ortho, &ga);

        let delta_c = gc.op_to_ortho(&krein_matrix_of(self.base.network())?);
        let delta_a = ga.op_to_ortho(&krein_matrix_of(self.upper.network())?);
        let conj = &w_ortho * delta_a * w_ortho.transpose();
        let intertwining_residual = (conj - &delta_c).norm() / delta_c.norm().max(1.0);
        Ok(IsometricFactor {
            w,
            isometry_defect,
            factorization_defect,
            smallest_eigenvalue: lo * lo,
            condition: (hi / lo).powi(2),
            ill_conditioned: !((hi / lo).powi(2) <= 1e12),
            intertwining_residual,
        })
    }

    /// Spectral measures of `u` under `Δ_C` and of `j* u` under `Δ_A`, with
    /// interval masses and the moment chain for `n = 1..=4`.
    pub fn spectral_domination(
        &self,
        u: &EnergyVector,
        intervals: &[(f64, f64)],
    ) -> Result<DominationReport> {
        let sys_c = eig_energy(self.base.network())?;
        let sys_a = eig_energy(self.upper.network())?;
        self.spectral_domination_with(&sys_c, &sys_a, u, intervals)
    }

    /// As [`ConductancePair::spectral_domination`], reusing eigen-systems of
    /// the two energy realizations.
    pub fn spectral_domination_with(
        &self,
        sys_c: &EigenSystem,
        sys_a: &EigenSystem,
        u: &EnergyVector,
        intervals: &[(f64, f64)],
    ) -> Result<DominationReport> {
        const SLACK: f64 = 1e-9;
        let ua = self.pullback(u)?;
        if ua.max_abs() == 0.0 {
            return Err(Error::Precondition("pullback of u vanishes".into()));
        }
        let mu_c = spectral_measure_of(self.base.network(), sys_c, &u.reduced())?;
        let mu_a = spectral_measure_of(self.upper.network(), sys_a, &ua.reduced())?;
        let rows = intervals
            .iter()
            .map(|&(a, b)| {
                let (mc, ma) = (mu_c.interval_mass(a, b), mu_a.interval_mass(a, b));
                IntervalRow { a, b, mu_c: mc, mu_a: ma, flag: mc <= ma + SLACK }
            })
            .collect();

        let mut moments = Vec::with_capacity(4);
        let (mut pc, mut pa) = (u.clone(), ua.clone());
        for n in 1..=4 {
            pc = krein_apply(self.base.network(), &pc)?;
            pa = krein_apply(self.upper.network(), &pa)?;
            let lhs = self.base.inner(u, &pc);
            let rhs = self.upper.inner(&ua, &pa);
            moments.push(MomentRow { n, lhs, rhs, holds: lhs <= rhs + SLACK });
        }
        Ok(DominationReport {
            rows,
            moments,
            slack: SLACK,
            norm_sq: self.base.norm_sq(u),
            measure_c: mu_c,
            measure_a: mu_a,
            note: "interval flags are observations; only the moment chain is expected to hold".into(),
        })
    }

    /// `max |Δ_A(j* h)|` over `interior`, given `|Δ_C h| ≤ 1e-9` there.
    pub fn harmonic_pullback_check(&self, h: &EnergyVector, interior: &[VertexId]) -> Result<f64> {
        let (cn, an) = (self.base.network(), self.upper.network());
        let before = apply_laplacian(cn, h.values())?;
        for &x in interior {
            cn.check_vertex(x)?;
            if before[x.index()].abs() > 1e-9 {
                return Err(Error::Precondition(format!(
                    "h is not harmonic at vertex {}: |Δh| = {:e}",
                    cn.label(x),
                    before[x.index()].abs()
                )));
            }
        }
        let after = apply_laplacian(an, self.pullback(h)?.values())?;
        Ok(interior.iter().map(|x| after[x.index()].abs()).fold(0.0, f64::max))
    }
}

fn krein_matrix_of(net: &Network) -> Result<DMatrix<f64>> {
    crate::spectral::krein_matrix(net)
}

/// Upper network with `c_A = c·(1 + U[0, 1))` edgewise.
pub fn random_upper<R: Rng>(rng: &mut R, base: &Network) -> Result<Network> {
    let edges =
        base.edges().iter().map(|e| (e.x.index(), e.y.index(), e.c * (1.0 + rng.gen::<f64>()))).collect();
    let net = Network::with_labels(base.labels().to_vec(), edges, base.base_point().index())?;
    net.ensure_valid()?;
    Ok(net)
}

/// Pullback of a point mass and the residuals of its two expansions.
#[derive(Debug, Clone)]
pub struct PullbackDelta {
    pub pullback: EnergyVector,
    /// `max(1, ‖j* δ_x‖_A)`.
    pub scale: f64,
    /// `max(1, |c(x) − c_A(x)|·‖v^A_x‖ + Σ_y |c_xy − c^A_xy|·‖v^A_y‖)`, the size
    /// of the summands in the difference expansion.
    pub term_scale: f64,
    /// `‖j* δ_x − Σ_{y∼x} c_xy v^A_xy‖_A`.
    pub dipole_sum_residual: f64,
    /// `‖j* δ_x − δ^A_x − (c(x) − c_A(x)) v^A_x + Σ_{y∼x} (c_xy − c^A_xy) v^A_y‖_A`
    /// with `v^A_o = 0`.
    pub difference_residual: f64,
    /// As `difference_residual` with `v^A_xy` in place of `v^A_y`; not an
    /// identity in general.
    pub variant_residual: f64,
}

impl PullbackDelta {
    pub fn holds(&self, tol: f64) -> bool {
        self.dipole_sum_residual <= tol * self.scale
            && self.difference_residual <= tol * self.scale.max(self.term_scale)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IntertwineReport {
    pub samples: usize,
    /// Largest `‖j Δ_A j* v − Δ v‖_C`.
    pub max_residual: f64,
    /// Same, divided by `max(1, ‖Δ v‖_C)`.
    pub max_relative: f64,
}

/// `j j*` in `H_C` coordinates.
#[derive(Debug, Clone)]
pub struct GramOperator {
    pub matrix: DMatrix<f64>,
    /// Spectrum in the `H_C` geometry, ascending.
    pub eigenvalues: Vec<f64>,
    pub selfadjoint_defect: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceReport {
    /// Over the normalized eigenbasis of `Θ'_C`.
    pub trace: f64,
    /// Over Gram–Schmidt on the based dipoles.
    pub trace_dipole_basis: f64,
    pub dim: usize,
    /// `Σ_{k=0}^{n−2} A^{−k}` for a unit chain against a geometric chain.
    pub closed_form: Option<f64>,
    /// `A / (A − 1)` for the same chains.
    pub limit: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct IsometricFactor {
    /// `W` in vertex coordinates.
    pub w: DMatrix<f64>,
    /// `‖W*W − I‖` in `H_A` (Frobenius, orthonormal coordinates).
    pub isometry_defect: f64,
    /// `‖W |j| − j‖ / max(1, ‖j‖)` in orthonormal coordinates.
    pub factorization_defect: f64,
    pub smallest_eigenvalue: f64,
    /// Condition number of `j* j`.
    pub condition: f64,
    pub ill_conditioned: bool,
    /// `‖W Δ_A W* − Δ_C‖ / max(1, ‖Δ_C‖)` in `H_C` (Frobenius); reported only.
    pub intertwining_residual: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IntervalRow {
    pub a: f64,
    pub b: f64,
    pub mu_c: f64,
    pub mu_a: f64,
    pub flag: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MomentRow {
    pub n: u32,
    /// `⟨u, Δⁿ u⟩_C`.
    pub lhs: f64,
    /// `⟨j*u, Δ_Aⁿ j*u⟩_A`.
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DominationReport {
    pub rows: Vec<IntervalRow>,
    pub moments: Vec<MomentRow>,
    pub slack: f64,
    pub norm_sq: f64,
    pub measure_c: SpectralMeasure,
    pub measure_a: SpectralMeasure,
    pub note: String,
}

impl DominationReport {
    pub fn moments_hold(&self) -> bool {
        self.moments.iter().all(|m| m.holds)
    }

    pub fn flags_failed(&self) -> usize {
        self.rows.iter().filter(|r| !r.flag).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("a,b,mu_C,mu_A,flag\n");
        for r in &self.rows {
            let _ = writeln!(out, "{:?},{:?},{:?},{:?},{}", r.a, r.b, r.mu_c, r.mu_a, r.flag);
        }
        out
    }
}

/// Half-open intervals `(j·t/2ᵏ, (j+1)·t/2ᵏ]` for `k = 0..=levels`, plus
/// `(−∞, 0]`.
pub fn dyadic_intervals(top: f64, levels: u32) -> Vec<(f64, f64)> {
    let mut out = vec![(f64::NEG_INFINITY, 0.0)];
    for k in 0..=levels {
        let parts = 1u64 << k;
        let width = top / parts as f64;
        for j in 0..parts {
            out.push((j as f64 * width, (j + 1) as f64 * width));
        }
    }
    out
}

/// Unit-energy vector in `H_C` from seeded coordinates.
pub fn random_unit_vector<R: Rng>(rng: &mut R, space: &EnergySpace) -> Result<EnergyVector> {
    let net = space.network();
    let coords: Vec<f64> = (0..net.reduced_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let v = EnergyVector::from_reduced(net, &coords)?;
    let n = space.norm_sq(&v).sqrt();
    Ok(v.scaled(1.0 / n))
}

impl GramOperator {
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }
}
