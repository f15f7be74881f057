//! Linear-algebra kernels shared by the network modules: a sparse symmetric
//! matrix, an SPD solver (dense Cholesky or Jacobi-preconditioned conjugate
//! gradient), a cyclic Jacobi eigensolver, Lanczos with full
//! reorthogonalization, and helpers for operators on spaces with a
//! non-Euclidean inner product.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Compressed sparse row storage for a symmetric matrix (both triangles kept).
#[derive(Debug, Clone)]
pub struct SparseSym {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSym {
    /// Builds from `(i, j, v)` triplets of the full matrix; repeated entries
    /// are summed.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *vals.last_mut().expect("entry pushed for this key") += v;
                continue;
            }
            cols.push(j);
            vals.push(v);
            row_ptr[i + 1] += 1;
            last = Some((i, j));
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { dim, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Entries with `i >= j`, row-major.
    pub fn lower_triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.dim)
            .flat_map(|i| self.row(i).filter(move |&(j, _)| j <= i).map(move |(j, v)| (i, j, v)))
            .collect()
    }

    pub fn max_abs_row_sum(&self) -> f64 {
        (0..self.dim).map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Relative residual target for conjugate gradient.
    pub tol: f64,
    /// Systems with fewer rows are factored densely.
    pub dense_below: usize,
    /// Iteration cap is `max_iter_factor * (dim + 1)`.
    pub max_iter_factor: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-12, dense_below: 200, max_iter_factor: 20 }
    }
}

/// `Θ' = L D Lᵀ` for a grounded Laplacian given by its off-diagonal weights
/// `w_ij = −Θ'_ij ≥ 0` and grounding sums `s_i = Θ'_ii − Σ_j w_ij ≥ 0`.
///
/// Elimination updates the weights and grounding sums instead of the
/// diagonal, so every pivot is a sum of nonnegative terms and stays accurate
/// to a few ulps even when conductances span many orders of magnitude.
#[derive(Debug, Clone)]
pub struct GroundedFactor {
    l: DMatrix<f64>,
    d: Vec<f64>,
}

impl GroundedFactor {
    pub fn new(weights: &SparseSym, ground: &[f64]) -> Result<Self> {
        let n = weights.dim();
        if ground.len() != n {
            return Err(Error::Dimension { expected: n, got: ground.len() });
        }
        let mut w = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for (j, a) in weights.row(i) {
                if j != i {
                    w[(i, j)] = -a;
                }
            }
        }
        let mut s = ground.to_vec();
        let mut l = DMatrix::<f64>::identity(n, n);
        let mut d = vec![0.0; n];
        for k in 0..n {
            let dk = s[k] + (k + 1..n).map(|j| w[(k, j)]).sum::<f64>();
            if !(dk > 0.0) {
                return Err(Error::Numerical(format!("zero pivot at row {k}; the system is singular")));
            }
            d[k] = dk;
            for i in k + 1..n {
                let wik = w[(i, k)];
                if wik == 0.0 {
                    continue;
                }
                l[(i, k)] = -wik / dk;
                s[i] += wik * s[k] / dk;
                for j in k + 1..n {
                    if j != i {
                        w[(i, j)] += wik * w[(k, j)] / dk;
                    }
                }
            }
        }
        Ok(Self { l, d })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        let mut y = b.to_vec();
        for i in 0..n {
            let mut acc = y[i];
            for k in 0..i {
                acc -= self.l[(i, k)] * y[k];
            }
            y[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = y[i] / self.d[i];
            for j in i + 1..n {
                acc -= self.l[(j, i)] * y[j];
            }
            y[i] = acc;
        }
        y
    }

    /// Lower Cholesky factor `L D^{1/2}`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        let mut c = self.l.clone();
        for (k, dk) in self.d.iter().enumerate() {
            let r = dk.sqrt();
            c.column_mut(k).iter_mut().for_each(|v| *v *= r);
        }
        c
    }
}

#[derive(Debug, Clone)]
enum Backend {
    Cholesky(Cholesky<f64, Dyn>),
    Grounded(GroundedFactor, Vec<f64>),
    Iterative,
}

/// Solver for a symmetric positive-definite sparse system.
#[derive(Debug, Clone)]
pub struct SpdSolver {
    matrix: SparseSym,
    backend: Backend,
    opts: SolveOptions,
}

impl SpdSolver {
    pub fn new(matrix: SparseSym, opts: SolveOptions) -> Result<Self> {
        let backend = if matrix.dim() < opts.dense_below {
            let chol = Cholesky::new(matrix.to_dense())
                .ok_or_else(|| Error::Numerical("system matrix is not positive definite".into()))?;
            Backend::Cholesky(chol)
        } else {
            Backend::Iterative
        };
        Ok(Self { matrix, backend, opts })
    }

    /// Solver for a grounded Laplacian with known grounding sums (see
    /// [`GroundedFactor`]).
    pub fn grounded(matrix: SparseSym, ground: Vec<f64>, opts: SolveOptions) -> Result<Self> {
        let backend = if matrix.dim() < opts.dense_below {
            Backend::Grounded(GroundedFactor::new(&matrix, &ground)?, ground)
        } else {
            Backend::Iterative
        };
        Ok(Self { matrix, backend, opts })
    }

    pub fn matrix(&self) -> &SparseSym {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Lower Cholesky factor when the solver is dense.
    pub fn cholesky_factor(&self) -> Option<DMatrix<f64>> {
        match &self.backend {
            Backend::Cholesky(c) => Some(c.l()),
            Backend::Grounded(f, _) => Some(f.cholesky_factor()),
            Backend::Iterative => None,
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: b.len() });
        }
        match &self.backend {
            Backend::Cholesky(chol) => {
                let rhs = DVector::from_column_slice(b);
                let mut x = chol.solve(&rhs);
                // one step of refinement against the sparse operator
                let ax = self.matrix.matvec(x.as_slice());
                let r = DVector::from_iterator(b.len(), b.iter().zip(&ax).map(|(bi, ai)| bi - ai));
                x += chol.solve(&r);
                Ok(x.as_slice().to_vec())
            }
            Backend::Grounded(f, ground) => {
                let mut x = f.solve(b);
                // refinement with the residual taken edge by edge
                let r: Vec<f64> = (0..b.len())
                    .map(|i| {
                        let flow: f64 = self
                            .matrix
                            .row(i)
                            .filter(|&(j, _)| j != i)
                            .map(|(j, a)| -a * (x[i] - x[j]))
                            .sum();
                        b[i] - ground[i] * x[i] - flow
                    })
                    .collect();
                for (xi, di) in x.iter_mut().zip(f.solve(&r)) {
                    *xi += di;
                }
                Ok(x)
            }
            Backend::Iterative => {
                let cap = self.opts.max_iter_factor * (self.dim() + 1);
                conjugate_gradient(&self.matrix, b, self.opts.tol, cap).map(|(x, _)| x)
            }
        }
    }
}

/// Jacobi-preconditioned conjugate gradient. Returns the solution and the
/// iteration count; stops when `‖r‖ ≤ tol·‖b‖`.
pub fn conjugate_gradient(a: &SparseSym, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize)> {
    let n = a.dim();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let inv_diag: Vec<f64> = a.diagonal().into_iter().map(|d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ap = a.matvec(&p);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm(&r) <= tol * bnorm {
            return Ok((x, it));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NonConvergence { iterations: max_iter, residual: norm(&r) / bnorm })
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Eigenvalues come back ascending, eigenvectors as matching columns.
/// Rotations stop once every off-diagonal entry satisfies
/// `|a_pq| ≤ ε·sqrt(|a_pp·a_qq|)`, which keeps small eigenvalues of graded
/// positive-definite matrices accurate to high relative precision.
pub fn jacobi_eigen(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Dimension { expected: n, got: m.ncols() });
    }
    let mut a = (m + m.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    const MAX_SWEEPS: usize = 80;
    let eps = f64::EPSILON;
    let mut converged = n <= 1;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[(p, p)], a[(q, q)]);
                if apq.abs() <= eps * (app * aqq).abs().sqrt() || apq.abs() < f64::MIN_POSITIVE {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        let off = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[(p, q)].abs())
            .fold(0.0, f64::max);
        return Err(Error::NonConvergence { iterations: MAX_SWEEPS, residual: off });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok((values, vectors))
}

/// Eigen-decomposition of `MᵀM` from one-sided (Hestenes) Jacobi rotations
/// on the columns of `M`, without forming the product.
///
/// Eigenvalues come back ascending as squared column norms, eigenvectors as
/// the accumulated right rotations. On graded factors this keeps small
/// eigenvalues accurate to high relative precision.
pub fn gram_eigen_one_sided(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.ncols();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    const MAX_SWEEPS: usize = 80;
    let eps = f64::EPSILON;
    let mut converged = n <= 1;
    let mut worst = 0.0_f64;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        worst = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma == 0.0 {
                    continue;
                }
                let rel = gamma.abs() / (alpha * beta).sqrt();
                if rel <= eps {
                    continue;
                }
                worst = worst.max(rel);
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t =
                    if zeta == 0.0 { 1.0 } else { zeta.signum() / (zeta.abs() + (zeta * zeta + 1.0).sqrt()) };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = c * t;
                for k in 0..a.nrows() {
                    let (ap, aq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * ap - s * aq;
                    a[(k, q)] = s * ap + c * aq;
                }
                for k in 0..n {
                    let (vp, vq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vp - s * vq;
                    v[(k, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence { iterations: MAX_SWEEPS, residual: worst });
    }
    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm_squared()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[i].total_cmp(&norms[j]));
    let values = order.iter().map(|&i| norms[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok((values, vectors))
}

/// `f(S)` for a symmetric matrix `S`.
pub fn sym_function(s: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    let (vals, vecs) = jacobi_eigen(s)?;
    let scaled = DMatrix::from_fn(vecs.nrows(), vecs.ncols(), |r, c| vecs[(r, c)] * f(vals[c]));
    Ok(&scaled * vecs.transpose())
}

/// Finite-dimensional inner-product space with Gram matrix `G = L Lᵀ`.
///
/// Coordinates `u` map to orthonormal coordinates `z = Lᵀu`; an operator `T`
/// that is selfadjoint for `G` becomes the symmetric matrix `Lᵀ T L⁻ᵀ`.
#[derive(Debug, Clone)]
pub struct Geometry {
    gram: DMatrix<f64>,
    l: DMatrix<f64>,
}

impl Geometry {
    pub fn new(gram: DMatrix<f64>) -> Result<Self> {
        let chol = Cholesky::new(gram.clone())
            .ok_or_else(|| Error::Numerical("Gram matrix is not positive definite".into()))?;
        Ok(Self { l: chol.l(), gram })
    }

    /// Uses a precomputed lower Cholesky factor of `gram`.
    pub fn with_factor(gram: DMatrix<f64>, l: DMatrix<f64>) -> Result<Self> {
        if l.shape() != gram.shape() || l.diagonal().iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Numerical("factor is not a valid Cholesky factor".into()));
        }
        Ok(Self { gram, l })
    }

    pub fn euclidean(dim: usize) -> Self {
        Self { gram: DMatrix::identity(dim, dim), l: DMatrix::identity(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Lower Cholesky factor of the Gram matrix.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.dot(&(&self.gram * v))
    }

    pub fn to_ortho(&self, u: &DVector<f64>) -> DVector<f64> {
        self.l.tr_mul(u)
    }

    pub fn from_ortho(&self, z: &DVector<f64>) -> DVector<f64> {
        self.l.tr_solve_lower_triangular(z).expect("Cholesky factor has a positive diagonal")
    }

    /// `Lᵀ T L⁻ᵀ`, the matrix of `T` in orthonormal coordinates.
    pub fn op_to_ortho(&self, t: &DMatrix<f64>) -> DMatrix<f64> {
        let x =
            self.l.solve_lower_triangular(&t.transpose()).expect("Cholesky factor has a positive diagonal");
        self.l.tr_mul(&x.transpose())
    }

    /// Inverse of [`Geometry::op_to_ortho`]: `L⁻ᵀ S Lᵀ`.
    pub fn op_from_ortho(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        let sl = s * self.l.transpose();
        self.l.tr_solve_lower_triangular(&sl).expect("Cholesky factor has a positive diagonal")
    }

    /// Vertex-coordinate matrix of a map `from → self` given in orthonormal
    /// coordinates: `L_self⁻ᵀ S L_fromᵀ`.
    pub fn op_from_ortho_between(&self, s: &DMatrix<f64>, from: &Geometry) -> DMatrix<f64> {
        let sl = s * from.l.transpose();
        self.l.tr_solve_lower_triangular(&sl).expect("Cholesky factor has a positive diagonal")
    }

    /// `f(T)` for an operator selfadjoint in this geometry.
    pub fn op_function(&self, t: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
        let s = self.op_to_ortho(t);
        Ok(self.op_from_ortho(&sym_function(&s, f)?))
    }

    /// Eigenvalues of an operator selfadjoint in this geometry, ascending.
    pub fn op_eigenvalues(&self, t: &DMatrix<f64>) -> Result<Vec<f64>> {
        Ok(jacobi_eigen(&self.op_to_ortho(t))?.0)
    }

    /// Operator norm of `T` measured in this geometry (on both sides).
    pub fn op_norm(&self, t: &DMatrix<f64>) -> f64 {
        self.op_to_ortho(t).singular_values().max()
    }

    /// Departure from selfadjointness, `‖S − Sᵀ‖` in orthonormal coordinates.
    pub fn selfadjoint_defect(&self, t: &DMatrix<f64>) -> f64 {
        let s = self.op_to_ortho(t);
        (&s - s.transpose()).abs().max()
    }
}

/// Adjoint of `A: H₁ → H₂` given coordinate Gram matrices: `G₁⁻¹ Aᵀ G₂`.
pub fn adjoint(a: &DMatrix<f64>, from: &Geometry, to: &Geometry) -> DMatrix<f64> {
    let rhs = a.transpose() * to.gram();
    let y = from.l.solve_lower_triangular(&rhs).expect("Cholesky factor has a positive diagonal");
    from.l.tr_solve_lower_triangular(&y).expect("Cholesky factor has a positive diagonal")
}

/// Norm of `A: H₁ → H₂` between two geometries.
pub fn op_norm_between(a: &DMatrix<f64>, from: &Geometry, to: &Geometry) -> f64 {
    // L₂ᵀ A L₁⁻ᵀ
    let x = from.l.solve_lower_triangular(&a.transpose()).expect("Cholesky factor has a positive diagonal");
    to.l.tr_mul(&x.transpose()).singular_values().max()
}

/// Ritz pairs from Lanczos with full reorthogonalization.
#[derive(Debug, Clone)]
pub struct LanczosResult {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub steps: usize,
}

/// Lanczos iteration for an operator selfadjoint under `inner`.
///
/// Every new Krylov vector is orthogonalized twice against the whole basis.
/// On breakdown the iteration continues from a fresh random vector, so with
/// `steps == dim` the full spectrum is recovered. Ritz values come back
/// ascending together with their true residual norms `‖Ay − θy‖`.
pub fn lanczos(
    dim: usize,
    apply: impl Fn(&[f64]) -> Vec<f64>,
    inner: impl Fn(&[f64], &[f64]) -> f64,
    steps: usize,
    seed: u64,
) -> Result<LanczosResult> {
    let steps = steps.min(dim);
    if steps == 0 {
        return Ok(LanczosResult { values: vec![], vectors: vec![], residuals: vec![], steps: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normalize = |v: &mut Vec<f64>| -> f64 {
        let nv = inner(v, v).sqrt();
        if nv > 0.0 {
            v.iter_mut().for_each(|x| *x /= nv);
        }
        nv
    };
    let orthogonalize = |w: &mut Vec<f64>, basis: &[Vec<f64>]| {
        for _ in 0..2 {
            for q in basis {
                let h = inner(q, w);
                w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= h * qi);
            }
        }
    };

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut alpha = Vec::with_capacity(steps);
    let mut beta: Vec<f64> = Vec::with_capacity(steps);
    let mut q: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    normalize(&mut q);
    let mut scale = 0.0_f64;
    loop {
        let mut w = apply(&q);
        let a = inner(&q, &w);
        alpha.push(a);
        basis.push(q);
        scale = scale.max(a.abs());
        if basis.len() == steps {
            break;
        }
        orthogonalize(&mut w, &basis);
        let mut b = normalize(&mut w);
        if b <= 1e-10 * scale.max(f64::MIN_POSITIVE) {
            // invariant subspace reached; restart with a fresh direction
            let mut fresh = Vec::new();
            for _ in 0..8 {
                let mut r: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                orthogonalize(&mut r, &basis);
                if normalize(&mut r) > 1e-8 {
                    fresh = r;
                    break;
                }
            }
            if fresh.is_empty() {
                break;
            }
            w = fresh;
            b = 0.0;
        }
        scale = scale.max(b);
        beta.push(b);
        q = w;
    }

    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = nalgebra::SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut values = Vec::with_capacity(m);
    let mut vectors = Vec::with_capacity(m);
    let mut residuals = Vec::with_capacity(m);
    for &k in &order {
        let theta = eig.eigenvalues[k];
        let mut y = vec![0.0; dim];
        for (i, qi) in basis.iter().enumerate() {
            let s = eig.eigenvectors[(i, k)];
            y.iter_mut().zip(qi).for_each(|(yj, qj)| *yj += s * qj);
        }
        normalize(&mut y);
        let ay = apply(&y);
        let r: Vec<f64> = ay.iter().zip(&y).map(|(a, b)| a - theta * b).collect();
        residuals.push(inner(&r, &r).sqrt());
        values.push(theta);
        vectors.push(y);
    }
    Ok(LanczosResult { values, vectors, residuals, steps: m })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_matrix() -> SparseSym {
        SparseSym::from_triplets(2, vec![(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 1.0)])
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = SparseSym::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 1.0), (1, 1, 3.0)]);
        assert_eq!(m.get(0, 0), 2.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.matvec(&[1.0, 1.0]), vec![2.0, 3.0]);
    }

    #[test]
    fn dense_and_cg_agree() {
        let m = path_matrix();
        let dense = SpdSolver::new(m.clone(), SolveOptions::default()).unwrap();
        let cg = SpdSolver::new(m, SolveOptions { dense_below: 0, ..Default::default() }).unwrap();
        let a = dense.solve(&[0.0, 1.0]).unwrap();
        let b = cg.solve(&[0.0, 1.0]).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-14 && (a[1] - 2.0).abs() < 1e-14);
        assert!((b[0] - 1.0).abs() < 1e-12 && (b[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cg_reports_non_convergence() {
        let m = SparseSym::from_triplets(
            3,
            vec![
                (0, 0, 2.0),
                (0, 1, -1.0),
                (1, 0, -1.0),
                (1, 1, 2.0),
                (1, 2, -1.0),
                (2, 1, -1.0),
                (2, 2, 2.0),
            ],
        );
        assert!(matches!(
            conjugate_gradient(&m, &[1.0, 0.0, 1.0e-3], 1e-15, 1),
            Err(Error::NonConvergence { .. })
        ));
    }

    #[test]
    fn jacobi_on_path_matrix() {
        let (vals, vecs) = jacobi_eigen(&path_matrix().to_dense()).unwrap();
        let s5 = 5f64.sqrt();
        assert!((vals[0] - (3.0 - s5) / 2.0).abs() < 1e-15);
        assert!((vals[1] - (3.0 + s5) / 2.0).abs() < 1e-15);
        let orth = vecs.transpose() * &vecs;
        assert!((orth - DMatrix::identity(2, 2)).abs().max() < 1e-15);
    }

    #[test]
    fn jacobi_graded_relative_accuracy() {
        // diag(1, 1e12) with a coupling that leaves the small eigenvalue at ~0.5
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1e6 / 2f64.sqrt(), 1e6 / 2f64.sqrt(), 1e12]);
        let (vals, _) = jacobi_eigen(&m).unwrap();
        // exact: λ_min = det / λ_max, det = 1e12 − 0.5e12
        let det = 0.5e12;
        let lmax = vals[1];
        assert!((vals[0] - det / lmax).abs() / vals[0] < 1e-13);
    }

    #[test]
    fn lanczos_recovers_full_spectrum() {
        let m = path_matrix();
        let res = lanczos(2, |x| m.matvec(x), dot, 2, 1).unwrap();
        let s5 = 5f64.sqrt();
        assert!((res.values[0] - (3.0 - s5) / 2.0).abs() < 1e-12);
        assert!((res.values[1] - (3.0 + s5) / 2.0).abs() < 1e-12);
        assert!(res.residuals.iter().all(|&r| r < 1e-10));
    }

    #[test]
    fn lanczos_restarts_on_breakdown() {
        // identity has a one-dimensional Krylov space from any start vector
        let res = lanczos(4, |x| x.to_vec(), dot, 4, 9).unwrap();
        assert_eq!(res.steps, 4);
        assert!(res.values.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn geometry_round_trips() {
        let g = Geometry::new(path_matrix().to_dense()).unwrap();
        let t = DMatrix::from_row_slice(2, 2, &[0.3, 1.0, -2.0, 4.0]);
        let back = g.op_from_ortho(&g.op_to_ortho(&t));
        assert!((back - &t).abs().max() < 1e-13);
        let u = DVector::from_vec(vec![0.7, -1.1]);
        assert!((g.from_ortho(&g.to_ortho(&u)) - &u).abs().max() < 1e-14);
        let z = g.to_ortho(&u);
        assert!((z.dot(&z) - g.inner(&u, &u)).abs() < 1e-14);
    }

    #[test]
    fn adjoint_between_geometries() {
        let g1 = Geometry::new(path_matrix().to_dense()).unwrap();
        let g2 = Geometry::euclidean(2);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let astar = adjoint(&a, &g1, &g2);
        let u = DVector::from_vec(vec![0.2, -0.9]);
        let v = DVector::from_vec(vec![1.5, 0.4]);
        let lhs = g2.inner(&(&a * &u), &v);
        let rhs = g1.inner(&u, &(&astar * &v));
        assert!((lhs - rhs).abs() < 1e-13);
    }
}
