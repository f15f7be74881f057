//! Splitting energy vectors into a part spanned by point masses and a
//! harmonic remainder, and harmonic extensions of boundary data.
//!
//! Harmonicity is taken relative to an interior vertex set: `⟨δ_x, f⟩_E =
//! (Δf)(x)`, so `f` is orthogonal to every `δ_x` with `x` interior exactly
//! when it is harmonic there.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::energy::{EnergySpace, EnergyVector};
use crate::error::{check_len, Error, Result};
use crate::graph::{Network, VertexId};
use crate::laplacian::apply_laplacian;
use crate::linalg::{SolveOptions, SparseSym, SpdSolver};

/// `u = fin_part + harm_part` with `fin_part` in the span of interior point
/// masses.
#[derive(Debug, Clone)]
pub struct HarmonicSplit {
    pub fin_part: EnergyVector,
    pub harm_part: EnergyVector,
    /// `|⟨fin_part, harm_part⟩_E|`.
    pub orthogonality_defect: f64,
    /// `‖fin_part + harm_part − u‖_E`.
    pub reconstruction_defect: f64,
    /// `max |Δ harm_part|` over the interior.
    pub interior_laplacian: f64,
}

impl HarmonicSplit {
    pub fn to_json(&self, net: &Network) -> serde_json::Value {
        serde_json::json!({
            "fin_part": self.fin_part.to_json(net),
            "harm_part": self.harm_part.to_json(net),
            "residuals": {
                "orthogonality": self.orthogonality_defect,
                "reconstruction": self.reconstruction_defect,
                "interior_laplacian": self.interior_laplacian,
            },
        })
    }
}

/// Solver for `Θ[S, S]` on a proper vertex subset `S`, grounded through the
/// edges leaving `S`.
fn subset_solver(net: &Network, subset: &[VertexId]) -> Result<(SpdSolver, Vec<Option<usize>>)> {
    let mut pos = vec![None; net.n_vertices()];
    for (i, v) in subset.iter().enumerate() {
        pos[v.index()] = Some(i);
    }
    let mut triplets = Vec::new();
    let mut ground = vec![0.0; subset.len()];
    for (i, &x) in subset.iter().enumerate() {
        triplets.push((i, i, net.total_conductance(x)?));
        for &(y, c) in net.neighbors(x) {
            match pos[y] {
                Some(j) => triplets.push((i, j, -c)),
                None => ground[i] += c,
            }
        }
    }
    let matrix = SparseSym::from_triplets(subset.len(), triplets);
    let opts = SolveOptions { dense_below: 2000, ..SolveOptions::default() };
    Ok((SpdSolver::grounded(matrix, ground, opts)?, pos))
}

fn dedup_vertices(net: &Network, set: &[VertexId]) -> Result<Vec<VertexId>> {
    let mut out = set.to_vec();
    for &v in &out {
        net.check_vertex(v)?;
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// Energy-orthogonal projection of `u` onto `span{δ_x : x ∈ interior}` and
/// its complement.
///
/// When the interior is all of `V` the point masses are dependent (they sum
/// to a constant), and the base point is dropped from the spanning set.
pub fn decompose(net: &Network, u: &EnergyVector, interior: &[VertexId]) -> Result<HarmonicSplit> {
    check_len(net.n_vertices(), u.len())?;
    net.ensure_valid()?;
    let mut set = dedup_vertices(net, interior)?;
    if set.len() == net.n_vertices() {
        set.retain(|&v| v != net.base_point());
    }
    let space = EnergySpace::new(net)?;
    let lap_u = apply_laplacian(net, u.values())?;

    let mut fin_values = vec![0.0; net.n_vertices()];
    if !set.is_empty() {
        // Gram matrix of the point masses is Θ[S, S]; right side ⟨δ_x, u⟩ = (Δu)(x)
        let (solver, _) = subset_solver(net, &set)?;
        let rhs: Vec<f64> = set.iter().map(|v| lap_u[v.index()]).collect();
        let coeffs = solver.solve(&rhs)?;
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numerical("projection onto point masses is ill-conditioned".into()));
        }
        for (v, a) in set.iter().zip(coeffs) {
            fin_values[v.index()] = a;
        }
    }
    let fin_part = EnergyVector::from_function(net, &fin_values)?;
    let harm_part = u.sub(&fin_part);
    let lap_h = apply_laplacian(net, harm_part.values())?;
    let interior_laplacian = set.iter().map(|v| lap_h[v.index()].abs()).fold(0.0, f64::max);
    let rebuilt = fin_part.axpy(1.0, &harm_part).sub(u);
    Ok(HarmonicSplit {
        orthogonality_defect: space.inner(&fin_part, &harm_part).abs(),
        reconstruction_defect: space.norm_sq(&rebuilt).max(0.0).sqrt(),
        interior_laplacian,
        fin_part,
        harm_part,
    })
}

/// Minimal-energy extension of boundary data.
#[derive(Debug, Clone)]
pub struct HarmonicExtension {
    /// Raw vertex values; equal to the boundary data on the boundary.
    pub values: Vec<f64>,
    /// `max |Δh|` over non-boundary vertices.
    pub interior_residual: f64,
}

impl HarmonicExtension {
    /// The extension as an element of `H_E` (shifted so the base value is 0).
    pub fn energy_vector(&self, net: &Network) -> Result<EnergyVector> {
        EnergyVector::from_function(net, &self.values)
    }
}

/// Solves `Δh = 0` off the boundary with `h` fixed on it.
pub fn solve_harmonic_truncation(
    net: &Network,
    boundary: &BTreeMap<VertexId, f64>,
) -> Result<HarmonicExtension> {
    net.ensure_valid()?;
    if boundary.is_empty() || boundary.len() >= net.n_vertices() {
        return Err(Error::Precondition(
            "boundary must be nonempty and strictly smaller than the vertex set".into(),
        ));
    }
    for &v in boundary.keys() {
        net.check_vertex(v)?;
    }
    let interior: Vec<VertexId> =
        (0..net.n_vertices()).map(VertexId).filter(|v| !boundary.contains_key(v)).collect();
    let (solver, pos) = subset_solver(net, &interior)?;
    let rhs: Vec<f64> = interior
        .iter()
        .map(|&x| {
            net.neighbors(x)
                .iter()
                .filter(|&&(y, _)| pos[y].is_none())
                .map(|&(y, c)| c * boundary[&VertexId(y)])
                .sum()
        })
        .collect();
    let inner = solver.solve(&rhs)?;
    let mut values = vec![0.0; net.n_vertices()];
    for (&v, &h) in boundary {
        values[v.index()] = h;
    }
    for (v, h) in interior.iter().zip(inner) {
        values[v.index()] = h;
    }
    let lap = apply_laplacian(net, &values)?;
    let interior_residual = interior.iter().map(|v| lap[v.index()].abs()).fold(0.0, f64::max);
    Ok(HarmonicExtension { values, interior_residual })
}

/// `‖h‖²_E`.
pub fn harmonic_energy(net: &Network, h: &EnergyVector) -> Result<f64> {
    crate::energy::energy_inner(net, h.values(), h.values())
}

/// On a path starting at the base point: `h(k) = Σ_{j<k} 1/c_j` along the
/// path, which is harmonic at every inner vertex. `None` for other networks.
pub fn staircase(net: &Network) -> Option<Vec<f64>> {
    let cond = net.path_conductances()?;
    let mut values = vec![0.0; net.n_vertices()];
    let (mut prev, mut cur, mut acc) = (usize::MAX, net.base_point().index(), 0.0);
    for c in cond {
        let &(next, _) = net.neighbors(VertexId(cur)).iter().find(|&&(w, _)| w != prev)?;
        acc += 1.0 / c;
        values[next] = acc;
        prev = cur;
        cur = next;
    }
    Some(values)
}

/// `lim ‖h‖²_E = 2 / (A − 1)` for the staircase on two-sided geometric chains.
pub fn two_sided_staircase_limit(a: f64) -> f64 {
    2.0 / (a - 1.0)
}

/// `2 Σ_{m=1}^{⌊n/2⌋} A^{−m}`, the staircase energy on the two-sided chain
/// with `n` vertices.
pub fn two_sided_staircase_energy(a: f64, n: usize) -> f64 {
    2.0 * (1..=n / 2).map(|m| a.powi(-(m as i32))).sum::<f64>()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StaircaseWitness {
    pub n: usize,
    pub energy: f64,
    pub closed_form: f64,
    pub limit: f64,
    pub interior_residual: f64,
}

/// Harmonic extension of the staircase's frontier values on the two-sided
/// geometric chain with `n` vertices.
pub fn staircase_witness(a: f64, n: usize) -> Result<StaircaseWitness> {
    let net = crate::graph::generate_chain(n, crate::graph::ChainProfile::TwoSidedGeometric(a))?;
    let stair = staircase(&net).ok_or_else(|| Error::Precondition("chain is not a path".into()))?;
    let (first, last) = (VertexId(0), VertexId(n - 1));
    let boundary = BTreeMap::from([(first, stair[0]), (last, stair[n - 1])]);
    let ext = solve_harmonic_truncation(&net, &boundary)?;
    let energy = harmonic_energy(&net, &ext.energy_vector(&net)?)?;
    Ok(StaircaseWitness {
        n,
        energy,
        closed_form: two_sided_staircase_energy(a, n),
        limit: two_sided_staircase_limit(a),
        interior_residual: ext.interior_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_chain, ChainProfile};

    #[test]
    fn full_interior_leaves_nothing_harmonic() {
        let net = generate_chain(6, ChainProfile::Geometric(2.0)).unwrap();
        let u = EnergyVector::from_function(&net, &[0.0, 1.0, -1.0, 2.0, 0.5, 3.0]).unwrap();
        let all: Vec<VertexId> = (0..6).map(VertexId).collect();
        let split = decompose(&net, &u, &all).unwrap();
        assert!(split.harm_part.max_abs() < 1e-12);
        assert!(split.fin_part.sub(&u).max_abs() < 1e-12);
    }

    #[test]
    fn harmonic_input_has_no_fin_part() {
        let net = generate_chain(8, ChainProfile::Unit).unwrap();
        let ramp: Vec<f64> = (0..8).map(|k| k as f64).collect();
        let u = EnergyVector::from_function(&net, &ramp).unwrap();
        let interior: Vec<VertexId> = (1..7).map(VertexId).collect();
        let split = decompose(&net, &u, &interior).unwrap();
        assert!(split.fin_part.max_abs() < 1e-9);
    }

    #[test]
    fn staircase_plus_bump_is_recovered() {
        let n = 41;
        let net = generate_chain(n, ChainProfile::TwoSidedGeometric(2.0)).unwrap();
        let stair = EnergyVector::from_function(&net, &staircase(&net).unwrap()).unwrap();
        let bump = EnergyVector::delta(&net, VertexId(20)).unwrap().scaled(0.75);
        let u = stair.axpy(1.0, &bump);
        let interior: Vec<VertexId> = (5..36).map(VertexId).collect();
        let split = decompose(&net, &u, &interior).unwrap();
        assert!(split.fin_part.sub(&bump).max_abs() < 1e-8);
        assert!(split.harm_part.sub(&stair).max_abs() < 1e-8);
        assert!(split.orthogonality_defect < 1e-9);
        assert!(split.interior_laplacian < 1e-9);
    }

    #[test]
    fn extension_examples() {
        let net = generate_chain(9, ChainProfile::TwoSidedGeometric(2.0)).unwrap();
        let stair = staircase(&net).unwrap();
        let boundary = BTreeMap::from([(VertexId(0), 0.0), (VertexId(8), stair[8])]);
        let ext = solve_harmonic_truncation(&net, &boundary).unwrap();
        for k in 0..9 {
            assert!((ext.values[k] - stair[k]).abs() < 1e-12);
        }
        assert!(ext.interior_residual <= 1e-10);

        let flat = BTreeMap::from([(VertexId(0), 2.5), (VertexId(8), 2.5)]);
        let ext = solve_harmonic_truncation(&net, &flat).unwrap();
        assert!(ext.values.iter().all(|v| (v - 2.5).abs() < 1e-12));

        let unit = generate_chain(6, ChainProfile::Unit).unwrap();
        let ramp = BTreeMap::from([(VertexId(0), 0.0), (VertexId(5), 1.0)]);
        let ext = solve_harmonic_truncation(&unit, &ramp).unwrap();
        for k in 0..6 {
            assert!((ext.values[k] - k as f64 / 5.0).abs() < 1e-14);
        }
        let e = harmonic_energy(&unit, &ext.energy_vector(&unit).unwrap()).unwrap();
        assert!((e - 0.2).abs() < 1e-14);

        assert!(solve_harmonic_truncation(&unit, &BTreeMap::new()).is_err());
    }

    #[test]
    fn staircase_energy_is_monotone_and_bounded() {
        let mut prev = 0.0;
        for n in (5..=41).step_by(4) {
            let w = staircase_witness(2.0, n).unwrap();
            assert!((w.energy - w.closed_form).abs() < 1e-12);
            assert!(w.energy > prev && w.energy <= w.limit + 1e-9);
            prev = w.energy;
        }
    }
}
