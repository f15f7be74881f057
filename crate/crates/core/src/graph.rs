//! Finite conductance networks.
//!
//! A [`Network`] is a connected, undirected, loop-free graph with a strictly
//! positive conductance on every edge and a distinguished base point. Infinite
//! networks are handled through finite truncations; the chain generators in
//! this module produce the nearest-neighbour families used throughout the
//! crate.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violations};

/// Dense vertex index in `0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VertexId(pub usize);

impl VertexId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Undirected edge with conductance `c`. Stored with `x < y` once validated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub x: VertexId,
    pub y: VertexId,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    SelfLoop { vertex: i64 },
    NonPositiveConductance { x: i64, y: i64, c: f64 },
    DuplicateEdge { x: i64, y: i64 },
    IsolatedVertex { vertex: i64 },
    Disconnected { components: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SelfLoop { vertex } => {
                write!(f, "self-loop at vertex {vertex} (edge {vertex} {vertex})")
            }
            Violation::NonPositiveConductance { x, y, c } => {
                write!(f, "nonpositive conductance {c} on edge {x} {y}")
            }
            Violation::DuplicateEdge { x, y } => write!(f, "duplicate edge {x} {y}"),
            Violation::IsolatedVertex { vertex } => write!(f, "isolated vertex {vertex}"),
            Violation::Disconnected { components } => {
                write!(f, "disconnected: {components} components")
            }
        }
    }
}

/// A finite electrical network `(V, E, c, o)`.
///
/// Values are immutable once built. [`Network::new`] rejects anything that
/// violates the conductance axioms; [`Network::unchecked`] keeps the raw data
/// so that [`Network::validate`] can report every violation.
#[derive(Debug, Clone)]
pub struct Network {
    labels: Vec<i64>,
    edges: Vec<Edge>,
    base: VertexId,
    adjacency: Vec<Vec<(usize, f64)>>,
    total: Vec<f64>,
    reduced_of: Vec<Option<usize>>,
    reduced: Vec<VertexId>,
}

impl Network {
    /// Builds and validates a network on dense vertices `0..n`.
    pub fn new(n: usize, edges: Vec<(usize, usize, f64)>, base: usize) -> Result<Self> {
        let net = Self::unchecked(n, edges, base)?;
        net.ensure_valid()?;
        Ok(net)
    }

    /// Builds a network without checking the conductance axioms. Vertex ids
    /// must still be in range.
    pub fn unchecked(n: usize, edges: Vec<(usize, usize, f64)>, base: usize) -> Result<Self> {
        Self::with_labels((0..n as i64).collect(), edges, base)
    }

    pub(crate) fn with_labels(
        labels: Vec<i64>,
        edges: Vec<(usize, usize, f64)>,
        base: usize,
    ) -> Result<Self> {
        let n = labels.len();
        if base >= n {
            return Err(Error::InvalidVertex(base));
        }
        let mut canon = Vec::with_capacity(edges.len());
        for (x, y, c) in edges {
            if x >= n {
                return Err(Error::InvalidVertex(x));
            }
            if y >= n {
                return Err(Error::InvalidVertex(y));
            }
            let (x, y) = if x <= y { (x, y) } else { (y, x) };
            canon.push(Edge { x: VertexId(x), y: VertexId(y), c });
        }
        canon.sort_by_key(|e| (e.x, e.y));

        let mut adjacency = vec![Vec::new(); n];
        let mut total = vec![0.0; n];
        for e in &canon {
            if e.x == e.y {
                continue;
            }
            adjacency[e.x.0].push((e.y.0, e.c));
            adjacency[e.y.0].push((e.x.0, e.c));
            total[e.x.0] += e.c;
            total[e.y.0] += e.c;
        }
        for nbrs in &mut adjacency {
            nbrs.sort_by_key(|&(y, _)| y);
        }
        let mut reduced_of = vec![None; n];
        let mut reduced = Vec::with_capacity(n.saturating_sub(1));
        for v in 0..n {
            if v != base {
                reduced_of[v] = Some(reduced.len());
                reduced.push(VertexId(v));
            }
        }
        Ok(Self { labels, edges: canon, base: VertexId(base), adjacency, total, reduced_of, reduced })
    }

    pub fn n_vertices(&self) -> usize {
        self.labels.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn base_point(&self) -> VertexId {
        self.base
    }

    /// Original label of a dense vertex id.
    pub fn label(&self, v: VertexId) -> i64 {
        self.labels[v.0]
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    /// Dense id of an original label.
    pub fn vertex_by_label(&self, label: i64) -> Option<VertexId> {
        self.labels.iter().position(|&l| l == label).map(VertexId)
    }

    pub fn neighbors(&self, v: VertexId) -> &[(usize, f64)] {
        &self.adjacency[v.0]
    }

    pub fn check_vertex(&self, v: VertexId) -> Result<()> {
        if v.0 < self.n_vertices() {
            Ok(())
        } else {
            Err(Error::InvalidVertex(v.0))
        }
    }

    /// Conductance on edge `xy`, if present.
    pub fn conductance(&self, x: VertexId, y: VertexId) -> Option<f64> {
        self.adjacency.get(x.0)?.iter().find(|&&(t, _)| t == y.0).map(|&(_, c)| c)
    }

    /// `c(x)`, the sum of conductances of edges at `x`.
    pub fn total_conductance(&self, x: VertexId) -> Result<f64> {
        self.check_vertex(x)?;
        Ok(self.total[x.0])
    }

    /// Transition probabilities `p_xy = c_xy / c(x)` of the reversible walk.
    pub fn transition_weights(&self, x: VertexId) -> Result<Vec<(VertexId, f64)>> {
        self.check_vertex(x)?;
        let cx = self.total[x.0];
        Ok(self.adjacency[x.0].iter().map(|&(y, c)| (VertexId(y), c / cx)).collect())
    }

    /// Vertices of `V' = V \ {o}` in increasing order.
    pub fn reduced_vertices(&self) -> &[VertexId] {
        &self.reduced
    }

    /// Position of `v` among the reduced coordinates, `None` for the base point.
    pub fn reduced_index(&self, v: VertexId) -> Option<usize> {
        self.reduced_of[v.0]
    }

    pub fn reduced_dim(&self) -> usize {
        self.reduced.len()
    }

    /// Lists every violation of the network axioms; empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            let (lx, ly) = (self.label(e.x), self.label(e.y));
            if e.x == e.y {
                out.push(Violation::SelfLoop { vertex: lx });
                continue;
            }
            if !(e.c > 0.0) || !e.c.is_finite() {
                out.push(Violation::NonPositiveConductance { x: lx, y: ly, c: e.c });
            }
            if !seen.insert((e.x, e.y)) {
                out.push(Violation::DuplicateEdge { x: lx, y: ly });
            }
        }
        for (v, nbrs) in self.adjacency.iter().enumerate() {
            if nbrs.is_empty() {
                out.push(Violation::IsolatedVertex { vertex: self.labels[v] });
            }
        }
        let components = self.component_count();
        if components > 1 {
            out.push(Violation::Disconnected { components });
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    pub(crate) fn ensure_valid(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(Violations(violations)))
        }
    }

    fn component_count(&self) -> usize {
        let n = self.n_vertices();
        let mut seen = vec![false; n];
        let mut count = 0;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for &(w, _) in &self.adjacency[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        count
    }

    /// Same topology and base point with conductances replaced edge by edge.
    pub fn with_conductances(&self, f: impl Fn(&Edge) -> f64) -> Result<Self> {
        let edges = self.edges.iter().map(|e| (e.x.0, e.y.0, f(e))).collect();
        let net = Self::with_labels(self.labels.clone(), edges, self.base.0)?;
        net.ensure_valid()?;
        Ok(net)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        self.with_conductances(|e| e.c * factor)
    }

    /// `Some(A)` when this is a path `0-1-…` from the base point with
    /// conductances `1, A, A², …` and `A > 1`.
    pub fn geometric_ratio(&self) -> Option<f64> {
        let path = self.path_conductances()?;
        if path.len() < 2 || path[0] != 1.0 {
            return None;
        }
        let a = path[1];
        if !(a > 1.0) {
            return None;
        }
        let consistent = path.windows(2).all(|w| ((w[1] / w[0]) - a).abs() <= 1e-12 * a);
        consistent.then_some(a)
    }

    /// Whether every conductance equals one.
    pub fn is_unit(&self) -> bool {
        self.edges.iter().all(|e| e.c == 1.0)
    }

    /// Conductances along the path starting at the base point, when the
    /// network is a simple path with the base point at one end.
    pub fn path_conductances(&self) -> Option<Vec<f64>> {
        let n = self.n_vertices();
        if self.edges.len() + 1 != n || self.adjacency[self.base.0].len() != 1 {
            return None;
        }
        let mut out = Vec::with_capacity(n - 1);
        let mut prev = usize::MAX;
        let mut cur = self.base.0;
        loop {
            let next = self.adjacency[cur].iter().find(|&&(w, _)| w != prev);
            match next {
                Some(&(w, c)) => {
                    if self.adjacency[cur].len() > 2 {
                        return None;
                    }
                    out.push(c);
                    prev = cur;
                    cur = w;
                }
                None => break,
            }
        }
        (out.len() + 1 == n).then_some(out)
    }
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels && self.edges == other.edges && self.base == other.base
    }
}

/// Conductance profiles for nearest-neighbour chains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChainProfile {
    Unit,
    Geometric(f64),
    Linear,
    TwoSidedGeometric(f64),
}

impl FromStr for ChainProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let ratio = || -> Result<f64> {
            let a = arg
                .ok_or_else(|| Error::Precondition(format!("profile {name} needs a ratio, e.g. {name}:2")))?;
            a.parse::<f64>().map_err(|_| Error::Precondition(format!("bad ratio {a:?}")))
        };
        match name {
            "unit" => Ok(ChainProfile::Unit),
            "linear" => Ok(ChainProfile::Linear),
            "geometric" => Ok(ChainProfile::Geometric(ratio()?)),
            "two_sided_geometric" => Ok(ChainProfile::TwoSidedGeometric(ratio()?)),
            other => Err(Error::Precondition(format!("unknown profile {other:?}"))),
        }
    }
}

impl fmt::Display for ChainProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainProfile::Unit => f.write_str("unit"),
            ChainProfile::Linear => f.write_str("linear"),
            ChainProfile::Geometric(a) => write!(f, "geometric:{a}"),
            ChainProfile::TwoSidedGeometric(a) => write!(f, "two_sided_geometric:{a}"),
        }
    }
}

/// Path graph on `n` vertices with the given conductance profile; base point
/// is dense vertex 0.
///
/// `Linear` uses `c_{k,k+1} = k + 1` so the first edge stays positive. The
/// two-sided profile labels vertices `-⌊n/2⌋ ..= ⌈n/2⌉ - 1` and puts
/// `A^max(|k|, |k+1|)` on edge `(k, k+1)`.
pub fn generate_chain(n: usize, profile: ChainProfile) -> Result<Network> {
    if n < 2 {
        return Err(Error::Precondition(format!("chain needs n >= 2, got {n}")));
    }
    if let ChainProfile::Geometric(a) | ChainProfile::TwoSidedGeometric(a) = profile {
        if !(a > 1.0) || !a.is_finite() {
            return Err(Error::Precondition(format!("ratio must satisfy A > 1, got {a}")));
        }
    }
    let offset = match profile {
        ChainProfile::TwoSidedGeometric(_) => (n / 2) as i64,
        _ => 0,
    };
    let labels: Vec<i64> = (0..n as i64).map(|k| k - offset).collect();
    let edges = (0..n - 1)
        .map(|k| {
            let c = match profile {
                ChainProfile::Unit => 1.0,
                ChainProfile::Geometric(a) => a.powi(k as i32),
                ChainProfile::Linear => (k + 1) as f64,
                ChainProfile::TwoSidedGeometric(a) => {
                    let lk = labels[k];
                    a.powi(lk.abs().max((lk + 1).abs()) as i32)
                }
            };
            (k, k + 1, c)
        })
        .collect();
    let net = Network::with_labels(labels, edges, 0)?;
    net.ensure_valid()?;
    Ok(net)
}

/// Seeded random connected network: a random spanning tree plus each other
/// pair with probability `extra_edge_prob`; conductances uniform in
/// `[c_min, c_max]`.
pub fn random_network<R: Rng>(
    rng: &mut R,
    n: usize,
    extra_edge_prob: f64,
    c_min: f64,
    c_max: f64,
) -> Result<Network> {
    if n < 2 {
        return Err(Error::Precondition(format!("random network needs n >= 2, got {n}")));
    }
    if !(c_min > 0.0 && c_max >= c_min) {
        return Err(Error::Precondition("conductance range must be positive".into()));
    }
    let mut pairs = BTreeSet::new();
    for v in 1..n {
        let u = rng.gen_range(0..v);
        pairs.insert((u, v));
    }
    for x in 0..n {
        for y in x + 1..n {
            if !pairs.contains(&(x, y)) && rng.gen::<f64>() < extra_edge_prob {
                pairs.insert((x, y));
            }
        }
    }
    let edges = pairs.into_iter().map(|(x, y)| (x, y, rng.gen_range(c_min..=c_max))).collect();
    Network::new(n, edges, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_path() -> Network {
        generate_chain(3, ChainProfile::Unit).unwrap()
    }

    #[test]
    fn unit_chain_edges() {
        let net = unit_path();
        let e: Vec<_> = net.edges().iter().map(|e| (e.x.0, e.y.0, e.c)).collect();
        assert_eq!(e, vec![(0, 1, 1.0), (1, 2, 1.0)]);
        assert_eq!(net.base_point(), VertexId(0));
    }

    #[test]
    fn geometric_chain_conductances() {
        let net = generate_chain(4, ChainProfile::Geometric(2.0)).unwrap();
        let c: Vec<_> = net.edges().iter().map(|e| e.c).collect();
        assert_eq!(c, vec![1.0, 2.0, 4.0]);
        assert_eq!(net.geometric_ratio(), Some(2.0));
    }

    #[test]
    fn geometric_ratio_must_exceed_one() {
        assert!(matches!(generate_chain(2, ChainProfile::Geometric(0.5)), Err(Error::Precondition(_))));
        assert!(generate_chain(1, ChainProfile::Unit).is_err());
    }

    #[test]
    fn linear_and_two_sided_profiles() {
        let lin = generate_chain(4, ChainProfile::Linear).unwrap();
        let c: Vec<_> = lin.edges().iter().map(|e| e.c).collect();
        assert_eq!(c, vec![1.0, 2.0, 3.0]);

        let two = generate_chain(9, ChainProfile::TwoSidedGeometric(2.0)).unwrap();
        assert_eq!(two.labels(), &[-4, -3, -2, -1, 0, 1, 2, 3, 4]);
        let c: Vec<_> = two.edges().iter().map(|e| e.c).collect();
        assert_eq!(c, vec![16.0, 8.0, 4.0, 2.0, 2.0, 4.0, 8.0, 16.0]);
    }

    #[test]
    fn total_conductance_values() {
        let net = unit_path();
        assert_eq!(net.total_conductance(VertexId(1)).unwrap(), 2.0);
        assert_eq!(net.total_conductance(VertexId(0)).unwrap(), 1.0);
        let g = generate_chain(3, ChainProfile::Geometric(2.0)).unwrap();
        assert_eq!(g.total_conductance(VertexId(1)).unwrap(), 3.0);
        assert!(matches!(net.total_conductance(VertexId(7)), Err(Error::InvalidVertex(7))));
    }

    #[test]
    fn transition_weight_values() {
        let net = unit_path();
        assert_eq!(
            net.transition_weights(VertexId(1)).unwrap(),
            vec![(VertexId(0), 0.5), (VertexId(2), 0.5)]
        );
        assert_eq!(net.transition_weights(VertexId(0)).unwrap(), vec![(VertexId(1), 1.0)]);
        let g = generate_chain(3, ChainProfile::Geometric(2.0)).unwrap();
        let w = g.transition_weights(VertexId(1)).unwrap();
        assert!((w[0].1 - 1.0 / 3.0).abs() < 1e-15);
        assert!((w[1].1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn validation_reports_violations() {
        assert!(unit_path().validate().is_empty());

        let split = Network::unchecked(4, vec![(0, 1, 1.0), (2, 3, 1.0)], 0).unwrap();
        assert_eq!(split.validate(), vec![Violation::Disconnected { components: 2 }]);

        let neg = Network::unchecked(2, vec![(0, 1, -0.5)], 0).unwrap();
        assert_eq!(neg.validate(), vec![Violation::NonPositiveConductance { x: 0, y: 1, c: -0.5 }]);

        let lonely = Network::unchecked(3, vec![(0, 1, 1.0)], 0).unwrap();
        let v = lonely.validate();
        assert!(v.contains(&Violation::IsolatedVertex { vertex: 2 }));
        assert!(v.contains(&Violation::Disconnected { components: 2 }));

        let dup = Network::unchecked(2, vec![(0, 1, 1.0), (1, 0, 2.0)], 0).unwrap();
        assert_eq!(dup.validate(), vec![Violation::DuplicateEdge { x: 0, y: 1 }]);
    }

    #[test]
    fn profile_parsing() {
        assert_eq!("unit".parse::<ChainProfile>().unwrap(), ChainProfile::Unit);
        assert_eq!("geometric:2".parse::<ChainProfile>().unwrap(), ChainProfile::Geometric(2.0));
        assert!("geometric".parse::<ChainProfile>().is_err());
        assert!("zigzag".parse::<ChainProfile>().is_err());
    }

    #[test]
    fn random_networks_are_valid() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for n in 2..25 {
            let net = random_network(&mut rng, n, 0.2, 0.5, 2.0).unwrap();
            assert!(net.is_valid());
        }
    }
}
