//! Undirected graphs, vertex regions and the region algebra used to pick
//! sum regions: k-th nearest neighbourhoods, closed regions, boundaries and
//! the greedy independent-set construction.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};

/// Vertex identifier, `0..n`.
pub type Vertex = usize;

/// Index of an edge in [`PairwiseGraph::edges`].
pub type EdgeId = usize;

/// Simple undirected graph on vertices `0..n`.
///
/// Edges are stored as `(i, j)` with `i < j`, sorted lexicographically; an
/// edge's position in that list is its [`EdgeId`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphJson", into = "GraphJson")]
pub struct PairwiseGraph {
    n: usize,
    edges: Vec<(Vertex, Vertex)>,
    // adjacency[i] = sorted (neighbour, edge id)
    adjacency: Vec<Vec<(Vertex, EdgeId)>>,
}

impl PairwiseGraph {
    /// Builds a graph from an arbitrary list of vertex pairs.
    ///
    /// Pairs may be given in either orientation; self-loops, duplicates and
    /// out-of-range endpoints are rejected.
    pub fn new(n: usize, pairs: impl IntoIterator<Item = (Vertex, Vertex)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in pairs {
            if a >= n || b >= n {
                return Err(argument(format!("edge ({a},{b}) has an endpoint outside 0..{n}")));
            }
            if a == b {
                return Err(argument(format!("self-loop at vertex {a}")));
            }
            let e = (a.min(b), a.max(b));
            if !set.insert(e) {
                return Err(argument(format!("duplicate edge ({},{})", e.0, e.1)));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut adjacency = vec![Vec::new(); n];
        for (id, &(i, j)) in edges.iter().enumerate() {
            adjacency[i].push((j, id));
            adjacency[j].push((i, id));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        Ok(Self { n, edges, adjacency })
    }

    pub fn edgeless(n: usize) -> Self {
        Self::new(n, []).expect("edgeless graph is valid")
    }

    pub fn complete(n: usize) -> Self {
        let pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
        Self::new(n, pairs).expect("complete graph is valid")
    }

    /// `rows × cols` square lattice with row-major vertex labels.
    pub fn grid(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "grid dimensions must be positive");
        let mut pairs = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let v = r * cols + c;
                if c + 1 < cols {
                    pairs.push((v, v + 1));
                }
                if r + 1 < rows {
                    pairs.push((v, v + cols));
                }
            }
        }
        Self::new(rows * cols, pairs).expect("grid graph is valid")
    }

    /// Erdős–Rényi graph: every unordered pair, visited in lexicographic
    /// order, is included independently with probability `p`.
    pub fn random<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Self {
        assert!((0.0..=1.0).contains(&p), "connection probability must lie in [0, 1]");
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < p {
                    pairs.push((i, j));
                }
            }
        }
        Self::new(n, pairs).expect("random graph is valid")
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn edges(&self) -> &[(Vertex, Vertex)] {
        &self.edges
    }

    #[inline]
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Neighbours of `i` with the id of the connecting edge, sorted by neighbour.
    #[inline]
    pub fn adjacent(&self, i: Vertex) -> &[(Vertex, EdgeId)] {
        &self.adjacency[i]
    }

    pub fn neighbors(&self, i: Vertex) -> impl Iterator<Item = Vertex> + '_ {
        self.adjacency[i].iter().map(|&(j, _)| j)
    }

    #[inline]
    pub fn degree(&self, i: Vertex) -> usize {
        self.adjacency[i].len()
    }

    pub fn edge_id(&self, i: Vertex, j: Vertex) -> Option<EdgeId> {
        let adj = self.adjacency.get(i)?;
        adj.binary_search_by_key(&j, |&(v, _)| v).ok().map(|k| adj[k].1)
    }

    #[inline]
    pub fn has_edge(&self, i: Vertex, j: Vertex) -> bool {
        self.edge_id(i, j).is_some()
    }

    /// All vertices as a region.
    pub fn all(&self) -> Region {
        Region((0..self.n).collect())
    }

    /// Checks that every member of `r` is a vertex of this graph.
    pub fn check_region(&self, r: &Region) -> Result<()> {
        match r.0.last() {
            Some(&v) if v >= self.n => Err(Error::Region(format!(
                "vertex {v} is outside the graph (n = {})",
                self.n
            ))),
            _ => Ok(()),
        }
    }

    /// Relabels vertices: old vertex `i` becomes `perm[i]`.
    pub fn relabel(&self, perm: &[Vertex]) -> Self {
        assert_eq!(perm.len(), self.n);
        Self::new(self.n, self.edges.iter().map(|&(i, j)| (perm[i], perm[j])))
            .expect("relabeling by a permutation keeps the graph valid")
    }
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    edges: Vec<[Vertex; 2]>,
}

impl TryFrom<GraphJson> for PairwiseGraph {
    type Error = Error;

    fn try_from(g: GraphJson) -> Result<Self> {
        PairwiseGraph::new(g.n, g.edges.into_iter().map(|[i, j]| (i, j)))
    }
}

impl From<PairwiseGraph> for GraphJson {
    fn from(g: PairwiseGraph) -> Self {
        GraphJson {
            n: g.n,
            edges: g.edges.iter().map(|&(i, j)| [i, j]).collect(),
        }
    }
}

/// A set of vertices kept in ascending order without duplicates.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "Vec<Vertex>", into = "Vec<Vertex>")]
pub struct Region(Vec<Vertex>);

impl Region {
    pub fn new(members: impl IntoIterator<Item = Vertex>) -> Self {
        let mut v: Vec<_> = members.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Region(v)
    }

    pub fn empty() -> Self {
        Region(Vec::new())
    }

    pub fn singleton(i: Vertex) -> Self {
        Region(vec![i])
    }

    pub fn pair(i: Vertex, j: Vertex) -> Self {
        Region::new([i, j])
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn contains(&self, v: Vertex) -> bool {
        self.0.binary_search(&v).is_ok()
    }

    #[inline]
    pub fn members(&self) -> &[Vertex] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = Vertex> + '_ {
        self.0.iter().copied()
    }

    /// Position of `v` within the ascending member list.
    pub fn position(&self, v: Vertex) -> Option<usize> {
        self.0.binary_search(&v).ok()
    }

    pub fn union(&self, other: &Region) -> Region {
        Region::new(self.iter().chain(other.iter()))
    }

    pub fn difference(&self, other: &Region) -> Region {
        Region(self.iter().filter(|&v| !other.contains(v)).collect())
    }

    pub fn intersection(&self, other: &Region) -> Region {
        Region(self.iter().filter(|&v| other.contains(v)).collect())
    }

    pub fn is_subset(&self, other: &Region) -> bool {
        self.iter().all(|v| other.contains(v))
    }

    pub fn is_disjoint(&self, other: &Region) -> bool {
        self.iter().all(|v| !other.contains(v))
    }
}

impl From<Vec<Vertex>> for Region {
    fn from(v: Vec<Vertex>) -> Self {
        Region::new(v)
    }
}

impl From<Region> for Vec<Vertex> {
    fn from(r: Region) -> Self {
        r.0
    }
}

impl FromIterator<Vertex> for Region {
    fn from_iter<I: IntoIterator<Item = Vertex>>(iter: I) -> Self {
        Region::new(iter)
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "}}")
    }
}

/// Vertices adjacent to some member of `a` but not in `a`.
pub fn boundary(g: &PairwiseGraph, a: &Region) -> Region {
    a.iter()
        .flat_map(|i| g.neighbors(i))
        .filter(|&j| !a.contains(j))
        .collect()
}

/// The `k`-th nearest neighbouring region `N_k(t)`, with `N_0(t) = t`.
///
/// `N_k` consists of the neighbours of `N_{k-1}` that are not already in
/// `N_0 ∪ … ∪ N_{k-1}`.
pub fn neighborhood(g: &PairwiseGraph, t: &Region, k: usize) -> Region {
    bfs_layers(g, t, k).0
}

/// `R_k(t) = N_0(t) ∪ … ∪ N_k(t)`.
pub fn closed_region(g: &PairwiseGraph, t: &Region, k: usize) -> Region {
    bfs_layers(g, t, k).1
}

fn bfs_layers(g: &PairwiseGraph, t: &Region, k: usize) -> (Region, Region) {
    let mut layer = t.clone();
    let mut covered = t.clone();
    for _ in 0..k {
        let next = boundary(g, &layer).difference(&covered);
        covered = covered.union(&next);
        layer = next;
        if layer.is_empty() {
            break;
        }
    }
    (layer, covered)
}

/// Greedy independent set inside the subgraph induced by `candidates`.
///
/// Repeatedly picks a vertex of minimum degree in the shrinking candidate
/// subgraph and removes it together with its remaining neighbours. When
/// several vertices share a nonzero minimum degree the one with the largest
/// `tie_weight` wins; any remaining tie goes to the smallest vertex id.
pub fn greedy_independent_set<W, T>(g: &PairwiseGraph, candidates: &Region, tie_weight: T) -> Region
where
    W: PartialOrd,
    T: Fn(Vertex) -> W,
{
    let mut remaining: Vec<Vertex> = candidates.members().to_vec();
    let mut chosen = Vec::new();
    while !remaining.is_empty() {
        let degree = |v: Vertex| remaining.iter().filter(|&&u| g.has_edge(v, u)).count();
        let degrees: Vec<usize> = remaining.iter().map(|&v| degree(v)).collect();
        let min_deg = *degrees.iter().min().expect("nonempty");
        let mut best: Option<(Vertex, W)> = None;
        for (&v, &d) in remaining.iter().zip(&degrees) {
            if d != min_deg {
                continue;
            }
            if min_deg == 0 {
                best = Some((v, tie_weight(v)));
                break;
            }
            let w = tie_weight(v);
            // `remaining` is ascending, so strict improvement keeps the smallest id on ties.
            match &best {
                Some((_, bw)) if !(w > *bw) => {}
                _ => best = Some((v, w)),
            }
        }
        let (r, _) = best.expect("a minimum-degree vertex exists");
        chosen.push(r);
        remaining.retain(|&u| u != r && !g.has_edge(r, u));
    }
    Region::new(chosen)
}
