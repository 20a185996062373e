//! Transition matrices and Perron–Frobenius data, turn legality, Whitehead
//! graphs, clean maps, bounded cancellation and leaf segments.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use petgraph::graph::{NodeIndex, UnGraph};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{path_turns, reduce_path, Edge, Graph, GraphMap, Path, Turn};
use crate::stallings::{fold_to_immersion, iterate_image, ImageStep};

/// Entry `(i, j)` counts occurrences of edge pair `i` in the image of `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub entries: Vec<Vec<u64>>,
}

impl TransitionMatrix {
    pub fn from_map(m: &GraphMap) -> Result<Self> {
        if !m.is_self_map() {
            return Err(Error::MismatchedGraphs("transition matrix needs a self-map".into()));
        }
        let n = m.domain.num_edge_pairs();
        let mut entries = vec![vec![0; n]; n];
        for (j, img) in m.edge_images.iter().enumerate() {
            for e in img {
                entries[e.pair()][j] += 1;
            }
        }
        Ok(TransitionMatrix { entries })
    }

    pub fn new(entries: Vec<Vec<u64>>) -> Self {
        TransitionMatrix { entries }
    }

    pub fn identity(n: usize) -> Self {
        TransitionMatrix {
            entries: (0..n).map(|i| (0..n).map(|j| u64::from(i == j)).collect()).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.entries.len()
    }

    pub fn mul(&self, other: &TransitionMatrix) -> TransitionMatrix {
        let n = self.size();
        let mut out = vec![vec![0u64; n]; n];
        for i in 0..n {
            for k in 0..n {
                let a = self.entries[i][k];
                if a == 0 {
                    continue;
                }
                for j in 0..n {
                    out[i][j] = out[i][j].saturating_add(a.saturating_mul(other.entries[k][j]));
                }
            }
        }
        TransitionMatrix { entries: out }
    }

    pub fn pow(&self, k: usize) -> TransitionMatrix {
        (0..k).fold(TransitionMatrix::identity(self.size()), |acc, _| acc.mul(self))
    }

    pub fn le_entrywise(&self, other: &TransitionMatrix) -> bool {
        self.entries
            .iter()
            .zip(&other.entries)
            .all(|(r, s)| r.iter().zip(s).all(|(a, b)| a <= b))
    }

    pub fn transpose(&self) -> TransitionMatrix {
        let n = self.size();
        TransitionMatrix {
            entries: (0..n).map(|i| (0..n).map(|j| self.entries[j][i]).collect()).collect(),
        }
    }

    fn pattern(&self) -> Vec<Vec<bool>> {
        self.entries.iter().map(|r| r.iter().map(|&x| x > 0).collect()).collect()
    }

    /// Nonzero entries of each row, as `(column, value)`.
    fn sparse_rows(&self) -> Vec<Vec<(usize, f64)>> {
        self.entries
            .iter()
            .map(|r| r.iter().enumerate().filter(|&(_, &x)| x > 0).map(|(j, &x)| (j, x as f64)).collect())
            .collect()
    }

    /// Strongly connected digraph `j → i` when entry `(i, j)` is positive;
    /// a single node needs a loop.
    pub fn is_irreducible(&self) -> bool {
        let n = self.size();
        if n == 0 {
            return false;
        }
        let mut forward = vec![Vec::new(); n];
        let mut backward = vec![Vec::new(); n];
        for (i, row) in self.entries.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                if x > 0 {
                    forward[j].push(i);
                    backward[i].push(j);
                }
            }
        }
        let reaches_all = |adj: &[Vec<usize>]| {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([0]);
            let mut count = 0;
            while let Some(c) = queue.pop_front() {
                for &i in &adj[c] {
                    if !seen[i] {
                        seen[i] = true;
                        count += 1;
                        queue.push_back(i);
                    }
                }
            }
            count == n
        };
        reaches_all(&forward) && reaches_all(&backward)
    }

    /// Irreducible with some power entrywise positive, checked up to the
    /// Wielandt exponent `(n−1)² + 1`.
    pub fn is_primitive(&self) -> bool {
        if !self.is_irreducible() {
            return false;
        }
        let n = self.size();
        let pat = self.pattern();
        let mut cur = pat.clone();
        for _ in 0..(n - 1) * (n - 1) + 1 {
            if cur.iter().all(|r| r.iter().all(|&x| x)) {
                return true;
            }
            cur = bool_mul(&cur, &pat);
        }
        false
    }
}

fn bool_mul(a: &[Vec<bool>], b: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).any(|k| a[i][k] && b[k][j])).collect())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PFData {
    pub lambda: f64,
    pub lower: f64,
    pub upper: f64,
    /// Positive right eigenvector, normalized to sum 1.
    pub right_eigenvector: Vec<f64>,
    /// Positive left eigenvector, least entry 1: the PF edge lengths.
    pub left_eigenvector: Vec<f64>,
    pub iterations: usize,
}

pub const DEFAULT_TOL: f64 = 1e-12;
const MAX_ITERATIONS: usize = 200_000;

/// Collatz–Wielandt bounds `min (Av)_i / v_i` and `max (Av)_i / v_i`.
pub fn collatz_wielandt(a: &TransitionMatrix, v: &[f64]) -> (f64, f64) {
    cw_bounds(&a.sparse_rows(), v)
}

fn cw_bounds(rows: &[Vec<(usize, f64)>], v: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (i, row) in rows.iter().enumerate() {
        let av: f64 = row.iter().map(|&(j, x)| x * v[j]).sum();
        let r = av / v[i];
        lo = lo.min(r);
        hi = hi.max(r);
    }
    (lo, hi)
}

/// Lower and upper Collatz–Wielandt bounds.
pub type CwBounds = (f64, f64);

/// Power iteration on `A + I`, which shares the PF eigenvector of `A` and
/// is primitive whenever `A` is irreducible. Returns the final vector and
/// every pair of bounds met along the way.
pub fn pf_trace(a: &TransitionMatrix, tol: f64) -> Result<(Vec<f64>, Vec<CwBounds>)> {
    if !a.is_irreducible() {
        return Err(Error::Precondition("matrix is reducible".into()));
    }
    let n = a.size();
    let rows = a.sparse_rows();
    let mut v = vec![1.0 / n as f64; n];
    let mut trace = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        let (lo, hi) = cw_bounds(&rows, &v);
        trace.push((lo, hi));
        if hi - lo <= tol {
            return Ok((v, trace));
        }
        let mut w: Vec<f64> = (0..n)
            .map(|i| v[i] + rows[i].iter().map(|&(j, x)| x * v[j]).sum::<f64>())
            .collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        v = w;
    }
    Err(Error::NoConvergence {
        tol,
        iterations: MAX_ITERATIONS,
    })
}

pub fn pf_eigenvalue(a: &TransitionMatrix, tol: f64) -> Result<PFData> {
    let (right, trace) = pf_trace(a, tol)?;
    let (lower, upper) = *trace.last().unwrap();
    let (mut left, _) = pf_trace(&a.transpose(), tol)?;
    let m = left.iter().copied().fold(f64::INFINITY, f64::min);
    left.iter_mut().for_each(|x| *x /= m);
    Ok(PFData {
        lambda: 0.5 * (lower + upper),
        lower,
        upper,
        right_eigenvector: right,
        left_eigenvector: left,
        iterations: trace.len(),
    })
}

/// Orbit of a turn under the direction map, ending at the first
/// degenerate turn or repeat.
fn turn_orbit(t: Turn, dmap: &[Option<Edge>]) -> Vec<Turn> {
    let mut orbit = vec![t];
    let mut seen: BTreeSet<Turn> = BTreeSet::from([t]);
    let mut cur = t;
    while !cur.is_degenerate() {
        match cur.map(dmap) {
            Some(n) if seen.insert(n) => {
                orbit.push(n);
                cur = n;
            }
            _ => break,
        }
    }
    orbit
}

/// A turn is legal when no iterate of the direction map makes it
/// degenerate.
pub fn is_legal_turn(m: &GraphMap, t: Turn) -> bool {
    !turn_orbit(t, &m.direction_map()).last().unwrap().is_degenerate()
}

pub fn is_legal_path(m: &GraphMap, p: &[Edge]) -> bool {
    let dmap = m.direction_map();
    path_turns(p).all(|t| !turn_orbit(t, &dmap).last().unwrap().is_degenerate())
}

/// Taken turns of `f` closed under the direction map.
pub fn taken_turns(m: &GraphMap) -> BTreeSet<Turn> {
    close_turns(m.image_turns(), &m.direction_map())
}

fn close_turns(seed: BTreeSet<Turn>, dmap: &[Option<Edge>]) -> BTreeSet<Turn> {
    let mut all = seed.clone();
    let mut queue: VecDeque<Turn> = seed.into_iter().collect();
    while let Some(t) = queue.pop_front() {
        if let Some(n) = t.map(dmap) {
            if all.insert(n) {
                queue.push_back(n);
            }
        }
    }
    all
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainTrackCheck {
    pub is_train_track: bool,
    /// A taken turn and its orbit down to a degenerate turn.
    pub illegal_orbit: Option<Vec<Turn>>,
}

pub fn is_train_track(m: &GraphMap) -> TrainTrackCheck {
    if m.edge_images.iter().any(|p| p.is_empty() || !crate::graphs::is_reduced(p)) {
        return TrainTrackCheck {
            is_train_track: false,
            illegal_orbit: None,
        };
    }
    let dmap = m.direction_map();
    for t in m.image_turns() {
        let orbit = turn_orbit(t, &dmap);
        if orbit.last().unwrap().is_degenerate() {
            return TrainTrackCheck {
                is_train_track: false,
                illegal_orbit: Some(orbit),
            };
        }
    }
    TrainTrackCheck {
        is_train_track: true,
        illegal_orbit: None,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WhiteheadGraph {
    pub vertex: usize,
    pub nodes: Vec<Edge>,
    pub edges: Vec<Turn>,
}

impl WhiteheadGraph {
    fn adjacency(&self) -> (usize, Vec<(usize, usize)>) {
        let idx: HashMap<Edge, usize> = self.nodes.iter().enumerate().map(|(i, &d)| (d, i)).collect();
        let edges = self.edges.iter().map(|t| (idx[&t.0], idx[&t.1])).collect();
        (self.nodes.len(), edges)
    }

    pub fn is_connected(&self) -> bool {
        let (n, edges) = self.adjacency();
        count_components(n, &edges, None) <= 1
    }

    pub fn cut_vertices(&self) -> Vec<Edge> {
        let (n, edges) = self.adjacency();
        articulation_points(n, &edges).into_iter().map(|i| self.nodes[i]).collect()
    }

    pub fn has_cut_vertex(&self) -> bool {
        !self.cut_vertices().is_empty()
    }
}

/// Components of a simple undirected graph, optionally without one node.
pub fn count_components(n: usize, edges: &[(usize, usize)], removed: Option<usize>) -> usize {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut count = 0;
    for s in 0..n {
        if seen[s] || Some(s) == removed {
            continue;
        }
        count += 1;
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] && Some(w) != removed {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    count
}

/// Articulation points of a simple undirected graph, sorted.
pub fn articulation_points(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut g = UnGraph::<(), ()>::with_capacity(n, edges.len());
    for _ in 0..n {
        g.add_node(());
    }
    for &(a, b) in edges {
        if a != b {
            g.add_edge(NodeIndex::new(a), NodeIndex::new(b), ());
        }
    }
    let mut cut: Vec<usize> = petgraph::algo::articulation_points::articulation_points(&g)
        .into_iter()
        .map(|v| v.index())
        .collect();
    cut.sort_unstable();
    cut
}

fn bucket(g: &Graph, turns: &BTreeSet<Turn>) -> Vec<WhiteheadGraph> {
    let star = g.star();
    let mut by_vertex: BTreeMap<usize, Vec<Turn>> = BTreeMap::new();
    for &t in turns {
        by_vertex.entry(g.origin(t.0)).or_default().push(t);
    }
    (0..g.num_vertices())
        .map(|v| {
            let mut nodes = star[v].clone();
            nodes.sort_unstable();
            WhiteheadGraph {
                vertex: v,
                nodes,
                edges: by_vertex.remove(&v).unwrap_or_default(),
            }
        })
        .collect()
}

pub fn whitehead_graphs(m: &GraphMap) -> Vec<WhiteheadGraph> {
    bucket(&m.domain, &taken_turns(m))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CleanStatus {
    Clean,
    /// Irreducible with connected Whitehead graphs but not primitive;
    /// unreachable for correct inputs.
    WeaklyCleanOnly,
    NotWeaklyClean { vertex: usize },
    NotIrreducible,
}

pub fn is_clean(m: &GraphMap) -> Result<CleanStatus> {
    if !is_train_track(m).is_train_track {
        return Err(Error::Precondition("map is not a train track".into()));
    }
    let a = TransitionMatrix::from_map(m)?;
    if !a.is_irreducible() {
        return Ok(CleanStatus::NotIrreducible);
    }
    if let Some(w) = whitehead_graphs(m).iter().find(|w| !w.is_connected()) {
        return Ok(CleanStatus::NotWeaklyClean { vertex: w.vertex });
    }
    Ok(if a.is_primitive() {
        CleanStatus::Clean
    } else {
        CleanStatus::WeaklyCleanOnly
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelativeWhiteheadGraph {
    pub graph: WhiteheadGraph,
    /// Every edge maps under `h` to an `f`-legal turn.
    pub legal: bool,
}

/// Relative Whitehead graphs of `(X, g, h)` with `h ∘ g` an iterate of the
/// train track `f`: turns of `g(f^j(e))` for all `j` and edges `e`.
pub fn relative_whitehead_graphs(f: &GraphMap, g: &GraphMap, h: &GraphMap) -> Result<Vec<RelativeWhiteheadGraph>> {
    if g.domain != f.domain || h.domain != g.codomain || h.codomain != f.domain {
        return Err(Error::MismatchedGraphs("expected g: Γ → X and h: X → Γ".into()));
    }
    let dg = g.direction_map();
    let mut turns = g.image_turns();
    for t in taken_turns(f) {
        if let Some(n) = t.map(&dg) {
            turns.insert(n);
        }
    }
    let dh = h.direction_map();
    let fd = f.direction_map();
    let on_x = bucket(&g.codomain, &turns);
    Ok(on_x
        .into_iter()
        .map(|graph| {
            let legal = graph.edges.iter().all(|t| match t.map(&dh) {
                Some(ht) => !turn_orbit(ht, &fd).last().unwrap().is_degenerate(),
                None => false,
            });
            RelativeWhiteheadGraph { graph, legal }
        })
        .collect())
}

/// `f̂^i = h_i ∘ v_i` on `S_i`, tightened.
#[derive(Clone, Debug)]
pub struct InducedMap {
    pub step: ImageStep,
    pub map: GraphMap,
}

pub fn induced_map_on_image(f: &GraphMap, i: usize) -> Result<InducedMap> {
    let seq = iterate_image(f, i)?;
    let step = seq.steps.into_iter().last().ok_or_else(|| Error::Precondition("need i ≥ 1".into()))?;
    let map = step.subgroup.label.then(&step.fold_map)?.tighten()?;
    Ok(InducedMap { step, map })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CancellationBounds {
    pub c: f64,
    pub critical: Option<f64>,
    pub folds: usize,
}

/// Bounded cancellation constant from the fold factorization: the total
/// length of the folded segments in the given codomain metric.
pub fn cancellation_bounds(m: &GraphMap, metric: &[f64], lambda: Option<f64>) -> Result<CancellationBounds> {
    let fr = fold_to_immersion(m)?;
    let c = fr.folds.iter().fold(0.0, |acc, f| acc + metric[f.label.pair()]);
    let critical = match lambda {
        Some(l) if l > 1.0 => Some(2.0 * c / (l - 1.0)),
        Some(_) => return Err(Error::Precondition("critical constant needs λ > 1".into())),
        None => None,
    };
    Ok(CancellationBounds {
        c,
        critical,
        folds: fr.folds.len(),
    })
}

pub fn path_length(p: &[Edge], metric: &[f64]) -> f64 {
    p.iter().map(|e| metric[e.pair()]).sum()
}

/// Length cancelled between `[f(a)]` and `[f(b)]` in `[f(a·b)]`.
pub fn observed_cancellation(m: &GraphMap, a: &[Edge], b: &[Edge], metric: &[f64]) -> f64 {
    let fa = m.image_of_path(a);
    let fb = m.image_of_path(b);
    let fab = reduce_path(fa.iter().chain(&fb).copied());
    0.5 * (path_length(&fa, metric) + path_length(&fb, metric) - path_length(&fab, metric))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafSegment {
    pub path: Path,
    pub seed: Edge,
    /// `seed` occurs in the tightened `f^period(seed)`.
    pub period: usize,
    pub depth: usize,
}

impl LeafSegment {
    pub fn nested_in(&self, other: &LeafSegment) -> bool {
        self.path.is_empty() || other.path.windows(self.path.len()).any(|w| w == self.path.as_slice())
    }
}

/// Smallest `p ≤ 2n` and least edge with `e` in `[f^p(e)]`, same
/// orientation.
pub fn leaf_seed(m: &GraphMap) -> Result<(Edge, usize)> {
    let n = m.domain.num_edge_pairs();
    let mut it = GraphMap::identity(&m.domain);
    for p in 1..=2 * n {
        it = it.compose(m)?;
        for e in m.domain.positive_edges() {
            let img = it.image(e);
            if img.len() > 1 && img.contains(&e) {
                return Ok((e, p));
            }
        }
    }
    Err(Error::Precondition("no expanding periodic edge".into()))
}

pub fn leaf_segment(m: &GraphMap, k: usize) -> Result<LeafSegment> {
    let (seed, period) = leaf_seed(m)?;
    leaf_segment_from(m, seed, period, k)
}

pub fn leaf_segment_from(m: &GraphMap, seed: Edge, period: usize, k: usize) -> Result<LeafSegment> {
    let fp = m.iterate(period)?;
    let mut path = vec![seed];
    for _ in 0..k {
        path = fp.image_of_path(&path);
    }
    Ok(LeafSegment {
        path,
        seed,
        period,
        depth: k,
    })
}
