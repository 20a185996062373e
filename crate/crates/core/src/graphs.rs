//! Finite graphs in the half-edge model, graph maps with reduced edge-path
//! images, turns and direction maps, and marked graphs.
//!
//! Oriented edges come in pairs: pair `p` has orientations `2p` (positive)
//! and `2p + 1`, and reversal flips the low bit. A graph stores only the
//! origin of every oriented edge.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::words::{simultaneous_conjugator, Basis, Endomorphism, Letter, Word};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge(u32);

impl Edge {
    pub fn new(pair: usize, reversed: bool) -> Self {
        Edge((2 * pair + usize::from(reversed)) as u32)
    }

    pub fn from_index(i: usize) -> Self {
        Edge(i as u32)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn pair(self) -> usize {
        (self.0 >> 1) as usize
    }

    pub fn is_positive(self) -> bool {
        self.0 & 1 == 0
    }

    pub fn reverse(self) -> Self {
        Edge(self.0 ^ 1)
    }

    /// The rose edge carrying a word letter.
    pub fn from_letter(l: Letter) -> Self {
        Edge::new(l.index(), l.is_inverse())
    }

    pub fn to_letter(self) -> Letter {
        if self.is_positive() {
            Letter::generator(self.pair())
        } else {
            Letter::inverse_of(self.pair())
        }
    }
}

impl fmt::Debug for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_positive() {
            write!(f, "e{}", self.pair())
        } else {
            write!(f, "E{}", self.pair())
        }
    }
}

pub type Path = Vec<Edge>;

pub fn reverse_path(p: &[Edge]) -> Path {
    p.iter().rev().map(|e| e.reverse()).collect()
}

/// Cancels backtracks `e · ē` with a stack pass.
pub fn reduce_path<I: IntoIterator<Item = Edge>>(edges: I) -> Path {
    let mut stack: Path = Vec::new();
    for e in edges {
        if stack.last() == Some(&e.reverse()) {
            stack.pop();
        } else {
            stack.push(e);
        }
    }
    stack
}

pub fn is_reduced(p: &[Edge]) -> bool {
    p.windows(2).all(|w| w[1] != w[0].reverse())
}

pub fn word_to_path(w: &Word) -> Path {
    w.letters().iter().map(|&l| Edge::from_letter(l)).collect()
}

pub fn path_to_word(p: &[Edge]) -> Word {
    Word::reduce(p.iter().map(|e| e.to_letter()))
}

/// An unordered pair of directions (oriented edges read at their origin).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct Turn(pub Edge, pub Edge);

impl Turn {
    pub fn new(a: Edge, b: Edge) -> Self {
        if a <= b {
            Turn(a, b)
        } else {
            Turn(b, a)
        }
    }

    pub fn is_degenerate(self) -> bool {
        self.0 == self.1
    }

    pub fn map(self, dmap: &[Option<Edge>]) -> Option<Turn> {
        Some(Turn::new(dmap[self.0.index()]?, dmap[self.1.index()]?))
    }
}

/// Turns crossed by a path: `{ē_i, e_{i+1}}` at each interior vertex.
pub fn path_turns(p: &[Edge]) -> impl Iterator<Item = Turn> + '_ {
    p.windows(2).map(|w| Turn::new(w[0].reverse(), w[1]))
}

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Graph {
    vertices: usize,
    origin: Vec<usize>,
}

/// Result of restricting a graph to a subgraph: the new graph plus the
/// old-to-new index maps.
#[derive(Clone, Debug)]
pub struct Subgraph {
    pub graph: Graph,
    pub vertex_map: Vec<Option<usize>>,
    pub edge_map: Vec<Option<Edge>>,
}

impl Subgraph {
    pub fn map_path(&self, p: &[Edge]) -> Option<Path> {
        p.iter().map(|e| self.edge_map[e.index()]).collect()
    }
}

impl Graph {
    pub fn new(vertices: usize) -> Self {
        Graph {
            vertices,
            origin: Vec::new(),
        }
    }

    /// The rose with `petals` loops at a single vertex.
    pub fn rose(petals: usize) -> Self {
        let mut g = Graph::new(1);
        for _ in 0..petals {
            g.add_edge(0, 0);
        }
        g
    }

    pub fn add_vertex(&mut self) -> usize {
        self.vertices += 1;
        self.vertices - 1
    }

    /// Adds an edge pair; returns its positive orientation.
    pub fn add_edge(&mut self, from: usize, to: usize) -> Edge {
        assert!(from < self.vertices && to < self.vertices);
        let e = Edge::new(self.origin.len() / 2, false);
        self.origin.push(from);
        self.origin.push(to);
        e
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices
    }

    pub fn num_edge_pairs(&self) -> usize {
        self.origin.len() / 2
    }

    pub fn num_oriented_edges(&self) -> usize {
        self.origin.len()
    }

    pub fn origin(&self, e: Edge) -> usize {
        self.origin[e.index()]
    }

    pub fn target(&self, e: Edge) -> usize {
        self.origin[e.reverse().index()]
    }

    pub fn oriented_edges(&self) -> impl Iterator<Item = Edge> {
        (0..self.origin.len()).map(Edge::from_index)
    }

    pub fn positive_edges(&self) -> impl Iterator<Item = Edge> {
        (0..self.num_edge_pairs()).map(|p| Edge::new(p, false))
    }

    /// Directions at `v`, in edge order.
    pub fn directions(&self, v: usize) -> Vec<Edge> {
        self.oriented_edges().filter(|&e| self.origin(e) == v).collect()
    }

    pub fn star(&self) -> Vec<Vec<Edge>> {
        let mut star = vec![Vec::new(); self.vertices];
        for e in self.oriented_edges() {
            star[self.origin(e)].push(e);
        }
        star
    }

    pub fn valence(&self, v: usize) -> usize {
        self.origin.iter().filter(|&&o| o == v).count()
    }

    /// `|E| − |V| + (#components)`, the rank of π₁ summed over components.
    pub fn rank(&self) -> isize {
        self.num_edge_pairs() as isize - self.vertices as isize + self.components().len() as isize
    }

    /// Euler-characteristic rank `|E| − |V| + 1` of a connected graph.
    pub fn euler_rank(&self) -> isize {
        self.num_edge_pairs() as isize - self.vertices as isize + 1
    }

    pub fn is_path(&self, p: &[Edge]) -> bool {
        p.windows(2).all(|w| self.target(w[0]) == self.origin(w[1]))
    }

    /// Connected components as sorted vertex lists, ordered by least vertex.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let star = self.star();
        let mut seen = vec![false; self.vertices];
        let mut out = Vec::new();
        for s in 0..self.vertices {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut queue = VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                for &e in &star[v] {
                    let t = self.target(e);
                    if !seen[t] {
                        seen[t] = true;
                        comp.push(t);
                        queue.push_back(t);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// Keeps the listed vertices and the edge pairs with both ends kept.
    pub fn restrict(&self, keep_vertex: &[bool], keep_pair: &[bool]) -> Subgraph {
        let mut vertex_map = vec![None; self.vertices];
        let mut n = 0;
        for v in 0..self.vertices {
            if keep_vertex[v] {
                vertex_map[v] = Some(n);
                n += 1;
            }
        }
        let mut graph = Graph::new(n);
        let mut edge_map = vec![None; self.origin.len()];
        for p in 0..self.num_edge_pairs() {
            let e = Edge::new(p, false);
            if !keep_pair[p] {
                continue;
            }
            if let (Some(o), Some(t)) = (vertex_map[self.origin(e)], vertex_map[self.target(e)]) {
                let ne = graph.add_edge(o, t);
                edge_map[e.index()] = Some(ne);
                edge_map[e.reverse().index()] = Some(ne.reverse());
            }
        }
        Subgraph {
            graph,
            vertex_map,
            edge_map,
        }
    }

    /// Repeatedly deletes valence ≤ 1 vertices other than `keep`.
    pub fn prune(&self, keep: Option<usize>) -> Subgraph {
        let mut alive_v = vec![true; self.vertices];
        let mut alive_p = vec![true; self.num_edge_pairs()];
        let star = self.star();
        let mut val: Vec<usize> = star.iter().map(Vec::len).collect();
        let mut queue: Vec<usize> = (0..self.vertices).filter(|&v| val[v] <= 1).collect();
        while let Some(v) = queue.pop() {
            if !alive_v[v] || Some(v) == keep || val[v] > 1 {
                continue;
            }
            alive_v[v] = false;
            for &e in &star[v] {
                if alive_p[e.pair()] {
                    alive_p[e.pair()] = false;
                    let t = self.target(e);
                    val[t] -= 1;
                    if val[t] <= 1 {
                        queue.push(t);
                    }
                }
            }
        }
        self.restrict(&alive_v, &alive_p)
    }

    /// The core: no vertices of valence 0 or 1.
    pub fn core(&self) -> Result<Subgraph> {
        let sub = self.prune(None);
        if sub.graph.num_vertices() == 0 {
            return Err(Error::TrivialCore);
        }
        Ok(sub)
    }

    pub fn is_core(&self) -> bool {
        self.star().iter().all(|d| d.len() >= 2)
    }

    /// BFS spanning tree from `root` in edge order: `tree[v]` is the
    /// oriented edge entering `v`.
    pub fn spanning_tree(&self, root: usize) -> Vec<Option<Edge>> {
        let star = self.star();
        let mut parent = vec![None; self.vertices];
        let mut seen = vec![false; self.vertices];
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &e in &star[v] {
                let t = self.target(e);
                if !seen[t] {
                    seen[t] = true;
                    parent[t] = Some(e);
                    queue.push_back(t);
                }
            }
        }
        parent
    }

    /// Tree path from the spanning-tree root to `v`.
    pub fn tree_path(tree: &[Option<Edge>], g: &Graph, v: usize) -> Path {
        let mut p = Vec::new();
        let mut cur = v;
        while let Some(e) = tree[cur] {
            p.push(e);
            cur = g.origin(e);
        }
        p.reverse();
        p
    }

    /// Edge pairs whose removal disconnects the graph.
    pub fn bridges(&self) -> Vec<usize> {
        let base = self.components().len();
        (0..self.num_edge_pairs())
            .filter(|&p| {
                let mut keep = vec![true; self.num_edge_pairs()];
                keep[p] = false;
                let sub = self.restrict(&vec![true; self.vertices], &keep);
                sub.graph.components().len() > base
            })
            .collect()
    }

    /// Replaces every maximal chain through valence-2 vertices by a single
    /// edge. A component that is a circle keeps its least vertex.
    pub fn smooth(&self) -> Smoothing {
        let star = self.star();
        let mut natural = vec![false; self.vertices];
        for v in 0..self.vertices {
            natural[v] = star[v].len() != 2;
        }
        for comp in self.components() {
            if comp.iter().all(|&v| !natural[v]) {
                natural[comp[0]] = true;
            }
        }
        let mut vertex_map = vec![None; self.vertices];
        let mut n = 0;
        for v in 0..self.vertices {
            if natural[v] {
                vertex_map[v] = Some(n);
                n += 1;
            }
        }
        let mut graph = Graph::new(n);
        let mut old_to_new: Vec<Option<(Edge, usize)>> = vec![None; self.origin.len()];
        let mut natural_paths = Vec::new();
        for v in 0..self.vertices {
            if !natural[v] {
                continue;
            }
            for &start in &star[v] {
                if old_to_new[start.index()].is_some() {
                    continue;
                }
                let mut chain = vec![start];
                let mut cur = start;
                while !natural[self.target(cur)] {
                    let t = self.target(cur);
                    let next = *star[t].iter().find(|&&d| d != cur.reverse()).unwrap_or(&star[t][0]);
                    chain.push(next);
                    cur = next;
                }
                let ne = graph.add_edge(
                    vertex_map[v].unwrap(),
                    vertex_map[self.target(cur)].unwrap(),
                );
                let len = chain.len();
                for (i, &e) in chain.iter().enumerate() {
                    old_to_new[e.index()] = Some((ne, i));
                    old_to_new[e.reverse().index()] = Some((ne.reverse(), len - 1 - i));
                }
                natural_paths.push(chain);
            }
        }
        Smoothing {
            graph,
            vertex_map,
            old_to_new,
            natural_paths,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Smoothing {
    pub graph: Graph,
    pub vertex_map: Vec<Option<usize>>,
    /// For each old oriented edge: the new oriented edge containing it and
    /// its position along that edge.
    pub old_to_new: Vec<Option<(Edge, usize)>>,
    /// For each new edge pair, the old path of its positive orientation.
    pub natural_paths: Vec<Path>,
}

impl Smoothing {
    /// Converts a path between natural vertices.
    pub fn map_path(&self, p: &[Edge]) -> Path {
        p.iter()
            .filter_map(|e| match self.old_to_new[e.index()] {
                Some((ne, 0)) => Some(ne),
                _ => None,
            })
            .collect()
    }
}

/// A map of graphs sending vertices to vertices and edges to edge paths.
/// `edge_images[p]` is the image of the positive orientation of pair `p`;
/// reversed edges map to reversed paths.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GraphMap {
    pub domain: Graph,
    pub codomain: Graph,
    pub vertex_images: Vec<usize>,
    pub edge_images: Vec<Path>,
}

impl GraphMap {
    pub fn new(
        domain: Graph,
        codomain: Graph,
        vertex_images: Vec<usize>,
        edge_images: Vec<Path>,
    ) -> Result<Self> {
        let m = GraphMap {
            domain,
            codomain,
            vertex_images,
            edge_images,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if self.vertex_images.len() != self.domain.num_vertices()
            || self.edge_images.len() != self.domain.num_edge_pairs()
        {
            return Err(Error::MismatchedGraphs("map size does not match domain".into()));
        }
        for (p, img) in self.edge_images.iter().enumerate() {
            let e = Edge::new(p, false);
            let o = self.vertex_images[self.domain.origin(e)];
            let t = self.vertex_images[self.domain.target(e)];
            let ok = match (img.first(), img.last()) {
                (Some(&f), Some(&l)) => {
                    self.codomain.origin(f) == o
                        && self.codomain.target(l) == t
                        && self.codomain.is_path(img)
                }
                _ => o == t,
            };
            if !ok {
                return Err(Error::MismatchedGraphs(format!(
                    "image of edge {p} is not a path between the vertex images"
                )));
            }
        }
        Ok(())
    }

    pub fn identity(g: &Graph) -> Self {
        GraphMap {
            domain: g.clone(),
            codomain: g.clone(),
            vertex_images: (0..g.num_vertices()).collect(),
            edge_images: g.positive_edges().map(|e| vec![e]).collect(),
        }
    }

    /// The standard representative of `e` on the rose.
    pub fn from_endomorphism(e: &Endomorphism) -> Self {
        let rose = Graph::rose(e.rank());
        GraphMap {
            domain: rose.clone(),
            codomain: rose,
            vertex_images: vec![0],
            edge_images: e.images().iter().map(word_to_path).collect(),
        }
    }

    /// For a self-map of a rose, the endomorphism read off the petals.
    pub fn to_endomorphism(&self, basis: &Basis) -> Result<Endomorphism> {
        if self.domain.num_vertices() != 1 || self.codomain.num_vertices() != 1 {
            return Err(Error::Precondition("map is not on a rose".into()));
        }
        Endomorphism::new(
            basis.clone(),
            self.edge_images.iter().map(|p| path_to_word(p)).collect(),
        )
    }

    pub fn is_self_map(&self) -> bool {
        self.domain == self.codomain
    }

    pub fn image(&self, e: Edge) -> Path {
        let img = &self.edge_images[e.pair()];
        if e.is_positive() {
            img.clone()
        } else {
            reverse_path(img)
        }
    }

    pub fn image_of_path(&self, p: &[Edge]) -> Path {
        reduce_path(p.iter().flat_map(|&e| self.image(e)))
    }

    /// Image of a path without reduction.
    pub fn raw_image_of_path(&self, p: &[Edge]) -> Path {
        p.iter().flat_map(|&e| self.image(e)).collect()
    }

    /// Reduces every edge image; fails if some edge image becomes trivial.
    pub fn tighten(&self) -> Result<GraphMap> {
        let t = self.reduced();
        if let Some(p) = t.edge_images.iter().position(Vec::is_empty) {
            return Err(Error::DegenerateEdge { edge: p });
        }
        Ok(t)
    }

    /// Reduces every edge image, allowing collapsed edges.
    pub fn reduced(&self) -> GraphMap {
        GraphMap {
            domain: self.domain.clone(),
            codomain: self.codomain.clone(),
            vertex_images: self.vertex_images.clone(),
            edge_images: self
                .edge_images
                .iter()
                .map(|p| reduce_path(p.iter().copied()))
                .collect(),
        }
    }

    pub fn is_tight(&self) -> bool {
        self.edge_images.iter().all(|p| !p.is_empty() && is_reduced(p))
    }

    /// `Df(d)`: first oriented edge of the image of `d`, per oriented edge.
    pub fn direction_map(&self) -> Vec<Option<Edge>> {
        self.domain
            .oriented_edges()
            .map(|e| {
                let img = &self.edge_images[e.pair()];
                if e.is_positive() {
                    img.first().copied()
                } else {
                    img.last().map(|l| l.reverse())
                }
            })
            .collect()
    }

    /// `None` when the map is an immersion, else a turn witnessing failure:
    /// either two directions at a vertex with equal image, or a backtrack
    /// inside an edge image.
    pub fn immersion_witness(&self) -> Option<Turn> {
        for img in &self.edge_images {
            if img.is_empty() {
                return Some(Turn::new(Edge(0), Edge(0)));
            }
            if let Some(w) = img.windows(2).find(|w| w[1] == w[0].reverse()) {
                return Some(Turn::new(w[1], w[1]));
            }
        }
        let dmap = self.direction_map();
        for dirs in self.domain.star() {
            for (i, &d1) in dirs.iter().enumerate() {
                for &d2 in &dirs[i + 1..] {
                    if dmap[d1.index()] == dmap[d2.index()] {
                        return Some(Turn::new(d1, d2));
                    }
                }
            }
        }
        None
    }

    pub fn is_immersion(&self) -> bool {
        self.immersion_witness().is_none()
    }

    /// `self` followed by `next`, tightened without failing on collapses.
    pub fn then(&self, next: &GraphMap) -> Result<GraphMap> {
        if self.codomain != next.domain {
            return Err(Error::MismatchedGraphs(
                "codomain of first map differs from domain of second".into(),
            ));
        }
        Ok(GraphMap {
            domain: self.domain.clone(),
            codomain: next.codomain.clone(),
            vertex_images: self.vertex_images.iter().map(|&v| next.vertex_images[v]).collect(),
            edge_images: self.edge_images.iter().map(|p| next.image_of_path(p)).collect(),
        })
    }

    /// `next ∘ self` as a tightened topological representative.
    pub fn compose(&self, next: &GraphMap) -> Result<GraphMap> {
        self.then(next)?.tighten()
    }

    pub fn iterate(&self, k: usize) -> Result<GraphMap> {
        let mut acc = GraphMap::identity(&self.domain);
        for _ in 0..k {
            acc = acc.compose(self)?;
        }
        Ok(acc)
    }

    pub fn is_simplicial(&self) -> bool {
        self.edge_images.iter().all(|p| p.len() == 1)
    }

    /// Bijective on vertices and on edges (as a simplicial map).
    pub fn is_isomorphism(&self) -> bool {
        if !self.is_simplicial()
            || self.domain.num_vertices() != self.codomain.num_vertices()
            || self.domain.num_edge_pairs() != self.codomain.num_edge_pairs()
        {
            return false;
        }
        let mut seen_v = vec![false; self.codomain.num_vertices()];
        for &v in &self.vertex_images {
            if std::mem::replace(&mut seen_v[v], true) {
                return false;
            }
        }
        let mut seen_p = vec![false; self.codomain.num_edge_pairs()];
        for p in &self.edge_images {
            if std::mem::replace(&mut seen_p[p[0].pair()], true) {
                return false;
            }
        }
        true
    }

    pub fn total_image_length(&self) -> usize {
        self.edge_images.iter().map(Vec::len).sum()
    }

    /// Turns crossed inside edge images.
    pub fn image_turns(&self) -> BTreeSet<Turn> {
        self.edge_images.iter().flat_map(|p| path_turns(p)).collect()
    }

    /// Whether there is a graph isomorphism `ι` with `ι ∘ self = other ∘ ι`.
    pub fn conjugate_by_isomorphism(&self, other: &GraphMap) -> bool {
        if !self.is_self_map() || !other.is_self_map() {
            return false;
        }
        let mut found = false;
        for_each_isomorphism(&self.domain, &other.domain, |iso| {
            let ok = self.domain.positive_edges().all(|e| {
                let lhs: Path = self.image(e).iter().map(|&x| iso.edge(x)).collect();
                lhs == other.image(iso.edge(e))
            }) && (0..self.domain.num_vertices())
                .all(|v| iso.vertex[self.vertex_images[v]] == other.vertex_images[iso.vertex[v]]);
            found = ok;
            ok
        });
        found
    }
}

/// A graph isomorphism: images of vertices and of oriented edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Isomorphism {
    pub vertex: Vec<usize>,
    pub edges: Vec<Edge>,
}

impl Isomorphism {
    pub fn edge(&self, e: Edge) -> Edge {
        self.edges[e.index()]
    }

    pub fn map_path(&self, p: &[Edge]) -> Path {
        p.iter().map(|&e| self.edge(e)).collect()
    }
}

/// Calls `visit` on every isomorphism `g1 → g2` until it returns `true`.
pub fn for_each_isomorphism<F: FnMut(&Isomorphism) -> bool>(g1: &Graph, g2: &Graph, mut visit: F) {
    if g1.num_vertices() != g2.num_vertices() || g1.num_edge_pairs() != g2.num_edge_pairs() {
        return;
    }
    let mut v1: Vec<usize> = g1.star().iter().map(Vec::len).collect();
    let mut v2: Vec<usize> = g2.star().iter().map(Vec::len).collect();
    let deg1 = v1.clone();
    let deg2 = v2.clone();
    v1.sort_unstable();
    v2.sort_unstable();
    if v1 != v2 {
        return;
    }
    struct State {
        vmap: Vec<Option<usize>>,
        vused: Vec<bool>,
        emap: Vec<Edge>,
        pused: Vec<bool>,
    }
    fn assign_vertex(st: &mut State, a: usize, b: usize, undo: &mut Vec<usize>) -> bool {
        match st.vmap[a] {
            Some(x) => x == b,
            None => {
                if st.vused[b] {
                    return false;
                }
                st.vmap[a] = Some(b);
                st.vused[b] = true;
                undo.push(a);
                true
            }
        }
    }
    fn rec<F: FnMut(&Isomorphism) -> bool>(
        g1: &Graph,
        g2: &Graph,
        deg1: &[usize],
        deg2: &[usize],
        p: usize,
        st: &mut State,
        visit: &mut F,
    ) -> bool {
        if p == g1.num_edge_pairs() {
            // Remaining isolated vertices: match by order.
            let mut undo = Vec::new();
            let mut free2 = (0..g2.num_vertices()).filter(|&b| !st.vused[b]);
            let mut ok = true;
            for a in 0..g1.num_vertices() {
                if st.vmap[a].is_none() {
                    match free2.next() {
                        Some(b) => {
                            st.vmap[a] = Some(b);
                            undo.push(a);
                        }
                        None => ok = false,
                    }
                }
            }
            let stop = ok && {
                let iso = Isomorphism {
                    vertex: st.vmap.iter().map(|v| v.unwrap()).collect(),
                    edges: st.emap.clone(),
                };
                visit(&iso)
            };
            for a in undo {
                st.vmap[a] = None;
            }
            return stop;
        }
        let e = Edge::new(p, false);
        for cand in g2.oriented_edges() {
            if st.pused[cand.pair()] {
                continue;
            }
            let (o1, t1) = (g1.origin(e), g1.target(e));
            let (o2, t2) = (g2.origin(cand), g2.target(cand));
            if deg1[o1] != deg2[o2] || deg1[t1] != deg2[t2] || ((o1 == t1) != (o2 == t2)) {
                continue;
            }
            let mut undo = Vec::new();
            let ok = assign_vertex(st, o1, o2, &mut undo) && assign_vertex(st, t1, t2, &mut undo);
            if ok {
                st.pused[cand.pair()] = true;
                st.emap[e.index()] = cand;
                st.emap[e.reverse().index()] = cand.reverse();
                if rec(g1, g2, deg1, deg2, p + 1, st, visit) {
                    return true;
                }
                st.pused[cand.pair()] = false;
            }
            for a in undo {
                st.vused[st.vmap[a].unwrap()] = false;
                st.vmap[a] = None;
            }
        }
        false
    }
    let mut st = State {
        vmap: vec![None; g1.num_vertices()],
        vused: vec![false; g2.num_vertices()],
        emap: vec![Edge(0); g1.num_oriented_edges()],
        pused: vec![false; g2.num_edge_pairs()],
    };
    rec(g1, g2, &deg1, &deg2, 0, &mut st, &mut visit);
}

pub fn isomorphic(g1: &Graph, g2: &Graph) -> bool {
    let mut found = false;
    for_each_isomorphism(g1, g2, |_| {
        found = true;
        true
    });
    found
}

/// Coordinates on π₁ from a spanning tree: the `i`-th non-tree edge pair
/// is generator `i`.
struct TreeCoordinates<'a> {
    tree: &'a [Option<Edge>],
    letter_of: Vec<Option<usize>>,
}

impl<'a> TreeCoordinates<'a> {
    fn new(g: &Graph, tree: &'a [Option<Edge>]) -> Self {
        let mut tree_pair = vec![false; g.num_edge_pairs()];
        for e in tree.iter().flatten() {
            tree_pair[e.pair()] = true;
        }
        let mut n = 0;
        let letter_of = tree_pair
            .iter()
            .map(|&t| {
                (!t).then(|| {
                    n += 1;
                    n - 1
                })
            })
            .collect();
        TreeCoordinates { tree, letter_of }
    }

    fn word(&self, g: &Graph, at: usize, l: &[Edge]) -> Word {
        let to_base = Graph::tree_path(self.tree, g, at);
        let back = reverse_path(&to_base);
        Word::reduce(to_base.iter().chain(l).chain(&back).filter_map(|e| {
            self.letter_of[e.pair()].map(|i| {
                if e.is_positive() {
                    Letter::generator(i)
                } else {
                    Letter::inverse_of(i)
                }
            })
        }))
    }
}

/// Closed paths as words in the spanning-tree basis of `π₁(g, 0)`, each
/// joined to vertex 0 through the tree. Empty loops sit at vertex 0.
pub fn loop_words(g: &Graph, loops: &[Path]) -> Vec<Word> {
    let tree = g.spanning_tree(0);
    let coords = TreeCoordinates::new(g, &tree);
    loops
        .iter()
        .map(|l| coords.word(g, l.first().map_or(0, |&e| g.origin(e)), l))
        .collect()
}

/// A marked graph: a connected graph with a base vertex and one loop per
/// basis element of the free group, identifying the group with π₁.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct MarkedGraph {
    pub graph: Graph,
    pub base: usize,
    pub loops: Vec<Path>,
}

impl MarkedGraph {
    pub fn new(graph: Graph, base: usize, loops: Vec<Path>) -> Result<Self> {
        for l in &loops {
            let closed = match (l.first(), l.last()) {
                (Some(&f), Some(&t)) => {
                    graph.origin(f) == base && graph.target(t) == base && graph.is_path(l)
                }
                _ => true,
            };
            if !closed {
                return Err(Error::MismatchedGraphs("marking loop is not closed at the base".into()));
            }
        }
        let m = MarkedGraph { graph, base, loops };
        if m.graph.euler_rank() != m.loops.len() as isize || !m.graph.is_connected() {
            return Err(Error::MismatchedGraphs(format!(
                "graph of rank {} cannot carry a marking of rank {}",
                m.graph.euler_rank(),
                m.loops.len()
            )));
        }
        Ok(m)
    }

    /// The rose marked by the given words (petal `i` is generator `i`).
    pub fn rose(marking: &[Word]) -> Result<Self> {
        MarkedGraph::new(
            Graph::rose(marking.len()),
            0,
            marking.iter().map(word_to_path).collect(),
        )
    }

    pub fn rank(&self) -> usize {
        self.loops.len()
    }

    /// Moves the base point along `path` (which starts at the base),
    /// conjugating every loop.
    pub fn rebase(&self, path: &[Edge]) -> MarkedGraph {
        let rev = reverse_path(path);
        let base = path.last().map_or(self.base, |&e| self.graph.target(e));
        let loops = self
            .loops
            .iter()
            .map(|l| reduce_path(rev.iter().chain(l).chain(path).copied()))
            .collect();
        MarkedGraph {
            graph: self.graph.clone(),
            base,
            loops,
        }
    }

    /// Restricts to the core, moving the base point onto it if needed.
    pub fn to_core(&self) -> Result<MarkedGraph> {
        let sub = self.graph.core()?;
        let mut this = self.clone();
        if sub.vertex_map[self.base].is_none() {
            // walk from the base to the nearest core vertex
            let tree = self.graph.spanning_tree(self.base);
            let target = (0..self.graph.num_vertices())
                .filter(|&v| sub.vertex_map[v].is_some())
                .min_by_key(|&v| (Graph::tree_path(&tree, &self.graph, v).len(), v))
                .ok_or(Error::TrivialCore)?;
            this = this.rebase(&Graph::tree_path(&tree, &self.graph, target));
        }
        let loops = this
            .loops
            .iter()
            .map(|l| sub.map_path(l))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::MismatchedGraphs("marking loop leaves the core".into()))?;
        MarkedGraph::new(sub.graph, sub.vertex_map[this.base].unwrap(), loops)
    }

    /// Removes valence-2 vertices, moving the base to a natural vertex.
    pub fn smoothed(&self) -> MarkedGraph {
        let sm = self.graph.smooth();
        let mut this = self.clone();
        if sm.vertex_map[self.base].is_none() {
            let mut path = Vec::new();
            let mut cur = self.base;
            let mut prev: Option<Edge> = None;
            let star = self.graph.star();
            while sm.vertex_map[cur].is_none() {
                let dirs = &star[cur];
                let next = *dirs.iter().find(|&&d| Some(d.reverse()) != prev).unwrap();
                path.push(next);
                prev = Some(next);
                cur = self.graph.target(next);
            }
            this = this.rebase(&path);
        }
        MarkedGraph {
            base: sm.vertex_map[this.base].unwrap(),
            loops: this.loops.iter().map(|l| sm.map_path(l)).collect(),
            graph: sm.graph,
        }
    }

    /// Marking loops as words in the edges outside the BFS spanning tree
    /// rooted at the base: the `i`-th non-tree pair becomes generator `i`.
    pub fn marking_words(&self) -> Vec<Word> {
        let tree = self.graph.spanning_tree(self.base);
        self.words_in_tree_basis(&tree, &self.loops, self.base)
    }

    fn words_in_tree_basis(&self, tree: &[Option<Edge>], loops: &[Path], at: usize) -> Vec<Word> {
        let coords = TreeCoordinates::new(&self.graph, tree);
        loops.iter().map(|l| coords.word(&self.graph, at, l)).collect()
    }

    /// Equality of marked graphs: a graph isomorphism carrying one marking
    /// to the other up to a single inner automorphism.
    pub fn equivalent(&self, other: &MarkedGraph) -> bool {
        if self.rank() != other.rank() {
            return false;
        }
        let target = other.marking_words();
        let tree = other.graph.spanning_tree(other.base);
        let mut found = false;
        for_each_isomorphism(&self.graph, &other.graph, |iso| {
            let moved: Vec<Path> = self.loops.iter().map(|l| iso.map_path(l)).collect();
            let words = other.words_in_tree_basis(&tree, &moved, iso.vertex[self.base]);
            found = simultaneous_conjugator(&words, &target).is_some();
            found
        });
        found
    }
}
