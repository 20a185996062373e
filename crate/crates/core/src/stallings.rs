//! Stallings folding: factorizations `f = v ∘ h` of graph maps into folds
//! followed by an immersion, subgroup graphs, fiber products, coverings,
//! preimages of finite-index subgroups and iterated images.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::graphs::{path_turns, reduce_path, word_to_path, Edge, Graph, GraphMap, MarkedGraph, Path, Subgraph};
use crate::words::{Endomorphism, Letter, Word};

/// Which foldable vertex and pair the engine picks first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FoldOrder {
    /// Lowest-indexed vertex, lexicographically least pair.
    #[default]
    LowestFirst,
    /// Highest-indexed vertex, lexicographically greatest pair.
    HighestFirst,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldRecord {
    /// Working vertex (subdivided domain) at which the fold happened.
    pub vertex: usize,
    pub first: Edge,
    pub second: Edge,
    /// Common label: an oriented edge of the codomain.
    pub label: Edge,
    /// `false` when both edges already shared their terminal vertex, which
    /// kills a loop.
    pub merges_vertices: bool,
}

/// `input = immersion ∘ fold_map` up to tightening.
#[derive(Clone, Debug)]
pub struct FoldResult {
    pub folds: Vec<FoldRecord>,
    pub fold_map: GraphMap,
    pub immersion: GraphMap,
    /// Index of the first fold that identified edges with common endpoints.
    pub rank_loss: Option<usize>,
}

impl FoldResult {
    pub fn folded_graph(&self) -> &Graph {
        &self.immersion.domain
    }

    /// Checks `immersion ∘ fold_map == input` after tightening.
    pub fn certifies(&self, input: &GraphMap) -> bool {
        match self.fold_map.then(&self.immersion) {
            Ok(c) => c == input.reduced(),
            Err(_) => false,
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.folds.is_empty()
    }
}

struct Folder {
    vparent: Vec<usize>,
    star: Vec<Vec<Edge>>,
    eparent: Vec<usize>,
    eflip: Vec<bool>,
    origin: Vec<usize>,
    label: Vec<Edge>,
}

impl Folder {
    fn find_v(&mut self, v: usize) -> usize {
        let mut r = v;
        while self.vparent[r] != r {
            r = self.vparent[r];
        }
        let mut c = v;
        while self.vparent[c] != r {
            let n = self.vparent[c];
            self.vparent[c] = r;
            c = n;
        }
        r
    }

    fn find_e(&mut self, p: usize) -> (usize, bool) {
        let mut flip = false;
        let mut r = p;
        while self.eparent[r] != r {
            flip ^= self.eflip[r];
            r = self.eparent[r];
        }
        // path compression keeping parities
        let mut c = p;
        let mut acc = flip;
        while self.eparent[c] != r {
            let n = self.eparent[c];
            let f = self.eflip[c];
            self.eparent[c] = r;
            self.eflip[c] = acc;
            acc ^= f;
            c = n;
        }
        (r, flip)
    }

    fn canon(&mut self, e: Edge) -> Edge {
        let (r, flip) = self.find_e(e.pair());
        Edge::new(r, !e.is_positive() ^ flip)
    }

    fn label_of(&self, e: Edge) -> Edge {
        let l = self.label[e.pair()];
        if e.is_positive() {
            l
        } else {
            l.reverse()
        }
    }

    fn target_class(&mut self, e: Edge) -> usize {
        let t = self.origin[e.reverse().index()];
        self.find_v(t)
    }

    /// Deduplicated canonical directions at a vertex class.
    fn directions(&mut self, v: usize) -> Vec<Edge> {
        let raw = std::mem::take(&mut self.star[v]);
        let mut set: BTreeSet<Edge> = BTreeSet::new();
        for e in raw {
            set.insert(self.canon(e));
        }
        let dirs: Vec<Edge> = set.into_iter().collect();
        self.star[v] = dirs.clone();
        dirs
    }

    fn foldable_pair(&mut self, v: usize, order: FoldOrder) -> Option<(Edge, Edge)> {
        let dirs = self.directions(v);
        let mut best: Option<(Edge, Edge)> = None;
        for (i, &a) in dirs.iter().enumerate() {
            for &b in &dirs[i + 1..] {
                if self.label_of(a) == self.label_of(b) {
                    let cand = (a, b);
                    best = match (best, order) {
                        (None, _) => Some(cand),
                        (Some(x), FoldOrder::LowestFirst) => Some(x.min(cand)),
                        (Some(x), FoldOrder::HighestFirst) => Some(x.max(cand)),
                    };
                }
            }
        }
        best
    }

    fn union_v(&mut self, a: usize, b: usize) -> usize {
        let (a, b) = (self.find_v(a), self.find_v(b));
        if a == b {
            return a;
        }
        let (keep, drop) = (a.min(b), a.max(b));
        self.vparent[drop] = keep;
        let moved = std::mem::take(&mut self.star[drop]);
        self.star[keep].extend(moved);
        keep
    }

    /// Identifies oriented classes `a` and `b` (both canonical).
    fn union_e(&mut self, a: Edge, b: Edge) {
        let (keep, drop) = if a.pair() < b.pair() { (a, b) } else { (b, a) };
        self.eparent[drop.pair()] = keep.pair();
        self.eflip[drop.pair()] = keep.is_positive() != drop.is_positive();
    }
}

/// Folds `m` to an immersion. Edge images must be nonempty; the domain is
/// subdivided so that every piece maps to a single edge.
pub fn fold_graph_map(m: &GraphMap, order: FoldOrder) -> Result<FoldResult> {
    fold_engine(m, order, usize::MAX)
}

/// Performs at most `limit` folds; `immersion` is then only the remaining
/// factor of the map.
pub fn partial_fold(m: &GraphMap, limit: usize) -> Result<FoldResult> {
    fold_engine(m, FoldOrder::LowestFirst, limit)
}

fn fold_engine(m: &GraphMap, order: FoldOrder, limit: usize) -> Result<FoldResult> {
    if let Some(p) = m.edge_images.iter().position(Vec::is_empty) {
        return Err(Error::DegenerateEdge { edge: p });
    }
    let dom = &m.domain;
    let cod = &m.codomain;
    let mut vlabel: Vec<usize> = m.vertex_images.clone();
    let mut origin: Vec<usize> = Vec::new();
    let mut label: Vec<Edge> = Vec::new();
    let mut pieces: Vec<Vec<usize>> = Vec::with_capacity(dom.num_edge_pairs());
    for e in dom.positive_edges() {
        let img = &m.edge_images[e.pair()];
        let mut cur = dom.origin(e);
        let mut ps = Vec::with_capacity(img.len());
        for (i, &l) in img.iter().enumerate() {
            let next = if i + 1 == img.len() {
                dom.target(e)
            } else {
                vlabel.push(cod.target(l));
                vlabel.len() - 1
            };
            ps.push(label.len());
            origin.push(cur);
            origin.push(next);
            label.push(l);
            cur = next;
        }
        pieces.push(ps);
    }
    let nv = vlabel.len();
    let np = label.len();
    let mut star = vec![Vec::new(); nv];
    for (i, &o) in origin.iter().enumerate() {
        star[o].push(Edge::from_index(i));
    }
    let mut f = Folder {
        vparent: (0..nv).collect(),
        star,
        eparent: (0..np).collect(),
        eflip: vec![false; np],
        origin,
        label,
    };

    let mut folds = Vec::new();
    let mut rank_loss = None;
    let mut dirty: BTreeSet<usize> = (0..nv).collect();
    while folds.len() < limit {
        let next = match order {
            FoldOrder::LowestFirst => dirty.iter().next().copied(),
            FoldOrder::HighestFirst => dirty.iter().next_back().copied(),
        };
        let Some(v) = next else { break };
        if f.find_v(v) != v {
            dirty.remove(&v);
            continue;
        }
        let Some((a, b)) = f.foldable_pair(v, order) else {
            dirty.remove(&v);
            continue;
        };
        let ta = f.target_class(a);
        let tb = f.target_class(b);
        let merges = ta != tb;
        if !merges && rank_loss.is_none() {
            rank_loss = Some(folds.len());
        }
        folds.push(FoldRecord {
            vertex: v,
            first: a,
            second: b,
            label: f.label_of(a),
            merges_vertices: merges,
        });
        f.union_e(a, b);
        let t = f.union_v(ta, tb);
        dirty.insert(t);
        dirty.insert(f.find_v(v));
    }

    // Assemble the folded graph.
    let mut vindex = vec![usize::MAX; nv];
    let mut n = 0;
    for v in 0..nv {
        if f.find_v(v) == v {
            vindex[v] = n;
            n += 1;
        }
    }
    let mut graph = Graph::new(n);
    let mut eindex = vec![usize::MAX; np];
    let mut imm_edges: Vec<Path> = Vec::new();
    for p in 0..np {
        if f.find_e(p).0 == p {
            let e = Edge::new(p, false);
            let o = f.find_v(f.origin[e.index()]);
            let t = f.target_class(e);
            let ne = graph.add_edge(vindex[o], vindex[t]);
            eindex[p] = ne.pair();
            imm_edges.push(vec![f.label[p]]);
        }
    }
    let mut imm_vertices = vec![0; n];
    for v in 0..nv {
        let r = f.find_v(v);
        imm_vertices[vindex[r]] = vlabel[v];
    }
    let immersion = GraphMap {
        domain: graph.clone(),
        codomain: cod.clone(),
        vertex_images: imm_vertices,
        edge_images: imm_edges,
    };
    let fold_vertices = (0..dom.num_vertices()).map(|v| vindex[f.find_v(v)]).collect();
    let fold_edges = pieces
        .iter()
        .map(|ps| {
            ps.iter()
                .map(|&p| {
                    let c = f.canon(Edge::new(p, false));
                    Edge::new(eindex[c.pair()], !c.is_positive())
                })
                .collect()
        })
        .collect();
    let fold_map = GraphMap {
        domain: dom.clone(),
        codomain: graph,
        vertex_images: fold_vertices,
        edge_images: fold_edges,
    };
    Ok(FoldResult {
        folds,
        fold_map,
        immersion,
        rank_loss,
    })
}

/// Factors an injective-on-π₁ map through folds and an immersion; reports
/// non-injectivity through the first loop-killing fold.
pub fn fold_to_immersion(m: &GraphMap) -> Result<FoldResult> {
    fold_to_immersion_with(m, FoldOrder::LowestFirst)
}

pub fn fold_to_immersion_with(m: &GraphMap, order: FoldOrder) -> Result<FoldResult> {
    let r = fold_graph_map(&m.tighten()?, order)?;
    if let Some(fold) = r.rank_loss {
        return Err(Error::NonInjective { fold });
    }
    Ok(r)
}

/// Restricts a labelling map to a subgraph of its domain.
pub fn restrict_map(m: &GraphMap, sub: &Subgraph) -> GraphMap {
    let mut vertex_images = vec![0; sub.graph.num_vertices()];
    for (old, new) in sub.vertex_map.iter().enumerate() {
        if let Some(n) = new {
            vertex_images[*n] = m.vertex_images[old];
        }
    }
    let mut edge_images = vec![Vec::new(); sub.graph.num_edge_pairs()];
    for e in m.domain.positive_edges() {
        if let Some(ne) = sub.edge_map[e.index()] {
            let img = m.image(e);
            edge_images[ne.pair()] = if ne.is_positive() {
                img
            } else {
                crate::graphs::reverse_path(&img)
            };
        }
    }
    GraphMap {
        domain: sub.graph.clone(),
        codomain: m.codomain.clone(),
        vertex_images,
        edge_images,
    }
}

/// The core of `g` with a retraction `g → core` collapsing hanging trees.
pub fn retract_to_core(g: &Graph) -> Result<(Subgraph, GraphMap)> {
    let sub = g.core()?;
    let star = g.star();
    // attach each non-core vertex to its core vertex by BFS from the core
    let mut attach: Vec<Option<usize>> = sub.vertex_map.clone();
    let mut queue: VecDeque<usize> = (0..g.num_vertices()).filter(|&v| attach[v].is_some()).collect();
    while let Some(v) = queue.pop_front() {
        for &e in &star[v] {
            let t = g.target(e);
            if attach[t].is_none() {
                attach[t] = attach[v];
                queue.push_back(t);
            }
        }
    }
    let r = GraphMap {
        domain: g.clone(),
        codomain: sub.graph.clone(),
        vertex_images: attach.iter().map(|a| a.expect("connected graph")).collect(),
        edge_images: g
            .positive_edges()
            .map(|e| sub.edge_map[e.index()].map(|x| vec![x]).unwrap_or_default())
            .collect(),
    };
    Ok((sub, r))
}

/// A folded graph immersed in a base graph; with a base vertex it is the
/// Stallings automaton of a subgroup, without one it determines a
/// conjugacy class of subgroups.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubgroupGraph {
    pub label: GraphMap,
    pub base: Option<usize>,
}

impl SubgroupGraph {
    pub fn graph(&self) -> &Graph {
        &self.label.domain
    }

    pub fn base_graph(&self) -> &Graph {
        &self.label.codomain
    }

    pub fn num_vertices(&self) -> usize {
        self.graph().num_vertices()
    }

    pub fn num_edge_pairs(&self) -> usize {
        self.graph().num_edge_pairs()
    }

    pub fn rank(&self) -> isize {
        self.graph().euler_rank()
    }

    /// Label of an oriented edge (an oriented edge of the base graph).
    pub fn edge_label(&self, e: Edge) -> Edge {
        self.label.image(e)[0]
    }

    /// Folded core of the subgroup generated by loops at vertex `at` of
    /// `base`, pointed at the image of `at`.
    pub fn from_loops(base: &Graph, at: usize, loops: &[Path]) -> Result<Self> {
        let loops: Vec<Path> = loops
            .iter()
            .map(|l| reduce_path(l.iter().copied()))
            .filter(|l| !l.is_empty())
            .collect();
        if loops.is_empty() {
            return Err(Error::TrivialCore);
        }
        let rose = Graph::rose(loops.len());
        let petals = GraphMap::new(rose, base.clone(), vec![at], loops)?;
        let fr = fold_graph_map(&petals, FoldOrder::LowestFirst)?;
        let b = fr.fold_map.vertex_images[0];
        SubgroupGraph {
            label: fr.immersion,
            base: Some(b),
        }
        .pruned()
    }

    /// Subgroup of the free group on `rank` generators, over the rose.
    pub fn from_words(rank: usize, gens: &[Word]) -> Result<Self> {
        let loops: Vec<Path> = gens.iter().map(word_to_path).collect();
        SubgroupGraph::from_loops(&Graph::rose(rank), 0, &loops)
    }

    /// The whole group as a subgroup graph of its base.
    pub fn whole(base: &Graph, at: usize) -> Self {
        SubgroupGraph {
            label: GraphMap::identity(base),
            base: Some(at),
        }
    }

    /// Removes valence ≤ 1 vertices except the base.
    fn pruned(&self) -> Result<Self> {
        let sub = self.graph().prune(self.base);
        if sub.graph.num_edge_pairs() == 0 {
            return Err(Error::TrivialCore);
        }
        Ok(SubgroupGraph {
            label: restrict_map(&self.label, &sub),
            base: self.base.and_then(|b| sub.vertex_map[b]),
        })
    }

    /// Forgets the base vertex and passes to the core.
    pub fn unpointed(&self) -> Result<Self> {
        let sub = self.graph().core()?;
        Ok(SubgroupGraph {
            label: restrict_map(&self.label, &sub),
            base: None,
        })
    }

    pub fn is_folded(&self) -> bool {
        self.label.is_simplicial() && self.label.is_immersion()
    }

    /// Vertex reached by reading `path` (base-graph edges) from `from`.
    pub fn read(&self, from: usize, path: &[Edge]) -> Option<usize> {
        let star = self.graph().star();
        let mut cur = from;
        for &l in path {
            let d = star[cur].iter().find(|&&d| self.edge_label(d) == l)?;
            cur = self.graph().target(*d);
        }
        Some(cur)
    }

    pub fn read_word(&self, from: usize, w: &Word) -> Option<usize> {
        self.read(from, &word_to_path(w))
    }

    /// Whether the base-graph loop `path` lifts to a loop at the base.
    pub fn accepts(&self, path: &[Edge]) -> bool {
        let b = self.base.expect("membership needs a pointed subgroup graph");
        self.read(b, path) == Some(b)
    }

    pub fn contains(&self, w: &Word) -> bool {
        self.accepts(&word_to_path(w))
    }

    /// Label-preserving isomorphism; respects base vertices when both are
    /// pointed.
    pub fn isomorphic(&self, other: &SubgroupGraph) -> bool {
        if self.base_graph() != other.base_graph()
            || self.num_vertices() != other.num_vertices()
            || self.num_edge_pairs() != other.num_edge_pairs()
        {
            return false;
        }
        if self.num_vertices() == 0 {
            return true;
        }
        match (self.base, other.base) {
            (Some(a), Some(b)) => label_iso_from(self, other, a, b),
            _ => (0..other.num_vertices()).any(|b| label_iso_from(self, other, 0, b)),
        }
    }

    /// The marked graph carried by loops at the base for `gens`.
    pub fn lifts(&self, path: &[Edge]) -> Option<Path> {
        let b = self.base?;
        let star = self.graph().star();
        let mut cur = b;
        let mut out = Vec::with_capacity(path.len());
        for &l in path {
            let d = *star[cur].iter().find(|&&d| self.edge_label(d) == l)?;
            out.push(d);
            cur = self.graph().target(d);
        }
        Some(out)
    }
}

fn label_iso_from(g1: &SubgroupGraph, g2: &SubgroupGraph, a: usize, b: usize) -> bool {
    if g1.label.vertex_images[a] != g2.label.vertex_images[b] {
        return false;
    }
    let s1 = g1.graph().star();
    let s2 = g2.graph().star();
    let mut vmap = vec![usize::MAX; g1.num_vertices()];
    let mut used = vec![false; g2.num_vertices()];
    vmap[a] = b;
    used[b] = true;
    let mut queue = VecDeque::from([a]);
    while let Some(v) = queue.pop_front() {
        let w = vmap[v];
        if s1[v].len() != s2[w].len() {
            return false;
        }
        for &d in &s1[v] {
            let l = g1.edge_label(d);
            let Some(&d2) = s2[w].iter().find(|&&x| g2.edge_label(x) == l) else {
                return false;
            };
            let (t1, t2) = (g1.graph().target(d), g2.graph().target(d2));
            if vmap[t1] == usize::MAX {
                if used[t2] {
                    return false;
                }
                vmap[t1] = t2;
                used[t2] = true;
                queue.push_back(t1);
            } else if vmap[t1] != t2 {
                return false;
            }
        }
    }
    vmap.iter().all(|&x| x != usize::MAX)
}

/// One component of a fiber product with its two projections.
#[derive(Clone, Debug)]
pub struct FiberComponent {
    pub subgroup: SubgroupGraph,
    pub to_first: GraphMap,
    pub to_second: GraphMap,
}

#[derive(Clone, Debug)]
pub struct Pullback {
    /// Core components, unpointed.
    pub components: Vec<FiberComponent>,
    /// Pointed core at the pair of base vertices; `None` when the
    /// intersection is trivial.
    pub pointed: Option<FiberComponent>,
}

/// Fiber product of two subgroup graphs over the same base graph.
pub fn pullback(s1: &SubgroupGraph, s2: &SubgroupGraph) -> Result<Pullback> {
    if s1.base_graph() != s2.base_graph() {
        return Err(Error::MismatchedGraphs("subgroup graphs over different bases".into()));
    }
    let (g1, g2) = (s1.graph(), s2.graph());
    let n2 = g2.num_vertices();
    let mut index = vec![usize::MAX; g1.num_vertices() * n2];
    let mut pairs = Vec::new();
    for u in 0..g1.num_vertices() {
        for w in 0..n2 {
            if s1.label.vertex_images[u] == s2.label.vertex_images[w] {
                index[u * n2 + w] = pairs.len();
                pairs.push((u, w));
            }
        }
    }
    let mut prod = Graph::new(pairs.len());
    let mut lab = Vec::new();
    let mut p1 = Vec::new();
    let mut p2 = Vec::new();
    for e1 in g1.positive_edges() {
        let l = s1.edge_label(e1);
        for e2 in g2.oriented_edges() {
            if s2.edge_label(e2) == l {
                let o = index[g1.origin(e1) * n2 + g2.origin(e2)];
                let t = index[g1.target(e1) * n2 + g2.target(e2)];
                prod.add_edge(o, t);
                lab.push(vec![l]);
                p1.push(vec![e1]);
                p2.push(vec![e2]);
            }
        }
    }
    let whole = FiberComponent {
        subgroup: SubgroupGraph {
            label: GraphMap {
                domain: prod.clone(),
                codomain: s1.base_graph().clone(),
                vertex_images: pairs.iter().map(|&(u, _)| s1.label.vertex_images[u]).collect(),
                edge_images: lab,
            },
            base: None,
        },
        to_first: GraphMap {
            domain: prod.clone(),
            codomain: g1.clone(),
            vertex_images: pairs.iter().map(|&(u, _)| u).collect(),
            edge_images: p1,
        },
        to_second: GraphMap {
            domain: prod.clone(),
            codomain: g2.clone(),
            vertex_images: pairs.iter().map(|&(_, w)| w).collect(),
            edge_images: p2,
        },
    };
    let restrict = |sub: &Subgraph, base: Option<usize>| FiberComponent {
        subgroup: SubgroupGraph {
            label: restrict_map(&whole.subgroup.label, sub),
            base,
        },
        to_first: restrict_map(&whole.to_first, sub),
        to_second: restrict_map(&whole.to_second, sub),
    };

    let mut components = Vec::new();
    let core = prod.prune(None);
    for comp in core.graph.components() {
        if comp.is_empty() {
            continue;
        }
        let mut keep_v = vec![false; prod.num_vertices()];
        let mut keep_p = vec![false; prod.num_edge_pairs()];
        let mut in_comp = vec![false; core.graph.num_vertices()];
        for &v in &comp {
            in_comp[v] = true;
        }
        for (old, new) in core.vertex_map.iter().enumerate() {
            if let Some(n) = new {
                keep_v[old] = in_comp[*n];
            }
        }
        for e in prod.positive_edges() {
            if let Some(ne) = core.edge_map[e.index()] {
                keep_p[e.pair()] = in_comp[core.graph.origin(ne)];
            }
        }
        let sub = prod.restrict(&keep_v, &keep_p);
        if sub.graph.num_edge_pairs() > 0 {
            components.push(restrict(&sub, None));
        }
    }

    let pointed = match (s1.base, s2.base) {
        (Some(b1), Some(b2)) if index[b1 * n2 + b2] != usize::MAX => {
            let start = index[b1 * n2 + b2];
            let comp = prod
                .components()
                .into_iter()
                .find(|c| c.contains(&start))
                .unwrap();
            let mut keep_v = vec![false; prod.num_vertices()];
            for &v in &comp {
                keep_v[v] = true;
            }
            let keep_p: Vec<bool> = prod.positive_edges().map(|e| keep_v[prod.origin(e)]).collect();
            let sub = prod.restrict(&keep_v, &keep_p);
            let b = sub.vertex_map[start].unwrap();
            let pr = sub.graph.prune(Some(b));
            if pr.graph.num_edge_pairs() == 0 {
                None
            } else {
                let c = restrict(&sub, None);
                Some(FiberComponent {
                    subgroup: SubgroupGraph {
                        label: restrict_map(&c.subgroup.label, &pr),
                        base: pr.vertex_map[b],
                    },
                    to_first: restrict_map(&c.to_first, &pr),
                    to_second: restrict_map(&c.to_second, &pr),
                })
            }
        }
        _ => None,
    };
    Ok(Pullback { components, pointed })
}

/// Degree of a simplicial map that is a covering of connected graphs,
/// `None` if some vertex star is not mapped bijectively.
pub fn covering_degree(label: &GraphMap) -> Option<usize> {
    let dom = &label.domain;
    let cod = &label.codomain;
    if dom.num_vertices() == 0 || !label.is_simplicial() || !dom.is_connected() {
        return None;
    }
    let cstar = cod.star();
    for (v, dirs) in dom.star().iter().enumerate() {
        let mut imgs: Vec<Edge> = dirs.iter().map(|&d| label.image(d)[0]).collect();
        imgs.sort_unstable();
        let mut want = cstar[label.vertex_images[v]].clone();
        want.sort_unstable();
        if imgs != want {
            return None;
        }
    }
    if !dom.num_vertices().is_multiple_of(cod.num_vertices()) {
        return None;
    }
    Some(dom.num_vertices() / cod.num_vertices())
}

/// Index of the subgroup in the fundamental group of the base graph.
pub fn covering_index(sg: &SubgroupGraph) -> Option<usize> {
    covering_degree(&sg.label)
}

/// Permutation action of the free group on the vertices of a covering of
/// the rose: `table[q][key]` for letter rank keys.
fn action_table(h: &SubgroupGraph, rank: usize) -> Result<Vec<Vec<usize>>> {
    if h.base_graph() != &Graph::rose(rank) || covering_index(h).is_none() {
        return Err(Error::Precondition("subgroup graph is not a finite covering of the rose".into()));
    }
    let star = h.graph().star();
    let mut table = vec![vec![0; 2 * rank]; h.num_vertices()];
    for (q, dirs) in star.iter().enumerate() {
        for &d in dirs {
            let l = h.edge_label(d).to_letter();
            table[q][l.rank_key()] = h.graph().target(d);
        }
    }
    Ok(table)
}

fn act(table: &[Vec<usize>], q: usize, w: &Word) -> usize {
    w.letters().iter().fold(q, |cur, l| table[cur][l.rank_key()])
}

/// Action table of `q ↦ q·φ^m(x)` for letters `x`, built one power at a
/// time so the words `φ^m(x)` are never written out.
fn power_action(table: &[Vec<usize>], e: &Endomorphism, m: usize) -> Vec<Vec<usize>> {
    let keys = 2 * e.rank();
    let mut cur = table.to_vec();
    for _ in 0..m {
        cur = (0..table.len())
            .map(|q| {
                (0..keys)
                    .map(|key| act(&cur, q, &e.image_of_letter(Letter::from_rank_key(key))))
                    .collect()
            })
            .collect();
    }
    cur
}

/// `φ⁻¹(H')` for a finite-index `H'`, through the coset action
/// `q · g = q · φ(g)`.
pub fn preimage_subgroup(e: &Endomorphism, h: &SubgroupGraph) -> Result<SubgroupGraph> {
    let rank = e.rank();
    let table = action_table(h, rank)?;
    let base = h.base.unwrap_or(0);
    let images: Vec<Word> = (0..rank).map(|i| e.images()[i].clone()).collect();
    let mut index = vec![usize::MAX; h.num_vertices()];
    let mut order = vec![base];
    index[base] = 0;
    let mut i = 0;
    while i < order.len() {
        let q = order[i];
        for img in &images {
            for t in [act(&table, q, img), act(&table, q, &img.inverse())] {
                if index[t] == usize::MAX {
                    index[t] = order.len();
                    order.push(t);
                }
            }
        }
        i += 1;
    }
    let mut g = Graph::new(order.len());
    let mut labels = Vec::new();
    for &q in &order {
        for (gi, img) in images.iter().enumerate() {
            g.add_edge(index[q], index[act(&table, q, img)]);
            labels.push(vec![Edge::new(gi, false)]);
        }
    }
    Ok(SubgroupGraph {
        label: GraphMap {
            domain: g,
            codomain: Graph::rose(rank),
            vertex_images: vec![0; order.len()],
            edge_images: labels,
        },
        base: Some(0),
    })
}

#[derive(Clone, Debug)]
pub struct StabilizedPreimage {
    pub k: usize,
    pub j: usize,
    /// `φ^{-i}(H')` for `i = 0..=j`.
    pub chain: Vec<SubgroupGraph>,
    pub subgroup: SubgroupGraph,
    /// Coset map `Kw ↦ Kφ^{j−k}(w)` on the vertices of `subgroup`.
    pub permutation: Vec<usize>,
    pub is_bijection: bool,
    pub square_commutes: bool,
}

/// Iterates preimages `φ^{-i}(H')` until the first repeat.
pub fn stabilized_preimage(e: &Endomorphism, h: &SubgroupGraph) -> Result<StabilizedPreimage> {
    let mut chain = vec![h.clone()];
    let (k, j) = loop {
        let next = preimage_subgroup(e, chain.last().unwrap())?;
        if let Some(k) = chain.iter().position(|c| c.isomorphic(&next)) {
            let j = chain.len();
            chain.push(next);
            break (k, j);
        }
        chain.push(next);
    };
    let subgroup = chain[k].clone();
    let rank = e.rank();
    let table = action_table(&subgroup, rank)?;
    let psi = power_action(&table, e, j - k);
    let base = subgroup.base.unwrap_or(0);
    // spanning-tree words for every coset
    let n = subgroup.num_vertices();
    let mut word_of: Vec<Option<Word>> = vec![None; n];
    word_of[base] = Some(Word::identity());
    let mut queue = VecDeque::from([base]);
    while let Some(q) = queue.pop_front() {
        for key in 0..2 * rank {
            let t = table[q][key];
            if word_of[t].is_none() {
                word_of[t] = Some(word_of[q].as_ref().unwrap().mul(&Word::letter(Letter::from_rank_key(key))));
                queue.push_back(t);
            }
        }
    }
    let permutation: Vec<usize> = (0..n)
        .map(|q| act(&psi, base, word_of[q].as_ref().unwrap()))
        .collect();
    let mut seen = vec![false; n];
    let is_bijection = permutation.iter().all(|&p| !std::mem::replace(&mut seen[p], true));
    let square_commutes = (0..n).all(|q| {
        (0..2 * rank).all(|key| {
            permutation[table[q][key]] == psi[permutation[q]][key]
        })
    });
    Ok(StabilizedPreimage {
        k,
        j,
        chain,
        subgroup,
        permutation,
        is_bijection,
        square_commutes,
    })
}

/// One step of the iterated image sequence `S_i = S(φ^i(F))`.
#[derive(Clone, Debug)]
pub struct ImageStep {
    pub index: usize,
    /// `v_i: S_i → Γ` together with `S_i`.
    pub subgroup: SubgroupGraph,
    /// `h_i: Γ → S_i`, the accumulated folds; `f^i = v_i ∘ h_i`.
    pub fold_map: GraphMap,
    pub folds: usize,
}

impl ImageStep {
    /// `S_i` marked through `h_i` by the given basis loops of `Γ` at `at`.
    pub fn marked_graph(&self, at: usize, basis_loops: &[Path]) -> Result<MarkedGraph> {
        let b = self.fold_map.vertex_images[at];
        let loops = basis_loops.iter().map(|l| self.fold_map.image_of_path(l)).collect();
        MarkedGraph::new(self.subgroup.graph().clone(), b, loops)
    }
}

#[derive(Clone, Debug)]
pub struct ImageSequence {
    pub steps: Vec<ImageStep>,
    /// `v_1` is a graph isomorphism, so the endomorphism is onto.
    pub surjective: bool,
}

impl ImageSequence {
    pub fn edge_pair_counts(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.subgroup.num_edge_pairs()).collect()
    }
}

/// `S_1, ..., S_k` for a self-map `f` of a core graph, each obtained by
/// folding `f ∘ v_{i−1}`.
pub fn iterate_image(f: &GraphMap, k: usize) -> Result<ImageSequence> {
    if !f.is_self_map() {
        return Err(Error::MismatchedGraphs("iterate_image needs a self-map".into()));
    }
    let f = f.tighten()?;
    let gamma = f.domain.clone();
    let mut v = GraphMap::identity(&gamma);
    let mut h = GraphMap::identity(&gamma);
    let mut steps = Vec::with_capacity(k);
    let mut surjective = false;
    for i in 1..=k {
        let m = v.then(&f)?.tighten()?;
        let fr = fold_to_immersion(&m)?;
        let (sub, retract) = retract_to_core(fr.folded_graph())?;
        let imm = restrict_map(&fr.immersion, &sub);
        let step_h = fr.fold_map.then(&retract)?;
        h = h.then(&step_h)?;
        v = imm;
        if i == 1 {
            surjective = v.is_isomorphism();
        }
        steps.push(ImageStep {
            index: i,
            subgroup: SubgroupGraph {
                label: v.clone(),
                base: None,
            },
            fold_map: h.clone(),
            folds: fr.folds.len(),
        });
    }
    Ok(ImageSequence { steps, surjective })
}

/// Turns crossed by the image paths of a map, for diagnostics.
pub fn crossed_turns(m: &GraphMap) -> BTreeSet<crate::graphs::Turn> {
    m.edge_images.iter().flat_map(|p| path_turns(p)).collect()
}
