//! Decision procedures: the fold-and-collapse loop to a clean immersion,
//! full irreducibility and hyperbolicity certificates, periodic conjugacy
//! classes and invariant subgroups of finite index in iterated images.

use petgraph::algo::kosaraju_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{for_each_isomorphism, loop_words, reverse_path, Edge, Graph, GraphMap, Path};
use crate::par::{self, Exec};
use crate::stallings::{
    covering_degree, fold_to_immersion, iterate_image, FoldResult, pullback, restrict_map, retract_to_core, FiberComponent,
    SubgroupGraph,
};
use crate::traintrack::{
    cancellation_bounds, is_clean, pf_eigenvalue, whitehead_graphs, CleanStatus, TransitionMatrix, WhiteheadGraph,
    DEFAULT_TOL,
};
use crate::words::{conjugate_test, cyclically_reduced_words, simultaneous_conjugator, Endomorphism, Letter, Word};

pub const DEFAULT_CAP: usize = 64;

/// Longest spine period looked for before collapsing toward a fixed point.
const MAX_PERIOD: usize = 6;

/// Graph or image size past which the fold loop stops with `CapExceeded`.
pub const MAX_EDGE_PAIRS: usize = 20_000;

/// The per-round critical constant uses a dense transition matrix, so it
/// is only logged up to this many edge pairs.
const CRITICAL_LIMIT: usize = 2_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub vertices: usize,
    pub edge_pairs: usize,
    pub folds: usize,
    pub collapsed_pairs: usize,
    /// Critical constant of the representative entering this round, when
    /// its transition matrix is irreducible and expanding and the graph is
    /// small enough to bother.
    pub critical: Option<f64>,
}

/// A representative `map: Δ → Δ` with `trail: Γ → Δ` from the input graph
/// such that `map ∘ trail ≃ trail ∘ input`.
#[derive(Clone, Debug)]
pub struct CleanImmersionRep {
    pub map: GraphMap,
    pub trail: GraphMap,
    pub iterations: usize,
    pub status: CleanStatus,
    pub log: Vec<IterationLog>,
}

impl CleanImmersionRep {
    pub fn graph(&self) -> &Graph {
        &self.map.domain
    }

    pub fn whitehead_graphs(&self) -> Vec<WhiteheadGraph> {
        whitehead_graphs(&self.map)
    }

    /// `map ∘ trail` and `trail ∘ input` agree on `π₁` up to one inner
    /// automorphism.
    pub fn trail_commutes(&self, input: &GraphMap) -> bool {
        trail_commutes(input, &self.trail, &self.map)
    }
}

fn trail_commutes(input: &GraphMap, trail: &GraphMap, map: &GraphMap) -> bool {
    let Ok(lhs) = input.then(trail) else { return false };
    let Ok(rhs) = trail.then(map) else { return false };
    let basis = basis_loops(&input.domain);
    let l: Vec<Path> = basis.iter().map(|p| lhs.image_of_path(p)).collect();
    let r: Vec<Path> = basis.iter().map(|p| rhs.image_of_path(p)).collect();
    let g = &map.domain;
    simultaneous_conjugator(&loop_words(g, &l), &loop_words(g, &r)).is_some()
}

/// Spanning-tree basis loops of `π₁(g, 0)`.
fn basis_loops(g: &Graph) -> Vec<Path> {
    let tree = g.spanning_tree(0);
    let mut in_tree = vec![false; g.num_edge_pairs()];
    for e in tree.iter().flatten() {
        in_tree[e.pair()] = true;
    }
    g.positive_edges()
        .filter(|e| !in_tree[e.pair()])
        .map(|e| {
            let mut p = Graph::tree_path(&tree, g, g.origin(e));
            p.push(e);
            p.extend(reverse_path(&Graph::tree_path(&tree, g, g.target(e))));
            crate::graphs::reduce_path(p)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub enum ImmersionOutcome {
    Clean(CleanImmersionRep),
    /// The loop reached an immersion that is not clean.
    ImmersionNotClean(CleanImmersionRep),
    /// Folding produced a graph isomorphism: the endomorphism is onto.
    Surjective { iterations: usize },
    CapExceeded { last: GraphMap, iterations: usize },
}

impl ImmersionOutcome {
    pub fn clean_rep(&self) -> Option<&CleanImmersionRep> {
        match self {
            ImmersionOutcome::Clean(r) => Some(r),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ImmersionOutcome::Clean(_) => "Clean",
            ImmersionOutcome::ImmersionNotClean(_) => "ImmersionNotClean",
            ImmersionOutcome::Surjective { .. } => "Surjective",
            ImmersionOutcome::CapExceeded { .. } => "CapExceeded",
        }
    }
}

/// Edges that never map over an expanding stratum, i.e. cannot reach a
/// strongly connected block of the transition digraph with `λ > 1`.
pub fn bounded_edges(g: &GraphMap) -> Vec<bool> {
    let n = g.domain.num_edge_pairs();
    let (sccs, scc_of) = image_sccs(g);
    // a block expands unless its restricted matrix is a permutation
    // blocks come sinks first, so successors are settled first
    let mut reaches = vec![false; sccs.len()];
    for (i, c) in sccs.iter().enumerate() {
        let expanding = c.iter().any(|v| {
            g.edge_images[v.index()]
                .iter()
                .filter(|x| scc_of[x.pair()] == i)
                .count()
                > 1
        });
        reaches[i] = expanding
            || c.iter()
                .any(|v| g.edge_images[v.index()].iter().any(|x| scc_of[x.pair()] != i && reaches[scc_of[x.pair()]]));
        debug_assert!(c
            .iter()
            .all(|v| g.edge_images[v.index()].iter().all(|x| scc_of[x.pair()] <= i)));
    }
    (0..n).map(|e| !reaches[scc_of[e]]).collect()
}

/// Strongly connected blocks of the transition digraph, sinks first,
/// with the block of each edge pair.
fn image_sccs(g: &GraphMap) -> (Vec<Vec<NodeIndex>>, Vec<usize>) {
    let n = g.domain.num_edge_pairs();
    let mut dg = DiGraph::<(), ()>::with_capacity(n, g.total_image_length());
    for _ in 0..n {
        dg.add_node(());
    }
    // arc j -> i when pair i occurs in the image of j
    for (j, img) in g.edge_images.iter().enumerate() {
        for e in img {
            dg.update_edge(NodeIndex::new(j), NodeIndex::new(e.pair()), ());
        }
    }
    let sccs = kosaraju_scc(&dg);
    let mut scc_of = vec![0; n];
    for (i, c) in sccs.iter().enumerate() {
        for v in c {
            scc_of[v.index()] = i;
        }
    }
    (sccs, scc_of)
}

/// Exponential growth rate of each edge under iteration: the largest PF
/// eigenvalue among the blocks it maps over.
fn growth_rates(g: &GraphMap) -> Result<Vec<f64>> {
    let (sccs, scc_of) = image_sccs(g);
    let mut rate = vec![0.0f64; sccs.len()];
    let mut pos = vec![0; scc_of.len()];
    for (i, c) in sccs.iter().enumerate() {
        for (k, v) in c.iter().enumerate() {
            pos[v.index()] = k;
        }
        let mut entries = vec![vec![0; c.len()]; c.len()];
        for v in c {
            for e in g.edge_images[v.index()].iter().filter(|e| scc_of[e.pair()] == i) {
                entries[pos[e.pair()]][pos[v.index()]] += 1;
            }
        }
        let m = TransitionMatrix::new(entries);
        let own = if m.is_irreducible() { pf_eigenvalue(&m, DEFAULT_TOL)?.lambda } else { 0.0 };
        let below = c
            .iter()
            .flat_map(|v| &g.edge_images[v.index()])
            .filter(|x| scc_of[x.pair()] != i)
            .map(|x| rate[scc_of[x.pair()]])
            .fold(0.0, f64::max);
        rate[i] = own.max(below);
    }
    Ok(scc_of.iter().map(|&i| rate[i]).collect())
}

/// Edges of the tree components of the subgraph spanned by `keep`.
fn tree_part(g: &Graph, keep: &[bool]) -> Vec<bool> {
    let sub = g.restrict(&vec![true; g.num_vertices()], keep);
    let comps = sub.graph.components();
    let mut comp_of = vec![0; sub.graph.num_vertices()];
    for (i, c) in comps.iter().enumerate() {
        for &v in c {
            comp_of[v] = i;
        }
    }
    let mut edges = vec![0usize; comps.len()];
    for e in sub.graph.positive_edges() {
        edges[comp_of[sub.graph.origin(e)]] += 1;
    }
    let is_tree: Vec<bool> = comps.iter().zip(&edges).map(|(c, &m)| m + 1 == c.len()).collect();
    (0..g.num_edge_pairs())
        .map(|p| {
            keep[p] && {
                let ne = sub.edge_map[Edge::new(p, false).index()].unwrap();
                is_tree[comp_of[sub.graph.origin(ne)]]
            }
        })
        .collect()
}

/// Tree components of the invariant subgraph of bounded edges.
pub fn invariant_forest(g: &GraphMap) -> Vec<bool> {
    tree_part(&g.domain, &bounded_edges(g))
}

/// Quotient of `g` by a forest, with the collapse map.
pub fn collapse_forest(g: &Graph, forest: &[bool]) -> GraphMap {
    let n = g.num_vertices();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    for e in g.positive_edges().filter(|e| forest[e.pair()]) {
        let (a, b) = (find(&mut parent, g.origin(e)), find(&mut parent, g.target(e)));
        parent[a.max(b)] = a.min(b);
    }
    let mut index = vec![usize::MAX; n];
    let mut m = 0;
    for v in 0..n {
        if find(&mut parent, v) == v {
            index[v] = m;
            m += 1;
        }
    }
    let vertex_images: Vec<usize> = (0..n).map(|v| index[find(&mut parent, v)]).collect();
    let mut q = Graph::new(m);
    let edge_images = g
        .positive_edges()
        .map(|e| {
            if forest[e.pair()] {
                Vec::new()
            } else {
                vec![q.add_edge(vertex_images[g.origin(e)], vertex_images[g.target(e)])]
            }
        })
        .collect();
    GraphMap {
        domain: g.clone(),
        codomain: q,
        vertex_images,
        edge_images,
    }
}

/// `c ∘ m ∘ s` on the quotient by a forest, where the section `s` lifts
/// each edge through forest paths from the class representatives.
fn quotient_map(m: &GraphMap, c: &GraphMap, forest: &[bool]) -> GraphMap {
    let g = &m.domain;
    let q = &c.codomain;
    let star = g.star();
    let mut rep = vec![usize::MAX; q.num_vertices()];
    // forest edge entering each vertex on the way from its representative
    let mut parent: Vec<Option<Edge>> = vec![None; g.num_vertices()];
    let mut reached = vec![false; g.num_vertices()];
    for v in 0..g.num_vertices() {
        let w = c.vertex_images[v];
        if rep[w] != usize::MAX {
            continue;
        }
        rep[w] = v;
        reached[v] = true;
        let mut stack = vec![v];
        while let Some(x) = stack.pop() {
            for &e in &star[x] {
                let t = g.target(e);
                if forest[e.pair()] && !reached[t] {
                    reached[t] = true;
                    parent[t] = Some(e);
                    stack.push(t);
                }
            }
        }
    }
    let from_rep = |mut v: usize| {
        let mut p = Vec::new();
        while let Some(e) = parent[v] {
            p.push(e);
            v = g.origin(e);
        }
        p.reverse();
        p
    };
    let vertex_images = rep.iter().map(|&v| c.vertex_images[m.vertex_images[v]]).collect();
    let edge_images = g
        .positive_edges()
        .filter(|e| !forest[e.pair()])
        .map(|e| {
            let mut lift = from_rep(g.origin(e));
            lift.push(e);
            lift.extend(reverse_path(&from_rep(g.target(e))));
            c.image_of_path(&m.image_of_path(&lift))
        })
        .collect();
    GraphMap {
        domain: q.clone(),
        codomain: q.clone(),
        vertex_images,
        edge_images,
    }
}

/// Collapse of all but the first edge along each natural edge, undoing
/// subdivision. `None` when there are no bivalent vertices.
fn smoothing_collapse(g: &Graph) -> Option<(GraphMap, Vec<bool>)> {
    let sm = g.smooth();
    if sm.graph.num_vertices() == g.num_vertices() {
        return None;
    }
    let mut forest = vec![false; g.num_edge_pairs()];
    for chain in &sm.natural_paths {
        for e in &chain[1..] {
            forest[e.pair()] = true;
        }
    }
    Some((collapse_forest(g, &forest), forest))
}

/// Collapse of the edges whose images are trivial, if any. A cycle of
/// such edges means the map kills a loop.
fn pretrivial_collapse(m: &GraphMap) -> Result<Option<(GraphMap, Vec<bool>)>> {
    let dead: Vec<bool> = m.edge_images.iter().map(Vec::is_empty).collect();
    let count = dead.iter().filter(|&&x| x).count();
    if count == 0 {
        return Ok(None);
    }
    let g = &m.domain;
    let sub = g.restrict(&vec![true; g.num_vertices()], &dead);
    if count + sub.graph.components().len() != g.num_vertices() {
        return Err(Error::NonInjective { fold: 0 });
    }
    Ok(Some((collapse_forest(g, &dead), dead)))
}

/// Vertex and edge counts with the sorted valences.
fn graph_shape(g: &Graph) -> (usize, usize, Vec<usize>) {
    let mut valences: Vec<usize> = g.star().iter().map(Vec::len).collect();
    valences.sort_unstable();
    (g.num_vertices(), g.num_edge_pairs(), valences)
}

/// When `g.domain` is periodic of period `k` and `g^k` is homotopic to an
/// immersion there, the forest of edges growing slower than the top rate
/// under that immersion. Collapsing it moves toward the fixed point.
fn periodic_forest(g: &GraphMap, k: usize) -> Result<Option<Vec<bool>>> {
    let mut gk = GraphMap::identity(&g.domain);
    for _ in 0..k {
        let raw: usize = gk.edge_images.iter().flatten().map(|e| g.edge_images[e.pair()].len()).sum();
        if raw > MAX_EDGE_PAIRS {
            return Ok(None);
        }
        match gk.compose(g) {
            Ok(next) => gk = next,
            Err(_) => return Ok(None),
        }
    }
    let fr = fold_to_immersion(&gk)?;
    let f = if fr.folds.is_empty() {
        gk
    } else {
        match fixed_point_immersion(&gk, &fr)? {
            Some(f) => f,
            None => return Ok(None),
        }
    };
    let forest = slow_forest(&f)?;
    Ok(forest.contains(&true).then_some(forest))
}

/// Tree components of the edges growing slower than the fastest ones,
/// which include the invariant forest.
fn slow_forest(f: &GraphMap) -> Result<Vec<bool>> {
    let rates = growth_rates(f)?;
    let top = rates.iter().copied().fold(1.0, f64::max);
    let slow: Vec<bool> = rates.iter().map(|&r| r < top * (1.0 - 1e-9)).collect();
    Ok(tree_part(&f.domain, &slow))
}

/// When the folded core smooths to a copy of `g.domain` through an
/// isomorphism `ι` homotopic to the fold, `v ∘ ι` is an immersion
/// homotopic to `g`.
fn fixed_point_immersion(g: &GraphMap, fr: &FoldResult) -> Result<Option<GraphMap>> {
    let d = &g.domain;
    let (sub, _) = retract_to_core(fr.folded_graph())?;
    let v = restrict_map(&fr.immersion, &sub);
    let sm = sub.graph.smooth();
    if sm.graph.num_vertices() != d.num_vertices() || sm.graph.num_edge_pairs() != d.num_edge_pairs() {
        return Ok(None);
    }
    let natural_vertex = |w: usize| sm.vertex_map.iter().position(|&x| x == Some(w)).unwrap();
    let natural_images: Vec<Path> = sm.natural_paths.iter().map(|p| v.image_of_path(p)).collect();
    let image = |e: Edge| {
        let p = &natural_images[e.pair()];
        if e.is_positive() {
            p.clone()
        } else {
            reverse_path(p)
        }
    };
    let basis = basis_loops(d);
    let words_under = |m: &GraphMap| {
        let loops: Vec<Path> = basis.iter().map(|p| m.image_of_path(p)).collect();
        loop_words(d, &loops)
    };
    let target = words_under(g);
    let mut found = None;
    for_each_isomorphism(d, &sm.graph, |iso| {
        let f = GraphMap {
            domain: d.clone(),
            codomain: d.clone(),
            vertex_images: iso.vertex.iter().map(|&w| v.vertex_images[natural_vertex(w)]).collect(),
            edge_images: d.positive_edges().map(|e| image(iso.edge(e))).collect(),
        };
        if f.is_immersion() && simultaneous_conjugator(&words_under(&f), &target).is_some() {
            found = Some(f);
        }
        found.is_some()
    });
    Ok(found)
}

/// Reduces `m`, collapsing pretrivial forests until every edge image is
/// nontrivial; the collapses are appended to `trail`.
fn reduce_collapsing(m: GraphMap, trail: &mut GraphMap) -> Result<GraphMap> {
    let mut m = m.reduced();
    while let Some((c, dead)) = pretrivial_collapse(&m)? {
        m = quotient_map(&m, &c, &dead).reduced();
        *trail = trail.then(&c)?;
    }
    Ok(m)
}

fn critical_of(g: &GraphMap) -> Option<f64> {
    if g.domain.num_edge_pairs() > CRITICAL_LIMIT {
        return None;
    }
    let a = TransitionMatrix::from_map(g).ok()?;
    let pf = pf_eigenvalue(&a, DEFAULT_TOL).ok()?;
    if pf.lambda <= 1.0 + 1e-9 {
        return None;
    }
    cancellation_bounds(g, &pf.left_eigenvector, Some(pf.lambda))
        .ok()?
        .critical
}

pub fn find_immersion_rep(e: &Endomorphism, cap: usize) -> Result<ImmersionOutcome> {
    find_immersion_rep_from(&GraphMap::from_endomorphism(e), cap)
}

/// Fold, replace `g = v ∘ h` by `h ∘ v` on the folded core, collapse the
/// invariant forest, repeat until an immersion appears.
pub fn find_immersion_rep_from(input: &GraphMap, cap: usize) -> Result<ImmersionOutcome> {
    let input = input.tighten()?;
    let mut g = input.clone();
    let mut trail = GraphMap::identity(&input.domain);
    let mut log = Vec::new();
    let mut iteration = 0;
    let mut shapes = Vec::new();
    loop {
        if !g.is_immersion() {
            if let Some((c, forest)) = smoothing_collapse(&g.domain) {
                trail = trail.then(&c)?;
                g = reduce_collapsing(quotient_map(&g, &c, &forest), &mut trail)?;
            }
        }
        let fr = fold_to_immersion(&g)?;
        if !fr.folds.is_empty() {
            if let Some(f) = fixed_point_immersion(&g, &fr)? {
                g = f;
                continue;
            }
            let shape = graph_shape(&g.domain);
            let mut forest = None;
            for k in 2..=MAX_PERIOD.min(shapes.len()) {
                if shapes[shapes.len() - k] == shape {
                    forest = periodic_forest(&g, k)?;
                    if forest.is_some() {
                        break;
                    }
                }
            }
            shapes.push(shape);
            if let Some(forest) = forest {
                let c = collapse_forest(&g.domain, &forest);
                trail = trail.then(&c)?;
                g = reduce_collapsing(quotient_map(&g, &c, &forest), &mut trail)?;
                shapes.clear();
                continue;
            }
        }
        if fr.immersion.is_isomorphism() {
            return Ok(ImmersionOutcome::Surjective { iterations: iteration });
        }
        if fr.folds.is_empty() {
            let forest = slow_forest(&g)?;
            if forest.contains(&true) {
                let c = collapse_forest(&g.domain, &forest);
                trail = trail.then(&c)?;
                g = reduce_collapsing(quotient_map(&g, &c, &forest), &mut trail)?;
                continue;
            }
            let status = is_clean(&g)?;
            let rep = CleanImmersionRep {
                map: g,
                trail,
                iterations: iteration,
                status: status.clone(),
                log,
            };
            debug_assert!(rep.trail_commutes(&input));
            return Ok(if status == CleanStatus::Clean {
                ImmersionOutcome::Clean(rep)
            } else {
                ImmersionOutcome::ImmersionNotClean(rep)
            });
        }
        if iteration == cap {
            break;
        }
        let critical = critical_of(&g);
        let (sub, retract) = retract_to_core(fr.folded_graph())?;
        let v = restrict_map(&fr.immersion, &sub);
        let h = fr.fold_map.then(&retract)?;
        trail = trail.then(&h)?;
        let mut next = reduce_collapsing(v.then(&h)?, &mut trail)?;
        let forest = invariant_forest(&next);
        let collapsed_pairs = forest.iter().filter(|&&x| x).count();
        if collapsed_pairs > 0 {
            let c = collapse_forest(&next.domain, &forest);
            let collapsed = quotient_map(&next, &c, &forest);
            if let Ok(t) = collapsed.tighten() {
                next = t;
                trail = trail.then(&c)?;
            }
        }
        log.push(IterationLog {
            iteration: iteration + 1,
            vertices: next.domain.num_vertices(),
            edge_pairs: next.domain.num_edge_pairs(),
            folds: fr.folds.len(),
            collapsed_pairs,
            critical,
        });
        g = next;
        if g.domain.num_edge_pairs().max(g.total_image_length()) > MAX_EDGE_PAIRS {
            return Ok(ImmersionOutcome::CapExceeded {
                last: g,
                iterations: iteration + 1,
            });
        }
        iteration += 1;
    }
    Ok(ImmersionOutcome::CapExceeded { last: g, iterations: cap })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IrreducibilityVerdict {
    Certified,
    Inconclusive,
    Reducible,
}

/// A claimed invariant free factor `A`, possibly up to conjugation by
/// `twist`: `twist · φ(A) · twist⁻¹ ≤ A`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReductionWitness {
    pub generators: Vec<Word>,
    pub twist: Word,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReductionEvidence {
    /// `twist · φ(a_i) · twist⁻¹ ∈ A` per witness generator.
    pub invariant: Vec<bool>,
    /// `φ(x) ∈ A` per basis element.
    pub images_in_witness: Vec<bool>,
    /// Basis indices completing the witness to a basis, if any.
    pub complement: Option<Vec<usize>>,
    pub verified: bool,
}

#[derive(Clone, Debug)]
pub struct IrreducibilityCertificate {
    pub verdict: IrreducibilityVerdict,
    pub reason: String,
    pub outcome: Option<ImmersionOutcome>,
    pub whitehead: Vec<WhiteheadGraph>,
    pub reduction: Option<ReductionEvidence>,
}

/// Basis letters that complete `gens` to a basis of `F`, searched over
/// subsets in lexicographic order.
pub fn visible_complement(rank: usize, gens: &[Word]) -> Option<Vec<usize>> {
    if gens.is_empty() || gens.len() >= rank {
        return None;
    }
    let need = rank - gens.len();
    let mut subset: Vec<usize> = (0..need).collect();
    loop {
        let mut all = gens.to_vec();
        all.extend(subset.iter().map(|&i| Word::letter(Letter::generator(i))));
        if let Ok(s) = SubgroupGraph::from_words(rank, &all) {
            if covering_degree(&s.label) == Some(1) {
                return Some(subset);
            }
        }
        // next combination
        let mut i = need;
        loop {
            if i == 0 {
                return None;
            }
            i -= 1;
            if subset[i] < rank - need + i {
                subset[i] += 1;
                for j in i + 1..need {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

pub fn check_reduction(e: &Endomorphism, w: &ReductionWitness) -> Result<ReductionEvidence> {
    let a = SubgroupGraph::from_words(e.rank(), &w.generators)?;
    let invariant: Vec<bool> = w
        .generators
        .iter()
        .map(|x| a.contains(&e.apply(x).conjugate_by(&w.twist)))
        .collect();
    let images_in_witness = e.images().iter().map(|x| a.contains(x)).collect();
    let complement = visible_complement(e.rank(), &w.generators);
    let verified = invariant.iter().all(|&b| b) && complement.is_some();
    Ok(ReductionEvidence {
        invariant,
        images_in_witness,
        complement,
        verified,
    })
}

pub fn certify_fully_irreducible(
    e: &Endomorphism,
    witness: Option<&ReductionWitness>,
    cap: usize,
) -> Result<IrreducibilityCertificate> {
    let reduction = witness.map(|w| check_reduction(e, w)).transpose()?;
    if reduction.as_ref().is_some_and(|r| r.verified) {
        return Ok(IrreducibilityCertificate {
            verdict: IrreducibilityVerdict::Reducible,
            reason: "witness subgroup is an invariant proper free factor".into(),
            outcome: None,
            whitehead: Vec::new(),
            reduction,
        });
    }
    let outcome = find_immersion_rep(e, cap)?;
    let (verdict, reason, whitehead) = match &outcome {
        ImmersionOutcome::Clean(rep) => {
            let wh = rep.whitehead_graphs();
            if wh.iter().all(|w| w.is_connected() && !w.has_cut_vertex()) {
                (
                    IrreducibilityVerdict::Certified,
                    "clean immersion with cut-vertex-free Whitehead graphs".to_string(),
                    wh,
                )
            } else {
                (
                    IrreducibilityVerdict::Inconclusive,
                    "clean immersion but some Whitehead graph has a cut vertex".to_string(),
                    wh,
                )
            }
        }
        ImmersionOutcome::ImmersionNotClean(rep) => (
            IrreducibilityVerdict::Inconclusive,
            format!("immersion is not clean ({:?})", rep.status),
            rep.whitehead_graphs(),
        ),
        ImmersionOutcome::Surjective { .. } => (
            IrreducibilityVerdict::Inconclusive,
            "endomorphism is surjective; the criterion does not apply".to_string(),
            Vec::new(),
        ),
        ImmersionOutcome::CapExceeded { iterations, .. } => (
            IrreducibilityVerdict::Inconclusive,
            format!("no immersion within {iterations} rounds"),
            Vec::new(),
        ),
    };
    Ok(IrreducibilityCertificate {
        verdict,
        reason,
        outcome: Some(outcome),
        whitehead,
        reduction,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchBounds {
    pub max_n: usize,
    pub max_len: usize,
}

impl Default for SearchBounds {
    fn default() -> Self {
        SearchBounds { max_n: 3, max_len: 6 }
    }
}

/// `φⁿ(a)` is conjugate to `a^d`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeriodicWitness {
    pub a: Word,
    pub d: usize,
    pub n: usize,
}

impl PeriodicWitness {
    pub fn verify(&self, e: &Endomorphism) -> bool {
        !self.a.is_empty() && conjugate_test(&e.apply_iter(&self.a, self.n), &self.a.pow(self.d as u32))
    }
}

fn periodic_degree(e: &Endomorphism, a: &Word, n: usize) -> Option<usize> {
    let c = e.apply_iter(a, n).cyclic_core();
    if c.is_empty() || !c.len().is_multiple_of(a.len()) {
        return None;
    }
    let d = c.len() / a.len();
    conjugate_test(&c, &a.pow(d as u32)).then_some(d)
}

pub fn periodic_class_search(e: &Endomorphism, bounds: SearchBounds) -> Option<PeriodicWitness> {
    periodic_class_search_with(Exec::default(), e, bounds)
}

/// First witness in the order `(|a|, n, a)`.
pub fn periodic_class_search_with(exec: Exec, e: &Endomorphism, bounds: SearchBounds) -> Option<PeriodicWitness> {
    for len in 1..=bounds.max_len {
        let words = cyclically_reduced_words(e.rank(), len);
        for n in 1..=bounds.max_n {
            let found = par::find_first(exec, &words, |a| {
                periodic_degree(e, a, n).map(|d| PeriodicWitness { a: a.clone(), d, n })
            });
            if found.is_some() {
                return found;
            }
        }
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HyperbolicityVerdict {
    Hyperbolic,
    NotHyperbolic,
    Unknown,
}

#[derive(Clone, Debug)]
pub struct HyperbolicityCertificate {
    pub verdict: HyperbolicityVerdict,
    pub outcome: ImmersionOutcome,
    pub witness: Option<PeriodicWitness>,
}

pub fn certify_hyperbolic(e: &Endomorphism, bounds: SearchBounds, cap: usize) -> Result<HyperbolicityCertificate> {
    let outcome = find_immersion_rep(e, cap)?;
    if matches!(outcome, ImmersionOutcome::Clean(_)) {
        return Ok(HyperbolicityCertificate {
            verdict: HyperbolicityVerdict::Hyperbolic,
            outcome,
            witness: None,
        });
    }
    let witness = periodic_class_search(e, bounds);
    Ok(HyperbolicityCertificate {
        verdict: if witness.is_some() {
            HyperbolicityVerdict::NotHyperbolic
        } else {
            HyperbolicityVerdict::Unknown
        },
        outcome,
        witness,
    })
}

#[derive(Clone, Debug)]
pub struct InvariantIndex {
    pub k: usize,
    /// Degree of the covering `Δ → S_k`.
    pub degree: usize,
    pub component: FiberComponent,
}

/// First `k ≤ cap` for which some core component of the fiber product of
/// `S_k` and `S(H)` covers `S_k`.
pub fn invariant_subgroup_index(
    e: &Endomorphism,
    gens: &[Word],
    twist: Option<&Word>,
    cap: usize,
) -> Result<Option<InvariantIndex>> {
    let h = SubgroupGraph::from_words(e.rank(), gens)?;
    let psi = match twist {
        Some(g) => e.twisted(g),
        None => e.clone(),
    };
    for x in gens {
        let img = psi.apply(x);
        if !h.contains(&img) {
            return Err(Error::Precondition(format!(
                "image {} of generator {} is not in H",
                e.basis().format_word(&img),
                e.basis().format_word(x)
            )));
        }
    }
    let rose = Graph::rose(e.rank());
    let seq = if cap > 0 {
        iterate_image(&GraphMap::from_endomorphism(e), cap)?.steps
    } else {
        Vec::new()
    };
    let mut images = vec![SubgroupGraph {
        label: GraphMap::identity(&rose),
        base: None,
    }];
    images.extend(seq.into_iter().map(|s| s.subgroup));
    for (k, s) in images.iter().enumerate() {
        let pb = pullback(s, &h)?;
        for c in pb.components {
            if let Some(degree) = covering_degree(&c.to_first) {
                return Ok(Some(InvariantIndex { k, degree, component: c }));
            }
        }
    }
    Ok(None)
}
