//! The action of an injective endomorphism of `F₂` on the spine of rank-2
//! outer space. A simplex is a marked rose, theta or barbell; the action
//! folds the marking-twisted petal map.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{
    for_each_isomorphism, loop_words, reduce_path, reverse_path, Edge, Graph, GraphMap, MarkedGraph, Path,
};
use crate::par::{self, Exec};
use crate::stallings::{fold_graph_map, restrict_map, FoldOrder};
use crate::words::{simultaneous_conjugator, Endomorphism, Word};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    Rose,
    Theta,
    Barbell,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Shape::Rose => "rose",
            Shape::Theta => "theta",
            Shape::Barbell => "barbell",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpineSimplex {
    pub shape: Shape,
    pub marked: MarkedGraph,
}

fn classify(g: &Graph) -> Result<Shape> {
    match (g.num_vertices(), g.num_edge_pairs()) {
        (1, 2) => Ok(Shape::Rose),
        (2, 3) if g.bridges().is_empty() => Ok(Shape::Theta),
        (2, 3) => Ok(Shape::Barbell),
        (v, e) => Err(Error::Precondition(format!(
            "not a rank-2 spine graph: {v} vertices, {e} edge pairs"
        ))),
    }
}

impl SpineSimplex {
    /// Core, smoothed and classified.
    pub fn from_marked(m: &MarkedGraph) -> Result<Self> {
        if m.rank() != 2 {
            return Err(Error::Precondition("spine simplices have rank 2".into()));
        }
        let marked = m.to_core()?.smoothed();
        Ok(SpineSimplex {
            shape: classify(&marked.graph)?,
            marked,
        })
    }

    /// The rose with petal loops `marking[0]`, `marking[1]`.
    pub fn rose(marking: &[Word]) -> Result<Self> {
        SpineSimplex::from_marked(&MarkedGraph::rose(marking)?)
    }

    pub fn standard() -> Self {
        SpineSimplex::rose(&[Word::from_raw(&[1]), Word::from_raw(&[2])]).unwrap()
    }

    pub fn marking_words(&self) -> Vec<Word> {
        self.marked.marking_words()
    }

    pub fn graph(&self) -> &Graph {
        &self.marked.graph
    }

    /// Path realizing the word `w` through the marking loops.
    pub fn realize(&self, w: &Word) -> Path {
        reduce_path(w.letters().iter().flat_map(|l| {
            let p = &self.marked.loops[l.index()];
            if l.is_inverse() {
                reverse_path(p)
            } else {
                p.clone()
            }
        }))
    }
}

pub fn simplex_equal(a: &SpineSimplex, b: &SpineSimplex) -> bool {
    a.shape == b.shape && a.marked.equivalent(&b.marked)
}

/// Result of acting on one simplex.
#[derive(Clone, Debug)]
pub struct SpineAction {
    pub simplex: SpineSimplex,
    pub folds: usize,
    /// `σ·[φ] = σ`.
    pub fixed: bool,
    /// An immersion on `σ` representing `φ`, found independently of `fixed`.
    pub immersion_rep: Option<GraphMap>,
}

impl SpineAction {
    /// Fixed exactly when an immersion representative exists on the simplex.
    pub fn lemma_fix_holds(&self) -> bool {
        self.fixed == self.immersion_rep.is_some()
            && self
                .immersion_rep
                .as_ref()
                .is_none_or(|f| f.is_immersion() && fold_graph_map(f, FoldOrder::LowestFirst).is_ok_and(|r| r.folds.is_empty()))
    }
}

pub fn spine_act(s: &SpineSimplex, e: &Endomorphism) -> Result<SpineAction> {
    if e.rank() != 2 {
        return Err(Error::Precondition("spine action needs rank 2".into()));
    }
    let g = s.graph();
    let petals: Vec<Path> = e.images().iter().map(|w| s.realize(w)).collect();
    if petals.iter().any(Vec::is_empty) {
        return Err(Error::NonInjective { fold: 0 });
    }
    let petal_map = GraphMap::new(Graph::rose(2), g.clone(), vec![s.marked.base], petals.clone())?;
    let fr = fold_graph_map(&petal_map, FoldOrder::LowestFirst)?;
    if let Some(fold) = fr.rank_loss {
        return Err(Error::NonInjective { fold });
    }
    let raw = MarkedGraph::new(
        fr.folded_graph().clone(),
        fr.fold_map.vertex_images[0],
        fr.fold_map.edge_images.clone(),
    )?;
    let simplex = SpineSimplex::from_marked(&raw)?;
    let fixed = simplex_equal(&simplex, s);

    // v restricted to the core and smoothed: S̄ → Γ
    let sub = fr.folded_graph().core()?;
    let v_core = restrict_map(&fr.immersion, &sub);
    let sm = sub.graph.smooth();
    let vs = GraphMap {
        domain: sm.graph.clone(),
        codomain: g.clone(),
        vertex_images: (0..sm.graph.num_vertices())
            .map(|w| {
                let old = sm.vertex_map.iter().position(|&x| x == Some(w)).unwrap();
                v_core.vertex_images[old]
            })
            .collect(),
        edge_images: sm.natural_paths.iter().map(|p| v_core.image_of_path(p)).collect(),
    };
    let immersion_rep = immersion_representative(s, &vs, &petals);
    Ok(SpineAction {
        simplex,
        folds: fr.folds.len(),
        fixed,
        immersion_rep,
    })
}

/// Some `f = vs ∘ ι` over graph isomorphisms `ι: Γ → S̄` sending every
/// marking loop to its petal up to one common conjugation.
fn immersion_representative(s: &SpineSimplex, vs: &GraphMap, petals: &[Path]) -> Option<GraphMap> {
    let g = s.graph();
    let target = loop_words(g, petals);
    let mut found = None;
    for_each_isomorphism(g, &vs.domain, |iso| {
        let iota = GraphMap {
            domain: g.clone(),
            codomain: vs.domain.clone(),
            vertex_images: iso.vertex.clone(),
            edge_images: g.positive_edges().map(|e| vec![iso.edge(e)]).collect(),
        };
        let Ok(f) = iota.then(vs) else { return false };
        let images: Vec<Path> = s.marked.loops.iter().map(|l| f.image_of_path(l)).collect();
        if simultaneous_conjugator(&loop_words(g, &images), &target).is_some() && f.is_immersion() {
            found = Some(f);
            true
        } else {
            false
        }
    });
    found
}

#[derive(Clone, Debug)]
pub struct OrbitRecord {
    pub sequence: Vec<SpineSimplex>,
    pub preperiod: usize,
    pub period: usize,
}

impl OrbitRecord {
    pub fn cycle(&self) -> &[SpineSimplex] {
        &self.sequence[self.preperiod..self.preperiod + self.period]
    }
}

/// Marking length past which an orbit is abandoned as non-repeating.
const MAX_MARKING_LEN: usize = 1 << 12;

pub fn orbit(s: &SpineSimplex, e: &Endomorphism, max_steps: usize) -> Result<OrbitRecord> {
    let mut sequence = vec![s.clone()];
    for step in 0..max_steps {
        let next = spine_act(sequence.last().unwrap(), e)?.simplex;
        if next.marked.loops.iter().map(Vec::len).sum::<usize>() > MAX_MARKING_LEN {
            return Err(Error::NoRepeat(step + 1));
        }
        if let Some(i) = sequence.iter().position(|x| simplex_equal(x, &next)) {
            let period = sequence.len() - i;
            sequence.push(next);
            return Ok(OrbitRecord {
                sequence,
                preperiod: i,
                period,
            });
        }
        sequence.push(next);
    }
    Err(Error::NoRepeat(max_steps))
}

/// The three simplices obtained from a marked rose by blowing its vertex
/// up into an edge: two thetas and one barbell.
pub fn blow_ups(rose: &SpineSimplex) -> Result<Vec<SpineSimplex>> {
    if rose.shape != Shape::Rose {
        return Err(Error::Precondition("blow-ups start from a rose".into()));
    }
    // sides of (outgoing, incoming) ends of petals 0 and 1; side 0 is the base
    let partitions = [[(0, 1), (0, 1)], [(0, 1), (1, 0)], [(0, 0), (1, 1)]];
    partitions
        .iter()
        .map(|sides| {
            let mut g = Graph::new(2);
            let bar = g.add_edge(0, 1);
            let petal_loops: Vec<Path> = sides
                .iter()
                .map(|&(out, inc)| {
                    let e = g.add_edge(out, inc);
                    let mut p = Vec::new();
                    if out == 1 {
                        p.push(bar);
                    }
                    p.push(e);
                    if inc == 1 {
                        p.push(bar.reverse());
                    }
                    p
                })
                .collect();
            // express the old marking loops through the new petals
            let loops = rose
                .marked
                .loops
                .iter()
                .map(|l| {
                    reduce_path(l.iter().flat_map(|e: &Edge| {
                        let p = &petal_loops[e.pair()];
                        if e.is_positive() {
                            p.clone()
                        } else {
                            reverse_path(p)
                        }
                    }))
                })
                .collect();
            SpineSimplex::from_marked(&MarkedGraph::new(g, 0, loops)?)
        })
        .collect()
}

/// The paper's generators of `Out(F₂)`: `φ_a = (a, ab)`, `φ_b = (ba, b)`
/// and their inverses.
pub fn out_generators() -> [Endomorphism; 4] {
    [
        Endomorphism::parse(&["a", "ab"]).unwrap(),
        Endomorphism::parse(&["a", "Ab"]).unwrap(),
        Endomorphism::parse(&["ba", "b"]).unwrap(),
        Endomorphism::parse(&["Ba", "b"]).unwrap(),
    ]
}

/// Distinct marked roses `(R₂, α)` for products `α` of at most `radius`
/// generators.
pub fn roses_within(radius: usize) -> Vec<SpineSimplex> {
    let gens = out_generators();
    let id = Endomorphism::parse(&["a", "b"]).unwrap();
    let mut layer = vec![id];
    let mut roses: Vec<SpineSimplex> = vec![SpineSimplex::standard()];
    for _ in 0..radius {
        let mut next = Vec::new();
        for m in &layer {
            for g in &gens {
                let alpha = g.then(m);
                let r = SpineSimplex::rose(alpha.images()).unwrap();
                if !roses.iter().any(|x| simplex_equal(x, &r)) {
                    roses.push(r);
                    next.push(alpha);
                }
            }
        }
        layer = next;
    }
    roses
}

/// Periodic simplices met by orbits from roses within `radius` and their
/// blow-ups. Orbits that never repeat contribute nothing.
pub fn periodic_set(e: &Endomorphism, radius: usize) -> Result<Vec<SpineSimplex>> {
    periodic_set_with(Exec::default(), e, radius)
}

pub fn periodic_set_with(exec: Exec, e: &Endomorphism, radius: usize) -> Result<Vec<SpineSimplex>> {
    if e.rank() != 2 {
        return Err(Error::Precondition("spine commands need rank 2".into()));
    }
    let mut starts = Vec::new();
    for r in roses_within(radius) {
        starts.extend(blow_ups(&r)?);
        starts.push(r);
    }
    let orbits = par::map(exec, &starts, |s| orbit(s, e, 64));
    let mut out: Vec<SpineSimplex> = Vec::new();
    for o in orbits {
        let o = match o {
            Err(Error::NoRepeat(_)) => continue,
            o => o?,
        };
        for s in o.cycle() {
            if !out.iter().any(|x| simplex_equal(x, s)) {
                out.push(s.clone());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::words::Basis;

    fn endo(images: &[&str]) -> Endomorphism {
        Endomorphism::parse(images).unwrap()
    }

    fn marking(ws: &[&str]) -> SpineSimplex {
        let b = Basis::standard(2);
        SpineSimplex::rose(&ws.iter().map(|w| b.parse_word(w).unwrap()).collect::<Vec<_>>()).unwrap()
    }

    fn sapir() -> Endomorphism {
        endo(&["ab", "ba"])
    }

    #[test]
    fn equality_examples() {
        let id = SpineSimplex::standard();
        assert!(simplex_equal(&id, &id));
        assert!(simplex_equal(&id, &marking(&["b", "a"])));
        assert!(!simplex_equal(&id, &marking(&["a", "ab"])));
    }

    #[test]
    fn action_examples() {
        let t = spine_act(&marking(&["a", "ab"]), &sapir()).unwrap();
        assert_eq!(t.simplex.shape, Shape::Theta);
        let t2 = spine_act(&marking(&["ba", "b"]), &sapir()).unwrap();
        assert!(simplex_equal(&t.simplex, &t2.simplex));
        let b = spine_act(&marking(&["a", "Ab"]), &sapir()).unwrap();
        assert_eq!(b.simplex.shape, Shape::Barbell);
        let r = spine_act(&SpineSimplex::standard(), &sapir()).unwrap();
        assert!(r.fixed && r.folds == 0);
        for a in [t, t2, b, r] {
            assert!(a.lemma_fix_holds());
        }
    }

    #[test]
    fn orbit_examples() {
        let o = orbit(&marking(&["a", "Ab"]), &sapir(), 10).unwrap();
        assert_eq!((o.preperiod, o.period), (1, 2));
        assert_eq!(o.sequence[1].shape, Shape::Barbell);
        assert_eq!(o.sequence[2].shape, Shape::Theta);
        let o = orbit(&SpineSimplex::standard(), &sapir(), 10).unwrap();
        assert_eq!((o.preperiod, o.period), (0, 1));
        let o = orbit(&marking(&["ba", "b"]), &sapir(), 10).unwrap();
        assert_eq!((o.preperiod, o.period), (1, 1));
        assert_eq!(o.sequence[1].shape, Shape::Theta);
    }

    #[test]
    fn blow_ups_of_the_standard_rose() {
        let b = blow_ups(&SpineSimplex::standard()).unwrap();
        let shapes: Vec<Shape> = b.iter().map(|s| s.shape).collect();
        assert_eq!(shapes, vec![Shape::Theta, Shape::Theta, Shape::Barbell]);
        assert!(!simplex_equal(&b[0], &b[1]));
    }

    #[test]
    fn sapir_periodic_set() {
        let s = periodic_set(&sapir(), 3).unwrap();
        assert_eq!(s.len(), 4);
        let mut shapes: Vec<String> = s.iter().map(|x| x.shape.to_string()).collect();
        shapes.sort();
        assert_eq!(shapes, vec!["barbell", "rose", "theta", "theta"]);
    }

    #[test]
    fn finite_order_automorphism_is_all_periodic() {
        let swap = endo(&["b", "a"]);
        for r in roses_within(2) {
            let o = orbit(&r, &swap, 8).unwrap();
            assert_eq!(o.preperiod, 0);
        }
    }
}
