mod common;

use common::*;
use endotrack::certify::{certify_fully_irreducible, find_immersion_rep, ImmersionOutcome, IrreducibilityVerdict};
use endotrack::graphs::{isomorphic, Graph, GraphMap};
use endotrack::par::Exec;
use endotrack::spine2::{orbit, periodic_set_with, roses_within, simplex_equal, SpineSimplex};
use endotrack::stallings::{covering_index, fold_to_immersion_with, preimage_subgroup, FoldOrder, SubgroupGraph};
use endotrack::traintrack::{is_legal_path, is_train_track, pf_eigenvalue, pf_trace, TransitionMatrix, DEFAULT_TOL};
use endotrack::words::{reduced_words, Endomorphism, Word};
use proptest::prelude::*;
use rand::Rng;

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

/// Nielsen moves on F(a, b) paired with their inverses.
fn nielsen() -> Vec<(Endomorphism, Endomorphism)> {
    [
        (["ab", "b"], ["aB", "b"]),
        (["ba", "b"], ["Ba", "b"]),
        (["a", "ba"], ["a", "bA"]),
        (["a", "ab"], ["a", "Ab"]),
        (["b", "a"], ["b", "a"]),
        (["A", "b"], ["A", "b"]),
    ]
    .iter()
    .map(|(f, g)| (endo(f), endo(g)))
    .collect()
}

/// A random automorphism and its inverse.
fn random_aut(seed: u64, moves: usize) -> (Endomorphism, Endomorphism) {
    let mut r = rng(seed);
    let gens = nielsen();
    let id = endo(&["a", "b"]);
    (0..moves).fold((id.clone(), id), |(f, g), _| {
        let (m, mi) = &gens[r.gen_range(0..gens.len())];
        (f.then(m), mi.then(&g))
    })
}

proptest! {
    #![proptest_config(cfg(64))]

    #[test]
    fn fold_order_does_not_matter(seed in any::<u64>(), rank in 2usize..4) {
        let e = random_endo(&mut rng(seed), rank, 4);
        let m = GraphMap::from_endomorphism(&e);
        let lo = fold_to_immersion_with(&m, FoldOrder::LowestFirst);
        let hi = fold_to_immersion_with(&m, FoldOrder::HighestFirst);
        match (lo, hi) {
            (Ok(a), Ok(b)) => {
                prop_assert!(isomorphic(a.folded_graph(), b.folded_graph()));
                prop_assert_eq!(a.folds.len(), b.folds.len());
                prop_assert!(a.immersion.is_immersion() && b.immersion.is_immersion());
                prop_assert!(a.certifies(&m) && b.certifies(&m));
            }
            (Err(a), Err(b)) => prop_assert_eq!(std::mem::discriminant(&a), std::mem::discriminant(&b)),
            (a, b) => prop_assert!(false, "orders disagree: {:?} / {:?}", a.is_ok(), b.is_ok()),
        }
    }

    #[test]
    fn membership_matches_permutation_action(seed in any::<u64>(), n in 1usize..7) {
        let mut r = rng(seed);
        let perms = random_transitive_action(&mut r, 2, n);
        let sg = SubgroupGraph::from_words(2, &schreier_generators(&perms)).unwrap();
        prop_assert_eq!(covering_index(&sg), Some(n));
        for _ in 0..40 {
            let len = r.gen_range(0..9);
            let w = random_word(&mut r, 2, len);
            prop_assert_eq!(sg.contains(&w), act(&perms, &w) == 0, "word {:?}", w);
        }
    }

    #[test]
    fn preimage_membership(seed in any::<u64>()) {
        let mut r = rng(seed);
        let e = random_endo(&mut r, 2, 3);
        let h = b_parity();
        let pre = preimage_subgroup(&e, &h).unwrap();
        for _ in 0..40 {
            let len = r.gen_range(0..7);
            let w = random_word(&mut r, 2, len);
            prop_assert_eq!(pre.contains(&w), h.contains(&e.apply(&w)));
        }
    }

    #[test]
    fn transition_matrix_is_submultiplicative(seed in any::<u64>(), rank in 2usize..4) {
        let m = GraphMap::from_endomorphism(&random_endo(&mut rng(seed), rank, 3));
        let a = TransitionMatrix::from_map(&m).unwrap();
        if let Ok(m2) = m.iterate(2) {
            let a2 = TransitionMatrix::from_map(&m2).unwrap();
            prop_assert!(a2.le_entrywise(&a.pow(2)));
        }
    }

    #[test]
    fn collatz_wielandt_bounds_tighten(seed in any::<u64>(), rank in 2usize..4) {
        let m = GraphMap::from_endomorphism(&random_endo(&mut rng(seed), rank, 4));
        let a = TransitionMatrix::from_map(&m).unwrap();
        prop_assume!(a.is_irreducible());
        let (_, trace) = pf_trace(&a, DEFAULT_TOL).unwrap();
        for w in trace.windows(2) {
            prop_assert!(w[1].0 >= w[0].0 - 1e-9 && w[1].1 <= w[0].1 + 1e-9);
        }
        let pf = pf_eigenvalue(&a, DEFAULT_TOL).unwrap();
        prop_assert!(pf.lower <= pf.lambda && pf.lambda <= pf.upper);
        prop_assert!(trace.iter().all(|&(lo, hi)| lo <= pf.lambda + 1e-9 && pf.lambda <= hi + 1e-9));
    }

    #[test]
    fn train_track_iterates_stay_legal(seed in any::<u64>()) {
        let m = GraphMap::from_endomorphism(&random_endo(&mut rng(seed), 2, 4));
        prop_assume!(is_train_track(&m).is_train_track);
        let raw = m.then(&m).unwrap();
        for e in m.domain.positive_edges() {
            prop_assert_eq!(raw.image(e).len(), m.image_of_path(&m.image(e)).len());
        }
        for k in 1..4 {
            let mk = m.iterate(k).unwrap();
            prop_assert!(m.domain.positive_edges().all(|e| is_legal_path(&m, &mk.image(e))));
        }
    }

    #[test]
    fn conjugated_sapir_has_the_same_clean_rep(seed in any::<u64>(), moves in 1usize..5) {
        let (t, ti) = random_aut(seed, moves);
        let e = ti.then(&sapir()).then(&t);
        let base = GraphMap::from_endomorphism(&sapir());
        match find_immersion_rep(&e, 30).unwrap() {
            ImmersionOutcome::Clean(rep) => {
                prop_assert!(isomorphic(rep.graph(), &Graph::rose(2)));
                prop_assert!(rep.map.conjugate_by_isomorphism(&base));
                prop_assert!(rep.trail_commutes(&GraphMap::from_endomorphism(&e)));
                let pf = pf_eigenvalue(&TransitionMatrix::from_map(&rep.map).unwrap(), DEFAULT_TOL).unwrap();
                prop_assert!((pf.lambda - 2.0).abs() < 1e-9);
            }
            other => prop_assert!(false, "outcome {}", other.label()),
        }
    }

    #[test]
    fn certified_squares_stay_clean(seed in any::<u64>(), rank in 2usize..4) {
        let e = random_endo(&mut rng(seed), rank, 3);
        let cert = certify_fully_irreducible(&e, None, 20);
        prop_assume!(matches!(cert, Ok(ref c) if c.verdict == IrreducibilityVerdict::Certified));
        let sq = find_immersion_rep(&e.power(2), 20).unwrap();
        prop_assert!(matches!(sq, ImmersionOutcome::Clean(_)), "square: {}", sq.label());
    }

    #[test]
    fn rose_equality_matches_brute_force(seed in any::<u64>(), same in any::<bool>()) {
        let mut r = rng(seed);
        let (t, _) = random_aut(seed, 2);
        let u: Vec<Word> = t.images().to_vec();
        let v: Vec<Word> = if same {
            let sigma = &signed_permutations()[r.gen_range(0..8)];
            let len = r.gen_range(0..3);
            let g = random_word(&mut r, 2, len);
            // a graph automorphism of the rose, then a change of base point
            u.iter().map(|x| sigma.apply(x).conjugate_by(&g)).collect()
        } else {
            random_aut(seed ^ 0x9e37, 3).0.images().to_vec()
        };
        let eq = simplex_equal(&SpineSimplex::rose(&u).unwrap(), &SpineSimplex::rose(&v).unwrap());
        prop_assert_eq!(eq, brute_force_equal(&u, &v), "u {:?} v {:?}", u, v);
        if same {
            prop_assert!(eq);
        }
    }
}

/// The eight automorphisms of the rose with two petals.
fn signed_permutations() -> Vec<Endomorphism> {
    [["a", "b"], ["A", "b"], ["a", "B"], ["A", "B"], ["b", "a"], ["B", "a"], ["b", "A"], ["B", "A"]]
        .iter()
        .map(|x| endo(x))
        .collect()
}

/// Marked roses agree when a rose automorphism carries one marking to a
/// simultaneous conjugate of the other.
fn brute_force_equal(u: &[Word], v: &[Word]) -> bool {
    let bound = u.iter().chain(v).map(Word::len).sum::<usize>();
    let conjugators: Vec<Word> = (0..=bound.min(8)).flat_map(|l| reduced_words(2, l)).collect();
    signed_permutations().iter().any(|sigma| {
        let w: Vec<Word> = u.iter().map(|x| sigma.apply(x)).collect();
        conjugators
            .iter()
            .any(|g| w.iter().zip(v).all(|(a, b)| a.conjugate_by(g) == *b))
    })
}

#[test]
fn periodic_set_is_execution_independent() {
    for e in [sapir(), psi(), endo(&["b", "ab"])] {
        let s = periodic_set_with(Exec::Sequential, &e, 2).unwrap();
        let p = periodic_set_with(Exec::Parallel, &e, 2).unwrap();
        assert_eq!(s.len(), p.len());
        assert!(s.iter().zip(&p).all(|(a, b)| simplex_equal(a, b)));
    }
}

#[test]
fn periodic_simplices_start_cycles() {
    let e = sapir();
    for s in periodic_set_with(Exec::Sequential, &e, 2).unwrap() {
        let rec = orbit(&s, &e, 16).unwrap();
        assert_eq!(rec.preperiod, 0);
        assert!(simplex_equal(&rec.cycle()[0], &s));
    }
}

#[test]
fn sapir_orbits_reach_the_periodic_set() {
    let e = sapir();
    let periodic = periodic_set_with(Exec::Sequential, &e, 2).unwrap();
    for r in roses_within(2) {
        let rec = orbit(&r, &e, 16).unwrap();
        assert!(rec.preperiod <= 4);
        assert!(rec.cycle().iter().all(|s| periodic.iter().any(|p| simplex_equal(p, s))));
    }
}
