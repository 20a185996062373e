//! Acceptance criteria, one line per criterion.
//!
//! Runs with a plain `main` so the lines print under `cargo test`. Criteria
//! listed in `EXPECTED_FAILURES` cannot hold as worded; they still run and
//! print FAIL, but do not fail the target.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use endotrack::certify::{
    certify_fully_irreducible, certify_hyperbolic, find_immersion_rep, periodic_class_search,
    HyperbolicityVerdict, ImmersionOutcome, IrreducibilityVerdict, ReductionWitness, SearchBounds, DEFAULT_CAP,
};
use endotrack::cli::{parse_endo, run, Cli, Evidence, Report};
use endotrack::graphs::{is_reduced, GraphMap, Path};
use endotrack::par::Exec;
use endotrack::spine2::{orbit, periodic_set, spine_act, Shape, SpineSimplex};
use endotrack::stallings::{covering_index, iterate_image, pullback, stabilized_preimage, SubgroupGraph};
use endotrack::traintrack::{
    cancellation_bounds, is_legal_turn, is_train_track, observed_cancellation, path_length, pf_eigenvalue,
    whitehead_graphs, TransitionMatrix, DEFAULT_TOL,
};
use endotrack::words::{reduced_words, Endomorphism, Word};
use endotrack::Error;
use rand::Rng;

/// Criterion 3 asks for unpointed labelled isomorphism of S₁, S₂, S₃, whose
/// edge counts are 8, 26, 88.
const EXPECTED_FAILURES: &[usize] = &[3];

struct Line {
    pass: bool,
    detail: String,
}

fn line(pass: bool, detail: impl Into<String>) -> Line {
    Line {
        pass,
        detail: detail.into(),
    }
}

fn cli_report(command: &[&str], text: &str) -> Report {
    use clap::Parser;
    let mut args = vec!["endotrack"];
    args.extend_from_slice(command);
    args.push("input.endo");
    let cli = Cli::try_parse_from(args).unwrap();
    run(&cli.command, &parse_endo(text).unwrap(), Exec::default()).unwrap()
}

fn criterion_1() -> Line {
    let r = cli_report(&["certify"], "gens: a b\na -> a b\nb -> b a");
    let Evidence::Certify(ev) = &r.evidence else {
        return line(false, "wrong evidence kind");
    };
    let Some(rep) = &ev.rep else {
        return line(false, format!("no clean representative: {}", ev.outcome));
    };
    let matrix_ok = rep.matrix == vec![vec![1, 1], vec![1, 1]];
    let lambda_ok = rep
        .pf
        .as_ref()
        .is_some_and(|pf| (pf.lower - 2.0).abs() <= 1e-9 && (pf.upper - 2.0).abs() <= 1e-9);
    let wh_ok = rep.whitehead.len() == 1 && rep.whitehead[0].connected && rep.whitehead[0].cut_vertices.is_empty();
    let verdicts_ok = r.verdicts["fully_irreducible"] == "Certified" && r.verdicts["hyperbolic"] == "Hyperbolic";
    line(
        ev.input_is_immersion && matrix_ok && lambda_ok && wh_ok && verdicts_ok,
        format!(
            "immersion={} matrix={:?} lambda=[{:.12},{:.12}] whitehead connected, cut={:?}; {} / {}",
            ev.input_is_immersion,
            rep.matrix,
            rep.pf.as_ref().map_or(f64::NAN, |p| p.lower),
            rep.pf.as_ref().map_or(f64::NAN, |p| p.upper),
            rep.whitehead.first().map(|w| w.cut_vertices.clone()),
            r.verdicts["fully_irreducible"],
            r.verdicts["hyperbolic"]
        ),
    )
}

fn criterion_2() -> Line {
    let e = psi();
    let w = periodic_class_search(&e, SearchBounds { max_n: 2, max_len: 4 });
    let found = w.as_ref().map(|w| (e.basis().format_word(&w.a), w.d, w.n));
    let verified = w.as_ref().is_some_and(|w| w.verify(&e));
    let cert = certify_hyperbolic(&e, SearchBounds { max_n: 2, max_len: 4 }, DEFAULT_CAP).unwrap();
    line(
        found == Some(("ab".into(), 3, 1)) && verified && cert.verdict == HyperbolicityVerdict::NotHyperbolic,
        format!("witness {found:?} verified={verified}; verdict {:?}", cert.verdict),
    )
}

fn criterion_3() -> Line {
    let text = "gens: a b c\na -> a b a\nb -> c c\nc -> c a b a c";
    let r = cli_report(&["images", "--k", "3"], text);
    let Evidence::Images(im) = &r.evidence else {
        return line(false, "wrong evidence kind");
    };
    let labelled = im.labelled_classes.iter().all(|&c| c == 0);
    let marked = im.marked_classes.iter().all(|&c| c == 0);
    let sizes: Vec<usize> = im.steps.iter().map(|s| s.edge_pairs).collect();

    let e = countereg();
    let rep_ok = match find_immersion_rep(&e, DEFAULT_CAP).unwrap() {
        ImmersionOutcome::Clean(rep) => {
            rep.graph().num_vertices() == 6 && rep.graph().num_edge_pairs() == 8 && rep.trail_commutes(&GraphMap::from_endomorphism(&e))
        }
        _ => false,
    };

    let witness = ReductionWitness {
        generators: words(3, &["aba", "c"]),
        twist: Word::identity(),
    };
    let irr = certify_fully_irreducible(&e, Some(&witness), DEFAULT_CAP).unwrap();
    let members = irr
        .reduction
        .as_ref()
        .is_some_and(|r| r.images_in_witness.len() == 3 && r.images_in_witness.iter().all(|&b| b));
    let reducible = irr.verdict == IrreducibilityVerdict::Reducible && members;

    let restricted = endo(&["abba", "bab"]);
    let rc = certify_fully_irreducible(&restricted, None, DEFAULT_CAP).unwrap();
    let path_graph = rc.outcome.as_ref().and_then(|o| o.clean_rep()).is_some_and(|rep| {
        let ws = rep.whitehead_graphs();
        ws.len() == 1 && {
            let w = &ws[0];
            let mut deg = vec![0; w.nodes.len()];
            for t in &w.edges {
                deg[w.nodes.iter().position(|&n| n == t.0).unwrap()] += 1;
                deg[w.nodes.iter().position(|&n| n == t.1).unwrap()] += 1;
            }
            w.is_connected() && w.edges.len() + 1 == w.nodes.len() && deg.iter().all(|&d| d <= 2) && w.has_cut_vertex()
        }
    });
    let restricted_ok = path_graph && rc.verdict == IrreducibilityVerdict::Inconclusive;

    line(
        labelled && marked && rep_ok && reducible && restricted_ok,
        format!(
            "labelled-isomorphic={labelled} (edge pairs {sizes:?}) marked-equal={marked}; \
             clean 6/8 rep={rep_ok}; Reducible with images in <aba, c>={reducible}; \
             restricted path Whitehead graph + Inconclusive={restricted_ok}"
        ),
    )
}

fn rose(ws: &[&str]) -> SpineSimplex {
    SpineSimplex::rose(&words(2, ws)).unwrap()
}

fn criterion_4() -> Line {
    let e = sapir();
    let t = spine_act(&rose(&["a", "ab"]), &e).unwrap();
    let b = spine_act(&rose(&["a", "Ab"]), &e).unwrap();
    let o = orbit(&b.simplex, &e, 16).unwrap();
    let set = periodic_set(&e, 3).unwrap();
    line(
        t.simplex.shape == Shape::Theta
            && b.simplex.shape == Shape::Barbell
            && (o.preperiod, o.period) == (0, 2)
            && set.len() == 4,
        format!(
            "(R,φ_a)·φ = {}, (R,φ_a⁻¹)·φ = {}, barbell preperiod {} period {}, periodic set {}",
            t.simplex.shape,
            b.simplex.shape,
            o.preperiod,
            o.period,
            set.len()
        ),
    )
}

fn criterion_5() -> Line {
    let s = stabilized_preimage(&sapir(), &b_parity()).unwrap();
    let sapir_ok = (s.k, s.j) == (2, 3) && covering_index(&s.subgroup) == Some(1) && s.is_bijection && s.square_commutes;
    let mut rng = rng(5);
    let mut bad = Vec::new();
    for trial in 0..50 {
        let rank = if trial % 5 == 4 { 3 } else { 2 };
        let e = random_endo(&mut rng, rank, 3);
        let n = rng.gen_range(1..=4);
        let perms = random_transitive_action(&mut rng, rank, n);
        let h = SubgroupGraph::from_words(rank, &schreier_generators(&perms)).unwrap();
        if covering_index(&h) != Some(n) {
            bad.push(format!("index of Schreier subgroup for {}", e.format()));
            continue;
        }
        let st = match stabilized_preimage(&e, &h) {
            Ok(st) => st,
            Err(err) => {
                bad.push(format!("{}: {err}", e.format()));
                continue;
            }
        };
        // φ^{-1}(H) against the permutation action directly
        let pre = &st.chain[1];
        let member_ok = (0..40).all(|_| {
            let len = rng.gen_range(0..=6);
            let w = random_word(&mut rng, rank, len);
            pre.contains(&w) == (act(&perms, &e.apply(&w)) == 0)
        });
        if !(st.is_bijection && st.square_commutes && member_ok) {
            bad.push(e.format());
        }
    }
    line(
        sapir_ok && bad.is_empty(),
        format!(
            "Sapir (k, j) = ({}, {}) index {:?}; random pairs failing: {}",
            s.k,
            s.j,
            covering_index(&s.subgroup),
            bad.len()
        ),
    )
}

fn criterion_6() -> Line {
    let mut rng = rng(6);
    let all: Vec<Vec<Word>> = (2..=3)
        .map(|rank| (1..=6).flat_map(|l| reduced_words(rank, l)).collect())
        .collect();
    let mut mismatches = 0;
    let mut trivial = 0;
    for trial in 0..100 {
        let rank = 2 + trial % 2;
        let mut sub = || {
            let k = rng.gen_range(1..=3);
            let gens: Vec<Word> = (0..k)
                .map(|_| {
                    let len = rng.gen_range(1..=4);
                    random_word(&mut rng, rank, len)
                })
                .collect();
            SubgroupGraph::from_words(rank, &gens).unwrap()
        };
        let (s1, s2) = (sub(), sub());
        let pb = pullback(&s1, &s2).unwrap();
        if pb.pointed.is_none() {
            trivial += 1;
        }
        for w in &all[rank - 2] {
            let both = s1.contains(w) && s2.contains(w);
            let got = pb.pointed.as_ref().is_some_and(|c| c.subgroup.contains(w));
            if both != got {
                mismatches += 1;
            }
        }
    }
    line(
        mismatches == 0,
        format!("100 pairs ({trivial} trivial intersections), words to length 6, mismatches {mismatches}"),
    )
}

/// Random rose maps used by criteria 7 and 10.
fn corpus() -> Vec<Endomorphism> {
    let mut rng = rng(7);
    let mut out = vec![sapir(), psi(), countereg(), endo(&["abba", "bab"]), endo(&["ab", "a"])];
    for i in 0..300 {
        let rank = 2 + i % 2;
        out.push(random_endo(&mut rng, rank, 4));
    }
    out
}

fn criterion_7(corpus: &[Endomorphism]) -> Line {
    let mut weakly_clean = 0;
    let mut counterexamples = Vec::new();
    for e in corpus {
        let m = GraphMap::from_endomorphism(e);
        if !is_train_track(&m).is_train_track {
            continue;
        }
        let a = TransitionMatrix::from_map(&m).unwrap();
        if !a.is_irreducible() || !whitehead_graphs(&m).iter().all(|w| w.is_connected()) {
            continue;
        }
        weakly_clean += 1;
        if !a.is_primitive() {
            counterexamples.push(e.format());
        }
    }
    line(
        counterexamples.is_empty() && weakly_clean > 0,
        format!(
            "{weakly_clean} weakly clean train tracks in a corpus of {}, non-primitive: {counterexamples:?}",
            corpus.len()
        ),
    )
}

/// Random walk of legal turns whose length passes `min`.
fn legal_path<R: Rng>(rng: &mut R, m: &GraphMap, metric: &[f64], min: f64, after: Option<endotrack::graphs::Edge>) -> Option<Path> {
    let rank = m.domain.num_edge_pairs();
    let mut p: Path = Vec::new();
    let mut tries = 0;
    while path_length(&p, metric) <= min || p.is_empty() {
        tries += 1;
        if tries > 10_000 {
            return None;
        }
        let e = endotrack::graphs::Edge::from_letter(endotrack::words::Letter::from_rank_key(rng.gen_range(0..2 * rank)));
        let prev = p.last().copied().or(after);
        if let Some(q) = prev {
            if e == q.reverse() || (!p.is_empty() && !is_legal_turn(m, endotrack::graphs::Turn::new(q.reverse(), e))) {
                continue;
            }
        }
        p.push(e);
    }
    Some(p)
}

fn criterion_8() -> Line {
    let maps = [
        ("sapir", endo(&["ab", "ba"])),
        ("fibonacci", endo(&["ab", "a"])),
        ("psi", psi()),
        ("countereg", countereg()),
        ("restricted", endo(&["abba", "bab"])),
    ];
    let mut rng = rng(8);
    let mut details = Vec::new();
    let mut pass = true;
    for (name, e) in &maps {
        let m = GraphMap::from_endomorphism(e);
        let rank = e.rank();
        let pf = pf_eigenvalue(&TransitionMatrix::from_map(&m).unwrap(), DEFAULT_TOL).unwrap();
        let metric = pf.left_eigenvector.clone();
        let cb = cancellation_bounds(&m, &metric, Some(pf.lambda)).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let la = rng.gen_range(1..=8);
            let lb = rng.gen_range(1..=8);
            let a = random_rose_path(&mut rng, rank, la);
            let b = random_continuation(&mut rng, rank, lb, a.last().copied());
            worst = worst.max(observed_cancellation(&m, &a, &b, &metric));
        }
        let bounded = worst <= cb.c + 1e-9;
        pass &= bounded;
        let mut persistence = String::from("not a train track");
        if is_train_track(&m).is_train_track {
            let crit = cb.critical.unwrap();
            let margin = cb.c / (pf.lambda - 1.0);
            let powers: Vec<GraphMap> = (1..=5).map(|k| m.iterate(k).unwrap()).collect();
            let mut failures = 0;
            let mut done = 0;
            while done < 100 {
                let la = rng.gen_range(0..=4);
                let a = random_rose_path(&mut rng, rank, la);
                let Some(b) = legal_path(&mut rng, &m, &metric, crit.max(2.0 * margin + 2.0), a.last().copied()) else {
                    break;
                };
                let lc = rng.gen_range(0..=4);
                let c = random_continuation(&mut rng, rank, lc, b.last().copied());
                let abc: Path = a.iter().chain(&b).chain(&c).copied().collect();
                if !is_reduced(&abc) {
                    continue;
                }
                // trim the part of b that can be cancelled from each side
                let (mut lo, mut hi, mut cut) = (0, b.len(), 0.0);
                while lo < hi && cut < margin {
                    cut += metric[b[lo].pair()];
                    lo += 1;
                }
                cut = 0.0;
                while hi > lo && cut < margin {
                    hi -= 1;
                    cut += metric[b[hi].pair()];
                }
                if lo >= hi {
                    continue;
                }
                let s = &b[lo..hi];
                done += 1;
                let ok = powers.iter().all(|fk| {
                    let img = fk.image_of_path(&abc);
                    let fs = fk.image_of_path(s);
                    !fs.is_empty() && img.windows(fs.len()).any(|w| w == fs.as_slice())
                });
                if !ok {
                    failures += 1;
                }
            }
            pass &= failures == 0 && done == 100;
            persistence = format!("persistence {}/{done} to k=5 (critical {crit:.3})", done - failures);
        }
        details.push(format!("{name}: C={:.3} worst={worst:.3} {persistence}", cb.c));
    }
    line(pass, details.join("; "))
}

fn criterion_9() -> Line {
    let seq = iterate_image(&GraphMap::from_endomorphism(&sapir()), 5).unwrap();
    let counts = seq.edge_pair_counts();
    let ranks: Vec<isize> = seq
        .steps
        .iter()
        .map(|s| s.subgroup.num_edge_pairs() as isize - s.subgroup.num_vertices() as isize + 1)
        .collect();
    let increasing = counts.windows(2).all(|w| w[0] < w[1]);
    line(
        counts[..2] == [4, 8] && increasing && ranks.iter().all(|&r| r == 2) && counts == [4, 8, 16, 32, 64],
        format!("edge pairs {counts:?}, ranks {ranks:?}"),
    )
}

fn criterion_10(corpus: &[Endomorphism]) -> Line {
    let (mut clean, mut witnessed, mut skipped) = (0, 0, 0);
    let mut other_errors = Vec::new();
    let mut both = Vec::new();
    for e in corpus {
        let outcome = match find_immersion_rep(e, 6) {
            Ok(o) => o,
            Err(Error::NonInjective { .. }) => {
                skipped += 1;
                continue;
            }
            Err(err) => {
                other_errors.push(format!("{}: {err}", e.format()));
                continue;
            }
        };
        let is_clean = matches!(outcome, ImmersionOutcome::Clean(_));
        let w = periodic_class_search(e, SearchBounds { max_n: 2, max_len: 4 });
        clean += is_clean as usize;
        witnessed += w.is_some() as usize;
        if is_clean && w.is_some() {
            both.push(e.format());
        }
    }
    line(
        both.is_empty() && other_errors.is_empty(),
        format!(
            "{} maps ({skipped} non-injective skipped, errors {other_errors:?}): {clean} clean, {witnessed} periodic witnesses, both: {both:?}",
            corpus.len()
        ),
    )
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Line + 'a>);

fn main() -> ExitCode {
    let start = Instant::now();
    let corpus = corpus();
    let criteria: Vec<Criterion> = vec![
        ("Sapir pipeline", Box::new(criterion_1)),
        ("psi witness", Box::new(criterion_2)),
        ("countereg", Box::new(criterion_3)),
        ("spine orbit", Box::new(criterion_4)),
        ("stabilized preimage", Box::new(criterion_5)),
        ("pullback oracle", Box::new(criterion_6)),
        ("weakly clean is clean", Box::new(|| criterion_7(&corpus))),
        ("bounded cancellation", Box::new(criterion_8)),
        ("growth", Box::new(criterion_9)),
        ("mutual exclusion", Box::new(|| criterion_10(&corpus))),
    ];
    let mut unexpected = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        let t = Instant::now();
        let l = f();
        let status = if l.pass { "PASS" } else { "FAIL" };
        let note = if !l.pass && EXPECTED_FAILURES.contains(&n) {
            " [expected]"
        } else {
            ""
        };
        println!(
            "criterion {n:>2} {name}: {status}{note} ({:.1}s) {}",
            t.elapsed().as_secs_f64(),
            l.detail
        );
        if !l.pass && !EXPECTED_FAILURES.contains(&n) {
            unexpected.push(n);
        }
    }
    println!("acceptance finished in {:.1}s", start.elapsed().as_secs_f64());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
