#![allow(dead_code)]

use endotrack::graphs::{Edge, Path};
use endotrack::stallings::SubgroupGraph;
use endotrack::words::{Basis, Endomorphism, Letter, Word};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn endo(images: &[&str]) -> Endomorphism {
    Endomorphism::parse(images).unwrap()
}

pub fn words(rank: usize, ws: &[&str]) -> Vec<Word> {
    let b = Basis::standard(rank);
    ws.iter().map(|w| b.parse_word(w).unwrap()).collect()
}

pub fn sapir() -> Endomorphism {
    endo(&["ab", "ba"])
}

pub fn psi() -> Endomorphism {
    endo(&["aba", "bab"])
}

pub fn countereg() -> Endomorphism {
    endo(&["aba", "cc", "cabac"])
}

pub fn b_parity() -> SubgroupGraph {
    SubgroupGraph::from_words(2, &words(2, &["a", "bb", "baB"])).unwrap()
}

/// Uniform reduced word of exactly `len` letters.
pub fn random_word<R: Rng>(rng: &mut R, rank: usize, len: usize) -> Word {
    let mut letters: Vec<Letter> = Vec::with_capacity(len);
    while letters.len() < len {
        let l = Letter::from_rank_key(rng.gen_range(0..2 * rank));
        if letters.last() != Some(&l.inverse()) {
            letters.push(l);
        }
    }
    Word::reduce(letters)
}

pub fn random_endo<R: Rng>(rng: &mut R, rank: usize, max_len: usize) -> Endomorphism {
    let images = (0..rank)
        .map(|_| {
            let len = rng.gen_range(1..=max_len);
            random_word(rng, rank, len)
        })
        .collect();
    Endomorphism::new(Basis::standard(rank), images).unwrap()
}

/// Reduced edge path on a rose.
pub fn random_rose_path<R: Rng>(rng: &mut R, rank: usize, len: usize) -> Path {
    endotrack::graphs::word_to_path(&random_word(rng, rank, len))
}

/// Reduced path whose first edge does not cancel against `prev`.
pub fn random_continuation<R: Rng>(rng: &mut R, rank: usize, len: usize, prev: Option<Edge>) -> Path {
    loop {
        let p = random_rose_path(rng, rank, len);
        if prev.is_none_or(|e| p.first() != Some(&e.reverse())) {
            return p;
        }
    }
}

/// Transitive permutation action of the free group on `n` points, one
/// permutation per generator.
pub fn random_transitive_action<R: Rng>(rng: &mut R, rank: usize, n: usize) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    loop {
        let perms: Vec<Vec<usize>> = (0..rank)
            .map(|_| {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(rng);
                p
            })
            .collect();
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut stack = vec![0];
        while let Some(q) = stack.pop() {
            for p in &perms {
                let t = p[q];
                let s = p.iter().position(|&x| x == q).unwrap();
                for r in [t, s] {
                    if !seen[r] {
                        seen[r] = true;
                        stack.push(r);
                    }
                }
            }
        }
        if seen.iter().all(|&s| s) {
            return perms;
        }
    }
}

/// Schreier generators for the stabilizer of point 0.
pub fn schreier_generators(perms: &[Vec<usize>]) -> Vec<Word> {
    let n = perms[0].len();
    let mut rep: Vec<Option<Word>> = vec![None; n];
    rep[0] = Some(Word::identity());
    let mut tree = std::collections::BTreeSet::new();
    let mut queue = std::collections::VecDeque::from([0]);
    while let Some(q) = queue.pop_front() {
        for (i, p) in perms.iter().enumerate() {
            let t = p[q];
            if rep[t].is_none() {
                rep[t] = Some(rep[q].as_ref().unwrap().mul(&Word::letter(Letter::generator(i))));
                tree.insert((q, i));
                queue.push_back(t);
            }
            let s = p.iter().position(|&x| x == q).unwrap();
            if rep[s].is_none() {
                rep[s] = Some(rep[q].as_ref().unwrap().mul(&Word::letter(Letter::inverse_of(i))));
                tree.insert((s, i));
                queue.push_back(s);
            }
        }
    }
    let mut gens = Vec::new();
    for q in 0..n {
        for (i, p) in perms.iter().enumerate() {
            if !tree.contains(&(q, i)) {
                let w = rep[q]
                    .as_ref()
                    .unwrap()
                    .mul(&Word::letter(Letter::generator(i)))
                    .mul(&rep[p[q]].as_ref().unwrap().inverse());
                gens.push(w);
            }
        }
    }
    gens
}

/// Point reached from 0 by acting with `w` on the right.
pub fn act(perms: &[Vec<usize>], w: &Word) -> usize {
    w.letters().iter().fold(0, |q, &l| {
        let p = &perms[l.index()];
        if l.is_inverse() {
            p.iter().position(|&x| x == q).unwrap()
        } else {
            p[q]
        }
    })
}
