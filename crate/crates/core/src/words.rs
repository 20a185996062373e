//! Reduced words in a finitely generated free group and endomorphisms given
//! by generator images.
//!
//! A letter is a nonzero signed integer: generator `i` is `i + 1`, its
//! inverse is `-(i + 1)`. Every [`Word`] is kept freely reduced.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Letter(i32);

impl Letter {
    pub fn generator(index: usize) -> Self {
        Letter(index as i32 + 1)
    }

    pub fn inverse_of(index: usize) -> Self {
        Letter(-(index as i32 + 1))
    }

    pub fn from_raw(raw: i32) -> Self {
        assert!(raw != 0, "letter 0 is not a generator");
        Letter(raw)
    }

    pub fn raw(self) -> i32 {
        self.0
    }

    /// Index of the underlying generator.
    pub fn index(self) -> usize {
        (self.0.unsigned_abs() - 1) as usize
    }

    pub fn is_inverse(self) -> bool {
        self.0 < 0
    }

    pub fn inverse(self) -> Self {
        Letter(-self.0)
    }

    /// Position in the canonical enumeration order `a, A, b, B, ...`.
    pub fn rank_key(self) -> usize {
        2 * self.index() + usize::from(self.is_inverse())
    }

    pub fn from_rank_key(key: usize) -> Self {
        if key.is_multiple_of(2) {
            Letter::generator(key / 2)
        } else {
            Letter::inverse_of(key / 2)
        }
    }
}

impl PartialOrd for Letter {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Letter {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank_key().cmp(&other.rank_key())
    }
}

/// A freely reduced word. The empty word is the identity.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default, PartialOrd, Ord)]
pub struct Word(Vec<Letter>);

impl Word {
    pub fn identity() -> Self {
        Word(Vec::new())
    }

    /// Freely reduces a letter sequence with a single stack pass.
    pub fn reduce<I: IntoIterator<Item = Letter>>(letters: I) -> Self {
        let mut stack: Vec<Letter> = Vec::new();
        for l in letters {
            if stack.last() == Some(&l.inverse()) {
                stack.pop();
            } else {
                stack.push(l);
            }
        }
        Word(stack)
    }

    pub fn letter(l: Letter) -> Self {
        Word(vec![l])
    }

    pub fn from_raw(raw: &[i32]) -> Self {
        Word::reduce(raw.iter().map(|&r| Letter::from_raw(r)))
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn inverse(&self) -> Self {
        Word(self.0.iter().rev().map(|l| l.inverse()).collect())
    }

    pub fn mul(&self, other: &Word) -> Word {
        // Only the junction can cancel.
        let mut overlap = 0;
        while overlap < self.len()
            && overlap < other.len()
            && self.0[self.len() - 1 - overlap] == other.0[overlap].inverse()
        {
            overlap += 1;
        }
        let mut out = Vec::with_capacity(self.len() + other.len() - 2 * overlap);
        out.extend_from_slice(&self.0[..self.len() - overlap]);
        out.extend_from_slice(&other.0[overlap..]);
        Word(out)
    }

    pub fn pow(&self, n: u32) -> Word {
        (0..n).fold(Word::identity(), |acc, _| acc.mul(self))
    }

    pub fn conjugate_by(&self, g: &Word) -> Word {
        g.mul(self).mul(&g.inverse())
    }

    pub fn is_cyclically_reduced(&self) -> bool {
        match (self.0.first(), self.0.last()) {
            (Some(&f), Some(&l)) => self.len() == 1 || f != l.inverse(),
            _ => true,
        }
    }

    /// Splits `self` as `conjugator · core · conjugator⁻¹` with `core`
    /// cyclically reduced.
    pub fn cyclic_reduce(&self) -> (Word, Word) {
        let n = self.len();
        let mut k = 0;
        while 2 * k + 1 < n && self.0[k] == self.0[n - 1 - k].inverse() {
            k += 1;
        }
        let core = Word(self.0[k..n - k].to_vec());
        let conjugator = Word(self.0[..k].to_vec());
        (core, conjugator)
    }

    pub fn cyclic_core(&self) -> Word {
        self.cyclic_reduce().0
    }

    /// Cyclic rotation moving the first `k` letters to the end.
    pub fn rotate(&self, k: usize) -> Word {
        let n = self.len();
        if n == 0 {
            return Word::identity();
        }
        let k = k % n;
        let mut out = self.0[k..].to_vec();
        out.extend_from_slice(&self.0[..k]);
        Word(out)
    }

    /// Offset `k` such that `other == self.rotate(k)`, found by searching
    /// `other` inside `self · self`. Both words must be cyclically reduced.
    pub fn rotation_offset(&self, other: &Word) -> Option<usize> {
        if self.len() != other.len() {
            return None;
        }
        if self.is_empty() {
            return Some(0);
        }
        let doubled: Vec<Letter> = self.0.iter().chain(self.0.iter()).copied().collect();
        find_subslice(&doubled, &other.0).filter(|&k| k < self.len())
    }

    pub fn contains_subword(&self, needle: &Word) -> bool {
        find_subslice(&self.0, &needle.0).is_some()
    }

    /// The primitive root of a cyclically reduced word: the shortest `r`
    /// with `self = r^m`.
    pub fn root(&self) -> (Word, usize) {
        let n = self.len();
        for p in 1..=n {
            if n.is_multiple_of(p) && (p..n).all(|i| self.0[i] == self.0[i - p]) {
                return (Word(self.0[..p].to_vec()), n / p);
            }
        }
        (Word::identity(), 0)
    }

    pub fn prefix(&self, k: usize) -> Word {
        Word(self.0[..k].to_vec())
    }
}

/// Knuth–Morris–Pratt search; returns the first match offset.
pub(crate) fn find_subslice<T: PartialEq>(hay: &[T], needle: &[T]) -> Option<usize> {
    if needle.is_empty() {
        return Some(0);
    }
    let mut fail = vec![0usize; needle.len()];
    let mut k = 0;
    for i in 1..needle.len() {
        while k > 0 && needle[i] != needle[k] {
            k = fail[k - 1];
        }
        if needle[i] == needle[k] {
            k += 1;
        }
        fail[i] = k;
    }
    k = 0;
    for (i, h) in hay.iter().enumerate() {
        while k > 0 && *h != needle[k] {
            k = fail[k - 1];
        }
        if *h == needle[k] {
            k += 1;
        }
        if k == needle.len() {
            return Some(i + 1 - k);
        }
    }
    None
}

/// True iff `u` and `v` are conjugate in the free group.
pub fn conjugate_test(u: &Word, v: &Word) -> bool {
    let cu = u.cyclic_core();
    let cv = v.cyclic_core();
    cu.rotation_offset(&cv).is_some()
}

/// Some `g` with `g · u · g⁻¹ = v`, if one exists.
pub fn conjugator(u: &Word, v: &Word) -> Option<Word> {
    let (ku, cu) = u.cyclic_reduce();
    let (kv, cv) = v.cyclic_reduce();
    let k = ku.rotation_offset(&kv)?;
    // kv = s⁻¹ · ku · s with s the first k letters of ku.
    let s = ku.prefix(k);
    Some(cv.mul(&s.inverse()).mul(&cu.inverse()))
}

/// A single `g` with `g · us[i] · g⁻¹ = ws[i]` for every `i`, if any exists.
///
/// The solutions for the first nontrivial pair form a coset `g0 · C(u)` of
/// the (cyclic) centralizer, so only a bounded range of powers of the root
/// needs checking against the remaining pairs.
pub fn simultaneous_conjugator(us: &[Word], ws: &[Word]) -> Option<Word> {
    if us.len() != ws.len() {
        return None;
    }
    let Some(pivot) = us.iter().position(|u| !u.is_empty()) else {
        return ws.iter().all(Word::is_empty).then(Word::identity);
    };
    // necessary: pairs and consecutive products are conjugate
    let products = |xs: &[Word]| xs.windows(2).map(|p| p[0].mul(&p[1])).collect::<Vec<_>>();
    if !us.iter().zip(ws).all(|(u, w)| conjugate_test(u, w))
        || !products(us).iter().zip(&products(ws)).all(|(u, w)| conjugate_test(u, w))
    {
        return None;
    }
    let g0 = conjugator(&us[pivot], &ws[pivot])?;
    let (core, c) = us[pivot].cyclic_reduce();
    let (root, _) = core.root();
    // centralizer of us[pivot] is generated by c · root · c⁻¹
    let z = root.conjugate_by(&c);
    let check = |g: Word| us.iter().zip(ws).all(|(u, w)| &u.conjugate_by(&g) == w).then_some(g);
    // a pair outside the centralizer allows at most one power of z
    let pinned = us
        .iter()
        .zip(ws)
        .filter(|(u, _)| u.mul(&z) != z.mul(u))
        .min_by_key(|(u, w)| u.len() + w.len());
    let Some((u, w)) = pinned else { return check(g0) };
    let bound = (2 * (u.len() + w.len() + 2 * g0.len() + 2 * c.len())) / root.len().max(1) + 4;
    let fits = |g: &Word| &u.conjugate_by(g) == w;
    let zinv = z.inverse();
    let mut pos = g0.clone();
    let mut neg = g0;
    if fits(&pos) {
        return check(pos);
    }
    for _ in 0..bound {
        pos = pos.mul(&z);
        if fits(&pos) {
            return check(pos);
        }
        neg = neg.mul(&zinv);
        if fits(&neg) {
            return check(neg);
        }
    }
    None
}

/// Generator names. Lowercase names; the inverse of `x` prints as `X`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Basis {
    names: Vec<String>,
}

impl Basis {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        if names.len() < 2 {
            return Err(Error::InvalidBasis(format!(
                "rank must be at least 2, got {}",
                names.len()
            )));
        }
        for (i, n) in names.iter().enumerate() {
            let ok = !n.is_empty()
                && n.chars().next().is_some_and(|c| c.is_ascii_lowercase())
                && n.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
            if !ok {
                return Err(Error::InvalidBasis(format!("bad generator name `{n}`")));
            }
            if names[..i].contains(n) {
                return Err(Error::InvalidBasis(format!("duplicate generator `{n}`")));
            }
        }
        Ok(Basis { names })
    }

    /// `a, b, c, ...` up to rank 26.
    pub fn standard(rank: usize) -> Self {
        assert!((2..=26).contains(&rank));
        let names: Vec<String> = (0..rank)
            .map(|i| ((b'a' + i as u8) as char).to_string())
            .collect();
        Basis { names }
    }

    pub fn rank(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn letter_for(&self, token: &str) -> Result<Letter> {
        if let Some(i) = self.names.iter().position(|n| n == token) {
            return Ok(Letter::generator(i));
        }
        let lower = token.to_ascii_lowercase();
        if token != lower && token.chars().next().is_some_and(|c| c.is_ascii_uppercase()) {
            if let Some(i) = self.names.iter().position(|n| *n == lower) {
                return Ok(Letter::inverse_of(i));
            }
        }
        Err(Error::UnknownSymbol(token.to_string()))
    }

    fn single_char(&self) -> bool {
        self.names.iter().all(|n| n.len() == 1)
    }

    /// Parses whitespace-separated tokens, or (when every name is a single
    /// character and the text has no whitespace) one token per character.
    /// `1` and the empty string denote the identity.
    pub fn parse_word(&self, text: &str) -> Result<Word> {
        let text = text.trim();
        if text.is_empty() || text == "1" {
            return Ok(Word::identity());
        }
        let mut letters = Vec::new();
        if text.split_whitespace().count() == 1 && self.single_char() {
            for c in text.chars() {
                letters.push(self.letter_for(&c.to_string())?);
            }
        } else {
            for tok in text.split_whitespace() {
                letters.push(self.letter_for(tok)?);
            }
        }
        Ok(Word::reduce(letters))
    }

    pub fn letter_name(&self, l: Letter) -> String {
        let n = &self.names[l.index()];
        if l.is_inverse() {
            n.to_ascii_uppercase()
        } else {
            n.clone()
        }
    }

    pub fn format_word(&self, w: &Word) -> String {
        if w.is_empty() {
            return "1".to_string();
        }
        let sep = if self.single_char() { "" } else { " " };
        w.letters()
            .iter()
            .map(|&l| self.letter_name(l))
            .collect::<Vec<_>>()
            .join(sep)
    }
}

/// An endomorphism of the free group on `basis`, given by generator images.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Endomorphism {
    basis: Basis,
    images: Vec<Word>,
}

impl Endomorphism {
    pub fn new(basis: Basis, images: Vec<Word>) -> Result<Self> {
        if images.len() != basis.rank() {
            return Err(Error::InvalidBasis(format!(
                "expected {} images, got {}",
                basis.rank(),
                images.len()
            )));
        }
        if let Some(bad) = images
            .iter()
            .flat_map(|w| w.letters())
            .find(|l| l.index() >= basis.rank())
        {
            return Err(Error::UnknownSymbol(format!("letter {}", bad.raw())));
        }
        Ok(Endomorphism { basis, images })
    }

    /// Convenience constructor over the standard basis from compact strings.
    pub fn parse(images: &[&str]) -> Result<Self> {
        let basis = Basis::standard(images.len());
        let ws = images
            .iter()
            .map(|s| basis.parse_word(s))
            .collect::<Result<Vec<_>>>()?;
        Endomorphism::new(basis, ws)
    }

    pub fn identity(basis: Basis) -> Self {
        let images = (0..basis.rank()).map(|i| Word::letter(Letter::generator(i))).collect();
        Endomorphism { basis, images }
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn rank(&self) -> usize {
        self.basis.rank()
    }

    pub fn images(&self) -> &[Word] {
        &self.images
    }

    pub fn image_of_letter(&self, l: Letter) -> Word {
        let w = &self.images[l.index()];
        if l.is_inverse() {
            w.inverse()
        } else {
            w.clone()
        }
    }

    pub fn apply(&self, w: &Word) -> Word {
        Word::reduce(w.letters().iter().flat_map(|&l| {
            let img = &self.images[l.index()];
            let v: Vec<Letter> = if l.is_inverse() {
                img.letters().iter().rev().map(|x| x.inverse()).collect()
            } else {
                img.letters().to_vec()
            };
            v
        }))
    }

    /// `self` followed by `next`: `x ↦ next(self(x))`.
    pub fn then(&self, next: &Endomorphism) -> Endomorphism {
        let images = self.images.iter().map(|w| next.apply(w)).collect();
        Endomorphism {
            basis: self.basis.clone(),
            images,
        }
    }

    pub fn power(&self, n: usize) -> Endomorphism {
        (0..n).fold(Endomorphism::identity(self.basis.clone()), |acc, _| acc.then(self))
    }

    pub fn apply_iter(&self, w: &Word, n: usize) -> Word {
        (0..n).fold(w.clone(), |acc, _| self.apply(&acc))
    }

    /// Postcomposes with the inner automorphism `x ↦ g x g⁻¹`.
    pub fn twisted(&self, g: &Word) -> Endomorphism {
        let images = self.images.iter().map(|w| w.conjugate_by(g)).collect();
        Endomorphism {
            basis: self.basis.clone(),
            images,
        }
    }

    pub fn format(&self) -> String {
        self.basis
            .names()
            .iter()
            .zip(&self.images)
            .map(|(n, w)| format!("{n} -> {}", self.basis.format_word(w)))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl fmt::Display for Endomorphism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.format())
    }
}

/// `λ^{-i} · |cyclic core of φ^i(w)|` for `i = 1..=n`.
pub fn translation_length_estimate(e: &Endomorphism, w: &Word, n: usize, lambda: f64) -> Vec<f64> {
    let mut cur = w.clone();
    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        cur = e.apply(&cur);
        out.push(cur.cyclic_core().len() as f64 / lambda.powi(i as i32));
    }
    out
}

/// All cyclically reduced words of length `len` over `rank` generators, in
/// lexicographic order with letters ordered `a, A, b, B, ...`.
pub fn cyclically_reduced_words(rank: usize, len: usize) -> Vec<Word> {
    reduced_words(rank, len)
        .into_iter()
        .filter(Word::is_cyclically_reduced)
        .collect()
}

/// All reduced words of exactly length `len`, lexicographically ordered.
pub fn reduced_words(rank: usize, len: usize) -> Vec<Word> {
    let mut out = vec![Vec::<Letter>::new()];
    for _ in 0..len {
        let mut next = Vec::with_capacity(out.len() * (2 * rank - 1));
        for w in &out {
            for key in 0..2 * rank {
                let l = Letter::from_rank_key(key);
                if w.last() != Some(&l.inverse()) {
                    let mut v = w.clone();
                    v.push(l);
                    next.push(v);
                }
            }
        }
        out = next;
    }
    out.into_iter().map(Word).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b2() -> Basis {
        Basis::standard(2)
    }

    fn w(s: &str) -> Word {
        Basis::standard(3).parse_word(s).unwrap()
    }

    #[test]
    fn reduce_examples() {
        assert!(w("aA").is_empty());
        assert_eq!(w("abA").len(), 3);
        assert_eq!(w("aba").mul(&w("bab")), w("ababab"));
    }

    #[test]
    fn unknown_symbol_is_rejected() {
        assert_eq!(b2().parse_word("aQ"), Err(Error::UnknownSymbol("Q".into())));
        assert!(b2().parse_word("ac").is_err());
    }

    #[test]
    fn apply_examples() {
        let sapir = Endomorphism::parse(&["ab", "ba"]).unwrap();
        assert_eq!(sapir.apply(&w("ab")), w("abba"));
        assert_eq!(sapir.apply(&Word::identity()), Word::identity());
        let psi = Endomorphism::parse(&["aba", "bab"]).unwrap();
        assert_eq!(psi.apply(&w("ab")), w("ababab"));
    }

    #[test]
    fn cyclic_reduce_examples() {
        assert_eq!(w("abA").cyclic_reduce(), (w("b"), w("a")));
        assert_eq!(w("ab").cyclic_reduce(), (w("ab"), Word::identity()));
        assert_eq!(w("Babab").cyclic_reduce(), (w("aba"), w("B")));
        let (core, c) = w("Babab").cyclic_reduce();
        assert_eq!(core.conjugate_by(&c), w("Babab"));
    }

    #[test]
    fn conjugacy_examples() {
        assert!(conjugate_test(&w("ab"), &w("ba")));
        let psi = Endomorphism::parse(&["aba", "bab"]).unwrap();
        assert!(conjugate_test(&psi.apply(&w("ab")), &w("ab").pow(3)));
        assert!(!conjugate_test(&w("a"), &w("b")));
        assert!(!conjugate_test(&w("ab"), &w("aB")));
    }

    #[test]
    fn conjugator_solves() {
        let u = w("abbA");
        let v = w("BbbaBB");
        let g = conjugator(&u, &v);
        assert!(g.is_none() || u.conjugate_by(g.as_ref().unwrap()) == v);
        let v = w("cbaC");
        let g = conjugator(&w("ab"), &v).unwrap();
        assert_eq!(w("ab").conjugate_by(&g), v);
    }

    #[test]
    fn simultaneous_conjugator_handles_powers() {
        // g = (ab)^3 c commutes past the first word only through the centralizer.
        let g = w("ab").pow(3).mul(&w("c"));
        let us = [w("ab"), w("ca")];
        let ws: Vec<Word> = us.iter().map(|u| u.conjugate_by(&g)).collect();
        let found = simultaneous_conjugator(&us, &ws).unwrap();
        for (u, v) in us.iter().zip(&ws) {
            assert_eq!(&u.conjugate_by(&found), v);
        }
        assert!(simultaneous_conjugator(&[w("a"), w("b")], &[w("a"), w("aba")]).is_none());
    }

    #[test]
    fn translation_length_examples() {
        let sapir = Endomorphism::parse(&["ab", "ba"]).unwrap();
        assert_eq!(
            translation_length_estimate(&sapir, &w("a"), 4, 2.0),
            vec![1.0; 4]
        );
        let zeros = translation_length_estimate(&sapir, &Word::identity(), 3, 2.0);
        assert_eq!(zeros, vec![0.0; 3]);
        let psi = Endomorphism::parse(&["aba", "bab"]).unwrap();
        for x in translation_length_estimate(&psi, &w("ab"), 3, 3.0) {
            assert!((x - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn enumeration_counts() {
        // 2r(2r-1)^(n-1) reduced words of length n
        assert_eq!(reduced_words(2, 3).len(), 4 * 9);
        assert_eq!(reduced_words(3, 2).len(), 6 * 5);
        let c = cyclically_reduced_words(2, 2);
        assert_eq!(c.first(), Some(&w("aa")));
        assert_eq!(c[1], w("ab"));
    }

    #[test]
    fn root_of_powers() {
        assert_eq!(w("abab").root(), (w("ab"), 2));
        assert_eq!(w("aba").root(), (w("aba"), 1));
    }
}
