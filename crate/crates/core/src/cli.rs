//! Command-line front end: the endomorphism file grammar, subcommands and
//! the versioned JSON report.
//!
//! ```text
//! # Sapir's example
//! gens: a b
//! a -> a b
//! b -> b a
//! ```
//!
//! Optional lines: `witness: a b a, c`, `twist: a b`, `bounds: 2 4`
//! (`max_n max_len`) and `cap: 64`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::certify::{
    certify_fully_irreducible, certify_hyperbolic, find_immersion_rep, invariant_subgroup_index, ImmersionOutcome,
    IterationLog, ReductionWitness, SearchBounds, DEFAULT_CAP,
};
use crate::error::{Error, Result};
use crate::graphs::{Edge, Graph, GraphMap, Path, Turn};
use crate::par::{self, Exec};
use crate::spine2::{orbit, periodic_set_with, SpineSimplex};
use crate::stallings::{fold_graph_map, iterate_image, FoldOrder};
use crate::traintrack::{
    is_clean, is_train_track, pf_eigenvalue, whitehead_graphs, TransitionMatrix, WhiteheadGraph, DEFAULT_TOL,
};
use crate::words::{Basis, Endomorphism, Word};

pub const SCHEMA: &str = "endotrack-report/1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EndoSpec {
    pub basis: Basis,
    pub images: Vec<Word>,
    pub witness: Option<Vec<Word>>,
    pub twist: Option<Word>,
    pub bounds: Option<SearchBounds>,
    pub cap: Option<usize>,
}

impl EndoSpec {
    pub fn endomorphism(&self) -> Endomorphism {
        Endomorphism::new(self.basis.clone(), self.images.clone()).expect("validated at parse time")
    }
}

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Whitespace-separated tokens with 1-based columns.
fn tokens(s: &str, offset: usize) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in s.char_indices() {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(b)) => {
                out.push((b, &s[b..i]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(b) = start {
        out.push((b, &s[b..]));
    }
    out.into_iter()
        .map(|(b, t)| (offset + s[..b].chars().count() + 1, t))
        .collect()
}

/// A word from tokens: generator names, uppercase inverses, `1` for the
/// identity. With single-letter names a token may also be a run of letters.
fn parse_tokens(basis: &Basis, s: &str, line: usize, offset: usize) -> Result<Word> {
    let compact = basis.names().iter().all(|n| n.chars().count() == 1);
    let mut letters = Vec::new();
    for (col, tok) in tokens(s, offset) {
        if tok == "1" {
            continue;
        }
        if let Ok(l) = basis.letter_for(tok) {
            letters.push(l);
            continue;
        }
        if compact {
            for (i, ch) in tok.chars().enumerate() {
                let l = basis
                    .letter_for(&ch.to_string())
                    .map_err(|_| parse_error(line, col + i, format!("unknown token `{ch}`")))?;
                letters.push(l);
            }
            continue;
        }
        return Err(parse_error(line, col, format!("unknown token `{tok}`")));
    }
    Ok(Word::reduce(letters))
}

/// Comma-separated list of words.
pub fn parse_word_list(basis: &Basis, s: &str, line: usize, offset: usize) -> Result<Vec<Word>> {
    let mut out = Vec::new();
    let mut col = offset;
    for part in s.split(',') {
        out.push(parse_tokens(basis, part, line, col)?);
        col += part.chars().count() + 1;
    }
    Ok(out)
}

pub fn parse_endo(text: &str) -> Result<EndoSpec> {
    let mut basis: Option<Basis> = None;
    let mut images: Vec<Option<Word>> = Vec::new();
    let mut witness = None;
    let mut twist = None;
    let mut bounds = None;
    let mut cap = None;
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let indent = content.len() - content.trim_start().len();
        let body = content.trim_start();
        if let Some(rest) = body.strip_prefix("gens:") {
            if basis.is_some() {
                return Err(parse_error(line, indent + 1, "duplicate `gens:` header"));
            }
            let names: Vec<&str> = rest.split_whitespace().collect();
            let b = Basis::new(&names).map_err(|e| parse_error(line, indent + 1, e.to_string()))?;
            images = vec![None; b.rank()];
            basis = Some(b);
            continue;
        }
        let Some(b) = basis.as_ref() else {
            return Err(parse_error(line, indent + 1, "expected `gens:` header first"));
        };
        let offset = |prefix: &str| indent + prefix.chars().count();
        if let Some(rest) = body.strip_prefix("witness:") {
            witness = Some(parse_word_list(b, rest, line, offset("witness:"))?);
        } else if let Some(rest) = body.strip_prefix("twist:") {
            twist = Some(parse_tokens(b, rest, line, offset("twist:"))?);
        } else if let Some(rest) = body.strip_prefix("bounds:") {
            let nums: Vec<usize> = rest
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_error(line, offset("bounds:") + 1, "bounds take two integers"))?;
            match nums[..] {
                [max_n, max_len] if max_n > 0 && max_len > 0 => bounds = Some(SearchBounds { max_n, max_len }),
                _ => return Err(parse_error(line, offset("bounds:") + 1, "bounds take two positive integers")),
            }
        } else if let Some(rest) = body.strip_prefix("cap:") {
            cap = Some(
                rest.trim()
                    .parse()
                    .map_err(|_| parse_error(line, offset("cap:") + 1, "cap takes an integer"))?,
            );
        } else if let Some(arrow) = body.find("->") {
            let name = body[..arrow].trim();
            let idx = b
                .names()
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| parse_error(line, indent + 1, format!("unknown generator `{name}`")))?;
            if images[idx].is_some() {
                return Err(parse_error(line, indent + 1, format!("second image for `{name}`")));
            }
            let rest = &body[arrow + 2..];
            let col = indent + body[..arrow + 2].chars().count();
            let w = parse_tokens(b, rest, line, col)?;
            if w.is_empty() {
                return Err(parse_error(line, col + 1, format!("empty image for `{name}`")));
            }
            images[idx] = Some(w);
        } else {
            return Err(parse_error(line, indent + 1, "expected `x -> word` or a `key:` line"));
        }
    }
    let basis = basis.ok_or_else(|| parse_error(last_line.max(1), 1, "missing `gens:` header"))?;
    let images = images
        .into_iter()
        .enumerate()
        .map(|(i, w)| w.ok_or_else(|| parse_error(last_line, 1, format!("no image for `{}`", basis.names()[i]))))
        .collect::<Result<Vec<_>>>()?;
    Ok(EndoSpec {
        basis,
        images,
        witness,
        twist,
        bounds,
        cap,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub command: String,
    pub input: InputEcho,
    pub verdicts: BTreeMap<String, String>,
    pub evidence: Evidence,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputEcho {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub gens: Vec<String>,
    pub images: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    Fold(FoldEvidence),
    Images(ImagesEvidence),
    Traintrack(TrainTrackEvidence),
    ImmersionRep(RepEvidence),
    Certify(Box<CertifyEvidence>),
    Orbit(OrbitEvidence),
    PeriodicSet(PeriodicSetEvidence),
    Invariant(InvariantEvidence),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldLine {
    pub vertex: usize,
    pub first: String,
    pub second: String,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldEvidence {
    pub folds: Vec<FoldLine>,
    pub rank_loss: Option<usize>,
    pub folded_vertices: usize,
    pub folded_edge_pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageLine {
    pub i: usize,
    pub vertices: usize,
    pub edge_pairs: usize,
    pub rank: isize,
    pub folds: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImagesEvidence {
    pub steps: Vec<ImageLine>,
    /// Class of each `S_i` under unpointed labelled isomorphism.
    pub labelled_classes: Vec<usize>,
    /// Class of each `S_i` as a marked graph through `h_i`.
    pub marked_classes: Vec<usize>,
    pub surjective: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WhiteheadLine {
    pub vertex: usize,
    pub nodes: Vec<String>,
    pub edges: Vec<String>,
    pub connected: bool,
    pub cut_vertices: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PfLine {
    pub lambda: f64,
    pub lower: f64,
    pub upper: f64,
    pub lengths: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainTrackEvidence {
    pub matrix: Vec<Vec<u64>>,
    pub irreducible: bool,
    pub primitive: bool,
    pub pf: Option<PfLine>,
    pub is_immersion: bool,
    pub train_track: bool,
    pub illegal_orbit: Option<Vec<String>>,
    pub whitehead: Vec<WhiteheadLine>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepLine {
    pub iterations: usize,
    pub vertices: usize,
    pub edge_pairs: usize,
    pub map: Vec<String>,
    pub matrix: Vec<Vec<u64>>,
    pub pf: Option<PfLine>,
    pub whitehead: Vec<WhiteheadLine>,
    pub log: Vec<IterationLog>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepEvidence {
    pub outcome: String,
    pub rep: Option<RepLine>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessLine {
    pub a: String,
    pub d: usize,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionLine {
    pub generators: Vec<String>,
    pub twist: String,
    pub invariant: Vec<bool>,
    pub images_in_witness: Vec<bool>,
    pub complement: Option<Vec<String>>,
    pub verified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyEvidence {
    pub input_is_immersion: bool,
    pub outcome: String,
    pub rep: Option<RepLine>,
    pub irreducibility_reason: String,
    pub reduction: Option<ReductionLine>,
    pub witness: Option<WitnessLine>,
    pub bounds: SearchBounds,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimplexLine {
    pub shape: String,
    pub vertices: usize,
    pub edge_pairs: usize,
    pub marking: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrbitEvidence {
    pub start: Vec<String>,
    pub sequence: Vec<SimplexLine>,
    pub preperiod: Option<usize>,
    pub period: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicSetEvidence {
    pub radius: usize,
    pub simplices: Vec<SimplexLine>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantEvidence {
    pub generators: Vec<String>,
    pub twist: Option<String>,
    pub cap: usize,
    pub k: Option<usize>,
    pub degree: Option<usize>,
    pub component_vertices: Option<usize>,
    pub component_edge_pairs: Option<usize>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Report> {
        serde_json::from_str(s)
    }

    /// 3 when a search cap was hit, 0 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.verdicts.values().any(|v| v == "CapExceeded" || v == "NoRepeat") {
            3
        } else {
            0
        }
    }
}

#[derive(Parser, Debug, Clone)]
#[command(name = "endotrack", version, about = "Folding, train tracks and certificates for free group endomorphisms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Include wall-clock timing in reports.
    #[arg(long, global = true)]
    pub timing: bool,
    /// Run batch inputs and searches on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Args, Debug, Clone)]
pub struct Inputs {
    /// Endomorphism files.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Fold the rose representative to an immersion.
    Fold {
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Sizes and isomorphism classes of the iterated images S_1..S_k.
    Images {
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Transition matrix, PF eigenvalue, legality and Whitehead graphs.
    Traintrack {
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Run the fold-and-collapse loop to a clean immersion.
    ImmersionRep {
        #[arg(long)]
        cap: Option<usize>,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Full irreducibility and hyperbolicity certificates.
    Certify {
        #[arg(long)]
        cap: Option<usize>,
        #[arg(long)]
        max_n: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Orbit of a marked rose in the rank-2 spine.
    Orbit {
        /// Marking words of the starting rose, comma separated.
        #[arg(long)]
        start: Option<String>,
        #[arg(long, default_value_t = 32)]
        steps: usize,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Periodic simplices near the standard rose (rank 2).
    PeriodicSet {
        #[arg(long, default_value_t = 3)]
        radius: usize,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// First k with [φ^k(F) : φ^k(F) ∩ H] finite.
    Invariant {
        /// Generators of H, comma separated.
        #[arg(long)]
        gens: String,
        #[arg(long)]
        twist: Option<String>,
        #[arg(long, default_value_t = 8)]
        cap: usize,
        #[command(flatten)]
        inputs: Inputs,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fold { .. } => "fold",
            Command::Images { .. } => "images",
            Command::Traintrack { .. } => "traintrack",
            Command::ImmersionRep { .. } => "immersion-rep",
            Command::Certify { .. } => "certify",
            Command::Orbit { .. } => "orbit",
            Command::PeriodicSet { .. } => "periodic-set",
            Command::Invariant { .. } => "invariant",
        }
    }

    pub fn files(&self) -> &[PathBuf] {
        match self {
            Command::Fold { inputs }
            | Command::Images { inputs, .. }
            | Command::Traintrack { inputs }
            | Command::ImmersionRep { inputs, .. }
            | Command::Certify { inputs, .. }
            | Command::Orbit { inputs, .. }
            | Command::PeriodicSet { inputs, .. }
            | Command::Invariant { inputs, .. } => &inputs.files,
        }
    }
}

/// Names edges of a rose by generators and other edges as `e3` / `E3`.
struct Names<'a> {
    basis: Option<&'a Basis>,
}

impl<'a> Names<'a> {
    fn for_graph(g: &Graph, basis: &'a Basis) -> Self {
        let rose = g.num_vertices() == 1 && g.num_edge_pairs() == basis.rank();
        Names {
            basis: rose.then_some(basis),
        }
    }

    fn edge(&self, e: Edge) -> String {
        match self.basis {
            Some(b) => b.letter_name(e.to_letter()),
            None if e.is_positive() => format!("e{}", e.pair()),
            None => format!("E{}", e.pair()),
        }
    }

    fn path(&self, p: &[Edge]) -> String {
        if p.is_empty() {
            "1".into()
        } else {
            p.iter().map(|&e| self.edge(e)).collect::<Vec<_>>().join(" ")
        }
    }

    fn turn(&self, t: Turn) -> String {
        format!("{{{},{}}}", self.edge(t.0), self.edge(t.1))
    }
}

fn whitehead_lines(ws: &[WhiteheadGraph], names: &Names) -> Vec<WhiteheadLine> {
    ws.iter()
        .map(|w| WhiteheadLine {
            vertex: w.vertex,
            nodes: w.nodes.iter().map(|&e| names.edge(e)).collect(),
            edges: w.edges.iter().map(|&t| names.turn(t)).collect(),
            connected: w.is_connected(),
            cut_vertices: w.cut_vertices().into_iter().map(|e| names.edge(e)).collect(),
        })
        .collect()
}

fn pf_line(a: &TransitionMatrix) -> Option<PfLine> {
    let pf = pf_eigenvalue(a, DEFAULT_TOL).ok()?;
    Some(PfLine {
        lambda: pf.lambda,
        lower: pf.lower,
        upper: pf.upper,
        lengths: pf.left_eigenvector,
    })
}

fn rep_line(rep: &crate::certify::CleanImmersionRep, basis: &Basis) -> Result<RepLine> {
    let names = Names::for_graph(rep.graph(), basis);
    let a = TransitionMatrix::from_map(&rep.map)?;
    Ok(RepLine {
        iterations: rep.iterations,
        vertices: rep.graph().num_vertices(),
        edge_pairs: rep.graph().num_edge_pairs(),
        map: rep
            .graph()
            .positive_edges()
            .map(|e| format!("{} -> {}", names.edge(e), names.path(&rep.map.image(e))))
            .collect(),
        pf: pf_line(&a),
        matrix: a.entries,
        whitehead: whitehead_lines(&rep.whitehead_graphs(), &names),
        log: rep.log.clone(),
    })
}

fn outcome_rep(outcome: &ImmersionOutcome, basis: &Basis) -> Result<Option<RepLine>> {
    match outcome {
        ImmersionOutcome::Clean(r) | ImmersionOutcome::ImmersionNotClean(r) => Ok(Some(rep_line(r, basis)?)),
        _ => Ok(None),
    }
}

fn simplex_line(s: &SpineSimplex) -> SimplexLine {
    let names = Names { basis: None };
    SimplexLine {
        shape: s.shape.to_string(),
        vertices: s.graph().num_vertices(),
        edge_pairs: s.graph().num_edge_pairs(),
        marking: s.marked.loops.iter().map(|l| names.path(l)).collect(),
    }
}

/// Class index of each item: the first earlier item related to it.
fn classes<T>(items: &[T], related: impl Fn(&T, &T) -> bool) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(items.len());
    for (i, x) in items.iter().enumerate() {
        let c = (0..i).find(|&j| out[j] == j && related(&items[j], x)).unwrap_or(i);
        out.push(c);
    }
    out
}

fn verdicts<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn rank2(spec: &EndoSpec) -> Result<()> {
    if spec.basis.rank() != 2 {
        return Err(Error::Precondition("spine commands need rank 2".into()));
    }
    Ok(())
}

/// Runs one command on one parsed input.
pub fn run(command: &Command, spec: &EndoSpec, exec: Exec) -> Result<Report> {
    let e = spec.endomorphism();
    let basis = &spec.basis;
    let f = GraphMap::from_endomorphism(&e);
    let rose_names = Names { basis: Some(basis) };
    let (verdicts, evidence) = match command {
        Command::Fold { .. } => {
            let fr = fold_graph_map(&f.tighten()?, FoldOrder::LowestFirst)?;
            let work = Names { basis: None };
            (
                verdicts([
                    ("injective", (fr.rank_loss.is_none()).to_string()),
                    ("immersion", fr.folds.is_empty().to_string()),
                ]),
                Evidence::Fold(FoldEvidence {
                    folds: fr
                        .folds
                        .iter()
                        .map(|r| FoldLine {
                            vertex: r.vertex,
                            first: work.edge(r.first),
                            second: work.edge(r.second),
                            label: rose_names.edge(r.label),
                        })
                        .collect(),
                    rank_loss: fr.rank_loss,
                    folded_vertices: fr.folded_graph().num_vertices(),
                    folded_edge_pairs: fr.folded_graph().num_edge_pairs(),
                }),
            )
        }
        Command::Images { k, .. } => {
            let seq = iterate_image(&f, *k)?;
            let loops: Vec<Path> = f.domain.positive_edges().map(|e| vec![e]).collect();
            let marked = seq
                .steps
                .iter()
                .map(|s| s.marked_graph(0, &loops).map(|m| m.smoothed()))
                .collect::<Result<Vec<_>>>()?;
            let labelled_classes = classes(&seq.steps, |a, b| a.subgroup.isomorphic(&b.subgroup));
            let marked_classes = classes(&marked, |a, b| a.equivalent(b));
            let all_same = |c: &[usize]| c.iter().all(|&x| x == 0);
            (
                verdicts([
                    ("surjective", seq.surjective.to_string()),
                    ("labelled_isomorphic", all_same(&labelled_classes).to_string()),
                    ("marked_equal", all_same(&marked_classes).to_string()),
                ]),
                Evidence::Images(ImagesEvidence {
                    steps: seq
                        .steps
                        .iter()
                        .map(|s| ImageLine {
                            i: s.index,
                            vertices: s.subgroup.num_vertices(),
                            edge_pairs: s.subgroup.num_edge_pairs(),
                            rank: s.subgroup.rank(),
                            folds: s.folds,
                        })
                        .collect(),
                    labelled_classes,
                    marked_classes,
                    surjective: seq.surjective,
                }),
            )
        }
        Command::Traintrack { .. } => {
            let a = TransitionMatrix::from_map(&f)?;
            let tt = is_train_track(&f);
            let clean = if tt.is_train_track {
                format!("{:?}", is_clean(&f)?)
            } else {
                "NotTrainTrack".into()
            };
            let whitehead = if tt.is_train_track {
                whitehead_lines(&whitehead_graphs(&f), &rose_names)
            } else {
                Vec::new()
            };
            (
                verdicts([("train_track", tt.is_train_track.to_string()), ("clean", clean)]),
                Evidence::Traintrack(TrainTrackEvidence {
                    irreducible: a.is_irreducible(),
                    primitive: a.is_primitive(),
                    pf: pf_line(&a),
                    matrix: a.entries,
                    is_immersion: f.is_immersion(),
                    train_track: tt.is_train_track,
                    illegal_orbit: tt
                        .illegal_orbit
                        .map(|o| o.into_iter().map(|t| rose_names.turn(t)).collect()),
                    whitehead,
                }),
            )
        }
        Command::ImmersionRep { cap, .. } => {
            let outcome = find_immersion_rep(&e, cap.or(spec.cap).unwrap_or(DEFAULT_CAP))?;
            (
                verdicts([("outcome", outcome.label().to_string())]),
                Evidence::ImmersionRep(RepEvidence {
                    outcome: outcome.label().to_string(),
                    rep: outcome_rep(&outcome, basis)?,
                }),
            )
        }
        Command::Certify {
            cap, max_n, max_len, ..
        } => {
            let cap = cap.or(spec.cap).unwrap_or(DEFAULT_CAP);
            let base = spec.bounds.unwrap_or_default();
            let bounds = SearchBounds {
                max_n: max_n.unwrap_or(base.max_n),
                max_len: max_len.unwrap_or(base.max_len),
            };
            let witness = spec.witness.as_ref().map(|g| ReductionWitness {
                generators: g.clone(),
                twist: spec.twist.clone().unwrap_or_default(),
            });
            let irr = certify_fully_irreducible(&e, witness.as_ref(), cap)?;
            let hyp = certify_hyperbolic(&e, bounds, cap)?;
            let reduction = irr.reduction.as_ref().map(|r| ReductionLine {
                generators: witness.as_ref().unwrap().generators.iter().map(|w| basis.format_word(w)).collect(),
                twist: basis.format_word(&witness.as_ref().unwrap().twist),
                invariant: r.invariant.clone(),
                images_in_witness: r.images_in_witness.clone(),
                complement: r
                    .complement
                    .as_ref()
                    .map(|c| c.iter().map(|&i| basis.names()[i].clone()).collect()),
                verified: r.verified,
            });
            let mut v = verdicts([
                ("fully_irreducible", format!("{:?}", irr.verdict)),
                ("hyperbolic", format!("{:?}", hyp.verdict)),
                ("immersion_rep", hyp.outcome.label().to_string()),
            ]);
            if matches!(hyp.outcome, ImmersionOutcome::CapExceeded { .. })
                && hyp.verdict == crate::certify::HyperbolicityVerdict::Unknown
            {
                v.insert("search".into(), "CapExceeded".into());
            }
            (
                v,
                Evidence::Certify(Box::new(CertifyEvidence {
                    input_is_immersion: f.is_immersion(),
                    outcome: hyp.outcome.label().to_string(),
                    rep: outcome_rep(&hyp.outcome, basis)?,
                    irreducibility_reason: irr.reason.clone(),
                    reduction,
                    witness: hyp.witness.as_ref().map(|w| WitnessLine {
                        a: basis.format_word(&w.a),
                        d: w.d,
                        n: w.n,
                    }),
                    bounds,
                })),
            )
        }
        Command::Orbit { start, steps, .. } => {
            rank2(spec)?;
            let start_words = match start {
                Some(s) => parse_word_list(basis, s, 1, 0)?,
                None => basis_words(basis),
            };
            let s0 = SpineSimplex::rose(&start_words)?;
            let start_names: Vec<String> = start_words.iter().map(|w| basis.format_word(w)).collect();
            match orbit(&s0, &e, *steps) {
                Ok(o) => (
                    verdicts([("period", o.period.to_string()), ("preperiod", o.preperiod.to_string())]),
                    Evidence::Orbit(OrbitEvidence {
                        start: start_names,
                        sequence: o.sequence.iter().map(simplex_line).collect(),
                        preperiod: Some(o.preperiod),
                        period: Some(o.period),
                    }),
                ),
                Err(Error::NoRepeat(_)) => (
                    verdicts([("period", "NoRepeat".to_string())]),
                    Evidence::Orbit(OrbitEvidence {
                        start: start_names,
                        sequence: Vec::new(),
                        preperiod: None,
                        period: None,
                    }),
                ),
                Err(err) => return Err(err),
            }
        }
        Command::PeriodicSet { radius, .. } => {
            rank2(spec)?;
            let set = periodic_set_with(exec, &e, *radius)?;
            (
                verdicts([("periodic_simplices", set.len().to_string())]),
                Evidence::PeriodicSet(PeriodicSetEvidence {
                    radius: *radius,
                    simplices: set.iter().map(simplex_line).collect(),
                }),
            )
        }
        Command::Invariant { gens, twist, cap, .. } => {
            let h = parse_word_list(basis, gens, 1, 0)?;
            let g = twist.as_ref().map(|t| parse_tokens(basis, t, 1, 0)).transpose()?;
            let r = invariant_subgroup_index(&e, &h, g.as_ref(), *cap)?;
            let verdict = match &r {
                Some(x) => x.k.to_string(),
                None => "CapExceeded".to_string(),
            };
            (
                verdicts([("k", verdict)]),
                Evidence::Invariant(InvariantEvidence {
                    generators: h.iter().map(|w| basis.format_word(w)).collect(),
                    twist: g.as_ref().map(|w| basis.format_word(w)),
                    cap: *cap,
                    k: r.as_ref().map(|x| x.k),
                    degree: r.as_ref().map(|x| x.degree),
                    component_vertices: r.as_ref().map(|x| x.component.subgroup.num_vertices()),
                    component_edge_pairs: r.as_ref().map(|x| x.component.subgroup.num_edge_pairs()),
                }),
            )
        }
    };
    Ok(Report {
        schema: SCHEMA.into(),
        command: command.name().into(),
        input: InputEcho {
            source: None,
            gens: basis.names().to_vec(),
            images: spec.images.iter().map(|w| basis.format_word(w)).collect(),
        },
        verdicts,
        evidence,
        timing_ms: None,
    })
}

fn basis_words(basis: &Basis) -> Vec<Word> {
    (0..basis.rank())
        .map(|i| Word::letter(crate::words::Letter::generator(i)))
        .collect()
}

/// Human-readable rendering.
pub fn render_text(r: &Report) -> String {
    let mut out = String::new();
    let src = r.input.source.as_deref().unwrap_or("<input>");
    out.push_str(&format!("== {} {}\n", r.command, src));
    for (g, w) in r.input.gens.iter().zip(&r.input.images) {
        out.push_str(&format!("  {g} -> {w}\n"));
    }
    for (k, v) in &r.verdicts {
        out.push_str(&format!("{k}: {v}\n"));
    }
    let wh = |out: &mut String, ws: &[WhiteheadLine]| {
        for w in ws {
            out.push_str(&format!(
                "  whitehead v{}: nodes [{}] edges [{}] connected={} cut=[{}]\n",
                w.vertex,
                w.nodes.join(" "),
                w.edges.join(" "),
                w.connected,
                w.cut_vertices.join(" ")
            ));
        }
    };
    let rep = |out: &mut String, rep: &RepLine| {
        out.push_str(&format!(
            "  representative: {} vertices, {} edge pairs, {} rounds\n",
            rep.vertices, rep.edge_pairs, rep.iterations
        ));
        for m in &rep.map {
            out.push_str(&format!("    {m}\n"));
        }
        if let Some(pf) = &rep.pf {
            out.push_str(&format!("  lambda in [{:.12}, {:.12}]\n", pf.lower, pf.upper));
        }
        wh(out, &rep.whitehead);
    };
    match &r.evidence {
        Evidence::Fold(e) => {
            out.push_str(&format!(
                "  {} folds; folded graph {} vertices, {} edge pairs\n",
                e.folds.len(),
                e.folded_vertices,
                e.folded_edge_pairs
            ));
            for f in &e.folds {
                out.push_str(&format!("    v{}: {} ~ {} over {}\n", f.vertex, f.first, f.second, f.label));
            }
        }
        Evidence::Images(e) => {
            for s in &e.steps {
                out.push_str(&format!(
                    "  S{}: {} vertices, {} edge pairs, rank {}, {} folds\n",
                    s.i, s.vertices, s.edge_pairs, s.rank, s.folds
                ));
            }
            out.push_str(&format!("  labelled classes {:?}\n", e.labelled_classes));
            out.push_str(&format!("  marked classes {:?}\n", e.marked_classes));
        }
        Evidence::Traintrack(e) => {
            out.push_str(&format!("  matrix {:?}\n", e.matrix));
            out.push_str(&format!("  irreducible={} primitive={}\n", e.irreducible, e.primitive));
            if let Some(pf) = &e.pf {
                out.push_str(&format!("  lambda in [{:.12}, {:.12}]\n", pf.lower, pf.upper));
            }
            if let Some(o) = &e.illegal_orbit {
                out.push_str(&format!("  illegal orbit {}\n", o.join(" -> ")));
            }
            wh(&mut out, &e.whitehead);
        }
        Evidence::ImmersionRep(e) => {
            if let Some(r) = &e.rep {
                rep(&mut out, r);
            }
        }
        Evidence::Certify(e) => {
            out.push_str(&format!("  reason: {}\n", e.irreducibility_reason));
            if let Some(w) = &e.witness {
                out.push_str(&format!("  witness: a = {}, d = {}, n = {}\n", w.a, w.d, w.n));
            }
            if let Some(red) = &e.reduction {
                out.push_str(&format!(
                    "  reduction <{}> invariant={:?} images={:?} complement={:?}\n",
                    red.generators.join(", "),
                    red.invariant,
                    red.images_in_witness,
                    red.complement
                ));
            }
            if let Some(r) = &e.rep {
                rep(&mut out, r);
            }
        }
        Evidence::Orbit(e) => {
            for (i, s) in e.sequence.iter().enumerate() {
                out.push_str(&format!("  {i}: {} [{}]\n", s.shape, s.marking.join(", ")));
            }
        }
        Evidence::PeriodicSet(e) => {
            for s in &e.simplices {
                out.push_str(&format!("  {} [{}]\n", s.shape, s.marking.join(", ")));
            }
        }
        Evidence::Invariant(e) => {
            if let Some(d) = e.degree {
                out.push_str(&format!("  covering degree {d}\n"));
            }
        }
    }
    out
}

fn error_code(e: &Error) -> i32 {
    match e {
        Error::NoRepeat(_) => 3,
        _ => 2,
    }
}

fn run_file(cli: &Cli, path: &PathBuf, exec: Exec) -> std::result::Result<Report, (i32, String)> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| (2, format!("{name}: {e}")))?;
    let spec = parse_endo(&text).map_err(|e| (2, format!("{name}: {e}")))?;
    let start = Instant::now();
    let mut report = run(&cli.command, &spec, exec).map_err(|e| (error_code(&e), format!("{name}: {e}")))?;
    report.input.source = path.file_name().map(|s| s.to_string_lossy().into_owned());
    if cli.timing {
        report.timing_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(report)
}

/// Parses arguments, runs every input file and prints the reports.
/// Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    let files = cli.command.files().to_vec();
    // inner searches stay sequential when files already fan out
    let inner = if files.len() > 1 { Exec::Sequential } else { exec };
    let results = par::map(exec, &files, |p| run_file(&cli, p, inner));
    let mut code = 0;
    let mut reports = Vec::new();
    for r in results {
        match r {
            Ok(rep) => {
                code = code.max(rep.exit_code());
                reports.push(rep);
            }
            Err((c, msg)) => {
                eprintln!("error: {msg}");
                code = code.max(c);
            }
        }
    }
    let out = match cli.format {
        Format::Json if reports.len() == 1 => format!("{}\n", reports[0].to_json()),
        Format::Json => format!("{}\n", serde_json::to_string_pretty(&reports).expect("reports serialize")),
        Format::Text => reports.iter().map(render_text).collect(),
    };
    let _ = std::io::stdout().lock().write_all(out.as_bytes());
    code
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_examples() {
        let s = parse_endo("gens: a b\na -> a b\nb -> b a").unwrap();
        assert_eq!(s.endomorphism(), Endomorphism::parse(&["ab", "ba"]).unwrap());
        let s = parse_endo("gens: a b c\na -> a b a\nb -> c c\nc -> c a b a c").unwrap();
        assert_eq!(s.endomorphism(), Endomorphism::parse(&["aba", "cc", "cabac"]).unwrap());
        assert_eq!(
            parse_endo("gens: a b\na -> a Q").unwrap_err(),
            Error::Parse {
                line: 2,
                column: 8,
                message: "unknown token `Q`".into()
            }
        );
    }

    #[test]
    fn parse_errors_are_positioned() {
        assert!(matches!(parse_endo("gens: a b\na -> a b"), Err(Error::Parse { .. })));
        assert!(matches!(parse_endo("a -> b"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse_endo("gens: a b\na -> a A\nb -> b"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_endo("gens: a b\na -> b\na -> a\nb -> a"),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn optional_lines_and_comments() {
        let s = parse_endo(
            "# countereg\ngens: a b c\na -> a b a  # first\nb -> c c\nc -> c a b a c\nwitness: a b a, c\ntwist: 1\nbounds: 2 4\ncap: 10\n",
        )
        .unwrap();
        assert_eq!(s.witness.unwrap().len(), 2);
        assert_eq!(s.bounds, Some(SearchBounds { max_n: 2, max_len: 4 }));
        assert_eq!(s.cap, Some(10));
        assert!(s.twist.unwrap().is_empty());
    }

    #[test]
    fn reports_round_trip() {
        let spec = parse_endo("gens: a b\na -> a b\nb -> b a").unwrap();
        let cmd = Cli::try_parse_from(["endotrack", "certify", "x"]).unwrap().command;
        let r = run(&cmd, &spec, Exec::Sequential).unwrap();
        assert_eq!(r.verdicts["fully_irreducible"], "Certified");
        assert_eq!(r.verdicts["hyperbolic"], "Hyperbolic");
        assert_eq!(Report::from_json(&r.to_json()).unwrap(), r);
    }
}
