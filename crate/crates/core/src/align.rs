//! Token-level alignment between reference and hypothesis transcripts:
//! WER, gold-annotation projection onto hypothesis tokens, and WER
//! bucketing for evaluation breakdowns.

use serde::{Deserialize, Serialize};

use crate::corpus::{Sample, Span, Token};
use crate::error::{Error, Result};
use crate::labels::{encode_labels, Bio, JointLabel};

/// One edit operation of an alignment. Indices are token positions in the
/// reference (`i`) and hypothesis (`j`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EditOp {
    Match { i: usize, j: usize },
    Substitute { i: usize, j: usize },
    Delete { i: usize },
    Insert { j: usize },
}

/// A minimum-edit-distance alignment under unit costs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub ops: Vec<EditOp>,
}

impl Alignment {
    pub fn distance(&self) -> usize {
        self.ops
            .iter()
            .filter(|op| !matches!(op, EditOp::Match { .. }))
            .count()
    }

    /// (substitutions, deletions, insertions)
    pub fn counts(&self) -> (usize, usize, usize) {
        let mut s = 0;
        let mut d = 0;
        let mut i = 0;
        for op in &self.ops {
            match op {
                EditOp::Substitute { .. } => s += 1,
                EditOp::Delete { .. } => d += 1,
                EditOp::Insert { .. } => i += 1,
                EditOp::Match { .. } => {}
            }
        }
        (s, d, i)
    }

    /// For each reference index, the hypothesis index it maps to (matches
    /// and substitutions only).
    pub fn ref_to_hyp(&self, ref_len: usize) -> Vec<Option<usize>> {
        let mut map = vec![None; ref_len];
        for op in &self.ops {
            match op {
                EditOp::Match { i, j } | EditOp::Substitute { i, j } => map[*i] = Some(*j),
                _ => {}
            }
        }
        map
    }
}

fn tokens_eq(a: &str, b: &str) -> bool {
    a.eq_ignore_ascii_case(b) || a.to_lowercase() == b.to_lowercase()
}

/// Minimum-edit-distance alignment under unit costs, case-insensitive.
/// Traceback tie-break prefers match > substitute > delete > insert.
pub fn align(reference: &[&str], hypothesis: &[&str]) -> Alignment {
    let n = reference.len();
    let m = hypothesis.len();
    let mut dist = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in dist.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        dist[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub_cost = usize::from(!tokens_eq(reference[i - 1], hypothesis[j - 1]));
            dist[i][j] = (dist[i - 1][j - 1] + sub_cost)
                .min(dist[i - 1][j] + 1)
                .min(dist[i][j - 1] + 1);
        }
    }

    let mut ops = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let eq = tokens_eq(reference[i - 1], hypothesis[j - 1]);
            let diag = dist[i - 1][j - 1] + usize::from(!eq);
            if diag == dist[i][j] {
                ops.push(if eq {
                    EditOp::Match { i: i - 1, j: j - 1 }
                } else {
                    EditOp::Substitute { i: i - 1, j: j - 1 }
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dist[i - 1][j] + 1 == dist[i][j] {
            ops.push(EditOp::Delete { i: i - 1 });
            i -= 1;
        } else {
            ops.push(EditOp::Insert { j: j - 1 });
            j -= 1;
        }
    }
    ops.reverse();
    Alignment { ops }
}

/// Word error rate `(S + D + I) / N` with `N` the reference length.
pub fn wer(reference: &[&str], hypothesis: &[&str]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Align("empty reference".into()));
    }
    let a = align(reference, hypothesis);
    Ok(a.distance() as f64 / reference.len() as f64)
}

/// Repair/exclusion bookkeeping for one projection.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionStats {
    /// `I-*` labels promoted to `B-*` after the alignment broke a span.
    pub leading_i_repairs: usize,
    /// Gold spans that lost every token.
    pub dropped_spans: usize,
    /// Hypothesis tokens inserted inside a gold span (labeled O).
    pub insertions_inside_spans: usize,
}

/// Result of projecting one sample's gold annotation onto ASR tokens.
#[derive(Debug, Clone)]
pub enum Projection {
    Projected {
        sample: Sample,
        stats: ProjectionStats,
        wer: f64,
    },
    /// The whole LU span was deleted; the sample cannot be used.
    LuDeleted { wer: f64 },
}

/// Project a gold-annotated reference sample onto hypothesis tokens.
///
/// Labels transfer through matches and substitutions; deleted reference
/// tokens drop their label; inserted hypothesis tokens are O. The label
/// sequence is repaired to BIO validity afterwards (leading `I-*`
/// promoted to `B-*`).
pub fn project_annotations(ref_sample: &Sample, hyp_tokens: &[Token]) -> Result<Projection> {
    let gold = ref_sample
        .gold
        .as_ref()
        .ok_or_else(|| Error::Align("reference sample has no gold annotation".into()))?;
    let ref_surfaces: Vec<&str> = ref_sample.tokens.iter().map(|t| t.surface.as_str()).collect();
    let hyp_surfaces: Vec<&str> = hyp_tokens.iter().map(|t| t.surface.as_str()).collect();
    let alignment = align(&ref_surfaces, &hyp_surfaces);
    let sample_wer = alignment.distance() as f64 / ref_surfaces.len().max(1) as f64;

    if hyp_tokens.is_empty() {
        return Ok(Projection::LuDeleted { wer: sample_wer });
    }

    let ref_labels = encode_labels(ref_sample)?;
    let map = alignment.ref_to_hyp(ref_sample.tokens.len());

    let mut stats = ProjectionStats::default();

    // Transfer labels; inserted tokens stay O.
    let mut hyp_labels = vec![JointLabel::Outside; hyp_tokens.len()];
    for (i, target) in map.iter().enumerate() {
        if let Some(j) = *target {
            hyp_labels[j] = ref_labels[i].clone();
        }
    }

    let projected_span = |span: Span| -> Option<Span> {
        let mut lo = None;
        let mut hi = None;
        for i in span.start..=span.end {
            if let Some(j) = map[i] {
                lo = Some(lo.map_or(j, |v: usize| v.min(j)));
                hi = Some(hi.map_or(j, |v: usize| v.max(j)));
            }
        }
        Some(Span::new(lo?, hi?))
    };

    for op in &alignment.ops {
        if let EditOp::Insert { j } = op {
            let inside_any = std::iter::once(gold.lu_span)
                .chain(gold.elements.iter().map(|e| e.span))
                .filter_map(projected_span)
                .any(|s| s.contains(*j));
            if inside_any {
                stats.insertions_inside_spans += 1;
            }
        }
    }

    // The target must survive: if every LU token was deleted, exclude.
    let Some(new_target) = projected_span(ref_sample.target) else {
        return Ok(Projection::LuDeleted { wer: sample_wer });
    };

    // Repair: an inside label whose predecessor does not carry the same
    // payload becomes a begin label.
    let mut prev: Option<JointLabel> = None;
    for l in hyp_labels.iter_mut() {
        if let JointLabel::Tagged {
            bio: bio @ Bio::Inside,
            kind,
        } = l
        {
            let ok = matches!(&prev, Some(JointLabel::Tagged { kind: pk, .. }) if pk == kind);
            if !ok {
                *bio = Bio::Begin;
                stats.leading_i_repairs += 1;
            }
        }
        prev = Some(l.clone());
    }

    for span in gold.elements.iter().map(|e| e.span) {
        if projected_span(span).is_none() {
            stats.dropped_spans += 1;
        }
    }

    let mut new_gold =
        crate::labels::decode_labels(&hyp_labels, new_target, &lenient_lexicon(gold))?;
    for fe in &mut new_gold.elements {
        if let Some(orig) = gold.elements.iter().find(|e| e.name == fe.name) {
            fe.core = orig.core;
        }
    }

    let sample = Sample {
        tokens: hyp_tokens.to_vec(),
        target: new_gold.lu_span,
        gold: Some(new_gold),
    };
    sample
        .validate(None)
        .map_err(|e| Error::Align(format!("projected sample failed validation: {e}")))?;
    Ok(Projection::Projected {
        sample,
        stats,
        wer: sample_wer,
    })
}

// decode_labels consults a lexicon for core flags only; cover exactly this
// annotation's frame.
fn lenient_lexicon(gold: &crate::corpus::FrameAnnotation) -> crate::corpus::FrameLexicon {
    let mut lex = crate::corpus::FrameLexicon::default();
    if let Some(frame) = &gold.frame {
        let fes: std::collections::BTreeSet<crate::corpus::FeDecl> = gold
            .elements
            .iter()
            .map(|e| crate::corpus::FeDecl {
                name: e.name.clone(),
                core: e.core,
            })
            .collect();
        lex.frame_to_fes.insert(frame.clone(), fes);
    }
    lex
}

/// Left-inclusive WER buckets in percent: with the default edges
/// `[5, 10, 15, 20]` the partition is 0–5, 5–10, 10–15, 15–20, ≥20.
#[derive(Debug, Clone)]
pub struct WerBuckets {
    /// Strictly increasing edges, in percent.
    pub edges: Vec<f64>,
}

impl Default for WerBuckets {
    fn default() -> Self {
        WerBuckets {
            edges: vec![5.0, 10.0, 15.0, 20.0],
        }
    }
}

impl WerBuckets {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.is_empty() || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "bucket edges must be non-empty and strictly increasing".into(),
            ));
        }
        Ok(WerBuckets { edges })
    }

    pub fn n_buckets(&self) -> usize {
        self.edges.len() + 1
    }

    /// Bucket index of a WER given as a rate in [0, 1].
    pub fn bucket_of(&self, wer: f64) -> usize {
        let pct = wer * 100.0;
        self.edges
            .iter()
            .position(|e| pct < *e)
            .unwrap_or(self.edges.len())
    }

    pub fn label(&self, idx: usize) -> String {
        if idx == 0 {
            format!("[0,{})", self.edges[0])
        } else if idx < self.edges.len() {
            format!("[{},{})", self.edges[idx - 1], self.edges[idx])
        } else {
            format!("[{},inf)", self.edges[self.edges.len() - 1])
        }
    }
}

/// Partition sample indices by per-sample WER.
pub fn bucket_by_wer(wers: &[f64], buckets: &WerBuckets) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); buckets.n_buckets()];
    for (i, w) in wers.iter().enumerate() {
        groups[buckets.bucket_of(*w)].push(i);
    }
    groups
}
