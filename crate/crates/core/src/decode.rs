//! Sequence decoding: the tunable null-label offset, the frame-coherence
//! filter, and exact BIO-constrained search over per-token label scores.
//!
//! The pipeline for one sample is
//! `apply_null_offset -> coherence_filter -> constrained_decode ->
//! decode_labels`. Offsets operate on unnormalized scores; nothing is
//! renormalized after the offset or after masking, so the operating-point
//! semantics of δ are preserved.

use serde::{Deserialize, Serialize};

use crate::corpus::{FrameAnnotation, FrameLexicon, Sample, Span};
use crate::error::{Error, Result};
use crate::labels::{Bio, JointLabel, LabelSpace};

/// Per-token score rows over the label space; index 0 is the null label.
pub type ScoreSeq = Vec<Vec<f64>>;

/// Scores below this floor clamp to it before taking logs, so that
/// δ-shifted null scores (which may go negative) stay decodable.
const SCORE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    ConstrainedExact,
    Greedy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecoderConfig {
    /// Null-label offset δ in (-1, 1).
    pub delta: f64,
    pub use_coherence_filter: bool,
    pub decode_mode: DecodeMode,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            delta: 0.0,
            use_coherence_filter: true,
            decode_mode: DecodeMode::ConstrainedExact,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(-1.0 < self.delta && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "delta {} outside (-1, 1)",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Add δ to the null label's probability at every time step. Non-null
/// entries pass through unchanged; the result is a score sequence, not a
/// distribution.
pub fn apply_null_offset(dists: &[Vec<f64>], delta: f64) -> ScoreSeq {
    dists
        .iter()
        .map(|row| {
            let mut r = row.clone();
            if let Some(o) = r.first_mut() {
                *o += delta;
            }
            r
        })
        .collect()
}

/// Outcome of the coherence filter.
#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub scores: ScoreSeq,
    /// The committed frame; `None` when the null hypothesis won at the
    /// target.
    pub chosen_frame: Option<String>,
    /// Whether the lemma was missing from the lexicon (no restriction).
    pub lemma_unknown: bool,
}

/// Commit to one lexicon-licensed frame for the target LU and mask every
/// label that is incompatible with it.
///
/// The frame is the candidate with the largest summed LU-label score mass
/// across the target tokens (ties break toward the lexicographically
/// smaller name). If the δ-adjusted null score beats that mass, the null
/// hypothesis wins and every non-O label is masked. Otherwise labels of
/// other frames are masked, as are LU labels outside the target span; O
/// and the chosen frame's FE labels are never masked.
pub fn coherence_filter(
    scores: &ScoreSeq,
    target: Span,
    lexicon: &FrameLexicon,
    lu_lemma: &str,
    space: &LabelSpace,
) -> Result<FilterOutcome> {
    if scores.is_empty() {
        return Err(Error::Decode("empty score sequence".into()));
    }
    target.validate(scores.len())?;

    let candidates: Vec<&str> = match lexicon.candidate_frames(lu_lemma) {
        Some(set) => set.iter().map(String::as_str).collect(),
        None => {
            log::warn!("lemma '{lu_lemma}' not in lexicon; all frames are candidates");
            lexicon.frames().map(String::as_str).collect()
        }
    };
    let lemma_unknown = lexicon.candidate_frames(lu_lemma).is_none();
    if candidates.is_empty() {
        return Err(Error::Lexicon("lexicon has no frames".into()));
    }

    // Summed LU-label mass per candidate frame over the target tokens.
    let lu_mass = |frame: &str| -> f64 {
        let mut m = 0.0;
        for row in scores.iter().take(target.end + 1).skip(target.start) {
            for (id, label) in space.labels().iter().enumerate() {
                if label.is_lu() && label.frame() == Some(frame) {
                    m += row[id];
                }
            }
        }
        m
    };
    let mut best: Option<(&str, f64)> = None;
    for f in &candidates {
        let m = lu_mass(f);
        best = match best {
            None => Some((f, m)),
            Some((bf, bm)) => {
                if m > bm || (m == bm && *f < bf) {
                    Some((f, m))
                } else {
                    Some((bf, bm))
                }
            }
        };
    }
    let (frame, frame_mass) = best.unwrap();

    let null_mass: f64 = (target.start..=target.end).map(|t| scores[t][0]).sum();

    let mut out = scores.clone();
    if null_mass >= frame_mass {
        // Null wins: only O survives anywhere.
        for row in &mut out {
            for v in row.iter_mut().skip(1) {
                *v = f64::NEG_INFINITY;
            }
        }
        return Ok(FilterOutcome {
            scores: out,
            chosen_frame: None,
            lemma_unknown,
        });
    }

    for (t, row) in out.iter_mut().enumerate() {
        for (id, label) in space.labels().iter().enumerate() {
            match label {
                JointLabel::Outside => {}
                JointLabel::Tagged { kind, .. } => {
                    let wrong_frame = kind.frame() != frame;
                    let lu_off_target = label.is_lu() && !target.contains(t);
                    if wrong_frame || lu_off_target {
                        row[id] = f64::NEG_INFINITY;
                    }
                }
            }
        }
    }
    Ok(FilterOutcome {
        scores: out,
        chosen_frame: Some(frame.to_string()),
        lemma_unknown,
    })
}

fn log_score(v: f64) -> f64 {
    if v == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        v.max(SCORE_FLOOR).ln()
    }
}

/// Exact BIO-constrained decoding: returns the label-id sequence
/// maximizing the summed log scores subject to `I-*` following only its
/// own `B-*`/`I-*`. Implemented as a first-order Viterbi over suffix
/// scores; ties break toward the lowest label index at the leftmost
/// position, i.e. the lexicographically smallest optimal sequence.
pub fn constrained_decode(scores: &ScoreSeq, space: &LabelSpace) -> Result<Vec<usize>> {
    let n_tokens = scores.len();
    let n_labels = space.len();
    if n_tokens == 0 {
        return Ok(Vec::new());
    }
    for (t, row) in scores.iter().enumerate() {
        if row.len() != n_labels {
            return Err(Error::Decode(format!(
                "score row {t} has {} entries for {n_labels} labels",
                row.len()
            )));
        }
        if row.iter().all(|v| *v == f64::NEG_INFINITY) {
            return Err(Error::Decode(format!("all labels masked at position {t}")));
        }
    }

    let lg: Vec<Vec<f64>> = scores
        .iter()
        .map(|row| row.iter().map(|v| log_score(*v)).collect())
        .collect();

    // suf[t][l]: best total over positions t..n when position t is l.
    // From any label the allowed successors are every non-inside label
    // plus its own continuation, so one shared non-inside maximum makes
    // each step O(L).
    let mut suf = vec![vec![f64::NEG_INFINITY; n_labels]; n_tokens];
    suf[n_tokens - 1].clone_from(&lg[n_tokens - 1]);
    for t in (0..n_tokens - 1).rev() {
        let mut max_non_inside = f64::NEG_INFINITY;
        for l2 in 0..n_labels {
            if !space.is_inside(l2) && suf[t + 1][l2] > max_non_inside {
                max_non_inside = suf[t + 1][l2];
            }
        }
        for l in 0..n_labels {
            if lg[t][l] == f64::NEG_INFINITY {
                continue;
            }
            let mut best = max_non_inside;
            if let Some(child) = space.continuation_of(l) {
                if suf[t + 1][child] > best {
                    best = suf[t + 1][child];
                }
            }
            suf[t][l] = lg[t][l] + best;
        }
    }

    // Greedy forward walk: smallest label index among optimal choices.
    let mut out = Vec::with_capacity(n_tokens);
    let mut prev: Option<usize> = None;
    for t in 0..n_tokens {
        let mut best_l = None;
        let mut best_v = f64::NEG_INFINITY;
        for l in 0..n_labels {
            if !space.transition_ok(prev, l) {
                continue;
            }
            if suf[t][l] > best_v {
                best_v = suf[t][l];
                best_l = Some(l);
            }
        }
        let l = best_l.ok_or_else(|| {
            Error::Decode(format!("no valid label at position {t} (all masked)"))
        })?;
        out.push(l);
        prev = Some(l);
    }
    Ok(out)
}

/// Per-token decoding: the most probable non-null label is selected when
/// its score is strictly higher than the (δ-adjusted) null score. The
/// result is repaired to BIO validity by promoting invalid `I-*` to its
/// `B-*` twin; the repair never changes which tokens are non-null.
pub fn greedy_decode(scores: &ScoreSeq, space: &LabelSpace) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(scores.len());
    for (t, row) in scores.iter().enumerate() {
        if row.len() != space.len() {
            return Err(Error::Decode(format!(
                "score row {t} has {} entries for {} labels",
                row.len(),
                space.len()
            )));
        }
        let mut best: Option<(usize, f64)> = None;
        for (id, v) in row.iter().enumerate().skip(1) {
            if *v == f64::NEG_INFINITY {
                continue;
            }
            if best.is_none_or(|(_, bv)| *v > bv) {
                best = Some((id, *v));
            }
        }
        let null_score = row[0];
        let pick = match best {
            Some((id, v)) if v > null_score => id,
            _ => 0,
        };
        out.push(pick);
    }
    // BIO repair: leading I -> B.
    let mut prev: Option<usize> = None;
    for slot in out.iter_mut() {
        if !space.transition_ok(prev, *slot) {
            if let JointLabel::Tagged {
                bio: Bio::Inside,
                kind,
            } = space.get(*slot)
            {
                let twin = JointLabel::begin(kind.clone());
                *slot = space.id_of(&twin).unwrap_or(0);
            } else {
                *slot = 0;
            }
        }
        prev = Some(*slot);
    }
    Ok(out)
}

/// Decode one sample's distributions into a frame annotation.
pub fn decode_sample(
    dists: &[Vec<f64>],
    sample: &Sample,
    lexicon: &FrameLexicon,
    space: &LabelSpace,
    config: &DecoderConfig,
) -> Result<FrameAnnotation> {
    config.validate()?;
    if dists.len() != sample.tokens.len() {
        return Err(Error::Decode(format!(
            "{} score rows for {} tokens",
            dists.len(),
            sample.tokens.len()
        )));
    }
    let scores = apply_null_offset(dists, config.delta);
    let scores = if config.use_coherence_filter {
        coherence_filter(&scores, sample.target, lexicon, sample.target_lemma(), space)?.scores
    } else {
        scores
    };
    let ids = match config.decode_mode {
        DecodeMode::ConstrainedExact => constrained_decode(&scores, space)?,
        DecodeMode::Greedy => greedy_decode(&scores, space)?,
    };
    let labels: Vec<JointLabel> = ids.iter().map(|id| space.get(*id).clone()).collect();
    crate::labels::decode_labels(&labels, sample.target, lexicon)
}

/// Count of non-null tokens under greedy per-token decoding; used for
/// δ operating-point diagnostics.
pub fn greedy_nonnull_count(dists: &[Vec<f64>], delta: f64, space: &LabelSpace) -> Result<usize> {
    let scores = apply_null_offset(dists, delta);
    let ids = greedy_decode(&scores, space)?;
    Ok(ids.iter().filter(|id| **id != 0).count())
}
