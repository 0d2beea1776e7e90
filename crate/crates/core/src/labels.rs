//! BIO codec for the joint frame+argument label space.
//!
//! A single per-token alphabet carries both the LU/frame decision and the
//! argument decision: `O`, `B-LU:<frame>`, `I-LU:<frame>`,
//! `B-FE:<frame>:<fe>`, `I-FE:<frame>:<fe>`. Index 0 of a label space is
//! always `O`, so downstream code can address P(y_t = O) directly.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{FrameAnnotation, FrameElement, FrameLexicon, Sample, Span};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Bio {
    Begin,
    Inside,
}

/// Payload of a non-O label: what kind of span this token belongs to.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LabelKind {
    Lu { frame: String },
    Fe { frame: String, fe: String },
}

impl LabelKind {
    pub fn frame(&self) -> &str {
        match self {
            LabelKind::Lu { frame } | LabelKind::Fe { frame, .. } => frame,
        }
    }
}

/// One entry of the joint label alphabet.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum JointLabel {
    Outside,
    Tagged { bio: Bio, kind: LabelKind },
}

impl JointLabel {
    pub fn begin(kind: LabelKind) -> Self {
        JointLabel::Tagged {
            bio: Bio::Begin,
            kind,
        }
    }

    pub fn inside(kind: LabelKind) -> Self {
        JointLabel::Tagged {
            bio: Bio::Inside,
            kind,
        }
    }

    pub fn is_outside(&self) -> bool {
        matches!(self, JointLabel::Outside)
    }

    pub fn kind(&self) -> Option<&LabelKind> {
        match self {
            JointLabel::Outside => None,
            JointLabel::Tagged { kind, .. } => Some(kind),
        }
    }

    pub fn frame(&self) -> Option<&str> {
        self.kind().map(|k| k.frame())
    }

    pub fn is_lu(&self) -> bool {
        matches!(
            self,
            JointLabel::Tagged {
                kind: LabelKind::Lu { .. },
                ..
            }
        )
    }

    fn validate_against(&self, lexicon: &FrameLexicon) -> Result<()> {
        match self {
            JointLabel::Outside => Ok(()),
            JointLabel::Tagged { kind, .. } => match kind {
                LabelKind::Lu { frame } => {
                    if lexicon.has_frame(frame) {
                        Ok(())
                    } else {
                        Err(Error::Lexicon(format!("unknown frame '{frame}'")))
                    }
                }
                LabelKind::Fe { frame, fe } => {
                    if !lexicon.has_frame(frame) {
                        Err(Error::Lexicon(format!("unknown frame '{frame}'")))
                    } else if !lexicon.frame_has_fe(frame, fe) {
                        Err(Error::Lexicon(format!(
                            "FE '{fe}' does not belong to frame '{frame}'"
                        )))
                    } else {
                        Ok(())
                    }
                }
            },
        }
    }
}

impl fmt::Display for JointLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JointLabel::Outside => write!(f, "O"),
            JointLabel::Tagged { bio, kind } => {
                let prefix = match bio {
                    Bio::Begin => "B",
                    Bio::Inside => "I",
                };
                match kind {
                    LabelKind::Lu { frame } => write!(f, "{prefix}-LU:{frame}"),
                    LabelKind::Fe { frame, fe } => write!(f, "{prefix}-FE:{frame}:{fe}"),
                }
            }
        }
    }
}

impl FromStr for JointLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "O" {
            return Ok(JointLabel::Outside);
        }
        let bad = || Error::Decode(format!("malformed label '{s}'"));
        let (prefix, rest) = s.split_once('-').ok_or_else(bad)?;
        let bio = match prefix {
            "B" => Bio::Begin,
            "I" => Bio::Inside,
            _ => return Err(bad()),
        };
        if let Some(frame) = rest.strip_prefix("LU:") {
            if frame.is_empty() || frame.contains(':') {
                return Err(bad());
            }
            return Ok(JointLabel::Tagged {
                bio,
                kind: LabelKind::Lu {
                    frame: frame.to_string(),
                },
            });
        }
        if let Some(payload) = rest.strip_prefix("FE:") {
            let (frame, fe) = payload.split_once(':').ok_or_else(bad)?;
            if frame.is_empty() || fe.is_empty() || fe.contains(':') {
                return Err(bad());
            }
            return Ok(JointLabel::Tagged {
                bio,
                kind: LabelKind::Fe {
                    frame: frame.to_string(),
                    fe: fe.to_string(),
                },
            });
        }
        Err(bad())
    }
}

/// An ordered label alphabet with index lookups and transition tables.
#[derive(Debug, Clone)]
pub struct LabelSpace {
    labels: Vec<JointLabel>,
    index: HashMap<String, usize>,
    /// For each `I-*` label, the index of its `B-*` twin; `None` otherwise.
    begin_twin: Vec<Option<usize>>,
    /// For each `B-*`/`I-*` label, the `I-*` label continuing its span.
    cont_child: Vec<Option<usize>>,
}

impl LabelSpace {
    /// Enumerate the joint label space of a lexicon: `O` first, then all
    /// LU and FE labels sorted by their textual form.
    pub fn from_lexicon(lexicon: &FrameLexicon) -> Result<Self> {
        lexicon.validate()?;
        let mut labels = vec![JointLabel::Outside];
        let mut rest = Vec::new();
        for (frame, fes) in &lexicon.frame_to_fes {
            for bio in [Bio::Begin, Bio::Inside] {
                rest.push(JointLabel::Tagged {
                    bio,
                    kind: LabelKind::Lu {
                        frame: frame.clone(),
                    },
                });
                for fe in fes {
                    rest.push(JointLabel::Tagged {
                        bio,
                        kind: LabelKind::Fe {
                            frame: frame.clone(),
                            fe: fe.name.clone(),
                        },
                    });
                }
            }
        }
        rest.sort_by_key(|l| l.to_string());
        labels.extend(rest);
        Ok(Self::from_labels(labels))
    }

    /// Build from an explicit label list (index 0 must be `O`).
    pub fn from_labels(labels: Vec<JointLabel>) -> Self {
        assert!(
            matches!(labels.first(), Some(JointLabel::Outside)),
            "label space must start with O"
        );
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.to_string(), i))
            .collect::<HashMap<_, _>>();
        let begin_twin: Vec<Option<usize>> = labels
            .iter()
            .map(|l| match l {
                JointLabel::Tagged {
                    bio: Bio::Inside,
                    kind,
                } => index
                    .get(
                        &JointLabel::Tagged {
                            bio: Bio::Begin,
                            kind: kind.clone(),
                        }
                        .to_string(),
                    )
                    .copied(),
                _ => None,
            })
            .collect();
        let cont_child = labels
            .iter()
            .map(|l| match l {
                JointLabel::Outside => None,
                JointLabel::Tagged { kind, .. } => index
                    .get(
                        &JointLabel::Tagged {
                            bio: Bio::Inside,
                            kind: kind.clone(),
                        }
                        .to_string(),
                    )
                    .copied(),
            })
            .collect();
        LabelSpace {
            labels,
            index,
            begin_twin,
            cont_child,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[JointLabel] {
        &self.labels
    }

    pub fn get(&self, id: usize) -> &JointLabel {
        &self.labels[id]
    }

    pub fn id_of(&self, label: &JointLabel) -> Option<usize> {
        self.index.get(&label.to_string()).copied()
    }

    pub fn id_of_str(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    /// True when `id` is an `I-*` label.
    pub fn is_inside(&self, id: usize) -> bool {
        matches!(
            self.labels[id],
            JointLabel::Tagged {
                bio: Bio::Inside,
                ..
            }
        )
    }

    /// The `I-*` label that may continue label `id` (its own payload).
    pub fn continuation_of(&self, id: usize) -> Option<usize> {
        self.cont_child[id]
    }

    /// `I-*` labels may only follow their own `B-*`/`I-*`; everything else
    /// is unconstrained. `prev = None` means sequence start.
    pub fn transition_ok(&self, prev: Option<usize>, next: usize) -> bool {
        match self.labels[next] {
            JointLabel::Tagged {
                bio: Bio::Inside, ..
            } => match prev {
                None => false,
                Some(p) => p == next || self.begin_twin[next] == Some(p),
            },
            _ => true,
        }
    }

    /// Check a full sequence for BIO validity; reports the offending token.
    pub fn check_sequence(&self, seq: &[usize]) -> Result<()> {
        let mut prev = None;
        for (t, &id) in seq.iter().enumerate() {
            if id >= self.len() {
                return Err(Error::Decode(format!("label id {id} out of range")));
            }
            if !self.transition_ok(prev, id) {
                return Err(Error::BioViolation {
                    token: t,
                    msg: format!("'{}' cannot follow here", self.labels[id]),
                });
            }
            prev = Some(id);
        }
        Ok(())
    }

    /// FNV-1a hash of the ordered label strings; used to pin checkpoints to
    /// the lexicon they were trained against.
    pub fn hash64(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for l in &self.labels {
            for b in l.to_string().as_bytes() {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x100000001b3);
            }
            h ^= u64::from(b'\n');
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

    pub fn validate_against(&self, lexicon: &FrameLexicon) -> Result<()> {
        for l in &self.labels {
            l.validate_against(lexicon)?;
        }
        Ok(())
    }
}

/// Encode a gold-annotated sample into one joint label per token.
pub fn encode_labels(sample: &Sample) -> Result<Vec<JointLabel>> {
    let gold = sample
        .gold
        .as_ref()
        .ok_or_else(|| Error::InvalidAnnotation("sample has no gold annotation".into()))?;
    gold.validate(sample.tokens.len(), None)?;
    let mut out = vec![JointLabel::Outside; sample.tokens.len()];
    if let Some(frame) = &gold.frame {
        let mut put = |span: Span, kind: LabelKind| {
            for t in span.start..=span.end {
                out[t] = JointLabel::Tagged {
                    bio: if t == span.start {
                        Bio::Begin
                    } else {
                        Bio::Inside
                    },
                    kind: kind.clone(),
                };
            }
        };
        put(
            gold.lu_span,
            LabelKind::Lu {
                frame: frame.clone(),
            },
        );
        for fe in &gold.elements {
            put(
                fe.span,
                LabelKind::Fe {
                    frame: frame.clone(),
                    fe: fe.name.clone(),
                },
            );
        }
    }
    Ok(out)
}

/// Inverse of [`encode_labels`]: rebuild the annotation from a label
/// sequence. The frame is taken from the LU label over `target`; when the
/// target region carries no LU label the annotation is null.
///
/// Core-flag lookup needs the lexicon; FEs of unknown frames fall back to
/// `core = false`.
pub fn decode_labels(
    labels: &[JointLabel],
    target: Span,
    lexicon: &FrameLexicon,
) -> Result<FrameAnnotation> {
    target.validate(labels.len())?;
    // Reject BIO-violating input up front.
    let mut prev: Option<&JointLabel> = None;
    for (t, l) in labels.iter().enumerate() {
        if let JointLabel::Tagged {
            bio: Bio::Inside,
            kind,
        } = l
        {
            let ok = matches!(prev, Some(JointLabel::Tagged { kind: pk, .. }) if pk == kind);
            if !ok {
                return Err(Error::BioViolation {
                    token: t,
                    msg: format!("'{l}' has no matching begin"),
                });
            }
        }
        prev = Some(l);
    }

    // Collect maximal runs of identical payload.
    let mut runs: Vec<(Span, &LabelKind)> = Vec::new();
    let mut t = 0;
    while t < labels.len() {
        match &labels[t] {
            JointLabel::Outside => t += 1,
            JointLabel::Tagged { kind, .. } => {
                let start = t;
                let mut end = t;
                while end + 1 < labels.len() {
                    match &labels[end + 1] {
                        JointLabel::Tagged {
                            bio: Bio::Inside,
                            kind: k,
                        } if k == kind => end += 1,
                        _ => break,
                    }
                }
                runs.push((Span::new(start, end), kind));
                t = end + 1;
            }
        }
    }

    let lu_run = runs.iter().find_map(|(span, kind)| match kind {
        LabelKind::Lu { frame } if span.overlaps(&target) => Some((*span, frame.clone())),
        _ => None,
    });

    let Some((lu_span, frame)) = lu_run else {
        return Ok(FrameAnnotation::null(target));
    };

    let mut elements = Vec::new();
    for (span, kind) in &runs {
        if let LabelKind::Fe { frame: f, fe } = kind {
            if *f == frame {
                let core = lexicon.fe_is_core(f, fe).unwrap_or(false);
                elements.push(FrameElement {
                    name: fe.clone(),
                    span: *span,
                    core,
                });
            }
        }
    }
    Ok(FrameAnnotation {
        lu_span,
        frame: Some(frame),
        elements,
    })
}
