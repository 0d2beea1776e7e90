//! Data model for annotated corpora: tokens, spans, frame annotations,
//! samples (one per lexical-unit occurrence) and the frame lexicon.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One token of a sentence with its surface form and categorical features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub lemma: String,
    /// Coarse part-of-speech tag ("V", "N", ...).
    pub pos: String,
    /// Extra categorical feature columns; same arity for every token of a corpus.
    pub extra_features: Vec<String>,
}

impl Token {
    pub fn new(
        surface: impl Into<String>,
        lemma: impl Into<String>,
        pos: impl Into<String>,
        extra_features: Vec<String>,
    ) -> Self {
        Token {
            surface: surface.into(),
            lemma: lemma.into(),
            pos: pos.into(),
            extra_features,
        }
    }

    /// Convenience constructor for tests and plain-text ingestion: lemma is
    /// the lowercased surface, POS and features are placeholders.
    pub fn from_surface(surface: &str, n_extra: usize) -> Self {
        Token {
            surface: surface.to_string(),
            lemma: surface.to_lowercase(),
            pos: "X".to_string(),
            extra_features: vec!["_".to_string(); n_extra],
        }
    }
}

/// Inclusive token-index span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.start <= idx && idx <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    /// Number of tokens shared with `other`.
    pub fn overlap_len(&self, other: &Span) -> usize {
        if self.overlaps(other) {
            self.end.min(other.end) - self.start.max(other.start) + 1
        } else {
            0
        }
    }

    pub fn validate(&self, sentence_len: usize) -> Result<()> {
        if self.start > self.end || self.end >= sentence_len {
            return Err(Error::InvalidSpan {
                start: self.start,
                end: self.end,
                len: sentence_len,
            });
        }
        Ok(())
    }
}

/// One frame element realization: role name, covered span, core flag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameElement {
    pub name: String,
    pub span: Span,
    pub core: bool,
}

/// Annotation of one LU occurrence: the triggered frame (or none) and its
/// frame-element spans.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    pub lu_span: Span,
    /// `None` means the LU occurrence triggers no frame.
    pub frame: Option<String>,
    pub elements: Vec<FrameElement>,
}

impl FrameAnnotation {
    pub fn null(lu_span: Span) -> Self {
        FrameAnnotation {
            lu_span,
            frame: None,
            elements: Vec::new(),
        }
    }

    pub fn is_null(&self) -> bool {
        self.frame.is_none()
    }

    /// Check structural invariants, optionally against a lexicon.
    pub fn validate(&self, sentence_len: usize, lexicon: Option<&FrameLexicon>) -> Result<()> {
        self.lu_span.validate(sentence_len)?;
        if self.frame.is_none() && !self.elements.is_empty() {
            return Err(Error::InvalidAnnotation(
                "null frame cannot carry frame elements".into(),
            ));
        }
        for (i, fe) in self.elements.iter().enumerate() {
            fe.span.validate(sentence_len)?;
            if fe.span.overlaps(&self.lu_span) {
                return Err(Error::InvalidAnnotation(format!(
                    "element '{}' overlaps the LU span",
                    fe.name
                )));
            }
            for other in &self.elements[i + 1..] {
                if fe.span.overlaps(&other.span) {
                    return Err(Error::InvalidAnnotation(format!(
                        "elements '{}' and '{}' overlap",
                        fe.name, other.name
                    )));
                }
            }
            if let (Some(frame), Some(lex)) = (&self.frame, lexicon) {
                if !lex.frame_has_fe(frame, &fe.name) {
                    return Err(Error::InvalidAnnotation(format!(
                        "element '{}' does not belong to frame '{}'",
                        fe.name, frame
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One sentence with one target LU occurrence; the atomic training/eval unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub tokens: Vec<Token>,
    /// The LU occurrence this sample is about.
    pub target: Span,
    /// Gold annotation; absent for unlabeled samples.
    pub gold: Option<FrameAnnotation>,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn target_lemma(&self) -> &str {
        &self.tokens[self.target.start].lemma
    }

    pub fn validate(&self, lexicon: Option<&FrameLexicon>) -> Result<()> {
        self.target.validate(self.tokens.len())?;
        if let Some(t) = self.tokens.iter().find(|t| t.surface.is_empty()) {
            return Err(Error::InvalidAnnotation(format!(
                "empty token surface (lemma '{}')",
                t.lemma
            )));
        }
        if let Some(gold) = &self.gold {
            gold.validate(self.tokens.len(), lexicon)?;
            if gold.lu_span != self.target {
                return Err(Error::InvalidAnnotation(
                    "gold LU span differs from the sample target".into(),
                ));
            }
        }
        Ok(())
    }
}

/// A named collection of samples from one source, tagged with a domain id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub samples: Vec<Sample>,
    pub domain_id: usize,
    pub name: String,
}

impl Corpus {
    pub fn new(name: impl Into<String>, domain_id: usize) -> Self {
        Corpus {
            samples: Vec::new(),
            domain_id,
            name: name.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Arity of `extra_features`, if any sample exists.
    pub fn feature_arity(&self) -> Option<usize> {
        self.samples
            .first()
            .and_then(|s| s.tokens.first())
            .map(|t| t.extra_features.len())
    }

    pub fn validate(&self, lexicon: Option<&FrameLexicon>) -> Result<()> {
        let arity = self.feature_arity();
        for (i, sample) in self.samples.iter().enumerate() {
            sample
                .validate(lexicon)
                .map_err(|e| Error::InvalidAnnotation(format!("sample {i}: {e}")))?;
            for t in &sample.tokens {
                if Some(t.extra_features.len()) != arity {
                    return Err(Error::InvalidAnnotation(format!(
                        "sample {i}: inconsistent feature arity"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Frame element declaration in the lexicon.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeDecl {
    pub name: String,
    pub core: bool,
}

/// Maps LU lemmas to candidate frames and frames to their frame elements.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameLexicon {
    pub lu_to_frames: BTreeMap<String, BTreeSet<String>>,
    pub frame_to_fes: BTreeMap<String, BTreeSet<FeDecl>>,
}

impl FrameLexicon {
    pub fn is_empty(&self) -> bool {
        self.frame_to_fes.is_empty()
    }

    pub fn frames(&self) -> impl Iterator<Item = &String> {
        self.frame_to_fes.keys()
    }

    pub fn has_frame(&self, frame: &str) -> bool {
        self.frame_to_fes.contains_key(frame)
    }

    pub fn frame_has_fe(&self, frame: &str, fe: &str) -> bool {
        self.frame_to_fes
            .get(frame)
            .is_some_and(|fes| fes.iter().any(|d| d.name == fe))
    }

    pub fn fe_is_core(&self, frame: &str, fe: &str) -> Option<bool> {
        self.frame_to_fes
            .get(frame)?
            .iter()
            .find(|d| d.name == fe)
            .map(|d| d.core)
    }

    /// Candidate frames for a lemma; `None` when the lemma is not listed.
    pub fn candidate_frames(&self, lemma: &str) -> Option<&BTreeSet<String>> {
        self.lu_to_frames.get(lemma)
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Lexicon("lexicon has no frames".into()));
        }
        for (lemma, frames) in &self.lu_to_frames {
            if frames.is_empty() {
                return Err(Error::Lexicon(format!("LU '{lemma}' lists no frames")));
            }
            for f in frames {
                if !self.has_frame(f) {
                    return Err(Error::Lexicon(format!(
                        "LU '{lemma}' references unknown frame '{f}'"
                    )));
                }
            }
        }
        for (frame, fes) in &self.frame_to_fes {
            if fes.is_empty() {
                return Err(Error::Lexicon(format!("frame '{frame}' lists no elements")));
            }
            for name in [frame.as_str()]
                .into_iter()
                .chain(fes.iter().map(|d| d.name.as_str()))
            {
                if name.is_empty() || name.contains(':') || name.contains(char::is_whitespace) {
                    return Err(Error::Lexicon(format!(
                        "invalid frame/FE name '{name}' (empty, ':' or whitespace)"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_lexicon() -> FrameLexicon {
        let mut lex = FrameLexicon::default();
        lex.lu_to_frames
            .insert("attack".into(), ["Attack".to_string()].into());
        lex.frame_to_fes.insert(
            "Attack".into(),
            [
                FeDecl {
                    name: "Victim".into(),
                    core: true,
                },
                FeDecl {
                    name: "Place".into(),
                    core: false,
                },
            ]
            .into(),
        );
        lex
    }

    #[test]
    fn span_overlap() {
        let a = Span::new(2, 4);
        assert_eq!(a.overlap_len(&Span::new(4, 6)), 1);
        assert_eq!(a.overlap_len(&Span::new(5, 6)), 0);
        assert_eq!(a.overlap_len(&Span::new(0, 9)), 3);
        assert!(a.contains(3));
        assert!(!a.contains(5));
    }

    #[test]
    fn span_bounds_checked() {
        assert!(Span::new(1, 3).validate(4).is_ok());
        assert!(Span::new(1, 4).validate(4).is_err());
        assert!(Span::new(3, 1).validate(4).is_err());
    }

    #[test]
    fn null_annotation_with_elements_rejected() {
        let ann = FrameAnnotation {
            lu_span: Span::new(0, 0),
            frame: None,
            elements: vec![FrameElement {
                name: "Victim".into(),
                span: Span::new(1, 1),
                core: true,
            }],
        };
        assert!(ann.validate(2, None).is_err());
    }

    #[test]
    fn overlapping_elements_rejected() {
        let ann = FrameAnnotation {
            lu_span: Span::new(0, 0),
            frame: Some("Attack".into()),
            elements: vec![
                FrameElement {
                    name: "Victim".into(),
                    span: Span::new(1, 2),
                    core: true,
                },
                FrameElement {
                    name: "Place".into(),
                    span: Span::new(2, 3),
                    core: false,
                },
            ],
        };
        assert!(ann.validate(4, None).is_err());
    }

    #[test]
    fn fe_must_belong_to_frame() {
        let lex = toy_lexicon();
        let ann = FrameAnnotation {
            lu_span: Span::new(0, 0),
            frame: Some("Attack".into()),
            elements: vec![FrameElement {
                name: "Cargo".into(),
                span: Span::new(1, 1),
                core: true,
            }],
        };
        assert!(ann.validate(2, Some(&lex)).is_err());
    }

    #[test]
    fn lexicon_validates_references() {
        let mut lex = toy_lexicon();
        assert!(lex.validate().is_ok());
        lex.lu_to_frames
            .insert("ghost".into(), ["Haunting".to_string()].into());
        assert!(lex.validate().is_err());
    }

    #[test]
    fn gold_lu_span_must_match_target() {
        let sample = Sample {
            tokens: vec![Token::from_surface("a", 0), Token::from_surface("b", 0)],
            target: Span::new(0, 0),
            gold: Some(FrameAnnotation::null(Span::new(1, 1))),
        };
        assert!(sample.validate(None).is_err());
    }
}
