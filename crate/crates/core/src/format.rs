//! Column-based corpus file format and the lexicon JSON format.
//!
//! Corpus files are UTF-8 text. Each sample is one block, preceded by a
//! `#target <start> <end>` header and terminated by a blank line. Within a
//! block, one token per line with tab-separated columns:
//! `surface  lemma  pos  feat1..featN  label`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::{Corpus, FrameAnnotation, FrameLexicon, Sample, Span, Token};
use crate::error::{Error, Result};
use crate::labels::{decode_labels, encode_labels, JointLabel};

/// Parse a corpus document. Annotations are reconstructed from the BIO
/// label column and validated against `lexicon`.
pub fn parse_corpus(
    text: &str,
    lexicon: &FrameLexicon,
    name: &str,
    domain_id: usize,
) -> Result<Corpus> {
    let mut corpus = Corpus::new(name, domain_id);
    let mut arity: Option<usize> = None;

    let mut block_start_line = 0usize;
    let mut target: Option<Span> = None;
    let mut tokens: Vec<Token> = Vec::new();
    let mut labels: Vec<JointLabel> = Vec::new();

    let lines: Vec<&str> = text.lines().collect();
    for (i, raw) in lines.iter().chain(std::iter::once(&"")).enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end();
        if line.is_empty() {
            if !tokens.is_empty() {
                let sample = finish_block(
                    block_start_line,
                    target.take(),
                    std::mem::take(&mut tokens),
                    std::mem::take(&mut labels),
                    lexicon,
                )?;
                if let Some(a) = arity {
                    if sample.tokens[0].extra_features.len() != a {
                        return Err(Error::CorpusParse {
                            line: block_start_line,
                            msg: "inconsistent feature arity across samples".into(),
                        });
                    }
                } else {
                    arity = Some(sample.tokens[0].extra_features.len());
                }
                corpus.samples.push(sample);
            } else if target.is_some() {
                return Err(Error::CorpusParse {
                    line: lineno,
                    msg: "target header without token lines".into(),
                });
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix("#target") {
            if !tokens.is_empty() || target.is_some() {
                return Err(Error::CorpusParse {
                    line: lineno,
                    msg: "unexpected #target inside a block".into(),
                });
            }
            let parts: Vec<&str> = rest.split_whitespace().collect();
            let parse_idx = |s: &str| {
                s.parse::<usize>().map_err(|_| Error::CorpusParse {
                    line: lineno,
                    msg: format!("bad target index '{s}'"),
                })
            };
            match parts.as_slice() {
                [a, b] => target = Some(Span::new(parse_idx(a)?, parse_idx(b)?)),
                _ => {
                    return Err(Error::CorpusParse {
                        line: lineno,
                        msg: "expected '#target <start> <end>'".into(),
                    })
                }
            }
            block_start_line = lineno;
            continue;
        }
        if line.starts_with('#') {
            continue; // other comments are ignored
        }
        if target.is_none() {
            return Err(Error::CorpusParse {
                line: lineno,
                msg: "token line before #target header".into(),
            });
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 4 {
            return Err(Error::CorpusParse {
                line: lineno,
                msg: format!("expected at least 4 tab-separated columns, got {}", cols.len()),
            });
        }
        let (surface, lemma, pos) = (cols[0], cols[1], cols[2]);
        if surface.is_empty() {
            return Err(Error::CorpusParse {
                line: lineno,
                msg: "empty surface form".into(),
            });
        }
        let extra: Vec<String> = cols[3..cols.len() - 1].iter().map(|s| s.to_string()).collect();
        let label: JointLabel = cols[cols.len() - 1].parse().map_err(|e| Error::CorpusParse {
            line: lineno,
            msg: format!("{e}"),
        })?;
        tokens.push(Token::new(surface, lemma, pos, extra));
        labels.push(label);
    }

    corpus.validate(Some(lexicon))?;
    Ok(corpus)
}

fn finish_block(
    start_line: usize,
    target: Option<Span>,
    tokens: Vec<Token>,
    labels: Vec<JointLabel>,
    lexicon: &FrameLexicon,
) -> Result<Sample> {
    let target = target.ok_or(Error::CorpusParse {
        line: start_line,
        msg: "block without #target header".into(),
    })?;
    target.validate(tokens.len()).map_err(|_| Error::CorpusParse {
        line: start_line,
        msg: format!(
            "target [{}, {}] out of bounds for {} tokens",
            target.start,
            target.end,
            tokens.len()
        ),
    })?;
    for l in &labels {
        if let Some(frame) = l.frame() {
            if !lexicon.has_frame(frame) {
                return Err(Error::CorpusParse {
                    line: start_line,
                    msg: format!("label '{l}' names a frame missing from the lexicon"),
                });
            }
        }
    }
    let mut gold = decode_labels(&labels, target, lexicon).map_err(|e| match e {
        Error::BioViolation { token, msg } => Error::CorpusParse {
            line: start_line + 1 + token,
            msg: format!("BIO violation at token {token}: {msg}"),
        },
        other => other,
    })?;
    // The decoded LU span must be exactly the declared target.
    if !gold.is_null() && gold.lu_span != target {
        return Err(Error::CorpusParse {
            line: start_line,
            msg: format!(
                "LU labels cover [{}, {}] but target is [{}, {}]",
                gold.lu_span.start, gold.lu_span.end, target.start, target.end
            ),
        });
    }
    if gold.is_null() {
        gold = FrameAnnotation::null(target);
    }
    gold.validate(tokens.len(), Some(lexicon))
        .map_err(|e| Error::CorpusParse {
            line: start_line,
            msg: format!("{e}"),
        })?;
    Ok(Sample {
        tokens,
        target,
        gold: Some(gold),
    })
}

/// Serialize a corpus in the block format; the inverse of [`parse_corpus`].
pub fn write_corpus(corpus: &Corpus) -> Result<String> {
    let mut out = String::new();
    for sample in &corpus.samples {
        write_sample(&mut out, sample, None)?;
    }
    Ok(out)
}

/// Serialize one sample, optionally overriding the label column with a
/// predicted annotation (used by the `predict` command).
pub fn write_sample(
    out: &mut String,
    sample: &Sample,
    predicted: Option<&FrameAnnotation>,
) -> Result<()> {
    let labels = match predicted {
        Some(ann) => {
            let tmp = Sample {
                tokens: sample.tokens.clone(),
                target: ann.lu_span,
                gold: Some(ann.clone()),
            };
            encode_labels(&tmp)?
        }
        None => match &sample.gold {
            Some(_) => encode_labels(sample)?,
            None => vec![JointLabel::Outside; sample.tokens.len()],
        },
    };
    writeln!(out, "#target {} {}", sample.target.start, sample.target.end).unwrap();
    for (tok, label) in sample.tokens.iter().zip(&labels) {
        let extras = if tok.extra_features.is_empty() {
            String::new()
        } else {
            format!("\t{}", tok.extra_features.join("\t"))
        };
        writeln!(
            out,
            "{}\t{}\t{}{}\t{}",
            tok.surface, tok.lemma, tok.pos, extras, label
        )
        .unwrap();
    }
    out.push('\n');
    Ok(())
}

pub fn read_corpus_file(
    path: impl AsRef<Path>,
    lexicon: &FrameLexicon,
    name: &str,
    domain_id: usize,
) -> Result<Corpus> {
    let text = fs::read_to_string(path)?;
    parse_corpus(&text, lexicon, name, domain_id)
}

pub fn write_corpus_file(path: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    fs::write(path, write_corpus(corpus)?)?;
    Ok(())
}

pub fn read_lexicon_file(path: impl AsRef<Path>) -> Result<FrameLexicon> {
    let text = fs::read_to_string(path)?;
    let lex: FrameLexicon = serde_json::from_str(&text)?;
    lex.validate()?;
    Ok(lex)
}

pub fn write_lexicon_file(path: impl AsRef<Path>, lexicon: &FrameLexicon) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(lexicon)?)?;
    Ok(())
}
