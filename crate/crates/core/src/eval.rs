//! Scoring and analysis: Frame Identification and soft-span Argument
//! Identification F-measures, δ-sweep precision/recall curves with Fmax
//! selection, the frozen-encoder domain probe, and per-factor breakdown
//! tables.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::{bucket_by_wer, WerBuckets};
use crate::corpus::{Corpus, FrameAnnotation, FrameLexicon, Sample};
use crate::decode::{decode_sample, DecodeMode, DecoderConfig};
use crate::error::{Error, Result};
use crate::labels::LabelSpace;
use crate::net::{Batch, LabelDistributionSequence, TaggerNet};
use crate::tensor::Parameters;

/// Precision / recall / F1 with raw counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_count: usize,
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_count: usize) -> Self {
        let precision = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_count == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_count) as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_count,
        }
    }
}

/// One operating point of a δ sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PRPoint {
    pub delta: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Frame Identification scores.
///
/// A prediction is a true positive when its frame equals a non-null gold
/// frame; a non-null prediction against a null or different gold frame is
/// a false positive; a null prediction against a non-null gold is a false
/// negative; two nulls are ignored.
pub fn score_frame_id(gold: &[FrameAnnotation], pred: &[FrameAnnotation]) -> Result<Prf> {
    if gold.len() != pred.len() {
        return Err(Error::Eval(format!(
            "{} gold vs {} predicted annotations",
            gold.len(),
            pred.len()
        )));
    }
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_count = 0;
    for (g, p) in gold.iter().zip(pred) {
        match (&g.frame, &p.frame) {
            (Some(gf), Some(pf)) if gf == pf => tp += 1,
            (Some(_), Some(_)) => {
                // wrong frame: both a spurious detection and a miss
                fp += 1;
                fn_count += 1;
            }
            (None, Some(_)) => fp += 1,
            (Some(_), None) => fn_count += 1,
            (None, None) => {}
        }
    }
    Ok(Prf::from_counts(tp, fp, fn_count))
}

/// Soft-span Argument Identification scores.
///
/// An argument hypothesis is correct when the sample's frame is correct
/// and a gold element with the same name overlaps it by at least one
/// token. Each gold element matches at most one hypothesis (greedy by
/// largest overlap, then leftmost). Errors are cumulative with frame
/// identification: under a wrong frame every hypothesis is a false
/// positive and every gold element a false negative.
pub fn score_arg_id_soft(gold: &[FrameAnnotation], pred: &[FrameAnnotation]) -> Result<Prf> {
    score_arg_id_filtered(gold, pred, |_| true)
}

/// Soft-span AI restricted to elements passing `keep` (by gold/pred
/// element); used for core/non-core breakdowns.
fn score_arg_id_filtered(
    gold: &[FrameAnnotation],
    pred: &[FrameAnnotation],
    keep: impl Fn(&crate::corpus::FrameElement) -> bool,
) -> Result<Prf> {
    if gold.len() != pred.len() {
        return Err(Error::Eval(format!(
            "{} gold vs {} predicted annotations",
            gold.len(),
            pred.len()
        )));
    }
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_count = 0;
    for (g, p) in gold.iter().zip(pred) {
        let gold_elems: Vec<_> = g.elements.iter().filter(|e| keep(e)).collect();
        let pred_elems: Vec<_> = p.elements.iter().filter(|e| keep(e)).collect();
        let frame_correct = match (&g.frame, &p.frame) {
            (Some(gf), Some(pf)) => gf == pf,
            _ => false,
        };
        if !frame_correct {
            fp += pred_elems.len();
            fn_count += gold_elems.len();
            continue;
        }
        // candidate pairs ordered by overlap desc, then leftmost hyp/gold
        let mut pairs = Vec::new();
        for (hi, h) in pred_elems.iter().enumerate() {
            for (gi, ge) in gold_elems.iter().enumerate() {
                if h.name == ge.name {
                    let ov = h.span.overlap_len(&ge.span);
                    if ov > 0 {
                        pairs.push((ov, hi, gi, h.span, ge.span));
                    }
                }
            }
        }
        pairs.sort_by(|a, b| {
            b.0.cmp(&a.0)
                .then(a.3.cmp(&b.3))
                .then(a.4.cmp(&b.4))
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let mut hyp_used = vec![false; pred_elems.len()];
        let mut gold_used = vec![false; gold_elems.len()];
        for (_, hi, gi, _, _) in pairs {
            if !hyp_used[hi] && !gold_used[gi] {
                hyp_used[hi] = true;
                gold_used[gi] = true;
                tp += 1;
            }
        }
        fp += hyp_used.iter().filter(|u| !**u).count();
        fn_count += gold_used.iter().filter(|u| !**u).count();
    }
    Ok(Prf::from_counts(tp, fp, fn_count))
}

/// The default 41-point δ grid: -0.8 to 0.8 in steps of 0.04.
pub fn default_delta_grid() -> Vec<f64> {
    (0..41).map(|i| -0.8 + 0.04 * i as f64).collect()
}

/// One point of a sweep with both task scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta: f64,
    pub fi: Prf,
    pub ai: Prf,
}

/// Full result of a δ sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// δ attaining the maximal AI F1 (ties go to the smaller δ).
    pub fmax_delta: f64,
    /// δ attaining the maximal FI F1.
    pub fi_fmax_delta: f64,
}

impl SweepResult {
    pub fn ai_curve(&self) -> Vec<PRPoint> {
        self.points
            .iter()
            .map(|p| PRPoint {
                delta: p.delta,
                precision: p.ai.precision,
                recall: p.ai.recall,
                f1: p.ai.f1,
            })
            .collect()
    }

    pub fn ai_fmax(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.ai.f1)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn fi_fmax(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.fi.f1)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn point_at(&self, delta: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.delta == delta)
    }
}

/// Sweep δ over precomputed distributions. Decoding uses the coherence
/// filter and exact constrained search.
pub fn sweep_delta_dists(
    dists: &[LabelDistributionSequence],
    samples: &[Sample],
    lexicon: &FrameLexicon,
    space: &LabelSpace,
    grid: &[f64],
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::Eval("empty delta grid".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Eval("delta grid must be sorted and distinct".into()));
    }
    if dists.len() != samples.len() {
        return Err(Error::Eval("distributions/samples length mismatch".into()));
    }
    let gold: Vec<FrameAnnotation> = samples
        .iter()
        .map(|s| {
            s.gold
                .clone()
                .ok_or_else(|| Error::Eval("sweep requires gold annotations".into()))
        })
        .collect::<Result<_>>()?;

    let mut points = Vec::with_capacity(grid.len());
    for &delta in grid {
        let cfg = DecoderConfig {
            delta,
            use_coherence_filter: true,
            decode_mode: DecodeMode::ConstrainedExact,
        };
        let preds: Vec<FrameAnnotation> = dists
            .iter()
            .zip(samples)
            .map(|(d, s)| decode_sample(d, s, lexicon, space, &cfg))
            .collect::<Result<_>>()?;
        let fi = score_frame_id(&gold, &preds)?;
        let ai = score_arg_id_soft(&gold, &preds)?;
        points.push(SweepPoint { delta, fi, ai });
    }
    let pick = |key: fn(&SweepPoint) -> f64| {
        let mut best = 0usize;
        for (i, p) in points.iter().enumerate() {
            if key(p) > key(&points[best]) {
                best = i;
            }
        }
        points[best].delta
    };
    Ok(SweepResult {
        fmax_delta: pick(|p| p.ai.f1),
        fi_fmax_delta: pick(|p| p.fi.f1),
        points,
    })
}

/// Forward a model snapshot over a corpus, then sweep δ.
pub fn sweep_delta(
    net: &TaggerNet,
    params: &Parameters,
    corpus: &Corpus,
    lexicon: &FrameLexicon,
    space: &LabelSpace,
    grid: &[f64],
) -> Result<SweepResult> {
    let items: Vec<(&Sample, usize)> = corpus
        .samples
        .iter()
        .map(|s| (s, corpus.domain_id))
        .collect();
    let batch = Batch::encode(&items, &net.vocab, space, net.config.n_domains, None)?;
    let dists = net.forward_frame(params, &batch)?;
    sweep_delta_dists(&dists, &corpus.samples, lexicon, space, grid)
}

/// Decode a corpus at one δ and return predictions.
pub fn predict_corpus(
    net: &TaggerNet,
    params: &Parameters,
    corpus: &Corpus,
    lexicon: &FrameLexicon,
    space: &LabelSpace,
    cfg: &DecoderConfig,
) -> Result<Vec<FrameAnnotation>> {
    let items: Vec<(&Sample, usize)> = corpus
        .samples
        .iter()
        .map(|s| (s, corpus.domain_id))
        .collect();
    let batch = Batch::encode(&items, &net.vocab, space, net.config.n_domains, None)?;
    let dists = net.forward_frame(params, &batch)?;
    dists
        .iter()
        .zip(&corpus.samples)
        .map(|(d, s)| decode_sample(d, s, lexicon, space, cfg))
        .collect()
}

// --- domain probe ------------------------------------------------------

/// Probe protocol hyperparameters (identical for both snapshots).
#[derive(Debug, Clone, Copy)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Fraction of samples used for training the probe.
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            epochs: 300,
            learning_rate: 0.5,
            train_fraction: 0.7,
            seed: 17,
        }
    }
}

/// Train a fresh linear domain classifier on frozen mean-pooled encoder
/// states of each snapshot and return the two held-out accuracies.
/// A lower accuracy means a more domain-invariant representation.
pub fn probe_domain_invariance(
    net: &TaggerNet,
    params_a: &Parameters,
    params_b: &Parameters,
    probe_corpora: &[&Corpus],
    space: &LabelSpace,
    cfg: &ProbeConfig,
) -> Result<(f64, f64)> {
    let mut items: Vec<(&Sample, usize)> = Vec::new();
    for corpus in probe_corpora {
        for s in &corpus.samples {
            items.push((s, corpus.domain_id));
        }
    }
    let domains: std::collections::BTreeSet<usize> =
        items.iter().map(|(_, d)| *d).collect();
    if domains.len() < 2 {
        return Err(Error::Eval("probe corpus must span >= 2 domains".into()));
    }
    let acc_a = probe_one(net, params_a, &items, space, cfg)?;
    let acc_b = probe_one(net, params_b, &items, space, cfg)?;
    Ok((acc_a, acc_b))
}

/// Accuracy of a fresh probe on a single snapshot; exposed for tests.
pub fn probe_one(
    net: &TaggerNet,
    params: &Parameters,
    items: &[(&Sample, usize)],
    space: &LabelSpace,
    cfg: &ProbeConfig,
) -> Result<f64> {
    let batch = Batch::encode(items, &net.vocab, space, net.config.n_domains, None)?;
    let states = net.encode_states(params, &batch)?;
    let features: Vec<Vec<f64>> = states
        .iter()
        .map(|per_token| {
            let dim = per_token[0].len();
            let mut mean = vec![0.0; dim];
            for row in per_token {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            for m in &mut mean {
                *m /= per_token.len() as f64;
            }
            mean
        })
        .collect();
    let labels: Vec<usize> = items.iter().map(|(_, d)| *d).collect();

    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    order.shuffle(&mut rng);
    let n_train = ((items.len() as f64) * cfg.train_fraction).round() as usize;
    let n_train = n_train.clamp(1, items.len().saturating_sub(1));
    let (train_idx, test_idx) = order.split_at(n_train);

    let dim = features[0].len();
    let n_dom = net.config.n_domains;
    let mut w = vec![0.0; n_dom * dim];
    let mut b = vec![0.0; n_dom];

    for _ in 0..cfg.epochs {
        let mut gw = vec![0.0; n_dom * dim];
        let mut gb = vec![0.0; n_dom];
        for &i in train_idx {
            let x = &features[i];
            let probs = linear_softmax(&w, &b, x, n_dom, dim);
            for d in 0..n_dom {
                let err = probs[d] - f64::from(u8::from(labels[i] == d));
                gb[d] += err;
                for (gwv, xv) in gw[d * dim..(d + 1) * dim].iter_mut().zip(x) {
                    *gwv += err * xv;
                }
            }
        }
        let scale = cfg.learning_rate / train_idx.len() as f64;
        for (wv, g) in w.iter_mut().zip(&gw) {
            *wv -= scale * g;
        }
        for (bv, g) in b.iter_mut().zip(&gb) {
            *bv -= scale * g;
        }
    }

    let mut correct = 0usize;
    for &i in test_idx {
        let probs = linear_softmax(&w, &b, &features[i], n_dom, dim);
        let pred = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(d, _)| d)
            .unwrap();
        if pred == labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / test_idx.len() as f64)
}

fn linear_softmax(w: &[f64], b: &[f64], x: &[f64], n_dom: usize, dim: usize) -> Vec<f64> {
    let mut logits = vec![0.0; n_dom];
    for d in 0..n_dom {
        let mut acc = b[d];
        for (wv, xv) in w[d * dim..(d + 1) * dim].iter().zip(x) {
            acc += wv * xv;
        }
        logits[d] = acc;
    }
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

// --- breakdown tables ----------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub key: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

fn row(key: &str, prf: &Prf, support: usize) -> BreakdownRow {
    BreakdownRow {
        key: key.to_string(),
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        support,
    }
}

/// Per-factor score tables: AI by core/non-core element, by trigger POS,
/// by sentence length (median split), optionally by WER bucket; FI per
/// LU lemma. Factors without support are omitted.
pub fn breakdown_report(
    samples: &[Sample],
    preds: &[FrameAnnotation],
    wer: Option<&[f64]>,
) -> Result<BTreeMap<String, Vec<BreakdownRow>>> {
    if samples.len() != preds.len() {
        return Err(Error::Eval("samples/predictions length mismatch".into()));
    }
    let gold: Vec<FrameAnnotation> = samples
        .iter()
        .map(|s| {
            s.gold
                .clone()
                .ok_or_else(|| Error::Eval("breakdown requires gold annotations".into()))
        })
        .collect::<Result<_>>()?;

    let mut out = BTreeMap::new();

    // core vs non-core
    let mut rows = Vec::new();
    for (key, core) in [("core", true), ("non-core", false)] {
        let prf = score_arg_id_filtered(&gold, preds, |e| e.core == core)?;
        let support: usize = gold
            .iter()
            .flat_map(|g| &g.elements)
            .filter(|e| e.core == core)
            .count();
        if support > 0 {
            rows.push(row(key, &prf, support));
        }
    }
    out.insert("core_vs_noncore".to_string(), rows);

    // trigger POS: verbal vs nominal vs other
    let mut rows = Vec::new();
    for (key, want) in [("verbal", 'V'), ("nominal", 'N')] {
        let idx: Vec<usize> = (0..samples.len())
            .filter(|&i| {
                samples[i].tokens[samples[i].target.start]
                    .pos
                    .starts_with(want)
            })
            .collect();
        if idx.is_empty() {
            continue;
        }
        let g: Vec<FrameAnnotation> = idx.iter().map(|&i| gold[i].clone()).collect();
        let p: Vec<FrameAnnotation> = idx.iter().map(|&i| preds[i].clone()).collect();
        let prf = score_arg_id_soft(&g, &p)?;
        let support = g.iter().map(|a| a.elements.len()).sum();
        if support > 0 {
            rows.push(row(key, &prf, support));
        }
    }
    out.insert("trigger_pos".to_string(), rows);

    // sentence length: median split
    let mut lens: Vec<usize> = samples.iter().map(Sample::len).collect();
    lens.sort_unstable();
    let median = lens[lens.len() / 2];
    let mut rows = Vec::new();
    for (key, short) in [("short", true), ("long", false)] {
        let idx: Vec<usize> = (0..samples.len())
            .filter(|&i| (samples[i].len() <= median) == short)
            .collect();
        if idx.is_empty() {
            continue;
        }
        let g: Vec<FrameAnnotation> = idx.iter().map(|&i| gold[i].clone()).collect();
        let p: Vec<FrameAnnotation> = idx.iter().map(|&i| preds[i].clone()).collect();
        let prf = score_arg_id_soft(&g, &p)?;
        let support = g.iter().map(|a| a.elements.len()).sum();
        if support > 0 {
            rows.push(row(key, &prf, support));
        }
    }
    out.insert("sentence_length".to_string(), rows);

    // WER buckets
    if let Some(wers) = wer {
        if wers.len() != samples.len() {
            return Err(Error::Eval("wer metadata length mismatch".into()));
        }
        let buckets = WerBuckets::default();
        let groups = bucket_by_wer(wers, &buckets);
        let mut rows = Vec::new();
        for (bi, idx) in groups.iter().enumerate() {
            if idx.is_empty() {
                continue;
            }
            let g: Vec<FrameAnnotation> = idx.iter().map(|&i| gold[i].clone()).collect();
            let p: Vec<FrameAnnotation> = idx.iter().map(|&i| preds[i].clone()).collect();
            let prf = score_arg_id_soft(&g, &p)?;
            let support = g.iter().map(|a| a.elements.len()).sum();
            rows.push(row(&buckets.label(bi), &prf, support));
        }
        out.insert("wer_bucket".to_string(), rows);
    } else {
        log::warn!("no WER metadata; wer_bucket breakdown omitted");
    }

    // FI per LU lemma
    let mut by_lemma: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_lemma.entry(s.target_lemma().to_string()).or_default().push(i);
    }
    let mut rows = Vec::new();
    for (lemma, idx) in by_lemma {
        let g: Vec<FrameAnnotation> = idx.iter().map(|&i| gold[i].clone()).collect();
        let p: Vec<FrameAnnotation> = idx.iter().map(|&i| preds[i].clone()).collect();
        let prf = score_frame_id(&g, &p)?;
        rows.push(row(&lemma, &prf, idx.len()));
    }
    out.insert("per_lu_fi".to_string(), rows);

    Ok(out)
}

/// Full evaluation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// FI scores at the Fmax operating point.
    pub fi: Prf,
    /// AI scores at the Fmax operating point.
    pub ai: Prf,
    /// AI operating curve over the δ grid.
    pub curve: Vec<PRPoint>,
    pub fmax_delta: f64,
    pub breakdowns: BTreeMap<String, Vec<BreakdownRow>>,
}

/// Evaluate a snapshot on a corpus: sweep δ, report scores at Fmax plus
/// breakdown tables computed at that operating point.
pub fn evaluate(
    net: &TaggerNet,
    params: &Parameters,
    corpus: &Corpus,
    lexicon: &FrameLexicon,
    space: &LabelSpace,
    grid: &[f64],
    wer: Option<&[f64]>,
) -> Result<EvalReport> {
    let sweep = sweep_delta(net, params, corpus, lexicon, space, grid)?;
    let at = sweep.point_at(sweep.fmax_delta).unwrap().clone();
    let cfg = DecoderConfig {
        delta: sweep.fmax_delta,
        use_coherence_filter: true,
        decode_mode: DecodeMode::ConstrainedExact,
    };
    let preds = predict_corpus(net, params, corpus, lexicon, space, &cfg)?;
    let breakdowns = breakdown_report(&corpus.samples, &preds, wer)?;
    Ok(EvalReport {
        fi: at.fi,
        ai: at.ai,
        curve: sweep.ai_curve(),
        fmax_delta: sweep.fmax_delta,
        breakdowns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{FrameElement, Span};

    fn ann(frame: Option<&str>, elems: &[(&str, usize, usize)]) -> FrameAnnotation {
        FrameAnnotation {
            lu_span: Span::new(0, 0),
            frame: frame.map(String::from),
            elements: elems
                .iter()
                .map(|(n, a, b)| FrameElement {
                    name: n.to_string(),
                    span: Span::new(*a, *b),
                    core: true,
                })
                .collect(),
        }
    }

    #[test]
    fn fi_perfect_predictions() {
        let gold = vec![ann(Some("F1"), &[]), ann(Some("F2"), &[])];
        let prf = score_frame_id(&gold, &gold).unwrap();
        assert_eq!((prf.precision, prf.recall, prf.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn fi_counts_follow_the_rules() {
        // gold [F1, NULL], pred [F1, F2] -> TP=1 FP=1 FN=0
        let gold = vec![ann(Some("F1"), &[]), ann(None, &[])];
        let pred = vec![ann(Some("F1"), &[]), ann(Some("F2"), &[])];
        let prf = score_frame_id(&gold, &pred).unwrap();
        assert_eq!((prf.tp, prf.fp, prf.fn_count), (1, 1, 0));
        assert!((prf.precision - 0.5).abs() < 1e-12);
        assert!((prf.recall - 1.0).abs() < 1e-12);
        assert!((prf.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn fi_all_null_predictions_have_zero_recall() {
        let gold = vec![ann(Some("F1"), &[]), ann(Some("F2"), &[]), ann(None, &[])];
        let pred = vec![ann(None, &[]); 3];
        let prf = score_frame_id(&gold, &pred).unwrap();
        assert_eq!(prf.recall, 0.0);
        assert_eq!(prf.f1, 0.0);
    }

    #[test]
    fn fi_length_mismatch_is_error() {
        let gold = vec![ann(None, &[])];
        assert!(score_frame_id(&gold, &[]).is_err());
    }

    #[test]
    fn ai_overlap_counts_as_match() {
        // pred span [2,3] vs gold [3,4], same name, frame correct -> TP
        let gold = vec![ann(Some("F"), &[("X", 3, 4)])];
        let pred = vec![ann(Some("F"), &[("X", 2, 3)])];
        let prf = score_arg_id_soft(&gold, &pred).unwrap();
        assert_eq!((prf.tp, prf.fp, prf.fn_count), (1, 0, 0));
    }

    #[test]
    fn ai_zero_overlap_is_fp_and_fn() {
        let gold = vec![ann(Some("F"), &[("X", 4, 5)])];
        let pred = vec![ann(Some("F"), &[("X", 2, 3)])];
        let prf = score_arg_id_soft(&gold, &pred).unwrap();
        assert_eq!((prf.tp, prf.fp, prf.fn_count), (0, 1, 1));
    }

    #[test]
    fn ai_errors_are_cumulative_under_wrong_frame() {
        // correct spans under an incorrect frame: all FP (plus all FN)
        let gold = vec![ann(Some("F"), &[("X", 1, 2), ("Y", 3, 4)])];
        let pred = vec![ann(Some("G"), &[("X", 1, 2), ("Y", 3, 4)])];
        let prf = score_arg_id_soft(&gold, &pred).unwrap();
        assert_eq!((prf.tp, prf.fp, prf.fn_count), (0, 2, 2));
    }

    #[test]
    fn ai_each_gold_matches_at_most_one_hypothesis() {
        // two hypotheses overlap the same gold element: the larger overlap
        // wins, the other is a false positive
        let gold = vec![ann(Some("F"), &[("X", 2, 5)])];
        let pred = vec![ann(Some("F"), &[("X", 2, 2), ("X", 3, 5)])];
        let prf = score_arg_id_soft(&gold, &pred).unwrap();
        assert_eq!((prf.tp, prf.fp, prf.fn_count), (1, 1, 0));
    }

    #[test]
    fn ai_reduces_to_exact_scoring_on_exact_spans() {
        let gold = vec![ann(Some("F"), &[("X", 1, 2), ("Y", 4, 4)])];
        let prf = score_arg_id_soft(&gold, &gold).unwrap();
        assert_eq!((prf.tp, prf.fp, prf.fn_count), (2, 0, 0));
        assert_eq!(prf.f1, 1.0);
    }

    #[test]
    fn scores_invariant_under_permutation() {
        let gold = vec![
            ann(Some("F"), &[("X", 1, 2)]),
            ann(None, &[]),
            ann(Some("G"), &[("Y", 3, 4)]),
        ];
        let pred = vec![
            ann(Some("F"), &[("X", 2, 3)]),
            ann(Some("F"), &[]),
            ann(Some("G"), &[]),
        ];
        let a_fi = score_frame_id(&gold, &pred).unwrap();
        let a_ai = score_arg_id_soft(&gold, &pred).unwrap();
        let perm = [2usize, 0, 1];
        let gp: Vec<_> = perm.iter().map(|&i| gold[i].clone()).collect();
        let pp: Vec<_> = perm.iter().map(|&i| pred[i].clone()).collect();
        let b_fi = score_frame_id(&gp, &pp).unwrap();
        let b_ai = score_arg_id_soft(&gp, &pp).unwrap();
        assert_eq!(a_fi, b_fi);
        assert_eq!(a_ai, b_ai);
    }

    /// Independent brute-force counter implementing the stated matching
    /// rule from scratch: repeatedly scan every unused hypothesis/gold
    /// pair, take the one with the largest overlap (ties toward the
    /// leftmost hypothesis span, then the leftmost gold span).
    fn oracle_ai(gold: &[FrameAnnotation], pred: &[FrameAnnotation]) -> (usize, usize, usize) {
        let mut tp = 0;
        let mut fp = 0;
        let mut fn_count = 0;
        for (g, p) in gold.iter().zip(pred) {
            let frame_ok = g.frame.is_some() && g.frame == p.frame;
            if !frame_ok {
                fp += p.elements.len();
                fn_count += g.elements.len();
                continue;
            }
            let mut hyp_used = vec![false; p.elements.len()];
            let mut gold_used = vec![false; g.elements.len()];
            loop {
                let mut pick: Option<(usize, usize, usize)> = None; // (overlap, hi, gi)
                for (hi, h) in p.elements.iter().enumerate() {
                    for (gi, ge) in g.elements.iter().enumerate() {
                        if hyp_used[hi] || gold_used[gi] || h.name != ge.name {
                            continue;
                        }
                        let ov = h.span.overlap_len(&ge.span);
                        if ov == 0 {
                            continue;
                        }
                        let better = match pick {
                            None => true,
                            Some((bov, bhi, bgi)) => {
                                let b = &p.elements[bhi];
                                let bg = &g.elements[bgi];
                                ov > bov
                                    || (ov == bov
                                        && (h.span < b.span
                                            || (h.span == b.span && ge.span < bg.span)))
                            }
                        };
                        if better {
                            pick = Some((ov, hi, gi));
                        }
                    }
                }
                match pick {
                    Some((_, hi, gi)) => {
                        hyp_used[hi] = true;
                        gold_used[gi] = true;
                        tp += 1;
                    }
                    None => break,
                }
            }
            fp += hyp_used.iter().filter(|u| !**u).count();
            fn_count += gold_used.iter().filter(|u| !**u).count();
        }
        (tp, fp, fn_count)
    }

    #[test]
    fn ai_matches_oracle_on_micro_fixtures() {
        let fixtures: Vec<(Vec<FrameAnnotation>, Vec<FrameAnnotation>)> = vec![
            (
                vec![ann(Some("F"), &[("X", 1, 3), ("X", 5, 6)])],
                vec![ann(Some("F"), &[("X", 2, 5)])],
            ),
            (
                vec![ann(Some("F"), &[("X", 1, 2), ("Y", 3, 4)])],
                vec![ann(Some("F"), &[("Y", 3, 3), ("X", 1, 1), ("X", 6, 6)])],
            ),
            (
                vec![ann(None, &[]), ann(Some("F"), &[("X", 0, 0)])],
                vec![ann(Some("F"), &[("X", 0, 0)]), ann(None, &[])],
            ),
            // greedy is not maximum matching; both sides implement greedy
            (
                vec![ann(Some("F"), &[("X", 1, 10), ("X", 12, 13)])],
                vec![ann(Some("F"), &[("X", 8, 12), ("X", 9, 10)])],
            ),
        ];
        for (gold, pred) in fixtures {
            let prf = score_arg_id_soft(&gold, &pred).unwrap();
            let (tp, fp, fn_count) = oracle_ai(&gold, &pred);
            assert_eq!((prf.tp, prf.fp, prf.fn_count), (tp, fp, fn_count));
        }
    }

    #[test]
    fn grid_validation() {
        assert_eq!(default_delta_grid().len(), 41);
        assert!((default_delta_grid()[0] + 0.8).abs() < 1e-12);
        assert!((default_delta_grid()[40] - 0.8).abs() < 1e-12);
    }
}
