//! The training loop: seeded shuffling, domain-mixed batches, joint
//! frame/adversarial updates with the per-epoch λ ramp, per-epoch
//! validation sweeps, and best-validation model selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, FrameLexicon, Sample};
use crate::error::{Error, Result};
use crate::eval::sweep_delta_dists;
use crate::labels::LabelSpace;
use crate::net::{Batch, TaggerNet};
use crate::optim::{sgd_step, TrainingState};
use crate::tensor::Parameters;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adversarial: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            batch_size: 32,
            epochs: 30,
            seed: 7,
            adversarial: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("batch_size and epochs must be > 0".into()));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub progress: f64,
    pub lambda: f64,
    pub loss_frame: f64,
    pub loss_adv: f64,
    pub val_fi_fmax: f64,
    pub val_ai_fmax: f64,
    pub val_fmax_delta: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Parameters of the best-validation epoch.
    pub best_params: Parameters,
    pub best_epoch: usize,
    pub best_val_fi_fmax: f64,
    /// Final training state (last completed epoch).
    pub final_state: TrainingState,
    pub log: Vec<EpochLog>,
    /// Set when training stopped early on a non-finite loss.
    pub aborted: Option<String>,
}

/// Validation grid used for per-epoch model selection (coarser than the
/// evaluation default to keep epochs cheap).
pub fn validation_delta_grid() -> Vec<f64> {
    (0..9).map(|i| -0.4 + 0.1 * i as f64).collect()
}

/// Train a tagger on one or more corpora.
///
/// Each epoch shuffles all samples (domains interleave in proportion to
/// corpus size), advances the progress p linearly from 0 at the first
/// epoch to 1 at the last, recomputes λ from the ramp, and applies one
/// update per batch. Model selection keeps the epoch with the best
/// validation FI Fmax. A non-finite loss aborts training and returns the
/// state of the last good epoch.
pub fn train(
    net: &TaggerNet,
    train_corpora: &[&Corpus],
    val: &Corpus,
    lexicon: &FrameLexicon,
    space: &LabelSpace,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_corpora.is_empty() || train_corpora.iter().all(|c| c.is_empty()) {
        return Err(Error::Training("no training samples".into()));
    }
    if val.is_empty() {
        return Err(Error::Training("empty validation corpus".into()));
    }
    let items: Vec<(&Sample, usize)> = train_corpora
        .iter()
        .flat_map(|c| c.samples.iter().map(|s| (s, c.domain_id)))
        .collect();
    if cfg.adversarial {
        let domains: std::collections::BTreeSet<usize> =
            items.iter().map(|(_, d)| *d).collect();
        if domains.len() < 2 {
            return Err(Error::Training(
                "adversarial mode requires >= 2 distinct domains".into(),
            ));
        }
    }

    let val_items: Vec<(&Sample, usize)> =
        val.samples.iter().map(|s| (s, val.domain_id)).collect();
    let val_batch = Batch::encode(&val_items, &net.vocab, space, net.config.n_domains, None)?;
    let val_grid = validation_delta_grid();

    let mut state = TrainingState::new(net.init_params(cfg.seed), cfg.learning_rate, cfg.seed)?;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best_params = state.params.clone();
    let mut best_epoch = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    let mut aborted = None;

    let mut order: Vec<usize> = (0..items.len()).collect();
    'epochs: for epoch in 0..cfg.epochs {
        state.advance_epoch(epoch, cfg.epochs)?;
        let snapshot = state.params.clone();

        let mut rng =
            ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9e3779b9).wrapping_add(epoch as u64));
        order.shuffle(&mut rng);

        let mut sum_frame = 0.0;
        let mut sum_adv = 0.0;
        let mut n_batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch_items: Vec<(&Sample, usize)> =
                chunk.iter().map(|&i| items[i]).collect();
            let batch =
                Batch::encode(&batch_items, &net.vocab, space, net.config.n_domains, None)?;
            let dropout_seed = (net.config.dropout_rate > 0.0).then(|| {
                cfg.seed
                    .wrapping_mul(31)
                    .wrapping_add((epoch * 10_007 + n_batches) as u64)
            });
            let result = net.batch_losses(&state.params, &batch, cfg.adversarial, dropout_seed);
            let losses = match result {
                Ok(l) if l.loss_frame.is_finite() && l.loss_adv.is_finite() => l,
                Ok(_) | Err(Error::Numeric(_)) => {
                    state.params = snapshot;
                    aborted = Some(format!("non-finite loss at epoch {epoch}"));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            sum_frame += losses.loss_frame;
            sum_adv += losses.loss_adv;
            n_batches += 1;
            if let Err(e) = sgd_step(&mut state, &losses.grads) {
                match e {
                    Error::Numeric(_) => {
                        state.params = snapshot;
                        aborted = Some(format!("non-finite gradient at epoch {epoch}"));
                        break 'epochs;
                    }
                    other => return Err(other),
                }
            }
        }

        // validation sweep for model selection
        let dists = net.forward_frame(&state.params, &val_batch)?;
        let sweep = sweep_delta_dists(&dists, &val.samples, lexicon, space, &val_grid)?;
        let fi_fmax = sweep.fi_fmax();
        let ai_fmax = sweep.ai_fmax();
        log.push(EpochLog {
            epoch,
            progress: state.progress,
            lambda: state.lambda,
            loss_frame: sum_frame / n_batches.max(1) as f64,
            loss_adv: sum_adv / n_batches.max(1) as f64,
            val_fi_fmax: fi_fmax,
            val_ai_fmax: ai_fmax,
            val_fmax_delta: sweep.fmax_delta,
        });
        if fi_fmax > best_val {
            best_val = fi_fmax;
            best_epoch = epoch;
            best_params = state.params.clone();
        }
    }

    Ok(TrainOutcome {
        best_params,
        best_epoch,
        best_val_fi_fmax: best_val,
        final_state: state,
        log,
        aborted,
    })
}

/// Train the domain classification branch with the reversal disabled
/// (identity backward), descending the domain loss on every parameter it
/// reaches. Architecture sanity harness: on separable data the branch
/// must be able to learn the domains.
pub fn train_domain_classifier(
    net: &TaggerNet,
    params: &mut Parameters,
    items: &[(&Sample, usize)],
    space: &LabelSpace,
    epochs: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<()> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    for epoch in 0..epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);
        for chunk in order.chunks(16) {
            let batch_items: Vec<(&Sample, usize)> = chunk.iter().map(|&i| items[i]).collect();
            let batch =
                Batch::encode(&batch_items, &net.vocab, space, net.config.n_domains, None)?;
            let grads = net.domain_gradients_bypassed(params, &batch)?;
            for (name, g) in &grads {
                let p = params.get_mut(name).unwrap();
                for (pv, gv) in p.data.iter_mut().zip(&g.data) {
                    *pv -= learning_rate * gv;
                }
            }
        }
    }
    Ok(())
}

/// Fraction of samples whose predicted domain matches the tag.
pub fn domain_accuracy(
    net: &TaggerNet,
    params: &Parameters,
    items: &[(&Sample, usize)],
    space: &LabelSpace,
) -> Result<f64> {
    let batch = Batch::encode(items, &net.vocab, space, net.config.n_domains, None)?;
    let probs = net.forward_domain(params, &batch, 0.0)?;
    let mut correct = 0usize;
    for (p, (_, d)) in probs.iter().zip(items) {
        let pred = p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if pred == *d {
            correct += 1;
        }
    }
    Ok(correct as f64 / items.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{NetConfig, Vocab};
    use crate::synth::{generate, SynthConfig};

    fn small_net_config() -> NetConfig {
        NetConfig {
            lemma_dim: 8,
            pos_dim: 3,
            extra_dim: 3,
            hidden_size: 10,
            n_layers: 2,
            conv_window: 3,
            conv_channels: 6,
            n_domains: 2,
            dropout_rate: 0.0,
        }
    }

    fn small_synth() -> crate::synth::SynthOutput {
        generate(&SynthConfig {
            n_train_written: 60,
            n_train_spoken: 40,
            n_test: 20,
            n_frames: 3,
            fes_per_frame: 2,
            vocab_size: 40,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn adversarial_requires_two_domains() {
        let out = small_synth();
        let space = LabelSpace::from_lexicon(&out.lexicon).unwrap();
        let vocab = Vocab::build(&[&out.written]).unwrap();
        let net = TaggerNet::new(small_net_config(), vocab, space.len()).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            adversarial: true,
            ..TrainConfig::default()
        };
        let err = train(&net, &[&out.written], &out.written, &out.lexicon, &space, &cfg);
        assert!(err.is_err());
    }

    #[test]
    fn lambda_log_matches_schedule() {
        let out = small_synth();
        let space = LabelSpace::from_lexicon(&out.lexicon).unwrap();
        let vocab = Vocab::build(&[&out.written, &out.spoken_gold]).unwrap();
        let net = TaggerNet::new(small_net_config(), vocab, space.len()).unwrap();
        let corpora: Vec<&Corpus> = vec![&out.written, &out.spoken_gold];
        let cfg = TrainConfig {
            epochs: 3,
            seed: 3,
            adversarial: true,
            ..TrainConfig::default()
        };
        let run = train(&net, &corpora, &out.written, &out.lexicon, &space, &cfg).unwrap();
        assert_eq!(run.log.len(), 3);
        assert_eq!(run.log[0].lambda, 0.0);
        for l in &run.log {
            let expected = crate::optim::lambda_schedule(l.progress).unwrap();
            assert_eq!(l.lambda, expected);
        }
        assert_eq!(run.log[2].progress, 1.0);
    }

    #[test]
    fn epoch_zero_adversarial_update_equals_baseline() {
        // lambda(0) = 0 annihilates the adversarial term: a one-epoch run
        // ends on bit-identical parameters in both modes
        let out = small_synth();
        let space = LabelSpace::from_lexicon(&out.lexicon).unwrap();
        let vocab = Vocab::build(&[&out.written, &out.spoken_gold]).unwrap();
        let net = TaggerNet::new(small_net_config(), vocab, space.len()).unwrap();
        let corpora: Vec<&Corpus> = vec![&out.written, &out.spoken_gold];
        let base_cfg = TrainConfig {
            epochs: 1,
            seed: 3,
            adversarial: false,
            ..TrainConfig::default()
        };
        let adv_cfg = TrainConfig {
            adversarial: true,
            ..base_cfg.clone()
        };
        let base = train(&net, &corpora, &out.written, &out.lexicon, &space, &base_cfg).unwrap();
        let adv = train(&net, &corpora, &out.written, &out.lexicon, &space, &adv_cfg).unwrap();
        assert_eq!(base.log[0].loss_frame, adv.log[0].loss_frame);
        assert_eq!(base.final_state.params, adv.final_state.params);
    }

    #[test]
    fn training_is_deterministic() {
        let out = small_synth();
        let space = LabelSpace::from_lexicon(&out.lexicon).unwrap();
        let vocab = Vocab::build(&[&out.written, &out.spoken_gold]).unwrap();
        let net = TaggerNet::new(small_net_config(), vocab, space.len()).unwrap();
        let corpora: Vec<&Corpus> = vec![&out.written, &out.spoken_gold];
        let cfg = TrainConfig {
            epochs: 2,
            seed: 5,
            adversarial: true,
            ..TrainConfig::default()
        };
        let a = train(&net, &corpora, &out.written, &out.lexicon, &space, &cfg).unwrap();
        let b = train(&net, &corpora, &out.written, &out.lexicon, &space, &cfg).unwrap();
        assert_eq!(a.final_state.params, b.final_state.params);
        assert_eq!(a.best_epoch, b.best_epoch);
    }

    #[test]
    fn domain_branch_learns_marked_domains_with_reversal_disabled() {
        // toy data where a single token perfectly marks the domain
        let out = small_synth();
        let space = LabelSpace::from_lexicon(&out.lexicon).unwrap();
        let mut corpus_a = Corpus::new("a", 0);
        let mut corpus_b = Corpus::new("b", 1);
        for i in 0..60 {
            let marker = if i % 2 == 0 { "aaa" } else { "bbb" };
            let tokens = vec![
                crate::corpus::Token::new(marker, marker, "X", vec!["_".into(), "_".into()]),
                crate::corpus::Token::new("w", "w", "V", vec!["_".into(), "_".into()]),
            ];
            let sample = Sample {
                tokens,
                target: crate::corpus::Span::new(1, 1),
                gold: None,
            };
            if i % 2 == 0 {
                corpus_a.samples.push(sample);
            } else {
                corpus_b.samples.push(sample);
            }
        }
        let vocab = Vocab::build(&[&corpus_a, &corpus_b]).unwrap();
        let net = TaggerNet::new(small_net_config(), vocab, space.len()).unwrap();
        let mut params = net.init_params(9);
        let items: Vec<(&Sample, usize)> = corpus_a
            .samples
            .iter()
            .map(|s| (s, 0))
            .chain(corpus_b.samples.iter().map(|s| (s, 1)))
            .collect();
        train_domain_classifier(&net, &mut params, &items, &space, 30, 0.5, 2).unwrap();
        let acc = domain_accuracy(&net, &params, &items, &space).unwrap();
        assert!(acc >= 0.95, "domain accuracy {acc} below 0.95");
    }
}
