//! The parser network: per-column feature embeddings with a target-marker
//! channel, a stacked bidirectional gated recurrent encoder, a per-token
//! softmax over the joint label space, and a convolutional domain
//! classifier attached to the last hidden layer through the reversal
//! connector.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Sample};
use crate::error::{Error, Result};
use crate::labels::LabelSpace;
use crate::tape::{NodeId, Tape};
use crate::tensor::{GradMap, Parameters, Tensor};

/// Per-token probability rows over the label space; index 0 is P(y_t = O).
pub type LabelDistributionSequence = Vec<Vec<f64>>;

pub const UNK_INDEX: usize = 0;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Embedding width of the lemma column.
    pub lemma_dim: usize,
    /// Embedding width of the POS column.
    pub pos_dim: usize,
    /// Embedding width of each extra feature column.
    pub extra_dim: usize,
    /// Recurrent state size per direction.
    pub hidden_size: usize,
    pub n_layers: usize,
    /// Convolution window of the domain head (odd).
    pub conv_window: usize,
    pub conv_channels: usize,
    pub n_domains: usize,
    /// Dropout between recurrent layers (training only).
    pub dropout_rate: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            lemma_dim: 16,
            pos_dim: 4,
            extra_dim: 4,
            hidden_size: 64,
            n_layers: 4,
            conv_window: 3,
            conv_channels: 16,
            n_domains: 2,
            dropout_rate: 0.0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers < 1 {
            return Err(Error::InvalidConfig("n_layers must be >= 1".into()));
        }
        if self.n_domains < 2 {
            return Err(Error::InvalidConfig("n_domains must be >= 2".into()));
        }
        if self.lemma_dim == 0
            || self.pos_dim == 0
            || self.hidden_size == 0
            || self.conv_channels == 0
        {
            return Err(Error::InvalidConfig("dimensions must be > 0".into()));
        }
        if self.conv_window % 2 == 0 || self.conv_window == 0 {
            return Err(Error::InvalidConfig("conv_window must be odd".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig("dropout_rate must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// String-to-index maps for each feature column; index 0 is UNK.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    /// Column names in network order: lemma, pos, then extras.
    pub columns: Vec<String>,
    pub maps: Vec<BTreeMap<String, usize>>,
}

impl Vocab {
    /// Collect the distinct feature strings of the given corpora. Indexing
    /// is sorted, so identical content yields an identical vocabulary.
    pub fn build(corpora: &[&Corpus]) -> Result<Self> {
        let arity = corpora
            .iter()
            .find_map(|c| c.feature_arity())
            .ok_or_else(|| Error::InvalidConfig("cannot build a vocabulary from empty corpora".into()))?;
        let mut columns = vec!["lemma".to_string(), "pos".to_string()];
        for i in 0..arity {
            columns.push(format!("x{i}"));
        }
        let mut sets: Vec<std::collections::BTreeSet<String>> = vec![Default::default(); columns.len()];
        for corpus in corpora {
            for sample in &corpus.samples {
                for tok in &sample.tokens {
                    sets[0].insert(tok.lemma.clone());
                    sets[1].insert(tok.pos.clone());
                    for (i, f) in tok.extra_features.iter().enumerate() {
                        sets[2 + i].insert(f.clone());
                    }
                }
            }
        }
        let maps = sets
            .into_iter()
            .map(|set| {
                set.into_iter()
                    .enumerate()
                    .map(|(i, s)| (s, i + 1))
                    .collect()
            })
            .collect();
        Ok(Vocab { columns, maps })
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    /// Size of a column's table including the UNK row.
    pub fn table_size(&self, col: usize) -> usize {
        self.maps[col].len() + 1
    }

    pub fn lookup(&self, col: usize, s: &str) -> usize {
        self.maps[col].get(s).copied().unwrap_or(UNK_INDEX)
    }

    pub fn token_indices(&self, tok: &crate::corpus::Token) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n_columns());
        out.push(self.lookup(0, &tok.lemma));
        out.push(self.lookup(1, &tok.pos));
        for (i, f) in tok.extra_features.iter().enumerate() {
            out.push(self.lookup(2 + i, f));
        }
        out
    }
}

/// One encoded sample of a batch: padded feature grid, target marker,
/// optional gold labels, domain tag, and padding mask.
#[derive(Debug, Clone)]
pub struct BatchSample {
    /// `feats[t][col]`, padded rows hold UNK.
    pub feats: Vec<Vec<usize>>,
    pub marker: Vec<f64>,
    pub gold: Option<Vec<usize>>,
    pub domain_id: usize,
    pub mask: Vec<bool>,
    pub len: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub samples: Vec<BatchSample>,
}

impl Batch {
    /// Encode samples against a vocabulary and label space. `pad_to`
    /// overrides the natural maximum length (useful for mask tests).
    pub fn encode(
        items: &[(&Sample, usize)],
        vocab: &Vocab,
        space: &LabelSpace,
        n_domains: usize,
        pad_to: Option<usize>,
    ) -> Result<Self> {
        let natural = items.iter().map(|(s, _)| s.len()).max().unwrap_or(0);
        let max_len = pad_to.unwrap_or(natural).max(natural);
        let mut samples = Vec::with_capacity(items.len());
        for (sample, domain_id) in items {
            if *domain_id >= n_domains {
                return Err(Error::InvalidConfig(format!(
                    "domain id {domain_id} out of range for {n_domains} domains"
                )));
            }
            let n = sample.len();
            let mut feats = Vec::with_capacity(max_len);
            let mut marker = vec![0.0; max_len];
            let mut mask = vec![false; max_len];
            for t in 0..max_len {
                if t < n {
                    feats.push(vocab.token_indices(&sample.tokens[t]));
                    marker[t] = if sample.target.contains(t) { 1.0 } else { 0.0 };
                    mask[t] = true;
                } else {
                    feats.push(vec![UNK_INDEX; vocab.n_columns()]);
                }
            }
            let gold = match &sample.gold {
                Some(_) => {
                    let labels = crate::labels::encode_labels(sample)?;
                    let mut ids = Vec::with_capacity(max_len);
                    for l in &labels {
                        let id = space.id_of(l).ok_or_else(|| {
                            Error::Decode(format!("gold label '{l}' missing from label space"))
                        })?;
                        ids.push(id);
                    }
                    ids.resize(max_len, 0);
                    Some(ids)
                }
                None => None,
            };
            samples.push(BatchSample {
                feats,
                marker,
                gold,
                domain_id: *domain_id,
                mask,
                len: n,
            });
        }
        Ok(Batch { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// The tagger network. Holds the architecture and vocabulary; parameters
/// live in a separate [`Parameters`] store.
#[derive(Debug, Clone)]
pub struct TaggerNet {
    pub config: NetConfig,
    pub vocab: Vocab,
    pub n_labels: usize,
}

/// Embedding rows stand in for pretrained vectors and need unit-ish
/// scale; weight matrices use fan-scaled uniform ranges so that stacked
/// layers neither collapse nor blow up the state magnitude.
const EMBED_INIT_RANGE: f64 = 0.5;

fn weight_init_range(shape: &[usize]) -> f64 {
    match shape {
        [rows, cols] => (6.0 / (*rows as f64 + *cols as f64)).sqrt(),
        _ => 0.08,
    }
}

impl TaggerNet {
    pub fn new(config: NetConfig, vocab: Vocab, n_labels: usize) -> Result<Self> {
        config.validate()?;
        if n_labels < 2 {
            return Err(Error::InvalidConfig("label space too small".into()));
        }
        Ok(TaggerNet {
            config,
            vocab,
            n_labels,
        })
    }

    /// Embedding width of one token plus the target-marker channel.
    pub fn input_dim(&self) -> usize {
        let c = &self.config;
        let extras = self.vocab.n_columns().saturating_sub(2);
        c.lemma_dim + c.pos_dim + extras * c.extra_dim + 1
    }

    fn column_dim(&self, col: usize) -> usize {
        match col {
            0 => self.config.lemma_dim,
            1 => self.config.pos_dim,
            _ => self.config.extra_dim,
        }
    }

    fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim()
        } else {
            2 * self.config.hidden_size
        }
    }

    /// Allocate and seed all parameters: weights uniform in
    /// [-0.08, 0.08], biases zero. Iteration follows sorted name order,
    /// so the same seed always produces the same values.
    pub fn init_params(&self, seed: u64) -> Parameters {
        let c = &self.config;
        let h = c.hidden_size;
        let mut params = Parameters::new();
        for (col, name) in self.vocab.columns.iter().enumerate() {
            params.insert(
                format!("emb.{name}.table"),
                Tensor::zeros(&[self.vocab.table_size(col), self.column_dim(col)]),
            );
        }
        for layer in 0..c.n_layers {
            let input = self.layer_input_dim(layer);
            for dir in ["fwd", "bwd"] {
                let p = format!("gru.l{layer}.{dir}");
                for gate in ["r", "z", "n"] {
                    params.insert(format!("{p}.w_{gate}"), Tensor::zeros(&[h, input]));
                    params.insert(format!("{p}.u_{gate}"), Tensor::zeros(&[h, h]));
                    params.insert(format!("{p}.b_{gate}"), Tensor::zeros(&[h]));
                }
            }
        }
        params.insert("frame.w", Tensor::zeros(&[self.n_labels, 2 * h]));
        params.insert("frame.bias", Tensor::zeros(&[self.n_labels]));
        params.insert(
            "dom.conv.w",
            Tensor::zeros(&[c.conv_channels, c.conv_window * 2 * h]),
        );
        params.insert("dom.conv.bias", Tensor::zeros(&[c.conv_channels]));
        params.insert("dom.out.w", Tensor::zeros(&[c.n_domains, c.conv_channels]));
        params.insert("dom.out.bias", Tensor::zeros(&[c.n_domains]));

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, tensor) in params.iter_mut() {
            if is_bias(name) {
                continue;
            }
            let range = if name.starts_with("emb.") {
                EMBED_INIT_RANGE
            } else {
                weight_init_range(&tensor.shape)
            };
            tensor.fill_uniform(&mut rng, -range, range);
        }
        params
    }

    /// True for parameters owned by the domain head (downstream of the
    /// reversal point).
    pub fn is_head_param(name: &str) -> bool {
        name.starts_with("dom.")
    }

    // --- tape construction ---------------------------------------------

    fn embed_token(&self, tape: &mut Tape, tables: &[NodeId], feats: &[usize], marker: f64) -> NodeId {
        let mut parts = Vec::with_capacity(feats.len() + 1);
        for (col, &idx) in feats.iter().enumerate() {
            parts.push(tape.gather_row(tables[col], idx));
        }
        parts.push(tape.leaf(Tensor::vector(vec![marker])));
        tape.concat(&parts)
    }

    fn gru_direction(
        &self,
        tape: &mut Tape,
        prefix: &str,
        inputs: &[NodeId],
        reverse: bool,
    ) -> Vec<NodeId> {
        let h = self.config.hidden_size;
        let w_r = tape.param(&format!("{prefix}.w_r"));
        let w_z = tape.param(&format!("{prefix}.w_z"));
        let w_n = tape.param(&format!("{prefix}.w_n"));
        let u_r = tape.param(&format!("{prefix}.u_r"));
        let u_z = tape.param(&format!("{prefix}.u_z"));
        let u_n = tape.param(&format!("{prefix}.u_n"));
        let b_r = tape.param(&format!("{prefix}.b_r"));
        let b_z = tape.param(&format!("{prefix}.b_z"));
        let b_n = tape.param(&format!("{prefix}.b_n"));

        let mut state = tape.zeros(h);
        let mut states = vec![state; inputs.len()];
        let order: Vec<usize> = if reverse {
            (0..inputs.len()).rev().collect()
        } else {
            (0..inputs.len()).collect()
        };
        for t in order {
            let x = inputs[t];
            let rx = tape.matvec(w_r, x);
            let rh = tape.matvec(u_r, state);
            let r_pre = tape.add3(rx, rh, b_r);
            let r = tape.sigmoid(r_pre);

            let zx = tape.matvec(w_z, x);
            let zh = tape.matvec(u_z, state);
            let z_pre = tape.add3(zx, zh, b_z);
            let z = tape.sigmoid(z_pre);

            let nx = tape.matvec(w_n, x);
            let gated = tape.mul(r, state);
            let nh = tape.matvec(u_n, gated);
            let n_pre = tape.add3(nx, nh, b_n);
            let n = tape.tanh(n_pre);

            let keep = tape.mul(z, state);
            let one_minus_z = tape.one_minus(z);
            let fresh = tape.mul(one_minus_z, n);
            state = tape.add(keep, fresh);
            states[t] = state;
        }
        states
    }

    /// Per-token states of the last recurrent layer (2H each) for the
    /// unpadded prefix of one sample. `dropout` supplies optional masks
    /// indexed by layer boundary.
    fn encode_sample(
        &self,
        tape: &mut Tape,
        tables: &[NodeId],
        bs: &BatchSample,
        dropout: Option<&DropoutMasks>,
    ) -> Result<Vec<NodeId>> {
        if bs.len == 0 {
            return Err(Error::Training("empty sample in batch".into()));
        }
        let mut layer_in: Vec<NodeId> = (0..bs.len)
            .map(|t| self.embed_token(tape, tables, &bs.feats[t], bs.marker[t]))
            .collect();
        for layer in 0..self.config.n_layers {
            let fwd = self.gru_direction(tape, &format!("gru.l{layer}.fwd"), &layer_in, false);
            let bwd = self.gru_direction(tape, &format!("gru.l{layer}.bwd"), &layer_in, true);
            let mut out: Vec<NodeId> = fwd
                .into_iter()
                .zip(bwd)
                .map(|(f, b)| tape.concat(&[f, b]))
                .collect();
            if layer + 1 < self.config.n_layers {
                if let Some(masks) = dropout {
                    for (t, node) in out.iter_mut().enumerate() {
                        let m = tape.leaf(Tensor::vector(masks.mask(layer, t).to_vec()));
                        *node = tape.mul(*node, m);
                    }
                }
            }
            layer_in = out;
        }
        Ok(layer_in)
    }

    fn frame_logits(&self, tape: &mut Tape, states: &[NodeId]) -> Vec<NodeId> {
        let w = tape.param("frame.w");
        let b = tape.param("frame.bias");
        states
            .iter()
            .map(|s| {
                let l = tape.matvec(w, *s);
                tape.add(l, b)
            })
            .collect()
    }

    /// Domain branch on top of the (reversal-connected) encoder states:
    /// windowed convolution with tanh, max-pooling over time, decision
    /// layer. Sequences shorter than the window are zero-padded.
    fn domain_logits(&self, tape: &mut Tape, states: &[NodeId], grl_coeff: f64) -> NodeId {
        let c = &self.config;
        let h2 = 2 * c.hidden_size;
        let reversed: Vec<NodeId> = states.iter().map(|s| tape.grl(*s, grl_coeff)).collect();
        let conv_w = tape.param("dom.conv.w");
        let conv_b = tape.param("dom.conv.bias");
        let half = (c.conv_window - 1) / 2;
        let mut pooled_parts = Vec::with_capacity(reversed.len());
        for t in 0..reversed.len() {
            let mut window = Vec::with_capacity(c.conv_window);
            for k in 0..c.conv_window {
                let pos = t as isize + k as isize - half as isize;
                if pos < 0 || pos as usize >= reversed.len() {
                    window.push(tape.zeros(h2));
                } else {
                    window.push(reversed[pos as usize]);
                }
            }
            let stacked = tape.concat(&window);
            let conv = tape.matvec(conv_w, stacked);
            let conv = tape.add(conv, conv_b);
            pooled_parts.push(tape.tanh(conv));
        }
        let pooled = tape.max_over(&pooled_parts);
        let out_w = tape.param("dom.out.w");
        let out_b = tape.param("dom.out.bias");
        let logits = tape.matvec(out_w, pooled);
        tape.add(logits, out_b)
    }

    // --- public forward/loss API -----------------------------------------

    /// Per-token label distributions for every sample of the batch
    /// (inference mode: no dropout). Padding positions are excluded.
    pub fn forward_frame(
        &self,
        params: &Parameters,
        batch: &Batch,
    ) -> Result<Vec<LabelDistributionSequence>> {
        let mut out = Vec::with_capacity(batch.len());
        for bs in &batch.samples {
            let mut tape = Tape::new(params);
            let tables = self.embedding_tables(&mut tape);
            let states = self.encode_sample(&mut tape, &tables, bs, None)?;
            let logits = self.frame_logits(&mut tape, &states);
            let mut dists = Vec::with_capacity(bs.len);
            for l in logits {
                let sm = tape.softmax(l);
                dists.push(tape.value(sm).data.clone());
            }
            out.push(dists);
        }
        Ok(out)
    }

    /// Domain probability vectors per sample. The reversal connector uses
    /// `lambda` as its backward coefficient; the forward output is
    /// unaffected by it.
    pub fn forward_domain(
        &self,
        params: &Parameters,
        batch: &Batch,
        lambda: f64,
    ) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(batch.len());
        for bs in &batch.samples {
            let mut tape = Tape::new(params);
            let tables = self.embedding_tables(&mut tape);
            let states = self.encode_sample(&mut tape, &tables, bs, None)?;
            let logits = self.domain_logits(&mut tape, &states, lambda);
            let sm = tape.softmax(logits);
            out.push(tape.value(sm).data.clone());
        }
        Ok(out)
    }

    /// Frozen last-layer encoder states (inference) for probing: one
    /// vector of length 2·hidden per token.
    pub fn encode_states(&self, params: &Parameters, batch: &Batch) -> Result<Vec<Vec<Vec<f64>>>> {
        let mut out = Vec::with_capacity(batch.len());
        for bs in &batch.samples {
            let mut tape = Tape::new(params);
            let tables = self.embedding_tables(&mut tape);
            let states = self.encode_sample(&mut tape, &tables, bs, None)?;
            out.push(
                states
                    .iter()
                    .map(|s| tape.value(*s).data.clone())
                    .collect(),
            );
        }
        Ok(out)
    }

    fn embedding_tables(&self, tape: &mut Tape) -> Vec<NodeId> {
        self.vocab
            .columns
            .iter()
            .map(|name| tape.param(&format!("emb.{name}.table")))
            .collect()
    }

    /// True gradients of the domain loss with the reversal bypassed
    /// (identity backward): every reached parameter gets its raw descent
    /// direction.
    pub fn domain_gradients_bypassed(&self, params: &Parameters, batch: &Batch) -> Result<GradMap> {
        let mut tape = Tape::new(params);
        let tables = self.embedding_tables(&mut tape);
        let mut losses = Vec::with_capacity(batch.len());
        for bs in &batch.samples {
            let states = self.encode_sample(&mut tape, &tables, bs, None)?;
            // backward factor -(-1) = +1: the connector passes through
            let logits = self.domain_logits(&mut tape, &states, -1.0);
            losses.push(tape.cross_entropy_logits(logits, bs.domain_id)?);
        }
        let loss = tape.mean(&losses);
        Ok(tape.backward(loss))
    }

    /// Frame loss and, in adversarial mode, the domain loss over one
    /// batch, with gradients for both.
    ///
    /// The frame loss is the masked mean token cross-entropy over samples
    /// that carry gold labels; the domain loss is the mean sample
    /// cross-entropy against domain ids. `grad_adv` follows the
    /// [`crate::optim::GradientSet`] sign convention: head entries are
    /// negated so that one literal application of the update rule trains
    /// the head and reverses the trunk.
    pub fn batch_losses(
        &self,
        params: &Parameters,
        batch: &Batch,
        adversarial: bool,
        dropout_seed: Option<u64>,
    ) -> Result<BatchLosses> {
        if batch.is_empty() {
            return Err(Error::Training("empty batch".into()));
        }
        let mut tape = Tape::new(params);
        let tables = self.embedding_tables(&mut tape);

        let mut token_losses = Vec::new();
        let mut domain_losses = Vec::new();
        for (i, bs) in batch.samples.iter().enumerate() {
            let masks = dropout_seed.map(|seed| {
                DropoutMasks::generate(
                    seed.wrapping_add(i as u64),
                    self.config.n_layers.saturating_sub(1),
                    bs.len,
                    2 * self.config.hidden_size,
                    self.config.dropout_rate,
                )
            });
            let states = self.encode_sample(&mut tape, &tables, bs, masks.as_ref())?;
            if let Some(gold) = &bs.gold {
                let logits = self.frame_logits(&mut tape, &states);
                for (t, logit) in logits.iter().enumerate() {
                    if bs.mask[t] {
                        token_losses.push(tape.cross_entropy_logits(*logit, gold[t])?);
                    }
                }
            }
            if adversarial {
                // coefficient 1: pure sign flip between head and trunk;
                // λ scaling happens in the update rule
                let logits = self.domain_logits(&mut tape, &states, 1.0);
                domain_losses.push(tape.cross_entropy_logits(logits, bs.domain_id)?);
            }
        }
        if token_losses.is_empty() {
            return Err(Error::Training("batch has no gold-labeled tokens".into()));
        }
        let frame_loss = tape.mean(&token_losses);
        let loss_frame = tape.scalar_value(frame_loss);
        let grad_frame = tape.backward(frame_loss);

        let (loss_adv, grad_adv) = if adversarial {
            let adv_loss = tape.mean(&domain_losses);
            let value = tape.scalar_value(adv_loss);
            let raw = tape.backward(adv_loss);
            // raw: trunk carries -grad (through the flip), head carries
            // +grad. Negate everything so the literal update rule
            // θ ← θ − μ(g_frame − λ g_adv) yields Ganin-style updates.
            let signed: GradMap = raw
                .into_iter()
                .map(|(k, mut v)| {
                    for x in &mut v.data {
                        *x = -*x;
                    }
                    (k, v)
                })
                .collect();
            (value, signed)
        } else {
            (0.0, GradMap::new())
        };

        Ok(BatchLosses {
            loss_frame,
            loss_adv,
            grads: crate::optim::GradientSet {
                grad_frame,
                grad_adv,
            },
        })
    }
}

fn is_bias(name: &str) -> bool {
    name.rsplit('.').next().is_some_and(|seg| seg.starts_with('b'))
}

/// Losses and gradients of one batch.
#[derive(Debug)]
pub struct BatchLosses {
    pub loss_frame: f64,
    pub loss_adv: f64,
    pub grads: crate::optim::GradientSet,
}

/// Pre-generated inverted-dropout masks, one per (layer boundary, token).
struct DropoutMasks {
    masks: Vec<Vec<Vec<f64>>>,
}

impl DropoutMasks {
    fn generate(seed: u64, n_boundaries: usize, n_tokens: usize, width: usize, rate: f64) -> Self {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = 1.0 - rate;
        let masks = (0..n_boundaries)
            .map(|_| {
                (0..n_tokens)
                    .map(|_| {
                        (0..width)
                            .map(|_| {
                                if rate == 0.0 || rng.gen::<f64>() < keep {
                                    1.0 / keep
                                } else {
                                    0.0
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        DropoutMasks { masks }
    }

    fn mask(&self, boundary: usize, token: usize) -> &[f64] {
        &self.masks[boundary][token]
    }
}
