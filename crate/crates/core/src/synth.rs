//! Deterministic generator of two-domain synthetic corpora: a
//! written-style domain and a spoken-style domain with shifted lexical
//! choices, a higher null-LU rate, oral fillers, and an ASR-noised copy
//! produced by corrupting the spoken sentences and projecting the gold
//! annotations onto the result.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::{project_annotations, Projection};
use crate::corpus::{
    Corpus, FeDecl, FrameAnnotation, FrameElement, FrameLexicon, Sample, Span, Token,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_train_written: usize,
    pub n_train_spoken: usize,
    /// Extra spoken samples appended after the first `n_train_spoken`;
    /// downstream splits treat them as a held-out test slice.
    pub n_test: usize,
    pub vocab_size: usize,
    pub n_frames: usize,
    pub fes_per_frame: usize,
    pub null_lu_rate_written: f64,
    pub null_lu_rate_spoken: f64,
    /// Probability of inserting an oral filler token at each sentence gap
    /// (spoken domain only).
    pub filler_rate_spoken: f64,
    /// Per-token corruption probability of the ASR simulation.
    pub asr_wer_target: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            n_train_written: 320,
            n_train_spoken: 200,
            n_test: 160,
            vocab_size: 120,
            n_frames: 6,
            fes_per_frame: 3,
            null_lu_rate_written: 0.13,
            null_lu_rate_spoken: 0.38,
            filler_rate_spoken: 0.25,
            asr_wer_target: 0.15,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("null_lu_rate_written", self.null_lu_rate_written),
            ("null_lu_rate_spoken", self.null_lu_rate_spoken),
            ("filler_rate_spoken", self.filler_rate_spoken),
            ("asr_wer_target", self.asr_wer_target),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if self.n_train_written == 0 || self.n_train_spoken == 0 || self.n_test == 0 {
            return Err(Error::InvalidConfig("sample counts must be > 0".into()));
        }
        if self.n_frames == 0 || self.fes_per_frame == 0 || self.vocab_size == 0 {
            return Err(Error::InvalidConfig(
                "n_frames, fes_per_frame and vocab_size must be > 0".into(),
            ));
        }
        if self.null_lu_rate_spoken < self.null_lu_rate_written {
            return Err(Error::InvalidConfig(
                "null_lu_rate_spoken must be >= null_lu_rate_written".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainStyle {
    Written,
    Spoken,
}

/// Everything one call to [`generate`] produces.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    /// Written-style corpus, domain id 0.
    pub written: Corpus,
    /// Spoken-style corpus (manual-transcript quality), domain id 1.
    pub spoken_gold: Corpus,
    /// ASR-noised copy of `spoken_gold` with projected annotations.
    pub spoken_asr: Corpus,
    /// For each `spoken_asr` sample, the index of its `spoken_gold` source.
    pub asr_source_index: Vec<usize>,
    /// Per-sample WER of each `spoken_asr` sample.
    pub asr_wer: Vec<f64>,
    /// Spoken samples dropped because the noise deleted the whole LU.
    pub asr_excluded: usize,
    pub lexicon: FrameLexicon,
}

// Fixed name pools; generic FrameNet-style inventory.
const FRAME_POOL: &[&str] = &[
    "Attack",
    "Statement",
    "Ingestion",
    "Leadership",
    "Motion",
    "Commerce",
    "Creation",
    "Perception",
    "Request",
    "Building",
];
const CORE_FE_POOL: &[&str] = &["Agent", "Theme", "Goal", "Source", "Topic"];
const NONCORE_FE_POOL: &[&str] = &["Place", "Time"];

const SYLLABLES: &[&str] = &[
    "ba", "re", "mi", "to", "lu", "san", "ve", "ko", "da", "pol", "gar", "nef",
];

const WRITTEN_FUNCTION: &[&str] = &["le", "la", "les", "un", "une", "des", "ce", "cette"];
const SPOKEN_FUNCTION: &[&str] = &["le", "la", "l", "un", "ca", "ce", "y", "en"];
const FILLERS: &[&str] = &["euh", "ben", "hein", "quoi", "voila", "bon"];
const WRITTEN_PRONOUNS: &[&str] = &["il", "elle", "on", "ils"];
const SPOKEN_PRONOUNS: &[&str] = &["il", "tu", "on", "ca", "je"];
const IDIOM_WRITTEN: &[&str] = &["pour", "ainsi", "dire", "en", "quelque", "sorte"];
const IDIOM_SPOKEN: &[&str] = &["c'est", "a", "dire", "comment", "disons", "donc"];

// Role-specific span introducers.
fn fe_marker(fe: &str) -> &'static str {
    match fe {
        "Agent" => "par",
        "Theme" => "avec",
        "Goal" => "vers",
        "Source" => "depuis",
        "Topic" => "sur",
        "Place" => "dans",
        "Time" => "pendant",
        _ => "de",
    }
}

fn synth_word(id: usize) -> String {
    let a = SYLLABLES[id % SYLLABLES.len()];
    let b = SYLLABLES[(id / SYLLABLES.len()) % SYLLABLES.len()];
    let c = id / (SYLLABLES.len() * SYLLABLES.len());
    if c == 0 {
        format!("{a}{b}")
    } else {
        format!("{a}{b}{c}")
    }
}

/// The fixed vocabulary pools derived from a config (no randomness).
pub struct SynthWorld {
    pub lexicon: FrameLexicon,
    frames: Vec<String>,
    /// frames[i] -> trigger lemmas
    triggers: Vec<Vec<String>>,
    /// (frame, fe) -> (written-half, spoken-half) content words
    content: Vec<Vec<(Vec<String>, Vec<String>)>>,
    /// one lemma per frame also licensed for a second frame (ambiguity)
    frame_pos: Vec<&'static str>,
}

impl SynthWorld {
    pub fn build(config: &SynthConfig) -> Result<Self> {
        config.validate()?;
        let frames: Vec<String> = (0..config.n_frames)
            .map(|i| {
                let base = FRAME_POOL[i % FRAME_POOL.len()].to_string();
                if i < FRAME_POOL.len() {
                    base
                } else {
                    format!("{base}{}", i / FRAME_POOL.len())
                }
            })
            .collect();
        // Alternate verbal/nominal triggers across frames.
        let frame_pos: Vec<&'static str> = (0..config.n_frames)
            .map(|i| if i % 3 == 2 { "N" } else { "V" })
            .collect();

        let mut lexicon = FrameLexicon::default();
        let mut triggers = Vec::new();
        let mut content = Vec::new();
        let mut word_id = 0usize;
        let per_pool = (config.vocab_size / (config.n_frames * config.fes_per_frame)).max(4);

        for (i, frame) in frames.iter().enumerate() {
            // three trigger lemmas per frame
            let mut lemmas = Vec::new();
            for k in 0..3 {
                let lemma = format!("{}er{}", synth_word(1000 + i * 7 + k), i);
                lemmas.push(lemma);
            }
            // the first lemma of every even frame is ambiguous: it also
            // licenses the next frame
            for (k, lemma) in lemmas.iter().enumerate() {
                let mut set: std::collections::BTreeSet<String> = [frame.clone()].into();
                if k == 0 && i + 1 < frames.len() && i % 2 == 0 {
                    set.insert(frames[i + 1].clone());
                }
                lexicon
                    .lu_to_frames
                    .entry(lemma.clone())
                    .or_default()
                    .extend(set);
            }
            triggers.push(lemmas);

            let mut fes = std::collections::BTreeSet::new();
            let mut pools = Vec::new();
            for j in 0..config.fes_per_frame {
                let (name, core) = if j + 1 == config.fes_per_frame && config.fes_per_frame > 1 {
                    (NONCORE_FE_POOL[i % NONCORE_FE_POOL.len()].to_string(), false)
                } else {
                    (CORE_FE_POOL[j % CORE_FE_POOL.len()].to_string(), true)
                };
                fes.insert(FeDecl {
                    name: name.clone(),
                    core,
                });
                let written: Vec<String> =
                    (0..per_pool).map(|_| { let w = synth_word(word_id); word_id += 1; w }).collect();
                let spoken: Vec<String> =
                    (0..per_pool).map(|_| { let w = synth_word(word_id); word_id += 1; w }).collect();
                pools.push((written, spoken));
            }
            lexicon.frame_to_fes.insert(frame.clone(), fes);
            content.push(pools);
        }
        lexicon.validate()?;
        Ok(SynthWorld {
            lexicon,
            frames,
            triggers,
            content,
            frame_pos,
        })
    }

    fn fe_decls(&self, frame_idx: usize) -> Vec<FeDecl> {
        self.lexicon.frame_to_fes[&self.frames[frame_idx]]
            .iter()
            .cloned()
            .collect()
    }

    fn fe_pool(&self, frame_idx: usize, fe_name: &str) -> &(Vec<String>, Vec<String>) {
        // pools were pushed in construction order (cores first, then the
        // non-core slot); recover that order to index them by name
        let n = self.content[frame_idx].len();
        let idx = (0..n)
            .position(|j| {
                let name = if j + 1 == n && n > 1 {
                    NONCORE_FE_POOL[frame_idx % NONCORE_FE_POOL.len()]
                } else {
                    CORE_FE_POOL[j % CORE_FE_POOL.len()]
                };
                name == fe_name
            })
            .unwrap();
        &self.content[frame_idx][idx]
    }
}

fn make_token(surface: &str, lemma: &str, pos: &str, first: bool) -> Token {
    let cap = if first { "c" } else { "l" };
    let lenb = match surface.len() {
        0..=3 => "s",
        4..=6 => "m",
        _ => "l",
    };
    Token::new(
        surface,
        lemma,
        pos,
        vec![cap.to_string(), lenb.to_string()],
    )
}

fn content_word<'w>(
    pool: &'w (Vec<String>, Vec<String>),
    style: DomainStyle,
    rng: &mut ChaCha8Rng,
) -> &'w str {
    // draw from the domain's preferred half most of the time
    let (preferred, other) = match style {
        DomainStyle::Written => (&pool.0, &pool.1),
        DomainStyle::Spoken => (&pool.1, &pool.0),
    };
    let source = if rng.gen::<f64>() < 0.8 { preferred } else { other };
    source.choose(rng).unwrap()
}

/// Generate one sample. Used by [`generate`] for both domains.
fn generate_sample(
    world: &SynthWorld,
    style: DomainStyle,
    null_rate: f64,
    filler_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Sample {
    let n_frames = world.frames.len();
    // domain-dependent frame prior: written favors high-index frames,
    // spoken favors low-index frames
    let weights: Vec<f64> = (0..n_frames)
        .map(|i| match style {
            DomainStyle::Written => (i + 1) as f64,
            DomainStyle::Spoken => (n_frames - i) as f64,
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut pick = rng.gen::<f64>() * total;
    let mut frame_idx = 0;
    for (i, w) in weights.iter().enumerate() {
        if pick < *w {
            frame_idx = i;
            break;
        }
        pick -= w;
    }

    let trigger_lemma = world.triggers[frame_idx].choose(rng).unwrap().clone();
    let trigger_pos = world.frame_pos[frame_idx];
    let is_null = rng.gen::<f64>() < null_rate;

    let (function_pool, pronoun_pool, idiom_pool): (&[&str], &[&str], &[&str]) = match style {
        DomainStyle::Written => (WRITTEN_FUNCTION, WRITTEN_PRONOUNS, IDIOM_WRITTEN),
        DomainStyle::Spoken => (SPOKEN_FUNCTION, SPOKEN_PRONOUNS, IDIOM_SPOKEN),
    };

    let mut tokens: Vec<Token> = Vec::new();
    let maybe_filler = |tokens: &mut Vec<Token>, rng: &mut ChaCha8Rng| {
        if style == DomainStyle::Spoken && rng.gen::<f64>() < filler_rate {
            let f = FILLERS.choose(rng).unwrap();
            tokens.push(make_token(f, f, "F", false));
        }
    };

    if is_null {
        // idiomatic use: trigger embedded in a fixed-expression context
        let left = rng.gen_range(1..3);
        for _ in 0..left {
            let w = idiom_pool.choose(rng).unwrap();
            tokens.push(make_token(w, w, "X", tokens.is_empty()));
        }
        let target_start = tokens.len();
        let surface = trigger_inflection(&trigger_lemma, trigger_pos, rng);
        tokens.push(make_token(&surface, &trigger_lemma, trigger_pos, false));
        let right = rng.gen_range(1..3);
        for _ in 0..right {
            maybe_filler(&mut tokens, rng);
            let w = idiom_pool.choose(rng).unwrap();
            tokens.push(make_token(w, w, "X", false));
        }
        let target = Span::new(target_start, target_start);
        return Sample {
            tokens,
            target,
            gold: Some(FrameAnnotation::null(target)),
        };
    }

    let decls = world.fe_decls(frame_idx);
    // first core FE realized before the trigger as the subject
    let subject_decl = decls.iter().find(|d| d.core).cloned();
    let mut elements: Vec<FrameElement> = Vec::new();

    let pron = pronoun_pool.choose(rng).unwrap();
    tokens.push(make_token(pron, pron, "P", true));
    maybe_filler(&mut tokens, rng);

    if let Some(decl) = &subject_decl {
        if rng.gen::<f64>() < 0.85 {
            let pool = world.fe_pool(frame_idx, &decl.name);
            let start = tokens.len();
            let span_len = rng.gen_range(1..=2);
            for _ in 0..span_len {
                let w = content_word(pool, style, rng);
                tokens.push(make_token(w, w, "N", false));
            }
            elements.push(FrameElement {
                name: decl.name.clone(),
                span: Span::new(start, tokens.len() - 1),
                core: decl.core,
            });
        }
    }

    let target_start = tokens.len();
    let surface = trigger_inflection(&trigger_lemma, trigger_pos, rng);
    tokens.push(make_token(&surface, &trigger_lemma, trigger_pos, false));
    let target = Span::new(target_start, target_start);

    for decl in decls.iter() {
        if Some(decl) == subject_decl.as_ref() {
            continue;
        }
        let p_include = if decl.core { 0.85 } else { 0.45 };
        if rng.gen::<f64>() >= p_include {
            continue;
        }
        maybe_filler(&mut tokens, rng);
        let start = tokens.len();
        // oral style frequently drops the role marker; written style
        // always spells it out
        let use_marker = style == DomainStyle::Written || rng.gen::<f64>() < 0.45;
        if use_marker {
            let marker = fe_marker(&decl.name);
            tokens.push(make_token(marker, marker, "D", false));
        }
        let pool = world.fe_pool(frame_idx, &decl.name);
        let span_len = rng.gen_range(1..=2);
        for _ in 0..span_len {
            let w = content_word(pool, style, rng);
            tokens.push(make_token(w, w, "N", false));
        }
        elements.push(FrameElement {
            name: decl.name.clone(),
            span: Span::new(start, tokens.len() - 1),
            core: decl.core,
        });
    }

    // occasional trailing function word
    if rng.gen::<f64>() < 0.5 {
        maybe_filler(&mut tokens, rng);
        let w = function_pool.choose(rng).unwrap();
        tokens.push(make_token(w, w, "D", false));
    }

    Sample {
        tokens,
        target,
        gold: Some(FrameAnnotation {
            lu_span: target,
            frame: Some(world.frames[frame_idx].clone()),
            elements,
        }),
    }
}

fn trigger_inflection(lemma: &str, pos: &str, rng: &mut ChaCha8Rng) -> String {
    if pos == "V" {
        let suffixes = ["e", "a", "ait", "ent"];
        format!("{lemma}{}", suffixes.choose(rng).unwrap())
    } else {
        lemma.to_string()
    }
}

// --- ASR noise --------------------------------------------------------------

/// Relative weights of the corruption operations.
#[derive(Debug, Clone, Copy)]
pub struct NoiseMix {
    pub substitution: f64,
    pub deletion: f64,
    pub insertion: f64,
}

impl Default for NoiseMix {
    fn default() -> Self {
        NoiseMix {
            substitution: 0.6,
            deletion: 0.25,
            insertion: 0.15,
        }
    }
}

/// Confusable short function words (homophone-style swaps).
const CONFUSIONS: &[(&str, &str)] = &[
    ("a", "à"),
    ("est", "et"),
    ("le", "les"),
    ("ce", "se"),
    ("ou", "où"),
    ("la", "là"),
    ("dans", "den"),
    ("par", "part"),
];

fn confuse(surface: &str, rng: &mut ChaCha8Rng) -> String {
    for (a, b) in CONFUSIONS {
        if surface == *a {
            return (*b).to_string();
        }
        if surface == *b {
            return (*a).to_string();
        }
    }
    // generic acoustic confusion: perturb one character
    let mut chars: Vec<char> = surface.chars().collect();
    let vowels = ['a', 'e', 'i', 'o', 'u'];
    let pos = rng.gen_range(0..chars.len());
    let repl = vowels[rng.gen_range(0..vowels.len())];
    if chars[pos] == repl {
        chars[pos] = 'y';
    } else {
        chars[pos] = repl;
    }
    chars.into_iter().collect()
}

/// Corrupt a sentence with substitutions, deletions and insertions, each
/// drawn per token with total probability `rate`. Deletions and
/// substitutions prefer short words: a deletion drawn for a word longer
/// than 4 characters degrades to a substitution.
pub fn inject_asr_noise(sentence: &[Token], rate: f64, rng: &mut ChaCha8Rng) -> Vec<Token> {
    inject_asr_noise_with_mix(sentence, rate, NoiseMix::default(), rng)
}

pub fn inject_asr_noise_with_mix(
    sentence: &[Token],
    rate: f64,
    mix: NoiseMix,
    rng: &mut ChaCha8Rng,
) -> Vec<Token> {
    let total = mix.substitution + mix.deletion + mix.insertion;
    let mut out = Vec::with_capacity(sentence.len());
    for tok in sentence {
        if rng.gen::<f64>() >= rate {
            out.push(tok.clone());
            continue;
        }
        let mut pick = rng.gen::<f64>() * total;
        let op = if pick < mix.substitution {
            0
        } else {
            pick -= mix.substitution;
            if pick < mix.deletion {
                1
            } else {
                2
            }
        };
        match op {
            0 => {
                let surface = confuse(&tok.surface, rng);
                out.push(asr_token(&surface, tok));
            }
            1 => {
                if tok.surface.len() > 4 {
                    // long words rarely vanish; degrade to substitution
                    let surface = confuse(&tok.surface, rng);
                    out.push(asr_token(&surface, tok));
                }
                // else: token deleted
            }
            _ => {
                out.push(tok.clone());
                let filler = FILLERS[rng.gen_range(0..FILLERS.len())];
                out.push(make_token(filler, filler, "X", false));
            }
        }
    }
    out
}

fn asr_token(surface: &str, _orig: &Token) -> Token {
    // ASR output is re-analyzed from scratch: POS and features are
    // recomputed from the hypothesis surface
    make_token(surface, &surface.to_lowercase(), "X", false)
}

/// Generate the full two-domain dataset.
///
/// Deterministic for a fixed config: corpora, projections and WER values
/// are identical across calls.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    let world = SynthWorld::build(config)?;

    let mut written = Corpus::new("synth-written", 0);
    let mut rng_w = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(3).wrapping_add(1));
    for _ in 0..config.n_train_written {
        written.samples.push(generate_sample(
            &world,
            DomainStyle::Written,
            config.null_lu_rate_written,
            0.0,
            &mut rng_w,
        ));
    }

    let mut spoken_gold = Corpus::new("synth-spoken-gold", 1);
    let mut rng_s = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(3).wrapping_add(2));
    for _ in 0..(config.n_train_spoken + config.n_test) {
        spoken_gold.samples.push(generate_sample(
            &world,
            DomainStyle::Spoken,
            config.null_lu_rate_spoken,
            config.filler_rate_spoken,
            &mut rng_s,
        ));
    }

    let mut spoken_asr = Corpus::new("synth-spoken-asr", 1);
    let mut asr_source_index = Vec::new();
    let mut asr_wer = Vec::new();
    let mut asr_excluded = 0usize;
    let mut rng_n = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(3).wrapping_add(3));
    for (i, sample) in spoken_gold.samples.iter().enumerate() {
        let noisy = inject_asr_noise(&sample.tokens, config.asr_wer_target, &mut rng_n);
        match project_annotations(sample, &noisy)? {
            Projection::Projected { sample, wer, .. } => {
                spoken_asr.samples.push(sample);
                asr_source_index.push(i);
                asr_wer.push(wer);
            }
            Projection::LuDeleted { .. } => asr_excluded += 1,
        }
    }

    written.validate(Some(&world.lexicon))?;
    spoken_gold.validate(Some(&world.lexicon))?;
    spoken_asr.validate(None)?;

    Ok(SynthOutput {
        written,
        spoken_gold,
        spoken_asr,
        asr_source_index,
        asr_wer,
        asr_excluded,
        lexicon: world.lexicon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::write_corpus;

    #[test]
    fn generation_is_deterministic() {
        let config = SynthConfig {
            n_train_written: 30,
            n_train_spoken: 20,
            n_test: 10,
            ..SynthConfig::default()
        };
        let a = generate(&config).unwrap();
        let b = generate(&config).unwrap();
        assert_eq!(write_corpus(&a.written).unwrap(), write_corpus(&b.written).unwrap());
        assert_eq!(
            write_corpus(&a.spoken_asr).unwrap(),
            write_corpus(&b.spoken_asr).unwrap()
        );
        assert_eq!(a.asr_wer, b.asr_wer);

        let c = generate(&SynthConfig {
            seed: 8,
            ..config
        })
        .unwrap();
        assert_ne!(
            write_corpus(&a.written).unwrap(),
            write_corpus(&c.written).unwrap()
        );
    }

    #[test]
    fn degenerate_null_rate_makes_every_spoken_sample_null() {
        let config = SynthConfig {
            n_train_written: 10,
            n_train_spoken: 25,
            n_test: 5,
            null_lu_rate_written: 1.0,
            null_lu_rate_spoken: 1.0,
            ..SynthConfig::default()
        };
        let out = generate(&config).unwrap();
        assert!(out
            .spoken_gold
            .samples
            .iter()
            .all(|s| s.gold.as_ref().unwrap().is_null()));
    }

    #[test]
    fn invalid_config_rejected() {
        let mut config = SynthConfig::default();
        config.null_lu_rate_written = 0.5;
        config.null_lu_rate_spoken = 0.1;
        assert!(generate(&config).is_err());
        let mut config = SynthConfig::default();
        config.asr_wer_target = 1.5;
        assert!(config.validate().is_err());
    }

    #[test]
    fn zero_noise_is_identity() {
        let config = SynthConfig::default();
        let world = SynthWorld::build(&config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sample = generate_sample(&world, DomainStyle::Written, 0.0, 0.0, &mut rng);
        let noisy = inject_asr_noise(&sample.tokens, 0.0, &mut rng);
        assert_eq!(noisy, sample.tokens);
    }

    #[test]
    fn substitution_only_at_rate_one_replaces_every_token() {
        let config = SynthConfig::default();
        let world = SynthWorld::build(&config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sample = generate_sample(&world, DomainStyle::Written, 0.0, 0.0, &mut rng);
        let mix = NoiseMix {
            substitution: 1.0,
            deletion: 0.0,
            insertion: 0.0,
        };
        let noisy = inject_asr_noise_with_mix(&sample.tokens, 1.0, mix, &mut rng);
        assert_eq!(noisy.len(), sample.tokens.len());
        for (a, b) in sample.tokens.iter().zip(&noisy) {
            assert_ne!(a.surface, b.surface);
        }
    }

    #[test]
    fn corpus_wer_lands_near_target() {
        // law of large numbers over >= 500 spoken sentences
        let config = SynthConfig {
            n_train_written: 1,
            n_train_spoken: 500,
            n_test: 10,
            asr_wer_target: 0.15,
            ..SynthConfig::default()
        };
        let out = generate(&config).unwrap();
        let mut edits = 0usize;
        let mut ref_tokens = 0usize;
        for (k, &src) in out.asr_source_index.iter().enumerate() {
            let gold = &out.spoken_gold.samples[src];
            edits += (out.asr_wer[k] * gold.tokens.len() as f64).round() as usize;
            ref_tokens += gold.tokens.len();
        }
        let wer = edits as f64 / ref_tokens as f64;
        assert!(
            (0.10..=0.20).contains(&wer),
            "corpus WER {wer} outside [0.10, 0.20]"
        );
    }

    #[test]
    fn corruption_count_concentrates() {
        // 10_000 tokens at rate 0.15 -> corruption events in [1300, 1700];
        // count edit operations via the aligner
        let config = SynthConfig::default();
        let world = SynthWorld::build(&config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut gen_rng = ChaCha8Rng::seed_from_u64(4);
        let mut total_edits = 0usize;
        let mut total_tokens = 0usize;
        while total_tokens < 10_000 {
            let sample = generate_sample(&world, DomainStyle::Spoken, 0.2, 0.2, &mut gen_rng);
            let noisy = inject_asr_noise(&sample.tokens, 0.15, &mut rng);
            let ref_s: Vec<&str> = sample.tokens.iter().map(|t| t.surface.as_str()).collect();
            let hyp_s: Vec<&str> = noisy.iter().map(|t| t.surface.as_str()).collect();
            total_edits += crate::align::align(&ref_s, &hyp_s).distance();
            total_tokens += sample.tokens.len();
        }
        let expected = total_tokens as f64 * 0.15;
        assert!(
            (total_edits as f64) > expected - 400.0 && (total_edits as f64) < expected + 400.0,
            "edits {total_edits} vs expected {expected} over {total_tokens} tokens"
        );
    }

    #[test]
    fn frame_distributions_differ_between_domains() {
        let config = SynthConfig {
            n_train_written: 300,
            n_train_spoken: 290,
            n_test: 10,
            null_lu_rate_written: 0.0,
            null_lu_rate_spoken: 0.0,
            ..SynthConfig::default()
        };
        let out = generate(&config).unwrap();
        let count = |corpus: &Corpus| {
            let mut m = std::collections::BTreeMap::new();
            for s in &corpus.samples {
                if let Some(f) = &s.gold.as_ref().unwrap().frame {
                    *m.entry(f.clone()).or_insert(0.0) += 1.0;
                }
            }
            m
        };
        let cw = count(&out.written);
        let cs = count(&out.spoken_gold);
        // chi-squared of spoken counts against written-derived expectations
        let total_w: f64 = cw.values().sum();
        let total_s: f64 = cs.values().sum();
        let mut chi2 = 0.0;
        for f in out.lexicon.frames() {
            let e = cw.get(f).copied().unwrap_or(0.5) / total_w * total_s;
            let o = cs.get(f).copied().unwrap_or(0.0);
            chi2 += (o - e).powi(2) / e.max(0.5);
        }
        assert!(chi2 > 30.0, "chi-squared {chi2} too small: priors too close");
    }

    #[test]
    fn spoken_corpus_contains_fillers_written_does_not() {
        let config = SynthConfig {
            n_train_written: 50,
            n_train_spoken: 40,
            n_test: 10,
            ..SynthConfig::default()
        };
        let out = generate(&config).unwrap();
        let has_filler = |c: &Corpus| {
            c.samples
                .iter()
                .flat_map(|s| &s.tokens)
                .any(|t| FILLERS.contains(&t.surface.as_str()))
        };
        assert!(!has_filler(&out.written));
        assert!(has_filler(&out.spoken_gold));
    }

    #[test]
    fn generated_corpora_round_trip_through_the_file_format() {
        let config = SynthConfig {
            n_train_written: 20,
            n_train_spoken: 15,
            n_test: 5,
            ..SynthConfig::default()
        };
        let out = generate(&config).unwrap();
        let text = write_corpus(&out.written).unwrap();
        let back = crate::format::parse_corpus(&text, &out.lexicon, "synth-written", 0).unwrap();
        assert_eq!(back.samples, out.written.samples);
    }
}
