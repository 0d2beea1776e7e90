// scratch calibration harness, removed before finalizing
use frametag::align::{bucket_by_wer, WerBuckets};
use frametag::corpus::Corpus;
use frametag::eval::*;
use frametag::labels::LabelSpace;
use frametag::net::*;
use frametag::synth::*;
use frametag::train::*;
use std::time::Instant;

fn split(corpus: &Corpus, fractions: &[f64], seed: u64) -> Vec<Corpus> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut out = Vec::new();
    let mut offset = 0usize;
    for (i, f) in fractions.iter().enumerate() {
        let n = if i + 1 == fractions.len() { corpus.len() - offset } else { (corpus.len() as f64 * f) as usize };
        let mut c = Corpus::new(format!("{}-{}", corpus.name, i), corpus.domain_id);
        for &k in &order[offset..offset + n] { c.samples.push(corpus.samples[k].clone()); }
        offset += n;
        out.push(c);
    }
    out
}

fn median(mut v: Vec<f64>) -> f64 { v.sort_by(|a,b| a.partial_cmp(b).unwrap()); v[v.len()/2] }

fn main() {
    let t0 = Instant::now();
    let mut base_asr_ai = vec![]; let mut adv_asr_ai = vec![];
    let mut base_probe = vec![]; let mut adv_probe = vec![];
    let mut adv_low = vec![]; let mut adv_high = vec![];
    for seed in [7u64, 8, 9, 10, 11] {
        let synth = generate(&SynthConfig { seed, ..SynthConfig::default() }).unwrap();
        let space = LabelSpace::from_lexicon(&synth.lexicon).unwrap();
        let w = split(&synth.written, &[0.6, 0.2, 0.2], seed.wrapping_add(100));
        let (w_train, w_val, w_test) = (&w[0], &w[1], &w[2]);
        let n_test = 160usize;
        let n_sp_train = synth.spoken_gold.len() - n_test;
        let mut sp_train_full = Corpus::new("sp-train", 1);
        sp_train_full.samples = synth.spoken_gold.samples[..n_sp_train].to_vec();
        let sp = split(&sp_train_full, &[0.75, 0.25], seed.wrapping_add(200));
        let (sp_train, sp_val) = (&sp[0], &sp[1]);
        let mut asr_test = Corpus::new("asr-test", 1);
        let mut asr_test_wer = Vec::new();
        let mut asr_train = Corpus::new("asr-train", 1);
        for (k, &src) in synth.asr_source_index.iter().enumerate() {
            if src >= n_sp_train {
                asr_test.samples.push(synth.spoken_asr.samples[k].clone());
                asr_test_wer.push(synth.asr_wer[k]);
            } else {
                asr_train.samples.push(synth.spoken_asr.samples[k].clone());
            }
        }
        let mut val = Corpus::new("val", 0);
        val.samples.extend(w_val.samples.iter().cloned());
        val.samples.extend(sp_val.samples.iter().cloned());

        let net_cfg = NetConfig {
            lemma_dim: 12, pos_dim: 4, extra_dim: 3,
            hidden_size: 16, n_layers: 4, conv_window: 3, conv_channels: 12,
            n_domains: 2, dropout_rate: 0.0,
        };
        let vocab = Vocab::build(&[w_train, sp_train, &asr_train]).unwrap();
        let net = TaggerNet::new(net_cfg, vocab, space.len()).unwrap();
        let corpora: Vec<&Corpus> = vec![w_train, sp_train, &asr_train];
        let grid = default_delta_grid();

        let mut results = vec![];
        for mode in [false, true] {
            let cfg = TrainConfig { learning_rate: 0.2, batch_size: 16, epochs: 18, seed, adversarial: mode };
            let run = train(&net, &corpora, &val, &synth.lexicon, &space, &cfg).unwrap();
            let sweep = sweep_delta(&net, &run.best_params, &asr_test, &synth.lexicon, &space, &grid).unwrap();
            // per-bucket AI at the fmax point
            let cfgd = frametag::decode::DecoderConfig { delta: sweep.fmax_delta, ..Default::default() };
            let preds = predict_corpus(&net, &run.best_params, &asr_test, &synth.lexicon, &space, &cfgd).unwrap();
            let gold: Vec<_> = asr_test.samples.iter().map(|s| s.gold.clone().unwrap()).collect();
            let buckets = WerBuckets::default();
            let groups = bucket_by_wer(&asr_test_wer, &buckets);
            let mut per_bucket = vec![];
            for idx in &groups {
                if idx.is_empty() { per_bucket.push(f64::NAN); continue; }
                let g: Vec<_> = idx.iter().map(|&i| gold[i].clone()).collect();
                let p: Vec<_> = idx.iter().map(|&i| preds[i].clone()).collect();
                per_bucket.push(score_arg_id_soft(&g, &p).unwrap().f1);
            }
            results.push((sweep.ai_fmax(), per_bucket, run.best_params.clone()));
        }
        let mut sp_test = Corpus::new("sp-test", 1);
        sp_test.samples = synth.spoken_gold.samples[n_sp_train..].to_vec();
        let probe_corps: Vec<&Corpus> = vec![w_test, &sp_test];
        let (pa, pb) = probe_domain_invariance(&net, &results[0].2, &results[1].2, &probe_corps, &space, &ProbeConfig::default()).unwrap();
        println!("seed {seed}: base AI/asr {:.3} adv {:.3} | buckets base {:?} adv {:?} | probe base {:.3} adv {:.3}",
            results[0].0, results[1].0,
            results[0].1.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>(),
            results[1].1.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>(), pa, pb);
        base_asr_ai.push(results[0].0); adv_asr_ai.push(results[1].0);
        base_probe.push(pa); adv_probe.push(pb);
        adv_low.push(results[1].1[0] - results[0].1[0]);
        let hi = results[1].1.len()-1;
        adv_high.push(results[1].1[hi] - results[0].1[hi]);
    }
    println!("== medians: base AI {:.3} adv AI {:.3} | probe base {:.3} adv {:.3} | adv_low {:.3} adv_high {:.3}",
        median(base_asr_ai), median(adv_asr_ai), median(base_probe), median(adv_probe), median(adv_low), median(adv_high));
    println!("total {:?}", t0.elapsed());
}
