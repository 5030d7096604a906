use telediar::corpus::synth::{generate_synthetic_corpus, SyntheticCorpusSpec};
use telediar::tagger::{train::train_tagger, TaggerConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let lstm: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(10);
    let nf: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(4);
    let thresh: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let bptt: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(12);
    let lr: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let delay: usize = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(2);

    let spec = SyntheticCorpusSpec {
        n_train: 8,
        n_test: 0,
        turn_pairs_per_conversation: 4,
        shared_vocab_fraction: 0.0,
        seed: 5,
        ..SyntheticCorpusSpec::default()
    };
    let corpus: Vec<_> = generate_synthetic_corpus(&spec)
        .unwrap()
        .train
        .into_iter()
        .map(|c| c.transcript)
        .collect();
    let config = TaggerConfig {
        filter_widths: vec![1, 2, 3],
        filters_per_width: vec![nf, nf, nf],
        char_dim: 6,
        lstm_size: lstm,
        epochs,
        batch_size: args.get(8).and_then(|s| s.parse().ok()).unwrap_or(4),
        bptt_steps: bptt,
        beam_width: 3,
        plateau_threshold: thresh,
        learning_rate: lr,
        delay,
        ..TaggerConfig::default()
    };
    let t0 = std::time::Instant::now();
    let (model, trace) = train_tagger(&corpus, None, &config).unwrap();
    for e in &trace.epochs {
        println!(
            "epoch {:2} loss {:.4} val {:.4} lr {:.5} tf {:.2}",
            e.epoch, e.train_loss, e.validation_loss, e.learning_rate, e.teacher_forcing
        );
    }
    let mut errors = 0usize;
    let mut total = 0usize;
    for t in &corpus {
        let words: Vec<&str> = t.texts();
        let labels = t.labels().unwrap();
        let decoded = model.decode_words(&words, None, 3).unwrap();
        for (d, y) in decoded.labels.iter().zip(&labels) {
            total += 1;
            if d != y {
                errors += 1;
            }
        }
    }
    println!(
        "train WDER {:.2}% ({errors}/{total}) in {:.1}s",
        100.0 * errors as f64 / total as f64,
        t0.elapsed().as_secs_f64()
    );
}
