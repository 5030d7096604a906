use telediar::corpus::synth::{generate_synthetic_corpus, SyntheticCorpusSpec};
use telediar::tagger::{train::train_tagger, TaggerConfig};

fn main() {
    let spec = SyntheticCorpusSpec {
        n_train: 2, n_test: 0, turn_pairs_per_conversation: 3,
        shared_vocab_fraction: 0.0, seed: 5,
        ..SyntheticCorpusSpec::default()
    };
    let corpus: Vec<_> = generate_synthetic_corpus(&spec).unwrap().train
        .into_iter().map(|c| c.transcript).collect();
    println!("words: {:?}", corpus[0].texts().iter().take(12).collect::<Vec<_>>());
    println!("labels: {:?}", &corpus[0].labels().unwrap()[..12.min(corpus[0].len())]);
    let config = TaggerConfig {
        filter_widths: vec![1, 2, 3], filters_per_width: vec![8, 8, 8],
        char_dim: 6, lstm_size: 16,
        epochs: 2000, batch_size: 2, bptt_steps: 64,
        delay: 0,
        dropout: 0.0,
        teacher_forcing_start: 1.0, teacher_forcing_end: 1.0,
        plateau_threshold: -1e12,   // never decay (debug only)
        validation_fraction: 0.0,
        learning_rate: 0.1,
        ..TaggerConfig::default()
    };
    let (_, trace) = train_tagger(&corpus, None, &config).unwrap();
    for e in trace.epochs.iter().step_by(200) {
        println!("epoch {:2} loss {:.4} lr {:.5}", e.epoch, e.train_loss, e.learning_rate);
    }
    println!("final loss {:.4}", trace.epochs.last().unwrap().train_loss);
}
