use telediar::corpus::synth::{generate_synthetic_corpus, SyntheticCorpusSpec};
use telediar::tagger::{train::train_tagger, TaggerConfig};

fn main() {
    let spec = SyntheticCorpusSpec {
        n_train: 8, n_test: 0, turn_pairs_per_conversation: 4,
        shared_vocab_fraction: 0.0, seed: 5,
        ..SyntheticCorpusSpec::default()
    };
    let corpus: Vec<_> = generate_synthetic_corpus(&spec).unwrap().train
        .into_iter().map(|c| c.transcript).collect();
    let config = TaggerConfig {
        filter_widths: vec![1, 2, 3], filters_per_width: vec![8, 8, 8],
        char_dim: 6, lstm_size: 16, epochs: 12, batch_size: 4,
        bptt_steps: 12, beam_width: 3,
        ..TaggerConfig::default()
    };
    let (model, _) = train_tagger(&corpus, None, &config).unwrap();

    // Embedding separation between a question word and an answer word.
    let (_, xq) = model.embed_word("satisfied").unwrap();
    let (_, xa) = model.embed_word("yes").unwrap();
    let dist: f64 = xq.iter().zip(xa.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = xq.iter().map(|v| v * v).sum::<f64>().sqrt();
    println!("|x_q| = {norm:.4}, |x_q - x_a| = {dist:.4}");

    let t = &corpus[0];
    let words: Vec<&str> = t.texts();
    let labels = t.labels().unwrap();
    let p_tf = model.forward_sequence(&words, None, Some(&labels)).unwrap();
    let p_free = model.forward_sequence(&words, None, None).unwrap();
    print!("teacher-forced: ");
    for (p, y) in p_tf.iter().zip(&labels).take(24) { print!("{}{:.2} ", if *y==1 {"C"} else {"I"}, p); }
    println!();
    print!("self-fed:       ");
    for (p, y) in p_free.iter().zip(&labels).take(24) { print!("{}{:.2} ", if *y==1 {"C"} else {"I"}, p); }
    println!();
}
