//! Input generators shared by the benchmarks.

use mediaprofile::features::{fit_tfidf, SparseVector, TokenizerSettings};
use mediaprofile::{Label, TaskKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: [&str; 24] = [
    "progressive", "conservative", "balanced", "neutral", "sourcing", "rigorous", "clickbait",
    "fabricated", "claims", "framing", "policy", "immigration", "climate", "abortion", "guns",
    "economy", "reporting", "editorial", "opinion", "coverage", "transparent", "uneven",
    "corrections", "sensational",
];

/// `n` pseudo-documents of `len` words each.
pub fn documents(n: usize, len: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (0..len)
                .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

/// TF-IDF vectors for `n` documents whose class shifts the word distribution.
pub fn labelled_vectors(n: usize, seed: u64) -> Vec<(SparseVector, Label)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<Label> = (0..n)
        .map(|i| Label::from_code(TaskKind::Factuality, (i % 3) as u8).unwrap())
        .collect();
    let docs: Vec<String> = labels
        .iter()
        .map(|l| {
            let base = l.code() as usize * 8;
            (0..40)
                .map(|_| {
                    let i = if rng.gen_bool(0.6) { base + rng.gen_range(0..8) } else { rng.gen_range(0..WORDS.len()) };
                    WORDS[i]
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    let model = fit_tfidf(&docs, &TokenizerSettings::default()).expect("non-empty vocabulary");
    let texts: Vec<&str> = docs.iter().map(String::as_str).collect();
    model.transform_all(&texts).into_iter().zip(labels).collect()
}

/// Random ordinal predictions and gold labels.
pub fn label_pairs(n: usize, task: TaskKind, seed: u64) -> (Vec<Label>, Vec<Label>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = task.num_classes() as u8;
    let mut draw = || Label::from_code(task, rng.gen_range(0..k)).unwrap();
    let preds = (0..n).map(|_| draw()).collect();
    let gold = (0..n).map(|_| draw()).collect();
    (preds, gold)
}
