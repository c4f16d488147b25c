//! Synthetic tagging corpus: each label owns a few indicative tokens, a
//! shared noise pool blurs one position in five, and labels are sticky so
//! transitions carry signal too.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write;

const NOISE_TOKENS: usize = 8;
const NOISE_PROB: f64 = 0.2;
const STAY_PROB: f64 = 0.6;
const VARIANTS: [&str; 3] = ["a", "b", "c"];

#[derive(Clone, Copy, Debug)]
pub struct ChainGenConfig {
    pub sequences: usize,
    pub length: usize,
    pub labels: u32,
    pub seed: u64,
}

/// Renders a column-format corpus (token TAB tag, blank line between
/// sequences). Deterministic in the seed.
pub fn gen_chain_corpus(cfg: &ChainGenConfig) -> String {
    assert!(cfg.labels >= 1, "need at least one label");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = String::new();
    for _ in 0..cfg.sequences {
        let mut label = rng.random_range(0..cfg.labels);
        for _ in 0..cfg.length {
            let token = if rng.random_bool(NOISE_PROB) {
                format!("nz{}", rng.random_range(0..NOISE_TOKENS))
            } else {
                let v = VARIANTS[rng.random_range(0..VARIANTS.len())];
                format!("w{label}{v}")
            };
            writeln!(out, "{token}\tL{label}").unwrap();
            if !rng.random_bool(STAY_PROB) {
                label = rng.random_range(0..cfg.labels);
            }
        }
        out.push('\n');
    }
    out
}
