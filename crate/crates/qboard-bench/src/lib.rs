//! Benchmark-only crate; see the `benches/` directory.

/// Deterministic word soup for benchmark inputs.
pub fn synthetic_text(words: usize, seed: u64) -> String {
    const VOCAB: [&str; 16] = [
        "gradient", "descent", "overfitting", "validation", "loss", "model", "training",
        "learning", "rate", "regularization", "epoch", "batch", "weights", "bias", "layer",
        "network",
    ];
    let mut state = seed;
    let mut out = String::new();
    for i in 0..words {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        if i > 0 {
            out.push(' ');
        }
        out.push_str(VOCAB[(state >> 33) as usize % VOCAB.len()]);
    }
    out
}
