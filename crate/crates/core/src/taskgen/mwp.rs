//! Masked word prediction.

use rand::seq::index;
use rand::Rng;

use super::{Example, MaskSymbol, TaskKind};
use crate::corpus::SentenceWindow;
use crate::error::{Error, Result};

pub const MAX_MASKED_WORDS: usize = 20;

/// Replace the tokens at `positions` (ascending) with `symbol`. Returns the
/// masked input and the removed words joined in order.
pub fn mask_words(tokens: &[&str], positions: &[usize], symbol: MaskSymbol) -> (String, String) {
    let mut input: Vec<&str> = tokens.to_vec();
    let mut removed = Vec::with_capacity(positions.len());
    for &pos in positions {
        removed.push(tokens[pos]);
        input[pos] = symbol.as_str();
    }
    (input.join(" "), removed.join(" "))
}

/// Mask `k ~ U[1, min(20, tokens/2)]` distinct word positions with a single
/// symbol; the output lists the masked words in their original order.
pub fn gen_mwp<R: Rng + ?Sized>(window: &SentenceWindow, rng: &mut R) -> Result<Example> {
    let tokens = window.tokens();
    if tokens.len() < 4 {
        return Err(Error::precondition(format!(
            "MWP needs >= 4 tokens, got {}",
            tokens.len()
        )));
    }
    let cap = MAX_MASKED_WORDS.min(tokens.len() / 2);
    let k = rng.random_range(1..=cap);
    let mut positions = index::sample(rng, tokens.len(), k).into_vec();
    positions.sort_unstable();
    let symbol = MaskSymbol::sample(rng);
    let (input, output) = mask_words(&tokens, &positions, symbol);
    Ok(Example::new(TaskKind::Mwp, input, output)
        .with_window(window)
        .with_meta("mask_symbol", symbol.as_str())
        .with_meta("mask_positions", positions))
}
