//! Denoising autoencoding and gap sentence generation.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Example, MaskSymbol, TaskKind};
use crate::corpus::SentenceWindow;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DaeConfig {
    /// Fraction of tokens replaced by the mask symbol.
    pub mask_rate: f64,
    /// Shuffle sentence order after masking.
    pub permute: bool,
}

impl Default for DaeConfig {
    fn default() -> Self {
        Self {
            mask_rate: 0.15,
            permute: true,
        }
    }
}

fn require_three(window: &SentenceWindow, task: &str) -> Result<()> {
    if window.len() < 3 {
        return Err(Error::precondition(format!(
            "{task} needs >= 3 sentences, got {}",
            window.len()
        )));
    }
    Ok(())
}

/// Mask `round(rate * tokens)` tokens with one symbol, then permute the
/// sentences. The output is the untouched window text.
pub fn gen_dae<R: Rng + ?Sized>(
    window: &SentenceWindow,
    cfg: &DaeConfig,
    rng: &mut R,
) -> Result<Example> {
    require_three(window, "DAE")?;
    let total = window.token_count();
    let masked = ((cfg.mask_rate * total as f64).round() as usize).min(total);
    let mut positions = index::sample(rng, total, masked).into_vec();
    positions.sort_unstable();
    let symbol = MaskSymbol::sample(rng);

    let mut sentences: Vec<Vec<&str>> = window
        .sentences
        .iter()
        .map(|s| s.tokens.iter().map(String::as_str).collect())
        .collect();
    let mut cursor = positions.iter().peekable();
    let mut offset = 0;
    for sentence in &mut sentences {
        let end = offset + sentence.len();
        while let Some(&&p) = cursor.peek() {
            if p >= end {
                break;
            }
            sentence[p - offset] = symbol.as_str();
            cursor.next();
        }
        offset = end;
    }

    let mut order: Vec<usize> = (0..sentences.len()).collect();
    if cfg.permute {
        order.shuffle(rng);
    }
    let input = order
        .iter()
        .map(|&i| sentences[i].join(" "))
        .collect::<Vec<_>>()
        .join(" ");
    Ok(Example::new(TaskKind::Dae, input, window.text())
        .with_window(window)
        .with_meta("mask_symbol", symbol.as_str())
        .with_meta("mask_positions", positions)
        .with_meta("order", order))
}

/// Replace one uniformly chosen sentence with a mask symbol; the output is
/// that sentence.
pub fn gen_gsg<R: Rng + ?Sized>(window: &SentenceWindow, rng: &mut R) -> Result<Example> {
    require_three(window, "GSG")?;
    let gap = rng.random_range(0..window.len());
    let symbol = MaskSymbol::sample(rng);
    let input = window
        .sentences
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if i == gap {
                symbol.as_str()
            } else {
                s.text.as_str()
            }
        })
        .collect::<Vec<_>>()
        .join(" ");
    Ok(
        Example::new(TaskKind::Gsg, input, window.sentences[gap].text.clone())
            .with_window(window)
            .with_meta("gap_index", gap)
            .with_meta("mask_symbol", symbol.as_str()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::test_util::window;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn w() -> SentenceWindow {
        window(&[
            "The sun rose over the hills.",
            "Birds began to sing loudly.",
            "A farmer walked to the field.",
            "He carried a heavy basket today.",
        ])
    }

    #[test]
    fn zero_noise_is_identity() {
        let cfg = DaeConfig {
            mask_rate: 0.0,
            permute: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ex = gen_dae(&w(), &cfg, &mut rng).unwrap();
        assert_eq!(ex.input_text, ex.output_text);
    }

    #[test]
    fn masks_rounded_fifteen_percent() {
        let win = w();
        let total = win.token_count();
        let expected = (0.15 * total as f64).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let ex = gen_dae(&win, &DaeConfig::default(), &mut rng).unwrap();
            let symbol = ex.meta_str("mask_symbol").unwrap();
            let count = ex.input_text.split(' ').filter(|t| *t == symbol).count();
            assert_eq!(count, expected);
            assert_eq!(ex.output_text, win.text());
        }
    }

    #[test]
    fn dae_without_permutation_keeps_positions() {
        let win = w();
        let tokens = win.tokens();
        let cfg = DaeConfig {
            mask_rate: 0.3,
            permute: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ex = gen_dae(&win, &cfg, &mut rng).unwrap();
        let input: Vec<&str> = ex.input_text.split(' ').collect();
        let positions: Vec<usize> =
            serde_json::from_value(ex.meta["mask_positions"].clone()).unwrap();
        for (i, tok) in input.iter().enumerate() {
            if positions.contains(&i) {
                assert_eq!(*tok, ex.meta_str("mask_symbol").unwrap());
            } else {
                assert_eq!(*tok, tokens[i]);
            }
        }
    }

    #[test]
    fn gsg_hand_trace() {
        let win = window(&["S0 a.", "S1 b.", "S2 c."]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        loop {
            let ex = gen_gsg(&win, &mut rng).unwrap();
            if ex.meta["gap_index"] == 1 {
                let sym = ex.meta_str("mask_symbol").unwrap();
                assert_eq!(ex.input_text, format!("S0 a. {sym} S2 c."));
                assert_eq!(ex.output_text, "S1 b.");
                break;
            }
        }
    }

    #[test]
    fn gsg_index_uniform() {
        // multinomial oracle: each index 1/3, sd over 30k = sqrt(30000*2/9) ~ 82
        let win = window(&["S0 a.", "S1 b.", "S2 c."]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut counts = [0usize; 3];
        for _ in 0..30_000 {
            let ex = gen_gsg(&win, &mut rng).unwrap();
            counts[ex.meta["gap_index"].as_u64().unwrap() as usize] += 1;
            assert!(win.sentences.iter().any(|s| s.text == ex.output_text));
        }
        for c in counts {
            assert!((c as f64 / 30_000.0 - 1.0 / 3.0).abs() < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn short_windows_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let short = window(&["a b.", "c d."]);
        assert!(gen_gsg(&short, &mut rng).is_err());
        assert!(gen_dae(&short, &DaeConfig::default(), &mut rng).is_err());
    }
}
