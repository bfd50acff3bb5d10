// SPDX-License-Identifier: MIT OR Apache-2.0

//! Whitespace tokenizer with byte fallback over a seeded word vocabulary.
//!
//! Ids `0..4` are special, `4..260` are raw bytes, and the remaining slots
//! hold whole words. Words are separated by an explicit boundary token, so
//! decoding reproduces whitespace-normalised text exactly.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const SPACE: TokenId = 3;
pub const BYTE_BASE: TokenId = 4;
pub const WORD_BASE: TokenId = BYTE_BASE + 256;
pub const MIN_VOCAB: usize = WORD_BASE as usize;

/// Always in the vocabulary when there is room, ahead of the shuffled lexicon.
const CORE_WORDS: &[&str] = &[
    "REALIZED", "PAPER", "Scenario:", "[none]", "Classify", "this", "scenario", "as", "or",
    "Answer", "with", "one", "label.", "Return", "two", "integers:", "a", "wager", "from", "1",
    "to", "1000", "CHF", "and", "risk", "level", "5.",
];

const LEXICON: &[&str] = &[
    "the", "of", "on", "is", "was", "that", "had", "has", "shows", "still", "open", "closed",
    "account", "loss", "gain", "paper", "realized", "settled", "pending", "sold", "held",
    "position", "portfolio", "stock", "shares", "fund", "bank", "transfer", "balance", "cash",
    "casino", "session", "slot", "machine", "bet", "chips", "table", "round", "night", "game",
    "expense", "claim", "reimbursement", "refund", "budget", "spent", "remaining", "bonus",
    "salary", "payment", "grant", "project", "outcome", "deadline", "review", "result",
    "next", "decide", "choose", "how", "much", "you", "your", "will", "would", "should",
    "want", "now", "then", "after", "before", "today", "yesterday", "week", "month", "year",
    "small", "medium", "large", "extreme", "even", "up", "down", "lost", "won", "earned",
    "money", "amount", "total", "value", "price", "market", "trade", "investment", "invest",
    "risky", "safe", "high", "low", "moderate", "preference", "profile", "choice",
    "I", "We", "The", "It", "A", "My", "bet:", "Risk", "Wager:", "Risk:", "level:", "out",
    "answer", "number", "numbers", "only", "no", "yes", "not", "but", "because", "so",
    "0", "2", "3", "4", "5", "6", "7", "8", "9", "10", "15", "20", "25", "30", "40", "50",
    "60", "75", "80", "100", "120", "150", "200", "250", "300", "400", "500", "600", "750",
    "800", "900", "2.", "3.", "4.", "1.", "CHF.", "closed.", "open.", "realized.", "paper.",
    "left", "right", "all", "some", "more", "less", "than", "at", "in", "for", "by", "it",
    "are", "be", "been", "can", "could", "may", "might", "must", "do", "did", "does",
    "unrealized", "close", "closing", "booked", "written", "off", "recovered", "returned",
    "ledger", "statement", "report", "quarter", "fiscal", "committee", "student", "course",
    "credit", "debit", "fee", "fees", "interest", "dividend", "gamble", "lottery", "odds",
];

#[derive(Clone, Debug)]
pub struct Tokenizer {
    words: Vec<String>,
    lookup: HashMap<String, TokenId>,
}

impl Tokenizer {
    pub fn new(vocab_size: usize, seed: u64) -> Self {
        let slots = vocab_size.saturating_sub(MIN_VOCAB);
        let mut rest: Vec<&str> = LEXICON
            .iter()
            .copied()
            .filter(|w| !CORE_WORDS.contains(w))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x746f_6b65_6e73);
        rest.shuffle(&mut rng);
        let words: Vec<String> = CORE_WORDS
            .iter()
            .chain(rest.iter())
            .take(slots)
            .map(|w| w.to_string())
            .collect();
        let lookup = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), WORD_BASE + i as TokenId))
            .collect();
        Tokenizer { words, lookup }
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn word_id(&self, word: &str) -> Option<TokenId> {
        self.lookup.get(word).copied()
    }

    /// Tokens for `text` without BOS.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        for (i, word) in text.split_whitespace().enumerate() {
            if i > 0 {
                out.push(SPACE);
            }
            match self.lookup.get(word) {
                Some(&id) => out.push(id),
                None => out.extend(word.bytes().map(|b| BYTE_BASE + b as TokenId)),
            }
        }
        out
    }

    /// BOS followed by the encoded text.
    pub fn encode_prompt(&self, text: &str) -> Vec<TokenId> {
        let mut out = vec![BOS];
        out.extend(self.encode(text));
        out
    }

    pub fn decode(&self, tokens: &[TokenId]) -> String {
        let mut bytes = Vec::new();
        for &t in tokens {
            match t {
                PAD | BOS | EOS => {}
                SPACE => bytes.push(b' '),
                t if t < WORD_BASE => bytes.push((t - BYTE_BASE) as u8),
                t => {
                    if let Some(w) = self.words.get((t - WORD_BASE) as usize) {
                        bytes.extend_from_slice(w.as_bytes());
                    }
                }
            }
        }
        String::from_utf8_lossy(&bytes).into_owned()
    }
}
