//! Prompt conditioning vectors.
//!
//! Text is tokenized, split into chunks of at most 77 tokens, each chunk is
//! embedded, and the chunk embeddings are averaged (unweighted) into one
//! conditioning vector. The built-in encoder is a deterministic hash
//! projection; externally computed chunk embeddings can be imported instead,
//! so swapping in a real text encoder is a data change, not a code change.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::rng::{fnv1a, Pcg32};

/// Context window of the downstream text encoder.
pub const MAX_TOKENS_PER_CHUNK: usize = 77;

/// Normalized token sequence: lowercased, split on whitespace and
/// punctuation, with `digits%` kept as single tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq(pub Vec<String>);

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn tokenize(text: &str) -> TokenSeq {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut all_digits = true;
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            all_digits = (all_digits || current.is_empty()) && ch.is_ascii_digit();
            current.extend(ch.to_lowercase());
        } else if ch == '%' && all_digits && !current.is_empty() {
            current.push('%');
            tokens.push(std::mem::take(&mut current));
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    TokenSeq(tokens)
}

/// Greedy in-order chunks of at most `max_len` tokens; concatenating the
/// chunks reproduces the input.
pub fn chunk(tokens: &TokenSeq, max_len: usize) -> Vec<TokenSeq> {
    assert!(max_len >= 1, "chunk length must be at least 1");
    if tokens.is_empty() {
        return vec![TokenSeq(Vec::new())];
    }
    tokens
        .0
        .chunks(max_len)
        .map(|c| TokenSeq(c.to_vec()))
        .collect()
}

/// A text encoder mapping token sequences to fixed-dimension vectors.
pub trait TextEncoder {
    fn dim(&self) -> usize;

    /// Embedding of one chunk of tokens.
    fn embed(&self, tokens: &TokenSeq) -> Vec<f64>;
}

/// Deterministic stand-in encoder: each token hashes to a seeded Gaussian
/// projection vector; a chunk embeds as the sum of its token projections
/// scaled by `1/sqrt(len)`.
#[derive(Debug, Clone)]
pub struct HashEncoder {
    dim: usize,
    seed: u64,
}

impl HashEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 1);
        HashEncoder { dim, seed }
    }

    /// The projection vector assigned to one token.
    pub fn token_projection(&self, token: &str) -> Vec<f64> {
        let mut rng = Pcg32::with_stream(fnv1a(token.as_bytes()), self.seed | 1);
        (0..self.dim).map(|_| rng.next_gaussian()).collect()
    }
}

impl TextEncoder for HashEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, tokens: &TokenSeq) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        if tokens.is_empty() {
            return acc;
        }
        for t in &tokens.0 {
            for (a, v) in acc.iter_mut().zip(self.token_projection(t)) {
                *a += v;
            }
        }
        let scale = 1.0 / (tokens.len() as f64).sqrt();
        for a in &mut acc {
            *a *= scale;
        }
        acc
    }
}

/// Tokenizes, chunks to the 77-token window, embeds each chunk, and averages
/// the chunk embeddings. For prompts of at most 77 tokens this equals the
/// single-chunk embedding exactly.
pub fn embed_chunked(text: &str, encoder: &dyn TextEncoder) -> Vec<f64> {
    let tokens = tokenize(text);
    let chunks = chunk(&tokens, MAX_TOKENS_PER_CHUNK);
    average_chunks(
        &chunks
            .iter()
            .map(|c| encoder.embed(c))
            .collect::<Vec<_>>(),
    )
}

/// Unweighted mean of chunk embeddings.
pub fn average_chunks(chunks: &[Vec<f64>]) -> Vec<f64> {
    assert!(!chunks.is_empty());
    let dim = chunks[0].len();
    let mut acc = vec![0.0; dim];
    for c in chunks {
        assert_eq!(c.len(), dim, "chunk dimensions differ");
        for (a, v) in acc.iter_mut().zip(c) {
            *a += v;
        }
    }
    for a in &mut acc {
        *a /= chunks.len() as f64;
    }
    acc
}

#[derive(Deserialize)]
struct ExternalRecord {
    prompt_id: String,
    chunks: Vec<Vec<f64>>,
}

/// Imports externally computed chunk embeddings (JSON lines of
/// `{prompt_id, chunks: [[f64, ...], ...]}`), averaging each record's
/// chunks into one conditioning vector.
pub fn import_chunk_embeddings(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut out = BTreeMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ExternalRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, format!("line {}: {e}", lineno + 1)))?;
        if rec.chunks.is_empty() {
            return Err(Error::parse(
                path,
                format!("line {}: record {:?} has no chunks", lineno + 1, rec.prompt_id),
            ));
        }
        out.insert(rec.prompt_id, average_chunks(&rec.chunks));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_keeps_percent_tokens() {
        let t = tokenize("85% residential, commercial");
        assert_eq!(t.0, vec!["85%", "residential", "commercial"]);
    }

    #[test]
    fn tokenize_empty_is_empty() {
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn tokenize_strips_punctuation_and_lowercases() {
        let t = tokenize("Medium building density.");
        assert_eq!(t.0, vec!["medium", "building", "density"]);
    }

    #[test]
    fn chunk_sizes_follow_greedy_rule() {
        let tokens = TokenSeq((0..160).map(|i| format!("t{i}")).collect());
        let sizes: Vec<usize> = chunk(&tokens, 77).iter().map(|c| c.len()).collect();
        assert_eq!(sizes, vec![77, 77, 6]);
    }

    #[test]
    fn chunk_boundary_is_single() {
        let tokens = TokenSeq((0..77).map(|i| format!("t{i}")).collect());
        assert_eq!(chunk(&tokens, 77).len(), 1);
        let ten = TokenSeq((0..10).map(|i| format!("t{i}")).collect());
        assert_eq!(chunk(&ten, 77).len(), 1);
    }

    #[test]
    fn chunk_concatenation_is_lossless() {
        let tokens = tokenize(&"alpha beta gamma ".repeat(40));
        let chunks = chunk(&tokens, 7);
        let total: usize = chunks.iter().map(|c| c.len()).sum();
        assert_eq!(total, tokens.len());
        let rejoined: Vec<String> = chunks.into_iter().flat_map(|c| c.0).collect();
        assert_eq!(rejoined, tokens.0);
    }

    #[test]
    fn empty_tokens_embed_to_zero() {
        let enc = HashEncoder::new(16, 5);
        assert_eq!(enc.embed(&TokenSeq(vec![])), vec![0.0; 16]);
    }

    #[test]
    fn embedding_is_deterministic() {
        let enc = HashEncoder::new(32, 5);
        let t = tokenize("residential areas prevail here");
        assert_eq!(enc.embed(&t), enc.embed(&t));
    }

    #[test]
    fn single_token_embeds_to_its_projection() {
        let enc = HashEncoder::new(8, 5);
        let t = TokenSeq(vec!["residential".into()]);
        assert_eq!(enc.embed(&t), enc.token_projection("residential"));
    }

    #[test]
    fn norm_bound_holds() {
        let enc = HashEncoder::new(16, 3);
        let t = tokenize("one two three four five six seven eight");
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let max_proj = t
            .0
            .iter()
            .map(|tok| norm(&enc.token_projection(tok)))
            .fold(0.0, f64::max);
        assert!(norm(&enc.embed(&t)) <= (t.len() as f64).sqrt() * max_proj + 1e-12);
    }

    #[test]
    fn short_prompt_equals_single_chunk_embedding() {
        let enc = HashEncoder::new(64, 1);
        let text = "This area is dominated by residential (45%), with pockets of forest (15%).";
        assert!(tokenize(text).len() <= 77);
        assert_eq!(embed_chunked(text, &enc), enc.embed(&tokenize(text)));
    }

    #[test]
    fn two_chunk_prompt_averages_exactly() {
        let enc = HashEncoder::new(64, 1);
        let words: Vec<String> = (0..154).map(|i| format!("w{i}")).collect();
        let text = words.join(" ");
        let tokens = tokenize(&text);
        assert_eq!(tokens.len(), 154);
        let chunks = chunk(&tokens, MAX_TOKENS_PER_CHUNK);
        assert_eq!(chunks.len(), 2);
        let a = enc.embed(&chunks[0]);
        let b = enc.embed(&chunks[1]);
        let direct = embed_chunked(&text, &enc);
        for i in 0..64 {
            let mean = (a[i] + b[i]) / 2.0;
            assert!((direct[i] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_chunks_average_to_themselves() {
        let enc = HashEncoder::new(16, 9);
        let chunk_words: Vec<String> = (0..77).map(|i| format!("w{i}")).collect();
        let one = chunk_words.join(" ");
        let two = format!("{one} {one}");
        let e1 = embed_chunked(&one, &enc);
        let e2 = embed_chunked(&two, &enc);
        for i in 0..16 {
            assert!((e1[i] - e2[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn import_averages_external_chunks() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("embeds.jsonl");
        std::fs::write(
            &path,
            "{\"prompt_id\":\"a\",\"chunks\":[[1.0,2.0],[3.0,4.0]]}\n{\"prompt_id\":\"b\",\"chunks\":[[0.5,0.5]]}\n",
        )
        .unwrap();
        let m = import_chunk_embeddings(&path).unwrap();
        assert_eq!(m["a"], vec![2.0, 3.0]);
        assert_eq!(m["b"], vec![0.5, 0.5]);
    }

    #[test]
    fn import_rejects_empty_chunk_list() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("embeds.jsonl");
        std::fs::write(&path, "{\"prompt_id\":\"a\",\"chunks\":[]}\n").unwrap();
        assert!(import_chunk_embeddings(&path).is_err());
    }
}
