//! Chat-completion client for elaborate prompt enrichment.
//!
//! The elaborate style asks an external language model to enrich a minimal
//! description while keeping every number intact. The client is optional:
//! with no endpoint configured it falls back deterministically to the
//! structured style, and any failure (transport errors after retries, or a
//! response that changes the numbers) takes the same fallback with the
//! record flagged.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::ingest::TileFeatures;
use crate::prompts::{
    generate_structured, validate_numbers, PromptRecord, PromptStyle,
};

/// Instruction wrapped around the minimal description; `{description}` is
/// the slot.
pub const ENRICH_INSTRUCTION: &str = "### Task:\n\
Enrich this satellite image description while:\n\
1. Keeping ALL original numbers/percentages EXACTLY as given, and in numerical form\n\
2. Adding only qualitative details (no new stats)\n\
3. Maintaining professional urban planner tone\n\
4. Be succinct, keep output under 100 words\n\
### Original:\n\
{description}\n\
### Enriched:\n";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmClientConfig {
    /// Chat-completion endpoint URL; empty means offline.
    #[serde(default)]
    pub endpoint: String,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Instruction template with a `{description}` slot.
    #[serde(default = "default_instruction")]
    pub instruction_template: String,
}

fn default_model() -> String {
    "deepseek-llm-7b-chat".to_string()
}

fn default_timeout_secs() -> u64 {
    30
}

fn default_retries() -> u32 {
    2
}

fn default_instruction() -> String {
    ENRICH_INSTRUCTION.to_string()
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        LlmClientConfig {
            endpoint: String::new(),
            model: default_model(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_retries(),
            instruction_template: default_instruction(),
        }
    }
}

impl LlmClientConfig {
    pub fn offline(&self) -> bool {
        self.endpoint.trim().is_empty()
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    message: Option<ChatMessage>,
    #[serde(default)]
    text: Option<String>,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

/// One POST to the chat-completion endpoint; retried by the caller.
fn request_enrichment(cfg: &LlmClientConfig, description: &str) -> Result<String> {
    let body = json!({
        "model": cfg.model,
        "messages": [{
            "role": "user",
            "content": cfg.instruction_template.replace("{description}", description),
        }],
    });
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(cfg.timeout_secs))
        .build()
        .map_err(|e| Error::Http { attempts: 1, detail: e.to_string() })?;
    let resp = client
        .post(&cfg.endpoint)
        .json(&body)
        .send()
        .and_then(|r| r.error_for_status())
        .map_err(|e| Error::Http { attempts: 1, detail: e.to_string() })?;
    let parsed: ChatResponse = resp
        .json()
        .map_err(|e| Error::Http { attempts: 1, detail: format!("bad response: {e}") })?;
    let choice = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| Error::Http { attempts: 1, detail: "empty choices".into() })?;
    let text = choice
        .message
        .map(|m| m.content)
        .or(choice.text)
        .ok_or_else(|| Error::Http { attempts: 1, detail: "choice carries no text".into() })?;
    Ok(text.trim().to_string())
}

/// Enriches a minimal description into the elaborate style.
///
/// The enriched text is accepted only if every expected percentage appears
/// verbatim and no foreign percentage was added; otherwise (and on any
/// transport failure after `max_retries` extra attempts, or offline) the
/// structured style is generated from `structured_seed` and flagged as a
/// fallback.
pub fn enrich_elaborate(
    minimal: &PromptRecord,
    features: &TileFeatures,
    cfg: &LlmClientConfig,
    structured_seed: u64,
) -> PromptRecord {
    let fallback = || {
        let mut p = generate_structured(features, structured_seed);
        p.fallback = true;
        p
    };
    if cfg.offline() {
        return fallback();
    }
    let mut attempts = 0;
    let text = loop {
        attempts += 1;
        match request_enrichment(cfg, &minimal.text) {
            Ok(t) => break Some(t),
            Err(_) if attempts <= cfg.max_retries => continue,
            Err(_) => break None,
        }
    };
    let Some(text) = text else {
        return fallback();
    };
    let candidate = PromptRecord {
        style: PromptStyle::Elaborate,
        numbers: crate::prompts::extract_percentages(&text),
        text,
        seed: minimal.seed,
        tile: minimal.tile,
        fallback: false,
    };
    if validate_numbers(&candidate, features).pass() {
        candidate
    } else {
        fallback()
    }
}
