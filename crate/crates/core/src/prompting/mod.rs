//! Screening prompt rendering and response parsing.

mod parse;
mod render;

pub use parse::{parse_score, parse_score_with, ParseFailure, RefusalLexicon, ScoreParseOutcome};
pub use render::{render_prompt, PromptError, PromptText, DEFAULT_INSTRUCTION};
