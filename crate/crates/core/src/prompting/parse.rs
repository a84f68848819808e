use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Why a response yielded no usable score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseFailure {
    NoInteger,
    OutOfRange,
    Ambiguous,
    Refusal,
}

impl ParseFailure {
    /// Worth asking again; refusals and out-of-range answers are final.
    pub fn is_retryable(self) -> bool {
        matches!(self, ParseFailure::NoInteger | ParseFailure::Ambiguous)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreParseOutcome {
    Score(u8),
    Failure { kind: ParseFailure, detail: String },
}

impl ScoreParseOutcome {
    pub fn score(&self) -> Option<u8> {
        match self {
            ScoreParseOutcome::Score(s) => Some(*s),
            ScoreParseOutcome::Failure { .. } => None,
        }
    }

    pub fn failure(&self) -> Option<ParseFailure> {
        match self {
            ScoreParseOutcome::Score(_) => None,
            ScoreParseOutcome::Failure { kind, .. } => Some(*kind),
        }
    }

    fn fail(kind: ParseFailure, detail: impl Into<String>) -> Self {
        ScoreParseOutcome::Failure {
            kind,
            detail: detail.into(),
        }
    }
}

/// Case-insensitive phrases that mark a response as a refusal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RefusalLexicon(pub Vec<String>);

impl Default for RefusalLexicon {
    fn default() -> Self {
        RefusalLexicon(
            [
                "cannot discriminate",
                "can't discriminate",
                "not appropriate to assess",
                "not appropriate for me to assess",
                "cannot assess",
                "can't assess",
                "cannot provide a score",
                "can't provide a score",
                "unable to provide a score",
                "unable to assess",
                "won't provide a score",
                "will not provide a score",
                "decline to score",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
        )
    }
}

impl RefusalLexicon {
    fn find(&self, lowered: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|p| !p.is_empty() && lowered.contains(&p.to_lowercase()))
            .map(String::as_str)
    }
}

static MARKDOWN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[*_`#>~]").unwrap());
static SCALE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?x)
        \b1\s*(?:\([^)]*\))?\s*(?:-|–|to)\s*100\b\s*(?:\([^)]*\))?  # 1-100, 1 (x) to 100 (y)
        ",
    )
    .unwrap()
});
static DENOMINATOR: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?:/\s*\d+(?:\.\d+)?|\bout\s+of\s+\d+(?:\.\d+)?)").unwrap()
});
static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"-?\d+(?:\.\d+)?").unwrap());

/// Extract a score with the default refusal lexicon.
pub fn parse_score(raw: &str) -> ScoreParseOutcome {
    parse_score_with(raw, &RefusalLexicon::default())
}

/// Extraction grammar: refusal phrases win outright; markdown, scale
/// restatements ("1-100") and denominators ("/100", "out of 100") are
/// removed; remaining integer tokens decide the outcome. Decimals with a
/// fractional part are not treated as scores.
pub fn parse_score_with(raw: &str, lexicon: &RefusalLexicon) -> ScoreParseOutcome {
    let lowered = raw.to_lowercase();
    if let Some(phrase) = lexicon.find(&lowered) {
        return ScoreParseOutcome::fail(ParseFailure::Refusal, format!("matched \"{phrase}\""));
    }
    let text = MARKDOWN.replace_all(&lowered, " ");
    let text = SCALE.replace_all(&text, " ");
    let text = DENOMINATOR.replace_all(&text, " ");

    let mut values: Vec<i128> = Vec::new();
    for m in NUMBER.find_iter(&text) {
        let mut token = m.as_str();
        // A hyphen glued to a word ("grade-85") is not a sign.
        if token.starts_with('-')
            && text[..m.start()]
                .chars()
                .next_back()
                .is_some_and(|c| c.is_alphanumeric())
        {
            token = &token[1..];
        }
        let (int_part, frac) = token.split_once('.').unwrap_or((token, ""));
        if frac.chars().any(|c| c != '0') {
            continue;
        }
        let value = int_part.parse::<i128>().unwrap_or(if int_part.starts_with('-') {
            i128::MIN
        } else {
            i128::MAX
        });
        if !values.contains(&value) {
            values.push(value);
        }
    }

    match values.as_slice() {
        [] => ScoreParseOutcome::fail(ParseFailure::NoInteger, "no integer token"),
        [v] if (1..=100).contains(v) => ScoreParseOutcome::Score(*v as u8),
        [v] => ScoreParseOutcome::fail(ParseFailure::OutOfRange, format!("{v} outside [1, 100]")),
        many => ScoreParseOutcome::fail(
            ParseFailure::Ambiguous,
            format!(
                "candidates {}",
                many.iter().map(i128::to_string).collect::<Vec<_>>().join(", ")
            ),
        ),
    }
}
