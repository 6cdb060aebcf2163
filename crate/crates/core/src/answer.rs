//! Question and answer value types shared by the agent layer, the QA
//! builder and the evaluation harness.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    TrueFalse,
    MultipleChoice,
}

impl QuestionKind {
    pub fn name(self) -> &'static str {
        match self {
            QuestionKind::TrueFalse => "true_false",
            QuestionKind::MultipleChoice => "multiple_choice",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Choice {
    A,
    B,
    C,
    D,
}

impl Choice {
    pub const ALL: [Choice; 4] = [Choice::A, Choice::B, Choice::C, Choice::D];

    pub fn letter(self) -> char {
        match self {
            Choice::A => 'A',
            Choice::B => 'B',
            Choice::C => 'C',
            Choice::D => 'D',
        }
    }

    pub fn from_letter(c: char) -> Option<Choice> {
        match c.to_ascii_uppercase() {
            'A' => Some(Choice::A),
            'B' => Some(Choice::B),
            'C' => Some(Choice::C),
            'D' => Some(Choice::D),
            _ => None,
        }
    }
}

/// A value in the answer domain of one question kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnswerValue {
    Bool(bool),
    Choice(Choice),
}

impl AnswerValue {
    pub fn kind(self) -> QuestionKind {
        match self {
            AnswerValue::Bool(_) => QuestionKind::TrueFalse,
            AnswerValue::Choice(_) => QuestionKind::MultipleChoice,
        }
    }

    /// Strict parse of a bare token for the given kind after normalization:
    /// surrounding whitespace and punctuation stripped, case folded.
    /// `"b."` parses as `B`; `"the answer is A"` does not parse.
    pub fn parse_token(kind: QuestionKind, raw: &str) -> Option<AnswerValue> {
        let token = raw
            .trim()
            .trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace());
        match kind {
            QuestionKind::TrueFalse => match token.to_ascii_lowercase().as_str() {
                "true" => Some(AnswerValue::Bool(true)),
                "false" => Some(AnswerValue::Bool(false)),
                _ => None,
            },
            QuestionKind::MultipleChoice => {
                let mut chars = token.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => Choice::from_letter(c).map(AnswerValue::Choice),
                    _ => None,
                }
            }
        }
    }
}

impl fmt::Display for AnswerValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnswerValue::Bool(b) => write!(f, "{b}"),
            AnswerValue::Choice(c) => write!(f, "{}", c.letter()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("'{0}' is not an answer token (expected true/false or A-D)")]
pub struct BadAnswerToken(pub String);

impl FromStr for AnswerValue {
    type Err = BadAnswerToken;

    /// Parses the canonical serialized forms `true`, `false`, `A`..`D`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AnswerValue::parse_token(QuestionKind::TrueFalse, s)
            .or_else(|| AnswerValue::parse_token(QuestionKind::MultipleChoice, s))
            .ok_or_else(|| BadAnswerToken(s.to_string()))
    }
}

impl Serialize for AnswerValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AnswerValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A question as posed to the agents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub kind: QuestionKind,
    /// Statement (True/False) or question stem (Multiple-Choice).
    pub text: String,
    /// `"A. ..."` .. `"D. ..."`; empty for True/False.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
}

impl Question {
    pub fn true_false(text: impl Into<String>) -> Self {
        Question {
            kind: QuestionKind::TrueFalse,
            text: text.into(),
            options: Vec::new(),
        }
    }

    pub fn multiple_choice(text: impl Into<String>, options: Vec<String>) -> Self {
        Question {
            kind: QuestionKind::MultipleChoice,
            text: text.into(),
            options,
        }
    }

    /// Same kind and options, different text.
    pub fn with_text(&self, text: impl Into<String>) -> Self {
        Question {
            text: text.into(),
            ..self.clone()
        }
    }

    /// Text followed by one option per line, as shown to the evaluator and
    /// answer writer.
    pub fn render(&self) -> String {
        if self.options.is_empty() {
            self.text.clone()
        } else {
            let mut s = self.text.clone();
            for o in &self.options {
                s.push('\n');
                s.push_str(o);
            }
            s
        }
    }
}

/// The answer a pipeline run produced.
///
/// `value == None` is an abstention: the answer writer never produced a
/// token inside the question's answer domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalAnswer {
    pub kind: QuestionKind,
    pub value: Option<AnswerValue>,
    /// Whether the answer was generated with accepted evidence in context.
    pub grounded: bool,
}

impl FinalAnswer {
    pub fn abstention(kind: QuestionKind, grounded: bool) -> Self {
        FinalAnswer {
            kind,
            value: None,
            grounded,
        }
    }

    pub fn is_abstention(&self) -> bool {
        self.value.is_none()
    }

    pub fn is_correct(&self, gold: AnswerValue) -> bool {
        self.value == Some(gold)
    }
}
