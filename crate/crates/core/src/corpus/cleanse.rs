//! Non-content paragraph detection.
//!
//! A paragraph is non-content when its first line is a recognised heading
//! (table of contents, acknowledgments, references, bibliography), or when
//! at least 80% of its non-blank lines look like citations or dot-leader
//! table-of-contents entries. Classification is a pure function of the
//! paragraph text, which makes [`cleanse`] idempotent.

use std::sync::LazyLock;

use regex::Regex;

use super::{Document, Paragraph, ParagraphRole};

const LINE_SHARE: f64 = 0.8;

static NUMBERING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\d+(\.\d+)*\.?\s+|[ivxlc]+\.\s+)").unwrap());
static ACK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^acknowledg\w*$").unwrap());
static CITATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?x)
        ^\s*\[\d+\]                                  # [12] Numbered entry
        | (?i:doi:|doi\.org/|https?://)              # links
        | \bet\ al\.                                 # et al.
        | ^\s*[A-Z][A-Za-z'\-]+,\s+(?:[A-Z]\.\s?)+   # Surname, I.
        ",
    )
    .unwrap()
});
static TOC_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(\.\s?){3,}\s*\d+\s*$").unwrap());

pub fn classify_paragraph(text: &str) -> ParagraphRole {
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    if let Some(role) = heading_role(first) {
        return role;
    }
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.is_empty() {
        return ParagraphRole::Content;
    }
    let toc = lines.iter().filter(|l| TOC_LINE.is_match(l)).count();
    let cites = lines
        .iter()
        .filter(|l| !TOC_LINE.is_match(l) && CITATION.is_match(l))
        .count();
    let share = (toc + cites) as f64 / lines.len() as f64;
    if share >= LINE_SHARE {
        if toc >= cites {
            ParagraphRole::Toc
        } else {
            ParagraphRole::References
        }
    } else {
        ParagraphRole::Content
    }
}

fn heading_role(line: &str) -> Option<ParagraphRole> {
    let lower = line.trim().to_lowercase();
    let stripped = NUMBERING.replace(&lower, "");
    let heading = stripped.trim_end_matches([':', '.', ' ']).trim();
    match heading {
        "table of contents" => Some(ParagraphRole::Toc),
        "references" | "bibliography" => Some(ParagraphRole::References),
        h if ACK.is_match(h) => Some(ParagraphRole::Acknowledgments),
        _ => None,
    }
}

/// Content paragraphs only. A paragraph is kept when both its stored role
/// and the classifier agree it is content.
pub fn cleanse(document: &Document) -> Vec<Paragraph> {
    document
        .body
        .iter()
        .filter(|p| p.role == ParagraphRole::Content && classify_paragraph(&p.text) == ParagraphRole::Content)
        .cloned()
        .collect()
}
