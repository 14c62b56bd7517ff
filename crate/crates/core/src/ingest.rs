//! Re-parsing of inline-tagged text (`Call <PHONE>555-1234</PHONE> now`) into
//! plain text, character spans and token-level BIO labels.
//!
//! All offsets count Unicode scalar values, not bytes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labelspace::{BioLabel, EntityType, LabelSpace};
use crate::record::Record;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IngestError {
    #[error("tag <{0}> is never closed")]
    Unclosed(String),
    #[error("closing tag </{found}> does not match open tag <{open}>")]
    MismatchedClose { open: String, found: String },
    #[error("closing tag </{0}> without an open tag")]
    UnexpectedClose(String),
    #[error("tag <{inner}> nested inside <{outer}>")]
    Nested { outer: String, inner: String },
    #[error("tag <{0}> carries attributes, only bare tags are supported")]
    Attributes(String),
    #[error("tag type {0} is not in the label space")]
    UnknownType(String),
    #[error("span {start}..{end} is outside the text (length {len})")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },
    #[error("span {start}..{end} overlaps or precedes the previous span")]
    OverlappingSpans { start: usize, end: usize },
    #[error("record {index}: {source}")]
    Record {
        index: usize,
        #[source]
        source: Box<IngestError>,
    },
}

/// What to do with a tag whose type is not in the label space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnknownTagPolicy {
    /// Remove the tags, keep the text, emit no span.
    #[default]
    DropSpan,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
    pub entity: EntityType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OffsetToken {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

enum Tag<'a> {
    Open(&'a str),
    Close(&'a str),
}

/// Tries to read a bare tag at the start of `s` (which begins with `<`).
/// Returns the tag and its byte length, `Ok(None)` when `<` is ordinary text.
fn read_tag(s: &str) -> Result<Option<(Tag<'_>, usize)>, IngestError> {
    let body = &s[1..];
    let (closing, body) = match body.strip_prefix('/') {
        Some(rest) => (true, rest),
        None => (false, body),
    };
    if !body.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_') {
        return Ok(None);
    }
    let name_len = body
        .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .unwrap_or(body.len());
    let name = &body[..name_len];
    let after = &body[name_len..];
    let prefix_len = 1 + usize::from(closing) + name_len;
    if after.starts_with('>') {
        let tag = if closing { Tag::Close(name) } else { Tag::Open(name) };
        return Ok(Some((tag, prefix_len + 1)));
    }
    if after.starts_with(char::is_whitespace) {
        let segment = after.split(['<', '\n']).next().unwrap_or("");
        if let Some(gt) = segment.find('>') {
            if segment[..gt].contains('=') {
                return Err(IngestError::Attributes(name.to_string()));
            }
        }
    }
    Ok(None)
}

struct OpenTag {
    name: String,
    start: usize,
    entity: Option<EntityType>,
}

/// Strips `<TYPE>`/`</TYPE>` pairs, returning the plain text and one span per
/// tagged region. Untagged text passes through unchanged; nested tags are
/// rejected. Tag names are matched case-insensitively against the space.
pub fn parse_tagged_text(
    raw: &str,
    space: &LabelSpace,
    policy: UnknownTagPolicy,
) -> Result<(String, Vec<CharSpan>), IngestError> {
    let mut plain = String::with_capacity(raw.len());
    let mut spans = Vec::new();
    let mut chars = 0usize;
    let mut open: Option<OpenTag> = None;
    let mut rest = raw;

    while let Some(lt) = rest.find('<') {
        plain.push_str(&rest[..lt]);
        chars += rest[..lt].chars().count();
        rest = &rest[lt..];
        let Some((tag, len)) = read_tag(rest)? else {
            plain.push('<');
            chars += 1;
            rest = &rest[1..];
            continue;
        };
        rest = &rest[len..];
        match tag {
            Tag::Open(name) => {
                if let Some(outer) = &open {
                    return Err(IngestError::Nested {
                        outer: outer.name.clone(),
                        inner: name.to_string(),
                    });
                }
                let upper = name.to_uppercase();
                let entity = match EntityType::new(upper.as_str()) {
                    Ok(t) if space.contains(&t) => Some(t),
                    _ if policy == UnknownTagPolicy::Error => {
                        return Err(IngestError::UnknownType(upper))
                    }
                    _ => None,
                };
                open = Some(OpenTag {
                    name: name.to_string(),
                    start: chars,
                    entity,
                });
            }
            Tag::Close(name) => {
                let Some(tag) = open.take() else {
                    return Err(IngestError::UnexpectedClose(name.to_string()));
                };
                if !tag.name.eq_ignore_ascii_case(name) {
                    return Err(IngestError::MismatchedClose {
                        open: tag.name,
                        found: name.to_string(),
                    });
                }
                if let Some(entity) = tag.entity {
                    if chars > tag.start {
                        spans.push(CharSpan {
                            start: tag.start,
                            end: chars,
                            entity,
                        });
                    }
                }
            }
        }
    }
    plain.push_str(rest);
    if let Some(tag) = open {
        return Err(IngestError::Unclosed(tag.name));
    }
    Ok((plain, spans))
}

/// Splits on runs of Unicode whitespace. Offsets index `plain` in characters.
pub fn tokenize_with_offsets(plain: &str) -> Vec<OffsetToken> {
    let mut tokens = Vec::new();
    let mut current: Option<(usize, String)> = None;
    let mut n = 0;
    for (i, c) in plain.chars().enumerate() {
        n = i + 1;
        if c.is_whitespace() {
            if let Some((start, text)) = current.take() {
                tokens.push(OffsetToken { text, start, end: i });
            }
        } else {
            current.get_or_insert_with(|| (i, String::new())).1.push(c);
        }
    }
    if let Some((start, text)) = current {
        tokens.push(OffsetToken { text, start, end: n });
    }
    tokens
}

/// Projects character spans onto tokens. A token belongs to a span when the
/// two intervals share at least one character; the first such token gets `B-`,
/// later ones `I-`. A token touched by two spans stays with the first.
pub fn char_spans_to_bio(
    tokens: &[OffsetToken],
    spans: &[CharSpan],
    text_len: usize,
) -> Result<Vec<BioLabel>, IngestError> {
    let mut labels = vec![BioLabel::Outside; tokens.len()];
    let mut claimed = vec![false; tokens.len()];
    let mut prev_end = 0;
    for span in spans {
        if span.start >= span.end || span.end > text_len {
            return Err(IngestError::SpanOutOfBounds {
                start: span.start,
                end: span.end,
                len: text_len,
            });
        }
        if span.start < prev_end {
            return Err(IngestError::OverlappingSpans {
                start: span.start,
                end: span.end,
            });
        }
        prev_end = span.end;

        let first = tokens.partition_point(|t| t.end <= span.start);
        let mut begun = false;
        for k in first..tokens.len() {
            if tokens[k].start >= span.end {
                break;
            }
            if claimed[k] {
                continue;
            }
            claimed[k] = true;
            labels[k] = if begun {
                BioLabel::Inside(span.entity.clone())
            } else {
                BioLabel::Begin(span.entity.clone())
            };
            begun = true;
        }
    }
    Ok(labels)
}

/// Parses one tagged record. Returns `Ok(None)` for records without any span,
/// which callers drop.
pub fn ingest_record(
    raw: &str,
    source: &str,
    index: usize,
    space: &LabelSpace,
    policy: UnknownTagPolicy,
) -> Result<Option<Record>, IngestError> {
    let wrap = |e| IngestError::Record {
        index,
        source: Box::new(e),
    };
    let (plain, spans) = parse_tagged_text(raw, space, policy).map_err(wrap)?;
    if spans.is_empty() {
        return Ok(None);
    }
    let tokens = tokenize_with_offsets(&plain);
    let labels = char_spans_to_bio(&tokens, &spans, plain.chars().count()).map_err(wrap)?;
    if labels.iter().all(BioLabel::is_outside) {
        return Ok(None);
    }
    Ok(Some(Record {
        id: format!("{source}-{index}"),
        tokens: tokens.into_iter().map(|t| t.text).collect(),
        labels,
        source: source.to_string(),
    }))
}
