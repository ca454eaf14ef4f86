//! Extended man-page documents.
//!
//! A page is a `.TH` title header followed by `.SH` sections. Besides the
//! classic sections, three extended headings are recognised: `TAGS`,
//! `USAGE HISTORY` and `EXAMPLE USAGE`. Anything that is not a `.TH` or
//! `.SH ` line is kept verbatim as a body line, so unknown macros survive a
//! parse/serialize cycle untouched.

use std::fmt;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManError {
    #[error("missing .TH title header (line {line})")]
    MissingTitleHeader { line: usize },
    #[error("malformed .TH title header on line {line}: {reason}")]
    MalformedTitleHeader { line: usize, reason: String },
    #[error("second .TH title header on line {line}")]
    DuplicateTitleHeader { line: usize },
    #[error("duplicate {heading} section on line {line}")]
    DuplicateExtendedSection { heading: String, line: usize },
    #[error("invalid UTF-8 input")]
    InvalidUtf8,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SectionKind {
    Name,
    Synopsis,
    Description,
    Options,
    Diagnostics,
    Bugs,
    Tags,
    UsageHistory,
    ExampleUsage,
    Other(String),
}

impl SectionKind {
    pub const TAGS: &'static str = "TAGS";
    pub const USAGE_HISTORY: &'static str = "USAGE HISTORY";
    pub const EXAMPLE_USAGE: &'static str = "EXAMPLE USAGE";

    /// Classifies a heading. Matching is exact and case-sensitive.
    pub fn from_heading(heading: &str) -> Self {
        match heading {
            "NAME" => SectionKind::Name,
            "SYNOPSIS" => SectionKind::Synopsis,
            "DESCRIPTION" => SectionKind::Description,
            "OPTIONS" => SectionKind::Options,
            "DIAGNOSTICS" => SectionKind::Diagnostics,
            "BUGS" => SectionKind::Bugs,
            Self::TAGS => SectionKind::Tags,
            Self::USAGE_HISTORY => SectionKind::UsageHistory,
            Self::EXAMPLE_USAGE => SectionKind::ExampleUsage,
            other => SectionKind::Other(other.to_string()),
        }
    }

    pub fn is_extended(&self) -> bool {
        matches!(
            self,
            SectionKind::Tags | SectionKind::UsageHistory | SectionKind::ExampleUsage
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TitleHeader {
    pub name: String,
    pub section: u8,
    /// Everything after the section number, kept opaque. Empty when absent.
    pub date: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub heading: String,
    pub body: Vec<String>,
}

impl Section {
    pub fn new(heading: impl Into<String>, body: Vec<String>) -> Self {
        Section {
            heading: heading.into(),
            body,
        }
    }

    pub fn kind(&self) -> SectionKind {
        SectionKind::from_heading(&self.heading)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManDocument {
    pub title: TitleHeader,
    /// Lines between `.TH` and the first `.SH`.
    pub preamble: Vec<String>,
    pub sections: Vec<Section>,
}

impl ManDocument {
    pub fn new(title: TitleHeader) -> Self {
        ManDocument {
            title,
            preamble: Vec::new(),
            sections: Vec::new(),
        }
    }

    pub fn section(&self, kind: &SectionKind) -> Option<&Section> {
        self.sections.iter().find(|s| &s.kind() == kind)
    }

    pub fn name(&self) -> &str {
        &self.title.name
    }
}

impl fmt::Display for ManDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_man_page(self))
    }
}

fn is_title_line(line: &str) -> bool {
    line.strip_prefix(".TH")
        .is_some_and(|rest| rest.is_empty() || rest.starts_with(char::is_whitespace))
}

fn section_heading(line: &str) -> Option<String> {
    let rest = line.strip_prefix(".SH ")?.trim();
    let heading = rest
        .strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .unwrap_or(rest);
    Some(heading.to_string())
}

fn parse_title(line: &str, line_no: usize) -> Result<TitleHeader, ManError> {
    let malformed = |reason: &str| ManError::MalformedTitleHeader {
        line: line_no,
        reason: reason.to_string(),
    };
    let rest = &line[3..];
    let mut args = rest.split_whitespace();
    let name = args.next().ok_or_else(|| malformed("missing name"))?;
    let section = args.next().ok_or_else(|| malformed("missing section"))?;
    let section: u8 = section
        .parse()
        .ok()
        .filter(|n| (1..=9).contains(n))
        .ok_or_else(|| malformed("section must be an integer 1-9"))?;
    // date is whatever follows the section token
    let after_name = rest.trim_start()[name.len()..].trim_start();
    let date = after_name[after_name
        .find(char::is_whitespace)
        .unwrap_or(after_name.len())..]
        .trim()
        .to_string();
    Ok(TitleHeader {
        name: name.to_string(),
        section,
        date,
    })
}

/// Splits on `\n` only; `\r` and other bytes stay in the line.
fn split_lines(input: &str) -> impl Iterator<Item = &str> {
    let trimmed = input.strip_suffix('\n').unwrap_or(input);
    let empty = input.is_empty();
    trimmed.split('\n').filter(move |_| !empty)
}

pub fn parse_man_str(input: &str) -> Result<ManDocument, ManError> {
    let mut lines = split_lines(input).enumerate();
    let title = match lines.next() {
        Some((_, line)) if is_title_line(line) => parse_title(line, 1)?,
        _ => return Err(ManError::MissingTitleHeader { line: 1 }),
    };
    let mut doc = ManDocument::new(title);
    let mut seen_extended: Vec<SectionKind> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if is_title_line(line) {
            return Err(ManError::DuplicateTitleHeader { line: line_no });
        }
        if let Some(heading) = section_heading(line) {
            let kind = SectionKind::from_heading(&heading);
            if kind.is_extended() {
                if seen_extended.contains(&kind) {
                    return Err(ManError::DuplicateExtendedSection {
                        heading,
                        line: line_no,
                    });
                }
                seen_extended.push(kind);
            }
            doc.sections.push(Section::new(heading, Vec::new()));
            continue;
        }
        match doc.sections.last_mut() {
            Some(section) => section.body.push(line.to_string()),
            None => doc.preamble.push(line.to_string()),
        }
    }
    Ok(doc)
}

pub fn parse_man_page<R: Read>(mut input: R) -> Result<ManDocument, ManError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let text = String::from_utf8(bytes).map_err(|_| ManError::InvalidUtf8)?;
    parse_man_str(&text)
}

pub fn parse_man_file(path: &Path) -> Result<ManDocument, ManError> {
    parse_man_page(std::fs::File::open(path)?)
}

fn needs_quotes(heading: &str) -> bool {
    heading.is_empty()
        || heading.contains(char::is_whitespace)
        || heading.starts_with('"')
        || heading.ends_with('"')
}

pub fn serialize_man_page(doc: &ManDocument) -> String {
    let mut out = format!(".TH {} {}", doc.title.name, doc.title.section);
    if !doc.title.date.is_empty() {
        out.push(' ');
        out.push_str(&doc.title.date);
    }
    out.push('\n');
    for line in &doc.preamble {
        out.push_str(line);
        out.push('\n');
    }
    for section in &doc.sections {
        if needs_quotes(&section.heading) {
            out.push_str(&format!(".SH \"{}\"\n", section.heading));
        } else {
            out.push_str(&format!(".SH {}\n", section.heading));
        }
        for line in &section.body {
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

/// Tags listed in the TAGS section, in order, first occurrence kept.
/// Macro lines (leading `.`) inside the section are not tag text.
pub fn extract_tags(doc: &ManDocument) -> Vec<String> {
    let Some(section) = doc.section(&SectionKind::Tags) else {
        return Vec::new();
    };
    let mut tags: Vec<String> = Vec::new();
    for token in section
        .body
        .iter()
        .filter(|line| !line.starts_with('.'))
        .flat_map(|line| line.split_whitespace())
    {
        if !tags.iter().any(|t| t == token) {
            tags.push(token.to_string());
        }
    }
    tags
}

/// The per-user store pointer named by the USAGE HISTORY section.
pub fn extract_usage_pointer(doc: &ManDocument) -> Option<String> {
    doc.section(&SectionKind::UsageHistory)?
        .body
        .iter()
        .map(|line| line.trim())
        .find(|line| !line.is_empty())
        .map(str::to_string)
}

/// The command a page documents: the first word of the NAME section
/// (`rm, unlink \- remove files` gives `rm`), or the title name when the
/// page has no usable NAME line.
pub fn command_name(doc: &ManDocument) -> String {
    doc.section(&SectionKind::Name)
        .and_then(|s| {
            s.body
                .iter()
                .filter(|l| !l.starts_with('.'))
                .find_map(|l| l.split_whitespace().next())
        })
        .map(|w| w.trim_end_matches(',').replace("\\-", "-"))
        .filter(|w| !w.is_empty() && !w.starts_with('\\'))
        .unwrap_or_else(|| doc.name().to_string())
}

/// Lines of the EXAMPLE USAGE section, without macro or blank lines.
pub fn extract_examples(doc: &ManDocument) -> Vec<String> {
    doc.section(&SectionKind::ExampleUsage)
        .map(|s| {
            s.body
                .iter()
                .map(|l| l.trim())
                .filter(|l| !l.is_empty() && !l.starts_with('.'))
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default()
}

/// Splits a colon-separated search path (`TAGMAN_PATH`), dropping empty entries.
pub fn search_dirs(path_list: &str) -> Vec<PathBuf> {
    path_list
        .split(':')
        .filter(|p| !p.is_empty())
        .map(PathBuf::from)
        .collect()
}

/// Every regular file below the given directories, directories in the
/// given order and files sorted by path within each directory tree.
pub fn discover_pages(dirs: &[PathBuf]) -> Vec<PathBuf> {
    let mut pages = Vec::new();
    for dir in dirs {
        let mut found: Vec<PathBuf> = walkdir::WalkDir::new(dir)
            .follow_links(true)
            .into_iter()
            .filter_map(Result::ok)
            .filter(|e| e.file_type().is_file())
            .map(|e| e.into_path())
            .collect();
        found.sort();
        pages.extend(found);
    }
    pages
}
