use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use tagman_core::man_format::{
    discover_pages, extract_examples, parse_man_file, parse_man_str, ManError,
};
use tagman_core::{extract_tags, extract_usage_pointer, serialize_man_page, SectionKind};

fn fixture_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn corpus() -> Vec<(PathBuf, String)> {
    discover_pages(&[fixture_dir("man")])
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p).unwrap();
            (p, text)
        })
        .collect()
}

/// Reads TAGS tokens straight off the raw lines, without the parser.
fn scan_tags(text: &str) -> Vec<String> {
    let mut in_tags = false;
    let mut out: Vec<String> = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix(".SH ") {
            let heading = rest.trim();
            let heading = heading
                .strip_prefix('"')
                .and_then(|h| h.strip_suffix('"'))
                .unwrap_or(heading);
            in_tags = heading == "TAGS";
            continue;
        }
        if !in_tags || line.starts_with('.') {
            continue;
        }
        for token in line.split_whitespace() {
            if !out.iter().any(|t| t == token) {
                out.push(token.to_string());
            }
        }
    }
    out
}

#[test]
fn corpus_is_large_enough() {
    assert!(corpus().len() >= 20);
}

#[test]
fn parse_serialize_parse_is_stable() {
    for (path, text) in corpus() {
        let doc = parse_man_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let rendered = serialize_man_page(&doc);
        let again = parse_man_str(&rendered).unwrap();
        assert_eq!(again, doc, "{}", path.display());
        assert_eq!(serialize_man_page(&again), rendered, "{}", path.display());
    }
}

#[test]
fn tags_match_line_scanner() {
    for (path, text) in corpus() {
        let doc = parse_man_str(&text).unwrap();
        assert_eq!(extract_tags(&doc), scan_tags(&text), "{}", path.display());
    }
}

#[test]
fn corpus_covers_every_section_kind_and_quoting() {
    let mut kinds = BTreeSet::new();
    let (mut quoted, mut macros) = (false, false);
    for (_, text) in corpus() {
        let doc = parse_man_str(&text).unwrap();
        for s in &doc.sections {
            kinds.insert(format!("{:?}", s.kind()));
        }
        quoted |= text.contains(".SH \"");
        macros |= text
            .lines()
            .any(|l| l.starts_with(".XX") || l.starts_with(".\\\""));
    }
    for kind in [
        SectionKind::Name,
        SectionKind::Synopsis,
        SectionKind::Description,
        SectionKind::Options,
        SectionKind::Diagnostics,
        SectionKind::Bugs,
        SectionKind::Tags,
        SectionKind::UsageHistory,
        SectionKind::ExampleUsage,
    ] {
        assert!(
            kinds.contains(&format!("{kind:?}")),
            "{kind:?} missing from corpus"
        );
    }
    assert!(kinds.iter().any(|k| k.starts_with("Other")));
    assert!(quoted && macros);
}

#[test]
fn known_pages() {
    let rm = parse_man_file(&fixture_dir("man").join("rm.1")).unwrap();
    assert_eq!(rm.name(), "rm");
    assert_eq!(rm.title.date, "\"March 2016\" \"GNU coreutils 8.25\"");
    assert_eq!(extract_tags(&rm), ["delete", "remove", "erase", "unlink"]);
    assert_eq!(
        extract_usage_pointer(&rm).as_deref(),
        Some("~/.tagman/user.tags")
    );
    assert_eq!(extract_examples(&rm), ["rm -rf build", "rm -i *.tmp"]);

    let ls = parse_man_file(&fixture_dir("man").join("ls.1")).unwrap();
    assert_eq!(
        ls.preamble,
        [".\\\" comment before the first section", ".PD 0"]
    );
    assert_eq!(extract_tags(&ls), ["list", "show", "directory", "files"]);
    assert_eq!(
        extract_usage_pointer(&ls).as_deref(),
        Some("/home/shared/ls.tags")
    );

    let vacuum = parse_man_file(&fixture_dir("man").join("vacuum.8")).unwrap();
    assert!(extract_tags(&vacuum).is_empty());
    assert_eq!(extract_usage_pointer(&vacuum), None);

    let intro = parse_man_file(&fixture_dir("man").join("intro.8")).unwrap();
    assert!(intro.section(&SectionKind::Tags).is_none());
}

#[test]
fn invalid_pages_are_rejected() {
    let dir = fixture_dir("man_invalid");
    let err = |name: &str| parse_man_file(&dir.join(name)).unwrap_err();
    assert!(matches!(
        err("no_title.1"),
        ManError::MissingTitleHeader { line: 1 }
    ));
    assert!(matches!(
        err("missing_section.1"),
        ManError::MalformedTitleHeader { line: 1, .. }
    ));
    assert!(matches!(
        err("bad_section.1"),
        ManError::MalformedTitleHeader { .. }
    ));
    assert!(matches!(
        err("double_title.1"),
        ManError::DuplicateTitleHeader { line: 4 }
    ));
    assert!(matches!(
        err("duplicate_tags.1"),
        ManError::DuplicateExtendedSection { line: 4, .. }
    ));
    assert!(matches!(err("not_utf8.1"), ManError::InvalidUtf8));
}
