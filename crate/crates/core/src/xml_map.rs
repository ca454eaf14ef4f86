//! Developer-authored command-tag maps (`.tagmap.xml`).
//!
//! ```xml
//! <commandmap version="1">
//!   <command name="rm">
//!     <description>remove files or directories</description>
//!     <tag>delete</tag>
//!     <tag>remove</tag>
//!     <example>rm -rf build</example>
//!   </command>
//! </commandmap>
//! ```
//!
//! Validation is strict: unknown elements or attributes are errors.

use std::collections::BTreeSet;
use std::io::{self, Read};

use roxmltree::{Document, Node, NodeType};
use thiserror::Error;

use crate::miner::UsageEvent;
use crate::tag_store::{normalize, Source, TagMapping};

pub const MAP_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("XML syntax error: {0}")]
    XmlSyntaxError(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn violation(msg: impl Into<String>) -> MapError {
    MapError::SchemaViolation(msg.into())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandEntry {
    pub command: String,
    pub description: String,
    pub tags: Vec<String>,
    pub examples: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandTagMap {
    pub version: u32,
    pub entries: Vec<CommandEntry>,
}

impl Default for CommandTagMap {
    fn default() -> Self {
        CommandTagMap {
            version: MAP_VERSION,
            entries: Vec::new(),
        }
    }
}

impl CommandTagMap {
    pub fn validate(&self) -> Result<(), MapError> {
        if self.version != MAP_VERSION {
            return Err(violation(format!("unsupported version {}", self.version)));
        }
        let mut names = BTreeSet::new();
        for entry in &self.entries {
            entry.validate()?;
            if !names.insert(entry.command.as_str()) {
                return Err(violation(format!("duplicate command {:?}", entry.command)));
            }
        }
        Ok(())
    }

    pub fn entry(&self, command: &str) -> Option<&CommandEntry> {
        self.entries.iter().find(|e| e.command == command)
    }
}

impl CommandEntry {
    pub fn validate(&self) -> Result<(), MapError> {
        let name = &self.command;
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(violation(format!("invalid command name {name:?}")));
        }
        if self.tags.is_empty() {
            return Err(violation(format!("command {name:?} has no tags")));
        }
        let mut seen = BTreeSet::new();
        for tag in &self.tags {
            let norm = normalize(tag)
                .map_err(|_| violation(format!("command {name:?} has an empty tag")))?;
            if tag.trim() != tag {
                return Err(violation(format!("tag {tag:?} has surrounding whitespace")));
            }
            if crate::tag_store::is_example_tag(&norm) {
                return Err(violation(format!(
                    "tag {tag:?} uses the reserved example: prefix"
                )));
            }
            if !seen.insert(norm) {
                return Err(violation(format!("command {name:?} repeats tag {tag:?}")));
            }
        }
        if self.description.trim() != self.description {
            return Err(violation("description has surrounding whitespace"));
        }
        for example in &self.examples {
            if example.trim() != example || example.contains(['\n', '\r']) {
                return Err(violation(format!("malformed example {example:?}")));
            }
            if example.split_whitespace().next() != Some(name.as_str()) {
                return Err(violation(format!(
                    "example {example:?} does not start with {name:?}"
                )));
            }
        }
        Ok(())
    }
}

fn reject_unknown_attributes(node: Node, allowed: &[&str]) -> Result<(), MapError> {
    for attr in node.attributes() {
        if !allowed.contains(&attr.name()) {
            return Err(violation(format!(
                "unknown attribute {:?} on <{}>",
                attr.name(),
                node.tag_name().name()
            )));
        }
    }
    Ok(())
}

/// Element children of `node`; text between them must be whitespace.
fn element_children<'a, 'i>(node: Node<'a, 'i>) -> Result<Vec<Node<'a, 'i>>, MapError> {
    let mut out = Vec::new();
    for child in node.children() {
        match child.node_type() {
            NodeType::Element => out.push(child),
            NodeType::Text if child.text().unwrap_or("").trim().is_empty() => {}
            NodeType::Text => {
                return Err(violation(format!(
                    "unexpected text inside <{}>",
                    node.tag_name().name()
                )))
            }
            _ => {}
        }
    }
    Ok(out)
}

/// Text content of a leaf element, trimmed.
fn leaf_text(node: Node) -> Result<String, MapError> {
    reject_unknown_attributes(node, &[])?;
    let mut text = String::new();
    for child in node.children() {
        match child.node_type() {
            NodeType::Text => text.push_str(child.text().unwrap_or("")),
            NodeType::Element => {
                return Err(violation(format!(
                    "<{}> must not contain elements",
                    node.tag_name().name()
                )))
            }
            _ => {}
        }
    }
    Ok(text.trim().to_string())
}

fn parse_entry(node: Node) -> Result<CommandEntry, MapError> {
    reject_unknown_attributes(node, &["name"])?;
    let command = node
        .attribute("name")
        .ok_or_else(|| violation("<command> without a name attribute"))?
        .to_string();
    let mut entry = CommandEntry {
        command,
        description: String::new(),
        tags: Vec::new(),
        examples: Vec::new(),
    };
    let mut has_description = false;
    for child in element_children(node)? {
        match child.tag_name().name() {
            "description" if has_description => {
                return Err(violation(format!(
                    "command {:?} has two descriptions",
                    entry.command
                )))
            }
            "description" => {
                has_description = true;
                entry.description = leaf_text(child)?;
            }
            "tag" => entry.tags.push(leaf_text(child)?),
            "example" => entry.examples.push(leaf_text(child)?),
            other => return Err(violation(format!("unknown element <{other}>"))),
        }
    }
    entry.validate()?;
    Ok(entry)
}

pub fn parse_command_map_str(text: &str) -> Result<CommandTagMap, MapError> {
    let doc = Document::parse(text).map_err(|e| MapError::XmlSyntaxError(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "commandmap" || root.tag_name().namespace().is_some() {
        return Err(violation(format!(
            "root element must be <commandmap>, found <{}>",
            root.tag_name().name()
        )));
    }
    reject_unknown_attributes(root, &["version"])?;
    let version = root
        .attribute("version")
        .ok_or_else(|| violation("missing version attribute"))?;
    let version: u32 = version
        .trim()
        .parse()
        .map_err(|_| violation(format!("unsupported version {version:?}")))?;
    let mut map = CommandTagMap {
        version,
        entries: Vec::new(),
    };
    for child in element_children(root)? {
        match child.tag_name().name() {
            "command" => map.entries.push(parse_entry(child)?),
            other => return Err(violation(format!("unknown element <{other}>"))),
        }
    }
    map.validate()?;
    Ok(map)
}

pub fn parse_command_map<R: Read>(mut input: R) -> Result<CommandTagMap, MapError> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    parse_command_map_str(&text)
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\r' => out.push_str("&#13;"),
            c => out.push(c),
        }
    }
    out
}

pub fn serialize_command_map(map: &CommandTagMap) -> String {
    if map.entries.is_empty() {
        return format!("<commandmap version=\"{}\"/>\n", map.version);
    }
    let mut out = format!("<commandmap version=\"{}\">\n", map.version);
    for entry in &map.entries {
        out.push_str(&format!(
            "  <command name=\"{}\">\n",
            escape(&entry.command)
        ));
        if !entry.description.is_empty() {
            out.push_str(&format!(
                "    <description>{}</description>\n",
                escape(&entry.description)
            ));
        }
        for tag in &entry.tags {
            out.push_str(&format!("    <tag>{}</tag>\n", escape(tag)));
        }
        for example in &entry.examples {
            out.push_str(&format!("    <example>{}</example>\n", escape(example)));
        }
        out.push_str("  </command>\n");
    }
    out.push_str("</commandmap>\n");
    out
}

/// What a map contributes to the store.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Ingest {
    pub mappings: Vec<TagMapping>,
    /// Developer examples, as usage events with no query tags.
    pub seeds: Vec<UsageEvent>,
}

impl Ingest {
    /// Example records for the store, one per seed.
    pub fn example_records(&self, created_at: u64) -> Vec<TagMapping> {
        self.seeds
            .iter()
            .filter_map(|e| {
                TagMapping::example(&e.command, &e.command_line, Source::System, created_at).ok()
            })
            .collect()
    }
}

/// One System mapping per (tag, command) pair, stamped with `ingested_at`.
pub fn map_to_mappings(map: &CommandTagMap, ingested_at: u64) -> Ingest {
    let mut ingest = Ingest::default();
    for entry in &map.entries {
        for tag in &entry.tags {
            if let Ok(m) = TagMapping::new(tag, &entry.command, Source::System, ingested_at) {
                ingest.mappings.push(m);
            }
        }
        for example in &entry.examples {
            ingest.seeds.push(UsageEvent {
                query_tags: Vec::new(),
                command: entry.command.clone(),
                command_line: example.clone(),
                observed_at: 0,
            });
        }
    }
    ingest
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const RM_RMDIR: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<commandmap version="1">
  <command name="rm">
    <description>remove files or directories</description>
    <tag>delete</tag>
    <tag>remove</tag>
    <example>rm -rf build</example>
  </command>
  <command name="rmdir"><tag>delete</tag></command>
</commandmap>
"#;

    #[test]
    fn rm_rmdir_fixture() {
        let map = parse_command_map_str(RM_RMDIR).unwrap();
        assert_eq!(map.entries.len(), 2);
        assert!(map
            .entries
            .iter()
            .all(|e| e.tags.contains(&"delete".to_string())));
        assert_eq!(map.entries[0].description, "remove files or directories");
        assert_eq!(map.entries[0].examples, ["rm -rf build"]);

        let ingest = map_to_mappings(&map, 7);
        let pairs: Vec<_> = ingest
            .mappings
            .iter()
            .map(|m| (m.tag.as_str(), m.command.as_str()))
            .collect();
        assert_eq!(
            pairs,
            [("delete", "rm"), ("remove", "rm"), ("delete", "rmdir")]
        );
        assert!(ingest
            .mappings
            .iter()
            .all(|m| m.source == Source::System && m.created_at == 7));
        assert_eq!(ingest.seeds.len(), 1);
        assert!(ingest.seeds[0].query_tags.is_empty());
        assert_eq!(ingest.seeds[0].command, "rm");

        assert_eq!(
            parse_command_map_str(&serialize_command_map(&map)).unwrap(),
            map
        );
    }

    #[test]
    fn empty_map() {
        let map = parse_command_map_str(r#"<commandmap version="1"/>"#).unwrap();
        assert!(map.entries.is_empty());
        assert_eq!(map_to_mappings(&map, 0), Ingest::default());
        assert_eq!(
            serialize_command_map(&map).trim(),
            r#"<commandmap version="1"/>"#
        );
    }

    #[test]
    fn syntax_errors() {
        assert!(matches!(
            parse_command_map_str("<commandmap version=\"1\">"),
            Err(MapError::XmlSyntaxError(_))
        ));
        assert!(matches!(
            parse_command_map_str("not xml"),
            Err(MapError::XmlSyntaxError(_))
        ));
    }

    #[test]
    fn schema_violations() {
        let bad = [
            r#"<commandmap/>"#,
            r#"<commandmap version="2"/>"#,
            r#"<commandmap version="x"/>"#,
            r#"<map version="1"/>"#,
            r#"<commandmap version="1" extra="y"/>"#,
            r#"<commandmap version="1"><command><tag>a</tag></command></commandmap>"#,
            r#"<commandmap version="1"><command name=""><tag>a</tag></command></commandmap>"#,
            r#"<commandmap version="1"><command name="a b"><tag>a</tag></command></commandmap>"#,
            r#"<commandmap version="1"><command name="rm"/></commandmap>"#,
            r#"<commandmap version="1"><command name="rm"><tag> </tag></command></commandmap>"#,
            r#"<commandmap version="1"><command name="rm"><tag>Del</tag><tag>del</tag></command></commandmap>"#,
            r#"<commandmap version="1"><command name="rm"><tag>a</tag></command><command name="rm"><tag>b</tag></command></commandmap>"#,
            r#"<commandmap version="1"><command name="rm"><tag>a</tag><alias>x</alias></command></commandmap>"#,
            r#"<commandmap version="1"><cmd name="rm"/></commandmap>"#,
            r#"<commandmap version="1">text<command name="rm"><tag>a</tag></command></commandmap>"#,
            r#"<commandmap version="1"><command name="rm"><tag><b>a</b></tag></command></commandmap>"#,
            r#"<commandmap version="1"><command name="rm"><tag>a</tag><example>ls -l</example></command></commandmap>"#,
            r#"<commandmap version="1"><command name="rm"><tag>example:x</tag></command></commandmap>"#,
            r#"<commandmap version="1"><command name="rm"><description>a</description><description>b</description><tag>a</tag></command></commandmap>"#,
        ];
        for case in bad {
            assert!(
                matches!(
                    parse_command_map_str(case),
                    Err(MapError::SchemaViolation(_))
                ),
                "{case}"
            );
        }
    }

    #[test]
    fn escaping_survives_roundtrip() {
        let map = CommandTagMap {
            version: 1,
            entries: vec![CommandEntry {
                command: "grep".into(),
                description: "find <lines> & \"patterns\" it's".into(),
                tags: vec!["search text".into(), "find&match".into()],
                examples: vec!["grep -E 'a|b' < in > out".into()],
            }],
        };
        map.validate().unwrap();
        assert_eq!(
            parse_command_map_str(&serialize_command_map(&map)).unwrap(),
            map
        );
    }
}
