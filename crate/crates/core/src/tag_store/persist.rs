//! Line-oriented store file.
//!
//! ```text
//! tagstore 1 <record-count>
//! <tag>\t<command>\t<source>\t<created_at>
//! ...
//! end <record-count>
//! ```

use std::io::Write;
use std::path::Path;

use super::{normalize, validate_command, StoreError, TagIndex, TagMapping};

const MAGIC: &str = "tagstore";
const VERSION: &str = "1";

pub fn encode_record(m: &TagMapping) -> String {
    format!("{}\t{}\t{}\t{}", m.tag, m.command, m.source, m.created_at)
}

pub fn decode_record(line: &str) -> Result<TagMapping, StoreError> {
    let corrupt = |why: &str| StoreError::CorruptStore(format!("{why}: {line:?}"));
    let fields: Vec<&str> = line.split('\t').collect();
    let [tag, command, source, created_at] = fields[..] else {
        return Err(corrupt("expected 4 fields"));
    };
    if normalize(tag).ok().as_deref() != Some(tag) {
        return Err(corrupt("tag is not normalized"));
    }
    validate_command(tag, command).map_err(|_| corrupt("bad command"))?;
    Ok(TagMapping {
        tag: tag.to_string(),
        raw_tag: tag.to_string(),
        command: command.to_string(),
        source: source.parse().map_err(|_| corrupt("bad source"))?,
        created_at: created_at.parse().map_err(|_| corrupt("bad timestamp"))?,
    })
}

/// Parses a framed record list: `<magic> 1 <count>[ extra...]`, records,
/// `end <count>`. Returns the extra header words and the record lines.
pub(crate) fn parse_framed<'a>(
    text: &'a str,
    magic: &str,
) -> Result<(Vec<&'a str>, Vec<&'a str>), StoreError> {
    let corrupt = |why: String| StoreError::CorruptStore(why);
    let body = text
        .strip_suffix('\n')
        .ok_or_else(|| corrupt("missing final newline".into()))?;
    let mut lines: Vec<&str> = body.split('\n').collect();
    let header = lines.remove(0);
    let mut words = header.split(' ');
    if words.next() != Some(magic) || words.next() != Some(VERSION) {
        return Err(corrupt(format!("bad header {header:?}")));
    }
    let count: usize = words
        .next()
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| corrupt(format!("bad record count in {header:?}")))?;
    let extra: Vec<&str> = words.collect();
    let trailer = lines
        .pop()
        .ok_or_else(|| corrupt("missing end line".into()))?;
    if trailer != format!("end {count}") {
        return Err(corrupt(format!("bad end line {trailer:?}")));
    }
    if lines.len() != count {
        return Err(corrupt(format!(
            "header says {count} records, found {}",
            lines.len()
        )));
    }
    Ok((extra, lines))
}

/// `header` must already carry the record count.
pub(crate) fn write_framed(header: &str, records: &[String]) -> String {
    let mut out = format!("{header}\n");
    for r in records {
        out.push_str(r);
        out.push('\n');
    }
    out.push_str(&format!("end {}\n", records.len()));
    out
}

pub fn render_store(index: &TagIndex) -> String {
    let records: Vec<String> = index.mappings().map(|m| encode_record(&m)).collect();
    write_framed(&format!("{MAGIC} {VERSION} {}", records.len()), &records)
}

/// A zero-byte file reads as an empty store.
pub fn parse_store(text: &str) -> Result<TagIndex, StoreError> {
    if text.is_empty() {
        return Ok(TagIndex::new());
    }
    let (extra, lines) = parse_framed(text, MAGIC)?;
    if !extra.is_empty() {
        return Err(StoreError::CorruptStore("unexpected header fields".into()));
    }
    let mut index = TagIndex::new();
    for line in lines {
        if !index.add_mapping(decode_record(line)?) {
            return Err(StoreError::CorruptStore(format!(
                "duplicate record {line:?}"
            )));
        }
    }
    Ok(index)
}

pub fn persist(index: &TagIndex, path: &Path) -> Result<(), StoreError> {
    write_atomic(path, render_store(index).as_bytes())?;
    Ok(())
}

pub fn load(path: &Path) -> Result<TagIndex, StoreError> {
    parse_store(&std::fs::read_to_string(path)?)
}

/// Write to a temporary file next to `path`, then rename over it.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tag_store::Source;

    fn fixture() -> TagIndex {
        TagIndex::from_mappings([
            TagMapping::new("delete", "rm", Source::System, 10).unwrap(),
            TagMapping::new("delete", "rmdir", Source::System, 11).unwrap(),
            TagMapping::new("remove", "rm", Source::Peer("b".into()), 12).unwrap(),
            TagMapping::example("ps", "ps aux | grep java", Source::User("u".into()), 13).unwrap(),
        ])
    }

    #[test]
    fn file_layout() {
        let text = render_store(&fixture());
        assert_eq!(
            text,
            "tagstore 1 4\n\
             delete\trm\tsystem\t10\n\
             delete\trmdir\tsystem\t11\n\
             example:ps\tps aux | grep java\tuser:u\t13\n\
             remove\trm\tpeer:b\t12\n\
             end 4\n"
        );
        assert_eq!(render_store(&TagIndex::new()), "tagstore 1 0\nend 0\n");
    }

    #[test]
    fn roundtrip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/store.tags");
        persist(&fixture(), &path).unwrap();
        assert_eq!(load(&path).unwrap(), fixture());
        persist(&TagIndex::new(), &path).unwrap();
        assert!(load(&path).unwrap().is_empty());
    }

    #[test]
    fn empty_inputs() {
        assert!(parse_store("").unwrap().is_empty());
        assert!(parse_store("tagstore 1 0\nend 0\n").unwrap().is_empty());
    }

    #[test]
    fn corruption_is_detected() {
        let text = render_store(&fixture());
        for cut in [5, 20, text.len() - 3, text.len() - 1] {
            assert!(
                matches!(parse_store(&text[..cut]), Err(StoreError::CorruptStore(_))),
                "cut at {cut}"
            );
        }
        let cases = [
            "tagstore 1 1\nend 1\n",
            "tagstore 2 0\nend 0\n",
            "tagstore 1 1\nDelete\trm\tsystem\t1\nend 1\n",
            "tagstore 1 1\ndelete\trm\tsystem\tx\nend 1\n",
            "tagstore 1 1\ndelete\trm\tnobody\t1\nend 1\n",
            "tagstore 1 2\ndelete\trm\tsystem\t1\ndelete\trm\tsystem\t1\nend 2\n",
            "tagstore 1 0\nend 0\nextra\n",
        ];
        for case in cases {
            assert!(
                matches!(parse_store(case), Err(StoreError::CorruptStore(_))),
                "{case:?}"
            );
        }
        assert!(matches!(
            load(Path::new("/nonexistent/store.tags")),
            Err(StoreError::Io(_))
        ));
    }
}
