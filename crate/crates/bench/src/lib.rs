//! Seeded workload generators shared by the benchmarks.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use tagman_core::{Source, TagIndex, TagMapping};

/// A store of `mappings` random system mappings over `tags` distinct tags
/// and `commands` distinct commands.
pub fn random_store(mappings: usize, tags: usize, commands: usize, seed: u64) -> TagIndex {
    let mut rng = StdRng::seed_from_u64(seed);
    TagIndex::from_mappings((0..mappings).map(|_| {
        let tag = format!("t{}", rng.gen_range(0..tags));
        let command = format!("c{}", rng.gen_range(0..commands));
        TagMapping::new(&tag, &command, Source::System, rng.gen_range(0..1_000_000))
            .expect("generated mapping is valid")
    }))
}

/// `count` queries of one to three tags drawn from the same tag space.
pub fn random_queries(count: usize, tags: usize, seed: u64) -> Vec<Vec<String>> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (0..rng.gen_range(1..=3))
                .map(|_| format!("t{}", rng.gen_range(0..tags)))
                .collect()
        })
        .collect()
}

const WORDS: &[&str] = &[
    "file",
    "directory",
    "remove",
    "list",
    "copy",
    "archive",
    "process",
    "signal",
    "owner",
    "permission",
    "link",
    "disk",
    "usage",
    "sort",
    "search",
    "pattern",
    "print",
    "create",
];

/// An extended man page for `name` with `body_lines` lines per ordinary
/// section and a TAGS section of `tags` words.
pub fn man_page(name: &str, body_lines: usize, tags: usize, seed: u64) -> String {
    let mut rng = StdRng::seed_from_u64(seed);
    let sentence = |rng: &mut StdRng| -> String {
        (0..rng.gen_range(4..12))
            .map(|_| *WORDS.choose(rng).unwrap())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut out = format!(".TH {} 1 \"2024-01-01\" \"bench\"\n", name.to_uppercase());
    out.push_str(&format!(".SH NAME\n{name} \\- {}\n", sentence(&mut rng)));
    out.push_str(&format!(
        ".SH SYNOPSIS\n.B {name}\n[\\fIOPTION\\fR]... FILE...\n"
    ));
    for heading in ["DESCRIPTION", "OPTIONS", "\"SEE ALSO\""] {
        out.push_str(&format!(".SH {heading}\n"));
        for i in 0..body_lines {
            if i % 5 == 0 {
                out.push_str(".TP\n");
            }
            out.push_str(&sentence(&mut rng));
            out.push('\n');
        }
    }
    out.push_str(".SH TAGS\n");
    for i in 0..tags {
        out.push_str(&format!("{}{i} ", WORDS.choose(&mut rng).unwrap()));
    }
    out.push_str("\n.SH \"EXAMPLE USAGE\"\n");
    out.push_str(&format!("{name} -v input\n{name} --help\n"));
    out
}

/// A shell history of `lines` lines mixing tag searches, plain commands
/// and pipelines over `commands` distinct commands.
pub fn history(lines: usize, commands: usize, seed: u64) -> Vec<String> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..lines)
        .map(|_| match rng.gen_range(0..10) {
            0 => format!("tagman search t{}", rng.gen_range(0..commands)),
            1..=2 => format!(
                "c{} -a | c{} | c{} x",
                rng.gen_range(0..commands),
                rng.gen_range(0..commands),
                rng.gen_range(0..commands)
            ),
            _ => format!(
                "c{} --flag {}",
                rng.gen_range(0..commands),
                rng.gen_range(0..100)
            ),
        })
        .collect()
}
