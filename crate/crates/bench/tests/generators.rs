use tagman_bench::{history, man_page, random_queries, random_store};
use tagman_core::man_format::{command_name, parse_man_str};
use tagman_core::{extract_tags, lookup};

#[test]
fn generated_store_is_consistent_and_searchable() {
    let store = random_store(5_000, 200, 300, 1);
    store.check_invariants().unwrap();
    assert!(store.len() > 4_500);
    assert_eq!(random_store(5_000, 200, 300, 1), store);
    let hits = random_queries(50, 200, 2)
        .iter()
        .filter(|q| !lookup(&store, q, None).unwrap().is_empty())
        .count();
    assert!(hits > 40);
}

#[test]
fn generated_pages_parse_with_their_tags() {
    for seed in 0..20 {
        let text = man_page(&format!("cmd{seed}"), 30, 6, seed);
        let doc = parse_man_str(&text).unwrap();
        assert_eq!(command_name(&doc), format!("cmd{seed}"));
        assert_eq!(extract_tags(&doc).len(), 6);
    }
}

#[test]
fn generated_history_has_searches_and_pipelines() {
    let lines = history(1_000, 50, 3);
    assert_eq!(lines.len(), 1_000);
    assert!(lines.iter().any(|l| l.starts_with("tagman search")));
    assert!(lines.iter().any(|l| l.contains(" | ")));
}
