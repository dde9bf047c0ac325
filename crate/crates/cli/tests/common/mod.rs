#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_normkit"))
}

pub fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn normkit")
}

pub fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "normkit {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub const CONCEPTS: &[(&str, &str, &str, bool)] = &[
    ("C0000001", "Kopfschmerz", "MSHGER", true),
    ("C0000001", "Kopfweh", "MDRGER", false),
    ("C0000002", "Migräne", "MSHGER", true),
    ("C0000003", "Bauchschmerz", "MSHGER", true),
    ("C0000003", "Bauchweh", "MDRGER", false),
    ("C0000004", "Niere", "MSHGER", true),
    ("C0000005", "Nierenbecken", "MSHGER", true),
    ("C0000006", "Krankenhaus", "MSHGER", true),
    ("C0000007", "Kaliumkanal", "MSHGER", true),
    ("C0000008", "Übelkeit", "MSHGER", true),
];

/// Writes a small knowledge-base directory and returns its path.
pub fn write_kb(root: &Path) -> PathBuf {
    let dir = root.join("kb");
    fs::create_dir_all(&dir).unwrap();
    let mut c = String::from("cui\tsurface\tsource\tpreferred\n");
    for (cui, s, src, p) in CONCEPTS {
        c.push_str(&format!("{cui}\t{s}\t{src}\t{}\n", if *p { "1" } else { "0" }));
    }
    fs::write(dir.join("concepts.tsv"), c).unwrap();
    fs::write(
        dir.join("types.tsv"),
        "cui\ttui\nC0000001\tT184\nC0000002\tT047\nC0000003\tT184\nC0000004\tT023\nC0000005\tT023\nC0000006\tT073\nC0000007\tT116\nC0000008\tT184\n",
    )
    .unwrap();
    fs::write(dir.join("hierarchy.tsv"), "child_cui\tparent_cui\nC0000005\tC0000004\n").unwrap();
    fs::write(
        dir.join("groups.tsv"),
        "tui\tgroup\nT184\tDISO\nT047\tDISO\nT023\tANAT\nT073\tDEVI\nT116\tCHEM\n",
    )
    .unwrap();
    dir
}

/// `(post id, text, [(mention id, surface, kind, gold)])`; offsets are found
/// by searching the text.
pub fn write_corpus(root: &Path, name: &str, posts: &[(&str, &str, &[(&str, &str, &str, &str)])]) -> PathBuf {
    let mut lines = String::new();
    for (pid, text, mentions) in posts {
        let ms: Vec<serde_json::Value> = mentions
            .iter()
            .map(|(id, surface, kind, gold)| {
                let byte = text.find(surface).expect("surface in text");
                let start = text[..byte].chars().count();
                let end = start + surface.chars().count();
                serde_json::json!({"id": id, "start": start, "end": end, "kind": kind, "gold_cui": gold})
            })
            .collect();
        lines.push_str(&serde_json::json!({"id": pid, "text": text, "mentions": ms}).to_string());
        lines.push('\n');
    }
    let path = root.join(name);
    fs::write(&path, lines).unwrap();
    path
}

/// Mentions that equal a concept name exactly.
pub fn exact_corpus(root: &Path) -> PathBuf {
    write_corpus(
        root,
        "corpus.jsonl",
        &[
            ("p1", "Seit gestern habe ich Kopfweh. Dazu Übelkeit.", &[("m1", "Kopfweh", "lay", "C0000001"), ("m2", "Übelkeit", "technical", "C0000008")]),
            ("p2", "Die Migräne ist schlimm.", &[("m3", "Migräne", "technical", "C0000002")]),
            ("p3", "Im Krankenhaus wurde das Nierenbecken untersucht.", &[("m4", "Krankenhaus", "lay", "C0000006"), ("m5", "Nierenbecken", "technical", "C0000005")]),
        ],
    )
}
