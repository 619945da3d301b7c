use std::path::Path;
use std::process::{Command, Output};

use tsquery::samples::{S1, S2};

fn tsquery(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsquery"))
        .current_dir(dir)
        .env_remove("TSQUERY_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = tsquery(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    tsquery(dir, args).status.code().unwrap()
}

fn corpus(dir: &Path) {
    ok(dir, &["gen", "--count", "300", "--length", "64", "--seed", "5", "--out", "data.csv"]);
    ok(dir, &["build", "--in", "data.csv", "--mode", "normal", "--k", "2", "--out", "idx.tsrt"]);
}

#[test]
fn gen_is_deterministic_and_honours_the_seed_variable() {
    let dir = tempfile::tempdir().unwrap();
    let a = ok(dir.path(), &["gen", "--count", "5", "--length", "8", "--seed", "9"]);
    let b = Command::new(env!("CARGO_BIN_EXE_tsquery"))
        .args(["gen", "--count", "5", "--length", "8"])
        .env("TSQUERY_SEED", "9")
        .output()
        .unwrap();
    assert_eq!(a.as_bytes(), b.stdout.as_slice());
    assert_eq!(a.lines().count(), 6);
    assert_eq!(code(dir.path(), &["gen", "--count", "5", "--length", "8"]), 2);
}

#[test]
fn stock_pair_under_three_day_average() {
    let dir = tempfile::tempdir().unwrap();
    let row = |id: &str, v: &[f64]| format!("{id},{}\n", v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
    std::fs::write(dir.path().join("pair.csv"), row("s1", &S1) + &row("s2", &S2)).unwrap();
    ok(dir.path(), &["build", "--in", "pair.csv", "--mode", "raw", "--k", "2", "--capacity", "4", "--out", "p.tsrt"]);
    let out = ok(
        dir.path(),
        &["range", "--index", "p.tsrt", "--query-id", "s1", "--epsilon", "1", "--transform", "mavg:3", "--transform-query"],
    );
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "rank,id,distance");
    assert_eq!(rows[1], "1,s1,0.000000");
    let d: f64 = rows[2].strip_prefix("2,s2,").unwrap().parse().unwrap();
    assert!((d - 0.47).abs() < 0.01);
}

#[test]
fn identity_transform_output_matches_plain_query() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let base = ["range", "--index", "idx.tsrt", "--query-id", "s0010", "--epsilon", "4"];
    let plain = ok(dir.path(), &base);
    let mut with = base.to_vec();
    with.extend(["--transform", "identity"]);
    assert_eq!(plain, ok(dir.path(), &with));
}

#[test]
fn all_subcommands_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    let canon = ok(d, &["ingest", "--in", "data.csv"]);
    assert_eq!(canon, std::fs::read_to_string(d.join("data.csv")).unwrap());
    assert!(ok(d, &["audit", "--index", "idx.tsrt"]).contains("violations=0"));
    let knn = ok(d, &["knn", "--index", "idx.tsrt", "--query-id", "s0001", "--k", "4", "--transform", "warp:2", "--output-format", "tsv"]);
    assert_eq!(knn.lines().count(), 5);
    assert!(knn.starts_with("rank\tid\tdistance"));
    let join = ok(d, &["join", "--index", "idx.tsrt", "--epsilon", "1.5", "--transform", "mavg:8"]);
    let raw = ok(d, &["join", "--index", "idx.tsrt", "--epsilon", "1.5", "--transform", "mavg:8", "--raw-pairs"]);
    assert!(join.starts_with("idA,idB,distance"));
    assert_eq!(2 * (join.lines().count() - 1), raw.lines().count() - 1);
    let bench = ok(d, &["bench", "--index", "idx.tsrt", "--epsilon", "1", "--transform", "mavg:8", "--queries", "20", "--seed", "1"]);
    assert_eq!(bench.lines().count(), 5);
    let join_bench = ok(d, &["bench", "--index", "idx.tsrt", "--workload", "join", "--methods", "b,d", "--epsilon", "1"]);
    assert_eq!(join_bench.lines().count(), 3);
    std::fs::write(d.join("reg.txt"), "smooth, mavg, m=8, 0\n").unwrap();
    let named = ok(d, &["knn", "--index", "idx.tsrt", "--query-id", "s0001", "--k", "3", "--transform", "smooth", "--registry", "reg.txt"]);
    let builtin = ok(d, &["knn", "--index", "idx.tsrt", "--query-id", "s0001", "--k", "3", "--transform", "mavg:8"]);
    assert_eq!(named, builtin);
    std::fs::write(d.join("q.csv"), std::fs::read_to_string(d.join("data.csv")).unwrap().lines().take(3).collect::<Vec<_>>().join("\n")).unwrap();
    let by_file = ok(d, &["range", "--index", "idx.tsrt", "--query-file", "q.csv", "--epsilon", "1e-6"]);
    assert!(by_file.contains(",s0000,"));
}

#[test]
fn failures_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    let q = ["range", "--index", "idx.tsrt", "--query-id", "s0001", "--epsilon", "1", "--transform"];
    let with = |t: &str| {
        let mut v = q.to_vec();
        v.push(t);
        code(d, &v)
    };
    let unknown = with("smooth-it");
    let unsafe_ = with("affine:1:5");
    let missing = code(d, &["audit", "--index", "nope.tsrt"]);
    let flags = code(d, &["range", "--index", "idx.tsrt", "--epsilon", "x", "--query-id", "s1"]);
    let negative = code(d, &["range", "--index", "idx.tsrt", "--query-id", "s0001", "--epsilon=-1"]);
    std::fs::write(d.join("junk.tsrt"), b"not an index").unwrap();
    let junk = code(d, &["audit", "--index", "junk.tsrt"]);
    let codes = [unknown, unsafe_, missing, flags, negative, junk];
    assert!(codes.iter().all(|&c| c != 0));
    assert_eq!(codes.iter().collect::<std::collections::BTreeSet<_>>().len(), codes.len(), "{codes:?}");
    let out = tsquery(d, &["range", "--index", "idx.tsrt", "--query-id", "s0001", "--epsilon", "1", "--transform", "affine:1:5"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("not safe"));
}
