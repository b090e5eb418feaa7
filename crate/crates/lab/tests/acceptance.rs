//! Release gate: every acceptance criterion at its stated tolerance, one
//! pass/fail line per criterion (visible with `-- --nocapture`, always
//! printed on failure).

use lqrlab::acceptance::run_all;

#[test]
fn acceptance_criteria() {
    let dir = std::env::temp_dir().join(format!("lqrlab-acceptance-{}", std::process::id()));
    let results = run_all(&dir);
    let mut failed = Vec::new();
    for r in &results {
        println!("{}", r.line());
        if !r.passed {
            failed.push(r.line());
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    assert_eq!(results.len(), 11);
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
