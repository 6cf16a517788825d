//! Acceptance gate: runs every verification criterion at its pinned
//! tolerance and prints one pass/fail line per criterion.
//!
//! `cargo test --test acceptance -- --nocapture` shows the matrix; the same
//! suite backs `nlkg verify-all`.

use nlkg_core::acceptance::run_all;

#[test]
fn acceptance_suite() {
    let work = std::env::temp_dir().join(format!("nlkg-acceptance-{}", std::process::id()));
    let results = run_all(&work).expect("suite runs");
    let mut all_ok = true;
    for r in &results {
        println!("{}", r.line());
        all_ok &= r.pass;
    }
    let _ = std::fs::remove_dir_all(&work);
    assert!(all_ok, "acceptance criteria failed; see the matrix above");
}
