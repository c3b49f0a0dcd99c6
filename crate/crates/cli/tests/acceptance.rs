//! Acceptance check for the command-line tool: every subcommand, invoked
//! twice in a row with the same inputs and output locations, must write
//! byte-identical files and print byte-identical stdout.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_rfedit")
}

/// Runs the tool, requiring success, and returns captured stdout.
fn run(args: &[&str]) -> Vec<u8> {
    let out = Command::new(bin())
        .args(args)
        .output()
        .expect("binary launches");
    assert!(
        out.status.success(),
        "rfedit {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

/// File names and contents under a directory, sorted by name.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .expect("output dir exists")
        .map(|entry| {
            let entry = entry.expect("readable entry");
            let name = entry.file_name().into_string().expect("utf8 file name");
            let bytes = fs::read(entry.path()).expect("readable file");
            (name, bytes)
        })
        .collect();
    entries.sort();
    entries
}

/// Two consecutive invocations into the same output directory; the second
/// overwrites the first, so any drift shows up in the snapshot comparison.
fn rerun_matches(label: &str, args: &[&str], out_dir: &Path) -> bool {
    let stdout_a = run(args);
    let files_a = snapshot(out_dir);
    let stdout_b = run(args);
    let files_b = snapshot(out_dir);
    let ok = stdout_a == stdout_b && files_a == files_b && !files_a.is_empty();
    if !ok {
        eprintln!("subcommand {label} drifted between consecutive runs");
    }
    ok
}

#[test]
fn criterion_09_deterministic_reruns() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let base = tmp.path();
    let mut passed = Vec::new();

    let recon_dir = base.join("recon");
    let recon_out = recon_dir.to_str().expect("utf8 path");
    passed.push(rerun_matches(
        "reconstruct",
        &["reconstruct", "--preset", "tiny", "--out", recon_out],
        &recon_dir,
    ));

    let edit_dir = base.join("edit");
    let edit_out = edit_dir.to_str().expect("utf8 path");
    passed.push(rerun_matches(
        "edit",
        &["edit", "--preset", "tiny", "--out", edit_out],
        &edit_dir,
    ));

    let sweep_dir = base.join("sweep");
    let sweep_out = sweep_dir.to_str().expect("utf8 path");
    passed.push(rerun_matches(
        "sweep-eta",
        &[
            "sweep-eta",
            "--preset",
            "tiny",
            "--etas",
            "1.0,0.9,0.8",
            "--out",
            sweep_out,
        ],
        &sweep_dir,
    ));

    let curves = recon_dir.join("curves.csv");
    let plot_dir = base.join("plot");
    let plot_out = plot_dir.to_str().expect("utf8 path");
    passed.push(rerun_matches(
        "plot",
        &[
            "plot",
            "--input",
            curves.to_str().expect("utf8 path"),
            "--out",
            plot_out,
        ],
        &plot_dir,
    ));

    let selftest_a = run(&["selftest"]);
    let selftest_b = run(&["selftest"]);
    let selftest_ok = selftest_a == selftest_b && !selftest_a.is_empty();
    if !selftest_ok {
        eprintln!("subcommand selftest drifted between consecutive runs");
    }
    passed.push(selftest_ok);

    let ok = passed.iter().all(|&p| p);
    println!(
        "criterion 09 deterministic reruns: {} ({} of {} subcommands byte-identical)",
        if ok { "pass" } else { "FAIL" },
        passed.iter().filter(|&&p| p).count(),
        passed.len()
    );
    assert!(ok, "per-subcommand results: {passed:?}");
}
