use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn streamprobe(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_streamprobe"))
        .args(args)
        .current_dir(cwd)
        .env_remove("STREAMPROBE_OUT_DIR")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn help_lists_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&streamprobe(&["--help"], dir.path()));
    for cmd in ["run-vsr", "run-vsc-repeat", "gen", "report"] {
        assert!(text.contains(cmd), "{text}");
    }
    let vsr = ok(&streamprobe(&["run-vsr", "--help"], dir.path()));
    assert!(vsr.contains("Ablation"), "{vsr}");
}

#[test]
fn generate_run_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&streamprobe(
        &[
            "gen", "--kind", "vsr", "--count", "4", "--frames", "200", "--dim", "32", "--out", "data",
        ],
        d,
    ));
    ok(&streamprobe(
        &[
            "gen", "--kind", "vsc", "--count", "3", "--dim", "16", "--noise", "0.05", "--out", "scenes",
        ],
        d,
    ));
    let summary = ok(&streamprobe(
        &[
            "run-vsr",
            "--manifests",
            "data/*.json",
            "--mode",
            "ensemble,basic,raw",
            "--out",
            "out",
            "--workers",
            "2",
        ],
        d,
    ));
    assert!(summary.contains("evaluated 12 question rows"), "{summary}");
    ok(&streamprobe(
        &["run-vsc-repeat", "--manifests", "scenes/*.json", "--out", "out"],
        d,
    ));

    let table = fs::read_to_string(d.join("out/vsr_table.csv")).unwrap();
    assert_eq!(
        table,
        "mode,synthetic\nbasic_prompt,1.0000\nensemble,1.0000\nraw_question,1.0000\n"
    );
    let oracle = fs::read_to_string(d.join("out/vsc_repeat_unique_counter.csv")).unwrap();
    assert!(oracle.starts_with("instance_id,k,pred,gold,mra\n"));
    assert_eq!(oracle.lines().count(), 1 + 3 * 5);
    assert!(oracle.lines().skip(1).all(|l| l.ends_with(",1.0000")));

    ok(&streamprobe(&["report", "--inputs", "out", "--out", "merged"], d));
    let mra = fs::read_to_string(d.join("merged/report_vsc_mra.csv")).unwrap();
    assert!(mra.contains("segment_counter,1,3,1.0000,"), "{mra}");
    assert!(mra.contains("segment_counter,2,3,0.0000,"), "{mra}");
    assert!(mra.contains("unique_counter,5,3,1.0000,"), "{mra}");
    assert_eq!(
        fs::read_to_string(d.join("merged/report_vsr_table.csv")).unwrap(),
        table
    );
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_streamprobe"))
        .args(["run-vsc-repeat", "--scenes", "2", "--sweep", "1,2"])
        .current_dir(dir.path())
        .env("STREAMPROBE_OUT_DIR", "from-env")
        .output()
        .unwrap();
    ok(&out);
    assert!(dir.path().join("from-env/vsc_rows.jsonl").exists());
}

#[test]
fn empty_glob_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = streamprobe(&["run-vsr", "--manifests", "missing/*.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_arguments_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        streamprobe(&["gen", "--kind", "bogus"], dir.path()).status.code(),
        Some(2)
    );
    assert_eq!(
        streamprobe(&["run-vsr", "--manifests", "x", "-k", "5"], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn infeasible_generation_exits_2_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = streamprobe(&["gen", "--kind", "vsr", "--margin", "1.0", "--out", "g"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("g").exists());
}

#[test]
fn malformed_manifest_exits_3_and_keeps_good_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&streamprobe(
        &[
            "gen", "--kind", "vsr", "--count", "2", "--frames", "100", "--dim", "16", "--out", "data",
        ],
        d,
    ));
    fs::write(d.join("data/zz-broken.json"), "{ not json").unwrap();
    let out = streamprobe(&["run-vsr", "--manifests", "data/*.json", "--out", "out"], d);
    assert_eq!(out.status.code(), Some(3));
    let rows = fs::read_to_string(d.join("out/vsr_rows.jsonl")).unwrap();
    assert_eq!(rows.lines().count(), 2);
}

#[test]
fn report_rejects_schema_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("rows.jsonl"),
        "{\"schema_version\":2,\"kind\":\"vsr\"}\n",
    )
    .unwrap();
    let out = streamprobe(&["report", "--inputs", "rows.jsonl", "--out", "r"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema_version"));
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = |workers: &str| {
        let _ = fs::remove_dir_all(d.join("out"));
        ok(&streamprobe(
            &[
                "run-vsc-repeat",
                "--scenes",
                "12",
                "--seed",
                "9",
                "--out",
                "out",
                "--workers",
                workers,
            ],
            d,
        ));
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(d.join("out"))
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (
                    p.file_name().unwrap().to_string_lossy().into_owned(),
                    fs::read(&p).unwrap(),
                )
            })
            .collect();
        files.sort();
        files
    };
    assert_eq!(run("1"), run("3"));
}
