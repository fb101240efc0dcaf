//! End-to-end tests of the `tlump` binary: pipeline wiring, exit codes,
//! lineage checking, and byte-level determinism of output files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tlump_cli::hash::sha256_hex;
use tlump_cli::json::{BlockmapFile, FiltrationFile, MetaFile, PartitionFile, ReportFile};

fn tlump(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tlump"))
        .current_dir(dir)
        .env_remove("TL_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(dir: &Path, args: &[&str]) -> String {
    let out = tlump(dir, args);
    assert!(
        out.status.success(),
        "command {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("stdout is text")
}

fn run_err(dir: &Path, args: &[&str], expected_code: i32) -> String {
    let out = tlump(dir, args);
    assert_eq!(
        out.status.code(),
        Some(expected_code),
        "command {args:?}: stdout={} stderr={}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stderr).expect("stderr is text")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("read {name}: {e}"))
}

fn path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

#[test]
fn full_pipeline_produces_consistent_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();

    run_ok(
        dir,
        &["generate", "coupon", "--n", "5", "--out", "chain.tp"],
    );
    let chain_text = read(dir, "chain.tp");
    let meta = MetaFile::parse(&read(dir, "chain.tp.meta.json")).unwrap();
    assert_eq!(meta.kind, "coupon");
    assert_eq!(meta.n_states, 31);
    assert_eq!(meta.seed, None);

    run_ok(
        dir,
        &[
            "refine",
            "--chain",
            "chain.tp",
            "--schedule",
            "0.5,0.1,0",
            "--out",
            "run.json",
        ],
    );
    let filtration = FiltrationFile::parse(&read(dir, "run.json")).unwrap();
    assert_eq!(filtration.chain_sha256, sha256_hex(chain_text.as_bytes()));
    assert!(filtration.reached_fixpoint);
    assert_eq!(filtration.steps[0].n_blocks, 2, "initial split is [T, rest]");

    run_ok(
        dir,
        &[
            "aggregate",
            "--chain",
            "chain.tp",
            "--filtration",
            "run.json",
            "--measure",
            "geometric",
            "--out",
            "agg.tp",
        ],
    );
    let blockmap = BlockmapFile::parse(&read(dir, "agg.tp.blockmap.json")).unwrap();
    assert_eq!(blockmap.chain_sha256, filtration.chain_sha256);
    assert_eq!(
        blockmap.aggregated_sha256,
        sha256_hex(read(dir, "agg.tp").as_bytes())
    );
    assert_eq!(blockmap.measure, "geometric");
    assert_eq!(blockmap.step_index, filtration.steps.len() - 1);

    let report_text = run_ok(
        dir,
        &[
            "--json",
            "distance",
            "--chain",
            "chain.tp",
            "--aggregated",
            "agg.tp",
            "--blockmap",
            "agg.tp.blockmap.json",
        ],
    );
    let report = ReportFile::parse(&report_text).unwrap();
    assert_eq!(report.chain_sha256, blockmap.chain_sha256);
    assert_eq!(report.aggregated_sha256, blockmap.aggregated_sha256);
    assert!(report.value >= 0.0);
    assert!(report.upper_bound >= report.value);
    assert!(
        report.value <= 1e-9,
        "exact-fixpoint aggregation reproduces the chain, got {}",
        report.value
    );
}

#[test]
fn regenerating_with_identical_inputs_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();

    let args = [
        "generate", "random", "--states", "60", "--density", "0.2", "--target-size", "3",
        "--seed", "7", "--out", "a.tp",
    ];
    run_ok(dir, &args);
    let first = read(dir, "a.tp");
    let first_meta = read(dir, "a.tp.meta.json");
    run_ok(dir, &args);
    assert_eq!(read(dir, "a.tp"), first);
    assert_eq!(read(dir, "a.tp.meta.json"), first_meta);

    // A different seed must give a different chain.
    run_ok(
        dir,
        &[
            "generate", "random", "--states", "60", "--density", "0.2", "--target-size", "3",
            "--seed", "8", "--out", "b.tp",
        ],
    );
    assert_ne!(read(dir, "b.tp"), first);
}

#[test]
fn thread_count_never_changes_output_files() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();

    run_ok(
        dir,
        &[
            "generate", "random", "--states", "80", "--density", "0.3", "--target-size", "4",
            "--out", "chain.tp",
        ],
    );
    let mut reference: Option<(String, String, String)> = None;
    for threads in ["0", "1", "2"] {
        let sub = dir.join(format!("t{threads}"));
        std::fs::create_dir(&sub).unwrap();
        std::fs::copy(path(dir, "chain.tp"), sub.join("chain.tp")).unwrap();
        run_ok(
            &sub,
            &[
                "--threads", threads, "refine", "--chain", "chain.tp", "--schedule", "0.4,0.1,0",
                "--out", "run.json",
            ],
        );
        run_ok(
            &sub,
            &[
                "--threads", threads, "aggregate", "--chain", "chain.tp", "--filtration",
                "run.json", "--out", "agg.tp",
            ],
        );
        let got = (
            read(&sub, "run.json"),
            read(&sub, "agg.tp"),
            read(&sub, "agg.tp.blockmap.json"),
        );
        match &reference {
            None => reference = Some(got),
            Some(seen) => assert_eq!(seen, &got, "--threads {threads} changed an output"),
        }
    }
}

#[test]
fn lifted_generation_writes_the_generating_partition() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();

    let block_chain = "tpchain 1 3 5.0000000000000000e-1\n\
                       T: 0\n\
                       0 0 1.0\n\
                       1 0 0.5 \n\
                       1 2 0.5\n\
                       2 1 0.25\n\
                       2 2 0.75\n";
    std::fs::write(path(dir, "blocks.tp"), block_chain).unwrap();

    run_ok(
        dir,
        &[
            "generate", "lifted", "--block-chain", "blocks.tp", "--sizes", "2,3,4", "--seed",
            "11", "--out", "lifted.tp",
        ],
    );
    let chain_text = read(dir, "lifted.tp");
    let partition = PartitionFile::parse(&read(dir, "lifted.tp.partition.json")).unwrap();
    assert_eq!(partition.chain_sha256, sha256_hex(chain_text.as_bytes()));
    assert_eq!(partition.n_states, 9);
    assert_eq!(
        partition.blocks,
        vec![vec![0, 1], vec![2, 3, 4], vec![5, 6, 7, 8]]
    );
    let meta = MetaFile::parse(&read(dir, "lifted.tp.meta.json")).unwrap();
    assert_eq!(meta.kind, "lifted");
    assert_eq!(meta.seed, Some(11));
    assert_eq!(
        meta.params["block_chain_sha256"],
        serde_json::json!(sha256_hex(block_chain.as_bytes()))
    );

    // An exact refinement of the lifted chain recovers ≤ 3 blocks, and the
    // aggregate is the block chain again up to float noise.
    run_ok(
        dir,
        &["refine", "--chain", "lifted.tp", "--schedule", "0", "--out", "run.json"],
    );
    let filtration = FiltrationFile::parse(&read(dir, "run.json")).unwrap();
    assert!(filtration.steps.last().unwrap().n_blocks <= 3);

    // Target must be exactly block 0 for lifting.
    let bad = "tpchain 1 2 5.0000000000000000e-1\nT: 1\n0 0 1.0\n1 1 1.0\n";
    std::fs::write(path(dir, "bad.tp"), bad).unwrap();
    run_err(
        dir,
        &[
            "generate", "lifted", "--block-chain", "bad.tp", "--sizes", "1,1", "--out", "x.tp",
        ],
        3,
    );
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    run_ok(dir, &["generate", "coupon", "--n", "3", "--out", "c.tp"]);

    let err = run_err(dir, &["generate", "coupon", "--n", "1", "--out", "x.tp"], 2);
    assert!(err.contains("2..=24"), "{err}");

    run_err(
        dir,
        &["generate", "coupon", "--n", "3", "--p", "0.5,0.5", "--out", "x.tp"],
        2,
    );
    run_err(
        dir,
        &["generate", "random", "--states", "5", "--density", "2.0", "--target-size", "1",
          "--out", "x.tp"],
        2,
    );
    run_err(
        dir,
        &["refine", "--chain", "c.tp", "--schedule", "0.1,0.5", "--out", "x.json"],
        2,
    );
    run_err(
        dir,
        &["refine", "--chain", "c.tp", "--schedule", "", "--out", "x.json"],
        2,
    );
    run_err(
        dir,
        &["refine", "--chain", "c.tp", "--schedule", "0.5,zero", "--out", "x.json"],
        2,
    );
    // Unknown flag and unknown measure are rejected by the parser itself.
    run_err(dir, &["refine", "--chain", "c.tp", "--bogus", "1"], 2);
    run_ok(dir, &["refine", "--chain", "c.tp", "--schedule", "0", "--out", "run.json"]);
    run_err(
        dir,
        &["aggregate", "--chain", "c.tp", "--filtration", "run.json", "--measure", "harmonic",
          "--out", "x.tp"],
        2,
    );
    run_err(
        dir,
        &["aggregate", "--chain", "c.tp", "--filtration", "run.json", "--step", "99",
          "--out", "x.tp"],
        2,
    );

    // Help and version are not errors.
    let out = tlump(dir, &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("generate"));
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    run_ok(dir, &["generate", "coupon", "--n", "3", "--out", "c.tp"]);
    run_ok(dir, &["refine", "--chain", "c.tp", "--schedule", "0.5,0", "--out", "run.json"]);
    run_ok(
        dir,
        &["aggregate", "--chain", "c.tp", "--filtration", "run.json", "--out", "agg.tp"],
    );

    // Missing and malformed chain files.
    run_err(dir, &["refine", "--chain", "nope.tp", "--schedule", "0", "--out", "x.json"], 3);
    std::fs::write(path(dir, "mangled.tp"), "tpchain 1 2 0.5\nT: 1\n0 0 0.9\n1 1 1.0\n").unwrap();
    let err = run_err(
        dir,
        &["refine", "--chain", "mangled.tp", "--schedule", "0", "--out", "x.json"],
        3,
    );
    assert!(err.contains("row 0"), "{err}");

    // A filtration used against a different chain is refused.
    run_ok(dir, &["generate", "coupon", "--n", "4", "--out", "other.tp"]);
    let err = run_err(
        dir,
        &["aggregate", "--chain", "other.tp", "--filtration", "run.json", "--out", "x.tp"],
        3,
    );
    assert!(err.contains("different chain"), "{err}");

    // Tampering with the aggregated chain breaks the block map lineage.
    let agg = read(dir, "agg.tp");
    std::fs::write(path(dir, "tampered.tp"), agg.replace("T: 0", "T: 0 1")).unwrap();
    run_err(
        dir,
        &[
            "distance", "--chain", "c.tp", "--aggregated", "tampered.tp", "--blockmap",
            "agg.tp.blockmap.json",
        ],
        3,
    );

    // Same block map, wrong base chain.
    run_err(
        dir,
        &[
            "distance", "--chain", "other.tp", "--aggregated", "agg.tp", "--blockmap",
            "agg.tp.blockmap.json",
        ],
        3,
    );

    // Differing discount factors are a consistency error even when hashes
    // are rebuilt to match.
    run_ok(
        dir,
        &["generate", "coupon", "--n", "3", "--beta", "0.6", "--out", "c6.tp"],
    );
    let mut blockmap = BlockmapFile::parse(&read(dir, "agg.tp.blockmap.json")).unwrap();
    blockmap.chain_sha256 = sha256_hex(read(dir, "c6.tp").as_bytes());
    std::fs::write(
        path(dir, "forged.blockmap.json"),
        tlump_cli::json::render(&blockmap),
    )
    .unwrap();
    let err = run_err(
        dir,
        &[
            "distance", "--chain", "c6.tp", "--aggregated", "agg.tp", "--blockmap",
            "forged.blockmap.json",
        ],
        3,
    );
    assert!(err.contains("discount factors differ"), "{err}");
}

#[test]
fn tl_threads_environment_variable_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    run_ok(dir, &["generate", "coupon", "--n", "3", "--out", "c.tp"]);

    let out = Command::new(env!("CARGO_BIN_EXE_tlump"))
        .current_dir(dir)
        .env("TL_THREADS", "2")
        .args(["refine", "--chain", "c.tp", "--schedule", "0", "--out", "relaxed.json"])
        .output()
        .unwrap();
    assert!(out.status.success());

    let out = Command::new(env!("CARGO_BIN_EXE_tlump"))
        .current_dir(dir)
        .env("TL_THREADS", "two")
        .args(["refine", "--chain", "c.tp", "--schedule", "0", "--out", "x.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "malformed TL_THREADS is a usage error");
}

#[test]
fn json_summaries_match_the_written_files() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();

    let stdout = run_ok(
        dir,
        &["--json", "generate", "coupon", "--n", "3", "--out", "c.tp"],
    );
    assert_eq!(stdout, read(dir, "c.tp.meta.json"));

    let stdout = run_ok(
        dir,
        &["--json", "refine", "--chain", "c.tp", "--schedule", "0.5,0", "--out", "run.json"],
    );
    assert_eq!(stdout, read(dir, "run.json"));

    let stdout = run_ok(
        dir,
        &["--json", "aggregate", "--chain", "c.tp", "--filtration", "run.json", "--out",
          "agg.tp"],
    );
    assert_eq!(stdout, read(dir, "agg.tp.blockmap.json"));
}
