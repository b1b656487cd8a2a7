//! End-to-end runs of the `mtscale` binary.
//!
//! Byte-stable outputs are compared against files in `tests/golden`. Set
//! `MTSCALE_BLESS=1` to rewrite them after an intended change.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mtscale::commands::{FitDocument, PlanDocument};
use mtscale_core::lawfit::LawFit;
use mtscale_core::mixer::MixPlan;
use mtscale_core::packer::{self, BoundaryPolicy};
use std::collections::BTreeMap;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn mtscale(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtscale"))
        .args(args)
        .env_remove("MTSCALE_CONFIG_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mtscale(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn golden(name: &str, actual: &[u8]) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    if std::env::var_os("MTSCALE_BLESS").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected =
        fs::read(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
    assert!(expected == actual, "{name} differs from its golden file");
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const VOCAB: &str = "1024";

#[test]
fn mix_worked_examples() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture("datasets.csv");
    for (t, small) in [("1", 10), ("5", 63), ("1e9", 99)] {
        let out = dir.path().join(format!("mix_{t}.json"));
        ok(&["mix", s(&manifest), "--temperature", t, "--out", s(&out)]);
        let plans: BTreeMap<String, MixPlan> =
            serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
        let general = &plans["general"];
        assert_eq!(general.entries[0].oversampled_size, 100);
        assert_eq!(general.entries[1].oversampled_size, small);
        assert_eq!(plans["finance"].entries[0].oversampled_size, 40);
        if t == "5" {
            golden("mix_t5.json", &fs::read(&out).unwrap());
        }
    }
}

#[test]
fn mix_index_stream_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture("datasets.csv");
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(format!("{name}.json"));
        let idx = dir.path().join(format!("{name}.csv"));
        ok(&[
            "mix",
            s(&manifest),
            "--seed",
            seed,
            "--out",
            s(&out),
            "--indices",
            s(&idx),
        ]);
        fs::read_to_string(idx).unwrap()
    };
    let a = run("3", "a");
    let b = run("3", "b");
    let c = run("4", "c");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.lines().count(), 1 + 100 + 63 + 40 + 28);
    assert_eq!(
        a.lines()
            .filter(|l| l.starts_with("general,small,"))
            .count(),
        63
    );
}

#[test]
fn mix_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "id,group,size\na,g,0\n").unwrap();
    let out = dir.path().join("mix.json");
    assert_eq!(code(&mtscale(&["mix", s(&bad), "--out", s(&out)])), 2);
    assert!(!out.exists());
    let manifest = fixture("datasets.csv");
    assert_eq!(
        code(&mtscale(&[
            "mix",
            s(&manifest),
            "-t",
            "0",
            "--out",
            s(&out)
        ])),
        2
    );
}

fn expected_stream() -> Vec<u32> {
    let mut v = vec![11, 12, 13, 1000, 1004, 1003, 1006, 21, 22, 1001];
    v.extend([31, 32, 33, 34, 1000, 1003, 1005, 1007, 41, 42, 43, 1001]);
    v.extend([51, 1000, 1005, 1004, 1006, 61, 62, 63, 64, 65, 66, 1001]);
    v
}

#[test]
fn pack_split_golden_shard() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("split.bin");
    let stdout = ok(&[
        "pack",
        s(&fixture("samples.jsonl")),
        "--registry",
        s(&fixture("registry.json")),
        "--vocab-size",
        VOCAB,
        "--seq-len",
        "8",
        "--out",
        s(&out),
    ]);
    assert!(stdout.contains("samples 3\n"), "{stdout}");
    let bytes = fs::read(&out).unwrap();
    assert_eq!(&bytes[..4], b"PKSH");
    assert_eq!(bytes.len(), 25 + 5 * (8 * 4 + 1));

    let shard = packer::decode_shard(&bytes).unwrap();
    assert_eq!(shard.policy, BoundaryPolicy::Split);
    let flat: Vec<u32> = shard
        .sequences
        .iter()
        .flat_map(|s| s.tokens.clone())
        .collect();
    let mut expected = expected_stream();
    expected.resize(40, 1002);
    assert_eq!(flat, expected);
    golden("pack_split_8.bin", &bytes);
}

#[test]
fn pack_droptail_and_eos_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("drop.bin");
    let registry = fixture("registry.json");
    let result = mtscale(&[
        "pack",
        s(&fixture("samples.jsonl")),
        "--registry",
        s(&registry),
        "--vocab-size",
        VOCAB,
        "--seq-len",
        "11",
        "--policy",
        "droptail",
        "--eos-prefix",
        "--out",
        s(&out),
    ]);
    assert!(result.status.success());
    assert!(String::from_utf8_lossy(&result.stderr).contains("skipped 2 samples"));
    let shard = packer::decode_shard(&fs::read(&out).unwrap()).unwrap();
    assert_eq!(shard.sequences.len(), 1);
    let mut expected = vec![1001];
    expected.extend(&expected_stream()[..10]);
    assert_eq!(shard.sequences[0].tokens, expected);
    assert!(!shard.sequences[0].loss_mask[0]);
    golden("pack_droptail_11.bin", &fs::read(&out).unwrap());

    let stats = ok(&[
        "stats",
        s(&out),
        "--registry",
        s(&registry),
        "--vocab-size",
        VOCAB,
    ]);
    assert!(
        stats.contains("samples 1\n") && stats.contains("loss_tokens 5\n"),
        "{stats}"
    );
}

#[test]
fn pack_rejects_unknown_controls() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("s.jsonl");
    fs::write(
        &samples,
        "{\"source_tokens\":[1],\"target_tokens\":[2],\"source_lang\":\"en\",\"target_lang\":\"xx\",\"domain\":\"general\"}\n",
    )
    .unwrap();
    let out = dir.path().join("s.bin");
    let registry = fixture("registry.json");
    let result = mtscale(&[
        "pack",
        s(&samples),
        "--registry",
        s(&registry),
        "--vocab-size",
        VOCAB,
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&result), 2);
    assert!(String::from_utf8_lossy(&result.stderr).contains("<lang_xx>"));
    assert!(!out.exists());

    let broken = dir.path().join("registry.json");
    fs::write(
        &broken,
        "{\"</src>\": 1, \"<eos>\": 1, \"<pad>\": 2, \"<lang_en>\": 3, \"<dom_x>\": 4}",
    )
    .unwrap();
    let result = mtscale(&[
        "pack",
        s(&fixture("samples.jsonl")),
        "--registry",
        s(&broken),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&result), 2);
}

#[test]
fn registry_found_through_config_dir() {
    let out = Command::new(env!("CARGO_BIN_EXE_mtscale"))
        .args([
            "prefix",
            "11",
            "12",
            "--registry",
            "registry.json",
            "--vocab-size",
            VOCAB,
            "--target-lang",
            "fr",
        ])
        .env("MTSCALE_CONFIG_DIR", fixture(""))
        .current_dir(std::env::temp_dir())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        "1001 11 12 1000 1004\n"
    );
}

#[test]
fn prefix_layout() {
    let registry = fixture("registry.json");
    let line = ok(&[
        "prefix",
        "11",
        "12",
        "--registry",
        s(&registry),
        "--vocab-size",
        VOCAB,
        "--target-lang",
        "fr",
        "--source-lang",
        "en",
        "--domain",
        "finance",
        "--no-eos",
    ]);
    assert_eq!(line, "11 12 1000 1004 1003 1007\n");
}

fn fields(line: &str) -> Vec<&str> {
    line.split_whitespace().collect()
}

#[test]
fn params_tables() {
    let one = ok(&["params", "--arch", "pythia70m"]);
    let lines: Vec<&str> = one.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(
        fields(lines[1]),
        ["70M", "70295552", "51380224", "6", "512", "8", "1e-3"]
    );
    golden("params_pythia70m.txt", one.as_bytes());

    let all = ok(&["params", "--arch", "all"]);
    assert_eq!(all.lines().count(), 7);
    assert_eq!(
        fields(all.lines().last().unwrap()),
        [
            "6.9B",
            "6855204864",
            "411041792",
            "32",
            "4096",
            "32",
            "1e-4"
        ]
    );
    golden("params_all.txt", all.as_bytes());

    let scaled = ok(&["params", "--arch", "scaled"]);
    assert!(scaled.contains("note: 70M+12l: non-embedding: computed 89209856, published 178339840"));
    assert_eq!(scaled.matches("note:").count(), 1);
    golden("params_scaled.txt", scaled.as_bytes());

    let csv = ok(&["params", "--arch", "all", "--format", "csv"]);
    assert!(csv.starts_with("model,non_embedding,embedding,total,"));
    assert_eq!(code(&mtscale(&["params", "--arch", "gpt5"])), 2);
}

#[test]
fn params_from_arch_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("arch.json");
    fs::write(
        &file,
        r#"[{"name": "tiny", "layers": 2, "hidden": 64, "heads": 4, "vocab_size": 1000}]"#,
    )
    .unwrap();
    let out = ok(&["params", "--arch", s(&file), "--format", "json"]);
    let rows: serde_json::Value = serde_json::from_str(&out).unwrap();
    let v = 1024u64;
    let expected = 2 * (12 * 64 * 64 + 13 * 64) + 2 * 64 + v * 64;
    assert_eq!(rows[0]["non_embedding"], expected);
    assert_eq!(rows[0]["embedding"], v * 64);

    fs::write(
        &file,
        r#"{"name": "odd", "layers": 2, "hidden": 65, "heads": 4}"#,
    )
    .unwrap();
    assert_eq!(code(&mtscale(&["params", "--arch", s(&file)])), 2);
}

#[test]
fn flops_tables() {
    let exact = ok(&["flops", "--arch", "scaled", "--mode", "exact"]);
    golden("flops_scaled_exact.txt", exact.as_bytes());
    let json = ok(&[
        "flops",
        "--arch",
        "pythia70m",
        "--mode",
        "sixnd",
        "--format",
        "json",
    ]);
    let rows: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(
        rows[0]["train_per_token"].as_f64().unwrap(),
        6.0 * 70_295_552.0
    );
    assert_eq!(
        rows[0]["train_per_sample"].as_f64().unwrap(),
        6.0 * 70_295_552.0 * 512.0
    );
    assert_eq!(rows[0]["relative"].as_f64().unwrap(), 1.0);
}

fn read_fit(path: &Path) -> FitDocument {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn fit_chinchilla_recovers_fixture_law() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fit.json");
    let curve = dir.path().join("curve.csv");
    ok(&[
        "fit",
        s(&fixture("chinchilla.csv")),
        "--law",
        "chinchilla",
        "--out",
        s(&out),
        "--curve",
        s(&curve),
    ]);
    let LawFit::Chinchilla(f) = read_fit(&out).fit.unwrap() else {
        panic!("wrong law")
    };
    for (got, want) in [
        (f.e, 1.7),
        (f.a, 400.0),
        (f.alpha, 0.34),
        (f.b, 1200.0),
        (f.beta, 0.28),
    ] {
        assert!(((got - want) / want).abs() < 1e-6, "{f:?}");
    }
    let curve = fs::read_to_string(curve).unwrap();
    assert!(curve.starts_with("group,model,n,d,loss\n"));
    assert_eq!(curve.lines().count(), 1 + 6 * 100);
}

#[test]
fn fit_flat_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fit.json");
    ok(&[
        "fit",
        s(&fixture("flat.csv")),
        "--law",
        "power",
        "--out",
        s(&out),
    ]);
    let LawFit::Power(f) = read_fit(&out).fit.unwrap() else {
        panic!("wrong law")
    };
    assert!((f.beta - 2.0).abs() < 1e-6);
    assert!(f.alpha * 1e7f64.powf(-f.p) < 1e-6);
}

#[test]
fn fit_uses_final_checkpoints_and_reports_holdout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fit.json");
    let report = dir.path().join("holdout.json");
    let stdout = ok(&[
        "fit",
        s(&fixture("ladder.csv")),
        "--law",
        "power",
        "--holdout-ladder",
        "p0,p1,p2,p3,p4,p5",
        "--holdout-out",
        s(&report),
        "--out",
        s(&out),
    ]);
    assert!(stdout.contains("Dropped"));
    let LawFit::Power(f) = read_fit(&out).fit.unwrap() else {
        panic!("wrong law")
    };
    assert!(
        (f.p - 0.34).abs() < 1e-6 && (f.beta - 1.7).abs() < 1e-6,
        "{f:?}"
    );

    let json: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(json["subsets"].as_array().unwrap().len(), 3);
    let csv = fs::read_to_string(dir.path().join("holdout.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 1 + 2 + 3);
    for line in csv.lines().skip(1) {
        let rel: f64 = line.split(',').nth(7).unwrap().parse().unwrap();
        assert!(rel.abs() < 1e-4, "{line}");
    }

    let short = mtscale(&[
        "fit",
        s(&fixture("ladder.csv")),
        "--law",
        "power",
        "--holdout-ladder",
        "p0,p1,p2",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&short), 3);
}

#[test]
fn fit_groups_and_insufficient_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("groups.json");
    let result = mtscale(&[
        "fit",
        s(&fixture("power_groups.csv")),
        "--law",
        "power",
        "--group-by",
        "direction",
        "--out",
        s(&out),
    ]);
    assert!(result.status.success());
    assert!(String::from_utf8_lossy(&result.stderr).contains("skipped fr-en"));
    let doc = read_fit(&out);
    let beta = |g: &str| match doc.select(Some(g)).unwrap() {
        LawFit::Power(f) => f.beta,
        _ => unreachable!(),
    };
    assert!(beta("en-de") < beta("de-en"));
    assert!(doc.select(Some("fr-en")).is_err());

    let two = dir.path().join("two.csv");
    fs::write(&two, "model,N,D,loss\na,1e7,1e8,3\nb,1e8,1e8,2.5\n").unwrap();
    let fit = dir.path().join("two.json");
    let result = mtscale(&["fit", s(&two), "--law", "power", "--out", s(&fit)]);
    assert_eq!(code(&result), 3);
    assert!(String::from_utf8_lossy(&result.stderr).contains("insufficient data"));
    assert!(!fit.exists());

    let result = mtscale(&[
        "fit",
        s(&two),
        "--law",
        "power",
        "--group-by",
        "domain",
        "--out",
        s(&fit),
    ]);
    assert_eq!(code(&result), 3);
    assert!(String::from_utf8_lossy(&result.stderr).contains("-: insufficient data"));
}

fn plan(args: &[&str]) -> (Output, Option<PlanDocument>) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("plan.json");
    let fit = fixture("fit_chinchilla.json");
    let mut full = vec!["plan", s(&fit), "--out", s(&out)];
    full.extend_from_slice(args);
    let result = mtscale(&full);
    let doc = out
        .exists()
        .then(|| serde_json::from_slice(&fs::read(&out).unwrap()).unwrap());
    (result, doc)
}

fn law(n: f64, d: f64) -> f64 {
    1.7 + 400.0 / n.powf(0.34) + 1200.0 / d.powf(0.28)
}

#[test]
fn plan_inversions_round_trip() {
    let target = law(1e9, 1e10);
    let (_, doc) = plan(&["--target-loss", &target.to_string(), "--n", "1e9"]);
    let Some(PlanDocument::DataNeeded { d, .. }) = doc else {
        panic!("{doc:?}")
    };
    assert!(((d - 1e10) / 1e10).abs() < 1e-9);

    let (_, doc) = plan(&["--target-loss", &target.to_string(), "--d", "1e10"]);
    let Some(PlanDocument::ParamsNeeded { n, .. }) = doc else {
        panic!("{doc:?}")
    };
    assert!(((n - 1e9) / 1e9).abs() < 1e-9);
}

#[test]
fn plan_reports_infeasible_targets() {
    let (result, doc) = plan(&["--target-loss", "1.5", "--n", "1e9"]);
    assert_eq!(code(&result), 4);
    assert!(doc.is_none());
    let floor = 1.7 + 400.0 / 1e9f64.powf(0.34);
    assert!(String::from_utf8_lossy(&result.stderr).contains(&format!("floor is {floor}")));
}

#[test]
fn plan_isoflop_and_match() {
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("iso.csv");
    let (result, doc) = plan(&["--flop-budget", "1e21", "--curve", s(&curve)]);
    assert!(result.status.success());
    let Some(PlanDocument::IsoFlop { n, d, .. }) = doc else {
        panic!("{doc:?}")
    };
    let (a, b, alpha, beta) = (400.0f64, 1200.0f64, 0.34f64, 0.28f64);
    let g = (alpha * a / (beta * b)).powf(1.0 / (alpha + beta));
    let closed = g * (1e21f64 / 6.0).powf(beta / (alpha + beta));
    assert!(((n - closed) / closed).abs() < 1e-3);
    assert!(((6.0 * n * d - 1e21) / 1e21).abs() < 1e-9);
    assert_eq!(fs::read_to_string(&curve).unwrap().lines().count(), 201);

    let (_, doc) = plan(&["--match", "pythia410m:pythia410m", "--big-d", "1e10"]);
    let Some(PlanDocument::Match { result, .. }) = doc else {
        panic!("{doc:?}")
    };
    assert_eq!(result.multiplier, 1.0);

    let (_, doc) = plan(&[
        "--match",
        "pythia70m:pythia410m",
        "--big-d",
        "1e10",
        "--mode",
        "exact",
    ]);
    let Some(PlanDocument::Match { result, .. }) = doc else {
        panic!("{doc:?}")
    };
    assert!(result.multiplier > 1.0);

    let (result, _) = plan(&["--match", "1e3:pythia410m", "--big-d", "1e10"]);
    assert_eq!(code(&result), 4);
    let (result, _) = plan(&["--flop-budget", "1e21", "--mode", "exact"]);
    assert_eq!(code(&result), 2);
    let (result, _) = plan(&["--target-loss", "3"]);
    assert_eq!(code(&result), 2);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let out = dir.path().join("fit.json");
        let curve = dir.path().join("curve.csv");
        ok(&[
            "fit",
            s(&fixture("ladder.csv")),
            "--law",
            "power",
            "--seed",
            "7",
            "--random-starts",
            "5",
            "--out",
            s(&out),
            "--curve",
            s(&curve),
        ]);
        let manifest = dir.path().join("fit.json.manifest.json");
        outputs.push((
            fs::read(&out).unwrap(),
            fs::read(&curve).unwrap(),
            fs::read(&manifest).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);

    let manifest: serde_json::Value = serde_json::from_slice(&outputs[0].2).unwrap();
    assert_eq!(manifest["command"], "fit");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config"]["random_starts"], 5);
    let digest = mtscale::manifest::sha256_hex(&fs::read(fixture("ladder.csv")).unwrap());
    assert_eq!(manifest["inputs"][0]["sha256"], digest);
}

#[test]
fn corrupt_shard_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.bin");
    fs::write(&path, b"PKSX").unwrap();
    let result = mtscale(&[
        "stats",
        s(&path),
        "--registry",
        s(&fixture("registry.json")),
        "--vocab-size",
        VOCAB,
    ]);
    assert_eq!(code(&result), 2);
}
