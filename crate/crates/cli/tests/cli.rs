use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const OSV: &str = env!("CARGO_BIN_EXE_osv");

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str], env: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(OSV);
    cmd.args(args).env_remove("OSV_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let Output { status, stdout, stderr } = cmd.output().unwrap();
    Run {
        code: status.code().unwrap_or(-1),
        stdout: String::from_utf8(stdout).unwrap(),
        stderr: String::from_utf8(stderr).unwrap(),
    }
}

fn write_input(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

#[derive(Debug, PartialEq)]
struct Row {
    token: String,
    phi_x: f64,
    phi_z: f64,
    stderr_x: f64,
    stderr_z: f64,
}

fn read_tsv(path: &Path) -> Vec<Row> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("slot\ttoken\tphi_x\tphi_z\tstderr_x\tstderr_z"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            assert_eq!(f.len(), 6, "{l}");
            Row {
                token: f[1].to_owned(),
                phi_x: f[2].parse().unwrap(),
                phi_z: f[3].parse().unwrap(),
                stderr_x: f[4].parse().unwrap(),
                stderr_z: f[5].parse().unwrap(),
            }
        })
        .collect()
}

fn explain(dir: &TempDir, input: &Path, extra: &[&str]) -> Run {
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["explain", "--input", input.to_str().unwrap(), "--out-dir", out];
    args.extend_from_slice(extra);
    run(&args, &[])
}

/// Features ranked by |phi|, occurrence features as `x{i}`, order as `z{i}`.
fn top_features(rows: &[Row], count: usize) -> Vec<String> {
    let mut all: Vec<(f64, String)> = rows
        .iter()
        .enumerate()
        .flat_map(|(i, r)| [(r.phi_x.abs(), format!("x{i}")), (r.phi_z.abs(), format!("z{i}"))])
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut top: Vec<String> = all.into_iter().take(count).map(|(_, n)| n).collect();
    top.sort();
    top
}

#[test]
fn exact_task1_explanation_concentrates_on_the_leading_pair() {
    let dir = TempDir::new().unwrap();
    let input = write_input(&dir, "in.txt", "1 1 2 3\n");
    let r = explain(
        &dir,
        &input,
        &["--model", "rule:task1", "--order-mode", "absolute", "--exact", "--g", "uniform-int:6"],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = read_tsv(&dir.path().join("explain-0.tsv"));
    assert_eq!(rows.iter().map(|r| r.token.as_str()).collect::<Vec<_>>(), ["1", "1", "2", "3"]);
    assert_eq!(top_features(&rows, 4), ["x0", "x1", "z0", "z1"]);
    assert!(rows.iter().all(|r| r.stderr_x == 0.0 && r.stderr_z == 0.0));
    let html = fs::read_to_string(dir.path().join("explain-0.html")).unwrap();
    assert!(html.contains("exact: true"));
}

#[test]
fn no_order_mode_gives_zero_order_column_and_default_value_fn() {
    let dir = TempDir::new().unwrap();
    let input = write_input(&dir, "in.txt", "4 4 0 5 2\n");
    let common = ["--model", "rule:task1", "--order-mode", "none", "--exact", "--g", "uniform-int:6"];
    assert_eq!(explain(&dir, &input, &common).code, 0);
    let default = read_tsv(&dir.path().join("explain-0.tsv"));
    assert!(default.iter().all(|r| r.phi_z == 0.0));
    assert!(default.iter().any(|r| r.phi_x != 0.0));

    let mut explicit = common.to_vec();
    explicit.extend(["--value-fn", "1,0"]);
    assert_eq!(explain(&dir, &input, &explicit).code, 0);
    assert_eq!(read_tsv(&dir.path().join("explain-0.tsv")), default);

    let mut reversed = common.to_vec();
    reversed.extend(["--value-fn", "0,1"]);
    assert_eq!(explain(&dir, &input, &reversed).code, 0);
    let flipped = read_tsv(&dir.path().join("explain-0.tsv"));
    for (a, b) in flipped.iter().zip(&default) {
        assert!((a.phi_x + b.phi_x).abs() < 1e-12);
    }
}

#[test]
fn one_report_per_input_line() {
    let dir = TempDir::new().unwrap();
    let input = write_input(&dir, "in.txt", "good movie\n\nnot good\ngood good bad\n");
    let r = explain(&dir, &input, &["--model", "stub", "--seed", "3", "--tolerance", "0.05"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    for i in 0..3 {
        assert!(dir.path().join(format!("explain-{i}.tsv")).exists());
    }
    assert!(!dir.path().join("explain-3.tsv").exists());
}

#[test]
fn tsv_and_html_carry_identical_numbers() {
    let dir = TempDir::new().unwrap();
    let input = write_input(&dir, "in.txt", "1 2 1 3 4\n");
    let r = explain(&dir, &input, &["--model", "rule:task3", "--g", "uniform-int:8", "--tolerance", "0.02"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = read_tsv(&dir.path().join("explain-0.tsv"));
    let html = fs::read_to_string(dir.path().join("explain-0.html")).unwrap();
    let cells = osv_core::report::html_cell_values(&html);
    let mut expected: Vec<f64> = rows.iter().map(|r| r.phi_x).collect();
    expected.extend(rows.iter().map(|r| r.phi_z));
    assert_eq!(cells, expected);
    assert!(html.contains("rgba(0,160,60,1.000)") || html.contains("rgba(230,40,140,1.000)"));
    assert!(!html.contains("http"));
}

#[test]
fn seed_environment_variable_overrides_the_flag() {
    let dir = TempDir::new().unwrap();
    let input = write_input(&dir, "in.txt", "good bad good ugly\n");
    let args = |seed: &'static str| {
        vec![
            "explain", "--model", "stub", "--input", input.to_str().unwrap(), "--out-dir",
            dir.path().to_str().unwrap(), "--tolerance", "0.05", "--seed", seed,
        ]
    };
    let read = || fs::read_to_string(dir.path().join("explain-0.tsv")).unwrap();
    assert_eq!(run(&args("5"), &[]).code, 0);
    let five = read();
    assert_eq!(run(&args("6"), &[]).code, 0);
    let six = read();
    assert_ne!(five, six);
    assert_eq!(run(&args("6"), &[("OSV_SEED", "5")]).code, 0);
    assert_eq!(read(), five);
    assert_eq!(run(&args("6"), &[("OSV_SEED", "five")]).code, 64);
}

#[test]
fn merge_slots_sums_rows() {
    let dir = TempDir::new().unwrap();
    let input = write_input(&dir, "in.txt", "the good movie\n");
    let base = ["--model", "stub", "--exact", "--g", "mask:[MASK]"];
    assert_eq!(explain(&dir, &input, &base).code, 0);
    let full = read_tsv(&dir.path().join("explain-0.tsv"));
    let mut merged_args = base.to_vec();
    merged_args.extend(["--merge-slots", "0-1"]);
    assert_eq!(explain(&dir, &input, &merged_args).code, 0);
    let merged = read_tsv(&dir.path().join("explain-0.tsv"));
    assert_eq!(merged.len(), 2);
    assert_eq!(merged[0].token, "the good");
    assert!((merged[0].phi_x - (full[0].phi_x + full[1].phi_x)).abs() < 1e-12);
    assert!((merged[0].phi_z - (full[0].phi_z + full[1].phi_z)).abs() < 1e-12);
    assert_eq!(merged[1], full[2]);

    merged_args.pop();
    merged_args.push("2-5");
    assert_eq!(explain(&dir, &input, &merged_args).code, 64);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let input = write_input(&dir, "in.txt", "good movie\n");
    let input_s = input.to_str().unwrap();
    let out = dir.path().to_str().unwrap();

    let usage = [
        vec!["explain", "--input", input_s],
        vec!["explain", "--model", "stub", "--input", input_s, "--order-mode", "sideways"],
        vec!["explain", "--model", "no-such-model", "--input", input_s, "--out-dir", out],
        vec!["explain", "--model", "stub", "--input", input_s, "--tolerance", "2", "--out-dir", out],
        vec!["explain", "--model", "stub", "--input", input_s, "--workers", "0", "--out-dir", out],
        vec!["explain", "--model", "stub", "--input", input_s, "--g", "bogus", "--out-dir", out],
        vec!["explain", "--model", "stub", "--input", input_s, "--value-fn", "maybe", "--out-dir", out],
        vec!["transform", "shout", "--input", input_s],
        vec!["synth", "--task", "4"],
    ];
    for args in &usage {
        let r = run(args, &[]);
        assert_eq!(r.code, 64, "{args:?}: {}", r.stderr);
        assert!(!r.stderr.is_empty());
    }

    let missing = run(&["explain", "--model", "stub", "--input", "/nonexistent/in.txt", "--out-dir", out], &[]);
    assert_eq!(missing.code, 66);

    let dead = run(
        &["explain", "--model", "subprocess:/nonexistent/server", "--input", input_s, "--out-dir", out],
        &[],
    );
    assert_eq!(dead.code, 69, "{}", dead.stderr);
    assert_eq!(dead.stderr.lines().count(), 1, "{}", dead.stderr);

    let unconverged = run(
        &["explain", "--model", "stub", "--input", input_s, "--out-dir", out, "--max-permutations", "2", "--tolerance", "0.0001"],
        &[],
    );
    assert_eq!(unconverged.code, 2);
    assert!(unconverged.stderr.contains("did not converge"));
    assert!(dir.path().join("explain-0.tsv").exists());

    assert_eq!(run(&["--help"], &[]).code, 0);
}

#[test]
fn global_requires_aligned_nonempty_input() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let ragged = write_input(&dir, "ragged.txt", "a b c\na b\n");
    let empty = write_input(&dir, "empty.txt", "\n\n");
    for input in [&ragged, &empty] {
        let r = run(&["global", "--model", "stub", "--input", input.to_str().unwrap(), "--out-dir", out], &[]);
        assert_eq!(r.code, 65, "{}", r.stderr);
    }
}

#[test]
fn loose_global_converges_in_one_pass() {
    let dir = TempDir::new().unwrap();
    let lines: String = (0..10).map(|i| format!("{i} {i} 7 8 9\n")).collect();
    let input = write_input(&dir, "in.txt", &lines);
    let r = run(
        &[
            "global", "--model", "rule:task1", "--input", input.to_str().unwrap(), "--out-dir",
            dir.path().to_str().unwrap(), "--tolerance", "0.5", "--g", "uniform-int:20",
        ],
        &[],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let html = fs::read_to_string(dir.path().join("global.html")).unwrap();
    assert!(html.contains("permutations: 1;"), "{html}");
    let rows = read_tsv(&dir.path().join("global.tsv"));
    assert_eq!(rows.iter().map(|r| r.token.as_str()).collect::<Vec<_>>(), ["*", "*", "7", "8", "9"]);
}

#[test]
fn global_over_task1_positives_matches_averaged_local_explanations() {
    let dir = TempDir::new().unwrap();
    let lines: String = (0..100)
        .map(|i: u32| format!("{} {} {} {}\n", i % 6, i % 6, (i * 7 + 1) % 6, (i * 5 + 2) % 6))
        .collect();
    let input = write_input(&dir, "in.txt", &lines);
    let flags = ["--model", "rule:task1", "--g", "uniform-int:6"];
    let mut global = vec!["global", "--input", input.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()];
    global.extend(flags);
    global.extend(["--tolerance", "0.01", "--seed", "4"]);
    let r = run(&global, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let sampled = read_tsv(&dir.path().join("global.tsv"));

    let mut exact = flags.to_vec();
    exact.push("--exact");
    assert_eq!(explain(&dir, &input, &exact).code, 0);
    let mut mean = vec![(0.0, 0.0); 4];
    for i in 0..100 {
        for (m, row) in mean.iter_mut().zip(read_tsv(&dir.path().join(format!("explain-{i}.tsv")))) {
            m.0 += row.phi_x / 100.0;
            m.1 += row.phi_z / 100.0;
        }
    }
    for (s, (x, z)) in sampled.iter().zip(&mean) {
        assert!((s.phi_x - x).abs() <= 3.0 * s.stderr_x, "{s:?} vs {x}");
        assert!((s.phi_z - z).abs() <= 3.0 * s.stderr_z, "{s:?} vs {z}");
    }
    assert_eq!(&top_features(&sampled, 2), &["x0", "x1"]);
}

#[test]
fn exact_and_tight_sampling_agree() {
    let dir = TempDir::new().unwrap();
    let input = write_input(&dir, "in.txt", "1 1 2\n");
    for (model, mode) in [("rule:task1", "absolute"), ("rule:task2", "relative"), ("rule:task3", "none")] {
        let common = ["--model", model, "--order-mode", mode, "--g", "uniform-int:4"];
        let mut exact = common.to_vec();
        exact.push("--exact");
        assert_eq!(explain(&dir, &input, &exact).code, 0);
        let e = read_tsv(&dir.path().join("explain-0.tsv"));
        let mut sampled = common.to_vec();
        // Convergence at this tolerance takes over a million permutations;
        // the agreement bound holds well before that.
        sampled.extend(["--tolerance", "0.001", "--max-permutations", "300000"]);
        let r = explain(&dir, &input, &sampled);
        assert!(r.code == 0 || r.code == 2, "{model}: {}", r.stderr);
        let s = read_tsv(&dir.path().join("explain-0.tsv"));
        for (a, b) in s.iter().zip(&e) {
            assert!((a.phi_x - b.phi_x).abs() <= 3.0 * a.stderr_x + 1e-12, "{model} {a:?} {b:?}");
            assert!((a.phi_z - b.phi_z).abs() <= 3.0 * a.stderr_z + 1e-12, "{model} {a:?} {b:?}");
        }
    }
}

#[test]
fn transforms_preserve_line_counts() {
    let dir = TempDir::new().unwrap();
    let sentences = write_input(&dir, "s.txt", "The movie is good.\nA fine film\nWhat a mess!\n");
    let pairs = write_input(&dir, "p.tsv", "a man sleeps\tnobody sleeps\tcontradiction\nit rains\tit is dry\n");
    let s = sentences.to_str().unwrap();

    let r = run(&["transform", "append_phrase", "--input", s, "--phrase-id", "2"], &[]);
    assert_eq!(r.code, 0);
    let lines: Vec<&str> = r.stdout.lines().collect();
    assert_eq!(lines, ["The movie is good not gonna lie.", "A fine film not gonna lie", "What a mess not gonna lie!"]);

    let out = dir.path().join("sym.txt");
    let r = run(&["transform", "prepend_symbol", "--input", s, "--symbol", ".", "--output", out.to_str().unwrap()], &[]);
    assert_eq!(r.code, 0);
    let original = fs::read_to_string(&sentences).unwrap();
    let prefixed = fs::read_to_string(&out).unwrap();
    assert_eq!(prefixed.lines().count(), original.lines().count());
    for (p, o) in prefixed.lines().zip(original.lines()) {
        assert_eq!(p.len(), o.len() + 2);
        assert!(p.starts_with(". "));
    }

    let r = run(&["transform", "hans_star", "--input", pairs.to_str().unwrap()], &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let lines: Vec<Vec<&str>> = r.stdout.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], ["a man sleeps", "a man sleeps", "entailment"]);
    assert_eq!(lines[1], ["it rains", "it rains"]);

    let r = run(&["transform", "hans_star", "--input", s], &[]);
    assert_eq!(r.code, 65);
    let r = run(&["transform", "append_phrase", "--input", s, "--position", "middle"], &[]);
    assert_eq!(r.code, 64);
}

fn synth(dir: &Path, workers: &str) -> Run {
    run(
        &[
            "synth", "--task", "3", "--k", "5", "--vocab", "30", "--count", "1000", "--explain-count", "30",
            "--seed", "12", "--tolerance", "0.02", "--workers", workers, "--out-dir", dir.to_str().unwrap(),
        ],
        &[],
    )
}

#[test]
fn synth_writes_deterministic_outputs() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let ra = synth(a.path(), "1");
    let rb = synth(b.path(), "4");
    assert_eq!(ra.code, 0, "{}", ra.stderr);
    assert_eq!(rb.code, 0);
    assert_eq!(ra.stdout, rb.stdout);
    let names = [
        "dataset-train.tsv", "dataset-test.tsv", "explained.tsv", "metrics.tsv", "phi.tsv", "phi.html",
        "phi_a.tsv", "phi_a.html", "phi_r.tsv", "phi_r.html",
    ];
    for name in names {
        let fa = fs::read(a.path().join(name)).unwrap();
        assert_eq!(fa, fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let metrics = fs::read_to_string(a.path().join("metrics.tsv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next(),
        Some("task\tmethod\tp_a\tp\tevaluations_per_instance\tpermutations\tconverged")
    );
    let methods: Vec<&str> = lines.map(|l| l.split('\t').nth(1).unwrap()).collect();
    assert_eq!(methods, ["phi", "phi_a", "phi_r"]);

    // Task 3 ignores order: order attributions stay small next to occurrence ones.
    let rows = read_tsv(&a.path().join("phi_a.tsv"));
    let max_x = rows.iter().map(|r| r.phi_x.abs()).fold(0.0, f64::max);
    let max_z = rows.iter().map(|r| r.phi_z.abs()).fold(0.0, f64::max);
    assert!(max_z < 0.05 * max_x, "{max_z} vs {max_x}");
    let explained = fs::read_to_string(a.path().join("explained.tsv")).unwrap();
    assert_eq!(explained.lines().count(), 30);
}
