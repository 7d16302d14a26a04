//! End-to-end checks of the `muxsbm` binary: exit codes, file contracts,
//! and determinism of the emitted artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn muxsbm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_muxsbm"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("muxsbm-cli-{}-{tag}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn assert_success(output: &Output) {
    assert!(
        output.status.success(),
        "command failed ({:?}):\n{}",
        output.status.code(),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn simulate(dir: &Path, n: usize, seed: u64, extra: &[&str]) {
    let mut cmd = muxsbm();
    cmd.args([
        "simulate",
        "--n",
        &n.to_string(),
        "--K",
        "2",
        "--Q",
        "2",
        "--seed",
        &seed.to_string(),
        "--p-in",
        "0.45,0.3",
        "--p-out",
        "0.05",
        "--out",
    ])
    .arg(dir)
    .args(extra);
    assert_success(&cmd.output().unwrap());
}

#[test]
fn simulate_writes_the_documented_files() {
    let dir = temp_dir("sim-files");
    simulate(&dir, 30, 7, &[]);
    for name in ["layer1.tsv", "layer2.tsv", "truth.json"] {
        assert!(dir.join(name).exists(), "missing {name}");
    }
    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth["seed"], 7);
    assert_eq!(truth["z"].as_array().unwrap().len(), 30);
    assert_eq!(truth["theta"]["Q"], 2);
}

#[test]
fn simulate_is_byte_deterministic() {
    let a = temp_dir("sim-det-a");
    let b = temp_dir("sim-det-b");
    simulate(&a, 25, 99, &[]);
    simulate(&b, 25, 99, &[]);
    for name in ["layer1.tsv", "layer2.tsv", "truth.json"] {
        let bytes_a = fs::read(a.join(name)).unwrap();
        let bytes_b = fs::read(b.join(name)).unwrap();
        assert_eq!(bytes_a, bytes_b, "{name} differs between identical runs");
    }
}

#[test]
fn missing_required_flag_exits_2_with_usage() {
    let output = muxsbm().args(["simulate", "--K", "2"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.to_lowercase().contains("usage"), "stderr: {stderr}");
}

#[test]
fn unreadable_input_exits_2() {
    let output = muxsbm()
        .args(["fit", "--layers", "/nonexistent/l1.tsv", "--q", "2"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn fit_with_one_block_reports_unit_alpha() {
    let dir = temp_dir("fit-q1");
    simulate(&dir, 20, 3, &[]);
    let out = dir.join("fit.json");
    let output = muxsbm()
        .args(["fit", "--layers"])
        .args([dir.join("layer1.tsv"), dir.join("layer2.tsv")])
        .args(["--q", "1", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_success(&output);
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let alpha = doc["alpha"].as_array().unwrap();
    assert_eq!(alpha.len(), 1);
    assert_eq!(alpha[0].as_f64().unwrap(), 1.0);
}

#[test]
fn fit_is_deterministic_and_scores_the_truth() {
    let dir = temp_dir("fit-det");
    simulate(&dir, 60, 11, &[]);
    let run = |out: &Path| {
        let output = muxsbm()
            .args(["fit", "--layers"])
            .args([dir.join("layer1.tsv"), dir.join("layer2.tsv")])
            .args(["--q", "2", "--seed", "7", "--restarts", "1", "--score"])
            .arg(dir.join("truth.json"))
            .arg("--out")
            .arg(out)
            .output()
            .unwrap();
        assert_success(&output);
    };
    let a = dir.join("fit_a.json");
    let b = dir.join("fit_b.json");
    run(&a);
    run(&b);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&a).unwrap()).unwrap();
    assert!(doc["ari"].as_f64().unwrap() >= 0.95);
    assert_eq!(doc["seed"].as_u64().unwrap(), 7);
}

#[test]
fn fit_json_round_trips_to_the_same_icl() {
    let dir = temp_dir("fit-rt");
    simulate(&dir, 40, 5, &[]);
    let out = dir.join("fit.json");
    let output = muxsbm()
        .args(["fit", "--layers"])
        .args([dir.join("layer1.tsv"), dir.join("layer2.tsv")])
        .args(["--q", "2", "--seed", "2", "--restarts", "2", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_success(&output);

    // Rebuild the parameters and MAP labels from the emitted JSON and
    // recompute the ICL with the library; it must match bit for bit.
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let q = doc["Q"].as_u64().unwrap() as usize;
    let k = doc["K"].as_u64().unwrap() as usize;
    let alpha: Vec<f64> = doc["alpha"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let mut pi = Vec::new();
    for row in doc["pi"].as_array().unwrap() {
        for cell in row.as_array().unwrap() {
            for v in cell.as_array().unwrap() {
                pi.push(v.as_f64().unwrap());
            }
        }
    }
    let params = muxsbm_core::model::BlockParameters::new(q, k, alpha, pi).unwrap();
    let labels: Vec<usize> = doc["map_assignment"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap() as usize)
        .collect();
    let z = muxsbm_core::model::Assignment::new(labels, q).unwrap();

    let (graph, _) = {
        let text1 = dir.join("layer1.tsv");
        let text2 = dir.join("layer2.tsv");
        load_layers_for_test(&[text1, text2])
    };
    let completed = muxsbm_core::model::complete_log_likelihood(&graph, &z, &params).unwrap();
    let icl =
        completed - muxsbm_core::selection::icl_penalty(q, graph.num_layers(), graph.num_nodes());
    assert_eq!(icl.to_bits(), doc["icl"].as_f64().unwrap().to_bits());
}

/// Minimal reimplementation of the layer loader for cross-checking outputs
/// without reaching into the binary's internals.
fn load_layers_for_test(paths: &[PathBuf]) -> (muxsbm_core::graph::MultiplexGraph, ()) {
    let mut edges_per_layer = Vec::new();
    let mut n = 0;
    for path in paths {
        let text = fs::read_to_string(path).unwrap();
        let mut edges = Vec::new();
        for line in text.lines() {
            if let Some(header) = line.strip_prefix('#') {
                for token in header.split_whitespace() {
                    if let Some(v) = token.strip_prefix("n=") {
                        n = v.parse().unwrap();
                    }
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let src: usize = it.next().unwrap().parse().unwrap();
            let dst: usize = it.next().unwrap().parse().unwrap();
            edges.push((src, dst));
        }
        edges_per_layer.push(edges);
    }
    let mut builder = muxsbm_core::graph::GraphBuilder::new(n, edges_per_layer.len()).unwrap();
    for (layer, edges) in edges_per_layer.iter().enumerate() {
        for &(src, dst) in edges {
            builder.add_edge(layer, src, dst).unwrap();
        }
    }
    (builder.finish().0, ())
}

#[test]
fn select_with_a_single_candidate_prints_it() {
    let dir = temp_dir("select-one");
    simulate(&dir, 20, 13, &[]);
    let output = muxsbm()
        .args(["select", "--layers"])
        .args([dir.join("layer1.tsv"), dir.join("layer2.tsv")])
        .args(["--qmin", "1", "--qmax", "1", "--seed", "1"])
        .output()
        .unwrap();
    assert_success(&output);
    assert_eq!(String::from_utf8_lossy(&output.stdout).trim(), "1");
}

#[test]
fn select_warns_below_the_small_sample_threshold() {
    let dir = temp_dir("select-warn");
    simulate(&dir, 6, 17, &[]);
    let output = muxsbm()
        .args(["select", "--layers"])
        .args([dir.join("layer1.tsv"), dir.join("layer2.tsv")])
        .args([
            "--qmin",
            "1",
            "--qmax",
            "4",
            "--seed",
            "1",
            "--restarts",
            "2",
        ])
        .output()
        .unwrap();
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("n < 2Q") || stderr.contains("below 2Q"),
        "stderr: {stderr}"
    );
}

#[test]
fn oracle_reports_a_tight_decomposition() {
    let dir = temp_dir("oracle");
    simulate(&dir, 6, 19, &[]);
    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("truth.json")).unwrap()).unwrap();
    fs::write(
        dir.join("theta.json"),
        serde_json::to_string(&truth["theta"]).unwrap(),
    )
    .unwrap();
    fs::write(
        dir.join("tau.json"),
        serde_json::to_string(&serde_json::json!({
            "tau": vec![vec![0.5, 0.5]; 6]
        }))
        .unwrap(),
    )
    .unwrap();
    let output = muxsbm()
        .args(["oracle", "--layers"])
        .args([dir.join("layer1.tsv"), dir.join("layer2.tsv")])
        .arg("--params")
        .arg(dir.join("theta.json"))
        .arg("--tau")
        .arg(dir.join("tau.json"))
        .output()
        .unwrap();
    assert_success(&output);
    let doc: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert!(doc["residual"].as_f64().unwrap() < 1e-8);
    assert!(doc["kl"].as_f64().unwrap() >= -1e-10);
    assert!(doc["elbo"].as_f64().unwrap() <= doc["exact_log_likelihood"].as_f64().unwrap() + 1e-8);
}

#[test]
fn summarize_produces_diagonal_cross_tab_for_map_labels() {
    let dir = temp_dir("summarize");
    simulate(&dir, 30, 23, &[]);
    let fit_out = dir.join("fit.json");
    let output = muxsbm()
        .args(["fit", "--layers"])
        .args([dir.join("layer1.tsv"), dir.join("layer2.tsv")])
        .args(["--q", "2", "--seed", "3", "--out"])
        .arg(&fit_out)
        .output()
        .unwrap();
    assert_success(&output);

    // Attribute file whose single attribute is the MAP label itself.
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&fit_out).unwrap()).unwrap();
    let labels: Vec<u64> = doc["map_assignment"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    let mut attrs = String::from("id\tmaplabel\n");
    for (node, label) in labels.iter().enumerate() {
        attrs.push_str(&format!("{node}\tc{label}\n"));
    }
    fs::write(dir.join("attrs.tsv"), attrs).unwrap();

    let summary_dir = dir.join("summary");
    let output = muxsbm()
        .args(["summarize", "--fit"])
        .arg(&fit_out)
        .arg("--attributes")
        .arg(dir.join("attrs.tsv"))
        .args(["--layers"])
        .args([dir.join("layer1.tsv"), dir.join("layer2.tsv")])
        .arg("--out")
        .arg(&summary_dir)
        .output()
        .unwrap();
    assert_success(&output);

    let cross = fs::read_to_string(summary_dir.join("cross_maplabel.csv")).unwrap();
    let lines: Vec<&str> = cross.lines().collect();
    assert_eq!(lines[0], "block,c0,c1");
    // Diagonal: block b has zero counts outside category cb.
    let sizes: Vec<usize> = fs::read_to_string(summary_dir.join("block_sizes.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    for (b, line) in lines[1..].iter().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        for (c, cell) in cells[1..].iter().enumerate() {
            let count: usize = cell.parse().unwrap();
            assert_eq!(count, if b == c { sizes[b] } else { 0 });
        }
    }

    // Degree summaries agree with an independent recomputation.
    let (graph, _) = load_layers_for_test(&[dir.join("layer1.tsv"), dir.join("layer2.tsv")]);
    let degrees = graph.degree_stats(0).unwrap();
    let block0: Vec<f64> = (0..30)
        .filter(|&i| labels[i] == 0)
        .map(|i| degrees.indegree[i] as f64)
        .collect();
    let rendered = fs::read_to_string(summary_dir.join("degrees_layer1_in.csv")).unwrap();
    let row: Vec<&str> = rendered.lines().nth(1).unwrap().split(',').collect();
    let min: f64 = row[1].parse().unwrap();
    let max: f64 = row[5].parse().unwrap();
    assert_eq!(min, block0.iter().cloned().fold(f64::INFINITY, f64::min));
    assert_eq!(
        max,
        block0.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    );
}

#[test]
fn lab_writes_error_tables() {
    let dir = temp_dir("lab");
    simulate(&dir, 10, 29, &[]);
    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("truth.json")).unwrap()).unwrap();
    fs::write(
        dir.join("theta.json"),
        serde_json::to_string(&truth["theta"]).unwrap(),
    )
    .unwrap();
    let lab_dir = dir.join("lab");
    let output = muxsbm()
        .args(["lab", "error-vs-n", "--params"])
        .arg(dir.join("theta.json"))
        .args([
            "--n-grid",
            "30,50",
            "--reps",
            "2",
            "--seed",
            "4",
            "--restarts",
            "2",
            "--out",
        ])
        .arg(&lab_dir)
        .output()
        .unwrap();
    // Exit 0 or 3 (assumption warnings) both leave the tables in place.
    assert!(matches!(output.status.code(), Some(0) | Some(3)));
    let errors = fs::read_to_string(lab_dir.join("errors.csv")).unwrap();
    assert_eq!(
        errors.lines().next().unwrap(),
        "n,replication,err_pi,err_alpha"
    );
    assert_eq!(errors.lines().count(), 1 + 4);
    assert!(lab_dir.join("medians.csv").exists());
    assert!(lab_dir.join("assumptions.json").exists());
}
