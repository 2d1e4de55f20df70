mod support;

use std::collections::HashMap;
use std::fs;

use support::{code, fixture, overall, p, run, stdout, FIXTURE_STREAMS};
use tempfile::TempDir;

fn lines(path: &std::path::Path) -> Vec<serde_json::Value> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn gen_is_deterministic_per_seed() {
    let dir = TempDir::new().unwrap();
    let gen = |seed: &str, tag: &str| {
        let out = dir.path().join(format!("{tag}.jsonl"));
        let truth = dir.path().join(format!("{tag}.truth"));
        let o = run(&["gen", "--kind", "gaussians", "--steps", "3", "--seed", seed, "--out", p(&out), "--truth-out", p(&truth)]);
        assert_eq!(code(&o), 0, "{o:?}");
        (fs::read(out).unwrap(), fs::read(truth).unwrap())
    };
    let a = gen("1", "a");
    assert_eq!(a, gen("1", "b"));
    assert_ne!(a.0, gen("2", "c").0);

    let recs = lines(&dir.path().join("a.jsonl"));
    let mut ts: Vec<u64> = recs.iter().map(|r| r["t"].as_u64().unwrap()).collect();
    ts.dedup();
    assert_eq!(ts, vec![0, 1, 2]);
}

#[test]
fn seed_can_come_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let (a, b, t) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("t"));
    run(&["gen", "--kind", "rings", "--steps", "1", "--seed", "5", "--out", p(&a), "--truth-out", p(&t)]);
    let o = std::process::Command::new(support::BIN)
        .args(["gen", "--kind", "rings", "--steps", "1", "--out", p(&b), "--truth-out", p(&t)])
        .env("DYNOCLUST_SEED", "5")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn two_ring_steps_give_800_lines() {
    let dir = TempDir::new().unwrap();
    let (out, truth) = (dir.path().join("r"), dir.path().join("t"));
    let o = run(&["gen", "--kind", "rings", "--steps", "2", "--out", p(&out), "--truth-out", p(&truth)]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 800);
    assert_eq!(fs::read_to_string(&truth).unwrap().lines().count(), 800);
    assert!(stdout(&o).contains("steps 2, points 800, clusters 3"), "{}", stdout(&o));
}

#[test]
fn shipped_fixtures_are_regenerated_byte_for_byte() {
    let dir = TempDir::new().unwrap();
    for (stream, truth, args) in FIXTURE_STREAMS {
        let (out, tout) = (dir.path().join(stream), dir.path().join(truth));
        let mut full = vec!["gen"];
        full.extend_from_slice(args);
        full.extend(["--out", p(&out), "--truth-out", p(&tout)]);
        assert_eq!(code(&run(&full)), 0);
        assert!(fs::read(&out).unwrap() == fs::read(fixture(stream)).unwrap(), "{stream} differs from its gen command");
        assert!(fs::read(&tout).unwrap() == fs::read(fixture(truth)).unwrap(), "{truth} differs from its gen command");
    }
}

#[test]
fn nonexistent_input_exits_2_without_output() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("labels");
    let metrics = dir.path().join("metrics");
    let o = run(&[
        "cluster",
        "--config",
        p(&fixture("dmeans.json")),
        "--in",
        p(&dir.path().join("missing.jsonl")),
        "--out",
        p(&out),
        "--metrics-out",
        p(&metrics),
    ]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists() && !metrics.exists());
}

#[test]
fn malformed_line_exits_2_and_names_the_line() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in.jsonl");
    let cases = [
        "{\"t\":0,\"id\":\"a\",\"x\":[0.1,0.2]}\n{\"t\":0,\"id\":\"b\",\"x\":[0.3,0.4]}\n{\"t\":0,\"id\":\"c\",\"x\":[0.3,\n",
        "{\"t\":0,\"id\":\"a\",\"x\":[0.1,0.2]}\n{\"t\":0,\"id\":\"b\",\"x\":[0.3,0.4]}\n{\"t\":0,\"id\":\"c\",\"x\":[0.3]}\n",
        "{\"t\":1,\"id\":\"a\",\"x\":[0.1,0.2]}\n{\"t\":1,\"id\":\"b\",\"x\":[0.3,0.4]}\n{\"t\":0,\"id\":\"c\",\"x\":[0.3,0.1]}\n",
        "{\"t\":0,\"id\":\"a\",\"x\":[0.1,0.2]}\n{\"t\":0,\"id\":\"b\",\"x\":[0.3,0.4]}\n{\"t\":0,\"id\":\"c\",\"x\":[0.3,0.1],\"w\":1}\n",
    ];
    for text in cases {
        fs::write(&input, text).unwrap();
        let out = dir.path().join("labels");
        let o = run(&["cluster", "--config", p(&fixture("dmeans.json")), "--in", p(&input), "--out", p(&out)]);
        assert_eq!(code(&o), 2, "{text}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists());
    }
}

#[test]
fn invalid_configs_exit_3() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cfg.json");
    let out = dir.path().join("labels");
    let bad = [
        r#"{"algorithm": "dmeans", "lambda": 0, "q": 0.1, "tau": 1}"#,
        r#"{"algorithm": "dmeans", "lambda": -1, "t_q": 5, "k_tau": 1.1}"#,
        r#"{"algorithm": "dmeans", "lambda": 1, "q": 0.1, "tau": 1, "t_q": 5, "k_tau": 1.1}"#,
        r#"{"algorithm": "dmeans", "lambda": 1, "q": 0.1}"#,
        r#"{"algorithm": "kdmeans", "lambda": 1, "q": 0.1, "tau": 1}"#,
        r#"{"algorithm": "dmeans", "lambda": 1, "q": 0.1, "tau": 1, "kernel": {"type": "rbf", "omega": 1}}"#,
        r#"{"algorithm": "sdmeans", "lambda": 1, "q": 0.1, "tau": 1, "kernel": {"type": "rbf", "omega": -1}}"#,
        r#"{"algorithm": "dmeans", "lambda": 1, "q": 0.1, "tau": 1, "restarts": 0}"#,
        r#"{"algorithm": "fmeans", "lambda": 1, "q": 0.1, "tau": 1}"#,
        r#"{"algorithm": "dmeans", "lambda": 1, "q": 0.1, "tau": 1, "colour": 1}"#,
        r#"{"algorithm": "dmeans", "lambda": 1,"#,
    ];
    for text in bad {
        fs::write(&cfg, text).unwrap();
        let o = run(&["cluster", "--config", p(&cfg), "--in", p(&fixture("gaussians.jsonl")), "--out", p(&out)]);
        assert_eq!(code(&o), 3, "{text}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists());
    }
}

/// DP-Means in natural point order: nearest cluster (earliest on ties)
/// unless the squared distance exceeds `lambda`; emptied clusters vanish
/// at once; means are refit after each pass until the cost repeats.
fn dp_means(points: &[Vec<f64>], lambda: f64) -> Vec<usize> {
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let mut means: Vec<Option<(Vec<f64>, usize)>> = Vec::new();
    let mut label: Vec<Option<usize>> = vec![None; points.len()];
    let mut prev = f64::INFINITY;
    for _ in 0..100 {
        for (i, x) in points.iter().enumerate() {
            let best = means
                .iter()
                .enumerate()
                .filter_map(|(c, m)| m.as_ref().map(|(mu, _)| (c, sq(x, mu))))
                .fold(None, |b: Option<(usize, f64)>, (c, d)| if b.is_none_or(|(_, bd)| d < bd) { Some((c, d)) } else { b });
            let target = best.filter(|&(_, d)| d <= lambda).map(|(c, _)| c);
            if target.is_some() && target == label[i] {
                continue;
            }
            if let Some(cur) = label[i] {
                let m = means[cur].as_mut().unwrap();
                m.1 -= 1;
                if m.1 == 0 {
                    means[cur] = None;
                }
            }
            label[i] = Some(match target {
                Some(c) => {
                    means[c].as_mut().unwrap().1 += 1;
                    c
                }
                None => {
                    means.push(Some((x.clone(), 1)));
                    means.len() - 1
                }
            });
        }
        let mut cost = 0.0;
        for (c, m) in means.iter_mut().enumerate() {
            if let Some((mu, n)) = m {
                let members: Vec<&Vec<f64>> = points.iter().zip(&label).filter(|(_, l)| **l == Some(c)).map(|(x, _)| x).collect();
                *mu = (0..mu.len()).map(|j| members.iter().map(|x| x[j]).sum::<f64>() / *n as f64).collect();
                cost += lambda + members.iter().map(|x| sq(x, mu)).sum::<f64>();
            }
        }
        if prev.is_finite() && (cost - prev).abs() <= 1e-12 * cost.abs().max(prev.abs()) {
            break;
        }
        prev = cost;
    }
    label.into_iter().map(Option::unwrap).collect()
}

/// Renames labels by order of first appearance.
fn canonical<T: std::hash::Hash + Eq + Copy>(labels: &[T]) -> Vec<usize> {
    let mut seen = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let n = seen.len();
            *seen.entry(*l).or_insert(n)
        })
        .collect()
}

#[test]
fn single_batch_dmeans_matches_dp_means() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cfg.json");
    let input = dir.path().join("in.jsonl");
    let out = dir.path().join("labels");
    let all = fs::read_to_string(fixture("gaussians.jsonl")).unwrap();
    for (t, lambda) in [(0u64, 0.04), (3, 0.02), (5, 0.3)] {
        let batch: Vec<&str> = all.lines().filter(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["t"] == t).collect();
        fs::write(&input, batch.join("\n") + "\n").unwrap();
        fs::write(&cfg, format!(r#"{{"algorithm": "dmeans", "lambda": {lambda}, "q": 0.001, "tau": 1}}"#)).unwrap();
        let o = run(&["cluster", "--config", p(&cfg), "--in", p(&input), "--out", p(&out)]);
        assert_eq!(code(&o), 0, "{o:?}");
        let points: Vec<Vec<f64>> = lines(&input)
            .iter()
            .map(|r| r["x"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect())
            .collect();
        let got: Vec<u64> = lines(&out).iter().map(|r| r["cluster"].as_u64().unwrap()).collect();
        assert_eq!(canonical(&got), canonical(&dp_means(&points, lambda)), "t={t} lambda={lambda}");
    }
}

fn eval(pred: &std::path::Path, truth: &std::path::Path) -> std::process::Output {
    run(&["eval", "--pred", p(pred), "--truth", p(truth)])
}

#[test]
fn eval_of_truth_against_itself_is_perfect() {
    let truth = fixture("gaussians_truth.jsonl");
    let o = eval(&truth, &truth);
    assert_eq!(code(&o), 0);
    let report = stdout(&o);
    assert_eq!(report.lines().next(), Some("t,points,accuracy"));
    assert_eq!(report.lines().count(), 1 + 10 + 1);
    assert_eq!(overall(&report), 1.0);
    assert!(report.lines().skip(1).all(|l| l.ends_with(",1")), "{report}");
}

#[test]
fn eval_ignores_renaming_and_line_order() {
    let dir = TempDir::new().unwrap();
    let pred = dir.path().join("pred");
    let mut recs = lines(&fixture("rings_truth.jsonl"));
    for r in &mut recs {
        let c = r["cluster"].as_u64().unwrap();
        r["cluster"] = serde_json::json!(1000 - 7 * c);
    }
    // reverse the points within each step
    let mut out: Vec<String> = Vec::new();
    for chunk in recs.chunk_by(|a, b| a["t"] == b["t"]) {
        out.extend(chunk.iter().rev().map(|r| r.to_string()));
    }
    fs::write(&pred, out.join("\n") + "\n").unwrap();
    let o = eval(&pred, &fixture("rings_truth.jsonl"));
    assert_eq!(code(&o), 0);
    assert_eq!(overall(&stdout(&o)), 1.0);
}

#[test]
fn eval_with_a_missing_step_exits_2() {
    let dir = TempDir::new().unwrap();
    let pred = dir.path().join("pred");
    let text = fs::read_to_string(fixture("gaussians_truth.jsonl")).unwrap();
    let kept: Vec<&str> = text.lines().filter(|l| !l.starts_with("{\"t\":4,")).collect();
    assert!(kept.len() < text.lines().count());
    fs::write(&pred, kept.join("\n") + "\n").unwrap();
    let o = eval(&pred, &fixture("gaussians_truth.jsonl"));
    assert_eq!(code(&o), 2);
    assert!(o.stdout.is_empty());
}

fn sweep(dir: &TempDir, grid: &str, trials: usize, extra: &[&str]) -> std::process::Output {
    let g = dir.path().join("grid.json");
    let s = dir.path().join("stream.json");
    fs::write(&g, grid).unwrap();
    fs::write(&s, r#"{"kind": "gaussians", "steps": 4, "seed": 2}"#).unwrap();
    let trials = trials.to_string();
    let mut args = vec!["sweep", "--grid-file", p(&g), "--stream-cfg", p(&s), "--trials", &trials];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn sweep_rows_are_cells_times_trials() {
    let dir = TempDir::new().unwrap();
    let o = sweep(&dir, r#"{"lambda": [0.04], "t_q": [6.8], "k_tau": [1.01]}"#, 3, &["--algo", "dmeans"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("lambda,t_q,k_tau,trial,accuracy,seconds"));
    assert_eq!(text.lines().count(), 1 + 3);

    let out = dir.path().join("table.csv");
    let o = sweep(
        &dir,
        r#"{"lambda": [0.5, 1.0], "t_q": [5, 6.8, 9], "k_tau": [1.2, 1.5]}"#,
        2,
        &["--algo", "kdmeans", "--kernel", "rbf:0.1", "--budget", "8", "--out", p(&out)],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 12 * 2);
    for r in &rows {
        assert_eq!(r.len(), 6);
        let acc: f64 = r[4].parse().unwrap();
        assert!((0.0..=1.0).contains(&acc));
        r[5].parse::<f64>().unwrap();
    }
}

#[test]
fn sweep_rejects_bad_settings_with_exit_3() {
    let dir = TempDir::new().unwrap();
    let ok = r#"{"lambda": [0.04], "t_q": [6.8], "k_tau": [1.01]}"#;
    assert_eq!(code(&sweep(&dir, ok, 1, &["--algo", "sdmeans"])), 3);
    assert_eq!(code(&sweep(&dir, r#"{"lambda": [0.04], "t_q": [0.5], "k_tau": [1.01]}"#, 1, &["--algo", "dmeans"])), 3);
    assert_eq!(code(&sweep(&dir, r#"{"lambda": [], "t_q": [6.8], "k_tau": [1.01]}"#, 1, &["--algo", "dmeans"])), 3);
    assert_eq!(code(&sweep(&dir, ok, 0, &["--algo", "dmeans"])), 3);
}

#[test]
fn audit_flags_a_tampered_label() {
    let dir = TempDir::new().unwrap();
    let (labels, metrics) = (dir.path().join("labels"), dir.path().join("metrics"));
    let cfg = fixture("dmeans.json");
    let input = fixture("gaussians.jsonl");
    let o = run(&["cluster", "--config", p(&cfg), "--in", p(&input), "--out", p(&labels), "--metrics-out", p(&metrics)]);
    assert_eq!(code(&o), 0);
    let audit = || run(&["audit", "--config", p(&cfg), "--in", p(&input), "--labels", p(&labels), "--metrics", p(&metrics)]);
    let o = audit();
    assert_eq!(code(&o), 0, "{}", stdout(&o));

    let mut recs = lines(&labels);
    let last = recs.len() - 1;
    recs[last]["cluster"] = serde_json::json!(999_999);
    fs::write(&labels, recs.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("\n") + "\n").unwrap();
    let o = audit();
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("MISMATCH"));
}
