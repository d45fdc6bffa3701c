use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use vap::baselines::exhaustive_solve;
use vap::bench::read_csv;
use vap::checker::check_feasibility;
use vap::instance::{validate_instance, Instance};
use vap::solution::Solution;

fn vap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vap"))
        .args(args)
        .env_remove("VAP_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn generate(dir: &Path, n: usize, customers: usize, fleet: u32, variant: &str, extra: &[&str]) -> Output {
    let (n, c, f) = (n.to_string(), customers.to_string(), fleet.to_string());
    let mut args = vec![
        "generate",
        "--n",
        &n,
        "--customers",
        &c,
        "--fleet",
        &f,
        "--types",
        "2",
        "--variant",
        variant,
        "--seed",
        "1",
        "--out",
    ];
    let d = dir.to_str().unwrap();
    args.push(d);
    args.extend_from_slice(extra);
    vap(&args)
}

const DESK: &str = r#"
[generator]
n_customers = 5
fleet_size = 3
n_vehicle_types = 2

[model]
d_h = 8
n_layers = 1
n_head = 2
d_ff = 16
n_vehicle_types = 2

[train]
epochs = 2
batches_per_epoch = 2
batch_size = 4
samples = 4
validation_size = 8
threads = 1
"#;

fn train_desk(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, DESK).unwrap();
    let out = dir.join("run");
    fs::create_dir(&out).unwrap();
    let o = vap(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

#[test]
fn generate_writes_valid_deterministic_files() {
    let d = tempfile::tempdir().unwrap();
    let o = generate(d.path(), 100, 10, 3, "tw", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut files: Vec<_> = fs::read_dir(d.path()).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert_eq!(files.len(), 100);
    let before: Vec<Vec<u8>> = files.iter().map(|p| fs::read(p).unwrap()).collect();
    for p in &files {
        let inst = Instance::load(p).unwrap();
        assert!(validate_instance(&inst).is_empty());
        assert!(inst.variant.phi_tw);
    }

    let o = generate(d.path(), 100, 10, 3, "tw", &[]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("--force"));

    let o = generate(d.path(), 100, 10, 3, "tw", &["--force"]);
    assert_eq!(code(&o), 0);
    let after: Vec<Vec<u8>> = files.iter().map(|p| fs::read(p).unwrap()).collect();
    assert_eq!(before, after);
}

#[test]
fn generate_error_paths() {
    let d = tempfile::tempdir().unwrap();
    let missing = d.path().join("nope");
    let o = generate(&missing, 2, 5, 3, "c", &[]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("does not exist"));

    assert_eq!(code(&generate(d.path(), 2, 5, 3, "zz", &[])), 2);
    assert_eq!(
        code(&generate(d.path(), 2, 5, 1, "c", &[])),
        2,
        "fewer vehicles than types"
    );
    assert_eq!(code(&vap(&["generate", "--n", "2"])), 2);
    assert_eq!(code(&vap(&["frobnicate"])), 2);
    assert_eq!(code(&vap(&["--help"])), 0);
}

#[test]
fn output_dir_defaults_from_environment() {
    let d = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_vap"))
        .args([
            "generate",
            "--n",
            "3",
            "--customers",
            "4",
            "--fleet",
            "3",
            "--types",
            "2",
        ])
        .env("VAP_OUTPUT_DIR", d.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(d.path().join("inst_00002.json").is_file());
}

#[test]
fn solve_greedy_and_oracle() {
    let d = tempfile::tempdir().unwrap();
    generate(d.path(), 1, 5, 3, "l", &[]);
    let p = d.path().join("inst_00000.json");
    let inst = Instance::load(&p).unwrap();

    let o = vap(&["solve", "--method", "greedy", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let sol = Solution::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert!(sol.feasible);
    assert!(check_feasibility(&sol, &inst).is_empty());

    let o = vap(&["solve", "--method", "oracle", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let sol = Solution::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert!((sol.objective - exhaustive_solve(&inst).unwrap().best_cost).abs() < 1e-12);

    let big = tempfile::tempdir().unwrap();
    generate(big.path(), 1, 50, 10, "c", &[]);
    let o = vap(&[
        "solve",
        "--method",
        "oracle",
        big.path().join("inst_00000.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("too large"));

    let o = vap(&["solve", "--method", "model", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "model without checkpoint is a usage error");
    let o = vap(&[
        "solve",
        "--method",
        "greedy",
        d.path().join("absent.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn train_writes_checkpoints_and_resumes() {
    let d = tempfile::tempdir().unwrap();
    let out = train_desk(d.path());
    for f in ["final.ckpt", "best.ckpt", "metrics.jsonl"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let lines = |p: &Path| -> Vec<serde_json::Value> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect()
    };
    let first = lines(&out.join("metrics.jsonl"));
    assert_eq!(first.len(), 2);

    let cfg = d.path().join("more.toml");
    fs::write(&cfg, DESK.replace("epochs = 2", "epochs = 4")).unwrap();
    let resume = out.join("final.ckpt");
    let o = vap(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--resume",
        resume.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let all = lines(&out.join("metrics.jsonl"));
    assert_eq!(all.len(), 4);
    let epochs: Vec<u64> = all.iter().map(|m| m["epoch"].as_u64().unwrap()).collect();
    assert!(epochs.windows(2).all(|w| w[1] == w[0] + 1), "{epochs:?}");

    let bad = d.path().join("bad.toml");
    fs::write(&bad, DESK.replace("samples = 4", "samples = 4\nlearning_rate = 0.1")).unwrap();
    let o = vap(&[
        "train",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));
}

#[test]
fn eval_and_gap_report() {
    let d = tempfile::tempdir().unwrap();
    let run = train_desk(d.path());
    let ckpt = run.join("best.ckpt");
    let insts = d.path().join("tiny");
    fs::create_dir(&insts).unwrap();
    assert_eq!(code(&generate(&insts, 50, 5, 3, "c", &[])), 0);
    let s = |p: &Path| p.to_str().unwrap().to_string();

    let out_model = d.path().join("model");
    fs::create_dir(&out_model).unwrap();
    let o = vap(&[
        "eval",
        "--checkpoint",
        &s(&ckpt),
        "--instances",
        &s(&insts),
        "--method",
        "model",
        "--reference",
        "oracle",
        "--samples",
        "8",
        "--out",
        &s(&out_model),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = read_csv(fs::File::open(out_model.join("eval.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 50);
    assert!(rows.iter().all(|r| r.gap_pct >= -1e-9));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_model.join("eval.json")).unwrap()).unwrap();
    let mean: f64 = rows.iter().map(|r| r.gap_pct).sum::<f64>() / 50.0;
    assert!((report["aggregate"]["mean_gap_pct"].as_f64().unwrap() - mean).abs() < 1e-12);
    assert!(mean >= 0.0);

    let out_greedy = d.path().join("greedy");
    fs::create_dir(&out_greedy).unwrap();
    let o = vap(&[
        "eval",
        "--instances",
        &s(&insts),
        "--method",
        "greedy",
        "--reference",
        "greedy",
        "--out",
        &s(&out_greedy),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = read_csv(fs::File::open(out_greedy.join("eval.csv")).unwrap()).unwrap();
    assert!(rows.iter().all(|r| r.gap_pct == 0.0));

    // The model run's CSV doubles as a reference table.
    let out_file = d.path().join("file");
    fs::create_dir(&out_file).unwrap();
    let o = vap(&[
        "eval",
        "--instances",
        &s(&insts),
        "--method",
        "greedy",
        "--reference",
        "file",
        "--reference-file",
        &s(&out_model.join("eval.csv")),
        "--out",
        &s(&out_file),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = read_csv(fs::File::open(out_file.join("eval.csv")).unwrap()).unwrap();
    let model_rows = read_csv(fs::File::open(out_model.join("eval.csv")).unwrap()).unwrap();
    for (r, m) in rows.iter().zip(&model_rows) {
        assert_eq!(r.reference, m.objective);
    }

    let o = vap(&[
        "eval",
        "--instances",
        &s(&insts),
        "--method",
        "greedy",
        "--reference",
        "file",
        "--out",
        &s(&out_file),
    ]);
    assert_eq!(code(&o), 2);
    let o = vap(&[
        "eval",
        "--checkpoint",
        &s(&d.path().join("missing.ckpt")),
        "--instances",
        &s(&insts),
        "--method",
        "model",
        "--out",
        &s(&out_file),
    ]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("not found"));

    let summary = d.path().join("gaps.csv");
    let o = vap(&[
        "gap-report",
        "--input",
        &s(&out_model.join("eval.csv")),
        &s(&out_greedy.join("eval.csv")),
        "--out",
        &s(&summary),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(&summary).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "variant,method,instances,mean_objective,mean_reference,mean_gap_pct,mean_time_s"
    );
    assert_eq!(lines.count(), 2);
}

#[test]
fn wall_time_grows_with_sample_count() {
    let d = tempfile::tempdir().unwrap();
    let run = train_desk(d.path());
    let insts = d.path().join("i");
    fs::create_dir(&insts).unwrap();
    generate(&insts, 10, 8, 4, "c", &[]);
    let mut times = Vec::new();
    for n in ["2", "64"] {
        let out = d.path().join(format!("s{n}"));
        fs::create_dir(&out).unwrap();
        let o = vap(&[
            "eval",
            "--checkpoint",
            run.join("best.ckpt").to_str().unwrap(),
            "--instances",
            insts.to_str().unwrap(),
            "--method",
            "model",
            "--reference",
            "greedy",
            "--samples",
            n,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let rows = read_csv(fs::File::open(out.join("eval.csv")).unwrap()).unwrap();
        times.push(rows.iter().map(|r| r.time_s).sum::<f64>() / rows.len() as f64);
    }
    assert!(times[1] > times[0], "{times:?}");
}
