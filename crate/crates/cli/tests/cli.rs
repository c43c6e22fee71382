use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use meshmotion::data::{write_dataset, SnapshotSet};
use meshmotion::field::read_field;
use meshmotion::mesh::{channel_flap_mesh, BenchmarkGeometry, MeshSizing};
use meshmotion::nncorr::{MaskConfig, Mlp, N_FEATURES, N_OUTPUTS};
use meshmotion::quality::quality_report;
use meshmotion::rng::seeded;
use meshmotion::{BoundaryData, Mesh, VectorField};
use meshmotion_cli::report::read_run;
use meshmotion_cli::NnCorrModel;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_meshmotion"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn coarse() -> Mesh {
    channel_flap_mesh(&BenchmarkGeometry::default(), &MeshSizing::coarse())
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn synthetic(dir: &Path, n_steps: usize, amplitude: f64) -> PathBuf {
    let cfg = write(
        dir,
        "synthetic.json",
        &format!(r#"{{"family": {{"n_steps": {n_steps}, "max_amplitude": {amplitude}}}}}"#),
    );
    let out = dir.join("synthetic");
    ok(&["gen", "--kind", "synthetic", "--config", s(&cfg), "--out", s(&out)]);
    out
}

#[test]
fn harmonic_on_zero_data_gives_zero_field_and_reference_quality() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ext");
    ok(&["extend", "--mesh", "coarse", "--g", "zero", "--op", "harmonic", "--out", s(&out)]);
    let u: VectorField = read_field(out.join("field.json")).unwrap();
    assert!(u.coefficients.iter().all(|&v| v == 0.0));
    let mesh = coarse();
    let reference = quality_report(&mesh, &VectorField::zeros(&mesh, u.space, u.value_dim)).unwrap();
    let csv = std::fs::read_to_string(out.join("quality.csv")).unwrap();
    assert_eq!(csv, reference.to_csv());
    let run = read_run(&out).unwrap();
    assert_eq!(run.summary["min_quality"].as_f64().unwrap(), reference.min);
}

#[test]
fn classic_runs_time_assembly_and_solves() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bi");
    ok(&["extend", "--mesh", "coarse", "--g", "cantilever:0.02", "--op", "biharmonic", "--out", s(&out)]);
    let t = read_run(&out).unwrap().timings;
    assert!(t.assembly_ms > 0.0 && t.linear_solve_ms > 0.0, "{t:?}");
    assert_eq!(t.nn_correction_ms, 0.0);
    let phases = t.assembly_ms + t.linear_solve_ms + t.nn_correction_ms + t.rest_ms;
    assert!(phases <= 1.05 * t.total_ms && t.rest_ms >= 0.0, "{t:?}");
}

#[test]
fn nncorr_run_reports_a_correction_phase() {
    let tmp = tempfile::tempdir().unwrap();
    let model = NnCorrModel {
        mask: MaskConfig::default(),
        network: Mlp::random(&[N_FEATURES, 16, 16, N_OUTPUTS], &mut seeded(3)).unwrap(),
    };
    let params = write(tmp.path(), "model.json", &serde_json::to_string(&model).unwrap());
    let out = tmp.path().join("nn");
    ok(&[
        "extend", "--mesh", "coarse", "--g", "cantilever:0.05", "--op", "nncorr", "--params", s(&params), "--out", s(&out),
    ]);
    let t = read_run(&out).unwrap().timings;
    assert!(t.nn_correction_ms > 0.0, "{t:?}");
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    let o = s(&out);
    let code = |args: &[&str]| run(args).status.code();
    assert_eq!(code(&["extend", "--mesh", "coarse", "--g", "zero", "--op", "laplace", "--out", o]), Some(2));
    assert_eq!(code(&["extend", "--mesh", "benchmark:7", "--g", "zero", "--op", "harmonic", "--out", o]), Some(2));
    assert_eq!(code(&["extend", "--mesh", "coarse", "--g", "zero", "--op", "hybrid", "--out", o]), Some(2));
    assert_eq!(code(&["train", "--kind", "hybrid", "--data", s(&tmp.path().join("missing")), "--out", o]), Some(2));
    assert_eq!(code(&["train", "--kind", "hybrid", "--out", o]), Some(2));
    let empty = write(tmp.path(), "empty.json", r#"{"configs": [], "material": {"mu_s": 5e5, "lambda_s": 2e6}}"#);
    assert_eq!(code(&["gen", "--config", s(&empty), "--out", o]), Some(2));
    let out = bin()
        .env("MESHMOTION_THREADS", "many")
        .args(["extend", "--mesh", "coarse", "--g", "zero", "--op", "harmonic", "--out", o])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write(tmp.path(), "bad.json", "{not json");
    let out = tmp.path().join("x");
    let o = run(&["extend", "--mesh", s(&bad), "--g", "zero", "--op", "harmonic", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
}

fn primary_outputs(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<_> = walk(dir).into_iter().filter(|p| p.file_name().unwrap() != "run.json").collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()))
        .collect()
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn gen_is_reproducible_for_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "gen.json",
        r#"{"material": {"mu_s": 5e5, "lambda_s": 2e6}, "n_amplitudes": 4,
            "configs": [{"f_tip": 1925.0, "f_side": -1700.0, "phi": 0.0, "c": 0.4, "d": 0.02},
                        {"f_tip": 530.0, "f_side": 0.0, "phi": 0.0, "c": 0.45, "d": 0.04}],
            "split": {"mode": "random", "fractions": [0.5, 0.5]}}"#,
    );
    let dirs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|d| tmp.path().join(d)).collect();
    for (d, seed) in dirs.iter().zip(["5", "5", "6"]) {
        ok(&["gen", "--config", s(&cfg), "--seed", seed, "--out", s(d)]);
    }
    let a = primary_outputs(&dirs[0]);
    assert_eq!(a.len(), 8 + 2);
    assert_eq!(a, primary_outputs(&dirs[1]));
    let manifest = |d: &Path| std::fs::read(d.join("manifest.json")).unwrap();
    assert_ne!(manifest(&dirs[0]), manifest(&dirs[2]));
    let run = read_run(&dirs[0]).unwrap();
    assert_eq!(run.seed, Some(5));
    assert_eq!(run.summary["snapshots"], 8);
}

#[test]
fn shipped_table1_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/table1.json");
    let cfg: meshmotion_cli::commands::GenConfig = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(cfg.configs, meshmotion::data::table1_configs());
    assert!(cfg.configs.len() * cfg.n_amplitudes <= 606);
    assert!(cfg.material.is_some());
}

#[test]
fn extend_outputs_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dirs: Vec<PathBuf> = ["a", "b"].iter().map(|d| tmp.path().join(d)).collect();
    for d in &dirs {
        ok(&["extend", "--mesh", "coarse", "--g", "cantilever:0.03", "--op", "plaplace:4", "--out", s(d)]);
    }
    assert_eq!(primary_outputs(&dirs[0]), primary_outputs(&dirs[1]));
}

#[test]
fn hybrid_training_echoes_subsample_size() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synthetic(tmp.path(), 12, 0.02);
    let cfg = write(tmp.path(), "hy.json", r#"{"n_subsample": 20, "max_iter": 1, "gradient": {"kind": "adjoint"}}"#);
    let out = tmp.path().join("hy");
    ok(&["train", "--kind", "hybrid", "--data", s(&data), "--config", s(&cfg), "--out", s(&out), "--seed", "1"]);
    let run = read_run(&out).unwrap();
    assert!(run.notes.iter().any(|n| n == "N = 20"), "{:?}", run.notes);
    assert_eq!(run.summary["N"], 20);
    assert!(out.join("params.json").is_file());
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert!(history.starts_with("iteration,loss\n"));

    // the trained parameters drive the hybrid operator
    let ext = tmp.path().join("ext");
    let params = out.join("params.json");
    ok(&[
        "extend", "--mesh", "coarse", "--g", "cantilever:0.02", "--op", "hybrid:nonlinear", "--params", s(&params), "--out",
        s(&ext),
    ]);
}

#[test]
fn nncorr_training_echoes_recipe() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synthetic(tmp.path(), 12, 0.02);
    let cfg = write(
        tmp.path(),
        "nn.json",
        r#"{"epochs": 200, "batch_size": 2, "widths": [8, 8, 2], "precision": "f32"}"#,
    );
    let out = tmp.path().join("nn");
    ok(&["train", "--kind", "nncorr", "--data", s(&data), "--config", s(&cfg), "--out", s(&out)]);
    let run = read_run(&out).unwrap();
    assert!(run.notes.iter().any(|n| n == "epochs = 200"));
    assert_eq!(run.config["epochs"], 200);
    assert_eq!(run.config["weight_decay"], 0.01);
    assert_eq!(run.config["lr"], 1e-3);
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 201);

    let model = out.join("model.json");
    let ext = tmp.path().join("ext");
    ok(&["extend", "--mesh", "coarse", "--g", "cantilever:0.02", "--op", "nncorr", "--params", s(&model), "--out", s(&ext)]);
}

#[test]
fn replay_of_zero_sequence_has_constant_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let mesh = coarse();
    let set = SnapshotSet::from_boundary(mesh.clone(), vec![BoundaryData::zeros(&mesh); 5]);
    let data = tmp.path().join("zeros");
    write_dataset(&data, &set).unwrap();
    let out = tmp.path().join("replay");
    ok(&["replay", "--data", s(&data), "--op", "biharmonic", "--out", s(&out)]);
    let csv = std::fs::read_to_string(out.join("replay.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(csv.lines().next(), Some("step,min_quality,min_det"));
    assert_eq!(rows.len(), 5);
    for (k, r) in rows.iter().enumerate() {
        let (step, rest) = r.split_once(',').unwrap();
        assert_eq!(step, k.to_string());
        assert_eq!(rest, rows[0].split_once(',').unwrap().1);
    }
}

fn degenerate_at(csv: &str) -> Option<usize> {
    csv.lines().find_map(|l| l.strip_prefix("degenerate_at,")).map(|k| k.parse().unwrap())
}

#[test]
fn replay_truncates_at_degeneration_and_orders_operators() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synthetic(tmp.path(), 15, 0.15);
    let mut at = Vec::new();
    for op in ["harmonic", "biharmonic"] {
        let out = tmp.path().join(op);
        ok(&["replay", "--data", s(&data), "--op", op, "--out", s(&out)]);
        let csv = std::fs::read_to_string(out.join("replay.csv")).unwrap();
        let rows = csv.lines().skip(1).filter(|l| !l.starts_with("degenerate_at")).count();
        match degenerate_at(&csv) {
            Some(k) => assert_eq!(rows, k + 1),
            None => assert_eq!(rows, 15),
        }
        at.push(degenerate_at(&csv).unwrap_or(usize::MAX));
    }
    assert!(at[0] < usize::MAX, "the family is large enough to fold harmonic");
    assert!(at[0] <= at[1], "harmonic {} biharmonic {}", at[0], at[1]);
}
