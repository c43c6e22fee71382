use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use meshmotion::data::{
    build_artificial_dataset, read_dataset, replay_sequence, split_dataset, synthetic_family, write_dataset, LoadConfig,
    Material, SnapshotSet, SplitMode, SyntheticFamily,
};
use meshmotion::field::write_field;
use meshmotion::hybrid::{train_hybrid, HybridTrainConfig};
use meshmotion::icnn::{write_icnn, IcnnParams, DEFAULT_HIDDEN};
use meshmotion::mesh::BenchmarkGeometry;
use meshmotion::nncorr::{compute_mask, default_widths, train_nncorr, MaskConfig, Mlp, NnCorrTrainConfig};
use meshmotion::profile::capture;
use meshmotion::quality::quality_report;
use meshmotion::rng::seeded;
use meshmotion::{Real, Dataset};

use crate::inputs::{BoundarySource, MeshSource};
use crate::operator::{build_stepper, NnCorrModel, OpKind};
use crate::report::RunManifest;
use crate::{Cli, Command, ExtendArgs, GenArgs, GenKind, ReplayArgs, TrainArgs, TrainKind, UsageError};

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Extend(a) => extend(&a),
        Command::Gen(a) => gen(&a),
        Command::Train(a) => train(&a),
        Command::Replay(a) => replay(&a),
    }
}

fn read_config<D: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<D> {
    if !path.is_file() {
        return Err(UsageError(format!("config file {} not found", path.display())).into());
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| UsageError(format!("bad config {}: {e}", path.display())))
        .map_err(Into::into)
}

fn out_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_dataset(path: &Path) -> anyhow::Result<Dataset> {
    if !path.exists() {
        return Err(UsageError(format!("dataset {} not found", path.display())).into());
    }
    Ok(read_dataset(path)?)
}

fn extend(a: &ExtendArgs) -> anyhow::Result<()> {
    let op: OpKind = a.op.parse()?;
    let mesh_src: MeshSource = a.mesh.parse()?;
    let g_src: BoundarySource = a.g.parse()?;
    let mesh = mesh_src.load()?;
    let g = g_src.load(&mesh)?;
    out_dir(&a.out)?;

    let (result, timings) = capture(|| -> anyhow::Result<_> {
        let (mut stepper, echo) = build_stepper(op, &mesh, a.params.as_deref(), a.config.as_deref())?;
        let u = stepper.step(&mesh, &g)?;
        let q = quality_report(&mesh, &u)?;
        Ok((u, q, echo))
    });
    let (u, q, echo) = result?;

    let field = a.out.join("field.json");
    let quality = a.out.join("quality.csv");
    write_field(&field, &u)?;
    write_text(&quality, &q.to_csv())?;

    let mut run = RunManifest::new("extend");
    run.config = echo;
    run.timings = timings;
    run.input("mesh", &a.mesh).input("g", &a.g).input("op", &a.op);
    if let Some(p) = &a.params {
        run.input("params", p.display());
    }
    if let Some(c) = &a.config {
        run.input("config", c.display());
    }
    run.output("field", &field).output("quality", &quality);
    run.summary("min_quality", q.min).summary("min_det", q.min_det).summary("n_vertices", mesh.n_vertices());
    run.write(&a.out)?;
    log::info!("extend {}: min quality {:.4}, min det {:.4}", a.op, q.min, q.min_det);
    Ok(())
}

/// Input of `gen`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    #[serde(default)]
    pub configs: Vec<LoadConfig>,
    /// Required for artificial data.
    #[serde(default)]
    pub material: Option<Material>,
    #[serde(default = "default_amplitudes")]
    pub n_amplitudes: usize,
    #[serde(default)]
    pub split: Option<SplitSpec>,
    /// Used by synthetic data.
    #[serde(default)]
    pub family: SyntheticFamily,
}

fn default_amplitudes() -> usize {
    101
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    /// Defaults to the mode's usual fractions.
    #[serde(default)]
    pub fractions: Option<Vec<f64>>,
}

fn gen(a: &GenArgs) -> anyhow::Result<()> {
    let cfg: GenConfig = read_config(&a.config)?;
    let mesh_src: MeshSource = a.mesh.parse()?;
    let default_mode = match a.kind {
        GenKind::Artificial => SplitMode::Random,
        GenKind::Synthetic => SplitMode::Sequential,
    };
    let split = cfg.split.clone().unwrap_or(SplitSpec {
        mode: default_mode,
        fractions: None,
    });
    let fractions = split.fractions.clone().unwrap_or_else(|| split.mode.default_fractions());
    if a.kind == GenKind::Artificial {
        if cfg.configs.is_empty() {
            return Err(UsageError("the config file lists no load configurations".into()).into());
        }
        if cfg.material.is_none() {
            return Err(UsageError("artificial data needs a material (mu_s, lambda_s)".into()).into());
        }
    }
    let mesh = mesh_src.load()?;
    let solid = match a.kind {
        GenKind::Artificial => Some(mesh_src.solid()?),
        GenKind::Synthetic => None,
    };
    out_dir(&a.out)?;

    let (set, timings) = capture(|| -> anyhow::Result<Dataset> {
        let set = match &solid {
            Some(solid) => build_artificial_dataset(
                &mesh,
                solid,
                &cfg.configs,
                cfg.material.as_ref().expect("checked above"),
                cfg.n_amplitudes,
            )?,
            None => {
                let gs = synthetic_family(&mesh, &BenchmarkGeometry::default(), &cfg.family)?;
                let mut set = SnapshotSet::from_boundary(mesh.clone(), gs);
                set.complete()?;
                set
            }
        };
        Ok(split_dataset(set, split.mode, &fractions, a.seed)?)
    });
    let set = set?;
    let manifest = write_dataset(&a.out, &set)?;

    let mut run = RunManifest::new("gen");
    run.config = serde_json::to_value(&cfg)?;
    run.seed = Some(a.seed);
    run.timings = timings;
    run.input("config", a.config.display()).input("mesh", &a.mesh);
    run.output("manifest", &manifest);
    let splits = set.splits.as_ref().expect("split above");
    run.summary("snapshots", set.len())
        .summary("skipped", set.skipped)
        .summary("train", splits.train.len())
        .summary("val", splits.val.len())
        .summary("test", splits.test.len());
    run.write(&a.out)?;
    log::info!("wrote {} snapshots ({} skipped) to {}", set.len(), set.skipped, a.out.display());
    Ok(())
}

/// `train --kind hybrid` settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridJob {
    #[serde(flatten)]
    pub train: HybridTrainConfig,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
}

fn default_hidden() -> Vec<usize> {
    DEFAULT_HIDDEN.to_vec()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// `train --kind nncorr` settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnCorrJob {
    #[serde(flatten)]
    pub train: NnCorrTrainConfig,
    #[serde(default)]
    pub mask: MaskConfig,
    #[serde(default = "default_widths")]
    pub widths: Vec<usize>,
    #[serde(default)]
    pub precision: Precision,
}

fn train(a: &TrainArgs) -> anyhow::Result<()> {
    let mut set = load_dataset(&a.data)?;
    out_dir(&a.out)?;
    if set.snapshots.iter().any(|s| s.u_harm.is_none() || s.u_biharm.is_none() || s.clement.is_none()) {
        log::info!("computing missing extensions");
        set.complete()?;
    }
    let all: Vec<usize> = (0..set.len()).collect();
    let (train_idx, val_idx) = match &set.splits {
        Some(s) => (s.train.clone(), s.val.clone()),
        None => (all, Vec::new()),
    };
    let mut run = RunManifest::new("train");
    run.input("data", a.data.display());
    if let Some(c) = &a.config {
        run.input("config", c.display());
    }
    let history = a.out.join("history.csv");
    match a.kind {
        TrainKind::Hybrid => {
            let job: HybridJob = match &a.config {
                Some(p) => read_config(p)?,
                None => serde_json::from_str("{}")?,
            };
            let seed = a.seed.unwrap_or(0);
            let samples = set.hybrid_samples(&train_idx)?;
            let params0 = IcnnParams::random(&job.hidden, &mut seeded(seed));
            let (res, timings) = capture(|| train_hybrid(&set.mesh, &samples, &params0, &job.train));
            let res = res?;
            let params = a.out.join("params.json");
            write_icnn(&params, &res.params)?;
            let mut csv = String::from("iteration,loss\n");
            for (i, l) in res.history.iter().enumerate() {
                csv.push_str(&format!("{i},{l:e}\n"));
            }
            write_text(&history, &csv)?;
            run.config = serde_json::to_value(&job)?;
            run.seed = Some(seed);
            run.timings = timings;
            run.notes.push(format!("N = {}", job.train.n_subsample));
            run.output("params", &params).output("history", &history);
            run.summary("N", job.train.n_subsample)
                .summary("samples_used", res.indices.len())
                .summary("iterations", res.iterations)
                .summary("converged", res.converged)
                .summary("final_loss", res.history.last().copied());
        }
        TrainKind::Nncorr => {
            let mut job: NnCorrJob = match &a.config {
                Some(p) => read_config(p)?,
                None => serde_json::from_str("{}")?,
            };
            if let Some(s) = a.seed {
                job.train.seed = s;
            }
            let val = (!val_idx.is_empty()).then_some(val_idx.as_slice());
            let (res, timings) = capture(|| match job.precision {
                Precision::F64 => fit_nncorr(&set, &train_idx, val, &job),
                Precision::F32 => fit_nncorr(&set.cast::<f32>(), &train_idx, val, &job),
            });
            let (network, losses) = res?;
            let model = a.out.join("model.json");
            let text = serde_json::to_string(&NnCorrModel {
                mask: job.mask.clone(),
                network,
            })?;
            write_text(&model, &text)?;
            let [train_loss, val_loss, lr] = &losses;
            let mut csv = String::from("epoch,train_loss,val_loss,lr\n");
            for e in 0..train_loss.len() {
                let v = val_loss.get(e).map(|v| format!("{v:e}")).unwrap_or_default();
                csv.push_str(&format!("{e},{:e},{v},{:e}\n", train_loss[e], lr[e]));
            }
            write_text(&history, &csv)?;
            run.config = serde_json::to_value(&job)?;
            run.seed = Some(job.train.seed);
            run.timings = timings;
            run.notes.push(format!("epochs = {}", job.train.epochs));
            run.output("model", &model).output("history", &history);
            run.summary("epochs", job.train.epochs)
                .summary("train_snapshots", train_idx.len())
                .summary("val_snapshots", val_idx.len())
                .summary("final_train_loss", train_loss.last().copied())
                .summary("final_val_loss", val_loss.last().copied());
        }
    }
    run.write(&a.out)?;
    Ok(())
}

/// Trained network (in f64) and the per-epoch train loss, val loss and
/// learning rate.
fn fit_nncorr<T: Real>(
    set: &SnapshotSet<T>,
    train: &[usize],
    val: Option<&[usize]>,
    job: &NnCorrJob,
) -> anyhow::Result<(Mlp<f64>, [Vec<f64>; 3])> {
    let mask = compute_mask(&set.mesh, &job.mask)?;
    let train_data = set.nncorr_data(train, &mask)?;
    let val_data = val.map(|v| set.nncorr_data(v, &mask)).transpose()?;
    let mlp0 = Mlp::<T>::random(&job.widths, &mut seeded(job.train.seed))?;
    let res = train_nncorr(&train_data, val_data.as_ref(), &mlp0, &job.train)?;
    Ok((res.mlp.cast(), [res.train_loss, res.val_loss, res.lr]))
}

fn replay(a: &ReplayArgs) -> anyhow::Result<()> {
    let op: OpKind = a.op.parse()?;
    let set = load_dataset(&a.data)?;
    out_dir(&a.out)?;
    let gs: Vec<_> = set.snapshots.iter().map(|s| s.g.clone()).collect();
    let (result, timings) = capture(|| -> anyhow::Result<_> {
        let (mut stepper, echo) = build_stepper(op, &set.mesh, a.params.as_deref(), a.config.as_deref())?;
        Ok((replay_sequence(&set.mesh, &gs, stepper.as_mut()), echo))
    });
    let (report, echo) = result?;
    let csv = a.out.join("replay.csv");
    write_text(&csv, &report.to_csv())?;

    let mut run = RunManifest::new("replay");
    run.config = echo;
    run.timings = timings;
    run.input("data", a.data.display()).input("op", &a.op);
    if let Some(p) = &a.params {
        run.input("params", p.display());
    }
    run.output("replay", &csv);
    run.summary("steps", report.n_steps)
        .summary("rows", report.rows.len())
        .summary("degenerate_at", report.degenerate_at)
        .summary("error", &report.error);
    run.write(&a.out)?;
    Ok(())
}
