//! Command implementations behind the CLI: train, eval, predict,
//! context sweep, and the gradient-check report.
//!
//! Data goes to files and standard output; progress and diagnostics go to
//! the error stream. Every command is deterministic given seed, config, and
//! inputs.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint;
use crate::config::RunConfig;
use crate::dataset::{load_manifest, LoadedImage};
use crate::error::{Error, Result};
use crate::gradcheck::{self, CheckOutcome};
use crate::image::read_pnm;
use crate::metrics::{mae, metrics_csv, metrics_table, rmse, EvalRecord};
use crate::model::CtnModel;
use crate::reference;
use crate::tiling::tile_predict;
use crate::trainer::{train, TrainSettings};

fn ensure_out_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn require_manifest(cfg: &RunConfig) -> Result<Vec<LoadedImage>> {
    let path = cfg
        .manifest
        .as_ref()
        .ok_or_else(|| Error::Config("a dataset manifest is required (--manifest)".into()))?;
    let data = load_manifest(path, cfg.sigma, cfg.max_dim)?;
    if data.is_empty() {
        return Err(Error::Contract(format!("manifest {} lists no images", path.display())));
    }
    Ok(data)
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub loss_csv: PathBuf,
    pub iterations: usize,
    pub first_loss: f64,
    pub final_loss: f64,
}

/// Trains the configured variant and writes a checkpoint plus a
/// per-iteration loss CSV.
pub fn cmd_train(cfg: &RunConfig, max_iterations: Option<usize>) -> Result<TrainOutcome> {
    let data = require_manifest(cfg)?;
    ensure_out_dir(&cfg.out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = CtnModel::new(cfg.model_config(), cfg.init, &mut rng)?;
    let settings = TrainSettings {
        epochs: cfg.epochs,
        batch: cfg.batch,
        lr: cfg.lr,
        crop: cfg.crop,
        crops_per_image: cfg.crops_per_image,
        seed: cfg.seed.wrapping_add(1),
        max_iterations,
    };
    eprintln!(
        "training variant={} m={} on {} images ({} crops each, batch {}, {} epochs)",
        cfg.variant.as_str(),
        cfg.context_m,
        data.len(),
        cfg.crops_per_image,
        cfg.batch,
        cfg.epochs
    );
    let log = train(&mut model, &data, &settings, |iter, loss| {
        if iter % 20 == 0 || iter == 1 {
            eprintln!("  iter {iter}: loss {loss:.6e}");
        }
    });

    let loss_csv = cfg.out.join("loss.csv");
    write_file(&loss_csv, &log.to_csv())?;
    let ckpt = cfg
        .checkpoint
        .clone()
        .unwrap_or_else(|| cfg.out.join("model.ckpt"));
    if let Some(parent) = ckpt.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    checkpoint::save(&model, &ckpt)?;
    Ok(TrainOutcome {
        checkpoint: ckpt,
        loss_csv,
        iterations: log.losses.len(),
        first_loss: log.first(),
        final_loss: log.last(),
    })
}

pub struct EvalOutcome {
    pub records: Vec<EvalRecord>,
    pub mae: f64,
    pub rmse: f64,
    pub csv_path: PathBuf,
    pub table: String,
}

fn eval_model(model: &CtnModel, data: &[LoadedImage], tile: usize) -> Vec<EvalRecord> {
    data.iter()
        .map(|img| {
            let (count, _) = tile_predict(model, &img.image, tile);
            EvalRecord {
                image_id: img.id.clone(),
                y: img.ground_truth_count(),
                y_hat: count,
            }
        })
        .collect()
}

/// Evaluates a checkpoint over a manifest with tiled inference and writes
/// the metrics CSV.
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalOutcome> {
    let ckpt = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("a checkpoint is required (--checkpoint)".into()))?;
    let model = checkpoint::load(ckpt)?;
    let data = require_manifest(cfg)?;
    ensure_out_dir(&cfg.out)?;
    let records = eval_model(&model, &data, cfg.tile);
    let csv_path = cfg.out.join("metrics.csv");
    write_file(&csv_path, &metrics_csv(&records))?;
    Ok(EvalOutcome {
        mae: mae(&records),
        rmse: rmse(&records),
        table: metrics_table(&records),
        records,
        csv_path,
    })
}

pub struct PredictOutcome {
    pub count: f64,
    pub dmap_path: PathBuf,
    pub heatmap_path: PathBuf,
    pub h: usize,
    pub w: usize,
}

/// Predicts a density map for one image; writes the DMAP file and a PGM
/// heatmap named after the image stem.
pub fn cmd_predict(cfg: &RunConfig, image_path: &Path) -> Result<PredictOutcome> {
    let ckpt = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("a checkpoint is required (--checkpoint)".into()))?;
    let model = checkpoint::load(ckpt)?;
    let image = read_pnm(image_path)?;
    ensure_out_dir(&cfg.out)?;
    let (count, map) = tile_predict(&model, &image, cfg.tile);
    let stem = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "prediction".into());
    let dmap_path = cfg.out.join(format!("{stem}.dmap"));
    map.save_dmap(&dmap_path)?;
    let heatmap_path = cfg.out.join(format!("{stem}.pgm"));
    crate::image::write_pgm(&map.to_heatmap_bytes(), map.h, map.w, &heatmap_path)?;
    Ok(PredictOutcome {
        count,
        dmap_path,
        heatmap_path,
        h: map.h,
        w: map.w,
    })
}

pub struct SweepRow {
    pub m: usize,
    /// Context = `2m` neighbor vectors.
    pub context: usize,
    pub mae: f64,
    pub rmse: f64,
    /// Published full-scale MAE/RMSE for this context, where available.
    pub reference: Option<(f64, f64)>,
}

/// Trains and evaluates one model per context half-width in `ms`,
/// reusing the run configuration for everything else.
pub fn cmd_sweep_context(cfg: &RunConfig, ms: &[usize]) -> Result<Vec<SweepRow>> {
    if ms.is_empty() {
        return Err(Error::Contract("context sweep needs at least one m value".into()));
    }
    let data = require_manifest(cfg)?;
    ensure_out_dir(&cfg.out)?;
    let mut rows = Vec::new();
    for &m in ms {
        let mut run_cfg = cfg.clone();
        run_cfg.context_m = m;
        let mut rng = ChaCha8Rng::seed_from_u64(run_cfg.seed);
        let mut model = CtnModel::new(run_cfg.model_config(), run_cfg.init, &mut rng)?;
        let settings = TrainSettings {
            epochs: run_cfg.epochs,
            batch: run_cfg.batch,
            lr: run_cfg.lr,
            crop: run_cfg.crop,
            crops_per_image: run_cfg.crops_per_image,
            seed: run_cfg.seed.wrapping_add(1),
            max_iterations: None,
        };
        eprintln!("sweep: training m={m} (context {})", 2 * m);
        train(&mut model, &data, &settings, |_, _| {});
        let records = eval_model(&model, &data, run_cfg.tile);
        rows.push(SweepRow {
            m,
            context: 2 * m,
            mae: mae(&records),
            rmse: rmse(&records),
            reference: reference::context_reference(2 * m),
        });
    }
    let mut csv = String::from("m,context,mae,rmse,reference_mae,reference_rmse\n");
    for r in &rows {
        let (rm, rr) = r
            .reference
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .unwrap_or_default();
        csv.push_str(&format!("{},{},{},{},{},{}\n", r.m, r.context, r.mae, r.rmse, rm, rr));
    }
    write_file(&cfg.out.join("sweep.csv"), &csv)?;
    Ok(rows)
}

/// Table mirroring the context-sweep layout, with full-scale reference
/// numbers printed as annotations (they are not reproducible at desk scale).
pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<9} {:>10} {:>10}   {}\n",
        "context", "MAE", "RMSE", "full-scale reference (not reproducible here)"
    ));
    for r in rows {
        let label = if r.m == 0 { "0 (standard MHA)" } else { "" };
        let context = if r.m == 0 {
            label.to_string()
        } else {
            r.context.to_string()
        };
        let annotation = match r.reference {
            Some((mae, rmse)) => format!("MAE {mae} RMSE {rmse}"),
            None => "-".to_string(),
        };
        out.push_str(&format!("{context:<9} {:>10.3} {:>10.3}   {annotation}\n", r.mae, r.rmse));
    }
    out
}

/// Runs the finite-difference suite over all registered primitives and the
/// end-to-end network. `corrupt` deliberately perturbs one check's analytic
/// gradient (a harness self-test); the run must then fail.
pub fn cmd_gradcheck(seed_count: usize, corrupt: Option<&str>) -> Result<Vec<CheckOutcome>> {
    let seeds: Vec<u64> = (0..seed_count as u64).collect();
    let outcomes = gradcheck::run_all(&seeds, corrupt);
    let failed: Vec<&str> = outcomes
        .iter()
        .filter(|o| !o.passed())
        .map(|o| o.name)
        .collect();
    if !failed.is_empty() {
        return Err(Error::Contract(format!(
            "gradient checks failed: {}",
            failed.join(", ")
        )));
    }
    Ok(outcomes)
}

pub fn gradcheck_report(outcomes: &[CheckOutcome]) -> String {
    let mut out = String::new();
    for o in outcomes {
        out.push_str(&format!(
            "{:<22} max rel err {:>12.3e} over {} seeds  [{}]\n",
            o.name,
            o.max_rel_err,
            o.seeds,
            if o.passed() { "pass" } else { "FAIL" }
        ));
    }
    out
}
