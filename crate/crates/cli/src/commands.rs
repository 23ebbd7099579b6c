//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use pointmanifold::manifold::{EmbedMethod, EmbeddingCache};
use pointmanifold::network::{load_checkpoint_for, save_checkpoint};
use pointmanifold::pointset::{
    generate_dataset, load_dataset, save_dataset, standardize, CloudFormat, Dataset, Split,
};
use pointmanifold::training::{
    ablation_csv, epoch_csv, evaluate, prepare, run_ablation, train as train_model, LleSource,
    PreparedData,
};
use pointmanifold::{Error, Result as LibResult};

use crate::config::RunConfig;
use crate::CliError;

pub const CONFIG_FILE: &str = "config.txt";
pub const EPOCHS_FILE: &str = "epochs.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.pmck";
pub const ABLATION_FILE: &str = "ablation.csv";

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| {
        CliError::Lib(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| {
        CliError::Lib(Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })
    })
}

fn default_cache(manifest: &Path) -> PathBuf {
    manifest
        .parent()
        .unwrap_or(Path::new(""))
        .join("embeddings")
}

pub fn gen(
    classes: usize,
    per_class: usize,
    n_points: usize,
    noise: f64,
    seed: u64,
    format: &str,
    out: &Path,
) -> Result<(), CliError> {
    let format = match format {
        "xyz" => CloudFormat::XyzText,
        "pmc" => CloudFormat::PackedBinary,
        other => {
            return Err(CliError::Usage(format!(
                "unknown format '{other}' (expected xyz or pmc)"
            )))
        }
    };
    let dataset = generate_dataset(classes, per_class, n_points, noise, seed)?;
    let manifest = save_dataset(&dataset, out, format)?;
    let train = dataset
        .splits
        .iter()
        .filter(|&&s| s == Split::Train)
        .count();
    println!(
        "wrote {} clouds ({} train, {} test) to {}",
        dataset.clouds.len(),
        train,
        dataset.clouds.len() - train,
        manifest.display()
    );
    Ok(())
}

pub fn embed(
    manifest: &Path,
    method: &str,
    k: usize,
    d: usize,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let method: EmbedMethod = method
        .parse()
        .map_err(|e: Error| CliError::Usage(e.to_string()))?;
    let dataset = load_dataset(manifest)?;
    let cache = EmbeddingCache::new(
        out.map(Path::to_path_buf)
            .unwrap_or_else(|| default_cache(manifest)),
    );
    let results: Vec<(String, f64, bool)> = dataset
        .clouds
        .par_iter()
        .map(|cloud| -> LibResult<_> {
            let cloud = standardize(cloud)?;
            let hit = cache
                .get_or_compute(&cloud, method, k, d)
                .map_err(|e| match e {
                    Error::Numerical(m) => Error::Numerical(format!("cloud '{}': {m}", cloud.id)),
                    Error::Io { .. } => e,
                    other => Error::InvalidInput(format!("cloud '{}': {other}", cloud.id)),
                })?;
            Ok((cloud.id.clone(), hit.residual, hit.computed))
        })
        .collect::<LibResult<_>>()?;
    println!("id,residual,source");
    for (id, residual, computed) in &results {
        println!(
            "{id},{residual:e},{}",
            if *computed { "computed" } else { "cached" }
        );
    }
    let recomputed = results.iter().filter(|r| r.2).count();
    let max = results.iter().map(|r| r.1).fold(0.0f64, f64::max);
    println!(
        "# method={method} k={k} d={d} clouds={} recomputed={recomputed} max_residual={max:e} cache={}",
        results.len(),
        cache.dir().display()
    );
    Ok(())
}

fn load_run_data(
    manifest: &Path,
    config_file: Option<&Path>,
    overrides: &BTreeMap<String, String>,
    cache_dir: Option<&Path>,
    need_lle: bool,
) -> Result<(Dataset, RunConfig, PreparedData), CliError> {
    let dataset = load_dataset(manifest)?;
    let config = RunConfig::resolve(config_file, overrides, dataset.num_classes())?;
    let cache = EmbeddingCache::new(
        cache_dir
            .map(Path::to_path_buf)
            .unwrap_or_else(|| default_cache(manifest)),
    );
    let source = if need_lle || config.augmentation.uses_lle() {
        LleSource::Cache(&cache)
    } else {
        LleSource::Skip
    };
    let data = prepare(&dataset, source, config.train.k_lle)?;
    Ok((dataset, config, data))
}

pub fn train(
    manifest: &Path,
    config_file: Option<&Path>,
    overrides: &BTreeMap<String, String>,
    cache_dir: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let (_, config, data) = load_run_data(manifest, config_file, overrides, cache_dir, false)?;
    create_dir(out)?;
    write(&out.join(CONFIG_FILE), &config.to_text())?;
    let outcome = train_model(
        &data,
        &config.train,
        &config.spec,
        config.augmentation,
        &mut |r| {
            println!(
                "epoch {:>4} lr {:.5} loss {:.4} test_oa {:.4} test_ma {:.4}",
                r.epoch, r.lr, r.train_loss, r.test_oa, r.test_ma
            );
        },
    )?;
    write(&out.join(EPOCHS_FILE), &epoch_csv(&outcome.log))?;
    let mut model = outcome.model;
    let checkpoint = out.join(CHECKPOINT_FILE);
    save_checkpoint(&mut model, &checkpoint)?;

    // metrics come from the reloaded checkpoint so that `eval` reproduces them
    let spec = config.train.architecture(&config.spec);
    let mut reloaded = load_checkpoint_for(&checkpoint, &spec, config.augmentation)?;
    let metrics = evaluate(&mut reloaded, &data, &data.test, config.train.batch_size)?;
    write(&out.join(METRICS_FILE), &metrics.to_json())?;
    println!(
        "final oA {:.4} mA {:.4} (best oA {:.4} at epoch {}); run written to {}",
        metrics.oa,
        metrics.ma,
        outcome.best_metrics.oa,
        outcome.best_epoch,
        out.display()
    );
    Ok(())
}

pub fn eval(
    checkpoint: &Path,
    manifest: &Path,
    config_file: Option<&Path>,
    cache_dir: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let config_file = match config_file {
        Some(p) => Some(p.to_path_buf()),
        None => {
            let beside = checkpoint
                .parent()
                .unwrap_or(Path::new(""))
                .join(CONFIG_FILE);
            beside.exists().then_some(beside)
        }
    };
    let (_, config, data) = load_run_data(
        manifest,
        config_file.as_deref(),
        &BTreeMap::new(),
        cache_dir,
        false,
    )?;
    let spec = config.train.architecture(&config.spec);
    let mut model = load_checkpoint_for(checkpoint, &spec, config.augmentation)?;
    let metrics = evaluate(&mut model, &data, &data.test, config.train.batch_size)?;
    let json = metrics.to_json();
    if let Some(path) = out {
        write(path, &json)?;
    }
    println!("{json}");
    Ok(())
}

pub fn ablate(
    manifest: &Path,
    config_file: Option<&Path>,
    overrides: &BTreeMap<String, String>,
    cache_dir: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let (_, config, data) = load_run_data(manifest, config_file, overrides, cache_dir, true)?;
    create_dir(out)?;
    write(&out.join(CONFIG_FILE), &config.to_text())?;
    let results = run_ablation(&data, &config.train, &config.spec, &mut |r| {
        println!(
            "{:<24} params {:>7} best oA {:.4} mA {:.4} final oA {:.4} mA {:.4}",
            r.row.label(),
            r.parameters,
            r.best.oa,
            r.best.ma,
            r.last.oa,
            r.last.ma
        );
    })?;
    write(&out.join(ABLATION_FILE), &ablation_csv(&results))?;
    println!("ablation written to {}", out.join(ABLATION_FILE).display());
    Ok(())
}
