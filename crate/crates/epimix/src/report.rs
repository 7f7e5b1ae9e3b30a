//! End-to-end drivers and report emitters behind the command-line interface:
//! fitting with artifact output, classification of new regions under a frozen
//! model, and human/machine-readable reports.
//!
//! All file writes happen after computation completes. Artifacts carry full
//! double precision except the parameter table, which prints 3 decimals.
//! Component indices in CSV artifacts are 1-based to line up with the `k`
//! column of the parameter table; the library API itself uses 0-based labels.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data::{
    load_dataset, read_blocks_json, write_blocks_json, Block, CumulativePolicy, PipelineConfig,
    TimeScale,
};
use crate::em::{EmConfig, FitResult};
use crate::error::Error;
use crate::mixture::{posterior_row, MixtureModel, Posteriors};
use crate::selection::{restart_log_csv, sweep, sweep_report_json, BicMode, SweepConfig};

/// Everything `fit` needs.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub series_path: PathBuf,
    pub population_path: PathBuf,
    pub pipeline: PipelineConfig,
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
    pub bic_mode: BicMode,
    pub em: EmConfig,
    /// `None` lets the runtime pick the thread count.
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
}

/// Reproducibility record written next to the fit artifacts: inputs, every
/// configuration value, tool version, and content hashes of the input files.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub series_path: String,
    pub population_path: String,
    pub onset_threshold: f64,
    pub per: f64,
    pub time_scale_requested: String,
    pub time_scale_resolved: f64,
    pub truncate_pre_onset: bool,
    pub cumulative: &'static str,
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
    pub bic_n: &'static str,
    pub tol: f64,
    pub max_iter: usize,
    pub optimizer_max_evals: usize,
    pub spurious_min_eigen_ratio: f64,
    pub spurious_min_weight_blocks: f64,
    pub threads: String,
    pub series_sha256: String,
    pub population_sha256: String,
}

fn sha256_hex(path: &Path) -> Result<String, Error> {
    let bytes = fs::read(path).map_err(|source| Error::FileIo {
        path: path.to_path_buf(),
        source,
    })?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Reorders a fit's components by ascending case-rate carrying capacity, the
/// convention used by every artifact, permuting posteriors and labels to
/// match. The log-likelihood is invariant under this relabeling.
pub fn sort_fit_by_capacity(fit: &FitResult) -> FitResult {
    let k = fit.model.k();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| {
        fit.model.components[i]
            .curve
            .cases
            .a
            .total_cmp(&fit.model.components[j].curve.cases.a)
    });
    let mut new_label = vec![0usize; k];
    for (new, &old) in order.iter().enumerate() {
        new_label[old] = new;
    }

    let model = MixtureModel {
        weights: order.iter().map(|&i| fit.model.weights[i]).collect(),
        components: order.iter().map(|&i| fit.model.components[i]).collect(),
        time_scale: fit.model.time_scale,
    };
    let posteriors = Posteriors {
        region_ids: fit.posteriors.region_ids.clone(),
        rows: fit
            .posteriors
            .rows
            .iter()
            .map(|row| order.iter().map(|&i| row[i]).collect())
            .collect(),
    };
    let assignments = fit
        .assignments
        .iter()
        .map(|a| crate::mixture::Assignment {
            region_id: a.region_id.clone(),
            label: new_label[a.label],
            max_posterior: a.max_posterior,
        })
        .collect();
    FitResult {
        model,
        posteriors,
        assignments,
        loglik: fit.loglik,
        trace: fit.trace.clone(),
    }
}

/// Assignments CSV: `region,label,posterior_1,...,posterior_K` with 1-based
/// labels and full-precision posteriors.
pub fn assignments_csv(post: &Posteriors, assignments: &[crate::mixture::Assignment]) -> String {
    let k = post.rows.first().map(|r| r.len()).unwrap_or(0);
    let mut out = String::from("region,label");
    for i in 1..=k {
        out.push_str(&format!(",posterior_{i}"));
    }
    out.push('\n');
    for (row, a) in post.rows.iter().zip(assignments) {
        out.push_str(&a.region_id);
        out.push_str(&format!(",{}", a.label + 1));
        for t in row {
            out.push_str(&format!(",{t}"));
        }
        out.push('\n');
    }
    out
}

/// Parameter table CSV in the published layout, one row per component in
/// ascending `a1` order, 3-decimal precision.
pub fn parameter_table_csv(model: &MixtureModel) -> String {
    let mut order: Vec<usize> = (0..model.k()).collect();
    order.sort_by(|&i, &j| {
        model.components[i]
            .curve
            .cases
            .a
            .total_cmp(&model.components[j].curve.cases.a)
    });
    let mut out =
        String::from("k,pi,a1,a2,b1,b2,c1,c2,gamma1,gamma2,sigma1,sigma2,rho\n");
    for (rank, &i) in order.iter().enumerate() {
        let c = &model.components[i];
        let (p1, p2) = (&c.curve.cases, &c.curve.deaths);
        out.push_str(&format!(
            "{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3}\n",
            rank + 1,
            model.weights[i],
            p1.a,
            p2.a,
            p1.b,
            p2.b,
            p1.c,
            p2.c,
            p1.gamma,
            p2.gamma,
            c.sigma.sigma_cases,
            c.sigma.sigma_deaths,
            c.sigma.rho,
        ));
    }
    out
}

/// Mean-curve samples on `points` grid nodes over `[day_lo, day_hi]`,
/// back-transformed to day units: `k,variable,t_days,value`.
pub fn curve_export_csv(model: &MixtureModel, day_lo: f64, day_hi: f64, points: usize) -> String {
    let mut order: Vec<usize> = (0..model.k()).collect();
    order.sort_by(|&i, &j| {
        model.components[i]
            .curve
            .cases
            .a
            .total_cmp(&model.components[j].curve.cases.a)
    });
    let mut out = String::from("k,variable,t_days,value\n");
    let step = if points > 1 {
        (day_hi - day_lo) / (points - 1) as f64
    } else {
        0.0
    };
    for (rank, &i) in order.iter().enumerate() {
        let curve = &model.components[i].curve;
        for (name, params) in [("cases", &curve.cases), ("deaths", &curve.deaths)] {
            for p in 0..points {
                let t_days = day_lo + step * p as f64;
                let value = params.eval(t_days / model.time_scale);
                out.push_str(&format!("{},{name},{t_days},{value}\n", rank + 1));
            }
        }
    }
    out
}

/// Per-component inflection points and upper asymptotes in day units:
/// `k,variable,t0_days,y0,asymptote`.
pub fn inflection_export_csv(model: &MixtureModel) -> String {
    let mut order: Vec<usize> = (0..model.k()).collect();
    order.sort_by(|&i, &j| {
        model.components[i]
            .curve
            .cases
            .a
            .total_cmp(&model.components[j].curve.cases.a)
    });
    let mut out = String::from("k,variable,t0_days,y0,asymptote\n");
    for (rank, &i) in order.iter().enumerate() {
        let curve = &model.components[i].curve;
        for (name, params) in [("cases", &curve.cases), ("deaths", &curve.deaths)] {
            let (t0, y0) = params.inflection();
            out.push_str(&format!(
                "{},{name},{},{y0},{}\n",
                rank + 1,
                t0 * model.time_scale,
                params.a
            ));
        }
    }
    out
}

/// Summary returned by [`run_fit`].
#[derive(Debug)]
pub struct FitRunSummary {
    pub chosen_k: usize,
    pub loglik: f64,
    pub excluded_regions: Vec<String>,
    pub clamped_regions: Vec<String>,
}

fn write_artifact(dir: &Path, name: &str, content: &str) -> Result<(), Error> {
    let path = dir.join(name);
    fs::write(&path, content).map_err(|source| Error::FileIo { path, source })
}

/// Loads the CSV inputs, sweeps candidate orders, and writes the artifact
/// set: `model.json`, `assignments.csv`, `sweep.json`, `restarts.csv`,
/// `manifest.json` and `blocks.json` into the output directory.
pub fn run_fit(opts: &FitOptions) -> Result<FitRunSummary, Error> {
    let dataset = load_dataset(&opts.series_path, &opts.population_path, &opts.pipeline)?;
    let sweep_config = SweepConfig {
        k_min: opts.k_min,
        k_max: opts.k_max,
        seed: opts.seed,
        bic_mode: opts.bic_mode,
        time_scale: dataset.time_scale,
        em: opts.em.clone(),
    };

    let result = match opts.threads {
        None => sweep(&dataset.blocks, &sweep_config)?,
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(|| sweep(&dataset.blocks, &sweep_config))?,
    };

    let fit = sort_fit_by_capacity(result.chosen_fit());

    let manifest = RunManifest {
        tool: "epimix",
        version: env!("CARGO_PKG_VERSION"),
        series_path: opts.series_path.display().to_string(),
        population_path: opts.population_path.display().to_string(),
        onset_threshold: opts.pipeline.onset_threshold,
        per: opts.pipeline.per,
        time_scale_requested: match opts.pipeline.time_scale {
            TimeScale::Auto => "auto".to_string(),
            TimeScale::Fixed(v) => v.to_string(),
        },
        time_scale_resolved: dataset.time_scale,
        truncate_pre_onset: opts.pipeline.truncate_pre_onset,
        cumulative: match opts.pipeline.cumulative {
            CumulativePolicy::Clamp => "clamp",
            CumulativePolicy::Strict => "strict",
        },
        k_min: opts.k_min,
        k_max: opts.k_max,
        seed: opts.seed,
        bic_n: opts.bic_mode.as_str(),
        tol: opts.em.tol,
        max_iter: opts.em.max_iter,
        optimizer_max_evals: opts.em.optimizer_max_evals,
        spurious_min_eigen_ratio: opts.em.spurious_min_eigen_ratio,
        spurious_min_weight_blocks: opts.em.spurious_min_weight_blocks,
        threads: opts
            .threads
            .map(|n| n.to_string())
            .unwrap_or_else(|| "auto".to_string()),
        series_sha256: sha256_hex(&opts.series_path)?,
        population_sha256: sha256_hex(&opts.population_path)?,
    };

    fs::create_dir_all(&opts.out_dir).map_err(|source| Error::FileIo {
        path: opts.out_dir.clone(),
        source,
    })?;
    write_artifact(&opts.out_dir, "model.json", &(fit.model.to_json_string()? + "\n"))?;
    write_artifact(
        &opts.out_dir,
        "assignments.csv",
        &assignments_csv(&fit.posteriors, &fit.assignments),
    )?;
    write_artifact(
        &opts.out_dir,
        "sweep.json",
        &(sweep_report_json(&result, &sweep_config)? + "\n"),
    )?;
    write_artifact(&opts.out_dir, "restarts.csv", &restart_log_csv(&result))?;
    write_artifact(
        &opts.out_dir,
        "manifest.json",
        &(serde_json::to_string_pretty(&manifest)? + "\n"),
    )?;
    write_blocks_json(
        &opts.out_dir.join("blocks.json"),
        &dataset.blocks,
        dataset.time_scale,
    )?;

    Ok(FitRunSummary {
        chosen_k: result.chosen_k,
        loglik: fit.loglik,
        excluded_regions: dataset.excluded,
        clamped_regions: dataset.clamped,
    })
}

/// Output of [`run_classify`].
#[derive(Debug)]
pub struct ClassifyOutput {
    pub csv: String,
    /// Regions that never reach the onset threshold and cannot be aligned.
    pub unassignable: Vec<String>,
}

/// Classifies new regions under a frozen model: aligns them with the model's
/// recorded time scale, computes posterior rows, and emits the assignments
/// CSV without any refitting.
pub fn run_classify(
    model_path: &Path,
    series_path: &Path,
    population_path: &Path,
    onset_threshold: f64,
    per: f64,
    cumulative: CumulativePolicy,
) -> Result<ClassifyOutput, Error> {
    let model = MixtureModel::load(model_path)?;
    let pipeline = PipelineConfig {
        onset_threshold,
        per,
        time_scale: TimeScale::Fixed(model.time_scale),
        truncate_pre_onset: true,
        cumulative,
    };
    let dataset = load_dataset(series_path, population_path, &pipeline)?;

    let mut rows = Vec::with_capacity(dataset.blocks.len());
    let mut region_ids = Vec::with_capacity(dataset.blocks.len());
    for block in &dataset.blocks {
        let (row, _) = posterior_row(block, &model);
        rows.push(row);
        region_ids.push(block.region_id.clone());
    }
    let posteriors = Posteriors { region_ids, rows };
    let assignments = crate::mixture::classify(&posteriors);
    Ok(ClassifyOutput {
        csv: assignments_csv(&posteriors, &assignments),
        unassignable: dataset.excluded,
    })
}

/// Writes the parameter table, curve samples and inflection summary for a
/// fitted model, using exported blocks for the observed time range.
pub fn run_report(model_path: &Path, blocks_path: &Path, out_dir: &Path) -> Result<(), Error> {
    let model = MixtureModel::load(model_path)?;
    let (blocks, blocks_scale) = read_blocks_json(blocks_path)?;
    if blocks.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no blocks in {}",
            blocks_path.display()
        )));
    }
    let day_lo = blocks
        .iter()
        .map(|b: &Block| b.times[0])
        .fold(f64::INFINITY, f64::min)
        * blocks_scale;
    let day_hi = blocks
        .iter()
        .map(|b: &Block| *b.times.last().unwrap())
        .fold(f64::NEG_INFINITY, f64::max)
        * blocks_scale;

    fs::create_dir_all(out_dir).map_err(|source| Error::FileIo {
        path: out_dir.to_path_buf(),
        source,
    })?;
    write_artifact(out_dir, "parameter_table.csv", &parameter_table_csv(&model))?;
    write_artifact(
        out_dir,
        "curves.csv",
        &curve_export_csv(&model, day_lo, day_hi, 200),
    )?;
    write_artifact(out_dir, "inflections.csv", &inflection_export_csv(&model))?;
    Ok(())
}
