//! Random-restart orchestration across mixture orders, BIC-based order
//! choice, and warm refits on updated data.
//!
//! Every restart is an independent job with a seed derived deterministically
//! from `(master seed, K, start index)`, so the whole sweep is reproducible
//! regardless of execution order or thread count.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::Block;
use crate::em::{em_fit, EmConfig, EmOutcome, FitResult, Termination};
use crate::error::Error;
use crate::growth::{BivariateCurve, LogisticParams};
use crate::mixture::{free_params, Component, Covariance2, MixtureModel};

/// What `n` means in the BIC penalty `nu(K) ln n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BicMode {
    /// Total observation count over all blocks.
    #[default]
    TotalPoints,
    /// Number of blocks.
    Blocks,
}

impl BicMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            BicMode::TotalPoints => "points",
            BicMode::Blocks => "blocks",
        }
    }
}

/// Sweep settings: the K range, master seed, BIC convention, and the EM
/// configuration shared by every restart.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
    pub bic_mode: BicMode,
    /// Carried into every fitted model for day-unit back-conversion.
    pub time_scale: f64,
    pub em: EmConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            k_min: 1,
            k_max: 7,
            seed: 0,
            bic_mode: BicMode::default(),
            time_scale: 1.0,
            em: EmConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.k_min == 0 || self.k_min > self.k_max {
            return Err(Error::InvalidConfig(format!(
                "invalid K range {}..={}",
                self.k_min, self.k_max
            )));
        }
        if !crate::is_positive(self.time_scale) {
            return Err(Error::InvalidConfig(
                "time scale must be a positive real".into(),
            ));
        }
        self.em.validate()
    }

    /// Number of random starts per order: `min(20 K, 100)` for K > 1 and 10
    /// for K = 1.
    pub fn starts_for(&self, k: usize) -> usize {
        if k <= 1 {
            10
        } else {
            (20 * k).min(100)
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Per-restart seed: two SplitMix64 rounds over the master seed and the
/// `(K, start)` counter, a splittable scheme that is stable across machines
/// and thread counts.
pub fn derive_seed(master: u64, k: usize, start: usize) -> u64 {
    splitmix64(master ^ splitmix64(((k as u64) << 32) | start as u64))
}

/// BIC with an explicit effective sample size: `-2 loglik + nu(K) ln n`.
pub fn bic_from_n(loglik: f64, k: usize, n: f64) -> f64 {
    -2.0 * loglik + free_params(k) as f64 * n.ln()
}

/// BIC over a block dataset under the chosen sample-size convention.
pub fn bic(loglik: f64, k: usize, blocks: &[Block], mode: BicMode) -> f64 {
    let n = match mode {
        BicMode::TotalPoints => blocks.iter().map(|b| b.n()).sum::<usize>() as f64,
        BicMode::Blocks => blocks.len() as f64,
    };
    bic_from_n(loglik, k, n)
}

/// One coordinate's moment-based starting guess: capacity a little above the
/// group maximum, unit asymmetry, a drawn growth rate, and the shift chosen
/// so the curve crosses half its capacity at the observed half-max time.
fn init_coordinate(
    points: &[(f64, f64)],
    c: f64,
    t_mid: f64,
) -> LogisticParams {
    let max_rate = points.iter().map(|p| p.1).fold(0.0f64, f64::max);
    let a = (1.1 * max_rate).max(1e-6);
    let half = 0.5 * a;
    let t_half = points
        .iter()
        .find(|p| p.1 >= half)
        .map(|p| p.0)
        .unwrap_or(t_mid);
    // gamma = 1 puts the inflection at a/2, so t0 = ln(b)/c = t_half. The
    // exponent clamp keeps the guess inside the optimizer's search box even
    // for raw-day time axes.
    let b = (c * t_half).clamp(-30.0, 30.0).exp();
    LogisticParams {
        a,
        b,
        c,
        gamma: 1.0,
    }
}

/// Builds a valid random starting model: uniform weights, per-group
/// moment-based curves over a uniformly random partition of the blocks into
/// K nonempty groups, and inflated diagonal residual covariances.
/// Deterministic for a fixed seed.
pub fn random_init(
    blocks: &[Block],
    k: usize,
    seed: u64,
    time_scale: f64,
) -> Result<MixtureModel, Error> {
    if k == 0 {
        return Err(Error::InvalidConfig("K must be at least 1".into()));
    }
    if k > blocks.len() {
        return Err(Error::InvalidConfig(format!(
            "K={k} exceeds the number of blocks ({})",
            blocks.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Shuffled block order; the first K blocks seed one group each so no
    // group is empty, the rest are assigned uniformly.
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.shuffle(&mut rng);
    let mut group_of = vec![0usize; blocks.len()];
    for (g, &b) in order.iter().take(k).enumerate() {
        group_of[b] = g;
    }
    for &b in order.iter().skip(k) {
        group_of[b] = rng.gen_range(0..k);
    }

    let mut components = Vec::with_capacity(k);
    for g in 0..k {
        let mut pooled: Vec<(f64, [f64; 2])> = Vec::new();
        for (b, block) in blocks.iter().enumerate() {
            if group_of[b] == g {
                pooled.extend(block.times.iter().zip(&block.obs).map(|(t, y)| (*t, *y)));
            }
        }
        pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
        let t_mid = 0.5 * (pooled[0].0 + pooled[pooled.len() - 1].0);

        let ln_c_lo = 1.0f64.ln();
        let ln_c_hi = 30.0f64.ln();
        let c1 = (ln_c_lo + (ln_c_hi - ln_c_lo) * rng.gen::<f64>()).exp();
        let c2 = (ln_c_lo + (ln_c_hi - ln_c_lo) * rng.gen::<f64>()).exp();
        let cases_pts: Vec<(f64, f64)> = pooled.iter().map(|(t, y)| (*t, y[0])).collect();
        let deaths_pts: Vec<(f64, f64)> = pooled.iter().map(|(t, y)| (*t, y[1])).collect();
        let curve = BivariateCurve::new(
            init_coordinate(&cases_pts, c1, t_mid),
            init_coordinate(&deaths_pts, c2, t_mid),
        );

        // Pooled diagonal residual covariance around the guess, inflated x2.
        let mut s = [0.0f64; 2];
        for (t, y) in &pooled {
            let mu = curve.eval(*t);
            s[0] += (y[0] - mu[0]).powi(2);
            s[1] += (y[1] - mu[1]).powi(2);
        }
        let n = pooled.len() as f64;
        let floor1 = (1e-10 * curve.cases.a * curve.cases.a).max(1e-12);
        let floor2 = (1e-10 * curve.deaths.a * curve.deaths.a).max(1e-12);
        let sigma = Covariance2::from_entries(
            (2.0 * s[0] / n).max(floor1),
            (2.0 * s[1] / n).max(floor2),
            0.0,
        )?;
        components.push(Component::new(curve, sigma));
    }

    MixtureModel::new(vec![1.0 / k as f64; k], components, time_scale)
}

/// One line of the restart log.
#[derive(Debug, Clone)]
pub struct RestartRecord {
    pub k: usize,
    pub start: usize,
    pub seed: u64,
    /// Last observed log-likelihood of the run (NaN if none was evaluated).
    pub loglik: f64,
    pub iterations: usize,
    pub termination: Termination,
}

/// What one candidate order produced.
#[derive(Debug, Clone)]
pub struct KOutcome {
    pub k: usize,
    /// Best retained fit, absent when every start was spurious.
    pub fit: Option<FitResult>,
    pub bic: Option<f64>,
    pub retained_start: Option<usize>,
    pub n_spurious: usize,
}

/// Output of [`sweep`].
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub per_k: Vec<KOutcome>,
    pub chosen_k: usize,
    pub restart_log: Vec<RestartRecord>,
}

impl SweepResult {
    pub fn chosen(&self) -> &KOutcome {
        self.per_k
            .iter()
            .find(|o| o.k == self.chosen_k)
            .expect("chosen K is always present")
    }

    pub fn chosen_fit(&self) -> &FitResult {
        self.chosen()
            .fit
            .as_ref()
            .expect("chosen K always has a retained fit")
    }
}

/// Runs the full restart sweep: `starts_for(K)` seeded EM runs per order,
/// spurious runs discarded, the max-log-likelihood survivor retained per
/// order, and the order with the lowest BIC chosen. Deterministic for a
/// fixed configuration regardless of parallel execution order.
pub fn sweep(blocks: &[Block], config: &SweepConfig) -> Result<SweepResult, Error> {
    config.validate()?;
    if blocks.is_empty() {
        return Err(Error::EmptyDataset("no blocks given to sweep".into()));
    }
    if config.k_max > blocks.len() {
        return Err(Error::InvalidConfig(format!(
            "k_max={} exceeds the number of blocks ({})",
            config.k_max,
            blocks.len()
        )));
    }

    let jobs: Vec<(usize, usize)> = (config.k_min..=config.k_max)
        .flat_map(|k| (0..config.starts_for(k)).map(move |s| (k, s)))
        .collect();

    let outcomes: Vec<(usize, usize, u64, EmOutcome)> = jobs
        .par_iter()
        .map(|&(k, start)| {
            let seed = derive_seed(config.seed, k, start);
            let init = random_init(blocks, k, seed, config.time_scale)?;
            let outcome = em_fit(blocks, k, init, &config.em)?;
            Ok((k, start, seed, outcome))
        })
        .collect::<Result<_, Error>>()?;

    let mut restart_log = Vec::with_capacity(outcomes.len());
    let mut per_k: Vec<KOutcome> = Vec::new();
    for k in config.k_min..=config.k_max {
        let mut best: Option<(usize, FitResult)> = None;
        let mut n_spurious = 0usize;
        for (_, start, seed, outcome) in outcomes.iter().filter(|(ok, ..)| *ok == k) {
            let trace = outcome.trace();
            restart_log.push(RestartRecord {
                k,
                start: *start,
                seed: *seed,
                loglik: trace.loglik.last().copied().unwrap_or(f64::NAN),
                iterations: trace.iterations,
                termination: trace.termination,
            });
            match outcome {
                EmOutcome::Spurious { .. } => n_spurious += 1,
                EmOutcome::Fit(fit) => {
                    let better = match &best {
                        None => true,
                        // Strict improvement: ties keep the lowest start.
                        Some((_, cur)) => fit.loglik > cur.loglik,
                    };
                    if better {
                        best = Some((*start, fit.clone()));
                    }
                }
            }
        }
        let (retained_start, fit) = match best {
            Some((s, f)) => (Some(s), Some(f)),
            None => (None, None),
        };
        let bic_value = fit
            .as_ref()
            .map(|f| bic(f.loglik, k, blocks, config.bic_mode));
        per_k.push(KOutcome {
            k,
            fit,
            bic: bic_value,
            retained_start,
            n_spurious,
        });
    }

    let chosen_k = per_k
        .iter()
        .filter_map(|o| o.bic.map(|b| (o.k, b)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k)
        .ok_or(Error::AllSpurious)?;

    Ok(SweepResult {
        per_k,
        chosen_k,
        restart_log,
    })
}

/// Refits an existing model on updated data, warm-starting EM at the
/// previous parameter estimates.
pub fn warm_refit(
    previous: &MixtureModel,
    new_blocks: &[Block],
    config: &EmConfig,
) -> Result<EmOutcome, Error> {
    em_fit(new_blocks, previous.k(), previous.clone(), config)
}

#[derive(Serialize)]
struct SweepConfigEcho {
    k_min: usize,
    k_max: usize,
    seed: u64,
    bic_n: &'static str,
    time_scale: f64,
    tol: f64,
    max_iter: usize,
    optimizer_max_evals: usize,
    spurious_min_eigen_ratio: f64,
    spurious_min_weight_blocks: f64,
}

#[derive(Serialize)]
struct PerKEcho {
    #[serde(rename = "K")]
    k: usize,
    bic: Option<f64>,
    loglik: Option<f64>,
    retained_start: Option<usize>,
    n_spurious: usize,
}

#[derive(Serialize)]
struct SweepReportJson {
    config: SweepConfigEcho,
    #[serde(rename = "per_K")]
    per_k: Vec<PerKEcho>,
    #[serde(rename = "chosen_K")]
    chosen_k: usize,
}

/// The sweep report JSON: configuration echo, per-K summary, chosen K.
pub fn sweep_report_json(result: &SweepResult, config: &SweepConfig) -> Result<String, Error> {
    let report = SweepReportJson {
        config: SweepConfigEcho {
            k_min: config.k_min,
            k_max: config.k_max,
            seed: config.seed,
            bic_n: config.bic_mode.as_str(),
            time_scale: config.time_scale,
            tol: config.em.tol,
            max_iter: config.em.max_iter,
            optimizer_max_evals: config.em.optimizer_max_evals,
            spurious_min_eigen_ratio: config.em.spurious_min_eigen_ratio,
            spurious_min_weight_blocks: config.em.spurious_min_weight_blocks,
        },
        per_k: result
            .per_k
            .iter()
            .map(|o| PerKEcho {
                k: o.k,
                bic: o.bic,
                loglik: o.fit.as_ref().map(|f| f.loglik),
                retained_start: o.retained_start,
                n_spurious: o.n_spurious,
            })
            .collect(),
        chosen_k: result.chosen_k,
    };
    Ok(serde_json::to_string_pretty(&report)?)
}

/// The restart log CSV: `K,start,seed,loglik,iterations,termination`.
pub fn restart_log_csv(result: &SweepResult) -> String {
    let mut out = String::from("K,start,seed,loglik,iterations,termination\n");
    for r in &result.restart_log {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.k, r.start, r.seed, r.loglik, r.iterations, r.termination
        ));
    }
    out
}
