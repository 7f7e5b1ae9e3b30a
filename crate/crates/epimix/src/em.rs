//! The block-constrained EM algorithm.
//!
//! Blocks, not individual observations, are the unit of assignment: the
//! E step produces one posterior row per block (the weight enters the
//! numerator raised to the block length), and the M step updates weights and
//! covariances in closed form while the curve parameters are improved
//! numerically. The curve update only has to improve its objective, not
//! maximize it, which keeps every iteration an ascent step on the observed
//! log-likelihood (a generalized EM).
//!
//! Update order within one iteration: weights, then curves against the
//! previous covariances, then covariances against the new curves. Each
//! sub-step conditionally maximizes (or improves) the same Q function, so the
//! log-likelihood trace is nondecreasing up to rounding.

use std::fmt;

use crate::data::Block;
use crate::error::Error;
use crate::growth::{BivariateCurve, LogisticParams};
use crate::mixture::{
    block_log_score_cached, classify, normalized_row, Assignment, Component, Covariance2, Gauss2,
    MixtureModel, Posteriors,
};
use crate::optim::minimize;

/// EM stopping and robustness settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    /// Relative log-likelihood change below which the fit has converged.
    pub tol: f64,
    pub max_iter: usize,
    /// Objective-evaluation budget per component per M step.
    pub optimizer_max_evals: usize,
    /// A component whose smallest covariance eigenvalue falls below this
    /// fraction of the largest eigenvalue across components is spurious.
    pub spurious_min_eigen_ratio: f64,
    /// A component attracting less than this much posterior block mass is
    /// spurious.
    pub spurious_min_weight_blocks: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 1000,
            optimizer_max_evals: 2000,
            spurious_min_eigen_ratio: 1e-8,
            spurious_min_weight_blocks: 1.0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !crate::is_positive(self.tol)
            || self.max_iter == 0
            || self.optimizer_max_evals == 0
            || !crate::is_positive(self.spurious_min_eigen_ratio)
            || !crate::is_positive(self.spurious_min_weight_blocks)
        {
            return Err(Error::InvalidConfig(
                "EM configuration values must all be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Why an EM run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIter,
    Spurious,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::MaxIter => "max_iter",
            Termination::Spurious => "spurious",
        })
    }
}

/// Log-likelihood trajectory of one EM run. `iterations` counts E steps.
#[derive(Debug, Clone, PartialEq)]
pub struct EmTrace {
    pub loglik: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
}

/// What made a run spurious.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpuriousReason {
    /// Covariance eigenvalue collapsed relative to the largest in the model.
    CollapsedCovariance { component: usize },
    /// Posterior block mass below the configured floor.
    EmptyComponent { component: usize },
    /// Residual covariance not positive definite (e.g. an exact fit).
    DegenerateSigma { component: usize },
    /// Curve objective evaluated to NaN.
    NanObjective { component: usize },
    /// Observed-data log-likelihood left the finite range.
    NonFiniteLoglik,
}

impl fmt::Display for SpuriousReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpuriousReason::CollapsedCovariance { component } => {
                write!(f, "component {component}: collapsed covariance")
            }
            SpuriousReason::EmptyComponent { component } => {
                write!(f, "component {component}: posterior block mass below floor")
            }
            SpuriousReason::DegenerateSigma { component } => {
                write!(f, "component {component}: degenerate residual covariance")
            }
            SpuriousReason::NanObjective { component } => {
                write!(f, "component {component}: NaN curve objective")
            }
            SpuriousReason::NonFiniteLoglik => write!(f, "non-finite log-likelihood"),
        }
    }
}

/// A retained (non-spurious) fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: MixtureModel,
    pub posteriors: Posteriors,
    pub assignments: Vec<Assignment>,
    pub loglik: f64,
    pub trace: EmTrace,
}

/// Result of [`em_fit`]: either a retained fit or a spurious run.
#[derive(Debug, Clone)]
pub enum EmOutcome {
    Fit(FitResult),
    Spurious {
        reason: SpuriousReason,
        trace: EmTrace,
    },
}

impl EmOutcome {
    pub fn fit(&self) -> Option<&FitResult> {
        match self {
            EmOutcome::Fit(r) => Some(r),
            EmOutcome::Spurious { .. } => None,
        }
    }

    pub fn trace(&self) -> &EmTrace {
        match self {
            EmOutcome::Fit(r) => &r.trace,
            EmOutcome::Spurious { trace, .. } => trace,
        }
    }
}

/// E step: posterior block probabilities and the observed-data log-likelihood.
pub fn e_step(blocks: &[Block], model: &MixtureModel) -> (Posteriors, f64) {
    let cached: Vec<(f64, &BivariateCurve, Gauss2)> = model
        .weights
        .iter()
        .zip(&model.components)
        .map(|(w, c)| (w.ln(), &c.curve, Gauss2::new(&c.sigma)))
        .collect();
    let mut rows = Vec::with_capacity(blocks.len());
    let mut total = 0.0;
    let mut scores = vec![0.0; model.k()];
    for block in blocks {
        for (k, (ln_w, curve, gauss)) in cached.iter().enumerate() {
            scores[k] = block_log_score_cached(block, *ln_w, curve, gauss);
        }
        let (row, norm) = normalized_row(&scores);
        total += norm;
        rows.push(row);
    }
    (
        Posteriors {
            region_ids: blocks.iter().map(|b| b.region_id.clone()).collect(),
            rows,
        },
        total,
    )
}

/// M step for the mixture weights: `pi_k = sum_b n_b tau_bk / sum_b n_b`.
pub fn m_step_weights(post: &Posteriors, blocks: &[Block]) -> Vec<f64> {
    let k = post.rows[0].len();
    let mut weights = vec![0.0; k];
    let mut total = 0.0;
    for (block, row) in blocks.iter().zip(&post.rows) {
        let n = block.n() as f64;
        total += n;
        for (w, t) in weights.iter_mut().zip(row) {
            *w += n * t;
        }
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    // Pin the sum to exactly one against accumulated rounding.
    let sum: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= sum;
    }
    weights
}

/// M step for the covariances: posterior-weighted residual outer products
/// around the given curves. A non-positive-definite result (an exact fit or
/// an empty component) is a spurious signal, not an error.
pub fn m_step_sigma(
    post: &Posteriors,
    blocks: &[Block],
    curves: &[BivariateCurve],
) -> Result<Vec<Covariance2>, SpuriousReason> {
    let mut out = Vec::with_capacity(curves.len());
    for (k, curve) in curves.iter().enumerate() {
        let mut s11 = 0.0;
        let mut s22 = 0.0;
        let mut s12 = 0.0;
        let mut denom = 0.0;
        for (block, row) in blocks.iter().zip(&post.rows) {
            let tau = row[k];
            if tau == 0.0 {
                continue;
            }
            denom += tau * block.n() as f64;
            for (t, y) in block.times.iter().zip(&block.obs) {
                let mu = curve.eval(*t);
                let r1 = y[0] - mu[0];
                let r2 = y[1] - mu[1];
                s11 += tau * r1 * r1;
                s22 += tau * r2 * r2;
                s12 += tau * r1 * r2;
            }
        }
        if !crate::is_positive(denom) {
            return Err(SpuriousReason::DegenerateSigma { component: k });
        }
        match Covariance2::from_entries(s11 / denom, s22 / denom, s12 / denom) {
            Ok(sigma) => out.push(sigma),
            Err(_) => return Err(SpuriousReason::DegenerateSigma { component: k }),
        }
    }
    Ok(out)
}

/// Weighted sum of squared Mahalanobis residuals for one component; the
/// objective the curve update minimizes. Exposed for tests.
pub fn curve_objective(
    post: &Posteriors,
    blocks: &[Block],
    sigma: &Covariance2,
    curve: &BivariateCurve,
    k: usize,
) -> f64 {
    let gauss = Gauss2::new(sigma);
    let mut acc = 0.0;
    for (block, row) in blocks.iter().zip(&post.rows) {
        let tau = row[k];
        if tau == 0.0 {
            continue;
        }
        let mut block_acc = 0.0;
        for (t, y) in block.times.iter().zip(&block.obs) {
            let mu = curve.eval(*t);
            block_acc += gauss.mahalanobis(y[0] - mu[0], y[1] - mu[1]);
        }
        acc += tau * block_acc;
    }
    acc
}

fn curve_objective_grad(
    post: &Posteriors,
    blocks: &[Block],
    gauss: &Gauss2,
    curve: &BivariateCurve,
    k: usize,
    grad: Option<&mut [f64]>,
) -> f64 {
    let mut acc = 0.0;
    match grad {
        None => {
            for (block, row) in blocks.iter().zip(&post.rows) {
                let tau = row[k];
                if tau == 0.0 {
                    continue;
                }
                let mut block_acc = 0.0;
                for (t, y) in block.times.iter().zip(&block.obs) {
                    let mu = curve.eval(*t);
                    block_acc += gauss.mahalanobis(y[0] - mu[0], y[1] - mu[1]);
                }
                acc += tau * block_acc;
            }
        }
        Some(g) => {
            g.fill(0.0);
            for (block, row) in blocks.iter().zip(&post.rows) {
                let tau = row[k];
                if tau == 0.0 {
                    continue;
                }
                let mut block_acc = 0.0;
                let mut block_g = [0.0f64; 8];
                for (t, y) in block.times.iter().zip(&block.obs) {
                    let (h1, g1) = curve.cases.gradient_log_params(*t);
                    let (h2, g2) = curve.deaths.gradient_log_params(*t);
                    let r1 = y[0] - h1;
                    let r2 = y[1] - h2;
                    block_acc += gauss.mahalanobis(r1, r2);
                    let (a1, a2) = gauss.solve(r1, r2);
                    for j in 0..4 {
                        block_g[j] -= 2.0 * a1 * g1[j];
                        block_g[4 + j] -= 2.0 * a2 * g2[j];
                    }
                }
                acc += tau * block_acc;
                for (gi, bi) in g.iter_mut().zip(&block_g) {
                    *gi += tau * bi;
                }
            }
        }
    }
    acc
}

fn curve_from_log(x: &[f64]) -> BivariateCurve {
    BivariateCurve::new(
        LogisticParams::from_log_array(&x[0..4]),
        LogisticParams::from_log_array(&x[4..8]),
    )
}

// Search box for the curve optimizer, in log space. The box is far wider
// than any identifiable fit, but it is bounded: past gamma ~ 1e3 the curve
// is indistinguishable in double precision from its Gompertz limit along the
// flat (b -> 0, gamma -> infinity) ridge, and an unbounded line search walks
// that ridge forever without changing the attainable likelihood.
const LOG_BOX_GENERAL: f64 = 34.538_776_394_910_684; // ln 1e15
const LOG_GAMMA_MAX: f64 = 6.907_755_278_982_137; // ln 1e3
const LOG_GAMMA_MIN: f64 = -13.815_510_557_964_274; // ln 1e-6

fn outside_search_box(x: &[f64]) -> bool {
    x.iter().enumerate().any(|(i, v)| {
        if i % 4 == 3 {
            *v < LOG_GAMMA_MIN || *v > LOG_GAMMA_MAX
        } else {
            v.abs() > LOG_BOX_GENERAL
        }
    })
}

/// Moment-based curve guess from the blocks a component currently owns
/// (argmax posterior, ties toward the smallest index). Gives the optimizer a
/// data-driven restart point when the warm start's capacity is far from the
/// owned blocks' scale, the situation where EM otherwise parks in a
/// flat-curve local optimum with an inflated covariance.
fn posterior_moment_guess(post: &Posteriors, blocks: &[Block], k: usize) -> Option<BivariateCurve> {
    let mut pooled: Vec<(f64, [f64; 2])> = Vec::new();
    for (block, row) in blocks.iter().zip(&post.rows) {
        let mut owner = 0;
        let mut best = row[0];
        for (j, &t) in row.iter().enumerate().skip(1) {
            if t > best {
                best = t;
                owner = j;
            }
        }
        if owner == k {
            pooled.extend(block.times.iter().zip(&block.obs).map(|(t, y)| (*t, *y)));
        }
    }
    if pooled.len() < 4 {
        return None;
    }
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let window = pooled[pooled.len() - 1].0 - pooled[0].0;
    if window <= 0.0 {
        return None;
    }
    // Rise over roughly half the observed window.
    let c = 2.0 * (99.0f64).ln() / window;
    let coordinate = |idx: usize| {
        let max_rate = pooled.iter().map(|p| p.1[idx]).fold(0.0f64, f64::max);
        let a = (1.1 * max_rate).max(1e-6);
        let t_half = pooled
            .iter()
            .find(|p| p.1[idx] >= 0.5 * a)
            .map(|p| p.0)
            .unwrap_or_else(|| 0.5 * (pooled[0].0 + pooled[pooled.len() - 1].0));
        LogisticParams {
            a,
            b: (c * t_half).clamp(-30.0, 30.0).exp(),
            c,
            gamma: 1.0,
        }
    };
    let curve = BivariateCurve::new(coordinate(0), coordinate(1));
    curve.validate().ok().map(|_| curve)
}

/// M step for the curve parameters: improves (never worsens) the weighted
/// Mahalanobis objective per component, optimizing in log-parameter space
/// warm-started at `init_curves`. When a posterior-weighted moment guess
/// beats the warm-started optimum, the optimizer is restarted there with the
/// remaining budget and the better of the two results is kept. NaN
/// objectives signal a spurious run.
pub fn m_step_theta(
    post: &Posteriors,
    blocks: &[Block],
    sigmas: &[Covariance2],
    init_curves: &[BivariateCurve],
    max_evals: usize,
) -> Result<Vec<BivariateCurve>, SpuriousReason> {
    let mut out = Vec::with_capacity(init_curves.len());
    for (k, (sigma, init)) in sigmas.iter().zip(init_curves).enumerate() {
        let gauss = Gauss2::new(sigma);
        let mut x0 = [0.0f64; 8];
        x0[0..4].copy_from_slice(&init.cases.to_log_array());
        x0[4..8].copy_from_slice(&init.deaths.to_log_array());

        let objective = |x: &[f64], grad: Option<&mut [f64]>| {
            if outside_search_box(x) {
                if let Some(g) = grad {
                    g.fill(0.0);
                }
                return f64::INFINITY;
            }
            let curve = curve_from_log(x);
            curve_objective_grad(post, blocks, &gauss, &curve, k, grad)
        };
        let warm_budget = max_evals / 2 + 1;
        let solution = minimize(objective, &x0, warm_budget);
        if solution.nan_at_start {
            return Err(SpuriousReason::NanObjective { component: k });
        }

        let mut best_x = solution.x;
        let mut best_f = solution.f;
        if let Some(guess) = posterior_moment_guess(post, blocks, k) {
            let mut g0 = [0.0f64; 8];
            g0[0..4].copy_from_slice(&guess.cases.to_log_array());
            g0[4..8].copy_from_slice(&guess.deaths.to_log_array());
            let guess_f = objective(&g0, None);
            if guess_f.is_finite() && guess_f < best_f {
                let restarted = minimize(objective, &g0, max_evals - warm_budget.min(max_evals));
                if restarted.f < best_f {
                    best_f = restarted.f;
                    best_x = restarted.x;
                }
            }
        }

        if best_x == x0 {
            // No improvement found: keep the warm start, bit for bit.
            out.push(*init);
            continue;
        }
        let candidate = curve_from_log(&best_x);
        // exp() can land on 0 or infinity at extreme steps; keep the warm
        // start in that case (the objective did not improve meaningfully).
        if best_f.is_finite() && candidate.validate().is_ok() {
            out.push(candidate);
        } else {
            out.push(*init);
        }
    }
    Ok(out)
}

/// Flags collapsed covariances and effectively empty components.
pub fn detect_spurious(
    model: &MixtureModel,
    post: &Posteriors,
    blocks: &[Block],
    config: &EmConfig,
) -> Option<SpuriousReason> {
    debug_assert_eq!(post.rows.len(), blocks.len());
    let max_eigen = model
        .components
        .iter()
        .map(|c| c.sigma.eigenvalues().1)
        .fold(0.0f64, f64::max);
    for (k, comp) in model.components.iter().enumerate() {
        let (min_e, _) = comp.sigma.eigenvalues();
        if min_e / max_eigen < config.spurious_min_eigen_ratio {
            return Some(SpuriousReason::CollapsedCovariance { component: k });
        }
    }
    for k in 0..model.k() {
        let mass: f64 = post.rows.iter().map(|row| row[k]).sum();
        if mass < config.spurious_min_weight_blocks {
            return Some(SpuriousReason::EmptyComponent { component: k });
        }
    }
    None
}

/// Runs EM from `init` until the relative log-likelihood change drops below
/// `config.tol`, the iteration cap is reached, or a spurious solution is
/// detected (in which case the run is reported as spurious, not retained).
pub fn em_fit(
    blocks: &[Block],
    k: usize,
    init: MixtureModel,
    config: &EmConfig,
) -> Result<EmOutcome, Error> {
    config.validate()?;
    if blocks.is_empty() {
        return Err(Error::InvalidConfig("no blocks to fit".into()));
    }
    if init.k() != k {
        return Err(Error::InvalidConfig(format!(
            "init has K={} but K={k} was requested",
            init.k()
        )));
    }
    init.validate()?;

    let mut model = init;
    let mut loglik_trace: Vec<f64> = Vec::new();
    let spurious = |reason, loglik: Vec<f64>| {
        let iterations = loglik.len();
        Ok(EmOutcome::Spurious {
            reason,
            trace: EmTrace {
                loglik,
                iterations,
                termination: Termination::Spurious,
            },
        })
    };

    for iter in 0..config.max_iter {
        let (post, ll) = e_step(blocks, &model);
        if !ll.is_finite() {
            return spurious(SpuriousReason::NonFiniteLoglik, loglik_trace);
        }
        loglik_trace.push(ll);

        let converged = iter > 0 && {
            let prev = loglik_trace[iter - 1];
            // Relative change with an absolute floor guarding division when
            // the log-likelihood sits near zero.
            (ll - prev).abs() / prev.abs().max(1e-12) < config.tol
        };
        if converged || iter + 1 == config.max_iter {
            let iterations = loglik_trace.len();
            let assignments = classify(&post);
            return Ok(EmOutcome::Fit(FitResult {
                model,
                posteriors: post,
                assignments,
                loglik: ll,
                trace: EmTrace {
                    loglik: loglik_trace,
                    iterations,
                    termination: if converged {
                        Termination::Converged
                    } else {
                        Termination::MaxIter
                    },
                },
            }));
        }

        let weights = m_step_weights(&post, blocks);
        let prev_sigmas: Vec<Covariance2> = model.components.iter().map(|c| c.sigma).collect();
        let prev_curves: Vec<BivariateCurve> = model.components.iter().map(|c| c.curve).collect();
        let curves = match m_step_theta(
            &post,
            blocks,
            &prev_sigmas,
            &prev_curves,
            config.optimizer_max_evals,
        ) {
            Ok(c) => c,
            Err(reason) => return spurious(reason, loglik_trace),
        };
        let sigmas = match m_step_sigma(&post, blocks, &curves) {
            Ok(s) => s,
            Err(reason) => return spurious(reason, loglik_trace),
        };

        let components: Vec<Component> = curves
            .into_iter()
            .zip(sigmas)
            .map(|(curve, sigma)| Component::new(curve, sigma))
            .collect();
        model = MixtureModel::new(weights, components, model.time_scale)?;

        if let Some(reason) = detect_spurious(&model, &post, blocks, config) {
            return spurious(reason, loglik_trace);
        }
    }
    unreachable!("loop returns on the final iteration");
}
