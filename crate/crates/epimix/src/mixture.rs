//! Mixture-model data types, block-level likelihood, Bayes classification and
//! synthetic sampling.
//!
//! A mixture of order `K` has weights `pi_1..pi_K` and one [`Component`] per
//! weight: a bivariate logistic mean curve plus a 2x2 covariance. All
//! likelihood arithmetic is done in log space; the literal product form of the
//! block posterior numerator underflows for blocks of realistic length and is
//! never evaluated.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Block;
use crate::error::Error;
use crate::growth::{BivariateCurve, LogisticParams};

/// 2x2 covariance of one component, stored in reporting form
/// (standard deviations and correlation) and exposed as matrix entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Covariance2 {
    /// Standard deviation of the case-rate coordinate.
    #[serde(rename = "s1")]
    pub sigma_cases: f64,
    /// Standard deviation of the death-rate coordinate.
    #[serde(rename = "s2")]
    pub sigma_deaths: f64,
    /// Correlation between the coordinates.
    pub rho: f64,
}

impl Covariance2 {
    pub fn new(sigma_cases: f64, sigma_deaths: f64, rho: f64) -> Result<Self, Error> {
        let c = Self {
            sigma_cases,
            sigma_deaths,
            rho,
        };
        c.validate()?;
        Ok(c)
    }

    /// Builds from matrix entries (variances and covariance), rejecting
    /// non-SPD input.
    pub fn from_entries(var_cases: f64, var_deaths: f64, cov: f64) -> Result<Self, Error> {
        let spd = cov * cov < var_cases * var_deaths;
        if !crate::is_positive(var_cases) || !crate::is_positive(var_deaths) || !spd {
            return Err(Error::InvalidParameter(format!(
                "covariance matrix [[{var_cases}, {cov}], [{cov}, {var_deaths}]] is not symmetric positive definite"
            )));
        }
        let s1 = var_cases.sqrt();
        let s2 = var_deaths.sqrt();
        Self::new(s1, s2, cov / (s1 * s2))
    }

    pub fn validate(&self) -> Result<(), Error> {
        let ok = crate::is_positive(self.sigma_cases)
            && crate::is_positive(self.sigma_deaths)
            && self.rho.abs() < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "covariance (s1={}, s2={}, rho={}) is not symmetric positive definite",
                self.sigma_cases, self.sigma_deaths, self.rho
            )))
        }
    }

    pub fn var_cases(&self) -> f64 {
        self.sigma_cases * self.sigma_cases
    }

    pub fn var_deaths(&self) -> f64 {
        self.sigma_deaths * self.sigma_deaths
    }

    pub fn cov(&self) -> f64 {
        self.sigma_cases * self.sigma_deaths * self.rho
    }

    /// Eigenvalues of the covariance matrix, smallest first.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let (v1, v2, cv) = (self.var_cases(), self.var_deaths(), self.cov());
        let mean = 0.5 * (v1 + v2);
        let disc = (0.25 * (v1 - v2) * (v1 - v2) + cv * cv).sqrt();
        (mean - disc, mean + disc)
    }

    /// Lower-triangular Cholesky factor `[[l11, 0], [l21, l22]]`.
    pub fn cholesky(&self) -> [f64; 3] {
        [
            self.sigma_cases,
            self.sigma_deaths * self.rho,
            self.sigma_deaths * (1.0 - self.rho * self.rho).sqrt(),
        ]
    }
}

/// Precomputed quantities for repeated bivariate normal log-density
/// evaluations against one covariance.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Gauss2 {
    inv11: f64,
    inv12: f64,
    inv22: f64,
    /// `-ln(2 pi) - log|Sigma| / 2`
    offset: f64,
}

impl Gauss2 {
    pub(crate) fn new(sigma: &Covariance2) -> Self {
        let (v1, v2, cv) = (sigma.var_cases(), sigma.var_deaths(), sigma.cov());
        let det = v1 * v2 - cv * cv;
        let logdet = 2.0 * sigma.sigma_cases.ln()
            + 2.0 * sigma.sigma_deaths.ln()
            + (-sigma.rho * sigma.rho).ln_1p();
        Self {
            inv11: v2 / det,
            inv12: -cv / det,
            inv22: v1 / det,
            offset: -(2.0 * std::f64::consts::PI).ln() - 0.5 * logdet,
        }
    }

    /// Squared Mahalanobis norm of the residual `(r1, r2)`.
    #[inline]
    pub(crate) fn mahalanobis(&self, r1: f64, r2: f64) -> f64 {
        self.inv11 * r1 * r1 + 2.0 * self.inv12 * r1 * r2 + self.inv22 * r2 * r2
    }

    #[inline]
    pub(crate) fn log_density(&self, r1: f64, r2: f64) -> f64 {
        self.offset - 0.5 * self.mahalanobis(r1, r2)
    }

    /// Row-wise application of the inverse matrix to a residual.
    #[inline]
    pub(crate) fn solve(&self, r1: f64, r2: f64) -> (f64, f64) {
        (
            self.inv11 * r1 + self.inv12 * r2,
            self.inv12 * r1 + self.inv22 * r2,
        )
    }
}

/// Log of the bivariate Gaussian density at `y` with mean `mu`.
pub fn log_density_bivariate(y: [f64; 2], mu: [f64; 2], sigma: &Covariance2) -> f64 {
    Gauss2::new(sigma).log_density(y[0] - mu[0], y[1] - mu[1])
}

/// One mixture component: a bivariate mean curve plus its covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub curve: BivariateCurve,
    pub sigma: Covariance2,
}

impl Component {
    pub fn new(curve: BivariateCurve, sigma: Covariance2) -> Self {
        Self { curve, sigma }
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.curve.validate()?;
        self.sigma.validate()
    }
}

/// Finite mixture of order `K` over bivariate logistic regressions.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    pub weights: Vec<f64>,
    pub components: Vec<Component>,
    /// Days per unit of model time, carried from ingestion so fitted curves
    /// can be mapped back to calendar days.
    pub time_scale: f64,
}

/// Number of free parameters of a K-component model: 8 logistic parameters
/// and 3 covariance parameters per component, plus K - 1 weights.
pub fn free_params(k: usize) -> usize {
    12 * k - 1
}

impl MixtureModel {
    pub fn new(
        weights: Vec<f64>,
        components: Vec<Component>,
        time_scale: f64,
    ) -> Result<Self, Error> {
        let m = Self {
            weights,
            components,
            time_scale,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// Strict invariants for models produced by this crate: weights sum to 1
    /// within 1e-12. Models read from JSON go through the more lenient
    /// [`MixtureModel::from_json_str`], which tolerates weights published at
    /// printed precision.
    pub fn validate(&self) -> Result<(), Error> {
        self.validate_with_weight_tol(1e-12)
    }

    fn validate_with_weight_tol(&self, tol: f64) -> Result<(), Error> {
        if self.weights.is_empty() || self.weights.len() != self.components.len() {
            return Err(Error::InvalidParameter(
                "model must have K >= 1 weights and as many components".into(),
            ));
        }
        if !crate::is_positive(self.time_scale) {
            return Err(Error::InvalidParameter(
                "model time_scale must be a positive real".into(),
            ));
        }
        for (k, w) in self.weights.iter().enumerate() {
            if !(*w > 0.0 && *w <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "weight {k} must lie in (0, 1], got {w}"
                )));
            }
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::InvalidParameter(format!(
                "weights must sum to 1 (tolerance {tol}), got {sum}"
            )));
        }
        for c in &self.components {
            c.validate()?;
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String, Error> {
        let json = ModelJson {
            k: self.k(),
            time_scale: self.time_scale,
            weights: self.weights.clone(),
            components: self
                .components
                .iter()
                .map(|c| ComponentJson {
                    cases: c.curve.cases,
                    deaths: c.curve.deaths,
                    sigma: c.sigma,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&json)?)
    }

    /// Parses the model JSON format. Weight sums are accepted within 1e-2 of
    /// one (published tables round weights to a few decimals) and are kept
    /// exactly as given; block posteriors are invariant under rescaling all
    /// weights by a common factor, so no renormalization is applied.
    pub fn from_json_str(text: &str) -> Result<Self, Error> {
        let json: ModelJson = serde_json::from_str(text)?;
        if json.k != json.weights.len() {
            return Err(Error::InvalidParameter(format!(
                "model JSON declares K={} but has {} weights",
                json.k,
                json.weights.len()
            )));
        }
        let model = Self {
            weights: json.weights,
            components: json
                .components
                .into_iter()
                .map(|c| Component::new(BivariateCurve::new(c.cases, c.deaths), c.sigma))
                .collect(),
            time_scale: json.time_scale,
        };
        model.validate_with_weight_tol(1e-2)?;
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), Error> {
        std::fs::write(path, self.to_json_string()? + "\n").map_err(|source| Error::FileIo {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::FileIo {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    #[serde(rename = "K")]
    k: usize,
    time_scale: f64,
    weights: Vec<f64>,
    components: Vec<ComponentJson>,
}

#[derive(Serialize, Deserialize)]
struct ComponentJson {
    cases: LogisticParams,
    deaths: LogisticParams,
    sigma: Covariance2,
}

/// Block-by-component posterior probabilities `tau[b][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriors {
    pub region_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Posteriors {
    pub fn validate(&self) -> Result<(), Error> {
        if self.region_ids.len() != self.rows.len() {
            return Err(Error::InvalidParameter(
                "posterior rows must align with region ids".into(),
            ));
        }
        for (b, row) in self.rows.iter().enumerate() {
            if row.iter().any(|t| !(0.0..=1.0).contains(t)) {
                return Err(Error::InvalidParameter(format!(
                    "posterior row {b} has entries outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidParameter(format!(
                    "posterior row {b} sums to {sum}"
                )));
            }
        }
        Ok(())
    }
}

/// Log of the E-step numerator for one block and one component:
/// `n_b ln(weight) + sum_i ln phi2(y_i; h(t_i), Sigma)`.
pub fn block_log_score(block: &Block, weight: f64, comp: &Component) -> f64 {
    let gauss = Gauss2::new(&comp.sigma);
    block_log_score_cached(block, weight.ln(), &comp.curve, &gauss)
}

#[inline]
pub(crate) fn block_log_score_cached(
    block: &Block,
    ln_weight: f64,
    curve: &BivariateCurve,
    gauss: &Gauss2,
) -> f64 {
    let mut acc = block.n() as f64 * ln_weight;
    for (t, y) in block.times.iter().zip(&block.obs) {
        let mu = curve.eval(*t);
        acc += gauss.log_density(y[0] - mu[0], y[1] - mu[1]);
    }
    acc
}

/// Log-sum-exp of a slice.
pub(crate) fn logsumexp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Posterior probabilities of one block over all components, together with
/// the block's log-likelihood contribution (the log-normalizer).
pub fn posterior_row(block: &Block, model: &MixtureModel) -> (Vec<f64>, f64) {
    let scores: Vec<f64> = model
        .weights
        .iter()
        .zip(&model.components)
        .map(|(w, c)| block_log_score(block, *w, c))
        .collect();
    normalized_row(&scores)
}

pub(crate) fn normalized_row(scores: &[f64]) -> (Vec<f64>, f64) {
    let norm = logsumexp(scores);
    let mut row: Vec<f64> = scores.iter().map(|s| (s - norm).exp()).collect();
    let total: f64 = row.iter().sum();
    for r in &mut row {
        *r /= total;
    }
    (row, norm)
}

/// Observed-data log-likelihood of the blocks under the model.
pub fn loglik(blocks: &[Block], model: &MixtureModel) -> f64 {
    blocks
        .iter()
        .map(|b| posterior_row(b, model).1)
        .sum()
}

/// One block's hard assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub region_id: String,
    /// Zero-based component index.
    pub label: usize,
    pub max_posterior: f64,
}

/// Bayes decision rule: per block, the argmax posterior component. Ties break
/// toward the smallest index.
pub fn classify(post: &Posteriors) -> Vec<Assignment> {
    post.region_ids
        .iter()
        .zip(&post.rows)
        .map(|(region_id, row)| {
            let mut label = 0;
            let mut best = row[0];
            for (k, &t) in row.iter().enumerate().skip(1) {
                if t > best {
                    best = t;
                    label = k;
                }
            }
            Assignment {
                region_id: region_id.clone(),
                label,
                max_posterior: best,
            }
        })
        .collect()
}

/// Samples one synthetic block: a component label drawn from the weights,
/// then correlated Gaussian noise around that component's mean curve at the
/// given times. Deterministic for a fixed seed.
pub fn sample_block(
    model: &MixtureModel,
    times: &[f64],
    seed: u64,
) -> Result<(Block, usize), Error> {
    if times.is_empty() || times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "sample times must be nonempty and strictly increasing".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: f64 = rng.gen();
    let mut label = model.k() - 1;
    let mut acc = 0.0;
    for (k, w) in model.weights.iter().enumerate() {
        acc += w;
        if u < acc {
            label = k;
            break;
        }
    }
    let comp = &model.components[label];
    let [l11, l21, l22] = comp.sigma.cholesky();
    let obs = times
        .iter()
        .map(|&t| {
            let mu = comp.curve.eval(t);
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            [mu[0] + l11 * z1, mu[1] + l21 * z1 + l22 * z2]
        })
        .collect();
    let block = Block::new(format!("sim-{seed}"), times.to_vec(), obs)?;
    Ok((block, label))
}
