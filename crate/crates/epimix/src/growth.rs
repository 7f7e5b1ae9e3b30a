//! Four-parameter generalized logistic growth curves.
//!
//! The mean trend of every mixture component is `h(t) = a (1 + b e^{-ct})^{-gamma}`
//! with all four parameters strictly positive. The curve rises monotonically from
//! the horizontal asymptote 0 to the asymptote `a`, with the inflection point
//! controlled by `gamma`. Cases and deaths are modeled jointly, so each component
//! carries one such curve per response coordinate.

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// `ln(1 + e^u)`, stable over the whole f64 range.
#[inline]
pub(crate) fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

/// `1 / (1 + e^{-u})`, stable over the whole f64 range.
#[inline]
pub(crate) fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Parameters of one generalized logistic curve.
///
/// `a` is the carrying capacity (upper asymptote), `b` a shift, `c` the growth
/// rate per unit of (scaled) time and `gamma` the asymmetry of the inflection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub gamma: f64,
}

impl LogisticParams {
    /// Validates strict positivity of all four parameters.
    pub fn new(a: f64, b: f64, c: f64, gamma: f64) -> Result<Self, Error> {
        let p = Self { a, b, c, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), Error> {
        for (name, v) in [
            ("a", self.a),
            ("b", self.b),
            ("c", self.c),
            ("gamma", self.gamma),
        ] {
            if !crate::is_positive(v) {
                return Err(Error::InvalidParameter(format!(
                    "logistic parameter {name} must be a finite positive real, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Evaluates `a (1 + b e^{-ct})^{-gamma}`.
    ///
    /// Computed as `a * exp(-gamma * softplus(ln b - c t))` so that neither
    /// `e^{-ct}` nor the power overflows for extreme arguments.
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        let u = self.b.ln() - self.c * t;
        self.a * (-self.gamma * softplus(u)).exp()
    }

    /// Analytic partial derivatives `(dh/da, dh/db, dh/dc, dh/dgamma)`.
    #[inline]
    pub fn gradient(&self, t: f64) -> [f64; 4] {
        let u = self.b.ln() - self.c * t;
        let sp = softplus(u);
        let sg = sigmoid(u); // b e^{-ct} / (1 + b e^{-ct})
        let h = self.a * (-self.gamma * sp).exp();
        [
            h / self.a,
            -self.gamma * h * sg / self.b,
            self.gamma * t * h * sg,
            -h * sp,
        ]
    }

    /// Partial derivatives with respect to the log-parameters
    /// `(ln a, ln b, ln c, ln gamma)`; used by the M-step optimizer, which
    /// works in log space so positivity needs no constraints.
    #[inline]
    pub(crate) fn gradient_log_params(&self, t: f64) -> (f64, [f64; 4]) {
        let u = self.b.ln() - self.c * t;
        let sp = softplus(u);
        let sg = sigmoid(u);
        let h = self.a * (-self.gamma * sp).exp();
        let g = [
            h,
            -self.gamma * h * sg,
            self.gamma * self.c * t * h * sg,
            -self.gamma * h * sp,
        ];
        (h, g)
    }

    /// Closed-form inflection point `(t0, y0)` with `t0 = ln(b gamma) / c`
    /// and `y0 = a (1 + 1/gamma)^{-gamma}`.
    pub fn inflection(&self) -> (f64, f64) {
        let t0 = (self.b * self.gamma).ln() / self.c;
        let y0 = self.a * (-self.gamma * self.gamma.recip().ln_1p()).exp();
        (t0, y0)
    }

    pub(crate) fn to_log_array(self) -> [f64; 4] {
        [self.a.ln(), self.b.ln(), self.c.ln(), self.gamma.ln()]
    }

    pub(crate) fn from_log_array(x: &[f64]) -> Self {
        Self {
            a: x[0].exp(),
            b: x[1].exp(),
            c: x[2].exp(),
            gamma: x[3].exp(),
        }
    }
}

/// The bivariate mean trend of one component: a logistic curve per coordinate,
/// cases first, deaths second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BivariateCurve {
    pub cases: LogisticParams,
    pub deaths: LogisticParams,
}

impl BivariateCurve {
    pub fn new(cases: LogisticParams, deaths: LogisticParams) -> Self {
        Self { cases, deaths }
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.cases.validate()?;
        self.deaths.validate()
    }

    /// Componentwise curve value at `t`.
    #[inline]
    pub fn eval(&self, t: f64) -> [f64; 2] {
        [self.cases.eval(t), self.deaths.eval(t)]
    }
}
