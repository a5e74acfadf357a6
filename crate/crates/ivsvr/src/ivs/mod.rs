//! Finance-specific layer: option ticks, yield-curve interpolation, the
//! quadratic surface feature map, prediction grids, and (in submodules)
//! pricing/implied-volatility inversion and the reopening-interval online
//! loop.
//!
//! An implied-volatility surface is modeled per quote side — Call/Put ×
//! Bid/Ask — by four fully independent learners. Every option tick is
//! mapped to a four-dimensional feature vector `(κ̃, κ̃², τ, κ̃τ)` built
//! from the (optionally scaled) strike and maturity, and its
//! solver-inverted implied volatility becomes the regression target.

pub mod online;
pub mod pricing;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::FeatureVector;

/// Option exercise side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OptionSide {
    Call,
    Put,
}

impl OptionSide {
    /// One-letter tick-file code.
    pub fn code(&self) -> char {
        match self {
            OptionSide::Call => 'C',
            OptionSide::Put => 'P',
        }
    }

    pub fn from_code(c: &str) -> Option<Self> {
        match c {
            "C" => Some(OptionSide::Call),
            "P" => Some(OptionSide::Put),
            _ => None,
        }
    }
}

/// Quote side of the book.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuoteSide {
    Bid,
    Ask,
}

impl QuoteSide {
    pub fn code(&self) -> char {
        match self {
            QuoteSide::Bid => 'B',
            QuoteSide::Ask => 'A',
        }
    }

    pub fn from_code(c: &str) -> Option<Self> {
        match c {
            "B" => Some(QuoteSide::Bid),
            "A" => Some(QuoteSide::Ask),
            _ => None,
        }
    }
}

/// One modeled surface: the Call/Put × Bid/Ask cross.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelSide {
    CallBid,
    CallAsk,
    PutBid,
    PutAsk,
}

impl ModelSide {
    pub const ALL: [ModelSide; 4] =
        [ModelSide::CallBid, ModelSide::CallAsk, ModelSide::PutBid, ModelSide::PutAsk];

    pub fn from_parts(side: OptionSide, quote: QuoteSide) -> Self {
        match (side, quote) {
            (OptionSide::Call, QuoteSide::Bid) => ModelSide::CallBid,
            (OptionSide::Call, QuoteSide::Ask) => ModelSide::CallAsk,
            (OptionSide::Put, QuoteSide::Bid) => ModelSide::PutBid,
            (OptionSide::Put, QuoteSide::Ask) => ModelSide::PutAsk,
        }
    }

    pub fn index(&self) -> usize {
        match self {
            ModelSide::CallBid => 0,
            ModelSide::CallAsk => 1,
            ModelSide::PutBid => 2,
            ModelSide::PutAsk => 3,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ModelSide::CallBid => "call_bid",
            ModelSide::CallAsk => "call_ask",
            ModelSide::PutBid => "put_bid",
            ModelSide::PutAsk => "put_ask",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        ModelSide::ALL.into_iter().find(|m| m.label() == s)
    }

    pub fn option_side(&self) -> OptionSide {
        match self {
            ModelSide::CallBid | ModelSide::CallAsk => OptionSide::Call,
            ModelSide::PutBid | ModelSide::PutAsk => OptionSide::Put,
        }
    }
}

impl std::fmt::Display for ModelSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Latest top-of-book quote for one option series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptionTick {
    /// Microseconds since the Unix epoch.
    pub timestamp_us: i64,
    pub side: OptionSide,
    pub quote: QuoteSide,
    pub strike: f64,
    pub maturity_years: f64,
    pub price: f64,
    /// Futures (or spot) price of the underlying at the tick.
    pub underlying: f64,
}

impl OptionTick {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("strike", self.strike),
            ("maturity_years", self.maturity_years),
            ("price", self.price),
            ("underlying", self.underlying),
        ];
        for (name, v) in checks {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be a positive finite real, got {v}"),
                });
            }
        }
        Ok(())
    }

    pub fn model_side(&self) -> ModelSide {
        ModelSide::from_parts(self.side, self.quote)
    }

    /// Strike over underlying; the pipeline keeps the near-the-money band.
    pub fn moneyness(&self) -> f64 {
        self.strike / self.underlying
    }
}

/// One regression sample: quadratic-surface features plus the implied
/// volatility solved from the tick price.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub features: FeatureVector,
    pub target_iv: f64,
}

impl Observation {
    pub fn new(features: FeatureVector, target_iv: f64) -> Result<Self> {
        if !target_iv.is_finite() || target_iv <= 0.0 || target_iv >= 5.0 {
            return Err(Error::InvalidParameter {
                name: "target_iv",
                reason: format!("must lie in (0, 5), got {target_iv}"),
            });
        }
        Ok(Observation { features, target_iv })
    }
}

/// Continuously-compounded zero rates on strictly increasing tenors,
/// interpolated piecewise-linearly with flat extrapolation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YieldCurve {
    tenors: Vec<f64>,
    rates: Vec<f64>,
}

impl YieldCurve {
    pub fn new(tenors: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if tenors.is_empty() {
            return Err(Error::InvalidParameter {
                name: "tenors",
                reason: "curve needs at least one point".to_string(),
            });
        }
        if tenors.len() != rates.len() {
            return Err(Error::DimensionMismatch(tenors.len(), rates.len()));
        }
        for w in tenors.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidParameter {
                    name: "tenors",
                    reason: format!("must be strictly increasing, got {} then {}", w[0], w[1]),
                });
            }
        }
        if tenors.iter().chain(rates.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "curve",
                reason: "all tenors and rates must be finite".to_string(),
            });
        }
        Ok(YieldCurve { tenors, rates })
    }

    /// Single-point curve returning `rate` for every maturity.
    pub fn flat(rate: f64) -> Self {
        YieldCurve { tenors: vec![1.0], rates: vec![rate] }
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.tenors.iter().copied().zip(self.rates.iter().copied())
    }

    /// Piecewise-linear in tenor, flat beyond both endpoints.
    pub fn interpolate_rate(&self, tau: f64) -> f64 {
        let n = self.tenors.len();
        if tau <= self.tenors[0] {
            return self.rates[0];
        }
        if tau >= self.tenors[n - 1] {
            return self.rates[n - 1];
        }
        // tau is strictly inside (tenors[0], tenors[n-1]); find its segment.
        let hi = self.tenors.partition_point(|&t| t < tau);
        let (t0, t1) = (self.tenors[hi - 1], self.tenors[hi]);
        let (r0, r1) = (self.rates[hi - 1], self.rates[hi]);
        r0 + (r1 - r0) * (tau - t0) / (t1 - t0)
    }
}

/// The strikes × maturities lattice on which surfaces are predicted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    strikes: Vec<f64>,
    maturities: Vec<f64>,
}

impl GridSpec {
    pub fn new(strikes: Vec<f64>, maturities: Vec<f64>) -> Result<Self> {
        for (name, axis) in [("strikes", &strikes), ("maturities", &maturities)] {
            if axis.is_empty() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "grid axis must be nonempty".to_string(),
                });
            }
            if axis.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "grid axis entries must be positive finite reals".to_string(),
                });
            }
            for w in axis.windows(2) {
                if !(w[1] > w[0]) {
                    return Err(Error::InvalidParameter {
                        name,
                        reason: "grid axis must be strictly increasing".to_string(),
                    });
                }
            }
        }
        Ok(GridSpec { strikes, maturities })
    }

    /// Evenly spaced strikes across the `[lo, hi]` moneyness band around a
    /// reference price, crossed with the given maturities.
    pub fn moneyness_band(
        f_ref: f64,
        n_strikes: usize,
        lo: f64,
        hi: f64,
        maturities: Vec<f64>,
    ) -> Result<Self> {
        if n_strikes < 2 || !(hi > lo) || !(lo > 0.0) || !(f_ref > 0.0) {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: format!(
                    "need ≥ 2 strikes and 0 < lo < hi with a positive reference, \
                     got n={n_strikes}, lo={lo}, hi={hi}, f_ref={f_ref}"
                ),
            });
        }
        let strikes = (0..n_strikes)
            .map(|i| f_ref * (lo + (hi - lo) * i as f64 / (n_strikes - 1) as f64))
            .collect();
        GridSpec::new(strikes, maturities)
    }

    pub fn strikes(&self) -> &[f64] {
        &self.strikes
    }

    pub fn maturities(&self) -> &[f64] {
        &self.maturities
    }

    pub fn n_points(&self) -> usize {
        self.strikes.len() * self.maturities.len()
    }

    /// Grid points in storage order: strike-major, maturity-minor.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.strikes
            .iter()
            .flat_map(move |&k| self.maturities.iter().map(move |&t| (k, t)))
    }

    /// Flat storage index of (strike i, maturity j).
    pub fn flat_index(&self, strike_idx: usize, maturity_idx: usize) -> usize {
        strike_idx * self.maturities.len() + maturity_idx
    }
}

/// Predicted surface values over a [`GridSpec`], one real per grid point
/// in strike-major order. Negative predictions are preserved (never
/// clamped) and reported through [`IvsGrid::negative_count`].
#[derive(Clone, Debug, PartialEq)]
pub struct IvsGrid {
    n_strikes: usize,
    n_maturities: usize,
    values: Vec<f64>,
}

impl IvsGrid {
    pub fn new(n_strikes: usize, n_maturities: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_strikes * n_maturities {
            return Err(Error::DimensionMismatch(values.len(), n_strikes * n_maturities));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter {
                name: "values",
                reason: "grid values must not be NaN".to_string(),
            });
        }
        Ok(IvsGrid { n_strikes, n_maturities, values })
    }

    pub fn n_strikes(&self) -> usize {
        self.n_strikes
    }

    pub fn n_maturities(&self) -> usize {
        self.n_maturities
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, strike_idx: usize, maturity_idx: usize) -> f64 {
        self.values[strike_idx * self.n_maturities + maturity_idx]
    }

    /// Number of negative predictions (flagged, not clamped).
    pub fn negative_count(&self) -> usize {
        self.values.iter().filter(|v| **v < 0.0).count()
    }
}

/// Quadratic-surface feature map. With scaling (the default), the strike
/// enters as κ̃ = κ/F_ref so Gaussian kernel values between grid points
/// stay far from underflow; raw mode passes the strike through untouched.
pub fn feature_vector(kappa: f64, tau: f64, f_ref: f64, scale: bool) -> FeatureVector {
    let k = if scale { kappa / f_ref } else { kappa };
    FeatureVector::new(vec![k, k * k, tau, k * tau])
}
