//! The reopening-interval online loop: four independent learners (Call/Put
//! × Bid/Ask) consume a time-ordered tick stream, and at every wall-clock
//! interval boundary the full surface grid is predicted, per-interval
//! error metrics are emitted, and each learner's step counter resets to 1
//! so the decaying learning rate reopens without wiping the model.
//!
//! Per tick: solve the implied volatility (skipping and tallying
//! unsolvable quotes), record the pre-update prediction error against the
//! latest model, then apply the configured update rule. The warmup period
//! — a whole number of leading intervals — trains the models without
//! emitting records.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fvs::FvsState;
use crate::ivs::pricing::{implied_vol, IvSolverConfig, PricingModel};
use crate::ivs::{
    feature_vector, GridSpec, IvsGrid, Observation, OptionTick, YieldCurve,
};
use crate::kernel::{KernelSpec, DEFAULT_GAMMA};
use crate::mat::Matrix;
use crate::parallel::{batch_predict, BatchPlan};
use crate::svr::{
    update_ekpsvr, update_kpsvr, Budget, EkpsvrParams, EpsilonTube, Schedule,
    SupportVectorDictionary, DEFAULT_BSGD_ETA, DEFAULT_BSGD_LAMBDA, DEFAULT_EPSILON,
    DEFAULT_LAMBDA, DEFAULT_NORMA_P, DEFAULT_OMEGA,
};

/// Default local-fitness threshold for the selection-based learner.
pub const DEFAULT_RHO: f64 = 0.3;
/// Default reopening-interval length.
pub const DEFAULT_INTERVAL_SECONDS: u64 = 60;
/// Default warm-start lag before records are emitted.
pub const DEFAULT_WARMUP_SECONDS: u64 = 3600;
/// Near-the-money band kept by the tick filter.
pub const DEFAULT_MONEYNESS_LO: f64 = 0.95;
pub const DEFAULT_MONEYNESS_HI: f64 = 1.05;

/// Default maturity rungs (in years) for grids and synthetic streams.
pub fn default_maturities() -> Vec<f64> {
    vec![1.0 / 12.0, 2.0 / 12.0, 0.25, 1.0 / 3.0, 0.5]
}

/// Learner hyper-parameters shared by all update rules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IvsHyperParams {
    /// Local-fitness threshold in [0, 1) (selection-based rules only).
    pub rho: f64,
    pub lambda: f64,
    /// Warm-start offset of the decaying schedule.
    pub omega: u64,
    /// ε-tube half-width in implied-volatility units.
    pub epsilon: f64,
    pub kernel: KernelSpec,
}

impl Default for IvsHyperParams {
    fn default() -> Self {
        IvsHyperParams {
            rho: DEFAULT_RHO,
            lambda: DEFAULT_LAMBDA,
            omega: DEFAULT_OMEGA,
            epsilon: DEFAULT_EPSILON,
            kernel: KernelSpec::Gaussian { gamma: DEFAULT_GAMMA },
        }
    }
}

impl IvsHyperParams {
    pub fn validate(&self) -> Result<()> {
        EkpsvrParams::new(self.rho)?;
        EpsilonTube::new(self.epsilon)?;
        Schedule::pegasos(self.lambda, self.omega)?;
        match self.kernel {
            KernelSpec::Gaussian { gamma } => {
                KernelSpec::gaussian(gamma)?;
            }
            KernelSpec::Linear => {}
        }
        Ok(())
    }
}

/// Which update rule drives the learners.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmSpec {
    /// Unbudgeted insertion of every violating sample.
    Kpsvr,
    /// Budgeted: evicts the lowest-scoring key beyond `budget`.
    Bkpsvr { budget: usize },
    /// Selection-based insertion/replacement with the decaying schedule.
    Ekpsvr,
    /// Selection-based machinery with the NORMA √t schedule.
    Norma,
    /// Selection-based machinery with the constant-step schedule.
    Bsgd,
}

impl AlgorithmSpec {
    pub fn label(&self) -> &'static str {
        match self {
            AlgorithmSpec::Kpsvr => "kpsvr",
            AlgorithmSpec::Bkpsvr { .. } => "bkpsvr",
            AlgorithmSpec::Ekpsvr => "ekpsvr",
            AlgorithmSpec::Norma => "norma",
            AlgorithmSpec::Bsgd => "bsgd",
        }
    }

    /// Parses a CLI algorithm name; the budgeted rule takes its bound from
    /// `budget`.
    pub fn parse(name: &str, budget: usize) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "kpsvr" => Ok(AlgorithmSpec::Kpsvr),
            "bkpsvr" => {
                Budget::new(budget)?;
                Ok(AlgorithmSpec::Bkpsvr { budget })
            }
            "ekpsvr" => Ok(AlgorithmSpec::Ekpsvr),
            "norma" => Ok(AlgorithmSpec::Norma),
            "bsgd" => Ok(AlgorithmSpec::Bsgd),
            other => Err(Error::InvalidParameter {
                name: "algo",
                reason: format!(
                    "unknown algorithm `{other}` (expected kpsvr|bkpsvr|ekpsvr|norma|bsgd)"
                ),
            }),
        }
    }

    fn uses_selection(&self) -> bool {
        matches!(self, AlgorithmSpec::Ekpsvr | AlgorithmSpec::Norma | AlgorithmSpec::Bsgd)
    }

    /// The learning-rate schedule implied by the algorithm and hypers.
    pub fn schedule(&self, hyper: &IvsHyperParams) -> Result<Schedule> {
        match self {
            AlgorithmSpec::Kpsvr | AlgorithmSpec::Bkpsvr { .. } | AlgorithmSpec::Ekpsvr => {
                Schedule::pegasos(hyper.lambda, hyper.omega)
            }
            AlgorithmSpec::Norma => Schedule::norma(DEFAULT_NORMA_P, hyper.lambda),
            AlgorithmSpec::Bsgd => Schedule::bsgd(DEFAULT_BSGD_ETA, DEFAULT_BSGD_LAMBDA),
        }
    }
}

/// Full configuration of one online replay.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub hyper: IvsHyperParams,
    pub algorithm: AlgorithmSpec,
    pub pricing: PricingModel,
    pub solver: IvSolverConfig,
    pub interval_seconds: u64,
    /// Leading training time with no emitted records; rounded up to whole
    /// intervals.
    pub warmup_seconds: u64,
    /// Reference underlying price: anchors feature scaling and the grid.
    pub f_ref: f64,
    pub scale_features: bool,
    pub moneyness_lo: f64,
    pub moneyness_hi: f64,
    pub grid: GridSpec,
    pub plan: BatchPlan,
}

impl RunConfig {
    /// Defaults around a reference price: 40 strikes across the
    /// [0.95, 1.05] moneyness band, five maturities, one-minute intervals,
    /// one-hour warmup.
    pub fn new(algorithm: AlgorithmSpec, f_ref: f64) -> Result<Self> {
        let grid = GridSpec::moneyness_band(
            f_ref,
            40,
            DEFAULT_MONEYNESS_LO,
            DEFAULT_MONEYNESS_HI,
            default_maturities(),
        )?;
        Ok(RunConfig {
            hyper: IvsHyperParams::default(),
            algorithm,
            pricing: PricingModel::default(),
            solver: IvSolverConfig::default(),
            interval_seconds: DEFAULT_INTERVAL_SECONDS,
            warmup_seconds: DEFAULT_WARMUP_SECONDS,
            f_ref,
            scale_features: true,
            moneyness_lo: DEFAULT_MONEYNESS_LO,
            moneyness_hi: DEFAULT_MONEYNESS_HI,
            grid,
            plan: BatchPlan::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.algorithm.schedule(&self.hyper)?;
        if let AlgorithmSpec::Bkpsvr { budget } = self.algorithm {
            Budget::new(budget)?;
        }
        if self.interval_seconds == 0 {
            return Err(Error::InvalidParameter {
                name: "interval_seconds",
                reason: "must be at least 1".to_string(),
            });
        }
        if !(self.f_ref > 0.0) || !self.f_ref.is_finite() {
            return Err(Error::InvalidParameter {
                name: "f_ref",
                reason: format!("must be a positive finite real, got {}", self.f_ref),
            });
        }
        if !(self.moneyness_lo > 0.0) || !(self.moneyness_hi > self.moneyness_lo) {
            return Err(Error::InvalidParameter {
                name: "moneyness",
                reason: format!(
                    "need 0 < lo < hi, got lo={}, hi={}",
                    self.moneyness_lo, self.moneyness_hi
                ),
            });
        }
        Ok(())
    }

    fn interval_us(&self) -> i64 {
        self.interval_seconds as i64 * 1_000_000
    }

    fn warmup_intervals(&self) -> u64 {
        self.warmup_seconds.div_ceil(self.interval_seconds)
    }
}

/// Per-side error metrics of one interval. `mape`/`rmse` are 0 when the
/// interval held no observations for the side (check `observations`).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SideIntervalMetrics {
    pub observations: usize,
    /// Mean absolute percentage error of pre-update tick predictions.
    pub mape: f64,
    /// Root-mean-square error in IV percentage points.
    pub rmse: f64,
    /// Dictionary size at the interval boundary.
    pub sv_count: usize,
}

/// Everything emitted at one interval boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalRecord {
    /// 0-based index among emitted (post-warmup) intervals.
    pub index: usize,
    pub end_timestamp_us: i64,
    pub sides: [SideIntervalMetrics; 4],
    /// Ticks whose implied volatility could not be solved this interval.
    pub skipped_iv: usize,
    /// Ticks outside the moneyness band this interval.
    pub filtered_moneyness: usize,
    /// Predicted surfaces (one per model side); absent when a persisted
    /// file was written without grid dumps.
    pub grids: Option<[IvsGrid; 4]>,
}

/// Pooled post-warmup metrics for one side over a whole run.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SideSummary {
    pub observations: u64,
    pub mape: f64,
    pub rmse: f64,
    pub final_sv_count: usize,
}

/// Whole-run diagnostics. Tick counters cover the entire stream (warmup
/// included); per-side error metrics pool post-warmup intervals only.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSummary {
    pub intervals: usize,
    pub ticks_seen: u64,
    pub processed: u64,
    pub skipped_iv: u64,
    pub filtered_moneyness: u64,
    pub sides: [SideSummary; 4],
}

/// A finished replay: every emitted interval plus the run summary.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub records: Vec<IntervalRecord>,
    pub summary: RunSummary,
}

#[derive(Clone, Copy, Debug, Default)]
struct ErrAcc {
    n: u64,
    abs_pct_sum: f64,
    sq_sum: f64,
}

impl ErrAcc {
    fn push(&mut self, pred: f64, actual: f64) {
        self.n += 1;
        self.abs_pct_sum += (pred - actual).abs() / actual.abs();
        self.sq_sum += (pred - actual) * (pred - actual);
    }

    fn mape(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            100.0 * self.abs_pct_sum / self.n as f64
        }
    }

    fn rmse(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            100.0 * (self.sq_sum / self.n as f64).sqrt()
        }
    }

    fn merge(&mut self, other: &ErrAcc) {
        self.n += other.n;
        self.abs_pct_sum += other.abs_pct_sum;
        self.sq_sum += other.sq_sum;
    }
}

struct LearnerState {
    dict: SupportVectorDictionary,
    selection: Option<FvsState>,
    t: u64,
}

/// Streaming driver: feed time-ordered ticks, collect interval records.
pub struct OnlineRunner {
    config: RunConfig,
    curve: YieldCurve,
    schedule: Schedule,
    tube: EpsilonTube,
    ekpsvr: Option<EkpsvrParams>,
    learners: [LearnerState; 4],
    first_ts: Option<i64>,
    prev_ts: i64,
    position: u64,
    interval_idx: u64,
    acc: [ErrAcc; 4],
    skipped_iv_interval: usize,
    filtered_interval: usize,
    totals: RunSummary,
    side_totals: [ErrAcc; 4],
    records: Vec<IntervalRecord>,
}

impl OnlineRunner {
    pub fn new(config: RunConfig, curve: YieldCurve) -> Result<Self> {
        config.validate()?;
        let schedule = config.algorithm.schedule(&config.hyper)?;
        let tube = EpsilonTube::new(config.hyper.epsilon)?;
        let ekpsvr = if config.algorithm.uses_selection() {
            Some(EkpsvrParams::new(config.hyper.rho)?)
        } else {
            None
        };
        let learners = std::array::from_fn(|_| LearnerState {
            dict: SupportVectorDictionary::new(),
            selection: config
                .algorithm
                .uses_selection()
                .then(|| FvsState::new(config.hyper.kernel.clone())),
            t: 1,
        });
        Ok(OnlineRunner {
            config,
            curve,
            schedule,
            tube,
            ekpsvr,
            learners,
            first_ts: None,
            prev_ts: i64::MIN,
            position: 0,
            interval_idx: 0,
            acc: Default::default(),
            skipped_iv_interval: 0,
            filtered_interval: 0,
            totals: RunSummary::default(),
            side_totals: Default::default(),
            records: Vec::new(),
        })
    }

    /// Step counter of one side's learner (1-based; resets each interval).
    pub fn learner_t(&self, side: usize) -> u64 {
        self.learners[side].t
    }

    /// Current dictionary size of one side's learner.
    pub fn sv_count(&self, side: usize) -> usize {
        self.learners[side].dict.len()
    }

    /// Read access to one side's dictionary, e.g. for snapshotting a
    /// trained model after a replay.
    pub fn dictionary(&self, side: usize) -> &SupportVectorDictionary {
        &self.learners[side].dict
    }

    /// Records emitted so far.
    pub fn records(&self) -> &[IntervalRecord] {
        &self.records
    }

    /// Processes one tick, first closing any interval boundaries it
    /// crosses (each closure appends a record once warmup has elapsed).
    pub fn push_tick(&mut self, tick: &OptionTick) -> Result<()> {
        self.position += 1;
        self.totals.ticks_seen += 1;
        tick.validate()?;
        if self.first_ts.is_some() && tick.timestamp_us < self.prev_ts {
            return Err(Error::StreamOrder {
                position: self.position,
                prev_us: self.prev_ts,
                ts_us: tick.timestamp_us,
            });
        }
        if self.first_ts.is_none() {
            self.first_ts = Some(tick.timestamp_us);
        }
        self.prev_ts = tick.timestamp_us;

        while tick.timestamp_us >= self.next_boundary_us() {
            self.close_interval()?;
        }

        let m = tick.moneyness();
        if m < self.config.moneyness_lo || m > self.config.moneyness_hi {
            self.filtered_interval += 1;
            self.totals.filtered_moneyness += 1;
            return Ok(());
        }

        let obs = match tick_observation(
            tick,
            &self.curve,
            self.config.pricing,
            &self.config.solver,
            self.config.f_ref,
            self.config.scale_features,
        ) {
            Ok(obs) => obs,
            Err(e) if is_skippable_iv_error(&e) => {
                self.skipped_iv_interval += 1;
                self.totals.skipped_iv += 1;
                return Ok(());
            }
            Err(e) => return Err(e),
        };

        let side = tick.model_side().index();
        let fhat = {
            let learner = &self.learners[side];
            learner.dict.predict(&self.config.hyper.kernel, &obs.features)?
        };
        self.acc[side].push(fhat, obs.target_iv);
        self.apply_update(side, &obs)?;
        self.learners[side].t += 1;
        self.totals.processed += 1;
        Ok(())
    }

    fn apply_update(&mut self, side: usize, obs: &Observation) -> Result<()> {
        let kernel = self.config.hyper.kernel.clone();
        let learner = &mut self.learners[side];
        match self.config.algorithm {
            AlgorithmSpec::Kpsvr => {
                update_kpsvr(
                    &mut learner.dict,
                    &kernel,
                    &self.schedule,
                    self.tube,
                    learner.t,
                    &obs.features,
                    obs.target_iv,
                )?;
            }
            AlgorithmSpec::Bkpsvr { budget } => {
                crate::svr::update_bkpsvr(
                    &mut learner.dict,
                    &kernel,
                    &self.schedule,
                    self.tube,
                    Budget::new(budget)?,
                    learner.t,
                    &obs.features,
                    obs.target_iv,
                )?;
            }
            AlgorithmSpec::Ekpsvr | AlgorithmSpec::Norma | AlgorithmSpec::Bsgd => {
                let params = self.ekpsvr.as_ref().expect("selection params initialized");
                let selection = learner.selection.as_mut().expect("selection state initialized");
                update_ekpsvr(
                    &mut learner.dict,
                    selection,
                    &kernel,
                    &self.schedule,
                    self.tube,
                    params,
                    learner.t,
                    &obs.features,
                    obs.target_iv,
                )?;
            }
        }
        Ok(())
    }

    fn next_boundary_us(&self) -> i64 {
        match self.first_ts {
            Some(first) => first + (self.interval_idx as i64 + 1) * self.config.interval_us(),
            None => i64::MAX,
        }
    }

    /// Closes the current interval: emit a record (post-warmup), fold the
    /// interval error sums into the run totals, reset accumulators, and
    /// reset every learner's step counter to 1.
    fn close_interval(&mut self) -> Result<()> {
        let end_ts = self.next_boundary_us();
        let past_warmup = self.interval_idx >= self.config.warmup_intervals();
        if past_warmup {
            let grids = self.predict_all_grids()?;
            let sides = std::array::from_fn(|i| SideIntervalMetrics {
                observations: self.acc[i].n as usize,
                mape: self.acc[i].mape(),
                rmse: self.acc[i].rmse(),
                sv_count: self.learners[i].dict.len(),
            });
            for i in 0..4 {
                self.side_totals[i].merge(&self.acc[i]);
            }
            self.records.push(IntervalRecord {
                index: self.records.len(),
                end_timestamp_us: end_ts,
                sides,
                skipped_iv: self.skipped_iv_interval,
                filtered_moneyness: self.filtered_interval,
                grids: Some(grids),
            });
        }
        self.acc = Default::default();
        self.skipped_iv_interval = 0;
        self.filtered_interval = 0;
        for learner in &mut self.learners {
            learner.t = 1;
        }
        self.interval_idx += 1;
        Ok(())
    }

    fn predict_all_grids(&self) -> Result<[IvsGrid; 4]> {
        let mut grids = Vec::with_capacity(4);
        for learner in &self.learners {
            grids.push(predict_grid(
                &learner.dict,
                &self.config.hyper.kernel,
                &self.config.grid,
                self.config.f_ref,
                self.config.scale_features,
                &self.config.plan,
            )?);
        }
        Ok(grids.try_into().expect("exactly four sides"))
    }

    /// Flushes the in-progress partial interval (if the stream ever
    /// started) and returns all records plus the run summary.
    pub fn finish(mut self) -> Result<RunResult> {
        if self.first_ts.is_some() {
            self.close_interval()?;
        }
        let mut summary = self.totals.clone();
        summary.intervals = self.records.len();
        for i in 0..4 {
            summary.sides[i] = SideSummary {
                observations: self.side_totals[i].n,
                mape: self.side_totals[i].mape(),
                rmse: self.side_totals[i].rmse(),
                final_sv_count: self.learners[i].dict.len(),
            };
        }
        Ok(RunResult { records: self.records, summary })
    }
}

/// True for solver outcomes that mark one unusable quote rather than a
/// broken replay; the pipeline skips and tallies these.
fn is_skippable_iv_error(e: &Error) -> bool {
    matches!(
        e,
        Error::IvOutOfBounds { .. }
            | Error::IvOutOfBracket { .. }
            | Error::IvNoConvergence { .. }
            | Error::InvalidParameter { name: "target_iv", .. }
    )
}

/// Converts one tick into a regression sample: interpolate the rate,
/// invert the implied volatility, build the quadratic-surface features.
pub fn tick_observation(
    tick: &OptionTick,
    curve: &YieldCurve,
    pricing: PricingModel,
    solver: &IvSolverConfig,
    f_ref: f64,
    scale: bool,
) -> Result<Observation> {
    tick.validate()?;
    let r = curve.interpolate_rate(tick.maturity_years);
    let iv = implied_vol(
        pricing,
        tick.side,
        tick.underlying,
        tick.strike,
        tick.maturity_years,
        r,
        tick.price,
        solver,
    )?;
    let features = feature_vector(tick.strike, tick.maturity_years, f_ref, scale);
    Observation::new(features, iv)
}

/// Predicts a full surface grid from one dictionary via the batched
/// backend: kernel rows are built per grid point and reduced with the
/// plan's summation mode.
pub fn predict_grid(
    dict: &SupportVectorDictionary,
    kernel: &KernelSpec,
    grid: &GridSpec,
    f_ref: f64,
    scale: bool,
    plan: &BatchPlan,
) -> Result<IvsGrid> {
    let n = dict.len();
    let m = grid.n_points();
    let coeffs: Vec<f64> = (0..n).map(|j| dict.coeff(j)).collect();
    let mut rows = Matrix::zeros(m, n);
    for (i, (kappa, tau)) in grid.points().enumerate() {
        let x = feature_vector(kappa, tau, f_ref, scale);
        let row = rows.row_mut(i);
        for j in 0..n {
            row[j] = kernel.evaluate(dict.vector(j), &x)?;
        }
    }
    let values = batch_predict(&coeffs, &rows, dict.intercept(), plan)?;
    IvsGrid::new(grid.strikes().len(), grid.maturities().len(), values)
}

/// Replays a whole tick stream through [`OnlineRunner`].
pub fn run_online<I>(ticks: I, curve: &YieldCurve, config: &RunConfig) -> Result<RunResult>
where
    I: IntoIterator<Item = OptionTick>,
{
    let mut runner = OnlineRunner::new(config.clone(), curve.clone())?;
    for tick in ticks {
        runner.push_tick(&tick)?;
    }
    runner.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ivs::pricing::bsm_price;
    use crate::ivs::{OptionSide, QuoteSide};
    use crate::kernel::FeatureVector;

    fn mini_config(algorithm: AlgorithmSpec) -> RunConfig {
        let mut cfg = RunConfig::new(algorithm, 100.0).unwrap();
        cfg.warmup_seconds = 0;
        cfg.grid =
            GridSpec::moneyness_band(100.0, 6, 0.95, 1.05, vec![0.1, 0.25]).unwrap();
        cfg
    }

    fn tick_at(ts_us: i64, side: OptionSide, quote: QuoteSide, strike: f64, iv: f64) -> OptionTick {
        let price = bsm_price(PricingModel::Black76, side, 100.0, strike, 0.25, 0.02, iv);
        OptionTick {
            timestamp_us: ts_us,
            side,
            quote,
            strike,
            maturity_years: 0.25,
            price,
            underlying: 100.0,
        }
    }

    #[test]
    fn empty_stream_emits_nothing() {
        let cfg = mini_config(AlgorithmSpec::Ekpsvr);
        let result = run_online(Vec::new(), &YieldCurve::flat(0.02), &cfg).unwrap();
        assert!(result.records.is_empty());
        assert_eq!(result.summary.intervals, 0);
        assert_eq!(result.summary.ticks_seen, 0);
    }

    #[test]
    fn one_valid_tick_per_side_gives_unit_dictionaries() {
        let cfg = mini_config(AlgorithmSpec::Ekpsvr);
        let ticks = vec![
            tick_at(0, OptionSide::Call, QuoteSide::Bid, 100.0, 0.15),
            tick_at(1_000, OptionSide::Call, QuoteSide::Ask, 100.0, 0.16),
            tick_at(2_000, OptionSide::Put, QuoteSide::Bid, 101.0, 0.15),
            tick_at(3_000, OptionSide::Put, QuoteSide::Ask, 101.0, 0.16),
        ];
        let result = run_online(ticks, &YieldCurve::flat(0.02), &cfg).unwrap();
        assert_eq!(result.records.len(), 1);
        let rec = &result.records[0];
        for side in 0..4 {
            assert_eq!(rec.sides[side].sv_count, 1, "side {side}");
            assert_eq!(rec.sides[side].observations, 1);
        }
        assert!(rec.grids.is_some());
        for g in rec.grids.as_ref().unwrap() {
            assert_eq!(g.values().len(), 12);
            assert!(g.values().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn step_counter_resets_at_each_boundary() {
        let cfg = mini_config(AlgorithmSpec::Kpsvr);
        let mut runner = OnlineRunner::new(cfg, YieldCurve::flat(0.02)).unwrap();
        // Three call-bid ticks inside interval 0.
        for i in 0..3 {
            runner
                .push_tick(&tick_at(i * 1_000_000, OptionSide::Call, QuoteSide::Bid, 100.0, 0.15))
                .unwrap();
        }
        assert_eq!(runner.learner_t(0), 4);
        // Next tick lands in interval 1: the boundary resets every t.
        runner
            .push_tick(&tick_at(61_000_000, OptionSide::Call, QuoteSide::Bid, 100.0, 0.15))
            .unwrap();
        assert_eq!(runner.learner_t(0), 2, "reset to 1, then one update");
        assert_eq!(runner.learner_t(1), 1, "idle side stays at the reset value");
        assert_eq!(runner.records().len(), 1);
    }

    #[test]
    fn out_of_order_timestamps_error() {
        let cfg = mini_config(AlgorithmSpec::Kpsvr);
        let mut runner = OnlineRunner::new(cfg, YieldCurve::flat(0.02)).unwrap();
        runner
            .push_tick(&tick_at(5_000_000, OptionSide::Call, QuoteSide::Bid, 100.0, 0.15))
            .unwrap();
        let err = runner
            .push_tick(&tick_at(4_000_000, OptionSide::Call, QuoteSide::Bid, 100.0, 0.15))
            .unwrap_err();
        assert!(matches!(err, Error::StreamOrder { position: 2, .. }));
    }

    #[test]
    fn moneyness_filter_and_bad_prices_are_tallied() {
        let cfg = mini_config(AlgorithmSpec::Ekpsvr);
        let mut runner = OnlineRunner::new(cfg, YieldCurve::flat(0.02)).unwrap();
        // Far out of the band.
        let far = tick_at(0, OptionSide::Call, QuoteSide::Bid, 120.0, 0.15);
        runner.push_tick(&far).unwrap();
        // In band, but priced at discounted intrinsic (unsolvable).
        let mut dead = tick_at(1_000, OptionSide::Call, QuoteSide::Bid, 96.0, 0.15);
        dead.price = (-0.02_f64 * 0.25).exp() * 4.0;
        runner.push_tick(&dead).unwrap();
        let result = runner.finish().unwrap();
        assert_eq!(result.summary.filtered_moneyness, 1);
        assert_eq!(result.summary.skipped_iv, 1);
        assert_eq!(result.summary.processed, 0);
        let rec = &result.records[0];
        assert_eq!(rec.filtered_moneyness, 1);
        assert_eq!(rec.skipped_iv, 1);
    }

    #[test]
    fn warmup_consumes_whole_intervals() {
        let mut cfg = mini_config(AlgorithmSpec::Ekpsvr);
        cfg.warmup_seconds = 90; // rounds up to two 60 s intervals
        let mut runner = OnlineRunner::new(cfg, YieldCurve::flat(0.02)).unwrap();
        for i in 0..4 {
            runner
                .push_tick(&tick_at(
                    i * 60_000_000 + 1_000,
                    OptionSide::Call,
                    QuoteSide::Bid,
                    100.0,
                    0.15,
                ))
                .unwrap();
        }
        let result = runner.finish().unwrap();
        // Intervals 0 and 1 are warmup; 2 and 3 emit (3 is the flush).
        assert_eq!(result.records.len(), 2);
        assert_eq!(result.records[0].index, 0);
        assert_eq!(result.records[0].end_timestamp_us, 1_000 + 3 * 60_000_000);
    }

    #[test]
    fn empty_gap_intervals_are_emitted_with_frozen_model() {
        let cfg = mini_config(AlgorithmSpec::Ekpsvr);
        let mut runner = OnlineRunner::new(cfg, YieldCurve::flat(0.02)).unwrap();
        runner.push_tick(&tick_at(0, OptionSide::Call, QuoteSide::Bid, 100.0, 0.15)).unwrap();
        // Jump three intervals ahead.
        runner
            .push_tick(&tick_at(185_000_000, OptionSide::Call, QuoteSide::Bid, 100.0, 0.15))
            .unwrap();
        let result = runner.finish().unwrap();
        assert_eq!(result.records.len(), 4);
        assert_eq!(result.records[1].sides[0].observations, 0);
        assert_eq!(result.records[1].sides[0].mape, 0.0);
        // The frozen model still predicts the grid in empty intervals.
        assert!(result.records[1].grids.is_some());
        assert_eq!(result.records[1].sides[0].sv_count, 1);
    }

    #[test]
    fn predict_grid_of_empty_learner_is_intercept() {
        let mut dict = SupportVectorDictionary::new();
        dict.set_intercept(0.14);
        let grid = GridSpec::moneyness_band(100.0, 4, 0.95, 1.05, vec![0.1]).unwrap();
        let kernel = KernelSpec::gaussian(0.25).unwrap();
        let g =
            predict_grid(&dict, &kernel, &grid, 100.0, true, &BatchPlan::default()).unwrap();
        assert_eq!(g.values(), &[0.14; 4]);
    }

    #[test]
    fn predict_grid_hits_stored_vector_exactly() {
        let grid = GridSpec::moneyness_band(100.0, 4, 0.95, 1.05, vec![0.1]).unwrap();
        let kernel = KernelSpec::gaussian(0.25).unwrap();
        let mut dict = SupportVectorDictionary::new();
        // Key the first grid point (strike 95, τ 0.1).
        let x = feature_vector(grid.strikes()[0], 0.1, 100.0, true);
        dict.insert(x, 0.2).unwrap();
        dict.set_intercept(0.01);
        let g = predict_grid(&dict, &kernel, &grid, 100.0, true, &BatchPlan::default()).unwrap();
        assert!((g.at(0, 0) - 0.21).abs() < 1e-15);
    }

    #[test]
    fn predict_grid_matches_serial_predict() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(97);
        use rand::Rng;
        let grid = GridSpec::moneyness_band(100.0, 8, 0.95, 1.05, vec![0.1, 0.2, 0.3]).unwrap();
        let kernel = KernelSpec::gaussian(0.25).unwrap();
        let mut dict = SupportVectorDictionary::new();
        for _ in 0..100 {
            let x = FeatureVector::new(vec![
                rng.random_range(0.9..1.1),
                rng.random_range(0.8..1.2),
                rng.random_range(0.05..0.5),
                rng.random_range(0.05..0.6),
            ]);
            if dict.find(&x).is_none() {
                dict.insert(x, rng.random_range(-0.2..0.2)).unwrap();
            }
        }
        dict.set_intercept(0.03);
        for workers in [1, 4] {
            let plan = BatchPlan { worker_count: workers, ..BatchPlan::default() };
            let g = predict_grid(&dict, &kernel, &grid, 100.0, true, &plan).unwrap();
            for (i, (kappa, tau)) in grid.points().enumerate() {
                let x = feature_vector(kappa, tau, 100.0, true);
                let want = dict.predict(&kernel, &x).unwrap();
                assert!((g.values()[i] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn algorithm_spec_parses_names() {
        assert_eq!(AlgorithmSpec::parse("EKPSVR", 50).unwrap(), AlgorithmSpec::Ekpsvr);
        assert_eq!(
            AlgorithmSpec::parse("bkpsvr", 50).unwrap(),
            AlgorithmSpec::Bkpsvr { budget: 50 }
        );
        assert!(AlgorithmSpec::parse("mystery", 50).is_err());
        assert!(AlgorithmSpec::parse("bkpsvr", 0).is_err());
    }

    #[test]
    fn hyper_defaults_match_documented_values() {
        let h = IvsHyperParams::default();
        assert_eq!(h.rho, 0.3);
        assert_eq!(h.lambda, 0.75);
        assert_eq!(h.omega, 7);
        assert_eq!(h.epsilon, 0.01);
        assert_eq!(h.kernel, KernelSpec::Gaussian { gamma: 0.25 });
        h.validate().unwrap();
    }
}
