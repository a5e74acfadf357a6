//! Evaluation and comparison utilities: error metrics, grid edge
//! trimming, Welch's unequal-variance t-test, multi-algorithm comparison
//! tables, and single-parameter sensitivity sweeps over replayed streams.

use std::fmt;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::ivs::online::{run_online, AlgorithmSpec, RunConfig, RunResult, RunSummary};
use crate::ivs::{ModelSide, OptionTick, YieldCurve};
use crate::kernel::KernelSpec;

/// Strikes dropped from each end of the strike axis before error metrics,
/// so boundary extrapolation does not dominate surface comparisons.
pub const DEFAULT_EDGE_EXCLUSION: usize = 10;

/// Mean absolute percentage error (in percent) alongside how many pairs
/// were skipped because the actual value was exactly zero.
pub fn mape_counting(predicted: &[f64], actual: &[f64]) -> Result<(f64, usize)> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch(predicted.len(), actual.len()));
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    for (p, a) in predicted.iter().zip(actual) {
        if *a == 0.0 {
            continue;
        }
        sum += ((p - a) / a).abs();
        used += 1;
    }
    if used == 0 {
        return Err(Error::InsufficientSamples { need: 1, got: 0 });
    }
    Ok((100.0 * sum / used as f64, predicted.len() - used))
}

/// Mean absolute percentage error in percent, zero actuals skipped.
pub fn mape(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    mape_counting(predicted, actual).map(|(value, _)| value)
}

/// Root-mean-square error scaled by 100 (volatility points).
pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch(predicted.len(), actual.len()));
    }
    if predicted.is_empty() {
        return Err(Error::InsufficientSamples { need: 1, got: 0 });
    }
    let sq: f64 = predicted.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok(100.0 * (sq / predicted.len() as f64).sqrt())
}

/// Drops `exclusion` strikes from each end of a strike-major grid,
/// keeping every maturity of the central strikes.
pub fn edge_filter(
    values: &[f64],
    n_strikes: usize,
    n_maturities: usize,
    exclusion: usize,
) -> Result<Vec<f64>> {
    if values.len() != n_strikes * n_maturities {
        return Err(Error::DimensionMismatch(values.len(), n_strikes * n_maturities));
    }
    if 2 * exclusion >= n_strikes {
        return Err(Error::InvalidParameter {
            name: "exclusion",
            reason: format!(
                "removing {exclusion} strikes from each end of {n_strikes} leaves nothing"
            ),
        });
    }
    let mut kept = Vec::with_capacity((n_strikes - 2 * exclusion) * n_maturities);
    for i in exclusion..n_strikes - exclusion {
        kept.extend_from_slice(&values[i * n_maturities..(i + 1) * n_maturities]);
    }
    Ok(kept)
}

/// Welch's t-test of equal means under unequal variances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WelchResult {
    pub t: f64,
    /// Welch–Satterthwaite degrees of freedom.
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
}

fn mean_and_var(sample: &[f64]) -> (f64, f64) {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let var = sample.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-sided Welch t-test. Each sample needs at least two points. When
/// both samples have zero variance the test degenerates: equal means give
/// `t = 0, p = 1`, distinct means give `t = ±∞, p = 0`, and the pooled
/// `nₐ + n_b − 2` stands in for the undefined degrees of freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    for sample in [a, b] {
        if sample.len() < 2 {
            return Err(Error::InsufficientSamples { need: 2, got: sample.len() });
        }
    }
    let (mean_a, var_a) = mean_and_var(a);
    let (mean_b, var_b) = mean_and_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sa = var_a / na;
    let sb = var_b / nb;
    if sa + sb == 0.0 {
        let df = na + nb - 2.0;
        return Ok(if mean_a == mean_b {
            WelchResult { t: 0.0, df, p: 1.0 }
        } else {
            WelchResult {
                t: if mean_a > mean_b { f64::INFINITY } else { f64::NEG_INFINITY },
                df,
                p: 0.0,
            }
        });
    }
    let t = (mean_a - mean_b) / (sa + sb).sqrt();
    let df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidParameter {
        name: "df",
        reason: e.to_string(),
    })?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(WelchResult { t, df, p })
}

/// Observation-weighted MAPE pooled across the four model sides.
pub fn pooled_mape(summary: &RunSummary) -> f64 {
    let total: u64 = summary.sides.iter().map(|s| s.observations).sum();
    if total == 0 {
        return 0.0;
    }
    summary.sides.iter().map(|s| s.observations as f64 * s.mape).sum::<f64>() / total as f64
}

/// Observation-weighted RMSE pooled across the four model sides.
pub fn pooled_rmse(summary: &RunSummary) -> f64 {
    let total: u64 = summary.sides.iter().map(|s| s.observations).sum();
    if total == 0 {
        return 0.0;
    }
    let sq = summary
        .sides
        .iter()
        .map(|s| s.observations as f64 * s.rmse * s.rmse)
        .sum::<f64>()
        / total as f64;
    sq.sqrt()
}

/// Mean dictionary size over a run: per emitted interval, the four sides'
/// counts are averaged, then the intervals are averaged.
pub fn average_sv_count(result: &RunResult) -> f64 {
    if result.records.is_empty() {
        return 0.0;
    }
    let per_interval: f64 = result
        .records
        .iter()
        .map(|r| r.sides.iter().map(|s| s.sv_count as f64).sum::<f64>() / 4.0)
        .sum();
    per_interval / result.records.len() as f64
}

/// One algorithm's pooled run outcome in a comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub algo: String,
    pub summary: RunSummary,
}

/// Per-algorithm × per-side accuracy table over one tick stream.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn new(rows: Vec<ComparisonRow>) -> Self {
        ComparisonTable { rows }
    }

    pub fn rows(&self) -> &[ComparisonRow] {
        &self.rows
    }

    pub fn row(&self, algo: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.algo == algo)
    }

    /// Long-form CSV: one line per algorithm and side, plus a pooled
    /// `overall` line per algorithm.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("algo,side,observations,mape,rmse,final_sv_count\n");
        for row in &self.rows {
            for side in ModelSide::ALL {
                let s = &row.summary.sides[side.index()];
                out.push_str(&format!(
                    "{},{},{},{:.6},{:.6},{}\n",
                    row.algo,
                    side.label(),
                    s.observations,
                    s.mape,
                    s.rmse,
                    s.final_sv_count
                ));
            }
            let total_obs: u64 = row.summary.sides.iter().map(|s| s.observations).sum();
            let total_sv: usize =
                row.summary.sides.iter().map(|s| s.final_sv_count).sum();
            out.push_str(&format!(
                "{},overall,{},{:.6},{:.6},{}\n",
                row.algo,
                total_obs,
                pooled_mape(&row.summary),
                pooled_rmse(&row.summary),
                total_sv
            ));
        }
        out
    }
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<10} {:<9} {:>10} {:>10} {:>10} {:>6}",
            "algo", "side", "obs", "mape%", "rmse", "sv"
        )?;
        for row in &self.rows {
            for side in ModelSide::ALL {
                let s = &row.summary.sides[side.index()];
                writeln!(
                    f,
                    "{:<10} {:<9} {:>10} {:>10.4} {:>10.4} {:>6}",
                    row.algo,
                    side.label(),
                    s.observations,
                    s.mape,
                    s.rmse,
                    s.final_sv_count
                )?;
            }
            let total_obs: u64 = row.summary.sides.iter().map(|s| s.observations).sum();
            let total_sv: usize =
                row.summary.sides.iter().map(|s| s.final_sv_count).sum();
            writeln!(
                f,
                "{:<10} {:<9} {:>10} {:>10.4} {:>10.4} {:>6}",
                row.algo,
                "overall",
                total_obs,
                pooled_mape(&row.summary),
                pooled_rmse(&row.summary),
                total_sv
            )?;
        }
        Ok(())
    }
}

/// Replays the same stream once per algorithm and tabulates the pooled
/// post-warmup accuracy of each.
pub fn compare_run(
    ticks: &[OptionTick],
    curve: &YieldCurve,
    base: &RunConfig,
    algos: &[AlgorithmSpec],
) -> Result<ComparisonTable> {
    let mut rows = Vec::with_capacity(algos.len());
    for algo in algos {
        let mut config = base.clone();
        config.algorithm = *algo;
        let result = run_online(ticks.iter().copied(), curve, &config)?;
        rows.push(ComparisonRow { algo: algo.label().to_string(), summary: result.summary });
    }
    Ok(ComparisonTable { rows })
}

/// Which hyper-parameter a sensitivity sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    /// Gaussian kernel width.
    Gamma,
    /// Novelty threshold of the selection rule.
    Rho,
    /// Schedule offset.
    Omega,
    /// Regularization strength.
    Lambda,
}

impl SweepParam {
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "gamma" => Some(SweepParam::Gamma),
            "rho" => Some(SweepParam::Rho),
            "omega" => Some(SweepParam::Omega),
            "lambda" => Some(SweepParam::Lambda),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SweepParam::Gamma => "gamma",
            SweepParam::Rho => "rho",
            SweepParam::Omega => "omega",
            SweepParam::Lambda => "lambda",
        }
    }

    /// Sets the parameter on the replay configuration; a rejected value
    /// leaves the configuration untouched.
    fn apply(&self, config: &mut RunConfig, value: f64) -> Result<()> {
        let mut candidate = config.clone();
        match self {
            SweepParam::Gamma => candidate.hyper.kernel = KernelSpec::gaussian(value)?,
            SweepParam::Rho => candidate.hyper.rho = value,
            SweepParam::Lambda => candidate.hyper.lambda = value,
            SweepParam::Omega => {
                if !(value >= 0.0) || value.fract() != 0.0 || value > u64::MAX as f64 {
                    return Err(Error::InvalidParameter {
                        name: "omega",
                        reason: format!("must be a nonnegative integer, got {value}"),
                    });
                }
                candidate.hyper.omega = value as u64;
            }
        }
        candidate.validate()?;
        *config = candidate;
        Ok(())
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One sweep point: the parameter value, the mean dictionary size over
/// the run, and the pooled post-warmup MAPE.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub avg_sv_count: f64,
    pub avg_mape: f64,
}

/// Sensitivity of model size and accuracy to one hyper-parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub param: SweepParam,
    rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn rows(&self) -> &[SweepRow] {
        &self.rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("value,avg_sv_count,avg_mape\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{:.6},{:.6}\n",
                row.value, row.avg_sv_count, row.avg_mape
            ));
        }
        out
    }
}

impl fmt::Display for SweepReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>14} {:>10}", self.param.label(), "avg_sv_count", "avg_mape")?;
        for row in &self.rows {
            writeln!(f, "{:<12} {:>14.4} {:>10.4}", row.value, row.avg_sv_count, row.avg_mape)?;
        }
        Ok(())
    }
}

/// Replays the stream once per parameter value and records how dictionary
/// size and accuracy respond.
pub fn sensitivity_sweep(
    ticks: &[OptionTick],
    curve: &YieldCurve,
    base: &RunConfig,
    param: SweepParam,
    values: &[f64],
) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(Error::InvalidParameter {
            name: "values",
            reason: "sweep needs at least one parameter value".to_string(),
        });
    }
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut config = base.clone();
        param.apply(&mut config, value)?;
        let result = run_online(ticks.iter().copied(), curve, &config)?;
        rows.push(SweepRow {
            value,
            avg_sv_count: average_sv_count(&result),
            avg_mape: pooled_mape(&result.summary),
        });
    }
    Ok(SweepReport { param, rows })
}
