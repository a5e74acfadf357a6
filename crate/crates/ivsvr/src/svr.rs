//! Online primal kernel SVR: the support-vector dictionary, learning-rate
//! schedules, and the three update rules (plain, budgeted, selection-based).
//!
//! The regressor is `f(x) = Σ S[s]·k(s, x) + b`, a kernel expansion whose
//! signed coefficients accumulate stochastic subgradient steps of the
//! ε-insensitive loss. Every update first shrinks all coefficients by the
//! schedule's multiplier (the regularization pull toward zero — the
//! intercept is never shrunk), then applies a signed step when the sample
//! violates the ε tube:
//!
//! * **plain** ([`update_kpsvr`]) inserts every violating novel sample;
//! * **budgeted** ([`update_bkpsvr`]) additionally evicts the
//!   lowest-scoring key until the dictionary fits its budget;
//! * **selection-based** ([`update_ekpsvr`]) consults the local-fitness
//!   statistic: poorly spanned samples (*new patterns*) always enter, while
//!   well-spanned violators (*changed patterns*) replace the
//!   lowest-scoring key so the dictionary does not grow.
//!
//! A learner is single-writer: updates must be applied sequentially in
//! stream order. Prediction against a frozen snapshot is safe from any
//! number of threads.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fvs::FvsState;
use crate::kernel::{FeatureVector, KernelSpec};

/// Default regularization weight for the time-decaying schedule.
pub const DEFAULT_LAMBDA: f64 = 0.75;
/// Default warm-start offset: shifts the step clock so an interval reopen
/// does not wipe the coefficients (a zero offset makes the first shrink
/// multiplier exactly 0).
pub const DEFAULT_OMEGA: u64 = 7;
/// Default ε-tube half-width, in implied-volatility units.
pub const DEFAULT_EPSILON: f64 = 0.01;
/// Standard NORMA step scale: the large-horizon limit of the recommended
/// 0.5·√(2 + 0.5/√T).
pub const DEFAULT_NORMA_P: f64 = 0.71;
/// Default constant step for the BSGD-style schedule.
pub const DEFAULT_BSGD_ETA: f64 = 0.01;
/// Default regularization weight paired with the constant-step schedule.
pub const DEFAULT_BSGD_LAMBDA: f64 = 10.0;

/// Half-width of the ε-insensitive tube; residuals of magnitude ≤ ε incur
/// no step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonTube(f64);

impl EpsilonTube {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: format!("must be a nonnegative finite real, got {epsilon}"),
            });
        }
        Ok(EpsilonTube(epsilon))
    }

    pub fn half_width(&self) -> f64 {
        self.0
    }
}

/// Maximum dictionary size for the budgeted update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budget(usize);

impl Budget {
    pub fn new(b: usize) -> Result<Self> {
        if b == 0 {
            return Err(Error::InvalidParameter {
                name: "budget",
                reason: "must be at least 1".to_string(),
            });
        }
        Ok(Budget(b))
    }

    pub fn get(&self) -> usize {
        self.0
    }
}

/// Learning-rate schedule: a shrink multiplier applied to every coefficient
/// each step, plus the magnitude of the signed step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Schedule {
    /// Time-decaying rate `1/(λ(t+ω))` with shrink `1 − 1/(t+ω)`; the
    /// warm-start offset ω keeps the shrink away from 0 right after the
    /// step clock resets.
    Pegasos { lambda: f64, omega: u64 },
    /// NORMA rate `p/(λ√t)` with shrink `1 − p/√t`.
    Norma { p: f64, lambda: f64 },
    /// Constant rate η with shrink `1 − ηλ`.
    Bsgd { eta: f64, lambda: f64 },
}

impl Schedule {
    pub fn pegasos(lambda: f64, omega: u64) -> Result<Self> {
        check_positive("lambda", lambda)?;
        Ok(Schedule::Pegasos { lambda, omega })
    }

    pub fn norma(p: f64, lambda: f64) -> Result<Self> {
        check_positive("p", p)?;
        check_positive("lambda", lambda)?;
        Ok(Schedule::Norma { p, lambda })
    }

    pub fn bsgd(eta: f64, lambda: f64) -> Result<Self> {
        check_positive("eta", eta)?;
        check_positive("lambda", lambda)?;
        if eta * lambda >= 1.0 {
            return Err(Error::InvalidParameter {
                name: "eta",
                reason: format!("eta*lambda must be < 1 for a valid shrink, got {}", eta * lambda),
            });
        }
        Ok(Schedule::Bsgd { eta, lambda })
    }

    /// Multiplier applied to every coefficient at step `t ≥ 1`. Always in
    /// [0, 1) for valid parameters; a negative result (e.g. NORMA with
    /// p > √t) is a schedule-parameter error.
    pub fn shrink_multiplier(&self, t: u64) -> Result<f64> {
        let t = check_step(t)?;
        let m = match *self {
            Schedule::Pegasos { omega, .. } => 1.0 - 1.0 / (t + omega as f64),
            Schedule::Norma { p, .. } => 1.0 - p / t.sqrt(),
            Schedule::Bsgd { eta, lambda } => 1.0 - eta * lambda,
        };
        if m < 0.0 {
            return Err(Error::ScheduleParameter { t: t as u64, value: m });
        }
        Ok(m)
    }

    /// Magnitude of the signed coefficient/intercept step at `t ≥ 1`.
    pub fn step_size(&self, t: u64) -> f64 {
        debug_assert!(t >= 1);
        let t = t as f64;
        match *self {
            Schedule::Pegasos { lambda, omega } => 1.0 / (lambda * (t + omega as f64)),
            Schedule::Norma { p, lambda } => p / (lambda * t.sqrt()),
            Schedule::Bsgd { eta, .. } => eta,
        }
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::InvalidParameter {
            name,
            reason: format!("must be a positive finite real, got {v}"),
        });
    }
    Ok(())
}

fn check_step(t: u64) -> Result<f64> {
    if t == 0 {
        return Err(Error::InvalidParameter {
            name: "t",
            reason: "step counter starts at 1".to_string(),
        });
    }
    Ok(t as f64)
}

/// Signed tube test: +1 when the model is too low (`y − fhat > ε`), −1
/// when too high, 0 inside the tube (boundary counts as inside).
pub fn violation_direction(y: f64, fhat: f64, tube: EpsilonTube) -> f64 {
    let r = y - fhat;
    if r > tube.0 {
        1.0
    } else if -r > tube.0 {
        -1.0
    } else {
        0.0
    }
}

/// Ordered map from support vectors to signed coefficients, plus the
/// intercept. Key lookup uses exact bitwise equality of feature vectors;
/// iteration order is insertion order, and removal preserves the relative
/// order of the survivors (the selection state relies on this alignment).
#[derive(Clone, Debug, PartialEq)]
pub struct SupportVectorDictionary {
    entries: Vec<(FeatureVector, f64)>,
    intercept: f64,
    feature_dim: Option<usize>,
}

impl Default for SupportVectorDictionary {
    fn default() -> Self {
        Self::new()
    }
}

impl SupportVectorDictionary {
    pub fn new() -> Self {
        SupportVectorDictionary { entries: Vec::new(), intercept: 0.0, feature_dim: None }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn set_intercept(&mut self, b: f64) {
        self.intercept = b;
    }

    pub fn add_to_intercept(&mut self, delta: f64) {
        self.intercept += delta;
    }

    /// Feature dimension, pinned by the first inserted vector and kept for
    /// the dictionary's lifetime (it survives emptying by removals).
    pub fn feature_dim(&self) -> Option<usize> {
        self.feature_dim
    }

    pub fn vector(&self, i: usize) -> &FeatureVector {
        &self.entries[i].0
    }

    pub fn coeff(&self, i: usize) -> f64 {
        self.entries[i].1
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FeatureVector, f64)> {
        self.entries.iter().map(|(x, c)| (x, *c))
    }

    /// Index of the entry whose key is bitwise-equal to `x`.
    pub fn find(&self, x: &FeatureVector) -> Option<usize> {
        self.entries.iter().position(|(k, _)| k == x)
    }

    /// Appends a new entry; the key must not already be present.
    pub fn insert(&mut self, x: FeatureVector, coeff: f64) -> Result<()> {
        if let Some(dim) = self.feature_dim {
            if x.len() != dim {
                return Err(Error::DimensionMismatch(x.len(), dim));
            }
        } else {
            self.feature_dim = Some(x.len());
        }
        if self.find(&x).is_some() {
            return Err(Error::StateMismatch {
                details: "insert of an already-present dictionary key".to_string(),
            });
        }
        self.entries.push((x, coeff));
        Ok(())
    }

    /// Removes and returns the entry at `i`, preserving the relative order
    /// of the remaining entries.
    pub fn remove(&mut self, i: usize) -> Result<(FeatureVector, f64)> {
        if i >= self.entries.len() {
            return Err(Error::IndexOutOfRange { index: i, dim: self.entries.len() });
        }
        Ok(self.entries.remove(i))
    }

    pub fn accumulate(&mut self, i: usize, delta: f64) {
        self.entries[i].1 += delta;
    }

    /// Multiplies every coefficient (never the intercept) by `m`.
    pub fn scale_coefficients(&mut self, m: f64) {
        for (_, c) in &mut self.entries {
            *c *= m;
        }
    }

    /// `f(x) = Σ coeff·k(s, x) + b`, accumulated left-to-right in insertion
    /// order so replays are bit-reproducible.
    pub fn predict(&self, kernel: &KernelSpec, x: &FeatureVector) -> Result<f64> {
        if let Some(dim) = self.feature_dim {
            if x.len() != dim {
                return Err(Error::DimensionMismatch(x.len(), dim));
            }
        }
        let mut acc = 0.0;
        for (s, c) in &self.entries {
            acc += c * kernel.evaluate(s, x)?;
        }
        Ok(acc + self.intercept)
    }

    /// Writes the snapshot format: a header
    /// `svrmodel v1 kernel=<gaussian|linear> gamma=<g> dim=<n> intercept=<b>`
    /// followed by one `coeff v1 .. vn` line per support vector. Reals are
    /// printed with 17 significant digits and round-trip exactly.
    pub fn write_snapshot<W: Write>(&self, kernel: &KernelSpec, mut w: W) -> Result<()> {
        let (kind, gamma) = match kernel {
            KernelSpec::Gaussian { gamma } => ("gaussian", *gamma),
            KernelSpec::Linear => ("linear", 0.0),
        };
        let dim = self.feature_dim.unwrap_or(0);
        writeln!(
            w,
            "svrmodel v1 kernel={kind} gamma={} dim={dim} intercept={}",
            fmt_real(gamma),
            fmt_real(self.intercept)
        )?;
        for (x, c) in &self.entries {
            write!(w, "{}", fmt_real(*c))?;
            for v in x.iter() {
                write!(w, " {}", fmt_real(*v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Parses the snapshot format produced by [`Self::write_snapshot`].
    pub fn read_snapshot<R: BufRead>(r: R, origin: &str) -> Result<(Self, KernelSpec)> {
        let mut lines = r.lines();
        let header = match lines.next() {
            Some(line) => line?,
            None => {
                return Err(Error::VersionMismatch {
                    expected: "svrmodel v1",
                    found: "<empty file>".to_string(),
                })
            }
        };
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() < 2 || fields[0] != "svrmodel" || fields[1] != "v1" {
            return Err(Error::VersionMismatch {
                expected: "svrmodel v1",
                found: header.chars().take(40).collect(),
            });
        }
        let mut kind = None;
        let mut gamma = None;
        let mut dim = None;
        let mut intercept = None;
        for field in &fields[2..] {
            let (key, value) = field.split_once('=').ok_or_else(|| Error::Parse {
                origin: origin.to_string(),
                line: 1,
                reason: format!("malformed header field `{field}`"),
            })?;
            match key {
                "kernel" => kind = Some(value.to_string()),
                "gamma" => gamma = Some(parse_real(value, origin, 1)?),
                "dim" => {
                    dim = Some(value.parse::<usize>().map_err(|e| Error::Parse {
                        origin: origin.to_string(),
                        line: 1,
                        reason: format!("bad dim `{value}`: {e}"),
                    })?)
                }
                "intercept" => intercept = Some(parse_real(value, origin, 1)?),
                _ => {
                    return Err(Error::Parse {
                        origin: origin.to_string(),
                        line: 1,
                        reason: format!("unknown header field `{key}`"),
                    })
                }
            }
        }
        let (kind, dim, intercept) = match (kind, dim, intercept) {
            (Some(k), Some(d), Some(b)) => (k, d, b),
            _ => {
                return Err(Error::Parse {
                    origin: origin.to_string(),
                    line: 1,
                    reason: "header missing kernel=, dim= or intercept=".to_string(),
                })
            }
        };
        let kernel = match kind.as_str() {
            "gaussian" => KernelSpec::gaussian(gamma.unwrap_or(0.0))?,
            "linear" => KernelSpec::Linear,
            other => {
                return Err(Error::Parse {
                    origin: origin.to_string(),
                    line: 1,
                    reason: format!("unknown kernel `{other}`"),
                })
            }
        };
        let mut dict = SupportVectorDictionary::new();
        dict.intercept = intercept;
        if dim > 0 {
            dict.feature_dim = Some(dim);
        }
        for (idx, line) in lines.enumerate() {
            let line = line?;
            let lineno = idx as u64 + 2;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let coeff = parse_real(
                parts.next().expect("split of non-empty line yields a token"),
                origin,
                lineno,
            )?;
            let values = parts
                .map(|tok| parse_real(tok, origin, lineno))
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != dim {
                return Err(Error::Parse {
                    origin: origin.to_string(),
                    line: lineno,
                    reason: format!("expected {dim} feature values, got {}", values.len()),
                });
            }
            dict.insert(FeatureVector::new(values), coeff)?;
        }
        Ok((dict, kernel))
    }

    pub fn save_snapshot<P: AsRef<Path>>(&self, kernel: &KernelSpec, path: P) -> Result<()> {
        let file = File::create(path)?;
        self.write_snapshot(kernel, BufWriter::new(file))
    }

    pub fn load_snapshot<P: AsRef<Path>>(path: P) -> Result<(Self, KernelSpec)> {
        let origin = path.as_ref().display().to_string();
        let file = File::open(path.as_ref())?;
        Self::read_snapshot(BufReader::new(file), &origin)
    }
}

/// Prints a real with 17 significant digits (enough for exact `f64`
/// round-tripping through decimal).
fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_real(tok: &str, origin: &str, line: u64) -> Result<f64> {
    tok.parse::<f64>().map_err(|e| Error::Parse {
        origin: origin.to_string(),
        line,
        reason: format!("bad real `{tok}`: {e}"),
    })
}

/// What a single online update did to the dictionary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateOutcome {
    /// Residual within the tube: shrinkage only.
    WithinTube,
    /// Existing key received a signed step.
    Accumulated,
    /// New key appended without any eviction decision (plain/budgeted
    /// updates, or the empty-dictionary fallback of the selection update).
    Inserted,
    /// Selection update classified the sample as a new pattern (poorly
    /// spanned) and appended it.
    NewPattern,
    /// Selection update replaced the lowest-scoring key with the sample.
    Replaced,
    /// Selection update had to abandon a replacement because the sample is
    /// numerically spanned by the reduced set; the state is unchanged
    /// (modulo one entry moving to the end of the iteration order).
    SkippedDegenerate,
}

/// Index of the key with the smallest `coeff²·k(s,s)` score; ties resolve
/// to the earliest-inserted key for replay determinism. For Gaussian
/// kernels (`k(s,s) = 1`) this is just the smallest `|coeff|`.
pub fn removal_candidate(dict: &SupportVectorDictionary, kernel: &KernelSpec) -> Result<usize> {
    if dict.is_empty() {
        return Err(Error::EmptyModel("removal candidate of an empty dictionary"));
    }
    let mut best = 0;
    let mut best_score = f64::INFINITY;
    for (i, (x, c)) in dict.entries.iter().enumerate() {
        let score = c * c * kernel.self_similarity(x);
        if score < best_score {
            best_score = score;
            best = i;
        }
    }
    Ok(best)
}

/// Plain online update: shrink every coefficient, then step the sample's
/// coefficient and the intercept when the ε tube is violated (inserting
/// the sample as a new key if absent). The tube test uses the pre-shrink
/// prediction, in algorithm order.
pub fn update_kpsvr(
    dict: &mut SupportVectorDictionary,
    kernel: &KernelSpec,
    sched: &Schedule,
    tube: EpsilonTube,
    t: u64,
    x: &FeatureVector,
    y: f64,
) -> Result<UpdateOutcome> {
    let fhat = dict.predict(kernel, x)?;
    let m = sched.shrink_multiplier(t)?;
    dict.scale_coefficients(m);
    let d = violation_direction(y, fhat, tube);
    if d == 0.0 {
        return Ok(UpdateOutcome::WithinTube);
    }
    let step = sched.step_size(t);
    let outcome = match dict.find(x) {
        Some(i) => {
            dict.accumulate(i, d * step);
            UpdateOutcome::Accumulated
        }
        None => {
            dict.insert(x.clone(), d * step)?;
            UpdateOutcome::Inserted
        }
    };
    dict.add_to_intercept(d * step);
    Ok(outcome)
}

/// Budgeted update: [`update_kpsvr`] followed by eviction of the
/// lowest-scoring key while the dictionary exceeds its budget.
pub fn update_bkpsvr(
    dict: &mut SupportVectorDictionary,
    kernel: &KernelSpec,
    sched: &Schedule,
    tube: EpsilonTube,
    budget: Budget,
    t: u64,
    x: &FeatureVector,
    y: f64,
) -> Result<UpdateOutcome> {
    let outcome = update_kpsvr(dict, kernel, sched, tube, t, x, y)?;
    while dict.len() > budget.get() {
        let r = removal_candidate(dict, kernel)?;
        dict.remove(r)?;
    }
    Ok(outcome)
}

/// Coefficient sign for a new pattern that arrives inside the ε tube,
/// where the residual supplies no sign of its own.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NeutralInsertSign {
    /// Insert with `+step` and leave the intercept unchanged (the
    /// intercept subgradient is 0 inside the tube).
    #[default]
    PlusStep,
    /// Insert with a zero coefficient (key only).
    ZeroCoefficient,
}

/// Knobs of the selection-based update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EkpsvrParams {
    /// Local-fitness threshold in [0, 1): samples with `J < rho` are new
    /// patterns. 0 disables new-pattern insertion entirely, degenerating to
    /// plain-update-with-replacement semantics.
    pub rho: f64,
    pub neutral_insert: NeutralInsertSign,
}

impl EkpsvrParams {
    pub fn new(rho: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidParameter {
                name: "rho",
                reason: format!("must lie in [0, 1), got {rho}"),
            });
        }
        Ok(EkpsvrParams { rho, neutral_insert: NeutralInsertSign::default() })
    }
}

/// Selection-based update. After shrinkage:
///
/// 1. `J < rho` → **new pattern**: always inserted into both the dictionary
///    and the selection state, with the violation sign when there is one.
/// 2. otherwise, on a tube violation → **changed pattern**: an existing key
///    accumulates; a novel key replaces the removal candidate (dictionary
///    size is preserved).
/// 3. otherwise shrinkage only.
///
/// The dictionary and selection state must be index-aligned on entry and
/// are kept aligned on every exit path.
pub fn update_ekpsvr(
    dict: &mut SupportVectorDictionary,
    fvs: &mut FvsState,
    kernel: &KernelSpec,
    sched: &Schedule,
    tube: EpsilonTube,
    params: &EkpsvrParams,
    t: u64,
    x: &FeatureVector,
    y: f64,
) -> Result<UpdateOutcome> {
    check_alignment(dict, fvs)?;
    let fhat = dict.predict(kernel, x)?;
    let m = sched.shrink_multiplier(t)?;
    dict.scale_coefficients(m);
    let d = violation_direction(y, fhat, tube);
    let j = fvs.local_fitness(x)?;

    let outcome = if j < params.rho {
        if dict.find(x).is_some() {
            return Err(Error::StateMismatch {
                details: "sample classified as new pattern but already a dictionary key"
                    .to_string(),
            });
        }
        let step = sched.step_size(t);
        let (coeff, intercept_delta) = if d == 0.0 {
            match params.neutral_insert {
                NeutralInsertSign::PlusStep => (step, 0.0),
                NeutralInsertSign::ZeroCoefficient => (0.0, 0.0),
            }
        } else {
            (d * step, d * step)
        };
        match fvs.add_vector(x) {
            Ok(()) => {
                dict.insert(x.clone(), coeff)?;
                dict.add_to_intercept(intercept_delta);
                UpdateOutcome::NewPattern
            }
            // Numerically spanned despite the fitness verdict: treat it as
            // a changed pattern instead of corrupting the inverse.
            Err(Error::NearSingular { .. }) => changed_pattern(dict, fvs, kernel, sched, d, t, x)?,
            Err(e) => return Err(e),
        }
    } else {
        changed_pattern(dict, fvs, kernel, sched, d, t, x)?
    };
    check_alignment(dict, fvs)?;
    Ok(outcome)
}

fn changed_pattern(
    dict: &mut SupportVectorDictionary,
    fvs: &mut FvsState,
    kernel: &KernelSpec,
    sched: &Schedule,
    d: f64,
    t: u64,
    x: &FeatureVector,
) -> Result<UpdateOutcome> {
    if d == 0.0 {
        return Ok(UpdateOutcome::WithinTube);
    }
    let step = sched.step_size(t);
    if let Some(i) = dict.find(x) {
        dict.accumulate(i, d * step);
        dict.add_to_intercept(d * step);
        return Ok(UpdateOutcome::Accumulated);
    }
    if dict.is_empty() {
        // Reachable only when rho = 0 pins J ≥ rho on the empty state:
        // nothing to replace, so insert directly like the plain update.
        fvs.add_vector(x)?;
        dict.insert(x.clone(), d * step)?;
        dict.add_to_intercept(d * step);
        return Ok(UpdateOutcome::Inserted);
    }
    let r = removal_candidate(dict, kernel)?;
    let (evicted_x, evicted_c) = dict.remove(r)?;
    fvs.remove_vector(r)?;
    match fvs.add_vector(x) {
        Ok(()) => {}
        Err(Error::NearSingular { .. }) => {
            // The sample is numerically spanned by the reduced set, so the
            // replacement cannot be represented. Restore the evicted entry
            // (re-appending keeps both sides aligned) and skip the step.
            fvs.add_vector(&evicted_x)?;
            dict.insert(evicted_x, evicted_c)?;
            return Ok(UpdateOutcome::SkippedDegenerate);
        }
        Err(e) => return Err(e),
    }
    dict.insert(x.clone(), d * step)?;
    dict.add_to_intercept(d * step);
    Ok(UpdateOutcome::Replaced)
}

fn check_alignment(dict: &SupportVectorDictionary, fvs: &FvsState) -> Result<()> {
    if dict.len() != fvs.dim() {
        return Err(Error::StateMismatch {
            details: format!(
                "dictionary holds {} keys but selection state has dimension {}",
                dict.len(),
                fvs.dim()
            ),
        });
    }
    debug_assert!(
        dict.entries.iter().map(|(x, _)| x).eq(fvs.vectors().iter()),
        "dictionary keys and selection vectors diverged"
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fv(values: &[f64]) -> FeatureVector {
        FeatureVector::from(values)
    }

    fn gaussian() -> KernelSpec {
        KernelSpec::gaussian(0.25).unwrap()
    }

    fn tube() -> EpsilonTube {
        EpsilonTube::new(0.01).unwrap()
    }

    // --- schedules -------------------------------------------------------

    #[test]
    fn pegasos_shrink_and_step_at_t20() {
        let s = Schedule::pegasos(0.75, 7).unwrap();
        assert!((s.shrink_multiplier(20).unwrap() - 26.0 / 27.0).abs() < 1e-15);
        assert!((s.step_size(20) - 1.0 / 20.25).abs() < 1e-15);
    }

    #[test]
    fn bsgd_shrink_is_constant() {
        let s = Schedule::bsgd(0.01, 10.0).unwrap();
        for t in [1, 7, 1000] {
            assert!((s.shrink_multiplier(t).unwrap() - 0.9).abs() < 1e-15);
            assert_eq!(s.step_size(t), 0.01);
        }
    }

    #[test]
    fn norma_values_at_t4() {
        let s = Schedule::norma(0.71, 0.75).unwrap();
        assert!((s.shrink_multiplier(4).unwrap() - 0.645).abs() < 1e-15);
        assert!((s.step_size(4) - 0.473_333_333_333_333_33).abs() < 1e-15);
    }

    #[test]
    fn negative_shrink_is_rejected() {
        let s = Schedule::norma(2.0, 0.75).unwrap();
        assert!(matches!(s.shrink_multiplier(1), Err(Error::ScheduleParameter { .. })));
        // Valid again once √t exceeds p.
        assert!(s.shrink_multiplier(9).unwrap() >= 0.0);
    }

    #[test]
    fn pegasos_zero_offset_wipes_at_t1() {
        let s = Schedule::pegasos(0.75, 0).unwrap();
        assert_eq!(s.shrink_multiplier(1).unwrap(), 0.0);
    }

    #[test]
    fn bsgd_requires_eta_lambda_below_one() {
        assert!(Schedule::bsgd(0.2, 10.0).is_err());
        assert!(Schedule::bsgd(0.01, 10.0).is_ok());
    }

    // --- violation direction ---------------------------------------------

    #[test]
    fn violation_direction_signs() {
        assert_eq!(violation_direction(0.2, 0.25, tube()), -1.0);
        assert_eq!(violation_direction(0.3, 0.25, tube()), 1.0);
        assert_eq!(violation_direction(0.25, 0.25, tube()), 0.0);
        // Exactly at the boundary counts as inside (residual exactly ε).
        assert_eq!(violation_direction(0.01, 0.0, tube()), 0.0);
    }

    // --- prediction -------------------------------------------------------

    #[test]
    fn predict_on_empty_dictionary_is_intercept() {
        let mut dict = SupportVectorDictionary::new();
        dict.set_intercept(0.1);
        assert_eq!(dict.predict(&gaussian(), &fv(&[1.0, 2.0])).unwrap(), 0.1);
    }

    #[test]
    fn predict_at_stored_vector() {
        let mut dict = SupportVectorDictionary::new();
        let s = fv(&[1.0, 2.0]);
        dict.insert(s.clone(), 0.5).unwrap();
        assert_eq!(dict.predict(&gaussian(), &s).unwrap(), 0.5);
    }

    #[test]
    fn predict_mixes_kernel_and_intercept() {
        // coeff 0.5 at squared distance 4 (so k = e^{-1}) plus b = 0.1.
        let mut dict = SupportVectorDictionary::new();
        dict.insert(fv(&[0.0, 0.0]), 0.5).unwrap();
        dict.set_intercept(0.1);
        let p = dict.predict(&gaussian(), &fv(&[2.0, 0.0])).unwrap();
        assert!((p - 0.283_939_720_585_721_16).abs() < 1e-15);
    }

    // --- removal candidate -------------------------------------------------

    #[test]
    fn removal_candidate_gaussian_is_smallest_abs_coeff() {
        let mut dict = SupportVectorDictionary::new();
        dict.insert(fv(&[1.0]), 0.5).unwrap();
        dict.insert(fv(&[2.0]), -0.1).unwrap();
        dict.insert(fv(&[3.0]), 0.3).unwrap();
        assert_eq!(removal_candidate(&dict, &gaussian()).unwrap(), 1);
    }

    #[test]
    fn removal_candidate_linear_weighs_self_similarity() {
        // Scores 0.5²·1 = 0.25 and 0.4²·2 = 0.32: the first entry loses.
        let mut dict = SupportVectorDictionary::new();
        dict.insert(fv(&[1.0, 0.0]), 0.5).unwrap();
        dict.insert(fv(&[1.0, 1.0]), 0.4).unwrap();
        assert_eq!(removal_candidate(&dict, &KernelSpec::linear()).unwrap(), 0);
    }

    #[test]
    fn removal_candidate_tie_breaks_to_earliest() {
        let mut dict = SupportVectorDictionary::new();
        dict.insert(fv(&[1.0]), 0.3).unwrap();
        dict.insert(fv(&[2.0]), -0.3).unwrap();
        assert_eq!(removal_candidate(&dict, &gaussian()).unwrap(), 0);
    }

    #[test]
    fn removal_candidate_empty_errors() {
        let dict = SupportVectorDictionary::new();
        assert!(matches!(removal_candidate(&dict, &gaussian()), Err(Error::EmptyModel(_))));
    }

    // --- plain update -------------------------------------------------------

    #[test]
    fn first_violating_sample_seeds_the_model() {
        // Zero model, y = 0.2 > ε: step is 1/(0.75·1) = 4/3 at t = 1.
        let mut dict = SupportVectorDictionary::new();
        let sched = Schedule::pegasos(0.75, 0).unwrap();
        let x = fv(&[1.0, 1.0, 0.1, 0.1]);
        let out = update_kpsvr(&mut dict, &gaussian(), &sched, tube(), 1, &x, 0.2).unwrap();
        assert_eq!(out, UpdateOutcome::Inserted);
        assert_eq!(dict.len(), 1);
        assert!((dict.coeff(0) - 4.0 / 3.0).abs() < 1e-15);
        assert!((dict.intercept() - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tube_satisfying_sample_only_shrinks() {
        let mut dict = SupportVectorDictionary::new();
        dict.insert(fv(&[1.0]), 0.27).unwrap();
        dict.set_intercept(0.1);
        let sched = Schedule::pegasos(0.75, 7).unwrap();
        // Prediction at the stored point is 0.37; y = 0.37 is inside the tube.
        let out =
            update_kpsvr(&mut dict, &gaussian(), &sched, tube(), 20, &fv(&[1.0]), 0.37).unwrap();
        assert_eq!(out, UpdateOutcome::WithinTube);
        assert_eq!(dict.len(), 1);
        assert!((dict.coeff(0) - 0.27 * 26.0 / 27.0).abs() < 1e-15);
        assert_eq!(dict.intercept(), 0.1);
    }

    #[test]
    fn existing_key_accumulates_signed_step() {
        let mut dict = SupportVectorDictionary::new();
        let x = fv(&[1.0]);
        dict.insert(x.clone(), 0.5).unwrap();
        let sched = Schedule::pegasos(0.75, 7).unwrap();
        // fhat = 0.5, y = 0.4 → direction −1 at t = 20.
        let out = update_kpsvr(&mut dict, &gaussian(), &sched, tube(), 20, &x, 0.4).unwrap();
        assert_eq!(out, UpdateOutcome::Accumulated);
        assert_eq!(dict.len(), 1);
        assert!((dict.coeff(0) - (0.5 * 26.0 / 27.0 - 1.0 / 20.25)).abs() < 1e-15);
        assert!((dict.intercept() - (-1.0 / 20.25)).abs() < 1e-15);
    }

    #[test]
    fn coefficients_stay_finite_under_repeated_shrinkage() {
        let mut dict = SupportVectorDictionary::new();
        dict.insert(fv(&[0.0]), 1.0).unwrap();
        let sched = Schedule::pegasos(0.75, 7).unwrap();
        for t in 1..=1000 {
            update_kpsvr(&mut dict, &gaussian(), &sched, tube(), t, &fv(&[0.0]), 0.0).unwrap();
            assert!(dict.coeff(0).is_finite());
            assert!(dict.intercept().is_finite());
        }
    }

    // --- budgeted update ----------------------------------------------------

    #[test]
    fn budget_of_one_keeps_single_key() {
        let mut dict = SupportVectorDictionary::new();
        let sched = Schedule::pegasos(0.75, 7).unwrap();
        let b = Budget::new(1).unwrap();
        update_bkpsvr(&mut dict, &gaussian(), &sched, tube(), b, 1, &fv(&[1.0]), 0.5).unwrap();
        update_bkpsvr(&mut dict, &gaussian(), &sched, tube(), b, 2, &fv(&[9.0]), 0.5).unwrap();
        assert_eq!(dict.len(), 1);
    }

    #[test]
    fn non_violating_sample_never_evicts() {
        let mut dict = SupportVectorDictionary::new();
        let sched = Schedule::pegasos(0.75, 7).unwrap();
        let b = Budget::new(2).unwrap();
        let k = gaussian();
        update_bkpsvr(&mut dict, &k, &sched, tube(), b, 1, &fv(&[0.0]), 0.5).unwrap();
        update_bkpsvr(&mut dict, &k, &sched, tube(), b, 2, &fv(&[50.0]), 0.5).unwrap();
        assert_eq!(dict.len(), 2);
        // A sample predicted well (inside the tube) leaves the size alone.
        let fhat = dict.predict(&k, &fv(&[50.0])).unwrap();
        update_bkpsvr(&mut dict, &k, &sched, tube(), b, 3, &fv(&[50.0]), fhat).unwrap();
        assert_eq!(dict.len(), 2);
    }

    #[test]
    fn generous_budget_replays_identically_to_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let sched = Schedule::pegasos(0.75, 7).unwrap();
        let k = gaussian();
        let b = Budget::new(1000).unwrap();
        let mut plain = SupportVectorDictionary::new();
        let mut budgeted = SupportVectorDictionary::new();
        for t in 1..=50 {
            let x = fv(&std::array::from_fn::<f64, 4, _>(|_| rng.random_range(-2.0..2.0)));
            let y = rng.random_range(-1.0..1.0);
            update_kpsvr(&mut plain, &k, &sched, tube(), t, &x, y).unwrap();
            update_bkpsvr(&mut budgeted, &k, &sched, tube(), b, t, &x, y).unwrap();
        }
        assert_eq!(plain, budgeted);
    }

    // --- selection update ----------------------------------------------------

    #[test]
    fn first_sample_is_always_a_new_pattern() {
        let mut dict = SupportVectorDictionary::new();
        let mut fvs = FvsState::new(gaussian());
        let sched = Schedule::pegasos(0.75, 7).unwrap();
        let params = EkpsvrParams::new(0.3).unwrap();
        let out = update_ekpsvr(
            &mut dict,
            &mut fvs,
            &gaussian(),
            &sched,
            tube(),
            &params,
            1,
            &fv(&[1.0, 1.0, 0.1, 0.1]),
            0.2,
        )
        .unwrap();
        assert_eq!(out, UpdateOutcome::NewPattern);
        assert_eq!(dict.len(), 1);
        assert_eq!(fvs.dim(), 1);
    }

    #[test]
    fn spanned_sample_inside_tube_only_shrinks() {
        let mut dict = SupportVectorDictionary::new();
        let mut fvs = FvsState::new(gaussian());
        let sched = Schedule::pegasos(0.75, 7).unwrap();
        let params = EkpsvrParams::new(0.3).unwrap();
        let x = fv(&[1.0, 1.0, 0.1, 0.1]);
        update_ekpsvr(&mut dict, &mut fvs, &gaussian(), &sched, tube(), &params, 1, &x, 0.2)
            .unwrap();
        let fhat = dict.predict(&gaussian(), &x).unwrap();
        let out =
            update_ekpsvr(&mut dict, &mut fvs, &gaussian(), &sched, tube(), &params, 2, &x, fhat)
                .unwrap();
        assert_eq!(out, UpdateOutcome::WithinTube);
        assert_eq!(dict.len(), 1);
    }

    #[test]
    fn changed_pattern_replaces_lowest_scoring_key() {
        // One stored vector at distance² = 2 ln 2 from the query, so the
        // cross-kernel is √0.5 and J = 0.5 ≥ ρ = 0.3; the prediction is
        // made 0.25 against y = 0.2, a −1 violation at t = 20. The lone key
        // must be evicted and the sample inserted with coefficient
        // −1/20.25, the intercept stepping by the same amount.
        let mut dict = SupportVectorDictionary::new();
        let mut fvs = FvsState::new(gaussian());
        let sched = Schedule::pegasos(0.75, 7).unwrap();
        let params = EkpsvrParams::new(0.3).unwrap();
        let s = fv(&[0.0, 0.0, 0.0, 0.0]);
        let d = (2.0 * std::f64::consts::LN_2).sqrt();
        let x = fv(&[d, 0.0, 0.0, 0.0]);
        let cross = 0.5_f64.sqrt();
        dict.insert(s.clone(), 0.25 / cross).unwrap();
        fvs.add_vector(&s).unwrap();
        let j = fvs.local_fitness(&x).unwrap();
        assert!((j - 0.5).abs() < 1e-12);

        let out = update_ekpsvr(
            &mut dict,
            &mut fvs,
            &gaussian(),
            &sched,
            tube(),
            &params,
            20,
            &x,
            0.2,
        )
        .unwrap();
        assert_eq!(out, UpdateOutcome::Replaced);
        assert_eq!(dict.len(), 1);
        assert_eq!(dict.vector(0), &x);
        assert!((dict.coeff(0) + 1.0 / 20.25).abs() < 1e-15);
        assert!((dict.intercept() + 1.0 / 20.25).abs() < 1e-15);
        assert_eq!(fvs.dim(), 1);
    }

    #[test]
    fn changed_pattern_accumulates_existing_key() {
        let mut dict = SupportVectorDictionary::new();
        let mut fvs = FvsState::new(gaussian());
        let sched = Schedule::pegasos(0.75, 7).unwrap();
        let params = EkpsvrParams::new(0.3).unwrap();
        let x = fv(&[1.0, 1.0, 0.1, 0.1]);
        update_ekpsvr(&mut dict, &mut fvs, &gaussian(), &sched, tube(), &params, 1, &x, 0.2)
            .unwrap();
        let c_before = dict.coeff(0);
        // Same key again with a large positive residual: J = 1 ≥ ρ and the
        // key exists, so it accumulates.
        let out =
            update_ekpsvr(&mut dict, &mut fvs, &gaussian(), &sched, tube(), &params, 2, &x, 5.0)
                .unwrap();
        assert_eq!(out, UpdateOutcome::Accumulated);
        assert_eq!(dict.len(), 1);
        let m = sched.shrink_multiplier(2).unwrap();
        let step = sched.step_size(2);
        assert!((dict.coeff(0) - (c_before * m + step)).abs() < 1e-15);
    }

    #[test]
    fn selection_state_stays_aligned_over_random_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let mut dict = SupportVectorDictionary::new();
        let mut fvs = FvsState::new(gaussian());
        let sched = Schedule::pegasos(0.75, 7).unwrap();
        let params = EkpsvrParams::new(0.4).unwrap();
        for t in 1..=300 {
            let x = fv(&std::array::from_fn::<f64, 4, _>(|_| rng.random_range(-3.0..3.0)));
            let y = rng.random_range(-0.5..0.5);
            update_ekpsvr(&mut dict, &mut fvs, &gaussian(), &sched, tube(), &params, t, &x, y)
                .unwrap();
            assert_eq!(dict.len(), fvs.dim());
            for i in 0..dict.len() {
                assert_eq!(dict.vector(i), &fvs.vectors()[i]);
            }
        }
        assert!(dict.len() >= 2);
    }

    /// Independent straight-line re-implementation of
    /// "plain update with replacement": shrink, then on violation
    /// accumulate an existing key or replace the argmin-|coeff| key
    /// (earliest on ties), stepping the intercept alongside. The selection
    /// update with rho = 0 must replay to the identical model, never
    /// emitting a new-pattern outcome.
    #[test]
    fn rho_zero_matches_replacement_oracle() {
        fn oracle_step(
            entries: &mut Vec<(FeatureVector, f64)>,
            intercept: &mut f64,
            lambda: f64,
            eps: f64,
            t: u64,
            x: &FeatureVector,
            y: f64,
        ) {
            let k = KernelSpec::gaussian(0.25).unwrap();
            let mut fhat = *intercept;
            for (s, c) in entries.iter() {
                fhat += c * k.evaluate(s, x).unwrap();
            }
            let m = 1.0 - 1.0 / t as f64;
            for (_, c) in entries.iter_mut() {
                *c *= m;
            }
            let r = y - fhat;
            let dir = if r > eps {
                1.0
            } else if -r > eps {
                -1.0
            } else {
                return;
            };
            let step = 1.0 / (lambda * t as f64);
            if let Some(i) = entries.iter().position(|(s, _)| s == x) {
                entries[i].1 += dir * step;
            } else {
                if !entries.is_empty() {
                    let mut worst = 0;
                    let mut worst_score = f64::INFINITY;
                    for (i, (_, c)) in entries.iter().enumerate() {
                        if c * c < worst_score {
                            worst_score = c * c;
                            worst = i;
                        }
                    }
                    entries.remove(worst);
                }
                entries.push((x.clone(), dir * step));
            }
            *intercept += dir * step;
        }

        for seed in [1_u64, 2, 3, 4, 5] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let stream: Vec<(FeatureVector, f64)> = (0..50)
                .map(|_| {
                    (
                        fv(&std::array::from_fn::<f64, 4, _>(|_| rng.random_range(-2.0..2.0))),
                        rng.random_range(-0.5..0.5),
                    )
                })
                .collect();

            let mut dict = SupportVectorDictionary::new();
            let mut fvs = FvsState::new(gaussian());
            let sched = Schedule::pegasos(0.75, 0).unwrap();
            let params = EkpsvrParams::new(0.0).unwrap();
            let mut oracle_entries: Vec<(FeatureVector, f64)> = Vec::new();
            let mut oracle_intercept = 0.0;

            for (i, (x, y)) in stream.iter().enumerate() {
                let t = i as u64 + 1;
                let out = update_ekpsvr(
                    &mut dict,
                    &mut fvs,
                    &gaussian(),
                    &sched,
                    tube(),
                    &params,
                    t,
                    x,
                    *y,
                )
                .unwrap();
                assert_ne!(out, UpdateOutcome::NewPattern, "rho = 0 must not admit new patterns");
                oracle_step(&mut oracle_entries, &mut oracle_intercept, 0.75, 0.01, t, x, *y);

                assert_eq!(dict.len(), oracle_entries.len(), "seed {seed} step {t}");
                for (j, (ox, oc)) in oracle_entries.iter().enumerate() {
                    assert_eq!(dict.vector(j), ox, "seed {seed} step {t} key {j}");
                    assert!(
                        (dict.coeff(j) - oc).abs() < 1e-12,
                        "seed {seed} step {t} coeff {j}"
                    );
                }
                assert!((dict.intercept() - oracle_intercept).abs() < 1e-12);
            }
        }
    }

    // --- snapshots ----------------------------------------------------------

    #[test]
    fn snapshot_round_trips_bit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let mut dict = SupportVectorDictionary::new();
        for _ in 0..25 {
            let x = fv(&std::array::from_fn::<f64, 4, _>(|_| rng.random_range(-5.0..5.0)));
            let c: f64 = rng.random_range(-2.0..2.0);
            if dict.find(&x).is_none() {
                dict.insert(x, c).unwrap();
            }
        }
        dict.set_intercept(0.123456789123456789);
        let kernel = gaussian();
        let mut buf = Vec::new();
        dict.write_snapshot(&kernel, &mut buf).unwrap();
        let (loaded, loaded_kernel) =
            SupportVectorDictionary::read_snapshot(&buf[..], "<memory>").unwrap();
        assert_eq!(loaded_kernel, kernel);
        assert_eq!(loaded.len(), dict.len());
        assert_eq!(loaded.intercept().to_bits(), dict.intercept().to_bits());
        for i in 0..dict.len() {
            assert_eq!(loaded.vector(i), dict.vector(i));
            assert_eq!(loaded.coeff(i).to_bits(), dict.coeff(i).to_bits());
        }
    }

    #[test]
    fn snapshot_rejects_foreign_header() {
        let text = "something v9 kernel=gaussian\n";
        let err = SupportVectorDictionary::read_snapshot(text.as_bytes(), "<memory>").unwrap_err();
        assert!(matches!(err, Error::VersionMismatch { .. }));
    }

    #[test]
    fn empty_dictionary_snapshot_round_trips() {
        let dict = SupportVectorDictionary::new();
        let mut buf = Vec::new();
        dict.write_snapshot(&KernelSpec::linear(), &mut buf).unwrap();
        let (loaded, k) = SupportVectorDictionary::read_snapshot(&buf[..], "<memory>").unwrap();
        assert_eq!(k, KernelSpec::Linear);
        assert!(loaded.is_empty());
        assert_eq!(loaded.intercept(), 0.0);
    }
}
