//! CPU data-parallel kernels for the heavy inner loops — batched
//! prediction over many query points, the shared quadratic form behind
//! local fitness and the bordering denominator, and rank-1 matrix updates
//! — plus a benchmark harness contrasting serial and parallel throughput.
//!
//! Parallelism is over samples for [`batch_predict`] and over matrix rows
//! for [`quadratic_form`] / [`rank1_update`], using scoped threads with
//! one contiguous row chunk per worker. Inputs are read-only during a
//! call, every worker writes a disjoint output slab, and the module owns
//! no shared mutable state, so calls are freely composable across
//! threads.
//!
//! Each row is reduced by a single left-to-right accumulator when
//! [`BatchPlan::deterministic_sum`] is set, which makes results
//! bit-identical for every worker count (row sums never cross chunk
//! boundaries). With it cleared, rows use a four-lane unrolled reduction
//! that trades exact reproducibility for instruction-level parallelism.

use std::fmt;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::mat::Matrix;

/// Execution plan for the data-parallel kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchPlan {
    /// Row-traversal blocking hint (the software analog of a fixed-size
    /// on-chip coefficient store). Summation order is defined
    /// independently of it: left-to-right per tile, tiles in order — i.e.
    /// plain left-to-right — so it never affects deterministic results.
    pub tile_size: usize,
    /// Number of scoped worker threads. 1 runs the kernel inline with no
    /// thread machinery at all.
    pub worker_count: usize,
    /// Fixed left-to-right reduction per row (bit-identical across worker
    /// counts) versus free-order unrolled reduction (faster, equal to the
    /// serial loop only within rounding).
    pub deterministic_sum: bool,
}

impl Default for BatchPlan {
    fn default() -> Self {
        BatchPlan { tile_size: 1024, worker_count: 1, deterministic_sum: true }
    }
}

impl BatchPlan {
    pub fn new(tile_size: usize, worker_count: usize, deterministic_sum: bool) -> Result<Self> {
        let plan = BatchPlan { tile_size, worker_count, deterministic_sum };
        plan.validate()?;
        Ok(plan)
    }

    pub fn with_workers(worker_count: usize) -> Result<Self> {
        BatchPlan::new(1024, worker_count, true)
    }

    fn validate(&self) -> Result<()> {
        if self.tile_size == 0 {
            return Err(Error::InvalidParameter {
                name: "tile_size",
                reason: "must be at least 1".to_string(),
            });
        }
        if self.worker_count == 0 {
            return Err(Error::InvalidParameter {
                name: "worker_count",
                reason: "must be at least 1".to_string(),
            });
        }
        Ok(())
    }
}

/// Strict left-to-right dot product; the deterministic reduction kernel.
#[inline]
fn dot_ordered(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for j in 0..a.len() {
        acc += a[j] * b[j];
    }
    acc
}

/// Four-lane unrolled dot product; reassociates the sum for speed.
#[inline]
fn dot_unrolled(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [0.0_f64; 4];
    let mut chunks_a = a.chunks_exact(4);
    let mut chunks_b = b.chunks_exact(4);
    for (ca, cb) in (&mut chunks_a).zip(&mut chunks_b) {
        lanes[0] += ca[0] * cb[0];
        lanes[1] += ca[1] * cb[1];
        lanes[2] += ca[2] * cb[2];
        lanes[3] += ca[3] * cb[3];
    }
    let mut tail = 0.0;
    for (x, y) in chunks_a.remainder().iter().zip(chunks_b.remainder()) {
        tail += x * y;
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

#[inline]
fn dot(a: &[f64], b: &[f64], deterministic: bool) -> f64 {
    if deterministic {
        dot_ordered(a, b)
    } else {
        dot_unrolled(a, b)
    }
}

/// Splits `rows` into at most `workers` contiguous, non-empty ranges.
fn chunk_ranges(rows: usize, workers: usize) -> Vec<(usize, usize)> {
    let w = workers.min(rows).max(1);
    let base = rows / w;
    let extra = rows % w;
    let mut out = Vec::with_capacity(w);
    let mut start = 0;
    for i in 0..w {
        let len = base + usize::from(i < extra);
        out.push((start, start + len));
        start += len;
    }
    out
}

/// Runs `f(first_row, slab)` over contiguous row chunks of `data`
/// (`rows` rows of `row_width` elements each), one scoped thread per
/// chunk. A single worker runs inline on the calling thread.
fn for_row_chunks<F>(data: &mut [f64], rows: usize, row_width: usize, workers: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    debug_assert_eq!(data.len(), rows * row_width);
    let w = workers.min(rows).max(1);
    if w <= 1 {
        f(0, data);
        return;
    }
    let ranges = chunk_ranges(rows, w);
    std::thread::scope(|scope| {
        let mut rest = data;
        let f = &f;
        for (start, end) in ranges {
            let (chunk, tail) = rest.split_at_mut((end - start) * row_width);
            rest = tail;
            scope.spawn(move || f(start, chunk));
        }
    });
}

/// Batched kernel-expansion inference: given per-query kernel rows
/// (`kernel_rows[i][j] = k(s_j, x_i)`), returns
/// `p[i] = intercept + Σⱼ coeffs[j]·kernel_rows[i][j]` for every query.
/// Parallel over queries.
pub fn batch_predict(
    coeffs: &[f64],
    kernel_rows: &Matrix,
    intercept: f64,
    plan: &BatchPlan,
) -> Result<Vec<f64>> {
    plan.validate()?;
    if coeffs.len() != kernel_rows.cols() {
        return Err(Error::DimensionMismatch(coeffs.len(), kernel_rows.cols()));
    }
    let m = kernel_rows.rows();
    let mut out = vec![0.0_f64; m];
    let det = plan.deterministic_sum;
    for_row_chunks(&mut out, m, 1, plan.worker_count, |first, slab| {
        for (local, p) in slab.iter_mut().enumerate() {
            *p = intercept + dot(kernel_rows.row(first + local), coeffs, det);
        }
    });
    Ok(out)
}

/// The shared two-step quadratic form: `intermediate = inv·kvec`
/// (parallel over rows) and `c = kvecᵀ·inv·kvec` (final ordered dot).
/// `c` is both the local-fitness numerator and, subtracted from `k(x,x)`,
/// the bordering denominator.
pub fn quadratic_form(
    kvec: &[f64],
    inv: &Matrix,
    plan: &BatchPlan,
) -> Result<(Vec<f64>, f64)> {
    plan.validate()?;
    if !inv.is_square() || inv.rows() != kvec.len() {
        return Err(Error::DimensionMismatch(kvec.len(), inv.rows()));
    }
    let n = kvec.len();
    let mut intermediate = vec![0.0_f64; n];
    let det = plan.deterministic_sum;
    for_row_chunks(&mut intermediate, n, 1, plan.worker_count, |first, slab| {
        for (local, v) in slab.iter_mut().enumerate() {
            *v = dot(inv.row(first + local), kvec, det);
        }
    });
    let c = dot(kvec, &intermediate, det);
    Ok((intermediate, c))
}

/// `out[i][j] = base[i][j] − scale·u[i]·v[j]`, parallel over rows. With
/// `scale = 1/z, u = v = Y` this is the deletion downdate; with a negative
/// scale it is the additive outer-product half of the bordering update.
pub fn rank1_update(
    base: &Matrix,
    u: &[f64],
    v: &[f64],
    scale: f64,
    plan: &BatchPlan,
) -> Result<Matrix> {
    let mut out = base.clone();
    rank1_update_in_place(&mut out, u, v, scale, plan)?;
    Ok(out)
}

/// In-place variant of [`rank1_update`] for matrices large enough that a
/// second copy would not fit in memory.
pub fn rank1_update_in_place(
    base: &mut Matrix,
    u: &[f64],
    v: &[f64],
    scale: f64,
    plan: &BatchPlan,
) -> Result<()> {
    plan.validate()?;
    if u.len() != base.rows() {
        return Err(Error::DimensionMismatch(u.len(), base.rows()));
    }
    if v.len() != base.cols() {
        return Err(Error::DimensionMismatch(v.len(), base.cols()));
    }
    let (rows, cols) = (base.rows(), base.cols());
    for_row_chunks(base.data_mut(), rows, cols, plan.worker_count, |first, slab| {
        for (local, row) in slab.chunks_mut(cols).enumerate() {
            let ui = scale * u[first + local];
            for (x, vj) in row.iter_mut().zip(v) {
                *x -= ui * vj;
            }
        }
    });
    Ok(())
}

/// The four measured kernels, mirroring how the per-update cost of the
/// selection learner decomposes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchOp {
    /// Batched inference over an N-query, N-vector kernel block.
    Prediction,
    /// Quadratic form of an N-vector against an N×N inverse.
    LocalFitness,
    /// Outer-product half of the bordering update on an N×N inverse.
    SvAddition,
    /// Deletion downdate on an N×N inverse.
    SvRemoval,
}

impl BenchOp {
    pub const ALL: [BenchOp; 4] =
        [BenchOp::LocalFitness, BenchOp::SvAddition, BenchOp::SvRemoval, BenchOp::Prediction];
}

impl fmt::Display for BenchOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            BenchOp::Prediction => "prediction",
            BenchOp::LocalFitness => "local_fitness",
            BenchOp::SvAddition => "sv_addition",
            BenchOp::SvRemoval => "sv_removal",
        };
        f.write_str(name)
    }
}

/// One measured (size, op) cell: best-of-reps wall times and their ratio.
#[derive(Clone, Copy, Debug)]
pub struct BenchRow {
    pub n: usize,
    pub op: BenchOp,
    pub serial_ns: u128,
    pub parallel_ns: u128,
    pub speedup: f64,
}

/// Benchmark results over all requested sizes.
#[derive(Clone, Debug, Default)]
pub struct BenchReport {
    rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn rows(&self) -> &[BenchRow] {
        &self.rows
    }

    pub fn row(&self, n: usize, op: BenchOp) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.n == n && r.op == op)
    }

    /// Machine-readable form: `n,op,serial_ns,parallel_ns,speedup`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,op,serial_ns,parallel_ns,speedup\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.4}\n",
                r.n, r.op, r.serial_ns, r.parallel_ns, r.speedup
            ));
        }
        out
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>8}  {:<14}  {:>14}  {:>14}  {:>8}",
            "n", "op", "serial_ns", "parallel_ns", "speedup"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>8}  {:<14}  {:>14}  {:>14}  {:>8.3}",
                r.n,
                r.op.to_string(),
                r.serial_ns,
                r.parallel_ns,
                r.speedup
            )?;
        }
        Ok(())
    }
}

const BENCH_REPS: u32 = 3;

fn time_best<F: FnMut()>(reps: u32, mut f: F) -> u128 {
    let mut best = u128::MAX;
    for _ in 0..reps {
        let start = Instant::now();
        f();
        best = best.min(start.elapsed().as_nanos());
    }
    best
}

/// Cheap deterministic fill so benchmark inputs need no RNG pass.
fn patterned_vec(n: usize, salt: usize) -> Vec<f64> {
    (0..n).map(|i| ((i * 31 + salt * 17) % 97) as f64 / 97.0 - 0.5).collect()
}

fn patterned_matrix(rows: usize, cols: usize, salt: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for i in 0..rows {
        let row = m.row_mut(i);
        for (j, x) in row.iter_mut().enumerate() {
            *x = ((i * 13 + j * 7 + salt) % 101) as f64 / 101.0 - 0.5;
        }
    }
    m
}

/// Times every [`BenchOp`] at every requested size, serial (one worker,
/// inline) versus the plan's worker count, with the plan's reduction mode
/// in both arms so the ratio isolates the threading benefit. Matrices are
/// allocated per cell and dropped before the next so peak memory is one
/// N×N block.
pub fn benchmark(sizes: &[usize], plan: &BatchPlan) -> Result<BenchReport> {
    plan.validate()?;
    let serial_plan = BatchPlan { worker_count: 1, ..*plan };
    let mut report = BenchReport::default();
    for &n in sizes {
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "sizes",
                reason: "benchmark size must be at least 1".to_string(),
            });
        }
        for op in BenchOp::ALL {
            let (serial_ns, parallel_ns) = match op {
                BenchOp::Prediction => {
                    let coeffs = patterned_vec(n, 1);
                    let rows = patterned_matrix(n, n, 2);
                    let s = time_best(BENCH_REPS, || {
                        std::hint::black_box(
                            batch_predict(&coeffs, &rows, 0.05, &serial_plan).unwrap(),
                        );
                    });
                    let p = time_best(BENCH_REPS, || {
                        std::hint::black_box(batch_predict(&coeffs, &rows, 0.05, plan).unwrap());
                    });
                    (s, p)
                }
                BenchOp::LocalFitness => {
                    let kvec = patterned_vec(n, 3);
                    let inv = patterned_matrix(n, n, 4);
                    let s = time_best(BENCH_REPS, || {
                        std::hint::black_box(quadratic_form(&kvec, &inv, &serial_plan).unwrap());
                    });
                    let p = time_best(BENCH_REPS, || {
                        std::hint::black_box(quadratic_form(&kvec, &inv, plan).unwrap());
                    });
                    (s, p)
                }
                BenchOp::SvAddition | BenchOp::SvRemoval => {
                    // Same element kernel, opposite sign roles: the additive
                    // outer product of bordering vs. the deletion downdate.
                    let scale = if op == BenchOp::SvAddition { -0.5 } else { 0.8 };
                    let u = patterned_vec(n, 5);
                    let v = patterned_vec(n, 6);
                    let mut base = patterned_matrix(n, n, 7);
                    let s = time_best(BENCH_REPS, || {
                        rank1_update_in_place(&mut base, &u, &v, scale, &serial_plan).unwrap();
                        std::hint::black_box(base.at(0, 0));
                    });
                    let p = time_best(BENCH_REPS, || {
                        rank1_update_in_place(&mut base, &u, &v, scale, plan).unwrap();
                        std::hint::black_box(base.at(0, 0));
                    });
                    (s, p)
                }
            };
            let speedup = serial_ns as f64 / parallel_ns.max(1) as f64;
            report.rows.push(BenchRow { n, op, serial_ns, parallel_ns, speedup });
        }
    }
    Ok(report)
}
