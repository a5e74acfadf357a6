//! Replay-results persistence: `ivsresults v1`.
//!
//! One text file carries a whole replay — run-level totals, pooled
//! per-side metrics, one `row` line per emitted interval, and optional
//! `grid` lines holding the four per-side surface snapshots. All reals
//! are written with 17 significant digits, so a load reproduces the saved
//! run bit for bit.
//!
//! Layout:
//!
//! ```text
//! ivsresults v1 algo=<label> strikes=<k1;k2;…> maturities=<t1;…> f_ref=<v>
//! summary,<intervals>,<ticks_seen>,<processed>,<skipped_iv>,<filtered_moneyness>
//! side,<label>,<observations>,<mape>,<rmse>,<final_sv_count>            (×4)
//! row,<index>,<end_ts_us>,<skipped_iv>,<filtered>,<obs,mape,rmse,sv>×4
//! grid,<index>,<side_label>,<v1>,<v2>,…                                 (×4, optional)
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ivs::online::{
    IntervalRecord, RunResult, RunSummary, SideIntervalMetrics, SideSummary,
};
use crate::ivs::{IvsGrid, ModelSide};

const HEADER_TAG: &str = "ivsresults v1";

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Everything the file format records besides the run itself.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultsMeta {
    pub algo: String,
    pub strikes: Vec<f64>,
    pub maturities: Vec<f64>,
    pub f_ref: f64,
}

/// A parsed results file.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedResults {
    pub meta: ResultsMeta,
    pub result: RunResult,
}

/// Writes a replay in `ivsresults v1` form. Grid snapshots are bulky, so
/// they are written only when `with_grids` is set (and a record has them).
pub fn write_results<W: Write>(
    writer: &mut W,
    meta: &ResultsMeta,
    result: &RunResult,
    with_grids: bool,
) -> Result<()> {
    let strikes = meta
        .strikes
        .iter()
        .map(|v| fmt(*v))
        .collect::<Vec<_>>()
        .join(";");
    let maturities = meta
        .maturities
        .iter()
        .map(|v| fmt(*v))
        .collect::<Vec<_>>()
        .join(";");
    writeln!(
        writer,
        "{HEADER_TAG} algo={} strikes={} maturities={} f_ref={}",
        meta.algo,
        strikes,
        maturities,
        fmt(meta.f_ref)
    )?;
    let s = &result.summary;
    writeln!(
        writer,
        "summary,{},{},{},{},{}",
        s.intervals, s.ticks_seen, s.processed, s.skipped_iv, s.filtered_moneyness
    )?;
    for side in ModelSide::ALL {
        let ss = &s.sides[side.index()];
        writeln!(
            writer,
            "side,{},{},{},{},{}",
            side.label(),
            ss.observations,
            fmt(ss.mape),
            fmt(ss.rmse),
            ss.final_sv_count
        )?;
    }
    for record in &result.records {
        let mut line = format!(
            "row,{},{},{},{}",
            record.index, record.end_timestamp_us, record.skipped_iv, record.filtered_moneyness
        );
        for side in ModelSide::ALL {
            let m = &record.sides[side.index()];
            line.push_str(&format!(
                ",{},{},{},{}",
                m.observations,
                fmt(m.mape),
                fmt(m.rmse),
                m.sv_count
            ));
        }
        writeln!(writer, "{line}")?;
        if with_grids {
            if let Some(grids) = &record.grids {
                for side in ModelSide::ALL {
                    let grid = &grids[side.index()];
                    let values = grid
                        .values()
                        .iter()
                        .map(|v| fmt(*v))
                        .collect::<Vec<_>>()
                        .join(",");
                    writeln!(writer, "grid,{},{},{}", record.index, side.label(), values)?;
                }
            }
        }
    }
    Ok(())
}

pub fn save_results(
    path: impl AsRef<Path>,
    meta: &ResultsMeta,
    result: &RunResult,
    with_grids: bool,
) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_results(&mut writer, meta, result, with_grids)?;
    writer.flush()?;
    Ok(())
}

fn parse_err(origin: &str, line: u64, reason: impl Into<String>) -> Error {
    Error::Parse { origin: origin.to_string(), line, reason: reason.into() }
}

fn field<T: std::str::FromStr>(
    origin: &str,
    line: u64,
    name: &str,
    raw: &str,
) -> Result<T> {
    raw.trim().parse().map_err(|_| {
        parse_err(origin, line, format!("invalid {name} value {raw:?}"))
    })
}

fn real_list(origin: &str, line: u64, name: &str, raw: &str) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(parse_err(origin, line, format!("empty {name} list")));
    }
    raw.split(';').map(|tok| field(origin, line, name, tok)).collect()
}

/// Reads an `ivsresults v1` stream back into a run plus its metadata.
pub fn read_results<R: Read>(reader: R, origin: &str) -> Result<LoadedResults> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| parse_err(origin, 1, "empty results file"))?;
    if !header.starts_with(HEADER_TAG)
        || !header[HEADER_TAG.len()..].starts_with(' ')
    {
        return Err(Error::VersionMismatch {
            expected: HEADER_TAG,
            found: header.chars().take(64).collect(),
        });
    }
    let mut algo = None;
    let mut strikes = None;
    let mut maturities = None;
    let mut f_ref = None;
    for token in header[HEADER_TAG.len()..].split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| parse_err(origin, 1, format!("malformed header token {token:?}")))?;
        match key {
            "algo" => algo = Some(value.to_string()),
            "strikes" => strikes = Some(real_list(origin, 1, "strikes", value)?),
            "maturities" => maturities = Some(real_list(origin, 1, "maturities", value)?),
            "f_ref" => f_ref = Some(field(origin, 1, "f_ref", value)?),
            _ => return Err(parse_err(origin, 1, format!("unknown header key {key:?}"))),
        }
    }
    let meta = ResultsMeta {
        algo: algo.ok_or_else(|| parse_err(origin, 1, "header missing algo"))?,
        strikes: strikes.ok_or_else(|| parse_err(origin, 1, "header missing strikes"))?,
        maturities: maturities
            .ok_or_else(|| parse_err(origin, 1, "header missing maturities"))?,
        f_ref: f_ref.ok_or_else(|| parse_err(origin, 1, "header missing f_ref"))?,
    };
    let n_strikes = meta.strikes.len();
    let n_maturities = meta.maturities.len();
    let n_points = n_strikes * n_maturities;

    let mut summary: Option<RunSummary> = None;
    let mut side_summaries: [Option<SideSummary>; 4] = [None, None, None, None];
    let mut records: Vec<IntervalRecord> = Vec::new();
    let mut pending_grids: Vec<(usize, [Option<IvsGrid>; 4])> = Vec::new();

    let mut line_no = 1u64;
    for line in lines {
        let line = line?;
        line_no += 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let tag = parts.next().unwrap_or("");
        let rest: Vec<&str> = parts.collect();
        match tag {
            "summary" => {
                if rest.len() != 5 {
                    return Err(parse_err(
                        origin,
                        line_no,
                        format!("summary line needs 5 fields, got {}", rest.len()),
                    ));
                }
                summary = Some(RunSummary {
                    intervals: field(origin, line_no, "intervals", rest[0])?,
                    ticks_seen: field(origin, line_no, "ticks_seen", rest[1])?,
                    processed: field(origin, line_no, "processed", rest[2])?,
                    skipped_iv: field(origin, line_no, "skipped_iv", rest[3])?,
                    filtered_moneyness: field(origin, line_no, "filtered_moneyness", rest[4])?,
                    sides: Default::default(),
                });
            }
            "side" => {
                if rest.len() != 5 {
                    return Err(parse_err(
                        origin,
                        line_no,
                        format!("side line needs 5 fields, got {}", rest.len()),
                    ));
                }
                let side = ModelSide::from_label(rest[0]).ok_or_else(|| {
                    parse_err(origin, line_no, format!("unknown side label {:?}", rest[0]))
                })?;
                side_summaries[side.index()] = Some(SideSummary {
                    observations: field(origin, line_no, "observations", rest[1])?,
                    mape: field(origin, line_no, "mape", rest[2])?,
                    rmse: field(origin, line_no, "rmse", rest[3])?,
                    final_sv_count: field(origin, line_no, "final_sv_count", rest[4])?,
                });
            }
            "row" => {
                if rest.len() != 4 + 16 {
                    return Err(parse_err(
                        origin,
                        line_no,
                        format!("row line needs 20 fields, got {}", rest.len()),
                    ));
                }
                let mut sides: [SideIntervalMetrics; 4] = Default::default();
                for (i, chunk) in rest[4..].chunks(4).enumerate() {
                    sides[i] = SideIntervalMetrics {
                        observations: field(origin, line_no, "observations", chunk[0])?,
                        mape: field(origin, line_no, "mape", chunk[1])?,
                        rmse: field(origin, line_no, "rmse", chunk[2])?,
                        sv_count: field(origin, line_no, "sv_count", chunk[3])?,
                    };
                }
                records.push(IntervalRecord {
                    index: field(origin, line_no, "index", rest[0])?,
                    end_timestamp_us: field(origin, line_no, "end_timestamp_us", rest[1])?,
                    sides,
                    skipped_iv: field(origin, line_no, "skipped_iv", rest[2])?,
                    filtered_moneyness: field(origin, line_no, "filtered_moneyness", rest[3])?,
                    grids: None,
                });
            }
            "grid" => {
                if rest.len() != 2 + n_points {
                    return Err(parse_err(
                        origin,
                        line_no,
                        format!(
                            "grid line needs {} values for a {}x{} lattice, got {}",
                            n_points,
                            n_strikes,
                            n_maturities,
                            rest.len().saturating_sub(2)
                        ),
                    ));
                }
                let index: usize = field(origin, line_no, "index", rest[0])?;
                let side = ModelSide::from_label(rest[1]).ok_or_else(|| {
                    parse_err(origin, line_no, format!("unknown side label {:?}", rest[1]))
                })?;
                let values = rest[2..]
                    .iter()
                    .map(|tok| field(origin, line_no, "grid value", tok))
                    .collect::<Result<Vec<f64>>>()?;
                let grid = IvsGrid::new(n_strikes, n_maturities, values)?;
                match pending_grids.iter_mut().find(|(i, _)| *i == index) {
                    Some((_, slots)) => slots[side.index()] = Some(grid),
                    None => {
                        let mut slots: [Option<IvsGrid>; 4] = [None, None, None, None];
                        slots[side.index()] = Some(grid);
                        pending_grids.push((index, slots));
                    }
                }
            }
            other => {
                return Err(parse_err(origin, line_no, format!("unknown line tag {other:?}")));
            }
        }
    }

    let mut summary = summary.ok_or_else(|| {
        parse_err(origin, line_no, "results file has no summary line")
    })?;
    for side in ModelSide::ALL {
        summary.sides[side.index()] = side_summaries[side.index()].clone().ok_or_else(|| {
            parse_err(
                origin,
                line_no,
                format!("results file has no side line for {}", side.label()),
            )
        })?;
    }
    for (index, slots) in pending_grids {
        let record = records.iter_mut().find(|r| r.index == index).ok_or_else(|| {
            parse_err(origin, line_no, format!("grid lines for unknown row index {index}"))
        })?;
        let mut grids = Vec::with_capacity(4);
        for (i, slot) in slots.into_iter().enumerate() {
            grids.push(slot.ok_or_else(|| {
                parse_err(
                    origin,
                    line_no,
                    format!(
                        "row {index} is missing a {} grid line",
                        ModelSide::ALL[i].label()
                    ),
                )
            })?);
        }
        record.grids = Some(grids.try_into().expect("exactly four grids collected"));
    }

    Ok(LoadedResults { meta, result: RunResult { records, summary } })
}

pub fn load_results(path: impl AsRef<Path>) -> Result<LoadedResults> {
    let origin = path.as_ref().display().to_string();
    read_results(File::open(path.as_ref())?, &origin)
}
