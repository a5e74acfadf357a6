//! File formats and stream sources: tick-file parsing/writing, yield-curve
//! files, the synthetic scenario generator, and results persistence.
//!
//! Tick files hold one record per line,
//! `timestamp_us,side,quote,strike,maturity_years,price,underlying` with
//! `side ∈ {C,P}` and `quote ∈ {B,A}`; records must be non-decreasing in
//! timestamp. Curve files hold `tenor_years,rate` lines. Blank lines and
//! `#` comments are ignored in both.

pub mod results;
pub mod synth;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ivs::{OptionSide, OptionTick, QuoteSide, YieldCurve};

fn parse_err(origin: &str, line: u64, reason: impl Into<String>) -> Error {
    Error::Parse { origin: origin.to_string(), line, reason: reason.into() }
}

fn parse_field<T: std::str::FromStr>(
    tok: &str,
    what: &str,
    origin: &str,
    line: u64,
) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    tok.trim()
        .parse::<T>()
        .map_err(|e| parse_err(origin, line, format!("bad {what} `{tok}`: {e}")))
}

/// Parses a tick stream from any reader, enforcing timestamp order.
pub fn read_ticks<R: Read>(reader: R, origin: &str) -> Result<Vec<OptionTick>> {
    let mut ticks = Vec::new();
    let mut prev_ts = i64::MIN;
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = idx as u64 + 1;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = body.split(',').collect();
        if fields.len() != 7 {
            return Err(parse_err(
                origin,
                lineno,
                format!("expected 7 comma-separated fields, got {}", fields.len()),
            ));
        }
        let timestamp_us: i64 = parse_field(fields[0], "timestamp_us", origin, lineno)?;
        let side = OptionSide::from_code(fields[1].trim())
            .ok_or_else(|| parse_err(origin, lineno, format!("bad side `{}`", fields[1])))?;
        let quote = QuoteSide::from_code(fields[2].trim())
            .ok_or_else(|| parse_err(origin, lineno, format!("bad quote `{}`", fields[2])))?;
        let tick = OptionTick {
            timestamp_us,
            side,
            quote,
            strike: parse_field(fields[3], "strike", origin, lineno)?,
            maturity_years: parse_field(fields[4], "maturity_years", origin, lineno)?,
            price: parse_field(fields[5], "price", origin, lineno)?,
            underlying: parse_field(fields[6], "underlying", origin, lineno)?,
        };
        tick.validate().map_err(|e| parse_err(origin, lineno, e.to_string()))?;
        if tick.timestamp_us < prev_ts {
            return Err(Error::StreamOrder {
                position: ticks.len() as u64 + 1,
                prev_us: prev_ts,
                ts_us: tick.timestamp_us,
            });
        }
        prev_ts = tick.timestamp_us;
        ticks.push(tick);
    }
    Ok(ticks)
}

/// Reads a time-ordered tick file.
pub fn parse_ticks<P: AsRef<Path>>(path: P) -> Result<Vec<OptionTick>> {
    let origin = path.as_ref().display().to_string();
    let file = File::open(path.as_ref())?;
    read_ticks(file, &origin)
}

/// Writes ticks in the flat file format. Reals are printed with Rust's
/// shortest round-trip representation, so parse ∘ write is lossless.
pub fn write_ticks<W: Write>(mut w: W, ticks: &[OptionTick]) -> Result<()> {
    for t in ticks {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            t.timestamp_us,
            t.side.code(),
            t.quote.code(),
            t.strike,
            t.maturity_years,
            t.price,
            t.underlying
        )?;
    }
    Ok(())
}

pub fn save_ticks<P: AsRef<Path>>(path: P, ticks: &[OptionTick]) -> Result<()> {
    let file = File::create(path)?;
    write_ticks(BufWriter::new(file), ticks)
}

/// Parses a `tenor_years,rate` curve file into a [`YieldCurve`].
pub fn read_curve<R: Read>(reader: R, origin: &str) -> Result<YieldCurve> {
    let mut tenors = Vec::new();
    let mut rates = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = idx as u64 + 1;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let (tenor_tok, rate_tok) = body
            .split_once(',')
            .ok_or_else(|| parse_err(origin, lineno, "expected `tenor_years,rate`"))?;
        tenors.push(parse_field::<f64>(tenor_tok, "tenor_years", origin, lineno)?);
        rates.push(parse_field::<f64>(rate_tok, "rate", origin, lineno)?);
    }
    YieldCurve::new(tenors, rates)
}

pub fn parse_curve<P: AsRef<Path>>(path: P) -> Result<YieldCurve> {
    let origin = path.as_ref().display().to_string();
    let file = File::open(path.as_ref())?;
    read_curve(file, &origin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_tick_file_is_empty_stream() {
        assert!(read_ticks(&b""[..], "<memory>").unwrap().is_empty());
        assert!(read_ticks(&b"# only a comment\n\n"[..], "<memory>").unwrap().is_empty());
    }

    #[test]
    fn one_line_round_trips_all_fields() {
        let text = "1391439600000000,C,B,1770.5,0.25,19.25,1771\n";
        let ticks = read_ticks(text.as_bytes(), "<memory>").unwrap();
        assert_eq!(ticks.len(), 1);
        let t = &ticks[0];
        assert_eq!(t.timestamp_us, 1_391_439_600_000_000);
        assert_eq!(t.side, OptionSide::Call);
        assert_eq!(t.quote, QuoteSide::Bid);
        assert_eq!(t.strike, 1770.5);
        assert_eq!(t.maturity_years, 0.25);
        assert_eq!(t.price, 19.25);
        assert_eq!(t.underlying, 1771.0);
    }

    #[test]
    fn write_then_parse_is_identity() {
        let ticks = vec![
            OptionTick {
                timestamp_us: 1,
                side: OptionSide::Put,
                quote: QuoteSide::Ask,
                strike: 0.123456789123456789,
                maturity_years: 1.0 / 3.0,
                price: 2.5e-3,
                underlying: 1770.0,
            },
            OptionTick {
                timestamp_us: 2,
                side: OptionSide::Call,
                quote: QuoteSide::Bid,
                strike: 1805.25,
                maturity_years: 0.5,
                price: 31.0,
                underlying: 1770.0,
            },
        ];
        let mut buf = Vec::new();
        write_ticks(&mut buf, &ticks).unwrap();
        let back = read_ticks(&buf[..], "<memory>").unwrap();
        assert_eq!(back, ticks);
    }

    #[test]
    fn malformed_record_reports_line_number() {
        let text = "1,C,B,100,0.25,3,100\nnot-a-tick\n";
        let err = read_ticks(text.as_bytes(), "<memory>").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn decreasing_timestamps_error_at_offending_record() {
        let text = "5,C,B,100,0.25,3,100\n4,C,B,100,0.25,3,100\n";
        let err = read_ticks(text.as_bytes(), "<memory>").unwrap_err();
        match err {
            Error::StreamOrder { position, prev_us, ts_us } => {
                assert_eq!(position, 2);
                assert_eq!(prev_us, 5);
                assert_eq!(ts_us, 4);
            }
            other => panic!("expected order error, got {other:?}"),
        }
    }

    #[test]
    fn equal_timestamps_are_allowed() {
        let text = "5,C,B,100,0.25,3,100\n5,P,A,100,0.25,3,100\n";
        assert_eq!(read_ticks(text.as_bytes(), "<memory>").unwrap().len(), 2);
    }

    #[test]
    fn curve_file_parses_and_validates() {
        let c = read_curve(&b"0.25,0.015\n1.0,0.02\n"[..], "<memory>").unwrap();
        assert!((c.interpolate_rate(0.25) - 0.015).abs() < 1e-15);
        assert!(read_curve(&b"1.0,0.02\n0.5,0.01\n"[..], "<memory>").is_err());
        assert!(read_curve(&b"abc,0.02\n"[..], "<memory>").is_err());
    }
}
