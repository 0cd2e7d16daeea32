//! Two-line element set parsing and formatting.
//!
//! Standard 69-character lines with mod-10 checksums. Parsing keeps the raw
//! lines around so the propagator can hand them to SGP4 untouched; formatting
//! is used by the simulator to synthesize catalogs that survive a round trip
//! through any conforming parser.

use chrono::{DateTime, Datelike, Duration, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One parsed two-line element set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TleRecord {
    pub norad_id: u32,
    pub intl_designator: String,
    pub epoch: DateTime<Utc>,
    /// Mean motion, revolutions per day.
    pub mean_motion: f64,
    pub eccentricity: f64,
    /// Degrees.
    pub inclination: f64,
    /// Right ascension of the ascending node, degrees.
    pub raan: f64,
    /// Argument of perigee, degrees.
    pub arg_perigee: f64,
    /// Degrees.
    pub mean_anomaly: f64,
    /// Drag term, 1/earth-radii.
    pub bstar: f64,
    pub line1: String,
    pub line2: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TleError {
    #[error("line {line}: checksum mismatch (expected {expected}, computed {computed})")]
    Checksum {
        line: usize,
        expected: char,
        computed: u32,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: element line 1 without a matching line 2")]
    Truncated { line: usize },
}

/// Result of parsing a catalog: valid records in file order plus per-record
/// errors with the line numbers they occurred on. Nothing is silently dropped.
#[derive(Debug, Default)]
pub struct ParsedCatalog {
    pub records: Vec<TleRecord>,
    pub errors: Vec<TleError>,
}

/// Mod-10 checksum over the first 68 characters: digits count as themselves,
/// '-' counts as 1, everything else as 0.
pub fn checksum(line: &str) -> u32 {
    line.chars()
        .take(68)
        .map(|c| match c {
            '0'..='9' => c as u32 - '0' as u32,
            '-' => 1,
            _ => 0,
        })
        .sum::<u32>()
        % 10
}

fn check_line(line: &str, line_no: usize) -> Result<(), TleError> {
    if line.len() < 69 {
        return Err(TleError::Malformed {
            line: line_no,
            message: format!("expected 69 characters, got {}", line.len()),
        });
    }
    let expected = line.as_bytes()[68] as char;
    let computed = checksum(line);
    if expected.to_digit(10) != Some(computed) {
        return Err(TleError::Checksum {
            line: line_no,
            expected,
            computed,
        });
    }
    Ok(())
}

fn field<'a>(line: &'a str, range: std::ops::Range<usize>, line_no: usize) -> Result<&'a str, TleError> {
    line.get(range.clone()).ok_or_else(|| TleError::Malformed {
        line: line_no,
        message: format!("missing columns {}..{}", range.start + 1, range.end),
    })
}

fn parse_f64(s: &str, line_no: usize, what: &str) -> Result<f64, TleError> {
    s.trim().parse::<f64>().map_err(|_| TleError::Malformed {
        line: line_no,
        message: format!("unparsable {what} field {s:?}"),
    })
}

fn parse_u32(s: &str, line_no: usize, what: &str) -> Result<u32, TleError> {
    s.trim().parse::<u32>().map_err(|_| TleError::Malformed {
        line: line_no,
        message: format!("unparsable {what} field {s:?}"),
    })
}

/// Exponent notation like " 28098-4" meaning 0.28098e-4.
fn parse_exp(s: &str, line_no: usize, what: &str) -> Result<f64, TleError> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(0.0);
    }
    let bytes = s.as_bytes();
    let (sign, rest) = match bytes[0] {
        b'-' => (-1.0, &s[1..]),
        b'+' => (1.0, &s[1..]),
        _ => (1.0, s),
    };
    // split mantissa digits from the trailing signed exponent digit
    let exp_pos = rest
        .rfind(['-', '+'])
        .ok_or_else(|| TleError::Malformed {
            line: line_no,
            message: format!("unparsable {what} field {s:?}"),
        })?;
    let mantissa = parse_f64(&rest[..exp_pos], line_no, what)?;
    let exponent = parse_f64(&rest[exp_pos..], line_no, what)?;
    let digits = rest[..exp_pos].trim().len() as i32;
    Ok(sign * mantissa * 10f64.powi(exponent as i32 - digits))
}

fn two_digit_year(yy: u32) -> i32 {
    if yy < 57 {
        2000 + yy as i32
    } else {
        1900 + yy as i32
    }
}

fn parse_epoch(s: &str, line_no: usize) -> Result<DateTime<Utc>, TleError> {
    let yy = parse_u32(&s[..2], line_no, "epoch year")?;
    let doy = parse_f64(&s[2..], line_no, "epoch day")?;
    if !(1.0..367.0).contains(&doy) {
        return Err(TleError::Malformed {
            line: line_no,
            message: format!("epoch day-of-year {doy} out of range"),
        });
    }
    let jan1 = Utc
        .with_ymd_and_hms(two_digit_year(yy), 1, 1, 0, 0, 0)
        .single()
        .ok_or_else(|| TleError::Malformed {
            line: line_no,
            message: "invalid epoch year".into(),
        })?;
    let micros = ((doy - 1.0) * 86_400_000_000.0).round() as i64;
    Ok(jan1 + Duration::microseconds(micros))
}

fn parse_pair(
    line1: &str,
    line2: &str,
    line1_no: usize,
    line2_no: usize,
) -> Result<TleRecord, TleError> {
    check_line(line1, line1_no)?;
    check_line(line2, line2_no)?;

    let norad_id = parse_u32(field(line1, 2..7, line1_no)?, line1_no, "catalog number")?;
    let norad_id2 = parse_u32(field(line2, 2..7, line2_no)?, line2_no, "catalog number")?;
    if norad_id != norad_id2 {
        return Err(TleError::Malformed {
            line: line2_no,
            message: format!("catalog number mismatch ({norad_id} vs {norad_id2})"),
        });
    }
    let intl_designator = field(line1, 9..17, line1_no)?.trim().to_string();
    let epoch = parse_epoch(field(line1, 18..32, line1_no)?, line1_no)?;
    let bstar = parse_exp(field(line1, 53..61, line1_no)?, line1_no, "bstar")?;

    let inclination = parse_f64(field(line2, 8..16, line2_no)?, line2_no, "inclination")?;
    let raan = parse_f64(field(line2, 17..25, line2_no)?, line2_no, "raan")?;
    let ecc_digits = field(line2, 26..33, line2_no)?;
    let eccentricity = parse_f64(ecc_digits, line2_no, "eccentricity")? * 1e-7;
    let arg_perigee = parse_f64(field(line2, 34..42, line2_no)?, line2_no, "arg of perigee")?;
    let mean_anomaly = parse_f64(field(line2, 43..51, line2_no)?, line2_no, "mean anomaly")?;
    let mean_motion = parse_f64(field(line2, 52..63, line2_no)?, line2_no, "mean motion")?;

    if !(0.0..1.0).contains(&eccentricity) {
        return Err(TleError::Malformed {
            line: line2_no,
            message: format!("eccentricity {eccentricity} out of [0, 1)"),
        });
    }
    if mean_motion <= 0.0 {
        return Err(TleError::Malformed {
            line: line2_no,
            message: format!("non-positive mean motion {mean_motion}"),
        });
    }

    Ok(TleRecord {
        norad_id,
        intl_designator,
        epoch,
        mean_motion,
        eccentricity,
        inclination,
        raan,
        arg_perigee,
        mean_anomaly,
        bstar,
        line1: line1.to_string(),
        line2: line2.to_string(),
    })
}

/// Parse a catalog of 2-line (optionally name-prefixed 3-line) element sets.
pub fn parse_tle_catalog(text: &str) -> ParsedCatalog {
    let mut out = ParsedCatalog::default();
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches(['\r'])))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();

    let mut i = 0;
    while i < lines.len() {
        let (no, line) = lines[i];
        if line.starts_with("1 ") {
            match lines.get(i + 1) {
                Some(&(no2, line2)) if line2.starts_with("2 ") => {
                    match parse_pair(line, line2, no, no2) {
                        Ok(rec) => out.records.push(rec),
                        Err(e) => out.errors.push(e),
                    }
                    i += 2;
                }
                _ => {
                    out.errors.push(TleError::Truncated { line: no });
                    i += 1;
                }
            }
        } else if line.starts_with("2 ") {
            out.errors.push(TleError::Malformed {
                line: no,
                message: "element line 2 without a preceding line 1".into(),
            });
            i += 1;
        } else {
            // satellite name line; consumed, the pair follows
            i += 1;
        }
    }
    out
}

fn format_exp(value: f64) -> String {
    // " 00000-0" style: signed 5-digit mantissa with implied leading decimal
    // point plus signed single-digit exponent.
    if value == 0.0 {
        return " 00000-0".to_string();
    }
    let sign = if value < 0.0 { '-' } else { ' ' };
    let mut exp = value.abs().log10().floor() as i32 + 1;
    let mut mantissa = (value.abs() / 10f64.powi(exp) * 1e5).round() as i64;
    if mantissa >= 100_000 {
        mantissa /= 10;
        exp += 1;
    }
    let exp_sign = if exp < 0 { '-' } else { '+' };
    format!("{sign}{mantissa:05}{exp_sign}{}", exp.abs())
}

fn format_epoch(epoch: DateTime<Utc>) -> String {
    let jan1 = Utc
        .with_ymd_and_hms(epoch.year(), 1, 1, 0, 0, 0)
        .single()
        .expect("valid year");
    let doy = 1.0 + (epoch - jan1).num_microseconds().unwrap() as f64 / 86_400_000_000.0;
    format!("{:02}{:012.8}", epoch.year() % 100, doy)
}

/// Render a record back into checksummed 69-character lines. Used by the
/// simulator; emitted lines re-parse through [`parse_tle_catalog`].
pub fn format_tle(rec: &TleRecord) -> (String, String) {
    let mut line1 = format!(
        "1 {:05}U {:<8} {} {} {} {} 0  999",
        rec.norad_id,
        rec.intl_designator,
        format_epoch(rec.epoch),
        " .00000000",
        " 00000+0",
        format_exp(rec.bstar),
    );
    let mut line2 = format!(
        "2 {:05} {:8.4} {:8.4} {:07} {:8.4} {:8.4} {:11.8}99999",
        rec.norad_id,
        rec.inclination,
        rec.raan,
        (rec.eccentricity * 1e7).round() as u64,
        rec.arg_perigee,
        rec.mean_anomaly,
        rec.mean_motion,
    );
    line1.truncate(68);
    line2.truncate(68);
    line1.push_str(&checksum(&line1).to_string());
    line2.push_str(&checksum(&line2).to_string());
    (line1, line2)
}

/// Launch year encoded in the international designator (first two digits).
pub fn designator_launch_year(designator: &str) -> Option<i32> {
    let yy: u32 = designator.get(..2)?.parse().ok()?;
    Some(two_digit_year(yy))
}
