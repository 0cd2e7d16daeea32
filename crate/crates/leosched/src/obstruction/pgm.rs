//! PGM ingestion and emission for obstruction maps.
//!
//! Accepts P5 (binary) and P2 (ASCII) at exactly 123x123; any gray value
//! >= 128 counts as lit. Written maps are P5 with 0/255 values so a
//! read/write cycle is byte-identical. Filenames follow
//! `<terminal_id>_<slot_index>_<unix_seconds>.pgm`.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, TimeZone, Utc};
use thiserror::Error;

use super::{ObstructionMap, MAP_SIZE};

pub const LIT_THRESHOLD: u16 = 128;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: filename does not match <terminal>_<slot>_<unix>.pgm")]
    Filename { path: PathBuf },
}

fn format_err(path: &Path, message: impl Into<String>) -> PgmError {
    PgmError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Header tokens, skipping whitespace and `#` comments.
struct Tokens<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn next(&mut self) -> Option<&'a [u8]> {
        loop {
            while self.pos < self.data.len() && self.data[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.data.len() && self.data[self.pos] == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        if self.pos >= self.data.len() {
            return None;
        }
        let start = self.pos;
        while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        Some(&self.data[start..self.pos])
    }

    fn next_usize(&mut self, path: &Path, what: &str) -> Result<usize, PgmError> {
        let tok = self
            .next()
            .ok_or_else(|| format_err(path, format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err(path, format!("unparsable {what}")))
    }
}

/// Parse PGM bytes into a pixel grid (no filename metadata attached).
pub fn parse_pgm(data: &[u8], path: &Path) -> Result<Vec<bool>, PgmError> {
    let mut tokens = Tokens { data, pos: 0 };
    let magic = tokens
        .next()
        .ok_or_else(|| format_err(path, "empty file"))?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        other => {
            return Err(format_err(
                path,
                format!("unsupported magic {:?}", String::from_utf8_lossy(other)),
            ))
        }
    };
    let width = tokens.next_usize(path, "width")?;
    let height = tokens.next_usize(path, "height")?;
    if width != MAP_SIZE || height != MAP_SIZE {
        return Err(format_err(
            path,
            format!("expected {MAP_SIZE}x{MAP_SIZE}, got {width}x{height}"),
        ));
    }
    let maxval = tokens.next_usize(path, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(format_err(path, format!("unsupported maxval {maxval}")));
    }

    let n = MAP_SIZE * MAP_SIZE;
    let mut pixels = Vec::with_capacity(n);
    if binary {
        // single whitespace byte after maxval, then raster
        let raster_start = tokens.pos + 1;
        let raster = data
            .get(raster_start..raster_start + n)
            .ok_or_else(|| format_err(path, "truncated raster"))?;
        pixels.extend(raster.iter().map(|&v| v as u16 >= LIT_THRESHOLD));
    } else {
        for _ in 0..n {
            let v = tokens.next_usize(path, "pixel")?;
            pixels.push(v as u16 >= LIT_THRESHOLD);
        }
    }
    Ok(pixels)
}

/// Metadata decoded from the filename convention.
#[derive(Debug, Clone, PartialEq)]
pub struct MapFileMeta {
    pub terminal_id: String,
    pub slot_index: u32,
    pub captured_at: DateTime<Utc>,
}

/// `<terminal_id>_<slot_index>_<unix_seconds>.pgm`; the terminal id may
/// itself contain underscores, so the two numeric fields bind rightmost.
pub fn parse_filename(path: &Path) -> Result<MapFileMeta, PgmError> {
    let err = || PgmError::Filename {
        path: path.to_path_buf(),
    };
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(err)?;
    let (rest, unix) = stem.rsplit_once('_').ok_or_else(err)?;
    let (terminal_id, slot) = rest.rsplit_once('_').ok_or_else(err)?;
    let unix: i64 = unix.parse().map_err(|_| err())?;
    let slot_index: u32 = slot.parse().map_err(|_| err())?;
    let captured_at = Utc.timestamp_opt(unix, 0).single().ok_or_else(err)?;
    if terminal_id.is_empty() {
        return Err(err());
    }
    Ok(MapFileMeta {
        terminal_id: terminal_id.to_string(),
        slot_index,
        captured_at,
    })
}

pub fn map_filename(terminal_id: &str, slot_index: u32, captured_at: DateTime<Utc>) -> String {
    format!("{terminal_id}_{slot_index}_{}.pgm", captured_at.timestamp())
}

/// Load a map file, taking slot index and capture time from the filename.
pub fn read_map(path: &Path) -> Result<(String, ObstructionMap), PgmError> {
    let meta = parse_filename(path)?;
    let data = fs::read(path).map_err(|source| PgmError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let pixels = parse_pgm(&data, path)?;
    let map = ObstructionMap::from_pixels(pixels, meta.captured_at, meta.slot_index)
        .expect("dimensions checked by parse_pgm");
    Ok((meta.terminal_id, map))
}

/// Serialize as binary P5 with 0/255 values.
pub fn encode_pgm(map: &ObstructionMap) -> Vec<u8> {
    let mut out = format!("P5\n{MAP_SIZE} {MAP_SIZE}\n255\n").into_bytes();
    out.extend(map.pixels().iter().map(|&p| if p { 255u8 } else { 0 }));
    out
}

pub fn write_map(dir: &Path, terminal_id: &str, map: &ObstructionMap) -> Result<PathBuf, PgmError> {
    let path = dir.join(map_filename(terminal_id, map.slot_index, map.captured_at));
    fs::write(&path, encode_pgm(map)).map_err(|source| PgmError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn p5_round_trip_is_byte_identical() {
        let t = Utc.with_ymd_and_hms(2023, 6, 1, 0, 0, 0).unwrap();
        let mut map = ObstructionMap::blank(t, 4);
        map.set(62, 30, true);
        map.set(63, 30, true);
        let bytes = encode_pgm(&map);
        let pixels = parse_pgm(&bytes, Path::new("mem.pgm")).unwrap();
        let map2 = ObstructionMap::from_pixels(pixels, t, 4).unwrap();
        assert_eq!(map, map2);
        assert_eq!(bytes, encode_pgm(&map2));
    }

    #[test]
    fn p2_ascii_accepted() {
        let mut body = String::from("P2\n# comment\n123 123\n255\n");
        for i in 0..MAP_SIZE * MAP_SIZE {
            body.push_str(if i == 500 { "200 " } else { "0 " });
        }
        let pixels = parse_pgm(body.as_bytes(), Path::new("mem.pgm")).unwrap();
        assert_eq!(pixels.iter().filter(|p| **p).count(), 1);
        assert!(pixels[500]);
    }

    #[test]
    fn threshold_at_128() {
        let mut raster = vec![0u8; MAP_SIZE * MAP_SIZE];
        raster[0] = 127;
        raster[1] = 128;
        let mut bytes = format!("P5\n{MAP_SIZE} {MAP_SIZE}\n255\n").into_bytes();
        bytes.extend(&raster);
        let pixels = parse_pgm(&bytes, Path::new("mem.pgm")).unwrap();
        assert!(!pixels[0]);
        assert!(pixels[1]);
    }

    #[test]
    fn wrong_dimensions_rejected() {
        let bytes = b"P5\n10 10\n255\n".to_vec();
        assert!(parse_pgm(&bytes, Path::new("mem.pgm")).is_err());
    }

    #[test]
    fn filename_convention() {
        let meta = parse_filename(Path::new("/x/term_a_12_1700000000.pgm")).unwrap();
        assert_eq!(meta.terminal_id, "term_a");
        assert_eq!(meta.slot_index, 12);
        assert_eq!(meta.captured_at.timestamp(), 1_700_000_000);

        assert!(parse_filename(Path::new("nounderscores.pgm")).is_err());
        assert_eq!(
            map_filename("term_a", 12, meta.captured_at),
            "term_a_12_1700000000.pgm"
        );
    }

    #[test]
    fn write_then_read_file() {
        let dir = tempfile::tempdir().unwrap();
        let t = Utc.with_ymd_and_hms(2023, 6, 1, 0, 0, 15).unwrap();
        let mut map = ObstructionMap::blank(t, 1);
        map.set(40, 41, true);
        let path = write_map(dir.path(), "t0", &map).unwrap();
        let (terminal, map2) = read_map(&path).unwrap();
        assert_eq!(terminal, "t0");
        assert_eq!(map, map2);
    }
}
