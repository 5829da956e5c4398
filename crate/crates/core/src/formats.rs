//! Image and kernel-bank file formats: portable graymap (P2/P5, maxval 255),
//! integer CSV images, and the kernel bank CSV.

use std::io::Write;
use std::path::Path;

use crate::encoding::{GrayImage, Kernel25, PATCH_LEN};
use crate::error::{Error, Result};
use crate::fmt_num;

/// Header line of the kernel bank CSV.
pub fn kernel_csv_header() -> String {
    let mut cols = vec!["theta_deg".to_string(), "k".to_string(), "sigma".to_string()];
    cols.extend((0..PATCH_LEN).map(|i| format!("v{i}")));
    cols.join(",")
}

pub fn write_kernel_csv<W: Write>(bank: &[Kernel25], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", kernel_csv_header())?;
    for kern in bank {
        let mut fields = vec![fmt_num(kern.theta_deg), fmt_num(kern.k), fmt_num(kern.sigma)];
        fields.extend(kern.values().iter().map(|&v| fmt_num(v)));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Parses a kernel bank CSV. Lines starting with `#` and a header line whose
/// first field is not numeric are skipped.
pub fn parse_kernel_csv(text: &str, origin: &str) -> Result<Vec<Kernel25>> {
    let mut bank = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("theta_deg") {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(origin, format!("line {}: {e}", lineno + 1)))?;
        if fields.len() != 3 + PATCH_LEN {
            return Err(Error::parse(
                origin,
                format!("line {}: expected {} fields, got {}", lineno + 1, 3 + PATCH_LEN, fields.len()),
            ));
        }
        let mut values = [0.0; PATCH_LEN];
        values.copy_from_slice(&fields[3..]);
        bank.push(Kernel25::from_values(values, fields[0], fields[1], fields[2])?);
    }
    Ok(bank)
}

pub fn read_kernel_csv(path: &Path) -> Result<Vec<Kernel25>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_kernel_csv(&text, &path.display().to_string())
}

/// Whitespace tokenizer over PGM header bytes that skips `#` comments.
struct PgmTokens<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> PgmTokens<'a> {
    fn next_token(&mut self) -> Option<&'a [u8]> {
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

    fn next_usize(&mut self, what: &str, origin: &str) -> Result<usize> {
        let tok = self
            .next_token()
            .ok_or_else(|| Error::parse(origin, format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(origin, format!("bad {what}")))
    }
}

/// Decodes a P2 (ASCII) or P5 (binary) graymap with maxval 255.
pub fn parse_pgm(data: &[u8], origin: &str) -> Result<GrayImage> {
    let mut tok = PgmTokens { data, pos: 0 };
    let magic = tok
        .next_token()
        .ok_or_else(|| Error::parse(origin, "empty file"))?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        _ => return Err(Error::parse(origin, "not a P2/P5 graymap")),
    };
    let width = tok.next_usize("width", origin)?;
    let height = tok.next_usize("height", origin)?;
    let maxval = tok.next_usize("maxval", origin)?;
    if maxval != 255 {
        return Err(Error::parse(origin, format!("maxval {maxval} unsupported, need 255")));
    }
    let count = width * height;
    let pixels = if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = tok.pos + 1;
        let raster = data
            .get(start..start + count)
            .ok_or_else(|| Error::parse(origin, "raster shorter than width*height"))?;
        raster.to_vec()
    } else {
        let mut px = Vec::with_capacity(count);
        for _ in 0..count {
            let v = tok.next_usize("pixel", origin)?;
            if v > 255 {
                return Err(Error::parse(origin, format!("pixel {v} exceeds maxval")));
            }
            px.push(v as u8);
        }
        px
    };
    GrayImage::new(width, height, pixels)
}

/// Parses a CSV of integers in [0, 255], one image row per line.
pub fn parse_csv_image(text: &str, origin: &str) -> Result<GrayImage> {
    let mut rows: Vec<Vec<u8>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                let v: i64 = f
                    .trim()
                    .parse()
                    .map_err(|e| Error::parse(origin, format!("line {}: {e}", lineno + 1)))?;
                u8::try_from(v).map_err(|_| {
                    Error::parse(origin, format!("line {}: pixel {v} outside [0, 255]", lineno + 1))
                })
            })
            .collect::<Result<Vec<u8>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(origin, format!("line {}: ragged row", lineno + 1)));
            }
        }
        rows.push(row);
    }
    let height = rows.len();
    let width = rows.first().map_or(0, |r| r.len());
    GrayImage::new(width, height, rows.concat())
}

/// Loads an image, choosing the decoder from the file content: graymaps
/// start with `P2`/`P5`, anything else is read as CSV.
pub fn read_image(path: &Path) -> Result<GrayImage> {
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    if data.starts_with(b"P2") || data.starts_with(b"P5") {
        parse_pgm(&data, &origin)
    } else {
        let text = String::from_utf8(data).map_err(|_| Error::parse(&origin, "not UTF-8 text"))?;
        parse_csv_image(&text, &origin)
    }
}

pub fn encode_pgm(image: &GrayImage, binary: bool) -> Vec<u8> {
    let magic = if binary { "P5" } else { "P2" };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    if binary {
        out.extend_from_slice(image.pixels());
    } else {
        for row in image.pixels().chunks(image.width()) {
            let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
            out.extend_from_slice(line.join(" ").as_bytes());
            out.push(b'\n');
        }
    }
    out
}
