//! File formats: PFM depth, 16-bit PGM, CVFS feature stacks and JSONL matches.
//!
//! CVFS layout, little-endian: magic `CVFS`, `u32` layer count, then per
//! layer `u32` id, height, width, channels followed by `f32` data in
//! `[y][x][c]` order.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::correlation::{CorrelationVolume, RawCorrespondenceField, RawMatch};
use crate::error::{Error, Result};
use crate::filter::Correspondence;
use crate::maps::{DepthMap, OpacityMap};
use crate::scene::{FeatureLayer, FeatureStack};

const CVFS_MAGIC: &[u8; 4] = b"CVFS";

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Greyscale PFM with little-endian scale and rows stored bottom to top.
pub fn encode_pfm(width: usize, height: usize, values: &[f32]) -> Vec<u8> {
    let mut out = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(values.len() * 4);
    for y in (0..height).rev() {
        for v in &values[y * width..(y + 1) * width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Splits `n` whitespace-separated header tokens off `bytes`, consuming one
/// trailing whitespace byte.
fn header_tokens(bytes: &[u8], n: usize) -> Result<(Vec<String>, &[u8])> {
    let mut tokens = Vec::with_capacity(n);
    let mut i = 0;
    while tokens.len() < n {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(Error::Format("truncated header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    if i >= bytes.len() {
        return Err(Error::Format("missing data after header".into()));
    }
    Ok((tokens, &bytes[i + 1..]))
}

fn parse_dim(s: &str) -> Result<usize> {
    s.parse().map_err(|_| Error::Format(format!("bad dimension {s:?}")))
}

pub fn decode_pfm(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    let (t, data) = header_tokens(bytes, 4)?;
    if t[0] != "Pf" {
        return Err(Error::Format(format!("expected greyscale PFM, got {:?}", t[0])));
    }
    let (w, h) = (parse_dim(&t[1])?, parse_dim(&t[2])?);
    let scale: f64 = t[3].parse().map_err(|_| Error::Format(format!("bad PFM scale {:?}", t[3])))?;
    if data.len() != w * h * 4 {
        return Err(Error::Format(format!("PFM payload {} bytes, expected {}", data.len(), w * h * 4)));
    }
    let word = |c: &[u8]| {
        let b = [c[0], c[1], c[2], c[3]];
        if scale < 0.0 {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        }
    };
    let mut values = vec![0f32; w * h];
    for (row, chunk) in data.chunks_exact(w * 4).enumerate() {
        let y = h - 1 - row;
        for (x, c) in chunk.chunks_exact(4).enumerate() {
            values[y * w + x] = word(c);
        }
    }
    Ok((w, h, values))
}

pub fn write_depth_pfm(path: &Path, depth: &DepthMap) -> Result<()> {
    write(path, &encode_pfm(depth.width, depth.height, &depth.values))
}

pub fn read_depth_pfm(path: &Path) -> Result<DepthMap> {
    let (w, h, values) = decode_pfm(&read(path)?)?;
    Ok(DepthMap::new(w, h, values))
}

/// Binary 16-bit PGM, big-endian samples, maxval 65535.
pub fn encode_pgm16(width: usize, height: usize, values: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for v in values {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn decode_pgm16(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    let (t, data) = header_tokens(bytes, 4)?;
    if t[0] != "P5" || t[3] != "65535" {
        return Err(Error::Format("expected 16-bit binary PGM".into()));
    }
    let (w, h) = (parse_dim(&t[1])?, parse_dim(&t[2])?);
    if data.len() != w * h * 2 {
        return Err(Error::Format(format!("PGM payload {} bytes, expected {}", data.len(), w * h * 2)));
    }
    let values = data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Ok((w, h, values))
}

/// `round(clamp(v, 0, 1) * 65535)`
pub fn unit_to_u16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

pub fn write_opacity_pgm(path: &Path, opacity: &OpacityMap) -> Result<()> {
    let values: Vec<u16> = opacity.values.iter().map(|v| unit_to_u16(*v as f64)).collect();
    write(path, &encode_pgm16(opacity.width, opacity.height, &values))
}

pub fn read_opacity_pgm(path: &Path) -> Result<OpacityMap> {
    let (w, h, values) = decode_pgm16(&read(path)?)?;
    Ok(OpacityMap::new(w, h, values.iter().map(|v| *v as f32 / 65535.0).collect()))
}

/// Disparity heatmap: `round(min(1, d / clip) * 65535)`.
pub fn heatmap_values(disparity: &[f64], clip: f64) -> Vec<u16> {
    disparity.iter().map(|d| unit_to_u16((d / clip).min(1.0))).collect()
}

pub fn write_pgm16(path: &Path, width: usize, height: usize, values: &[u16]) -> Result<()> {
    write(path, &encode_pgm16(width, height, values))
}

pub fn read_pgm16(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    decode_pgm16(&read(path)?)
}

pub fn encode_cvfs(stack: &FeatureStack) -> Vec<u8> {
    let mut out = CVFS_MAGIC.to_vec();
    out.extend_from_slice(&(stack.layers.len() as u32).to_le_bytes());
    for l in &stack.layers {
        for v in [l.layer_id, l.height as u32, l.width as u32, l.channels as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &l.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_cvfs(bytes: &[u8]) -> Result<FeatureStack> {
    let mut cursor = bytes;
    let mut take = |n: usize| -> Result<&[u8]> {
        if cursor.len() < n {
            return Err(Error::Format("truncated CVFS file".into()));
        }
        let (head, rest) = cursor.split_at(n);
        cursor = rest;
        Ok(head)
    };
    if take(4)? != CVFS_MAGIC {
        return Err(Error::Format("missing CVFS magic".into()));
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes([b[0], b[1], b[2], b[3]]);
    let count = u32_at(take(4)?);
    let mut layers = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let head = take(16)?;
        let (id, h, w, c) = (
            u32_at(&head[0..]),
            u32_at(&head[4..]) as usize,
            u32_at(&head[8..]) as usize,
            u32_at(&head[12..]) as usize,
        );
        let payload = take(h * w * c * 4)?;
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        layers.push(FeatureLayer::new(id, h, w, c, data)?);
    }
    if !cursor.is_empty() {
        return Err(Error::Format("trailing bytes after CVFS layers".into()));
    }
    FeatureStack::new(layers)
}

pub fn write_cvfs(path: &Path, stack: &FeatureStack) -> Result<()> {
    write(path, &encode_cvfs(stack))
}

pub fn read_cvfs(path: &Path) -> Result<FeatureStack> {
    decode_cvfs(&read(path)?)
}

/// Debug dump of a volume as a one-layer CVFS of shape `(h*w, h*w, 1)`.
pub fn write_volume_cvfs(path: &Path, vol: &CorrelationVolume) -> Result<()> {
    let n = vol.side();
    let data = vol.values.iter().map(|v| *v as f32).collect();
    let layer = FeatureLayer::new(0, n, n, 1, data)?;
    write_cvfs(path, &FeatureStack::new(vec![layer])?)
}

/// One filtered match per JSONL line; pixels are `[x, y]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchRecord {
    pub sp: [usize; 2],
    pub tp: [f64; 2],
    pub conf: f64,
    pub mask: u8,
}

impl From<&Correspondence> for MatchRecord {
    fn from(m: &Correspondence) -> Self {
        Self {
            sp: m.source,
            tp: [m.target.x, m.target.y],
            conf: m.conf,
            mask: m.stages,
        }
    }
}

impl From<MatchRecord> for Correspondence {
    fn from(r: MatchRecord) -> Self {
        Self {
            source: r.sp,
            target: Vector2::new(r.tp[0], r.tp[1]),
            conf: r.conf,
            stages: r.mask,
        }
    }
}

pub fn encode_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, &item)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn decode_jsonl<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for line in BufReader::new(bytes).lines() {
        let line = line.map_err(|e| Error::Format(e.to_string()))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn write_correspondences(path: &Path, matches: &[Correspondence]) -> Result<()> {
    write(path, &encode_jsonl(matches.iter().map(MatchRecord::from))?)
}

pub fn read_correspondences(path: &Path) -> Result<Vec<Correspondence>> {
    let records: Vec<MatchRecord> = decode_jsonl(&read(path)?)?;
    Ok(records.into_iter().map(Correspondence::from).collect())
}

pub fn write_raw_field(path: &Path, field: &RawCorrespondenceField) -> Result<()> {
    write(path, &encode_jsonl(&field.matches)?)
}

pub fn read_raw_matches(path: &Path) -> Result<Vec<RawMatch>> {
    decode_jsonl(&read(path)?)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.write_all(b"\n").expect("writing to a Vec");
    write(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&read(path)?)?)
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}
