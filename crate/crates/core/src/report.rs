//! Writes a correction trace to disk.
//!
//! Layout under the output directory:
//! `trace.json`, `heatmaps/t{t}_pair{i}.pgm` with the matching raw
//! disparities in `.pfm`, and `depth/v1_{i}_{initial,final}.pfm`.

use std::path::{Path, PathBuf};

use crate::correction::CorrectionTrace;
use crate::error::{Error, Result};
use crate::io::{create_dir, encode_pfm, heatmap_values, write_depth_pfm, write_json, write_pgm16};

pub fn heatmap_stem(t: usize, pair: usize) -> String {
    format!("t{t:06}_pair{pair}")
}

/// Returns the written paths in creation order.
pub fn emit_trace(trace: &CorrectionTrace, dir: &Path, clip: f64) -> Result<Vec<PathBuf>> {
    if trace.records.is_empty() && trace.checkpoints.is_empty() {
        return Err(Error::EmptyInput("trace has no iterations"));
    }
    if !(clip > 0.0) {
        return Err(Error::Config(format!("heatmap clip must be > 0, got {clip}")));
    }
    let heat_dir = dir.join("heatmaps");
    let depth_dir = dir.join("depth");
    create_dir(&heat_dir)?;
    create_dir(&depth_dir)?;
    let mut written = Vec::new();

    let path = dir.join("trace.json");
    write_json(&path, trace)?;
    written.push(path);

    for cp in &trace.checkpoints {
        for (i, map) in cp.heatmaps.iter().enumerate() {
            let stem = heatmap_stem(cp.t, i);
            let pgm = heat_dir.join(format!("{stem}.pgm"));
            write_pgm16(&pgm, map.width, map.height, &heatmap_values(&map.values, clip))?;
            let pfm = heat_dir.join(format!("{stem}.pfm"));
            let raw: Vec<f32> = map.values.iter().map(|v| *v as f32).collect();
            std::fs::write(&pfm, encode_pfm(map.width, map.height, &raw)).map_err(|e| Error::io(&pfm, e))?;
            written.push(pgm);
            written.push(pfm);
        }
    }
    for (tag, depths) in [("initial", &trace.initial_depths), ("final", &trace.final_depths)] {
        for (i, d) in depths.iter().enumerate() {
            let path = depth_dir.join(format!("v1_{i}_{tag}.pfm"));
            write_depth_pfm(&path, d)?;
            written.push(path);
        }
    }
    Ok(written)
}
