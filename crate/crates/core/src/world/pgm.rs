//! Binary PGM (P5) grids with a JSON sidecar carrying the metadata.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{OccupancyGrid, VertexId, WorldError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldMeta {
    pub resolution_m: f64,
    pub start_vertex: VertexId,
    pub goal_vertex: VertexId,
    pub generator: String,
    pub seed: u64,
}

/// Raw PGM raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl Pgm {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        if self.maxval < 256 {
            out.extend(self.samples.iter().map(|&s| s as u8));
        } else {
            for &s in &self.samples {
                out.extend_from_slice(&s.to_be_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WorldError> {
        let bad = |m: &str| WorldError::Format(m.to_string());
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            // skip whitespace and comments
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ascii"))?);
        }
        if fields[0] != "P5" {
            return Err(bad("not a binary PGM"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
        let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
        if maxval == 0 || maxval > u16::MAX as usize {
            return Err(bad("maxval out of range"));
        }
        // exactly one whitespace byte separates header and raster
        pos += 1;
        let n = width * height;
        let wide = maxval >= 256;
        let need = if wide { 2 * n } else { n };
        let raster = bytes.get(pos..pos + need).ok_or_else(|| bad("truncated raster"))?;
        let samples: Vec<u16> = if wide {
            raster
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        } else {
            raster.iter().map(|&b| b as u16).collect()
        };
        if samples.iter().any(|&s| s as usize > maxval) {
            return Err(bad("sample exceeds maxval"));
        }
        Ok(Self {
            width,
            height,
            maxval: maxval as u16,
            samples,
        })
    }
}

pub fn sidecar_path(pgm: &Path) -> PathBuf {
    pgm.with_extension("json")
}

pub fn write_world(path: &Path, grid: &OccupancyGrid, meta: &WorldMeta) -> Result<(), WorldError> {
    let pgm = Pgm {
        width: grid.width(),
        height: grid.height(),
        maxval: 1,
        samples: grid.cells().iter().map(|&c| c as u16).collect(),
    };
    fs::File::create(path)?.write_all(&pgm.encode())?;
    let json = serde_json::to_string_pretty(meta).map_err(|e| WorldError::Format(e.to_string()))?;
    fs::write(sidecar_path(path), json)?;
    Ok(())
}

pub fn read_world(path: &Path) -> Result<(OccupancyGrid, WorldMeta), WorldError> {
    let pgm = Pgm::decode(&fs::read(path)?)?;
    if pgm.maxval != 1 {
        return Err(WorldError::Format(format!(
            "occupancy maxval must be 1, got {}",
            pgm.maxval
        )));
    }
    let meta: WorldMeta =
        serde_json::from_slice(&fs::read(sidecar_path(path))?).map_err(|e| WorldError::Format(e.to_string()))?;
    let cells = pgm.samples.iter().map(|&s| s as u8).collect();
    let grid = OccupancyGrid::from_cells(pgm.width, pgm.height, meta.resolution_m, cells)?;
    Ok((grid, meta))
}
