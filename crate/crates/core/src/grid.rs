//! Dense `C x H x W` float32 grids and their raw on-disk form.
//!
//! A raw grid file is a single line of JSON (the header) terminated by `\n`,
//! followed by the payload: `C*H*W` little-endian float32 values in C order.
//!
//! ```text
//! {"format":"uvsync-grid","version":1,"dtype":"f32","order":"C","shape":[3,96,96],"meta":{}}\n
//! <payload bytes>
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense single-precision grid in channel-major (C-order) layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

/// One view's latent image for one frame.
pub type LatentGrid = Grid;

impl Grid {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(channels * height * width, data.len()));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Builds a grid by evaluating `f(channel, row, col)` at every cell.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }
    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }
    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }
    /// Number of cells in one channel plane.
    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }
    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }
    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }
    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }
    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn ensure_shape(&self, other: &Grid) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(self.shape(), other.shape()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise map computed in double precision.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v as f64) as f32).collect(),
        }
    }

    /// Elementwise binary op computed in double precision.
    pub fn zip_map(&self, other: &Grid, f: impl Fn(f64, f64) -> f64) -> Result<Grid> {
        self.ensure_shape(other)?;
        Ok(Grid {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a as f64, b as f64) as f32)
                .collect(),
        })
    }

    pub fn max_abs_diff(&self, other: &Grid) -> Result<f64> {
        self.ensure_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .fold(0.0, f64::max))
    }

    /// Little-endian bytes of the payload.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_le_bytes(
        channels: usize,
        height: usize,
        width: usize,
        bytes: &[u8],
    ) -> Result<Self> {
        let n = channels * height * width;
        if bytes.len() != n * 4 {
            return Err(Error::shape(n * 4, bytes.len()));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }
}

pub const GRID_FORMAT: &str = "uvsync-grid";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub format: String,
    pub version: u32,
    pub dtype: String,
    pub order: String,
    pub shape: [usize; 3],
    #[serde(default)]
    pub meta: serde_json::Map<String, serde_json::Value>,
}

impl GridHeader {
    pub fn for_grid(grid: &Grid) -> Self {
        let (c, h, w) = grid.shape();
        Self {
            format: GRID_FORMAT.to_string(),
            version: 1,
            dtype: "f32".to_string(),
            order: "C".to_string(),
            shape: [c, h, w],
            meta: Default::default(),
        }
    }
}

pub fn write_grid_to(mut w: impl Write, grid: &Grid, header: &GridHeader) -> Result<()> {
    let line = serde_json::to_string(header).map_err(|e| Error::Parse(e.to_string()))?;
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    w.write_all(&grid.to_le_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn read_grid_from(r: impl Read) -> Result<(Grid, GridHeader)> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: GridHeader = serde_json::from_str(line.trim_end())
        .map_err(|e| Error::Parse(format!("grid header: {e}")))?;
    if header.format != GRID_FORMAT || header.dtype != "f32" || header.order != "C" {
        return Err(Error::Parse(format!(
            "unsupported grid header: format={} dtype={} order={}",
            header.format, header.dtype, header.order
        )));
    }
    let [c, h, w] = header.shape;
    let mut payload = vec![0u8; c * h * w * 4];
    r.read_exact(&mut payload)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Parse("trailing bytes after grid payload".into()));
    }
    Ok((Grid::from_le_bytes(c, h, w, &payload)?, header))
}

/// Writes `grid` with an optional metadata object in the header.
pub fn save_grid(
    path: impl AsRef<Path>,
    grid: &Grid,
    meta: serde_json::Map<String, serde_json::Value>,
) -> Result<()> {
    let mut header = GridHeader::for_grid(grid);
    header.meta = meta;
    write_grid_to(BufWriter::new(File::create(path)?), grid, &header)
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<(Grid, GridHeader)> {
    read_grid_from(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn indexing_is_c_order() {
        let g = Grid::from_fn(2, 3, 4, |c, y, x| (c * 100 + y * 10 + x) as f32);
        assert_eq!(g.data()[1 * 12 + 2 * 4 + 3], 123.0);
        assert_eq!(g.get(1, 2, 3), 123.0);
        assert_eq!(g.plane(1)[0], 100.0);
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(matches!(
            Grid::from_vec(1, 2, 2, vec![0.0; 3]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn header_is_one_json_line() {
        let g = Grid::filled(1, 2, 3, 1.5);
        let mut buf = Vec::new();
        write_grid_to(&mut buf, &g, &GridHeader::for_grid(&g)).unwrap();
        let nl = buf.iter().position(|&b| b == b'\n').unwrap();
        let header: serde_json::Value = serde_json::from_slice(&buf[..nl]).unwrap();
        assert_eq!(header["shape"], serde_json::json!([1, 2, 3]));
        assert_eq!(header["dtype"], "f32");
        assert_eq!(buf.len() - nl - 1, 6 * 4);
        assert_eq!(&buf[nl + 1..nl + 5], &1.5f32.to_le_bytes());
    }

    #[test]
    fn truncated_payload_is_an_error() {
        let g = Grid::filled(1, 4, 4, 2.0);
        let mut buf = Vec::new();
        write_grid_to(&mut buf, &g, &GridHeader::for_grid(&g)).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_grid_from(&buf[..]).is_err());
    }

    proptest! {
        #[test]
        fn raw_grid_roundtrip_is_bit_exact(
            c in 1usize..4, h in 1usize..6, w in 1usize..6,
            seed in proptest::collection::vec(any::<u32>(), 1..8),
        ) {
            let g = Grid::from_fn(c, h, w, |a, b, d| {
                f32::from_bits(seed[(a + b * 3 + d * 7) % seed.len()] & 0x7f7f_ffff)
            });
            let mut buf = Vec::new();
            write_grid_to(&mut buf, &g, &GridHeader::for_grid(&g)).unwrap();
            let (back, _) = read_grid_from(&buf[..]).unwrap();
            prop_assert_eq!(g.to_le_bytes(), back.to_le_bytes());
        }
    }
}
