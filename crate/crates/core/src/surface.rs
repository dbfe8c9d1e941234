//! Modular two-state surface: block tiling, phase bitmaps and the cascaded
//! received-power model.
//!
//! Element indices are block-major: blocks are visited row by row, and the
//! 64 elements inside each block row by row. Optimizer sweep order follows
//! this index order, so it is part of the public contract.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::propagation::ChannelRealization;

/// Elements per block side.
pub const BLOCK_DIM: usize = 8;
pub const ELEMENTS_PER_BLOCK: usize = BLOCK_DIM * BLOCK_DIM;
/// Element periodicity, meters.
pub const ELEMENT_PITCH_M: f64 = 0.041;
/// Controller limit on attached blocks.
pub const MAX_BLOCKS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub rows: usize,
    pub cols: usize,
}

impl BlockLayout {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        let l = BlockLayout { rows, cols };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::domain(
                "layout needs at least one block row and column",
            ));
        }
        if self.rows * self.cols > MAX_BLOCKS {
            return Err(Error::LayoutTooLarge {
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(())
    }

    pub fn element_count(&self) -> usize {
        self.rows * self.cols * ELEMENTS_PER_BLOCK
    }

    pub fn element_rows(&self) -> usize {
        self.rows * BLOCK_DIM
    }

    pub fn element_cols(&self) -> usize {
        self.cols * BLOCK_DIM
    }

    /// Global (row, col) of element `index` under block-major ordering.
    pub fn grid_position(&self, index: usize) -> (usize, usize) {
        let block = index / ELEMENTS_PER_BLOCK;
        let local = index % ELEMENTS_PER_BLOCK;
        let (br, bc) = (block / self.cols, block % self.cols);
        let (er, ec) = (local / BLOCK_DIM, local % BLOCK_DIM);
        (br * BLOCK_DIM + er, bc * BLOCK_DIM + ec)
    }
}

/// Two-state configuration; `true` is the π state.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct PhaseBitmap(Vec<bool>);

impl PhaseBitmap {
    pub fn zeros(n: usize) -> Self {
        PhaseBitmap(vec![false; n])
    }

    pub fn ones(n: usize) -> Self {
        PhaseBitmap(vec![true; n])
    }

    pub fn from_bools(bits: Vec<bool>) -> Self {
        PhaseBitmap(bits)
    }

    /// Bit `i` of `value` becomes element `i`.
    pub fn from_u64(value: u64, n: usize) -> Self {
        PhaseBitmap((0..n).map(|i| i < 64 && (value >> i) & 1 == 1).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, state: bool) {
        self.0[i] = state;
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] = !self.0[i];
    }

    pub fn set_range(&mut self, range: std::ops::Range<usize>, state: bool) {
        self.0[range].iter_mut().for_each(|b| *b = state);
    }

    pub fn flipped_all(&self) -> Self {
        PhaseBitmap(self.0.iter().map(|b| !b).collect())
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// Phase of element `i`, 0 or π.
    pub fn phase(&self, i: usize) -> f64 {
        if self.0[i] {
            std::f64::consts::PI
        } else {
            0.0
        }
    }

    /// Lowercase hex; element 0 is the least significant bit of the first byte.
    pub fn to_hex(&self) -> String {
        let mut bytes = vec![0u8; self.0.len().div_ceil(8)];
        for (i, &b) in self.0.iter().enumerate() {
            if b {
                bytes[i / 8] |= 1 << (i % 8);
            }
        }
        hex::encode(bytes)
    }

    pub fn from_hex(s: &str, n: usize) -> Result<Self> {
        let bytes = hex::decode(s.trim()).map_err(|e| Error::Bitmap(e.to_string()))?;
        if bytes.len() != n.div_ceil(8) {
            return Err(Error::Bitmap(format!(
                "{} bytes cannot hold exactly {n} elements",
                bytes.len()
            )));
        }
        let bits: Vec<bool> = (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect();
        let padding_set = (n..bytes.len() * 8).any(|i| bytes[i / 8] >> (i % 8) & 1 == 1);
        if padding_set {
            return Err(Error::Bitmap("padding bits must be zero".into()));
        }
        Ok(PhaseBitmap(bits))
    }
}

impl fmt::Debug for PhaseBitmap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PhaseBitmap[{}](", self.0.len())?;
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RisSurface {
    layout: BlockLayout,
    center: Vec3,
    normal: Vec3,
    positions: Vec<Vec3>,
    config: PhaseBitmap,
}

impl RisSurface {
    pub fn layout(&self) -> BlockLayout {
        self.layout
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn normal(&self) -> Vec3 {
        self.normal
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn element_positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn config(&self) -> &PhaseBitmap {
        &self.config
    }

    /// Same surface with a different configuration.
    pub fn with_config(&self, config: PhaseBitmap) -> Result<Self> {
        if config.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: config.len(),
            });
        }
        Ok(RisSurface {
            config,
            ..self.clone()
        })
    }
}

/// In-plane unit vectors (column axis, row axis) for a surface facing `normal`.
///
/// Columns run horizontally (perpendicular to both `normal` and +z), rows run
/// down the surface. A surface facing straight up uses +x as column axis.
pub fn surface_axes(normal: Vec3) -> Result<(Vec3, Vec3)> {
    let n = normal
        .normalized()
        .ok_or_else(|| Error::domain("surface normal must be non-zero"))?;
    let col = Vec3::Z.cross(n).normalized().unwrap_or(Vec3::X);
    let up = n.cross(col);
    Ok((col, up))
}

/// Places `N = rows·cols·64` elements on a regular grid with 41 mm pitch,
/// centered on `center` in the plane orthogonal to `normal`. Blocks abut
/// without gaps. The configuration starts as all state 0.
pub fn tile_blocks(layout: BlockLayout, center: Vec3, normal: Vec3) -> Result<RisSurface> {
    layout.validate()?;
    if !center.is_finite() {
        return Err(Error::domain("surface center must be finite"));
    }
    let (col_axis, up_axis) = surface_axes(normal)?;
    let n_rows = layout.element_rows() as f64;
    let n_cols = layout.element_cols() as f64;
    let positions = (0..layout.element_count())
        .map(|i| {
            let (r, c) = layout.grid_position(i);
            let x = (c as f64 - (n_cols - 1.0) / 2.0) * ELEMENT_PITCH_M;
            let y = ((n_rows - 1.0) / 2.0 - r as f64) * ELEMENT_PITCH_M;
            center + col_axis * x + up_axis * y
        })
        .collect::<Vec<_>>();
    Ok(RisSurface {
        layout,
        center,
        normal: normal.normalized().expect("checked above"),
        config: PhaseBitmap::zeros(positions.len()),
        positions,
    })
}

/// Complex field `direct + Σ h_i·e^{jφ_i}·g_i` for unit transmit amplitude.
pub fn received_field(realization: &ChannelRealization, config: &PhaseBitmap) -> Result<Complex64> {
    realization.validate()?;
    if config.len() != realization.len() {
        return Err(Error::LengthMismatch {
            expected: realization.len(),
            got: config.len(),
        });
    }
    let mut acc = realization.direct.to_complex();
    for ((h, g), &state) in realization.h.iter().zip(&realization.g).zip(config.bits()) {
        let term = h.to_complex() * g.to_complex();
        if state {
            acc -= term;
        } else {
            acc += term;
        }
    }
    Ok(acc)
}

/// Received signal power (noise excluded) for an explicit configuration.
pub fn config_power(
    realization: &ChannelRealization,
    config: &PhaseBitmap,
    tx_power_w: f64,
) -> Result<f64> {
    Ok(tx_power_w * received_field(realization, config)?.norm_sqr())
}

/// `tx_power · |direct + Σ a_i·b_i·e^{j(φ_i − θ_i − ψ_i)}|²` for the
/// surface's current configuration.
pub fn received_signal_power(
    realization: &ChannelRealization,
    surface: &RisSurface,
    tx_power_w: f64,
) -> Result<f64> {
    config_power(realization, surface.config(), tx_power_w)
}

pub fn received_snr_db(
    realization: &ChannelRealization,
    surface: &RisSurface,
    tx_power_w: f64,
) -> Result<f64> {
    let p = received_signal_power(realization, surface, tx_power_w)?;
    Ok(10.0 * (p / realization.noise_power_w).log10())
}

/// Upper bound reached by continuous phases `φ_i = θ_i + ψ_i`:
/// `tx_power · (Σ a_i·b_i)²`. The direct term is ignored.
pub fn optimal_continuous_power(realization: &ChannelRealization, tx_power_w: f64) -> Result<f64> {
    realization.validate()?;
    let a = realization.coherent_amplitude();
    Ok(tx_power_w * a * a)
}
