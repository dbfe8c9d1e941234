//! Path loss and narrowband channel generation.
//!
//! Coefficients are stored in polar form as `amplitude · e^{-j·phase}`, with
//! `phase` normalized to `[0, 2π)`. The conjugation is applied once, in
//! [`ComplexCoeff::to_complex`], so every phase in the crate is a positive
//! propagation delay angle.

use std::f64::consts::{PI, TAU};

use log::warn;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::surface::RisSurface;
use crate::{db_to_linear, dbm_to_watts, SPEED_OF_LIGHT};

/// Thermal noise density at 290 K, dBm/Hz.
pub const THERMAL_FLOOR_DBM_PER_HZ: f64 = -174.0;

/// Lower and upper edge of 5G NR band n78.
pub const N78_BAND_HZ: (f64, f64) = (3.3e9, 3.8e9);

/// Default NLoS exponent; a modelling choice, not a measured value.
pub const DEFAULT_NLOS_EXPONENT: f64 = 3.0;

/// Boresight gain of the horn antennas used in the controlled measurements.
pub const DEFAULT_HORN_GAIN_DBI: f64 = 13.0;

pub const DEFAULT_BLOCKAGE_LOSS_DB: f64 = 25.0;

/// Wraps an angle into `[0, 2π)`.
#[inline]
pub fn wrap_phase(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Circular distance between two angles, in `[0, π]`.
#[inline]
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = wrap_phase(a - b);
    d.min(TAU - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexCoeff {
    amplitude: f64,
    phase: f64,
}

impl ComplexCoeff {
    pub const ZERO: ComplexCoeff = ComplexCoeff {
        amplitude: 0.0,
        phase: 0.0,
    };

    /// Builds `amplitude · e^{-j·phase}`. The phase is wrapped into `[0, 2π)`.
    pub fn new(amplitude: f64, phase: f64) -> Result<Self> {
        if !(amplitude >= 0.0) || !amplitude.is_finite() || !phase.is_finite() {
            return Err(Error::domain(format!(
                "invalid coefficient: amplitude={amplitude}, phase={phase}"
            )));
        }
        Ok(ComplexCoeff {
            amplitude,
            phase: wrap_phase(phase),
        })
    }

    /// Inverse of [`to_complex`](Self::to_complex).
    pub fn from_complex(c: Complex64) -> Self {
        ComplexCoeff {
            amplitude: c.norm(),
            phase: wrap_phase(-c.arg()),
        }
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn to_complex(&self) -> Complex64 {
        Complex64::from_polar(self.amplitude, -self.phase)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    pub tx_pos: Vec3,
    pub ris_center: Vec3,
    pub rx_pos: Vec3,
    pub ris_normal: Vec3,
    pub carrier_freq: f64,
}

impl LinkGeometry {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    /// Rejects degenerate geometry. Frequencies outside n78 only log a warning.
    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_freq > 0.0) || !self.carrier_freq.is_finite() {
            return Err(Error::domain(format!(
                "carrier frequency must be positive, got {}",
                self.carrier_freq
            )));
        }
        for p in [self.tx_pos, self.ris_center, self.rx_pos] {
            if !p.is_finite() {
                return Err(Error::domain("non-finite position"));
            }
        }
        let pairs = [
            ("tx-ris", self.tx_pos.distance(self.ris_center)),
            ("ris-rx", self.ris_center.distance(self.rx_pos)),
            ("tx-rx", self.tx_pos.distance(self.rx_pos)),
        ];
        for (name, d) in pairs {
            if !(d > 0.0) {
                return Err(Error::domain(format!("{name} distance must be positive")));
            }
        }
        if self.ris_normal.normalized().is_none() {
            return Err(Error::domain("ris normal must be non-zero"));
        }
        if self.carrier_freq < N78_BAND_HZ.0 || self.carrier_freq > N78_BAND_HZ.1 {
            warn!(
                "carrier {:.3} GHz lies outside n78 (3.3-3.8 GHz)",
                self.carrier_freq / 1e9
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathLossKind {
    Fspl,
    LogDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fading {
    None,
    /// Rician with K-factor in dB.
    Rician {
        k_db: f64,
    },
    Rayleigh,
}

impl Fading {
    /// Draws one complex factor with `E|f|² = 1`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        match *self {
            Fading::None => Complex64::new(1.0, 0.0),
            Fading::Rayleigh => circular_normal(rng),
            Fading::Rician { k_db } => {
                let k = db_to_linear(k_db);
                let los = (k / (k + 1.0)).sqrt();
                let scatter = (1.0 / (k + 1.0)).sqrt();
                Complex64::new(los, 0.0) + circular_normal(rng) * scatter
            }
        }
    }
}

/// CN(0, 1) sample.
fn circular_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    pub kind: PathLossKind,
    /// Log-distance exponent; ignored for [`PathLossKind::Fspl`].
    pub exponent: f64,
    pub reference_distance_m: f64,
    pub fading: Fading,
    /// Extra loss applied to an obstructed direct path.
    pub blockage_extra_loss_db: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        PathLossModel {
            kind: PathLossKind::Fspl,
            exponent: 2.0,
            reference_distance_m: 1.0,
            fading: Fading::None,
            blockage_extra_loss_db: DEFAULT_BLOCKAGE_LOSS_DB,
        }
    }
}

impl PathLossModel {
    pub fn log_distance(exponent: f64, reference_distance_m: f64) -> Self {
        PathLossModel {
            kind: PathLossKind::LogDistance,
            exponent,
            reference_distance_m,
            ..Default::default()
        }
    }

    pub fn with_fading(mut self, fading: Fading) -> Self {
        self.fading = fading;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1.0..=6.0).contains(&self.exponent) {
            return Err(Error::domain(format!(
                "path-loss exponent {} outside [1, 6]",
                self.exponent
            )));
        }
        if !(self.reference_distance_m > 0.0) || !self.reference_distance_m.is_finite() {
            return Err(Error::domain("reference distance must be positive"));
        }
        if let Fading::Rician { k_db } = self.fading {
            if !k_db.is_finite() {
                return Err(Error::domain("Rician K must be finite"));
            }
        }
        if !self.blockage_extra_loss_db.is_finite() {
            return Err(Error::domain("blockage loss must be finite"));
        }
        Ok(())
    }

    /// Path loss in dB according to the configured law.
    pub fn path_loss_db(&self, distance: f64, freq: f64) -> Result<f64> {
        match self.kind {
            PathLossKind::Fspl => fspl_db(distance, freq),
            PathLossKind::LogDistance => log_distance_pl_db(distance, self, freq),
        }
    }
}

/// Free-space path loss, `20·log10(d) + 20·log10(f) + 20·log10(4π/c)`.
pub fn fspl_db(distance: f64, freq: f64) -> Result<f64> {
    if !(distance > 0.0) || !(freq > 0.0) || !distance.is_finite() || !freq.is_finite() {
        return Err(Error::domain(format!(
            "fspl needs positive distance and frequency, got d={distance}, f={freq}"
        )));
    }
    Ok(20.0 * distance.log10() + 20.0 * freq.log10() + 20.0 * (4.0 * PI / SPEED_OF_LIGHT).log10())
}

/// Log-distance path loss anchored on free space at the reference distance.
pub fn log_distance_pl_db(distance: f64, model: &PathLossModel, freq: f64) -> Result<f64> {
    let d0 = model.reference_distance_m;
    if !(d0 > 0.0) {
        return Err(Error::domain("reference distance must be positive"));
    }
    if !(distance >= d0) {
        return Err(Error::domain(format!(
            "distance {distance} m below reference distance {d0} m"
        )));
    }
    Ok(fspl_db(d0, freq)? + 10.0 * model.exponent * (distance / d0).log10())
}

/// Thermal noise power in watts for the given bandwidth and receiver noise figure.
pub fn noise_power_w(bandwidth: f64, noise_figure_db: f64) -> Result<f64> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::domain(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    Ok(dbm_to_watts(
        THERMAL_FLOOR_DBM_PER_HZ + 10.0 * bandwidth.log10() + noise_figure_db,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectPath {
    /// No Tx→Rx term; reproduces the pure cascaded model.
    Absent,
    Clear,
    /// Direct term attenuated by `blockage_extra_loss_db`.
    Obstructed,
}

/// Antenna gains, direct-path state and receiver noise for one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub tx_gain_dbi: f64,
    pub rx_gain_dbi: f64,
    pub direct: DirectPath,
    pub noise_power_w: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            tx_gain_dbi: DEFAULT_HORN_GAIN_DBI,
            rx_gain_dbi: DEFAULT_HORN_GAIN_DBI,
            direct: DirectPath::Absent,
            // SDR front end: 20 MHz, 7 dB noise figure
            noise_power_w: noise_power_w(20e6, 7.0).expect("positive bandwidth"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// Tx → element.
    pub h: Vec<ComplexCoeff>,
    /// Element → Rx.
    pub g: Vec<ComplexCoeff>,
    /// Tx → Rx, zero amplitude when absent.
    pub direct: ComplexCoeff,
    pub noise_power_w: f64,
}

impl ChannelRealization {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.h.len() != self.g.len() {
            return Err(Error::LengthMismatch {
                expected: self.h.len(),
                got: self.g.len(),
            });
        }
        if !(self.noise_power_w > 0.0) {
            return Err(Error::domain("noise power must be positive"));
        }
        Ok(())
    }

    /// Per-element cascade `a_i·b_i·e^{-j(θ_i+ψ_i)}`.
    pub fn cascade_terms(&self) -> Vec<Complex64> {
        self.h
            .iter()
            .zip(&self.g)
            .map(|(h, g)| h.to_complex() * g.to_complex())
            .collect()
    }

    /// `Σ a_i·b_i`, the amplitude reached when every term is phase-aligned.
    pub fn coherent_amplitude(&self) -> f64 {
        self.h
            .iter()
            .zip(&self.g)
            .map(|(h, g)| h.amplitude() * g.amplitude())
            .sum()
    }
}

/// Direct Tx→Rx coefficient on its own, e.g. for drive-test synthesis.
/// `link.direct` selects absent, clear or obstructed; fading uses a generator
/// seeded with `seed`.
pub fn sample_direct_path(
    tx: Vec3,
    rx: Vec3,
    freq: f64,
    model: &PathLossModel,
    link: &LinkParams,
    seed: u64,
) -> Result<ComplexCoeff> {
    model.validate()?;
    let d = tx.distance(rx);
    if !(d > 0.0) {
        return Err(Error::domain("terminals coincide"));
    }
    let c = match link.direct {
        DirectPath::Absent => return Ok(ComplexCoeff::ZERO),
        DirectPath::Clear => 0.0,
        DirectPath::Obstructed => model.blockage_extra_loss_db,
    };
    let gain_db = link.tx_gain_dbi + link.rx_gain_dbi - c - model.path_loss_db(d, freq)?;
    let k = TAU * freq / SPEED_OF_LIGHT;
    let coeff = ComplexCoeff::new(10f64.powf(gain_db / 20.0), k * d)?;
    if model.fading == Fading::None {
        return Ok(coeff);
    }
    let mut rng = crate::rng::SeedStream::new(seed).rng();
    Ok(ComplexCoeff::from_complex(
        coeff.to_complex() * model.fading.draw(&mut rng),
    ))
}

/// Generates the per-element and direct coefficients for one link.
///
/// Amplitudes are `√G · 10^(−PL(d)/20)`, phases `2π·d/λ mod 2π`. With fading
/// enabled every coefficient is multiplied by an independent unit-power draw;
/// draws are taken in the order h₀…h_{N−1}, g₀…g_{N−1}, direct, from a
/// generator seeded with `seed` alone.
pub fn sample_channel(
    geometry: &LinkGeometry,
    surface: &RisSurface,
    model: &PathLossModel,
    link: &LinkParams,
    seed: u64,
) -> Result<ChannelRealization> {
    geometry.validate()?;
    model.validate()?;
    if !(link.noise_power_w > 0.0) {
        return Err(Error::domain("noise power must be positive"));
    }
    if surface.center().distance(geometry.ris_center) > 1e-9 {
        return Err(Error::domain(
            "surface is not centered on the geometry's ris_center",
        ));
    }
    let lambda = geometry.wavelength();
    let freq = geometry.carrier_freq;
    let k = TAU / lambda;
    let tx_amp = db_to_linear(link.tx_gain_dbi).sqrt();
    let rx_amp = db_to_linear(link.rx_gain_dbi).sqrt();

    let coeff = |d: f64, gain_amp: f64| -> Result<ComplexCoeff> {
        if !(d > 0.0) {
            return Err(Error::domain("element coincides with a terminal"));
        }
        let pl = model.path_loss_db(d, freq)?;
        ComplexCoeff::new(gain_amp * 10f64.powf(-pl / 20.0), k * d)
    };

    let positions = surface.element_positions();
    let mut h = positions
        .iter()
        .map(|&p| coeff(geometry.tx_pos.distance(p), tx_amp))
        .collect::<Result<Vec<_>>>()?;
    let mut g = positions
        .iter()
        .map(|&p| coeff(p.distance(geometry.rx_pos), rx_amp))
        .collect::<Result<Vec<_>>>()?;
    let d_direct = geometry.tx_pos.distance(geometry.rx_pos);
    let mut direct = match link.direct {
        DirectPath::Absent => ComplexCoeff::ZERO,
        DirectPath::Clear => coeff(d_direct, tx_amp * rx_amp)?,
        DirectPath::Obstructed => {
            let c = coeff(d_direct, tx_amp * rx_amp)?;
            ComplexCoeff::new(
                c.amplitude() * 10f64.powf(-model.blockage_extra_loss_db / 20.0),
                c.phase(),
            )?
        }
    };

    if model.fading != Fading::None {
        let mut rng = crate::rng::SeedStream::new(seed).rng();
        let mut fade = |c: &mut ComplexCoeff| {
            *c = ComplexCoeff::from_complex(c.to_complex() * model.fading.draw(&mut rng));
        };
        h.iter_mut().for_each(&mut fade);
        g.iter_mut().for_each(&mut fade);
        fade(&mut direct);
    }

    Ok(ChannelRealization {
        h,
        g,
        direct,
        noise_power_w: link.noise_power_w,
    })
}
