//! Cellular KPIs from received signal power.
//!
//! The wideband signal power is spread evenly over `n_rb · 12` resource
//! elements to obtain RSRP. Service is granted when SINR clears a mode-specific
//! threshold; establishing a connection needs more than keeping one. Records
//! without service carry the sentinel RSRP/SINR values.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::propagation::noise_power_w;
use crate::{dbm_to_watts, linear_to_db, watts_to_dbm};

pub const SENTINEL_RSRP_DBM: f64 = -120.0;
pub const SENTINEL_SINR_DB: f64 = -10.0;
pub const SUBCARRIERS_PER_RB: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ServiceState {
    Connected,
    NoAccess,
}

impl ServiceState {
    pub fn as_str(self) -> &'static str {
        match self {
            ServiceState::Connected => "Connected",
            ServiceState::NoAccess => "NoAccess",
        }
    }
}

impl std::str::FromStr for ServiceState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "Connected" | "connected" | "1" => Ok(ServiceState::Connected),
            "NoAccess" | "no_access" | "noaccess" | "0" => Ok(ServiceState::NoAccess),
            other => Err(Error::InvalidTrace(format!(
                "unknown service state {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessMode {
    /// Terminal must establish a connection (fixed-point measurements).
    InitialAccess,
    /// Terminal already holds a connection (drive tests).
    Maintaining,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KpiRecord {
    pub timestamp_s: f64,
    pub position: Option<Vec3>,
    pub rsrp_dbm: f64,
    pub rsrq_db: f64,
    pub rssi_dbm: f64,
    pub sinr_db: f64,
    pub service: ServiceState,
}

impl KpiRecord {
    /// Overwrites RSRP and SINR with the sentinels when there is no service.
    /// Idempotent.
    pub fn with_sentinels(mut self) -> Self {
        if self.service == ServiceState::NoAccess {
            self.rsrp_dbm = SENTINEL_RSRP_DBM;
            self.sinr_db = SENTINEL_SINR_DB;
        }
        self
    }

    pub fn is_connected(&self) -> bool {
        self.service == ServiceState::Connected
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioConfig {
    pub bandwidth_hz: f64,
    pub n_rb: usize,
    pub noise_figure_db: f64,
    pub interference_power_w: f64,
    pub access_threshold_sinr_db: f64,
    pub maintain_threshold_sinr_db: f64,
}

impl Default for RadioConfig {
    /// 100 MHz carrier at 30 kHz subcarrier spacing.
    fn default() -> Self {
        RadioConfig {
            bandwidth_hz: 100e6,
            n_rb: 273,
            noise_figure_db: 7.0,
            interference_power_w: 0.0,
            access_threshold_sinr_db: -6.0,
            maintain_threshold_sinr_db: -10.0,
        }
    }
}

impl RadioConfig {
    /// Resource blocks that fit `bandwidth_hz` at 30 kHz spacing, keeping the
    /// same 98.3 % occupancy as the 273-RB / 100 MHz carrier.
    pub fn n_rb_for_bandwidth(bandwidth_hz: f64) -> usize {
        (bandwidth_hz * 273.0 / 100e6).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::Config("bandwidth must be positive".into()));
        }
        if self.n_rb == 0 {
            return Err(Error::Config("n_rb must be positive".into()));
        }
        let occupied = (self.n_rb * SUBCARRIERS_PER_RB) as f64 * 30e3;
        if occupied > self.bandwidth_hz * 1.0001 {
            return Err(Error::Config(format!(
                "{} RBs at 30 kHz spacing do not fit in {} Hz",
                self.n_rb, self.bandwidth_hz
            )));
        }
        if !(self.interference_power_w >= 0.0) {
            return Err(Error::Config(
                "interference power must be non-negative".into(),
            ));
        }
        if !(self.maintain_threshold_sinr_db < self.access_threshold_sinr_db) {
            return Err(Error::Config(
                "maintain threshold must be below the access threshold".into(),
            ));
        }
        Ok(())
    }

    pub fn noise_power_w(&self) -> Result<f64> {
        noise_power_w(self.bandwidth_hz, self.noise_figure_db)
    }

    fn threshold(&self, mode: AccessMode) -> f64 {
        match mode {
            AccessMode::InitialAccess => self.access_threshold_sinr_db,
            AccessMode::Maintaining => self.maintain_threshold_sinr_db,
        }
    }
}

/// KPIs for a received signal power in watts.
///
/// RSRQ is reported as `12·n_rb·RSRP / RSSI`, i.e. the signal share of the
/// total received power, which is at most 0 dB.
pub fn derive_kpis(signal_w: f64, radio: &RadioConfig, mode: AccessMode) -> Result<KpiRecord> {
    if !(signal_w >= 0.0) || !signal_w.is_finite() {
        return Err(Error::domain(format!(
            "signal power must be >= 0, got {signal_w}"
        )));
    }
    let noise = radio.noise_power_w()?;
    let impairment = radio.interference_power_w + noise;
    let n_re = (radio.n_rb * SUBCARRIERS_PER_RB) as f64;
    let rsrp_w = signal_w / n_re;
    let rssi_w = signal_w + impairment;
    let sinr_db = linear_to_db(signal_w / impairment);
    let rsrq_db = linear_to_db(n_re * rsrp_w / rssi_w);
    let service = if sinr_db >= radio.threshold(mode) {
        ServiceState::Connected
    } else {
        ServiceState::NoAccess
    };
    Ok(KpiRecord {
        timestamp_s: 0.0,
        position: None,
        rsrp_dbm: watts_to_dbm(rsrp_w),
        rsrq_db,
        rssi_dbm: watts_to_dbm(rssi_w),
        sinr_db,
        service,
    }
    .with_sentinels())
}

/// Signal power implied by an RSRP reading, inverse of the RSRP mapping.
pub fn signal_from_rsrp(rsrp_dbm: f64, radio: &RadioConfig) -> f64 {
    dbm_to_watts(rsrp_dbm) * (radio.n_rb * SUBCARRIERS_PER_RB) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AccessTransition {
    BothConnected,
    Restored,
    Lost,
    BothNoAccess,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointGain {
    pub index: usize,
    pub transition: AccessTransition,
    /// Present only when both states are connected.
    pub delta_rsrp_db: Option<f64>,
    pub delta_sinr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainReport {
    pub points: Vec<PointGain>,
    pub restored: usize,
    pub lost: usize,
    pub mean_delta_rsrp_db: Option<f64>,
    pub mean_delta_sinr_db: Option<f64>,
}

/// Compares matched off/on records point by point.
pub fn gain_report(off: &[KpiRecord], on: &[KpiRecord]) -> Result<GainReport> {
    if off.len() != on.len() {
        return Err(Error::LengthMismatch {
            expected: off.len(),
            got: on.len(),
        });
    }
    let points: Vec<PointGain> = off
        .iter()
        .zip(on)
        .enumerate()
        .map(|(index, (a, b))| {
            let transition = match (a.is_connected(), b.is_connected()) {
                (true, true) => AccessTransition::BothConnected,
                (false, true) => AccessTransition::Restored,
                (true, false) => AccessTransition::Lost,
                (false, false) => AccessTransition::BothNoAccess,
            };
            let both = transition == AccessTransition::BothConnected;
            PointGain {
                index,
                transition,
                delta_rsrp_db: both.then_some(b.rsrp_dbm - a.rsrp_dbm),
                delta_sinr_db: both.then_some(b.sinr_db - a.sinr_db),
            }
        })
        .collect();
    let mean = |f: fn(&PointGain) -> Option<f64>| {
        let v: Vec<f64> = points.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    Ok(GainReport {
        restored: points
            .iter()
            .filter(|p| p.transition == AccessTransition::Restored)
            .count(),
        lost: points
            .iter()
            .filter(|p| p.transition == AccessTransition::Lost)
            .count(),
        mean_delta_rsrp_db: mean(|p| p.delta_rsrp_db),
        mean_delta_sinr_db: mean(|p| p.delta_sinr_db),
        points,
    })
}

pub const KPI_CSV_HEADER: [&str; 9] = [
    "timestamp_s",
    "lat_or_x_m",
    "lon_or_y_m",
    "alt_or_z_m",
    "rsrp_dbm",
    "rsrq_db",
    "rssi_dbm",
    "sinr_db",
    "service",
];

/// Writes records in the shared KPI CSV layout, values at 0.01 resolution.
pub fn write_kpi_csv<W: Write>(records: &[KpiRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(KPI_CSV_HEADER)?;
    let coord =
        |p: Option<Vec3>, f: fn(Vec3) -> f64| p.map(|p| format!("{:.6}", f(p))).unwrap_or_default();
    for r in records {
        w.write_record([
            format!("{:.3}", r.timestamp_s),
            coord(r.position, |p| p.x),
            coord(r.position, |p| p.y),
            coord(r.position, |p| p.z),
            format!("{:.2}", r.rsrp_dbm),
            format!("{:.2}", r.rsrq_db),
            format!("{:.2}", r.rssi_dbm),
            format!("{:.2}", r.sinr_db),
            r.service.as_str().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<kpi csv>", e))?;
    Ok(())
}

/// Reads the shared KPI CSV layout. Position columns may be empty.
pub fn read_kpi_csv<R: Read>(input: R) -> Result<Vec<KpiRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != KPI_CSV_HEADER {
        return Err(Error::InvalidTrace(format!(
            "unexpected header {:?}, expected {:?}",
            headers.iter().collect::<Vec<_>>(),
            KPI_CSV_HEADER
        )));
    }
    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let num = |i: usize| -> Result<f64> {
            row[i].parse::<f64>().map_err(|_| {
                Error::InvalidTrace(format!(
                    "row {}: bad {} value {:?}",
                    line + 1,
                    KPI_CSV_HEADER[i],
                    &row[i]
                ))
            })
        };
        let position = if row[1].is_empty() && row[2].is_empty() && row[3].is_empty() {
            None
        } else {
            Some(Vec3::new(num(1)?, num(2)?, num(3)?))
        };
        out.push(KpiRecord {
            timestamp_s: num(0)?,
            position,
            rsrp_dbm: num(4)?,
            rsrq_db: num(5)?,
            rssi_dbm: num(6)?,
            sinr_db: num(7)?,
            service: row[8].parse()?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn radio() -> RadioConfig {
        RadioConfig::default()
    }

    #[test]
    fn default_radio_is_valid() {
        radio().validate().unwrap();
        assert_eq!(RadioConfig::n_rb_for_bandwidth(100e6), 273);
        let bad = RadioConfig {
            maintain_threshold_sinr_db: -5.0,
            ..radio()
        };
        assert!(bad.validate().is_err());
        let bad = RadioConfig {
            n_rb: 300,
            ..radio()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn signal_equal_to_noise_is_zero_db() {
        let noise = radio().noise_power_w().unwrap();
        let k = derive_kpis(noise, &radio(), AccessMode::Maintaining).unwrap();
        assert!(k.sinr_db.abs() < 1e-9);
        assert!(k.is_connected());
    }

    #[test]
    fn rsrq_tends_to_zero_for_strong_signal() {
        let noise = radio().noise_power_w().unwrap();
        let mut last = f64::NEG_INFINITY;
        for exp in [0.0, 2.0, 4.0, 8.0] {
            let k =
                derive_kpis(noise * 10f64.powf(exp), &radio(), AccessMode::Maintaining).unwrap();
            assert!(k.rsrq_db <= 0.0 && k.rsrq_db > last);
            last = k.rsrq_db;
        }
        assert!(last > -1e-7);
    }

    #[test]
    fn rsrp_is_per_resource_element() {
        let k = derive_kpis(1e-3, &radio(), AccessMode::Maintaining).unwrap();
        let expected = -10.0 * ((273 * 12) as f64).log10();
        assert!((k.rsrp_dbm - expected).abs() < 1e-9);
        assert!((signal_from_rsrp(k.rsrp_dbm, &radio()) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn below_access_threshold_gets_sentinels() {
        let noise = radio().noise_power_w().unwrap();
        let k = derive_kpis(noise * 0.1, &radio(), AccessMode::InitialAccess).unwrap();
        assert_eq!(k.service, ServiceState::NoAccess);
        assert_eq!(k.rsrp_dbm, SENTINEL_RSRP_DBM);
        assert_eq!(k.sinr_db, SENTINEL_SINR_DB);
        // same signal still holds an existing connection (-10 dB < -8 dB)
        let m = derive_kpis(noise * 0.16, &radio(), AccessMode::Maintaining).unwrap();
        assert!(m.is_connected());
        assert_eq!(k.with_sentinels(), k);
    }

    #[test]
    fn zero_signal_is_no_access() {
        let k = derive_kpis(0.0, &radio(), AccessMode::Maintaining).unwrap();
        assert_eq!(k.service, ServiceState::NoAccess);
        assert!(derive_kpis(-1.0, &radio(), AccessMode::Maintaining).is_err());
    }

    #[test]
    fn rsrq_zero_without_impairment_is_impossible_but_bounded() {
        let r = RadioConfig {
            interference_power_w: 1e-9,
            ..radio()
        };
        let k = derive_kpis(1e-9, &r, AccessMode::Maintaining).unwrap();
        assert!(k.rsrq_db < 0.0);
    }

    fn rec(rsrp: f64, sinr: f64, service: ServiceState) -> KpiRecord {
        KpiRecord {
            timestamp_s: 0.0,
            position: None,
            rsrp_dbm: rsrp,
            rsrq_db: -3.0,
            rssi_dbm: -60.0,
            sinr_db: sinr,
            service,
        }
        .with_sentinels()
    }

    #[test]
    fn gain_report_examples() {
        let a = vec![rec(-90.0, 10.0, ServiceState::Connected); 3];
        let r = gain_report(&a, &a).unwrap();
        assert!(r.points.iter().all(|p| p.delta_sinr_db == Some(0.0)));
        assert_eq!(r.restored, 0);

        let off = vec![
            rec(-90.0, 10.0, ServiceState::Connected),
            rec(0.0, 0.0, ServiceState::NoAccess),
        ];
        let on = vec![
            rec(-82.0, 19.0, ServiceState::Connected),
            rec(-100.0, -3.0, ServiceState::Connected),
        ];
        let r = gain_report(&off, &on).unwrap();
        assert_eq!(r.points[0].delta_sinr_db, Some(9.0));
        assert_eq!(r.points[1].transition, AccessTransition::Restored);
        assert_eq!(r.points[1].delta_sinr_db, None);
        assert_eq!(r.restored, 1);
        assert_eq!(r.mean_delta_sinr_db, Some(9.0));
        assert_eq!(r.mean_delta_rsrp_db, Some(8.0));

        assert!(gain_report(&off, &on[..1]).is_err());
    }

    #[test]
    fn kpi_csv_round_trip() {
        let mut a = rec(-95.5, 3.25, ServiceState::Connected);
        a.timestamp_s = 1.5;
        a.position = Some(Vec3::new(10.0, -2.5, 1.25));
        let b = rec(0.0, 0.0, ServiceState::NoAccess);
        let mut buf = Vec::new();
        write_kpi_csv(&[a, b], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("timestamp_s,lat_or_x_m,lon_or_y_m,alt_or_z_m,rsrp_dbm,rsrq_db,rssi_dbm,sinr_db,service\n"));
        let back = read_kpi_csv(buf.as_slice()).unwrap();
        assert_eq!(back, vec![a, b]);
        assert!(read_kpi_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn kpis_monotone_in_signal(p in 1e-16f64..1e-3, s in 1.001f64..100.0) {
            let r = radio();
            let a = derive_kpis(p, &r, AccessMode::Maintaining).unwrap();
            let b = derive_kpis(p * s, &r, AccessMode::Maintaining).unwrap();
            prop_assert!(b.rssi_dbm > a.rssi_dbm);
            if a.is_connected() {
                prop_assert!(b.rsrp_dbm > a.rsrp_dbm);
                prop_assert!(b.sinr_db > a.sinr_db);
            }
            prop_assert!(a.rsrq_db <= 0.0 && b.rsrq_db <= 0.0);
        }

        #[test]
        fn gain_deltas_invariant_to_common_offset(p_off in 1e-11f64..1e-9, gain in 1.0f64..50.0, c in 0.5f64..20.0) {
            let r = radio();
            let k = |w: f64| derive_kpis(w, &r, AccessMode::Maintaining).unwrap();
            let base = gain_report(&[k(p_off)], &[k(p_off * gain)]).unwrap();
            let shifted = gain_report(&[k(p_off * c)], &[k(p_off * gain * c)]).unwrap();
            let d0 = base.points[0].delta_rsrp_db.unwrap();
            let d1 = shifted.points[0].delta_rsrp_db.unwrap();
            prop_assert!((d0 - d1).abs() < 1e-9);
        }
    }
}
