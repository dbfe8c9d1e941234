//! Drive-test analysis: robust free-space baseline fit, blockage gap
//! detection and line-of-sight classification.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec3};
use crate::kpi::{derive_kpis, AccessMode, KpiRecord, RadioConfig, SENTINEL_RSRP_DBM};
use crate::propagation::{fspl_db, sample_direct_path, DirectPath, LinkParams, PathLossModel};
use crate::{dbm_to_watts, watts_to_dbm};

pub const DEFAULT_DROP_THRESHOLD_DB: f64 = 10.0;
pub const DEFAULT_MIN_RUN: usize = 3;
/// Mean Earth radius used by the tangent-plane projection.
const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, PartialEq)]
pub struct DriveTrace {
    records: Vec<KpiRecord>,
    gnb_pos: Vec3,
    freq: f64,
}

impl DriveTrace {
    /// Validates ordering and positions.
    pub fn new(records: Vec<KpiRecord>, gnb_pos: Vec3, freq: f64) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidTrace("trace is empty".into()));
        }
        if !(freq > 0.0) {
            return Err(Error::InvalidTrace("frequency must be positive".into()));
        }
        if !gnb_pos.is_finite() {
            return Err(Error::InvalidTrace("gNB position must be finite".into()));
        }
        for (i, r) in records.iter().enumerate() {
            match r.position {
                Some(p) if p.is_finite() => {}
                _ => {
                    return Err(Error::InvalidTrace(format!("record {i} has no position")));
                }
            }
        }
        if let Some(i) = records
            .windows(2)
            .position(|w| !(w[1].timestamp_s > w[0].timestamp_s))
        {
            return Err(Error::InvalidTrace(format!(
                "timestamps not strictly increasing at record {}",
                i + 1
            )));
        }
        Ok(DriveTrace {
            records,
            gnb_pos,
            freq,
        })
    }

    /// Builds a trace whose positions are WGS-84 `(lat°, lon°, alt m)` in the
    /// first three CSV columns. Everything, the gNB included, is projected to
    /// a local east-north-up frame centered on the trace centroid.
    pub fn from_geodetic(
        records: Vec<KpiRecord>,
        gnb_lat_lon_alt: Vec3,
        freq: f64,
    ) -> Result<Self> {
        let pts: Vec<Vec3> = records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.position
                    .ok_or_else(|| Error::InvalidTrace(format!("record {i} has no position")))
            })
            .collect::<Result<_>>()?;
        if pts.is_empty() {
            return Err(Error::InvalidTrace("trace is empty".into()));
        }
        let n = pts.len() as f64;
        let lat0 = pts.iter().map(|p| p.x).sum::<f64>() / n;
        let lon0 = pts.iter().map(|p| p.y).sum::<f64>() / n;
        let project = |p: Vec3| {
            let east = EARTH_RADIUS_M * (p.y - lon0).to_radians() * lat0.to_radians().cos();
            let north = EARTH_RADIUS_M * (p.x - lat0).to_radians();
            Vec3::new(east, north, p.z)
        };
        let records = records
            .into_iter()
            .map(|r| KpiRecord {
                position: r.position.map(project),
                ..r
            })
            .collect();
        DriveTrace::new(records, project(gnb_lat_lon_alt), freq)
    }

    pub fn records(&self) -> &[KpiRecord] {
        &self.records
    }

    pub fn gnb_pos(&self) -> Vec3 {
        self.gnb_pos
    }

    pub fn freq(&self) -> f64 {
        self.freq
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn position(&self, i: usize) -> Vec3 {
        self.records[i].position.expect("validated on construction")
    }

    /// Free-space loss from the gNB to every sample.
    pub fn fspl_per_sample(&self) -> Result<Vec<f64>> {
        (0..self.len())
            .map(|i| fspl_db(self.gnb_pos.distance(self.position(i)), self.freq))
            .collect()
    }
}

fn is_sentinel(r: &KpiRecord) -> bool {
    !r.is_connected() || r.rsrp_dbm <= SENTINEL_RSRP_DBM
}

/// Offset `c` for the baseline `RSRP ≈ −FSPL + c` minimizing the median
/// absolute residual over non-sentinel samples.
///
/// The median is the ⌈m/2⌉-th smallest absolute residual, so the optimum is
/// the midpoint of the narrowest window holding ⌈m/2⌉ sorted values of
/// `RSRP + FSPL` (the first such window on ties).
pub fn fit_fspl_baseline(trace: &DriveTrace) -> Result<f64> {
    let fspl = trace.fspl_per_sample()?;
    let mut x: Vec<f64> = trace
        .records
        .iter()
        .zip(&fspl)
        .filter(|(r, _)| !is_sentinel(r))
        .map(|(r, l)| r.rsrp_dbm + l)
        .collect();
    if x.is_empty() {
        return Err(Error::NoUsableSamples);
    }
    x.sort_by(f64::total_cmp);
    let k = x.len().div_ceil(2);
    let (start, _) = (0..=x.len() - k).map(|j| (j, x[j + k - 1] - x[j])).fold(
        (0, f64::INFINITY),
        |best, cur| if cur.1 < best.1 { cur } else { best },
    );
    Ok(0.5 * (x[start] + x[start + k - 1]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    /// Inclusive `(start, end)` sample ranges.
    pub gap_intervals: Vec<(usize, usize)>,
    /// Expected minus measured RSRP, dB.
    pub per_sample_residual: Vec<f64>,
    pub fitted_offset: f64,
}

impl GapReport {
    pub fn in_gap(&self, i: usize) -> bool {
        self.gap_intervals.iter().any(|&(s, e)| s <= i && i <= e)
    }

    pub fn gap_sample_count(&self) -> usize {
        self.gap_intervals.iter().map(|&(s, e)| e - s + 1).sum()
    }

    pub fn gap_sample_fraction(&self) -> f64 {
        self.gap_sample_count() as f64 / self.per_sample_residual.len() as f64
    }

    /// CSV with columns `sample_index, residual_db, in_gap`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sample_index", "residual_db", "in_gap"])?;
        for (i, r) in self.per_sample_residual.iter().enumerate() {
            w.write_record([
                i.to_string(),
                format!("{r:.2}"),
                u8::from(self.in_gap(i)).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<gap report>", e))?;
        Ok(())
    }

    /// `fitted_offset_db=…,gap_count=…,gap_sample_fraction=…`
    pub fn summary_line(&self) -> String {
        format!(
            "fitted_offset_db={:.2},gap_count={},gap_sample_fraction={:.4}",
            self.fitted_offset,
            self.gap_intervals.len(),
            self.gap_sample_fraction()
        )
    }
}

/// Flags maximal runs of at least `min_run` samples whose RSRP sits
/// `drop_threshold` dB or more below the fitted baseline. Samples without
/// service always count as depressed.
pub fn detect_gaps(
    trace: &DriveTrace,
    offset: f64,
    drop_threshold: f64,
    min_run: usize,
) -> Result<GapReport> {
    if !offset.is_finite() {
        return Err(Error::domain("offset must be finite"));
    }
    if !(drop_threshold > 0.0) {
        return Err(Error::domain("drop threshold must be positive"));
    }
    let fspl = trace.fspl_per_sample()?;
    let residual: Vec<f64> = trace
        .records
        .iter()
        .zip(&fspl)
        .map(|(r, l)| (offset - l) - r.rsrp_dbm)
        .collect();
    let flagged: Vec<bool> = trace
        .records
        .iter()
        .zip(&residual)
        .map(|(r, &res)| is_sentinel(r) || res >= drop_threshold)
        .collect();

    let min_run = min_run.max(1);
    let mut gap_intervals = Vec::new();
    let mut i = 0;
    while i < flagged.len() {
        if !flagged[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < flagged.len() && flagged[i] {
            i += 1;
        }
        if i - start >= min_run {
            gap_intervals.push((start, i - 1));
        }
    }
    Ok(GapReport {
        gap_intervals,
        per_sample_residual: residual,
        fitted_offset: offset,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LosState {
    LoS,
    NLoS,
}

/// NLoS when the gNB→sample segment touches any obstacle box.
pub fn classify_los(trace: &DriveTrace, obstacles: &[Aabb]) -> Result<Vec<LosState>> {
    if let Some(i) = obstacles.iter().position(|b| !b.is_well_formed()) {
        return Err(Error::domain(format!(
            "obstacle {i} is not a well-formed box"
        )));
    }
    Ok((0..trace.len())
        .map(|i| {
            let p = trace.position(i);
            if obstacles
                .iter()
                .any(|b| b.intersects_segment(trace.gnb_pos, p))
            {
                LosState::NLoS
            } else {
                LosState::LoS
            }
        })
        .collect())
}

/// Parameters for [`synthesize_trace`].
#[derive(Debug, Clone)]
pub struct TraceSynthesis {
    pub gnb_pos: Vec3,
    pub freq: f64,
    pub tx_power_dbm: f64,
    pub model: PathLossModel,
    pub tx_gain_dbi: f64,
    pub rx_gain_dbi: f64,
    pub radio: RadioConfig,
    /// Seconds between samples.
    pub sample_period_s: f64,
    pub master_seed: u64,
}

impl TraceSynthesis {
    /// RSRP offset a perfect fit should recover: `RSRP = −FSPL + offset`
    /// for an unobstructed, unfaded free-space sample.
    pub fn nominal_offset_db(&self) -> f64 {
        let n_re = (self.radio.n_rb * crate::kpi::SUBCARRIERS_PER_RB) as f64;
        self.tx_power_dbm + self.tx_gain_dbi + self.rx_gain_dbi - 10.0 * n_re.log10()
    }
}

/// Drive-test trace along `route` as seen by a connected terminal; samples
/// flagged in `obstructed` lose the model's blockage loss.
pub fn synthesize_trace(
    route: &[Vec3],
    obstructed: &[bool],
    params: &TraceSynthesis,
) -> Result<DriveTrace> {
    if route.len() != obstructed.len() {
        return Err(Error::LengthMismatch {
            expected: route.len(),
            got: obstructed.len(),
        });
    }
    let root = crate::rng::SeedStream::new(params.master_seed);
    let tx_w = dbm_to_watts(params.tx_power_dbm);
    let records = route
        .iter()
        .zip(obstructed)
        .enumerate()
        .map(|(i, (&p, &blocked))| {
            let link = LinkParams {
                tx_gain_dbi: params.tx_gain_dbi,
                rx_gain_dbi: params.rx_gain_dbi,
                direct: if blocked {
                    DirectPath::Obstructed
                } else {
                    DirectPath::Clear
                },
                noise_power_w: params.radio.noise_power_w()?,
            };
            let seed = root.path(&[i as u64, crate::rng::purpose::CHANNEL]).seed();
            let c = sample_direct_path(params.gnb_pos, p, params.freq, &params.model, &link, seed)?;
            let signal = tx_w * c.amplitude() * c.amplitude();
            let mut rec = derive_kpis(signal, &params.radio, AccessMode::Maintaining)?;
            rec.timestamp_s = i as f64 * params.sample_period_s;
            rec.position = Some(p);
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    DriveTrace::new(records, params.gnb_pos, params.freq)
}

/// Jaccard index of two sample sets given as boolean masks.
pub fn jaccard(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// RSRP in dBm from signal power, exposed for trace tooling.
pub fn rsrp_dbm_for(signal_w: f64, radio: &RadioConfig) -> f64 {
    watts_to_dbm(signal_w / (radio.n_rb * crate::kpi::SUBCARRIERS_PER_RB) as f64)
}
