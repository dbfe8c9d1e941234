//! Configuration algorithms for two-state surfaces.
//!
//! Every measurement-driven algorithm talks to a [`PowerOracle`], so the same
//! code can drive a simulated channel or, in principle, a power meter behind
//! real hardware. Algorithms are single-threaded and query the oracle in a
//! fixed, documented order.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec3};
use crate::propagation::{angular_distance, wrap_phase, ChannelRealization};
use crate::surface::{BlockLayout, PhaseBitmap, RisSurface};
use crate::watts_to_dbm;

/// Largest problem [`brute_force`] accepts.
pub const BRUTE_FORCE_CAP: usize = 24;
pub const DEFAULT_MAX_PASSES: usize = 3;
pub const DEFAULT_GROUP_SIZE: usize = 4;
/// Half-extent of the grid-search box around each position estimate.
pub const DEFAULT_GRID_EXTENT_M: f64 = 1.0;
pub const DEFAULT_GRID_STEP_M: f64 = 0.25;

/// Source of received-power readings for a configuration.
pub trait PowerOracle {
    /// One power reading in watts. Each call counts as one evaluation.
    fn evaluate(&mut self, config: &PhaseBitmap) -> Result<f64>;

    /// Number of [`evaluate`](Self::evaluate) calls so far.
    fn eval_count(&self) -> u64;
}

impl<O: PowerOracle + ?Sized> PowerOracle for &mut O {
    fn evaluate(&mut self, config: &PhaseBitmap) -> Result<f64> {
        (**self).evaluate(config)
    }

    fn eval_count(&self) -> u64 {
        (**self).eval_count()
    }
}

/// Oracle backed by a closure.
pub struct FnOracle<F> {
    f: F,
    count: u64,
}

impl<F> FnOracle<F>
where
    F: FnMut(&PhaseBitmap) -> Result<f64>,
{
    pub fn new(f: F) -> Self {
        FnOracle { f, count: 0 }
    }
}

impl<F> PowerOracle for FnOracle<F>
where
    F: FnMut(&PhaseBitmap) -> Result<f64>,
{
    fn evaluate(&mut self, config: &PhaseBitmap) -> Result<f64> {
        self.count += 1;
        (self.f)(config)
    }

    fn eval_count(&self) -> u64 {
        self.count
    }
}

/// Additive Gaussian error on each power reading.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasurementNoise {
    #[default]
    Off,
    /// Standard deviation proportional to the true reading.
    Relative { sigma: f64 },
    /// Fixed standard deviation in watts.
    Absolute { sigma_w: f64 },
}

/// Power meter on a frozen simulated channel.
#[derive(Debug, Clone)]
pub struct SimulatedOracle {
    terms: Vec<Complex64>,
    direct: Complex64,
    tx_power_w: f64,
    noise: MeasurementNoise,
    rng: Option<ChaCha8Rng>,
    count: u64,
}

impl SimulatedOracle {
    pub fn new(realization: &ChannelRealization, tx_power_w: f64) -> Result<Self> {
        realization.validate()?;
        Ok(SimulatedOracle {
            terms: realization.cascade_terms(),
            direct: realization.direct.to_complex(),
            tx_power_w,
            noise: MeasurementNoise::Off,
            rng: None,
            count: 0,
        })
    }

    /// Enables reading noise drawn from a generator seeded with `seed`.
    pub fn with_noise(mut self, noise: MeasurementNoise, seed: u64) -> Self {
        self.noise = noise;
        self.rng = match noise {
            MeasurementNoise::Off => None,
            _ => Some(crate::rng::SeedStream::new(seed).rng()),
        };
        self
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Noiseless power; does not count as an evaluation.
    pub fn true_power(&self, config: &PhaseBitmap) -> Result<f64> {
        if config.len() != self.terms.len() {
            return Err(Error::LengthMismatch {
                expected: self.terms.len(),
                got: config.len(),
            });
        }
        let mut acc = self.direct;
        for (t, &s) in self.terms.iter().zip(config.bits()) {
            if s {
                acc -= t;
            } else {
                acc += t;
            }
        }
        Ok(self.tx_power_w * acc.norm_sqr())
    }
}

impl PowerOracle for SimulatedOracle {
    fn evaluate(&mut self, config: &PhaseBitmap) -> Result<f64> {
        let p = self.true_power(config)?;
        self.count += 1;
        let sigma = match self.noise {
            MeasurementNoise::Off => return Ok(p),
            MeasurementNoise::Relative { sigma } => sigma * p,
            MeasurementNoise::Absolute { sigma_w } => sigma_w,
        };
        let rng = self.rng.as_mut().expect("noise enabled without generator");
        let z: f64 = rng.sample(StandardNormal);
        // a power meter never reports a negative reading
        Ok((p + sigma * z).max(0.0))
    }

    fn eval_count(&self) -> u64 {
        self.count
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub step: usize,
    /// Element index for the plain sweep, group index for grouped sweeps.
    pub index: usize,
    /// 1-based pass number.
    pub pass: usize,
    /// Whether the step changed the configuration.
    pub accepted: bool,
    /// Best reading kept so far, watts.
    pub best_power_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationTrace {
    pub steps: Vec<TraceStep>,
    pub final_config: PhaseBitmap,
    /// Last kept reading for `final_config`.
    pub final_power_w: f64,
    pub evaluations: u64,
    pub passes: usize,
    /// True when the sweep stopped on a pass without changes.
    pub converged: bool,
}

impl OptimizationTrace {
    /// Running best reading, one entry per step; non-decreasing.
    pub fn best_power_sequence(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.best_power_w).collect()
    }

    /// CSV with columns `step, element_or_group_index, pass, accepted, best_power_dbm`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "step",
            "element_or_group_index",
            "pass",
            "accepted",
            "best_power_dbm",
        ])?;
        for s in &self.steps {
            w.write_record([
                s.step.to_string(),
                s.index.to_string(),
                s.pass.to_string(),
                u8::from(s.accepted).to_string(),
                format!("{:.2}", watts_to_dbm(s.best_power_w)),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<trace>", e))?;
        Ok(())
    }
}

/// Element-by-element sweep: each element is measured in both states and the
/// better one is kept (ties keep the current state). Passes repeat until one
/// makes no change or `max_passes` is reached.
pub fn iterative<O: PowerOracle>(
    oracle: &mut O,
    n: usize,
    initial: &PhaseBitmap,
    max_passes: usize,
) -> Result<OptimizationTrace> {
    let groups: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    sweep(oracle, n, &groups, initial, max_passes)
}

/// Consecutive index ranges of `group_size`; the last group may be shorter.
pub fn consecutive_groups(n: usize, group_size: usize) -> Vec<Vec<usize>> {
    (0..n)
        .step_by(group_size.max(1))
        .map(|start| (start..(start + group_size).min(n)).collect())
        .collect()
}

/// Square `tile × tile` patches of the element grid, in block-major index
/// order of each patch's first element. Requires `tile` to divide 8.
pub fn spatial_tile_groups(layout: BlockLayout, tile: usize) -> Result<Vec<Vec<usize>>> {
    layout.validate()?;
    if tile == 0 || !crate::surface::BLOCK_DIM.is_multiple_of(tile) {
        return Err(Error::domain(format!("tile size {tile} must divide 8")));
    }
    let n = layout.element_count();
    let cols = layout.element_cols();
    let mut index_at = vec![0usize; n];
    for i in 0..n {
        let (r, c) = layout.grid_position(i);
        index_at[r * cols + c] = i;
    }
    let mut groups: Vec<Vec<usize>> = Vec::with_capacity(n / (tile * tile));
    for i in 0..n {
        let (r, c) = layout.grid_position(i);
        if r % tile == 0 && c % tile == 0 {
            let mut g: Vec<usize> = (0..tile)
                .flat_map(|dr| (0..tile).map(move |dc| (dr, dc)))
                .map(|(dr, dc)| index_at[(r + dr) * cols + c + dc])
                .collect();
            g.sort_unstable();
            groups.push(g);
        }
    }
    Ok(groups)
}

/// Grouped sweep over consecutive index ranges. Each group is measured with
/// all its elements in state 0 and all in state 1, and the better uniform
/// assignment is kept.
pub fn grouped_iterative<O: PowerOracle>(
    oracle: &mut O,
    n: usize,
    group_size: usize,
    initial: &PhaseBitmap,
    max_passes: usize,
) -> Result<OptimizationTrace> {
    if group_size == 0 {
        return Err(Error::domain("group size must be at least 1"));
    }
    sweep(
        oracle,
        n,
        &consecutive_groups(n, group_size),
        initial,
        max_passes,
    )
}

/// Grouped sweep over caller-supplied groups.
pub fn grouped_iterative_with<O: PowerOracle>(
    oracle: &mut O,
    n: usize,
    groups: &[Vec<usize>],
    initial: &PhaseBitmap,
    max_passes: usize,
) -> Result<OptimizationTrace> {
    if groups
        .iter()
        .any(|g| g.is_empty() || g.iter().any(|&i| i >= n))
    {
        return Err(Error::domain(
            "groups must be non-empty and index into the surface",
        ));
    }
    sweep(oracle, n, groups, initial, max_passes)
}

fn uniform_state(config: &PhaseBitmap, group: &[usize]) -> Option<bool> {
    let first = config.get(group[0]);
    group
        .iter()
        .all(|&i| config.get(i) == first)
        .then_some(first)
}

fn assign(config: &mut PhaseBitmap, group: &[usize], state: bool) {
    for &i in group {
        config.set(i, state);
    }
}

fn sweep<O: PowerOracle>(
    oracle: &mut O,
    n: usize,
    groups: &[Vec<usize>],
    initial: &PhaseBitmap,
    max_passes: usize,
) -> Result<OptimizationTrace> {
    if n == 0 {
        return Err(Error::domain("need at least one element"));
    }
    if initial.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: initial.len(),
        });
    }
    if max_passes == 0 {
        return Err(Error::domain("max_passes must be at least 1"));
    }
    let start_count = oracle.eval_count();
    let mut config = initial.clone();
    // reading of the current configuration, once known
    let mut incumbent: Option<f64> = None;
    let mut best = f64::NEG_INFINITY;
    let mut steps = Vec::new();
    let mut passes = 0;
    let mut converged = false;

    while passes < max_passes {
        passes += 1;
        let mut changed = false;
        for (gi, group) in groups.iter().enumerate() {
            let (accepted, kept) = match uniform_state(&config, group) {
                Some(current) => {
                    let p_cur = oracle.evaluate(&config)?;
                    assign(&mut config, group, !current);
                    let p_alt = oracle.evaluate(&config)?;
                    if p_alt > p_cur {
                        (true, p_alt)
                    } else {
                        assign(&mut config, group, current);
                        (false, p_cur)
                    }
                }
                None => {
                    let p_inc = match incumbent {
                        Some(p) => p,
                        None => oracle.evaluate(&config)?,
                    };
                    let saved = config.clone();
                    assign(&mut config, group, false);
                    let p0 = oracle.evaluate(&config)?;
                    assign(&mut config, group, true);
                    let p1 = oracle.evaluate(&config)?;
                    let (state, p_uni) = if p1 > p0 { (true, p1) } else { (false, p0) };
                    if p_uni > p_inc {
                        assign(&mut config, group, state);
                        (true, p_uni)
                    } else {
                        config = saved;
                        (false, p_inc)
                    }
                }
            };
            incumbent = Some(kept);
            changed |= accepted;
            best = best.max(kept);
            steps.push(TraceStep {
                step: steps.len(),
                index: gi,
                pass: passes,
                accepted,
                best_power_w: best,
            });
        }
        if !changed {
            converged = true;
            break;
        }
    }

    Ok(OptimizationTrace {
        steps,
        final_config: config,
        final_power_w: incumbent.unwrap_or(f64::NAN),
        evaluations: oracle.eval_count() - start_count,
        passes,
        converged,
    })
}

/// Nearest available state for a desired correction phase: `true` (π) when
/// the phase is strictly closer to π than to 0.
#[inline]
pub fn quantize_phase(phase: f64) -> bool {
    angular_distance(phase, PI) < angular_distance(phase, 0.0)
}

/// Configuration computed from positions alone: each element's cascade
/// phase `(2π/λ)·(d_tx,i + d_i,rx)` is quantized to the nearer of {0, π}.
pub fn location_based(
    tx: Vec3,
    rx: Vec3,
    surface: &RisSurface,
    wavelength: f64,
) -> Result<PhaseBitmap> {
    if !(wavelength > 0.0) {
        return Err(Error::domain("wavelength must be positive"));
    }
    let k = TAU / wavelength;
    let bits = surface
        .element_positions()
        .iter()
        .map(|&p| {
            let (dt, dr) = (tx.distance(p), p.distance(rx));
            if !(dt > 0.0 && dr > 0.0) {
                return Err(Error::domain("terminal coincides with a surface element"));
            }
            Ok(quantize_phase(wrap_phase(k * (dt + dr))))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseBitmap::from_bools(bits))
}

/// Convenience wrapper taking estimated positions from a [`LinkGeometry`].
///
/// [`LinkGeometry`]: crate::propagation::LinkGeometry
pub fn location_based_for(
    geometry_est: &crate::propagation::LinkGeometry,
    surface: &RisSurface,
    wavelength: f64,
) -> Result<PhaseBitmap> {
    location_based(
        geometry_est.tx_pos,
        geometry_est.rx_pos,
        surface,
        wavelength,
    )
}

/// Grid nodes of `region` at spacing `step`, x outermost and z innermost.
pub fn grid_points(region: &Aabb, step: f64) -> Result<Vec<Vec3>> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::domain("grid step must be positive"));
    }
    if !region.is_well_formed() {
        return Err(Error::NoCandidates);
    }
    let axis = |lo: f64, hi: f64| -> Vec<f64> {
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| lo + k as f64 * step).collect()
    };
    let (xs, ys, zs) = (
        axis(region.min.x, region.max.x),
        axis(region.min.y, region.max.y),
        axis(region.min.z, region.max.z),
    );
    let mut out = Vec::with_capacity(xs.len() * ys.len() * zs.len());
    for &x in &xs {
        for &y in &ys {
            for &z in &zs {
                out.push(Vec3::new(x, y, z));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub config: PhaseBitmap,
    pub best_tx: Vec3,
    pub best_rx: Vec3,
    pub best_power_w: f64,
    pub candidates: usize,
}

/// Exhaustive search over candidate (Tx, Rx) pairs. Each pair's
/// location-based configuration is measured once; the first maximal pair in
/// enumeration order (Tx outer, Rx inner) wins.
pub fn grid_search<O: PowerOracle>(
    tx_region: &Aabb,
    rx_region: &Aabb,
    step: f64,
    surface: &RisSurface,
    oracle: &mut O,
    wavelength: f64,
) -> Result<GridSearchResult> {
    if !(wavelength > 0.0) {
        return Err(Error::domain("wavelength must be positive"));
    }
    let tx_pts = grid_points(tx_region, step)?;
    let rx_pts = grid_points(rx_region, step)?;
    if tx_pts.is_empty() || rx_pts.is_empty() {
        return Err(Error::NoCandidates);
    }
    let k = TAU / wavelength;
    let elems = surface.element_positions();
    let dists = |pts: &[Vec3]| -> Result<Vec<Vec<f64>>> {
        pts.iter()
            .map(|&q| {
                elems
                    .iter()
                    .map(|&p| {
                        let d = q.distance(p);
                        if d > 0.0 {
                            Ok(d)
                        } else {
                            Err(Error::domain("candidate coincides with a surface element"))
                        }
                    })
                    .collect()
            })
            .collect()
    };
    let tx_d = dists(&tx_pts)?;
    let rx_d = dists(&rx_pts)?;

    let mut best: Option<(f64, usize, usize, PhaseBitmap)> = None;
    for (ti, td) in tx_d.iter().enumerate() {
        for (ri, rd) in rx_d.iter().enumerate() {
            let config = PhaseBitmap::from_bools(
                td.iter()
                    .zip(rd)
                    .map(|(a, b)| quantize_phase(wrap_phase(k * (a + b))))
                    .collect(),
            );
            let p = oracle.evaluate(&config)?;
            if best.as_ref().is_none_or(|b| p > b.0) {
                best = Some((p, ti, ri, config));
            }
        }
    }
    let (best_power_w, ti, ri, config) = best.expect("non-empty candidate set");
    Ok(GridSearchResult {
        config,
        best_tx: tx_pts[ti],
        best_rx: rx_pts[ri],
        best_power_w,
        candidates: tx_pts.len() * rx_pts.len(),
    })
}

/// Global optimum by enumeration of all `2^n` configurations, in
/// lexicographic order with element 0 most significant. Ties keep the first.
pub fn brute_force<O: PowerOracle>(oracle: &mut O, n: usize) -> Result<(PhaseBitmap, f64)> {
    if n > BRUTE_FORCE_CAP {
        return Err(Error::BruteForceCap {
            n,
            cap: BRUTE_FORCE_CAP,
        });
    }
    if n == 0 {
        return Err(Error::domain("need at least one element"));
    }
    let mut config = PhaseBitmap::zeros(n);
    let mut best: Option<(u64, f64)> = None;
    for k in 0u64..(1u64 << n) {
        for i in 0..n {
            config.set(i, (k >> (n - 1 - i)) & 1 == 1);
        }
        let p = oracle.evaluate(&config)?;
        if best.is_none_or(|(_, bp)| p > bp) {
            best = Some((k, p));
        }
    }
    let (k, p) = best.expect("at least one configuration");
    let bits = (0..n).map(|i| (k >> (n - 1 - i)) & 1 == 1).collect();
    Ok((PhaseBitmap::from_bools(bits), p))
}
