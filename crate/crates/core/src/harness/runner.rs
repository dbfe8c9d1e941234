//! Monte-Carlo runner and result files.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec3};
use crate::harness::config::{DirectPathConfig, Grouping, InitialConfig, Method, ScenarioConfig};
use crate::kpi::{derive_kpis, gain_report, write_kpi_csv, GainReport, KpiRecord};
use crate::optimizer::{
    consecutive_groups, grid_search, grouped_iterative_with, iterative, spatial_tile_groups,
    OptimizationTrace, SimulatedOracle,
};
use crate::propagation::{sample_channel, LinkGeometry, LinkParams};
use crate::rng::{purpose, SeedStream};
use crate::surface::{optimal_continuous_power, tile_blocks, PhaseBitmap, RisSurface};
use crate::watts_to_dbm;

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    /// Noiseless power of the final configuration.
    pub power_w: f64,
    pub evaluations: u64,
    pub passes: usize,
    pub converged: bool,
    pub config: PhaseBitmap,
    pub kpi: KpiRecord,
    /// Absent for location-based search.
    pub trace: Option<OptimizationTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub trial: usize,
    pub tx_index: usize,
    pub rx_index: usize,
    pub tx_ris_m: f64,
    pub ris_rx_m: f64,
    /// Power with every element in state 0.
    pub off_power_w: f64,
    pub off_kpi: KpiRecord,
    pub continuous_bound_w: f64,
    /// One entry per method, in run order.
    pub outcomes: Vec<MethodOutcome>,
}

impl CellResult {
    pub fn outcome(&self, method: Method) -> Option<&MethodOutcome> {
        self.outcomes.iter().find(|o| o.method == method)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub name: String,
    pub element_count: usize,
    pub methods: Vec<Method>,
    /// Ordered by trial, then Tx, then Rx.
    pub cells: Vec<CellResult>,
}

impl RunResult {
    pub fn cell(&self, trial: usize, tx: usize, rx: usize) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.trial == trial && c.tx_index == tx && c.rx_index == rx)
    }
}

/// Shared per-scenario state.
struct Context<'a> {
    cfg: &'a ScenarioConfig,
    surface: RisSurface,
    groups: Vec<Vec<usize>>,
    link: LinkParams,
}

impl<'a> Context<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let g = &cfg.geometry;
        let surface = tile_blocks(cfg.layout, g.ris_center, g.ris_normal)?;
        let n = surface.len();
        let o = &cfg.optimizer;
        let groups = match o.grouping {
            Grouping::Consecutive => consecutive_groups(n, o.group_size),
            Grouping::SpatialTiles => spatial_tile_groups(cfg.layout, o.group_size.isqrt())?,
        };
        let link = LinkParams {
            tx_gain_dbi: cfg.channel.tx_gain_dbi,
            rx_gain_dbi: cfg.channel.rx_gain_dbi,
            direct: cfg.channel.direct(),
            noise_power_w: cfg.radio.noise_power_w()?,
        };
        Ok(Context {
            cfg,
            surface,
            groups,
            link,
        })
    }

    fn cell(&self, trial: usize, ti: usize, ri: usize, methods: &[Method]) -> Result<CellResult> {
        let cfg = self.cfg;
        let o = &cfg.optimizer;
        let tx = cfg.geometry.tx_positions[ti];
        let rx = cfg.geometry.rx_positions[ri];
        let geo = LinkGeometry {
            tx_pos: tx,
            ris_center: cfg.geometry.ris_center,
            rx_pos: rx,
            ris_normal: cfg.geometry.ris_normal,
            carrier_freq: cfg.channel.freq_hz,
        };
        let seeds = SeedStream::new(cfg.master_seed).path(&[trial as u64, ti as u64, ri as u64]);
        let model = cfg.channel.model();
        let ch = sample_channel(
            &geo,
            &self.surface,
            &model,
            &self.link,
            seeds.child(purpose::CHANNEL).seed(),
        )?;
        let tx_w = cfg.channel.tx_power_w();
        let base = SimulatedOracle::new(&ch, tx_w)?;
        let n = self.surface.len();
        let off = PhaseBitmap::zeros(n);
        let off_power_w = base.true_power(&off)?;
        let mode = cfg.access_mode.into();
        let initial = match o.initial {
            InitialConfig::Zeros => off.clone(),
            InitialConfig::Random => {
                let mut rng = seeds.child(purpose::INITIAL_CONFIG).rng();
                PhaseBitmap::from_bools((0..n).map(|_| rng.random_bool(0.5)).collect())
            }
        };
        let noise = o.measurement_noise.to_noise();

        let mut outcomes = Vec::with_capacity(methods.len());
        for &method in methods {
            let noise_seed = seeds
                .child(purpose::MEASUREMENT_NOISE)
                .child(method as u64)
                .seed();
            let mut oracle = base.clone().with_noise(noise, noise_seed);
            let (config, trace) = match method {
                Method::Iterative => {
                    let t = iterative(&mut oracle, n, &initial, o.max_passes)?;
                    (t.final_config.clone(), Some(t))
                }
                Method::GroupedIterative => {
                    let t = grouped_iterative_with(
                        &mut oracle,
                        n,
                        &self.groups,
                        &initial,
                        o.max_passes,
                    )?;
                    (t.final_config.clone(), Some(t))
                }
                Method::LocationBased => {
                    let mut rng = seeds.child(purpose::POSITION_ERROR).rng();
                    let mut estimate = |p: Vec3| {
                        let ex: f64 = rng.sample(StandardNormal);
                        let ey: f64 = rng.sample(StandardNormal);
                        p + Vec3::new(ex, ey, 0.0) * o.position_error_m
                    };
                    let (tx_est, rx_est) = (estimate(tx), estimate(rx));
                    let half = Vec3::new(o.grid_extent_m, o.grid_extent_m, o.grid_extent_z_m);
                    let r = grid_search(
                        &Aabb::around(tx_est, half),
                        &Aabb::around(rx_est, half),
                        o.grid_step_m,
                        &self.surface,
                        &mut oracle,
                        geo.wavelength(),
                    )?;
                    (r.config, None)
                }
            };
            let power_w = base.true_power(&config)?;
            outcomes.push(MethodOutcome {
                method,
                power_w,
                evaluations: crate::optimizer::PowerOracle::eval_count(&oracle),
                passes: trace.as_ref().map_or(0, |t| t.passes),
                converged: trace.as_ref().is_none_or(|t| t.converged),
                config,
                kpi: derive_kpis(power_w, &cfg.radio, mode)?,
                trace,
            });
        }
        Ok(CellResult {
            trial,
            tx_index: ti,
            rx_index: ri,
            tx_ris_m: tx.distance(cfg.geometry.ris_center),
            ris_rx_m: rx.distance(cfg.geometry.ris_center),
            off_power_w,
            off_kpi: derive_kpis(off_power_w, &cfg.radio, mode)?,
            continuous_bound_w: optimal_continuous_power(&ch, tx_w)?,
            outcomes,
        })
    }
}

/// Runs every (trial, Tx, Rx) cell with `methods`. Cells run on the current
/// rayon pool and are merged in order.
pub fn run_scenario(cfg: &ScenarioConfig, methods: &[Method]) -> Result<RunResult> {
    if methods.is_empty() {
        return Err(Error::Config(format!(
            "{}: no optimization methods",
            cfg.name
        )));
    }
    let ctx = Context::new(cfg)?;
    let (nt, nr) = (
        cfg.geometry.tx_positions.len(),
        cfg.geometry.rx_positions.len(),
    );
    let cells = (0..cfg.trials * nt * nr)
        .into_par_iter()
        .map(|k| ctx.cell(k / (nt * nr), (k / nr) % nt, k % nr, methods))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunResult {
        name: cfg.name.clone(),
        element_count: ctx.surface.len(),
        methods: methods.to_vec(),
        cells,
    })
}

/// A single cell, e.g. for inspecting one optimization trace.
pub fn run_cell(
    cfg: &ScenarioConfig,
    trial: usize,
    tx_index: usize,
    rx_index: usize,
    method: Method,
) -> Result<CellResult> {
    let g = &cfg.geometry;
    if trial >= cfg.trials || tx_index >= g.tx_positions.len() || rx_index >= g.rx_positions.len() {
        return Err(Error::Config("cell index out of range".into()));
    }
    Context::new(cfg)?.cell(trial, tx_index, rx_index, &[method])
}

fn methods_or(cfg: &ScenarioConfig, default: &[Method]) -> Vec<Method> {
    if cfg.optimizer.methods.is_empty() {
        default.to_vec()
    } else {
        cfg.optimizer.methods.clone()
    }
}

/// Tx sweep against a fixed receiver with iterative and location-based
/// configuration.
pub fn run_phase1(cfg: &ScenarioConfig) -> Result<RunResult> {
    if cfg.layout.element_count() != 256 {
        log::warn!("{}: phase 1 normally uses 256 elements", cfg.name);
    }
    run_scenario(
        cfg,
        &methods_or(cfg, &[Method::Iterative, Method::LocationBased]),
    )
}

/// Tx × Rx grid on the larger surface; adds the grouped sweep.
pub fn run_phase2(cfg: &ScenarioConfig) -> Result<RunResult> {
    if cfg.layout.element_count() != 576 {
        log::warn!("{}: phase 2 normally uses 576 elements", cfg.name);
    }
    run_scenario(
        cfg,
        &methods_or(
            cfg,
            &[
                Method::Iterative,
                Method::GroupedIterative,
                Method::LocationBased,
            ],
        ),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase3Result {
    pub run: RunResult,
    /// One report per (trial, Tx) over the UE points, comparing the off state
    /// with the first method's configuration.
    pub gains: Vec<GainReport>,
}

/// Fixed UE points behind an obstructed direct path, RIS off versus on.
pub fn run_phase3(cfg: &ScenarioConfig) -> Result<Phase3Result> {
    if !matches!(cfg.channel.direct_path, DirectPathConfig::Present { .. }) {
        return Err(Error::Config(format!(
            "{}: phase 3 needs a present direct path",
            cfg.name
        )));
    }
    let run = run_scenario(cfg, &methods_or(cfg, &[Method::Iterative]))?;
    let nr = cfg.geometry.rx_positions.len();
    let gains = run
        .cells
        .chunks(nr)
        .map(|chunk| {
            let (off, on) = kpi_pair(chunk, &cfg.geometry.rx_positions);
            gain_report(&off, &on)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Phase3Result { run, gains })
}

/// Off and first-method KPI records of a row of cells, stamped with the UE
/// index and position.
fn kpi_pair(cells: &[CellResult], rx: &[Vec3]) -> (Vec<KpiRecord>, Vec<KpiRecord>) {
    let stamp = |r: KpiRecord, c: &CellResult| KpiRecord {
        timestamp_s: c.rx_index as f64,
        position: Some(rx[c.rx_index]),
        ..r
    };
    cells
        .iter()
        .map(|c| (stamp(c.off_kpi, c), stamp(c.outcomes[0].kpi, c)))
        .unzip()
}

fn dbm(w: f64) -> String {
    format!("{:.2}", watts_to_dbm(w))
}

/// `results.csv`: one row per cell for the off state and each method.
pub fn results_csv(run: &RunResult) -> String {
    let mut s = String::from(
        "trial,tx_index,rx_index,tx_ris_m,ris_rx_m,method,power_dbm,evaluations,passes,converged,config_hex\n",
    );
    for c in &run.cells {
        let prefix = format!(
            "{},{},{},{:.2},{:.2}",
            c.trial, c.tx_index, c.rx_index, c.tx_ris_m, c.ris_rx_m
        );
        let _ = writeln!(
            s,
            "{prefix},off,{},0,0,1,{}",
            dbm(c.off_power_w),
            PhaseBitmap::zeros(run.element_count).to_hex()
        );
        for o in &c.outcomes {
            let _ = writeln!(
                s,
                "{prefix},{},{},{},{},{},{}",
                o.method.as_str(),
                dbm(o.power_w),
                o.evaluations,
                o.passes,
                u8::from(o.converged),
                o.config.to_hex()
            );
        }
    }
    s
}

/// `traces.csv`: every sweep step of every iterative run.
pub fn traces_csv(run: &RunResult) -> String {
    let mut s = String::from(
        "trial,tx_index,rx_index,method,step,element_or_group_index,pass,accepted,best_power_dbm\n",
    );
    for c in &run.cells {
        for o in &c.outcomes {
            let Some(t) = &o.trace else { continue };
            for st in &t.steps {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{}",
                    c.trial,
                    c.tx_index,
                    c.rx_index,
                    o.method.as_str(),
                    st.step,
                    st.index,
                    st.pass,
                    u8::from(st.accepted),
                    dbm(st.best_power_w)
                );
            }
        }
    }
    s
}

/// Mean received power per method over all cells, one line each.
pub fn summary(run: &RunResult) -> String {
    let n = run.cells.len() as f64;
    let mean_dbm = |f: &dyn Fn(&CellResult) -> f64| {
        run.cells.iter().map(|c| watts_to_dbm(f(c))).sum::<f64>() / n
    };
    let mut s = format!(
        "{}: {} cells, {} elements\n  off: mean {:.2} dBm\n",
        run.name,
        run.cells.len(),
        run.element_count,
        mean_dbm(&|c| c.off_power_w)
    );
    for (i, m) in run.methods.iter().enumerate() {
        let _ = writeln!(
            s,
            "  {}: mean {:.2} dBm",
            m.as_str(),
            mean_dbm(&|c| c.outcomes[i].power_w)
        );
    }
    s
}

pub fn gains_csv(p3: &Phase3Result, rx_per_row: usize) -> String {
    let mut s = String::from("trial,tx_index,point,transition,delta_rsrp_db,delta_sinr_db\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_default();
    for (row, g) in p3.gains.iter().enumerate() {
        let c = &p3.run.cells[row * rx_per_row];
        for p in &g.points {
            let _ = writeln!(
                s,
                "{},{},{},{:?},{},{}",
                c.trial,
                c.tx_index,
                p.index,
                p.transition,
                opt(p.delta_rsrp_db),
                opt(p.delta_sinr_db)
            );
        }
    }
    s
}

pub fn phase3_summary(p3: &Phase3Result) -> String {
    let mut s = summary(&p3.run);
    let restored: usize = p3.gains.iter().map(|g| g.restored).sum();
    let lost: usize = p3.gains.iter().map(|g| g.lost).sum();
    let _ = writeln!(
        s,
        "  access restored at {restored} point(s), lost at {lost}"
    );
    s
}

fn write(dir: &Path, file: &str, data: &[u8]) -> Result<()> {
    let path = dir.join(file);
    std::fs::write(&path, data).map_err(|e| Error::io(&path, e))
}

fn kpi_bytes(records: &[KpiRecord]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_kpi_csv(records, &mut buf)?;
    Ok(buf)
}

/// Writes `results.csv`, `traces.csv`, `kpi_off.csv` and `kpi_<method>.csv`.
pub fn write_run(run: &RunResult, dir: &Path, rx: &[Vec3]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(dir, "results.csv", results_csv(run).as_bytes())?;
    write(dir, "traces.csv", traces_csv(run).as_bytes())?;
    let stamp = |r: KpiRecord, c: &CellResult, k: usize| KpiRecord {
        timestamp_s: k as f64,
        position: Some(rx[c.rx_index]),
        ..r
    };
    let off: Vec<KpiRecord> = run
        .cells
        .iter()
        .enumerate()
        .map(|(k, c)| stamp(c.off_kpi, c, k))
        .collect();
    write(dir, "kpi_off.csv", &kpi_bytes(&off)?)?;
    for (i, m) in run.methods.iter().enumerate() {
        let on: Vec<KpiRecord> = run
            .cells
            .iter()
            .enumerate()
            .map(|(k, c)| stamp(c.outcomes[i].kpi, c, k))
            .collect();
        write(dir, &format!("kpi_{}.csv", m.as_str()), &kpi_bytes(&on)?)?;
    }
    write(dir, "summary.txt", summary(run).as_bytes())
}

/// Phase-3 files: everything from [`write_run`] plus `kpi_on.csv` (first
/// method, per UE point) and `gains.csv`.
pub fn write_phase3(p3: &Phase3Result, dir: &Path, rx: &[Vec3]) -> Result<()> {
    write_run(&p3.run, dir, rx)?;
    let on: Vec<KpiRecord> = p3
        .run
        .cells
        .chunks(rx.len())
        .flat_map(|chunk| kpi_pair(chunk, rx).1)
        .collect();
    write(dir, "kpi_on.csv", &kpi_bytes(&on)?)?;
    write(dir, "gains.csv", gains_csv(p3, rx.len()).as_bytes())?;
    write(dir, "summary.txt", phase3_summary(p3).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{NoiseConfig, PHASE1_DEFAULT, PHASE2_DEFAULT, PHASE3_DEFAULT};

    fn small(text: &str) -> ScenarioConfig {
        let mut c = ScenarioConfig::from_toml(text).unwrap();
        c.trials = 1;
        c
    }

    #[test]
    fn phase1_rows_and_ordering() {
        let cfg = small(PHASE1_DEFAULT);
        let r = run_phase1(&cfg).unwrap();
        assert_eq!(r.cells.len(), 10);
        for c in &r.cells {
            for o in &c.outcomes {
                assert!(o.power_w >= c.off_power_w);
                assert!(o.power_w <= c.continuous_bound_w * (1.0 + 1e-9));
            }
        }
        // Tx points are listed by increasing distance
        let best: Vec<f64> = r
            .cells
            .iter()
            .map(|c| c.outcome(Method::Iterative).unwrap().power_w)
            .collect();
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn phase2_counts() {
        let mut cfg = small(PHASE2_DEFAULT);
        cfg.optimizer.grid_extent_m = 0.25;
        let r = run_phase2(&cfg).unwrap();
        assert_eq!(r.cells.len(), 9);
        let entries: usize = r.cells.iter().map(|c| 1 + c.outcomes.len()).sum();
        assert_eq!(entries, 36);
        assert_eq!(results_csv(&r).lines().count(), 37);
    }

    #[test]
    fn cells_do_not_depend_on_pool_size() {
        let mut cfg = small(PHASE2_DEFAULT);
        cfg.optimizer.methods = vec![Method::Iterative, Method::GroupedIterative];
        cfg.trials = 2;
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = one.install(|| run_phase2(&cfg)).unwrap();
        let b = four.install(|| run_phase2(&cfg)).unwrap();
        assert_eq!(a, b);
        assert_eq!(results_csv(&a), results_csv(&b));
        assert_eq!(traces_csv(&a), traces_csv(&b));
    }

    #[test]
    fn noiseless_runs_never_lose_power() {
        let mut cfg = small(PHASE2_DEFAULT);
        cfg.optimizer.measurement_noise = NoiseConfig::Off;
        cfg.optimizer.methods = vec![Method::Iterative, Method::GroupedIterative];
        for c in run_phase2(&cfg).unwrap().cells {
            for o in &c.outcomes {
                assert!(o.power_w >= c.off_power_w);
            }
        }
    }

    #[test]
    fn phase3_without_blockage_is_connected_everywhere() {
        let mut cfg = small(PHASE3_DEFAULT);
        cfg.channel.direct_path = DirectPathConfig::Present { blockage_db: 0.0 };
        let p3 = run_phase3(&cfg).unwrap();
        assert!(p3.run.cells.iter().all(|c| c.off_kpi.is_connected()));
        assert_eq!(p3.gains[0].restored, 0);
    }

    #[test]
    fn phase3_requires_direct_path() {
        let mut cfg = small(PHASE3_DEFAULT);
        cfg.channel.direct_path = DirectPathConfig::Absent;
        assert!(matches!(run_phase3(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn identical_states_give_zero_gain() {
        let cfg = small(PHASE3_DEFAULT);
        let p3 = run_phase3(&cfg).unwrap();
        let (off, _) = kpi_pair(&p3.run.cells, &cfg.geometry.rx_positions);
        let g = gain_report(&off, &off).unwrap();
        assert_eq!(g.restored + g.lost, 0);
        assert!(g
            .points
            .iter()
            .filter_map(|p| p.delta_rsrp_db)
            .all(|d| d == 0.0));
    }
}
