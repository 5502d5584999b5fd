use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use gqs_core::config::{ExperimentConfig, Mode};
use gqs_core::detector::{exact_detection_density, refined_detection_density, DetectionModel};
use gqs_core::gqs::{momentum_density, EigenGridSpec, EigenTable};
use gqs_core::grid::UniformGrid;
use gqs_core::inference::{
    ensemble_seeds, estimate as ml_estimate, run_draw, summarize_ensemble, DrawOutcome, EnsembleResult, ScanOptions,
    StatisticalModel,
};
use gqs_core::{io, sampling, Error};

use crate::{Common, Sampler};

/// Rows of the exported momentum density beyond which the time step is
/// coarsened.
const MAX_MOMENTUM_ROWS: usize = 20_000;

pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Config(_)) { 2 } else { 1 };
        Self {
            code,
            error: e.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self { code: 1, error }
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: e.into(),
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Provenance block carried by every JSON output.
#[derive(Debug, Serialize)]
struct Meta {
    schema: String,
    version: &'static str,
    config_hash: String,
    seed: u64,
    rng: &'static str,
}

#[derive(Debug, Serialize)]
struct Output<'a, T: Serialize> {
    meta: Meta,
    config: &'a ExperimentConfig,
    #[serde(flatten)]
    body: T,
}

struct Session {
    cfg: ExperimentConfig,
    out: PathBuf,
    force: bool,
    cache_dir: PathBuf,
}

impl Session {
    fn open(common: &Common) -> std::result::Result<Self, Failure> {
        let base = match &common.config {
            Some(p) => ExperimentConfig::load(p).map_err(usage)?,
            None => ExperimentConfig::default(),
        };
        let mut cfg = base.with_overrides(&common.overrides).map_err(usage)?;
        if let Some(s) = common.seed {
            cfg.statistics.seed = s;
        }
        fs::create_dir_all(&common.out).map_err(|e| Failure::from(Error::Io {
            path: common.out.clone(),
            source: e,
        }))?;
        let session = Self {
            cfg,
            out: common.out.clone(),
            force: common.force,
            cache_dir: common.cache_dir.clone(),
        };
        session.record_config()?;
        log::info!("config hash {}", session.cfg.hash());
        Ok(session)
    }

    /// Keeps the resolved configuration next to the outputs. A directory
    /// holding results of a different configuration is left alone unless
    /// forced.
    fn record_config(&self) -> CmdResult {
        let path = self.out.join("config.toml");
        let text = format!("# config hash {}\n{}", self.cfg.hash(), self.cfg.to_toml_string());
        if let Ok(old) = fs::read_to_string(&path) {
            if old == text {
                return Ok(());
            }
            if !self.force {
                return Err(usage(anyhow::anyhow!(
                    "{} holds outputs of another configuration; pass --force or choose another --out",
                    self.out.display()
                )));
            }
        }
        io::write_atomic(&path, text.as_bytes())?;
        Ok(())
    }

    fn path(&self, name: &str) -> std::result::Result<PathBuf, Failure> {
        let p = self.out.join(name);
        io::prepare_output(&p, self.force).map_err(usage)?;
        Ok(p)
    }

    fn meta(&self, schema: &str) -> Meta {
        Meta {
            schema: format!("gqs.{schema}/1"),
            version: env!("CARGO_PKG_VERSION"),
            config_hash: self.cfg.hash(),
            seed: self.cfg.statistics.seed,
            rng: sampling::RNG_ALGORITHM,
        }
    }

    fn write<T: Serialize>(&self, path: &Path, schema: &str, body: T) -> CmdResult {
        let out = Output {
            meta: self.meta(schema),
            config: &self.cfg,
            body,
        };
        io::write_json(path, &out)?;
        log::info!("wrote {}", path.display());
        Ok(())
    }

    fn table(&self) -> std::result::Result<Arc<EigenTable>, Failure> {
        let n = self.cfg.state_count()?;
        let t = io::cached_table(&self.cache_dir, &self.cfg.table_hash(), n, self.cfg.basis.eigen)?;
        Ok(Arc::new(t))
    }

    fn model(&self) -> std::result::Result<(Box<dyn StatisticalModel>, ScanOptions), Failure> {
        let table = match self.cfg.mode {
            Mode::Quantum => Some(self.table()?),
            Mode::Classical => None,
        };
        Ok(self.cfg.statistical_model(table)?)
    }
}

fn plate_window(cfg: &ExperimentConfig, model: &DetectionModel) -> gqs_core::Result<(UniformGrid, UniformGrid)> {
    let auto = if cfg.grids.x_range.is_none() || cfg.grids.t_range.is_none() {
        Some(model.auto_window(cfg.grids.tail)?)
    } else {
        None
    };
    let [x0, x1] = cfg.grids.x_range.unwrap_or_else(|| {
        let ((a, b), _) = auto.expect("computed");
        [a, b]
    });
    let [t0, t1] = cfg.grids.t_range.unwrap_or_else(|| {
        let (_, (a, b)) = auto.expect("computed");
        [a, b]
    });
    Ok((
        UniformGrid::new(x0, x1, cfg.grids.x_points)?,
        UniformGrid::new(t0, t1, cfg.grids.t_points)?,
    ))
}

#[derive(Debug, Serialize)]
struct RefinementSummary {
    t_step_tg: f64,
    p_step_pg: f64,
    l1_changes: Vec<f64>,
    converged: bool,
    l1_vs_pointwise: f64,
}

#[derive(Debug, Serialize)]
struct DensitySummary {
    files: Vec<String>,
    x_range_m: [f64; 2],
    t_range_s: [f64; 2],
    x_points: usize,
    t_points: usize,
    surviving_norm: f64,
    x_window_mass: f64,
    raw_mass: f64,
    expected_mass: f64,
    momentum_t_range_s: [f64; 2],
    momentum_t_step_tg: f64,
    momentum_p_range_pg: [f64; 2],
    /// (max - min) / mean of the row integrals of the momentum density
    momentum_norm_spread: f64,
    refinement: Option<RefinementSummary>,
}

pub fn density(common: &Common, grid_refine: bool) -> CmdResult {
    let s = Session::open(common)?;
    let cfg = &s.cfg;
    let files = [
        "detection.csv",
        "detection.bin",
        "momentum.csv",
        "momentum.bin",
        "density.json",
    ];
    let paths: Vec<PathBuf> = files.iter().map(|f| s.path(f)).collect::<std::result::Result<_, _>>()?;
    let refined_path = if grid_refine { Some(s.path("detection_tabulated.bin")?) } else { None };

    let model = cfg.detection_model(s.table()?)?;
    let ctx = *model.ctx();
    let (xg, tg) = plate_window(cfg, &model)?;
    let start = Instant::now();
    let dd = exact_detection_density(&model, xg, tg)?;
    log::info!("plate density on {}×{} in {:.1?}", xg.len, tg.len, start.elapsed());

    let d = cfg.geometry.mirror_length;
    let tau = model.mean_fall_time();
    let (m0, m1) = (tau * d / (xg.end() - d), tau * d / (xg.start - d));
    let mut dt = cfg.grids.t_step * ctx.time_scale;
    let mut rows = ((m1 - m0) / dt).ceil() as usize + 1;
    if rows > MAX_MOMENTUM_ROWS {
        log::warn!(
            "momentum export limited to {MAX_MOMENTUM_ROWS} time rows; step {:.3} t_g instead of {:.3} t_g",
            (m1 - m0) / (MAX_MOMENTUM_ROWS - 1) as f64 / ctx.time_scale,
            cfg.grids.t_step
        );
        rows = MAX_MOMENTUM_ROWS;
    }
    let t_axis = UniformGrid::new(m0, m1, rows.max(2))?;
    dt = t_axis.step;
    let p_cols = (2.0 * cfg.grids.p_max / cfg.grids.p_step).round() as usize + 1;
    let pg = ctx.momentum_scale;
    let p_axis = UniformGrid::new(-cfg.grids.p_max * pg, cfg.grids.p_max * pg, p_cols)?;
    let md = momentum_density(model.basis(), t_axis, p_axis)?;
    let norms = md.norms();
    let mean = norms.iter().sum::<f64>() / norms.len() as f64;
    let spread = (norms.iter().cloned().fold(f64::MIN, f64::max) - norms.iter().cloned().fold(f64::MAX, f64::min)) / mean;

    let refinement = match &refined_path {
        None => None,
        Some(path) => {
            let r = refined_detection_density(model.basis(), model.geometry(), xg, tg, cfg.grids.refine_tol, 6)?;
            for (i, c) in r.changes.iter().enumerate() {
                println!("refinement {}: L1 change {c:.3e}", i + 1);
            }
            if !r.converged {
                println!("refinement stopped at the momentum-cell budget before reaching {:.1e}", cfg.grids.refine_tol);
            }
            let vs = r.density.grid.l1_distance(&dd.grid);
            println!("tabulated vs pointwise L1: {vs:.3e}");
            io::write_grid_binary(path, &r.density.grid)?;
            Some(RefinementSummary {
                t_step_tg: r.t_step,
                p_step_pg: r.p_step,
                l1_changes: r.changes,
                converged: r.converged,
                l1_vs_pointwise: vs,
            })
        }
    };

    io::write_grid_csv(&paths[0], &dd.grid, ["X_m", "T_s", "density"])?;
    io::write_grid_binary(&paths[1], &dd.grid)?;
    io::write_grid_csv(&paths[2], &md.grid, ["t_s", "p_z", "density"])?;
    io::write_grid_binary(&paths[3], &md.grid)?;
    let summary = DensitySummary {
        files: files[..4].iter().map(|f| f.to_string()).collect(),
        x_range_m: [xg.start, xg.end()],
        t_range_s: [tg.start, tg.end()],
        x_points: xg.len,
        t_points: tg.len,
        surviving_norm: model.basis().surviving_norm(),
        x_window_mass: model.x_window_mass(),
        raw_mass: dd.raw_mass,
        expected_mass: model.expected_mass(),
        momentum_t_range_s: [m0, m1],
        momentum_t_step_tg: dt / ctx.time_scale,
        momentum_p_range_pg: [-cfg.grids.p_max, cfg.grids.p_max],
        momentum_norm_spread: spread,
        refinement,
    };
    println!(
        "X ∈ [{:.4}, {:.4}] m, T ∈ [{:.5}, {:.5}] s",
        xg.start,
        xg.end(),
        tg.start,
        tg.end()
    );
    println!(
        "plate mass {:.6} (Σ|c_n|² Φ_x = {:.6}), momentum norm spread {:.2e}",
        dd.raw_mass,
        model.expected_mass(),
        spread
    );
    s.write(&paths[4], "density", summary)
}

#[derive(Debug, Serialize)]
struct SampleSummary<'a> {
    sampler: &'static str,
    events_file: &'a str,
    g_true: f64,
    n: usize,
    blur: Option<sampling::Blur>,
}

pub fn sample(common: &Common, n: Option<usize>, sampler: Sampler) -> CmdResult {
    let s = Session::open(common)?;
    let cfg = &s.cfg;
    let n = n.unwrap_or(cfg.statistics.n_events);
    let seed = cfg.statistics.seed;
    let csv = s.path("events.csv")?;
    let json = s.path("events.json")?;
    let (set, name) = match (cfg.mode, sampler) {
        (Mode::Classical, _) => (cfg.classical_model()?.sample(cfg.physical.g0, n, seed)?, "classical"),
        (Mode::Quantum, Sampler::Transport) => {
            let model = cfg.detection_model(s.table()?)?;
            (sampling::transport_oracle_sample(&model, n, seed)?, "transport")
        }
        (Mode::Quantum, Sampler::Grid) => {
            let model = cfg.detection_model(s.table()?)?;
            let (xg, tg) = plate_window(cfg, &model)?;
            let dd = exact_detection_density(&model, xg, tg)?;
            (sampling::sample_events(&dd, n, seed)?, "grid")
        }
    };
    let blur = cfg.blur();
    let set = match blur {
        Some(b) => sampling::apply_blur(&set, b, cfg.geometry.mirror_length),
        None => set,
    };
    io::write_events_csv(&csv, &set.events)?;
    println!("{} events at g = {} m/s² → {}", set.len(), set.g_true, csv.display());
    s.write(
        &json,
        "events",
        SampleSummary {
            sampler: name,
            events_file: "events.csv",
            g_true: set.g_true,
            n: set.len(),
            blur,
        },
    )
}

#[derive(Debug, Serialize)]
struct EstimateBody<'a> {
    source: String,
    report: &'a gqs_core::inference::EstimateReport,
    fisher: Option<gqs_core::inference::FisherReport>,
    /// `√(1/(N I))` (m/s²)
    cramer_rao_sigma: Option<f64>,
}

pub fn estimate(common: &Common, events: Option<PathBuf>, fisher: bool) -> CmdResult {
    let s = Session::open(common)?;
    let cfg = &s.cfg;
    let out = s.path("estimate.json")?;
    let (model, scan) = s.model()?;
    let (events, source) = match &events {
        Some(p) => {
            let ev = io::read_events_csv(p, cfg.geometry.mirror_length).map_err(|e| match e {
                Error::Io { .. } => usage(e),
                other => other.into(),
            })?;
            (ev, p.display().to_string())
        }
        None => {
            let set = model.sample(cfg.physical.g0, cfg.statistics.n_events, cfg.statistics.seed)?;
            (set.events, format!("simulated, seed {}", cfg.statistics.seed))
        }
    };
    let mut report = ml_estimate(model.as_ref(), &events, &scan)?;
    let fisher_report = if fisher {
        let f = model.fisher(report.g_hat, &cfg.fisher)?;
        report = report.with_fisher(f.score);
        Some(f)
    } else {
        None
    };
    println!(
        "ĝ = {:.8} m/s², σ̂_g = {:.3e} m/s² (σ̂_g/g = {:.3e}), {} events, {} floored",
        report.g_hat,
        report.sigma_hat,
        report.sigma_hat / report.g_hat,
        report.n_events,
        report.floored_events
    );
    let cr = report.cr_bound.map(f64::sqrt);
    if let Some(c) = cr {
        println!("Cramér-Rao σ = {c:.3e} m/s²");
    }
    s.write(
        &out,
        "estimate",
        EstimateBody {
            source,
            report: &report,
            fisher: fisher_report,
            cramer_rao_sigma: cr,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ProgressKey {
    config_hash: String,
    mode: String,
    n_events: usize,
    draws: usize,
    seed: u64,
}

/// Runs or resumes an ensemble. Finished draws are appended to
/// `<tag>.progress.jsonl`, so an interrupted run continues where it stopped.
fn run_ensemble(s: &Session, tag: &str, model: &dyn StatisticalModel, scan: &ScanOptions) -> std::result::Result<EnsembleResult, Failure> {
    let cfg = &s.cfg;
    let key = ProgressKey {
        config_hash: cfg.hash(),
        mode: model.mode().to_string(),
        n_events: cfg.statistics.n_events,
        draws: cfg.statistics.ensemble_size,
        seed: cfg.statistics.seed,
    };
    let key_path = s.out.join(format!("{tag}.progress.json"));
    let log_path = s.out.join(format!("{tag}.progress.jsonl"));
    let mut done: Vec<DrawOutcome> = Vec::new();
    let resumable = !s.force && io::read_json::<ProgressKey>(&key_path).map(|k| k == key).unwrap_or(false);
    if resumable {
        done = io::read_jsonl(&log_path)?;
        done.retain(|o| o.index < key.draws);
        done.sort_by_key(|o| o.index);
        done.dedup_by_key(|o| o.index);
        if !done.is_empty() {
            log::info!("{tag}: resuming with {} of {} draws done", done.len(), key.draws);
        }
    } else {
        let _ = fs::remove_file(&log_path);
        io::write_json(&key_path, &key)?;
    }
    let seeds = ensemble_seeds(key.seed, key.draws);
    let mut finished = vec![false; key.draws];
    for o in &done {
        finished[o.index] = true;
    }
    let todo: Vec<usize> = (0..key.draws).filter(|i| !finished[*i]).collect();
    let chunk = (4 * rayon::current_num_threads()).max(16);
    let start = Instant::now();
    for batch in todo.chunks(chunk) {
        let outcomes: Vec<DrawOutcome> = batch
            .par_iter()
            .map(|&i| run_draw(model, key.n_events, i, seeds[i], scan))
            .collect();
        for o in &outcomes {
            io::append_jsonl(&log_path, o)?;
        }
        done.extend(outcomes);
        log::info!(
            "{tag}: {}/{} draws ({:.0?})",
            done.len(),
            key.draws,
            start.elapsed()
        );
    }
    let result = summarize_ensemble(model.mode(), model.reference_g(), key.n_events, done)?;
    Ok(result)
}

fn finish_ensemble(s: &Session, tag: &str) {
    let _ = fs::remove_file(s.out.join(format!("{tag}.progress.json")));
    let _ = fs::remove_file(s.out.join(format!("{tag}.progress.jsonl")));
}

#[derive(Debug, Serialize)]
struct EnsembleBody<'a> {
    result: &'a EnsembleResult,
    fisher: Option<gqs_core::inference::FisherReport>,
    /// `√(1/(N I(g₀)))` (m/s²)
    cramer_rao_sigma: Option<f64>,
    wall_time_s: f64,
}

fn report_ensemble(r: &EnsembleResult) {
    let g = r.g0;
    println!(
        "{}: N = {}, M = {} ({} failed)",
        r.mode, r.n_events, r.draws, r.failures
    );
    println!(
        "  Σ_g/g = {:.3e} (sample std {:.3e}), E(ĝ) - g = {:.2e} m/s²",
        r.sigma_g / g,
        r.sigma_g_raw / g,
        r.mean_g_hat - g
    );
    println!(
        "  E(σ̂_g)/g = {:.3e}, σ̂_g dispersion {:.1}%",
        r.mean_sigma_hat / g,
        100.0 * r.sigma_hat_dispersion
    );
}

pub fn ensemble(common: &Common) -> CmdResult {
    let s = Session::open(common)?;
    let out = s.path("ensemble.json")?;
    let hist = s.path("histogram.csv")?;
    let start = std::time::Instant::now();
    let (model, scan) = s.model()?;
    let result = run_ensemble(&s, "ensemble", model.as_ref(), &scan)?;
    report_ensemble(&result);
    let fisher = match model.fisher(model.reference_g(), &s.cfg.fisher) {
        Ok(f) => Some(f),
        Err(e) => {
            log::warn!("Fisher information: {e}");
            None
        }
    };
    let cr = fisher.map(|f| f.cramer_rao(result.n_events));
    if let Some(c) = cr {
        println!("  Cramér-Rao σ/g = {:.3e}", c / result.g0);
    }
    s.write(
        &out,
        "ensemble",
        EnsembleBody {
            result: &result,
            fisher,
            cramer_rao_sigma: cr,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    )?;
    io::write_histogram_csv(&hist, &result.histogram)?;
    finish_ensemble(&s, "ensemble");
    Ok(())
}

#[derive(Debug, Serialize)]
struct CompareRow {
    mode: String,
    n_events: usize,
    draws: usize,
    classical_width_m: Option<f64>,
    sigma_g_over_g: f64,
    mean_sigma_hat_over_g: f64,
    failures: usize,
}

#[derive(Debug, Serialize)]
struct CompareBody {
    rows: Vec<CompareRow>,
    /// classical Σ_g over quantum Σ_g
    improvement: f64,
}

pub fn compare(common: &Common) -> CmdResult {
    let s = Session::open(common)?;
    let out = s.path("compare.json")?;
    let cfg = &s.cfg;
    let quantum = cfg.quantum_model(s.table()?)?;
    let classical = cfg.classical_model()?;
    let q = run_ensemble(&s, "compare-quantum", &quantum, &cfg.scan)?;
    report_ensemble(&q);
    let c = run_ensemble(&s, "compare-classical", &classical, &cfg.classical.scan)?;
    report_ensemble(&c);
    let row = |r: &EnsembleResult, width: Option<f64>| CompareRow {
        mode: r.mode.clone(),
        n_events: r.n_events,
        draws: r.draws,
        classical_width_m: width,
        sigma_g_over_g: r.sigma_g / r.g0,
        mean_sigma_hat_over_g: r.mean_sigma_hat / r.g0,
        failures: r.failures,
    };
    let rows = vec![row(&q, None), row(&c, Some(classical.cfg.width))];
    let improvement = c.sigma_g / q.sigma_g;
    println!();
    println!("{:<10} {:>6} {:>6} {:>12} {:>12}", "mode", "N", "M", "Σ_g/g", "E(σ̂_g)/g");
    for r in &rows {
        println!(
            "{:<10} {:>6} {:>6} {:>12.3e} {:>12.3e}",
            r.mode, r.n_events, r.draws, r.sigma_g_over_g, r.mean_sigma_hat_over_g
        );
    }
    println!("classical / quantum Σ_g ratio: {improvement:.3e} (10^{:.2})", improvement.log10());
    s.write(&out, "compare", CompareBody { rows, improvement })?;
    finish_ensemble(&s, "compare-quantum");
    finish_ensemble(&s, "compare-classical");
    Ok(())
}

pub fn zeros(_common: &Common, count: usize) -> CmdResult {
    let z = gqs_core::special::airy_zeros(count).map_err(usage)?;
    println!("n,lambda_n");
    for (i, v) in z.as_slice().iter().enumerate() {
        println!("{},{v:.15}", i + 1);
    }
    Ok(())
}

fn verdict(name: &str, ok: bool, detail: String) -> bool {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

pub fn selftest(common: &Common) -> CmdResult {
    use gqs_core::physics::{make_context, HYDROGEN_MASS, STANDARD_G};
    let base = match &common.config {
        Some(p) => ExperimentConfig::load(p).map_err(usage)?,
        None => ExperimentConfig::default(),
    };
    let cfg = base.with_overrides(&common.overrides).map_err(usage)?;
    let mut ok = true;

    let ctx = make_context(HYDROGEN_MASS, STANDARD_G)?;
    ok &= verdict(
        "scales",
        (ctx.time_scale / 1.09e-3 - 1.0).abs() < 0.01 && (ctx.momentum_scale / 1.79e-29 - 1.0).abs() < 0.01,
        format!("t_g = {:.4e} s, p_g = {:.4e} kg m/s", ctx.time_scale, ctx.momentum_scale),
    );
    let ai0 = gqs_core::special::airy_ai(0.0)?;
    let aip0 = gqs_core::special::airy_ai_prime(0.0)?;
    ok &= verdict(
        "airy",
        (ai0 - gqs_core::special::airy::AI_0).abs() < 1e-12 && (aip0 - gqs_core::special::airy::AIP_0).abs() < 1e-12,
        format!("Ai(0) = {ai0:.12}, Ai'(0) = {aip0:.12}"),
    );
    let z = gqs_core::special::airy_zeros(1)?.get(1);
    ok &= verdict("first zero", (z - 2.338_107_41).abs() < 1e-7, format!("λ_1 = {z:.10}"));

    let packet = cfg.packet()?;
    let c = gqs_core::gqs::project_coefficients(&packet, &cfg.context()?, cfg.state_count()?)?;
    let norm: f64 = c.iter().map(|v| v.norm_sqr()).sum();
    ok &= verdict("projection", norm > 0.0 && norm <= 1.0 + 1e-9, format!("Σ|c_n|² = {norm:.4} over {} states", c.len()));

    let spec = EigenGridSpec {
        fft_len: 1 << 17,
        ..Default::default()
    };
    let table = Arc::new(EigenTable::build(20, spec)?);
    let model = gqs_core::inference::QuantumModel::new(cfg.detection_model(table)?, cfg.tolerances.density_floor)?;
    let set = model.sample(cfg.physical.g0, 2000, cfg.statistics.seed)?;
    let r = ml_estimate(&model, &set.events, &cfg.scan)?;
    let pull = (r.g_hat - cfg.physical.g0) / r.sigma_hat;
    ok &= verdict(
        "estimate (20 states, 2000 events)",
        pull.abs() < 5.0,
        format!("ĝ = {:.7}, σ̂_g = {:.2e}, pull {pull:.2}", r.g_hat, r.sigma_hat),
    );

    let classical = cfg.classical_model()?;
    let (a, b) = classical.time_range(cfg.physical.g0);
    let grid = UniformGrid::new(a, b, 4001)?;
    let mass = grid.trapezoid(&grid.points().map(|t| classical.density(t, cfg.physical.g0)).collect::<Vec<_>>());
    ok &= verdict("classical normalization", (mass - 1.0).abs() < 1e-6, format!("∫P dT = {mass:.9}"));

    if ok {
        Ok(())
    } else {
        Err(Failure::from(anyhow::anyhow!("self-test failed")))
    }
}
