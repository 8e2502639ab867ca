//! Subcommands.
//!
//! Every command writes into the output directory (`--out`, else
//! `output.dir` of the config) and reports the paths it wrote. Randomness is
//! drawn from numbered streams of the seed, so a rerun with the same config
//! and seed reproduces every file byte for byte.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use eddyscan_core::characterization::{fit_strength, multi_frequency_fit};
use eddyscan_core::detection::{detect, monte_carlo_statistics, pod_from_statistics, pod_theoretical};
use eddyscan_core::forward::{ResponseMatrix, RANK_TOL};
use eddyscan_core::imaging::{locate, locate_refined, music_scan, signal_projector, MusicImage, SearchGrid};
use eddyscan_core::random_matrix::{spiked_prediction, tw1_table, SpikeRegime, TW_TABLE_VERSION};
use eddyscan_core::Point3;

use crate::config::ScenarioConfig;
use crate::error::CliError;
use crate::output::{fmt_f64, read_matrix_csv, write_csv, write_json, write_matrix_csv, Meta};
use crate::scenario::{load_m_table, Scenario};

#[derive(Debug, Parser)]
#[command(name = "eddyscan", version, about = "Eddy-current inclusion detection, imaging and characterization")]
pub struct Cli {
    /// Scenario file (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// RNG seed; overrides EDDYSCAN_SEED and the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Monte Carlo trials per point.
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// False-alarm rate; replaces the configured list for curve commands.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// Target σ₁(A₀)/σ_n; replaces the configured lists for sweeps.
    #[arg(long, global = true)]
    pub ratio: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Noiseless response matrix A₀.
    Synthesize,
    /// One noisy acquisition of A₀ (or of --matrix).
    Acquire {
        #[arg(long)]
        matrix: Option<PathBuf>,
    },
    /// Ratio test on --matrix, or on a fresh acquisition.
    Detect {
        #[arg(long)]
        matrix: Option<PathBuf>,
    },
    /// MUSIC image over the search box or one of its cross-sections.
    Music {
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long, allow_negative_numbers = true, conflicts_with = "slice_x")]
        slice_z: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        slice_x: Option<f64>,
    },
    /// Strength at a location; size and conductivity from several frequencies.
    Characterize {
        /// Measured matrices (repeatable); their `omega=` metadata sets the frequency.
        #[arg(long)]
        matrix: Vec<PathBuf>,
        /// Known location `x,y,z`; located with MUSIC when omitted.
        #[arg(long, value_delimiter = ',', num_args = 1, allow_negative_numbers = true)]
        z: Option<Vec<f64>>,
        #[arg(long)]
        m_table: Option<PathBuf>,
    },
    /// Detection probability against σ₁(A₀)/σ_n, empirical and predicted.
    PodCurve,
    /// Tracy-Widom (type 1) distribution table.
    TwTable,
    /// Singular values of A₀ and the noiseless z = 0 MUSIC section.
    #[command(name = "fig6-1")]
    Fig61,
    /// MUSIC sections at several noise levels.
    #[command(name = "fig6-2")]
    Fig62,
    /// Detection-probability curves for several false-alarm rates.
    #[command(name = "fig6-3")]
    Fig63,
}

/// Loads the config, applies flag overrides and validates.
pub fn effective_config(cli: &Cli) -> Result<(ScenarioConfig, u64), CliError> {
    let mut config = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(out) = &cli.out {
        config.output.dir = out.clone();
    }
    if let Some(t) = cli.trials {
        config.detection.trials = t;
    }
    if let Some(d) = cli.delta {
        config.detection.delta = d;
        config.detection.deltas = vec![d];
    }
    if let Some(r) = cli.ratio {
        config.noise.ratio = Some(r);
        config.noise.sigma_n = None;
        config.detection.ratios = vec![r];
        config.imaging.ratios = vec![r];
    }
    config.validate()?;
    let seed = config.effective_seed(cli.seed)?;
    Ok((config, seed))
}

/// Runs one command; returns the lines to show the user.
pub fn run(cli: &Cli) -> Result<Vec<String>, CliError> {
    let (config, seed) = effective_config(cli)?;
    let scen = Scenario::new(config, seed)?;
    let mut ctx = Ctx {
        out: scen.config.output.dir.clone(),
        meta: scen.meta(),
        written: Vec::new(),
        notes: Vec::new(),
    };
    match &cli.command {
        Command::Synthesize => synthesize(&scen, &mut ctx)?,
        Command::Acquire { matrix } => acquire(&scen, &mut ctx, matrix.as_deref())?,
        Command::Detect { matrix } => detect_cmd(&scen, &mut ctx, matrix.as_deref())?,
        Command::Music { matrix, slice_z, slice_x } => music(&scen, &mut ctx, matrix.as_deref(), *slice_z, *slice_x)?,
        Command::Characterize { matrix, z, m_table } => characterize(&scen, &mut ctx, matrix, z.as_deref(), m_table.as_deref())?,
        Command::PodCurve => pod_curve(&scen, &mut ctx, false)?,
        Command::TwTable => tw_table(&mut ctx)?,
        Command::Fig61 => fig6_1(&scen, &mut ctx)?,
        Command::Fig62 => fig6_2(&scen, &mut ctx)?,
        Command::Fig63 => pod_curve(&scen, &mut ctx, true)?,
    }
    let mut lines = ctx.notes;
    lines.extend(ctx.written.iter().map(|p| format!("wrote {}", p.display())));
    Ok(lines)
}

struct Ctx {
    out: PathBuf,
    meta: Meta,
    written: Vec<PathBuf>,
    notes: Vec<String>,
}

impl Ctx {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.written.push(p.clone());
        p
    }
}

fn xyz(p: &Point3) -> Value {
    json!([p.x, p.y, p.z])
}

/// `{}` of an `f64`, for file names (`0.05`, `10`).
fn tag(v: f64) -> String {
    format!("{v}")
}

/// SplitMix64 finalizer: independent master seeds for the points of a sweep.
fn sub_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn read_checked(scen: &Scenario, path: &Path) -> Result<(ResponseMatrix, Option<f64>), CliError> {
    let (data, meta) = read_matrix_csv(path)?;
    if data.shape() != (scen.array.n(), scen.array.m()) {
        return Err(CliError::Input {
            path: path.display().to_string(),
            msg: format!(
                "matrix is {}x{}, the configured array is {}x{}",
                data.nrows(),
                data.ncols(),
                scen.array.n(),
                scen.array.m()
            ),
        });
    }
    let omega = match meta.get("omega") {
        Some(v) => Some(v.parse::<f64>().map_err(|_| CliError::Input {
            path: path.display().to_string(),
            msg: format!("bad omega `{v}`"),
        })?),
        None => None,
    };
    Ok((ResponseMatrix::new(data), omega))
}

/// `--matrix` if given, else stream 0 of the configured acquisition.
fn measured(scen: &Scenario, matrix: Option<&Path>) -> Result<ResponseMatrix, CliError> {
    match matrix {
        Some(path) => Ok(read_checked(scen, path)?.0),
        None => {
            let a0 = scen.a0()?;
            scen.acquire(&a0, scen.sigma_n(&a0), 0)
        }
    }
}

fn synthesize(scen: &Scenario, ctx: &mut Ctx) -> Result<(), CliError> {
    let a0 = scen.a0()?;
    let omega = scen.inclusion.omega;
    let path = ctx.path("a0.csv");
    write_matrix_csv(&path, &ctx.meta, &[("kind", "a0".into()), ("omega", tag(omega))], a0.data())?;
    let d = scen.inclusion.derived();
    let sv = a0.singular_values();
    let body = json!({
        "N": a0.n(),
        "M": a0.m(),
        "omega": omega,
        "k": d.k,
        "nu": d.nu,
        "skin_depth": d.skin_depth,
        "strength": scen.inclusion.amplitude() * scen.m_coef.re,
        "numerical_rank": a0.numerical_rank(),
        "singular_values": &sv[..sv.len().min(6)],
    });
    let json_path = ctx.path("synthesize.json");
    write_json(&json_path, &ctx.meta, body)
}

fn acquire(scen: &Scenario, ctx: &mut Ctx, matrix: Option<&Path>) -> Result<(), CliError> {
    let (a0, omega) = match matrix {
        Some(path) => read_checked(scen, path)?,
        None => (scen.a0()?, None),
    };
    let omega = omega.unwrap_or(scen.inclusion.omega);
    let sigma_n = scen.sigma_n(&a0);
    let a = scen.acquire(&a0, sigma_n, 0)?;
    let acquisition = serde_json::to_value(scen.config.noise.acquisition).expect("serializes");
    let extra = [
        ("kind", "measured".to_string()),
        ("omega", tag(omega)),
        ("sigma_n", fmt_f64(sigma_n)),
        ("acquisition", acquisition.as_str().unwrap_or_default().to_string()),
    ];
    let path = ctx.path("a_meas.csv");
    write_matrix_csv(&path, &ctx.meta, &extra, a.data())
}

fn detect_cmd(scen: &Scenario, ctx: &mut Ctx, matrix: Option<&Path>) -> Result<(), CliError> {
    let a = match matrix {
        Some(path) => {
            let (data, _) = read_matrix_csv(path)?;
            ResponseMatrix::new(data)
        }
        None => measured(scen, None)?,
    };
    let outcome = detect(&a, scen.config.detection.delta, tw1_table())?;
    let body = json!({
        "R": outcome.r,
        "r_delta": outcome.r_delta,
        "decision": outcome.decision,
        "sigma1": outcome.sigma1,
        "delta": outcome.delta,
        "M": a.m(),
        "N": a.n(),
    });
    let path = ctx.path("detect.json");
    write_json(&path, &ctx.meta, body)?;
    ctx.notes.push(format!(
        "R = {:.6}, r_delta = {:.6}: {}",
        outcome.r,
        outcome.r_delta,
        if outcome.decision { "inclusion detected" } else { "no detection" }
    ));
    Ok(())
}

fn write_image(path: &Path, meta: &Meta, extra: &[(&str, String)], image: &MusicImage) -> Result<(), CliError> {
    let rows = image
        .nodes()
        .map(|(p, v)| vec![fmt_f64(p.x), fmt_f64(p.y), fmt_f64(p.z), fmt_f64(v)]);
    write_csv(path, meta, extra, "x,y,z,value", rows)
}

fn image_summary(image: &MusicImage) -> Value {
    json!({
        "argmax": xyz(&locate(image)),
        "refined_argmax": xyz(&locate_refined(image)),
        "peak_value": image.peak_value(),
        "peak_to_median": image.peak_to_median(),
        "counts": image.grid().counts(),
    })
}

fn scan(scen: &Scenario, a: &ResponseMatrix, grid: &SearchGrid) -> Result<MusicImage, CliError> {
    grid.check_sensors(scen.array.sources())?;
    grid.check_sensors(scen.array.receivers())?;
    let projector = signal_projector(a, scen.config.imaging.rank)?;
    Ok(music_scan(grid, &projector, scen.array.receivers())?)
}

fn music(
    scen: &Scenario,
    ctx: &mut Ctx,
    matrix: Option<&Path>,
    slice_z: Option<f64>,
    slice_x: Option<f64>,
) -> Result<(), CliError> {
    let a = measured(scen, matrix)?;
    let full = scen.search_grid()?;
    let (grid, section) = match (slice_z, slice_x) {
        (Some(z), _) => (full.slice_z(z)?, format!("z={z}")),
        (None, Some(x)) => (full.slice_x(x)?, format!("x={x}")),
        (None, None) => (full, "box".to_string()),
    };
    let image = scan(scen, &a, &grid)?;
    let path = ctx.path("music.csv");
    write_image(&path, &ctx.meta, &[("section", section.clone())], &image)?;
    let mut body = image_summary(&image);
    body["section"] = json!(section);
    let json_path = ctx.path("music.json");
    write_json(&json_path, &ctx.meta, body)
}

fn characterize(
    scen: &Scenario,
    ctx: &mut Ctx,
    matrices: &[PathBuf],
    z: Option<&[f64]>,
    m_table: Option<&Path>,
) -> Result<(), CliError> {
    let mut inputs = Vec::new();
    if matrices.is_empty() {
        inputs.push(("simulated".to_string(), measured(scen, None)?, scen.inclusion.omega));
    }
    for path in matrices {
        let (a, omega) = read_checked(scen, path)?;
        let omega = omega.unwrap_or_else(|| {
            log::warn!("{} has no omega metadata, using the configured value", path.display());
            scen.inclusion.omega
        });
        inputs.push((path.display().to_string(), a, omega));
    }

    let (z_hat, located) = match z {
        Some(v) if v.len() == 3 => (Point3::new(v[0], v[1], v[2]), false),
        Some(v) => return Err(CliError::Config(format!("--z needs 3 coordinates, got {}", v.len()))),
        None => (locate_refined(&scan(scen, &inputs[0].1, &scen.search_grid()?)?), true),
    };

    let mut per_matrix = Vec::new();
    let mut estimates = Vec::new();
    for (source, a, omega) in &inputs {
        let est = fit_strength(a, &z_hat, &scen.array)?;
        estimates.push((*omega, est.c_hat));
        per_matrix.push(json!({
            "source": source,
            "omega": omega,
            "c_hat": est.c_hat,
            "residual_norm": est.residual_norm,
            "n_obs": est.n_obs,
        }));
    }

    let table_path = m_table.map(Path::to_path_buf).or_else(|| scen.config.characterization.m_table.clone());
    let mut omegas: Vec<f64> = estimates.iter().map(|e| e.0).collect();
    omegas.sort_by(f64::total_cmp);
    omegas.dedup();
    let multi = match table_path {
        None => json!({ "skipped": "no polarization table configured" }),
        Some(_) if omegas.len() < 2 => json!({ "skipped": "needs matrices at two or more distinct frequencies" }),
        Some(path) => {
            let table = load_m_table(&path)?;
            let cg = &scen.config.characterization;
            let fit = multi_frequency_fit(
                &estimates,
                &table,
                scen.inclusion.mu0,
                &cg.sigma_grid.values(),
                &cg.alpha_grid.values(),
            )?;
            json!({
                "sigma_hat": fit.sigma_hat,
                "alpha_hat": fit.alpha_hat,
                "objective": fit.objective,
                "skipped_cells": fit.skipped_cells,
            })
        }
    };
    let body = json!({
        "location": xyz(&z_hat),
        "location_from_music": located,
        "estimates": per_matrix,
        "multi_frequency": multi,
    });
    let path = ctx.path("characterize.json");
    write_json(&path, &ctx.meta, body)
}

struct PodPoint {
    ratio: f64,
    subcritical: bool,
    theoretical: f64,
    empirical: f64,
    stderr: f64,
}

fn pod_curve(scen: &Scenario, ctx: &mut Ctx, figure: bool) -> Result<(), CliError> {
    let det = &scen.config.detection;
    if figure && det.trials < 100 {
        return Err(CliError::Config(format!("fig6-3 needs at least 100 trials, got {}", det.trials)));
    }
    let tw = tw1_table();
    let a0 = scen.a0()?;
    let (m, gamma) = (a0.m(), a0.n() as f64 / a0.m() as f64);
    let s1 = a0.singular_values()[0];
    let mut curves: Vec<Vec<PodPoint>> = det.deltas.iter().map(|_| Vec::new()).collect();
    let started = Instant::now();
    for (i, &ratio) in det.ratios.iter().enumerate() {
        let sigma_n = s1 / ratio;
        let stats = monte_carlo_statistics(&a0, sigma_n, det.trials, sub_seed(scen.seed, i as u64), scen.pod_mode())?;
        let estimates = pod_from_statistics(&stats, &det.deltas, m, gamma, tw)?;
        let subcritical = spiked_prediction(s1, sigma_n, gamma).regime == SpikeRegime::Subcritical;
        for (curve, est) in curves.iter_mut().zip(estimates) {
            curve.push(PodPoint {
                ratio,
                subcritical,
                theoretical: pod_theoretical(s1, sigma_n, gamma, m, est.delta, tw)?,
                empirical: est.pod,
                stderr: est.stderr,
            });
        }
        log::info!("ratio {ratio}: {} trials, {:.1?} elapsed", det.trials, started.elapsed());
    }

    let mut summary = Vec::new();
    for (&delta, curve) in det.deltas.iter().zip(&curves) {
        let extra = [("delta", tag(delta)), ("trials", det.trials.to_string())];
        if figure {
            let path = ctx.path(&format!("fig6_3_delta_{}.csv", tag(delta)));
            let rows = curve.iter().map(|p| {
                vec![fmt_f64(p.ratio), fmt_f64(p.empirical), fmt_f64(p.stderr), fmt_f64(p.theoretical)]
            });
            write_csv(&path, &ctx.meta, &extra, "ratio,pod_empirical,stderr,pod_theoretical", rows)?;
        } else {
            let path = ctx.path(&format!("pod_curve_delta_{}.csv", tag(delta)));
            let rows = curve.iter().map(|p| {
                vec![fmt_f64(p.ratio), fmt_f64(p.theoretical), fmt_f64(p.empirical), fmt_f64(p.stderr)]
            });
            write_csv(&path, &ctx.meta, &extra, "ratio,pod_theoretical,pod_empirical,stderr", rows)?;
        }
        let points: Vec<Value> = curve
            .iter()
            .map(|p| {
                let gap = (p.empirical - p.theoretical).abs();
                json!({
                    "ratio": p.ratio,
                    "subcritical": p.subcritical,
                    "pod_empirical": p.empirical,
                    "pod_theoretical": p.theoretical,
                    "stderr": p.stderr,
                    "within_tolerance": gap < (3.0 * p.stderr).max(0.05),
                })
            })
            .collect();
        summary.push(json!({ "delta": delta, "points": points }));
    }
    let name = if figure { "fig6_3.json" } else { "pod_curve.json" };
    let path = ctx.path(name);
    write_json(&path, &ctx.meta, json!({ "trials": det.trials, "curves": summary }))
}

fn tw_table(ctx: &mut Ctx) -> Result<(), CliError> {
    let started = Instant::now();
    let tw = tw1_table();
    log::info!("Tracy-Widom table ready in {:.2?}", started.elapsed());
    let path = ctx.path("tw1_table.csv");
    let mut text = format!("{}\n", ctx.meta.header_line(&[])).into_bytes();
    tw.write_csv(&mut text).map_err(|e| CliError::io(&path, e))?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    let quantiles: Vec<Value> = [0.9, 0.95, 0.99]
        .iter()
        .map(|&p| Ok(json!({ "p": p, "z": tw.quantile(p)? })))
        .collect::<Result<_, CliError>>()?;
    let (lo, hi) = tw.z_range();
    let body = json!({
        "version": TW_TABLE_VERSION,
        "z_range": [lo, hi],
        "nodes": tw.nodes().count(),
        "total_mass": tw.total_mass(),
        "mean": tw.mean(),
        "variance": tw.variance(),
        "quantiles": quantiles,
    });
    let json_path = ctx.path("tw1_summary.json");
    write_json(&json_path, &ctx.meta, body)
}

fn fig6_1(scen: &Scenario, ctx: &mut Ctx) -> Result<(), CliError> {
    let a0 = scen.a0()?;
    let sv = a0.singular_values();
    let path = ctx.path("fig6_1_singular_values.csv");
    let rows = sv
        .iter()
        .enumerate()
        .map(|(j, &s)| vec![(j + 1).to_string(), fmt_f64(s), fmt_f64(s.log10())]);
    write_csv(&path, &ctx.meta, &[], "index,value,log10_value", rows)?;

    let full = scan(scen, &a0, &scen.search_grid()?)?;
    let slice = scan(scen, &a0, &scen.search_grid()?.slice_z(0.0)?)?;
    let path = ctx.path("fig6_1_music_z0.csv");
    write_image(&path, &ctx.meta, &[("section", "z=0".into())], &slice)?;

    let significant = sv.iter().filter(|&&s| s > RANK_TOL * sv[0]).count();
    let body = json!({
        "significant_singular_values": significant,
        "sigma4_over_sigma1": sv.get(3).map(|s| s / sv[0]),
        "true_location": xyz(&scen.inclusion.center),
        "grid_spacing": xyz(&full.grid().spacing()),
        "box": image_summary(&full),
        "z0": image_summary(&slice),
    });
    let json_path = ctx.path("fig6_1.json");
    write_json(&json_path, &ctx.meta, body)
}

fn fig6_2(scen: &Scenario, ctx: &mut Ctx) -> Result<(), CliError> {
    let a0 = scen.a0()?;
    let s1 = a0.singular_values()[0];
    let grid = scen.search_grid()?;
    let truth = scen.inclusion.center;
    let mut summary = Vec::new();
    for (i, &ratio) in scen.config.imaging.ratios.iter().enumerate() {
        let sigma_n = s1 / ratio;
        let a = scen.acquire(&a0, sigma_n, i as u64)?;
        let full = scan(scen, &a, &grid)?;
        let mut entry = json!({
            "ratio": ratio,
            "sigma_n": sigma_n,
            "stream": i,
            "box": image_summary(&full),
            "localization_error": (locate_refined(&full) - truth).norm(),
        });
        for (label, section) in [("z0", grid.slice_z(0.0)?), ("x0", grid.slice_x(0.0)?)] {
            let image = scan(scen, &a, &section)?;
            let path = ctx.path(&format!("fig6_2_ratio_{}_{label}.csv", tag(ratio)));
            let extra = [("ratio", tag(ratio)), ("sigma_n", fmt_f64(sigma_n)), ("section", label.to_string())];
            write_image(&path, &ctx.meta, &extra, &image)?;
            entry[label] = image_summary(&image);
        }
        summary.push(entry);
    }
    let path = ctx.path("fig6_2.json");
    write_json(&path, &ctx.meta, json!({ "true_location": xyz(&truth), "ratios": summary }))
}
