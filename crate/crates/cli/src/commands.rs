use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::Args;

use nlkg::config::{GridSpec, IntegratorSpec, RunConfig};
use nlkg::diagnostics::{format_float, write_csv, DiagnosticsRecord};
use nlkg::experiments::{
    almost_conservation_audit, run_backward_construction, run_forward_stability, taylor_expansion_audit, DecayReport,
    MultiSolitonConfig,
};
use nlkg::functionals::{action, action_gradient, build_cutoffs, charge, energy, localized_quantities, momentum, ActionParams};
use nlkg::integrator::{evolve as integrate, IntegratorConfig};
use nlkg::io::{read_field_file, write_field_file};
use nlkg::modulation::{fit_modulation, FitOptions, Modulated};
use nlkg::profiles::{boosted_soliton, ground_state_1d, ground_state_radial, sample_soliton, sample_sum};
use nlkg::spectrum::{assemble_second_variation, spectrum_report};
use nlkg::{Field64, Grid, ModelParams, SolitonParams};

use crate::output::{
    io_err, load_config, parent_dir, prepare_dir, resolve_out_dir, write_resolved, write_text, CliError, CliResult,
};
use crate::{GridArgs, ModelArgs};

/// Global drifts below this relative size count as rounding.
const ROUNDING_DRIFT: f64 = 1e-10;
const IDENTITY_TOL: f64 = 1e-4;
const TAYLOR_FRACTION: f64 = 0.1;
/// Largest number of field snapshots a multisoliton run writes.
const MAX_SNAPSHOT_DUMPS: usize = 11;

fn flag_config(model: ModelParams, grid: &GridArgs, solitons: Vec<SolitonParams>) -> RunConfig {
    RunConfig {
        model,
        grid: GridSpec { length: grid.length, points: grid.grid_points },
        integrator: None,
        solitons,
        experiment: None,
        seed: 0,
        warnings: Vec::new(),
    }
}

fn model_of(args: &ModelArgs) -> CliResult<ModelParams> {
    Ok(ModelParams::new(args.m, args.p, args.d)?)
}

fn csv_file(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn finish(mut out: BufWriter<File>, path: &Path) -> CliResult<()> {
    out.flush().map_err(io_err(path))
}

pub fn groundstate(model: &ModelArgs, omega: f64, grid: &GridArgs, out_dir: Option<PathBuf>) -> CliResult<()> {
    let model = model_of(model)?;
    let dir = resolve_out_dir(out_dir, None);
    prepare_dir(&dir)?;
    let path = dir.join("profile.csv");
    let mut out = csv_file(&path)?;
    let mut summary = String::new();
    if model.d == 1 {
        let g = Grid::new(grid.length, grid.grid_points)?;
        let gs = ground_state_1d(model, omega, &g)?;
        let h = g.spacing();
        let dphi = g.derivative_real(&gs.samples)?;
        let norm = gs.samples.iter().map(|v| v * v).sum::<f64>() * h;
        let grad = dphi.iter().map(|v| v * v).sum::<f64>() * h;
        writeln!(out, "x,phi").map_err(io_err(&path))?;
        for (x, v) in gs.coords.iter().zip(&gs.samples) {
            writeln!(out, "{},{}", format_float(*x), format_float(*v)).map_err(io_err(&path))?;
        }
        let _ = writeln!(summary, "phi(0) = {}", format_float(gs.central_value()));
        let _ = writeln!(summary, "residual = {:.3e}", gs.residual);
        let _ = writeln!(summary, "tail ratio = {:.3e}", gs.tail_ratio);
        let _ = writeln!(summary, "|phi|_2^2 = {}", format_float(norm));
        let _ = writeln!(summary, "|phi'|_2^2 = {}", format_float(grad));
        let _ = writeln!(summary, "|phi'|^2/|phi|^2 = {}", format_float(grad / norm));
    } else {
        // Radial profile on [0, length] with grid-points samples.
        let gs = ground_state_radial(model, omega, grid.length, grid.grid_points)?;
        writeln!(out, "r,phi").map_err(io_err(&path))?;
        for (r, v) in gs.coords.iter().zip(&gs.samples) {
            writeln!(out, "{},{}", format_float(*r), format_float(*v)).map_err(io_err(&path))?;
        }
        let _ = writeln!(summary, "phi(0) = {}", format_float(gs.central_value()));
        let _ = writeln!(summary, "residual = {:.3e}", gs.residual);
        let _ = writeln!(summary, "tail ratio = {:.3e}", gs.tail_ratio);
    }
    finish(out, &path)?;
    print!("{summary}");
    let cfg = flag_config(model, grid, Vec::new());
    write_resolved(&dir, &cfg, &[format!("groundstate omega = {omega}")])
}

pub fn soliton(model: &ModelArgs, [omega, v, theta, x0]: [f64; 4], time: f64, grid: &GridArgs, out_dir: Option<PathBuf>) -> CliResult<()> {
    let model = model_of(model)?;
    let sp = SolitonParams::new(model, omega, theta, v, x0)?;
    if !sp.is_stable() {
        log::warn!("(ω, v) = ({omega}, {v}) lies outside the stability window");
    }
    let g = Grid::new(grid.length, grid.grid_points)?;
    let w = sample_soliton(&sp, time, &g)?;
    let dir = resolve_out_dir(out_dir, None);
    prepare_dir(&dir)?;
    let path = dir.join("soliton.nlkg");
    write_field_file(&path, &w, time)?;
    let ap = sp.action_params();
    println!("E = {}", format_float(energy(&w, model)));
    println!("Q = {}", format_float(charge(&w)));
    println!("P = {}", format_float(momentum(&w)));
    println!("S = {}", format_float(action(&w, &ap)));
    println!("|S'| = {:.3e}", action_gradient(&w, &ap).l2l2_norm());
    println!("stable = {}", sp.is_stable());
    write_resolved(&dir, &flag_config(model, grid, vec![sp]), &[format!("soliton sampled at time = {time}")])
}

#[derive(Args, Debug)]
pub struct EvolveArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Initial field dump; defaults to the config's solitons at t0.
    #[arg(long)]
    pub from: Option<PathBuf>,
    /// Start time; defaults to the dump time, or 0.
    #[arg(long)]
    pub t0: Option<f64>,
    /// End time; defaults to the config's Tn.
    #[arg(long)]
    pub t1: Option<f64>,
    /// Step size; overrides the config.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Steps between diagnostics; zero records only the endpoints.
    #[arg(long)]
    pub diag_stride: Option<usize>,
    /// Final field dump (default `<out-dir>/final.nlkg`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Diagnostics CSV (default `<out-dir>/diagnostics.csv`).
    #[arg(long)]
    pub diag: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn record(model: ModelParams, solitons: &[SolitonParams], localized: bool, t: f64, w: &Field64) -> nlkg::Result<DiagnosticsRecord> {
    let grid = w.grid();
    let (mut le, mut lq, mut lp, mut la) = (vec![], vec![], vec![], f64::NAN);
    if localized {
        let v: Vec<f64> = solitons.iter().map(|s| s.v).collect();
        let params: Vec<ActionParams> = solitons.iter().map(SolitonParams::action_params).collect();
        let loc = localized_quantities(w, &build_cutoffs(&v, t, grid)?, &params)?;
        (le, lq, lp, la) = (loc.energy, loc.charge, loc.momentum, loc.action);
    }
    let error = if solitons.is_empty() { f64::NAN } else { (w - &sample_sum(solitons, t, grid)?).h1l2_norm() };
    Ok(DiagnosticsRecord {
        time: t,
        energy: energy(w, model),
        charge: charge(w),
        momentum: momentum(w),
        local_energy: le,
        local_charge: lq,
        local_momentum: lp,
        localized_action: la,
        error,
    })
}

pub fn evolve(args: &EvolveArgs) -> CliResult<()> {
    let mut cfg = load_config(&args.config)?;
    let dt = args.dt.or(cfg.integrator.map(|i| i.dt)).ok_or_else(|| CliError::Config("no dt: pass --dt or set [integrator] dt".into()))?;
    let dealias = cfg.integrator.is_some_and(|i| i.dealias);
    let (start, dump_time) = match &args.from {
        Some(path) => {
            let (w, t) = read_field_file(path)?;
            let g = w.grid();
            if g.points() != cfg.grid.points || g.length() != cfg.grid.length {
                return Err(CliError::Config(format!(
                    "{}: dump grid ({} points, length {}) differs from the config grid ({} points, length {})",
                    path.display(),
                    g.points(),
                    g.length(),
                    cfg.grid.points,
                    cfg.grid.length
                )));
            }
            (Some(w), Some(t))
        }
        None => (None, None),
    };
    let t0 = args.t0.or(dump_time).unwrap_or(0.0);
    let t1 = args
        .t1
        .or(cfg.experiment.as_ref().and_then(|e| e.t_final))
        .ok_or_else(|| CliError::Config("no end time: pass --t1 or set [experiment] Tn".into()))?;
    let start = match start {
        Some(w) => w,
        None if cfg.solitons.is_empty() => {
            return Err(CliError::Config("no initial field: pass --from or add [soliton] blocks".into()))
        }
        None => sample_sum(&cfg.solitons, t0, &Grid::new(cfg.grid.length, cfg.grid.points)?)?,
    };
    let step = if t1 < t0 { -dt.abs() } else { dt.abs() };
    let icfg = IntegratorConfig::new(step, 0)?.with_dealias(dealias);
    icfg.check_against(start.grid())?;
    let stride = args.diag_stride.or(cfg.experiment.as_ref().and_then(|e| e.diag_stride)).unwrap_or(0);
    let localized = !cfg.solitons.is_empty() && t0.min(t1) > 0.0;

    let dir = resolve_out_dir(args.out_dir.clone(), None);
    let out = args.out.clone().unwrap_or_else(|| dir.join("final.nlkg"));
    let diag = args.diag.clone().unwrap_or_else(|| dir.join("diagnostics.csv"));
    let mut records = Vec::new();
    let model = cfg.model;
    let solitons = cfg.solitons.clone();
    let result = integrate(&start, t0, t1, &icfg, model, stride, |t, w| {
        records.push(record(model, &solitons, localized, t, w)?);
        Ok(())
    });

    cfg.integrator = Some(IntegratorSpec { dt: dt.abs(), dealias });
    let notes = vec![
        format!("evolve t0 = {t0}, t1 = {t1}, diag_stride = {stride}"),
        format!("initial field: {}", args.from.as_ref().map_or("config solitons".to_string(), |p| p.display().to_string())),
    ];
    let mut dirs = vec![parent_dir(&out), parent_dir(&diag)];
    dirs.dedup();
    for d in &dirs {
        prepare_dir(d)?;
        write_resolved(d, &cfg, &notes)?;
    }
    let mut csv = csv_file(&diag)?;
    write_csv(&mut csv, &records)?;
    finish(csv, &diag)?;
    let last = result?;
    write_field_file(&out, &last, t1)?;
    if let (Some(a), Some(b)) = (records.first(), records.last()) {
        println!("E drift = {:.3e}", (b.energy - a.energy).abs() / a.energy.abs().max(f64::MIN_POSITIVE));
        println!("Q drift = {:.3e}", (b.charge - a.charge).abs() / a.charge.abs().max(f64::MIN_POSITIVE));
        if b.error.is_finite() {
            println!("|U - R| at t1 = {}", format_float(b.error));
        }
    }
    Ok(())
}

pub fn spectrum(model: &ModelArgs, omega: f64, v: f64, grid: &GridArgs, out_dir: Option<PathBuf>) -> CliResult<()> {
    let model = model_of(model)?;
    let sp = SolitonParams::new(model, omega, 0.0, v, 0.0)?;
    if grid.grid_points > 1024 {
        log::warn!("dense eigensolve of a {0}x{0} matrix", 4 * grid.grid_points);
    }
    let g = Grid::new(grid.length, grid.grid_points)?;
    let ap = sp.action_params();
    let phi = boosted_soliton(model, omega, v, 0.0, 0.0, &g)?;
    let op = assemble_second_variation(&phi, &ap, &g)?;
    let rep = spectrum_report(&op, &phi, &ap)?;

    let mut text = String::new();
    let _ = writeln!(text, "omega = {omega}, v = {v}, points = {}, length = {}", grid.grid_points, grid.length);
    let _ = writeln!(text, "negative eigenvalues = {} (lowest {})", rep.negative_count, format_float(rep.negative_eigenvalue));
    let _ = writeln!(text, "kernel dimension = {} (threshold {:.3e})", rep.kernel_dimension, rep.kernel_tol);
    let _ = writeln!(text, "kernel Rayleigh quotients / radius = {:.3e}, {:.3e}", rep.kernel_rayleigh[0], rep.kernel_rayleigh[1]);
    let _ = writeln!(text, "kernel residuals = {:.3e}, {:.3e}", rep.kernel_residuals[0], rep.kernel_residuals[1]);
    let _ = writeln!(text, "spectral radius = {}", format_float(rep.spectral_radius));
    let _ = writeln!(text, "coercivity delta = {}", format_float(rep.coercivity_delta));
    let _ = writeln!(text, "slope = {} (residual {:.3e})", format_float(rep.slope.slope), rep.slope.miracle_residual);
    let _ = writeln!(text, "essential floor = {}", format_float(rep.essential_floor));
    let _ = writeln!(text, "stable = {}", sp.is_stable());

    let dir = resolve_out_dir(out_dir, None);
    prepare_dir(&dir)?;
    write_text(&dir.join("spectrum.txt"), &text)?;
    let path = dir.join("eigenvalues.csv");
    let mut out = csv_file(&path)?;
    writeln!(out, "index,eigenvalue").map_err(io_err(&path))?;
    for (i, e) in rep.lowest.iter().enumerate() {
        writeln!(out, "{i},{}", format_float(*e)).map_err(io_err(&path))?;
    }
    finish(out, &path)?;
    print!("{text}");
    write_resolved(&dir, &flag_config(model, grid, vec![sp]), &[format!("spectrum omega = {omega}, v = {v}")])
}

pub fn modulate(from: &Path, seed: &Path, out: Option<PathBuf>, out_dir: Option<PathBuf>) -> CliResult<()> {
    let cfg = load_config(seed)?;
    if cfg.solitons.is_empty() {
        return Err(CliError::Config(format!("{}: no [soliton] blocks to seed the fit", seed.display())));
    }
    let (w, time) = read_field_file(from)?;
    let g = w.grid();
    if g.points() != cfg.grid.points || g.length() != cfg.grid.length {
        return Err(CliError::Config(format!(
            "{}: dump grid ({} points, length {}) differs from the seed grid",
            from.display(),
            g.points(),
            g.length()
        )));
    }
    // The seed solitons are read as exact solutions and advanced to the dump time.
    let guess: Vec<Modulated> = cfg.solitons.iter().map(|s| Modulated::from_soliton(s, time)).collect();
    let st = fit_modulation(&w, cfg.model, &guess, &FitOptions::default())?;

    let path = out.unwrap_or_else(|| resolve_out_dir(out_dir, None).join("modulation.csv"));
    let dir = parent_dir(&path);
    prepare_dir(&dir)?;
    let mut csv = csv_file(&path)?;
    let (h1, l2) = (st.residual.h1l2_norm(), st.residual.l2l2_norm());
    writeln!(csv, "j,t,theta,omega,x,v,ortho_phase,ortho_frequency,ortho_translation,upsilon_h1l2,upsilon_l2l2")
        .map_err(io_err(&path))?;
    for (j, s) in st.solitons.iter().enumerate() {
        let vals = [time, s.theta, s.omega, s.x, s.v, st.ortho_residuals[3 * j], st.ortho_residuals[3 * j + 1], st.ortho_residuals[3 * j + 2], h1, l2];
        let line: Vec<String> = vals.into_iter().map(format_float).collect();
        writeln!(csv, "{},{}", j + 1, line.join(",")).map_err(io_err(&path))?;
    }
    finish(csv, &path)?;
    write_resolved(&dir, &cfg, &[format!("modulate from = {}, t = {time}", from.display())])?;
    println!("iterations = {}, condition = {:.3e}, max orthogonality = {:.3e}, |Y| = {:.6e}", st.iterations, st.condition, st.max_ortho(), h1);
    if !st.converged {
        return Err(CliError::Numerical(format!("modulation did not converge (max orthogonality {:.3e})", st.max_ortho())));
    }
    Ok(())
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Single-soliton coercivity constant, on the grid the spectral checks use.
fn single_delta(sp: &SolitonParams) -> nlkg::Result<f64> {
    let g = Grid::new(80.0, 512)?;
    let ap = sp.action_params();
    let phi = boosted_soliton(sp.model, sp.omega, sp.v, 0.0, 0.0, &g)?;
    let op = assemble_second_variation(&phi, &ap, &g)?;
    Ok(spectrum_report(&op, &phi, &ap)?.coercivity_delta)
}

fn summary_report(cfg: &MultiSolitonConfig, rc: &RunConfig, report: &DecayReport, backward: bool) -> CliResult<String> {
    let mut s = String::new();
    let _ = writeln!(s, "run: {}", if backward { "backward construction from U(Tn) = R(Tn)" } else { "forward stability" });
    let _ = writeln!(s, "T0 = {}, Tn = {}, dt = {}, points = {}, length = {}", cfg.t_initial, cfg.t_final, cfg.dt, cfg.points, cfg.length);
    for (j, sp) in cfg.solitons.iter().enumerate() {
        let _ = writeln!(s, "soliton {}: omega = {}, v = {}, theta = {}, x0 = {}, stable = {}", j + 1, sp.omega, sp.v, sp.theta, sp.x0, sp.is_stable());
    }
    if let Some(a) = rc.experiment.as_ref().and_then(|e| e.perturbation) {
        let _ = writeln!(s, "perturbation = {a}, seed = {}", rc.seed);
    }
    let (a, b) = report.fit_window;
    let _ = writeln!(s, "\nfit window = [{a}, {b}]");
    match report.fitted {
        Some(f) => {
            let _ = writeln!(s, "fitted slope of log |U - R| = {} +/- {:.3e}", format_float(f.slope), f.slope_stderr);
            let _ = writeln!(s, "fit confidently negative (10%) = {}", verdict(f.is_confidently_negative(0.1)));
        }
        None => {
            let _ = writeln!(s, "fitted slope = unavailable (too few points)");
        }
    }
    if let Some(r) = report.reference_rate {
        let _ = writeln!(s, "reference rate alpha*sqrt(m - w*^2)*v* = {}", format_float(r));
    }
    if let Some(c) = report.proof_ceiling {
        let _ = writeln!(s, "proof-side ceiling = {}", format_float(c));
    }
    if let (Some(first), Some(last)) = (report.errors.first(), report.errors.last()) {
        let _ = writeln!(s, "|U - R| at start = {}, at end = {}", format_float(*first), format_float(*last));
    }
    match report.tube_exit {
        Some(t) => {
            let _ = writeln!(s, "modulation tube: left at t = {t}");
        }
        None => {
            let _ = writeln!(s, "modulation tube: stayed inside");
        }
    }

    let audit = almost_conservation_audit(cfg, report, 8)?;
    let _ = writeln!(s, "\naudits");
    let drift = audit.energy_drift.max(audit.charge_drift).max(audit.momentum_drift);
    let _ = writeln!(
        s,
        "global drift E {:.3e}, Q {:.3e}, P {:.3e}: {}",
        audit.energy_drift,
        audit.charge_drift,
        audit.momentum_drift,
        verdict(drift < ROUNDING_DRIFT)
    );
    if backward {
        let monotone = (0..cfg.solitons.len()).all(|j| report.charge_drifts.windows(2).all(|w| w[1][j] >= w[0][j]));
        let _ = writeln!(s, "localized charge drift decreasing in t: {}", verdict(monotone));
    }
    let identity = audit.identity.iter().map(|c| c.relative_mismatch()).fold(0.0, f64::max);
    let _ = writeln!(s, "local charge identity mismatch {identity:.3e}: {}", verdict(!audit.identity.is_empty() && identity < IDENTITY_TOL));
    if audit.coarse_stride {
        let _ = writeln!(s, "note: diagnostic interval is coarse; localized action rates are unreliable");
    }

    let taylor = taylor_expansion_audit(cfg, report)?;
    let mid: Vec<_> = taylor.iter().filter(|t| t.time >= a - 1e-9 && t.time <= b + 1e-9).collect();
    let worst = mid.iter().map(|t| t.remainder.abs() / t.hessian).fold(0.0, f64::max);
    let taylor_ok = !mid.is_empty() && mid.iter().all(|t| t.remainder.abs() < TAYLOR_FRACTION * t.hessian);
    let _ = writeln!(s, "Taylor remainder / hessian max {worst:.3e} over {} times: {}", mid.len(), verdict(taylor_ok));
    let ratio = taylor
        .iter()
        .filter(|t| t.upsilon_norm_sq.sqrt() > 1e-10)
        .map(|t| t.coercivity_ratio())
        .fold(f64::INFINITY, f64::min);
    match cfg.solitons.iter().map(single_delta).collect::<nlkg::Result<Vec<f64>>>() {
        Ok(d) => {
            let delta = d.into_iter().fold(f64::INFINITY, f64::min);
            let _ = writeln!(s, "min hessian/|Y|^2 = {ratio:.4e} vs 0.5*delta = {:.4e}: {}", 0.5 * delta, verdict(ratio >= 0.5 * delta));
        }
        Err(e) => {
            let _ = writeln!(s, "min hessian/|Y|^2 = {ratio:.4e} (single-soliton delta unavailable: {e})");
        }
    }
    Ok(s)
}

fn write_modulation_track(path: &Path, report: &DecayReport) -> CliResult<()> {
    let mut out = csv_file(path)?;
    writeln!(out, "t,j,theta,omega,x,v,upsilon_h1l2").map_err(io_err(path))?;
    for snap in &report.snapshots {
        let Some(fit) = &snap.fit else { continue };
        let ups = fit.residual.h1l2_norm();
        for (j, m) in fit.solitons.iter().enumerate() {
            let vals: Vec<String> = [m.theta, m.omega, m.x, m.v, ups].into_iter().map(format_float).collect();
            writeln!(out, "{},{},{}", format_float(snap.time), j + 1, vals.join(",")).map_err(io_err(path))?;
        }
    }
    finish(out, path)
}

/// Runs one multisoliton config into its output directory; returns that directory.
pub fn multisoliton(config: &Path, out_dir: Option<PathBuf>) -> CliResult<PathBuf> {
    let rc = load_config(config)?;
    let cfg = rc.multisoliton()?;
    let dir = resolve_out_dir(out_dir, rc.experiment.as_ref().and_then(|e| e.out_dir.as_deref()));
    prepare_dir(&dir)?;
    write_resolved(&dir, &rc, &[format!("multisoliton config = {}", config.display())])?;

    let perturbation = rc.experiment.as_ref().and_then(|e| e.perturbation);
    let backward = perturbation.is_none();
    let report = match perturbation {
        None => run_backward_construction(&cfg)?,
        Some(a) => run_forward_stability(&cfg, a, rc.seed)?,
    };

    let diag = dir.join("diagnostics.csv");
    let mut out = csv_file(&diag)?;
    write_csv(&mut out, &report.records)?;
    finish(out, &diag)?;
    write_modulation_track(&dir.join("modulation.csv"), &report)?;
    let n = report.snapshots.len();
    let every = n.div_ceil(MAX_SNAPSHOT_DUMPS - 1).max(1);
    for (i, snap) in report.snapshots.iter().enumerate() {
        if i % every == 0 || i + 1 == n {
            write_field_file(&dir.join(format!("snapshot_{i:05}.nlkg")), &snap.field, snap.time)?;
        }
    }
    let text = summary_report(&cfg, &rc, &report, backward)?;
    write_text(&dir.join("report.txt"), &text)?;
    print!("{text}");
    if let Some(t) = report.tube_exit {
        return Err(CliError::Numerical(format!("field left the modulation tube at t = {t}")));
    }
    Ok(dir)
}

/// Output subdirectory per config, named by file stem and made unique.
fn sweep_dirs(root: &Path, configs: &[PathBuf]) -> Vec<PathBuf> {
    let mut used = std::collections::HashSet::new();
    configs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let stem = c.file_stem().map_or_else(|| format!("run{i}"), |s| s.to_string_lossy().into_owned());
            let name = if used.insert(stem.clone()) { stem } else { format!("{stem}-{i}") };
            used.insert(name.clone());
            root.join(name)
        })
        .collect()
}

pub fn sweep(configs: &[PathBuf], out_dir: Option<PathBuf>, jobs: Option<usize>) -> CliResult<()> {
    let root = resolve_out_dir(out_dir, None);
    prepare_dir(&root)?;
    let dirs = sweep_dirs(&root, configs);
    let jobs = jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, configs.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<CliResult<PathBuf>>>> = Mutex::new((0..configs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= configs.len() {
                    break;
                }
                let r = multisoliton(&configs[i], Some(dirs[i].clone()));
                results.lock().expect("no panics while holding the lock")[i] = Some(r);
            });
        }
    });
    let results = results.into_inner().expect("workers joined");
    let mut summary = String::new();
    let (mut failed, mut code) = (0, 0u8);
    for ((cfg, dir), r) in configs.iter().zip(&dirs).zip(results) {
        match r.expect("every config ran") {
            Ok(_) => {
                let _ = writeln!(summary, "{}\tok\t{}", cfg.display(), dir.display());
            }
            Err(e) => {
                failed += 1;
                code = code.max(e.exit_code());
                let _ = writeln!(summary, "{}\terror {}\t{}", cfg.display(), e.exit_code(), e.to_string().replace('\n', "; "));
            }
        }
    }
    write_text(&root.join("sweep.tsv"), &summary)?;
    print!("{summary}");
    if failed > 0 {
        return Err(CliError::Sweep { failed, total: configs.len(), code });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_dirs_are_distinct() {
        let dirs = sweep_dirs(Path::new("out"), &["a/x.conf".into(), "b/x.conf".into(), "y.conf".into()]);
        assert_eq!(dirs[0], PathBuf::from("out/x"));
        assert_eq!(dirs[1], PathBuf::from("out/x-1"));
        assert_eq!(dirs[2], PathBuf::from("out/y"));
    }
}
