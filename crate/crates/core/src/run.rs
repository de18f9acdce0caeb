//! Run orchestration: time loop, sampling, checkpoints and output files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::bounds::{bound_report, build_background, q_form, BoundReport, QInputs};
use crate::checkpoint::Checkpoint;
use crate::config::{parse_config, RunConfig};
use crate::diagnostics::{sample, Averages, Recorder, SampleOptions};
use crate::error::{Error, Result};
use crate::grid::MappedGrid;
use crate::solver::Simulation;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Result of a completed run.
pub struct RunOutcome {
    pub simulation: Simulation,
    pub recorder: Recorder,
    pub averages: Averages,
    pub report: BoundReport,
    pub steps: u64,
    pub warnings: Vec<String>,
}

/// First multiple of `interval` strictly after `t`.
fn next_event(t: f64, interval: f64) -> f64 {
    let k = (t / interval * (1.0 + 1e-12)).floor() + 1.0;
    k * interval
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Grid, metric and boundary summary as `key = value` lines.
pub fn grid_summary(config: &RunConfig, sim: &Simulation) -> Result<String> {
    let g = &sim.model.grid;
    let bi = config.boundary_inputs()?;
    let n = &bi.norms;
    let mut s = String::new();
    let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
    kv("n1", g.n1.to_string());
    kv("n2", g.n2.to_string());
    kv("gamma", format!("{:?}", g.gamma));
    kv("dx1", format!("{:?}", g.dx1));
    kv("dx2", format!("{:?}", g.dx2));
    kv("height_range", format!("{:?}", bi.height_range));
    kv("a22_mean", format!("{:?}", g.a22_mean));
    kv("alpha_min", format!("{:?}", n.alpha_min));
    kv("kappa_inf", format!("{:?}", n.kappa_inf));
    kv("alpha_plus_kappa_inf", format!("{:?}", n.alpha_plus_kappa_inf));
    kv("alpha_plus_kappa_w1inf", format!("{:?}", n.alpha_plus_kappa_w1inf));
    kv("alpha_dot_inf", format!("{:?}", n.alpha_dot_inf));
    kv("kappa_dot_inf", format!("{:?}", n.kappa_dot_inf));
    kv("condition_ec", bi.ec.to_string());
    kv("condition_kappa_leq_alpha", bi.kappa_leq_alpha.to_string());
    kv("condition_general_kappa", bi.general_kappa.to_string());
    kv("coupling_dt_limit", format!("{:?}", sim.model.coupling_limit()));
    Ok(s)
}

fn summary_text(config: &RunConfig, avg: &Averages, steps: u64) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: f64| s.push_str(&format!("{k} = {v:?}\n"));
    kv("burn_in", config.burn_in());
    kv("window_start", avg.t_start);
    kv("window_end", avg.t_end);
    kv("n_samples", avg.n_samples as f64);
    kv("steps", steps as f64);
    kv("nu_flux", avg.nu_flux);
    kv("nu_flux_tail_max", avg.nu_flux_tail_max);
    kv("nu_gradsq", avg.nu_gradsq);
    kv("nu_strip_25", avg.nu_strip[0]);
    kv("nu_strip_50", avg.nu_strip[1]);
    kv("nu_strip_75", avg.nu_strip[2]);
    kv("nu_volume", avg.nu_volume);
    kv("energy", avg.energy);
    kv("enstrophy", avg.enstrophy);
    kv("grad_u_sq", avg.grad_u_sq);
    kv("boundary_friction", avg.boundary_friction);
    kv("kappa_friction", avg.kappa_friction);
    kv("buoyancy_flux", avg.buoyancy_flux);
    kv("energy_residual", avg.energy_residual);
    kv("enstrophy_residual", avg.enstrophy_residual);
    kv("temp_min", avg.temp_min);
    kv("temp_max", avg.temp_max);
    kv("omega_l2_max", avg.omega_lp_max[0]);
    kv("omega_l4_max", avg.omega_lp_max[1]);
    kv("omega_l8_max", avg.omega_lp_max[2]);
    s
}

/// Evaluates every configured bound against the run's averages.
pub fn report_for(config: &RunConfig, grid: &MappedGrid, avg: &Averages) -> Result<BoundReport> {
    let bi = config.boundary_inputs()?;
    let b = &config.bounds;
    let ra = config.physical.ra;
    let q_eval = |p: &crate::bounds::BoundParams| {
        let delta = p.delta.min(0.5);
        let inputs = QInputs::from_averages(avg, delta, ra, grid.area(), bi.height_range)?;
        let bg = build_background(delta, grid)?;
        q_form(&inputs, bg.grad_eta_sq_avg, p)
    };
    let have_q = ra > 0.0 && avg.enstrophy_terms.is_some() && !avg.background.is_empty();
    bound_report(
        ra,
        config.physical.pr,
        &bi,
        b.user_c,
        b.user_c_bar,
        b.u0_norm,
        &b.cases,
        b.delta_override,
        (avg.n_samples > 0).then_some(avg.nu_flux),
        if have_q { Some(&q_eval) } else { None },
    )
}

/// Configuration and recorded time series of a completed run directory.
pub fn load_run_dir(dir: &Path) -> Result<(RunConfig, Recorder)> {
    let read = |name: &str| {
        let p = dir.join(name);
        fs::read_to_string(&p).map_err(|e| Error::MissingData(format!("{}: {e}", p.display())))
    };
    let config = parse_config(&read("config.toml")?)?;
    let rec = Recorder::read_csv(&read("diagnostics.csv")?, config.burn_in(), config.physical.pr)?;
    if rec.records.is_empty() {
        return Err(Error::MissingData(format!("{}: no samples", dir.join("diagnostics.csv").display())));
    }
    Ok((config, rec))
}

/// Bound report recomputed from a run directory.
pub fn report_from_run_dir(dir: &Path) -> Result<(RunConfig, Averages, BoundReport)> {
    let (config, rec) = load_run_dir(dir)?;
    let avg = rec.averages();
    let grid = MappedGrid::new(&config.profile()?, config.grid.n1, config.grid.n2)?;
    let report = report_for(&config, &grid, &avg)?;
    Ok((config, avg, report))
}

/// Runs `config`, optionally resuming from a checkpoint. Output files are
/// written to `out_dir` when given.
pub fn run(config: &RunConfig, out_dir: Option<&Path>, resume: Option<&Path>) -> Result<RunOutcome> {
    config.validate()?;
    let warnings = config.warnings()?;
    let mut sim = match resume {
        Some(path) => {
            let c = Checkpoint::read(path)?;
            let p = config.profile()?;
            if c.n1 != config.grid.n1 || c.n2 != config.grid.n2 || c.params != config.params()? || c.profile != p {
                return Err(Error::Checkpoint(format!("{} does not match the configured grid, geometry or parameters", path.display())));
            }
            c.into_simulation(config.solver_options())?
        }
        None => Simulation::new(config.model()?, &config.initial_condition())?,
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.toml"), config.to_toml())?;
        let mut prov = format!("version = {VERSION}\n");
        prov.push_str(&grid_summary(config, &sim)?);
        for w in &warnings {
            prov.push_str(&format!("warning = {w}\n"));
        }
        fs::write(dir.join("provenance.txt"), prov)?;
    }
    let ckpt_path: Option<PathBuf> = out_dir.map(|d| d.join("checkpoint.rbns"));
    let opts = SampleOptions { with_pressure: config.time.pressure_samples, deltas: config.bound_deltas()? };
    let mut rec = Recorder::new(config.burn_in(), config.physical.pr);
    let t_end = config.time.t_end;
    let si = config.time.sample_interval;
    let ci = config.time.checkpoint_interval;
    rec.push(sample(&sim.model, &sim.state, &opts)?);
    let mut steps = 0u64;
    let result: Result<()> = (|| {
        while sim.state.time < t_end * (1.0 - 1e-12) {
            let t = sim.state.time;
            let mut target = next_event(t, si).min(t_end);
            if let Some(c) = ci {
                target = target.min(next_event(t, c));
            }
            let base = match config.time.dt {
                Some(dt) => dt,
                None => sim.auto_dt(config.time.cfl, config.time.dt_max),
            };
            let dt = base.min(target - t);
            sim.step(dt)?;
            steps += 1;
            let now = sim.state.time;
            if (now - target).abs() <= 1e-12 * target.max(1.0) {
                sim.state.time = target;
                let on_sample = (target / si - (target / si).round()).abs() < 1e-9 || target == t_end;
                if on_sample {
                    let r = sample(&sim.model, &sim.state, &opts)?;
                    if !(r.energy.is_finite() && r.nu_flux.is_finite()) {
                        return Err(Error::NonFinite { stage: "diagnostics".into(), time: now });
                    }
                    rec.push(r);
                }
                if let (Some(c), Some(p)) = (ci, &ckpt_path) {
                    if (target / c - (target / c).round()).abs() < 1e-9 {
                        write_atomic(p, &Checkpoint::from_simulation(&sim).to_bytes())?;
                    }
                }
            }
        }
        Ok(())
    })();
    if let Some(dir) = out_dir {
        rec.write_csv(std::io::BufWriter::new(fs::File::create(dir.join("diagnostics.csv"))?))?;
    }
    result?;
    let averages = rec.averages();
    let report = report_for(config, &sim.model.grid, &averages)?;
    if let Some(dir) = out_dir {
        write_atomic(&dir.join("final.rbns"), &Checkpoint::from_simulation(&sim).to_bytes())?;
        fs::write(dir.join("summary.txt"), summary_text(config, &averages, steps))?;
        let mut f = fs::File::create(dir.join("bounds.csv"))?;
        report.write_csv(&mut f, true)?;
        let mut f = fs::File::create(dir.join("bounds.txt"))?;
        f.write_all(report.to_text().as_bytes())?;
    }
    Ok(RunOutcome { simulation: sim, recorder: rec, averages, report, steps, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn next_event_is_strictly_later() {
        assert_eq!(next_event(0.0, 0.1), 0.1);
        assert!((next_event(0.1, 0.1) - 0.2).abs() < 1e-15);
        assert!((next_event(0.30000000000000004, 0.1) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn zero_end_time_gives_initial_sample_only() {
        let mut c = RunConfig::new(100.0, 1.0, 16, 17);
        c.time.t_end = 0.0;
        let out = run(&c, None, None).unwrap();
        assert_eq!(out.recorder.records.len(), 1);
        assert_eq!(out.steps, 0);
        assert_eq!(out.recorder.records[0].time, 0.0);
    }

    #[test]
    fn writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = RunConfig::new(100.0, 1.0, 16, 17);
        c.time.t_end = 0.01;
        c.time.sample_interval = 0.005;
        c.time.checkpoint_interval = Some(0.005);
        let out = run(&c, Some(dir.path()), None).unwrap();
        assert_eq!(out.recorder.records.len(), 3);
        for f in
            ["config.toml", "provenance.txt", "diagnostics.csv", "summary.txt", "bounds.csv", "bounds.txt", "checkpoint.rbns", "final.rbns"]
        {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let prov = fs::read_to_string(dir.path().join("provenance.txt")).unwrap();
        assert!(prov.contains("version = ") && prov.contains("dx2 = "));
        let (_, avg, report) = report_from_run_dir(dir.path()).unwrap();
        assert_eq!(avg.nu_flux, out.averages.nu_flux);
        assert_eq!(report.csv_rows(), out.report.csv_rows());
        fs::remove_file(dir.path().join("diagnostics.csv")).unwrap();
        let e = report_from_run_dir(dir.path()).unwrap_err().to_string();
        assert!(e.contains("diagnostics.csv"), "{e}");
    }
}
