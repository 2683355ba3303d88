//! Run outputs: diagnostics tables, field snapshots (CSV and the legacy
//! structured-points text layout), the run manifest, and the simulation
//! driver shared by the CLI and the verification suites.
//!
//! Numbers are written with Rust's shortest round-trip formatting, which is
//! locale independent; identical states produce byte-identical files.

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::solver::{advance, initial_state, total_free_energy, SimState, StepDiag};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

pub const DIAG_HEADER: &str =
    "step,time,dt,free_energy,mass,min_apb,max_apb,min_amb,max_amb,elastic_residual,delta_f,rejections,regularized_cells";

pub fn diag_row(d: &StepDiag) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        d.step,
        d.time,
        d.dt,
        d.free_energy,
        d.mass,
        d.min_apb,
        d.max_apb,
        d.min_amb,
        d.max_amb,
        d.elastic_residual,
        d.delta_f,
        d.rejections,
        d.regularized_cells
    )
}

/// Cell-centered field snapshot as CSV with coordinates.
pub fn field_csv(field: &[f64], grid: &crate::solver::Grid) -> String {
    let mut s = String::new();
    if grid.dim == 1 {
        s.push_str("x,value\n");
        for i in 0..grid.n[0] {
            let x = grid.cell_center(i, 0)[0];
            let _ = writeln!(s, "{},{}", x, field[grid.cell_index(i, 0)]);
        }
    } else {
        s.push_str("x,y,value\n");
        for j in 0..grid.n[1] {
            for i in 0..grid.n[0] {
                let c = grid.cell_center(i, j);
                let _ = writeln!(s, "{},{},{}", c[0], c[1], field[grid.cell_index(i, j)]);
            }
        }
    }
    s
}

/// Legacy structured-points text layout (dimensions, spacing, origin, then
/// point data) readable by common visualization tools.
pub fn field_structured_points(name: &str, field: &[f64], grid: &crate::solver::Grid) -> String {
    let h = grid.spacing();
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(s, "microlax field {name}");
    s.push_str("ASCII\nDATASET STRUCTURED_POINTS\n");
    let _ = writeln!(s, "DIMENSIONS {} {} 1", grid.n[0], if grid.dim == 1 { 1 } else { grid.n[1] });
    let _ = writeln!(s, "SPACING {} {} 1", h[0], if grid.dim == 1 { 1.0 } else { h[1] });
    let _ = writeln!(s, "ORIGIN {} {} 0", 0.5 * h[0], if grid.dim == 1 { 0.0 } else { 0.5 * h[1] });
    let _ = writeln!(s, "POINT_DATA {}", field.len());
    let _ = writeln!(s, "SCALARS {name} double");
    s.push_str("LOOKUP_TABLE default\n");
    for v in field {
        let _ = writeln!(s, "{v}");
    }
    s
}

/// Summary of a finished (or failed) run.
pub struct RunSummary {
    pub steps: usize,
    pub final_time: f64,
    pub final_f: f64,
    pub initial_f: f64,
    pub mass_drift_rel: f64,
    pub max_elastic_residual: f64,
    pub monotone_f: bool,
    /// accepted steps at which a+b or a-b left [-1e-6, 1+1e-6]; the discrete
    /// scheme has no maximum principle, so this is monitored, not enforced
    pub range_violations: usize,
    pub wall_seconds: f64,
}

/// Drives a simulation from a resolved configuration. `on_step` sees every
/// accepted step; when `out` is given, the manifest, a diagnostics table and
/// field snapshots at the configured cadence are written there.
pub fn run_simulation(
    cfg: &SimConfig,
    out: Option<&Path>,
    mut on_step: impl FnMut(&StepDiag, &SimState),
) -> Result<RunSummary> {
    let params = cfg.sim_params()?;
    let (a0, b0) = cfg.initial_fields()?;
    let started = std::time::Instant::now();
    let start_stamp = unix_now();

    let mut state = initial_state(&params, a0, b0)?;
    let mass0 = state.a.iter().sum::<f64>() * params.grid.cell_volume();
    let f0 = total_free_energy(&state.a, &state.b, &state.cells, &state.strain, &params);

    let mut diag_text = String::from(DIAG_HEADER);
    diag_text.push('\n');
    let init_diag = StepDiag {
        step: 0,
        time: 0.0,
        dt: params.dt,
        free_energy: f0,
        mass: mass0,
        min_apb: 0.0,
        max_apb: 0.0,
        min_amb: 0.0,
        max_amb: 0.0,
        elastic_residual: state.elastic_residual,
        delta_f: 0.0,
        rejections: 0,
        regularized_cells: 0,
    };
    diag_text.push_str(&diag_row(&init_diag));
    diag_text.push('\n');

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_snapshots(cfg, dir, &state, 0)?;
    }

    let mut summary = RunSummary {
        steps: 0,
        final_time: 0.0,
        final_f: f0,
        initial_f: f0,
        mass_drift_rel: 0.0,
        max_elastic_residual: state.elastic_residual,
        monotone_f: true,
        range_violations: 0,
        wall_seconds: 0.0,
    };
    let mut f_prev = f0;
    let mut failure: Option<Error> = None;

    while state.time < params.t_end && state.step < params.max_steps {
        match advance(&mut state, &params) {
            Ok(diag) => {
                if diag.free_energy > f_prev + 1e-9 * (1.0 + f_prev.abs()) {
                    summary.monotone_f = false;
                }
                f_prev = diag.free_energy;
                summary.steps = diag.step;
                summary.final_time = diag.time;
                summary.final_f = diag.free_energy;
                summary.max_elastic_residual =
                    summary.max_elastic_residual.max(diag.elastic_residual);
                let drift = ((diag.mass - mass0) / mass0.abs().max(1e-300)).abs();
                summary.mass_drift_rel = summary.mass_drift_rel.max(drift);
                const RANGE_SLACK: f64 = 1e-6;
                if diag.min_apb < -RANGE_SLACK
                    || diag.max_apb > 1.0 + RANGE_SLACK
                    || diag.min_amb < -RANGE_SLACK
                    || diag.max_amb > 1.0 + RANGE_SLACK
                {
                    summary.range_violations += 1;
                }
                diag_text.push_str(&diag_row(&diag));
                diag_text.push('\n');
                if let Some(dir) = out {
                    if cfg.snapshot_every > 0 && diag.step % cfg.snapshot_every == 0 {
                        write_snapshots(cfg, dir, &state, diag.step)?;
                    }
                }
                on_step(&diag, &state);
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    summary.wall_seconds = started.elapsed().as_secs_f64();
    if summary.range_violations > 0 {
        eprintln!(
            "warning: a+b or a-b left the valid range on {} accepted step(s)",
            summary.range_violations
        );
    }

    if let Some(dir) = out {
        write_snapshots(cfg, dir, &state, summary.steps)?;
        write_atomic(&dir.join("diagnostics.csv"), &diag_text)?;
        let manifest = manifest_text(cfg, &summary, start_stamp, failure.as_ref());
        write_atomic(&dir.join("manifest.ini"), &manifest)?;
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}

fn write_snapshots(cfg: &SimConfig, dir: &Path, state: &SimState, step: usize) -> Result<()> {
    let grid = &cfg.grid;
    for (name, field) in [("a", &state.a), ("b", &state.b), ("mu", &state.mu)] {
        let path = dir.join(format!("{name}_{step:08}.csv"));
        write_atomic(&path, &field_csv(field, grid))?;
        if cfg.structured_points {
            let path = dir.join(format!("{name}_{step:08}.vtk"));
            write_atomic(&path, &field_structured_points(name, field, grid))?;
        }
    }
    Ok(())
}

fn manifest_text(
    cfg: &SimConfig,
    summary: &RunSummary,
    start_stamp: f64,
    failure: Option<&Error>,
) -> String {
    let mut s = cfg.resolved_ini();
    let _ = writeln!(s, "\n[manifest]");
    let _ = writeln!(s, "code_version = microlax {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "start_unix = {start_stamp}");
    let _ = writeln!(s, "end_unix = {}", unix_now());
    let _ = writeln!(s, "wall_seconds = {}", summary.wall_seconds);
    let _ = writeln!(s, "steps = {}", summary.steps);
    let _ = writeln!(s, "final_time = {}", summary.final_time);
    let _ = writeln!(s, "final_free_energy = {}", summary.final_f);
    let _ = writeln!(s, "mass_drift_rel = {}", summary.mass_drift_rel);
    let _ = writeln!(s, "max_elastic_residual = {}", summary.max_elastic_residual);
    let _ = writeln!(s, "monotone_free_energy = {}", summary.monotone_f);
    let _ = writeln!(s, "range_violations = {}", summary.range_violations);
    let _ = writeln!(
        s,
        "status = {}",
        match failure {
            None => "ok".to_string(),
            Some(e) => format!("failed: {e}"),
        }
    );
    s
}

fn unix_now() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn write_atomic(path: &PathBuf, text: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        f.write_all(text.as_bytes())?;
        f.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Ini;

    fn small_cfg(seed: u64) -> SimConfig {
        let text = format!(
            "
[run]
variant = relaxed
dim = 1
dt = 2e-4
t_end = 0.004
seed = {seed}
snapshot_every = 10

[grid]
cells = 32
length = 1.0

[chem]
theta = 0.5
kappa1 = 2.0
kappa2 = 0.1
lambda = 1e-3

[phase1]
alpha = 1.0
eps_t = 0.0

[phase2]
alpha = 2.0
eps_t = 0.3

[initial]
a0 = 0.5
b0 = 0.0
noise_a = 1e-3
"
        );
        SimConfig::from_ini(&Ini::parse(&text).unwrap()).unwrap()
    }

    #[test]
    fn simulation_runs_and_writes_outputs() {
        let dir = std::env::temp_dir().join(format!("microlax_out_{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        let cfg = small_cfg(7);
        let summary = run_simulation(&cfg, Some(&dir), |_, _| {}).unwrap();
        assert!(summary.steps >= 19);
        assert!(summary.monotone_f);
        assert!(summary.mass_drift_rel <= 1e-10);
        assert!(dir.join("diagnostics.csv").exists());
        assert!(dir.join("manifest.ini").exists());
        assert!(dir.join("a_00000000.csv").exists());
        // the manifest reloads as a configuration
        let manifest = std::fs::read_to_string(dir.join("manifest.ini")).unwrap();
        let cfg2 = SimConfig::from_ini(&Ini::parse(&manifest).unwrap()).unwrap();
        assert_eq!(cfg2.seed, 7);
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn deterministic_runs_are_byte_identical() {
        let d1 = std::env::temp_dir().join(format!("microlax_det1_{}", std::process::id()));
        let d2 = std::env::temp_dir().join(format!("microlax_det2_{}", std::process::id()));
        for d in [&d1, &d2] {
            let _ = std::fs::remove_dir_all(d);
            let cfg = small_cfg(42);
            run_simulation(&cfg, Some(d), |_, _| {}).unwrap();
        }
        let a1 = std::fs::read(d1.join("diagnostics.csv")).unwrap();
        let a2 = std::fs::read(d2.join("diagnostics.csv")).unwrap();
        assert_eq!(a1, a2);
        let s1 = std::fs::read(d1.join("a_00000010.csv")).unwrap();
        let s2 = std::fs::read(d2.join("a_00000010.csv")).unwrap();
        assert_eq!(s1, s2);
        let _ = std::fs::remove_dir_all(&d1);
        let _ = std::fs::remove_dir_all(&d2);
    }

    #[test]
    fn structured_points_layout() {
        let grid = crate::solver::Grid::new_1d(4, 1.0).unwrap();
        let text = field_structured_points("a", &[1.0, 2.0, 3.0, 4.0], &grid);
        assert!(text.contains("DATASET STRUCTURED_POINTS"));
        assert!(text.contains("DIMENSIONS 4 1 1"));
        assert!(text.contains("POINT_DATA 4"));
    }
}
