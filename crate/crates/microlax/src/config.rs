//! INI-style configuration: sections of `key = value` pairs, tensors as
//! comma lists in Mandel order. The same format serializes resolved runs
//! into reloadable manifests.

use crate::energy::{ChemParams, LinearTheoryParams, PhaseParams, ScalarPhaseParams};
use crate::error::{Error, Result};
use crate::solver::{ElasticOptions, EnergyModel, Grid, SimParams, StepperKind};
use crate::tensor::{Dim, ElasticModulus, Mat2, SymTensor};

/// Order-preserving parsed INI document.
#[derive(Clone, Debug, Default)]
pub struct Ini {
    sections: Vec<(String, Vec<(String, String)>)>,
}

impl Ini {
    /// Parses the `[section]` / `key = value` format. Lines starting with
    /// `#` or `;` (or trailing comments introduced by ` ;`) are ignored.
    /// Never panics on malformed input.
    pub fn parse(text: &str) -> Result<Ini> {
        let mut doc = Ini::default();
        let mut current: Option<usize> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {}: unterminated section", lineno + 1)))?
                    .trim();
                if name.is_empty() {
                    return Err(Error::Config(format!("line {}: empty section name", lineno + 1)));
                }
                doc.sections.push((name.to_ascii_lowercase(), Vec::new()));
                current = Some(doc.sections.len() - 1);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim().to_ascii_lowercase();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            let idx = match current {
                Some(i) => i,
                None => {
                    return Err(Error::Config(format!(
                        "line {}: key outside of any [section]",
                        lineno + 1
                    )))
                }
            };
            doc.sections[idx].1.push((key, value.trim().to_string()));
        }
        Ok(doc)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        // later sections and keys override earlier ones
        let mut found = None;
        for (name, pairs) in &self.sections {
            if name != section {
                continue;
            }
            for (k, v) in pairs {
                if k == key {
                    found = Some(v.as_str());
                }
            }
        }
        found
    }

    pub fn f64(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        match self.get(section, key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| Error::Config(format!("[{section}] {key}: not a number: {s:?}"))),
        }
    }

    pub fn usize(&self, section: &str, key: &str, default: usize) -> Result<usize> {
        match self.get(section, key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| Error::Config(format!("[{section}] {key}: not an integer: {s:?}"))),
        }
    }

    pub fn u64(&self, section: &str, key: &str, default: u64) -> Result<u64> {
        match self.get(section, key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| Error::Config(format!("[{section}] {key}: not an integer: {s:?}"))),
        }
    }

    pub fn bool(&self, section: &str, key: &str, default: bool) -> Result<bool> {
        match self.get(section, key) {
            None => Ok(default),
            Some(s) => match s.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" | "on" => Ok(true),
                "false" | "no" | "0" | "off" => Ok(false),
                other => Err(Error::Config(format!("[{section}] {key}: not a boolean: {other:?}"))),
            },
        }
    }
}

fn strip_comment(line: &str) -> &str {
    let mut end = line.len();
    for (i, ch) in line.char_indices() {
        if ch == '#' || ch == ';' {
            end = i;
            break;
        }
    }
    &line[..end]
}

/// Parses a comma list of floats.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("not a number in list: {tok:?}")))
        })
        .collect()
}

/// Parses a modulus spec:
/// a plain scalar (1D), `iso: s`, `cubic: C11, C12, C44` or
/// `mandel: m11, m12, m13, m22, m23, m33` (upper triangle).
pub fn parse_modulus(s: &str, dim: Dim) -> Result<ElasticModulus> {
    let (kind, rest) = match s.split_once(':') {
        Some((k, r)) => (k.trim().to_ascii_lowercase(), r),
        None => ("scalar".to_string(), s),
    };
    let vals = parse_list(rest)?;
    match (kind.as_str(), dim) {
        ("scalar", Dim::One) if vals.len() == 1 => {
            if vals[0] <= 0.0 {
                return Err(Error::Config("1D modulus must be positive".into()));
            }
            Ok(ElasticModulus::d1(vals[0]))
        }
        ("scalar", Dim::Two) | ("iso", _) if vals.len() == 1 => {
            if vals[0] <= 0.0 {
                return Err(Error::Config("isotropic modulus scale must be positive".into()));
            }
            Ok(ElasticModulus::scaled_identity(dim, vals[0]))
        }
        ("cubic", Dim::Two) if vals.len() == 3 => {
            ElasticModulus::cubic(vals[0], vals[1], vals[2])
        }
        ("mandel", Dim::Two) if vals.len() == 6 => {
            let m = [
                [vals[0], vals[1], vals[2]],
                [vals[1], vals[3], vals[4]],
                [vals[2], vals[4], vals[5]],
            ];
            ElasticModulus::from_mandel(Dim::Two, m)
        }
        _ => Err(Error::Config(format!("bad modulus spec {s:?} for dimension {dim:?}"))),
    }
}

/// 2x2 SPD matrix spec for the scalar setting: `a11, a12, a22` or `iso: s`.
pub fn parse_mat2(s: &str) -> Result<Mat2> {
    let vals = match s.split_once(':') {
        Some((k, r)) if k.trim().eq_ignore_ascii_case("iso") => {
            let v = parse_list(r)?;
            if v.len() != 1 {
                return Err(Error::Config("iso: takes one scale".into()));
            }
            vec![v[0], 0.0, v[0]]
        }
        _ => parse_list(s)?,
    };
    if vals.len() != 3 {
        return Err(Error::Config(format!("2x2 matrix spec needs a11,a12,a22: {s:?}")));
    }
    let m = [[vals[0], vals[1]], [vals[1], vals[2]]];
    if !crate::tensor::mat2_is_spd(&m) {
        return Err(Error::Config(format!("matrix is not SPD: {s:?}")));
    }
    Ok(m)
}

pub fn parse_tensor(s: &str, dim: Dim) -> Result<SymTensor> {
    let vals = parse_list(s)?;
    match (dim, vals.len()) {
        (Dim::One, 1) => Ok(SymTensor::scalar(vals[0])),
        (Dim::Two, 3) => Ok(SymTensor::d2(vals[0], vals[1], vals[2])),
        _ => Err(Error::Config(format!(
            "tensor {s:?} has {} components, expected {}",
            vals.len(),
            dim.mandel_len()
        ))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Linear,
    Relaxed,
    Scalar3d,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Variant> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Variant::Linear),
            "relaxed" => Ok(Variant::Relaxed),
            "scalar3d" => Ok(Variant::Scalar3d),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Linear => "linear",
            Variant::Relaxed => "relaxed",
            Variant::Scalar3d => "scalar3d",
        }
    }
}

/// Fully resolved simulation configuration.
pub struct SimConfig {
    pub variant: Variant,
    pub dim: usize,
    pub grid: Grid,
    pub chem: ChemParams,
    pub phase: Option<PhaseParams>,
    pub scalar_phase: Option<ScalarPhaseParams>,
    pub linear: Option<LinearTheoryParams>,
    pub sigma_ext: [f64; 3],
    pub mobility: f64,
    pub dt: f64,
    pub t_end: f64,
    pub max_steps: usize,
    pub stepper: StepperKind,
    pub tol_elast: f64,
    pub tol_mm: f64,
    pub cg_tol: f64,
    pub freeze_a: bool,
    pub freeze_b: bool,
    pub mu_plain_laplacian: bool,
    pub dt_growth: bool,
    pub seed: u64,
    pub deterministic: bool,
    pub a0: f64,
    pub b0: f64,
    pub noise_a: f64,
    pub noise_b: f64,
    pub a0_file: Option<String>,
    pub b0_file: Option<String>,
    pub snapshot_every: usize,
    pub structured_points: bool,
}

impl SimConfig {
    pub fn from_ini(ini: &Ini) -> Result<SimConfig> {
        let variant = Variant::parse(ini.get("run", "variant").unwrap_or("relaxed"))?;
        let dim = ini.usize("run", "dim", if variant == Variant::Scalar3d { 2 } else { 1 })?;
        if dim != 1 && dim != 2 {
            return Err(Error::Config("dim must be 1 or 2".into()));
        }
        if variant == Variant::Scalar3d && dim != 2 {
            return Err(Error::Config("the scalar3d variant runs on a 2D grid".into()));
        }

        let cells = ini.get("grid", "cells").unwrap_or("64");
        let lengths = ini.get("grid", "length").unwrap_or("1.0");
        let cell_list = parse_list(&cells.replace("x", ","))?;
        let len_list = parse_list(lengths)?;
        let grid = match dim {
            1 => Grid::new_1d(cell_list[0] as usize, len_list[0])?,
            _ => {
                let nx = cell_list[0] as usize;
                let ny = *cell_list.get(1).unwrap_or(&cell_list[0]) as usize;
                let lx = len_list[0];
                let ly = *len_list.get(1).unwrap_or(&len_list[0]);
                Grid::new_2d(nx, ny, lx, ly)?
            }
        };

        let chem = ChemParams {
            theta: ini.f64("chem", "theta", 1.0)?,
            kappa1: ini.f64("chem", "kappa1", 1.0)?,
            kappa2: ini.f64("chem", "kappa2", 1.0)?,
            lambda: ini.f64("chem", "lambda", 1e-3)?,
            g_delta: ini.f64("chem", "g_delta", 1e-6)?,
        };
        chem.validate()?;

        let tensor_dim = if dim == 1 { Dim::One } else { Dim::Two };
        let mut phase = None;
        let mut scalar_phase = None;
        let mut linear = None;
        let sigma_ext;
        match variant {
            Variant::Relaxed => {
                let p = PhaseParams {
                    alpha1: parse_modulus(ini.get("phase1", "alpha").unwrap_or("1.0"), tensor_dim)?,
                    alpha2: parse_modulus(ini.get("phase2", "alpha").unwrap_or("1.0"), tensor_dim)?,
                    eps_t1: parse_tensor(
                        ini.get("phase1", "eps_t").unwrap_or(if dim == 1 { "0" } else { "0,0,0" }),
                        tensor_dim,
                    )?,
                    eps_t2: parse_tensor(
                        ini.get("phase2", "eps_t").unwrap_or(if dim == 1 { "0" } else { "0,0,0" }),
                        tensor_dim,
                    )?,
                    w1: ini.f64("phase1", "w", 0.0)?,
                    w2: ini.f64("phase2", "w", 0.0)?,
                    sigma_ext: parse_tensor(
                        ini.get("external", "sigma").unwrap_or(if dim == 1 { "0" } else { "0,0,0" }),
                        tensor_dim,
                    )?,
                };
                p.validate()?;
                sigma_ext = p.sigma_ext.c;
                phase = Some(p);
            }
            Variant::Scalar3d => {
                let sp = ScalarPhaseParams {
                    alpha1: parse_mat2(ini.get("phase1", "alpha").unwrap_or("1,0,1"))?,
                    alpha2: parse_mat2(ini.get("phase2", "alpha").unwrap_or("1,0,1"))?,
                    f_t1: parse_vec2(ini.get("phase1", "eps_t").unwrap_or("0,0"))?,
                    f_t2: parse_vec2(ini.get("phase2", "eps_t").unwrap_or("0,0"))?,
                    w1: ini.f64("phase1", "w", 0.0)?,
                    w2: ini.f64("phase2", "w", 0.0)?,
                    sigma_ext: parse_vec2(ini.get("external", "sigma").unwrap_or("0,0"))?,
                };
                sp.validate()?;
                sigma_ext = [sp.sigma_ext[0], sp.sigma_ext[1], 0.0];
                scalar_phase = Some(sp);
            }
            Variant::Linear => {
                let c1 = parse_modulus(ini.get("linear", "c").unwrap_or("1.0"), tensor_dim)?;
                let c2 = match ini.get("linear", "c2") {
                    None => None,
                    Some(s) => Some(parse_modulus(s, tensor_dim)?),
                };
                let eps_bar = parse_tensor(
                    ini.get("linear", "eps_bar").unwrap_or(if dim == 1 { "0" } else { "0,0,0" }),
                    tensor_dim,
                )?;
                let s = parse_tensor(
                    ini.get("external", "sigma").unwrap_or(if dim == 1 { "0" } else { "0,0,0" }),
                    tensor_dim,
                )?;
                sigma_ext = s.c;
                linear = Some(LinearTheoryParams { c1, c2, eps_bar });
            }
        }

        let stepper = match ini.get("run", "stepper").unwrap_or("semi_implicit") {
            "semi_implicit" => StepperKind::SemiImplicit,
            "minimizing_movement" => StepperKind::MinimizingMovement,
            other => return Err(Error::Config(format!("unknown stepper {other:?}"))),
        };
        let mu_mode = ini.get("solver", "mu_laplacian").unwrap_or("lambda");
        let mu_plain_laplacian = match mu_mode {
            "lambda" => false,
            "plain" => true,
            other => return Err(Error::Config(format!("mu_laplacian must be lambda|plain, got {other:?}"))),
        };

        let dt = ini.f64("run", "dt", 1e-4)?;
        let mobility = ini.f64("mobility", "m", 1.0)?;
        if dt <= 0.0 || mobility <= 0.0 {
            return Err(Error::Config("dt and mobility must be positive".into()));
        }

        Ok(SimConfig {
            variant,
            dim,
            grid,
            chem,
            phase,
            scalar_phase,
            linear,
            sigma_ext,
            mobility,
            dt,
            t_end: ini.f64("run", "t_end", 1.0)?,
            max_steps: ini.usize("run", "max_steps", 1_000_000)?,
            stepper,
            tol_elast: ini.f64("solver", "tol_elast", 1e-9)?,
            tol_mm: ini.f64("solver", "tol_mm", 1e-8)?,
            cg_tol: ini.f64("solver", "cg_tol", 1e-12)?,
            freeze_a: ini.bool("solver", "freeze_a", false)?,
            freeze_b: ini.bool("solver", "freeze_b", false)?,
            mu_plain_laplacian,
            dt_growth: ini.bool("solver", "dt_growth", false)?,
            seed: ini.u64("run", "seed", 0x5EED)?,
            deterministic: ini.bool("run", "deterministic", false)?,
            a0: ini.f64("initial", "a0", 0.5)?,
            b0: ini.f64("initial", "b0", 0.0)?,
            noise_a: ini.f64("initial", "noise_a", 1e-3)?,
            noise_b: ini.f64("initial", "noise_b", 0.0)?,
            a0_file: ini.get("initial", "a0_file").map(str::to_string),
            b0_file: ini.get("initial", "b0_file").map(str::to_string),
            snapshot_every: ini.usize("run", "snapshot_every", 0)?,
            structured_points: ini.bool("run", "structured_points", false)?,
        })
    }

    pub fn model(&self) -> Result<EnergyModel> {
        Ok(match self.variant {
            Variant::Relaxed => {
                let p = self.phase.ok_or_else(|| Error::Config("missing phase data".into()))?;
                if self.dim == 1 {
                    EnergyModel::Relaxed1D(p)
                } else {
                    EnergyModel::Relaxed2D(p)
                }
            }
            Variant::Scalar3d => EnergyModel::Scalar3D(
                self.scalar_phase.ok_or_else(|| Error::Config("missing phase data".into()))?,
            ),
            Variant::Linear => EnergyModel::Linear(
                self.linear.ok_or_else(|| Error::Config("missing [linear] data".into()))?,
            ),
        })
    }

    pub fn sim_params(&self) -> Result<SimParams> {
        Ok(SimParams {
            grid: self.grid,
            chem: self.chem,
            model: self.model()?,
            sigma_ext: self.sigma_ext,
            mobility: self.mobility,
            dt: self.dt,
            t_end: self.t_end,
            max_steps: self.max_steps,
            stepper: self.stepper,
            elastic: ElasticOptions {
                tol: self.tol_elast,
                cg_tol: self.cg_tol,
                max_outer: 50,
            },
            tol_mm: self.tol_mm,
            cg_tol: self.cg_tol,
            freeze_a: self.freeze_a,
            freeze_b: self.freeze_b,
            mu_plain_laplacian: self.mu_plain_laplacian,
            dt_growth: self.dt_growth,
        })
    }

    /// Initial fields: constants plus clipped seeded noise, or field files.
    pub fn initial_fields(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        use rand::Rng;
        use rand::SeedableRng;
        let nc = self.grid.cells();
        let mut a = match &self.a0_file {
            Some(path) => read_field_file(path, nc)?,
            None => vec![self.a0; nc],
        };
        let mut b = match &self.b0_file {
            Some(path) => read_field_file(path, nc)?,
            None => vec![self.b0; nc],
        };
        if self.a0_file.is_none() || self.b0_file.is_none() {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
            for c in 0..nc {
                if self.a0_file.is_none() && self.noise_a > 0.0 {
                    a[c] += self.noise_a * (2.0 * rng.gen::<f64>() - 1.0);
                }
                if self.b0_file.is_none() && self.noise_b > 0.0 {
                    b[c] += self.noise_b * (2.0 * rng.gen::<f64>() - 1.0);
                }
            }
        }
        for c in 0..nc {
            let (ac, bc) = crate::solver::clip_to_range(a[c], b[c], 1e-6);
            a[c] = ac;
            b[c] = bc;
        }
        Ok((a, b))
    }

    /// Serializes the resolved configuration back into loadable INI text.
    pub fn resolved_ini(&self) -> String {
        let mut s = String::new();
        use std::fmt::Write;
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "variant = {}", self.variant.name());
        let _ = writeln!(s, "dim = {}", self.dim);
        let _ = writeln!(
            s,
            "stepper = {}",
            match self.stepper {
                StepperKind::SemiImplicit => "semi_implicit",
                StepperKind::MinimizingMovement => "minimizing_movement",
            }
        );
        let _ = writeln!(s, "dt = {}", self.dt);
        let _ = writeln!(s, "t_end = {}", self.t_end);
        let _ = writeln!(s, "max_steps = {}", self.max_steps);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "deterministic = {}", self.deterministic);
        let _ = writeln!(s, "snapshot_every = {}", self.snapshot_every);
        let _ = writeln!(s, "structured_points = {}", self.structured_points);
        let _ = writeln!(s, "\n[grid]");
        if self.dim == 1 {
            let _ = writeln!(s, "cells = {}", self.grid.n[0]);
            let _ = writeln!(s, "length = {}", self.grid.len[0]);
        } else {
            let _ = writeln!(s, "cells = {}, {}", self.grid.n[0], self.grid.n[1]);
            let _ = writeln!(s, "length = {}, {}", self.grid.len[0], self.grid.len[1]);
        }
        let _ = writeln!(s, "\n[chem]");
        let _ = writeln!(s, "theta = {}", self.chem.theta);
        let _ = writeln!(s, "kappa1 = {}", self.chem.kappa1);
        let _ = writeln!(s, "kappa2 = {}", self.chem.kappa2);
        let _ = writeln!(s, "lambda = {}", self.chem.lambda);
        let _ = writeln!(s, "g_delta = {}", self.chem.g_delta);
        let _ = writeln!(s, "\n[mobility]");
        let _ = writeln!(s, "m = {}", self.mobility);
        let list = |c: &[f64]| c.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        match self.variant {
            Variant::Relaxed => {
                let p = self.phase.as_ref().expect("resolved");
                let nd = if self.dim == 1 { 1 } else { 3 };
                let _ = writeln!(s, "\n[phase1]");
                let _ = writeln!(s, "alpha = {}", modulus_spec(&p.alpha1));
                let _ = writeln!(s, "eps_t = {}", list(&p.eps_t1.c[..nd]));
                let _ = writeln!(s, "w = {}", p.w1);
                let _ = writeln!(s, "\n[phase2]");
                let _ = writeln!(s, "alpha = {}", modulus_spec(&p.alpha2));
                let _ = writeln!(s, "eps_t = {}", list(&p.eps_t2.c[..nd]));
                let _ = writeln!(s, "w = {}", p.w2);
                let _ = writeln!(s, "\n[external]");
                let _ = writeln!(s, "sigma = {}", list(&p.sigma_ext.c[..nd]));
            }
            Variant::Scalar3d => {
                let sp = self.scalar_phase.as_ref().expect("resolved");
                let m2 = |m: &Mat2| format!("{}, {}, {}", m[0][0], m[0][1], m[1][1]);
                let _ = writeln!(s, "\n[phase1]");
                let _ = writeln!(s, "alpha = {}", m2(&sp.alpha1));
                let _ = writeln!(s, "eps_t = {}, {}", sp.f_t1[0], sp.f_t1[1]);
                let _ = writeln!(s, "w = {}", sp.w1);
                let _ = writeln!(s, "\n[phase2]");
                let _ = writeln!(s, "alpha = {}", m2(&sp.alpha2));
                let _ = writeln!(s, "eps_t = {}, {}", sp.f_t2[0], sp.f_t2[1]);
                let _ = writeln!(s, "w = {}", sp.w2);
                let _ = writeln!(s, "\n[external]");
                let _ = writeln!(s, "sigma = {}, {}", sp.sigma_ext[0], sp.sigma_ext[1]);
            }
            Variant::Linear => {
                let q = self.linear.as_ref().expect("resolved");
                let nd = if self.dim == 1 { 1 } else { 3 };
                let _ = writeln!(s, "\n[linear]");
                let _ = writeln!(s, "c = {}", modulus_spec(&q.c1));
                if let Some(c2) = &q.c2 {
                    let _ = writeln!(s, "c2 = {}", modulus_spec(c2));
                }
                let _ = writeln!(s, "eps_bar = {}", list(&q.eps_bar.c[..nd]));
                let _ = writeln!(s, "\n[external]");
                let _ = writeln!(s, "sigma = {}", list(&self.sigma_ext[..nd]));
            }
        }
        let _ = writeln!(s, "\n[initial]");
        let _ = writeln!(s, "a0 = {}", self.a0);
        let _ = writeln!(s, "b0 = {}", self.b0);
        let _ = writeln!(s, "noise_a = {}", self.noise_a);
        let _ = writeln!(s, "noise_b = {}", self.noise_b);
        if let Some(p) = &self.a0_file {
            let _ = writeln!(s, "a0_file = {p}");
        }
        if let Some(p) = &self.b0_file {
            let _ = writeln!(s, "b0_file = {p}");
        }
        let _ = writeln!(s, "\n[solver]");
        let _ = writeln!(s, "tol_elast = {}", self.tol_elast);
        let _ = writeln!(s, "tol_mm = {}", self.tol_mm);
        let _ = writeln!(s, "cg_tol = {}", self.cg_tol);
        let _ = writeln!(s, "freeze_a = {}", self.freeze_a);
        let _ = writeln!(s, "freeze_b = {}", self.freeze_b);
        let _ = writeln!(
            s,
            "mu_laplacian = {}",
            if self.mu_plain_laplacian { "plain" } else { "lambda" }
        );
        let _ = writeln!(s, "dt_growth = {}", self.dt_growth);
        s
    }
}

fn modulus_spec(m: &ElasticModulus) -> String {
    match m.dim {
        Dim::One => format!("{}", m.as_scalar()),
        Dim::Two => format!(
            "mandel: {}, {}, {}, {}, {}, {}",
            m.m[0][0], m.m[0][1], m.m[0][2], m.m[1][1], m.m[1][2], m.m[2][2]
        ),
    }
}

pub fn parse_vec2(s: &str) -> Result<[f64; 2]> {
    let v = parse_list(s)?;
    if v.len() != 2 {
        return Err(Error::Config(format!("expected two components: {s:?}")));
    }
    Ok([v[0], v[1]])
}

/// Parses field-file text: one value per line (a trailing comma-separated
/// token per line is accepted so snapshot CSVs reload directly); `#` lines
/// and a non-numeric header are skipped.
pub fn parse_field_text(text: &str, expected: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tok = line.rsplit(',').next().unwrap_or(line).trim();
        match tok.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) => {
                if out.is_empty() {
                    continue; // header row
                }
                return Err(Error::Config(format!("bad value in field file: {tok:?}")));
            }
        }
    }
    if out.len() != expected {
        return Err(Error::Config(format!(
            "field file has {} values, grid needs {expected}",
            out.len()
        )));
    }
    Ok(out)
}

pub fn read_field_file(path: &str, expected: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    parse_field_text(&text, expected)
        .map_err(|e| Error::Config(format!("{path:?}: {e}")))
}

/// Regime-map request: two swept axes plus fixed coordinates.
#[derive(Clone, Debug)]
pub struct RegimeMapRequest {
    pub axis1: AxisSpec,
    pub axis2: AxisSpec,
    pub fixed_d: f64,
    pub fixed_eps: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct AxisSpec {
    pub name: AxisName,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxisName {
    D,
    Eps1,
    Eps2,
    Eps3,
    /// scales both eigenstrains
    Scale,
}

impl AxisSpec {
    /// `name: lo, hi, count`
    pub fn parse(s: &str) -> Result<AxisSpec> {
        let (name, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("axis spec {s:?} needs name: lo, hi, count")))?;
        let name = match name.trim().to_ascii_lowercase().as_str() {
            "d" => AxisName::D,
            "eps1" => AxisName::Eps1,
            "eps2" => AxisName::Eps2,
            "eps3" => AxisName::Eps3,
            "scale" => AxisName::Scale,
            other => return Err(Error::Config(format!("unknown axis {other:?}"))),
        };
        let v = parse_list(rest)?;
        if v.len() != 3 {
            return Err(Error::Config(format!("axis spec {s:?} needs lo, hi, count")));
        }
        let count = v[2] as usize;
        if count < 2 {
            return Err(Error::Config("axis sample count must be >= 2".into()));
        }
        if !v[0].is_finite() || !v[1].is_finite() {
            return Err(Error::Config("axis range must be finite".into()));
        }
        Ok(AxisSpec { name, lo: v[0], hi: v[1], count })
    }

    pub fn value(&self, k: usize) -> f64 {
        self.lo + (self.hi - self.lo) * k as f64 / (self.count - 1) as f64
    }
}

impl RegimeMapRequest {
    pub fn from_ini(ini: &Ini) -> Result<RegimeMapRequest> {
        let axis1 = AxisSpec::parse(
            ini.get("regime_map", "axis1")
                .ok_or_else(|| Error::Config("regime_map needs axis1".into()))?,
        )?;
        let axis2 = AxisSpec::parse(
            ini.get("regime_map", "axis2")
                .ok_or_else(|| Error::Config("regime_map needs axis2".into()))?,
        )?;
        let fixed_d = ini.f64("regime_map", "d", 0.5)?;
        let eps = parse_list(ini.get("regime_map", "eps").unwrap_or("0, 0, 0"))?;
        let mut fixed_eps = [0.0; 3];
        for (k, v) in eps.iter().take(3).enumerate() {
            fixed_eps[k] = *v;
        }
        Ok(RegimeMapRequest { axis1, axis2, fixed_d, fixed_eps })
    }
}
