//! Configuration, run orchestration, and file outputs.
//!
//! Configs are UTF-8 JSON with a fixed schema and defaults for every field;
//! validation reports *every* violated invariant at once. Snapshots are raw
//! little-endian `f64` arrays behind a 64-byte ASCII header (magic, version,
//! grid dims, time as hex bits) so reload is bit-identical. The energy
//! ledger is a CSV with a fixed, documented column set whose `total_energy`
//! column equals the sum of its component columns exactly.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discrete::{BoxGrid3, ScalarField2D, StaggeredField3D};
use crate::geometry::{ReferenceSurface, TubularChart};
use crate::shell::{ShellModel, ShellParams};
use crate::solver::diagnostics::{korn_check, regularity_diagnostics};
use crate::solver::fluid::{shell_grid_for, FluidOptions, FluidSolver};
use crate::solver::{
    project_initial_data, time_loop, EnergyLedger, FluidState, InitialVelocity, RunParams,
    ShellState, SolverError,
};

/// Failure modes of configuration loading and file I/O.
#[derive(Debug, Error)]
pub enum IoError {
    #[error("parse error: {detail}")]
    Parse { detail: String },
    #[error("invalid configuration:\n  {}", violations.join("\n  "))]
    Validation { violations: Vec<String> },
    #[error("invalid argument: {detail}")]
    Argument { detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed snapshot: {detail}")]
    Format { detail: String },
    #[error("no snapshots found in {dir}")]
    MissingSnapshots { dir: String },
}

/// One Fourier mode of a scalar field on ω:
/// `amp · cos(2π(k1·y1/L1 + k2·y2/L2) + phase)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub k1: i32,
    pub k2: i32,
    pub amp: f64,
    #[serde(default)]
    pub phase: f64,
}

/// One Fourier mode of an initial velocity component on the box:
/// `amp · cos(2π(k1·x/Lx + k2·y/Ly) + phase) · sin(π·kz·(z+d)/d)`,
/// vanishing at both walls (the Leray projection repairs divergence).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityMode {
    /// velocity component, 0..=2
    pub component: usize,
    pub k1: i32,
    pub k2: i32,
    pub kz: i32,
    pub amp: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Initial fluid velocity specifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum U0Spec {
    /// quiescent fluid
    Zero,
    /// divergence-free lift of the interface velocity η₁
    Lifted,
    /// explicit Fourier coefficient list, Leray-projected at startup
    Modes { modes: Vec<VelocityMode> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// reference surface selector; only "flat-channel" is runnable
    pub kind: String,
    pub depth: f64,
    pub len1: f64,
    pub len2: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig { kind: "flat-channel".into(), depth: 1.0, len1: 1.0, len2: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShellConfig {
    pub thickness: f64,
    pub lambda: f64,
    pub mu: f64,
    pub epsilon: f64,
}

impl Default for ShellConfig {
    fn default() -> Self {
        ShellConfig { thickness: 0.1, lambda: 1.0, mu: 1.0, epsilon: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    pub eta0: Vec<Mode>,
    pub eta1: Vec<Mode>,
    pub u0: U0Spec,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig { eta0: Vec::new(), eta1: Vec::new(), u0: U0Spec::Zero }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub newton_tol: f64,
    pub lin_tol: f64,
    pub gamma_min: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { newton_tol: 1e-10, lin_tol: 1e-10, gamma_min: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// write every this-many ledger rows (row 0 and the last row always)
    pub ledger_stride: usize,
    /// store a fluid snapshot every this many steps (0 = final only)
    pub snapshot_stride: usize,
    pub directory: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { ledger_stride: 1, snapshot_stride: 0, directory: "out".into() }
    }
}

/// Full simulation configuration (desk-scale defaults).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub geometry: GeometryConfig,
    /// ω grid is n_omega × n_omega
    pub n_omega: usize,
    /// vertical cells of the fluid box
    pub n_depth: usize,
    pub dt: f64,
    pub t_end: f64,
    pub shell: ShellConfig,
    /// collar width κ as a fraction of the channel depth
    pub kappa_fraction: f64,
    pub viscosity: f64,
    pub initial: InitialConfig,
    pub tolerances: Tolerances,
    pub output: OutputConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            geometry: GeometryConfig::default(),
            n_omega: 32,
            n_depth: 16,
            dt: 1e-3,
            t_end: 0.1,
            shell: ShellConfig::default(),
            kappa_fraction: 0.25,
            viscosity: 1.0,
            initial: InitialConfig::default(),
            tolerances: Tolerances::default(),
            output: OutputConfig::default(),
        }
    }
}

impl SimConfig {
    /// Checks every invariant and returns the complete list of violations.
    pub fn validate(&self) -> Result<(), IoError> {
        let mut v = Vec::new();
        let pos = |v: &mut Vec<String>, name: &str, x: f64| {
            if !(x > 0.0) {
                v.push(format!("{name} must be positive (got {x})"));
            }
        };
        pos(&mut v, "dt", self.dt);
        pos(&mut v, "t_end", self.t_end);
        pos(&mut v, "tolerances.newton_tol", self.tolerances.newton_tol);
        pos(&mut v, "tolerances.lin_tol", self.tolerances.lin_tol);
        pos(&mut v, "tolerances.gamma_min", self.tolerances.gamma_min);
        pos(&mut v, "viscosity", self.viscosity);
        pos(&mut v, "shell.thickness", self.shell.thickness);
        pos(&mut v, "shell.lambda", self.shell.lambda);
        pos(&mut v, "shell.mu", self.shell.mu);
        pos(&mut v, "shell.epsilon", self.shell.epsilon);
        pos(&mut v, "geometry.depth", self.geometry.depth);
        pos(&mut v, "geometry.len1", self.geometry.len1);
        pos(&mut v, "geometry.len2", self.geometry.len2);
        if self.geometry.kind != "flat-channel" {
            v.push(format!(
                "geometry.kind must be \"flat-channel\" (got \"{}\")",
                self.geometry.kind
            ));
        }
        for (name, n) in [("n_omega", self.n_omega), ("n_depth", self.n_depth)] {
            if n < 8 || n % 2 != 0 {
                v.push(format!("{name} must be even and >= 8 (got {n})"));
            }
        }
        if !(self.kappa_fraction > 0.0 && self.kappa_fraction < 0.5) {
            v.push(format!(
                "kappa_fraction must lie in (0, 0.5) (got {})",
                self.kappa_fraction
            ));
        }
        for m in &self.initial.eta0 {
            if !m.amp.is_finite() {
                v.push("initial.eta0 amplitudes must be finite".into());
            }
        }
        // collar bound: η₀ must stay strictly inside (α(Ω)+κ, β(Ω)−κ)
        if v.is_empty() {
            let g = self.geometry.clone();
            let surf =
                ReferenceSurface::<f64>::flat_channel_with_lengths(g.depth, g.len1, g.len2);
            let kappa = self.kappa_fraction * g.depth;
            if self.n_omega >= 8 && self.n_omega % 2 == 0 {
                let grid = surf.grid(self.n_omega, self.n_omega);
                let eta0 = synth_field(grid, &self.initial.eta0);
                let lo = surf.alpha_omega() + kappa;
                let hi = surf.beta_omega() - kappa;
                let (mut emin, mut emax) = (f64::INFINITY, f64::NEG_INFINITY);
                for &x in &eta0.values {
                    emin = emin.min(x);
                    emax = emax.max(x);
                }
                if emin <= lo || emax >= hi {
                    v.push(format!(
                        "initial.eta0 leaves the collar: range [{emin:.6}, {emax:.6}] must stay \
                         within (α(Ω)+κ, β(Ω)−κ) = ({lo:.6}, {hi:.6})"
                    ));
                }
                let eta1 = synth_field(grid, &self.initial.eta1);
                let mean = eta1.mean();
                if mean.abs() > 1e-10 * eta1.norm_max().max(1.0) {
                    v.push(format!(
                        "initial.eta1 has net interface flux ∫η₁ = {mean:.3e}; it must vanish"
                    ));
                }
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(IoError::Validation { violations: v })
        }
    }

    /// Number of time steps implied by `t_end` and `dt`.
    pub fn steps(&self) -> usize {
        ((self.t_end / self.dt).round() as usize).max(1)
    }
}

/// Loads and fully validates a JSON config file.
pub fn load_config(path: &Path) -> Result<SimConfig, IoError> {
    let text = fs::read_to_string(path)?;
    parse_config(&text)
}

/// Parses and fully validates config text.
pub fn parse_config(text: &str) -> Result<SimConfig, IoError> {
    let cfg: SimConfig =
        serde_json::from_str(text).map_err(|e| IoError::Parse { detail: e.to_string() })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Serializes a config to its canonical JSON form.
pub fn config_to_string(cfg: &SimConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("config serialization cannot fail")
}

/// Synthesizes a field on ω from its Fourier mode list.
pub fn synth_field(
    grid: crate::discrete::PeriodicGrid2D<f64>,
    modes: &[Mode],
) -> ScalarField2D<f64> {
    let tp = 2.0 * std::f64::consts::PI;
    let (l1, l2) = (grid.len1, grid.len2);
    ScalarField2D::from_fn(grid, |y1, y2| {
        modes
            .iter()
            .map(|m| {
                m.amp * (tp * (m.k1 as f64 * y1 / l1 + m.k2 as f64 * y2 / l2) + m.phase).cos()
            })
            .sum()
    })
}

/// Everything needed to run the configured scenario.
pub struct Scenario {
    pub model: ShellModel<f64>,
    pub fsolver: FluidSolver,
    pub eta0: ScalarField2D<f64>,
    pub eta1: ScalarField2D<f64>,
    pub u0: InitialVelocity,
}

/// Builds the shell model, fluid solver, and initial fields from a config.
pub fn build_scenario(cfg: &SimConfig) -> Result<Scenario, IoError> {
    cfg.validate()?;
    let g = &cfg.geometry;
    let grid3 = BoxGrid3::new(cfg.n_omega, cfg.n_omega, cfg.n_depth, g.len1, g.len2, g.depth);
    let surf = ReferenceSurface::<f64>::flat_channel_with_lengths(g.depth, g.len1, g.len2);
    let chart = TubularChart::new(surf, cfg.kappa_fraction * g.depth);
    let opts = FluidOptions::new(cfg.viscosity, cfg.dt, cfg.tolerances.lin_tol);
    let fsolver = FluidSolver::new(grid3, chart, opts);
    let shell_grid = shell_grid_for(grid3);
    let params = ShellParams::new(
        cfg.shell.thickness,
        cfg.shell.lambda,
        cfg.shell.mu,
        cfg.shell.epsilon,
    );
    let model = ShellModel::new(surf, shell_grid, params);
    let eta0 = synth_field(shell_grid, &cfg.initial.eta0);
    let eta1 = synth_field(shell_grid, &cfg.initial.eta1);
    let u0 = match &cfg.initial.u0 {
        U0Spec::Zero => InitialVelocity::Zero,
        U0Spec::Lifted => InitialVelocity::Lifted,
        U0Spec::Modes { modes } => InitialVelocity::Given(synth_velocity(grid3, modes)),
    };
    Ok(Scenario { model, fsolver, eta0, eta1, u0 })
}

fn synth_velocity(g: BoxGrid3, modes: &[VelocityMode]) -> StaggeredField3D {
    let tp = 2.0 * std::f64::consts::PI;
    let eval = |x: f64, y: f64, z: f64, comp: usize| -> f64 {
        modes
            .iter()
            .filter(|m| m.component == comp)
            .map(|m| {
                m.amp
                    * (tp * (m.k1 as f64 * x / g.lx + m.k2 as f64 * y / g.ly) + m.phase).cos()
                    * (std::f64::consts::PI * m.kz as f64 * (z + g.depth) / g.depth).sin()
            })
            .sum()
    };
    let mut u = StaggeredField3D::zeros(g);
    for i in 0..g.nx {
        for j in 0..g.ny {
            let (xf, xc) = (i as f64 * g.dx(), (i as f64 + 0.5) * g.dx());
            let (yf, yc) = (j as f64 * g.dy(), (j as f64 + 0.5) * g.dy());
            for k in 0..g.nz {
                let c = g.idx(i, j, k);
                u.u1[c] = eval(xf, yc, g.z_center(k), 0);
                u.u2[c] = eval(xc, yf, g.z_center(k), 1);
                if k >= 1 {
                    u.u3[g.idx_zface(i, j, k)] = eval(xc, yc, g.z_face(k), 2);
                }
            }
        }
    }
    u
}

// ---------------------------------------------------------------------------
// snapshots

const SNAP_MAGIC: &str = "FSISNAP1";

/// One stored state: interface displacement/velocity plus the full fluid
/// velocity and pressure arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotRecord {
    pub time: f64,
    pub n1: usize,
    pub n2: usize,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub eta: Vec<f64>,
    pub v: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub u3: Vec<f64>,
    pub p: Vec<f64>,
}

impl SnapshotRecord {
    pub fn from_states(time: f64, shell: &ShellState, fluid: &FluidState) -> Self {
        let g = fluid.u.grid;
        SnapshotRecord {
            time,
            n1: shell.eta.grid.n1,
            n2: shell.eta.grid.n2,
            nx: g.nx,
            ny: g.ny,
            nz: g.nz,
            eta: shell.eta.values.clone(),
            v: shell.vel.values.clone(),
            u1: fluid.u.u1.clone(),
            u2: fluid.u.u2.clone(),
            u3: fluid.u.u3.clone(),
            p: fluid.u.p.clone(),
        }
    }
}

/// Writes a snapshot: 64-byte ASCII header (magic, dims, time as hex bits),
/// then the arrays as raw little-endian f64 in a fixed order.
pub fn write_snapshot(path: &Path, rec: &SnapshotRecord) -> Result<(), IoError> {
    let header = format!(
        "{SNAP_MAGIC} {} {} {} {} {} {:016X}",
        rec.n1,
        rec.n2,
        rec.nx,
        rec.ny,
        rec.nz,
        rec.time.to_bits()
    );
    if header.len() > 63 {
        return Err(IoError::Format { detail: format!("header too long: {header}") });
    }
    let mut buf = vec![b' '; 64];
    buf[..header.len()].copy_from_slice(header.as_bytes());
    buf[63] = b'\n';
    for arr in [&rec.eta, &rec.v, &rec.u1, &rec.u2, &rec.u3, &rec.p] {
        for &x in arr.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Reads a snapshot back; the result is bit-identical to what was written.
pub fn read_snapshot(path: &Path) -> Result<SnapshotRecord, IoError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 64 {
        return Err(IoError::Format { detail: "file shorter than header".into() });
    }
    let header = std::str::from_utf8(&bytes[..63])
        .map_err(|_| IoError::Format { detail: "header is not ASCII".into() })?;
    let tok: Vec<&str> = header.split_whitespace().collect();
    if tok.len() != 7 || tok[0] != SNAP_MAGIC {
        return Err(IoError::Format {
            detail: format!("bad magic/version or field count in header {header:?}"),
        });
    }
    let dim = |s: &str| -> Result<usize, IoError> {
        s.parse().map_err(|_| IoError::Format { detail: format!("bad dimension {s:?}") })
    };
    let (n1, n2, nx, ny, nz) =
        (dim(tok[1])?, dim(tok[2])?, dim(tok[3])?, dim(tok[4])?, dim(tok[5])?);
    let bits = u64::from_str_radix(tok[6], 16)
        .map_err(|_| IoError::Format { detail: format!("bad time stamp {:?}", tok[6]) })?;
    let time = f64::from_bits(bits);
    let lens = [n1 * n2, n1 * n2, nx * ny * nz, nx * ny * nz, nx * ny * (nz + 1), nx * ny * nz];
    let total: usize = lens.iter().sum();
    if bytes.len() != 64 + 8 * total {
        return Err(IoError::Format {
            detail: format!("payload length {} != expected {}", bytes.len() - 64, 8 * total),
        });
    }
    let mut off = 64;
    let mut take = |n: usize| -> Vec<f64> {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
            off += 8;
        }
        v
    };
    let eta = take(lens[0]);
    let v = take(lens[1]);
    let u1 = take(lens[2]);
    let u2 = take(lens[3]);
    let u3 = take(lens[4]);
    let p = take(lens[5]);
    Ok(SnapshotRecord { time, n1, n2, nx, ny, nz, eta, v, u1, u2, u3, p })
}

// ---------------------------------------------------------------------------
// ledger

/// Fixed CSV column set of the energy ledger.
pub const LEDGER_COLUMNS: &str = "step,time,fluid_kinetic,shell_kinetic,membrane,bending,\
regularization,total_energy,viscous_dissipation,numerical_dissipation,gamma_min,j_min";

/// Writes the ledger as CSV. Floats are printed with 17 significant digits,
/// so every f64 round-trips and the `total_energy` column equals the sum of
/// the five component columns exactly.
pub fn write_ledger(path: &Path, ledger: &EnergyLedger, stride: usize) -> Result<(), IoError> {
    let stride = stride.max(1);
    let mut out = String::new();
    out.push_str(LEDGER_COLUMNS);
    out.push('\n');
    let last = ledger.rows.len().saturating_sub(1);
    for (i, r) in ledger.rows.iter().enumerate() {
        if i % stride != 0 && i != last {
            continue;
        }
        out.push_str(&format!(
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            r.step,
            r.time,
            r.fluid_kinetic,
            r.shell_kinetic,
            r.membrane,
            r.bending,
            r.regularization,
            r.total_energy(),
            r.viscous_dissipation,
            r.numerical_dissipation,
            r.gamma_min,
            r.j_min,
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// commands

/// Terminal state of a run, mapped to distinct process exit codes.
#[derive(Debug)]
pub enum RunOutcome {
    /// reached t_end
    Completed { final_time: f64 },
    /// the interface left the tubular collar (self-intersection guard)
    CollarBreach { detail: String, reached_time: f64 },
    /// γ̃ degenerated below the coercivity floor
    CoercivityLoss { gamma_min: f64, reached_time: f64 },
    /// Newton/GMRES failure or nonpositive ALE Jacobian
    SolverFailure { detail: String, reached_time: f64 },
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunOutcome::Completed { .. } => 0,
            RunOutcome::SolverFailure { .. } => 3,
            RunOutcome::CollarBreach { .. } => 4,
            RunOutcome::CoercivityLoss { .. } => 5,
        }
    }
}

/// Runs the configured scenario and writes config echo, ledger, and
/// snapshots into `out_dir`. Solver-side terminations are reported through
/// [`RunOutcome`]; only I/O and configuration problems are `Err`.
pub fn cmd_run(cfg: &SimConfig, out_dir: &Path) -> Result<RunOutcome, IoError> {
    let sc = build_scenario(cfg)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("config.json"), config_to_string(cfg))?;

    let (shell0, fluid0, _report) =
        project_initial_data(&sc.fsolver, &sc.eta0, &sc.eta1, sc.u0).map_err(|e| match e {
            SolverError::IncompatibleData { detail } => {
                IoError::Validation { violations: vec![detail] }
            }
            other => IoError::Argument { detail: other.to_string() },
        })?;

    let mut params = RunParams::new(cfg.steps(), cfg.dt);
    params.newton_tol = cfg.tolerances.newton_tol;
    params.gamma_min = cfg.tolerances.gamma_min;
    params.snapshot_stride = cfg.output.snapshot_stride;
    let result = time_loop(&sc.model, &sc.fsolver, shell0, fluid0, &params);

    write_ledger(&out_dir.join("ledger.csv"), &result.ledger, cfg.output.ledger_stride)?;
    for (step, fl) in &result.fluid_snapshots {
        let shell = &result.shells[*step];
        let rec = SnapshotRecord::from_states(*step as f64 * cfg.dt, shell, fl);
        write_snapshot(&out_dir.join(format!("snapshot_{step:06}.bin")), &rec)?;
    }

    let reached_time = result.completed_steps as f64 * cfg.dt;
    Ok(match result.failure {
        None => RunOutcome::Completed { final_time: reached_time },
        Some(SolverError::Geometry(e)) => {
            RunOutcome::CollarBreach { detail: e.to_string(), reached_time }
        }
        // a nonpositive ALE Jacobian means the deformed chart stopped being
        // injective: report it as the collar-breach guard, not a solver bug
        Some(e @ SolverError::JacobianNonpositive { .. }) => {
            RunOutcome::CollarBreach { detail: e.to_string(), reached_time }
        }
        Some(SolverError::CoercivityLost { gamma_min }) => {
            RunOutcome::CoercivityLoss { gamma_min, reached_time }
        }
        Some(e) => RunOutcome::SolverFailure { detail: e.to_string(), reached_time },
    })
}

/// Fixed CSV column set of the diagnostics table.
pub const DIAGNOSTICS_COLUMNS: &str =
    "time,w14,weighted_h2,shift_quotient_sup,dteta_hs,korn_gap";

/// Recomputes the regularity/Korn diagnostics for every snapshot stored in
/// `dir` (written by [`cmd_run`]) and writes `diagnostics.csv` there.
/// `s` is the fractional shift order and must lie in (0, 1/2).
pub fn cmd_diagnose(dir: &Path, s: f64) -> Result<PathBuf, IoError> {
    if !(s > 0.0 && s < 0.5) {
        return Err(IoError::Argument {
            detail: format!("shift order s must lie in (0, 1/2) (got {s})"),
        });
    }
    let cfg = load_config(&dir.join("config.json"))?;
    let mut snaps: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("snapshot_") && n.ends_with(".bin"))
                .unwrap_or(false)
        })
        .collect();
    snaps.sort();
    if snaps.is_empty() {
        return Err(IoError::MissingSnapshots { dir: dir.display().to_string() });
    }

    let sc = build_scenario(&cfg)?;
    let g = sc.fsolver.dof.grid;
    let sigma = &sc.fsolver.chart.sigma;
    let mut out = String::new();
    out.push_str(DIAGNOSTICS_COLUMNS);
    out.push('\n');
    for path in &snaps {
        let rec = read_snapshot(path)?;
        if rec.n1 != cfg.n_omega || rec.nx != cfg.n_omega || rec.nz != cfg.n_depth {
            return Err(IoError::Format {
                detail: format!("snapshot dims of {} do not match config", path.display()),
            });
        }
        let grid2 = sc.model.grid;
        let shell = ShellState {
            eta: ScalarField2D::from_values(grid2, rec.eta.clone()),
            vel: ScalarField2D::from_values(grid2, rec.v.clone()),
        };
        // single-state diagnostics: the integrals degenerate to the
        // instantaneous values with unit weight
        let reg = regularity_diagnostics(&sc.model, std::slice::from_ref(&shell), 1.0, s);
        let mut u = StaggeredField3D::zeros(g);
        u.u1 = rec.u1.clone();
        u.u2 = rec.u2.clone();
        u.u3 = rec.u3.clone();
        u.p = rec.p.clone();
        let mut jac = vec![0.0; g.ncells()];
        let mut j_min = f64::INFINITY;
        for i in 0..g.nx {
            for j in 0..g.ny {
                let e = shell.eta.at(i, j);
                for k in 0..g.nz {
                    jac[g.idx(i, j, k)] = 1.0 + sigma.d1(g.z_center(k)) * e;
                    j_min = j_min.min(jac[g.idx(i, j, k)]);
                }
            }
        }
        let fluid = FluidState { u, jac, w3: vec![0.0; g.ncells()], j_min };
        // snapshots of a coupled run need not satisfy the Korn
        // preconditions (moving walls); report NaN in that case
        let korn = korn_check(&sc.fsolver, &shell, &fluid)
            .map(|r| r.rel_gap)
            .unwrap_or(f64::NAN);
        out.push_str(&format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            rec.time,
            reg.sup_w14,
            reg.sup_weighted_h2,
            reg.shift_quotient_integral,
            reg.dteta_hs_integral,
            korn,
        ));
    }
    let out_path = dir.join("diagnostics.csv");
    fs::write(&out_path, out)?;
    Ok(out_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn config_roundtrip_is_identity() {
        let mut cfg = SimConfig::default();
        cfg.initial.eta0 = vec![Mode { k1: 1, k2: 0, amp: 1e-3, phase: 0.25 }];
        cfg.initial.u0 = U0Spec::Lifted;
        let text = config_to_string(&cfg);
        let cfg2 = parse_config(&text).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(text, config_to_string(&cfg2));
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config("{}").unwrap();
        assert_eq!(cfg, SimConfig::default());
        assert_eq!(cfg.n_omega, 32);
        assert_eq!(cfg.dt, 1e-3);
    }

    #[test]
    fn validation_lists_every_violation() {
        let cfg: SimConfig = serde_json::from_str(
            r#"{"dt": 0.0, "t_end": -1.0, "n_omega": 7,
                "tolerances": {"newton_tol": 0.0}}"#,
        )
        .unwrap();
        let err = cfg.validate().unwrap_err();
        let IoError::Validation { violations } = err else { panic!("wrong error kind") };
        assert!(violations.iter().any(|v| v.contains("dt")));
        assert!(violations.iter().any(|v| v.contains("t_end")));
        assert!(violations.iter().any(|v| v.contains("n_omega")));
        assert!(violations.iter().any(|v| v.contains("newton_tol")));
        assert_eq!(violations.len(), 4);
    }

    #[test]
    fn collar_violation_cites_bound() {
        let mut cfg = SimConfig::default();
        // depth 1, κ = 0.25 → η must stay above −0.75
        cfg.initial.eta0 = vec![Mode { k1: 1, k2: 0, amp: 0.9, phase: 0.0 }];
        let err = cfg.validate().unwrap_err();
        let IoError::Validation { violations } = err else { panic!("wrong error kind") };
        assert_eq!(violations.len(), 1);
        assert!(violations[0].contains("collar"));
        assert!(violations[0].contains("-0.75"));
    }

    #[test]
    fn snapshot_reload_is_bit_identical() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("snap.bin");
        let mut rec = SnapshotRecord {
            time: 0.1 + 0.2, // deliberately non-representable sum
            n1: 8,
            n2: 8,
            nx: 8,
            ny: 8,
            nz: 4,
            eta: (0..64).map(|i| (i as f64).sin()).collect(),
            v: (0..64).map(|i| (i as f64).cos()).collect(),
            u1: (0..256).map(|i| 1.0 / (1.0 + i as f64)).collect(),
            u2: (0..256).map(|i| (i as f64).sqrt()).collect(),
            u3: (0..320).map(|i| (i as f64) * 1e-17).collect(),
            p: (0..256).map(|i| -(i as f64)).collect(),
        };
        rec.u3[0] = f64::MIN_POSITIVE / 4.0; // subnormal survives
        write_snapshot(&path, &rec).unwrap();
        let rec2 = read_snapshot(&path).unwrap();
        assert_eq!(rec, rec2);
        // header is exactly 64 ASCII bytes
        let bytes = fs::read(&path).unwrap();
        assert!(bytes[..64].is_ascii());
        assert_eq!(bytes[63], b'\n');
    }

    #[test]
    fn ledger_totals_equal_component_sums() {
        use crate::solver::LedgerRow;
        let dir = tempdir().unwrap();
        let path = dir.path().join("ledger.csv");
        let mut ledger = EnergyLedger::default();
        for i in 0..5 {
            let x = 0.1 * (i as f64 + 1.0);
            ledger.rows.push(LedgerRow {
                step: i,
                time: i as f64 * 1e-3,
                fluid_kinetic: x.sin().abs(),
                shell_kinetic: x.cos().abs(),
                membrane: x * x,
                bending: x / 3.0,
                regularization: x * 1e-7,
                viscous_dissipation: x * 1e-2,
                numerical_dissipation: x * 1e-5,
                gamma_min: 1.0 - x * 1e-3,
                j_min: 1.0 - x * 1e-2,
            });
        }
        write_ledger(&path, &ledger, 1).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), LEDGER_COLUMNS);
        for line in lines {
            let cols: Vec<f64> =
                line.split(',').skip(1).map(|c| c.parse().unwrap()).collect();
            let total: f64 = cols[1] + cols[2] + cols[3] + cols[4] + cols[5];
            assert!((total - cols[6]).abs() <= 1e-12 * total.abs().max(1.0));
        }
    }

    #[test]
    fn zero_data_run_writes_zero_ledger() {
        let dir = tempdir().unwrap();
        let mut cfg = SimConfig::default();
        cfg.n_omega = 8;
        cfg.n_depth = 8;
        cfg.t_end = 3.0 * cfg.dt;
        let outcome = cmd_run(&cfg, dir.path()).unwrap();
        assert!(matches!(outcome, RunOutcome::Completed { .. }));
        assert_eq!(outcome.exit_code(), 0);
        let text = fs::read_to_string(dir.path().join("ledger.csv")).unwrap();
        for line in text.lines().skip(1) {
            for col in line.split(',').skip(2).take(8) {
                assert_eq!(col.parse::<f64>().unwrap(), 0.0);
            }
        }
        // diagnostics run end-to-end on the written snapshots
        let out = cmd_diagnose(dir.path(), 0.25).unwrap();
        let dtext = fs::read_to_string(out).unwrap();
        assert!(dtext.lines().count() >= 2);
        let err = cmd_diagnose(dir.path(), 0.75).unwrap_err();
        assert!(matches!(err, IoError::Argument { .. }));
    }

    #[test]
    fn diagnose_without_snapshots_is_missing() {
        let dir = tempdir().unwrap();
        fs::write(
            dir.path().join("config.json"),
            config_to_string(&SimConfig::default()),
        )
        .unwrap();
        let err = cmd_diagnose(dir.path(), 0.25).unwrap_err();
        assert!(matches!(err, IoError::MissingSnapshots { .. }));
    }
}
