//! Lie/Marchuk–Yanenko time stepping for the coupled shell/fluid system.
//!
//! Each step splits into a structure sub-step (implicit midpoint-free
//! Newton solve of the shell momentum equation with Simpson-exact discrete
//! energy derivatives, so the elastic energy balance telescopes exactly)
//! and a fluid sub-step (one monolithic ALE saddle-point solve that relaxes
//! the shell velocity toward the fluid trace). Both sub-steps dissipate the
//! discrete total energy by construction; the ledger records every term.

pub mod diagnostics;
pub mod fluid;
pub mod gmres;
pub mod sparse;

use thiserror::Error;

use crate::discrete::{BoxGrid3, PeriodicGrid2D, ScalarField2D, Spectral2D, StaggeredField3D};
use crate::extension::{solenoidal_extend, BogovskiiSolver, CollarAnnulus, ExtensionError};
use crate::geometry::GeometryError;
use crate::shell::{simpson_weights, ShellModel};
use fluid::{FluidSolver, FluidStepStats};
use gmres::gmres;

/// Failure modes of the time stepping and of the companion diagnostics.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("Newton iteration stalled at residual {residual:.3e} after {iterations} iterations")]
    NewtonDiverged { residual: f64, iterations: usize },
    #[error("shell coercivity lost: min gamma {gamma_min:.3e}")]
    CoercivityLost { gamma_min: f64 },
    #[error("ALE Jacobian nonpositive: min {j_min:.3e}")]
    JacobianNonpositive { j_min: f64 },
    #[error("linear solver failure: {context}")]
    SolverFailure { context: String },
    #[error("incompatible initial data: {detail}")]
    IncompatibleData { detail: String },
    #[error("diagnostic precondition violated: {detail}")]
    PreconditionViolated { detail: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Extension(#[from] ExtensionError),
}

/// Shell displacement and velocity on ω.
#[derive(Clone, Debug)]
pub struct ShellState {
    pub eta: ScalarField2D<f64>,
    pub vel: ScalarField2D<f64>,
}

impl ShellState {
    pub fn zeros(grid: PeriodicGrid2D<f64>) -> Self {
        ShellState { eta: ScalarField2D::zeros(grid), vel: ScalarField2D::zeros(grid) }
    }
}

/// Fluid state on the reference box: staggered velocity/pressure, the cell
/// Jacobians of the current ALE map, and the last domain velocity.
#[derive(Clone, Debug)]
pub struct FluidState {
    pub u: StaggeredField3D,
    pub jac: Vec<f64>,
    pub w3: Vec<f64>,
    pub j_min: f64,
}

impl FluidState {
    pub fn quiescent(grid: BoxGrid3) -> Self {
        FluidState {
            u: StaggeredField3D::zeros(grid),
            jac: vec![1.0; grid.ncells()],
            w3: vec![0.0; grid.ncells()],
            j_min: 1.0,
        }
    }
}

/// One row of the energy ledger (state energies after the step, dissipation
/// incurred during the step).
#[derive(Clone, Copy, Debug)]
pub struct LedgerRow {
    pub step: usize,
    pub time: f64,
    pub fluid_kinetic: f64,
    pub shell_kinetic: f64,
    pub membrane: f64,
    pub bending: f64,
    pub regularization: f64,
    pub viscous_dissipation: f64,
    pub numerical_dissipation: f64,
    pub gamma_min: f64,
    pub j_min: f64,
}

impl LedgerRow {
    /// Total stored energy (kinetic + elastic + regularization).
    pub fn total_energy(&self) -> f64 {
        self.fluid_kinetic + self.shell_kinetic + self.membrane + self.bending + self.regularization
    }
}

#[derive(Clone, Debug, Default)]
pub struct EnergyLedger {
    pub rows: Vec<LedgerRow>,
}

/// Parameters of the structure sub-step.
#[derive(Clone, Copy, Debug)]
pub struct StructureParams {
    pub dt: f64,
    pub newton_tol: f64,
    pub gamma_min: f64,
    pub max_newton: usize,
    /// quadrature weights of the discrete energy derivative; non-Simpson
    /// values are a fault-injection hook for the validation suite
    pub weights: (f64, f64, f64),
}

impl StructureParams {
    pub fn new(dt: f64, newton_tol: f64) -> Self {
        StructureParams {
            dt,
            newton_tol,
            gamma_min: 1e-3,
            max_newton: 50,
            weights: simpson_weights(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StructureStats {
    pub newton_iterations: usize,
    pub residual: f64,
    pub gamma_min: f64,
}

/// Structure sub-step: solves
/// (η − η^n − Δt v^n)/Δt² + r_step(η, η^n) = 0
/// by Newton–Krylov and returns the state (η^{n+1/2}, v^{n+1/2}) with
/// v^{n+1/2} = (η^{n+1/2} − η^n)/Δt. Pairing the equation with the
/// displacement increment telescopes the elastic energy exactly, so the
/// sub-step dissipates kinetic + elastic energy by algebra.
pub fn structure_step(
    model: &ShellModel<f64>,
    state: &ShellState,
    p: &StructureParams,
) -> Result<(ShellState, StructureStats), SolverError> {
    let grid = model.grid;
    let n = grid.len();
    let dt = p.dt;
    let sp = Spectral2D::new(grid);

    let residual = |eta: &ScalarField2D<f64>| -> Vec<f64> {
        let r = model.residual_step_with_weights(eta, &state.eta, p.weights);
        let mut out = vec![0.0; n];
        for i in 0..n {
            out[i] = (eta.values[i] - state.eta.values[i] - dt * state.vel.values[i]) / (dt * dt)
                + r.values[i];
        }
        out
    };

    // spectral preconditioner: inverse of the η = 0 linearization symbol
    let h = model.params.thickness;
    let cb = h * h * h / 24.0 * (model.params.c1() + 4.0 * model.params.mu);
    let eps = model.params.epsilon;
    let apply_m = |r: &[f64]| -> Vec<f64> {
        let f = ScalarField2D::from_values(grid, r.to_vec());
        sp.multiplier(&f, |w1, w2, _| {
            let q = w1 * w1 + w2 * w2;
            num_complex::Complex::new(1.0 / (1.0 / (dt * dt) + cb * q * q + eps * q * q * q), 0.0)
        })
        .values
    };

    let mut eta = state.eta.clone();
    for i in 0..n {
        eta.values[i] += dt * state.vel.values[i];
    }
    let mut fval = residual(&eta);
    let mut rnorm = l2(&fval);
    let r0 = rnorm.max(1e-300);
    let scale = 1.0 + eta.norm_l2();
    let mut iters = 0;
    while rnorm > p.newton_tol * r0.max(1.0) && iters < p.max_newton {
        iters += 1;
        // finite-difference directional Jacobian around the current iterate
        let eta_c = eta.clone();
        let fval_c = fval.clone();
        let apply_j = |d: &[f64]| -> Vec<f64> {
            let dn = l2(d);
            if dn == 0.0 {
                return vec![0.0; n];
            }
            let hstep = 1e-7 * scale / dn;
            let mut pert = eta_c.clone();
            for i in 0..n {
                pert.values[i] += hstep * d[i];
            }
            let fp = residual(&pert);
            fp.iter().zip(&fval_c).map(|(a, b)| (a - b) / hstep).collect()
        };
        let rhs: Vec<f64> = fval.iter().map(|v| -v).collect();
        let mut delta = vec![0.0; n];
        let stats = gmres(&apply_j, &apply_m, &rhs, &mut delta, 1e-4, 30, 150);
        if !stats.converged && stats.residual > 0.5 {
            return Err(SolverError::SolverFailure {
                context: format!(
                    "structure GMRES stalled at relative residual {:.3e}",
                    stats.residual
                ),
            });
        }
        // backtracking line search on ‖F‖
        let mut t = 1.0;
        let mut accepted = false;
        while t >= 1e-4 {
            let mut trial = eta.clone();
            for i in 0..n {
                trial.values[i] += t * delta[i];
            }
            let ft = residual(&trial);
            let fn2 = l2(&ft);
            if fn2 <= (1.0 - 1e-4 * t) * rnorm {
                eta = trial;
                fval = ft;
                rnorm = fn2;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(SolverError::NewtonDiverged { residual: rnorm, iterations: iters });
        }
    }
    if rnorm > p.newton_tol * r0.max(1.0) {
        return Err(SolverError::NewtonDiverged { residual: rnorm, iterations: iters });
    }

    let jet = model.displacement_jet(&eta);
    let gt = model.gamma_tilde(&jet);
    let gmin = gt.values.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    if gmin <= p.gamma_min {
        return Err(SolverError::CoercivityLost { gamma_min: gmin });
    }
    let mut vel = eta.clone();
    for i in 0..n {
        vel.values[i] = (eta.values[i] - state.eta.values[i]) / dt;
    }
    Ok((
        ShellState { eta, vel },
        StructureStats { newton_iterations: iters, residual: rnorm, gamma_min: gmin },
    ))
}

/// Initial velocity specification.
pub enum InitialVelocity {
    Zero,
    /// divergence-free lift of the shell velocity trace η₁ into the box
    Lifted,
    Given(StaggeredField3D),
}

#[derive(Clone, Copy, Debug)]
pub struct ProjectionReport {
    /// sup-norm of the transformed divergence after projection
    pub div_residual: f64,
    /// L² size of the Leray correction
    pub correction_norm: f64,
}

/// Builds a compatible initial state: checks the flux compatibility
/// ∫ω η₁ = 0, lifts the boundary velocity, and projects onto the discrete
/// divergence constraint at η₀ while keeping the interface trace fixed.
pub fn project_initial_data(
    fsolver: &FluidSolver,
    eta0: &ScalarField2D<f64>,
    eta1: &ScalarField2D<f64>,
    u0: InitialVelocity,
) -> Result<(ShellState, FluidState, ProjectionReport), SolverError> {
    let g = fsolver.dof.grid;
    let grid2 = fsolver.shell_grid;
    assert_eq!(eta0.grid, grid2);
    assert_eq!(eta1.grid, grid2);
    fsolver.chart.check_admissible(eta0)?;

    let scale = eta1.norm_max().max(1.0);
    let mean = eta1.mean();
    if mean.abs() > 1e-10 * scale {
        return Err(SolverError::IncompatibleData {
            detail: format!("net interface flux ∫η₁ = {mean:.3e} must vanish"),
        });
    }

    let u_raw = match u0 {
        InitialVelocity::Zero => StaggeredField3D::zeros(g),
        InitialVelocity::Given(u) => {
            u.check_shapes();
            u
        }
        InitialVelocity::Lifted => {
            let annulus =
                CollarAnnulus::new(fsolver.chart, grid2, CollarAnnulus::default_ns(g.nx.max(g.ny)));
            let bog = BogovskiiSolver::new(annulus);
            let ext = solenoidal_extend(&bog, eta0, eta1)?;
            let mut u = StaggeredField3D::zeros(g);
            for i in 0..g.nx {
                for j in 0..g.ny {
                    let x1 = i as f64 * g.dx();
                    let y1 = (i as f64 + 0.5) * g.dx();
                    let x2 = j as f64 * g.dy();
                    let y2 = (j as f64 + 0.5) * g.dy();
                    for k in 0..g.nz {
                        u.u1[g.idx(i, j, k)] = ext.eval([x1, y2, g.z_center(k)])[0];
                        u.u2[g.idx(i, j, k)] = ext.eval([y1, x2, g.z_center(k)])[1];
                        if k >= 1 {
                            u.u3[g.idx_zface(i, j, k)] = ext.eval([y1, y2, g.z_face(k)])[2];
                        }
                    }
                }
            }
            u
        }
    };

    let shell = ShellState { eta: eta0.clone(), vel: eta1.clone() };
    let dof = fsolver.dof;
    let co = fsolver.coefficients(&shell, &shell, &u_raw, &eta1.values)?;
    let mut x = dof.pack(&u_raw, &eta1.values);

    // Leray projection in the transformed metric: fix the trace DOFs,
    // correct the fluid faces by a discrete pressure gradient.
    let nvel = dof.nvel();
    let nfluid = dof.ov();
    let mut div0 = vec![0.0; g.ncells()];
    co.b.mul_vec(&x[..nvel], &mut div0);
    let dmean = div0.iter().sum::<f64>() / div0.len() as f64;
    for v in &mut div0 {
        *v -= dmean;
    }
    // A p = B_f M⁻¹ B_fᵀ p with M the J-weighted face mass (v columns fixed)
    let apply_a = |p: &[f64]| -> Vec<f64> {
        let mut gvec = vec![0.0; nvel];
        co.bt.mul_vec(p, &mut gvec);
        for s in nfluid..nvel {
            gvec[s] = 0.0;
        }
        for (s, gv) in gvec.iter_mut().enumerate().take(nfluid) {
            *gv /= co.mass[s] * fsolver.opts.dt; // M = J vol at faces
        }
        let mut out = vec![0.0; g.ncells()];
        co.b.mul_vec(&gvec, &mut out);
        let m = out.iter().sum::<f64>() / out.len() as f64;
        for v in &mut out {
            *v -= m;
        }
        out
    };
    let p = cg(&apply_a, &div0, 1e-12, 4 * g.ncells());
    let mut corr = vec![0.0; nvel];
    co.bt.mul_vec(&p, &mut corr);
    let mut corr_norm = 0.0;
    for s in 0..nfluid {
        let c = corr[s] / (co.mass[s] * fsolver.opts.dt);
        x[s] -= c;
        corr_norm += c * c;
    }

    let mut div1 = vec![0.0; g.ncells()];
    co.b.mul_vec(&x[..nvel], &mut div1);
    let div_residual =
        div1.iter().fold(0.0f64, |a, v| a.max(v.abs())) / g.cell_vol();

    let (u, _) = dof.unpack(&x);
    let sigma = &fsolver.chart.sigma;
    let mut jac = vec![0.0; g.ncells()];
    let mut j_min = f64::INFINITY;
    for i in 0..g.nx {
        for j in 0..g.ny {
            for k in 0..g.nz {
                let c = g.idx(i, j, k);
                jac[c] = 1.0 + sigma.d1(g.z_center(k)) * eta0.at(i, j);
                j_min = j_min.min(jac[c]);
            }
        }
    }
    if j_min <= 0.0 {
        return Err(SolverError::JacobianNonpositive { j_min });
    }
    let fluid = FluidState { u, jac, w3: vec![0.0; g.ncells()], j_min };
    Ok((shell, fluid, ProjectionReport { div_residual, correction_norm: corr_norm.sqrt() }))
}

/// Conjugate gradients for the SPD (modulo constants) projection operator.
fn cg(apply: &dyn Fn(&[f64]) -> Vec<f64>, b: &[f64], tol: f64, max_iters: usize) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let b0 = rr.sqrt().max(1e-300);
    for _ in 0..max_iters {
        if rr.sqrt() <= tol * b0 {
            break;
        }
        let ap = apply(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, c)| a * c).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    x
}

/// Run controls of the coupled loop.
#[derive(Clone, Copy, Debug)]
pub struct RunParams {
    pub steps: usize,
    pub dt: f64,
    pub newton_tol: f64,
    pub gamma_min: f64,
    /// store a fluid snapshot every this many steps (0 = final only)
    pub snapshot_stride: usize,
    pub weights: (f64, f64, f64),
}

impl RunParams {
    pub fn new(steps: usize, dt: f64) -> Self {
        RunParams {
            steps,
            dt,
            newton_tol: 1e-10,
            gamma_min: 1e-3,
            snapshot_stride: 0,
            weights: simpson_weights(),
        }
    }
}

/// Result of a (possibly truncated) run. Shell states are kept at every
/// step for the regularity diagnostics; fluid snapshots follow the stride.
pub struct RunResult {
    pub ledger: EnergyLedger,
    pub shells: Vec<ShellState>,
    pub fluid_snapshots: Vec<(usize, FluidState)>,
    pub completed_steps: usize,
    pub failure: Option<SolverError>,
}

/// Coupled time loop: structure sub-step, then fluid sub-step with the
/// shell velocity relaxation; η^{n+1} = η^{n+1/2}. With a frozen boundary
/// the structure is skipped and the interface is pinned.
pub fn time_loop(
    model: &ShellModel<f64>,
    fsolver: &FluidSolver,
    shell0: ShellState,
    fluid0: FluidState,
    params: &RunParams,
) -> RunResult {
    assert!((params.dt - fsolver.opts.dt).abs() < 1e-15, "time step mismatch");
    let mut ledger = EnergyLedger::default();
    let mut shells = vec![shell0.clone()];
    let mut snaps: Vec<(usize, FluidState)> = Vec::new();
    let mut shell = shell0;
    let mut fluid = fluid0;

    let push_row = |ledger: &mut EnergyLedger,
                    step: usize,
                    shell: &ShellState,
                    fk: f64,
                    jm: f64,
                    visc: f64,
                    num: f64| {
        let ke = model.koiter_energy(&shell.eta);
        let jet = model.displacement_jet(&shell.eta);
        let gmin =
            model.gamma_tilde(&jet).values.iter().fold(f64::INFINITY, |a, &v| a.min(v));
        ledger.rows.push(LedgerRow {
            step,
            time: step as f64 * params.dt,
            fluid_kinetic: fk,
            shell_kinetic: 0.5 * shell.vel.inner(&shell.vel),
            membrane: ke.membrane,
            bending: ke.bending,
            regularization: ke.regularization,
            viscous_dissipation: visc,
            numerical_dissipation: num,
            gamma_min: gmin,
            j_min: jm,
        });
    };

    let xu0 = fsolver.dof.pack(&fluid.u, &shell.vel.values);
    let fk0 = fsolver.weighted_kinetic(&fluid.jac, &xu0);
    push_row(&mut ledger, 0, &shell, fk0, fluid.j_min, 0.0, 0.0);

    let sp = StructureParams {
        dt: params.dt,
        newton_tol: params.newton_tol,
        gamma_min: params.gamma_min,
        max_newton: 50,
        weights: params.weights,
    };
    let mut failure = None;
    let mut completed = 0;
    for step in 1..=params.steps {
        let step_result = (|| -> Result<(ShellState, FluidState, FluidStepStats, f64), SolverError> {
            let (mid, num_struct) = if fsolver.opts.frozen_boundary {
                (shell.clone(), 0.0)
            } else {
                let (mid, _stats) = structure_step(model, &shell, &sp)?;
                fsolver.chart.check_admissible(&mid.eta)?;
                let dv = mid.vel.axpy(-1.0, &shell.vel);
                let num = model.numerical_dissipation(&shell.eta, &mid.eta)
                    + 0.5 * dv.inner(&dv);
                (mid, num)
            };
            let (fl, v_new, stats) = fsolver.step(&fluid, &shell, &mid)?;
            let vel = if fsolver.opts.frozen_boundary { mid.vel.clone() } else { v_new };
            Ok((ShellState { eta: mid.eta, vel }, fl, stats, num_struct))
        })();
        match step_result {
            Ok((new_shell, new_fluid, stats, num_struct)) => {
                shell = new_shell;
                fluid = new_fluid;
                completed = step;
                push_row(
                    &mut ledger,
                    step,
                    &shell,
                    stats.kinetic_new,
                    fluid.j_min,
                    stats.viscous_dissipation,
                    num_struct + stats.numerical_dissipation,
                );
                shells.push(shell.clone());
                if params.snapshot_stride > 0 && step % params.snapshot_stride == 0 {
                    snaps.push((step, fluid.clone()));
                }
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    if snaps.last().map(|(s, _)| *s) != Some(completed) {
        snaps.push((completed, fluid.clone()));
    }
    RunResult { ledger, shells, fluid_snapshots: snaps, completed_steps: completed, failure }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
