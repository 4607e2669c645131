//! Post-hoc verification diagnostics: the discrete Korn identity on the
//! moving domain and the shell regularity monitors (uniform-in-ε bounds on
//! the W^{1,4} and weighted-H² norms and the fractional shift quotients of
//! the second derivatives).

use super::fluid::FluidSolver;
use super::{FluidState, ShellState, SolverError};
use crate::discrete::quotient::Direction;
use crate::discrete::{diff_quotient, BoxGrid3, ScalarField2D, Spectral2D, StaggeredField3D};
use crate::shell::ShellModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Result of the discrete Korn identity check
/// ∫J|∇^η u|² = 2∫J|D^η u|² − ∫J ∇u:∇uᵀ.
#[derive(Clone, Copy, Debug)]
pub struct KornReport {
    /// ∫ J |∇^η u|²
    pub grad_sq: f64,
    /// 2 ∫ J |D^η u|²
    pub sym_sq: f64,
    /// |sym_sq − grad_sq| / grad_sq
    pub rel_gap: f64,
}

/// Checks the Korn equality for a divergence-free velocity with homogeneous
/// tangential trace. Both preconditions are verified first; fields that
/// violate them (e.g. nonzero slip at the walls) are rejected rather than
/// silently producing a large gap.
pub fn korn_check(
    fsolver: &FluidSolver,
    shell: &ShellState,
    fluid: &FluidState,
) -> Result<KornReport, SolverError> {
    let g = fsolver.dof.grid;
    let dof = fsolver.dof;
    let co = fsolver.coefficients(shell, shell, &fluid.u, &shell.vel.values)?;
    let xu = dof.pack(&fluid.u, &shell.vel.values);
    let xu = &xu[..dof.nvel()];
    let umax = xu.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);

    // precondition 1: discrete divergence-free in the transformed metric
    let mut div = vec![0.0; g.ncells()];
    co.b.mul_vec(xu, &mut div);
    let dsup = div.iter().fold(0.0f64, |a, v| a.max(v.abs())) / g.cell_vol();
    let dz = g.dz();
    if dsup > 1e-6 * umax / dz {
        return Err(SolverError::PreconditionViolated {
            detail: format!("velocity is not discretely divergence-free (sup {dsup:.3e})"),
        });
    }
    // precondition 2: no-slip tangential trace at both walls (quadratic
    // extrapolation of the first three interior levels to the wall, exact
    // for fields vanishing to second order)
    let mut slip = 0.0f64;
    let ex = [15.0 / 8.0, -10.0 / 8.0, 3.0 / 8.0];
    for i in 0..g.nx as isize {
        for j in 0..g.ny as isize {
            for ks in [[0usize, 1, 2], [g.nz - 1, g.nz - 2, g.nz - 3]] {
                let mut w1 = 0.0;
                let mut w2 = 0.0;
                for (c, &k) in ex.iter().zip(&ks) {
                    w1 += c * xu[dof.iu1(i, j, k)];
                    w2 += c * xu[dof.iu2(i, j, k)];
                }
                slip = slip.max(w1.abs()).max(w2.abs());
            }
        }
    }
    if slip > 0.1 * umax {
        return Err(SolverError::PreconditionViolated {
            detail: format!("tangential wall trace does not vanish (extrapolated {slip:.3e})"),
        });
    }

    let (grad_sq, sym_sq) = fsolver.korn_pair(&co, xu);
    let rel_gap = (sym_sq - grad_sq).abs() / grad_sq.max(1e-300);
    Ok(KornReport { grad_sq, sym_sq, rel_gap })
}

/// Shell regularity monitors accumulated over a trajectory.
#[derive(Clone, Copy, Debug)]
pub struct RegularityReport {
    /// sup over time of ‖∇η‖_{L⁴(ω)}
    pub sup_w14: f64,
    /// sup over time of ∫ γ̃² |∇²η|² dy
    pub sup_weighted_h2: f64,
    /// ∫ sup over shifts of ‖D^s_h ∇²η‖²_{L²} dt
    pub shift_quotient_integral: f64,
    /// ∫ ‖∂_t η‖²_{H^s} dt
    pub dteta_hs_integral: f64,
    /// min over time/shift of ⟨r_bend, D^s_{−h}D^s_h η⟩ / (c₀‖D^s_h∇²η‖²),
    /// the discrete coercivity ratio of the bending form under shifts
    pub pairing_min_ratio: f64,
}

/// Computes the regularity monitors for a stored shell trajectory
/// (one state per step, spacing `dt`), with shift-quotient order `s`.
pub fn regularity_diagnostics(
    model: &ShellModel<f64>,
    shells: &[ShellState],
    dt: f64,
    s: f64,
) -> RegularityReport {
    assert!(!shells.is_empty());
    assert!(s > 0.0 && s < 1.0);
    let grid = model.grid;
    let sp = Spectral2D::new(grid);
    let w = grid.node_weight();
    let comp_w = [1.0, 2.0, 1.0];
    let c0 = model.params.thickness.powi(3) / 24.0 * 4.0 * model.params.mu;

    let mut sup_w14 = 0.0f64;
    let mut sup_wh2 = 0.0f64;
    let mut quot_int = 0.0;
    let mut dteta_int = 0.0;
    let mut min_ratio = f64::INFINITY;
    for st in shells {
        let eta = &st.eta;
        let g1 = sp.derivative(eta, (1, 0));
        let g2 = sp.derivative(eta, (0, 1));
        let mut l4 = 0.0;
        for i in 0..grid.len() {
            let q = g1.values[i] * g1.values[i] + g2.values[i] * g2.values[i];
            l4 += q * q;
        }
        sup_w14 = sup_w14.max((l4 * w).powf(0.25));

        let d2 = [
            sp.derivative(eta, (2, 0)),
            sp.derivative(eta, (1, 1)),
            sp.derivative(eta, (0, 2)),
        ];
        let jet = model.displacement_jet(eta);
        let gt = model.gamma_tilde(&jet);
        let mut wh2 = 0.0;
        for i in 0..grid.len() {
            let mut h2 = 0.0;
            for c in 0..3 {
                h2 += comp_w[c] * d2[c].values[i] * d2[c].values[i];
            }
            wh2 += gt.values[i] * gt.values[i] * h2;
        }
        sup_wh2 = sup_wh2.max(wh2 * w);

        // sup over shifts of the weighted shift quotient of ∇²η
        let mut sup_q = 0.0f64;
        for dir in [Direction::E1, Direction::E2] {
            let nmax = match dir {
                Direction::E1 => grid.n1 / 2,
                Direction::E2 => grid.n2 / 2,
            };
            let mut m = 1;
            while m <= nmax {
                let mut q = 0.0;
                for c in 0..3 {
                    let dq = diff_quotient(&d2[c], s, m as isize, dir);
                    q += comp_w[c] * dq.inner(&dq);
                }
                sup_q = sup_q.max(q);
                m *= 2;
            }
        }
        quot_int += sup_q * dt;

        let hs = sp.sobolev_norm_hs(&st.vel, s);
        dteta_int += hs * hs * dt;

        // bending pairing against the second shift quotient at unit shift
        let (_, sb) = model.scaled_stresses(&jet);
        let rb = model.adjoint_residual(&sb, &model.curvature_linearization(&jet));
        for dir in [Direction::E1, Direction::E2] {
            // test direction −D^s_{−h} D^s_h η, so that the flat linear
            // pairing equals +‖D^s_h ∇²η‖² in the elasticity inner product
            let dplus = diff_quotient(eta, s, 1, dir);
            let dtest = diff_quotient(&dplus, s, -1, dir).scale(-1.0);
            let lhs = rb.inner(&dtest);
            let mut qsq = 0.0;
            for c in 0..3 {
                let dq = diff_quotient(&d2[c], s, 1, dir);
                qsq += comp_w[c] * dq.inner(&dq);
            }
            if c0 * qsq > 1e-14 * (1.0 + lhs.abs()) {
                min_ratio = min_ratio.min(lhs / (c0 * qsq));
            }
        }
    }
    if !min_ratio.is_finite() {
        min_ratio = 1.0;
    }
    RegularityReport {
        sup_w14,
        sup_weighted_h2: sup_wh2,
        shift_quotient_integral: quot_int,
        dteta_hs_integral: dteta_int,
        pairing_min_ratio: min_ratio,
    }
}

/// Energy-calibrated a-priori baselines implied by coercivity of the Koiter
/// energy at the flat state: ‖∇η‖_{L⁴} ≤ (E₀/(μh))^{1/4} and
/// ∫γ̃²|∇²η|² ≤ 12 E₀ / (μ h³) + the regularization share.
pub fn energy_baselines(model: &ShellModel<f64>, total_energy0: f64) -> (f64, f64) {
    let h = model.params.thickness;
    let mu = model.params.mu;
    let w14 = (total_energy0 / (mu * h)).powf(0.25);
    let wh2 = 12.0 * total_energy0 / (mu * h * h * h);
    (w14, wh2)
}

/// Exactly MAC-divergence-free staggered velocity with no-slip walls,
/// built as the discrete curl of random stream-function potentials whose
/// vertical profiles vanish to first order at both walls. This is the
/// admissible test datum for the Korn identity on a rigid boundary.
pub fn rigid_mode(g: BoxGrid3, seed: u64) -> StaggeredField3D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tp = 2.0 * std::f64::consts::PI;
    let mut modes = Vec::new();
    for _ in 0..4 {
        let m1 = rng.gen_range(-2i32..=2) as f64;
        let m2 = rng.gen_range(-2i32..=2) as f64;
        let amp = rng.gen::<f64>() - 0.5;
        let phase = tp * rng.gen::<f64>();
        modes.push((m1, m2, amp, phase));
    }
    let trig = |x: f64, y: f64, sel: usize| -> f64 {
        let (m1, m2, a, p) = modes[sel];
        a * (tp * (m1 * x / g.lx + m2 * y / g.ly) + p).cos()
    };
    let prof = |z: f64| {
        let t = (std::f64::consts::PI * (z + g.depth) / g.depth).sin();
        t * t
    };
    let (dx, dy, dz) = (g.dx(), g.dy(), g.dz());
    // ψ3 at (i·dx, j·dy, z_center): horizontal curl part
    let psi3 = |i: usize, j: usize, k: usize| {
        prof(g.z_center(k)) * (trig(i as f64 * dx, j as f64 * dy, 0) + trig(i as f64 * dx, j as f64 * dy, 1))
    };
    // ψ2 at (i·dx, (j+½)·dy, z_face): vertical exchange part
    let psi2 = |i: usize, j: usize, k: usize| {
        prof(g.z_face(k)) * trig(i as f64 * dx, (j as f64 + 0.5) * dy, 2)
    };
    let mut u = StaggeredField3D::zeros(g);
    for i in 0..g.nx {
        let ip = (i + 1) % g.nx;
        for j in 0..g.ny {
            let jp = (j + 1) % g.ny;
            for k in 0..g.nz {
                let c = g.idx(i, j, k);
                u.u1[c] = (psi3(i, jp, k) - psi3(i, j, k)) / dy
                    - (psi2(i, j, k + 1) - psi2(i, j, k)) / dz;
                u.u2[c] = -(psi3(ip, j, k) - psi3(i, j, k)) / dx;
                if k >= 1 {
                    u.u3[g.idx_zface(i, j, k)] = (psi2(ip, j, k) - psi2(i, j, k)) / dx;
                }
            }
        }
    }
    u
}

/// L⁴ norm of the displacement gradient of a single field (helper shared
/// with the CLI diagnostics).
pub fn grad_l4(field: &ScalarField2D<f64>) -> f64 {
    let sp = Spectral2D::new(field.grid);
    let g1 = sp.derivative(field, (1, 0));
    let g2 = sp.derivative(field, (0, 1));
    let mut l4 = 0.0;
    for i in 0..field.grid.len() {
        let q = g1.values[i] * g1.values[i] + g2.values[i] * g2.values[i];
        l4 += q * q;
    }
    (l4 * field.grid.node_weight()).powf(0.25)
}
