//! ALE fluid sub-step on the fixed reference box: one monolithic linear
//! saddle-point solve in (u, v, p) per time step with J-weighted inertia,
//! skew-symmetrized convection, transformed viscous dissipation, the
//! transformed divergence constraint, and the shell-velocity relaxation.
//!
//! All operators are built from two constant sparse stencils (a cell-center
//! z-gradient `G` and a cell-center averaging `P`) composed with per-cell
//! diagonal metric transforms, so symmetry (viscous), skew-symmetry
//! (convection) and adjointness (pressure/divergence) hold exactly by
//! construction — the discrete kinetic energy identity is algebra, not
//! hope. The linear system is solved by GMRES with an exact Fourier-block
//! factorization of the flat-state (η = 0) operator as right
//! preconditioner.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::gmres::{gmres, GmresStats};
use super::sparse::Csr;
use super::{FluidState, ShellState, SolverError};
use crate::discrete::{BoxGrid3, PeriodicGrid2D, ScalarField2D, Spectral2D, StaggeredField3D};
use crate::geometry::TubularChart;

/// Unknown layout: [u1 x-faces | u2 y-faces | u3 interior z-faces | v | p].
#[derive(Clone, Copy, Debug)]
pub struct DofMap {
    pub grid: BoxGrid3,
}

impl DofMap {
    pub fn n_face(&self) -> usize {
        self.grid.nx * self.grid.ny * self.grid.nz
    }
    pub fn n_u3(&self) -> usize {
        self.grid.nx * self.grid.ny * (self.grid.nz - 1)
    }
    pub fn n_v(&self) -> usize {
        self.grid.nx * self.grid.ny
    }
    pub fn o2(&self) -> usize {
        self.n_face()
    }
    pub fn o3(&self) -> usize {
        2 * self.n_face()
    }
    pub fn ov(&self) -> usize {
        2 * self.n_face() + self.n_u3()
    }
    pub fn op(&self) -> usize {
        self.ov() + self.n_v()
    }
    /// velocity-space dimension (fluid faces plus shell velocity)
    pub fn nvel(&self) -> usize {
        self.op()
    }
    pub fn ndof(&self) -> usize {
        self.op() + self.grid.ncells()
    }

    #[inline]
    pub fn iu1(&self, i: isize, j: isize, k: usize) -> usize {
        self.grid.idx_wrap(i, j, k)
    }
    #[inline]
    pub fn iu2(&self, i: isize, j: isize, k: usize) -> usize {
        self.o2() + self.grid.idx_wrap(i, j, k)
    }
    /// interior z-face, 1 ≤ k ≤ nz−1
    #[inline]
    pub fn iu3(&self, i: isize, j: isize, k: usize) -> usize {
        debug_assert!(k >= 1 && k < self.grid.nz);
        let g = self.grid;
        let i = i.rem_euclid(g.nx as isize) as usize;
        let j = j.rem_euclid(g.ny as isize) as usize;
        self.o3() + (i * g.ny + j) * (g.nz - 1) + (k - 1)
    }
    #[inline]
    pub fn iv(&self, i: isize, j: isize) -> usize {
        let g = self.grid;
        let i = i.rem_euclid(g.nx as isize) as usize;
        let j = j.rem_euclid(g.ny as isize) as usize;
        self.ov() + i * g.ny + j
    }
    #[inline]
    pub fn ip(&self, i: usize, j: usize, k: usize) -> usize {
        self.op() + self.grid.idx(i, j, k)
    }

    /// z-face velocity DOF if it is an unknown: None for the clamped bottom
    /// wall face, `iv` for the top (interface) face.
    #[inline]
    fn f3(&self, i: isize, j: isize, kk: usize) -> Option<usize> {
        if kk == 0 {
            None
        } else if kk == self.grid.nz {
            Some(self.iv(i, j))
        } else {
            Some(self.iu3(i, j, kk))
        }
    }

    /// Packs a staggered field plus shell velocity into a flat DOF vector
    /// (pressure from `u.p`).
    pub fn pack(&self, u: &StaggeredField3D, v: &[f64]) -> Vec<f64> {
        let g = self.grid;
        assert_eq!(v.len(), self.n_v());
        let mut x = vec![0.0; self.ndof()];
        x[..self.n_face()].copy_from_slice(&u.u1);
        x[self.o2()..self.o3()].copy_from_slice(&u.u2);
        for i in 0..g.nx {
            for j in 0..g.ny {
                for k in 1..g.nz {
                    x[self.iu3(i as isize, j as isize, k)] = u.u3[g.idx_zface(i, j, k)];
                }
            }
        }
        x[self.ov()..self.op()].copy_from_slice(v);
        x[self.op()..].copy_from_slice(&u.p);
        x
    }

    /// Inverse of [`pack`](Self::pack); the top z-face carries v, the bottom
    /// face is zero.
    pub fn unpack(&self, x: &[f64]) -> (StaggeredField3D, Vec<f64>) {
        let g = self.grid;
        let mut u = StaggeredField3D::zeros(g);
        u.u1.copy_from_slice(&x[..self.n_face()]);
        u.u2.copy_from_slice(&x[self.o2()..self.o3()]);
        for i in 0..g.nx {
            for j in 0..g.ny {
                for k in 1..g.nz {
                    u.u3[g.idx_zface(i, j, k)] = x[self.iu3(i as isize, j as isize, k)];
                }
                u.u3[g.idx_zface(i, j, g.nz)] = x[self.iv(i as isize, j as isize)];
            }
        }
        u.p.copy_from_slice(&x[self.op()..]);
        let v = x[self.ov()..self.op()].to_vec();
        (u, v)
    }
}

/// Options fixed per solver instance.
#[derive(Clone, Copy, Debug)]
pub struct FluidOptions {
    pub viscosity: f64,
    pub dt: f64,
    pub lin_tol: f64,
    /// pin v ≡ 0 (rigid-boundary studies)
    pub frozen_boundary: bool,
    pub include_viscosity: bool,
    /// 1.0 for the exact skew pairing ½(K − fault·Kᵀ); ≠ 1 is a fault
    /// injection hook for the validation suite
    pub skew_fault: f64,
}

impl FluidOptions {
    pub fn new(viscosity: f64, dt: f64, lin_tol: f64) -> Self {
        FluidOptions {
            viscosity,
            dt,
            lin_tol,
            frozen_boundary: false,
            include_viscosity: true,
            skew_fault: 1.0,
        }
    }
}

/// Per-step metric coefficients and the η-dependent constraint matrix.
pub struct StepCoeffs {
    /// J^n at faces × vol / Δt, shell mass at v slots (length nvel)
    pub mass: Vec<f64>,
    /// ½(J^{n+1}−J^n) at faces × vol / Δt, zero at v slots
    pub dj: Vec<f64>,
    /// per cell [m13, m23, m33] of F^{−T} (m11 = m22 = 1)
    pub fco: Vec<[f64; 3]>,
    /// per cell J^n × vol
    pub jvol: Vec<f64>,
    /// per cell convective velocity u^n − w^{n+1/2}
    pub acell: Vec<[f64; 3]>,
    /// vol-scaled transformed MAC divergence (rows = cells, cols = velocity)
    pub b: Csr,
    pub bt: Csr,
}

/// The ALE fluid solver bound to one grid/chart/options triple.
pub struct FluidSolver {
    pub dof: DofMap,
    pub chart: TubularChart<f64>,
    pub shell_grid: PeriodicGrid2D<f64>,
    pub opts: FluidOptions,
    g_op: Csr,
    gt_op: Csr,
    p_op: Csr,
    pt_op: Csr,
    spectral: Spectral2D<f64>,
    precond: Vec<nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>>,
}

/// Shell grid matching the fluid lattice: ω nodes at horizontal cell
/// centers.
pub fn shell_grid_for(grid: BoxGrid3) -> PeriodicGrid2D<f64> {
    PeriodicGrid2D::with_lengths(grid.nx, grid.ny, grid.lx, grid.ly)
        .with_offset(0.5 * grid.dx(), 0.5 * grid.dy())
}

impl FluidSolver {
    pub fn new(grid: BoxGrid3, chart: TubularChart<f64>, opts: FluidOptions) -> Self {
        assert!(
            (chart.surface.beta_omega() - chart.surface.alpha_omega() - grid.depth).abs() < 1e-12
                || chart.surface.alpha_omega() <= -grid.depth,
            "chart collar must cover the box depth"
        );
        let dof = DofMap { grid };
        let shell_grid = shell_grid_for(grid);
        let g_op = build_gradient_stencil(&dof);
        let p_op = build_average_stencil(&dof);
        let gt_op = g_op.transpose();
        let pt_op = p_op.transpose();
        let spectral = Spectral2D::new(shell_grid);
        let mut solver = FluidSolver {
            dof,
            chart,
            shell_grid,
            opts,
            g_op,
            gt_op,
            p_op,
            pt_op,
            spectral,
            precond: Vec::new(),
        };
        solver.precond = solver.build_preconditioner();
        solver
    }

    /// Per-step coefficients from the shell states.
    pub fn coefficients(
        &self,
        shell_old: &ShellState,
        shell_mid: &ShellState,
        u_old: &StaggeredField3D,
        v_old: &[f64],
    ) -> Result<StepCoeffs, SolverError> {
        let g = self.dof.grid;
        let sp = &self.spectral;
        let eta0 = &shell_old.eta;
        let eta1 = &shell_mid.eta;
        let d0 = (sp.derivative(eta0, (1, 0)), sp.derivative(eta0, (0, 1)));
        let sigma = &self.chart.sigma;
        let vol = g.cell_vol();
        let dt = self.opts.dt;
        let ncell = g.ncells();

        // cell Jacobians at t^n and t^{n+1}
        let mut j0 = vec![0.0; ncell];
        let mut j1 = vec![0.0; ncell];
        for i in 0..g.nx {
            for j in 0..g.ny {
                let e0 = eta0.at(i, j);
                let e1 = eta1.at(i, j);
                for k in 0..g.nz {
                    let sp1 = sigma.d1(g.z_center(k));
                    let c = g.idx(i, j, k);
                    j0[c] = 1.0 + sp1 * e0;
                    j1[c] = 1.0 + sp1 * e1;
                    if j0[c] <= 0.0 || j1[c] <= 0.0 {
                        return Err(SolverError::JacobianNonpositive {
                            j_min: j0[c].min(j1[c]),
                        });
                    }
                }
            }
        }

        let dof = self.dof;
        let mut mass = vec![0.0; dof.nvel()];
        let mut dj = vec![0.0; dof.nvel()];
        let favg = |jc: &Vec<f64>, a: usize, b: usize| 0.5 * (jc[a] + jc[b]);
        for i in 0..g.nx {
            for j in 0..g.ny {
                for k in 0..g.nz {
                    let c = g.idx(i, j, k);
                    let cxm = g.idx_wrap(i as isize - 1, j as isize, k);
                    let cym = g.idx_wrap(i as isize, j as isize - 1, k);
                    let jx0 = favg(&j0, cxm, c);
                    let jy0 = favg(&j0, cym, c);
                    mass[dof.iu1(i as isize, j as isize, k)] = jx0 * vol / dt;
                    mass[dof.iu2(i as isize, j as isize, k)] = jy0 * vol / dt;
                    dj[dof.iu1(i as isize, j as isize, k)] =
                        0.5 * (favg(&j1, cxm, c) - jx0) * vol / dt;
                    dj[dof.iu2(i as isize, j as isize, k)] =
                        0.5 * (favg(&j1, cym, c) - jy0) * vol / dt;
                    if k >= 1 {
                        let czm = g.idx(i, j, k - 1);
                        let jz0 = favg(&j0, czm, c);
                        mass[dof.iu3(i as isize, j as isize, k)] = jz0 * vol / dt;
                        dj[dof.iu3(i as isize, j as isize, k)] =
                            0.5 * (favg(&j1, czm, c) - jz0) * vol / dt;
                    }
                }
                // shell inertia: ∫ω (v^{n+1} − v^{n+1/2}) ξ / Δt
                mass[dof.iv(i as isize, j as isize)] = self.shell_grid.node_weight() / dt;
            }
        }

        let mut fco = vec![[0.0; 3]; ncell];
        let mut jvol = vec![0.0; ncell];
        for i in 0..g.nx {
            for j in 0..g.ny {
                let h1 = d0.0.at(i, j);
                let h2 = d0.1.at(i, j);
                for k in 0..g.nz {
                    let c = g.idx(i, j, k);
                    let sg = sigma.value(g.z_center(k));
                    fco[c] = [-sg * h1 / j0[c], -sg * h2 / j0[c], 1.0 / j0[c]];
                    jvol[c] = j0[c] * vol;
                }
            }
        }

        // convective velocity u^n − w^{n+1/2} at cell centers
        let xu_old = dof.pack(u_old, v_old);
        let mut cell_u = vec![0.0; 3 * ncell];
        self.p_op.mul_vec(&xu_old[..dof.nvel()], &mut cell_u);
        let mut acell = vec![[0.0; 3]; ncell];
        for i in 0..g.nx {
            for j in 0..g.ny {
                let vmid = shell_mid.vel.at(i, j);
                for k in 0..g.nz {
                    let c = g.idx(i, j, k);
                    let w3 = sigma.value(g.z_center(k)) * vmid;
                    acell[c] = [cell_u[3 * c], cell_u[3 * c + 1], cell_u[3 * c + 2] - w3];
                }
            }
        }

        let b = self.build_constraint(eta0, &d0.0, &d0.1);
        let bt = b.transpose();
        Ok(StepCoeffs { mass, dj, fco, jvol, acell, b, bt })
    }

    /// vol-scaled transformed divergence: rows = cells, columns = velocity
    /// DOFs; the contravariant flux is U = (u1, u2, u3 − σ η_α u_α).
    fn build_constraint(
        &self,
        _eta: &ScalarField2D<f64>,
        eta1: &ScalarField2D<f64>,
        eta2: &ScalarField2D<f64>,
    ) -> Csr {
        let g = self.dof.grid;
        let dof = self.dof;
        let vol = g.cell_vol();
        let (dx, dy, dz) = (g.dx(), g.dy(), g.dz());
        let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(g.ncells() * 16);
        for i in 0..g.nx {
            let i = i as isize;
            for j in 0..g.ny {
                let j = j as isize;
                let h1 = eta1.at(i as usize, j as usize);
                let h2 = eta2.at(i as usize, j as usize);
                for k in 0..g.nz {
                    let row = g.idx(i as usize, j as usize, k);
                    t.push((row, dof.iu1(i + 1, j, k), vol / dx));
                    t.push((row, dof.iu1(i, j, k), -vol / dx));
                    t.push((row, dof.iu2(i, j + 1, k), vol / dy));
                    t.push((row, dof.iu2(i, j, k), -vol / dy));
                    for (kk, sgn) in [(k + 1, 1.0), (k, -1.0)] {
                        let w = sgn * vol / dz;
                        if let Some(d3) = dof.f3(i, j, kk) {
                            t.push((row, d3, w));
                        }
                        // transformed part −σ(z_face)(η1 ū1 + η2 ū2); the
                        // horizontal trace vanishes at both walls
                        if kk >= 1 && kk < g.nz {
                            let sg = self.chart.sigma.value(g.z_face(kk));
                            if sg != 0.0 {
                                for (coef, f) in [(h1, 0usize), (h2, 1usize)] {
                                    if coef == 0.0 {
                                        continue;
                                    }
                                    let q = -0.25 * sg * coef * w;
                                    for lev in [kk - 1, kk] {
                                        if f == 0 {
                                            t.push((row, dof.iu1(i, j, lev), q));
                                            t.push((row, dof.iu1(i + 1, j, lev), q));
                                        } else {
                                            t.push((row, dof.iu2(i, j, lev), q));
                                            t.push((row, dof.iu2(i, j + 1, lev), q));
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Csr::from_triplets(g.ncells(), dof.nvel(), &t)
    }

    /// Physical-gradient transform at one cell: (g1,g2,g3) ↦ F^{−T}∇_z u_j.
    #[inline]
    fn phys_grad(fc: &[f64; 3], g1: f64, g2: f64, g3: f64) -> [f64; 3] {
        [g1 + fc[0] * g3, g2 + fc[1] * g3, fc[2] * g3]
    }

    /// Adjoint of [`phys_grad`](Self::phys_grad).
    #[inline]
    fn phys_grad_adjoint(fc: &[f64; 3], e: &[f64; 3]) -> [f64; 3] {
        [e[0], e[1], fc[0] * e[0] + fc[1] * e[1] + fc[2] * e[2]]
    }

    /// y += viscous operator applied to the velocity part xu:
    /// a(u, q) = 2ν Σ_c J vol D^η(u):D^η(q).
    fn add_viscous(&self, co: &StepCoeffs, xu: &[f64], y: &mut [f64]) {
        let ncell = self.dof.grid.ncells();
        let mut g9 = vec![0.0; 9 * ncell];
        self.g_op.mul_vec(xu, &mut g9);
        let nu2 = 2.0 * self.opts.viscosity;
        let mut y9 = vec![0.0; 9 * ncell];
        for c in 0..ncell {
            let fc = &co.fco[c];
            let mut h = [[0.0; 3]; 3]; // h[alpha][j] = ∂x_α u_j
            for j in 0..3 {
                let b = 9 * c + 3 * j;
                let ph = Self::phys_grad(fc, g9[b], g9[b + 1], g9[b + 2]);
                for a in 0..3 {
                    h[a][j] = ph[a];
                }
            }
            let w = nu2 * co.jvol[c];
            let mut e = [[0.0; 3]; 3];
            for a in 0..3 {
                for j in 0..3 {
                    e[a][j] = w * 0.5 * (h[a][j] + h[j][a]);
                }
            }
            for j in 0..3 {
                let col = [e[0][j], e[1][j], e[2][j]];
                let back = Self::phys_grad_adjoint(fc, &col);
                let b = 9 * c + 3 * j;
                y9[b] = back[0];
                y9[b + 1] = back[1];
                y9[b + 2] = back[2];
            }
        }
        let mut yv = vec![0.0; self.dof.nvel()];
        self.gt_op.mul_vec(&y9, &mut yv);
        for (yi, vi) in y.iter_mut().zip(&yv) {
            *yi += vi;
        }
    }

    /// The constant cell-centered gradient stencil (test and oracle access).
    pub fn gradient_op(&self) -> &Csr {
        &self.g_op
    }

    /// Viscous operator as a map (diagnostics and subspace oracles).
    pub fn viscous_apply(&self, co: &StepCoeffs, xu: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dof.nvel()];
        self.add_viscous(co, xu, &mut y);
        y
    }

    /// Dissipation rate 2ν Σ J vol |D^η(u)|² of a velocity vector.
    pub fn viscous_form(&self, co: &StepCoeffs, xu: &[f64]) -> f64 {
        let ncell = self.dof.grid.ncells();
        let mut g9 = vec![0.0; 9 * ncell];
        self.g_op.mul_vec(xu, &mut g9);
        let mut s = 0.0;
        for c in 0..ncell {
            let fc = &co.fco[c];
            let mut h = [[0.0; 3]; 3];
            for j in 0..3 {
                let b = 9 * c + 3 * j;
                let ph = Self::phys_grad(fc, g9[b], g9[b + 1], g9[b + 2]);
                for a in 0..3 {
                    h[a][j] = ph[a];
                }
            }
            let mut dsq = 0.0;
            for a in 0..3 {
                for j in 0..3 {
                    let d = 0.5 * (h[a][j] + h[j][a]);
                    dsq += d * d;
                }
            }
            s += 2.0 * self.opts.viscosity * co.jvol[c] * dsq;
        }
        s
    }

    /// Full physical gradient and its symmetric part, J-weighted:
    /// (∫J|∇^η u|², 2∫J|D^η u|²) — the Korn pair.
    pub fn korn_pair(&self, co: &StepCoeffs, xu: &[f64]) -> (f64, f64) {
        let ncell = self.dof.grid.ncells();
        let mut g9 = vec![0.0; 9 * ncell];
        self.g_op.mul_vec(xu, &mut g9);
        let (mut full, mut symd) = (0.0, 0.0);
        for c in 0..ncell {
            let fc = &co.fco[c];
            let mut h = [[0.0; 3]; 3];
            for j in 0..3 {
                let b = 9 * c + 3 * j;
                let ph = Self::phys_grad(fc, g9[b], g9[b + 1], g9[b + 2]);
                for a in 0..3 {
                    h[a][j] = ph[a];
                }
            }
            for a in 0..3 {
                for j in 0..3 {
                    full += co.jvol[c] * h[a][j] * h[a][j];
                    let d = 0.5 * (h[a][j] + h[j][a]);
                    symd += 2.0 * co.jvol[c] * d * d;
                }
            }
        }
        (full, symd)
    }

    /// y += K xu, the un-symmetrized convection ∫ J (a·∇^η u)·q.
    fn add_conv_k(&self, co: &StepCoeffs, xu: &[f64], y: &mut [f64], scale: f64) {
        let ncell = self.dof.grid.ncells();
        let mut g9 = vec![0.0; 9 * ncell];
        self.g_op.mul_vec(xu, &mut g9);
        let mut c3 = vec![0.0; 3 * ncell];
        for c in 0..ncell {
            let fc = &co.fco[c];
            let a = &co.acell[c];
            for j in 0..3 {
                let b = 9 * c + 3 * j;
                let ph = Self::phys_grad(fc, g9[b], g9[b + 1], g9[b + 2]);
                c3[3 * c + j] = scale * co.jvol[c] * (a[0] * ph[0] + a[1] * ph[1] + a[2] * ph[2]);
            }
        }
        let mut yv = vec![0.0; self.dof.nvel()];
        self.pt_op.mul_vec(&c3, &mut yv);
        for (yi, vi) in y.iter_mut().zip(&yv) {
            *yi += vi;
        }
    }

    /// y += Kᵀ xu.
    fn add_conv_kt(&self, co: &StepCoeffs, xu: &[f64], y: &mut [f64], scale: f64) {
        let ncell = self.dof.grid.ncells();
        let mut c3 = vec![0.0; 3 * ncell];
        self.p_op.mul_vec(xu, &mut c3);
        let mut y9 = vec![0.0; 9 * ncell];
        for c in 0..ncell {
            let fc = &co.fco[c];
            let a = &co.acell[c];
            for j in 0..3 {
                let t = scale * co.jvol[c] * c3[3 * c + j];
                let e = [a[0] * t, a[1] * t, a[2] * t];
                let back = Self::phys_grad_adjoint(fc, &e);
                let b = 9 * c + 3 * j;
                y9[b] = back[0];
                y9[b + 1] = back[1];
                y9[b + 2] = back[2];
            }
        }
        let mut yv = vec![0.0; self.dof.nvel()];
        self.gt_op.mul_vec(&y9, &mut yv);
        for (yi, vi) in y.iter_mut().zip(&yv) {
            *yi += vi;
        }
    }

    /// Full coupled operator: momentum rows, v-relaxation rows, constraint
    /// rows. With frozen boundary the v rows/columns are replaced by the
    /// identity.
    pub fn apply(&self, co: &StepCoeffs, x: &[f64]) -> Vec<f64> {
        let dof = self.dof;
        let nvel = dof.nvel();
        let mut xu = x[..nvel].to_vec();
        if self.opts.frozen_boundary {
            for s in dof.ov()..dof.op() {
                xu[s] = 0.0;
            }
        }
        let xp = &x[nvel..];
        let mut y = vec![0.0; dof.ndof()];
        for s in 0..nvel {
            y[s] = (co.mass[s] + co.dj[s]) * xu[s];
        }
        if self.opts.include_viscosity {
            self.add_viscous(co, &xu, &mut y[..nvel]);
        }
        self.add_conv_k(co, &xu, &mut y[..nvel], 0.5);
        self.add_conv_kt(co, &xu, &mut y[..nvel], -0.5 * self.opts.skew_fault);
        // pressure gradient −B'ᵀ p and constraint B' u
        let mut grad = vec![0.0; nvel];
        co.bt.mul_vec(xp, &mut grad);
        for s in 0..nvel {
            y[s] -= grad[s];
        }
        let mut div = vec![0.0; dof.grid.ncells()];
        co.b.mul_vec(&xu, &mut div);
        y[nvel..].copy_from_slice(&div);
        if self.opts.frozen_boundary {
            for s in dof.ov()..dof.op() {
                y[s] = x[s];
            }
        }
        y
    }

    /// Exact Fourier-block factorization of the η = 0, a = 0 operator.
    fn build_preconditioner(
        &self,
    ) -> Vec<nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>> {
        let g = self.dof.grid;
        let m = 4 * g.nz;
        let zero_shell = ShellState::zeros(self.shell_grid);
        let u0 = StaggeredField3D::zeros(g);
        let v0 = vec![0.0; self.dof.n_v()];
        let co = self
            .coefficients(&zero_shell, &zero_shell, &u0, &v0)
            .expect("flat state is admissible");
        let nm = self.shell_grid.len();
        // impulse responses: columns of the per-mode blocks via horizontal FFT
        let mut blocks = vec![DMatrix::<Complex64>::zeros(m, m); nm];
        let scale = nm as f64;
        for t in 0..m {
            let mut x = vec![0.0; self.dof.ndof()];
            x[self.slot_dof(0, 0, t)] = 1.0;
            let y = self.apply(&co, &x);
            for tp in 0..m {
                let mut field = vec![0.0; nm];
                for i in 0..g.nx {
                    for j in 0..g.ny {
                        field[i * g.ny + j] = y[self.slot_dof(i as isize, j as isize, tp)];
                    }
                }
                let hat = self.spectral.forward(&field);
                for (mi, h) in hat.into_iter().enumerate() {
                    blocks[mi][(tp, t)] = h * scale;
                }
            }
        }
        blocks.into_iter().map(|b| b.lu()).collect()
    }

    /// vertical slot t ∈ 0..4nz ↦ DOF at horizontal index (i, j)
    #[inline]
    fn slot_dof(&self, i: isize, j: isize, t: usize) -> usize {
        let nz = self.dof.grid.nz;
        if t < nz {
            self.dof.iu1(i, j, t)
        } else if t < 2 * nz {
            self.dof.iu2(i, j, t - nz)
        } else if t < 3 * nz - 1 {
            self.dof.iu3(i, j, t - 2 * nz + 1)
        } else if t == 3 * nz - 1 {
            self.dof.iv(i, j)
        } else {
            self.dof.ip(
                i.rem_euclid(self.dof.grid.nx as isize) as usize,
                j.rem_euclid(self.dof.grid.ny as isize) as usize,
                t - 3 * nz,
            )
        }
    }

    /// z = M⁻¹ r with M the flat-state operator (exact per Fourier mode).
    pub fn precondition(&self, r: &[f64]) -> Vec<f64> {
        let g = self.dof.grid;
        let m = 4 * g.nz;
        let nm = self.shell_grid.len();
        let mut hats = vec![vec![Complex64::new(0.0, 0.0); nm]; m];
        let mut field = vec![0.0; nm];
        for (t, hat) in hats.iter_mut().enumerate() {
            for i in 0..g.nx {
                for j in 0..g.ny {
                    field[i * g.ny + j] = r[self.slot_dof(i as isize, j as isize, t)];
                }
            }
            *hat = self.spectral.forward(&field);
        }
        let mut rhs = DMatrix::<Complex64>::zeros(m, 1);
        for mi in 0..nm {
            for t in 0..m {
                rhs[(t, 0)] = hats[t][mi];
            }
            let sol = self.precond[mi].solve(&rhs).expect("preconditioner block is invertible");
            for t in 0..m {
                hats[t][mi] = sol[(t, 0)];
            }
        }
        let mut z = vec![0.0; self.dof.ndof()];
        for (t, hat) in hats.iter().enumerate() {
            let vals = self.spectral.inverse(hat);
            for i in 0..g.nx {
                for j in 0..g.ny {
                    z[self.slot_dof(i as isize, j as isize, t)] = vals[i * g.ny + j];
                }
            }
        }
        z
    }

    /// One fluid sub-step. Returns the new fluid state, the relaxed shell
    /// velocity v^{n+1}, and solve diagnostics.
    pub fn step(
        &self,
        fluid: &FluidState,
        shell_old: &ShellState,
        shell_mid: &ShellState,
    ) -> Result<(FluidState, ScalarField2D<f64>, FluidStepStats), SolverError> {
        let dof = self.dof;
        let g = dof.grid;
        let co = self.coefficients(shell_old, shell_mid, &fluid.u, &shell_old.vel.values)?;
        let xu_old = dof.pack(&fluid.u, &shell_old.vel.values);

        let mut rhs = vec![0.0; dof.ndof()];
        for s in 0..dof.ov() {
            rhs[s] = co.mass[s] * xu_old[s];
        }
        if !self.opts.frozen_boundary {
            for i in 0..g.nx {
                for j in 0..g.ny {
                    let s = dof.iv(i as isize, j as isize);
                    rhs[s] = co.mass[s] * shell_mid.vel.at(i, j);
                }
            }
        }

        let mut x = xu_old.clone();
        if self.opts.frozen_boundary {
            for s in dof.ov()..dof.op() {
                x[s] = 0.0;
            }
        }
        let apply = |v: &[f64]| self.apply(&co, v);
        let pre = |v: &[f64]| self.precondition(v);
        let stats = gmres(&apply, &pre, &rhs, &mut x, self.opts.lin_tol, 60, 800);
        if !stats.converged {
            return Err(SolverError::SolverFailure {
                context: format!(
                    "fluid GMRES stalled at relative residual {:.3e} after {} iterations",
                    stats.residual, stats.iterations
                ),
            });
        }

        let (u_new, v_new) = dof.unpack(&x);
        // diagnostics
        let xu_new = &x[..dof.nvel()];
        let viscous_dissipation = if self.opts.include_viscosity {
            self.opts.dt * self.viscous_form(&co, xu_new)
        } else {
            0.0
        };
        let mut div = vec![0.0; g.ncells()];
        co.b.mul_vec(xu_new, &mut div);
        let div_residual =
            div.iter().fold(0.0f64, |a, v| a.max(v.abs())) / g.cell_vol();
        // kinetic energy of the new state in the J^{n+1} metric
        let sigma = &self.chart.sigma;
        let mut j1 = vec![0.0; g.ncells()];
        let mut j_min = f64::INFINITY;
        for i in 0..g.nx {
            for j in 0..g.ny {
                let e1 = shell_mid.eta.at(i, j);
                for k in 0..g.nz {
                    let c = g.idx(i, j, k);
                    j1[c] = 1.0 + sigma.d1(g.z_center(k)) * e1;
                    j_min = j_min.min(j1[c]);
                }
            }
        }
        let kinetic_new = self.weighted_kinetic(&j1, xu_new);
        // numerical dissipation: J^n-weighted increment plus shell relaxation
        let mut numerical = 0.0;
        for s in 0..dof.ov() {
            let d = xu_new[s] - xu_old[s];
            numerical += 0.5 * co.mass[s] * self.opts.dt * d * d;
        }
        let ms = self.shell_grid.node_weight();
        for i in 0..g.nx {
            for j in 0..g.ny {
                let d = xu_new[dof.iv(i as isize, j as isize)] - shell_mid.vel.at(i, j);
                numerical += 0.5 * ms * d * d;
            }
        }

        let mut w3 = vec![0.0; g.ncells()];
        for i in 0..g.nx {
            for j in 0..g.ny {
                let vm = shell_mid.vel.at(i, j);
                for k in 0..g.nz {
                    w3[g.idx(i, j, k)] = sigma.value(g.z_center(k)) * vm;
                }
            }
        }
        let fs = FluidState { u: u_new, jac: j1, w3, j_min };
        let v_field = ScalarField2D::from_values(self.shell_grid, v_new);
        Ok((
            fs,
            v_field,
            FluidStepStats {
                gmres: stats,
                viscous_dissipation,
                kinetic_new,
                numerical_dissipation: numerical,
                div_residual,
            },
        ))
    }

    /// ½ Σ_faces J |u|² vol with J averaged to faces (top interface face
    /// excluded — its kinetic energy is the shell's ½‖v‖²).
    pub fn weighted_kinetic(&self, jcell: &[f64], xu: &[f64]) -> f64 {
        let g = self.dof.grid;
        let dof = self.dof;
        let vol = g.cell_vol();
        let mut s = 0.0;
        for i in 0..g.nx {
            for j in 0..g.ny {
                for k in 0..g.nz {
                    let c = g.idx(i, j, k);
                    let jx = 0.5 * (jcell[g.idx_wrap(i as isize - 1, j as isize, k)] + jcell[c]);
                    let jy = 0.5 * (jcell[g.idx_wrap(i as isize, j as isize - 1, k)] + jcell[c]);
                    let v1 = xu[dof.iu1(i as isize, j as isize, k)];
                    let v2 = xu[dof.iu2(i as isize, j as isize, k)];
                    s += 0.5 * vol * (jx * v1 * v1 + jy * v2 * v2);
                    if k >= 1 {
                        let jz = 0.5 * (jcell[g.idx(i, j, k - 1)] + jcell[c]);
                        let v3 = xu[dof.iu3(i as isize, j as isize, k)];
                        s += 0.5 * vol * jz * v3 * v3;
                    }
                }
            }
        }
        s
    }
}

/// Diagnostics of one fluid sub-step.
#[derive(Clone, Copy, Debug)]
pub struct FluidStepStats {
    pub gmres: GmresStats,
    /// 2νΔt ∫ J^n |D^{η^n}(u^{n+1})|²
    pub viscous_dissipation: f64,
    /// ½∫J^{n+1}|u^{n+1}|²
    pub kinetic_new: f64,
    /// ½∫J^n|u^{n+1}−u^n|² + ½‖v^{n+1}−v^{n+1/2}‖²
    pub numerical_dissipation: f64,
    /// sup-norm of the transformed MAC divergence of u^{n+1}
    pub div_residual: f64,
}

/// Constant stencil: cell-centered reference-coordinate gradients of all
/// three velocity components; rows 9c + 3·comp + deriv. No-slip walls enter
/// through odd ghost reflection (horizontal components) and the clamped /
/// interface z-faces.
fn build_gradient_stencil(dof: &DofMap) -> Csr {
    let g = dof.grid;
    let (dx, dy, dz) = (g.dx(), g.dy(), g.dz());
    let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(g.ncells() * 50);
    // cell average of a horizontal component as (dof, weight) pairs
    let avg1 = |i: isize, j: isize, k: usize| [(dof.iu1(i, j, k), 0.5), (dof.iu1(i + 1, j, k), 0.5)];
    let avg2 = |i: isize, j: isize, k: usize| [(dof.iu2(i, j, k), 0.5), (dof.iu2(i, j + 1, k), 0.5)];
    for i in 0..g.nx as isize {
        for j in 0..g.ny as isize {
            for k in 0..g.nz {
                let c = g.idx(i as usize, j as usize, k);
                // ---- u1 ----
                let row = 9 * c;
                t.push((row, dof.iu1(i + 1, j, k), 1.0 / dx));
                t.push((row, dof.iu1(i, j, k), -1.0 / dx));
                let row = 9 * c + 1;
                for (d, w) in avg1(i, j + 1, k) {
                    t.push((row, d, w / (2.0 * dy)));
                }
                for (d, w) in avg1(i, j - 1, k) {
                    t.push((row, d, -w / (2.0 * dy)));
                }
                let row = 9 * c + 2;
                push_vertical_avg(&mut t, row, k, g.nz, 1.0 / (2.0 * dz), &|kk| {
                    avg1(i, j, kk).to_vec()
                });
                // ---- u2 ----
                let row = 9 * c + 3;
                for (d, w) in avg2(i + 1, j, k) {
                    t.push((row, d, w / (2.0 * dx)));
                }
                for (d, w) in avg2(i - 1, j, k) {
                    t.push((row, d, -w / (2.0 * dx)));
                }
                let row = 9 * c + 4;
                t.push((row, dof.iu2(i, j + 1, k), 1.0 / dy));
                t.push((row, dof.iu2(i, j, k), -1.0 / dy));
                let row = 9 * c + 5;
                push_vertical_avg(&mut t, row, k, g.nz, 1.0 / (2.0 * dz), &|kk| {
                    avg2(i, j, kk).to_vec()
                });
                // ---- u3 ----
                let avg3 = |ii: isize, jj: isize, kk: usize| -> Vec<(usize, f64)> {
                    let mut v = Vec::with_capacity(2);
                    if let Some(d) = dof.f3(ii, jj, kk) {
                        v.push((d, 0.5));
                    }
                    if let Some(d) = dof.f3(ii, jj, kk + 1) {
                        v.push((d, 0.5));
                    }
                    v
                };
                let row = 9 * c + 6;
                for (d, w) in avg3(i + 1, j, k) {
                    t.push((row, d, w / (2.0 * dx)));
                }
                for (d, w) in avg3(i - 1, j, k) {
                    t.push((row, d, -w / (2.0 * dx)));
                }
                let row = 9 * c + 7;
                for (d, w) in avg3(i, j + 1, k) {
                    t.push((row, d, w / (2.0 * dy)));
                }
                for (d, w) in avg3(i, j - 1, k) {
                    t.push((row, d, -w / (2.0 * dy)));
                }
                let row = 9 * c + 8;
                if let Some(d) = dof.f3(i, j, k + 1) {
                    t.push((row, d, 1.0 / dz));
                }
                if let Some(d) = dof.f3(i, j, k) {
                    t.push((row, d, -1.0 / dz));
                }
            }
        }
    }
    Csr::from_triplets(9 * g.ncells(), dof.nvel(), &t)
}

/// vertical centered difference of cell averages with odd ghost reflection
/// at both walls (no-slip horizontal trace)
fn push_vertical_avg(
    t: &mut Vec<(usize, usize, f64)>,
    row: usize,
    k: usize,
    nz: usize,
    w: f64,
    avg: &dyn Fn(usize) -> Vec<(usize, f64)>,
) {
    // +average at level k+1 (ghost: −value at nz−1)
    if k + 1 < nz {
        for (d, a) in avg(k + 1) {
            t.push((row, d, a * w));
        }
    } else {
        for (d, a) in avg(nz - 1) {
            t.push((row, d, -a * w));
        }
    }
    // −average at level k−1 (ghost: −value at 0)
    if k >= 1 {
        for (d, a) in avg(k - 1) {
            t.push((row, d, -a * w));
        }
    } else {
        for (d, a) in avg(0) {
            t.push((row, d, a * w));
        }
    }
}

/// Constant stencil: velocity averaged to cell centers; rows 3c + comp.
fn build_average_stencil(dof: &DofMap) -> Csr {
    let g = dof.grid;
    let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(g.ncells() * 6);
    for i in 0..g.nx as isize {
        for j in 0..g.ny as isize {
            for k in 0..g.nz {
                let c = g.idx(i as usize, j as usize, k);
                t.push((3 * c, dof.iu1(i, j, k), 0.5));
                t.push((3 * c, dof.iu1(i + 1, j, k), 0.5));
                t.push((3 * c + 1, dof.iu2(i, j, k), 0.5));
                t.push((3 * c + 1, dof.iu2(i, j + 1, k), 0.5));
                if let Some(d) = dof.f3(i, j, k) {
                    t.push((3 * c + 2, d, 0.5));
                }
                if let Some(d) = dof.f3(i, j, k + 1) {
                    t.push((3 * c + 2, d, 0.5));
                }
            }
        }
    }
    Csr::from_triplets(3 * g.ncells(), dof.nvel(), &t)
}
