//! Staggered (MAC) fields on the fixed reference box ω×[−d, 0]: velocity
//! components on faces, pressure at cell centers; periodic horizontally,
//! wall at the bottom, moving-interface trace on the top.

/// Uniform reference box ω×[−d, 0].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxGrid3 {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub lx: f64,
    pub ly: f64,
    pub depth: f64,
}

impl BoxGrid3 {
    pub fn new(nx: usize, ny: usize, nz: usize, lx: f64, ly: f64, depth: f64) -> Self {
        assert!(nx >= 4 && ny >= 4 && nz >= 2);
        assert!(lx > 0.0 && ly > 0.0 && depth > 0.0);
        BoxGrid3 { nx, ny, nz, lx, ly, depth }
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }
    #[inline]
    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }
    #[inline]
    pub fn dz(&self) -> f64 {
        self.depth / self.nz as f64
    }
    #[inline]
    pub fn cell_vol(&self) -> f64 {
        self.dx() * self.dy() * self.dz()
    }
    #[inline]
    pub fn ncells(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// z-coordinate of horizontal face level `k` (k = 0 bottom wall, nz top).
    #[inline]
    pub fn z_face(&self, k: usize) -> f64 {
        -self.depth + k as f64 * self.dz()
    }
    /// z-coordinate of cell-center level `k`.
    #[inline]
    pub fn z_center(&self, k: usize) -> f64 {
        -self.depth + (k as f64 + 0.5) * self.dz()
    }

    /// Cell / x-face / y-face index (all three families share the shape
    /// nx×ny×nz thanks to horizontal periodicity).
    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny && k < self.nz);
        (i * self.ny + j) * self.nz + k
    }

    #[inline]
    pub fn idx_wrap(&self, i: isize, j: isize, k: usize) -> usize {
        let i = i.rem_euclid(self.nx as isize) as usize;
        let j = j.rem_euclid(self.ny as isize) as usize;
        (i * self.ny + j) * self.nz + k
    }

    /// z-face index into a full (nz+1)-level face array.
    #[inline]
    pub fn idx_zface(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny && k <= self.nz);
        (i * self.ny + j) * (self.nz + 1) + k
    }

    #[inline]
    pub fn idx_zface_wrap(&self, i: isize, j: isize, k: usize) -> usize {
        let i = i.rem_euclid(self.nx as isize) as usize;
        let j = j.rem_euclid(self.ny as isize) as usize;
        (i * self.ny + j) * (self.nz + 1) + k
    }
}

/// MAC velocity/pressure sample container.
///
/// `u1[i,j,k]` lives on the x-face at `(i·dx, (j+½)dy, z_center(k))`,
/// `u2` on the y-face at `((i+½)dx, j·dy, z_center(k))`,
/// `u3[i,j,k]` on the z-face at `((i+½)dx, (j+½)dy, z_face(k))` for
/// k = 0..=nz (bottom wall face included and held at 0; the top face holds
/// the interface normal velocity), and `p` at cell centers.
#[derive(Clone, Debug, PartialEq)]
pub struct StaggeredField3D {
    pub grid: BoxGrid3,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub u3: Vec<f64>,
    pub p: Vec<f64>,
}

impl StaggeredField3D {
    pub fn zeros(grid: BoxGrid3) -> Self {
        StaggeredField3D {
            grid,
            u1: vec![0.0; grid.nx * grid.ny * grid.nz],
            u2: vec![0.0; grid.nx * grid.ny * grid.nz],
            u3: vec![0.0; grid.nx * grid.ny * (grid.nz + 1)],
            p: vec![0.0; grid.ncells()],
        }
    }

    pub fn check_shapes(&self) -> bool {
        let g = &self.grid;
        self.u1.len() == g.nx * g.ny * g.nz
            && self.u2.len() == g.nx * g.ny * g.nz
            && self.u3.len() == g.nx * g.ny * (g.nz + 1)
            && self.p.len() == g.ncells()
    }

    /// Plain (untransformed) MAC divergence at cell centers.
    pub fn divergence(&self) -> Vec<f64> {
        let g = self.grid;
        let (dx, dy, dz) = (g.dx(), g.dy(), g.dz());
        let mut div = vec![0.0; g.ncells()];
        for i in 0..g.nx {
            for j in 0..g.ny {
                for k in 0..g.nz {
                    let d1 = (self.u1[g.idx_wrap(i as isize + 1, j as isize, k)]
                        - self.u1[g.idx(i, j, k)])
                        / dx;
                    let d2 = (self.u2[g.idx_wrap(i as isize, j as isize + 1, k)]
                        - self.u2[g.idx(i, j, k)])
                        / dy;
                    let d3 =
                        (self.u3[g.idx_zface(i, j, k + 1)] - self.u3[g.idx_zface(i, j, k)]) / dz;
                    div[g.idx(i, j, k)] = d1 + d2 + d3;
                }
            }
        }
        div
    }

    /// Velocity interpolated to cell centers.
    pub fn cell_velocity(&self) -> Vec<[f64; 3]> {
        let g = self.grid;
        let mut out = vec![[0.0; 3]; g.ncells()];
        for i in 0..g.nx {
            for j in 0..g.ny {
                for k in 0..g.nz {
                    let c = g.idx(i, j, k);
                    out[c] = [
                        0.5 * (self.u1[c] + self.u1[g.idx_wrap(i as isize + 1, j as isize, k)]),
                        0.5 * (self.u2[c] + self.u2[g.idx_wrap(i as isize, j as isize + 1, k)]),
                        0.5 * (self.u3[g.idx_zface(i, j, k)] + self.u3[g.idx_zface(i, j, k + 1)]),
                    ];
                }
            }
        }
        out
    }

    /// Unweighted kinetic L² norm ( Σ faces |u|² vol )^{1/2} with the top
    /// interface face excluded (it carries shell mass, not fluid mass).
    pub fn norm_l2(&self) -> f64 {
        let g = self.grid;
        let vol = g.cell_vol();
        let mut s = 0.0;
        for &v in &self.u1 {
            s += v * v;
        }
        for &v in &self.u2 {
            s += v * v;
        }
        for i in 0..g.nx {
            for j in 0..g.ny {
                for k in 1..g.nz {
                    let v = self.u3[g.idx_zface(i, j, k)];
                    s += v * v;
                }
            }
        }
        (s * vol).sqrt()
    }
}

/// MAC gradient of a cell field: returns values on (x-faces, y-faces,
/// interior z-faces as a full array with zero boundary levels).
pub fn mac_gradient(grid: BoxGrid3, p: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let g = grid;
    let (dx, dy, dz) = (g.dx(), g.dy(), g.dz());
    let mut g1 = vec![0.0; g.nx * g.ny * g.nz];
    let mut g2 = vec![0.0; g.nx * g.ny * g.nz];
    let mut g3 = vec![0.0; g.nx * g.ny * (g.nz + 1)];
    for i in 0..g.nx {
        for j in 0..g.ny {
            for k in 0..g.nz {
                g1[g.idx(i, j, k)] =
                    (p[g.idx(i, j, k)] - p[g.idx_wrap(i as isize - 1, j as isize, k)]) / dx;
                g2[g.idx(i, j, k)] =
                    (p[g.idx(i, j, k)] - p[g.idx_wrap(i as isize, j as isize - 1, k)]) / dy;
                if k > 0 {
                    g3[g.idx_zface(i, j, k)] = (p[g.idx(i, j, k)] - p[g.idx(i, j, k - 1)]) / dz;
                }
            }
        }
    }
    (g1, g2, g3)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut state = seed;
        (0..n)
            .map(|_| {
                state =
                    state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 33) as f64) / (u32::MAX as f64) - 0.5
            })
            .collect()
    }

    #[test]
    fn div_grad_negative_adjoint() {
        // ⟨div u, p⟩ = −⟨u, grad p⟩ when u·n vanishes on the walls
        let g = BoxGrid3::new(8, 4, 4, 1.0, 1.0, 1.0);
        let mut u = StaggeredField3D::zeros(g);
        u.u1 = rand_vec(u.u1.len(), 3);
        u.u2 = rand_vec(u.u2.len(), 4);
        u.u3 = rand_vec(u.u3.len(), 5);
        for i in 0..g.nx {
            for j in 0..g.ny {
                u.u3[g.idx_zface(i, j, 0)] = 0.0;
                u.u3[g.idx_zface(i, j, g.nz)] = 0.0;
            }
        }
        let p = rand_vec(g.ncells(), 6);
        let div = u.divergence();
        let (g1, g2, g3) = mac_gradient(g, &p);
        let lhs: f64 = div.iter().zip(&p).map(|(a, b)| a * b).sum();
        let mut rhs = 0.0;
        for (a, b) in u.u1.iter().zip(&g1) {
            rhs += a * b;
        }
        for (a, b) in u.u2.iter().zip(&g2) {
            rhs += a * b;
        }
        for (a, b) in u.u3.iter().zip(&g3) {
            rhs += a * b;
        }
        assert!((lhs + rhs).abs() < 1e-12 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
    }
}
