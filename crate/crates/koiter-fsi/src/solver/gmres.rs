//! Restarted GMRES with a right preconditioner (matrix-free operator and
//! preconditioner closures).

/// Outcome of a GMRES solve.
#[derive(Clone, Copy, Debug)]
pub struct GmresStats {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Solves A x = b with right preconditioning: A M⁻¹ y = b, x = M⁻¹ y.
/// `apply_a` and `apply_m` map a slice to a new vector. The relative
/// residual target is `tol`; `x` carries the initial guess.
pub fn gmres(
    apply_a: &dyn Fn(&[f64]) -> Vec<f64>,
    apply_m: &dyn Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    restart: usize,
    max_iters: usize,
) -> GmresStats {
    let n = b.len();
    let bnorm = norm(b).max(1e-300);
    let mut total_iters = 0;
    loop {
        let ax = apply_a(x);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        if beta <= tol * bnorm {
            return GmresStats { iterations: total_iters, residual: beta / bnorm, converged: true };
        }
        if total_iters >= max_iters {
            return GmresStats { iterations: total_iters, residual: beta / bnorm, converged: false };
        }
        for v in &mut r {
            *v /= beta;
        }
        let m = restart.min(max_iters - total_iters);
        let mut basis: Vec<Vec<f64>> = vec![r];
        // Hessenberg stored column-wise, with Givens rotations applied on the fly
        let mut h = vec![vec![0.0; 0]; 0];
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![beta];
        let mut k_used = 0;
        for k in 0..m {
            total_iters += 1;
            let z = apply_m(&basis[k]);
            let mut w = apply_a(&z);
            let mut hk = vec![0.0; k + 2];
            for (i, v) in basis.iter().enumerate() {
                let d = dot(&w, v);
                hk[i] = d;
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= d * vi;
                }
            }
            // one re-orthogonalization pass for robustness
            for (i, v) in basis.iter().enumerate() {
                let d = dot(&w, v);
                hk[i] += d;
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= d * vi;
                }
            }
            let wn = norm(&w);
            hk[k + 1] = wn;
            // apply existing rotations
            for i in 0..k {
                let t = cs[i] * hk[i] + sn[i] * hk[i + 1];
                hk[i + 1] = -sn[i] * hk[i] + cs[i] * hk[i + 1];
                hk[i] = t;
            }
            let denom = (hk[k] * hk[k] + hk[k + 1] * hk[k + 1]).sqrt();
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (hk[k] / denom, hk[k + 1] / denom) };
            cs.push(c);
            sn.push(s);
            hk[k] = denom;
            hk[k + 1] = 0.0;
            g.push(-s * g[k]);
            g[k] *= c;
            h.push(hk);
            k_used = k + 1;
            let res = g[k + 1].abs();
            if wn > 0.0 {
                let mut v = w;
                for vi in &mut v {
                    *vi /= wn;
                }
                basis.push(v);
            }
            if res <= tol * bnorm || wn == 0.0 || total_iters >= max_iters {
                break;
            }
        }
        // back-substitute y from the triangularized Hessenberg
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[j][i] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut update = vec![0.0; n];
        for (j, &yj) in y.iter().enumerate() {
            for (ui, vi) in update.iter_mut().zip(&basis[j]) {
                *ui += yj * vi;
            }
        }
        let mz = apply_m(&update);
        for (xi, zi) in x.iter_mut().zip(&mz) {
            *xi += zi;
        }
        let ax = apply_a(x);
        let res = b
            .iter()
            .zip(&ax)
            .map(|(bi, ai)| (bi - ai) * (bi - ai))
            .sum::<f64>()
            .sqrt();
        if res <= tol * bnorm {
            return GmresStats { iterations: total_iters, residual: res / bnorm, converged: true };
        }
        if total_iters >= max_iters {
            return GmresStats { iterations: total_iters, residual: res / bnorm, converged: false };
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_nonsymmetric_system() {
        // shifted tridiagonal with skew part
        let n = 60;
        let apply = |x: &[f64]| -> Vec<f64> {
            let mut y = vec![0.0; n];
            for i in 0..n {
                y[i] = 4.0 * x[i];
                if i > 0 {
                    y[i] += -1.3 * x[i - 1];
                }
                if i + 1 < n {
                    y[i] += -0.7 * x[i + 1];
                }
            }
            y
        };
        let ident = |x: &[f64]| x.to_vec();
        let xs: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
        let b = apply(&xs);
        let mut x = vec![0.0; n];
        let stats = gmres(&apply, &ident, &b, &mut x, 1e-12, 30, 500);
        assert!(stats.converged, "{stats:?}");
        for (a, c) in x.iter().zip(&xs) {
            assert!((a - c).abs() < 1e-9);
        }
    }

    #[test]
    fn preconditioner_accelerates_exactly() {
        // with M = A the solve converges in one iteration
        let n = 40;
        let diag: Vec<f64> = (0..n).map(|i| 2.0 + (i % 5) as f64).collect();
        let d2 = diag.clone();
        let apply = move |x: &[f64]| -> Vec<f64> {
            x.iter().zip(&diag).map(|(v, d)| v * d).collect()
        };
        let minv = move |x: &[f64]| -> Vec<f64> {
            x.iter().zip(&d2).map(|(v, d)| v / d).collect()
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        let stats = gmres(&apply, &minv, &b, &mut x, 1e-13, 10, 100);
        assert!(stats.converged && stats.iterations <= 2, "{stats:?}");
    }
}
