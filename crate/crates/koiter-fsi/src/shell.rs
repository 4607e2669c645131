//! Nonlinear Koiter shell energy for a normal displacement η: change-of-
//! metric and change-of-curvature tensors in closed form, the elasticity
//! tensor 𝒜, exact Fréchet linearizations, and the Simpson-exact discrete
//! derivative that makes the time-discrete elastic energy identity hold by
//! algebra. Residuals are assembled as L²(ω) representatives by moving
//! derivatives onto the coefficients spectrally.

use crate::discrete::spectral::Spectral2D;
use crate::discrete::{PeriodicGrid2D, ScalarField2D};
use crate::geometry::{add, cross, dot, scale3, ReferenceSurface, SurfaceJet};
use crate::real::Real;

/// Material and regularization parameters of the shell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShellParams<T: Real> {
    /// Shell thickness h.
    pub thickness: T,
    /// First Lamé parameter λ.
    pub lambda: T,
    /// Second Lamé parameter (shear modulus) μ.
    pub mu: T,
    /// Coefficient ε of the (ε/2)‖∇³η‖² regularization.
    pub epsilon: T,
}

impl<T: Real> ShellParams<T> {
    pub fn new(thickness: T, lambda: T, mu: T, epsilon: T) -> Self {
        assert!(thickness > T::zero() && mu > T::zero() && lambda >= T::zero());
        assert!(epsilon >= T::zero());
        ShellParams { thickness, lambda, mu, epsilon }
    }

    /// Plane-stress combination c₁ = 4λμ/(λ+2μ) in 𝒜E = c₁(A:E)A + 4μ AEA.
    pub fn c1(&self) -> T {
        T::of(4.0) * self.lambda * self.mu / (self.lambda + T::of(2.0) * self.mu)
    }
}

/// Symmetric 2×2 tensor field; component order (11, 12, 22).
#[derive(Clone, Debug, PartialEq)]
pub struct SymTensor2Field<T: Real> {
    pub grid: PeriodicGrid2D<T>,
    pub comps: [Vec<T>; 3],
}

/// Contraction weight of each stored component (the 12-entry counts twice).
pub const COMP_WEIGHT: [f64; 3] = [1.0, 2.0, 1.0];

impl<T: Real> SymTensor2Field<T> {
    pub fn zeros(grid: PeriodicGrid2D<T>) -> Self {
        SymTensor2Field {
            grid,
            comps: [vec![T::zero(); grid.len()], vec![T::zero(); grid.len()], vec![T::zero(); grid.len()]],
        }
    }

    /// Pointwise full contraction Σ_{αβ} S_{αβ} E_{αβ} at node `i`.
    #[inline]
    pub fn contract_at(&self, other: &Self, i: usize) -> T {
        let mut s = T::zero();
        for c in 0..3 {
            s += T::of(COMP_WEIGHT[c]) * self.comps[c][i] * other.comps[c][i];
        }
        s
    }

    pub fn axpy(&self, a: T, other: &Self) -> Self {
        assert_eq!(self.grid, other.grid);
        let mut out = self.clone();
        for c in 0..3 {
            for (o, &v) in out.comps[c].iter_mut().zip(&other.comps[c]) {
                *o += a * v;
            }
        }
        out
    }

    pub fn norm_max(&self) -> T {
        self.comps
            .iter()
            .flat_map(|v| v.iter())
            .fold(T::zero(), |m, &v| m.max(v.abs()))
    }
}

/// η together with its first and second spectral derivatives.
#[derive(Clone, Debug)]
pub struct DisplacementJet<T: Real> {
    pub eta: ScalarField2D<T>,
    pub d1: ScalarField2D<T>,
    pub d2: ScalarField2D<T>,
    pub d11: ScalarField2D<T>,
    pub d12: ScalarField2D<T>,
    pub d22: ScalarField2D<T>,
}

/// Elastic energy breakdown.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KoiterEnergy<T: Real> {
    pub membrane: T,
    pub bending: T,
    pub regularization: T,
}

impl<T: Real> KoiterEnergy<T> {
    pub fn total(&self) -> T {
        self.membrane + self.bending + self.regularization
    }
}

/// First-order operator ξ ↦ L ξ with tensor values:
/// (Lξ)_c = c0_c ξ + c1_{c,γ} ∂_γ ξ + hess_c ∂²_c ξ for component c.
///
/// Both G′(η) and R′(η) have this shape; Simpson averaging acts linearly on
/// the coefficient fields.
#[derive(Clone, Debug)]
pub struct TensorLinearization<T: Real> {
    pub grid: PeriodicGrid2D<T>,
    pub c0: [Vec<T>; 3],
    pub c1: [[Vec<T>; 2]; 3],
    pub hess: Option<[Vec<T>; 3]>,
}

impl<T: Real> TensorLinearization<T> {
    fn zeros(grid: PeriodicGrid2D<T>, with_hess: bool) -> Self {
        let z = || vec![T::zero(); grid.len()];
        TensorLinearization {
            grid,
            c0: [z(), z(), z()],
            c1: [[z(), z()], [z(), z()], [z(), z()]],
            hess: if with_hess { Some([z(), z(), z()]) } else { None },
        }
    }

    /// Applies the linearization to a direction ξ (given as its jet).
    pub fn apply(&self, xi: &DisplacementJet<T>) -> SymTensor2Field<T> {
        let mut out = SymTensor2Field::zeros(self.grid);
        let hess_fields = [&xi.d11, &xi.d12, &xi.d22];
        for c in 0..3 {
            for i in 0..self.grid.len() {
                let mut v = self.c0[c][i] * xi.eta.values[i]
                    + self.c1[c][0][i] * xi.d1.values[i]
                    + self.c1[c][1][i] * xi.d2.values[i];
                if let Some(h) = &self.hess {
                    v += h[c][i] * hess_fields[c].values[i];
                }
                out.comps[c][i] = v;
            }
        }
        out
    }

    /// Weighted combination Σ w_j L_j of linearizations with the same shape.
    pub fn combine(items: &[(T, &TensorLinearization<T>)]) -> Self {
        assert!(!items.is_empty());
        let grid = items[0].1.grid;
        let with_hess = items[0].1.hess.is_some();
        let mut out = Self::zeros(grid, with_hess);
        for &(w, lin) in items {
            assert_eq!(lin.grid, grid);
            assert_eq!(lin.hess.is_some(), with_hess);
            for c in 0..3 {
                for i in 0..grid.len() {
                    out.c0[c][i] += w * lin.c0[c][i];
                    out.c1[c][0][i] += w * lin.c1[c][0][i];
                    out.c1[c][1][i] += w * lin.c1[c][1][i];
                }
                if let (Some(o), Some(h)) = (&mut out.hess, &lin.hess) {
                    for i in 0..grid.len() {
                        o[c][i] += w * h[c][i];
                    }
                }
            }
        }
        out
    }
}

/// Simpson quadrature weights (endpoint, midpoint, endpoint) on the segment
/// between two shell states; exact for the cubic state dependence of R.
pub fn simpson_weights<T: Real>() -> (T, T, T) {
    (T::of(1.0 / 6.0), T::of(4.0 / 6.0), T::of(1.0 / 6.0))
}

/// Koiter shell model over a fixed reference surface and parameter grid.
pub struct ShellModel<T: Real> {
    pub surface: ReferenceSurface<T>,
    pub grid: PeriodicGrid2D<T>,
    pub params: ShellParams<T>,
    pub spectral: Spectral2D<T>,
    jets: Vec<SurfaceJet<T>>,
}

impl<T: Real> ShellModel<T> {
    pub fn new(surface: ReferenceSurface<T>, grid: PeriodicGrid2D<T>, params: ShellParams<T>) -> Self {
        let tol = T::of(1e-12);
        assert!((grid.len1 - surface.len.0).abs() <= tol * (T::one() + surface.len.0.abs()));
        assert!((grid.len2 - surface.len.1).abs() <= tol * (T::one() + surface.len.1.abs()));
        let mut jets = Vec::with_capacity(grid.len());
        for i1 in 0..grid.n1 {
            for i2 in 0..grid.n2 {
                jets.push(surface.jet(grid.node(i1, i2)));
            }
        }
        let spectral = Spectral2D::new(grid);
        ShellModel { surface, grid, params, spectral, jets }
    }

    pub fn jet_at(&self, i: usize) -> &SurfaceJet<T> {
        &self.jets[i]
    }

    /// Spectral jet of a displacement field.
    pub fn displacement_jet(&self, eta: &ScalarField2D<T>) -> DisplacementJet<T> {
        assert_eq!(eta.grid, self.grid);
        DisplacementJet {
            eta: eta.clone(),
            d1: self.spectral.derivative(eta, (1, 0)),
            d2: self.spectral.derivative(eta, (0, 1)),
            d11: self.spectral.derivative(eta, (2, 0)),
            d12: self.spectral.derivative(eta, (1, 1)),
            d22: self.spectral.derivative(eta, (0, 2)),
        }
    }

    /// Change-of-metric tensor
    /// G(η)_{αβ} = ∂_αη ∂_βη + η(a_α·∂_βn + a_β·∂_αn) + η² ∂_αn·∂_βn.
    pub fn metric_change(&self, j: &DisplacementJet<T>) -> SymTensor2Field<T> {
        let mut out = SymTensor2Field::zeros(self.grid);
        for i in 0..self.grid.len() {
            let f = &self.jets[i].frame;
            let e = j.eta.values[i];
            let g = [j.d1.values[i], j.d2.values[i]];
            let a = [f.a1, f.a2];
            let dn = [f.dn1, f.dn2];
            for (c, &(al, be)) in COMP_INDEX.iter().enumerate() {
                out.comps[c][i] = g[al] * g[be]
                    + e * (dot(a[al], dn[be]) + dot(a[be], dn[al]))
                    + e * e * dot(dn[al], dn[be]);
            }
        }
        out
    }

    /// The deformed (unnormalized) normal
    /// N = |a₁×a₂| n + ∂₂η(a₁×n + η ∂₁n×n) + ∂₁η(n×a₂ + η n×∂₂n)
    ///   + η(a₁×∂₂n + ∂₁n×a₂) + η²(∂₁n×∂₂n)
    /// at node `i`.
    pub fn deformed_normal(&self, j: &DisplacementJet<T>, i: usize) -> [T; 3] {
        let f = &self.jets[i].frame;
        let e = j.eta.values[i];
        let (g1, g2) = (j.d1.values[i], j.d2.values[i]);
        let mut n = scale3(f.ds, f.n);
        n = add(n, scale3(g2, add(cross(f.a1, f.n), scale3(e, cross(f.dn1, f.n)))));
        n = add(n, scale3(g1, add(cross(f.n, f.a2), scale3(e, cross(f.n, f.dn2)))));
        n = add(n, scale3(e, add(cross(f.a1, f.dn2), cross(f.dn1, f.a2))));
        n = add(n, scale3(e * e, cross(f.dn1, f.dn2)));
        n
    }

    /// T_{αβ}(η) = ∂²_{αβ}φ + ∂²_{αβ}η n + ∂_αη ∂_βn + ∂_βη ∂_αn + η ∂²_{αβ}n
    /// at node `i` for stored component `c`.
    fn t_tensor(&self, j: &DisplacementJet<T>, i: usize, c: usize) -> [T; 3] {
        let jet = &self.jets[i];
        let f = &jet.frame;
        let (al, be) = COMP_INDEX[c];
        let g = [j.d1.values[i], j.d2.values[i]];
        let dn = [f.dn1, f.dn2];
        let hess = [j.d11.values[i], j.d12.values[i], j.d22.values[i]][c];
        let mut t = add(jet.d2phi[c], scale3(hess, f.n));
        t = add(t, scale3(g[al], dn[be]));
        t = add(t, scale3(g[be], dn[al]));
        add(t, scale3(j.eta.values[i], jet.d2n[c]))
    }

    /// Change-of-curvature tensor
    /// R(η)_{αβ} = T_{αβ}(η)·N(η)/|a₁×a₂| − ∂²_{αβ}φ·n.
    pub fn curvature_change(&self, j: &DisplacementJet<T>) -> SymTensor2Field<T> {
        let mut out = SymTensor2Field::zeros(self.grid);
        for i in 0..self.grid.len() {
            let jet = &self.jets[i];
            let nn = self.deformed_normal(j, i);
            for c in 0..3 {
                out.comps[c][i] = dot(self.t_tensor(j, i, c), nn) / jet.frame.ds
                    - dot(jet.d2phi[c], jet.frame.n);
            }
        }
        out
    }

    /// The coefficient γ̃(η) = n·N(η)/|a₁×a₂| that multiplies ∂²_{αβ}η inside
    /// R_{αβ}; its positivity is the coercivity condition of the bending term.
    pub fn gamma_tilde(&self, j: &DisplacementJet<T>) -> ScalarField2D<T> {
        let mut out = ScalarField2D::zeros(self.grid);
        for i in 0..self.grid.len() {
            let f = &self.jets[i].frame;
            out.values[i] = dot(f.n, self.deformed_normal(j, i)) / f.ds;
        }
        out
    }

    /// 𝒜E = c₁(A:E)A + 4μ AEA, with A the contravariant metric of the
    /// reference surface. Input covariant, output contravariant.
    pub fn elasticity_apply(&self, e: &SymTensor2Field<T>) -> SymTensor2Field<T> {
        let c1 = self.params.c1();
        let four_mu = T::of(4.0) * self.params.mu;
        let mut out = SymTensor2Field::zeros(self.grid);
        for i in 0..self.grid.len() {
            let a = self.jets[i].a_contra;
            let em = [[e.comps[0][i], e.comps[1][i]], [e.comps[1][i], e.comps[2][i]]];
            let tr = a[0][0] * em[0][0] + T::of(2.0) * a[0][1] * em[0][1] + a[1][1] * em[1][1];
            // (A E A)^{αβ}
            let mut aea = [[T::zero(); 2]; 2];
            for al in 0..2 {
                for be in 0..2 {
                    let mut s = T::zero();
                    for g in 0..2 {
                        for d in 0..2 {
                            s += a[al][g] * em[g][d] * a[d][be];
                        }
                    }
                    aea[al][be] = s;
                }
            }
            out.comps[0][i] = c1 * tr * a[0][0] + four_mu * aea[0][0];
            out.comps[1][i] = c1 * tr * a[0][1] + four_mu * aea[0][1];
            out.comps[2][i] = c1 * tr * a[1][1] + four_mu * aea[1][1];
        }
        out
    }

    /// Elastic energy
    /// (h/4)∫𝒜G:G dS + (h³/48)∫𝒜R:R dS + (ε/2)‖∇³η‖²_{L²(ω)}.
    pub fn koiter_energy(&self, eta: &ScalarField2D<T>) -> KoiterEnergy<T> {
        let j = self.displacement_jet(eta);
        let g = self.metric_change(&j);
        let r = self.curvature_change(&j);
        let ag = self.elasticity_apply(&g);
        let ar = self.elasticity_apply(&r);
        let w = self.grid.node_weight();
        let h = self.params.thickness;
        let mut mem = T::zero();
        let mut ben = T::zero();
        for i in 0..self.grid.len() {
            let ds = self.jets[i].frame.ds;
            mem += ag.contract_at(&g, i) * ds;
            ben += ar.contract_at(&r, i) * ds;
        }
        KoiterEnergy {
            membrane: mem * w * h / T::of(4.0),
            bending: ben * w * h * h * h / T::of(48.0),
            regularization: self.spectral.grad3_norm_sq(&j.eta) * self.params.epsilon / T::of(2.0),
        }
    }

    /// Exact Fréchet derivative G′(η): coefficients of ξ and ∂_γξ.
    pub fn metric_linearization(&self, j: &DisplacementJet<T>) -> TensorLinearization<T> {
        let mut lin = TensorLinearization::zeros(self.grid, false);
        for i in 0..self.grid.len() {
            let f = &self.jets[i].frame;
            let e = j.eta.values[i];
            let g = [j.d1.values[i], j.d2.values[i]];
            let a = [f.a1, f.a2];
            let dn = [f.dn1, f.dn2];
            for (c, &(al, be)) in COMP_INDEX.iter().enumerate() {
                lin.c0[c][i] = dot(a[al], dn[be]) + dot(a[be], dn[al])
                    + T::of(2.0) * e * dot(dn[al], dn[be]);
                // ∂_αη ∂_βξ + ∂_βη ∂_αξ
                lin.c1[c][al][i] += g[be];
                lin.c1[c][be][i] += g[al];
            }
        }
        lin
    }

    /// Exact Fréchet derivative R′(η) = (T′(ξ)·N(η) + T(η)·N′(η)ξ)/|a₁×a₂|.
    pub fn curvature_linearization(&self, j: &DisplacementJet<T>) -> TensorLinearization<T> {
        let mut lin = TensorLinearization::zeros(self.grid, true);
        let hess = lin.hess.as_mut().unwrap();
        for i in 0..self.grid.len() {
            let jet = &self.jets[i];
            let f = &jet.frame;
            let e = j.eta.values[i];
            let g = [j.d1.values[i], j.d2.values[i]];
            let nn = self.deformed_normal(j, i);
            let dn = [f.dn1, f.dn2];
            // ∂N/∂(∂₁ξ), ∂N/∂(∂₂ξ), ∂N/∂ξ
            let n_d1 = add(cross(f.n, f.a2), scale3(e, cross(f.n, f.dn2)));
            let n_d2 = add(cross(f.a1, f.n), scale3(e, cross(f.dn1, f.n)));
            let n_c0 = add(
                add(
                    scale3(g[1], cross(f.dn1, f.n)),
                    scale3(g[0], cross(f.n, f.dn2)),
                ),
                add(
                    add(cross(f.a1, f.dn2), cross(f.dn1, f.a2)),
                    scale3(T::of(2.0) * e, cross(f.dn1, f.dn2)),
                ),
            );
            let gtil = dot(f.n, nn) / f.ds;
            for (c, &(al, be)) in COMP_INDEX.iter().enumerate() {
                let t = self.t_tensor(j, i, c);
                hess[c][i] = gtil;
                lin.c1[c][al][i] += dot(dn[be], nn) / f.ds;
                lin.c1[c][be][i] += dot(dn[al], nn) / f.ds;
                lin.c1[c][0][i] += dot(t, n_d1) / f.ds;
                lin.c1[c][1][i] += dot(t, n_d2) / f.ds;
                lin.c0[c][i] = (dot(jet.d2n[c], nn) + dot(t, n_c0)) / f.ds;
            }
        }
        lin
    }

    /// Simpson-averaged linearizations between two states (exact discrete
    /// derivatives: applying them to η_b − η_a reproduces G(η_b) − G(η_a)
    /// and R(η_b) − R(η_a) pointwise).
    pub fn simpson_linearizations(
        &self,
        eta_a: &ScalarField2D<T>,
        eta_b: &ScalarField2D<T>,
    ) -> (TensorLinearization<T>, TensorLinearization<T>) {
        self.simpson_linearizations_with_weights(eta_a, eta_b, simpson_weights())
    }

    /// Same with explicit quadrature weights (the validation fault hook
    /// perturbs these to demonstrate loss of the discrete energy identity).
    pub fn simpson_linearizations_with_weights(
        &self,
        eta_a: &ScalarField2D<T>,
        eta_b: &ScalarField2D<T>,
        w: (T, T, T),
    ) -> (TensorLinearization<T>, TensorLinearization<T>) {
        let mid = eta_a.axpy(T::one(), eta_b).scale(T::of(0.5));
        let ja = self.displacement_jet(eta_a);
        let jm = self.displacement_jet(&mid);
        let jb = self.displacement_jet(eta_b);
        let gm = TensorLinearization::combine(&[
            (w.0, &self.metric_linearization(&ja)),
            (w.1, &self.metric_linearization(&jm)),
            (w.2, &self.metric_linearization(&jb)),
        ]);
        let cv = TensorLinearization::combine(&[
            (w.0, &self.curvature_linearization(&ja)),
            (w.1, &self.curvature_linearization(&jm)),
            (w.2, &self.curvature_linearization(&jb)),
        ]);
        (gm, cv)
    }

    /// L²(ω) representative of the form ξ ↦ Σ_c w_c ∫ S_c (Lξ)_c dy:
    /// r = Σ_c w_c [ S_c c0_c − ∂_γ(S_c c1_{c,γ}) + ∂²_c(S_c hess_c) ].
    /// The stress S must already include the surface measure and physical
    /// prefactors.
    pub fn adjoint_residual(
        &self,
        stress: &SymTensor2Field<T>,
        lin: &TensorLinearization<T>,
    ) -> ScalarField2D<T> {
        let grid = self.grid;
        let n = grid.len();
        let mut r = ScalarField2D::zeros(grid);
        let mut flux = [vec![T::zero(); n], vec![T::zero(); n]];
        for c in 0..3 {
            let wc = T::of(COMP_WEIGHT[c]);
            for i in 0..n {
                let s = wc * stress.comps[c][i];
                r.values[i] += s * lin.c0[c][i];
                flux[0][i] += s * lin.c1[c][0][i];
                flux[1][i] += s * lin.c1[c][1][i];
            }
            if let Some(h) = &lin.hess {
                let mut prod = ScalarField2D::zeros(grid);
                for i in 0..n {
                    prod.values[i] = wc * stress.comps[c][i] * h[c][i];
                }
                let order = [(2, 0), (1, 1), (0, 2)][c];
                let dd = self.spectral.derivative(&prod, order);
                for i in 0..n {
                    r.values[i] += dd.values[i];
                }
            }
        }
        for (g, order) in flux.into_iter().zip([(1usize, 0usize), (0, 1)]) {
            let f = ScalarField2D::from_values(grid, g);
            let df = self.spectral.derivative(&f, order);
            for i in 0..n {
                r.values[i] -= df.values[i];
            }
        }
        r
    }

    /// Membrane stress (h/2)·𝒜G(η)·dS and bending stress (h³/24)·𝒜R(η)·dS.
    /// Membrane and bending stresses with the thickness factors and surface
    /// measure included, ready for [`adjoint_residual`](Self::adjoint_residual).
    pub fn scaled_stresses(
        &self,
        j: &DisplacementJet<T>,
    ) -> (SymTensor2Field<T>, SymTensor2Field<T>) {
        self.stresses(j)
    }

    fn stresses(&self, j: &DisplacementJet<T>) -> (SymTensor2Field<T>, SymTensor2Field<T>) {
        let g = self.metric_change(j);
        let r = self.curvature_change(j);
        let mut ag = self.elasticity_apply(&g);
        let mut ar = self.elasticity_apply(&r);
        let h = self.params.thickness;
        let fm = h / T::of(2.0);
        let fb = h * h * h / T::of(24.0);
        for i in 0..self.grid.len() {
            let ds = self.jets[i].frame.ds;
            for c in 0..3 {
                ag.comps[c][i] *= fm * ds;
                ar.comps[c][i] *= fb * ds;
            }
        }
        (ag, ar)
    }

    /// Static elastic residual: ⟨r, ξ⟩_{L²(ω)} =
    /// (h/2)∫𝒜G:G′(η)ξ dS + (h³/24)∫𝒜R:R′(η)ξ dS + ε⟨∇³η, ∇³ξ⟩.
    pub fn elastic_residual(&self, eta: &ScalarField2D<T>) -> ScalarField2D<T> {
        let j = self.displacement_jet(eta);
        let (sm, sb) = self.stresses(&j);
        let mut r = self.adjoint_residual(&sm, &self.metric_linearization(&j));
        let rb = self.adjoint_residual(&sb, &self.curvature_linearization(&j));
        let re = self.spectral.grad3_pairing_residual(eta);
        for i in 0..self.grid.len() {
            r.values[i] += rb.values[i] + self.params.epsilon * re.values[i];
        }
        r
    }

    /// Time-discrete elastic residual of the structure sub-step: stresses at
    /// the new state, linearizations Simpson-averaged over the step. Satisfies
    /// ⟨r, η_new − η_old⟩ = E(η_new) − E(η_old) + D_num(η_old, η_new)
    /// with the nonnegative dissipation of [`numerical_dissipation`](Self::numerical_dissipation).
    pub fn residual_step(
        &self,
        eta_new: &ScalarField2D<T>,
        eta_old: &ScalarField2D<T>,
    ) -> ScalarField2D<T> {
        self.residual_step_with_weights(eta_new, eta_old, simpson_weights())
    }

    pub fn residual_step_with_weights(
        &self,
        eta_new: &ScalarField2D<T>,
        eta_old: &ScalarField2D<T>,
        w: (T, T, T),
    ) -> ScalarField2D<T> {
        let jn = self.displacement_jet(eta_new);
        let (sm, sb) = self.stresses(&jn);
        let (lg, lr) = self.simpson_linearizations_with_weights(eta_old, eta_new, w);
        let mut r = self.adjoint_residual(&sm, &lg);
        let rb = self.adjoint_residual(&sb, &lr);
        let re = self.spectral.grad3_pairing_residual(eta_new);
        for i in 0..self.grid.len() {
            r.values[i] += rb.values[i] + self.params.epsilon * re.values[i];
        }
        r
    }

    /// Nonnegative numerical dissipation of one structure step:
    /// (h/4)∫𝒜ΔG:ΔG dS + (h³/48)∫𝒜ΔR:ΔR dS + (ε/2)‖∇³Δη‖².
    pub fn numerical_dissipation(
        &self,
        eta_old: &ScalarField2D<T>,
        eta_new: &ScalarField2D<T>,
    ) -> T {
        let jo = self.displacement_jet(eta_old);
        let jn = self.displacement_jet(eta_new);
        let dg = self.metric_change(&jn).axpy(-T::one(), &self.metric_change(&jo));
        let dr = self.curvature_change(&jn).axpy(-T::one(), &self.curvature_change(&jo));
        let adg = self.elasticity_apply(&dg);
        let adr = self.elasticity_apply(&dr);
        let w = self.grid.node_weight();
        let h = self.params.thickness;
        let mut mem = T::zero();
        let mut ben = T::zero();
        for i in 0..self.grid.len() {
            let ds = self.jets[i].frame.ds;
            mem += adg.contract_at(&dg, i) * ds;
            ben += adr.contract_at(&dr, i) * ds;
        }
        let deta = eta_new.axpy(-T::one(), eta_old);
        mem * w * h / T::of(4.0)
            + ben * w * h * h * h / T::of(48.0)
            + self.spectral.grad3_norm_sq(&deta) * self.params.epsilon / T::of(2.0)
    }

    /// Weak form value Σ_c w_c ∫ S_c (Lξ)_c dy for a given direction ξ
    /// (reference implementation for duality tests and diagnostics).
    pub fn form_value(
        &self,
        stress: &SymTensor2Field<T>,
        lin: &TensorLinearization<T>,
        xi: &DisplacementJet<T>,
    ) -> T {
        let applied = lin.apply(xi);
        let w = self.grid.node_weight();
        let mut s = T::zero();
        for i in 0..self.grid.len() {
            s += stress.contract_at(&applied, i);
        }
        s * w
    }
}

/// Stored component → index pair (α, β).
const COMP_INDEX: [(usize, usize); 3] = [(0, 0), (0, 1), (1, 1)];
