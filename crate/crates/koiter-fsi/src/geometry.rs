//! Reference-surface parameterizations, tubular coordinates, the collar
//! indicator σ_κ, the ALE maps ψ_η / Φ and the coercivity quantity γ(η).

use thiserror::Error;

use crate::discrete::{FieldInterp, PeriodicGrid2D, ScalarField2D};
use crate::real::Real;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("point lies outside the tubular neighborhood (s = {s})")]
    OutOfCollar { s: f64 },
    #[error(
        "displacement violates the collar bounds: range [{min}, {max}] not inside ({lo}, {hi})"
    )]
    DisplacementOutOfRange { min: f64, max: f64, lo: f64, hi: f64 },
}

/// Sentinel used to store an unbounded outer tubular range β(Ω) = +∞.
pub const BETA_UNBOUNDED: f64 = 1e300;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SurfaceKind {
    FlatChannel,
    Cylinder,
}

/// Reference geometry with its frame fields and tubular-coordinate bounds.
///
/// * `FlatChannel`: Ω = ω×(−d, 0), boundary surface φ(y) = (y₁, y₂, 0) with
///   ω the flat torus of periods `len`; α(Ω) = −d, β(Ω) = +∞.
/// * `Cylinder`: φ(θ, z) = (R cos θ, R sin θ, z) with θ ∈ (0, 2π) and z
///   periodic of period `height`; α(Ω) = −R, β(Ω) = +∞.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceSurface<T: Real> {
    pub kind: SurfaceKind,
    /// Cylinder radius R (unused for the flat channel).
    pub radius: T,
    /// Channel depth d (unused for the cylinder).
    pub depth: T,
    /// Periods of the parameter domain ω.
    pub len: (T, T),
}

impl<T: Real> ReferenceSurface<T> {
    pub fn flat_channel(depth: T) -> Self {
        Self::flat_channel_with_lengths(depth, T::one(), T::one())
    }

    pub fn flat_channel_with_lengths(depth: T, len1: T, len2: T) -> Self {
        assert!(depth > T::zero());
        ReferenceSurface {
            kind: SurfaceKind::FlatChannel,
            radius: T::zero(),
            depth,
            len: (len1, len2),
        }
    }

    pub fn cylinder(radius: T, height: T) -> Self {
        assert!(radius > T::zero() && height > T::zero());
        ReferenceSurface {
            kind: SurfaceKind::Cylinder,
            radius,
            depth: T::zero(),
            len: (T::of(2.0) * T::PI(), height),
        }
    }

    /// Inner tubular bound α(Ω).
    pub fn alpha_omega(&self) -> T {
        match self.kind {
            SurfaceKind::FlatChannel => -self.depth,
            SurfaceKind::Cylinder => -self.radius,
        }
    }

    /// Outer tubular bound β(Ω) (stored as a large sentinel for +∞).
    pub fn beta_omega(&self) -> T {
        T::of(BETA_UNBOUNDED)
    }

    /// Grid over ω with this surface's periods.
    pub fn grid(&self, n1: usize, n2: usize) -> PeriodicGrid2D<T> {
        PeriodicGrid2D::with_lengths(n1, n2, self.len.0, self.len.1)
    }

    /// Surface parameterization φ(y).
    pub fn phi(&self, y: (T, T)) -> [T; 3] {
        match self.kind {
            SurfaceKind::FlatChannel => [y.0, y.1, T::zero()],
            SurfaceKind::Cylinder => {
                let r = self.radius;
                [r * y.0.cos(), r * y.0.sin(), y.1]
            }
        }
    }

    /// First-order frame at y.
    pub fn frame(&self, y: (T, T)) -> Frame<T> {
        self.jet(y).frame
    }

    /// Frame plus the second derivatives of φ and n and derived curvature
    /// scalars, as needed by the shell tensors.
    pub fn jet(&self, y: (T, T)) -> SurfaceJet<T> {
        let zero3 = [T::zero(); 3];
        match self.kind {
            SurfaceKind::FlatChannel => {
                let frame = Frame {
                    a1: [T::one(), T::zero(), T::zero()],
                    a2: [T::zero(), T::one(), T::zero()],
                    n: [T::zero(), T::zero(), T::one()],
                    ds: T::one(),
                    dn1: zero3,
                    dn2: zero3,
                };
                SurfaceJet::from_parts(
                    frame,
                    [zero3; 3],
                    [zero3; 3],
                    [[T::one(), T::zero()], [T::zero(), T::one()]],
                )
            }
            SurfaceKind::Cylinder => {
                let r = self.radius;
                let (st, ct) = (y.0.sin(), y.0.cos());
                let frame = Frame {
                    a1: [-r * st, r * ct, T::zero()],
                    a2: [T::zero(), T::zero(), T::one()],
                    n: [ct, st, T::zero()],
                    ds: r,
                    dn1: [-st, ct, T::zero()],
                    dn2: zero3,
                };
                let d2phi = [[-r * ct, -r * st, T::zero()], zero3, zero3];
                let d2n = [[-ct, -st, T::zero()], zero3, zero3];
                let a_contra = [[T::one() / (r * r), T::zero()], [T::zero(), T::one()]];
                SurfaceJet::from_parts(frame, d2phi, d2n, a_contra)
            }
        }
    }
}

/// Tangents, normal, area element and normal derivatives at a point of the
/// reference surface.
#[derive(Clone, Copy, Debug)]
pub struct Frame<T: Real> {
    pub a1: [T; 3],
    pub a2: [T; 3],
    pub n: [T; 3],
    /// |a1 × a2|
    pub ds: T,
    pub dn1: [T; 3],
    pub dn2: [T; 3],
}

/// Frame extended with second derivatives and the curvature scalars that
/// enter γ and the volume element of the tubular chart.
#[derive(Clone, Copy, Debug)]
pub struct SurfaceJet<T: Real> {
    pub frame: Frame<T>,
    /// ∂²φ in component order (11, 12, 22).
    pub d2phi: [[T; 3]; 3],
    /// ∂²n in component order (11, 12, 22).
    pub d2n: [[T; 3]; 3],
    /// Contravariant metric A (inverse of the first fundamental form).
    pub a_contra: [[T; 2]; 2],
    /// Linear γ coefficient n·(a1×∂2n + ∂1n×a2)/dS; equals div n(p).
    pub cbar: T,
    /// Quadratic γ coefficient n·(∂1n×∂2n)/dS.
    pub dbar: T,
}

impl<T: Real> SurfaceJet<T> {
    pub fn from_parts(
        frame: Frame<T>,
        d2phi: [[T; 3]; 3],
        d2n: [[T; 3]; 3],
        a_contra: [[T; 2]; 2],
    ) -> Self {
        let cbar = dot(
            frame.n,
            add(cross(frame.a1, frame.dn2), cross(frame.dn1, frame.a2)),
        ) / frame.ds;
        let dbar = dot(frame.n, cross(frame.dn1, frame.dn2)) / frame.ds;
        SurfaceJet { frame, d2phi, d2n, a_contra, cbar, dbar }
    }

    /// γ evaluated at displacement value t:
    /// γ(t) = (|a1×a2| + t·n·(a1×∂2n + ∂1n×a2) + t²·n·(∂1n×∂2n)) / |a1×a2|.
    pub fn gamma(&self, t: T) -> T {
        T::one() + t * self.cbar + t * t * self.dbar
    }
}

/// Sphere of radius R parameterized by (θ, φ), φ ∈ (0, π), with the *inward*
/// unit normal n = −(cos θ sin φ, sin θ sin φ, cos φ); displacement is taken
/// along this inward normal so the deformed radius is R − η. Closed-form
/// validation data only (γ table); not a simulated geometry, so the second
/// derivatives are not populated.
pub fn sphere_jet<T: Real>(radius: T, theta: T, phi: T) -> SurfaceJet<T> {
    let r = radius;
    let (st, ct) = (theta.sin(), theta.cos());
    let (sp, cp) = (phi.sin(), phi.cos());
    let a1 = [-r * st * sp, r * ct * sp, T::zero()];
    let a2 = [r * ct * cp, r * st * cp, -r * sp];
    let n = [-ct * sp, -st * sp, -cp];
    let m = -T::one() / r;
    let frame = Frame {
        a1,
        a2,
        n,
        ds: r * r * sp.abs(),
        dn1: scale3(m, a1),
        dn2: scale3(m, a2),
    };
    let zero3 = [T::zero(); 3];
    SurfaceJet::from_parts(frame, [zero3; 3], [zero3; 3], [[T::zero(); 2]; 2])
}

#[inline]
pub fn dot<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross<T: Real>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn add<T: Real>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale3<T: Real>(c: T, a: [T; 3]) -> [T; 3] {
    [c * a[0], c * a[1], c * a[2]]
}

/// Pointwise γ(η): the coercivity weight of the curvature tensor.
pub fn gamma<T: Real>(surf: &ReferenceSurface<T>, y: (T, T), eta_val: T) -> T {
    surf.jet(y).gamma(eta_val)
}

/// Degree-7 polynomial smoothstep profile: C³, monotone, 0 below `lo` and
/// 1 above `hi`. Only derivatives up to third order enter any implemented
/// estimate, so C³ suffices and keeps all derivatives in closed form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sigma<T: Real> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> Sigma<T> {
    pub fn new(lo: T, hi: T) -> Self {
        assert!(lo < hi);
        Sigma { lo, hi }
    }

    #[inline]
    fn t(&self, s: T) -> T {
        ((s - self.lo) / (self.hi - self.lo)).max(T::zero()).min(T::one())
    }

    pub fn value(&self, s: T) -> T {
        let t = self.t(s);
        let t4 = t * t * t * t;
        // 35t⁴ − 84t⁵ + 70t⁶ − 20t⁷
        t4 * (T::of(35.0) + t * (T::of(-84.0) + t * (T::of(70.0) - t * T::of(20.0))))
    }

    pub fn d1(&self, s: T) -> T {
        if s <= self.lo || s >= self.hi {
            return T::zero();
        }
        let t = self.t(s);
        let u = T::one() - t;
        // 140 t³ (1−t)³
        T::of(140.0) * t * t * t * u * u * u / (self.hi - self.lo)
    }

    pub fn d2(&self, s: T) -> T {
        if s <= self.lo || s >= self.hi {
            return T::zero();
        }
        let t = self.t(s);
        let u = T::one() - t;
        let w = self.hi - self.lo;
        // 420 t² (1−t)² (1−2t)
        T::of(420.0) * t * t * u * u * (T::one() - T::of(2.0) * t) / (w * w)
    }

    pub fn d3(&self, s: T) -> T {
        if s <= self.lo || s >= self.hi {
            return T::zero();
        }
        let t = self.t(s);
        let w = self.hi - self.lo;
        // 840 t (1−t) (1 − 5t + 5t²)
        T::of(840.0) * t * (T::one() - t)
            * (T::one() - T::of(5.0) * t + T::of(5.0) * t * t)
            / (w * w * w)
    }
}

/// Tubular chart: the collar of width κ around ∂Ω together with the
/// indicator σ_κ whose transition band is [α(Ω)+κ/2, α(Ω)+κ].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TubularChart<T: Real> {
    pub surface: ReferenceSurface<T>,
    pub kappa: T,
    pub sigma: Sigma<T>,
}

impl<T: Real> TubularChart<T> {
    pub fn new(surface: ReferenceSurface<T>, kappa: T) -> Self {
        assert!(kappa > T::zero());
        let alpha = surface.alpha_omega();
        assert!(
            alpha + kappa < T::zero(),
            "collar must stay strictly below the interface"
        );
        let half = T::of(0.5);
        let sigma = Sigma::new(alpha + kappa * half, alpha + kappa);
        TubularChart { surface, kappa, sigma }
    }

    /// The tubular parameterization Φ(s, y) = φ(y) + s·n(y).
    pub fn phi_map(&self, s: T, y: (T, T)) -> [T; 3] {
        let f = self.surface.frame(y);
        add(self.surface.phi(y), scale3(s, f.n))
    }

    /// Inverts Φ in closed form per geometry: returns the signed distance s,
    /// the surface parameter y (wrapped into the periodic cell) and the
    /// nearest boundary point p = φ(y).
    pub fn tubular_coords(&self, x: [T; 3]) -> Result<(T, (T, T), [T; 3]), GeometryError> {
        let alpha = self.surface.alpha_omega();
        match self.surface.kind {
            SurfaceKind::FlatChannel => {
                let s = x[2];
                if s <= alpha || s >= self.surface.beta_omega() {
                    return Err(GeometryError::OutOfCollar { s: s.to_f64().unwrap() });
                }
                let y1 = wrap(x[0], self.surface.len.0);
                let y2 = wrap(x[1], self.surface.len.1);
                Ok((s, (y1, y2), [x[0], x[1], T::zero()]))
            }
            SurfaceKind::Cylinder => {
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                if r <= T::zero() {
                    return Err(GeometryError::OutOfCollar {
                        s: alpha.to_f64().unwrap(),
                    });
                }
                let s = r - self.surface.radius;
                let theta = wrap(x[1].atan2(x[0]), T::of(2.0) * T::PI());
                let y2 = wrap(x[2], self.surface.len.1);
                let p = scale3(self.surface.radius / r, [x[0], x[1], T::zero()]);
                Ok((s, (theta, y2), [p[0], p[1], x[2]]))
            }
        }
    }

    /// Checks α(Ω)+κ < min η ≤ max η < β(Ω)−κ.
    pub fn check_admissible(&self, eta: &ScalarField2D<T>) -> Result<(), GeometryError> {
        let mut min = T::infinity();
        let mut max = T::neg_infinity();
        for &v in &eta.values {
            min = min.min(v);
            max = max.max(v);
        }
        let lo = self.surface.alpha_omega() + self.kappa;
        let hi = self.surface.beta_omega() - self.kappa;
        if min > lo && max < hi {
            Ok(())
        } else {
            Err(GeometryError::DisplacementOutOfRange {
                min: min.to_f64().unwrap(),
                max: max.to_f64().unwrap(),
                lo: lo.to_f64().unwrap(),
                hi: hi.to_f64().unwrap(),
            })
        }
    }

    /// The ALE map ψ_η(z) = (1−σ_κ(s))z + σ_κ(s)(p + (η(y)+s)n).
    ///
    /// Builds a trigonometric interpolant of η per call; use
    /// [`ale_map_interp`](Self::ale_map_interp) with a prebuilt
    /// [`FieldInterp`] when mapping many points.
    pub fn ale_map(
        &self,
        eta: &ScalarField2D<T>,
        z: [T; 3],
    ) -> Result<[T; 3], GeometryError> {
        self.check_admissible(eta)?;
        self.ale_map_interp(&FieldInterp::new(eta), z)
    }

    pub fn ale_map_interp(
        &self,
        eta: &FieldInterp<T>,
        z: [T; 3],
    ) -> Result<[T; 3], GeometryError> {
        let (s, y, p) = self.tubular_coords(z)?;
        let sg = self.sigma.value(s);
        if sg == T::zero() {
            return Ok(z);
        }
        let f = self.surface.frame(y);
        let ev = eta.eval(y.0, y.1);
        let shifted = add(p, scale3(ev + s, f.n));
        let one = T::one();
        Ok([
            (one - sg) * z[0] + sg * shifted[0],
            (one - sg) * z[1] + sg * shifted[1],
            (one - sg) * z[2] + sg * shifted[2],
        ])
    }

    /// det ∇ψ_η(z) in closed form:
    /// (1 + σ′(s)η(y)) · γ(y; s + σ(s)η(y)) / γ(y; s),
    /// where γ(y; t) is the tubular volume-element polynomial of
    /// [`SurfaceJet::gamma`]. Positive for admissible η.
    pub fn ale_jacobian(
        &self,
        eta: &ScalarField2D<T>,
        z: [T; 3],
    ) -> Result<T, GeometryError> {
        self.ale_jacobian_interp(&FieldInterp::new(eta), z)
    }

    pub fn ale_jacobian_interp(
        &self,
        eta: &FieldInterp<T>,
        z: [T; 3],
    ) -> Result<T, GeometryError> {
        let (s, y, _) = self.tubular_coords(z)?;
        let ev = eta.eval(y.0, y.1);
        let jet = self.surface.jet(y);
        let stilde = s + self.sigma.value(s) * ev;
        Ok((T::one() + self.sigma.d1(s) * ev) * jet.gamma(stilde) / jet.gamma(s))
    }

    /// Exact inverse of the ALE map, solving s + σ(s)η(y) = s(x) for the
    /// reference distance by safeguarded Newton/bisection.
    pub fn ale_map_inverse(
        &self,
        eta: &FieldInterp<T>,
        x: [T; 3],
    ) -> Result<[T; 3], GeometryError> {
        let (stilde, y, p) = self.tubular_coords(x)?;
        let ev = eta.eval(y.0, y.1);
        let f = self.surface.frame(y);
        if ev == T::zero() {
            return Ok(add(p, scale3(stilde, f.n)));
        }
        let (mut lo, mut hi) = if ev > T::zero() {
            (stilde - ev, stilde)
        } else {
            (stilde, stilde - ev)
        };
        let g = |s: T| s + self.sigma.value(s) * ev - stilde;
        let mut s = stilde - self.sigma.value(stilde) * ev; // first Newton-ish guess
        s = s.max(lo).min(hi);
        let tol = T::of(1e-15) * (T::one() + stilde.abs());
        for _ in 0..200 {
            let gs = g(s);
            if gs.abs() <= tol {
                break;
            }
            if gs > T::zero() {
                hi = s;
            } else {
                lo = s;
            }
            let dg = T::one() + self.sigma.d1(s) * ev;
            let mut next = s - gs / dg;
            if !(next > lo && next < hi) || dg <= T::zero() {
                next = (lo + hi) * T::of(0.5);
            }
            s = next;
        }
        Ok(add(p, scale3(s, f.n)))
    }
}

#[inline]
fn wrap<T: Real>(x: T, period: T) -> T {
    let w = x - (x / period).floor() * period;
    if w == period {
        T::zero()
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::ScalarField2D;

    const TP: f64 = 2.0 * std::f64::consts::PI;

    fn smooth_eta(grid: PeriodicGrid2D<f64>, amp: f64) -> ScalarField2D<f64> {
        ScalarField2D::from_fn(grid, |y1, y2| {
            amp * ((TP * y1).sin() + 0.5 * (TP * (y2 + 2.0 * y1)).cos())
        })
    }

    #[test]
    fn cylinder_frame_examples() {
        // R=1 at (0,0): a1=(0,1,0), a2=(0,0,1), n=(1,0,0), dS=1
        let c = ReferenceSurface::<f64>::cylinder(1.0, 1.0);
        let f = c.frame((0.0, 0.0));
        assert!((f.a1[1] - 1.0).abs() < 1e-15 && f.a1[0].abs() < 1e-15);
        assert!((f.a2[2] - 1.0).abs() < 1e-15);
        assert!((f.n[0] - 1.0).abs() < 1e-15);
        assert!((f.ds - 1.0).abs() < 1e-15);
        // R=2 at (π/2, 0.3): a1=(−2,0,0), a2=(0,0,1), n=(0,1,0)
        let c2 = ReferenceSurface::<f64>::cylinder(2.0, 1.0);
        let f2 = c2.frame((std::f64::consts::FRAC_PI_2, 0.3));
        assert!((f2.a1[0] + 2.0).abs() < 1e-14 && f2.a1[1].abs() < 1e-14);
        assert!((f2.n[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn flat_frame_trivial() {
        let s = ReferenceSurface::<f64>::flat_channel(1.0);
        let f = s.frame((0.37, 0.91));
        assert_eq!(f.a1, [1.0, 0.0, 0.0]);
        assert_eq!(f.a2, [0.0, 1.0, 0.0]);
        assert_eq!(f.n, [0.0, 0.0, 1.0]);
        assert_eq!(f.dn1, [0.0; 3]);
    }

    #[test]
    fn frame_orthonormality_randomized() {
        let surfaces = [
            ReferenceSurface::<f64>::flat_channel(1.0),
            ReferenceSurface::<f64>::cylinder(1.7, 2.0),
        ];
        let mut state = 42u64;
        let mut rng = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as f64) / (u32::MAX as f64)
        };
        for surf in surfaces {
            for _ in 0..1000 {
                let y = (rng() * surf.len.0, rng() * surf.len.1);
                let f = surf.frame(y);
                assert!((dot(f.n, f.n) - 1.0).abs() <= 1e-12);
                assert!(dot(f.n, f.a1).abs() <= 1e-12);
                assert!(dot(f.n, f.a2).abs() <= 1e-12);
                assert!(f.ds > 0.0);
            }
        }
    }

    #[test]
    fn gamma_closed_forms() {
        // any surface, η=0 → 1 exactly
        let flat = ReferenceSurface::<f64>::flat_channel(1.0);
        assert_eq!(gamma(&flat, (0.2, 0.8), 0.0), 1.0);
        // cylinder: γ = 1 + η/R, e.g. R=2, η=1 → 1.5
        let cyl = ReferenceSurface::<f64>::cylinder(2.0, 1.0);
        assert!((gamma(&cyl, (0.3, 0.4), 1.0) - 1.5).abs() < 1e-14);
        let mut state = 7u64;
        let mut rng = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as f64) / (u32::MAX as f64)
        };
        for _ in 0..1000 {
            let y = (rng() * TP, rng());
            let eta = rng() * 2.0 - 1.0;
            let expect = 1.0 + eta / 2.0;
            assert!((gamma(&cyl, y, eta) - expect).abs() < 1e-12);
        }
        // sphere table: γ = (η−R)²/R², e.g. R=2, η=1 → 0.25
        for _ in 0..200 {
            let r = 1.0 + rng();
            let theta = rng() * TP;
            let phi = 0.2 + rng() * 2.5;
            let eta = rng();
            let jet = sphere_jet(r, theta, phi);
            let expect = (eta - r).powi(2) / (r * r);
            assert!(
                (jet.gamma(eta) - expect).abs() < 1e-12,
                "sphere gamma mismatch: {} vs {expect}",
                jet.gamma(eta)
            );
        }
    }

    #[test]
    fn sigma_profile_properties() {
        let s = Sigma::new(-0.875, -0.75);
        assert_eq!(s.value(-1.0), 0.0);
        assert_eq!(s.value(-0.875), 0.0);
        assert_eq!(s.value(-0.75), 1.0);
        assert_eq!(s.value(0.0), 1.0);
        assert_eq!(s.d1(-0.9), 0.0);
        assert_eq!(s.d1(-0.7), 0.0);
        // monotone, C³ ends, derivative consistency by finite differences
        let mut prev = -0.1;
        for i in 0..=100 {
            let x = -0.875 + 0.125 * i as f64 / 100.0;
            let v = s.value(x);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
        let h = 1e-6;
        for x in [-0.86, -0.81, -0.78] {
            let fd1 = (s.value(x + h) - s.value(x - h)) / (2.0 * h);
            assert!((fd1 - s.d1(x)).abs() < 1e-5 * (1.0 + s.d1(x).abs()));
            let fd2 = (s.d1(x + h) - s.d1(x - h)) / (2.0 * h);
            assert!((fd2 - s.d2(x)).abs() < 1e-3 * (1.0 + s.d2(x).abs()));
            let fd3 = (s.d2(x + h) - s.d2(x - h)) / (2.0 * h);
            assert!((fd3 - s.d3(x)).abs() < 1e-2 * (1.0 + s.d3(x).abs()));
        }
    }

    #[test]
    fn tubular_coords_examples_and_roundtrip() {
        let flat = TubularChart::new(ReferenceSurface::<f64>::flat_channel(1.0), 0.25);
        let (s, y, p) = flat.tubular_coords([0.3, 0.4, -0.2]).unwrap();
        assert_eq!(s, -0.2);
        assert_eq!(y, (0.3, 0.4));
        assert_eq!(p, [0.3, 0.4, 0.0]);
        assert!(flat.tubular_coords([0.0, 0.0, -1.5]).is_err());

        let cyl = TubularChart::new(ReferenceSurface::<f64>::cylinder(1.0, 1.0), 0.25);
        let (s, y, _) = cyl.tubular_coords([1.5, 0.0, 0.5]).unwrap();
        assert!((s - 0.5).abs() < 1e-14);
        assert!(y.0.abs() < 1e-14 && (y.1 - 0.5).abs() < 1e-14);

        let mut state = 11u64;
        let mut rng = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as f64) / (u32::MAX as f64)
        };
        for chart in [flat, cyl] {
            let alpha = chart.surface.alpha_omega();
            for _ in 0..100 {
                let s = alpha + chart.kappa + rng() * 0.5;
                let y = (rng() * chart.surface.len.0, rng() * chart.surface.len.1);
                let x = chart.phi_map(s, y);
                let (s2, y2, _) = chart.tubular_coords(x).unwrap();
                assert!((s - s2).abs() < 1e-12);
                assert!((y.0 - y2.0).abs() < 1e-12 || (y.0 - y2.0).abs() > chart.surface.len.0 - 1e-12);
                assert!((y.1 - y2.1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ale_map_identity_and_flat_shift() {
        let chart = TubularChart::new(ReferenceSurface::<f64>::flat_channel(1.0), 0.25);
        let grid = PeriodicGrid2D::new(16, 16);
        let zero = ScalarField2D::zeros(grid);
        for z in [[0.1, 0.2, -0.5], [0.7, 0.9, -0.05], [0.3, 0.3, -0.99]] {
            let m = chart.ale_map(&zero, z).unwrap();
            for c in 0..3 {
                assert!((m[c] - z[c]).abs() < 1e-13);
            }
            assert!((chart.ale_jacobian(&zero, z).unwrap() - 1.0).abs() < 1e-13);
        }
        // σ=1 region: (y, s) ↦ (y, s + η(y))
        let eta = smooth_eta(grid, 0.05);
        let interp = FieldInterp::new(&eta);
        let z = [0.31, 0.77, -0.3]; // σ(−0.3)=1 for κ=0.25, α=−1
        let m = chart.ale_map_interp(&interp, z).unwrap();
        assert!((m[0] - z[0]).abs() < 1e-13 && (m[1] - z[1]).abs() < 1e-13);
        assert!((m[2] - (z[2] + interp.eval(z[0], z[1]))).abs() < 1e-12);
        // identity on {σ=0}
        let z0 = [0.5, 0.5, -0.95];
        let m0 = chart.ale_map_interp(&interp, z0).unwrap();
        assert_eq!(m0, z0);
        // deformed-boundary image: ψ_η(φ(y)) = φ(y) + η(y)n
        let mb = chart.ale_map_interp(&interp, [0.25, 0.5, 0.0]).unwrap();
        assert!((mb[2] - interp.eval(0.25, 0.5)).abs() < 1e-10);
    }

    #[test]
    fn ale_jacobian_constant_shift_and_fd_oracle() {
        let chart = TubularChart::new(ReferenceSurface::<f64>::flat_channel(1.0), 0.25);
        let grid = PeriodicGrid2D::new(16, 16);
        // constant η in the σ≡1 region → pure shift, J = 1
        let c = ScalarField2D::from_fn(grid, |_, _| 0.07);
        assert!((chart.ale_jacobian(&c, [0.3, 0.3, -0.5]).unwrap() - 1.0).abs() < 1e-13);

        // finite-difference determinant oracle inside the transition band
        let eta = ScalarField2D::from_fn(grid, |y1, _| 0.1 * (TP * y1).sin());
        let interp = FieldInterp::new(&eta);
        for chart in [
            chart,
            TubularChart::new(ReferenceSurface::<f64>::cylinder(1.0, 1.0), 0.25),
        ] {
            let eta = if chart.surface.kind == SurfaceKind::Cylinder {
                ScalarField2D::from_fn(chart.surface.grid(16, 16), |t, _| 0.1 * t.sin())
            } else {
                eta.clone()
            };
            let interp2 = FieldInterp::new(&eta);
            let it = if chart.surface.kind == SurfaceKind::Cylinder { &interp2 } else { &interp };
            let z = match chart.surface.kind {
                SurfaceKind::FlatChannel => [0.3, 0.4, -0.8], // inside [−0.875, −0.75]+margin
                SurfaceKind::Cylinder => {
                    let s = -0.8;
                    [(1.0 + s) * (0.7f64).cos(), (1.0 + s) * (0.7f64).sin(), 0.4]
                }
            };
            let h = 1e-5;
            let mut m = [[0.0; 3]; 3];
            for c in 0..3 {
                let mut zp = z;
                let mut zm = z;
                zp[c] += h;
                zm[c] -= h;
                let fp = chart.ale_map_interp(it, zp).unwrap();
                let fm = chart.ale_map_interp(it, zm).unwrap();
                for r in 0..3 {
                    m[r][c] = (fp[r] - fm[r]) / (2.0 * h);
                }
            }
            let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
            let j = chart.ale_jacobian_interp(it, z).unwrap();
            assert!((det - j).abs() < 1e-7, "{:?}: FD {det} vs analytic {j}", chart.surface.kind);
        }
    }

    #[test]
    fn ale_inverse_roundtrip() {
        let chart = TubularChart::new(ReferenceSurface::<f64>::flat_channel(1.0), 0.25);
        let grid = PeriodicGrid2D::new(16, 16);
        let eta = smooth_eta(grid, 0.13); // |η| ≤ 0.2
        let interp = FieldInterp::new(&eta);
        let mut state = 5u64;
        let mut rng = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as f64) / (u32::MAX as f64)
        };
        for _ in 0..100 {
            let z = [rng(), rng(), -rng() * 0.999];
            let x = chart.ale_map_interp(&interp, z).unwrap();
            let back = chart.ale_map_inverse(&interp, x).unwrap();
            for c in 0..3 {
                assert!((back[c] - z[c]).abs() < 1e-12, "{back:?} vs {z:?}");
            }
        }
        // out-of-range displacement is rejected
        let big = ScalarField2D::from_fn(grid, |_, _| -0.9);
        assert!(matches!(
            chart.ale_map(&big, [0.1, 0.1, -0.5]),
            Err(GeometryError::DisplacementOutOfRange { .. })
        ));
    }
}
