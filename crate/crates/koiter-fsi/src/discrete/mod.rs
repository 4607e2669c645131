//! Periodic grids, spectral derivative operators, difference quotients and
//! the fractional Sobolev / Nikolskii norms used by the diagnostics.

pub mod spectral;
pub mod quotient;
pub mod staggered;

pub use spectral::{Spectral2D, FieldInterp};
pub use quotient::{diff_quotient, nikolskii_norm};
pub use staggered::{BoxGrid3, StaggeredField3D};

use crate::real::Real;

/// Uniform periodic grid over the flat torus ω.
///
/// Node `(i1, i2)` sits at `(offset1 + i1·len1/n1, offset2 + i2·len2/n2)`.
/// The default period is 1 per direction; the cylinder chart uses
/// `(2π, height)`. A nonzero offset is used by the fluid solver, whose
/// shell samples live at horizontal cell centers; all spectral operators
/// are shift-invariant so the offset only matters when sampling analytic
/// functions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeriodicGrid2D<T: Real> {
    pub n1: usize,
    pub n2: usize,
    pub len1: T,
    pub len2: T,
    pub offset1: T,
    pub offset2: T,
}

impl<T: Real> PeriodicGrid2D<T> {
    pub fn new(n1: usize, n2: usize) -> Self {
        Self::with_lengths(n1, n2, T::one(), T::one())
    }

    pub fn with_lengths(n1: usize, n2: usize, len1: T, len2: T) -> Self {
        assert!(n1 >= 8 && n2 >= 8, "grid must have at least 8 nodes per direction");
        assert!(n1 % 2 == 0 && n2 % 2 == 0, "grid sizes must be even");
        PeriodicGrid2D { n1, n2, len1, len2, offset1: T::zero(), offset2: T::zero() }
    }

    pub fn with_offset(mut self, o1: T, o2: T) -> Self {
        self.offset1 = o1;
        self.offset2 = o2;
        self
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    #[inline]
    pub fn spacing(&self) -> (T, T) {
        (self.len1 / T::of_usize(self.n1), self.len2 / T::of_usize(self.n2))
    }

    pub fn area(&self) -> T {
        self.len1 * self.len2
    }

    /// Quadrature weight of one node (trapezoidal rule on the torus).
    pub fn node_weight(&self) -> T {
        self.area() / T::of_usize(self.len())
    }

    #[inline]
    pub fn idx(&self, i1: usize, i2: usize) -> usize {
        debug_assert!(i1 < self.n1 && i2 < self.n2);
        i1 * self.n2 + i2
    }

    /// Index with periodic wrap of possibly negative offsets.
    #[inline]
    pub fn idx_wrap(&self, i1: isize, i2: isize) -> usize {
        let i1 = i1.rem_euclid(self.n1 as isize) as usize;
        let i2 = i2.rem_euclid(self.n2 as isize) as usize;
        i1 * self.n2 + i2
    }

    pub fn node(&self, i1: usize, i2: usize) -> (T, T) {
        let (d1, d2) = self.spacing();
        (self.offset1 + d1 * T::of_usize(i1), self.offset2 + d2 * T::of_usize(i2))
    }

    /// Signed integer wavenumber for FFT bin `k` (Nyquist mapped to `+n/2`).
    #[inline]
    pub fn signed_mode(k: usize, n: usize) -> isize {
        if k <= n / 2 {
            k as isize
        } else {
            k as isize - n as isize
        }
    }
}

/// Scalar samples over a [`PeriodicGrid2D`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField2D<T: Real> {
    pub grid: PeriodicGrid2D<T>,
    pub values: Vec<T>,
}

impl<T: Real> ScalarField2D<T> {
    pub fn zeros(grid: PeriodicGrid2D<T>) -> Self {
        ScalarField2D { grid, values: vec![T::zero(); grid.len()] }
    }

    pub fn from_values(grid: PeriodicGrid2D<T>, values: Vec<T>) -> Self {
        assert_eq!(values.len(), grid.len());
        ScalarField2D { grid, values }
    }

    pub fn from_fn(grid: PeriodicGrid2D<T>, mut f: impl FnMut(T, T) -> T) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i1 in 0..grid.n1 {
            for i2 in 0..grid.n2 {
                let (y1, y2) = grid.node(i1, i2);
                values.push(f(y1, y2));
            }
        }
        ScalarField2D { grid, values }
    }

    #[inline]
    pub fn at(&self, i1: usize, i2: usize) -> T {
        self.values[self.grid.idx(i1, i2)]
    }

    pub fn mean(&self) -> T {
        self.values.iter().copied().sum::<T>() / T::of_usize(self.values.len())
    }

    /// L² inner product ∫ f g dy (trapezoidal quadrature).
    pub fn inner(&self, other: &Self) -> T {
        assert_eq!(self.grid, other.grid);
        let w = self.grid.node_weight();
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a * b)
            .sum::<T>()
            * w
    }

    pub fn norm_l2(&self) -> T {
        self.inner(self).sqrt()
    }

    /// Lᵖ norm ( ∫ |f|ᵖ dy )^{1/p}.
    pub fn norm_lp(&self, p: T) -> T {
        let w = self.grid.node_weight();
        let s: T = self.values.iter().map(|&a| a.abs().powf(p)).sum();
        (s * w).powf(T::one() / p)
    }

    pub fn norm_max(&self) -> T {
        self.values.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn scale(&self, c: T) -> Self {
        ScalarField2D {
            grid: self.grid,
            values: self.values.iter().map(|&v| v * c).collect(),
        }
    }

    pub fn axpy(&self, c: T, other: &Self) -> Self {
        assert_eq!(self.grid, other.grid);
        ScalarField2D {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a + c * b)
                .collect(),
        }
    }

    /// Cyclic shift by whole grid steps: result(x) = f(x + (m1 d1, m2 d2)).
    pub fn translate(&self, m1: isize, m2: isize) -> Self {
        let g = self.grid;
        let mut values = vec![T::zero(); g.len()];
        for i1 in 0..g.n1 {
            for i2 in 0..g.n2 {
                values[g.idx(i1, i2)] =
                    self.values[g.idx_wrap(i1 as isize + m1, i2 as isize + m2)];
            }
        }
        ScalarField2D { grid: g, values }
    }
}
