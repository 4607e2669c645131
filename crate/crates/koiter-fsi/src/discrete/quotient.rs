//! Fractional difference quotients D^s_h and the Nikolskii norm built from
//! their suprema over grid shifts.

use super::{ScalarField2D};
use crate::real::Real;

/// Direction of a grid shift.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    E1,
    E2,
}

/// Fractional difference quotient
/// D^s_h g = (g(·+h e) − g(·)) / (|h|^{s−1} h)
/// for a grid-commensurate shift `h = steps·spacing` (steps may be negative).
pub fn diff_quotient<T: Real>(
    field: &ScalarField2D<T>,
    s: T,
    steps: isize,
    dir: Direction,
) -> ScalarField2D<T> {
    assert!(s >= T::zero() && s <= T::one(), "order s must lie in [0, 1]");
    assert!(steps != 0, "shift must be nonzero");
    let g = field.grid;
    let (d1, d2) = g.spacing();
    let h = match dir {
        Direction::E1 => d1 * T::of(steps as f64),
        Direction::E2 => d2 * T::of(steps as f64),
    };
    // |h|^{s-1} h = sign(h)·|h|^s
    let denom = h.signum() * h.abs().powf(s);
    let shifted = match dir {
        Direction::E1 => field.translate(steps, 0),
        Direction::E2 => field.translate(0, steps),
    };
    let values = shifted
        .values
        .iter()
        .zip(&field.values)
        .map(|(&a, &b)| (a - b) / denom)
        .collect();
    ScalarField2D { grid: g, values }
}

/// Nikolskii norm: sup over the full periodic shift set of ‖D^α_h g‖_{L^q}
/// plus ‖g‖_{L^q}. On the torus every shift is admissible, so the supremum
/// ranges over both directions and all step counts 1..n/2 (negative shifts
/// give the same values by translation invariance of the norm).
pub fn nikolskii_norm<T: Real>(field: &ScalarField2D<T>, alpha: T, q: T) -> T {
    assert!(alpha > T::zero() && alpha < T::one(), "alpha must lie in (0,1)");
    let g = field.grid;
    let mut sup = T::zero();
    for dir in [Direction::E1, Direction::E2] {
        let nmax = match dir {
            Direction::E1 => g.n1 / 2,
            Direction::E2 => g.n2 / 2,
        };
        for m in 1..=nmax {
            let dq = diff_quotient(field, alpha, m as isize, dir);
            sup = sup.max(dq.norm_lp(q));
        }
    }
    sup + field.norm_lp(q)
}

/// Supremum over shifts of ‖D^s_h g‖²_{L²} (used by the regularity
/// diagnostics where the quotient is applied to second derivatives).
pub fn sup_shift_quotient_sq<T: Real>(field: &ScalarField2D<T>, s: T) -> T {
    let g = field.grid;
    let mut sup = T::zero();
    for dir in [Direction::E1, Direction::E2] {
        let nmax = match dir {
            Direction::E1 => g.n1 / 2,
            Direction::E2 => g.n2 / 2,
        };
        for m in 1..=nmax {
            let dq = diff_quotient(field, s, m as isize, dir);
            sup = sup.max(dq.inner(&dq));
        }
    }
    sup
}
