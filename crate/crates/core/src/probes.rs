//! Low-discrepancy probe points for assumption checks and rank diagnostics.

use crate::grid::DomainBox;
use crate::Point;

/// Radical-inverse (van der Corput) value of `index` in the given base.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let mut inv = 0.0;
    let mut denom = 1.0;
    while index > 0 {
        denom *= base as f64;
        inv += (index % base) as f64 / denom;
        index /= base;
    }
    inv
}

/// Halton points in the unit square, bases 2 and 3, skipping index 0.
pub fn halton_2d(n: usize) -> Vec<[f64; 2]> {
    (1..=n as u64)
        .map(|i| [radical_inverse(i, 2), radical_inverse(i, 3)])
        .collect()
}

/// Halton points in the unit cube, bases 2, 3 and 5.
pub fn halton_3d(n: usize) -> Vec<[f64; 3]> {
    (1..=n as u64)
        .map(|i| {
            [
                radical_inverse(i, 2),
                radical_inverse(i, 3),
                radical_inverse(i, 5),
            ]
        })
        .collect()
}

/// Spatial probe points spread over a box.
pub fn probe_points(n: usize, domain: &DomainBox) -> Vec<Point> {
    halton_2d(n)
        .into_iter()
        .map(|[u, v]| {
            [
                domain.lo[0] + u * (domain.hi[0] - domain.lo[0]),
                domain.lo[1] + v * (domain.hi[1] - domain.lo[1]),
            ]
        })
        .collect()
}

/// Space-time probe points `(t, x)` over `[0,1] x box`.
pub fn probe_points_with_time(n: usize, domain: &DomainBox) -> Vec<(f64, Point)> {
    halton_3d(n)
        .into_iter()
        .map(|[w, u, v]| {
            (
                w,
                [
                    domain.lo[0] + u * (domain.hi[0] - domain.lo[0]),
                    domain.lo[1] + v * (domain.hi[1] - domain.lo[1]),
                ],
            )
        })
        .collect()
}
