//! Uniform box smoothing on a torus.

use crate::error::{FtnError, Result};

/// Apply `passes` rounds of an `s x s` uniform kernel with toroidal wrap to a
/// row-major `side x side` field. Each cell becomes the mean of its
/// neighbourhood; neighbourhoods wider than the grid wrap and count cells
/// with multiplicity. Offsets are summed in a fixed order, so the result
/// commutes bitwise with circular shifts.
pub fn lateral_smooth(field: &[f64], side: usize, s: usize, passes: usize) -> Result<Vec<f64>> {
    if s == 0 || s % 2 == 0 {
        return Err(FtnError::Config(format!("kernel side {s} must be odd")));
    }
    if field.len() != side * side {
        return Err(FtnError::Config(format!("field of length {} is not a {side}x{side} grid", field.len())));
    }
    let r = (s / 2) as isize;
    let d = side as isize;
    let norm = (s * s) as f64;
    let mut cur = field.to_vec();
    let mut next = vec![0.0; field.len()];
    for _ in 0..passes {
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for di in -r..=r {
                    let row = (i + di).rem_euclid(d) * d;
                    for dj in -r..=r {
                        acc += cur[(row + (j + dj).rem_euclid(d)) as usize];
                    }
                }
                next[(i * d + j) as usize] = acc / norm;
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

/// Circular shift of a `side x side` field by `(dr, dc)`.
pub fn torus_shift(field: &[f64], side: usize, dr: usize, dc: usize) -> Vec<f64> {
    let mut out = vec![0.0; field.len()];
    for i in 0..side {
        for j in 0..side {
            out[((i + dr) % side) * side + (j + dc) % side] = field[i * side + j];
        }
    }
    out
}

/// Shortest wrap-around Euclidean distance between two flat grid indices.
pub fn torus_distance(a: usize, b: usize, side: usize) -> f64 {
    let (ar, ac) = (a / side, a % side);
    let (br, bc) = (b / side, b % side);
    let dr = ar.abs_diff(br).min(side - ar.abs_diff(br)) as f64;
    let dc = ac.abs_diff(bc).min(side - ac.abs_diff(bc)) as f64;
    (dr * dr + dc * dc).sqrt()
}

/// Mean pairwise torus distance within a set of flat indices.
pub fn mean_pairwise_distance(set: &[usize], side: usize) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (i, &a) in set.iter().enumerate() {
        for &b in &set[i + 1..] {
            total += torus_distance(a, b, side);
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    }
}
