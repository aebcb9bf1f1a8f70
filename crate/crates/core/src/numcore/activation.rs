//! Slice-wise `tanh`, four lanes at a time.
//!
//! `tanh |x|` is the rational form `a + a^3 P(a^2) / Q(a^2)` from Cephes below
//! `a = |x| = 0.625` and `(1 - e) / (1 + e)` with `e = exp(-2a)` above it; the
//! sign of `x` is copied on afterwards. Both
//! branches are evaluated for every lane and blended, and a short tail is
//! padded to a full vector, so each element gets the same arithmetic no matter
//! where it sits in the slice.

use wide::{f64x4, CmpLt, CmpNe};

const SMALL: f64 = 0.625;
const P: [f64; 3] = [-9.643_991_794_250_523e-1, -9.928_772_310_019_186e1, -1.614_687_684_417_084_5e3];
const Q: [f64; 3] = [1.128_116_784_916_329_3e2, 2.235_488_390_601_004_6e3, 4.844_063_053_251_255e3];

#[inline]
fn tanh4(x: f64x4) -> f64x4 {
    let ax = x.abs();
    let z = x * x;
    let p = (f64x4::splat(P[0]) * z + f64x4::splat(P[1])) * z + f64x4::splat(P[2]);
    let q = ((z + f64x4::splat(Q[0])) * z + f64x4::splat(Q[1])) * z + f64x4::splat(Q[2]);
    let small = ax + ax * z * (p / q);

    let e = (ax * f64x4::splat(-2.0)).exp();
    let one = f64x4::splat(1.0);
    let large = (one - e) / (one + e);

    let out = ax.cmp_lt(f64x4::splat(SMALL)).blend(small, large).copysign(x);
    // NaN fails the comparison above and would come out of the exp branch
    // as +-1; hand it back unchanged instead.
    x.cmp_ne(x).blend(x, out)
}

pub fn tanh_in_place(values: &mut [f64]) {
    let mut chunks = values.chunks_exact_mut(4);
    for c in &mut chunks {
        let out = tanh4(f64x4::from([c[0], c[1], c[2], c[3]])).to_array();
        c.copy_from_slice(&out);
    }
    let tail = chunks.into_remainder();
    if !tail.is_empty() {
        let mut lanes = [0.0; 4];
        lanes[..tail.len()].copy_from_slice(tail);
        let out = tanh4(f64x4::from(lanes)).to_array();
        tail.copy_from_slice(&out[..tail.len()]);
    }
}

pub fn tanh(x: f64) -> f64 {
    tanh4(f64x4::splat(x)).to_array()[0]
}
