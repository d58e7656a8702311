//! IEEE-754 multiplication done with exact integers and round-half-even.

use num_bigint::BigUint;

/// Positive finite normal or subnormal double as mantissa * 2^exponent.
fn decompose(x: f64) -> (u64, i32) {
    assert!(x.is_finite() && x > 0.0, "oracle takes positive finite values, got {x}");
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp - 1075)
    }
}

fn pow2(e: i32) -> f64 {
    assert!((-1022..=1023).contains(&e), "exponent {e} outside the normal range");
    f64::from_bits(((e + 1023) as u64) << 52)
}

/// Correctly rounded a * b, computed from the exact integer product.
pub fn mul(a: f64, b: f64) -> f64 {
    let (ma, ea) = decompose(a);
    let (mb, eb) = decompose(b);
    let exact = BigUint::from(ma) * BigUint::from(mb);
    let mut exp = ea + eb;
    let bits = exact.bits() as i32;
    let (mut q, shift) = if bits > 53 {
        let shift = (bits - 53) as usize;
        let q = &exact >> shift;
        let rem = &exact - (&q << shift);
        let half = BigUint::from(1u8) << (shift - 1);
        let mut q = digit(&q);
        if rem > half || (rem == half && q & 1 == 1) {
            q += 1;
        }
        (q, shift as i32)
    } else {
        (digit(&exact), 0)
    };
    exp += shift;
    if q == 1u64 << 53 {
        q >>= 1;
        exp += 1;
    }
    // q < 2^53 is exact in f64, and scaling by a power of two is exact.
    let scale_hi = exp.clamp(-1022, 1023);
    (q as f64) * pow2(scale_hi) * pow2(exp - scale_hi)
}

fn digit(x: &BigUint) -> u64 {
    let d = x.to_u64_digits();
    assert!(d.len() <= 1);
    d.first().copied().unwrap_or(0)
}

/// Left-to-right product with each step correctly rounded.
pub fn product(xs: &[f64]) -> f64 {
    xs[1..].iter().fold(xs[0], |acc, x| mul(acc, *x))
}
