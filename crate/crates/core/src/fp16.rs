//! Software emulation of IEEE 754 binary16 with deterministic
//! round-to-nearest-even, as implemented by the target's FP16 vector units.
//!
//! All arithmetic widens to f32, computes exactly, and narrows back. The
//! widening direction is exact (every binary16 value is representable in
//! f32), so the only rounding step is the final narrowing.

use std::fmt;

/// Exponent bias difference between binary32 (127) and binary16 (15).
const EXP_ADJUST: u32 = 112;

/// A binary16 value stored as its bit pattern.
#[derive(Copy, Clone, PartialEq, Eq, Default)]
pub struct F16(pub u16);

impl F16 {
    pub const ZERO: F16 = F16(0);
    pub const ONE: F16 = F16(0x3c00);
    /// Largest finite binary16 value, 65504.
    pub const MAX: F16 = F16(0x7bff);
    pub const INFINITY: F16 = F16(0x7c00);
    pub const NEG_INFINITY: F16 = F16(0xfc00);

    pub fn from_f32(x: f32) -> F16 {
        F16(f32_to_f16_bits(x))
    }

    pub fn to_f32(self) -> f32 {
        f16_bits_to_f32(self.0)
    }

    pub fn is_nan(self) -> bool {
        (self.0 & 0x7c00) == 0x7c00 && (self.0 & 0x03ff) != 0
    }

    pub fn is_infinite(self) -> bool {
        (self.0 & 0x7fff) == 0x7c00
    }

    pub fn is_finite(self) -> bool {
        (self.0 & 0x7c00) != 0x7c00
    }

    pub fn abs(self) -> F16 {
        F16(self.0 & 0x7fff)
    }

    pub fn neg(self) -> F16 {
        F16(self.0 ^ 0x8000)
    }
}

impl fmt::Debug for F16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F16({:#06x} = {})", self.0, self.to_f32())
    }
}

impl fmt::Display for F16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f32())
    }
}

/// Narrow an f32 to binary16 bits, rounding ties to even.
///
/// NaN payloads are narrowed by truncating the mantissa so that every
/// binary16 bit pattern survives a widen/narrow round trip unchanged.
pub fn f32_to_f16_bits(x: f32) -> u16 {
    let bits = x.to_bits();
    let sign = ((bits >> 16) & 0x8000) as u16;
    let abs = bits & 0x7fff_ffff;

    if abs >= 0x7f80_0000 {
        if abs == 0x7f80_0000 {
            return sign | 0x7c00;
        }
        // NaN: keep the top 10 payload bits, force non-zero mantissa.
        let mut payload = ((abs >> 13) & 0x03ff) as u16;
        if payload == 0 {
            payload = 0x0200;
        }
        return sign | 0x7c00 | payload;
    }

    let exp = ((abs >> 23) as i32) - 127;
    if exp >= 16 {
        return sign | 0x7c00;
    }
    if exp >= -14 {
        // Normal range: drop 13 mantissa bits with round-to-nearest-even.
        let man = abs & 0x007f_ffff;
        let mut m = man >> 13;
        let rem = man & 0x1fff;
        if rem > 0x1000 || (rem == 0x1000 && (m & 1) == 1) {
            m += 1;
        }
        let mut e16 = (exp + 15) as u32;
        if m == 0x400 {
            m = 0;
            e16 += 1;
        }
        if e16 >= 31 {
            return sign | 0x7c00;
        }
        return sign | ((e16 as u16) << 10) | (m as u16);
    }
    if exp < -25 {
        // Below half the smallest subnormal: flush to signed zero.
        return sign;
    }
    // Subnormal result: value = man16 * 2^-24.
    let man = (abs & 0x007f_ffff) | 0x0080_0000;
    let shift = (-exp - 1) as u32;
    let mut m = man >> shift;
    let rem = man & ((1u32 << shift) - 1);
    let halfway = 1u32 << (shift - 1);
    if rem > halfway || (rem == halfway && (m & 1) == 1) {
        m += 1;
    }
    // m == 0x400 lands exactly on the smallest normal encoding.
    sign | (m as u16)
}

/// Widen binary16 bits to f32. Exact for every input.
pub fn f16_bits_to_f32(h: u16) -> f32 {
    let sign = ((h & 0x8000) as u32) << 16;
    let exp = (h >> 10) & 0x1f;
    let man = (h & 0x03ff) as u32;
    match exp {
        0 => {
            // Zero or subnormal: man * 2^-24 is exact in f32.
            let v = (man as f32) * f32::from_bits(0x3380_0000);
            if sign != 0 {
                -v
            } else {
                v
            }
        }
        0x1f => f32::from_bits(sign | 0x7f80_0000 | (man << 13)),
        _ => f32::from_bits(sign | ((exp as u32 + EXP_ADJUST) << 23) | (man << 13)),
    }
}

pub fn add(a: F16, b: F16) -> F16 {
    F16::from_f32(a.to_f32() + b.to_f32())
}

pub fn sub(a: F16, b: F16) -> F16 {
    F16::from_f32(a.to_f32() - b.to_f32())
}

pub fn mul(a: F16, b: F16) -> F16 {
    F16::from_f32(a.to_f32() * b.to_f32())
}

/// Multiply-accumulate used by the FP16 kernels.
///
/// The default accumulates in FP16 (one narrowing per step, the worst-case
/// hardware accumulator); the `fp32-mac` feature keeps a running FP32
/// accumulator via [`DotAcc`].
pub fn mac(acc: F16, a: F16, b: F16) -> F16 {
    F16::from_f32(acc.to_f32() + a.to_f32() * b.to_f32())
}

/// Running dot-product accumulator for the FP16 kernels. Precision is
/// selected at build time (see the `fp32-mac` feature).
pub struct DotAcc {
    #[cfg(feature = "fp32-mac")]
    acc: f32,
    #[cfg(not(feature = "fp32-mac"))]
    acc: F16,
}

impl DotAcc {
    pub fn new() -> Self {
        #[cfg(feature = "fp32-mac")]
        {
            DotAcc { acc: 0.0 }
        }
        #[cfg(not(feature = "fp32-mac"))]
        {
            DotAcc { acc: F16::ZERO }
        }
    }

    #[inline]
    pub fn mac(&mut self, a: F16, b: F16) {
        #[cfg(feature = "fp32-mac")]
        {
            self.acc += a.to_f32() * b.to_f32();
        }
        #[cfg(not(feature = "fp32-mac"))]
        {
            self.acc = mac(self.acc, a, b);
        }
    }

    #[inline]
    pub fn finish(self) -> F16 {
        #[cfg(feature = "fp32-mac")]
        {
            F16::from_f32(self.acc)
        }
        #[cfg(not(feature = "fp32-mac"))]
        {
            self.acc
        }
    }
}

impl Default for DotAcc {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_values() {
        assert_eq!(F16::from_f32(1.0), F16::ONE);
        assert_eq!(F16::from_f32(0.0).0, 0x0000);
        assert_eq!(F16::from_f32(-0.0).0, 0x8000);
        assert_eq!(F16::from_f32(-2.0).0, 0xc000);
        assert_eq!(F16::from_f32(65504.0), F16::MAX);
    }

    #[test]
    fn rounds_tenth_to_nearest() {
        // Nearest binary16 to 0.1 (verified against exhaustive enumeration
        // in the integration suite).
        assert_eq!(F16::from_f32(0.1).to_f32(), 0.0999755859375);
    }

    #[test]
    fn overflow_to_infinity() {
        assert_eq!(F16::from_f32(65520.0), F16::INFINITY);
        assert_eq!(F16::from_f32(-65520.0), F16::NEG_INFINITY);
        // Just below the rounding threshold stays finite.
        assert_eq!(F16::from_f32(65519.0), F16::MAX);
        assert_eq!(F16::from_f32(1e9), F16::INFINITY);
    }

    #[test]
    fn subnormal_rounding() {
        // Smallest subnormal is 2^-24.
        assert_eq!(F16::from_f32(5.960464e-8).0, 0x0001);
        // Half of it ties to even (zero).
        assert_eq!(F16::from_f32(2.9802322e-8).0, 0x0000);
        // Slightly above the tie rounds up.
        assert_eq!(F16::from_f32(2.99e-8).0, 0x0001);
    }

    #[test]
    fn add_absorbs_small_operand() {
        // 2049 is not representable; ties back down to 2048.
        let r = add(F16::from_f32(2048.0), F16::ONE);
        assert_eq!(r.to_f32(), 2048.0);
    }

    #[test]
    fn mul_exact_powers_of_two() {
        let r = mul(F16::from_f32(0.5), F16::from_f32(0.5));
        assert_eq!(r.to_f32(), 0.25);
    }

    #[test]
    fn nan_propagates() {
        let r = add(F16::from_f32(f32::NAN), F16::ONE);
        assert!(r.is_nan());
        assert!(mul(F16::INFINITY, F16::ZERO).is_nan());
    }

    #[test]
    fn fp16_matches_half_crate_on_samples() {
        // Spot check against the independent implementation; the
        // exhaustive sweep lives in the acceptance suite.
        for &x in &[0.1f32, -3.7, 1234.5, 6.1e-5, 5.9e-8, 65519.0, -65520.0] {
            assert_eq!(
                f32_to_f16_bits(x),
                half::f16::from_f32(x).to_bits(),
                "narrowing {x}"
            );
        }
        for h in [0x0001u16, 0x03ff, 0x0400, 0x3c00, 0x7bff, 0xfbff] {
            assert_eq!(f16_bits_to_f32(h), half::f16::from_bits(h).to_f32());
        }
    }
}
