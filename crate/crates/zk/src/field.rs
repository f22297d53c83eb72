//! Arithmetic in F_p for p = 2^61 - 1 and in its quadratic extension
//! F_{p^2} = F_p[i] / (i^2 + 1) (valid because p = 3 mod 4).

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use rand::RngCore;

pub const MODULUS: u64 = (1 << 61) - 1;

#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Fp(u64);

#[inline]
fn reduce128(x: u128) -> u64 {
    // 2^61 = 1 (mod p): fold the high bits down twice.
    let lo = (x as u64) & MODULUS;
    let hi = (x >> 61) as u64;
    let s = lo + (hi & MODULUS) + (hi >> 61);
    let s = (s & MODULUS) + (s >> 61);
    if s >= MODULUS {
        s - MODULUS
    } else {
        s
    }
}

impl Fp {
    pub const ZERO: Fp = Fp(0);
    pub const ONE: Fp = Fp(1);

    /// Reduces any `u64` into the field.
    pub fn new(v: u64) -> Self {
        Fp(reduce128(u128::from(v)))
    }

    /// Signed embedding: negative integers map to `p - |v|`.
    pub fn from_i64(v: i64) -> Self {
        if v >= 0 {
            Fp::new(v as u64)
        } else {
            -Fp::new(v.unsigned_abs())
        }
    }

    pub fn from_i128(v: i128) -> Self {
        let r = v.rem_euclid(i128::from(MODULUS));
        Fp(r as u64)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// Centred lift into `(-p/2, p/2]`.
    pub fn to_i64(self) -> i64 {
        if self.0 > MODULUS / 2 {
            -((MODULUS - self.0) as i64)
        } else {
            self.0 as i64
        }
    }

    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        loop {
            let v = rng.next_u64() >> 3;
            if v < MODULUS {
                return Fp(v);
            }
        }
    }

    pub fn pow(self, mut e: u64) -> Self {
        let mut base = self;
        let mut acc = Fp::ONE;
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            base *= base;
            e >>= 1;
        }
        acc
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inv(self) -> Option<Self> {
        (self.0 != 0).then(|| self.pow(MODULUS - 2))
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn to_le_bytes(self) -> [u8; 8] {
        self.0.to_le_bytes()
    }

    /// Parses a canonical little-endian encoding; rejects values `>= p`.
    pub fn from_le_bytes(b: [u8; 8]) -> Option<Self> {
        let v = u64::from_le_bytes(b);
        (v < MODULUS).then_some(Fp(v))
    }
}

impl fmt::Debug for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fp({})", self.to_i64())
    }
}

impl fmt::Display for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Add for Fp {
    type Output = Fp;
    #[inline]
    fn add(self, o: Fp) -> Fp {
        let s = self.0 + o.0;
        Fp(if s >= MODULUS { s - MODULUS } else { s })
    }
}

impl Sub for Fp {
    type Output = Fp;
    #[inline]
    fn sub(self, o: Fp) -> Fp {
        if self.0 >= o.0 {
            Fp(self.0 - o.0)
        } else {
            Fp(self.0 + MODULUS - o.0)
        }
    }
}

impl Neg for Fp {
    type Output = Fp;
    #[inline]
    fn neg(self) -> Fp {
        if self.0 == 0 {
            self
        } else {
            Fp(MODULUS - self.0)
        }
    }
}

impl Mul for Fp {
    type Output = Fp;
    #[inline]
    fn mul(self, o: Fp) -> Fp {
        Fp(reduce128(u128::from(self.0) * u128::from(o.0)))
    }
}

impl AddAssign for Fp {
    fn add_assign(&mut self, o: Fp) {
        *self = *self + o;
    }
}

impl SubAssign for Fp {
    fn sub_assign(&mut self, o: Fp) {
        *self = *self - o;
    }
}

impl MulAssign for Fp {
    fn mul_assign(&mut self, o: Fp) {
        *self = *self * o;
    }
}

impl std::iter::Sum for Fp {
    fn sum<I: Iterator<Item = Fp>>(iter: I) -> Fp {
        iter.fold(Fp::ZERO, |a, b| a + b)
    }
}

/// Element `re + im*i` of F_{p^2}; MAC tags, keys and the global key live here.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Fp2 {
    pub re: Fp,
    pub im: Fp,
}

impl Fp2 {
    pub const ZERO: Fp2 = Fp2 { re: Fp::ZERO, im: Fp::ZERO };
    pub const ONE: Fp2 = Fp2 { re: Fp::ONE, im: Fp::ZERO };

    pub fn new(re: Fp, im: Fp) -> Self {
        Fp2 { re, im }
    }

    pub fn from_base(x: Fp) -> Self {
        Fp2 { re: x, im: Fp::ZERO }
    }

    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        Fp2 { re: Fp::random(rng), im: Fp::random(rng) }
    }

    /// Product with a base-field scalar.
    #[inline]
    pub fn scale(self, k: Fp) -> Self {
        Fp2 { re: self.re * k, im: self.im * k }
    }

    pub fn is_zero(self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn inv(self) -> Option<Self> {
        // (a + bi)^-1 = (a - bi) / (a^2 + b^2); a^2 + b^2 != 0 since -1 is a non-residue.
        let n = self.re * self.re + self.im * self.im;
        let ni = n.inv()?;
        Some(Fp2 { re: self.re * ni, im: -self.im * ni })
    }

    pub fn to_le_bytes(self) -> [u8; 16] {
        let mut out = [0u8; 16];
        out[..8].copy_from_slice(&self.re.to_le_bytes());
        out[8..].copy_from_slice(&self.im.to_le_bytes());
        out
    }
}

impl fmt::Debug for Fp2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fp2({} + {}i)", self.re, self.im)
    }
}

impl Add for Fp2 {
    type Output = Fp2;
    #[inline]
    fn add(self, o: Fp2) -> Fp2 {
        Fp2 { re: self.re + o.re, im: self.im + o.im }
    }
}

impl Sub for Fp2 {
    type Output = Fp2;
    #[inline]
    fn sub(self, o: Fp2) -> Fp2 {
        Fp2 { re: self.re - o.re, im: self.im - o.im }
    }
}

impl Neg for Fp2 {
    type Output = Fp2;
    fn neg(self) -> Fp2 {
        Fp2 { re: -self.re, im: -self.im }
    }
}

impl Mul for Fp2 {
    type Output = Fp2;
    #[inline]
    fn mul(self, o: Fp2) -> Fp2 {
        Fp2 {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }
}

impl AddAssign for Fp2 {
    fn add_assign(&mut self, o: Fp2) {
        *self = *self + o;
    }
}

impl SubAssign for Fp2 {
    fn sub_assign(&mut self, o: Fp2) {
        *self = *self - o;
    }
}

impl MulAssign for Fp2 {
    fn mul_assign(&mut self, o: Fp2) {
        *self = *self * o;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fp() -> impl Strategy<Value = Fp> {
        any::<u64>().prop_map(Fp::new)
    }

    fn fp2() -> impl Strategy<Value = Fp2> {
        (fp(), fp()).prop_map(|(a, b)| Fp2::new(a, b))
    }

    #[test]
    fn reduction_edges() {
        assert_eq!(Fp::new(MODULUS), Fp::ZERO);
        assert_eq!(Fp::new(MODULUS + 5), Fp::new(5));
        assert_eq!(Fp::new(u64::MAX).value(), u64::MAX % MODULUS);
        assert_eq!(Fp::from_i64(-1) + Fp::ONE, Fp::ZERO);
        assert_eq!(Fp::from_i64(-12345).to_i64(), -12345);
        assert_eq!(Fp::from_i128(-(1i128 << 70)).to_i64(), Fp::from_i128(-(1i128 << 70)).to_i64());
        let big = Fp::new(MODULUS - 1);
        assert_eq!(big * big, Fp::ONE);
    }

    #[test]
    fn bytes_reject_non_canonical() {
        assert_eq!(Fp::from_le_bytes(MODULUS.to_le_bytes()), None);
        let x = Fp::new(987654321);
        assert_eq!(Fp::from_le_bytes(x.to_le_bytes()), Some(x));
    }

    #[test]
    fn fuzz_inverses() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let a = Fp::random(&mut rng);
            if let Some(i) = a.inv() {
                assert_eq!(a * i, Fp::ONE);
            }
            let b = Fp2::random(&mut rng);
            if let Some(i) = b.inv() {
                assert_eq!(b * i, Fp2::ONE);
            }
        }
        assert_eq!(Fp::ZERO.inv(), None);
    }

    #[test]
    fn i_squared_is_minus_one() {
        let i = Fp2::new(Fp::ZERO, Fp::ONE);
        assert_eq!(i * i, Fp2::from_base(-Fp::ONE));
    }

    proptest! {
        #[test]
        fn base_field_axioms(a in fp(), b in fp(), c in fp()) {
            prop_assert_eq!(a + b, b + a);
            prop_assert_eq!(a * b, b * a);
            prop_assert_eq!((a + b) + c, a + (b + c));
            prop_assert_eq!((a * b) * c, a * (b * c));
            prop_assert_eq!(a * (b + c), a * b + a * c);
            prop_assert_eq!(a - a, Fp::ZERO);
            prop_assert_eq!(a + (-a), Fp::ZERO);
            prop_assert!(a.value() < MODULUS);
        }

        #[test]
        fn multiplication_matches_bigint(a in fp(), b in fp()) {
            let want = (u128::from(a.value()) * u128::from(b.value()) % u128::from(MODULUS)) as u64;
            prop_assert_eq!((a * b).value(), want);
        }

        #[test]
        fn extension_axioms(a in fp2(), b in fp2(), c in fp2(), k in fp()) {
            prop_assert_eq!(a * (b + c), a * b + a * c);
            prop_assert_eq!((a * b) * c, a * (b * c));
            prop_assert_eq!(a.scale(k), a * Fp2::from_base(k));
        }
    }
}
