//! Exact p-adic scalars of the form `m / p^k`.
//!
//! Every lattice point, matrix entry and character argument used by this crate
//! lives in the ring `Z[1/p]`, so the p-adic order, norm and fractional part
//! are computed exactly with integer arithmetic. Numerators are `i128`; all
//! arithmetic is checked and panics on overflow rather than wrapping.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Trial-division primality test; primes here are small.
pub fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= p {
        if p.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// `p^e` with overflow detection.
pub fn checked_pow(p: u64, e: u32) -> Result<u64> {
    p.checked_pow(e).ok_or(Error::Overflow("prime power"))
}

/// Exponent of `p` in a nonzero integer.
pub fn ord_int(mut n: i128, p: u64) -> u32 {
    debug_assert!(n != 0);
    let p = p as i128;
    let mut v = 0;
    while n % p == 0 {
        n /= p;
        v += 1;
    }
    v
}

/// p-adic order; zero has order `Infinite`, which compares above every finite value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Order {
    Finite(i64),
    Infinite,
}

impl Order {
    pub fn finite(self) -> Option<i64> {
        match self {
            Order::Finite(v) => Some(v),
            Order::Infinite => None,
        }
    }
}

/// Exact p-adic absolute value: either zero or `p^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PNorm {
    pub prime: u64,
    /// `None` encodes `|0|_p = 0`.
    pub exponent: Option<i64>,
}

impl PNorm {
    pub fn zero(prime: u64) -> Self {
        PNorm { prime, exponent: None }
    }

    pub fn power(prime: u64, exponent: i64) -> Self {
        PNorm { prime, exponent: Some(exponent) }
    }

    pub fn is_zero(&self) -> bool {
        self.exponent.is_none()
    }

    /// Real view of the norm.
    pub fn to_f64(&self) -> f64 {
        match self.exponent {
            None => 0.0,
            Some(e) => (self.prime as f64).powi(e as i32),
        }
    }
}

impl PartialOrd for PNorm {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PNorm {
    fn cmp(&self, other: &Self) -> Ordering {
        // None < Some(_) is exactly 0 < p^e.
        self.exponent.cmp(&other.exponent)
    }
}

/// Point on the unit circle, the value of an additive character.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitComplex {
    re: f64,
    im: f64,
}

impl UnitComplex {
    pub fn new(re: f64, im: f64) -> Result<Self> {
        if ((re * re + im * im) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter {
                name: "unit complex",
                detail: format!("|{re} + {im}i| != 1"),
            });
        }
        Ok(UnitComplex { re, im })
    }

    /// `exp(2 pi i num / den)`; the fraction is reduced before the trig call.
    pub fn from_turns(num: u128, den: u128) -> Self {
        let r = num % den;
        let (s, c) = (2.0 * PI * (r as f64) / (den as f64)).sin_cos();
        UnitComplex { re: c, im: s }
    }

    pub fn one() -> Self {
        UnitComplex { re: 1.0, im: 0.0 }
    }

    pub fn re(&self) -> f64 {
        self.re
    }

    pub fn im(&self) -> f64 {
        self.im
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

impl Mul for UnitComplex {
    type Output = UnitComplex;
    fn mul(self, o: UnitComplex) -> UnitComplex {
        UnitComplex {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }
}

/// Exact scalar `num / prime^kexp` in canonical form.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PRational {
    num: i128,
    kexp: u32,
    prime: u64,
}

impl fmt::Debug for PRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for PRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.kexp == 0 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}^{}", self.num, self.prime, self.kexp)
        }
    }
}

impl PRational {
    /// Builds `num / p^kexp`, cancelling common powers of `p`.
    pub fn new(num: i128, kexp: u32, prime: u64) -> Result<Self> {
        if !is_prime(prime) {
            return Err(Error::NotPrime(prime));
        }
        Ok(Self::canonical(num, kexp, prime))
    }

    pub fn from_int(n: i128, prime: u64) -> Result<Self> {
        Self::new(n, 0, prime)
    }

    pub fn zero(prime: u64) -> Self {
        PRational { num: 0, kexp: 0, prime }
    }

    pub fn one(prime: u64) -> Self {
        PRational { num: 1, kexp: 0, prime }
    }

    /// `p^e` for any integer `e`.
    pub fn prime_power(prime: u64, e: i64) -> Self {
        if e >= 0 {
            let v = (prime as i128)
                .checked_pow(e as u32)
                .expect("prime power overflows i128");
            PRational { num: v, kexp: 0, prime }
        } else {
            PRational { num: 1, kexp: (-e) as u32, prime }
        }
    }

    pub(crate) fn canonical(mut num: i128, mut kexp: u32, prime: u64) -> Self {
        if num == 0 {
            return PRational { num: 0, kexp: 0, prime };
        }
        let p = prime as i128;
        while kexp > 0 && num % p == 0 {
            num /= p;
            kexp -= 1;
        }
        PRational { num, kexp, prime }
    }

    /// Re-canonicalizes; a no-op on values built through the public API.
    pub fn canonicalized(&self) -> Self {
        Self::canonical(self.num, self.kexp, self.prime)
    }

    pub fn num(&self) -> i128 {
        self.num
    }

    pub fn kexp(&self) -> u32 {
        self.kexp
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    /// True when the value lies in `Z` (equivalently in `Z_p ∩ Z[1/p]`).
    pub fn is_integer(&self) -> bool {
        self.kexp == 0
    }

    pub fn order(&self) -> Order {
        if self.num == 0 {
            Order::Infinite
        } else {
            Order::Finite(ord_int(self.num, self.prime) as i64 - self.kexp as i64)
        }
    }

    pub fn norm(&self) -> PNorm {
        padic_norm(self)
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / (self.prime as f64).powi(self.kexp as i32)
    }

    /// `self * p^e`.
    pub fn shift(&self, e: i64) -> Self {
        if self.num == 0 {
            return *self;
        }
        if e >= 0 {
            let e = e as u32;
            if e <= self.kexp {
                PRational { num: self.num, kexp: self.kexp - e, prime: self.prime }
            } else {
                let f = (self.prime as i128)
                    .checked_pow(e - self.kexp)
                    .expect("prime power overflows i128");
                PRational {
                    num: self.num.checked_mul(f).expect("p-rational overflow"),
                    kexp: 0,
                    prime: self.prime,
                }
            }
        } else {
            Self::canonical(self.num, self.kexp + (-e) as u32, self.prime)
        }
    }

    pub fn checked_add(&self, o: &Self) -> Result<Self> {
        self.same_prime(o)?;
        let p = self.prime as i128;
        let k = self.kexp.max(o.kexp);
        let a = self
            .num
            .checked_mul(p.checked_pow(k - self.kexp).ok_or(Error::Overflow("add"))?)
            .ok_or(Error::Overflow("add"))?;
        let b = o
            .num
            .checked_mul(p.checked_pow(k - o.kexp).ok_or(Error::Overflow("add"))?)
            .ok_or(Error::Overflow("add"))?;
        Ok(Self::canonical(a.checked_add(b).ok_or(Error::Overflow("add"))?, k, self.prime))
    }

    pub fn checked_mul(&self, o: &Self) -> Result<Self> {
        self.same_prime(o)?;
        let n = self.num.checked_mul(o.num).ok_or(Error::Overflow("mul"))?;
        Ok(Self::canonical(n, self.kexp + o.kexp, self.prime))
    }

    fn same_prime(&self, o: &Self) -> Result<()> {
        if self.prime != o.prime {
            Err(Error::PrimeMismatch(self.prime, o.prime))
        } else {
            Ok(())
        }
    }

    /// Parses `m`, `m/p^k` or `m/d` where `d` is a power of `prime`.
    pub fn parse(s: &str, prime: u64) -> Result<Self> {
        let bad = |d: &str| Error::Parse { what: "p-rational", detail: format!("{s:?}: {d}") };
        let s = s.trim();
        let (num_s, den_s) = match s.split_once('/') {
            Some((a, b)) => (a.trim(), Some(b.trim())),
            None => (s, None),
        };
        let num: i128 = num_s.parse().map_err(|_| bad("numerator"))?;
        let kexp = match den_s {
            None => 0,
            Some(d) => {
                if let Some((base, exp)) = d.split_once('^') {
                    let base: u64 = base.trim().parse().map_err(|_| bad("denominator base"))?;
                    if base != prime {
                        return Err(bad("denominator base is not the prime"));
                    }
                    exp.trim().parse::<u32>().map_err(|_| bad("denominator exponent"))?
                } else {
                    let mut den: u64 = d.parse().map_err(|_| bad("denominator"))?;
                    let mut k = 0;
                    while den > 1 && den.is_multiple_of(prime) {
                        den /= prime;
                        k += 1;
                    }
                    if den != 1 {
                        return Err(bad("denominator is not a power of the prime"));
                    }
                    k
                }
            }
        };
        Self::new(num, kexp, prime)
    }
}

impl Add for PRational {
    type Output = PRational;
    fn add(self, o: PRational) -> PRational {
        self.checked_add(&o).expect("p-rational addition")
    }
}

impl Sub for PRational {
    type Output = PRational;
    fn sub(self, o: PRational) -> PRational {
        self.checked_add(&-o).expect("p-rational subtraction")
    }
}

impl Mul for PRational {
    type Output = PRational;
    fn mul(self, o: PRational) -> PRational {
        self.checked_mul(&o).expect("p-rational multiplication")
    }
}

impl Neg for PRational {
    type Output = PRational;
    fn neg(self) -> PRational {
        PRational { num: -self.num, ..self }
    }
}

/// `|x|_p`, exact.
pub fn padic_norm(x: &PRational) -> PNorm {
    match x.order() {
        Order::Infinite => PNorm::zero(x.prime),
        Order::Finite(v) => PNorm::power(x.prime, -v),
    }
}

/// `{x}_p`: zero when `ord(x) >= 0`, else `(num mod p^k) / p^k`.
pub fn fractional_part(x: &PRational) -> PRational {
    if x.kexp == 0 {
        return PRational::zero(x.prime);
    }
    let pk = (x.prime as i128).pow(x.kexp);
    PRational::canonical(x.num.rem_euclid(pk), x.kexp, x.prime)
}

/// Additive character `chi_p(x) = exp(2 pi i {x}_p)`.
pub fn chi(x: &PRational) -> UnitComplex {
    if x.kexp == 0 {
        return UnitComplex::one();
    }
    let pk = (x.prime as i128).pow(x.kexp);
    UnitComplex::from_turns(x.num.rem_euclid(pk) as u128, pk as u128)
}

/// Vector in `Q_p^N` with p-rational coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PVector {
    coords: Vec<PRational>,
    prime: u64,
}

impl PVector {
    pub fn new(coords: Vec<PRational>) -> Result<Self> {
        let prime = coords.first().map(|c| c.prime).ok_or(Error::InvalidParameter {
            name: "vector",
            detail: "empty coordinate list".into(),
        })?;
        if let Some(c) = coords.iter().find(|c| c.prime != prime) {
            return Err(Error::PrimeMismatch(prime, c.prime));
        }
        Ok(PVector { coords, prime })
    }

    pub fn from_ints(v: &[i128], prime: u64) -> Result<Self> {
        Self::new(v.iter().map(|&n| PRational::from_int(n, prime)).collect::<Result<_>>()?)
    }

    pub fn zero(n: usize, prime: u64) -> Self {
        PVector { coords: vec![PRational::zero(prime); n], prime }
    }

    pub fn coords(&self) -> &[PRational] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|c| c.is_zero())
    }

    pub fn order(&self) -> Order {
        self.coords.iter().map(|c| c.order()).min().unwrap_or(Order::Infinite)
    }

    pub fn norm(&self) -> PNorm {
        vector_norm(self)
    }

    pub fn checked_add(&self, o: &Self) -> Result<Self> {
        if self.dim() != o.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: o.dim() });
        }
        Ok(PVector {
            coords: self
                .coords
                .iter()
                .zip(&o.coords)
                .map(|(a, b)| a.checked_add(b))
                .collect::<Result<_>>()?,
            prime: self.prime,
        })
    }

    pub fn neg(&self) -> Self {
        PVector { coords: self.coords.iter().map(|&c| -c).collect(), prime: self.prime }
    }

    pub fn scale(&self, s: &PRational) -> Self {
        PVector { coords: self.coords.iter().map(|c| *c * *s).collect(), prime: self.prime }
    }

    /// Euclidean-style dot product `sum x_i y_i`.
    pub fn dot(&self, o: &Self) -> Result<PRational> {
        if self.dim() != o.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: o.dim() });
        }
        self.coords
            .iter()
            .zip(&o.coords)
            .try_fold(PRational::zero(self.prime), |acc, (a, b)| acc.checked_add(&a.checked_mul(b)?))
    }
}

/// `||x||_p = max_i |x_i|_p`.
pub fn vector_norm(x: &PVector) -> PNorm {
    x.coords.iter().map(padic_norm).max().unwrap_or(PNorm::zero(x.prime))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pr(n: i128, k: u32, p: u64) -> PRational {
        PRational::new(n, k, p).unwrap()
    }

    #[test]
    fn norm_examples() {
        assert_eq!(padic_norm(&pr(12, 0, 2)), PNorm::power(2, -2));
        assert_eq!(padic_norm(&pr(12, 0, 2)).to_f64(), 0.25);
        assert!(padic_norm(&PRational::zero(5)).is_zero());
        assert_eq!(padic_norm(&pr(1, 2, 3)).to_f64(), 9.0);
    }

    #[test]
    fn order_zero_is_infinite() {
        assert_eq!(PRational::zero(3).order(), Order::Infinite);
        assert!(Order::Finite(i64::MAX) < Order::Infinite);
    }

    #[test]
    fn fractional_part_examples() {
        assert_eq!(fractional_part(&pr(5, 0, 3)), PRational::zero(3));
        assert_eq!(fractional_part(&pr(7, 2, 2)), pr(3, 2, 2));
        assert_eq!(fractional_part(&pr(-1, 1, 3)), pr(2, 1, 3));
    }

    #[test]
    fn chi_examples() {
        let c = chi(&pr(3, 2, 2));
        assert!((c.re() - 0.0).abs() < 1e-15 && (c.im() + 1.0).abs() < 1e-15);
        assert_eq!(chi(&pr(17, 0, 5)), UnitComplex::one());
        let prod = chi(&pr(1, 1, 3)) * chi(&pr(2, 1, 3));
        assert!((prod.re() - 1.0).abs() < 1e-12 && prod.im().abs() < 1e-12);
    }

    #[test]
    fn vector_norm_examples() {
        let v = PVector::new(vec![pr(1, 1, 3), pr(9, 0, 3)]).unwrap();
        assert_eq!(vector_norm(&v).to_f64(), 3.0);
        assert!(vector_norm(&PVector::zero(3, 7)).is_zero());
        let w = PVector::new(vec![pr(2, 0, 2), pr(1, 1, 2)]).unwrap();
        assert_eq!(vector_norm(&w).to_f64(), 2.0);
    }

    #[test]
    fn parse_literals() {
        assert_eq!(PRational::parse("1/3^2", 3).unwrap(), pr(1, 2, 3));
        assert_eq!(PRational::parse("-5/25", 5).unwrap(), pr(-1, 1, 5));
        assert_eq!(PRational::parse("6", 2).unwrap(), pr(6, 0, 2));
        assert!(PRational::parse("1/6", 2).is_err());
        assert!(PRational::parse("1/2^1", 3).is_err());
    }

    #[test]
    fn rejects_composite_prime() {
        assert_eq!(PRational::new(1, 0, 4), Err(Error::NotPrime(4)));
    }

    fn random_pr(rng: &mut ChaCha8Rng, p: u64) -> PRational {
        let num = rng.random_range(-10_000i128..10_000);
        let kexp = rng.random_range(0u32..6);
        let shift = rng.random_range(0u32..4);
        pr(num * (p as i128).pow(shift), kexp, p)
    }

    #[test]
    fn ultrametric_inequality_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for i in 0..10_000 {
            let p = [2u64, 3, 5, 7][i % 4];
            let (x, y) = (random_pr(&mut rng, p), random_pr(&mut rng, p));
            let (nx, ny, ns) = (x.norm(), y.norm(), (x + y).norm());
            assert!(ns <= nx.max(ny), "{x} + {y}");
            if nx != ny {
                assert_eq!(ns, nx.max(ny), "{x} + {y}");
            }
        }
    }

    proptest! {
        #[test]
        fn fractional_parts_of_opposites_sum_to_integer(num in -100_000i128..100_000, k in 0u32..8, pi in 0usize..4) {
            let p = [2u64, 3, 5, 7][pi];
            let x = pr(num, k, p);
            let s = fractional_part(&x) + fractional_part(&-x);
            prop_assert!(s == PRational::zero(p) || s == PRational::one(p));
        }

        #[test]
        fn chi_is_periodic_mod_integers(num in -100_000i128..100_000, k in 0u32..8, n in -1000i128..1000) {
            let x = pr(num, k, 3);
            let a = chi(&x);
            let b = chi(&(x + PRational::from_int(n, 3).unwrap()));
            prop_assert!((a.re() - b.re()).abs() < 1e-12 && (a.im() - b.im()).abs() < 1e-12);
        }

        #[test]
        fn chi_is_additive(a in -10_000i128..10_000, b in -10_000i128..10_000, ka in 0u32..6, kb in 0u32..6) {
            let (x, y) = (pr(a, ka, 5), pr(b, kb, 5));
            let lhs = chi(&(x + y));
            let rhs = chi(&x) * chi(&y);
            prop_assert!((lhs.re() - rhs.re()).abs() < 1e-12 && (lhs.im() - rhs.im()).abs() < 1e-12);
        }

        #[test]
        fn canonicalization_is_idempotent(num in -1_000_000i128..1_000_000, k in 0u32..10) {
            let x = pr(num, k, 2);
            prop_assert_eq!(x.canonicalized(), x);
            prop_assert!(x.num() == 0 && x.kexp() == 0 || x.kexp() == 0 || x.num() % 2 != 0);
        }

        #[test]
        fn fractional_part_differs_by_integer(num in -100_000i128..100_000, k in 0u32..8) {
            let x = pr(num, k, 7);
            let r = fractional_part(&x);
            prop_assert!((x - r).order() >= Order::Finite(0));
            prop_assert!(r.to_f64() >= 0.0 && r.to_f64() < 1.0);
        }
    }
}
