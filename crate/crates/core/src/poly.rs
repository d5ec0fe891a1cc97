//! Homogeneous integer polynomials and certification of ellipticity.
//!
//! A polynomial is elliptic when it vanishes on `Q_p^N` only at the origin. On the
//! unit sphere `S_0^N` (points with at least one unit coordinate) an elliptic
//! polynomial then has bounded order, and the certificate records `ord_p 𝔩(z)` for
//! every sphere class `z mod p^L`. Since `𝔩(z + p^L y) ≡ 𝔩(z) mod p^L`, an order
//! below `L` pins `|𝔩|_p` on the whole class.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::padic::{checked_pow, is_prime, ord_int, PRational, PVector};

/// Largest number of residue classes a certification scan may visit.
pub const MAX_ENUMERATION: u128 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EllipticPolynomial {
    prime: u64,
    dim: usize,
    degree: u32,
    terms: Vec<(Vec<u32>, i128)>,
}

impl fmt::Display for EllipticPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (exps, c)) in self.terms.iter().enumerate() {
            let mut c = *c;
            if c < 0 {
                write!(f, "-")?;
                c = -c;
            } else if i > 0 {
                write!(f, "+")?;
            }
            let mut first = true;
            if c != 1 {
                write!(f, "{c}")?;
                first = false;
            }
            for (v, &a) in exps.iter().enumerate() {
                if a == 0 {
                    continue;
                }
                if !first {
                    write!(f, "*")?;
                }
                first = false;
                write!(f, "x{}", v + 1)?;
                if a > 1 {
                    write!(f, "^{a}")?;
                }
            }
            if first {
                write!(f, "{c}")?;
            }
        }
        Ok(())
    }
}

impl EllipticPolynomial {
    /// Builds a polynomial from `(exponents, coefficient)` terms. Like terms are
    /// merged and zero coefficients dropped; every exponent vector must have the
    /// same total degree.
    pub fn new(prime: u64, dim: usize, terms: Vec<(Vec<u32>, i128)>) -> Result<Self> {
        if !is_prime(prime) {
            return Err(Error::NotPrime(prime));
        }
        let mut merged: BTreeMap<Vec<u32>, i128> = BTreeMap::new();
        for (exps, c) in terms {
            if exps.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: exps.len() });
            }
            let slot = merged.entry(exps).or_insert(0);
            *slot = slot.checked_add(c).ok_or(Error::Overflow("polynomial coefficient"))?;
        }
        let terms: Vec<(Vec<u32>, i128)> = merged.into_iter().rev().filter(|(_, c)| *c != 0).collect();
        let Some((first, _)) = terms.first() else {
            return Err(Error::NotHomogeneous("zero polynomial".into()));
        };
        let degree: u32 = first.iter().sum();
        if degree == 0 {
            return Err(Error::NotHomogeneous("constant polynomial".into()));
        }
        if let Some((bad, _)) = terms.iter().find(|(e, _)| e.iter().sum::<u32>() != degree) {
            return Err(Error::NotHomogeneous(format!("term with exponents {bad:?} has degree != {degree}")));
        }
        Ok(EllipticPolynomial { prime, dim, degree, terms })
    }

    /// Parses `c1*x1^a1*x2^b1 + c2*x1^a2 - ...`; variables are `x1..xN`.
    pub fn parse(s: &str, prime: u64, dim: usize) -> Result<Self> {
        let bad = |d: String| Error::Parse { what: "polynomial", detail: format!("{s:?}: {d}") };
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if t.is_empty() {
            return Err(bad("empty".into()));
        }
        let mut pieces: Vec<(bool, String)> = Vec::new();
        let mut cur = String::new();
        let mut neg = false;
        for (i, ch) in t.char_indices() {
            if (ch == '+' || ch == '-') && !(i > 0 && t[..i].ends_with('^')) {
                if !cur.is_empty() {
                    pieces.push((neg, std::mem::take(&mut cur)));
                } else if i > 0 {
                    return Err(bad("dangling sign".into()));
                }
                neg = ch == '-';
            } else {
                cur.push(ch);
            }
        }
        if cur.is_empty() {
            return Err(bad("trailing sign".into()));
        }
        pieces.push((neg, cur));

        let mut terms = Vec::new();
        for (neg, body) in pieces {
            let mut coef: i128 = if neg { -1 } else { 1 };
            let mut exps = vec![0u32; dim];
            for factor in body.split('*') {
                if let Some(var) = factor.strip_prefix('x') {
                    let (v, e) = match var.split_once('^') {
                        Some((v, e)) => (v, e.parse::<u32>().map_err(|_| bad(format!("bad exponent in {factor:?}")))?),
                        None => (var, 1),
                    };
                    let v: usize = v.parse().map_err(|_| bad(format!("bad variable {factor:?}")))?;
                    if v == 0 || v > dim {
                        return Err(bad(format!("variable x{v} outside x1..x{dim}")));
                    }
                    exps[v - 1] += e;
                } else {
                    let c: i128 = factor.parse().map_err(|_| bad(format!("bad factor {factor:?}")))?;
                    coef = coef.checked_mul(c).ok_or(Error::Overflow("polynomial coefficient"))?;
                }
            }
            terms.push((exps, coef));
        }
        Self::new(prime, dim, terms)
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn terms(&self) -> &[(Vec<u32>, i128)] {
        &self.terms
    }

    /// Exact value at a p-rational point.
    pub fn eval(&self, x: &PVector) -> Result<PRational> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.dim() });
        }
        if x.prime() != self.prime {
            return Err(Error::PrimeMismatch(self.prime, x.prime()));
        }
        let mut acc = PRational::zero(self.prime);
        for (exps, c) in &self.terms {
            let mut t = PRational::from_int(*c, self.prime)?;
            for (xi, &a) in x.coords().iter().zip(exps) {
                for _ in 0..a {
                    t = t.checked_mul(xi)?;
                }
            }
            acc = acc.checked_add(&t)?;
        }
        Ok(acc)
    }

    /// Exact value at an integer point, `None` on overflow.
    pub fn eval_int(&self, z: &[i128]) -> Option<i128> {
        let mut acc: i128 = 0;
        for (exps, c) in &self.terms {
            let mut t = *c;
            for (&zi, &a) in z.iter().zip(exps) {
                for _ in 0..a {
                    t = t.checked_mul(zi)?;
                }
            }
            acc = acc.checked_add(t)?;
        }
        Some(acc)
    }

    /// Value at an integer point reduced mod `modulus` (`modulus < 2^63`).
    pub fn eval_mod(&self, z: &[u64], modulus: u64) -> u64 {
        let m = modulus as u128;
        let mut acc: u128 = 0;
        for (exps, c) in &self.terms {
            let mut t = c.rem_euclid(modulus as i128) as u128;
            for (&zi, &a) in z.iter().zip(exps) {
                let zi = zi as u128 % m;
                for _ in 0..a {
                    t = t * zi % m;
                }
            }
            acc = (acc + t) % m;
        }
        acc as u64
    }

    /// `min(ord_p 𝔩(z), level)` for an integer point.
    pub fn ord_mod(&self, z: &[u64], level: u32) -> Result<u32> {
        let modulus = checked_pow(self.prime, level)?;
        if modulus >= 1 << 63 {
            return Err(Error::Overflow("polynomial modulus"));
        }
        let r = self.eval_mod(z, modulus);
        Ok(if r == 0 { level } else { ord_int(r as i128, self.prime) })
    }

    /// `ord_p 𝔩(z)` for an integer point, `None` when `𝔩(z) = 0`.
    pub fn ord_int(&self, z: &[i128]) -> Result<Option<u32>> {
        if let Some(v) = self.eval_int(z) {
            return Ok((v != 0).then(|| ord_int(v, self.prime)));
        }
        let mut level = 1;
        while checked_pow(self.prime, level + 1).is_ok_and(|m| m < 1 << 62) {
            level += 1;
        }
        let modulus = checked_pow(self.prime, level)?;
        let zr: Vec<u64> = z.iter().map(|&v| v.rem_euclid(modulus as i128) as u64).collect();
        let o = self.ord_mod(&zr, level)?;
        if o >= level {
            return Err(Error::Overflow("polynomial value"));
        }
        Ok(Some(o))
    }
}

/// Outcome of scanning the sphere classes mod `p^level`.
struct Scan {
    reps: Vec<(Vec<u64>, u32)>,
}

fn scan_sphere(poly: &EllipticPolynomial, level: u32) -> Result<Scan> {
    if level == 0 {
        return Err(Error::InvalidParameter { name: "level", detail: "must be >= 1".into() });
    }
    let p = poly.prime;
    let side = checked_pow(p, level)?;
    let total = (side as u128)
        .checked_pow(poly.dim as u32)
        .filter(|&t| t <= MAX_ENUMERATION)
        .ok_or(Error::EnumerationTooLarge((side as u128).saturating_pow(poly.dim as u32)))?;
    let mut z = vec![0u64; poly.dim];
    let mut reps = Vec::new();
    for flat in 0..total as u64 {
        let mut f = flat;
        for slot in z.iter_mut().rev() {
            *slot = f % side;
            f /= side;
        }
        if z.iter().all(|&c| c % p == 0) {
            continue;
        }
        let o = poly.ord_mod(&z, level)?;
        if o >= level {
            return Err(Error::NotElliptic { witness: z.clone(), level });
        }
        reps.push((z.clone(), o));
    }
    Ok(Scan { reps })
}

/// Covering of `S_0^N` by classes mod `p^L` on which `|𝔩|_p` is constant.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticityCertificate {
    poly: EllipticPolynomial,
    level: u32,
    reps: Vec<(Vec<u64>, u32)>,
    min_ord: u32,
    max_ord: u32,
}

/// Certifies ellipticity at level `L`: every sphere class mod `p^L` must have
/// `ord_p 𝔩 < L`, and the orders found at level `L + 1` must agree.
pub fn certify_elliptic(poly: &EllipticPolynomial, level: u32) -> Result<EllipticityCertificate> {
    let scan = scan_sphere(poly, level)?;
    let finer = scan_sphere(poly, level + 1)?;
    let side = checked_pow(poly.prime, level)?;
    let coarse: BTreeMap<&[u64], u32> = scan.reps.iter().map(|(z, o)| (z.as_slice(), *o)).collect();
    for (z, o) in &finer.reps {
        let reduced: Vec<u64> = z.iter().map(|c| c % side).collect();
        if coarse.get(reduced.as_slice()) != Some(o) {
            return Err(Error::NotElliptic { witness: reduced, level });
        }
    }
    let min_ord = scan.reps.iter().map(|r| r.1).min().unwrap_or(0);
    let max_ord = scan.reps.iter().map(|r| r.1).max().unwrap_or(0);
    Ok(EllipticityCertificate { poly: poly.clone(), level, reps: scan.reps, min_ord, max_ord })
}

/// Certificate at the smallest level in `1..=max_level` that passes. On
/// failure the witness from the lowest level is reported.
pub fn certify_minimal(poly: &EllipticPolynomial, max_level: u32) -> Result<EllipticityCertificate> {
    let mut first = None;
    for level in 1..=max_level {
        match scan_sphere(poly, level) {
            Ok(_) => return certify_elliptic(poly, level),
            Err(e @ Error::NotElliptic { .. }) => {
                first.get_or_insert(e);
            }
            Err(e @ Error::EnumerationTooLarge(_)) if level == 1 => return Err(e),
            Err(Error::EnumerationTooLarge(_)) => break,
            Err(e) => return Err(e),
        }
    }
    Err(first.unwrap_or(Error::InvalidParameter { name: "max_level", detail: "must be >= 1".into() }))
}

impl EllipticityCertificate {
    pub fn poly(&self) -> &EllipticPolynomial {
        &self.poly
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Sphere representatives mod `p^L` with `ord_p 𝔩`.
    pub fn reps(&self) -> &[(Vec<u64>, u32)] {
        &self.reps
    }

    /// `M`, the number of covering classes.
    pub fn rep_count(&self) -> usize {
        self.reps.len()
    }

    pub fn min_ord(&self) -> u32 {
        self.min_ord
    }

    pub fn max_ord(&self) -> u32 {
        self.max_ord
    }

    /// `min_{S_0^N} |𝔩|_p^α`.
    pub fn gamma(&self, alpha: f64) -> f64 {
        (self.poly.prime as f64).powf(-alpha * self.max_ord as f64)
    }

    /// `(C_0, C_1)` with `C_0 ||ξ||^{αd} <= |𝔩(ξ)|_p^α <= C_1 ||ξ||^{αd}`.
    pub fn constants(&self, alpha: f64) -> (f64, f64) {
        let p = self.poly.prime as f64;
        (p.powf(-alpha * self.max_ord as f64), p.powf(-alpha * self.min_ord as f64))
    }

    /// Number of sphere classes with each order `0..L`.
    pub fn ord_histogram(&self) -> Vec<u64> {
        let mut h = vec![0; self.level as usize];
        for (_, o) in &self.reps {
            h[*o as usize] += 1;
        }
        h
    }

    /// `ord_p 𝔩(u)` for an integer point with a unit coordinate.
    pub fn sphere_ord(&self, u: &[u64]) -> Result<u32> {
        self.poly.ord_mod(u, self.level)
    }

    pub fn check_poly(&self, poly: &EllipticPolynomial) -> Result<()> {
        if &self.poly == poly {
            Ok(())
        } else {
            Err(Error::CertificateMismatch)
        }
    }
}

/// `Z(α) = ∫_{S_0^N} |𝔩(z)|_p^α d^N z` as a finite sum over the covering.
pub fn z_alpha(poly: &EllipticPolynomial, alpha: f64, cert: &EllipticityCertificate) -> Result<f64> {
    cert.check_poly(poly)?;
    let p = poly.prime as f64;
    let vol = p.powi(-((cert.level as usize * poly.dim) as i32));
    Ok(cert.ord_histogram().iter().enumerate().map(|(v, &c)| c as f64 * p.powf(-alpha * v as f64)).sum::<f64>() * vol)
}
