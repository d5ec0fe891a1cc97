//! Square matrices over `Z[1/p]` with exact determinant.

use std::fmt;

use crate::error::{Error, Result};
use crate::padic::{Order, PRational, PVector};

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PMatrix {
    n: usize,
    prime: u64,
    entries: Vec<PRational>,
}

impl fmt::Debug for PMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for r in 0..self.n {
            if r > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{:?}", &self.entries[r * self.n..(r + 1) * self.n])?;
        }
        write!(f, "]")
    }
}

impl PMatrix {
    pub fn new(rows: Vec<Vec<PRational>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidParameter { name: "matrix", detail: "empty".into() });
        }
        let prime = rows[0].first().map(|c| c.prime()).ok_or(Error::InvalidParameter {
            name: "matrix",
            detail: "empty row".into(),
        })?;
        let mut entries = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: row.len() });
            }
            for e in row {
                if e.prime() != prime {
                    return Err(Error::PrimeMismatch(prime, e.prime()));
                }
                entries.push(e);
            }
        }
        Ok(PMatrix { n, prime, entries })
    }

    pub fn from_ints(rows: &[Vec<i128>], prime: u64) -> Result<Self> {
        Self::new(
            rows.iter()
                .map(|r| r.iter().map(|&v| PRational::from_int(v, prime)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?,
        )
    }

    pub fn identity(n: usize, prime: u64) -> Self {
        let mut entries = vec![PRational::zero(prime); n * n];
        for i in 0..n {
            entries[i * n + i] = PRational::one(prime);
        }
        PMatrix { n, prime, entries }
    }

    pub fn diagonal(diag: &[i128], prime: u64) -> Result<Self> {
        let n = diag.len();
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { diag[i] } else { 0 }).collect())
            .collect::<Vec<Vec<i128>>>();
        Self::from_ints(&rows, prime)
    }

    /// Parses `[[a,b],[c,d]]` with p-rational literal entries.
    pub fn parse(s: &str, prime: u64) -> Result<Self> {
        let bad = |d: &str| Error::Parse { what: "matrix", detail: format!("{s:?}: {d}") };
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let inner = t
            .strip_prefix('[')
            .and_then(|r| r.strip_suffix(']'))
            .ok_or_else(|| bad("expected [[...],...]"))?;
        let mut rows = Vec::new();
        let mut rest = inner;
        while !rest.is_empty() {
            let body = rest.strip_prefix('[').ok_or_else(|| bad("expected row"))?;
            let end = body.find(']').ok_or_else(|| bad("unterminated row"))?;
            let row = body[..end]
                .split(',')
                .map(|e| PRational::parse(e, prime))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
            rest = &body[end + 1..];
            rest = rest.strip_prefix(',').unwrap_or(rest);
        }
        Self::new(rows)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn get(&self, r: usize, c: usize) -> PRational {
        self.entries[r * self.n + c]
    }

    pub fn entries(&self) -> &[PRational] {
        &self.entries
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let entries = (0..n * n).map(|i| self.entries[(i % n) * n + i / n]).collect();
        PMatrix { n, prime: self.prime, entries }
    }

    pub fn checked_mul(&self, o: &Self) -> Result<Self> {
        if self.n != o.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: o.n });
        }
        let n = self.n;
        let mut entries = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                let mut acc = PRational::zero(self.prime);
                for k in 0..n {
                    acc = acc.checked_add(&self.get(r, k).checked_mul(&o.get(k, c))?)?;
                }
                entries.push(acc);
            }
        }
        Ok(PMatrix { n, prime: self.prime, entries })
    }

    pub fn mul_vec(&self, v: &PVector) -> Result<PVector> {
        if v.dim() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: v.dim() });
        }
        let coords = (0..self.n)
            .map(|r| {
                (0..self.n).try_fold(PRational::zero(self.prime), |acc, c| {
                    acc.checked_add(&self.get(r, c).checked_mul(&v.coords()[c])?)
                })
            })
            .collect::<Result<Vec<_>>>()?;
        PVector::new(coords)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|r| (0..r).all(|c| self.get(r, c) == self.get(c, r)))
    }

    /// All entries lie in `Z` (so the matrix acts on `Z_p^N`).
    pub fn is_integral(&self) -> bool {
        self.entries.iter().all(|e| e.is_integer())
    }

    /// Minimum order over the entries, i.e. the order of the matrix as a vector in `Q_p^{N^2}`.
    pub fn order(&self) -> Order {
        self.entries.iter().map(|e| e.order()).min().unwrap_or(Order::Infinite)
    }

    /// Entries as integers after multiplying by `p^{-shift}`; all must be integral.
    pub fn scaled_integers(&self, shift: i64) -> Result<Vec<i128>> {
        self.entries
            .iter()
            .map(|e| {
                let s = e.shift(-shift);
                if s.is_integer() {
                    Ok(s.num())
                } else {
                    Err(Error::InvalidParameter {
                        name: "matrix",
                        detail: format!("entry {e} is not integral after scaling by p^{}", -shift),
                    })
                }
            })
            .collect()
    }

    /// Exact determinant via fraction-free (Bareiss) elimination on the
    /// integer matrix `p^K * self`.
    pub fn det(&self) -> Result<PRational> {
        let n = self.n;
        let kmax = self.entries.iter().map(|e| e.kexp()).max().unwrap_or(0);
        let mut a = self.scaled_integers(-(kmax as i64))?;
        let mut sign = 1i128;
        let mut prev = 1i128;
        for k in 0..n.saturating_sub(1) {
            if a[k * n + k] == 0 {
                let Some(swap) = (k + 1..n).find(|&r| a[r * n + k] != 0) else {
                    return Ok(PRational::zero(self.prime));
                };
                for c in 0..n {
                    a.swap(k * n + c, swap * n + c);
                }
                sign = -sign;
            }
            let pivot = a[k * n + k];
            for i in k + 1..n {
                for j in k + 1..n {
                    let v = a[i * n + j]
                        .checked_mul(pivot)
                        .and_then(|x| a[i * n + k].checked_mul(a[k * n + j]).and_then(|y| x.checked_sub(y)))
                        .ok_or(Error::Overflow("determinant"))?;
                    a[i * n + j] = v / prev;
                }
                a[i * n + k] = 0;
            }
            prev = pivot;
        }
        let d = sign * a[n * n - 1];
        let kexp = (kmax as u64 * n as u64) as u32;
        PRational::new(d, kexp, self.prime)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn determinant_small_cases() {
        let m = PMatrix::from_ints(&[vec![2, 1], vec![1, 3]], 5).unwrap();
        assert_eq!(m.det().unwrap(), PRational::from_int(5, 5).unwrap());
        let d = PMatrix::diagonal(&[1, 1, -3, -1], 3).unwrap();
        assert_eq!(d.det().unwrap(), PRational::from_int(3, 3).unwrap());
        let s = PMatrix::from_ints(&[vec![0, 1, 0], vec![1, 0, 0], vec![0, 0, 1]], 2).unwrap();
        assert_eq!(s.det().unwrap(), PRational::from_int(-1, 2).unwrap());
        let z = PMatrix::from_ints(&[vec![1, 2], vec![2, 4]], 3).unwrap();
        assert!(z.det().unwrap().is_zero());
    }

    #[test]
    fn determinant_with_fractions() {
        let m = PMatrix::parse("[[1/2, 0],[0, 1/4]]", 2).unwrap();
        assert_eq!(m.det().unwrap(), PRational::new(1, 3, 2).unwrap());
    }

    #[test]
    fn parse_roundtrip_shape() {
        let m = PMatrix::parse("[[1,0],[0,-1]]", 3).unwrap();
        assert_eq!(m, PMatrix::diagonal(&[1, -1], 3).unwrap());
        assert!(PMatrix::parse("[[1,0],[0]]", 3).is_err());
    }
}
