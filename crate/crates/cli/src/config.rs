//! Flat `key = value` experiment configs.
//!
//! ```text
//! # shared keys
//! prime = 3
//! dimension = 2
//!
//! [green]
//! alpha = 1
//! ```
//!
//! A key inside `[name]` overrides the top-level key while running the
//! subcommand `name`. Keys may repeat; [`Config::all`] returns every value.

use std::fmt::Display;
use std::str::FromStr;

use ultrafield_core::{
    BilinearForm, EllipticPolynomial, GridFn, Lattice, LevyTriple, PMatrix, PRational, PVector,
};

use crate::error::{CliError, Result};

#[derive(Debug, Clone)]
struct Entry {
    section: Option<String>,
    key: String,
    value: String,
}

#[derive(Debug, Clone)]
pub struct Config {
    entries: Vec<Entry>,
    section: String,
}

impl Config {
    pub fn parse(text: &str, section: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut current = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| CliError::Syntax { line: n + 1, detail: format!("unterminated section {line:?}") })?;
                current = Some(name.trim().to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Syntax { line: n + 1, detail: format!("expected `key = value`, got {line:?}") })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(CliError::Syntax { line: n + 1, detail: "empty key".into() });
            }
            entries.push(Entry { section: current.clone(), key: key.to_string(), value: value.trim().to_string() });
        }
        Ok(Config { entries, section: section.to_string() })
    }

    /// Values of `key`, from the active section if it sets the key at all.
    pub fn all(&self, key: &str) -> Vec<&str> {
        let pick = |sec: Option<&str>| -> Vec<&str> {
            self.entries
                .iter()
                .filter(|e| e.key == key && e.section.as_deref() == sec)
                .map(|e| e.value.as_str())
                .collect()
        };
        let own = pick(Some(&self.section));
        if own.is_empty() {
            pick(None)
        } else {
            own
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.all(key).last().copied()
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| CliError::MissingKey(key.to_string()))
    }

    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.get(key).map(|v| v.parse::<T>().map_err(|e| CliError::invalid(key, format!("{v:?}: {e}")))).transpose()
    }

    pub fn req<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.opt(key)?.ok_or_else(|| CliError::MissingKey(key.to_string()))
    }

    pub fn positive(&self, key: &str, default: Option<f64>) -> Result<f64> {
        let v = match default {
            Some(d) => self.opt(key)?.unwrap_or(d),
            None => self.req(key)?,
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(CliError::invalid(key, format!("{v} must be positive")));
        }
        Ok(v)
    }

    pub fn count(&self, key: &str, default: Option<usize>) -> Result<usize> {
        let v = match default {
            Some(d) => self.opt(key)?.unwrap_or(d),
            None => self.req(key)?,
        };
        if v == 0 {
            return Err(CliError::invalid(key, "must be at least 1"));
        }
        Ok(v)
    }

    pub fn prime(&self) -> Result<u64> {
        self.req("prime")
    }

    pub fn dimension(&self) -> Result<usize> {
        self.count("dimension", None)
    }

    pub fn lattice(&self) -> Result<Lattice> {
        let (p, n) = (self.prime()?, self.dimension()?);
        let j = self.req("j")?;
        let k = self.req("k")?;
        Lattice::new(p, n, j, k).map_err(|e| CliError::invalid("prime/dimension/j/k", e))
    }

    pub fn poly(&self, prime: u64, dim: usize) -> Result<EllipticPolynomial> {
        let s = self.require("poly")?;
        EllipticPolynomial::parse(s, prime, dim).map_err(|e| CliError::invalid("poly", e))
    }

    /// `bilinear`, the standard dot product when absent.
    pub fn form(&self, prime: u64, dim: usize) -> Result<BilinearForm> {
        let Some(s) = self.get("bilinear") else {
            return Ok(BilinearForm::standard(dim, prime));
        };
        let m = PMatrix::parse(s, prime).map_err(|e| CliError::invalid("bilinear", e))?;
        if m.dim() != dim {
            return Err(CliError::invalid("bilinear", format!("expected a {dim}x{dim} matrix")));
        }
        BilinearForm::new(m).map_err(|e| CliError::invalid("bilinear", e))
    }

    /// `levy.a` (0), `levy.sigma` (1) and `levy.atoms = [(s, λ), ...]` (none).
    pub fn levy(&self) -> Result<LevyTriple> {
        let a = self.opt("levy.a")?.unwrap_or(0.0);
        let sigma = self.opt("levy.sigma")?.unwrap_or(1.0);
        let atoms = match self.get("levy.atoms") {
            Some(s) => parse_atoms(s).map_err(|d| CliError::invalid("levy.atoms", d))?,
            None => Vec::new(),
        };
        LevyTriple::new(a, sigma, atoms).map_err(|e| CliError::invalid("levy", e))
    }

    pub fn floats(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.list(key)
    }

    pub fn ints(&self, key: &str) -> Result<Option<Vec<i64>>> {
        self.list(key)
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        let Some(s) = self.get(key) else { return Ok(None) };
        let body = s.trim().trim_start_matches('[').trim_end_matches(']');
        body.split(',')
            .map(|t| t.trim().parse::<T>().map_err(|e| CliError::invalid(key, format!("{t:?}: {e}"))))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Test functions from the repeated `test` key, `defaults` when absent.
    pub fn tests(&self, lat: Lattice, defaults: &[&str]) -> Result<Vec<(String, GridFn)>> {
        let specs = self.all("test");
        let specs = if specs.is_empty() { defaults.to_vec() } else { specs };
        specs
            .iter()
            .map(|s| Ok((s.to_string(), parse_test_fn(s, lat).map_err(|d| CliError::invalid("test", d))?)))
            .collect()
    }
}

fn parse_atoms(s: &str) -> std::result::Result<Vec<(f64, f64)>, String> {
    let body = s.trim();
    let body = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')).ok_or("expected [(s, lambda), ...]")?;
    let mut atoms = Vec::new();
    for part in body.split(')') {
        let part = part.trim().trim_start_matches(',').trim();
        if part.is_empty() {
            continue;
        }
        let inner = part.strip_prefix('(').ok_or_else(|| format!("expected '(' in {part:?}"))?;
        let (a, b) = inner.split_once(',').ok_or_else(|| format!("expected (s, lambda) in {part:?}"))?;
        let s: f64 = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
        let l: f64 = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
        atoms.push((s, l));
    }
    Ok(atoms)
}

/// `[a, b, ...]` with p-rational entries.
pub fn parse_vector(s: &str, prime: u64) -> std::result::Result<PVector, String> {
    let body = s.trim();
    let body = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')).ok_or("expected [a, b, ...]")?;
    let coords = body
        .split(',')
        .map(|t| PRational::parse(t.trim(), prime).map_err(|e| e.to_string()))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    PVector::new(coords).map_err(|e| e.to_string())
}

/// `omega`, `delta` or `ball([c1, ...]; r)` for the ball of radius `p^r`.
pub fn parse_test_fn(s: &str, lat: Lattice) -> std::result::Result<GridFn, String> {
    let s = s.trim();
    match s {
        "omega" => return Ok(GridFn::omega(lat)),
        "delta" => return Ok(GridFn::delta(lat)),
        _ => {}
    }
    let inner = s
        .strip_prefix("ball(")
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| format!("{s:?} is not omega, delta or ball([..]; r)"))?;
    let (c, r) = inner.split_once(';').ok_or_else(|| format!("expected ball(center; radius) in {s:?}"))?;
    let center = parse_vector(c, lat.prime())?;
    if center.dim() != lat.dim() {
        return Err(format!("center {c:?} has {} coordinates, lattice has {}", center.dim(), lat.dim()));
    }
    let radius: i64 = r.trim().parse().map_err(|e| format!("{r:?}: {e}"))?;
    GridFn::indicator_ball(lat, &center, radius).map_err(|e| e.to_string())
}

/// `g=[[..]]; a=[..]`; the translation defaults to zero.
pub fn parse_element(s: &str, prime: u64) -> std::result::Result<(PMatrix, PVector), String> {
    let mut g = None;
    let mut a = None;
    for part in s.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (k, v) = part.split_once('=').ok_or_else(|| format!("expected g=... or a=..., got {part:?}"))?;
        match k.trim() {
            "g" => g = Some(PMatrix::parse(v.trim(), prime).map_err(|e| e.to_string())?),
            "a" => a = Some(parse_vector(v, prime)?),
            other => return Err(format!("unknown element field {other:?}")),
        }
    }
    let g = g.ok_or("element needs g=[[..]]")?;
    let a = a.unwrap_or_else(|| PVector::zero(g.dim(), prime));
    if a.dim() != g.dim() {
        return Err(format!("translation has {} coordinates, matrix is {}x{}", a.dim(), g.dim(), g.dim()));
    }
    Ok((g, a))
}
