//! Affine maps `x ↦ a + g x` preserving a bilinear form and an elliptic
//! polynomial, their action on lattice functions, and invariance checks.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{GridFn, Lattice};
use crate::matrix::PMatrix;
use crate::moments::schwinger_analytic;
use crate::noise::LevyTriple;
use crate::operators::GreenKernel;
use crate::padic::{PRational, PVector};
use crate::poly::EllipticPolynomial;
use crate::BilinearForm;

/// `(a, g)` acting by `x ↦ a + g x`.
#[derive(Debug, Clone, PartialEq)]
pub struct EuclideanElement {
    g: PMatrix,
    a: PVector,
}

impl EuclideanElement {
    pub fn new(g: PMatrix, a: PVector) -> Result<Self> {
        if g.dim() != a.dim() {
            return Err(Error::DimensionMismatch { expected: g.dim(), got: a.dim() });
        }
        if g.prime() != a.prime() {
            return Err(Error::PrimeMismatch(g.prime(), a.prime()));
        }
        Ok(EuclideanElement { g, a })
    }

    pub fn identity(dim: usize, prime: u64) -> Self {
        EuclideanElement { g: PMatrix::identity(dim, prime), a: PVector::zero(dim, prime) }
    }

    pub fn linear(g: PMatrix) -> Self {
        let a = PVector::zero(g.dim(), g.prime());
        EuclideanElement { g, a }
    }

    pub fn translation(a: PVector) -> Self {
        EuclideanElement { g: PMatrix::identity(a.dim(), a.prime()), a }
    }

    pub fn matrix(&self) -> &PMatrix {
        &self.g
    }

    pub fn translation_part(&self) -> &PVector {
        &self.a
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    /// `(a1, g1)(a2, g2) = (a1 + g1 a2, g1 g2)`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        let a = self.a.checked_add(&self.g.mul_vec(&other.a)?)?;
        Ok(EuclideanElement { g: self.g.checked_mul(&other.g)?, a })
    }

    pub fn apply(&self, x: &PVector) -> Result<PVector> {
        self.a.checked_add(&self.g.mul_vec(x)?)
    }
}

fn require_invertible(g: &PMatrix) -> Result<PRational> {
    let det = g.det()?;
    if det.is_zero() {
        return Err(Error::Singular);
    }
    Ok(det)
}

/// Exact check of `gᵀ [B] g = [B]`.
pub fn preserves_quadratic(g: &PMatrix, form: &BilinearForm) -> Result<bool> {
    require_invertible(g)?;
    if g.dim() != form.dim() {
        return Err(Error::DimensionMismatch { expected: form.dim(), got: g.dim() });
    }
    Ok(&g.transpose().checked_mul(form.matrix())?.checked_mul(g)? == form.matrix())
}

type Expansion = BTreeMap<Vec<u32>, PRational>;

fn expansion_mul(a: &Expansion, b: &Expansion) -> Result<Expansion> {
    let mut out = Expansion::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            let c = ca.checked_mul(cb)?;
            let slot = out.entry(e).or_insert_with(|| PRational::zero(c.prime()));
            *slot = slot.checked_add(&c)?;
        }
    }
    out.retain(|_, c| !c.is_zero());
    Ok(out)
}

/// Coefficients of `𝔩(g ξ)` expanded in the monomials of `ξ`.
pub fn compose_polynomial(g: &PMatrix, poly: &EllipticPolynomial) -> Result<BTreeMap<Vec<u32>, PRational>> {
    let n = poly.dim();
    if g.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: g.dim() });
    }
    let p = poly.prime();
    let linear: Vec<Expansion> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| !g.get(i, j).is_zero())
                .map(|j| {
                    let mut e = vec![0; n];
                    e[j] = 1;
                    (e, g.get(i, j))
                })
                .collect()
        })
        .collect();
    let mut total = Expansion::new();
    for (exps, c) in poly.terms() {
        let mut term: Expansion = [(vec![0; n], PRational::from_int(*c, p)?)].into_iter().collect();
        for (i, &a) in exps.iter().enumerate() {
            for _ in 0..a {
                term = expansion_mul(&term, &linear[i])?;
            }
        }
        for (e, c) in term {
            let slot = total.entry(e).or_insert_with(|| PRational::zero(p));
            *slot = slot.checked_add(&c)?;
        }
    }
    total.retain(|_, c| !c.is_zero());
    Ok(total)
}

/// Exact check that `𝔩(g ξ)` and `𝔩(ξ)` have the same coefficients.
pub fn preserves_polynomial(g: &PMatrix, poly: &EllipticPolynomial) -> Result<bool> {
    require_invertible(g)?;
    let composed = compose_polynomial(g, poly)?;
    let own: Expansion = poly
        .terms()
        .iter()
        .map(|(e, c)| Ok((e.clone(), PRational::from_int(*c, poly.prime())?)))
        .collect::<Result<_>>()?;
    Ok(composed == own)
}

/// Index map of `x ↦ a + g x` on a lattice, or why it does not stabilize it.
fn lattice_action(lat: &Lattice, e: &EuclideanElement) -> Result<Vec<usize>> {
    if e.dim() != lat.dim() || e.g.prime() != lat.prime() {
        return Err(Error::LatticeMismatch(format!("element of dimension {} vs {lat}", e.dim())));
    }
    if !e.g.is_integral() {
        return Err(Error::NotLatticeStabilizing("matrix entries must be integers".into()));
    }
    if require_invertible(&e.g)?.norm().exponent != Some(0) {
        return Err(Error::NotLatticeStabilizing("determinant is not a p-adic unit".into()));
    }
    let shift = lat
        .index_for(&e.a)
        .ok_or_else(|| Error::NotLatticeStabilizing(format!("translation {:?} is not a lattice point", e.a)))?;
    let side = lat.side() as i128;
    let gm: Vec<i128> = e.g.entries().iter().map(|c| c.num().rem_euclid(side)).collect();
    let n = lat.dim();
    let mut idx = vec![0; n];
    let mut img = vec![0; n];
    Ok((0..lat.len())
        .map(|flat| {
            lat.unflatten(flat, &mut idx);
            for (r, slot) in img.iter_mut().enumerate() {
                let s: i128 = (0..n).map(|c| gm[r * n + c] * idx[c] as i128).sum::<i128>() + shift[r] as i128;
                *slot = s.rem_euclid(side) as usize;
            }
            lat.flatten(&img)
        })
        .collect())
}

/// `((a, g) f)(x) = f((a, g)^{-1} x)`.
pub fn act_on_function(f: &GridFn, e: &EuclideanElement) -> Result<GridFn> {
    let map = lattice_action(f.lattice(), e)?;
    let mut out = f.clone();
    for (src, &dst) in map.iter().enumerate() {
        out.values_mut()[dst] = f.values()[src];
    }
    Ok(out)
}

/// One row of an invariance report.
#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceRow {
    pub preserves_quadratic: bool,
    pub preserves_polynomial: bool,
    /// `max_x |G(g x) - G(x)|`; `None` when the element fails a check.
    pub kernel_deviation: Option<f64>,
    /// `|S_2(g_1 ⊗ g_2) - S_2((a,g) g_1 ⊗ (a,g) g_2)|`.
    pub schwinger_deviation: Option<f64>,
    /// Reason the deviations were not computed.
    pub rejection: Option<String>,
}

/// Checks each element against the kernel's form and polynomial, then measures
/// the kernel and two-point function deviations under its action.
pub fn invariance_report(
    g: &GreenKernel,
    elements: &[EuclideanElement],
    tests: (&GridFn, &GridFn),
    levy: &LevyTriple,
) -> Result<Vec<InvarianceRow>> {
    let base = schwinger_analytic(&[tests.0.clone(), tests.1.clone()], levy, g)?;
    elements
        .par_iter()
        .map(|e| {
            let q = preserves_quadratic(&e.g, g.form())?;
            let l = preserves_polynomial(&e.g, g.poly())?;
            let mut row = InvarianceRow {
                preserves_quadratic: q,
                preserves_polynomial: l,
                kernel_deviation: None,
                schwinger_deviation: None,
                rejection: None,
            };
            if !(q && l) {
                row.rejection = Some(
                    match (q, l) {
                        (false, false) => "preserves neither the form nor the polynomial",
                        (false, true) => "does not preserve the bilinear form",
                        _ => "does not preserve the polynomial",
                    }
                    .into(),
                );
                return Ok(row);
            }
            let moved = match act_on_function(g.values(), &EuclideanElement::linear(e.g.clone())) {
                Ok(m) => m,
                Err(err @ Error::NotLatticeStabilizing(_)) => {
                    row.rejection = Some(err.to_string());
                    return Ok(row);
                }
                Err(err) => return Err(err),
            };
            row.kernel_deviation = Some(moved.max_abs_diff(g.values())?);
            let t0 = act_on_function(tests.0, e)?;
            let t1 = act_on_function(tests.1, e)?;
            row.schwinger_deviation = Some((schwinger_analytic(&[t0, t1], levy, g)? - base).abs());
            Ok(row)
        })
        .collect()
}
