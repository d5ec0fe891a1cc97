//! Pseudodifferential operators with smooth symbols, the fractional
//! Klein–Gordon solver and two independent evaluators of its Green function.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{fourier_forward, fourier_inverse, BilinearForm, Domain, GridFn, Lattice};
use crate::padic::{checked_pow, ord_int, PVector, UnitComplex};
use crate::poly::{certify_minimal, EllipticPolynomial, EllipticityCertificate};

/// Highest covering level tried when a Green kernel needs the sphere profile.
pub const MAX_PROFILE_LEVEL: u32 = 4;

/// A frequency lattice point handed to a symbol evaluator.
#[derive(Debug, Clone, Copy)]
pub struct FreqPoint<'a> {
    pub lattice: &'a Lattice,
    pub index: &'a [usize],
}

impl FreqPoint<'_> {
    /// `e` with `||ξ||_p = p^e`, `None` at the origin cell.
    pub fn norm_exponent(&self) -> Option<i64> {
        self.lattice.norm_exponent(self.index)
    }

    pub fn norm(&self) -> f64 {
        self.norm_exponent().map_or(0.0, |e| (self.lattice.prime() as f64).powi(e as i32))
    }

    pub fn point(&self) -> PVector {
        self.lattice.point(self.index)
    }

    /// `|𝔩(ξ)|_p`; NaN when the value cannot be computed exactly.
    pub fn poly_abs(&self, poly: &EllipticPolynomial) -> f64 {
        let n: Vec<i128> = self.index.iter().map(|&m| m as i128).collect();
        match poly.ord_int(&n) {
            Ok(None) => 0.0,
            Ok(Some(o)) => {
                let e = self.lattice.support() as i64 * poly.degree() as i64 - o as i64;
                (poly.prime() as f64).powi(e as i32)
            }
            Err(_) => f64::NAN,
        }
    }
}

type Evaluator = dyn Fn(&FreqPoint) -> f64 + Send + Sync;

/// Two-sided growth `C0 ||ξ||^α <= a(ξ) <= C1 ||ξ||^α` for `||ξ|| >= p^{m0}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolGrowth {
    pub c0: f64,
    pub c1: f64,
    pub alpha: f64,
    pub m0: i64,
}

/// Frequency multiplier `a(ξ)` together with its lower bound and growth.
#[derive(Clone)]
pub struct SmoothSymbol {
    eval: Arc<Evaluator>,
    lower_bound: f64,
    growth: Option<SymbolGrowth>,
}

impl fmt::Debug for SmoothSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothSymbol")
            .field("lower_bound", &self.lower_bound)
            .field("growth", &self.growth)
            .finish_non_exhaustive()
    }
}

impl SmoothSymbol {
    pub fn new(
        eval: impl Fn(&FreqPoint) -> f64 + Send + Sync + 'static,
        lower_bound: f64,
        growth: Option<SymbolGrowth>,
    ) -> Self {
        SmoothSymbol { eval: Arc::new(eval), lower_bound, growth }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c, c, Some(SymbolGrowth { c0: c, c1: c, alpha: 0.0, m0: 0 }))
    }

    /// `max(1, ||ξ||_p)^α`.
    pub fn bracket_power(alpha: f64) -> Self {
        Self::new(
            move |xi| xi.norm().max(1.0).powf(alpha),
            1.0,
            Some(SymbolGrowth { c0: 1.0, c1: 1.0, alpha, m0: 0 }),
        )
    }

    /// `||ξ||_p^α`, which vanishes at the origin.
    pub fn norm_power(alpha: f64) -> Self {
        Self::new(move |xi| xi.norm().powf(alpha), 0.0, Some(SymbolGrowth { c0: 1.0, c1: 1.0, alpha, m0: 0 }))
    }

    /// `|𝔩(ξ)|_p^α + m^2`.
    pub fn klein_gordon(poly: &EllipticPolynomial, alpha: f64, mass: f64) -> Result<Self> {
        check_positive("alpha", alpha)?;
        check_positive("mass", mass)?;
        let poly = poly.clone();
        let m2 = mass * mass;
        Ok(Self::new(move |xi| xi.poly_abs(&poly).powf(alpha) + m2, m2, None))
    }

    /// `(|𝔩(ξ)|_p + m^2)^α`.
    pub fn klein_gordon_alt(poly: &EllipticPolynomial, alpha: f64, mass: f64) -> Result<Self> {
        check_positive("alpha", alpha)?;
        check_positive("mass", mass)?;
        let poly = poly.clone();
        let m2 = mass * mass;
        Ok(Self::new(move |xi| (xi.poly_abs(&poly) + m2).powf(alpha), m2.powf(alpha), None))
    }

    /// Attaches growth constants derived from an ellipticity certificate. The
    /// symbol is taken to be one of the Klein–Gordon forms in `poly`.
    pub fn with_certificate(mut self, cert: &EllipticityCertificate, alpha: f64, mass: f64) -> Self {
        let (c0, c1) = cert.constants(alpha);
        let d = cert.poly().degree() as f64;
        self.growth = Some(SymbolGrowth { c0, c1: c1 + mass * mass, alpha: alpha * d, m0: 0 });
        self
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    pub fn growth(&self) -> Option<SymbolGrowth> {
        self.growth
    }

    pub fn eval(&self, xi: &FreqPoint) -> f64 {
        (self.eval)(xi)
    }

    /// Values on every point of a frequency lattice, in flat order.
    pub fn sample(&self, lat: &Lattice) -> Vec<f64> {
        (0..lat.len())
            .into_par_iter()
            .map_init(
                || vec![0; lat.dim()],
                |idx, flat| {
                    lat.unflatten(flat, idx);
                    self.eval(&FreqPoint { lattice: lat, index: idx })
                },
            )
            .collect()
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, detail: format!("{v} must be positive and finite") })
    }
}

fn require_position(f: &GridFn) -> Result<()> {
    if f.domain() != Domain::Position {
        return Err(Error::DomainMismatch { expected: "position", got: f.domain().name() });
    }
    Ok(())
}

fn multiply_spectrum(f: &GridFn, form: &BilinearForm, weights: impl Fn(&Lattice) -> Result<Vec<f64>>) -> Result<GridFn> {
    require_position(f)?;
    let mut fh = fourier_forward(f, form)?;
    let w = weights(fh.lattice())?;
    for (v, w) in fh.values_mut().iter_mut().zip(&w) {
        *v *= *w;
    }
    fourier_inverse(&fh, form)
}

/// `F^{-1}(a F f)`.
pub fn apply_symbol(f: &GridFn, a: &SmoothSymbol, form: &BilinearForm) -> Result<GridFn> {
    multiply_spectrum(f, form, |lat| {
        let s = a.sample(lat);
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSymbol("not finite"));
        }
        if s.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidSymbol("negative"));
        }
        Ok(s)
    })
}

/// `F^{-1}(F g / a)`.
pub fn invert_symbol(g: &GridFn, a: &SmoothSymbol, form: &BilinearForm) -> Result<GridFn> {
    multiply_spectrum(g, form, |lat| {
        a.sample(lat)
            .into_iter()
            .map(|v| {
                if !v.is_finite() {
                    Err(Error::InvalidSymbol("not finite"))
                } else if v <= 0.0 {
                    Err(Error::InvalidSymbol("non-positive"))
                } else {
                    Ok(1.0 / v)
                }
            })
            .collect()
    })
}

/// Solves `(L_α + m^2) u = g` on the lattice.
pub fn klein_gordon_solve(g: &GridFn, poly: &EllipticPolynomial, alpha: f64, mass: f64, form: &BilinearForm) -> Result<GridFn> {
    invert_symbol(g, &SmoothSymbol::klein_gordon(poly, alpha, mass)?, form)
}

/// `||(L_α + m^2) u - g||_{L^2}`.
pub fn klein_gordon_residual(
    u: &GridFn,
    g: &GridFn,
    poly: &EllipticPolynomial,
    alpha: f64,
    mass: f64,
    form: &BilinearForm,
) -> Result<f64> {
    let lu = apply_symbol(u, &SmoothSymbol::klein_gordon(poly, alpha, mass)?, form)?;
    Ok(lu.sub(g)?.l2_norm())
}

/// Lattice Green function `G(x; m, α)` together with its spectrum.
#[derive(Debug, Clone)]
pub struct GreenKernel {
    values: GridFn,
    spectrum: GridFn,
    mass: f64,
    alpha: f64,
    poly: EllipticPolynomial,
    form: BilinearForm,
    cert: EllipticityCertificate,
}

impl GreenKernel {
    pub fn lattice(&self) -> &Lattice {
        self.values.lattice()
    }

    /// Position-domain values; the origin cell holds the lattice value there.
    pub fn values(&self) -> &GridFn {
        &self.values
    }

    /// `Ĝ`: cell averages of `1 / (|𝔩|^α + m^2)` on the frequency lattice.
    pub fn spectrum(&self) -> &GridFn {
        &self.spectrum
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn poly(&self) -> &EllipticPolynomial {
        &self.poly
    }

    pub fn form(&self) -> &BilinearForm {
        &self.form
    }

    pub fn certificate(&self) -> &EllipticityCertificate {
        &self.cert
    }

    /// Points with `||x||_p >= p^{L-k}` carry the exact value of `G`; closer to
    /// the origin the frequency cut-off of the lattice is felt.
    pub fn min_resolved_exponent(&self) -> i64 {
        self.cert.level() as i64 - self.lattice().resolution() as i64
    }

    pub fn is_resolved(&self, idx: &[usize]) -> bool {
        self.lattice().norm_exponent(idx).is_some_and(|e| e >= self.min_resolved_exponent())
    }

    pub fn real_values(&self) -> Vec<f64> {
        self.values.real_values()
    }

    /// Smallest real part over the nonzero lattice points.
    pub fn min_off_origin(&self) -> f64 {
        self.values.values().iter().skip(1).map(|v| v.re).fold(f64::INFINITY, f64::min)
    }

    /// Header fields `m alpha poly` for CSV export.
    pub fn header(&self) -> String {
        format!("{} {} {}", self.mass, self.alpha, self.poly)
    }

    /// Lattice convolution `G * f`.
    pub fn convolve(&self, f: &GridFn) -> Result<GridFn> {
        require_position(f)?;
        self.lattice().same_as(f.lattice())?;
        let mut fh = fourier_forward(f, &self.form)?;
        let c = 1.0 / self.form.cq();
        for (v, s) in fh.values_mut().iter_mut().zip(self.spectrum.values()) {
            *v *= s * c;
        }
        fourier_inverse(&fh, &self.form)
    }
}

/// Green function as the inverse transform of the cell-averaged reciprocal
/// symbol. Frequency cells on which `|𝔩|` is not constant are averaged over
/// finer classes, and the origin cell integrates the shells below the lattice
/// resolution exactly.
pub fn green_spectral(lat: &Lattice, poly: &EllipticPolynomial, alpha: f64, mass: f64, form: &BilinearForm) -> Result<GreenKernel> {
    check_positive("alpha", alpha)?;
    check_positive("mass", mass)?;
    if poly.dim() != lat.dim() || poly.prime() != lat.prime() {
        return Err(Error::LatticeMismatch(format!("{lat} vs polynomial over p={} in {} variables", poly.prime(), poly.dim())));
    }
    let cert = certify_minimal(poly, MAX_PROFILE_LEVEL)?;
    let dual = lat.dual(form)?;
    let spectrum = reciprocal_symbol_averages(&dual, &cert, alpha, mass)?;
    let spectrum = GridFn::from_real(dual, &spectrum, Domain::Frequency)?;
    let values = fourier_inverse(&spectrum, form)?;
    let im = values.max_imag();
    if im >= 1e-10 {
        return Err(Error::NonReal(im));
    }
    let values = values.map(|v| Complex64::new(v.re, 0.0));
    Ok(GreenKernel { values, spectrum, mass, alpha, poly: poly.clone(), form: form.clone(), cert })
}

fn reciprocal_symbol_averages(dual: &Lattice, cert: &EllipticityCertificate, alpha: f64, mass: f64) -> Result<Vec<f64>> {
    let p = dual.prime();
    let pf = p as f64;
    let n = dual.dim();
    let d = cert.poly().degree() as i64;
    let level = cert.level();
    let m2 = mass * mass;
    let digits = (dual.support() + dual.resolution()) as i64;
    let js = dual.support() as i64;
    let modulus = checked_pow(p, level)?;
    let origin = origin_cell_average(dual, cert, alpha, mass);

    let weight = |e: i64, v: u32| 1.0 / (pf.powf((e * d - v as i64) as f64 * alpha) + m2);
    let values: Result<Vec<f64>> = (0..dual.len())
        .into_par_iter()
        .map_init(
            || (vec![0usize; n], vec![0u64; n]),
            |(idx, u), flat| {
                if flat == 0 {
                    return Ok(origin);
                }
                dual.unflatten(flat, idx);
                let o = idx.iter().filter(|&&m| m != 0).map(|&m| ord_int(m as i128, p)).min().unwrap() as i64;
                let e = js - o;
                let shift = p.pow(o as u32);
                for (ui, &m) in u.iter_mut().zip(idx.iter()) {
                    *ui = (m as u64 / shift) % modulus;
                }
                let known = digits - o;
                if known >= level as i64 {
                    return Ok(weight(e, cert.sphere_ord(u)?));
                }
                // only u mod p^known is determined by the cell
                let step = p.pow(known as u32);
                let free = p.pow(level - known as u32);
                let count = (free as usize).pow(n as u32);
                let base = u.clone();
                let mut acc = 0.0;
                for t in 0..count {
                    let mut r = t;
                    for (ui, &b) in u.iter_mut().zip(&base).rev() {
                        *ui = (b + step * (r as u64 % free)) % modulus;
                        r /= free as usize;
                    }
                    acc += weight(e, cert.sphere_ord(u)?);
                }
                Ok(acc / count as f64)
            },
        )
        .collect();
    values
}

/// `p^{k'N} ∫_{||ξ|| <= p^{-k'}} dξ / (|𝔩(ξ)|^α + m^2)`, summed shell by shell.
fn origin_cell_average(dual: &Lattice, cert: &EllipticityCertificate, alpha: f64, mass: f64) -> f64 {
    let pf = dual.prime() as f64;
    let n = dual.dim() as i32;
    let d = cert.poly().degree() as f64;
    let m2 = mass * mass;
    let cell_exp = -(dual.resolution() as i64);
    let class_vol = pf.powi(-(cert.level() as i32) * n);
    let profile: Vec<(f64, f64)> = cert
        .ord_histogram()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(v, &c)| (c as f64 * class_vol, v as f64))
        .collect();
    let mut total = 0.0;
    let mut l = cell_exp;
    loop {
        let shell: f64 = profile
            .iter()
            .map(|&(w, v)| w / (pf.powf((l as f64 * d - v) * alpha) + m2))
            .sum::<f64>()
            * pf.powi(l as i32 * n);
        total += shell;
        if shell < total * 1e-18 || l < cell_exp - 4000 {
            break;
        }
        l -= 1;
    }
    total * pf.powi(dual.resolution() as i32 * n)
}

/// Value of the shell series with the bound on the discarded low shells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    /// Bound on the discarded low shells plus the rounding error of the sum.
    pub tail_bound: f64,
    /// Shells `lowest..=highest` were summed.
    pub lowest: i64,
    pub highest: i64,
}

/// `G(x) = C(q) sum_l g^{(l)}(x)` with `g^{(l)}` the exact character sum over the
/// covering classes of the certificate. Shells above `L - log_p ||Bx||_p`
/// vanish identically; low shells are dropped once their geometric majorant is
/// below `tol`.
pub fn green_series(
    x: &PVector,
    poly: &EllipticPolynomial,
    alpha: f64,
    mass: f64,
    form: &BilinearForm,
    cert: &EllipticityCertificate,
    tol: f64,
) -> Result<SeriesValue> {
    check_positive("alpha", alpha)?;
    check_positive("mass", mass)?;
    check_positive("tol", tol)?;
    cert.check_poly(poly)?;
    if x.is_zero() {
        return Err(Error::OriginExcluded);
    }
    let p = poly.prime();
    let pf = p as f64;
    let n = poly.dim() as i64;
    let level = cert.level() as i64;
    let d = poly.degree() as f64;
    let m2 = mass * mass;

    let bx = form.matrix().mul_vec(x)?;
    let eb = bx.norm().exponent.ok_or(Error::Singular)?;
    let highest = level - eb;
    let kmax = bx.coords().iter().map(|c| c.kexp()).max().unwrap_or(0);
    let nums: Vec<i128> = bx
        .coords()
        .iter()
        .map(|c| {
            let scale = (p as i128).checked_pow(kmax - c.kexp()).ok_or(Error::Overflow("phase numerator"))?;
            c.num().checked_mul(scale).ok_or(Error::Overflow("phase numerator"))
        })
        .collect::<Result<_>>()?;
    let phases: Vec<(i128, f64)> = cert
        .reps()
        .iter()
        .map(|(z, v)| {
            let dot = nums
                .iter()
                .zip(z)
                .try_fold(0i128, |acc, (&a, &b)| acc.checked_add(a.checked_mul(b as i128)?))
                .ok_or(Error::Overflow("phase numerator"))?;
            Ok((dot, *v as f64))
        })
        .collect::<Result<_>>()?;

    let tail = |lo: i64| form.cq() * pf.powf(((lo - 1) * n) as f64) / m2;
    let mut lowest = highest + 1;
    while tail(lowest) >= tol {
        lowest -= 1;
    }

    let mut sum = Complex64::new(0.0, 0.0);
    let mut magnitude = 0.0;
    let mut terms = 0usize;
    for l in lowest..=highest {
        let den_exp = kmax as i64 + l;
        let den = if den_exp > 0 { Some(checked_pow(p, den_exp as u32)? as i128) } else { None };
        let shell: Complex64 = phases
            .iter()
            .map(|&(dot, v)| {
                let w = 1.0 / (pf.powf((l as f64 * d - v) * alpha) + m2);
                match den {
                    None => Complex64::new(w, 0.0),
                    Some(den) => {
                        let r = (-dot).rem_euclid(den) as u128;
                        UnitComplex::from_turns(r, den as u128).to_complex() * w
                    }
                }
            })
            .sum();
        let vol = pf.powf(((l - level) * n) as f64);
        sum += shell * vol;
        magnitude += phases.iter().map(|&(_, v)| 1.0 / (pf.powf((l as f64 * d - v) * alpha) + m2)).sum::<f64>() * vol;
        terms += phases.len();
    }
    let rounding = 2.0 * terms as f64 * f64::EPSILON * form.cq() * magnitude;
    Ok(SeriesValue { value: form.cq() * sum.re, tail_bound: tail(lowest) + rounding, lowest, highest })
}

/// Region of a log-log decay fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayRegime {
    /// Resolved shells with `||x||_p <= 1`.
    NearZero,
    /// Shells with `||x||_p > 1`.
    Infinity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub slope: f64,
    /// Slope predicted by the asymptotics: `αd - N` or `0` near the origin,
    /// `-(αd + N)` at infinity.
    pub expected: f64,
    /// `αd > N`, so `G` is continuous at the origin and no power law is expected there.
    pub continuous: bool,
    /// `(e, mean of G over ||x||_p = p^e)`.
    pub shells: Vec<(i64, f64)>,
}

/// Least-squares slope of `ln G` against `ln ||x||_p` over shell averages.
pub fn decay_fit(g: &GreenKernel, regime: DecayRegime) -> Result<DecayFit> {
    let lat = g.lattice();
    let ad = g.alpha * g.poly.degree() as f64;
    let n = lat.dim() as f64;
    let (lo, hi) = match regime {
        DecayRegime::NearZero => (g.min_resolved_exponent(), 0),
        DecayRegime::Infinity => (1.max(g.min_resolved_exponent()), lat.support() as i64),
    };
    let mut sums = std::collections::BTreeMap::<i64, (f64, usize)>::new();
    for (flat, v) in g.values.values().iter().enumerate() {
        if let Some(e) = lat.norm_exponent_flat(flat) {
            if e >= lo && e <= hi {
                let s = sums.entry(e).or_insert((0.0, 0));
                s.0 += v.re;
                s.1 += 1;
            }
        }
    }
    let shells: Vec<(i64, f64)> = sums.into_iter().map(|(e, (s, c))| (e, s / c as f64)).collect();
    if shells.len() < 4 {
        return Err(Error::InsufficientShells { needed: 4, found: shells.len() });
    }
    if let Some(&(e, _)) = shells.iter().find(|s| s.1 <= 0.0) {
        return Err(Error::NonPositiveShell(e));
    }
    let lp = (lat.prime() as f64).ln();
    let pts: Vec<(f64, f64)> = shells.iter().map(|&(e, v)| (e as f64 * lp, v.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let continuous = ad > n;
    let expected = match regime {
        DecayRegime::NearZero if ad < n => ad - n,
        DecayRegime::NearZero => 0.0,
        DecayRegime::Infinity => -(ad + n),
    };
    Ok(DecayFit { slope: sxy / sxx, expected, continuous, shells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::PRational;
    use crate::poly::certify_elliptic;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_fn(lat: Lattice, rng: &mut ChaCha8Rng) -> GridFn {
        GridFn::from_index_fn(lat, Domain::Position, |_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn linear(p: u64) -> EllipticPolynomial {
        EllipticPolynomial::parse("x1", p, 1).unwrap()
    }

    #[test]
    fn identity_and_bracket_symbols() {
        let lat = Lattice::new(3, 2, 1, 2).unwrap();
        let form = BilinearForm::standard(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = random_fn(lat, &mut rng);
        let g = apply_symbol(&f, &SmoothSymbol::constant(1.0), &form).unwrap();
        assert!(g.max_abs_diff(&f).unwrap() < 1e-12);
        let om = GridFn::omega(lat);
        let h = apply_symbol(&om, &SmoothSymbol::bracket_power(1.5), &form).unwrap();
        assert!(h.max_abs_diff(&om).unwrap() < 1e-12);
        let c = invert_symbol(&f, &SmoothSymbol::constant(4.0), &form).unwrap();
        assert!(c.max_abs_diff(&f.scale(0.25)).unwrap() < 1e-12);
    }

    #[test]
    fn norm_square_matches_two_transform_oracle() {
        let lat = Lattice::new(2, 1, 3, 3).unwrap();
        let form = BilinearForm::standard(1, 2);
        let f = GridFn::delta(lat);
        let got = apply_symbol(&f, &SmoothSymbol::norm_power(2.0), &form).unwrap();
        let mut fh = fourier_forward(&f, &form).unwrap();
        let dual = *fh.lattice();
        for n in 0..dual.len() {
            let w = dual.point(&[n]).norm().to_f64().powi(2);
            fh.values_mut()[n] *= w;
        }
        let want = fourier_inverse(&fh, &form).unwrap();
        assert!(got.max_abs_diff(&want).unwrap() < 1e-12);
    }

    #[test]
    fn symbol_sign_errors() {
        let lat = Lattice::new(2, 1, 1, 1).unwrap();
        let form = BilinearForm::standard(1, 2);
        let f = GridFn::omega(lat);
        let neg = SmoothSymbol::new(|_| -1.0, -1.0, None);
        assert_eq!(apply_symbol(&f, &neg, &form), Err(Error::InvalidSymbol("negative")));
        assert_eq!(invert_symbol(&f, &SmoothSymbol::norm_power(1.0), &form), Err(Error::InvalidSymbol("non-positive")));
    }

    #[test]
    fn solver_roundtrip_and_zero() {
        let form = BilinearForm::standard(2, 3);
        let poly = EllipticPolynomial::parse("x1^2 + x2^2", 3, 2).unwrap();
        let lat = Lattice::new(3, 2, 2, 2).unwrap();
        let zero = GridFn::zeros(lat, Domain::Position);
        let u = klein_gordon_solve(&zero, &poly, 0.8, 1.0, &form).unwrap();
        assert!(u.values().iter().all(|v| v.norm() == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let g = random_fn(lat, &mut rng);
            let u = klein_gordon_solve(&g, &poly, 0.8, 1.0, &form).unwrap();
            assert!(klein_gordon_residual(&u, &g, &poly, 0.8, 1.0, &form).unwrap() < 1e-10);
            let kg = SmoothSymbol::klein_gordon(&poly, 0.8, 1.0).unwrap();
            let v = invert_symbol(&g, &kg, &form).unwrap();
            assert!(u.max_abs_diff(&v).unwrap() < 1e-15);
        }
        assert!(klein_gordon_solve(&zero, &poly, 0.8, 0.0, &form).is_err());
    }

    #[test]
    fn alternative_symbol_is_bounded_below() {
        let form = BilinearForm::standard(1, 3);
        let lat = Lattice::new(3, 1, 2, 2).unwrap();
        let a = SmoothSymbol::klein_gordon_alt(&linear(3), 0.5, 1.0).unwrap();
        let s = a.sample(&lat.dual(&form).unwrap());
        assert!(s.iter().all(|&v| v >= a.lower_bound()));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = random_fn(lat, &mut rng);
        let u = invert_symbol(&g, &a, &form).unwrap();
        assert!(apply_symbol(&u, &a, &form).unwrap().max_abs_diff(&g).unwrap() < 1e-12);
    }

    #[test]
    fn solve_omega_at_origin() {
        // N = 1, 𝔩 = ξ, α = 1, m = 1, g = Ω: û = Ω/(|ξ| + 1).
        let p = 3u64;
        let pf = p as f64;
        let form = BilinearForm::standard(1, p);
        let lat = Lattice::new(p, 1, 4, 4).unwrap();
        let u = klein_gordon_solve(&GridFn::omega(lat), &linear(p), 1.0, 1.0, &form).unwrap();
        let radial = |lowest: i32| -> f64 {
            (lowest..=0).map(|e| (1.0 - 1.0 / pf) * pf.powi(e) / (pf.powi(e) + 1.0)).sum()
        };
        let origin_cell = pf.powi(-4) / (0.0 + 1.0);
        let lattice_sum = radial(-3) + origin_cell;
        assert!((u.values()[0].re - lattice_sum).abs() < 1e-12);
        assert!((u.values()[0].re - radial(-40)).abs() < 2.0 * pf.powi(-4));
    }

    #[test]
    fn green_origin_matches_radial_sum() {
        let p = 2u64;
        let pf = p as f64;
        let form = BilinearForm::standard(1, p);
        let lat = Lattice::new(p, 1, 6, 6).unwrap();
        let g = green_spectral(&lat, &linear(p), 2.0, 1.0, &form).unwrap();
        let radial: f64 = (-200..=6).map(|e| (1.0 - 1.0 / pf) * pf.powi(e) / (pf.powi(2 * e) + 1.0)).sum();
        assert!((g.values().values()[0].re - radial).abs() < 1e-6);
        assert!(g.min_off_origin() >= -1e-10);
        let refl = g.values().reflect();
        assert!(refl.max_abs_diff(g.values()).unwrap() < 1e-12);
    }

    #[test]
    fn series_matches_spectral_one_dim() {
        let p = 2u64;
        let form = BilinearForm::standard(1, p);
        let poly = linear(p);
        let lat = Lattice::new(p, 1, 5, 5).unwrap();
        let g = green_spectral(&lat, &poly, 2.0, 1.0, &form).unwrap();
        let cert = certify_elliptic(&poly, 1).unwrap();
        let mut checked = 0;
        for flat in 1..lat.len() {
            let idx = lat.index_of(flat);
            if !g.is_resolved(&idx) {
                continue;
            }
            let s = green_series(&lat.point(&idx), &poly, 2.0, 1.0, &form, &cert, 1e-12).unwrap();
            let spec = g.values().values()[flat].re;
            assert!((s.value - spec).abs() <= (1e-6f64).max(s.tail_bound + 1e-12), "flat {flat}: {} vs {spec}", s.value);
            checked += 1;
        }
        assert!(checked >= 20);
    }

    #[test]
    fn shells_above_cutoff_vanish() {
        let p = 3u64;
        let form = BilinearForm::standard(2, p);
        let poly = EllipticPolynomial::parse("x1^2 + x2^2", p, 2).unwrap();
        let cert = certify_elliptic(&poly, 1).unwrap();
        let x = PVector::new(vec![PRational::new(1, 1, p).unwrap(), PRational::zero(p)]).unwrap();
        let s = green_series(&x, &poly, 1.0, 1.0, &form, &cert, 1e-10).unwrap();
        // ||x|| = 3, L = 1: highest shell 0
        assert_eq!(s.highest, 0);
        // a shell above the cut-off sums characters of a nontrivial coset to zero
        let l = s.highest + 1;
        let den = 3i128.pow((1 + l) as u32);
        let total: Complex64 = (0..9u64)
            .flat_map(|a| (0..9u64).map(move |b| (a, b)))
            .filter(|(a, b)| a % 3 != 0 || b % 3 != 0)
            .map(|(a, _)| UnitComplex::from_turns((-(a as i128)).rem_euclid(den) as u128, den as u128).to_complex())
            .sum();
        assert!(total.norm() < 1e-12);
        assert_eq!(green_series(&PVector::zero(2, p), &poly, 1.0, 1.0, &form, &cert, 1e-10), Err(Error::OriginExcluded));
        let other = EllipticPolynomial::parse("x1^2 + 2*x2^2", p, 2).unwrap();
        assert_eq!(green_series(&x, &other, 1.0, 1.0, &form, &cert, 1e-10), Err(Error::CertificateMismatch));
    }

    #[test]
    fn series_matches_spectral_two_dim() {
        let p = 3u64;
        let form = BilinearForm::standard(2, p);
        let poly = EllipticPolynomial::parse("x1^2 + x2^2", p, 2).unwrap();
        let lat = Lattice::new(p, 2, 3, 3).unwrap();
        let g = green_spectral(&lat, &poly, 1.0, 1.0, &form).unwrap();
        let cert = certify_elliptic(&poly, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..40 {
            let flat = rng.random_range(1..lat.len());
            let idx = lat.index_of(flat);
            if !g.is_resolved(&idx) {
                continue;
            }
            let s = green_series(&lat.point(&idx), &poly, 1.0, 1.0, &form, &cert, 1e-13).unwrap();
            let spec = g.values().values()[flat].re;
            assert!((s.value - spec).abs() <= 1e-5 * spec.abs() + s.tail_bound + 1e-14, "{idx:?}: {} vs {spec}", s.value);
        }
    }

    #[test]
    fn general_form_series_matches_spectral() {
        let p = 3u64;
        let form = BilinearForm::new(crate::matrix::PMatrix::parse("[[1,1],[1,2]]", p).unwrap()).unwrap();
        let poly = EllipticPolynomial::parse("x1^2 + x2^2", p, 2).unwrap();
        let lat = Lattice::new(p, 2, 2, 2).unwrap();
        let g = green_spectral(&lat, &poly, 1.0, 1.0, &form).unwrap();
        let cert = certify_elliptic(&poly, 1).unwrap();
        for flat in [1usize, 10, 40, 80] {
            let idx = lat.index_of(flat);
            if !g.is_resolved(&idx) {
                continue;
            }
            let s = green_series(&lat.point(&idx), &poly, 1.0, 1.0, &form, &cert, 1e-13).unwrap();
            assert!((s.value - g.values().values()[flat].re).abs() < 1e-10);
        }
    }

    #[test]
    fn convolution_with_delta_returns_kernel() {
        let p = 2u64;
        let form = BilinearForm::standard(1, p);
        let lat = Lattice::new(p, 1, 3, 3).unwrap();
        let g = green_spectral(&lat, &linear(p), 1.0, 1.0, &form).unwrap();
        let c = g.convolve(&GridFn::delta(lat)).unwrap();
        assert!(c.max_abs_diff(g.values()).unwrap() < 1e-12);
        // G * g solves the Klein–Gordon equation
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = GridFn::from_index_fn(lat, Domain::Position, |_| Complex64::new(rng.random_range(-1.0..1.0), 0.0));
        let u = g.convolve(&f).unwrap();
        let mut spec = fourier_forward(&u, &form).unwrap();
        let fh = fourier_forward(&f, &form).unwrap();
        for (v, (s, h)) in spec.values_mut().iter_mut().zip(g.spectrum().values().iter().zip(fh.values())) {
            *v -= s * h;
        }
        assert!(spec.values().iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn decay_fit_needs_shells() {
        let p = 2u64;
        let form = BilinearForm::standard(1, p);
        let lat = Lattice::new(p, 1, 2, 2).unwrap();
        let g = green_spectral(&lat, &linear(p), 2.0, 1.0, &form).unwrap();
        assert!(matches!(decay_fit(&g, DecayRegime::Infinity), Err(Error::InsufficientShells { .. })));
        let lat = Lattice::new(p, 1, 6, 6).unwrap();
        let g = green_spectral(&lat, &linear(p), 2.0, 1.0, &form).unwrap();
        let near = decay_fit(&g, DecayRegime::NearZero).unwrap();
        assert!(near.continuous);
        assert_eq!(near.expected, 0.0);
        assert!(near.slope.abs() < 0.5);
        let far = decay_fit(&g, DecayRegime::Infinity).unwrap();
        assert_eq!(far.expected, -3.0);
        assert!(far.slope < -2.0);
    }

    #[test]
    fn uncertifiable_polynomial_has_no_green_kernel() {
        let p = 5u64;
        let form = BilinearForm::standard(2, p);
        let poly = EllipticPolynomial::parse("x1^2 + x2^2", p, 2).unwrap();
        let lat = Lattice::new(p, 2, 1, 1).unwrap();
        assert!(matches!(green_spectral(&lat, &poly, 1.0, 1.0, &form), Err(Error::NotElliptic { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn solver_inverts_symbol(
            v in prop::collection::vec(-1.0f64..1.0, 81),
            alpha in 0.2f64..2.5,
            mass in 0.1f64..3.0,
        ) {
            let form = BilinearForm::standard(2, 3);
            let poly = EllipticPolynomial::parse("x1^2 + x2^2", 3, 2).unwrap();
            let g = GridFn::from_real(Lattice::new(3, 2, 1, 1).unwrap(), &v, Domain::Position).unwrap();
            let u = klein_gordon_solve(&g, &poly, alpha, mass, &form).unwrap();
            prop_assert!(klein_gordon_residual(&u, &g, &poly, alpha, mass, &form).unwrap() < 1e-10);
        }

        #[test]
        fn green_kernels_are_real_and_non_negative(
            p in prop::sample::select(vec![2u64, 3, 5]),
            alpha in 0.3f64..2.5,
            mass in 0.2f64..3.0,
        ) {
            let form = BilinearForm::standard(1, p);
            let lat = Lattice::new(p, 1, 3, 3).unwrap();
            let g = green_spectral(&lat, &linear(p), alpha, mass, &form).unwrap();
            prop_assert!(g.values().max_imag() < 1e-10);
            prop_assert!(g.min_off_origin() >= -1e-10);
        }
    }
}
