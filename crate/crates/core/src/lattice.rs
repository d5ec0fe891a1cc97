//! Finite-resolution model of `Q_p^N`.
//!
//! A [`Lattice`] with support exponent `j` and resolution exponent `k` stands for
//! the finite group `B_j^N / B_{-k}^N`: functions supported in the ball of radius
//! `p^j` that are constant on cosets of `p^k Z_p^N`. A point with index vector
//! `m ∈ [0, p^{j+k})^N` embeds as `x = m p^{-j}`. Flat indices are row-major with
//! `index_0` varying slowest.
//!
//! The Fourier transform attached to a symmetric non-degenerate bilinear form
//! `B = p^β B̃` maps a position function on `(j, k)` to a frequency function on
//! the dual lattice `(k + β, j - β)`. On index vectors the pairing reduces to
//! `B(x, ξ) = mᵀ B̃ n / p^{j+k}`, so the transform is a DFT over `(Z/p^{j+k})^N`
//! followed by the index map `n ↦ B̃ n`.

use std::fmt;
use std::io::{BufRead, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{transform_axes, AxisPlan};
use crate::matrix::PMatrix;
use crate::padic::{checked_pow, is_prime, ord_int, Order, PRational, PVector};

/// Largest number of points a lattice may hold.
pub const MAX_POINTS: usize = 1 << 27;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Lattice {
    prime: u64,
    dim: usize,
    support: u32,
    resolution: u32,
    side: usize,
    points: usize,
}

impl fmt::Display for Lattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Lattice(p={}, N={}, j={}, k={})", self.prime, self.dim, self.support, self.resolution)
    }
}

impl Lattice {
    pub fn new(prime: u64, dim: usize, support: u32, resolution: u32) -> Result<Self> {
        if !is_prime(prime) {
            return Err(Error::NotPrime(prime));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter { name: "dimension", detail: "must be >= 1".into() });
        }
        let side = checked_pow(prime, support + resolution)?;
        if side > (1 << 40) {
            return Err(Error::Overflow("lattice side"));
        }
        let side = side as usize;
        let points = side
            .checked_pow(dim as u32)
            .filter(|&n| n <= MAX_POINTS)
            .ok_or(Error::Overflow("lattice point count"))?;
        Ok(Lattice { prime, dim, support, resolution, side, points })
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `j`: functions are supported in `B_j^N`.
    pub fn support(&self) -> u32 {
        self.support
    }

    /// `k`: functions are constant on cosets of `B_{-k}^N`.
    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points == 0
    }

    /// Haar volume of one cell, `p^{-kN}`.
    pub fn cell_volume(&self) -> f64 {
        (self.prime as f64).powi(-((self.resolution as usize * self.dim) as i32))
    }

    pub fn unflatten(&self, mut flat: usize, out: &mut [usize]) {
        for slot in out.iter_mut().rev() {
            *slot = flat % self.side;
            flat /= self.side;
        }
    }

    pub fn index_of(&self, flat: usize) -> Vec<usize> {
        let mut v = vec![0; self.dim];
        self.unflatten(flat, &mut v);
        v
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.side + i % self.side)
    }

    /// The p-rational point `m p^{-j}`.
    pub fn point(&self, idx: &[usize]) -> PVector {
        PVector::new(
            idx.iter()
                .map(|&m| PRational::canonical(m as i128, self.support, self.prime))
                .collect(),
        )
        .expect("lattice coordinates share a prime")
    }

    /// Index of a lattice point, or `None` if `x` is not of the form `m p^{-j}`.
    pub fn index_for(&self, x: &PVector) -> Option<Vec<usize>> {
        if x.dim() != self.dim || x.prime() != self.prime {
            return None;
        }
        x.coords()
            .iter()
            .map(|c| {
                let s = c.shift(self.support as i64);
                s.is_integer().then(|| s.num().rem_euclid(self.side as i128) as usize)
            })
            .collect()
    }

    /// Exponent `e` with `||x||_p = p^e`, or `None` for the origin cell.
    pub fn norm_exponent(&self, idx: &[usize]) -> Option<i64> {
        idx.iter()
            .filter(|&&m| m != 0)
            .map(|&m| ord_int(m as i128, self.prime))
            .min()
            .map(|o| self.support as i64 - o as i64)
    }

    pub fn norm_exponent_flat(&self, flat: usize) -> Option<i64> {
        let mut best: Option<u32> = None;
        let mut f = flat;
        for _ in 0..self.dim {
            let m = f % self.side;
            f /= self.side;
            if m != 0 {
                let o = ord_int(m as i128, self.prime);
                best = Some(best.map_or(o, |b| b.min(o)));
            }
        }
        best.map(|o| self.support as i64 - o as i64)
    }

    /// Flat index of `-x`.
    pub fn negate_flat(&self, flat: usize) -> usize {
        let mut idx = self.index_of(flat);
        for m in idx.iter_mut() {
            *m = (self.side - *m) % self.side;
        }
        self.flatten(&idx)
    }

    /// Lattice carrying the transform of functions on `self`.
    pub fn dual(&self, form: &BilinearForm) -> Result<Lattice> {
        let beta = form.beta();
        let js = self.resolution as i64 + beta;
        let ks = self.support as i64 - beta;
        if js < 0 || ks < 0 {
            return Err(Error::ResolutionMismatch { support: js, resolution: ks });
        }
        Lattice::new(self.prime, self.dim, js as u32, ks as u32)
    }

    pub fn same_as(&self, other: &Lattice) -> Result<()> {
        if self != other {
            Err(Error::LatticeMismatch(format!("{self} vs {other}")))
        } else {
            Ok(())
        }
    }
}

/// Whether a grid function lives on position or frequency space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Position,
    Frequency,
}

impl Domain {
    pub fn name(&self) -> &'static str {
        match self {
            Domain::Position => "position",
            Domain::Frequency => "frequency",
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Domain::Position => Domain::Frequency,
            Domain::Frequency => Domain::Position,
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "position" => Ok(Domain::Position),
            "frequency" => Ok(Domain::Frequency),
            _ => Err(Error::Parse { what: "domain tag", detail: s.to_string() }),
        }
    }
}

/// Complex values on every lattice point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn {
    lattice: Lattice,
    values: Vec<Complex64>,
    domain: Domain,
}

impl GridFn {
    pub fn new(lattice: Lattice, values: Vec<Complex64>, domain: Domain) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::DimensionMismatch { expected: lattice.len(), got: values.len() });
        }
        Ok(GridFn { lattice, values, domain })
    }

    pub fn zeros(lattice: Lattice, domain: Domain) -> Self {
        GridFn { lattice, values: vec![Complex64::new(0.0, 0.0); lattice.len()], domain }
    }

    pub fn from_real(lattice: Lattice, values: &[f64], domain: Domain) -> Result<Self> {
        Self::new(lattice, values.iter().map(|&v| Complex64::new(v, 0.0)).collect(), domain)
    }

    /// Builds values from a function of the index vector.
    pub fn from_index_fn(lattice: Lattice, domain: Domain, mut f: impl FnMut(&[usize]) -> Complex64) -> Self {
        let mut idx = vec![0; lattice.dim()];
        let values = (0..lattice.len())
            .map(|flat| {
                lattice.unflatten(flat, &mut idx);
                f(&idx)
            })
            .collect();
        GridFn { lattice, values, domain }
    }

    /// Indicator of the ball `||x - center||_p <= p^radius`.
    pub fn indicator_ball(lattice: Lattice, center: &PVector, radius: i64) -> Result<Self> {
        let c = lattice.index_for(center).ok_or_else(|| Error::InvalidParameter {
            name: "center",
            detail: format!("{center:?} is not a point of {lattice}"),
        })?;
        if radius < -(lattice.resolution() as i64) {
            return Err(Error::InvalidParameter {
                name: "radius",
                detail: format!("ball radius p^{radius} is below the lattice resolution"),
            });
        }
        let side = lattice.side();
        Ok(Self::from_index_fn(lattice, Domain::Position, |idx| {
            let diff: Vec<usize> = idx.iter().zip(&c).map(|(&m, &cc)| (m + side - cc) % side).collect();
            let inside = lattice.norm_exponent(&diff).is_none_or(|e| e <= radius);
            Complex64::new(if inside { 1.0 } else { 0.0 }, 0.0)
        }))
    }

    /// `Ω(||x||_p)`, the indicator of `Z_p^N`.
    pub fn omega(lattice: Lattice) -> Self {
        Self::indicator_ball(lattice, &PVector::zero(lattice.dim(), lattice.prime()), 0)
            .expect("Z_p^N is resolved on every lattice")
    }

    /// Height-`p^{kN}` point mass on the origin cell, a discrete delta.
    pub fn delta(lattice: Lattice) -> Self {
        let mut f = Self::zeros(lattice, Domain::Position);
        f.values[0] = Complex64::new(1.0 / lattice.cell_volume(), 0.0);
        f
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    /// Same values with a different domain tag.
    pub fn retag(self, domain: Domain) -> Self {
        GridFn { domain, ..self }
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn at(&self, idx: &[usize]) -> Complex64 {
        self.values[self.lattice.flatten(idx)]
    }

    pub fn real_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        GridFn { lattice: self.lattice, values: self.values.iter().map(|&v| f(v)).collect(), domain: self.domain }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn zip_with(&self, o: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        self.lattice.same_as(&o.lattice)?;
        if self.domain != o.domain {
            return Err(Error::DomainMismatch { expected: self.domain.name(), got: o.domain.name() });
        }
        Ok(GridFn {
            lattice: self.lattice,
            values: self.values.iter().zip(&o.values).map(|(&a, &b)| f(a, b)).collect(),
            domain: self.domain,
        })
    }

    pub fn add(&self, o: &Self) -> Result<Self> {
        self.zip_with(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &Self) -> Result<Self> {
        self.zip_with(o, |a, b| a - b)
    }

    /// `x ↦ f(-x)`.
    pub fn reflect(&self) -> Self {
        let values = (0..self.values.len()).map(|i| self.values[self.lattice.negate_flat(i)]).collect();
        GridFn { lattice: self.lattice, values, domain: self.domain }
    }

    pub fn max_abs_diff(&self, o: &Self) -> Result<f64> {
        self.lattice.same_as(&o.lattice)?;
        Ok(self.values.iter().zip(&o.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }

    /// Sum of values times the cell volume, on either domain.
    pub fn haar_sum(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() * self.lattice.cell_volume()
    }

    /// `||f||_{L^2}` with respect to `d^N x`.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.lattice.cell_volume()).sqrt()
    }
}

/// `∫ f d^N x` for a position-domain function.
pub fn haar_integral(f: &GridFn) -> Result<Complex64> {
    if f.domain != Domain::Position {
        return Err(Error::DomainMismatch { expected: "position", got: f.domain.name() });
    }
    Ok(f.haar_sum())
}

/// Symmetric non-degenerate bilinear form `B(x, y) = xᵀ [B] y`.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearForm {
    matrix: PMatrix,
    det: PRational,
    beta: i64,
    cq: f64,
    normalized: Vec<i128>,
    unimodular: bool,
}

impl BilinearForm {
    /// Validates the matrix and computes `β`, `det B` and the self-dual constant
    /// `C(q) = |det B|_p^{1/2}`. For unimodular forms the constant is checked by a
    /// Fourier round trip on a probe lattice.
    pub fn new(matrix: PMatrix) -> Result<Self> {
        if !matrix.is_symmetric() {
            return Err(Error::NotSymmetric);
        }
        let det = matrix.det()?;
        let det_ord = det.order().finite().ok_or(Error::Singular)?;
        let beta = matrix.order().finite().ok_or(Error::Singular)?;
        let normalized = matrix.scaled_integers(beta)?;
        let n = matrix.dim() as i64;
        let unimodular = det_ord - n * beta == 0;
        let cq = (matrix.prime() as f64).powf(-(det_ord as f64) / 2.0);
        let form = BilinearForm { matrix, det, beta, cq, normalized, unimodular };
        if form.unimodular {
            form.probe_self_duality()?;
        }
        Ok(form)
    }

    /// `B(x, y) = sum x_i y_i`.
    pub fn standard(dim: usize, prime: u64) -> Self {
        Self::new(PMatrix::identity(dim, prime)).expect("identity form is valid")
    }

    pub fn diagonal(diag: &[i128], prime: u64) -> Result<Self> {
        Self::new(PMatrix::diagonal(diag, prime)?)
    }

    fn probe_self_duality(&self) -> Result<()> {
        let j = self.beta.max(0) as u32;
        let k = (-self.beta).max(0) as u32 + 1;
        let lat = Lattice::new(self.prime(), self.dim(), j, k)?;
        let f = GridFn::from_index_fn(lat, Domain::Position, |idx| {
            let s: usize = idx.iter().enumerate().map(|(i, &m)| (i + 2) * (m + 1)).sum();
            Complex64::new((s as f64 * 0.61).sin(), (s as f64 * 0.37).cos())
        });
        let ff = fourier_transform(&fourier_transform(&f, self, 1.0, TransformPath::Factored)?, self, 1.0, TransformPath::Factored)?;
        let err = ff.max_abs_diff(&f.reflect())?;
        if err > 1e-10 {
            return Err(Error::SelfDualityProbe(err));
        }
        Ok(())
    }

    pub fn matrix(&self) -> &PMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn prime(&self) -> u64 {
        self.matrix.prime()
    }

    pub fn det(&self) -> PRational {
        self.det
    }

    /// `β` with `[B_ij] = p^β [B̃_ij]` and `||B̃||_p = 1`.
    pub fn beta(&self) -> i64 {
        self.beta
    }

    /// Self-dual normalization `C(q)`.
    pub fn cq(&self) -> f64 {
        self.cq
    }

    pub fn is_unimodular(&self) -> bool {
        self.unimodular
    }

    /// Entries of `B̃ = p^{-β} B` as integers.
    pub fn normalized(&self) -> &[i128] {
        &self.normalized
    }

    pub fn is_standard(&self) -> bool {
        self.beta == 0 && self.matrix == PMatrix::identity(self.dim(), self.prime())
    }

    pub fn eval(&self, x: &PVector, y: &PVector) -> Result<PRational> {
        self.matrix.mul_vec(y)?.dot(x)
    }

    /// `q(x) = B(x, x)`.
    pub fn quadratic(&self, x: &PVector) -> Result<PRational> {
        self.eval(x, x)
    }

    fn require_unimodular(&self) -> Result<()> {
        if self.unimodular {
            Ok(())
        } else {
            Err(Error::NonUnimodularForm)
        }
    }
}

/// Which algorithm evaluates the character sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformPath {
    /// Factored for lattices above a few hundred points.
    Auto,
    /// Direct `O(P^2)` character sum with exact integer phases.
    Direct,
    /// Radix-p FFT along each axis followed by the `B̃` index map.
    Factored,
}

/// `sum_x f(x) χ_p(sign * B(x, ξ)) C(q) p^{-kN}` on the dual lattice.
pub fn fourier_transform(f: &GridFn, form: &BilinearForm, sign: f64, path: TransformPath) -> Result<GridFn> {
    form.require_unimodular()?;
    let lat = f.lattice;
    if form.dim() != lat.dim() || form.prime() != lat.prime() {
        return Err(Error::LatticeMismatch(format!("{lat} vs form of dimension {} over p={}", form.dim(), form.prime())));
    }
    let dual = lat.dual(form)?;
    let side = lat.side();
    let dim = lat.dim();
    let scale = form.cq() * lat.cell_volume();
    let identity = form.is_standard() || is_identity(form.normalized(), dim);
    let use_direct = match path {
        TransformPath::Direct => true,
        TransformPath::Factored => false,
        TransformPath::Auto => lat.len() <= 256,
    };
    // B̃ reduced mod side, row-major.
    let bt: Vec<usize> = form
        .normalized()
        .iter()
        .map(|&b| b.rem_euclid(side as i128) as usize)
        .collect();

    let mut out = if use_direct {
        direct_sum(f, &bt, sign)
    } else {
        let mut data = f.values.clone();
        transform_axes(&mut data, dim, &AxisPlan::new(side, sign));
        if identity {
            data
        } else {
            gather_by_form(&data, &lat, &bt)
        }
    };
    for v in out.iter_mut() {
        *v *= scale;
    }
    Ok(GridFn { lattice: dual, values: out, domain: f.domain.flip() })
}

fn is_identity(m: &[i128], n: usize) -> bool {
    (0..n * n).all(|i| m[i] == if i % n == i / n { 1 } else { 0 })
}

fn apply_form(bt: &[usize], n: &[usize], side: usize, out: &mut [usize]) {
    let dim = n.len();
    for (r, o) in out.iter_mut().enumerate() {
        let mut acc: u128 = 0;
        for c in 0..dim {
            acc += bt[r * dim + c] as u128 * n[c] as u128;
        }
        *o = (acc % side as u128) as usize;
    }
}

fn gather_by_form(data: &[Complex64], lat: &Lattice, bt: &[usize]) -> Vec<Complex64> {
    let mut n = vec![0; lat.dim()];
    let mut bn = vec![0; lat.dim()];
    (0..lat.len())
        .map(|flat| {
            lat.unflatten(flat, &mut n);
            apply_form(bt, &n, lat.side(), &mut bn);
            data[lat.flatten(&bn)]
        })
        .collect()
}

fn direct_sum(f: &GridFn, bt: &[usize], sign: f64) -> Vec<Complex64> {
    let lat = f.lattice;
    let side = lat.side();
    let roots: Vec<Complex64> = (0..side)
        .map(|k| {
            let (s, c) = (sign * 2.0 * std::f64::consts::PI * k as f64 / side as f64).sin_cos();
            Complex64::new(c, s)
        })
        .collect();
    let mut m = vec![0; lat.dim()];
    let mut n = vec![0; lat.dim()];
    let mut bn = vec![0; lat.dim()];
    let rows: Vec<Vec<usize>> = (0..lat.len())
        .map(|flat| {
            lat.unflatten(flat, &mut m);
            m.clone()
        })
        .collect();
    (0..lat.len())
        .map(|flat| {
            lat.unflatten(flat, &mut n);
            apply_form(bt, &n, side, &mut bn);
            rows.iter()
                .zip(&f.values)
                .map(|(m, v)| {
                    let phase: u128 = m.iter().zip(&bn).map(|(&a, &b)| a as u128 * b as u128).sum();
                    v * roots[(phase % side as u128) as usize]
                })
                .sum()
        })
        .collect()
}

/// `(F g)(ξ) = ∫ g(x) χ_p(B(x, ξ)) dμ(x)`.
pub fn fourier_forward(f: &GridFn, form: &BilinearForm) -> Result<GridFn> {
    fourier_transform(f, form, 1.0, TransformPath::Auto)
}

/// `F^{-1} g (x) = (F g)(-x)`.
pub fn fourier_inverse(f: &GridFn, form: &BilinearForm) -> Result<GridFn> {
    fourier_transform(f, form, -1.0, TransformPath::Auto)
}

/// Exponent and level of a Sobolev-type norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SobolevParams {
    alpha: f64,
    level: i32,
}

impl SobolevParams {
    pub fn new(alpha: f64, level: i32) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter { name: "alpha", detail: format!("{alpha} must be positive") });
        }
        Ok(SobolevParams { alpha, level })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn level(&self) -> i32 {
        self.level
    }
}

/// `⟨f, g⟩_l = ∫ max(1, ||ξ||_p)^{2αl} f̂(ξ) conj(ĝ(ξ)) d^N ξ`.
pub fn sobolev_inner(f: &GridFn, g: &GridFn, sp: SobolevParams, form: &BilinearForm) -> Result<Complex64> {
    f.lattice.same_as(&g.lattice)?;
    for h in [f, g] {
        if h.domain != Domain::Position {
            return Err(Error::DomainMismatch { expected: "position", got: h.domain.name() });
        }
    }
    let fh = fourier_forward(f, form)?;
    let gh = fourier_forward(g, form)?;
    Ok(weighted_pairing(&fh, &gh, sp))
}

fn weighted_pairing(fh: &GridFn, gh: &GridFn, sp: SobolevParams) -> Complex64 {
    let lat = fh.lattice;
    let p = lat.prime() as f64;
    let mut idx = vec![0; lat.dim()];
    let sum: Complex64 = (0..lat.len())
        .map(|flat| {
            lat.unflatten(flat, &mut idx);
            let e = lat.norm_exponent(&idx).unwrap_or(i64::MIN).max(0);
            let w = p.powf(2.0 * sp.alpha * sp.level as f64 * e as f64);
            fh.values[flat] * gh.values[flat].conj() * w
        })
        .sum();
    sum * lat.cell_volume()
}

/// `||f||_l`.
pub fn sobolev_norm(f: &GridFn, sp: SobolevParams, form: &BilinearForm) -> Result<f64> {
    Ok(sobolev_inner(f, f, sp, form)?.re.max(0.0).sqrt())
}

/// `d(f, g) = max_{0 <= l <= lmax} 2^{-l} ||f-g||_l / (1 + ||f-g||_l)`.
pub fn sobolev_metric(f: &GridFn, g: &GridFn, alpha: f64, lmax: u32, form: &BilinearForm) -> Result<f64> {
    let diff = f.sub(g)?;
    if diff.domain != Domain::Position {
        return Err(Error::DomainMismatch { expected: "position", got: diff.domain.name() });
    }
    let dh = fourier_forward(&diff, form)?;
    let mut best: f64 = 0.0;
    for l in 0..=lmax {
        let sp = SobolevParams::new(alpha, l as i32)?;
        let n = weighted_pairing(&dh, &dh, sp).re.max(0.0).sqrt();
        best = best.max(0.5f64.powi(l as i32) * n / (1.0 + n));
    }
    Ok(best)
}

/// Outcome of an exactly evaluated character sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CharacterSum {
    /// Every phase is trivial: the value is `count * p^{-exponent}`.
    Full { count: u64, exponent: u32 },
    /// The phase histogram lies in the kernel of the cyclotomic evaluation map.
    Vanishing,
    /// Neither; a floating-point value is returned.
    Inexact(Complex64),
}

impl CharacterSum {
    pub fn value(&self, prime: u64) -> Complex64 {
        match *self {
            CharacterSum::Full { count, exponent } => Complex64::new(count as f64 / (prime as f64).powi(exponent as i32), 0.0),
            CharacterSum::Vanishing => Complex64::new(0.0, 0.0),
            CharacterSum::Inexact(v) => v,
        }
    }
}

/// Classifies `sum_r counts[r] ζ^r` for a primitive `p^s`-th root `ζ`.
///
/// The sum vanishes exactly when, for every residue `r mod p^{s-1}`, the counts
/// at `r + t p^{s-1}` (`t = 0..p`) coincide, since the minimal polynomial of `ζ`
/// is `sum_{t<p} x^{t p^{s-1}}`.
pub fn classify_phase_histogram(prime: u64, s: u32, counts: &[u64], exponent: u32) -> CharacterSum {
    let total: u64 = counts.iter().sum();
    if counts.first().copied() == Some(total) {
        return CharacterSum::Full { count: total, exponent };
    }
    let n = counts.len();
    if s >= 1 {
        let step = n / prime as usize;
        let vanishing = (0..step).all(|r| (1..prime as usize).all(|t| counts[r + t * step] == counts[r]));
        if vanishing {
            return CharacterSum::Vanishing;
        }
    }
    let v: Complex64 = counts
        .iter()
        .enumerate()
        .map(|(r, &c)| {
            let a = 2.0 * std::f64::consts::PI * r as f64 / n as f64;
            Complex64::new(a.cos(), a.sin()) * c as f64
        })
        .sum();
    CharacterSum::Inexact(v * (prime as f64).powi(-(exponent as i32)))
}

/// `∫_{Z_p^N} χ_p(p^{-e} u·y) d^N y`, evaluated as a lattice sum over
/// `Z_p^N / p^{max(e,1)} Z_p^N` with an exact phase histogram.
pub fn unit_ball_character_integral(prime: u64, dim: usize, e: i32, u: &[i64]) -> Result<CharacterSum> {
    if u.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: u.len() });
    }
    let k = e.max(1) as u32;
    let lat = Lattice::new(prime, dim, 0, k)?;
    let s = e.max(0) as u32;
    let modulus = checked_pow(prime, s)? as i128;
    let mut counts = vec![0u64; modulus as usize];
    let mut idx = vec![0; dim];
    for flat in 0..lat.len() {
        lat.unflatten(flat, &mut idx);
        // y = idx (j = 0), phase numerator u·y over p^e
        let dot: i128 = idx.iter().zip(u).map(|(&m, &c)| m as i128 * c as i128).sum();
        counts[dot.rem_euclid(modulus) as usize] += 1;
    }
    Ok(classify_phase_histogram(prime, s, &counts, k * dim as u32))
}

/// Writes the grid-function CSV: a `# p N j k tag` line, optional extra header
/// lines, a column row, then one row per point in flat order.
pub fn write_csv<W: Write>(f: &GridFn, extra_header: &[String], mut w: W) -> std::io::Result<()> {
    let lat = f.lattice;
    writeln!(w, "# {} {} {} {} {}", lat.prime(), lat.dim(), lat.support(), lat.resolution(), f.domain.name())?;
    for h in extra_header {
        writeln!(w, "# {h}")?;
    }
    let cols: Vec<String> = (0..lat.dim()).map(|i| format!("index_{i}")).collect();
    writeln!(w, "{},re,im", cols.join(","))?;
    let mut idx = vec![0; lat.dim()];
    for (flat, v) in f.values.iter().enumerate() {
        lat.unflatten(flat, &mut idx);
        for m in &idx {
            write!(w, "{m},")?;
        }
        writeln!(w, "{:?},{:?}", v.re, v.im)?;
    }
    Ok(())
}

/// Reads a CSV produced by [`write_csv`]; extra header lines are returned verbatim.
pub fn read_csv<R: BufRead>(r: R) -> Result<(GridFn, Vec<String>)> {
    let bad = |d: String| Error::Parse { what: "grid CSV", detail: d };
    let mut lines = r.lines();
    let first = lines
        .next()
        .ok_or_else(|| bad("empty input".into()))?
        .map_err(|e| bad(e.to_string()))?;
    let head: Vec<&str> = first.trim_start_matches('#').split_whitespace().collect();
    if head.len() != 5 {
        return Err(bad(format!("bad header {first:?}")));
    }
    let parse_u = |s: &str| s.parse::<u64>().map_err(|_| bad(format!("bad header field {s:?}")));
    let lat = Lattice::new(parse_u(head[0])?, parse_u(head[1])? as usize, parse_u(head[2])? as u32, parse_u(head[3])? as u32)?;
    let domain = Domain::parse(head[4])?;
    let mut extra = Vec::new();
    let mut values = vec![Complex64::new(0.0, 0.0); lat.len()];
    let mut seen = vec![false; lat.len()];
    for line in lines {
        let line = line.map_err(|e| bad(e.to_string()))?;
        if let Some(h) = line.strip_prefix('#') {
            extra.push(h.trim().to_string());
            continue;
        }
        if line.starts_with("index_") || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != lat.dim() + 2 {
            return Err(bad(format!("row {line:?} has {} fields", fields.len())));
        }
        let idx = fields[..lat.dim()]
            .iter()
            .map(|s| s.trim().parse::<usize>().ok().filter(|&m| m < lat.side()))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad(format!("bad index in {line:?}")))?;
        let re: f64 = fields[lat.dim()].trim().parse().map_err(|_| bad(format!("bad value in {line:?}")))?;
        let im: f64 = fields[lat.dim() + 1].trim().parse().map_err(|_| bad(format!("bad value in {line:?}")))?;
        let flat = lat.flatten(&idx);
        values[flat] = Complex64::new(re, im);
        seen[flat] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(bad("missing rows".into()));
    }
    Ok((GridFn { lattice: lat, values, domain }, extra))
}

/// Order of a lattice index coordinate as a point of `Q_p`, `None` for zero.
pub fn coordinate_order(lat: &Lattice, m: usize) -> Order {
    if m == 0 {
        Order::Infinite
    } else {
        Order::Finite(ord_int(m as i128, lat.prime()) as i64 - lat.support() as i64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::chi;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_fn(lat: Lattice, rng: &mut ChaCha8Rng) -> GridFn {
        GridFn::from_index_fn(lat, Domain::Position, |_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn haar_integral_examples() {
        let lat = Lattice::new(2, 1, 1, 1).unwrap();
        assert!((haar_integral(&GridFn::omega(lat)).unwrap().re - 1.0).abs() < 1e-15);
        let lat = Lattice::new(3, 2, 2, 1).unwrap();
        let ones = GridFn::from_index_fn(lat, Domain::Position, |_| Complex64::new(1.0, 0.0));
        assert!((haar_integral(&ones).unwrap().re - 81.0).abs() < 1e-12);
        let lat = Lattice::new(5, 1, 2, 3).unwrap();
        let sphere = GridFn::from_index_fn(lat, Domain::Position, |idx| {
            Complex64::new(if lat.norm_exponent(idx) == Some(0) { 1.0 } else { 0.0 }, 0.0)
        });
        assert!((haar_integral(&sphere).unwrap().re - 0.8).abs() < 1e-14);
        let freq = GridFn::zeros(lat, Domain::Frequency);
        assert!(haar_integral(&freq).is_err());
    }

    #[test]
    fn omega_is_self_dual() {
        let form = BilinearForm::standard(2, 3);
        let lat = Lattice::new(3, 2, 2, 1).unwrap();
        let oh = fourier_forward(&GridFn::omega(lat), &form).unwrap();
        let expected = GridFn::omega(*oh.lattice());
        assert_eq!(oh.domain(), Domain::Frequency);
        assert!(oh.values().iter().zip(expected.values()).all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn delta_transforms_to_constant() {
        let form = BilinearForm::standard(1, 5);
        let lat = Lattice::new(5, 1, 1, 2).unwrap();
        let dh = fourier_forward(&GridFn::delta(lat), &form).unwrap();
        assert!(dh.values().iter().all(|v| (v - Complex64::new(form.cq(), 0.0)).norm() < 1e-12));
    }

    #[test]
    fn indicator_transform_matches_character_table() {
        // 1 + 4 Z_2 on Lattice(2, 1, 2, 2): brute force over the 16 x 16 table with chi.
        let lat = Lattice::new(2, 1, 2, 2).unwrap();
        let form = BilinearForm::standard(1, 2);
        let one = PVector::from_ints(&[1], 2).unwrap();
        let f = GridFn::indicator_ball(lat, &one, -2).unwrap();
        let fh = fourier_forward(&f, &form).unwrap();
        let dual = lat.dual(&form).unwrap();
        for n in 0..16usize {
            let xi = dual.point(&[n]);
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 0..16usize {
                let x = lat.point(&[m]);
                acc += f.at(&[m]) * chi(&form.eval(&x, &xi).unwrap()).to_complex();
            }
            acc *= lat.cell_volume();
            assert!((acc - fh.at(&[n])).norm() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn involution_and_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lat = Lattice::new(3, 2, 2, 2).unwrap();
        let form = BilinearForm::standard(2, 3);
        for _ in 0..5 {
            let f = random_fn(lat, &mut rng);
            let ff = fourier_forward(&fourier_forward(&f, &form).unwrap(), &form).unwrap();
            assert!(ff.max_abs_diff(&f.reflect()).unwrap() < 1e-12);
            let back = fourier_inverse(&fourier_forward(&f, &form).unwrap(), &form).unwrap();
            assert!(back.max_abs_diff(&f).unwrap() < 1e-12);
        }
    }

    #[test]
    fn inverse_examples() {
        let lat = Lattice::new(2, 1, 2, 3).unwrap();
        let form = BilinearForm::standard(1, 2);
        let dual = lat.dual(&form).unwrap();
        let inv = fourier_inverse(&GridFn::omega(dual).retag(Domain::Frequency), &form).unwrap();
        assert!(inv.max_abs_diff(&GridFn::omega(*inv.lattice())).unwrap() < 1e-12);
        let ones = GridFn::from_index_fn(dual, Domain::Frequency, |_| Complex64::new(1.0, 0.0));
        let d = fourier_inverse(&ones, &form).unwrap();
        assert!(d.max_abs_diff(&GridFn::delta(lat).scale(1.0 / form.cq())).unwrap() < 1e-12);
    }

    #[test]
    fn direct_and_factored_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let forms = [
            BilinearForm::standard(2, 3),
            BilinearForm::new(PMatrix::from_ints(&[vec![1, 1], vec![1, 2]], 3).unwrap()).unwrap(),
            BilinearForm::new(PMatrix::parse("[[3,0],[0,3]]", 3).unwrap()).unwrap(),
            BilinearForm::new(PMatrix::parse("[[1/3,0],[0,2/3]]", 3).unwrap()).unwrap(),
        ];
        for form in &forms {
            let lat = Lattice::new(3, 2, 2, 2).unwrap();
            let f = random_fn(lat, &mut rng);
            let a = fourier_transform(&f, form, 1.0, TransformPath::Direct).unwrap();
            let b = fourier_transform(&f, form, 1.0, TransformPath::Factored).unwrap();
            assert!(a.max_abs_diff(&b).unwrap() < 1e-12, "{form:?}");
            let ff = fourier_forward(&a, form).unwrap();
            assert!(ff.max_abs_diff(&f.reflect()).unwrap() < 1e-12, "{form:?}");
        }
    }

    #[test]
    fn plancherel() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let form = BilinearForm::new(PMatrix::parse("[[1/3,0],[0,2/3]]", 3).unwrap()).unwrap();
        let lat = Lattice::new(3, 2, 2, 2).unwrap();
        let f = random_fn(lat, &mut rng);
        let fh = fourier_forward(&f, &form).unwrap();
        assert!((f.l2_norm() - fh.l2_norm()).abs() < 1e-10);
    }

    #[test]
    fn dual_lattice_bookkeeping() {
        let form = BilinearForm::new(PMatrix::parse("[[9]]", 3).unwrap()).unwrap();
        assert_eq!(form.beta(), 2);
        let lat = Lattice::new(3, 1, 1, 1).unwrap();
        assert!(matches!(lat.dual(&form), Err(Error::ResolutionMismatch { .. })));
        let lat = Lattice::new(3, 1, 2, 1).unwrap();
        assert_eq!(lat.dual(&form).unwrap(), Lattice::new(3, 1, 3, 0).unwrap());
    }

    #[test]
    fn form_validation() {
        assert_eq!(BilinearForm::new(PMatrix::from_ints(&[vec![1, 2], vec![0, 1]], 3).unwrap()), Err(Error::NotSymmetric));
        assert_eq!(BilinearForm::new(PMatrix::from_ints(&[vec![1, 1], vec![1, 1]], 3).unwrap()), Err(Error::Singular));
        let l4 = BilinearForm::diagonal(&[1, 1, -3, -1], 3).unwrap();
        assert!(!l4.is_unimodular());
        let lat = Lattice::new(3, 4, 0, 1).unwrap();
        assert_eq!(fourier_forward(&GridFn::omega(lat), &l4), Err(Error::NonUnimodularForm));
        let x = PVector::from_ints(&[1, 2], 5).unwrap();
        let y = PVector::from_ints(&[3, -1], 5).unwrap();
        let b = BilinearForm::new(PMatrix::from_ints(&[vec![2, 1], vec![1, 3]], 5).unwrap()).unwrap();
        let q = |v: &PVector| b.quadratic(v).unwrap();
        let half = PRational::new(1, 0, 5).unwrap();
        // 2 B(x,y) = q(x+y) - q(x) - q(y)
        let lhs = b.eval(&x, &y).unwrap() + b.eval(&x, &y).unwrap() * half;
        let rhs = q(&x.checked_add(&y).unwrap()) - q(&x) - q(&y) + b.eval(&x, &y).unwrap() * half - b.eval(&x, &y).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn sobolev_examples() {
        let form = BilinearForm::standard(1, 2);
        let lat = Lattice::new(2, 1, 2, 3).unwrap();
        let om = GridFn::omega(lat);
        let v = sobolev_inner(&om, &om, SobolevParams::new(1.0, 1).unwrap(), &form).unwrap();
        assert!((v.re - 1.0).abs() < 1e-12 && v.im.abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = random_fn(lat, &mut rng);
        let n0 = sobolev_inner(&f, &f, SobolevParams::new(0.7, 0).unwrap(), &form).unwrap().re;
        assert!((n0 - f.l2_norm().powi(2)).abs() < 1e-10);
        let mut prev = n0;
        for l in 1..4 {
            let nl = sobolev_inner(&f, &f, SobolevParams::new(0.7, l).unwrap(), &form).unwrap().re;
            assert!(nl >= prev - 1e-12);
            prev = nl;
        }
    }

    #[test]
    fn sobolev_inner_matches_frequency_enumeration() {
        // f = 1_{p^{-1} Z_2} - Ω on Lattice(2,1,2,2), α = 1, l = 1.
        let form = BilinearForm::standard(1, 2);
        let lat = Lattice::new(2, 1, 2, 2).unwrap();
        let zero = PVector::zero(1, 2);
        let f = GridFn::indicator_ball(lat, &zero, 1).unwrap().sub(&GridFn::omega(lat)).unwrap();
        let dual = lat.dual(&form).unwrap();
        let mut oracle = 0.0;
        for n in 0..dual.len() {
            let xi = dual.point(&[n]);
            let mut fh = Complex64::new(0.0, 0.0);
            for m in 0..lat.len() {
                fh += f.at(&[m]) * chi(&form.eval(&lat.point(&[m]), &xi).unwrap()).to_complex() * lat.cell_volume();
            }
            let w = xi.norm().to_f64().max(1.0).powi(2);
            oracle += w * fh.norm_sqr() * dual.cell_volume();
        }
        let v = sobolev_inner(&f, &f, SobolevParams::new(1.0, 1).unwrap(), &form).unwrap();
        assert!((v.re - oracle).abs() < 1e-12, "{} vs {oracle}", v.re);
    }

    #[test]
    fn metric_properties() {
        let form = BilinearForm::standard(2, 3);
        let lat = Lattice::new(3, 2, 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let f = random_fn(lat, &mut rng);
            let g = random_fn(lat, &mut rng);
            let d = sobolev_metric(&f, &g, 1.0, 3, &form).unwrap();
            assert_eq!(d, sobolev_metric(&g, &f, 1.0, 3, &form).unwrap());
            assert!(d > 0.0 && d <= 1.0);
            assert_eq!(sobolev_metric(&f, &f, 1.0, 3, &form).unwrap(), 0.0);
        }
    }

    #[test]
    fn character_orthogonality_is_exact() {
        for &p in &[2u64, 3, 5] {
            for dim in 1..=2usize {
                for e in -3..=3 {
                    let u: Vec<i64> = if dim == 1 { vec![p as i64 + 1] } else { vec![p as i64, 1] };
                    let s = unit_ball_character_integral(p, dim, e, &u).unwrap();
                    if e <= 0 {
                        assert!(matches!(s, CharacterSum::Full { .. }));
                        assert_eq!(s.value(p).re, 1.0);
                    } else {
                        assert_eq!(s, CharacterSum::Vanishing);
                    }
                }
            }
        }
    }

    #[test]
    fn csv_roundtrip() {
        let lat = Lattice::new(3, 2, 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_fn(lat, &mut rng);
        let mut buf = Vec::new();
        write_csv(&f, &["1 0.5 x1^2+x2^2".into()], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# 3 2 1 1 position\n# 1 0.5 x1^2+x2^2\nindex_0,index_1,re,im\n"));
        let (g, extra) = read_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(g, f);
        assert_eq!(extra, vec!["1 0.5 x1^2+x2^2".to_string()]);
    }

    fn values(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| Complex64::new(a, b)), len)
    }

    fn form(which: usize) -> BilinearForm {
        match which {
            0 => BilinearForm::standard(2, 3),
            1 => BilinearForm::new(PMatrix::from_ints(&[vec![1, 1], vec![1, 2]], 3).unwrap()).unwrap(),
            _ => BilinearForm::new(PMatrix::parse("[[1/3,0],[0,2/3]]", 3).unwrap()).unwrap(),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn double_transform_reflects(v in values(81), which in 0usize..3) {
            let f = GridFn::new(Lattice::new(3, 2, 1, 1).unwrap(), v, Domain::Position).unwrap();
            let form = form(which);
            let ff = fourier_forward(&fourier_forward(&f, &form).unwrap(), &form).unwrap();
            prop_assert!(ff.max_abs_diff(&f.reflect()).unwrap() < 1e-12);
        }

        #[test]
        fn transform_preserves_l2_norm(v in values(81), which in 0usize..3) {
            let f = GridFn::new(Lattice::new(3, 2, 1, 1).unwrap(), v, Domain::Position).unwrap();
            let fh = fourier_forward(&f, &form(which)).unwrap();
            prop_assert!((f.l2_norm() - fh.l2_norm()).abs() < 1e-10);
        }

        #[test]
        fn factored_path_matches_direct(v in values(64), sign in prop::bool::ANY) {
            let f = GridFn::new(Lattice::new(2, 1, 3, 3).unwrap(), v, Domain::Position).unwrap();
            let form = BilinearForm::standard(1, 2);
            let s = if sign { 1.0 } else { -1.0 };
            let a = fourier_transform(&f, &form, s, TransformPath::Direct).unwrap();
            let b = fourier_transform(&f, &form, s, TransformPath::Factored).unwrap();
            prop_assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
        }

        #[test]
        fn sobolev_weight_is_monotone(v in values(32), alpha in 0.1f64..3.0, m in 0i32..4, extra in 0i32..4) {
            let f = GridFn::new(Lattice::new(2, 1, 2, 3).unwrap(), v, Domain::Position).unwrap();
            let form = BilinearForm::standard(1, 2);
            let lo = sobolev_inner(&f, &f, SobolevParams::new(alpha, m).unwrap(), &form).unwrap().re;
            let hi = sobolev_inner(&f, &f, SobolevParams::new(alpha, m + extra).unwrap(), &form).unwrap().re;
            prop_assert!(lo <= hi * (1.0 + 1e-12));
        }
    }
}
