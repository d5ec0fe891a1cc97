//! Lévy characteristics, generalized white noise on a lattice and the
//! Euclidean field `Φ = G * Ϝ`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{Domain, GridFn, Lattice};
use crate::operators::GreenKernel;

/// Lévy characteristic `(a, σ, M)` with a finite atomic jump measure
/// `M = sum λ_i δ_{s_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyTriple {
    a: f64,
    sigma: f64,
    atoms: Vec<(f64, f64)>,
}

impl LevyTriple {
    pub fn new(a: f64, sigma: f64, atoms: Vec<(f64, f64)>) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::InvalidParameter { name: "levy.a", detail: format!("{a} is not finite") });
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter { name: "levy.sigma", detail: format!("{sigma} must be >= 0") });
        }
        for &(s, l) in &atoms {
            if s == 0.0 || !s.is_finite() {
                return Err(Error::InvalidParameter { name: "levy.atoms", detail: format!("jump size {s} must be nonzero") });
            }
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidParameter { name: "levy.atoms", detail: format!("intensity {l} must be positive") });
            }
        }
        Ok(LevyTriple { a, sigma, atoms })
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::new(0.0, sigma, Vec::new())
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn is_gaussian(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Drift of the cell law once the compensator is folded in.
    fn compensated_drift(&self) -> f64 {
        self.a - self.atoms.iter().map(|&(s, l)| l * s / (1.0 + s * s)).sum::<f64>()
    }
}

/// `Ψ(t) = iat - σ²t²/2 + sum λ_i (e^{i s_i t} - 1 - i s_i t / (1 + s_i²))`.
pub fn psi_eval(t: f64, l: &LevyTriple) -> Complex64 {
    let mut v = Complex64::new(-0.5 * l.sigma * l.sigma * t * t, l.a * t);
    for &(s, lam) in &l.atoms {
        let st = s * t;
        let (sin, cos) = st.sin_cos();
        v += lam * Complex64::new(cos - 1.0, sin - st / (1.0 + s * s));
    }
    v
}

/// `C(f) = exp ∫ Ψ(f(x)) d^N x` for a real position function.
pub fn char_functional(f: &GridFn, l: &LevyTriple) -> Result<Complex64> {
    if f.domain() != Domain::Position {
        return Err(Error::DomainMismatch { expected: "position", got: f.domain().name() });
    }
    let im = f.max_imag();
    if im > 1e-12 {
        return Err(Error::NonReal(im));
    }
    let integral: Complex64 = f.values().iter().map(|v| psi_eval(v.re, l)).sum::<Complex64>() * f.lattice().cell_volume();
    Ok(integral.exp())
}

/// `c_1 .. c_mmax`: `c_1 = a + sum λ s³/(1+s²)`, `c_2 = σ² + sum λ s²`,
/// `c_m = sum λ s^m` for `m >= 3`.
pub fn moment_constants(l: &LevyTriple, mmax: usize) -> Vec<f64> {
    (1..=mmax)
        .map(|m| {
            let jumps: f64 = l.atoms.iter().map(|&(s, lam)| lam * s.powi(m as i32)).sum();
            match m {
                1 => l.a + l.atoms.iter().map(|&(s, lam)| lam * s.powi(3) / (1.0 + s * s)).sum::<f64>(),
                2 => l.sigma * l.sigma + jumps,
                _ => jumps,
            }
        })
        .collect()
}

fn cell_rng(seed: u64, sample: u64, cell: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&sample.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(cell);
    rng
}

/// Draws `⟨1_cell, Ϝ⟩` for a cell of volume `v`.
fn draw_increment(rng: &mut impl Rng, l: &LevyTriple, v: f64, poissons: &[Poisson<f64>]) -> f64 {
    let mut x = v * l.compensated_drift();
    if l.sigma > 0.0 {
        let z: f64 = rng.sample(StandardNormal);
        x += l.sigma * v.sqrt() * z;
    }
    for (&(s, _), pois) in l.atoms.iter().zip(poissons) {
        x += s * pois.sample(rng);
    }
    x
}

fn poisson_laws(l: &LevyTriple, v: f64) -> Result<Vec<Poisson<f64>>> {
    l.atoms
        .iter()
        .map(|&(_, lam)| {
            Poisson::new(lam * v).map_err(|e| Error::InvalidParameter { name: "levy.atoms", detail: e.to_string() })
        })
        .collect()
}

/// One realization of white noise: an increment per lattice cell.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSample {
    lattice: Lattice,
    increments: Vec<f64>,
}

impl NoiseSample {
    pub fn new(lattice: Lattice, increments: Vec<f64>) -> Result<Self> {
        if increments.len() != lattice.len() {
            return Err(Error::DimensionMismatch { expected: lattice.len(), got: increments.len() });
        }
        Ok(NoiseSample { lattice, increments })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// `Ϝ(h) = sum_cells h(c) X_c` for a function constant on cells.
    pub fn pair(&self, h: &[f64]) -> f64 {
        h.iter().zip(&self.increments).map(|(a, b)| a * b).sum()
    }
}

/// Independent cell increments with characteristic function `exp(v Ψ(t))`.
/// Each cell draws from its own stream keyed by `(seed, 0, cell)`.
pub fn sample_noise(lat: &Lattice, l: &LevyTriple, seed: u64) -> Result<NoiseSample> {
    sample_noise_indexed(lat, l, seed, 0)
}

/// Realization number `sample` of the noise for `seed`.
pub fn sample_noise_indexed(lat: &Lattice, l: &LevyTriple, seed: u64, sample: u64) -> Result<NoiseSample> {
    let v = lat.cell_volume();
    let pois = poisson_laws(l, v)?;
    let increments = (0..lat.len() as u64)
        .map(|cell| draw_increment(&mut cell_rng(seed, sample, cell), l, v, &pois))
        .collect();
    Ok(NoiseSample { lattice: *lat, increments })
}

/// `Ϝ(h)` for `nsamples` independent realizations, in sample order.
pub fn sample_pairings(lat: &Lattice, l: &LevyTriple, h: &[Vec<f64>], nsamples: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if let Some(bad) = h.iter().find(|v| v.len() != lat.len()) {
        return Err(Error::DimensionMismatch { expected: lat.len(), got: bad.len() });
    }
    let v = lat.cell_volume();
    let pois = poisson_laws(l, v)?;
    Ok((0..nsamples as u64)
        .into_par_iter()
        .map(|sample| {
            let mut acc = vec![0.0; h.len()];
            for cell in 0..lat.len() {
                let x = draw_increment(&mut cell_rng(seed, sample, cell as u64), l, v, &pois);
                for (a, hi) in acc.iter_mut().zip(h) {
                    *a += hi[cell] * x;
                }
            }
            acc
        })
        .collect())
}

/// Density of `Φ = G * Ϝ` on the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    lattice: Lattice,
    values: Vec<f64>,
}

impl FieldSample {
    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_grid(&self) -> GridFn {
        GridFn::from_real(self.lattice, &self.values, Domain::Position).expect("field sample matches its lattice")
    }

    /// `Φ(f) = ∫ Φ(x) f(x) d^N x`.
    pub fn pair(&self, f: &GridFn) -> Result<f64> {
        self.lattice.same_as(f.lattice())?;
        Ok(self.values.iter().zip(f.values()).map(|(a, b)| a * b.re).sum::<f64>() * self.lattice.cell_volume())
    }
}

/// `G * (X / v)`, the field density driven by a noise realization.
pub fn sample_field(noise: &NoiseSample, g: &GreenKernel) -> Result<FieldSample> {
    noise.lattice.same_as(g.lattice())?;
    let v = noise.lattice.cell_volume();
    let density: Vec<f64> = noise.increments.iter().map(|x| x / v).collect();
    let rho = GridFn::from_real(noise.lattice, &density, Domain::Position)?;
    let field = g.convolve(&rho)?;
    Ok(FieldSample { lattice: noise.lattice, values: field.real_values() })
}

/// `(1/n) sum_j exp(i Φ_j(f))` over `nsamples` field realizations.
pub fn empirical_char_field(f: &GridFn, l: &LevyTriple, g: &GreenKernel, nsamples: usize, seed: u64) -> Result<Complex64> {
    if nsamples == 0 {
        return Err(Error::InvalidParameter { name: "nsamples", detail: "must be >= 1".into() });
    }
    let h = g.convolve(f)?.real_values();
    if h.iter().all(|&v| v == 0.0) {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let phis = sample_pairings(g.lattice(), l, &[h], nsamples, seed)?;
    let sum: Complex64 = phis.iter().map(|p| Complex64::new(0.0, p[0]).exp()).sum();
    Ok(sum / nsamples as f64)
}

/// Analytic target `exp ∫ Ψ((G * f)(x)) d^N x` for [`empirical_char_field`].
pub fn analytic_char_field(f: &GridFn, l: &LevyTriple, g: &GreenKernel) -> Result<Complex64> {
    let h = g.convolve(f)?.map(|v| Complex64::new(v.re, 0.0));
    char_functional(&h, l)
}
