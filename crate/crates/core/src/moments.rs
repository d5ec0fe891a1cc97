//! Set partitions, Schwinger functions of the Euclidean field and the p-adic
//! Brownian sheet.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::GridFn;
use crate::noise::{moment_constants, sample_pairings, LevyTriple};
use crate::operators::GreenKernel;
use crate::padic::{is_prime, PVector};

/// Largest `m` accepted by [`set_partitions`].
pub const MAX_PARTITION_SIZE: usize = 10;

/// Largest order of an analytic Schwinger function.
pub const MAX_SCHWINGER_ORDER: usize = 8;

/// Partition of `{0, .., m-1}`; blocks are sorted internally and ordered by
/// their least element.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SetPartition {
    blocks: Vec<Vec<usize>>,
}

impl SetPartition {
    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// All partitions of an `m`-element set in restricted-growth-string order.
pub fn set_partitions(m: usize) -> Result<Vec<SetPartition>> {
    if m > MAX_PARTITION_SIZE {
        return Err(Error::InvalidParameter { name: "m", detail: format!("{m} exceeds {MAX_PARTITION_SIZE}") });
    }
    let mut out = Vec::new();
    let mut rgs = vec![0usize; m];
    loop {
        let nblocks = rgs.iter().max().map_or(0, |&b| b + 1);
        let mut blocks = vec![Vec::new(); nblocks];
        for (i, &b) in rgs.iter().enumerate() {
            blocks[b].push(i);
        }
        out.push(SetPartition { blocks });
        // next restricted growth string
        let Some(i) = (1..m).rev().find(|&i| rgs[i] <= *rgs[..i].iter().max().unwrap()) else {
            return Ok(out);
        };
        rgs[i] += 1;
        for r in rgs.iter_mut().skip(i + 1) {
            *r = 0;
        }
    }
}

fn convolved(gs: &[GridFn], g: &GreenKernel) -> Result<Vec<Vec<f64>>> {
    gs.iter()
        .map(|f| {
            let im = f.max_imag();
            if im > 1e-12 {
                return Err(Error::NonReal(im));
            }
            Ok(g.convolve(f)?.real_values())
        })
        .collect()
}

/// `S_m = sum_I prod_{blocks} c_{|b|} ∫ prod_{k in b} (G * g_k) d^N x`.
///
/// The convolved test functions are sorted before summation, so the result is
/// bitwise invariant under permutations of `gs`.
pub fn schwinger_analytic(gs: &[GridFn], l: &LevyTriple, g: &GreenKernel) -> Result<f64> {
    let m = gs.len();
    if m > MAX_SCHWINGER_ORDER {
        return Err(Error::InvalidParameter { name: "m", detail: format!("{m} exceeds {MAX_SCHWINGER_ORDER}") });
    }
    if m == 0 {
        return Ok(1.0);
    }
    let mut hs = convolved(gs, g)?;
    hs.sort_by(|a, b| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    let c = moment_constants(l, m);
    let v = g.lattice().cell_volume();
    let mut total = 0.0;
    for part in set_partitions(m)? {
        if part.blocks.iter().any(|b| c[b.len() - 1] == 0.0) {
            continue;
        }
        let term: f64 = part
            .blocks
            .iter()
            .map(|b| {
                let integral: f64 = (0..hs[0].len()).map(|cell| b.iter().map(|&k| hs[k][cell]).product::<f64>()).sum();
                c[b.len() - 1] * integral * v
            })
            .product();
        total += term;
    }
    Ok(total)
}

/// Monte-Carlo estimate of `E prod_j Φ(g_j)` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// Minimum sample count for [`schwinger_mc`].
pub const MIN_MC_SAMPLES: usize = 1000;

pub fn schwinger_mc(gs: &[GridFn], l: &LevyTriple, g: &GreenKernel, nsamples: usize, seed: u64) -> Result<McEstimate> {
    if nsamples < MIN_MC_SAMPLES {
        return Err(Error::InvalidParameter { name: "nsamples", detail: format!("{nsamples} is below {MIN_MC_SAMPLES}") });
    }
    if gs.is_empty() {
        return Ok(McEstimate { estimate: 1.0, stderr: 0.0 });
    }
    let hs = convolved(gs, g)?;
    let phis = sample_pairings(g.lattice(), l, &hs, nsamples, seed)?;
    let prods: Vec<f64> = phis.iter().map(|p| p.iter().product()).collect();
    let n = nsamples as f64;
    let mean = prods.iter().sum::<f64>() / n;
    let var = prods.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(McEstimate { estimate: mean, stderr: (var / n).sqrt() })
}

/// One path of the Brownian sheet `W(t) = Ϝ(1_{B(||t||_p)})` at radii `p^{e_r}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SheetPath {
    prime: u64,
    exponents: Vec<i64>,
    values: Vec<f64>,
}

impl SheetPath {
    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn exponents(&self) -> &[i64] {
        &self.exponents
    }

    pub fn radii(&self) -> Vec<f64> {
        self.exponents.iter().map(|&e| (self.prime as f64).powi(e as i32)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `W(t)`; zero at the origin, `None` when `||t||_p` is not a sampled radius.
    pub fn at(&self, t: &PVector) -> Option<f64> {
        match t.norm().exponent {
            None => Some(0.0),
            Some(e) => self.exponents.iter().position(|&r| r == e).map(|i| self.values[i]),
        }
    }
}

fn check_sheet(prime: u64, exponents: &[i64], sigma: f64) -> Result<()> {
    if !is_prime(prime) {
        return Err(Error::NotPrime(prime));
    }
    if exponents.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::UnsortedRadii);
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter { name: "sigma", detail: format!("{sigma} must be positive") });
    }
    Ok(())
}

/// Path number `path` of the sheet: Gaussian shell increments with variance
/// `σ² (ρ_{r+1}^N - ρ_r^N)`.
pub fn sheet_sample_indexed(prime: u64, dim: usize, exponents: &[i64], sigma: f64, seed: u64, path: u64) -> Result<SheetPath> {
    check_sheet(prime, exponents, sigma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    let pf = prime as f64;
    let mut prev_vol = 0.0;
    let mut w = 0.0;
    let values = exponents
        .iter()
        .map(|&e| {
            let vol = pf.powi((e * dim as i64) as i32);
            let z: f64 = rng.sample(StandardNormal);
            w += sigma * (vol - prev_vol).sqrt() * z;
            prev_vol = vol;
            w
        })
        .collect();
    Ok(SheetPath { prime, exponents: exponents.to_vec(), values })
}

pub fn sheet_sample(prime: u64, dim: usize, exponents: &[i64], sigma: f64, seed: u64) -> Result<SheetPath> {
    sheet_sample_indexed(prime, dim, exponents, sigma, seed, 0)
}

/// `npaths` independent paths, in path order.
pub fn sheet_paths(prime: u64, dim: usize, exponents: &[i64], sigma: f64, seed: u64, npaths: usize) -> Result<Vec<SheetPath>> {
    check_sheet(prime, exponents, sigma)?;
    (0..npaths as u64)
        .into_par_iter()
        .map(|k| sheet_sample_indexed(prime, dim, exponents, sigma, seed, k))
        .collect()
}

/// `σ² min(||t||, ||s||)^N` on the sampled radii.
pub fn sheet_covariance_model(prime: u64, dim: usize, exponents: &[i64], sigma: f64) -> Vec<Vec<f64>> {
    let pf = prime as f64;
    exponents
        .iter()
        .map(|&a| exponents.iter().map(|&b| sigma * sigma * pf.powi((a.min(b) * dim as i64) as i32)).collect())
        .collect()
}

/// Empirical second moments `E[W(ρ_a) W(ρ_b)]`.
pub fn empirical_covariance(paths: &[SheetPath]) -> Vec<Vec<f64>> {
    let k = paths.first().map_or(0, |p| p.values.len());
    let n = paths.len() as f64;
    (0..k)
        .map(|a| (0..k).map(|b| paths.iter().map(|p| p.values[a] * p.values[b]).sum::<f64>() / n).collect())
        .collect()
}

/// Sample correlation of two sequences.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
