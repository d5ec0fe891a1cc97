use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use ultrafield_core::lattice::{read_csv, write_csv};
use ultrafield_core::moments::{correlation, empirical_covariance, sheet_covariance_model, sheet_paths, MAX_SCHWINGER_ORDER, MIN_MC_SAMPLES};
use ultrafield_core::noise::{analytic_char_field, sample_noise_indexed};
use ultrafield_core::operators::{klein_gordon_residual, MAX_PROFILE_LEVEL};
use ultrafield_core::{
    certify_elliptic, certify_minimal, decay_fit, empirical_char_field, green_series, green_spectral, invariance_report,
    klein_gordon_solve, psi_eval, sample_field, sample_noise, schwinger_analytic, schwinger_mc, set_partitions, z_alpha,
    DecayRegime, Domain, Error, EuclideanElement, GridFn,
};

use crate::config::{parse_element, parse_test_fn, Config};
use crate::error::{CliError, Result};

pub struct Context {
    pub cfg: Config,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

impl Context {
    /// `--seed`, then the `seed` key, then 0.
    fn seed(&self) -> Result<u64> {
        match self.seed {
            Some(s) => Ok(s),
            None => Ok(self.cfg.opt("seed")?.unwrap_or(0)),
        }
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.out.join(name);
        fs::create_dir_all(&self.out).map_err(|source| CliError::Io { path: self.out.clone(), source })?;
        File::create(&path).map(BufWriter::new).map_err(|source| CliError::Io { path, source })
    }

    fn write(&self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
        let mut w = self.create(name)?;
        body(&mut w)
            .and_then(|_| w.flush())
            .map_err(|source| CliError::Io { path: self.out.join(name), source })
    }

    fn grid(&self, name: &str, f: &GridFn, extra: &[String]) -> Result<()> {
        self.write(name, |w| write_csv(f, extra, w))
    }

    /// Writes the summary to `name` and echoes it on stdout.
    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).expect("summaries serialize");
        self.write(name, |w| writeln!(w, "{text}"))?;
        println!("{text}");
        Ok(())
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Serialize)]
struct EllipticityReport {
    poly: String,
    prime: u64,
    dimension: usize,
    elliptic: bool,
    level: u32,
    witness: Option<Vec<u64>>,
    classes: Option<usize>,
    min_ord: Option<u32>,
    max_ord: Option<u32>,
    alpha: f64,
    gamma: Option<f64>,
    constants: Option<(f64, f64)>,
    z_alpha: Option<f64>,
}

pub fn ellipticity(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.cfg;
    let (p, n) = (cfg.prime()?, cfg.dimension()?);
    let poly = cfg.poly(p, n)?;
    let alpha = cfg.positive("alpha", Some(1.0))?;
    let level: Option<u32> = cfg.opt("level")?;
    if level == Some(0) {
        return Err(CliError::invalid("level", "must be at least 1"));
    }
    let result = match level {
        Some(l) => certify_elliptic(&poly, l),
        None => certify_minimal(&poly, MAX_PROFILE_LEVEL),
    };
    let mut report = EllipticityReport {
        poly: poly.to_string(),
        prime: p,
        dimension: n,
        elliptic: false,
        level: 0,
        witness: None,
        classes: None,
        min_ord: None,
        max_ord: None,
        alpha,
        gamma: None,
        constants: None,
        z_alpha: None,
    };
    match result {
        Ok(cert) => {
            report.elliptic = true;
            report.level = cert.level();
            report.classes = Some(cert.rep_count());
            report.min_ord = Some(cert.min_ord());
            report.max_ord = Some(cert.max_ord());
            report.gamma = Some(cert.gamma(alpha));
            report.constants = Some(cert.constants(alpha));
            report.z_alpha = Some(z_alpha(&poly, alpha, &cert)?);
        }
        Err(Error::NotElliptic { witness, level }) => {
            report.level = level;
            report.witness = Some(witness);
        }
        Err(e) => return Err(e.into()),
    }
    ctx.json("ellipticity.json", &report)?;
    Ok(report.elliptic)
}

#[derive(Serialize)]
struct DecayRow {
    regime: &'static str,
    slope: Option<f64>,
    expected: Option<f64>,
    continuous: Option<bool>,
    within_15pct: Option<bool>,
    shells: Vec<(i64, f64)>,
    error: Option<String>,
}

#[derive(Serialize)]
struct SeriesReport {
    points: usize,
    tol: f64,
    max_abs_deviation: f64,
    max_rel_deviation: f64,
    outside_tail_bound: usize,
}

#[derive(Serialize)]
struct GreenReport {
    lattice: String,
    poly: String,
    alpha: f64,
    mass: f64,
    certificate_level: u32,
    min_resolved_exponent: i64,
    origin_value: f64,
    min_off_origin: f64,
    series: SeriesReport,
    decay: Vec<DecayRow>,
}

pub fn green(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.cfg;
    let lat = cfg.lattice()?;
    let poly = cfg.poly(lat.prime(), lat.dim())?;
    let alpha = cfg.positive("alpha", None)?;
    let mass = cfg.positive("mass", None)?;
    let form = cfg.form(lat.prime(), lat.dim())?;
    let tol = cfg.positive("tol", Some(1e-12))?;
    let max_points = cfg.count("series_points", Some(2000))?;

    let g = green_spectral(&lat, &poly, alpha, mass, &form)?;
    ctx.grid("green.csv", g.values(), &["m alpha poly".into(), g.header()])?;

    let lo = g.min_resolved_exponent();
    let resolved: Vec<usize> = (0..lat.len()).filter(|&f| lat.norm_exponent_flat(f).is_some_and(|e| e >= lo)).collect();
    let step = resolved.len().div_ceil(max_points).max(1);
    let picked: Vec<usize> = resolved.into_iter().step_by(step).collect();
    let spectral = g.values().values();
    let devs = picked
        .par_iter()
        .map(|&f| {
            let sv = green_series(&lat.point(&lat.index_of(f)), &poly, alpha, mass, &form, g.certificate(), tol)?;
            let d = (sv.value - spectral[f].re).abs();
            Ok((d, d / spectral[f].re.abs(), d > sv.tail_bound))
        })
        .collect::<std::result::Result<Vec<_>, Error>>()?;
    let series = SeriesReport {
        points: devs.len(),
        tol,
        max_abs_deviation: devs.iter().map(|d| d.0).fold(0.0, f64::max),
        max_rel_deviation: devs.iter().map(|d| d.1).fold(0.0, f64::max),
        outside_tail_bound: devs.iter().filter(|d| d.2).count(),
    };

    let mut decay = Vec::new();
    for (regime, name) in [(DecayRegime::NearZero, "near_zero"), (DecayRegime::Infinity, "infinity")] {
        decay.push(match decay_fit(&g, regime) {
            Ok(fit) => DecayRow {
                regime: name,
                slope: Some(fit.slope),
                expected: Some(fit.expected),
                continuous: Some(fit.continuous),
                within_15pct: Some((fit.slope - fit.expected).abs() <= 0.15 * fit.expected.abs()),
                shells: fit.shells,
                error: None,
            },
            Err(e @ (Error::InsufficientShells { .. } | Error::NonPositiveShell(_))) => DecayRow {
                regime: name,
                slope: None,
                expected: None,
                continuous: None,
                within_15pct: None,
                shells: Vec::new(),
                error: Some(e.to_string()),
            },
            Err(e) => return Err(e.into()),
        });
    }
    ctx.write("decay.csv", |w| {
        writeln!(w, "regime,slope,expected,continuous,shells,within_15pct")?;
        for r in &decay {
            let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:?}"));
            let flag = |v: Option<bool>| v.map_or(String::new(), |v| v.to_string());
            writeln!(w, "{},{},{},{},{},{}", r.regime, opt(r.slope), opt(r.expected), flag(r.continuous), r.shells.len(), flag(r.within_15pct))?;
        }
        Ok(())
    })?;

    let ok = series.outside_tail_bound == 0;
    ctx.json(
        "green.json",
        &GreenReport {
            lattice: lat.to_string(),
            poly: poly.to_string(),
            alpha,
            mass,
            certificate_level: g.certificate().level(),
            min_resolved_exponent: lo,
            origin_value: spectral[0].re,
            min_off_origin: g.min_off_origin(),
            series,
            decay,
        },
    )?;
    Ok(ok)
}

#[derive(Serialize)]
struct SolveReport {
    lattice: String,
    rhs: String,
    residual: f64,
    tol: f64,
    pass: bool,
}

pub fn solve(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.cfg;
    let lat = cfg.lattice()?;
    let poly = cfg.poly(lat.prime(), lat.dim())?;
    let alpha = cfg.positive("alpha", None)?;
    let mass = cfg.positive("mass", None)?;
    let form = cfg.form(lat.prime(), lat.dim())?;
    let tol = cfg.positive("residual_tol", Some(1e-10))?;
    let rhs_spec = cfg.get("rhs").unwrap_or("omega").to_string();
    let rhs = match parse_test_fn(&rhs_spec, lat) {
        Ok(f) => f,
        Err(_) => {
            let path = PathBuf::from(&rhs_spec);
            let file = File::open(&path).map_err(|e| CliError::invalid("rhs", format!("{rhs_spec:?}: {e}")))?;
            let (f, _) = read_csv(BufReader::new(file)).map_err(|e| CliError::invalid("rhs", e))?;
            if f.lattice() != &lat || f.domain() != Domain::Position {
                return Err(CliError::invalid("rhs", format!("grid is not a position function on {lat}")));
            }
            f
        }
    };
    let u = klein_gordon_solve(&rhs, &poly, alpha, mass, &form)?;
    let residual = klein_gordon_residual(&u, &rhs, &poly, alpha, mass, &form)?;
    ctx.grid("solution.csv", &u, &[])?;
    let pass = residual < tol;
    ctx.json("solve.json", &SolveReport { lattice: lat.to_string(), rhs: rhs_spec, residual, tol, pass })?;
    Ok(pass)
}

#[derive(Serialize)]
struct CharRow {
    test: String,
    empirical: (f64, f64),
    analytic: (f64, f64),
    deviation: f64,
    pass: bool,
}

#[derive(Serialize)]
struct SampleReport {
    lattice: String,
    seed: u64,
    nsamples: usize,
    tol: f64,
    rows: Vec<CharRow>,
    pass: bool,
}

pub fn sample(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.cfg;
    let lat = cfg.lattice()?;
    let poly = cfg.poly(lat.prime(), lat.dim())?;
    let alpha = cfg.positive("alpha", None)?;
    let mass = cfg.positive("mass", None)?;
    let form = cfg.form(lat.prime(), lat.dim())?;
    let levy = cfg.levy()?;
    let seed = ctx.seed()?;
    let nsamples = cfg.count("nsamples", None)?;
    let tol = cfg.positive("char_tol", Some(5e-2))?;
    let tests = cfg.tests(lat, &["omega"])?;

    let g = green_spectral(&lat, &poly, alpha, mass, &form)?;
    let noise = sample_noise(&lat, &levy, seed)?;
    let field = sample_field(&noise, &g)?;
    ctx.grid("noise.csv", &GridFn::from_real(lat, noise.increments(), Domain::Position)?, &[])?;
    ctx.grid("field.csv", &field.to_grid(), &["m alpha poly".into(), g.header()])?;

    let rows = tests
        .iter()
        .map(|(name, f)| {
            let emp = empirical_char_field(f, &levy, &g, nsamples, seed)?;
            let ana = analytic_char_field(f, &levy, &g)?;
            let deviation = (emp - ana).norm();
            Ok(CharRow { test: name.clone(), empirical: (emp.re, emp.im), analytic: (ana.re, ana.im), deviation, pass: deviation < tol })
        })
        .collect::<std::result::Result<Vec<_>, Error>>()?;
    ctx.write("char.csv", |w| {
        writeln!(w, "test,empirical_re,empirical_im,analytic_re,analytic_im,deviation,pass")?;
        for r in &rows {
            writeln!(w, "\"{}\",{:?},{:?},{:?},{:?},{:?},{}", r.test, r.empirical.0, r.empirical.1, r.analytic.0, r.analytic.1, r.deviation, r.pass)?;
        }
        Ok(())
    })?;
    let pass = rows.iter().all(|r| r.pass);
    ctx.json("sample.json", &SampleReport { lattice: lat.to_string(), seed, nsamples, tol, rows, pass })?;
    Ok(pass)
}

#[derive(Serialize)]
struct CharCheckReport {
    lattice: String,
    cell_volume: f64,
    seed: u64,
    nsamples: usize,
    max_deviation: f64,
    tol: f64,
    pass: bool,
}

pub fn char_check(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.cfg;
    let lat = cfg.lattice()?;
    let levy = cfg.levy()?;
    let seed = ctx.seed()?;
    let nsamples = cfg.count("nsamples", None)?;
    let tol = cfg.positive("char_tol", Some(5e-2))?;
    let ts = cfg.floats("t")?.unwrap_or_else(|| (-3..=3).map(f64::from).collect());

    let mut draws = Vec::with_capacity(nsamples);
    let mut realization = 0;
    while draws.len() < nsamples {
        let noise = sample_noise_indexed(&lat, &levy, seed, realization)?;
        let take = (nsamples - draws.len()).min(noise.increments().len());
        draws.extend_from_slice(&noise.increments()[..take]);
        realization += 1;
    }
    let v = lat.cell_volume();
    let rows: Vec<(f64, Complex64, Complex64)> = ts
        .iter()
        .map(|&t| {
            let emp = draws.iter().map(|x| Complex64::new(0.0, t * x).exp()).sum::<Complex64>() / nsamples as f64;
            (t, emp, (psi_eval(t, &levy) * v).exp())
        })
        .collect();
    ctx.write("char_check.csv", |w| {
        writeln!(w, "t,empirical_re,empirical_im,exact_re,exact_im,deviation")?;
        for (t, e, x) in &rows {
            writeln!(w, "{t:?},{:?},{:?},{:?},{:?},{:?}", e.re, e.im, x.re, x.im, (e - x).norm())?;
        }
        Ok(())
    })?;
    let max_deviation = rows.iter().map(|(_, e, x)| (e - x).norm()).fold(0.0, f64::max);
    let pass = max_deviation < tol;
    ctx.json(
        "char_check.json",
        &CharCheckReport { lattice: lat.to_string(), cell_volume: v, seed, nsamples, max_deviation, tol, pass },
    )?;
    Ok(pass)
}

pub fn schwinger(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.cfg;
    let lat = cfg.lattice()?;
    let poly = cfg.poly(lat.prime(), lat.dim())?;
    let alpha = cfg.positive("alpha", None)?;
    let mass = cfg.positive("mass", None)?;
    let form = cfg.form(lat.prime(), lat.dim())?;
    let levy = cfg.levy()?;
    let seed = ctx.seed()?;
    let nsamples = cfg.count("nsamples", None)?;
    if nsamples < MIN_MC_SAMPLES {
        return Err(CliError::invalid("nsamples", format!("must be at least {MIN_MC_SAMPLES}")));
    }
    let order = cfg.count("order", Some(4))?;
    if order > MAX_SCHWINGER_ORDER {
        return Err(CliError::invalid("order", format!("must be at most {MAX_SCHWINGER_ORDER}")));
    }
    let tests = cfg.tests(lat, &["omega"])?;

    let g = green_spectral(&lat, &poly, alpha, mass, &form)?;
    let mut rows = Vec::new();
    for m in 1..=order {
        let gs: Vec<GridFn> = (0..m).map(|i| tests[i % tests.len()].1.clone()).collect();
        let exact = schwinger_analytic(&gs, &levy, &g)?;
        let mc = schwinger_mc(&gs, &levy, &g, nsamples, seed.wrapping_add(m as u64))?;
        let diff = (mc.estimate - exact).abs();
        let z = if mc.stderr > 0.0 { diff / mc.stderr } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
        rows.push((m, set_partitions(m)?.len(), exact, mc.estimate, mc.stderr, z));
    }
    ctx.write("schwinger.csv", |w| {
        writeln!(w, "m,partition_count,analytic,mc_estimate,stderr,z,within_3se")?;
        for (m, parts, exact, est, se, z) in &rows {
            writeln!(w, "{m},{parts},{exact:?},{est:?},{se:?},{z:?},{}", *z <= 3.0)?;
        }
        Ok(())
    })?;
    Ok(rows.iter().all(|r| r.5 <= 3.0))
}

#[derive(Serialize)]
struct SheetReport {
    prime: u64,
    dimension: usize,
    exponents: Vec<i64>,
    sigma: f64,
    seed: u64,
    npaths: usize,
    max_rel_error: f64,
    increment_correlation: Option<f64>,
    tol: f64,
    pass: bool,
}

pub fn sheet(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.cfg;
    let (p, n) = (cfg.prime()?, cfg.dimension()?);
    let exponents = cfg.ints("radii")?.unwrap_or_else(|| (-2..=2).collect());
    if exponents.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::invalid("radii", "exponents must be strictly increasing"));
    }
    let sigma = cfg.positive("sigma", Some(1.0))?;
    let seed = ctx.seed()?;
    let npaths = cfg.count("nsamples", None)?;
    let keep = cfg.opt("paths_out")?.unwrap_or(10usize);
    let tol = cfg.positive("cov_tol", Some(0.05))?;

    let paths = sheet_paths(p, n, &exponents, sigma, seed, npaths)?;
    let cov = empirical_covariance(&paths);
    let model = sheet_covariance_model(p, n, &exponents, sigma);
    let mut entries = Vec::new();
    for (a, ea) in exponents.iter().enumerate() {
        for (b, eb) in exponents.iter().enumerate() {
            entries.push((*ea, *eb, cov[a][b], model[a][b], (cov[a][b] - model[a][b]).abs() / model[a][b]));
        }
    }
    let max_rel_error = entries.iter().map(|e| e.4).fold(0.0, f64::max);
    ctx.write("covariance.csv", |w| {
        writeln!(w, "exponent_a,exponent_b,empirical,model,rel_error,max_rel_error")?;
        for (ea, eb, c, m, r) in &entries {
            writeln!(w, "{ea},{eb},{c:?},{m:?},{r:?},{max_rel_error:?}")?;
        }
        Ok(())
    })?;
    ctx.write("sheet.csv", |w| {
        writeln!(w, "path,exponent,value")?;
        for (i, path) in paths.iter().take(keep).enumerate() {
            for (e, v) in exponents.iter().zip(path.values()) {
                writeln!(w, "{i},{e},{v:?}")?;
            }
        }
        Ok(())
    })?;
    let increment_correlation = (exponents.len() >= 4).then(|| {
        let inc = |lo: usize, hi: usize| paths.iter().map(|w| w.values()[hi] - w.values()[lo]).collect::<Vec<f64>>();
        correlation(&inc(0, 1), &inc(2, 3))
    });
    let pass = max_rel_error < tol && increment_correlation.is_none_or(|c| c.abs() < tol);
    ctx.json(
        "sheet.json",
        &SheetReport {
            prime: p,
            dimension: n,
            exponents,
            sigma,
            seed,
            npaths,
            max_rel_error,
            increment_correlation: increment_correlation.and_then(finite),
            tol,
            pass,
        },
    )?;
    Ok(pass)
}

pub fn symmetry(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.cfg;
    let lat = cfg.lattice()?;
    let p = lat.prime();
    let poly = cfg.poly(p, lat.dim())?;
    let alpha = cfg.positive("alpha", None)?;
    let mass = cfg.positive("mass", None)?;
    let form = cfg.form(p, lat.dim())?;
    let levy = cfg.levy()?;
    let specs = cfg.all("element");
    if specs.is_empty() {
        return Err(CliError::MissingKey("element".into()));
    }
    let elements = specs
        .iter()
        .map(|s| {
            let (g, a) = parse_element(s, p).map_err(|d| CliError::invalid("element", d))?;
            if g.dim() != lat.dim() {
                return Err(CliError::invalid("element", format!("{s:?} is not {0}x{0}", lat.dim())));
            }
            EuclideanElement::new(g, a).map_err(|e| CliError::invalid("element", format!("{s:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let tests = cfg.tests(lat, &["omega", "omega"])?;
    let t1 = &tests.get(1).unwrap_or(&tests[0]).1;

    let g = green_spectral(&lat, &poly, alpha, mass, &form)?;
    let rows = invariance_report(&g, &elements, (&tests[0].1, t1), &levy)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:?}"));
    ctx.write("symmetry.csv", |w| {
        writeln!(w, "element,preserves_quadratic,preserves_polynomial,kernel_deviation,schwinger_deviation,rejection")?;
        for (s, r) in specs.iter().zip(&rows) {
            writeln!(
                w,
                "\"{s}\",{},{},{},{},\"{}\"",
                r.preserves_quadratic,
                r.preserves_polynomial,
                opt(r.kernel_deviation),
                opt(r.schwinger_deviation),
                r.rejection.as_deref().unwrap_or("")
            )?;
        }
        Ok(())
    })?;
    Ok(true)
}
