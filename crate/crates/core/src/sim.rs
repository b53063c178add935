//! Monte Carlo simulation of Brownian motion on U(nd) and block-trace moment
//! estimates.
//!
//! The Hermitian increment has entry variance `dt/(nd)`, so `E[H²] = dt·I`
//! and `exp(iH)·U` has the Itô drift `-U dt/2`.

use std::fmt;
use std::str::FromStr;

use faer::{c64, Mat, MatRef, Side};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_engine::FreeEngine;
use crate::stats::{fit_slope, mean_and_stderr};
use crate::words::{Letter, TraceTuple};

/// Largest tolerated `‖U†U - I‖_F` after a step.
pub const UNITARITY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// `U ↦ exp(iH)·U`; weak order 1.
    Geodesic,
    /// Geodesic step whose traceless part is run for time `dt - dt²/12`;
    /// weak order 2 and exact for `nd = 1`.
    #[default]
    GeodesicTc,
    /// `(I + iH - dt/2)·U` followed by polar re-unitarization.
    EulerRenorm,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Geodesic => "geodesic",
            Scheme::GeodesicTc => "geodesic-tc",
            Scheme::EulerRenorm => "euler-renorm",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geodesic" => Ok(Scheme::Geodesic),
            "geodesic-tc" => Ok(Scheme::GeodesicTc),
            "euler-renorm" => Ok(Scheme::EulerRenorm),
            other => Err(Error::InvalidArgument(format!(
                "unknown scheme '{other}' (geodesic, geodesic-tc, euler-renorm)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub d: usize,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    /// Worker threads; `None` uses the global rayon pool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl SimConfig {
    pub fn new(n: usize, d: usize) -> Self {
        SimConfig {
            n,
            d,
            dt: 0.01,
            paths: 10_000,
            seed: 0,
            scheme: Scheme::default(),
            threads: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.n * self.d
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::InvalidArgument("n and d must be >= 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "dt must be > 0, got {}",
                self.dt
            )));
        }
        if self.paths == 0 {
            return Err(Error::InvalidArgument("paths must be >= 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidArgument("threads must be >= 1".into()));
        }
        Ok(())
    }

    fn rng(&self, path: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path as u64);
        rng
    }

    fn install<T: Send>(&self, job: impl FnOnce() -> T + Send) -> Result<T> {
        match self.threads {
            None => Ok(job()),
            Some(k) => rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::InvalidArgument(e.to_string()))
                .map(|pool| pool.install(job)),
        }
    }
}

/// GUE-normalized Hermitian increment over a step of length `dt`.
#[derive(Clone, Debug)]
pub struct HermitianIncrement {
    pub matrix: Mat<c64>,
    pub dt: f64,
}

pub fn sample_increment<R: Rng + ?Sized>(nd: usize, dt: f64, rng: &mut R) -> HermitianIncrement {
    let diag = (dt / nd as f64).sqrt();
    let off = (dt / (2.0 * nd as f64)).sqrt();
    let mut m = Mat::<c64>::zeros(nd, nd);
    for i in 0..nd {
        let x: f64 = rng.sample(StandardNormal);
        m[(i, i)] = c64::new(diag * x, 0.0);
        for j in i + 1..nd {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let z = c64::new(off * re, off * im);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    HermitianIncrement { matrix: m, dt }
}

/// `‖U†U - I‖_F`.
pub fn unitarity_defect(u: MatRef<'_, c64>) -> f64 {
    let g = u.adjoint() * u;
    let mut s = 0.0;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            s += (g[(i, j)] - c64::new(target, 0.0)).norm_sqr();
        }
    }
    s.sqrt()
}

fn exp_i_hermitian(h: &Mat<c64>, squeeze: f64) -> Result<Mat<c64>> {
    let dim = h.nrows();
    let centre = (0..dim).map(|i| h[(i, i)].re).sum::<f64>() / dim as f64;
    let eig = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let v = eig.U();
    let s = eig.S().column_vector();
    let mut scaled = v.to_owned();
    for k in 0..dim {
        let lambda = centre + squeeze * (s[k].re - centre);
        let phase = c64::new(lambda.cos(), lambda.sin());
        for r in 0..dim {
            scaled[(r, k)] *= phase;
        }
    }
    Ok(&scaled * v.adjoint())
}

/// One integrator step.
pub fn step(u: MatRef<'_, c64>, inc: &HermitianIncrement, scheme: Scheme) -> Result<Mat<c64>> {
    let dim = u.nrows();
    if inc.matrix.nrows() != dim || u.ncols() != dim {
        return Err(Error::InvalidArgument(
            "increment and state differ in size".into(),
        ));
    }
    let next = match scheme {
        Scheme::Geodesic => exp_i_hermitian(&inc.matrix, 1.0)? * u,
        Scheme::GeodesicTc => {
            let squeeze = (1.0 - inc.dt / 12.0).max(0.0).sqrt();
            exp_i_hermitian(&inc.matrix, squeeze)? * u
        }
        Scheme::EulerRenorm => {
            let mut a = Mat::<c64>::zeros(dim, dim);
            for j in 0..dim {
                for i in 0..dim {
                    a[(i, j)] = c64::new(0.0, 1.0) * inc.matrix[(i, j)];
                }
                a[(j, j)] += c64::new(1.0 - inc.dt / 2.0, 0.0);
            }
            let m = a * u;
            let svd = m
                .svd()
                .map_err(|e| Error::Numerical(format!("svd failed: {e:?}")))?;
            svd.U() * svd.V().adjoint()
        }
    };
    let defect = unitarity_defect(next.as_ref());
    if !(defect <= UNITARITY_TOL) {
        return Err(Error::Integrator(format!(
            "unitarity defect {defect:e} after a {scheme} step"
        )));
    }
    Ok(next)
}

fn sorted_times(times: &[f64]) -> Result<Vec<f64>> {
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidArgument(
            "times must be finite and >= 0".into(),
        ));
    }
    if times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("times must be sorted".into()));
    }
    let mut out = times.to_vec();
    out.dedup();
    Ok(out)
}

/// One path observed at every entry of `times` (sorted, deduplicated).
fn run_path(config: &SimConfig, times: &[f64], path: usize) -> Result<Vec<Mat<c64>>> {
    let dim = config.dim();
    let mut rng = config.rng(path);
    let mut u = Mat::<c64>::identity(dim, dim);
    let mut now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let span = t - now;
        if span > 0.0 {
            let steps = (span / config.dt).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            for _ in 0..steps {
                let inc = sample_increment(dim, h, &mut rng);
                u = step(u.as_ref(), &inc, config.scheme)?;
            }
        }
        now = t;
        out.push(u.clone());
    }
    Ok(out)
}

/// Per-path unitaries at the requested times, in path order.
pub fn simulate_paths(config: &SimConfig, times: &[f64]) -> Result<Vec<Vec<Mat<c64>>>> {
    config.validate()?;
    let times = sorted_times(times)?;
    config.install(|| {
        (0..config.paths)
            .into_par_iter()
            .map(|p| run_path(config, &times, p))
            .collect::<Result<Vec<_>>>()
    })?
}

/// A linear combination of trace-tuples.
#[derive(Clone, Debug, PartialEq)]
pub struct Functional {
    pub terms: Vec<(Complex64, TraceTuple)>,
}

impl Functional {
    pub fn single(tuple: TraceTuple) -> Self {
        Functional {
            terms: vec![(Complex64::new(1.0, 0.0), tuple)],
        }
    }

    pub fn sum(tuples: impl IntoIterator<Item = TraceTuple>) -> Self {
        Functional {
            terms: tuples
                .into_iter()
                .map(|t| (Complex64::new(1.0, 0.0), t))
                .collect(),
        }
    }

    fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.terms
            .iter()
            .flat_map(|(_, t)| t.times().iter().map(|x| x.value()))
    }

    /// Free-limit value.
    pub fn free_value(&self, engine: &FreeEngine) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for (c, t) in &self.terms {
            acc += c * engine.evaluate(t)?;
        }
        Ok(acc)
    }
}

impl fmt::Display for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (c, t)) in self.terms.iter().enumerate() {
            if k > 0 {
                f.write_str(" + ")?;
            }
            if *c != Complex64::new(1.0, 0.0) {
                write!(f, "({c})*")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentEstimate {
    pub mean: Complex64,
    pub stderr: f64,
    pub paths: usize,
}

/// `(1/d) Tr` of the ordered product of blocks, one factor per trace.
fn tuple_value(tuple: &TraceTuple, snapshots: &[Mat<c64>], slot: &[usize], d: usize) -> Complex64 {
    let block = |l: &Letter| -> Mat<c64> {
        let b = snapshots[slot[l.time_id]]
            .as_ref()
            .submatrix((l.i - 1) * d, (l.j - 1) * d, d, d);
        if l.star {
            b.adjoint().to_owned()
        } else {
            b.to_owned()
        }
    };
    let mut value = Complex64::new(1.0, 0.0);
    for trace in tuple.traces() {
        let letters = trace.letters();
        let (last, init) = letters.split_last().expect("traces are nonempty");
        let last = block(last);
        let tr = match init.split_first() {
            None => (0..d).map(|k| last[(k, k)]).sum::<c64>(),
            Some((first, rest)) => {
                let prod = rest.iter().fold(block(first), |acc, l| &acc * block(l));
                let mut s = c64::new(0.0, 0.0);
                for a in 0..d {
                    for b in 0..d {
                        s += prod[(a, b)] * last[(b, a)];
                    }
                }
                s
            }
        };
        value *= tr / d as f64;
    }
    value
}

/// Streaming estimates of several functionals from one set of paths.
pub fn estimate_functionals(
    funcs: &[Functional],
    config: &SimConfig,
) -> Result<Vec<MomentEstimate>> {
    config.validate()?;
    for f in funcs {
        for (_, t) in &f.terms {
            t.validate(config.n)?;
        }
    }
    let mut times: Vec<f64> = funcs.iter().flat_map(Functional::times).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let slots: Vec<Vec<Vec<usize>>> = funcs
        .iter()
        .map(|f| {
            f.terms
                .iter()
                .map(|(_, t)| {
                    t.times()
                        .iter()
                        .map(|x| times.iter().position(|y| *y == x.value()).unwrap_or(0))
                        .collect()
                })
                .collect()
        })
        .collect();
    let d = config.d;
    let per_path: Vec<Vec<Complex64>> = config.install(|| {
        (0..config.paths)
            .into_par_iter()
            .map(|p| {
                let snaps = run_path(config, &times, p)?;
                Ok(funcs
                    .iter()
                    .zip(&slots)
                    .map(|(f, fs)| {
                        f.terms
                            .iter()
                            .zip(fs)
                            .map(|((c, t), s)| c * tuple_value(t, &snaps, s, d))
                            .sum()
                    })
                    .collect())
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok((0..funcs.len())
        .map(|k| {
            let column: Vec<Complex64> = per_path.iter().map(|row| row[k]).collect();
            let (mean, stderr) = mean_and_stderr(&column);
            MomentEstimate {
                mean,
                stderr,
                paths: config.paths,
            }
        })
        .collect())
}

pub fn estimate_moment(tuple: &TraceTuple, config: &SimConfig) -> Result<MomentEstimate> {
    Ok(estimate_functionals(&[Functional::single(tuple.clone())], config)?[0])
}

/// JSON record of one estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub word: String,
    pub n: usize,
    pub d: usize,
    pub times: Vec<f64>,
    pub mean_re: f64,
    pub mean_im: f64,
    pub stderr: f64,
    pub paths: usize,
    pub seed: u64,
    pub dt: f64,
    pub scheme: Scheme,
}

impl EstimateRecord {
    pub fn new(func: &Functional, config: &SimConfig, est: &MomentEstimate) -> Self {
        let mut times: Vec<f64> = func.times().collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        EstimateRecord {
            word: func.to_string(),
            n: config.n,
            d: config.d,
            times,
            mean_re: est.mean.re,
            mean_im: est.mean.im,
            stderr: est.stderr,
            paths: est.paths,
            seed: config.seed,
            dt: config.dt,
            scheme: config.scheme,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub d: usize,
    pub mc_mean_re: f64,
    pub mc_mean_im: f64,
    pub stderr: f64,
    pub free_re: f64,
    pub free_im: f64,
    pub bias: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub rows: Vec<ScanRow>,
    /// Log-log slope of bias against d over rows with bias above 3 stderr.
    pub slope: Option<f64>,
}

/// Monte Carlo bias against the free value for each `d`. `base` supplies
/// everything except `d`; every `d` reuses its seed.
pub fn convergence_scan(
    func: &Functional,
    d_list: &[usize],
    base: &SimConfig,
) -> Result<ScanResult> {
    let engine = FreeEngine::new(base.n);
    let free = func.free_value(&engine)?;
    let mut rows = Vec::with_capacity(d_list.len());
    for &d in d_list {
        let config = SimConfig { d, ..base.clone() };
        let est = estimate_functionals(std::slice::from_ref(func), &config)?[0];
        rows.push(ScanRow {
            d,
            mc_mean_re: est.mean.re,
            mc_mean_im: est.mean.im,
            stderr: est.stderr,
            free_re: free.re,
            free_im: free.im,
            bias: (est.mean - free).norm(),
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.bias > 3.0 * r.stderr && r.bias > 0.0)
        .map(|r| ((r.d as f64).ln(), r.bias.ln()))
        .unzip();
    Ok(ScanResult {
        slope: fit_slope(&xs, &ys),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::words::parse_word_at;

    #[test]
    fn increment_is_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inc = sample_increment(5, 0.1, &mut rng);
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(inc.matrix[(i, j)], inc.matrix[(j, i)].conj());
            }
        }
    }

    #[test]
    fn zero_increment_is_identity_map() {
        let u = run_path(&SimConfig::new(1, 3), &[0.3], 0)
            .unwrap()
            .pop()
            .unwrap();
        let inc = HermitianIncrement {
            matrix: Mat::zeros(3, 3),
            dt: 0.0,
        };
        let v = step(u.as_ref(), &inc, Scheme::Geodesic).unwrap();
        assert!((&v - &u).norm_max() < 1e-14);
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in [Scheme::Geodesic, Scheme::GeodesicTc, Scheme::EulerRenorm] {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("rk4".parse::<Scheme>().is_err());
    }

    #[test]
    fn time_zero_gives_identity() {
        let mut config = SimConfig::new(2, 2);
        config.paths = 3;
        for path in simulate_paths(&config, &[0.0]).unwrap() {
            assert_eq!(path[0], Mat::<c64>::identity(4, 4));
        }
        let est = estimate_moment(&parse_word_at("tr(u11 u12)", 2, 0.0).unwrap(), &config).unwrap();
        assert_eq!(est.mean, Complex64::new(0.0, 0.0));
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn row_norm_is_one_per_path() {
        let mut config = SimConfig::new(2, 3);
        config.paths = 20;
        config.dt = 0.1;
        let f = Functional::sum(
            (1..=2).map(|k| parse_word_at(&format!("tr(u1{k} u1{k}*)"), 2, 0.7).unwrap()),
        );
        let est = estimate_functionals(&[f], &config).unwrap()[0];
        assert!((est.mean.re - 1.0).abs() < 1e-12 && est.mean.im.abs() < 1e-12);
        assert!(est.stderr < 1e-12);
    }

    #[test]
    fn unsorted_times_are_rejected() {
        let config = SimConfig::new(1, 1);
        assert!(simulate_paths(&config, &[1.0, 0.5]).is_err());
        assert!(simulate_paths(&config, &[-1.0]).is_err());
    }
}
