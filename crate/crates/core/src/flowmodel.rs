//! Probabilistic model of the network channel `z = M x + n` with
//! `n ~ CN(0, I)`: input distributions, densities, the output score and
//! seeded sampling.
//!
//! The score is the gradient of `log p(z)` in conjugate coordinates, i.e.
//! component `k` is `(d/dRe z_k + i d/dIm z_k) / 2` applied to `log p`.
//! For a single Gaussian component this is `-(z - M x)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::exec::BlockRunner;
use crate::linalg::{log_det_hpd, CMat, C64, ZERO};
use crate::rng::{SampleStream, StreamFactory};

/// `log p(z)` below this is treated as an underflow, never as a zero.
pub const LOG_DENSITY_FLOOR: f64 = -700.0;

const PROB_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteInput {
    support: Vec<Vec<C64>>,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl DiscreteInput {
    pub fn support(&self) -> &[Vec<C64>] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputDistribution {
    /// Finite support with explicit probabilities.
    Discrete(DiscreteInput),
    /// `CN(0, I_dim)`.
    Gaussian { dim: usize },
}

impl InputDistribution {
    pub fn discrete(support: Vec<Vec<C64>>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::EmptySupport);
        }
        if support.len() != probs.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} support points but {} probabilities",
                support.len(),
                probs.len()
            )));
        }
        let dim = support[0].len();
        if dim == 0 || support.iter().any(|s| s.len() != dim) {
            return Err(Error::InvalidDistribution("support vectors must share a positive dimension".into()));
        }
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidDistribution("probabilities must be finite and >= 0".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("probabilities sum to {total}")));
        }
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self::Discrete(DiscreteInput { support, probs, cdf }))
    }

    /// Equiprobable support.
    pub fn uniform(support: Vec<Vec<C64>>) -> Result<Self> {
        let n = support.len();
        if n == 0 {
            return Err(Error::EmptySupport);
        }
        Self::discrete(support, vec![1.0 / n as f64; n])
    }

    /// Deterministic input `x0`.
    pub fn point(x0: Vec<C64>) -> Result<Self> {
        Self::discrete(vec![x0], vec![1.0])
    }

    pub fn gaussian(dim: usize) -> Self {
        Self::Gaussian { dim }
    }

    /// Scalar BPSK `{+1, -1}`.
    pub fn bpsk() -> Self {
        Self::product_constellation(&[C64::new(1.0, 0.0), C64::new(-1.0, 0.0)], 1)
    }

    /// `dim` independent unit-energy QPSK symbols `(±1 ± i)/sqrt(2)`.
    pub fn qpsk(dim: usize) -> Self {
        let s = core::f64::consts::FRAC_1_SQRT_2;
        let alphabet = [C64::new(s, s), C64::new(-s, s), C64::new(-s, -s), C64::new(s, -s)];
        Self::product_constellation(&alphabet, dim)
    }

    /// `dim` independent BPSK symbols.
    pub fn bpsk_vector(dim: usize) -> Self {
        Self::product_constellation(&[C64::new(1.0, 0.0), C64::new(-1.0, 0.0)], dim)
    }

    /// Named constellation: `bpsk`, `qpsk` or `gaussian`.
    pub fn constellation(name: &str, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDistribution("dimension must be positive".into()));
        }
        match name {
            "bpsk" => Ok(Self::bpsk_vector(dim)),
            "qpsk" => Ok(Self::qpsk(dim)),
            "gaussian" => Ok(Self::gaussian(dim)),
            other => Err(Error::InvalidDistribution(format!("unknown constellation {other}"))),
        }
    }

    fn product_constellation(alphabet: &[C64], dim: usize) -> Self {
        let q = alphabet.len();
        let count = q.pow(dim as u32);
        let support = (0..count)
            .map(|mut idx| {
                let mut v = vec![ZERO; dim];
                for k in (0..dim).rev() {
                    v[k] = alphabet[idx % q];
                    idx /= q;
                }
                v
            })
            .collect();
        Self::uniform(support).expect("constellation is a valid distribution")
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Discrete(d) => d.support[0].len(),
            Self::Gaussian { dim } => *dim,
        }
    }

    pub fn as_discrete(&self) -> Option<&DiscreteInput> {
        match self {
            Self::Discrete(d) => Some(d),
            Self::Gaussian { .. } => None,
        }
    }

    pub fn mean(&self) -> Vec<C64> {
        match self {
            Self::Discrete(d) => {
                let mut m = vec![ZERO; self.dim()];
                for (x, p) in d.support.iter().zip(&d.probs) {
                    for (mk, xk) in m.iter_mut().zip(x) {
                        *mk += xk * p;
                    }
                }
                m
            }
            Self::Gaussian { dim } => vec![ZERO; *dim],
        }
    }

    /// `Cov(x) = E[(x - Ex)(x - Ex)†]`.
    pub fn covariance(&self) -> CMat {
        match self {
            Self::Discrete(d) => {
                let n = self.dim();
                let mu = self.mean();
                let mut c = CMat::zeros(n, n);
                for (x, p) in d.support.iter().zip(&d.probs) {
                    for i in 0..n {
                        for j in 0..n {
                            c[(i, j)] += (x[i] - mu[i]) * (x[j] - mu[j]).conj() * *p;
                        }
                    }
                }
                c
            }
            Self::Gaussian { dim } => CMat::identity(*dim, *dim),
        }
    }

    /// Shannon entropy in nats (discrete inputs only).
    pub fn entropy_nats(&self) -> Option<f64> {
        self.as_discrete().map(|d| {
            d.probs
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| -p * libm::log(p))
                .sum()
        })
    }
}

/// Unit-variance circular complex Gaussian noise of dimension `dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseModel {
    pub dim: usize,
}

impl NoiseModel {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    /// `log CN(n; 0, I)`.
    pub fn log_density(&self, n: &[C64]) -> f64 {
        -(self.dim as f64) * libm::log(PI) - n.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }
}

/// Closed-form pieces of the Gaussian-input output law `CN(0, Σ)`,
/// `Σ = I + M M†`.
#[derive(Debug, Clone)]
pub(crate) struct GaussianOutput {
    pub sigma_inv: CMat,
    pub log_det_sigma: f64,
    /// `M† Σ^{-1}`, the linear conditional-mean gain.
    pub gain: CMat,
}

/// A channel matrix bound to an input distribution, with per-support
/// precomputation (`M x_j`, `log p_j`) for fast repeated evaluation.
#[derive(Debug, Clone)]
pub struct ChannelModel<'d> {
    m: CMat,
    dist: &'d InputDistribution,
    centers: Vec<Vec<C64>>,
    log_probs: Vec<f64>,
    gaussian: Option<GaussianOutput>,
}

/// Reusable scratch for posterior evaluation.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    pub(crate) logw: Vec<f64>,
    pub(crate) weights: Vec<f64>,
    pub(crate) mean: Vec<C64>,
    pub(crate) log_pz: f64,
}

impl Workspace {
    /// Posterior mean from the last evaluation.
    pub fn mean(&self) -> &[C64] {
        &self.mean
    }

    /// Posterior weights over the support from the last evaluation.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_pz(&self) -> f64 {
        self.log_pz
    }
}

impl<'d> ChannelModel<'d> {
    pub fn new(m: &CMat, dist: &'d InputDistribution) -> Result<Self> {
        if m.ncols() != dist.dim() {
            return Err(Error::DimensionMismatch(format!(
                "channel has {} inputs, distribution dimension {}",
                m.ncols(),
                dist.dim()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::DimensionMismatch("channel has no outputs".into()));
        }
        let (centers, log_probs, gaussian) = match dist {
            InputDistribution::Discrete(d) => {
                let centers = d.support.iter().map(|x| mat_vec(m, x)).collect();
                let log_probs = d.probs.iter().map(|&p| libm::log(p)).collect();
                (centers, log_probs, None)
            }
            InputDistribution::Gaussian { .. } => {
                let n = m.nrows();
                let sigma = CMat::identity(n, n) + m * m.adjoint();
                let log_det_sigma = log_det_hpd(&sigma)?;
                let sigma_inv = sigma
                    .cholesky()
                    .ok_or_else(|| Error::NonFinite("output covariance".into()))?
                    .inverse();
                let gain = m.adjoint() * &sigma_inv;
                (Vec::new(), Vec::new(), Some(GaussianOutput { sigma_inv, log_det_sigma, gain }))
            }
        };
        Ok(Self {
            m: m.clone(),
            dist,
            centers,
            log_probs,
            gaussian,
        })
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    pub fn distribution(&self) -> &InputDistribution {
        self.dist
    }

    pub fn n_out(&self) -> usize {
        self.m.nrows()
    }

    pub fn n_in(&self) -> usize {
        self.m.ncols()
    }

    pub fn workspace(&self) -> Workspace {
        let s = self.centers.len();
        Workspace {
            logw: vec![0.0; s],
            weights: vec![0.0; s],
            mean: vec![ZERO; self.n_in()],
            log_pz: 0.0,
        }
    }

    fn check_z(&self, z: &[C64]) -> Result<()> {
        if z.len() != self.n_out() {
            return Err(Error::DimensionMismatch(format!(
                "output vector has length {}, channel has {} outputs",
                z.len(),
                self.n_out()
            )));
        }
        Ok(())
    }

    /// Fills `ws` with `log p(z)`, the posterior weights and the
    /// conditional mean `E[x | z]`.
    pub fn posterior(&self, z: &[C64], ws: &mut Workspace) -> Result<()> {
        self.check_z(z)?;
        let n_out = self.n_out() as f64;
        match &self.gaussian {
            None => {
                let d = self.dist.as_discrete().expect("discrete model");
                let mut max = f64::NEG_INFINITY;
                for (j, c) in self.centers.iter().enumerate() {
                    let dist2: f64 = z.iter().zip(c).map(|(a, b)| (a - b).norm_sqr()).sum();
                    let lw = self.log_probs[j] - dist2;
                    ws.logw[j] = lw;
                    if lw > max {
                        max = lw;
                    }
                }
                let mut total = 0.0;
                for (w, lw) in ws.weights.iter_mut().zip(&ws.logw) {
                    *w = libm::exp(lw - max);
                    total += *w;
                }
                let lse = max + libm::log(total);
                ws.log_pz = lse - n_out * libm::log(PI);
                if !(ws.log_pz >= LOG_DENSITY_FLOOR) {
                    return Err(Error::DensityUnderflow(ws.log_pz));
                }
                let inv = 1.0 / total;
                for m in ws.mean.iter_mut() {
                    *m = ZERO;
                }
                for (w, x) in ws.weights.iter_mut().zip(&d.support) {
                    *w *= inv;
                    for (m, xk) in ws.mean.iter_mut().zip(x) {
                        *m += xk * *w;
                    }
                }
            }
            Some(g) => {
                let zv = CMat::from_column_slice(z.len(), 1, z);
                let quad = (zv.adjoint() * &g.sigma_inv * &zv)[(0, 0)].re;
                ws.log_pz = -n_out * libm::log(PI) - g.log_det_sigma - quad;
                if !(ws.log_pz >= LOG_DENSITY_FLOOR) {
                    return Err(Error::DensityUnderflow(ws.log_pz));
                }
                let mean = &g.gain * &zv;
                for (m, v) in ws.mean.iter_mut().zip(mean.iter()) {
                    *m = *v;
                }
            }
        }
        Ok(())
    }

    pub fn log_output_density(&self, z: &[C64]) -> Result<f64> {
        let mut ws = self.workspace();
        self.posterior(z, &mut ws)?;
        Ok(ws.log_pz)
    }

    /// Output score. For discrete inputs it is accumulated from the
    /// per-component Gaussian scores `-(z - M x_j)`, not from the posterior
    /// mean.
    pub fn score(&self, z: &[C64]) -> Result<Vec<C64>> {
        let mut ws = self.workspace();
        self.posterior(z, &mut ws)?;
        match &self.gaussian {
            None => {
                let mut s = vec![ZERO; z.len()];
                for (w, c) in ws.weights.iter().zip(&self.centers) {
                    for ((sk, zk), ck) in s.iter_mut().zip(z).zip(c) {
                        *sk += (ck - zk) * *w;
                    }
                }
                Ok(s)
            }
            Some(g) => {
                let zv = CMat::from_column_slice(z.len(), 1, z);
                Ok((&g.sigma_inv * zv).iter().map(|v| -v).collect())
            }
        }
    }

    pub fn conditional_mean(&self, z: &[C64]) -> Result<Vec<C64>> {
        let mut ws = self.workspace();
        self.posterior(z, &mut ws)?;
        Ok(ws.mean)
    }

    /// Draws `(x, noise, z)` for one sample from its own stream.
    pub(crate) fn draw(&self, stream: &mut SampleStream, x: &mut [C64], noise: &mut [C64], z: &mut [C64]) -> Option<usize> {
        let idx = match self.dist {
            InputDistribution::Discrete(d) => {
                let j = stream.categorical(&d.cdf);
                x.copy_from_slice(&d.support[j]);
                Some(j)
            }
            InputDistribution::Gaussian { .. } => {
                stream.fill_complex_normal(x);
                None
            }
        };
        stream.fill_complex_normal(noise);
        match idx {
            Some(j) => {
                for ((zk, ck), nk) in z.iter_mut().zip(&self.centers[j]).zip(noise.iter()) {
                    *zk = ck + nk;
                }
            }
            None => {
                for (r, (zk, nk)) in z.iter_mut().zip(noise.iter()).enumerate() {
                    *zk = *nk;
                    for (c, xc) in x.iter().enumerate() {
                        *zk += self.m[(r, c)] * xc;
                    }
                }
            }
        }
        idx
    }
}

pub(crate) fn mat_vec(m: &CMat, x: &[C64]) -> Vec<C64> {
    (0..m.nrows())
        .map(|r| x.iter().enumerate().map(|(c, xc)| m[(r, c)] * xc).sum())
        .collect()
}

/// `p(z | x) = pi^{-n_out} exp(-||z - M x||^2)`, evaluated in the log domain.
pub fn conditional_density(m: &CMat, x: &[C64], z: &[C64]) -> Result<f64> {
    if x.len() != m.ncols() || z.len() != m.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "M is {}x{}, x has {}, z has {}",
            m.nrows(),
            m.ncols(),
            x.len(),
            z.len()
        )));
    }
    let mx = mat_vec(m, x);
    let r: Vec<C64> = z.iter().zip(&mx).map(|(a, b)| a - b).collect();
    Ok(libm::exp(NoiseModel::new(z.len()).log_density(&r)))
}

/// `p(z) = sum_x p(x) p(z | x)` (log-sum-exp), or the closed form
/// `CN(z; 0, I + M M†)` for Gaussian inputs.
pub fn output_density(m: &CMat, dist: &InputDistribution, z: &[C64]) -> Result<f64> {
    Ok(libm::exp(ChannelModel::new(m, dist)?.log_output_density(z)?))
}

pub fn log_output_density(m: &CMat, dist: &InputDistribution, z: &[C64]) -> Result<f64> {
    ChannelModel::new(m, dist)?.log_output_density(z)
}

/// Conjugate-coordinate gradient of `log p(z)`.
pub fn output_score(m: &CMat, dist: &InputDistribution, z: &[C64]) -> Result<Vec<C64>> {
    ChannelModel::new(m, dist)?.score(z)
}

/// Paired input/output draws.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub seed: u64,
    pub count: usize,
    pub x: Vec<Vec<C64>>,
    pub z: Vec<Vec<C64>>,
}

/// Samples per parallel block in [`sample`].
const SAMPLE_BLOCK: usize = 4096;

/// Draws `count` samples `z = M x + n`; sample `i` uses stream `(seed, i)`.
pub fn sample(
    m: &CMat,
    dist: &InputDistribution,
    seed: u64,
    count: usize,
    runner: &dyn BlockRunner,
) -> Result<SampleBatch> {
    if count == 0 {
        return Err(Error::InvalidParameter("sample count must be >= 1".into()));
    }
    let model = ChannelModel::new(m, dist)?;
    let factory = StreamFactory::new(seed);
    let (n_in, n_out) = (model.n_in(), model.n_out());
    let blocks = count.div_ceil(SAMPLE_BLOCK);
    let job = |b: usize| -> Result<Vec<f64>> {
        let lo = b * SAMPLE_BLOCK;
        let hi = (lo + SAMPLE_BLOCK).min(count);
        let mut out = Vec::with_capacity((hi - lo) * 2 * (n_in + n_out));
        let (mut x, mut n, mut z) = (vec![ZERO; n_in], vec![ZERO; n_out], vec![ZERO; n_out]);
        for i in lo..hi {
            let mut s = factory.stream(i as u64);
            model.draw(&mut s, &mut x, &mut n, &mut z);
            for c in x.iter().chain(z.iter()) {
                out.push(c.re);
                out.push(c.im);
            }
        }
        Ok(out)
    };
    let mut xs = Vec::with_capacity(count);
    let mut zs = Vec::with_capacity(count);
    for block in runner.run_blocks(blocks, &job) {
        let flat = block?;
        for chunk in flat.chunks_exact(2 * (n_in + n_out)) {
            let v: Vec<C64> = chunk.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect();
            xs.push(v[..n_in].to_vec());
            zs.push(v[n_in..].to_vec());
        }
    }
    Ok(SampleBatch { seed, count, x: xs, z: zs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::SEQUENTIAL;
    use crate::linalg::real;

    fn scalar(m: f64) -> CMat {
        CMat::from_element(1, 1, real(m))
    }

    #[test]
    fn conditional_density_values() {
        let m = scalar(1.0);
        let p = conditional_density(&m, &[real(1.0)], &[real(1.0)]).unwrap();
        assert!((p - 1.0 / PI).abs() < 1e-15);
        let p = conditional_density(&m, &[real(1.0)], &[real(0.0)]).unwrap();
        assert!((p - libm::exp(-1.0) / PI).abs() < 1e-15);
        let m2 = CMat::identity(2, 2);
        let p = conditional_density(&m2, &[real(1.0), real(2.0)], &[real(1.0), real(2.0)]).unwrap();
        assert!((p - 1.0 / (PI * PI)).abs() < 1e-15);
        assert!(conditional_density(&m2, &[real(1.0)], &[real(1.0), real(2.0)]).is_err());
    }

    #[test]
    fn distribution_validation() {
        assert_eq!(InputDistribution::discrete(vec![], vec![]).unwrap_err(), Error::EmptySupport);
        assert!(InputDistribution::discrete(vec![vec![real(1.0)], vec![real(2.0)]], vec![0.5, 0.6]).is_err());
        assert!(InputDistribution::discrete(vec![vec![real(1.0)], vec![real(2.0), real(0.0)]], vec![0.5, 0.5]).is_err());
        assert!(InputDistribution::discrete(vec![vec![real(1.0)], vec![real(2.0)]], vec![1.5, -0.5]).is_err());
        let q = InputDistribution::qpsk(2);
        assert_eq!(q.as_discrete().unwrap().support().len(), 16);
        assert!((q.entropy_nats().unwrap() - 16f64.ln()).abs() < 1e-12);
        let cov = q.covariance();
        assert!((cov - CMat::identity(2, 2)).iter().all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn single_point_output_density_and_score() {
        let m = crate::linalg::real_matrix(&[&[0.5, -1.0], &[2.0, 0.3]]);
        let x0 = vec![C64::new(1.0, -0.5), C64::new(0.2, 0.7)];
        let d = InputDistribution::point(x0.clone()).unwrap();
        let z = vec![C64::new(0.1, 0.2), C64::new(-0.3, 0.4)];
        let p = output_density(&m, &d, &z).unwrap();
        let q = conditional_density(&m, &x0, &z).unwrap();
        assert!((p - q).abs() < 1e-15 * q.max(1.0));
        let s = output_score(&m, &d, &z).unwrap();
        let mx = mat_vec(&m, &x0);
        for k in 0..2 {
            assert!((s[k] + (z[k] - mx[k])).norm() < 1e-14);
        }
    }

    #[test]
    fn bpsk_through_zero_channel_is_noise() {
        let d = InputDistribution::bpsk();
        let m = scalar(0.0);
        for z in [C64::new(0.0, 0.0), C64::new(1.3, -0.4), C64::new(-2.0, 0.5)] {
            let p = output_density(&m, &d, &[z]).unwrap();
            assert!((p - libm::exp(-z.norm_sqr()) / PI).abs() < 1e-15);
        }
        let s = output_score(&scalar(0.8), &d, &[ZERO]).unwrap();
        assert!(s[0].norm() < 1e-15);
    }

    #[test]
    fn underflow_is_an_error() {
        let d = InputDistribution::bpsk();
        let err = output_density(&scalar(1.0), &d, &[real(40.0)]).unwrap_err();
        assert!(matches!(err, Error::DensityUnderflow(_)));
    }

    #[test]
    fn sample_point_mass() {
        let x0 = vec![C64::new(0.3, 0.1)];
        let d = InputDistribution::point(x0.clone()).unwrap();
        let b = sample(&scalar(2.0), &d, 99, 1, &SEQUENTIAL).unwrap();
        assert_eq!(b.x, vec![x0]);
        assert_eq!(b.count, 1);
        assert!(sample(&scalar(2.0), &d, 99, 0, &SEQUENTIAL).is_err());
    }
}
