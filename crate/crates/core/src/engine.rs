//! Expectations over `(x, n)` by tensor Gauss-Hermite quadrature or by
//! seeded Monte-Carlo with batch-means standard errors.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::exec::{BlockRunner, SEQUENTIAL};
use crate::flowmodel::{ChannelModel, InputDistribution, Workspace};
use crate::linalg::{C64, ZERO};
use crate::quadrature::ComplexNoiseRule;
use crate::rng::StreamFactory;

/// Batches used for the batch-means standard error.
pub const MC_BATCHES: usize = 32;
pub const MIN_MC_SAMPLES: usize = 1000;
/// Largest output dimension accepted by product quadrature.
pub const MAX_QUADRATURE_OUTPUTS: usize = 3;

/// Default nodes per real dimension.
pub fn default_nodes(n_out: usize) -> usize {
    match n_out {
        1 => 128,
        2 => 12,
        _ => 10,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// `nodes: None` picks [`default_nodes`].
    Quadrature { nodes: Option<usize> },
    MonteCarlo { samples: usize, seed: u64 },
}

/// How a reported value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimate {
    ClosedForm,
    Quadrature { nodes: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

impl Estimate {
    pub fn count(&self) -> usize {
        match *self {
            Estimate::ClosedForm => 0,
            Estimate::Quadrature { nodes } => nodes,
            Estimate::MonteCarlo { samples, .. } => samples,
        }
    }
}

#[derive(Clone, Copy)]
pub struct Engine<'r> {
    pub method: Method,
    pub runner: &'r dyn BlockRunner,
}

impl core::fmt::Debug for Engine<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Engine").field("method", &self.method).finish()
    }
}

impl Engine<'static> {
    pub fn quadrature() -> Self {
        Self {
            method: Method::Quadrature { nodes: None },
            runner: &SEQUENTIAL,
        }
    }

    pub fn quadrature_nodes(nodes: usize) -> Self {
        Self {
            method: Method::Quadrature { nodes: Some(nodes) },
            runner: &SEQUENTIAL,
        }
    }

    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        Self {
            method: Method::MonteCarlo { samples, seed },
            runner: &SEQUENTIAL,
        }
    }
}

impl<'r> Engine<'r> {
    pub fn with_runner<'s>(self, runner: &'s dyn BlockRunner) -> Engine<'s> {
        Engine {
            method: self.method,
            runner,
        }
    }

    pub fn is_monte_carlo(&self) -> bool {
        matches!(self.method, Method::MonteCarlo { .. })
    }
}

/// Weighted means of a fixed-width statistic vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    /// Per-batch means (Monte-Carlo only, [`MC_BATCHES`] rows).
    pub batch_means: Vec<Vec<f64>>,
    pub estimate: Estimate,
}

impl Moments {
    /// Batch-means standard error of component `k`.
    pub fn std_err(&self, k: usize) -> Option<f64> {
        batch_std_err(&self.batch_means, k, self.mean[k])
    }

    /// Standard error of `sum_k coeffs[k] * mean[k]`.
    pub fn std_err_of(&self, coeffs: &[(usize, f64)]) -> Option<f64> {
        if self.batch_means.len() < 2 {
            return None;
        }
        let comb = |v: &[f64]| coeffs.iter().map(|&(k, c)| c * v[k]).sum::<f64>();
        let center = comb(&self.mean);
        let b = self.batch_means.len() as f64;
        let ss: f64 = self.batch_means.iter().map(|m| { let d = comb(m) - center; d * d }).sum();
        Some(libm::sqrt(ss / (b * (b - 1.0))))
    }
}

pub(crate) fn batch_std_err(batches: &[Vec<f64>], k: usize, mean: f64) -> Option<f64> {
    if batches.len() < 2 {
        return None;
    }
    let b = batches.len() as f64;
    let ss: f64 = batches.iter().map(|m| { let d = m[k] - mean; d * d }).sum();
    Some(libm::sqrt(ss / (b * (b - 1.0))))
}

/// One evaluation point handed to a statistic.
pub struct Draw<'a> {
    /// Support index for discrete inputs.
    pub x_index: Option<usize>,
    pub x: &'a [C64],
    pub noise: &'a [C64],
    pub z: &'a [C64],
}

pub type Statistic<'a> = dyn Fn(&Draw<'_>, &mut Workspace, &mut [f64]) -> Result<()> + Sync + 'a;

/// `E[f(x, n)]` for a statistic writing `width` values per point.
///
/// Quadrature sums over the discrete support and the noise tensor rule.
/// Monte-Carlo sample `i` uses stream `(seed, i)`. Both split
/// the work into a fixed list of blocks merged in order, so the result does
/// not depend on the runner.
pub fn expectation(model: &ChannelModel<'_>, engine: &Engine<'_>, width: usize, f: &Statistic<'_>) -> Result<Moments> {
    match engine.method {
        Method::Quadrature { nodes } => quadrature(model, engine, nodes, width, f),
        Method::MonteCarlo { samples, seed } => monte_carlo(model, engine, samples, seed, width, f),
    }
}

fn quadrature(
    model: &ChannelModel<'_>,
    engine: &Engine<'_>,
    nodes: Option<usize>,
    width: usize,
    f: &Statistic<'_>,
) -> Result<Moments> {
    let n_out = model.n_out();
    if n_out > MAX_QUADRATURE_OUTPUTS {
        return Err(Error::QuadratureCostGuard(n_out));
    }
    let d = model.distribution().as_discrete().ok_or_else(|| {
        Error::InvalidParameter("quadrature expectations need a discrete input; Gaussian inputs use closed forms".into())
    })?;
    let nodes = nodes.unwrap_or_else(|| default_nodes(n_out));
    if !(1..=crate::quadrature::MAX_ORDER).contains(&nodes) {
        return Err(Error::InvalidParameter(alloc::format!(
            "quadrature nodes must be in 1..={}, got {nodes}",
            crate::quadrature::MAX_ORDER
        )));
    }
    let rule = ComplexNoiseRule::new(nodes, n_out);
    let m = model.matrix();
    let job = |b: usize| -> Result<Vec<f64>> {
        let (j, lead) = (b / nodes, b % nodes);
        let x = &d.support()[j];
        let p = d.probs()[j];
        let mut acc = vec![0.0; width];
        if p == 0.0 {
            return Ok(acc);
        }
        let mx = crate::flowmodel::mat_vec(m, x);
        let mut z = vec![ZERO; n_out];
        let mut out = vec![0.0; width];
        let mut ws = model.workspace();
        let mut err = None;
        rule.for_each_with_lead(lead, |noise, w| {
            if err.is_some() {
                return;
            }
            for ((zk, ck), nk) in z.iter_mut().zip(&mx).zip(noise) {
                *zk = ck + nk;
            }
            let draw = Draw {
                x_index: Some(j),
                x,
                noise,
                z: &z,
            };
            match f(&draw, &mut ws, &mut out) {
                Ok(()) => {
                    let pw = p * w;
                    for (a, o) in acc.iter_mut().zip(&out) {
                        *a += pw * o;
                    }
                }
                Err(e) => err = Some(e),
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(acc),
        }
    };
    let blocks = d.support().len() * nodes;
    let mut mean = vec![0.0; width];
    for r in engine.runner.run_blocks(blocks, &job) {
        for (m, v) in mean.iter_mut().zip(r?) {
            *m += v;
        }
    }
    Ok(Moments {
        mean,
        batch_means: Vec::new(),
        estimate: Estimate::Quadrature { nodes },
    })
}

fn monte_carlo(
    model: &ChannelModel<'_>,
    engine: &Engine<'_>,
    samples: usize,
    seed: u64,
    width: usize,
    f: &Statistic<'_>,
) -> Result<Moments> {
    if samples < MIN_MC_SAMPLES {
        return Err(Error::TooFewSamples {
            got: samples,
            min: MIN_MC_SAMPLES,
        });
    }
    let factory = StreamFactory::new(seed);
    let (n_in, n_out) = (model.n_in(), model.n_out());
    let bounds = |b: usize| (b * samples / MC_BATCHES, (b + 1) * samples / MC_BATCHES);
    let job = |b: usize| -> Result<Vec<f64>> {
        let (lo, hi) = bounds(b);
        let mut acc = vec![0.0; width];
        let mut out = vec![0.0; width];
        let (mut x, mut noise, mut z) = (vec![ZERO; n_in], vec![ZERO; n_out], vec![ZERO; n_out]);
        let mut ws = model.workspace();
        for i in lo..hi {
            let mut s = factory.stream(i as u64);
            let x_index = model.draw(&mut s, &mut x, &mut noise, &mut z);
            let draw = Draw {
                x_index,
                x: &x,
                noise: &noise,
                z: &z,
            };
            f(&draw, &mut ws, &mut out)?;
            for (a, o) in acc.iter_mut().zip(&out) {
                *a += o;
            }
        }
        Ok(acc)
    };
    let mut sums = vec![0.0; width];
    let mut batch_means = Vec::with_capacity(MC_BATCHES);
    for (b, r) in engine.runner.run_blocks(MC_BATCHES, &job).into_iter().enumerate() {
        let acc = r?;
        let (lo, hi) = bounds(b);
        let cnt = (hi - lo) as f64;
        for (s, v) in sums.iter_mut().zip(&acc) {
            *s += v;
        }
        batch_means.push(acc.iter().map(|v| v / cnt).collect());
    }
    let mean = sums.iter().map(|s| s / samples as f64).collect();
    Ok(Moments {
        mean,
        batch_means,
        estimate: Estimate::MonteCarlo { samples, seed },
    })
}

/// Checks that a distribution/engine pair is usable.
pub fn check_engine(dist: &InputDistribution, n_out: usize, engine: &Engine<'_>) -> Result<()> {
    match engine.method {
        Method::Quadrature { .. } if n_out > MAX_QUADRATURE_OUTPUTS && dist.as_discrete().is_some() => {
            Err(Error::QuadratureCostGuard(n_out))
        }
        Method::MonteCarlo { samples, .. } if samples < MIN_MC_SAMPLES => Err(Error::TooFewSamples {
            got: samples,
            min: MIN_MC_SAMPLES,
        }),
        _ => Ok(()),
    }
}
