//! Conditional-mean estimation of the input flow, the MMSE matrix and the
//! score identity `M E[x|z] = z + score(z)`.

use alloc::format;

use alloc::vec::Vec;

use crate::engine::{expectation, Engine, Estimate, Method, Moments};
use crate::error::{Error, Result};
use crate::flowmodel::{ChannelModel, InputDistribution};
use crate::linalg::{frobenius, hermitian_defect, hermitian_eigenvalues, inverse_conditioned, CMat, C64};
use crate::netgraph::{Factors, Form};

/// Condition-number ceiling for the factored inverse.
pub const SYSTEM_CONDITION_LIMIT: f64 = 1e10;
pub const HERMITIAN_TOLERANCE: f64 = 1e-10;
pub const PSD_FLOOR: f64 = -1e-10;
pub const PRIOR_ORDER_FLOOR: f64 = -1e-8;

/// `E = E[(x - x̂)(x - x̂)†]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MmseMatrix {
    pub e: CMat,
    pub estimate: Estimate,
    /// Batch-means standard errors of the real and imaginary parts,
    /// stored as `re + i im` (Monte-Carlo only).
    pub std_err: Option<CMat>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmseInvariants {
    pub hermitian_defect: f64,
    pub min_eigenvalue: f64,
    /// Smallest eigenvalue of `Cov(x) - E`.
    pub prior_gap_min_eigenvalue: f64,
    /// Slack on the prior order for Monte-Carlo estimates: five standard
    /// errors of `E` in Frobenius norm, which bounds the eigenvalue shift.
    pub noise_allowance: f64,
}

impl MmseInvariants {
    pub fn holds(&self) -> bool {
        self.hermitian_defect <= HERMITIAN_TOLERANCE
            && self.min_eigenvalue >= PSD_FLOOR
            && self.prior_order_holds()
    }

    pub fn prior_order_holds(&self) -> bool {
        self.prior_gap_min_eigenvalue >= PRIOR_ORDER_FLOOR - self.noise_allowance
    }
}

impl MmseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            e: CMat::zeros(n, n),
            estimate: Estimate::ClosedForm,
            std_err: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.e.nrows()
    }

    /// Hermitian, PSD and `E <= Cov(x)` diagnostics.
    pub fn invariants(&self, dist: &InputDistribution) -> MmseInvariants {
        let ev = hermitian_eigenvalues(&self.e);
        let gap = hermitian_eigenvalues(&(dist.covariance() - &self.e));
        MmseInvariants {
            hermitian_defect: hermitian_defect(&self.e),
            min_eigenvalue: ev.first().copied().unwrap_or(0.0),
            prior_gap_min_eigenvalue: gap.first().copied().unwrap_or(0.0),
            noise_allowance: self.std_err.as_ref().map_or(0.0, |s| 5.0 * frobenius(s)),
        }
    }
}

/// `E[x | z]`: posterior-weighted support for discrete inputs, the linear
/// MMSE gain `M† (I + M M†)^{-1} z` for Gaussian inputs.
pub fn conditional_mean(m: &CMat, dist: &InputDistribution, z: &[C64]) -> Result<Vec<C64>> {
    ChannelModel::new(m, dist)?.conditional_mean(z)
}

/// Layout of [`channel_moments`]: slot 0 is the information density
/// `log p(z|x) - log p(z)`, then `(re, im)` pairs of `(x - x̂)(x - x̂)†`
/// in row-major order.
/// Per-sample estimator of `I(x; z)`: the information density
/// `log p(z|x) - log p(z)` evaluated after [`ChannelModel::posterior`].
///
/// Under Monte-Carlo it is corrected by the control variate
/// `2 Re <n, M(x - E[x])>`, which has mean zero because the noise is
/// independent of the input, and removes the `O(1)`-variance term
/// `n (x - E[x])†` from finite-difference derivatives of the estimate.
pub(crate) struct InformationSampler {
    log_norm: f64,
    /// `M E[x]` when the control variate is active.
    center: Option<Vec<C64>>,
}

impl InformationSampler {
    pub(crate) fn new(model: &ChannelModel<'_>, engine: &Engine<'_>) -> Self {
        let center = engine
            .is_monte_carlo()
            .then(|| crate::flowmodel::mat_vec(model.matrix(), &model.distribution().mean()));
        Self {
            log_norm: model.n_out() as f64 * libm::log(core::f64::consts::PI),
            center,
        }
    }

    pub(crate) fn value(&self, d: &crate::engine::Draw<'_>, ws: &crate::flowmodel::Workspace) -> f64 {
        let density = -self.log_norm - d.noise.iter().map(|c| c.norm_sqr()).sum::<f64>() - ws.log_pz();
        match &self.center {
            None => density,
            Some(c) => {
                let cv: f64 = d
                    .noise
                    .iter()
                    .zip(d.z)
                    .zip(c)
                    .map(|((n, z), m)| (n.conj() * (z - n - m)).re)
                    .sum();
                density - 2.0 * cv
            }
        }
    }
}

pub(crate) fn channel_moments(model: &ChannelModel<'_>, engine: &Engine<'_>) -> Result<Moments> {
    let n = model.n_in();
    let info = InformationSampler::new(model, engine);
    let width = 1 + 2 * n * n;
    let stat = |d: &crate::engine::Draw<'_>, ws: &mut crate::flowmodel::Workspace, out: &mut [f64]| -> Result<()> {
        model.posterior(d.z, ws)?;
        out[0] = info.value(d, ws);
        let mean = ws.mean();
        let mut k = 1;
        for i in 0..n {
            let ei = d.x[i] - mean[i];
            for j in 0..n {
                let v = ei * (d.x[j] - mean[j]).conj();
                out[k] = v.re;
                out[k + 1] = v.im;
                k += 2;
            }
        }
        Ok(())
    };
    expectation(model, engine, width, &stat)
}

pub(crate) fn mmse_from_moments(mo: &Moments, n: usize) -> MmseMatrix {
    let mut e = CMat::zeros(n, n);
    let mc = !mo.batch_means.is_empty();
    let mut se = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let k = 1 + 2 * (i * n + j);
            e[(i, j)] = C64::new(mo.mean[k], mo.mean[k + 1]);
            if mc {
                se[(i, j)] = C64::new(mo.std_err(k).unwrap_or(0.0), mo.std_err(k + 1).unwrap_or(0.0));
            }
        }
    }
    MmseMatrix {
        e,
        estimate: mo.estimate,
        std_err: mc.then_some(se),
    }
}

/// `(I + M† M)^{-1}`, the Gaussian-input MMSE.
pub fn gaussian_mmse(m: &CMat) -> Result<CMat> {
    let n = m.ncols();
    (CMat::identity(n, n) + m.adjoint() * m)
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::NonFinite("I + M†M".into()))
}

/// MMSE matrix by quadrature or Monte-Carlo. Gaussian inputs under the
/// quadrature engine use the closed form.
pub fn mmse_matrix(m: &CMat, dist: &InputDistribution, engine: &Engine<'_>) -> Result<MmseMatrix> {
    if let (InputDistribution::Gaussian { .. }, Method::Quadrature { .. }) = (dist, engine.method) {
        return Ok(MmseMatrix {
            e: gaussian_mmse(m)?,
            estimate: Estimate::ClosedForm,
            std_err: None,
        });
    }
    let model = ChannelModel::new(m, dist)?;
    let mo = channel_moments(&model, engine)?;
    Ok(mmse_from_moments(&mo, model.n_in()))
}

/// `||M E[x|z] - (z + score(z))||`.
pub fn score_identity_residual(m: &CMat, dist: &InputDistribution, z: &[C64]) -> Result<f64> {
    let model = ChannelModel::new(m, dist)?;
    let xhat = model.conditional_mean(z)?;
    let score = model.score(z)?;
    let mx = crate::flowmodel::mat_vec(m, &xhat);
    Ok(libm::sqrt(
        mx.iter()
            .zip(z)
            .zip(&score)
            .map(|((a, zk), s)| (a - (zk + s)).norm_sqr())
            .sum(),
    ))
}

/// `M^{-1} (z + score(z))`, through the factored inverse
/// `B^{-1} G^{-1} A^{-1}` when every factor is square.
///
/// For full-form factors the caller may pass the feedback matrix `F`, in
/// which case `G^{-1} = I - F` is used instead of inverting `G`.
pub fn invert_flow_estimate(
    factors: &Factors,
    feedback: Option<&CMat>,
    dist: &InputDistribution,
    z: &[C64],
) -> Result<Vec<C64>> {
    let m = factors.system();
    let model = ChannelModel::new(&m, dist)?;
    let score = model.score(z)?;
    let rhs: Vec<C64> = z.iter().zip(&score).map(|(a, b)| a + b).collect();
    let rhs = CMat::from_column_slice(rhs.len(), 1, &rhs);

    let inv = |x: &CMat| inverse_conditioned(x, SYSTEM_CONDITION_LIMIT).map(|(i, _)| i).map_err(Error::SingularSystemMatrix);
    // M itself must be well conditioned whichever route is taken
    let m_inv = inv(&m)?;
    let all_square = factors.a.is_square() && factors.g.is_square() && factors.b.is_square();
    let out = if all_square {
        let g_inv = match (factors.form, feedback) {
            (Form::Full, Some(f)) => {
                if f.shape() != factors.g.shape() {
                    return Err(Error::DimensionMismatch(format!(
                        "F is {}x{}, G is {}x{}",
                        f.nrows(),
                        f.ncols(),
                        factors.g.nrows(),
                        factors.g.ncols()
                    )));
                }
                CMat::identity(f.nrows(), f.ncols()) - f
            }
            _ => inv(&factors.g)?,
        };
        inv(&factors.b)? * g_inv * inv(&factors.a)? * rhs
    } else {
        m_inv * rhs
    };
    Ok(out.iter().copied().collect())
}

/// Orthogonality and tower-property diagnostics from one pass.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorDiagnostics {
    /// `E[(x - x̂) z†]`, ideally 0.
    pub cross: CMat,
    pub cross_std_err: Option<CMat>,
    /// `E[x̂] - E[x]`, ideally 0.
    pub bias: Vec<C64>,
    pub bias_std_err: Option<Vec<C64>>,
    pub estimate: Estimate,
}

impl EstimatorDiagnostics {
    /// Largest `|value| / std_err` over all real components (Monte-Carlo).
    pub fn max_z_score(&self) -> Option<f64> {
        let cse = self.cross_std_err.as_ref()?;
        let bse = self.bias_std_err.as_ref()?;
        let ratio = |v: f64, s: f64| if s > 0.0 { v.abs() / s } else if v == 0.0 { 0.0 } else { f64::INFINITY };
        let mut worst: f64 = 0.0;
        for (v, s) in self.cross.iter().zip(cse.iter()) {
            worst = worst.max(ratio(v.re, s.re)).max(ratio(v.im, s.im));
        }
        for (v, s) in self.bias.iter().zip(bse) {
            worst = worst.max(ratio(v.re, s.re)).max(ratio(v.im, s.im));
        }
        Some(worst)
    }
}

pub fn estimator_diagnostics(m: &CMat, dist: &InputDistribution, engine: &Engine<'_>) -> Result<EstimatorDiagnostics> {
    let model = ChannelModel::new(m, dist)?;
    let (n_in, n_out) = (model.n_in(), model.n_out());
    let prior = dist.mean();
    let width = 2 * (n_in * n_out + n_in);
    let stat = |d: &crate::engine::Draw<'_>, ws: &mut crate::flowmodel::Workspace, out: &mut [f64]| -> Result<()> {
        model.posterior(d.z, ws)?;
        let mean = ws.mean();
        let mut k = 0;
        for i in 0..n_in {
            let ei = d.x[i] - mean[i];
            for j in 0..n_out {
                let v = ei * d.z[j].conj();
                out[k] = v.re;
                out[k + 1] = v.im;
                k += 2;
            }
        }
        for i in 0..n_in {
            let v = mean[i] - prior[i];
            out[k] = v.re;
            out[k + 1] = v.im;
            k += 2;
        }
        Ok(())
    };
    let mo = expectation(&model, engine, width, &stat)?;
    let mc = !mo.batch_means.is_empty();
    let at = |k: usize| C64::new(mo.mean[k], mo.mean[k + 1]);
    let se = |k: usize| C64::new(mo.std_err(k).unwrap_or(0.0), mo.std_err(k + 1).unwrap_or(0.0));
    let cross = CMat::from_fn(n_in, n_out, |i, j| at(2 * (i * n_out + j)));
    let base = 2 * n_in * n_out;
    let bias = (0..n_in).map(|i| at(base + 2 * i)).collect();
    Ok(EstimatorDiagnostics {
        cross_std_err: mc.then(|| CMat::from_fn(n_in, n_out, |i, j| se(2 * (i * n_out + j)))),
        bias_std_err: mc.then(|| (0..n_in).map(|i| se(base + 2 * i)).collect()),
        cross,
        bias,
        estimate: mo.estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, real, real_matrix, ZERO};
    use alloc::vec;

    #[test]
    fn point_mass_estimator_is_constant() {
        let x0 = vec![C64::new(0.4, -1.0)];
        let d = InputDistribution::point(x0.clone()).unwrap();
        let m = real_matrix(&[&[1.3]]);
        for z in [-2.0, 0.0, 3.5] {
            assert_eq!(conditional_mean(&m, &d, &[real(z)]).unwrap(), x0);
        }
        let e = mmse_matrix(&m, &d, &Engine::quadrature()).unwrap();
        assert!(e.e.iter().all(|v| v.norm() < 1e-15));
        let r = score_identity_residual(&m, &d, &[C64::new(0.3, 0.2)]).unwrap();
        assert!(r < 1e-15);
    }

    #[test]
    fn bpsk_posterior_mean_is_tanh() {
        // brute-force posterior summation as the oracle
        let d = InputDistribution::bpsk();
        for (mv, z) in [(0.5, 0.3), (1.0, -0.7), (2.0, 1.1), (0.1, 4.0)] {
            let m = real_matrix(&[&[mv]]);
            let lp = -(z - mv) * (z - mv);
            let lm = -(z + mv) * (z + mv);
            let brute = (libm::exp(lp) - libm::exp(lm)) / (libm::exp(lp) + libm::exp(lm));
            let xhat = conditional_mean(&m, &d, &[real(z)]).unwrap()[0];
            assert!((xhat.re - libm::tanh(2.0 * mv * z)).abs() < 1e-14);
            assert!((xhat.re - brute).abs() < 1e-14);
            assert!(xhat.im.abs() < 1e-15);
        }
    }

    #[test]
    fn gaussian_conditional_mean_is_linear() {
        let m = CMat::from_fn(2, 2, |i, j| C64::new(0.3 * i as f64 - 0.5, 0.2 * j as f64 + 0.1));
        let d = InputDistribution::gaussian(2);
        let z = vec![C64::new(0.7, -0.1), C64::new(-1.2, 0.4)];
        let sigma = CMat::identity(2, 2) + &m * m.adjoint();
        let expected = m.adjoint() * sigma.try_inverse().unwrap() * CMat::from_column_slice(2, 1, &z);
        let got = conditional_mean(&m, &d, &z).unwrap();
        for k in 0..2 {
            assert!((got[k] - expected[k]).norm() < 1e-13);
        }
    }

    #[test]
    fn gaussian_mmse_closed_form() {
        let m = real_matrix(&[&[1.0, 0.5], &[-0.2, 0.8]]);
        let d = InputDistribution::gaussian(2);
        let e = mmse_matrix(&m, &d, &Engine::quadrature()).unwrap();
        let expected = (CMat::identity(2, 2) + m.adjoint() * &m).try_inverse().unwrap();
        assert!(max_abs_diff(&e.e, &expected) < 1e-14);
        assert!(e.invariants(&d).holds());
    }

    #[test]
    fn gaussian_score_identity_is_exact() {
        let m = CMat::from_fn(2, 2, |i, j| C64::new(0.4 + i as f64, -0.3 * j as f64));
        let d = InputDistribution::gaussian(2);
        for z in [[C64::new(0.1, 0.2), C64::new(1.0, -1.0)], [C64::new(-2.0, 0.5), C64::new(0.0, 0.3)]] {
            assert!(score_identity_residual(&m, &d, &z).unwrap() < 1e-13);
        }
    }

    #[test]
    fn mc_needs_enough_samples() {
        let d = InputDistribution::bpsk();
        let err = mmse_matrix(&real_matrix(&[&[1.0]]), &d, &Engine::monte_carlo(10, 1)).unwrap_err();
        assert_eq!(err, Error::TooFewSamples { got: 10, min: 1000 });
    }

    #[test]
    fn quadrature_cost_guard() {
        let d = InputDistribution::bpsk();
        let m = CMat::from_element(4, 1, real(1.0));
        let err = mmse_matrix(&m, &d, &Engine::quadrature()).unwrap_err();
        assert_eq!(err, Error::QuadratureCostGuard(4));
    }

    #[test]
    fn identity_network_inverts_to_the_input() {
        let x0 = vec![C64::new(1.0, 0.5), C64::new(-0.3, 0.2)];
        let d = InputDistribution::point(x0.clone()).unwrap();
        let f = Factors::identity(2);
        let got = invert_flow_estimate(&f, None, &d, &x0).unwrap();
        for k in 0..2 {
            assert!((got[k] - x0[k]).norm() < 1e-15);
        }
    }

    #[test]
    fn singular_factor_is_rejected() {
        let d = InputDistribution::qpsk(2);
        let b = real_matrix(&[&[1.0, 2.0], &[0.5, 1.0]]);
        let f = Factors::new(CMat::identity(2, 2), CMat::identity(2, 2), b, Form::Compact).unwrap();
        let err = invert_flow_estimate(&f, None, &d, &[ZERO, ZERO]).unwrap_err();
        assert!(matches!(err, Error::SingularSystemMatrix(_)));
    }

    #[test]
    fn mmse_invariants_catch_bad_matrices() {
        let d = InputDistribution::qpsk(2);
        let mut bad = MmseMatrix::zeros(2);
        bad.e[(0, 1)] = C64::new(0.5, 0.0);
        assert!(!bad.invariants(&d).holds());
        let mut neg = MmseMatrix::zeros(2);
        neg.e[(0, 0)] = real(-0.1);
        assert!(!neg.invariants(&d).holds());
        let mut big = MmseMatrix::zeros(2);
        big.e[(0, 0)] = real(1.5);
        assert!(!big.invariants(&d).holds());
        // a Monte-Carlo estimate slightly above the prior is within noise
        let mut noisy = MmseMatrix::zeros(2);
        noisy.e[(0, 0)] = real(1.002);
        noisy.e[(1, 1)] = real(0.5);
        assert!(!noisy.invariants(&d).holds());
        noisy.std_err = Some(CMat::from_element(2, 2, C64::new(1e-3, 1e-3)));
        assert!(noisy.invariants(&d).holds());
    }
}
