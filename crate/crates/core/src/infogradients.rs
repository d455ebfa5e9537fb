//! Mutual information of the network channel and the closed-form gradient
//! identities
//!
//! ```text
//! ∇_A I = M E B† G†      ∇_G I = A† M E B†      ∇_B I = G† A† M E
//! ```
//!
//! together with their cut specializations, and a finite-difference oracle
//! that checks them.
//!
//! # Gradient convention
//!
//! For a real perturbation `X -> X + tΔ` the library-wide contract is
//!
//! ```text
//! d/dt I(X + tΔ) |_{t=0} = c · Re Tr{Δ† ∇_X I}
//! ```
//!
//! with [`GRADIENT_CALIBRATION`] `c = 2`: the closed forms are the
//! derivative with respect to the conjugate entries of `X`, and the real
//! directional derivative picks up both the holomorphic and the
//! anti-holomorphic part. The value is pinned by two independent anchors
//! (scalar BPSK `dI/dsnr = mmse(snr)` and the Gaussian log-det gradient),
//! both of which are re-measured in the test suite.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::engine::{expectation, Engine, Estimate, Method, Moments};
use crate::error::{Error, Result};
use crate::estimator::{channel_moments, gaussian_mmse, mmse_from_moments, InformationSampler, MmseMatrix};
use crate::flowmodel::{ChannelModel, InputDistribution};
use crate::linalg::{check_shape, ensure_finite, log_det_hpd, max_abs, CMat, C64};
use crate::netgraph::{Factors, Form};

/// `c` in `dI/dt = c · Re Tr{Δ† ∇I}`.
pub const GRADIENT_CALIBRATION: f64 = 2.0;

/// Entries of the oracle below this fraction of its largest entry are
/// compared against that fraction instead of their own size.
pub const RELATIVE_FLOOR_FRACTION: f64 = 1e-2;
/// Absolute floor for the relative-error denominator (all-zero gradients).
pub const ABSOLUTE_FLOOR: f64 = 1e-9;

pub const DEFAULT_STEP: f64 = 1e-3;
pub const MIN_STEP: f64 = 1e-5;
pub const MAX_STEP: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    Nats,
    Bits,
}

impl Units {
    pub fn convert(self, nats: f64) -> f64 {
        match self {
            Units::Nats => nats,
            Units::Bits => nats / core::f64::consts::LN_2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Units::Nats => "nats",
            Units::Bits => "bits",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MutualInformationValue {
    /// Canonical value in nats.
    pub nats: f64,
    pub estimate: Estimate,
    pub std_err: Option<f64>,
}

impl MutualInformationValue {
    pub fn value(&self, units: Units) -> f64 {
        units.convert(self.nats)
    }

    pub fn bits(&self) -> f64 {
        self.value(Units::Bits)
    }

    /// Nonnegativity and the entropy bound, both up to 5 standard errors.
    pub fn within_bounds(&self, dist: &InputDistribution) -> bool {
        let slack = 5.0 * self.std_err.unwrap_or(0.0) + 1e-9;
        let upper = dist.entropy_nats().map_or(true, |h| self.nats <= h + slack);
        self.nats >= -slack && upper
    }
}

/// `log det(I + M M†)`, the Gaussian-input mutual information in nats.
pub fn gaussian_mutual_information(m: &CMat) -> Result<f64> {
    let n = m.nrows();
    log_det_hpd(&(CMat::identity(n, n) + m * m.adjoint()))
}

/// Information density moments `E[log p(z|x) - log p(z)]`, with batch
/// values for Monte-Carlo.
fn information_moments(m: &CMat, dist: &InputDistribution, engine: &Engine<'_>) -> Result<Moments> {
    let model = ChannelModel::new(m, dist)?;
    let info = InformationSampler::new(&model, engine);
    let stat = |d: &crate::engine::Draw<'_>, ws: &mut crate::flowmodel::Workspace, out: &mut [f64]| -> Result<()> {
        model.posterior(d.z, ws)?;
        out[0] = info.value(d, ws);
        Ok(())
    };
    expectation(&model, engine, 1, &stat)
}

fn uses_closed_form(dist: &InputDistribution, engine: &Engine<'_>) -> bool {
    matches!((dist, engine.method), (InputDistribution::Gaussian { .. }, Method::Quadrature { .. }))
}

/// `I(x; z)` in nats. The estimator averages the information density
/// `log p(z|x) - log p(z)`, which has the same mean as
/// `-E[log p(z)] - n_out log(pi e)` with far less Monte-Carlo variance;
/// Monte-Carlo runs also subtract a zero-mean control variate.
pub fn mutual_information(m: &CMat, dist: &InputDistribution, engine: &Engine<'_>) -> Result<MutualInformationValue> {
    if uses_closed_form(dist, engine) {
        return Ok(MutualInformationValue {
            nats: gaussian_mutual_information(m)?,
            estimate: Estimate::ClosedForm,
            std_err: None,
        });
    }
    let mo = information_moments(m, dist, engine)?;
    Ok(MutualInformationValue {
        nats: mo.mean[0],
        estimate: mo.estimate,
        std_err: mo.std_err(0),
    })
}

/// Mutual information and MMSE matrix from a single pass.
pub fn information_and_mmse(
    m: &CMat,
    dist: &InputDistribution,
    engine: &Engine<'_>,
) -> Result<(MutualInformationValue, MmseMatrix)> {
    if uses_closed_form(dist, engine) {
        return Ok((
            MutualInformationValue {
                nats: gaussian_mutual_information(m)?,
                estimate: Estimate::ClosedForm,
                std_err: None,
            },
            MmseMatrix {
                e: gaussian_mmse(m)?,
                estimate: Estimate::ClosedForm,
                std_err: None,
            },
        ));
    }
    let model = ChannelModel::new(m, dist)?;
    let mo = channel_moments(&model, engine)?;
    let mi = MutualInformationValue {
        nats: mo.mean[0],
        estimate: mo.estimate,
        std_err: mo.std_err(0),
    };
    Ok((mi, mmse_from_moments(&mo, model.n_in())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    A,
    G,
    B,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::A, Target::G, Target::B];

    pub fn label(self) -> &'static str {
        match self {
            Target::A => "A",
            Target::G => "G",
            Target::B => "B",
        }
    }

    pub fn of(self, f: &Factors) -> &CMat {
        match self {
            Target::A => &f.a,
            Target::G => &f.g,
            Target::B => &f.b,
        }
    }

    fn of_mut(self, f: &mut Factors) -> &mut CMat {
        match self {
            Target::A => &mut f.a,
            Target::G => &mut f.g,
            Target::B => &mut f.b,
        }
    }
}

/// Where the transmission chain is observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cut {
    /// Right after precoding: `y = B x + ñ`.
    Source,
    /// Before decoding: `r = G B x + ñ`.
    Mid,
    /// At the sink: `z = A G B x + n`.
    Full,
}

impl Cut {
    pub const ALL: [Cut; 3] = [Cut::Source, Cut::Mid, Cut::Full];

    pub fn label(self) -> &'static str {
        match self {
            Cut::Source => "source-cut",
            Cut::Mid => "mid-cut",
            Cut::Full => "full",
        }
    }

    /// Effective channel matrix seen at this cut.
    pub fn channel(self, f: &Factors) -> CMat {
        match self {
            Cut::Source => f.b.clone(),
            Cut::Mid => &f.g * &f.b,
            Cut::Full => f.system(),
        }
    }

    /// Factors that influence this cut.
    pub fn targets(self) -> &'static [Target] {
        match self {
            Cut::Source => &[Target::B],
            Cut::Mid => &[Target::G, Target::B],
            Cut::Full => &Target::ALL,
        }
    }
}

fn check_mmse(f: &Factors, e: &MmseMatrix) -> Result<()> {
    check_shape(&e.e, f.n_in(), f.n_in(), "MMSE matrix")
}

/// `∇_A I = A G B E B† G†`, shaped like `A`.
pub fn grad_mi_decoding(f: &Factors, e: &MmseMatrix) -> Result<CMat> {
    check_mmse(f, e)?;
    let gb = &f.g * &f.b;
    Ok(&f.a * &gb * &e.e * gb.adjoint())
}

/// `∇_G I = A† A G B E B†`, shaped like `G`.
pub fn grad_mi_topology(f: &Factors, e: &MmseMatrix) -> Result<CMat> {
    check_mmse(f, e)?;
    Ok(f.a.adjoint() * f.system() * &e.e * f.b.adjoint())
}

/// `∇_B I = G† A† A G B E`, shaped like `B`.
pub fn grad_mi_precoding(f: &Factors, e: &MmseMatrix) -> Result<CMat> {
    check_mmse(f, e)?;
    let ag = &f.a * &f.g;
    Ok(ag.adjoint() * f.system() * &e.e)
}

/// Closed-form gradients for all three factors.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub a: CMat,
    pub g: CMat,
    pub b: CMat,
    pub form: Form,
}

impl GradientSet {
    pub fn get(&self, t: Target) -> &CMat {
        match t {
            Target::A => &self.a,
            Target::G => &self.g,
            Target::B => &self.b,
        }
    }
}

pub fn closed_form_gradients(f: &Factors, e: &MmseMatrix) -> Result<GradientSet> {
    let set = GradientSet {
        a: grad_mi_decoding(f, e)?,
        g: grad_mi_topology(f, e)?,
        b: grad_mi_precoding(f, e)?,
        form: f.form,
    };
    for t in Target::ALL {
        ensure_finite(set.get(t), t.label())?;
    }
    Ok(set)
}

/// Gradient of the mutual information observed at `cut` with respect to
/// `target`, with `e_cut` the MMSE matrix of that cut's channel:
///
/// * source-cut, B: `B Ẽ`
/// * mid-cut, B: `G† G B Ẽ`
/// * mid-cut, G: `G B Ẽ B†`
/// * full: the three identities above.
pub fn grad_mi_cut(cut: Cut, target: Target, f: &Factors, e_cut: &MmseMatrix) -> Result<CMat> {
    check_mmse(f, e_cut)?;
    match (cut, target) {
        (Cut::Source, Target::B) => Ok(&f.b * &e_cut.e),
        (Cut::Mid, Target::B) => Ok(f.g.adjoint() * &f.g * &f.b * &e_cut.e),
        (Cut::Mid, Target::G) => Ok(&f.g * &f.b * &e_cut.e * f.b.adjoint()),
        (Cut::Full, Target::A) => grad_mi_decoding(f, e_cut),
        (Cut::Full, Target::G) => grad_mi_topology(f, e_cut),
        (Cut::Full, Target::B) => grad_mi_precoding(f, e_cut),
        (cut, target) => Err(Error::InvalidCutTarget(format!(
            "the {} channel does not depend on {}",
            cut.label(),
            target.label()
        ))),
    }
}

/// Analytic gradient of `log det(I + H H†)` (Gaussian inputs) through
/// `Σ^{-1} H` rather than `H E`, used as an independent route.
pub fn logdet_gradient(cut: Cut, target: Target, f: &Factors) -> Result<CMat> {
    if !cut.targets().contains(&target) {
        return Err(Error::InvalidCutTarget(format!(
            "the {} channel does not depend on {}",
            cut.label(),
            target.label()
        )));
    }
    let h = cut.channel(f);
    let n = h.nrows();
    let sigma_inv = (CMat::identity(n, n) + &h * h.adjoint())
        .try_inverse()
        .ok_or_else(|| Error::NonFinite("I + H H†".into()))?;
    let core = sigma_inv * &h;
    // H = L X R with L, R the factors left and right of the target
    let id = |k: usize| CMat::identity(k, k);
    let (left, right) = match (cut, target) {
        (Cut::Source, Target::B) => (id(f.b.nrows()), id(f.b.ncols())),
        (Cut::Mid, Target::G) => (id(f.g.nrows()), f.b.clone()),
        (Cut::Mid, Target::B) => (f.g.clone(), id(f.b.ncols())),
        (Cut::Full, Target::A) => (id(f.a.nrows()), &f.g * &f.b),
        (Cut::Full, Target::G) => (f.a.clone(), f.b.clone()),
        (Cut::Full, Target::B) => (&f.a * &f.g, id(f.b.ncols())),
        _ => unreachable!("filtered above"),
    };
    Ok(left.adjoint() * core * right.adjoint())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub step: f64,
    /// Also difference at `step / 2` and Richardson-extrapolate.
    pub richardson: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            richardson: true,
        }
    }
}

/// Finite-difference gradient in the closed-form convention.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleGradient {
    /// Richardson-extrapolated when enabled, else the `step` difference.
    pub value: CMat,
    pub coarse: CMat,
    pub fine: Option<CMat>,
    /// Batch-means standard error of `value` (Monte-Carlo only).
    pub std_err: Option<CMat>,
    pub step: f64,
}

impl OracleGradient {
    /// `max |coarse - fine|`, the Richardson consistency check.
    pub fn richardson_gap(&self) -> Option<f64> {
        self.fine.as_ref().map(|f| crate::linalg::max_abs_diff(&self.coarse, f))
    }
}

/// Scalar with per-batch replicas, closed under linear combinations.
#[derive(Debug, Clone)]
struct Replicated {
    mean: f64,
    batches: Vec<f64>,
}

impl Replicated {
    fn from_moments(mo: Moments) -> Self {
        Self {
            mean: mo.mean[0],
            batches: mo.batch_means.iter().map(|b| b[0]).collect(),
        }
    }

    fn closed(v: f64) -> Self {
        Self {
            mean: v,
            batches: Vec::new(),
        }
    }

    fn combine(terms: &[(f64, &Replicated)]) -> Self {
        let mean = terms.iter().map(|(c, r)| c * r.mean).sum();
        let nb = terms.first().map_or(0, |(_, r)| r.batches.len());
        let batches = (0..nb)
            .map(|b| terms.iter().map(|(c, r)| c * r.batches[b]).sum())
            .collect();
        Self { mean, batches }
    }

    fn std_err(&self) -> Option<f64> {
        let b = self.batches.len();
        if b < 2 {
            return None;
        }
        let ss: f64 = self.batches.iter().map(|v| { let d = v - self.mean; d * d }).sum();
        Some(libm::sqrt(ss / (b as f64 * (b as f64 - 1.0))))
    }
}

fn information_at(channel: &CMat, dist: &InputDistribution, engine: &Engine<'_>) -> Result<Replicated> {
    if uses_closed_form(dist, engine) {
        return Ok(Replicated::closed(gaussian_mutual_information(channel)?));
    }
    Ok(Replicated::from_moments(information_moments(channel, dist, engine)?))
}

/// Finite-difference gradient of the mutual information at `cut` with
/// respect to every entry of `target`.
///
/// Each entry is differenced along its real and imaginary part; the two
/// derivatives `d_re`, `d_im` combine as `(d_re + i d_im) / c`. Monte-Carlo
/// evaluations share one seed, so every `±step` pair uses common random
/// numbers.
pub fn grad_oracle(
    f: &Factors,
    cut: Cut,
    dist: &InputDistribution,
    target: Target,
    engine: &Engine<'_>,
    opts: OracleOptions,
) -> Result<OracleGradient> {
    if !(MIN_STEP..=MAX_STEP).contains(&opts.step) {
        return Err(Error::StepOutOfRange(opts.step));
    }
    if !cut.targets().contains(&target) {
        return Err(Error::InvalidCutTarget(format!(
            "the {} channel does not depend on {}",
            cut.label(),
            target.label()
        )));
    }
    ensure_finite(target.of(f), target.label())?;
    let (rows, cols) = target.of(f).shape();
    let steps: Vec<f64> = if opts.richardson {
        vec![opts.step, opts.step / 2.0]
    } else {
        vec![opts.step]
    };
    let c = GRADIENT_CALIBRATION;
    let mut coarse = CMat::zeros(rows, cols);
    let mut fine = CMat::zeros(rows, cols);
    let mut value = CMat::zeros(rows, cols);
    let mut se = CMat::zeros(rows, cols);
    let mut have_se = false;

    let derivative = |r: usize, col: usize, dir: C64, h: f64| -> Result<Replicated> {
        let mut plus = f.clone();
        target.of_mut(&mut plus)[(r, col)] += dir * h;
        let mut minus = f.clone();
        target.of_mut(&mut minus)[(r, col)] -= dir * h;
        let ip = information_at(&cut.channel(&plus), dist, engine)?;
        let im = information_at(&cut.channel(&minus), dist, engine)?;
        Ok(Replicated::combine(&[(0.5 / h, &ip), (-0.5 / h, &im)]))
    };

    for r in 0..rows {
        for col in 0..cols {
            let mut parts: Vec<[Replicated; 2]> = Vec::with_capacity(steps.len());
            for &h in &steps {
                let d_re = derivative(r, col, C64::new(1.0, 0.0), h)?;
                let d_im = derivative(r, col, C64::new(0.0, 1.0), h)?;
                parts.push([d_re, d_im]);
            }
            let to_c = |p: &[Replicated; 2]| C64::new(p[0].mean, p[1].mean) / c;
            coarse[(r, col)] = to_c(&parts[0]);
            let best: [Replicated; 2] = if opts.richardson {
                fine[(r, col)] = to_c(&parts[1]);
                [0, 1].map(|k| Replicated::combine(&[(4.0 / 3.0, &parts[1][k]), (-1.0 / 3.0, &parts[0][k])]))
            } else {
                parts.swap_remove(0)
            };
            value[(r, col)] = to_c(&best);
            if let (Some(a), Some(b)) = (best[0].std_err(), best[1].std_err()) {
                se[(r, col)] = C64::new(a, b) / c;
                have_se = true;
            }
        }
    }
    if have_se {
        let worst = se.iter().map(|v| v.re.max(v.im)).fold(0.0, f64::max);
        let scale = max_abs(&value).max(ABSOLUTE_FLOOR);
        if worst > 0.1 * scale {
            return Err(Error::NoiseFloor {
                step: opts.step,
                std_err: worst,
                scale,
            });
        }
    }
    Ok(OracleGradient {
        value,
        coarse,
        fine: opts.richardson.then_some(fine),
        std_err: have_se.then_some(se),
        step: opts.step,
    })
}

/// Entrywise comparison of a closed form against an oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discrepancy {
    pub max_abs: f64,
    pub max_rel: f64,
    /// `‖cf - or‖_F / ‖or‖_F` (floored like [`relative_error`]).
    pub norm_rel: f64,
    /// Entry with the largest relative error.
    pub worst: (usize, usize),
}

/// Relative error of entry `(i, j)`:
/// `|cf - or| / max(|or_ij|, RELATIVE_FLOOR_FRACTION · max|or|, ABSOLUTE_FLOOR)`.
pub fn relative_error(closed: &CMat, oracle: &CMat, i: usize, j: usize) -> f64 {
    let scale = max_abs(oracle);
    let denom = oracle[(i, j)]
        .norm()
        .max(RELATIVE_FLOOR_FRACTION * scale)
        .max(ABSOLUTE_FLOOR);
    (closed[(i, j)] - oracle[(i, j)]).norm() / denom
}

pub fn compare(closed: &CMat, oracle: &CMat) -> Discrepancy {
    assert_eq!(closed.shape(), oracle.shape(), "compare: shape mismatch");
    let mut d = Discrepancy {
        max_abs: 0.0,
        max_rel: 0.0,
        norm_rel: crate::linalg::frobenius(&(closed - oracle)) / crate::linalg::frobenius(oracle).max(ABSOLUTE_FLOOR),
        worst: (0, 0),
    };
    for i in 0..closed.nrows() {
        for j in 0..closed.ncols() {
            d.max_abs = d.max_abs.max((closed[(i, j)] - oracle[(i, j)]).norm());
            let rel = relative_error(closed, oracle, i, j);
            if rel > d.max_rel {
                d.max_rel = rel;
                d.worst = (i, j);
            }
        }
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetReport {
    pub cut: Cut,
    pub target: Target,
    pub closed_form: CMat,
    pub oracle: OracleGradient,
    pub discrepancy: Discrepancy,
    pub tolerance: f64,
}

impl TargetReport {
    pub fn new(cut: Cut, target: Target, closed_form: CMat, oracle: OracleGradient, tolerance: f64) -> Self {
        let discrepancy = compare(&closed_form, &oracle.value);
        Self {
            cut,
            target,
            closed_form,
            oracle,
            discrepancy,
            tolerance,
        }
    }

    /// Recomputed from the stored arrays on every call.
    pub fn passes(&self) -> bool {
        let d = compare(&self.closed_form, &self.oracle.value);
        d.max_rel < self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub mutual_information: MutualInformationValue,
    pub mmse: MmseMatrix,
    pub closed_form: GradientSet,
    pub targets: Vec<TargetReport>,
    pub calibration: f64,
}

impl GradientReport {
    pub fn passes(&self) -> bool {
        self.targets.iter().all(TargetReport::passes)
    }

    /// Worst `(target, entry, relative error)` over the report.
    pub fn worst(&self) -> Option<(Target, (usize, usize), f64)> {
        self.targets
            .iter()
            .map(|t| (t.target, t.discrepancy.worst, t.discrepancy.max_rel))
            .max_by(|a, b| a.2.total_cmp(&b.2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub oracle: OracleOptions,
    pub rel_tolerance: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            oracle: OracleOptions::default(),
            rel_tolerance: 1e-3,
        }
    }
}

/// Computes `E` once, evaluates the three closed forms and checks each
/// against [`grad_oracle`].
pub fn verify_gradients(
    f: &Factors,
    dist: &InputDistribution,
    engine: &Engine<'_>,
    opts: VerifyOptions,
) -> Result<GradientReport> {
    let (mi, mmse) = information_and_mmse(&f.system(), dist, engine)?;
    let closed = closed_form_gradients(f, &mmse)?;
    let mut targets = Vec::with_capacity(3);
    for t in Target::ALL {
        let oracle = grad_oracle(f, Cut::Full, dist, t, engine, opts.oracle)?;
        targets.push(TargetReport::new(Cut::Full, t, closed.get(t).clone(), oracle, opts.rel_tolerance));
    }
    Ok(GradientReport {
        mutual_information: mi,
        mmse,
        closed_form: closed,
        targets,
        calibration: GRADIENT_CALIBRATION,
    })
}

/// One directional-derivative comparison:
/// `[I(X + tΔ) - I(X - tΔ)] / 2t` against `c · Re Tr{Δ† ∇_X I}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionalCheck {
    pub finite_difference: f64,
    pub predicted: f64,
}

impl DirectionalCheck {
    pub fn rel_error(&self) -> f64 {
        let denom = self.predicted.abs().max(ABSOLUTE_FLOOR);
        (self.finite_difference - self.predicted).abs() / denom
    }
}

pub fn directional_check(
    f: &Factors,
    cut: Cut,
    dist: &InputDistribution,
    target: Target,
    direction: &CMat,
    gradient: &CMat,
    engine: &Engine<'_>,
    step: f64,
) -> Result<DirectionalCheck> {
    check_shape(direction, target.of(f).nrows(), target.of(f).ncols(), "direction")?;
    check_shape(gradient, target.of(f).nrows(), target.of(f).ncols(), "gradient")?;
    let mut plus = f.clone();
    *target.of_mut(&mut plus) += direction * C64::new(step, 0.0);
    let mut minus = f.clone();
    *target.of_mut(&mut minus) -= direction * C64::new(step, 0.0);
    let ip = information_at(&cut.channel(&plus), dist, engine)?.mean;
    let im = information_at(&cut.channel(&minus), dist, engine)?.mean;
    let predicted = GRADIENT_CALIBRATION * (direction.adjoint() * gradient).trace().re;
    Ok(DirectionalCheck {
        finite_difference: (ip - im) / (2.0 * step),
        predicted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, real, real_matrix};

    fn scalar_factors(a: f64, g: f64, b: f64) -> Factors {
        Factors::new(real_matrix(&[&[a]]), real_matrix(&[&[g]]), real_matrix(&[&[b]]), Form::Compact).unwrap()
    }

    #[test]
    fn zero_mmse_gives_zero_gradients() {
        let f = Factors::new(
            real_matrix(&[&[1.0, 2.0]]),
            real_matrix(&[&[0.5, 0.0], &[1.0, 1.0]]),
            real_matrix(&[&[1.0], &[-1.0]]),
            Form::Compact,
        )
        .unwrap();
        let e = MmseMatrix::zeros(1);
        let g = closed_form_gradients(&f, &e).unwrap();
        for t in Target::ALL {
            assert!(g.get(t).iter().all(|v| *v == C64::new(0.0, 0.0)));
        }
        for (cut, t) in [(Cut::Source, Target::B), (Cut::Mid, Target::B), (Cut::Mid, Target::G)] {
            assert!(grad_mi_cut(cut, t, &f, &e).unwrap().iter().all(|v| v.norm() == 0.0));
        }
    }

    #[test]
    fn scalar_substitution() {
        let (a, g, b, e) = (0.7, -1.3, 0.4, 0.25);
        let f = scalar_factors(a, g, b);
        let mut mm = MmseMatrix::zeros(1);
        mm.e[(0, 0)] = real(e);
        let ga = grad_mi_decoding(&f, &mm).unwrap()[(0, 0)];
        assert!((ga - real(a * g * g * b * b * e)).norm() < 1e-15);
        let gg = grad_mi_topology(&f, &mm).unwrap()[(0, 0)];
        assert!((gg - real(a * a * g * b * b * e)).norm() < 1e-15);
        let gb = grad_mi_precoding(&f, &mm).unwrap()[(0, 0)];
        assert!((gb - real(g * g * a * a * b * e)).norm() < 1e-15);
    }

    #[test]
    fn identity_reductions() {
        let b = CMat::from_fn(2, 2, |i, j| C64::new(0.3 * i as f64 + 0.1, j as f64 - 0.4));
        let g = CMat::from_fn(2, 2, |i, j| C64::new(1.0 + i as f64 * j as f64, 0.2));
        let mut e = MmseMatrix::zeros(2);
        e.e = real_matrix(&[&[0.5, 0.1], &[0.1, 0.3]]);
        let ab = Factors::new(CMat::identity(2, 2), CMat::identity(2, 2), b.clone(), Form::Compact).unwrap();
        let t1 = grad_mi_precoding(&ab, &e).unwrap();
        assert_eq!(t1, &b * &e.e);
        assert_eq!(t1, grad_mi_cut(Cut::Source, Target::B, &ab, &e).unwrap());
        assert_eq!(grad_mi_cut(Cut::Mid, Target::B, &ab, &e).unwrap(), grad_mi_cut(Cut::Source, Target::B, &ab, &e).unwrap());
        // identity A, B: ∇_G = G E
        let ig = Factors::new(CMat::identity(2, 2), g.clone(), CMat::identity(2, 2), Form::Compact).unwrap();
        assert!(max_abs_diff(&grad_mi_topology(&ig, &e).unwrap(), &(&g * &e.e)) < 1e-15);
        // full-form gradients at A = I equal the mid-cut forms
        let mid = Factors::new(CMat::identity(2, 2), g, b, Form::Compact).unwrap();
        let close = |x: CMat, y: CMat| assert!(max_abs_diff(&x, &y) < 1e-14);
        close(grad_mi_topology(&mid, &e).unwrap(), grad_mi_cut(Cut::Mid, Target::G, &mid, &e).unwrap());
        close(grad_mi_precoding(&mid, &e).unwrap(), grad_mi_cut(Cut::Mid, Target::B, &mid, &e).unwrap());
    }

    #[test]
    fn invalid_cut_targets() {
        let f = Factors::identity(1);
        let e = MmseMatrix::zeros(1);
        assert!(matches!(grad_mi_cut(Cut::Source, Target::G, &f, &e), Err(Error::InvalidCutTarget(_))));
        assert!(matches!(grad_mi_cut(Cut::Mid, Target::A, &f, &e), Err(Error::InvalidCutTarget(_))));
        let err = grad_oracle(&f, Cut::Source, &InputDistribution::bpsk(), Target::A, &Engine::quadrature(), OracleOptions::default());
        assert!(matches!(err, Err(Error::InvalidCutTarget(_))));
    }

    #[test]
    fn step_range_enforced() {
        let f = Factors::identity(1);
        let d = InputDistribution::bpsk();
        for step in [1e-6, 0.1] {
            let err = grad_oracle(&f, Cut::Full, &d, Target::B, &Engine::quadrature(), OracleOptions { step, richardson: false });
            assert_eq!(err.unwrap_err(), Error::StepOutOfRange(step));
        }
    }

    #[test]
    fn mmse_shape_checked() {
        let f = Factors::identity(2);
        assert!(matches!(grad_mi_decoding(&f, &MmseMatrix::zeros(3)), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn point_mass_information_is_zero() {
        let d = InputDistribution::point(vec![C64::new(0.5, 0.5)]).unwrap();
        let mi = mutual_information(&real_matrix(&[&[2.0]]), &d, &Engine::quadrature()).unwrap();
        assert!(mi.nats.abs() < 1e-12);
    }

    #[test]
    fn gaussian_information_values() {
        let d = InputDistribution::gaussian(2);
        let zero = mutual_information(&CMat::zeros(2, 2), &d, &Engine::quadrature()).unwrap();
        assert_eq!(zero.nats, 0.0);
        let id = mutual_information(&CMat::identity(2, 2), &d, &Engine::quadrature()).unwrap();
        assert!((id.nats - 2.0 * core::f64::consts::LN_2).abs() < 1e-14);
        assert!((id.bits() - 2.0).abs() < 1e-14);
        assert_eq!(id.estimate, Estimate::ClosedForm);
    }

    #[test]
    fn compare_locates_corruption() {
        let oracle = real_matrix(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let mut closed = oracle.clone();
        closed[(1, 0)] += real(0.01);
        let d = compare(&closed, &oracle);
        assert_eq!(d.worst, (1, 0));
        assert!((d.max_rel - 0.01 / 3.0).abs() < 1e-12);
        assert!((d.max_abs - 0.01).abs() < 1e-12);
    }
}
