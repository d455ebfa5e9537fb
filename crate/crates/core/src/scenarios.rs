//! Worked scenarios on the four-vertex, five-edge example network:
//! the printed `ψ11` expansion of `∇_G I` and its two edge-removal variants,
//! the per-cut analysis, and projected gradient ascent on the precoder.
//!
//! ```text
//!        e1        e4
//!   v1 ─────▶ v2 ─────▶ v4
//!    │         │e3       ▲
//!    │e2       ▼         │e5
//!    └──────▶ v3 ────────┘
//! ```

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::estimator::MmseMatrix;
use crate::flowmodel::InputDistribution;
use crate::infogradients::{grad_mi_cut, grad_mi_precoding, information_and_mmse, Cut, MutualInformationValue, Target};
use crate::linalg::{frobenius, real, CMat, C64};
use crate::netgraph::{
    build_coefficient_matrices, compact_form, BuildOptions, CodingCoefficients, Factors, NetworkTopology,
};
use crate::rng::StreamFactory;

/// Coefficient symbols of the example network. `Gamma41` is the decoding
/// coefficient of edge e4 onto output 1, `Beta13` the coding coefficient
/// from e1 to e3, and `Alpha12` the precoding entry in row e1, column 2 of
/// the compact `B` (input 2 onto edge e1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    Gamma41,
    Gamma42,
    Gamma51,
    Gamma52,
    Beta14,
    Beta13,
    Beta35,
    Beta25,
    Alpha11,
    Alpha12,
    Alpha21,
    Alpha22,
}

use Symbol::*;

impl Symbol {
    pub const ALL: [Symbol; 12] = [
        Gamma41, Gamma42, Gamma51, Gamma52, Beta14, Beta13, Beta35, Beta25, Alpha11, Alpha12, Alpha21, Alpha22,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Gamma41 => "gamma_e4_1",
            Gamma42 => "gamma_e4_2",
            Gamma51 => "gamma_e5_1",
            Gamma52 => "gamma_e5_2",
            Beta14 => "beta_e1_e4",
            Beta13 => "beta_e1_e3",
            Beta35 => "beta_e3_e5",
            Beta25 => "beta_e2_e5",
            Alpha11 => "alpha_1_e1",
            Alpha12 => "alpha_1_e2",
            Alpha21 => "alpha_2_e1",
            Alpha22 => "alpha_2_e2",
        }
    }

    pub fn parse(label: &str) -> Option<Symbol> {
        Symbol::ALL.into_iter().find(|s| s.label() == label)
    }
}

/// The example topology: sources `{v1}`, sinks `{v4}`.
pub fn figure1_topology() -> NetworkTopology {
    NetworkTopology::new(
        &["v1", "v2", "v3", "v4"],
        &[
            ("e1", "v1", "v2"),
            ("e2", "v1", "v3"),
            ("e3", "v2", "v3"),
            ("e4", "v2", "v4"),
            ("e5", "v3", "v4"),
        ],
        &["v1"],
        &["v4"],
    )
    .expect("static topology is valid")
}

/// A (possibly partial) real assignment of the twelve symbols.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Figure1Coefficients {
    values: BTreeMap<Symbol, f64>,
}

impl Figure1Coefficients {
    pub fn new() -> Self {
        Self::default()
    }

    /// Values in [`Symbol::ALL`] order.
    pub fn from_values(v: [f64; 12]) -> Self {
        Self {
            values: Symbol::ALL.into_iter().zip(v).collect(),
        }
    }

    pub fn constant(v: f64) -> Self {
        Self::from_values([v; 12])
    }

    /// Independent draws, uniform on (-1, 1), keyed by `(seed, draw)`.
    pub fn random(seed: u64, draw: u64) -> Self {
        let mut s = StreamFactory::new(seed).stream(draw);
        Self::from_values(core::array::from_fn(|_| 2.0 * s.uniform() - 1.0))
    }

    pub fn set(&mut self, s: Symbol, v: f64) -> &mut Self {
        self.values.insert(s, v);
        self
    }

    pub fn get(&self, s: Symbol) -> Result<f64> {
        self.values
            .get(&s)
            .copied()
            .ok_or_else(|| Error::MissingCoefficient(s.label().into()))
    }

    /// Copy with every listed symbol set to zero.
    pub fn zeroed(&self, symbols: &[Symbol]) -> Self {
        let mut c = self.clone();
        for s in symbols {
            c.values.insert(*s, 0.0);
        }
        c
    }

    /// Coding coefficients on [`figure1_topology`] with two inputs and two
    /// outputs.
    pub fn to_network(&self) -> Result<(NetworkTopology, CodingCoefficients)> {
        let t = figure1_topology();
        let e = |l: &str| t.edge_index(l);
        let mut c = CodingCoefficients::new();
        c.set_gamma(0, e("e4")?, real(self.get(Gamma41)?))
            .set_gamma(1, e("e4")?, real(self.get(Gamma42)?))
            .set_gamma(0, e("e5")?, real(self.get(Gamma51)?))
            .set_gamma(1, e("e5")?, real(self.get(Gamma52)?))
            .set_beta(e("e1")?, e("e4")?, real(self.get(Beta14)?))
            .set_beta(e("e1")?, e("e3")?, real(self.get(Beta13)?))
            .set_beta(e("e3")?, e("e5")?, real(self.get(Beta35)?))
            .set_beta(e("e2")?, e("e5")?, real(self.get(Beta25)?))
            .set_alpha(0, e("e1")?, real(self.get(Alpha11)?))
            .set_alpha(1, e("e1")?, real(self.get(Alpha12)?))
            .set_alpha(0, e("e2")?, real(self.get(Alpha21)?))
            .set_alpha(1, e("e2")?, real(self.get(Alpha22)?));
        Ok((t, c))
    }

    /// Compact `(A_c, G_c, B_c)` built through the edge-indexed pipeline.
    pub fn compact_factors(&self) -> Result<Factors> {
        let (t, c) = self.to_network()?;
        let sys = build_coefficient_matrices(&t, &c, 2, 2, BuildOptions::default())?;
        Ok(compact_form(&sys, &t)?.factors)
    }
}

/// Which printed expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Full,
    /// Edge e3 disconnected.
    NoE3,
    /// Edges e2 and e5 lost.
    NoE2E5,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::NoE3, Variant::NoE2E5];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoE3 => "no-e3",
            Variant::NoE2E5 => "no-e2e5",
        }
    }

    /// Coefficients that vanish when the variant's edges are removed.
    pub fn removed(self) -> &'static [Symbol] {
        match self {
            Variant::Full => &[],
            Variant::NoE3 => &[Beta13, Beta35],
            Variant::NoE2E5 => &[Beta25, Beta35, Gamma51, Gamma52, Alpha21, Alpha22],
        }
    }

    /// Edges removed from the topology.
    pub fn removed_edges(self) -> &'static [&'static str] {
        match self {
            Variant::Full => &[],
            Variant::NoE3 => &["e3"],
            Variant::NoE2E5 => &["e2", "e5"],
        }
    }

    pub fn terms(self) -> &'static [Term] {
        match self {
            Variant::Full => FULL,
            Variant::NoE3 => NO_E3,
            Variant::NoE2E5 => NO_E2E5,
        }
    }
}

/// One printed monomial: `E[e] · Π factors`, zero-based `E` index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Term {
    pub e: (usize, usize),
    pub factors: &'static [Symbol],
}

const fn t(e: (usize, usize), factors: &'static [Symbol]) -> Term {
    Term { e, factors }
}

const E11: (usize, usize) = (0, 0);
const E12: (usize, usize) = (0, 1);
const E21: (usize, usize) = (1, 0);
const E22: (usize, usize) = (1, 1);

/// Printed full expansion, term by term.
pub const FULL: &[Term] = &[
    t(E11, &[Gamma41, Gamma41, Beta14, Alpha11, Alpha11]),
    t(E11, &[Gamma41, Gamma51, Beta13, Beta35, Alpha11, Alpha11]),
    t(E11, &[Gamma41, Gamma51, Beta25, Alpha21, Alpha11]),
    t(E11, &[Gamma42, Gamma42, Beta14, Alpha11, Alpha11]),
    t(E11, &[Gamma42, Gamma52, Beta13, Beta35, Alpha11, Alpha11]),
    t(E11, &[Gamma41, Gamma52, Beta25, Alpha21, Alpha11]),
    t(E12, &[Gamma41, Gamma41, Beta14, Alpha11, Alpha12]),
    t(E12, &[Gamma41, Gamma51, Beta13, Beta35, Alpha11, Alpha12]),
    t(E12, &[Gamma41, Gamma51, Beta25, Alpha21, Alpha12]),
    t(E12, &[Gamma42, Gamma42, Beta14, Alpha11, Alpha12]),
    t(E12, &[Gamma42, Gamma52, Beta13, Beta35, Alpha11, Alpha12]),
    t(E12, &[Gamma42, Gamma52, Beta25, Alpha21, Alpha12]),
    t(E21, &[Gamma41, Gamma41, Beta14, Alpha11, Alpha12]),
    t(E21, &[Gamma41, Gamma51, Beta13, Beta35, Alpha12, Alpha11]),
    t(E21, &[Gamma41, Gamma51, Beta25, Alpha22, Alpha11]),
    t(E21, &[Gamma42, Gamma42, Beta14, Alpha11, Alpha12]),
    t(E21, &[Gamma42, Gamma52, Beta13, Beta35, Alpha11, Alpha12]),
    t(E21, &[Gamma42, Gamma52, Beta25, Alpha22, Alpha11]),
    t(E22, &[Gamma41, Gamma41, Beta14, Alpha12, Alpha12]),
    t(E22, &[Gamma41, Gamma51, Beta13, Beta35, Alpha12, Alpha12]),
    t(E22, &[Gamma41, Gamma51, Beta25, Alpha22, Alpha12]),
    t(E22, &[Gamma42, Gamma42, Beta14, Alpha12, Alpha12]),
    t(E22, &[Gamma42, Gamma52, Beta13, Beta35, Alpha12, Alpha12]),
    t(E22, &[Gamma42, Gamma52, Beta25, Alpha22, Alpha12]),
];

/// Printed expansion with e3 disconnected.
pub const NO_E3: &[Term] = &[
    t(E11, &[Gamma41, Gamma41, Beta14, Alpha11, Alpha11]),
    t(E11, &[Gamma41, Gamma51, Beta25, Alpha21, Alpha11]),
    t(E11, &[Gamma42, Gamma42, Beta14, Alpha11, Alpha11]),
    t(E11, &[Gamma41, Gamma52, Beta25, Alpha21, Alpha11]),
    t(E12, &[Gamma41, Gamma41, Beta14, Alpha11, Alpha12]),
    t(E12, &[Gamma41, Gamma51, Beta25, Alpha21, Alpha12]),
    t(E12, &[Gamma42, Gamma42, Beta14, Alpha11, Alpha12]),
    t(E12, &[Gamma42, Gamma52, Beta25, Alpha21, Alpha12]),
    t(E21, &[Gamma41, Gamma41, Beta14, Alpha11, Alpha12]),
    t(E21, &[Gamma41, Gamma51, Beta25, Alpha22, Alpha11]),
    t(E21, &[Gamma42, Gamma42, Beta14, Alpha11, Alpha12]),
    t(E21, &[Gamma42, Gamma52, Beta25, Alpha22, Alpha11]),
    t(E22, &[Gamma41, Gamma41, Beta14, Alpha12, Alpha12]),
    t(E22, &[Gamma41, Gamma51, Beta25, Alpha22, Alpha12]),
    t(E22, &[Gamma42, Gamma42, Beta14, Alpha12, Alpha12]),
    t(E22, &[Gamma42, Gamma52, Beta25, Alpha22, Alpha12]),
];

/// Printed expansion with e2 and e5 lost.
pub const NO_E2E5: &[Term] = &[
    t(E11, &[Gamma41, Gamma41, Beta14, Alpha11, Alpha11]),
    t(E11, &[Gamma42, Gamma42, Beta14, Alpha11, Alpha11]),
    t(E12, &[Gamma41, Gamma41, Beta14, Alpha11, Alpha12]),
    t(E12, &[Gamma42, Gamma42, Beta14, Alpha11, Alpha12]),
    t(E21, &[Gamma41, Gamma41, Beta14, Alpha11, Alpha12]),
    t(E21, &[Gamma42, Gamma42, Beta14, Alpha11, Alpha12]),
    t(E22, &[Gamma41, Gamma41, Beta14, Alpha12, Alpha12]),
    t(E22, &[Gamma42, Gamma42, Beta14, Alpha12, Alpha12]),
];

fn eval_terms<'a>(terms: impl IntoIterator<Item = (&'a (usize, usize), &'a [Symbol], i64)>, c: &Figure1Coefficients, e: &CMat) -> Result<C64> {
    let mut acc = C64::new(0.0, 0.0);
    for (idx, factors, mult) in terms {
        let mut p = mult as f64;
        for s in factors {
            p *= c.get(*s)?;
        }
        acc += e[*idx] * p;
    }
    Ok(acc)
}

fn check_e(e: &CMat) -> Result<()> {
    crate::linalg::check_shape(e, 2, 2, "E")
}

/// Evaluates the printed polynomial of `variant` term by term.
pub fn psi11(variant: Variant, c: &Figure1Coefficients, e: &CMat) -> Result<C64> {
    check_e(e)?;
    eval_terms(variant.terms().iter().map(|t| (&t.e, t.factors, 1)), c, e)
}

/// `(A_c† A_c G_c B_c E B_c†)[0, 0]` from the compact matrices.
pub fn psi11_matrix(c: &Figure1Coefficients, e: &CMat) -> Result<C64> {
    check_e(e)?;
    let f = c.compact_factors()?;
    Ok((f.a.adjoint() * &f.a * &f.g * &f.b * e * f.b.adjoint())[(0, 0)])
}

/// A canonical monomial: `E` index plus the sorted factor multiset.
pub type Monomial = ((usize, usize), Vec<Symbol>);

/// Polynomial in the symbols, linear in the entries of `E`, with integer
/// coefficients.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Polynomial {
    pub terms: BTreeMap<Monomial, i64>,
}

impl Polynomial {
    pub fn from_terms(terms: &[Term]) -> Self {
        let mut p = Self::default();
        for t in terms {
            let mut f = t.factors.to_vec();
            f.sort();
            p.add((t.e, f), 1);
        }
        p
    }

    fn add(&mut self, m: Monomial, k: i64) {
        let v = self.terms.entry(m.clone()).or_insert(0);
        *v += k;
        if *v == 0 {
            self.terms.remove(&m);
        }
    }

    pub fn len(&self) -> usize {
        self.terms.values().map(|k| k.unsigned_abs() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Drops every monomial containing one of `symbols`.
    pub fn set_zero(&self, symbols: &[Symbol]) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .filter(|((_, f), _)| !f.iter().any(|s| symbols.contains(s)))
                .map(|(m, k)| (m.clone(), *k))
                .collect(),
        }
    }

    /// `self - other`.
    pub fn minus(&self, other: &Self) -> Self {
        let mut d = self.clone();
        for (m, k) in &other.terms {
            d.add(m.clone(), -k);
        }
        d
    }

    pub fn evaluate(&self, c: &Figure1Coefficients, e: &CMat) -> Result<C64> {
        check_e(e)?;
        eval_terms(self.terms.iter().map(|((idx, f), k)| (idx, f.as_slice(), *k)), c, e)
    }
}

/// Symbolic polynomial entries of a small matrix.
type SymMat = Vec<Vec<BTreeMap<Vec<Symbol>, i64>>>;

fn sym(entries: &[&[&[Symbol]]]) -> SymMat {
    entries
        .iter()
        .map(|row| {
            row.iter()
                .map(|m| {
                    let mut p = BTreeMap::new();
                    if !m.is_empty() {
                        let mut f = m.to_vec();
                        f.sort();
                        p.insert(f, 1);
                    }
                    p
                })
                .collect()
        })
        .collect()
}

fn sym_mul(x: &SymMat, y: &SymMat) -> SymMat {
    let (n, k, m) = (x.len(), y.len(), y[0].len());
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let mut acc: BTreeMap<Vec<Symbol>, i64> = BTreeMap::new();
                    for l in 0..k {
                        for (fa, ka) in &x[i][l] {
                            for (fb, kb) in &y[l][j] {
                                let mut f = fa.clone();
                                f.extend_from_slice(fb);
                                f.sort();
                                *acc.entry(f).or_insert(0) += ka * kb;
                            }
                        }
                    }
                    acc.retain(|_, v| *v != 0);
                    acc
                })
                .collect()
        })
        .collect()
}

fn sym_transpose(x: &SymMat) -> SymMat {
    (0..x[0].len()).map(|j| (0..x.len()).map(|i| x[i][j].clone()).collect()).collect()
}

/// Symbolic expansion of `(A_cᵀ A_c G_c B_c E B_cᵀ)[0, 0]` for real
/// coefficients, with the compact factors of the example network:
///
/// ```text
/// A_c = [γ41 γ51]   G_c = [β14      0  ]   B_c = [α11 α12]
///       [γ42 γ52]         [β13·β35  β25]         [α21 α22]
/// ```
pub fn expanded_psi11() -> Polynomial {
    let a = sym(&[&[&[Gamma41], &[Gamma51]], &[&[Gamma42], &[Gamma52]]]);
    let g = sym(&[&[&[Beta14], &[]], &[&[Beta13, Beta35], &[Beta25]]]);
    let b = sym(&[&[&[Alpha11], &[Alpha12]], &[&[Alpha21], &[Alpha22]]]);
    let left = sym_mul(&sym_mul(&sym_transpose(&a), &a), &g);
    let bt = sym_transpose(&b);
    // ψ11 = Σ_{j,k,l} left[0][j] B[j][k] E[k][l] Bᵀ[l][0]
    let mut p = Polynomial::default();
    for j in 0..2 {
        for k in 0..2 {
            for l in 0..2 {
                for (fl, kl) in &left[0][j] {
                    for (fb, kb) in &b[j][k] {
                        for (ft, kt) in &bt[l][0] {
                            let mut f = fl.clone();
                            f.extend_from_slice(fb);
                            f.extend_from_slice(ft);
                            f.sort();
                            p.add(((k, l), f), kl * kb * kt);
                        }
                    }
                }
            }
        }
    }
    p
}

/// Printed-versus-derived term comparison for one variant.
#[derive(Debug, Clone, PartialEq)]
pub struct TermAudit {
    pub variant: Variant,
    pub printed_terms: usize,
    pub expected_terms: usize,
    /// Derived monomials the printed list lacks.
    pub missing: Polynomial,
    /// Printed monomials the derivation does not produce.
    pub extra: Polynomial,
}

impl TermAudit {
    pub fn is_exact(&self) -> bool {
        self.missing.is_empty() && self.extra.is_empty()
    }
}

pub fn audit_terms(variant: Variant) -> TermAudit {
    let printed = Polynomial::from_terms(variant.terms());
    let expected = expanded_psi11().set_zero(variant.removed());
    let diff = printed.minus(&expected);
    let split = |positive: bool| Polynomial {
        terms: diff
            .terms
            .iter()
            .filter(|(_, k)| (**k > 0) == positive)
            .map(|(m, k)| (m.clone(), k.abs()))
            .collect(),
    };
    TermAudit {
        variant,
        printed_terms: printed.len(),
        expected_terms: expected.len(),
        missing: split(false),
        extra: split(true),
    }
}

/// Zeroing the removed coefficients in the printed full expansion gives
/// exactly the printed reduced expansion (as term sets).
pub fn variant_consistent(variant: Variant) -> bool {
    Polynomial::from_terms(FULL).set_zero(variant.removed()) == Polynomial::from_terms(variant.terms())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiDraw {
    pub draw: u64,
    pub printed: C64,
    pub matrix: C64,
    /// The derived expansion evaluated at the same point.
    pub derived: C64,
}

impl PsiDraw {
    pub fn discrepancy(&self) -> f64 {
        (self.printed - self.matrix).norm()
    }

    pub fn derived_discrepancy(&self) -> f64 {
        (self.derived - self.matrix).norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiReport {
    pub seed: u64,
    pub tolerance: f64,
    pub draws: Vec<PsiDraw>,
    pub audit: TermAudit,
}

impl PsiReport {
    pub fn max_discrepancy(&self) -> f64 {
        self.draws.iter().map(PsiDraw::discrepancy).fold(0.0, f64::max)
    }

    pub fn max_derived_discrepancy(&self) -> f64 {
        self.draws.iter().map(PsiDraw::derived_discrepancy).fold(0.0, f64::max)
    }

    /// The printed polynomial agrees with the matrix form on every draw.
    pub fn printed_agrees(&self) -> bool {
        self.max_discrepancy() < self.tolerance
    }

    /// Either the printed expansion agrees, or every disagreement is
    /// explained by the term audit (the derived expansion agrees).
    pub fn explained(&self) -> bool {
        self.printed_agrees() || (!self.audit.is_exact() && self.max_derived_discrepancy() < self.tolerance)
    }
}

/// Random `E` for a draw: real, uniform on (-1, 1) entrywise.
fn random_e(seed: u64, draw: u64) -> CMat {
    let mut s = StreamFactory::new(seed ^ 0x5eed_e000).stream(draw);
    CMat::from_fn(2, 2, |_, _| real(2.0 * s.uniform() - 1.0))
}

/// Compares the printed full expansion with `(A†AGBEB†)[0, 0]` on
/// `draws` real random coefficient assignments.
pub fn psi11_matches_matrix_form(seed: u64, draws: u64, tolerance: f64) -> Result<PsiReport> {
    let derived = expanded_psi11();
    let mut out = Vec::with_capacity(draws as usize);
    for d in 0..draws {
        let c = Figure1Coefficients::random(seed, d);
        let e = random_e(seed, d);
        out.push(PsiDraw {
            draw: d,
            printed: psi11(Variant::Full, &c, &e)?,
            matrix: psi11_matrix(&c, &e)?,
            derived: derived.evaluate(&c, &e)?,
        });
    }
    Ok(PsiReport {
        seed,
        tolerance,
        draws: out,
        audit: audit_terms(Variant::Full),
    })
}

/// Information, MMSE matrix and the applicable gradients at one cut.
#[derive(Debug, Clone, PartialEq)]
pub struct CutRecord {
    pub cut: Cut,
    pub mutual_information: MutualInformationValue,
    pub mmse: MmseMatrix,
    pub gradients: Vec<(Target, CMat)>,
}

pub fn cut_analysis(cut: Cut, f: &Factors, dist: &InputDistribution, engine: &Engine<'_>) -> Result<CutRecord> {
    if dist.dim() != f.n_in() {
        return Err(Error::DimensionMismatch(format!(
            "input dimension {} against {} precoder columns",
            dist.dim(),
            f.n_in()
        )));
    }
    let (mi, mmse) = information_and_mmse(&cut.channel(f), dist, engine)?;
    let gradients = cut
        .targets()
        .iter()
        .map(|t| grad_mi_cut(cut, *t, f, &mmse).map(|g| (*t, g)))
        .collect::<Result<Vec<_>>>()?;
    Ok(CutRecord {
        cut,
        mutual_information: mi,
        mmse,
        gradients,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentOptions {
    pub step: f64,
    pub iterations: usize,
    /// Frobenius norm of `B` after every projection.
    pub budget: f64,
    /// Halve the step (at most this many times) when `I` would decrease.
    pub max_halvings: u32,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            step: 0.5,
            iterations: 200,
            budget: 1.0,
            max_halvings: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AscentPoint {
    pub iteration: usize,
    pub b: CMat,
    pub nats: f64,
    /// Step actually taken to reach this point.
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<AscentPoint>,
    /// Set when a non-finite gradient or value stopped the ascent early.
    pub aborted: Option<Error>,
}

impl Trajectory {
    pub fn last(&self) -> &AscentPoint {
        self.points.last().expect("trajectory holds the starting point")
    }
}

/// Rescales to the budget; the zero matrix becomes the deterministic
/// isotropic direction (ones on the main diagonal).
fn project(b: CMat, budget: f64) -> CMat {
    let dir = if frobenius(&b) > 0.0 {
        b
    } else {
        CMat::from_fn(b.nrows(), b.ncols(), |i, j| real(if i == j { 1.0 } else { 0.0 }))
    };
    let s = budget / frobenius(&dir);
    dir * real(s)
}

/// Projected gradient ascent on the precoder with the closed-form `∇_B I`.
///
/// Each iteration moves `B` along the gradient and rescales it to the
/// Frobenius budget; a zero matrix is replaced by the isotropic direction.
/// A zero step leaves `B` untouched. When `I` would decrease the step is
/// halved, at most `max_halvings` times, after which the point is kept.
pub fn precoder_ascent(
    f: &Factors,
    dist: &InputDistribution,
    engine: &Engine<'_>,
    opts: AscentOptions,
) -> Result<Trajectory> {
    if !(opts.step >= 0.0 && opts.step.is_finite()) {
        return Err(Error::InvalidParameter(format!("step must be nonnegative, got {}", opts.step)));
    }
    if !(opts.budget > 0.0 && opts.budget.is_finite()) {
        return Err(Error::InvalidParameter(format!("budget must be positive, got {}", opts.budget)));
    }
    let mut cur = f.clone();
    let (mi, mut mmse) = information_and_mmse(&cur.system(), dist, engine)?;
    let mut points = alloc::vec![AscentPoint {
        iteration: 0,
        b: cur.b.clone(),
        nats: mi.nats,
        step: 0.0,
    }];
    let mut current = mi.nats;
    for it in 1..=opts.iterations {
        if opts.step == 0.0 {
            points.push(AscentPoint {
                iteration: it,
                b: cur.b.clone(),
                nats: current,
                step: 0.0,
            });
            continue;
        }
        let grad = grad_mi_precoding(&cur, &mmse)?;
        if grad.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Ok(Trajectory {
                points,
                aborted: Some(Error::NonFinite(format!("precoder gradient at iteration {it}"))),
            });
        }
        let mut mu = opts.step;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let mut cand = cur.clone();
            cand.b = project(&cur.b + &grad * real(mu), opts.budget);
            let (mi, e) = information_and_mmse(&cand.system(), dist, engine)?;
            if !mi.nats.is_finite() {
                return Ok(Trajectory {
                    points,
                    aborted: Some(Error::NonFinite(format!("mutual information at iteration {it}"))),
                });
            }
            if mi.nats >= current {
                accepted = Some((cand, mi.nats, e));
                break;
            }
            mu *= 0.5;
        }
        match accepted {
            Some((cand, nats, e)) => {
                cur = cand;
                current = nats;
                mmse = e;
            }
            None => mu = 0.0,
        }
        points.push(AscentPoint {
            iteration: it,
            b: cur.b.clone(),
            nats: current,
            step: mu,
        });
    }
    Ok(Trajectory { points, aborted: None })
}
