//! The five commands and the checks each one records.

use std::time::Instant;

use netimmse_core::engine::{Engine, Estimate, Method};
use netimmse_core::estimator::{HERMITIAN_TOLERANCE, PSD_FLOOR};
use netimmse_core::exec::{BlockRunner, SEQUENTIAL};
use netimmse_core::flowmodel::InputDistribution;
use netimmse_core::infogradients::{
    closed_form_gradients, compare, directional_check, grad_oracle, information_and_mmse, logdet_gradient,
    relative_error, verify_gradients, Cut, OracleOptions, Target, TargetReport, VerifyOptions,
};
use netimmse_core::netgraph::Factors;
use netimmse_core::rng::StreamFactory;
use netimmse_core::scenarios::{
    audit_terms, cut_analysis, precoder_ascent, psi11_matches_matrix_form, variant_consistent, Variant,
};
use netimmse_core::{CMat, Result};

use crate::config::RunConfig;
use crate::parallel::PoolRunner;
use crate::report::{sha256_hex, Report, Row, SuiteInfo};

/// Tolerance for the closed-form versus log-det comparison.
pub const CROSS_ORACLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Verify,
    Gradients,
    Cuts,
    Example1,
    OptimizePrecoder,
}

impl Command {
    pub fn label(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Gradients => "gradients",
            Command::Cuts => "cuts",
            Command::Example1 => "example1",
            Command::OptimizePrecoder => "optimize-precoder",
        }
    }
}

/// Runs `command`; computational errors end up in the report, never as a
/// partial silent result.
pub fn run(cfg: &RunConfig, config_text: &str, command: Command) -> Report {
    let mut report = Report::new(command.label(), config_text);
    let pool;
    let runner: &dyn BlockRunner = if cfg.engine.workers > 1 {
        match PoolRunner::new(cfg.engine.workers) {
            Ok(p) => {
                pool = p;
                &pool
            }
            Err(e) => {
                report.error = Some(format!("cannot start {} workers: {e}", cfg.engine.workers));
                return report;
            }
        }
    } else {
        &SEQUENTIAL
    };
    let engine = Engine {
        method: cfg.engine.method,
        runner,
    };
    report.header = header(cfg);
    let outcome = match command {
        Command::Verify => verify(cfg, &engine, &mut report),
        Command::Gradients => gradients(cfg, &engine, &mut report),
        Command::Cuts => cuts(cfg, &engine, &mut report),
        Command::Example1 => example1(cfg, &mut report),
        Command::OptimizePrecoder => optimize(cfg, &engine, &mut report),
    };
    if let Err(e) = outcome {
        report.error = Some(e.to_string());
    }
    report
}

fn header(cfg: &RunConfig) -> Vec<String> {
    let t = &cfg.topology;
    let method = match cfg.engine.method {
        Method::Quadrature { nodes } => match nodes {
            Some(n) => format!("quadrature, {n} nodes"),
            None => "quadrature, default nodes".into(),
        },
        Method::MonteCarlo { samples, seed } => format!("monte-carlo, {samples} samples, seed {seed}"),
    };
    let input = match &cfg.input {
        InputDistribution::Gaussian { dim } => format!("gaussian dim {dim}"),
        d => format!("discrete, {} points, dim {}", d.as_discrete().map_or(0, |x| x.support().len()), d.dim()),
    };
    vec![
        format!(
            "model: {} vertices, {} edges, {} inputs, {} outputs, {:?} form",
            t.vertices().len(),
            t.edge_count(),
            cfg.n_in,
            cfg.n_out,
            cfg.engine.form
        ),
        format!("input: {input}"),
        format!("engine: {method}"),
        format!("seed: {}", cfg.seed),
        format!("units: {} in report, nats in csv", cfg.units.label()),
    ]
}

fn matrix_digest(ms: &[&CMat]) -> String {
    let mut bytes = Vec::new();
    for m in ms {
        bytes.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
        bytes.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
        for v in m.iter() {
            bytes.extend_from_slice(&v.re.to_le_bytes());
            bytes.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    sha256_hex(&bytes)
}

fn factors_digest(f: &Factors) -> String {
    matrix_digest(&[&f.a, &f.g, &f.b])
}

fn suite(report: &mut Report, name: &str, digest: String, start: Instant) {
    report.suites.push(SuiteInfo {
        suite: name.into(),
        inputs_digest: digest,
        runtime: start.elapsed(),
    });
}

fn estimate_label(e: Estimate) -> String {
    match e {
        Estimate::ClosedForm => "closed form".into(),
        Estimate::Quadrature { nodes } => format!("quadrature {nodes} nodes"),
        Estimate::MonteCarlo { samples, seed } => format!("monte-carlo {samples} samples seed {seed}"),
    }
}

fn oracle_options(cfg: &RunConfig) -> OracleOptions {
    OracleOptions {
        step: cfg.tolerances.step,
        richardson: cfg.tolerances.richardson,
    }
}

/// Monte-Carlo oracles are judged normwise, quadrature ones entrywise.
fn gradient_rows(report: &mut Report, suite: &str, t: &TargetReport, monte_carlo: bool, tol: f64) {
    let id = format!("grad-{}", t.cut.label());
    let label = t.target.label();
    let cf = &t.closed_form;
    let or = &t.oracle.value;
    for i in 0..cf.nrows() {
        for j in 0..cf.ncols() {
            let rel = relative_error(cf, or, i, j);
            let row = Row::new(suite, &id, label)
                .entry(i, j)
                .closed(cf[(i, j)])
                .oracle(or[(i, j)])
                .errors(Some((cf[(i, j)] - or[(i, j)]).norm()), Some(rel));
            report.push(if monte_carlo { row } else { row.check(rel < tol) });
        }
    }
    if monte_carlo {
        let d = &t.discrepancy;
        report.push(
            Row::new(suite, &format!("{id}-norm"), label)
                .errors(Some(d.max_abs), Some(d.norm_rel))
                .check(d.norm_rel < tol),
        );
    }
    if let Some(gap) = t.oracle.richardson_gap() {
        report.push(Row::new(suite, &format!("{id}-richardson"), label).errors(Some(gap), None));
    }
}

fn verify(cfg: &RunConfig, engine: &Engine<'_>, report: &mut Report) -> Result<()> {
    let start = Instant::now();
    let model = cfg.model()?;
    let f = &model.factors;
    let mc = engine.is_monte_carlo();
    let tol = if mc { cfg.tolerances.mc_rel } else { cfg.tolerances.gradient_rel };
    let opts = VerifyOptions {
        oracle: oracle_options(cfg),
        rel_tolerance: tol,
    };
    let g = verify_gradients(f, &cfg.input, engine, opts)?;
    let s = "verify";
    let mi = &g.mutual_information;
    report.push(
        Row::new(s, "mutual-information", "nats")
            .closed_real(mi.nats)
            .errors(mi.std_err, None),
    );
    report.push(Row::new(s, "mi-bounds", "nats").closed_real(mi.nats).check(mi.within_bounds(&cfg.input)));
    mmse_rows(report, s, &g.mmse, &cfg.input);
    for t in &g.targets {
        gradient_rows(report, s, t, mc, tol);
    }
    report.notes.push(format!(
        "I(x;z) = {:.12} {} ({})",
        cfg.units.convert(mi.nats),
        cfg.units.label(),
        estimate_label(mi.estimate)
    ));
    if let Some((t, (i, j), rel)) = g.worst() {
        report.notes.push(format!("worst entry {} ({i},{j}) rel_err {rel:e}", t.label()));
    }
    suite(report, s, factors_digest(f), start);
    Ok(())
}

fn mmse_rows(report: &mut Report, s: &str, e: &netimmse_core::estimator::MmseMatrix, dist: &InputDistribution) {
    let inv = e.invariants(dist);
    report.push(
        Row::new(s, "mmse-hermitian", "E")
            .errors(Some(inv.hermitian_defect), None)
            .check(inv.hermitian_defect <= HERMITIAN_TOLERANCE),
    );
    report.push(
        Row::new(s, "mmse-psd", "E")
            .closed_real(inv.min_eigenvalue)
            .check(inv.min_eigenvalue >= PSD_FLOOR),
    );
    report.push(
        Row::new(s, "mmse-prior-order", "E")
            .closed_real(inv.prior_gap_min_eigenvalue)
            .errors(Some(inv.noise_allowance), None)
            .check(inv.prior_order_holds()),
    );
}

/// Seeded complex-normal direction with the shape of `like`.
fn direction(seed: u64, k: u64, like: &CMat) -> CMat {
    let mut s = StreamFactory::new(seed).stream(k);
    CMat::from_fn(like.nrows(), like.ncols(), |_, _| s.complex_normal())
}

fn gradients(cfg: &RunConfig, engine: &Engine<'_>, report: &mut Report) -> Result<()> {
    let start = Instant::now();
    let model = cfg.model()?;
    let f = &model.factors;
    let s = "gradients";
    let (mi, e) = information_and_mmse(&f.system(), &cfg.input, engine)?;
    let closed = closed_form_gradients(f, &e)?;
    report.push(
        Row::new(s, "mutual-information", "nats")
            .closed_real(mi.nats)
            .errors(mi.std_err, None),
    );
    mmse_rows(report, s, &e, &cfg.input);
    let tol = if engine.is_monte_carlo() { cfg.tolerances.mc_rel } else { cfg.tolerances.gradient_rel };
    for (k, t) in Target::ALL.into_iter().enumerate() {
        let g = closed.get(t);
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                report.push(Row::new(s, "closed-form", t.label()).entry(i, j).closed(g[(i, j)]));
            }
        }
        let dir = direction(cfg.seed, k as u64, t.of(f));
        let d = directional_check(f, Cut::Full, &cfg.input, t, &dir, g, engine, cfg.tolerances.step)?;
        let rel = d.rel_error();
        report.push(
            Row::new(s, "directional", t.label())
                .closed_real(d.predicted)
                .oracle_real(d.finite_difference)
                .errors(Some((d.predicted - d.finite_difference).abs()), Some(rel))
                .check(rel < tol),
        );
    }
    if matches!(cfg.input, InputDistribution::Gaussian { .. }) {
        for t in Target::ALL {
            let reference = logdet_gradient(Cut::Full, t, f)?;
            let d = compare(closed.get(t), &reference);
            report.push(
                Row::new(s, "gaussian-logdet", t.label())
                    .entry(d.worst.0, d.worst.1)
                    .closed(closed.get(t)[d.worst])
                    .oracle(reference[d.worst])
                    .errors(Some(d.max_abs), Some(d.max_rel))
                    .check(d.max_rel < CROSS_ORACLE_TOLERANCE),
            );
        }
    }
    report.notes.push(format!(
        "I(x;z) = {:.12} {} ({})",
        cfg.units.convert(mi.nats),
        cfg.units.label(),
        estimate_label(mi.estimate)
    ));
    suite(report, s, factors_digest(f), start);
    Ok(())
}

fn cuts(cfg: &RunConfig, engine: &Engine<'_>, report: &mut Report) -> Result<()> {
    let model = cfg.model()?;
    let f = &model.factors;
    let mc = engine.is_monte_carlo();
    let tol = if mc { cfg.tolerances.mc_rel } else { cfg.tolerances.gradient_rel };
    for cut in [Cut::Source, Cut::Mid] {
        let start = Instant::now();
        let s = cut.label().to_string();
        let rec = cut_analysis(cut, f, &cfg.input, engine)?;
        report.push(
            Row::new(&s, "mutual-information", "nats")
                .closed_real(rec.mutual_information.nats)
                .errors(rec.mutual_information.std_err, None),
        );
        mmse_rows(report, &s, &rec.mmse, &cfg.input);
        for (t, g) in &rec.gradients {
            let oracle = grad_oracle(f, cut, &cfg.input, *t, engine, oracle_options(cfg))?;
            let tr = TargetReport::new(cut, *t, g.clone(), oracle, tol);
            gradient_rows(report, &s, &tr, mc, tol);
        }
        report.notes.push(format!(
            "{}: I = {:.12} {}",
            cut.label(),
            cfg.units.convert(rec.mutual_information.nats),
            cfg.units.label()
        ));
        let digest = factors_digest(f);
        suite(report, &s, digest, start);
    }
    Ok(())
}

fn example1(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    let start = Instant::now();
    let s = "example1";
    let tol = cfg.tolerances.psi_abs;
    let psi = psi11_matches_matrix_form(cfg.seed, cfg.example1_draws, tol)?;
    for d in &psi.draws {
        let err = d.derived_discrepancy();
        report.push(
            Row::new(s, "psi11-derived", "full")
                .entry(d.draw as usize, 0)
                .closed(d.derived)
                .oracle(d.matrix)
                .errors(Some(err), None)
                .check(err < tol),
        );
    }
    for d in &psi.draws {
        report.push(
            Row::new(s, "psi11-printed", "full")
                .entry(d.draw as usize, 0)
                .closed(d.printed)
                .oracle(d.matrix)
                .errors(Some(d.discrepancy()), None),
        );
    }
    for v in [Variant::Full, Variant::NoE3, Variant::NoE2E5] {
        let a = audit_terms(v);
        report.push(
            Row::new(s, "term-audit", v.label())
                .closed_real(a.printed_terms as f64)
                .oracle_real(a.expected_terms as f64)
                .errors(Some((a.missing.len() + a.extra.len()) as f64), None),
        );
        if v != Variant::Full {
            report.push(Row::new(s, "variant-consistent", v.label()).check(variant_consistent(v)));
        }
    }
    report.push(
        Row::new(s, "erratum-explained", "full")
            .errors(Some(psi.max_discrepancy()), None)
            .check(psi.explained()),
    );
    report.notes.push(format!(
        "printed expansion agrees with matrix form: {} (max discrepancy {:e})",
        psi.printed_agrees(),
        psi.max_discrepancy()
    ));
    report.notes.push(format!(
        "derived expansion max discrepancy {:e} over {} draws",
        psi.max_derived_discrepancy(),
        psi.draws.len()
    ));
    suite(report, s, sha256_hex(format!("seed {} draws {}", cfg.seed, cfg.example1_draws).as_bytes()), start);
    Ok(())
}

fn optimize(cfg: &RunConfig, engine: &Engine<'_>, report: &mut Report) -> Result<()> {
    let start = Instant::now();
    let model = cfg.model()?;
    let s = "ascent";
    let traj = precoder_ascent(&model.factors, &cfg.input, engine, cfg.ascent)?;
    let mut prev: Option<f64> = None;
    for p in &traj.points {
        let row = Row::new(s, "iteration", "nats")
            .entry(p.iteration, 0)
            .closed_real(p.nats)
            .oracle_real(p.step);
        report.push(match prev {
            Some(q) => row.errors(Some(p.nats - q), None).check(p.nats >= q),
            None => row,
        });
        prev = Some(p.nats);
    }
    if let Some(e) = &traj.aborted {
        report.error = Some(format!("ascent stopped early: {e}"));
    }
    let last = traj.last();
    report.notes.push(format!(
        "final I = {:.12} {} after {} iterations",
        cfg.units.convert(last.nats),
        cfg.units.label(),
        last.iteration
    ));
    suite(report, s, factors_digest(&model.factors), start);
    Ok(())
}
