//! Check records, the CSV table and the human-readable report.
//!
//! CSV columns, one row per check:
//!
//! `suite, check_id, target, entry_row, entry_col, closed_form_re,
//! closed_form_im, oracle_re, oracle_im, abs_err, rel_err, pass`
//!
//! Values are in nats. Floats use Rust's shortest round-trip exponent form
//! (`{:e}`), missing values are empty, and `pass` is `true`, `false` or
//! `info` (recorded but not judged).

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use netimmse_core::C64;
use sha2::{Digest, Sha256};

pub const CSV_HEADER: [&str; 12] = [
    "suite",
    "check_id",
    "target",
    "entry_row",
    "entry_col",
    "closed_form_re",
    "closed_form_im",
    "oracle_re",
    "oracle_im",
    "abs_err",
    "rel_err",
    "pass",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Info,
}

impl Verdict {
    pub fn judged(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Verdict::Pass => "true",
            Verdict::Fail => "false",
            Verdict::Info => "info",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub suite: String,
    pub check_id: String,
    pub target: String,
    pub entry: Option<(usize, usize)>,
    pub closed_form: Option<C64>,
    pub oracle: Option<C64>,
    pub abs_err: Option<f64>,
    pub rel_err: Option<f64>,
    pub verdict: Verdict,
}

impl Row {
    pub fn new(suite: &str, check_id: &str, target: &str) -> Self {
        Self {
            suite: suite.into(),
            check_id: check_id.into(),
            target: target.into(),
            entry: None,
            closed_form: None,
            oracle: None,
            abs_err: None,
            rel_err: None,
            verdict: Verdict::Info,
        }
    }

    pub fn entry(mut self, i: usize, j: usize) -> Self {
        self.entry = Some((i, j));
        self
    }

    pub fn closed(mut self, v: C64) -> Self {
        self.closed_form = Some(v);
        self
    }

    pub fn closed_real(self, v: f64) -> Self {
        self.closed(C64::new(v, 0.0))
    }

    pub fn oracle(mut self, v: C64) -> Self {
        self.oracle = Some(v);
        self
    }

    pub fn oracle_real(self, v: f64) -> Self {
        self.oracle(C64::new(v, 0.0))
    }

    pub fn errors(mut self, abs: Option<f64>, rel: Option<f64>) -> Self {
        self.abs_err = abs;
        self.rel_err = rel;
        self
    }

    pub fn verdict(mut self, v: Verdict) -> Self {
        self.verdict = v;
        self
    }

    pub fn check(self, pass: bool) -> Self {
        self.verdict(Verdict::judged(pass))
    }

    fn fields(&self) -> [String; 12] {
        let f = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let (r, c) = match self.entry {
            Some((r, c)) => (r.to_string(), c.to_string()),
            None => (String::new(), String::new()),
        };
        [
            self.suite.clone(),
            self.check_id.clone(),
            self.target.clone(),
            r,
            c,
            f(self.closed_form.map(|v| v.re)),
            f(self.closed_form.map(|v| v.im)),
            f(self.oracle.map(|v| v.re)),
            f(self.oracle.map(|v| v.im)),
            f(self.abs_err),
            f(self.rel_err),
            self.verdict.label().into(),
        ]
    }
}

/// A suite's inputs, identified by digest in the report.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteInfo {
    pub suite: String,
    pub inputs_digest: String,
    pub runtime: Duration,
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub command: String,
    pub config_digest: String,
    /// Model and run description lines.
    pub header: Vec<String>,
    pub rows: Vec<Row>,
    /// Free-form result lines (values in report units).
    pub notes: Vec<String>,
    pub suites: Vec<SuiteInfo>,
    /// A computational error that stopped the run.
    pub error: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

impl Report {
    pub fn new(command: &str, config_text: &str) -> Self {
        Self {
            command: command.into(),
            config_digest: sha256_hex(config_text.as_bytes()),
            ..Self::default()
        }
    }

    pub fn push(&mut self, row: Row) {
        self.rows.push(row);
    }

    /// True when no check failed and no error occurred.
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.rows.iter().all(|r| r.verdict != Verdict::Fail)
    }

    pub fn count(&self, v: Verdict) -> usize {
        self.rows.iter().filter(|r| r.verdict == v).count()
    }

    pub fn csv(&self) -> io::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record(r.fields())?;
        }
        w.into_inner().map_err(|e| e.into_error())
    }

    /// The report body, deterministic for a given configuration.
    pub fn body(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "netimmse {} {}", env!("CARGO_PKG_VERSION"), self.command);
        let _ = writeln!(s, "config sha256 {}", self.config_digest);
        for h in &self.header {
            let _ = writeln!(s, "{h}");
        }
        s.push('\n');
        let mut suites: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !suites.contains(&r.suite.as_str()) {
                suites.push(&r.suite);
            }
        }
        for suite in suites {
            let rows = self.rows.iter().filter(|r| r.suite == suite);
            let (mut pass, mut fail, mut info) = (0, 0, 0);
            let mut worst: Option<&Row> = None;
            for r in rows {
                match r.verdict {
                    Verdict::Pass => pass += 1,
                    Verdict::Fail => fail += 1,
                    Verdict::Info => info += 1,
                }
                if r.verdict != Verdict::Info && r.rel_err.is_some_and(|e| worst.and_then(|w| w.rel_err).is_none_or(|w| e > w)) {
                    worst = Some(r);
                }
            }
            let _ = write!(s, "suite {suite}: {pass} passed, {fail} failed, {info} info");
            if let Some(w) = worst {
                let _ = write!(s, "; worst rel_err {:e} at {} {}", w.rel_err.unwrap_or(0.0), w.check_id, w.target);
                if let Some((i, j)) = w.entry {
                    let _ = write!(s, " ({i},{j})");
                }
            }
            s.push('\n');
            for r in self.rows.iter().filter(|r| r.suite == suite && r.verdict == Verdict::Fail) {
                let _ = writeln!(
                    s,
                    "  FAIL {} {}{} rel_err {}",
                    r.check_id,
                    r.target,
                    r.entry.map(|(i, j)| format!(" ({i},{j})")).unwrap_or_default(),
                    r.rel_err.map(|e| format!("{e:e}")).unwrap_or_else(|| "-".into())
                );
            }
        }
        for si in &self.suites {
            let _ = writeln!(s, "inputs {} sha256 {}", si.suite, si.inputs_digest);
        }
        for n in &self.notes {
            let _ = writeln!(s, "{n}");
        }
        if let Some(e) = &self.error {
            let _ = writeln!(s, "error: {e}");
        }
        let _ = writeln!(
            s,
            "result: {} ({} checks, {} failed)",
            if self.passed() { "PASS" } else { "FAIL" },
            self.count(Verdict::Pass) + self.count(Verdict::Fail),
            self.count(Verdict::Fail)
        );
        s
    }

    /// Body plus the timing trailer.
    pub fn text(&self, total: Duration) -> String {
        let mut s = self.body();
        s.push_str("--- timing (excluded from report body) ---\n");
        for si in &self.suites {
            let _ = writeln!(s, "{} {:.3}s", si.suite, si.runtime.as_secs_f64());
        }
        let _ = writeln!(s, "total {:.3}s", total.as_secs_f64());
        s
    }

    /// Writes `<command>.csv` and `<command>.report.txt` under `dir`.
    pub fn write(&self, dir: &Path, total: Duration) -> io::Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{}.csv", self.command));
        let txt_path = dir.join(format!("{}.report.txt", self.command));
        std::fs::write(&csv_path, self.csv()?)?;
        std::fs::write(&txt_path, self.text(total))?;
        Ok((csv_path, txt_path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_formats_missing_and_exponent_values() {
        let mut r = Report::new("verify", "x = 1");
        r.push(
            Row::new("verify", "grad", "A")
                .entry(0, 1)
                .closed(C64::new(1.5e-3, -2.0))
                .errors(Some(0.0), None)
                .check(true),
        );
        r.push(Row::new("verify", "mi", "nats"));
        let text = String::from_utf8(r.csv().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert_eq!(lines[1], "verify,grad,A,0,1,1.5e-3,-2e0,,,0e0,,true");
        assert_eq!(lines[2], "verify,mi,nats,,,,,,,,,info");
    }

    #[test]
    fn failures_and_errors_fail_the_report() {
        let mut r = Report::new("verify", "");
        r.push(Row::new("s", "c", "t").check(true));
        assert!(r.passed());
        r.error = Some("boom".into());
        assert!(!r.passed());
        assert!(r.body().contains("error: boom"));
        r.error = None;
        r.push(Row::new("s", "c", "t").check(false));
        assert!(!r.passed());
        assert!(r.body().contains("result: FAIL (2 checks, 1 failed)"));
    }

    #[test]
    fn timing_stays_out_of_the_body() {
        let mut r = Report::new("cuts", "a");
        r.suites.push(SuiteInfo {
            suite: "s".into(),
            inputs_digest: sha256_hex(b"m"),
            runtime: Duration::from_millis(1234),
        });
        let body = r.body();
        assert!(!body.contains("1.234"));
        assert!(r.text(Duration::from_secs(2)).starts_with(&body));
    }
}
