//! Text artifacts: photon trace files, time-tag files and CSV tables.

use std::fmt::Write as _;

use qdyne::simulate::{PhotonTrace, TraceMeta};

use crate::error::{CliError, CliResult};

/// 17 significant digits; parses back to the same `f64`.
pub fn float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

pub fn write_trace(trace: &PhotonTrace) -> String {
    let mut out = String::with_capacity(16 + 4 * trace.counts.len());
    out.push_str("# qdyne photon trace: one count per measurement\n");
    if let Some(d) = &trace.meta.config_digest {
        let _ = writeln!(out, "# config_digest={d}");
    }
    let _ = writeln!(out, "spacing_s={} seed={}", float(trace.spacing), trace.meta.seed);
    for c in &trace.counts {
        let _ = writeln!(out, "{c}");
    }
    out
}

pub fn read_trace(text: &str) -> CliResult<PhotonTrace> {
    let bad = |line: usize, msg: String| CliError::Config(format!("trace line {line}: {msg}"));
    let mut digest = None;
    let mut header: Option<(f64, u64)> = None;
    let mut counts = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(d) = comment.trim().strip_prefix("config_digest=") {
                digest = Some(d.trim().to_string());
            }
            continue;
        }
        match header {
            None => {
                let mut spacing = None;
                let mut seed = None;
                for tok in line.split_whitespace() {
                    match tok.split_once('=') {
                        Some(("spacing_s", v)) => {
                            spacing = Some(v.parse::<f64>().map_err(|_| bad(i + 1, format!("bad spacing '{v}'")))?)
                        }
                        Some(("seed", v)) => {
                            seed = Some(v.parse::<u64>().map_err(|_| bad(i + 1, format!("bad seed '{v}'")))?)
                        }
                        _ => return Err(bad(i + 1, format!("unexpected header field '{tok}'"))),
                    }
                }
                match (spacing, seed) {
                    (Some(s), Some(k)) => header = Some((s, k)),
                    _ => return Err(bad(i + 1, "header must be 'spacing_s=<float> seed=<uint64>'".into())),
                }
            }
            Some(_) => counts.push(
                line.parse::<u32>()
                    .map_err(|_| bad(i + 1, format!("'{line}' is not a nonnegative integer count")))?,
            ),
        }
    }
    let (spacing, seed) = header.ok_or_else(|| CliError::Config("trace file has no header line".into()))?;
    let mut trace = PhotonTrace::new(counts, spacing, seed)?;
    trace.meta = TraceMeta {
        seed,
        config_digest: digest,
    };
    Ok(trace)
}

/// Binning of photon arrival times, all in integer nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Binning {
    pub tau_tilde: u64,
    pub offset: u64,
    pub window: u64,
    pub n_measurements: usize,
}

impl Binning {
    pub fn validate(&self) -> CliResult<()> {
        if self.tau_tilde == 0 {
            return Err(CliError::Config("tau_tilde must be at least 1 ns".into()));
        }
        if self.window == 0 || self.window > self.tau_tilde {
            return Err(CliError::Config(format!(
                "window length {} ns must lie in [1, tau_tilde = {}] ns",
                self.window, self.tau_tilde
            )));
        }
        Ok(())
    }
}

/// Count tags in `[jτ̃ + offset, jτ̃ + offset + window)` for each measurement `j`.
pub fn bin_timetags(text: &str, binning: &Binning) -> CliResult<Vec<u32>> {
    binning.validate()?;
    let mut counts = vec![0u32; binning.n_measurements];
    let mut last = 0u64;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let t: u64 = line.parse().map_err(|_| {
            CliError::Config(format!(
                "time tag line {}: '{line}' is not an integer ns timestamp",
                i + 1
            ))
        })?;
        if t < last {
            return Err(CliError::Config(format!(
                "time tag line {}: {t} ns precedes the previous tag {last} ns",
                i + 1
            )));
        }
        last = t;
        let Some(rel) = t.checked_sub(binning.offset) else {
            continue;
        };
        let j = rel / binning.tau_tilde;
        if j >= binning.n_measurements as u64 {
            continue;
        }
        if rel % binning.tau_tilde < binning.window {
            counts[j as usize] = counts[j as usize].saturating_add(1);
        }
    }
    Ok(counts)
}

/// A time in seconds as exact integer nanoseconds.
pub fn to_ns(seconds: f64, what: &str) -> CliResult<u64> {
    let ns = seconds * 1e9;
    let r = ns.round();
    if !(r >= 0.0) || r > 9.0e18 || (ns - r).abs() > 1e-6 * r.max(1.0) {
        return Err(CliError::Config(format!(
            "{what} = {seconds:e} s is not a whole number of nanoseconds"
        )));
    }
    Ok(r as u64)
}

/// Columns joined by commas, one row per line.
pub struct Csv {
    out: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv {
            out: format!("{}\n", header.join(",")),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.out.push_str(&fields.join(","));
        self.out.push('\n');
    }

    pub fn finish(self) -> String {
        self.out
    }
}

/// Rows of a numeric CSV with a header line.
pub fn read_csv(text: &str) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| CliError::Config("empty CSV".into()))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let rows = lines
        .map(|l| {
            l.split(',')
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| CliError::Config(format!("bad CSV number '{f}'")))
                })
                .collect::<CliResult<Vec<f64>>>()
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok((header, rows))
}
