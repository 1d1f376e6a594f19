use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentPoint;
use crate::driver::Variant;
use crate::error::{Error, Result};

/// The CSV columns, in order.
pub const CSV_COLUMNS: [&str; 19] = [
    "variant",
    "n",
    "m",
    "eps",
    "p",
    "seed",
    "rounds",
    "msgs_total",
    "msgs_pi",
    "msgs_mest",
    "msgs_lmmst",
    "msgs_flight",
    "msgs_final",
    "EH",
    "El",
    "maxLij",
    "oracle_match",
    "failures",
    "wall_ms",
];

/// One run: a point of an experiment and a seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub point: ExperimentPoint,
    pub variant: Variant,
    pub n: usize,
    pub m: usize,
    /// `None` for `v1`.
    pub eps: Option<f64>,
    /// Outermost sampling probability; `None` when `v2` starts in its base case.
    pub p: Option<f64>,
    pub seed: u64,
    pub rounds: u64,
    pub msgs_total: u64,
    /// Messages by step scope: `pi`, `m-est`, `lm-mst`, `flight`, `final`.
    pub msgs_by_step: BTreeMap<String, u64>,
    pub msgs_by_protocol: BTreeMap<String, u64>,
    /// Outermost `|E(H)|` and `|E_l|`.
    pub eh: Option<usize>,
    pub el: Option<usize>,
    /// Largest `|L^i_j|` decoded at any level.
    pub max_lij: Option<usize>,
    pub depth: usize,
    pub oracle_match: bool,
    /// Whether the outermost light-edge set equals the brute-force one, when checked.
    pub flight_match: Option<bool>,
    /// Flagged attempts: protocol errors or leaders left with undecoded edges.
    pub failures: u64,
    pub attempts: u64,
    pub sample_failures: u64,
    pub timeout: bool,
    /// Last error seen, if any.
    pub error: Option<String>,
    pub wall_ms: u64,
}

impl ExperimentRecord {
    pub fn msgs_step(&self, step: &str) -> u64 {
        self.msgs_by_step.get(step).copied().unwrap_or(0)
    }

    fn csv_row(&self) -> Vec<String> {
        use crate::driver::{STEP_FINAL, STEP_FLIGHT, STEP_LMMST, STEP_MEST, STEP_PI};
        let opt = |x: Option<String>| x.unwrap_or_default();
        vec![
            self.variant.to_string(),
            self.n.to_string(),
            self.m.to_string(),
            opt(self.eps.map(|e| e.to_string())),
            opt(self.p.map(|p| format!("{p:.6}"))),
            self.seed.to_string(),
            self.rounds.to_string(),
            self.msgs_total.to_string(),
            self.msgs_step(STEP_PI).to_string(),
            self.msgs_step(STEP_MEST).to_string(),
            self.msgs_step(STEP_LMMST).to_string(),
            self.msgs_step(STEP_FLIGHT).to_string(),
            self.msgs_step(STEP_FINAL).to_string(),
            opt(self.eh.map(|x| x.to_string())),
            opt(self.el.map(|x| x.to_string())),
            opt(self.max_lij.map(|x| x.to_string())),
            self.oracle_match.to_string(),
            self.failures.to_string(),
            self.wall_ms.to_string(),
        ]
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Header line, then one row per record.
pub fn write_csv(records: &[ExperimentRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS).map_err(csv_error)?;
    for r in records {
        w.write_record(r.csv_row()).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json(records: &[ExperimentRecord], out: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(out, records)?;
    Ok(())
}

pub fn read_json(text: &str) -> Result<Vec<ExperimentRecord>> {
    Ok(serde_json::from_str(text)?)
}

/// Appends records as JSON lines.
pub fn append_jsonl(records: &[ExperimentRecord], path: &Path) -> Result<()> {
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?);
    }
    Ok(out)
}

/// Records that report a wrong answer without a flagged failure.
pub fn silent_failures(records: &[ExperimentRecord]) -> Vec<&ExperimentRecord> {
    records.iter().filter(|r| !r.oracle_match && r.failures == 0 && !r.timeout).collect()
}

/// Gnuplot data blocks: mean messages against `m` (one block per variant,
/// `n` and `eps`) and against `n` (one block per variant, density and `eps`).
pub fn write_gnuplot(records: &[ExperimentRecord], dir: &Path) -> Result<()> {
    type Key = (String, String, String);
    let mut by_m: BTreeMap<Key, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    let mut by_n: BTreeMap<Key, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    let eps = |r: &ExperimentRecord| r.eps.map_or("-".to_string(), |e| e.to_string());
    for r in records.iter().filter(|r| !r.timeout) {
        by_m.entry((r.variant.to_string(), r.n.to_string(), eps(r)))
            .or_default()
            .entry(r.m)
            .or_default()
            .push(r.msgs_total as f64);
        by_n.entry((r.variant.to_string(), r.point.density.text.clone(), eps(r)))
            .or_default()
            .entry(r.n)
            .or_default()
            .push(r.msgs_total as f64);
    }
    let write = |name: &str,
                 what: &str,
                 blocks: &BTreeMap<Key, BTreeMap<usize, Vec<f64>>>,
                 other: &dyn Fn(usize, &Key) -> f64|
     -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(name))?);
        for ((variant, fixed, e), rows) in blocks {
            writeln!(f, "# variant={variant} {what}={fixed} eps={e}")?;
            writeln!(f, "# x mean_msgs msgs_per_sqrt_mn runs")?;
            for (&x, v) in rows {
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                let root = other(x, &(variant.clone(), fixed.clone(), e.clone()));
                writeln!(f, "{x} {mean:.1} {:.4} {}", mean / root, v.len())?;
            }
            writeln!(f, "\n")?;
        }
        Ok(())
    };
    // Both normalise by sqrt(m n); `m` per row of the n-sweep is averaged from the records.
    let mean_m: BTreeMap<(String, usize), f64> = {
        let mut acc: BTreeMap<(String, usize), (f64, f64)> = BTreeMap::new();
        for r in records {
            let e = acc.entry((r.point.density.text.clone(), r.n)).or_default();
            e.0 += r.m as f64;
            e.1 += 1.0;
        }
        acc.into_iter().map(|(k, (s, c))| (k, s / c)).collect()
    };
    write("msgs_vs_m.dat", "n", &by_m, &|m, k| (m as f64 * k.1.parse::<f64>().unwrap_or(1.0)).sqrt())?;
    write("msgs_vs_n.dat", "m", &by_n, &|n, k| {
        (mean_m.get(&(k.1.clone(), n)).copied().unwrap_or(1.0) * n as f64).sqrt()
    })?;
    Ok(())
}
