//! Replicated method comparisons and their result tables.

use std::fmt::Write as _;
use std::io::Write;
use std::time::Duration;

use anyhow::Result;
use deco_core::datagen::{format_real, Dataset};
use deco_core::deco::{DecoConfig, FitResult, Method, StageTimes};
use deco_core::eval::{compute_metrics, prediction_mse};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::data::{observed_data, replication_data};

/// Outcome of one method on one replication.
#[derive(Clone, Debug, PartialEq)]
pub struct RepRecord {
    pub method: Method,
    pub m: usize,
    pub rep: usize,
    pub mse: Option<f64>,
    pub fp: Option<usize>,
    pub fn_: Option<usize>,
    pub sign_consistent: Option<bool>,
    pub pred_mse: Option<f64>,
    pub runtime: Duration,
    pub stages: StageTimes,
    pub error: Option<String>,
}

/// Column means over the successful replications of one (method, m) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub method: Method,
    pub m: usize,
    pub ok: usize,
    pub failed: usize,
    pub mse: Option<f64>,
    pub fp: Option<f64>,
    pub fn_: Option<f64>,
    pub sign_consistent: Option<f64>,
    pub pred_mse: Option<f64>,
    pub runtime_ms: Option<f64>,
    pub stage_ms: Option<[f64; 6]>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub records: Vec<RepRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentOutput {
    pub fn failed(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }
}

/// The (method, m) cells of the experiment in output order. Methods that
/// ignore the partition get a single cell with `m = 1`.
pub fn cells(cfg: &ExperimentConfig) -> Vec<(Method, usize)> {
    let mut out = Vec::new();
    for &method in &cfg.methods {
        if method.uses_partition() {
            out.extend(cfg.m_values.iter().map(|&m| (method, m)));
        } else {
            out.push((method, 1));
        }
    }
    out
}

fn run_cell(method: Method, m: usize, rep: usize, seed: u64, data: &Dataset, base: &DecoConfig) -> RepRecord {
    let cfg = DecoConfig {
        m,
        seed,
        ..base.clone()
    };
    let mut record = RepRecord {
        method,
        m,
        rep,
        mse: None,
        fp: None,
        fn_: None,
        sign_consistent: None,
        pred_mse: None,
        runtime: Duration::ZERO,
        stages: StageTimes::default(),
        error: None,
    };
    let fit: FitResult = match method.run(data, &cfg) {
        Ok(f) => f,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    record.runtime = fit.runtime();
    record.stages = fit.stage_times;
    if let Some(truth) = &data.beta_true {
        match compute_metrics(&fit.beta, truth) {
            Ok(mt) => {
                record.mse = Some(mt.mse);
                record.fp = Some(mt.fp);
                record.fn_ = Some(mt.fn_);
                record.sign_consistent = Some(mt.sign_consistent);
            }
            Err(e) => record.error = Some(e.to_string()),
        }
    }
    if let Some(h) = &data.holdout {
        match fit.predict(&h.x) {
            Ok(pred) => record.pred_mse = Some(prediction_mse(&pred, &h.y)),
            Err(e) => record.error = Some(e.to_string()),
        }
    }
    record
}

/// Runs every cell on every replication. Replications run in parallel on
/// the current rayon pool; records come back in (cell, replication) order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let observed = observed_data(cfg)?;
    cfg.validate(observed.as_ref().map(Dataset::p))?;
    let cells = cells(cfg);

    let per_rep: Vec<Vec<RepRecord>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let seed = cfg.rep_seed(rep);
            match replication_data(cfg, rep, observed.as_ref()) {
                Ok(data) => cells
                    .iter()
                    .map(|&(method, m)| run_cell(method, m, rep, seed, &data, &cfg.deco))
                    .collect(),
                Err(e) => cells
                    .iter()
                    .map(|&(method, m)| RepRecord {
                        method,
                        m,
                        rep,
                        mse: None,
                        fp: None,
                        fn_: None,
                        sign_consistent: None,
                        pred_mse: None,
                        runtime: Duration::ZERO,
                        stages: StageTimes::default(),
                        error: Some(format!("data: {e:#}")),
                    })
                    .collect(),
            }
        })
        .collect();

    let mut records = Vec::with_capacity(cells.len() * cfg.replications);
    for c in 0..cells.len() {
        records.extend(per_rep.iter().map(|r| r[c].clone()));
    }
    let aggregates = cells
        .iter()
        .map(|&(method, m)| aggregate(method, m, records.iter().filter(|r| r.method == method && r.m == m)))
        .collect();
    Ok(ExperimentOutput { records, aggregates })
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    let v = v?;
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

fn ms(d: Duration) -> u64 {
    d.as_millis() as u64
}

fn stage_ms(s: &StageTimes) -> [u64; 6] {
    [
        ms(s.gram),
        ms(s.eig),
        ms(s.decorrelate),
        ms(s.worker_fit),
        ms(s.merge),
        ms(s.refine),
    ]
}

fn aggregate<'a>(method: Method, m: usize, rows: impl Iterator<Item = &'a RepRecord>) -> Aggregate {
    let rows: Vec<&RepRecord> = rows.collect();
    let ok: Vec<&RepRecord> = rows.iter().copied().filter(|r| r.error.is_none()).collect();
    let stage_ms = if ok.is_empty() {
        None
    } else {
        let mut acc = [0.0; 6];
        for r in &ok {
            for (a, v) in acc.iter_mut().zip(stage_ms(&r.stages)) {
                *a += v as f64;
            }
        }
        Some(acc.map(|a| a / ok.len() as f64))
    };
    Aggregate {
        method,
        m,
        ok: ok.len(),
        failed: rows.len() - ok.len(),
        mse: mean_of(ok.iter().map(|r| r.mse)),
        fp: mean_of(ok.iter().map(|r| r.fp.map(|v| v as f64))),
        fn_: mean_of(ok.iter().map(|r| r.fn_.map(|v| v as f64))),
        sign_consistent: mean_of(ok.iter().map(|r| r.sign_consistent.map(|b| f64::from(u8::from(b))))),
        pred_mse: mean_of(ok.iter().map(|r| r.pred_mse)),
        runtime_ms: mean_of(ok.iter().map(|r| Some(ms(r.runtime) as f64))),
        stage_ms,
    }
}

pub const CSV_HEADER: [&str; 15] = [
    "method",
    "m",
    "rep",
    "mse",
    "fp",
    "fn",
    "sign_consistent",
    "pred_mse",
    "runtime_ms",
    "gram_ms",
    "eig_ms",
    "decorrelate_ms",
    "worker_fit_ms",
    "merge_ms",
    "refine_ms",
];

/// Header names that hold wall-clock measurements.
pub fn is_timing_column(name: &str) -> bool {
    name.ends_with("_ms")
}

fn opt<T>(v: Option<T>, f: impl FnOnce(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

/// Per-replication rows, then one `mean` row per cell.
pub fn write_results<W: Write>(out: &ExperimentOutput, w: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = CSV_HEADER.to_vec();
    header.push("error");
    csv.write_record(&header)?;
    for r in &out.records {
        let mut row = vec![
            r.method.name().to_string(),
            r.m.to_string(),
            r.rep.to_string(),
            opt(r.mse, format_real),
            opt(r.fp, |v| v.to_string()),
            opt(r.fn_, |v| v.to_string()),
            opt(r.sign_consistent, |b| u8::from(b).to_string()),
            opt(r.pred_mse, format_real),
        ];
        if r.error.is_none() {
            row.push(ms(r.runtime).to_string());
            row.extend(stage_ms(&r.stages).iter().map(u64::to_string));
        } else {
            row.extend(std::iter::repeat(String::new()).take(7));
        }
        row.push(r.error.clone().unwrap_or_default());
        csv.write_record(&row)?;
    }
    for a in &out.aggregates {
        let mut row = vec![
            a.method.name().to_string(),
            a.m.to_string(),
            "mean".to_string(),
            opt(a.mse, format_real),
            opt(a.fp, format_real),
            opt(a.fn_, format_real),
            opt(a.sign_consistent, format_real),
            opt(a.pred_mse, format_real),
            opt(a.runtime_ms, |v| format!("{}", v.round() as u64)),
        ];
        match a.stage_ms {
            Some(s) => row.extend(s.iter().map(|v| format!("{}", v.round() as u64))),
            None => row.extend(std::iter::repeat(String::new()).take(6)),
        }
        row.push(if a.failed > 0 {
            format!("{} of {} replications failed", a.failed, a.failed + a.ok)
        } else {
            String::new()
        });
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

/// Methods as columns, metrics as rows.
pub fn summary_table(out: &ExperimentOutput) -> String {
    let labels: Vec<String> = out
        .aggregates
        .iter()
        .map(|a| {
            if a.method.uses_partition() {
                format!("{} (m={})", a.method, a.m)
            } else {
                a.method.to_string()
            }
        })
        .collect();
    let width = labels.iter().map(String::len).max().unwrap_or(0).max(10) + 2;
    let mut s = String::new();
    let _ = write!(s, "{:<16}", "");
    for l in &labels {
        let _ = write!(s, "{l:>width$}");
    }
    s.push('\n');
    type Getter = fn(&Aggregate) -> Option<f64>;
    let rows: [(&str, Getter); 6] = [
        ("MSE", |a| a.mse),
        ("# FPs", |a| a.fp),
        ("# FNs", |a| a.fn_),
        ("Sign consistent", |a| a.sign_consistent),
        ("Pred. MSE", |a| a.pred_mse),
        ("Time (ms)", |a| a.runtime_ms),
    ];
    for (name, get) in rows {
        if out.aggregates.iter().all(|a| get(a).is_none()) {
            continue;
        }
        let _ = write!(s, "{name:<16}");
        for a in &out.aggregates {
            let cell = match get(a) {
                Some(v) if name.starts_with("Time") => format!("{v:.0}"),
                Some(v) => format!("{v:.3}"),
                None => "-".into(),
            };
            let _ = write!(s, "{cell:>width$}");
        }
        s.push('\n');
    }
    s
}
