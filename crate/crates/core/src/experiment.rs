//! Consistency experiments: a declarative grid of scenarios, replicated
//! selection runs, and the raw and summary CSV tables they produce.
//!
//! Output is a pure function of the configuration (including its seed); the
//! thread count only changes how fast it is produced.
//!
//! Replicate table columns:
//! `cell,n,p,p0,beta,design,error,replicate,seed,criterion,selected,size,correct,contains,screened,total,fit_term,penalty,rss,visited,identifiability`
//!
//! Summary table columns:
//! `cell,n,p,p0,beta,design,error,criterion,replicates,correct,p_correct,se,p_contains,p_screened,mean_size`

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{score, Criterion, ScoringContext};
use crate::datagen::{derive_seed, generate, identifiability_ratio, DesignKind, ErrorFamily, Scenario};
use crate::error::{Error, Result};
use crate::linalg::{fit_model, ModelIndexSet};
use crate::search::{
    backward_eliminate, default_max_size, exhaustive_search, forward_path, select_on_path, SearchBudget,
    SearchStrategy, DEFAULT_ENUMERATION_CAP,
};

pub const REPLICATE_HEADER: &str = "cell,n,p,p0,beta,design,error,replicate,seed,criterion,selected,size,correct,contains,screened,total,fit_term,penalty,rss,visited,identifiability";
pub const SUMMARY_HEADER: &str =
    "cell,n,p,p0,beta,design,error,criterion,replicates,correct,p_correct,se,p_contains,p_screened,mean_size";

/// Budget for the identifiability scan inside experiments.
const IDENTIFIABILITY_CAP: u128 = 100_000;
const IDENTIFIABILITY_SAMPLES: usize = 2_000;

/// How `p` follows `n` across the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PRule {
    /// `"500"`
    Fixed(usize),
    /// `"2n"`: `round(c n)`
    Multiple(f64),
    /// `"n^1.5"`: `floor(n^a)`
    Power(f64),
}

impl PRule {
    pub fn p_for(&self, n: usize) -> usize {
        match *self {
            PRule::Fixed(p) => p,
            PRule::Multiple(c) => (c * n as f64).round() as usize,
            PRule::Power(a) => (n as f64).powf(a).floor() as usize,
        }
    }
}

impl FromStr for PRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().replace(' ', "");
        let bad = || Error::config(format!("field `p_rule`: cannot parse '{s}' (use \"500\", \"2n\" or \"n^1.5\")"));
        if let Some(exp) = t.strip_prefix("n^") {
            let a: f64 = exp.parse().map_err(|_| bad())?;
            return if a > 0.0 && a.is_finite() { Ok(PRule::Power(a)) } else { Err(bad()) };
        }
        if let Some(c) = t.strip_suffix('n') {
            let c: f64 = if c.is_empty() { 1.0 } else { c.parse().map_err(|_| bad())? };
            return if c > 0.0 && c.is_finite() { Ok(PRule::Multiple(c)) } else { Err(bad()) };
        }
        t.parse::<usize>().map(PRule::Fixed).map_err(|_| bad())
    }
}

impl TryFrom<String> for PRule {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PRule> for String {
    fn from(r: PRule) -> String {
        r.to_string()
    }
}

impl fmt::Display for PRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PRule::Fixed(p) => write!(f, "{p}"),
            PRule::Multiple(c) => write!(f, "{c}n"),
            PRule::Power(a) => write!(f, "n^{a}"),
        }
    }
}

fn default_designs() -> Vec<DesignKind> {
    vec![DesignKind::IidNormal]
}

/// One experiment, read from a flat JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: Vec<usize>,
    pub p_rule: PRule,
    pub p0: Vec<usize>,
    pub beta: Vec<f64>,
    pub errors: Vec<ErrorFamily>,
    #[serde(default = "default_designs")]
    pub designs: Vec<DesignKind>,
    pub replicates: usize,
    pub criteria: Vec<Criterion>,
    pub strategy: SearchStrategy,
    /// Size cap; defaults per cell to `min(p, max(10, 2 p0))`.
    #[serde(default)]
    pub max_size: Option<usize>,
    #[serde(default)]
    pub enumeration_cap: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<String>,
    /// When set, each replicate also records `min Delta(s) / (p0 ln p)` over
    /// wrong models with `|s| <= floor(k p0)`.
    #[serde(default)]
    pub identifiability_k: Option<f64>,
}

/// One point of the scenario grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub n: usize,
    pub p: usize,
    pub p0: usize,
    pub beta: f64,
    pub design: DesignKind,
    pub error: ErrorFamily,
}

impl Cell {
    pub fn scenario(&self, seed: u64) -> Scenario {
        Scenario {
            n: self.n,
            p: self.p,
            p0: self.p0,
            beta_magnitude: self.beta,
            design: self.design,
            error: self.error,
            seed,
        }
    }

    fn csv_prefix(&self) -> String {
        format!(
            "{},{},{},{},{:?},{},{}",
            self.index, self.n, self.p, self.p0, self.beta, self.design, self.error
        )
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &p0 in &self.p0 {
                for &beta in &self.beta {
                    for &design in &self.designs {
                        for &error in &self.errors {
                            out.push(Cell {
                                index: out.len(),
                                n,
                                p: self.p_rule.p_for(n),
                                p0,
                                beta,
                                design,
                                error,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Effective size cap for a cell.
    pub fn max_size_for(&self, cell: &Cell) -> usize {
        let cap = self.max_size.unwrap_or_else(|| default_max_size(cell.p, Some(cell.p0)));
        match self.strategy {
            SearchStrategy::Exhaustive => cap.min(cell.p),
            _ => cap.min(cell.p).min(cell.n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let need = |ok: bool, field: &str, msg: String| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(format!("field `{field}`: {msg}")))
            }
        };
        for (field, empty) in [
            ("n", self.n.is_empty()),
            ("p0", self.p0.is_empty()),
            ("beta", self.beta.is_empty()),
            ("errors", self.errors.is_empty()),
            ("designs", self.designs.is_empty()),
            ("criteria", self.criteria.is_empty()),
        ] {
            need(!empty, field, "must list at least one value".into())?;
        }
        need(self.replicates >= 1, "replicates", "must be >= 1".into())?;
        for &b in &self.beta {
            need(b.is_finite() && b >= 0.0, "beta", format!("{b} is not a finite nonnegative value"))?;
        }
        if let Some(k) = self.identifiability_k {
            need(k > 0.0 && k.is_finite(), "identifiability_k", format!("{k} must be positive"))?;
        }
        for cell in self.cells() {
            let at = format!("cell n={} p={} p0={}", cell.n, cell.p, cell.p0);
            need(cell.n >= 2, "n", format!("{at}: n must be >= 2"))?;
            need(cell.p >= 1, "p_rule", format!("{at}: p must be >= 1"))?;
            need(cell.p0 <= cell.p, "p0", format!("{at}: p0 exceeds p"))?;
            need(
                cell.design != DesignKind::Orthogonalized || cell.p <= cell.n,
                "designs",
                format!("{at}: orthogonalized design needs p <= n"),
            )?;
            if let Some(m) = self.max_size {
                need(m <= cell.p, "max_size", format!("{at}: max_size {m} exceeds p"))?;
            }
        }
        Ok(())
    }
}

/// Selection record for one replicate under one criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub cell: Cell,
    pub replicate: usize,
    pub seed: u64,
    pub criterion: Criterion,
    pub selected: ModelIndexSet,
    /// `selected == s0`
    pub correct: bool,
    /// `s0 ⊆ selected`
    pub contains: bool,
    /// `s0` lies inside the largest model the search examined.
    pub screened: bool,
    pub total: f64,
    pub fit_term: f64,
    pub penalty: f64,
    pub rss: f64,
    pub visited: u64,
    pub identifiability: Option<f64>,
    pub wall_time: Duration,
}

impl ReplicateOutcome {
    pub fn size(&self) -> usize {
        self.selected.len()
    }

    fn csv_line(&self) -> String {
        let selected = self.selected.one_based().iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        format!(
            "{},{},{},{},{},{},{},{},{},{:?},{:?},{:?},{:?},{},{}",
            self.cell.csv_prefix(),
            self.replicate,
            self.seed,
            self.criterion,
            selected,
            self.size(),
            u8::from(self.correct),
            u8::from(self.contains),
            u8::from(self.screened),
            self.total,
            self.fit_term,
            self.penalty,
            self.rss,
            self.visited,
            self.identifiability.map(|v| format!("{v:?}")).unwrap_or_default()
        )
    }
}

/// Per `(cell, criterion)` aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub cell: Cell,
    pub criterion: Criterion,
    pub replicates: usize,
    pub correct: usize,
    pub p_correct: f64,
    /// Binomial standard error `sqrt(p (1 - p) / R)`.
    pub se: f64,
    pub p_contains: f64,
    pub p_screened: f64,
    pub mean_size: f64,
}

impl SummaryRow {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:?},{:?},{:?},{:?},{:?}",
            self.cell.csv_prefix(),
            self.criterion,
            self.replicates,
            self.correct,
            self.p_correct,
            self.se,
            self.p_contains,
            self.p_screened,
            self.mean_size
        )
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub outcomes: Vec<ReplicateOutcome>,
    pub summary: Vec<SummaryRow>,
}

fn run_replicate(cfg: &ExperimentConfig, cell: &Cell, replicate: usize) -> Result<Vec<ReplicateOutcome>> {
    let started = Instant::now();
    let seed = derive_seed(cfg.seed, &[cell.index as u64, replicate as u64]);
    let inst = generate::<f64>(&cell.scenario(seed))?;
    let ctx = ScoringContext::for_response(cell.n, cell.p, &inst.y)?;
    let max_size = cfg.max_size_for(cell);
    let identifiability = match cfg.identifiability_k {
        Some(k) if cell.p0 > 0 && cell.p >= 2 => {
            Some(identifiability_ratio(&inst, k, IDENTIFIABILITY_CAP, IDENTIFIABILITY_SAMPLES)?.ratio)
        }
        _ => None,
    };

    // the search sees (X, y) only; s0 is used for bookkeeping below
    let mut picks = Vec::with_capacity(cfg.criteria.len());
    match cfg.strategy {
        SearchStrategy::Exhaustive => {
            let cap = cfg.enumeration_cap.map_or(DEFAULT_ENUMERATION_CAP, u128::from);
            let budget = SearchBudget::new(max_size, SearchStrategy::Exhaustive).with_cap(cap);
            for &c in &cfg.criteria {
                picks.push((c, exhaustive_search(&inst.x, &inst.y, &ctx, c, &budget)?, true));
            }
        }
        strategy => {
            let path = forward_path(&inst.x, &inst.y, max_size)?;
            let screened = inst.s0.is_subset_of(path.models.last().expect("path has the empty model"));
            for &c in &cfg.criteria {
                let mut sel = select_on_path(&path, &ctx, c)?;
                if strategy == SearchStrategy::ForwardBackward {
                    sel = backward_eliminate(&inst.x, &inst.y, &ctx, c, sel)?;
                }
                picks.push((c, sel, screened));
            }
        }
    }
    let wall_time = started.elapsed();
    Ok(picks
        .into_iter()
        .map(|(criterion, sel, screened)| ReplicateOutcome {
            cell: *cell,
            replicate,
            seed,
            criterion,
            correct: sel.model == inst.s0,
            contains: inst.s0.is_subset_of(&sel.model),
            screened,
            total: sel.score.total,
            fit_term: sel.score.fit_term,
            penalty: sel.score.penalty,
            rss: sel.rss,
            visited: sel.visited,
            selected: sel.model,
            identifiability,
            wall_time,
        })
        .collect())
}

/// Runs every cell and replicate on the current rayon pool. Rows come back
/// ordered by `(cell, replicate, criterion)` whatever the pool size.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    cfg.validate()?;
    let cells = cfg.cells();
    if cfg.strategy == SearchStrategy::Exhaustive {
        let cap = cfg.enumeration_cap.map_or(DEFAULT_ENUMERATION_CAP, u128::from);
        for cell in &cells {
            let required = crate::num::subsets_up_to(cell.p, cfg.max_size_for(cell));
            if required > cap {
                return Err(Error::Budget { required, cap });
            }
        }
    }
    let jobs: Vec<(usize, usize)> =
        (0..cells.len()).flat_map(|c| (0..cfg.replicates).map(move |r| (c, r))).collect();
    let nested: Vec<Vec<ReplicateOutcome>> = jobs
        .par_iter()
        .map(|&(c, r)| run_replicate(cfg, &cells[c], r))
        .collect::<Result<_>>()?;
    let outcomes: Vec<ReplicateOutcome> = nested.into_iter().flatten().collect();
    let summary = summarize(&cells, &cfg.criteria, &outcomes);
    Ok(ExperimentResults { outcomes, summary })
}

pub fn summarize(cells: &[Cell], criteria: &[Criterion], outcomes: &[ReplicateOutcome]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for cell in cells {
        for &criterion in criteria {
            let sel: Vec<&ReplicateOutcome> = outcomes
                .iter()
                .filter(|o| o.cell.index == cell.index && o.criterion == criterion)
                .collect();
            let r = sel.len();
            if r == 0 {
                continue;
            }
            let rf = r as f64;
            let correct = sel.iter().filter(|o| o.correct).count();
            let p_correct = correct as f64 / rf;
            rows.push(SummaryRow {
                cell: *cell,
                criterion,
                replicates: r,
                correct,
                p_correct,
                se: (p_correct * (1.0 - p_correct) / rf).sqrt(),
                p_contains: sel.iter().filter(|o| o.contains).count() as f64 / rf,
                p_screened: sel.iter().filter(|o| o.screened).count() as f64 / rf,
                mean_size: sel.iter().map(|o| o.size() as f64).sum::<f64>() / rf,
            });
        }
    }
    rows
}

pub fn write_replicates_csv<W: Write>(outcomes: &[ReplicateOutcome], mut out: W) -> Result<()> {
    writeln!(out, "{REPLICATE_HEADER}")?;
    for o in outcomes {
        writeln!(out, "{}", o.csv_line())?;
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], mut out: W) -> Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    Ok(())
}

/// Wall-clock times, kept apart from the deterministic tables.
pub fn write_timings_csv<W: Write>(outcomes: &[ReplicateOutcome], mut out: W) -> Result<()> {
    writeln!(out, "cell,replicate,criterion,wall_time_s")?;
    for o in outcomes {
        writeln!(out, "{},{},{},{:?}", o.cell.index, o.replicate, o.criterion, o.wall_time.as_secs_f64())?;
    }
    Ok(())
}

/// Replicate row as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub scenario: Scenario,
    pub cell: usize,
    pub replicate: usize,
    pub criterion: Criterion,
    pub selected: ModelIndexSet,
    pub correct: bool,
    pub total: f64,
}

fn parse_field<T: FromStr>(rec: &csv::StringRecord, idx: usize, name: &str, row: usize) -> Result<T> {
    rec.get(idx)
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::input(format!("row {row}: bad `{name}` field")))
}

pub fn read_replicates_csv<R: Read>(reader: R) -> Result<Vec<ReplicateRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::input(format!("replicate table lacks column `{name}`")))
    };
    let names = [
        "cell", "n", "p", "p0", "beta", "design", "error", "replicate", "seed", "criterion", "selected", "correct",
        "total",
    ];
    let idx: Vec<usize> = names.iter().map(|n| col(n)).collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        let selected: Vec<usize> = rec[idx[10]]
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| Error::input(format!("row {row}: bad `selected` field"))))
            .collect::<Result<_>>()?;
        out.push(ReplicateRecord {
            scenario: Scenario {
                n: parse_field(&rec, idx[1], "n", row)?,
                p: parse_field(&rec, idx[2], "p", row)?,
                p0: parse_field(&rec, idx[3], "p0", row)?,
                beta_magnitude: parse_field(&rec, idx[4], "beta", row)?,
                design: parse_field(&rec, idx[5], "design", row)?,
                error: parse_field(&rec, idx[6], "error", row)?,
                seed: parse_field(&rec, idx[8], "seed", row)?,
            },
            cell: parse_field(&rec, idx[0], "cell", row)?,
            replicate: parse_field(&rec, idx[7], "replicate", row)?,
            criterion: parse_field(&rec, idx[9], "criterion", row)?,
            selected: ModelIndexSet::from_one_based(&selected)?,
            correct: parse_field::<u8>(&rec, idx[11], "correct", row)? == 1,
            total: parse_field(&rec, idx[12], "total", row)?,
        });
    }
    Ok(out)
}

/// Regenerates the replicate's instance and scores its recorded model from
/// scratch.
pub fn rescore(record: &ReplicateRecord) -> Result<f64> {
    let inst = generate::<f64>(&record.scenario)?;
    let ctx = ScoringContext::for_response(inst.x.n(), inst.x.p(), &inst.y)?;
    let rss = fit_model(&inst.x, &inst.y, &record.selected)?.rss;
    Ok(score(record.criterion, &ctx, rss, record.selected.len())?.total)
}
