//! Concentration bounds for quadratic forms `u^T A u` of symmetric idempotent
//! matrices, and Monte-Carlo checks of them.
//!
//! Closed forms:
//!
//! * `m_j = 2 j (ln p + sqrt(2 ln p))`, the cap on the maximum of rank-`j`
//!   projector forms over at most `C(p, j)` projectors;
//! * the quadratic-form tail level `tr + 2 sqrt(tr2 t) + 2 |A| t`, exceeded with
//!   probability at most `exp(-t)`;
//! * the simplified tail `P(u^T A_j u > m) <= exp(-m/2 + sqrt(2 m j)/2)`.
//!
//! The simulations fix one design (hence one projector family) per report and
//! redraw only `u`, trial by trial.

use std::io::Write;

use rayon::prelude::*;

use crate::datagen::{derive_seed, ErrorFamily, StreamId, StreamRole};
use crate::error::{Error, Result};
use crate::linalg::{fit_model, DesignMatrix, HouseholderQr, ModelIndexSet};
use crate::num::{binomial, Scalar};

/// Trials drawn from one substream and evaluated together.
const TRIAL_BATCH: usize = 64;
/// Default number of sampled index sets per rank when `C(p, j)` is larger.
pub const DEFAULT_MODELS_PER_RANK: usize = 100_000;

/// `2 j (L + sqrt(2 L))` for `L = ln p` given directly.
pub fn m_threshold_ln<T: Scalar>(j: usize, ln_p: T) -> T {
    let two = T::lit(2.0);
    two * T::from_usize_lossy(j) * (ln_p + (two * ln_p).sqrt())
}

/// `m_j = 2 j (ln p + sqrt(2 ln p))`; needs `p >= 2`.
pub fn m_threshold<T: Scalar>(j: usize, p: usize) -> Result<T> {
    if p < 2 {
        return Err(Error::input(format!("m_j needs p >= 2, got {p}")));
    }
    Ok(m_threshold_ln(j, T::from_usize_lossy(p).ln()))
}

/// `tr + 2 sqrt(tr2 * t) + 2 * opnorm * t`, where `tr = Tr(A^T A)`,
/// `tr2 = Tr((A^T A)^2)` and `opnorm = |A^T A|`.
pub fn hw_threshold<T: Scalar>(trace: T, trace_sq: T, opnorm: T, t: T) -> Result<T> {
    if trace < T::zero() || trace_sq < T::zero() || opnorm < T::zero() {
        return Err(Error::input("traces and spectral norm must be nonnegative"));
    }
    if !(t > T::zero()) {
        return Err(Error::input(format!("t must be positive, got {t}")));
    }
    let two = T::lit(2.0);
    Ok(trace + two * (trace_sq * t).sqrt() + two * opnorm * t)
}

/// `min(1, exp(-m/2 + sqrt(2 m j)/2))`.
pub fn simple_tail_bound<T: Scalar>(m: T, j: usize) -> T {
    let half = T::lit(0.5);
    let jf = T::from_usize_lossy(j);
    (-half * m + half * (T::lit(2.0) * m * jf).sqrt()).exp().min(T::one())
}

/// `exp(-(j/3) sqrt(ln p))`, the per-rank term of the geometric series that
/// dominates the union bound for large `p`.
pub fn series_term<T: Scalar>(j: usize, ln_p: T) -> T {
    (-(T::from_usize_lossy(j) / T::lit(3.0)) * ln_p.sqrt()).exp()
}

/// `p^j * simple_tail_bound(m_j, j)`, i.e. the union bound over `p^j`
/// projectors, evaluated in log space.
pub fn union_term<T: Scalar>(j: usize, ln_p: T) -> T {
    let m = m_threshold_ln(j, ln_p);
    let half = T::lit(0.5);
    let jf = T::from_usize_lossy(j);
    let log_bound = (-half * m + half * (T::lit(2.0) * m * jf).sqrt()).min(T::zero());
    (jf * ln_p + log_bound).exp()
}

/// Smallest `ln p` on the grid `ln 2, .., ln 10^max_log10` (`per_decade`
/// points per decade) from which `holds(ln p)` is true at every larger grid
/// point. `None` if it fails at the top of the grid.
pub fn grid_cutoff(max_log10: f64, per_decade: usize, holds: impl Fn(f64) -> bool) -> Option<f64> {
    let steps = (max_log10 * per_decade as f64).ceil() as usize;
    let grid: Vec<f64> = std::iter::once(2f64.ln())
        .chain((1..=steps).map(|k| k as f64 / per_decade as f64 * std::f64::consts::LN_10))
        .filter(|&l| l >= 2f64.ln())
        .collect();
    let mut cutoff = None;
    for &l in grid.iter().rev() {
        if holds(l) {
            cutoff = Some(l);
        } else {
            break;
        }
    }
    cutoff
}

/// How many index sets enter each rank's family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingRule {
    /// Enumerate when `C(q, j)` is at most this, otherwise sample this many.
    pub max_models: usize,
}

impl Default for SamplingRule {
    fn default() -> Self {
        SamplingRule {
            max_models: DEFAULT_MODELS_PER_RANK,
        }
    }
}

/// Exceedance tally for one rank.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub j: usize,
    pub p: usize,
    pub m_j: f64,
    pub trials: u64,
    pub exceed_count: u64,
    pub empirical_rate: f64,
    pub theoretical_bound: f64,
    /// `true` when the rank-`j` family was sampled rather than enumerated.
    pub sampled: bool,
}

pub const BOUND_CSV_HEADER: &str = "j,p,m_j,trials,exceed_count,empirical_rate,theoretical_bound,sampled";

pub fn write_bound_reports_csv<W: Write>(reports: &[BoundReport], mut out: W) -> Result<()> {
    writeln!(out, "{BOUND_CSV_HEADER}")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{:?},{},{},{:?},{:?},{}",
            r.j, r.p, r.m_j, r.trials, r.exceed_count, r.empirical_rate, r.theoretical_bound, r.sampled
        )?;
    }
    Ok(())
}

/// Rank-`j` family as `(index set, L^{-1})` pairs, where `L L^T` is the Gram
/// matrix of the selected working columns. Then
/// `u^T P u = |L^{-1} W_s^T u|^2`.
struct RankFamily {
    j: usize,
    /// `j` indices per member.
    indices: Vec<u32>,
    /// Packed lower-triangular `L^{-1}`, `j (j + 1) / 2` entries per member.
    factors: Vec<f64>,
    sampled: bool,
}

impl RankFamily {
    fn tri_len(j: usize) -> usize {
        j * (j + 1) / 2
    }

    fn build(gram: &[f64], q: usize, j: usize, rule: SamplingRule, stream: StreamId) -> Self {
        let total = binomial(q, j);
        let sampled = total > rule.max_models as u128;
        let sets: Vec<Vec<usize>> = if sampled {
            let mut rng = stream.rng();
            let mut seen = std::collections::HashSet::with_capacity(rule.max_models);
            let mut out = Vec::with_capacity(rule.max_models);
            while out.len() < rule.max_models {
                let mut s = rand::seq::index::sample(&mut rng, q, j).into_vec();
                s.sort_unstable();
                if seen.insert(s.clone()) {
                    out.push(s);
                }
            }
            out
        } else {
            combinations(q, j)
        };
        let mut indices = Vec::with_capacity(sets.len() * j);
        let mut factors = Vec::with_capacity(sets.len() * Self::tri_len(j));
        for s in &sets {
            indices.extend(s.iter().map(|&i| i as u32));
            factors.extend(inverse_cholesky(gram, q, s));
        }
        RankFamily {
            j,
            indices,
            factors,
            sampled,
        }
    }

    fn len(&self) -> usize {
        self.indices.len() / self.j
    }

    /// Per-trial maximum of the family's forms; `z` holds `W^T u` as
    /// `z[idx * TRIAL_BATCH + b]`.
    fn batch_max(&self, z: &[f64], out: &mut [f64; TRIAL_BATCH]) {
        let j = self.j;
        let tri = Self::tri_len(j);
        out.fill(f64::NEG_INFINITY);
        let mut form = [0.0f64; TRIAL_BATCH];
        let mut acc = [0.0f64; TRIAL_BATCH];
        for m in 0..self.len() {
            let idx = &self.indices[m * j..(m + 1) * j];
            let f = &self.factors[m * tri..(m + 1) * tri];
            form.fill(0.0);
            let mut off = 0;
            for a in 0..j {
                acc.fill(0.0);
                for c in 0..=a {
                    let w = f[off + c];
                    let zr = &z[idx[c] as usize * TRIAL_BATCH..][..TRIAL_BATCH];
                    for b in 0..TRIAL_BATCH {
                        acc[b] += w * zr[b];
                    }
                }
                off += a + 1;
                for b in 0..TRIAL_BATCH {
                    form[b] += acc[b] * acc[b];
                }
            }
            for b in 0..TRIAL_BATCH {
                out[b] = out[b].max(form[b]);
            }
        }
    }
}

fn combinations(q: usize, j: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..j).collect();
    if j > q {
        return out;
    }
    loop {
        out.push(cur.clone());
        let Some(i) = (0..j).rev().find(|&i| cur[i] < q - j + i) else {
            return out;
        };
        cur[i] += 1;
        for k in i + 1..j {
            cur[k] = cur[k - 1] + 1;
        }
    }
}

/// Packed `L^{-1}` for the Gram sub-block on `s`. Numerically dependent
/// directions (pivot below `1e-10` of the diagonal) get zero rows.
fn inverse_cholesky(gram: &[f64], q: usize, s: &[usize]) -> Vec<f64> {
    let j = s.len();
    let g = |a: usize, b: usize| gram[s[a] * q + s[b]];
    let mut l = vec![0.0; j * j];
    for a in 0..j {
        for b in 0..=a {
            let mut v = g(a, b);
            for t in 0..b {
                v -= l[a * j + t] * l[b * j + t];
            }
            if a == b {
                l[a * j + a] = if v > 1e-10 * g(a, a) && v > 0.0 { v.sqrt() } else { 0.0 };
            } else if l[b * j + b] > 0.0 {
                l[a * j + b] = v / l[b * j + b];
            }
        }
    }
    let mut inv = vec![0.0; j * j];
    for a in 0..j {
        if l[a * j + a] == 0.0 {
            continue;
        }
        for c in 0..=a {
            let mut v = if a == c { 1.0 } else { 0.0 };
            for t in c..a {
                v -= l[a * j + t] * inv[t * j + c];
            }
            inv[a * j + c] = v / l[a * j + a];
        }
    }
    let mut packed = Vec::with_capacity(j * (j + 1) / 2);
    for a in 0..j {
        packed.extend_from_slice(&inv[a * j..a * j + a + 1]);
    }
    packed
}

/// Working columns (column-major, `n x q`) and their Gram matrix.
struct Family {
    n: usize,
    q: usize,
    columns: Vec<f64>,
    ranks: Vec<RankFamily>,
}

impl Family {
    fn new(n: usize, q: usize, columns: Vec<f64>, max_rank: usize, rule: SamplingRule, seed: u64) -> Self {
        let mut gram = vec![0.0; q * q];
        for a in 0..q {
            for b in 0..=a {
                let v: f64 = columns[a * n..(a + 1) * n]
                    .iter()
                    .zip(&columns[b * n..(b + 1) * n])
                    .map(|(x, y)| x * y)
                    .sum();
                gram[a * q + b] = v;
                gram[b * q + a] = v;
            }
        }
        let ranks = (1..=max_rank)
            .map(|j| {
                let stream = StreamId::new(derive_seed(seed, &[j as u64]), StreamRole::ModelSampling);
                RankFamily::build(&gram, q, j, rule, stream)
            })
            .collect();
        Family { n, q, columns, ranks }
    }

    /// Exceedance counts of `thresholds[j - 1]` per rank over `trials` draws.
    fn count_exceedances(&self, trials: u64, family: ErrorFamily, seed: u64, thresholds: &[f64]) -> Vec<u64> {
        let batches = trials.div_ceil(TRIAL_BATCH as u64);
        let zero = || vec![0u64; self.ranks.len()];
        (0..batches)
            .into_par_iter()
            .map(|bi| {
                let live = (trials - bi * TRIAL_BATCH as u64).min(TRIAL_BATCH as u64) as usize;
                let mut rng = StreamId::new(derive_seed(seed, &[bi]), StreamRole::Trials).rng();
                let (n, q) = (self.n, self.q);
                let mut u = vec![0.0; TRIAL_BATCH * n];
                for v in u.iter_mut().take(live * n) {
                    *v = family.draw(&mut rng);
                }
                let mut z = vec![0.0; q * TRIAL_BATCH];
                for idx in 0..q {
                    let col = &self.columns[idx * n..(idx + 1) * n];
                    for b in 0..live {
                        z[idx * TRIAL_BATCH + b] = col.iter().zip(&u[b * n..(b + 1) * n]).map(|(x, y)| x * y).sum();
                    }
                }
                let mut counts = zero();
                let mut maxima = [0.0; TRIAL_BATCH];
                for (r, rank) in self.ranks.iter().enumerate() {
                    rank.batch_max(&z, &mut maxima);
                    counts[r] = maxima[..live].iter().filter(|&&m| m > thresholds[r]).count() as u64;
                }
                counts
            })
            .reduce(zero, |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect())
    }

    fn reports(&self, p: usize, trials: u64, family: ErrorFamily, seed: u64) -> Result<Vec<BoundReport>> {
        let thresholds = self
            .ranks
            .iter()
            .map(|r| m_threshold::<f64>(r.j, p))
            .collect::<Result<Vec<_>>>()?;
        let counts = self.count_exceedances(trials, family, seed, &thresholds);
        let ln_p = (p as f64).ln();
        Ok(self
            .ranks
            .iter()
            .zip(counts)
            .zip(thresholds)
            .map(|((rank, exceed_count), m_j)| BoundReport {
                j: rank.j,
                p,
                m_j,
                trials,
                exceed_count,
                empirical_rate: if trials == 0 { 0.0 } else { exceed_count as f64 / trials as f64 },
                theoretical_bound: series_term(rank.j, ln_p),
                sampled: rank.sampled,
            })
            .collect())
    }
}

fn iid_design(n: usize, p: usize, seed: u64) -> Vec<f64> {
    let mut rng = StreamId::new(seed, StreamRole::Design).rng();
    (0..n * p).map(|_| ErrorFamily::StandardNormal.draw(&mut rng)).collect()
}

/// Monte-Carlo lab for the maximum of `u^T H(s) u` over `|s| = j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectorLab {
    pub n: usize,
    pub p: usize,
    pub max_rank: usize,
    pub trials: u64,
    pub family: ErrorFamily,
    pub sampling: SamplingRule,
    pub seed: u64,
}

/// For each rank `j = 1..=max_rank`, the rate at which
/// `max_{|s| = j} u^T H(s) u` exceeds `m_j`, with `H(s)` built from one fixed
/// iid normal `n x p` design.
pub fn mc_max_projector_form(lab: &ProjectorLab) -> Result<Vec<BoundReport>> {
    let ProjectorLab { n, p, max_rank, .. } = *lab;
    if p < 2 || n == 0 {
        return Err(Error::input(format!("projector lab needs n >= 1 and p >= 2 (n={n}, p={p})")));
    }
    if max_rank >= n.min(p) {
        return Err(Error::input(format!(
            "max rank {max_rank} must be below min(n, p) = {}",
            n.min(p)
        )));
    }
    let fam = Family::new(n, p, iid_design(n, p, lab.seed), max_rank, lab.sampling, lab.seed);
    fam.reports(p, lab.trials, lab.family, lab.seed)
}

/// Monte-Carlo lab for `u^T [H(s) - H(s0)] u` over supersets `s ⊃ s0` with
/// `|s| - |s0| = j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NestedLab {
    pub n: usize,
    pub p: usize,
    pub p0: usize,
    pub k: f64,
    pub trials: u64,
    pub family: ErrorFamily,
    pub sampling: SamplingRule,
    pub seed: u64,
}

impl NestedLab {
    /// Largest extra rank `floor(k p0) - p0`.
    pub fn max_rank(&self) -> usize {
        ((self.k * self.p0 as f64).floor() as usize).saturating_sub(self.p0)
    }
}

/// `H(s) - H(s0)` is the projector onto the span of the extra columns after
/// removing their `X(s0)` component, so the family is built from those
/// residualised columns.
pub fn mc_nested_form(lab: &NestedLab) -> Result<Vec<BoundReport>> {
    let NestedLab { n, p, p0, k, .. } = *lab;
    if p < 2 || n == 0 {
        return Err(Error::input(format!("nested lab needs n >= 1 and p >= 2 (n={n}, p={p})")));
    }
    if !(k >= 1.0) {
        return Err(Error::input(format!("nested lab needs k >= 1, got {k}")));
    }
    if k * p0 as f64 > n.min(p) as f64 {
        return Err(Error::input(format!(
            "k * p0 = {} exceeds min(n, p) = {}",
            k * p0 as f64,
            n.min(p)
        )));
    }
    let max_rank = lab.max_rank();
    let design = DesignMatrix::from_col_major(n, p, iid_design(n, p, lab.seed))?;
    let s0 = ModelIndexSet::prefix(p0);
    let q = p - p0;
    let mut columns = Vec::with_capacity(n * q);
    for j in p0..p {
        columns.extend(fit_model(&design, design.column(j), &s0)?.residuals);
    }
    let fam = Family::new(n, q, columns, max_rank, lab.sampling, lab.seed);
    fam.reports(p, lab.trials, lab.family, lab.seed)
}

/// Exceedance of the quadratic-form tail level by a single fixed projector.
#[derive(Debug, Clone, PartialEq)]
pub struct TailReport {
    pub j: usize,
    pub t: f64,
    /// `j + 2 sqrt(j t) + 2 t`.
    pub level: f64,
    pub trials: u64,
    pub exceed_count: u64,
    pub empirical_rate: f64,
    /// `exp(-t)`.
    pub bound: f64,
}

impl TailReport {
    /// `exp(-t) + 3 sqrt(exp(-t) / trials)`.
    pub fn allowance(&self) -> f64 {
        self.bound + 3.0 * (self.bound / self.trials as f64).sqrt()
    }
}

/// Draws `trials` vectors `u` and counts `u^T H u > level(t)` for a fixed
/// rank-`j` projector onto `j` iid normal columns in `R^n`.
pub fn mc_single_projector_tail(
    n: usize,
    j: usize,
    trials: u64,
    family: ErrorFamily,
    ts: &[f64],
    seed: u64,
) -> Result<Vec<TailReport>> {
    if j == 0 || j > n {
        return Err(Error::input(format!("projector rank {j} must be in 1..={n}")));
    }
    let qr = HouseholderQr::factor(iid_design(n, j, seed), n, j, false, 0.0);
    let q = qr.thin_q();
    let levels = ts
        .iter()
        .map(|&t| hw_threshold(j as f64, j as f64, 1.0, t))
        .collect::<Result<Vec<_>>>()?;
    const CHUNK: u64 = 4096;
    let chunks = trials.div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let live = (trials - ci * CHUNK).min(CHUNK);
            let mut rng = StreamId::new(derive_seed(seed, &[ci]), StreamRole::Trials).rng();
            let mut u = vec![0.0; n];
            let mut counts = vec![0u64; levels.len()];
            for _ in 0..live {
                u.iter_mut().for_each(|v| *v = family.draw(&mut rng));
                let form: f64 = (0..j)
                    .map(|c| {
                        let h: f64 = q[c * n..(c + 1) * n].iter().zip(&u).map(|(a, b)| a * b).sum();
                        h * h
                    })
                    .sum();
                for (cnt, &lvl) in counts.iter_mut().zip(&levels) {
                    *cnt += u64::from(form > lvl);
                }
            }
            counts
        })
        .reduce(|| vec![0u64; levels.len()], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
    Ok(ts
        .iter()
        .zip(levels)
        .zip(counts)
        .map(|((&t, level), exceed_count)| TailReport {
            j,
            t,
            level,
            trials,
            exceed_count,
            empirical_rate: exceed_count as f64 / trials.max(1) as f64,
            bound: (-t).exp(),
        })
        .collect())
}
