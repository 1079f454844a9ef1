//! Finding the criterion-minimising model over `{ s : |s| <= max_size }`.
//!
//! Three strategies: exhaustive enumeration (exact, capped), forward
//! stepwise (greedy RSS path, scored afterwards) and forward-backward
//! (forward followed by criterion-driven elimination).
//!
//! Ties are broken deterministically: smaller total, then smaller model, then
//! the lexicographically smaller index set.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::criteria::{compare, score, Criterion, CriterionScore, ScoringContext};
use crate::error::{Error, Result};
use crate::linalg::{fit_model, DesignMatrix, FactorState, ModelIndexSet, PIVOT_TOL};
use crate::num::{axpy, dot, subsets_up_to, sum_sq, Scalar};

pub const DEFAULT_ENUMERATION_CAP: u128 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    Exhaustive,
    Forward,
    ForwardBackward,
}

impl fmt::Display for SearchStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SearchStrategy::Exhaustive => "exhaustive",
            SearchStrategy::Forward => "forward",
            SearchStrategy::ForwardBackward => "forward_backward",
        })
    }
}

impl FromStr for SearchStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "exhaustive" => Ok(SearchStrategy::Exhaustive),
            "forward" => Ok(SearchStrategy::Forward),
            "forward_backward" => Ok(SearchStrategy::ForwardBackward),
            other => Err(Error::input(format!(
                "unknown strategy '{other}' (exhaustive, forward, forward_backward)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBudget {
    pub max_size: usize,
    pub strategy: SearchStrategy,
    /// Largest number of models exhaustive search may enumerate.
    pub enumeration_cap: u128,
}

impl SearchBudget {
    pub fn new(max_size: usize, strategy: SearchStrategy) -> Self {
        SearchBudget {
            max_size,
            strategy,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }

    pub fn with_cap(mut self, cap: u128) -> Self {
        self.enumeration_cap = cap;
        self
    }
}

/// Default size cap: `min(p, max(10, ceil(2 p0)))` with a known truth,
/// `min(p, 20)` otherwise.
pub fn default_max_size(p: usize, p0: Option<usize>) -> usize {
    match p0 {
        Some(p0) => p.min(10.max(2 * p0)),
        None => p.min(20),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult<T> {
    pub model: ModelIndexSet,
    pub score: CriterionScore<T>,
    pub rss: T,
    /// Number of models whose RSS was evaluated.
    pub visited: u64,
    /// `(model size, best total)` per stage.
    pub trace: Vec<(usize, T)>,
}

/// Full tie-breaking cascade between two scored models.
pub fn rank_models<T: Scalar>(
    a: (&CriterionScore<T>, &ModelIndexSet),
    b: (&CriterionScore<T>, &ModelIndexSet),
) -> Result<Ordering> {
    Ok(compare(a.0, b.0)?.then_with(|| a.1.cmp(b.1)))
}

fn validate<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &[T],
    ctx: &ScoringContext<T>,
    budget: &SearchBudget,
) -> Result<()> {
    if y.len() != x.n() {
        return Err(Error::input(format!(
            "response has length {}, design has {} rows",
            y.len(),
            x.n()
        )));
    }
    if ctx.n() != x.n() || ctx.p() != x.p() {
        return Err(Error::input("scoring context dimensions differ from the design"));
    }
    if budget.max_size > x.p() {
        return Err(Error::input(format!(
            "max_size {} exceeds p = {}",
            budget.max_size,
            x.p()
        )));
    }
    Ok(())
}

/// Keeps the best `(score, model)` seen so far.
struct Best<T> {
    entry: Option<(CriterionScore<T>, ModelIndexSet, T)>,
}

impl<T: Scalar> Best<T> {
    fn new() -> Self {
        Best { entry: None }
    }

    fn offer(&mut self, s: CriterionScore<T>, model: &ModelIndexSet, rss: T) -> Result<()> {
        let better = match &self.entry {
            None => true,
            Some((bs, bm, _)) => rank_models((&s, model), (bs, bm))? == Ordering::Less,
        };
        if better {
            self.entry = Some((s, model.clone(), rss));
        }
        Ok(())
    }
}

/// Dispatches on `budget.strategy`.
pub fn run_search<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &[T],
    ctx: &ScoringContext<T>,
    criterion: Criterion,
    budget: &SearchBudget,
) -> Result<SelectionResult<T>> {
    match budget.strategy {
        SearchStrategy::Exhaustive => exhaustive_search(x, y, ctx, criterion, budget),
        SearchStrategy::Forward => forward_stepwise(x, y, ctx, criterion, budget),
        SearchStrategy::ForwardBackward => forward_backward(x, y, ctx, criterion, budget),
    }
}

/// Global argmin over every model with at most `budget.max_size` columns.
///
/// Refuses with [`Error::Budget`] when the number of models exceeds
/// `budget.enumeration_cap`. Models are visited depth-first in
/// lexicographic order, each child extending its parent's factor.
pub fn exhaustive_search<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &[T],
    ctx: &ScoringContext<T>,
    criterion: Criterion,
    budget: &SearchBudget,
) -> Result<SelectionResult<T>> {
    validate(x, y, ctx, budget)?;
    let required = subsets_up_to(x.p(), budget.max_size);
    if required > budget.enumeration_cap {
        return Err(Error::Budget {
            required,
            cap: budget.enumeration_cap,
        });
    }

    struct Walk<'a, T> {
        x: &'a DesignMatrix<T>,
        ctx: &'a ScoringContext<T>,
        criterion: Criterion,
        max_size: usize,
        best: Best<T>,
        best_by_size: Vec<Option<T>>,
        visited: u64,
    }

    impl<T: Scalar> Walk<'_, T> {
        fn visit(&mut self, state: &FactorState<T>, model: &mut Vec<usize>) -> Result<()> {
            let rss = state.rss();
            let s = score(self.criterion, self.ctx, rss, model.len())?;
            self.visited += 1;
            let slot = &mut self.best_by_size[model.len()];
            if slot.is_none_or(|t| s.total < t) {
                *slot = Some(s.total);
            }
            self.best.offer(s, &ModelIndexSet::new(model.clone()), rss)?;
            if model.len() == self.max_size {
                return Ok(());
            }
            let start = model.last().map_or(0, |&j| j + 1);
            for j in start..self.x.p() {
                let mut child = state.clone();
                child.extend(self.x, j)?;
                model.push(j);
                self.visit(&child, model)?;
                model.pop();
            }
            Ok(())
        }
    }

    let mut walk = Walk {
        x,
        ctx,
        criterion,
        max_size: budget.max_size,
        best: Best::new(),
        best_by_size: vec![None; budget.max_size + 1],
        visited: 0,
    };
    walk.visit(&FactorState::new(x, y)?, &mut Vec::with_capacity(budget.max_size))?;

    let (score, model, rss) = walk.best.entry.expect("empty model is always visited");
    let trace = walk
        .best_by_size
        .iter()
        .enumerate()
        .filter_map(|(k, t)| t.map(|t| (k, t)))
        .collect();
    Ok(SelectionResult {
        model,
        score,
        rss,
        visited: walk.visited,
        trace,
    })
}

/// Nested models produced by greedy RSS-driven forward selection.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPath<T> {
    /// `models[k]` has exactly `k` columns.
    pub models: Vec<ModelIndexSet>,
    pub rss: Vec<T>,
    pub visited: u64,
}

/// Greedy path of sizes `0..=max_size`, adding the column with the largest
/// RSS reduction at each step (ties to the smaller index).
///
/// Candidates are kept orthogonalised against the current span, so scoring
/// every candidate costs `O(n p)` per step; the chosen column is committed
/// through [`FactorState::extend`].
pub fn forward_path<T: Scalar>(x: &DesignMatrix<T>, y: &[T], max_size: usize) -> Result<ForwardPath<T>> {
    let (n, p) = (x.n(), x.p());
    if max_size > n.min(p) {
        return Err(Error::input(format!(
            "stepwise max_size {max_size} exceeds min(n, p) = {}",
            n.min(p)
        )));
    }
    let mut state = FactorState::new(x, y)?;
    let mut reduced = x.as_col_major().to_vec();
    let norms: Vec<T> = (0..p).map(|j| sum_sq(x.column(j))).collect();
    let mut in_model = vec![false; p];
    let cutoff = T::lit(PIVOT_TOL) * T::lit(PIVOT_TOL);

    let mut models = vec![ModelIndexSet::empty()];
    let mut rss = vec![state.rss()];
    let mut visited = 1u64;

    for _ in 0..max_size {
        let residual = state.residual();
        let mut pick: Option<(usize, T)> = None;
        for j in (0..p).filter(|&j| !in_model[j]) {
            visited += 1;
            let z = &reduced[j * n..(j + 1) * n];
            let zz = sum_sq(z);
            let gain = if zz <= cutoff * norms[j] || zz == T::zero() {
                T::zero()
            } else {
                let h = dot(z, residual);
                h * h / zz
            };
            if pick.is_none_or(|(_, g)| gain > g) {
                pick = Some((j, gain));
            }
        }
        let (j, _) = pick.expect("max_size <= p leaves a candidate");
        let rank_before = state.rank();
        state.extend(x, j)?;
        in_model[j] = true;
        if state.rank() > rank_before {
            let q = state.basis().last().expect("rank grew").clone();
            for c in (0..p).filter(|&c| !in_model[c]) {
                let z = &mut reduced[c * n..(c + 1) * n];
                let h = dot(&q, z);
                axpy(-h, &q, z);
            }
        }
        models.push(models.last().expect("non-empty").with(j));
        rss.push(state.rss());
    }
    Ok(ForwardPath { models, rss, visited })
}

/// Criterion argmin over a precomputed forward path.
pub fn select_on_path<T: Scalar>(
    path: &ForwardPath<T>,
    ctx: &ScoringContext<T>,
    criterion: Criterion,
) -> Result<SelectionResult<T>> {
    let mut best = Best::new();
    let mut trace = Vec::with_capacity(path.models.len());
    for (model, &rss) in path.models.iter().zip(&path.rss) {
        let s = score(criterion, ctx, rss, model.len())?;
        trace.push((model.len(), s.total));
        best.offer(s, model, rss)?;
    }
    let (score, model, rss) = best.entry.expect("path contains the empty model");
    Ok(SelectionResult {
        model,
        score,
        rss,
        visited: path.visited,
        trace,
    })
}

pub fn forward_stepwise<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &[T],
    ctx: &ScoringContext<T>,
    criterion: Criterion,
    budget: &SearchBudget,
) -> Result<SelectionResult<T>> {
    validate(x, y, ctx, budget)?;
    let path = forward_path(x, y, budget.max_size)?;
    select_on_path(&path, ctx, criterion)
}

/// Repeatedly drops the single column whose removal most improves the
/// criterion, until no removal improves it.
pub fn backward_eliminate<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &[T],
    ctx: &ScoringContext<T>,
    criterion: Criterion,
    start: SelectionResult<T>,
) -> Result<SelectionResult<T>> {
    let mut current = start;
    loop {
        let mut best = Best::new();
        for &j in current.model.iter() {
            let candidate = current.model.without(j);
            let rss = fit_model(x, y, &candidate)?.rss;
            current.visited += 1;
            best.offer(score(criterion, ctx, rss, candidate.len())?, &candidate, rss)?;
        }
        match best.entry {
            Some((s, model, rss))
                if rank_models((&s, &model), (&current.score, &current.model))? == Ordering::Less =>
            {
                current.trace.push((model.len(), s.total));
                current.model = model;
                current.score = s;
                current.rss = rss;
            }
            _ => return Ok(current),
        }
    }
}

pub fn forward_backward<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &[T],
    ctx: &ScoringContext<T>,
    criterion: Criterion,
    budget: &SearchBudget,
) -> Result<SelectionResult<T>> {
    let forward = forward_stepwise(x, y, ctx, criterion, budget)?;
    backward_eliminate(x, y, ctx, criterion, forward)
}
