//! BIC, mBIC and mBIC2 scores from a model's RSS and size.
//!
//! All three share the fit term `n ln RSS`; they differ only in the penalty:
//!
//! | criterion | penalty                                   |
//! |-----------|-------------------------------------------|
//! | BIC       | `|s| ln n`                                |
//! | mBIC      | `|s| ln n + 2 |s| ln p`                   |
//! | mBIC2     | `|s| ln n + 2 |s| ln p - 2 ln |s|!`       |
//!
//! The error variance is fixed at one, so no variance estimate enters.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{ln_factorial, sum_sq, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Bic,
    Mbic,
    Mbic2,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Bic, Criterion::Mbic, Criterion::Mbic2];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Bic => "bic",
            Criterion::Mbic => "mbic",
            Criterion::Mbic2 => "mbic2",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bic" => Ok(Criterion::Bic),
            "mbic" => Ok(Criterion::Mbic),
            "mbic2" => Ok(Criterion::Mbic2),
            other => Err(Error::input(format!("unknown criterion '{other}' (bic, mbic, mbic2)"))),
        }
    }
}

/// Problem dimensions plus the RSS floor that keeps `ln RSS` finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringContext<T> {
    n: usize,
    p: usize,
    rss_floor: T,
}

impl<T: Scalar> ScoringContext<T> {
    pub fn new(n: usize, p: usize, rss_floor: T) -> Result<Self> {
        if n < 2 {
            return Err(Error::input(format!("scoring needs n >= 2, got {n}")));
        }
        if p < 1 {
            return Err(Error::input("scoring needs p >= 1"));
        }
        if !(rss_floor > T::zero()) || !rss_floor.is_finite() {
            return Err(Error::input(format!("rss floor must be positive, got {rss_floor}")));
        }
        Ok(ScoringContext { n, p, rss_floor })
    }

    /// Context with floor `max(1e-12 y^T y, min_positive)`.
    ///
    /// In `f64` the lower clamp is `1e-300`.
    pub fn for_response(n: usize, p: usize, y: &[T]) -> Result<Self> {
        let lower = T::lit(1e-300).max(T::min_positive_value());
        Self::new(n, p, (T::lit(1e-12) * sum_sq(y)).max(lower))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn rss_floor(&self) -> T {
        self.rss_floor
    }

    fn fit_term(&self, rss: T) -> Result<T> {
        if rss < T::zero() || rss.is_nan() {
            return Err(Error::input(format!("rss must be nonnegative, got {rss}")));
        }
        Ok(T::from_usize_lossy(self.n) * rss.max(self.rss_floor).ln())
    }

    fn check_size(&self, size: usize) -> Result<()> {
        if size > self.p {
            return Err(Error::input(format!("model size {size} exceeds p = {}", self.p)));
        }
        Ok(())
    }

    /// `|s| ln n + 2 |s| ln p`, shared by mBIC and mBIC2.
    fn mbic_penalty(&self, size: usize) -> T {
        let k = T::from_usize_lossy(size);
        let ln_n = T::from_usize_lossy(self.n).ln();
        let ln_p = T::from_usize_lossy(self.p).ln();
        k * ln_n + T::lit(2.0) * k * ln_p
    }
}

/// Score of one model under one criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriterionScore<T> {
    pub criterion: Criterion,
    pub total: T,
    /// `n ln max(RSS, floor)`
    pub fit_term: T,
    pub penalty: T,
    /// Requested model size `|s|` (not the numerical rank).
    pub size: usize,
}

impl<T: Scalar> CriterionScore<T> {
    fn assemble(criterion: Criterion, fit_term: T, penalty: T, size: usize) -> Self {
        CriterionScore {
            criterion,
            total: fit_term + penalty,
            fit_term,
            penalty,
            size,
        }
    }
}

pub fn score_bic<T: Scalar>(ctx: &ScoringContext<T>, rss: T, size: usize) -> Result<CriterionScore<T>> {
    ctx.check_size(size)?;
    let fit = ctx.fit_term(rss)?;
    let penalty = T::from_usize_lossy(size) * T::from_usize_lossy(ctx.n).ln();
    Ok(CriterionScore::assemble(Criterion::Bic, fit, penalty, size))
}

pub fn score_mbic<T: Scalar>(ctx: &ScoringContext<T>, rss: T, size: usize) -> Result<CriterionScore<T>> {
    ctx.check_size(size)?;
    let fit = ctx.fit_term(rss)?;
    Ok(CriterionScore::assemble(Criterion::Mbic, fit, ctx.mbic_penalty(size), size))
}

pub fn score_mbic2<T: Scalar>(ctx: &ScoringContext<T>, rss: T, size: usize) -> Result<CriterionScore<T>> {
    ctx.check_size(size)?;
    let fit = ctx.fit_term(rss)?;
    let penalty = ctx.mbic_penalty(size) - T::lit(2.0) * ln_factorial::<T>(size);
    Ok(CriterionScore::assemble(Criterion::Mbic2, fit, penalty, size))
}

pub fn score<T: Scalar>(
    criterion: Criterion,
    ctx: &ScoringContext<T>,
    rss: T,
    size: usize,
) -> Result<CriterionScore<T>> {
    match criterion {
        Criterion::Bic => score_bic(ctx, rss, size),
        Criterion::Mbic => score_mbic(ctx, rss, size),
        Criterion::Mbic2 => score_mbic2(ctx, rss, size),
    }
}

/// Orders two scores of the same criterion: smaller total first, then
/// smaller model. Remaining ties are left to the caller (index sets).
pub fn compare<T: Scalar>(a: &CriterionScore<T>, b: &CriterionScore<T>) -> Result<Ordering> {
    if a.criterion != b.criterion {
        return Err(Error::input(format!(
            "cannot compare {} score with {} score",
            a.criterion, b.criterion
        )));
    }
    let by_total = a
        .total
        .partial_cmp(&b.total)
        .ok_or_else(|| Error::input("non-comparable (NaN) criterion totals"))?;
    Ok(by_total.then(a.size.cmp(&b.size)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctx(n: usize, p: usize) -> ScoringContext<f64> {
        ScoringContext::new(n, p, 1e-300).unwrap()
    }

    #[test]
    fn mbic_reference_value() {
        // 10 ln 2 + ln 10 + 2 ln 5 = 12.453018...
        let s = score_mbic(&ctx(10, 5), 2.0, 1).unwrap();
        assert!((s.total - 12.452_932_7).abs() < 1e-6);
        assert_eq!(s.total, s.fit_term + s.penalty);
    }

    #[test]
    fn empty_model_has_no_penalty() {
        for c in Criterion::ALL {
            let s = score(c, &ctx(10, 5), 3.0, 0).unwrap();
            assert_eq!(s.penalty, 0.0);
            assert_eq!(s.total, 10.0 * 3f64.ln());
        }
    }

    #[test]
    fn zero_rss_uses_floor() {
        let c = ScoringContext::new(10, 5, 1e-12f64).unwrap();
        let s = score_mbic(&c, 0.0, 2).unwrap();
        assert!(s.total.is_finite());
        assert_eq!(s.fit_term, 10.0 * 1e-12f64.ln());
    }

    #[test]
    fn negative_rss_rejected() {
        assert!(matches!(score_mbic(&ctx(10, 5), -1.0, 1), Err(Error::Input(_))));
        assert!(matches!(score_bic(&ctx(10, 5), 1.0, 6), Err(Error::Input(_))));
    }

    #[test]
    fn context_validation() {
        assert!(ScoringContext::new(1, 5, 1.0f64).is_err());
        assert!(ScoringContext::new(5, 0, 1.0f64).is_err());
        assert!(ScoringContext::new(5, 5, 0.0f64).is_err());
        let c = ScoringContext::for_response(2, 1, &[0.0f64, 0.0]).unwrap();
        assert_eq!(c.rss_floor(), 1e-300);
        let c = ScoringContext::for_response(2, 1, &[3.0f64, 4.0]).unwrap();
        assert_eq!(c.rss_floor(), 25e-12);
    }

    #[test]
    fn mbic2_subtracts_log_factorial() {
        let c = ctx(10, 5);
        for size in [0, 1] {
            assert_eq!(score_mbic2(&c, 2.0, size).unwrap().total, score_mbic(&c, 2.0, size).unwrap().total);
        }
        let gap = score_mbic(&c, 2.0, 3).unwrap().total - score_mbic2(&c, 2.0, 3).unwrap().total;
        assert!((gap - 3.583_518_9).abs() < 1e-6);
    }

    #[test]
    fn mbic2_reference_value() {
        // 100 ln 50 + 10 ln 100 + 20 ln 1000 - 2 ln 10!
        let expected = 100.0 * 50f64.ln() + 10.0 * 100f64.ln() + 20.0 * 1000f64.ln() - 2.0 * 3_628_800f64.ln();
        let s = score_mbic2(&ctx(100, 1000), 50.0, 10).unwrap();
        assert!((s.total - expected).abs() < 1e-9);
    }

    #[test]
    fn bic_reference_value() {
        assert_eq!(score_bic(&ctx(10, 5), 2.0, 0).unwrap().total, 10.0 * 2f64.ln());
        let s = score_bic(&ctx(10, 5), 2.0, 2).unwrap();
        assert!((s.total - 11.536_642_0).abs() < 1e-6);
    }

    #[test]
    fn compare_cascade() {
        let c = ctx(10, 5);
        let mk = |total: f64, size: usize| CriterionScore {
            criterion: Criterion::Mbic,
            total,
            fit_term: total,
            penalty: 0.0,
            size,
        };
        assert_eq!(compare(&mk(5.0, 3), &mk(7.0, 1)).unwrap(), Ordering::Less);
        assert_eq!(compare(&mk(5.0, 1), &mk(5.0, 2)).unwrap(), Ordering::Less);
        assert_eq!(compare(&mk(5.0, 2), &mk(5.0, 2)).unwrap(), Ordering::Equal);
        let bic = score_bic(&c, 1.0, 1).unwrap();
        assert!(compare(&bic, &mk(1.0, 1)).is_err());
    }

    proptest! {
        #[test]
        fn penalty_differences(n in 2usize..5000, p in 1usize..5000, rss in 1e-6f64..1e6, frac in 0.0f64..1.0) {
            let size = ((p as f64) * frac) as usize;
            let c = ctx(n, p);
            let bic = score_bic(&c, rss, size).unwrap();
            let mbic = score_mbic(&c, rss, size).unwrap();
            let mbic2 = score_mbic2(&c, rss, size).unwrap();
            let two_k_ln_p = 2.0 * size as f64 * (p as f64).ln();
            prop_assert!((mbic.total - bic.total - two_k_ln_p).abs() <= 1e-9 * mbic.total.abs().max(1.0));
            let lf: f64 = ln_factorial(size);
            prop_assert!((mbic.total - 2.0 * lf - mbic2.total).abs() <= 1e-9 * mbic.total.abs().max(1.0));
            if size <= 1 {
                prop_assert_eq!(mbic.total, mbic2.total);
            } else {
                prop_assert!(mbic2.total < mbic.total);
            }
            prop_assert!(mbic.penalty >= 0.0 && bic.penalty >= 0.0);
        }

        #[test]
        fn mbic_strictly_increasing_in_size(n in 2usize..2000, p in 2usize..2000, rss in 1e-3f64..1e3) {
            let c = ctx(n, p);
            let a = score_mbic(&c, rss, 0).unwrap().total;
            let b = score_mbic(&c, rss, 1).unwrap().total;
            let d = score_mbic(&c, rss, 2).unwrap().total;
            prop_assert!(a < b && b < d);
        }

        #[test]
        fn rescaling_shifts_all_totals_equally(rss1 in 1e-3f64..1e3, rss2 in 1e-3f64..1e3, c in prop::sample::select(vec![0.1f64, 10.0])) {
            let ctx = ctx(50, 20);
            let d0 = score_mbic(&ctx, rss1, 2).unwrap().total - score_mbic(&ctx, rss2, 5).unwrap().total;
            let d1 = score_mbic(&ctx, rss1 * c * c, 2).unwrap().total - score_mbic(&ctx, rss2 * c * c, 5).unwrap().total;
            prop_assert!((d0 - d1).abs() < 1e-9);
        }
    }
}
