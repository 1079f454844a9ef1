//! Model selection for sparse linear regression with the mBIC and mBIC2
//! criteria, and a laboratory for checking their consistency and the
//! concentration bounds behind it by simulation.
//!
//! The numerical core ([`linalg`], [`criteria`], [`search`]) is generic over
//! [`Scalar`] (`f32` or `f64`). The simulation layers work in `f64`; the
//! aliases below name the `f64` instantiations.

pub mod bounds;
pub mod criteria;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod num;
pub mod plot;
pub mod search;

pub use criteria::{compare, score, score_bic, score_mbic, score_mbic2, Criterion, CriterionScore, ScoringContext};
pub use error::{Error, Result};
pub use linalg::{
    delta, extend_fit, fit_model, nested_form, quadratic_form, DesignMatrix, FactorState, FitResult, ModelIndexSet,
    SignalVector,
};
pub use num::Scalar;
pub use search::{
    exhaustive_search, forward_backward, forward_stepwise, SearchBudget, SearchStrategy, SelectionResult,
};

pub type Design = DesignMatrix<f64>;
pub type Fit = FitResult<f64>;
pub type Signal = SignalVector<f64>;
pub type Score = CriterionScore<f64>;
pub type Context = ScoringContext<f64>;
pub type Selection = SelectionResult<f64>;
pub type Instance = datagen::GeneratedInstance<f64>;
