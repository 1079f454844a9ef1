//! Reproducible synthetic instances `y = X(s0) beta(s0) + eps` with
//! subgaussian, unit-variance errors.
//!
//! Every random quantity comes from its own substream: a ChaCha8 generator
//! seeded from a 64-bit seed with the stream word selecting the role (design,
//! errors, model sampling). Distinct `(seed, stream)` pairs never share
//! keystream.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{fit_model, DesignMatrix, FactorState, HouseholderQr, ModelIndexSet, SignalVector};
use crate::num::{subsets_up_to, Scalar};

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Mean-zero, unit-variance subgaussian error laws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorFamily {
    StandardNormal,
    /// `+1` or `-1` with probability one half.
    Rademacher,
    /// Uniform on `(-sqrt 3, sqrt 3)`.
    UniformSym,
}

impl ErrorFamily {
    pub const ALL: [ErrorFamily; 3] = [ErrorFamily::StandardNormal, ErrorFamily::Rademacher, ErrorFamily::UniformSym];

    pub fn name(self) -> &'static str {
        match self {
            ErrorFamily::StandardNormal => "standard_normal",
            ErrorFamily::Rademacher => "rademacher",
            ErrorFamily::UniformSym => "uniform_sym",
        }
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            ErrorFamily::StandardNormal => rng.sample(StandardNormal),
            ErrorFamily::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            ErrorFamily::UniformSym => {
                let u: f64 = rng.sample(Open01);
                SQRT_3 * (2.0 * u - 1.0)
            }
        }
    }
}

impl fmt::Display for ErrorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ErrorFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "standard_normal" | "normal" => Ok(ErrorFamily::StandardNormal),
            "rademacher" => Ok(ErrorFamily::Rademacher),
            "uniform_sym" | "uniform" => Ok(ErrorFamily::UniformSym),
            other => Err(Error::input(format!(
                "unknown error family '{other}' (standard_normal, rademacher, uniform_sym)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    /// Independent standard normal entries, columns left unscaled.
    IidNormal,
    /// Orthonormalised iid draw, each column rescaled to squared norm `n`.
    Orthogonalized,
}

impl DesignKind {
    pub fn name(self) -> &'static str {
        match self {
            DesignKind::IidNormal => "iid_normal",
            DesignKind::Orthogonalized => "orthogonalized",
        }
    }
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "iid_normal" => Ok(DesignKind::IidNormal),
            "orthogonalized" | "orthogonal" => Ok(DesignKind::Orthogonalized),
            other => Err(Error::input(format!("unknown design kind '{other}' (iid_normal, orthogonalized)"))),
        }
    }
}

/// Role of a substream under one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamRole {
    Design = 1,
    Errors = 2,
    ModelSampling = 3,
    Trials = 4,
}

/// `(seed, stream)` pair naming one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub seed: u64,
    pub stream: u64,
}

impl StreamId {
    pub fn new(seed: u64, role: StreamRole) -> Self {
        StreamId { seed, stream: role as u64 }
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a root seed with a path of coordinates (cell, replicate, ...) into a
/// child seed.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(root), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

/// `n` independent draws from `family` on the given stream.
pub fn sample_errors<T: Scalar>(family: ErrorFamily, n: usize, stream: StreamId) -> Vec<T> {
    let mut rng = stream.rng();
    (0..n).map(|_| T::lit(family.draw(&mut rng))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n: usize,
    pub p: usize,
    pub p0: usize,
    pub beta_magnitude: f64,
    pub design: DesignKind,
    pub error: ErrorFamily,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::input(format!("scenario needs n, p >= 1 (n={}, p={})", self.n, self.p)));
        }
        if self.p0 > self.p {
            return Err(Error::input(format!("p0 = {} exceeds p = {}", self.p0, self.p)));
        }
        if !(self.beta_magnitude >= 0.0) || !self.beta_magnitude.is_finite() {
            return Err(Error::input(format!("beta magnitude must be finite and >= 0, got {}", self.beta_magnitude)));
        }
        if self.design == DesignKind::Orthogonalized && self.p > self.n {
            return Err(Error::input(format!(
                "orthogonalized design needs p <= n (p={}, n={})",
                self.p, self.n
            )));
        }
        Ok(())
    }

    /// True support `{1..p0}` (zero-based `0..p0`).
    pub fn truth(&self) -> ModelIndexSet {
        ModelIndexSet::prefix(self.p0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedInstance<T> {
    pub scenario: Scenario,
    pub x: DesignMatrix<T>,
    pub y: Vec<T>,
    pub mu: SignalVector<T>,
    pub s0: ModelIndexSet,
    /// Nonzero coefficients on `s0`.
    pub beta: Vec<T>,
    pub epsilon: Vec<T>,
}

fn draw_design<T: Scalar>(scenario: &Scenario) -> Result<DesignMatrix<T>> {
    let (n, p) = (scenario.n, scenario.p);
    let mut rng = StreamId::new(scenario.seed, StreamRole::Design).rng();
    let raw: Vec<T> = (0..n * p).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect();
    match scenario.design {
        DesignKind::IidNormal => DesignMatrix::from_col_major(n, p, raw),
        DesignKind::Orthogonalized => {
            let qr = HouseholderQr::factor(raw, n, p, false, T::zero());
            if qr.rank() < p {
                return Err(Error::input("orthogonalization of the design draw lost rank"));
            }
            let scale = T::from_usize_lossy(n).sqrt();
            let q = qr.thin_q().into_iter().map(|v| v * scale).collect();
            DesignMatrix::from_col_major(n, p, q)
        }
    }
}

/// Draws one instance. Identical scenarios give bit-identical instances.
pub fn generate<T: Scalar>(scenario: &Scenario) -> Result<GeneratedInstance<T>> {
    scenario.validate()?;
    let x = draw_design::<T>(scenario)?;
    let n = scenario.n;
    let b = T::lit(scenario.beta_magnitude);
    let beta = vec![b; scenario.p0];
    let mut mu = vec![T::zero(); n];
    for j in 0..scenario.p0 {
        for (m, &v) in mu.iter_mut().zip(x.column(j)) {
            *m = *m + b * v;
        }
    }
    let epsilon = sample_errors::<T>(scenario.error, n, StreamId::new(scenario.seed, StreamRole::Errors));
    let y = mu.iter().zip(&epsilon).map(|(&m, &e)| m + e).collect();
    Ok(GeneratedInstance {
        scenario: *scenario,
        x,
        y,
        mu: SignalVector(mu),
        s0: scenario.truth(),
        beta,
        epsilon,
    })
}

/// Outcome of the identifiability scan.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiabilityReport<T> {
    /// `min Delta(s) / (p0 ln p)` over the scanned wrong models.
    pub ratio: T,
    /// A wrong model attaining the minimum.
    pub minimizer: ModelIndexSet,
    pub models_examined: u64,
    /// `true` when the model space was sampled rather than enumerated.
    pub sampled: bool,
}

/// Smallest signal misfit `Delta(s) / (p0 ln p)` over models of size at most
/// `floor(k p0)` that miss at least one true index.
///
/// When more than `cap` models would need enumeration, scans the empty
/// model, every `s0` minus one index, and `samples` uniformly drawn wrong
/// models instead, and flags the report as sampled.
pub fn identifiability_ratio<T: Scalar>(
    instance: &GeneratedInstance<T>,
    k: f64,
    cap: u128,
    samples: usize,
) -> Result<IdentifiabilityReport<T>> {
    let (p, p0) = (instance.x.p(), instance.s0.len());
    if p0 == 0 {
        return Err(Error::input("identifiability is undefined without true predictors (p0 = 0)"));
    }
    if p < 2 {
        return Err(Error::input("identifiability needs p >= 2"));
    }
    if !(k > 0.0) {
        return Err(Error::input(format!("k must be positive, got {k}")));
    }
    let max_size = ((k * p0 as f64).floor() as usize).min(p);
    let scale = T::from_usize_lossy(p0) * T::from_usize_lossy(p).ln();
    let x = &instance.x;
    let mu = instance.mu.as_slice();
    let s0 = &instance.s0;

    let mut best: Option<(T, ModelIndexSet)> = None;
    let mut examined = 0u64;
    let mut consider = |d: T, model: &ModelIndexSet| {
        examined += 1;
        if best.as_ref().is_none_or(|(b, _)| d < *b) {
            best = Some((d, model.clone()));
        }
    };

    let sampled = subsets_up_to(p, max_size) > cap;
    if !sampled {
        fn walk<T: Scalar>(
            x: &DesignMatrix<T>,
            s0: &ModelIndexSet,
            max_size: usize,
            state: &FactorState<T>,
            model: &mut Vec<usize>,
            consider: &mut dyn FnMut(T, &ModelIndexSet),
        ) -> Result<()> {
            let set = ModelIndexSet::new(model.clone());
            if !s0.is_subset_of(&set) {
                consider(state.rss(), &set);
            }
            if model.len() == max_size {
                return Ok(());
            }
            for j in model.last().map_or(0, |&j| j + 1)..x.p() {
                let mut child = state.clone();
                child.extend(x, j)?;
                model.push(j);
                walk(x, s0, max_size, &child, model, consider)?;
                model.pop();
            }
            Ok(())
        }
        let root = FactorState::new(x, mu)?;
        walk(x, s0, max_size, &root, &mut Vec::new(), &mut consider)?;
    } else {
        consider(instance.mu.energy(), &ModelIndexSet::empty());
        for &j in s0.iter() {
            let m = s0.without(j);
            if m.len() <= max_size {
                consider(fit_model(x, mu, &m)?.rss, &m);
            }
        }
        let mut rng = StreamId::new(instance.scenario.seed, StreamRole::ModelSampling).rng();
        let mut drawn = 0;
        while drawn < samples {
            let size = rng.random_range(0..=max_size);
            let m = ModelIndexSet::new(rand::seq::index::sample(&mut rng, p, size).into_vec());
            if s0.is_subset_of(&m) {
                continue;
            }
            consider(fit_model(x, mu, &m)?.rss, &m);
            drawn += 1;
        }
    }

    let (d, minimizer) = best.expect("the empty model is always a wrong model when p0 >= 1");
    Ok(IdentifiabilityReport {
        ratio: d / scale,
        minimizer,
        models_examined: examined,
        sampled,
    })
}

/// Writes `y,x1,..,xp` with a header row, LF line ends and shortest
/// round-trip decimals.
pub fn write_instance_csv<T: Scalar, W: Write>(instance: &GeneratedInstance<T>, mut out: W) -> Result<()> {
    let p = instance.x.p();
    let mut line = String::from("y");
    for j in 1..=p {
        line.push_str(&format!(",x{j}"));
    }
    line.push('\n');
    out.write_all(line.as_bytes())?;
    for i in 0..instance.x.n() {
        line.clear();
        line.push_str(&format!("{:?}", instance.y[i]));
        for j in 0..p {
            line.push_str(&format!(",{:?}", instance.x.get(i, j)));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}
