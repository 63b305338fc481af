//! Market data model: budgets, nominal valuations and the market file format.
//!
//! Every good has unit supply. Nominal valuations are either a dense `n x m`
//! matrix or a pair of low-rank factors `theta` (`n x d`) and `phi` (`m x d`)
//! with `v_hat = theta * phi^T`. The factored form is kept next to its dense
//! expansion because the factor-based uncertainty models need both.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FILE_VERSION: u32 = 1;

/// Whether unspent money keeps value for the buyer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarketKind {
    Fisher,
    Quasi,
}

impl MarketKind {
    /// The 0/1 flag multiplying retained budget in the objective.
    pub fn q(self) -> f64 {
        match self {
            MarketKind::Fisher => 0.0,
            MarketKind::Quasi => 1.0,
        }
    }

    pub fn is_quasi(self) -> bool {
        matches!(self, MarketKind::Quasi)
    }
}

impl fmt::Display for MarketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarketKind::Fisher => f.write_str("fisher"),
            MarketKind::Quasi => f.write_str("quasi"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NominalValuations {
    Dense(DMatrix<f64>),
    /// `theta` is `n x d`, `phi` is `m x d`.
    Factored { theta: DMatrix<f64>, phi: DMatrix<f64> },
}

impl NominalValuations {
    pub fn buyers(&self) -> usize {
        match self {
            NominalValuations::Dense(v) => v.nrows(),
            NominalValuations::Factored { theta, .. } => theta.nrows(),
        }
    }

    pub fn goods(&self) -> usize {
        match self {
            NominalValuations::Dense(v) => v.ncols(),
            NominalValuations::Factored { phi, .. } => phi.nrows(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            NominalValuations::Dense(v) => v.clone(),
            NominalValuations::Factored { theta, phi } => theta * phi.transpose(),
        }
    }

    pub fn is_factored(&self) -> bool {
        matches!(self, NominalValuations::Factored { .. })
    }
}

/// One violated market invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            field: field.into(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.violations.first() {
            None => f.write_str("no violations"),
            Some(first) if self.violations.len() == 1 => write!(f, "{first}"),
            Some(first) => write!(f, "{first} (and {} more)", self.violations.len() - 1),
        }
    }
}

/// Lists every invariant violation of a candidate market. Never fails.
pub fn validate(budgets: &[f64], nominal: &NominalValuations) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = nominal.buyers();
    let m = nominal.goods();
    if n == 0 {
        report.push("n", "at least one buyer required");
    }
    if m == 0 {
        report.push("m", "at least one good required");
    }
    if budgets.len() != n {
        report.push(
            "budgets",
            format!("expected {n} budgets, found {}", budgets.len()),
        );
    }
    for (i, &b) in budgets.iter().enumerate() {
        if !(b.is_finite() && b > 0.0) {
            report.push(format!("budgets[{i}]"), "budget must be positive");
        }
    }
    if let NominalValuations::Factored { theta, phi } = nominal {
        if theta.ncols() != phi.ncols() {
            report.push(
                "valuations",
                format!(
                    "theta has rank {} but phi has rank {}",
                    theta.ncols(),
                    phi.ncols()
                ),
            );
            return report;
        }
        let d = theta.ncols();
        if d == 0 || d > n.min(m) {
            report.push(
                "valuations",
                format!("rank d = {d} must satisfy 1 <= d <= min(n, m)"),
            );
        }
        if theta.iter().chain(phi.iter()).any(|x| !x.is_finite()) {
            report.push("valuations", "factor entries must be finite");
            return report;
        }
    }
    let dense = nominal.to_dense();
    for i in 0..dense.nrows() {
        let row = dense.row(i);
        if let Some(j) = row.iter().position(|&v| !v.is_finite() || v < 0.0) {
            let what = if nominal.is_factored() {
                "implied valuation"
            } else {
                "valuation"
            };
            report.push(
                format!("valuations[{i}][{j}]"),
                format!("{what} {} must be nonnegative", row[j]),
            );
            continue;
        }
        if row.sum() <= 0.0 {
            report.push(
                format!("valuations[{i}]"),
                "v̂_i·1 > 0 required (buyer values nothing)",
            );
        }
    }
    report
}

/// The ground economy. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Market {
    budgets: Vec<f64>,
    nominal: NominalValuations,
    dense: DMatrix<f64>,
}

impl Market {
    pub fn new(budgets: Vec<f64>, nominal: NominalValuations) -> Result<Self> {
        let report = validate(&budgets, &nominal);
        if !report.is_valid() {
            return Err(Error::InvalidMarket(report));
        }
        let dense = nominal.to_dense();
        Ok(Market {
            budgets,
            nominal,
            dense,
        })
    }

    pub fn dense(budgets: Vec<f64>, valuations: DMatrix<f64>) -> Result<Self> {
        Market::new(budgets, NominalValuations::Dense(valuations))
    }

    /// Builds a dense market from row slices; convenient for small examples.
    pub fn from_rows(budgets: &[f64], rows: &[&[f64]]) -> Result<Self> {
        let m = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Dimension("ragged valuation rows".into()));
        }
        let v = DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]);
        Market::dense(budgets.to_vec(), v)
    }

    pub fn n(&self) -> usize {
        self.dense.nrows()
    }

    pub fn m(&self) -> usize {
        self.dense.ncols()
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    pub fn nominal(&self) -> &NominalValuations {
        &self.nominal
    }

    /// Dense `n x m` nominal valuations.
    pub fn valuations(&self) -> &DMatrix<f64> {
        &self.dense
    }

    pub fn nominal_row(&self, buyer: usize) -> Vec<f64> {
        self.dense.row(buyer).iter().copied().collect()
    }

    pub fn factors(&self) -> Option<(&DMatrix<f64>, &DMatrix<f64>)> {
        match &self.nominal {
            NominalValuations::Factored { theta, phi } => Some((theta, phi)),
            NominalValuations::Dense(_) => None,
        }
    }

    pub fn has_equal_budgets(&self) -> bool {
        let b0 = self.budgets[0];
        self.budgets.iter().all(|&b| (b - b0).abs() <= 1e-12 * b0.abs())
    }

    pub fn validate(&self) -> ValidationReport {
        validate(&self.budgets, &self.nominal)
    }

    /// Replaces factored valuations by their dense expansion.
    pub fn to_dense_market(&self) -> Market {
        Market {
            budgets: self.budgets.clone(),
            nominal: NominalValuations::Dense(self.dense.clone()),
            dense: self.dense.clone(),
        }
    }

    pub fn to_file(&self) -> MarketFile {
        let valuations = match &self.nominal {
            NominalValuations::Dense(v) => ValuationsFile::Dense { rows: rows_of(v) },
            NominalValuations::Factored { theta, phi } => ValuationsFile::Factored {
                theta: rows_of(theta),
                phi: rows_of(phi),
            },
        };
        MarketFile {
            version: FILE_VERSION,
            n: self.n(),
            m: self.m(),
            budgets: self.budgets.clone(),
            valuations,
        }
    }

    pub fn to_json(&self) -> String {
        // Serializing plain vectors of finite floats cannot fail.
        serde_json::to_string_pretty(&self.to_file()).expect("market serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}

/// On-disk market document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketFile {
    pub version: u32,
    pub n: usize,
    pub m: usize,
    pub budgets: Vec<f64>,
    pub valuations: ValuationsFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ValuationsFile {
    Dense { rows: Vec<Vec<f64>> },
    Factored {
        theta: Vec<Vec<f64>>,
        phi: Vec<Vec<f64>>,
    },
}

impl MarketFile {
    pub fn into_market(self) -> Result<Market> {
        if self.version != FILE_VERSION {
            return Err(Error::Dimension(format!(
                "unsupported market file version {}",
                self.version
            )));
        }
        let nominal = match self.valuations {
            ValuationsFile::Dense { rows } => NominalValuations::Dense(matrix_of(&rows, "rows")?),
            ValuationsFile::Factored { theta, phi } => NominalValuations::Factored {
                theta: matrix_of(&theta, "theta")?,
                phi: matrix_of(&phi, "phi")?,
            },
        };
        if nominal.buyers() != self.n || nominal.goods() != self.m {
            return Err(Error::Dimension(format!(
                "declared n = {}, m = {} but valuations are {} x {}",
                self.n,
                self.m,
                nominal.buyers(),
                nominal.goods()
            )));
        }
        Market::new(self.budgets, nominal)
    }
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_of(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!("{name}: ragged rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn parse_market(text: &str) -> Result<Market> {
    let file: MarketFile = serde_json::from_str(text)?;
    file.into_market()
}

pub fn load_market(path: impl AsRef<Path>) -> Result<Market> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_market(&text)
}

/// Settings for the synthetic low-rank generator.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GeneratorConfig {
    /// Per-buyer budgets; all ones when absent.
    pub budgets: Option<Vec<f64>>,
}

/// Draws `theta` and `phi` entries i.i.d. uniform on `[0, 1]`, so every
/// implied valuation is nonnegative without rejection. Pure in its arguments.
pub fn generate_low_rank_market(
    n: usize,
    m: usize,
    d: usize,
    seed: u64,
    config: &GeneratorConfig,
) -> Result<Market> {
    if n == 0 || m == 0 || d == 0 || d > n.min(m) {
        return Err(Error::Dimension(format!(
            "need n, m >= 1 and 1 <= d <= min(n, m); got n = {n}, m = {m}, d = {d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = DMatrix::zeros(n, d);
    let mut phi = DMatrix::zeros(m, d);
    for i in 0..n {
        for k in 0..d {
            theta[(i, k)] = rng.random::<f64>();
        }
    }
    for j in 0..m {
        for k in 0..d {
            phi[(j, k)] = rng.random::<f64>();
        }
    }
    let budgets = match &config.budgets {
        Some(b) => b.clone(),
        None => vec![1.0; n],
    };
    Market::new(budgets, NominalValuations::Factored { theta, phi })
}
