//! Problem instances: price-history ingestion, moment estimation, the JSON
//! instance format and the synthetic default instance.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::certificate::RiskSpec;
use crate::error::{Error, Result};
use crate::gaussian::GaussianModel;
use crate::mip::SemiContinuousSpec;
use crate::saa::ChanceProgramSpec;

pub const DEFAULT_SEED: u64 = 20_240_521;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    fn index(self) -> i64 {
        self.year as i64 * 12 + self.month as i64 - 1
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("date {s:?} is not YYYY-MM"));
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        let m = m.split('-').next().ok_or_else(bad)?;
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) {
            return Err(bad());
        }
        Ok(Self { year, month })
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

/// Monthly prices, one row per month.
#[derive(Clone, Debug, PartialEq)]
pub struct PricePanel {
    pub names: Vec<String>,
    pub dates: Vec<YearMonth>,
    /// Row-major `T x n`.
    pub prices: Vec<f64>,
}

impl PricePanel {
    pub fn new(names: Vec<String>, dates: Vec<YearMonth>, prices: Vec<f64>) -> Result<Self> {
        let n = names.len();
        if n == 0 || prices.len() != dates.len() * n {
            return Err(Error::invalid("price panel shape does not match names and dates"));
        }
        for w in dates.windows(2) {
            if w[1].index() - w[0].index() != 1 {
                return Err(Error::invalid(format!("dates {} and {} are not consecutive months", w[0], w[1])));
            }
        }
        if let Some(p) = prices.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!(
                "price for {} at {} is not positive",
                names[p % n],
                dates[p / n]
            )));
        }
        Ok(Self { names, dates, prices })
    }

    pub fn n_assets(&self) -> usize {
        self.names.len()
    }

    pub fn n_periods(&self) -> usize {
        self.dates.len()
    }

    /// Read CSV with header `date,a1,...,an` and `YYYY-MM` dates.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        if header.len() < 2 || !header[0].trim().eq_ignore_ascii_case("date") {
            return Err(Error::invalid(format!("{}: header must start with `date`", path.display())));
        }
        let names: Vec<String> = header.iter().skip(1).map(|h| h.trim().to_string()).collect();
        let mut dates = Vec::new();
        let mut prices = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record?;
            if record.len() != header.len() {
                return Err(Error::invalid(format!("{}: row {} has {} fields", path.display(), line + 1, record.len())));
            }
            dates.push(record[0].parse()?);
            for field in record.iter().skip(1) {
                prices.push(field.trim().parse::<f64>().map_err(|_| {
                    Error::invalid(format!("{}: row {}: cannot parse {field:?}", path.display(), line + 1))
                })?);
            }
        }
        Self::new(names, dates, prices)
    }
}

/// Gross returns `p(t) / p(t - lag)`, one row per month after the first
/// `lag`.
pub fn returns_from_prices(panel: &PricePanel, lag: usize) -> Result<Vec<Vec<f64>>> {
    if lag == 0 {
        return Err(Error::invalid("lag must be positive"));
    }
    let t = panel.n_periods();
    if t <= lag {
        return Err(Error::invalid(format!("{t} months of prices do not cover a lag of {lag}")));
    }
    let n = panel.n_assets();
    let p = |t: usize, i: usize| panel.prices[t * n + i];
    Ok((lag..t).map(|t| (0..n).map(|i| p(t, i) / p(t - lag, i)).collect()).collect())
}

/// Sample mean and unbiased (`1 / (T - 1)`) covariance, row-major.
pub fn estimate_moments(rows: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    if rows.len() < 2 {
        return Err(Error::invalid("need at least two observations"));
    }
    let n = rows[0].len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::invalid("observations have different lengths"));
    }
    let t = rows.len() as f64;
    let mut mean = vec![0.0; n];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= t);
    let mut cov = vec![0.0; n * n];
    for r in rows {
        for i in 0..n {
            let di = r[i] - mean[i];
            for j in 0..=i {
                cov[i * n + j] += di * (r[j] - mean[j]);
            }
        }
    }
    for i in 0..n {
        for j in 0..=i {
            let v = cov[i * n + j] / (t - 1.0);
            cov[i * n + j] = v;
            cov[j * n + i] = v;
        }
    }
    Ok((mean, cov))
}

/// A complete problem: return model, loss threshold and risk settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub names: Vec<String>,
    pub model: GaussianModel,
    pub alpha: f64,
    pub epsilon: f64,
    pub beta: f64,
    pub cash_index: Option<usize>,
    /// Bounds `(l, u)` for the semi-continuous variant.
    pub semicontinuous: Option<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SemiBounds {
    l: f64,
    u: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    names: Vec<String>,
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
    alpha: f64,
    epsilon: f64,
    beta: f64,
    cash_index: Option<usize>,
    semicontinuous: Option<SemiBounds>,
}

impl Instance {
    pub fn n_assets(&self) -> usize {
        self.model.n_assets()
    }

    /// The program with the model mean as objective.
    pub fn program(&self) -> ChanceProgramSpec {
        ChanceProgramSpec::new(self.alpha, self.model.mean().to_vec(), self.cash_index)
            .expect("instance was validated on construction")
    }

    /// Risk settings with the decision dimension of the simplex, one less
    /// than the number of assets.
    pub fn risk(&self) -> RiskSpec {
        RiskSpec::new(self.epsilon, self.beta, self.n_assets().saturating_sub(1).max(1))
            .expect("instance was validated on construction")
    }

    pub fn semicontinuous_spec(&self) -> Option<SemiContinuousSpec> {
        self.semicontinuous.map(|(l, u)| {
            SemiContinuousSpec::for_portfolio(l, u, self.n_assets(), self.cash_index)
                .expect("instance was validated on construction")
        })
    }

    fn from_file(f: InstanceFile) -> Result<Self> {
        let n = f.mean.len();
        if f.names.len() != n {
            return Err(Error::schema("names", format!("{} names for {n} assets", f.names.len())));
        }
        if f.covariance.len() != n {
            return Err(Error::schema("covariance", format!("{} rows for {n} assets", f.covariance.len())));
        }
        for (i, row) in f.covariance.iter().enumerate() {
            if row.len() != n {
                return Err(Error::schema(format!("covariance[{i}]"), format!("{} entries, expected {n}", row.len())));
            }
        }
        let scale = f.covariance.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in 0..i {
                if (f.covariance[i][j] - f.covariance[j][i]).abs() > 1e-12 * scale {
                    return Err(Error::schema(
                        format!("covariance[{i}][{j}]"),
                        format!("differs from covariance[{j}][{i}]; the matrix must be symmetric"),
                    ));
                }
            }
        }
        let model = GaussianModel::new(f.mean, f.covariance.concat()).map_err(|e| Error::schema("covariance", e.to_string()))?;
        if let Some(c) = f.cash_index {
            if c >= n {
                return Err(Error::schema("cash_index", format!("{c} is not an asset index")));
            }
        }
        ChanceProgramSpec::new(f.alpha, model.mean().to_vec(), f.cash_index).map_err(|e| Error::schema("alpha", e.to_string()))?;
        RiskSpec::new(f.epsilon, f.beta, 1).map_err(|e| Error::schema("epsilon", e.to_string()))?;
        if let Some(s) = &f.semicontinuous {
            SemiContinuousSpec::new(s.l, s.u, Vec::new()).map_err(|e| Error::schema("semicontinuous", e.to_string()))?;
        }
        Ok(Self {
            names: f.names,
            model,
            alpha: f.alpha,
            epsilon: f.epsilon,
            beta: f.beta,
            cash_index: f.cash_index,
            semicontinuous: f.semicontinuous.map(|s| (s.l, s.u)),
        })
    }

    fn to_file(&self) -> InstanceFile {
        let n = self.n_assets();
        InstanceFile {
            names: self.names.clone(),
            mean: self.model.mean().to_vec(),
            covariance: self.model.covariance().chunks_exact(n).map(<[f64]>::to_vec).collect(),
            alpha: self.alpha,
            epsilon: self.epsilon,
            beta: self.beta,
            cash_index: self.cash_index,
            semicontinuous: self.semicontinuous.map(|(l, u)| SemiBounds { l, u }),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: InstanceFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let mut path = e.path().to_string();
            let message = e.into_inner().to_string();
            // A missing field is reported at its parent; name it instead.
            if let Some(field) = message.strip_prefix("missing field `").and_then(|m| m.split('`').next()) {
                path = if path == "." { field.to_string() } else { format!("{path}.{field}") };
            }
            Error::schema(path, message)
        })?;
        Self::from_file(file)
    }

    /// Pretty JSON. Floats are written in shortest round-trip form, so
    /// reading the text back reproduces every value bit for bit.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("instance serializes") + "\n"
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Instance from estimated moments with a cash asset (mean 1, no
    /// variance) appended as the last column.
    pub fn from_moments(
        mut names: Vec<String>,
        mean: Vec<f64>,
        covariance: Vec<f64>,
        with_cash: bool,
    ) -> Result<Self> {
        let n = mean.len();
        let (mean, covariance, cash_index) = if with_cash {
            let mut m = mean;
            m.push(1.0);
            let mut c = vec![0.0; (n + 1) * (n + 1)];
            for i in 0..n {
                c[i * (n + 1)..i * (n + 1) + n].copy_from_slice(&covariance[i * n..(i + 1) * n]);
            }
            names.push("cash".to_string());
            (m, c, Some(n))
        } else {
            (mean, covariance, None)
        };
        Ok(Self {
            names,
            model: GaussianModel::new(mean, covariance)?,
            alpha: 0.95,
            epsilon: 0.05,
            beta: 5e-6,
            cash_index,
            semicontinuous: Some((0.05, 0.30)),
        })
    }
}

/// Synthetic stand-in for a market index: `n_risky` assets with means in
/// `[1.02, 1.15]`, volatilities in `[0.05, 0.35]` and correlations from a
/// three-factor model, plus cash.
pub fn synthetic_instance(n_risky: usize, seed: u64) -> Result<Instance> {
    if n_risky == 0 {
        return Err(Error::invalid("need at least one risky asset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const FACTORS: usize = 3;
    let mean: Vec<f64> = (0..n_risky).map(|_| rng.random_range(1.02..=1.15)).collect();
    let vol: Vec<f64> = (0..n_risky).map(|_| rng.random_range(0.05..=0.35)).collect();
    let loadings: Vec<[f64; FACTORS]> = (0..n_risky)
        .map(|_| {
            let mut b = [0.0; FACTORS];
            b[0] = rng.random_range(0.4..=0.9);
            for v in &mut b[1..] {
                let e: f64 = StandardNormal.sample(&mut rng);
                *v = 0.3 * e;
            }
            b
        })
        .collect();
    let raw = |i: usize, j: usize| -> f64 {
        let common: f64 = (0..FACTORS).map(|f| loadings[i][f] * loadings[j][f]).sum();
        common + if i == j { 0.5 } else { 0.0 }
    };
    let mut cov = vec![0.0; n_risky * n_risky];
    for i in 0..n_risky {
        for j in 0..n_risky {
            let corr = raw(i, j) / (raw(i, i) * raw(j, j)).sqrt();
            cov[i * n_risky + j] = if i == j { vol[i] * vol[i] } else { vol[i] * vol[j] * corr };
        }
    }
    let names = (1..=n_risky).map(|i| format!("a{i}")).collect();
    Instance::from_moments(names, mean, cov, true)
}

/// The instance shipped as `data/default_instance.json`.
pub fn default_instance() -> Instance {
    synthetic_instance(20, DEFAULT_SEED).expect("default instance is valid")
}
