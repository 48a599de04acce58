//! Price-panel ingestion, log returns, normalized prices and descriptive
//! statistics.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    Brazil,
    US,
    Europe,
    Asia,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::Brazil, Region::US, Region::Europe, Region::Asia];

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Brazil => "Brazil",
            Region::US => "US",
            Region::Europe => "Europe",
            Region::Asia => "Asia",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Region::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown region `{s}`")))
    }
}

/// Ticker → region lookup used while loading a panel.
pub type RegionMap = BTreeMap<String, Region>;

/// Parses a JSON object such as `{"GOLL4.SA": "Brazil", "AAPL": "US"}`.
pub fn load_region_map<R: Read>(reader: R) -> Result<RegionMap> {
    let raw: BTreeMap<String, String> = serde_json::from_reader(reader)?;
    raw.into_iter()
        .map(|(ticker, region)| Ok((ticker, region.parse()?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetMeta {
    pub ticker: String,
    pub region: Region,
    /// Last observed price of the cleaned panel.
    pub final_price: f64,
}

impl AssetMeta {
    pub fn new(ticker: impl Into<String>, region: Region, final_price: f64) -> Self {
        Self {
            ticker: ticker.into(),
            region,
            final_price,
        }
    }
}

/// Position of `ticker` in `assets`.
pub fn ticker_index(assets: &[AssetMeta], ticker: &str) -> Result<usize> {
    assets
        .iter()
        .position(|a| a.ticker == ticker)
        .ok_or_else(|| Error::UnknownTicker(ticker.to_string()))
}

/// Aligned date × asset matrix of strictly positive prices.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    dates: Vec<NaiveDate>,
    assets: Vec<AssetMeta>,
    prices: Matrix,
}

impl PricePanel {
    /// Validates the panel invariants. The `final_price` of every asset is
    /// overwritten with the last row of `prices`.
    pub fn new(dates: Vec<NaiveDate>, mut assets: Vec<AssetMeta>, prices: Matrix) -> Result<Self> {
        if dates.len() < 2 {
            return Err(Error::EmptyPanel { rows: dates.len() });
        }
        if prices.rows() != dates.len() {
            return Err(Error::DimensionMismatch {
                expected: dates.len(),
                found: prices.rows(),
            });
        }
        if prices.cols() != assets.len() {
            return Err(Error::DimensionMismatch {
                expected: assets.len(),
                found: prices.cols(),
            });
        }
        let mut seen = HashSet::new();
        for a in &assets {
            if a.ticker.is_empty() {
                return Err(Error::MalformedHeader("empty ticker".into()));
            }
            if !seen.insert(a.ticker.as_str()) {
                return Err(Error::MalformedHeader(format!("duplicate ticker `{}`", a.ticker)));
            }
        }
        for w in dates.windows(2) {
            if w[1] == w[0] {
                return Err(Error::DuplicateDate(w[1]));
            }
            if w[1] < w[0] {
                return Err(Error::InvalidParameter("dates must be strictly increasing".into()));
            }
        }
        if prices.iter_rows().flatten().any(|&p| !(p.is_finite() && p > 0.0)) {
            return Err(Error::InvalidParameter("prices must be finite and positive".into()));
        }
        let last = prices.row(prices.rows() - 1);
        for (a, &p) in assets.iter_mut().zip(last) {
            a.final_price = p;
        }
        Ok(Self {
            dates,
            assets,
            prices,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[AssetMeta] {
        &self.assets
    }

    pub fn prices(&self) -> &Matrix {
        &self.prices
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn final_prices(&self) -> Vec<f64> {
        self.assets.iter().map(|a| a.final_price).collect()
    }
}

/// Log returns; row `t` holds `ln(P[t+1] / P[t])` and is labelled with date `t+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    dates: Vec<NaiveDate>,
    assets: Vec<AssetMeta>,
    returns: Matrix,
}

impl ReturnPanel {
    pub fn new(dates: Vec<NaiveDate>, assets: Vec<AssetMeta>, returns: Matrix) -> Result<Self> {
        if returns.rows() != dates.len() {
            return Err(Error::DimensionMismatch {
                expected: dates.len(),
                found: returns.rows(),
            });
        }
        if returns.cols() != assets.len() {
            return Err(Error::DimensionMismatch {
                expected: assets.len(),
                found: returns.cols(),
            });
        }
        if returns.iter_rows().flatten().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            dates,
            assets,
            returns,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[AssetMeta] {
        &self.assets
    }

    pub fn returns(&self) -> &Matrix {
        &self.returns
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn n_obs(&self) -> usize {
        self.returns.rows()
    }

    pub fn series(&self, asset: usize) -> Vec<f64> {
        self.returns.column(asset).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssetStats {
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub tickers: Vec<String>,
    pub stats: Vec<AssetStats>,
}

/// Reads a `date,TICKER1,TICKER2,...` CSV. Any row with an empty,
/// unparseable or non-positive price is dropped in full so that every asset
/// shares the same set of dates.
pub fn load_prices<R: Read>(reader: R, regions: &RegionMap) -> Result<PricePanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header = rdr.headers()?.clone();
    match header.get(0) {
        Some(h) if h.trim_start_matches('\u{feff}').eq_ignore_ascii_case("date") => {}
        other => {
            return Err(Error::MalformedHeader(format!(
                "first column must be `date`, found `{}`",
                other.unwrap_or("")
            )))
        }
    }
    if header.len() < 2 {
        return Err(Error::MalformedHeader("no ticker columns".into()));
    }
    let tickers: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut assets = Vec::with_capacity(tickers.len());
    for t in &tickers {
        if t.is_empty() {
            return Err(Error::MalformedHeader("empty ticker".into()));
        }
        let region = *regions
            .get(t)
            .ok_or_else(|| Error::UnknownTicker(t.clone()))?;
        assets.push(AssetMeta::new(t.clone(), region, f64::NAN));
    }

    let n = tickers.len();
    let mut rows: Vec<(NaiveDate, Vec<f64>)> = Vec::new();
    let mut all_dates = HashSet::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let raw_date = record.get(0).unwrap_or("");
        if raw_date.is_empty() && record.iter().all(str::is_empty) {
            continue;
        }
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|_| Error::MalformedDate {
            line,
            value: raw_date.to_string(),
        })?;
        if !all_dates.insert(date) {
            return Err(Error::DuplicateDate(date));
        }
        let prices: Option<Vec<f64>> = (1..=n)
            .map(|k| {
                record
                    .get(k)
                    .and_then(|cell| cell.parse::<f64>().ok())
                    .filter(|p| p.is_finite() && *p > 0.0)
            })
            .collect();
        if let Some(prices) = prices {
            rows.push((date, prices));
        }
    }
    rows.sort_by_key(|(d, _)| *d);

    if rows.len() < 2 {
        return Err(Error::EmptyPanel { rows: rows.len() });
    }
    let (dates, prices): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    PricePanel::new(dates, assets, Matrix::from_rows(prices)?)
}

pub fn compute_log_returns(panel: &PricePanel) -> ReturnPanel {
    let p = panel.prices();
    let returns = Matrix::from_fn(p.rows() - 1, p.cols(), |t, i| (p[(t + 1, i)] / p[(t, i)]).ln());
    ReturnPanel::new(panel.dates()[1..].to_vec(), panel.assets().to_vec(), returns)
        .expect("log returns of a valid panel are finite")
}

/// `out[t][i] = P[t][i] / P[0][i]`.
pub fn normalize_prices(panel: &PricePanel) -> Matrix {
    let p = panel.prices();
    Matrix::from_fn(p.rows(), p.cols(), |t, i| p[(t, i)] / p[(0, i)])
}

pub fn descriptive_stats(returns: &ReturnPanel) -> Result<DescriptiveStats> {
    let mut stats = Vec::with_capacity(returns.n_assets());
    for (i, asset) in returns.assets().iter().enumerate() {
        let xs = returns.series(i);
        require_obs(&asset.ticker, xs.len(), 2)?;
        let (min, max) = min_max(&xs);
        stats.push(AssetStats {
            mean: mean(&xs),
            std_dev: sample_std(&xs),
            min,
            max,
        });
    }
    Ok(DescriptiveStats {
        tickers: returns.assets().iter().map(|a| a.ticker.clone()).collect(),
        stats,
    })
}

pub(crate) fn require_obs(ticker: &str, found: usize, needed: usize) -> Result<()> {
    if found < needed {
        return Err(Error::InsufficientData {
            asset: ticker.to_string(),
            needed,
            found,
        });
    }
    Ok(())
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Arithmetic mean clamped into `[min, max]`, so a constant series has its
/// constant as mean exactly.
pub(crate) fn mean(xs: &[f64]) -> f64 {
    let (lo, hi) = min_max(xs);
    (xs.iter().sum::<f64>() / xs.len() as f64).clamp(lo, hi)
}

/// Sample standard deviation (n − 1 denominator). Requires `xs.len() >= 2`.
pub(crate) fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn regions(tickers: &[&str]) -> RegionMap {
        tickers.iter().map(|t| (t.to_string(), Region::Brazil)).collect()
    }

    fn panel(cols: &[&[f64]]) -> PricePanel {
        let rows = cols[0].len();
        let dates = (0..rows)
            .map(|d| NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(d as u64))
            .collect();
        let assets = (0..cols.len())
            .map(|i| AssetMeta::new(format!("A{i}"), Region::US, 1.0))
            .collect();
        let m = Matrix::from_fn(rows, cols.len(), |t, i| cols[i][t]);
        PricePanel::new(dates, assets, m).unwrap()
    }

    #[test]
    fn blank_cell_drops_whole_row() {
        let csv = "date,A,B\n2020-01-01,1,2\n2020-01-02,1.5,2.5\n2020-01-03,,3\n2020-01-04,2,4\n";
        let p = load_prices(csv.as_bytes(), &regions(&["A", "B"])).unwrap();
        assert_eq!(p.dates().len(), 3);
        assert_eq!(p.dates()[2], NaiveDate::from_ymd_opt(2020, 1, 4).unwrap());
        assert_eq!(p.assets()[1].final_price, 4.0);
    }

    #[test]
    fn unparseable_and_nonpositive_cells_drop_rows() {
        let csv = "date,A\n2020-01-01,1\n2020-01-02,abc\n2020-01-03,0\n2020-01-04,-2\n2020-01-05,3\n";
        let p = load_prices(csv.as_bytes(), &regions(&["A"])).unwrap();
        assert_eq!(p.dates().len(), 2);
        assert_eq!(p.prices().column(0).collect::<Vec<_>>(), vec![1.0, 3.0]);
    }

    #[test]
    fn final_price_is_last_row() {
        let csv = "date,A\n2020-01-01,100\n2020-01-02,110\n";
        let p = load_prices(csv.as_bytes(), &regions(&["A"])).unwrap();
        assert_eq!(p.assets()[0].final_price, 110.0);
    }

    #[test]
    fn rows_are_sorted_by_date() {
        let csv = "date,A\n2020-01-03,3\n2020-01-01,1\n2020-01-02,2\n";
        let p = load_prices(csv.as_bytes(), &regions(&["A"])).unwrap();
        assert_eq!(p.prices().column(0).collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        assert_eq!(p.assets()[0].final_price, 3.0);
    }

    #[test]
    fn load_errors() {
        let r = regions(&["A"]);
        assert!(matches!(
            load_prices("date,A\n2020-01-01,1\n".as_bytes(), &r),
            Err(Error::EmptyPanel { rows: 1 })
        ));
        assert!(matches!(
            load_prices("date,A\n2020-01-01,1\n2020-01-02,\n".as_bytes(), &r),
            Err(Error::EmptyPanel { rows: 1 })
        ));
        assert!(matches!(
            load_prices("date,Z\n2020-01-01,1\n2020-01-02,2\n".as_bytes(), &r),
            Err(Error::UnknownTicker(t)) if t == "Z"
        ));
        assert!(matches!(
            load_prices("date,A\n2020-01-01,1\n2020-01-01,2\n".as_bytes(), &r),
            Err(Error::DuplicateDate(_))
        ));
        assert!(matches!(
            load_prices("day,A\n2020-01-01,1\n2020-01-02,2\n".as_bytes(), &r),
            Err(Error::MalformedHeader(_))
        ));
        assert!(matches!(
            load_prices("date,A,A\n2020-01-01,1,1\n2020-01-02,2,2\n".as_bytes(), &r),
            Err(Error::MalformedHeader(_))
        ));
        assert!(matches!(
            load_prices("date,A\n01/02/2020,1\n2020-01-02,2\n".as_bytes(), &r),
            Err(Error::MalformedDate { .. })
        ));
    }

    #[test]
    fn region_map_parses() {
        let m = load_region_map(r#"{"GOLL4.SA": "Brazil", "AAPL": "US", "SAP": "europe"}"#.as_bytes())
            .unwrap();
        assert_eq!(m["GOLL4.SA"], Region::Brazil);
        assert_eq!(m["SAP"], Region::Europe);
        assert!(load_region_map(r#"{"X": "Mars"}"#.as_bytes()).is_err());
    }

    #[test]
    fn log_return_examples() {
        let e = std::f64::consts::E;
        let r = compute_log_returns(&panel(&[&[100.0, 100.0], &[100.0, 100.0 * e], &[100.0, 90.0]]));
        assert_eq!(r.n_obs(), 1);
        assert_eq!(r.returns()[(0, 0)], 0.0);
        assert!((r.returns()[(0, 1)] - 1.0).abs() < 1e-15);
        assert!((r.returns()[(0, 2)] - (-0.105_360_515_657_826_3)).abs() < 1e-12);
    }

    #[test]
    fn normalized_prices() {
        let n = normalize_prices(&panel(&[&[50.0, 25.0], &[3.0, 6.0]]));
        assert_eq!(n.row(0), &[1.0, 1.0]);
        assert_eq!(n.row(1), &[0.5, 2.0]);
    }

    #[test]
    fn stats_examples() {
        let p = panel(&[&[1.0, 2.0, 3.0, 4.0]]);
        let assets = p.assets().to_vec();
        let dates = p.dates()[1..3].to_vec();
        let r = ReturnPanel::new(dates.clone(), assets.clone(), Matrix::from_rows(vec![vec![0.01], vec![-0.01]]).unwrap())
            .unwrap();
        let s = descriptive_stats(&r).unwrap().stats[0];
        assert_eq!((s.mean, s.min, s.max), (0.0, -0.01, 0.01));

        let r = ReturnPanel::new(
            p.dates()[1..].to_vec(),
            assets.clone(),
            Matrix::from_rows(vec![vec![0.02], vec![0.02], vec![0.02]]).unwrap(),
        )
        .unwrap();
        let s = descriptive_stats(&r).unwrap().stats[0];
        assert_eq!(s.std_dev, 0.0);
        assert_eq!(s.mean, 0.02);

        let r = ReturnPanel::new(dates[..1].to_vec(), assets, Matrix::from_rows(vec![vec![0.01]]).unwrap()).unwrap();
        assert!(matches!(descriptive_stats(&r), Err(Error::InsufficientData { needed: 2, found: 1, .. })));
    }
}
