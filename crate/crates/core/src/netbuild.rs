//! Correlation and exposure networks, threshold filtering, clustering
//! coefficients and Erdős-Rényi benchmark graphs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marketdata::{mean, require_obs, sample_std, AssetMeta, Region, ReturnPanel};
use crate::matrix::Matrix;

/// Pearson correlation matrix: symmetric, unit diagonal, entries in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix(Matrix);

impl CorrelationMatrix {
    /// Wraps a matrix after checking the invariants (symmetry within 1e-12).
    pub fn new(m: Matrix) -> Result<Self> {
        let n = m.rows();
        m.ensure_square(n)?;
        for i in 0..n {
            if m[(i, i)] != 1.0 {
                return Err(Error::InvalidParameter(format!("diagonal entry {i} is not 1")));
            }
        }
        if !m.is_symmetric(1e-12) {
            return Err(Error::InvalidParameter("correlation matrix is not symmetric".into()));
        }
        if m.iter_rows().flatten().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter("correlation outside [-1, 1]".into()));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Correlations below `theta` (and the diagonal) zeroed.
    pub fn filtered(&self, theta: f64) -> Matrix {
        apply_threshold(&self.0, theta)
    }
}

pub fn correlation_matrix(returns: &ReturnPanel) -> Result<CorrelationMatrix> {
    let n = returns.n_assets();
    let mut centered = Vec::with_capacity(n);
    let mut norms = Vec::with_capacity(n);
    for (i, asset) in returns.assets().iter().enumerate() {
        let xs = returns.series(i);
        require_obs(&asset.ticker, xs.len(), 2)?;
        let m = mean(&xs);
        let c: Vec<f64> = xs.iter().map(|x| x - m).collect();
        let ss: f64 = c.iter().map(|v| v * v).sum();
        if ss == 0.0 {
            return Err(Error::ZeroVariance(asset.ticker.clone()));
        }
        norms.push(ss.sqrt());
        centered.push(c);
    }
    let mut rho = Matrix::zeros(n, n);
    for i in 0..n {
        rho[(i, i)] = 1.0;
        for j in 0..i {
            let cross: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
            let r = (cross / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            rho[(i, j)] = r;
            rho[(j, i)] = r;
        }
    }
    Ok(CorrelationMatrix(rho))
}

/// Sample standard deviation of each asset's returns.
pub fn volatilities(returns: &ReturnPanel) -> Result<Vec<f64>> {
    returns
        .assets()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let xs = returns.series(i);
            require_obs(&a.ticker, xs.len(), 2)?;
            Ok(sample_std(&xs))
        })
        .collect()
}

/// `E[i][j] = rho[i][j] * sigma[i] * price[i]` off the diagonal, zero on it.
/// Rows scale by the source asset, so the result is generally asymmetric.
pub fn exposure_matrix(rho: &CorrelationMatrix, sigma: &[f64], final_prices: &[f64]) -> Result<Matrix> {
    let n = rho.len();
    for len in [sigma.len(), final_prices.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, found: len });
        }
    }
    if final_prices.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::InvalidParameter("final prices must be positive".into()));
    }
    let r = rho.matrix();
    Ok(Matrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            r[(i, j)] * sigma[i] * final_prices[i]
        }
    }))
}

/// Keeps entries `>= theta`, zeroes everything else and the diagonal.
pub fn apply_threshold(m: &Matrix, theta: f64) -> Matrix {
    Matrix::from_fn(m.rows(), m.cols(), |i, j| {
        let v = m[(i, j)];
        if i != j && v >= theta {
            v
        } else {
            0.0
        }
    })
}

/// Quantity compared against the threshold when filtering the exposure network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    /// Keep `E_ij` where `E_ij >= theta` (threshold in price units).
    Exposure,
    /// Keep `E_ij` where `rho_ij >= theta` (threshold on the correlation).
    Correlation,
}

impl fmt::Display for FilterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterMode::Exposure => "exposure",
            FilterMode::Correlation => "correlation",
        })
    }
}

impl FromStr for FilterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exposure" => Ok(FilterMode::Exposure),
            "correlation" => Ok(FilterMode::Correlation),
            _ => Err(Error::InvalidParameter(format!(
                "unknown filter mode `{s}` (expected `exposure` or `correlation`)"
            ))),
        }
    }
}

/// Thresholded exposure matrix. Non-negative, zero diagonal; an edge
/// `i -> j` exists where `exposures[i][j] > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureNetwork {
    exposures: Matrix,
    theta: f64,
    mode: FilterMode,
}

impl ExposureNetwork {
    pub fn build(
        rho: &CorrelationMatrix,
        sigma: &[f64],
        final_prices: &[f64],
        theta: f64,
        mode: FilterMode,
    ) -> Result<Self> {
        if !(theta >= 0.0 && theta.is_finite()) {
            return Err(Error::InvalidParameter(format!("theta must be >= 0, got {theta}")));
        }
        let raw = exposure_matrix(rho, sigma, final_prices)?;
        let exposures = match mode {
            FilterMode::Exposure => apply_threshold(&raw, theta),
            FilterMode::Correlation => {
                let keep = rho.filtered(theta);
                Matrix::from_fn(raw.rows(), raw.cols(), |i, j| {
                    // rho >= theta > 0 implies E > 0; rho == 0 at theta == 0 carries nothing.
                    if keep[(i, j)] > 0.0 {
                        raw[(i, j)].max(0.0)
                    } else {
                        0.0
                    }
                })
            }
        };
        Ok(Self {
            exposures,
            theta,
            mode,
        })
    }

    /// Uses `exposures` as already filtered. Negative entries are rejected and
    /// the diagonal must be zero.
    pub fn from_filtered(exposures: Matrix, theta: f64, mode: FilterMode) -> Result<Self> {
        let n = exposures.rows();
        exposures.ensure_square(n)?;
        for i in 0..n {
            if exposures[(i, i)] != 0.0 {
                return Err(Error::InvalidParameter("exposure diagonal must be zero".into()));
            }
        }
        if exposures.iter_rows().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter("exposures must be finite and non-negative".into()));
        }
        Ok(Self {
            exposures,
            theta,
            mode,
        })
    }

    /// Network with no edges.
    pub fn empty(n: usize) -> Self {
        Self {
            exposures: Matrix::zeros(n, n),
            theta: 0.0,
            mode: FilterMode::Exposure,
        }
    }

    pub fn exposures(&self) -> &Matrix {
        &self.exposures
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn mode(&self) -> FilterMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.exposures.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Directed adjacency `exposures > 0`.
    pub fn adjacency(&self) -> Adjacency {
        Adjacency::from_matrix(&self.exposures)
    }

    /// `D_i = sum_j E[j][i]`.
    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.exposures.column(i).sum()).collect()
    }

    /// Mean of the strictly positive exposures, `None` without edges.
    pub fn mean_nonzero_exposure(&self) -> Option<f64> {
        let (sum, count) = self
            .exposures
            .iter_rows()
            .flatten()
            .filter(|v| **v > 0.0)
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        (count > 0).then(|| sum / count as f64)
    }
}

/// Square boolean adjacency matrix with zero diagonal.
#[derive(Clone, PartialEq, Eq)]
pub struct Adjacency {
    n: usize,
    bits: Vec<bool>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            bits: vec![false; n * n],
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut a = Self::empty(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    a.bits[i * n + j] = true;
                }
            }
        }
        a
    }

    /// Edge wherever the entry is non-zero (the diagonal is ignored).
    pub fn from_matrix(m: &Matrix) -> Self {
        let n = m.rows();
        let mut a = Self::empty(n);
        for i in 0..n {
            for j in 0..n {
                if i != j && m[(i, j)] != 0.0 {
                    a.bits[i * n + j] = true;
                }
            }
        }
        a
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut a = Self::empty(n);
        for (i, j) in edges {
            a.add_undirected(i, j);
        }
        a
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn has(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, present: bool) {
        if i != j {
            self.bits[i * self.n + j] = present;
        }
    }

    pub fn add_undirected(&mut self, i: usize, j: usize) {
        self.set(i, j, true);
        self.set(j, i, true);
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.has(i, j) == self.has(j, i)))
    }

    /// Undirected edge where either direction is present.
    pub fn symmetrized(&self) -> Self {
        let mut a = self.clone();
        for i in 0..self.n {
            for j in 0..i {
                if self.has(i, j) || self.has(j, i) {
                    a.add_undirected(i, j);
                }
            }
        }
        a
    }

    /// Undirected edge only where both directions are present.
    pub fn mutual(&self) -> Self {
        let mut a = Self::empty(self.n);
        for i in 0..self.n {
            for j in 0..i {
                if self.has(i, j) && self.has(j, i) {
                    a.add_undirected(i, j);
                }
            }
        }
        a
    }

    /// Number of unordered pairs `{i, j}` with an edge in at least one direction.
    pub fn undirected_edge_count(&self) -> usize {
        (0..self.n)
            .map(|i| (0..i).filter(|&j| self.has(i, j) || self.has(j, i)).count())
            .sum()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.has(i, j))
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.n, self.n, |i, j| if self.has(i, j) { 1.0 } else { 0.0 })
    }
}

impl fmt::Debug for Adjacency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Adjacency {} [", self.n)?;
        for i in 0..self.n {
            let row: String = (0..self.n).map(|j| if self.has(i, j) { '1' } else { '0' }).collect();
            writeln!(f, "  {row}")?;
        }
        write!(f, "]")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub clustering: Vec<f64>,
    pub degree: Vec<usize>,
}

/// Local clustering `C_i = 2 T_i / (k_i (k_i - 1))`, zero when `k_i < 2`.
///
/// With `symmetrize` an undirected edge exists where either direction does;
/// without it only mutual (both-direction) edges count, which is the same
/// thing for an already symmetric adjacency.
pub fn clustering_coefficients(adjacency: &Adjacency, symmetrize: bool) -> NodeMetrics {
    let g = if symmetrize {
        adjacency.symmetrized()
    } else {
        adjacency.mutual()
    };
    let n = g.len();
    let mut clustering = Vec::with_capacity(n);
    let mut degree = Vec::with_capacity(n);
    for i in 0..n {
        let nbrs: Vec<usize> = g.neighbors(i).collect();
        let k = nbrs.len();
        degree.push(k);
        if k < 2 {
            clustering.push(0.0);
            continue;
        }
        let mut links = 0usize;
        for (a, &u) in nbrs.iter().enumerate() {
            links += nbrs[a + 1..].iter().filter(|&&v| g.has(u, v)).count();
        }
        clustering.push(2.0 * links as f64 / (k * (k - 1)) as f64);
    }
    NodeMetrics { clustering, degree }
}

/// G(n, p) with pairs `(i, j)`, `i < j`, visited in row-major order, each
/// kept when a ChaCha8 uniform draw in `[0, 1)` is `< p`.
pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Adjacency> {
    if n == 0 {
        return Err(Error::InvalidParameter("graph needs at least one node".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("edge probability {p} is outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Adjacency::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                a.add_undirected(i, j);
            }
        }
    }
    Ok(a)
}

/// Mean undirected degree per region, over the regions present in `assets`.
pub fn group_degree_stats(adjacency: &Adjacency, assets: &[AssetMeta]) -> Result<BTreeMap<Region, f64>> {
    if assets.len() != adjacency.len() {
        return Err(Error::DimensionMismatch {
            expected: adjacency.len(),
            found: assets.len(),
        });
    }
    let g = adjacency.symmetrized();
    let mut acc: BTreeMap<Region, (usize, usize)> = BTreeMap::new();
    for (i, a) in assets.iter().enumerate() {
        let e = acc.entry(a.region).or_default();
        e.0 += g.degree(i);
        e.1 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(r, (sum, count))| (r, sum as f64 / count as f64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn returns(cols: &[&[f64]]) -> ReturnPanel {
        let rows = cols[0].len();
        let dates = (0..rows)
            .map(|d| NaiveDate::from_ymd_opt(2021, 1, 1).unwrap() + chrono::Days::new(d as u64))
            .collect();
        let assets = (0..cols.len())
            .map(|i| AssetMeta::new(format!("A{i}"), Region::Brazil, 100.0))
            .collect();
        ReturnPanel::new(dates, assets, Matrix::from_fn(rows, cols.len(), |t, i| cols[i][t])).unwrap()
    }

    #[test]
    fn correlation_examples() {
        let a = [0.01, -0.02, 0.03, 0.005, -0.01];
        let b: Vec<f64> = a.iter().map(|x| -x).collect();
        let rho = correlation_matrix(&returns(&[&a, &b, &a])).unwrap();
        let m = rho.matrix();
        assert_eq!(m[(0, 0)], 1.0);
        assert!((m[(0, 1)] + 1.0).abs() < 1e-12);
        assert!((m[(0, 2)] - 1.0).abs() < 1e-12);
        assert!(m.is_symmetric(0.0));
    }

    #[test]
    fn correlation_errors() {
        let r = returns(&[&[0.01, 0.02], &[0.03, 0.03]]);
        assert!(matches!(correlation_matrix(&r), Err(Error::ZeroVariance(t)) if t == "A1"));
        let r = returns(&[&[0.01]]);
        assert!(matches!(correlation_matrix(&r), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn volatility_examples() {
        let v = volatilities(&returns(&[&[0.02, 0.02, 0.02], &[-0.01, 0.01, 0.0]])).unwrap();
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 0.01).abs() < 1e-15);
        let v = volatilities(&returns(&[&[-0.01, 0.01]])).unwrap();
        assert!((v[0] - 0.014_142_135_623_730_95).abs() < 1e-15);
    }

    #[test]
    fn exposure_examples() {
        let rho = CorrelationMatrix::new(
            Matrix::from_rows(vec![vec![1.0, 0.5, 0.0], vec![0.5, 1.0, -0.3], vec![0.0, -0.3, 1.0]]).unwrap(),
        )
        .unwrap();
        let e = exposure_matrix(&rho, &[0.02, 0.04, 0.01], &[100.0, 50.0, 10.0]).unwrap();
        assert!((e[(0, 1)] - 1.0).abs() < 1e-15);
        assert_eq!(e[(0, 2)], 0.0);
        assert!((e[(1, 0)] - 1.0).abs() < 1e-15);
        assert!(e[(1, 2)] < 0.0);
        assert_eq!(e[(1, 1)], 0.0);
        assert_eq!(apply_threshold(&e, 0.5)[(1, 2)], 0.0);
        assert!(matches!(
            exposure_matrix(&rho, &[0.02], &[1.0, 1.0, 1.0]),
            Err(Error::DimensionMismatch { expected: 3, found: 1 })
        ));
    }

    #[test]
    fn threshold_examples() {
        let m = Matrix::from_rows(vec![vec![0.0, 0.4], vec![0.6, 0.0]]).unwrap();
        assert_eq!(apply_threshold(&m, 0.5).to_rows(), vec![vec![0.0, 0.0], vec![0.6, 0.0]]);
        let m = Matrix::from_rows(vec![vec![5.0, -0.1, 0.0], vec![0.2, 1.0, 0.0], vec![0.0, 0.3, 1.0]]).unwrap();
        let f = apply_threshold(&m, 0.0);
        assert_eq!(f.to_rows(), vec![vec![0.0, 0.0, 0.0], vec![0.2, 0.0, 0.0], vec![0.0, 0.3, 0.0]]);
        let m = Matrix::from_rows(vec![vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        assert_eq!(apply_threshold(&m, 0.5)[(0, 1)], 0.5);
    }

    #[test]
    fn network_filter_modes() {
        let rho = CorrelationMatrix::new(
            Matrix::from_rows(vec![vec![1.0, 0.4, 0.2], vec![0.4, 1.0, 0.6], vec![0.2, 0.6, 1.0]]).unwrap(),
        )
        .unwrap();
        let sigma = [0.02, 0.02, 0.02];
        let prices = [100.0, 10.0, 100.0];
        // E rows: [0, 0.8, 0.4], [0.08, 0, 0.12], [0.4, 1.2, 0]
        let ex = ExposureNetwork::build(&rho, &sigma, &prices, 0.3, FilterMode::Exposure).unwrap();
        let keep: Vec<Vec<bool>> = ex.exposures().iter_rows().map(|r| r.iter().map(|v| *v > 0.0).collect()).collect();
        assert_eq!(keep, vec![vec![false, true, true], vec![false, false, false], vec![true, true, false]]);
        assert!(ex.exposures().iter_rows().flatten().all(|v| *v == 0.0 || *v >= 0.3));

        let co = ExposureNetwork::build(&rho, &sigma, &prices, 0.3, FilterMode::Correlation).unwrap();
        let keep: Vec<Vec<bool>> = co.exposures().iter_rows().map(|r| r.iter().map(|v| *v > 0.0).collect()).collect();
        assert_eq!(keep, vec![vec![false, true, false], vec![true, false, true], vec![false, true, false]]);
        assert!((co.exposures()[(1, 0)] - 0.08).abs() < 1e-15);

        let d = co.column_sums();
        assert!((d[0] - 0.08).abs() < 1e-15);
        assert!(ExposureNetwork::build(&rho, &sigma, &prices, -0.1, FilterMode::Exposure).is_err());
    }

    #[test]
    fn clustering_examples() {
        let k4 = clustering_coefficients(&Adjacency::complete(4), false);
        assert_eq!(k4.clustering, vec![1.0; 4]);
        assert_eq!(k4.degree, vec![3; 4]);

        let star = Adjacency::from_edges(5, (1..5).map(|j| (0, j)));
        let m = clustering_coefficients(&star, false);
        assert_eq!(m.clustering, vec![0.0; 5]);
        assert_eq!(m.degree[0], 4);

        // triangle a,b,c with pendant d on a
        let g = Adjacency::from_edges(4, [(0, 1), (1, 2), (0, 2), (0, 3)]);
        let m = clustering_coefficients(&g, false);
        assert!((m.clustering[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(&m.clustering[1..], &[1.0, 1.0, 0.0]);
    }

    #[test]
    fn clustering_symmetrize_flag() {
        let mut g = Adjacency::empty(3);
        g.set(0, 1, true);
        g.set(1, 2, true);
        g.set(2, 0, true);
        assert_eq!(clustering_coefficients(&g, true).clustering, vec![1.0; 3]);
        assert_eq!(clustering_coefficients(&g, false).degree, vec![0; 3]);
    }

    #[test]
    fn erdos_renyi_extremes() {
        let g = erdos_renyi(12, 0.0, 7).unwrap();
        assert_eq!(g.undirected_edge_count(), 0);
        let g = erdos_renyi(12, 1.0, 7).unwrap();
        assert_eq!(g, Adjacency::complete(12));
        assert_eq!(erdos_renyi(20, 0.3, 99).unwrap(), erdos_renyi(20, 0.3, 99).unwrap());
        assert!(erdos_renyi(0, 0.3, 1).is_err());
        assert!(erdos_renyi(3, 1.3, 1).is_err());
        let g = erdos_renyi(1, 1.0, 1).unwrap();
        assert_eq!(g.undirected_edge_count(), 0);
    }

    #[test]
    fn degree_by_region() {
        let assets: Vec<AssetMeta> = [Region::Brazil, Region::Brazil, Region::US, Region::Asia]
            .iter()
            .enumerate()
            .map(|(i, r)| AssetMeta::new(format!("T{i}"), *r, 1.0))
            .collect();
        let empty = group_degree_stats(&Adjacency::empty(4), &assets).unwrap();
        assert!(empty.values().all(|v| *v == 0.0));
        assert_eq!(empty.len(), 3);
        let full = group_degree_stats(&Adjacency::complete(4), &assets).unwrap();
        assert!(full.values().all(|v| *v == 3.0));
        let g = Adjacency::from_edges(4, [(0, 1), (0, 2)]);
        let s = group_degree_stats(&g, &assets).unwrap();
        assert_eq!(s[&Region::Brazil], 1.5);
        assert_eq!(s[&Region::US], 1.0);
        assert_eq!(s[&Region::Asia], 0.0);
        assert!(group_degree_stats(&g, &assets[..2]).is_err());
    }
}
