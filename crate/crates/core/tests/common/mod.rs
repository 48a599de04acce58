//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use eqcontagion::marketdata::{AssetMeta, Region};
use eqcontagion::matrix::Matrix;
use eqcontagion::netbuild::Adjacency;

/// Order statistic without sorting: the smallest sample value `x` such that
/// more than `k` observations are `<= x`.
pub fn oracle_order_statistic(xs: &[f64], k: usize) -> f64 {
    xs.iter()
        .copied()
        .filter(|&x| xs.iter().filter(|&&y| y <= x).count() > k)
        .fold(f64::INFINITY, f64::min)
}

pub fn oracle_var(xs: &[f64], alpha: f64) -> f64 {
    let n = xs.len();
    let k = (((1.0 - alpha) * n as f64).floor() as usize).min(n - 1);
    oracle_order_statistic(xs, k)
}

/// Tail mean over `r <= var`, scanned in input order, clamped to
/// `[tail min, var]` as the estimator defines.
pub fn oracle_cvar(xs: &[f64], alpha: f64) -> f64 {
    let var = oracle_var(xs, alpha);
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut lo = f64::INFINITY;
    for &x in xs {
        if x <= var {
            sum += x;
            count += 1;
            lo = lo.min(x);
        }
    }
    (sum / count as f64).clamp(lo, var)
}

/// O(n^3) triangle enumeration on the symmetrized graph.
pub fn oracle_clustering(adj: &Adjacency) -> (Vec<f64>, Vec<usize>) {
    let n = adj.len();
    let e = |i: usize, j: usize| adj.has(i, j) || adj.has(j, i);
    let mut tri = vec![0usize; n];
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                if e(a, b) && e(b, c) && e(a, c) {
                    tri[a] += 1;
                    tri[b] += 1;
                    tri[c] += 1;
                }
            }
        }
    }
    let deg: Vec<usize> = (0..n).map(|i| (0..n).filter(|&j| j != i && e(i, j)).count()).collect();
    let c = (0..n)
        .map(|i| {
            if deg[i] < 2 {
                0.0
            } else {
                2.0 * tri[i] as f64 / (deg[i] * (deg[i] - 1)) as f64
            }
        })
        .collect();
    (c, deg)
}

pub fn universe(n: usize) -> Vec<AssetMeta> {
    (0..n)
        .map(|i| {
            let region = Region::ALL[i % 4];
            AssetMeta::new(format!("A{i:02}"), region, 10.0 + i as f64)
        })
        .collect()
}

/// Symmetric matrix with zero diagonal and off-diagonal values from `vals`
/// (row-major upper triangle).
pub fn symmetric_from_upper(n: usize, vals: &[f64]) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            m[(i, j)] = vals[k];
            m[(j, i)] = vals[k];
            k += 1;
        }
    }
    m
}

pub const BRAZIL: [&str; 13] = [
    "ABEV3.SA", "AMER3.SA", "BBAS3.SA", "BBDC4.SA", "BOVA11.SA", "BRFS3.SA", "CSNA3.SA", "GOLL4.SA", "ITUB4.SA",
    "MGLU3.SA", "PETR4.SA", "VALE3.SA", "WEGE3.SA",
];
pub const DEVELOPED: [(&str, Region); 7] = [
    ("AAPL", Region::US),
    ("AMZN", Region::US),
    ("JPM", Region::US),
    ("NSRGY", Region::Europe),
    ("SAP", Region::Europe),
    ("BABA", Region::Asia),
    ("TM", Region::Asia),
];

/// 20-asset universe (13 Brazil, 7 developed) in alphabetical ticker order.
pub fn reference_universe_tickers() -> Vec<(String, Region)> {
    let mut v: Vec<(String, Region)> = BRAZIL
        .iter()
        .map(|t| (t.to_string(), Region::Brazil))
        .chain(DEVELOPED.iter().map(|(t, r)| (t.to_string(), *r)))
        .collect();
    v.sort();
    v
}

/// Synthetic two-factor price panel as CSV plus the region map JSON.
/// Brazilian names load heavily on a shared local factor; developed names
/// mostly on idiosyncratic noise. Roughly 1% of cells are blank.
pub fn synthetic_market(seed: u64, days: usize) -> (String, String) {
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).unwrap();
    let assets = reference_universe_tickers();
    let n = assets.len();
    let beta_local: Vec<f64> = assets
        .iter()
        .map(|(_, r)| if *r == Region::Brazil { rng.random_range(0.85..0.97) } else { rng.random_range(0.0..0.3) })
        .collect();
    let vol: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.045)).collect();
    let mut price: Vec<f64> = (0..n).map(|_| rng.random_range(5.0..150.0)).collect();

    let mut csv = String::from("date");
    for (t, _) in &assets {
        csv.push(',');
        csv.push_str(t);
    }
    csv.push('\n');
    let start = chrono::NaiveDate::from_ymd_opt(2015, 1, 2).unwrap();
    for d in 0..days {
        let local: f64 = std.sample(&mut rng);
        csv.push_str(&(start + chrono::Days::new(d as u64)).format("%Y-%m-%d").to_string());
        for i in 0..n {
            if d > 0 {
                let idio: f64 = std.sample(&mut rng);
                let b = beta_local[i];
                let z = b * local + (1.0 - b * b).sqrt() * idio;
                price[i] *= (vol[i] * z).exp();
            }
            csv.push(',');
            if d > 0 && rng.random::<f64>() < 0.01 {
                continue;
            }
            csv.push_str(&format!("{:.6}", price[i]));
        }
        csv.push('\n');
    }
    let regions: std::collections::BTreeMap<String, String> =
        assets.iter().map(|(t, r)| (t.clone(), r.as_str().to_string())).collect();
    (csv, serde_json::to_string(&regions).unwrap())
}
