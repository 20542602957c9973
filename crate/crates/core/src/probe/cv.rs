use log::warn;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::PredictionMatrix;
use super::ridge::ridge_fit;
use super::stats::{mean, mean_squared_error, pearson};
use super::ProbeError;

/// Ridge penalties searched by default.
pub const DEFAULT_GRID: [f64; 9] = [0.0001, 0.001, 0.01, 0.1, 1.0, 2.0, 5.0, 10.0, 100.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedCvConfig {
    pub grid: Vec<f64>,
    pub k_outer: usize,
    pub k_inner: usize,
    pub seed: u64,
    pub bootstrap_iterations: usize,
}

impl Default for NestedCvConfig {
    fn default() -> Self {
        NestedCvConfig {
            grid: DEFAULT_GRID.to_vec(),
            k_outer: 10,
            k_inner: 10,
            seed: 0,
            bootstrap_iterations: 1000,
        }
    }
}

/// Row indices of one outer fold and its inner splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub test: Vec<usize>,
    pub train: Vec<usize>,
    /// (training, validation) index pairs, both inside `train`.
    pub inner: Vec<(Vec<usize>, Vec<usize>)>,
}

impl FoldPlan {
    /// Test rows never enter an inner training or validation set, and every
    /// inner split partitions the outer training rows.
    pub fn check_disjoint(&self) -> Result<(), ProbeError> {
        let mut in_test = std::collections::BTreeSet::new();
        in_test.extend(self.test.iter().copied());
        let train: std::collections::BTreeSet<usize> = self.train.iter().copied().collect();
        if self.train.iter().any(|i| in_test.contains(i)) {
            return Err(ProbeError::Invalid("outer train and test overlap".into()));
        }
        for (t, v) in &self.inner {
            let all = t.iter().chain(v);
            let mut seen = std::collections::BTreeSet::new();
            for i in all {
                if in_test.contains(i) || !train.contains(i) || !seen.insert(*i) {
                    return Err(ProbeError::Invalid(format!("inner fold leaks row {i}")));
                }
            }
            if seen.len() != train.len() {
                return Err(ProbeError::Invalid("inner split does not cover the outer training rows".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterFoldReport {
    pub fold: usize,
    pub test_size: usize,
    pub chosen_lambda: f64,
    /// Mean inner validation MSE per grid value, in grid order.
    pub inner_mse: Vec<f64>,
    /// `None` when the fold's correlation is undefined.
    pub pearson_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedCvReport {
    pub columns: Vec<String>,
    pub grid: Vec<f64>,
    pub k_outer: usize,
    pub k_inner: usize,
    pub seed: u64,
    pub folds: Vec<OuterFoldReport>,
    pub valid_folds: usize,
    pub mean_r: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bootstrap_iterations: usize,
    #[serde(skip)]
    pub plans: Vec<FoldPlan>,
    /// Prediction for every row from the model of the fold that held it out.
    #[serde(skip)]
    pub out_of_fold: Vec<f64>,
}

/// Splits shuffled indices into `k` blocks whose sizes differ by at most one.
fn k_folds(mut idx: Vec<usize>, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    idx.shuffle(rng);
    let n = idx.len();
    (0..k)
        .map(|f| {
            let mut block = idx[f * n / k..(f + 1) * n / k].to_vec();
            block.sort_unstable();
            block
        })
        .collect()
}

fn complement(all: &[usize], held: &[usize]) -> Vec<usize> {
    let held: std::collections::BTreeSet<usize> = held.iter().copied().collect();
    all.iter().copied().filter(|i| !held.contains(i)).collect()
}

fn rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    x.select_rows(idx)
}

fn pick(y: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| y[i]).collect()
}

/// Deterministic fold plan: stream 0 of the seed orders the outer split and
/// outer fold `f` draws its inner split from stream `f + 1`. The bootstrap
/// uses the last stream.
pub fn plan_folds(n: usize, k_outer: usize, k_inner: usize, seed: u64) -> Result<Vec<FoldPlan>, ProbeError> {
    if k_outer < 2 || k_inner < 2 {
        return Err(ProbeError::Invalid("fold counts must be at least 2".into()));
    }
    if n < k_outer {
        return Err(ProbeError::Invalid(format!("{n} rows cannot fill {k_outer} outer folds")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outer = k_folds((0..n).collect(), k_outer, &mut rng);
    let all: Vec<usize> = (0..n).collect();
    outer
        .into_iter()
        .enumerate()
        .map(|(f, test)| {
            let train = complement(&all, &test);
            if train.len() < k_inner {
                return Err(ProbeError::Invalid(format!(
                    "outer fold {f} leaves {} training rows for {k_inner} inner folds",
                    train.len()
                )));
            }
            let mut inner_rng = ChaCha8Rng::seed_from_u64(seed);
            inner_rng.set_stream(f as u64 + 1);
            let inner = k_folds(train.clone(), k_inner, &mut inner_rng)
                .into_iter()
                .map(|v| (complement(&train, &v), v))
                .collect();
            Ok(FoldPlan { test, train, inner })
        })
        .collect()
}

/// Percentile interval of the mean of `values` under resampling with
/// replacement.
pub fn bootstrap_mean_ci(values: &[f64], iterations: usize, rng: &mut impl Rng) -> (f64, f64) {
    if values.is_empty() || iterations == 0 {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len();
    let mut means: Vec<f64> = (0..iterations)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = q * (iterations - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        means[lo] + (means[hi] - means[lo]) * (pos - lo as f64)
    };
    (at(0.025), at(0.975))
}

/// Ridge ensemble of the prediction columns, evaluated by nested
/// cross-validation. The inner loop picks the penalty with the lowest mean
/// validation MSE (ties go to the smaller penalty); the outer loop reports
/// Pearson r on each held-out fold. Folds whose r is undefined are skipped.
pub fn nested_cv(predictions: &PredictionMatrix, gold: &[f64], config: &NestedCvConfig) -> Result<NestedCvReport, ProbeError> {
    let n = predictions.nrows();
    if gold.len() != n {
        return Err(ProbeError::Length { expected: n, found: gold.len() });
    }
    if config.grid.is_empty() {
        return Err(ProbeError::Invalid("penalty grid is empty".into()));
    }
    if config.grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        return Err(ProbeError::Invalid("penalties must be finite and non-negative".into()));
    }
    let x = DMatrix::from_fn(n, predictions.ncols(), |r, c| predictions.get(r, c));
    let plans = plan_folds(n, config.k_outer, config.k_inner, config.seed)?;

    let mut folds = Vec::with_capacity(plans.len());
    let mut out_of_fold = vec![f64::NAN; n];
    for (f, plan) in plans.iter().enumerate() {
        plan.check_disjoint()?;
        let mut inner_mse = Vec::with_capacity(config.grid.len());
        for &lambda in &config.grid {
            let mut errs = Vec::with_capacity(plan.inner.len());
            for (t, v) in &plan.inner {
                let fit = ridge_fit(&rows(&x, t), &pick(gold, t), lambda)?;
                errs.push(mean_squared_error(&fit.predict(&rows(&x, v)), &pick(gold, v)));
            }
            inner_mse.push(mean(&errs));
        }
        let mut best = 0;
        for (i, &m) in inner_mse.iter().enumerate() {
            let (l, bl) = (config.grid[i], config.grid[best]);
            if m < inner_mse[best] || (m == inner_mse[best] && l < bl) {
                best = i;
            }
        }
        let lambda = config.grid[best];
        let fit = ridge_fit(&rows(&x, &plan.train), &pick(gold, &plan.train), lambda)?;
        let pred = fit.predict(&rows(&x, &plan.test));
        for (&i, p) in plan.test.iter().zip(&pred) {
            out_of_fold[i] = *p;
        }
        let r = match pearson(&pred, &pick(gold, &plan.test)) {
            Ok(r) => Some(r),
            Err(e) => {
                warn!("outer fold {f} excluded: {e}");
                None
            }
        };
        folds.push(OuterFoldReport {
            fold: f,
            test_size: plan.test.len(),
            chosen_lambda: lambda,
            inner_mse,
            pearson_r: r,
        });
    }
    let rs: Vec<f64> = folds.iter().filter_map(|f| f.pearson_r).collect();
    if rs.is_empty() {
        return Err(ProbeError::Numerical("no outer fold produced a defined correlation".into()));
    }
    let mut boot_rng = ChaCha8Rng::seed_from_u64(config.seed);
    boot_rng.set_stream(u64::MAX);
    let (ci_low, ci_high) = bootstrap_mean_ci(&rs, config.bootstrap_iterations, &mut boot_rng);
    Ok(NestedCvReport {
        columns: predictions.columns().to_vec(),
        grid: config.grid.clone(),
        k_outer: config.k_outer,
        k_inner: config.k_inner,
        seed: config.seed,
        valid_folds: rs.len(),
        mean_r: mean(&rs),
        ci_low,
        ci_high,
        bootstrap_iterations: config.bootstrap_iterations,
        folds,
        plans,
        out_of_fold,
    })
}

impl NestedCvReport {
    /// Aligned-column summary for people.
    pub fn render_text(&self) -> String {
        let mut out = format!(
            "columns: {}\ngrid: {}\n{:>5} {:>6} {:>10} {:>9}\n",
            self.columns.join(", "),
            self.grid.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(", "),
            "fold",
            "n",
            "lambda",
            "r"
        );
        for f in &self.folds {
            let r = f.pearson_r.map_or("invalid".to_string(), |r| format!("{r:.4}"));
            out.push_str(&format!("{:>5} {:>6} {:>10} {:>9}\n", f.fold, f.test_size, f.chosen_lambda, r));
        }
        out.push_str(&format!(
            "mean r = {:.4} (95% CI {:.4} to {:.4}, {} valid folds)\n",
            self.mean_r, self.ci_low, self.ci_high, self.valid_folds
        ));
        out
    }
}
