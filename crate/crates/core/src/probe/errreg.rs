use std::collections::{BTreeMap, BTreeSet};

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use log::warn;
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::ProbeError;
use crate::verdata::{enumerate_frames, Polarity};

/// Level coded -1 in every frame contrast.
pub const REFERENCE_FRAME: &str = "NP was _ed that S";

/// Added to absolute errors before the log so exact predictions stay finite.
pub const ZERO_ERROR_OFFSET: f64 = 1e-6;

/// One prediction error with the covariates it is regressed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorObservation {
    pub abs_error: f64,
    pub gold: f64,
    pub polarity: Polarity,
    pub frame: String,
    pub verb: String,
}

/// Sum (deviation) coding of a factor: one column per non-reference level,
/// 1 for that level, -1 for the reference, 0 otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumCoding {
    pub reference: String,
    pub levels: Vec<String>,
}

impl SumCoding {
    /// Known frames keep their canonical order; other labels are sorted.
    pub fn new<I, S>(levels: I, reference: &str) -> Result<Self, ProbeError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let present: BTreeSet<String> = levels.into_iter().map(|s| s.as_ref().to_string()).collect();
        if !present.contains(reference) {
            return Err(ProbeError::Design(format!("reference level {reference:?} is absent")));
        }
        if present.len() < 2 {
            return Err(ProbeError::Design("a factor needs at least two levels".into()));
        }
        let canonical: Vec<String> = enumerate_frames()
            .iter()
            .map(|f| f.id.to_string())
            .filter(|id| present.contains(id))
            .collect();
        let ordered = if canonical.len() == present.len() {
            canonical
        } else {
            present.into_iter().collect()
        };
        Ok(SumCoding {
            reference: reference.to_string(),
            levels: ordered.into_iter().filter(|l| l != reference).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn code(&self, level: &str) -> Result<Vec<f64>, ProbeError> {
        if level == self.reference {
            return Ok(vec![-1.0; self.levels.len()]);
        }
        let j = self
            .levels
            .iter()
            .position(|l| l == level)
            .ok_or_else(|| ProbeError::Design(format!("unknown level {level:?}")))?;
        let mut v = vec![0.0; self.levels.len()];
        v[j] = 1.0;
        Ok(v)
    }
}

/// A named design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    pub x: DMatrix<f64>,
}

/// Intercept, polarity (+1/-1), factuality, frame contrasts, their two-way
/// products and, if requested, the three-way products.
pub fn error_design(obs: &[ErrorObservation], coding: &SumCoding, three_way: bool) -> Result<Design, ProbeError> {
    let mut names = vec!["(Intercept)".to_string(), "polarity".into(), "factuality".into()];
    names.extend(coding.levels.iter().cloned());
    names.push("polarity:factuality".into());
    names.extend(coding.levels.iter().map(|l| format!("polarity:{l}")));
    names.extend(coding.levels.iter().map(|l| format!("factuality:{l}")));
    if three_way {
        names.extend(coding.levels.iter().map(|l| format!("polarity:factuality:{l}")));
    }
    let mut x = DMatrix::zeros(obs.len(), names.len());
    for (r, o) in obs.iter().enumerate() {
        let pol = o.polarity.code();
        let f = coding.code(&o.frame)?;
        let mut row = vec![1.0, pol, o.gold];
        row.extend(&f);
        row.push(pol * o.gold);
        row.extend(f.iter().map(|c| pol * c));
        row.extend(f.iter().map(|c| o.gold * c));
        if three_way {
            row.extend(f.iter().map(|c| pol * o.gold * c));
        }
        for (c, v) in row.into_iter().enumerate() {
            x[(r, c)] = v;
        }
    }
    Ok(Design { names, x })
}

/// Standardised log absolute error.
pub fn error_response(obs: &[ErrorObservation]) -> Result<Vec<f64>, ProbeError> {
    let logged: Vec<f64> = obs.iter().map(|o| (o.abs_error.abs() + ZERO_ERROR_OFFSET).ln()).collect();
    standardize(&logged)
}

fn standardize(v: &[f64]) -> Result<Vec<f64>, ProbeError> {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if !(sd > 0.0) {
        return Err(ProbeError::Design("response has no variance".into()));
    }
    Ok(v.iter().map(|x| (x - m) / sd).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub rss: f64,
    /// Gaussian log-likelihood at the ML variance `rss / n`.
    pub log_likelihood: f64,
    pub df_residual: usize,
}

pub fn ols(x: &DMatrix<f64>, y: &[f64]) -> Result<OlsFit, ProbeError> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(ProbeError::Length { expected: n, found: y.len() });
    }
    if n <= p {
        return Err(ProbeError::Design(format!("{n} observations cannot identify {p} coefficients")));
    }
    let yv = DVector::from_column_slice(y);
    let xtx = x.transpose() * x;
    let chol = xtx
        .cholesky()
        .ok_or_else(|| ProbeError::Design("design matrix is rank deficient".into()))?;
    let beta = chol.solve(&(x.transpose() * &yv));
    let resid = &yv - x * &beta;
    let rss = resid.norm_squared();
    let df_residual = n - p;
    let sigma2 = rss / df_residual as f64;
    let inv = chol.inverse();
    let nf = n as f64;
    Ok(OlsFit {
        coefficients: beta.iter().copied().collect(),
        std_errors: (0..p).map(|i| (sigma2 * inv[(i, i)]).sqrt()).collect(),
        rss,
        log_likelihood: -0.5 * nf * ((2.0 * std::f64::consts::PI * rss / nf).ln() + 1.0),
        df_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodRatioTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

pub fn likelihood_ratio(full: f64, reduced: f64, df: usize) -> Result<LikelihoodRatioTest, ProbeError> {
    let statistic = (2.0 * (full - reduced)).max(0.0);
    let chi = ChiSquared::new(df as f64).map_err(|e| ProbeError::Numerical(e.to_string()))?;
    Ok(LikelihoodRatioTest {
        statistic,
        df,
        p_value: 1.0 - chi.cdf(statistic),
    })
}

// ---- mixed model ----------------------------------------------------------

/// Sufficient statistics of one grouping level.
struct GroupBlock {
    xtx: DMatrix<f64>,
    xtz: DMatrix<f64>,
    ztz: Matrix2<f64>,
    xty: DVector<f64>,
    zty: Vector2<f64>,
    yty: f64,
}

/// Linear model with a per-group random intercept and random slope on one
/// covariate, correlated. The covariance is `sigma^2 L L'` with `L` lower
/// triangular; `sigma^2` and the fixed effects are profiled out.
struct MixedProblem {
    blocks: Vec<GroupBlock>,
    n: usize,
    p: usize,
}

struct Profile {
    deviance: f64,
    beta: DVector<f64>,
    sigma2: f64,
    precision: DMatrix<f64>,
}

impl MixedProblem {
    fn new(x: &DMatrix<f64>, y: &[f64], groups: &[usize], slope: &[f64]) -> Self {
        let p = x.ncols();
        let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, g) in groups.iter().enumerate() {
            members.entry(*g).or_default().push(i);
        }
        let blocks = members
            .values()
            .map(|rows| {
                let xg = x.select_rows(rows);
                let zg = DMatrix::from_fn(rows.len(), 2, |r, c| if c == 0 { 1.0 } else { slope[rows[r]] });
                let yg = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]));
                let ztz = zg.transpose() * &zg;
                let zty = zg.transpose() * &yg;
                GroupBlock {
                    xtx: xg.transpose() * &xg,
                    xtz: xg.transpose() * &zg,
                    ztz: Matrix2::new(ztz[(0, 0)], ztz[(0, 1)], ztz[(1, 0)], ztz[(1, 1)]),
                    xty: xg.transpose() * &yg,
                    zty: Vector2::new(zty[0], zty[1]),
                    yty: yg.norm_squared(),
                }
            })
            .collect();
        MixedProblem { blocks, n: y.len(), p }
    }

    fn lambda(theta: &[f64]) -> Matrix2<f64> {
        Matrix2::new(theta[0], 0.0, theta[1], theta[2])
    }

    /// Profiled -2 log-likelihood via the Woodbury identity per group.
    fn profile(&self, theta: &[f64]) -> Option<Profile> {
        let lam = Self::lambda(theta);
        let mut logdet = 0.0;
        let mut xvx = DMatrix::zeros(self.p, self.p);
        let mut xvy = DVector::zeros(self.p);
        let mut yvy = 0.0;
        for b in &self.blocks {
            let m = Matrix2::identity() + lam.transpose() * b.ztz * lam;
            let chol = m.cholesky()?;
            let l = chol.l();
            logdet += 2.0 * (l[(0, 0)].ln() + l[(1, 1)].ln());
            let minv = chol.inverse();
            let xzl = &b.xtz * nalgebra::DMatrix::from_fn(2, 2, |r, c| lam[(r, c)]);
            let mi = DMatrix::from_fn(2, 2, |r, c| minv[(r, c)]);
            let lzy = lam.transpose() * b.zty;
            let lzy_d = DVector::from_column_slice(lzy.as_slice());
            xvx += &b.xtx - &xzl * &mi * xzl.transpose();
            xvy += &b.xty - &xzl * (&mi * &lzy_d);
            yvy += b.yty - lzy.dot(&(minv * lzy));
        }
        let chol = xvx.clone().cholesky()?;
        let beta = chol.solve(&xvy);
        let q = yvy - xvy.dot(&beta);
        if !(q > 0.0) {
            return None;
        }
        let n = self.n as f64;
        let deviance = logdet + n * (1.0 + (2.0 * std::f64::consts::PI * q / n).ln());
        deviance.is_finite().then(|| Profile {
            deviance,
            beta,
            sigma2: q / n,
            precision: chol.inverse(),
        })
    }
}

impl CostFunction for MixedProblem {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, theta: &Self::Param) -> Result<f64, argmin::core::Error> {
        Ok(self.profile(theta).map_or(f64::INFINITY, |p| p.deviance))
    }
}

/// Random-effect standard deviations and correlation on the response scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub intercept_sd: f64,
    pub slope_sd: f64,
    pub correlation: f64,
    pub residual_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub variance: VarianceComponents,
    pub log_likelihood: f64,
    pub marginal_r2: f64,
    pub conditional_r2: f64,
    pub iterations: u64,
    pub converged: bool,
}

/// Maximum-likelihood fit of `y = X b + u_g + v_g s + e` with `(u_g, v_g)`
/// bivariate normal per group, searching the three covariance parameters
/// with Nelder-Mead.
pub fn fit_mixed(
    x: &DMatrix<f64>,
    y: &[f64],
    groups: &[usize],
    slope: &[f64],
    max_iterations: u64,
) -> Result<MixedFit, ProbeError> {
    let n = x.nrows();
    for len in [y.len(), groups.len(), slope.len()] {
        if len != n {
            return Err(ProbeError::Length { expected: n, found: len });
        }
    }
    let problem = MixedProblem::new(x, y, groups, slope);
    let start = vec![
        vec![0.5, 0.0, 0.5],
        vec![1.0, 0.0, 0.5],
        vec![0.5, 0.5, 0.5],
        vec![0.5, 0.0, 1.0],
    ];
    let solver = NelderMead::new(start)
        .with_sd_tolerance(1e-10)
        .map_err(|e| ProbeError::Numerical(e.to_string()))?;
    let res = Executor::new(problem, solver)
        .configure(|s| s.max_iters(max_iterations))
        .run()
        .map_err(|e| ProbeError::Numerical(e.to_string()))?;
    let state = res.state();
    let converged = matches!(
        state.get_termination_status(),
        TerminationStatus::Terminated(TerminationReason::SolverConverged)
    );
    let theta = state
        .get_best_param()
        .cloned()
        .ok_or_else(|| ProbeError::Numerical("mixed model search returned no parameters".into()))?;
    let iterations = state.get_iter();
    let problem = MixedProblem::new(x, y, groups, slope);
    let prof = problem
        .profile(&theta)
        .ok_or_else(|| ProbeError::Numerical("mixed model likelihood undefined at optimum".into()))?;
    let lam = MixedProblem::lambda(&theta);
    let cov = lam * lam.transpose() * prof.sigma2;
    let intercept_sd = cov[(0, 0)].sqrt();
    let slope_sd = cov[(1, 1)].sqrt();
    let correlation = if intercept_sd > 0.0 && slope_sd > 0.0 {
        cov[(0, 1)] / (intercept_sd * slope_sd)
    } else {
        0.0
    };
    let fitted = x * &prof.beta;
    let fm = fitted.mean();
    let var_fixed = fitted.iter().map(|v| (v - fm).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let var_random = slope
        .iter()
        .map(|s| cov[(0, 0)] + 2.0 * s * cov[(0, 1)] + s * s * cov[(1, 1)])
        .sum::<f64>()
        / n as f64;
    let total = var_fixed + var_random + prof.sigma2;
    Ok(MixedFit {
        coefficients: prof.beta.iter().copied().collect(),
        std_errors: (0..x.ncols()).map(|i| (prof.sigma2 * prof.precision[(i, i)]).sqrt()).collect(),
        variance: VarianceComponents {
            intercept_sd,
            slope_sd,
            correlation,
            residual_sd: prof.sigma2.sqrt(),
        },
        log_likelihood: -0.5 * prof.deviance,
        marginal_r2: var_fixed / total,
        conditional_r2: (var_fixed + var_random) / total,
        iterations,
        converged,
    })
}

// ---- report ---------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_value: f64,
}

fn coefficient_table(names: &[String], est: &[f64], se: &[f64]) -> Vec<Coefficient> {
    names
        .iter()
        .zip(est.iter().zip(se))
        .map(|(name, (e, s))| Coefficient {
            name: name.clone(),
            estimate: *e,
            std_error: *s,
            t_value: e / s,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedSummary {
    pub coefficients: Vec<Coefficient>,
    pub variance: VarianceComponents,
    pub log_likelihood: f64,
    pub marginal_r2: f64,
    pub conditional_r2: f64,
    pub interaction_test: LikelihoodRatioTest,
    pub iterations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRegressionReport {
    pub n: usize,
    pub reference_frame: String,
    pub frame_levels: Vec<String>,
    /// Fixed-effects least-squares coefficients of the full model.
    pub coefficients: Vec<Coefficient>,
    /// Full model against the model without three-way terms.
    pub interaction_test: LikelihoodRatioTest,
    pub mixed: Option<MixedSummary>,
    pub mixed_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRegressionOptions {
    pub reference_frame: String,
    pub fit_mixed: bool,
    pub max_iterations: u64,
}

impl Default for ErrorRegressionOptions {
    fn default() -> Self {
        ErrorRegressionOptions {
            reference_frame: REFERENCE_FRAME.to_string(),
            fit_mixed: true,
            max_iterations: 2000,
        }
    }
}

/// Regresses standardised log absolute error on factuality, polarity and
/// frame with all interactions, tests the three-way terms by likelihood
/// ratio, and optionally refits with by-verb random intercepts and polarity
/// slopes. A mixed fit that fails to converge leaves `mixed` empty.
pub fn error_regression(
    obs: &[ErrorObservation],
    options: &ErrorRegressionOptions,
) -> Result<ErrorRegressionReport, ProbeError> {
    if obs.iter().any(|o| !o.abs_error.is_finite() || !o.gold.is_finite()) {
        return Err(ProbeError::Invalid("non-finite error or gold value".into()));
    }
    let polarities: BTreeSet<_> = obs.iter().map(|o| o.polarity.code() as i8).collect();
    if polarities.len() < 2 {
        return Err(ProbeError::Design("both polarities must be present".into()));
    }
    let coding = SumCoding::new(obs.iter().map(|o| o.frame.as_str()), &options.reference_frame)?;
    let y = error_response(obs)?;
    let full = error_design(obs, &coding, true)?;
    let reduced = error_design(obs, &coding, false)?;
    let fit_full = ols(&full.x, &y)?;
    let fit_reduced = ols(&reduced.x, &y)?;
    let interaction_test = likelihood_ratio(fit_full.log_likelihood, fit_reduced.log_likelihood, coding.len())?;

    let mut mixed = None;
    let mut mixed_converged = false;
    if options.fit_mixed {
        let verbs: BTreeMap<&str, usize> = obs
            .iter()
            .map(|o| o.verb.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, v)| (v, i))
            .collect();
        let groups: Vec<usize> = obs.iter().map(|o| verbs[o.verb.as_str()]).collect();
        let slope: Vec<f64> = obs.iter().map(|o| o.polarity.code()).collect();
        let fits = fit_mixed(&full.x, &y, &groups, &slope, options.max_iterations).and_then(|f| {
            let r = fit_mixed(&reduced.x, &y, &groups, &slope, options.max_iterations)?;
            Ok((f, r))
        });
        match fits {
            Ok((f, r)) if f.converged && r.converged => {
                mixed_converged = true;
                mixed = Some(MixedSummary {
                    coefficients: coefficient_table(&full.names, &f.coefficients, &f.std_errors),
                    variance: f.variance,
                    log_likelihood: f.log_likelihood,
                    marginal_r2: f.marginal_r2,
                    conditional_r2: f.conditional_r2,
                    interaction_test: likelihood_ratio(f.log_likelihood, r.log_likelihood, coding.len())?,
                    iterations: f.iterations,
                });
            }
            Ok(_) => warn!("mixed model did not converge; reporting fixed effects only"),
            Err(e) => warn!("mixed model failed ({e}); reporting fixed effects only"),
        }
    }
    Ok(ErrorRegressionReport {
        n: obs.len(),
        reference_frame: coding.reference.clone(),
        frame_levels: coding.levels.clone(),
        coefficients: coefficient_table(&full.names, &fit_full.coefficients, &fit_full.std_errors),
        interaction_test,
        mixed,
        mixed_converged,
    })
}

impl ErrorRegressionReport {
    /// Coefficient table (mixed estimates when available) with the
    /// interaction test and variance components underneath.
    pub fn render_text(&self) -> String {
        let coefs = self.mixed.as_ref().map_or(&self.coefficients, |m| &m.coefficients);
        let width = coefs.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut out = format!("{:<width$}  {:>7}  {:>7}  {:>6}\n", "", "Coef", "SE", "t");
        for c in coefs {
            out.push_str(&format!(
                "{:<width$}  {:>7.2}  {:>7.2}  {:>6.1}\n",
                c.name, c.estimate, c.std_error, c.t_value
            ));
        }
        let lrt = self.mixed.as_ref().map_or(&self.interaction_test, |m| &m.interaction_test);
        out.push_str(&format!(
            "three-way interaction: chi2({}) = {:.2}, p = {:.4}\n",
            lrt.df, lrt.statistic, lrt.p_value
        ));
        match &self.mixed {
            Some(m) => out.push_str(&format!(
                "verb intercept SD {:.2}, polarity slope SD {:.2}, correlation {:.2}\nmarginal R2 {:.2}, conditional R2 {:.2}\n",
                m.variance.intercept_sd, m.variance.slope_sd, m.variance.correlation, m.marginal_r2, m.conditional_r2
            )),
            None => out.push_str("mixed model: not converged (fixed effects only)\n"),
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_coding_rows() {
        let c = SumCoding::new(["b", "a", "c"], "a").unwrap();
        assert_eq!(c.levels, ["b", "c"]);
        assert_eq!(c.code("a").unwrap(), [-1.0, -1.0]);
        assert_eq!(c.code("c").unwrap(), [0.0, 1.0]);
        assert!(c.code("d").is_err());
        assert!(SumCoding::new(["b", "c"], "a").is_err());
    }

    #[test]
    fn canonical_frame_order() {
        let ids: Vec<&str> = enumerate_frames().iter().map(|f| f.id).collect();
        let mut shuffled = ids.clone();
        shuffled.reverse();
        let c = SumCoding::new(shuffled, REFERENCE_FRAME).unwrap();
        assert_eq!(c.len(), 8);
        let expected: Vec<&str> = ids.into_iter().filter(|i| *i != REFERENCE_FRAME).collect();
        assert_eq!(c.levels, expected);
    }

    #[test]
    fn ols_exact_line() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let fit = ols(&x, &[1.0, 3.0, 5.0, 7.0]).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(fit.rss < 1e-20);
    }

    #[test]
    fn lrt_p_value() {
        // chi-square(8) upper 5% point
        let t = likelihood_ratio(15.507_313 / 2.0, 0.0, 8).unwrap();
        assert!((t.p_value - 0.05).abs() < 1e-6);
    }
}
