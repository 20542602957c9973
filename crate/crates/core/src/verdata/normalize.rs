use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::dataset::AnnotationRecord;
use super::VerdataError;
use crate::gradcore::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedItem {
    pub sentence_id: String,
    pub factuality: f64,
}

/// Penalties and stopping rule for the cumulative-logit fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizeOptions {
    /// Ridge weight on sentence means.
    pub mean_penalty: f64,
    /// Inverse variance of the annotator intercepts.
    pub annotator_penalty: f64,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        NormalizeOptions {
            mean_penalty: 1.0,
            annotator_penalty: 1.0,
            tolerance: 1e-10,
            max_sweeps: 5000,
        }
    }
}

/// Fitted proportional-odds model: `P(y <= k) = sigmoid(cutpoint_k - mean_s - annotator_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalFit {
    /// Raw latent mean per sentence.
    pub means: BTreeMap<String, f64>,
    pub annotator_effects: BTreeMap<String, f64>,
    /// Cutpoints over the response levels actually observed.
    pub cutpoints: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

struct Obs {
    sentence: usize,
    annotator: usize,
    level: usize,
}

/// Per-observation pieces of the log-likelihood at linear predictor `eta`.
struct Local {
    logp: f64,
    // derivative and second derivative in eta
    d_eta: f64,
    dd_eta: f64,
}

fn cdf_pair(theta: &[f64], level: usize, eta: f64) -> (f64, f64, f64, f64) {
    let top = theta.len();
    let (fu, du) = if level < top {
        let s = sigmoid(theta[level] - eta);
        (s, s * (1.0 - s))
    } else {
        (1.0, 0.0)
    };
    let (fl, dl) = if level > 0 {
        let s = sigmoid(theta[level - 1] - eta);
        (s, s * (1.0 - s))
    } else {
        (0.0, 0.0)
    };
    (fu, du, fl, dl)
}

fn local(theta: &[f64], level: usize, eta: f64) -> Local {
    let (fu, du, fl, dl) = cdf_pair(theta, level, eta);
    let p = (fu - fl).max(1e-300);
    Local {
        logp: p.ln(),
        d_eta: fu + fl - 1.0,
        dd_eta: -(du + dl),
    }
}

struct Problem<'a> {
    obs: &'a [Obs],
    by_sentence: Vec<Vec<usize>>,
    by_annotator: Vec<Vec<usize>>,
    levels: usize,
    opts: NormalizeOptions,
}

impl Problem<'_> {
    fn objective(&self, theta: &[f64], mu: &[f64], a: &[f64]) -> f64 {
        let ll: f64 = self
            .obs
            .iter()
            .map(|o| local(theta, o.level, mu[o.sentence] + a[o.annotator]).logp)
            .sum();
        ll - 0.5 * self.opts.mean_penalty * mu.iter().map(|m| m * m).sum::<f64>()
            - 0.5 * self.opts.annotator_penalty * a.iter().map(|v| v * v).sum::<f64>()
    }

    /// Monotone 1-D Newton ascent on one location parameter.
    fn update_location(&self, idx: &[usize], theta: &[f64], base: &dyn Fn(&Obs) -> f64, x: f64, penalty: f64) -> f64 {
        let eval = |x: f64| -> (f64, f64, f64) {
            let (mut f, mut g, mut h) = (-0.5 * penalty * x * x, -penalty * x, -penalty);
            for &i in idx {
                let o = &self.obs[i];
                let l = local(theta, o.level, base(o) + x);
                f += l.logp;
                g += l.d_eta;
                h += l.dd_eta;
            }
            (f, g, h)
        };
        let (f0, g, h) = eval(x);
        if g == 0.0 || h >= 0.0 {
            return x;
        }
        let mut step = -g / h;
        for _ in 0..60 {
            let cand = x + step;
            if eval(cand).0 >= f0 {
                return cand;
            }
            step *= 0.5;
        }
        x
    }

    fn update_cutpoints(&self, theta: &[f64], mu: &[f64], a: &[f64]) -> Vec<f64> {
        let m = theta.len();
        let mut g = DVector::<f64>::zeros(m);
        let mut h = DMatrix::<f64>::zeros(m, m);
        for o in self.obs {
            let eta = mu[o.sentence] + a[o.annotator];
            let (fu, du, fl, dl) = cdf_pair(theta, o.level, eta);
            let p = (fu - fl).max(1e-300);
            let k = o.level;
            // d f / d u = f (1 - 2F)
            if k < m {
                let d2u = du * (1.0 - 2.0 * fu);
                g[k] += du / p;
                h[(k, k)] += (d2u * p - du * du) / (p * p);
            }
            if k > 0 {
                let d2l = dl * (1.0 - 2.0 * fl);
                g[k - 1] -= dl / p;
                h[(k - 1, k - 1)] += (-d2l * p - dl * dl) / (p * p);
            }
            if k < m && k > 0 {
                let c = du * dl / (p * p);
                h[(k, k - 1)] += c;
                h[(k - 1, k)] += c;
            }
        }
        let neg_h = -h;
        let step = match neg_h.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            None => g.clone() * 0.1,
        };
        let f0 = self.objective(theta, mu, a);
        let mut t = 1.0;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(th, s)| th + t * s).collect();
            let ordered = cand.windows(2).all(|w| w[0] < w[1]);
            if ordered && self.objective(&cand, mu, a) >= f0 {
                return cand;
            }
            t *= 0.5;
        }
        theta.to_vec()
    }
}

/// Penalised maximum-likelihood fit of the cumulative-logit model with
/// sentence means and annotator intercepts, by block-coordinate Newton ascent.
/// Response levels that never occur are dropped before fitting.
pub fn fit_ordinal(records: &[AnnotationRecord], opts: NormalizeOptions) -> Result<OrdinalFit, VerdataError> {
    let sentences: BTreeSet<&str> = records.iter().map(|r| r.sentence_id.as_str()).collect();
    let annotators: BTreeSet<&str> = records.iter().map(|r| r.annotator_id.as_str()).collect();
    let used: BTreeSet<usize> = records.iter().map(|r| r.response.level()).collect();
    if used.len() < 2 {
        return Err(VerdataError::Degenerate(
            "all responses share one level; use the raw-mean fallback".into(),
        ));
    }
    let s_index: BTreeMap<&str, usize> = sentences.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let a_index: BTreeMap<&str, usize> = annotators.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let rank: BTreeMap<usize, usize> = used.iter().enumerate().map(|(i, l)| (*l, i)).collect();
    let obs: Vec<Obs> = records
        .iter()
        .map(|r| Obs {
            sentence: s_index[r.sentence_id.as_str()],
            annotator: a_index[r.annotator_id.as_str()],
            level: rank[&r.response.level()],
        })
        .collect();
    let mut by_sentence = vec![Vec::new(); sentences.len()];
    let mut by_annotator = vec![Vec::new(); annotators.len()];
    for (i, o) in obs.iter().enumerate() {
        by_sentence[o.sentence].push(i);
        by_annotator[o.annotator].push(i);
    }
    let problem = Problem {
        obs: &obs,
        by_sentence,
        by_annotator,
        levels: used.len(),
        opts,
    };

    let m = problem.levels - 1;
    let mut theta: Vec<f64> = (0..m).map(|k| k as f64 - (m as f64 - 1.0) / 2.0).collect();
    let mut mu = vec![0.0; sentences.len()];
    let mut a = vec![0.0; annotators.len()];
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut delta: f64 = 0.0;
        let new_theta = problem.update_cutpoints(&theta, &mu, &a);
        delta = delta.max(max_change(&theta, &new_theta));
        theta = new_theta;
        for s in 0..mu.len() {
            let base = |o: &Obs| a[o.annotator];
            let x = problem.update_location(&problem.by_sentence[s], &theta, &base, mu[s], opts.mean_penalty);
            delta = delta.max((x - mu[s]).abs());
            mu[s] = x;
        }
        for j in 0..a.len() {
            let base = |o: &Obs| mu[o.sentence];
            let x = problem.update_location(&problem.by_annotator[j], &theta, &base, a[j], opts.annotator_penalty);
            delta = delta.max((x - a[j]).abs());
            a[j] = x;
        }
        if delta < opts.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("ordinal normalisation stopped after {sweeps} sweeps without converging");
    }
    Ok(OrdinalFit {
        means: sentences.iter().zip(&mu).map(|(s, m)| (s.to_string(), *m)).collect(),
        annotator_effects: annotators.iter().zip(&a).map(|(s, v)| (s.to_string(), *v)).collect(),
        cutpoints: theta,
        sweeps,
        converged,
    })
}

fn max_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn zscore(items: BTreeMap<String, f64>) -> Vec<NormalizedItem> {
    let n = items.len() as f64;
    let mean = items.values().sum::<f64>() / n;
    let var = items.values().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    items
        .into_iter()
        .map(|(sentence_id, v)| NormalizedItem {
            sentence_id,
            factuality: if sd > 0.0 { (v - mean) / sd } else { 0.0 },
        })
        .collect()
}

/// z-scored latent sentence means, ordered by sentence id.
pub fn normalize_responses(records: &[AnnotationRecord]) -> Result<Vec<NormalizedItem>, VerdataError> {
    normalize_with(records, NormalizeOptions::default())
}

pub fn normalize_with(records: &[AnnotationRecord], opts: NormalizeOptions) -> Result<Vec<NormalizedItem>, VerdataError> {
    let fit = fit_ordinal(records, opts)?;
    Ok(zscore(fit.means))
}

/// z-scored mean response level per sentence, for data the ordinal model
/// cannot fit.
pub fn raw_mean_scores(records: &[AnnotationRecord]) -> Vec<NormalizedItem> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in records {
        let e = acc.entry(r.sentence_id.clone()).or_insert((0.0, 0));
        e.0 += r.response.level() as f64;
        e.1 += 1;
    }
    zscore(acc.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verdata::Response;

    fn rec(s: &str, a: &str, r: Response) -> AnnotationRecord {
        AnnotationRecord {
            sentence_id: s.into(),
            annotator_id: a.into(),
            response: r,
        }
    }

    fn score(items: &[NormalizedItem], id: &str) -> f64 {
        items.iter().find(|i| i.sentence_id == id).unwrap().factuality
    }

    #[test]
    fn all_no_item_is_strictly_minimal() {
        let mut records = Vec::new();
        for s in ["a", "b", "c", "d"] {
            for j in 0..10 {
                let r = if s == "c" { Response::No } else { Response::Yes };
                records.push(rec(s, &format!("ann{j}"), r));
            }
        }
        let out = normalize_responses(&records).unwrap();
        let c = score(&out, "c");
        for s in ["a", "b", "d"] {
            assert!(score(&out, s) > c);
        }
    }

    #[test]
    fn identical_multisets_score_equally() {
        let levels = [Response::Yes, Response::Maybe, Response::No];
        let mut records = Vec::new();
        for s in ["x", "y", "z"] {
            for j in 0..6 {
                let r = if s == "z" { levels[(j + 1) % 3] } else { levels[j % 3] };
                records.push(rec(s, &format!("a{j}"), r));
            }
        }
        let out = normalize_responses(&records).unwrap();
        assert!((score(&out, "x") - score(&out, "y")).abs() < 1e-8);
    }

    #[test]
    fn single_level_is_degenerate() {
        let records = vec![rec("a", "1", Response::Yes), rec("b", "2", Response::Yes)];
        assert!(matches!(normalize_responses(&records), Err(VerdataError::Degenerate(_))));
        let raw = raw_mean_scores(&records);
        assert!(raw.iter().all(|i| i.factuality == 0.0));
    }
}
