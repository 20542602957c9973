use super::graph::{Graph, Var};
use super::tensor::ParamStore;
use super::GradError;

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// max over coordinates of |analytic − numeric| / max(1, |analytic|, |numeric|)
    pub max_discrepancy: f64,
    pub worst_param: String,
    pub worst_coordinate: usize,
    pub coordinates: usize,
}

/// Compares reverse-mode gradients of `f` against central differences over
/// every coordinate of every tensor in `store`.
///
/// `f` builds a scalar loss from the current parameter values. Parameter
/// values are restored before returning; gradients in `store` are left zeroed.
pub fn grad_check<F, E>(store: &mut ParamStore, eps: f64, mut f: F) -> Result<GradCheckReport, E>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<Var, E>,
    E: From<GradError>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(GradError::InvalidArgument(format!("eps must lie in (0, 1e-2], got {eps}")).into());
    }
    store.zero_grad();
    let mut graph = Graph::new();
    let loss = f(&mut graph, store)?;
    if !graph.scalar(loss).is_finite() {
        return Err(GradError::NonFinite {
            param: "<unperturbed>".into(),
            coordinate: 0,
        }
        .into());
    }
    graph.backward(loss)?;
    graph.export_grads(store);

    let mut report = GradCheckReport {
        max_discrepancy: 0.0,
        worst_param: String::new(),
        worst_coordinate: 0,
        coordinates: 0,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let analytic = store.get(id).grad().to_vec();
        for (k, &a) in analytic.iter().enumerate() {
            let original = store.get(id).values()[k];
            let mut eval = |store: &mut ParamStore, x: f64| -> Result<f64, E> {
                store.get_mut(id).values_mut()[k] = x;
                let mut g = Graph::new();
                let l = f(&mut g, store)?;
                let v = g.scalar(l);
                if !v.is_finite() {
                    return Err(GradError::NonFinite {
                        param: store.name(id).to_string(),
                        coordinate: k,
                    }
                    .into());
                }
                Ok(v)
            };
            let plus = eval(store, original + eps);
            let minus = plus.and_then(|p| eval(store, original - eps).map(|m| (p, m)));
            store.get_mut(id).values_mut()[k] = original;
            let (plus, minus) = minus?;
            let numeric = (plus - minus) / (2.0 * eps);
            let denom = 1.0_f64.max(a.abs()).max(numeric.abs());
            let d = (a - numeric).abs() / denom;
            report.coordinates += 1;
            if d > report.max_discrepancy || report.worst_param.is_empty() {
                report.max_discrepancy = report.max_discrepancy.max(d);
                if d >= report.max_discrepancy {
                    report.worst_param = store.name(id).to_string();
                    report.worst_coordinate = k;
                }
            }
        }
    }
    store.zero_grad();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::Tensor;

    #[test]
    fn square_matches_central_difference() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::scalar(3.0)).unwrap();
        let report = grad_check::<_, GradError>(&mut store, 1e-5, |g, s| {
            let v = g.param(s, x);
            let sq = g.hadamard(v, v)?;
            Ok(g.reduce_sum(sq))
        })
        .unwrap();
        assert!(report.max_discrepancy < 1e-8, "{report:?}");
        assert_eq!(report.coordinates, 1);
        assert_eq!(store.get(x).values(), &[3.0]);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // Reduce of a constant-backed path: the analytic gradient through a
        // constant is zero, while the numeric one is not.
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::scalar(2.0)).unwrap();
        let report = grad_check::<_, GradError>(&mut store, 1e-5, |g, s| {
            let v = s.get(x).values()[0];
            let c = g.constant(vec![v * v]);
            let _ = g.param(s, x);
            Ok(g.reduce_sum(c))
        })
        .unwrap();
        assert!(report.max_discrepancy > 0.5);
        assert_eq!(report.worst_param, "x");
    }

    #[test]
    fn non_finite_names_parameter() {
        let mut store = ParamStore::new();
        let x = store.add("weights", Tensor::scalar(0.0)).unwrap();
        let err = grad_check::<_, GradError>(&mut store, 1e-5, |g, s| {
            let v = s.get(x).values()[0];
            let val = if v != 0.0 { f64::NAN } else { 0.0 };
            let p = g.param(s, x);
            let c = g.constant(vec![val]);
            let z = g.scale(p, 0.0);
            let sum = g.add(z, c)?;
            Ok(g.reduce_sum(sum))
        })
        .unwrap_err();
        match err {
            GradError::NonFinite { param, .. } => assert_eq!(param, "weights"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(store.get(x).values(), &[0.0]);
    }

    #[test]
    fn eps_range_enforced() {
        let mut store = ParamStore::new();
        store.add("x", Tensor::scalar(1.0)).unwrap();
        let r = grad_check::<_, GradError>(&mut store, 0.1, |g, _| Ok(g.vector(vec![0.0])));
        assert!(r.is_err());
    }
}
