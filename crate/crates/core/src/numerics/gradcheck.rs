use std::collections::BTreeMap;

use num_traits::Float;

use super::params::ParamStore;
use super::tensor::Matrix;

/// Worst-offending entry of a gradient check.
#[derive(Clone, Debug)]
pub struct GradCheckEntry<S> {
    pub name: String,
    pub index: usize,
    pub analytic: S,
    pub numeric: S,
    pub rel_err: S,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport<S> {
    pub max_rel_err: S,
    pub worst: Option<GradCheckEntry<S>>,
    pub entries_checked: usize,
    pub h: S,
    pub tol: S,
}

impl<S: Float> GradCheckReport<S> {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tol
    }
}

fn rel_err<S: Float>(a: S, b: S) -> S {
    let denom = a.abs().max(b.abs()).max(S::from(1e-3).unwrap());
    (a - b).abs() / denom
}

/// Compares reverse-mode gradients against central finite differences
/// (f(p+h) - f(p-h)) / 2h for every entry of every parameter.
///
/// `value_fn` must be deterministic; `grad_fn` returns the reverse-mode
/// gradient per parameter name (parameters absent from the map are treated
/// as having zero gradient).
pub fn grad_check<S, F, G>(
    value_fn: F,
    grad_fn: G,
    params: &ParamStore<S>,
    h: S,
    tol: S,
) -> GradCheckReport<S>
where
    S: Float,
    F: Fn(&ParamStore<S>) -> S,
    G: Fn(&ParamStore<S>) -> BTreeMap<String, Matrix<S>>,
{
    let analytic = grad_fn(params);
    let mut report = GradCheckReport {
        max_rel_err: S::zero(),
        worst: None,
        entries_checked: 0,
        h,
        tol,
    };
    let mut scratch = params.clone();
    let names: Vec<String> = params.names().map(String::from).collect();
    for name in &names {
        let base = params.get(name).clone();
        let grad = analytic
            .get(name)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(base.rows(), base.cols()));
        assert_eq!(
            grad.shape(),
            base.shape(),
            "gradient shape mismatch for {:?}",
            name
        );
        for i in 0..base.data().len() {
            let orig = base.data()[i];

            let mut plus = base.clone();
            plus.data_mut()[i] = orig + h;
            scratch.set(name, plus);
            let f_plus = value_fn(&scratch);

            let mut minus = base.clone();
            minus.data_mut()[i] = orig - h;
            scratch.set(name, minus);
            let f_minus = value_fn(&scratch);

            scratch.set(name, base.clone());

            let numeric = (f_plus - f_minus) / (h + h);
            let analytic_v = grad.data()[i];
            let err = rel_err(analytic_v, numeric);
            report.entries_checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some(GradCheckEntry {
                    name: name.clone(),
                    index: i,
                    analytic: analytic_v,
                    numeric,
                    rel_err: err,
                });
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tape::Tape;

    fn linear_setup() -> (ParamStore<f64>, Matrix<f64>) {
        let mut params = ParamStore::new();
        params.insert(
            "w",
            Matrix::from_rows(&[vec![0.3, -0.7], vec![1.2, 0.4]]),
        );
        let x = Matrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25]]);
        (params, x)
    }

    fn linear_loss(params: &ParamStore<f64>, x: &Matrix<f64>) -> (f64, BTreeMap<String, Matrix<f64>>) {
        let mut tape = Tape::new();
        let w = tape.param(params.get("w").clone());
        let xc = tape.constant(x.clone());
        let y = tape.matmul(w, xc);
        let s = tape.sum(y);
        let grads = tape.backward(s);
        let mut out = BTreeMap::new();
        out.insert("w".to_string(), grads.get(w).unwrap().clone());
        (tape.value(s).as_scalar(), out)
    }

    #[test]
    fn linear_function_is_exact() {
        let (params, x) = linear_setup();
        let report = grad_check(
            |p| linear_loss(p, &x).0,
            |p| linear_loss(p, &x).1,
            &params,
            1e-6,
            1e-8,
        );
        assert!(report.passed(), "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn corrupted_backward_fails() {
        let (params, x) = linear_setup();
        let report = grad_check(
            |p| linear_loss(p, &x).0,
            |p| {
                let mut g = linear_loss(p, &x).1;
                let doubled = g["w"].scale(2.0);
                g.insert("w".to_string(), doubled);
                g
            },
            &params,
            1e-6,
            1e-8,
        );
        assert!(!report.passed());
        assert_eq!(report.worst.as_ref().unwrap().name, "w");
    }
}
