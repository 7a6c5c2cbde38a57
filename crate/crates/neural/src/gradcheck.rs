//! Central finite-difference gradient checking.

use glossbench_core::SplitMix64;

use crate::graph::{Graph, NodeId, ParamStore, Result};

pub const STEP: f64 = 1e-5;

/// Gradients smaller than this are compared in absolute terms.
pub const MAGNITUDE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, MAGNITUDE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR)
}

/// Compares backprop gradients of the scalar built by `build` against
/// central differences for every parameter value. With `dropout_seed`, each
/// evaluation uses a training graph seeded identically, so masks repeat.
pub fn check_gradients<F>(store: &mut ParamStore, dropout_seed: Option<u64>, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph) -> Result<NodeId>,
{
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = make_graph(store, dropout_seed);
        let loss = build(&mut g)?;
        Ok(g.scalar(loss))
    };

    let mut grads = store.zero_grads();
    {
        let mut g = make_graph(store, dropout_seed);
        let loss = build(&mut g)?;
        g.backward(loss, &mut grads);
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        checked: 0,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for k in 0..store.get(id).value.len() {
            let orig = store.get(id).value.data[k];
            store.value_mut(id).data[k] = orig + STEP;
            let up = eval(store)?;
            store.value_mut(id).data[k] = orig - STEP;
            let down = eval(store)?;
            store.value_mut(id).data[k] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let err = relative_error(grads.get(id)[k], numeric);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_param = store.get(id).name.clone();
                report.worst_index = k;
            }
        }
    }
    Ok(report)
}

fn make_graph(store: &ParamStore, seed: Option<u64>) -> Graph<'_> {
    match seed {
        Some(s) => Graph::training(store, SplitMix64::new(s)),
        None => Graph::new(store),
    }
}
