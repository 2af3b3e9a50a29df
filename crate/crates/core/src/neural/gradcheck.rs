//! Central finite-difference oracle for analytic gradients.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;

use super::graph::{Graph, NodeId};
use super::params::{ParamId, ParamStore};

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest relative error seen beyond the absolute floor.
    pub worst: f64,
    pub entries: usize,
    /// Entries outside `REL_TOL · scale + ABS_FLOOR`, as `(param, row, col)`.
    pub failures: Vec<(String, usize, usize)>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn eval(store: &ParamStore, f: &impl Fn(&mut Graph) -> Result<NodeId>) -> Result<f64> {
    let mut g = Graph::new(store);
    let l = f(&mut g)?;
    Ok(g.value(l)[(0, 0)])
}

/// Compares analytic gradients of the scalar built by `f` with central
/// differences on every entry of every parameter.
pub fn grad_report(store: &mut ParamStore, f: impl Fn(&mut Graph) -> Result<NodeId>) -> Result<GradCheckReport> {
    let analytic = {
        let mut g = Graph::new(store);
        let l = f(&mut g)?;
        g.backward(l)?
    };
    let ids: Vec<ParamId> = store.iter().map(|(i, _)| i).collect();
    let mut report = GradCheckReport { worst: 0.0, entries: 0, failures: Vec::new() };
    for id in ids {
        let (r, c) = store.value(id).shape();
        for i in 0..r {
            for j in 0..c {
                let orig = store.value(id)[(i, j)];
                store.value_mut(id)[(i, j)] = orig + STEP;
                let up = eval(store, &f)?;
                store.value_mut(id)[(i, j)] = orig - STEP;
                let down = eval(store, &f)?;
                store.value_mut(id)[(i, j)] = orig;
                let numeric = (up - down) / (2.0 * STEP);
                let a = analytic.get(id).map_or(0.0, |t| t[(i, j)]);
                let scale = numeric.abs().max(a.abs());
                let err = (a - numeric).abs();
                report.entries += 1;
                if !(err <= REL_TOL * scale + ABS_FLOOR) {
                    report.failures.push((store.param(id).name.clone(), i, j));
                }
                if scale > 0.0 {
                    report.worst = report.worst.max((err - ABS_FLOOR).max(0.0) / scale);
                }
            }
        }
    }
    Ok(report)
}

/// Panicking form used by unit tests; returns the worst relative error.
pub fn check_grads(store: &mut ParamStore, f: impl Fn(&mut Graph) -> NodeId) -> f64 {
    let report = grad_report(store, |g| Ok(f(g))).expect("gradient check evaluates");
    assert!(report.passed(), "gradient mismatch at {:?}", report.failures);
    report.worst
}
