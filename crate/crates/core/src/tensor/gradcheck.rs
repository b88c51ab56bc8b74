//! Central finite differences against tape gradients.
//!
//! The analytic side runs in the caller's precision; the numeric side always
//! re-evaluates the objective forward in 64-bit on a cast copy of the
//! parameters, so 32-bit gradients are checked against a 64-bit shadow.

use super::{ParamStore, Session, Var};
use crate::error::Result;
use crate::scalar::Scalar;

/// A scalar objective that can be evaluated at any precision.
pub trait Objective {
    fn loss<T: Scalar>(&self, session: &mut Session<'_, T>) -> Result<Var>;
}

#[derive(Clone, Debug)]
pub struct CheckOptions {
    pub step: f64,
    /// Denominator floor for the relative error.
    pub floor: f64,
    /// Check at most this many coordinates per parameter (evenly spaced).
    pub max_coords: Option<usize>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            step: 1e-5,
            floor: 1e-4,
            max_coords: None,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coords: usize,
}

fn forward_f64<O: Objective>(params: &ParamStore<f64>, obj: &O) -> Result<f64> {
    let mut s = Session::eval(params);
    let loss = obj.loss(&mut s)?;
    s.graph.value(loss).item()
}

pub fn check_params<T: Scalar, O: Objective>(
    params: &ParamStore<T>,
    obj: &O,
    opts: &CheckOptions,
) -> Result<GradReport> {
    let analytic = {
        let mut s = Session::eval(params);
        let loss = obj.loss(&mut s)?;
        s.param_grads(loss)?
    };
    let mut shadow = params.cast::<f64>();
    let mut report = GradReport::default();
    for id in params.ids() {
        let n = params.get(id).len();
        let stride = match opts.max_coords {
            Some(m) if m < n => n.div_ceil(m),
            _ => 1,
        };
        for i in (0..n).step_by(stride) {
            let orig = shadow.get(id).data()[i];
            shadow.get_mut(id).data_mut()[i] = orig + opts.step;
            let up = forward_f64(&shadow, obj)?;
            shadow.get_mut(id).data_mut()[i] = orig - opts.step;
            let down = forward_f64(&shadow, obj)?;
            shadow.get_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * opts.step);
            let a = analytic[id.index()].data()[i].f64();
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
            report.coords += 1;
            if report.coords == 1 || err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst_param = params.name(id).to_string();
                report.worst_index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
