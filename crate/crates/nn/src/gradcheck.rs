use crate::error::Result;
use crate::loss::bce_loss;
use crate::model::Model;

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Layer index and flat parameter index of the worst entry; `None` when
    /// it is an input entry.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
}

fn param_mut(m: &mut Model<f64>, layer: usize, i: usize) -> &mut f64 {
    let p = &mut m.params_mut()[layer];
    let nw = p.weight.len();
    if i < nw {
        &mut p.weight[i]
    } else {
        &mut p.bias[i - nw]
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares backpropagated gradients of the per-sample loss with central
/// differences of step `h`, over every parameter and optionally every input.
pub fn grad_check(model: &Model<f64>, x: &[f64], target: &[f64], h: f64, include_input: bool) -> Result<GradCheckReport> {
    let (_, grads, input_grad) = model.sample_gradients(x, target, 1.0, include_input)?;
    let loss_at = |m: &Model<f64>, x: &[f64]| -> Result<f64> { Ok(bce_loss(&m.forward_sample(x)?, target)) };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    let mut probe = model.clone();
    for l in 0..grads.len() {
        let nw = grads[l].weight.len();
        for i in 0..grads[l].len() {
            let analytic = if i < nw { grads[l].weight[i] } else { grads[l].bias[i - nw] };
            let orig = *param_mut(&mut probe, l, i);
            *param_mut(&mut probe, l, i) = orig + h;
            let plus = loss_at(&probe, x)?;
            *param_mut(&mut probe, l, i) = orig - h;
            let minus = loss_at(&probe, x)?;
            *param_mut(&mut probe, l, i) = orig;
            let err = relative_error(analytic, (plus - minus) / (2.0 * h));
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((l, i));
            }
        }
    }
    if let Some(gx) = input_grad {
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            xp[i] = x[i] + h;
            let plus = loss_at(model, &xp)?;
            xp[i] = x[i] - h;
            let minus = loss_at(model, &xp)?;
            xp[i] = x[i];
            let err = relative_error(gx[i], (plus - minus) / (2.0 * h));
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = None;
            }
        }
    }
    Ok(report)
}
