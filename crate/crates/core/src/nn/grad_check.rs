use super::{backward, mse_loss, NetworkParams};
use crate::error::{Error, Result};

/// Worst relative error between `backward` and central finite differences
/// over every parameter, for the batch `(x, y)`.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)` so that parameters with
/// vanishing gradient are compared on an absolute scale.
pub fn grad_check(net: &NetworkParams, x: &[f64], y: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::OutOfRange { name: "h", value: h });
    }
    let (_, analytic) = backward(net, x, y)?;
    let n = y.len();
    let loss_at = |p: &NetworkParams| -> Result<f64> { mse_loss(y, &p.forward_batch(x, n)?) };
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for j in 0..net.layers.len() {
        let n_w = net.layers[j].weights.len();
        for k in 0..net.layers[j].n_params() {
            let (orig, a) = if k < n_w {
                (net.layers[j].weights[k], analytic.layers[j].weights[k])
            } else {
                (net.layers[j].bias[k - n_w], analytic.layers[j].bias[k - n_w])
            };
            let set = |p: &mut NetworkParams, v: f64| {
                if k < n_w {
                    p.layers[j].weights[k] = v;
                } else {
                    p.layers[j].bias[k - n_w] = v;
                }
            };
            set(&mut probe, orig + h);
            let up = loss_at(&probe)?;
            set(&mut probe, orig - h);
            let down = loss_at(&probe)?;
            set(&mut probe, orig);
            let numeric = (up - down) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
