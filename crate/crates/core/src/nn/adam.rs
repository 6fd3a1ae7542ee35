use super::{FreezeMask, Gradients, LayerTensors, NetworkParams, TrainConfig};
use crate::error::{Error, Result};

/// First/second moment accumulators mirroring a network's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<LayerTensors>,
    pub second_moment: Vec<LayerTensors>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(net: &NetworkParams) -> Self {
        let zeros: Vec<LayerTensors> = net.layers.iter().map(LayerTensors::zeros_like).collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
        }
    }
}

fn update(param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], cfg: &TrainConfig, c1: f64, c2: f64) {
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon_adam);
    }
}

/// One bias-corrected Adam update, applied only to layers the mask marks
/// trainable. Frozen layers and their moments are left untouched.
pub fn adam_step(
    net: &mut NetworkParams,
    grads: &Gradients,
    state: &mut AdamState,
    mask: &FreezeMask,
    cfg: &TrainConfig,
) -> Result<()> {
    let n = net.layers.len();
    if grads.layers.len() != n || state.first_moment.len() != n || mask.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: grads.layers.len().min(state.first_moment.len()).min(mask.len()),
        });
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (j, layer) in net.layers.iter_mut().enumerate() {
        if !mask.is_trainable(j) {
            continue;
        }
        let g = &grads.layers[j];
        let m = &mut state.first_moment[j];
        let v = &mut state.second_moment[j];
        if g.weights.len() != layer.weights.len() || g.bias.len() != layer.bias.len() {
            return Err(Error::DimensionMismatch {
                expected: layer.weights.len(),
                got: g.weights.len(),
            });
        }
        update(
            &mut layer.weights,
            &g.weights,
            &mut m.weights,
            &mut v.weights,
            cfg,
            c1,
            c2,
        );
        update(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias, cfg, c1, c2);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, LayerParams};

    fn scalar_net(w: f64) -> NetworkParams {
        NetworkParams::new(vec![LayerParams {
            in_dim: 1,
            out_dim: 1,
            activation: Activation::Linear,
            weights: vec![w],
            bias: vec![0.0],
        }])
        .unwrap()
    }

    #[test]
    fn first_step_with_unit_gradient() {
        // m1 = 0.1, v1 = 0.001; bias correction gives m_hat = v_hat = 1,
        // so the step is -lr / (1 + eps).
        let mut net = scalar_net(0.5);
        let mut state = AdamState::new(&net);
        let grads = Gradients {
            layers: vec![LayerTensors {
                weights: vec![1.0],
                bias: vec![0.0],
            }],
        };
        let cfg = TrainConfig::default();
        adam_step(&mut net, &grads, &mut state, &FreezeMask::all(1), &cfg).unwrap();
        let expected = 0.5 - 0.001 / (1.0 + 1e-8);
        assert!((net.layers[0].weights[0] - expected).abs() < 1e-15);
        assert!((net.layers[0].weights[0] - 0.5 + 0.001).abs() < 1e-10);
        assert_eq!(net.layers[0].bias[0], 0.0);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn zero_gradients_leave_params() {
        let mut net = crate::nn::init_network(&[3, 4, 1], 2).unwrap();
        let before = net.clone();
        let mut state = AdamState::new(&net);
        let grads = Gradients {
            layers: net.layers.iter().map(LayerTensors::zeros_like).collect(),
        };
        adam_step(
            &mut net,
            &grads,
            &mut state,
            &FreezeMask::all(2),
            &TrainConfig::default(),
        )
        .unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn mask_limits_updates_to_one_layer() {
        let mut net = crate::nn::init_network(&[3, 4, 4, 1], 2).unwrap();
        let before = net.clone();
        let mut state = AdamState::new(&net);
        let (_, grads) = crate::nn::backward(&net, &[0.3, -0.2, 0.9, 1.0, 2.0, -1.0], &[1.0, -1.0]).unwrap();
        let mask = FreezeMask::only(3, &[1]).unwrap();
        adam_step(&mut net, &grads, &mut state, &mask, &TrainConfig::default()).unwrap();
        assert_eq!(net.layers[0], before.layers[0]);
        assert_ne!(net.layers[1], before.layers[1]);
        assert_eq!(net.layers[2], before.layers[2]);
        assert!(state.first_moment[0].weights.iter().all(|&m| m == 0.0));
        assert!(state.first_moment[2].weights.iter().all(|&m| m == 0.0));
    }
}
