use super::{softmax, Activation, ActivationTrace, Model};
use crate::error::{Error, Result};

/// Parameter gradients, laid out like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub(crate) fn zeros_like(model: &Model) -> Self {
        Self {
            weights: model.layers().iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: model.layers().iter().map(|l| vec![0.0; l.out_width()]).collect(),
        }
    }
}

fn check_label(model: &Model, y: usize) -> Result<()> {
    if y >= model.class_count() {
        return Err(Error::Label {
            label: y,
            class_count: model.class_count(),
        });
    }
    Ok(())
}

/// Class probabilities the loss is computed on. A softmax output layer is
/// used directly; any other output layer is treated as logits.
fn probabilities(model: &Model, trace: &ActivationTrace) -> Vec<f64> {
    let last = model.layers().last().expect("nonempty");
    match last.activation() {
        Activation::Softmax => trace.output().to_vec(),
        _ => softmax(trace.output()),
    }
}

/// Cross-entropy `J(x, y)` of the model's class distribution.
pub fn loss(model: &Model, x: &[f64], y: usize) -> Result<f64> {
    check_label(model, y)?;
    let trace = model.forward_with_trace(x)?;
    let p = probabilities(model, &trace);
    Ok(-p[y].max(f64::MIN_POSITIVE).ln())
}

/// Backpropagates the loss; returns the gradient at the model input and
/// optionally accumulates parameter gradients into `acc`.
fn backward(
    model: &Model,
    x: &[f64],
    y: usize,
    mut acc: Option<&mut Gradients>,
) -> Result<(f64, Vec<f64>)> {
    check_label(model, y)?;
    let trace = model.forward_with_trace(x)?;
    let p = probabilities(model, &trace);
    let loss = -p[y].max(f64::MIN_POSITIVE).ln();

    let layers = model.layers();
    let last = layers.len() - 1;
    // dJ/dlogits = p - onehot(y)
    let mut delta: Vec<f64> = p.clone();
    delta[y] -= 1.0;
    if layers[last].activation() != Activation::Softmax {
        // logits are the post-activation outputs; chain through the activation
        apply_activation_derivative(layers[last].activation(), &trace.layers[last].pre, &mut delta);
    }

    for j in (0..layers.len()).rev() {
        let layer = &layers[j];
        let input = if j == 0 { x } else { trace.layers[j - 1].post.as_slice() };
        if let Some(g) = acc.as_deref_mut() {
            let gw = &mut g.weights[j];
            for (k, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &mut gw[k * layer.in_width()..(k + 1) * layer.in_width()];
                for (w, xi) in row.iter_mut().zip(input) {
                    *w += d * xi;
                }
                g.biases[j][k] += d;
            }
        }
        let mut upstream = vec![0.0; layer.in_width()];
        for (k, d) in delta.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            for (u, w) in upstream.iter_mut().zip(layer.row(k)) {
                *u += d * w;
            }
        }
        if j > 0 {
            apply_activation_derivative(
                layers[j - 1].activation(),
                &trace.layers[j - 1].pre,
                &mut upstream,
            );
        }
        delta = upstream;
    }
    Ok((loss, delta))
}

fn apply_activation_derivative(activation: Activation, pre: &[f64], grad: &mut [f64]) {
    match activation {
        Activation::Relu => {
            for (g, z) in grad.iter_mut().zip(pre) {
                if *z <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        Activation::Identity => {}
        Activation::Softmax => {
            // Jacobian-vector product of softmax: s ⊙ (g − ⟨g, s⟩)
            let s = softmax(pre);
            let dot: f64 = grad.iter().zip(&s).map(|(g, s)| g * s).sum();
            for (g, s) in grad.iter_mut().zip(&s) {
                *g = s * (*g - dot);
            }
        }
    }
}

/// `∂J(x, y)/∂x` for cross-entropy loss.
pub fn input_gradient(model: &Model, x: &[f64], y: usize) -> Result<Vec<f64>> {
    backward(model, x, y, None).map(|(_, g)| g)
}

/// Loss and parameter gradients for a single labeled sample.
pub fn parameter_gradients(model: &Model, x: &[f64], y: usize) -> Result<(f64, Gradients)> {
    let mut g = Gradients::zeros_like(model);
    let (loss, _) = backward(model, x, y, Some(&mut g))?;
    Ok((loss, g))
}

pub(crate) fn accumulate(
    model: &Model,
    x: &[f64],
    y: usize,
    acc: &mut Gradients,
) -> Result<f64> {
    backward(model, x, y, Some(acc)).map(|(l, _)| l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::DenseLayer;

    #[test]
    fn zero_weights_give_zero_input_gradient() {
        let hidden = DenseLayer::new(3, 4, vec![0.0; 12], vec![0.5; 4], Activation::Relu).unwrap();
        let out = DenseLayer::new(4, 2, vec![0.0; 8], vec![0.1, 0.2], Activation::Softmax).unwrap();
        let model = Model::new(vec![hidden, out]).unwrap();
        let g = input_gradient(&model, &[1.0, 2.0, 3.0], 1).unwrap();
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn label_out_of_range() {
        let model = Model::random(2, &[3], 2, 1.0, 0).unwrap();
        assert!(matches!(
            input_gradient(&model, &[0.0, 0.0], 2),
            Err(Error::Label { label: 2, class_count: 2 })
        ));
    }

    #[test]
    fn identity_output_layer_uses_logits() {
        let hidden = DenseLayer::new(2, 3, vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.2], vec![0.0; 3], Activation::Relu)
            .unwrap();
        let out = DenseLayer::new(3, 2, vec![0.2, -0.1, 0.4, -0.3, 0.6, 0.1], vec![0.0; 2], Activation::Identity)
            .unwrap();
        let model = Model::new(vec![hidden, out]).unwrap();
        let x = [1.3, 0.7];
        let g = input_gradient(&model, &x, 0).unwrap();
        for i in 0..2 {
            let mut hi = x;
            let mut lo = x;
            hi[i] += 1e-5;
            lo[i] -= 1e-5;
            let fd = (loss(&model, &hi, 0).unwrap() - loss(&model, &lo, 0).unwrap()) / 2e-5;
            assert!((fd - g[i]).abs() < 1e-6, "{fd} vs {}", g[i]);
        }
    }
}
