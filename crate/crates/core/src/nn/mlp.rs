use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::rng::{seeded, stream};
use crate::scalar::{all_finite, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

impl Activation {
    pub(crate) fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
        }
    }

    /// Derivative expressed through the pre-activation.
    pub(crate) fn derivative<T: Real>(self, pre: T) -> T {
        match self {
            Activation::Relu => {
                if pre > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Relu => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// Dense feedforward classifier. Layer `l` maps `dims[l]` features to
/// `dims[l + 1]` through `x · W_l + b_l`; every layer but the last is followed
/// by the hidden activation. The last layer emits raw logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel<T> {
    dims: Vec<usize>,
    weights: Vec<Matrix<T>>,
    biases: Vec<Vec<T>>,
    activation: Activation,
}

/// Parameter-shaped buffers: gradients and optimizer velocities.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBuffers<T> {
    pub weights: Vec<Matrix<T>>,
    pub biases: Vec<Vec<T>>,
}

impl<T: Real> ParamBuffers<T> {
    pub fn zeros_like(model: &MlpModel<T>) -> Self {
        ParamBuffers {
            weights: model
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: model.biases.iter().map(|b| vec![T::zero(); b.len()]).collect(),
        }
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
pub(crate) struct ForwardTrace<T> {
    /// Input of each layer (`inputs[0]` is the batch).
    pub inputs: Vec<Matrix<T>>,
    /// Pre-activation output of each layer; the last one is the logits.
    pub pre_activations: Vec<Matrix<T>>,
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::invalid(format!(
            "a classifier needs at least input and output sizes, got {dims:?}"
        )));
    }
    if let Some(pos) = dims.iter().position(|&d| d == 0) {
        return Err(Error::invalid(format!("layer {pos} has size zero")));
    }
    Ok(())
}

/// Fan-in scaled Gaussian initialization (variance `2 / fan_in`), zero biases.
pub fn init_model<T: Real>(dims: &[usize], seed: u64) -> Result<MlpModel<T>> {
    validate_dims(dims)?;
    let mut rng = seeded(seed, stream::INIT);
    let mut weights = Vec::with_capacity(dims.len() - 1);
    let mut biases = Vec::with_capacity(dims.len() - 1);
    for pair in dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let std = (2.0 / fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::lit(z * std)
            })
            .collect();
        weights.push(Matrix::new(fan_in, fan_out, data)?);
        biases.push(vec![T::zero(); fan_out]);
    }
    Ok(MlpModel {
        dims: dims.to_vec(),
        weights,
        biases,
        activation: Activation::Relu,
    })
}

impl<T: Real> MlpModel<T> {
    pub fn from_parts(
        weights: Vec<Matrix<T>>,
        biases: Vec<Vec<T>>,
        activation: Activation,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::invalid("need one bias vector per weight matrix"));
        }
        let mut dims = vec![weights[0].rows()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.rows() != *dims.last().unwrap() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {l} expects {} inputs, previous layer emits {}",
                    w.rows(),
                    dims.last().unwrap()
                )));
            }
            if b.len() != w.cols() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {l} bias has {} entries for {} outputs",
                    b.len(),
                    w.cols()
                )));
            }
            if !w.is_finite() || !all_finite(b) {
                return Err(Error::NonFinite(format!("parameters of layer {l}")));
            }
            dims.push(w.cols());
        }
        validate_dims(&dims)?;
        Ok(MlpModel {
            dims,
            weights,
            biases,
            activation,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Matrix<T>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<T>] {
        &self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_parameters(&self) -> usize {
        self.weights.iter().map(|w| w.data().len()).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [Matrix<T>], &mut [Vec<T>]) {
        (&mut self.weights, &mut self.biases)
    }

    fn check_batch(&self, batch: &Matrix<T>) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "batch has {} features, model expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        if !batch.is_finite() {
            return Err(Error::NonFinite("input batch".into()));
        }
        Ok(())
    }

    /// Logits for every row of `batch`.
    pub fn forward(&self, batch: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self
            .forward_trace(batch)?
            .pre_activations
            .pop()
            .expect("at least one layer"))
    }

    pub(crate) fn forward_trace(&self, batch: &Matrix<T>) -> Result<ForwardTrace<T>> {
        self.check_batch(batch)?;
        let last = self.num_layers() - 1;
        let mut inputs = Vec::with_capacity(self.num_layers());
        let mut pre_activations = Vec::with_capacity(self.num_layers());
        let mut current = batch.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = current.matmul(w)?;
            z.add_row_vector(b);
            let next = if l < last {
                let mut a = z.clone();
                let act = self.activation;
                a.map_inplace(|x| act.apply(x));
                Some(a)
            } else {
                None
            };
            inputs.push(current);
            pre_activations.push(z);
            if let Some(a) = next {
                current = a;
            } else {
                break;
            }
        }
        let logits = pre_activations.last().unwrap();
        if !logits.is_finite() {
            return Err(Error::NonFinite("logits".into()));
        }
        Ok(ForwardTrace {
            inputs,
            pre_activations,
        })
    }

    /// Parameter gradients given the gradient of the scalar batch loss with
    /// respect to the logits.
    pub(crate) fn backward(
        &self,
        trace: &ForwardTrace<T>,
        dlogits: Matrix<T>,
    ) -> Result<ParamBuffers<T>> {
        let n = self.num_layers();
        let mut grad_w = Vec::with_capacity(n);
        let mut grad_b = Vec::with_capacity(n);
        let mut delta = dlogits;
        for l in (0..n).rev() {
            let gw = trace.inputs[l].t_matmul(&delta)?;
            let gb = delta.column_sums();
            if !gw.is_finite() || !all_finite(&gb) {
                return Err(Error::NonFinite(format!("gradient of layer {l}")));
            }
            if l > 0 {
                let mut upstream = delta.matmul_t(&self.weights[l])?;
                let pre = &trace.pre_activations[l - 1];
                for (u, &z) in upstream.data_mut().iter_mut().zip(pre.data()) {
                    *u *= self.activation.derivative(z);
                }
                delta = upstream;
            }
            grad_w.push(gw);
            grad_b.push(gb);
        }
        grad_w.reverse();
        grad_b.reverse();
        Ok(ParamBuffers {
            weights: grad_w,
            biases: grad_b,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_shapes_and_zero_biases() {
        let m = init_model::<f64>(&[2, 4, 3], 7).unwrap();
        let shapes: Vec<_> = m.weights().iter().map(Matrix::shape).collect();
        assert_eq!(shapes, vec![(2, 4), (4, 3)]);
        assert!(m.biases().iter().flatten().all(|&b| b == 0.0));
        assert_eq!(m.num_classes(), 3);
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = init_model::<f64>(&[3, 5, 2], 11).unwrap();
        let b = init_model::<f64>(&[3, 5, 2], 11).unwrap();
        let c = init_model::<f64>(&[3, 5, 2], 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_rejects_degenerate_dims() {
        assert!(init_model::<f64>(&[2], 0).is_err());
        assert!(init_model::<f64>(&[], 0).is_err());
        assert!(init_model::<f64>(&[2, 0, 3], 0).is_err());
    }

    #[test]
    fn init_variance_tracks_fan_in() {
        let m = init_model::<f64>(&[400, 200], 3).unwrap();
        let w = m.weights()[0].data();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 2.0 / 400.0).abs() < 0.0005, "variance {var}");
    }

    #[test]
    fn zero_parameters_give_zero_logits() {
        let m = MlpModel::from_parts(
            vec![Matrix::zeros(3, 4), Matrix::zeros(4, 2)],
            vec![vec![0.0; 4], vec![0.0; 2]],
            Activation::Relu,
        )
        .unwrap();
        let batch = Matrix::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.5, 0.5, 9.0]]).unwrap();
        let logits = m.forward(&batch).unwrap();
        assert_eq!(logits.shape(), (2, 2));
        assert!(logits.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn identity_layer_passes_features_through() {
        let m = MlpModel::from_parts(vec![Matrix::identity(2)], vec![vec![0.0; 2]], Activation::Relu)
            .unwrap();
        let logits = m.forward(&Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap()).unwrap();
        assert_eq!(logits.row(0), &[1.0, 2.0]);
    }

    #[test]
    fn forward_rejects_mismatched_or_nonfinite_batches() {
        let m = init_model::<f64>(&[2, 3], 0).unwrap();
        assert!(matches!(
            m.forward(&Matrix::zeros(1, 3)),
            Err(Error::DimensionMismatch(_))
        ));
        let mut bad = Matrix::zeros(1, 2);
        bad.set(0, 0, f64::INFINITY);
        assert!(matches!(m.forward(&bad), Err(Error::NonFinite(_))));
    }

    #[test]
    fn from_parts_rejects_mismatched_layers() {
        let r = MlpModel::from_parts(
            vec![Matrix::<f64>::zeros(2, 3), Matrix::zeros(4, 2)],
            vec![vec![0.0; 3], vec![0.0; 2]],
            Activation::Relu,
        );
        assert!(r.is_err());
    }
}
