use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use xprojct_core::Scalar;

use crate::error::{NnError, Result};
use crate::layer::{self, Cache, LayerParams, LayerSpec};
use crate::loss::bce_loss;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    /// Per-sample input shape, without the batch axis.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// Shapes after every layer; the first entry is the input shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(NnError::Shape(format!("input shape {:?} is empty", self.input_shape)));
        }
        let mut shapes = vec![self.input_shape.clone()];
        for l in &self.layers {
            let next = l.output_shape(shapes.last().expect("non-empty"))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    /// Checks layer compatibility and a sigmoid head of width `classes`.
    pub fn validate(&self, classes: usize) -> Result<()> {
        let shapes = self.shapes()?;
        if self.layers.last() != Some(&LayerSpec::SigmoidHead) {
            return Err(NnError::Shape("model must end with a sigmoid head".into()));
        }
        if self.layers[..self.layers.len() - 1].contains(&LayerSpec::SigmoidHead) {
            return Err(NnError::Shape("sigmoid head must be the last layer".into()));
        }
        let out = shapes.last().expect("non-empty");
        if out != &[classes] {
            return Err(NnError::Shape(format!("output shape {out:?}, expected [{classes}]")));
        }
        Ok(())
    }

    pub fn classes(&self) -> Result<usize> {
        let shapes = self.shapes()?;
        match shapes.last().map(Vec::as_slice) {
            Some(&[n]) => Ok(n),
            other => Err(NnError::Shape(format!("model output {other:?} is not a vector"))),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::parameter_count).sum()
    }
}

/// A sequential model with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<S> {
    spec: ModelSpec,
    shapes: Vec<Vec<usize>>,
    params: Vec<LayerParams<S>>,
}

/// Parameter gradients, laid out like the model's parameters.
pub type Gradients<S> = Vec<LayerParams<S>>;

impl<S: Scalar> Model<S> {
    /// Fan-in scaled uniform initialization for convolutions and dense
    /// layers (bound `sqrt(6 / fan_in)`), zero biases, and mean-projection
    /// weights `1/D` for the shrinking module.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Model::zeroed(spec)?;
        for (l, p) in model.spec.layers.iter().zip(model.params.iter_mut()) {
            match l {
                LayerSpec::Shrink2p5d { size } => p.weight.fill(S::of(1.0 / *size as f64)),
                _ if !p.weight.is_empty() => {
                    let bound = (6.0 / l.fan_in() as f64).sqrt();
                    for w in &mut p.weight {
                        *w = S::of(rng.random_range(-bound..bound));
                    }
                }
                _ => {}
            }
        }
        Ok(model)
    }

    pub fn zeroed(spec: ModelSpec) -> Result<Self> {
        spec.validate(spec.classes()?)?;
        let shapes = spec.shapes()?;
        let params = spec.layers.iter().map(LayerParams::zeros_like).collect();
        Ok(Model { spec, shapes, params })
    }

    pub fn from_params(spec: ModelSpec, params: Vec<LayerParams<S>>) -> Result<Self> {
        let mut model = Model::zeroed(spec)?;
        if params.len() != model.params.len()
            || params
                .iter()
                .zip(&model.params)
                .any(|(a, b)| a.weight.len() != b.weight.len() || a.bias.len() != b.bias.len())
        {
            return Err(NnError::Shape("parameter blocks do not match the model spec".into()));
        }
        model.params = params;
        Ok(model)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[LayerParams<S>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [LayerParams<S>] {
        &mut self.params
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    pub fn input_len(&self) -> usize {
        self.shapes[0].iter().product()
    }

    pub fn classes(&self) -> usize {
        self.shapes.last().expect("non-empty")[0]
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(LayerParams::len).sum()
    }

    pub fn cast<T: Scalar>(&self) -> Model<T> {
        let conv = |v: &[S]| v.iter().map(|x| T::of(x.as_f64())).collect();
        Model {
            spec: self.spec.clone(),
            shapes: self.shapes.clone(),
            params: self
                .params
                .iter()
                .map(|p| LayerParams {
                    weight: conv(&p.weight),
                    bias: conv(&p.bias),
                })
                .collect(),
        }
    }

    pub fn zero_gradients(&self) -> Gradients<S> {
        self.spec.layers.iter().map(LayerParams::zeros_like).collect()
    }

    fn check_sample(&self, x: &[S]) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(NnError::Shape(format!(
                "sample of {} values, model input {:?}",
                x.len(),
                self.input_shape()
            )));
        }
        Ok(())
    }

    /// Class probabilities for one sample.
    pub fn forward_sample(&self, x: &[S]) -> Result<Vec<S>> {
        self.check_sample(x)?;
        let mut a = x.to_vec();
        for (i, l) in self.spec.layers.iter().enumerate() {
            a = layer::forward(l, &self.params[i], &self.shapes[i], a, false).0;
        }
        Ok(a)
    }

    /// Output of every layer for one sample, in layer order.
    pub fn activations(&self, x: &[S]) -> Result<Vec<Vec<S>>> {
        self.check_sample(x)?;
        let mut outs: Vec<Vec<S>> = Vec::with_capacity(self.spec.layers.len());
        for (i, l) in self.spec.layers.iter().enumerate() {
            let input = outs.last().map_or_else(|| x.to_vec(), Clone::clone);
            outs.push(layer::forward(l, &self.params[i], &self.shapes[i], input, false).0);
        }
        Ok(outs)
    }

    /// Probabilities for a batch (`batch × classes`).
    pub fn forward(&self, batch: &Tensor<S>) -> Result<Tensor<S>> {
        if batch.sample_shape() != self.input_shape() {
            return Err(NnError::Shape(format!(
                "batch sample shape {:?}, model input {:?}",
                batch.sample_shape(),
                self.input_shape()
            )));
        }
        let rows: Vec<Vec<S>> = (0..batch.batch())
            .into_par_iter()
            .map(|i| self.forward_sample(batch.sample(i)))
            .collect::<Result<_>>()?;
        Tensor::new(vec![rows.len(), self.classes()], rows.concat())
    }

    /// Loss and parameter gradients of the mean binary cross-entropy for one
    /// sample, scaled by `scale` (e.g. `1 / batch`). With `want_input`, the
    /// gradient with respect to the input is returned as well.
    pub fn sample_gradients(
        &self,
        x: &[S],
        target: &[S],
        scale: S,
        want_input: bool,
    ) -> Result<(S, Gradients<S>, Option<Vec<S>>)> {
        self.check_sample(x)?;
        if target.len() != self.classes() {
            return Err(NnError::Shape(format!(
                "target of {} values for {} classes",
                target.len(),
                self.classes()
            )));
        }
        let n = self.spec.layers.len();
        let mut caches: Vec<Cache<S>> = Vec::with_capacity(n);
        let mut a = x.to_vec();
        for (i, l) in self.spec.layers.iter().enumerate() {
            let (out, cache) = layer::forward(l, &self.params[i], &self.shapes[i], a, true);
            caches.push(cache);
            a = out;
        }
        let loss = bce_loss(&a, target);
        // Sigmoid and cross-entropy are fused: d loss / d logit = (p - t) / C.
        let inv = scale / S::of(target.len() as f64);
        let mut grad: Vec<S> = a.iter().zip(target).map(|(&p, &t)| (p - t) * inv).collect();
        let mut grads = self.zero_gradients();
        let mut input_grad = None;
        for i in (0..n - 1).rev() {
            let cache = std::mem::replace(&mut caches[i], Cache::None);
            let need = i > 0 || want_input;
            match layer::backward(
                &self.spec.layers[i],
                &self.params[i],
                &self.shapes[i],
                cache,
                grad,
                &mut grads[i],
                need,
            ) {
                Some(g) if i > 0 => grad = g,
                Some(g) => {
                    input_grad = Some(g);
                    break;
                }
                None => break,
            }
        }
        Ok((loss, grads, input_grad))
    }

    /// Mean loss and accumulated gradients over a batch. Samples are
    /// processed in parallel and reduced in index order, so the result does
    /// not depend on the thread count.
    pub fn batch_gradients(&self, inputs: &[&[S]], targets: &[&[S]]) -> Result<(S, Gradients<S>)> {
        if inputs.len() != targets.len() || inputs.is_empty() {
            return Err(NnError::Shape("batch inputs and targets must be non-empty and paired".into()));
        }
        let scale = S::of(1.0 / inputs.len() as f64);
        let per: Vec<(S, Gradients<S>)> = inputs
            .par_iter()
            .zip(targets.par_iter())
            .map(|(x, t)| self.sample_gradients(x, t, scale, false).map(|(l, g, _)| (l, g)))
            .collect::<Result<_>>()?;
        let mut total = self.zero_gradients();
        let mut loss = S::zero();
        for (l, g) in &per {
            loss += *l * scale;
            for (acc, gi) in total.iter_mut().zip(g) {
                acc.add_assign(gi);
            }
        }
        Ok((loss, total))
    }
}
