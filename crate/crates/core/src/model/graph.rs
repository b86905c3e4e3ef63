use std::collections::HashMap;

use super::{Layer, ModelError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelMetadata {
    pub name: String,
    pub width_multiplier: f32,
    pub input_size: u32,
}

/// Ordered chain of layers, with residual edges expressed as
/// [`Layer::ResidualAdd`] pointing back at an earlier layer's output.
#[derive(Debug, Clone)]
pub struct ModelGraph {
    metadata: ModelMetadata,
    input_shape: [usize; 3],
    class_count: usize,
    layers: Vec<Layer>,
    // shapes[i] is the input shape of layer i; shapes[len] is the output.
    shapes: Vec<Vec<usize>>,
}

impl ModelGraph {
    pub fn new(
        metadata: ModelMetadata,
        input_shape: [usize; 3],
        class_count: usize,
        layers: Vec<Layer>,
    ) -> Result<Self, ModelError> {
        if class_count == 0 {
            return Err(ModelError::ShapeMismatch("class_count must be positive".into()));
        }
        if input_shape.contains(&0) {
            return Err(ModelError::ShapeMismatch(format!("invalid input shape {input_shape:?}")));
        }
        let mut shapes = vec![input_shape.to_vec()];
        for (i, layer) in layers.iter().enumerate() {
            layer.validate_parameters()?;
            let input = &shapes[i];
            if let Layer::ResidualAdd { source } = *layer {
                if source >= i {
                    return Err(ModelError::ShapeMismatch(format!(
                        "layer {i}: residual source {source} is not an earlier layer"
                    )));
                }
                if &shapes[source + 1] != input {
                    return Err(ModelError::ShapeMismatch(format!(
                        "layer {i}: residual source shape {:?} differs from input {:?}",
                        shapes[source + 1],
                        input
                    )));
                }
            }
            let out = layer.output_shape(input).map_err(|e| ModelError::ShapeMismatch(format!("layer {i}: {e}")))?;
            shapes.push(out);
        }
        let last = shapes.last().expect("non-empty");
        if last.as_slice() != [class_count] {
            return Err(ModelError::ShapeMismatch(format!(
                "final output {last:?} is not a vector of {class_count} logits"
            )));
        }
        Ok(Self { metadata, input_shape, class_count, layers, shapes })
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.metadata
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// Shape of `x_k`: the input of layer `k`, or the logits for `k == layer_count`.
    pub fn shape_at(&self, k: usize) -> Option<&[usize]> {
        self.shapes.get(k).map(Vec::as_slice)
    }

    /// Every `k` at which the chain may be cut.
    pub fn valid_cuts(&self) -> Vec<usize> {
        (0..=self.layer_count()).filter(|&k| self.cut_allowed(k)).collect()
    }

    /// Cut points whose activation is a feature map the codec can compress.
    pub fn codec_cuts(&self) -> Vec<usize> {
        self.valid_cuts()
            .into_iter()
            .filter(|&k| k > 0 && k < self.layer_count() && self.shapes[k].len() == 3)
            .collect()
    }

    // A residual at r reading the output of layer s needs x_{s+1} on the
    // remote side, so cuts with s + 1 < k <= r are rejected.
    fn cut_allowed(&self, k: usize) -> bool {
        if k > self.layer_count() {
            return false;
        }
        self.layers.iter().enumerate().all(|(r, layer)| match *layer {
            Layer::ResidualAdd { source } => !(source + 1 < k && k <= r),
            _ => true,
        })
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor, ModelError> {
        self.check_input(input)?;
        self.run(input.clone(), 0, self.layer_count())
    }

    /// Runs layers `0..k` locally. `k == 0` returns the input unchanged.
    pub fn forward_prefix(&self, input: &Tensor, plan: SplitPlan) -> Result<Tensor, ModelError> {
        self.check_plan(plan)?;
        self.check_input(input)?;
        self.run(input.clone(), 0, plan.k())
    }

    /// Runs layers `k..` on a transmitted `x_k` and returns the logits.
    pub fn forward_suffix(&self, x_k: &Tensor, plan: SplitPlan) -> Result<Tensor, ModelError> {
        self.check_plan(plan)?;
        let k = plan.k();
        if x_k.shape() != self.shapes[k].as_slice() {
            return Err(ModelError::ShapeMismatch(format!(
                "x_{k} has shape {:?}, expected {:?}",
                x_k.shape(),
                self.shapes[k]
            )));
        }
        self.run(x_k.clone(), k, self.layer_count())
    }

    fn check_input(&self, input: &Tensor) -> Result<(), ModelError> {
        if input.shape() != self.input_shape {
            return Err(ModelError::ShapeMismatch(format!(
                "input shape {:?}, model expects {:?}",
                input.shape(),
                self.input_shape
            )));
        }
        Ok(())
    }

    fn check_plan(&self, plan: SplitPlan) -> Result<(), ModelError> {
        if self.cut_allowed(plan.k()) {
            Ok(())
        } else {
            Err(ModelError::InvalidCut(plan.k()))
        }
    }

    fn run(&self, mut x: Tensor, start: usize, end: usize) -> Result<Tensor, ModelError> {
        // outputs of layers that a later residual in [start, end) reads
        let mut saved: HashMap<usize, Tensor> = HashMap::new();
        let needed: Vec<usize> = self.layers[start..end]
            .iter()
            .filter_map(|l| match *l {
                Layer::ResidualAdd { source } => Some(source),
                _ => None,
            })
            .collect();
        for &s in &needed {
            if s + 1 == start {
                saved.insert(s, x.clone());
            } else if s + 1 < start {
                return Err(ModelError::InvalidCut(start));
            }
        }
        for i in start..end {
            let layer = &self.layers[i];
            x = match *layer {
                Layer::ResidualAdd { source } => {
                    let skip = saved.get(&source).ok_or(ModelError::InvalidCut(start))?;
                    layer.apply(&x, Some(skip))?
                }
                _ => layer.apply(&x, None)?,
            };
            if needed.contains(&i) {
                saved.insert(i, x.clone());
            }
        }
        Ok(x)
    }
}

/// Cut index `k`: layers `0..k` run locally, `k..` remotely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SplitPlan(usize);

impl SplitPlan {
    pub fn new(model: &ModelGraph, k: usize) -> Result<Self, ModelError> {
        if model.cut_allowed(k) {
            Ok(Self(k))
        } else {
            Err(ModelError::InvalidCut(k))
        }
    }

    pub fn k(self) -> usize {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::layer::{Affine, Conv2d, Dense};

    fn tiny() -> ModelGraph {
        let layers = vec![
            Layer::Conv2d(Conv2d {
                in_channels: 1,
                out_channels: 2,
                kernel: 1,
                stride: 1,
                padding: 0,
                weight: vec![1.0, -1.0],
                bias: vec![0.5, 0.0],
            }),
            Layer::Relu6,
            Layer::Affine(Affine { scale: vec![2.0, 1.0], shift: vec![0.0, 1.0] }),
            Layer::ResidualAdd { source: 1 },
            Layer::GlobalAvgPool,
            Layer::Dense(Dense {
                in_features: 2,
                out_features: 3,
                weight: vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0],
                bias: vec![0.0; 3],
            }),
        ];
        let meta = ModelMetadata { name: "tiny".into(), width_multiplier: 1.0, input_size: 2 };
        ModelGraph::new(meta, [1, 2, 2], 3, layers).unwrap()
    }

    #[test]
    fn residual_span_excluded_from_cuts() {
        let m = tiny();
        // source 1 -> skip is x_2; cutting at 3 would strand it
        assert_eq!(m.valid_cuts(), vec![0, 1, 2, 4, 5, 6]);
        assert!(SplitPlan::new(&m, 3).is_err());
        assert!(SplitPlan::new(&m, 7).is_err());
        assert_eq!(m.codec_cuts(), vec![1, 2, 4]);
    }

    #[test]
    fn composition_at_every_cut() {
        let m = tiny();
        let x = Tensor::new(vec![1, 2, 2], vec![0.3, -2.0, 1.5, 9.0]).unwrap();
        let full = m.forward(&x).unwrap();
        for k in m.valid_cuts() {
            let plan = SplitPlan::new(&m, k).unwrap();
            let mid = m.forward_prefix(&x, plan).unwrap();
            assert_eq!(mid.shape(), m.shape_at(k).unwrap());
            assert!(m.forward_suffix(&mid, plan).unwrap().bits_eq(&full), "k={k}");
        }
        let zero = SplitPlan::new(&m, 0).unwrap();
        assert!(m.forward_prefix(&x, zero).unwrap().bits_eq(&x));
    }

    #[test]
    fn bad_graphs_rejected() {
        let meta = ModelMetadata { name: "x".into(), width_multiplier: 1.0, input_size: 2 };
        let err = ModelGraph::new(meta.clone(), [1, 2, 2], 3, vec![Layer::Relu6]);
        assert!(matches!(err, Err(ModelError::ShapeMismatch(_))));
        let err = ModelGraph::new(meta, [1, 2, 2], 4, vec![Layer::ResidualAdd { source: 0 }]);
        assert!(matches!(err, Err(ModelError::ShapeMismatch(_))));
    }

    #[test]
    fn wrong_input_shape() {
        let m = tiny();
        let x = Tensor::zeros(vec![1, 3, 2]);
        assert!(matches!(m.forward(&x), Err(ModelError::ShapeMismatch(_))));
        let plan = SplitPlan::new(&m, 2).unwrap();
        assert!(m.forward_suffix(&x, plan).is_err());
    }
}
