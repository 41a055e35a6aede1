use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Cache, Conv2d, Dense, Dropout, Layer, MaxPool2d, Residual};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::prior::PcaPrior;

/// Serializable description of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv { filters: usize, size: usize, stride: usize, padding: usize },
    MaxPool { size: usize },
    FullyConnected { units: usize },
    Relu,
    Dropout { rate: f64 },
    /// `bottleneck: Some(width)` builds 1x1 -> 3x3 -> 1x1; `None` builds two 3x3 convs.
    Residual { filters: usize, stride: usize, bottleneck: Option<usize> },
    /// Final linear layer holding the pose prior (`units` = 3J).
    PriorLayer { units: usize, frozen: bool },
}

impl LayerSpec {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LayerSpec::Conv { filters, size, stride, .. } => filters > 0 && size > 0 && stride > 0,
            LayerSpec::MaxPool { size } => size > 0,
            LayerSpec::FullyConnected { units } | LayerSpec::PriorLayer { units, .. } => units > 0,
            LayerSpec::Relu => true,
            LayerSpec::Dropout { rate } => (0.0..1.0).contains(&rate),
            LayerSpec::Residual { filters, stride, bottleneck } => {
                filters > 0 && stride > 0 && bottleneck.is_none_or(|b| b > 0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid layer {self:?}")))
        }
    }
}

/// What a network is trained to regress.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetKind {
    PoseNet,
    RefineNet,
    Custom,
}

impl NetKind {
    pub fn name(self) -> &'static str {
        match self {
            NetKind::PoseNet => "posenet",
            NetKind::RefineNet => "refinenet",
            NetKind::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub kind: NetKind,
    /// `[channels, height, width]`
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Forward caches of a training pass, consumed by [`Network::backward`].
#[derive(Debug)]
pub struct Tape<T> {
    caches: Vec<Cache<T>>,
}

/// Sequential network built from an [`ArchitectureSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    spec: ArchitectureSpec,
    layers: Vec<Layer<T>>,
    mode: Mode,
}

enum Shape {
    Image([usize; 3]),
    Flat(usize),
}

impl Shape {
    fn flat(&self) -> usize {
        match *self {
            Shape::Image([c, h, w]) => c * h * w,
            Shape::Flat(n) => n,
        }
    }

    fn image(&self, what: &str) -> Result<[usize; 3]> {
        match *self {
            Shape::Image(s) => Ok(s),
            Shape::Flat(_) => Err(Error::Shape(format!("{what} cannot follow a fully-connected layer"))),
        }
    }
}

fn conv_out(h: usize, size: usize, stride: usize, padding: usize) -> Result<usize> {
    if h + 2 * padding < size {
        return Err(Error::Shape(format!("{h}px input too small for {size}x{size} kernel")));
    }
    Ok((h + 2 * padding - size) / stride + 1)
}

impl<T: Scalar> Network<T> {
    /// Builds a network with He-initialized weights and zero biases.
    pub fn from_spec(spec: ArchitectureSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [c, h, w] = spec.input;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Config(format!("invalid input shape {:?}", spec.input)));
        }
        let mut shape = Shape::Image(spec.input);
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (i, ls) in spec.layers.iter().enumerate() {
            ls.validate()?;
            if matches!(ls, LayerSpec::PriorLayer { .. }) && i + 1 != spec.layers.len() {
                return Err(Error::Config("the prior layer must be the last layer".into()));
            }
            let layer = match *ls {
                LayerSpec::Conv { filters, size, stride, padding } => {
                    let [c, h, w] = shape.image("conv")?;
                    shape = Shape::Image([
                        filters,
                        conv_out(h, size, stride, padding)?,
                        conv_out(w, size, stride, padding)?,
                    ]);
                    Layer::Conv(Conv2d::new(c, filters, size, stride, padding, &mut rng))
                }
                LayerSpec::MaxPool { size } => {
                    let [c, h, w] = shape.image("maxpool")?;
                    shape = Shape::Image([c, h.div_ceil(size), w.div_ceil(size)]);
                    Layer::MaxPool(MaxPool2d { size })
                }
                LayerSpec::FullyConnected { units } => {
                    let d = Dense::new(shape.flat(), units, &mut rng);
                    shape = Shape::Flat(units);
                    Layer::Dense(d)
                }
                LayerSpec::PriorLayer { units, frozen } => {
                    let mut d = Dense::new(shape.flat(), units, &mut rng);
                    d.frozen = frozen;
                    shape = Shape::Flat(units);
                    Layer::Dense(d)
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Dropout { rate } => Layer::Dropout(Dropout { rate }),
                LayerSpec::Residual { filters, stride, bottleneck } => {
                    let [c, h, w] = shape.image("residual")?;
                    let branch = match bottleneck {
                        Some(mid) => vec![
                            Layer::Conv(Conv2d::new(c, mid, 1, 1, 0, &mut rng)),
                            Layer::Relu,
                            Layer::Conv(Conv2d::new(mid, mid, 3, stride, 1, &mut rng)),
                            Layer::Relu,
                            Layer::Conv(Conv2d::new(mid, filters, 1, 1, 0, &mut rng)),
                        ],
                        None => vec![
                            Layer::Conv(Conv2d::new(c, filters, 3, stride, 1, &mut rng)),
                            Layer::Relu,
                            Layer::Conv(Conv2d::new(filters, filters, 3, 1, 1, &mut rng)),
                        ],
                    };
                    let shortcut = (stride > 1 || c != filters)
                        .then(|| Conv2d::new(c, filters, 1, stride, 0, &mut rng));
                    shape = Shape::Image([filters, conv_out(h, 3, stride, 1)?, conv_out(w, 3, stride, 1)?]);
                    Layer::Residual(Box::new(Residual { branch, shortcut }))
                }
            };
            layers.push(layer);
        }
        Ok(Self { spec, layers, mode: Mode::Eval })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn kind(&self) -> NetKind {
        self.spec.kind
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn input_len(&self) -> usize {
        self.spec.input.iter().product()
    }

    pub fn input_resolution(&self) -> usize {
        self.spec.input[1]
    }

    pub fn output_dim(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Dense(d) => Some(d.outputs),
                _ => None,
            })
            .unwrap_or(0)
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Per-tensor trainability, aligned with [`Network::params`].
    pub fn trainable(&self) -> Vec<bool> {
        self.layers
            .iter()
            .flat_map(|l| {
                let frozen = matches!(l, Layer::Dense(d) if d.frozen);
                std::iter::repeat_n(!frozen, l.num_params())
            })
            .collect()
    }

    pub fn zero_grads(&self) -> Vec<Tensor<T>> {
        self.params().into_iter().map(|p| Tensor::zeros(p.shape())).collect()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.item_len() != self.input_len() || x.batch() == 0 {
            return Err(Error::Shape(format!(
                "network input {:?} does not match {:?}",
                x.shape(),
                self.spec.input
            )));
        }
        let [c, h, w] = self.spec.input;
        x.clone().reshaped(&[x.batch(), c, h, w])
    }

    /// Pure evaluation-mode forward pass (dropout disabled, nothing cached).
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = self.check_input(x)?;
        let mut none = None;
        for l in &self.layers {
            h = l.forward(&h, false, &mut none)?.0;
        }
        Ok(h)
    }

    /// Forward pass in the network's current mode, recording a tape for
    /// backward. Train mode needs `rng` for dropout.
    pub fn forward(&self, x: &Tensor<T>, rng: Option<&mut dyn RngCore>) -> Result<(Tensor<T>, Tape<T>)> {
        let mut h = self.check_input(x)?;
        let mut rng = if self.mode == Mode::Train { rng } else { None };
        let mut caches = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (y, c) = l.forward(&h, true, &mut rng)?;
            h = y;
            caches.push(c);
        }
        Ok((h, Tape { caches }))
    }

    /// Gradients of `sum(grad_out * output)` w.r.t. every parameter (in
    /// [`Network::params`] order) and, optionally, the input.
    pub fn backward(
        &self,
        tape: &Tape<T>,
        grad_out: &Tensor<T>,
        need_input: bool,
    ) -> (Vec<Tensor<T>>, Option<Tensor<T>>) {
        let mut grads = self.zero_grads();
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut acc = 0;
        for l in &self.layers {
            offsets.push(acc);
            acc += l.num_params();
        }
        let mut g = grad_out.clone();
        let mut input_grad = None;
        for (i, (l, c)) in self.layers.iter().zip(&tape.caches).enumerate().rev() {
            let np = l.num_params();
            let needs = need_input || i > 0;
            match l.backward(c, &g, &mut grads[offsets[i]..offsets[i] + np], needs) {
                Some(next) if i > 0 => g = next,
                other => {
                    input_grad = other;
                    break;
                }
            }
        }
        (grads, input_grad)
    }

    /// Installs `prior` into the final layer: weights = componentsᵀ, bias = mean.
    pub fn install_prior(&mut self, prior: &PcaPrior) -> Result<()> {
        let (weights, bias) = prior.init_output_layer();
        let last = match self.layers.last_mut() {
            Some(Layer::Dense(d)) => d,
            _ => return Err(Error::Config("network has no final linear layer".into())),
        };
        if last.outputs != prior.dim() || last.inputs != prior.k() {
            return Err(Error::Dimension(format!(
                "final layer is {}x{}, prior needs {}x{}",
                last.outputs,
                last.inputs,
                prior.dim(),
                prior.k()
            )));
        }
        last.weight = Tensor::from_vec(&[prior.dim(), prior.k()], weights.iter().map(|&v| T::of(v)).collect())?;
        last.bias = Tensor::from_vec(&[prior.dim()], bias.iter().map(|&v| T::of(v)).collect())?;
        Ok(())
    }

    /// Sets every parameter of layer `index` to zero.
    pub fn zero_layer(&mut self, index: usize) {
        for p in self.layers[index].params_mut() {
            p.fill(T::zero());
        }
    }

    /// Index of the layer feeding the final linear layer's input (the
    /// penultimate linear layer).
    pub fn penultimate_dense(&self) -> Option<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Layer::Dense(_)))
            .map(|(i, _)| i)
            .rev()
            .nth(1)
    }

    /// Same architecture and parameter values in another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let mut out = Network::<U>::from_spec(self.spec.clone(), 0).expect("spec already validated");
        for (dst, src) in out.params_mut().into_iter().zip(self.params()) {
            *dst = src.cast();
        }
        out.mode = self.mode;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(layers: Vec<LayerSpec>) -> ArchitectureSpec {
        ArchitectureSpec { kind: NetKind::Custom, input: [2, 8, 8], layers }
    }

    #[test]
    fn prior_layer_must_be_last() {
        let spec = tiny(vec![
            LayerSpec::PriorLayer { units: 4, frozen: false },
            LayerSpec::FullyConnected { units: 3 },
        ]);
        assert!(Network::<f32>::from_spec(spec, 0).is_err());
    }

    #[test]
    fn invalid_dropout_rate_rejected() {
        assert!(Network::<f32>::from_spec(tiny(vec![LayerSpec::Dropout { rate: 1.0 }]), 0).is_err());
    }

    #[test]
    fn conv_after_dense_rejected() {
        let spec = tiny(vec![
            LayerSpec::FullyConnected { units: 3 },
            LayerSpec::Conv { filters: 1, size: 1, stride: 1, padding: 0 },
        ]);
        assert!(Network::<f32>::from_spec(spec, 0).is_err());
    }

    #[test]
    fn residual_identity_when_branch_zeroed() {
        let spec = tiny(vec![LayerSpec::Residual { filters: 2, stride: 1, bottleneck: Some(3) }]);
        let mut net = Network::<f64>::from_spec(spec, 4).unwrap();
        net.zero_layer(0);
        if let Layer::Residual(r) = &net.layers[0] {
            assert!(r.shortcut.is_none());
        }
        let x = Tensor::from_vec(&[1, 2, 8, 8], (0..128).map(|v| (v as f64).cos()).collect()).unwrap();
        assert_eq!(net.infer(&x).unwrap().data(), x.data());
    }

    #[test]
    fn strided_residual_halves_and_projects() {
        let spec = tiny(vec![LayerSpec::Residual { filters: 5, stride: 2, bottleneck: Some(2) }]);
        let net = Network::<f32>::from_spec(spec, 1).unwrap();
        let y = net.infer(&Tensor::zeros(&[3, 2, 8, 8])).unwrap();
        assert_eq!(y.shape(), &[3, 5, 4, 4]);
        let basic = tiny(vec![LayerSpec::Residual { filters: 2, stride: 2, bottleneck: None }]);
        let y = Network::<f32>::from_spec(basic, 1).unwrap().infer(&Tensor::zeros(&[1, 2, 8, 8])).unwrap();
        assert_eq!(y.shape(), &[1, 2, 4, 4]);
    }

    #[test]
    fn input_shape_mismatch() {
        let net = Network::<f32>::from_spec(tiny(vec![LayerSpec::FullyConnected { units: 2 }]), 0).unwrap();
        assert!(matches!(net.infer(&Tensor::zeros(&[1, 100])), Err(Error::Shape(_))));
    }

    #[test]
    fn cast_round_trip_keeps_values() {
        let spec = tiny(vec![LayerSpec::Conv { filters: 2, size: 3, stride: 1, padding: 1 }]);
        let net = Network::<f32>::from_spec(spec, 7).unwrap();
        let back: Network<f32> = net.cast::<f64>().cast();
        assert_eq!(back, net);
    }
}
