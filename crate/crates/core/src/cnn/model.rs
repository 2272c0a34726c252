use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layers::{relu_backward, relu_inplace, softmax, Conv2d, Dense, Dropout, MaxPool2, Padding};
use super::tensor::{xavier_init, Param, Tensor};
use super::CnnError;
use crate::container::{manifest_path, read_manifest, write_manifest, ContainerError, Record, TensorContainer};
use crate::rng::{self, Rng};
use crate::Scalar;

/// Kernel sizes of the four parallel branches.
pub const REGION_SIZES: [usize; 4] = [3, 4, 5, 6];
pub const FIRST_FILTERS: usize = 64;
pub const SECOND_FILTERS: usize = 96;
/// Smallest accepted input side (the largest kernel).
pub const MIN_INPUT_SIDE: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    /// Width of the hidden fully-connected layer.
    pub hidden: usize,
    /// Dropout after every pooling layer and after the hidden layer.
    pub dropout: f64,
}

impl ArchConfig {
    pub fn new(channels: usize, height: usize, width: usize, classes: usize) -> Self {
        Self { channels, height, width, classes, hidden: 128, dropout: 0.3 }
    }

    pub fn validate(&self) -> Result<(), CnnError> {
        if self.height < MIN_INPUT_SIDE || self.width < MIN_INPUT_SIDE {
            return Err(CnnError::InputTooSmall { height: self.height, width: self.width });
        }
        if self.channels == 0 || self.classes < 2 || self.hidden == 0 {
            return Err(CnnError::Config("channels, hidden width must be positive and classes >= 2".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(CnnError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Flattened width of one branch output.
    pub fn branch_features(&self) -> usize {
        SECOND_FILTERS * (self.height / 4) * (self.width / 4)
    }

    pub fn merged_features(&self) -> usize {
        REGION_SIZES.len() * self.branch_features()
    }
}

#[derive(Debug, Clone)]
struct Branch<T> {
    conv1: Conv2d<T>,
    conv2: Conv2d<T>,
    pool1: MaxPool2,
    pool2: MaxPool2,
    drop1: Dropout<T>,
    drop2: Dropout<T>,
    /// conv1 activations (post-ReLU)
    act1: Option<Tensor<T>>,
    /// conv2 input (pooled, dropped)
    in2: Option<Tensor<T>>,
    act2: Option<Tensor<T>>,
}

#[derive(Debug, Clone)]
struct Cache<T> {
    input: Tensor<T>,
    merged: Tensor<T>,
    hidden: Tensor<T>,
    hidden_dropped: Tensor<T>,
}

/// `[conv(k,64) -> ReLU -> pool -> dropout -> conv(k,96) -> ReLU -> pool ->
/// dropout]` for `k` in 3, 4, 5, 6, in parallel; branch outputs flattened
/// and concatenated, then `dense(hidden) -> ReLU -> dropout -> dense(classes)
/// -> softmax`. Convolutions use same padding.
#[derive(Debug, Clone)]
pub struct CnnModel<T> {
    arch: ArchConfig,
    branches: Vec<Branch<T>>,
    dense: Dense<T>,
    drop_hidden: Dropout<T>,
    output: Dense<T>,
    cache: Option<Cache<T>>,
}

impl<T: Scalar> CnnModel<T> {
    /// Xavier-uniform weights, zero biases.
    pub fn new(arch: ArchConfig, seed: u64) -> Result<Self, CnnError> {
        arch.validate()?;
        let branches = REGION_SIZES
            .iter()
            .map(|&k| Branch {
                conv1: Conv2d::new(&format!("branch{k}/conv1"), arch.channels, FIRST_FILTERS, k, Padding::Same),
                conv2: Conv2d::new(&format!("branch{k}/conv2"), FIRST_FILTERS, SECOND_FILTERS, k, Padding::Same),
                pool1: MaxPool2::default(),
                pool2: MaxPool2::default(),
                drop1: Dropout::new(arch.dropout),
                drop2: Dropout::new(arch.dropout),
                act1: None,
                in2: None,
                act2: None,
            })
            .collect();
        let mut model = Self {
            arch,
            branches,
            dense: Dense::new("dense1", arch.merged_features(), arch.hidden),
            drop_hidden: Dropout::new(arch.dropout),
            output: Dense::new("dense_out", arch.hidden, arch.classes),
            cache: None,
        };
        for (i, p) in model.params_mut().into_iter().enumerate() {
            if p.shape.len() > 1 {
                p.value = xavier_init(&p.shape, rng::derive(seed, i as u64)).data;
            }
        }
        Ok(model)
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut out = Vec::new();
        for b in &self.branches {
            out.extend([&b.conv1.weight, &b.conv1.bias, &b.conv2.weight, &b.conv2.bias]);
        }
        out.extend([&self.dense.weight, &self.dense.bias, &self.output.weight, &self.output.bias]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = Vec::new();
        for b in &mut self.branches {
            out.push(&mut b.conv1.weight);
            out.push(&mut b.conv1.bias);
            out.push(&mut b.conv2.weight);
            out.push(&mut b.conv2.bias);
        }
        out.push(&mut self.dense.weight);
        out.push(&mut self.dense.bias);
        out.push(&mut self.output.weight);
        out.push(&mut self.output.bias);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(), CnnError> {
        let a = &self.arch;
        if x.shape.len() != 4 || x.shape[1..] != [a.channels, a.height, a.width] {
            return Err(CnnError::ShapeMismatch {
                expected: vec![a.channels, a.height, a.width],
                found: x.shape.clone(),
            });
        }
        Ok(())
    }

    /// Logits for a `B x C x H x W` batch. Dropout masks are drawn only in
    /// training mode. Activations are cached for [`CnnModel::backward`].
    pub fn forward(&mut self, x: &Tensor<T>, train: bool, rng: &mut Rng) -> Result<Tensor<T>, CnnError> {
        self.check_input(x)?;
        let b = x.shape[0];
        let per_branch = self.arch.branch_features();
        let merged_width = self.arch.merged_features();
        let mut merged = Tensor::zeros(vec![b, merged_width]);
        for (bi, br) in self.branches.iter_mut().enumerate() {
            let mut a1 = br.conv1.forward(x);
            relu_inplace(&mut a1);
            let mut p1 = br.pool1.forward(&a1);
            br.drop1.forward(&mut p1, train, rng);
            let mut a2 = br.conv2.forward(&p1);
            relu_inplace(&mut a2);
            let mut p2 = br.pool2.forward(&a2);
            br.drop2.forward(&mut p2, train, rng);
            debug_assert_eq!(p2.len(), b * per_branch);
            for s in 0..b {
                merged.data[s * merged_width + bi * per_branch..s * merged_width + (bi + 1) * per_branch]
                    .copy_from_slice(&p2.data[s * per_branch..(s + 1) * per_branch]);
            }
            br.act1 = Some(a1);
            br.in2 = Some(p1);
            br.act2 = Some(a2);
        }
        let mut hidden = self.dense.forward(&merged);
        relu_inplace(&mut hidden);
        let mut hidden_dropped = hidden.clone();
        self.drop_hidden.forward(&mut hidden_dropped, train, rng);
        let logits = self.output.forward(&hidden_dropped);
        self.cache = Some(Cache { input: x.clone(), merged, hidden, hidden_dropped });
        Ok(logits)
    }

    /// Class probabilities (inference mode).
    pub fn predict_proba(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, CnnError> {
        let mut unused = rng::seeded(0);
        let logits = self.forward(x, false, &mut unused)?;
        self.release_cache();
        Ok(softmax(&logits))
    }

    /// Drops cached activations (they can be large).
    pub fn release_cache(&mut self) {
        self.cache = None;
        for br in &mut self.branches {
            br.act1 = None;
            br.in2 = None;
            br.act2 = None;
        }
    }

    /// Accumulates parameter gradients for the last forward pass given the
    /// gradient of the loss with respect to the logits.
    pub fn backward(&mut self, grad_logits: &Tensor<T>) {
        let cache = self.cache.take().expect("backward without forward");
        let mut g_hidden = self.output.backward(&cache.hidden_dropped, grad_logits);
        self.drop_hidden.backward(&mut g_hidden);
        relu_backward(&cache.hidden, &mut g_hidden);
        let g_merged = self.dense.backward(&cache.merged, &g_hidden);

        let b = cache.input.shape[0];
        let per_branch = self.arch.branch_features();
        let merged_width = self.arch.merged_features();
        let (fh, fw) = (self.arch.height / 4, self.arch.width / 4);
        for (bi, br) in self.branches.iter_mut().enumerate() {
            let mut g = Tensor::zeros(vec![b, SECOND_FILTERS, fh, fw]);
            for s in 0..b {
                g.data[s * per_branch..(s + 1) * per_branch].copy_from_slice(
                    &g_merged.data[s * merged_width + bi * per_branch..s * merged_width + (bi + 1) * per_branch],
                );
            }
            br.drop2.backward(&mut g);
            let mut g = br.pool2.backward(&g);
            let act2 = br.act2.take().expect("cached");
            relu_backward(&act2, &mut g);
            let in2 = br.in2.take().expect("cached");
            let mut g = br.conv2.backward(&in2, &g, true).expect("input gradient requested");
            br.drop1.backward(&mut g);
            let mut g = br.pool1.backward(&g);
            let act1 = br.act1.take().expect("cached");
            relu_backward(&act1, &mut g);
            br.conv1.backward(&cache.input, &g, false);
        }
    }

    /// Parameters as container records (one per tensor, in
    /// [`CnnModel::params`] order).
    pub fn to_container(&self) -> TensorContainer {
        let mut c = TensorContainer::new();
        for (i, p) in self.params().into_iter().enumerate() {
            c.push(Record::from_slice(i as u64, p.name.clone(), p.shape.clone(), &p.value));
        }
        c
    }

    pub fn from_container(arch: ArchConfig, c: &TensorContainer) -> Result<Self, CnnError> {
        let mut model = Self::new(arch, 0)?;
        for p in model.params_mut() {
            let r = c.get(&p.name)?;
            if r.shape != p.shape {
                return Err(CnnError::ShapeMismatch { expected: p.shape.clone(), found: r.shape.clone() });
            }
            p.value = r.data.to_scalars();
        }
        Ok(model)
    }
}

/// Writes the parameters to `path` and the architecture to the JSON
/// manifest next to it.
pub fn save_checkpoint<T: Scalar>(model: &CnnModel<T>, path: &Path) -> Result<(), CnnError> {
    model.to_container().save(path)?;
    write_manifest(&manifest_path(path), model.arch())?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<CnnModel<T>, CnnError> {
    let arch: ArchConfig = read_manifest(&manifest_path(path))?;
    CnnModel::from_container(arch, &TensorContainer::load(path)?)
}

impl From<ContainerError> for CnnError {
    fn from(e: ContainerError) -> Self {
        CnnError::Checkpoint(e.to_string())
    }
}
