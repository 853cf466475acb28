//! Single-stage grid detector shared by teacher, student and baseline.
//!
//! Backbone: four `[3x3 conv, stride 2, 1 px padding] -> ReLU` blocks with widths 8, 16, 32, 64.
//! Head: a 1x1 conv producing `5 + num_classes` values per grid cell, laid out as
//! `[objectness, tx, ty, tw, th, class logits...]`. The global average pool of the last
//! backbone feature map is the embedding used for distillation. Teacher and student differ
//! only in the number of input planes seen by the first convolution.

mod checkpoint;
mod conv;
mod head;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use head::{
    assign_targets, decode, detection_loss, detection_loss_with_grad, CellTarget, LossTerms,
    Targets, LAMBDA_BOX, LAMBDA_CLS, LAMBDA_NOOBJ, LAMBDA_OBJ,
};

use crate::error::{Error, Result};
use crate::sample::ImagePlane;

pub const BACKBONE_WIDTHS: [usize; 4] = [8, 16, 32, 64];
pub const EMBED_DIM: usize = 64;
/// Total downsampling of the backbone.
pub const STRIDE: usize = 16;
/// Per-layer leading padding (1 pixel before the input, else 1 after). This puts the receptive
/// field centre of grid cell `i` at pixel `16 i + 7`, i.e. on the cell centre, instead of on
/// its top-left corner as uniform leading padding would.
pub const LEAD_PAD: [usize; 4] = [0, 0, 0, 1];
pub const OBJECTNESS_BIAS_INIT: f64 = -2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub in_planes: usize,
    pub num_classes: usize,
    pub input_size: usize,
}

impl DetectorConfig {
    pub fn new(in_planes: usize, num_classes: usize, input_size: usize) -> Result<Self> {
        let cfg = Self {
            in_planes,
            num_classes,
            input_size,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn teacher(num_classes: usize, input_size: usize) -> Result<Self> {
        Self::new(4, num_classes, input_size)
    }

    pub fn student(num_classes: usize, input_size: usize) -> Result<Self> {
        Self::new(3, num_classes, input_size)
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.in_planes, 3 | 4) {
            return Err(Error::invalid(format!("in_planes must be 3 or 4, got {}", self.in_planes)));
        }
        if self.num_classes == 0 {
            return Err(Error::invalid("num_classes must be >= 1"));
        }
        if self.input_size == 0 || self.input_size % STRIDE != 0 {
            return Err(Error::invalid(format!(
                "input_size {} must be a positive multiple of {STRIDE}",
                self.input_size
            )));
        }
        Ok(())
    }

    /// Grid cells per side.
    pub fn grid(&self) -> usize {
        self.input_size / STRIDE
    }

    pub fn outputs_per_cell(&self) -> usize {
        5 + self.num_classes
    }

    /// Named parameter shapes, in storage order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut shapes = Vec::new();
        let mut prev = self.in_planes;
        for (i, &w) in BACKBONE_WIDTHS.iter().enumerate() {
            shapes.push((format!("conv{}.weight", i + 1), vec![w, prev, 3, 3]));
            shapes.push((format!("conv{}.bias", i + 1), vec![w]));
            prev = w;
        }
        shapes.push(("head.weight".into(), vec![self.outputs_per_cell(), EMBED_DIM]));
        shapes.push(("head.bias".into(), vec![self.outputs_per_cell()]));
        shapes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Teacher,
    Student,
    Baseline,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Teacher => "teacher",
            Role::Student => "student",
            Role::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Ordered collection of named tensors; also used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn zeros(shapes: &[(String, Vec<usize>)]) -> Self {
        Self {
            tensors: shapes
                .iter()
                .map(|(name, shape)| Tensor {
                    name: name.clone(),
                    shape: shape.clone(),
                    data: vec![0.0; shape.iter().product()],
                })
                .collect(),
        }
    }

    pub fn from_tensors(tensors: Vec<Tensor>) -> Result<Self> {
        if let Some(t) = tensors
            .iter()
            .find(|t| t.data.len() != t.shape.iter().product::<usize>())
        {
            return Err(Error::Shape(format!("tensor {} has wrong length", t.name)));
        }
        Ok(Self { tensors })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: vec![0.0; t.data.len()],
                })
                .collect(),
        }
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &ParamStore, scale: f64) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|x| *x *= s);
        }
    }
}

/// Dense head output, cell-major: `values[(row * grid + col) * channels + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPrediction {
    grid: usize,
    channels: usize,
    values: Vec<f64>,
}

impl RawPrediction {
    pub fn new(grid: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid * grid * channels {
            return Err(Error::Shape(format!(
                "prediction {grid}x{grid}x{channels} needs {} values, got {}",
                grid * grid * channels,
                values.len()
            )));
        }
        Ok(Self {
            grid,
            channels,
            values,
        })
    }

    pub fn grid(&self) -> usize {
        self.grid
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn cell(&self, row: usize, col: usize) -> &[f64] {
        &self.values[(row * self.grid + col) * self.channels..][..self.channels]
    }
}

/// Final-backbone feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// im2col patches feeding each conv layer.
    cols: Vec<Vec<f64>>,
    /// Post-ReLU output of each conv layer, `[c][h][w]`.
    acts: Vec<Vec<f64>>,
    /// Spatial side of each conv layer's input.
    sides: Vec<usize>,
    pub prediction: RawPrediction,
    pub embedding: Embedding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    config: DetectorConfig,
    role: Role,
    params: ParamStore,
}

impl DetectorModel {
    /// Kaiming-uniform (fan-in) kernels, zero biases, objectness bias at -2.
    pub fn init(config: DetectorConfig, role: Role, seed: u64) -> Result<Self> {
        config.validate()?;
        check_role(&config, role)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::zeros(&config.param_shapes());
        for t in params.tensors_mut() {
            if t.name.ends_with(".weight") {
                let fan_in: usize = t.shape[1..].iter().product();
                let bound = (6.0 / fan_in as f64).sqrt();
                t.data.iter_mut().for_each(|w| *w = rng.gen_range(-bound..bound));
            } else if t.name == "head.bias" {
                t.data[0] = OBJECTNESS_BIAS_INIT;
            }
        }
        Ok(Self {
            config,
            role,
            params,
        })
    }

    pub fn from_params(config: DetectorConfig, role: Role, params: ParamStore) -> Result<Self> {
        config.validate()?;
        check_role(&config, role)?;
        let expected = ParamStore::zeros(&config.param_shapes());
        if !expected.same_layout(&params) {
            return Err(Error::Shape("parameter layout does not match config".into()));
        }
        Ok(Self {
            config,
            role,
            params,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }
    pub fn role(&self) -> Role {
        self.role
    }
    pub fn params(&self) -> &ParamStore {
        &self.params
    }
    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }
    pub fn param_count(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn with_role(mut self, role: Role) -> Result<Self> {
        check_role(&self.config, role)?;
        self.role = role;
        Ok(self)
    }

    fn stack_input(&self, planes: &[&ImagePlane]) -> Result<Vec<f64>> {
        if planes.len() != self.config.in_planes {
            return Err(Error::PlaneCount {
                expected: self.config.in_planes,
                got: planes.len(),
            });
        }
        let h = self.config.input_size;
        let mut input = Vec::with_capacity(planes.len() * h * h);
        for p in planes {
            if p.width() != h || p.height() != h {
                return Err(Error::Shape(format!(
                    "plane is {}x{}, model expects {h}x{h}",
                    p.width(),
                    p.height()
                )));
            }
            input.extend_from_slice(p.values());
        }
        Ok(input)
    }

    /// Raw head output and embedding.
    pub fn forward(&self, planes: &[&ImagePlane]) -> Result<(RawPrediction, Embedding)> {
        let pass = self.forward_train(planes)?;
        Ok((pass.prediction, pass.embedding))
    }

    pub fn backbone_embedding(&self, planes: &[&ImagePlane]) -> Result<Embedding> {
        Ok(self.forward(planes)?.1)
    }

    /// Forward pass retaining the activations needed by [`DetectorModel::backward`].
    pub fn forward_train(&self, planes: &[&ImagePlane]) -> Result<ForwardPass> {
        let mut x = self.stack_input(planes)?;
        let mut side = self.config.input_size;
        let mut c = self.config.in_planes;
        let mut cols_cache = Vec::with_capacity(4);
        let mut acts = Vec::with_capacity(4);
        let mut sides = Vec::with_capacity(4);
        for (i, &width) in BACKBONE_WIDTHS.iter().enumerate() {
            let w = &self.params.tensors[2 * i].data;
            let b = &self.params.tensors[2 * i + 1].data;
            let cols = conv::im2col(&x, c, side, side, LEAD_PAD[i]);
            let out_side = conv::out_side(side);
            let mut y = conv::matmul_bias(w, b, &cols, c * 9, out_side * out_side);
            y.iter_mut().for_each(|v| *v = v.max(0.0));
            sides.push(side);
            cols_cache.push(cols);
            acts.push(y.clone());
            x = y;
            side = out_side;
            c = width;
        }
        let cells = side * side;
        let feats = &x;
        let embedding = Embedding(
            (0..EMBED_DIM)
                .map(|ch| feats[ch * cells..][..cells].iter().sum::<f64>() / cells as f64)
                .collect(),
        );
        let hw = &self.params.tensors[8].data;
        let hb = &self.params.tensors[9].data;
        let k = self.config.outputs_per_cell();
        let mut pred = vec![0.0; cells * k];
        for p in 0..cells {
            for o in 0..k {
                let row = &hw[o * EMBED_DIM..][..EMBED_DIM];
                let mut acc = hb[o];
                for (ch, wv) in row.iter().enumerate() {
                    acc += wv * feats[ch * cells + p];
                }
                pred[p * k + o] = acc;
            }
        }
        Ok(ForwardPass {
            cols: cols_cache,
            acts,
            sides,
            prediction: RawPrediction::new(side, k, pred)?,
            embedding,
        })
    }

    /// Parameter gradients given `d_pred` (same layout as the prediction) and an optional
    /// gradient with respect to the embedding.
    pub fn backward(
        &self,
        pass: &ForwardPass,
        d_pred: &[f64],
        d_embed: Option<&[f64]>,
    ) -> Result<ParamStore> {
        let grid = pass.prediction.grid;
        let cells = grid * grid;
        let k = self.config.outputs_per_cell();
        if d_pred.len() != cells * k {
            return Err(Error::Shape("prediction gradient has wrong length".into()));
        }
        if let Some(de) = d_embed {
            if de.len() != EMBED_DIM {
                return Err(Error::Shape("embedding gradient has wrong length".into()));
            }
        }
        let mut grads = self.params.zeros_like();
        let feats = &pass.acts[3];
        let hw = &self.params.tensors[8].data;

        let mut d_feats = vec![0.0; EMBED_DIM * cells];
        {
            let (dhw, dhb) = {
                let (left, right) = grads.tensors.split_at_mut(9);
                (&mut left[8].data, &mut right[0].data)
            };
            for p in 0..cells {
                for o in 0..k {
                    let g = d_pred[p * k + o];
                    if g == 0.0 {
                        continue;
                    }
                    dhb[o] += g;
                    for ch in 0..EMBED_DIM {
                        dhw[o * EMBED_DIM + ch] += g * feats[ch * cells + p];
                        d_feats[ch * cells + p] += g * hw[o * EMBED_DIM + ch];
                    }
                }
            }
        }
        if let Some(de) = d_embed {
            for (ch, g) in de.iter().enumerate() {
                let share = g / cells as f64;
                d_feats[ch * cells..][..cells].iter_mut().for_each(|d| *d += share);
            }
        }

        let mut d_out = d_feats;
        for i in (0..4).rev() {
            // through ReLU
            for (d, a) in d_out.iter_mut().zip(&pass.acts[i]) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
            let in_c = if i == 0 {
                self.config.in_planes
            } else {
                BACKBONE_WIDTHS[i - 1]
            };
            let side = pass.sides[i];
            let out_side = conv::out_side(side);
            let (dw, db, dcols) = conv::matmul_bias_backward(
                &self.params.tensors[2 * i].data,
                &pass.cols[i],
                &d_out,
                BACKBONE_WIDTHS[i],
                in_c * 9,
                out_side * out_side,
                i > 0,
            );
            grads.tensors[2 * i].data = dw;
            grads.tensors[2 * i + 1].data = db;
            if let Some(dc) = dcols {
                d_out = conv::col2im(&dc, in_c, side, side, LEAD_PAD[i]);
            }
        }
        Ok(grads)
    }
}

fn check_role(config: &DetectorConfig, role: Role) -> Result<()> {
    let want = if role == Role::Teacher { 4 } else { 3 };
    if config.in_planes != want {
        return Err(Error::invalid(format!(
            "{} models take {want} input planes, config has {}",
            role.as_str(),
            config.in_planes
        )));
    }
    Ok(())
}
