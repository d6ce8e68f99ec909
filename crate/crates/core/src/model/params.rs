use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self * x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `out += self^T * y`.
    pub fn add_transpose_matvec(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        for (r, &yr) in y.iter().enumerate() {
            if yr != 0.0 {
                axpy(yr, self.row(r), out);
            }
        }
    }

    /// `self += scale * a b^T`.
    pub fn add_outer(&mut self, scale: f64, a: &[f64], b: &[f64]) {
        for (r, &ar) in a.iter().enumerate() {
            let s = scale * ar;
            if s != 0.0 {
                axpy(s, b, self.row_mut(r));
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Single-layer perceptron without nonlinearity: `W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Affine {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Affine {
            weight: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.weight.matvec(x);
        axpy(1.0, &self.bias, &mut y);
        y
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows
    }
}

/// Weights of one GAG layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    /// Incoming-direction edge map, d x 2d.
    pub edge_in: Affine,
    /// Outgoing-direction edge map, d x 2d.
    pub edge_out: Affine,
    /// Node update map, d x 2d.
    pub node: Affine,
    /// Attention map to a scalar, 1 x 3d.
    pub att: Affine,
}

impl LayerWeights {
    pub fn zeros(d: usize) -> Self {
        LayerWeights {
            edge_in: Affine::zeros(d, 2 * d),
            edge_out: Affine::zeros(d, 2 * d),
            node: Affine::zeros(d, 2 * d),
            att: Affine::zeros(1, 3 * d),
        }
    }

    fn affines(&self) -> [&Affine; 4] {
        [&self.edge_in, &self.edge_out, &self.node, &self.att]
    }

    fn affines_mut(&mut self) -> [&mut Affine; 4] {
        [
            &mut self.edge_in,
            &mut self.edge_out,
            &mut self.node,
            &mut self.att,
        ]
    }
}

/// Every trainable tensor of the model. Also used for gradients and
/// optimizer moments, which share the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub items: Matrix,
    pub users: Matrix,
    pub layers: Vec<LayerWeights>,
}

const LAYER_TENSOR_NAMES: [&str; 8] = [
    "edge_in.weight",
    "edge_in.bias",
    "edge_out.weight",
    "edge_out.bias",
    "node.weight",
    "node.bias",
    "att.weight",
    "att.bias",
];

impl Weights {
    pub fn zeros(d: usize, num_items: usize, num_users: usize, num_layers: usize) -> Self {
        Weights {
            items: Matrix::zeros(num_items, d),
            users: Matrix::zeros(num_users, d),
            layers: (0..num_layers).map(|_| LayerWeights::zeros(d)).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Weights::zeros(
            self.items.cols,
            self.items.rows,
            self.users.rows,
            self.layers.len(),
        )
    }

    pub fn embed_dim(&self) -> usize {
        self.items.cols
    }

    /// Tensors in declaration order: items, users, then per layer
    /// edge_in (weight, bias), edge_out, node, att.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.items.data, &self.users.data];
        for layer in &self.layers {
            for affine in layer.affines() {
                out.push(&affine.weight.data);
                out.push(&affine.bias);
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.items.data, &mut self.users.data];
        for layer in &mut self.layers {
            for affine in layer.affines_mut() {
                out.push(&mut affine.weight.data);
                out.push(&mut affine.bias);
            }
        }
        out
    }

    /// `(name, shape)` per tensor, in declaration order.
    pub fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = vec![
            ("items".to_string(), vec![self.items.rows, self.items.cols]),
            ("users".to_string(), vec![self.users.rows, self.users.cols]),
        ];
        for (k, layer) in self.layers.iter().enumerate() {
            let mut names = LAYER_TENSOR_NAMES.iter();
            for affine in layer.affines() {
                out.push((
                    format!("layer{k}.{}", names.next().unwrap()),
                    vec![affine.out_dim(), affine.in_dim()],
                ));
                out.push((
                    format!("layer{k}.{}", names.next().unwrap()),
                    vec![affine.out_dim()],
                ));
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Appends zero rows to the embedding tables.
    pub(crate) fn grow_zeroed(&mut self, num_items: usize, num_users: usize) {
        let d = self.embed_dim();
        self.items.data.resize(num_items * d, 0.0);
        self.items.rows = num_items;
        self.users.data.resize(num_users * d, 0.0);
        self.users.rows = num_users;
    }
}

/// Hyperparameters of the model and its optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub num_layers: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub rng_seed: u64,
    /// Feed the receiver feature (instead of the sender) to the outgoing edge map.
    #[serde(default)]
    pub edge_out_uses_receiver: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 200,
            num_layers: 1,
            learning_rate: 0.003,
            batch_size: 100,
            rng_seed: 0,
            edge_out_uses_receiver: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 {
            return Err(Error::config("embed_dim", "must be at least 1"));
        }
        if self.num_layers == 0 {
            return Err(Error::config("num_layers", "must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be a positive number"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        Ok(())
    }

    pub fn init_bound(&self) -> f64 {
        1.0 / (self.embed_dim as f64).sqrt()
    }
}

/// Adam moment accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Weights,
    pub second: Weights,
    pub step: u64,
}

/// The complete model: configuration, weights and optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct GagModel {
    pub config: ModelConfig,
    pub weights: Weights,
    pub adam: AdamState,
    /// Bumped whenever the weights change; forward traces record it.
    pub(crate) version: u64,
}

// Stream identifiers mixed into the seed so every table gets its own draw.
const TABLE_ITEMS: u64 = 0x49;
const TABLE_USERS: u64 = 0x55;
const TABLE_LAYERS: u64 = 0x4c;

fn table_rng(seed: u64, table: u64, offset: usize) -> ChaCha8Rng {
    let mixed = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(table.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add((offset as u64).wrapping_mul(0x94D0_49BB_1331_11EB));
    ChaCha8Rng::seed_from_u64(mixed)
}

fn fill_uniform(values: &mut [f64], bound: f64, rng: &mut ChaCha8Rng) {
    let dist = Uniform::new_inclusive(-bound, bound);
    for v in values {
        *v = dist.sample(rng);
    }
}

impl GagModel {
    /// Fresh model with weights uniform on `[-1/sqrt(d), 1/sqrt(d)]`.
    pub fn init(config: ModelConfig, num_items: usize, num_users: usize) -> Result<Self> {
        config.validate()?;
        if num_items == 0 {
            return Err(Error::config(
                "num_items",
                "catalog must contain at least one item",
            ));
        }
        if num_users == 0 {
            return Err(Error::config("num_users", "at least one user is required"));
        }
        let d = config.embed_dim;
        let bound = config.init_bound();
        let mut weights = Weights::zeros(d, num_items, num_users, config.num_layers);
        fill_uniform(
            &mut weights.items.data,
            bound,
            &mut table_rng(config.rng_seed, TABLE_ITEMS, 0),
        );
        fill_uniform(
            &mut weights.users.data,
            bound,
            &mut table_rng(config.rng_seed, TABLE_USERS, 0),
        );
        let mut layer_rng = table_rng(config.rng_seed, TABLE_LAYERS, 0);
        for layer in &mut weights.layers {
            for affine in layer.affines_mut() {
                fill_uniform(&mut affine.weight.data, bound, &mut layer_rng);
                fill_uniform(&mut affine.bias, bound, &mut layer_rng);
            }
        }
        let adam = AdamState {
            first: weights.zeros_like(),
            second: weights.zeros_like(),
            step: 0,
        };
        Ok(GagModel {
            config,
            weights,
            adam,
            version: 0,
        })
    }

    pub fn num_items(&self) -> usize {
        self.weights.items.rows
    }

    pub fn num_users(&self) -> usize {
        self.weights.users.rows
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    /// Identifier of the current weight state.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn touch(&mut self) {
        self.version += 1;
    }

    /// Extends the embedding tables. Existing rows are kept bitwise; new rows
    /// are drawn from a stream keyed by the seed and the old table size.
    pub fn grow_catalog(&mut self, num_items: usize, num_users: usize) -> Result<()> {
        let (old_items, old_users) = (self.num_items(), self.num_users());
        if num_items < old_items {
            return Err(Error::config(
                "num_items",
                format!("cannot shrink catalog from {old_items} to {num_items}"),
            ));
        }
        if num_users < old_users {
            return Err(Error::config(
                "num_users",
                format!("cannot shrink user table from {old_users} to {num_users}"),
            ));
        }
        if num_items == old_items && num_users == old_users {
            return Ok(());
        }
        let d = self.embed_dim();
        let bound = self.config.init_bound();
        self.weights.grow_zeroed(num_items, num_users);
        self.adam.first.grow_zeroed(num_items, num_users);
        self.adam.second.grow_zeroed(num_items, num_users);
        fill_uniform(
            &mut self.weights.items.data[old_items * d..],
            bound,
            &mut table_rng(self.config.rng_seed, TABLE_ITEMS, old_items),
        );
        fill_uniform(
            &mut self.weights.users.data[old_users * d..],
            bound,
            &mut table_rng(self.config.rng_seed, TABLE_USERS, old_users),
        );
        self.touch();
        Ok(())
    }
}
