//! Two-layer mean-concat GraphSAGE with a hand-written backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{add_row, col_sums, matmul, matmul_into, Matrix, ROW_CHUNK};
use super::GnnError;
use crate::graph::Csr;
use crate::par;

pub const BLOCK_NAMES: [&str; 8] = ["w_in", "b_in", "w_h1", "b_h1", "w_h2", "b_h2", "w_out", "b_out"];

const W_IN: usize = 0;
const B_IN: usize = 1;
const W_H: [usize; 2] = [2, 4];
const B_H: [usize; 2] = [3, 5];
const W_OUT: usize = 6;
const B_OUT: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl Dims {
    pub const DEFAULT_HIDDEN: usize = 512;

    pub fn new(input: usize, classes: usize) -> Dims {
        Dims { input, hidden: Self::DEFAULT_HIDDEN, classes }
    }

    /// `(rows, cols)` of each block, in [`BLOCK_NAMES`] order.
    pub fn shapes(&self) -> [(usize, usize); 8] {
        let (f, h, c) = (self.input, self.hidden, self.classes);
        [(f, h), (1, h), (2 * h, h), (1, h), (2 * h, h), (1, h), (h, c), (1, c)]
    }
}

/// Weights and biases; biases are stored as `1 x n` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    dims: Dims,
    blocks: Vec<Matrix>,
}

impl ModelParams {
    pub fn zeros(dims: Dims) -> ModelParams {
        ModelParams { dims, blocks: dims.shapes().iter().map(|&(r, c)| Matrix::zeros(r, c)).collect() }
    }

    pub fn from_blocks(dims: Dims, blocks: Vec<Matrix>) -> Result<ModelParams, GnnError> {
        let shapes = dims.shapes();
        if blocks.len() != shapes.len() {
            return Err(GnnError::Dimension(format!("expected 8 parameter blocks, got {}", blocks.len())));
        }
        for ((b, &(r, c)), name) in blocks.iter().zip(&shapes).zip(BLOCK_NAMES) {
            if (b.rows, b.cols) != (r, c) || b.data.len() != r * c {
                return Err(GnnError::Dimension(format!("{name} is {}x{}, expected {r}x{c}", b.rows, b.cols)));
            }
            if !b.is_finite() {
                return Err(GnnError::Dimension(format!("{name} has non-finite entries")));
            }
        }
        Ok(ModelParams { dims, blocks })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn blocks(&self) -> &[Matrix] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Matrix] {
        &mut self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&Matrix> {
        BLOCK_NAMES.iter().position(|&b| b == name).map(|i| &self.blocks[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.blocks.iter().map(|b| b.data.len()).sum()
    }
}

/// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
pub fn init_params(dims: Dims, seed: u64) -> Result<ModelParams, GnnError> {
    if dims.input == 0 || dims.hidden == 0 || dims.classes == 0 {
        return Err(GnnError::Dimension(format!("all dimensions must be positive: {dims:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::zeros(dims);
    for (i, b) in p.blocks.iter_mut().enumerate() {
        if i % 2 == 0 {
            let bound = 1.0 / (b.rows as f64).sqrt();
            b.data.iter_mut().for_each(|x| *x = rng.gen_range(-bound..bound));
        }
    }
    Ok(p)
}

/// Inverted dropout on hidden activations.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut ChaCha8Rng,
}

struct Cache {
    /// Pre-activations of the input and two hidden layers.
    z: [Matrix; 3],
    /// Activations after ReLU and dropout.
    h: [Matrix; 3],
    /// Neighbour means of `h[0]` and `h[1]`.
    m: [Matrix; 2],
    masks: [Option<Vec<bool>>; 3],
    scale: f64,
    logits: Matrix,
}

fn check_input(p: &ModelParams, adj: &Csr, x: &Matrix) -> Result<(), GnnError> {
    if x.cols != p.dims.input {
        return Err(GnnError::Dimension(format!("feature width {} does not match {}", x.cols, p.dims.input)));
    }
    if adj.num_rows() != x.rows {
        return Err(GnnError::Dimension(format!("{} adjacency rows for {} feature rows", adj.num_rows(), x.rows)));
    }
    Ok(())
}

/// Row `v` of the result is the mean of the rows of `a` at the neighbours of `v`.
fn neighbor_mean(adj: &Csr, a: &Matrix) -> Matrix {
    let cols = a.cols;
    let mut out = Matrix::zeros(a.rows, cols);
    par::for_each_chunk_mut(&mut out.data, ROW_CHUNK * cols, |ci, chunk| {
        for (j, row) in chunk.chunks_mut(cols).enumerate() {
            let v = ci * ROW_CHUNK + j;
            let nb = adj.row(v);
            if nb.is_empty() {
                continue;
            }
            for &u in nb {
                for (o, x) in row.iter_mut().zip(a.row(u as usize)) {
                    *o += x;
                }
            }
            let inv = 1.0 / nb.len() as f64;
            row.iter_mut().for_each(|o| *o *= inv);
        }
    });
    out
}

/// Adjoint of [`neighbor_mean`] on a symmetric adjacency, added into `da`.
fn neighbor_mean_adjoint(adj: &Csr, dm: &Matrix, da: &mut Matrix) {
    let cols = dm.cols;
    par::for_each_chunk_mut(&mut da.data, ROW_CHUNK * cols, |ci, chunk| {
        for (j, row) in chunk.chunks_mut(cols).enumerate() {
            let u = ci * ROW_CHUNK + j;
            for &v in adj.row(u) {
                let inv = 1.0 / adj.degree(v as usize) as f64;
                for (o, g) in row.iter_mut().zip(dm.row(v as usize)) {
                    *o += g * inv;
                }
            }
        }
    });
}

fn draw_mask(len: usize, dropout: &mut Option<Dropout<'_>>) -> Option<Vec<bool>> {
    let d = dropout.as_mut()?;
    if d.rate <= 0.0 {
        return None;
    }
    Some((0..len).map(|_| d.rng.gen::<f64>() >= d.rate).collect())
}

fn relu_drop(z: &Matrix, mask: Option<&[bool]>, scale: f64) -> Matrix {
    let data = match mask {
        None => z.data.iter().map(|&x| x.max(0.0)).collect(),
        Some(m) => z.data.iter().zip(m).map(|(&x, &keep)| if keep { x.max(0.0) * scale } else { 0.0 }).collect(),
    };
    Matrix::from_vec(z.rows, z.cols, data)
}

/// Gradient through ReLU and dropout, in place on `g`.
fn relu_drop_back(g: &mut Matrix, z: &Matrix, mask: Option<&[bool]>, scale: f64) {
    match mask {
        None => g.data.iter_mut().zip(&z.data).for_each(|(g, &z)| {
            if z <= 0.0 {
                *g = 0.0
            }
        }),
        Some(m) => g.data.iter_mut().zip(&z.data).zip(m).for_each(|((g, &z), &keep)| {
            *g = if keep && z > 0.0 { *g * scale } else { 0.0 }
        }),
    }
}

fn run(p: &ModelParams, adj: &Csr, x: &Matrix, mut dropout: Option<Dropout<'_>>) -> Cache {
    let b = &p.blocks;
    let hdim = p.dims.hidden;
    let scale = dropout.as_ref().map_or(1.0, |d| 1.0 / (1.0 - d.rate));

    let mut z0 = matmul(x.view(), b[W_IN].view());
    add_row(&mut z0, &b[B_IN].data);
    let mask0 = draw_mask(z0.data.len(), &mut dropout);
    let h0 = relu_drop(&z0, mask0.as_deref(), scale);

    let layer = |prev: &Matrix, k: usize, dropout: &mut Option<Dropout<'_>>| {
        let m = neighbor_mean(adj, prev);
        let w = &b[W_H[k]];
        let mut z = matmul(prev.view(), w.rows_view(0, hdim));
        matmul_into(m.view(), w.rows_view(hdim, 2 * hdim), &mut z, true);
        add_row(&mut z, &b[B_H[k]].data);
        let mask = draw_mask(z.data.len(), dropout);
        let h = relu_drop(&z, mask.as_deref(), scale);
        (m, z, mask, h)
    };
    let (m0, z1, mask1, h1) = layer(&h0, 0, &mut dropout);
    let (m1, z2, mask2, h2) = layer(&h1, 1, &mut dropout);

    let mut logits = matmul(h2.view(), b[W_OUT].view());
    add_row(&mut logits, &b[B_OUT].data);
    Cache { z: [z0, z1, z2], h: [h0, h1, h2], m: [m0, m1], masks: [mask0, mask1, mask2], scale, logits }
}

fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        row.iter_mut().for_each(|x| *x /= sum);
    }
    out
}

/// Class probabilities, one row per node.
pub fn forward(p: &ModelParams, adj: &Csr, x: &Matrix, dropout: Option<Dropout<'_>>) -> Result<Matrix, GnnError> {
    check_input(p, adj, x)?;
    Ok(softmax_rows(&run(p, adj, x, dropout).logits))
}

/// Argmax class (lowest index on ties) and its probability, per node.
pub fn predict(p: &ModelParams, adj: &Csr, x: &Matrix) -> Result<Vec<(usize, f64)>, GnnError> {
    let probs = forward(p, adj, x, None)?;
    Ok((0..probs.rows)
        .map(|r| {
            let row = probs.row(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            (best, row[best])
        })
        .collect())
}

/// Mean cross-entropy over `targets` (local node, class) and the gradient of
/// every block. With `class_weights` the mean is weighted by the class of each target.
pub fn loss_and_grads(
    p: &ModelParams,
    adj: &Csr,
    x: &Matrix,
    targets: &[(u32, usize)],
    class_weights: Option<&[f64]>,
    dropout: Option<Dropout<'_>>,
) -> Result<(f64, ModelParams), GnnError> {
    check_input(p, adj, x)?;
    if targets.is_empty() {
        return Err(GnnError::EmptyMask);
    }
    let dims = p.dims;
    if let Some(&(n, c)) = targets.iter().find(|&&(n, c)| n as usize >= x.rows || c >= dims.classes) {
        return Err(GnnError::Dimension(format!("target ({n}, {c}) out of range")));
    }
    let cache = run(p, adj, x, dropout);
    let weight = |c: usize| class_weights.map_or(1.0, |w| w[c]);
    let total: f64 = targets.iter().map(|&(_, c)| weight(c)).sum();

    let mut loss = 0.0;
    let mut dlogits = Matrix::zeros(x.rows, dims.classes);
    for &(n, c) in targets {
        let row = cache.logits.row(n as usize);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let w = weight(c) / total;
        loss += w * (lse - row[c]);
        let d = dlogits.row_mut(n as usize);
        for (k, (g, &l)) in d.iter_mut().zip(row).enumerate() {
            *g += w * ((l - lse).exp() - if k == c { 1.0 } else { 0.0 });
        }
    }

    let b = &p.blocks;
    let hdim = dims.hidden;
    let mut grads = ModelParams::zeros(dims);
    let g = &mut grads.blocks;

    matmul_into(cache.h[2].view().t(), dlogits.view(), &mut g[W_OUT], false);
    g[B_OUT].data = col_sums(&dlogits);
    let mut dh = matmul(dlogits.view(), b[W_OUT].view().t());

    for k in [1usize, 0] {
        relu_drop_back(&mut dh, &cache.z[k + 1], cache.masks[k + 1].as_deref(), cache.scale);
        let dz = dh;
        let (prev, m) = (&cache.h[k], &cache.m[k]);
        let w = &b[W_H[k]];
        let mut gw = matmul(prev.view().t(), dz.view()).data;
        gw.extend(matmul(m.view().t(), dz.view()).data);
        g[W_H[k]] = Matrix::from_vec(2 * hdim, hdim, gw);
        g[B_H[k]].data = col_sums(&dz);
        let mut dprev = matmul(dz.view(), w.rows_view(0, hdim).t());
        let dm = matmul(dz.view(), w.rows_view(hdim, 2 * hdim).t());
        neighbor_mean_adjoint(adj, &dm, &mut dprev);
        dh = dprev;
    }

    relu_drop_back(&mut dh, &cache.z[0], cache.masks[0].as_deref(), cache.scale);
    matmul_into(x.view().t(), dh.view(), &mut g[W_IN], false);
    g[B_IN].data = col_sums(&dh);
    Ok((loss, grads))
}
