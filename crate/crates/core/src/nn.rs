//! Small fully connected networks with reverse-mode gradients and Adam.
//!
//! Arithmetic is carried out in `f64`. Every value that persists across an
//! update (weights, biases, Adam moments) is rounded to the nearest `f32`
//! after it is written, so the little-endian `f32` checkpoint format stores
//! the exact training state and a restored run continues bit-identically.

use std::fs;
use std::io::Read;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[inline]
pub(crate) fn to_f32_exact(x: f64) -> f64 {
    x as f32 as f64
}

/// Dense row-major matrix. Rows are batch samples throughout the crate.
#[derive(Clone, Debug, PartialEq)]
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

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
                context: "matrix data",
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                    context: "matrix row",
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row_vector(v: &[f64]) -> Self {
        Matrix {
            rows: 1,
            cols: v.len(),
            data: v.to_vec(),
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Row-wise concatenation `[self | other]`.
    pub fn hcat(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: other.rows,
                context: "hcat rows",
            });
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(Matrix {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Stacks `other` below `self`.
    pub fn vcat(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.cols,
                context: "vcat cols",
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    /// Splits columns into `[.., at)` and `[at, ..)`.
    pub fn split_cols(&self, at: usize) -> (Matrix, Matrix) {
        let mut left = Matrix::zeros(self.rows, at);
        let mut right = Matrix::zeros(self.rows, self.cols - at);
        for i in 0..self.rows {
            let r = self.row(i);
            left.row_mut(i).copy_from_slice(&r[..at]);
            right.row_mut(i).copy_from_slice(&r[at..]);
        }
        (left, right)
    }

    pub fn slice_rows(&self, start: usize, end: usize) -> Matrix {
        Matrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// `tanh` via one `exp`, with a series near zero where `1 - e^{-2x}` cancels.
/// Within a few ulps of libm and several times faster.
#[inline]
pub fn tanh(x: f64) -> f64 {
    let a = x.abs();
    if a < 0.0625 {
        let x2 = x * x;
        return x * (1.0 + x2 * (-1.0 / 3.0 + x2 * (2.0 / 15.0 + x2 * (-17.0 / 315.0 + x2 * (62.0 / 2835.0)))));
    }
    if a > 20.0 {
        return 1.0f64.copysign(x);
    }
    let t = (-2.0 * a).exp();
    ((1.0 - t) / (1.0 + t)).copysign(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => tanh(x),
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `out_dim x in_dim`, row-major.
    pub weight: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

impl Linear {
    fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, bias: bool, rng: &mut R) -> Self {
        // Glorot uniform, zero bias.
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weight = (0..in_dim * out_dim)
            .map(|_| to_f32_exact(rng.random_range(-limit..limit)))
            .collect();
        Linear {
            in_dim,
            out_dim,
            weight,
            bias: bias.then(|| vec![0.0; out_dim]),
        }
    }
}

/// Cached layer inputs of one batched forward pass.
///
/// Consumed by [`Tape::backward`], so a tape cannot be replayed twice.
#[derive(Debug)]
pub struct Tape {
    inputs: Vec<Matrix>,
}

/// Per-tensor gradients in the same order as [`Mlp::tensors`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Gradients(mlp.tensors().iter().map(|t| vec![0.0; t.len()]).collect())
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.0.iter_mut().flatten().for_each(|x| *x *= s);
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.0.iter().flatten().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    /// `sizes` lists every layer width including input and output.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], bias: bool, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "mlp sizes must have at least two positive entries, got {sizes:?}"
            )));
        }
        let layers = sizes
            .windows(2)
            .map(|w| Linear::init(w[0], w[1], bias, rng))
            .collect();
        Ok(Mlp {
            layers,
            activation: Activation::Tanh,
        })
    }

    pub fn zeros(sizes: &[usize], bias: bool) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "mlp sizes must have at least two positive entries, got {sizes:?}"
            )));
        }
        let layers = sizes
            .windows(2)
            .map(|w| Linear {
                in_dim: w[0],
                out_dim: w[1],
                weight: vec![0.0; w[0] * w[1]],
                bias: bias.then(|| vec![0.0; w[1]]),
            })
            .collect();
        Ok(Mlp {
            layers,
            activation: Activation::Tanh,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &self.layers {
            out.push(l.weight.as_slice());
            if let Some(b) = &l.bias {
                out.push(b.as_slice());
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &mut self.layers {
            out.push(l.weight.as_mut_slice());
            if let Some(b) = &mut l.bias {
                out.push(b.as_mut_slice());
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    fn check_input(&self, input: &Matrix) -> Result<()> {
        if input.cols != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: input.cols,
                context: "mlp input",
            });
        }
        Ok(())
    }

    fn layer_forward(&self, idx: usize, x: &Matrix) -> Matrix {
        let layer = &self.layers[idx];
        let mut y = Matrix::zeros(x.rows, layer.out_dim);
        if x.rows > 0 {
            // y = x W^T
            unsafe {
                matrixmultiply::dgemm(
                    x.rows,
                    layer.in_dim,
                    layer.out_dim,
                    1.0,
                    x.data.as_ptr(),
                    layer.in_dim as isize,
                    1,
                    layer.weight.as_ptr(),
                    1,
                    layer.in_dim as isize,
                    0.0,
                    y.data.as_mut_ptr(),
                    layer.out_dim as isize,
                    1,
                );
            }
        }
        if let Some(b) = &layer.bias {
            for r in 0..y.rows {
                for (v, bb) in y.row_mut(r).iter_mut().zip(b) {
                    *v += bb;
                }
            }
        }
        if idx + 1 < self.layers.len() {
            for v in &mut y.data {
                *v = self.activation.apply(*v);
            }
        }
        y
    }

    /// Forward pass without recording a tape.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        self.check_input(input)?;
        let mut x = self.layer_forward(0, input);
        for i in 1..self.layers.len() {
            x = self.layer_forward(i, &x);
        }
        Ok(x)
    }

    pub fn predict_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.predict(&Matrix::row_vector(input))?.data)
    }

    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, Tape)> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for i in 0..self.layers.len() {
            let y = self.layer_forward(i, &x);
            inputs.push(x);
            x = y;
        }
        if !x.is_finite() {
            return Err(Error::non_finite("mlp output"));
        }
        Ok((x, Tape { inputs }))
    }

    /// Polyak averaging: `self <- keep * self + (1 - keep) * online`.
    pub fn soft_update_from(&mut self, online: &Mlp, keep: f64) {
        for (t, o) in self.tensors_mut().into_iter().zip(online.tensors()) {
            for (a, b) in t.iter_mut().zip(o) {
                *a = to_f32_exact(keep * *a + (1.0 - keep) * b);
            }
        }
    }
}

impl Tape {
    /// Returns parameter gradients and the gradient with respect to the input.
    pub fn backward(self, mlp: &Mlp, output_grad: &Matrix) -> Result<(Gradients, Matrix)> {
        if self.inputs.len() != mlp.layers.len() {
            return Err(Error::InvalidArgument(
                "tape was recorded by a different network".into(),
            ));
        }
        let batch = self.inputs[0].rows;
        if output_grad.rows != batch || output_grad.cols != mlp.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: mlp.output_dim(),
                got: output_grad.cols,
                context: "output gradient",
            });
        }
        let mut grads: Vec<Vec<f64>> = Vec::with_capacity(mlp.layers.len() * 2);
        let mut g = output_grad.clone();
        for (idx, layer) in mlp.layers.iter().enumerate().rev() {
            let x = &self.inputs[idx];
            let mut dw = vec![0.0; layer.out_dim * layer.in_dim];
            let mut gx = Matrix::zeros(batch, layer.in_dim);
            if batch > 0 {
                unsafe {
                    // dW = g^T x
                    matrixmultiply::dgemm(
                        layer.out_dim,
                        batch,
                        layer.in_dim,
                        1.0,
                        g.data.as_ptr(),
                        1,
                        layer.out_dim as isize,
                        x.data.as_ptr(),
                        layer.in_dim as isize,
                        1,
                        0.0,
                        dw.as_mut_ptr(),
                        layer.in_dim as isize,
                        1,
                    );
                    // gx = g W
                    matrixmultiply::dgemm(
                        batch,
                        layer.out_dim,
                        layer.in_dim,
                        1.0,
                        g.data.as_ptr(),
                        layer.out_dim as isize,
                        1,
                        layer.weight.as_ptr(),
                        layer.in_dim as isize,
                        1,
                        0.0,
                        gx.data.as_mut_ptr(),
                        layer.in_dim as isize,
                        1,
                    );
                }
            }
            if layer.bias.is_some() {
                let mut db = vec![0.0; layer.out_dim];
                for r in 0..batch {
                    for (d, v) in db.iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                }
                grads.push(db);
            }
            grads.push(dw);
            if idx > 0 {
                // x is the activation output of the previous layer.
                for (gv, xv) in gx.data.iter_mut().zip(&x.data) {
                    *gv *= mlp.activation.derivative_from_output(*xv);
                }
            }
            g = gx;
        }
        grads.reverse();
        let grads = Gradients(grads);
        if !grads.is_finite() {
            return Err(Error::non_finite("mlp gradients"));
        }
        Ok((grads, g))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new<T: AsRef<[f64]>>(config: AdamConfig, tensors: &[T]) -> Self {
        let zeros: Vec<Vec<f64>> = tensors.iter().map(|t| vec![0.0; t.as_ref().len()]).collect();
        AdamState {
            config,
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn for_mlp(config: AdamConfig, mlp: &Mlp) -> Self {
        Self::new(config, &mlp.tensors())
    }

    /// One Adam update over matching tensor lists.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &Gradients) -> Result<()> {
        if params.len() != grads.0.len() || params.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                expected: self.m.len(),
                got: grads.0.len(),
                context: "adam tensors",
            });
        }
        for (p, g) in params.iter().zip(&grads.0) {
            if p.len() != g.len() {
                return Err(Error::DimensionMismatch {
                    expected: p.len(),
                    got: g.len(),
                    context: "adam tensor shape",
                });
            }
        }
        if !grads.is_finite() {
            return Err(Error::non_finite("gradient passed to adam"));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(&grads.0)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = to_f32_exact(beta1 * m[i] + (1.0 - beta1) * g[i]);
                v[i] = to_f32_exact(beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]);
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] = to_f32_exact(p[i] - lr * mhat / (vhat.sqrt() + eps));
                if !p[i].is_finite() {
                    return Err(Error::non_finite("parameter after adam step"));
                }
            }
        }
        Ok(())
    }

    pub fn step_mlp(&mut self, mlp: &mut Mlp, grads: &Gradients) -> Result<()> {
        self.step(mlp.tensors_mut(), grads)
    }
}

// ---------------------------------------------------------------------------
// Checkpoint format: flat little-endian f32 tensors plus a JSON shape manifest.

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpManifest {
    pub activation: Activation,
    pub sizes: Vec<usize>,
    pub bias: bool,
    pub tensors: Vec<TensorEntry>,
}

impl Mlp {
    pub fn manifest(&self) -> MlpManifest {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.out_dim));
        let bias = self.layers[0].bias.is_some();
        let mut tensors = Vec::new();
        let mut offset = 0;
        for (i, l) in self.layers.iter().enumerate() {
            let len = l.in_dim * l.out_dim;
            tensors.push(TensorEntry {
                name: format!("layer{i}.weight"),
                shape: vec![l.out_dim, l.in_dim],
                offset,
                len,
            });
            offset += len;
            if l.bias.is_some() {
                tensors.push(TensorEntry {
                    name: format!("layer{i}.bias"),
                    shape: vec![l.out_dim],
                    offset,
                    len: l.out_dim,
                });
                offset += l.out_dim;
            }
        }
        MlpManifest {
            activation: self.activation,
            sizes,
            bias,
            tensors,
        }
    }

    pub fn from_flat(manifest: &MlpManifest, flat: &[f64]) -> Result<Self> {
        let mut mlp = Mlp::zeros(&manifest.sizes, manifest.bias)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        mlp.activation = manifest.activation;
        if flat.len() != mlp.num_params() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                mlp.num_params(),
                flat.len()
            )));
        }
        let mut it = flat.iter();
        for t in mlp.tensors_mut() {
            for x in t.iter_mut() {
                *x = *it.next().unwrap();
            }
        }
        Ok(mlp)
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors().into_iter().flatten().copied().collect()
    }
}

pub fn write_f32_le(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_f32_le(path: &Path) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Checkpoint(format!(
            "{} is not a whole number of f32 values",
            path.display()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Writes `<dir>/<name>.bin` and `<dir>/<name>.json`.
pub fn save_mlp(mlp: &Mlp, dir: &Path, name: &str) -> Result<Vec<std::path::PathBuf>> {
    let bin = dir.join(format!("{name}.bin"));
    let json = dir.join(format!("{name}.json"));
    write_f32_le(&bin, &mlp.flat())?;
    fs::write(&json, serde_json::to_string_pretty(&mlp.manifest())?)?;
    Ok(vec![bin, json])
}

pub fn load_mlp(dir: &Path, name: &str) -> Result<Mlp> {
    let manifest: MlpManifest =
        serde_json::from_str(&fs::read_to_string(dir.join(format!("{name}.json")))?)?;
    let flat = read_f32_le(&dir.join(format!("{name}.bin")))?;
    Mlp::from_flat(&manifest, &flat)
}
