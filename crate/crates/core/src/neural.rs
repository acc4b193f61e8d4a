//! Spectral neural-operator inference for the horizon map `D ↦ ψ`.
//!
//! The network is lift → `layers` spectral blocks → two-stage projection:
//!
//! ```text
//! v₀(x)   = R · [ (D(x) − μ_in)/σ_in , x ] + r
//! vₗ₊₁(x) = gelu( F⁻¹[ Wₗ(k) · F[vₗ](k) ]_{k < modes}(x) + Pₗ vₗ(x) + pₗ )
//! ψ̂(x)    = ( q₁ · gelu(Q₀ v_L(x) + q₀) + b₁ ) · σ_out + μ_out
//! ```
//!
//! with `x` the normalized grid coordinate in `[0, 1]`. Weights come from a
//! [`TensorContainer`] whose JSON metadata fixes the architecture.

use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::container::{ContainerError, Tensor, TensorContainer};
use crate::delay::Delay;
use crate::horizon::{HorizonSeries, Method};

/// Input channels: normalized delay values and the grid coordinate.
pub const IN_CHANNELS: usize = 2;
pub const INPUT_ENCODING: [&str; 2] = ["delay", "coord"];
pub const ACTIVATION: &str = "gelu";

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("metadata field `{field}`: {reason}")]
    BadMetadata { field: &'static str, reason: String },
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("tensor `{tensor}` has shape {found:?}, expected {expected}")]
    ShapeMismatch {
        tensor: String,
        expected: String,
        found: Vec<usize>,
    },
    #[error("tensor `{0}` holds a non-finite value")]
    NonFiniteWeight(String),
    #[error("tensor `{0}` has a non-positive standard deviation")]
    NonPositiveStd(String),
    #[error("expected {expected} input samples, got {found}")]
    LengthMismatch { expected: usize, found: usize },
}

/// Architecture fields recorded in the container metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub resolution: usize,
    pub modes: usize,
    pub channels: usize,
    pub layers: usize,
    /// Length of the uniform input grid `[0, H]`.
    #[serde(rename = "H")]
    pub horizon: f64,
    /// Step of the fine grid the training targets were computed on.
    pub dt: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            resolution: 1024,
            modes: 32,
            channels: 64,
            layers: 4,
            horizon: 12.0,
            dt: 1e-3,
        }
    }
}

impl Architecture {
    pub fn metadata(&self) -> serde_json::Value {
        json!({
            "kind": "fno1d",
            "resolution": self.resolution,
            "modes": self.modes,
            "channels": self.channels,
            "layers": self.layers,
            "in_channels": IN_CHANNELS,
            "input_encoding": INPUT_ENCODING,
            "coord": "linspace01",
            "activation": ACTIVATION,
            "H": self.horizon,
            "dt": self.dt,
        })
    }

    /// Uniform input grid `tⱼ = j·H/(n−1)`.
    pub fn grid(&self) -> Vec<f64> {
        let n = self.resolution;
        (0..n).map(|j| self.horizon * j as f64 / (n - 1) as f64).collect()
    }
}

/// Per-function normalization statistics: one scalar or one value per grid
/// point.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Normalizer {
    pub fn scalar(mean: f64, std: f64) -> Self {
        Self {
            mean: vec![mean],
            std: vec![std],
        }
    }

    fn at(v: &[f64], j: usize) -> f64 {
        if v.len() == 1 {
            v[0]
        } else {
            v[j]
        }
    }

    pub fn normalize(&self, j: usize, x: f64) -> f64 {
        (x - Self::at(&self.mean, j)) / Self::at(&self.std, j)
    }

    pub fn denormalize(&self, j: usize, z: f64) -> f64 {
        z * Self::at(&self.std, j) + Self::at(&self.mean, j)
    }
}

/// Row-major `rows × cols` matrix.
#[derive(Debug, Clone, PartialEq)]
struct Dense {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Dense {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// Trained operator weights, widened to `f64`.
#[derive(Clone)]
pub struct OperatorWeights {
    pub arch: Architecture,
    lift_w: Dense,
    lift_b: Vec<f64>,
    /// Per layer: `[in][out][mode]`.
    spectral: Vec<Vec<Complex64>>,
    pointwise_w: Vec<Dense>,
    pointwise_b: Vec<Vec<f64>>,
    proj0_w: Dense,
    proj0_b: Vec<f64>,
    proj1_w: Vec<f64>,
    proj1_b: f64,
    pub input_norm: Normalizer,
    pub output_norm: Normalizer,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for OperatorWeights {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OperatorWeights").field("arch", &self.arch).finish_non_exhaustive()
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

fn plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut planner = FftPlanner::new();
    (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
}

impl OperatorWeights {
    /// A network whose every weight is zero, with projection bias `bias`.
    /// Its output is the constant `bias · σ_out + μ_out`.
    pub fn zeros(arch: Architecture, bias: f64) -> Self {
        let c = arch.channels;
        let (fft, ifft) = plans(arch.resolution);
        Self {
            arch,
            lift_w: Dense::zeros(c, IN_CHANNELS),
            lift_b: vec![0.0; c],
            spectral: vec![vec![Complex64::new(0.0, 0.0); c * c * arch.modes]; arch.layers],
            pointwise_w: vec![Dense::zeros(c, c); arch.layers],
            pointwise_b: vec![vec![0.0; c]; arch.layers],
            proj0_w: Dense::zeros(c, c),
            proj0_b: vec![0.0; c],
            proj1_w: vec![0.0; c],
            proj1_b: bias,
            input_norm: Normalizer::scalar(0.0, 1.0),
            output_norm: Normalizer::scalar(0.0, 1.0),
            fft,
            ifft,
        }
    }

    /// Deterministic pseudo-random weights with roughly unit-gain layers.
    pub fn random(arch: Architecture, seed: u64) -> Self {
        let mut rng = crate::rng::SeededRng::new(seed);
        let mut w = Self::zeros(arch, 0.0);
        let c = arch.channels as f64;
        let mut fill = |v: &mut [f64], scale: f64| v.iter_mut().for_each(|x| *x = rng.uniform(-scale, scale));
        fill(&mut w.lift_w.data, 1.0);
        fill(&mut w.lift_b, 0.1);
        for l in 0..arch.layers {
            fill(&mut w.pointwise_w[l].data, 1.0 / c.sqrt());
            fill(&mut w.pointwise_b[l], 0.1);
        }
        fill(&mut w.proj0_w.data, 1.0 / c.sqrt());
        fill(&mut w.proj0_b, 0.1);
        fill(&mut w.proj1_w, 1.0 / c.sqrt());
        let mut spectral_rng = crate::rng::SeededRng::new(seed ^ 0x5eed);
        let scale = 1.0 / c;
        for layer in &mut w.spectral {
            for z in layer.iter_mut() {
                *z = Complex64::new(spectral_rng.uniform(-scale, scale), spectral_rng.uniform(-scale, scale));
            }
        }
        w
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NeuralError> {
        Self::from_container(&TensorContainer::load(path)?)
    }

    pub fn from_container(c: &TensorContainer) -> Result<Self, NeuralError> {
        let arch = parse_arch(&c.metadata)?;
        if arch.modes == 0 || arch.modes > arch.resolution / 2 + 1 {
            return Err(NeuralError::ShapeMismatch {
                tensor: "spectral.0.weight.c".into(),
                expected: format!("modes ≤ resolution/2 + 1 = {}", arch.resolution / 2 + 1),
                found: vec![arch.modes],
            });
        }
        let (n, ch, m) = (arch.resolution, arch.channels, arch.modes);
        let mut w = Self::zeros(arch, 0.0);
        w.lift_w.data = fetch(c, "lift.weight", &[ch, IN_CHANNELS])?;
        w.lift_b = fetch(c, "lift.bias", &[ch])?;
        for l in 0..arch.layers {
            let raw = fetch(c, &format!("spectral.{l}.weight.c"), &[ch, ch, m, 2])?;
            w.spectral[l] = raw.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
            w.pointwise_w[l].data = fetch(c, &format!("pointwise.{l}.weight"), &[ch, ch])?;
            w.pointwise_b[l] = fetch(c, &format!("pointwise.{l}.bias"), &[ch])?;
        }
        w.proj0_w.data = fetch(c, "project.0.weight", &[ch, ch])?;
        w.proj0_b = fetch(c, "project.0.bias", &[ch])?;
        w.proj1_w = fetch(c, "project.1.weight", &[1, ch])?;
        w.proj1_b = fetch(c, "project.1.bias", &[1])?[0];
        w.input_norm = Normalizer {
            mean: fetch_stat(c, "in_mean", n, false)?,
            std: fetch_stat(c, "in_std", n, true)?,
        };
        w.output_norm = Normalizer {
            mean: fetch_stat(c, "out_mean", n, false)?,
            std: fetch_stat(c, "out_std", n, true)?,
        };
        Ok(w)
    }

    /// Container with `f64` tensors under the names [`Self::from_container`] reads.
    pub fn to_container(&self) -> TensorContainer {
        let (ch, m) = (self.arch.channels, self.arch.modes);
        let mut c = TensorContainer::new(self.arch.metadata());
        let mut put = |name: String, dims: Vec<usize>, data: Vec<f64>| {
            c.push(Tensor::f64(name, dims, data).expect("consistent shapes")).expect("unique names");
        };
        put("lift.weight".into(), vec![ch, IN_CHANNELS], self.lift_w.data.clone());
        put("lift.bias".into(), vec![ch], self.lift_b.clone());
        for l in 0..self.arch.layers {
            let raw = self.spectral[l].iter().flat_map(|z| [z.re, z.im]).collect();
            put(format!("spectral.{l}.weight.c"), vec![ch, ch, m, 2], raw);
            put(format!("pointwise.{l}.weight"), vec![ch, ch], self.pointwise_w[l].data.clone());
            put(format!("pointwise.{l}.bias"), vec![ch], self.pointwise_b[l].clone());
        }
        put("project.0.weight".into(), vec![ch, ch], self.proj0_w.data.clone());
        put("project.0.bias".into(), vec![ch], self.proj0_b.clone());
        put("project.1.weight".into(), vec![1, ch], self.proj1_w.clone());
        put("project.1.bias".into(), vec![1], vec![self.proj1_b]);
        for (name, v) in [
            ("in_mean", &self.input_norm.mean),
            ("in_std", &self.input_norm.std),
            ("out_mean", &self.output_norm.mean),
            ("out_std", &self.output_norm.std),
        ] {
            put(name.into(), vec![v.len()], v.clone());
        }
        c
    }

    /// Spectral convolution of layer `layer` on a channel-major hidden state
    /// (`channels × resolution`). Linear in `v`; frequencies at or above
    /// `modes` do not reach the output.
    pub fn spectral_conv(&self, layer: usize, v: &[f64]) -> Vec<f64> {
        let (n, ch, m) = (self.arch.resolution, self.arch.channels, self.arch.modes);
        let weights = &self.spectral[layer];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len().max(self.ifft.get_inplace_scratch_len())];

        let mut modes_in = vec![Complex64::new(0.0, 0.0); ch * m];
        for i in 0..ch {
            for (b, &x) in buf.iter_mut().zip(&v[i * n..(i + 1) * n]) {
                *b = Complex64::new(x, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            modes_in[i * m..(i + 1) * m].copy_from_slice(&buf[..m]);
        }

        let mut out = vec![0.0; ch * n];
        let inv_n = 1.0 / n as f64;
        for o in 0..ch {
            buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            for k in 0..m {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..ch {
                    acc += modes_in[i * m + k] * weights[(i * ch + o) * m + k];
                }
                buf[k] = acc;
            }
            // Hermitian completion of the half spectrum
            buf[0].im = 0.0;
            if n % 2 == 0 && m > n / 2 {
                buf[n / 2].im = 0.0;
            }
            for k in 1..m {
                if n - k != k {
                    buf[n - k] = buf[k].conj();
                }
            }
            self.ifft.process_with_scratch(&mut buf, &mut scratch);
            for (y, z) in out[o * n..(o + 1) * n].iter_mut().zip(&buf) {
                *y = z.re * inv_n;
            }
        }
        out
    }

    fn dense_pointwise(w: &Dense, b: &[f64], v: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; w.rows * n];
        for o in 0..w.rows {
            let row = &mut out[o * n..(o + 1) * n];
            row.iter_mut().for_each(|y| *y = b[o]);
            for i in 0..w.cols {
                let wi = w.at(o, i);
                if wi != 0.0 {
                    for (y, &x) in row.iter_mut().zip(&v[i * n..(i + 1) * n]) {
                        *y += wi * x;
                    }
                }
            }
        }
        out
    }

    /// Forward pass on `resolution` delay samples over the uniform grid.
    pub fn forward(&self, d_values: &[f64]) -> Result<Vec<f64>, NeuralError> {
        let n = self.arch.resolution;
        if d_values.len() != n {
            return Err(NeuralError::LengthMismatch {
                expected: n,
                found: d_values.len(),
            });
        }
        let inv = 1.0 / (n - 1) as f64;
        let mut input = vec![0.0; IN_CHANNELS * n];
        for (j, &d) in d_values.iter().enumerate() {
            input[j] = self.input_norm.normalize(j, d);
            input[n + j] = j as f64 * inv;
        }
        let mut v = Self::dense_pointwise(&self.lift_w, &self.lift_b, &input, n);
        for l in 0..self.arch.layers {
            let spec = self.spectral_conv(l, &v);
            let point = Self::dense_pointwise(&self.pointwise_w[l], &self.pointwise_b[l], &v, n);
            v = spec.iter().zip(&point).map(|(a, b)| gelu(a + b)).collect();
        }
        let hidden: Vec<f64> = Self::dense_pointwise(&self.proj0_w, &self.proj0_b, &v, n)
            .into_iter()
            .map(gelu)
            .collect();
        let out = (0..n)
            .map(|j| {
                let z = self.proj1_b
                    + (0..self.arch.channels)
                        .map(|c| self.proj1_w[c] * hidden[c * n + j])
                        .sum::<f64>();
                self.output_norm.denormalize(j, z)
            })
            .collect();
        Ok(out)
    }

    /// Sample `delay` on the operator grid and run one forward pass.
    pub fn horizon<D: Delay + ?Sized>(&self, delay: &D) -> Result<HorizonSeries, NeuralError> {
        let grid = self.arch.grid();
        let d: Vec<f64> = grid.iter().map(|&t| delay.value(t)).collect();
        let values = self.forward(&d)?;
        Ok(HorizonSeries {
            step: self.arch.horizon / (self.arch.resolution - 1) as f64,
            grid,
            values,
            method: Method::Neural,
        })
    }
}

/// `fno_forward` entry point.
pub fn fno_forward(weights: &OperatorWeights, d_values: &[f64]) -> Result<Vec<f64>, NeuralError> {
    weights.forward(d_values)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<OperatorWeights, NeuralError> {
    OperatorWeights::load(path)
}

fn parse_arch(meta: &serde_json::Value) -> Result<Architecture, NeuralError> {
    fn field<'a>(meta: &'a serde_json::Value, name: &'static str) -> Result<&'a serde_json::Value, NeuralError> {
        meta.get(name).ok_or(NeuralError::BadMetadata {
            field: name,
            reason: "missing".into(),
        })
    }
    let count = |name: &'static str| -> Result<usize, NeuralError> {
        field(meta, name)?
            .as_u64()
            .filter(|&v| v > 0)
            .map(|v| v as usize)
            .ok_or(NeuralError::BadMetadata {
                field: name,
                reason: "expected a positive integer".into(),
            })
    };
    let real = |name: &'static str| -> Result<f64, NeuralError> {
        field(meta, name)?.as_f64().filter(|v| *v > 0.0).ok_or(NeuralError::BadMetadata {
            field: name,
            reason: "expected a positive number".into(),
        })
    };
    if count("in_channels")? != IN_CHANNELS {
        return Err(NeuralError::BadMetadata {
            field: "in_channels",
            reason: format!("expected {IN_CHANNELS}"),
        });
    }
    if let Some(enc) = meta.get("input_encoding") {
        if enc != &json!(INPUT_ENCODING) {
            return Err(NeuralError::BadMetadata {
                field: "input_encoding",
                reason: format!("expected {:?}, got {enc}", INPUT_ENCODING),
            });
        }
    }
    if let Some(act) = meta.get("activation") {
        if act != ACTIVATION {
            return Err(NeuralError::BadMetadata {
                field: "activation",
                reason: format!("only `{ACTIVATION}` is supported, got {act}"),
            });
        }
    }
    let resolution = count("resolution")?;
    if resolution < 2 {
        return Err(NeuralError::BadMetadata {
            field: "resolution",
            reason: "need at least two grid points".into(),
        });
    }
    Ok(Architecture {
        resolution,
        modes: count("modes")?,
        channels: count("channels")?,
        layers: count("layers")?,
        horizon: real("H")?,
        dt: real("dt")?,
    })
}

fn fetch(c: &TensorContainer, name: &str, dims: &[usize]) -> Result<Vec<f64>, NeuralError> {
    let t = c.get(name).ok_or_else(|| NeuralError::MissingTensor(name.into()))?;
    if t.dims != dims {
        return Err(NeuralError::ShapeMismatch {
            tensor: name.into(),
            expected: format!("{dims:?}"),
            found: t.dims.clone(),
        });
    }
    let v = t.data.to_f64();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(NeuralError::NonFiniteWeight(name.into()));
    }
    Ok(v)
}

fn fetch_stat(c: &TensorContainer, name: &str, n: usize, positive: bool) -> Result<Vec<f64>, NeuralError> {
    let t = c.get(name).ok_or_else(|| NeuralError::MissingTensor(name.into()))?;
    let len: usize = t.dims.iter().product();
    if !(len == 1 || (len == n && t.dims.len() == 1)) {
        return Err(NeuralError::ShapeMismatch {
            tensor: name.into(),
            expected: format!("[1] or [{n}]"),
            found: t.dims.clone(),
        });
    }
    let v = fetch(c, name, &t.dims.clone())?;
    if positive && v.iter().any(|&s| s <= 0.0) {
        return Err(NeuralError::NonPositiveStd(name.into()));
    }
    Ok(v)
}

/// Pointwise residual of the defining relation `φ(ψ̂(t) + t) − t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub grid: Vec<f64>,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub mean_residual: f64,
}

pub fn consistency_error<D: Delay + ?Sized>(delay: &D, series: &HorizonSeries) -> ConsistencyReport {
    let residuals = series.residuals(delay);
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    let mean_residual = if residuals.is_empty() {
        0.0
    } else {
        residuals.iter().sum::<f64>() / residuals.len() as f64
    };
    ConsistencyReport {
        grid: series.grid.clone(),
        residuals,
        max_residual,
        mean_residual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::DelayParams;
    use crate::horizon::oracle_psi;
    use proptest::prelude::*;

    fn small_arch() -> Architecture {
        Architecture {
            resolution: 64,
            modes: 8,
            channels: 6,
            layers: 2,
            horizon: 12.0,
            dt: 1e-3,
        }
    }

    #[test]
    fn zero_network_is_constant() {
        let mut w = OperatorWeights::zeros(small_arch(), 0.75);
        let d: Vec<f64> = (0..64).map(|j| 0.3 + 0.01 * j as f64).collect();
        assert!(w.forward(&d).unwrap().iter().all(|&y| y == 0.75));
        w.output_norm = Normalizer::scalar(2.0, 0.5);
        assert!(w.forward(&d).unwrap().iter().all(|&y| y == 0.75 * 0.5 + 2.0));
    }

    #[test]
    fn length_mismatch() {
        let w = OperatorWeights::zeros(small_arch(), 0.0);
        assert!(matches!(
            w.forward(&[0.0; 63]),
            Err(NeuralError::LengthMismatch { expected: 64, found: 63 })
        ));
    }

    #[test]
    fn container_round_trip_preserves_output() {
        let w = OperatorWeights::random(small_arch(), 11);
        let c = w.to_container();
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        let back = OperatorWeights::from_container(&TensorContainer::read_from(&buf[..]).unwrap()).unwrap();
        let d: Vec<f64> = (0..64).map(|j| (j as f64 * 0.2).sin() + 1.0).collect();
        assert_eq!(w.forward(&d).unwrap(), back.forward(&d).unwrap());
        assert_eq!(back.to_container(), c);
    }

    #[test]
    fn f32_weights_load() {
        let w = OperatorWeights::random(small_arch(), 5);
        let mut c = TensorContainer::new(w.arch.metadata());
        for t in w.to_container().tensors() {
            let v: Vec<f32> = t.data.to_f64().iter().map(|&x| x as f32).collect();
            c.push(Tensor::f32(t.name.clone(), t.dims.clone(), v).unwrap()).unwrap();
        }
        let back = OperatorWeights::from_container(&c).unwrap();
        let d = vec![0.5; 64];
        let (a, b) = (w.forward(&d).unwrap(), back.forward(&d).unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-4 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn modes_beyond_nyquist_rejected() {
        let mut arch = small_arch();
        let mut c = OperatorWeights::zeros(arch, 0.0).to_container();
        arch.modes = arch.resolution;
        c.metadata = arch.metadata();
        assert!(matches!(
            OperatorWeights::from_container(&c),
            Err(NeuralError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn validation_errors_name_the_tensor() {
        let w = OperatorWeights::random(small_arch(), 1);
        let mut c = w.to_container();
        c.get_mut("pointwise.1.bias").unwrap().data = crate::container::TensorData::F64(vec![f64::NAN; 6]);
        match OperatorWeights::from_container(&c) {
            Err(NeuralError::NonFiniteWeight(name)) => assert_eq!(name, "pointwise.1.bias"),
            other => panic!("{other:?}"),
        }

        let mut c = w.to_container();
        let t = c.get_mut("lift.weight").unwrap();
        t.dims = vec![2, 6];
        match OperatorWeights::from_container(&c) {
            Err(NeuralError::ShapeMismatch { tensor, .. }) => assert_eq!(tensor, "lift.weight"),
            other => panic!("{other:?}"),
        }

        let mut c = w.to_container();
        c.get_mut("out_std").unwrap().data = crate::container::TensorData::F64(vec![0.0]);
        assert!(matches!(OperatorWeights::from_container(&c), Err(NeuralError::NonPositiveStd(_))));

        let mut c = w.to_container();
        c.metadata["in_channels"] = json!(3);
        assert!(matches!(
            OperatorWeights::from_container(&c),
            Err(NeuralError::BadMetadata { field: "in_channels", .. })
        ));
    }

    #[test]
    fn forward_is_deterministic() {
        let w = OperatorWeights::random(small_arch(), 2);
        let d: Vec<f64> = (0..64).map(|j| 1.0 + 0.1 * (j as f64).cos()).collect();
        let a = w.forward(&d).unwrap();
        let b = w.forward(&d).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.iter().all(|x| x.is_finite()));
    }

    fn naive_rdft_conv(w: &OperatorWeights, layer: usize, v: &[f64]) -> Vec<f64> {
        // direct O(n²) evaluation of the truncated spectral convolution
        let (n, ch, m) = (w.arch.resolution, w.arch.channels, w.arch.modes);
        let tau = 2.0 * std::f64::consts::PI;
        let mut out = vec![0.0; ch * n];
        for o in 0..ch {
            for k in 0..m {
                let mut y = Complex64::new(0.0, 0.0);
                for i in 0..ch {
                    let mut x = Complex64::new(0.0, 0.0);
                    for j in 0..n {
                        x += Complex64::from_polar(v[i * n + j], -tau * (j * k) as f64 / n as f64);
                    }
                    y += x * w.spectral[layer][(i * ch + o) * m + k];
                }
                let nyquist = n % 2 == 0 && k == n / 2;
                let weight = if k == 0 || nyquist { 1.0 } else { 2.0 };
                for j in 0..n {
                    let phase = tau * (j * k) as f64 / n as f64;
                    let re = if k == 0 || nyquist { y.re * phase.cos() } else { (y * Complex64::from_polar(1.0, phase)).re };
                    out[o * n + j] += weight * re / n as f64;
                }
            }
        }
        out
    }

    #[test]
    fn spectral_conv_matches_direct_transform() {
        let w = OperatorWeights::random(small_arch(), 3);
        let v: Vec<f64> = (0..6 * 64).map(|j| ((j * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let fast = w.spectral_conv(1, &v);
        let slow = naive_rdft_conv(&w, 1, &v);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn nyquist_mode_handled() {
        let arch = Architecture {
            resolution: 16,
            modes: 9,
            channels: 2,
            layers: 1,
            horizon: 1.0,
            dt: 1e-3,
        };
        let w = OperatorWeights::random(arch, 4);
        let v: Vec<f64> = (0..32).map(|j| (j as f64 * 1.3).sin()).collect();
        let fast = w.spectral_conv(0, &v);
        let slow = naive_rdft_conv(&w, 0, &v);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn oracle_series_is_consistent() {
        let p = DelayParams::new(0.4, 0.31, -0.10, 4.95, 0.95);
        let grid: Vec<f64> = (0..=1200).map(|j| j as f64 * 0.01).collect();
        let s = oracle_psi(&p, &grid).unwrap();
        let r = consistency_error(&p, &s);
        assert!(r.max_residual <= 1e-12);
        assert!(r.residuals.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn offset_residual_bracketed_by_slope_bounds() {
        let p = DelayParams::new(0.4, 0.31, -0.10, 4.95, 0.95);
        let rep = crate::delay::check_assumptions(&p, 14.0, 1e-3);
        let grid: Vec<f64> = (0..=1200).map(|j| j as f64 * 0.01).collect();
        let eps = 1e-3;
        let s = oracle_psi(&p, &grid).unwrap().offset(eps);
        let r = consistency_error(&p, &s);
        let upper = eps / rep.pi3_star;
        for &x in &r.residuals {
            assert!(x >= rep.pi2_star * eps - 1e-11 && x <= upper + 1e-11, "{x}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn spectral_conv_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let w = OperatorWeights::random(small_arch(), seed);
            let mut rng = crate::rng::SeededRng::new(seed.wrapping_add(1));
            let u: Vec<f64> = (0..6 * 64).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let v: Vec<f64> = (0..6 * 64).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            let lhs = w.spectral_conv(0, &mix);
            let (cu, cv) = (w.spectral_conv(0, &u), w.spectral_conv(0, &v));
            let scale = lhs.iter().fold(1e-300f64, |m, x| m.max(x.abs()));
            for j in 0..lhs.len() {
                prop_assert!((lhs[j] - (a * cu[j] + b * cv[j])).abs() <= 1e-10 * scale.max(1.0));
            }
        }

        #[test]
        fn high_frequencies_do_not_pass(seed in any::<u64>(), k in 8usize..33, amp in 0.1f64..5.0) {
            let w = OperatorWeights::random(small_arch(), seed);
            let mut rng = crate::rng::SeededRng::new(seed ^ 77);
            let v: Vec<f64> = (0..6 * 64).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let mut pert = v.clone();
            for c in 0..6 {
                for j in 0..64 {
                    pert[c * 64 + j] += amp * (2.0 * std::f64::consts::PI * (k * j) as f64 / 64.0 + c as f64).cos();
                }
            }
            let (a, b) = (w.spectral_conv(0, &v), w.spectral_conv(0, &pert));
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + amp));
            }
        }

        #[test]
        fn normalization_inverts(mean in -10.0f64..10.0, std in 1e-3f64..10.0, x in -100.0f64..100.0) {
            let n = Normalizer::scalar(mean, std);
            let back = n.denormalize(0, n.normalize(0, x));
            prop_assert!((back - x).abs() <= 4.0 * f64::EPSILON * (x.abs() + mean.abs() + 1.0));
        }
    }
}
