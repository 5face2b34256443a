//! Piecewise-linear feedforward networks: evaluation, input gradients and
//! the on-disk JSON format.
//!
//! A network is a chain of affine layers `x ↦ W x + b`. Every hidden layer is
//! followed by a ReLU; the last layer is affine only.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_dim, Error, Result};

pub const NETWORK_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            check_dim(format!("matrix row {i}"), cols, row.len())?;
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    fn values(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    weights: Matrix,
    bias: Vec<f64>,
    activation: Activation,
}

impl Layer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        check_dim("layer bias", weights.rows(), bias.len())?;
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    /// `W x + b`.
    pub fn affine(&self, x: &[f64]) -> Vec<f64> {
        (0..self.output_dim())
            .map(|k| {
                self.weights
                    .row(k)
                    .iter()
                    .zip(x)
                    .fold(self.bias[k], |acc, (w, v)| acc + w * v)
            })
            .collect()
    }
}

/// Immutable validated network. Safe to share between threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::InvalidNetwork("network has no layers".into()));
        };
        if last.activation != Activation::Linear {
            return Err(Error::InvalidNetwork("last layer must be linear".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            if l + 1 < layers.len() && layer.activation != Activation::Relu {
                return Err(Error::InvalidNetwork(format!(
                    "hidden layer {l} must use relu activation"
                )));
            }
            if layer.input_dim() == 0 || layer.output_dim() == 0 {
                return Err(Error::InvalidNetwork(format!("layer {l} is empty")));
            }
            if l > 0 {
                let prev = layers[l - 1].output_dim();
                if layer.input_dim() != prev {
                    return Err(Error::InvalidNetwork(format!(
                        "layer {l} expects {} inputs but layer {} produces {prev}",
                        layer.input_dim(),
                        l - 1
                    )));
                }
            }
            let finite = layer.weights.values().iter().chain(&layer.bias).all(|v| v.is_finite());
            if !finite {
                return Err(Error::InvalidNetwork(format!("layer {l} has a non-finite parameter")));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// Widths of the hidden (ReLU) layers.
    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(Layer::output_dim)
            .collect()
    }

    fn check_input(&self, x0: &[f64]) -> Result<()> {
        check_dim("network input", self.input_dim(), x0.len())?;
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("network input is not finite".into()));
        }
        Ok(())
    }

    /// Preactivations `W^l x^{l-1} + b^l` and post-activations `x^l` for
    /// every layer `l = 1..=L`.
    pub fn trace(&self, x0: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        self.check_input(x0)?;
        let mut pre = Vec::with_capacity(self.depth());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.depth());
        for layer in &self.layers {
            let input = post.last().map_or(x0, Vec::as_slice);
            let a = layer.affine(input);
            let x = match layer.activation {
                Activation::Relu => a.iter().map(|v| v.max(0.0)).collect(),
                Activation::Linear => a.clone(),
            };
            pre.push(a);
            post.push(x);
        }
        Ok((pre, post))
    }

    /// Post-activation vectors `x^1 .. x^L`.
    pub fn forward(&self, x0: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(self.trace(x0)?.1)
    }

    /// Network output `x^L`.
    pub fn output(&self, x0: &[f64]) -> Result<Vec<f64>> {
        let mut values = self.forward(x0)?;
        Ok(values.pop().expect("network has at least one layer"))
    }

    /// `‖F(x0) − t‖₁`.
    pub fn l1_loss(&self, x0: &[f64], target: &[f64]) -> Result<f64> {
        check_dim("target", self.output_dim(), target.len())?;
        let out = self.output(x0)?;
        Ok(l1_distance(&out, target))
    }

    /// Subgradient of `‖F(x0) − t‖₁` with respect to `x0`.
    ///
    /// Uses `sign(0) = 0` for the residual and treats a ReLU whose
    /// preactivation is not strictly positive as inactive.
    pub fn gradient(&self, x0: &[f64], target: &[f64]) -> Result<Vec<f64>> {
        check_dim("target", self.output_dim(), target.len())?;
        let (pre, post) = self.trace(x0)?;
        let out = &post[post.len() - 1];
        let mut delta: Vec<f64> = out.iter().zip(target).map(|(y, t)| sign(y - t)).collect();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation == Activation::Relu {
                for (d, a) in delta.iter_mut().zip(&pre[l]) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let mut next = vec![0.0; layer.input_dim()];
            for (k, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                for (g, w) in next.iter_mut().zip(layer.weights.row(k)) {
                    *g += d * w;
                }
            }
            delta = next;
        }
        Ok(delta)
    }

    /// SHA-256 over the exact bit patterns of every parameter.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for layer in &self.layers {
            hasher.update((layer.output_dim() as u64).to_le_bytes());
            hasher.update((layer.input_dim() as u64).to_le_bytes());
            hasher.update([layer.activation as u8]);
            for v in layer.weights.values().iter().chain(&layer.bias) {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }

    pub fn to_json(&self) -> String {
        let file = NetworkFile {
            format_version: NETWORK_FORMAT_VERSION,
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    weights: l.weights.to_rows(),
                    bias: l.bias.clone(),
                    activation: l.activation,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        if file.format_version != NETWORK_FORMAT_VERSION {
            return Err(Error::Parse {
                location: "format_version".into(),
                message: format!("unsupported format version {}", file.format_version),
            });
        }
        let mut layers = Vec::with_capacity(file.layers.len());
        for (l, lf) in file.layers.into_iter().enumerate() {
            let parse_err = |message: String| Error::Parse {
                location: format!("layers[{l}]"),
                message,
            };
            let weights = Matrix::from_rows(&lf.weights).map_err(|e| parse_err(e.to_string()))?;
            if weights.rows() != lf.bias.len() {
                return Err(parse_err(format!(
                    "bias length {} does not match {} weight rows",
                    lf.bias.len(),
                    weights.rows()
                )));
            }
            layers.push(Layer::new(weights, lf.bias, lf.activation).map_err(|e| parse_err(e.to_string()))?);
        }
        Network::new(layers).map_err(|e| Error::Parse {
            location: "layers".into(),
            message: e.to_string(),
        })
    }
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    Network::from_json(&text).map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

pub fn save_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, net.to_json())?;
    Ok(())
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    format_version: u32,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    activation: Activation,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{random_network, rng, uniform_vec};

    fn layer(w: Vec<Vec<f64>>, b: Vec<f64>, act: Activation) -> Layer {
        Layer::new(Matrix::from_rows(&w).unwrap(), b, act).unwrap()
    }

    /// Straight-line evaluation with explicit loops and no shared helpers.
    fn oracle_forward(net: &Network, x0: &[f64]) -> Vec<f64> {
        let mut x = x0.to_vec();
        for layer in net.layers() {
            let w = layer.weights();
            let mut y = vec![0.0; w.rows()];
            for i in 0..w.rows() {
                let mut acc = 0.0;
                for j in 0..w.cols() {
                    acc += w.get(i, j) * x[j];
                }
                acc += layer.bias()[i];
                y[i] = if layer.activation() == Activation::Relu && acc < 0.0 {
                    0.0
                } else {
                    acc
                };
            }
            x = y;
        }
        x
    }

    #[test]
    fn identity_map() {
        let net = Network::new(vec![layer(vec![vec![1.0]], vec![0.0], Activation::Linear)]).unwrap();
        assert_eq!(net.output(&[0.5]).unwrap(), vec![0.5]);
    }

    #[test]
    fn relu_clamps_negative_preactivation() {
        let net = Network::new(vec![
            layer(vec![vec![-1.0]], vec![0.0], Activation::Relu),
            layer(vec![vec![1.0]], vec![0.0], Activation::Linear),
        ])
        .unwrap();
        assert_eq!(net.output(&[0.5]).unwrap(), vec![0.0]);
    }

    #[test]
    fn seeded_two_three_two_matches_oracle() {
        let net = random_network(2, &[3], 2, 7);
        let x0 = [0.3, 0.7];
        let got = net.output(&x0).unwrap();
        let want = oracle_forward(&net, &x0);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12);
        }
    }

    #[test]
    fn forward_matches_oracle_on_many_nets() {
        for seed in 0..30 {
            let net = random_network(3, &[5, 4], 2, seed);
            for k in 0..20 {
                let x0 = [k as f64 * 0.05 - 0.5, 0.2, -0.3 + k as f64 * 0.01];
                let got = net.output(&x0).unwrap();
                let want = oracle_forward(&net, &x0);
                for (g, w) in got.iter().zip(&want) {
                    assert!((g - w).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn gradient_of_linear_layer() {
        let net = Network::new(vec![layer(vec![vec![2.0]], vec![0.0], Activation::Linear)]).unwrap();
        assert_eq!(net.gradient(&[1.0], &[0.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn gradient_vanishes_on_exact_match() {
        let net = random_network(2, &[3], 2, 11);
        let x0 = [0.1, -0.4];
        let t = net.output(&x0).unwrap();
        assert!(net.gradient(&x0, &t).unwrap().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn dimension_errors() {
        let net = random_network(2, &[3], 2, 1);
        assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension { .. })));
        assert!(matches!(net.gradient(&[1.0, 2.0], &[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn relu_on_last_layer_rejected() {
        let err = Network::new(vec![layer(vec![vec![1.0]], vec![0.0], Activation::Relu)]).unwrap_err();
        assert!(err.to_string().contains("last layer must be linear"));
    }

    #[test]
    fn file_with_bad_bias_names_layer() {
        let text = r#"{"format_version":1,"layers":[
            {"weights":[[1.0,2.0]],"bias":[0.0],"activation":"relu"},
            {"weights":[[1.0]],"bias":[0.0,1.0],"activation":"linear"}]}"#;
        let err = Network::from_json(text).unwrap_err().to_string();
        assert!(err.contains("layers[1]"), "{err}");
    }

    #[test]
    fn file_with_relu_last_layer_rejected() {
        let text = r#"{"format_version":1,"layers":[
            {"weights":[[1.0]],"bias":[0.0],"activation":"relu"}]}"#;
        let err = Network::from_json(text).unwrap_err().to_string();
        assert!(err.contains("last layer must be linear"), "{err}");
    }

    #[test]
    fn file_with_nonfinite_weight_rejected() {
        // JSON has no literal for NaN; overflow to infinity is the only way in.
        let text = r#"{"format_version":1,"layers":[
            {"weights":[[1e999]],"bias":[0.0],"activation":"linear"}]}"#;
        assert!(Network::from_json(text).is_err());
    }

    #[test]
    fn malformed_file_reports_location() {
        let err = Network::from_json("{\"format_version\":1,\n\"layers\": [").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let net = random_network(2, &[3], 2, 7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        save_network(&net, &path).unwrap();
        let back = load_network(&path).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.digest(), net.digest());
        let mut rng = crate::synth::rng(3);
        for _ in 0..100 {
            let x = crate::synth::uniform_vec(&mut rng, &[-2.0, -2.0], &[2.0, 2.0]);
            let a = net.output(&x).unwrap();
            let b = back.output(&x).unwrap();
            assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = 1e-5;
        let mut checked = 0;
        for seed in 0..50 {
            let net = random_network(2, &[3], 1, seed);
            let mut r = rng(seed + 1000);
            let t = [0.1];
            // Find a point away from every kink, including the L1 residual.
            let x = (0..100).map(|_| uniform_vec(&mut r, &[-1.0; 2], &[1.0; 2])).find(|x| {
                let (pre, post) = net.trace(x).unwrap();
                pre[0].iter().all(|a| a.abs() > 1e-3) && (post[1][0] - t[0]).abs() > 1e-3
            });
            let Some(x) = x else { continue };
            let g = net.gradient(&x, &t).unwrap();
            for i in 0..2 {
                let (mut up, mut down) = (x.clone(), x.clone());
                up[i] += h;
                down[i] -= h;
                let fd = (net.l1_loss(&up, &t).unwrap() - net.l1_loss(&down, &t).unwrap()) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-4, "seed {seed}: {fd} vs {}", g[i]);
            }
            checked += 1;
        }
        assert!(checked >= 45);
    }

    fn lipschitz(net: &Network) -> f64 {
        net.layers()
            .iter()
            .map(|l| (0..l.output_dim()).map(|k| l.weights().row(k).iter().map(|w| w.abs()).sum::<f64>()).fold(0.0, f64::max))
            .product()
    }

    proptest::proptest! {
        #[test]
        fn forward_is_continuous_along_segments(seed in 0u64..1000, x in proptest::collection::vec(-1.0f64..1.0, 3), d in proptest::collection::vec(-1.0f64..1.0, 3)) {
            let net = random_network(3, &[6, 5], 2, seed);
            // Max-row-sum norms bound the change in the infinity norm.
            let bound = lipschitz(&net) * d.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let step = 1.0 / 1000.0;
            let at = |a: f64| net.output(&x.iter().zip(&d).map(|(x, d)| x + a * d).collect::<Vec<_>>()).unwrap();
            let mut prev = at(0.0);
            for n in 1..=1000 {
                let cur = at(n as f64 * step);
                let jump = prev.iter().zip(&cur).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                proptest::prop_assert!(jump <= bound * step * (1.0 + 1e-9) + 1e-12);
                prev = cur;
            }
        }
    }
}
