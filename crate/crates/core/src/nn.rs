//! Multilayer perceptrons, their layer-by-layer interval extension and the
//! Lipschitz width bound of that extension.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::round::{add_down, add_up, mul_down, mul_up};
use crate::interval::{Interval, IntervalBox, ScalarFn};

/// Monotone non-decreasing activation functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Logistic,
    Relu,
    Identity,
}

impl Activation {
    pub fn parse(tag: &str) -> Result<Self> {
        match tag {
            "tanh" => Ok(Activation::Tanh),
            "logistic" | "sigmoid" => Ok(Activation::Logistic),
            "relu" => Ok(Activation::Relu),
            "identity" | "linear" | "purelin" => Ok(Activation::Identity),
            other => Err(Error::Validation(format!(
                "unsupported activation `{other}` (expected tanh, logistic, relu or identity)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Logistic => "logistic",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    /// Supremum of the derivative.
    pub fn lipschitz(self) -> f64 {
        match self {
            Activation::Logistic => 0.25,
            Activation::Tanh | Activation::Relu | Activation::Identity => 1.0,
        }
    }

    fn scalar(self) -> ScalarFn {
        match self {
            Activation::Tanh => ScalarFn::Tanh,
            Activation::Logistic => ScalarFn::Logistic,
            Activation::Relu => ScalarFn::Relu,
            Activation::Identity => ScalarFn::Identity,
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        self.scalar().eval(x)
    }
}

/// One affine map followed by an elementwise activation. Weights are stored
/// row-major, one row per output neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    weights: Vec<f64>,
    bias: Vec<f64>,
    n_in: usize,
    activation: Activation,
}

impl Layer {
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        let n_out = weights.len();
        if n_out == 0 {
            return Err(Error::Validation("layer has no rows".into()));
        }
        let n_in = weights[0].len();
        if n_in == 0 {
            return Err(Error::Validation("layer has no columns".into()));
        }
        if let Some((i, row)) = weights.iter().enumerate().find(|(_, r)| r.len() != n_in) {
            return Err(Error::Validation(format!(
                "row {i} has {} columns, expected {n_in}",
                row.len()
            )));
        }
        if bias.len() != n_out {
            return Err(Error::Validation(format!(
                "bias length {} does not match {n_out} weight rows",
                bias.len()
            )));
        }
        let flat: Vec<f64> = weights.into_iter().flatten().collect();
        if flat.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite weight or bias".into()));
        }
        Ok(Self {
            weights: flat,
            bias,
            n_in,
            activation,
        })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.bias.len()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n_in..(i + 1) * self.n_in]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.weights.chunks_exact(self.n_in)
    }

    /// Induced max-norm: the largest absolute row sum.
    pub fn max_row_sum(&self) -> f64 {
        self.rows()
            .map(|r| r.iter().fold(0.0, |acc, w| add_up(acc, w.abs())))
            .fold(0.0, f64::max)
    }

    fn eval_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, &b) in self.rows().zip(&self.bias) {
            let mut acc = 0.0;
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            acc += b;
            out.push(self.activation.apply(acc));
        }
    }

    /// Point evaluation.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_in {
            return Err(Error::dims(self.n_in, x.len()));
        }
        let mut out = Vec::with_capacity(self.n_out());
        self.eval_into(x, &mut out);
        Ok(out)
    }

    /// Interval extension of the layer.
    ///
    /// For each neuron the lower pre-activation takes `w * lo` for
    /// non-negative weights and `w * hi` for negative ones (upper
    /// symmetric); the monotone activation is then applied to both ends.
    /// Sums accumulate in the same order as [`Layer::eval`] with directed
    /// rounding, so the point evaluation of any member is always enclosed.
    pub fn interval_ext(&self, input: &IntervalBox) -> Result<IntervalBox> {
        if input.dim() != self.n_in {
            return Err(Error::dims(self.n_in, input.dim()));
        }
        Ok(self.interval_ext_unchecked(input.dims()))
    }

    fn interval_ext_unchecked(&self, x: &[Interval]) -> IntervalBox {
        let f = self.activation.scalar();
        let out = self
            .rows()
            .zip(&self.bias)
            .map(|(row, &b)| {
                let (mut lo, mut hi) = (0.0, 0.0);
                for (&w, xj) in row.iter().zip(x) {
                    let (p_lo, p_hi) = if w >= 0.0 {
                        (mul_down(w, xj.lo()), mul_up(w, xj.hi()))
                    } else {
                        (mul_down(w, xj.hi()), mul_up(w, xj.lo()))
                    };
                    lo = add_down(lo, p_lo);
                    hi = add_up(hi, p_hi);
                }
                lo = add_down(lo, b);
                hi = add_up(hi, b);
                Interval::raw(f.eval_down(lo), f.eval_up(hi))
            })
            .collect();
        IntervalBox::from_vec(out)
    }
}

/// A feedforward network; layer order is evaluation order.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layers: Vec<Layer>,
}

impl MlpNetwork {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Validation("network has no layers".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[1].n_in() != pair[0].n_out() {
                return Err(Error::Validation(format!(
                    "layer {} expects {} inputs but layer {k} produces {}",
                    k + 1,
                    pair[1].n_in(),
                    pair[0].n_out()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out()
    }

    pub fn eval(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::dims(self.input_dim(), input.len()));
        }
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.eval_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Composition of the per-layer interval extensions.
    pub fn interval_ext(&self, input: &IntervalBox) -> Result<IntervalBox> {
        if input.dim() != self.input_dim() {
            return Err(Error::dims(self.input_dim(), input.dim()));
        }
        let mut cur = self.layers[0].interval_ext_unchecked(input.dims());
        for layer in &self.layers[1..] {
            cur = layer.interval_ext_unchecked(cur.dims());
        }
        Ok(cur)
    }

    /// Product over layers of `xi_l * ||W_l||_inf`; bounds the width growth
    /// of [`MlpNetwork::interval_ext`] in the max-norm.
    pub fn lipschitz_bound(&self) -> f64 {
        self.layers
            .iter()
            .fold(1.0, |acc, l| mul_up(acc, mul_up(l.activation.lipschitz(), l.max_row_sum())))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: NetworkFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.try_into()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&NetworkFile::from(self)).expect("network serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    activation: String,
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    layers: Vec<LayerFile>,
}

impl TryFrom<NetworkFile> for MlpNetwork {
    type Error = Error;
    fn try_from(f: NetworkFile) -> Result<Self> {
        let layers = f
            .layers
            .into_iter()
            .enumerate()
            .map(|(k, l)| {
                let act = Activation::parse(&l.activation)
                    .map_err(|e| Error::Validation(format!("layer {k}: {e}")))?;
                Layer::new(l.weights, l.bias, act).map_err(|e| match e {
                    Error::Validation(m) => Error::Validation(format!("layer {k}: {m}")),
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MlpNetwork::new(layers)
    }
}

impl From<&MlpNetwork> for NetworkFile {
    fn from(net: &MlpNetwork) -> Self {
        NetworkFile {
            layers: net
                .layers
                .iter()
                .map(|l| LayerFile {
                    weights: l.rows().map(<[f64]>::to_vec).collect(),
                    bias: l.bias.clone(),
                    activation: l.activation.as_str().to_string(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn layer(w: &[&[f64]], b: &[f64], a: Activation) -> Layer {
        Layer::new(w.iter().map(|r| r.to_vec()).collect(), b.to_vec(), a).unwrap()
    }

    fn bx(b: &[(f64, f64)]) -> IntervalBox {
        IntervalBox::from_bounds(b).unwrap()
    }

    /// 2-2-1 tanh network with hand-picked weights.
    fn fixture_net() -> MlpNetwork {
        MlpNetwork::new(vec![
            layer(&[&[0.5, -1.0], &[1.5, 0.25]], &[0.1, -0.2], Activation::Tanh),
            layer(&[&[1.0, -2.0]], &[0.3], Activation::Tanh),
        ])
        .unwrap()
    }

    #[test]
    fn eval_examples() {
        let id = MlpNetwork::new(vec![layer(&[&[1.0]], &[0.0], Activation::Identity)]).unwrap();
        assert_eq!(id.eval(&[0.7]).unwrap(), vec![0.7]);
        let relu = MlpNetwork::new(vec![layer(&[&[1.0], &[-1.0]], &[0., 0.], Activation::Relu)]).unwrap();
        assert_eq!(relu.eval(&[2.0]).unwrap(), vec![2.0, 0.0]);
        assert!(matches!(relu.eval(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn eval_regression_on_fixture_net() {
        // hand expansion for input (0.4, -0.6):
        // h1 = tanh(0.5*0.4 + 1.0*0.6 + 0.1) = tanh(0.9)
        // h2 = tanh(1.5*0.4 - 0.25*0.6 - 0.2) = tanh(0.25)
        // y  = tanh(h1 - 2*h2 + 0.3)
        let h1 = 0.9f64.tanh();
        let h2 = 0.25f64.tanh();
        let expected = (h1 - 2.0 * h2 + 0.3).tanh();
        let y = fixture_net().eval(&[0.4, -0.6]).unwrap();
        assert!((y[0] - expected).abs() < 1e-15);
        assert!((y[0] - 0.482_670_868_306_766_3).abs() < 1e-15, "{}", y[0]);
    }

    #[test]
    fn layer_extension_examples() {
        let l = layer(&[&[1.0, -1.0]], &[0.0], Activation::Relu);
        assert_eq!(l.interval_ext(&bx(&[(0., 1.), (0., 1.)])).unwrap(), bx(&[(0., 1.)]));
        let l = layer(&[&[2.0]], &[1.0], Activation::Identity);
        assert_eq!(l.interval_ext(&bx(&[(0., 1.)])).unwrap(), bx(&[(1., 3.)]));
        let l = layer(&[&[1.0]], &[0.0], Activation::Tanh);
        let r = l.interval_ext(&bx(&[(-1., 1.)])).unwrap();
        assert!(r[0].contains((-1f64).tanh()) && r[0].contains(1f64.tanh()));
        assert!((r[0].lo() - (-1f64).tanh()).abs() < 1e-15);
        assert!((r[0].hi() - 1f64.tanh()).abs() < 1e-15);
        assert!(matches!(l.interval_ext(&bx(&[(0., 1.), (0., 1.)])), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn layer_extension_matches_grid_oracle() {
        let l = layer(&[&[1.0, -1.0]], &[0.0], Activation::Relu);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..=100 {
            for j in 0..=100 {
                let v = l.eval(&[i as f64 / 100.0, j as f64 / 100.0]).unwrap()[0];
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        assert_eq!((lo, hi), (0.0, 1.0));
    }

    #[test]
    fn network_extension_examples() {
        let eye = |a| layer(&[&[1.0, 0.0], &[0.0, 1.0]], &[0., 0.], a);
        let net = MlpNetwork::new(vec![eye(Activation::Identity), eye(Activation::Identity)]).unwrap();
        let input = bx(&[(0., 1.), (2., 3.)]);
        assert_eq!(net.interval_ext(&input).unwrap(), input);

        let net = MlpNetwork::new(vec![
            layer(&[&[1.0, -1.0]], &[0.0], Activation::Relu),
            layer(&[&[1.0]], &[0.0], Activation::Relu),
        ])
        .unwrap();
        assert_eq!(net.interval_ext(&bx(&[(0., 1.), (0., 1.)])).unwrap(), bx(&[(0., 1.)]));
    }

    #[test]
    fn lipschitz_examples() {
        let net = MlpNetwork::new(vec![layer(&[&[2.0]], &[0.0], Activation::Identity)]).unwrap();
        assert_eq!(net.lipschitz_bound(), 2.0);
        let net = MlpNetwork::new(vec![
            layer(&[&[1.0, 1.0], &[1.0, 1.0]], &[0., 0.], Activation::Logistic),
            layer(&[&[1.0, 1.0]], &[0.0], Activation::Logistic),
        ])
        .unwrap();
        assert_eq!(net.lipschitz_bound(), 0.25);
    }

    #[test]
    fn loader_validates() {
        let ok = r#"{"layers":[
            {"weights":[[1,2],[3,4]],"bias":[0,0],"activation":"tanh"},
            {"weights":[[1,-1]],"bias":[0.5],"activation":"identity"}]}"#;
        let net = MlpNetwork::from_json_str(ok).unwrap();
        assert_eq!(net.layers().len(), 2);
        assert_eq!((net.input_dim(), net.output_dim()), (2, 1));
        assert_eq!(MlpNetwork::from_json_str(&net.to_json_string()).unwrap(), net);

        let bad_bias = r#"{"layers":[{"weights":[[1,2]],"bias":[0,0],"activation":"tanh"}]}"#;
        assert!(matches!(MlpNetwork::from_json_str(bad_bias), Err(Error::Validation(_))));
        let softmax = r#"{"layers":[{"weights":[[1]],"bias":[0],"activation":"softmax"}]}"#;
        assert!(matches!(MlpNetwork::from_json_str(softmax), Err(Error::Validation(_))));
        let chain = r#"{"layers":[
            {"weights":[[1,2]],"bias":[0],"activation":"tanh"},
            {"weights":[[1,2]],"bias":[0],"activation":"tanh"}]}"#;
        assert!(matches!(MlpNetwork::from_json_str(chain), Err(Error::Validation(_))));
        assert!(matches!(MlpNetwork::from_json_str("{"), Err(Error::Parse(_))));
        assert!(matches!(MlpNetwork::from_json_str(r#"{"layers":[]}"#), Err(Error::Validation(_))));
    }

    fn random_net(rng: &mut ChaCha8Rng) -> MlpNetwork {
        let depth = rng.gen_range(1..=4);
        let mut n_in = rng.gen_range(1..=6);
        let acts = [Activation::Tanh, Activation::Logistic, Activation::Relu, Activation::Identity];
        let layers = (0..depth)
            .map(|_| {
                let n_out = rng.gen_range(1..=16);
                let w = (0..n_out)
                    .map(|_| (0..n_in).map(|_| rng.gen_range(-2.0..2.0)).collect())
                    .collect();
                let b = (0..n_out).map(|_| rng.gen_range(-1.0..1.0)).collect();
                n_in = n_out;
                Layer::new(w, b, acts[rng.gen_range(0..acts.len())]).unwrap()
            })
            .collect();
        MlpNetwork::new(layers).unwrap()
    }

    fn random_box(rng: &mut ChaCha8Rng, n: usize) -> IntervalBox {
        let b: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let lo = rng.gen_range(-2.0..2.0);
                (lo, lo + rng.gen_range(0.01..1.5))
            })
            .collect();
        IntervalBox::from_bounds(&b).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn soundness_monotonicity_and_width(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = random_net(&mut rng);
            let big = random_box(&mut rng, net.input_dim());
            let ext = net.interval_ext(&big).unwrap();
            for _ in 0..200 {
                let p: Vec<f64> = big.dims().iter().map(|d| rng.gen_range(d.lo()..=d.hi())).collect();
                prop_assert!(ext.contains_point(&net.eval(&p).unwrap()).unwrap());
            }
            let small = IntervalBox::from_bounds(&big.dims().iter().map(|d| {
                let a = rng.gen_range(d.lo()..=d.hi());
                let b = rng.gen_range(d.lo()..=d.hi());
                (a.min(b), a.max(b))
            }).collect::<Vec<_>>()).unwrap();
            prop_assert!(net.interval_ext(&small).unwrap().is_subset_of(&ext).unwrap());
            prop_assert!(ext.width() <= net.lipschitz_bound() * big.width() * (1.0 + 1e-9));
        }

        #[test]
        fn point_boxes_are_tight(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = random_net(&mut rng);
            let p: Vec<f64> = (0..net.input_dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let ext = net.interval_ext(&IntervalBox::point(&p).unwrap()).unwrap();
            let y = net.eval(&p).unwrap();
            prop_assert!(ext.contains_point(&y).unwrap());
            for (d, v) in ext.dims().iter().zip(&y) {
                prop_assert!(d.width() <= 1e-12 * (1.0 + v.abs()));
            }
        }
    }
}
