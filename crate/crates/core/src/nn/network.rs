//! The probabilistic-tablature network.
//!
//! ```text
//! input 728 ─ dense 512 ─ dense 448 ─ dense 384 (latent) ─ dense 384   (SELU each)
//!   └─ reshape (64, 1, 6)
//!   └─ deconv 64→32, kernel (3,2), stride (1,2), SELU   → (32, 3, 12)
//!   └─ deconv 32→1,  kernel (2,4), stride (2,2), sigmoid → (1, 6, 26)
//!   └─ drop the last column                              → 6 × 25
//! ```

use ndarray::{s, Array1, Array2, Array4, ArrayD, ArrayView2, ArrayView4, Axis, Ix1, Ix2, Ix4, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layers::{
    deconv2d_backward, deconv2d_forward, dense_backward, dense_forward, selu,
    selu_grad_from_output, sigmoid, sigmoid_grad_from_output, DeconvGeometry,
};
use super::{NnError, Real};
use crate::fretboard::{FretboardFrame, FLAT_LEN, FRET_COLUMNS, STRINGS};

pub const INPUT_LEN: usize = 728;
pub const LATENT_LEN: usize = 384;
pub const OUTPUT_LEN: usize = FLAT_LEN;

/// Initial output bias: the logit of the expected share of active cells
/// (about 1.57 of 150 for typical guitar material). Starting at zero puts
/// every output at 0.5, and the first updates then drive all outputs down so
/// hard that rarely-active cells saturate at exactly 0 in `f32` and never
/// recover.
pub const OUTPUT_BIAS_INIT: f64 = -4.549;

const PROJ_CHANNELS: usize = 64;
const PROJ_WIDTH: usize = 6;
const DECONV1_CHANNELS: usize = 32;
const DECONV1: DeconvGeometry = DeconvGeometry::new((3, 2), (1, 2));
const DECONV2: DeconvGeometry = DeconvGeometry::new((2, 4), (2, 2));
/// Width of the map before the crop: open string plus 25 frets.
const UNCROPPED_WIDTH: usize = 26;

/// Fixed layer table: parameter names and shapes in storage order.
pub struct NetworkSpec;

impl NetworkSpec {
    pub const PARAMS: [(&'static str, &'static [usize]); 12] = [
        ("enc1.weight", &[512, INPUT_LEN]),
        ("enc1.bias", &[512]),
        ("enc2.weight", &[448, 512]),
        ("enc2.bias", &[448]),
        ("enc3.weight", &[LATENT_LEN, 448]),
        ("enc3.bias", &[LATENT_LEN]),
        ("proj.weight", &[PROJ_CHANNELS * PROJ_WIDTH, LATENT_LEN]),
        ("proj.bias", &[PROJ_CHANNELS * PROJ_WIDTH]),
        ("deconv1.weight", &[PROJ_CHANNELS, DECONV1_CHANNELS, 3, 2]),
        ("deconv1.bias", &[DECONV1_CHANNELS]),
        ("deconv2.weight", &[DECONV1_CHANNELS, 1, 2, 4]),
        ("deconv2.bias", &[1]),
    ];

    pub fn parameter_count() -> usize {
        Self::PARAMS
            .iter()
            .map(|(_, shape)| shape.iter().product::<usize>())
            .sum()
    }

    pub fn shape_of(name: &str) -> Option<&'static [usize]> {
        Self::PARAMS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
    }

    /// Effective fan-in used for LeCun-normal initialization. For a
    /// transposed convolution each output pixel sees `C_in·kh·kw/(sh·sw)`
    /// inputs on average.
    fn fan_in(name: &str) -> usize {
        match Self::shape_of(name) {
            Some([_, fan]) => *fan,
            Some([c_in, _, kh, kw]) => {
                let geom = if name.starts_with("deconv1") { DECONV1 } else { DECONV2 };
                (c_in * kh * kw / (geom.stride.0 * geom.stride.1)).max(1)
            }
            _ => 1,
        }
    }
}

const ENC1: usize = 0;
const ENC2: usize = 2;
const ENC3: usize = 4;
const PROJ: usize = 6;
const DC1: usize = 8;
const DC2: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor<F> {
    pub name: String,
    pub value: ArrayD<F>,
}

/// Parameter tensors in [`NetworkSpec::PARAMS`] order. Gradients use the
/// same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<F: Real = f32> {
    pub format_version: u32,
    pub tensors: Vec<NamedTensor<F>>,
}

impl<F: Real> ModelWeights<F> {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn zeros() -> Self {
        ModelWeights {
            format_version: Self::FORMAT_VERSION,
            tensors: NetworkSpec::PARAMS
                .iter()
                .map(|(name, shape)| NamedTensor {
                    name: name.to_string(),
                    value: ArrayD::zeros(IxDyn(shape)),
                })
                .collect(),
        }
    }

    /// LeCun-normal weights (std = 1/√fan_in). Biases are zero except the
    /// output bias, see [`OUTPUT_BIAS_INIT`].
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Self::zeros();
        for t in w.tensors.iter_mut().filter(|t| t.name.ends_with(".weight")) {
            let std = 1.0 / (NetworkSpec::fan_in(&t.name) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("valid std");
            t.value.mapv_inplace(|_| F::lit(normal.sample(&mut rng)));
        }
        w.tensors[DC2 + 1].value.fill(F::lit(OUTPUT_BIAS_INIT));
        w
    }

    /// Checks that names and shapes match the layer table.
    pub fn validate(&self) -> Result<(), NnError> {
        if self.tensors.len() != NetworkSpec::PARAMS.len() {
            return Err(NnError::Shape {
                context: "parameter count".into(),
                expected: vec![NetworkSpec::PARAMS.len()],
                found: vec![self.tensors.len()],
            });
        }
        for (t, (name, shape)) in self.tensors.iter().zip(NetworkSpec::PARAMS.iter()) {
            if t.name != *name || t.value.shape() != *shape {
                return Err(NnError::Shape {
                    context: format!("parameter {name}"),
                    expected: shape.to_vec(),
                    found: t.value.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ArrayD<F>> {
        self.tensors.iter().find(|t| t.name == name).map(|t| &t.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ArrayD<F>> {
        self.tensors
            .iter_mut()
            .find(|t| t.name == name)
            .map(|t| &mut t.value)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.value.len()).sum()
    }

    pub fn cast<G: Real>(&self) -> ModelWeights<G> {
        ModelWeights {
            format_version: self.format_version,
            tensors: self
                .tensors
                .iter()
                .map(|t| NamedTensor {
                    name: t.name.clone(),
                    value: t.value.mapv(|v| G::from_f64(v.to_f64().unwrap_or(0.0)).unwrap_or(G::zero())),
                })
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.value.iter().all(|v| v.is_finite()))
    }

    fn mat(&self, idx: usize) -> ArrayView2<'_, F> {
        self.tensors[idx]
            .value
            .view()
            .into_dimensionality::<Ix2>()
            .expect("validated shape")
    }

    fn vec(&self, idx: usize) -> ndarray::ArrayView1<'_, F> {
        self.tensors[idx]
            .value
            .view()
            .into_dimensionality::<Ix1>()
            .expect("validated shape")
    }

    fn kernel(&self, idx: usize) -> ArrayView4<'_, F> {
        self.tensors[idx]
            .value
            .view()
            .into_dimensionality::<Ix4>()
            .expect("validated shape")
    }
}

/// 6×25 network output; entries in (0, 1), not normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilisticTablature {
    values: Vec<f64>,
}

impl ProbabilisticTablature {
    pub fn from_values(values: Vec<f64>) -> Result<Self, NnError> {
        if values.len() != OUTPUT_LEN {
            return Err(NnError::InputLength {
                expected: OUTPUT_LEN,
                found: values.len(),
            });
        }
        Ok(ProbabilisticTablature { values })
    }

    pub fn uniform(value: f64) -> Self {
        ProbabilisticTablature {
            values: vec![value; OUTPUT_LEN],
        }
    }

    /// The frame itself as a 0/1 map.
    pub fn from_frame(frame: &FretboardFrame) -> Self {
        ProbabilisticTablature {
            values: frame.flatten().bits().iter().map(|&b| b as f64).collect(),
        }
    }

    pub fn get(&self, string: usize, fret: u8) -> f64 {
        self.values[string * FRET_COLUMNS + fret as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scaled(&self, factor: f64) -> Self {
        ProbabilisticTablature {
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Rows of 25 values, string 0 first.
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(FRET_COLUMNS)
    }
}

/// Every intermediate activation of a batched forward pass (post-activation
/// values; the SELU and sigmoid derivatives are recovered from them).
#[derive(Debug, Clone)]
pub struct Activations<F> {
    pub input: Array2<F>,
    pub enc1: Array2<F>,
    pub enc2: Array2<F>,
    pub latent: Array2<F>,
    pub proj: Array4<F>,
    pub deconv1: Array4<F>,
    pub deconv2: Array4<F>,
    pub output: Array2<F>,
}

impl<F: Real> Activations<F> {
    /// `(layer, shape without the batch axis)` in evaluation order.
    pub fn shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let strip = |s: &[usize]| s[1..].to_vec();
        vec![
            ("input", strip(self.input.shape())),
            ("enc1", strip(self.enc1.shape())),
            ("enc2", strip(self.enc2.shape())),
            ("latent", strip(self.latent.shape())),
            ("proj", strip(self.proj.shape())),
            ("deconv1", strip(self.deconv1.shape())),
            ("deconv2", strip(self.deconv2.shape())),
            ("output", strip(self.output.shape())),
        ]
    }
}

fn ensure_finite<F: Real, D: ndarray::Dimension>(
    a: &ndarray::ArrayBase<impl ndarray::Data<Elem = F>, D>,
    layer: &str,
) -> Result<(), NnError> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NnError::NonFinite {
            layer: layer.to_string(),
        })
    }
}

/// Batched forward pass keeping every activation. `inputs: (batch, 728)`.
pub fn forward_trace<F: Real>(
    weights: &ModelWeights<F>,
    inputs: ArrayView2<F>,
) -> Result<Activations<F>, NnError> {
    weights.validate()?;
    if inputs.ncols() != INPUT_LEN {
        return Err(NnError::InputLength {
            expected: INPUT_LEN,
            found: inputs.ncols(),
        });
    }
    let batch = inputs.nrows();
    let dense_selu = |x: &ArrayView2<F>, idx: usize| -> Result<Array2<F>, NnError> {
        Ok(dense_forward(x, &weights.mat(idx), &weights.vec(idx + 1))?.mapv_into(selu))
    };
    let enc1 = dense_selu(&inputs, ENC1)?;
    let enc2 = dense_selu(&enc1.view(), ENC2)?;
    let latent = dense_selu(&enc2.view(), ENC3)?;
    let proj = dense_selu(&latent.view(), PROJ)?
        .into_shape_with_order((batch, PROJ_CHANNELS, 1, PROJ_WIDTH))
        .expect("contiguous");
    let deconv1 = deconv2d_forward(&proj.view(), &weights.kernel(DC1), &weights.vec(DC1 + 1), &DECONV1)?
        .mapv_into(selu);
    let deconv2 = deconv2d_forward(&deconv1.view(), &weights.kernel(DC2), &weights.vec(DC2 + 1), &DECONV2)?
        .mapv_into(sigmoid);
    let output = deconv2
        .slice(s![.., 0, .., ..FRET_COLUMNS])
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((batch, OUTPUT_LEN))
        .expect("contiguous");
    Ok(Activations {
        input: inputs.to_owned(),
        enc1,
        enc2,
        latent,
        proj,
        deconv1,
        deconv2,
        output,
    })
}

/// Batched forward pass: `(batch, 728)` → `(batch, 150)`.
pub fn forward_batch<F: Real>(
    weights: &ModelWeights<F>,
    inputs: ArrayView2<F>,
) -> Result<Array2<F>, NnError> {
    Ok(forward_trace(weights, inputs)?.output)
}

/// Single-example forward pass.
pub fn forward<F: Real>(weights: &ModelWeights<F>, input: &[F]) -> Result<ProbabilisticTablature, NnError> {
    if input.len() != INPUT_LEN {
        return Err(NnError::InputLength {
            expected: INPUT_LEN,
            found: input.len(),
        });
    }
    let x = ArrayView2::from_shape((1, INPUT_LEN), input).expect("length checked");
    let out = forward_batch(weights, x)?;
    ProbabilisticTablature::from_values(out.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect())
}

/// Mean squared error over all outputs of the batch (and the batch mean of
/// per-example losses) together with parameter gradients.
pub fn backward<F: Real>(
    weights: &ModelWeights<F>,
    inputs: ArrayView2<F>,
    targets: ArrayView2<F>,
) -> Result<(F, ModelWeights<F>), NnError> {
    let acts = forward_trace(weights, inputs)?;
    backward_from(weights, &acts, targets)
}

pub fn mse<F: Real>(outputs: &ArrayView2<F>, targets: &ArrayView2<F>) -> F {
    let n = F::from_usize(outputs.len()).expect("size");
    outputs
        .iter()
        .zip(targets.iter())
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum::<F>()
        / n
}

pub fn backward_from<F: Real>(
    weights: &ModelWeights<F>,
    acts: &Activations<F>,
    targets: ArrayView2<F>,
) -> Result<(F, ModelWeights<F>), NnError> {
    let batch = acts.output.nrows();
    if targets.dim() != (batch, OUTPUT_LEN) {
        return Err(NnError::Shape {
            context: "targets".into(),
            expected: vec![batch, OUTPUT_LEN],
            found: targets.shape().to_vec(),
        });
    }
    ensure_finite(&acts.output, "output")?;
    let loss = mse(&acts.output.view(), &targets);
    let scale = F::lit(2.0) / F::from_usize(batch * OUTPUT_LEN).expect("size");

    let mut grads = ModelWeights::<F>::zeros();
    let mut put = |idx: usize, value: ArrayD<F>, layer: &str| -> Result<(), NnError> {
        ensure_finite(&value, layer)?;
        grads.tensors[idx].value = value;
        Ok(())
    };

    // ∂L/∂(pre-sigmoid) on the uncropped map; the dropped column gets zero.
    let mut g_dc2 = Array4::<F>::zeros(acts.deconv2.raw_dim());
    for n in 0..batch {
        for r in 0..STRINGS {
            for c in 0..FRET_COLUMNS {
                let i = r * FRET_COLUMNS + c;
                let y = acts.deconv2[[n, 0, r, c]];
                g_dc2[[n, 0, r, c]] =
                    scale * (acts.output[[n, i]] - targets[[n, i]]) * sigmoid_grad_from_output(y);
            }
        }
    }
    debug_assert_eq!(acts.deconv2.dim().3, UNCROPPED_WIDTH);

    let dc2 = deconv2d_backward(&acts.deconv1.view(), &weights.kernel(DC2), &g_dc2.view(), &DECONV2, true);
    put(DC2, dc2.weight.into_dyn(), "deconv2")?;
    put(DC2 + 1, dc2.bias.into_dyn(), "deconv2")?;
    let mut g_dc1 = dc2.input.expect("requested");
    g_dc1.zip_mut_with(&acts.deconv1, |g, &y| *g *= selu_grad_from_output(y));

    let dc1 = deconv2d_backward(&acts.proj.view(), &weights.kernel(DC1), &g_dc1.view(), &DECONV1, true);
    put(DC1, dc1.weight.into_dyn(), "deconv1")?;
    put(DC1 + 1, dc1.bias.into_dyn(), "deconv1")?;
    let proj_out = acts
        .proj
        .view()
        .into_shape_with_order((batch, PROJ_CHANNELS * PROJ_WIDTH))
        .expect("contiguous");
    let mut g_proj = dc1
        .input
        .expect("requested")
        .into_shape_with_order((batch, PROJ_CHANNELS * PROJ_WIDTH))
        .expect("contiguous");
    g_proj.zip_mut_with(&proj_out, |g, &y| *g *= selu_grad_from_output(y));

    let layers: [(usize, &Array2<F>, &str); 4] = [
        (PROJ, &acts.latent, "proj"),
        (ENC3, &acts.enc2, "enc3"),
        (ENC2, &acts.enc1, "enc2"),
        (ENC1, &acts.input, "enc1"),
    ];
    let mut g_out: Array2<F> = g_proj;
    for &(idx, layer_in, name) in &layers {
        let d = dense_backward(&layer_in.view(), &weights.mat(idx), &g_out.view(), idx != ENC1);
        put(idx, d.weight.into_dyn(), name)?;
        put(idx + 1, d.bias.into_dyn(), name)?;
        if let Some(mut g_in) = d.input {
            // every layer input past the first is a SELU output
            g_in.zip_mut_with(layer_in, |g, &y| *g *= selu_grad_from_output(y));
            g_out = g_in;
        }
    }
    Ok((loss, grads))
}

/// Per-example mean squared error, `(batch)`.
pub fn per_example_mse<F: Real>(outputs: &ArrayView2<F>, targets: &ArrayView2<F>) -> Array1<F> {
    let diff = outputs - targets;
    (&diff * &diff).mean_axis(Axis(1)).expect("non-empty rows")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn spec_shapes() {
        let w = ModelWeights::<f32>::zeros();
        w.validate().unwrap();
        assert_eq!(
            NetworkSpec::parameter_count(),
            512 * 728 + 512 + 448 * 512 + 448 + 384 * 448 + 384 + 384 * 384 + 384
                + 64 * 32 * 6 + 32 + 32 * 8 + 1
        );
        assert_eq!(w.parameter_count(), NetworkSpec::parameter_count());
    }

    #[test]
    fn zero_network_outputs_half() {
        let w = ModelWeights::<f32>::zeros();
        let p = forward(&w, &[0.0f32; INPUT_LEN]).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn fresh_network_outputs_in_unit_interval() {
        let w = ModelWeights::<f32>::init(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f32> = (0..INPUT_LEN).map(|_| rng.random_range(0..2) as f32).collect();
        let a = forward(&w, &x).unwrap();
        let b = forward(&w, &x).unwrap();
        assert_eq!(a, b);
        assert!(a.values().iter().all(|&v| v > 0.0 && v < 1.0 && v.is_finite()));
    }

    #[test]
    fn wrong_input_length() {
        let w = ModelWeights::<f32>::zeros();
        assert_eq!(
            forward(&w, &[0.0f32; 727]),
            Err(NnError::InputLength {
                expected: INPUT_LEN,
                found: 727
            })
        );
    }

    #[test]
    fn trace_shapes() {
        let w = ModelWeights::<f32>::init(0);
        let acts = forward_trace(&w, Array2::zeros((2, INPUT_LEN)).view()).unwrap();
        let shapes = acts.shapes();
        let expected: Vec<(&str, Vec<usize>)> = vec![
            ("input", vec![728]),
            ("enc1", vec![512]),
            ("enc2", vec![448]),
            ("latent", vec![384]),
            ("proj", vec![64, 1, 6]),
            ("deconv1", vec![32, 3, 12]),
            ("deconv2", vec![1, 6, 26]),
            ("output", vec![150]),
        ];
        assert_eq!(shapes, expected);
    }

    #[test]
    fn zero_loss_at_fixed_point() {
        let w = ModelWeights::<f64>::init(5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_simple_fn((3, INPUT_LEN), || rng.random_range(0..2) as f64);
        let target = forward_batch(&w, x.view()).unwrap();
        let (loss, grads) = backward(&w, x.view(), target.view()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.tensors.iter().all(|t| t.value.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn identical_batch_matches_single_example() {
        let w = ModelWeights::<f64>::init(5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x1 = Array2::from_shape_simple_fn((1, INPUT_LEN), || rng.random_range(0..2) as f64);
        let t1 = Array2::from_shape_simple_fn((1, OUTPUT_LEN), || rng.random_range(0..2) as f64);
        let x4 = ndarray::concatenate(Axis(0), &[x1.view(); 4]).unwrap();
        let t4 = ndarray::concatenate(Axis(0), &[t1.view(); 4]).unwrap();
        let (l1, g1) = backward(&w, x1.view(), t1.view()).unwrap();
        let (l4, g4) = backward(&w, x4.view(), t4.view()).unwrap();
        assert!((l1 - l4).abs() < 1e-12);
        for (a, b) in g1.tensors.iter().zip(g4.tensors.iter()) {
            for (x, y) in a.value.iter().zip(b.value.iter()) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()), "{}: {x} vs {y}", a.name);
            }
        }
    }

    #[test]
    fn non_finite_weights_are_reported() {
        let mut w = ModelWeights::<f64>::init(1);
        w.get_mut("deconv2.bias").unwrap()[[0]] = f64::NAN;
        let x = Array2::<f64>::zeros((1, INPUT_LEN));
        let t = Array2::<f64>::zeros((1, OUTPUT_LEN));
        assert!(matches!(backward(&w, x.view(), t.view()), Err(NnError::NonFinite { .. })));
    }

    #[test]
    fn network_gradient_matches_finite_differences() {
        let w = ModelWeights::<f64>::init(11);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array2::from_shape_simple_fn((2, INPUT_LEN), || rng.random_range(0..2) as f64);
        let t = Array2::from_shape_simple_fn((2, OUTPUT_LEN), || rng.random_range(0..2) as f64);
        let (_, grads) = backward(&w, x.view(), t.view()).unwrap();
        let eps = 1e-5;
        for (ti, (name, _)) in NetworkSpec::PARAMS.iter().enumerate() {
            let len = w.tensors[ti].value.len();
            for _ in 0..4 {
                let k = rng.random_range(0..len);
                let mut plus = w.clone();
                plus.tensors[ti].value.as_slice_mut().unwrap()[k] += eps;
                let mut minus = w.clone();
                minus.tensors[ti].value.as_slice_mut().unwrap()[k] -= eps;
                let lp = mse(&forward_batch(&plus, x.view()).unwrap().view(), &t.view());
                let lm = mse(&forward_batch(&minus, x.view()).unwrap().view(), &t.view());
                let numeric = (lp - lm) / (2.0 * eps);
                let analytic = grads.tensors[ti].value.as_slice().unwrap()[k];
                let denom = numeric.abs().max(analytic.abs()).max(1e-7);
                assert!(
                    (numeric - analytic).abs() / denom < 1e-3,
                    "{name}[{k}]: analytic {analytic} numeric {numeric}"
                );
            }
        }
    }
}
