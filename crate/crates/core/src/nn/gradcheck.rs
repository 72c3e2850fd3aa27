//! Finite-difference verification of every layer's backward pass.
//!
//! Each instance draws random inputs, parameters and a random linear
//! read-out `L = Σ r ⊙ y`, then compares the analytic gradient of `L` with
//! respect to every parameter and input entry against a central difference.
//! Everything runs in `f64`.

use std::fmt;

use ndarray::{Array, Array1, Array2, Array4, Dimension};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::layers::{
    deconv2d_backward, deconv2d_forward, dense_backward, dense_forward, selu,
    selu_grad_from_output, sigmoid, sigmoid_grad_from_output, DeconvGeometry,
};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Denominator floor so that gradients that are numerically zero do not
/// produce huge relative errors from round-off alone.
const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    Selu,
    Sigmoid,
    Deconv1,
    Deconv2,
}

impl LayerKind {
    pub const ALL: [LayerKind; 5] = [
        LayerKind::Dense,
        LayerKind::Selu,
        LayerKind::Sigmoid,
        LayerKind::Deconv1,
        LayerKind::Deconv2,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Dense => "dense",
            LayerKind::Selu => "selu",
            LayerKind::Sigmoid => "sigmoid",
            LayerKind::Deconv1 => "deconv1 (k3x2 s1x2)",
            LayerKind::Deconv2 => "deconv2 (k2x4 s2x2)",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerCheck {
    pub layer: LayerKind,
    pub instances: usize,
    pub checked_entries: usize,
    pub max_relative_error: f64,
}

impl LayerCheck {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_relative_error <= tolerance
    }
}

#[derive(Debug, Clone)]
pub struct GradReport {
    pub epsilon: f64,
    pub tolerance: f64,
    pub layers: Vec<LayerCheck>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.layers.iter().all(|l| l.passed(self.tolerance))
    }
}

impl fmt::Display for GradReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.layers {
            writeln!(
                f,
                "{:<22} {:>3} instances {:>6} entries  max rel err {:.3e}  {}",
                l.layer.name(),
                l.instances,
                l.checked_entries,
                l.max_relative_error,
                if l.passed(self.tolerance) { "PASS" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

fn normal<D: Dimension, Sh: ndarray::ShapeBuilder<Dim = D>>(rng: &mut ChaCha8Rng, shape: Sh) -> Array<f64, D> {
    Array::from_shape_simple_fn(shape, || rng.sample::<f64, _>(StandardNormal))
}

fn dot<D: Dimension>(a: &Array<f64, D>, b: &Array<f64, D>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Max relative error between `analytic` and central differences of `loss`
/// with respect to every entry of `param`.
fn compare<D: Dimension>(
    param: &Array<f64, D>,
    analytic: &Array<f64, D>,
    eps: f64,
    mut loss: impl FnMut(&Array<f64, D>) -> f64,
) -> (usize, f64) {
    let mut worst = 0.0f64;
    let mut probe = param.clone();
    let n = param.len();
    for k in 0..n {
        let orig = probe.as_slice_memory_order().expect("contiguous")[k];
        probe.as_slice_memory_order_mut().expect("contiguous")[k] = orig + eps;
        let plus = loss(&probe);
        probe.as_slice_memory_order_mut().expect("contiguous")[k] = orig - eps;
        let minus = loss(&probe);
        probe.as_slice_memory_order_mut().expect("contiguous")[k] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic.as_slice_memory_order().expect("contiguous")[k];
        worst = worst.max(relative_error(a, numeric));
    }
    (n, worst)
}

fn check_dense(rng: &mut ChaCha8Rng, eps: f64) -> (usize, f64) {
    let (batch, n_in, n_out) = (rng.random_range(1..4), rng.random_range(2..9), rng.random_range(2..9));
    let x: Array2<f64> = normal(rng, (batch, n_in));
    let w: Array2<f64> = normal(rng, (n_out, n_in));
    let b: Array1<f64> = normal(rng, n_out);
    let r: Array2<f64> = normal(rng, (batch, n_out));
    let g = dense_backward(&x.view(), &w.view(), &r.view(), true);
    let f = |x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>| {
        dot(&dense_forward(&x.view(), &w.view(), &b.view()).expect("shapes"), &r)
    };
    let parts = [
        compare(&x, &g.input.expect("requested"), eps, |p| f(p, &w, &b)),
        compare(&w, &g.weight, eps, |p| f(&x, p, &b)),
        compare(&b, &g.bias, eps, |p| f(&x, &w, p)),
    ];
    parts.iter().fold((0, 0.0), |(n, e), &(m, x)| (n + m, e.max(x)))
}

fn check_activation(
    rng: &mut ChaCha8Rng,
    eps: f64,
    act: fn(f64) -> f64,
    grad_from_output: fn(f64) -> f64,
) -> (usize, f64) {
    let len = rng.random_range(4..24);
    let x: Array1<f64> = normal(rng, len).mapv(|v| 2.0 * v);
    let r: Array1<f64> = normal(rng, len);
    let y = x.mapv(act);
    let analytic = &y.mapv(grad_from_output) * &r;
    compare(&x, &analytic, eps, |p| dot(&p.mapv(act), &r))
}

fn check_deconv(rng: &mut ChaCha8Rng, eps: f64, geom: DeconvGeometry, h: usize, w_in: usize) -> (usize, f64) {
    let batch = rng.random_range(1..3);
    let c_in = rng.random_range(1..5);
    let c_out = rng.random_range(1..4);
    let (oh, ow) = geom.output_size(h, w_in);
    let x: Array4<f64> = normal(rng, (batch, c_in, h, w_in));
    let w: Array4<f64> = normal(rng, (c_in, c_out, geom.kernel.0, geom.kernel.1));
    let b: Array1<f64> = normal(rng, c_out);
    let r: Array4<f64> = normal(rng, (batch, c_out, oh, ow));
    let g = deconv2d_backward(&x.view(), &w.view(), &r.view(), &geom, true);
    let f = |x: &Array4<f64>, w: &Array4<f64>, b: &Array1<f64>| {
        dot(&deconv2d_forward(&x.view(), &w.view(), &b.view(), &geom).expect("shapes"), &r)
    };
    let parts = [
        compare(&x, &g.input.expect("requested"), eps, |p| f(p, &w, &b)),
        compare(&w, &g.weight, eps, |p| f(&x, p, &b)),
        compare(&b, &g.bias, eps, |p| f(&x, &w, p)),
    ];
    parts.iter().fold((0, 0.0), |(n, e), &(m, x)| (n + m, e.max(x)))
}

/// Runs `instances` random checks per layer type.
pub fn run_gradient_suite(instances: usize, seed: u64, eps: f64, tolerance: f64) -> GradReport {
    let layers = LayerKind::ALL
        .iter()
        .enumerate()
        .map(|(i, &layer)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let mut checked = 0;
            let mut worst = 0.0f64;
            for _ in 0..instances {
                let (n, e) = match layer {
                    LayerKind::Dense => check_dense(&mut rng, eps),
                    LayerKind::Selu => check_activation(&mut rng, eps, selu, selu_grad_from_output),
                    LayerKind::Sigmoid => {
                        check_activation(&mut rng, eps, sigmoid, sigmoid_grad_from_output)
                    }
                    LayerKind::Deconv1 => {
                        check_deconv(&mut rng, eps, DeconvGeometry::new((3, 2), (1, 2)), 1, 6)
                    }
                    LayerKind::Deconv2 => {
                        check_deconv(&mut rng, eps, DeconvGeometry::new((2, 4), (2, 2)), 3, 12)
                    }
                };
                checked += n;
                worst = worst.max(e);
            }
            LayerCheck {
                layer,
                instances,
                checked_entries: checked,
                max_relative_error: worst,
            }
        })
        .collect();
    GradReport {
        epsilon: eps,
        tolerance,
        layers,
    }
}
