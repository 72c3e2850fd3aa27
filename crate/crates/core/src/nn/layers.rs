//! Layer kernels with hand-written backward passes. Batched tensors put the
//! batch on axis 0.

use ndarray::{s, Array1, Array2, Array4, ArrayView1, ArrayView2, ArrayView4, Axis};

use super::{NnError, Real};

pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;
pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;

#[inline]
pub fn selu<F: Real>(x: F) -> F {
    let lambda = F::lit(SELU_LAMBDA);
    if x > F::zero() {
        lambda * x
    } else {
        lambda * F::lit(SELU_ALPHA) * x.exp_m1()
    }
}

/// Derivative of SELU at pre-activation `x`.
#[inline]
pub fn selu_grad<F: Real>(x: F) -> F {
    let lambda = F::lit(SELU_LAMBDA);
    if x > F::zero() {
        lambda
    } else {
        lambda * F::lit(SELU_ALPHA) * x.exp()
    }
}

/// Derivative of SELU recovered from its output `y`: `λ` on the positive
/// branch, `y + λα` on the exponential branch.
#[inline]
pub fn selu_grad_from_output<F: Real>(y: F) -> F {
    if y > F::zero() {
        F::lit(SELU_LAMBDA)
    } else {
        y + F::lit(SELU_LAMBDA * SELU_ALPHA)
    }
}

#[inline]
pub fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

#[inline]
pub fn sigmoid_grad_from_output<F: Real>(y: F) -> F {
    y * (F::one() - y)
}

/// `x · wᵀ + b` with `x: (batch, in)`, `w: (out, in)`, `b: (out)`.
pub fn dense_forward<F: Real>(
    x: &ArrayView2<F>,
    w: &ArrayView2<F>,
    b: &ArrayView1<F>,
) -> Result<Array2<F>, NnError> {
    if x.ncols() != w.ncols() || b.len() != w.nrows() {
        return Err(NnError::Shape {
            context: "dense".into(),
            expected: vec![w.nrows(), x.ncols()],
            found: vec![b.len(), w.ncols()],
        });
    }
    let mut y = x.dot(&w.t());
    y += b;
    Ok(y)
}

pub struct DenseGrads<F> {
    pub input: Option<Array2<F>>,
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

/// Gradients of a dense layer given `grad_out = ∂L/∂y`. The input gradient is
/// skipped when `need_input` is false (first layer).
pub fn dense_backward<F: Real>(
    x: &ArrayView2<F>,
    w: &ArrayView2<F>,
    grad_out: &ArrayView2<F>,
    need_input: bool,
) -> DenseGrads<F> {
    DenseGrads {
        input: need_input.then(|| grad_out.dot(w)),
        weight: grad_out.t().dot(x),
        bias: grad_out.sum_axis(Axis(0)),
    }
}

/// Kernel size and stride of a transposed convolution without padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeconvGeometry {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
}

impl DeconvGeometry {
    pub const fn new(kernel: (usize, usize), stride: (usize, usize)) -> Self {
        DeconvGeometry { kernel, stride }
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h - 1) * self.stride.0 + self.kernel.0,
            (w - 1) * self.stride.1 + self.kernel.1,
        )
    }
}

fn check_deconv<F: Real>(
    x: &ArrayView4<F>,
    w: &ArrayView4<F>,
    geom: &DeconvGeometry,
) -> Result<(), NnError> {
    let (_, c_in, h, wd) = x.dim();
    let (wc_in, _, kh, kw) = w.dim();
    if c_in != wc_in || (kh, kw) != geom.kernel || h == 0 || wd == 0 {
        return Err(NnError::Shape {
            context: "transposed convolution".into(),
            expected: vec![c_in, kh, kw],
            found: vec![wc_in, geom.kernel.0, geom.kernel.1],
        });
    }
    Ok(())
}

/// Input `(batch, C_in, H, W)` flattened to `(batch·H·W, C_in)`.
fn pixels_by_channel<F: Real>(x: &ArrayView4<F>) -> Array2<F> {
    let (b, c, h, w) = x.dim();
    let perm = x.view().permuted_axes([0, 2, 3, 1]);
    perm.as_standard_layout()
        .into_owned()
        .into_shape_with_order((b * h * w, c))
        .expect("contiguous")
}

/// Transposed convolution: every input pixel scatters `x[ci]·w[ci, co]` into
/// the output window anchored at `(i·stride_h, j·stride_w)`.
///
/// `x: (batch, C_in, H, W)`, `w: (C_in, C_out, kh, kw)`, `b: (C_out)`,
/// output `(batch, C_out, (H−1)·sh + kh, (W−1)·sw + kw)`.
pub fn deconv2d_forward<F: Real>(
    x: &ArrayView4<F>,
    w: &ArrayView4<F>,
    b: &ArrayView1<F>,
    geom: &DeconvGeometry,
) -> Result<Array4<F>, NnError> {
    check_deconv(x, w, geom)?;
    let (batch, c_in, h, wd) = x.dim();
    let (_, c_out, kh, kw) = w.dim();
    if b.len() != c_out {
        return Err(NnError::Shape {
            context: "transposed convolution bias".into(),
            expected: vec![c_out],
            found: vec![b.len()],
        });
    }
    let (oh, ow) = geom.output_size(h, wd);
    let (sh, sw) = geom.stride;

    let x2 = pixels_by_channel(x);
    let w2 = w
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((c_in, c_out * kh * kw))
        .expect("contiguous");
    let cols = x2.dot(&w2);

    let mut out = Array4::<F>::zeros((batch, c_out, oh, ow));
    for n in 0..batch {
        for i in 0..h {
            for j in 0..wd {
                let row = cols.row((n * h + i) * wd + j);
                for co in 0..c_out {
                    for ki in 0..kh {
                        for kj in 0..kw {
                            out[[n, co, i * sh + ki, j * sw + kj]] +=
                                row[(co * kh + ki) * kw + kj];
                        }
                    }
                }
            }
        }
    }
    for co in 0..c_out {
        out.slice_mut(s![.., co, .., ..]).mapv_inplace(|v| v + b[co]);
    }
    Ok(out)
}

pub struct DeconvGrads<F> {
    pub input: Option<Array4<F>>,
    pub weight: Array4<F>,
    pub bias: Array1<F>,
}

pub fn deconv2d_backward<F: Real>(
    x: &ArrayView4<F>,
    w: &ArrayView4<F>,
    grad_out: &ArrayView4<F>,
    geom: &DeconvGeometry,
    need_input: bool,
) -> DeconvGrads<F> {
    let (batch, c_in, h, wd) = x.dim();
    let (_, c_out, kh, kw) = w.dim();
    let (sh, sw) = geom.stride;

    // Gather each input pixel's output window: the adjoint of the scatter.
    let mut grad_cols = Array2::<F>::zeros((batch * h * wd, c_out * kh * kw));
    for n in 0..batch {
        for i in 0..h {
            for j in 0..wd {
                let mut row = grad_cols.row_mut((n * h + i) * wd + j);
                for co in 0..c_out {
                    for ki in 0..kh {
                        for kj in 0..kw {
                            row[(co * kh + ki) * kw + kj] =
                                grad_out[[n, co, i * sh + ki, j * sw + kj]];
                        }
                    }
                }
            }
        }
    }

    let x2 = pixels_by_channel(x);
    let weight = x2
        .t()
        .dot(&grad_cols)
        .into_shape_with_order((c_in, c_out, kh, kw))
        .expect("contiguous");

    let input = need_input.then(|| {
        let w2 = w
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((c_in, c_out * kh * kw))
            .expect("contiguous");
        grad_cols
            .dot(&w2.t())
            .into_shape_with_order((batch, h, wd, c_in))
            .expect("contiguous")
            .permuted_axes([0, 3, 1, 2])
            .as_standard_layout()
            .into_owned()
    });

    let bias = grad_out.sum_axis(Axis(3)).sum_axis(Axis(2)).sum_axis(Axis(0));
    DeconvGrads {
        input,
        weight,
        bias,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn activation_values() {
        assert_eq!(selu(0.0f64), 0.0);
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert_close(selu(1.0f64), 1.05070098, 1e-8);
        assert_close(selu(-1.0f64), 1.05070098 * 1.67326324 * ((-1.0f64).exp() - 1.0), 1e-7);
        assert!(sigmoid(-800.0f64) >= 0.0 && sigmoid(800.0f64) <= 1.0);
        for x in [-3.0, -0.5, 0.7, 2.0f64] {
            assert_close(selu_grad_from_output(selu(x)), selu_grad(x), 1e-12);
        }
    }

    #[test]
    fn dense_known_values() {
        let x = array![[1.0, 2.0]];
        let w = array![[1.0, 0.0], [0.5, -1.0], [2.0, 3.0]];
        let b = array![0.0, 1.0, -1.0];
        let y = dense_forward(&x.view(), &w.view(), &b.view()).unwrap();
        assert_eq!(y, array![[1.0, -0.5, 7.0]]);
        assert!(dense_forward(&x.view(), &w.t(), &b.view()).is_err());
    }

    #[test]
    fn deconv_output_sizes() {
        let g1 = DeconvGeometry::new((3, 2), (1, 2));
        assert_eq!(g1.output_size(1, 6), (3, 12));
        let g2 = DeconvGeometry::new((2, 4), (2, 2));
        assert_eq!(g2.output_size(3, 12), (6, 26));

        let x = Array4::<f64>::zeros((2, 64, 1, 6));
        let w = Array4::<f64>::zeros((64, 32, 3, 2));
        let b = Array1::<f64>::zeros(32);
        let y = deconv2d_forward(&x.view(), &w.view(), &b.view(), &g1).unwrap();
        assert_eq!(y.dim(), (2, 32, 3, 12));
        let w2 = Array4::<f64>::zeros((32, 1, 2, 4));
        let b2 = Array1::<f64>::zeros(1);
        let z = deconv2d_forward(&y.view(), &w2.view(), &b2.view(), &g2).unwrap();
        assert_eq!(z.dim(), (2, 1, 6, 26));
    }

    #[test]
    fn deconv_degenerate_1x1() {
        let x = Array::from_shape_vec((1, 1, 1, 1), vec![3.0]).unwrap();
        let w = Array::from_shape_vec((1, 1, 1, 1), vec![-2.0]).unwrap();
        let b = array![0.5];
        let y = deconv2d_forward(&x.view(), &w.view(), &b.view(), &DeconvGeometry::new((1, 1), (1, 1)))
            .unwrap();
        assert_eq!(y.into_raw_vec_and_offset().0, vec![-5.5]);
    }

    #[test]
    fn deconv_shape_mismatch() {
        let x = Array4::<f64>::zeros((1, 3, 2, 2));
        let w = Array4::<f64>::zeros((4, 1, 2, 2));
        let b = Array1::<f64>::zeros(1);
        assert!(deconv2d_forward(&x.view(), &w.view(), &b.view(), &DeconvGeometry::new((2, 2), (1, 1)))
            .is_err());
    }

    /// Direct strided convolution, written independently of the GEMM path.
    fn naive_conv(y: &Array4<f64>, w: &Array4<f64>, geom: &DeconvGeometry, h: usize, wd: usize) -> Array4<f64> {
        let (batch, c_out, _, _) = y.dim();
        let (c_in, _, kh, kw) = w.dim();
        let mut out = Array4::<f64>::zeros((batch, c_in, h, wd));
        for n in 0..batch {
            for ci in 0..c_in {
                for i in 0..h {
                    for j in 0..wd {
                        let mut acc = 0.0;
                        for co in 0..c_out {
                            for ki in 0..kh {
                                for kj in 0..kw {
                                    acc += y[[n, co, i * geom.stride.0 + ki, j * geom.stride.1 + kj]]
                                        * w[[ci, co, ki, kj]];
                                }
                            }
                        }
                        out[[n, ci, i, j]] = acc;
                    }
                }
            }
        }
        out
    }

    fn random4(rng: &mut ChaCha8Rng, shape: (usize, usize, usize, usize)) -> Array4<f64> {
        Array4::from_shape_simple_fn(shape, || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn deconv_is_adjoint_of_strided_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (c_in, c_out, h, wd, geom) in [
            (3, 2, 1, 6, DeconvGeometry::new((3, 2), (1, 2))),
            (2, 1, 3, 12, DeconvGeometry::new((2, 4), (2, 2))),
            (4, 3, 2, 3, DeconvGeometry::new((3, 3), (2, 1))),
        ] {
            let (oh, ow) = geom.output_size(h, wd);
            let x = random4(&mut rng, (2, c_in, h, wd));
            let y = random4(&mut rng, (2, c_out, oh, ow));
            let w = random4(&mut rng, (c_in, c_out, geom.kernel.0, geom.kernel.1));
            let zero_bias = Array1::<f64>::zeros(c_out);
            let dx = deconv2d_forward(&x.view(), &w.view(), &zero_bias.view(), &geom).unwrap();
            let cy = naive_conv(&y, &w, &geom, h, wd);
            let lhs: f64 = (&dx * &y).sum();
            let rhs: f64 = (&x * &cy).sum();
            assert_close(lhs, rhs, 1e-10);

            // the input gradient of the deconvolution is that same convolution
            let grads = deconv2d_backward(&x.view(), &w.view(), &y.view(), &geom, true);
            let gi = grads.input.unwrap();
            assert!(gi.iter().zip(cy.iter()).all(|(a, b)| (a - b).abs() < 1e-10));
        }
    }
}
