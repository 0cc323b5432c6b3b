//! Raw loops behind the graph ops. All buffers are row-major.

use super::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvDims {
    pub batch: usize,
    pub c_in: usize,
    pub len: usize,
    pub c_out: usize,
    pub kernel: usize,
}

impl ConvDims {
    pub fn out_len(&self) -> usize {
        self.len - self.kernel + 1
    }

    /// Validates input `[B, C_in, L]` (or `[C_in, L]`), kernels
    /// `[C_out, C_in, K]` and bias `[C_out]`.
    pub fn infer(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Self> {
        let (batch, c_in, len) = match *input.shape() {
            [c, l] => (1, c, l),
            [b, c, l] => (b, c, l),
            _ => {
                return Err(Error::Shape(format!(
                    "conv1d input must be [C, L] or [B, C, L], got {:?}",
                    input.shape()
                )))
            }
        };
        let [c_out, kc_in, kernel] = *kernels.shape() else {
            return Err(Error::Shape(format!(
                "conv1d kernels must be [C_out, C_in, K], got {:?}",
                kernels.shape()
            )));
        };
        if kc_in != c_in {
            return Err(Error::Shape(format!(
                "conv1d input has {c_in} channels, kernels expect {kc_in}"
            )));
        }
        if kernel == 0 || kernel > len {
            return Err(Error::Shape(format!(
                "conv1d kernel size {kernel} exceeds input length {len}"
            )));
        }
        if bias.shape() != [c_out] {
            return Err(Error::Shape(format!(
                "conv1d bias must be [{c_out}], got {:?}",
                bias.shape()
            )));
        }
        Ok(Self {
            batch,
            c_in,
            len,
            c_out,
            kernel,
        })
    }
}

pub(crate) fn conv1d_forward(d: ConvDims, x: &[f64], w: &[f64], bias: &[f64]) -> Vec<f64> {
    let lo = d.out_len();
    let mut out = vec![0.0; d.batch * d.c_out * lo];
    for b in 0..d.batch {
        for o in 0..d.c_out {
            let orow = &mut out[(b * d.c_out + o) * lo..][..lo];
            orow.fill(bias[o]);
            for c in 0..d.c_in {
                let xrow = &x[(b * d.c_in + c) * d.len..][..d.len];
                let wrow = &w[(o * d.c_in + c) * d.kernel..][..d.kernel];
                for (k, &wv) in wrow.iter().enumerate() {
                    for (acc, &xv) in orow.iter_mut().zip(&xrow[k..k + lo]) {
                        *acc += wv * xv;
                    }
                }
            }
        }
    }
    out
}

/// Accumulates input, kernel and bias gradients for one conv1d.
pub(crate) fn conv1d_backward(
    d: ConvDims,
    x: &[f64],
    w: &[f64],
    gout: &[f64],
    gx: Option<&mut [f64]>,
    gw: Option<&mut [f64]>,
    gb: Option<&mut [f64]>,
) {
    let lo = d.out_len();
    if let Some(gb) = gb {
        for b in 0..d.batch {
            for (o, g) in gb.iter_mut().enumerate() {
                *g += gout[(b * d.c_out + o) * lo..][..lo].iter().sum::<f64>();
            }
        }
    }
    if let Some(gw) = gw {
        for b in 0..d.batch {
            for o in 0..d.c_out {
                let grow = &gout[(b * d.c_out + o) * lo..][..lo];
                for c in 0..d.c_in {
                    let xrow = &x[(b * d.c_in + c) * d.len..][..d.len];
                    let gwrow = &mut gw[(o * d.c_in + c) * d.kernel..][..d.kernel];
                    for (k, g) in gwrow.iter_mut().enumerate() {
                        *g += dot(grow, &xrow[k..k + lo]);
                    }
                }
            }
        }
    }
    if let Some(gx) = gx {
        for b in 0..d.batch {
            for o in 0..d.c_out {
                let grow = &gout[(b * d.c_out + o) * lo..][..lo];
                for c in 0..d.c_in {
                    let gxrow = &mut gx[(b * d.c_in + c) * d.len..][..d.len];
                    let wrow = &w[(o * d.c_in + c) * d.kernel..][..d.kernel];
                    for (k, &wv) in wrow.iter().enumerate() {
                        for (acc, &gv) in gxrow[k..k + lo].iter_mut().zip(grow) {
                            *acc += wv * gv;
                        }
                    }
                }
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four partial sums let the compiler keep independent accumulators.
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for j in 0..4 {
            acc[j] += a[4 * i + j] * b[4 * i + j];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `a [n, d] · b[m, d]^T -> [n, m]`
pub(crate) fn matmul_t(a: &[f64], b: &[f64], n: usize, m: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let ar = &a[i * d..][..d];
        for j in 0..m {
            out[i * m + j] = dot(ar, &b[j * d..][..d]);
        }
    }
    out
}

/// `out[n, d] += g[n, m] · b[m, d]`
pub(crate) fn matmul_acc(g: &[f64], b: &[f64], out: &mut [f64], n: usize, m: usize, d: usize) {
    for i in 0..n {
        let orow = &mut out[i * d..][..d];
        for j in 0..m {
            let gv = g[i * m + j];
            if gv == 0.0 {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(&b[j * d..][..d]) {
                *o += gv * bv;
            }
        }
    }
}

/// `out[m, d] += g[n, m]^T · a[n, d]`
pub(crate) fn matmul_t_acc(g: &[f64], a: &[f64], out: &mut [f64], n: usize, m: usize, d: usize) {
    for i in 0..n {
        let arow = &a[i * d..][..d];
        for j in 0..m {
            let gv = g[i * m + j];
            if gv == 0.0 {
                continue;
            }
            for (o, &av) in out[j * d..][..d].iter_mut().zip(arow) {
                *o += gv * av;
            }
        }
    }
}

/// Valid (unpadded), stride-1 1-D convolution.
///
/// Accepts `[C_in, L]` or batched `[B, C_in, L]` input, kernels
/// `[C_out, C_in, K]` and bias `[C_out]`; returns `[C_out, L-K+1]`
/// (respectively `[B, C_out, L-K+1]`).
pub fn conv1d(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let d = ConvDims::infer(input, kernels, bias)?;
    let out = conv1d_forward(d, input.data(), kernels.data(), bias.data());
    let shape = if input.ndim() == 2 {
        vec![d.c_out, d.out_len()]
    } else {
        vec![d.batch, d.c_out, d.out_len()]
    };
    Tensor::new(shape, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor) -> Vec<Vec<f64>> {
        let (c_in, l) = (x.shape()[0], x.shape()[1]);
        let (c_out, k) = (w.shape()[0], w.shape()[2]);
        let mut out = vec![vec![0.0; l - k + 1]; c_out];
        for o in 0..c_out {
            for t in 0..l - k + 1 {
                let mut s = b.data()[o];
                for c in 0..c_in {
                    for kk in 0..k {
                        s += x.get(&[c, t + kk]) * w.get(&[o, c, kk]);
                    }
                }
                out[o][t] = s;
            }
        }
        out
    }

    #[test]
    fn identity_kernel() {
        let x = Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let w = Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap();
        let b = Tensor::vector(vec![0.0]);
        let y = conv1d(&x, &w, &b).unwrap();
        assert_eq!(y.shape(), &[1, 3]);
        assert_eq!(y.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn sum_kernel() {
        let x = Tensor::new(vec![1, 4], vec![1.0; 4]).unwrap();
        let w = Tensor::new(vec![1, 1, 2], vec![1.0, 1.0]).unwrap();
        let b = Tensor::vector(vec![0.0]);
        assert_eq!(conv1d(&x, &w, &b).unwrap().data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn matches_naive_loop() {
        let mut r = rng::stream(7, 0);
        let x = Tensor::uniform(&[2, 20], -1.0, 1.0, &mut r);
        let w = Tensor::uniform(&[3, 2, 5], -1.0, 1.0, &mut r);
        let b = Tensor::uniform(&[3], -1.0, 1.0, &mut r);
        let y = conv1d(&x, &w, &b).unwrap();
        let expect = naive_conv(&x, &w, &b);
        assert_eq!(y.shape(), &[3, 16]);
        for o in 0..3 {
            for t in 0..16 {
                assert!((y.get(&[o, t]) - expect[o][t]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let x = Tensor::zeros(&[2, 4]);
        let b = Tensor::zeros(&[1]);
        assert!(matches!(
            conv1d(&x, &Tensor::zeros(&[1, 3, 2]), &b),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            conv1d(&x, &Tensor::zeros(&[1, 2, 5]), &b),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn batched_equals_per_sample() {
        let mut r = rng::stream(3, 1);
        let x = Tensor::uniform(&[4, 2, 11], -1.0, 1.0, &mut r);
        let w = Tensor::uniform(&[3, 2, 4], -1.0, 1.0, &mut r);
        let b = Tensor::uniform(&[3], -1.0, 1.0, &mut r);
        let y = conv1d(&x, &w, &b).unwrap();
        for i in 0..4 {
            let xi = Tensor::new(vec![2, 11], x.data()[i * 22..(i + 1) * 22].to_vec()).unwrap();
            let yi = conv1d(&xi, &w, &b).unwrap();
            assert_eq!(&y.data()[i * 24..(i + 1) * 24], yi.data());
        }
    }

    #[test]
    fn dot_handles_remainders() {
        let a: Vec<f64> = (0..7).map(f64::from).collect();
        assert_eq!(dot(&a, &a), 91.0);
    }
}
