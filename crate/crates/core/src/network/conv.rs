//! Strided "same" convolution and its adjoint on NCHW batches.
//!
//! Both directions share one [`Geometry`] between a large grid (convolution
//! input, transposed-convolution output) and a small grid. Kernels are stored
//! `[small_channel][large_channel][kh][kw]`, so a transposed convolution with
//! kernel `K` is exactly the adjoint of the convolution with the same `K`.

/// Spatial relation between the large and small grids of one layer.
#[derive(Debug, Clone)]
pub(crate) struct Geometry {
    pub large: (usize, usize),
    pub small: (usize, usize),
    pub kernel: (usize, usize),
    /// `(small_index, large_index, kernel_index)` for every in-bounds tap.
    taps: Vec<(usize, usize, usize)>,
}

/// Output extent and leading padding of a "same" strided convolution.
pub(crate) fn same_padding(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(input);
    (out, total / 2)
}

impl Geometry {
    pub fn new(large: (usize, usize), kernel: (usize, usize), stride: usize) -> Self {
        let (oh, pad_top) = same_padding(large.0, kernel.0, stride);
        let (ow, pad_left) = same_padding(large.1, kernel.1, stride);
        let mut taps = Vec::with_capacity(oh * ow * kernel.0 * kernel.1);
        for y in 0..oh {
            for x in 0..ow {
                for ky in 0..kernel.0 {
                    let Some(iy) = (y * stride + ky).checked_sub(pad_top) else {
                        continue;
                    };
                    if iy >= large.0 {
                        continue;
                    }
                    for kx in 0..kernel.1 {
                        let Some(ix) = (x * stride + kx).checked_sub(pad_left) else {
                            continue;
                        };
                        if ix >= large.1 {
                            continue;
                        }
                        taps.push((y * ow + x, iy * large.1 + ix, ky * kernel.1 + kx));
                    }
                }
            }
        }
        Self {
            large,
            small: (oh, ow),
            kernel,
            taps,
        }
    }

    pub fn large_len(&self) -> usize {
        self.large.0 * self.large.1
    }

    pub fn small_len(&self) -> usize {
        self.small.0 * self.small.1
    }

    pub fn kernel_len(&self) -> usize {
        self.kernel.0 * self.kernel.1
    }
}

/// Channel counts and batch size for one layer application.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Channels {
    pub batch: usize,
    pub small: usize,
    pub large: usize,
}

/// Large → small: `out[s][o] = bias[o] + Σ_c K[o][c] ⋆ in[s][c]`.
pub(crate) fn conv_forward(
    g: &Geometry,
    ch: Channels,
    input: &[f64],
    kernel: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let (ll, sl, kl) = (g.large_len(), g.small_len(), g.kernel_len());
    let mut out = vec![0.0; ch.batch * ch.small * sl];
    for s in 0..ch.batch {
        for o in 0..ch.small {
            let dst = &mut out[(s * ch.small + o) * sl..][..sl];
            dst.fill(bias[o]);
            for c in 0..ch.large {
                let src = &input[(s * ch.large + c) * ll..][..ll];
                let k = &kernel[(o * ch.large + c) * kl..][..kl];
                for &(si, li, ki) in &g.taps {
                    dst[si] += k[ki] * src[li];
                }
            }
        }
    }
    out
}

/// Gradients of [`conv_forward`] given the upstream gradient on its output.
/// Returns `(d_input, d_kernel, d_bias)`.
pub(crate) fn conv_backward(
    g: &Geometry,
    ch: Channels,
    input: &[f64],
    kernel: &[f64],
    d_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (ll, sl, kl) = (g.large_len(), g.small_len(), g.kernel_len());
    let mut d_input = vec![0.0; input.len()];
    let mut d_kernel = vec![0.0; kernel.len()];
    let mut d_bias = vec![0.0; ch.small];
    for s in 0..ch.batch {
        for o in 0..ch.small {
            let up = &d_out[(s * ch.small + o) * sl..][..sl];
            d_bias[o] += up.iter().sum::<f64>();
            for c in 0..ch.large {
                let src = &input[(s * ch.large + c) * ll..][..ll];
                let k = &kernel[(o * ch.large + c) * kl..][..kl];
                let dk = &mut d_kernel[(o * ch.large + c) * kl..][..kl];
                let di = &mut d_input[(s * ch.large + c) * ll..][..ll];
                for &(si, li, ki) in &g.taps {
                    dk[ki] += up[si] * src[li];
                    di[li] += up[si] * k[ki];
                }
            }
        }
    }
    (d_input, d_kernel, d_bias)
}

/// Small → large, the adjoint of [`conv_forward`] plus a bias on the large
/// channels.
pub(crate) fn deconv_forward(
    g: &Geometry,
    ch: Channels,
    input: &[f64],
    kernel: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let (ll, sl, kl) = (g.large_len(), g.small_len(), g.kernel_len());
    let mut out = vec![0.0; ch.batch * ch.large * ll];
    for s in 0..ch.batch {
        for c in 0..ch.large {
            let dst = &mut out[(s * ch.large + c) * ll..][..ll];
            dst.fill(bias[c]);
            for o in 0..ch.small {
                let src = &input[(s * ch.small + o) * sl..][..sl];
                let k = &kernel[(o * ch.large + c) * kl..][..kl];
                for &(si, li, ki) in &g.taps {
                    dst[li] += k[ki] * src[si];
                }
            }
        }
    }
    out
}

/// Gradients of [`deconv_forward`]. Returns `(d_input, d_kernel, d_bias)`.
pub(crate) fn deconv_backward(
    g: &Geometry,
    ch: Channels,
    input: &[f64],
    kernel: &[f64],
    d_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (ll, sl, kl) = (g.large_len(), g.small_len(), g.kernel_len());
    let mut d_input = vec![0.0; input.len()];
    let mut d_kernel = vec![0.0; kernel.len()];
    let mut d_bias = vec![0.0; ch.large];
    for s in 0..ch.batch {
        for c in 0..ch.large {
            let up = &d_out[(s * ch.large + c) * ll..][..ll];
            d_bias[c] += up.iter().sum::<f64>();
            for o in 0..ch.small {
                let src = &input[(s * ch.small + o) * sl..][..sl];
                let k = &kernel[(o * ch.large + c) * kl..][..kl];
                let dk = &mut d_kernel[(o * ch.large + c) * kl..][..kl];
                let di = &mut d_input[(s * ch.small + o) * sl..][..sl];
                for &(si, li, ki) in &g.taps {
                    dk[ki] += up[li] * src[si];
                    di[si] += up[li] * k[ki];
                }
            }
        }
    }
    (d_input, d_kernel, d_bias)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RngSeed;
    use rand::Rng;

    fn random(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = RngSeed(seed).rng();
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn same_padding_matches_ceil_rule() {
        assert_eq!(same_padding(32, 3, 2), (16, 0));
        assert_eq!(same_padding(4, 3, 2), (2, 0));
        assert_eq!(same_padding(5, 3, 2), (3, 1));
        assert_eq!(same_padding(48, 5, 2), (24, 1));
        assert_eq!(same_padding(21, 3, 2), (11, 1));
        assert_eq!(same_padding(7, 5, 2), (4, 2));
    }

    /// Direct evaluation of a strided, zero-padded cross-correlation on a
    /// single channel.
    fn direct_conv(
        x: &[f64],
        (h, w): (usize, usize),
        k: &[f64],
        (kh, kw): (usize, usize),
        stride: usize,
    ) -> Vec<f64> {
        let oh = h.div_ceil(stride);
        let ow = w.div_ceil(stride);
        let pt = ((oh - 1) * stride + kh).saturating_sub(h) / 2;
        let pl = ((ow - 1) * stride + kw).saturating_sub(w) / 2;
        let mut out = vec![0.0; oh * ow];
        for y in 0..oh {
            for xo in 0..ow {
                let mut acc = 0.0;
                for a in 0..kh {
                    for b in 0..kw {
                        let iy = (y * stride + a) as isize - pt as isize;
                        let ix = (xo * stride + b) as isize - pl as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                            acc += k[a * kw + b] * x[iy as usize * w + ix as usize];
                        }
                    }
                }
                out[y * ow + xo] = acc;
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_reference() {
        let x: Vec<f64> = (0..16).map(|v| v as f64 * 0.5 - 3.0).collect();
        let k = random(9, 1);
        let g = Geometry::new((4, 4), (3, 3), 2);
        let ch = Channels {
            batch: 1,
            small: 1,
            large: 1,
        };
        let got = conv_forward(&g, ch, &x, &k, &[0.25]);
        let want = direct_conv(&x, (4, 4), &k, (3, 3), 2);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - (b + 0.25)).abs() < 1e-14);
        }
        // An odd, non-square grid with a wider kernel.
        let x = random(35, 2);
        let k = random(15, 3);
        let g = Geometry::new((5, 7), (3, 5), 2);
        let got = conv_forward(&g, ch, &x, &k, &[0.0]);
        assert_eq!(got, direct_conv(&x, (5, 7), &k, (3, 5), 2));
    }

    /// Transposed convolution by zero insertion: dilate the input by the
    /// stride, pad, and cross-correlate with the spatially flipped kernel.
    fn zero_insertion_deconv(
        x: &[f64],
        (h, w): (usize, usize),
        k: &[f64],
        (kh, kw): (usize, usize),
        (th, tw): (usize, usize),
    ) -> Vec<f64> {
        let pt = ((h - 1) * 2 + kh).saturating_sub(th) / 2;
        let pl = ((w - 1) * 2 + kw).saturating_sub(tw) / 2;
        // Dilated grid with a (k − 1 − pad) border on the leading side.
        let lead_y = kh - 1 - pt;
        let lead_x = kw - 1 - pl;
        let dh = th + kh - 1;
        let dw = tw + kw - 1;
        let mut dilated = vec![0.0; dh * dw];
        for y in 0..h {
            for xo in 0..w {
                let yy = lead_y + 2 * y;
                let xx = lead_x + 2 * xo;
                if yy < dh && xx < dw {
                    dilated[yy * dw + xx] = x[y * w + xo];
                }
            }
        }
        let mut out = vec![0.0; th * tw];
        for y in 0..th {
            for xo in 0..tw {
                let mut acc = 0.0;
                for a in 0..kh {
                    for b in 0..kw {
                        acc += k[(kh - 1 - a) * kw + (kw - 1 - b)] * dilated[(y + a) * dw + xo + b];
                    }
                }
                out[y * tw + xo] = acc;
            }
        }
        out
    }

    #[test]
    fn deconv_matches_zero_insertion_reference() {
        let ch = Channels {
            batch: 1,
            small: 1,
            large: 1,
        };
        for (large, kernel) in [((4, 4), (3, 3)), ((5, 7), (3, 5)), ((8, 6), (5, 5))] {
            let g = Geometry::new(large, kernel, 2);
            let x = random(g.small_len(), 4);
            let k = random(g.kernel_len(), 5);
            let got = deconv_forward(&g, ch, &x, &k, &[0.0]);
            let want = zero_insertion_deconv(&x, g.small, &k, kernel, large);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-14, "{large:?} {kernel:?}");
            }
        }
    }

    #[test]
    fn deconv_is_the_adjoint_of_conv() {
        let g = Geometry::new((9, 6), (3, 3), 2);
        let ch = Channels {
            batch: 2,
            small: 3,
            large: 2,
        };
        let x = random(ch.batch * ch.large * g.large_len(), 6);
        let y = random(ch.batch * ch.small * g.small_len(), 7);
        let k = random(ch.small * ch.large * g.kernel_len(), 8);
        let zero_s = vec![0.0; ch.small];
        let zero_l = vec![0.0; ch.large];
        let ax = conv_forward(&g, ch, &x, &k, &zero_s);
        let aty = deconv_forward(&g, ch, &y, &k, &zero_l);
        let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn backward_passes_match_finite_differences() {
        let g = Geometry::new((5, 4), (3, 3), 2);
        let ch = Channels {
            batch: 2,
            small: 2,
            large: 3,
        };
        let x = random(ch.batch * ch.large * g.large_len(), 9);
        let k = random(ch.small * ch.large * g.kernel_len(), 10);
        let bs = random(ch.small, 11);
        let bl = random(ch.large, 12);
        let ws = random(ch.batch * ch.small * g.small_len(), 13);
        let wl = random(ch.batch * ch.large * g.large_len(), 14);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        let h = 1e-6;

        // Conv: loss = <w, conv(x)>.
        let (dx, dk, db) = conv_backward(&g, ch, &x, &k, &ws);
        let f = |x: &[f64], k: &[f64], b: &[f64]| dot(&ws, &conv_forward(&g, ch, x, k, b));
        for (i, &d) in dx.iter().enumerate() {
            let (mut p, mut m) = (x.clone(), x.clone());
            p[i] += h;
            m[i] -= h;
            assert!(((f(&p, &k, &bs) - f(&m, &k, &bs)) / (2.0 * h) - d).abs() < 1e-8);
        }
        for (i, &d) in dk.iter().enumerate() {
            let (mut p, mut m) = (k.clone(), k.clone());
            p[i] += h;
            m[i] -= h;
            assert!(((f(&x, &p, &bs) - f(&x, &m, &bs)) / (2.0 * h) - d).abs() < 1e-8);
        }
        for (i, &d) in db.iter().enumerate() {
            let (mut p, mut m) = (bs.clone(), bs.clone());
            p[i] += h;
            m[i] -= h;
            assert!(((f(&x, &k, &p) - f(&x, &k, &m)) / (2.0 * h) - d).abs() < 1e-8);
        }

        // Transposed conv: loss = <w, deconv(y)>.
        let y = random(ch.batch * ch.small * g.small_len(), 15);
        let (dy, dk, db) = deconv_backward(&g, ch, &y, &k, &wl);
        let f = |y: &[f64], k: &[f64], b: &[f64]| dot(&wl, &deconv_forward(&g, ch, y, k, b));
        for (i, &d) in dy.iter().enumerate() {
            let (mut p, mut m) = (y.clone(), y.clone());
            p[i] += h;
            m[i] -= h;
            assert!(((f(&p, &k, &bl) - f(&m, &k, &bl)) / (2.0 * h) - d).abs() < 1e-8);
        }
        for (i, &d) in dk.iter().enumerate() {
            let (mut p, mut m) = (k.clone(), k.clone());
            p[i] += h;
            m[i] -= h;
            assert!(((f(&y, &p, &bl) - f(&y, &m, &bl)) / (2.0 * h) - d).abs() < 1e-8);
        }
        for (i, &d) in db.iter().enumerate() {
            let (mut p, mut m) = (bl.clone(), bl.clone());
            p[i] += h;
            m[i] -= h;
            assert!(((f(&y, &k, &p) - f(&y, &k, &m)) / (2.0 * h) - d).abs() < 1e-8);
        }
    }
}
