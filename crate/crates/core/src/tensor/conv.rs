//! im2col + GEMM kernels behind the `conv2d` tape primitive.

use super::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeometry {
    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn out_pixels(&self) -> usize {
        self.out_height * self.out_width
    }

    fn in_plane(&self) -> usize {
        self.in_channels * self.height * self.width
    }
}

/// Output columns `ox` whose input column `ox * stride + kx - padding` lies
/// inside `[0, width)`.
fn valid_columns(g: &ConvGeometry, kx: usize) -> (usize, usize) {
    let lo = g.padding.saturating_sub(kx).div_ceil(g.stride);
    let hi = (g.width + g.padding).saturating_sub(kx).div_ceil(g.stride);
    (lo.min(g.out_width), hi.min(g.out_width).max(lo.min(g.out_width)))
}

fn im2col<T: Real>(g: &ConvGeometry, input: &[T], col: &mut [T]) {
    let k = g.kernel;
    let p = g.out_pixels();
    for c in 0..g.in_channels {
        let plane = &input[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut col[row * p..(row + 1) * p];
                let (lo, hi) = valid_columns(g, kx);
                for oy in 0..g.out_height {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    let line = &mut dst[oy * g.out_width..(oy + 1) * g.out_width];
                    if iy < 0 || iy >= g.height as isize || lo == hi {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    line[..lo].fill(T::zero());
                    line[hi..].fill(T::zero());
                    let first = lo * g.stride + kx - g.padding;
                    if g.stride == 1 {
                        line[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                    } else {
                        for (i, slot) in line[lo..hi].iter_mut().enumerate() {
                            *slot = src[first + i * g.stride];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(g: &ConvGeometry, col: &[T], grad_input: &mut [T]) {
    let k = g.kernel;
    let p = g.out_pixels();
    for c in 0..g.in_channels {
        let plane = &mut grad_input[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &col[row * p..(row + 1) * p];
                let (lo, hi) = valid_columns(g, kx);
                if lo == hi {
                    continue;
                }
                let first = lo * g.stride + kx - g.padding;
                for oy in 0..g.out_height {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    let line = &src[oy * g.out_width + lo..oy * g.out_width + hi];
                    if g.stride == 1 {
                        for (d, &v) in dst[first..first + hi - lo].iter_mut().zip(line) {
                            *d += v;
                        }
                    } else {
                        for (i, &v) in line.iter().enumerate() {
                            dst[first + i * g.stride] += v;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn forward<T: Real>(g: &ConvGeometry, input: &[T], weight: &[T], bias: &[T]) -> Vec<T> {
    let p = g.out_pixels();
    let kk = g.patch_len();
    let mut out = vec![T::zero(); g.batch * g.out_channels * p];
    let mut col = vec![T::zero(); kk * p];
    for n in 0..g.batch {
        im2col(g, &input[n * g.in_plane()..(n + 1) * g.in_plane()], &mut col);
        let dst = &mut out[n * g.out_channels * p..(n + 1) * g.out_channels * p];
        for (oc, row) in dst.chunks_mut(p).enumerate() {
            row.fill(bias[oc]);
        }
        // dst^T = col^T * weight^T; this orientation packs faster than dst = weight * col.
        // SAFETY: col^T is p x kk, weight^T is kk x out_channels, dst^T is p x out_channels.
        unsafe {
            T::gemm(
                p,
                kk,
                g.out_channels,
                T::one(),
                col.as_ptr(),
                1,
                p as isize,
                weight.as_ptr(),
                1,
                kk as isize,
                T::one(),
                dst.as_mut_ptr(),
                1,
                p as isize,
            );
        }
    }
    out
}

pub(crate) struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub weight: Option<Vec<T>>,
    pub bias: Option<Vec<T>>,
}

pub(crate) fn backward<T: Real>(
    g: &ConvGeometry,
    input: &[T],
    weight: &[T],
    grad_out: &[T],
    need: [bool; 3],
) -> ConvGrads<T> {
    let p = g.out_pixels();
    let kk = g.patch_len();
    let [need_input, need_weight, need_bias] = need;
    let mut grad_input = need_input.then(|| vec![T::zero(); input.len()]);
    let mut grad_weight = need_weight.then(|| vec![T::zero(); weight.len()]);
    let grad_bias = need_bias.then(|| {
        (0..g.out_channels)
            .map(|oc| {
                let mut acc = 0.0f64;
                for n in 0..g.batch {
                    let base = (n * g.out_channels + oc) * p;
                    acc += grad_out[base..base + p].iter().map(|v| v.as_f64()).sum::<f64>();
                }
                T::from_f64_lossy(acc)
            })
            .collect()
    });

    let mut col = vec![T::zero(); kk * p];
    for n in 0..g.batch {
        let dy = &grad_out[n * g.out_channels * p..(n + 1) * g.out_channels * p];
        if let Some(gw) = grad_weight.as_mut() {
            im2col(g, &input[n * g.in_plane()..(n + 1) * g.in_plane()], &mut col);
            // SAFETY: dy is out_channels x p, col^T is p x kk, gw is out_channels x kk.
            unsafe {
                T::gemm(
                    g.out_channels,
                    p,
                    kk,
                    T::one(),
                    dy.as_ptr(),
                    p as isize,
                    1,
                    col.as_ptr(),
                    1,
                    p as isize,
                    T::one(),
                    gw.as_mut_ptr(),
                    kk as isize,
                    1,
                );
            }
        }
        if let Some(gi) = grad_input.as_mut() {
            // SAFETY: weight^T is kk x out_channels, dy is out_channels x p, col is kk x p.
            unsafe {
                T::gemm(
                    kk,
                    g.out_channels,
                    p,
                    T::one(),
                    weight.as_ptr(),
                    1,
                    kk as isize,
                    dy.as_ptr(),
                    p as isize,
                    1,
                    T::zero(),
                    col.as_mut_ptr(),
                    p as isize,
                    1,
                );
            }
            col2im(g, &col, &mut gi[n * g.in_plane()..(n + 1) * g.in_plane()]);
        }
    }
    ConvGrads {
        input: grad_input,
        weight: grad_weight,
        bias: grad_bias,
    }
}
