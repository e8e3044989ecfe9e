//! Square-image convolution by im2col + GEMM, and its adjoint.

use crate::scalar::Scalar;

/// A k x k convolution with zero padding k/2. Weights are `[cout, cin, k, k]`,
/// indices point into the model's parameter list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Conv {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub weight: usize,
    pub bias: usize,
}

impl Conv {
    pub fn out_side(&self, side: usize) -> usize {
        (side + 2 * (self.k / 2) - self.k) / self.stride + 1
    }

    pub fn fan_in(&self) -> usize {
        self.cin * self.k * self.k
    }
}

/// Unfolds `x` (`[cin, side, side]`) into `[cin*k*k, out*out]`.
pub(crate) fn im2col<T: Scalar>(x: &[T], conv: &Conv, side: usize, col: &mut Vec<T>) {
    let (k, s, pad) = (conv.k, conv.stride, (conv.k / 2) as isize);
    let out = conv.out_side(side);
    let n = out * out;
    col.clear();
    col.resize(conv.fan_in() * n, T::zero());
    for ci in 0..conv.cin {
        let plane = &x[ci * side * side..(ci + 1) * side * side];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * n..][..n];
                for oy in 0..out {
                    let iy = (oy * s + ky) as isize - pad;
                    if iy < 0 || iy >= side as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * side..][..side];
                    let dst = &mut row[oy * out..][..out];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * s + kx) as isize - pad;
                        if ix >= 0 && ix < side as isize {
                            *d = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Adds the folded `col` back onto `dx` (the adjoint of [`im2col`]).
pub(crate) fn col2im<T: Scalar>(col: &[T], conv: &Conv, side: usize, dx: &mut [T]) {
    let (k, s, pad) = (conv.k, conv.stride, (conv.k / 2) as isize);
    let out = conv.out_side(side);
    let n = out * out;
    for ci in 0..conv.cin {
        let plane = &mut dx[ci * side * side..(ci + 1) * side * side];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((ci * k + ky) * k + kx) * n..][..n];
                for oy in 0..out {
                    let iy = (oy * s + ky) as isize - pad;
                    if iy < 0 || iy >= side as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * side..][..side];
                    for (ox, &g) in row[oy * out..][..out].iter().enumerate() {
                        let ix = (ox * s + kx) as isize - pad;
                        if ix >= 0 && ix < side as isize {
                            dst[ix as usize] += g;
                        }
                    }
                }
            }
        }
    }
}

/// `out = conv(x) + bias` (overwrites `out`, `[cout, out_side^2]`).
pub(crate) fn conv_forward<T: Scalar>(
    x: &[T],
    side: usize,
    conv: &Conv,
    weight: &[T],
    bias: &[T],
    col: &mut Vec<T>,
    out: &mut [T],
) {
    im2col(x, conv, side, col);
    let n = conv.out_side(side).pow(2);
    for (co, chunk) in out.chunks_mut(n).enumerate() {
        chunk.fill(bias[co]);
    }
    T::gemm(conv.cout, conv.fan_in(), n, T::one(), weight, false, col, false, T::one(), out);
}

/// Accumulates weight and bias gradients, and input gradients when `dx` is given.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<T: Scalar>(
    x: &[T],
    side: usize,
    conv: &Conv,
    weight: &[T],
    dout: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
    dx: Option<&mut [T]>,
    col: &mut Vec<T>,
) {
    let n = conv.out_side(side).pow(2);
    im2col(x, conv, side, col);
    T::gemm(conv.cout, n, conv.fan_in(), T::one(), dout, false, col, true, T::one(), dweight);
    for (co, chunk) in dout.chunks(n).enumerate() {
        dbias[co] += chunk.iter().copied().sum::<T>();
    }
    if let Some(dx) = dx {
        // reuse the column buffer for W^T * dout
        T::gemm(conv.fan_in(), conv.cout, n, T::one(), weight, true, dout, false, T::zero(), col);
        col2im(col, conv, side, dx);
    }
}
