//! Raw numeric kernels on flat slices. Inner loops are unit-stride so
//! the compiler can vectorize them; the tape dispatches into these for
//! both forward and backward passes.

use super::Scalar;

/// out += a[m x k] . b[k x n]
pub fn matmul_acc<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize, out: &mut [S]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + a_ip * bv;
            }
        }
    }
}

/// out += a[m x k] . b[n x k]^T  (i.e. rows of `b` are the columns)
pub fn matmul_abt_acc<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize, out: &mut [S]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = S::zero();
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc = acc + av * bv;
            }
            *o = *o + acc;
        }
    }
}

/// out += a[k x m]^T . b[k x n]
pub fn matmul_atb_acc<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize, out: &mut [S]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for p in 0..k {
        let a_row = &a[p * m..(p + 1) * m];
        let b_row = &b[p * n..(p + 1) * n];
        for (i, &a_pi) in a_row.iter().enumerate() {
            let out_row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + a_pi * bv;
            }
        }
    }
}

/// Numerically stabilized softmax over each row of a [rows x cols] matrix.
pub fn softmax_rows<S: Scalar>(x: &[S], rows: usize, cols: usize, out: &mut [S]) {
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let out_row = &mut out[r * cols..(r + 1) * cols];
        let mut mx = row[0];
        for &v in row.iter() {
            if v > mx {
                mx = v;
            }
        }
        let mut sum = S::zero();
        for (o, &v) in out_row.iter_mut().zip(row) {
            let e = (v - mx).exp();
            *o = e;
            sum = sum + e;
        }
        let inv = S::one() / sum;
        for o in out_row.iter_mut() {
            *o = *o * inv;
        }
    }
}

/// d_x += softmax backward given the forward output `y` and upstream `g`.
pub fn softmax_rows_backward<S: Scalar>(
    y: &[S],
    g: &[S],
    rows: usize,
    cols: usize,
    d_x: &mut [S],
) {
    for r in 0..rows {
        let yr = &y[r * cols..(r + 1) * cols];
        let gr = &g[r * cols..(r + 1) * cols];
        let mut dot = S::zero();
        for (&yv, &gv) in yr.iter().zip(gr) {
            dot = dot + yv * gv;
        }
        let dr = &mut d_x[r * cols..(r + 1) * cols];
        for ((d, &yv), &gv) in dr.iter_mut().zip(yr).zip(gr) {
            *d = *d + yv * (gv - dot);
        }
    }
}

/// Layer norm over the last axis: rows of length `d`, eps-regularized,
/// then gamma * xhat + beta.
pub fn layer_norm<S: Scalar>(x: &[S], gamma: &[S], beta: &[S], d: usize, eps: S, out: &mut [S]) {
    let rows = x.len() / d;
    let inv_d = S::one() / super::s::<S>(d as f64);
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let or = &mut out[r * d..(r + 1) * d];
        let mut mean = S::zero();
        for &v in xr.iter() {
            mean = mean + v;
        }
        mean = mean * inv_d;
        let mut var = S::zero();
        for &v in xr.iter() {
            let c = v - mean;
            var = var + c * c;
        }
        var = var * inv_d;
        let rstd = S::one() / (var + eps).sqrt();
        for ((o, &v), (&g, &b)) in or.iter_mut().zip(xr).zip(gamma.iter().zip(beta)) {
            *o = (v - mean) * rstd * g + b;
        }
    }
}

/// Layer-norm backward. Accumulates into d_x, d_gamma, d_beta.
#[allow(clippy::too_many_arguments)]
pub fn layer_norm_backward<S: Scalar>(
    x: &[S],
    gamma: &[S],
    d: usize,
    eps: S,
    g: &[S],
    d_x: &mut [S],
    d_gamma: &mut [S],
    d_beta: &mut [S],
) {
    let rows = x.len() / d;
    let inv_d = S::one() / super::s::<S>(d as f64);
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let gr = &g[r * d..(r + 1) * d];
        let mut mean = S::zero();
        for &v in xr.iter() {
            mean = mean + v;
        }
        mean = mean * inv_d;
        let mut var = S::zero();
        for &v in xr.iter() {
            let c = v - mean;
            var = var + c * c;
        }
        var = var * inv_d;
        let rstd = S::one() / (var + eps).sqrt();

        // gy = upstream * gamma; reduce the two row sums the formula needs
        let mut sum_gy = S::zero();
        let mut sum_gy_xhat = S::zero();
        for ((&xv, &gv), &ga) in xr.iter().zip(gr).zip(gamma) {
            let xhat = (xv - mean) * rstd;
            let gy = gv * ga;
            sum_gy = sum_gy + gy;
            sum_gy_xhat = sum_gy_xhat + gy * xhat;
        }
        for (i, ((&xv, &gv), &ga)) in xr.iter().zip(gr).zip(gamma).enumerate() {
            let xhat = (xv - mean) * rstd;
            let gy = gv * ga;
            d_x[r * d + i] =
                d_x[r * d + i] + rstd * (gy - inv_d * sum_gy - xhat * inv_d * sum_gy_xhat);
            d_gamma[i] = d_gamma[i] + gv * xhat;
            d_beta[i] = d_beta[i] + gv;
        }
    }
}

/// Temporal cross-correlation: input [c_in x t], kernels [c_out x c_in x k],
/// zero padding. out[c_out x t_out].
#[allow(clippy::too_many_arguments)]
pub fn conv1d<S: Scalar>(
    x: &[S],
    w: &[S],
    bias: &[S],
    c_in: usize,
    t: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
    t_out: usize,
    out: &mut [S],
) {
    for co in 0..c_out {
        let or = &mut out[co * t_out..(co + 1) * t_out];
        for o in or.iter_mut() {
            *o = bias[co];
        }
        for ci in 0..c_in {
            let xr = &x[ci * t..(ci + 1) * t];
            let wr = &w[(co * c_in + ci) * k..(co * c_in + ci + 1) * k];
            for (j, &wv) in wr.iter().enumerate() {
                for (to, o) in or.iter_mut().enumerate() {
                    let src = (to * stride + j) as isize - pad as isize;
                    if src >= 0 && (src as usize) < t {
                        *o = *o + wv * xr[src as usize];
                    }
                }
            }
        }
    }
}

/// conv1d backward: accumulates gradients for input, kernels and bias.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward<S: Scalar>(
    x: &[S],
    w: &[S],
    c_in: usize,
    t: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
    t_out: usize,
    g: &[S],
    d_x: &mut [S],
    d_w: &mut [S],
    d_bias: &mut [S],
) {
    for co in 0..c_out {
        let gr = &g[co * t_out..(co + 1) * t_out];
        let mut bsum = S::zero();
        for &gv in gr.iter() {
            bsum = bsum + gv;
        }
        d_bias[co] = d_bias[co] + bsum;
        for ci in 0..c_in {
            let xr = &x[ci * t..(ci + 1) * t];
            let wr = &w[(co * c_in + ci) * k..(co * c_in + ci + 1) * k];
            let dwr = &mut d_w[(co * c_in + ci) * k..(co * c_in + ci + 1) * k];
            for j in 0..k {
                let mut acc = S::zero();
                for (to, &gv) in gr.iter().enumerate() {
                    let src = (to * stride + j) as isize - pad as isize;
                    if src >= 0 && (src as usize) < t {
                        acc = acc + gv * xr[src as usize];
                        d_x[ci * t + src as usize] = d_x[ci * t + src as usize] + gv * wr[j];
                    }
                }
                dwr[j] = dwr[j] + acc;
            }
        }
    }
}

/// Unfold one image [c_in x h x w] into columns [(c_in*kh*kw) x (h_out*w_out)]
/// for a kh x kw kernel with the given stride and zero padding.
#[allow(clippy::too_many_arguments)]
pub fn im2col<S: Scalar>(
    x: &[S],
    c_in: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    h_out: usize,
    w_out: usize,
    col: &mut [S],
) {
    let l = h_out * w_out;
    debug_assert_eq!(col.len(), c_in * kh * kw * l);
    for ci in 0..c_in {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = &mut col[((ci * kh + ky) * kw + kx) * l..((ci * kh + ky) * kw + kx + 1) * l];
                for yo in 0..h_out {
                    let sy = (yo * stride + ky) as isize - pad as isize;
                    let dst = &mut row[yo * w_out..(yo + 1) * w_out];
                    if sy < 0 || sy as usize >= h {
                        for d in dst.iter_mut() {
                            *d = S::zero();
                        }
                        continue;
                    }
                    let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (xo, d) in dst.iter_mut().enumerate() {
                        let sx = (xo * stride + kx) as isize - pad as isize;
                        *d = if sx >= 0 && (sx as usize) < w {
                            src_row[sx as usize]
                        } else {
                            S::zero()
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add columns back to image space (adjoint of [`im2col`]).
#[allow(clippy::too_many_arguments)]
pub fn col2im_acc<S: Scalar>(
    col: &[S],
    c_in: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    h_out: usize,
    w_out: usize,
    d_x: &mut [S],
) {
    let l = h_out * w_out;
    for ci in 0..c_in {
        let plane = &mut d_x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = &col[((ci * kh + ky) * kw + kx) * l..((ci * kh + ky) * kw + kx + 1) * l];
                for yo in 0..h_out {
                    let sy = (yo * stride + ky) as isize - pad as isize;
                    if sy < 0 || sy as usize >= h {
                        continue;
                    }
                    let src = &row[yo * w_out..(yo + 1) * w_out];
                    for (xo, &v) in src.iter().enumerate() {
                        let sx = (xo * stride + kx) as isize - pad as isize;
                        if sx >= 0 && (sx as usize) < w {
                            plane[sy as usize * w + sx as usize] =
                                plane[sy as usize * w + sx as usize] + v;
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent triple-loop product used as the oracle for the fast kernel.
    fn matmul_naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for p in 0..k {
                    acc += a[i * k + p] * b[p * n + j];
                }
                c[i * n + j] = acc;
            }
        }
        c
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut out = vec![0.0; 4];
        matmul_acc(&a, &b, 2, 2, 2, &mut out);
        assert_eq!(out, matmul_naive(&a, &b, 2, 2, 2));
        assert_eq!(out, vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_variants_agree_with_explicit_transposes() {
        let mut rng = crate::rng::rng_from_seed(3);
        let (m, k, n) = (4, 5, 3);
        let a: Vec<f64> = (0..m * k).map(|_| crate::rng::uniform(&mut rng, -1.0, 1.0)).collect();
        let b: Vec<f64> = (0..k * n).map(|_| crate::rng::uniform(&mut rng, -1.0, 1.0)).collect();

        // a . b via abt with b pre-transposed
        let mut bt = vec![0.0; k * n];
        for p in 0..k {
            for j in 0..n {
                bt[j * k + p] = b[p * n + j];
            }
        }
        let mut c1 = vec![0.0; m * n];
        let mut c2 = vec![0.0; m * n];
        matmul_acc(&a, &b, m, k, n, &mut c1);
        matmul_abt_acc(&a, &bt, m, k, n, &mut c2);
        for (x, y) in c1.iter().zip(&c2) {
            assert!((x - y).abs() < 1e-12);
        }

        // a . b via atb with a pre-transposed
        let mut at = vec![0.0; m * k];
        for i in 0..m {
            for p in 0..k {
                at[p * m + i] = a[i * k + p];
            }
        }
        let mut c3 = vec![0.0; m * n];
        matmul_atb_acc(&at, &b, m, k, n, &mut c3);
        for (x, y) in c1.iter().zip(&c3) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_row_sums_and_stability() {
        let x = [0.0, 0.0, 1000.0, 1000.0, (2.0f64).ln(), 0.0];
        let mut y = vec![0.0; 6];
        softmax_rows(&x, 3, 2, &mut y);
        assert!((y[0] - 0.5).abs() < 1e-12);
        assert!((y[1] - 0.5).abs() < 1e-12);
        assert!((y[2] - 0.5).abs() < 1e-12);
        assert!((y[3] - 0.5).abs() < 1e-12);
        assert!((y[4] - 2.0 / 3.0).abs() < 1e-12);
        assert!((y[5] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn conv1d_sliding_window_sum() {
        // input [1,2,3,4], kernel [1,1,1], stride 1, pad 1 -> [3,6,9,7]
        let x = [1.0, 2.0, 3.0, 4.0];
        let w = [1.0, 1.0, 1.0];
        let b = [0.0];
        let mut out = vec![0.0; 4];
        conv1d(&x, &w, &b, 1, 4, 1, 3, 1, 1, 4, &mut out);
        assert_eq!(out, vec![3.0, 6.0, 9.0, 7.0]);
    }

    #[test]
    fn im2col_col2im_adjoint_pair() {
        // <im2col(x), c> == <x, col2im(c)> for random x, c (adjointness).
        let mut rng = crate::rng::rng_from_seed(9);
        let (c_in, h, w) = (2, 5, 4);
        let (kh, kw, stride, pad) = (3, 3, 2, 1);
        let h_out = (h + 2 * pad - kh) / stride + 1;
        let w_out = (w + 2 * pad - kw) / stride + 1;
        let x: Vec<f64> = (0..c_in * h * w).map(|_| crate::rng::uniform(&mut rng, -1.0, 1.0)).collect();
        let c: Vec<f64> = (0..c_in * kh * kw * h_out * w_out)
            .map(|_| crate::rng::uniform(&mut rng, -1.0, 1.0))
            .collect();

        let mut col = vec![0.0; c.len()];
        im2col(&x, c_in, h, w, kh, kw, stride, pad, h_out, w_out, &mut col);
        let lhs: f64 = col.iter().zip(&c).map(|(a, b)| a * b).sum();

        let mut back = vec![0.0; x.len()];
        col2im_acc(&c, c_in, h, w, kh, kw, stride, pad, h_out, w_out, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
