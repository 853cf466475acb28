//! 3x3 stride-2 convolution via im2col, and its backward pass.
//!
//! Each layer pads by one pixel in total per axis, either before the input (`lead = 1`) or
//! after it (`lead = 0`); either way the output side is `ceil(side / 2)`.

/// Output side of a 3x3 / stride 2 convolution with one pixel of padding.
pub(crate) fn out_side(side: usize) -> usize {
    (side + 1) / 2
}

/// Unfolds `input` (`[c][h][w]`) into `[c*9][oh*ow]` patches.
pub(crate) fn im2col(input: &[f64], c: usize, h: usize, w: usize, lead: usize) -> Vec<f64> {
    let (oh, ow) = (out_side(h), out_side(w));
    let p = oh * ow;
    let mut cols = vec![0.0; c * 9 * p];
    for ch in 0..c {
        let plane = &input[ch * h * w..(ch + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ch * 3 + ky) * 3 + kx) * p..][..p];
                for oy in 0..oh {
                    let iy = (2 * oy + ky) as isize - lead as isize;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    let src = &plane[iy as usize * w..][..w];
                    let dst = &mut row[oy * ow..][..ow];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (2 * ox + kx) as isize - lead as isize;
                        if ix >= 0 && (ix as usize) < w {
                            *d = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Scatters `[c*9][oh*ow]` patch gradients back onto a `[c][h][w]` input gradient.
pub(crate) fn col2im(dcols: &[f64], c: usize, h: usize, w: usize, lead: usize) -> Vec<f64> {
    let (oh, ow) = (out_side(h), out_side(w));
    let p = oh * ow;
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        let plane = &mut out[ch * h * w..(ch + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &dcols[((ch * 3 + ky) * 3 + kx) * p..][..p];
                for oy in 0..oh {
                    let iy = (2 * oy + ky) as isize - lead as isize;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..][..w];
                    for ox in 0..ow {
                        let ix = (2 * ox + kx) as isize - lead as isize;
                        if ix >= 0 && (ix as usize) < w {
                            dst[ix as usize] += row[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

/// `out[o][p] = bias[o] + sum_k weight[o][k] * cols[k][p]`.
pub(crate) fn matmul_bias(weight: &[f64], bias: &[f64], cols: &[f64], k: usize, p: usize) -> Vec<f64> {
    let o = bias.len();
    let mut out = vec![0.0; o * p];
    for oi in 0..o {
        let dst = &mut out[oi * p..][..p];
        dst.fill(bias[oi]);
        axpy_rows(dst, &weight[oi * k..][..k], cols, p);
    }
    out
}

/// `dst += sum_r coef[r] * rows[r]`, four rows per pass over `dst`.
fn axpy_rows(dst: &mut [f64], coef: &[f64], rows: &[f64], p: usize) {
    let quads = coef.len() / 4;
    for q in 0..quads {
        let c = &coef[4 * q..4 * q + 4];
        let r = &rows[4 * q * p..][..4 * p];
        let (r0, r1, r2, r3) = (&r[..p], &r[p..2 * p], &r[2 * p..3 * p], &r[3 * p..]);
        for i in 0..p {
            dst[i] += c[0] * r0[i] + c[1] * r1[i] + c[2] * r2[i] + c[3] * r3[i];
        }
    }
    for ri in 4 * quads..coef.len() {
        let cv = coef[ri];
        for (d, s) in dst.iter_mut().zip(&rows[ri * p..][..p]) {
            *d += cv * s;
        }
    }
}

/// Dot product with eight independent partial sums, so the compiler can vectorise it.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Gradients of [`matmul_bias`]: returns `(d_weight, d_bias, d_cols)`; `d_cols` is skipped
/// when `need_input` is false.
pub(crate) fn matmul_bias_backward(
    weight: &[f64],
    cols: &[f64],
    dout: &[f64],
    o: usize,
    k: usize,
    p: usize,
    need_input: bool,
) -> (Vec<f64>, Vec<f64>, Option<Vec<f64>>) {
    let mut dw = vec![0.0; o * k];
    let mut db = vec![0.0; o];
    for oi in 0..o {
        let g = &dout[oi * p..][..p];
        db[oi] = g.iter().sum();
        for ki in 0..k {
            dw[oi * k + ki] = dot(g, &cols[ki * p..][..p]);
        }
    }
    let dcols = need_input.then(|| {
        // d_cols = weight^T * dout, one `k` row at a time.
        let mut dc = vec![0.0; k * p];
        let mut wt = vec![0.0; o];
        for ki in 0..k {
            for (oi, w) in wt.iter_mut().enumerate() {
                *w = weight[oi * k + ki];
            }
            axpy_rows(&mut dc[ki * p..][..p], &wt, dout, p);
        }
        dc
    });
    (dw, db, dcols)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct definition of the convolution, for comparison with im2col + matmul.
    fn conv_direct(input: &[f64], weight: &[f64], c: usize, h: usize, w: usize, o: usize, lead: usize) -> Vec<f64> {
        let (oh, ow) = (out_side(h), out_side(w));
        let mut out = vec![0.0; o * oh * ow];
        for oi in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ci in 0..c {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (2 * oy + ky) as isize - lead as isize;
                                let ix = (2 * ox + kx) as isize - lead as isize;
                                if iy < 0 || ix < 0 || iy as usize >= h || ix as usize >= w {
                                    continue;
                                }
                                acc += weight[((oi * c + ci) * 3 + ky) * 3 + kx]
                                    * input[(ci * h + iy as usize) * w + ix as usize];
                            }
                        }
                    }
                    out[(oi * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn im2col_matches_direct() {
        let (c, h, w, o) = (2, 5, 6, 3);
        let input: Vec<f64> = (0..c * h * w).map(|i| (i as f64 * 0.37).sin()).collect();
        let weight: Vec<f64> = (0..o * c * 9).map(|i| (i as f64 * 0.91).cos()).collect();
        for lead in [0, 1] {
            let cols = im2col(&input, c, h, w, lead);
            let got = matmul_bias(&weight, &vec![0.0; o], &cols, c * 9, out_side(h) * out_side(w));
            let want = conv_direct(&input, &weight, c, h, w, o, lead);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let (c, h, w) = (2, 7, 4);
        let x: Vec<f64> = (0..c * h * w).map(|i| (i as f64 * 0.13).sin()).collect();
        let p = out_side(h) * out_side(w);
        let y: Vec<f64> = (0..c * 9 * p).map(|i| (i as f64 * 0.29).cos()).collect();
        for lead in [0, 1] {
            let lhs: f64 = im2col(&x, c, h, w, lead).iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(col2im(&y, c, h, w, lead)).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }
}
