//! Per-sample compute kernels. Spatial data is `[channels, depth, height,
//! width]`; planar layers use depth 1.

use rayon::prelude::*;
use xprojct_core::Scalar;

/// Unrolled dot product with a fixed summation order.
#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = [S::zero(); 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let (x, y) = (&a[i * 8..i * 8 + 8], &b[i * 8..i * 8 + 8]);
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = S::zero();
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
pub fn axpy<S: Scalar>(alpha: S, x: &[S], y: &mut [S]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_ch: usize,
    pub out_ch: usize,
    pub dims: [usize; 3],
    pub kernel: [usize; 3],
}

impl ConvGeometry {
    pub fn positions(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn taps(&self) -> usize {
        self.in_ch * self.kernel.iter().product::<usize>()
    }

    fn pad(&self) -> [isize; 3] {
        self.kernel.map(|k| (k / 2) as isize)
    }
}

/// Unfolds zero-padded neighborhoods into a `[taps, positions]` matrix.
pub fn im2col<S: Scalar>(g: &ConvGeometry, x: &[S], cols: &mut [S]) {
    let [d, h, w] = g.dims;
    let p = g.positions();
    let pad = g.pad();
    let [kd, kh, kw] = g.kernel;
    cols.par_chunks_mut(p).enumerate().for_each(|(row, dst)| {
        let e = row % kw;
        let b = (row / kw) % kh;
        let a = (row / (kw * kh)) % kd;
        let ci = row / (kw * kh * kd);
        let shift = e as isize - pad[2];
        for z in 0..d {
            let sz = z as isize + a as isize - pad[0];
            for y in 0..h {
                let sy = y as isize + b as isize - pad[1];
                let out = &mut dst[(z * h + y) * w..(z * h + y + 1) * w];
                if sz < 0 || sz >= d as isize || sy < 0 || sy >= h as isize {
                    out.fill(S::zero());
                    continue;
                }
                let src = &x[((ci * d + sz as usize) * h + sy as usize) * w..][..w];
                for (xx, o) in out.iter_mut().enumerate() {
                    let sx = xx as isize + shift;
                    *o = if sx >= 0 && sx < w as isize { src[sx as usize] } else { S::zero() };
                }
            }
        }
    });
}

/// Adjoint of [`im2col`]: accumulates columns back into an input gradient.
pub fn col2im<S: Scalar>(g: &ConvGeometry, cols: &[S], dx: &mut [S]) {
    let [d, h, w] = g.dims;
    let p = g.positions();
    let pad = g.pad();
    let [kd, kh, kw] = g.kernel;
    let per_ch = kd * kh * kw;
    dx.par_chunks_mut(d * h * w).enumerate().for_each(|(ci, plane)| {
        for r in 0..per_ch {
            let row = ci * per_ch + r;
            let e = r % kw;
            let b = (r / kw) % kh;
            let a = r / (kw * kh);
            let shift = e as isize - pad[2];
            let src = &cols[row * p..(row + 1) * p];
            for z in 0..d {
                let sz = z as isize + a as isize - pad[0];
                if sz < 0 || sz >= d as isize {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + b as isize - pad[1];
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[(sz as usize * h + sy as usize) * w..][..w];
                    let g_row = &src[(z * h + y) * w..(z * h + y + 1) * w];
                    for (xx, &gv) in g_row.iter().enumerate() {
                        let sx = xx as isize + shift;
                        if sx >= 0 && sx < w as isize {
                            dst[sx as usize] += gv;
                        }
                    }
                }
            }
        }
    });
}

/// `out[oc] = bias[oc] + Σ_k weight[oc, k] · cols[k]`.
pub fn conv_forward<S: Scalar>(g: &ConvGeometry, cols: &[S], weight: &[S], bias: &[S], out: &mut [S]) {
    let p = g.positions();
    let taps = g.taps();
    out.par_chunks_mut(p).enumerate().for_each(|(oc, o)| {
        o.fill(bias[oc]);
        let wrow = &weight[oc * taps..(oc + 1) * taps];
        for (k, &wv) in wrow.iter().enumerate() {
            axpy(wv, &cols[k * p..(k + 1) * p], o);
        }
    });
}

/// Weight and bias gradients, accumulated into `dw` / `db`.
pub fn conv_param_grads<S: Scalar>(g: &ConvGeometry, cols: &[S], dout: &[S], dw: &mut [S], db: &mut [S]) {
    let p = g.positions();
    let taps = g.taps();
    dw.par_chunks_mut(taps)
        .zip(db.par_iter_mut())
        .enumerate()
        .for_each(|(oc, (dw_row, dbv))| {
            let go = &dout[oc * p..(oc + 1) * p];
            *dbv += go.iter().copied().sum::<S>();
            for (k, dwv) in dw_row.iter_mut().enumerate() {
                *dwv += dot(go, &cols[k * p..(k + 1) * p]);
            }
        });
}

/// Column-space input gradient `dcols[k] = Σ_oc weight[oc, k] · dout[oc]`.
pub fn conv_input_grad_cols<S: Scalar>(g: &ConvGeometry, weight: &[S], dout: &[S], dcols: &mut [S]) {
    let p = g.positions();
    let taps = g.taps();
    dcols.par_chunks_mut(p).enumerate().for_each(|(k, dc)| {
        dc.fill(S::zero());
        for oc in 0..g.out_ch {
            axpy(weight[oc * taps + k], &dout[oc * p..(oc + 1) * p], dc);
        }
    });
}

/// 2× max pooling over the spatial axes whose flag is set; odd trailing
/// elements are dropped. Returns the flat argmax of each output.
pub fn maxpool_forward<S: Scalar>(
    channels: usize,
    dims: [usize; 3],
    pooled: [bool; 3],
    x: &[S],
    out: &mut [S],
    argmax: &mut [u32],
) {
    let f = pooled.map(|p| if p { 2 } else { 1 });
    let od = [0, 1, 2].map(|a| dims[a] / f[a]);
    let [d, h, w] = dims;
    let mut o = 0;
    for c in 0..channels {
        for z in 0..od[0] {
            for y in 0..od[1] {
                for xx in 0..od[2] {
                    let mut best = S::neg_infinity();
                    let mut best_i = 0usize;
                    for a in 0..f[0] {
                        for b in 0..f[1] {
                            for e in 0..f[2] {
                                let i = ((c * d + z * f[0] + a) * h + y * f[1] + b) * w + xx * f[2] + e;
                                if x[i] > best {
                                    best = x[i];
                                    best_i = i;
                                }
                            }
                        }
                    }
                    out[o] = best;
                    argmax[o] = best_i as u32;
                    o += 1;
                }
            }
        }
    }
}

/// Shape after one pooling step.
pub fn pooled_dims(dims: [usize; 3], pooled: [bool; 3]) -> [usize; 3] {
    [0, 1, 2].map(|a| if pooled[a] { dims[a] / 2 } else { dims[a] })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(g: &ConvGeometry, x: &[f64], wt: &[f64], b: &[f64]) -> Vec<f64> {
        let [d, h, w] = g.dims;
        let [kd, kh, kw] = g.kernel;
        let mut out = vec![0.0; g.out_ch * d * h * w];
        for oc in 0..g.out_ch {
            for z in 0..d {
                for y in 0..h {
                    for xx in 0..w {
                        let mut s = b[oc];
                        for ci in 0..g.in_ch {
                            for a in 0..kd {
                                for bb in 0..kh {
                                    for e in 0..kw {
                                        let sz = z as isize + a as isize - (kd / 2) as isize;
                                        let sy = y as isize + bb as isize - (kh / 2) as isize;
                                        let sx = xx as isize + e as isize - (kw / 2) as isize;
                                        if sz < 0 || sy < 0 || sx < 0 || sz >= d as isize || sy >= h as isize || sx >= w as isize {
                                            continue;
                                        }
                                        let xi = ((ci * d + sz as usize) * h + sy as usize) * w + sx as usize;
                                        let wi = (((oc * g.in_ch + ci) * kd + a) * kh + bb) * kw + e;
                                        s += wt[wi] * x[xi];
                                    }
                                }
                            }
                        }
                        out[((oc * d + z) * h + y) * w + xx] = s;
                    }
                }
            }
        }
        out
    }

    fn ramp(n: usize, k: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64 * k).sin() * 3.0).round() / 3.0).collect()
    }

    #[test]
    fn conv_matches_direct_loops() {
        for g in [
            ConvGeometry { in_ch: 2, out_ch: 3, dims: [1, 5, 6], kernel: [1, 3, 3] },
            ConvGeometry { in_ch: 2, out_ch: 2, dims: [4, 3, 5], kernel: [3, 3, 3] },
        ] {
            let x = ramp(g.in_ch * g.positions(), 0.37);
            let wt = ramp(g.out_ch * g.taps(), 0.91);
            let b = ramp(g.out_ch, 1.3);
            let mut cols = vec![0.0; g.taps() * g.positions()];
            im2col(&g, &x, &mut cols);
            let mut out = vec![0.0; g.out_ch * g.positions()];
            conv_forward(&g, &cols, &wt, &b, &mut out);
            let expect = naive_conv(&g, &x, &wt, &b);
            for (a, e) in out.iter().zip(&expect) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = ConvGeometry { in_ch: 2, out_ch: 1, dims: [3, 4, 5], kernel: [3, 3, 3] };
        let x = ramp(g.in_ch * g.positions(), 0.21);
        let c = ramp(g.taps() * g.positions(), 0.77);
        let mut cols = vec![0.0; c.len()];
        im2col(&g, &x, &mut cols);
        let lhs: f64 = cols.iter().zip(&c).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im(&g, &c, &mut back);
        let rhs: f64 = back.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn dot_matches_naive() {
        let a = ramp(37, 0.3);
        let b = ramp(37, 0.7);
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn pool_picks_window_max() {
        let x: Vec<f64> = vec![1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 9.0, 7.0, 6.0];
        let mut out = vec![0.0; 1];
        let mut arg = vec![0; 1];
        maxpool_forward(1, [1, 3, 3], [false, true, true], &x, &mut out, &mut arg);
        assert_eq!(out, vec![5.0]);
        assert_eq!(arg, vec![1]);
    }
}
