//! Raw slice kernels shared by the forward and backward passes.

/// `out[m×n] += a[m×k] · b[k×n]`
pub(crate) fn matmul_acc(a: &[f32], b: &[f32], out: &mut [f32], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
}

/// `out[m×k] += g[m×n] · bᵀ` where `b` is `k×n`.
/// Dot product with eight independent accumulators so the loop vectorizes.
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f32 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().sum::<f32>() + tail
}

pub(crate) fn matmul_a_bt_acc(g: &[f32], b: &[f32], out: &mut [f32], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            out[i * k + p] += dot(g_row, b_row);
        }
    }
}

/// `out[k×n] += aᵀ · g` where `a` is `m×k` and `g` is `m×n`.
pub(crate) fn matmul_at_b_acc(a: &[f32], g: &[f32], out: &mut [f32], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in out_row.iter_mut().zip(g_row) {
                *o += aip * gv;
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub c_in: usize,
    pub c_out: usize,
    pub height: usize,
    pub width: usize,
    pub kw: usize,
}

impl ConvDims {
    /// Valid output columns `[lo, hi)` for tap `t`, and the input offset.
    fn tap_range(&self, t: usize) -> (usize, usize, isize) {
        let off = t as isize - (self.kw / 2) as isize;
        let w = self.width as isize;
        let lo = (-off).max(0) as usize;
        let hi = (w - off).min(w).max(0) as usize;
        (lo, hi, off)
    }
}

/// Unrolls `x` `[c_in, H, W]` into `[c_in * kw, H * W]`: row `(ci, t)`
/// holds `x[ci]` shifted by tap `t`, zero where the tap falls off the edge.
fn im2col(x: &[f32], d: ConvDims) -> Vec<f32> {
    let plane = d.height * d.width;
    let mut cols = vec![0.0; d.c_in * d.kw * plane];
    for ci in 0..d.c_in {
        for t in 0..d.kw {
            let (lo, hi, off) = d.tap_range(t);
            if lo >= hi {
                continue;
            }
            let dst = &mut cols[(ci * d.kw + t) * plane..(ci * d.kw + t + 1) * plane];
            for h in 0..d.height {
                let x_row = &x[ci * plane + h * d.width..ci * plane + (h + 1) * d.width];
                let src = &x_row[(lo as isize + off) as usize..(hi as isize + off) as usize];
                dst[h * d.width + lo..h * d.width + hi].copy_from_slice(src);
            }
        }
    }
    cols
}

/// Same-padded temporal cross-correlation, accumulated into `out`
/// `[c_out, H, W]`. `k` is `[c_out, c_in, 1, kw]`.
pub(crate) fn conv_forward(x: &[f32], k: &[f32], out: &mut [f32], d: ConvDims) {
    let cols = im2col(x, d);
    matmul_acc(k, &cols, out, d.c_out, d.c_in * d.kw, d.height * d.width);
}

/// Accumulates input and kernel gradients of [`conv_forward`].
pub(crate) fn conv_backward(
    x: &[f32],
    k: &[f32],
    g: &[f32],
    gx: Option<&mut [f32]>,
    gk: Option<&mut [f32]>,
    d: ConvDims,
) {
    let plane = d.height * d.width;
    let rows = d.c_in * d.kw;
    if let Some(gk) = gk {
        let cols = im2col(x, d);
        matmul_a_bt_acc(g, &cols, gk, d.c_out, rows, plane);
    }
    if let Some(gx) = gx {
        let mut gcols = vec![0.0; rows * plane];
        matmul_at_b_acc(k, g, &mut gcols, d.c_out, rows, plane);
        for ci in 0..d.c_in {
            for t in 0..d.kw {
                let (lo, hi, off) = d.tap_range(t);
                if lo >= hi {
                    continue;
                }
                let src = &gcols[(ci * d.kw + t) * plane..(ci * d.kw + t + 1) * plane];
                for h in 0..d.height {
                    let gx_row = &mut gx[ci * plane + h * d.width..ci * plane + (h + 1) * d.width];
                    let dst =
                        &mut gx_row[(lo as isize + off) as usize..(hi as isize + off) as usize];
                    for (o, &v) in dst.iter_mut().zip(&src[h * d.width + lo..h * d.width + hi]) {
                        *o += v;
                    }
                }
            }
        }
    }
}

pub(crate) fn maxpool_forward(
    x: &[f32],
    rows: usize,
    w: usize,
    window: usize,
) -> (Vec<f32>, Vec<usize>) {
    let w_out = w / window;
    let mut out = Vec::with_capacity(rows * w_out);
    let mut arg = Vec::with_capacity(rows * w_out);
    for r in 0..rows {
        let row = &x[r * w..(r + 1) * w];
        for o in 0..w_out {
            let base = o * window;
            let mut best = base;
            for i in base + 1..base + window {
                if row[i] > row[best] {
                    best = i;
                }
            }
            out.push(row[best]);
            arg.push(r * w + best);
        }
    }
    (out, arg)
}
