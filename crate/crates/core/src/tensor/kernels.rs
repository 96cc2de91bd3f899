use alloc::vec;
use alloc::vec::Vec;

/// `a[m,k] · b[k,n]`
pub(crate) fn matmul_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a[m,n] · b[k,n]ᵀ`, result `[m,k]`.
pub(crate) fn matmul_nt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] = dot(arow, brow);
        }
    }
    out
}

/// `a[m,k]ᵀ · b[m,n]`, result `[k,n]`.
pub(crate) fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// Geometry of a strided 1-D convolution over `[batch, len, in_ch]` inputs
/// with `[width, in_ch, out_ch]` filters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub len: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub width: usize,
    pub stride: usize,
    pub pad_left: usize,
    pub out_len: usize,
}

impl ConvGeom {
    /// Kernel taps `k_lo..k_hi` that land inside the input for output `t`,
    /// and the input position of tap `k_lo`.
    #[inline]
    fn taps(&self, t: usize) -> (usize, usize, usize) {
        let first = t * self.stride;
        let k_lo = self.pad_left.saturating_sub(first);
        let k_hi = (self.len + self.pad_left - first).min(self.width);
        (k_lo, k_hi, first + k_lo - self.pad_left)
    }
}

/// Dot product with four interleaved partial sums.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let chunks = n / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in 4 * chunks..n {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (o, &v) in y.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

/// Filters as `[out_ch, width·in_ch]` so each output is one contiguous dot.
fn filters_by_output(w: &[f64], g: &ConvGeom) -> Vec<f64> {
    let span = g.width * g.in_ch;
    let mut wt = vec![0.0; g.out_ch * span];
    for j in 0..span {
        for o in 0..g.out_ch {
            wt[o * span + j] = w[j * g.out_ch + o];
        }
    }
    wt
}

pub(crate) fn conv1d_forward(x: &[f64], w: &[f64], bias: &[f64], g: &ConvGeom) -> Vec<f64> {
    let (ci, co) = (g.in_ch, g.out_ch);
    let span = g.width * ci;
    let wt = filters_by_output(w, g);
    let mut out = vec![0.0; g.batch * g.out_len * co];
    for n in 0..g.batch {
        for t in 0..g.out_len {
            let (k_lo, k_hi, p) = g.taps(t);
            let xs = &x[(n * g.len + p) * ci..(n * g.len + p + k_hi - k_lo) * ci];
            let base = (n * g.out_len + t) * co;
            for o in 0..co {
                let ws = &wt[o * span + k_lo * ci..o * span + k_hi * ci];
                out[base + o] = bias[o] + dot(xs, ws);
            }
        }
    }
    out
}

/// Returns `(dx, dw, db)` for upstream gradient `dy`.
pub(crate) fn conv1d_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    g: &ConvGeom,
    need_dx: bool,
    need_dw: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (ci, co) = (g.in_ch, g.out_ch);
    let span = g.width * ci;
    let wt = filters_by_output(w, g);
    let mut dx = if need_dx { vec![0.0; x.len()] } else { Vec::new() };
    let mut dwt = if need_dw { vec![0.0; w.len()] } else { Vec::new() };
    let mut db = vec![0.0; co];
    for n in 0..g.batch {
        for t in 0..g.out_len {
            let (k_lo, k_hi, p) = g.taps(t);
            let (x0, x1) = ((n * g.len + p) * ci, (n * g.len + p + k_hi - k_lo) * ci);
            let base = (n * g.out_len + t) * co;
            for o in 0..co {
                let d = dy[base + o];
                db[o] += d;
                if d == 0.0 {
                    continue;
                }
                let (w0, w1) = (o * span + k_lo * ci, o * span + k_hi * ci);
                if need_dx {
                    axpy(&mut dx[x0..x1], d, &wt[w0..w1]);
                }
                if need_dw {
                    axpy(&mut dwt[w0..w1], d, &x[x0..x1]);
                }
            }
        }
    }
    let mut dw = Vec::new();
    if need_dw {
        dw = vec![0.0; w.len()];
        for o in 0..co {
            for j in 0..span {
                dw[j * co + o] = dwt[o * span + j];
            }
        }
    }
    (dx, dw, db)
}
