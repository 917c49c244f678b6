//! Raw numeric kernels behind the graph ops. Everything here works on plain
//! slices; shapes are validated by the callers in `graph.rs`.

/// Strided matrix view: element `(i, j)` lives at `i * rs + j * cs`.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f32],
    pub rs: isize,
    pub cs: isize,
}

impl<'a> View<'a> {
    pub fn rows(data: &'a [f32], cols: usize) -> Self {
        Self {
            data,
            rs: cols as isize,
            cs: 1,
        }
    }

    pub fn transposed(data: &'a [f32], cols: usize) -> Self {
        Self {
            data,
            rs: 1,
            cs: cols as isize,
        }
    }
}

/// `c = alpha * a(m×k) · b(k×n) + beta * c`, with `c` row-major `m×n`.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: View, b: View, beta: f32, c: &mut [f32]) {
    assert!(c.len() >= m * n, "gemm output too small");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c[..m * n].iter_mut() {
            *v *= beta;
        }
        return;
    }
    let a_last = (m as isize - 1) * a.rs + (k as isize - 1) * a.cs;
    let b_last = (k as isize - 1) * b.rs + (n as isize - 1) * b.cs;
    assert!((a_last as usize) < a.data.len() && (b_last as usize) < b.data.len());
    // SAFETY: the asserts above bound every strided access inside the slices.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs,
            a.cs,
            b.data.as_ptr(),
            b.rs,
            b.cs,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.height + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.width + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn col_cols(&self) -> usize {
        self.out_h() * self.out_w()
    }
}

pub(crate) fn im2col(x: &[f32], g: &ConvGeom, cols: &mut [f32]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= g.height as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.width as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

pub(crate) fn col2im_add(cols: &[f32], g: &ConvGeom, dx: &mut [f32]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &mut dx[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dst[ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Forward convolution of one sample. `out` is `[O, out_h*out_w]`.
pub(crate) fn conv_forward(
    x: &[f32],
    w: &[f32],
    b: &[f32],
    out_ch: usize,
    g: &ConvGeom,
    cols: &mut Vec<f32>,
    out: &mut [f32],
) {
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    let pointwise = g.kernel == 1 && g.stride == 1 && g.pad == 0;
    let src: &[f32] = if pointwise {
        x
    } else {
        cols.resize(rows * ncols, 0.0);
        im2col(x, g, cols);
        cols
    };
    for (o, chunk) in out.chunks_mut(ncols).enumerate().take(out_ch) {
        chunk.fill(b[o]);
    }
    gemm(
        out_ch,
        rows,
        ncols,
        View::rows(w, rows),
        View::rows(src, ncols),
        1.0,
        out,
    );
}

/// Backward convolution of one sample; accumulates into `dw`, `db` and `dx`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    x: &[f32],
    w: &[f32],
    dy: &[f32],
    out_ch: usize,
    g: &ConvGeom,
    cols: &mut Vec<f32>,
    dcols: &mut Vec<f32>,
    dw: Option<&mut [f32]>,
    db: Option<&mut [f32]>,
    dx: Option<&mut [f32]>,
) {
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    let pointwise = g.kernel == 1 && g.stride == 1 && g.pad == 0;
    if let Some(db) = db {
        for (o, d) in db.iter_mut().enumerate().take(out_ch) {
            *d += dy[o * ncols..(o + 1) * ncols].iter().sum::<f32>();
        }
    }
    if let Some(dw) = dw {
        let src: &[f32] = if pointwise {
            x
        } else {
            cols.resize(rows * ncols, 0.0);
            im2col(x, g, cols);
            cols
        };
        // dw(O×R) += dy(O×P) · colsᵀ(P×R)
        gemm(
            out_ch,
            ncols,
            rows,
            View::rows(dy, ncols),
            View::transposed(src, ncols),
            1.0,
            dw,
        );
    }
    if let Some(dx) = dx {
        if pointwise {
            gemm(
                rows,
                out_ch,
                ncols,
                View::transposed(w, rows),
                View::rows(dy, ncols),
                1.0,
                dx,
            );
        } else {
            dcols.resize(rows * ncols, 0.0);
            gemm(
                rows,
                out_ch,
                ncols,
                View::transposed(w, rows),
                View::rows(dy, ncols),
                0.0,
                dcols,
            );
            col2im_add(dcols, g, dx);
        }
    }
}
