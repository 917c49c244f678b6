//! The per-channel quadratic and its two solvers.
//!
//! Unknowns are interleaved per pixel, `x[2p] = a_p`, `x[2p + 1] = b_p`,
//! row-major over the grid. The system solved is half the energy's Hessian
//! against half its linear term:
//!
//! ```text
//! (I_p² + ε + 2β·D_p) a_p + I_p b_p − 2β Σ_q w_pq a_q = I_p O_p + ε
//! I_p a_p + (1 + ε + 2β·D_p) b_p − 2β Σ_q w_pq b_q     = O_p
//! ```
//!
//! where `D_p = Σ_q w_pq` over the 4-neighbourhood. Each unordered pair
//! appears twice in the smoothness sum, hence the `2β`.

use crate::error::{Error, Result};

/// Neighbour weights shared by all three channels: `right[p]` couples `p`
/// and `p + 1`, `down[p]` couples `p` and `p + w`. Missing neighbours are 0.
#[derive(Clone, Debug)]
pub(crate) struct Weights {
    pub w: usize,
    pub right: Vec<f64>,
    pub down: Vec<f64>,
}

impl Weights {
    pub fn degree(&self, p: usize) -> f64 {
        let (y, x) = (p / self.w, p % self.w);
        let mut d = self.right[p] + self.down[p];
        if x > 0 {
            d += self.right[p - 1];
        }
        if y > 0 {
            d += self.down[p - self.w];
        }
        d
    }
}

pub(crate) struct ChannelSystem<'a> {
    pub weights: &'a Weights,
    pub input: &'a [f64],
    pub target: &'a [f64],
    pub beta: f64,
    pub ridge: f64,
}

impl ChannelSystem<'_> {
    fn n(&self) -> usize {
        self.input.len()
    }

    pub fn rhs(&self) -> Vec<f64> {
        let mut r = vec![0.0; 2 * self.n()];
        for p in 0..self.n() {
            r[2 * p] = self.input[p] * self.target[p] + self.ridge;
            r[2 * p + 1] = self.target[p];
        }
        r
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; 2 * self.n()];
        for p in 0..self.n() {
            let s = 2.0 * self.beta * self.weights.degree(p);
            d[2 * p] = self.input[p] * self.input[p] + self.ridge + s;
            d[2 * p + 1] = 1.0 + self.ridge + s;
        }
        d
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let Weights { w, right, down, .. } = self.weights;
        let w = *w;
        let n = self.n();
        let k = 2.0 * self.beta;
        for p in 0..n {
            let i = self.input[p];
            let (a, b) = (x[2 * p], x[2 * p + 1]);
            let mut sa = 0.0;
            let mut sb = 0.0;
            let mut deg = 0.0;
            let mut couple = |q: usize, wt: f64| {
                sa += wt * x[2 * q];
                sb += wt * x[2 * q + 1];
                deg += wt;
            };
            if p % w + 1 < w {
                couple(p + 1, right[p]);
            }
            if p % w > 0 {
                couple(p - 1, right[p - 1]);
            }
            if p + w < n {
                couple(p + w, down[p]);
            }
            if p >= w {
                couple(p - w, down[p - w]);
            }
            out[2 * p] = (i * i + self.ridge + k * deg) * a + i * b - k * sa;
            out[2 * p + 1] = i * a + (1.0 + self.ridge + k * deg) * b - k * sb;
        }
    }

    /// The full energy at `x`, with the unordered-pair double count.
    pub fn energy(&self, x: &[f64]) -> f64 {
        let Weights { w, right, down, .. } = self.weights;
        let w = *w;
        let n = self.n();
        let mut data = 0.0;
        let mut smooth = 0.0;
        let mut ridge = 0.0;
        for p in 0..n {
            let (a, b) = (x[2 * p], x[2 * p + 1]);
            let r = a * self.input[p] + b - self.target[p];
            data += r * r;
            ridge += (a - 1.0) * (a - 1.0) + b * b;
            let mut pair = |q: usize, wt: f64| {
                let (da, db) = (a - x[2 * q], b - x[2 * q + 1]);
                smooth += wt * (da * da + db * db);
            };
            if p % w + 1 < w {
                pair(p + 1, right[p]);
            }
            if p + w < n {
                pair(p + w, down[p]);
            }
        }
        data + 2.0 * self.beta * smooth + self.ridge * ridge
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// `‖rhs − M x‖ / ‖rhs‖` at the returned solution.
    pub relative_residual: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn relative_residual(sys: &ChannelSystem, x: &[f64], rhs: &[f64]) -> f64 {
    let mut mx = vec![0.0; x.len()];
    sys.apply(x, &mut mx);
    let r: Vec<f64> = rhs.iter().zip(&mx).map(|(b, m)| b - m).collect();
    norm(&r) / norm(rhs).max(f64::MIN_POSITIVE)
}

/// Jacobi-preconditioned conjugate gradient from the identity transform.
pub(crate) fn solve_cg(sys: &ChannelSystem, tol: f64, max_iters: usize) -> Result<(Vec<f64>, SolveReport)> {
    let n2 = 2 * sys.n();
    let rhs = sys.rhs();
    let rhs_norm = norm(&rhs).max(f64::MIN_POSITIVE);
    let inv_diag: Vec<f64> = sys.diagonal().iter().map(|d| 1.0 / d).collect();
    let mut x: Vec<f64> = (0..n2).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
    let mut mx = vec![0.0; n2];
    sys.apply(&x, &mut mx);
    let mut r: Vec<f64> = rhs.iter().zip(&mx).map(|(b, m)| b - m).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut mp = vec![0.0; n2];
    for it in 0..=max_iters {
        let res = norm(&r) / rhs_norm;
        if res <= tol {
            return Ok((
                x,
                SolveReport {
                    iterations: it,
                    relative_residual: res,
                },
            ));
        }
        if it == max_iters {
            return Err(Error::Nonconvergence {
                iterations: it,
                residual: res,
            });
        }
        sys.apply(&p, &mut mp);
        let alpha = rz / dot(&p, &mp);
        for i in 0..n2 {
            x[i] += alpha * p[i];
            r[i] -= alpha * mp[i];
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n2 {
            p[i] = z[i] + beta * p[i];
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// Direct solve by banded Cholesky. With interleaved unknowns the matrix
/// has half-bandwidth `2w + 1`.
pub(crate) fn solve_banded(sys: &ChannelSystem) -> Result<(Vec<f64>, SolveReport)> {
    let n = 2 * sys.n();
    let w = sys.weights.w;
    let bw = (2 * w + 1).min(n.saturating_sub(1));
    let k = 2.0 * sys.beta;
    let diag = sys.diagonal();
    // lower band: l[i * (bw + 1) + (bw - (i - j))] = M[i][j], j in i-bw..=i
    let stride = bw + 1;
    let mut l = vec![0.0; n * stride];
    let at = |i: usize, j: usize| i * stride + bw - (i - j);
    for p in 0..sys.n() {
        let (ia, ib) = (2 * p, 2 * p + 1);
        l[at(ia, ia)] = diag[ia];
        l[at(ib, ib)] = diag[ib];
        l[at(ib, ia)] = sys.input[p];
        if p % w > 0 {
            let q = p - 1;
            let wt = sys.weights.right[q];
            l[at(ia, 2 * q)] = -k * wt;
            l[at(ib, 2 * q + 1)] = -k * wt;
        }
        if p >= w {
            let q = p - w;
            let wt = sys.weights.down[q];
            l[at(ia, 2 * q)] = -k * wt;
            l[at(ib, 2 * q + 1)] = -k * wt;
        }
    }
    for i in 0..n {
        let lo = i.saturating_sub(bw);
        for j in lo..=i {
            let klo = lo.max(j.saturating_sub(bw));
            let mut s = l[at(i, j)];
            for kk in klo..j {
                s -= l[at(i, kk)] * l[at(j, kk)];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::Shape(format!(
                        "transform system not positive definite at row {i}"
                    )));
                }
                l[at(i, i)] = s.sqrt();
            } else {
                l[at(i, j)] = s / l[at(j, j)];
            }
        }
    }
    let rhs = sys.rhs();
    let mut y = rhs.clone();
    for i in 0..n {
        let lo = i.saturating_sub(bw);
        for j in lo..i {
            y[i] -= l[at(i, j)] * y[j];
        }
        y[i] /= l[at(i, i)];
    }
    for i in (0..n).rev() {
        let hi = (i + bw).min(n - 1);
        for j in i + 1..=hi {
            y[i] -= l[at(j, i)] * y[j];
        }
        y[i] /= l[at(i, i)];
    }
    let relative_residual = relative_residual(sys, &y, &rhs);
    Ok((
        y,
        SolveReport {
            iterations: 0,
            relative_residual,
        },
    ))
}
