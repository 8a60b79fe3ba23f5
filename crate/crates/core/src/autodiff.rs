//! Reverse-mode differentiation over the fixed set of matrix operations the
//! GP objectives are built from.
//!
//! A [`Tape`] records nodes in evaluation order. Leaves are either constants
//! or views into a flat parameter vector; [`Tape::backprop`] returns the
//! gradient of a scalar node with respect to that whole vector. The
//! Gaussian log-likelihood and KL nodes carry their own Cholesky factors and
//! use the closed-form adjoints
//! `∂/∂C = ½(ααᵀ − C⁻¹)` and `∂/∂Kp = ½(Kq⁻¹ − Kp⁻¹)`.

use crate::error::{Error, Result};
use crate::linalg::{dot, ln_2pi, squared_distance, Cholesky, Matrix, Mvn};
use crate::nn::MlpSpec;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Constant,
    Param {
        offset: usize,
    },
    MatMul(Var, Var),
    AddRow(Var, Var),
    Tanh(Var),
    Add(Var, Var),
    Scale(Var, f64),
    Broadcast(Var),
    SeKernel {
        fa: Var,
        fb: Var,
        log_scale: Var,
        log_len: Var,
        sqdist: Matrix,
    },
    AddNoise {
        cov: Var,
        log_noise: Var,
    },
    GaussianLogLik {
        cov: Var,
        mean: Var,
        chol: Cholesky,
        alpha: Vec<f64>,
    },
    KlToFixed {
        cov: Var,
        mean: Var,
        chol_p: Cholesky,
        q_inv: Matrix,
        q_inv_diff: Vec<f64>,
    },
    SumSquares(Var),
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Recording of one forward evaluation.
pub struct Tape<'p> {
    params: &'p [f64],
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [f64]) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.as_scalar()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    /// A `rows x cols` view of the parameter vector starting at `offset`.
    pub fn param(&mut self, offset: usize, rows: usize, cols: usize) -> Result<Var> {
        let end = offset + rows * cols;
        if end > self.params.len() {
            return Err(Error::Graph(format!(
                "parameter view {offset}..{end} exceeds {} parameters",
                self.params.len()
            )));
        }
        let value = Matrix::from_vec(rows, cols, self.params[offset..end].to_vec())?;
        Ok(self.push(value, Op::Param { offset }))
    }

    pub fn param_scalar(&mut self, offset: usize) -> Result<Var> {
        self.param(offset, 1, 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// `a + 1·bias` with `bias` a single row.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(Error::dims(format!(
                "row bias {:?} for {:?}",
                bv.shape(),
                av.shape()
            )));
        }
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(a, bias)))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s))
    }

    /// Repeats a scalar into a `rows x 1` column.
    pub fn broadcast(&mut self, s: Var, rows: usize) -> Result<Var> {
        if self.value(s).shape() != (1, 1) {
            return Err(Error::dims("broadcast of a non-scalar"));
        }
        let v = Matrix::from_vec(rows, 1, vec![self.scalar(s); rows])?;
        Ok(self.push(v, Op::Broadcast(s)))
    }

    /// `K_ij = exp(log_scale) · exp(−‖a_i − b_j‖² / (2·exp(log_len)))`.
    pub fn se_kernel(&mut self, fa: Var, fb: Var, log_scale: Var, log_len: Var) -> Result<Var> {
        let (a, b) = (self.value(fa), self.value(fb));
        if a.cols() != b.cols() {
            return Err(Error::dims(format!(
                "kernel between {} and {} features",
                a.cols(),
                b.cols()
            )));
        }
        let sqdist = Matrix::from_fn(a.rows(), b.rows(), |i, j| {
            squared_distance(a.row(i), b.row(j))
        });
        let scale = self.scalar(log_scale).exp();
        let len = self.scalar(log_len).exp();
        let k = sqdist.map(|d| scale * (-d / (2.0 * len)).exp());
        Ok(self.push(
            k,
            Op::SeKernel {
                fa,
                fb,
                log_scale,
                log_len,
                sqdist,
            },
        ))
    }

    /// `cov + exp(2·log_noise)·I`.
    pub fn add_noise(&mut self, cov: Var, log_noise: Var) -> Var {
        let var = (2.0 * self.scalar(log_noise)).exp();
        let v = self.value(cov).add_diagonal(var);
        self.push(v, Op::AddNoise { cov, log_noise })
    }

    /// `ln N(y; mean, cov)`; `mean` is a column.
    pub fn gaussian_loglik(&mut self, cov: Var, mean: Var, y: &[f64]) -> Result<Var> {
        let (c, m) = (self.value(cov), self.value(mean));
        if c.rows() != y.len() || m.rows() != y.len() || m.cols() != 1 || !c.is_square() {
            return Err(Error::dims(format!(
                "log-likelihood with cov {:?}, mean {:?}, {} targets",
                c.shape(),
                m.shape(),
                y.len()
            )));
        }
        let chol = Cholesky::factor(c, 0.0)?;
        let r: Vec<f64> = y.iter().zip(m.data()).map(|(a, b)| a - b).collect();
        let alpha = chol.solve(&r);
        let value =
            -0.5 * dot(&r, &alpha) - 0.5 * chol.log_det() - 0.5 * y.len() as f64 * ln_2pi();
        Ok(self.push(
            Matrix::scalar(value),
            Op::GaussianLogLik {
                cov,
                mean,
                chol,
                alpha,
            },
        ))
    }

    /// `KL(N(mean, cov + jitter·I) ‖ q)` with `q` held fixed.
    pub fn kl_to_fixed(&mut self, cov: Var, mean: Var, q: &Mvn, jitter: f64) -> Result<Var> {
        let (c, m) = (self.value(cov), self.value(mean));
        let n = q.dim();
        if c.shape() != (n, n) || m.shape() != (n, 1) {
            return Err(Error::dims(format!(
                "KL with cov {:?}, mean {:?} against dim {n}",
                c.shape(),
                m.shape()
            )));
        }
        let chol_p = Cholesky::factor(c, jitter)?;
        let trace = q.chol().solve_lower_mat(chol_p.l()).frobenius_sq();
        let diff: Vec<f64> = m.data().iter().zip(q.mean()).map(|(a, b)| a - b).collect();
        let q_inv_diff = q.chol().solve(&diff);
        let value = 0.5
            * (trace + dot(&diff, &q_inv_diff) - n as f64 + q.chol().log_det()
                - chol_p.log_det());
        let q_inv = q.chol().inverse();
        Ok(self.push(
            Matrix::scalar(value),
            Op::KlToFixed {
                cov,
                mean,
                chol_p,
                q_inv,
                q_inv_diff,
            },
        ))
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let v = self.value(a).frobenius_sq();
        self.push(Matrix::scalar(v), Op::SumSquares(a))
    }

    /// Records an MLP whose parameters start at `offset`.
    pub fn mlp(&mut self, spec: &MlpSpec, offset: usize, input: Var) -> Result<Var> {
        if self.value(input).cols() != spec.input_dim {
            return Err(Error::dims(format!(
                "network input has {} columns, expected {}",
                self.value(input).cols(),
                spec.input_dim
            )));
        }
        let layers = spec.layer_dims();
        let last = layers.len() - 1;
        let mut h = input;
        let mut off = offset;
        for (k, (fan_in, fan_out)) in layers.into_iter().enumerate() {
            let w = self.param(off, fan_in, fan_out)?;
            off += fan_in * fan_out;
            let b = self.param(off, 1, fan_out)?;
            off += fan_out;
            let z = self.matmul(h, w)?;
            let z = self.add_row(z, b)?;
            h = if k < last { self.tanh(z) } else { z };
        }
        Ok(h)
    }

    /// Gradient of the scalar node `loss` with respect to every parameter.
    pub fn backprop(&self, loss: Var) -> Result<Vec<f64>> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Graph(format!(
                "loss has shape {:?}, expected a scalar",
                self.value(loss).shape()
            )));
        }
        let mut reachable = vec![false; loss.0 + 1];
        reachable[loss.0] = true;
        let mut touches_params = false;
        for i in (0..=loss.0).rev() {
            if !reachable[i] {
                continue;
            }
            match self.nodes[i].op {
                Op::Param { .. } => touches_params = true,
                _ => {
                    for p in self.parents(i) {
                        reachable[p.0] = true;
                    }
                }
            }
        }
        if !touches_params {
            return Err(Error::Graph("loss does not depend on any parameter".into()));
        }

        let mut grads = vec![0.0; self.params.len()];
        let mut adj: Vec<Option<Matrix>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(Matrix::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param { offset } => {
                    for (k, v) in g.data().iter().enumerate() {
                        grads[offset + k] += v;
                    }
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b))?;
                    let gb = self.value(*a).t_matmul(&g)?;
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *b, gb);
                }
                Op::AddRow(a, bias) => {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut adj, *bias, gb);
                    accumulate(&mut adj, *a, g);
                }
                Op::Tanh(a) => {
                    let ga = g.zip_with(&node.value, |gv, y| gv * (1.0 - y * y))?;
                    accumulate(&mut adj, *a, ga);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *b, g.clone());
                    accumulate(&mut adj, *a, g);
                }
                Op::Scale(a, s) => accumulate(&mut adj, *a, g.scale(*s)),
                Op::Broadcast(s) => {
                    let total: f64 = g.data().iter().sum();
                    accumulate(&mut adj, *s, Matrix::scalar(total));
                }
                Op::SeKernel {
                    fa,
                    fb,
                    log_scale,
                    log_len,
                    sqdist,
                } => {
                    let k = &node.value;
                    let len = self.scalar(*log_len).exp();
                    let gk = g.zip_with(k, |a, b| a * b)?;
                    let g_scale: f64 = gk.data().iter().sum();
                    let g_len: f64 = gk
                        .data()
                        .iter()
                        .zip(sqdist.data())
                        .map(|(a, d)| a * d)
                        .sum::<f64>()
                        / (2.0 * len);
                    accumulate(&mut adj, *log_scale, Matrix::scalar(g_scale));
                    accumulate(&mut adj, *log_len, Matrix::scalar(g_len));
                    // ∂K_ij/∂D_ij = −K_ij / (2 len)
                    let w = gk.scale(-1.0 / (2.0 * len));
                    let (a, b) = (self.value(*fa), self.value(*fb));
                    let row_sums: Vec<f64> = w.row_iter().map(|r| r.iter().sum()).collect();
                    let mut col_sums = vec![0.0; w.cols()];
                    for r in w.row_iter() {
                        for (c, v) in col_sums.iter_mut().zip(r) {
                            *c += v;
                        }
                    }
                    let wb = w.matmul(b)?;
                    let wta = w.t_matmul(a)?;
                    let ga = Matrix::from_fn(a.rows(), a.cols(), |i, j| {
                        2.0 * (row_sums[i] * a[(i, j)] - wb[(i, j)])
                    });
                    let gb = Matrix::from_fn(b.rows(), b.cols(), |i, j| {
                        -2.0 * (wta[(i, j)] - col_sums[i] * b[(i, j)])
                    });
                    accumulate(&mut adj, *fa, ga);
                    accumulate(&mut adj, *fb, gb);
                }
                Op::AddNoise { cov, log_noise } => {
                    let var = (2.0 * self.scalar(*log_noise)).exp();
                    accumulate(&mut adj, *log_noise, Matrix::scalar(2.0 * var * g.trace()));
                    accumulate(&mut adj, *cov, g);
                }
                Op::GaussianLogLik {
                    cov,
                    mean,
                    chol,
                    alpha,
                } => {
                    let s = g.as_scalar();
                    let inv = chol.inverse();
                    let gc = Matrix::from_fn(alpha.len(), alpha.len(), |i, j| {
                        0.5 * s * (alpha[i] * alpha[j] - inv[(i, j)])
                    });
                    let gm = Matrix::column_vector(&alpha.iter().map(|a| s * a).collect::<Vec<_>>());
                    accumulate(&mut adj, *cov, gc);
                    accumulate(&mut adj, *mean, gm);
                }
                Op::KlToFixed {
                    cov,
                    mean,
                    chol_p,
                    q_inv,
                    q_inv_diff,
                } => {
                    let s = g.as_scalar();
                    let p_inv = chol_p.inverse();
                    let gc = q_inv.sub(&p_inv)?.scale(0.5 * s);
                    let gm = Matrix::column_vector(
                        &q_inv_diff.iter().map(|a| s * a).collect::<Vec<_>>(),
                    );
                    accumulate(&mut adj, *cov, gc);
                    accumulate(&mut adj, *mean, gm);
                }
                Op::SumSquares(a) => {
                    let s = 2.0 * g.as_scalar();
                    let ga = self.value(*a).scale(s);
                    accumulate(&mut adj, *a, ga);
                }
            }
        }
        Ok(grads)
    }

    fn parents(&self, i: usize) -> Vec<Var> {
        match &self.nodes[i].op {
            Op::Constant | Op::Param { .. } => vec![],
            Op::MatMul(a, b) | Op::AddRow(a, b) | Op::Add(a, b) => vec![*a, *b],
            Op::Tanh(a) | Op::Scale(a, _) | Op::Broadcast(a) | Op::SumSquares(a) => vec![*a],
            Op::SeKernel {
                fa,
                fb,
                log_scale,
                log_len,
                ..
            } => vec![*fa, *fb, *log_scale, *log_len],
            Op::AddNoise { cov, log_noise } => vec![*cov, *log_noise],
            Op::GaussianLogLik { cov, mean, .. } | Op::KlToFixed { cov, mean, .. } => {
                vec![*cov, *mean]
            }
        }
    }
}

fn accumulate(adj: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut adj[v.0] {
        Some(existing) => existing.add_assign_scaled(&g, 1.0),
        slot @ None => *slot = Some(g),
    }
}

/// Central finite-difference gradient of `f` at `x`.
pub fn finite_difference_gradient(
    x: &[f64],
    h: f64,
    mut f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut point = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = point[i];
        point[i] = orig + h;
        let up = f(&point)?;
        point[i] = orig - h;
        let down = f(&point)?;
        point[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}
