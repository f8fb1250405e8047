//! Reverse-mode tape over [`Mat`] values.
//!
//! A `Graph` is built per forward pass, `backward` walks the tape once, and
//! `export_grads` accumulates leaf gradients into the parameter store. The op
//! set is exactly what the generator, discriminator, and prompt mapper need;
//! everything is f64 and single-threaded so runs are bit-reproducible.

use super::mat::{log_softmax_in_place, softmax_in_place, Mat};
use super::params::{ParamId, Params};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

enum Op {
    Leaf { param: Option<ParamId> },
    MatMul { a: usize, b: usize },
    /// C = A · Bᵀ
    MatMulBt { a: usize, b: usize },
    Add { a: usize, b: usize },
    /// Row vector broadcast-added to every row of `a`.
    AddRow { a: usize, row: usize },
    AddConst { a: usize },
    Scale { a: usize, k: f64 },
    Tanh { a: usize },
    Gelu { a: usize },
    LayerNorm { a: usize, gamma: usize, beta: usize, xhat: Mat, inv_std: Vec<f64> },
    SoftmaxRows { a: usize },
    LogSoftmaxRows { a: usize },
    EmbedRows { table: usize, ids: Vec<usize> },
    ConcatRows { a: usize, b: usize },
    SliceCols { a: usize, start: usize },
    ConcatCols { a: usize, b: usize },
    MeanRows { a: usize },
    PickEntries { a: usize, picks: Vec<(usize, usize)> },
    DotConst { a: usize, weights: Vec<f64> },
    Reshape { a: usize },
}

struct Node {
    value: Mat,
    grad: Mat,
    op: Op,
}

pub struct Graph {
    nodes: Vec<Node>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        let grad = Mat::zeros(value.rows, value.cols);
        self.nodes.push(Node { value, grad, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> &Mat {
        &self.nodes[v.0].grad
    }

    pub fn constant(&mut self, m: Mat) -> Var {
        self.push(m, Op::Leaf { param: None })
    }

    /// Leaf bound to a parameter; its gradient flows back to the store via
    /// [`Graph::export_grads`].
    pub fn param(&mut self, params: &Params, id: ParamId) -> Var {
        self.push(params.value(id).clone(), Op::Leaf { param: Some(id) })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a.0].value.matmul(&self.nodes[b.0].value);
        self.push(v, Op::MatMul { a: a.0, b: b.0 })
    }

    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a.0].value.matmul_bt(&self.nodes[b.0].value);
        self.push(v, Op::MatMulBt { a: a.0, b: b.0 })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.nodes[a.0].value.clone();
        v.add_assign(&self.nodes[b.0].value);
        self.push(v, Op::Add { a: a.0, b: b.0 })
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = &self.nodes[row.0].value;
        assert_eq!(r.rows, 1, "add_row expects a 1 x n row");
        let mut v = self.nodes[a.0].value.clone();
        assert_eq!(v.cols, r.cols);
        for i in 0..v.rows {
            for (x, b) in v.row_mut(i).iter_mut().zip(r.data.iter()) {
                *x += b;
            }
        }
        self.push(v, Op::AddRow { a: a.0, row: row.0 })
    }

    /// Add a constant matrix (e.g. an attention mask); no gradient flows into it.
    pub fn add_const(&mut self, a: Var, c: &Mat) -> Var {
        let mut v = self.nodes[a.0].value.clone();
        v.add_assign(c);
        self.push(v, Op::AddConst { a: a.0 })
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let mut v = self.nodes[a.0].value.clone();
        v.scale_assign(k);
        self.push(v, Op::Scale { a: a.0, k })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let mut v = self.nodes[a.0].value.clone();
        for x in &mut v.data {
            *x = x.tanh();
        }
        self.push(v, Op::Tanh { a: a.0 })
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let mut v = self.nodes[a.0].value.clone();
        for x in &mut v.data {
            let u = GELU_C * (*x + GELU_A * *x * *x * *x);
            *x = 0.5 * *x * (1.0 + u.tanh());
        }
        self.push(v, Op::Gelu { a: a.0 })
    }

    pub fn layer_norm(&mut self, a: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let x = &self.nodes[a.0].value;
        let g = &self.nodes[gamma.0].value;
        let b = &self.nodes[beta.0].value;
        assert_eq!(g.rows, 1);
        assert_eq!(b.rows, 1);
        assert_eq!(g.cols, x.cols);
        let mut out = Mat::zeros(x.rows, x.cols);
        let mut xhat = Mat::zeros(x.rows, x.cols);
        let mut inv_std = Vec::with_capacity(x.rows);
        for i in 0..x.rows {
            let row = x.row(i);
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / row.len() as f64;
            let istd = 1.0 / (var + eps).sqrt();
            inv_std.push(istd);
            for (j, &v) in row.iter().enumerate() {
                let xh = (v - mean) * istd;
                xhat.set(i, j, xh);
                out.set(i, j, xh * g.data[j] + b.data[j]);
            }
        }
        self.push(
            out,
            Op::LayerNorm { a: a.0, gamma: gamma.0, beta: beta.0, xhat, inv_std },
        )
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.nodes[a.0].value.clone();
        for i in 0..v.rows {
            softmax_in_place(v.row_mut(i));
        }
        self.push(v, Op::SoftmaxRows { a: a.0 })
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.nodes[a.0].value.clone();
        for i in 0..v.rows {
            log_softmax_in_place(v.row_mut(i));
        }
        self.push(v, Op::LogSoftmaxRows { a: a.0 })
    }

    /// Gather rows `ids` from an embedding table.
    pub fn embed_rows(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = &self.nodes[table.0].value;
        let mut v = Mat::zeros(ids.len(), t.cols);
        for (i, &id) in ids.iter().enumerate() {
            v.row_mut(i).copy_from_slice(t.row(id));
        }
        self.push(v, Op::EmbedRows { table: table.0, ids: ids.to_vec() })
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Var {
        let (ma, mb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ma.cols, mb.cols);
        let mut data = Vec::with_capacity(ma.len() + mb.len());
        data.extend_from_slice(&ma.data);
        data.extend_from_slice(&mb.data);
        let v = Mat::from_vec(ma.rows + mb.rows, ma.cols, data);
        self.push(v, Op::ConcatRows { a: a.0, b: b.0 })
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let m = &self.nodes[a.0].value;
        assert!(start + len <= m.cols);
        let mut v = Mat::zeros(m.rows, len);
        for i in 0..m.rows {
            v.row_mut(i).copy_from_slice(&m.row(i)[start..start + len]);
        }
        self.push(v, Op::SliceCols { a: a.0, start })
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (ma, mb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ma.rows, mb.rows);
        let mut v = Mat::zeros(ma.rows, ma.cols + mb.cols);
        for i in 0..ma.rows {
            v.row_mut(i)[..ma.cols].copy_from_slice(ma.row(i));
            v.row_mut(i)[ma.cols..].copy_from_slice(mb.row(i));
        }
        self.push(v, Op::ConcatCols { a: a.0, b: b.0 })
    }

    /// Mean over rows, producing a 1 x cols row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let m = &self.nodes[a.0].value;
        let mut v = Mat::zeros(1, m.cols);
        for i in 0..m.rows {
            for (o, &x) in v.data.iter_mut().zip(m.row(i).iter()) {
                *o += x;
            }
        }
        v.scale_assign(1.0 / m.rows as f64);
        self.push(v, Op::MeanRows { a: a.0 })
    }

    /// Gather individual entries into a 1 x picks.len() row.
    pub fn pick_entries(&mut self, a: Var, picks: &[(usize, usize)]) -> Var {
        let m = &self.nodes[a.0].value;
        let v = Mat::row_vec(picks.iter().map(|&(r, c)| m.at(r, c)).collect());
        self.push(v, Op::PickEntries { a: a.0, picks: picks.to_vec() })
    }

    /// Weighted sum with constant weights, producing a scalar.
    pub fn dot_const(&mut self, a: Var, weights: &[f64]) -> Var {
        let m = &self.nodes[a.0].value;
        assert_eq!(m.len(), weights.len());
        let s = m.data.iter().zip(weights.iter()).map(|(x, w)| x * w).sum();
        self.push(Mat::scalar(s), Op::DotConst { a: a.0, weights: weights.to_vec() })
    }

    /// Row-major reshape; element order is preserved.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let m = &self.nodes[a.0].value;
        assert_eq!(m.len(), rows * cols, "reshape must preserve element count");
        let v = Mat::from_vec(rows, cols, m.data.clone());
        self.push(v, Op::Reshape { a: a.0 })
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let n = self.nodes[a.0].value.len();
        self.dot_const(a, &vec![1.0; n])
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.nodes[a.0].value.len();
        self.dot_const(a, &vec![1.0 / n as f64; n])
    }

    /// Backpropagate from a scalar loss node.
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(self.nodes[loss.0].value.len(), 1, "backward needs a scalar");
        self.nodes[loss.0].grad.fill(1.0);
        for idx in (0..self.nodes.len()).rev() {
            if self.nodes[idx].grad.data.iter().all(|&g| g == 0.0) {
                continue;
            }
            self.step_backward(idx);
        }
    }

    fn step_backward(&mut self, idx: usize) {
        // Split borrows: take the grad out, push into parents, put it back.
        let grad = std::mem::replace(&mut self.nodes[idx].grad, Mat::zeros(0, 0));
        match &self.nodes[idx].op {
            Op::Leaf { .. } => {}
            Op::MatMul { a, b } => {
                let (a, b) = (*a, *b);
                let da = grad.matmul_bt(&self.nodes[b].value);
                let db = self.nodes[a].value.t_matmul(&grad);
                self.nodes[a].grad.add_assign(&da);
                self.nodes[b].grad.add_assign(&db);
            }
            Op::MatMulBt { a, b } => {
                let (a, b) = (*a, *b);
                let da = grad.matmul(&self.nodes[b].value);
                let db = grad.t_matmul(&self.nodes[a].value);
                self.nodes[a].grad.add_assign(&da);
                self.nodes[b].grad.add_assign(&db);
            }
            Op::Add { a, b } => {
                let (a, b) = (*a, *b);
                self.nodes[a].grad.add_assign(&grad);
                self.nodes[b].grad.add_assign(&grad);
            }
            Op::AddRow { a, row } => {
                let (a, row) = (*a, *row);
                self.nodes[a].grad.add_assign(&grad);
                let cols = grad.cols;
                for i in 0..grad.rows {
                    for j in 0..cols {
                        self.nodes[row].grad.data[j] += grad.at(i, j);
                    }
                }
            }
            Op::AddConst { a } => {
                let a = *a;
                self.nodes[a].grad.add_assign(&grad);
            }
            Op::Scale { a, k } => {
                let (a, k) = (*a, *k);
                let mut g = grad.clone();
                g.scale_assign(k);
                self.nodes[a].grad.add_assign(&g);
            }
            Op::Tanh { a } => {
                let a = *a;
                let y = &self.nodes[idx].value;
                let mut g = grad.clone();
                for (gv, yv) in g.data.iter_mut().zip(y.data.iter()) {
                    *gv *= 1.0 - yv * yv;
                }
                self.nodes[a].grad.add_assign(&g);
            }
            Op::Gelu { a } => {
                let a = *a;
                let x = &self.nodes[a].value;
                let mut g = grad.clone();
                for (gv, &xv) in g.data.iter_mut().zip(x.data.iter()) {
                    let u = GELU_C * (xv + GELU_A * xv * xv * xv);
                    let t = u.tanh();
                    let du = GELU_C * (1.0 + 3.0 * GELU_A * xv * xv);
                    *gv *= 0.5 * (1.0 + t) + 0.5 * xv * (1.0 - t * t) * du;
                }
                self.nodes[a].grad.add_assign(&g);
            }
            Op::LayerNorm { a, gamma, beta, xhat, inv_std } => {
                let (a, gamma, beta) = (*a, *gamma, *beta);
                let xhat = xhat.clone();
                let inv_std = inv_std.clone();
                let gval = self.nodes[gamma].value.clone();
                let n = xhat.cols as f64;
                let mut da = Mat::zeros(xhat.rows, xhat.cols);
                let mut dgamma = Mat::zeros(1, xhat.cols);
                let mut dbeta = Mat::zeros(1, xhat.cols);
                for i in 0..xhat.rows {
                    let gr = grad.row(i);
                    let xr = xhat.row(i);
                    let mut sum_gy = 0.0;
                    let mut sum_gy_x = 0.0;
                    for j in 0..xhat.cols {
                        let gy = gr[j] * gval.data[j];
                        sum_gy += gy;
                        sum_gy_x += gy * xr[j];
                        dgamma.data[j] += gr[j] * xr[j];
                        dbeta.data[j] += gr[j];
                    }
                    for j in 0..xhat.cols {
                        let gy = gr[j] * gval.data[j];
                        da.set(i, j, (gy - sum_gy / n - xr[j] * sum_gy_x / n) * inv_std[i]);
                    }
                }
                self.nodes[a].grad.add_assign(&da);
                self.nodes[gamma].grad.add_assign(&dgamma);
                self.nodes[beta].grad.add_assign(&dbeta);
            }
            Op::SoftmaxRows { a } => {
                let a = *a;
                let y = self.nodes[idx].value.clone();
                let mut da = Mat::zeros(y.rows, y.cols);
                for i in 0..y.rows {
                    let yr = y.row(i);
                    let gr = grad.row(i);
                    let dot: f64 = yr.iter().zip(gr.iter()).map(|(y, g)| y * g).sum();
                    for j in 0..y.cols {
                        da.set(i, j, yr[j] * (gr[j] - dot));
                    }
                }
                self.nodes[a].grad.add_assign(&da);
            }
            Op::LogSoftmaxRows { a } => {
                let a = *a;
                let y = self.nodes[idx].value.clone();
                let mut da = Mat::zeros(y.rows, y.cols);
                for i in 0..y.rows {
                    let gr = grad.row(i);
                    let gsum: f64 = gr.iter().sum();
                    let yr = y.row(i);
                    for j in 0..y.cols {
                        da.set(i, j, gr[j] - yr[j].exp() * gsum);
                    }
                }
                self.nodes[a].grad.add_assign(&da);
            }
            Op::EmbedRows { table, ids } => {
                let table = *table;
                let ids = ids.clone();
                for (i, id) in ids.iter().enumerate() {
                    let cols = grad.cols;
                    for j in 0..cols {
                        self.nodes[table].grad.data[id * cols + j] += grad.at(i, j);
                    }
                }
            }
            Op::ConcatRows { a, b } => {
                let (a, b) = (*a, *b);
                let ra = self.nodes[a].value.rows;
                let cols = grad.cols;
                for i in 0..ra {
                    for j in 0..cols {
                        self.nodes[a].grad.data[i * cols + j] += grad.at(i, j);
                    }
                }
                for i in ra..grad.rows {
                    for j in 0..cols {
                        self.nodes[b].grad.data[(i - ra) * cols + j] += grad.at(i, j);
                    }
                }
            }
            Op::SliceCols { a, start } => {
                let (a, start) = (*a, *start);
                let acols = self.nodes[a].value.cols;
                for i in 0..grad.rows {
                    for j in 0..grad.cols {
                        self.nodes[a].grad.data[i * acols + start + j] += grad.at(i, j);
                    }
                }
            }
            Op::ConcatCols { a, b } => {
                let (a, b) = (*a, *b);
                let ca = self.nodes[a].value.cols;
                let cb = self.nodes[b].value.cols;
                for i in 0..grad.rows {
                    for j in 0..ca {
                        self.nodes[a].grad.data[i * ca + j] += grad.at(i, j);
                    }
                    for j in 0..cb {
                        self.nodes[b].grad.data[i * cb + j] += grad.at(i, ca + j);
                    }
                }
            }
            Op::MeanRows { a } => {
                let a = *a;
                let nrows = self.nodes[a].value.rows;
                let inv = 1.0 / nrows as f64;
                for i in 0..nrows {
                    for j in 0..grad.cols {
                        self.nodes[a].grad.data[i * grad.cols + j] += grad.data[j] * inv;
                    }
                }
            }
            Op::PickEntries { a, picks } => {
                let a = *a;
                let picks = picks.clone();
                let acols = self.nodes[a].value.cols;
                for (n, (r, c)) in picks.iter().enumerate() {
                    self.nodes[a].grad.data[r * acols + c] += grad.data[n];
                }
            }
            Op::DotConst { a, weights } => {
                let a = *a;
                let weights = weights.clone();
                let g = grad.data[0];
                for (gv, w) in self.nodes[a].grad.data.iter_mut().zip(weights.iter()) {
                    *gv += g * w;
                }
            }
            Op::Reshape { a } => {
                let a = *a;
                for (gv, g) in self.nodes[a].grad.data.iter_mut().zip(grad.data.iter()) {
                    *gv += g;
                }
            }
        }
        self.nodes[idx].grad = grad;
    }

    /// Accumulate leaf gradients into the parameter store.
    pub fn export_grads(&self, params: &mut Params) {
        for node in &self.nodes {
            if let Op::Leaf { param: Some(id) } = node.op {
                params.grad_mut(id).add_assign(&node.grad);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Params;

    /// Central finite differences of `f` at `params[id]`.
    fn finite_diff(
        params: &mut Params,
        id: ParamId,
        f: &dyn Fn(&Params) -> f64,
        h: f64,
    ) -> Mat {
        let n = params.value(id).len();
        let (rows, cols) = {
            let m = params.value(id);
            (m.rows, m.cols)
        };
        let mut out = Mat::zeros(rows, cols);
        for i in 0..n {
            let orig = params.value(id).data[i];
            params.value_mut(id).data[i] = orig + h;
            let fp = f(params);
            params.value_mut(id).data[i] = orig - h;
            let fm = f(params);
            params.value_mut(id).data[i] = orig;
            out.data[i] = (fp - fm) / (2.0 * h);
        }
        out
    }

    fn assert_close(analytic: &Mat, numeric: &Mat, rtol: f64) {
        for (a, n) in analytic.data.iter().zip(numeric.data.iter()) {
            let denom = a.abs().max(n.abs()).max(1e-8);
            assert!(
                (a - n).abs() / denom < rtol,
                "gradient mismatch: analytic {a} vs numeric {n}"
            );
        }
    }

    fn seeded_mat(rows: usize, cols: usize, seed: u64) -> Mat {
        // Cheap deterministic fill, irrational stride to avoid structure.
        let mut m = Mat::zeros(rows, cols);
        for (i, v) in m.data.iter_mut().enumerate() {
            *v = (((seed as f64 + 1.3) * (i as f64 + 0.7)).sin()) * 0.5;
        }
        m
    }

    #[test]
    fn grad_check_linear_tanh_chain() {
        let mut params = Params::new();
        let w = params.add("w", seeded_mat(3, 4, 1), true);
        let b = params.add("b", seeded_mat(1, 4, 2), false);
        let x = seeded_mat(2, 3, 3);
        let f = |p: &Params| {
            let mut g = Graph::new();
            let xv = g.constant(x.clone());
            let wv = g.param(p, w);
            let bv = g.param(p, b);
            let h = g.matmul(xv, wv);
            let h = g.add_row(h, bv);
            let h = g.tanh(h);
            let loss = g.mean_all(h);
            g.value(loss).data[0]
        };
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let wv = g.param(&params, w);
        let bv = g.param(&params, b);
        let h = g.matmul(xv, wv);
        let h = g.add_row(h, bv);
        let h = g.tanh(h);
        let loss = g.mean_all(h);
        g.backward(loss);
        g.export_grads(&mut params);
        let num_w = finite_diff(&mut params, w, &f, 1e-6);
        let num_b = finite_diff(&mut params, b, &f, 1e-6);
        assert_close(params.grad(w), &num_w, 1e-6);
        assert_close(params.grad(b), &num_b, 1e-6);
    }

    #[test]
    fn grad_check_layernorm_softmax_pick() {
        let mut params = Params::new();
        let w = params.add("w", seeded_mat(4, 4, 4), true);
        let gamma = params.add("gamma", {
            let mut m = seeded_mat(1, 4, 5);
            m.data.iter_mut().for_each(|v| *v += 1.0);
            m
        }, false);
        let beta = params.add("beta", seeded_mat(1, 4, 6), false);
        let x = seeded_mat(3, 4, 7);
        let run = |p: &Params, want_grads: bool, store: &mut Option<(Mat, Mat, Mat)>| -> f64 {
            let mut g = Graph::new();
            let xv = g.constant(x.clone());
            let wv = g.param(p, w);
            let gv = g.param(p, gamma);
            let bv = g.param(p, beta);
            let h = g.matmul(xv, wv);
            let h = g.layer_norm(h, gv, bv, 1e-5);
            let h = g.log_softmax_rows(h);
            let picked = g.pick_entries(h, &[(0, 1), (1, 3), (2, 0)]);
            let loss = g.dot_const(picked, &[0.5, -1.0, 2.0]);
            if want_grads {
                g.backward(loss);
                *store = Some((
                    g.grad(wv).clone(),
                    g.grad(gv).clone(),
                    g.grad(bv).clone(),
                ));
            }
            g.value(loss).data[0]
        };
        let mut store = None;
        run(&params, true, &mut store);
        let (gw, gg, gb) = store.unwrap();
        let f = |p: &Params| {
            let mut s = None;
            run(p, false, &mut s)
        };
        assert_close(&gw, &finite_diff(&mut params, w, &f, 1e-6), 1e-5);
        assert_close(&gg, &finite_diff(&mut params, gamma, &f, 1e-6), 1e-5);
        assert_close(&gb, &finite_diff(&mut params, beta, &f, 1e-6), 1e-5);
    }

    #[test]
    fn grad_check_attention_shaped_graph() {
        // Exercises matmul_bt, softmax, concat/slice cols, embed, mean_rows.
        let mut params = Params::new();
        let table = params.add("emb", seeded_mat(5, 6, 8), true);
        let wq = params.add("wq", seeded_mat(6, 6, 9), true);
        let ids = vec![1usize, 4, 2];
        let run = |p: &Params, want: bool, store: &mut Option<(Mat, Mat)>| -> f64 {
            let mut g = Graph::new();
            let t = g.param(p, table);
            let wqv = g.param(p, wq);
            let x = g.embed_rows(t, &ids);
            let q = g.matmul(x, wqv);
            let q1 = g.slice_cols(q, 0, 3);
            let q2 = g.slice_cols(q, 3, 3);
            let scores = g.matmul_bt(q1, q2);
            let probs = g.softmax_rows(scores);
            let mixed = g.matmul(probs, q2);
            let joined = g.concat_cols(q1, mixed);
            let pooled = g.mean_rows(joined);
            let act = g.gelu(pooled);
            let loss = g.sum_all(act);
            if want {
                g.backward(loss);
                *store = Some((g.grad(t).clone(), g.grad(wqv).clone()));
            }
            g.value(loss).data[0]
        };
        let mut store = None;
        run(&params, true, &mut store);
        let (gt, gq) = store.unwrap();
        let f = |p: &Params| {
            let mut s = None;
            run(p, false, &mut s)
        };
        assert_close(&gt, &finite_diff(&mut params, table, &f, 1e-6), 1e-5);
        assert_close(&gq, &finite_diff(&mut params, wq, &f, 1e-6), 1e-5);
    }
}
