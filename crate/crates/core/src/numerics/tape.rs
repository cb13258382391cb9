use num_traits::Float;

use super::tensor::Matrix;
use crate::error::Error;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Matmul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Relu(NodeId),
    SoftmaxRows(NodeId),
    ConcatCols(Vec<NodeId>),
    SliceCols(NodeId, usize, usize),
    /// Row-wise scaling of a matrix by a column vector.
    ColScale(NodeId, NodeId),
    GatherRows(NodeId, Vec<usize>),
    Sum(NodeId),
    MaskedCrossEntropy(NodeId, Vec<Option<usize>>),
}

struct Node<S> {
    value: Matrix<S>,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation so gradients can be replayed in exact
/// reverse order. Single-threaded by construction; use one tape per job.
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

/// Gradients produced by [`Tape::backward`], indexed by node id.
pub struct Grads<S> {
    grads: Vec<Option<Matrix<S>>>,
}

impl<S: Float> Grads<S> {
    pub fn get(&self, id: NodeId) -> Option<&Matrix<S>> {
        self.grads[id.0].as_ref()
    }
}

impl<S: Float> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Float> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn value(&self, id: NodeId) -> &Matrix<S> {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix<S>, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs_grad(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// Constant input; no gradient is accumulated into it.
    pub fn constant(&mut self, value: Matrix<S>) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Differentiable leaf (a model parameter).
    pub fn param(&mut self, value: Matrix<S>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).matmul(self.value(b));
        let rg = self.needs_grad(&[a, b]);
        self.push(value, Op::Matmul(a, b), rg)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).add(self.value(b));
        let rg = self.needs_grad(&[a, b]);
        self.push(value, Op::Add(a, b), rg)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).relu();
        let rg = self.needs_grad(&[x]);
        self.push(value, Op::Relu(x), rg)
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).softmax_rows();
        let rg = self.needs_grad(&[x]);
        self.push(value, Op::SoftmaxRows(x), rg)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let values: Vec<&Matrix<S>> = parts.iter().map(|id| self.value(*id)).collect();
        let value = Matrix::concat_cols(&values);
        let rg = self.needs_grad(parts);
        self.push(value, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, end: usize) -> NodeId {
        let value = self.value(x).slice_cols(start, end);
        let rg = self.needs_grad(&[x]);
        self.push(value, Op::SliceCols(x, start, end), rg)
    }

    /// out[i][j] = mat[i][j] * col[i][0]; `col` must be rows x 1.
    pub fn col_scale(&mut self, mat: NodeId, col: NodeId) -> NodeId {
        let m = self.value(mat);
        let c = self.value(col);
        assert_eq!(
            (c.rows(), c.cols()),
            (m.rows(), 1),
            "col_scale shape mismatch: {}x{} scaled by {}x{}",
            m.rows(),
            m.cols(),
            c.rows(),
            c.cols()
        );
        let mut value = m.clone();
        for r in 0..value.rows() {
            let f = c.get(r, 0);
            for cc in 0..value.cols() {
                value.set(r, cc, value.get(r, cc) * f);
            }
        }
        let rg = self.needs_grad(&[mat, col]);
        self.push(value, Op::ColScale(mat, col), rg)
    }

    /// out row r = table row indices[r]. Gradients scatter-add into the table.
    pub fn gather_rows(&mut self, table: NodeId, indices: &[usize]) -> NodeId {
        let t = self.value(table);
        let mut value = Matrix::zeros(indices.len(), t.cols());
        for (r, &idx) in indices.iter().enumerate() {
            assert!(idx < t.rows(), "gather_rows index {} out of {} rows", idx, t.rows());
            for c in 0..t.cols() {
                value.set(r, c, t.get(idx, c));
            }
        }
        let rg = self.needs_grad(&[table]);
        self.push(value, Op::GatherRows(table, indices.to_vec()), rg)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let value = Matrix::scalar(self.value(x).sum());
        let rg = self.needs_grad(&[x]);
        self.push(value, Op::Sum(x), rg)
    }

    /// Mean of -log softmax(logits)[label] over rows with a label.
    /// Rows with `None` carry no loss and receive zero gradient.
    pub fn masked_cross_entropy(
        &mut self,
        logits: NodeId,
        labels: &[Option<usize>],
    ) -> Result<NodeId, Error> {
        let x = self.value(logits);
        assert_eq!(
            labels.len(),
            x.rows(),
            "label count {} does not match {} logit rows",
            labels.len(),
            x.rows()
        );
        let n_masked = labels.iter().filter(|l| l.is_some()).count();
        if n_masked == 0 {
            return Err(Error::NoSupervisedNodes);
        }
        let mut total = S::zero();
        for (r, label) in labels.iter().enumerate() {
            if let Some(cls) = label {
                assert!(
                    *cls < x.cols(),
                    "label {} out of range for {} classes",
                    cls,
                    x.cols()
                );
                let row = x.row(r);
                let max = row.iter().fold(S::neg_infinity(), |m, v| m.max(*v));
                let lse = row
                    .iter()
                    .fold(S::zero(), |acc, v| acc + (*v - max).exp())
                    .ln()
                    + max;
                total = total + lse - row[*cls];
            }
        }
        let value = Matrix::scalar(total / S::from(n_masked).unwrap());
        let rg = self.needs_grad(&[logits]);
        Ok(self.push(value, Op::MaskedCrossEntropy(logits, labels.to_vec()), rg))
    }

    /// Reverse pass from `root` (must be 1x1). Pure over the recorded tape:
    /// calling it twice yields identical gradients.
    pub fn backward(&self, root: NodeId) -> Grads<S> {
        assert_eq!(
            self.value(root).shape(),
            (1, 1),
            "backward root must be a scalar"
        );
        let mut grads: Vec<Option<Matrix<S>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Matrix::scalar(S::one()));

        for idx in (0..=root.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[idx].op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Matmul(a, b) => {
                    if self.nodes[a.0].requires_grad {
                        let da = g.matmul(&self.value(*b).transpose());
                        accumulate(&mut grads, *a, da);
                    }
                    if self.nodes[b.0].requires_grad {
                        let db = self.value(*a).transpose().matmul(&g);
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::Add(a, b) => {
                    if self.nodes[a.0].requires_grad {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.nodes[b.0].requires_grad {
                        accumulate(&mut grads, *b, g.clone());
                    }
                }
                Op::Relu(x) => {
                    // Subgradient at exactly 0 is 0.
                    let input = self.value(*x);
                    let mut dx = g.clone();
                    for (d, v) in dx.data_mut().iter_mut().zip(input.data()) {
                        if *v <= S::zero() {
                            *d = S::zero();
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::SoftmaxRows(x) => {
                    let s = &self.nodes[idx].value;
                    let mut dx = Matrix::zeros(s.rows(), s.cols());
                    for r in 0..s.rows() {
                        let dot = (0..s.cols())
                            .fold(S::zero(), |acc, c| acc + g.get(r, c) * s.get(r, c));
                        for c in 0..s.cols() {
                            dx.set(r, c, s.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let w = self.value(*p).cols();
                        if self.nodes[p.0].requires_grad {
                            accumulate(&mut grads, *p, g.slice_cols(off, off + w));
                        }
                        off += w;
                    }
                }
                Op::SliceCols(x, start, end) => {
                    let input = self.value(*x);
                    let mut dx = Matrix::zeros(input.rows(), input.cols());
                    for r in 0..input.rows() {
                        for c in *start..*end {
                            dx.set(r, c, g.get(r, c - start));
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::ColScale(mat, col) => {
                    let m = self.value(*mat);
                    let c = self.value(*col);
                    if self.nodes[mat.0].requires_grad {
                        let mut dm = g.clone();
                        for r in 0..dm.rows() {
                            let f = c.get(r, 0);
                            for cc in 0..dm.cols() {
                                dm.set(r, cc, dm.get(r, cc) * f);
                            }
                        }
                        accumulate(&mut grads, *mat, dm);
                    }
                    if self.nodes[col.0].requires_grad {
                        let mut dc = Matrix::zeros(c.rows(), 1);
                        for r in 0..m.rows() {
                            let dot = (0..m.cols())
                                .fold(S::zero(), |acc, cc| acc + g.get(r, cc) * m.get(r, cc));
                            dc.set(r, 0, dot);
                        }
                        accumulate(&mut grads, *col, dc);
                    }
                }
                Op::GatherRows(table, indices) => {
                    let t = self.value(*table);
                    let mut dt = Matrix::zeros(t.rows(), t.cols());
                    for (r, &idx2) in indices.iter().enumerate() {
                        for c in 0..t.cols() {
                            dt.set(idx2, c, dt.get(idx2, c) + g.get(r, c));
                        }
                    }
                    accumulate(&mut grads, *table, dt);
                }
                Op::Sum(x) => {
                    let input = self.value(*x);
                    let dx = Matrix::ones(input.rows(), input.cols()).scale(g.as_scalar());
                    accumulate(&mut grads, *x, dx);
                }
                Op::MaskedCrossEntropy(logits, labels) => {
                    let x = self.value(*logits);
                    let n_masked = labels.iter().filter(|l| l.is_some()).count();
                    let scale = g.as_scalar() / S::from(n_masked).unwrap();
                    let sm = x.softmax_rows();
                    let mut dx = Matrix::zeros(x.rows(), x.cols());
                    for (r, label) in labels.iter().enumerate() {
                        if let Some(cls) = label {
                            for c in 0..x.cols() {
                                let onehot = if c == *cls { S::one() } else { S::zero() };
                                dx.set(r, c, (sm.get(r, c) - onehot) * scale);
                            }
                        }
                    }
                    accumulate(&mut grads, *logits, dx);
                }
            }
            grads[idx] = Some(g);
        }
        Grads { grads }
    }
}

fn accumulate<S: Float>(grads: &mut [Option<Matrix<S>>], id: NodeId, g: Matrix<S>) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_gradient_of_sum_is_ones_times_bt() {
        // d sum(a*b) / da = ones(m,n) * b^T
        let mut tape = Tape::new();
        let a_val = Matrix::from_vec(3, 4, (0..12).map(|i| 0.1 * i as f64 - 0.5).collect());
        let b_val = Matrix::from_vec(4, 2, (0..8).map(|i| 0.3 * i as f64 - 1.0).collect());
        let a = tape.param(a_val);
        let b = tape.param(b_val.clone());
        let c = tape.matmul(a, b);
        let s = tape.sum(c);
        let grads = tape.backward(s);
        let expected = Matrix::ones(3, 2).matmul(&b_val.transpose());
        assert!(grads.get(a).unwrap().max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn relu_subgradient_zero_at_origin() {
        let mut tape = Tape::new();
        let x = tape.param(Matrix::from_rows(&[vec![3.0, -3.0]]));
        let y = tape.relu(x);
        let s = tape.sum(y);
        let grads = tape.backward(s);
        assert_eq!(grads.get(x).unwrap(), &Matrix::from_rows(&[vec![1.0, 0.0]]));
    }

    #[test]
    fn softmax_rows_matches_direct_evaluation() {
        // Oracle: direct exp/sum of row [1,2,3].
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]));
        let s = tape.softmax_rows(x);
        let z: f64 = 1f64.exp() + 2f64.exp() + 3f64.exp();
        for (c, v) in [1f64, 2.0, 3.0].iter().enumerate() {
            assert!((tape.value(s).get(0, c) - v.exp() / z).abs() < 1e-15);
        }
    }

    #[test]
    fn cross_entropy_memorized_row_near_zero_loss() {
        let mut tape = Tape::new();
        let logits = tape.param(Matrix::from_rows(&[vec![10.0, -10.0]]));
        let loss = tape.masked_cross_entropy(logits, &[Some(0)]).unwrap();
        assert!(tape.value(loss).as_scalar() < 1e-8);
    }

    #[test]
    fn cross_entropy_uniform_logits_is_ln_c() {
        let mut tape = Tape::<f64>::new();
        let logits = tape.param(Matrix::zeros(2, 6));
        let loss = tape
            .masked_cross_entropy(logits, &[Some(1), Some(4)])
            .unwrap();
        assert!((tape.value(loss).as_scalar() - 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_masked_rows_get_zero_gradient() {
        let mut tape = Tape::new();
        let logits = tape.param(Matrix::from_rows(&[
            vec![1.0, 2.0, 3.0],
            vec![4.0, 5.0, 6.0],
            vec![7.0, 8.0, 9.0],
        ]));
        let loss = tape
            .masked_cross_entropy(logits, &[Some(0), None, Some(2)])
            .unwrap();
        let grads = tape.backward(loss);
        let g = grads.get(logits).unwrap();
        for c in 0..3 {
            assert_eq!(g.get(1, c), 0.0);
        }
        assert!(g.get(0, 0).abs() > 0.0);
    }

    #[test]
    fn cross_entropy_empty_mask_errors() {
        let mut tape = Tape::<f64>::new();
        let logits = tape.param(Matrix::zeros(2, 3));
        let err = tape.masked_cross_entropy(logits, &[None, None]).unwrap_err();
        assert_eq!(err.to_string(), "no supervised nodes");
    }

    #[test]
    fn backward_twice_yields_identical_gradients() {
        let mut tape = Tape::new();
        let x = tape.param(Matrix::from_rows(&[vec![0.5, -1.5, 2.5]]));
        let r = tape.relu(x);
        let s = tape.softmax_rows(r);
        let l = tape.sum(s);
        let g1 = tape.backward(l);
        let g2 = tape.backward(l);
        assert_eq!(g1.get(x).unwrap(), g2.get(x).unwrap());
    }

    #[test]
    fn constants_block_gradient_flow() {
        let mut tape = Tape::new();
        let c = tape.constant(Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]));
        let x = tape.param(Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]));
        let y = tape.matmul(c, x);
        let s = tape.sum(y);
        let grads = tape.backward(s);
        assert!(grads.get(c).is_none());
        assert!(grads.get(x).is_some());
    }
}
