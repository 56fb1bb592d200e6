#include "lirex/nn/tensor.hpp"

#include <cmath>

#include "lirex/errors.hpp"

namespace lirex::nn {

namespace {
using RowArray = Eigen::Array<double, 1, Eigen::Dynamic>;
}  // namespace

void Tape::check(Var v) const {
  if (!v.valid() || v.idx >= static_cast<int>(nodes_.size()))
    throw ConsistencyError("tape: use of an invalid node handle");
}

Var Tape::push(Matrix v, bool needs_grad, std::function<void(Tape&, const Node&)> back) {
  Node n;
  needs_grad = needs_grad && grads_;
  if (needs_grad) n.grad = Matrix::Zero(v.rows(), v.cols());
  n.value = std::move(v);
  n.needs_grad = needs_grad;
  n.back = needs_grad ? std::move(back) : nullptr;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Matrix v) { return push(std::move(v), false, nullptr); }

Var Tape::leaf(Parameter& p) {
  Parameter* pp = &p;
  return push(p.value, true, [pp](Tape&, const Node& n) { pp->grad += n.grad; });
}

Var Tape::matmul(Var a, Var b) {
  check(a);
  check(b);
  const Matrix& A = nodes_[a.idx].value;
  const Matrix& B = nodes_[b.idx].value;
  if (A.cols() != B.rows()) throw ConsistencyError("matmul: inner dimensions disagree");
  int ai = a.idx, bi = b.idx;
  return push(A * B, needs(a) || needs(b), [ai, bi](Tape& t, const Node& n) {
    if (t.nodes_[ai].needs_grad) t.grad_ref(ai) += n.grad * t.nodes_[bi].value.transpose();
    if (t.nodes_[bi].needs_grad) t.grad_ref(bi) += t.nodes_[ai].value.transpose() * n.grad;
  });
}

Var Tape::add(Var a, Var b) {
  check(a);
  check(b);
  const Matrix& A = nodes_[a.idx].value;
  const Matrix& B = nodes_[b.idx].value;
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw ConsistencyError("add: shape mismatch");
  int ai = a.idx, bi = b.idx;
  return push(A + B, needs(a) || needs(b), [ai, bi](Tape& t, const Node& n) {
    if (t.nodes_[ai].needs_grad) t.grad_ref(ai) += n.grad;
    if (t.nodes_[bi].needs_grad) t.grad_ref(bi) += n.grad;
  });
}

Var Tape::add_rowvec(Var a, Var row) {
  check(a);
  check(row);
  const Matrix& A = nodes_[a.idx].value;
  const Matrix& R = nodes_[row.idx].value;
  if (R.rows() != 1 || R.cols() != A.cols())
    throw ConsistencyError("add_rowvec: row must be 1 x cols(a)");
  Matrix v = A;
  v.rowwise() += R.row(0);
  int ai = a.idx, ri = row.idx;
  return push(std::move(v), needs(a) || needs(row), [ai, ri](Tape& t, const Node& n) {
    if (t.nodes_[ai].needs_grad) t.grad_ref(ai) += n.grad;
    if (t.nodes_[ri].needs_grad) t.grad_ref(ri) += n.grad.colwise().sum();
  });
}

Var Tape::repeat_row(Var row, int nrows) {
  check(row);
  const Matrix& R = nodes_[row.idx].value;
  if (R.rows() != 1) throw ConsistencyError("repeat_row: input must have one row");
  Matrix v(nrows, R.cols());
  for (int r = 0; r < nrows; ++r) v.row(r) = R.row(0);
  int ri = row.idx;
  return push(std::move(v), needs(row), [ri](Tape& t, const Node& n) {
    t.grad_ref(ri) += n.grad.colwise().sum();
  });
}

Var Tape::scale(Var a, double s) {
  check(a);
  int ai = a.idx;
  return push(nodes_[a.idx].value * s, needs(a), [ai, s](Tape& t, const Node& n) {
    t.grad_ref(ai) += n.grad * s;
  });
}

Var Tape::add_const(Var a, const Matrix& c) {
  check(a);
  const Matrix& A = nodes_[a.idx].value;
  if (A.rows() != c.rows() || A.cols() != c.cols())
    throw ConsistencyError("add_const: shape mismatch");
  int ai = a.idx;
  return push(A + c, needs(a), [ai](Tape& t, const Node& n) { t.grad_ref(ai) += n.grad; });
}

Var Tape::tanh_of(Var a) {
  check(a);
  Matrix v = nodes_[a.idx].value.array().tanh();
  int ai = a.idx;
  return push(std::move(v), needs(a), [ai](Tape& t, const Node& n) {
    t.grad_ref(ai).array() += n.grad.array() * (1.0 - n.value.array().square());
  });
}

Var Tape::relu(Var a) {
  check(a);
  Matrix v = nodes_[a.idx].value.cwiseMax(0.0);
  int ai = a.idx;
  return push(std::move(v), needs(a), [ai](Tape& t, const Node& n) {
    t.grad_ref(ai).array() +=
        n.grad.array() * (t.nodes_[ai].value.array() > 0.0).cast<double>();
  });
}

Var Tape::softmax_rows(Var a) {
  check(a);
  const Matrix& A = nodes_[a.idx].value;
  Matrix v(A.rows(), A.cols());
  for (int r = 0; r < A.rows(); ++r) {
    double m = A.row(r).maxCoeff();
    RowArray e = (A.row(r).array() - m).exp();
    v.row(r) = (e / e.sum()).matrix();
  }
  int ai = a.idx;
  return push(std::move(v), needs(a), [ai](Tape& t, const Node& n) {
    Matrix& da = t.grad_ref(ai);
    for (int r = 0; r < n.value.rows(); ++r) {
      double dot = n.grad.row(r).dot(n.value.row(r));
      da.row(r).array() += (n.grad.row(r).array() - dot) * n.value.row(r).array();
    }
  });
}

Var Tape::transpose(Var a) {
  check(a);
  int ai = a.idx;
  return push(nodes_[a.idx].value.transpose(), needs(a), [ai](Tape& t, const Node& n) {
    t.grad_ref(ai) += n.grad.transpose();
  });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ConsistencyError("concat_cols: no inputs");
  int rows = -1, cols = 0;
  bool any = false;
  for (Var p : parts) {
    check(p);
    const Matrix& M = nodes_[p.idx].value;
    if (rows < 0) rows = static_cast<int>(M.rows());
    if (M.rows() != rows) throw ConsistencyError("concat_cols: row counts disagree");
    cols += static_cast<int>(M.cols());
    any = any || needs(p);
  }
  Matrix v(rows, cols);
  std::vector<std::pair<int, int>> layout;  // (node idx, col offset)
  int off = 0;
  for (Var p : parts) {
    const Matrix& M = nodes_[p.idx].value;
    v.block(0, off, rows, M.cols()) = M;
    layout.emplace_back(p.idx, off);
    off += static_cast<int>(M.cols());
  }
  return push(std::move(v), any, [layout](Tape& t, const Node& n) {
    for (auto [idx, o] : layout) {
      if (!t.nodes_[idx].needs_grad) continue;
      Matrix& g = t.grad_ref(idx);
      g += n.grad.block(0, o, g.rows(), g.cols());
    }
  });
}

Var Tape::slice_cols(Var a, int begin, int ncols) {
  check(a);
  const Matrix& A = nodes_[a.idx].value;
  if (begin < 0 || ncols < 0 || begin + ncols > A.cols())
    throw ConsistencyError("slice_cols: range out of bounds");
  int ai = a.idx;
  return push(A.middleCols(begin, ncols), needs(a), [ai, begin, ncols](Tape& t, const Node& n) {
    t.grad_ref(ai).middleCols(begin, ncols) += n.grad;
  });
}

Var Tape::slice_rows(Var a, int begin, int nrows) {
  check(a);
  const Matrix& A = nodes_[a.idx].value;
  if (begin < 0 || nrows < 0 || begin + nrows > A.rows())
    throw ConsistencyError("slice_rows: range out of bounds");
  int ai = a.idx;
  return push(A.middleRows(begin, nrows), needs(a), [ai, begin, nrows](Tape& t, const Node& n) {
    t.grad_ref(ai).middleRows(begin, nrows) += n.grad;
  });
}

Var Tape::max_over_rows(Var a) {
  check(a);
  const Matrix& A = nodes_[a.idx].value;
  if (A.rows() == 0) throw ConsistencyError("max_over_rows: empty input");
  Matrix v(1, A.cols());
  std::vector<int> argmax(A.cols(), 0);
  for (int c = 0; c < A.cols(); ++c) {
    int best = 0;
    for (int r = 1; r < A.rows(); ++r) {
      if (A(r, c) > A(best, c)) best = r;
    }
    argmax[c] = best;
    v(0, c) = A(best, c);
  }
  int ai = a.idx;
  return push(std::move(v), needs(a), [ai, argmax](Tape& t, const Node& n) {
    Matrix& g = t.grad_ref(ai);
    for (int c = 0; c < n.grad.cols(); ++c) g(argmax[c], c) += n.grad(0, c);
  });
}

Var Tape::gather_rows(Var table, std::vector<int> ids) {
  check(table);
  const Matrix& T = nodes_[table.idx].value;
  Matrix v(static_cast<int>(ids.size()), T.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || ids[r] >= T.rows())
      throw ConsistencyError("gather_rows: index out of range");
    v.row(static_cast<int>(r)) = T.row(ids[r]);
  }
  int ti = table.idx;
  return push(std::move(v), needs(table), [ti, ids](Tape& t, const Node& n) {
    Matrix& g = t.grad_ref(ti);
    for (std::size_t r = 0; r < ids.size(); ++r)
      g.row(ids[r]) += n.grad.row(static_cast<int>(r));
  });
}

Var Tape::layer_norm_rows(Var a, Var gain, Var bias, double eps) {
  check(a);
  check(gain);
  check(bias);
  const Matrix& A = nodes_[a.idx].value;
  const Matrix& G = nodes_[gain.idx].value;
  const Matrix& B = nodes_[bias.idx].value;
  if (G.rows() != 1 || B.rows() != 1 || G.cols() != A.cols() || B.cols() != A.cols())
    throw ConsistencyError("layer_norm_rows: gain/bias must be 1 x cols(a)");
  const int R = static_cast<int>(A.rows()), C = static_cast<int>(A.cols());
  Matrix xhat(R, C), v(R, C);
  std::vector<double> inv_sigma(R);
  for (int r = 0; r < R; ++r) {
    double mu = A.row(r).mean();
    RowArray xc = A.row(r).array() - mu;
    double var = xc.square().mean();
    double inv = 1.0 / std::sqrt(var + eps);
    inv_sigma[r] = inv;
    xhat.row(r) = (xc * inv).matrix();
    v.row(r) = (xhat.row(r).array() * G.row(0).array() + B.row(0).array()).matrix();
  }
  int ai = a.idx, gi = gain.idx, bi = bias.idx;
  bool any = needs(a) || needs(gain) || needs(bias);
  return push(std::move(v), any, [ai, gi, bi, xhat, inv_sigma, C](Tape& t, const Node& n) {
    const Matrix& G = t.nodes_[gi].value;
    if (t.nodes_[gi].needs_grad)
      t.grad_ref(gi) += (n.grad.array() * xhat.array()).colwise().sum().matrix();
    if (t.nodes_[bi].needs_grad) t.grad_ref(bi) += n.grad.colwise().sum();
    if (t.nodes_[ai].needs_grad) {
      Matrix& da = t.grad_ref(ai);
      for (int r = 0; r < n.grad.rows(); ++r) {
        RowArray dxhat = n.grad.row(r).array() * G.row(0).array();
        RowArray xh = xhat.row(r).array();
        double mean_dxhat = dxhat.mean();
        double mean_dxhat_xhat = (dxhat * xh).mean();
        da.row(r).array() += (dxhat - mean_dxhat - xh * mean_dxhat_xhat) * inv_sigma[r];
      }
    }
  });
}

Var Tape::mean_softmax_xent(Var logits, std::vector<int> targets,
                            std::vector<unsigned char> active) {
  check(logits);
  const Matrix& Z = nodes_[logits.idx].value;
  const int R = static_cast<int>(Z.rows());
  if (static_cast<int>(targets.size()) != R || static_cast<int>(active.size()) != R)
    throw ConsistencyError("mean_softmax_xent: targets/active must match logits rows");
  Matrix P(R, Z.cols());
  double loss = 0.0;
  int count = 0;
  for (int r = 0; r < R; ++r) {
    double m = Z.row(r).maxCoeff();
    RowArray e = (Z.row(r).array() - m).exp();
    P.row(r) = (e / e.sum()).matrix();
    if (!active[r]) continue;
    if (targets[r] < 0 || targets[r] >= Z.cols())
      throw ConsistencyError("mean_softmax_xent: target class out of range");
    loss -= std::log(std::max(P(r, targets[r]), 1e-12));
    ++count;
  }
  if (count == 0) throw ConsistencyError("mean_softmax_xent: no active rows");
  loss /= count;
  Matrix v(1, 1);
  v(0, 0) = loss;
  int li = logits.idx;
  return push(std::move(v), needs(logits),
              [li, P, targets, active, count](Tape& t, const Node& n) {
                double g = n.grad(0, 0) / count;
                Matrix& dz = t.grad_ref(li);
                for (int r = 0; r < P.rows(); ++r) {
                  if (!active[r]) continue;
                  dz.row(r) += g * P.row(r);
                  dz(r, targets[r]) -= g;
                }
              });
}

Var Tape::soft_xent_with_logits(Var logits, Matrix target) {
  check(logits);
  const Matrix& Z = nodes_[logits.idx].value;
  if (Z.rows() != target.rows() || Z.cols() != target.cols())
    throw ConsistencyError("soft_xent_with_logits: target shape mismatch");
  const int R = static_cast<int>(Z.rows());
  Matrix P(R, Z.cols());
  double loss = 0.0;
  for (int r = 0; r < R; ++r) {
    double m = Z.row(r).maxCoeff();
    RowArray e = (Z.row(r).array() - m).exp();
    P.row(r) = (e / e.sum()).matrix();
    for (int c = 0; c < Z.cols(); ++c)
      loss -= target(r, c) * std::log(std::max(P(r, c), 1e-12));
  }
  loss /= R;
  Matrix v(1, 1);
  v(0, 0) = loss;
  int li = logits.idx;
  return push(std::move(v), needs(logits), [li, P, target, R](Tape& t, const Node& n) {
    double g = n.grad(0, 0) / R;
    t.grad_ref(li) += g * (P - target);
  });
}

void Tape::backward(Var scalar_loss) {
  if (!grads_) throw ConsistencyError("tape: backward() on an evaluation-only tape");
  check(scalar_loss);
  Node& loss = nodes_[scalar_loss.idx];
  if (loss.value.rows() != 1 || loss.value.cols() != 1)
    throw ConsistencyError("tape: backward() requires a 1x1 loss");
  if (!loss.needs_grad) return;  // loss independent of every parameter
  loss.grad(0, 0) = 1.0;
  for (int i = scalar_loss.idx; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.needs_grad && n.back) n.back(*this, n);
  }
}

const Matrix& Tape::value(Var v) const {
  check(v);
  return nodes_[v.idx].value;
}

const Matrix& Tape::grad_of(Var v) const {
  check(v);
  if (!nodes_[v.idx].needs_grad) throw ConsistencyError("tape: node carries no gradient");
  return nodes_[v.idx].grad;
}

}  // namespace lirex::nn
