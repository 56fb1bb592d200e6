#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lirex::nn {

using Matrix = Eigen::MatrixXd;

// A trainable tensor. Values persist across tapes; gradients accumulate
// until zeroed by the optimizer.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter(std::string n, int rows, int cols)
      : name(std::move(n)), value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}

  int rows() const { return static_cast<int>(value.rows()); }
  int cols() const { return static_cast<int>(value.cols()); }
  void zero_grad() { grad.setZero(); }
};

// Handle to a node on a Tape.
struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Dynamically built computation graph over double matrices. Nodes are
// created in evaluation order; backward() walks them in reverse. Construct
// with grads_enabled=false for evaluation-only forwards (no gradient
// buffers, backward() forbidden).
class Tape {
 public:
  explicit Tape(bool grads_enabled = true) : grads_(grads_enabled) {}

  Var constant(Matrix v);
  Var leaf(Parameter& p);  // gradient flows into p.grad on backward()

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);                      // same shape
  Var add_rowvec(Var a, Var row);             // broadcast a 1xC row over all rows of a
  Var repeat_row(Var row, int n);             // tile a 1xC row into n rows
  Var scale(Var a, double s);
  Var add_const(Var a, const Matrix& c);      // c gets no gradient
  Var tanh_of(Var a);
  Var relu(Var a);
  Var softmax_rows(Var a);                    // numerically stabilized per row
  Var transpose(Var a);
  Var concat_cols(const std::vector<Var>& parts);
  Var slice_cols(Var a, int begin, int n);
  Var slice_rows(Var a, int begin, int n);
  Var max_over_rows(Var a);                   // 1xC column-wise max (first-max ties)
  Var gather_rows(Var table, std::vector<int> ids);
  Var layer_norm_rows(Var a, Var gain, Var bias, double eps = 1e-5);

  // Mean token cross-entropy over rows of logits where active[r] != 0;
  // targets[r] is the class index. Returns a 1x1 scalar.
  Var mean_softmax_xent(Var logits, std::vector<int> targets, std::vector<unsigned char> active);

  // Mean over rows of -sum_c target(r,c) * log softmax(logits)(r,c).
  // target rows must be probability vectors. Returns a 1x1 scalar.
  Var soft_xent_with_logits(Var logits, Matrix target);

  // Seeds d(loss)=1 and propagates to every leaf parameter.
  void backward(Var scalar_loss);

  const Matrix& value(Var v) const;
  const Matrix& grad_of(Var v) const;  // inspection for tests
  std::size_t size() const { return nodes_.size(); }
  bool grads_enabled() const { return grads_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    std::function<void(Tape&, const Node&)> back;  // reads node.grad, accumulates upstream
  };

  Var push(Matrix v, bool needs_grad, std::function<void(Tape&, const Node&)> back);
  Matrix& grad_ref(int idx) { return nodes_[idx].grad; }
  bool needs(Var v) const { return grads_ && nodes_[v.idx].needs_grad; }
  void check(Var v) const;

  std::vector<Node> nodes_;
  bool grads_ = true;
};

}  // namespace lirex::nn
