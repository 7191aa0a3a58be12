#pragma once

#include <functional>
#include <string>
#include <vector>

#include "s2w/rng.hpp"
#include "s2w/tensor.hpp"

namespace s2w {

// A trainable tensor. Gradients accumulate into `grad` during
// Tape::backward; optimizers own the zeroing.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {}
  void ensure_grad() {
    if (!grad.same_shape(value)) grad = Tensor::zeros(value.shape());
  }
};

struct BatchNormState {
  Tensor running_mean;  // [C]
  Tensor running_var;   // [C]
};

enum class BnMode {
  kTrain,          // batch statistics, update running averages
  kTrainFrozen,    // batch statistics, running averages untouched
  kEval,           // running averages (inference)
};

// Reverse-mode autodiff over a dynamically built graph. Creation order is
// the topological order; backward walks it in reverse. Construct with
// recording=false for inference-only forwards (no closures are kept).
class Tape {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  std::size_t num_nodes() const { return nodes_.size(); }

  Var input(Tensor value);   // constant leaf
  Var param(Param& p);       // differentiable leaf
  const Tensor& value(Var v) const;

  // ---- elementwise / linear algebra ----
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var scale(Var a, Scalar s);
  Var add_row(Var m, Var row);  // broadcast a [1,n] (or [n]) row over [m,n]
  Var relu(Var a);
  Var sigmoid(Var a);
  Var transpose(Var a);
  Var reshape(Var a, std::vector<int> shape);
  Var concat_cols(Var a, Var b);
  Var concat_rows(Var a, Var b);
  Var slice_cols(Var a, int c0, int c1);
  Var slice_rows(Var a, int r0, int r1);
  Var softmax_rows(Var a);
  Var layer_norm(Var x, Var gamma, Var beta, Scalar eps = 1e-5);
  Var embedding_rows(Var table, std::vector<int> ids);
  Var dropout(Var a, Scalar p, Rng& rng);  // identity when p == 0

  // ---- convolution stack ----
  // x: [N,H,W,Cin], w: [KH,KW,Cin,Cout], b: [Cout]; SAME padding,
  // out spatial = ceil(in / stride).
  Var conv2d(Var x, Var w, Var b, int stride);
  // x: [N,H,W,Cin], w: [KH,KW,Cout,Cin], b: [Cout]; out spatial = in * stride.
  Var conv2d_transpose(Var x, Var w, Var b, int stride);
  Var batch_norm(Var x, Var gamma, Var beta, BatchNormState& state,
                 BnMode mode, Scalar momentum = 0.1, Scalar eps = 1e-5);
  Var flatten_images(Var x);  // [N,H,W,C] -> [N, H*W*C]

  // ---- losses (scalar outputs, shape [1]) ----
  // Mean cross entropy over positions with mask != 0.
  Var softmax_cross_entropy_mean(Var logits, std::vector<int> targets,
                                 std::vector<char> mask);
  Var mse_mean(Var pred, Var target);

  void backward(Var loss);

  // Throws NumericError labelled with `context` when NaN/Inf appears.
  void check_finite(Var v, const std::string& context) const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    Param* external = nullptr;
    std::function<void(Tape&, const Tensor&)> backprop;
  };

  Var emplace(Tensor value, bool needs_grad,
              std::function<void(Tape&, const Tensor&)> backprop);
  bool wants_grad(Var v) const { return nodes_[v.id].needs_grad; }
  void accumulate(int id, const Tensor& g);
  Tensor& grad_ref(int id);

  std::vector<Node> nodes_;
  bool recording_ = true;
};

using Var = Tape::Var;

}  // namespace s2w
