#include "s2w/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "s2w/errors.hpp"

namespace s2w {

namespace {

using EMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

ECMap mat2(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("expected rank-2 tensor, got " + t.shape_str());
  return ECMap(t.data(), t.rows(), t.cols());
}

EMap mat2(Tensor& t) {
  if (t.rank() != 2) throw ShapeError("expected rank-2 tensor, got " + t.shape_str());
  return EMap(t.data(), t.rows(), t.cols());
}

// Views any tensor as a [rows, channels] matrix with channels as the
// innermost axis (used by batch norm).
ECMap channel_view(const Tensor& t) {
  const int c = t.dim(t.rank() - 1);
  return ECMap(t.data(), static_cast<Eigen::Index>(t.size()) / c, c);
}

struct ConvGeometry {
  int n, in_h, in_w, in_c;
  int kh, kw, out_c;
  int stride;
  int out_h, out_w;
  int pad_top, pad_left;
};

// SAME padding with ceil(in/stride) output size; surplus padding goes to the
// bottom/right.
ConvGeometry conv_geometry(const std::vector<int>& x_shape,
                           const std::vector<int>& w_shape, int stride) {
  ConvGeometry g{};
  g.n = x_shape[0];
  g.in_h = x_shape[1];
  g.in_w = x_shape[2];
  g.in_c = x_shape[3];
  g.kh = w_shape[0];
  g.kw = w_shape[1];
  g.out_c = w_shape[3];
  g.stride = stride;
  g.out_h = (g.in_h + stride - 1) / stride;
  g.out_w = (g.in_w + stride - 1) / stride;
  const int pad_h = std::max((g.out_h - 1) * stride + g.kh - g.in_h, 0);
  const int pad_w = std::max((g.out_w - 1) * stride + g.kw - g.in_w, 0);
  g.pad_top = pad_h / 2;
  g.pad_left = pad_w / 2;
  return g;
}

// col: [out_h*out_w, kh*kw*in_c] for one sample.
void im2col(const Tensor& x, int n, const ConvGeometry& g, Tensor& col) {
  col.fill(0.0);
  for (int oy = 0; oy < g.out_h; ++oy) {
    for (int ox = 0; ox < g.out_w; ++ox) {
      Scalar* row = col.data() + static_cast<std::size_t>(oy * g.out_w + ox) *
                                     (g.kh * g.kw * g.in_c);
      for (int ky = 0; ky < g.kh; ++ky) {
        const int y = oy * g.stride - g.pad_top + ky;
        if (y < 0 || y >= g.in_h) continue;
        for (int kx = 0; kx < g.kw; ++kx) {
          const int xx = ox * g.stride - g.pad_left + kx;
          if (xx < 0 || xx >= g.in_w) continue;
          const Scalar* src = x.data() +
                              ((static_cast<std::size_t>(n) * g.in_h + y) * g.in_w + xx) * g.in_c;
          std::copy(src, src + g.in_c, row + (ky * g.kw + kx) * g.in_c);
        }
      }
    }
  }
}

// Scatter-add of a col gradient back into the input gradient.
void col2im_add(const Tensor& col, int n, const ConvGeometry& g, Tensor& dx) {
  for (int oy = 0; oy < g.out_h; ++oy) {
    for (int ox = 0; ox < g.out_w; ++ox) {
      const Scalar* row = col.data() + static_cast<std::size_t>(oy * g.out_w + ox) *
                                           (g.kh * g.kw * g.in_c);
      for (int ky = 0; ky < g.kh; ++ky) {
        const int y = oy * g.stride - g.pad_top + ky;
        if (y < 0 || y >= g.in_h) continue;
        for (int kx = 0; kx < g.kw; ++kx) {
          const int xx = ox * g.stride - g.pad_left + kx;
          if (xx < 0 || xx >= g.in_w) continue;
          Scalar* dst = dx.data() +
                        ((static_cast<std::size_t>(n) * g.in_h + y) * g.in_w + xx) * g.in_c;
          const Scalar* src = row + (ky * g.kw + kx) * g.in_c;
          for (int c = 0; c < g.in_c; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

// y[n] = col(x[n]) @ W + b
Tensor conv_forward(const Tensor& x, const Tensor& w, const Tensor* b,
                    const ConvGeometry& g) {
  Tensor y({g.n, g.out_h, g.out_w, g.out_c});
  Tensor col({g.out_h * g.out_w, g.kh * g.kw * g.in_c});
  ECMap wm(w.data(), g.kh * g.kw * g.in_c, g.out_c);
  for (int n = 0; n < g.n; ++n) {
    im2col(x, n, g, col);
    EMap yn(y.data() + static_cast<std::size_t>(n) * g.out_h * g.out_w * g.out_c,
            g.out_h * g.out_w, g.out_c);
    yn.noalias() = mat2(col) * wm;
    if (b != nullptr) {
      ECMap bv(b->data(), 1, g.out_c);
      yn.rowwise() += bv.row(0);
    }
  }
  return y;
}

// dx = scatter(dy @ W^T); shape follows g's input geometry.
Tensor conv_dx(const Tensor& dy, const Tensor& w, const ConvGeometry& g) {
  Tensor dx({g.n, g.in_h, g.in_w, g.in_c});
  Tensor dcol({g.out_h * g.out_w, g.kh * g.kw * g.in_c});
  ECMap wm(w.data(), g.kh * g.kw * g.in_c, g.out_c);
  for (int n = 0; n < g.n; ++n) {
    ECMap dyn(dy.data() + static_cast<std::size_t>(n) * g.out_h * g.out_w * g.out_c,
              g.out_h * g.out_w, g.out_c);
    mat2(dcol).noalias() = dyn * wm.transpose();
    col2im_add(dcol, n, g, dx);
  }
  return dx;
}

// dW += col(x)^T @ dy accumulated over samples.
void conv_dw_add(const Tensor& x, const Tensor& dy, const ConvGeometry& g,
                 Tensor& dw) {
  Tensor col({g.out_h * g.out_w, g.kh * g.kw * g.in_c});
  EMap dwm(dw.data(), g.kh * g.kw * g.in_c, g.out_c);
  for (int n = 0; n < g.n; ++n) {
    im2col(x, n, g, col);
    ECMap dyn(dy.data() + static_cast<std::size_t>(n) * g.out_h * g.out_w * g.out_c,
              g.out_h * g.out_w, g.out_c);
    dwm.noalias() += mat2(col).transpose() * dyn;
  }
}

void bias_grad_add(const Tensor& dy, Tensor& db) {
  const int c = dy.dim(dy.rank() - 1);
  const std::size_t rows = dy.size() / c;
  for (std::size_t r = 0; r < rows; ++r) {
    const Scalar* src = dy.data() + r * c;
    for (int i = 0; i < c; ++i) db[i] += src[i];
  }
}

}  // namespace

Var Tape::emplace(Tensor value, bool needs_grad,
                  std::function<void(Tape&, const Tensor&)> backprop) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = recording_ && needs_grad;
  if (node.needs_grad) node.backprop = std::move(backprop);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Tensor value) { return emplace(std::move(value), false, nullptr); }

Var Tape::param(Param& p) {
  Param* external = &p;
  Var v = emplace(p.value, true, nullptr);
  if (recording_) {
    nodes_[v.id].external = external;
  } else {
    nodes_[v.id].needs_grad = false;
  }
  return v;
}

const Tensor& Tape::value(Var v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
    throw ShapeError("invalid tape variable");
  }
  return nodes_[v.id].value;
}

void Tape::accumulate(int id, const Tensor& g) {
  if (!nodes_[id].needs_grad) return;
  Tensor& dst = grad_ref(id);
  if (!dst.same_shape(g)) {
    throw ShapeError("gradient shape mismatch: " + dst.shape_str() + " vs " +
                     g.shape_str());
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

Tensor& Tape::grad_ref(int id) {
  Node& node = nodes_[id];
  if (!node.grad.same_shape(node.value)) node.grad = Tensor::zeros(node.value.shape());
  return node.grad;
}

void Tape::backward(Var loss) {
  if (!recording_) throw ConfigError("backward on a non-recording tape");
  if (value(loss).size() != 1) throw ShapeError("backward target must be scalar");
  grad_ref(loss.id)[0] = 1.0;
  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    Node& node = nodes_[id];
    if (!node.needs_grad || node.grad.empty()) continue;
    if (node.external != nullptr) {
      node.external->ensure_grad();
      for (std::size_t i = 0; i < node.grad.size(); ++i) {
        node.external->grad[i] += node.grad[i];
      }
    }
    if (node.backprop) node.backprop(*this, node.grad);
  }
}

void Tape::check_finite(Var v, const std::string& context) const {
  if (!value(v).all_finite()) {
    throw NumericError("non-finite values in " + context);
  }
}

// ---------------------------------------------------------------------------
// elementwise / linear algebra
// ---------------------------------------------------------------------------

Var Tape::matmul(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
    throw ShapeError("matmul shape mismatch: " + av.shape_str() + " x " +
                     bv.shape_str());
  }
  Tensor y({av.rows(), bv.cols()});
  mat2(y).noalias() = mat2(av) * mat2(bv);
  const int ai = a.id, bi = b.id;
  return emplace(std::move(y), wants_grad(a) || wants_grad(b),
                 [ai, bi](Tape& t, const Tensor& g) {
                   const Tensor& av = t.nodes_[ai].value;
                   const Tensor& bv = t.nodes_[bi].value;
                   if (t.nodes_[ai].needs_grad) {
                     Tensor da({av.rows(), av.cols()});
                     mat2(da).noalias() = mat2(g) * mat2(bv).transpose();
                     t.accumulate(ai, da);
                   }
                   if (t.nodes_[bi].needs_grad) {
                     Tensor db({bv.rows(), bv.cols()});
                     mat2(db).noalias() = mat2(av).transpose() * mat2(g);
                     t.accumulate(bi, db);
                   }
                 });
}

Var Tape::add(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv)) {
    throw ShapeError("add shape mismatch: " + av.shape_str() + " vs " + bv.shape_str());
  }
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  const int ai = a.id, bi = b.id;
  return emplace(std::move(y), wants_grad(a) || wants_grad(b),
                 [ai, bi](Tape& t, const Tensor& g) {
                   t.accumulate(ai, g);
                   t.accumulate(bi, g);
                 });
}

Var Tape::sub(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv)) {
    throw ShapeError("sub shape mismatch");
  }
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  const int ai = a.id, bi = b.id;
  return emplace(std::move(y), wants_grad(a) || wants_grad(b),
                 [ai, bi](Tape& t, const Tensor& g) {
                   t.accumulate(ai, g);
                   if (t.nodes_[bi].needs_grad) {
                     Tensor neg = g;
                     for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -neg[i];
                     t.accumulate(bi, neg);
                   }
                 });
}

Var Tape::hadamard(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv)) throw ShapeError("hadamard shape mismatch");
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  const int ai = a.id, bi = b.id;
  return emplace(std::move(y), wants_grad(a) || wants_grad(b),
                 [ai, bi](Tape& t, const Tensor& g) {
                   const Tensor& av = t.nodes_[ai].value;
                   const Tensor& bv = t.nodes_[bi].value;
                   if (t.nodes_[ai].needs_grad) {
                     Tensor da = g;
                     for (std::size_t i = 0; i < da.size(); ++i) da[i] *= bv[i];
                     t.accumulate(ai, da);
                   }
                   if (t.nodes_[bi].needs_grad) {
                     Tensor db = g;
                     for (std::size_t i = 0; i < db.size(); ++i) db[i] *= av[i];
                     t.accumulate(bi, db);
                   }
                 });
}

Var Tape::scale(Var a, Scalar s) {
  Tensor y = value(a);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= s;
  const int ai = a.id;
  return emplace(std::move(y), wants_grad(a), [ai, s](Tape& t, const Tensor& g) {
    Tensor da = g;
    for (std::size_t i = 0; i < da.size(); ++i) da[i] *= s;
    t.accumulate(ai, da);
  });
}

Var Tape::add_row(Var m, Var row) {
  const Tensor& mv = value(m);
  const Tensor& rv = value(row);
  const int n = mv.cols();
  if (static_cast<int>(rv.size()) != n) {
    throw ShapeError("add_row: row width mismatch");
  }
  Tensor y = mv;
  for (int r = 0; r < mv.rows(); ++r) {
    for (int c = 0; c < n; ++c) y.at(r, c) += rv[static_cast<std::size_t>(c)];
  }
  const int mi = m.id, ri = row.id;
  return emplace(std::move(y), wants_grad(m) || wants_grad(row),
                 [mi, ri](Tape& t, const Tensor& g) {
                   t.accumulate(mi, g);
                   if (t.nodes_[ri].needs_grad) {
                     Tensor dr = Tensor::zeros(t.nodes_[ri].value.shape());
                     for (int r = 0; r < g.rows(); ++r) {
                       for (int c = 0; c < g.cols(); ++c) {
                         dr[static_cast<std::size_t>(c)] += g.at(r, c);
                       }
                     }
                     t.accumulate(ri, dr);
                   }
                 });
}

Var Tape::relu(Var a) {
  const Tensor& av = value(a);
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::max(y[i], 0.0);
  const int ai = a.id;
  return emplace(std::move(y), wants_grad(a), [ai](Tape& t, const Tensor& g) {
    const Tensor& av = t.nodes_[ai].value;
    Tensor da = g;
    for (std::size_t i = 0; i < da.size(); ++i) {
      if (av[i] <= 0.0) da[i] = 0.0;
    }
    t.accumulate(ai, da);
  });
}

Var Tape::sigmoid(Var a) {
  Tensor y = value(a);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-y[i]));
  Tensor y_copy = y;
  const int ai = a.id;
  return emplace(std::move(y), wants_grad(a),
                 [ai, y_copy = std::move(y_copy)](Tape& t, const Tensor& g) {
                   Tensor da = g;
                   for (std::size_t i = 0; i < da.size(); ++i) {
                     da[i] *= y_copy[i] * (1.0 - y_copy[i]);
                   }
                   t.accumulate(ai, da);
                 });
}

Var Tape::transpose(Var a) {
  const Tensor& av = value(a);
  Tensor y({av.cols(), av.rows()});
  mat2(y) = mat2(av).transpose();
  const int ai = a.id;
  return emplace(std::move(y), wants_grad(a), [ai](Tape& t, const Tensor& g) {
    Tensor da({g.cols(), g.rows()});
    mat2(da) = mat2(g).transpose();
    t.accumulate(ai, da);
  });
}

Var Tape::reshape(Var a, std::vector<int> shape) {
  Tensor y = value(a).reshaped(shape);
  const int ai = a.id;
  return emplace(std::move(y), wants_grad(a), [ai](Tape& t, const Tensor& g) {
    t.accumulate(ai, g.reshaped(t.nodes_[ai].value.shape()));
  });
}

Var Tape::concat_cols(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.rows() != bv.rows()) throw ShapeError("concat_cols: row mismatch");
  Tensor y({av.rows(), av.cols() + bv.cols()});
  for (int r = 0; r < av.rows(); ++r) {
    for (int c = 0; c < av.cols(); ++c) y.at(r, c) = av.at(r, c);
    for (int c = 0; c < bv.cols(); ++c) y.at(r, av.cols() + c) = bv.at(r, c);
  }
  const int ai = a.id, bi = b.id;
  const int ac = av.cols(), bc = bv.cols();
  return emplace(std::move(y), wants_grad(a) || wants_grad(b),
                 [ai, bi, ac, bc](Tape& t, const Tensor& g) {
                   if (t.nodes_[ai].needs_grad) {
                     Tensor da({g.rows(), ac});
                     for (int r = 0; r < g.rows(); ++r) {
                       for (int c = 0; c < ac; ++c) da.at(r, c) = g.at(r, c);
                     }
                     t.accumulate(ai, da);
                   }
                   if (t.nodes_[bi].needs_grad) {
                     Tensor db({g.rows(), bc});
                     for (int r = 0; r < g.rows(); ++r) {
                       for (int c = 0; c < bc; ++c) db.at(r, c) = g.at(r, ac + c);
                     }
                     t.accumulate(bi, db);
                   }
                 });
}

Var Tape::concat_rows(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.cols() != bv.cols()) throw ShapeError("concat_rows: column mismatch");
  Tensor y({av.rows() + bv.rows(), av.cols()});
  std::copy(av.data(), av.data() + av.size(), y.data());
  std::copy(bv.data(), bv.data() + bv.size(), y.data() + av.size());
  const int ai = a.id, bi = b.id;
  const int ar = av.rows(), br = bv.rows(), cols = av.cols();
  return emplace(std::move(y), wants_grad(a) || wants_grad(b),
                 [ai, bi, ar, br, cols](Tape& t, const Tensor& g) {
                   if (t.nodes_[ai].needs_grad) {
                     Tensor da({ar, cols});
                     std::copy(g.data(), g.data() + da.size(), da.data());
                     t.accumulate(ai, da);
                   }
                   if (t.nodes_[bi].needs_grad) {
                     Tensor db({br, cols});
                     std::copy(g.data() + static_cast<std::size_t>(ar) * cols,
                               g.data() + g.size(), db.data());
                     t.accumulate(bi, db);
                   }
                 });
}

Var Tape::slice_cols(Var a, int c0, int c1) {
  const Tensor& av = value(a);
  if (c0 < 0 || c1 > av.cols() || c0 >= c1) throw ShapeError("slice_cols range");
  Tensor y({av.rows(), c1 - c0});
  for (int r = 0; r < av.rows(); ++r) {
    for (int c = c0; c < c1; ++c) y.at(r, c - c0) = av.at(r, c);
  }
  const int ai = a.id;
  return emplace(std::move(y), wants_grad(a), [ai, c0](Tape& t, const Tensor& g) {
    Tensor da = Tensor::zeros(t.nodes_[ai].value.shape());
    for (int r = 0; r < g.rows(); ++r) {
      for (int c = 0; c < g.cols(); ++c) da.at(r, c0 + c) = g.at(r, c);
    }
    t.accumulate(ai, da);
  });
}

Var Tape::slice_rows(Var a, int r0, int r1) {
  const Tensor& av = value(a);
  if (r0 < 0 || r1 > av.rows() || r0 >= r1) throw ShapeError("slice_rows range");
  Tensor y({r1 - r0, av.cols()});
  std::copy(av.data() + static_cast<std::size_t>(r0) * av.cols(),
            av.data() + static_cast<std::size_t>(r1) * av.cols(), y.data());
  const int ai = a.id;
  return emplace(std::move(y), wants_grad(a), [ai, r0](Tape& t, const Tensor& g) {
    Tensor da = Tensor::zeros(t.nodes_[ai].value.shape());
    std::copy(g.data(), g.data() + g.size(),
              da.data() + static_cast<std::size_t>(r0) * da.cols());
    t.accumulate(ai, da);
  });
}

Var Tape::softmax_rows(Var a) {
  const Tensor& av = value(a);
  Tensor y = av;
  for (int r = 0; r < y.rows(); ++r) {
    Scalar mx = y.at(r, 0);
    for (int c = 1; c < y.cols(); ++c) mx = std::max(mx, y.at(r, c));
    Scalar sum = 0.0;
    for (int c = 0; c < y.cols(); ++c) {
      y.at(r, c) = std::exp(y.at(r, c) - mx);
      sum += y.at(r, c);
    }
    for (int c = 0; c < y.cols(); ++c) y.at(r, c) /= sum;
  }
  Tensor probs = y;
  const int ai = a.id;
  return emplace(std::move(y), wants_grad(a),
                 [ai, probs = std::move(probs)](Tape& t, const Tensor& g) {
                   Tensor da = g;
                   for (int r = 0; r < da.rows(); ++r) {
                     Scalar dot = 0.0;
                     for (int c = 0; c < da.cols(); ++c) {
                       dot += g.at(r, c) * probs.at(r, c);
                     }
                     for (int c = 0; c < da.cols(); ++c) {
                       da.at(r, c) = probs.at(r, c) * (g.at(r, c) - dot);
                     }
                   }
                   t.accumulate(ai, da);
                 });
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, Scalar eps) {
  const Tensor& xv = value(x);
  const Tensor& gv = value(gamma);
  const Tensor& bv = value(beta);
  const int n = xv.cols();
  if (static_cast<int>(gv.size()) != n || static_cast<int>(bv.size()) != n) {
    throw ShapeError("layer_norm: gamma/beta width mismatch");
  }
  Tensor y = xv;
  Tensor xhat({xv.rows(), n});
  Tensor inv_std({xv.rows()});
  for (int r = 0; r < xv.rows(); ++r) {
    Scalar mean = 0.0;
    for (int c = 0; c < n; ++c) mean += xv.at(r, c);
    mean /= n;
    Scalar var = 0.0;
    for (int c = 0; c < n; ++c) {
      const Scalar d = xv.at(r, c) - mean;
      var += d * d;
    }
    var /= n;
    const Scalar istd = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = istd;
    for (int c = 0; c < n; ++c) {
      const Scalar xh = (xv.at(r, c) - mean) * istd;
      xhat.at(r, c) = xh;
      y.at(r, c) = gv[static_cast<std::size_t>(c)] * xh + bv[static_cast<std::size_t>(c)];
    }
  }
  const int xi = x.id, gi = gamma.id, bi = beta.id;
  return emplace(
      std::move(y), wants_grad(x) || wants_grad(gamma) || wants_grad(beta),
      [xi, gi, bi, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& t, const Tensor& g) {
        const Tensor& gv = t.nodes_[gi].value;
        const int n = g.cols();
        if (t.nodes_[gi].needs_grad || t.nodes_[bi].needs_grad) {
          Tensor dgamma = Tensor::zeros(t.nodes_[gi].value.shape());
          Tensor dbeta = Tensor::zeros(t.nodes_[bi].value.shape());
          for (int r = 0; r < g.rows(); ++r) {
            for (int c = 0; c < n; ++c) {
              dgamma[static_cast<std::size_t>(c)] += g.at(r, c) * xhat.at(r, c);
              dbeta[static_cast<std::size_t>(c)] += g.at(r, c);
            }
          }
          t.accumulate(gi, dgamma);
          t.accumulate(bi, dbeta);
        }
        if (t.nodes_[xi].needs_grad) {
          Tensor dx({g.rows(), n});
          for (int r = 0; r < g.rows(); ++r) {
            Scalar sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (int c = 0; c < n; ++c) {
              const Scalar dxhat = g.at(r, c) * gv[static_cast<std::size_t>(c)];
              sum_dxhat += dxhat;
              sum_dxhat_xhat += dxhat * xhat.at(r, c);
            }
            const Scalar istd = inv_std[static_cast<std::size_t>(r)];
            for (int c = 0; c < n; ++c) {
              const Scalar dxhat = g.at(r, c) * gv[static_cast<std::size_t>(c)];
              dx.at(r, c) = istd * (dxhat - sum_dxhat / n -
                                    xhat.at(r, c) * sum_dxhat_xhat / n);
            }
          }
          t.accumulate(xi, dx);
        }
      });
}

Var Tape::embedding_rows(Var table, std::vector<int> ids) {
  const Tensor& tv = value(table);
  if (tv.rank() != 2) throw ShapeError("embedding_rows: table must be rank 2");
  const int d = tv.cols();
  Tensor y({static_cast<int>(ids.size()), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || id >= tv.rows()) {
      throw ShapeError("embedding index " + std::to_string(id) +
                       " out of range [0," + std::to_string(tv.rows()) + ")");
    }
    std::copy(tv.data() + static_cast<std::size_t>(id) * d,
              tv.data() + static_cast<std::size_t>(id + 1) * d,
              y.data() + i * d);
  }
  const int ti = table.id;
  return emplace(std::move(y), wants_grad(table),
                 [ti, ids = std::move(ids)](Tape& t, const Tensor& g) {
                   Tensor dt = Tensor::zeros(t.nodes_[ti].value.shape());
                   const int d = dt.cols();
                   for (std::size_t i = 0; i < ids.size(); ++i) {
                     Scalar* dst = dt.data() + static_cast<std::size_t>(ids[i]) * d;
                     const Scalar* src = g.data() + i * d;
                     for (int c = 0; c < d; ++c) dst[c] += src[c];
                   }
                   t.accumulate(ti, dt);
                 });
}

Var Tape::dropout(Var a, Scalar p, Rng& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw ConfigError("dropout rate must be < 1");
  const Tensor& av = value(a);
  Tensor mask(av.shape());
  const Scalar keep_scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng.uniform() < p ? 0.0 : keep_scale;
  }
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
  const int ai = a.id;
  return emplace(std::move(y), wants_grad(a),
                 [ai, mask = std::move(mask)](Tape& t, const Tensor& g) {
                   Tensor da = g;
                   for (std::size_t i = 0; i < da.size(); ++i) da[i] *= mask[i];
                   t.accumulate(ai, da);
                 });
}

// ---------------------------------------------------------------------------
// convolution stack
// ---------------------------------------------------------------------------

Var Tape::conv2d(Var x, Var w, Var b, int stride) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  const Tensor& bv = value(b);
  if (xv.rank() != 4 || wv.rank() != 4) throw ShapeError("conv2d expects 4-D x and w");
  if (xv.dim(3) != wv.dim(2)) {
    throw ShapeError("conv2d channel mismatch: " + xv.shape_str() + " vs " +
                     wv.shape_str());
  }
  if (static_cast<int>(bv.size()) != wv.dim(3)) throw ShapeError("conv2d bias size");
  const ConvGeometry g = conv_geometry(xv.shape(), wv.shape(), stride);
  Tensor y = conv_forward(xv, wv, &bv, g);
  const int xi = x.id, wi = w.id, bi = b.id;
  return emplace(std::move(y), wants_grad(x) || wants_grad(w) || wants_grad(b),
                 [xi, wi, bi, g](Tape& t, const Tensor& dy) {
                   const Tensor& xv = t.nodes_[xi].value;
                   const Tensor& wv = t.nodes_[wi].value;
                   if (t.nodes_[xi].needs_grad) {
                     t.accumulate(xi, conv_dx(dy, wv, g));
                   }
                   if (t.nodes_[wi].needs_grad) {
                     Tensor dw = Tensor::zeros(wv.shape());
                     conv_dw_add(xv, dy, g, dw);
                     t.accumulate(wi, dw);
                   }
                   if (t.nodes_[bi].needs_grad) {
                     Tensor db = Tensor::zeros(t.nodes_[bi].value.shape());
                     bias_grad_add(dy, db);
                     t.accumulate(bi, db);
                   }
                 });
}

Var Tape::conv2d_transpose(Var x, Var w, Var b, int stride) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);  // [KH,KW,Cout,Cin]
  const Tensor& bv = value(b);
  if (xv.rank() != 4 || wv.rank() != 4) {
    throw ShapeError("conv2d_transpose expects 4-D x and w");
  }
  if (xv.dim(3) != wv.dim(3)) {
    throw ShapeError("conv2d_transpose channel mismatch: " + xv.shape_str() +
                     " vs " + wv.shape_str());
  }
  const int out_c = wv.dim(2);
  if (static_cast<int>(bv.size()) != out_c) {
    throw ShapeError("conv2d_transpose bias size");
  }
  // The transpose of a conv mapping [N, H*s, W*s, out_c] -> [N, H, W, in_c].
  const std::vector<int> big_shape = {xv.dim(0), xv.dim(1) * stride,
                                      xv.dim(2) * stride, out_c};
  const ConvGeometry g = conv_geometry(big_shape, wv.shape(), stride);
  if (g.out_h != xv.dim(1) || g.out_w != xv.dim(2)) {
    throw ShapeError("conv2d_transpose geometry mismatch");
  }
  Tensor y = conv_dx(xv, wv, g);
  for (int n = 0; n < g.n; ++n) {
    for (int yy = 0; yy < g.in_h; ++yy) {
      for (int xx = 0; xx < g.in_w; ++xx) {
        for (int c = 0; c < out_c; ++c) {
          y.at4(n, yy, xx, c) += bv[static_cast<std::size_t>(c)];
        }
      }
    }
  }
  const int xi = x.id, wi = w.id, bi = b.id;
  return emplace(std::move(y), wants_grad(x) || wants_grad(w) || wants_grad(b),
                 [xi, wi, bi, g](Tape& t, const Tensor& dy) {
                   const Tensor& xv = t.nodes_[xi].value;
                   const Tensor& wv = t.nodes_[wi].value;
                   if (t.nodes_[xi].needs_grad) {
                     t.accumulate(xi, conv_forward(dy, wv, nullptr, g));
                   }
                   if (t.nodes_[wi].needs_grad) {
                     Tensor dw = Tensor::zeros(wv.shape());
                     conv_dw_add(dy, xv, g, dw);
                     t.accumulate(wi, dw);
                   }
                   if (t.nodes_[bi].needs_grad) {
                     Tensor db = Tensor::zeros(t.nodes_[bi].value.shape());
                     bias_grad_add(dy, db);
                     t.accumulate(bi, db);
                   }
                 });
}

Var Tape::batch_norm(Var x, Var gamma, Var beta, BatchNormState& state,
                     BnMode mode, Scalar momentum, Scalar eps) {
  const Tensor& xv = value(x);
  const int c = xv.dim(xv.rank() - 1);
  const Tensor& gv = value(gamma);
  const Tensor& bv = value(beta);
  if (static_cast<int>(gv.size()) != c || static_cast<int>(bv.size()) != c) {
    throw ShapeError("batch_norm gamma/beta width mismatch");
  }
  if (static_cast<int>(state.running_mean.size()) != c) {
    state.running_mean = Tensor::zeros({c});
    state.running_var = Tensor::full({c}, 1.0);
  }
  const std::size_t m = xv.size() / c;

  Tensor mean({c}), var({c});
  if (mode == BnMode::kEval) {
    mean = state.running_mean;
    var = state.running_var;
  } else {
    ECMap xm = channel_view(xv);
    for (int ch = 0; ch < c; ++ch) {
      mean[static_cast<std::size_t>(ch)] = xm.col(ch).mean();
    }
    for (int ch = 0; ch < c; ++ch) {
      const Scalar mu = mean[static_cast<std::size_t>(ch)];
      var[static_cast<std::size_t>(ch)] =
          (xm.col(ch).array() - mu).square().sum() / static_cast<Scalar>(m);
    }
    if (mode == BnMode::kTrain) {
      for (int ch = 0; ch < c; ++ch) {
        state.running_mean[ch] =
            (1.0 - momentum) * state.running_mean[ch] + momentum * mean[ch];
        state.running_var[ch] =
            (1.0 - momentum) * state.running_var[ch] + momentum * var[ch];
      }
    }
  }

  Tensor inv_std({c});
  for (int ch = 0; ch < c; ++ch) {
    inv_std[ch] = 1.0 / std::sqrt(var[static_cast<std::size_t>(ch)] + eps);
  }
  Tensor xhat(xv.shape());
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const int ch = static_cast<int>(i % c);
    const Scalar xh = (xv[i] - mean[ch]) * inv_std[ch];
    xhat[i] = xh;
    y[i] = gv[ch] * xh + bv[ch];
  }

  const bool batch_stats = mode != BnMode::kEval;
  const int xi = x.id, gi = gamma.id, bi = beta.id;
  return emplace(
      std::move(y), wants_grad(x) || wants_grad(gamma) || wants_grad(beta),
      [xi, gi, bi, c, m, batch_stats, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Tape& t, const Tensor& g) {
        const Tensor& gv = t.nodes_[gi].value;
        Tensor dgamma = Tensor::zeros({c});
        Tensor dbeta = Tensor::zeros({c});
        for (std::size_t i = 0; i < g.size(); ++i) {
          const int ch = static_cast<int>(i % c);
          dgamma[ch] += g[i] * xhat[i];
          dbeta[ch] += g[i];
        }
        t.accumulate(gi, dgamma);
        t.accumulate(bi, dbeta);
        if (t.nodes_[xi].needs_grad) {
          Tensor dx(g.shape());
          if (batch_stats) {
            // dx = gamma*inv_std*(g - mean(g) - xhat*mean(g*xhat)) per channel
            for (std::size_t i = 0; i < g.size(); ++i) {
              const int ch = static_cast<int>(i % c);
              dx[i] = gv[ch] * inv_std[ch] *
                      (g[i] - dbeta[ch] / static_cast<Scalar>(m) -
                       xhat[i] * dgamma[ch] / static_cast<Scalar>(m));
            }
          } else {
            for (std::size_t i = 0; i < g.size(); ++i) {
              const int ch = static_cast<int>(i % c);
              dx[i] = gv[ch] * inv_std[ch] * g[i];
            }
          }
          t.accumulate(xi, dx);
        }
      });
}

Var Tape::flatten_images(Var x) {
  const Tensor& xv = value(x);
  if (xv.rank() != 4) throw ShapeError("flatten_images expects 4-D input");
  return reshape(x, {xv.dim(0), xv.dim(1) * xv.dim(2) * xv.dim(3)});
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

Var Tape::softmax_cross_entropy_mean(Var logits, std::vector<int> targets,
                                     std::vector<char> mask) {
  const Tensor& lv = value(logits);
  const int rows = lv.rows();
  const int vocab = lv.cols();
  if (static_cast<int>(targets.size()) != rows ||
      static_cast<int>(mask.size()) != rows) {
    throw ShapeError("cross entropy: target/mask length mismatch");
  }
  Scalar valid = 0.0;
  for (char m : mask) valid += m ? 1.0 : 0.0;
  if (valid == 0.0) throw ShapeError("cross entropy: no unmasked positions");

  Tensor probs({rows, vocab});
  Scalar loss = 0.0;
  for (int r = 0; r < rows; ++r) {
    const int target = targets[static_cast<std::size_t>(r)];
    if (target < 0 || target >= vocab) {
      throw ShapeError("cross entropy: target index " + std::to_string(target) +
                       " out of vocabulary range [0," + std::to_string(vocab) + ")");
    }
    Scalar mx = lv.at(r, 0);
    for (int v = 1; v < vocab; ++v) mx = std::max(mx, lv.at(r, v));
    Scalar sum = 0.0;
    for (int v = 0; v < vocab; ++v) sum += std::exp(lv.at(r, v) - mx);
    const Scalar lse = mx + std::log(sum);
    for (int v = 0; v < vocab; ++v) {
      probs.at(r, v) = std::exp(lv.at(r, v) - lse);
    }
    if (mask[static_cast<std::size_t>(r)]) {
      loss += lse - lv.at(r, target);
    }
  }
  Tensor y = Tensor::from({1}, {loss / valid});
  const int li = logits.id;
  return emplace(std::move(y), wants_grad(logits),
                 [li, probs = std::move(probs), targets = std::move(targets),
                  mask = std::move(mask), valid](Tape& t, const Tensor& g) {
                   const Scalar scale = g[0] / valid;
                   Tensor dl = probs;
                   for (int r = 0; r < dl.rows(); ++r) {
                     if (!mask[static_cast<std::size_t>(r)]) {
                       for (int v = 0; v < dl.cols(); ++v) dl.at(r, v) = 0.0;
                       continue;
                     }
                     dl.at(r, targets[static_cast<std::size_t>(r)]) -= 1.0;
                     for (int v = 0; v < dl.cols(); ++v) dl.at(r, v) *= scale;
                   }
                   t.accumulate(li, dl);
                 });
}

Var Tape::mse_mean(Var pred, Var target) {
  const Tensor& pv = value(pred);
  const Tensor& tv = value(target);
  if (!pv.same_shape(tv)) throw ShapeError("mse_mean shape mismatch");
  Scalar loss = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const Scalar d = pv[i] - tv[i];
    loss += d * d;
  }
  const Scalar inv_n = 1.0 / static_cast<Scalar>(pv.size());
  Tensor y = Tensor::from({1}, {loss * inv_n});
  const int pi = pred.id, ti = target.id;
  return emplace(std::move(y), wants_grad(pred) || wants_grad(target),
                 [pi, ti, inv_n](Tape& t, const Tensor& g) {
                   const Tensor& pv = t.nodes_[pi].value;
                   const Tensor& tv = t.nodes_[ti].value;
                   if (t.nodes_[pi].needs_grad) {
                     Tensor dp = pv;
                     for (std::size_t i = 0; i < dp.size(); ++i) {
                       dp[i] = 2.0 * (pv[i] - tv[i]) * inv_n * g[0];
                     }
                     t.accumulate(pi, dp);
                   }
                   if (t.nodes_[ti].needs_grad) {
                     Tensor dt = tv;
                     for (std::size_t i = 0; i < dt.size(); ++i) {
                       dt[i] = -2.0 * (pv[i] - tv[i]) * inv_n * g[0];
                     }
                     t.accumulate(ti, dt);
                   }
                 });
}

}  // namespace s2w
