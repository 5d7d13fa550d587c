#include "slgan/autograd.hpp"

#include <Eigen/Core>

#include <cmath>
#include <unordered_set>

namespace slgan::ag {
namespace {

thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

Var make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      n->requires_grad = true;
      n->parents.reserve(parents.size());
      for (const auto& p : parents) n->parents.push_back(p.node());
      n->backward = std::move(fn);
    }
  }
  return Var(std::move(n));
}

void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw Error("ShapeMismatch", std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

// Constant broadcast along dim 1 when the constant has one channel.
struct Broadcast {
  std::int64_t outer, channels, inner;
  bool per_channel;
};

Broadcast broadcast_of(const Tensor& a, const Tensor& m, const char* op) {
  if (a.shape() == m.shape()) return {1, 1, a.numel(), false};
  if (a.rank() == 4 && m.rank() == 4 && m.dim(1) == 1 && m.dim(0) == a.dim(0) && m.dim(2) == a.dim(2) &&
      m.dim(3) == a.dim(3))
    return {a.dim(0), a.dim(1), a.dim(2) * a.dim(3), true};
  throw Error("ShapeMismatch", std::string(op) + ": cannot broadcast " + shape_str(m.shape()) + " onto " +
                                   shape_str(a.shape()));
}

double softplus_scalar(double x) {
  // log(1 + e^x) without overflow.
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

void Node::accumulate(const Tensor& g) {
  if (!requires_grad) return;
  if (grad.numel() == 0) {
    grad = g;
    return;
  }
  double* d = grad.data();
  const double* s = g.data();
  for (std::int64_t i = 0; i < grad.numel(); ++i) d[i] += s[i];
}

Tensor& Node::grad_ref() {
  if (grad.numel() == 0) grad = Tensor(value.shape());
  return grad;
}

double Var::item() const {
  if (value().numel() != 1) throw Error("ShapeMismatch", "item() on non-scalar " + shape_str(shape()));
  return value()[0];
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

Var constant(Tensor t) { return leaf(std::move(t), false); }

Var leaf(Tensor t, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

Var detach(const Var& v) { return constant(v.value()); }

void backward(const Var& root) {
  if (root.value().numel() != 1) throw Error("ShapeMismatch", "backward from non-scalar");
  if (!root.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node* p = n->parents[i++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Tensor(root.shape(), 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.numel() > 0) n->backward(*n);
  }
  // Interior gradients are no longer needed; leaves keep theirs.
  for (Node* n : order) {
    if (!n->parents.empty()) {
      n->grad = Tensor();
      n->backward = nullptr;
      n->parents.clear();
    }
  }
}

Var add(const Var& a, const Var& b) {
  same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
  return make(std::move(out), {a, b}, [](Node& self) {
    parent(self, 0).accumulate(self.grad);
    parent(self, 1).accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  return make(std::move(out), {a, b}, [](Node& self) {
    parent(self, 0).accumulate(self.grad);
    if (parent(self, 1).requires_grad) {
      Tensor g = self.grad;
      for (auto& v : g.vec()) v = -v;
      parent(self, 1).accumulate(g);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return make(std::move(out), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) {
      Tensor g = self.grad;
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] *= pb.value[i];
      pa.accumulate(g);
    }
    if (pb.requires_grad) {
      Tensor g = self.grad;
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] *= pa.value[i];
      pb.accumulate(g);
    }
  });
}

Var scale(const Var& a, double k) {
  Tensor out = a.value();
  for (auto& v : out.vec()) v *= k;
  return make(std::move(out), {a}, [k](Node& self) {
    Tensor g = self.grad;
    for (auto& v : g.vec()) v *= k;
    parent(self, 0).accumulate(g);
  });
}

Var add_scalar_const(const Var& a, double k) {
  Tensor out = a.value();
  for (auto& v : out.vec()) v += k;
  return make(std::move(out), {a}, [](Node& self) { parent(self, 0).accumulate(self.grad); });
}

Var leaky_relu(const Var& a, double slope) {
  Tensor out = a.value();
  for (auto& v : out.vec()) v = v > 0 ? v : slope * v;
  return make(std::move(out), {a}, [slope](Node& self) {
    Node& p = parent(self, 0);
    Tensor g = self.grad;
    for (std::int64_t i = 0; i < g.numel(); ++i)
      if (!(p.value[i] > 0)) g[i] *= slope;
    p.accumulate(g);
  });
}

Var tanh(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.vec()) v = std::tanh(v);
  return make(std::move(out), {a}, [](Node& self) {
    Tensor g = self.grad;
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] *= 1.0 - self.value[i] * self.value[i];
    parent(self, 0).accumulate(g);
  });
}

Var softplus(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.vec()) v = softplus_scalar(v);
  return make(std::move(out), {a}, [](Node& self) {
    Node& p = parent(self, 0);
    Tensor g = self.grad;
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] *= sigmoid_scalar(p.value[i]);
    p.accumulate(g);
  });
}

Var mul_const(const Var& a, const Tensor& m) {
  const Broadcast bc = broadcast_of(a.value(), m, "mul_const");
  Tensor out = a.value();
  auto apply = [bc](Tensor& t, const Tensor& mask) {
    if (!bc.per_channel) {
      for (std::int64_t i = 0; i < t.numel(); ++i) t[i] *= mask[i];
      return;
    }
    for (std::int64_t n = 0; n < bc.outer; ++n)
      for (std::int64_t c = 0; c < bc.channels; ++c) {
        double* d = t.data() + (n * bc.channels + c) * bc.inner;
        const double* s = mask.data() + n * bc.inner;
        for (std::int64_t i = 0; i < bc.inner; ++i) d[i] *= s[i];
      }
  };
  apply(out, m);
  return make(std::move(out), {a}, [apply, m](Node& self) {
    Tensor g = self.grad;
    apply(g, m);
    parent(self, 0).accumulate(g);
  });
}

Var add_const(const Var& a, const Tensor& m) {
  const Broadcast bc = broadcast_of(a.value(), m, "add_const");
  Tensor out = a.value();
  if (!bc.per_channel) {
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += m[i];
  } else {
    for (std::int64_t n = 0; n < bc.outer; ++n)
      for (std::int64_t c = 0; c < bc.channels; ++c) {
        double* d = out.data() + (n * bc.channels + c) * bc.inner;
        const double* s = m.data() + n * bc.inner;
        for (std::int64_t i = 0; i < bc.inner; ++i) d[i] += s[i];
      }
  }
  return make(std::move(out), {a}, [](Node& self) { parent(self, 0).accumulate(self.grad); });
}

// Column layout: rows are (cin, ky, kx), columns are (n, oy, ox).
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  const Tensor& X = x.value();
  const Tensor& W = w.value();
  if (X.rank() != 4 || W.rank() != 4 || W.dim(1) != X.dim(1) || W.dim(2) != W.dim(3))
    throw Error("ShapeMismatch", "conv2d: input " + shape_str(X.shape()) + " weight " + shape_str(W.shape()));
  if (b.value().numel() != W.dim(0)) throw Error("ShapeMismatch", "conv2d: bias size");
  const std::int64_t N = X.dim(0), C = X.dim(1), H = X.dim(2), Wd = X.dim(3);
  const std::int64_t O = W.dim(0), K = W.dim(2);
  const std::int64_t Ho = (H + 2 * pad - K) / stride + 1;
  const std::int64_t Wo = (Wd + 2 * pad - K) / stride + 1;
  const std::int64_t P = Ho * Wo;
  const std::int64_t rows = C * K * K, cols = N * P;

  auto col = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows * cols), 0.0);
  for (std::int64_t c = 0; c < C; ++c)
    for (std::int64_t ky = 0; ky < K; ++ky)
      for (std::int64_t kx = 0; kx < K; ++kx) {
        double* row = col->data() + ((c * K + ky) * K + kx) * cols;
        for (std::int64_t n = 0; n < N; ++n) {
          const double* src = X.data() + (n * C + c) * H * Wd;
          double* dst = row + n * P;
          for (std::int64_t oy = 0; oy < Ho; ++oy) {
            const std::int64_t iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= H) continue;
            for (std::int64_t ox = 0; ox < Wo; ++ox) {
              const std::int64_t ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < Wd) dst[oy * Wo + ox] = src[iy * Wd + ix];
            }
          }
        }
      }

  RowMat Y(O, cols);
  Y.noalias() = CMapMat(W.data(), O, rows) * CMapMat(col->data(), rows, cols);
  Tensor out({N, O, Ho, Wo});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t o = 0; o < O; ++o) {
      double* dst = out.data() + (n * O + o) * P;
      const double* src = Y.data() + o * cols + n * P;
      const double bias = b.value()[o];
      for (std::int64_t p = 0; p < P; ++p) dst[p] = src[p] + bias;
    }

  return make(std::move(out), {x, w, b}, [=](Node& self) {
    RowMat dY(O, cols);
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t o = 0; o < O; ++o) {
        const double* src = self.grad.data() + (n * O + o) * P;
        std::copy(src, src + P, dY.data() + o * cols + n * P);
      }
    Node& px = parent(self, 0);
    Node& pw = parent(self, 1);
    Node& pb = parent(self, 2);
    if (pw.requires_grad) {
      Tensor gw(pw.value.shape());
      MapMat(gw.data(), O, rows).noalias() = dY * CMapMat(col->data(), rows, cols).transpose();
      pw.accumulate(gw);
    }
    if (pb.requires_grad) {
      Tensor gb(pb.value.shape());
      for (std::int64_t o = 0; o < O; ++o) gb[o] = dY.row(o).sum();
      pb.accumulate(gb);
    }
    if (px.requires_grad) {
      RowMat dcol(rows, cols);
      dcol.noalias() = CMapMat(pw.value.data(), O, rows).transpose() * dY;
      Tensor gx(px.value.shape());
      for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t ky = 0; ky < K; ++ky)
          for (std::int64_t kx = 0; kx < K; ++kx) {
            const double* row = dcol.data() + ((c * K + ky) * K + kx) * cols;
            for (std::int64_t n = 0; n < N; ++n) {
              double* dst = gx.data() + (n * C + c) * H * Wd;
              const double* src = row + n * P;
              for (std::int64_t oy = 0; oy < Ho; ++oy) {
                const std::int64_t iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= H) continue;
                for (std::int64_t ox = 0; ox < Wo; ++ox) {
                  const std::int64_t ix = ox * stride - pad + kx;
                  if (ix >= 0 && ix < Wd) dst[iy * Wd + ix] += src[oy * Wo + ox];
                }
              }
            }
          }
      px.accumulate(gx);
    }
  });
}

Var upsample2(const Var& x) {
  const Tensor& X = x.value();
  if (X.rank() != 4) throw Error("ShapeMismatch", "upsample2 expects NCHW");
  const std::int64_t NC = X.dim(0) * X.dim(1), H = X.dim(2), W = X.dim(3);
  Tensor out({X.dim(0), X.dim(1), 2 * H, 2 * W});
  for (std::int64_t i = 0; i < NC; ++i)
    for (std::int64_t y = 0; y < 2 * H; ++y)
      for (std::int64_t xx = 0; xx < 2 * W; ++xx)
        out[(i * 2 * H + y) * 2 * W + xx] = X[(i * H + y / 2) * W + xx / 2];
  return make(std::move(out), {x}, [NC, H, W](Node& self) {
    Node& p = parent(self, 0);
    Tensor g(p.value.shape());
    for (std::int64_t i = 0; i < NC; ++i)
      for (std::int64_t y = 0; y < 2 * H; ++y)
        for (std::int64_t xx = 0; xx < 2 * W; ++xx)
          g[(i * H + y / 2) * W + xx / 2] += self.grad[(i * 2 * H + y) * 2 * W + xx];
    p.accumulate(g);
  });
}

Var instance_norm(const Var& x, double eps) {
  const Tensor& X = x.value();
  if (X.rank() != 4) throw Error("ShapeMismatch", "instance_norm expects NCHW");
  const std::int64_t NC = X.dim(0) * X.dim(1), S = X.dim(2) * X.dim(3);
  if (S < 2) throw Error("ShapeMismatch", "instance_norm needs at least two spatial positions");
  Tensor out(X.shape());
  auto sigma = std::make_shared<std::vector<double>>(static_cast<std::size_t>(NC));
  for (std::int64_t i = 0; i < NC; ++i) {
    const double* src = X.data() + i * S;
    double mean = 0;
    for (std::int64_t j = 0; j < S; ++j) mean += src[j];
    mean /= static_cast<double>(S);
    double var = 0;
    for (std::int64_t j = 0; j < S; ++j) var += (src[j] - mean) * (src[j] - mean);
    var /= static_cast<double>(S);
    const double sd = std::sqrt(var);
    (*sigma)[static_cast<std::size_t>(i)] = sd;
    double* dst = out.data() + i * S;
    for (std::int64_t j = 0; j < S; ++j) dst[j] = (src[j] - mean) / (sd + eps);
  }
  return make(std::move(out), {x}, [NC, S, eps, sigma](Node& self) {
    Node& p = parent(self, 0);
    Tensor g(p.value.shape());
    const double n = static_cast<double>(S);
    for (std::int64_t i = 0; i < NC; ++i) {
      const double sd = (*sigma)[static_cast<std::size_t>(i)];
      const double s = sd + eps;
      const double* gy = self.grad.data() + i * S;
      const double* y = self.value.data() + i * S;
      double gmean = 0, gxc = 0;
      for (std::int64_t j = 0; j < S; ++j) {
        gmean += gy[j];
        gxc += gy[j] * y[j] * s;  // y·s is the centred input
      }
      gmean /= n;
      const double k = sd > 0 ? gxc / (n * sd * s * s) : 0.0;
      double* gx = g.data() + i * S;
      for (std::int64_t j = 0; j < S; ++j) gx[j] = (gy[j] - gmean) / s - y[j] * s * k;
    }
    p.accumulate(g);
  });
}

Var channel_affine(const Var& x, const Var& gamma, const Var& beta) {
  const Tensor& X = x.value();
  if (X.rank() != 4) throw Error("ShapeMismatch", "channel_affine expects NCHW");
  const std::int64_t N = X.dim(0), C = X.dim(1), S = X.dim(2) * X.dim(3);
  const Shape pshape{N, C};
  if (gamma.shape() != pshape || beta.shape() != pshape)
    throw Error("ChannelMismatch", "AdaIN parameters " + shape_str(gamma.shape()) + " for features " +
                                       shape_str(X.shape()));
  Tensor out(X.shape());
  for (std::int64_t i = 0; i < N * C; ++i) {
    const double gm = gamma.value()[i], bt = beta.value()[i];
    for (std::int64_t j = 0; j < S; ++j) out[i * S + j] = gm * X[i * S + j] + bt;
  }
  return make(std::move(out), {x, gamma, beta}, [N, C, S](Node& self) {
    Node& px = parent(self, 0);
    Node& pg = parent(self, 1);
    Node& pb = parent(self, 2);
    if (px.requires_grad) {
      Tensor g(px.value.shape());
      for (std::int64_t i = 0; i < N * C; ++i)
        for (std::int64_t j = 0; j < S; ++j) g[i * S + j] = self.grad[i * S + j] * pg.value[i];
      px.accumulate(g);
    }
    if (pg.requires_grad || pb.requires_grad) {
      Tensor gg(pg.value.shape()), gb(pb.value.shape());
      for (std::int64_t i = 0; i < N * C; ++i)
        for (std::int64_t j = 0; j < S; ++j) {
          gg[i] += self.grad[i * S + j] * px.value[i * S + j];
          gb[i] += self.grad[i * S + j];
        }
      pg.accumulate(gg);
      pb.accumulate(gb);
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  const Tensor& X = x.value();
  const Tensor& W = w.value();
  if (X.rank() != 2 || W.rank() != 2 || W.dim(1) != X.dim(1) || b.value().numel() != W.dim(0))
    throw Error("DimensionMismatch", "linear: input " + shape_str(X.shape()) + " weight " + shape_str(W.shape()));
  const std::int64_t N = X.dim(0), I = X.dim(1), O = W.dim(0);
  Tensor out({N, O});
  MapMat(out.data(), N, O).noalias() = CMapMat(X.data(), N, I) * CMapMat(W.data(), O, I).transpose();
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t o = 0; o < O; ++o) out[n * O + o] += b.value()[o];
  return make(std::move(out), {x, w, b}, [N, I, O](Node& self) {
    Node& px = parent(self, 0);
    Node& pw = parent(self, 1);
    Node& pb = parent(self, 2);
    CMapMat G(self.grad.data(), N, O);
    if (px.requires_grad) {
      Tensor g(px.value.shape());
      MapMat(g.data(), N, I).noalias() = G * CMapMat(pw.value.data(), O, I);
      px.accumulate(g);
    }
    if (pw.requires_grad) {
      Tensor g(pw.value.shape());
      MapMat(g.data(), O, I).noalias() = G.transpose() * CMapMat(px.value.data(), N, I);
      pw.accumulate(g);
    }
    if (pb.requires_grad) {
      Tensor g(pb.value.shape());
      for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t o = 0; o < O; ++o) g[o] += self.grad[n * O + o];
      pb.accumulate(g);
    }
  });
}

Var global_avg_pool(const Var& x) {
  const Tensor& X = x.value();
  if (X.rank() != 4) throw Error("ShapeMismatch", "global_avg_pool expects NCHW");
  const std::int64_t N = X.dim(0), C = X.dim(1), S = X.dim(2) * X.dim(3);
  Tensor out({N, C});
  for (std::int64_t i = 0; i < N * C; ++i) {
    double s = 0;
    for (std::int64_t j = 0; j < S; ++j) s += X[i * S + j];
    out[i] = s / static_cast<double>(S);
  }
  return make(std::move(out), {x}, [N, C, S](Node& self) {
    Node& p = parent(self, 0);
    Tensor g(p.value.shape());
    for (std::int64_t i = 0; i < N * C; ++i)
      for (std::int64_t j = 0; j < S; ++j) g[i * S + j] = self.grad[i] / static_cast<double>(S);
    p.accumulate(g);
  });
}

Var select_rows(const std::vector<Var>& heads, const std::vector<int>& index) {
  if (heads.empty()) throw Error("ShapeMismatch", "select_rows with no heads");
  const Shape& s = heads[0].shape();
  if (s.size() != 2 || static_cast<std::size_t>(s[0]) != index.size())
    throw Error("ShapeMismatch", "select_rows: index length does not match batch");
  for (const auto& h : heads)
    if (h.shape() != s) throw Error("ShapeMismatch", "select_rows: heads differ in shape");
  const std::int64_t N = s[0], F = s[1];
  Tensor out(s);
  for (std::int64_t n = 0; n < N; ++n) {
    const int k = index[static_cast<std::size_t>(n)];
    if (k < 0 || k >= static_cast<int>(heads.size())) throw Error("ShapeMismatch", "select_rows: bad index");
    std::copy_n(heads[static_cast<std::size_t>(k)].value().data() + n * F, F, out.data() + n * F);
  }
  return make(std::move(out), heads, [index, N, F](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      Tensor g(p.value.shape());
      for (std::int64_t n = 0; n < N; ++n)
        if (index[static_cast<std::size_t>(n)] == static_cast<int>(k))
          std::copy_n(self.grad.data() + n * F, F, g.data() + n * F);
      p.accumulate(g);
    }
  });
}

std::pair<Var, Var> split_cols(const Var& x) {
  const Tensor& X = x.value();
  if (X.rank() != 2 || X.dim(1) % 2) throw Error("ShapeMismatch", "split_cols expects N×2C");
  const std::int64_t N = X.dim(0), C = X.dim(1) / 2;
  auto half = [&](std::int64_t offset) {
    Tensor out({N, C});
    for (std::int64_t n = 0; n < N; ++n) std::copy_n(X.data() + n * 2 * C + offset, C, out.data() + n * C);
    return make(std::move(out), {x}, [N, C, offset](Node& self) {
      Node& p = parent(self, 0);
      Tensor g(p.value.shape());
      for (std::int64_t n = 0; n < N; ++n) std::copy_n(self.grad.data() + n * C, C, g.data() + n * 2 * C + offset);
      p.accumulate(g);
    });
  };
  return {half(0), half(C)};
}

Var sum_all(const Var& a) {
  double s = 0;
  for (double v : a.value().vec()) s += v;
  return make(Tensor({1}, s), {a}, [](Node& self) {
    Node& p = parent(self, 0);
    p.accumulate(Tensor(p.value.shape(), self.grad[0]));
  });
}

Var mean_all(const Var& a) {
  const double n = static_cast<double>(a.value().numel());
  double s = 0;
  for (double v : a.value().vec()) s += v;
  return make(Tensor({1}, s / n), {a}, [n](Node& self) {
    Node& p = parent(self, 0);
    p.accumulate(Tensor(p.value.shape(), self.grad[0] / n));
  });
}

Var mean_abs_diff(const Var& a, const Var& b) {
  same_shape(a, b, "mean_abs_diff");
  const std::int64_t n = a.value().numel();
  double s = 0;
  for (std::int64_t i = 0; i < n; ++i) s += std::abs(a.value()[i] - b.value()[i]);
  return make(Tensor({1}, s / static_cast<double>(n)), {a, b}, [n](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    Tensor g(pa.value.shape());
    const double k = self.grad[0] / static_cast<double>(n);
    for (std::int64_t i = 0; i < n; ++i) {
      const double d = pa.value[i] - pb.value[i];
      g[i] = d > 0 ? k : (d < 0 ? -k : 0.0);
    }
    pa.accumulate(g);
    if (pb.requires_grad) {
      for (auto& v : g.vec()) v = -v;
      pb.accumulate(g);
    }
  });
}

Var rms_per_sample(const Var& a) {
  const Tensor& A = a.value();
  if (A.rank() < 1 || A.dim(0) < 1) throw Error("ShapeMismatch", "rms_per_sample on empty tensor");
  const std::int64_t N = A.dim(0), M = A.numel() / N;
  auto rms = std::make_shared<std::vector<double>>(static_cast<std::size_t>(N));
  double total = 0;
  for (std::int64_t n = 0; n < N; ++n) {
    double s = 0;
    for (std::int64_t j = 0; j < M; ++j) s += A[n * M + j] * A[n * M + j];
    const double r = std::sqrt(s / static_cast<double>(M));
    (*rms)[static_cast<std::size_t>(n)] = r;
    total += r;
  }
  return make(Tensor({1}, total / static_cast<double>(N)), {a}, [N, M, rms](Node& self) {
    Node& p = parent(self, 0);
    Tensor g(p.value.shape());
    for (std::int64_t n = 0; n < N; ++n) {
      const double r = (*rms)[static_cast<std::size_t>(n)];
      if (r == 0) continue;  // subgradient 0 at the origin
      const double k = self.grad[0] / (static_cast<double>(N) * static_cast<double>(M) * r);
      for (std::int64_t j = 0; j < M; ++j) g[n * M + j] = k * p.value[n * M + j];
    }
    p.accumulate(g);
  });
}

Var weighted_sum(const std::vector<std::pair<double, Var>>& terms) {
  double s = 0;
  std::vector<Var> parents;
  std::vector<double> weights;
  for (const auto& [w, v] : terms) {
    if (v.value().numel() != 1) throw Error("ShapeMismatch", "weighted_sum of non-scalar");
    s += w * v.item();
    parents.push_back(v);
    weights.push_back(w);
  }
  return make(Tensor({1}, s), parents, [weights](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i)
      self.parents[i]->accumulate(Tensor({1}, weights[i] * self.grad[0]));
  });
}

}  // namespace slgan::ag
