#include "mmdyn/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "mmdyn/error.hpp"

namespace mmdyn::ad {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

thread_local bool g_grad_enabled = true;

void require(bool cond, const std::string& what) {
  if (!cond) throw ShapeError(what);
}

// Creates a result node. Gradient bookkeeping is only attached when some
// parent requires it and graph construction is enabled.
std::shared_ptr<Node> make_node(Shape shape, std::vector<std::shared_ptr<Node>> parents) {
  auto node = std::make_shared<Node>();
  node->value.assign(element_count(shape), 0.0);
  node->shape = std::move(shape);
  if (g_grad_enabled) {
    bool any = std::any_of(parents.begin(), parents.end(),
                           [](const auto& p) { return p->requires_grad; });
    if (any) {
      node->requires_grad = true;
      node->parents = std::move(parents);
    }
  }
  return node;
}

void ensure_grad(Node& n) {
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
}

}  // namespace

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

double Var::item() const {
  require(node_->value.size() == 1, "item() on non-scalar " + shape_string(node_->shape));
  return node_->value[0];
}

Var constant(Shape shape, std::vector<double> values) {
  require(element_count(shape) == values.size(),
          "constant: value count does not match shape " + shape_string(shape));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Var(node);
}

Var filled(Shape shape, double v) {
  auto n = element_count(shape);
  return constant(std::move(shape), std::vector<double>(n, v));
}

Var parameter(Shape shape, std::vector<double> values) {
  Var v = constant(std::move(shape), std::move(values));
  v.node().requires_grad = true;
  v.node().grad.assign(v.size(), 0.0);
  return v;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

void zero_grad(const Var& leaf) {
  auto& n = leaf.node();
  n.grad.assign(n.value.size(), 0.0);
}

void backward(const Var& root) {
  require(root.size() == 1, "backward: root must be scalar");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{&root.node(), 0}};
  visited.insert(&root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    if (n->backward) n->grad.assign(n->value.size(), 0.0);
  }
  root.node().grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward) continue;
    for (auto& p : n->parents) {
      if (p->requires_grad) ensure_grad(*p);
    }
    n->backward(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise

namespace {

template <typename Fwd, typename Bwd>
Var unary(const Var& a, Fwd fwd, Bwd bwd) {
  auto out = make_node(a.shape(), {a.ptr()});
  const auto& av = a.node().value;
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = fwd(av[i]);
  if (out->requires_grad) {
    out->backward = [bwd](Node& self) {
      Node& p = *self.parents[0];
      for (std::size_t i = 0; i < p.value.size(); ++i)
        p.grad[i] += self.grad[i] * bwd(p.value[i], self.value[i]);
    };
  }
  return Var(out);
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  auto out = make_node(a.shape(), {a.ptr(), b.ptr()});
  for (std::size_t i = 0; i < out->value.size(); ++i)
    out->value[i] = a.node().value[i] + b.node().value[i];
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      for (auto& p : self.parents) {
        if (!p->requires_grad) continue;
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
      }
    };
  }
  return Var(out);
}

Var sub(const Var& a, const Var& b) { return add(a, scale(b, -1.0)); }

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  auto out = make_node(a.shape(), {a.ptr(), b.ptr()});
  for (std::size_t i = 0; i < out->value.size(); ++i)
    out->value[i] = a.node().value[i] * b.node().value[i];
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      Node& x = *self.parents[0];
      Node& y = *self.parents[1];
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (x.requires_grad) x.grad[i] += self.grad[i] * y.value[i];
        if (y.requires_grad) y.grad[i] += self.grad[i] * x.value[i];
      }
    };
  }
  return Var(out);
}

Var scale(const Var& a, double c) {
  return unary(
      a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var square(const Var& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var abs(const Var& a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var sigmoid(const Var& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var mul_broadcast(const Var& x, const Var& s) {
  require(!x.shape().empty() && !s.shape().empty() && x.dim(0) == s.dim(0),
          "mul_broadcast: batch dimension mismatch");
  const std::size_t n = static_cast<std::size_t>(x.dim(0));
  const std::size_t k = n ? s.size() / n : 0;
  require(k > 0 && x.size() % (n * k) == 0,
          "mul_broadcast: cannot broadcast " + shape_string(s.shape()) + " over " +
              shape_string(x.shape()));
  const std::size_t g = x.size() / (n * k);
  auto out = make_node(x.shape(), {x.ptr(), s.ptr()});
  const auto& xv = x.node().value;
  const auto& sv = s.node().value;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t j = 0; j < g; ++j)
      for (std::size_t i = 0; i < k; ++i)
        out->value[(b * g + j) * k + i] = xv[(b * g + j) * k + i] * sv[b * k + i];
  if (out->requires_grad) {
    out->backward = [n, g, k](Node& self) {
      Node& xn = *self.parents[0];
      Node& sn = *self.parents[1];
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t j = 0; j < g; ++j)
          for (std::size_t i = 0; i < k; ++i) {
            const std::size_t xi = (b * g + j) * k + i;
            if (xn.requires_grad) xn.grad[xi] += self.grad[xi] * sn.value[b * k + i];
            if (sn.requires_grad) sn.grad[b * k + i] += self.grad[xi] * xn.value[xi];
          }
    };
  }
  return Var(out);
}

Var sum(const Var& a) {
  auto out = make_node({1}, {a.ptr()});
  const auto& av = a.node().value;
  out->value[0] = std::accumulate(av.begin(), av.end(), 0.0);
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      Node& p = *self.parents[0];
      for (double& g : p.grad) g += self.grad[0];
    };
  }
  return Var(out);
}

// ---------------------------------------------------------------------------
// Dense layers

Var affine(const Var& x, const Var& weight, const Var& bias) {
  require(x.shape().size() == 2 && weight.shape().size() == 2 && bias.shape().size() == 1,
          "affine: expected x[N,in], weight[in,out], bias[out]");
  const int n = x.dim(0), in = x.dim(1), outd = weight.dim(1);
  require(weight.dim(0) == in && bias.dim(0) == outd,
          "affine: shape mismatch x" + shape_string(x.shape()) + " weight" +
              shape_string(weight.shape()) + " bias" + shape_string(bias.shape()));
  auto out = make_node({n, outd}, {x.ptr(), weight.ptr(), bias.ptr()});
  ConstMatMap xm(x.node().value.data(), n, in);
  ConstMatMap wm(weight.node().value.data(), in, outd);
  MatMap om(out->value.data(), n, outd);
  om.noalias() = xm * wm;
  const auto& bv = bias.node().value;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < outd; ++c) om(r, c) += bv[static_cast<std::size_t>(c)];
  if (out->requires_grad) {
    out->backward = [n, in, outd](Node& self) {
      Node& xn = *self.parents[0];
      Node& wn = *self.parents[1];
      Node& bn = *self.parents[2];
      ConstMatMap g(self.grad.data(), n, outd);
      if (xn.requires_grad) {
        MatMap gx(xn.grad.data(), n, in);
        gx.noalias() += g * ConstMatMap(wn.value.data(), in, outd).transpose();
      }
      if (wn.requires_grad) {
        MatMap gw(wn.grad.data(), in, outd);
        gw.noalias() += ConstMatMap(xn.value.data(), n, in).transpose() * g;
      }
      if (bn.requires_grad) {
        for (int r = 0; r < n; ++r)
          for (int c = 0; c < outd; ++c) bn.grad[static_cast<std::size_t>(c)] += g(r, c);
      }
    };
  }
  return Var(out);
}

Var softmax(const Var& logits) {
  require(logits.shape().size() == 2, "softmax: expected [N,C]");
  const int n = logits.dim(0), c = logits.dim(1);
  auto out = make_node(logits.shape(), {logits.ptr()});
  const auto& lv = logits.node().value;
  for (int r = 0; r < n; ++r) {
    const double* row = lv.data() + static_cast<std::size_t>(r) * c;
    double* o = out->value.data() + static_cast<std::size_t>(r) * c;
    double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (int j = 0; j < c; ++j) z += (o[j] = std::exp(row[j] - mx));
    for (int j = 0; j < c; ++j) o[j] /= z;
  }
  if (out->requires_grad) {
    out->backward = [n, c](Node& self) {
      Node& p = *self.parents[0];
      for (int r = 0; r < n; ++r) {
        const std::size_t off = static_cast<std::size_t>(r) * c;
        double dot = 0.0;
        for (int j = 0; j < c; ++j) dot += self.grad[off + j] * self.value[off + j];
        for (int j = 0; j < c; ++j)
          p.grad[off + j] += self.value[off + j] * (self.grad[off + j] - dot);
      }
    };
  }
  return Var(out);
}

Var gather_rows(const Var& probs, std::span<const int> labels) {
  require(probs.shape().size() == 2 && static_cast<std::size_t>(probs.dim(0)) == labels.size(),
          "gather_rows: label count does not match batch");
  const int n = probs.dim(0), c = probs.dim(1);
  std::vector<int> idx(labels.begin(), labels.end());
  for (int l : idx) require(l >= 0 && l < c, "gather_rows: label out of range");
  auto out = make_node({n, 1}, {probs.ptr()});
  for (int r = 0; r < n; ++r)
    out->value[r] = probs.node().value[static_cast<std::size_t>(r) * c + idx[r]];
  if (out->requires_grad) {
    out->backward = [c, idx = std::move(idx)](Node& self) {
      Node& p = *self.parents[0];
      for (std::size_t r = 0; r < idx.size(); ++r) p.grad[r * c + idx[r]] += self.grad[r];
    };
  }
  return Var(out);
}

Var nll_sum(const Var& probs, std::span<const int> labels, double floor) {
  Var picked = gather_rows(probs, labels);
  return sum(unary(
      picked, [floor](double p) { return -std::log(std::max(p, floor)); },
      [floor](double p, double) { return p > floor ? -1.0 / p : 0.0; }));
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const int n = parts[0].dim(0);
  int total = 0;
  std::vector<int> widths;
  std::vector<std::shared_ptr<Node>> parents;
  for (const auto& p : parts) {
    require(p.shape().size() == 2 && p.dim(0) == n, "concat_cols: expected [N,k] inputs");
    widths.push_back(p.dim(1));
    total += p.dim(1);
    parents.push_back(p.ptr());
  }
  auto out = make_node({n, total}, parents);
  int offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& v = parts[i].node().value;
    for (int r = 0; r < n; ++r)
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(r) * widths[i], widths[i],
                  out->value.begin() + static_cast<std::ptrdiff_t>(r) * total + offset);
    offset += widths[i];
  }
  if (out->requires_grad) {
    out->backward = [n, total, widths = std::move(widths)](Node& self) {
      int off = 0;
      for (std::size_t i = 0; i < self.parents.size(); ++i) {
        Node& p = *self.parents[i];
        if (p.requires_grad) {
          for (int r = 0; r < n; ++r)
            for (int j = 0; j < widths[i]; ++j)
              p.grad[static_cast<std::size_t>(r) * widths[i] + j] +=
                  self.grad[static_cast<std::size_t>(r) * total + off + j];
        }
        off += widths[i];
      }
    };
  }
  return Var(out);
}

Var concat_channels(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const auto& s0 = parts[0].shape();
  require(s0.size() == 4, "concat_channels: expected [N,C,H,W] inputs");
  const int n = s0[0], hw = s0[2] * s0[3];
  std::vector<Var> flat;
  for (const auto& p : parts) {
    require(p.shape().size() == 4 && p.dim(0) == n && p.dim(2) == s0[2] && p.dim(3) == s0[3],
            "concat_channels: spatial mismatch");
    flat.push_back(reshape(p, {n, p.dim(1) * hw}));
  }
  Var joined = concat_cols(flat);
  return reshape(joined, {n, joined.dim(1) / hw, s0[2], s0[3]});
}

Var reshape(const Var& a, Shape shape) {
  require(element_count(shape) == a.size(), "reshape: element count mismatch " +
                                                shape_string(a.shape()) + " -> " +
                                                shape_string(shape));
  auto out = make_node(std::move(shape), {a.ptr()});
  out->value = a.node().value;
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      Node& p = *self.parents[0];
      for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    };
  }
  return Var(out);
}

// ---------------------------------------------------------------------------
// Convolutional layers

namespace {

// cols[(c*9 + ky*3 + kx), (y*W + x)] = x[c, y+ky-1, x+kx-1] (zero outside).
void im2col3x3(const double* img, int c, int h, int w, double* cols) {
  const int hw = h * w;
  for (int ch = 0; ch < c; ++ch)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        double* row = cols + static_cast<std::size_t>((ch * 9 + ky * 3 + kx)) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - 1;
            row[y * w + x] = (sy >= 0 && sy < h && sx >= 0 && sx < w)
                                 ? img[(static_cast<std::size_t>(ch) * h + sy) * w + sx]
                                 : 0.0;
          }
        }
      }
}

void col2im3x3(const double* cols, int c, int h, int w, double* img) {
  const int hw = h * w;
  for (int ch = 0; ch < c; ++ch)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const double* row = cols + static_cast<std::size_t>((ch * 9 + ky * 3 + kx)) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= w) continue;
            img[(static_cast<std::size_t>(ch) * h + sy) * w + sx] += row[y * w + x];
          }
        }
      }
}

}  // namespace

Var conv3x3(const Var& x, const Var& weight, const Var& bias) {
  require(x.shape().size() == 4 && weight.shape().size() == 4 && bias.shape().size() == 1,
          "conv3x3: expected x[N,C,H,W], weight[O,C,3,3], bias[O]");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int o = weight.dim(0);
  require(weight.dim(1) == c && weight.dim(2) == 3 && weight.dim(3) == 3 && bias.dim(0) == o,
          "conv3x3: weight " + shape_string(weight.shape()) + " incompatible with input " +
              shape_string(x.shape()));
  const int hw = h * w, k = c * 9;
  auto out = make_node({n, o, h, w}, {x.ptr(), weight.ptr(), bias.ptr()});
  std::vector<double> cols(static_cast<std::size_t>(k) * hw);
  ConstMatMap wm(weight.node().value.data(), o, k);
  for (int b = 0; b < n; ++b) {
    im2col3x3(x.node().value.data() + static_cast<std::size_t>(b) * c * hw, c, h, w, cols.data());
    MatMap om(out->value.data() + static_cast<std::size_t>(b) * o * hw, o, hw);
    om.noalias() = wm * ConstMatMap(cols.data(), k, hw);
    for (int oc = 0; oc < o; ++oc) om.row(oc).array() += bias.node().value[oc];
  }
  if (out->requires_grad) {
    out->backward = [n, c, h, w, o, hw, k](Node& self) {
      Node& xn = *self.parents[0];
      Node& wn = *self.parents[1];
      Node& bn = *self.parents[2];
      std::vector<double> cols(static_cast<std::size_t>(k) * hw);
      std::vector<double> dcols(static_cast<std::size_t>(k) * hw);
      ConstMatMap wm(wn.value.data(), o, k);
      for (int b = 0; b < n; ++b) {
        ConstMatMap g(self.grad.data() + static_cast<std::size_t>(b) * o * hw, o, hw);
        if (wn.requires_grad) {
          im2col3x3(xn.value.data() + static_cast<std::size_t>(b) * c * hw, c, h, w, cols.data());
          MatMap(wn.grad.data(), o, k).noalias() += g * ConstMatMap(cols.data(), k, hw).transpose();
        }
        if (bn.requires_grad) {
          for (int oc = 0; oc < o; ++oc) bn.grad[oc] += g.row(oc).sum();
        }
        if (xn.requires_grad) {
          MatMap(dcols.data(), k, hw).noalias() = wm.transpose() * g;
          col2im3x3(dcols.data(), c, h, w, xn.grad.data() + static_cast<std::size_t>(b) * c * hw);
        }
      }
    };
  }
  return Var(out);
}

Var maxpool2(const Var& x) {
  require(x.shape().size() == 4, "maxpool2: expected [N,C,H,W]");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(h % 2 == 0 && w % 2 == 0, "maxpool2: H and W must be even, got " + shape_string(x.shape()));
  const int oh = h / 2, ow = w / 2;
  auto out = make_node({n, c, oh, ow}, {x.ptr()});
  std::vector<std::size_t> argmax(out->value.size());
  const auto& xv = x.node().value;
  for (int p = 0; p < n * c; ++p)
    for (int y = 0; y < oh; ++y)
      for (int xx = 0; xx < ow; ++xx) {
        const std::size_t base = static_cast<std::size_t>(p) * h * w;
        std::size_t best = base + static_cast<std::size_t>(2 * y) * w + 2 * xx;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            std::size_t idx = base + static_cast<std::size_t>(2 * y + dy) * w + 2 * xx + dx;
            if (xv[idx] > xv[best]) best = idx;
          }
        const std::size_t o = (static_cast<std::size_t>(p) * oh + y) * ow + xx;
        out->value[o] = xv[best];
        argmax[o] = best;
      }
  if (out->requires_grad) {
    out->backward = [argmax = std::move(argmax)](Node& self) {
      Node& p = *self.parents[0];
      for (std::size_t i = 0; i < argmax.size(); ++i) p.grad[argmax[i]] += self.grad[i];
    };
  }
  return Var(out);
}

Var upsample_nearest(const Var& x, int factor) {
  require(x.shape().size() == 4 && factor >= 1, "upsample_nearest: expected [N,C,H,W]");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = h * factor, ow = w * factor;
  auto out = make_node({n, c, oh, ow}, {x.ptr()});
  const auto& xv = x.node().value;
  for (int p = 0; p < n * c; ++p)
    for (int y = 0; y < oh; ++y)
      for (int xx = 0; xx < ow; ++xx)
        out->value[(static_cast<std::size_t>(p) * oh + y) * ow + xx] =
            xv[(static_cast<std::size_t>(p) * h + y / factor) * w + xx / factor];
  if (out->requires_grad) {
    out->backward = [n, c, h, w, factor](Node& self) {
      Node& p = *self.parents[0];
      const int oh = h * factor, ow = w * factor;
      for (int q = 0; q < n * c; ++q)
        for (int y = 0; y < oh; ++y)
          for (int xx = 0; xx < ow; ++xx)
            p.grad[(static_cast<std::size_t>(q) * h + y / factor) * w + xx / factor] +=
                self.grad[(static_cast<std::size_t>(q) * oh + y) * ow + xx];
    };
  }
  return Var(out);
}

}  // namespace mmdyn::ad
