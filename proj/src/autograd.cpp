#include "rrg/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace rrg::ag {

namespace {

std::shared_ptr<Node> make_node(Shape shape, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->v.assign(numel(n->shape), 0.0);
  n->requires_grad = requires_grad;
  if (requires_grad) n->g.assign(n->v.size(), 0.0);
  return n;
}

bool any_grad(std::initializer_list<Tensor> ts) {
  for (const auto& t : ts)
    if (t.requires_grad()) return true;
  return false;
}

// Result node wired to its parents; grad buffer allocated lazily by callers
// through ensure_grad.
Tensor make_result(Shape shape, std::initializer_list<Tensor> parents) {
  bool rg = any_grad(parents);
  auto n = make_node(std::move(shape), rg);
  if (rg)
    for (const auto& p : parents) n->parents.push_back(p.node());
  return Tensor(n);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

void check_finite(const Tensor& t, const char* op) {
  for (double x : t.values())
    if (!std::isfinite(x))
      throw std::invalid_argument(std::string(op) + ": non-finite value");
  (void)t;
  (void)op;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return Tensor(make_node(std::move(shape), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = make_node(std::move(shape), requires_grad);
  std::fill(n->v.begin(), n->v.end(), value);
  return Tensor(n);
}

Tensor Tensor::from(std::vector<double> data, Shape shape, bool requires_grad) {
  auto n = make_node(shape, requires_grad);
  if (static_cast<std::int64_t>(data.size()) != numel(shape))
    throw std::invalid_argument("Tensor::from: data size does not match shape");
  n->v = std::move(data);
  return Tensor(n);
}

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev,
                     bool requires_grad) {
  auto n = make_node(std::move(shape), requires_grad);
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& x : n->v) x = dist(rng);
  return Tensor(n);
}

void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  if (!loss.requires_grad()) return;

  // Topological order over the tape.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.push_back({loss.node().get(), 0});
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order)
    if (n->g.empty()) n->g.assign(n->v.size(), 0.0);
  loss.node()->g[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop();
}

void zero_grad(std::span<Tensor> params) {
  for (auto& p : params) {
    auto& g = p.node()->g;
    g.assign(p.size(), 0.0);
  }
}

namespace {
// Parents may enter the tape without a grad buffer when they are leaves
// created before backward() ran; allocate on first touch.
std::vector<double>& grad_of(const std::shared_ptr<Node>& n) {
  if (n->g.empty()) n->g.assign(n->v.size(), 0.0);
  return n->g;
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = make_result(a.shape(), {a, b});
  for (std::int64_t i = 0; i < a.size(); ++i)
    out.data()[i] = a.data()[i] + b.data()[i];
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node(), on = out.node();
    out.node()->backprop = [an, bn, on = on.get()] {
      auto& ga = grad_of(an);
      auto& gb = grad_of(bn);
      for (size_t i = 0; i < on->g.size(); ++i) {
        if (an->requires_grad) ga[i] += on->g[i];
        if (bn->requires_grad) gb[i] += on->g[i];
      }
    };
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = make_result(a.shape(), {a, b});
  for (std::int64_t i = 0; i < a.size(); ++i)
    out.data()[i] = a.data()[i] - b.data()[i];
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node(), on = out.node();
    out.node()->backprop = [an, bn, on = on.get()] {
      auto& ga = grad_of(an);
      auto& gb = grad_of(bn);
      for (size_t i = 0; i < on->g.size(); ++i) {
        if (an->requires_grad) ga[i] += on->g[i];
        if (bn->requires_grad) gb[i] -= on->g[i];
      }
    };
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = make_result(a.shape(), {a, b});
  for (std::int64_t i = 0; i < a.size(); ++i)
    out.data()[i] = a.data()[i] * b.data()[i];
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node(), on = out.node();
    out.node()->backprop = [an, bn, on = on.get()] {
      auto& ga = grad_of(an);
      auto& gb = grad_of(bn);
      for (size_t i = 0; i < on->g.size(); ++i) {
        if (an->requires_grad) ga[i] += on->g[i] * bn->v[i];
        if (bn->requires_grad) gb[i] += on->g[i] * an->v[i];
      }
    };
  }
  return out;
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double s) {
  Tensor out = make_result(a.shape(), {a});
  for (std::int64_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * s;
  if (out.requires_grad()) {
    auto an = a.node();
    auto on = out.node();
    out.node()->backprop = [an, on = on.get(), s] {
      auto& ga = grad_of(an);
      for (size_t i = 0; i < on->g.size(); ++i) ga[i] += on->g[i] * s;
    };
  }
  return out;
}

Tensor add_rowvec(const Tensor& x, const Tensor& b) {
  if (x.shape().size() != 2 || b.shape().size() != 1 || x.dim(1) != b.dim(0))
    throw std::invalid_argument("add_rowvec: want [R,C] + [C]");
  const int rows = x.dim(0), cols = x.dim(1);
  Tensor out = make_result(x.shape(), {x, b});
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out.data()[r * cols + c] = x.data()[r * cols + c] + b.data()[c];
  if (out.requires_grad()) {
    auto xn = x.node(), bn = b.node(), on = out.node();
    out.node()->backprop = [xn, bn, on = on.get(), rows, cols] {
      auto& gx = grad_of(xn);
      auto& gb = grad_of(bn);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
          double go = on->g[r * cols + c];
          if (xn->requires_grad) gx[r * cols + c] += go;
          if (bn->requires_grad) gb[c] += go;
        }
    };
  }
  return out;
}

Tensor mul_rowvec(const Tensor& x, const Tensor& b) {
  if (x.shape().size() != 2 || b.shape().size() != 1 || x.dim(1) != b.dim(0))
    throw std::invalid_argument("mul_rowvec: want [R,C] * [C]");
  const int rows = x.dim(0), cols = x.dim(1);
  Tensor out = make_result(x.shape(), {x, b});
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out.data()[r * cols + c] = x.data()[r * cols + c] * b.data()[c];
  if (out.requires_grad()) {
    auto xn = x.node(), bn = b.node(), on = out.node();
    out.node()->backprop = [xn, bn, on = on.get(), rows, cols] {
      auto& gx = grad_of(xn);
      auto& gb = grad_of(bn);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
          double go = on->g[r * cols + c];
          if (xn->requires_grad) gx[r * cols + c] += go * bn->v[c];
          if (bn->requires_grad) gb[c] += go * xn->v[r * cols + c];
        }
    };
  }
  return out;
}

Tensor exp(const Tensor& a) {
  Tensor out = make_result(a.shape(), {a});
  for (std::int64_t i = 0; i < a.size(); ++i)
    out.data()[i] = std::exp(a.data()[i]);
  if (out.requires_grad()) {
    auto an = a.node();
    auto on = out.node();
    out.node()->backprop = [an, on = on.get()] {
      auto& ga = grad_of(an);
      for (size_t i = 0; i < on->g.size(); ++i) ga[i] += on->g[i] * on->v[i];
    };
  }
  return out;
}

namespace {
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Tensor silu(const Tensor& a) {
  Tensor out = make_result(a.shape(), {a});
  for (std::int64_t i = 0; i < a.size(); ++i)
    out.data()[i] = a.data()[i] * sigmoid(a.data()[i]);
  if (out.requires_grad()) {
    auto an = a.node();
    auto on = out.node();
    out.node()->backprop = [an, on = on.get()] {
      auto& ga = grad_of(an);
      for (size_t i = 0; i < on->g.size(); ++i) {
        double s = sigmoid(an->v[i]);
        ga[i] += on->g[i] * (s + an->v[i] * s * (1.0 - s));
      }
    };
  }
  return out;
}

Tensor softplus(const Tensor& a) {
  Tensor out = make_result(a.shape(), {a});
  for (std::int64_t i = 0; i < a.size(); ++i) {
    double x = a.data()[i];
    out.data()[i] = x > 30.0 ? x : std::log1p(std::exp(x));
  }
  if (out.requires_grad()) {
    auto an = a.node();
    auto on = out.node();
    out.node()->backprop = [an, on = on.get()] {
      auto& ga = grad_of(an);
      for (size_t i = 0; i < on->g.size(); ++i)
        ga[i] += on->g[i] * sigmoid(an->v[i]);
    };
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: inner dimensions do not match");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = make_result({m, n}, {a, b});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += a.data()[i * k + t] * b.data()[t * n + j];
      out.data()[i * n + j] = acc;
    }
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node(), on = out.node();
    out.node()->backprop = [an, bn, on = on.get(), m, k, n] {
      if (an->requires_grad) {
        auto& ga = grad_of(an);
        for (int i = 0; i < m; ++i)
          for (int t = 0; t < k; ++t) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j)
              acc += on->g[i * n + j] * bn->v[t * n + j];
            ga[i * k + t] += acc;
          }
      }
      if (bn->requires_grad) {
        auto& gb = grad_of(bn);
        for (int t = 0; t < k; ++t)
          for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i)
              acc += an->v[i * k + t] * on->g[i * n + j];
            gb[t * n + j] += acc;
          }
      }
    };
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.shape().size() != 2) throw std::invalid_argument("transpose: want 2-D");
  const int r = a.dim(0), c = a.dim(1);
  Tensor out = make_result({c, r}, {a});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.data()[j * r + i] = a.data()[i * c + j];
  if (out.requires_grad()) {
    auto an = a.node();
    auto on = out.node();
    out.node()->backprop = [an, on = on.get(), r, c] {
      auto& ga = grad_of(an);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) ga[i * c + j] += on->g[j * r + i];
    };
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size())
    throw std::invalid_argument("reshape: element count mismatch");
  Tensor out = make_result(std::move(shape), {a});
  std::copy(a.data(), a.data() + a.size(), out.data());
  if (out.requires_grad()) {
    auto an = a.node();
    auto on = out.node();
    out.node()->backprop = [an, on = on.get()] {
      auto& ga = grad_of(an);
      for (size_t i = 0; i < on->g.size(); ++i) ga[i] += on->g[i];
    };
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty input");
  const int cols = parts[0].dim(1);
  int rows = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.shape().size() != 2 || p.dim(1) != cols)
      throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.dim(0);
    rg = rg || p.requires_grad();
  }
  auto n = make_node({rows, cols}, rg);
  int r = 0;
  for (const auto& p : parts) {
    std::copy(p.data(), p.data() + p.size(), n->v.data() + r * cols);
    r += p.dim(0);
    if (rg) n->parents.push_back(p.node());
  }
  Tensor out(n);
  if (rg) {
    std::vector<std::shared_ptr<Node>> ps;
    for (const auto& p : parts) ps.push_back(p.node());
    auto on = out.node();
    out.node()->backprop = [ps, on = on.get(), cols] {
      int row = 0;
      for (const auto& p : ps) {
        int pr = static_cast<int>(p->v.size()) / cols;
        if (p->requires_grad) {
          auto& gp = grad_of(p);
          for (size_t i = 0; i < p->v.size(); ++i)
            gp[i] += on->g[row * cols + i];
        }
        row += pr;
      }
    };
  }
  return out;
}

Tensor slice_rows(const Tensor& a, int row0, int row1) {
  if (a.shape().size() != 2 || row0 < 0 || row1 > a.dim(0) || row0 >= row1)
    throw std::invalid_argument("slice_rows: bad range");
  const int cols = a.dim(1);
  Tensor out = make_result({row1 - row0, cols}, {a});
  std::copy(a.data() + row0 * cols, a.data() + row1 * cols, out.data());
  if (out.requires_grad()) {
    auto an = a.node();
    auto on = out.node();
    out.node()->backprop = [an, on = on.get(), row0, cols] {
      auto& ga = grad_of(an);
      for (size_t i = 0; i < on->g.size(); ++i)
        ga[row0 * cols + i] += on->g[i];
    };
  }
  return out;
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& index) {
  if (a.shape().size() != 2) throw std::invalid_argument("gather_rows: want 2-D");
  const int cols = a.dim(1);
  Tensor out = make_result({static_cast<int>(index.size()), cols}, {a});
  for (size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0 || index[r] >= a.dim(0))
      throw std::invalid_argument("gather_rows: index out of range");
    std::copy(a.data() + index[r] * cols, a.data() + (index[r] + 1) * cols,
              out.data() + r * cols);
  }
  if (out.requires_grad()) {
    auto an = a.node();
    auto on = out.node();
    out.node()->backprop = [an, on = on.get(), index, cols] {
      auto& ga = grad_of(an);
      for (size_t r = 0; r < index.size(); ++r)
        for (int c = 0; c < cols; ++c)
          ga[index[r] * cols + c] += on->g[r * cols + c];
    };
  }
  return out;
}

Tensor mean_rows(const Tensor& a) {
  if (a.shape().size() != 2) throw std::invalid_argument("mean_rows: want 2-D");
  const int rows = a.dim(0), cols = a.dim(1);
  Tensor out = make_result({cols}, {a});
  for (int c = 0; c < cols; ++c) {
    double acc = 0.0;
    for (int r = 0; r < rows; ++r) acc += a.data()[r * cols + c];
    out.data()[c] = acc / rows;
  }
  if (out.requires_grad()) {
    auto an = a.node();
    auto on = out.node();
    out.node()->backprop = [an, on = on.get(), rows, cols] {
      auto& ga = grad_of(an);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) ga[r * cols + c] += on->g[c] / rows;
    };
  }
  return out;
}

Tensor sum_all(const Tensor& a) {
  Tensor out = make_result({1}, {a});
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) acc += a.data()[i];
  out.data()[0] = acc;
  if (out.requires_grad()) {
    auto an = a.node();
    auto on = out.node();
    out.node()->backprop = [an, on = on.get()] {
      auto& ga = grad_of(an);
      for (auto& g : ga) g += on->g[0];
    };
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  if (x.shape().size() != 2 || gamma.dim(0) != x.dim(1) ||
      beta.dim(0) != x.dim(1))
    throw std::invalid_argument("layer_norm: shape mismatch");
  const int rows = x.dim(0), cols = x.dim(1);
  Tensor out = make_result(x.shape(), {x, gamma, beta});
  std::vector<double> inv_sigma(rows), xhat(rows * cols);
  for (int r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (int c = 0; c < cols; ++c) mu += x.data()[r * cols + c];
    mu /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) {
      double d = x.data()[r * cols + c] - mu;
      var += d * d;
    }
    var /= cols;
    inv_sigma[r] = 1.0 / std::sqrt(var + eps);
    for (int c = 0; c < cols; ++c) {
      xhat[r * cols + c] = (x.data()[r * cols + c] - mu) * inv_sigma[r];
      out.data()[r * cols + c] =
          gamma.data()[c] * xhat[r * cols + c] + beta.data()[c];
    }
  }
  if (out.requires_grad()) {
    auto xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node();
    out.node()->backprop = [xn, gn, bn, on = on.get(), rows, cols, inv_sigma, xhat] {
      for (int r = 0; r < rows; ++r) {
        double sum_gy = 0.0, sum_gy_xhat = 0.0;
        for (int c = 0; c < cols; ++c) {
          double gy = on->g[r * cols + c] * gn->v[c];
          sum_gy += gy;
          sum_gy_xhat += gy * xhat[r * cols + c];
        }
        if (xn->requires_grad) {
          auto& gx = grad_of(xn);
          for (int c = 0; c < cols; ++c) {
            double gy = on->g[r * cols + c] * gn->v[c];
            gx[r * cols + c] +=
                inv_sigma[r] * (gy - sum_gy / cols -
                                xhat[r * cols + c] * sum_gy_xhat / cols);
          }
        }
        if (gn->requires_grad) {
          auto& gg = grad_of(gn);
          for (int c = 0; c < cols; ++c)
            gg[c] += on->g[r * cols + c] * xhat[r * cols + c];
        }
        if (bn->requires_grad) {
          auto& gb = grad_of(bn);
          for (int c = 0; c < cols; ++c) gb[c] += on->g[r * cols + c];
        }
      }
    };
  }
  return out;
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  if (table.shape().size() != 2)
    throw std::invalid_argument("embedding: table must be [V,E]");
  return gather_rows(table, ids);
}

Tensor dwconv3x3(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  if (x.shape().size() != 3 || kernel.shape().size() != 2 ||
      kernel.dim(0) != x.dim(2) || kernel.dim(1) != 9 ||
      bias.dim(0) != x.dim(2))
    throw std::invalid_argument("dwconv3x3: want x[H,W,C], k[C,9], b[C]");
  const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
  Tensor out = make_result(x.shape(), {x, kernel, bias});
  auto at = [&](int h, int w, int c) { return (h * W + w) * C + c; };
  for (int h = 0; h < H; ++h)
    for (int w = 0; w < W; ++w)
      for (int c = 0; c < C; ++c) {
        double acc = bias.data()[c];
        for (int dh = -1; dh <= 1; ++dh)
          for (int dw = -1; dw <= 1; ++dw) {
            int hh = h + dh, ww = w + dw;
            if (hh < 0 || hh >= H || ww < 0 || ww >= W) continue;
            acc += kernel.data()[c * 9 + (dh + 1) * 3 + (dw + 1)] *
                   x.data()[at(hh, ww, c)];
          }
        out.data()[at(h, w, c)] = acc;
      }
  if (out.requires_grad()) {
    auto xn = x.node(), kn = kernel.node(), bn = bias.node(), on = out.node();
    out.node()->backprop = [xn, kn, bn, on = on.get(), H, W, C] {
      auto at = [&](int h, int w, int c) { return (h * W + w) * C + c; };
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
          for (int c = 0; c < C; ++c) {
            double go = on->g[at(h, w, c)];
            if (bn->requires_grad) grad_of(bn)[c] += go;
            for (int dh = -1; dh <= 1; ++dh)
              for (int dw = -1; dw <= 1; ++dw) {
                int hh = h + dh, ww = w + dw;
                if (hh < 0 || hh >= H || ww < 0 || ww >= W) continue;
                int ki = c * 9 + (dh + 1) * 3 + (dw + 1);
                if (kn->requires_grad)
                  grad_of(kn)[ki] += go * xn->v[at(hh, ww, c)];
                if (xn->requires_grad)
                  grad_of(xn)[at(hh, ww, c)] += go * kn->v[ki];
              }
          }
    };
  }
  return out;
}

Tensor outer_ld_dn(const Tensor& delta, const Tensor& a) {
  if (delta.shape().size() != 2 || a.shape().size() != 2 ||
      delta.dim(1) != a.dim(0))
    throw std::invalid_argument("outer_ld_dn: want [L,d] x [d,n]");
  const int L = delta.dim(0), d = delta.dim(1), n = a.dim(1);
  Tensor out = make_result({L, d, n}, {delta, a});
  for (int t = 0; t < L; ++t)
    for (int c = 0; c < d; ++c)
      for (int s = 0; s < n; ++s)
        out.data()[(t * d + c) * n + s] =
            delta.data()[t * d + c] * a.data()[c * n + s];
  if (out.requires_grad()) {
    auto dn = delta.node(), an = a.node(), on = out.node();
    out.node()->backprop = [dn, an, on = on.get(), L, d, n] {
      for (int t = 0; t < L; ++t)
        for (int c = 0; c < d; ++c)
          for (int s = 0; s < n; ++s) {
            double go = on->g[(t * d + c) * n + s];
            if (dn->requires_grad)
              grad_of(dn)[t * d + c] += go * an->v[c * n + s];
            if (an->requires_grad)
              grad_of(an)[c * n + s] += go * dn->v[t * d + c];
          }
    };
  }
  return out;
}

namespace {
// phi(z) = (e^z - 1)/z with a series fallback near zero.
double phi_val(double z) {
  if (std::abs(z) < 1e-4)
    return 1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0;
  return std::expm1(z) / z;
}
double phi_deriv(double z) {
  if (std::abs(z) < 1e-4) return 0.5 + z / 3.0 + z * z / 8.0;
  return ((z - 1.0) * std::exp(z) + 1.0) / (z * z);
}
}  // namespace

Tensor zoh_phi(const Tensor& z) {
  Tensor out = make_result(z.shape(), {z});
  for (std::int64_t i = 0; i < z.size(); ++i)
    out.data()[i] = phi_val(z.data()[i]);
  if (out.requires_grad()) {
    auto zn = z.node();
    auto on = out.node();
    out.node()->backprop = [zn, on = on.get()] {
      auto& gz = grad_of(zn);
      for (size_t i = 0; i < on->g.size(); ++i)
        gz[i] += on->g[i] * phi_deriv(zn->v[i]);
    };
  }
  return out;
}

Tensor scan_input(const Tensor& dx, const Tensor& phi, const Tensor& b) {
  if (dx.shape().size() != 2 || phi.shape().size() != 3 ||
      b.shape().size() != 2 || phi.dim(0) != dx.dim(0) ||
      phi.dim(1) != dx.dim(1) || b.dim(0) != dx.dim(0) ||
      b.dim(1) != phi.dim(2))
    throw std::invalid_argument("scan_input: shape mismatch");
  const int L = dx.dim(0), d = dx.dim(1), n = phi.dim(2);
  Tensor out = make_result({L, d, n}, {dx, phi, b});
  for (int t = 0; t < L; ++t)
    for (int c = 0; c < d; ++c)
      for (int s = 0; s < n; ++s)
        out.data()[(t * d + c) * n + s] = dx.data()[t * d + c] *
                                          phi.data()[(t * d + c) * n + s] *
                                          b.data()[t * n + s];
  if (out.requires_grad()) {
    auto xn = dx.node(), pn = phi.node(), bn = b.node(), on = out.node();
    out.node()->backprop = [xn, pn, bn, on = on.get(), L, d, n] {
      for (int t = 0; t < L; ++t)
        for (int c = 0; c < d; ++c)
          for (int s = 0; s < n; ++s) {
            int i = (t * d + c) * n + s;
            double go = on->g[i];
            if (xn->requires_grad)
              grad_of(xn)[t * d + c] += go * pn->v[i] * bn->v[t * n + s];
            if (pn->requires_grad)
              grad_of(pn)[i] += go * xn->v[t * d + c] * bn->v[t * n + s];
            if (bn->requires_grad)
              grad_of(bn)[t * n + s] += go * xn->v[t * d + c] * pn->v[i];
          }
    };
  }
  return out;
}

Tensor linear_scan(const Tensor& a_bar, const Tensor& u) {
  check_same_shape(a_bar, u, "linear_scan");
  if (a_bar.shape().empty())
    throw std::invalid_argument("linear_scan: want [L,...]");
  const int L = a_bar.dim(0);
  const std::int64_t M = a_bar.size() / L;
  Tensor out = make_result(a_bar.shape(), {a_bar, u});
  for (int t = 0; t < L; ++t)
    for (std::int64_t m = 0; m < M; ++m) {
      double prev = t == 0 ? 0.0 : out.data()[(t - 1) * M + m];
      out.data()[t * M + m] =
          a_bar.data()[t * M + m] * prev + u.data()[t * M + m];
    }
  if (out.requires_grad()) {
    auto an = a_bar.node(), un = u.node(), on = out.node();
    out.node()->backprop = [an, un, on = on.get(), L, M] {
      // g_t = dL/dh_t (accumulated) + a_{t+1} g_{t+1}, reverse recurrence.
      std::vector<double> carry(M, 0.0);
      for (int t = L - 1; t >= 0; --t)
        for (std::int64_t m = 0; m < M; ++m) {
          double g = on->g[t * M + m] + carry[m];
          if (un->requires_grad) grad_of(un)[t * M + m] += g;
          if (an->requires_grad) {
            double hprev = t == 0 ? 0.0 : on->v[(t - 1) * M + m];
            grad_of(an)[t * M + m] += g * hprev;
          }
          carry[m] = g * an->v[t * M + m];
        }
    };
  }
  return out;
}

Tensor contract_state(const Tensor& h, const Tensor& c) {
  if (h.shape().size() != 3 || c.shape().size() != 2 || c.dim(0) != h.dim(0) ||
      c.dim(1) != h.dim(2))
    throw std::invalid_argument("contract_state: want [L,d,n] x [L,n]");
  const int L = h.dim(0), d = h.dim(1), n = h.dim(2);
  Tensor out = make_result({L, d}, {h, c});
  for (int t = 0; t < L; ++t)
    for (int ch = 0; ch < d; ++ch) {
      double acc = 0.0;
      for (int s = 0; s < n; ++s)
        acc += h.data()[(t * d + ch) * n + s] * c.data()[t * n + s];
      out.data()[t * d + ch] = acc;
    }
  if (out.requires_grad()) {
    auto hn = h.node(), cn = c.node(), on = out.node();
    out.node()->backprop = [hn, cn, on = on.get(), L, d, n] {
      for (int t = 0; t < L; ++t)
        for (int ch = 0; ch < d; ++ch) {
          double go = on->g[t * d + ch];
          for (int s = 0; s < n; ++s) {
            if (hn->requires_grad)
              grad_of(hn)[(t * d + ch) * n + s] += go * cn->v[t * n + s];
            if (cn->requires_grad)
              grad_of(cn)[t * n + s] += go * hn->v[(t * d + ch) * n + s];
          }
        }
    };
  }
  return out;
}

Tensor causal_masked_softmax(const Tensor& scores) {
  if (scores.shape().size() != 2 || scores.dim(0) != scores.dim(1))
    throw std::invalid_argument("causal_masked_softmax: want square [L,L]");
  const int L = scores.dim(0);
  Tensor out = make_result(scores.shape(), {scores});
  for (int r = 0; r < L; ++r) {
    double mx = scores.data()[r * L];
    for (int j = 1; j <= r; ++j) mx = std::max(mx, scores.data()[r * L + j]);
    double z = 0.0;
    for (int j = 0; j <= r; ++j) {
      double e = std::exp(scores.data()[r * L + j] - mx);
      out.data()[r * L + j] = e;
      z += e;
    }
    for (int j = 0; j <= r; ++j) out.data()[r * L + j] /= z;
    for (int j = r + 1; j < L; ++j) out.data()[r * L + j] = 0.0;
  }
  if (out.requires_grad()) {
    auto sn = scores.node();
    auto on = out.node();
    out.node()->backprop = [sn, on = on.get(), L] {
      auto& gs = grad_of(sn);
      for (int r = 0; r < L; ++r) {
        double dot = 0.0;
        for (int j = 0; j <= r; ++j)
          dot += on->g[r * L + j] * on->v[r * L + j];
        for (int j = 0; j <= r; ++j)
          gs[r * L + j] += on->v[r * L + j] * (on->g[r * L + j] - dot);
      }
    };
  }
  return out;
}

Tensor cross_entropy_masked(const Tensor& logits, const std::vector<int>& targets,
                            const std::vector<double>& mask,
                            LossReduction reduction) {
  if (logits.shape().size() != 2 ||
      targets.size() != static_cast<size_t>(logits.dim(0)) ||
      mask.size() != targets.size())
    throw std::invalid_argument("cross_entropy_masked: shape mismatch");
  check_finite(logits, "cross_entropy_masked");
  const int R = logits.dim(0), V = logits.dim(1);
  double denom = 0.0;
  for (double m : mask) denom += m != 0.0 ? 1.0 : 0.0;
  if (denom == 0.0)
    throw std::invalid_argument("cross_entropy_masked: all-zero mask");
  if (reduction == LossReduction::Sum) denom = 1.0;

  Tensor out = make_result({1}, {logits});
  std::vector<double> probs(static_cast<size_t>(R) * V);
  double loss = 0.0;
  for (int r = 0; r < R; ++r) {
    double mx = logits.data()[r * V];
    for (int j = 1; j < V; ++j) mx = std::max(mx, logits.data()[r * V + j]);
    double z = 0.0;
    for (int j = 0; j < V; ++j) {
      probs[r * V + j] = std::exp(logits.data()[r * V + j] - mx);
      z += probs[r * V + j];
    }
    for (int j = 0; j < V; ++j) probs[r * V + j] /= z;
    if (mask[r] != 0.0) {
      if (targets[r] < 0 || targets[r] >= V)
        throw std::invalid_argument("cross_entropy_masked: target out of range");
      loss -= std::log(std::max(probs[r * V + targets[r]], 1e-300));
    }
  }
  out.data()[0] = loss / denom;
  if (out.requires_grad()) {
    auto ln = logits.node();
    auto on = out.node();
    out.node()->backprop = [ln, on = on.get(), probs, targets, mask, denom, R, V] {
      auto& gl = grad_of(ln);
      for (int r = 0; r < R; ++r) {
        if (mask[r] == 0.0) continue;
        for (int j = 0; j < V; ++j) {
          double p = probs[r * V + j];
          gl[r * V + j] +=
              on->g[0] * (p - (j == targets[r] ? 1.0 : 0.0)) / denom;
        }
      }
    };
  }
  return out;
}

void Adam::step(std::span<Tensor> params) {
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (p.grad().empty()) continue;
    for (std::int64_t j = 0; j < p.size(); ++j) {
      double g = p.grad()[j];
      m_[i][j] = beta1 * m_[i][j] + (1.0 - beta1) * g;
      v_[i][j] = beta2 * v_[i][j] + (1.0 - beta2) * g * g;
      double mhat = m_[i][j] / bc1;
      double vhat = v_[i][j] / bc2;
      p.data()[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace rrg::ag
