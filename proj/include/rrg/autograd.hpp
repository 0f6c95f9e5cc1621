// Reverse-mode autodiff over dense double tensors.
//
// Small tape-based engine: each op builds a Node holding the forward value
// and a closure that scatters gradients into its parents. Shapes are plain
// row-major dimension vectors. Everything runs on the CPU in double
// precision so finite-difference checks stay tight.

#ifndef RRG_AUTOGRAD_HPP
#define RRG_AUTOGRAD_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace rrg::ag {

using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

struct Node {
  std::vector<double> v;
  std::vector<double> g;
  Shape shape;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backprop;  // scatter this->g into parents' g
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(std::vector<double> data, Shape shape,
                     bool requires_grad = false);
  static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev,
                      bool requires_grad = true);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int dim(int i) const { return n_->shape[i]; }
  std::int64_t size() const { return static_cast<std::int64_t>(n_->v.size()); }
  double* data() { return n_->v.data(); }
  const double* data() const { return n_->v.data(); }
  double item() const { return n_->v[0]; }
  std::vector<double>& values() { return n_->v; }
  const std::vector<double>& values() const { return n_->v; }
  std::vector<double>& grad() { return n_->g; }
  const std::vector<double>& grad() const { return n_->g; }
  bool requires_grad() const { return n_->requires_grad; }
  std::shared_ptr<Node> node() const { return n_; }

 private:
  std::shared_ptr<Node> n_;
};

// Runs the tape backward from a scalar loss (grad seeded to 1).
void backward(const Tensor& loss);
void zero_grad(std::span<Tensor> params);

// Elementwise / broadcast arithmetic.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor add_rowvec(const Tensor& x, const Tensor& b);  // [R,C] + [C]
Tensor mul_rowvec(const Tensor& x, const Tensor& b);  // [R,C] * [C]

// Unary maps.
Tensor exp(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor softplus(const Tensor& a);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k]x[k,n]
Tensor transpose(const Tensor& a);                // 2-D

// Shape plumbing.
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, int row0, int row1);
Tensor gather_rows(const Tensor& a, const std::vector<int>& index);

// Reductions / normalization.
Tensor mean_rows(const Tensor& a);  // [R,C] -> [C]
Tensor sum_all(const Tensor& a);    // -> scalar
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// Token embedding lookup; backward scatter-adds into the table.
Tensor embedding(const Tensor& table, const std::vector<int>& ids);

// Depthwise 3x3 conv on an [H,W,C] grid, zero padding, kernel [C,9], bias [C].
Tensor dwconv3x3(const Tensor& x, const Tensor& kernel, const Tensor& bias);

// Selective-scan building blocks.
Tensor outer_ld_dn(const Tensor& delta, const Tensor& a);  // [L,d],[d,n]->[L,d,n]
Tensor zoh_phi(const Tensor& z);                           // (e^z - 1)/z
Tensor scan_input(const Tensor& dx, const Tensor& phi, const Tensor& b);
Tensor linear_scan(const Tensor& a_bar, const Tensor& u);  // h_t = a_t h_{t-1} + u_t
Tensor contract_state(const Tensor& h, const Tensor& c);   // [L,d,n],[L,n]->[L,d]

// Attention helpers.
Tensor causal_masked_softmax(const Tensor& scores);  // [L,L], row i over cols <= i

enum class LossReduction { Mean, Sum };

// Masked token-level NLL: -log softmax(logits)[target] over positions with
// mask != 0. Throws if the mask is all zero.
Tensor cross_entropy_masked(const Tensor& logits, const std::vector<int>& targets,
                            const std::vector<double>& mask,
                            LossReduction reduction = LossReduction::Mean);

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void step(std::span<Tensor> params);

 private:
  std::vector<std::vector<double>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace rrg::ag

#endif
