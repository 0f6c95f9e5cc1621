// Continuous -> discrete state-space machinery and scan execution.
//
// The reference path works on explicit DiscreteStep bundles in double
// precision. The trainable selective layer (SelectiveSSM) lives on the
// autodiff tape and assumes diagonal A.

#ifndef RRG_SSM_HPP
#define RRG_SSM_HPP

#include <functional>
#include <random>
#include <span>
#include <vector>

#include "rrg/autograd.hpp"

namespace rrg {

// (A, B, C) with A either dense n x n or diagonal (n entries).
struct ContinuousSSM {
  int n = 0;  // state size
  int p = 1;  // input size
  int q = 1;  // output size
  bool diagonal = false;
  std::vector<double> A;  // n*n, or n if diagonal
  std::vector<double> B;  // n*p
  std::vector<double> C;  // q*n

  void validate() const;
};

struct DiscreteStep {
  int n = 0;
  int p = 1;
  bool diagonal = false;
  std::vector<double> A_bar;  // n*n, or n if diagonal
  std::vector<double> B_bar;  // n*p
  double delta = 0.0;
};

struct ScanState {
  std::vector<double> h;
  int t = 0;
};

// ZOH: A_bar = exp(dA), B_bar = (dA)^-1 (exp(dA) - I) dB, with a series
// evaluation of the phi factor when ||dA|| is small.
DiscreteStep discretize_zoh(const ContinuousSSM& ssm, double delta);

// Dense matrix exponential (scaling and squaring), exposed for tests.
std::vector<double> expm(const std::vector<double>& a, int n);

// h_t = A_bar_t h_{t-1} + B_bar_t x_t ; y_t = C h_t, strictly left to right.
// x is L*p row-major, output L*q. Steps may be time-varying (one per t) or a
// single step reused for every t.
std::vector<double> scan_sequential(std::span<const DiscreteStep> steps,
                                    const std::vector<double>& c, int q,
                                    const std::vector<double>& x, int L,
                                    const std::vector<double>& h0);

// Same contract, evaluated as a Blelloch up/down-sweep over elementwise
// affine maps. Requires diagonal steps.
std::vector<double> scan_parallel(std::span<const DiscreteStep> steps,
                                  const std::vector<double>& c, int q,
                                  const std::vector<double>& x, int L,
                                  const std::vector<double>& h0);

struct SelectionWeights {
  int p = 0;  // input width
  int n = 0;  // state size
  std::vector<double> W_delta, b_delta;  // p*p, p
  std::vector<double> W_B, b_B;          // n*p, n
  std::vector<double> W_C, b_C;          // n*p, n
};

struct SelectedParams {
  std::vector<double> delta;  // p (per channel)
  std::vector<double> B;      // n
  std::vector<double> C;      // n
};

// delta = softplus(W_delta x + b_delta), B/C plain affine maps of x.
SelectedParams selective_parameters(const std::vector<double>& x_t,
                                    const SelectionWeights& w);

// Central finite differences vs. analytic gradients over a parameter list.
// loss_fn must rebuild its graph from the current parameter values on every
// call. Returns the max relative error across all parameter entries.
double gradient_check(const std::function<ag::Tensor()>& loss_fn,
                      std::span<ag::Tensor> params, double epsilon);

// Trainable selective scan layer over a 1-D token sequence (diagonal A).
// delta/B/C are functions of the input token; discretization uses exact
// ZOH per channel/state.
struct SelectiveSSM {
  int d = 0;       // channel width
  int d_state = 0; // states per channel
  ag::Tensor A_log;            // [d, n], A = -exp(A_log)
  ag::Tensor W_delta, b_delta; // [d, d], [d]
  ag::Tensor W_B, W_C;         // [n, d]
  ag::Tensor D;                // [d] skip

  static SelectiveSSM init(int d, int d_state, std::mt19937_64& rng);
  ag::Tensor forward(const ag::Tensor& x) const;  // [L,d] -> [L,d]
  void collect(std::vector<ag::Tensor>& out) const;
};

}  // namespace rrg

#endif
