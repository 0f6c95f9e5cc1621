// Patch embedding and VMamba-style blocks producing the global feature and
// sequential tokens from a 2-D input.

#ifndef RRG_VISION_HPP
#define RRG_VISION_HPP

#include <array>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rrg/autograd.hpp"
#include "rrg/data.hpp"
#include "rrg/ssm.hpp"

namespace rrg {

using NamedParams = std::vector<std::pair<std::string, ag::Tensor>>;

struct FeatureMap {
  ag::Tensor grid;  // [H, W, C]
  int patch = 1;
  int stride = 1;

  int height() const { return grid.dim(0); }
  int width() const { return grid.dim(1); }
  int channels() const { return grid.dim(2); }
};

enum class FeatureStage { Raw, Projected };

struct GlobalFeature {
  ag::Tensor vec;  // [C] raw or [E] projected
  FeatureStage stage = FeatureStage::Raw;
};

// The four corner-started traversal orders over row-major cell indices:
// row-major forward/backward, column-major forward/backward.
std::array<std::vector<int>, 4> cross_scan_orders(int height, int width);

// Four 1-D selective scans over the four traversal orders, each
// inverse-permuted back to grid positions, merged by elementwise mean.
ag::Tensor ss2d_cross_scan(const FeatureMap& fm, const SelectiveSSM& ssm);

struct PatchEmbed {
  int in_channels = 1;
  int patch = 8;
  int out_channels = 16;
  ag::Tensor W;  // [out, in*patch*patch]
  ag::Tensor b;  // [out]

  static PatchEmbed init(int in_channels, int patch, int out_channels,
                         std::mt19937_64& rng);
  FeatureMap forward(const std::vector<double>& image, int c, int h, int w) const;
  FeatureMap forward(const Image& img) const;
  void collect(NamedParams& out, const std::string& prefix) const;
};

// x + Linear(SS2D(SiLU(DWConv(Linear(LN(x))))) * SiLU(Linear(LN(x)))).
struct VMambaBlock {
  int channels = 0;
  int inner = 0;  // expanded width feeding SS2D
  ag::Tensor ln_gamma, ln_beta;
  ag::Tensor W_in, b_in;      // [inner, channels]
  ag::Tensor dw_kernel, dw_bias;  // [inner, 9], [inner]
  SelectiveSSM ssm;
  ag::Tensor W_gate, b_gate;  // [inner, channels]
  ag::Tensor W_out, b_out;    // [channels, inner]

  static VMambaBlock init(int channels, int expand, int d_state,
                          std::mt19937_64& rng);
  FeatureMap forward(const FeatureMap& fm) const;
  void collect(NamedParams& out, const std::string& prefix) const;
};

// 2x2 space-to-depth followed by a linear 4C -> C_out reduction.
struct PatchMerge {
  int in_channels = 0;
  int out_channels = 0;
  ag::Tensor W, b;

  static PatchMerge init(int in_channels, int out_channels, std::mt19937_64& rng);
  FeatureMap forward(const FeatureMap& fm) const;
  void collect(NamedParams& out, const std::string& prefix) const;
};

GlobalFeature global_pool(const FeatureMap& fm);

// v_S = LN(Proj(Flatten(v))), row-major order.
struct SequentialTokenHead {
  int in_channels = 0;
  int embed = 0;
  ag::Tensor W, b;  // [E, C], [E]
  ag::Tensor ln_gamma, ln_beta;

  static SequentialTokenHead init(int in_channels, int embed, std::mt19937_64& rng);
  ag::Tensor forward(const FeatureMap& fm) const;  // [H*W, E]
  void collect(NamedParams& out, const std::string& prefix) const;
};

struct VisionConfig {
  int in_channels = 1;
  int patch = 8;
  std::vector<int> stage_channels = {16, 32};
  int blocks_per_stage = 2;
  int expand = 2;
  int d_state = 4;
};

struct VisionBackbone {
  VisionConfig cfg;
  PatchEmbed embed;
  std::vector<std::vector<VMambaBlock>> stages;
  std::vector<PatchMerge> merges;  // between consecutive stages

  static VisionBackbone init(const VisionConfig& cfg, std::mt19937_64& rng);
  FeatureMap forward(const Image& img) const;
  void collect(NamedParams& out, const std::string& prefix) const;
};

inline std::vector<ag::Tensor> param_tensors(const NamedParams& named) {
  std::vector<ag::Tensor> out;
  for (const auto& [name, t] : named) out.push_back(t);
  return out;
}

}  // namespace rrg

#endif
