#include "rrg/vision.hpp"

#include <cmath>
#include <stdexcept>

namespace rrg {

using ag::Tensor;

std::array<std::vector<int>, 4> cross_scan_orders(int height, int width) {
  std::array<std::vector<int>, 4> orders;
  const int L = height * width;
  orders[0].resize(L);
  for (int i = 0; i < L; ++i) orders[0][i] = i;  // row-major forward
  orders[1].assign(orders[0].rbegin(), orders[0].rend());
  orders[2].reserve(L);  // column-major forward
  for (int w = 0; w < width; ++w)
    for (int h = 0; h < height; ++h) orders[2].push_back(h * width + w);
  orders[3].assign(orders[2].rbegin(), orders[2].rend());
  return orders;
}

ag::Tensor ss2d_cross_scan(const FeatureMap& fm, const SelectiveSSM& ssm) {
  const int H = fm.height(), W = fm.width(), C = fm.channels();
  if (H < 1 || W < 1) throw std::invalid_argument("ss2d_cross_scan: empty grid");
  Tensor flat = ag::reshape(fm.grid, {H * W, C});
  auto orders = cross_scan_orders(H, W);
  Tensor merged;
  for (const auto& order : orders) {
    std::vector<int> inverse(order.size());
    for (size_t i = 0; i < order.size(); ++i) inverse[order[i]] = static_cast<int>(i);
    Tensor scanned = ssm.forward(ag::gather_rows(flat, order));
    Tensor back = ag::gather_rows(scanned, inverse);
    merged = merged.defined() ? ag::add(merged, back) : back;
  }
  return ag::scale(merged, 0.25);
}

PatchEmbed PatchEmbed::init(int in_channels, int patch, int out_channels,
                            std::mt19937_64& rng) {
  PatchEmbed pe;
  pe.in_channels = in_channels;
  pe.patch = patch;
  pe.out_channels = out_channels;
  int fan_in = in_channels * patch * patch;
  pe.W = Tensor::randn({out_channels, fan_in}, rng, 1.0 / std::sqrt(fan_in));
  pe.b = Tensor::zeros({out_channels}, true);
  return pe;
}

FeatureMap PatchEmbed::forward(const std::vector<double>& image, int c, int h,
                               int w) const {
  if (c != in_channels) throw std::invalid_argument("patch_embed: channel mismatch");
  if (h % patch != 0 || w % patch != 0)
    throw std::invalid_argument("patch_embed: image dimensions not divisible by patch size");
  if (image.size() != static_cast<size_t>(c) * h * w)
    throw std::invalid_argument("patch_embed: image size mismatch");
  const int gh = h / patch, gw = w / patch;
  const int fan_in = c * patch * patch;
  std::vector<double> patches(static_cast<size_t>(gh) * gw * fan_in);
  for (int ph = 0; ph < gh; ++ph)
    for (int pw = 0; pw < gw; ++pw) {
      double* row = patches.data() + (ph * gw + pw) * fan_in;
      int k = 0;
      for (int ch = 0; ch < c; ++ch)
        for (int dh = 0; dh < patch; ++dh)
          for (int dw = 0; dw < patch; ++dw)
            row[k++] = image[(ch * h + ph * patch + dh) * w + pw * patch + dw];
    }
  Tensor p = Tensor::from(std::move(patches), {gh * gw, fan_in});
  Tensor grid = ag::add_rowvec(ag::matmul(p, ag::transpose(W)), b);
  FeatureMap fm;
  fm.grid = ag::reshape(grid, {gh, gw, out_channels});
  fm.patch = patch;
  fm.stride = patch;
  return fm;
}

FeatureMap PatchEmbed::forward(const Image& img) const {
  std::vector<double> pixels(img.pixels.begin(), img.pixels.end());
  return forward(pixels, 1, img.height, img.width);
}

void PatchEmbed::collect(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".W", W);
  out.emplace_back(prefix + ".b", b);
}

VMambaBlock VMambaBlock::init(int channels, int expand, int d_state,
                              std::mt19937_64& rng) {
  VMambaBlock blk;
  blk.channels = channels;
  blk.inner = channels * expand;
  blk.ln_gamma = Tensor::full({channels}, 1.0, true);
  blk.ln_beta = Tensor::zeros({channels}, true);
  blk.W_in = Tensor::randn({blk.inner, channels}, rng, 1.0 / std::sqrt(channels));
  blk.b_in = Tensor::zeros({blk.inner}, true);
  blk.dw_kernel = Tensor::randn({blk.inner, 9}, rng, 1.0 / 3.0);
  blk.dw_bias = Tensor::zeros({blk.inner}, true);
  blk.ssm = SelectiveSSM::init(blk.inner, d_state, rng);
  blk.W_gate = Tensor::randn({blk.inner, channels}, rng, 1.0 / std::sqrt(channels));
  blk.b_gate = Tensor::zeros({blk.inner}, true);
  blk.W_out = Tensor::randn({channels, blk.inner}, rng, 1.0 / std::sqrt(blk.inner));
  blk.b_out = Tensor::zeros({channels}, true);
  return blk;
}

FeatureMap VMambaBlock::forward(const FeatureMap& fm) const {
  if (fm.channels() != channels)
    throw std::invalid_argument("vmamba_block: channel width mismatch");
  const int H = fm.height(), W = fm.width();
  Tensor flat = ag::reshape(fm.grid, {H * W, channels});
  Tensor u = ag::layer_norm(flat, ln_gamma, ln_beta);

  Tensor main = ag::add_rowvec(ag::matmul(u, ag::transpose(W_in)), b_in);
  Tensor grid = ag::reshape(main, {H, W, inner});
  grid = ag::dwconv3x3(grid, dw_kernel, dw_bias);
  Tensor act = ag::silu(ag::reshape(grid, {H * W, inner}));
  FeatureMap inner_fm;
  inner_fm.grid = ag::reshape(act, {H, W, inner});
  Tensor scanned = ss2d_cross_scan(inner_fm, ssm);  // [H*W, inner]

  Tensor gate = ag::silu(ag::add_rowvec(ag::matmul(u, ag::transpose(W_gate)), b_gate));
  Tensor fused = ag::mul(scanned, gate);
  Tensor out = ag::add(flat, ag::add_rowvec(ag::matmul(fused, ag::transpose(W_out)), b_out));

  FeatureMap res = fm;
  res.grid = ag::reshape(out, {H, W, channels});
  return res;
}

void VMambaBlock::collect(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".ln_gamma", ln_gamma);
  out.emplace_back(prefix + ".ln_beta", ln_beta);
  out.emplace_back(prefix + ".W_in", W_in);
  out.emplace_back(prefix + ".b_in", b_in);
  out.emplace_back(prefix + ".dw_kernel", dw_kernel);
  out.emplace_back(prefix + ".dw_bias", dw_bias);
  out.emplace_back(prefix + ".ssm.A_log", ssm.A_log);
  out.emplace_back(prefix + ".ssm.W_delta", ssm.W_delta);
  out.emplace_back(prefix + ".ssm.b_delta", ssm.b_delta);
  out.emplace_back(prefix + ".ssm.W_B", ssm.W_B);
  out.emplace_back(prefix + ".ssm.W_C", ssm.W_C);
  out.emplace_back(prefix + ".ssm.D", ssm.D);
  out.emplace_back(prefix + ".W_gate", W_gate);
  out.emplace_back(prefix + ".b_gate", b_gate);
  out.emplace_back(prefix + ".W_out", W_out);
  out.emplace_back(prefix + ".b_out", b_out);
}

PatchMerge PatchMerge::init(int in_channels, int out_channels, std::mt19937_64& rng) {
  PatchMerge pm;
  pm.in_channels = in_channels;
  pm.out_channels = out_channels;
  pm.W = Tensor::randn({out_channels, 4 * in_channels}, rng,
                       1.0 / std::sqrt(4.0 * in_channels));
  pm.b = Tensor::zeros({out_channels}, true);
  return pm;
}

FeatureMap PatchMerge::forward(const FeatureMap& fm) const {
  const int H = fm.height(), W = fm.width(), C = fm.channels();
  if (H % 2 != 0 || W % 2 != 0 || C != in_channels)
    throw std::invalid_argument("patch_merge: shape mismatch");
  Tensor flat = ag::reshape(fm.grid, {H * W, C});
  std::vector<int> order;
  order.reserve(static_cast<size_t>(H) * W);
  for (int h = 0; h < H; h += 2)
    for (int w = 0; w < W; w += 2) {
      order.push_back(h * W + w);
      order.push_back(h * W + w + 1);
      order.push_back((h + 1) * W + w);
      order.push_back((h + 1) * W + w + 1);
    }
  Tensor grouped = ag::reshape(ag::gather_rows(flat, order),
                               {H * W / 4, 4 * C});
  Tensor reduced =
      ag::add_rowvec(ag::matmul(grouped, ag::transpose(this->W)), b);
  FeatureMap res;
  res.grid = ag::reshape(reduced, {H / 2, W / 2, out_channels});
  res.patch = fm.patch;
  res.stride = fm.stride * 2;
  return res;
}

void PatchMerge::collect(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".W", W);
  out.emplace_back(prefix + ".b", b);
}

GlobalFeature global_pool(const FeatureMap& fm) {
  if (fm.height() < 1 || fm.width() < 1)
    throw std::invalid_argument("global_pool: empty grid");
  GlobalFeature g;
  g.vec = ag::mean_rows(
      ag::reshape(fm.grid, {fm.height() * fm.width(), fm.channels()}));
  g.stage = FeatureStage::Raw;
  return g;
}

SequentialTokenHead SequentialTokenHead::init(int in_channels, int embed,
                                              std::mt19937_64& rng) {
  SequentialTokenHead h;
  h.in_channels = in_channels;
  h.embed = embed;
  h.W = Tensor::randn({embed, in_channels}, rng, 1.0 / std::sqrt(in_channels));
  h.b = Tensor::zeros({embed}, true);
  h.ln_gamma = Tensor::full({embed}, 1.0, true);
  h.ln_beta = Tensor::zeros({embed}, true);
  return h;
}

ag::Tensor SequentialTokenHead::forward(const FeatureMap& fm) const {
  if (fm.channels() != in_channels)
    throw std::invalid_argument("sequential_tokens: channel mismatch");
  Tensor flat = ag::reshape(fm.grid, {fm.height() * fm.width(), in_channels});
  Tensor proj = ag::add_rowvec(ag::matmul(flat, ag::transpose(W)), b);
  return ag::layer_norm(proj, ln_gamma, ln_beta);
}

void SequentialTokenHead::collect(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".W", W);
  out.emplace_back(prefix + ".b", b);
  out.emplace_back(prefix + ".ln_gamma", ln_gamma);
  out.emplace_back(prefix + ".ln_beta", ln_beta);
}

VisionBackbone VisionBackbone::init(const VisionConfig& cfg, std::mt19937_64& rng) {
  VisionBackbone vb;
  vb.cfg = cfg;
  vb.embed = PatchEmbed::init(cfg.in_channels, cfg.patch, cfg.stage_channels[0], rng);
  for (size_t s = 0; s < cfg.stage_channels.size(); ++s) {
    std::vector<VMambaBlock> blocks;
    for (int b = 0; b < cfg.blocks_per_stage; ++b)
      blocks.push_back(
          VMambaBlock::init(cfg.stage_channels[s], cfg.expand, cfg.d_state, rng));
    vb.stages.push_back(std::move(blocks));
    if (s + 1 < cfg.stage_channels.size())
      vb.merges.push_back(
          PatchMerge::init(cfg.stage_channels[s], cfg.stage_channels[s + 1], rng));
  }
  return vb;
}

FeatureMap VisionBackbone::forward(const Image& img) const {
  FeatureMap fm = embed.forward(img);
  for (size_t s = 0; s < stages.size(); ++s) {
    for (const auto& blk : stages[s]) fm = blk.forward(fm);
    if (s < merges.size()) fm = merges[s].forward(fm);
  }
  return fm;
}

void VisionBackbone::collect(NamedParams& out, const std::string& prefix) const {
  embed.collect(out, prefix + ".embed");
  for (size_t s = 0; s < stages.size(); ++s) {
    for (size_t b = 0; b < stages[s].size(); ++b)
      stages[s][b].collect(out, prefix + ".stage" + std::to_string(s) + ".block" +
                                    std::to_string(b));
    if (s < merges.size())
      merges[s].collect(out, prefix + ".merge" + std::to_string(s));
  }
}

}  // namespace rrg
