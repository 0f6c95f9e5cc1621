#include "rrg/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rrg {

using ag::Tensor;

void DecoderConfig::validate() const {
  if (vocab < 4) throw std::invalid_argument("DecoderConfig: vocab must be >= 4");
  if (embed < 1 || layers < 1 || context_window < 1 || d_state < 1)
    throw std::invalid_argument("DecoderConfig: bad dimensions");
}

namespace {
DecoderBlock make_block(const DecoderConfig& cfg, std::mt19937_64& rng) {
  DecoderBlock b;
  b.kind = cfg.backbone;
  const int E = cfg.embed;
  b.ln1_gamma = Tensor::full({E}, 1.0, true);
  b.ln1_beta = Tensor::zeros({E}, true);
  if (cfg.backbone == DecoderBackbone::Ssm) {
    b.ssm = SelectiveSSM::init(E, cfg.d_state, rng);
  } else {
    double s = 1.0 / std::sqrt(E);
    b.W_q = Tensor::randn({E, E}, rng, s);
    b.W_k = Tensor::randn({E, E}, rng, s);
    b.W_v = Tensor::randn({E, E}, rng, s);
    b.W_o = Tensor::randn({E, E}, rng, s);
  }
  b.ln2_gamma = Tensor::full({E}, 1.0, true);
  b.ln2_beta = Tensor::zeros({E}, true);
  b.W_mlp1 = Tensor::randn({cfg.mlp_hidden, E}, rng, 1.0 / std::sqrt(E));
  b.b_mlp1 = Tensor::zeros({cfg.mlp_hidden}, true);
  b.W_mlp2 = Tensor::randn({E, cfg.mlp_hidden}, rng, 1.0 / std::sqrt(cfg.mlp_hidden));
  b.b_mlp2 = Tensor::zeros({E}, true);
  return b;
}
}  // namespace

ag::Tensor DecoderBlock::forward(const ag::Tensor& x) const {
  Tensor u = ag::layer_norm(x, ln1_gamma, ln1_beta);
  Tensor mixed;
  if (kind == DecoderBackbone::Ssm) {
    mixed = ssm.forward(u);
  } else {
    const int E = u.dim(1);
    Tensor q = ag::matmul(u, ag::transpose(W_q));
    Tensor k = ag::matmul(u, ag::transpose(W_k));
    Tensor v = ag::matmul(u, ag::transpose(W_v));
    Tensor scores = ag::scale(ag::matmul(q, ag::transpose(k)), 1.0 / std::sqrt(E));
    Tensor attn = ag::causal_masked_softmax(scores);
    mixed = ag::matmul(ag::matmul(attn, v), ag::transpose(W_o));
  }
  Tensor h = ag::add(x, mixed);
  Tensor w = ag::layer_norm(h, ln2_gamma, ln2_beta);
  Tensor m = ag::add_rowvec(ag::matmul(w, ag::transpose(W_mlp1)), b_mlp1);
  m = ag::add_rowvec(ag::matmul(ag::silu(m), ag::transpose(W_mlp2)), b_mlp2);
  return ag::add(h, m);
}

void DecoderBlock::collect(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".ln1_gamma", ln1_gamma);
  out.emplace_back(prefix + ".ln1_beta", ln1_beta);
  if (kind == DecoderBackbone::Ssm) {
    out.emplace_back(prefix + ".ssm.A_log", ssm.A_log);
    out.emplace_back(prefix + ".ssm.W_delta", ssm.W_delta);
    out.emplace_back(prefix + ".ssm.b_delta", ssm.b_delta);
    out.emplace_back(prefix + ".ssm.W_B", ssm.W_B);
    out.emplace_back(prefix + ".ssm.W_C", ssm.W_C);
    out.emplace_back(prefix + ".ssm.D", ssm.D);
  } else {
    out.emplace_back(prefix + ".W_q", W_q);
    out.emplace_back(prefix + ".W_k", W_k);
    out.emplace_back(prefix + ".W_v", W_v);
    out.emplace_back(prefix + ".W_o", W_o);
  }
  out.emplace_back(prefix + ".ln2_gamma", ln2_gamma);
  out.emplace_back(prefix + ".ln2_beta", ln2_beta);
  out.emplace_back(prefix + ".W_mlp1", W_mlp1);
  out.emplace_back(prefix + ".b_mlp1", b_mlp1);
  out.emplace_back(prefix + ".W_mlp2", W_mlp2);
  out.emplace_back(prefix + ".b_mlp2", b_mlp2);
}

Decoder Decoder::init(const DecoderConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  Decoder d;
  d.cfg = cfg;
  d.tok_embed = Tensor::randn({cfg.vocab, cfg.embed}, rng, 0.02);
  if (cfg.backbone == DecoderBackbone::Attention)
    d.pos_embed = Tensor::randn({cfg.context_window, cfg.embed}, rng, 0.02);
  for (int i = 0; i < cfg.layers; ++i) d.blocks.push_back(make_block(cfg, rng));
  d.lnf_gamma = Tensor::full({cfg.embed}, 1.0, true);
  d.lnf_beta = Tensor::zeros({cfg.embed}, true);
  d.W_head = Tensor::randn({cfg.vocab, cfg.embed}, rng, 1.0 / std::sqrt(cfg.embed));
  d.b_head = Tensor::zeros({cfg.vocab}, true);
  return d;
}

ag::Tensor Decoder::forward_embeds(const ag::Tensor& embeds) const {
  if (embeds.shape().size() != 2 || embeds.dim(1) != cfg.embed)
    throw std::invalid_argument("Decoder::forward: want [L,E] embeddings");
  const int L = embeds.dim(0);
  if (L > cfg.context_window)
    throw std::length_error("Decoder::forward: sequence exceeds context window");
  Tensor x = embeds;
  if (cfg.backbone == DecoderBackbone::Attention) {
    std::vector<int> idx(L);
    for (int i = 0; i < L; ++i) idx[i] = i;
    x = ag::add(x, ag::gather_rows(pos_embed, idx));
  }
  for (const auto& blk : blocks) x = blk.forward(x);
  x = ag::layer_norm(x, lnf_gamma, lnf_beta);
  return ag::add_rowvec(ag::matmul(x, ag::transpose(W_head)), b_head);
}

ag::Tensor Decoder::forward_ids(const std::vector<int>& ids) const {
  return forward_embeds(embed_ids(ids));
}

ag::Tensor Decoder::embed_ids(const std::vector<int>& ids) const {
  return ag::embedding(tok_embed, ids);
}

void Decoder::collect(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".tok_embed", tok_embed);
  if (pos_embed.defined()) out.emplace_back(prefix + ".pos_embed", pos_embed);
  for (size_t i = 0; i < blocks.size(); ++i)
    blocks[i].collect(out, prefix + ".block" + std::to_string(i));
  out.emplace_back(prefix + ".lnf_gamma", lnf_gamma);
  out.emplace_back(prefix + ".lnf_beta", lnf_beta);
  out.emplace_back(prefix + ".W_head", W_head);
  out.emplace_back(prefix + ".b_head", b_head);
}

ag::Tensor decoder_loss(const ag::Tensor& logits, const std::vector<int>& targets,
                        const std::vector<double>& mask,
                        ag::LossReduction reduction) {
  return ag::cross_entropy_masked(logits, targets, mask, reduction);
}

std::vector<int> beam_search(
    const std::function<std::vector<double>(const std::vector<int>&)>& next_logprobs,
    int vocab, const BeamConfig& cfg) {
  if (cfg.width < 1) throw std::invalid_argument("beam_search: width must be >= 1");
  struct Hyp {
    std::vector<int> tokens;
    double logprob = 0.0;
  };
  auto norm_score = [&](const Hyp& h) {
    double len = std::max<size_t>(h.tokens.size(), 1);
    return h.logprob / std::pow(len, cfg.length_alpha);
  };
  // Lexicographic token tie-break keeps decoding deterministic.
  auto better = [&](const Hyp& a, const Hyp& b) {
    double sa = norm_score(a), sb = norm_score(b);
    if (sa != sb) return sa > sb;
    return a.tokens < b.tokens;
  };

  std::vector<Hyp> live{Hyp{}};
  std::vector<Hyp> completed;
  for (int step = 0; step < cfg.max_len && !live.empty(); ++step) {
    std::vector<Hyp> expanded;
    for (const auto& h : live) {
      std::vector<double> lp = next_logprobs(h.tokens);
      if (static_cast<int>(lp.size()) != vocab)
        throw std::runtime_error("beam_search: logprob width mismatch");
      for (int t = 0; t < vocab; ++t) {
        Hyp nh = h;
        nh.tokens.push_back(t);
        nh.logprob += lp[t];
        if (t == cfg.eos || step + 1 == cfg.max_len)
          completed.push_back(nh);
        else
          expanded.push_back(std::move(nh));
      }
    }
    std::sort(expanded.begin(), expanded.end(), better);
    if (static_cast<int>(expanded.size()) > cfg.width) expanded.resize(cfg.width);
    live = std::move(expanded);
  }
  if (completed.empty())
    throw std::logic_error("beam_search: no completed hypothesis");
  return std::min_element(completed.begin(), completed.end(),
                          [&](const Hyp& a, const Hyp& b) { return better(a, b); })
      ->tokens;
}

int default_beam_width(const std::string& dataset_style) {
  if (dataset_style == "iu-xray") return 5;
  if (dataset_style == "mimic") return 3;
  throw std::invalid_argument("unknown dataset style: " + dataset_style);
}

}  // namespace rrg
