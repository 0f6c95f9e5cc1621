// Miniature autoregressive decoder: embeds tokens, runs causal SSM or
// attention blocks, trains with masked NLL, decodes with beam search.

#ifndef RRG_DECODER_HPP
#define RRG_DECODER_HPP

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rrg/autograd.hpp"
#include "rrg/ssm.hpp"
#include "rrg/vision.hpp"

namespace rrg {

enum class DecoderBackbone { Ssm, Attention };

struct DecoderConfig {
  int vocab = 4;
  int embed = 32;
  int layers = 2;
  int context_window = 256;
  int d_state = 4;     // SSM states per channel
  int mlp_hidden = 64;
  DecoderBackbone backbone = DecoderBackbone::Ssm;

  void validate() const;
};

struct DecoderBlock {
  DecoderBackbone kind = DecoderBackbone::Ssm;
  ag::Tensor ln1_gamma, ln1_beta;
  SelectiveSSM ssm;                      // ssm kind
  ag::Tensor W_q, W_k, W_v, W_o;         // attention kind, [E,E]
  ag::Tensor ln2_gamma, ln2_beta;
  ag::Tensor W_mlp1, b_mlp1, W_mlp2, b_mlp2;

  ag::Tensor forward(const ag::Tensor& x) const;  // [L,E] -> [L,E]
  void collect(NamedParams& out, const std::string& prefix) const;
};

struct Decoder {
  DecoderConfig cfg;
  ag::Tensor tok_embed;  // [V, E]
  ag::Tensor pos_embed;  // [context_window, E], attention backbone only
  std::vector<DecoderBlock> blocks;
  ag::Tensor lnf_gamma, lnf_beta;
  ag::Tensor W_head, b_head;  // [V, E]

  static Decoder init(const DecoderConfig& cfg, std::mt19937_64& rng);

  // Logits over V at every position; causal by construction.
  ag::Tensor forward_embeds(const ag::Tensor& embeds) const;  // [L,E] -> [L,V]
  ag::Tensor forward_ids(const std::vector<int>& ids) const;

  ag::Tensor embed_ids(const std::vector<int>& ids) const;  // [L,E]
  void collect(NamedParams& out, const std::string& prefix) const;
};

// Masked NLL for instruction tuning: positions with mask != 0 contribute
// -log p(target); reduction mean (default) or sum.
ag::Tensor decoder_loss(const ag::Tensor& logits, const std::vector<int>& targets,
                        const std::vector<double>& mask,
                        ag::LossReduction reduction = ag::LossReduction::Mean);

struct BeamConfig {
  int width = 5;
  int max_len = 32;
  double length_alpha = 0.7;  // score = logprob / len^alpha
  int eos = -1;               // -1 disables eos termination
};

// next_logprobs(prefix) returns log-probabilities over V for the next token
// given the already-emitted report tokens. Deterministic tie-break by token
// id. Returns the best completed hypothesis by length-normalized score.
std::vector<int> beam_search(
    const std::function<std::vector<double>(const std::vector<int>&)>& next_logprobs,
    int vocab, const BeamConfig& cfg);

// Dataset-style presets: beam width 5 for IU-Xray-style runs, 3 for
// MIMIC-style runs.
int default_beam_width(const std::string& dataset_style);

}  // namespace rrg

#endif
