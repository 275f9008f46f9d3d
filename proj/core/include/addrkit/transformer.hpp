// Decoder-only transformer trunk shared by the policy, value, and nothing
// else: pre-LN blocks, multi-head attention with linear distance penalties
// (no learned positions), exact-erf GELU MLP, final LayerNorm.
//
// Two execution paths exist and are cross-checked in tests: a full-sequence
// batched path with a backward pass, and a prefill + single-step path with a
// key/value cache for generation.
#pragma once

#include <string>
#include <vector>

#include "addrkit/common.hpp"
#include "addrkit/nn.hpp"

namespace addrkit {

struct TrunkConfig {
  int vocab = 0;
  int d_model = 64;
  int n_layers = 3;
  int n_heads = 4;
  int d_ff = 256;
  int max_len = 256;
};

class Trunk {
 public:
  // Registers its segments (under `prefix`) in `store`; the store must not be
  // allocated yet. The store must outlive the trunk.
  Trunk(ParamStore& store, std::string prefix, const TrunkConfig& cfg);

  void init(Rng& rng);  // gaussian(0, 0.02) weights, identity layer norms

  struct LayerCache {
    Mat a1;               // post-ln1 activations, D x T
    Mat xhat1, xhat2;     // layer-norm normalized inputs
    Vec rstd1, rstd2;
    Mat q, k, v;          // projections, D x T
    std::vector<Mat> p;   // per-head attention rows, T x T
    Mat att_concat;       // concatenated head outputs before the output proj
    Mat a2;               // post-ln2 activations
    Mat h_pre, h_act;     // MLP pre-activation / activation, F x T
  };
  struct Cache {
    std::vector<int> tokens;
    std::vector<LayerCache> layers;
    Mat xhat_f;
    Vec rstd_f;
  };

  // Final hidden states (d_model x T); fills *cache when non-null.
  Mat forward(const std::vector<int>& tokens, Cache* cache) const;
  // Accumulates parameter gradients for dY (d_model x T) w.r.t. forward().
  void backward(const Cache& cache, const Mat& d_hidden);

  struct StepState {
    std::vector<Mat> k, v;  // per layer, D x max_len
    int len = 0;
  };
  StepState make_state() const;
  // Runs the whole token block at once, appending to the cache; returns final
  // hiddens for those positions (d_model x T).
  Mat prefill(StepState& state, const std::vector<int>& tokens) const;
  // Appends one token; returns the final hidden state at its position.
  Vec step(StepState& state, int token) const;

  const TrunkConfig& config() const { return cfg_; }
  const std::string& prefix() const { return prefix_; }

 private:
  ParamStore& store_;
  std::string prefix_;
  TrunkConfig cfg_;
  std::vector<double> slopes_;

  std::string key(const std::string& suffix) const { return prefix_ + suffix; }
  std::string lkey(int layer, const std::string& suffix) const;
};

double gelu(double x);
double gelu_prime(double x);

}  // namespace addrkit
