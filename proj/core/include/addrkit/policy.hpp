// Autoregressive rewriting policy: shared trunk plus a mixture output head
// that blends a vocabulary softmax with a copy distribution over prompt
// positions (small sigmoid gate, bias well below zero at init so the fresh
// model is near-uniform). The value model reuses the trunk with a scalar head
// and starts from a policy's trunk weights.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "addrkit/lexicon.hpp"
#include "addrkit/nn.hpp"
#include "addrkit/transformer.hpp"

namespace addrkit {

// ---- prompt assembly ----

struct PromptFields {
  std::string address;                                      // required
  std::vector<std::string> related;                         // retrieval results, rank order
  std::vector<std::pair<std::string, std::string>> exemplars;
  bool include_related = false;  // emit the related-addresses block (possibly empty)
};

// task is one of "parsing", "completion", "rewriting".
std::vector<int> format_prompt(const Lexicon& lex, const std::string& task,
                               const PromptFields& fields);

// Policy output tokens -> plain text: control/structural tokens are dropped,
// the rest detokenized.
std::string decode_address(const Lexicon& lex, const std::vector<int>& tokens);

// ---- policy ----

struct PolicyConfig {
  TrunkConfig trunk;
  int copy_dim = 32;
};

struct GenOptions {
  bool greedy = true;
  double temperature = 1.0;  // used when greedy == false; must be > 0
  std::uint64_t seed = 0;
  int max_new = -1;  // -1: up to the context window
};

struct GenResult {
  std::vector<int> tokens;  // includes the trailing end marker when emitted
  std::vector<double> logprobs;  // log-probability of each token under the policy
  bool hit_end = false;
};

class PolicyModel {
 public:
  PolicyModel(int vocab, const PolicyConfig& cfg);

  void init(Rng& rng);

  struct HeadCache {
    Vec pv, alpha, cq;
    double gate = 0.0;
  };
  struct EvalCache {
    Trunk::Cache trunk;
    Mat hidden;          // final hiddens for prompt+output
    Mat ck;              // copy keys over prompt positions
    std::vector<HeadCache> head;  // one per output token
    std::vector<int> prompt, output;
  };

  // Log-probability of each output token given the prompt (teacher-forced).
  // Throws std::invalid_argument on out-of-vocabulary ids or when the joint
  // sequence exceeds the context window.
  std::vector<double> eval_logprobs(const std::vector<int>& prompt,
                                    const std::vector<int>& output,
                                    EvalCache* cache = nullptr) const;
  // Accumulates parameter gradients; seeds[i] = dL/d log p(output[i]).
  void backward(const EvalCache& cache, const std::vector<double>& seeds);

  // Next-token distribution after prompt + prefix (sums to 1).
  Vec next_dist(const std::vector<int>& prompt, const std::vector<int>& prefix) const;

  GenResult generate(const std::vector<int>& prompt, const GenOptions& opt) const;

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const PolicyConfig& config() const { return cfg_; }
  int vocab() const { return cfg_.trunk.vocab; }
  const Trunk& trunk() const { return trunk_; }

  std::string config_json() const;
  static PolicyConfig config_from_json(const std::string& json_text);

 private:
  PolicyConfig cfg_;
  ParamStore params_;
  Trunk trunk_;

  Vec mixture(const Vec& y, const Mat& ck, const std::vector<int>& prompt,
              HeadCache* hc) const;
};

// ---- value model ----

class ValueModel {
 public:
  ValueModel(int vocab, const TrunkConfig& cfg);

  void init(Rng& rng);
  // Copies the policy's trunk weights; the scalar head starts at zero.
  void init_from_policy(const PolicyModel& policy);

  struct EvalCache {
    Trunk::Cache trunk;
    Mat hidden;
    int prompt_len = 0;
    int n = 0;
  };

  // V(s_t) for t = 0..actions.size()-1, where s_t = prompt + actions[0..t).
  std::vector<double> values(const std::vector<int>& prompt, const std::vector<int>& actions,
                             EvalCache* cache = nullptr) const;
  void backward(const EvalCache& cache, const std::vector<double>& dvalues);

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const TrunkConfig& config() const { return cfg_; }

  std::string config_json() const;
  static TrunkConfig config_from_json(const std::string& json_text);

 private:
  TrunkConfig cfg_;
  ParamStore params_;
  Trunk trunk_;
};

// ---- supervised fine-tuning ----

struct PromptTarget {
  std::vector<int> prompt;
  std::vector<int> target;  // ends with the end-of-sequence marker
};

struct SftConfig {
  int epochs = 3;
  int batch_size = 16;
  double lr = 1e-3;
  double weight_decay = 0.0;
  double grad_clip = 1.0;
  std::uint64_t seed = 1;
};

struct SftReport {
  int skipped = 0;                 // samples longer than the context window
  std::vector<double> epoch_loss;  // mean per-token NLL per epoch
};

// Mean per-token NLL over the given samples (no gradient work).
double mean_nll(const PolicyModel& policy, const std::vector<PromptTarget>& samples);

SftReport sft_train(PolicyModel& policy, const std::vector<PromptTarget>& samples,
                    const SftConfig& cfg);

}  // namespace addrkit
