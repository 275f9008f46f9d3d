// Objective alignment: token-level rollouts with a terminal task reward and
// per-token KL penalty against the frozen starting policy, generalized
// advantage estimation, and the clipped-ratio policy update with a jointly
// trained value model.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "addrkit/data.hpp"
#include "addrkit/embedder.hpp"
#include "addrkit/policy.hpp"
#include "addrkit/retriever.hpp"
#include "addrkit/reward.hpp"
#include "addrkit/world.hpp"

namespace addrkit {

struct PpoConfig {
  double clip_epsilon = 0.2;       // ratio clip width
  double kl_coef = 0.1;            // weight of the per-token KL penalty
  double gae_lambda = 0.95;        // advantage smoothing
  double gamma = 1.0;              // the printed recursion carries no discount
  double value_loss_weight = 0.5;  // value term weight in the joint loss
  int epochs = 4;
  // Desk-scale learning rate; the published 1e-6 belongs to a model five
  // orders of magnitude larger.
  double lr = 3e-4;
  double grad_clip = 1.0;
  int rollout_batch = 64;  // trajectories collected per update group
  int minibatch = 16;      // trajectories per gradient step
  int inner_steps = 1;     // optimization passes over each collected group
  bool normalize_advantages = true;  // per-group zero-mean/unit-variance
  bool full_kl = false;    // full-distribution KL penalty instead of the
                           // sampled log-ratio estimator
  double kl_ceiling = 2.0;  // divergence guard: epoch mean KL above this
                            // halves the lr and restarts the epoch
  int max_restarts = 8;     // per epoch; afterwards the epoch is accepted
  double temperature = 1.0;  // rollout sampling temperature
  int retrieval_k = 10;
  int max_new = 40;  // rollout generation budget
  std::uint64_t seed = 1;
};

// One sampled generation with everything the update needs. All per-token
// vectors share the same length (number of generated tokens, end marker
// included when produced).
struct Trajectory {
  std::vector<int> prompt;
  std::vector<int> actions;
  std::vector<double> old_logprobs;   // recorded at sampling time
  std::vector<double> values;         // V(prompt + actions[0..t))
  std::vector<double> kl;             // per-token penalty vs the frozen policy
  std::vector<double> shaped;         // terminal reward at the end, -kl_coef*kl elsewhere
  std::vector<double> advantages;     // filled by compute_gae
  std::vector<double> value_targets;  // filled by compute_gae
  double terminal_reward = 0.0;
  bool truncated = false;  // budget exhausted before the end marker
  std::string output_text;
};

// Frozen collaborators for rollouts; the reference policy is the SFT
// checkpoint the KL penalty anchors to.
struct RolloutContext {
  const PolicyModel& reference;
  const ValueModel& value;
  const SpatialEncoder& encoder;
  const RetrieverIndex& index;
  const SemanticEmbedder& semantic;
  const World& world;
  RewardConfig reward;
};

// Builds the retrieval-augmented rewriting prompt for `sample`, samples a
// completion from `policy`, and fills every trajectory field. The sample
// must carry a delivery coordinate.
Trajectory rollout(const PolicyModel& policy, const RolloutContext& ctx,
                   const RewriteSample& sample, const PpoConfig& cfg, std::uint64_t seed);

// Advantages and value targets in place. Terminal bootstrap value is zero.
void compute_gae(Trajectory& t, double lambda, double gamma);

struct PpoLossStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;   // unweighted value term
  double total_loss = 0.0;   // policy + weight * value
  double clip_fraction = 0.0;
  int tokens = 0;
};

// Joint clipped objective over a batch; token-mean across the whole batch.
// When accumulate_grads is set, parameter gradients for both models are
// accumulated (callers zero and step).
PpoLossStats ppo_loss(const std::vector<Trajectory>& batch, PolicyModel& policy,
                      ValueModel& value, const PpoConfig& cfg, bool accumulate_grads);

struct AlignEpochStats {
  int epoch = 0;
  double mean_terminal_reward = 0.0;  // over the epoch's rollouts
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double lr = 0.0;      // in effect when the epoch finally ran through
  int restarts = 0;     // divergence-guard restarts consumed
  double held_out_reward = 0.0;
};

struct AlignReport {
  double held_out_before = 0.0;  // greedy mean terminal reward, pre-update
  std::vector<AlignEpochStats> epochs;
};

// Mean terminal reward of greedy decodes over `samples` (retrieval-augmented
// rewriting prompts). Every sample needs a delivery coordinate.
double mean_alignment_reward(const PolicyModel& policy, const SpatialEncoder& encoder,
                             const RetrieverIndex& index, const SemanticEmbedder& semantic,
                             const World& world, const RewardConfig& reward_cfg,
                             const std::vector<RewriteSample>& samples, int retrieval_k);

// Full alignment loop. `policy` should hold the supervised checkpoint; the
// reference copy for the KL anchor is taken internally before any update.
AlignReport ppo_align(PolicyModel& policy, ValueModel& value,
                      const std::vector<RewriteSample>& train,
                      const std::vector<RewriteSample>& held_out, const SpatialEncoder& encoder,
                      const RetrieverIndex& index, const SemanticEmbedder& semantic,
                      const World& world, const RewardConfig& reward_cfg, const PpoConfig& cfg);

// The retrieval-augmented rewriting prompt used for alignment and evaluation.
std::vector<int> rag_prompt(const Lexicon& lex, const SpatialEncoder& encoder,
                            const RetrieverIndex& index, const World& world,
                            const std::string& address, int retrieval_k);

}  // namespace addrkit
