#include "addrkit/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace addrkit {

namespace {

constexpr double kProbFloor = 1e-12;

void validate(const PpoConfig& cfg) {
  if (cfg.clip_epsilon <= 0.0 || cfg.clip_epsilon >= 1.0)
    throw ConfigError("clip_epsilon must lie in (0, 1)");
  if (cfg.kl_coef < 0.0) throw ConfigError("kl_coef must be non-negative");
  if (cfg.gae_lambda < 0.0 || cfg.gae_lambda > 1.0)
    throw ConfigError("gae_lambda must lie in [0, 1]");
  if (cfg.gamma < 0.0 || cfg.gamma > 1.0) throw ConfigError("gamma must lie in [0, 1]");
  if (cfg.value_loss_weight < 0.0) throw ConfigError("value_loss_weight must be non-negative");
  if (cfg.epochs < 0) throw ConfigError("epochs must be non-negative");
  if (cfg.lr < 0.0) throw ConfigError("learning rate must be non-negative");
  if (cfg.rollout_batch <= 0 || cfg.minibatch <= 0 || cfg.inner_steps <= 0)
    throw ConfigError("batch sizes and inner_steps must be positive");
  if (cfg.kl_ceiling <= 0.0) throw ConfigError("kl_ceiling must be positive");
  if (cfg.max_restarts < 0) throw ConfigError("max_restarts must be non-negative");
  if (cfg.temperature <= 0.0) throw ConfigError("temperature must be positive");
  if (cfg.retrieval_k <= 0) throw ConfigError("retrieval_k must be positive");
  if (cfg.max_new <= 0) throw ConfigError("max_new must be positive");
}

void clip_and_step(ParamStore& params, AdamState& state, const AdamConfig& acfg,
                   double grad_clip) {
  if (grad_clip > 0.0) {
    const double norm = params.grad_norm();
    if (norm > grad_clip) params.scale_grads(grad_clip / norm);
  }
  adam_step(params, state, acfg);
}

// Trajectory with a prompt already built (retrieval done by the caller).
Trajectory rollout_with_prompt(const PolicyModel& policy, const RolloutContext& ctx,
                               std::vector<int> prompt, const std::string& input_text,
                               const Coordinate& delivery, const PpoConfig& cfg,
                               std::uint64_t seed) {
  Trajectory t;
  t.prompt = std::move(prompt);

  GenOptions opt;
  opt.greedy = false;
  opt.temperature = cfg.temperature;
  opt.seed = seed;
  opt.max_new = cfg.max_new;
  const GenResult gen = policy.generate(t.prompt, opt);
  t.actions = gen.tokens;
  t.old_logprobs = gen.logprobs;
  t.truncated = !gen.hit_end;

  t.output_text = decode_address(ctx.world.lexicon, t.actions);
  t.terminal_reward =
      total_reward(ctx.semantic, ctx.world, input_text, t.output_text, delivery, ctx.reward)
          .total;

  t.values = ctx.value.values(t.prompt, t.actions);

  const int n = static_cast<int>(t.actions.size());
  t.kl.assign(n, 0.0);
  if (cfg.full_kl) {
    PolicyModel::EvalCache cur_cache, ref_cache;
    policy.eval_logprobs(t.prompt, t.actions, &cur_cache);
    ctx.reference.eval_logprobs(t.prompt, t.actions, &ref_cache);
    for (int i = 0; i < n; ++i) {
      const Vec& p = cur_cache.head[i].pv;
      const Vec& q = ref_cache.head[i].pv;
      double kl = 0.0;
      for (Eigen::Index v = 0; v < p.size(); ++v) {
        if (p(v) <= 0.0) continue;
        kl += p(v) * (std::log(p(v)) - std::log(std::max(q(v), kProbFloor)));
      }
      t.kl[i] = kl;
    }
  } else {
    const std::vector<double> ref_lp = ctx.reference.eval_logprobs(t.prompt, t.actions);
    for (int i = 0; i < n; ++i) t.kl[i] = t.old_logprobs[i] - ref_lp[i];
  }

  t.shaped.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    t.shaped[i] = -cfg.kl_coef * t.kl[i];
    if (i == n - 1) t.shaped[i] += t.terminal_reward;
  }
  return t;
}

struct EpochAccumulator {
  double reward_sum = 0.0;
  int rollouts = 0;
  double kl_sum = 0.0;
  std::int64_t kl_tokens = 0;
  double policy_loss_sum = 0.0;
  double value_loss_sum = 0.0;
  double clip_sum = 0.0;
  std::int64_t loss_tokens = 0;

  void add_trajectory(const Trajectory& t) {
    reward_sum += t.terminal_reward;
    ++rollouts;
    for (double k : t.kl) kl_sum += k;
    kl_tokens += static_cast<std::int64_t>(t.kl.size());
  }
  void add_loss(const PpoLossStats& s) {
    policy_loss_sum += s.policy_loss * s.tokens;
    value_loss_sum += s.value_loss * s.tokens;
    clip_sum += s.clip_fraction * s.tokens;
    loss_tokens += s.tokens;
  }
  double mean_kl() const { return kl_tokens > 0 ? kl_sum / kl_tokens : 0.0; }
};

}  // namespace

std::vector<int> rag_prompt(const Lexicon& lex, const SpatialEncoder& encoder,
                            const RetrieverIndex& index, const World& world,
                            const std::string& address, int retrieval_k) {
  PromptFields fields;
  fields.address = address;
  fields.include_related = true;
  for (const RetrievalHit& hit : retrieve_text(index, encoder, lex, address, retrieval_k)) {
    if (hit.record_id < 0 || hit.record_id >= static_cast<int>(world.records.size()))
      throw DomainFailure("retrieval hit references an unknown record");
    fields.related.push_back(world.records[hit.record_id].text);
  }
  return format_prompt(lex, "rewriting", fields);
}

Trajectory rollout(const PolicyModel& policy, const RolloutContext& ctx,
                   const RewriteSample& sample, const PpoConfig& cfg, std::uint64_t seed) {
  if (!sample.delivery)
    throw ConfigError("alignment sample lacks a delivery coordinate");
  std::vector<int> prompt = rag_prompt(ctx.world.lexicon, ctx.encoder, ctx.index, ctx.world,
                                       sample.input_text, cfg.retrieval_k);
  return rollout_with_prompt(policy, ctx, std::move(prompt), sample.input_text, *sample.delivery,
                             cfg, seed);
}

void compute_gae(Trajectory& t, double lambda, double gamma) {
  const int n = static_cast<int>(t.actions.size());
  t.advantages.assign(n, 0.0);
  t.value_targets.assign(n, 0.0);
  double acc = 0.0;
  for (int i = n - 1; i >= 0; --i) {
    const double v_next = i + 1 < n ? t.values[i + 1] : 0.0;  // terminal bootstrap 0
    const double delta = t.shaped[i] + gamma * v_next - t.values[i];
    acc = delta + gamma * lambda * acc;
    t.advantages[i] = acc;
    t.value_targets[i] = acc + t.values[i];
  }
}

PpoLossStats ppo_loss(const std::vector<Trajectory>& batch, PolicyModel& policy,
                      ValueModel& value, const PpoConfig& cfg, bool accumulate_grads) {
  PpoLossStats stats;
  std::int64_t total = 0;
  for (const Trajectory& t : batch) total += static_cast<std::int64_t>(t.actions.size());
  if (total == 0) return stats;
  stats.tokens = static_cast<int>(total);
  const double inv = 1.0 / static_cast<double>(total);

  double policy_sum = 0.0, value_sum = 0.0;
  std::int64_t clipped = 0;
  for (const Trajectory& t : batch) {
    const int n = static_cast<int>(t.actions.size());
    if (n == 0) continue;
    if (t.advantages.size() != t.actions.size() || t.value_targets.size() != t.actions.size())
      throw ConfigError("trajectory missing advantages; run compute_gae first");

    PolicyModel::EvalCache pcache;
    const std::vector<double> cur =
        policy.eval_logprobs(t.prompt, t.actions, accumulate_grads ? &pcache : nullptr);
    std::vector<double> seeds(n, 0.0);
    for (int i = 0; i < n; ++i) {
      const double ratio = std::exp(cur[i] - t.old_logprobs[i]);
      const double a = t.advantages[i];
      const double unclipped = ratio * a;
      const double clamped =
          std::clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * a;
      if (unclipped <= clamped) {
        policy_sum += unclipped;
        seeds[i] = -inv * ratio * a;  // d(-mean min)/d logpi via the active branch
      } else {
        policy_sum += clamped;  // clipped branch binds: zero gradient
        ++clipped;
      }
    }
    if (accumulate_grads) policy.backward(pcache, seeds);

    ValueModel::EvalCache vcache;
    const std::vector<double> v =
        value.values(t.prompt, t.actions, accumulate_grads ? &vcache : nullptr);
    std::vector<double> dv(n, 0.0);
    for (int i = 0; i < n; ++i) {
      const double err = v[i] - t.value_targets[i];
      value_sum += err * err;
      dv[i] = cfg.value_loss_weight * 2.0 * err * inv;
    }
    if (accumulate_grads) value.backward(vcache, dv);
  }

  stats.policy_loss = -policy_sum * inv;
  stats.value_loss = value_sum * inv;
  stats.total_loss = stats.policy_loss + cfg.value_loss_weight * stats.value_loss;
  stats.clip_fraction = static_cast<double>(clipped) * inv;
  return stats;
}

double mean_alignment_reward(const PolicyModel& policy, const SpatialEncoder& encoder,
                             const RetrieverIndex& index, const SemanticEmbedder& semantic,
                             const World& world, const RewardConfig& reward_cfg,
                             const std::vector<RewriteSample>& samples, int retrieval_k) {
  if (samples.empty()) throw ConfigError("no samples to score");
  double sum = 0.0;
  GenOptions opt;  // greedy
  for (const RewriteSample& s : samples) {
    if (!s.delivery) throw ConfigError("alignment sample lacks a delivery coordinate");
    const std::vector<int> prompt =
        rag_prompt(world.lexicon, encoder, index, world, s.input_text, retrieval_k);
    const GenResult gen = policy.generate(prompt, opt);
    const std::string y = decode_address(world.lexicon, gen.tokens);
    sum += total_reward(semantic, world, s.input_text, y, *s.delivery, reward_cfg).total;
  }
  return sum / static_cast<double>(samples.size());
}

AlignReport ppo_align(PolicyModel& policy, ValueModel& value,
                      const std::vector<RewriteSample>& train,
                      const std::vector<RewriteSample>& held_out, const SpatialEncoder& encoder,
                      const RetrieverIndex& index, const SemanticEmbedder& semantic,
                      const World& world, const RewardConfig& reward_cfg, const PpoConfig& cfg) {
  validate(cfg);
  if (train.empty()) throw ConfigError("no alignment samples");
  for (const RewriteSample& s : train)
    if (!s.delivery) throw ConfigError("alignment sample lacks a delivery coordinate");

  PolicyModel reference(policy.vocab(), policy.config());
  reference.params().copy_values_from(policy.params());
  const RolloutContext ctx{reference, value, encoder, index, semantic, world, reward_cfg};

  AlignReport report;
  if (!held_out.empty())
    report.held_out_before = mean_alignment_reward(policy, encoder, index, semantic, world,
                                                   reward_cfg, held_out, cfg.retrieval_k);

  AdamState policy_adam, value_adam;
  adam_init(policy_adam, policy.params());
  adam_init(value_adam, value.params());
  double lr = cfg.lr;
  const int max_len = policy.config().trunk.max_len;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // restart point for the divergence guard
    const std::vector<double> policy_snapshot = policy.params().values();
    const std::vector<double> value_snapshot = value.params().values();
    const AdamState policy_adam_snapshot = policy_adam;
    const AdamState value_adam_snapshot = value_adam;

    std::vector<int> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng order_rng(derive_seed(cfg.seed, "align-order-" + std::to_string(epoch)));
    order_rng.shuffle(order);

    int restarts = 0;
    EpochAccumulator acc;
    for (;;) {
      acc = EpochAccumulator{};
      AdamConfig acfg;
      acfg.lr = lr;

      for (std::size_t group_start = 0; group_start < order.size();
           group_start += static_cast<std::size_t>(cfg.rollout_batch)) {
        const std::size_t group_end =
            std::min(order.size(), group_start + static_cast<std::size_t>(cfg.rollout_batch));

        // collect rollouts with the policy frozen for the whole group;
        // retrieval runs once per sample per epoch (inside rag_prompt)
        std::vector<Trajectory> group;
        for (std::size_t i = group_start; i < group_end; ++i) {
          const RewriteSample& s = train[order[i]];
          std::vector<int> prompt = rag_prompt(world.lexicon, encoder, index, world,
                                               s.input_text, cfg.retrieval_k);
          if (static_cast<int>(prompt.size()) >= max_len) continue;  // no room to generate
          const std::uint64_t seed =
              derive_seed(cfg.seed, "rollout-" + std::to_string(epoch) + "-" + std::to_string(i));
          Trajectory t = rollout_with_prompt(policy, ctx, std::move(prompt), s.input_text,
                                             *s.delivery, cfg, seed);
          if (t.actions.empty()) continue;
          compute_gae(t, cfg.gae_lambda, cfg.gamma);
          acc.add_trajectory(t);
          group.push_back(std::move(t));
        }
        if (group.empty()) continue;

        if (cfg.normalize_advantages) {
          double sum = 0.0, sq = 0.0;
          std::int64_t n = 0;
          for (const Trajectory& t : group)
            for (double a : t.advantages) {
              sum += a;
              sq += a * a;
              ++n;
            }
          const double mean = sum / static_cast<double>(n);
          const double var = std::max(0.0, sq / static_cast<double>(n) - mean * mean);
          const double inv_std = 1.0 / (std::sqrt(var) + 1e-8);
          for (Trajectory& t : group)
            for (double& a : t.advantages) a = (a - mean) * inv_std;
        }

        for (int step = 0; step < cfg.inner_steps; ++step) {
          for (std::size_t mb_start = 0; mb_start < group.size();
               mb_start += static_cast<std::size_t>(cfg.minibatch)) {
            const std::size_t mb_end =
                std::min(group.size(), mb_start + static_cast<std::size_t>(cfg.minibatch));
            const std::vector<Trajectory> chunk(group.begin() + mb_start,
                                                group.begin() + mb_end);
            policy.params().zero_grad();
            value.params().zero_grad();
            const PpoLossStats stats = ppo_loss(chunk, policy, value, cfg, true);
            acc.add_loss(stats);
            clip_and_step(policy.params(), policy_adam, acfg, cfg.grad_clip);
            clip_and_step(value.params(), value_adam, acfg, cfg.grad_clip);
          }
        }
      }

      if (acc.rollouts == 0) throw ConfigError("every alignment prompt exceeded the context window");
      if (acc.mean_kl() > cfg.kl_ceiling && restarts < cfg.max_restarts) {
        policy.params().values() = policy_snapshot;
        value.params().values() = value_snapshot;
        policy_adam = policy_adam_snapshot;
        value_adam = value_adam_snapshot;
        lr *= 0.5;
        ++restarts;
        continue;
      }
      break;
    }

    AlignEpochStats es;
    es.epoch = epoch;
    es.mean_terminal_reward = acc.reward_sum / acc.rollouts;
    es.mean_kl = acc.mean_kl();
    es.clip_fraction = acc.loss_tokens > 0 ? acc.clip_sum / acc.loss_tokens : 0.0;
    es.policy_loss = acc.loss_tokens > 0 ? acc.policy_loss_sum / acc.loss_tokens : 0.0;
    es.value_loss = acc.loss_tokens > 0 ? acc.value_loss_sum / acc.loss_tokens : 0.0;
    es.lr = lr;
    es.restarts = restarts;
    if (!held_out.empty())
      es.held_out_reward = mean_alignment_reward(policy, encoder, index, semantic, world,
                                                 reward_cfg, held_out, cfg.retrieval_k);
    report.epochs.push_back(es);
  }
  return report;
}

}  // namespace addrkit
