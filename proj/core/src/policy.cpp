#include "addrkit/policy.hpp"

#include "addrkit/world.hpp"

#include <algorithm>
#include <utility>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

namespace addrkit {

using nlohmann::json;

namespace {

Vec softmax_vec(const Vec& z) {
  const double mx = z.maxCoeff();
  Vec e = (z.array() - mx).exp().matrix();
  return e / e.sum();
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void append_tokens(std::vector<int>& out, const std::vector<int>& piece) {
  out.insert(out.end(), piece.begin(), piece.end());
}

PolicyConfig with_vocab(PolicyConfig cfg, int vocab) {
  cfg.trunk.vocab = vocab;
  return cfg;
}

TrunkConfig with_vocab(TrunkConfig cfg, int vocab) {
  cfg.vocab = vocab;
  return cfg;
}

}  // namespace

std::vector<int> format_prompt(const Lexicon& lex, const std::string& task,
                               const PromptFields& fields) {
  if (fields.address.empty()) throw std::invalid_argument("prompt requires an address");
  int task_tok = 0;
  if (task == "parsing") {
    task_tok = kTokTaskParse;
  } else if (task == "completion") {
    task_tok = kTokTaskAep;
  } else if (task == "rewriting") {
    task_tok = kTokTaskRewrite;
  } else {
    throw std::invalid_argument("unknown task for prompt: " + task);
  }
  std::vector<int> toks;
  toks.push_back(task_tok);
  toks.push_back(kTokAddrOpen);
  append_tokens(toks, lex.tokenize(fields.address));
  toks.push_back(kTokAddrClose);
  // fixed component-schema listing, identical in every prompt
  toks.push_back(kTokHierOpen);
  for (int tier = 1; tier <= kTiers; ++tier) {
    append_tokens(toks, lex.tokenize("[" + std::to_string(tier) + "]"));
  }
  toks.push_back(kTokHierClose);
  if (!fields.exemplars.empty()) {
    toks.push_back(kTokExamplesOpen);
    for (const auto& [ex_in, ex_out] : fields.exemplars) {
      toks.push_back(kTokItem);
      append_tokens(toks, lex.tokenize(ex_in));
      toks.push_back(kTokItem);
      append_tokens(toks, lex.tokenize(ex_out));
    }
    toks.push_back(kTokExamplesClose);
  }
  if (fields.include_related) {
    toks.push_back(kTokRelatedOpen);
    for (const std::string& r : fields.related) {
      toks.push_back(kTokItem);
      append_tokens(toks, lex.tokenize(r));
    }
    toks.push_back(kTokRelatedClose);
  }
  toks.push_back(kTokSys);
  return toks;
}

std::string decode_address(const Lexicon& lex, const std::vector<int>& tokens) {
  std::vector<int> kept;
  kept.reserve(tokens.size());
  for (int t : tokens)
    if (t >= kNumControlTokens) kept.push_back(t);
  return lex.detokenize(kept);
}

PolicyModel::PolicyModel(int vocab, const PolicyConfig& cfg)
    : cfg_(with_vocab(cfg, vocab)), trunk_(params_, "t.", cfg_.trunk) {
  if (cfg_.copy_dim <= 0) throw ConfigError("copy_dim must be positive");
  const int d = cfg_.trunk.d_model;
  params_.add("head.out.w", vocab, d);
  params_.add("head.out.b", vocab, 1);
  params_.add("head.cq", cfg_.copy_dim, d);
  params_.add("head.ck", cfg_.copy_dim, d);
  params_.add("head.gate.w", d, 1);
  params_.add("head.gate.b", 1, 1);
  params_.allocate();
}

void PolicyModel::init(Rng& rng) {
  trunk_.init(rng);
  // zero output head: the vocabulary softmax starts exactly uniform
  params_.mat("head.out.w").setZero();
  params_.mat("head.out.b").setZero();
  auto gauss = [&](MatMap m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = 0.02 * rng.gaussian();
  };
  gauss(params_.mat("head.cq"));
  gauss(params_.mat("head.ck"));
  params_.mat("head.gate.w").setZero();
  params_.mat("head.gate.b")(0, 0) = -4.0;  // copy gate starts nearly closed
}

Vec PolicyModel::mixture(const Vec& y, const Mat& ck, const std::vector<int>& prompt,
                         HeadCache* hc) const {
  const Vec z = params_.mat("head.out.w") * y + params_.mat("head.out.b").col(0);
  const Vec pv = softmax_vec(z);
  const Vec cq = params_.mat("head.cq") * y;
  const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(cfg_.copy_dim));
  const Vec scores = (ck.transpose() * cq) * inv_sqrt_c;
  const Vec alpha = softmax_vec(scores);
  const double g =
      sigmoid(params_.mat("head.gate.w").col(0).dot(y) + params_.mat("head.gate.b")(0, 0));
  Vec dist = (1.0 - g) * pv;
  for (std::size_t j = 0; j < prompt.size(); ++j) dist(prompt[j]) += g * alpha(j);
  if (hc) {
    hc->pv = pv;
    hc->alpha = alpha;
    hc->cq = cq;
    hc->gate = g;
  }
  return dist;
}

std::vector<double> PolicyModel::eval_logprobs(const std::vector<int>& prompt,
                                               const std::vector<int>& output,
                                               EvalCache* cache) const {
  if (prompt.empty()) throw std::invalid_argument("empty prompt");
  for (int t : output)
    if (t < 0 || t >= vocab())
      throw std::invalid_argument("output token out of vocabulary: " + std::to_string(t));
  if (output.empty()) {
    if (cache) *cache = EvalCache{};
    return {};
  }
  const int p_len = static_cast<int>(prompt.size());
  const int o_len = static_cast<int>(output.size());
  std::vector<int> seq = prompt;
  append_tokens(seq, output);

  EvalCache local;
  EvalCache& ec = cache ? *cache : local;
  Mat hidden = trunk_.forward(seq, cache ? &ec.trunk : nullptr);
  const Mat ck = params_.mat("head.ck") * hidden.leftCols(p_len);

  std::vector<double> lps(o_len);
  if (cache) ec.head.resize(o_len);
  for (int i = 0; i < o_len; ++i) {
    HeadCache* hc = cache ? &ec.head[i] : nullptr;
    const Vec dist = mixture(hidden.col(p_len - 1 + i), ck, prompt, hc);
    lps[i] = std::log(dist(output[i]));
  }
  if (cache) {
    ec.hidden = std::move(hidden);
    ec.ck = ck;
    ec.prompt = prompt;
    ec.output = output;
  }
  return lps;
}

void PolicyModel::backward(const EvalCache& cache, const std::vector<double>& seeds) {
  const int p_len = static_cast<int>(cache.prompt.size());
  const int o_len = static_cast<int>(cache.output.size());
  if (static_cast<int>(seeds.size()) != o_len)
    throw std::logic_error("policy backward: seed count mismatch");
  if (o_len == 0) return;
  const int d = cfg_.trunk.d_model;
  const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(cfg_.copy_dim));
  const Mat yp = cache.hidden.leftCols(p_len);
  ConstMatMap w_out = std::as_const(params_).mat("head.out.w");
  ConstMatMap w_cq = std::as_const(params_).mat("head.cq");
  ConstMatMap w_ck = std::as_const(params_).mat("head.ck");
  ConstMatMap w_gate = std::as_const(params_).mat("head.gate.w");

  Mat dy_all = Mat::Zero(d, cache.hidden.cols());
  Mat d_ck_keys = Mat::Zero(cfg_.copy_dim, p_len);  // grads w.r.t. ck columns

  for (int i = 0; i < o_len; ++i) {
    if (seeds[i] == 0.0) continue;
    const HeadCache& hc = cache.head[i];
    const int a = cache.output[i];
    const Vec y = cache.hidden.col(p_len - 1 + i);
    double scatter_a = 0.0;
    for (int j = 0; j < p_len; ++j)
      if (cache.prompt[j] == a) scatter_a += hc.alpha(j);
    const double pa = (1.0 - hc.gate) * hc.pv(a) + hc.gate * scatter_a;
    const double e = seeds[i] / pa;
    Vec dy = Vec::Zero(d);

    // gate
    const double dgate_pre = e * (scatter_a - hc.pv(a)) * hc.gate * (1.0 - hc.gate);
    params_.grad("head.gate.w").col(0) += dgate_pre * y;
    params_.grad("head.gate.b")(0, 0) += dgate_pre;
    dy += dgate_pre * w_gate.col(0);

    // vocabulary softmax path
    const double cv = e * (1.0 - hc.gate) * hc.pv(a);
    Vec dz = (-cv) * hc.pv;
    dz(a) += cv;
    params_.grad("head.out.w") += dz * y.transpose();
    params_.grad("head.out.b").col(0) += dz;
    dy += w_out.transpose() * dz;

    // copy path
    const double dot = e * hc.gate * scatter_a;  // sum_j dalpha_j * alpha_j
    Vec ds(p_len);
    for (int j = 0; j < p_len; ++j) {
      const double dalpha = (cache.prompt[j] == a) ? e * hc.gate : 0.0;
      ds(j) = hc.alpha(j) * (dalpha - dot);
    }
    const Vec dcq = (cache.ck * ds) * inv_sqrt_c;
    params_.grad("head.cq") += dcq * y.transpose();
    dy += w_cq.transpose() * dcq;
    const Vec cq_scaled = hc.cq * inv_sqrt_c;
    d_ck_keys += cq_scaled * ds.transpose();

    dy_all.col(p_len - 1 + i) += dy;
  }

  // copy keys: ck = Wck * Yp
  params_.grad("head.ck") += d_ck_keys * yp.transpose();
  dy_all.leftCols(p_len) += w_ck.transpose() * d_ck_keys;

  trunk_.backward(cache.trunk, dy_all);
}

Vec PolicyModel::next_dist(const std::vector<int>& prompt, const std::vector<int>& prefix) const {
  if (prompt.empty()) throw std::invalid_argument("empty prompt");
  Trunk::StepState st = trunk_.make_state();
  Mat yp = trunk_.prefill(st, prompt);
  const Mat ck = params_.mat("head.ck") * yp;
  Vec y = yp.col(yp.cols() - 1);
  for (int t : prefix) y = trunk_.step(st, t);
  return mixture(y, ck, prompt, nullptr);
}

GenResult PolicyModel::generate(const std::vector<int>& prompt, const GenOptions& opt) const {
  if (prompt.empty()) throw std::invalid_argument("empty prompt");
  const int p_len = static_cast<int>(prompt.size());
  int budget = cfg_.trunk.max_len - p_len;
  if (budget <= 0) throw std::invalid_argument("prompt fills the context window");
  if (opt.max_new >= 0) budget = std::min(budget, opt.max_new);
  if (!opt.greedy && !(opt.temperature > 0.0))
    throw std::invalid_argument("sampling temperature must be positive");

  Rng rng(opt.seed);
  Trunk::StepState st = trunk_.make_state();
  Mat yp = trunk_.prefill(st, prompt);
  const Mat ck = params_.mat("head.ck") * yp;
  Vec y = yp.col(p_len - 1);

  GenResult res;
  while (static_cast<int>(res.tokens.size()) < budget) {
    const Vec dist = mixture(y, ck, prompt, nullptr);
    int pick = 0;
    if (opt.greedy) {
      double best = dist(0);
      for (int k = 1; k < vocab(); ++k)
        if (dist(k) > best) {
          best = dist(k);
          pick = k;
        }
    } else {
      // sample proportional to dist^(1/temperature), computed in log space
      std::vector<double> w(vocab());
      const double lmax = std::log(dist.maxCoeff());
      for (int k = 0; k < vocab(); ++k)
        w[k] = std::exp((std::log(dist(k)) - lmax) / opt.temperature);
      pick = static_cast<int>(rng.categorical(w));
    }
    res.tokens.push_back(pick);
    res.logprobs.push_back(std::log(dist(pick)));
    if (pick == kTokEos) {
      res.hit_end = true;
      break;
    }
    if (static_cast<int>(res.tokens.size()) >= budget) break;
    y = trunk_.step(st, pick);
  }
  return res;
}

std::string PolicyModel::config_json() const {
  json j;
  j["vocab"] = cfg_.trunk.vocab;
  j["d_model"] = cfg_.trunk.d_model;
  j["n_layers"] = cfg_.trunk.n_layers;
  j["n_heads"] = cfg_.trunk.n_heads;
  j["d_ff"] = cfg_.trunk.d_ff;
  j["max_len"] = cfg_.trunk.max_len;
  j["copy_dim"] = cfg_.copy_dim;
  return j.dump();
}

PolicyConfig PolicyModel::config_from_json(const std::string& json_text) {
  json j = json::parse(json_text);
  PolicyConfig cfg;
  cfg.trunk.vocab = j.at("vocab").get<int>();
  cfg.trunk.d_model = j.at("d_model").get<int>();
  cfg.trunk.n_layers = j.at("n_layers").get<int>();
  cfg.trunk.n_heads = j.at("n_heads").get<int>();
  cfg.trunk.d_ff = j.at("d_ff").get<int>();
  cfg.trunk.max_len = j.at("max_len").get<int>();
  cfg.copy_dim = j.at("copy_dim").get<int>();
  return cfg;
}

ValueModel::ValueModel(int vocab, const TrunkConfig& cfg)
    : cfg_(with_vocab(cfg, vocab)), trunk_(params_, "t.", cfg_) {
  const int d = cfg_.d_model;
  params_.add("vhead.w", 1, d);
  params_.add("vhead.b", 1, 1);
  params_.allocate();
}

void ValueModel::init(Rng& rng) {
  trunk_.init(rng);
  params_.mat("vhead.w").setZero();
  params_.mat("vhead.b").setZero();
}

void ValueModel::init_from_policy(const PolicyModel& policy) {
  const TrunkConfig& pc = policy.config().trunk;
  if (pc.vocab != cfg_.vocab || pc.d_model != cfg_.d_model || pc.n_layers != cfg_.n_layers ||
      pc.n_heads != cfg_.n_heads || pc.d_ff != cfg_.d_ff || pc.max_len != cfg_.max_len)
    throw ConfigError("value model dimensions do not match the policy trunk");
  for (const ParamSegment& s : params_.segments()) {
    if (s.name.rfind("t.", 0) != 0) continue;
    params_.mat(s.name) = policy.params().mat(s.name);
  }
  params_.mat("vhead.w").setZero();
  params_.mat("vhead.b").setZero();
}

std::vector<double> ValueModel::values(const std::vector<int>& prompt,
                                       const std::vector<int>& actions,
                                       EvalCache* cache) const {
  if (prompt.empty()) throw std::invalid_argument("empty prompt");
  const int n = static_cast<int>(actions.size());
  if (n == 0) return {};
  const int p_len = static_cast<int>(prompt.size());
  // state s_t only contains actions before t, so the final action never feeds
  // a value position and is left out of the forward pass
  std::vector<int> seq = prompt;
  seq.insert(seq.end(), actions.begin(), actions.end() - 1);

  EvalCache local;
  EvalCache& ec = cache ? *cache : local;
  Mat hidden = trunk_.forward(seq, cache ? &ec.trunk : nullptr);
  ConstMatMap w = params_.mat("vhead.w");
  const double b = params_.mat("vhead.b")(0, 0);
  std::vector<double> out(n);
  for (int t = 0; t < n; ++t) out[t] = w.row(0).dot(hidden.col(p_len - 1 + t)) + b;
  if (cache) {
    ec.hidden = std::move(hidden);
    ec.prompt_len = p_len;
    ec.n = n;
  }
  return out;
}

void ValueModel::backward(const EvalCache& cache, const std::vector<double>& dvalues) {
  if (static_cast<int>(dvalues.size()) != cache.n)
    throw std::logic_error("value backward: seed count mismatch");
  if (cache.n == 0) return;
  const int d = cfg_.d_model;
  ConstMatMap w = std::as_const(params_).mat("vhead.w");
  Mat dy = Mat::Zero(d, cache.hidden.cols());
  for (int t = 0; t < cache.n; ++t) {
    const double dv = dvalues[t];
    if (dv == 0.0) continue;
    dy.col(cache.prompt_len - 1 + t) += dv * w.row(0).transpose();
    params_.grad("vhead.w").row(0) += dv * cache.hidden.col(cache.prompt_len - 1 + t).transpose();
    params_.grad("vhead.b")(0, 0) += dv;
  }
  trunk_.backward(cache.trunk, dy);
}

std::string ValueModel::config_json() const {
  json j;
  j["vocab"] = cfg_.vocab;
  j["d_model"] = cfg_.d_model;
  j["n_layers"] = cfg_.n_layers;
  j["n_heads"] = cfg_.n_heads;
  j["d_ff"] = cfg_.d_ff;
  j["max_len"] = cfg_.max_len;
  return j.dump();
}

TrunkConfig ValueModel::config_from_json(const std::string& json_text) {
  json j = json::parse(json_text);
  TrunkConfig cfg;
  cfg.vocab = j.at("vocab").get<int>();
  cfg.d_model = j.at("d_model").get<int>();
  cfg.n_layers = j.at("n_layers").get<int>();
  cfg.n_heads = j.at("n_heads").get<int>();
  cfg.d_ff = j.at("d_ff").get<int>();
  cfg.max_len = j.at("max_len").get<int>();
  return cfg;
}

double mean_nll(const PolicyModel& policy, const std::vector<PromptTarget>& samples) {
  double total = 0.0;
  long long tokens = 0;
  for (const PromptTarget& s : samples) {
    const std::vector<double> lps = policy.eval_logprobs(s.prompt, s.target, nullptr);
    for (double lp : lps) total -= lp;
    tokens += static_cast<long long>(lps.size());
  }
  if (tokens == 0) throw std::invalid_argument("mean_nll over zero tokens");
  return total / static_cast<double>(tokens);
}

SftReport sft_train(PolicyModel& policy, const std::vector<PromptTarget>& samples,
                    const SftConfig& cfg) {
  if (cfg.epochs <= 0 || cfg.batch_size <= 0) throw ConfigError("bad sft schedule");
  if (!(cfg.lr >= 0.0)) throw ConfigError("bad sft learning rate");
  const int max_len = policy.config().trunk.max_len;
  SftReport report;
  std::vector<int> keep;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.target.empty() ||
        static_cast<int>(s.prompt.size() + s.target.size()) > max_len) {
      report.skipped += 1;
      continue;
    }
    keep.push_back(static_cast<int>(i));
  }
  if (keep.empty()) throw ConfigError("no trainable samples after length filtering");

  Rng rng(derive_seed(cfg.seed, "sft-order"));
  AdamState adam;
  adam_init(adam, policy.params());
  AdamConfig acfg;
  acfg.lr = cfg.lr;
  acfg.weight_decay = cfg.weight_decay;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(keep);
    double epoch_nll = 0.0;
    long long epoch_tokens = 0;
    for (std::size_t start = 0; start < keep.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(keep.size(), start + cfg.batch_size);
      long long batch_tokens = 0;
      for (std::size_t k = start; k < end; ++k)
        batch_tokens += static_cast<long long>(samples[keep[k]].target.size());
      policy.params().zero_grad();
      const double seed_scale = -1.0 / static_cast<double>(batch_tokens);
      for (std::size_t k = start; k < end; ++k) {
        const PromptTarget& s = samples[keep[k]];
        PolicyModel::EvalCache cache;
        const std::vector<double> lps = policy.eval_logprobs(s.prompt, s.target, &cache);
        for (double lp : lps) epoch_nll -= lp;
        epoch_tokens += static_cast<long long>(lps.size());
        std::vector<double> seeds(lps.size(), seed_scale);
        policy.backward(cache, seeds);
      }
      if (cfg.grad_clip > 0.0) {
        const double norm = policy.params().grad_norm();
        if (norm > cfg.grad_clip) policy.params().scale_grads(cfg.grad_clip / norm);
      }
      adam_step(policy.params(), adam, acfg);
    }
    report.epoch_loss.push_back(epoch_nll / static_cast<double>(epoch_tokens));
  }
  return report;
}

}  // namespace addrkit
