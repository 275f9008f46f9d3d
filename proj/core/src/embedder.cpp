#include "addrkit/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include <nlohmann/json.hpp>

namespace addrkit {

using nlohmann::json;

namespace {
constexpr double kNormFloor = 1e-12;
}

SpatialEncoder::SpatialEncoder(int vocab, const EmbedderConfig& cfg) : vocab_(vocab), cfg_(cfg) {
  if (vocab_ <= 0) throw ConfigError("encoder vocab must be positive");
  if (cfg_.embed_dim <= 0 || cfg_.hidden <= 0 || cfg_.max_len <= 0)
    throw ConfigError("encoder dimensions must be positive");
  params_.add("enc.tok", cfg_.embed_dim, vocab_);
  params_.add("enc.pos", cfg_.embed_dim, cfg_.max_len);
  params_.add("enc.mix1", cfg_.hidden, cfg_.embed_dim);
  params_.add("enc.b1", cfg_.hidden, 1);
  params_.add("enc.mix2", cfg_.embed_dim, cfg_.hidden);
  params_.add("enc.b2", cfg_.embed_dim, 1);
  params_.add("geo.w", 2, cfg_.embed_dim);
  params_.add("geo.b", 2, 1);
  params_.add("geo.lift", 1, cfg_.embed_dim);
  params_.add("geo.lift_b", 1, 1);
  params_.allocate();
}

void SpatialEncoder::init(Rng& rng) {
  auto gauss = [&](MatMap m, double s) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = s * rng.gaussian();
  };
  gauss(params_.mat("enc.tok"), 0.1);
  gauss(params_.mat("enc.pos"), 0.1);
  gauss(params_.mat("enc.mix1"), 0.1);
  params_.mat("enc.b1").setZero();
  gauss(params_.mat("enc.mix2"), 0.1);
  params_.mat("enc.b2").setZero();
  gauss(params_.mat("geo.w"), 0.1);
  params_.mat("geo.b").setConstant(0.5);  // map center
  gauss(params_.mat("geo.lift"), 0.1);
  params_.mat("geo.lift_b").setConstant(0.5);
}

double lift_height(double nx, double ny) {
  const double r2 = (nx - 0.5) * (nx - 0.5) + (ny - 0.5) * (ny - 0.5);
  return std::sqrt(std::max(0.0, 1.0 - 2.0 * r2));
}

Vec SpatialEncoder::embed_core(const std::vector<int>& tokens, Cache* cache) const {
  const int e_dim = cfg_.embed_dim;
  std::vector<int> toks = tokens;
  if (static_cast<int>(toks.size()) > cfg_.max_len) toks.resize(cfg_.max_len);
  Vec e = Vec::Zero(e_dim);
  if (toks.empty()) {
    if (cache) {
      cache->tokens.clear();
      cache->h = cache->m = cache->raw = cache->e = Vec::Zero(e_dim);
      cache->rnorm = 0.0;
    }
    return e;
  }
  for (int t : toks)
    if (t < 0 || t >= vocab_)
      throw std::invalid_argument("token id out of vocabulary: " + std::to_string(t));

  ConstMatMap tok = params_.mat("enc.tok");
  ConstMatMap pos = params_.mat("enc.pos");
  Vec h = Vec::Zero(e_dim);
  for (std::size_t i = 0; i < toks.size(); ++i)
    h += (tok.col(toks[i]).array() * (1.0 + pos.col(i).array())).matrix();
  h /= static_cast<double>(toks.size());

  const Vec pre = params_.mat("enc.mix1") * h + params_.mat("enc.b1").col(0);
  const Vec m = pre.array().tanh().matrix();
  const Vec raw = params_.mat("enc.mix2") * m + params_.mat("enc.b2").col(0);
  const double rnorm = raw.norm();
  e = rnorm < kNormFloor ? Vec::Zero(e_dim) : Vec(raw / rnorm);
  if (cache) {
    cache->tokens = std::move(toks);
    cache->h = h;
    cache->m = m;
    cache->raw = raw;
    cache->e = e;
    cache->rnorm = rnorm;
  }
  return e;
}

Vec SpatialEncoder::embed(const std::vector<int>& tokens) const {
  return embed_core(tokens, nullptr);
}

Vec SpatialEncoder::embed_text(const Lexicon& lex, const std::string& text) const {
  return embed_core(lex.tokenize(text), nullptr);
}

Vec SpatialEncoder::predict(const std::vector<int>& tokens, Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  const Vec e = embed_core(tokens, &c);
  const Vec pred = params_.mat("geo.w") * e + params_.mat("geo.b").col(0);
  c.pred = pred;
  return pred;
}

Coordinate SpatialEncoder::predict_coordinate(const std::vector<int>& tokens,
                                              double side_m) const {
  const Vec p = predict(tokens);
  return {p(0) * side_m, p(1) * side_m};
}

void SpatialEncoder::backward(const Cache& cache, const Vec& dpred) {
  params_.grad("geo.w") += dpred * cache.e.transpose();
  params_.grad("geo.b").col(0) += dpred;
  const Vec de = std::as_const(params_).mat("geo.w").transpose() * dpred;
  backward_embedding(cache, de);
}

void SpatialEncoder::backward_embedding(const Cache& cache, const Vec& de) {
  if (cache.tokens.empty()) return;
  // e = raw / |raw|
  Vec draw;
  if (cache.rnorm < kNormFloor) return;
  draw = (de - cache.e * cache.e.dot(de)) / cache.rnorm;

  params_.grad("enc.mix2") += draw * cache.m.transpose();
  params_.grad("enc.b2").col(0) += draw;
  const Vec dm = std::as_const(params_).mat("enc.mix2").transpose() * draw;
  const Vec dpre = (dm.array() * (1.0 - cache.m.array().square())).matrix();
  params_.grad("enc.mix1") += dpre * cache.h.transpose();
  params_.grad("enc.b1").col(0) += dpre;
  const Vec dh = std::as_const(params_).mat("enc.mix1").transpose() * dpre;

  const double inv_n = 1.0 / static_cast<double>(cache.tokens.size());
  ConstMatMap tok = std::as_const(params_).mat("enc.tok");
  ConstMatMap pos = std::as_const(params_).mat("enc.pos");
  MatMap dtok = params_.grad("enc.tok");
  MatMap dpos = params_.grad("enc.pos");
  for (std::size_t i = 0; i < cache.tokens.size(); ++i) {
    const int t = cache.tokens[i];
    dtok.col(t) += (dh.array() * (1.0 + pos.col(i).array()) * inv_n).matrix();
    dpos.col(i) += (dh.array() * tok.col(t).array() * inv_n).matrix();
  }
}

double SpatialEncoder::train_loss(const EmbedSample& s) const {
  Cache cache;
  const Vec pred = predict(s.tokens, &cache);
  const double lift =
      (params_.mat("geo.lift") * cache.e)(0) + params_.mat("geo.lift_b")(0, 0);
  const double dx = pred(0) - s.nx;
  const double dy = pred(1) - s.ny;
  const double dz = lift - lift_height(s.nx, s.ny);
  return dx * dx + dy * dy + dz * dz;
}

void SpatialEncoder::train_backward(const EmbedSample& s, double weight) {
  Cache cache;
  const Vec pred = predict(s.tokens, &cache);
  const double lift =
      (std::as_const(params_).mat("geo.lift") * cache.e)(0) + params_.mat("geo.lift_b")(0, 0);
  Vec derr(2);
  derr << 2.0 * weight * (pred(0) - s.nx), 2.0 * weight * (pred(1) - s.ny);
  const double dzerr = 2.0 * weight * (lift - lift_height(s.nx, s.ny));

  params_.grad("geo.w") += derr * cache.e.transpose();
  params_.grad("geo.b").col(0) += derr;
  params_.grad("geo.lift") += dzerr * cache.e.transpose();
  params_.grad("geo.lift_b")(0, 0) += dzerr;
  const Vec de = std::as_const(params_).mat("geo.w").transpose() * derr +
                 std::as_const(params_).mat("geo.lift").transpose() * dzerr;
  backward_embedding(cache, de);
}

std::string SpatialEncoder::config_json() const {
  json j;
  j["vocab"] = vocab_;
  j["embed_dim"] = cfg_.embed_dim;
  j["hidden"] = cfg_.hidden;
  j["max_len"] = cfg_.max_len;
  return j.dump();
}

EmbedderConfig SpatialEncoder::config_from_json(const std::string& json_text) {
  json j = json::parse(json_text);
  EmbedderConfig cfg;
  cfg.embed_dim = j.at("embed_dim").get<int>();
  cfg.hidden = j.at("hidden").get<int>();
  cfg.max_len = j.at("max_len").get<int>();
  return cfg;
}

namespace {

double run_embedder_epoch(SpatialEncoder& enc, const std::vector<EmbedSample>& samples,
                          std::vector<int>& order, Rng& rng, AdamState& adam,
                          const AdamConfig& acfg, const std::string& frozen, int batch_size,
                          double head_ridge) {
  rng.shuffle(order);
  double total = 0.0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    const double inv = 1.0 / static_cast<double>(end - start);
    enc.params().zero_grad();
    for (std::size_t k = start; k < end; ++k) {
      const EmbedSample& s = samples[order[k]];
      total += enc.train_loss(s);
      enc.train_backward(s, inv);
    }
    if (head_ridge > 0.0) {
      enc.params().grad("geo.w") += 2.0 * head_ridge * std::as_const(enc.params()).mat("geo.w");
      enc.params().grad("geo.lift") +=
          2.0 * head_ridge * std::as_const(enc.params()).mat("geo.lift");
    }
    adam_step(enc.params(), adam, acfg, frozen);
  }
  return total / static_cast<double>(order.size());
}

}  // namespace

EmbedderTrainReport train_embedder(SpatialEncoder& enc, const std::vector<EmbedSample>& samples,
                                   const EmbedderTrainConfig& cfg) {
  if (samples.empty()) throw ConfigError("no embedder training samples");
  if (cfg.batch_size <= 0 || cfg.phase1_epochs < 0 || cfg.phase2_epochs < 0)
    throw ConfigError("bad embedder schedule");
  EmbedderTrainReport report;
  report.enc_checksum_init = enc.params().checksum("enc.");

  std::vector<int> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  Rng rng(derive_seed(cfg.seed, "embedder-order"));

  AdamState adam;
  adam_init(adam, enc.params());
  AdamConfig acfg;
  acfg.lr = cfg.lr_phase1;
  for (int e = 0; e < cfg.phase1_epochs; ++e)
    report.phase1_loss.push_back(run_embedder_epoch(enc, samples, order, rng, adam, acfg, "enc.",
                                                    cfg.batch_size, cfg.head_ridge));
  report.enc_checksum_after_phase1 = enc.params().checksum("enc.");

  // fresh optimizer state for the joint phase: the encoder segments start
  // with zero moments either way
  adam_init(adam, enc.params());
  acfg.lr = cfg.lr_phase2;
  for (int e = 0; e < cfg.phase2_epochs; ++e)
    report.phase2_loss.push_back(run_embedder_epoch(enc, samples, order, rng, adam, acfg, "",
                                                    cfg.batch_size, cfg.head_ridge));
  report.enc_checksum_final = enc.params().checksum("enc.");
  return report;
}

CorrelationReport correlation_report(const SpatialEncoder& enc,
                                     const std::vector<GeoRefSample>& samples, int n_pairs,
                                     std::uint64_t seed,
                                     std::vector<std::pair<double, double>>* scatter) {
  if (samples.size() < 2) throw ConfigError("need at least two samples for correlation");
  if (n_pairs <= 1) throw ConfigError("need at least two pairs for correlation");
  std::vector<Vec> embs(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) embs[i] = enc.embed(samples[i].tokens);

  Rng rng(derive_seed(seed, "correlation"));
  if (scatter) scatter->clear();
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (int k = 0; k < n_pairs; ++k) {
    const std::size_t i = rng.uniform_int(samples.size());
    std::size_t j = rng.uniform_int(samples.size() - 1);
    if (j >= i) ++j;  // distinct pair
    const double x = 1.0 - cosine(embs[i], embs[j]);
    const double y = distance(samples[i].coordinate, samples[j].coordinate);
    if (scatter) scatter->push_back({x, y});
    sx += x;
    sy += y;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
  }
  const double n = static_cast<double>(n_pairs);
  const double cov = sxy - sx * sy / n;
  const double vx = sxx - sx * sx / n;
  const double vy = syy - sy * sy / n;
  if (vx < kNormFloor || vy < kNormFloor)
    throw DomainFailure("correlation cloud is degenerate: zero variance");
  CorrelationReport rep;
  rep.pairs = n_pairs;
  rep.slope = cov / vx;
  rep.intercept = (sy - rep.slope * sx) / n;
  if (n_pairs == 2) {
    // two distinct points always lie on their own fitted line
    rep.r2 = 1.0;
    rep.mse = 0.0;
    return rep;
  }
  rep.r2 = std::min(1.0, (cov * cov) / (vx * vy));
  rep.mse = std::max(0.0, vy * (1.0 - rep.r2) / n);
  return rep;
}

CorrelationReport correlation_report(const SpatialEncoder& enc, const World& w, int n_pairs,
                                     std::uint64_t seed,
                                     std::vector<std::pair<double, double>>* scatter) {
  std::vector<GeoRefSample> refs;
  refs.reserve(w.records.size());
  for (const auto& rec : w.records)
    refs.push_back({w.lexicon.tokenize(rec.text), rec.coordinate});
  return correlation_report(enc, refs, n_pairs, seed, scatter);
}

}  // namespace addrkit
