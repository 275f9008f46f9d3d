#include "addrkit/reward.hpp"

#include <cmath>

#include "addrkit/address.hpp"

namespace addrkit {

Eigen::VectorXd SemanticEmbedder::embed(const std::string& text) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(buckets_);
  if (text.empty()) return v;
  const std::size_t n = text.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t len = 1; len <= 3 && i + len <= n; ++len) {
      std::uint64_t h = fnv1a(text.data() + i, len, salt_);
      v[static_cast<int>(h % static_cast<std::uint64_t>(buckets_))] += 1.0;
    }
  }
  double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double na = a.norm(), nb = b.norm();
  if (na <= 0.0 || nb <= 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

double semantic_score(const SemanticEmbedder& f, const std::string& x, const std::string& y) {
  return cosine(f.embed(x), f.embed(y));
}

double revgeo_score(const SemanticEmbedder& f, const World& w, const std::string& y,
                    const Coordinate& c) {
  return cosine(f.embed(y), f.embed(reverse_geocode(w, c)));
}

double geocode_score(const World& w, const std::string& y, const Coordinate& c,
                     const RewardConfig& cfg) {
  auto g = geocode(w, y);
  if (!g) return 0.0;
  double k = distance(*g, c);
  if (k < cfg.near_threshold_m) return 1.0;
  if (k < cfg.far_threshold_m) {
    double span = cfg.continuous_falloff ? (cfg.far_threshold_m - cfg.near_threshold_m)
                                         : cfg.far_threshold_m;
    return 1.0 - (k - cfg.near_threshold_m) / span;
  }
  return 0.0;
}

RewardBreakdown total_reward(const SemanticEmbedder& f, const World& w, const std::string& x,
                             const std::string& y, const Coordinate& c, const RewardConfig& cfg) {
  RewardBreakdown r;
  r.semantic = semantic_score(f, x, y);
  r.revgeo = revgeo_score(f, w, y, c);
  r.geocode = geocode_score(w, y, c, cfg);
  r.total = cfg.weight_semantic * r.semantic + cfg.weight_revgeo * r.revgeo +
            cfg.weight_geocode * r.geocode;
  return r;
}

}  // namespace addrkit
