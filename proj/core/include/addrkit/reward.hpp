// Alignment reward: semantic similarity, reverse-geocode consistency, and a
// piecewise geocode-distance score, combined with fixed weights.
#pragma once

#include <Eigen/Dense>
#include <string>

#include "addrkit/world.hpp"

namespace addrkit {

// Deterministic text embedder: hashed character n-grams (1..3) into a fixed
// number of buckets, L2-normalized counts. Cheap stand-in for a sentence
// encoder; cosine of 1 iff the texts are identical at the n-gram level.
class SemanticEmbedder {
 public:
  explicit SemanticEmbedder(int buckets = 1024, std::uint64_t salt = 0x9e3779b97f4a7c15ull)
      : buckets_(buckets), salt_(salt) {}

  // Zero vector for the empty string; unit L2 norm otherwise.
  Eigen::VectorXd embed(const std::string& text) const;
  int buckets() const { return buckets_; }

 private:
  int buckets_;
  std::uint64_t salt_;
};

// Cosine with zero-vector guard: either side zero -> 0.
double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct RewardConfig {
  double near_threshold_m = 100.0;
  double far_threshold_m = 1000.0;
  double weight_semantic = 0.2;
  double weight_revgeo = 0.2;
  double weight_geocode = 0.6;
  // The published mid-range falloff divides by the far threshold, leaving a
  // step at the far edge; this flag switches to the continuous ramp.
  bool continuous_falloff = false;
};

// cos(f(x), f(y))
double semantic_score(const SemanticEmbedder& f, const std::string& x, const std::string& y);

// cos(f(y), f(reverse_geocode(c)))
double revgeo_score(const SemanticEmbedder& f, const World& w, const std::string& y,
                    const Coordinate& c);

// 1 inside the near radius; linear falloff to the far radius; 0 beyond.
// Geocode failure scores 0.
double geocode_score(const World& w, const std::string& y, const Coordinate& c,
                     const RewardConfig& cfg);

struct RewardBreakdown {
  double semantic = 0.0;
  double revgeo = 0.0;
  double geocode = 0.0;
  double total = 0.0;
};

RewardBreakdown total_reward(const SemanticEmbedder& f, const World& w, const std::string& x,
                             const std::string& y, const Coordinate& c, const RewardConfig& cfg);

}  // namespace addrkit
