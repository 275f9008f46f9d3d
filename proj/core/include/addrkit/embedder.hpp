// Trainable address encoder: token vectors with positional scaling are
// mean-pooled, mixed through a small tanh layer, and L2-normalized. A linear
// head maps the embedding to normalized map coordinates; training it in two
// phases (head only on a frozen encoder, then jointly) pulls geographically
// close addresses together in cosine space.
#pragma once

#include <string>
#include <vector>

#include "addrkit/lexicon.hpp"
#include "addrkit/nn.hpp"
#include "addrkit/reward.hpp"  // cosine()
#include "addrkit/world.hpp"

namespace addrkit {

struct EmbedderConfig {
  int embed_dim = 64;
  int hidden = 128;
  int max_len = 48;  // longer token streams are truncated
};

struct EmbedSample {
  std::vector<int> tokens;
  double nx = 0.0, ny = 0.0;  // target coordinates scaled to [0, 1]
};

// Hemisphere height over the unit map square: 1 at the center, 0 at the
// corners.  Used as an auxiliary regression target so trained embeddings sit
// on a spherical cap, where chord length (what cosine measures) grows almost
// linearly with ground distance.
double lift_height(double nx, double ny);

class SpatialEncoder {
 public:
  SpatialEncoder(int vocab, const EmbedderConfig& cfg);

  void init(Rng& rng);

  // Unit-length embedding (zero vector for empty input).
  Vec embed(const std::vector<int>& tokens) const;
  Vec embed_text(const Lexicon& lex, const std::string& text) const;

  struct Cache {
    std::vector<int> tokens;
    Vec h, m, raw, e;
    double rnorm = 0.0;
    Vec pred;
  };

  // Predicted normalized coordinates (2) for a token stream.
  Vec predict(const std::vector<int>& tokens, Cache* cache = nullptr) const;
  // Same prediction de-normalized to map meters.
  Coordinate predict_coordinate(const std::vector<int>& tokens, double side_m) const;
  void backward(const Cache& cache, const Vec& dpred);

  // Full regression loss for one training sample: squared coordinate error
  // plus the hemisphere-lift shaping term (see lift_height).
  double train_loss(const EmbedSample& s) const;
  // Accumulates weight * d(train_loss)/d(params).
  void train_backward(const EmbedSample& s, double weight);

  // Accumulates gradients from d(loss)/d(embedding) through the encoder only.
  void backward_embedding(const Cache& cache, const Vec& de);

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const EmbedderConfig& config() const { return cfg_; }
  int vocab() const { return vocab_; }

  std::string config_json() const;
  static EmbedderConfig config_from_json(const std::string& json_text);

 private:
  int vocab_;
  EmbedderConfig cfg_;
  ParamStore params_;

  Vec embed_core(const std::vector<int>& tokens, Cache* cache) const;
};

struct EmbedderTrainConfig {
  int phase1_epochs = 2;   // head only, encoder frozen
  int phase2_epochs = 6;   // joint
  int batch_size = 32;
  double lr_phase1 = 1e-2;
  double lr_phase2 = 2e-3;
  // Ridge penalty on the regression head.  A small head forces the embedding
  // direction itself to carry the coordinates, which is what makes cosine
  // similarity track geographic distance; without it the head's null space
  // soaks up arbitrary structure.
  double head_ridge = 0.03;
  std::uint64_t seed = 1;
};

struct EmbedderTrainReport {
  std::vector<double> phase1_loss, phase2_loss;  // mean squared error per epoch
  std::uint64_t enc_checksum_init = 0;
  std::uint64_t enc_checksum_after_phase1 = 0;
  std::uint64_t enc_checksum_final = 0;
};

EmbedderTrainReport train_embedder(SpatialEncoder& enc, const std::vector<EmbedSample>& samples,
                                   const EmbedderTrainConfig& cfg);

// Linear fit of geographic distance (meters) against cosine dissimilarity
// over randomly drawn sample pairs.
struct CorrelationReport {
  double r2 = 0.0;
  double slope = 0.0;
  double intercept = 0.0;
  double mse = 0.0;  // mean squared residual of the fit, meters^2
  int pairs = 0;
};

struct GeoRefSample {
  std::vector<int> tokens;
  Coordinate coordinate;
};

// Throws DomainError when the sampled cloud is degenerate (zero variance on
// either axis), e.g. all pairs identical.
CorrelationReport correlation_report(const SpatialEncoder& enc,
                                     const std::vector<GeoRefSample>& samples, int n_pairs,
                                     std::uint64_t seed,
                                     std::vector<std::pair<double, double>>* scatter = nullptr);

// Convenience: pairs drawn from the world's canonical record texts.
CorrelationReport correlation_report(const SpatialEncoder& enc, const World& w, int n_pairs,
                                     std::uint64_t seed,
                                     std::vector<std::pair<double, double>>* scatter = nullptr);

}  // namespace addrkit
