// Dataset builders and JSONL serialization for the training/eval corpora.
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "addrkit/corrupt.hpp"
#include "addrkit/world.hpp"

namespace addrkit {

struct RewriteSample {
  std::string task;  // parsing | completion | rewriting | alignment | test
  std::string input_text;
  std::string target_text;                 // empty when there is no supervised target
  std::optional<Coordinate> delivery;      // geocoding-style samples
  std::optional<int> station_id;
  std::optional<int> record_id;
  std::string error_type;                  // empty for clean inputs
  bool abnormal = false;
};

std::string sample_to_json_line(const RewriteSample& s);
RewriteSample sample_from_json_line(const std::string& line);
void write_jsonl(const std::string& path, const std::vector<RewriteSample>& rows);
std::vector<RewriteSample> read_jsonl(const std::string& path);

struct DataConfig {
  int parsing_n = 20000;
  int completion_n = 20000;
  int rewriting_n = 20000;
  int alignment_n = 4000;
  int geocoding_n = 20000;
  int test_n = 1000;
  double identity_ratio = 0.778;       // rewriting pairs left unchanged
  double abnormal_fraction = 0.10;     // defective share of the test set
  double test_record_fraction = 0.20;  // records held out from training
  double noise_sigma_m = 30.0;
  double parsing_alias_fraction = 0.30;
  std::array<double, kNumErrorTypes> error_weights = kErrorWeights;
};

struct Datasets {
  std::vector<RewriteSample> parsing;
  std::vector<RewriteSample> completion;
  std::vector<RewriteSample> rewriting;
  std::vector<RewriteSample> alignment;
  std::vector<RewriteSample> geocoding;   // text -> record coordinate pairs
  std::vector<RewriteSample> test_completion;
  std::vector<RewriteSample> test_rewrite;  // shared by direct and geocoding eval
  std::vector<int> train_records;
  std::vector<int> test_records;
};

// Deterministic given (world, config, seed). Train and test record pools are
// disjoint; test samples draw only from the held-out pool.
Datasets build_datasets(const World& w, const DataConfig& cfg, std::uint64_t seed);

// Individual builders (exposed for tests). `pool` is the record id pool.
std::vector<RewriteSample> build_parsing(const World& w, const std::vector<int>& pool, int n,
                                         double alias_fraction, Rng& rng);
std::vector<RewriteSample> build_completion(const World& w, const std::vector<int>& pool, int n,
                                            Rng& rng);
std::vector<RewriteSample> build_rewriting(const World& w, const std::vector<int>& pool, int n,
                                           double identity_ratio,
                                           const std::array<double, kNumErrorTypes>& weights,
                                           Rng& rng);
std::vector<RewriteSample> build_alignment(const World& w, const std::vector<int>& pool, int n,
                                           double noise_sigma_m,
                                           const std::array<double, kNumErrorTypes>& weights,
                                           Rng& rng);
std::vector<RewriteSample> build_geocoding(const World& w, const std::vector<int>& pool, int n,
                                           const std::array<double, kNumErrorTypes>& weights,
                                           Rng& rng);
std::vector<RewriteSample> build_test_rewrite(const World& w, const std::vector<int>& pool, int n,
                                              double abnormal_fraction, double noise_sigma_m,
                                              const std::array<double, kNumErrorTypes>& weights,
                                              Rng& rng);

// Writes every dataset plus manifest.json into `dir`.
void save_datasets(const Datasets& d, const DataConfig& cfg, const std::string& dir,
                   const ArtifactMeta& meta);
Datasets load_datasets(const std::string& dir, ArtifactMeta* meta_out = nullptr);

// The serialized target for a parsing sample: tier markers followed by the
// canonical component, ascending tiers.
std::string parsing_target(const AddressRecord& rec);

}  // namespace addrkit
