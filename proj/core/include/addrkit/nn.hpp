// Flat parameter storage with named matrix segments, Adam, and the shared
// checkpoint container. All training state lives in plain double vectors so
// checksums, finite-difference probes, and byte-exact persistence are trivial.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "addrkit/common.hpp"

namespace addrkit {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;

struct ParamSegment {
  std::string name;
  std::size_t offset = 0;
  int rows = 0;
  int cols = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

class ParamStore {
 public:
  // Registration happens before allocate(); segment order is layout order.
  void add(const std::string& name, int rows, int cols);
  void allocate();
  bool allocated() const { return allocated_; }

  MatMap mat(const std::string& name);
  ConstMatMap mat(const std::string& name) const;
  MatMap grad(const std::string& name);

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& grads() { return grads_; }
  const std::vector<ParamSegment>& segments() const { return segs_; }
  const ParamSegment& segment(const std::string& name) const;
  std::size_t size() const { return values_.size(); }

  void zero_grad();
  double grad_norm() const;
  void scale_grads(double s);

  std::uint64_t checksum() const;
  // checksum over segments whose name starts with prefix
  std::uint64_t checksum(const std::string& prefix) const;

  // copies values from a store with an identical layout
  void copy_values_from(const ParamStore& other);

 private:
  std::vector<ParamSegment> segs_;
  std::unordered_map<std::string, int> index_;
  std::vector<double> values_, grads_;
  bool allocated_ = false;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

struct AdamState {
  std::vector<double> m, v;
  long long t = 0;
};

void adam_init(AdamState& st, const ParamStore& p);
// One update from accumulated grads. Segments whose name starts with
// frozen_prefix are skipped entirely (values and moments untouched).
void adam_step(ParamStore& p, AdamState& st, const AdamConfig& cfg,
               const std::string& frozen_prefix = "");

struct CheckpointHeader {
  std::string kind;                            // "policy" | "value" | "embedder"
  std::uint64_t vocab_hash = 0;
  std::string config_json;                     // model dimensions etc.
  std::map<std::string, std::string> stages;   // pipeline ancestry hashes
  std::string extra_json;                      // resolved experiment config
};

void save_checkpoint(const std::string& path, const CheckpointHeader& hdr,
                     const ParamStore& params);
CheckpointHeader peek_checkpoint(const std::string& path);
// The store must already have the layout implied by the header's config;
// throws IoError on kind/size mismatch.
CheckpointHeader load_checkpoint(const std::string& path, const std::string& expected_kind,
                                 ParamStore& params);

}  // namespace addrkit
