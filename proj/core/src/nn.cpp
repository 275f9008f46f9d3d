#include "addrkit/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace addrkit {

using nlohmann::json;

void ParamStore::add(const std::string& name, int rows, int cols) {
  if (allocated_) throw std::logic_error("ParamStore::add after allocate");
  if (rows <= 0 || cols <= 0) throw std::logic_error("ParamStore::add: bad shape for " + name);
  if (index_.count(name)) throw std::logic_error("ParamStore::add: duplicate " + name);
  ParamSegment s;
  s.name = name;
  s.rows = rows;
  s.cols = cols;
  s.offset = segs_.empty() ? 0 : segs_.back().offset + segs_.back().size();
  index_[name] = static_cast<int>(segs_.size());
  segs_.push_back(s);
}

void ParamStore::allocate() {
  if (allocated_) throw std::logic_error("ParamStore::allocate twice");
  std::size_t total = segs_.empty() ? 0 : segs_.back().offset + segs_.back().size();
  values_.assign(total, 0.0);
  grads_.assign(total, 0.0);
  allocated_ = true;
}

const ParamSegment& ParamStore::segment(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::logic_error("ParamStore: unknown segment " + name);
  return segs_[it->second];
}

MatMap ParamStore::mat(const std::string& name) {
  const ParamSegment& s = segment(name);
  return MatMap(values_.data() + s.offset, s.rows, s.cols);
}

ConstMatMap ParamStore::mat(const std::string& name) const {
  const ParamSegment& s = segment(name);
  return ConstMatMap(values_.data() + s.offset, s.rows, s.cols);
}

MatMap ParamStore::grad(const std::string& name) {
  const ParamSegment& s = segment(name);
  return MatMap(grads_.data() + s.offset, s.rows, s.cols);
}

void ParamStore::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (double g : grads_) s += g * g;
  return std::sqrt(s);
}

void ParamStore::scale_grads(double s) {
  for (double& g : grads_) g *= s;
}

std::uint64_t ParamStore::checksum() const {
  if (values_.empty()) return fnv1a("", kFnvOffset);
  return fnv1a(values_.data(), values_.size() * sizeof(double));
}

std::uint64_t ParamStore::checksum(const std::string& prefix) const {
  std::uint64_t h = kFnvOffset;
  for (const ParamSegment& s : segs_) {
    if (s.name.rfind(prefix, 0) != 0) continue;
    h = fnv1a(values_.data() + s.offset, s.size() * sizeof(double), h);
  }
  return h;
}

void ParamStore::copy_values_from(const ParamStore& other) {
  if (other.values_.size() != values_.size())
    throw std::logic_error("ParamStore::copy_values_from: size mismatch");
  values_ = other.values_;
}

void adam_init(AdamState& st, const ParamStore& p) {
  st.m.assign(p.size(), 0.0);
  st.v.assign(p.size(), 0.0);
  st.t = 0;
}

void adam_step(ParamStore& p, AdamState& st, const AdamConfig& cfg,
               const std::string& frozen_prefix) {
  if (st.m.size() != p.size()) throw std::logic_error("adam_step: uninitialized state");
  st.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  std::vector<double>& w = p.values();
  const std::vector<double>& g = p.grads();
  for (const ParamSegment& s : p.segments()) {
    if (!frozen_prefix.empty() && s.name.rfind(frozen_prefix, 0) == 0) continue;
    const std::size_t end = s.offset + s.size();
    for (std::size_t i = s.offset; i < end; ++i) {
      st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * g[i];
      st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mh = st.m[i] / bc1;
      const double vh = st.v[i] / bc2;
      if (cfg.weight_decay != 0.0) w[i] -= cfg.lr * cfg.weight_decay * w[i];
      w[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
}

namespace {
constexpr char kCkptMagic[8] = {'A', 'D', 'K', 'C', 'K', 'P', 'T', '1'};

json header_to_json(const CheckpointHeader& hdr, std::size_t param_count) {
  json j;
  j["kind"] = hdr.kind;
  j["vocab_hash"] = hdr.vocab_hash;
  j["config"] = hdr.config_json.empty() ? json::object() : json::parse(hdr.config_json);
  j["stages"] = hdr.stages;
  j["extra"] = hdr.extra_json.empty() ? json::object() : json::parse(hdr.extra_json);
  j["param_count"] = param_count;
  return j;
}

CheckpointHeader header_from_json(const json& j, std::size_t* param_count) {
  CheckpointHeader hdr;
  hdr.kind = j.at("kind").get<std::string>();
  hdr.vocab_hash = j.at("vocab_hash").get<std::uint64_t>();
  hdr.config_json = j.at("config").dump();
  for (auto it = j.at("stages").begin(); it != j.at("stages").end(); ++it)
    hdr.stages[it.key()] = it.value().get<std::string>();
  hdr.extra_json = j.at("extra").dump();
  if (param_count) *param_count = j.at("param_count").get<std::size_t>();
  return hdr;
}

void read_header_blob(std::ifstream& in, const std::string& path, json* out) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCkptMagic, 8) != 0)
    throw IoError("not a checkpoint file: " + path);
  std::uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in || hlen == 0 || hlen > (1u << 24)) throw IoError("corrupt checkpoint header: " + path);
  std::string blob(hlen, '\0');
  in.read(blob.data(), hlen);
  if (!in) throw IoError("truncated checkpoint header: " + path);
  try {
    *out = json::parse(blob);
  } catch (const json::exception& e) {
    throw IoError("bad checkpoint header in " + path + ": " + e.what());
  }
}
}  // namespace

void save_checkpoint(const std::string& path, const CheckpointHeader& hdr,
                     const ParamStore& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  const std::string blob = header_to_json(hdr, params.size()).dump();
  out.write(kCkptMagic, 8);
  const std::uint32_t hlen = static_cast<std::uint32_t>(blob.size());
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  out.write(reinterpret_cast<const char*>(params.values().data()),
            static_cast<std::streamsize>(params.size() * sizeof(double)));
  if (!out) throw IoError("write failed: " + path);
}

CheckpointHeader peek_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  json j;
  read_header_blob(in, path, &j);
  try {
    return header_from_json(j, nullptr);
  } catch (const json::exception& e) {
    throw IoError("bad checkpoint header in " + path + ": " + e.what());
  }
}

CheckpointHeader load_checkpoint(const std::string& path, const std::string& expected_kind,
                                 ParamStore& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  json j;
  read_header_blob(in, path, &j);
  std::size_t count = 0;
  CheckpointHeader hdr;
  try {
    hdr = header_from_json(j, &count);
  } catch (const json::exception& e) {
    throw IoError("bad checkpoint header in " + path + ": " + e.what());
  }
  if (!expected_kind.empty() && hdr.kind != expected_kind)
    throw IoError("checkpoint " + path + " has kind '" + hdr.kind + "', expected '" +
                  expected_kind + "'");
  if (count != params.size())
    throw IoError("checkpoint " + path + " holds " + std::to_string(count) +
                  " params, model expects " + std::to_string(params.size()));
  in.read(reinterpret_cast<char*>(params.values().data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw IoError("truncated checkpoint payload: " + path);
  return hdr;
}

}  // namespace addrkit
