#include "addrkit/data.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace addrkit {

using nlohmann::json;

std::string sample_to_json_line(const RewriteSample& s) {
  json j;
  j["task"] = s.task;
  j["input"] = s.input_text;
  if (!s.target_text.empty()) j["target"] = s.target_text;
  if (s.delivery) j["delivery"] = json::array({s.delivery->x, s.delivery->y});
  if (s.station_id) j["station"] = *s.station_id;
  if (s.record_id) j["record"] = *s.record_id;
  if (!s.error_type.empty()) j["error"] = s.error_type;
  if (s.abnormal) j["abnormal"] = true;
  return j.dump();
}

RewriteSample sample_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw IoError(std::string("bad jsonl line: ") + e.what());
  }
  RewriteSample s;
  try {
    s.task = j.at("task").get<std::string>();
    s.input_text = j.at("input").get<std::string>();
    if (j.contains("target")) s.target_text = j.at("target").get<std::string>();
    if (j.contains("delivery")) {
      auto d = j.at("delivery");
      s.delivery = Coordinate{d.at(0).get<double>(), d.at(1).get<double>()};
    }
    if (j.contains("station")) s.station_id = j.at("station").get<int>();
    if (j.contains("record")) s.record_id = j.at("record").get<int>();
    if (j.contains("error")) s.error_type = j.at("error").get<std::string>();
    if (j.contains("abnormal")) s.abnormal = j.at("abnormal").get<bool>();
  } catch (const json::exception& e) {
    throw IoError(std::string("bad jsonl record: ") + e.what());
  }
  return s;
}

void write_jsonl(const std::string& path, const std::vector<RewriteSample>& rows) {
  std::string out;
  for (const auto& s : rows) {
    out += sample_to_json_line(s);
    out += '\n';
  }
  write_text_file(path, out);
}

std::vector<RewriteSample> read_jsonl(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<RewriteSample> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    rows.push_back(sample_from_json_line(line));
  }
  return rows;
}

std::string parsing_target(const AddressRecord& rec) {
  std::string out;
  for (int t = 1; t <= kTiers; ++t) {
    out += "[" + std::to_string(t) + "]";
    out += rec.components[t - 1];
  }
  return out;
}

namespace {

const AddressRecord& pick(const World& w, const std::vector<int>& pool, Rng& rng) {
  if (pool.empty()) throw ConfigError("record pool is empty");
  return w.records[pool[rng.uniform_int(pool.size())]];
}

std::string alias_variant(const World& w, const AddressRecord& rec, Rng& rng) {
  std::vector<int> tiers;
  for (int t = 1; t <= kTiers; ++t)
    if (w.alias_table.count(rec.components[t - 1])) tiers.push_back(t);
  if (tiers.empty()) return rec.text;
  int tier = tiers[rng.uniform_int(tiers.size())];
  const auto& aliases = w.alias_table.at(rec.components[tier - 1]);
  const std::string& alias = aliases[rng.uniform_int(aliases.size())];
  std::string out;
  for (int t = 1; t <= kTiers; ++t) {
    if (!out.empty()) out += ", ";
    out += (t == tier) ? alias : rec.components[t - 1];
  }
  return out;
}

}  // namespace

std::vector<RewriteSample> build_parsing(const World& w, const std::vector<int>& pool, int n,
                                         double alias_fraction, Rng& rng) {
  std::vector<RewriteSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const auto& rec = pick(w, pool, rng);
    RewriteSample s;
    s.task = "parsing";
    s.input_text = rng.uniform() < alias_fraction ? alias_variant(w, rec, rng) : rec.text;
    s.target_text = parsing_target(rec);
    s.record_id = rec.id;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<RewriteSample> build_completion(const World& w, const std::vector<int>& pool, int n,
                                            Rng& rng) {
  std::vector<RewriteSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const auto& rec = pick(w, pool, rng);
    int tier = 1 + static_cast<int>(rng.uniform_int(3));
    std::string input;
    for (int t = 1; t <= kTiers; ++t) {
      if (t == tier) continue;
      if (!input.empty()) input += ", ";
      input += rec.components[t - 1];
    }
    RewriteSample s;
    s.task = "completion";
    s.input_text = std::move(input);
    s.target_text = rec.text;
    s.record_id = rec.id;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<RewriteSample> build_rewriting(const World& w, const std::vector<int>& pool, int n,
                                           double identity_ratio,
                                           const std::array<double, kNumErrorTypes>& weights,
                                           Rng& rng) {
  if (identity_ratio < 0.0 || identity_ratio > 1.0)
    throw ConfigError("identity_ratio must be in [0,1]");
  int identity_n = static_cast<int>(std::llround(n * identity_ratio));
  std::vector<RewriteSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const auto& rec = pick(w, pool, rng);
    RewriteSample s;
    s.task = "rewriting";
    s.record_id = rec.id;
    s.target_text = rec.text;
    if (i < identity_n) {
      s.input_text = rec.text;
    } else {
      auto c = corrupt(w, rec, sample_error_type(rng, weights), rng);
      s.input_text = c.text;
      s.error_type = to_string(c.applied);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<RewriteSample> build_alignment(const World& w, const std::vector<int>& pool, int n,
                                           double noise_sigma_m,
                                           const std::array<double, kNumErrorTypes>& weights,
                                           Rng& rng) {
  std::vector<RewriteSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const auto& rec = pick(w, pool, rng);
    auto c = corrupt(w, rec, sample_error_type(rng, weights), rng);
    RewriteSample s;
    s.task = "alignment";
    s.input_text = c.text;
    s.error_type = to_string(c.applied);
    s.delivery = sample_delivery(w, rec, noise_sigma_m, rng);
    s.record_id = rec.id;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<RewriteSample> build_geocoding(const World& w, const std::vector<int>& pool, int n,
                                           const std::array<double, kNumErrorTypes>& weights,
                                           Rng& rng) {
  std::vector<RewriteSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const auto& rec = pick(w, pool, rng);
    RewriteSample s;
    s.task = "geocoding";
    double u = rng.uniform();
    if (u < 0.4) {
      s.input_text = rec.text;
    } else if (u < 0.6) {
      s.input_text = alias_variant(w, rec, rng);
    } else {
      s.input_text = corrupt(w, rec, sample_error_type(rng, weights), rng).text;
    }
    s.delivery = rec.coordinate;  // exact geocoding groundtruth
    s.record_id = rec.id;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<RewriteSample> build_test_rewrite(const World& w, const std::vector<int>& pool, int n,
                                              double abnormal_fraction, double noise_sigma_m,
                                              const std::array<double, kNumErrorTypes>& weights,
                                              Rng& rng) {
  if (abnormal_fraction < 0.0 || abnormal_fraction > 1.0)
    throw ConfigError("abnormal_fraction must be in [0,1]");
  int abnormal_n = static_cast<int>(std::llround(n * abnormal_fraction));
  std::vector<RewriteSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const auto& rec = pick(w, pool, rng);
    RewriteSample s;
    s.task = "test";
    s.record_id = rec.id;
    s.target_text = rec.text;
    s.abnormal = i < abnormal_n;
    if (s.abnormal) {
      auto c = corrupt(w, rec, sample_error_type(rng, weights), rng);
      s.input_text = c.text;
      s.error_type = to_string(c.applied);
    } else {
      s.input_text = rec.text;
    }
    s.delivery = sample_delivery(w, rec, noise_sigma_m, rng);
    s.station_id = station_of(w, *s.delivery);
    out.push_back(std::move(s));
  }
  rng.shuffle(out);
  return out;
}

Datasets build_datasets(const World& w, const DataConfig& cfg, std::uint64_t seed) {
  if (w.record_count() < 2) throw ConfigError("world too small for dataset construction");
  Datasets d;

  Rng split_rng(derive_seed(seed, "split"));
  std::vector<int> ids(w.record_count());
  for (int i = 0; i < w.record_count(); ++i) ids[i] = i;
  split_rng.shuffle(ids);
  int test_count = static_cast<int>(std::llround(w.record_count() * cfg.test_record_fraction));
  test_count = std::clamp(test_count, 1, w.record_count() - 1);
  d.test_records.assign(ids.begin(), ids.begin() + test_count);
  d.train_records.assign(ids.begin() + test_count, ids.end());
  std::sort(d.test_records.begin(), d.test_records.end());
  std::sort(d.train_records.begin(), d.train_records.end());

  Rng parsing_rng(derive_seed(seed, "parsing"));
  Rng completion_rng(derive_seed(seed, "completion"));
  Rng rewriting_rng(derive_seed(seed, "rewriting"));
  Rng alignment_rng(derive_seed(seed, "alignment"));
  Rng geocoding_rng(derive_seed(seed, "geocoding"));
  Rng test_rng(derive_seed(seed, "test"));

  d.parsing = build_parsing(w, d.train_records, cfg.parsing_n, cfg.parsing_alias_fraction,
                            parsing_rng);
  d.completion = build_completion(w, d.train_records, cfg.completion_n, completion_rng);
  d.rewriting = build_rewriting(w, d.train_records, cfg.rewriting_n, cfg.identity_ratio,
                                cfg.error_weights, rewriting_rng);
  d.alignment = build_alignment(w, d.train_records, cfg.alignment_n, cfg.noise_sigma_m,
                                cfg.error_weights, alignment_rng);
  d.geocoding = build_geocoding(w, d.train_records, cfg.geocoding_n, cfg.error_weights,
                                geocoding_rng);
  d.test_completion = build_completion(w, d.test_records, cfg.test_n, test_rng);
  for (auto& s : d.test_completion) s.task = "test";
  d.test_rewrite = build_test_rewrite(w, d.test_records, cfg.test_n, cfg.abnormal_fraction,
                                      cfg.noise_sigma_m, cfg.error_weights, test_rng);
  return d;
}

namespace {
json data_config_to_json(const DataConfig& c) {
  return json{{"parsing_n", c.parsing_n},
              {"completion_n", c.completion_n},
              {"rewriting_n", c.rewriting_n},
              {"alignment_n", c.alignment_n},
              {"geocoding_n", c.geocoding_n},
              {"test_n", c.test_n},
              {"identity_ratio", c.identity_ratio},
              {"abnormal_fraction", c.abnormal_fraction},
              {"test_record_fraction", c.test_record_fraction},
              {"noise_sigma_m", c.noise_sigma_m},
              {"parsing_alias_fraction", c.parsing_alias_fraction},
              {"error_weights", c.error_weights}};
}
}  // namespace

void save_datasets(const Datasets& d, const DataConfig& cfg, const std::string& dir,
                   const ArtifactMeta& meta) {
  ensure_dir(dir);
  write_jsonl(dir + "/parsing.jsonl", d.parsing);
  write_jsonl(dir + "/completion.jsonl", d.completion);
  write_jsonl(dir + "/rewriting.jsonl", d.rewriting);
  write_jsonl(dir + "/oa.jsonl", d.alignment);
  write_jsonl(dir + "/geocoding.jsonl", d.geocoding);
  write_jsonl(dir + "/test_completion.jsonl", d.test_completion);
  write_jsonl(dir + "/test_rewrite.jsonl", d.test_rewrite);

  json m;
  m["format"] = "addrkit-data/1";
  m["stages"] = meta.stages;
  m["config"] = meta.config_json.empty() ? json(nullptr) : json::parse(meta.config_json);
  m["data_config"] = data_config_to_json(cfg);
  m["counts"] = json{{"parsing", d.parsing.size()},
                     {"completion", d.completion.size()},
                     {"rewriting", d.rewriting.size()},
                     {"oa", d.alignment.size()},
                     {"geocoding", d.geocoding.size()},
                     {"test_completion", d.test_completion.size()},
                     {"test_rewrite", d.test_rewrite.size()}};
  m["train_records"] = d.train_records;
  m["test_records"] = d.test_records;
  write_text_file(dir + "/manifest.json", m.dump(2) + "\n");
}

Datasets load_datasets(const std::string& dir, ArtifactMeta* meta_out) {
  json m;
  try {
    m = json::parse(read_text_file(dir + "/manifest.json"));
  } catch (const json::exception& e) {
    throw IoError("cannot parse manifest in " + dir + ": " + e.what());
  }
  if (!m.contains("format") || m.at("format") != "addrkit-data/1")
    throw IoError("unsupported data manifest in " + dir);
  if (meta_out) {
    meta_out->stages = m.at("stages").get<std::map<std::string, std::string>>();
    if (m.contains("config") && !m.at("config").is_null())
      meta_out->config_json = m.at("config").dump();
  }
  Datasets d;
  d.parsing = read_jsonl(dir + "/parsing.jsonl");
  d.completion = read_jsonl(dir + "/completion.jsonl");
  d.rewriting = read_jsonl(dir + "/rewriting.jsonl");
  d.alignment = read_jsonl(dir + "/oa.jsonl");
  d.geocoding = read_jsonl(dir + "/geocoding.jsonl");
  d.test_completion = read_jsonl(dir + "/test_completion.jsonl");
  d.test_rewrite = read_jsonl(dir + "/test_rewrite.jsonl");
  d.train_records = m.at("train_records").get<std::vector<int>>();
  d.test_records = m.at("test_records").get<std::vector<int>>();
  return d;
}

}  // namespace addrkit
