#include "ncache/dataset.hpp"

#include "ncache/criteria.hpp"
#include "ncache/io.hpp"
#include "ncache/rng.hpp"

#include <algorithm>
#include <fstream>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_set>

namespace ncache {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kOnlineFile = "online.jsonl";
constexpr const char* kTestFile = "test.jsonl";

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ValidationError(where + ": " + what);
}

VectorXd parse_vector(const nlohmann::json& j, const char* key, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) fail(where, std::string("missing key '") + key + "'");
  if (!it->is_array()) fail(where, std::string("'") + key + "' must be an array of numbers");
  VectorXd v(static_cast<Eigen::Index>(it->size()));
  for (std::size_t i = 0; i < it->size(); ++i) {
    const auto& x = (*it)[i];
    if (!x.is_number()) fail(where, std::string("'") + key + "' must be an array of numbers");
    v(static_cast<Eigen::Index>(i)) = x.get<double>();
  }
  return v;
}

Instance parse_instance(const nlohmann::json& j, const std::string& where) {
  static const std::set<std::string> kKeys{"id", "text", "features", "embedding", "gold", "teacher_logprobs"};
  if (!j.is_object()) fail(where, "expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.contains(key)) fail(where, "unknown key '" + key + "'");
  }
  Instance inst;
  const auto id = j.find("id");
  if (id == j.end() || !id->is_string()) fail(where, "'id' must be a string");
  inst.id = id->get<std::string>();
  if (const auto text = j.find("text"); text != j.end() && !text->is_null()) {
    if (!text->is_string()) fail(where, "'text' must be a string or null");
    inst.text = text->get<std::string>();
  }
  inst.features = parse_vector(j, "features", where);
  inst.embedding = parse_vector(j, "embedding", where);
  const auto gold = j.find("gold");
  if (gold == j.end() || !gold->is_number_integer()) fail(where, "'gold' must be an integer");
  inst.gold = ClassLabel{gold->get<int>()};
  inst.teacher.logprobs = parse_vector(j, "teacher_logprobs", where);
  return inst;
}

void validate_instance(const Instance& inst, const Manifest& m, const std::string& where) {
  const auto k = static_cast<Eigen::Index>(m.class_names.size());
  const std::string who = where + ": instance '" + inst.id + "'";
  if (inst.id.empty()) fail(where, "empty id");
  if (inst.features.size() != m.feature_dim) {
    fail(who, "dimension mismatch: features has " + std::to_string(inst.features.size()) + " values, expected " +
                  std::to_string(m.feature_dim));
  }
  if (inst.embedding.size() != m.embedding_dim) {
    fail(who, "dimension mismatch: embedding has " + std::to_string(inst.embedding.size()) + " values, expected " +
                  std::to_string(m.embedding_dim));
  }
  if (!inst.features.allFinite() || !inst.embedding.allFinite()) fail(who, "non-finite feature or embedding value");
  if (!(inst.embedding.norm() > 0.0)) fail(who, "embedding has zero norm");
  if (inst.gold.index < 0 || inst.gold.index >= k) {
    fail(who, "gold: unknown class " + std::to_string(inst.gold.index) + " (K=" + std::to_string(k) + ")");
  }
  if (inst.teacher.logprobs.size() != k) {
    fail(who, "teacher_logprobs has " + std::to_string(inst.teacher.logprobs.size()) + " values, expected K=" +
                  std::to_string(k));
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    const double v = inst.teacher.logprobs(i);
    if (!std::isfinite(v) || v > 0.0) fail(who, "teacher_logprobs: values must be finite and <= 0");
  }
}

Manifest parse_manifest(const std::filesystem::path& path) {
  const std::string raw = read_file(path);
  const std::string where = path.string();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error& e) {
    fail(where + ":" + std::to_string(line_of_offset(raw, e.byte)), std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) fail(where, "manifest must be a JSON object");
  Manifest m;
  try {
    m.name = j.at("name").get<std::string>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.feature_dim = j.at("feature_dim").get<Eigen::Index>();
    m.embedding_dim = j.at("embedding_dim").get<Eigen::Index>();
    const auto& counts = j.at("counts");
    m.counts.online = counts.at("online").get<std::size_t>();
    m.counts.test = counts.at("test").get<std::size_t>();
    if (const auto s = j.find("split_ids"); s != j.end() && !s->is_null()) {
      m.split_ids.emplace(s->at("online").get<std::vector<std::string>>(),
                          s->at("test").get<std::vector<std::string>>());
    }
  } catch (const nlohmann::json::exception& e) {
    fail(where, std::string("invalid manifest: ") + e.what());
  }
  for (const auto& [key, value] : j.items()) {
    static const std::set<std::string> kKnown{"name",   "class_names", "feature_dim", "embedding_dim",
                                              "counts", "split_ids"};
    if (!kKnown.contains(key)) m.extra[key] = value;
  }
  return m;
}

void validate_manifest(const Manifest& m, const std::string& where) {
  if (m.class_names.size() < 2) fail(where, "need at least two classes");
  std::set<std::string> names(m.class_names.begin(), m.class_names.end());
  if (names.size() != m.class_names.size()) fail(where, "duplicate class name");
  if (m.feature_dim < 1) fail(where, "feature_dim must be >= 1");
  if (m.embedding_dim < 1) fail(where, "embedding_dim must be >= 1");
}

std::vector<Instance> load_jsonl(const std::filesystem::path& path, const Manifest& m) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path.string(), "cannot open");
  std::vector<Instance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(where, std::string("malformed line: ") + e.what());
    }
    Instance inst = parse_instance(j, where);
    validate_instance(inst, m, where);
    out.push_back(std::move(inst));
  }
  return out;
}

void check_unique_and_split(const Dataset& d, const std::string& where) {
  std::unordered_set<std::string> seen;
  for (const auto* part : {&d.online, &d.test}) {
    for (const auto& inst : *part) {
      if (!seen.insert(inst.id).second) fail(where, "duplicate id '" + inst.id + "'");
    }
  }
  if (d.manifest.counts.online != d.online.size() || d.manifest.counts.test != d.test.size()) {
    fail(where, "manifest counts (" + std::to_string(d.manifest.counts.online) + "/" +
                    std::to_string(d.manifest.counts.test) + ") do not match files (" +
                    std::to_string(d.online.size()) + "/" + std::to_string(d.test.size()) + ")");
  }
  if (d.manifest.split_ids) {
    const auto ids = [](const std::vector<Instance>& v) {
      std::vector<std::string> out;
      for (const auto& i : v) out.push_back(i.id);
      std::sort(out.begin(), out.end());
      return out;
    };
    auto online = d.manifest.split_ids->first;
    auto test = d.manifest.split_ids->second;
    std::sort(online.begin(), online.end());
    std::sort(test.begin(), test.end());
    if (online != ids(d.online) || test != ids(d.test)) fail(where, "files disagree with manifest split_ids");
  }
}

ordered_json vector_json(const VectorXd& v) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

std::string jsonl(const std::vector<Instance>& instances) {
  std::string out;
  for (const auto& inst : instances) {
    out += instance_to_json(inst).dump();
    out += '\n';
  }
  return out;
}

}  // namespace

nlohmann::ordered_json instance_to_json(const Instance& inst) {
  ordered_json j;
  j["id"] = inst.id;
  j["text"] = inst.text ? ordered_json(*inst.text) : ordered_json(nullptr);
  j["features"] = vector_json(inst.features);
  j["embedding"] = vector_json(inst.embedding);
  j["gold"] = inst.gold.index;
  j["teacher_logprobs"] = vector_json(inst.teacher.logprobs);
  return j;
}

std::string manifest_to_string(const Manifest& m) {
  ordered_json j;
  j["name"] = m.name;
  j["class_names"] = m.class_names;
  j["feature_dim"] = m.feature_dim;
  j["embedding_dim"] = m.embedding_dim;
  j["counts"] = {{"online", m.counts.online}, {"test", m.counts.test}};
  if (m.split_ids) j["split_ids"] = {{"online", m.split_ids->first}, {"test", m.split_ids->second}};
  for (const auto& [key, value] : m.extra.items()) j[key] = ordered_json::parse(value.dump());
  return j.dump(2) + "\n";
}

void validate(const Dataset& d) {
  const std::string where = d.manifest.name.empty() ? "<dataset>" : d.manifest.name;
  validate_manifest(d.manifest, where);
  for (const auto* part : {&d.online, &d.test}) {
    for (const auto& inst : *part) validate_instance(inst, d.manifest, where);
  }
  check_unique_and_split(d, where);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(dir.string(), "not a dataset directory");
  Dataset d;
  d.manifest = parse_manifest(dir / kManifestFile);
  validate_manifest(d.manifest, (dir / kManifestFile).string());
  d.online = load_jsonl(dir / kOnlineFile, d.manifest);
  d.test = load_jsonl(dir / kTestFile, d.manifest);
  check_unique_and_split(d, dir.string());
  return d;
}

void save_dataset(const Dataset& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / kOnlineFile, jsonl(d.online));
  write_file_atomic(dir / kTestFile, jsonl(d.test));
  write_file_atomic(dir / kManifestFile, manifest_to_string(d.manifest));
}

std::pair<std::vector<Instance>, std::vector<Instance>> split_online_test(std::span<const Instance> instances,
                                                                          std::size_t online_count,
                                                                          std::uint64_t seed) {
  if (instances.empty()) throw ValidationError("split_online_test: empty instance list");
  if (online_count > instances.size()) throw ValidationError("split_online_test: online count exceeds total");
  Rng rng(seed);
  auto perm = random_permutation(instances.size(), rng);
  std::sort(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(online_count));
  std::sort(perm.begin() + static_cast<std::ptrdiff_t>(online_count), perm.end());
  std::vector<Instance> online;
  std::vector<Instance> test;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    (i < online_count ? online : test).push_back(instances[perm[i]]);
  }
  return {std::move(online), std::move(test)};
}

std::pair<std::vector<Instance>, std::vector<Instance>> split_online_test(std::span<const Instance> instances,
                                                                          double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("split_online_test: ratio must lie in (0, 1)");
  const auto count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(instances.size())));
  return split_online_test(instances, count, seed);
}

StreamOrder make_stream(const Dataset& dataset, std::uint64_t seed) {
  if (dataset.online.empty()) throw ValidationError("make_stream: online portion is empty");
  Rng rng(seed);
  return StreamOrder{seed, random_permutation(dataset.online.size(), rng)};
}

DatasetStats instance_stats(std::span<const Instance> instances, int num_classes) {
  DatasetStats s;
  s.instances = instances.size();
  s.gold_counts.assign(static_cast<std::size_t>(num_classes), 0);
  s.teacher_counts.assign(static_cast<std::size_t>(num_classes), 0);
  if (instances.empty()) return s;
  std::size_t correct = 0;
  std::size_t wrong = 0;
  double margin_sum = 0.0;
  double wrong_margin_sum = 0.0;
  for (const auto& inst : instances) {
    const double m = margin(inst.teacher.logprobs);
    const ClassLabel t = inst.teacher.label();
    margin_sum += m;
    ++s.gold_counts[static_cast<std::size_t>(inst.gold.index)];
    ++s.teacher_counts[static_cast<std::size_t>(t.index)];
    if (t == inst.gold) {
      ++correct;
    } else {
      ++wrong;
      wrong_margin_sum += m;
    }
  }
  const auto n = static_cast<double>(instances.size());
  s.teacher_accuracy = static_cast<double>(correct) / n;
  s.avg_margin = margin_sum / n;
  if (wrong > 0) s.avg_margin_when_wrong = wrong_margin_sum / static_cast<double>(wrong);
  return s;
}

DatasetStats dataset_stats(const Dataset& dataset) {
  std::vector<Instance> all;
  all.reserve(dataset.online.size() + dataset.test.size());
  all.insert(all.end(), dataset.online.begin(), dataset.online.end());
  all.insert(all.end(), dataset.test.begin(), dataset.test.end());
  return instance_stats(all, dataset.num_classes());
}

nlohmann::json stats_to_json(const DatasetStats& s, const std::vector<std::string>& class_names) {
  nlohmann::json j;
  j["instances"] = s.instances;
  j["teacher_accuracy"] = s.teacher_accuracy;
  j["avg_margin"] = s.avg_margin;
  j["avg_margin_when_wrong"] = s.avg_margin_when_wrong ? nlohmann::json(*s.avg_margin_when_wrong) : nlohmann::json();
  nlohmann::json per_class = nlohmann::json::object();
  for (std::size_t k = 0; k < class_names.size(); ++k) {
    per_class[class_names[k]] = {{"gold", s.gold_counts[k]}, {"teacher", s.teacher_counts[k]}};
  }
  j["per_class"] = per_class;
  return j;
}

}  // namespace ncache
