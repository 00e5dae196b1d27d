#pragma once

#include "ncache/dataset.hpp"
#include "ncache/synth.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace testing {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(NCACHE_FIXTURES) / name; }

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ncache-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

inline ncache::Instance make_instance(std::string id, ncache::VectorXd features, int gold, ncache::VectorXd teacher,
                                      ncache::VectorXd embedding = ncache::VectorXd()) {
  ncache::Instance inst;
  inst.id = std::move(id);
  inst.features = std::move(features);
  inst.embedding = embedding.size() ? std::move(embedding) : ncache::VectorXd::Ones(2);
  inst.gold = ncache::ClassLabel{gold};
  inst.teacher.logprobs = std::move(teacher);
  return inst;
}

inline ncache::Dataset small_synthetic(std::size_t online = 600, std::size_t test = 200, int k = 3,
                                       double teacher_accuracy = 0.9, std::uint64_t seed = 11) {
  ncache::SyntheticSpec s;
  s.num_classes = k;
  s.online_count = online;
  s.test_count = test;
  s.teacher_accuracy = teacher_accuracy;
  s.seed = seed;
  return ncache::generate_synthetic(s);
}

}  // namespace testing
