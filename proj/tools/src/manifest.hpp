#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace attnflow::cli {

std::string sha256_file(const std::filesystem::path& path);

// Written next to the primary output as <output>.manifest.json.
class RunManifest {
 public:
  RunManifest(std::string command, std::vector<std::string> argv);

  void set_config(const std::string& key, nlohmann::json value);
  void set_seed(const std::string& key, std::uint64_t seed);
  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);
  void set_result(const std::string& key, nlohmann::json value);

  nlohmann::json to_json() const;
  void write(const std::filesystem::path& primary_output) const;

 private:
  std::string command_;
  std::vector<std::string> argv_;
  nlohmann::json config_ = nlohmann::json::object();
  nlohmann::json seeds_ = nlohmann::json::object();
  nlohmann::json inputs_ = nlohmann::json::array();
  nlohmann::json outputs_ = nlohmann::json::array();
  nlohmann::json results_ = nlohmann::json::object();
  std::chrono::steady_clock::time_point start_;
};

std::filesystem::path manifest_path(const std::filesystem::path& primary_output);

}  // namespace attnflow::cli
