#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

namespace rtfm::cli {

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "size_t keys are bound as uint64");

// Binds every configuration key to both a `--key` flag and a key in the
// JSON config file. Flags win over the file; unknown file keys are errors.
class Options {
 public:
  using Target = std::variant<std::uint64_t*, double*, std::string*,
                              std::vector<double>*, std::vector<std::size_t>*>;

  explicit Options(CLI::App& app) : app_(app) {}

  void add(const std::string& key, Target target, const std::string& help);

  // Loads the JSON object at `path` for every key not given on the command line.
  void apply_config(const std::filesystem::path& path);

  nlohmann::json snapshot() const;

 private:
  struct Param {
    std::string key;
    Target target;
    CLI::Option* option = nullptr;
  };
  CLI::App& app_;
  std::vector<Param> params_;
};

void write_json(const std::filesystem::path& path, const nlohmann::json& value);

}  // namespace rtfm::cli
