#include "options.hpp"

#include <fstream>

#include "rtfm/errors.hpp"

namespace rtfm::cli {

void Options::add(const std::string& key, Target target, const std::string& help) {
  CLI::Option* opt = std::visit(
      [&](auto* ptr) -> CLI::Option* {
        using T = std::remove_pointer_t<decltype(ptr)>;
        auto* o = app_.add_option("--" + key, *ptr, help);
        if constexpr (std::is_same_v<T, std::vector<double>> ||
                      std::is_same_v<T, std::vector<std::size_t>>) {
          o->delimiter(',');
        }
        o->capture_default_str();
        return o;
      },
      target);
  params_.push_back({key, target, opt});
}

namespace {

template <class T>
T json_as(const nlohmann::json& j, const std::string& key) {
  if constexpr (std::is_same_v<T, std::string>) {
    if (!j.is_string()) throw ValidationError("config key '" + key + "' must be a string");
    return j.get<std::string>();
  } else if constexpr (std::is_same_v<T, double>) {
    if (!j.is_number()) throw ValidationError("config key '" + key + "' must be a number");
    return j.get<double>();
  } else {
    if (!j.is_number_unsigned()) {
      throw ValidationError("config key '" + key + "' must be a non-negative integer");
    }
    return j.get<T>();
  }
}

template <class T>
void assign(T* target, const nlohmann::json& j, const std::string& key) {
  *target = json_as<T>(j, key);
}

template <class T>
void assign(std::vector<T>* target, const nlohmann::json& j, const std::string& key) {
  if (!j.is_array()) throw ValidationError("config key '" + key + "' must be an array");
  target->clear();
  for (const auto& e : j) target->push_back(json_as<T>(e, key));
}

}  // namespace

void Options::apply_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ValidationError("config " + path.string() + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    auto it = std::find_if(params_.begin(), params_.end(),
                           [&](const Param& p) { return p.key == key; });
    if (it == params_.end()) {
      throw ValidationError("unknown config key '" + key + "' for command '" + app_.get_name() +
                            "'");
    }
    if (it->option->count() > 0) continue;
    std::visit([&](auto* ptr) { assign(ptr, value, key); }, it->target);
  }
}

nlohmann::json Options::snapshot() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& p : params_) {
    std::visit([&](auto* ptr) { j[p.key] = *ptr; }, p.target);
  }
  return j;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& value) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << value.dump(2) << '\n';
  if (!out) throw ValidationError("write failed for " + path.string());
}

}  // namespace rtfm::cli
