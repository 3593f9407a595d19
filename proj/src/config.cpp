#include "hypcd/config.hpp"

#include "hypcd/errors.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>

namespace hypcd {

using nlohmann::json;

std::string to_string(Method m) {
  switch (m) {
    case Method::gcd: return "gcd";
    case Method::simgcd: return "simgcd";
    case Method::selex: return "selex";
  }
  return "?";
}

std::string to_string(Space s) { return s == Space::euclidean ? "euclidean" : "hyperbolic"; }
std::string to_string(Profile p) { return p == Profile::fine_grained ? "fine_grained" : "generic"; }

Method parse_method(const std::string& s) {
  if (s == "gcd") return Method::gcd;
  if (s == "simgcd") return Method::simgcd;
  if (s == "selex") return Method::selex;
  throw ConfigError("unknown method '" + s + "' (expected gcd, simgcd or selex)");
}

Space parse_space(const std::string& s) {
  if (s == "euclidean") return Space::euclidean;
  if (s == "hyperbolic") return Space::hyperbolic;
  throw ConfigError("unknown space '" + s + "' (expected euclidean or hyperbolic)");
}

Profile parse_profile(const std::string& s) {
  if (s == "fine_grained") return Profile::fine_grained;
  if (s == "generic") return Profile::generic;
  throw ConfigError("unknown profile '" + s + "' (expected fine_grained or generic)");
}

TrainConfig profile_defaults(Profile p) {
  TrainConfig c;
  c.profile = p;
  if (p == Profile::generic) {
    c.curvature = 0.01;
    c.clip = 1.0;
    c.alpha_d_max = 0.5;
    c.selex_alpha = 0.1;
  }
  return c;
}

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

bool positive(double v) { return std::isfinite(v) && v > 0.0; }
bool unit(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

// One entry per JSON key: reader and writer for the matching field.
struct Field {
  std::function<void(TrainConfig&, const json&)> read;
  std::function<json(const TrainConfig&)> write;
};

template <class T>
Field member(T TrainConfig::*ptr) {
  return {[ptr](TrainConfig& c, const json& v) { c.*ptr = v.get<T>(); },
          [ptr](const TrainConfig& c) { return json(c.*ptr); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> f = {
      {"method", {[](TrainConfig& c, const json& v) { c.method = parse_method(v.get<std::string>()); },
                  [](const TrainConfig& c) { return json(to_string(c.method)); }}},
      {"space", {[](TrainConfig& c, const json& v) { c.space = parse_space(v.get<std::string>()); },
                 [](const TrainConfig& c) { return json(to_string(c.space)); }}},
      {"profile", {[](TrainConfig&, const json&) {}, [](const TrainConfig& c) { return json(to_string(c.profile)); }}},
      {"curvature", member(&TrainConfig::curvature)},
      {"clip", member(&TrainConfig::clip)},
      {"alpha_d_max", member(&TrainConfig::alpha_d_max)},
      {"lambda_b", member(&TrainConfig::lambda_b)},
      {"tau_unsup", member(&TrainConfig::tau_unsup)},
      {"tau_sup", member(&TrainConfig::tau_sup)},
      {"tau_student", member(&TrainConfig::tau_student)},
      {"tau_teacher", member(&TrainConfig::tau_teacher)},
      {"entropy_weight", member(&TrainConfig::entropy_weight)},
      {"selex_alpha", member(&TrainConfig::selex_alpha)},
      {"tau_pair", member(&TrainConfig::tau_pair)},
      {"agreement_targets", member(&TrainConfig::agreement_targets)},
      {"epochs", member(&TrainConfig::epochs)},
      {"batch_size", member(&TrainConfig::batch_size)},
      {"lr", member(&TrainConfig::lr)},
      {"min_lr", member(&TrainConfig::min_lr)},
      {"momentum", member(&TrainConfig::momentum)},
      {"hyp_lr", member(&TrainConfig::hyp_lr)},
      {"hidden_dim", member(&TrainConfig::hidden_dim)},
      {"feature_dim", member(&TrainConfig::feature_dim)},
      {"proj_hidden_dim", member(&TrainConfig::proj_hidden_dim)},
      {"proj_dim", member(&TrainConfig::proj_dim)},
      {"jitter", member(&TrainConfig::jitter)},
      {"dropout", member(&TrainConfig::dropout)},
      {"kmeans_iters", member(&TrainConfig::kmeans_iters)},
      {"seed", member(&TrainConfig::seed)},
  };
  return f;
}

}  // namespace

void TrainConfig::validate() const {
  require(positive(curvature), "curvature must be positive");
  require(positive(clip), "clip must be positive");
  require(unit(alpha_d_max), "alpha_d_max must lie in [0, 1]");
  require(unit(lambda_b), "lambda_b must lie in [0, 1]");
  require(positive(tau_unsup) && positive(tau_sup) && positive(tau_pair), "temperatures must be positive");
  require(positive(tau_student) && positive(tau_teacher), "temperatures must be positive");
  require(tau_teacher < tau_student, "tau_teacher must be smaller than tau_student");
  require(std::isfinite(entropy_weight) && entropy_weight >= 0.0, "entropy_weight must be non-negative");
  require(unit(selex_alpha), "selex_alpha must lie in [0, 1]");
  require(epochs >= 0, "epochs must be non-negative");
  require(batch_size >= 2, "batch_size must be at least 2");
  require(positive(lr) && positive(min_lr) && min_lr <= lr, "need 0 < min_lr <= lr");
  require(std::isfinite(momentum) && momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
  require(positive(hyp_lr), "hyp_lr must be positive");
  require(hidden_dim > 0 && feature_dim > 0 && proj_hidden_dim > 0 && proj_dim > 0, "layer widths must be positive");
  require(std::isfinite(jitter) && jitter >= 0.0, "jitter must be non-negative");
  require(std::isfinite(dropout) && dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  require(kmeans_iters >= 1, "kmeans_iters must be at least 1");
}

json to_json(const TrainConfig& cfg) {
  json j = json::object();
  for (const auto& [key, f] : fields()) j[key] = f.write(cfg);
  return j;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& kv : fields()) keys.push_back(kv.first);
  return keys;
}

void apply_json(TrainConfig& cfg, const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
    try {
      it->second.read(cfg, value);
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
}

TrainConfig resolve_config(const json& doc, std::optional<Profile> profile_override) {
  Profile p = Profile::fine_grained;
  if (profile_override) {
    p = *profile_override;
  } else if (doc.is_object() && doc.contains("profile")) {
    if (!doc["profile"].is_string()) throw ConfigError("config key 'profile' must be a string");
    p = parse_profile(doc["profile"].get<std::string>());
  }
  TrainConfig cfg = profile_defaults(p);
  if (!doc.is_null()) apply_json(cfg, doc);
  return cfg;
}

json read_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
}

}  // namespace hypcd
