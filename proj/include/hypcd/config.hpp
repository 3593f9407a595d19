#pragma once

// Training configuration. Values resolve in three layers: dataset profile
// defaults, then keys from a JSON document, then explicit overrides.

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hypcd {

enum class Method { gcd, simgcd, selex };
enum class Space { euclidean, hyperbolic };
enum class Profile { fine_grained, generic };

std::string to_string(Method m);
std::string to_string(Space s);
std::string to_string(Profile p);
/// Throw ConfigError on unknown names.
Method parse_method(const std::string& s);
Space parse_space(const std::string& s);
Profile parse_profile(const std::string& s);

struct TrainConfig {
  Method method = Method::simgcd;
  Space space = Space::hyperbolic;
  Profile profile = Profile::fine_grained;

  double curvature = 0.05;
  double clip = 2.3;
  double alpha_d_max = 1.0;
  double lambda_b = 0.35;
  double tau_unsup = 1.0;
  double tau_sup = 0.07;
  double tau_student = 0.1;
  double tau_teacher = 0.07;
  double entropy_weight = 1.0;
  double selex_alpha = 1.0;
  double tau_pair = 0.1;
  bool agreement_targets = false;

  int epochs = 200;
  int batch_size = 128;
  double lr = 0.1;
  double min_lr = 0.001;
  double momentum = 0.9;
  double hyp_lr = 0.01;

  int hidden_dim = 256;
  int feature_dim = 128;
  int proj_hidden_dim = 256;
  int proj_dim = 256;

  double jitter = 0.1;   // Gaussian jitter, as a fraction of the global feature std
  double dropout = 0.1;  // coordinate dropout probability
  int kmeans_iters = 100;
  std::uint64_t seed = 0;

  /// Throws ConfigError when a field is out of its valid range.
  void validate() const;
};

/// Defaults for a profile: c, r, alpha_d_max and selex_alpha differ.
TrainConfig profile_defaults(Profile p);

nlohmann::json to_json(const TrainConfig& cfg);

/// Every config key, sorted.
std::vector<std::string> config_keys();

/// Applies the keys of `j` onto `cfg`. Unknown keys and wrongly typed values
/// raise ConfigError. A "profile" key is ignored here; see resolve_config.
void apply_json(TrainConfig& cfg, const nlohmann::json& j);

/// Profile defaults (profile from `profile_override`, else the document,
/// else fine_grained), then document keys. Validation is left to the caller
/// so flag overrides can be applied first.
TrainConfig resolve_config(const nlohmann::json& doc, std::optional<Profile> profile_override);

/// Reads a JSON document; ConfigError on IO or parse failure.
nlohmann::json read_config_file(const std::string& path);

}  // namespace hypcd
