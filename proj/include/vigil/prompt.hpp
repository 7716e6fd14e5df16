#pragma once

#include <string>

#include "vigil/text.hpp"

namespace vigil {

struct DetectionPrompt {
  std::string system_text;
  std::string user_text;
  /// JSON schema the model output must follow.
  std::string output_contract;
  std::string locale = "en";
};

struct RawModelOutput {
  std::string text;
  std::string model_id;
  double elapsed_ms = 0.0;
};

/// Identity of a prompt for transcript lookup; independent of model and tier.
inline std::string request_hash(const std::string& system_text, const std::string& user_text) {
  return text::sha256_hex(system_text + "\n\n" + user_text);
}

inline std::string request_hash(const DetectionPrompt& p) { return request_hash(p.system_text, p.user_text); }

}  // namespace vigil
