#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "vigil/error.hpp"

namespace vigil {

/// Three-level ordinal scale; score() is strictly monotone in level.
class Severity {
 public:
  enum class Level { low = 1, medium = 2, high = 3 };

  constexpr Severity() = default;
  constexpr explicit Severity(Level level) : level_(level) {}

  [[nodiscard]] constexpr Level level() const { return level_; }
  [[nodiscard]] constexpr int score() const { return static_cast<int>(level_); }

  [[nodiscard]] std::string_view name() const {
    switch (level_) {
      case Level::low: return "low";
      case Level::medium: return "medium";
      case Level::high: return "high";
    }
    return "medium";
  }

  static std::optional<Severity> parse(std::string_view name) {
    if (name == "low") return Severity(Level::low);
    if (name == "medium") return Severity(Level::medium);
    if (name == "high") return Severity(Level::high);
    return std::nullopt;
  }

  static Severity from_name(std::string_view name) {
    if (auto s = parse(name)) return *s;
    throw Error(ErrorCode::malformed, "severity must be low|medium|high, got '" + std::string(name) + "'");
  }

  friend constexpr bool operator==(Severity, Severity) = default;
  friend constexpr auto operator<=>(Severity a, Severity b) { return a.score() <=> b.score(); }

 private:
  Level level_ = Level::medium;
};

}  // namespace vigil
