#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dwellmap {

enum class ErrorCode {
  invalid_argument,
  not_found,
  order_violation,
  conflict,
  validation,
  io,
  corrupt,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure the library reports carries one of the codes above; the HTTP
/// layer and the CLI map them to status codes and exit codes respectively.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

}  // namespace dwellmap
