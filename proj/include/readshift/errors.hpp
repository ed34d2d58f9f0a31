#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace readshift {

// Error taxonomy mirrors the CLI exit codes: config 2, horizon 3,
// certificate 4, witness 5. Anything else is a programming error and
// surfaces as an assertion, not an exception.
class error : public std::runtime_error {
public:
  error(int exit_code, std::string msg)
      : std::runtime_error(std::move(msg)), code_(exit_code) {}

  int exit_code() const noexcept { return code_; }

private:
  int code_;
};

// Bad input: malformed config or state file, unsupported mode/space
// combination, unparsable vector literal.
class config_error : public error {
public:
  explicit config_error(std::string msg) : error(2, std::move(msg)) {}
};

// The request is well formed but needs a longer construction horizon (or a
// bigger resource cap) than the current state or limits allow.
class horizon_error : public error {
public:
  explicit horizon_error(std::string msg) : error(3, std::move(msg)) {}
};

// A certified condition failed re-verification.
class certificate_error : public error {
public:
  explicit certificate_error(std::string msg) : error(4, std::move(msg)) {}
};

// A witness file failed replay.
class witness_error : public error {
public:
  explicit witness_error(std::string msg) : error(5, std::move(msg)) {}
};

} // namespace readshift
