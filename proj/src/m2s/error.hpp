#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace m2s {

enum class ErrorKind {
  Dimension,
  InvalidKernel,
  Contract,
  Config,
  Data,
  Format,
  Io,
  Numeric,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

namespace detail {
template <typename... Args>
[[noreturn]] void raise(ErrorKind kind, const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  throw Error(kind, os.str());
}
}  // namespace detail

#define M2S_THROW(kind, ...) ::m2s::detail::raise(::m2s::ErrorKind::kind, __VA_ARGS__)
#define M2S_CHECK(cond, kind, ...) \
  do {                             \
    if (!(cond)) M2S_THROW(kind, __VA_ARGS__); \
  } while (0)

}  // namespace m2s
