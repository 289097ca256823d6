#pragma once

#include <stdexcept>
#include <string>

namespace pointmtl {

// Error taxonomy maps onto CLI exit codes: validation/config/dimension/state/parse -> 1,
// numeric -> 2, io -> 3.
enum class ErrorKind {
    Validation,
    Config,
    Dimension,
    State,
    Parse,
    Numeric,
    Io,
};

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

    int exit_code() const {
        switch (kind_) {
            case ErrorKind::Numeric: return 2;
            case ErrorKind::Io: return 3;
            default: return 1;
        }
    }

  private:
    ErrorKind kind_;
};

[[noreturn]] inline void throw_validation(const std::string& msg) { throw Error(ErrorKind::Validation, msg); }
[[noreturn]] inline void throw_config(const std::string& msg) { throw Error(ErrorKind::Config, msg); }
[[noreturn]] inline void throw_dimension(const std::string& msg) { throw Error(ErrorKind::Dimension, msg); }
[[noreturn]] inline void throw_state(const std::string& msg) { throw Error(ErrorKind::State, msg); }
[[noreturn]] inline void throw_parse(const std::string& msg) { throw Error(ErrorKind::Parse, msg); }
[[noreturn]] inline void throw_numeric(const std::string& msg) { throw Error(ErrorKind::Numeric, msg); }
[[noreturn]] inline void throw_io(const std::string& msg) { throw Error(ErrorKind::Io, msg); }

}  // namespace pointmtl
