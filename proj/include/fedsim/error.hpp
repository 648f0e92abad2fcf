#pragma once

#include <stdexcept>
#include <string>

namespace fedsim {

enum class ErrorCode {
    invalid_argument = 1,
    format = 2,
    io = 3,
    numeric = 4,
    exists = 5,
    internal = 6,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

inline void require(bool ok, ErrorCode code, const std::string& what) {
    if (!ok) raise(code, what);
}

}  // namespace fedsim
