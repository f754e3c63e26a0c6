#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace pheno {

// Single exception type for contract violations and unreadable inputs.
// Recoverable per-row problems are reported as data, not thrown.
class Error : public std::runtime_error {
public:
    explicit Error(std::string msg) : std::runtime_error(std::move(msg)) {}
};

template <typename... Args>
[[noreturn]] void fail(Args&&... args) {
    std::ostringstream os;
    (os << ... << args);
    throw Error(os.str());
}

template <typename... Args>
void require(bool cond, Args&&... args) {
    if (!cond) fail(std::forward<Args>(args)...);
}

}  // namespace pheno
