#pragma once

#include <stdexcept>
#include <string>

namespace subheat {

/// Raised when an operation's precondition or input contract is violated.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw Error(what);
}

}  // namespace subheat
