#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace sfd {

// Error taxonomy. Every failure mode maps to one of these so callers can
// distinguish usage errors (config, dimension) from runtime faults (numeric, io).
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimError : Error {
    using Error::Error;
};  // shape / extent mismatch
struct ContractError : Error {
    using Error::Error;
};  // precondition violated
struct NumericError : Error {
    using Error::Error;
};  // NaN / Inf produced
struct ConfigError : Error {
    using Error::Error;
};  // bad config key or value
struct ParseError : Error {
    using Error::Error;
};  // malformed file content
struct IoError : Error {
    using Error::Error;
};  // filesystem failure
struct TokenError : Error {
    using Error::Error;
};  // word not in vocabulary
struct TrainError : Error {
    using Error::Error;
};  // training did not reach contract
struct GenError : Error {
    using Error::Error;
};  // scene generation gave up

namespace detail {
inline void cat_into(std::ostringstream&) {}
template <class A, class... Rest>
void cat_into(std::ostringstream& os, const A& a, const Rest&... rest) {
    os << a;
    cat_into(os, rest...);
}
}  // namespace detail

// cat("shape ", 3, " vs ", 4) -> "shape 3 vs 4"
template <class... Args>
std::string cat(const Args&... args) {
    std::ostringstream os;
    detail::cat_into(os, args...);
    return os.str();
}

}  // namespace sfd
