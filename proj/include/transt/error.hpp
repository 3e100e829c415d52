#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace transt {

// Error taxonomy. Everything user-facing derives from Error so the CLI can
// catch one type and map it to exit code 1.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor/matrix dimension mismatch.
struct ShapeError : Error {
    using Error::Error;
};

// Inconsistent model/tracker configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Precondition violation (non-scalar loss, uninitialized tracker state, ...).
struct ContractError : Error {
    using Error::Error;
};

// Degenerate caller-supplied data (zero-area box, empty image, ...).
struct InputError : Error {
    using Error::Error;
};

// File I/O and parse failures; messages carry file name and position.
struct IoError : Error {
    using Error::Error;
};

namespace detail {
inline void msg_append(std::ostringstream&) {}
template <class T, class... Rest>
void msg_append(std::ostringstream& os, const T& head, const Rest&... rest) {
    os << head;
    msg_append(os, rest...);
}
}  // namespace detail

template <class... Parts>
std::string msg(const Parts&... parts) {
    std::ostringstream os;
    detail::msg_append(os, parts...);
    return os.str();
}

}  // namespace transt
