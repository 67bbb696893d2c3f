#pragma once

#include <stdexcept>
#include <string>

namespace vamkit {

/// Base error for every failure raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised for I/O and on-disk format problems (missing files, short reads, bad hashes).
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace vamkit
