#include "uqfuse/error.hpp"

#include <utility>

namespace uqfuse {

Error::Error(ErrorKind kind, const std::string& what, std::string path, long line)
    : std::runtime_error(what), kind_(kind), path_(std::move(path)), line_(line) {}

void throw_invalid(const std::string& what) { throw Error(ErrorKind::InvalidArgument, what); }

void throw_compute(const std::string& what) { throw Error(ErrorKind::Compute, what); }

}  // namespace uqfuse
