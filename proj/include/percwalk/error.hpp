#pragma once

#include <stdexcept>
#include <string>

namespace percwalk {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A transition table puts mass on a closed direction, or none on an open one.
class SupportViolation : public Error {
 public:
  using Error::Error;
};

/// A pair measure whose two marginals differ.
class NotInStarSet : public Error {
 public:
  using Error::Error;
};

/// A (kernel, density) pair whose density is not invariant for the kernel.
class NotInvariant : public Error {
 public:
  using Error::Error;
};

/// An edge field whose path sums depend on the path.
class NotAGradient : public Error {
 public:
  using Error::Error;
};

/// No return to the giant cluster along a lattice axis.
class NoReturn : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

/// A grid-restricted Legendre transform attained its sup on the grid boundary.
class GridTooSmall : public Error {
 public:
  using Error::Error;
};

class EmptyPath : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment configuration; path() is a JSON pointer to the field.
class SchemaError : public Error {
 public:
  SchemaError(std::string path, const std::string& message)
      : Error((path.empty() ? std::string("/") : path) + ": " + message), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// A pipeline stage failed; wraps the underlying module error.
class PipelineError : public Error {
 public:
  PipelineError(std::string stage, const std::string& message)
      : Error("stage '" + stage + "' failed: " + message), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// A manifest references an output that is absent or altered.
class MissingArtifact : public Error {
 public:
  using Error::Error;
};

namespace detail {
inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}
}  // namespace detail

}  // namespace percwalk
