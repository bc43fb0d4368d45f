#pragma once

#include <stdexcept>
#include <string>

namespace psm {

/// Broad failure classes; the CLI maps these onto exit codes.
enum class ErrorKind { Config, Numerical, Io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& msg)
      : Error(ErrorKind::Config, "config error at '" + field + "': " + msg), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class MissingArtifact : public Error {
 public:
  explicit MissingArtifact(const std::string& path)
      : Error(ErrorKind::Config, "missing upstream artifact: " + path), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class PlacementFailure : public Error {
 public:
  PlacementFailure(std::size_t placed, std::size_t requested, double achieved_vf)
      : Error(ErrorKind::Numerical, "particle placement failed after placing " + std::to_string(placed) + " of " +
                                        std::to_string(requested) + " particles (achieved vf " +
                                        std::to_string(achieved_vf) + ")"),
        achieved_volume_fraction(achieved_vf) {}
  double achieved_volume_fraction;
};

struct EmptyDomain : Error {
  EmptyDomain() : Error(ErrorKind::Config, "no nodes remain in the discretized domain") {}
};

struct PoissonMismatch : Error {
  PoissonMismatch(double nu, double expected)
      : Error(ErrorKind::Config, "Poisson ratio " + std::to_string(nu) + " is not representable by bond-based PD (expected " +
                                     std::to_string(expected) + ")") {}
};

struct SingularSystem : Error {
  explicit SingularSystem(const std::string& msg) : Error(ErrorKind::Numerical, "singular system: " + msg) {}
};

struct DegenerateEnergy : Error {
  explicit DegenerateEnergy(const std::string& msg) : Error(ErrorKind::Numerical, "degenerate PD energy: " + msg) {}
};

struct NonConvergence : Error {
  explicit NonConvergence(const std::string& msg) : Error(ErrorKind::Numerical, "no convergence: " + msg) {}
};

struct NoFailure : Error {
  explicit NoFailure(const std::string& msg) : Error(ErrorKind::Numerical, "RVE did not fail: " + msg) {}
};

}  // namespace psm
