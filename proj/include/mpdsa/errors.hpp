#pragma once

#include <stdexcept>
#include <string>

namespace mpdsa {

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct MissingDataError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

struct GeometryError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NoDecompositionError : std::domain_error {
  using std::domain_error::domain_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown when E lies too close to the spectrum for the resolvent to be evaluated.
class ResonanceError : public std::runtime_error {
 public:
  ResonanceError(const std::string& what, double distance)
      : std::runtime_error(what), distance_(distance) {}
  double distance() const noexcept { return distance_; }

 private:
  double distance_;
};

}  // namespace mpdsa
