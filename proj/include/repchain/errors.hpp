#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace repchain {

/// Bad input: out-of-range parameters, malformed configs, mismatched shapes.
class validation_error : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Protocol text that does not parse. `position` is the 0-based offset of the
/// offending character.
class parse_error : public validation_error {
public:
  parse_error(const std::string& what, std::size_t position)
      : validation_error(what + " at position " + std::to_string(position)),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

private:
  std::size_t position_;
};

/// The coverage target could not be met before the horizon exceeded t_cap.
class truncation_cap_exceeded : public std::runtime_error {
public:
  truncation_cap_exceeded(double achieved_coverage, std::int64_t last_t_trunc,
                          std::int64_t t_cap)
      : std::runtime_error("truncation cap exceeded: coverage " +
                           std::to_string(achieved_coverage) + " at t_trunc " +
                           std::to_string(last_t_trunc) + " (t_cap " +
                           std::to_string(t_cap) + ")"),
        coverage_(achieved_coverage),
        t_trunc_(last_t_trunc) {}

  double achieved_coverage() const noexcept { return coverage_; }
  std::int64_t last_t_trunc() const noexcept { return t_trunc_; }

private:
  double coverage_;
  std::int64_t t_trunc_;
};

/// Brute-force enumeration refused because the space is too large.
class space_too_large : public std::runtime_error {
public:
  space_too_large(const std::string& cardinality, const std::string& limit)
      : std::runtime_error("protocol space of cardinality " + cardinality +
                           " exceeds the enumeration limit " + limit),
        cardinality_(cardinality) {}

  const std::string& cardinality() const noexcept { return cardinality_; }

private:
  std::string cardinality_;
};

}  // namespace repchain
