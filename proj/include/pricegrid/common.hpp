#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pricegrid {

// Error hierarchy. The CLI maps each family onto a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or precondition on user-supplied parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input header/document is missing required fields.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A domain lookup (printer model, category) failed.
class LookupError : public Error {
 public:
  explicit LookupError(std::string key, const std::string& what)
      : Error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// The data cannot satisfy an algorithm's precondition (too few points, degenerate bins, ...).
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// Artifacts were produced under different feature schemas.
class FingerprintMismatch : public Error {
 public:
  FingerprintMismatch(std::string expected, std::string actual)
      : Error("schema fingerprint mismatch: expected " + expected + ", found " + actual),
        expected_(std::move(expected)),
        actual_(std::move(actual)) {}
  const std::string& expected() const noexcept { return expected_; }
  const std::string& actual() const noexcept { return actual_; }

 private:
  std::string expected_;
  std::string actual_;
};

enum class Region { US, EU };

std::string_view to_string(Region r);
Region region_from_string(std::string_view s);

/// Non-fatal note attached to a result (dropped column, clamped value, skipped pair, ...).
struct Diagnostic {
  std::string where;
  std::string message;
};

/// Dense row-major matrix of encoded feature rows.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  explicit FeatureMatrix(std::size_t cols) : cols_(cols) {}
  FeatureMatrix(std::size_t cols, std::vector<double> values);

  std::size_t rows() const noexcept { return cols_ == 0 ? 0 : values_.size() / cols_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return values_.empty(); }

  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * cols_, cols_};
  }
  std::span<double> row(std::size_t i) { return {values_.data() + i * cols_, cols_}; }

  void push_back(std::span<const double> row);
  FeatureMatrix select(std::span<const std::size_t> indices) const;

  const std::vector<double>& values() const noexcept { return values_; }

  bool operator==(const FeatureMatrix&) const = default;

 private:
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// Stable mixing of a base seed with a stream index (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results must be written by index;
/// the first exception (by index) is rethrown after all workers join.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

/// Quantile of an ascending sample by linear interpolation between the order statistics
/// bracketing position (n-1)p.
double quantile_sorted(std::span<const double> sorted, double p);

/// Lowercase + trim ASCII whitespace.
std::string normalize_key(std::string_view s);

/// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

}  // namespace pricegrid
