#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace s2r {

/// Error categories shared by every module. The CLI maps them onto exit codes.
enum class ErrorKind {
  UnknownId,
  ArityError,
  Infeasible,
  CyclicReference,
  InvalidArgument,
  SingularCovariance,
  DimensionMismatch,
  EmptySurface,
  JointLimit,
  Unreachable,
  CollisionError,
  PerturbInfeasible,
  CannotPerturbAttached,
  TargetMissing,
  PlanFailure,
  GraspFailure,
  ContractError,
  ParseError,
  ChecksumMismatch,
  IoError,
  EmptyDomain,
  EmptyLogs,
  EmptyDataset,
};

std::string_view error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void raise(ErrorKind kind, const std::string& what);

/// Seeded generator with platform-independent draws (the standard
/// distributions are implementation-defined, which breaks byte-identical output).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }
  double sign() { return (engine_() >> 63) ? 1.0 : -1.0; }

 private:
  std::mt19937_64 engine_;
};

/// Derives an independent stream seed (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream);

/// Runs body(i) for i in [0, n) on up to `jobs` threads. Each index is
/// processed exactly once; callers write to disjoint slots.
void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& body);

unsigned default_jobs();

std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

/// Shortest text that parses back to the same double.
std::string fmt_double(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

std::vector<std::string> split_ws(std::string_view line);
std::string trim(std::string_view s);
double parse_double(std::string_view token, const std::string& context);
long long parse_int(std::string_view token, const std::string& context);

constexpr double kPi = 3.14159265358979323846;
inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }
/// Wraps an angle to [-pi, pi).
double wrap_angle(double a);

}  // namespace s2r
