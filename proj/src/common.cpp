#include "s2r/common.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

namespace s2r {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnknownId: return "UnknownId";
    case ErrorKind::ArityError: return "ArityError";
    case ErrorKind::Infeasible: return "Infeasible";
    case ErrorKind::CyclicReference: return "CyclicReference";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::SingularCovariance: return "SingularCovariance";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EmptySurface: return "EmptySurface";
    case ErrorKind::JointLimit: return "JointLimit";
    case ErrorKind::Unreachable: return "Unreachable";
    case ErrorKind::CollisionError: return "CollisionError";
    case ErrorKind::PerturbInfeasible: return "PerturbInfeasible";
    case ErrorKind::CannotPerturbAttached: return "CannotPerturbAttached";
    case ErrorKind::TargetMissing: return "TargetMissing";
    case ErrorKind::PlanFailure: return "PlanFailure";
    case ErrorKind::GraspFailure: return "GraspFailure";
    case ErrorKind::ContractError: return "ContractError";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::EmptyDomain: return "EmptyDomain";
    case ErrorKind::EmptyLogs: return "EmptyLogs";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
  }
  return "Unknown";
}

void raise(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) raise(ErrorKind::InvalidArgument, "Rng::below(0)");
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % n;
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

unsigned default_jobs() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& body) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(jobs, n);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t h) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fmt_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorKind::IoError, "cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) raise(ErrorKind::IoError, "write failed for " + path);
}

std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

double parse_double(std::string_view token, const std::string& context) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size())
    raise(ErrorKind::ParseError, context + ": expected number, got '" + std::string(token) + "'");
  return v;
}

long long parse_int(std::string_view token, const std::string& context) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size())
    raise(ErrorKind::ParseError, context + ": expected integer, got '" + std::string(token) + "'");
  return v;
}

double wrap_angle(double a) {
  double w = std::fmod(a + kPi, 2.0 * kPi);
  if (w < 0) w += 2.0 * kPi;
  return w - kPi;
}

}  // namespace s2r
