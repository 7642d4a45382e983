#include "em2c/particle_cloud.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

#include "em2c/errors.hpp"

namespace em2c {

double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

std::vector<double> normalize_log_weights(std::span<const double> log_w) {
  const double lse = log_sum_exp(log_w);
  if (std::isnan(lse) || lse == -std::numeric_limits<double>::infinity()) {
    throw DegenerateWeightsError("all log-weights are -inf or NaN");
  }
  if (lse == std::numeric_limits<double>::infinity()) {
    throw DegenerateWeightsError("log-weights contain +inf");
  }
  std::vector<double> w(log_w.size());
  for (std::size_t i = 0; i < log_w.size(); ++i) w[i] = std::exp(log_w[i] - lse);
  return w;
}

double effective_sample_size(std::span<const double> log_w) {
  const auto w = normalize_log_weights(log_w);
  double s = 0.0, s2 = 0.0;
  for (double x : w) {
    s += x;
    s2 += x * x;
  }
  return s * s / s2;
}

ParticleCloud::ParticleCloud(Matrix pts)
    : points(std::move(pts)), log_weights(Vector::Zero(points.rows())) {}

ParticleCloud::ParticleCloud(Matrix pts, Vector log_w)
    : points(std::move(pts)), log_weights(std::move(log_w)) {
  validate();
}

std::vector<double> ParticleCloud::normalized_weights() const {
  return normalize_log_weights({log_weights.data(), static_cast<std::size_t>(log_weights.size())});
}

double ParticleCloud::ess() const {
  return effective_sample_size(
      {log_weights.data(), static_cast<std::size_t>(log_weights.size())});
}

bool ParticleCloud::has_uniform_weights() const {
  if (log_weights.size() == 0) return true;
  const double first = log_weights[0];
  return (log_weights.array() == first).all();
}

void ParticleCloud::validate() const {
  if (log_weights.size() != points.rows()) {
    throw InputError("particle cloud: log_weights length does not match point count");
  }
  if (points.hasNaN() || log_weights.hasNaN()) {
    throw InputError("particle cloud: NaN entries");
  }
}

namespace {

constexpr char kMagic[8] = {'E', 'M', '2', 'C', 'P', 'A', 'R', 'T'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

static_assert(std::endian::native == std::endian::little,
              "particle dumps assume a little-endian host");

}  // namespace

void write_particles(const std::filesystem::path& path, const Matrix& points) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof kMagic);
  put_u32(os, static_cast<std::uint32_t>(points.rows()));
  put_u32(os, static_cast<std::uint32_t>(points.cols()));
  os.write(reinterpret_cast<const char*>(points.data()),
           static_cast<std::streamsize>(points.size() * sizeof(double)));
  if (!os) throw InputError("write failed: " + path.string());
}

Matrix read_particles(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw InputError(path.string() + ": bad particle dump header");
  }
  const auto n = get_u32(is);
  const auto d = get_u32(is);
  Matrix m(n, d);
  is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!is) throw InputError(path.string() + ": truncated particle dump");
  return m;
}

}  // namespace em2c
