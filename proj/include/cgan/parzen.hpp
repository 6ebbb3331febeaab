#pragma once

// Gaussian Parzen-window log-likelihood estimation.
//
// Summation order: test points are scored in batches of kParzenBatch in index
// order; each point's kernel terms are combined over samples in index order
// with a max-shifted log-sum-exp. Report means use compensated summation in
// test index order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cgan/data.hpp"
#include "cgan/errors.hpp"
#include "cgan/nets.hpp"
#include "cgan/rng.hpp"
#include "cgan/tensor.hpp"

namespace cgan {

inline constexpr std::size_t kParzenBatch = 100;

struct ParzenModel {
  Tensor<double> samples;  // [N, d]
  double sigma = 1.0;

  std::size_t size() const { return samples.rows(); }
  std::size_t dim() const { return samples.cols(); }
};

struct LikelihoodReport {
  double mean_ll = 0.0;
  double std_error = 0.0;
  double sigma_used = 0.0;
  std::size_t n_samples = 0;
  std::size_t n_test = 0;

  std::string to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "mean_ll=" << mean_ll << "\nstd_error=" << std_error << "\nsigma=" << sigma_used
       << "\nn_samples=" << n_samples << "\nn_test=" << n_test << '\n';
    return os.str();
  }

  // Reads the five keys written by to_text; other lines are ignored.
  static LikelihoodReport from_text(const std::string& text) {
    LikelihoodReport r;
    int seen = 0;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      const auto eq = line.find('=');
      if (line.empty() || line[0] == '#' || eq == std::string::npos) continue;
      const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
      try {
        if (k == "mean_ll") r.mean_ll = std::stod(v), seen |= 1;
        else if (k == "std_error") r.std_error = std::stod(v), seen |= 2;
        else if (k == "sigma") r.sigma_used = std::stod(v), seen |= 4;
        else if (k == "n_samples") r.n_samples = std::stoull(v), seen |= 8;
        else if (k == "n_test") r.n_test = std::stoull(v), seen |= 16;
      } catch (const std::exception&) {
        throw FormatError("likelihood report: bad value for '" + k + "': '" + v + "'");
      }
    }
    if (seen != 31) throw FormatError("likelihood report: missing keys");
    return r;
  }
};

inline ParzenModel fit(Tensor<double> samples, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("parzen: sigma must be positive");
  if (samples.rank() != 2 || samples.rows() == 0) throw DimensionError("parzen: need a nonempty [N, d] sample bank");
  return {std::move(samples), sigma};
}

namespace detail {

using RowMatrixD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMapD = Eigen::Map<const RowMatrixD>;

// Squared distances from one point to every sample, by direct differences.
inline void squared_distances(const ConstRowMapD& samples, std::span<const double> x, std::vector<double>& out) {
  const Eigen::Map<const Eigen::RowVectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  out.resize(static_cast<std::size_t>(samples.rows()));
  for (Eigen::Index i = 0; i < samples.rows(); ++i) out[static_cast<std::size_t>(i)] = (samples.row(i) - xv).squaredNorm();
}

// log( (1/N) sum_i N(x; s_i, sigma^2 I) ) from the squared distances.
inline double log_density_from_distances(std::span<const double> sq, double sigma, std::size_t d) {
  const double inv = 1.0 / (2.0 * sigma * sigma);
  double m = -std::numeric_limits<double>::infinity();
  for (double v : sq) m = std::max(m, -v * inv);
  double s = 0.0;
  for (double v : sq) s += std::exp(-v * inv - m);
  return m + std::log(s) - std::log(static_cast<double>(sq.size())) -
         0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi * sigma * sigma);
}

inline ConstRowMapD map_samples(const Tensor<double>& s) {
  return {s.data().data(), static_cast<Eigen::Index>(s.rows()), static_cast<Eigen::Index>(s.cols())};
}

// Neumaier-compensated mean and population standard deviation.
inline std::pair<double, double> mean_and_sd(std::span<const double> v) {
  auto compensated_sum = [&](auto term) {
    double sum = 0.0, c = 0.0;
    for (double x : v) {
      const double t = term(x);
      const double y = sum + t;
      c += std::abs(sum) >= std::abs(t) ? (sum - y) + t : (t - y) + sum;
      sum = y;
    }
    return sum + c;
  };
  const double n = static_cast<double>(v.size());
  const double mean = compensated_sum([](double x) { return x; }) / n;
  const double var = compensated_sum([&](double x) { return (x - mean) * (x - mean); }) / n;
  return {mean, std::sqrt(var)};
}

}  // namespace detail

inline double log_density(const ParzenModel& model, std::span<const double> x) {
  if (x.size() != model.dim()) {
    throw DimensionError("parzen: point has " + std::to_string(x.size()) + " dims, model has " +
                         std::to_string(model.dim()));
  }
  std::vector<double> sq;
  detail::squared_distances(detail::map_samples(model.samples), x, sq);
  return detail::log_density_from_distances(sq, model.sigma, model.dim());
}

// Per-row log densities of test [M, d].
inline std::vector<double> log_densities(const ParzenModel& model, const Tensor<double>& test) {
  if (test.rank() != 2 || test.cols() != model.dim()) {
    throw DimensionError("parzen: test set is " + shape_string(test.shape()) + ", model dimension " +
                         std::to_string(model.dim()));
  }
  const auto samples = detail::map_samples(model.samples);
  std::vector<double> out(test.rows());
  std::vector<double> sq;
  for (std::size_t b0 = 0; b0 < test.rows(); b0 += kParzenBatch) {
    const std::size_t b1 = std::min(test.rows(), b0 + kParzenBatch);
    for (std::size_t r = b0; r < b1; ++r) {
      detail::squared_distances(samples, test.row(r), sq);
      out[r] = detail::log_density_from_distances(sq, model.sigma, model.dim());
    }
  }
  return out;
}

inline LikelihoodReport evaluate(const ParzenModel& model, const Tensor<double>& test) {
  if (test.rank() != 2 || test.rows() < 2) throw DomainError("parzen: evaluation needs at least 2 test points");
  const auto ll = log_densities(model, test);
  const auto [mean, sd] = detail::mean_and_sd(ll);
  return {mean, sd / std::sqrt(static_cast<double>(ll.size())), model.sigma, model.size(), test.rows()};
}

// n log-spaced points from lo to hi inclusive.
inline std::vector<double> log_grid(double lo, double hi, std::size_t n) {
  if (n == 0 || !(lo > 0.0) || !(hi >= lo)) throw ConfigError("sigma grid: need n >= 1 and 0 < lo <= hi");
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    g[i] = std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo)));
  }
  return g;
}

inline std::vector<double> default_sigma_grid() { return log_grid(0.01, 1.0, 20); }

struct SigmaSelection {
  double sigma = 0.0;
  std::vector<double> grid;
  std::vector<double> mean_ll;  // per grid point
};

// Grid sigma maximizing mean validation log density; ties go to the smaller
// sigma. Squared distances are computed once and reused for every grid point.
inline SigmaSelection select_sigma_detailed(const Tensor<double>& samples, const Tensor<double>& validation,
                                            const std::vector<double>& grid) {
  if (grid.empty()) throw ConfigError("select_sigma: empty grid");
  for (double s : grid) {
    if (!(s > 0.0)) throw DomainError("select_sigma: grid values must be positive");
  }
  if (samples.rank() != 2 || samples.rows() == 0) throw DimensionError("select_sigma: need a nonempty sample bank");
  if (validation.rank() != 2 || validation.rows() == 0 || validation.cols() != samples.cols()) {
    throw DimensionError("select_sigma: validation set does not match sample dimension");
  }
  const auto map = detail::map_samples(samples);
  const std::size_t n = samples.rows();
  std::vector<double> cache(validation.rows() * n);
  std::vector<double> sq;
  for (std::size_t r = 0; r < validation.rows(); ++r) {
    detail::squared_distances(map, validation.row(r), sq);
    std::copy(sq.begin(), sq.end(), cache.begin() + static_cast<std::ptrdiff_t>(r * n));
  }
  SigmaSelection sel;
  sel.grid = grid;
  std::vector<double> ll(validation.rows());
  for (double s : grid) {
    for (std::size_t r = 0; r < validation.rows(); ++r) {
      ll[r] = detail::log_density_from_distances(std::span<const double>(cache.data() + r * n, n), s, samples.cols());
    }
    sel.mean_ll.push_back(detail::mean_and_sd(ll).first);
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double a = sel.mean_ll[i], b = sel.mean_ll[best];
    if (a > b || (a == b && grid[i] < grid[best])) best = i;
  }
  sel.sigma = grid[best];
  return sel;
}

inline double select_sigma(const Tensor<double>& samples, const Tensor<double>& validation,
                           const std::vector<double>& grid) {
  return select_sigma_detailed(samples, validation, grid).sigma;
}

// ---------------------------------------------------------------------------
// Conditional sampling protocol.

// Produces one sample row per row of the condition batch y.
using ConditionalSampler = std::function<Tensor<double>(const Tensor<double>& y, RngStream& rng)>;

inline ConditionalSampler generator_sampler(const Net<double>& gen) {
  if (gen.spec().role != NetRole::generator || !gen.spec().noise) {
    throw ConfigError("generator_sampler: net is not a generator");
  }
  return [&gen](const Tensor<double>& y, RngStream& rng) {
    const auto z = sample_noise<double>(*gen.spec().noise, y.rows(), rng);
    return generate(gen, z, y, Mode::eval, rng);
  };
}

// Emits data points whose label matches the requested one-hot class, cycling
// through them in file order.
inline ConditionalSampler replay_sampler(const LabeledDataset& data) {
  auto by_class = std::make_shared<std::vector<std::vector<std::size_t>>>(data.condition_width());
  for (std::size_t r = 0; r < data.size(); ++r) (*by_class)[data.label(r)].push_back(r);
  auto cursor = std::make_shared<std::vector<std::size_t>>(data.condition_width(), 0);
  return [&data, by_class, cursor](const Tensor<double>& y, RngStream&) {
    Tensor<double> out({y.rows(), data.data_width()});
    for (std::size_t r = 0; r < y.rows(); ++r) {
      const auto row = y.row(r);
      const std::size_t c = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      const auto& rows = (*by_class)[c];
      if (rows.empty()) throw DataError("replay sampler: no data for class " + std::to_string(c));
      const auto src = data.x.row(rows[(*cursor)[c]++ % rows.size()]);
      std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
  };
}

// Ignores the condition; uniform on [0,1]^width.
inline ConditionalSampler uniform_sampler(std::size_t width) {
  return [width](const Tensor<double>& y, RngStream& rng) {
    Tensor<double> out({y.rows(), width});
    for (auto& v : out.data()) v = rng.uniform();
    return out;
  };
}

struct ProtocolOptions {
  std::size_t samples_per_class = 1000;
  std::size_t classes = 10;
  std::size_t sample_batch = 100;
  std::vector<double> grid = default_sigma_grid();
};

// Sample bank: classes * samples_per_class rows, class-major.
inline Tensor<double> draw_sample_bank(const ConditionalSampler& sampler, std::size_t width, const ProtocolOptions& opt,
                                       RngStream& rng) {
  Tensor<double> bank({opt.classes * opt.samples_per_class, width});
  std::size_t out_row = 0;
  for (std::size_t c = 0; c < opt.classes; ++c) {
    for (std::size_t done = 0; done < opt.samples_per_class;) {
      const std::size_t b = std::min(opt.sample_batch, opt.samples_per_class - done);
      Tensor<double> y({b, opt.classes});
      for (std::size_t r = 0; r < b; ++r) y(r, c) = 1.0;
      const auto s = sampler(y, rng);
      if (s.rows() != b || s.cols() != width) throw DimensionError("sample bank: sampler returned " + shape_string(s.shape()));
      for (std::size_t r = 0; r < b; ++r) std::copy(s.row(r).begin(), s.row(r).end(), bank.row(out_row++).begin());
      done += b;
    }
  }
  return bank;
}

inline LikelihoodReport parzen_protocol(const ConditionalSampler& sampler, const LabeledDataset& test,
                                        const LabeledDataset& val, RngStream& rng, const ProtocolOptions& opt = {}) {
  if (test.size() < 2 || val.size() == 0) throw DataError("parzen protocol: test and validation sets must be nonempty");
  if (val.data_width() != test.data_width()) throw DimensionError("parzen protocol: test and validation widths differ");
  const auto bank = draw_sample_bank(sampler, test.data_width(), opt, rng);
  const double sigma = select_sigma(bank, val.x, opt.grid);
  return evaluate(fit(bank, sigma), test.x);
}

}  // namespace cgan
