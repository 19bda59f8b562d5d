#pragma once

// Gaussian-process Bayesian optimization on the unit cube: Matern-5/2 ARD
// kernel, constant mean, fitted observation noise, expected improvement over
// a pool of random candidates. Maximizes.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "repchain/errors.hpp"

namespace repchain::bo {

using point = std::vector<double>;

/// Downhill simplex on an unconstrained objective (minimizes).
inline point nelder_mead(const std::function<double(const point&)>& f, point x0,
                         double step, int max_evals) {
  const std::size_t d = x0.size();
  std::vector<point> simplex(d + 1, x0);
  std::vector<double> values(d + 1);
  for (std::size_t i = 0; i < d; ++i) simplex[i + 1][i] += step;
  int evals = 0;
  for (std::size_t i = 0; i <= d; ++i, ++evals) values[i] = f(simplex[i]);

  std::vector<std::size_t> idx(d + 1);
  while (evals < max_evals) {
    for (std::size_t i = 0; i <= d; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    const std::size_t best = idx[0], worst = idx[d], second = idx[d - 1];
    if (std::abs(values[worst] - values[best]) < 1e-9 * (1.0 + std::abs(values[best]))) break;

    point centroid(d, 0.0);
    for (std::size_t i = 0; i <= d; ++i)
      if (i != worst)
        for (std::size_t k = 0; k < d; ++k) centroid[k] += simplex[i][k] / double(d);
    auto along = [&](double t) {
      point p(d);
      for (std::size_t k = 0; k < d; ++k)
        p[k] = centroid[k] + t * (simplex[worst][k] - centroid[k]);
      return p;
    };
    point xr = along(-1.0);
    const double fr = f(xr);
    ++evals;
    if (fr < values[best]) {
      point xe = along(-2.0);
      const double fe = f(xe);
      ++evals;
      if (fe < fr) simplex[worst] = xe, values[worst] = fe;
      else simplex[worst] = xr, values[worst] = fr;
    } else if (fr < values[second]) {
      simplex[worst] = xr, values[worst] = fr;
    } else {
      point xc = fr < values[worst] ? along(-0.5) : along(0.5);
      const double fc = f(xc);
      ++evals;
      if (fc < std::min(fr, values[worst])) {
        simplex[worst] = xc, values[worst] = fc;
      } else {
        for (std::size_t i = 0; i <= d; ++i) {
          if (i == best) continue;
          for (std::size_t k = 0; k < d; ++k)
            simplex[i][k] = simplex[best][k] + 0.5 * (simplex[i][k] - simplex[best][k]);
          values[i] = f(simplex[i]);
          ++evals;
        }
      }
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i <= d; ++i)
    if (values[i] < values[best]) best = i;
  return simplex[best];
}

struct gp_hyperparams {
  std::vector<double> length_scales;
  double signal_sd = 1.0;  // in standardized output units
  double noise_sd = 0.1;
};

class gaussian_process {
public:
  /// Fits hyperparameters by maximum marginal likelihood. Outputs are
  /// standardized internally; predictions come back in original units.
  void fit(const std::vector<point>& x, const std::vector<double>& y,
           const gp_hyperparams* warm_start = nullptr) {
    if (x.empty() || x.size() != y.size())
      throw validation_error("gaussian_process::fit: need matching non-empty data");
    dim_ = x.front().size();
    n_ = x.size();
    X_.resize(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(dim_));
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t k = 0; k < dim_; ++k)
        X_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = x[i][k];

    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= double(n_);
    double var = 0.0;
    for (double v : y) var += (v - mean) * (v - mean);
    var /= double(n_);
    y_shift_ = mean;
    y_scale_ = var > 0.0 ? std::sqrt(var) : 1.0;
    ys_.resize(static_cast<Eigen::Index>(n_));
    for (std::size_t i = 0; i < n_; ++i)
      ys_(static_cast<Eigen::Index>(i)) = (y[i] - y_shift_) / y_scale_;

    auto objective = [&](const point& theta) { return -log_marginal_likelihood(theta); };
    std::vector<point> starts;
    starts.push_back(pack({std::vector<double>(dim_, 0.3), 1.0, 0.1}));
    starts.push_back(pack({std::vector<double>(dim_, 1.0), 1.0, 0.01}));
    if (warm_start && warm_start->length_scales.size() == dim_) starts.push_back(pack(*warm_start));
    point best_theta;
    double best_val = std::numeric_limits<double>::infinity();
    for (const auto& s : starts) {
      point theta = nelder_mead(objective, s, 0.5, 400);
      const double val = objective(theta);
      if (val < best_val) best_val = val, best_theta = theta;
    }
    hp_ = unpack(best_theta);
    factorize();
  }

  const gp_hyperparams& hyperparams() const noexcept { return hp_; }

  /// Observation noise in original output units.
  double noise_sd() const noexcept { return hp_.noise_sd * y_scale_; }

  struct prediction {
    double mean;
    double sd;
  };

  prediction predict(const point& x) const {
    Eigen::VectorXd k(static_cast<Eigen::Index>(n_));
    for (std::size_t i = 0; i < n_; ++i)
      k(static_cast<Eigen::Index>(i)) = kernel(x, static_cast<Eigen::Index>(i));
    const double mu = const_mean_ + k.dot(alpha_);
    const Eigen::VectorXd v = chol_.matrixL().solve(k);
    const double var = std::max(hp_.signal_sd * hp_.signal_sd - v.squaredNorm(), 1e-18);
    return {mu * y_scale_ + y_shift_, std::sqrt(var) * y_scale_};
  }

private:
  static constexpr double log_ls_lo = -4.0, log_ls_hi = 1.6;     // ~0.018 .. 5
  static constexpr double log_sf_lo = -3.0, log_sf_hi = 3.0;
  static constexpr double log_sn_lo = -9.2, log_sn_hi = 0.0;     // ~1e-4 .. 1

  point pack(const gp_hyperparams& h) const {
    point t;
    for (double l : h.length_scales) t.push_back(std::log(l));
    t.push_back(std::log(h.signal_sd));
    t.push_back(std::log(h.noise_sd));
    return t;
  }

  gp_hyperparams unpack(const point& t) const {
    gp_hyperparams h;
    for (std::size_t k = 0; k < dim_; ++k)
      h.length_scales.push_back(std::exp(std::clamp(t[k], log_ls_lo, log_ls_hi)));
    h.signal_sd = std::exp(std::clamp(t[dim_], log_sf_lo, log_sf_hi));
    h.noise_sd = std::exp(std::clamp(t[dim_ + 1], log_sn_lo, log_sn_hi));
    return h;
  }

  static double matern52(double r) {
    const double s = std::sqrt(5.0) * r;
    return (1.0 + s + s * s / 3.0) * std::exp(-s);
  }

  double kernel_with(const gp_hyperparams& h, Eigen::Index i, Eigen::Index j) const {
    double r2 = 0.0;
    for (std::size_t k = 0; k < dim_; ++k) {
      const double d = (X_(i, static_cast<Eigen::Index>(k)) - X_(j, static_cast<Eigen::Index>(k))) /
                       h.length_scales[k];
      r2 += d * d;
    }
    return h.signal_sd * h.signal_sd * matern52(std::sqrt(r2));
  }

  double kernel(const point& x, Eigen::Index j) const {
    double r2 = 0.0;
    for (std::size_t k = 0; k < dim_; ++k) {
      const double d = (x[k] - X_(j, static_cast<Eigen::Index>(k))) / hp_.length_scales[k];
      r2 += d * d;
    }
    return hp_.signal_sd * hp_.signal_sd * matern52(std::sqrt(r2));
  }

  Eigen::MatrixXd gram(const gp_hyperparams& h) const {
    const auto n = static_cast<Eigen::Index>(n_);
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      K(i, i) = h.signal_sd * h.signal_sd + h.noise_sd * h.noise_sd + 1e-10;
      for (Eigen::Index j = 0; j < i; ++j) K(i, j) = K(j, i) = kernel_with(h, i, j);
    }
    return K;
  }

  // Constant mean profiled out by generalized least squares.
  double log_marginal_likelihood(const point& theta) const {
    double penalty = 0.0;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double lo = k < dim_ ? log_ls_lo : (k == dim_ ? log_sf_lo : log_sn_lo);
      const double hi = k < dim_ ? log_ls_hi : (k == dim_ ? log_sf_hi : log_sn_hi);
      if (theta[k] < lo) penalty += (lo - theta[k]) * (lo - theta[k]);
      if (theta[k] > hi) penalty += (theta[k] - hi) * (theta[k] - hi);
    }
    const auto h = unpack(theta);
    Eigen::LLT<Eigen::MatrixXd> llt(gram(h));
    if (llt.info() != Eigen::Success) return -1e300;
    const auto n = static_cast<Eigen::Index>(n_);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    const Eigen::VectorXd kinv_one = llt.solve(ones);
    const double m = kinv_one.dot(ys_) / ones.dot(kinv_one);
    const Eigen::VectorXd r = ys_ - m * ones;
    const Eigen::VectorXd alpha = llt.solve(r);
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(llt.matrixL()(i, i));
    return -0.5 * r.dot(alpha) - logdet - 0.5 * double(n) * std::log(2.0 * std::numbers::pi) -
           100.0 * penalty;
  }

  void factorize() {
    chol_.compute(gram(hp_));
    if (chol_.info() != Eigen::Success)
      throw std::runtime_error("gaussian_process: Gram matrix not positive definite");
    const auto n = static_cast<Eigen::Index>(n_);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    const Eigen::VectorXd kinv_one = chol_.solve(ones);
    const_mean_ = kinv_one.dot(ys_) / ones.dot(kinv_one);
    alpha_ = chol_.solve(ys_ - const_mean_ * ones);
  }

  std::size_t dim_ = 0, n_ = 0;
  Eigen::MatrixXd X_;
  Eigen::VectorXd ys_;
  double y_shift_ = 0.0, y_scale_ = 1.0;
  gp_hyperparams hp_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::VectorXd alpha_;
  double const_mean_ = 0.0;
};

/// EI for maximization, in the units of `pred`.
inline double expected_improvement(double mean, double sd, double incumbent, double xi) {
  if (!(sd > 0.0)) return std::max(0.0, mean - incumbent - xi);
  const double z = (mean - incumbent - xi) / sd;
  const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return (mean - incumbent - xi) * cdf + sd * pdf;
}

struct bo_config {
  std::size_t n_init = 10;
  std::size_t candidates = 1024;  // EI pool size
  double xi = 0.01;               // exploration margin, in output standard deviations
};

/// Sequential ask/tell driver on [0, 1]^dim.
class bayes_optimizer {
public:
  bayes_optimizer(std::size_t dim, std::uint64_t seed, bo_config cfg = {})
      : dim_(dim), cfg_(cfg), rng_(seed) {
    if (dim == 0) throw validation_error("bayes_optimizer: dim must be >= 1");
    if (cfg_.n_init < 2) throw validation_error("bayes_optimizer: n_init must be >= 2");
    if (cfg_.candidates < 1) throw validation_error("bayes_optimizer: need >= 1 candidate");
    latin_hypercube();
  }

  point ask() {
    if (ys_.size() < cfg_.n_init) return design_[ys_.size()];
    gp_.fit(xs_, ys_, fitted_ ? &gp_.hyperparams() : nullptr);
    fitted_ = true;
    const double incumbent_value = *std::max_element(ys_.begin(), ys_.end());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    point best(dim_);
    double best_ei = -1.0;
    // EI margin is specified in output-sd units; convert via the noise-free
    // scale of the observations.
    const double scale = output_scale();
    for (std::size_t c = 0; c < cfg_.candidates; ++c) {
      point x(dim_);
      for (auto& e : x) e = u(rng_);
      const auto pr = gp_.predict(x);
      const double ei = expected_improvement(pr.mean, pr.sd, incumbent_value, cfg_.xi * scale);
      if (ei > best_ei) best_ei = ei, best = x;
    }
    return best;
  }

  void tell(const point& x, double y) {
    if (x.size() != dim_) throw validation_error("bayes_optimizer::tell: wrong dimension");
    if (!std::isfinite(y)) throw validation_error("bayes_optimizer::tell: non-finite value");
    xs_.push_back(x);
    ys_.push_back(y);
  }

  /// Latin-hypercube points returned by the first n_init asks.
  const std::vector<point>& initial_design() const noexcept { return design_; }

  std::size_t n_observations() const noexcept { return ys_.size(); }
  const gaussian_process& surrogate() const noexcept { return gp_; }
  const std::vector<point>& observed_points() const noexcept { return xs_; }
  const std::vector<double>& observed_values() const noexcept { return ys_; }

private:
  void latin_hypercube() {
    const std::size_t n = cfg_.n_init;
    design_.assign(n, point(dim_));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t k = 0; k < dim_; ++k) {
      std::vector<std::size_t> perm(n);
      for (std::size_t i = 0; i < n; ++i) perm[i] = i;
      std::shuffle(perm.begin(), perm.end(), rng_);
      for (std::size_t i = 0; i < n; ++i)
        design_[i][k] = (static_cast<double>(perm[i]) + u(rng_)) / static_cast<double>(n);
    }
  }

  double output_scale() const {
    double mean = 0.0;
    for (double v : ys_) mean += v;
    mean /= double(ys_.size());
    double var = 0.0;
    for (double v : ys_) var += (v - mean) * (v - mean);
    var /= double(ys_.size());
    return var > 0.0 ? std::sqrt(var) : 1.0;
  }

  std::size_t dim_;
  bo_config cfg_;
  std::mt19937_64 rng_;
  std::vector<point> design_;
  std::vector<point> xs_;
  std::vector<double> ys_;
  gaussian_process gp_;
  bool fitted_ = false;
};

/// Runs `shots` evaluations of `f` on [0, 1]^dim and returns all observations.
inline std::vector<std::pair<point, double>> maximize(
    const std::function<double(const point&)>& f, std::size_t dim, std::size_t shots,
    std::uint64_t seed, bo_config cfg = {}) {
  if (shots < cfg.n_init) throw validation_error("maximize: shots must be >= n_init");
  bayes_optimizer opt(dim, seed, cfg);
  std::vector<std::pair<point, double>> out;
  for (std::size_t i = 0; i < shots; ++i) {
    point x = opt.ask();
    const double y = f(x);
    opt.tell(x, y);
    out.emplace_back(std::move(x), y);
  }
  return out;
}

}  // namespace repchain::bo
