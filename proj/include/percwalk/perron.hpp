#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "percwalk/chain.hpp"

namespace percwalk {

struct PerronOptions {
  double tolerance = 1e-12;          ///< relative width of the Collatz-Wielandt bracket
  std::size_t max_iterations = 100000;
  std::size_t power_iterations = 2000;  ///< before switching to shift-invert
};

struct PerronResult {
  double log_root = 0.0;
  double root = 1.0;
  double lower = 1.0;               ///< min_x (A v)_x / v_x
  double upper = 1.0;               ///< max_x (A v)_x / v_x
  std::vector<double> vector;       ///< right Perron vector, max entry 1
  std::size_t iterations = 0;
  bool converged = false;
  bool shift_invert = false;
};

/// Nonnegative matrix A(x, next(x, e)) += pi(x, e) exp(f(x, e)) in compressed rows.
class TiltedMatrix {
 public:
  TiltedMatrix(const EnvironmentChain& chain, const EdgeTable& f) : n_(chain.size()) {
    detail::require(f.states == chain.size() && f.dirs == chain.dirs(),
                    "function shape does not match the chain");
    row_.push_back(0);
    for (std::size_t s = 0; s < n_; ++s) {
      for (int dir = 0; dir < chain.dirs(); ++dir) {
        if (!chain.open(s, dir)) continue;
        const double w = chain.pi(s, dir) * std::exp(f(s, dir));
        detail::require(std::isfinite(w), "tilted weight overflow");
        col_.push_back(chain.next(s, dir));
        val_.push_back(w);
      }
      row_.push_back(col_.size());
    }
  }

  std::size_t size() const noexcept { return n_; }

  void apply(const std::vector<double>& v, std::vector<double>& out) const {
    out.resize(n_);
    for (std::size_t s = 0; s < n_; ++s) {
      double acc = 0.0;
      for (std::size_t k = row_[s]; k < row_[s + 1]; ++k) acc += val_[k] * v[col_[k]];
      out[s] = acc;
    }
  }

  double max_row_sum() const {
    double m = 0.0;
    for (std::size_t s = 0; s < n_; ++s) {
      double acc = 0.0;
      for (std::size_t k = row_[s]; k < row_[s + 1]; ++k) acc += val_[k];
      m = std::max(m, acc);
    }
    return m;
  }

  /// S^-1 A S for S = diag(scale); same Perron root, vector divided by scale.
  TiltedMatrix balanced(const std::vector<double>& scale) const {
    TiltedMatrix b = *this;
    for (std::size_t s = 0; s < n_; ++s)
      for (std::size_t k = row_[s]; k < row_[s + 1]; ++k) b.val_[k] = val_[k] * (scale[col_[k]] / scale[s]);
    return b;
  }

  /// sigma I - A as an Eigen sparse matrix.
  Eigen::SparseMatrix<double> shifted(double sigma) const {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(val_.size() + n_);
    for (std::size_t s = 0; s < n_; ++s) {
      t.emplace_back(s, s, sigma);
      for (std::size_t k = row_[s]; k < row_[s + 1]; ++k) t.emplace_back(s, col_[k], -val_[k]);
    }
    Eigen::SparseMatrix<double> m(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    m.setFromTriplets(t.begin(), t.end());
    m.makeCompressed();
    return m;
  }

 private:
  std::size_t n_;
  std::vector<std::size_t> row_;
  std::vector<std::size_t> col_;
  std::vector<double> val_;
};

namespace detail {

inline void collatz_wielandt(const std::vector<double>& v, const std::vector<double>& av,
                             double& lower, double& upper) {
  lower = std::numeric_limits<double>::infinity();
  upper = 0.0;
  for (std::size_t s = 0; s < v.size(); ++s) {
    const double r = av[s] / v[s];
    lower = std::min(lower, r);
    upper = std::max(upper, r);
  }
}

inline void normalize_max(std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  for (double& x : v) x /= m;
}

}  // namespace detail

/// Perron root and right vector of the tilted matrix of f on an irreducible chain.
///
/// Power iteration on A + sI, then inverse iteration with (sigma I - A) for
/// sigma above the current upper bound; every iterate stays positive, so the
/// Collatz-Wielandt bracket is a rigorous stopping rule.
inline PerronResult perron_root(const EnvironmentChain& chain, const EdgeTable& f,
                                const PerronOptions& options = {}) {
  const TiltedMatrix a(chain, f);
  const std::size_t n = a.size();
  PerronResult result;
  std::vector<double> v(n, 1.0), av, w(n);
  const double shift = 0.5 * a.max_row_sum();
  auto converged = [&](double lo, double hi) { return hi - lo <= options.tolerance * hi; };

  std::size_t it = 0;
  double lower = 0.0, upper = 0.0;
  a.apply(v, av);
  detail::collatz_wielandt(v, av, lower, upper);
  while (!converged(lower, upper) && it < std::min(options.power_iterations, options.max_iterations)) {
    for (std::size_t s = 0; s < n; ++s) w[s] = av[s] + shift * v[s];
    v.swap(w);
    detail::normalize_max(v);
    a.apply(v, av);
    detail::collatz_wielandt(v, av, lower, upper);
    ++it;
  }

  if (!converged(lower, upper) && it < options.max_iterations) {
    // Inverse iteration on the balanced matrix S^-1 A S with S the current
    // iterate, so the solve works on entries of order one even when the
    // Perron vector spans many decades; S is refreshed at each refactorization.
    result.shift_invert = true;
    std::vector<double> scale = v, u(n, 1.0), bu;
    TiltedMatrix b = a.balanced(scale);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    double sigma = 0.0;
    std::size_t since_factor = 0;
    auto factor = [&] {
      sigma = upper + std::max(upper - lower, 1e-10 * upper);
      lu.compute(b.shifted(sigma));
      if (lu.info() != Eigen::Success) throw Error("Perron shift-invert factorization failed");
      since_factor = 0;
    };
    factor();
    Eigen::VectorXd x(static_cast<Eigen::Index>(n));
    while (!converged(lower, upper) && it < options.max_iterations) {
      for (std::size_t s = 0; s < n; ++s) x[static_cast<Eigen::Index>(s)] = u[s];
      const Eigen::VectorXd y = lu.solve(x);
      bool positive = true;
      for (std::size_t s = 0; s < n; ++s) {
        u[s] = y[static_cast<Eigen::Index>(s)];
        positive = positive && u[s] > 0.0;
      }
      if (!positive) {
        for (double& e : u) e = std::abs(e) + 1e-300;
      }
      detail::normalize_max(u);
      b.apply(u, bu);
      detail::collatz_wielandt(u, bu, lower, upper);
      ++it;
      if (++since_factor >= 50 && !converged(lower, upper)) {
        for (std::size_t s = 0; s < n; ++s) scale[s] *= u[s];
        detail::normalize_max(scale);
        b = a.balanced(scale);
        u.assign(n, 1.0);
        b.apply(u, bu);
        detail::collatz_wielandt(u, bu, lower, upper);
        factor();
      }
    }
    for (std::size_t s = 0; s < n; ++s) v[s] = scale[s] * u[s];
    detail::normalize_max(v);
  }

  result.lower = lower;
  result.upper = upper;
  result.root = 0.5 * (lower + upper);
  result.log_root = std::log(result.root);
  result.vector = std::move(v);
  result.iterations = it;
  result.converged = converged(lower, upper);
  return result;
}

/// Lambda(theta) = log of the Perron root of A(x, x+e) = pi(x, e) exp(theta . e).
inline PerronResult log_mgf_perron(const EnvironmentChain& chain, const std::vector<double>& theta,
                                   const PerronOptions& options = {}) {
  return perron_root(chain, linear_function(chain, theta), options);
}

}  // namespace percwalk
