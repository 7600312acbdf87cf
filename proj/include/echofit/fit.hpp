#pragma once

// Bounded nonlinear least squares for the model catalogue.
//
// The solver is a damped Gauss-Newton (Levenberg-Marquardt) iteration on an
// unconstrained internal parameterisation: positive parameters are fitted as
// log(p), interval parameters through a logistic map, fixed parameters are
// removed from the problem. Uncertainties come from the Jacobian in natural
// units, (J^T W J)^-1 scaled by SSE / dof, inverted through an eigen-
// decomposition so that unidentifiable directions are reported as unbounded.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "echofit/catalog.hpp"
#include "echofit/error.hpp"
#include "echofit/random.hpp"
#include "echofit/units.hpp"

namespace echofit {

enum class ResidualSpace { linear, log_intensity };
enum class Weighting { uniform, relative };

/// Restricts the fit to points whose input[axis] lies in [min, max].
struct FitWindow {
  double min = -std::numeric_limits<double>::infinity();
  double max = std::numeric_limits<double>::infinity();
  std::size_t axis = 0;

  bool contains(double v) const { return v >= min && v <= max; }
};

struct FitConfig {
  ResidualSpace residual_space = ResidualSpace::linear;
  Weighting weighting = Weighting::relative;
  int max_iterations = 1000;
  double sse_tolerance = 1e-12;       // relative actual and predicted SSE change
  double gradient_tolerance = 1e-12;  // cosine between residual and Jacobian columns
  double step_tolerance = 1e-12;      // relative internal step length
  int restarts = 1;
  std::uint64_t seed = 0;
  std::optional<FitWindow> window;

  void validate() const {
    if (max_iterations < 1) throw std::invalid_argument("FitConfig: max_iterations must be >= 1");
    if (!(sse_tolerance > 0.0) || !(gradient_tolerance > 0.0) || !(step_tolerance > 0.0))
      throw std::invalid_argument("FitConfig: tolerances must be > 0");
    if (restarts < 1) throw std::invalid_argument("FitConfig: restarts must be >= 1");
  }
};

/// Default 2PPE window start: the fit skips the first 250 ns.
inline constexpr double kDefaultWindowStartMs = 250e-6;

/// Log-intensity residuals for decay traces, linear relative residuals for
/// linewidth-versus-condition data; 2PPE fits skip t12 < 250 ns.
inline FitConfig default_config(ModelId id) {
  FitConfig cfg;
  switch (id) {
    case ModelId::mims:
      cfg.residual_space = ResidualSpace::log_intensity;
      cfg.weighting = Weighting::uniform;
      cfg.window = FitWindow{kDefaultWindowStartMs};
      break;
    case ModelId::population:
    case ModelId::stimulated_echo:
      cfg.residual_space = ResidualSpace::log_intensity;
      cfg.weighting = Weighting::uniform;
      break;
    default: break;
  }
  return cfg;
}

template <std::size_t N>
struct Observation {
  std::array<double, N> input{};
  double value = 0.0;
  double sigma = std::numeric_limits<double>::quiet_NaN();  // NaN: not given
};

struct FitResult {
  ModelParams params;
  std::vector<ParamBound> bounds;
  std::vector<double> standard_errors;  // 1 sigma; 0 for fixed, +inf where undetermined
  std::vector<bool> undetermined;
  Eigen::MatrixXd covariance;           // natural units, fixed rows/columns zero
  double sse = 0.0;
  int points = 0;
  int dof = 0;
  bool converged = false;
  int iterations = 0;
  int restarts_agreeing = 1;
  std::vector<double> residuals;  // observed - model in the configured residual space
  std::vector<double> sse_trace;  // SSE at the start and after every accepted step
  bool ordering_violation = false;
  std::string message;

  bool is_free(std::size_t i) const { return bounds.at(i).kind != BoundKind::fixed; }
  std::size_t free_count() const {
    return static_cast<std::size_t>(std::count_if(bounds.begin(), bounds.end(),
                                                  [](const ParamBound& b) { return b.kind != BoundKind::fixed; }));
  }
};

namespace detail {

inline double logistic(double q) {
  return q >= 0.0 ? 1.0 / (1.0 + std::exp(-q)) : std::exp(q) / (1.0 + std::exp(q));
}

inline double to_internal(const ParamBound& b, double p) {
  switch (b.kind) {
    case BoundKind::positive: return std::log(p);
    case BoundKind::interval: {
      const double width = b.hi - b.lo;
      const double f = std::clamp((p - b.lo) / width, 1e-12, 1.0 - 1e-12);
      return std::log(f / (1.0 - f));
    }
    default: return p;
  }
}

inline double to_external(const ParamBound& b, double q) {
  switch (b.kind) {
    case BoundKind::positive: return std::exp(std::clamp(q, -kExpClamp, kExpClamp));
    case BoundKind::interval: return b.lo + (b.hi - b.lo) * logistic(q);
    default: return q;
  }
}

// dp/dq at q.
inline double external_slope(const ParamBound& b, double q) {
  switch (b.kind) {
    case BoundKind::positive: return std::exp(std::clamp(q, -kExpClamp, kExpClamp));
    case BoundKind::interval: {
      const double s = logistic(q);
      return (b.hi - b.lo) * s * (1.0 - s);
    }
    default: return 1.0;
  }
}

template <class M>
class LeastSquaresProblem {
 public:
  using Params = typename M::Params;
  using Obs = Observation<M::kInputs>;

  LeastSquaresProblem(std::vector<Obs> data, const Params& start, std::vector<ParamBound> bounds,
                      const FitConfig& cfg)
      : data_(std::move(data)), start_(start), bounds_(std::move(bounds)), log_(cfg.residual_space ==
                                                                                ResidualSpace::log_intensity) {
    for (std::size_t i = 0; i < M::kParams; ++i)
      if (bounds_[i].kind != BoundKind::fixed) free_.push_back(i);
    sqrt_w_.reserve(data_.size());
    for (const Obs& o : data_) {
      if (log_ && !(o.value > 0.0))
        throw FitError("log-intensity residuals need strictly positive observations");
      double w = 1.0;
      if (std::isfinite(o.sigma) && o.sigma > 0.0) {
        w = log_ ? o.value / o.sigma : 1.0 / o.sigma;
      } else if (!log_ && cfg.weighting == Weighting::relative) {
        if (o.value == 0.0) throw FitError("relative weights need non-zero observations");
        w = 1.0 / std::abs(o.value);
      }
      sqrt_w_.push_back(w);
    }
  }

  std::size_t points() const { return data_.size(); }
  std::size_t free_count() const { return free_.size(); }
  const std::vector<std::size_t>& free_indices() const { return free_; }

  Eigen::VectorXd internal(const Params& p) const {
    Eigen::VectorXd q(static_cast<Eigen::Index>(free_.size()));
    for (std::size_t k = 0; k < free_.size(); ++k) q[static_cast<Eigen::Index>(k)] = to_internal(bounds_[free_[k]], p[free_[k]]);
    return q;
  }

  Params external(const Eigen::VectorXd& q) const {
    Params p = start_;
    for (std::size_t k = 0; k < free_.size(); ++k) p[free_[k]] = to_external(bounds_[free_[k]], q[static_cast<Eigen::Index>(k)]);
    return p;
  }

  // Weighted residuals r = sqrt(w) (obs - model) and their Jacobian with
  // respect to q (or, with natural_units, with respect to the free p).
  // Returns false when the model is not finite (or not positive in log space).
  bool evaluate(const Eigen::VectorXd& q, Eigen::VectorXd& r, Eigen::MatrixXd* jac, bool natural_units = false) const {
    const Params p = external(q);
    const auto n = static_cast<Eigen::Index>(data_.size());
    r.resize(n);
    if (jac) jac->resize(n, static_cast<Eigen::Index>(free_.size()));
    std::array<double, M::kParams> slope{};
    for (std::size_t k = 0; k < free_.size(); ++k)
      slope[k] = natural_units ? 1.0 : external_slope(bounds_[free_[k]], q[static_cast<Eigen::Index>(k)]);

    Params g{};
    for (Eigen::Index i = 0; i < n; ++i) {
      const Obs& o = data_[static_cast<std::size_t>(i)];
      const double m = M::gradient(p, o.input, g);
      if (!std::isfinite(m)) return false;
      const double sw = sqrt_w_[static_cast<std::size_t>(i)];
      double scale = -sw;
      if (log_) {
        if (!(m > 0.0)) return false;
        r[i] = sw * (std::log(o.value) - std::log(m));
        scale = -sw / m;
      } else {
        r[i] = sw * (o.value - m);
      }
      if (jac) {
        for (std::size_t k = 0; k < free_.size(); ++k) {
          const double d = scale * g[free_[k]] * slope[k];
          if (!std::isfinite(d)) return false;
          (*jac)(i, static_cast<Eigen::Index>(k)) = d;
        }
      }
    }
    return r.allFinite();
  }

  // Unweighted residuals in the configured space.
  std::vector<double> raw_residuals(const Params& p) const {
    std::vector<double> out;
    out.reserve(data_.size());
    for (const Obs& o : data_) {
      const double m = M::value(p, o.input);
      out.push_back(log_ ? std::log(o.value) - std::log(m) : o.value - m);
    }
    return out;
  }

 private:
  std::vector<Obs> data_;
  Params start_;
  std::vector<ParamBound> bounds_;
  bool log_;
  std::vector<std::size_t> free_;
  std::vector<double> sqrt_w_;
};

// Covariance of the free parameters from the natural-unit Jacobian J,
// (J^T J)^+ * sse / dof. Columns are scaled to unit norm before the eigen-
// decomposition; eigenvalues below 1e-12 of the largest are dropped and
// any parameter loading on a dropped direction is marked undetermined.
inline Eigen::MatrixXd scaled_covariance(const Eigen::MatrixXd& jac, double residual_variance,
                                         std::vector<bool>& undetermined) {
  const Eigen::Index p = jac.cols();
  undetermined.assign(static_cast<std::size_t>(p), false);
  Eigen::VectorXd norms = jac.colwise().norm();
  Eigen::MatrixXd info = jac.transpose() * jac;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!(norms[j] > 0.0)) {
      undetermined[static_cast<std::size_t>(j)] = true;
      norms[j] = 1.0;
    }
  }
  const Eigen::MatrixXd scaled = norms.cwiseInverse().asDiagonal() * info * norms.cwiseInverse().asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scaled);
  const Eigen::VectorXd& values = eig.eigenvalues();
  const Eigen::MatrixXd& vectors = eig.eigenvectors();
  const double largest = values.size() > 0 ? values.maxCoeff() : 0.0;
  const double cutoff = 1e-12 * largest;

  Eigen::MatrixXd pinv = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index k = 0; k < values.size(); ++k) {
    if (values[k] > cutoff && largest > 0.0) {
      pinv += vectors.col(k) * vectors.col(k).transpose() / values[k];
    } else {
      for (Eigen::Index j = 0; j < p; ++j)
        if (std::abs(vectors(j, k)) > 1e-6) undetermined[static_cast<std::size_t>(j)] = true;
    }
  }
  Eigen::MatrixXd cov = norms.cwiseInverse().asDiagonal() * pinv * norms.cwiseInverse().asDiagonal();
  cov = 0.5 * (cov + cov.transpose()) * residual_variance;
  return cov;
}

template <class M>
std::vector<Observation<M::kInputs>> apply_window(std::span<const Observation<M::kInputs>> data,
                                                  const std::optional<FitWindow>& window) {
  std::vector<Observation<M::kInputs>> kept;
  kept.reserve(data.size());
  for (const auto& o : data) {
    if (window) {
      if (window->axis >= M::kInputs) throw std::invalid_argument("fit window axis out of range");
      if (!window->contains(o.input[window->axis])) continue;
    }
    kept.push_back(o);
  }
  return kept;
}

}  // namespace detail

/// Fills standard_errors / covariance / undetermined of a result from the
/// problem's Jacobian at result.params.
template <class M>
void compute_uncertainties(const detail::LeastSquaresProblem<M>& problem, FitResult& result) {
  const std::size_t np = M::kParams;
  result.standard_errors.assign(np, 0.0);
  result.undetermined.assign(np, false);
  result.covariance = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(np), static_cast<Eigen::Index>(np));
  if (result.dof <= 0 || problem.free_count() == 0) return;

  typename M::Params p{};
  std::copy(result.params.values.begin(), result.params.values.end(), p.begin());
  Eigen::VectorXd q = problem.internal(p);
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  // Natural-unit Jacobian: evaluate with unit slopes.
  if (!problem.evaluate(q, r, &jac, /*natural_units=*/true)) return;

  std::vector<bool> undetermined;
  const Eigen::MatrixXd cov = detail::scaled_covariance(jac, result.sse / result.dof, undetermined);
  const auto& free = problem.free_indices();
  for (std::size_t a = 0; a < free.size(); ++a) {
    for (std::size_t b = 0; b < free.size(); ++b)
      result.covariance(static_cast<Eigen::Index>(free[a]), static_cast<Eigen::Index>(free[b])) =
          cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    if (undetermined[a]) {
      result.undetermined[free[a]] = true;
      result.standard_errors[free[a]] = std::numeric_limits<double>::infinity();
    } else {
      result.standard_errors[free[a]] = std::sqrt(std::max(0.0, cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a))));
    }
  }
}

/// Single Levenberg-Marquardt fit from `init`.
///
/// Throws FitError when the problem is underdetermined (fewer than
/// free + 1 points in the window), when `init` violates `bounds`, or when
/// the model is not finite at `init`. Non-convergence within
/// cfg.max_iterations is reported through result.converged, not thrown.
template <class M>
FitResult fit(M, std::span<const Observation<M::kInputs>> data, const typename M::Params& init,
              std::vector<ParamBound> bounds, const FitConfig& cfg) {
  cfg.validate();
  if (bounds.size() != M::kParams) throw std::invalid_argument("bounds size does not match the model");
  for (std::size_t i = 0; i < M::kParams; ++i) {
    if (!std::isfinite(init[i])) throw FitError("initial parameter " + std::string(M::param_specs()[i].name) + " is not finite");
    if (bounds[i].kind != BoundKind::fixed && !bounds[i].contains(init[i]))
      throw FitError("initial parameter " + std::string(M::param_specs()[i].name) + " is outside its bounds");
  }

  const detail::LeastSquaresProblem<M> problem(detail::apply_window<M>(data, cfg.window), init, bounds, cfg);
  const std::size_t n = problem.points();
  const std::size_t nfree = problem.free_count();
  if (n < nfree + 1)
    throw FitError("underdetermined fit: " + std::to_string(n) + " points for " + std::to_string(nfree) +
                   " free parameters");

  FitResult result;
  result.bounds = bounds;
  result.points = static_cast<int>(n);
  result.dof = static_cast<int>(n - nfree);

  Eigen::VectorXd q = problem.internal(init);
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  if (!problem.evaluate(q, r, &jac)) throw FitError("model is not finite at the initial parameters");
  double sse = r.squaredNorm();
  result.sse_trace.push_back(sse);

  Eigen::MatrixXd info = jac.transpose() * jac;
  Eigen::VectorXd grad = jac.transpose() * r;
  double lambda = nfree > 0 ? 1e-3 * info.diagonal().maxCoeff() : 0.0;
  if (!(lambda > 0.0)) lambda = 1e-3;

  const auto gradient_small = [&] {
    const double rnorm = std::sqrt(sse);
    if (rnorm == 0.0) return true;
    for (Eigen::Index j = 0; j < grad.size(); ++j) {
      const double cn = jac.col(j).norm();
      if (cn > 0.0 && std::abs(grad[j]) / (cn * rnorm) > cfg.gradient_tolerance) return false;
    }
    return true;
  };

  if (nfree == 0) {
    result.converged = true;
    result.message = "no free parameters";
  }

  Eigen::VectorXd r_new;
  Eigen::MatrixXd jac_new;
  int iter = 0;
  while (!result.converged && iter < cfg.max_iterations) {
    ++iter;
    if (gradient_small()) {
      result.converged = true;
      result.message = "gradient tolerance reached";
      break;
    }
    Eigen::MatrixXd damped = info;
    damped.diagonal().array() += lambda;
    const Eigen::VectorXd step = damped.ldlt().solve(-grad);
    const double step_limit = cfg.step_tolerance * (q.norm() + cfg.step_tolerance);
    const Eigen::VectorXd q_new = q + step;

    bool ok = step.allFinite() && problem.evaluate(q_new, r_new, &jac_new);
    const double sse_new = ok ? r_new.squaredNorm() : std::numeric_limits<double>::infinity();
    if (ok && sse_new < sse) {
      const double predicted = -(2.0 * step.dot(grad) + step.dot(info * step));
      const double actual_rel = (sse - sse_new) / sse;
      const double predicted_rel = predicted / sse;
      q = q_new;
      r.swap(r_new);
      jac.swap(jac_new);
      sse = sse_new;
      info = jac.transpose() * jac;
      grad = jac.transpose() * r;
      lambda = std::max(lambda / 3.0, 1e-300);
      result.sse_trace.push_back(sse);
      if (actual_rel <= cfg.sse_tolerance && std::abs(predicted_rel) <= cfg.sse_tolerance) {
        result.converged = true;
        result.message = "relative SSE change below tolerance";
      } else if (step.norm() <= step_limit) {
        result.converged = true;
        result.message = "step below tolerance";
      }
    } else {
      lambda *= 3.0;
      if (step.allFinite() && step.norm() <= step_limit) {
        result.converged = true;
        result.message = "no further decrease at step tolerance";
      } else if (!std::isfinite(lambda)) {
        result.message = "damping diverged";
        break;
      }
    }
  }
  if (!result.converged && result.message.empty()) result.message = "maximum iterations reached";
  result.iterations = iter;

  const typename M::Params best = problem.external(q);
  result.params = ModelParams{M::kId, std::vector<double>(best.begin(), best.end())};
  result.sse = sse;
  result.residuals = problem.raw_residuals(best);
  compute_uncertainties(problem, result);

  if constexpr (M::kId == ModelId::field) {
    if (!(best[FieldModel::g1] > best[FieldModel::g2])) {
      result.ordering_violation = true;
      result.message += "; decaying-term g1 does not exceed rising-term g2";
    }
  }
  return result;
}

/// Runs `cfg.restarts` fits: the first from `init`, the rest from seeded
/// log-uniform jitter of up to a factor 1.5 on every free parameter.
/// Returns the lowest-SSE result; restarts_agreeing counts runs within 1%
/// of that SSE. Restarts that throw are skipped.
template <class M>
FitResult multi_start_fit(M model, std::span<const Observation<M::kInputs>> data, const typename M::Params& init,
                          const std::vector<ParamBound>& bounds, const FitConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::vector<FitResult> runs;
  std::string first_error;
  for (int k = 0; k < cfg.restarts; ++k) {
    typename M::Params start = init;
    if (k > 0) {
      for (std::size_t i = 0; i < M::kParams; ++i) {
        const ParamBound& b = bounds[i];
        if (b.kind == BoundKind::fixed) continue;
        const double factor = rng.log_uniform(1.0 / 1.5, 1.5);
        double v = init[i] * factor;
        if (b.kind == BoundKind::interval) {
          const double margin = 1e-3 * (b.hi - b.lo);
          if (init[i] <= b.lo) v = b.lo + margin * factor;
          v = std::clamp(v, b.lo + margin, b.hi - margin);
        }
        start[i] = v;
      }
    }
    try {
      runs.push_back(fit(model, data, start, bounds, cfg));
    } catch (const FitError& e) {
      if (k == 0) first_error = e.what();
      if (k == 0 && std::string(e.what()).find("underdetermined") != std::string::npos) throw;
    }
  }
  if (runs.empty()) throw FitError("all restarts failed: " + first_error);

  std::size_t best = 0;
  for (std::size_t k = 1; k < runs.size(); ++k)
    if (runs[k].sse < runs[best].sse) best = k;
  const double best_sse = runs[best].sse;
  int agreeing = 0;
  for (const FitResult& r : runs)
    if (r.sse - best_sse <= 0.01 * best_sse) ++agreeing;
  FitResult out = std::move(runs[best]);
  out.restarts_agreeing = agreeing;
  return out;
}

/// Recomputes 1-sigma standard errors of an existing result against `data`.
template <class M>
std::vector<double> uncertainties(M, std::span<const Observation<M::kInputs>> data, FitResult result,
                                  const FitConfig& cfg) {
  typename M::Params p{};
  std::copy(result.params.values.begin(), result.params.values.end(), p.begin());
  const detail::LeastSquaresProblem<M> problem(detail::apply_window<M>(data, cfg.window), p, result.bounds, cfg);
  compute_uncertainties(problem, result);
  return result.standard_errors;
}

// ---------------------------------------------------------------------------
// Runtime-dispatched fitting on untyped data, for callers that only know the
// model id.

struct Dataset {
  std::vector<std::vector<double>> inputs;
  std::vector<double> values;
  std::vector<double> sigmas;  // empty or same length as values

  std::size_t size() const { return values.size(); }
};

template <std::size_t N>
std::vector<Observation<N>> to_observations(const Dataset& d) {
  if (d.inputs.size() != d.values.size() || (!d.sigmas.empty() && d.sigmas.size() != d.values.size()))
    throw DataError("dataset columns have different lengths");
  std::vector<Observation<N>> out(d.values.size());
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    if (d.inputs[i].size() != N) throw DataError("dataset input width does not match the model");
    std::copy(d.inputs[i].begin(), d.inputs[i].end(), out[i].input.begin());
    out[i].value = d.values[i];
    if (!d.sigmas.empty()) out[i].sigma = d.sigmas[i];
  }
  return out;
}

inline FitResult fit(ModelId id, const Dataset& data, const ModelParams& init, const std::vector<ParamBound>& bounds,
                     const FitConfig& cfg) {
  if (init.model != id) throw std::invalid_argument("initial parameters belong to a different model");
  return visit_model(id, [&]<class M>(M model) {
    const auto obs = to_observations<M::kInputs>(data);
    return multi_start_fit(model, std::span<const Observation<M::kInputs>>(obs),
                           detail::to_array<typename M::Params>(init.values, "init"), bounds, cfg);
  });
}

}  // namespace echofit
