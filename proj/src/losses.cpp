#include "rrm/losses.hpp"

#include <cmath>
#include <sstream>

#include "rrm/error.hpp"
#include "rrm/flops.hpp"

namespace rrm {

namespace {

// log(1 + e^θ) without overflow.
double log1p_exp(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

void check_aligned(const Vector& theta, const ObservedMatrix& y) {
  if (theta.size() != y.nnz()) {
    throw DimensionError("theta has " + std::to_string(theta.size()) + " values for " +
                         std::to_string(y.nnz()) + " observed entries");
  }
}

}  // namespace

LossKind parse_loss_kind(std::string_view name) {
  if (name == "gaussian") return LossKind::Gaussian;
  if (name == "bernoulli" || name == "logistic") return LossKind::Bernoulli;
  if (name == "poisson") return LossKind::Poisson;
  throw ConfigError("unknown loss '" + std::string(name) + "' (gaussian, bernoulli, poisson)");
}

std::string_view loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::Gaussian: return "gaussian";
    case LossKind::Bernoulli: return "bernoulli";
    case LossKind::Poisson: return "poisson";
  }
  return "gaussian";
}

double psi(LossKind kind, double t) {
  switch (kind) {
    case LossKind::Gaussian: return 0.5 * t * t;
    case LossKind::Bernoulli: return log1p_exp(t);
    case LossKind::Poisson: return std::exp(t);
  }
  return 0.0;
}

double psi_prime(LossKind kind, double t) {
  switch (kind) {
    case LossKind::Gaussian: return t;
    case LossKind::Bernoulli: return sigmoid(t);
    case LossKind::Poisson: return std::exp(t);
  }
  return 0.0;
}

double psi_second(LossKind kind, double t) {
  switch (kind) {
    case LossKind::Gaussian: return 1.0;
    case LossKind::Bernoulli: {
      const double p = sigmoid(t);
      return p * (1.0 - p);
    }
    case LossKind::Poisson: return std::exp(t);
  }
  return 0.0;
}

void validate_responses(LossKind kind, const ObservedMatrix& y) {
  const Vector& v = y.values();
  for (Index k = 0; k < y.nnz(); ++k) {
    const double yk = v[k];
    bool ok = std::isfinite(yk);
    if (ok && kind == LossKind::Bernoulli) ok = (yk == 0.0 || yk == 1.0);
    if (ok && kind == LossKind::Poisson) ok = (yk >= 0.0 && yk == std::floor(yk));
    if (!ok) {
      std::ostringstream os;
      os << "invalid " << loss_name(kind) << " response " << yk << " at entry (" << y.row(k)
         << "," << y.col(k) << ")";
      throw DataError(os.str());
    }
  }
}

double loss_value(LossKind kind, const Vector& theta, const ObservedMatrix& y) {
  check_aligned(theta, y);
  validate_responses(kind, y);
  const Vector& v = y.values();
  double total = 0.0;
  for (Index k = 0; k < y.nnz(); ++k) total += psi(kind, theta[k]) - v[k] * theta[k];
  flops::add(static_cast<std::uint64_t>(4 * y.nnz()));
  return total;
}

ObservedMatrix loss_gradient_sparse(LossKind kind, const Vector& theta, const ObservedMatrix& y) {
  check_aligned(theta, y);
  validate_responses(kind, y);
  const Vector& v = y.values();
  Vector g(y.nnz());
  for (Index k = 0; k < y.nnz(); ++k) g[k] = psi_prime(kind, theta[k]) - v[k];
  flops::add(static_cast<std::uint64_t>(2 * y.nnz()));
  return y.with_values(std::move(g));
}

double curvature(LossKind kind, std::optional<Interval> theta_range) {
  switch (kind) {
    case LossKind::Gaussian: return 1.0;
    case LossKind::Bernoulli: return 0.25;
    case LossKind::Poisson:
      if (!theta_range) {
        throw ConfigError("poisson loss needs an upper bound on theta for its curvature");
      }
      return std::exp(theta_range->hi);
  }
  return 1.0;
}

double curvature(const Loss& loss) {
  if (loss.kind == LossKind::Poisson) {
    if (!loss.theta_max) {
      throw ConfigError("poisson loss needs theta_max for its curvature bound");
    }
    return curvature(loss.kind, Interval{-INFINITY, *loss.theta_max});
  }
  return curvature(loss.kind);
}

double mean_deviance(LossKind kind, const Vector& theta, const ObservedMatrix& y) {
  check_aligned(theta, y);
  validate_responses(kind, y);
  const Vector& v = y.values();
  double total = 0.0;
  for (Index k = 0; k < y.nnz(); ++k) {
    const double t = theta[k], yk = v[k];
    switch (kind) {
      case LossKind::Gaussian: total += (yk - t) * (yk - t); break;
      case LossKind::Bernoulli: total += 2.0 * (log1p_exp(t) - yk * t); break;
      case LossKind::Poisson: {
        const double mu = std::exp(t);
        total += 2.0 * ((yk > 0 ? yk * std::log(yk / mu) : 0.0) - (yk - mu));
        break;
      }
    }
  }
  return total / static_cast<double>(y.nnz());
}

}  // namespace rrm
