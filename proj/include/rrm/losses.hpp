#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "rrm/operators.hpp"

namespace rrm {

// Canonical-link exponential families: Y ~ exp{yθ − ψ(θ)}h(y).
enum class LossKind { Gaussian, Bernoulli, Poisson };

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct Loss {
  LossKind kind = LossKind::Gaussian;
  // Upper bound on θ for Poisson; required to get a finite curvature bound.
  std::optional<double> theta_max;
};

LossKind parse_loss_kind(std::string_view name);
std::string_view loss_name(LossKind kind);

double psi(LossKind kind, double theta);
double psi_prime(LossKind kind, double theta);   // mean, the inverse link
double psi_second(LossKind kind, double theta);

// Throws DataError naming the first entry that is not a valid response.
void validate_responses(LossKind kind, const ObservedMatrix& y);

// Σ_Ω [ψ(θ_ij) − y_ij θ_ij]. The base measure h(y) is dropped, so values are
// only comparable within one dataset.
double loss_value(LossKind kind, const Vector& theta_on_omega, const ObservedMatrix& y);

// G_ij = ψ'(θ_ij) − y_ij on Ω, sharing y's sparsity pattern.
ObservedMatrix loss_gradient_sparse(LossKind kind, const Vector& theta_on_omega,
                                    const ObservedMatrix& y);

// sup ψ'' over the admissible range: 1, 1/4, exp(θ_max).
double curvature(LossKind kind, std::optional<Interval> theta_range = std::nullopt);
double curvature(const Loss& loss);

// Mean unit deviance per entry, for model selection on held-out data.
double mean_deviance(LossKind kind, const Vector& theta_on_omega, const ObservedMatrix& y);

}  // namespace rrm
