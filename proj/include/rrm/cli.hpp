#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rrm/error.hpp"
#include "rrm/model.hpp"

namespace rrm {

// Exit codes: 0 success, 1 internal, 2 configuration, 3 data,
// 4 numeric divergence, 5 budget exhausted without convergence.
int exit_code(ErrorCategory category);

// Penalty choice for one margin, parsed from
//   identity | projection | ridge[:sigma2=S,scale=C] | spline[:coarse=D0,fine=D1]
struct MarginSpec {
  enum class Kind { Identity, Projection, Ridge, Spline };
  Kind kind = Kind::Identity;
  double sigma2 = 1.0;
  double precision_scale = 1.0;  // Σ_η⁻¹ = scale·I
  Index coarse_df = 4;
  Index fine_df = 12;
};

MarginSpec parse_margin_spec(const std::string& text);

// Builds the margin for a side of dimension dim. Ridge and projection need
// features; splines are built on the positions 0..dim−1 unless points are
// supplied.
Margin build_margin(const MarginSpec& spec, Index dim, const std::optional<FeatureMatrix>& features,
                    const std::vector<double>* points = nullptr);

// Runs one command line (program name excluded from args). Errors are
// reported on err as `error[<category>]: <message>`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rrm
