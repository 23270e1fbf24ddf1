#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "dpn/errors.hpp"
#include "dpn/mlp.hpp"
#include "dpn/prng.hpp"
#include "dpn/tensor.hpp"

namespace dpn {

/// Evaluates the scalar loss at the current parameter values, appending the
/// ReLU sign pattern when `pattern` is non-null.
using LossProbe = std::function<double(ActivationPattern* pattern)>;

struct GradCoordinate {
    std::size_t tensor = 0;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckOptions {
    double step = 1e-6;
    // Coordinates sampled per tensor; 0 checks every coordinate.
    std::size_t max_per_tensor = 0;
    std::uint64_t seed = 0;
    std::size_t report_worst = 5;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::vector<GradCoordinate> worst;     // sorted, largest error first
    std::vector<GradCoordinate> excluded;  // steps that crossed a ReLU kink

    std::string diagnostic() const {
        std::ostringstream os;
        os << "max relative error " << max_rel_error << " over " << checked << " coordinates ("
           << excluded.size() << " excluded at kinks)";
        for (const auto& c : worst) {
            os << "\n  tensor " << c.tensor << " [" << c.index << "]: analytic " << c.analytic << ", numeric "
               << c.numeric << ", rel " << c.rel_error;
        }
        return os.str();
    }
};

class GradCheckFailure : public NumericError {
public:
    GradCheckFailure(const GradCheckResult& r, double tolerance)
        : NumericError("gradient check failed (tolerance " + std::to_string(tolerance) + "): " + r.diagnostic()),
          result(r) {}
    GradCheckResult result;
};

/// Compares analytic gradients against central differences,
/// rel = |a - fd| / (|a| + |fd| + 1e-12). A coordinate whose ±step
/// evaluations see different ReLU sign patterns sits on a kink and is
/// excluded rather than scored. Throws GradCheckFailure above `tolerance`.
inline GradCheckResult grad_check(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& analytic,
                                  const LossProbe& loss, double tolerance, const GradCheckOptions& options = {}) {
    if (params.size() != analytic.size()) {
        throw DimensionError("grad_check: parameter and gradient lists differ in length");
    }
    GradCheckResult result;
    std::vector<GradCoordinate> scored;
    Prng rng(options.seed);
    ActivationPattern plus_pattern;
    ActivationPattern minus_pattern;

    for (std::size_t t = 0; t < params.size(); ++t) {
        require_same_shape(*params[t], *analytic[t], "grad_check");
        auto p = params[t]->data();
        std::vector<std::size_t> coords(p.size());
        for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
        if (options.max_per_tensor && coords.size() > options.max_per_tensor) {
            shuffle(coords, rng);
            coords.resize(options.max_per_tensor);
            std::sort(coords.begin(), coords.end());
        }
        for (std::size_t i : coords) {
            const double saved = p[i];
            plus_pattern.clear();
            minus_pattern.clear();
            p[i] = saved + options.step;
            const double lp = loss(&plus_pattern);
            p[i] = saved - options.step;
            const double lm = loss(&minus_pattern);
            p[i] = saved;

            GradCoordinate c;
            c.tensor = t;
            c.index = i;
            c.analytic = (*analytic[t])[i];
            c.numeric = (lp - lm) / (2.0 * options.step);
            c.rel_error = std::abs(c.analytic - c.numeric) / (std::abs(c.analytic) + std::abs(c.numeric) + 1e-12);
            if (plus_pattern != minus_pattern) {
                result.excluded.push_back(c);
                continue;
            }
            ++result.checked;
            result.max_rel_error = std::max(result.max_rel_error, c.rel_error);
            scored.push_back(c);
        }
    }
    std::sort(scored.begin(), scored.end(),
              [](const GradCoordinate& a, const GradCoordinate& b) { return a.rel_error > b.rel_error; });
    if (scored.size() > options.report_worst) scored.resize(options.report_worst);
    result.worst = std::move(scored);
    if (result.max_rel_error > tolerance) throw GradCheckFailure(result, tolerance);
    return result;
}

}  // namespace dpn
