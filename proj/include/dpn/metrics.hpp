#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "dpn/errors.hpp"
#include "dpn/tensor.hpp"

namespace dpn {

/// Mean over the leading (batch) axis of the summed squared error.
inline double sse_loss(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "sse_loss");
    if (pred.rank() < 1) throw DimensionError("sse_loss needs a batch axis");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        s += d * d;
    }
    return s / static_cast<double>(pred.dim(0));
}

struct RelativeL2 {
    std::vector<double> per_case;       // NaN for excluded cases
    std::vector<std::size_t> excluded;  // zero-norm targets
    double mean = 0.0;
    double stddev = 0.0;  // population standard deviation over included cases
    double max = 0.0;
};

/// Relative error of one case split into blocks: the block numerator and
/// denominator norms are summed before dividing. A single block is the
/// plain ||pred - target|| / ||target||. Returns NaN for a zero target.
inline double block_relative_l2(std::span<const double> error_norms, std::span<const double> target_norms) {
    if (error_norms.size() != target_norms.size()) throw DimensionError("block norm lists differ in length");
    double num = 0.0, den = 0.0;
    for (std::size_t b = 0; b < error_norms.size(); ++b) {
        num += error_norms[b];
        den += target_norms[b];
    }
    return den > 0.0 ? num / den : std::nan("");
}

/// Summary over per-case relative errors; NaN entries are excluded.
inline RelativeL2 summarize_relative_l2(std::vector<double> per_case) {
    RelativeL2 r;
    r.per_case = std::move(per_case);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < r.per_case.size(); ++i) {
        if (std::isnan(r.per_case[i])) {
            r.excluded.push_back(i);
            continue;
        }
        sum += r.per_case[i];
        r.max = std::max(r.max, r.per_case[i]);
        ++n;
    }
    if (n == 0) {
        r.mean = r.stddev = r.max = std::nan("");
        return r;
    }
    r.mean = sum / static_cast<double>(n);
    double var = 0.0;
    for (double v : r.per_case)
        if (!std::isnan(v)) var += (v - r.mean) * (v - r.mean);
    r.stddev = std::sqrt(var / static_cast<double>(n));
    return r;
}

/// Mean over cases of ||pred_i - target_i||_2 / ||target_i||_2.
inline RelativeL2 relative_l2(const std::vector<Tensor>& pred, const std::vector<Tensor>& target) {
    if (pred.size() != target.size()) throw DimensionError("relative_l2: case counts differ");
    std::vector<double> per(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        require_same_shape(pred[i], target[i], "relative_l2");
        double e = 0.0, t = 0.0;
        for (std::size_t q = 0; q < pred[i].size(); ++q) {
            const double d = pred[i][q] - target[i][q];
            e += d * d;
            t += target[i][q] * target[i][q];
        }
        const double en = std::sqrt(e), tn = std::sqrt(t);
        per[i] = block_relative_l2(std::span(&en, 1), std::span(&tn, 1));
    }
    return summarize_relative_l2(std::move(per));
}

/// Block-summed variant: pred[i][b] is block b of case i.
inline RelativeL2 relative_l2_blocks(const std::vector<std::vector<Tensor>>& pred,
                                     const std::vector<std::vector<Tensor>>& target) {
    if (pred.size() != target.size()) throw DimensionError("relative_l2: case counts differ");
    std::vector<double> per(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i].size() != target[i].size()) throw DimensionError("relative_l2: block counts differ");
        std::vector<double> en, tn;
        for (std::size_t b = 0; b < pred[i].size(); ++b) {
            require_same_shape(pred[i][b], target[i][b], "relative_l2");
            double e = 0.0, t = 0.0;
            for (std::size_t q = 0; q < pred[i][b].size(); ++q) {
                const double d = pred[i][b][q] - target[i][b][q];
                e += d * d;
                t += target[i][b][q] * target[i][b][q];
            }
            en.push_back(std::sqrt(e));
            tn.push_back(std::sqrt(t));
        }
        per[i] = block_relative_l2(en, tn);
    }
    return summarize_relative_l2(std::move(per));
}

}  // namespace dpn
