#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "green_route/errors.hpp"

namespace green_route {

/// The scaled simplex { v in R^dimension : v >= 0, sum v = total }.
struct SimplexSpec {
    std::size_t dimension = 1;
    double total = 0.0;
};

/// Euclidean projection onto the scaled simplex, written into `out`.
///
/// Sort-and-threshold: find t with sum_j max(v_j - t, 0) = total, then clip.
/// `scratch` avoids an allocation per call inside solver loops.
inline void project_onto_simplex(double total, std::span<const double> point, std::span<double> out,
                                 std::vector<double>& scratch) {
    if (!(total >= 0.0) || !std::isfinite(total)) throw DomainError("simplex total must be finite and >= 0");
    if (out.size() != point.size() || point.empty()) throw StructuralError("projection dimension mismatch");
    for (double v : point) {
        if (!std::isfinite(v)) throw DomainError("cannot project a non-finite point");
    }
    if (total == 0.0) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
    }

    scratch.assign(point.begin(), point.end());
    std::sort(scratch.begin(), scratch.end(), std::greater<>());

    double prefix = 0.0;
    double threshold = 0.0;
    for (std::size_t k = 0; k < scratch.size(); ++k) {
        prefix += scratch[k];
        const double candidate = (prefix - total) / static_cast<double>(k + 1);
        // The active set is the longest prefix whose smallest entry stays above t.
        if (scratch[k] - candidate > 0.0) threshold = candidate;
    }
    for (std::size_t k = 0; k < point.size(); ++k) out[k] = std::max(point[k] - threshold, 0.0);
}

[[nodiscard]] inline std::vector<double> project(const SimplexSpec& spec, std::span<const double> point) {
    if (spec.dimension < 1) throw DomainError("simplex dimension must be >= 1");
    if (point.size() != spec.dimension) throw StructuralError("point dimension does not match the simplex");
    std::vector<double> out(point.size());
    std::vector<double> scratch;
    project_onto_simplex(spec.total, point, out, scratch);
    return out;
}

}  // namespace green_route
