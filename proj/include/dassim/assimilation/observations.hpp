#pragma once

#include <string>
#include <vector>

#include "dassim/numerics/matrix.hpp"

namespace dassim {

// Observations y_1..y_Ny at strictly increasing step indices. Index 0 is
// the background instant, so the first forwarding segment of a filter
// covers times[0] steps and segment k > 0 covers gaps[k - 1] steps.
struct ObservationSeries {
    std::vector<std::size_t> times;
    Matrix values;  // one row per observation
    std::vector<std::size_t> gaps;

    bool operator==(const ObservationSeries&) const = default;

    ObservationSeries() = default;

    ObservationSeries(std::vector<std::size_t> t, Matrix v) : times(std::move(t)), values(std::move(v)) {
        for (std::size_t k = 1; k < times.size(); ++k) gaps.push_back(times[k] - times[k - 1]);
        check();
    }

    ObservationSeries(std::vector<std::size_t> t, Matrix v, std::vector<std::size_t> g)
        : times(std::move(t)), values(std::move(v)), gaps(std::move(g)) {
        check();
    }

    // Observations at first, first + every, ... (one per row of v).
    static ObservationSeries uniform(Matrix v, std::size_t first, std::size_t every) {
        std::vector<std::size_t> t(v.rows());
        for (std::size_t k = 0; k < t.size(); ++k) t[k] = first + k * every;
        return ObservationSeries(std::move(t), std::move(v));
    }

    std::size_t size() const noexcept { return times.size(); }
    std::size_t obs_dim() const noexcept { return values.cols(); }
    Vector value(std::size_t k) const { return values.row_copy(k); }

    // Number of forward steps that lead up to observation k.
    std::size_t segment(std::size_t k) const { return k == 0 ? times[0] : gaps[k - 1]; }

    void check() const {
        detail::require_dims(values.rows() == times.size(),
                             "ObservationSeries: " + std::to_string(values.rows()) + " value rows for " +
                                 std::to_string(times.size()) + " times");
        detail::require_dims(gaps.size() + 1 == times.size() || (times.empty() && gaps.empty()),
                             "ObservationSeries: gaps must have one entry fewer than times");
        for (std::size_t k = 1; k < times.size(); ++k) {
            detail::require_dims(times[k] > times[k - 1], "ObservationSeries: times must be strictly increasing");
            detail::require_dims(gaps[k - 1] == times[k] - times[k - 1],
                                 "ObservationSeries: gap " + std::to_string(k - 1) + " disagrees with the times");
        }
    }
};

}  // namespace dassim
