#pragma once

#include <variant>
#include <vector>

#include "dassim/assimilation/observations.hpp"
#include "dassim/numerics/rng.hpp"

namespace dassim {

using NoiseStd = std::variant<double, Vector>;

// Samples truth rows every, 2·every, ... (index 0 is the background
// instant and is never observed) and adds independent Gaussian noise.
inline ObservationSeries make_observations(const Matrix& truth, std::size_t every, const NoiseStd& noise_std, Rng& rng) {
    detail::require_dims(every >= 1, "make_observations: every must be at least 1");
    const std::size_t d = truth.cols();
    Vector stds = std::holds_alternative<double>(noise_std) ? Vector(d, std::get<double>(noise_std))
                                                            : std::get<Vector>(noise_std);
    detail::require_dims(stds.size() == d, "make_observations: per-dimension noise has the wrong length");
    std::vector<std::size_t> times;
    for (std::size_t t = every; t < truth.rows(); t += every) times.push_back(t);
    Matrix values(times.size(), d);
    for (std::size_t k = 0; k < times.size(); ++k)
        for (std::size_t j = 0; j < d; ++j) values(k, j) = truth(times[k], j) + (stds[j] == 0.0 ? 0.0 : stds[j] * rng.normal());
    return ObservationSeries(std::move(times), std::move(values));
}

}  // namespace dassim
