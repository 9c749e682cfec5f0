#pragma once

#include <cmath>
#include <string>

#include "dassim/numerics/matrix.hpp"

namespace dassim {

struct ShallowWaterConfig {
    std::size_t nx = 64;
    std::size_t ny = 64;
    double g = 1.0;
    double b_drag = 0.0;
    double dk = 1e-4;
    double k_final = 0.8;
    double dx = 1.0;  // grid spacing, same in both directions
    double base_depth = 1.0;
    // Cylinder of raised water; the center defaults to the middle of the grid.
    double cylinder_height = 0.1;
    double cylinder_radius = 8.0;  // in grid cells
    double center_x = -1.0;
    double center_y = -1.0;

    void validate() const {
        if (nx < 3 || ny < 3) throw TypeMismatch("shallow_water: grid must be at least 3x3");
        if (!(dk > 0.0)) throw TypeMismatch("shallow_water: dk must be positive");
        if (!(dx > 0.0)) throw TypeMismatch("shallow_water: dx must be positive");
        if (!(k_final > 0.0)) throw TypeMismatch("shallow_water: k_final must be positive");
    }

    std::size_t steps() const { return static_cast<std::size_t>(std::llround(k_final / dk)); }
    double cx() const { return center_x < 0.0 ? 0.5 * static_cast<double>(nx - 1) : center_x; }
    double cy() const { return center_y < 0.0 ? 0.5 * static_cast<double>(ny - 1) : center_y; }
};

// Fields indexed (i, j) with i along x (rows) and j along y (columns).
// u(i, j) is the x-velocity on the face between cells (i, j) and (i+1, j),
// v(i, j) the y-velocity between (i, j) and (i, j+1); faces on the last
// row or column are walls and stay zero.
struct FieldSnapshot {
    Matrix u;
    Matrix v;
    Matrix h;
    std::size_t k = 0;

    bool all_finite() const { return u.all_finite() && v.all_finite() && h.all_finite(); }
};

// Still water at base depth with a cylinder of extra height.
inline FieldSnapshot shallow_water_initial(const ShallowWaterConfig& c) {
    c.validate();
    FieldSnapshot s{Matrix(c.nx, c.ny), Matrix(c.nx, c.ny), Matrix(c.nx, c.ny, c.base_depth), 0};
    const double r2 = c.cylinder_radius * c.cylinder_radius;
    for (std::size_t i = 0; i < c.nx; ++i) {
        for (std::size_t j = 0; j < c.ny; ++j) {
            const double di = static_cast<double>(i) - c.cx();
            const double dj = static_cast<double>(j) - c.cy();
            if (di * di + dj * dj <= r2) s.h(i, j) += c.cylinder_height;
        }
    }
    return s;
}

// One first-order step of
//   u_t = -g h_x - b u,  v_t = -g h_y - b v,  h_t = -(uh)_x - (vh)_y.
// Velocities are advanced first with forward differences of h; the depth
// then uses backward differences of the new fluxes. Wall faces carry no
// flux, so Σh is conserved up to rounding.
inline FieldSnapshot shallow_water_step(const FieldSnapshot& s, const ShallowWaterConfig& c) {
    detail::require_dims(s.h.rows() == c.nx && s.h.cols() == c.ny && s.u.rows() == c.nx && s.u.cols() == c.ny &&
                             s.v.rows() == c.nx && s.v.cols() == c.ny,
                         "shallow_water_step: field shapes do not match the grid");
    const std::size_t nx = c.nx, ny = c.ny;
    const double a = c.dk / c.dx;
    FieldSnapshot n{Matrix(nx, ny), Matrix(nx, ny), s.h, s.k + 1};
    for (std::size_t i = 0; i + 1 < nx; ++i)
        for (std::size_t j = 0; j < ny; ++j)
            n.u(i, j) = s.u(i, j) - c.g * a * (s.h(i + 1, j) - s.h(i, j)) - c.dk * c.b_drag * s.u(i, j);
    for (std::size_t i = 0; i < nx; ++i)
        for (std::size_t j = 0; j + 1 < ny; ++j)
            n.v(i, j) = s.v(i, j) - c.g * a * (s.h(i, j + 1) - s.h(i, j)) - c.dk * c.b_drag * s.v(i, j);

    auto flux_x = [&](std::size_t i, std::size_t j) { return n.u(i, j) * 0.5 * (s.h(i, j) + s.h(i + 1, j)); };
    auto flux_y = [&](std::size_t i, std::size_t j) { return n.v(i, j) * 0.5 * (s.h(i, j) + s.h(i, j + 1)); };
    for (std::size_t i = 0; i < nx; ++i) {
        for (std::size_t j = 0; j < ny; ++j) {
            const double east = i + 1 < nx ? flux_x(i, j) : 0.0;
            const double west = i > 0 ? flux_x(i - 1, j) : 0.0;
            const double north = j + 1 < ny ? flux_y(i, j) : 0.0;
            const double south = j > 0 ? flux_y(i, j - 1) : 0.0;
            n.h(i, j) = s.h(i, j) - a * ((east - west) + (north - south));
        }
    }
    return n;
}

// Rows of flattened fields (row-major over (i, j)) every `record_every`
// steps, starting with the initial snapshot: `records` rows each.
struct ShallowWaterRecords {
    Matrix u;
    Matrix v;
    Matrix h;
};

inline ShallowWaterRecords shallow_water_run(const ShallowWaterConfig& c, std::size_t records,
                                             std::size_t record_every = 1) {
    c.validate();
    detail::require_dims(records >= 1 && record_every >= 1, "shallow_water_run: need at least one record");
    const std::size_t cells = c.nx * c.ny;
    ShallowWaterRecords out{Matrix(records, cells), Matrix(records, cells), Matrix(records, cells)};
    FieldSnapshot s = shallow_water_initial(c);
    for (std::size_t r = 0; r < records; ++r) {
        if (r > 0)
            for (std::size_t k = 0; k < record_every; ++k) s = shallow_water_step(s, c);
        if (!s.all_finite()) throw NanEncountered("shallow_water_run: fields became non-finite at step " + std::to_string(s.k));
        out.u.set_row(r, s.u.data());
        out.v.set_row(r, s.v.data());
        out.h.set_row(r, s.h.data());
    }
    return out;
}

}  // namespace dassim
