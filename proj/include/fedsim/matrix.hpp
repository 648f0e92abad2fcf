#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "fedsim/error.hpp"

namespace fedsim {

// Dense row-major matrix of doubles. Batches are stored one sample per row.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
    Matrix(int r, int c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
        require(data.size() == static_cast<std::size_t>(r) * c, ErrorCode::invalid_argument,
                "matrix data size does not match dimensions");
    }

    double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }

    std::size_t size() const { return data.size(); }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(const std::vector<double>& v) { return std::sqrt(dot(v, v)); }

}  // namespace fedsim
