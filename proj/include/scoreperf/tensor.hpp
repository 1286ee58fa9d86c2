#pragma once

#include <cstddef>
#include <vector>

#include "scoreperf/rng.hpp"

namespace scoreperf {

// Dense row-major rank-2 tensor of 64-bit floats. Scalars are [1,1] and
// vectors [1,D]; everything on the tape is two-dimensional.
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    static Tensor zeros(std::size_t r, std::size_t c) { return Tensor(r, c); }
    static Tensor full(std::size_t r, std::size_t c, double v) {
        Tensor t(r, c);
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }
    static Tensor scalar(double v) {
        Tensor t(1, 1);
        t.data[0] = v;
        return t;
    }
    static Tensor randn(std::size_t r, std::size_t c, Rng& rng, double stddev = 1.0) {
        Tensor t(r, c);
        for (double& x : t.data) x = rng.normal() * stddev;
        return t;
    }

    std::size_t numel() const { return rows * cols; }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    double item() const { return data.at(0); }
};

} // namespace scoreperf
