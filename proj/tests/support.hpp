#pragma once

#include <cmath>
#include <random>

#include "lincomb/matrix.hpp"

namespace lincomb::testing {

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double lo = 0.0,
                            double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(rows, cols);
    for (double& x : m.data()) x = u(rng);
    return m;
}

inline Matrix log_of(const Matrix& p) {
    Matrix out = p;
    for (double& x : out.data()) x = std::log(x);
    return out;
}

inline Matrix one_hot_rows(std::initializer_list<int> classes, std::size_t d) {
    Matrix y(classes.size(), d);
    std::size_t r = 0;
    for (int c : classes) y(r++, static_cast<std::size_t>(c)) = 1.0;
    return y;
}

}  // namespace lincomb::testing
