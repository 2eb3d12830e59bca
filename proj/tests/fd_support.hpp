#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "lincomb/tape.hpp"

namespace lincomb::testing {

using Builder = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

struct FdResult {
    double rel_error = 0.0;
    double analytic_norm = 0.0;
};

// L = <f(x), R> with a fixed random R; compares tape gradients with central
// differences over every input entry.  `corrupt` perturbs the analytic side.
inline double project(const Builder& f, const std::vector<Matrix>& xs, const Matrix* R,
                      std::vector<Matrix>* grads) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const Matrix& x : xs) vars.push_back(tape.variable(x));
    ad::Var out = f(tape, vars);
    ad::Var loss = R ? ad::sum(ad::mul(out, tape.constant(*R))) : out;
    if (grads) {
        tape.backward(loss);
        grads->clear();
        for (const ad::Var& v : vars) grads->push_back(v.grad());
    }
    return loss.scalar();
}

inline FdResult fd_check(const Builder& f, std::vector<Matrix> xs, std::uint64_t seed, double eps = 1e-4,
                         bool corrupt = false) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix R;
    {
        ad::Tape probe;
        std::vector<ad::Var> vars;
        for (const Matrix& x : xs) vars.push_back(probe.variable(x));
        const Matrix& shape = f(probe, vars).value();
        R = Matrix(shape.rows(), shape.cols());
        for (double& r : R.data()) r = u(rng);
    }
    std::vector<Matrix> analytic;
    project(f, xs, &R, &analytic);
    if (corrupt) analytic[0].data()[0] += 0.01 * (1.0 + std::abs(analytic[0].data()[0]));

    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t t = 0; t < xs.size(); ++t)
        for (std::size_t i = 0; i < xs[t].size(); ++i) {
            const double keep = xs[t].data()[i];
            xs[t].data()[i] = keep + eps;
            const double up = project(f, xs, &R, nullptr);
            xs[t].data()[i] = keep - eps;
            const double dn = project(f, xs, &R, nullptr);
            xs[t].data()[i] = keep;
            const double num = (up - dn) / (2.0 * eps);
            const double ana = analytic[t].data()[i];
            diff2 += (ana - num) * (ana - num);
            a2 += ana * ana;
            n2 += num * num;
        }
    FdResult r;
    r.analytic_norm = std::sqrt(a2);
    r.rel_error = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
    return r;
}

struct PrimitiveCase {
    const char* name;
    // Draws a random shape and inputs, returns the builder.
    std::function<Builder(std::mt19937_64&, std::vector<Matrix>&)> make;
};

inline Matrix uniform(std::mt19937_64& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(r, c);
    for (double& x : m.data()) x = u(rng);
    return m;
}

inline std::size_t dim(std::mt19937_64& rng, std::size_t lo = 1, std::size_t hi = 5) {
    return lo + rng() % (hi - lo + 1);
}

inline std::vector<PrimitiveCase> primitive_cases() {
    using ad::Var;
    using V = const std::vector<Var>&;
    std::vector<PrimitiveCase> cases;
    auto unary = [&](const char* name, auto op, double lo = -1.0, double hi = 1.0) {
        cases.push_back({name, [op, lo, hi](std::mt19937_64& rng, std::vector<Matrix>& xs) -> Builder {
                             xs = {uniform(rng, dim(rng), dim(rng), lo, hi)};
                             return [op](ad::Tape&, V v) { return op(v[0]); };
                         }});
    };
    cases.push_back({"matmul", [](std::mt19937_64& rng, std::vector<Matrix>& xs) -> Builder {
                         const std::size_t n = dim(rng), k = dim(rng), m = dim(rng);
                         xs = {uniform(rng, n, k), uniform(rng, k, m)};
                         return [](ad::Tape&, V v) { return ad::matmul(v[0], v[1]); };
                     }});
    cases.push_back({"add", [](std::mt19937_64& rng, std::vector<Matrix>& xs) -> Builder {
                         const std::size_t n = dim(rng), m = dim(rng);
                         xs = {uniform(rng, n, m), uniform(rng, n, m)};
                         return [](ad::Tape&, V v) { return ad::add(v[0], v[1]); };
                     }});
    cases.push_back({"add_broadcast", [](std::mt19937_64& rng, std::vector<Matrix>& xs) -> Builder {
                         const std::size_t n = dim(rng, 2), m = dim(rng);
                         xs = {uniform(rng, n, m), uniform(rng, 1, m)};
                         return [](ad::Tape&, V v) { return ad::add(v[0], v[1]); };
                     }});
    cases.push_back({"sub", [](std::mt19937_64& rng, std::vector<Matrix>& xs) -> Builder {
                         const std::size_t n = dim(rng), m = dim(rng);
                         xs = {uniform(rng, n, m), uniform(rng, n, m)};
                         return [](ad::Tape&, V v) { return ad::sub(v[0], v[1]); };
                     }});
    cases.push_back({"mul", [](std::mt19937_64& rng, std::vector<Matrix>& xs) -> Builder {
                         const std::size_t n = dim(rng), m = dim(rng);
                         xs = {uniform(rng, n, m), uniform(rng, n, m)};
                         return [](ad::Tape&, V v) { return ad::mul(v[0], v[1]); };
                     }});
    unary("scale", [](Var a) { return ad::scale(a, -2.5); });
    unary("tanh", [](Var a) { return ad::tanh(a); }, -2.0, 2.0);
    cases.push_back({"relu", [](std::mt19937_64& rng, std::vector<Matrix>& xs) -> Builder {
                         // Keep entries away from the kink.
                         Matrix x = uniform(rng, dim(rng), dim(rng), 0.1, 1.0);
                         std::bernoulli_distribution flip(0.5);
                         for (double& e : x.data())
                             if (flip(rng)) e = -e;
                         xs = {x};
                         return [](ad::Tape&, V v) { return ad::relu(v[0]); };
                     }});
    unary("exp", [](Var a) { return ad::exp(a); });
    unary("log_softmax", [](Var a) { return ad::log_softmax(a); }, -3.0, 3.0);
    unary("softmax", [](Var a) { return ad::softmax(a); }, -3.0, 3.0);
    cases.push_back({"nll", [](std::mt19937_64& rng, std::vector<Matrix>& xs) -> Builder {
                         const std::size_t n = dim(rng), d = dim(rng, 2);
                         xs = {uniform(rng, n, d)};
                         Matrix y(n, d);
                         for (std::size_t r = 0; r < n; ++r) y(r, rng() % d) = 1.0;
                         return [y](ad::Tape&, V v) { return ad::nll(ad::log_softmax(v[0]), y); };
                     }});
    unary("sum", [](Var a) { return ad::sum(a); });
    unary("mean", [](Var a) { return ad::mean(a); });
    cases.push_back({"embed", [](std::mt19937_64& rng, std::vector<Matrix>& xs) -> Builder {
                         const std::size_t vocab = dim(rng, 2), h = dim(rng), n = dim(rng, 1, 7);
                         xs = {uniform(rng, vocab, h)};
                         std::vector<std::size_t> idx(n);
                         for (auto& i : idx) i = rng() % vocab;  // repeats exercise accumulation
                         return [idx](ad::Tape&, V v) { return ad::embed(v[0], idx); };
                     }});
    cases.push_back({"concat", [](std::mt19937_64& rng, std::vector<Matrix>& xs) -> Builder {
                         const std::size_t n = dim(rng);
                         xs = {uniform(rng, n, dim(rng)), uniform(rng, n, dim(rng))};
                         return [](ad::Tape&, V v) { return ad::concat(v[0], v[1]); };
                     }});
    cases.push_back({"slice_rows", [](std::mt19937_64& rng, std::vector<Matrix>& xs) -> Builder {
                         const std::size_t n = dim(rng, 2, 6);
                         xs = {uniform(rng, n, dim(rng))};
                         const std::size_t b = rng() % n, c = 1 + rng() % (n - b);
                         return [b, c](ad::Tape&, V v) { return ad::slice_rows(v[0], b, c); };
                     }});
    cases.push_back({"stack_rows", [](std::mt19937_64& rng, std::vector<Matrix>& xs) -> Builder {
                         const std::size_t m = dim(rng);
                         xs = {uniform(rng, dim(rng), m), uniform(rng, dim(rng), m)};
                         return [](ad::Tape&, V v) {
                             std::vector<Var> parts{v[0], v[1], v[0]};
                             return ad::stack_rows(parts);
                         };
                     }});
    return cases;
}

}  // namespace lincomb::testing
