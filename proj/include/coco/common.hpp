// Apache License, Version 2.0, refer to LICENSE.txt
#ifndef COCO_COMMON_HPP
#define COCO_COMMON_HPP
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace coco {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;
using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// Error types
// ---------------------------------------------------------------------------

// Invalid configuration or invalid input detected before any computation.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure (non-convergence, non-finite values, residual too large).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// A conditional or posterior density with zero total mass. Callers typically
// zero-weight the offending particle rather than aborting.
class DegenerateDensityError : public NumericalError {
public:
    explicit DegenerateDensityError(const std::string& msg) : NumericalError(msg) {}
};

// Every particle assigned zero likelihood in floating point.
class EvidenceCollapseError : public NumericalError {
public:
    explicit EvidenceCollapseError(const std::string& msg) : NumericalError(msg) {}
};

// Paired simulation runs disagree on the interaction schedule.
class PairingError : public std::runtime_error {
public:
    explicit PairingError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Random draws
// ---------------------------------------------------------------------------
// Fresh distribution objects per call: no hidden distribution state survives
// between draws, so a given engine state always maps to the same value.

inline double draw_uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double draw_normal(Rng& rng) {
    return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline Vector draw_standard_normal(Index n, Rng& rng) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = draw_normal(rng);
    return v;
}

// Child engine derived from a master seed and a stream tag, so that
// independent subsystems never share a stream.
inline Rng make_stream(std::uint64_t master_seed, std::uint64_t stream_tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(master_seed & 0xffffffffu),
                      static_cast<std::uint32_t>(master_seed >> 32),
                      static_cast<std::uint32_t>(stream_tag & 0xffffffffu),
                      static_cast<std::uint32_t>(stream_tag >> 32)};
    return Rng(seq);
}

// Categorical draw by inverse CDF in index order.
inline Index draw_categorical(const Vector& probs, Rng& rng) {
    const double u = draw_uniform01(rng);
    double cum = 0.0;
    for (Index i = 0; i < probs.size(); ++i) {
        cum += probs[i];
        if (u < cum) return i;
    }
    return probs.size() - 1;  // guard against cum < 1 from rounding
}

// ---------------------------------------------------------------------------
// Deterministic parallel loop
// ---------------------------------------------------------------------------
// Splits [0, n) into contiguous chunks, one per worker. Each index must write
// only to its own output slot; the result is then independent of the worker
// count, which is what makes COCO_THREADS a pure throughput knob.

inline int worker_count() {
    if (const char* env = std::getenv("COCO_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

template <typename Body>
void parallel_for(Index n, Body&& body) {
    if (n <= 0) return;
    const int workers = std::min<Index>(worker_count(), n);
    if (workers <= 1) {
        for (Index i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(workers - 1);
    const Index chunk = (n + workers - 1) / workers;
    std::vector<std::exception_ptr> errors(workers);
    for (int w = 1; w < workers; ++w) {
        const Index lo = w * chunk;
        const Index hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        threads.emplace_back([&body, &errors, w, lo, hi] {
            try {
                for (Index i = lo; i < hi; ++i) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    try {
        for (Index i = 0; i < std::min(chunk, n); ++i) body(i);
    } catch (...) {
        errors[0] = std::current_exception();
    }
    for (auto& t : threads) t.join();
    for (const auto& err : errors)
        if (err) std::rethrow_exception(err);
}

}  // namespace coco

#endif  // COCO_COMMON_HPP
