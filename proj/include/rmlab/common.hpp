#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rmlab {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Incompatible array/layer dimensions. Message names both sides.
struct ShapeError : Error {
    using Error::Error;
};

// Bad user-supplied parameter (invalid mixture, fraction outside [0,1], ...).
struct ConfigError : Error {
    using Error::Error;
};

// Batch too small for the requested loss/metric.
struct DegenerateBatchError : Error {
    using Error::Error;
};

// A finite-difference probe produced a non-finite loss; carries the
// parameter index that was being perturbed.
struct ProbeError : Error {
    std::size_t index;
    ProbeError(const std::string& msg, std::size_t idx) : Error(msg), index(idx) {}
};

// Referential integrity failure between datasets (dangling ids, ...).
struct DataError : Error {
    using Error::Error;
};

// Linear system could not be solved (rank-deficient / not positive definite).
struct SingularError : Error {
    using Error::Error;
};

// Metric undefined for the given input (e.g. silhouette on one class).
struct MetricError : Error {
    using Error::Error;
};

// Training produced a non-finite loss; carries the optimizer step index.
struct TrainingDivergedError : Error {
    std::size_t step;
    TrainingDivergedError(const std::string& msg, std::size_t s) : Error(msg), step(s) {}
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// FNV-1a over arbitrary bytes; used for stream derivation and content
// fingerprints in run manifests (not cryptographic).
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

// Derives an independent seed from (master, tag, item). Every module draws
// its randomness from streams derived this way so that item-level work can
// be re-ordered or sharded without changing results.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t item = 0);

// Seeded random stream. Deterministic for a fixed seed within one build.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : gen_(seed) {}

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(gen_); }
    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(gen_);
    }
    double gaussian() { return normal_(gen_); }
    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        return std::uniform_int_distribution<std::int64_t>(lo, hi)(gen_);
    }
    // Uniform index in [0, n).
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(n) - 1));
    }
    bool bernoulli(double p) { return uniform() < p; }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace rmlab
