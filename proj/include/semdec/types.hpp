#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace semdec {

using Index = Eigen::Index;

// Time runs along columns: a C x T matrix stores each time sample contiguously.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using ConstMatRef = Eigen::Ref<const Mat<Scalar>>;

using MatrixF = Mat<float>;
using MatrixD = Mat<double>;
using VectorF = Vec<float>;
using VectorD = Vec<double>;

using Rng = std::mt19937_64;

/// Derives an independent generator from a root seed and a list of stream ids
/// (subject, trial, purpose, ...). Identical inputs give identical streams.
inline Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream)
{
    std::vector<std::uint32_t> words;
    words.reserve(2 + 2 * stream.size());
    words.push_back(static_cast<std::uint32_t>(seed));
    words.push_back(static_cast<std::uint32_t>(seed >> 32));
    for (auto id : stream) {
        words.push_back(static_cast<std::uint32_t>(id));
        words.push_back(static_cast<std::uint32_t>(id >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

/// Malformed or inconsistent input data (shapes, files, annotations).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration values.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public DataError {
public:
    using DataError::DataError;
};

} // namespace semdec
