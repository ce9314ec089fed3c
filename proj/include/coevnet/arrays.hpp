#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace coevnet {

/// Dense row-major matrix of doubles. Used for K x K role matrices, N x N
/// weight tables and N x K per-node vectors at a single time step.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& values() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// One Matrix (N x K) per time step.
using NodeSeries = std::vector<Matrix>;

inline NodeSeries make_node_series(std::size_t times, std::size_t n, std::size_t k, double fill = 0.0) {
    return NodeSeries(times, Matrix(n, k, fill));
}

/// Length-K vectors indexed by (time, sender, receiver). Diagonal entries
/// (p == q) are allocated but never read.
class PairSeries {
public:
    PairSeries() = default;
    PairSeries(std::size_t times, std::size_t n, std::size_t k, double fill = 0.0)
        : times_(times), n_(n), k_(k), data_(times * n * n * k, fill) {}

    std::size_t times() const noexcept { return times_; }
    std::size_t nodes() const noexcept { return n_; }
    std::size_t roles() const noexcept { return k_; }

    std::span<double> at(std::size_t t, std::size_t p, std::size_t q) {
        return {data_.data() + offset(t, p, q), k_};
    }
    std::span<const double> at(std::size_t t, std::size_t p, std::size_t q) const {
        return {data_.data() + offset(t, p, q), k_};
    }

    std::vector<double>& values() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    bool operator==(const PairSeries&) const = default;

private:
    std::size_t offset(std::size_t t, std::size_t p, std::size_t q) const {
        return ((t * n_ + p) * n_ + q) * k_;
    }

    std::size_t times_ = 0;
    std::size_t n_ = 0;
    std::size_t k_ = 0;
    std::vector<double> data_;
};

/// Directed binary adjacency over N nodes. Self-loops are rejected.
class Snapshot {
public:
    Snapshot() = default;
    explicit Snapshot(std::size_t n) : n_(n), links_(n * n, 0) {}

    std::size_t size() const noexcept { return n_; }

    bool operator()(std::size_t p, std::size_t q) const { return links_[p * n_ + q] != 0; }

    void set(std::size_t p, std::size_t q, bool linked = true) {
        if (p == q && linked) {
            throw std::invalid_argument("self-loops are not allowed");
        }
        links_[p * n_ + q] = linked ? 1 : 0;
    }

    std::size_t edge_count() const {
        std::size_t count = 0;
        for (auto v : links_) count += v;
        return count;
    }

    bool operator==(const Snapshot&) const = default;

private:
    std::size_t n_ = 0;
    std::vector<std::uint8_t> links_;
};

}  // namespace coevnet
