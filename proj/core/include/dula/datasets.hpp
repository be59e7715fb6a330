#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dula/rng.hpp"

namespace dula {

/// Binary classification data in the sparse `label index:value ...` form.
struct SparseDataset {
  struct Row {
    int label = 0;  // 0 or 1
    std::vector<std::pair<std::uint32_t, double>> features;  // 1-based, strictly increasing
    bool operator==(const Row&) const = default;
  };

  std::vector<Row> rows;
  std::size_t n_features = 0;

  std::size_t size() const noexcept { return rows.size(); }
  bool operator==(const SparseDataset&) const = default;
};

/// Labels -1/+1 (or 0/1) map to 0/1. Blank lines and `#` comments are skipped.
/// Throws ParseError carrying the 1-based line number.
SparseDataset parse_libsvm(std::istream& in, std::optional<std::size_t> forced_features = std::nullopt);
SparseDataset load_libsvm(const std::filesystem::path& path,
                          std::optional<std::size_t> forced_features = std::nullopt);
/// Writes labels as -1/+1 with shortest round-trip formatting of values.
void write_libsvm(std::ostream& out, const SparseDataset& data);

/// Deterministic shuffle under seed; first ceil(fraction * N) rows go to train.
std::pair<SparseDataset, SparseDataset> train_test_split(const SparseDataset& data,
                                                         double train_fraction, std::uint64_t seed);

/// Random equal-size (+-1) assignment of rows to agents.
struct Partition {
  std::vector<std::size_t> assignment;  // agent per row
  std::size_t agents = 0;
  std::uint64_t seed = 0;

  /// Row indices held by each agent, ascending.
  std::vector<std::vector<std::size_t>> shards() const;
};

Partition partition(std::size_t rows, std::size_t agents, std::uint64_t seed);

/// x ~ N(0, I_d), y ~ Bernoulli(sigmoid(true_w . x)). Every feature is stored.
SparseDataset synth_logreg(Rng& rng, std::size_t rows, std::size_t dim, std::span<const double> true_w);

/// Dense design matrix (rows x n_features) and 0/1 label vector for a subset of rows.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> to_dense(const SparseDataset& data,
                                                     std::span<const std::size_t> rows);
std::pair<Eigen::MatrixXd, Eigen::VectorXd> to_dense(const SparseDataset& data);

}  // namespace dula
