#include "dula/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>
#include <string_view>

#include "dula/error.hpp"
#include "dula/models.hpp"

namespace dula {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(std::string_view token, std::size_t line) {
  double value = 0.0;
  const char* begin = token.data();
  const char* end = token.data() + token.size();
  if (begin != end && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw ParseError(line, "non-numeric value '" + std::string(token) + "'");
  }
  return value;
}

int parse_label(std::string_view token, std::size_t line) {
  const double raw = parse_double(token, line);
  if (raw == 1.0) return 1;
  if (raw == -1.0 || raw == 0.0) return 0;
  throw ParseError(line, "label must be -1, 0 or +1, got '" + std::string(token) + "'");
}

}  // namespace

SparseDataset parse_libsvm(std::istream& in, std::optional<std::size_t> forced_features) {
  SparseDataset out;
  std::string text;
  std::size_t line_no = 0;
  std::size_t max_index = 0;

  while (std::getline(in, text)) {
    ++line_no;
    std::string_view line = text;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    SparseDataset::Row row;
    std::size_t pos = 0;
    bool first = true;
    while (pos < line.size()) {
      const auto stop = line.find_first_of(" \t", pos);
      const auto token = line.substr(pos, stop == std::string_view::npos ? line.size() - pos : stop - pos);
      pos = stop == std::string_view::npos ? line.size() : line.find_first_not_of(" \t", stop);
      if (pos == std::string_view::npos) pos = line.size();

      if (first) {
        row.label = parse_label(token, line_no);
        first = false;
        continue;
      }
      const auto colon = token.find(':');
      if (colon == std::string_view::npos || colon == 0 || colon + 1 == token.size()) {
        throw ParseError(line_no, "malformed feature token '" + std::string(token) + "'");
      }
      std::uint32_t index = 0;
      const auto idx_text = token.substr(0, colon);
      auto [ptr, ec] = std::from_chars(idx_text.data(), idx_text.data() + idx_text.size(), index);
      if (ec != std::errc() || ptr != idx_text.data() + idx_text.size() || index == 0) {
        throw ParseError(line_no, "bad feature index '" + std::string(idx_text) + "'");
      }
      if (!row.features.empty() && index <= row.features.back().first) {
        throw ParseError(line_no, "feature indices not increasing");
      }
      row.features.emplace_back(index, parse_double(token.substr(colon + 1), line_no));
      max_index = std::max<std::size_t>(max_index, index);
    }
    out.rows.push_back(std::move(row));
  }

  if (forced_features) {
    if (max_index > *forced_features) {
      throw ParseError(line_no, "feature index " + std::to_string(max_index) +
                                    " exceeds forced dimension " + std::to_string(*forced_features));
    }
    out.n_features = *forced_features;
  } else {
    out.n_features = max_index;
  }
  return out;
}

SparseDataset load_libsvm(const std::filesystem::path& path, std::optional<std::size_t> forced_features) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_libsvm(in, forced_features);
}

void write_libsvm(std::ostream& out, const SparseDataset& data) {
  char buf[64];
  for (const auto& row : data.rows) {
    out << (row.label == 1 ? "+1" : "-1");
    for (auto [idx, value] : row.features) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
      out << ' ' << idx << ':' << std::string_view(buf, static_cast<std::size_t>(end - buf));
    }
    out << '\n';
  }
}

std::pair<SparseDataset, SparseDataset> train_test_split(const SparseDataset& data,
                                                         double train_fraction, std::uint64_t seed) {
  if (data.rows.empty()) throw InvalidParameter("cannot split an empty dataset");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InvalidParameter("train fraction must lie in (0,1)");
  }
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed, 0, StreamPurpose::kData);
  std::shuffle(order.begin(), order.end(), rng);

  const auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(data.size())));
  SparseDataset train, test;
  train.n_features = test.n_features = data.n_features;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? train : test).rows.push_back(data.rows[order[i]]);
  }
  return {std::move(train), std::move(test)};
}

std::vector<std::vector<std::size_t>> Partition::shards() const {
  std::vector<std::vector<std::size_t>> out(agents);
  for (std::size_t row = 0; row < assignment.size(); ++row) out[assignment[row]].push_back(row);
  return out;
}

Partition partition(std::size_t rows, std::size_t agents, std::uint64_t seed) {
  if (agents == 0) throw InvalidParameter("partition needs at least one agent");
  if (rows < agents) {
    throw InvalidParameter("cannot split " + std::to_string(rows) + " rows across " +
                           std::to_string(agents) + " agents");
  }
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed, 1, StreamPurpose::kData);
  std::shuffle(order.begin(), order.end(), rng);

  Partition p;
  p.agents = agents;
  p.seed = seed;
  p.assignment.resize(rows);
  for (std::size_t pos = 0; pos < rows; ++pos) p.assignment[order[pos]] = pos % agents;
  return p;
}

SparseDataset synth_logreg(Rng& rng, std::size_t rows, std::size_t dim, std::span<const double> true_w) {
  if (rows == 0 || dim == 0) throw InvalidParameter("synthetic dataset needs rows >= 1 and dim >= 1");
  if (true_w.size() != dim) throw InvalidParameter("true_w has the wrong dimension");
  SparseDataset out;
  out.n_features = dim;
  out.rows.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    SparseDataset::Row row;
    row.features.reserve(dim);
    double z = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double x = rng.normal();
      row.features.emplace_back(static_cast<std::uint32_t>(j + 1), x);
      z += true_w[j] * x;
    }
    row.label = rng.uniform() < sigmoid(z) ? 1 : 0;
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> to_dense(const SparseDataset& data,
                                                     std::span<const std::size_t> rows) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()),
                                            static_cast<Eigen::Index>(data.n_features));
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = data.rows.at(rows[r]);
    for (auto [idx, value] : row.features) {
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(idx - 1)) = value;
    }
    y(static_cast<Eigen::Index>(r)) = row.label;
  }
  return {std::move(x), std::move(y)};
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> to_dense(const SparseDataset& data) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  return to_dense(data, all);
}

}  // namespace dula
