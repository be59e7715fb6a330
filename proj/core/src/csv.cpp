#include "dula/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dula/error.hpp"

namespace dula {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, std::size_t line) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError(line, "bad number '" + s + "'");
  return v;
}

std::uint64_t parse_uint(const std::string& s, std::size_t line) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError(line, "bad integer '" + s + "'");
  return v;
}

std::string meta(const RunLog& log, const std::string& key, const std::string& fallback) {
  auto it = log.metadata.find(key);
  return it == log.metadata.end() ? fallback : it->second;
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw ParseError(0, "missing column '" + name + "'");
}

CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      t.header = split_line(line);
      continue;
    }
    if (line.empty()) continue;
    auto row = split_line(line);
    if (row.size() != t.header.size()) throw ParseError(line_no, "wrong field count");
    t.rows.push_back(std::move(row));
  }
  if (line_no == 0) throw ParseError(0, "empty CSV");
  return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_csv(in);
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  auto emit = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out << ',';
      out << fields[i];
    }
    out << '\n';
  };
  emit(table.header);
  for (const auto& row : table.rows) emit(row);
  if (!out) throw IoError("write failed for " + path.string());
}

void emit_csv(const RunLog& log, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const std::string hash = meta(log, "config_hash", "");

  std::size_t dim = 0;
  if (!log.samples.empty()) {
    dim = static_cast<std::size_t>(log.samples.front().w.size());
  } else {
    dim = static_cast<std::size_t>(std::stoull(meta(log, "dim", "0")));
  }

  CsvTable samples;
  samples.header = {"iter", "agent"};
  for (std::size_t j = 0; j < dim; ++j) samples.header.push_back("w" + std::to_string(j));
  samples.header.push_back("config_hash");
  for (const auto& s : log.samples) {
    std::vector<std::string> row{std::to_string(s.iter), std::to_string(s.agent)};
    for (Eigen::Index j = 0; j < s.w.size(); ++j) row.push_back(format_double(s.w(j)));
    row.push_back(hash);
    samples.rows.push_back(std::move(row));
  }
  write_csv(dir / "samples.csv", samples);

  CsvTable consensus;
  consensus.header = {"iter", "error_sq", "bound", "config_hash"};
  for (const auto& c : log.consensus) {
    consensus.rows.push_back({std::to_string(c.iter), format_double(c.error_sq), format_double(c.bound), hash});
  }
  write_csv(dir / "consensus.csv", consensus);

  CsvTable accuracy;
  accuracy.header = {"iter", "agent", "mean_acc", "std_acc", "config_hash"};
  for (const auto& a : log.accuracy) {
    accuracy.rows.push_back({std::to_string(a.iter), std::to_string(a.agent), format_double(a.mean_acc),
                             format_double(a.std_acc), hash});
  }
  write_csv(dir / "accuracy.csv", accuracy);

  CsvTable metadata;
  metadata.header = {"key", "value"};
  for (const auto& [k, v] : log.metadata) metadata.rows.push_back({k, v});
  if (log.divergence) metadata.rows.push_back({"divergence", *log.divergence});
  write_csv(dir / "metadata.csv", metadata);
}

std::vector<SampleRecord> read_samples(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t iter = t.column("iter");
  const std::size_t agent = t.column("agent");
  std::vector<std::size_t> comps;
  for (std::size_t j = 0;; ++j) {
    auto it = std::find(t.header.begin(), t.header.end(), "w" + std::to_string(j));
    if (it == t.header.end()) break;
    comps.push_back(static_cast<std::size_t>(it - t.header.begin()));
  }
  std::vector<SampleRecord> out;
  std::size_t line = 1;
  for (const auto& row : t.rows) {
    ++line;
    SampleRecord s{parse_uint(row[iter], line), parse_uint(row[agent], line), Vector(comps.size())};
    for (std::size_t j = 0; j < comps.size(); ++j) s.w(static_cast<Eigen::Index>(j)) = parse_double(row[comps[j]], line);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ConsensusRecord> read_consensus(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t iter = t.column("iter");
  const std::size_t err = t.column("error_sq");
  const std::size_t bound = t.column("bound");
  std::vector<ConsensusRecord> out;
  std::size_t line = 1;
  for (const auto& row : t.rows) {
    ++line;
    out.push_back({parse_uint(row[iter], line), parse_double(row[err], line), parse_double(row[bound], line)});
  }
  return out;
}

std::vector<AccuracyRecord> read_accuracy(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t iter = t.column("iter");
  const std::size_t agent = t.column("agent");
  const std::size_t mean = t.column("mean_acc");
  const std::size_t sd = t.column("std_acc");
  std::vector<AccuracyRecord> out;
  std::size_t line = 1;
  for (const auto& row : t.rows) {
    ++line;
    out.push_back({parse_uint(row[iter], line), parse_uint(row[agent], line), parse_double(row[mean], line),
                   parse_double(row[sd], line)});
  }
  return out;
}

}  // namespace dula
