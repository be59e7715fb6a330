#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dula/sampler.hpp"

namespace dula {

/// Shortest round-trip decimal text ('.' separator, locale independent).
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws ParseError(0, ...) if absent.
  std::size_t column(const std::string& name) const;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv(const std::filesystem::path& path);
/// Writes header and rows with LF line endings; throws IoError naming the path.
void write_csv(const std::filesystem::path& path, const CsvTable& table);

/// samples.csv:   iter,agent,w0..w{d-1},config_hash
/// consensus.csv: iter,error_sq,bound,config_hash
/// accuracy.csv:  iter,agent,mean_acc,std_acc,config_hash
/// metadata.csv:  key,value
/// The config hash and parameter dimension are taken from log.metadata
/// ("config_hash", "dim"). Headers are written even for empty logs.
void emit_csv(const RunLog& log, const std::filesystem::path& dir);

std::vector<SampleRecord> read_samples(const std::filesystem::path& path);
std::vector<ConsensusRecord> read_consensus(const std::filesystem::path& path);
std::vector<AccuracyRecord> read_accuracy(const std::filesystem::path& path);

}  // namespace dula
