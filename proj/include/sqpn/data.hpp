#pragma once

#include <optional>
#include <string>

#include "json.hpp"
#include "sqpn/learn.hpp"
#include "sqpn/model.hpp"

namespace sqpn {

/// Parses a network document (JSON). The document is validated; parse and
/// validation problems throw with field context.
Network load_network(const std::string& text);
Network load_network_file(const std::string& path);

nlohmann::ordered_json network_document(const Network& net);
std::string save_network(const Network& net);

/// Comma-separated records of value names under a header of variable names.
/// Every variable must appear; cells must match declared value names; empty
/// cells are rejected (missing data is unsupported).
Dataset load_dataset(const std::string& text, const Network& net);
Dataset load_dataset_file(const std::string& path, const Network& net);

struct QueryReport {
  std::string query;
  std::string evidence;
  std::string objective;  // "influence", "marginal" or "conditional"
  Interval interval;      // certified outer interval
  Interval inner;         // incumbent interval
  std::optional<Sign> sign;
  double eps = 0.0;
  double gap = 0.0;
  long nodes = 0;
  std::string status;
  double gap_tol = 0.0;
  long max_nodes = 0;
  std::uint64_t seed = 0;
  std::optional<double> wall_ms;  // excluded by default so reports stay byte-stable
};

std::string write_report(const QueryReport& report);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace sqpn
