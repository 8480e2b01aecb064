#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace camalign {

/// Comma-separated table with a header row. Double-quoted fields may hold commas.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of `name`; throws naming the column when absent.
  int column(const std::string& name) const;
  bool has_column(const std::string& name) const;
  double number(std::size_t row, const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

/// Same-person vs different-person bars from a histogram CSV
/// (bin_low,bin_high,same,different), each series normalized to unit area.
void plot_histogram(const std::filesystem::path& csv, const std::filesystem::path& png);

/// Rank-1 against K, one line per mask mode, from an experiment table with
/// k, mode and rank1 columns.
void plot_k_sweep(const std::filesystem::path& csv, const std::filesystem::path& png);

/// Scatter of pc1/pc2 from a feature export. Always writes `<stem>_camera.png`;
/// writes `<stem>_identity.png` when the identity column is present.
/// Returns the written files.
std::vector<std::filesystem::path> plot_projection(const std::filesystem::path& csv,
                                                   const std::filesystem::path& stem);

}  // namespace camalign
