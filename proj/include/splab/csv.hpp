#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace splab {

/// Shortest round-trip decimal form; "inf", "-inf" and "nan" for non-finite values.
std::string format_double(double v);

/// Writes comma-separated rows with a header. Fields are not quoted, so
/// callers keep commas out of them.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  CsvWriter& field(const std::string& s);
  CsvWriter& field(double v);
  CsvWriter& field(std::size_t v);
  void end_row();
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t columns_;
  std::size_t pending_ = 0;
};

/// index,value rows under a header naming the metric and layer.
void write_curve_csv(const std::filesystem::path& path, const std::string& metric, std::size_t layer,
                     const std::vector<double>& values);

}  // namespace splab
