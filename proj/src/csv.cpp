#include "splab/csv.hpp"

#include <charconv>
#include <cmath>

#include "splab/tensor.hpp"

namespace splab {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : path_(path), out_(path, std::ios::binary), columns_(header.size()) {
  if (!out_) throw Error("cannot write " + path.string());
  for (const auto& h : header) field(h);
  end_row();
}

CsvWriter& CsvWriter::field(const std::string& s) {
  if (pending_++ > 0) out_ << ',';
  out_ << s;
  return *this;
}

CsvWriter& CsvWriter::field(double v) { return field(format_double(v)); }

CsvWriter& CsvWriter::field(std::size_t v) { return field(std::to_string(v)); }

void CsvWriter::end_row() {
  if (pending_ != columns_)
    throw Error(path_.string() + ": row has " + std::to_string(pending_) + " fields, header has " +
                std::to_string(columns_));
  out_ << '\n';
  pending_ = 0;
  if (!out_) throw Error("write failed: " + path_.string());
}

void write_curve_csv(const std::filesystem::path& path, const std::string& metric, std::size_t layer,
                     const std::vector<double>& values) {
  CsvWriter w(path, {"index", metric + "_layer" + std::to_string(layer)});
  for (std::size_t i = 0; i < values.size(); ++i) {
    w.field(i).field(values[i]);
    w.end_row();
  }
}

}  // namespace splab
