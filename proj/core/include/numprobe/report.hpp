#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "numprobe/nn.hpp"

namespace numprobe::report {

// Shortest decimal that round-trips the double.
std::string number(double v);
// Fixed number of significant digits.
std::string number(double v, int digits);

class Table {
 public:
  explicit Table(std::vector<std::string> headers);

  void add_row(std::vector<std::string> cells);
  const std::vector<std::string>& headers() const { return headers_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }

  void write_csv(std::ostream& out) const;
  // Columns padded to their widest cell; numbers right-aligned.
  void write_text(std::ostream& out) const;
  // Writes <stem>.csv and <stem>.txt.
  void save(const std::filesystem::path& stem) const;

 private:
  std::vector<std::string> headers_;
  std::vector<std::vector<std::string>> rows_;
};

Table history_table(const nn::History& history);

}  // namespace numprobe::report
