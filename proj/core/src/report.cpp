#include "numprobe/report.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "numprobe/error.hpp"

namespace numprobe::report {
namespace {

bool numeric(const std::string& s) {
  if (s.empty()) return false;
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

std::string number(double v) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

std::string number(double v, int digits) {
  std::array<char, 64> buf{};
  const int n = std::snprintf(buf.data(), buf.size(), "%.*g", digits, v);
  return std::string(buf.data(), static_cast<std::size_t>(n));
}

Table::Table(std::vector<std::string> headers) : headers_(std::move(headers)) {}

void Table::add_row(std::vector<std::string> cells) {
  if (cells.size() != headers_.size())
    throw InputError("table row has " + std::to_string(cells.size()) +
                     " cells for " + std::to_string(headers_.size()) + " columns");
  rows_.push_back(std::move(cells));
}

void Table::write_csv(std::ostream& out) const {
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i)
      out << (i ? "," : "") << csv_cell(cells[i]);
    out << '\n';
  };
  line(headers_);
  for (const auto& r : rows_) line(r);
}

void Table::write_text(std::ostream& out) const {
  std::vector<std::size_t> width(headers_.size());
  for (std::size_t c = 0; c < headers_.size(); ++c) {
    width[c] = headers_[c].size();
    for (const auto& r : rows_) width[c] = std::max(width[c], r[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells, bool header) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string pad(width[c] - cells[c].size(), ' ');
      if (c) out << "  ";
      if (!header && numeric(cells[c])) out << pad << cells[c];
      else if (c + 1 == cells.size()) out << cells[c];
      else out << cells[c] << pad;
    }
    out << '\n';
  };
  line(headers_, true);
  std::size_t total = 0;
  for (std::size_t c = 0; c < width.size(); ++c) total += width[c] + (c ? 2 : 0);
  out << std::string(total, '-') << '\n';
  for (const auto& r : rows_) line(r, false);
}

void Table::save(const std::filesystem::path& stem) const {
  for (const char* ext : {".csv", ".txt"}) {
    std::filesystem::path p = stem;
    p += ext;
    std::ofstream out(p, std::ios::binary);
    if (!out) throw InputError("cannot open " + p.string() + " for writing");
    if (std::string_view(ext) == ".csv") write_csv(out);
    else write_text(out);
    if (!out) throw InputError("failed to write " + p.string());
  }
}

Table history_table(const nn::History& history) {
  Table t({"phase", "epoch", "train_loss", "val_loss", "learning_rate"});
  for (const auto& e : history)
    t.add_row({e.phase, std::to_string(e.epoch), number(e.train_loss),
               number(e.val_loss), number(e.learning_rate)});
  return t;
}

}  // namespace numprobe::report
