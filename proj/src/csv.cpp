/*
 * Copyright 2026 The snnbot Authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "snnbot/csv.hpp"

#include <charconv>
#include <cmath>

#include "snnbot/error.hpp"

namespace snnbot {

std::string format_double(double value) {
  if (value == 0.0) return "0";  // folds -0 into 0
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::filesystem::path& path,
                     std::initializer_list<std::string_view> header)
    : out_(path, std::ios::binary), columns_(header.size()) {
  if (!out_) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  bool first = true;
  for (const auto& h : header) {
    if (!first) out_ << ',';
    out_ << h;
    first = false;
  }
  out_ << '\n';
}

void CsvWriter::row(std::initializer_list<Cell> cells) {
  row(std::vector<Cell>(cells));
}

void CsvWriter::row(const std::vector<Cell>& cells) {
  if (cells.size() != columns_) {
    throw Error(ErrorKind::ShapeMismatch, "CSV row has " + std::to_string(cells.size()) +
                                              " cells, header has " + std::to_string(columns_));
  }
  bool first = true;
  for (const auto& cell : cells) {
    if (!first) out_ << ',';
    first = false;
    if (const auto* d = std::get_if<double>(&cell)) {
      out_ << format_double(*d);
    } else if (const auto* i = std::get_if<long long>(&cell)) {
      out_ << *i;
    } else {
      out_ << std::get<std::string>(cell);
    }
  }
  out_ << '\n';
}

}  // namespace snnbot
