// Copyright 2026 The wdm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace wdm {

// Configuration problems (bad keys, values, sweeps). CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem problems; carries the offending path. CLI exit code 3.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& what, const std::filesystem::path& path)
      : std::runtime_error(what + ": " + path.string()), path_(path) {}
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Full-precision, locale-independent numeric formatting for CSV cells.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

namespace detail {

template <typename T>
std::string to_cell(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "1" : "0";
  } else if constexpr (std::is_floating_point_v<T>) {
    return format_double(v);
  } else if constexpr (std::is_integral_v<T>) {
    return std::to_string(v);
  } else {
    return std::string(v);
  }
}

}  // namespace detail

// Minimal CSV emitter: header row up front, stable column order, doubles at
// full precision. Byte-identical output for identical inputs.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns)
      : path_(path), n_cols_(columns.size()) {
    out_.open(path);
    if (!out_) throw IoError("cannot open CSV for writing", path);
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (i != 0) out_ << ',';
      out_ << columns[i];
    }
    out_ << '\n';
  }

  template <typename... Ts>
  void row(const Ts&... cells) {
    if (sizeof...(cells) != n_cols_) {
      throw std::logic_error("CsvWriter: cell count does not match header");
    }
    std::size_t i = 0;
    ((out_ << (i++ != 0 ? "," : "") << detail::to_cell(cells)), ...);
    out_ << '\n';
    if (!out_) throw IoError("CSV write failed", path_);
  }

  void close() {
    if (out_.is_open()) {
      out_.close();
      if (out_.fail()) throw IoError("CSV close failed", path_);
    }
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t n_cols_{0};
};

inline void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw IoError("cannot create output directory", dir);
  }
}

}  // namespace wdm
