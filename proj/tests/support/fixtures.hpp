#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fuserank/core_model.hpp"
#include "fuserank/random.hpp"

namespace fuserank::testing {

inline std::string make_id(const char* prefix, std::size_t i, int width = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
  return buf;
}

inline RawMatrix random_raw(Rng& rng, Modality m, std::size_t rows, std::size_t dim,
                            const char* prefix) {
  RawMatrix raw;
  raw.modality = m;
  raw.dim = dim;
  for (std::size_t r = 0; r < rows; ++r) raw.ids.push_back(make_id(prefix, r));
  for (std::size_t i = 0; i < rows * dim; ++i) raw.values.push_back(rng.gaussian());
  return raw;
}

inline EmbeddingMatrix random_unit(Rng& rng, Modality m, std::size_t rows, std::size_t dim,
                                   const char* prefix) {
  return normalize_rows(random_raw(rng, m, rows, dim, prefix));
}

// Coarsely quantised entries so that exact score ties are common.
inline EmbeddingMatrix quantised_unit(Rng& rng, Modality m, std::size_t rows, std::size_t dim,
                                      const char* prefix) {
  RawMatrix raw;
  raw.modality = m;
  raw.dim = dim;
  for (std::size_t r = 0; r < rows; ++r) {
    raw.ids.push_back(make_id(prefix, r));
    bool any = false;
    for (std::size_t i = 0; i < dim; ++i) {
      double v = static_cast<double>(rng.index(3)) - 1.0;
      if (i + 1 == dim && !any && v == 0.0) v = 1.0;
      any = any || v != 0.0;
      raw.values.push_back(v);
    }
  }
  return normalize_rows(raw);
}

// Removes the directory on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("fuserank-test-" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace fuserank::testing
