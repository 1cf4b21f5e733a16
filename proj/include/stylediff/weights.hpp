/* Copyright (c) 2026 The stylediff Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#pragma once

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "stylediff/errors.hpp"

namespace stylediff {

/// Environment variable naming the pretrained-weight cache directory.
inline constexpr const char* kWeightsDirEnv = "STYLEDIFF_WEIGHTS_DIR";

/// SHA-256 of vgg16.sdwt as produced by tools/fetch_weights.py.
inline constexpr const char* kVgg16Sha256 =
    "e5cfd7502f310369358fd38c5a5bf74b6fa7489a9fcf996e1a2f5975fd6f0abe";

/// $STYLEDIFF_WEIGHTS_DIR, else $XDG_CACHE_HOME/stylediff, else
/// ~/.cache/stylediff.
inline std::filesystem::path weights_cache_dir() {
  if (const char* env = std::getenv(kWeightsDirEnv); env && *env) return env;
  if (const char* xdg = std::getenv("XDG_CACHE_HOME"); xdg && *xdg)
    return std::filesystem::path(xdg) / "stylediff";
  const char* home = std::getenv("HOME");
  return std::filesystem::path(home ? home : ".") / ".cache" / "stylediff";
}

inline std::string sha256_hex(const std::vector<unsigned char>& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr))
    throw IoError("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

struct WeightTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

struct WeightFile {
  std::string sha256;
  std::map<std::string, WeightTensor> tensors;

  const WeightTensor& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw IoError("weight tensor missing: " + name);
    return it->second;
  }
};

/// Parses an SDWT file. When `expected_sha256` is non-empty the file digest
/// must match it.
inline WeightFile read_weight_file(const std::filesystem::path& path, const std::string& expected_sha256) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("pretrained weights not found at " + path.string() +
                  " (run tools/fetch_weights.py or set " + kWeightsDirEnv + ")");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  WeightFile wf;
  wf.sha256 = sha256_hex(bytes);
  if (!expected_sha256.empty() && wf.sha256 != expected_sha256)
    throw IoError("checksum mismatch for " + path.string() + ": got " + wf.sha256 + ", expected " +
                  expected_sha256);

  std::size_t pos = 0;
  auto take = [&](void* dst, std::size_t n) {
    if (pos + n > bytes.size()) throw IoError("truncated weight file " + path.string());
    std::memcpy(dst, bytes.data() + pos, n);
    pos += n;
  };
  auto u32 = [&] {
    std::uint32_t v;
    take(&v, 4);
    return v;
  };
  char magic[4];
  take(magic, 4);
  if (std::memcmp(magic, "SDWT", 4) != 0 || u32() != 1) throw IoError("not an SDWT v1 file: " + path.string());
  const std::uint32_t count = u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(u32(), '\0');
    take(name.data(), name.size());
    WeightTensor t;
    t.dims.resize(u32());
    std::size_t n = 1;
    for (auto& d : t.dims) {
      d = u32();
      n *= d;
    }
    t.data.resize(n);
    take(t.data.data(), n * sizeof(float));
    wf.tensors.emplace(std::move(name), std::move(t));
  }
  return wf;
}

/// Process-wide cache so repeated runs (sweeps) parse each file once.
inline std::shared_ptr<const WeightFile> load_weights_cached(const std::filesystem::path& path,
                                                             const std::string& expected_sha256) {
  static std::mutex mu;
  static std::map<std::string, std::shared_ptr<const WeightFile>> cache;
  std::lock_guard lock(mu);
  const std::string key = path.string() + "|" + expected_sha256;
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  auto wf = std::make_shared<const WeightFile>(read_weight_file(path, expected_sha256));
  cache.emplace(key, wf);
  return wf;
}

}  // namespace stylediff
