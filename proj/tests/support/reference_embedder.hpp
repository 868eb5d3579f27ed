#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>

namespace nlplan::oracle {

// Reference bag-of-words embedder written from its definition: lowercase
// alphanumeric tokens, FNV-1a 64 into 256 buckets, cosine of bucket counts.
inline std::map<std::size_t, double> bucket_counts(const std::string& text) {
  std::map<std::size_t, double> counts;
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : token) {
      h ^= c;
      h *= 1099511628211ull;
    }
    counts[h % 256] += 1;
    token.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      token += static_cast<char>(std::tolower(c));
    } else {
      flush();
    }
  }
  flush();
  return counts;
}

inline double reference_cosine(const std::string& a, const std::string& b) {
  const auto ca = bucket_counts(a);
  const auto cb = bucket_counts(b);
  double dot = 0, na = 0, nb = 0;
  for (const auto& [t, v] : ca) {
    na += v * v;
    if (auto it = cb.find(t); it != cb.end()) dot += v * it->second;
  }
  for (const auto& [t, v] : cb) nb += v * v;
  return na == 0 || nb == 0 ? 0 : dot / std::sqrt(na * nb);
}

}  // namespace nlplan::oracle
