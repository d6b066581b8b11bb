#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace sadprune {

/// Lower-cased ASCII alphanumeric runs of length >= 2.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.size() >= 2) out.push_back(cur);
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

/// TF-IDF with a vocabulary capped at the `max_features` most frequent terms (by document
/// frequency, ties alphabetical), smoothed idf ln((1+n)/(1+df)) + 1 and L2-normalized rows.
class tfidf_vectorizer {
 public:
  explicit tfidf_vectorizer(std::size_t max_features = 2000) : max_features_(max_features) {}

  void fit(const std::vector<std::string>& documents) {
    std::map<std::string, std::size_t> df;
    for (const auto& doc : documents) {
      auto terms = tokenize(doc);
      std::sort(terms.begin(), terms.end());
      terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
      for (auto& t : terms) ++df[t];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(df.begin(), df.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (ranked.size() > max_features_) ranked.resize(max_features_);
    std::sort(ranked.begin(), ranked.end());
    vocabulary_.clear();
    terms_.clear();
    idf_.clear();
    const double n = static_cast<double>(documents.size());
    for (const auto& [term, count] : ranked) {
      vocabulary_.emplace(term, terms_.size());
      terms_.push_back(term);
      idf_.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
    }
  }

  std::size_t features() const { return terms_.size(); }
  const std::vector<std::string>& terms() const { return terms_; }
  const std::vector<double>& idf() const { return idf_; }

  std::vector<double> transform(const std::string& document) const {
    std::vector<double> row(terms_.size(), 0.0);
    for (const auto& t : tokenize(document)) {
      if (auto it = vocabulary_.find(t); it != vocabulary_.end()) row[it->second] += 1.0;
    }
    double norm = 0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      row[j] *= idf_[j];
      norm += row[j] * row[j];
    }
    if (norm > 0) {
      norm = std::sqrt(norm);
      for (auto& v : row) v /= norm;
    }
    return row;
  }

 private:
  std::size_t max_features_;
  std::unordered_map<std::string, std::size_t> vocabulary_;
  std::vector<std::string> terms_;
  std::vector<double> idf_;
};

}  // namespace sadprune
