#include "switchcap/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace switchcap {

namespace {

/// Caption positions holding a lexicon noun of the polarity.
std::vector<std::size_t> noun_positions(const TokenSeq& caption, const AnpLexicon& lexicon,
                                        Polarity polarity) {
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < caption.size(); ++i) {
    if (lexicon.is_noun(caption[i], polarity)) positions.push_back(i);
  }
  return positions;
}

TokenSeq insert_before(const TokenSeq& caption, std::size_t position,
                       const std::string& word) {
  TokenSeq out = caption;
  out.insert(out.begin() + static_cast<std::ptrdiff_t>(position), word);
  return out;
}

}  // namespace

AdjectiveStats build_adjective_stats(const std::vector<TokenSeq>& sentiment_captions,
                                     const AnpLexicon& lexicon, Polarity polarity) {
  AdjectiveStats stats;
  for (const auto& caption : sentiment_captions) {
    for (std::size_t i = 0; i + 1 < caption.size(); ++i) {
      if (lexicon.contains(caption[i], caption[i + 1], polarity)) {
        stats.counts[caption[i + 1]][caption[i]] += 1;
      }
    }
  }
  return stats;
}

TokenSeq anp_replace(const TokenSeq& caption, const AdjectiveStats& stats,
                     const AnpLexicon& lexicon, Polarity polarity, Rng& rng) {
  const auto positions = noun_positions(caption, lexicon, polarity);
  if (positions.empty()) return caption;
  const std::size_t pick = positions[rng.uniform_index(positions.size())];
  const std::string& noun = caption[pick];

  std::string adjective;
  auto it = stats.counts.find(noun);
  if (it != stats.counts.end() && !it->second.empty()) {
    int best = 0;
    for (const auto& [adj, count] : it->second) {  // map order resolves ties lexicographically
      if (count > best) {
        best = count;
        adjective = adj;
      }
    }
  } else {
    adjective = lexicon.adjectives_for(noun, polarity).front();
  }
  return insert_before(caption, pick, adjective);
}

Vec AdjectiveClassifier::scores(const Vec& feature) const {
  Vec logits = matvec(W, feature);
  for (std::size_t a = 0; a < logits.size(); ++a) logits[a] += b[a];
  return logits;
}

double softmax_regression_loss(const Matrix& W, const Vec& b, const std::vector<Vec>& features,
                               const std::vector<int>& labels, double l2) {
  double total = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    Vec logits = matvec(W, features[i]);
    for (std::size_t a = 0; a < logits.size(); ++a) logits[a] += b[a];
    const Vec p = softmax(logits);
    total -= std::log(std::max(p[static_cast<std::size_t>(labels[i])], 1e-300));
  }
  total /= static_cast<double>(features.size());
  for (double w : W.data) total += l2 * w * w;
  return total;
}

void softmax_regression_gradient(const Matrix& W, const Vec& b,
                                 const std::vector<Vec>& features,
                                 const std::vector<int>& labels, double l2, Matrix& grad_W,
                                 Vec& grad_b) {
  grad_W = Matrix(W.rows, W.cols);
  grad_b.assign(b.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    Vec logits = matvec(W, features[i]);
    for (std::size_t a = 0; a < logits.size(); ++a) logits[a] += b[a];
    Vec p = softmax(logits);
    p[static_cast<std::size_t>(labels[i])] -= 1.0;
    for (std::size_t a = 0; a < W.rows; ++a) {
      grad_b[a] += inv_n * p[a];
      for (std::size_t k = 0; k < W.cols; ++k) {
        grad_W(a, k) += inv_n * p[a] * features[i][k];
      }
    }
  }
  for (std::size_t idx = 0; idx < W.data.size(); ++idx) {
    grad_W.data[idx] += 2.0 * l2 * W.data[idx];
  }
}

AdjectiveClassifier train_adjective_classifier(const std::vector<RawCaption>& corpus,
                                               const AnpLexicon& lexicon, Polarity polarity,
                                               const ClassifierConfig& cfg) {
  std::vector<Vec> features;
  std::vector<std::string> adjectives;
  for (const auto& ex : corpus) {
    for (std::size_t i = 0; i + 1 < ex.tokens.size(); ++i) {
      if (lexicon.contains(ex.tokens[i], ex.tokens[i + 1], polarity)) {
        features.push_back(ex.feature);
        adjectives.push_back(ex.tokens[i]);
      }
    }
  }

  AdjectiveClassifier clf;
  {
    std::set<std::string> uniq(adjectives.begin(), adjectives.end());
    clf.classes.assign(uniq.begin(), uniq.end());
  }
  if (clf.classes.size() < 2) {
    throw std::invalid_argument("train_adjective_classifier: need at least 2 adjective "
                                "classes, found " + std::to_string(clf.classes.size()));
  }

  std::vector<int> labels;
  labels.reserve(adjectives.size());
  for (const auto& adj : adjectives) {
    const auto it = std::lower_bound(clf.classes.begin(), clf.classes.end(), adj);
    labels.push_back(static_cast<int>(it - clf.classes.begin()));
  }

  const std::size_t dx = features.front().size();
  clf.W = Matrix(clf.classes.size(), dx);
  clf.b.assign(clf.classes.size(), 0.0);
  Matrix grad_W;
  Vec grad_b;
  for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
    softmax_regression_gradient(clf.W, clf.b, features, labels, cfg.l2, grad_W, grad_b);
    for (std::size_t idx = 0; idx < clf.W.data.size(); ++idx) {
      clf.W.data[idx] -= cfg.learning_rate * grad_W.data[idx];
    }
    for (std::size_t a = 0; a < clf.b.size(); ++a) {
      clf.b[a] -= cfg.learning_rate * grad_b[a];
    }
  }
  return clf;
}

TokenSeq anp_scoring(const TokenSeq& caption, const Vec& feature,
                     const AdjectiveClassifier& classifier, const AnpLexicon& lexicon,
                     Polarity polarity, Rng& rng) {
  const auto positions = noun_positions(caption, lexicon, polarity);
  if (positions.empty()) return caption;
  const std::size_t pick = positions[rng.uniform_index(positions.size())];
  const std::string& noun = caption[pick];

  const std::vector<std::string> eligible = lexicon.adjectives_for(noun, polarity);
  std::string adjective = eligible.front();
  if (eligible.size() > 1) {
    const Vec logits = classifier.scores(feature);
    double best = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t a = 0; a < classifier.classes.size(); ++a) {
      if (std::find(eligible.begin(), eligible.end(), classifier.classes[a]) ==
          eligible.end()) {
        continue;
      }
      if (logits[a] > best) {
        best = logits[a];
        adjective = classifier.classes[a];
        any = true;
      }
    }
    if (!any) adjective = eligible.front();  // no eligible adjective is a known class
  }
  return insert_before(caption, pick, adjective);
}

Checkpoint adjective_stats_to_checkpoint(const AdjectiveStats& stats, Polarity polarity) {
  Checkpoint ckpt;
  ckpt.metadata["kind"] = kKindAdjectiveStats;
  ckpt.metadata["polarity"] = to_string(polarity);
  ckpt.metadata["counts"] = stats.counts;
  return ckpt;
}

AdjectiveStats adjective_stats_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.metadata.at("kind").get<std::string>() != kKindAdjectiveStats) {
    throw CheckpointError(CheckpointError::Kind::inconsistent,
                          "expected an adjective-stats checkpoint");
  }
  AdjectiveStats stats;
  stats.counts =
      ckpt.metadata.at("counts").get<std::map<std::string, std::map<std::string, int>>>();
  return stats;
}

Checkpoint adjective_classifier_to_checkpoint(const AdjectiveClassifier& classifier,
                                              Polarity polarity) {
  Checkpoint ckpt;
  ckpt.metadata["kind"] = kKindAdjectiveClassifier;
  ckpt.metadata["polarity"] = to_string(polarity);
  ckpt.metadata["classes"] = classifier.classes;
  ckpt.tensors.push_back({"W", classifier.W});
  Matrix b(classifier.b.size(), 1);
  b.data = classifier.b;
  ckpt.tensors.push_back({"b", b});
  return ckpt;
}

AdjectiveClassifier adjective_classifier_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.metadata.at("kind").get<std::string>() != kKindAdjectiveClassifier) {
    throw CheckpointError(CheckpointError::Kind::inconsistent,
                          "expected an adjective-classifier checkpoint");
  }
  AdjectiveClassifier clf;
  clf.classes = ckpt.metadata.at("classes").get<std::vector<std::string>>();
  clf.W = ckpt.tensor("W");
  clf.b = ckpt.tensor("b").data;
  if (clf.W.rows != clf.classes.size() || clf.b.size() != clf.classes.size()) {
    throw CheckpointError(CheckpointError::Kind::inconsistent,
                          "classifier tensor shapes disagree with class count");
  }
  return clf;
}

}  // namespace switchcap
