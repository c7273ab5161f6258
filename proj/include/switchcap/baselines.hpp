#pragma once

#include <map>
#include <string>
#include <vector>

#include "switchcap/data.hpp"
#include "switchcap/eval.hpp"
#include "switchcap/tensor.hpp"

namespace switchcap {

/// Per-noun adjective counts observed as lexicon pairs in sentiment captions.
struct AdjectiveStats {
  std::map<std::string, std::map<std::string, int>> counts;  // noun -> adjective -> count
};

AdjectiveStats build_adjective_stats(const std::vector<TokenSeq>& sentiment_captions,
                                     const AnpLexicon& lexicon, Polarity polarity);

/// Inserts the most common adjective for one randomly chosen lexicon noun
/// of the caption (ties go lexicographic); no-op when the caption has no
/// lexicon noun of the polarity.
TokenSeq anp_replace(const TokenSeq& caption, const AdjectiveStats& stats,
                     const AnpLexicon& lexicon, Polarity polarity, Rng& rng);

/// Multi-class logistic regression over adjective classes given image
/// features; classes are sorted lexicographically.
struct AdjectiveClassifier {
  std::vector<std::string> classes;
  Matrix W;  // classes x D_x
  Vec b;     // classes

  Vec scores(const Vec& feature) const;  // logits, one per class
};

struct ClassifierConfig {
  double learning_rate = 0.1;
  std::size_t iterations = 500;
  double l2 = 1e-4;
};

/// Fits softmax regression on (feature, adjective) pairs harvested from the
/// sentiment corpus's adjacent lexicon ANPs. Throws when fewer than two
/// adjective classes are observed.
AdjectiveClassifier train_adjective_classifier(const std::vector<RawCaption>& corpus,
                                               const AnpLexicon& lexicon, Polarity polarity,
                                               const ClassifierConfig& cfg = {});

/// Like anp_replace but picks the classifier-argmax adjective among those
/// forming a lexicon pair with the chosen noun (ties go by class order).
TokenSeq anp_scoring(const TokenSeq& caption, const Vec& feature,
                     const AdjectiveClassifier& classifier, const AnpLexicon& lexicon,
                     Polarity polarity, Rng& rng);

/// Mean cross-entropy plus l2*||W||^2; used for training and exposed for
/// gradient checking.
double softmax_regression_loss(const Matrix& W, const Vec& b, const std::vector<Vec>& features,
                               const std::vector<int>& labels, double l2);
void softmax_regression_gradient(const Matrix& W, const Vec& b,
                                 const std::vector<Vec>& features,
                                 const std::vector<int>& labels, double l2, Matrix& grad_W,
                                 Vec& grad_b);

inline constexpr const char* kKindAdjectiveStats = "adjective_stats";
inline constexpr const char* kKindAdjectiveClassifier = "adjective_classifier";

Checkpoint adjective_stats_to_checkpoint(const AdjectiveStats& stats, Polarity polarity);
AdjectiveStats adjective_stats_from_checkpoint(const Checkpoint& ckpt);
Checkpoint adjective_classifier_to_checkpoint(const AdjectiveClassifier& classifier,
                                              Polarity polarity);
AdjectiveClassifier adjective_classifier_from_checkpoint(const Checkpoint& ckpt);

}  // namespace switchcap
