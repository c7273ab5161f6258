#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "switchcap/data.hpp"
#include "switchcap/model.hpp"

namespace switchcap {

using TokenSeq = std::vector<std::string>;

struct EvalReport {
  double sen_percent = 0.0;
  std::map<int, double> bleu;  // n in 1..4 -> score in [0,1]
  double novelty_percent = 0.0;
  std::optional<double> perplexity;
  std::size_t images = 0;
  std::size_t sentences = 0;

  nlohmann::json to_json() const;
  /// sen% then B-1..B-4, tab-separated.
  std::string tsv_row() const;
};

/// Percentage of captions containing at least one adjacent adjective-noun
/// pair of the polarity.
double sentiment_coverage(const std::vector<TokenSeq>& captions, const AnpLexicon& lexicon,
                          Polarity polarity);

/// Corpus-level BLEU-1..max_n: clipped n-gram precision pooled over the
/// corpus, geometric mean over orders, brevity penalty exp(1 - r/c) when
/// the candidate corpus is shorter than the closest-length references.
/// Any zero pooled precision makes that order's score 0.
std::vector<double> bleu(const std::vector<TokenSeq>& candidates,
                         const std::vector<std::vector<TokenSeq>>& references,
                         int max_n = 4);

/// Percentage of candidates whose lowercased token sequence appears in no
/// training set.
double novelty_rate(const std::vector<TokenSeq>& candidates,
                    const std::vector<std::vector<TokenSeq>>& training_sets);

/// exp(total mixture NLL / total token count); tokens include EOS.
double perplexity(const SwitchingModel& model, const std::vector<CaptionExample>& corpus);

}  // namespace switchcap
