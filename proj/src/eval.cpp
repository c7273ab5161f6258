#include "switchcap/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <stdexcept>

namespace switchcap {

namespace {

std::string lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

TokenSeq lower_seq(const TokenSeq& tokens) {
  TokenSeq out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(lower(t));
  return out;
}

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngram_counts(const TokenSeq& tokens, int n) {
  NgramCounts counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)] += 1;
  }
  return counts;
}

/// Reference length closest to the candidate length; ties go to the shorter.
std::size_t closest_ref_length(std::size_t cand_len, const std::vector<TokenSeq>& refs) {
  std::size_t best = refs[0].size();
  for (const auto& ref : refs) {
    const auto len = ref.size();
    const auto d_new = len > cand_len ? len - cand_len : cand_len - len;
    const auto d_old = best > cand_len ? best - cand_len : cand_len - best;
    if (d_new < d_old || (d_new == d_old && len < best)) best = len;
  }
  return best;
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["sen_percent"] = sen_percent;
  nlohmann::json b;
  for (const auto& [n, score] : bleu) b[std::to_string(n)] = score;
  j["bleu"] = b;
  j["novelty_percent"] = novelty_percent;
  if (perplexity.has_value()) j["perplexity"] = *perplexity;
  j["counts"] = {{"images", images}, {"sentences", sentences}};
  return j;
}

std::string EvalReport::tsv_row() const {
  std::string row = std::to_string(sen_percent);
  for (int n = 1; n <= 4; ++n) {
    row += '\t';
    auto it = bleu.find(n);
    row += std::to_string(it == bleu.end() ? 0.0 : it->second);
  }
  return row;
}

double sentiment_coverage(const std::vector<TokenSeq>& captions, const AnpLexicon& lexicon,
                          Polarity polarity) {
  if (captions.empty()) throw std::invalid_argument("sentiment_coverage: no captions");
  std::size_t hits = 0;
  for (const auto& caption : captions) {
    bool found = false;
    for (std::size_t i = 0; i + 1 < caption.size() && !found; ++i) {
      found = lexicon.contains(caption[i], caption[i + 1], polarity);
    }
    if (found) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(captions.size());
}

std::vector<double> bleu(const std::vector<TokenSeq>& candidates,
                         const std::vector<std::vector<TokenSeq>>& references, int max_n) {
  if (candidates.empty()) throw std::invalid_argument("bleu: no candidates");
  if (candidates.size() != references.size()) {
    throw std::invalid_argument("bleu: candidate/reference count mismatch");
  }
  if (max_n < 1) throw std::invalid_argument("bleu: max_n must be >= 1");
  for (const auto& refs : references) {
    if (refs.empty()) throw std::invalid_argument("bleu: every candidate needs a reference");
  }

  std::vector<double> matched(max_n + 1, 0.0), total(max_n + 1, 0.0);
  double cand_len_sum = 0.0, ref_len_sum = 0.0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    cand_len_sum += static_cast<double>(candidates[k].size());
    ref_len_sum +=
        static_cast<double>(closest_ref_length(candidates[k].size(), references[k]));
    for (int n = 1; n <= max_n; ++n) {
      const NgramCounts cand = ngram_counts(candidates[k], n);
      NgramCounts max_ref;
      for (const auto& ref : references[k]) {
        for (const auto& [gram, count] : ngram_counts(ref, n)) {
          max_ref[gram] = std::max(max_ref[gram], count);
        }
      }
      for (const auto& [gram, count] : cand) {
        auto it = max_ref.find(gram);
        matched[n] += static_cast<double>(
            std::min(count, it == max_ref.end() ? std::size_t{0} : it->second));
        total[n] += static_cast<double>(count);
      }
    }
  }

  const double bp = cand_len_sum < ref_len_sum && cand_len_sum > 0.0
                        ? std::exp(1.0 - ref_len_sum / cand_len_sum)
                        : (cand_len_sum > 0.0 ? 1.0 : 0.0);

  std::vector<double> scores;
  for (int n = 1; n <= max_n; ++n) {
    double log_sum = 0.0;
    bool zero = false;
    for (int m = 1; m <= n; ++m) {
      if (matched[m] <= 0.0 || total[m] <= 0.0) {
        zero = true;
        break;
      }
      log_sum += std::log(matched[m] / total[m]);
    }
    scores.push_back(zero ? 0.0 : bp * std::exp(log_sum / n));
  }
  return scores;
}

double novelty_rate(const std::vector<TokenSeq>& candidates,
                    const std::vector<std::vector<TokenSeq>>& training_sets) {
  if (candidates.empty()) throw std::invalid_argument("novelty_rate: no candidates");
  std::set<TokenSeq> seen;
  for (const auto& set : training_sets) {
    for (const auto& sentence : set) seen.insert(lower_seq(sentence));
  }
  std::size_t novel = 0;
  for (const auto& cand : candidates) {
    if (seen.count(lower_seq(cand)) == 0) ++novel;
  }
  return 100.0 * static_cast<double>(novel) / static_cast<double>(candidates.size());
}

double perplexity(const SwitchingModel& model, const std::vector<CaptionExample>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("perplexity: empty corpus");
  double nll = 0.0;
  std::size_t tokens = 0;
  for (const auto& ex : corpus) {
    for (const auto& step : sequence_forward(model, ex)) nll -= step.log_prob;
    tokens += ex.tokens.size();
  }
  return std::exp(nll / static_cast<double>(tokens));
}

}  // namespace switchcap
