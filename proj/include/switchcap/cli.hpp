#pragma once

#include <optional>
#include <string>
#include <vector>

#include "switchcap/baselines.hpp"
#include "switchcap/data.hpp"
#include "switchcap/decode.hpp"
#include "switchcap/eval.hpp"
#include "switchcap/train.hpp"

namespace switchcap::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// key = value config file; keys mirror TrainConfig, '#' starts a comment.
TrainConfig load_train_config(const std::string& path);
nlohmann::json train_config_to_json(const TrainConfig& cfg);

/// One caption per line: {"image_id", "tokens"[, "logprob"][, "gamma"]}.
struct CaptionRecord {
  std::string image_id;
  std::vector<std::string> tokens;
  std::optional<double> log_prob;
  std::optional<std::vector<double>> gamma;
};

std::string captions_to_bytes(const std::vector<CaptionRecord>& records);
void write_captions(const std::vector<CaptionRecord>& records, const std::string& path);
std::vector<CaptionRecord> read_captions(const std::string& path);

/// DecodedCaption -> file record: the trailing EOS token (and its gamma
/// entry) is dropped; the log-probability keeps the full sequence score.
CaptionRecord to_record(const std::string& image_id, const DecodedCaption& caption,
                        bool include_gamma);

struct TrainBackgroundOptions {
  std::string corpus_path;
  std::string vocab_path;
  std::string val_path;  // optional; defaults to a 1-in-10 tail split
  std::string config_path;
  std::string out_path;
  std::size_t hidden = 64;
  TrainConfig config;  // resolved: file, then flag overrides
};

struct TrainSentimentOptions {
  std::string base_ckpt_path;
  std::string corpus_path;
  std::string lexicon_path;
  Polarity polarity = Polarity::positive;
  std::string val_path;
  std::string config_path;
  std::string out_path;
  TrainConfig config;
};

struct CaptionOptions {
  std::string ckpt_path;
  std::string features_path;
  std::string out_path;
  std::size_t beam = kDefaultBeamWidth;
  std::size_t max_len = kDefaultMaxLen;
  bool greedy = false;
  bool emit_gamma = false;
};

struct EvaluateOptions {
  std::string captions_path;
  std::string references_path;
  std::string lexicon_path;
  Polarity polarity = Polarity::positive;
  std::vector<std::string> training_set_paths;
  std::string ckpt_path;  // optional; enables the perplexity column
  std::string out_path;   // optional; stdout when empty
  bool tsv = false;
};

struct GradcheckOptions {
  std::string config_path;
  std::uint64_t seed = 7;
};

struct BaselineOptions {
  std::string kind;  // "anp-replace" or "anp-scoring"
  std::string captions_path;
  std::string corpus_path;  // sentiment corpus for stats / classifier training
  std::string lexicon_path;
  std::string features_path;  // required for anp-scoring
  Polarity polarity = Polarity::positive;
  std::uint64_t seed = 0;
  std::string out_path;
};

int run_train_background(const TrainBackgroundOptions& opt);
int run_train_sentiment(const TrainSentimentOptions& opt);
int run_caption(const CaptionOptions& opt);
int run_evaluate(const EvaluateOptions& opt);
int run_gradcheck(const GradcheckOptions& opt);
int run_baseline(const BaselineOptions& opt);

}  // namespace switchcap::cli
