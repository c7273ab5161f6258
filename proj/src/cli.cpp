#include "switchcap/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace switchcap::cli {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// The run manifest lands next to the main artifact before any work starts.
void write_manifest(const std::string& out_path, const std::string& subcommand,
                    const nlohmann::json& inputs, const nlohmann::json& outputs,
                    const nlohmann::json& config, std::uint64_t seed) {
  nlohmann::json manifest;
  manifest["subcommand"] = subcommand;
  manifest["tool_version"] = kToolVersion;
  manifest["timestamp_utc"] = utc_timestamp();
  manifest["seed"] = seed;
  manifest["inputs"] = inputs;
  manifest["outputs"] = outputs;
  manifest["config"] = config;
  atomic_write_file(out_path + ".manifest.json", manifest.dump(2) + "\n");
}

std::string history_path(const std::string& out_path) { return out_path + ".history.jsonl"; }

std::string history_to_bytes(const std::vector<EpochRecord>& history) {
  std::string out;
  for (const auto& rec : history) {
    nlohmann::json line;
    line["epoch"] = rec.epoch;
    line["train_loss"] = rec.train_loss;
    line["val_perplexity"] = rec.val_perplexity;
    line["seconds"] = rec.seconds;
    out += line.dump();
    out += '\n';
  }
  return out;
}

/// Splits off a deterministic validation tail (1 in 10, at least one
/// example) when no explicit validation corpus is given.
void split_validation(std::vector<CaptionExample>& train, std::vector<CaptionExample>& val) {
  if (train.size() < 2) {
    throw std::runtime_error("corpus needs at least 2 examples to split off validation");
  }
  const std::size_t n_val = std::max<std::size_t>(1, train.size() / 10);
  val.assign(train.end() - static_cast<std::ptrdiff_t>(n_val), train.end());
  train.resize(train.size() - n_val);
}

std::map<std::string, Vec> feature_map(const std::string& path) {
  std::map<std::string, Vec> map;
  for (auto& f : load_features(path)) map[f.image_id] = std::move(f.feature);
  return map;
}

}  // namespace

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  TrainConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "lambda_theta") cfg.lambda_theta = std::stod(value);
      else if (key == "lambda_eta") cfg.lambda_eta = std::stod(value);
      else if (key == "lambda_gamma") cfg.lambda_gamma = std::stod(value);
      else if (key == "learning_rate") cfg.learning_rate = std::stod(value);
      else if (key == "momentum") cfg.momentum = std::stod(value);
      else if (key == "batch_size") cfg.batch_size = std::stoull(value);
      else if (key == "clip_lo") cfg.clip_lo = std::stod(value);
      else if (key == "clip_hi") cfg.clip_hi = std::stod(value);
      else if (key == "dropout_rate") cfg.dropout_rate = std::stod(value);
      else if (key == "base_l2") cfg.base_l2 = std::stod(value);
      else if (key == "patience") cfg.patience = std::stoull(value);
      else if (key == "max_epochs") cfg.max_epochs = std::stoull(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else throw std::runtime_error("unknown config key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bad value for " + key);
    }
  }
  cfg.validate();
  return cfg;
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  nlohmann::json j;
  j["lambda_theta"] = cfg.lambda_theta;
  j["lambda_eta"] = cfg.lambda_eta;
  j["lambda_gamma"] = cfg.lambda_gamma;
  j["learning_rate"] = cfg.learning_rate;
  j["momentum"] = cfg.momentum;
  j["batch_size"] = cfg.batch_size;
  j["clip_lo"] = cfg.clip_lo;
  j["clip_hi"] = cfg.clip_hi;
  j["dropout_rate"] = cfg.dropout_rate;
  j["base_l2"] = cfg.base_l2;
  j["patience"] = cfg.patience;
  j["max_epochs"] = cfg.max_epochs;
  j["seed"] = cfg.seed;
  return j;
}

std::string captions_to_bytes(const std::vector<CaptionRecord>& records) {
  std::string out;
  for (const auto& rec : records) {
    nlohmann::json line;
    line["image_id"] = rec.image_id;
    line["tokens"] = rec.tokens;
    if (rec.log_prob.has_value()) line["logprob"] = *rec.log_prob;
    if (rec.gamma.has_value()) line["gamma"] = *rec.gamma;
    out += line.dump();
    out += '\n';
  }
  return out;
}

void write_captions(const std::vector<CaptionRecord>& records, const std::string& path) {
  atomic_write_file(path, captions_to_bytes(records));
}

std::vector<CaptionRecord> read_captions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open captions file " + path);
  std::vector<CaptionRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      nlohmann::json obj = nlohmann::json::parse(line);
      CaptionRecord rec;
      rec.image_id = obj.at("image_id").get<std::string>();
      rec.tokens = obj.at("tokens").get<std::vector<std::string>>();
      if (obj.contains("logprob")) rec.log_prob = obj.at("logprob").get<double>();
      if (obj.contains("gamma")) rec.gamma = obj.at("gamma").get<std::vector<double>>();
      records.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bad caption line: " +
                               e.what());
    }
  }
  return records;
}

CaptionRecord to_record(const std::string& image_id, const DecodedCaption& caption,
                        bool include_gamma) {
  CaptionRecord rec;
  rec.image_id = image_id;
  rec.tokens = caption.tokens;
  std::vector<double> gamma = caption.gamma_trace;
  if (caption.reached_eos && !rec.tokens.empty()) {
    rec.tokens.pop_back();
    gamma.pop_back();
  }
  rec.log_prob = caption.log_prob;
  if (include_gamma) rec.gamma = std::move(gamma);
  return rec;
}

int run_train_background(const TrainBackgroundOptions& opt) {
  write_manifest(opt.out_path, "train-background",
                 {{"corpus", opt.corpus_path},
                  {"vocab", opt.vocab_path},
                  {"val", opt.val_path},
                  {"config_file", opt.config_path}},
                 {{"checkpoint", opt.out_path}, {"history", history_path(opt.out_path)}},
                 train_config_to_json(opt.config), opt.config.seed);

  const Vocabulary vocab = load_vocab(opt.vocab_path);
  std::vector<CaptionExample> train = load_corpus(opt.corpus_path, vocab);
  if (train.empty()) throw std::runtime_error("training corpus is empty");
  std::vector<CaptionExample> val;
  if (!opt.val_path.empty()) {
    val = load_corpus(opt.val_path, vocab);
  } else {
    split_validation(train, val);
  }

  ModelDims dims;
  dims.hidden = opt.hidden;
  dims.vocab = static_cast<std::size_t>(vocab.size());
  dims.feature = train.front().feature.size();

  const BackgroundFit fit = fit_background(dims, train, val, opt.config);
  atomic_write_file(history_path(opt.out_path), history_to_bytes(fit.history));
  save_checkpoint(background_to_checkpoint(fit.stream, vocab, train_config_to_json(opt.config)),
                  opt.out_path);
  std::cout << "trained background stream: best epoch " << fit.best_epoch
            << ", val perplexity "
            << (fit.history.empty() ? 0.0 : fit.history[fit.best_epoch - 1].val_perplexity)
            << "\n";
  return 0;
}

int run_train_sentiment(const TrainSentimentOptions& opt) {
  write_manifest(opt.out_path, "train-sentiment",
                 {{"base_checkpoint", opt.base_ckpt_path},
                  {"corpus", opt.corpus_path},
                  {"lexicon", opt.lexicon_path},
                  {"polarity", to_string(opt.polarity)},
                  {"val", opt.val_path},
                  {"config_file", opt.config_path}},
                 {{"checkpoint", opt.out_path}, {"history", history_path(opt.out_path)}},
                 train_config_to_json(opt.config), opt.config.seed);

  const LoadedBackground base = background_from_checkpoint(load_checkpoint(opt.base_ckpt_path));
  const AnpLexicon lexicon = load_lexicon(opt.lexicon_path);
  if (lexicon.count(opt.polarity) == 0) {
    throw std::runtime_error("lexicon has no entries with polarity " +
                             to_string(opt.polarity));
  }
  std::vector<CaptionExample> train =
      load_corpus(opt.corpus_path, base.vocab, lexicon, opt.polarity);
  if (train.empty()) throw std::runtime_error("sentiment corpus is empty");
  std::vector<CaptionExample> val;
  if (!opt.val_path.empty()) {
    val = load_corpus(opt.val_path, base.vocab, lexicon, opt.polarity);
  } else {
    split_validation(train, val);
  }

  const SwitchingModel start =
      make_switching_model(base.stream, opt.config.seed, opt.polarity);
  const SentimentFit fit = fit_sentiment(start, train, val, opt.config);
  atomic_write_file(history_path(opt.out_path), history_to_bytes(fit.history));
  save_checkpoint(
      switching_to_checkpoint(fit.model, base.vocab, train_config_to_json(opt.config)),
      opt.out_path);
  std::cout << "trained sentiment stream: best epoch " << fit.best_epoch << "\n";
  return 0;
}

int run_caption(const CaptionOptions& opt) {
  write_manifest(opt.out_path, "caption",
                 {{"checkpoint", opt.ckpt_path}, {"features", opt.features_path}},
                 {{"captions", opt.out_path}},
                 {{"beam", opt.beam},
                  {"max_len", opt.max_len},
                  {"greedy", opt.greedy},
                  {"gamma", opt.emit_gamma}},
                 0);

  const LoadedSwitching loaded = switching_from_checkpoint_any(load_checkpoint(opt.ckpt_path));
  const auto features = load_features(opt.features_path);
  std::vector<CaptionRecord> records;
  records.reserve(features.size());
  for (const auto& f : features) {
    const DecodedCaption caption =
        opt.greedy ? greedy_decode(loaded.model, loaded.vocab, f.feature, opt.max_len)
                   : beam_search(loaded.model, loaded.vocab, f.feature, opt.beam, opt.max_len);
    records.push_back(to_record(f.image_id, caption, opt.emit_gamma));
  }
  write_captions(records, opt.out_path);
  std::cout << "wrote " << records.size() << " captions to " << opt.out_path << "\n";
  return 0;
}

int run_evaluate(const EvaluateOptions& opt) {
  if (!opt.out_path.empty()) {
    write_manifest(opt.out_path, "evaluate",
                   {{"captions", opt.captions_path},
                    {"references", opt.references_path},
                    {"lexicon", opt.lexicon_path},
                    {"polarity", to_string(opt.polarity)},
                    {"training_sets", opt.training_set_paths},
                    {"checkpoint", opt.ckpt_path}},
                   {{"report", opt.out_path}}, nlohmann::json::object(), 0);
  }

  const auto records = read_captions(opt.captions_path);
  if (records.empty()) throw std::runtime_error("captions file is empty");
  const AnpLexicon lexicon = load_lexicon(opt.lexicon_path);
  const auto references = load_raw_corpus(opt.references_path);

  std::map<std::string, std::vector<TokenSeq>> refs_by_image;
  for (const auto& ref : references) refs_by_image[ref.image_id].push_back(ref.tokens);

  std::vector<TokenSeq> candidates;
  std::vector<std::vector<TokenSeq>> candidate_refs;
  std::set<std::string> image_ids;
  for (const auto& rec : records) {
    auto it = refs_by_image.find(rec.image_id);
    if (it == refs_by_image.end()) {
      throw std::runtime_error("no references for image " + rec.image_id);
    }
    candidates.push_back(rec.tokens);
    candidate_refs.push_back(it->second);
    image_ids.insert(rec.image_id);
  }

  std::vector<std::vector<TokenSeq>> training_sets;
  for (const auto& path : opt.training_set_paths) {
    std::vector<TokenSeq> sentences;
    for (const auto& raw : load_raw_corpus(path)) sentences.push_back(raw.tokens);
    training_sets.push_back(std::move(sentences));
  }

  EvalReport report;
  report.sen_percent = sentiment_coverage(candidates, lexicon, opt.polarity);
  const auto scores = bleu(candidates, candidate_refs, 4);
  for (int n = 1; n <= 4; ++n) report.bleu[n] = scores[static_cast<std::size_t>(n - 1)];
  report.novelty_percent = novelty_rate(candidates, training_sets);
  report.images = image_ids.size();
  report.sentences = records.size();
  if (!opt.ckpt_path.empty()) {
    const LoadedSwitching loaded =
        switching_from_checkpoint_any(load_checkpoint(opt.ckpt_path));
    const auto corpus = load_corpus(opt.references_path, loaded.vocab);
    report.perplexity = perplexity(loaded.model, corpus);
  }

  const std::string body = report.to_json().dump(2) + "\n";
  if (opt.out_path.empty()) {
    std::cout << body;
  } else {
    atomic_write_file(opt.out_path, body);
  }
  if (opt.tsv) std::cout << report.tsv_row() << "\n";
  return 0;
}

int run_gradcheck(const GradcheckOptions& opt) {
  GradcheckFixture fixture = make_gradcheck_fixture(opt.seed);
  if (!opt.config_path.empty()) {
    TrainConfig cfg = load_train_config(opt.config_path);
    cfg.dropout_rate = 0.0;  // the finite-difference oracle is deterministic
    fixture.cfg = cfg;
  }
  const GradcheckReport report = run_gradient_check(fixture, 1e-4);
  std::cout << "gradcheck: " << report.coordinates << " coordinates, max relative error "
            << report.max_rel_error << " at " << report.worst_tensor << "["
            << report.worst_index << "]\n";
  std::cout << (report.pass ? "PASS" : "FAIL") << " (tolerance 1e-4)\n";
  return report.pass ? 0 : 1;
}

int run_baseline(const BaselineOptions& opt) {
  if (opt.kind != "anp-replace" && opt.kind != "anp-scoring") {
    throw std::runtime_error("unknown baseline kind '" + opt.kind + "'");
  }
  write_manifest(opt.out_path, "baseline",
                 {{"kind", opt.kind},
                  {"captions", opt.captions_path},
                  {"corpus", opt.corpus_path},
                  {"lexicon", opt.lexicon_path},
                  {"features", opt.features_path},
                  {"polarity", to_string(opt.polarity)}},
                 {{"captions", opt.out_path}}, nlohmann::json::object(), opt.seed);

  const auto records = read_captions(opt.captions_path);
  const AnpLexicon lexicon = load_lexicon(opt.lexicon_path);
  const auto corpus = load_raw_corpus(opt.corpus_path);
  Rng rng(opt.seed);

  std::vector<CaptionRecord> out;
  out.reserve(records.size());
  if (opt.kind == "anp-replace") {
    std::vector<TokenSeq> sentiment_captions;
    for (const auto& raw : corpus) sentiment_captions.push_back(raw.tokens);
    const AdjectiveStats stats =
        build_adjective_stats(sentiment_captions, lexicon, opt.polarity);
    for (const auto& rec : records) {
      CaptionRecord modified;
      modified.image_id = rec.image_id;
      modified.tokens = anp_replace(rec.tokens, stats, lexicon, opt.polarity, rng);
      out.push_back(std::move(modified));
    }
  } else {
    if (opt.features_path.empty()) {
      throw std::runtime_error("anp-scoring needs --features for the captioned images");
    }
    const AdjectiveClassifier clf =
        train_adjective_classifier(corpus, lexicon, opt.polarity);
    const auto features = feature_map(opt.features_path);
    for (const auto& rec : records) {
      auto it = features.find(rec.image_id);
      if (it == features.end()) {
        throw std::runtime_error("no feature for image " + rec.image_id);
      }
      CaptionRecord modified;
      modified.image_id = rec.image_id;
      modified.tokens = anp_scoring(rec.tokens, it->second, clf, lexicon, opt.polarity, rng);
      out.push_back(std::move(modified));
    }
  }
  write_captions(out, opt.out_path);
  std::cout << "wrote " << out.size() << " captions to " << opt.out_path << "\n";
  return 0;
}

}  // namespace switchcap::cli
