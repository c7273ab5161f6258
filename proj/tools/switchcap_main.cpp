#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "switchcap/cli.hpp"

namespace {

using namespace switchcap;
using namespace switchcap::cli;

bool flag_given(const CLI::App* sub, const std::string& name) {
  const CLI::Option* opt = sub->get_option_no_throw(name);
  return opt != nullptr && opt->count() > 0;
}

TrainConfig resolve_config(const std::string& config_path, const CLI::App* sub,
                           std::uint64_t seed, double lt, double le, double lg) {
  TrainConfig cfg;
  if (!config_path.empty()) cfg = load_train_config(config_path);
  if (flag_given(sub, "--seed")) cfg.seed = seed;
  if (flag_given(sub, "--lambda-theta")) cfg.lambda_theta = lt;
  if (flag_given(sub, "--lambda-eta")) cfg.lambda_eta = le;
  if (flag_given(sub, "--lambda-gamma")) cfg.lambda_gamma = lg;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Switching-stream caption model: training, decoding, evaluation"};
  app.require_subcommand(1);

  std::uint64_t seed = 42;
  double lambda_theta = 0, lambda_eta = 0, lambda_gamma = 0;
  std::string config_path;

  // train-background
  TrainBackgroundOptions bg;
  auto* cmd_bg = app.add_subcommand("train-background",
                                    "Train the background stream from scratch");
  cmd_bg->add_option("--corpus", bg.corpus_path, "training corpus (JSON lines)")->required();
  cmd_bg->add_option("--vocab", bg.vocab_path, "vocabulary file, one token per line")
      ->required();
  cmd_bg->add_option("--val", bg.val_path, "validation corpus (default: 1-in-10 tail split)");
  cmd_bg->add_option("--config", config_path, "key = value training config file");
  cmd_bg->add_option("--hidden", bg.hidden, "hidden state size D")->check(CLI::PositiveNumber);
  cmd_bg->add_option("--seed", seed, "training seed");
  cmd_bg->add_option("--out", bg.out_path, "output checkpoint path")->required();

  // train-sentiment
  TrainSentimentOptions st;
  std::string polarity_flag = "pos";
  auto* cmd_st = app.add_subcommand(
      "train-sentiment", "Fine-tune the sentiment stream and switch on a tagged corpus");
  cmd_st->add_option("--base", st.base_ckpt_path, "background checkpoint")->required();
  cmd_st->add_option("--corpus", st.corpus_path, "sentiment corpus (JSON lines)")->required();
  cmd_st->add_option("--lexicon", st.lexicon_path, "ANP lexicon (TSV)")->required();
  cmd_st->add_option("--polarity", polarity_flag, "pos or neg")
      ->check(CLI::IsMember({"pos", "neg", "positive", "negative"}));
  cmd_st->add_option("--val", st.val_path, "validation corpus");
  cmd_st->add_option("--config", config_path, "key = value training config file");
  cmd_st->add_option("--seed", seed, "training seed");
  cmd_st->add_option("--lambda-theta", lambda_theta, "L2 tether weight");
  cmd_st->add_option("--lambda-eta", lambda_eta, "sentiment-word likelihood weight");
  cmd_st->add_option("--lambda-gamma", lambda_gamma, "gate cross-entropy weight");
  cmd_st->add_option("--out", st.out_path, "output checkpoint path")->required();

  // caption
  CaptionOptions cap;
  auto* cmd_cap = app.add_subcommand("caption", "Generate captions for image features");
  cmd_cap->add_option("--ckpt", cap.ckpt_path, "model checkpoint")->required();
  cmd_cap->add_option("--features", cap.features_path, "features file (JSON lines)")
      ->required();
  cmd_cap->add_option("--beam", cap.beam, "beam width")->check(CLI::PositiveNumber);
  cmd_cap->add_option("--max-len", cap.max_len, "maximum caption length")
      ->check(CLI::PositiveNumber);
  cmd_cap->add_flag("--greedy", cap.greedy, "argmax decoding instead of beam search");
  cmd_cap->add_flag("--gamma", cap.emit_gamma, "include per-word gate probabilities");
  cmd_cap->add_option("--out", cap.out_path, "output captions file")->required();

  // evaluate
  EvaluateOptions ev;
  auto* cmd_ev = app.add_subcommand("evaluate", "Score a captions file");
  cmd_ev->add_option("--captions", ev.captions_path, "captions to score")->required();
  cmd_ev->add_option("--references", ev.references_path, "reference corpus")->required();
  cmd_ev->add_option("--lexicon", ev.lexicon_path, "ANP lexicon")->required();
  cmd_ev->add_option("--polarity", polarity_flag, "pos or neg")
      ->check(CLI::IsMember({"pos", "neg", "positive", "negative"}));
  cmd_ev->add_option("--training-set", ev.training_set_paths,
                     "corpus checked for novelty (repeatable)");
  cmd_ev->add_option("--ckpt", ev.ckpt_path, "checkpoint for the perplexity column");
  cmd_ev->add_option("--out", ev.out_path, "report path (stdout when omitted)");
  cmd_ev->add_flag("--tsv", ev.tsv, "also print a sen%/BLEU TSV row");

  // gradcheck
  GradcheckOptions gc;
  auto* cmd_gc = app.add_subcommand(
      "gradcheck", "Check analytic gradients against finite differences");
  cmd_gc->add_option("--config", gc.config_path, "config file for the lambda weights");
  cmd_gc->add_option("--seed", gc.seed, "fixture seed");

  // baseline
  BaselineOptions bl;
  auto* cmd_bl = app.add_subcommand("baseline", "Insert sentiment adjectives into captions");
  cmd_bl->add_option("kind", bl.kind, "anp-replace or anp-scoring")->required();
  cmd_bl->add_option("--captions", bl.captions_path, "captions to modify")->required();
  cmd_bl->add_option("--corpus", bl.corpus_path, "sentiment corpus (stats/classifier source)")
      ->required();
  cmd_bl->add_option("--lexicon", bl.lexicon_path, "ANP lexicon")->required();
  cmd_bl->add_option("--features", bl.features_path, "features for anp-scoring");
  cmd_bl->add_option("--polarity", polarity_flag, "pos or neg")
      ->check(CLI::IsMember({"pos", "neg", "positive", "negative"}));
  cmd_bl->add_option("--seed", seed, "noun sampling seed");
  cmd_bl->add_option("--out", bl.out_path, "output captions file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_bg->parsed()) {
      bg.config_path = config_path;
      bg.config = resolve_config(config_path, cmd_bg, seed, 0, 0, 0);
      return run_train_background(bg);
    }
    if (cmd_st->parsed()) {
      st.config_path = config_path;
      st.polarity = parse_polarity(polarity_flag);
      st.config = resolve_config(config_path, cmd_st, seed, lambda_theta, lambda_eta,
                                 lambda_gamma);
      return run_train_sentiment(st);
    }
    if (cmd_cap->parsed()) return run_caption(cap);
    if (cmd_ev->parsed()) {
      ev.polarity = parse_polarity(polarity_flag);
      return run_evaluate(ev);
    }
    if (cmd_gc->parsed()) return run_gradcheck(gc);
    if (cmd_bl->parsed()) {
      bl.polarity = parse_polarity(polarity_flag);
      bl.seed = seed;
      return run_baseline(bl);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
