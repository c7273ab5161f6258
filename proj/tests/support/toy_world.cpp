#include "support/toy_world.hpp"

#include <fstream>
#include <set>

namespace switchcap::toy {

namespace {

const std::vector<std::string> kNouns = {"cat",  "dog",  "car",  "boat",
                                         "bird", "house", "tree", "road"};
const std::vector<std::string> kScenes = {"park", "beach", "street", "field"};

struct AnpSpec {
  const char* adjective;
  const char* noun;
};

const std::vector<AnpSpec> kPositive = {
    {"lovely", "cat"},   {"sweet", "cat"},    {"happy", "dog"},   {"playful", "dog"},
    {"shiny", "car"},    {"fancy", "car"},    {"graceful", "boat"}, {"pretty", "bird"},
    {"cozy", "house"},   {"charming", "house"}, {"majestic", "tree"}, {"peaceful", "road"},
};
const std::vector<AnpSpec> kNegative = {
    {"ugly", "car"},   {"dirty", "road"},  {"sad", "dog"},
    {"broken", "boat"}, {"creepy", "house"}, {"dead", "tree"},
};

constexpr std::size_t kFeatureDim = 16;  // 8 noun dims + 4 scene dims + 4 spare

Vec make_feature(std::size_t noun, std::size_t scene, Rng& rng) {
  Vec f(kFeatureDim, 0.0);
  f[noun] = 1.0;
  f[kNouns.size() + scene] = 1.0;
  for (double& x : f) x += rng.uniform(-0.1, 0.1);
  return f;
}

std::vector<std::string> make_caption(std::size_t noun, std::size_t scene,
                                      std::size_t variant) {
  const std::string& n = kNouns[noun];
  const std::string& s = kScenes[scene];
  switch (variant % 4) {
    case 0: return {"a", n, "in", "the", s};
    case 1: return {"the", n, "at", "the", s};
    case 2: return {"a", n, "near", "the", s};
    default: return {"there", "is", "a", n, "in", "the", s};
  }
}

CaptionExample to_example(const RawCaption& raw, const Vocabulary& vocab,
                          const AnpLexicon* lexicon) {
  CaptionExample ex;
  ex.image_id = raw.image_id;
  ex.feature = raw.feature;
  for (const auto& w : raw.tokens) ex.tokens.push_back(vocab.id(w));
  ex.tokens.push_back(Vocabulary::kEos);
  if (lexicon != nullptr) {
    ex.eta = tag_sentiment(raw.tokens, *lexicon, Polarity::positive);
    ex.eta.push_back(0.0);
  } else {
    ex.eta.assign(ex.tokens.size(), 0.0);
  }
  return ex;
}

}  // namespace

ToyWorld make_toy_world(std::uint64_t seed) {
  ToyWorld world;
  Rng rng(seed);

  for (const auto& [adj, noun] : kPositive) {
    world.lexicon.add({adj, noun, Polarity::positive, 0.9});
  }
  for (const auto& [adj, noun] : kNegative) {
    world.lexicon.add({adj, noun, Polarity::negative, 0.8});
  }

  std::set<std::string> words = {"a", "the", "in", "at", "near", "there", "is"};
  words.insert(kNouns.begin(), kNouns.end());
  words.insert(kScenes.begin(), kScenes.end());
  for (const auto& e : world.lexicon.entries()) words.insert(e.adjective);
  world.vocab = Vocabulary(std::vector<std::string>(words.begin(), words.end()));

  // 200 training images, 10 neutral captions each.
  for (std::size_t img = 0; img < 200; ++img) {
    const std::size_t noun = img % kNouns.size();
    const std::size_t scene = (img / kNouns.size()) % kScenes.size();
    const Vec feature = make_feature(noun, scene, rng);
    const std::string image_id = "img-" + std::to_string(img);
    for (std::size_t k = 0; k < 10; ++k) {
      RawCaption raw;
      raw.image_id = image_id;
      raw.feature = feature;
      raw.tokens = make_caption(noun, scene, rng.uniform_index(4));
      world.background_raw.push_back(std::move(raw));
    }
  }

  // 50 fresh images, 4 positive captions each, one inserted ANP per caption.
  for (std::size_t img = 200; img < 250; ++img) {
    const std::size_t noun = img % kNouns.size();
    const std::size_t scene = (img / kNouns.size()) % kScenes.size();
    const Vec feature = make_feature(noun, scene, rng);
    const std::string image_id = "img-" + std::to_string(img);
    const auto adjectives =
        world.lexicon.adjectives_for(kNouns[noun], Polarity::positive);
    for (std::size_t k = 0; k < 4; ++k) {
      RawCaption raw;
      raw.image_id = image_id;
      raw.feature = feature;
      raw.tokens = make_caption(noun, scene, rng.uniform_index(4));
      const std::string& adjective = adjectives[rng.uniform_index(adjectives.size())];
      for (std::size_t i = 0; i < raw.tokens.size(); ++i) {
        if (raw.tokens[i] == kNouns[noun]) {
          raw.tokens.insert(raw.tokens.begin() + static_cast<std::ptrdiff_t>(i), adjective);
          break;
        }
      }
      world.sentiment_raw.push_back(std::move(raw));
    }
  }

  for (std::size_t img = 300; img < 350; ++img) {
    const std::size_t noun = img % kNouns.size();
    const std::size_t scene = (img / kNouns.size()) % kScenes.size();
    world.heldout.push_back(
        {"img-" + std::to_string(img), make_feature(noun, scene, rng)});
  }

  for (const auto& raw : world.background_raw) {
    world.background.push_back(to_example(raw, world.vocab, nullptr));
  }
  for (const auto& raw : world.sentiment_raw) {
    world.sentiment.push_back(to_example(raw, world.vocab, &world.lexicon));
  }
  return world;
}

void write_vocab_file(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path);
  for (int id = 3; id < vocab.size(); ++id) out << vocab.token(id) << "\n";
}

void write_lexicon_file(const AnpLexicon& lexicon, const std::string& path) {
  std::ofstream out(path);
  for (const auto& e : lexicon.entries()) {
    out << e.adjective << "\t" << e.noun << "\t" << to_string(e.polarity) << "\t"
        << e.strength << "\n";
  }
}

void write_corpus_file(const std::vector<RawCaption>& corpus, const std::string& path) {
  std::ofstream out(path);
  for (const auto& raw : corpus) {
    nlohmann::json line;
    line["image_id"] = raw.image_id;
    line["feature"] = raw.feature;
    line["tokens"] = raw.tokens;
    out << line.dump() << "\n";
  }
}

void write_features_file(const std::vector<ImageFeature>& features, const std::string& path) {
  std::ofstream out(path);
  for (const auto& f : features) {
    nlohmann::json line;
    line["image_id"] = f.image_id;
    line["feature"] = f.feature;
    out << line.dump() << "\n";
  }
}

}  // namespace switchcap::toy
