#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <unistd.h>

#include "switchcap/data.hpp"
#include "switchcap/model.hpp"

using namespace switchcap;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("switchcap-data-" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  out << body;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("vocabulary counting and lookup") {
  const Vocabulary vocab({"cat", "dog", "nice", "park", "a"});
  CHECK(vocab.size() == 8);  // 5 words + BOS/EOS/UNK
  CHECK(vocab.id("cat") == 3);
  CHECK(vocab.token(vocab.id("park")) == "park");
  SUBCASE("unknown maps to UNK") { CHECK(vocab.id("zyzzyva") == Vocabulary::kUnk); }
  SUBCASE("reserved ids are fixed") {
    CHECK(vocab.id("<s>") == Vocabulary::kBos);
    CHECK(vocab.id("</s>") == Vocabulary::kEos);
    CHECK(vocab.id("<unk>") == Vocabulary::kUnk);
  }
  SUBCASE("duplicate token rejected") {
    CHECK_THROWS_AS(Vocabulary({"cat", "cat"}), std::invalid_argument);
  }
  SUBCASE("token id round trip is a bijection") {
    for (int id = 0; id < vocab.size(); ++id) CHECK(vocab.id(vocab.token(id)) == id);
  }
}

TEST_CASE("lexicon invariants") {
  AnpLexicon lex;
  lex.add({"ugly", "car", Polarity::negative, 0.7});
  lex.add({"nice", "car", Polarity::positive, 0.9});
  CHECK(lex.is_noun("car", Polarity::negative));
  CHECK_FALSE(lex.is_noun("ugly", Polarity::negative));
  CHECK(lex.adjectives_for("car", Polarity::positive) == std::vector<std::string>{"nice"});
  SUBCASE("duplicate triple rejected") {
    CHECK_THROWS_AS(lex.add({"ugly", "car", Polarity::negative, 0.5}),
                    std::invalid_argument);
  }
  SUBCASE("same pair under the other polarity is fine") {
    lex.add({"ugly", "car", Polarity::positive, 0.2});
    CHECK(lex.entries().size() == 3);
  }
  SUBCASE("strength outside (0,1] rejected") {
    CHECK_THROWS_AS(lex.add({"bad", "day", Polarity::negative, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(lex.add({"bad", "day", Polarity::negative, 1.5}), std::invalid_argument);
  }
}

TEST_CASE("tag_sentiment") {
  AnpLexicon lex;
  lex.add({"beautiful", "sunset", Polarity::positive, 1.0});
  SUBCASE("adjacent pair tags both words") {
    const auto eta =
        tag_sentiment({"a", "beautiful", "sunset", "over", "water"}, lex, Polarity::positive);
    CHECK(eta == std::vector<double>{0, 1, 1, 0, 0});
  }
  SUBCASE("no match gives all zeros") {
    const auto eta = tag_sentiment({"a", "dog", "barks"}, lex, Polarity::positive);
    CHECK(eta == std::vector<double>{0, 0, 0});
  }
  SUBCASE("pair must be adjacent and complete") {
    CHECK(tag_sentiment({"beautiful", "car"}, lex, Polarity::positive) ==
          std::vector<double>{0, 0});
    CHECK(tag_sentiment({"beautiful", "big", "sunset"}, lex, Polarity::positive) ==
          std::vector<double>{0, 0, 0});
  }
  SUBCASE("polarity selectivity") {
    const auto eta =
        tag_sentiment({"a", "beautiful", "sunset"}, lex, Polarity::negative);
    CHECK(eta == std::vector<double>{0, 0, 0});
  }
  SUBCASE("output length always matches input") {
    Rng rng(5);
    const std::vector<std::string> pool = {"a", "beautiful", "sunset", "x", "y"};
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<std::string> tokens;
      const std::size_t len = 1 + rng.uniform_index(8);
      for (std::size_t i = 0; i < len; ++i) tokens.push_back(pool[rng.uniform_index(pool.size())]);
      const auto eta = tag_sentiment(tokens, lex, Polarity::positive);
      CHECK(eta.size() == tokens.size());
      for (double e : eta) CHECK((e == 0.0 || e == 1.0));
    }
  }
  SUBCASE("empty input is a contract violation") {
    CHECK_THROWS_AS(tag_sentiment({}, lex, Polarity::positive), std::invalid_argument);
  }
}

TEST_CASE("file loaders") {
  TempDir tmp;
  SUBCASE("vocab file") {
    write_file(tmp.file("vocab.txt"), "cat\ndog\nnice\npark\na\n");
    const Vocabulary vocab = load_vocab(tmp.file("vocab.txt"));
    CHECK(vocab.size() == 8);
    CHECK(vocab.id("dog") == 4);
  }
  SUBCASE("vocab with duplicate errors") {
    write_file(tmp.file("vocab.txt"), "cat\ncat\n");
    CHECK_THROWS(load_vocab(tmp.file("vocab.txt")));
  }
  SUBCASE("lexicon TSV") {
    write_file(tmp.file("lex.tsv"),
               "ugly\tcar\tnegative\t0.7\nnice\tcar\tpositive\t0.9\n");
    const AnpLexicon lex = load_lexicon(tmp.file("lex.tsv"));
    CHECK(lex.entries().size() == 2);
    CHECK(lex.contains("ugly", "car", Polarity::negative));
  }
  SUBCASE("lexicon duplicate errors with line number") {
    write_file(tmp.file("lex.tsv"),
               "ugly\tcar\tnegative\t0.7\nugly\tcar\tnegative\t0.7\n");
    CHECK_THROWS_WITH_AS(load_lexicon(tmp.file("lex.tsv")),
                         doctest::Contains(":2:"), std::runtime_error);
  }
  SUBCASE("corpus happy path with OOV fallback") {
    const Vocabulary vocab({"a", "cat", "park", "in", "the"});
    write_file(tmp.file("corpus.jsonl"),
               R"({"image_id":"i0","feature":[1,0],"tokens":["a","cat"]})"
               "\n"
               R"({"image_id":"i1","feature":[0,1],"tokens":["a","zyzzyva"]})"
               "\n");
    const auto corpus = load_corpus(tmp.file("corpus.jsonl"), vocab);
    REQUIRE(corpus.size() == 2);
    CHECK(corpus[0].tokens == std::vector<int>{vocab.id("a"), vocab.id("cat"),
                                               Vocabulary::kEos});
    CHECK(corpus[1].tokens[1] == Vocabulary::kUnk);
    CHECK(corpus[0].eta == std::vector<double>{0, 0, 0});
    SUBCASE("load is deterministic") {
      const auto again = load_corpus(tmp.file("corpus.jsonl"), vocab);
      REQUIRE(again.size() == corpus.size());
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        CHECK(again[i].image_id == corpus[i].image_id);
        CHECK(again[i].tokens == corpus[i].tokens);
        CHECK(again[i].feature == corpus[i].feature);
      }
    }
  }
  SUBCASE("corpus with tagging fills eta before UNK mapping") {
    const Vocabulary vocab({"a", "cat"});  // "nice" is OOV on purpose
    AnpLexicon lex;
    lex.add({"nice", "cat", Polarity::positive, 1.0});
    write_file(tmp.file("corpus.jsonl"),
               R"({"image_id":"i0","feature":[1],"tokens":["a","nice","cat"]})"
               "\n");
    const auto corpus = load_corpus(tmp.file("corpus.jsonl"), vocab, lex, Polarity::positive);
    REQUIRE(corpus.size() == 1);
    CHECK(corpus[0].eta == std::vector<double>{0, 1, 1, 0});
  }
  SUBCASE("malformed line reports its number") {
    const Vocabulary vocab({"a"});
    write_file(tmp.file("corpus.jsonl"),
               R"({"image_id":"i0","feature":[1],"tokens":["a"]})"
               "\nnot json\n");
    CHECK_THROWS_WITH_AS(load_corpus(tmp.file("corpus.jsonl"), vocab),
                         doctest::Contains(":2:"), std::runtime_error);
  }
  SUBCASE("inconsistent feature length errors") {
    const Vocabulary vocab({"a"});
    write_file(tmp.file("corpus.jsonl"),
               R"({"image_id":"i0","feature":[1,2],"tokens":["a"]})"
               "\n"
               R"({"image_id":"i1","feature":[1],"tokens":["a"]})"
               "\n");
    CHECK_THROWS(load_corpus(tmp.file("corpus.jsonl"), vocab));
  }
}

TEST_CASE("checkpoint container") {
  TempDir tmp;
  const std::string path = tmp.file("model.ckpt");

  Checkpoint ckpt;
  ckpt.metadata = {{"kind", "background"}, {"D", 2}};
  Matrix m(2, 3);
  Rng rng(77);
  for (double& x : m.data) x = rng.uniform(-1, 1);
  ckpt.tensors.push_back({"stream0.T", m});

  SUBCASE("round trip preserves tensors to float32") {
    save_checkpoint(ckpt, path);
    const Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.metadata.at("kind") == "background");
    REQUIRE(loaded.tensors.size() == 1);
    CHECK(loaded.tensors[0].name == "stream0.T");
    CHECK(loaded.tensors[0].value.rows == 2);
    CHECK(loaded.tensors[0].value.cols == 3);
    for (std::size_t i = 0; i < m.data.size(); ++i) {
      CHECK(loaded.tensors[0].value.data[i] ==
            static_cast<double>(static_cast<float>(m.data[i])));
    }
  }
  SUBCASE("save is byte-deterministic") {
    CHECK(checkpoint_to_bytes(ckpt) == checkpoint_to_bytes(ckpt));
  }
  SUBCASE("corrupted magic is a version error") {
    std::string bytes = checkpoint_to_bytes(ckpt);
    bytes[0] = 'X';
    try {
      checkpoint_from_bytes(bytes);
      FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
      CHECK(e.kind == CheckpointError::Kind::bad_magic);
    }
  }
  SUBCASE("flipped payload byte is a checksum error") {
    std::string bytes = checkpoint_to_bytes(ckpt);
    bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x40);
    try {
      checkpoint_from_bytes(bytes);
      FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
      CHECK(e.kind == CheckpointError::Kind::checksum_mismatch);
    }
  }
  SUBCASE("truncation is its own error") {
    const std::string bytes = checkpoint_to_bytes(ckpt);
    try {
      checkpoint_from_bytes(bytes.substr(0, 10));
      FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
      CHECK(e.kind == CheckpointError::Kind::truncated);
    }
  }
  SUBCASE("non-finite tensor refuses to serialize") {
    ckpt.tensors[0].value(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(checkpoint_to_bytes(ckpt), std::invalid_argument);
  }
}

TEST_CASE("model checkpoint mapping catches metadata inconsistencies") {
  const ModelDims dims{3, 5, 2};
  Rng rng(5);
  const StreamParams stream = StreamParams::random_init(dims, rng);
  const Vocabulary vocab({"a", "b"});  // V = 5
  Checkpoint ckpt = background_to_checkpoint(stream, vocab, nlohmann::json::object());

  SUBCASE("good round trip through serialized bytes") {
    const LoadedBackground loaded =
        background_from_checkpoint(checkpoint_from_bytes(checkpoint_to_bytes(ckpt)));
    CHECK(loaded.stream.dims() == dims);
    CHECK(loaded.vocab.size() == 5);
    for (std::size_t i = 0; i < stream.T.data.size(); ++i) {
      CHECK(loaded.stream.T.data[i] ==
            static_cast<double>(static_cast<float>(stream.T.data[i])));
    }
  }
  SUBCASE("metadata D disagreeing with tensor rows errors") {
    ckpt.metadata["D"] = 99;
    try {
      background_from_checkpoint(ckpt);
      FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
      CHECK(e.kind == CheckpointError::Kind::inconsistent);
    }
  }
  SUBCASE("missing tensor errors") {
    ckpt.tensors.pop_back();
    CHECK_THROWS_AS(background_from_checkpoint(ckpt), CheckpointError);
  }
}

TEST_CASE("atomic write leaves no temp file") {
  TempDir tmp;
  const std::string path = tmp.file("out.bin");
  atomic_write_file(path, "payload");
  CHECK(read_file(path) == "payload");
  CHECK_FALSE(fs::exists(path + ".tmp"));
}
