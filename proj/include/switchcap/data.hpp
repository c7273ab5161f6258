#pragma once

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "switchcap/tensor.hpp"

namespace switchcap {

enum class Polarity { positive, negative };

/// Accepts "positive"/"pos" and "negative"/"neg".
Polarity parse_polarity(const std::string& text);
std::string to_string(Polarity p);

/// Token <-> dense id bijection with reserved sentence-boundary and
/// unknown tokens at fixed ids.
class Vocabulary {
 public:
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr int kUnk = 2;

  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& words);

  /// V, including the three reserved tokens.
  int size() const { return static_cast<int>(tokens_.size()); }

  /// Id for a token; unknown tokens map to kUnk.
  int id(const std::string& token) const;

  bool contains(const std::string& token) const { return index_.count(token) > 0; }

  const std::string& token(int id) const;

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct AnpEntry {
  std::string adjective;
  std::string noun;
  Polarity polarity = Polarity::positive;
  double strength = 1.0;  // in (0, 1]
};

/// Adjective-noun pairs with polarity; (adjective, noun, polarity) triples
/// are unique.
class AnpLexicon {
 public:
  void add(const AnpEntry& entry);

  const std::vector<AnpEntry>& entries() const { return entries_; }

  bool contains(const std::string& adjective, const std::string& noun, Polarity p) const;
  bool is_noun(const std::string& token, Polarity p) const;

  /// Adjectives pairing with `noun` under polarity `p`, sorted lexicographically.
  std::vector<std::string> adjectives_for(const std::string& noun, Polarity p) const;

  /// All adjectives of the polarity, sorted lexicographically.
  std::vector<std::string> adjectives(Polarity p) const;

  std::size_t count(Polarity p) const;

 private:
  std::vector<AnpEntry> entries_;
  std::set<std::tuple<std::string, std::string, int>> keys_;
};

/// One training item: image feature, token-id sequence ending in EOS, and
/// per-token sentiment strengths.
struct CaptionExample {
  std::string image_id;
  Vec feature;
  std::vector<int> tokens;  // y_1..y_T, last is Vocabulary::kEos
  std::vector<double> eta;  // same length as tokens, values in [0, 1]
};

/// Per-token sentiment strengths for the binary tagging rule: 1 on the
/// adjective of a polarity-matching lexicon pair immediately followed by
/// its noun and on that noun, else 0.
std::vector<double> tag_sentiment(const std::vector<std::string>& tokens,
                                  const AnpLexicon& lexicon, Polarity polarity);

/// One token per line; ids assigned in file order after the reserved ids.
Vocabulary load_vocab(const std::string& path);

/// TSV: adjective<TAB>noun<TAB>polarity<TAB>strength.
AnpLexicon load_lexicon(const std::string& path);

/// JSON-lines corpus; each line {"image_id", "feature", "tokens"}.
/// Out-of-vocabulary tokens map to UNK, EOS is appended, eta is zero.
std::vector<CaptionExample> load_corpus(const std::string& path, const Vocabulary& vocab);

/// Same, but eta is tagged from the lexicon while the raw token strings are
/// still available.
std::vector<CaptionExample> load_corpus(const std::string& path, const Vocabulary& vocab,
                                        const AnpLexicon& lexicon, Polarity polarity);

/// JSON-lines features file; each line {"image_id", "feature"} (extra keys
/// ignored, so a corpus file works too).
struct ImageFeature {
  std::string image_id;
  Vec feature;
};
std::vector<ImageFeature> load_features(const std::string& path);

/// A corpus line kept as raw token strings (no vocabulary mapping, no EOS).
struct RawCaption {
  std::string image_id;
  Vec feature;
  std::vector<std::string> tokens;
};
std::vector<RawCaption> load_raw_corpus(const std::string& path);

// --- checkpoint container ---------------------------------------------------

struct NamedTensor {
  std::string name;
  Matrix value;
};

/// Binary container: 8-byte magic, length-prefixed JSON metadata, named
/// float32 tensor records, CRC32 trailer. All integers little-endian.
struct Checkpoint {
  nlohmann::json metadata;  // must be a JSON object
  std::vector<NamedTensor> tensors;

  const Matrix& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;
};

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { bad_magic, truncated, checksum_mismatch, malformed, inconsistent };

  CheckpointError(Kind kind, const std::string& message)
      : std::runtime_error(message), kind(kind) {}

  Kind kind;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Serialize/parse without touching the filesystem (used for byte-identity
/// checks and atomic writes).
std::string checkpoint_to_bytes(const Checkpoint& ckpt);
Checkpoint checkpoint_from_bytes(const std::string& bytes);

/// CRC-32 (IEEE 802.3 polynomial, reflected).
std::uint32_t crc32(const unsigned char* data, std::size_t len);

/// Write via a temp file and rename so readers never see partial output.
void atomic_write_file(const std::string& path, const std::string& bytes);

}  // namespace switchcap
