#include "switchcap/data.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace switchcap {

namespace {

const char* kBosToken = "<s>";
const char* kEosToken = "</s>";
const char* kUnkToken = "<unk>";

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void line_error(const std::string& path, std::size_t line_no,
                             const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + what);
}

}  // namespace

Polarity parse_polarity(const std::string& text) {
  if (text == "positive" || text == "pos") return Polarity::positive;
  if (text == "negative" || text == "neg") return Polarity::negative;
  throw std::invalid_argument("unknown polarity '" + text + "' (expected pos or neg)");
}

std::string to_string(Polarity p) {
  return p == Polarity::positive ? "positive" : "negative";
}

Vocabulary::Vocabulary() {
  add(kBosToken);
  add(kEosToken);
  add(kUnkToken);
}

Vocabulary::Vocabulary(const std::vector<std::string>& words) : Vocabulary() {
  for (const auto& w : words) add(w);
  if (size() < 4) throw std::invalid_argument("vocabulary needs at least one real token");
}

void Vocabulary::add(const std::string& token) {
  if (token.empty()) throw std::invalid_argument("vocabulary token must be nonempty");
  auto [it, inserted] = index_.emplace(token, static_cast<int>(tokens_.size()));
  if (!inserted) throw std::invalid_argument("duplicate vocabulary token '" + token + "'");
  tokens_.push_back(token);
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) {
    throw std::invalid_argument("token id " + std::to_string(id) + " out of range (V=" +
                                std::to_string(size()) + ")");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

void AnpLexicon::add(const AnpEntry& entry) {
  if (entry.adjective.empty() || entry.noun.empty()) {
    throw std::invalid_argument("lexicon entry needs nonempty adjective and noun");
  }
  if (!(entry.strength > 0.0) || entry.strength > 1.0) {
    throw std::invalid_argument("lexicon strength must be in (0,1], got " +
                                std::to_string(entry.strength));
  }
  auto key = std::make_tuple(entry.adjective, entry.noun, static_cast<int>(entry.polarity));
  if (!keys_.insert(key).second) {
    throw std::invalid_argument("duplicate lexicon entry (" + entry.adjective + ", " +
                                entry.noun + ", " + to_string(entry.polarity) + ")");
  }
  entries_.push_back(entry);
}

bool AnpLexicon::contains(const std::string& adjective, const std::string& noun,
                          Polarity p) const {
  return keys_.count(std::make_tuple(adjective, noun, static_cast<int>(p))) > 0;
}

bool AnpLexicon::is_noun(const std::string& token, Polarity p) const {
  for (const auto& e : entries_) {
    if (e.polarity == p && e.noun == token) return true;
  }
  return false;
}

std::vector<std::string> AnpLexicon::adjectives_for(const std::string& noun,
                                                    Polarity p) const {
  std::set<std::string> uniq;
  for (const auto& e : entries_) {
    if (e.polarity == p && e.noun == noun) uniq.insert(e.adjective);
  }
  return {uniq.begin(), uniq.end()};
}

std::vector<std::string> AnpLexicon::adjectives(Polarity p) const {
  std::set<std::string> uniq;
  for (const auto& e : entries_) {
    if (e.polarity == p) uniq.insert(e.adjective);
  }
  return {uniq.begin(), uniq.end()};
}

std::size_t AnpLexicon::count(Polarity p) const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.polarity == p) ++n;
  }
  return n;
}

std::vector<double> tag_sentiment(const std::vector<std::string>& tokens,
                                  const AnpLexicon& lexicon, Polarity polarity) {
  if (tokens.empty()) throw std::invalid_argument("tag_sentiment: empty token list");
  std::vector<double> eta(tokens.size(), 0.0);
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    if (lexicon.contains(tokens[i], tokens[i + 1], polarity)) {
      eta[i] = 1.0;
      eta[i + 1] = 1.0;
    }
  }
  return eta;
}

Vocabulary load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary file " + path);
  std::vector<std::string> words;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string tok = trim(line);
    if (tok.empty()) continue;
    if (tok.find_first_of(" \t") != std::string::npos) {
      line_error(path, line_no, "vocabulary entries are single tokens, got '" + tok + "'");
    }
    words.push_back(tok);
  }
  try {
    return Vocabulary(words);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

AnpLexicon load_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open lexicon file " + path);
  AnpLexicon lex;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(trim(field));
    if (fields.size() != 4) {
      line_error(path, line_no, "expected 4 tab-separated fields, got " +
                                    std::to_string(fields.size()));
    }
    AnpEntry entry;
    entry.adjective = fields[0];
    entry.noun = fields[1];
    try {
      entry.polarity = parse_polarity(fields[2]);
      entry.strength = std::stod(fields[3]);
      lex.add(entry);
    } catch (const std::exception& e) {
      line_error(path, line_no, e.what());
    }
  }
  return lex;
}

namespace {

std::vector<CaptionExample> load_corpus_impl(const std::string& path, const Vocabulary& vocab,
                                             const AnpLexicon* lexicon, Polarity polarity) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file " + path);
  std::vector<CaptionExample> corpus;
  std::string line;
  std::size_t line_no = 0;
  std::size_t feature_dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      line_error(path, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object() || !obj.contains("image_id") || !obj.contains("feature") ||
        !obj.contains("tokens")) {
      line_error(path, line_no, "expected object with image_id, feature, tokens");
    }
    CaptionExample ex;
    try {
      ex.image_id = obj.at("image_id").get<std::string>();
      ex.feature = obj.at("feature").get<Vec>();
      std::vector<std::string> words = obj.at("tokens").get<std::vector<std::string>>();
      if (words.empty()) line_error(path, line_no, "tokens must be nonempty");
      for (const auto& w : words) ex.tokens.push_back(vocab.id(w));
      ex.tokens.push_back(Vocabulary::kEos);
      if (lexicon != nullptr) {
        ex.eta = tag_sentiment(words, *lexicon, polarity);
        ex.eta.push_back(0.0);  // appended EOS carries no sentiment
      } else {
        ex.eta.assign(ex.tokens.size(), 0.0);
      }
    } catch (const nlohmann::json::exception& e) {
      line_error(path, line_no, std::string("bad field: ") + e.what());
    }
    if (!all_finite(ex.feature)) line_error(path, line_no, "non-finite feature value");
    if (corpus.empty()) {
      feature_dim = ex.feature.size();
    } else if (ex.feature.size() != feature_dim) {
      line_error(path, line_no, "feature length " + std::to_string(ex.feature.size()) +
                                    " differs from earlier lines (" +
                                    std::to_string(feature_dim) + ")");
    }
    corpus.push_back(std::move(ex));
  }
  return corpus;
}

}  // namespace

std::vector<CaptionExample> load_corpus(const std::string& path, const Vocabulary& vocab) {
  return load_corpus_impl(path, vocab, nullptr, Polarity::positive);
}

std::vector<CaptionExample> load_corpus(const std::string& path, const Vocabulary& vocab,
                                        const AnpLexicon& lexicon, Polarity polarity) {
  return load_corpus_impl(path, vocab, &lexicon, polarity);
}

std::vector<ImageFeature> load_features(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open features file " + path);
  std::vector<ImageFeature> out;
  std::string line;
  std::size_t line_no = 0;
  std::size_t feature_dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
      ImageFeature f;
      f.image_id = obj.at("image_id").get<std::string>();
      f.feature = obj.at("feature").get<Vec>();
      out.push_back(std::move(f));
    } catch (const nlohmann::json::exception& e) {
      line_error(path, line_no, std::string("bad features line: ") + e.what());
    }
    if (out.size() == 1) {
      feature_dim = out.back().feature.size();
    } else if (out.back().feature.size() != feature_dim) {
      line_error(path, line_no, "feature length differs from earlier lines");
    }
  }
  return out;
}

std::vector<RawCaption> load_raw_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file " + path);
  std::vector<RawCaption> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      nlohmann::json obj = nlohmann::json::parse(line);
      RawCaption raw;
      raw.image_id = obj.at("image_id").get<std::string>();
      raw.feature = obj.at("feature").get<Vec>();
      raw.tokens = obj.at("tokens").get<std::vector<std::string>>();
      if (raw.tokens.empty()) line_error(path, line_no, "tokens must be nonempty");
      out.push_back(std::move(raw));
    } catch (const nlohmann::json::exception& e) {
      line_error(path, line_no, std::string("bad corpus line: ") + e.what());
    }
  }
  return out;
}

// --- checkpoint container ---------------------------------------------------

namespace {

constexpr char kMagic[8] = {'S', 'W', 'C', 'H', 'C', 'A', 'P', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_u32(out, bits);
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return end_ - pos_; }

  std::uint32_t u32() {
    need(4);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data()) + pos_;
    pos_ += 4;
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }

  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }

  std::string str(std::size_t len) {
    need(len);
    std::string s = bytes_.substr(pos_, len);
    pos_ += len;
    return s;
  }

 private:
  void need(std::size_t n) {
    if (remaining() < n) {
      throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint truncated");
    }
  }

  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32(const unsigned char* data, std::size_t len) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

const Matrix& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw CheckpointError(CheckpointError::Kind::inconsistent,
                        "checkpoint has no tensor named '" + name + "'");
}

bool Checkpoint::has_tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return true;
  }
  return false;
}

std::string checkpoint_to_bytes(const Checkpoint& ckpt) {
  if (!ckpt.metadata.is_object()) {
    throw std::invalid_argument("checkpoint metadata must be a JSON object");
  }
  for (const auto& t : ckpt.tensors) {
    if (!all_finite(t.value)) {
      throw std::invalid_argument("checkpoint tensor '" + t.name + "' has non-finite values");
    }
    if (t.value.data.size() != t.value.rows * t.value.cols) {
      throw std::invalid_argument("checkpoint tensor '" + t.name + "' has inconsistent shape");
    }
  }
  std::string out(kMagic, sizeof kMagic);
  const std::string meta = ckpt.metadata.dump();
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  for (const auto& t : ckpt.tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put_u32(out, static_cast<std::uint32_t>(t.value.rows));
    put_u32(out, static_cast<std::uint32_t>(t.value.cols));
    for (double x : t.value.data) put_f32(out, static_cast<float>(x));
  }
  put_u32(out, crc32(reinterpret_cast<const unsigned char*>(out.data()), out.size()));
  return out;
}

Checkpoint checkpoint_from_bytes(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) + 4) {
    throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint too short");
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(CheckpointError::Kind::bad_magic,
                          "not a checkpoint or unsupported version (bad magic)");
  }
  const std::size_t body_end = bytes.size() - 4;
  const std::uint32_t stored = static_cast<std::uint8_t>(bytes[body_end]) |
                               (static_cast<std::uint8_t>(bytes[body_end + 1]) << 8) |
                               (static_cast<std::uint8_t>(bytes[body_end + 2]) << 16) |
                               (static_cast<std::uint8_t>(bytes[body_end + 3]) << 24);
  const std::uint32_t actual =
      crc32(reinterpret_cast<const unsigned char*>(bytes.data()), body_end);
  if (stored != actual) {
    throw CheckpointError(CheckpointError::Kind::checksum_mismatch,
                          "checkpoint checksum mismatch");
  }
  ByteReader r(bytes, body_end);
  r.str(sizeof kMagic);
  Checkpoint ckpt;
  const std::uint32_t meta_len = r.u32();
  const std::string meta = r.str(meta_len);
  try {
    ckpt.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError(CheckpointError::Kind::malformed,
                          std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  while (r.remaining() > 0) {
    NamedTensor t;
    const std::uint32_t name_len = r.u32();
    t.name = r.str(name_len);
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    t.value = Matrix(rows, cols);
    for (std::size_t j = 0; j < t.value.data.size(); ++j) {
      t.value.data[j] = static_cast<double>(r.f32());
    }
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  atomic_write_file(path, checkpoint_to_bytes(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_bytes(ss.str());
}

void atomic_write_file(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw std::runtime_error("cannot rename " + tmp + " to " + path);
  }
}

}  // namespace switchcap
