#include "nn/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "common.hpp"

namespace argex::nn {

namespace {

bool is_peelable(char c) {
  switch (c) {
    case ',': case '.': case ':': case ';': case '!': case '?':
    case '(': case ')': case '"': case '\'':
      return true;
    default:
      return false;
  }
}

}  // namespace

std::vector<std::string> word_tokenize(const std::string& text) {
  std::vector<std::string> out;
  for (const std::string& raw : argex::split_whitespace(text)) {
    std::string piece = raw;
    std::vector<std::string> prefix, suffix;
    while (piece.size() > 1 && is_peelable(piece.front())) {
      prefix.push_back(std::string(1, piece.front()));
      piece.erase(piece.begin());
    }
    while (piece.size() > 1 && is_peelable(piece.back())) {
      suffix.push_back(std::string(1, piece.back()));
      piece.pop_back();
    }
    for (const auto& p : prefix) out.push_back(p);
    out.push_back(piece);
    for (auto it = suffix.rbegin(); it != suffix.rend(); ++it) out.push_back(*it);
  }
  return out;
}

Vocab Vocab::build(const std::vector<std::string>& texts,
                   const std::vector<std::string>& extra_tokens) {
  std::set<std::string> words;
  for (const auto& t : texts)
    for (const auto& w : word_tokenize(t)) words.insert(w);
  for (const auto& t : extra_tokens)
    for (const auto& w : word_tokenize(t)) words.insert(w);
  words.erase(kBos);
  words.erase(kEos);
  words.erase(kUnk);

  Vocab v;
  v.id_to_token_ = {kBos, kEos, kUnk};
  v.id_to_token_.insert(v.id_to_token_.end(), words.begin(), words.end());
  v.index_tokens();
  return v;
}

void Vocab::index_tokens() {
  token_to_id_.clear();
  for (size_t i = 0; i < id_to_token_.size(); ++i)
    token_to_id_[id_to_token_[i]] = static_cast<int>(i);
}

int Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? unk_id() : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size())
    argex::fail(argex::Error::Kind::internal, "token id out of range: " + std::to_string(id));
  return id_to_token_[id];
}

bool Vocab::contains(const std::string& token) const { return token_to_id_.count(token) > 0; }

uint64_t Vocab::fingerprint() const {
  uint64_t h = 1469598103934665603ULL;
  for (const auto& t : id_to_token_) h = splitmix64(h ^ fnv1a64(t));
  return h;
}

void Vocab::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["tokens"] = id_to_token_;
  std::ofstream out(path);
  if (!out) argex::fail(argex::Error::Kind::io, "cannot write vocab file: " + path.string());
  out << j.dump() << "\n";
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) argex::fail(argex::Error::Kind::io, "cannot open vocab file: " + path.string());
  nlohmann::ordered_json j;
  in >> j;
  Vocab v;
  for (const auto& t : j.at("tokens")) v.id_to_token_.push_back(t.get<std::string>());
  if (v.id_to_token_.size() < 3 || v.id_to_token_[0] != kBos || v.id_to_token_[1] != kEos ||
      v.id_to_token_[2] != kUnk)
    argex::fail(argex::Error::Kind::io, "vocab file missing structural specials: " + path.string());
  v.index_tokens();
  return v;
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& w : word_tokenize(text)) ids.push_back(vocab_->id(w));
  return ids;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
  std::vector<std::string> toks;
  for (int id : ids) {
    if (id == vocab_->bos_id() || id == vocab_->eos_id()) continue;
    toks.push_back(vocab_->token(id));
  }
  return argex::join_tokens(toks, " ");
}

}  // namespace argex::nn
