#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace argex::nn {

// Closed word-level vocabulary shared by the desk-scale models. Ids 0..2 are
// the structural specials; everything else comes sorted from the build corpus.
class Vocab {
 public:
  static constexpr const char* kBos = "<s>";
  static constexpr const char* kEos = "</s>";
  static constexpr const char* kUnk = "<unk>";

  static Vocab build(const std::vector<std::string>& texts,
                     const std::vector<std::string>& extra_tokens);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int bos_id() const { return 0; }
  int eos_id() const { return 1; }
  int unk_id() const { return 2; }
  int id(const std::string& token) const;
  const std::string& token(int id) const;
  bool contains(const std::string& token) const;
  uint64_t fingerprint() const;

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  void index_tokens();
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

// Whitespace tokenization with leading/trailing punctuation peeled into
// standalone tokens; interior punctuation (conflict.attack, <arg1>) is kept.
std::vector<std::string> word_tokenize(const std::string& text);

class Tokenizer {
 public:
  explicit Tokenizer(const Vocab* vocab) : vocab_(vocab) {}

  std::vector<int> encode(const std::string& text) const;
  std::string decode(const std::vector<int>& ids) const;  // space-joined, specials skipped
  const Vocab& vocab() const { return *vocab_; }

 private:
  const Vocab* vocab_;
};

}  // namespace argex::nn
