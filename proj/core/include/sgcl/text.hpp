#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace sgcl {

/// Token-to-id map with dense ids and the four reserved specials at 0..3.
struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;

  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int> token_to_id;

  int size() const { return static_cast<int>(id_to_token.size()); }
  /// Id of a token, [UNK] for unknown ones.
  int id_of(const std::string& token) const;
  bool contains(const std::string& token) const;
};

struct TokenizedSentence {
  std::vector<int> ids;             // [CLS] ... [SEP], then [PAD] after padding
  std::vector<int> attention_mask;  // 1 on the first true_length positions
  int true_length = 0;
};

struct SimilarityRecord {
  std::string sentence_a;
  std::string sentence_b;
  double gold = 0.0;  // in [0, 5]
};

/// Lowercased word/punctuation split: letters, digits and non-ASCII bytes
/// form words, each punctuation character is its own token.
std::vector<std::string> split_tokens(const std::string& sentence);

Vocab build_vocab(std::span<const std::string> corpus, int min_count);

TokenizedSentence tokenize(const std::string& sentence, const Vocab& vocab,
                           int max_seq_len);

/// Pads every sentence in the batch to the longest length with [PAD]/mask 0.
void pad_batch(std::span<TokenizedSentence> batch);

struct TsvLoadResult {
  std::vector<SimilarityRecord> records;
  int skipped = 0;
};

/// Reads sentence-pair rows from either the 3-column form
/// (score<TAB>a<TAB>b) or the 7-column raw STS-benchmark layout (score in
/// column 5, sentences in 6 and 7). Formats may be mixed within one file;
/// rows whose score does not parse into [0,5] are skipped and counted.
TsvLoadResult load_similarity_tsv(const std::string& path);

/// One sentence per line, blank lines dropped. Lines that parse as
/// similarity rows contribute both of their sentence columns instead, so a
/// pair TSV doubles as a raw training corpus.
std::vector<std::string> load_raw_sentences(const std::string& path);

std::vector<std::string> sentences_from_records(
    std::span<const SimilarityRecord> records);

}  // namespace sgcl
