#include "sgcl/text.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <unordered_map>

namespace sgcl {

namespace {

const char* kSpecials[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};

bool is_word_char(unsigned char c) {
  return std::isalnum(c) || c >= 0x80;  // UTF-8 continuation/lead bytes pass through
}

std::optional<double> parse_score(const std::string& field) {
  if (field.empty()) return std::nullopt;
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  if (!(value >= 0.0 && value <= 5.0)) return std::nullopt;
  return value;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

std::optional<SimilarityRecord> parse_similarity_row(const std::string& line) {
  auto fields = split_fields(line);
  const std::string* a = nullptr;
  const std::string* b = nullptr;
  std::optional<double> score;
  if (fields.size() == 3) {
    score = parse_score(fields[0]);
    a = &fields[1];
    b = &fields[2];
  } else if (fields.size() >= 7) {
    score = parse_score(fields[4]);
    a = &fields[5];
    b = &fields[6];
  } else {
    return std::nullopt;
  }
  if (!score || a->empty() || b->empty()) return std::nullopt;
  return SimilarityRecord{*a, *b, *score};
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  return in;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

int Vocab::id_of(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? kUnk : it->second;
}

bool Vocab::contains(const std::string& token) const {
  return token_to_id.count(token) != 0;
}

std::vector<std::string> split_tokens(const std::string& sentence) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  };
  for (unsigned char c : sentence) {
    if (is_word_char(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (std::isspace(c)) {
      flush();
    } else {
      flush();
      tokens.emplace_back(1, static_cast<char>(c));
    }
  }
  flush();
  return tokens;
}

Vocab build_vocab(std::span<const std::string> corpus, int min_count) {
  if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  if (min_count < 1) throw std::invalid_argument("build_vocab: min_count < 1");

  std::unordered_map<std::string, int> counts;
  std::vector<std::string> first_seen;  // keeps id assignment deterministic
  for (const auto& sentence : corpus) {
    for (auto& token : split_tokens(sentence)) {
      auto [it, inserted] = counts.try_emplace(token, 0);
      if (inserted) first_seen.push_back(token);
      ++it->second;
    }
  }

  Vocab vocab;
  for (const char* s : kSpecials) {
    vocab.token_to_id.emplace(s, vocab.size());
    vocab.id_to_token.emplace_back(s);
  }
  for (const auto& token : first_seen) {
    if (counts[token] >= min_count) {
      vocab.token_to_id.emplace(token, vocab.size());
      vocab.id_to_token.push_back(token);
    }
  }
  return vocab;
}

TokenizedSentence tokenize(const std::string& sentence, const Vocab& vocab,
                           int max_seq_len) {
  if (max_seq_len < 3)
    throw std::invalid_argument("tokenize: max_seq_len must be >= 3");
  auto words = split_tokens(sentence);
  if (words.empty()) throw std::invalid_argument("tokenize: empty sentence");

  const std::size_t keep =
      std::min(words.size(), static_cast<std::size_t>(max_seq_len - 2));
  TokenizedSentence out;
  out.ids.reserve(keep + 2);
  out.ids.push_back(Vocab::kCls);
  for (std::size_t i = 0; i < keep; ++i) out.ids.push_back(vocab.id_of(words[i]));
  out.ids.push_back(Vocab::kSep);
  out.true_length = static_cast<int>(out.ids.size());
  out.attention_mask.assign(out.ids.size(), 1);
  return out;
}

void pad_batch(std::span<TokenizedSentence> batch) {
  std::size_t longest = 0;
  for (const auto& s : batch) longest = std::max(longest, s.ids.size());
  for (auto& s : batch) {
    s.ids.resize(longest, Vocab::kPad);
    s.attention_mask.resize(longest, 0);
  }
}

TsvLoadResult load_similarity_tsv(const std::string& path) {
  auto in = open_or_throw(path);
  TsvLoadResult result;
  std::string line;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    if (auto record = parse_similarity_row(line)) {
      result.records.push_back(std::move(*record));
    } else {
      ++result.skipped;
    }
  }
  if (result.records.empty())
    throw std::runtime_error("no similarity records parsed from " + path +
                             " (" + std::to_string(result.skipped) +
                             " rows skipped)");
  return result;
}

std::vector<std::string> load_raw_sentences(const std::string& path) {
  auto in = open_or_throw(path);
  std::vector<std::string> sentences;
  std::string line;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    if (line.find('\t') != std::string::npos) {
      if (auto record = parse_similarity_row(line)) {
        sentences.push_back(record->sentence_a);
        sentences.push_back(record->sentence_b);
        continue;
      }
    }
    sentences.push_back(line);
  }
  return sentences;
}

std::vector<std::string> sentences_from_records(
    std::span<const SimilarityRecord> records) {
  std::vector<std::string> sentences;
  sentences.reserve(records.size() * 2);
  for (const auto& r : records) {
    sentences.push_back(r.sentence_a);
    sentences.push_back(r.sentence_b);
  }
  return sentences;
}

}  // namespace sgcl
