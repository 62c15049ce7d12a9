#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "sgcl/encoder.hpp"
#include "sgcl/trainer.hpp"

namespace sgcl {

/// Configuration or usage problem; the CLI maps these to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Structured text configuration: `key = value` lines under bracketed
/// section headers. Every key is also a CLI flag of the same name, and
/// flags take precedence over file values. Unknown keys are rejected with
/// the offending name.
struct RunConfig {
  EncoderConfig encoder;  // vocab_size derived from data, not configurable
  TrainConfig train;

  int projection_hidden = 0;  // 0 -> 4 * hidden_size
  int projection_out = 0;     // 0 -> hidden_size
  bool no_projection_head = false;

  std::string train_corpus;
  std::string valid_tsv;
  std::string test_tsv;
  int min_count = 1;
  std::string out_dir = "out";

  struct Entry {
    std::string section;
    std::string key;
    std::string description;
    std::string default_value;
  };
  /// One entry per configurable key, in display order.
  static std::vector<Entry> registry();

  /// Applies one value by bare key name. Throws ConfigError for unknown
  /// keys or unparsable values.
  void set(const std::string& key, const std::string& value);

  /// Reads a config file; section headers scope the keys.
  void load_file(const std::string& path);

  HeadConfig head_config() const;
  LossConfig loss_config() const;
};

}  // namespace sgcl
