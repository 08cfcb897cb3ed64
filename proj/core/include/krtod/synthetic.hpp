#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "krtod/corpus.hpp"

namespace krtod {

// Knobs of the synthetic customer-service corpus. Stored on disk as a flat
// `key = value` file.
struct CorpusConfig {
  std::size_t dialogs = 200;
  std::size_t min_turns = 2;
  std::size_t max_turns = 4;
  std::size_t min_kb = 3;
  std::size_t max_kb = 6;
  std::size_t vocab_size = 120;  // total, including the 10 structural symbols
  double noise_rate = 0.0;       // per-position filler insertion probability in user turns
  double labeled_fraction = 0.1;
  std::uint64_t seed = 1;

  void check() const;  // throws ConfigError
};

CorpusConfig load_corpus_config(const std::string& path);
void save_corpus_config(const CorpusConfig& config, const std::string& path);
CorpusConfig parse_corpus_config(const std::string& text);
std::string format_corpus_config(const CorpusConfig& config);

// Word pools of the synthetic domain. All pools live in one vocabulary so
// every split generated from the same config shares token ids.
class SyntheticDomain {
 public:
  explicit SyntheticDomain(const CorpusConfig& config);

  const Vocabulary& vocab() const { return vocab_; }
  const std::vector<std::string>& slots() const { return slots_; }
  const std::vector<std::string>& entities() const { return entities_; }
  const std::vector<std::string>& values() const { return values_; }
  const std::vector<std::string>& fillers() const { return fillers_; }

  // `count` dialogs with ids "<prefix>-NNNNNN"; exactly round(count * fraction)
  // of them keep their labels. The stream label separates RNG streams of
  // different splits generated from one seed.
  Corpus generate(std::size_t count, double labeled_fraction, std::uint64_t seed,
                  const std::string& stream, const std::string& id_prefix) const;

 private:
  CorpusConfig config_;
  Vocabulary vocab_;
  std::vector<std::string> slots_, entities_, values_, fillers_;
};

Corpus generate_synthetic_corpus(const CorpusConfig& config, std::uint64_t seed);

// Splits a corpus by the dialogs' labeled flag (vocabulary shared).
Corpus labeled_part(const Corpus& corpus);
Corpus unlabeled_part(const Corpus& corpus);

}  // namespace krtod
