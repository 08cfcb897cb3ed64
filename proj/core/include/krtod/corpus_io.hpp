#pragma once

#include <string>

#include "krtod/corpus.hpp"

namespace krtod {

// One JSON object per line per dialog:
//   {"id": ..., "kb": [{"entity","slot","value"}...],
//    "turns": [{"user","response","xi": [indices] | null,"act": string | null}...]}
// The vocabulary goes to the sidecar `<path>.vocab`, one token per line.
void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

// In-memory variants; `vocab` must already hold every word the records use.
std::string corpus_to_jsonl(const Corpus& corpus);
Corpus corpus_from_jsonl(const std::string& text, const Vocabulary& vocab);

void save_vocabulary(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocabulary(const std::string& path);

std::string vocabulary_path(const std::string& corpus_path);

}  // namespace krtod
