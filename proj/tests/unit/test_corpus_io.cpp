#include <gtest/gtest.h>

#include <fstream>

#include "krtod/corpus_io.hpp"
#include "krtod/errors.hpp"
#include "krtod/keyvalue.hpp"
#include "krtod/synthetic.hpp"
#include "test_support.hpp"

namespace krtod {
namespace {

using testing::TempDir;

Corpus small_corpus(double labeled_fraction = 0.5) {
  CorpusConfig cfg;
  cfg.dialogs = 30;
  cfg.noise_rate = 0.1;
  cfg.labeled_fraction = labeled_fraction;
  return generate_synthetic_corpus(cfg, 3);
}

TEST(CorpusIo, RoundTripThroughFiles) {
  TempDir dir;
  const Corpus c = small_corpus();
  save_corpus(c, dir.file("c.jsonl"));
  EXPECT_EQ(load_corpus(dir.file("c.jsonl")), c);
}

TEST(CorpusIo, RoundTripInMemory) {
  const Corpus c = small_corpus(1.0);
  EXPECT_EQ(corpus_from_jsonl(corpus_to_jsonl(c), c.vocab), c);
}

TEST(CorpusIo, VocabularySidecar) {
  TempDir dir;
  const Corpus c = small_corpus();
  save_corpus(c, dir.file("c.jsonl"));
  EXPECT_EQ(load_vocabulary(vocabulary_path(dir.file("c.jsonl"))), c.vocab);
}

TEST(CorpusIo, XiWithoutActIsRejected) {
  const Vocabulary v = testing::vocab_with({"a", "b", "c"});
  const std::string rec =
      R"({"id":"x","kb":[{"entity":"a","slot":"b","value":"c"}],"turns":[{"user":"a","response":"c","xi":[0],"act":null}]})";
  EXPECT_THROW(corpus_from_jsonl(rec + "\n", v), ParseError);
}

TEST(CorpusIo, MalformedLineIsNamed) {
  const Corpus c = small_corpus();
  std::string text = corpus_to_jsonl(c);
  // Cut the third record in half.
  std::size_t pos = 0;
  for (int i = 0; i < 2; ++i) pos = text.find('\n', pos) + 1;
  const std::size_t end = text.find('\n', pos);
  text = text.substr(0, pos + (end - pos) / 2);
  try {
    corpus_from_jsonl(text, c.vocab);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(CorpusIo, UnknownWordIsAnError) {
  const Vocabulary v = testing::vocab_with({"a"});
  const std::string rec = R"({"id":"x","kb":[],"turns":[{"user":"a","response":"zebra","xi":null,"act":null}]})";
  EXPECT_THROW(corpus_from_jsonl(rec, v), ParseError);
}

TEST(CorpusIo, MissingFileIsIoError) {
  TempDir dir;
  EXPECT_THROW(load_corpus(dir.file("none.jsonl")), IoError);
}

TEST(KeyValues, ParsesCommentsAndRejectsGarbage) {
  const auto kvs = parse_key_values("# c\n a = 1 \n\nb=x y # trailing\n");
  ASSERT_EQ(kvs.size(), 2u);
  EXPECT_EQ(kvs[0].key, "a");
  EXPECT_EQ(kv_size(kvs[0]), 1u);
  EXPECT_EQ(kvs[1].value, "x y");
  EXPECT_THROW(parse_key_values("novalue\n"), ConfigError);
  EXPECT_THROW(kv_size({"k", "-3", 1}), ConfigError);
  EXPECT_THROW(kv_double({"k", "1.5x", 1}), ConfigError);
}

}  // namespace
}  // namespace krtod
