#include "krtod/corpus_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "krtod/errors.hpp"

namespace krtod {

using json = nlohmann::ordered_json;

namespace {

json dialog_to_json(const Dialog& d, const Vocabulary& vocab) {
  json kb = json::array();
  for (const auto& sv : d.kb.entries())
    kb.push_back({{"entity", sv.entity}, {"slot", sv.slot}, {"value", sv.value}});
  json turns = json::array();
  for (const auto& t : d.turns) {
    json jt;
    jt["user"] = vocab.decode(t.user);
    jt["response"] = vocab.decode(t.response);
    if (t.gold_xi) jt["xi"] = mask_to_indices(*t.gold_xi);
    else jt["xi"] = nullptr;
    if (t.gold_act) jt["act"] = vocab.decode(*t.gold_act);
    else jt["act"] = nullptr;
    turns.push_back(std::move(jt));
  }
  return json{{"id", d.id}, {"kb", std::move(kb)}, {"turns", std::move(turns)}};
}

const json& field(const json& obj, const char* name, std::size_t line) {
  if (!obj.is_object() || !obj.contains(name)) throw ParseError(std::string("missing field '") + name + "'", line);
  return obj.at(name);
}

std::string string_field(const json& obj, const char* name, std::size_t line) {
  const auto& v = field(obj, name, line);
  if (!v.is_string()) throw ParseError(std::string("field '") + name + "' must be a string", line);
  return v.get<std::string>();
}

Dialog dialog_from_json(const json& j, const Vocabulary& vocab, std::size_t line) {
  Dialog d;
  d.id = string_field(j, "id", line);
  const auto& kb = field(j, "kb", line);
  if (!kb.is_array()) throw ParseError("field 'kb' must be an array", line);
  const auto& turns = field(j, "turns", line);
  if (!turns.is_array() || turns.empty()) throw ParseError("field 'turns' must be a nonempty array", line);
  try {
    for (const auto& e : kb)
      d.kb.add(string_field(e, "entity", line), string_field(e, "slot", line), string_field(e, "value", line),
               vocab);
    std::size_t n_labeled = 0;
    for (const auto& jt : turns) {
      Turn t;
      t.user = vocab.encode(string_field(jt, "user", line));
      t.response = vocab.encode(string_field(jt, "response", line));
      const auto& xi = field(jt, "xi", line);
      const auto& act = field(jt, "act", line);
      if (xi.is_null() != act.is_null()) throw ParseError("xi and act must be both present or both null", line);
      if (!xi.is_null()) {
        if (!xi.is_array()) throw ParseError("field 'xi' must be an array of integers", line);
        std::vector<std::size_t> idx;
        for (const auto& i : xi) {
          if (!i.is_number_integer() || i.get<long long>() < 0)
            throw ParseError("field 'xi' must hold non-negative integers", line);
          idx.push_back(i.get<std::size_t>());
        }
        t.gold_xi = indices_to_mask(idx, d.kb.size());
        if (!act.is_string()) throw ParseError("field 'act' must be a string", line);
        t.gold_act = vocab.encode(act.get<std::string>());
        ++n_labeled;
      }
      d.turns.push_back(std::move(t));
    }
    if (n_labeled != 0 && n_labeled != d.turns.size())
      throw ParseError("dialog mixes labeled and unlabeled turns", line);
    d.labeled = n_labeled == d.turns.size();
    validate(d, vocab);
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(e.what(), line);
  }
  return d;
}

}  // namespace

std::string vocabulary_path(const std::string& corpus_path) { return corpus_path + ".vocab"; }

std::string corpus_to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& d : corpus.dialogs) {
    out += dialog_to_json(d, corpus.vocab).dump();
    out += '\n';
  }
  return out;
}

Corpus corpus_from_jsonl(const std::string& text, const Vocabulary& vocab) {
  Corpus corpus;
  corpus.vocab = vocab;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed record: ") + e.what(), lineno);
    }
    corpus.dialogs.push_back(dialog_from_json(j, vocab, lineno));
  }
  return corpus;
}

void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocabulary " + path);
  for (const auto& t : vocab.tokens()) out << t << '\n';
}

Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    tokens.push_back(line);
  }
  return Vocabulary::from_tokens(tokens);
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write corpus " + path);
  out << corpus_to_jsonl(corpus);
  if (!out) throw IoError("write failed for " + path);
  save_vocabulary(corpus.vocab, vocabulary_path(path));
}

Corpus load_corpus(const std::string& path) {
  const auto vocab = load_vocabulary(vocabulary_path(path));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return corpus_from_jsonl(buf.str(), vocab);
}

}  // namespace krtod
