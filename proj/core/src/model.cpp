#include "krtod/model.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "krtod/errors.hpp"

namespace krtod {

Model::Model(const ModelConfig& cfg, std::size_t vocab_size)
    : config(cfg),
      theta{Retriever(cfg.retriever), SequenceModel(cfg.generator, vocab_size)},
      phi{SequenceModel(cfg.inference, vocab_size)} {
  if (cfg.max_act_len == 0) throw ConfigError("max_act_len must be positive");
  if (cfg.max_response_len == 0) throw ConfigError("max_response_len must be positive");
  if (!(cfg.threshold > 0.0 && cfg.threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
}

bool valid_act(TokenSpan act, std::size_t max_len) {
  if (act.size() < 2 || act.size() > max_len + 1 || act.back() != tok::kEos) return false;
  return std::none_of(act.begin(), act.end() - 1, [](TokenId t) { return tok::is_structural(t); });
}

Tokens with_eos(TokenSpan seq) {
  Tokens out(seq.begin(), seq.end());
  out.push_back(tok::kEos);
  return out;
}

namespace {

void append(Tokens& out, TokenSpan s) { out.insert(out.end(), s.begin(), s.end()); }

TokenSpan strip_eos(TokenSpan s) {
  if (!s.empty() && s.back() == tok::kEos) return s.first(s.size() - 1);
  return s;
}

}  // namespace

Tokens generator_condition(TokenSpan context, TokenSpan user, TokenSpan xi) {
  Tokens out;
  out.reserve(context.size() + user.size() + xi.size() + 2);
  append(out, context);
  out.push_back(tok::kUserField);
  append(out, user);
  out.push_back(tok::kKnowledgeField);
  append(out, xi);
  return out;
}

Tokens generator_target(TokenSpan act, TokenSpan response) {
  Tokens out;
  append(out, strip_eos(act));
  out.push_back(tok::kEndOfAct);
  append(out, response);
  out.push_back(tok::kEos);
  return out;
}

Tokens inference_condition(TokenSpan context, TokenSpan user, TokenSpan response) {
  Tokens out;
  out.reserve(context.size() + user.size() + response.size() + 2);
  append(out, context);
  out.push_back(tok::kUserField);
  append(out, user);
  out.push_back(tok::kResponseField);
  append(out, response);
  return out;
}

Tokens inference_target(TokenSpan xi, TokenSpan act) {
  Tokens out;
  append(out, xi);
  out.push_back(tok::kEndOfKnowledge);
  append(out, strip_eos(act));
  out.push_back(tok::kEos);
  return out;
}

std::optional<LatentState> parse_inference_output(TokenSpan output, const KnowledgeBase& kb,
                                                  std::size_t max_act_len) {
  auto split = std::find(output.begin(), output.end(), tok::kEndOfKnowledge);
  if (split == output.end()) return std::nullopt;
  const auto pos = static_cast<std::size_t>(split - output.begin());
  LatentState h;
  try {
    h.mask = parse_xi(output.first(pos), kb);
  } catch (const ParseError&) {
    return std::nullopt;
  }
  auto act = output.subspan(pos + 1);
  if (!valid_act(act, max_act_len)) return std::nullopt;
  h.act.assign(act.begin(), act.end());
  return h;
}

std::size_t inference_max_len(const KnowledgeBase& kb, std::size_t max_act_len) {
  std::size_t n = 1;  // NULL when nothing is selected
  std::size_t all = 0;
  for (const auto& sv : kb.entries()) all += sv.tokens.size() + 1;
  return std::max(n, all) + 1 + max_act_len + 1;
}

GeneratorOutput split_generator_output(TokenSpan output) {
  GeneratorOutput g;
  auto split = std::find(output.begin(), output.end(), tok::kEndOfAct);
  TokenSpan body = strip_eos(output);
  if (split == output.end()) {
    g.truncated = true;
    g.response.assign(body.begin(), body.end());
    return g;
  }
  const auto pos = static_cast<std::size_t>(split - output.begin());
  g.act = with_eos(output.first(pos));
  if (pos + 1 <= body.size()) g.response.assign(body.begin() + static_cast<std::ptrdiff_t>(pos + 1), body.end());
  return g;
}

double joint_log_prob(const Theta& theta, TokenSpan context, TokenSpan user, TokenSpan response,
                      const KnowledgeBase& kb, const LatentState& h) {
  const double ret = theta.retriever.xi_log_prob(context, user, h.mask, kb);
  const Tokens xi = serialize_xi(h.mask, kb);
  return ret + theta.generator.log_prob(generator_condition(context, user, xi), generator_target(h.act, response));
}

double proposal_log_prob(const Phi& phi, TokenSpan context, TokenSpan user, TokenSpan response,
                         const KnowledgeBase& kb, const LatentState& h) {
  const Tokens xi = serialize_xi(h.mask, kb);
  return phi.inference.log_prob(inference_condition(context, user, response), inference_target(xi, h.act));
}

// ---- checkpoint ----

namespace {

constexpr char kMagic[8] = {'K', 'R', 'T', 'O', 'D', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw IoError("cannot open '" + path + "' for writing");
  }
  template <class T>
  void put(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_doubles(const std::vector<double>& v) {
    put<std::uint64_t>(v.size());
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  void put_tokens(const Tokens& v) {
    put<std::uint64_t>(v.size());
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(TokenId)));
  }
  void finish() {
    out_.flush();
    if (!out_) throw IoError("write to '" + path_ + "' failed");
  }

 private:
  std::ofstream out_;
  std::string path_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw IoError("cannot open '" + path + "'");
  }
  template <class T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw ParseError("checkpoint '" + path_ + "' is truncated");
    return v;
  }
  std::uint64_t get_count(std::uint64_t limit) {
    const auto n = get<std::uint64_t>();
    if (n > limit) throw ParseError("checkpoint '" + path_ + "' has an implausible array length");
    return n;
  }
  std::vector<double> get_doubles() {
    std::vector<double> v(get_count(std::uint64_t{1} << 32));
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in_) throw ParseError("checkpoint '" + path_ + "' is truncated");
    return v;
  }
  Tokens get_tokens() {
    Tokens v(get_count(std::uint64_t{1} << 20));
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(TokenId)));
    if (!in_) throw ParseError("checkpoint '" + path_ + "' is truncated");
    return v;
  }
  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof())
      throw ParseError("checkpoint '" + path_ + "' has trailing bytes");
  }

 private:
  std::ifstream in_;
  std::string path_;
};

void put_encoder(Writer& w, const EncoderConfig& e) {
  w.put<std::uint8_t>(e.backend == Backend::kTabular ? 0 : 1);
  w.put<std::uint64_t>(e.order);
  w.put<std::uint64_t>(e.dim);
  w.put<std::uint64_t>(e.hash_seed);
  w.put<std::uint8_t>(e.copy ? 1 : 0);
}

EncoderConfig get_encoder(Reader& r) {
  EncoderConfig e;
  const auto tag = r.get<std::uint8_t>();
  if (tag > 1) throw ParseError("checkpoint has an unknown backend tag");
  e.backend = tag == 0 ? Backend::kTabular : Backend::kHashed;
  e.order = r.get<std::uint64_t>();
  e.dim = r.get<std::uint64_t>();
  e.hash_seed = r.get<std::uint64_t>();
  e.copy = r.get<std::uint8_t>() != 0;
  return e;
}

void put_sequence(Writer& w, const SequenceModel& m) {
  w.put_doubles(m.weights());
  w.put_doubles(m.copy_weights());
  w.put<std::uint64_t>(m.table().size());
  for (const auto& [k, row] : m.table()) {
    w.put_tokens(k);
    w.put_doubles(row);
  }
}

void get_sequence(Reader& r, SequenceModel& m) {
  auto weights = r.get_doubles();
  if (weights.size() != m.weights().size()) throw ParseError("checkpoint weight matrix has the wrong size");
  m.weights() = std::move(weights);
  auto copy = r.get_doubles();
  if (copy.size() != m.copy_weights().size()) throw ParseError("checkpoint copy head has the wrong size");
  m.copy_weights() = std::move(copy);
  const auto rows = r.get_count(std::uint64_t{1} << 32);
  for (std::uint64_t i = 0; i < rows; ++i) {
    auto key = r.get_tokens();
    auto row = r.get_doubles();
    if (row.size() != m.vocab_size()) throw ParseError("checkpoint table row has the wrong size");
    m.table().emplace(std::move(key), std::move(row));
  }
}

Model read_checkpoint(const std::string& path, const Vocabulary* vocab) {
  Reader r(path);
  char magic[8];
  for (char& c : magic) c = r.get<char>();
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw ParseError("'" + path + "' is not a checkpoint");
  if (r.get<std::uint32_t>() != kVersion) throw ParseError("unsupported checkpoint version");
  const auto fingerprint = r.get<std::uint64_t>();
  const auto vocab_size = r.get<std::uint64_t>();
  if (vocab && (fingerprint != vocab->fingerprint() || vocab_size != vocab->size()))
    throw DomainError("checkpoint '" + path + "' was trained on a different vocabulary");
  ModelConfig cfg;
  cfg.retriever = get_encoder(r);
  cfg.generator = get_encoder(r);
  cfg.inference = get_encoder(r);
  cfg.max_act_len = r.get<std::uint64_t>();
  cfg.max_response_len = r.get<std::uint64_t>();
  cfg.threshold = r.get<double>();
  Model m(cfg, vocab_size);
  auto rw = r.get_doubles();
  if (rw.size() != m.theta.retriever.weights().size()) throw ParseError("checkpoint retriever has the wrong size");
  m.theta.retriever.weights() = std::move(rw);
  m.theta.retriever.bias() = r.get<double>();
  const auto keys = r.get_count(std::uint64_t{1} << 32);
  for (std::uint64_t i = 0; i < keys; ++i) {
    auto key = r.get_tokens();
    m.theta.retriever.table()[std::move(key)] = r.get<double>();
  }
  get_sequence(r, m.theta.generator);
  get_sequence(r, m.phi.inference);
  r.expect_end();
  return m;
}

}  // namespace

void save_checkpoint(const Model& model, const Vocabulary& vocab, const std::string& path) {
  if (model.theta.generator.vocab_size() != vocab.size())
    throw DomainError("model and vocabulary sizes disagree");
  Writer w(path);
  for (char c : kMagic) w.put(c);
  w.put(kVersion);
  w.put<std::uint64_t>(vocab.fingerprint());
  w.put<std::uint64_t>(vocab.size());
  put_encoder(w, model.config.retriever);
  put_encoder(w, model.config.generator);
  put_encoder(w, model.config.inference);
  w.put<std::uint64_t>(model.config.max_act_len);
  w.put<std::uint64_t>(model.config.max_response_len);
  w.put(model.config.threshold);
  w.put_doubles(model.theta.retriever.weights());
  w.put(model.theta.retriever.bias());
  w.put<std::uint64_t>(model.theta.retriever.table().size());
  for (const auto& [k, v] : model.theta.retriever.table()) {
    w.put_tokens(k);
    w.put(v);
  }
  put_sequence(w, model.theta.generator);
  put_sequence(w, model.phi.inference);
  w.finish();
}

Model load_checkpoint(const std::string& path, const Vocabulary& vocab) { return read_checkpoint(path, &vocab); }

Model load_checkpoint_unchecked(const std::string& path) { return read_checkpoint(path, nullptr); }

}  // namespace krtod
