#include "krtod/decode.hpp"

#include <fstream>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "krtod/errors.hpp"
#include "krtod/hash.hpp"

namespace krtod {

DecodeMode decode_mode_from_string(const std::string& s) {
  if (s == "greedy") return DecodeMode::kGreedy;
  if (s == "sampled") return DecodeMode::kSampled;
  throw ConfigError("unknown decode mode '" + s + "' (expected greedy or sampled)");
}

TurnPrediction respond(const Model& model, TokenSpan context, TokenSpan user, const KnowledgeBase& kb,
                       double threshold, DecodeMode mode, Rng& rng) {
  TurnPrediction out;
  out.mask = model.theta.retriever.retrieve(context, user, kb, threshold);
  const Tokens cond = generator_condition(context, user, serialize_xi(out.mask, kb));
  const std::size_t max_len = model.config.max_act_len + model.config.max_response_len + 2;
  const Tokens gen = mode == DecodeMode::kGreedy ? model.theta.generator.greedy(cond, max_len)
                                                 : model.theta.generator.sample(cond, rng, max_len);
  auto split = split_generator_output(gen);
  out.act = std::move(split.act);
  out.response = std::move(split.response);
  out.truncated = split.truncated;
  return out;
}

std::vector<PredictionRecord> run_corpus(const Model& model, const Corpus& corpus, double threshold,
                                         DecodeMode mode, std::uint64_t seed, std::size_t threads) {
  std::vector<std::vector<PredictionRecord>> per_dialog(corpus.dialogs.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t d = begin; d < corpus.dialogs.size(); d += stride) {
      const Dialog& dialog = corpus.dialogs[d];
      Rng rng(derive_seed(seed, "decode/" + dialog.id));
      for (std::size_t t = 1; t <= dialog.turns.size(); ++t) {
        const Tokens context = build_context(dialog, t);
        const auto pred = respond(model, context, dialog.turns[t - 1].user, dialog.kb, threshold, mode, rng);
        PredictionRecord rec;
        rec.dialog_id = dialog.id;
        rec.turn = t;
        rec.mask = mask_to_indices(pred.mask);
        rec.act = pred.act.empty() ? std::string()
                                   : corpus.vocab.decode(TokenSpan(pred.act).first(pred.act.size() - 1));
        rec.response = corpus.vocab.decode(pred.response);
        rec.truncated = pred.truncated;
        per_dialog[d].push_back(std::move(rec));
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, corpus.dialogs.size()));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(work, w, threads);
  }
  std::vector<PredictionRecord> out;
  for (auto& v : per_dialog)
    for (auto& r : v) out.push_back(std::move(r));
  return out;
}

std::string predictions_to_jsonl(const std::vector<PredictionRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["dialog_id"] = r.dialog_id;
    j["turn"] = r.turn;
    j["mask"] = r.mask;
    j["act"] = r.act;
    j["response"] = r.response;
    if (r.truncated) j["truncated"] = true;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<PredictionRecord> predictions_from_jsonl(const std::string& text) {
  std::vector<PredictionRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PredictionRecord r;
      r.dialog_id = j.at("dialog_id").get<std::string>();
      r.turn = j.at("turn").get<std::size_t>();
      r.mask = j.at("mask").get<std::vector<std::size_t>>();
      r.act = j.at("act").get<std::string>();
      r.response = j.at("response").get<std::string>();
      r.truncated = j.contains("truncated") && j["truncated"].get<bool>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad prediction record: ") + e.what(), lineno);
    }
  }
  return out;
}

void save_predictions(const std::vector<PredictionRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << predictions_to_jsonl(records);
  if (!out) throw IoError("write to '" + path + "' failed");
}

std::vector<PredictionRecord> load_predictions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return predictions_from_jsonl(ss.str());
}

std::vector<std::vector<std::string>> align_predictions(const std::vector<PredictionRecord>& records,
                                                        const Corpus& gold) {
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::vector<std::string>> out(gold.dialogs.size());
  std::vector<std::vector<bool>> seen(gold.dialogs.size());
  for (std::size_t d = 0; d < gold.dialogs.size(); ++d) {
    index.emplace(gold.dialogs[d].id, d);
    out[d].resize(gold.dialogs[d].turns.size());
    seen[d].assign(gold.dialogs[d].turns.size(), false);
  }
  for (const auto& r : records) {
    auto it = index.find(r.dialog_id);
    if (it == index.end()) throw ShapeError("prediction for unknown dialog " + r.dialog_id);
    const auto d = it->second;
    if (r.turn < 1 || r.turn > out[d].size())
      throw ShapeError("prediction for turn " + std::to_string(r.turn) + " of dialog " + r.dialog_id +
                       " is out of range");
    if (seen[d][r.turn - 1])
      throw ShapeError("duplicate prediction for dialog " + r.dialog_id + " turn " + std::to_string(r.turn));
    seen[d][r.turn - 1] = true;
    out[d][r.turn - 1] = r.response;
  }
  if (records.size() != gold.turn_count())
    throw ShapeError("got " + std::to_string(records.size()) + " predictions for " +
                     std::to_string(gold.turn_count()) + " gold turns");
  return out;
}

EvalReport evaluate_predictions(const std::vector<PredictionRecord>& records, const Corpus& gold) {
  return evaluate(align_predictions(records, gold), gold);
}

}  // namespace krtod
