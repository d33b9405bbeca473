#include "groundguide/toylm.hpp"

#include <cmath>

#include "groundguide/error.hpp"
#include "groundguide/guidance.hpp"

namespace groundguide {

TableModel::TableModel(std::vector<std::string> vocab, TokenId eos, Table table)
    : vocab_(std::move(vocab)), eos_(eos), table_(std::move(table)) {
  if (vocab_.empty()) {
    throw Error(ErrorCode::InvalidArgument, "table model needs a vocabulary");
  }
  if (eos_ < 0 || static_cast<std::size_t>(eos_) >= vocab_.size()) {
    throw Error(ErrorCode::InvalidArgument, "eos id outside the vocabulary");
  }
  for (const auto& [sig, row] : table_) {
    if (row.size() != vocab_.size()) {
      throw Error(ErrorCode::InvalidArgument,
                  "table row has " + std::to_string(row.size()) +
                      " entries, vocabulary has " +
                      std::to_string(vocab_.size()));
    }
    double sum = 0.0;
    for (double p : row) {
      if (!(p > 0.0) || !std::isfinite(p)) {
        throw Error(ErrorCode::InvalidArgument,
                    "table probabilities must be strictly positive");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw Error(ErrorCode::InvalidArgument,
                  "table row does not sum to 1 (sum=" + std::to_string(sum) +
                      ")");
    }
  }
}

TableModel TableModel::from_json(const Json& j) {
  try {
    Table table;
    for (const auto& [sig, row] : j.at("table").items()) {
      table.emplace(sig, row.get<std::vector<double>>());
    }
    return TableModel(j.at("vocab").get<std::vector<std::string>>(),
                      j.at("eos").get<TokenId>(), std::move(table));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseFailure,
                std::string("bad table model fixture: ") + e.what());
  }
}

TableModel TableModel::load(const std::filesystem::path& path) {
  try {
    return from_json(read_json_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IoError) throw;
    throw Error(ErrorCode::ParseFailure, path.string() + ": " + e.what());
  }
}

Json TableModel::to_json() const {
  Json table = Json::object();
  for (const auto& [sig, row] : table_) table[sig] = row;
  return Json{{"vocab", vocab_}, {"eos", eos_}, {"table", std::move(table)}};
}

std::string TableModel::signature(std::string_view image_ref,
                                  std::string_view prompt,
                                  std::span<const std::string> generated) {
  std::string sig(image_ref);
  sig += kSignatureSeparator;
  sig += prompt;
  for (const auto& tok : generated) {
    sig += kSignatureSeparator;
    sig += tok;
  }
  return sig;
}

std::vector<double> TableModel::distribution(std::string_view signature) const {
  const auto it = table_.find(signature);
  if (it != table_.end()) return it->second;
  return std::vector<double>(vocab_.size(), 1.0 / static_cast<double>(vocab_.size()));
}

LogitVector TableModel::logits(std::string_view signature) const {
  auto p = distribution(signature);
  for (auto& x : p) x = std::log(x);
  return LogitVector(std::move(p));
}

std::pair<LogitVector, LogitVector> toy_step(const TableModel& model,
                                             std::string_view cond_signature,
                                             std::string_view uncond_signature) {
  return {model.logits(cond_signature), model.logits(uncond_signature)};
}

ToyBackend::ToyBackend(TableModel model, std::string name)
    : model_(std::move(model)), name_(std::move(name)) {}

HandshakeInfo ToyBackend::handshake() {
  return {model_.vocab().size(), model_.eos(), name_};
}

std::vector<TokenId> ToyBackend::encode(std::string_view text) {
  const auto base = static_cast<TokenId>(model_.vocab().size());
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for (unsigned char c : text) ids.push_back(base + c);
  return ids;
}

std::string ToyBackend::decode(std::span<const TokenId> tokens) {
  const auto base = static_cast<TokenId>(model_.vocab().size());
  std::string out;
  for (TokenId id : tokens) {
    if (id >= 0 && id < base) {
      out += model_.vocab()[static_cast<std::size_t>(id)];
    } else if (id >= base && id < base + 256) {
      out.push_back(static_cast<char>(id - base));
    } else {
      throw Error(ErrorCode::InvalidArgument,
                  "token id " + std::to_string(id) + " outside the toy range");
    }
  }
  return out;
}

std::string ToyBackend::context_signature(std::span<const TokenId> tokens,
                                          std::string_view image_ref) const {
  const auto base = static_cast<TokenId>(model_.vocab().size());
  std::string prompt;
  std::vector<std::string> generated;
  for (TokenId id : tokens) {
    if (id >= base && id < base + 256) {
      if (!generated.empty()) {
        throw Error(ErrorCode::InvalidArgument,
                    "prompt byte token after generated tokens");
      }
      prompt.push_back(static_cast<char>(id - base));
    } else if (id >= 0 && id < base) {
      generated.push_back(model_.vocab()[static_cast<std::size_t>(id)]);
    } else {
      throw Error(ErrorCode::InvalidArgument,
                  "token id " + std::to_string(id) + " outside the toy range");
    }
  }
  return TableModel::signature(image_ref, prompt, generated);
}

std::pair<LogitVector, LogitVector> ToyBackend::step(
    std::span<const TokenId> cond_tokens,
    std::span<const TokenId> uncond_tokens, std::string_view image_ref) {
  return toy_step(model_, context_signature(cond_tokens, image_ref),
                  context_signature(uncond_tokens, image_ref));
}

namespace {

std::vector<double> peaked(std::size_t n, std::size_t index, double p) {
  std::vector<double> row(n, (1.0 - p) / static_cast<double>(n - 1));
  row[index] = p;
  return row;
}

}  // namespace

BiasedFixture make_biased_fixture() {
  const std::vector<std::string> vocab = {"</s>", "A",      " dog",      " with",
                                          " a",   " fork", " frisbee", "."};
  constexpr TokenId kEos = 0, kA = 1, kDog = 2, kWith = 3, kArticle = 4,
                    kFork = 5, kFrisbee = 6, kStop = 7;
  const std::size_t n = vocab.size();

  const std::string image_ref = "coco/000000000042.jpg";
  const std::string query(kDefaultQuery);
  const std::string guidance_text =
      build_guidance_prompt(std::vector<std::string>{"dog", "frisbee"},
                            TemplateSet::Intersec, 0)
          .text;
  const std::vector<TokenId> prefix = {kA, kDog, kWith, kArticle};

  const std::string cond_prompt = fill_query(guidance_text, query);
  const std::string uncond_prompt = query;

  TableModel::Table table;
  auto add = [&](const std::string& prompt, const std::vector<TokenId>& gen,
                 std::vector<double> row) {
    std::vector<std::string> words;
    for (TokenId id : gen) words.push_back(vocab[static_cast<std::size_t>(id)]);
    table[TableModel::signature(image_ref, prompt, words)] = std::move(row);
  };

  for (const auto* prompt : {&cond_prompt, &uncond_prompt}) {
    std::vector<TokenId> gen;
    for (TokenId next : prefix) {
      add(*prompt, gen, peaked(n, static_cast<std::size_t>(next), 0.9));
      gen.push_back(next);
    }
    for (TokenId obj : {kFork, kFrisbee}) {
      auto with_obj = gen;
      with_obj.push_back(obj);
      add(*prompt, with_obj, peaked(n, kStop, 0.9));
      with_obj.push_back(kStop);
      add(*prompt, with_obj, peaked(n, kEos, 0.9));
    }
  }

  // Designated step: the uncond branch prefers "fork", the guided one
  // "frisbee". The remaining mass is spread over the other six tokens.
  std::vector<double> uncond_row(n, 0.1 / static_cast<double>(n - 2));
  uncond_row[kFork] = 0.6;
  uncond_row[kFrisbee] = 0.3;
  std::vector<double> cond_row(n, 0.15 / static_cast<double>(n - 2));
  cond_row[kFork] = 0.05;
  cond_row[kFrisbee] = 0.8;
  add(uncond_prompt, prefix, uncond_row);
  add(cond_prompt, prefix, cond_row);

  return BiasedFixture{
      .model = TableModel(vocab, kEos, std::move(table)),
      .image_ref = image_ref,
      .guidance_text = guidance_text,
      .query = query,
      .hallucination_token = kFork,
      .grounded_token = kFrisbee,
      .designated_step = prefix.size(),
      .prefix = prefix,
      .uncond_probability = uncond_row[kFork],
      .cond_probability = cond_row[kFork],
  };
}

}  // namespace groundguide
