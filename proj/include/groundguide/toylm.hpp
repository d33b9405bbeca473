#pragma once

// Table-driven language model. Each context signature maps to a stored
// next-token distribution; unknown contexts fall back to uniform. Logits are
// natural logs of the stored probabilities.

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "groundguide/decode.hpp"
#include "groundguide/jsonl.hpp"

namespace groundguide {

inline constexpr char kSignatureSeparator = '\x1f';

class TableModel {
 public:
  using Table = std::map<std::string, std::vector<double>, std::less<>>;

  // Throws InvalidArgument unless every row has vocab.size() strictly
  // positive entries summing to 1 within 1e-9 and eos is a vocab id.
  TableModel(std::vector<std::string> vocab, TokenId eos, Table table);

  // `{ "vocab": [...], "eos": id, "table": { signature: [p...] } }`
  static TableModel from_json(const Json& j);
  static TableModel load(const std::filesystem::path& path);
  Json to_json() const;

  // image_ref, prompt text, then one field per generated token string, all
  // joined by the unit separator.
  static std::string signature(std::string_view image_ref,
                               std::string_view prompt,
                               std::span<const std::string> generated);

  const std::vector<std::string>& vocab() const { return vocab_; }
  TokenId eos() const { return eos_; }
  const Table& table() const { return table_; }

  // Stored distribution, or uniform for an unknown signature.
  std::vector<double> distribution(std::string_view signature) const;
  LogitVector logits(std::string_view signature) const;

 private:
  std::vector<std::string> vocab_;
  TokenId eos_;
  Table table_;
};

std::pair<LogitVector, LogitVector> toy_step(const TableModel& model,
                                             std::string_view cond_signature,
                                             std::string_view uncond_signature);

// In-process backend over a TableModel. Prompt text is tokenized bytewise
// into ids vocab_size + byte; ids below vocab_size are model tokens.
class ToyBackend final : public ModelBackend {
 public:
  explicit ToyBackend(TableModel model, std::string name = "toy-table");

  HandshakeInfo handshake() override;
  std::vector<TokenId> encode(std::string_view text) override;
  std::string decode(std::span<const TokenId> tokens) override;
  std::pair<LogitVector, LogitVector> step(
      std::span<const TokenId> cond_tokens,
      std::span<const TokenId> uncond_tokens,
      std::string_view image_ref) override;

  // Signature of a full token context (prompt bytes then model tokens).
  std::string context_signature(std::span<const TokenId> tokens,
                                std::string_view image_ref) const;

  const TableModel& model() const { return model_; }

 private:
  TableModel model_;
  std::string name_;
};

// A fixture where, at one designated step, the unconditional branch strongly
// prefers a hallucinated token that the guided branch suppresses.
struct BiasedFixture {
  TableModel model;
  std::string image_ref;
  std::string guidance_text;
  std::string query;
  TokenId hallucination_token = 0;
  TokenId grounded_token = 0;
  std::size_t designated_step = 0;
  // Tokens generated before the designated step (identical in both branches).
  std::vector<TokenId> prefix;
  double uncond_probability = 0.0;
  double cond_probability = 0.0;
};

BiasedFixture make_biased_fixture();

}  // namespace groundguide
