#pragma once

// Two-branch guided decoding. Each step evaluates the model on the
// conditional context [image, guidance, query, generated] and the
// unconditional context [image, query, generated], blends the two logit
// vectors as gamma * cond + (1 - gamma) * uncond, and picks the next token
// from the blend.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "groundguide/random.hpp"

namespace groundguide {

using TokenId = std::int64_t;

class LogitVector {
 public:
  LogitVector() = default;
  // Throws InvalidArgument on a non-finite entry.
  explicit LogitVector(std::vector<double> values);

  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

  friend bool operator==(const LogitVector&, const LogitVector&) = default;

 private:
  std::vector<double> values_;
};

struct GreedySampler {};
struct TemperatureSampler {
  double temperature = 1.0;
};
using Sampler = std::variant<GreedySampler, TemperatureSampler>;

std::string describe(const Sampler& sampler);

inline constexpr double kDefaultGamma = 0.7;
inline constexpr std::size_t kDefaultMaxTokens = 64;
inline constexpr std::uint64_t kDefaultSeed = 242;
inline constexpr std::string_view kDefaultQuery =
    "Generate a short caption of the image.";

struct GenerationConfig {
  double gamma = kDefaultGamma;
  std::size_t max_tokens = kDefaultMaxTokens;
  Sampler sampler = GreedySampler{};
  std::uint64_t seed = kDefaultSeed;
  bool stop_on_eos = true;

  void validate() const;
};

struct DynamicGammaConfig {
  double lo = 0.4;
  double hi = 0.8;
  double s_min = 0.0;
  double s_max = 1.0;

  void validate() const;
};

struct HandshakeInfo {
  std::size_t vocab_size = 0;
  TokenId eos_token = 0;
  std::string model_name;
};

// A language model able to score both branch contexts for one step.
// Implementations own tokenization; the image reference is opaque.
class ModelBackend {
 public:
  virtual ~ModelBackend() = default;

  virtual HandshakeInfo handshake() = 0;
  virtual std::vector<TokenId> encode(std::string_view text) = 0;
  virtual std::string decode(std::span<const TokenId> tokens) = 0;
  virtual std::pair<LogitVector, LogitVector> step(
      std::span<const TokenId> cond_tokens,
      std::span<const TokenId> uncond_tokens, std::string_view image_ref) = 0;
};

struct GenerationContext {
  std::string image_ref;
  std::optional<std::string> guidance_text;
  std::string query_text = std::string(kDefaultQuery);
  std::vector<TokenId> generated;
};

struct GenerationResult {
  std::vector<TokenId> tokens;
  std::string text;
  double gamma = 0.0;
};

// Throws LengthMismatch when the vectors differ in length.
LogitVector blend_logits(const LogitVector& cond, const LogitVector& uncond,
                         double gamma);

// Linear map of the confidence s from [s_min, s_max] onto [lo, hi], with s
// clamped to the interval. A degenerate interval yields the midpoint.
double dynamic_gamma(double s, const DynamicGammaConfig& cfg);

// Greedy takes the argmax (lowest id on ties); temperature draws from
// softmax(logits / t).
TokenId select_token(const LogitVector& logits, const Sampler& sampler,
                     Rng& rng);

// The guidance strength actually applied: 0 without guidance text, the
// dynamic mapping when configured, otherwise cfg.gamma.
double effective_gamma(const GenerationContext& ctx,
                       const GenerationConfig& cfg,
                       const std::optional<DynamicGammaConfig>& dyn,
                       std::optional<double> s);

std::string conditional_prompt(const GenerationContext& ctx);
std::string unconditional_prompt(const GenerationContext& ctx);

// Backend errors are rethrown as BackendFailure carrying the step index and
// the original error code.
GenerationResult guided_generate(
    ModelBackend& backend, const GenerationContext& ctx,
    const GenerationConfig& cfg,
    const std::optional<DynamicGammaConfig>& dyn = std::nullopt,
    std::optional<double> s = std::nullopt);

}  // namespace groundguide
