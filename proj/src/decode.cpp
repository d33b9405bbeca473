#include "groundguide/decode.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "groundguide/error.hpp"
#include "groundguide/guidance.hpp"

namespace groundguide {

LogitVector::LogitVector(std::vector<double> values) : values_(std::move(values)) {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw Error(ErrorCode::InvalidArgument,
                  "non-finite logit at index " + std::to_string(i));
    }
  }
}

std::string describe(const Sampler& sampler) {
  if (std::holds_alternative<GreedySampler>(sampler)) return "greedy";
  std::ostringstream os;
  os << "temperature(" << std::get<TemperatureSampler>(sampler).temperature
     << ")";
  return os.str();
}

void GenerationConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "gamma must lie in [0,1]");
  }
  if (const auto* t = std::get_if<TemperatureSampler>(&sampler)) {
    if (!(t->temperature > 0.0) || !std::isfinite(t->temperature)) {
      throw Error(ErrorCode::InvalidArgument, "temperature must be positive");
    }
  }
}

void DynamicGammaConfig::validate() const {
  if (!(lo <= hi)) {
    throw Error(ErrorCode::InvalidArgument, "dynamic gamma needs lo <= hi");
  }
  if (!(s_min <= s_max)) {
    throw Error(ErrorCode::InvalidArgument,
                "dynamic gamma needs s_min <= s_max");
  }
}

LogitVector blend_logits(const LogitVector& cond, const LogitVector& uncond,
                         double gamma) {
  if (cond.size() != uncond.size()) {
    throw Error(ErrorCode::LengthMismatch,
                "cannot blend logit vectors of length " +
                    std::to_string(cond.size()) + " and " +
                    std::to_string(uncond.size()));
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "gamma must lie in [0,1]");
  }
  // The endpoints are exact copies so gamma in {0, 1} reproduces a single
  // branch bit for bit.
  if (gamma == 0.0) return uncond;
  if (gamma == 1.0) return cond;
  std::vector<double> out(cond.size());
  const double rest = 1.0 - gamma;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = gamma * cond[i] + rest * uncond[i];
  }
  return LogitVector(std::move(out));
}

double dynamic_gamma(double s, const DynamicGammaConfig& cfg) {
  cfg.validate();
  if (cfg.s_max == cfg.s_min) return 0.5 * (cfg.lo + cfg.hi);
  const double clamped = std::clamp(s, cfg.s_min, cfg.s_max);
  const double g =
      cfg.lo + (cfg.hi - cfg.lo) * (clamped - cfg.s_min) / (cfg.s_max - cfg.s_min);
  return std::clamp(g, cfg.lo, cfg.hi);
}

TokenId select_token(const LogitVector& logits, const Sampler& sampler,
                     Rng& rng) {
  const auto v = logits.values();
  if (v.empty()) {
    throw Error(ErrorCode::InvalidArgument, "cannot select from empty logits");
  }
  if (std::holds_alternative<GreedySampler>(sampler)) {
    // max_element returns the first maximum, i.e. the lowest id.
    return static_cast<TokenId>(std::max_element(v.begin(), v.end()) - v.begin());
  }
  const double t = std::get<TemperatureSampler>(sampler).temperature;
  if (!(t > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "temperature must be positive");
  }
  const double peak = *std::max_element(v.begin(), v.end());
  std::vector<double> weights(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    weights[i] = std::exp((v[i] - peak) / t);
    total += weights[i];
  }
  const double target = uniform_unit(rng) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (target < acc) return static_cast<TokenId>(i);
  }
  // Rounding left the target at the very top; take the last nonzero weight.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return static_cast<TokenId>(i);
  }
  return 0;
}

double effective_gamma(const GenerationContext& ctx,
                       const GenerationConfig& cfg,
                       const std::optional<DynamicGammaConfig>& dyn,
                       std::optional<double> s) {
  if (!ctx.guidance_text || ctx.guidance_text->empty()) return 0.0;
  if (dyn) {
    if (!s) {
      throw Error(ErrorCode::InvalidArgument,
                  "dynamic gamma needs a mean confidence score");
    }
    return dynamic_gamma(*s, *dyn);
  }
  return cfg.gamma;
}

std::string conditional_prompt(const GenerationContext& ctx) {
  if (!ctx.guidance_text || ctx.guidance_text->empty()) return ctx.query_text;
  return fill_query(*ctx.guidance_text, ctx.query_text);
}

std::string unconditional_prompt(const GenerationContext& ctx) {
  return ctx.query_text;
}

namespace {

[[noreturn]] void rethrow_at_step(const Error& e, std::size_t step) {
  if (e.code() == ErrorCode::LengthMismatch) throw e;
  throw Error(ErrorCode::BackendFailure,
              "backend failure at step " + std::to_string(step) + ": " +
                  e.what(),
              e.code(), step);
}

}  // namespace

GenerationResult guided_generate(ModelBackend& backend,
                                 const GenerationContext& ctx,
                                 const GenerationConfig& cfg,
                                 const std::optional<DynamicGammaConfig>& dyn,
                                 std::optional<double> s) {
  cfg.validate();
  GenerationResult result;
  result.gamma = effective_gamma(ctx, cfg, dyn, s);

  HandshakeInfo info;
  std::vector<TokenId> cond;
  std::vector<TokenId> uncond;
  try {
    info = backend.handshake();
    cond = backend.encode(conditional_prompt(ctx));
    uncond = backend.encode(unconditional_prompt(ctx));
  } catch (const Error& e) {
    rethrow_at_step(e, 0);
  }
  cond.insert(cond.end(), ctx.generated.begin(), ctx.generated.end());
  uncond.insert(uncond.end(), ctx.generated.begin(), ctx.generated.end());

  Rng rng(cfg.seed);
  for (std::size_t t = 0; t < cfg.max_tokens; ++t) {
    std::pair<LogitVector, LogitVector> branches;
    try {
      branches = backend.step(cond, uncond, ctx.image_ref);
    } catch (const Error& e) {
      rethrow_at_step(e, t);
    }
    auto& [l_cond, l_uncond] = branches;
    if (l_cond.size() != info.vocab_size || l_uncond.size() != info.vocab_size) {
      throw Error(ErrorCode::LengthMismatch,
                  "step " + std::to_string(t) + ": backend returned logits of "
                  "length " + std::to_string(l_cond.size()) + "/" +
                  std::to_string(l_uncond.size()) + ", expected " +
                  std::to_string(info.vocab_size));
    }
    const auto blended = blend_logits(l_cond, l_uncond, result.gamma);
    const TokenId token = select_token(blended, cfg.sampler, rng);
    if (cfg.stop_on_eos && token == info.eos_token) break;
    result.tokens.push_back(token);
    cond.push_back(token);
    uncond.push_back(token);
  }

  try {
    result.text = backend.decode(result.tokens);
  } catch (const Error& e) {
    rethrow_at_step(e, result.tokens.size());
  }
  return result;
}

}  // namespace groundguide
