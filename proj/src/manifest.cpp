#include "groundguide/manifest.hpp"

#include <array>
#include <chrono>
#include <ctime>
#include <memory>
#include <openssl/evp.h>

#include "groundguide/error.hpp"

namespace groundguide {

OrderedJson RunSettings::to_json() const {
  OrderedJson j;
  j["gamma"] = generation.gamma;
  if (dynamic_gamma) {
    j["dynamic_gamma"] = {{"lo", dynamic_gamma->lo},
                          {"hi", dynamic_gamma->hi},
                          {"s_min", dynamic_gamma->s_min},
                          {"s_max", dynamic_gamma->s_max}};
  } else {
    j["dynamic_gamma"] = nullptr;
  }
  OrderedJson thresholds = OrderedJson::object();
  for (const auto& [model, t] : guidance.thresholds) thresholds[model] = t;
  j["thresholds"] = std::move(thresholds);
  j["aggregation"] = to_string(guidance.mode);
  j["template_set"] = to_string(guidance.template_set);
  j["empty_guidance"] =
      guidance.empty_policy == EmptyGuidancePolicy::Degrade ? "degrade" : "error";
  j["sampler"] = describe(generation.sampler);
  j["seed"] = generation.seed;
  j["max_tokens"] = generation.max_tokens;
  j["stop_on_eos"] = generation.stop_on_eos;
  j["query"] = query;
  j["backend"] = backend ? OrderedJson(*backend) : OrderedJson(nullptr);
  j["sample"] = sample ? OrderedJson(*sample) : OrderedJson(nullptr);
  return j;
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                              &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
    throw Error(ErrorCode::IoError, "sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) {
  return sha256_hex(read_text_file(path));
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunManifest::RunManifest(std::string command, RunSettings settings)
    : command_(std::move(command)),
      settings_(std::move(settings)),
      started_at_(utc_timestamp()) {}

void RunManifest::add_input(const std::filesystem::path& path) {
  inputs_.emplace_back(path.string(), sha256_file(path));
}

void RunManifest::set_extra(const std::string& key, OrderedJson value) {
  extra_[key] = std::move(value);
}

void RunManifest::finish() { finished_at_ = utc_timestamp(); }

OrderedJson RunManifest::to_json() const {
  OrderedJson j;
  j["schema_version"] = kSchemaVersion;
  j["tool_version"] = kToolVersion;
  j["command"] = command_;
  j["config"] = settings_.to_json();
  OrderedJson inputs = OrderedJson::array();
  for (const auto& [path, digest] : inputs_) {
    inputs.push_back({{"path", path}, {"sha256", digest}});
  }
  j["inputs"] = std::move(inputs);
  j["started_at"] = started_at_;
  j["finished_at"] = finished_at_.empty() ? OrderedJson(nullptr) : OrderedJson(finished_at_);
  for (const auto& [k, v] : extra_.items()) j[k] = v;
  return j;
}

std::filesystem::path RunManifest::write_beside(
    const std::filesystem::path& output) const {
  auto path = output;
  path += ".manifest.json";
  write_text_file(path, to_json().dump(2) + "\n");
  return path;
}

}  // namespace groundguide
