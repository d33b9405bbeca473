#include "groundguide/bridge.hpp"

#include <charconv>
#include <cmath>
#include <thread>

#include "groundguide/error.hpp"

namespace groundguide {

namespace protocol {

namespace {

OrderedJson header(std::string_view type, std::int64_t id) {
  OrderedJson j;
  j["type"] = type;
  j["request_id"] = id;
  return j;
}

std::vector<TokenId> to_vector(std::span<const TokenId> tokens) {
  return {tokens.begin(), tokens.end()};
}

std::vector<double> to_vector(const LogitVector& v) {
  return {v.values().begin(), v.values().end()};
}

}  // namespace

std::string handshake(std::int64_t id) { return header(kHandshake, id).dump(); }

std::string handshake_ack(std::int64_t id, const HandshakeInfo& info) {
  auto j = header(kHandshakeAck, id);
  j["vocab_size"] = info.vocab_size;
  j["eos_token"] = info.eos_token;
  j["model_name"] = info.model_name;
  return j.dump();
}

std::string encode(std::int64_t id, std::string_view text) {
  auto j = header(kEncode, id);
  j["text"] = text;
  return j.dump();
}

std::string encode_ack(std::int64_t id, std::span<const TokenId> tokens) {
  auto j = header(kEncodeAck, id);
  j["tokens"] = to_vector(tokens);
  return j.dump();
}

std::string decode(std::int64_t id, std::span<const TokenId> tokens) {
  auto j = header(kDecode, id);
  j["tokens"] = to_vector(tokens);
  return j.dump();
}

std::string decode_ack(std::int64_t id, std::string_view text) {
  auto j = header(kDecodeAck, id);
  j["text"] = text;
  return j.dump();
}

std::string step(std::int64_t id, std::span<const TokenId> cond_tokens,
                 std::span<const TokenId> uncond_tokens,
                 std::string_view image_ref) {
  auto j = header(kStep, id);
  j["cond_tokens"] = to_vector(cond_tokens);
  j["uncond_tokens"] = to_vector(uncond_tokens);
  j["image_ref"] = image_ref;
  return j.dump();
}

std::string step_ack(std::int64_t id, const LogitVector& cond,
                     const LogitVector& uncond) {
  auto j = header(kStepAck, id);
  j["cond_logits"] = to_vector(cond);
  j["uncond_logits"] = to_vector(uncond);
  return j.dump();
}

std::string error(std::int64_t id, std::string_view message) {
  auto j = header(kError, id);
  j["message"] = message;
  return j.dump();
}

}  // namespace protocol

namespace {

[[noreturn]] void violation(const std::string& what) {
  throw Error(ErrorCode::ProtocolViolation, what);
}

std::vector<TokenId> token_array(const Json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_array()) {
    violation(std::string("missing token array '") + key + "'");
  }
  std::vector<TokenId> out;
  out.reserve(it->size());
  for (const auto& v : *it) {
    if (!v.is_number_integer()) violation(std::string("non-integer in '") + key + "'");
    out.push_back(v.get<TokenId>());
  }
  return out;
}

LogitVector logit_array(const Json& j, const char* key, std::size_t vocab_size) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_array()) {
    violation(std::string("missing logit array '") + key + "'");
  }
  if (it->size() != vocab_size) {
    throw Error(ErrorCode::VocabSizeMismatch,
                std::string("'") + key + "' has " + std::to_string(it->size()) +
                    " entries, expected " + std::to_string(vocab_size));
  }
  std::vector<double> values;
  values.reserve(vocab_size);
  for (const auto& v : *it) {
    if (!v.is_number()) violation(std::string("non-number in '") + key + "'");
    const double x = v.get<double>();
    if (!std::isfinite(x)) violation(std::string("non-finite logit in '") + key + "'");
    values.push_back(x);
  }
  return LogitVector(std::move(values));
}

}  // namespace

BridgeClient::BridgeClient(std::unique_ptr<LineChannel> channel,
                           BridgeOptions options)
    : channel_(std::move(channel)), options_(options) {}

std::unique_ptr<BridgeClient> BridgeClient::connect(std::string_view endpoint,
                                                    BridgeOptions options) {
  if (endpoint.starts_with("exec:")) {
    auto command = std::string(endpoint.substr(5));
    if (command.empty()) {
      throw Error(ErrorCode::InvalidArgument, "empty exec command");
    }
    return std::make_unique<BridgeClient>(
        std::make_unique<ProcessChannel>(command), options);
  }
  if (endpoint.starts_with("tcp:")) {
    const auto rest = endpoint.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string_view::npos) {
      throw Error(ErrorCode::InvalidArgument,
                  "tcp endpoint must be tcp:<host>:<port>");
    }
    unsigned port = 0;
    const auto port_text = rest.substr(colon + 1);
    const auto [ptr, ec] =
        std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
    if (ec != std::errc() || ptr != port_text.data() + port_text.size() ||
        port == 0 || port > 65535) {
      throw Error(ErrorCode::InvalidArgument,
                  "bad port in '" + std::string(endpoint) + "'");
    }
    return std::make_unique<BridgeClient>(
        connect_tcp(std::string(rest.substr(0, colon)),
                    static_cast<std::uint16_t>(port)),
        options);
  }
  throw Error(ErrorCode::InvalidArgument,
              "unknown endpoint '" + std::string(endpoint) + "'");
}

Json BridgeClient::round_trip(const std::string& line, std::int64_t id,
                              std::string_view expected_type) {
  channel_->send_line(line);
  const auto reply = channel_->recv_line(options_.timeout);
  Json j;
  try {
    j = Json::parse(reply);
  } catch (const Json::exception&) {
    violation("malformed response line: " + reply.substr(0, 200));
  }
  if (!j.is_object()) violation("response is not a JSON object");
  const auto type = j.find("type");
  const auto rid = j.find("request_id");
  if (type == j.end() || !type->is_string()) violation("response without a type");
  if (rid == j.end() || !rid->is_number_integer()) {
    violation("response without an integer request_id");
  }
  if (rid->get<std::int64_t>() != id) {
    violation("response request_id " + std::to_string(rid->get<std::int64_t>()) +
              " does not match request " + std::to_string(id));
  }
  if (*type == protocol::kError) {
    const auto msg = j.value("message", std::string("(no message)"));
    throw Error(ErrorCode::RemoteError, "remote error: " + msg);
  }
  if (*type != expected_type) {
    violation("expected " + std::string(expected_type) + ", got " +
              type->get<std::string>());
  }
  return j;
}

void BridgeClient::require_ready(std::string_view op) const {
  if (!info_) {
    throw Error(ErrorCode::ProtocolViolation,
                std::string(op) + " before handshake");
  }
}

HandshakeInfo BridgeClient::handshake() {
  if (info_) return *info_;
  const auto id = next_id_++;
  const auto j = round_trip(protocol::handshake(id), id, protocol::kHandshakeAck);
  const auto vs = j.find("vocab_size");
  const auto eos = j.find("eos_token");
  const auto name = j.find("model_name");
  if (vs == j.end() || !vs->is_number_unsigned() || vs->get<std::uint64_t>() == 0) {
    violation("handshake_ack needs a positive vocab_size");
  }
  if (eos == j.end() || !eos->is_number_integer()) {
    violation("handshake_ack needs an integer eos_token");
  }
  if (name == j.end() || !name->is_string()) {
    violation("handshake_ack needs a model_name");
  }
  HandshakeInfo info{vs->get<std::size_t>(), eos->get<TokenId>(),
                     name->get<std::string>()};
  if (info.eos_token < 0 ||
      static_cast<std::size_t>(info.eos_token) >= info.vocab_size) {
    violation("eos_token outside the vocabulary");
  }
  info_ = info;
  return info;
}

HandshakeInfo connect_handshake(BridgeClient& client) {
  return client.handshake();
}

std::vector<TokenId> BridgeClient::encode(std::string_view text) {
  require_ready("encode");
  const auto id = next_id_++;
  const auto j = round_trip(protocol::encode(id, text), id, protocol::kEncodeAck);
  return token_array(j, "tokens");
}

std::string BridgeClient::decode(std::span<const TokenId> tokens) {
  require_ready("decode");
  const auto id = next_id_++;
  const auto j = round_trip(protocol::decode(id, tokens), id, protocol::kDecodeAck);
  const auto text = j.find("text");
  if (text == j.end() || !text->is_string()) violation("decode_ack needs text");
  return text->get<std::string>();
}

std::pair<LogitVector, LogitVector> BridgeClient::step(
    std::span<const TokenId> cond_tokens,
    std::span<const TokenId> uncond_tokens, std::string_view image_ref) {
  require_ready("step");
  const auto id = next_id_++;
  const auto j = round_trip(protocol::step(id, cond_tokens, uncond_tokens, image_ref),
                            id, protocol::kStepAck);
  return {logit_array(j, "cond_logits", info_->vocab_size),
          logit_array(j, "uncond_logits", info_->vocab_size)};
}

StubServer::StubServer(ModelBackend& backend, StubServerOptions options)
    : backend_(backend), options_(options) {}

std::string StubServer::handle_line(std::string_view line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::exception&) {
    return protocol::error(-1, "malformed JSON");
  }
  if (!j.is_object()) return protocol::error(-1, "request is not an object");
  const auto rid = j.find("request_id");
  if (rid == j.end() || !rid->is_number_integer()) {
    return protocol::error(-1, "missing integer request_id");
  }
  const auto id = rid->get<std::int64_t>();
  const auto type_it = j.find("type");
  if (type_it == j.end() || !type_it->is_string()) {
    return protocol::error(id, "missing type");
  }
  const auto type = type_it->get<std::string>();
  if (id <= last_id_) {
    return protocol::error(id, "request_id must increase (last was " +
                                   std::to_string(last_id_) + ")");
  }
  last_id_ = id;

  try {
    if (type == protocol::kHandshake) {
      handshaken_ = true;
      return protocol::handshake_ack(id, backend_.handshake());
    }
    if (!handshaken_) return protocol::error(id, type + " before handshake");
    if (type == protocol::kEncode) {
      const auto text = j.at("text").get<std::string>();
      return protocol::encode_ack(id, backend_.encode(text));
    }
    if (type == protocol::kDecode) {
      const auto tokens = token_array(j, "tokens");
      return protocol::decode_ack(id, backend_.decode(tokens));
    }
    if (type == protocol::kStep) {
      const auto cond = token_array(j, "cond_tokens");
      const auto uncond = token_array(j, "uncond_tokens");
      const auto image = j.at("image_ref").get<std::string>();
      if (options_.step_delay.count() > 0) {
        std::this_thread::sleep_for(options_.step_delay);
      }
      const auto [lc, lu] = backend_.step(cond, uncond, image);
      return protocol::step_ack(id, lc, lu);
    }
    return protocol::error(id, "unknown request type '" + type + "'");
  } catch (const std::exception& e) {
    return protocol::error(id, e.what());
  }
}

void StubServer::serve(LineChannel& channel) {
  std::string line;
  while (channel.try_recv_line(line, std::chrono::milliseconds(-1))) {
    channel.send_line(handle_line(line));
  }
}

EchoBackend::EchoBackend(std::size_t vocab_size, TokenId eos, std::string name)
    : vocab_size_(vocab_size), eos_(eos), name_(std::move(name)) {
  if (vocab_size_ == 0) {
    throw Error(ErrorCode::InvalidArgument, "vocab_size must be positive");
  }
  if (eos_ < 0 || static_cast<std::size_t>(eos_) >= vocab_size_) {
    throw Error(ErrorCode::InvalidArgument, "eos outside the vocabulary");
  }
}

void EchoBackend::set_fixed_logits(LogitVector cond, LogitVector uncond) {
  if (cond.size() != vocab_size_ || uncond.size() != vocab_size_) {
    throw Error(ErrorCode::LengthMismatch, "fixed logits must match vocab_size");
  }
  fixed_.emplace(std::move(cond), std::move(uncond));
}

HandshakeInfo EchoBackend::handshake() { return {vocab_size_, eos_, name_}; }

std::vector<TokenId> EchoBackend::encode(std::string_view text) {
  std::vector<TokenId> out;
  out.reserve(text.size());
  for (unsigned char c : text) out.push_back(c);
  return out;
}

std::string EchoBackend::decode(std::span<const TokenId> tokens) {
  std::string out;
  out.reserve(tokens.size());
  for (TokenId t : tokens) {
    if (t < 0 || t > 255) {
      throw Error(ErrorCode::InvalidArgument,
                  "token " + std::to_string(t) + " is not a byte");
    }
    out.push_back(static_cast<char>(t));
  }
  return out;
}

std::pair<LogitVector, LogitVector> EchoBackend::step(
    std::span<const TokenId> cond_tokens,
    std::span<const TokenId> uncond_tokens, std::string_view) {
  if (fixed_) return *fixed_;
  std::vector<double> cond(vocab_size_, 0.0);
  std::vector<double> uncond(vocab_size_, 0.0);
  cond[cond_tokens.size() % vocab_size_] = 1.0;
  uncond[(uncond_tokens.size() + 1) % vocab_size_] = 1.0;
  return {LogitVector(std::move(cond)), LogitVector(std::move(uncond))};
}

}  // namespace groundguide
