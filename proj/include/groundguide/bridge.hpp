#pragma once

// Line-delimited JSON protocol for driving an out-of-process model.
//
//   > {"type":"handshake","request_id":1}
//   < {"type":"handshake_ack","request_id":1,"vocab_size":V,"eos_token":E,"model_name":"..."}
//   > {"type":"encode","request_id":2,"text":"..."}
//   < {"type":"encode_ack","request_id":2,"tokens":[...]}
//   > {"type":"decode","request_id":3,"tokens":[...]}
//   < {"type":"decode_ack","request_id":3,"text":"..."}
//   > {"type":"step","request_id":4,"cond_tokens":[...],"uncond_tokens":[...],"image_ref":"..."}
//   < {"type":"step_ack","request_id":4,"cond_logits":[...],"uncond_logits":[...]}
//   < {"type":"error","request_id":N,"message":"..."}
//
// Keys appear in exactly this order, with no whitespace, one object per
// '\n'-terminated line. Request ids strictly increase per connection and the
// client keeps at most one request in flight.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "groundguide/channel.hpp"
#include "groundguide/decode.hpp"
#include "groundguide/jsonl.hpp"

namespace groundguide {

namespace protocol {

inline constexpr std::string_view kHandshake = "handshake";
inline constexpr std::string_view kHandshakeAck = "handshake_ack";
inline constexpr std::string_view kEncode = "encode";
inline constexpr std::string_view kEncodeAck = "encode_ack";
inline constexpr std::string_view kDecode = "decode";
inline constexpr std::string_view kDecodeAck = "decode_ack";
inline constexpr std::string_view kStep = "step";
inline constexpr std::string_view kStepAck = "step_ack";
inline constexpr std::string_view kError = "error";

std::string handshake(std::int64_t id);
std::string handshake_ack(std::int64_t id, const HandshakeInfo& info);
std::string encode(std::int64_t id, std::string_view text);
std::string encode_ack(std::int64_t id, std::span<const TokenId> tokens);
std::string decode(std::int64_t id, std::span<const TokenId> tokens);
std::string decode_ack(std::int64_t id, std::string_view text);
std::string step(std::int64_t id, std::span<const TokenId> cond_tokens,
                 std::span<const TokenId> uncond_tokens,
                 std::string_view image_ref);
std::string step_ack(std::int64_t id, const LogitVector& cond,
                     const LogitVector& uncond);
std::string error(std::int64_t id, std::string_view message);

}  // namespace protocol

inline constexpr std::chrono::milliseconds kDefaultBridgeTimeout{120000};

struct BridgeOptions {
  std::chrono::milliseconds timeout = kDefaultBridgeTimeout;
};

class BridgeClient final : public ModelBackend {
 public:
  explicit BridgeClient(std::unique_ptr<LineChannel> channel,
                        BridgeOptions options = {});

  // Endpoint forms: "exec:<shell command>" or "tcp:<host>:<port>".
  static std::unique_ptr<BridgeClient> connect(std::string_view endpoint,
                                               BridgeOptions options = {});

  // Performs the handshake on first use; later calls return the cached info.
  HandshakeInfo handshake() override;
  std::vector<TokenId> encode(std::string_view text) override;
  std::string decode(std::span<const TokenId> tokens) override;
  std::pair<LogitVector, LogitVector> step(
      std::span<const TokenId> cond_tokens,
      std::span<const TokenId> uncond_tokens,
      std::string_view image_ref) override;

  bool ready() const { return info_.has_value(); }

 private:
  Json round_trip(const std::string& line, std::int64_t id,
                  std::string_view expected_type);
  void require_ready(std::string_view op) const;

  std::unique_ptr<LineChannel> channel_;
  BridgeOptions options_;
  std::int64_t next_id_ = 1;
  std::optional<HandshakeInfo> info_;
};

// connect() followed by the handshake.
HandshakeInfo connect_handshake(BridgeClient& client);

struct StubServerOptions {
  std::chrono::milliseconds step_delay{0};
};

// Reference server: answers protocol requests from any in-process backend.
class StubServer {
 public:
  explicit StubServer(ModelBackend& backend, StubServerOptions options = {});

  // One response line per request line.
  std::string handle_line(std::string_view line);

  // Serves until the peer closes the stream.
  void serve(LineChannel& channel);

 private:
  ModelBackend& backend_;
  StubServerOptions options_;
  bool handshaken_ = false;
  std::int64_t last_id_ = 0;
};

// Byte-identity tokenizer with deterministic logits, for protocol tests
// and latency measurements. Text tokens are byte values regardless of
// vocab_size; the logit vocabulary is independent of them.
class EchoBackend final : public ModelBackend {
 public:
  explicit EchoBackend(std::size_t vocab_size, TokenId eos = 0,
                       std::string name = "echo-stub");

  // Fixed vectors returned from every step instead of the default pattern.
  void set_fixed_logits(LogitVector cond, LogitVector uncond);

  HandshakeInfo handshake() override;
  std::vector<TokenId> encode(std::string_view text) override;
  std::string decode(std::span<const TokenId> tokens) override;
  std::pair<LogitVector, LogitVector> step(
      std::span<const TokenId> cond_tokens,
      std::span<const TokenId> uncond_tokens,
      std::string_view image_ref) override;

 private:
  std::size_t vocab_size_;
  TokenId eos_;
  std::string name_;
  std::optional<std::pair<LogitVector, LogitVector>> fixed_;
};

}  // namespace groundguide
