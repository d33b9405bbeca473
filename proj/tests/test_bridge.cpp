#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <deque>
#include <fstream>
#include <functional>
#include <thread>

#include "groundguide/bridge.hpp"
#include "groundguide/error.hpp"
#include "groundguide/toylm.hpp"

using namespace groundguide;
using namespace std::chrono_literals;

namespace {

// In-memory peer: each sent line is answered by `reply`.
class ScriptChannel final : public LineChannel {
 public:
  using Reply = std::function<std::string(const Json&)>;
  explicit ScriptChannel(Reply reply) : reply_(std::move(reply)) {}
  void send_line(std::string_view line) override {
    sent.emplace_back(line);
    pending_.push_back(reply_(Json::parse(line)));
  }
  std::string recv_line(std::chrono::milliseconds) override {
    REQUIRE(!pending_.empty());
    auto s = pending_.front();
    pending_.pop_front();
    return s;
  }
  bool try_recv_line(std::string& line, std::chrono::milliseconds t) override {
    if (pending_.empty()) return false;
    line = recv_line(t);
    return true;
  }
  std::vector<std::string> sent;

 private:
  Reply reply_;
  std::deque<std::string> pending_;
};

std::string ack(const Json& req, std::size_t vocab = 4) {
  HandshakeInfo info{vocab, 0, "script"};
  return protocol::handshake_ack(req["request_id"].get<std::int64_t>(), info);
}

// Handshake answered normally; every later request answered by `later`.
std::unique_ptr<BridgeClient> scripted(std::function<std::string(const Json&)> later) {
  auto ch = std::make_unique<ScriptChannel>([later](const Json& req) {
    if (req["type"] == "handshake") return ack(req);
    return later(req);
  });
  return std::make_unique<BridgeClient>(std::move(ch));
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

const std::string kTranscript = std::string(GROUNDGUIDE_TEST_DATA) + "/bridge_transcript.txt";

// The session the golden transcript was captured from.
void run_transcript_session(BridgeClient& client) {
  const auto info = client.handshake();
  CHECK(info.vocab_size == 4);
  CHECK(client.encode("ab") == std::vector<TokenId>{97, 98});
  CHECK(client.encode("").empty());
  CHECK(client.decode(std::vector<TokenId>{97, 98}) == "ab");
  const auto [c, u] = client.step(std::vector<TokenId>{97, 98}, std::vector<TokenId>{98}, "img-1");
  CHECK(c[2] == 1.0);
  CHECK(u[2] == 1.0);
  CHECK(code_of([&] { client.decode(std::vector<TokenId>{300}); }) == ErrorCode::RemoteError);
}

}  // namespace

TEST_CASE("message builders emit keys in protocol order") {
  CHECK(protocol::handshake(1) == R"({"type":"handshake","request_id":1})");
  CHECK(protocol::handshake_ack(1, {32000, 2, "m"}) ==
        R"({"type":"handshake_ack","request_id":1,"vocab_size":32000,"eos_token":2,"model_name":"m"})");
  CHECK(protocol::encode(2, "a\"b") == R"({"type":"encode","request_id":2,"text":"a\"b"})");
  CHECK(protocol::step(3, std::vector<TokenId>{1}, std::vector<TokenId>{}, "x") ==
        R"({"type":"step","request_id":3,"cond_tokens":[1],"uncond_tokens":[],"image_ref":"x"})");
  CHECK(protocol::error(-1, "bad") == R"({"type":"error","request_id":-1,"message":"bad"})");
}

TEST_CASE("handshake reports the server vocabulary") {
  EchoBackend backend(32000, 2);
  auto [client_end, server_end] = make_channel_pair();
  std::thread server([&, ch = std::move(server_end)] { StubServer(backend).serve(*ch); });
  {
    BridgeClient client(std::move(client_end));
    const auto info = connect_handshake(client);
    CHECK(info.vocab_size == 32000);
    CHECK(info.eos_token == 2);
    CHECK(info.model_name == "echo-stub");
    CHECK(client.ready());
  }
  server.join();
}

TEST_CASE("encode and decode through the stub") {
  EchoBackend backend(8);
  auto [client_end, server_end] = make_channel_pair();
  std::thread server([&, ch = std::move(server_end)] { StubServer(backend).serve(*ch); });
  {
    BridgeClient client(std::move(client_end));
    CHECK(code_of([&] { client.encode("x"); }) == ErrorCode::ProtocolViolation);
    client.handshake();
    CHECK(client.encode("ab") == std::vector<TokenId>{97, 98});
    CHECK(client.decode(client.encode("hello, world")) == "hello, world");
  }
  server.join();
}

TEST_CASE("stub passes fixed logits through unchanged") {
  EchoBackend backend(3);
  backend.set_fixed_logits(LogitVector({0.125, -1e300, 3.0}), LogitVector({1.0 / 3.0, 0, -2}));
  auto [client_end, server_end] = make_channel_pair();
  std::thread server([&, ch = std::move(server_end)] { StubServer(backend).serve(*ch); });
  {
    BridgeClient client(std::move(client_end));
    client.handshake();
    const auto [c, u] = client.step(std::vector<TokenId>{1}, std::vector<TokenId>{2}, "img");
    CHECK(c == LogitVector({0.125, -1e300, 3.0}));
    CHECK(u == LogitVector({1.0 / 3.0, 0, -2}));
  }
  server.join();
}

TEST_CASE("malformed response line is a protocol violation") {
  auto ch = std::make_unique<ScriptChannel>([](const Json&) { return std::string("{not json"); });
  BridgeClient client(std::move(ch));
  CHECK(code_of([&] { client.handshake(); }) == ErrorCode::ProtocolViolation);
}

TEST_CASE("wrong logit length is a vocabulary mismatch") {
  auto client = scripted([](const Json& req) {
    return protocol::step_ack(req["request_id"], LogitVector({0, 0, 0}), LogitVector({0, 0, 0}));
  });
  client->handshake();
  CHECK(code_of([&] { client->step({}, {}, "i"); }) == ErrorCode::VocabSizeMismatch);
}

TEST_CASE("non-finite logits are rejected") {
  auto client = scripted([](const Json& req) {
    return R"({"type":"step_ack","request_id":)" + req["request_id"].dump() +
           R"(,"cond_logits":[0,0,0,1e999],"uncond_logits":[0,0,0,0]})";
  });
  client->handshake();
  CHECK(code_of([&] { client->step({}, {}, "i"); }) == ErrorCode::ProtocolViolation);
}

TEST_CASE("out-of-order response id is a protocol violation") {
  auto client = scripted([](const Json& req) {
    return protocol::encode_ack(req["request_id"].get<std::int64_t>() + 1, std::vector<TokenId>{});
  });
  client->handshake();
  CHECK(code_of([&] { client->encode("x"); }) == ErrorCode::ProtocolViolation);
}

TEST_CASE("unexpected response type is a protocol violation") {
  auto client = scripted([](const Json& req) { return protocol::decode_ack(req["request_id"], "x"); });
  client->handshake();
  CHECK(code_of([&] { client->encode("x"); }) == ErrorCode::ProtocolViolation);
}

TEST_CASE("error replies surface as remote errors") {
  auto client = scripted([](const Json& req) { return protocol::error(req["request_id"], "boom"); });
  client->handshake();
  try {
    client->encode("x");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RemoteError);
    CHECK(std::string(e.what()).find("boom") != std::string::npos);
  }
}

TEST_CASE("handshake validation") {
  auto bad_eos = std::make_unique<ScriptChannel>([](const Json& req) {
    return protocol::handshake_ack(req["request_id"], {4, 9, "m"});
  });
  BridgeClient a(std::move(bad_eos));
  CHECK(code_of([&] { a.handshake(); }) == ErrorCode::ProtocolViolation);
  auto no_vocab = std::make_unique<ScriptChannel>([](const Json& req) {
    return R"({"type":"handshake_ack","request_id":)" + req["request_id"].dump() +
           R"(,"eos_token":0,"model_name":"m"})";
  });
  BridgeClient b(std::move(no_vocab));
  CHECK(code_of([&] { b.handshake(); }) == ErrorCode::ProtocolViolation);
}

TEST_CASE("a silent server times out") {
  auto [client_end, server_end] = make_channel_pair();
  BridgeClient client(std::move(client_end), BridgeOptions{.timeout = 50ms});
  const auto t0 = std::chrono::steady_clock::now();
  CHECK(code_of([&] { client.handshake(); }) == ErrorCode::Timeout);
  CHECK(std::chrono::steady_clock::now() - t0 < 2s);
}

TEST_CASE("a closed server is a backend failure") {
  auto [client_end, server_end] = make_channel_pair();
  server_end.reset();
  BridgeClient client(std::move(client_end), BridgeOptions{.timeout = 1000ms});
  const auto c = code_of([&] { client.handshake(); });
  CHECK(is_backend_error(c));
}

TEST_CASE("server enforces handshake first and increasing ids") {
  EchoBackend backend(4);
  StubServer server(backend);
  auto r = Json::parse(server.handle_line(protocol::encode(1, "a")));
  CHECK(r["type"] == "error");
  CHECK(r["request_id"] == 1);
  r = Json::parse(server.handle_line(protocol::handshake(2)));
  CHECK(r["type"] == "handshake_ack");
  r = Json::parse(server.handle_line(protocol::encode(2, "a")));
  CHECK(r["type"] == "error");
  r = Json::parse(server.handle_line("{oops"));
  CHECK(r["type"] == "error");
  CHECK(r["request_id"] == -1);
  r = Json::parse(server.handle_line(R"({"type":"frobnicate","request_id":9})"));
  CHECK(r["type"] == "error");
  CHECK(r["message"].get<std::string>().find("frobnicate") != std::string::npos);
}

TEST_CASE("golden transcript: the stub reproduces every response") {
  EchoBackend backend(4);
  StubServer server(backend);
  const auto lines = read_lines(kTranscript);
  REQUIRE(lines.size() % 2 == 0);
  for (std::size_t i = 0; i < lines.size(); i += 2) {
    REQUIRE(lines[i].starts_with("> "));
    REQUIRE(lines[i + 1].starts_with("< "));
    CHECK(server.handle_line(lines[i].substr(2)) == lines[i + 1].substr(2));
  }
}

TEST_CASE("golden transcript: the client sends every request") {
  const auto lines = read_lines(kTranscript);
  std::size_t next = 0;
  auto ch = std::make_unique<ScriptChannel>([&](const Json&) {
    REQUIRE(next + 1 < lines.size());
    auto reply = lines[next + 1].substr(2);
    next += 2;
    return reply;
  });
  auto* raw = ch.get();
  BridgeClient client(std::move(ch));
  run_transcript_session(client);
  REQUIRE(raw->sent.size() * 2 == lines.size());
  for (std::size_t i = 0; i < raw->sent.size(); ++i) {
    CHECK(raw->sent[i] == lines[2 * i].substr(2));
  }
}

TEST_CASE("golden transcript: a live recorded session matches") {
  EchoBackend backend(4);
  auto [client_end, server_end] = make_channel_pair();
  std::thread server([&, ch = std::move(server_end)] { StubServer(backend).serve(*ch); });
  auto rec = std::make_unique<RecordingChannel>(std::move(client_end));
  auto* raw = rec.get();
  std::vector<std::string> transcript;
  {
    BridgeClient client(std::move(rec));
    run_transcript_session(client);
    transcript = raw->transcript();
  }
  server.join();
  CHECK(transcript == read_lines(kTranscript));
}

TEST_CASE("tcp endpoint") {
  EchoBackend backend(16);
  TcpListener listener("127.0.0.1", 0);
  std::thread server([&] {
    auto ch = listener.accept();
    StubServer(backend).serve(*ch);
  });
  {
    auto client = BridgeClient::connect("tcp:127.0.0.1:" + std::to_string(listener.port()));
    CHECK(client->handshake().vocab_size == 16);
    CHECK(client->encode("ab") == std::vector<TokenId>{97, 98});
  }
  server.join();
}

TEST_CASE("exec endpoint drives a toy fixture identically to the in-process backend") {
  const auto fx = make_biased_fixture();
  const auto path = std::filesystem::temp_directory_path() / "groundguide_bridge_fixture.json";
  write_text_file(path, fx.model.to_json().dump());
  auto client = BridgeClient::connect(std::string("exec:") + GROUNDGUIDE_TOOL_PATH +
                                      " stub-server --fixture " + path.string());
  GenerationContext ctx{.image_ref = fx.image_ref, .guidance_text = fx.guidance_text,
                        .query_text = fx.query};
  ToyBackend local(fx.model);
  const auto remote_out = guided_generate(*client, ctx, GenerationConfig{});
  const auto local_out = guided_generate(local, ctx, GenerationConfig{});
  CHECK(remote_out.tokens == local_out.tokens);
  CHECK(remote_out.text == "A dog with a frisbee.");
}

TEST_CASE("endpoint parsing") {
  CHECK(code_of([] { BridgeClient::connect("http://x"); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { BridgeClient::connect("tcp:localhost"); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { BridgeClient::connect("tcp:localhost:0"); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { BridgeClient::connect("exec:"); }) == ErrorCode::InvalidArgument);
}
