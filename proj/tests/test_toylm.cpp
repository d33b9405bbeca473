#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "groundguide/error.hpp"
#include "groundguide/toylm.hpp"
#include "oracles.hpp"

using namespace groundguide;

namespace {

TableModel two_word_model() {
  TableModel::Table t;
  t[TableModel::signature("img", "q", std::vector<std::string>{})] = {0.1, 0.2, 0.3, 0.4};
  return TableModel({"</s>", "a", "b", "c"}, 0, std::move(t));
}

}  // namespace

TEST_CASE("stored rows become natural-log logits") {
  const auto m = two_word_model();
  const auto l = m.logits(TableModel::signature("img", "q", std::vector<std::string>{}));
  CHECK(l[3] == doctest::Approx(std::log(0.4)).epsilon(1e-12));
  CHECK(l[0] == doctest::Approx(std::log(0.1)).epsilon(1e-12));
}

TEST_CASE("unknown contexts fall back to uniform") {
  const auto m = two_word_model();
  const auto l = m.logits("nothing stored here");
  for (std::size_t i = 0; i < l.size(); ++i) {
    CHECK(l[i] == doctest::Approx(std::log(0.25)).epsilon(1e-12));
  }
}

TEST_CASE("toy step evaluates both signatures") {
  const auto m = two_word_model();
  const auto [c, u] = toy_step(m, TableModel::signature("img", "q", std::vector<std::string>{}), "x");
  CHECK(c[1] == doctest::Approx(std::log(0.2)));
  CHECK(u[1] == doctest::Approx(std::log(0.25)));
}

TEST_CASE("table validation") {
  CHECK_THROWS_AS(TableModel({"a", "b"}, 0, {{"s", {0.5, 0.6}}}), Error);
  CHECK_THROWS_AS(TableModel({"a", "b"}, 0, {{"s", {1.0, 0.0}}}), Error);
  CHECK_THROWS_AS(TableModel({"a", "b"}, 0, {{"s", {1.0}}}), Error);
  CHECK_THROWS_AS(TableModel({"a", "b"}, 2, {}), Error);
  CHECK_NOTHROW(TableModel({"a", "b"}, 1, {{"s", {0.5, 0.5}}}));
}

TEST_CASE("json round trip") {
  const auto m = two_word_model();
  const auto back = TableModel::from_json(m.to_json());
  CHECK(back.vocab() == m.vocab());
  CHECK(back.eos() == m.eos());
  CHECK(back.table() == m.table());
  CHECK_THROWS_AS(TableModel::from_json(Json{{"vocab", {"a"}}}), Error);
}

TEST_CASE("toy backend tokenizes prompts bytewise above the vocabulary") {
  ToyBackend be(two_word_model());
  const auto ids = be.encode("q");
  CHECK(ids == std::vector<TokenId>{4 + 'q'});
  auto ctx = ids;
  ctx.push_back(2);
  CHECK(be.context_signature(ctx, "img") ==
        TableModel::signature("img", "q", std::vector<std::string>{"b"}));
  CHECK(be.decode(std::vector<TokenId>{4 + 'h', 4 + 'i', 1}) == "hia");
  CHECK_THROWS_AS(be.decode(std::vector<TokenId>{999}), Error);
  CHECK(be.handshake().vocab_size == 4);
}

TEST_CASE("biased fixture shape") {
  const auto fx = make_biased_fixture();
  CHECK(fx.uncond_probability > 0.5);
  CHECK(fx.cond_probability < 0.1);
  CHECK(fx.prefix.size() == fx.designated_step);
  CHECK(fx.hallucination_token != fx.grounded_token);
  CHECK(fx.guidance_text.find("<QUERY>") != std::string::npos);
}

TEST_CASE("biased fixture decoding agrees with the oracle at every gamma") {
  const auto fx = make_biased_fixture();
  const auto fixture_json = fx.model.to_json();
  const auto cond_prompt = oracle::replace_query(fx.guidance_text, fx.query);
  double previous = 2.0;
  for (double gamma : {0.0, 0.3, 0.5, 0.7, 1.0}) {
    ToyBackend be(fx.model);
    GenerationConfig cfg;
    cfg.gamma = gamma;
    GenerationContext ctx{.image_ref = fx.image_ref, .guidance_text = fx.guidance_text,
                          .query_text = fx.query};
    const auto got = guided_generate(be, ctx, cfg);
    const auto want =
        oracle::greedy_decode(fixture_json, fx.image_ref, cond_prompt, fx.query, gamma, 64);
    CHECK(got.tokens == want.tokens);
    REQUIRE(want.distributions.size() > fx.designated_step);
    const double p_h = want.distributions[fx.designated_step][
        static_cast<std::size_t>(fx.hallucination_token)];
    CHECK(p_h <= previous);
    previous = p_h;
    for (std::size_t t = 0; t < fx.designated_step; ++t) {
      CHECK(got.tokens[t] == fx.prefix[t]);
    }
  }
}

TEST_CASE("biased fixture endpoint probabilities") {
  const auto fx = make_biased_fixture();
  const auto j = fx.model.to_json();
  const auto cond_prompt = oracle::replace_query(fx.guidance_text, fx.query);
  const auto h = static_cast<std::size_t>(fx.hallucination_token);
  const auto at = [&](double gamma) {
    return oracle::greedy_decode(j, fx.image_ref, cond_prompt, fx.query, gamma, 64)
        .distributions[fx.designated_step][h];
  };
  CHECK(at(0.0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(at(1.0) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(at(0.7) < at(0.0));
}

TEST_CASE("guidance removes the hallucinated object from the caption") {
  const auto fx = make_biased_fixture();
  GenerationContext ctx{.image_ref = fx.image_ref, .guidance_text = fx.guidance_text,
                        .query_text = fx.query};
  GenerationConfig cfg;
  cfg.gamma = 0.0;
  ToyBackend a(fx.model);
  CHECK(guided_generate(a, ctx, cfg).text == "A dog with a fork.");
  cfg.gamma = 0.7;
  ToyBackend b(fx.model);
  CHECK(guided_generate(b, ctx, cfg).text == "A dog with a frisbee.");
}

TEST_CASE("random table models match the oracle") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const std::string cond = "Objects: a. Describe.", uncond = "Describe.";
    const auto j = oracle::random_fixture(rng, "img", {cond, uncond}, 3);
    const auto model = TableModel::from_json(j);
    for (double gamma : {0.0, 0.25, 0.7, 1.0}) {
      ToyBackend be(model);
      GenerationConfig cfg;
      cfg.gamma = gamma;
      cfg.max_tokens = 4;
      GenerationContext ctx{.image_ref = "img", .guidance_text = "Objects: a. <QUERY>",
                            .query_text = "Describe."};
      CHECK(guided_generate(be, ctx, cfg).tokens ==
            oracle::greedy_decode(j, "img", cond, uncond, gamma, 4).tokens);
    }
  }
}
