#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "groundguide/error.hpp"
#include "groundguide/guidance.hpp"

using namespace groundguide;

namespace {

DetectionRecord det(std::string image, std::string model, std::string label, double conf) {
  return DetectionRecord{std::move(image), std::move(model), std::move(label), conf};
}

std::uint64_t seed_for_template(TemplateSet set, std::size_t index) {
  for (std::uint64_t s = 0;; ++s) {
    if (build_guidance_prompt(std::vector<std::string>{"x"}, set, s).template_index == index) {
      return s;
    }
  }
}

}  // namespace

TEST_CASE("default thresholds") {
  const auto t = default_thresholds();
  CHECK(t.at("detr") == 0.95);
  CHECK(t.at("rampp") == 0.68);
  CHECK(t.size() == 2);
}

TEST_CASE("thresholding keeps confidence at or above the model threshold") {
  const std::vector<DetectionRecord> recs = {
      det("1", "detr", "dog", 0.97), det("1", "detr", "cat", 0.90),
      det("1", "detr", "cup", 0.95), det("1", "rampp", "dog", 0.70),
      det("1", "rampp", "fork", 0.60)};
  const auto kept = threshold_detections(recs, default_thresholds());
  REQUIRE(kept.size() == 3);
  CHECK(kept[0].label == "dog");
  CHECK(kept[1].label == "cup");
  CHECK(kept[2].model_id == "rampp");
  CHECK(threshold_detections({}, default_thresholds()).empty());
}

TEST_CASE("thresholding an unconfigured model raises") {
  const std::vector<DetectionRecord> recs = {det("1", "yolo", "dog", 0.99)};
  try {
    threshold_detections(recs, default_thresholds());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownModelId);
  }
}

TEST_CASE("raising a threshold never adds detections") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<DetectionRecord> recs;
    for (int i = 0; i < 20; ++i) recs.push_back(det("i", "detr", "l" + std::to_string(i), u(rng)));
    const double lo = u(rng), hi = lo + (1 - lo) * u(rng);
    const auto a = threshold_detections(recs, ThresholdMap{{"detr", lo}});
    const auto b = threshold_detections(recs, ThresholdMap{{"detr", hi}});
    CHECK(b.size() <= a.size());
    for (const auto& r : b) CHECK(r.confidence >= hi);
  }
}

TEST_CASE("detection validation") {
  CHECK_THROWS_AS(validate(det("1", "detr", "dog", 1.5)), Error);
  CHECK_THROWS_AS(validate(det("1", "detr", "dog", -0.1)), Error);
  CHECK_THROWS_AS(validate(det("1", "detr", "   ", 0.5)), Error);
  CHECK_NOTHROW(validate(det("1", "detr", "dog", 0.0)));
  CHECK_NOTHROW(validate(det("1", "detr", "dog", 1.0)));
  CHECK_THROWS_AS(detection_from_json(Json{{"image_id", "1"}, {"model_id", "detr"}}), Error);
  const auto r = detection_from_json(
      Json{{"image_id", "9"}, {"model_id", "rampp"}, {"label", "Dog"}, {"confidence", 0.5}});
  CHECK(r.label == "Dog");
  CHECK(r.confidence == 0.5);
}

TEST_CASE("label normalization") {
  CHECK(normalize_label("  Hot   Dog ") == "hot dog");
  CHECK(normalize_label("DOG") == "dog");
  CHECK(normalize_label("") == "");
}

TEST_CASE("canonicalization through the default map") {
  const auto& m = SynonymMap::coco_default();
  CHECK(canonicalize("puppy", m) == "dog");
  CHECK(canonicalize("Dogs", m) == "dog");
  CHECK(canonicalize("hot dog", m) == "hot dog");
  CHECK(canonicalize("ski", m) == "skis");
  CHECK(canonicalize("  TV ", m) == "tv");
  CHECK_FALSE(canonicalize("spaceship", m).has_value());
  CHECK(m.vocabulary().size() == 80);
}

TEST_CASE("canonicalization is idempotent and lands in the vocabulary") {
  const auto& m = SynonymMap::coco_default();
  for (const auto& [phrase, canonical] : m.entries()) {
    const auto once = canonicalize(phrase, m);
    REQUIRE(once.has_value());
    CHECK(*once == canonical);
    CHECK(m.vocabulary().contains(*once));
    CHECK(canonicalize(*once, m) == once);
  }
  for (const auto& v : m.vocabulary()) CHECK(m.find(v) == v);
}

TEST_CASE("synonym maps reject canonical labels outside the vocabulary") {
  CHECK_THROWS_AS(SynonymMap({{"pup", "doggo"}}, {"dog"}), Error);
  const SynonymMap m({{" Pup ", "dog"}}, {"dog", "cat"});
  CHECK(m.find("pup") == "dog");
  CHECK(m.find("cat") == "cat");
  const auto round = SynonymMap::from_json(m.to_json());
  CHECK(round.entries() == m.entries());
  CHECK(round.vocabulary() == m.vocabulary());
}

TEST_CASE("aggregation examples") {
  const std::vector<std::set<std::string>> sets = {{"dog", "frisbee", "person"},
                                                   {"dog", "frisbee", "tree"}};
  CHECK(aggregate(sets, AggregationMode::Intersection) ==
        std::vector<std::string>{"dog", "frisbee"});
  CHECK(aggregate(sets, AggregationMode::Union) ==
        std::vector<std::string>{"dog", "frisbee", "person", "tree"});
  CHECK(aggregate({{}, {"dog"}}, AggregationMode::Intersection).empty());
  CHECK_THROWS_AS(aggregate({}, AggregationMode::Union), Error);
}

TEST_CASE("canonicalization happens before intersection") {
  const std::vector<DetectionRecord> recs = {det("1", "detr", "puppy", 0.99),
                                             det("1", "rampp", "dog", 0.9)};
  GuidanceOptions opts;
  const auto b = build_bundle("1", recs, SynonymMap::coco_default(), opts);
  CHECK(b.objects == std::vector<std::string>{"dog"});
}

TEST_CASE("aggregation properties over random sets") {
  std::mt19937_64 rng(11);
  std::bernoulli_distribution coin(0.4);
  const std::vector<std::string> pool = {"a", "b", "c", "d", "e", "f", "g"};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::set<std::string>> sets(1 + trial % 4);
    for (auto& s : sets) {
      for (const auto& p : pool) {
        if (coin(rng)) s.insert(p);
      }
    }
    const auto inter = aggregate(sets, AggregationMode::Intersection);
    const auto uni = aggregate(sets, AggregationMode::Union);
    CHECK(std::is_sorted(inter.begin(), inter.end()));
    CHECK(std::is_sorted(uni.begin(), uni.end()));
    for (const auto& x : inter) {
      for (const auto& s : sets) CHECK(s.contains(x));
    }
    for (const auto& s : sets) {
      for (const auto& x : s) CHECK(std::find(uni.begin(), uni.end(), x) != uni.end());
    }
    CHECK(aggregate({std::set<std::string>(inter.begin(), inter.end())},
                    AggregationMode::Intersection) == inter);
  }
}

TEST_CASE("prompt rendering for the first detection template") {
  const auto seed = seed_for_template(TemplateSet::Intersec, 0);
  const auto p = build_guidance_prompt(std::vector<std::string>{"dog", "frisbee"},
                                       TemplateSet::Intersec, seed);
  CHECK(p.template_index == 0);
  CHECK(p.text == "This image contains dog, frisbee. Based on this, <QUERY>");
}

TEST_CASE("probing templates keep the restrictive wording") {
  const auto seed = seed_for_template(TemplateSet::Pope, 0);
  const auto p = build_guidance_prompt(std::vector<std::string>{"dog"}, TemplateSet::Pope, seed);
  CHECK(p.text.find("dog") != std::string::npos);
  CHECK(p.text.find("Do not assume anything beyond these objects") != std::string::npos);
  for (const auto t : prompt_templates(TemplateSet::Pope)) {
    CHECK(t.find(kObjectSlot) != std::string_view::npos);
    CHECK(t.find(kQuerySlot) != std::string_view::npos);
  }
}

TEST_CASE("every template has exactly one slot of each kind") {
  for (auto set : {TemplateSet::Intersec, TemplateSet::Pope, TemplateSet::Union}) {
    CHECK(prompt_templates(set).size() == 4);
    for (const auto t : prompt_templates(set)) {
      const auto o = t.find(kObjectSlot);
      const auto q = t.find(kQuerySlot);
      REQUIRE(o != std::string_view::npos);
      REQUIRE(q != std::string_view::npos);
      CHECK(t.find(kObjectSlot, o + 1) == std::string_view::npos);
      CHECK(t.find(kQuerySlot, q + 1) == std::string_view::npos);
    }
  }
}

TEST_CASE("template choice is deterministic per seed and covers all templates") {
  const std::vector<std::string> objs = {"cat", "bed"};
  std::set<std::size_t> seen;
  for (std::uint64_t s = 0; s < 64; ++s) {
    const auto a = build_guidance_prompt(objs, TemplateSet::Intersec, s);
    const auto b = build_guidance_prompt(objs, TemplateSet::Intersec, s);
    CHECK(a.text == b.text);
    CHECK(a.template_index == b.template_index);
    seen.insert(a.template_index);
  }
  CHECK(seen.size() == 4);
}

TEST_CASE("empty object lists are rejected") {
  try {
    build_guidance_prompt(std::vector<std::string>{}, TemplateSet::Intersec, 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyObjects);
  }
}

TEST_CASE("union templates render one line per detector group") {
  std::uint64_t seed = 0;
  while (build_guidance_prompt(std::vector<std::vector<std::string>>{{"x"}}, TemplateSet::Union,
                               seed)
             .template_index != 0) {
    ++seed;
  }
  const auto p = build_guidance_prompt(
      std::vector<std::vector<std::string>>{{"dog", "frisbee"}, {"dog", "tree"}},
      TemplateSet::Union, seed);
  CHECK(p.text ==
        "List of detected objects in the image:\ndog, frisbee\ndog, tree\nBased on the detected "
        "objects above, <QUERY>");
  const auto flat = build_guidance_prompt(
      std::vector<std::vector<std::string>>{{"dog", "frisbee"}, {"dog", "tree"}},
      TemplateSet::Intersec, seed_for_template(TemplateSet::Intersec, 0));
  CHECK(flat.text == "This image contains dog, frisbee, tree. Based on this, <QUERY>");
}

TEST_CASE("query filling") {
  CHECK(fill_query("Objects: a. <QUERY>", "Describe.") == "Objects: a. Describe.");
  CHECK(fill_query("Objects: a.", "Describe.") == "Objects: a. Describe.");
  CHECK(fill_query("", "Describe.") == "Describe.");
}

TEST_CASE("mean confidence") {
  CHECK(mean_confidence({}) == 0.0);
  const std::vector<DetectionRecord> recs = {det("1", "detr", "a", 0.96),
                                             det("1", "rampp", "b", 0.70)};
  CHECK(mean_confidence(recs) == doctest::Approx(0.83).epsilon(1e-12));
}

TEST_CASE("bundle ordering, degradation and error policy") {
  const std::vector<DetectionRecord> recs = {
      det("1", "detr", "frisbee", 0.97), det("1", "detr", "dog", 0.99),
      det("1", "rampp", "frisbee", 0.80), det("1", "rampp", "dog", 0.70),
      det("1", "rampp", "grass", 0.90), det("2", "detr", "cat", 0.5),
      det("2", "rampp", "cat", 0.5)};
  GuidanceOptions opts;
  const auto bundles = build_bundles(recs, {"1", "2", "3"}, SynonymMap::coco_default(), opts);
  REQUIRE(bundles.size() == 3);
  CHECK(bundles[0].objects == std::vector<std::string>{"dog", "frisbee"});
  CHECK(bundles[0].mean_confidence == doctest::Approx((0.97 + 0.99 + 0.8 + 0.7 + 0.9) / 5));
  CHECK(bundles[0].guidance_text.find("dog, frisbee") != std::string::npos);
  CHECK(bundles[0].template_index.has_value());
  CHECK(bundles[1].objects.empty());
  CHECK(bundles[1].guidance_text.empty());
  CHECK(bundles[2].guidance_text.empty());

  opts.mode = AggregationMode::Union;
  const auto u = build_bundle("1", std::span(recs).first(5), SynonymMap::coco_default(), opts);
  CHECK(u.objects == std::vector<std::string>{"dog", "frisbee", "grass"});

  opts.empty_policy = EmptyGuidancePolicy::Error;
  CHECK_THROWS_AS(build_bundles(recs, {"2"}, SynonymMap::coco_default(), opts), Error);
}

TEST_CASE("bundles are reproducible and per-image seeds differ") {
  const std::vector<DetectionRecord> recs = {det("a", "detr", "dog", 0.99),
                                             det("b", "detr", "dog", 0.99)};
  GuidanceOptions opts;
  const auto x = build_bundles(recs, {"a", "b"}, SynonymMap::coco_default(), opts);
  const auto y = build_bundles(recs, {"a", "b"}, SynonymMap::coco_default(), opts);
  CHECK(x[0].guidance_text == y[0].guidance_text);
  CHECK(x[1].guidance_text == y[1].guidance_text);
  CHECK(image_prompt_seed(242, "a") != image_prompt_seed(242, "b"));
  CHECK(image_prompt_seed(242, "a") == image_prompt_seed(242, "a"));
}

TEST_CASE("mode and template names round trip") {
  CHECK(parse_aggregation_mode("intersection") == AggregationMode::Intersection);
  CHECK(parse_aggregation_mode(to_string(AggregationMode::Union)) == AggregationMode::Union);
  CHECK(parse_template_set(to_string(TemplateSet::Pope)) == TemplateSet::Pope);
  CHECK_THROWS_AS(parse_template_set("bogus"), Error);
}
