#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "groundguide/bridge.hpp"
#include "groundguide/decode.hpp"
#include "groundguide/error.hpp"
#include "groundguide/guidance.hpp"
#include "groundguide/judge.hpp"
#include "groundguide/metrics.hpp"
#include "groundguide/pope.hpp"
#include "groundguide/toylm.hpp"

namespace py = pybind11;
using namespace groundguide;

namespace {

LogitVector to_logits(const std::vector<double>& v) { return LogitVector(v); }

std::vector<double> from_logits(const LogitVector& v) {
  return {v.values().begin(), v.values().end()};
}

Sampler make_sampler(std::optional<double> temperature) {
  if (temperature) return TemperatureSampler{*temperature};
  return GreedySampler{};
}

}  // namespace

PYBIND11_MODULE(_groundguide, m) {
  m.doc() = "Detector-guided decoding, CHAIR and POPE evaluation";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (std::string(to_string(e.code())) + ": " + e.what()).c_str());
    }
  });

  m.attr("DEFAULT_GAMMA") = kDefaultGamma;
  m.attr("DEFAULT_MAX_TOKENS") = kDefaultMaxTokens;
  m.attr("DEFAULT_SEED") = kDefaultSeed;
  m.attr("DEFAULT_QUERY") = std::string(kDefaultQuery);

  // decoding
  m.def("blend_logits",
        [](const std::vector<double>& cond, const std::vector<double>& uncond, double gamma) {
          return from_logits(blend_logits(to_logits(cond), to_logits(uncond), gamma));
        },
        py::arg("cond"), py::arg("uncond"), py::arg("gamma"));
  m.def("dynamic_gamma",
        [](double s, double lo, double hi, double s_min, double s_max) {
          return dynamic_gamma(s, DynamicGammaConfig{lo, hi, s_min, s_max});
        },
        py::arg("s"), py::arg("lo") = 0.4, py::arg("hi") = 0.8, py::arg("s_min") = 0.0,
        py::arg("s_max") = 1.0);
  m.def("select_token",
        [](const std::vector<double>& logits, std::optional<double> temperature,
           std::uint64_t seed) {
          Rng rng(seed);
          return select_token(to_logits(logits), make_sampler(temperature), rng);
        },
        py::arg("logits"), py::arg("temperature") = py::none(), py::arg("seed") = kDefaultSeed);

  py::class_<GenerationResult>(m, "GenerationResult")
      .def_readonly("tokens", &GenerationResult::tokens)
      .def_readonly("text", &GenerationResult::text)
      .def_readonly("gamma", &GenerationResult::gamma);

  py::class_<TableModel>(m, "TableModel")
      .def_static("from_json", [](const std::string& s) { return TableModel::from_json(Json::parse(s)); })
      .def_static("load", &TableModel::load)
      .def("to_json", [](const TableModel& t) { return t.to_json().dump(); })
      .def_property_readonly("vocab", &TableModel::vocab)
      .def_property_readonly("eos", &TableModel::eos);

  py::class_<BiasedFixture>(m, "BiasedFixture")
      .def_readonly("model", &BiasedFixture::model)
      .def_readonly("image_ref", &BiasedFixture::image_ref)
      .def_readonly("guidance_text", &BiasedFixture::guidance_text)
      .def_readonly("query", &BiasedFixture::query)
      .def_readonly("hallucination_token", &BiasedFixture::hallucination_token)
      .def_readonly("grounded_token", &BiasedFixture::grounded_token)
      .def_readonly("designated_step", &BiasedFixture::designated_step);
  m.def("make_biased_fixture", &make_biased_fixture);

  m.def("toy_generate",
        [](const TableModel& model, const std::string& image_ref,
           std::optional<std::string> guidance_text, const std::string& query, double gamma,
           std::size_t max_tokens, std::optional<double> temperature, std::uint64_t seed) {
          ToyBackend backend(model);
          GenerationConfig cfg;
          cfg.gamma = gamma;
          cfg.max_tokens = max_tokens;
          cfg.sampler = make_sampler(temperature);
          cfg.seed = seed;
          GenerationContext ctx{image_ref, std::move(guidance_text), query, {}};
          return guided_generate(backend, ctx, cfg);
        },
        py::arg("model"), py::arg("image_ref"), py::arg("guidance_text"),
        py::arg("query") = std::string(kDefaultQuery), py::arg("gamma") = kDefaultGamma,
        py::arg("max_tokens") = kDefaultMaxTokens, py::arg("temperature") = py::none(),
        py::arg("seed") = kDefaultSeed);

  m.def("bridge_generate",
        [](const std::string& endpoint, const std::string& image_ref,
           std::optional<std::string> guidance_text, const std::string& query, double gamma,
           std::size_t max_tokens) {
          auto client = BridgeClient::connect(endpoint);
          GenerationConfig cfg;
          cfg.gamma = gamma;
          cfg.max_tokens = max_tokens;
          GenerationContext ctx{image_ref, std::move(guidance_text), query, {}};
          return guided_generate(*client, ctx, cfg);
        },
        py::arg("endpoint"), py::arg("image_ref"), py::arg("guidance_text"),
        py::arg("query") = std::string(kDefaultQuery), py::arg("gamma") = kDefaultGamma,
        py::arg("max_tokens") = kDefaultMaxTokens);

  // guidance
  m.def("canonicalize",
        [](const std::string& label) { return canonicalize(label, SynonymMap::coco_default()); },
        py::arg("label"));
  m.def("aggregate",
        [](const std::vector<std::set<std::string>>& sets, const std::string& mode) {
          return aggregate(sets, parse_aggregation_mode(mode));
        },
        py::arg("sets"), py::arg("mode") = "intersection");
  m.def("build_guidance_prompt",
        [](const std::vector<std::string>& objects, const std::string& template_set,
           std::uint64_t seed) {
          const auto r = build_guidance_prompt(objects, parse_template_set(template_set), seed);
          return py::make_tuple(r.text, r.template_index);
        },
        py::arg("objects"), py::arg("template_set") = "intersec", py::arg("seed") = kDefaultSeed);
  m.def("fill_query", &fill_query, py::arg("guidance_text"), py::arg("query"));
  m.def("mean_confidence", [](const std::vector<double>& confidences) {
    std::vector<DetectionRecord> recs;
    for (double c : confidences) recs.push_back({"", "", "x", c});
    return mean_confidence(recs);
  });

  // metrics
  m.def("extract_mentioned_objects",
        [](const std::string& text) {
          return extract_mentioned_objects(text, SynonymMap::coco_default());
        },
        py::arg("text"));
  m.def("score_chair",
        [](const std::vector<std::pair<std::string, std::string>>& captions,
           const std::map<std::string, std::set<std::string>>& annotations) {
          std::vector<CaptionRecord> caps;
          for (const auto& [id, text] : captions) caps.push_back({id, text});
          std::vector<AnnotationRecord> anns;
          for (const auto& [id, objs] : annotations) anns.push_back({id, objs});
          return score_chair(caps, anns, SynonymMap::coco_default()).to_json().dump();
        },
        py::arg("captions"), py::arg("annotations"));

  // POPE
  m.def("parse_answer",
        [](const std::string& text) { return std::string(to_string(parse_answer(text))); },
        py::arg("text"));
  m.def("build_pope_questions",
        [](const std::map<std::string, std::set<std::string>>& annotations,
           const std::string& setting, std::size_t per_image, std::uint64_t seed) {
          std::vector<AnnotationRecord> anns;
          for (const auto& [id, objs] : annotations) anns.push_back({id, objs});
          const auto stats = build_cooccurrence(anns);
          const auto r = build_questions(anns, stats, parse_pope_setting(setting), per_image, seed);
          std::vector<std::string> out;
          for (const auto& q : r.questions) out.push_back(q.to_json().dump());
          return out;
        },
        py::arg("annotations"), py::arg("setting") = "adversarial",
        py::arg("per_image") = kDefaultQuestionsPerImage, py::arg("seed") = kDefaultSeed);
  m.def("score_pope",
        [](const std::vector<std::string>& questions, const std::vector<std::string>& answers) {
          std::vector<PopeQuestion> qs;
          for (const auto& q : questions) qs.push_back(PopeQuestion::from_json(Json::parse(q)));
          std::map<std::size_t, std::string> a;
          for (std::size_t i = 0; i < answers.size(); ++i) a[i] = answers[i];
          return score_pope(qs, a).to_json().dump();
        },
        py::arg("questions"), py::arg("answers"));

  m.def("render_judge_prompt", &render_judge_prompt, py::arg("question"), py::arg("answer1"),
        py::arg("answer2"));
}
