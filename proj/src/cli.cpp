#include "groundguide/cli.hpp"

#include <algorithm>
#include <chrono>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>

#include "CLI11.hpp"
#include "groundguide/error.hpp"
#include "groundguide/guidance.hpp"
#include "groundguide/judge.hpp"
#include "groundguide/manifest.hpp"
#include "groundguide/metrics.hpp"
#include "groundguide/pope.hpp"
#include "groundguide/random.hpp"
#include "groundguide/toylm.hpp"

namespace groundguide {

namespace {

struct CommonBackendFlags {
  std::string backend;
  long timeout_ms = kDefaultBridgeTimeout.count();
};

struct GuideFlags {
  std::vector<std::string> detections;
  std::string annotations;
  std::string images;
  CommonBackendFlags backend;
  std::string query = std::string(kDefaultQuery);
  double gamma = kDefaultGamma;
  bool dynamic = false;
  double gamma_lo = 0.4;
  double gamma_hi = 0.8;
  std::optional<double> s_min;
  std::optional<double> s_max;
  std::string agg = "intersection";
  std::string template_set;
  std::vector<std::string> thresholds;
  std::string synonyms;
  std::string empty_guidance = "degrade";
  std::size_t max_tokens = kDefaultMaxTokens;
  std::optional<double> temperature;
  std::uint64_t seed = kDefaultSeed;
  std::optional<std::size_t> sample;
  std::string out;
};

struct ChairFlags {
  std::string captions;
  std::string annotations;
  std::string synonyms;
};

struct PopeBuildFlags {
  std::string annotations;
  std::string setting = "adversarial";
  std::size_t per_image = kDefaultQuestionsPerImage;
  std::uint64_t seed = kDefaultSeed;
  std::optional<std::size_t> sample;
  std::string vocabulary;
  std::string out;
};

struct PopeScoreFlags {
  std::string questions;
  std::string answers;
};

struct BenchFlags {
  CommonBackendFlags backend;
  long n_images = -1;
  std::size_t max_tokens = kDefaultMaxTokens;
  std::string query = std::string(kDefaultQuery);
  std::string guidance = "This image contains dog. Based on this, <QUERY>";
  double gamma = kDefaultGamma;
};

struct JudgeFlags {
  std::string question;
  std::string answer1;
  std::string answer2;
};

struct StubFlags {
  std::string fixture;
  std::size_t echo_vocab = 0;
  long eos = 0;
  long delay_ms = 0;
  std::optional<unsigned> listen;
  std::string host = "127.0.0.1";
};

BridgeOptions bridge_options(const CommonBackendFlags& f) {
  BridgeOptions o;
  o.timeout = std::chrono::milliseconds(f.timeout_ms);
  return o;
}

SynonymMap synonyms_or_default(const std::string& path) {
  return path.empty() ? SynonymMap::coco_default() : SynonymMap::load(path);
}

ThresholdMap parse_thresholds(const std::vector<std::string>& overrides) {
  auto map = default_thresholds();
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorCode::InvalidArgument,
                  "threshold must look like model=value, got '" + item + "'");
    }
    double value = 0.0;
    try {
      std::size_t used = 0;
      value = std::stod(item.substr(eq + 1), &used);
      if (used != item.size() - eq - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "bad threshold value in '" + item + "'");
    }
    map[item.substr(0, eq)] = value;
  }
  return map;
}

struct ImageEntry {
  std::string id;
  std::string ref;
};

std::vector<ImageEntry> load_image_list(const std::string& path) {
  std::vector<ImageEntry> out;
  for (const auto& row : read_jsonl(path)) {
    try {
      ImageEntry e;
      e.id = row.at("image_id").get<std::string>();
      e.ref = row.value("image_ref", e.id);
      out.push_back(std::move(e));
    } catch (const Json::exception& ex) {
      throw Error(ErrorCode::ParseFailure, path + ": " + ex.what());
    }
  }
  return out;
}

int report_error(const Error& e, std::ostream& err) {
  err << "error: " << e.what() << "\n";
  return is_backend_error(e.code()) ? kExitBackend : kExitInput;
}

int cmd_guide(const GuideFlags& f, std::ostream& out, std::ostream& err) {
  RunSettings settings;
  settings.generation.gamma = f.gamma;
  settings.generation.max_tokens = f.max_tokens;
  settings.generation.seed = f.seed;
  if (f.temperature) settings.generation.sampler = TemperatureSampler{*f.temperature};
  settings.guidance.thresholds = parse_thresholds(f.thresholds);
  settings.guidance.mode = parse_aggregation_mode(f.agg);
  settings.guidance.template_set =
      f.template_set.empty()
          ? (settings.guidance.mode == AggregationMode::Union ? TemplateSet::Union
                                                              : TemplateSet::Intersec)
          : parse_template_set(f.template_set);
  settings.guidance.seed = f.seed;
  if (f.empty_guidance == "error") {
    settings.guidance.empty_policy = EmptyGuidancePolicy::Error;
  } else if (f.empty_guidance != "degrade") {
    throw Error(ErrorCode::InvalidArgument, "--empty-guidance must be degrade or error");
  }
  settings.backend = f.backend.backend;
  settings.query = f.query;
  settings.sample = f.sample;
  settings.generation.validate();

  RunManifest manifest("guide", settings);
  const auto synonyms = synonyms_or_default(f.synonyms);
  if (!f.synonyms.empty()) manifest.add_input(f.synonyms);

  std::vector<DetectionRecord> records;
  for (const auto& path : f.detections) {
    auto part = load_detections(path);
    records.insert(records.end(), part.begin(), part.end());
    manifest.add_input(path);
  }

  std::vector<ImageEntry> images;
  if (!f.images.empty()) {
    images = load_image_list(f.images);
    manifest.add_input(f.images);
  } else if (!f.annotations.empty()) {
    for (const auto& a : load_annotations(f.annotations)) images.push_back({a.image_id, a.image_id});
    manifest.add_input(f.annotations);
  } else {
    std::set<std::string> seen;
    for (const auto& r : records) {
      if (seen.insert(r.image_id).second) images.push_back({r.image_id, r.image_id});
    }
  }
  if (images.empty()) {
    throw Error(ErrorCode::InvalidArgument,
                "no images: pass --detections, --annotations or --images");
  }
  if (f.sample) {
    std::vector<ImageEntry> picked;
    for (auto i : sample_indices(images.size(), *f.sample, f.seed)) picked.push_back(images[i]);
    images = std::move(picked);
  }

  std::vector<std::string> ids;
  for (const auto& im : images) ids.push_back(im.id);
  const auto bundles = build_bundles(records, ids, synonyms, settings.guidance);

  std::optional<DynamicGammaConfig> dyn;
  if (f.dynamic) {
    DynamicGammaConfig d{f.gamma_lo, f.gamma_hi, 0.0, 1.0};
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& b : bundles) {
      if (b.objects.empty()) continue;
      lo = std::min(lo, b.mean_confidence);
      hi = std::max(hi, b.mean_confidence);
    }
    if (lo <= hi) {
      d.s_min = lo;
      d.s_max = hi;
    }
    if (f.s_min) d.s_min = *f.s_min;
    if (f.s_max) d.s_max = *f.s_max;
    d.validate();
    dyn = d;
    manifest.settings().dynamic_gamma = d;
  }

  std::unique_ptr<ModelBackend> backend;
  try {
    backend = open_backend(f.backend.backend, bridge_options(f.backend));
    backend->handshake();
  } catch (const Error& e) {
    err << "error: cannot open backend '" << f.backend.backend << "': " << e.what() << "\n";
    return kExitBackend;
  }

  std::string captions;
  OrderedJson per_image = OrderedJson::array();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& b = bundles[i];
    GenerationContext ctx;
    ctx.image_ref = images[i].ref;
    ctx.query_text = f.query;
    if (!b.guidance_text.empty()) ctx.guidance_text = b.guidance_text;
    GenerationResult result;
    try {
      result = guided_generate(*backend, ctx, settings.generation, dyn, b.mean_confidence);
    } catch (const Error& e) {
      if (is_backend_error(e.code()) || e.code() == ErrorCode::LengthMismatch) {
        err << "error: backend failure on image '" << b.image_id << "': " << e.what() << "\n";
        return kExitBackend;
      }
      throw;
    }
    OrderedJson line;
    line["image_id"] = b.image_id;
    line["text"] = result.text;
    captions += line.dump() + "\n";

    OrderedJson info;
    info["image_id"] = b.image_id;
    info["objects"] = b.objects;
    info["mean_confidence"] = b.mean_confidence;
    info["gamma"] = result.gamma;
    info["template_index"] =
        b.template_index ? OrderedJson(*b.template_index) : OrderedJson(nullptr);
    info["output_tokens"] = result.tokens.size();
    per_image.push_back(std::move(info));
  }

  write_text_file(f.out, captions);
  manifest.set_extra("backend_model", backend->handshake().model_name);
  manifest.set_extra("images", std::move(per_image));
  manifest.finish();
  manifest.write_beside(f.out);
  out << "wrote " << images.size() << " captions to " << f.out << "\n";
  return kExitOk;
}

int cmd_chair(const ChairFlags& f, std::ostream& out) {
  const auto synonyms = synonyms_or_default(f.synonyms);
  const auto captions = load_captions(f.captions);
  const auto annotations = load_annotations(f.annotations);
  const auto report = score_chair(captions, annotations, synonyms);
  out << report.to_json().dump(2) << "\n";
  return kExitOk;
}

int cmd_pope_build(const PopeBuildFlags& f, std::ostream& out, std::ostream& err) {
  RunSettings settings;
  settings.generation.seed = f.seed;
  settings.sample = f.sample;
  RunManifest manifest("pope-build", settings);

  const auto setting = parse_pope_setting(f.setting);
  auto annotations = load_annotations(f.annotations);
  manifest.add_input(f.annotations);
  // Co-occurrence and popularity come from the whole corpus, before sampling.
  const auto stats = build_cooccurrence(annotations);
  if (f.sample) {
    std::vector<AnnotationRecord> picked;
    for (auto i : sample_indices(annotations.size(), *f.sample, f.seed)) {
      picked.push_back(annotations[i]);
    }
    annotations = std::move(picked);
  }
  std::optional<std::vector<std::string>> vocabulary;
  if (!f.vocabulary.empty()) {
    const auto map = SynonymMap::load(f.vocabulary);
    manifest.add_input(f.vocabulary);
    vocabulary.emplace(map.vocabulary().begin(), map.vocabulary().end());
  }
  const auto built =
      build_questions(annotations, stats, setting, f.per_image, f.seed, vocabulary);

  std::string text;
  for (const auto& q : built.questions) text += q.to_json().dump() + "\n";
  write_text_file(f.out, text);

  OrderedJson shortfalls = OrderedJson::array();
  for (const auto& [id, n] : built.shortfalls) {
    shortfalls.push_back({{"image_id", id}, {"per_polarity", n}});
    err << "warning: image '" << id << "' supplied only " << n
        << " question(s) per polarity\n";
  }
  manifest.set_extra("pope", {{"setting", to_string(setting)},
                              {"questions_per_image", f.per_image},
                              {"questions", built.questions.size()},
                              {"shortfalls", std::move(shortfalls)}});
  manifest.finish();
  manifest.write_beside(f.out);
  out << "wrote " << built.questions.size() << " questions to " << f.out << "\n";
  return kExitOk;
}

int cmd_pope_score(const PopeScoreFlags& f, std::ostream& out) {
  const auto questions = load_questions(f.questions);
  const auto answers = load_answers(f.answers);
  out << score_pope(questions, answers).to_json().dump(2) << "\n";
  return kExitOk;
}

int cmd_bench(const BenchFlags& f, std::ostream& out, std::ostream& err) {
  if (f.n_images <= 0) {
    throw Error(ErrorCode::InvalidArgument, "--n-images must be positive");
  }
  GenerationConfig cfg;
  cfg.gamma = f.gamma;
  cfg.max_tokens = f.max_tokens;
  cfg.stop_on_eos = false;
  cfg.validate();

  std::unique_ptr<ModelBackend> backend;
  try {
    backend = open_backend(f.backend.backend, bridge_options(f.backend));
    backend->handshake();
  } catch (const Error& e) {
    err << "error: cannot open backend '" << f.backend.backend << "': " << e.what() << "\n";
    return kExitBackend;
  }

  using Clock = std::chrono::steady_clock;
  OrderedJson runs = OrderedJson::array();
  std::size_t total_tokens = 0;
  double total_seconds = 0.0;
  for (long i = 0; i < f.n_images; ++i) {
    GenerationContext ctx;
    ctx.image_ref = "bench-" + std::to_string(i);
    ctx.query_text = f.query;
    ctx.guidance_text = f.guidance;
    const auto start = Clock::now();
    GenerationResult result;
    try {
      result = guided_generate(*backend, ctx, cfg);
    } catch (const Error& e) {
      err << "error: backend failure on run " << i << ": " << e.what() << "\n";
      return kExitBackend;
    }
    const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
    const auto n = result.tokens.size();
    total_tokens += n;
    total_seconds += seconds;
    OrderedJson run;
    run["image_ref"] = ctx.image_ref;
    run["output_tokens"] = n;
    run["seconds"] = seconds;
    run["ms_per_token"] = n ? seconds * 1000.0 / static_cast<double>(n) : 0.0;
    runs.push_back(std::move(run));
  }

  OrderedJson report;
  report["schema_version"] = kSchemaVersion;
  report["backend"] = f.backend.backend;
  report["max_tokens"] = f.max_tokens;
  report["stop_on_eos"] = false;
  report["runs"] = std::move(runs);
  report["total_output_tokens"] = total_tokens;
  report["total_seconds"] = total_seconds;
  report["ms_per_token"] =
      total_tokens ? total_seconds * 1000.0 / static_cast<double>(total_tokens) : 0.0;
  out << report.dump(2) << "\n";
  return kExitOk;
}

int cmd_judge(const JudgeFlags& f, std::ostream& out) {
  out << render_judge_prompt(f.question, f.answer1, f.answer2);
  return kExitOk;
}

int cmd_stub_server(const StubFlags& f, std::ostream& err) {
  std::unique_ptr<ModelBackend> backend;
  if (!f.fixture.empty()) {
    backend = std::make_unique<ToyBackend>(TableModel::load(f.fixture));
  } else if (f.echo_vocab > 0) {
    backend = std::make_unique<EchoBackend>(f.echo_vocab, f.eos);
  } else {
    throw Error(ErrorCode::InvalidArgument, "stub-server needs --fixture or --echo-vocab");
  }
  StubServerOptions options;
  options.step_delay = std::chrono::milliseconds(f.delay_ms);

  if (!f.listen) {
    FdChannel stdio(0, 1);
    StubServer server(*backend, options);
    server.serve(stdio);
    return kExitOk;
  }
  TcpListener listener(f.host, static_cast<std::uint16_t>(*f.listen));
  err << "listening on " << f.host << ":" << listener.port() << "\n";
  for (;;) {
    auto conn = listener.accept();
    StubServer server(*backend, options);
    try {
      server.serve(*conn);
    } catch (const Error& e) {
      err << "connection dropped: " << e.what() << "\n";
    }
  }
}

}  // namespace

std::unique_ptr<ModelBackend> open_backend(std::string_view spec,
                                           BridgeOptions options) {
  if (spec.starts_with("toy:")) {
    return std::make_unique<ToyBackend>(TableModel::load(std::string(spec.substr(4))));
  }
  return BridgeClient::connect(spec, options);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Image-grounded guided decoding and object hallucination evaluation",
               "groundguide"};
  app.require_subcommand(1);

  GuideFlags guide;
  auto* g = app.add_subcommand("guide", "Generate guided captions for a set of images");
  g->add_option("--detections", guide.detections, "Detection JSONL files")->expected(1, -1);
  g->add_option("--annotations", guide.annotations, "Annotation JSONL (defines the image list)");
  g->add_option("--images", guide.images, "Image list JSONL with image_id and image_ref");
  g->add_option("--backend", guide.backend.backend, "toy:<fixture> | exec:<cmd> | tcp:<host>:<port>")
      ->required();
  g->add_option("--timeout-ms", guide.backend.timeout_ms, "Per-request bridge timeout");
  g->add_option("--query", guide.query, "Query text");
  auto* gamma_opt = g->add_option("--gamma", guide.gamma, "Guidance strength in [0,1]");
  g->add_flag("--dynamic-gamma", guide.dynamic, "Map mean detector confidence to gamma")
      ->excludes(gamma_opt);
  g->add_option("--gamma-lo", guide.gamma_lo, "Dynamic gamma lower bound");
  g->add_option("--gamma-hi", guide.gamma_hi, "Dynamic gamma upper bound");
  g->add_option("--s-min", guide.s_min, "Confidence mapped to --gamma-lo (default: corpus min)");
  g->add_option("--s-max", guide.s_max, "Confidence mapped to --gamma-hi (default: corpus max)");
  g->add_option("--agg", guide.agg, "intersection | union");
  g->add_option("--template-set", guide.template_set, "intersec | pope | union");
  g->add_option("--threshold", guide.thresholds, "Per-model threshold override, model=value");
  g->add_option("--synonyms", guide.synonyms, "Synonym map JSON (default: bundled MSCOCO map)");
  g->add_option("--empty-guidance", guide.empty_guidance, "degrade | error");
  g->add_option("--max-tokens", guide.max_tokens, "Maximum generated tokens");
  g->add_option("--temperature", guide.temperature, "Sample at this temperature instead of greedy");
  g->add_option("--seed", guide.seed, "Random seed");
  g->add_option("--sample", guide.sample, "Use a seeded subset of N images");
  g->add_option("--out", guide.out, "Captions JSONL to write")->required();

  ChairFlags chair;
  auto* c = app.add_subcommand("chair", "Score captions with CHAIR_S, CHAIR_I and recall");
  c->add_option("--captions", chair.captions)->required();
  c->add_option("--annotations", chair.annotations)->required();
  c->add_option("--synonyms", chair.synonyms);

  PopeBuildFlags pope_build;
  auto* pb = app.add_subcommand("pope-build", "Build POPE yes/no questions");
  pb->add_option("--annotations", pope_build.annotations)->required();
  pb->add_option("--setting", pope_build.setting, "random | popular | adversarial");
  pb->add_option("--per-image", pope_build.per_image, "Questions per image (even)");
  pb->add_option("--seed", pope_build.seed);
  pb->add_option("--sample", pope_build.sample, "Use a seeded subset of N images");
  pb->add_option("--vocabulary", pope_build.vocabulary,
                 "Synonym map whose vocabulary supplies negative candidates");
  pb->add_option("--out", pope_build.out)->required();

  PopeScoreFlags pope_score;
  auto* ps = app.add_subcommand("pope-score", "Score answers to POPE questions");
  ps->add_option("--questions", pope_score.questions)->required();
  ps->add_option("--answers", pope_score.answers)->required();

  BenchFlags bench;
  auto* b = app.add_subcommand("bench", "Measure decoding latency in ms per output token");
  b->add_option("--backend", bench.backend.backend)->required();
  b->add_option("--timeout-ms", bench.backend.timeout_ms);
  b->add_option("--n-images", bench.n_images)->required();
  b->add_option("--max-tokens", bench.max_tokens);
  b->add_option("--query", bench.query);
  b->add_option("--guidance", bench.guidance);
  b->add_option("--gamma", bench.gamma);

  JudgeFlags judge;
  auto* j = app.add_subcommand("judge-prompt", "Render the pairwise judge prompt");
  j->add_option("--question", judge.question)->required();
  j->add_option("--answer1", judge.answer1)->required();
  j->add_option("--answer2", judge.answer2)->required();

  StubFlags stub;
  auto* s = app.add_subcommand("stub-server", "Serve the bridge protocol from a toy backend");
  s->add_option("--fixture", stub.fixture, "Table model fixture JSON");
  s->add_option("--echo-vocab", stub.echo_vocab, "Serve the echo backend with this vocab size");
  s->add_option("--eos", stub.eos, "EOS id for the echo backend");
  s->add_option("--delay-ms", stub.delay_ms, "Artificial delay per step");
  s->add_option("--listen", stub.listen, "TCP port (default: stdin/stdout)");
  s->add_option("--host", stub.host);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitInput;
  }

  try {
    if (g->parsed()) return cmd_guide(guide, out, err);
    if (c->parsed()) return cmd_chair(chair, out);
    if (pb->parsed()) return cmd_pope_build(pope_build, out, err);
    if (ps->parsed()) return cmd_pope_score(pope_score, out);
    if (b->parsed()) return cmd_bench(bench, out, err);
    if (j->parsed()) return cmd_judge(judge, out);
    if (s->parsed()) return cmd_stub_server(stub, err);
  } catch (const Error& e) {
    return report_error(e, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace groundguide
