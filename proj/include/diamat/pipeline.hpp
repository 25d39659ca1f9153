#pragma once
// End-to-end orchestration: each stage reads its declared inputs from the
// work directory, checks that they were produced under the same
// configuration, and writes its outputs.
//
//   synth     -> corpus.jsonl, synthetic/{source,human,machine}.txt, synthetic/vectors.vec
//   ingest    -> corpus.jsonl (text input only), splits/{train,validation,pattern,test}.jsonl
//   train     -> checkpoint.json, train_log.jsonl, train_summary.json
//   eval      -> predictions.jsonl, eval.json
//   sort      -> sorted.json
//   patterns  -> patterns.json
//   explain   -> explanations.jsonl
//   stats     -> stats.json

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "diamat/classifier.hpp"
#include "diamat/corpus.hpp"
#include "diamat/embed.hpp"
#include "diamat/explainer.hpp"
#include "diamat/sorter.hpp"
#include "diamat/stats.hpp"

namespace diamat {

struct PipelineConfig {
  std::string work_dir = "diamat-work";

  struct Corpus {
    std::string source, human, machine;  // line-aligned text files
    std::string manifest;                // or a JSON-lines manifest
  } corpus;

  struct Synth {
    bool enabled = false;
    BaseCorpusOptions base{9000, 1, 0.9, 0.7};
    std::vector<ArtifactSpec> artifacts{{ArtifactKind::unreduce_negation, 0.7, 11},
                                        {ArtifactKind::merge_sentences, 0.5, 12},
                                        {ArtifactKind::append_end_marker, 0.5, 13}};
    std::size_t vector_dim = 16;
    std::uint64_t vector_seed = 2;
  } synth;

  SplitSpec split{0.8, 0.1, 0.05, 0.05, 7};
  std::string vectors;  // defaults to the synthetic vectors when synth is enabled

  TrainConfig training;  // architecture.dim is taken from the vector file

  struct Eval {
    SidePolicy policy = SidePolicy::fixed_right();
  } eval;

  struct Explain {
    Method method = Method::pattern_attribution;
    double epsilon = 1e-6;
    Neuron target = Neuron::machine;
  } explain;

  SortKey sort;

  struct Stats {
    double alpha = 0.001;
    std::vector<PhenomenonSpec> phenomena{PhenomenonSpec::token("n't"), PhenomenonSpec::token("not"),
                                          PhenomenonSpec::multi_sentence(), PhenomenonSpec::end_marker_added()};
    NgramOptions ngrams;
  } stats;

  struct Serve {
    std::string host = "127.0.0.1";
    int port = 8080;
  } serve;

  // Optional artifact locations; empty means the default inside work_dir.
  struct Paths {
    std::string train, validation, pattern, test;
    std::string checkpoint, patterns, explanations, stats;
  } paths;

  std::filesystem::path path(const std::string& name) const { return std::filesystem::path(work_dir) / name; }
};

// ---------------------------------------------------------------------------
// JSON form of the configuration

inline nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json arts = nlohmann::json::array();
  for (const auto& a : c.synth.artifacts)
    arts.push_back({{"kind", to_string(a.kind)}, {"probability", a.probability}, {"seed", a.seed}});
  nlohmann::json phen = nlohmann::json::array();
  for (const auto& p : c.stats.phenomena) {
    nlohmann::json j{{"kind", kind_name(p.kind)}};
    if (p.kind == PhenomenonSpec::Kind::token_frequency) j["token"] = p.pattern;
    if (p.kind == PhenomenonSpec::Kind::ngram_frequency) j["ngram"] = p.pattern;
    phen.push_back(std::move(j));
  }
  const auto& t = c.training;
  return {
      {"work_dir", c.work_dir},
      {"corpus",
       {{"source", c.corpus.source}, {"human", c.corpus.human}, {"machine", c.corpus.machine},
        {"manifest", c.corpus.manifest}}},
      {"synth",
       {{"enabled", c.synth.enabled},
        {"samples", c.synth.base.samples},
        {"seed", c.synth.base.seed},
        {"multi_sentence_probability", c.synth.base.multi_sentence_probability},
        {"missing_end_marker_probability", c.synth.base.missing_end_marker_probability},
        {"artifacts", std::move(arts)},
        {"vector_dim", c.synth.vector_dim},
        {"vector_seed", c.synth.vector_seed}}},
      {"split",
       {{"train", c.split.train_fraction}, {"validation", c.split.validation_fraction},
        {"pattern", c.split.pattern_fraction}, {"test", c.split.test_fraction}, {"seed", c.split.seed}}},
      {"vectors", c.vectors},
      {"model",
       {{"max_len", t.architecture.max_len}, {"widths", t.architecture.widths},
        {"filters_per_width", t.architecture.filters_per_width}, {"use_bias", t.architecture.use_bias}}},
      {"training",
       {{"learning_rate", t.optimizer.learning_rate}, {"batch_size", t.batch_size}, {"clip_norm", t.optimizer.clip_norm},
        {"max_epochs", t.max_epochs}, {"patience", t.patience}, {"no_signal_margin", t.no_signal_margin},
        {"seed", t.seed}}},
      {"eval",
       {{"side_policy", c.eval.policy.kind == SidePolicy::Kind::fixed_right ? "fixed_right" : "random"},
        {"seed", c.eval.policy.seed}}},
      {"explain",
       {{"method", to_string(c.explain.method)}, {"epsilon", c.explain.epsilon}, {"target", to_string(c.explain.target)}}},
      {"sort",
       {{"activation", to_string(c.sort.activation)}, {"neuron", to_string(c.sort.neuron)},
        {"direction", to_string(c.sort.direction)}}},
      {"stats",
       {{"alpha", c.stats.alpha},
        {"phenomena", std::move(phen)},
        {"ngram_n", c.stats.ngrams.n},
        {"top_k", c.stats.ngrams.k},
        {"min_count", c.stats.ngrams.min_count},
        {"min_abs_score", c.stats.ngrams.min_abs_score}}},
      {"serve", {{"host", c.serve.host}, {"port", c.serve.port}}},
      {"paths",
       {{"train", c.paths.train}, {"validation", c.paths.validation}, {"pattern", c.paths.pattern},
        {"test", c.paths.test}, {"checkpoint", c.paths.checkpoint}, {"patterns", c.paths.patterns},
        {"explanations", c.paths.explanations}, {"stats", c.paths.stats}}},
  };
}

inline PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  try {
    c.work_dir = j.at("work_dir").get<std::string>();
    const auto& co = j.at("corpus");
    c.corpus = {co.at("source").get<std::string>(), co.at("human").get<std::string>(),
                co.at("machine").get<std::string>(), co.at("manifest").get<std::string>()};
    const auto& sy = j.at("synth");
    c.synth.enabled = sy.at("enabled").get<bool>();
    c.synth.base.samples = sy.at("samples").get<std::size_t>();
    c.synth.base.seed = sy.at("seed").get<std::uint64_t>();
    c.synth.base.multi_sentence_probability = sy.at("multi_sentence_probability").get<double>();
    c.synth.base.missing_end_marker_probability = sy.at("missing_end_marker_probability").get<double>();
    c.synth.artifacts.clear();
    for (const auto& a : sy.at("artifacts"))
      c.synth.artifacts.push_back({parse_artifact_kind(a.at("kind").get<std::string>()), a.at("probability").get<double>(),
                                   a.at("seed").get<std::uint64_t>()});
    c.synth.vector_dim = sy.at("vector_dim").get<std::size_t>();
    c.synth.vector_seed = sy.at("vector_seed").get<std::uint64_t>();
    const auto& sp = j.at("split");
    c.split = {sp.at("train").get<double>(), sp.at("validation").get<double>(), sp.at("pattern").get<double>(),
               sp.at("test").get<double>(), sp.at("seed").get<std::uint64_t>()};
    c.vectors = j.at("vectors").get<std::string>();
    const auto& m = j.at("model");
    auto& arch = c.training.architecture;
    arch.max_len = m.at("max_len").get<std::size_t>();
    arch.widths = m.at("widths").get<std::vector<std::size_t>>();
    arch.filters_per_width = m.at("filters_per_width").get<std::size_t>();
    arch.use_bias = m.at("use_bias").get<bool>();
    const auto& tr = j.at("training");
    c.training.optimizer.learning_rate = tr.at("learning_rate").get<double>();
    c.training.batch_size = tr.at("batch_size").get<std::size_t>();
    c.training.optimizer.clip_norm = tr.at("clip_norm").get<double>();
    c.training.max_epochs = tr.at("max_epochs").get<std::size_t>();
    c.training.patience = tr.at("patience").get<std::size_t>();
    c.training.no_signal_margin = tr.at("no_signal_margin").get<double>();
    c.training.seed = tr.at("seed").get<std::uint64_t>();
    const auto& ev = j.at("eval");
    const auto policy = ev.at("side_policy").get<std::string>();
    if (policy == "fixed_right") c.eval.policy = SidePolicy::fixed_right();
    else if (policy == "random") c.eval.policy = SidePolicy::random(ev.at("seed").get<std::uint64_t>());
    else throw ConfigError("side_policy must be fixed_right or random");
    c.eval.policy.seed = ev.at("seed").get<std::uint64_t>();
    const auto& ex = j.at("explain");
    c.explain.method = parse_method(ex.at("method").get<std::string>());
    c.explain.epsilon = ex.at("epsilon").get<double>();
    c.explain.target = parse_neuron(ex.at("target").get<std::string>());
    const auto& so = j.at("sort");
    c.sort = {parse_activation(so.at("activation").get<std::string>()), parse_neuron(so.at("neuron").get<std::string>()),
              parse_direction(so.at("direction").get<std::string>())};
    const auto& st = j.at("stats");
    c.stats.alpha = st.at("alpha").get<double>();
    c.stats.phenomena.clear();
    for (const auto& p : st.at("phenomena")) c.stats.phenomena.push_back(parse_phenomenon(p));
    c.stats.ngrams.n = st.at("ngram_n").get<std::size_t>();
    c.stats.ngrams.k = st.at("top_k").get<std::size_t>();
    c.stats.ngrams.min_count = st.at("min_count").get<std::size_t>();
    c.stats.ngrams.min_abs_score = st.at("min_abs_score").get<double>();
    c.stats.ngrams.alpha = c.stats.alpha;
    const auto& se = j.at("serve");
    c.serve.host = se.at("host").get<std::string>();
    c.serve.port = se.at("port").get<int>();
    const auto& pa = j.at("paths");
    c.paths = {pa.at("train").get<std::string>(),      pa.at("validation").get<std::string>(),
               pa.at("pattern").get<std::string>(),    pa.at("test").get<std::string>(),
               pa.at("checkpoint").get<std::string>(), pa.at("patterns").get<std::string>(),
               pa.at("explanations").get<std::string>(), pa.at("stats").get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.split.validate();
  c.training.architecture.dim = 1;  // placeholder until vectors are read
  c.training.architecture.validate();
  return c;
}

// Applies a (partial) JSON document on top of `base`.
inline PipelineConfig merge_config(const PipelineConfig& base, const nlohmann::json& patch) {
  auto j = to_json(base);
  j.merge_patch(patch);
  return config_from_json(j);
}

inline PipelineConfig load_config(const std::string& path, const PipelineConfig& base = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config " + path);
  try {
    return merge_config(base, nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
}

// Provenance checksums. Each artifact is stamped with the checksum of the
// configuration sections that shape it, so e.g. switching the explanation
// method does not invalidate a trained checkpoint. Locations, the sort key
// and the server address never enter a checksum.
enum class Scope { data, model, eval, explain, stats };

inline std::string config_checksum(const PipelineConfig& c, Scope scope = Scope::explain) {
  const auto full = to_json(c);
  std::vector<const char*> keys{"corpus", "synth", "split"};
  if (scope != Scope::data) keys.insert(keys.end(), {"vectors", "model", "training"});
  if (scope == Scope::eval) keys.push_back("eval");
  if (scope == Scope::explain || scope == Scope::stats) keys.push_back("explain");
  if (scope == Scope::stats) keys.push_back("stats");
  nlohmann::json j = nlohmann::json::object();
  for (const char* k : keys) j[k] = full.at(k);
  return checksum_hex(j.dump());
}

// ---------------------------------------------------------------------------
// Stages

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg, std::ostream* log = &std::cerr)
      : cfg_(std::move(cfg)), log_(log) {}

  const PipelineConfig& config() const { return cfg_; }
  std::string checksum(Scope scope = Scope::explain) const { return config_checksum(cfg_, scope); }

  void synth() {
    ensure_dir(cfg_.path("synthetic"));
    say("synth", "generating " + std::to_string(cfg_.synth.base.samples) + " samples");
    const auto base = generate_base_corpus(cfg_.synth.base);
    const auto samples = synthesize_machine_corpus(base, cfg_.synth.artifacts);
    write_manifest(cfg_.path("corpus.jsonl").string(), samples);
    {
      std::ofstream src(cfg_.path("synthetic/source.txt")), hum(cfg_.path("synthetic/human.txt")),
          mac(cfg_.path("synthetic/machine.txt"));
      for (const auto& s : samples) {
        src << s.source << '\n';
        hum << s.human_translation << '\n';
        mac << s.machine_translation << '\n';
      }
    }
    const auto table = synthesize_vectors(samples, cfg_.synth.vector_dim, cfg_.synth.vector_seed);
    std::ofstream vec(cfg_.path("synthetic/vectors.vec"), std::ios::binary);
    write_vectors(vec, table);
    write_meta(cfg_.path("corpus.meta.json"), {{"samples", samples.size()}, {"origin", "synthetic"}}, Scope::data);
  }

  void ingest() {
    ensure_dir(cfg_.path("splits"));
    std::vector<ParallelSample> samples;
    if (!cfg_.corpus.manifest.empty()) {
      samples = read_manifest(cfg_.corpus.manifest);
      write_manifest(cfg_.path("corpus.jsonl").string(), samples);
      write_meta(cfg_.path("corpus.meta.json"), {{"samples", samples.size()}, {"origin", "manifest"}}, Scope::data);
    } else if (cfg_.synth.enabled) {
      require(cfg_.path("corpus.meta.json"), "synth", Scope::data);
      samples = read_manifest(cfg_.path("corpus.jsonl").string());
    } else {
      if (cfg_.corpus.source.empty() || cfg_.corpus.human.empty() || cfg_.corpus.machine.empty())
        throw ConfigError("ingest needs corpus.source, corpus.human and corpus.machine (or corpus.manifest)");
      auto loaded = load_corpus(cfg_.corpus.source, cfg_.corpus.human, cfg_.corpus.machine);
      say("ingest", std::to_string(loaded.samples.size()) + " samples, " + std::to_string(loaded.skipped) +
                        " lines skipped (empty field)");
      samples = std::move(loaded.samples);
      write_manifest(cfg_.path("corpus.jsonl").string(), samples);
      write_meta(cfg_.path("corpus.meta.json"),
                 {{"samples", samples.size()}, {"skipped", loaded.skipped}, {"origin", "real"}}, Scope::data);
    }
    const auto splits = split_corpus(samples, cfg_.split);
    write_manifest(cfg_.path("splits/train.jsonl").string(), splits.train);
    write_manifest(cfg_.path("splits/validation.jsonl").string(), splits.validation);
    write_manifest(cfg_.path("splits/pattern.jsonl").string(), splits.pattern);
    write_manifest(cfg_.path("splits/test.jsonl").string(), splits.test);
    write_meta(cfg_.path("splits/meta.json"), {{"train", splits.train.size()},
                                               {"validation", splits.validation.size()},
                                               {"pattern", splits.pattern.size()},
                                               {"test", splits.test.size()}}, Scope::data);
    say("ingest", "splits train/validation/pattern/test = " + std::to_string(splits.train.size()) + "/" +
                      std::to_string(splits.validation.size()) + "/" + std::to_string(splits.pattern.size()) + "/" +
                      std::to_string(splits.test.size()));
  }

  TrainResult train() {
    const auto train_set = split("train");
    const auto valid_set = split("validation");
    const auto table = vectors();
    auto tc = cfg_.training;
    tc.architecture.dim = table.dimension;
    ensure_dir(cfg_.path(""));
    std::ofstream log(cfg_.path("train_log.jsonl"), std::ios::binary);
    auto result = diamat::train(train_set, valid_set, table, tc, [&](const TrainLogEntry& e) {
      log << to_json(e).dump() << '\n';
      if (e.validation_accuracy)
        say("train", "epoch " + std::to_string(e.epoch) + " loss " + fmt(e.loss) + " validation accuracy " +
                         fmt(*e.validation_accuracy));
    });
    save_checkpoint(checkpoint_path().string(), {result.params, tc.seed, checksum(Scope::model)});
    write_meta(cfg_.path("train_summary.json"), {{"best_validation_accuracy", result.best_validation_accuracy},
                                                 {"best_epoch", result.best_epoch},
                                                 {"no_signal", result.no_signal}}, Scope::model);
    if (result.no_signal)
      say("train", "WARNING: no signal learned (best validation accuracy " + fmt(result.best_validation_accuracy) +
                       " <= 0.5 + " + fmt(tc.no_signal_margin) + ")");
    return result;
  }

  EvalResult eval() {
    const auto ck = checkpoint();
    const auto test = split("test");
    const auto table = vectors();
    auto r = evaluate(test, ck.params, table, cfg_.eval.policy);
    std::ofstream out(cfg_.path("predictions.jsonl"), std::ios::binary);
    for (const auto& p : r.predictions) out << prediction_json(p).dump() << '\n';
    write_meta(cfg_.path("eval.json"),
               {{"accuracy", r.accuracy},
                {"samples", r.predictions.size()},
                {"side_policy", cfg_.eval.policy.kind == SidePolicy::Kind::fixed_right ? "fixed_right" : "random"}}, Scope::eval);
    say("eval", "test accuracy " + fmt(r.accuracy) + " over " + std::to_string(r.predictions.size()) + " samples");
    return r;
  }

  std::vector<std::int64_t> sort() {
    require(cfg_.path("eval.json"), "eval", Scope::eval);
    std::vector<Prediction> preds;
    std::ifstream in(cfg_.path("predictions.jsonl"), std::ios::binary);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) preds.push_back(prediction_from_json(nlohmann::json::parse(line)));
    auto ids = sort_predictions(preds, cfg_.sort);
    std::ofstream out(cfg_.path("sorted.json"), std::ios::binary);
    out << nlohmann::json{{"config_checksum", checksum(Scope::eval)},
                          {"key",
                           {{"activation", to_string(cfg_.sort.activation)},
                            {"neuron", to_string(cfg_.sort.neuron)},
                            {"direction", to_string(cfg_.sort.direction)}}},
                          {"ids", ids}}
               .dump()
        << '\n';
    return ids;
  }

  PatternSet patterns() {
    const auto ck = checkpoint();
    const auto pattern_set = split("pattern");
    const auto table = vectors();
    auto set = learn_patterns(pattern_set, ck.params, table);
    auto j = to_json(set);
    j["config_checksum"] = checksum(Scope::model);
    std::ofstream out(patterns_path(), std::ios::binary);
    if (!out) throw DataError("cannot write " + patterns_path().string());
    out << j.dump() << '\n';
    say("patterns", "learned from " + std::to_string(pattern_set.size()) + " samples");
    return set;
  }

  std::vector<Explanation> explain() { return explain(cfg_.explain.method, true); }

  // `write` = false computes the store without touching the work dir.
  std::vector<Explanation> explain(Method method, bool write) {
    const auto ck = checkpoint();
    const auto ck_sum = file_checksum(checkpoint_path());
    const auto test = split("test");
    const auto table = vectors();
    PatternSet pats;
    if (method == Method::pattern_attribution) {
      require(patterns_path(), "patterns", Scope::model);
      pats = patterns_from_json(read_json(patterns_path()));
      check_patterns(pats, ck.params);
    }
    std::vector<Explanation> store;
    store.reserve(test.size());
    ForwardCache cache;
    for (const auto& s : test) {
      const auto t = embed_triple(s, Side::right, table, ck.params.config.max_len);
      const auto pred = forward(t, ck.params, cache);
      const auto map = method == Method::lrp_epsilon
                           ? lrp_epsilon(t, ck.params, cache, cfg_.explain.target, cfg_.explain.epsilon)
                           : pattern_attribution(t, ck.params, pats, cache, cfg_.explain.target, false);
      auto e = project_to_tokens(map, t, pred, method);
      e.checkpoint = ck_sum;
      e.config_checksum = checksum(Scope::explain);
      for (std::size_t b = 0; b < 3; ++b)
        for (const auto& ts : e.input(b))
          if (!std::isfinite(ts.score)) throw NumericError("non-finite relevance for sample " + std::to_string(s.id));
      store.push_back(std::move(e));
    }
    if (write) {
      write_explanations(explanations_path().string(), store);
      say("explain", std::to_string(store.size()) + " explanations (" + std::string(to_string(method)) + ")");
    }
    return store;
  }

  nlohmann::json stats() {
    const auto test = split("test");
    auto phen = test_phenomena(test, cfg_.stats.phenomena, cfg_.stats.alpha);
    std::vector<NgramScore> grams;
    if (std::filesystem::exists(explanations_path())) {
      const auto store = explanations();
      auto opt = cfg_.stats.ngrams;
      opt.alpha = cfg_.stats.alpha;
      grams = top_discriminative_ngrams(store, opt);
    }
    auto report = stats_report(phen, grams, cfg_.stats.alpha, cfg_.stats.ngrams.n);
    report["config_checksum"] = checksum(Scope::stats);
    std::ofstream out(stats_path(), std::ios::binary);
    if (!out) throw DataError("cannot write " + stats_path().string());
    out << report.dump(2) << '\n';
    return report;
  }

  void all() {
    if (cfg_.synth.enabled) synth();
    ingest();
    train();
    eval();
    sort();
    if (cfg_.explain.method == Method::pattern_attribution) patterns();
    explain();
    stats();
  }

  // Artifact locations.

  std::filesystem::path checkpoint_path() const { return located(cfg_.paths.checkpoint, "checkpoint.json"); }
  std::filesystem::path patterns_path() const { return located(cfg_.paths.patterns, "patterns.json"); }
  std::filesystem::path explanations_path() const { return located(cfg_.paths.explanations, "explanations.jsonl"); }
  std::filesystem::path stats_path() const { return located(cfg_.paths.stats, "stats.json"); }

  // Loaded artifacts, each checked against this configuration.

  std::vector<ParallelSample> split(const std::string& name) {
    const std::string& custom = name == "train"        ? cfg_.paths.train
                                : name == "validation" ? cfg_.paths.validation
                                : name == "pattern"    ? cfg_.paths.pattern
                                                       : cfg_.paths.test;
    if (!custom.empty()) return read_manifest(custom);
    require(cfg_.path("splits/meta.json"), "ingest", Scope::data);
    return read_manifest(cfg_.path("splits/" + name + ".jsonl").string());
  }

  Checkpoint checkpoint() {
    if (!std::filesystem::exists(checkpoint_path())) throw DataError("checkpoint missing; run train");
    auto ck = load_checkpoint(checkpoint_path().string());
    if (ck.config_checksum != checksum(Scope::model))
      throw DataError(checkpoint_path().string() + " was produced under config " + ck.config_checksum +
                      ", current config is " + checksum(Scope::model) + "; rerun train");
    return ck;
  }

  std::vector<Explanation> explanations() {
    if (!std::filesystem::exists(explanations_path())) throw DataError("explanation store missing; run explain");
    auto store = read_explanations(explanations_path().string());
    for (const auto& e : store)
      if (e.config_checksum != checksum(Scope::explain))
        throw DataError(explanations_path().string() + " was produced under config " + e.config_checksum +
                        "; rerun explain");
    return store;
  }

  VectorTable vectors() {
    std::string path = cfg_.vectors;
    if (path.empty()) {
      if (!cfg_.synth.enabled) throw ConfigError("no vector file configured (set vectors or --vectors)");
      path = cfg_.path("synthetic/vectors.vec").string();
      if (!std::filesystem::exists(path)) throw DataError("vectors missing; run synth");
    }
    auto t = parse_vector_file(path);
    if (t.skipped_lines) say("embed", "warning: skipped " + std::to_string(t.skipped_lines) + " malformed vector lines");
    return t;
  }

  static nlohmann::json prediction_json(const Prediction& p) {
    return {{"sample_id", p.sample_id},
            {"logits", p.logits},
            {"softmax", p.softmax},
            {"predicted_side", to_string(p.predicted_side)},
            {"true_side", to_string(p.true_side)}};
  }

  static Prediction prediction_from_json(const nlohmann::json& j) {
    Prediction p;
    p.sample_id = j.at("sample_id").get<std::int64_t>();
    p.logits = j.at("logits").get<std::array<double, 2>>();
    p.softmax = j.at("softmax").get<std::array<double, 2>>();
    p.predicted_side = parse_side(j.at("predicted_side").get<std::string>());
    p.true_side = parse_side(j.at("true_side").get<std::string>());
    return p;
  }

  static nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    try {
      return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  }

  static std::string file_checksum(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return checksum_hex(ss.str());
  }

 private:
  std::filesystem::path located(const std::string& custom, const std::string& name) const {
    return custom.empty() ? cfg_.path(name) : std::filesystem::path(custom);
  }

  // Missing artifact -> name the stage that makes it; foreign artifact ->
  // checksum mismatch.
  void require(const std::filesystem::path& path, const std::string& producer, Scope scope) const {
    if (!std::filesystem::exists(path)) throw DataError(path.filename().string() + " missing; run " + producer);
    const auto sum = read_json(path).value("config_checksum", "");
    if (sum != checksum(scope))
      throw DataError(path.string() + " was produced under config " + sum + ", current config is " + checksum(scope) +
                      "; rerun " + producer);
  }

  void write_meta(const std::filesystem::path& path, nlohmann::json j, Scope scope) const {
    j["config_checksum"] = checksum(scope);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump() << '\n';
  }

  static void ensure_dir(const std::filesystem::path& p) { std::filesystem::create_directories(p); }

  void say(const std::string& stage, const std::string& msg) const {
    if (log_) *log_ << "[" << stage << "] " << msg << '\n';
  }

  static std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
  }

  PipelineConfig cfg_;
  std::ostream* log_;
};

}  // namespace diamat
