// diamat: command-line driver for the translation diagnostics pipeline.
//
//   diamat synth --config cfg.json
//   diamat all --config cfg.json --work-dir out
//   diamat serve --work-dir out --port 8080
//
// Exit codes: 0 success, 1 usage or configuration, 2 data, 3 numeric.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "diamat/pipeline.hpp"
#include "diamat/service.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string work_dir;
  std::string vectors;
  std::optional<std::size_t> max_len;
  std::string method;
  std::optional<std::uint64_t> seed;
  bool synthetic = false;

  std::string train, valid, checkpoint;
  std::string key, neuron, direction;
  std::string side_policy;
  std::optional<std::uint64_t> side_seed;
  std::string host;
  std::optional<int> port;
};

diamat::PipelineConfig resolve(const Overrides& o) {
  diamat::PipelineConfig c;
  if (!o.config.empty()) c = diamat::load_config(o.config);
  nlohmann::json patch = nlohmann::json::object();
  if (!o.work_dir.empty()) patch["work_dir"] = o.work_dir;
  if (!o.vectors.empty()) patch["vectors"] = o.vectors;
  if (o.max_len) patch["model"]["max_len"] = *o.max_len;
  if (!o.method.empty()) patch["explain"]["method"] = o.method;
  if (o.seed) patch["training"]["seed"] = *o.seed;
  if (o.synthetic) patch["synth"]["enabled"] = true;
  if (!o.train.empty()) patch["paths"]["train"] = o.train;
  if (!o.valid.empty()) patch["paths"]["validation"] = o.valid;
  if (!o.checkpoint.empty()) patch["paths"]["checkpoint"] = o.checkpoint;
  if (!o.key.empty()) patch["sort"]["activation"] = o.key;
  if (!o.neuron.empty()) patch["sort"]["neuron"] = o.neuron;
  if (!o.direction.empty()) patch["sort"]["direction"] = o.direction;
  if (!o.side_policy.empty()) patch["eval"]["side_policy"] = o.side_policy;
  if (o.side_seed) patch["eval"]["seed"] = *o.side_seed;
  if (!o.host.empty()) patch["serve"]["host"] = o.host;
  if (o.port) patch["serve"]["port"] = *o.port;
  return diamat::merge_config(c, patch);
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

int serve(diamat::Pipeline& pipe) {
  const auto& cfg = pipe.config();
  auto store = pipe.explanations();
  std::optional<std::string> stats;
  if (std::filesystem::exists(pipe.stats_path())) {
    std::ifstream in(pipe.stats_path(), std::ios::binary);
    stats = std::string(std::istreambuf_iterator<char>(in), {});
  }
  nlohmann::json meta{{"checkpoint", store.empty() ? "" : store.front().checkpoint},
                      {"config_checksum", pipe.checksum()},
                      {"method", store.empty() ? "" : std::string(diamat::to_string(store.front().method))},
                      {"corpus_size", store.size()}};
  diamat::Api api(std::move(store), std::move(stats), std::move(meta));
  httplib::Server server;
  diamat::register_routes(server, api);
  g_server = &server;
  std::signal(SIGINT, stop_server);
  std::signal(SIGTERM, stop_server);
  std::cerr << "[serve] listening on http://" << cfg.serve.host << ":" << cfg.serve.port << '\n';
  if (!server.listen(cfg.serve.host, cfg.serve.port)) {
    std::cerr << "error: cannot bind " << cfg.serve.host << ":" << cfg.serve.port << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diagnose machine translation with an explained left/right classifier"};
  app.require_subcommand(1);
  app.fallthrough();
  Overrides o;
  app.add_option("--config", o.config, "JSON configuration document")->check(CLI::ExistingFile);
  app.add_option("--work-dir", o.work_dir, "directory for all pipeline artifacts");
  app.add_option("--vectors", o.vectors, "word-vector file (text format)");
  app.add_option("--max-len", o.max_len, "tokens kept per sentence");
  app.add_option("--method", o.method, "lrp_epsilon or pattern_attribution");
  app.add_option("--seed", o.seed, "training seed");
  app.add_flag("--synthetic", o.synthetic, "use the generated synthetic corpus and vectors");

  const char* names[][2] = {{"synth", "generate the synthetic corpus and word vectors"},
                            {"ingest", "load the corpus and write the splits"},
                            {"train", "train the classifier"},
                            {"eval", "evaluate on the test split"},
                            {"sort", "order test predictions by confidence"},
                            {"patterns", "learn PatternAttribution patterns"},
                            {"explain", "write the explanation store for the test split"},
                            {"stats", "run the phenomenon significance tests"},
                            {"serve", "serve the explanation store over HTTP"},
                            {"all", "run every stage in order"}};
  std::map<std::string, CLI::App*> sub;
  for (auto& n : names) sub[n[0]] = app.add_subcommand(n[0], n[1]);
  sub["train"]->add_option("--train", o.train, "training split manifest");
  sub["train"]->add_option("--valid", o.valid, "validation split manifest");
  sub["train"]->add_option("--out-checkpoint", o.checkpoint, "checkpoint output path");
  sub["sort"]->add_option("--key", o.key, "logit or softmax");
  sub["sort"]->add_option("--neuron", o.neuron, "machine or human");
  sub["sort"]->add_option("--direction", o.direction, "descending or ascending");
  sub["eval"]->add_option("--side-policy", o.side_policy, "fixed_right or random");
  sub["eval"]->add_option("--side-seed", o.side_seed, "seed for the random side policy");
  sub["serve"]->add_option("--host", o.host, "bind address");
  sub["serve"]->add_option("--port", o.port, "bind port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    diamat::Pipeline pipe(resolve(o));
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "synth") pipe.synth();
    else if (cmd == "ingest") pipe.ingest();
    else if (cmd == "train") pipe.train();
    else if (cmd == "eval") pipe.eval();
    else if (cmd == "sort") std::cout << nlohmann::json(pipe.sort()).dump() << '\n';
    else if (cmd == "patterns") pipe.patterns();
    else if (cmd == "explain") pipe.explain();
    else if (cmd == "stats") std::cout << diamat::render_report(pipe.stats());
    else if (cmd == "serve") return serve(pipe);
    else if (cmd == "all") pipe.all();
    return 0;
  } catch (const diamat::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const diamat::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const diamat::NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed artifact: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
