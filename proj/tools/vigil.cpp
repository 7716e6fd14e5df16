// vigil: evaluation harness, validators and the HTTP backend.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "vigil/vigil.hpp"

namespace {

using nlohmann::json;
using namespace vigil;

#ifndef VIGIL_DATA_DIR
#define VIGIL_DATA_DIR "data"
#endif

std::string data_path(const char* name) { return std::string(VIGIL_DATA_DIR) + "/" + name; }

struct BackendFlags {
  std::string tier = "pattern";
  std::string endpoint;
  std::string model;
  std::string credential_env;
  std::int64_t timeout_ms = 60'000;
  std::string transcript;

  void add_to(CLI::App& app) {
    app.add_option("--backend-tier", tier, "pattern | in-browser | local-api | cloud-api")->capture_default_str();
    app.add_option("--endpoint", endpoint, "chat-completion URL");
    app.add_option("--model", model, "model id");
    app.add_option("--credential-env", credential_env, "environment variable holding the API key");
    app.add_option("--timeout-ms", timeout_ms, "per-request timeout")->capture_default_str();
    app.add_option("--transcript", transcript, "replay completions from a transcript file instead of the network");
  }

  [[nodiscard]] BackendConfig config() const {
    BackendConfig c;
    c.tier = parse_tier(tier);
    c.endpoint = endpoint;
    c.model_id = model;
    c.credential_env = credential_env;
    c.timeout_ms = timeout_ms;
    if (!transcript.empty()) {
      if (!c.network_allowed()) c.tier = Tier::local_api;
      if (c.endpoint.empty()) c.endpoint = "http://transcript.invalid/v1/chat/completions";
      if (c.model_id.empty()) c.model_id = "mock-model";
    }
    c.validate();
    return c;
  }

  [[nodiscard]] std::shared_ptr<Transport> transport() const {
    if (transcript.empty()) return std::make_shared<HttpTransport>();
    return std::make_shared<TranscriptTransport>(parse_transcript(read_file(transcript)));
  }
};

void write_report(const std::string& path, const json& report) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path);
  out << dump_json(report, 2) << '\n';
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

void print_metrics(const eval::MetricReport& r) {
  std::cout << "N          " << r.n << '\n'
            << "precision  " << fmt(r.precision.to_double()) << "  (" << r.precision.str() << ")\n"
            << "recall     " << fmt(r.recall.to_double()) << "  (" << r.recall.str() << ")\n"
            << "f1         " << fmt(r.f1.to_double()) << "  (" << r.f1.str() << ")\n";
  if (r.macro_f1) std::cout << "macro_f1   " << fmt(r.macro_f1->to_double()) << "  (" << r.macro_f1->str() << ")\n";
  std::cout << "\nlabel                                  TP   FP   FN\n";
  for (const auto& [label, c] : r.per_label) {
    std::cout << std::left << std::setw(38) << label << std::right << std::setw(4) << c.tp << std::setw(5) << c.fp
              << std::setw(5) << c.fn << '\n';
  }
}

std::shared_ptr<const Taxonomy> load_tax(const std::string& path) {
  return std::make_shared<const Taxonomy>(load_taxonomy_file(path));
}

int run_serve(const std::string& listen, const std::string& taxonomy_path, const std::string& rules_path,
              const BackendFlags& backend_flags, const std::string& cors_origin) {
  auto taxonomy = load_tax(taxonomy_path);
  auto matcher = std::make_shared<const CompiledMatcher>(compile_rules(*taxonomy, load_rules(read_file(rules_path))));
  const auto backend = backend_flags.config();
  const auto completer = make_completer(backend_flags.transport());
  auto registry = std::make_shared<PluginRegistry>();
  register_plugin(*registry, make_regex_plugin(matcher));
  register_plugin(*registry, make_cbt_llm_plugin(taxonomy, completer));
  register_plugin(*registry, make_moralization_plugin(taxonomy, completer));

  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::configuration, "--listen expects host:port");
  const auto host = listen.substr(0, colon);
  const int port = std::stoi(listen.substr(colon + 1));

  VigilService service(taxonomy, registry, backend, completer, ServiceConfig{std::string(kServerVersion), cors_origin});
  httplib::Server server;
  service.bind(server);
  std::cerr << "vigil listening on " << host << ":" << port << " (backend " << to_string(backend.tier) << ")\n";
  if (!server.listen(host, port)) throw Error(ErrorCode::io, "cannot listen on " + listen);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vigil: cognitive-bias trigger detection toolkit"};
  app.require_subcommand(1);

  std::string taxonomy_path = data_path("taxonomy.json");
  std::string rules_path = data_path("rules.json");
  std::string report_path;
  BackendFlags backend;

  // eval-cbt
  auto* cbt = app.add_subcommand("eval-cbt", "micro-F1 of LLM technique detection on a SemEval-format dataset");
  std::string dataset;
  std::string aliases_path;
  std::string mode = "benchmark";
  std::size_t jobs = 1;
  std::string errors_path;
  cbt->add_option("--dataset", dataset, "directory with labels.tsv and articles/")->required();
  cbt->add_option("--taxonomy", taxonomy_path)->capture_default_str();
  cbt->add_option("--aliases", aliases_path, "extra label aliases (TSV: alias, trigger id)");
  cbt->add_option("--mode", mode, "benchmark | production")->capture_default_str();
  cbt->add_option("--jobs", jobs, "parallel backend calls")->capture_default_str();
  cbt->add_option("--report", report_path, "write the JSON report here");
  cbt->add_option("--errors", errors_path, "write the per-article error log here (JSON lines)");
  backend.add_to(*cbt);

  // eval-moralization
  auto* mor = app.add_subcommand("eval-moralization", "macro-F1 and PABAK of moralization detection");
  std::string locale = "de";
  mor->add_option("--dataset", dataset, "JSON lines: id, text, gold, raters")->required();
  mor->add_option("--locale", locale)->capture_default_str();
  mor->add_option("--taxonomy", taxonomy_path)->capture_default_str();
  mor->add_option("--report", report_path);
  mor->add_option("--errors", errors_path);
  backend.add_to(*mor);

  // bench-latency
  auto* bench = app.add_subcommand("bench-latency", "median and P95 detect latency over the bench corpus");
  std::string corpus_path = data_path("bench_corpus.json");
  std::string plugin = std::string(kRegexPluginId);
  std::size_t repetitions = 0;
  eval::BinThresholds bins;
  bool cached_pass = false;
  bench->add_option("--corpus", corpus_path)->capture_default_str();
  bench->add_option("--taxonomy", taxonomy_path)->capture_default_str();
  bench->add_option("--rules", rules_path)->capture_default_str();
  bench->add_option("--plugin", plugin)->capture_default_str();
  bench->add_option("--repetitions", repetitions, "per text (default 50 for pattern tier, 20 otherwise)");
  bench->add_option("--short-max", bins.short_max, "upper bound of the short bin in characters")->capture_default_str();
  bench->add_option("--medium-max", bins.medium_max, "upper bound of the medium bin")->capture_default_str();
  bench->add_flag("--cached", cached_pass, "also report a second, cache-served pass");
  bench->add_option("--report", report_path);
  backend.add_to(*bench);

  // validate-taxonomy
  auto* val = app.add_subcommand("validate-taxonomy", "check the taxonomy (and optionally a rule file)");
  std::string val_rules;
  bool canonical = false;
  val->add_option("--taxonomy", taxonomy_path)->capture_default_str();
  val->add_option("--rules", val_rules, "also compile this rule file");
  val->add_flag("--canonical", canonical, "require the file to be in canonical serialization");

  // agreement
  auto* agr = app.add_subcommand("agreement", "PABAK of model vs raters");
  std::string agr_input;
  double observed = -1.0;
  auto* input_opt = agr->add_option("--input", agr_input, "JSON {\"model\": [0|1...], \"raters\": [[0|1...]...]}");
  auto* obs_opt = agr->add_option("--observed", observed, "observed agreement p_o in [0,1]");
  input_opt->excludes(obs_opt);
  agr->add_option("--report", report_path);

  // serve
  auto* serve = app.add_subcommand("serve", "run the HTTP backend");
  std::string listen = "127.0.0.1:8080";
  std::string cors_origin;
  serve->add_option("--listen", listen)->capture_default_str();
  serve->add_option("--taxonomy", taxonomy_path)->capture_default_str();
  serve->add_option("--rules", rules_path)->capture_default_str();
  serve->add_option("--cors-origin", cors_origin, "extension origin allowed to call the backend");
  backend.add_to(*serve);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cbt) {
      auto taxonomy = load_tax(taxonomy_path);
      auto aliases = eval::LabelAliases::from_taxonomy(*taxonomy);
      if (!aliases_path.empty()) aliases.load_tsv(read_file(aliases_path), *taxonomy);
      const auto ds = eval::load_cbt_dataset(dataset, *taxonomy, aliases);
      const auto prompt_mode = mode == "production" ? PromptMode::production : PromptMode::benchmark;
      if (mode != "production" && mode != "benchmark") throw Error(ErrorCode::invalid_argument, "--mode " + mode);
      const auto run = eval::run_cbt_eval(ds, *taxonomy, backend.config(), prompt_mode,
                                          make_completer(backend.transport()), jobs);
      json report = eval::to_json(run.report);
      json errors = json::array();
      for (const auto& e : run.errors) errors.push_back({{"article_id", e.article_id}, {"error", e.message}});
      report["errors"] = errors;
      json predicted = json::object();
      for (const auto& [id, labels] : run.predicted) predicted[id] = labels;
      report["predicted"] = predicted;
      write_report(report_path, report);
      if (!errors_path.empty()) {
        std::ofstream out(errors_path, std::ios::trunc);
        for (const auto& e : errors) out << e.dump() << '\n';
      }
      print_metrics(run.report);
      if (!run.errors.empty()) std::cout << '\n' << run.errors.size() << " article(s) had unparseable output\n";
    } else if (*mor) {
      auto taxonomy = load_tax(taxonomy_path);
      const auto data = eval::load_moralization_dataset(read_file(dataset));
      const auto run = eval::run_moralization_eval(data, *taxonomy, backend.config(), locale,
                                                   make_completer(backend.transport()));
      json report = eval::to_json(run.report);
      if (run.agreement) report["agreement"] = eval::to_json(*run.agreement);
      json errors = json::array();
      for (const auto& e : run.errors) errors.push_back({{"id", e.article_id}, {"error", e.message}});
      report["errors"] = errors;
      write_report(report_path, report);
      if (!errors_path.empty()) {
        std::ofstream out(errors_path, std::ios::trunc);
        for (const auto& e : errors) out << e.dump() << '\n';
      }
      print_metrics(run.report);
      if (run.agreement) {
        std::cout << "\nPABAK model vs raters (mean) " << fmt(run.agreement->model_vs_raters.to_double()) << '\n'
                  << "PABAK model vs majority      " << fmt(run.agreement->model_vs_majority.to_double()) << '\n';
        if (run.agreement->rater_vs_rater) {
          std::cout << "PABAK rater vs rater (mean)  " << fmt(run.agreement->rater_vs_rater->to_double()) << '\n';
        }
      }
    } else if (*bench) {
      auto taxonomy = load_tax(taxonomy_path);
      const auto corpus = eval::load_bench_corpus(read_file(corpus_path), bins);
      const auto cfg = backend.config();
      PluginRegistry registry;
      if (plugin == kRegexPluginId) {
        auto matcher =
            std::make_shared<const CompiledMatcher>(compile_rules(*taxonomy, load_rules(read_file(rules_path))));
        register_plugin(registry, make_regex_plugin(matcher));
      } else if (plugin == kCbtLlmPluginId) {
        register_plugin(registry, make_cbt_llm_plugin(taxonomy, make_completer(backend.transport())));
      } else {
        throw Error(ErrorCode::unknown_plugin, plugin);
      }
      if (repetitions == 0) repetitions = cfg.tier == Tier::pattern ? 50 : 20;
      ResultCache cache;
      const auto run_with = [&](ResultCache* c) {
        return [&, c](const std::string& text) {
          AnalysisRequest req;
          req.text = text;
          req.plugin_ids = {plugin};
          req.backend = cfg;
          (void)analyze(registry, req, *taxonomy, c);
        };
      };
      const auto tier = std::string(to_string(cfg.tier));
      const auto report = eval::bench_latency(corpus, run_with(nullptr), repetitions, tier);
      json out = eval::to_json(report);
      std::cout << "tier " << tier << ", N=" << report.overall.n << "\n\nbin      median_ms    p95_ms\n";
      for (const auto& [bin, s] : report.per_bin) {
        std::cout << std::left << std::setw(8) << bin << std::right << std::setw(10) << fmt(s.median_ms) << std::setw(10)
                  << fmt(s.p95_ms) << '\n';
      }
      std::cout << std::left << std::setw(8) << "overall" << std::right << std::setw(10) << fmt(report.overall.median_ms)
                << std::setw(10) << fmt(report.overall.p95_ms) << '\n';
      if (cached_pass) {
        for (const auto& t : corpus) run_with(&cache)(t.text);
        const auto cached = eval::bench_latency(corpus, run_with(&cache), repetitions, tier);
        out["cached"] = eval::to_json(cached);
        std::cout << "cached   " << std::setw(10) << fmt(cached.overall.median_ms) << std::setw(10)
                  << fmt(cached.overall.p95_ms) << '\n';
      }
      write_report(report_path, out);
    } else if (*val) {
      const auto source = read_file(taxonomy_path);
      const auto taxonomy = load_taxonomy(source);
      std::cout << "taxonomy " << taxonomy.version() << ": " << taxonomy.trigger_types().size() << " trigger types, "
                << taxonomy.moral_categories().size() << " moral categories, "
                << taxonomy.protagonist_roles().size() << " roles\n";
      if (canonical && serialize_taxonomy(taxonomy) != source) {
        throw Error(ErrorCode::malformed, taxonomy_path + " is not in canonical form");
      }
      if (!val_rules.empty()) {
        const auto matcher = compile_rules(taxonomy, load_rules(read_file(val_rules)));
        std::cout << "rules: " << matcher.rules().size() << " compiled\n";
      }
      std::cout << "ok\n";
    } else if (*agr) {
      json report;
      if (!agr_input.empty()) {
        const auto j = json::parse(read_file(agr_input));
        const auto agreement = eval::aggregate_pabak(j.at("model").get<std::vector<int>>(),
                                                     j.at("raters").get<std::vector<std::vector<int>>>());
        report = eval::to_json(agreement);
        for (const auto& p : agreement.pairs) {
          std::cout << std::left << std::setw(10) << p.a << std::setw(10) << p.b << " p_o " << fmt(p.observed.to_double())
                    << "  PABAK " << fmt(p.pabak.to_double()) << '\n';
        }
        std::cout << "model vs raters (mean) " << fmt(agreement.model_vs_raters.to_double()) << '\n';
      } else if (observed >= 0.0) {
        if (observed > 1.0) throw Error(ErrorCode::invalid_argument, "--observed must lie in [0,1]");
        const double k = eval::pabak_from_observed(observed);
        report = {{"observed", observed}, {"pabak", k}};
        std::cout << "PABAK " << fmt(k, 6) << '\n';
      } else {
        throw Error(ErrorCode::invalid_argument, "agreement needs --input or --observed");
      }
      write_report(report_path, report);
    } else if (*serve) {
      return run_serve(listen, taxonomy_path, rules_path, backend, cors_origin);
    }
  } catch (const Error& e) {
    std::cerr << "vigil: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "vigil: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
