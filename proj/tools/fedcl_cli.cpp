// fedcl: run, compare and selftest subcommands.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedcl/config.hpp"
#include "fedcl/curriculum.hpp"
#include "fedcl/data.hpp"
#include "fedcl/errors.hpp"
#include "fedcl/federation.hpp"
#include "fedcl/gmm.hpp"
#include "fedcl/metrics.hpp"
#include "fedcl/serialize.hpp"
#include "fedcl/sync.hpp"

using namespace fedcl;

namespace {

constexpr int kUsage = 2;

struct CommonOptions {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::string> dataset;
  std::optional<std::size_t> rounds;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> clients;
  std::optional<double> alpha;
  std::string out;
  std::string jsonl;
  std::string events;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config_file, "key = value configuration file")->check(CLI::ExistingFile);
  app->add_option("--set", o.sets, "override one key, as key=value (repeatable)");
  app->add_option("--dataset", o.dataset, "blobs or mnist");
  app->add_option("--rounds", o.rounds, "communication rounds");
  app->add_option("--seed", o.seed, "master seed");
  app->add_option("--clients", o.clients, "number of clients K");
  app->add_option("--dirichlet-alpha", o.alpha, "Dirichlet concentration");
  app->add_option("--out", o.out, "metrics CSV path (default: stdout)");
  app->add_option("--jsonl", o.jsonl, "also write metrics as JSON lines");
  app->add_option("--events", o.events, "sync events CSV path");
}

std::vector<std::pair<std::string, std::string>> overrides(const CommonOptions& o) {
  std::vector<std::pair<std::string, std::string>> out;
  auto fmt = [](auto v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
  };
  if (o.dataset) out.emplace_back("data.dataset", *o.dataset);
  if (o.rounds) out.emplace_back("rounds", fmt(*o.rounds));
  if (o.seed) out.emplace_back("seed", fmt(*o.seed));
  if (o.clients) out.emplace_back("federation.clients", fmt(*o.clients));
  if (o.alpha) out.emplace_back("data.dirichlet_alpha", fmt(*o.alpha));
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("--set expects key=value, got '" + s + "'", s, 0);
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return out;
}

void emit(const CommonOptions& o, const std::vector<MetricsRow>& rows,
          const std::vector<SyncEvent>& events) {
  if (o.out.empty()) {
    write_metrics_csv(std::cout, rows);
  } else {
    std::ofstream f(o.out, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + o.out);
    write_metrics_csv(f, rows);
  }
  if (!o.jsonl.empty()) {
    std::ofstream f(o.jsonl, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + o.jsonl);
    write_metrics_jsonl(f, rows);
  }
  if (!o.events.empty()) {
    std::ofstream f(o.events, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + o.events);
    write_events_csv(f, events);
  }
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

int cmd_run(const CommonOptions& o, const std::optional<std::string>& algorithm) {
  auto ov = overrides(o);
  if (algorithm) ov.insert(ov.begin(), {"algorithm", *algorithm});
  const auto cfg = resolve_config(o.config_file, ov);
  const auto result = run_training(cfg);
  emit(o, result.history, result.events);
  std::clog << "fedcl: " << to_string(cfg.algorithm) << " " << result.history.size()
            << " rounds, final accuracy "
            << (result.history.empty() ? 0.0 : result.history.back().test_accuracy) << "\n";
  return 0;
}

int cmd_compare(const CommonOptions& o, const std::string& algorithms) {
  std::vector<std::string> names;
  std::stringstream ss(algorithms);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) names.push_back(item);
  if (names.empty()) throw ConfigError("--algorithms is empty", "algorithm", 0);

  auto ov = overrides(o);
  const auto base = resolve_config(o.config_file, ov);
  const auto data = build_experiment_data(base);
  std::vector<MetricsRow> rows;
  std::vector<SyncEvent> events;
  for (const auto& name : names) {
    auto cfg = base;
    cfg.algorithm = parse_algorithm(name);
    cfg.validate();
    auto r = run_training(cfg, data);
    std::cout << to_string(cfg.algorithm) << " partition_hash=" << hex(r.partition_hash)
              << " init_hash=" << hex(r.init_hash) << " final_accuracy="
              << (r.history.empty() ? 0.0 : r.history.back().test_accuracy) << "\n";
    rows.insert(rows.end(), r.history.begin(), r.history.end());
    events.insert(events.end(), r.events.begin(), r.events.end());
  }
  CommonOptions quiet = o;
  if (quiet.out.empty()) quiet.out = "/dev/null";
  emit(quiet, rows, events);
  return 0;
}

// Quick internal consistency checks; a subset of the test suite that needs
// no test framework.
int cmd_selftest() {
  int failed = 0;
  auto check = [&](bool ok, const char* what) {
    std::cout << (ok ? "ok   " : "FAIL ") << what << "\n";
    if (!ok) ++failed;
  };

  CurriculumConfig cc;
  check(cl_loss(cc.tau, cc).cl_loss == 0.0 && cl_loss(cc.tau, cc).confidence == 1.0,
        "curriculum loss vanishes at tau");
  bool argmin = true;
  for (double l : {0.0, 3.0, 9.5, 12.0, 25.0}) {
    const auto s = cl_loss(l, cc);
    for (double sig = 0.01; sig <= 2.7; sig += 0.01) {
      const double ls = std::log(sig);
      if ((l - cc.tau) * sig + cc.lambda * ls * ls < s.cl_loss - 1e-12) argmin = false;
    }
  }
  check(argmin, "closed-form confidence minimizes the curriculum loss");

  GlobalPool pool{{1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, {10}};
  check(threshold_lookup(pool, 0.3) == 3.0 && threshold_lookup(pool, 0.05) == 1.0 &&
            threshold_lookup(pool, 0.99) == 10.0,
        "threshold lookup");
  const std::vector<double> five{1, 1, 1, 1, 9};
  check(freeze_decision(five, 1.0, 0.79) && !freeze_decision(five, 1.0, 0.8), "strict freeze test");

  std::vector<double> xs;
  for (int i = 0; i < 200; ++i) xs.push_back(i % 2 ? 10.0 + 0.01 * i : -0.01 * i);
  EmOptions eo;
  eo.components = 2;
  auto em = fit_em(xs, eo, 1);
  bool mono = true;
  for (std::size_t i = 1; i < em.trace.size(); ++i) mono = mono && em.trace[i] >= em.trace[i - 1] - 1e-9;
  check(mono, "EM log-likelihood is non-decreasing");

  RunConfig cfg;
  cfg.num_clients = 4;
  cfg.rounds = 3;
  cfg.blob_classes = 3;
  cfg.blob_per_class = 40;
  cfg.blob_test_per_class = 10;
  cfg.blob_dim = 4;
  cfg.feature_widths = {8};
  cfg.generator_batch = 16;
  cfg.pool_samples_per_client = 20;
  const auto a = run_training(cfg);
  const auto b = run_training(cfg);
  check(a.history == b.history && a.final_model == b.final_model, "runs are deterministic");

  ClientReport rep;
  rep.model = a.final_model;
  rep.label_counter = {1, 2, 3};
  check(decode_report(encode_report(rep)) == rep, "checkpoint round-trip");

  std::cout << (failed == 0 ? "selftest passed" : "selftest failed") << "\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated curriculum learning experiments"};
  app.require_subcommand(1);

  CommonOptions run_opts;
  std::optional<std::string> algorithm;
  auto* run = app.add_subcommand("run", "train one algorithm and write per-round metrics");
  run->add_option("--algorithm", algorithm, "fedcl, fedavg or fedprox");
  add_common(run, run_opts);

  CommonOptions cmp_opts;
  std::string algorithms = "fedcl,fedavg";
  auto* cmp = app.add_subcommand("compare", "train several algorithms on the same partition and init");
  cmp->add_option("--algorithms", algorithms, "comma separated list")->capture_default_str();
  add_common(cmp, cmp_opts);

  auto* self = app.add_subcommand("selftest", "run internal consistency checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (run->parsed()) return cmd_run(run_opts, algorithm);
    if (cmp->parsed()) return cmd_compare(cmp_opts, algorithms);
    if (self->parsed()) return cmd_selftest();
  } catch (const ConfigError& e) {
    std::cerr << "fedcl: configuration error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "fedcl: " << e.what() << "\n";
    return 1;
  }
  return kUsage;
}
