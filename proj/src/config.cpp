#include "fedcl/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "fedcl/errors.hpp"

namespace fedcl {

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::FedCL: return "fedcl";
    case Algorithm::FedAvg: return "fedavg";
    case Algorithm::FedProx: return "fedprox";
  }
  return "?";
}

Algorithm parse_algorithm(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "fedcl") return Algorithm::FedCL;
  if (lower == "fedavg") return Algorithm::FedAvg;
  if (lower == "fedprox") return Algorithm::FedProx;
  throw ConfigError("unknown algorithm '" + std::string(s) + "'", "algorithm");
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void type_error(std::string_view key, std::string_view value,
                             std::string_view expected, int line) {
  throw ConfigError("key '" + std::string(key) + "': expected " + std::string(expected) +
                        ", got '" + std::string(value) + "'" +
                        (line > 0 ? " (line " + std::to_string(line) + ")" : ""),
                    std::string(key), line);
}

double to_double(std::string_view key, std::string_view v, int line) {
  v = trim(v);
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(out))
    type_error(key, v, "a real number", line);
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v, int line) {
  v = trim(v);
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || v.empty())
    type_error(key, v, "a non-negative integer", line);
  return out;
}

bool to_bool(std::string_view key, std::string_view v, int line) {
  v = trim(v);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  type_error(key, v, "a boolean", line);
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> out;
  v = trim(v);
  if (!v.empty() && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
  while (!v.empty()) {
    const auto comma = v.find(',');
    out.push_back(trim(v.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

std::string fmt_double(double d) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, p);
}

template <typename T>
std::string fmt_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>)
      out += fmt_double(v[i]);
    else
      out += std::to_string(v[i]);
  }
  return out;
}

struct Field {
  std::function<void(RunConfig&, std::string_view, std::string_view, int)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename M>
Field real(M RunConfig::*m) {
  return {[m](RunConfig& c, std::string_view k, std::string_view v, int l) { c.*m = to_double(k, v, l); },
          [m](const RunConfig& c) { return fmt_double(c.*m); }};
}

template <typename M>
Field count(M RunConfig::*m) {
  return {[m](RunConfig& c, std::string_view k, std::string_view v, int l) {
            c.*m = static_cast<M>(to_u64(k, v, l));
          },
          [m](const RunConfig& c) { return std::to_string(c.*m); }};
}

Field flag(bool RunConfig::*m) {
  return {[m](RunConfig& c, std::string_view k, std::string_view v, int l) { c.*m = to_bool(k, v, l); },
          [m](const RunConfig& c) { return std::string(c.*m ? "true" : "false"); }};
}

Field text(std::string RunConfig::*m) {
  return {[m](RunConfig& c, std::string_view, std::string_view v, int) { c.*m = std::string(trim(v)); },
          [m](const RunConfig& c) { return c.*m; }};
}

const std::vector<std::pair<std::string, Field>>& field_table() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    t.emplace_back("algorithm",
                   Field{[](RunConfig& c, std::string_view, std::string_view v, int) {
                           c.algorithm = parse_algorithm(trim(v));
                         },
                         [](const RunConfig& c) { return std::string(to_string(c.algorithm)); }});
    t.emplace_back("seed", count(&RunConfig::seed));
    t.emplace_back("rounds", count(&RunConfig::rounds));

    t.emplace_back("federation.clients", count(&RunConfig::num_clients));
    t.emplace_back("federation.active_ratio", real(&RunConfig::active_ratio));
    t.emplace_back("federation.local_steps", count(&RunConfig::local_steps));
    t.emplace_back("federation.batch_size", count(&RunConfig::batch_size));
    t.emplace_back("federation.lr", real(&RunConfig::client_lr));
    t.emplace_back("fedprox.mu", real(&RunConfig::prox_mu));

    t.emplace_back("model.feature_widths",
                   Field{[](RunConfig& c, std::string_view k, std::string_view v, int l) {
                           c.feature_widths.clear();
                           for (auto item : split_list(v))
                             c.feature_widths.push_back(static_cast<std::size_t>(to_u64(k, item, l)));
                         },
                         [](const RunConfig& c) { return fmt_list(c.feature_widths); }});

    t.emplace_back("curriculum.enabled",
                   Field{[](RunConfig& c, std::string_view k, std::string_view v, int l) {
                           c.curriculum.enabled = to_bool(k, v, l);
                         },
                         [](const RunConfig& c) { return std::string(c.curriculum.enabled ? "true" : "false"); }});
    t.emplace_back("curriculum.tau",
                   Field{[](RunConfig& c, std::string_view k, std::string_view v, int l) {
                           c.curriculum.tau = to_double(k, v, l);
                         },
                         [](const RunConfig& c) { return fmt_double(c.curriculum.tau); }});
    t.emplace_back("curriculum.lambda",
                   Field{[](RunConfig& c, std::string_view k, std::string_view v, int l) {
                           c.curriculum.lambda = to_double(k, v, l);
                         },
                         [](const RunConfig& c) { return fmt_double(c.curriculum.lambda); }});

    t.emplace_back("generator.enabled", flag(&RunConfig::generator_enabled));
    t.emplace_back("generator.lr", real(&RunConfig::generator_lr));
    t.emplace_back("generator.batch_size", count(&RunConfig::generator_batch));
    t.emplace_back("generator.steps_per_round", count(&RunConfig::generator_steps));
    t.emplace_back("generator.noise_dim", count(&RunConfig::noise_dim));
    t.emplace_back("generator.hidden", count(&RunConfig::generator_hidden));
    t.emplace_back("generator.diversity_loss", flag(&RunConfig::diversity_loss));
    t.emplace_back("distill.batch_size", count(&RunConfig::distill_batch));
    t.emplace_back("distill.weight", real(&RunConfig::distill_weight));

    t.emplace_back("sync.enabled", flag(&RunConfig::sync_enabled));
    t.emplace_back("sync.schedule",
                   Field{[](RunConfig& c, std::string_view k, std::string_view v, int l) {
                           c.schedule.clear();
                           for (auto item : split_list(v)) c.schedule.push_back(to_double(k, item, l));
                         },
                         [](const RunConfig& c) { return fmt_list(c.schedule); }});
    t.emplace_back("sync.order",
                   Field{[](RunConfig& c, std::string_view k, std::string_view v, int l) {
                           v = trim(v);
                           if (v == "listed")
                             c.schedule_order = ScheduleOrder::Listed;
                           else if (v == "decreasing")
                             c.schedule_order = ScheduleOrder::Decreasing;
                           else
                             type_error(k, v, "'listed' or 'decreasing'", l);
                         },
                         [](const RunConfig& c) {
                           return std::string(c.schedule_order == ScheduleOrder::Listed ? "listed"
                                                                                         : "decreasing");
                         }});
    t.emplace_back("sync.strict_order", flag(&RunConfig::strict_order));
    t.emplace_back("sync.v", real(&RunConfig::temperature_v));
    t.emplace_back("sync.samples_per_client", count(&RunConfig::pool_samples_per_client));
    t.emplace_back("sync.state_round_cap", count(&RunConfig::state_round_cap));

    t.emplace_back("gmm.components",
                   Field{[](RunConfig& c, std::string_view k, std::string_view v, int l) {
                           c.gmm.components = static_cast<std::size_t>(to_u64(k, v, l));
                         },
                         [](const RunConfig& c) { return std::to_string(c.gmm.components); }});
    t.emplace_back("gmm.max_iters",
                   Field{[](RunConfig& c, std::string_view k, std::string_view v, int l) {
                           c.gmm.max_iters = static_cast<std::size_t>(to_u64(k, v, l));
                         },
                         [](const RunConfig& c) { return std::to_string(c.gmm.max_iters); }});
    t.emplace_back("gmm.tol",
                   Field{[](RunConfig& c, std::string_view k, std::string_view v, int l) {
                           c.gmm.tol = to_double(k, v, l);
                         },
                         [](const RunConfig& c) { return fmt_double(c.gmm.tol); }});

    t.emplace_back("data.dataset",
                   Field{[](RunConfig& c, std::string_view k, std::string_view v, int l) {
                           v = trim(v);
                           if (v == "blobs")
                             c.dataset = DatasetKind::Blobs;
                           else if (v == "mnist")
                             c.dataset = DatasetKind::Mnist;
                           else
                             type_error(k, v, "'blobs' or 'mnist'", l);
                         },
                         [](const RunConfig& c) {
                           return std::string(c.dataset == DatasetKind::Blobs ? "blobs" : "mnist");
                         }});
    t.emplace_back("data.dirichlet_alpha", real(&RunConfig::dirichlet_alpha));
    t.emplace_back("data.client_fraction", real(&RunConfig::client_fraction));
    t.emplace_back("data.blobs.classes", count(&RunConfig::blob_classes));
    t.emplace_back("data.blobs.per_class", count(&RunConfig::blob_per_class));
    t.emplace_back("data.blobs.test_per_class", count(&RunConfig::blob_test_per_class));
    t.emplace_back("data.blobs.dim", count(&RunConfig::blob_dim));
    t.emplace_back("data.blobs.spread", real(&RunConfig::blob_spread));
    t.emplace_back("data.mnist.train_images", text(&RunConfig::mnist_train_images));
    t.emplace_back("data.mnist.train_labels", text(&RunConfig::mnist_train_labels));
    t.emplace_back("data.mnist.test_images", text(&RunConfig::mnist_test_images));
    t.emplace_back("data.mnist.test_labels", text(&RunConfig::mnist_test_labels));
    t.emplace_back("data.mnist.train_limit", count(&RunConfig::mnist_train_limit));
    t.emplace_back("data.mnist.test_limit", count(&RunConfig::mnist_test_limit));

    t.emplace_back("output.record_wall_time", flag(&RunConfig::record_wall_time));
    return t;
  }();
  return table;
}

const Field* find_field(std::string_view key) {
  for (const auto& [name, f] : field_table())
    if (name == key) return &f;
  return nullptr;
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError("key '" + key + "': " + what, key);
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, f] : field_table()) k.push_back(name);
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value, int line) {
  key = trim(key);
  const Field* f = find_field(key);
  if (f == nullptr)
    throw ConfigError("unknown key '" + std::string(key) + "'" +
                          (line > 0 ? " (line " + std::to_string(line) + ")" : ""),
                      std::string(key), line);
  try {
    f->set(cfg, key, value, line);
  } catch (const ConfigError& e) {
    if (e.line() != 0 || line == 0) throw;
    throw ConfigError(std::string(e.what()) + " (line " + std::to_string(line) + ")",
                      std::string(key), line);
  }
}

std::string get_config_value(const RunConfig& cfg, std::string_view key) {
  const Field* f = find_field(trim(key));
  if (f == nullptr) throw ConfigError("unknown key '" + std::string(key) + "'", std::string(key));
  return f->get(cfg);
}

void apply_config_text(RunConfig& cfg, std::string_view text) {
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("expected key = value (line " + std::to_string(line_no) + ")", {}, line_no);
    set_config_value(cfg, line.substr(0, eq), line.substr(eq + 1), line_no);
  }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(cfg, ss.str());
}

RunConfig resolve_config(const std::filesystem::path& file,
                         const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig cfg;
  if (!file.empty()) apply_config_file(cfg, file);
  for (const auto& [k, v] : overrides) set_config_value(cfg, k, v);
  cfg.validate();
  return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [name, f] : field_table()) out += name + " = " + f.get(cfg) + "\n";
  return out;
}

void RunConfig::validate() const {
  require(rounds <= 1'000'000, "rounds", "unreasonably large");
  require(num_clients >= 1, "federation.clients", "must be at least 1");
  require(active_ratio > 0.0 && active_ratio <= 1.0, "federation.active_ratio", "must lie in (0,1]");
  require(local_steps >= 1, "federation.local_steps", "must be at least 1");
  require(batch_size >= 1, "federation.batch_size", "must be at least 1");
  require(client_lr > 0.0, "federation.lr", "must be positive");
  require(prox_mu >= 0.0, "fedprox.mu", "must be non-negative");
  require(!feature_widths.empty(), "model.feature_widths", "needs at least one layer");
  for (auto w : feature_widths) require(w > 0, "model.feature_widths", "zero-width layer");
  curriculum.validate();
  require(generator_lr > 0.0, "generator.lr", "must be positive");
  require(generator_batch >= 1, "generator.batch_size", "must be at least 1");
  require(noise_dim >= 1, "generator.noise_dim", "must be at least 1");
  require(generator_hidden >= 1, "generator.hidden", "must be at least 1");
  require(distill_batch >= 1, "distill.batch_size", "must be at least 1");
  require(distill_weight >= 0.0, "distill.weight", "must be non-negative");
  require(!diversity_loss, "generator.diversity_loss", "no diversity term is implemented");
  require(!schedule.empty(), "sync.schedule", "needs at least one level");
  for (double t : schedule) require(t > 0.0 && t < 1.0, "sync.schedule", "levels must lie in (0,1)");
  if (strict_order) {
    const bool ok = schedule_order == ScheduleOrder::Listed
                        ? std::is_sorted(schedule.begin(), schedule.end())
                        : std::is_sorted(schedule.begin(), schedule.end(), std::greater<>());
    require(ok, "sync.schedule", "not monotone in the configured order");
  }
  require(temperature_v > 0.0 && temperature_v < 1.0, "sync.v", "must lie in (0,1)");
  require(pool_samples_per_client >= 1, "sync.samples_per_client", "must be at least 1");
  require(gmm.components >= 1, "gmm.components", "must be at least 1");
  require(gmm.tol >= 0.0, "gmm.tol", "must be non-negative");
  require(dirichlet_alpha > 0.0, "data.dirichlet_alpha", "must be positive");
  require(client_fraction > 0.0 && client_fraction <= 1.0, "data.client_fraction", "must lie in (0,1]");
  require(blob_classes >= 2, "data.blobs.classes", "must be at least 2");
  require(blob_per_class >= 1, "data.blobs.per_class", "must be at least 1");
  require(blob_test_per_class >= 1, "data.blobs.test_per_class", "must be at least 1");
  require(blob_dim >= 1, "data.blobs.dim", "must be at least 1");
  require(blob_spread >= 0.0, "data.blobs.spread", "must be non-negative");
  if (dataset == DatasetKind::Mnist) {
    require(!mnist_train_images.empty(), "data.mnist.train_images", "required for mnist");
    require(!mnist_train_labels.empty(), "data.mnist.train_labels", "required for mnist");
    require(!mnist_test_images.empty(), "data.mnist.test_images", "required for mnist");
    require(!mnist_test_labels.empty(), "data.mnist.test_labels", "required for mnist");
  }
}

}  // namespace fedcl
