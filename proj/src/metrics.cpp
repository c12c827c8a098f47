#include "fedcl/metrics.hpp"

#include <charconv>
#include <ostream>

#include <json.hpp>

namespace fedcl {

namespace {

// Shortest round-trip representation.
std::string fmt(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows) {
  out << kMetricsHeader << "\r\n";
  for (const auto& r : rows) {
    out << r.round << ',' << r.state_index << ',' << csv_escape(r.algorithm) << ','
        << fmt(r.test_accuracy) << ',' << fmt(r.mean_client_loss) << ','
        << fmt(r.generator_loss) << ',' << r.frozen_count << ',' << fmt(r.wall_seconds)
        << ',' << r.seed << "\r\n";
  }
}

void write_metrics_jsonl(std::ostream& out, std::span<const MetricsRow> rows) {
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["round"] = r.round;
    j["z"] = r.state_index;
    j["algorithm"] = r.algorithm;
    j["test_accuracy"] = r.test_accuracy;
    j["mean_client_loss"] = r.mean_client_loss;
    j["generator_loss"] = r.generator_loss;
    j["frozen_count"] = r.frozen_count;
    j["wall_seconds"] = r.wall_seconds;
    j["seed"] = r.seed;
    out << j.dump() << '\n';
  }
}

void write_events_csv(std::ostream& out, std::span<const SyncEvent> events) {
  out << "round,z,kind,frozen_count,threshold\r\n";
  for (const auto& e : events) {
    out << e.round << ',' << e.state_index << ',' << csv_escape(e.kind) << ','
        << e.frozen_count << ',' << fmt(e.threshold) << "\r\n";
  }
}

}  // namespace fedcl
