#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <sstream>

#include <json.hpp>

#include "fedcl/metrics.hpp"
#include "fedcl/serialize.hpp"

using namespace fedcl;

namespace {

// Minimal RFC 4180 reader, independent of the writer.
std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(field);
      field.clear();
    } else if (c == '\r') {
    } else if (c == '\n') {
      row.push_back(field);
      rows.push_back(row);
      row.clear();
      field.clear();
    } else {
      field += c;
    }
  }
  return rows;
}

std::vector<MetricsRow> sample_history() {
  return {{1, 0, "fedcl", 0.25, 1.5, -20.125, 0, 0.0, 7},
          {2, 0, "fedcl", 0.5, 1.25, -20.5, 3, 0.0, 7},
          {3, 1, "fedcl", 0.1 + 0.2, 1.0 / 3.0, -21.0, 0, 0.0, 7}};
}

ClientReport sample_report() {
  ClientReport r;
  r.client_id = 4;
  r.model = ModelParams(DenseStack({3, 2, 2}), 1);
  for (std::size_t i = 0; i < r.model.stack.size(); ++i) r.model.stack.values()[i] = 0.1 * static_cast<double>(i) - 0.7;
  r.gmm.components = {{0.25, -3.0, 0.5}, {0.75, 1.0, 2.0}};
  r.label_counter = {5, 0, 11};
  r.local_steps_run = 20;
  r.mean_local_loss = -12.5;
  return r;
}

}  // namespace

TEST_CASE("empty history writes only the header") {
  std::ostringstream out;
  write_metrics_csv(out, {});
  CHECK(out.str() == std::string(kMetricsHeader) + "\r\n");
}

TEST_CASE("metrics csv parses back") {
  const auto h = sample_history();
  std::ostringstream out;
  write_metrics_csv(out, h);
  const auto rows = parse_csv(out.str());
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == std::vector<std::string>{"round", "z", "algorithm", "test_accuracy",
                                            "mean_client_loss", "generator_loss", "frozen_count",
                                            "wall_seconds", "seed"});
  for (std::size_t i = 0; i < h.size(); ++i) {
    const auto& r = rows[i + 1];
    REQUIRE(r.size() == 9);
    CHECK(std::stoul(r[0]) == h[i].round);
    CHECK(std::stoul(r[1]) == h[i].state_index);
    CHECK(r[2] == h[i].algorithm);
    const double acc = std::stod(r[3]);
    CHECK(acc == h[i].test_accuracy);
    CHECK((acc >= 0.0 && acc <= 1.0));
    CHECK(std::stod(r[4]) == h[i].mean_client_loss);
    CHECK(std::stod(r[5]) == h[i].generator_loss);
    CHECK(std::stoul(r[6]) == h[i].frozen_count);
    CHECK(std::stoull(r[8]) == h[i].seed);
  }
}

TEST_CASE("csv quoting") {
  CHECK(csv_escape("plain") == "plain");
  CHECK(csv_escape("a,b") == "\"a,b\"");
  CHECK(csv_escape("say \"hi\"") == "\"say \"\"hi\"\"\"");
  auto rows = parse_csv(csv_escape("x,\"y\"\nz") + ",2\n");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0][0] == "x,\"y\"\nz");
}

TEST_CASE("jsonl mirror") {
  const auto h = sample_history();
  std::ostringstream out;
  write_metrics_jsonl(out, h);
  std::istringstream in(out.str());
  std::string line;
  std::size_t i = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    CHECK(j["round"] == h[i].round);
    CHECK(j["z"] == h[i].state_index);
    CHECK(j["test_accuracy"].get<double>() == h[i].test_accuracy);
    ++i;
  }
  CHECK(i == h.size());
}

TEST_CASE("events csv") {
  std::vector<SyncEvent> ev{{3, 0, 2, -27.5, "freeze"}, {5, 1, 0, -26.0, "advance"}};
  std::ostringstream out;
  write_events_csv(out, ev);
  auto rows = parse_csv(out.str());
  REQUIRE(rows.size() == 3);
  CHECK(rows[1][2] == "freeze");
  CHECK(std::stod(rows[2][4]) == -26.0);
}

TEST_CASE("client report round-trip") {
  const auto r = sample_report();
  const auto bytes = encode_report(r);
  CHECK(bytes.substr(0, 6) == "FEDCL1");
  CHECK(decode_report(bytes) == r);
}

TEST_CASE("broadcast round-trip") {
  Broadcast b;
  b.model = sample_report().model;
  b.generator = GeneratorParams(DenseStack({2 + 1 + 3, 4, 2}), 2, 3);
  b.generator->stack.values()[5] = 0.5;
  b.prior.counts = {3, 1};
  b.prior.probabilities = {0.75, 0.25};
  b.pool = GlobalPool{{-2.0, 0.5, 1.0}, {3}};
  b.state_index = 1;
  b.threshold = 0.5;
  auto back = decode_broadcast(encode_broadcast(b));
  CHECK(back.model == b.model);
  CHECK(back.generator == b.generator);
  CHECK(back.prior.counts == b.prior.counts);
  CHECK(back.prior.probabilities == b.prior.probabilities);
  CHECK(back.pool->sorted_samples == b.pool->sorted_samples);
  CHECK(back.pool->per_client_counts == b.pool->per_client_counts);
  CHECK(back.state_index == 1);
  CHECK(back.threshold == 0.5);

  Broadcast bare;
  bare.model = b.model;
  bare.prior = b.prior;
  auto bare_back = decode_broadcast(encode_broadcast(bare));
  CHECK_FALSE(bare_back.generator.has_value());
  CHECK_FALSE(bare_back.pool.has_value());
  CHECK_FALSE(bare_back.threshold.has_value());
}

TEST_CASE("malformed checkpoints") {
  const auto bytes = encode_report(sample_report());
  CHECK_THROWS_AS(decode_report("FEDCL0" + bytes.substr(6)), FormatError);
  CHECK_THROWS_AS(decode_report(bytes.substr(0, bytes.size() - 3)), FormatError);
  CHECK_THROWS_AS(decode_broadcast(bytes), FormatError);
  CHECK_THROWS_AS(decode_report(bytes + "x"), FormatError);
  CHECK_THROWS_AS(decode_report(""), FormatError);
}

TEST_CASE("unknown sections are skipped") {
  auto bytes = encode_report(sample_report());
  // bump the section count and append an extra section
  std::uint32_t n;
  std::memcpy(&n, bytes.data() + 7, 4);
  ++n;
  std::memcpy(bytes.data() + 7, &n, 4);
  bytes += "XTRA";
  const std::uint64_t len = 2;
  bytes.append(reinterpret_cast<const char*>(&len), 8);
  bytes += "hi";
  CHECK(decode_report(bytes) == sample_report());
}
