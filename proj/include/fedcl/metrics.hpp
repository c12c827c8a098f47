#pragma once

#include <iosfwd>
#include <span>
#include <string>

#include "fedcl/federation.hpp"

namespace fedcl {

inline constexpr const char* kMetricsHeader =
    "round,z,algorithm,test_accuracy,mean_client_loss,generator_loss,frozen_count,"
    "wall_seconds,seed";

// RFC 4180 CSV; an empty history still produces the header line.
void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows);
// One JSON object per line, same fields as the CSV.
void write_metrics_jsonl(std::ostream& out, std::span<const MetricsRow> rows);
void write_events_csv(std::ostream& out, std::span<const SyncEvent> events);

std::string csv_escape(std::string_view field);

}  // namespace fedcl
