#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace imiwae {

// Experiment kinds: simulate-impute, mixture-mean, cv-select, theory,
// impute-csv, generate. Configs are JSON with every field defaulted; the
// resolved config is echoed verbatim into the report.

std::vector<std::string> preset_names();
nlohmann::json preset_config(const std::string& name);

// Fills defaults and validates; throws ConfigError listing every violation.
// A "preset" key pulls in the named preset and deep-merges the remaining
// keys on top of it.
nlohmann::json resolve_config(const nlohmann::json& config);

struct RunReport {
    nlohmann::json json;  // full report document

    std::string experiment() const { return json.at("experiment").get<std::string>(); }
};

RunReport run_experiment(const nlohmann::json& config);

// Writes report.json (and any experiment outputs) under output_dir.
std::string write_report(const RunReport& report, const std::string& output_dir);

// Pools per-replication metrics across reports of one experiment kind.
nlohmann::json aggregate_reports(const std::vector<nlohmann::json>& reports);
std::string aggregate_to_csv(const nlohmann::json& aggregates);

int worker_count();  // IMIWAE_WORKERS, default 1

// Deterministic seed derivation for replication components.
uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b);

}  // namespace imiwae
