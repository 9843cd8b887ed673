#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "talift/gateway.hpp"
#include "talift/kernels.hpp"
#include "talift/prompts.hpp"

namespace talift::eval {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Largest fenced block of a reply; with no fence, the whole reply if it
/// parses as a program.
std::optional<std::string> extract_code(std::string_view completion_text);

/// Unbiased pass@k, 1 - prod_{i<k} (n-c-i)/(n-i). Throws std::domain_error
/// unless 0 <= c <= n and 1 <= k <= n.
double pass_at_k(int n, int c, int k);

struct Ablation {
  std::string label;
  int shots = 1;
  bool nl_annotated = true;
  bool include_isa = true;
  prompts::SourceStyle source_style = prompts::SourceStyle::NlOnly;
  prompts::ExamplesPosition examples_position = prompts::ExamplesPosition::AfterInstructions;
  std::vector<std::string> examples;
};

prompts::PromptSpec prompt_spec(const Ablation& a, const kernels::KernelSpec& k);

enum class Aggregation : std::uint8_t { Micro, Macro };

struct ExperimentConfig {
  std::vector<std::string> kernels;
  std::vector<Ablation> ablations;
  int n = 50;
  std::vector<int> ks{1, 10, 50};
  std::uint64_t seed = 0;
  int testcases_per_kernel = 10;
  llm::BackendConfig backend;
  llm::GenerationParams params;
  Aggregation aggregation = Aggregation::Micro;
  int jobs = 1;
};

/// Relative paths in the document resolve against `base_dir`.
ExperimentConfig parse_experiment_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct CandidateRecord {
  std::string kernel;
  std::string ablation;
  std::string fingerprint;
  int sample_index = 0;
  std::string raw;
  std::optional<std::string> extracted;
  kernels::Verdict verdict;
};

nlohmann::json verdict_json(const kernels::Verdict& v);
nlohmann::json record_json(const CandidateRecord& r);

struct KernelCount {
  std::string kernel;
  int n = 0;
  int c = 0;
};

struct ReportRow {
  std::string label;
  std::vector<KernelCount> counts;
  std::vector<std::string> excluded;
  /// Aligned with ExperimentReport::ks; empty when k exceeds the sample count.
  std::vector<std::optional<double>> pass;
};

struct ExperimentReport {
  std::vector<int> ks;
  Aggregation aggregation = Aggregation::Micro;
  std::vector<ReportRow> rows;
  nlohmann::json metadata;
  std::vector<CandidateRecord> records;
};

/// Fills row.pass from row.counts.
void aggregate(ReportRow& row, const std::vector<int>& ks, Aggregation how);

ExperimentReport run_experiment(const ExperimentConfig& cfg, llm::Backend& backend,
                                const std::vector<kernels::KernelSpec>& all_kernels,
                                const prompts::PromptAssets& assets = prompts::default_assets());

enum class ReportFormat : std::uint8_t { Table, Csv };

std::string render_report(const ExperimentReport& r, ReportFormat format);

/// report.txt, report.csv, manifest.json and records/.
void write_report(const ExperimentReport& r, const std::filesystem::path& out_dir);

}  // namespace talift::eval
