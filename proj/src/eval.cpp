#include "talift/eval.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <sstream>
#include <thread>

#include "talift/isa.hpp"
#include "talift/util.hpp"

namespace talift::eval {

using nlohmann::json;
namespace fs = std::filesystem;

std::optional<std::string> extract_code(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::vector<std::string> blocks;
  std::optional<std::string> open;
  for (std::string line; std::getline(in, line);) {
    std::string t = trim(line);
    if (t.rfind("```", 0) == 0) {
      if (open) {
        blocks.push_back(std::move(*open));
        open.reset();
      } else {
        open.emplace();
      }
      continue;
    }
    if (open) {
      if (!open->empty()) *open += '\n';
      *open += line;
    }
  }
  // an unterminated fence still counts
  if (open) blocks.push_back(std::move(*open));
  if (!blocks.empty()) {
    const std::string* best = &blocks.front();
    for (const auto& b : blocks) {
      if (b.size() > best->size()) best = &b;
    }
    return *best;
  }
  if (trim(text).empty()) return std::nullopt;
  isa::ParseOptions opts;
  opts.allow_undeclared_buffers = true;
  try {
    isa::parse_program(text, {}, opts);
    return std::string(text);
  } catch (const isa::IsaError&) {
    return std::nullopt;
  }
}

double pass_at_k(int n, int c, int k) {
  if (n < 0 || c < 0 || c > n || k < 1 || k > n) {
    throw std::domain_error(fmt::format("pass@k undefined for n={}, c={}, k={}", n, c, k));
  }
  if (c > n - k) return 1.0;
  double miss = 1.0;
  for (int i = 0; i < k; ++i) miss *= static_cast<double>(n - c - i) / static_cast<double>(n - i);
  return 1.0 - miss;
}

prompts::PromptSpec prompt_spec(const Ablation& a, const kernels::KernelSpec& k) {
  prompts::PromptSpec s;
  s.task = prompts::Task::Translate;
  s.shots = a.shots;
  s.nl_annotated = a.nl_annotated;
  s.include_isa = a.include_isa;
  s.source_style = a.source_style;
  s.examples_position = a.examples_position;
  s.examples = a.examples;
  s.kernel = k;
  return s;
}

namespace {

prompts::SourceStyle parse_style(const std::string& s) {
  if (s == "nl") return prompts::SourceStyle::NlOnly;
  if (s == "code") return prompts::SourceStyle::CodeOnly;
  if (s == "both") return prompts::SourceStyle::Both;
  throw ConfigError(fmt::format("unknown source_style '{}' (nl, code, both)", s));
}

prompts::ExamplesPosition parse_position(const std::string& s) {
  if (s == "before") return prompts::ExamplesPosition::BeforeInstructions;
  if (s == "after") return prompts::ExamplesPosition::AfterInstructions;
  throw ConfigError(fmt::format("unknown examples_position '{}' (before, after)", s));
}

Ablation parse_ablation(const json& j) {
  Ablation a;
  a.label = j.at("label").get<std::string>();
  a.shots = j.value("shots", 1);
  a.nl_annotated = j.value("nl_annotated", true);
  a.include_isa = j.value("include_isa", true);
  a.source_style = parse_style(j.value("source_style", std::string("nl")));
  a.examples_position = parse_position(j.value("examples_position", std::string("after")));
  a.examples = j.value("examples", std::vector<std::string>{});
  if (a.shots < 0 || a.shots > 2) throw ConfigError(fmt::format("ablation '{}': shots must be 0, 1 or 2", a.label));
  return a;
}

std::string slug(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    } else if (!out.empty() && out.back() != '_') {
      out += '_';
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out.empty() ? "row" : out;
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& doc, const fs::path& base_dir) {
  ExperimentConfig c;
  try {
    c.kernels = doc.at("kernels").get<std::vector<std::string>>();
    for (const auto& a : doc.at("ablations")) c.ablations.push_back(parse_ablation(a));
    c.n = doc.value("n", c.n);
    c.ks = doc.value("k", c.ks);
    c.seed = doc.value("seed", c.seed);
    c.testcases_per_kernel = doc.value("testcases_per_kernel", c.testcases_per_kernel);
    c.jobs = doc.value("jobs", c.jobs);
    auto agg = doc.value("aggregation", std::string("micro"));
    if (agg == "micro") {
      c.aggregation = Aggregation::Micro;
    } else if (agg == "macro") {
      c.aggregation = Aggregation::Macro;
    } else {
      throw ConfigError(fmt::format("unknown aggregation '{}'", agg));
    }
    if (doc.contains("params")) {
      const auto& p = doc["params"];
      c.params.model = p.value("model", c.params.model);
      c.params.temperature = p.value("temperature", c.params.temperature);
      c.params.max_tokens = p.value("max_tokens", c.params.max_tokens);
      if (p.contains("seed") && !p["seed"].is_null()) c.params.seed = p["seed"].get<std::int64_t>();
    }
    auto backend = doc.value("backend", std::string("replay:replay"));
    c.backend = llm::parse_backend_spec(backend);
    if (c.backend.kind == "replay" && c.backend.replay_dir.is_relative()) {
      c.backend.replay_dir = base_dir / c.backend.replay_dir;
    }
    if (doc.contains("cache_dir")) {
      fs::path cache = doc["cache_dir"].get<std::string>();
      c.backend.cache_dir = cache.is_relative() ? base_dir / cache : cache;
    }
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("experiment config: {}", e.what()));
  } catch (const llm::GatewayError& e) {
    throw ConfigError(e.what());
  }
  if (c.kernels.empty()) throw ConfigError("experiment config: no kernels");
  if (c.ablations.empty()) throw ConfigError("experiment config: no ablations");
  if (c.n < 1) throw ConfigError("experiment config: n must be at least 1");
  if (c.testcases_per_kernel < 1) throw ConfigError("experiment config: testcases_per_kernel must be at least 1");
  if (c.ks.empty()) throw ConfigError("experiment config: empty k list");
  for (int k : c.ks) {
    if (k < 1) throw ConfigError("experiment config: k values must be positive");
  }
  if (c.jobs < 1) c.jobs = 1;
  c.params.n_samples = c.n;
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  return parse_experiment_config(doc, path.parent_path());
}

json verdict_json(const kernels::Verdict& v) {
  json j = {{"passed", v.passed}, {"failure", kernels::failure_name(v.failure)}, {"message", v.message}};
  if (v.instr_index) j["instr_index"] = *v.instr_index;
  if (!v.error_kind.empty()) j["error_kind"] = v.error_kind;
  if (v.failure == kernels::FailureKind::WrongResult) {
    j["mismatch"] = {{"row", v.mismatch_row}, {"col", v.mismatch_col}, {"got", v.got}, {"want", v.want}};
  }
  j["cases_run"] = v.cases.size();
  return j;
}

json record_json(const CandidateRecord& r) {
  return {{"kernel", r.kernel},
          {"ablation", r.ablation},
          {"fingerprint", r.fingerprint},
          {"sample_index", r.sample_index},
          {"raw", r.raw},
          {"extracted", r.extracted ? json(*r.extracted) : json(nullptr)},
          {"verdict", verdict_json(r.verdict)}};
}

void aggregate(ReportRow& row, const std::vector<int>& ks, Aggregation how) {
  row.pass.assign(ks.size(), std::nullopt);
  if (row.counts.empty()) return;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    int k = ks[i];
    if (how == Aggregation::Micro) {
      int n = 0, c = 0;
      for (const auto& kc : row.counts) {
        n += kc.n;
        c += kc.c;
      }
      if (k <= n) row.pass[i] = pass_at_k(n, c, k);
    } else {
      double sum = 0;
      bool ok = true;
      for (const auto& kc : row.counts) {
        if (k > kc.n) {
          ok = false;
          break;
        }
        sum += pass_at_k(kc.n, kc.c, k);
      }
      if (ok) row.pass[i] = sum / static_cast<double>(row.counts.size());
    }
  }
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, llm::Backend& backend,
                                const std::vector<kernels::KernelSpec>& all_kernels,
                                const prompts::PromptAssets& assets) {
  ExperimentReport report;
  report.ks = cfg.ks;
  report.aggregation = cfg.aggregation;
  llm::GenerationParams params = cfg.params;
  params.n_samples = cfg.n;

  std::vector<const kernels::KernelSpec*> specs;
  for (const auto& name : cfg.kernels) {
    try {
      specs.push_back(&kernels::find_kernel(all_kernels, name));
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("experiment config names unknown kernel '{}'", name));
    }
  }
  std::map<std::string, std::vector<kernels::TestCase>> cases;
  for (const auto* k : specs) {
    cases.emplace(k->name, kernels::generate_testcases(*k, cfg.seed, cfg.testcases_per_kernel));
  }

  for (const auto& ab : cfg.ablations) {
    ReportRow row;
    row.label = ab.label;
    prompts::PromptSpec probe = prompt_spec(ab, *specs.front());
    std::vector<std::string> example_kernels;
    try {
      for (const auto* e : prompts::selected_examples(probe, assets)) example_kernels.push_back(e->kernel);
    } catch (const prompts::PromptError& e) {
      throw ConfigError(fmt::format("ablation '{}': {}", ab.label, e.what()));
    }

    std::vector<CandidateRecord> row_records;
    for (const auto* k : specs) {
      if (std::find(example_kernels.begin(), example_kernels.end(), k->name) != example_kernels.end()) {
        row.excluded.push_back(k->name);
        continue;
      }
      auto prompt = prompts::build_translation_prompt(prompt_spec(ab, *k), assets);
      auto completions = backend.complete(prompt, params);
      for (int i = 0; i < cfg.n; ++i) {
        CandidateRecord r;
        r.kernel = k->name;
        r.ablation = ab.label;
        r.fingerprint = prompt.fingerprint;
        r.sample_index = i;
        r.raw = completions.at(i).text;
        row_records.push_back(std::move(r));
      }
    }

    // candidates are independent; each worker owns a strided slice
    kernels::VerifyOptions vopts;
    vopts.short_circuit = true;
    auto work = [&](std::size_t start, std::size_t stride) {
      for (std::size_t i = start; i < row_records.size(); i += stride) {
        auto& r = row_records[i];
        r.extracted = extract_code(r.raw);
        const auto& spec = kernels::find_kernel(all_kernels, r.kernel);
        if (!r.extracted) {
          r.verdict.failure = kernels::FailureKind::ParseError;
          r.verdict.message = "no code found in completion";
          continue;
        }
        r.verdict = kernels::verify_text(*r.extracted, spec, cases.at(r.kernel), vopts);
      }
    };
    std::size_t jobs = std::min<std::size_t>(static_cast<std::size_t>(cfg.jobs), std::max<std::size_t>(1, row_records.size()));
    if (jobs <= 1) {
      work(0, 1);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(work, t, jobs);
      for (auto& t : pool) t.join();
    }

    for (const auto* k : specs) {
      if (std::find(row.excluded.begin(), row.excluded.end(), k->name) != row.excluded.end()) continue;
      KernelCount kc{k->name, 0, 0};
      for (const auto& r : row_records) {
        if (r.kernel != k->name) continue;
        ++kc.n;
        if (r.verdict.passed) ++kc.c;
      }
      row.counts.push_back(kc);
    }
    aggregate(row, cfg.ks, cfg.aggregation);
    report.rows.push_back(std::move(row));
    std::move(row_records.begin(), row_records.end(), std::back_inserter(report.records));
  }

  json params_doc = json::parse(llm::params_canonical(params));
  params_doc["n_samples"] = params.n_samples;
  report.metadata = {{"seed", cfg.seed},
                     {"params", params_doc},
                     {"backend", backend.id()},
                     {"testcases_per_kernel", cfg.testcases_per_kernel},
                     {"aggregation", cfg.aggregation == Aggregation::Micro ? "micro" : "macro"}};
  return report;
}

namespace {

std::string percent(const std::optional<double>& v) {
  return v ? fmt::format("{:.2f}%", *v * 100.0) : std::string("n/a");
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

// SOURCE_DATE_EPOCH pins the date for reproducible reports.
std::string today_utc() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) now = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  std::tm tm{};
  gmtime_r(&now, &tm);
  return fmt::format("{:04}-{:02}-{:02}", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday);
}

}  // namespace

std::string render_report(const ExperimentReport& r, ReportFormat format) {
  if (format == ReportFormat::Csv) {
    std::string out = "configuration,n,c";
    for (int k : r.ks) out += fmt::format(",k={}", k);
    out += "\n";
    for (const auto& row : r.rows) {
      int n = 0, c = 0;
      for (const auto& kc : row.counts) {
        n += kc.n;
        c += kc.c;
      }
      out += fmt::format("{},{},{}", csv_field(row.label), n, c);
      for (const auto& v : row.pass) out += v ? fmt::format(",{:.2f}", *v * 100.0) : std::string(",");
      out += "\n";
    }
    return out;
  }

  std::size_t label_w = std::string_view("Configuration").size();
  for (const auto& row : r.rows) label_w = std::max(label_w, row.label.size());
  std::vector<std::size_t> col_w;
  for (std::size_t i = 0; i < r.ks.size(); ++i) {
    std::size_t w = fmt::format("k={}", r.ks[i]).size();
    for (const auto& row : r.rows) w = std::max(w, percent(i < row.pass.size() ? row.pass[i] : std::nullopt).size());
    col_w.push_back(w);
  }
  std::string out = fmt::format("{:<{}}", "Configuration", label_w);
  std::size_t total_w = label_w;
  for (std::size_t i = 0; i < r.ks.size(); ++i) {
    out += fmt::format(" | {:>{}}", fmt::format("k={}", r.ks[i]), col_w[i]);
    total_w += 3 + col_w[i];
  }
  out += "\n" + std::string(total_w, '-') + "\n";
  for (const auto& row : r.rows) {
    out += fmt::format("{:<{}}", row.label, label_w);
    for (std::size_t i = 0; i < r.ks.size(); ++i) {
      out += fmt::format(" | {:>{}}", percent(i < row.pass.size() ? row.pass[i] : std::nullopt), col_w[i]);
    }
    out += "\n";
  }
  std::string notes;
  for (const auto& row : r.rows) {
    if (row.counts.empty() && row.excluded.empty()) continue;
    int n = 0, c = 0;
    for (const auto& kc : row.counts) {
      n += kc.n;
      c += kc.c;
    }
    notes += fmt::format("{}: {} kernels, {}/{} samples passed", row.label, row.counts.size(), c, n);
    if (!row.excluded.empty()) {
      std::string ex;
      for (const auto& e : row.excluded) ex += (ex.empty() ? "" : ", ") + e;
      notes += fmt::format("; excluded {} (in-context example)", ex);
    }
    notes += "\n";
  }
  if (!notes.empty()) out += "\n" + notes;
  return out;
}

void write_report(const ExperimentReport& r, const fs::path& out_dir) {
  fs::create_directories(out_dir / "records");
  write_file_atomic(out_dir / "report.txt", render_report(r, ReportFormat::Table));
  write_file_atomic(out_dir / "report.csv", render_report(r, ReportFormat::Csv));
  json rows = json::array();
  for (const auto& row : r.rows) {
    json counts = json::array();
    for (const auto& kc : row.counts) counts.push_back({{"kernel", kc.kernel}, {"n", kc.n}, {"c", kc.c}});
    json pass = json::object();
    for (std::size_t i = 0; i < r.ks.size(); ++i) {
      pass[fmt::format("k={}", r.ks[i])] = row.pass[i] ? json(*row.pass[i]) : json(nullptr);
    }
    rows.push_back({{"label", row.label}, {"counts", counts}, {"excluded", row.excluded}, {"pass_at_k", pass}});
  }
  json meta = r.metadata;
  if (!meta.contains("date")) meta["date"] = today_utc();
  write_file_atomic(out_dir / "manifest.json", json{{"metadata", meta}, {"rows", rows}}.dump(2) + "\n");
  std::map<std::string, int> row_index;
  for (std::size_t i = 0; i < r.rows.size(); ++i) row_index.emplace(r.rows[i].label, static_cast<int>(i));
  for (const auto& rec : r.records) {
    auto dir = out_dir / "records" / fmt::format("{:02}_{}", row_index[rec.ablation], slug(rec.ablation)) / rec.kernel;
    fs::create_directories(dir);
    write_file_atomic(dir / fmt::format("{:03}.json", rec.sample_index), record_json(rec).dump(2) + "\n");
  }
}

}  // namespace talift::eval
