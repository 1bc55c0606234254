// Offline engagement summaries over exported metrics logs.

#include "neurochat/analysis/analysis.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  using namespace neurochat::analysis;
  namespace fs = std::filesystem;

  CLI::App app{"neurochat engagement analysis"};
  std::string input;
  std::string manifest_path;
  std::string out_dir;
  std::string field = "e_norm";
  app.add_option("--input", input, "directory of metrics logs (<session>.jsonl or <session>/metrics.jsonl)")
      ->required()
      ->check(CLI::ExistingDirectory);
  app.add_option("--manifest", manifest_path, "CSV: session,participant,condition,order")->required()->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory")->required();
  app.add_option("--field", field, "sample field to analyse")->capture_default_str()->check(CLI::IsMember({"e_norm", "e_window", "raw_e_epoch"}));
  CLI11_PARSE(app, argc, argv);

  try {
    std::ifstream min(manifest_path);
    const auto manifest = parse_manifest(min);
    std::vector<Warning> load_warnings;
    const auto records = load_records(input, manifest, field, load_warnings);
    auto summary = analyze(records);
    summary.warnings.insert(summary.warnings.begin(), load_warnings.begin(), load_warnings.end());

    fs::create_directories(out_dir);
    std::ofstream(fs::path(out_dir) / "summary.csv", std::ios::binary) << summary_csv(summary);
    std::ofstream(fs::path(out_dir) / "paired.csv", std::ios::binary) << paired_csv(summary);
    std::ofstream(fs::path(out_dir) / "warnings.csv", std::ios::binary) << warnings_csv(summary);

    for (const auto& w : summary.warnings) std::cerr << "warning: " << w.participant << ": " << w.message << '\n';
    std::cerr << records.size() << " participant(s), " << summary.paired.size() << " paired; mean difference "
              << fmt(summary.mean_difference) << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
