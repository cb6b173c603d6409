#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>

#include "berwald/berwald.hpp"
#include "berwald/config.hpp"
#include "berwald/report.hpp"
#include "berwald/runner.hpp"

namespace {

using berwald::json;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw berwald::Error("cannot write " + path);
  out << text;
}

void emit_json(const json& j, const std::optional<std::string>& path) {
  const std::string text = j.dump(2) + "\n";
  if (path) {
    write_text(*path, text);
  } else {
    std::cout << text;
  }
}

struct Common {
  std::string config;
  std::string out;
  std::string csv;
  bool timings = false;
  int threads = 0;
};

int run_analyze(const Common& c) {
  const berwald::RunConfig cfg = berwald::load_config(c.config);
  const int threads = c.threads > 0 ? c.threads : berwald::worker_count();
  const auto reports = berwald::run_analyze(cfg, threads);
  const std::optional<std::string> out = !c.out.empty() ? std::optional(c.out) : cfg.json_out;
  emit_json(berwald::run_report_json(cfg, reports, c.timings || cfg.timings), out);
  const std::optional<std::string> csv = !c.csv.empty() ? std::optional(c.csv) : cfg.csv_out;
  if (csv) {
    std::ofstream f(*csv, std::ios::binary);
    if (!f) throw berwald::Error("cannot write " + *csv);
    berwald::write_csv(f, reports);
  }
  const berwald::RunSummary s = berwald::summarize(reports);
  std::cerr << s.points << " point(s): " << s.solvable << " solvable, " << s.not_solvable << " not solvable, "
            << s.degenerate << " riemannian, " << s.errors << " failed\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (reports[i].error) std::cerr << "point " << i << ": " << *reports[i].error << "\n";
  }
  return berwald::exit_code(s);
}

int run_convergence(const Common& c) {
  const berwald::RunConfig cfg = berwald::load_config(c.config);
  const int threads = c.threads > 0 ? c.threads : berwald::worker_count();
  const auto tables = berwald::run_convergence(cfg, threads);
  emit_json(berwald::convergence_json(cfg, tables), c.out.empty() ? std::nullopt : std::optional(c.out));
  if (!c.csv.empty()) {
    std::ofstream f(c.csv, std::ios::binary);
    if (!f) throw berwald::Error("cannot write " + c.csv);
    f << "point_index,level,torsion_norm,gamma_delta,spectrum_delta,torsion_delta\n";
    f.precision(17);
    for (std::size_t i = 0; i < tables.size(); ++i)
      for (const auto& r : tables[i].rows) {
        f << i << ',' << r.level << ',';
        if (r.error) {
          f << ",,,\n";
        } else {
          f << r.torsion_norm << ',' << r.gamma_delta << ',' << r.spectrum_delta << ',' << r.torsion_delta << '\n';
        }
      }
  }
  for (const auto& t : tables)
    for (const auto& r : t.rows)
      if (r.error) return 1;
  return 0;
}

int run_randers_check(const Common& c) {
  const berwald::RunConfig cfg = berwald::load_config(c.config);
  const auto checks = berwald::run_randers_check(cfg);
  emit_json(berwald::randers_check_json(cfg, checks), c.out.empty() ? std::nullopt : std::optional(c.out));
  bool failed = false;
  bool unsolvable = false;
  for (const auto& k : checks) {
    failed = failed || k.error.has_value();
    unsolvable = unsolvable || (!k.error && !k.solvable);
  }
  return unsolvable ? 2 : (failed ? 1 : 0);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Extremal compatible linear connections of Finsler metrics"};
  app.require_subcommand(1);
  Common common;

  auto add_common = [&](CLI::App* sub, bool with_csv) {
    sub->add_option("-c,--config", common.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--out", common.out, "JSON output path (default: stdout)");
    if (with_csv) sub->add_option("--csv", common.csv, "CSV summary output path");
    sub->add_option("-j,--threads", common.threads, "worker threads (default: BERWALD_THREADS or hardware)");
  };

  CLI::App* analyze = app.add_subcommand("analyze", "analyse the configured points");
  add_common(analyze, true);
  analyze->add_flag("--timings", common.timings, "include stage timings in the JSON report");
  CLI::App* grid = app.add_subcommand("grid", "alias of analyze");
  add_common(grid, true);
  grid->add_flag("--timings", common.timings, "include stage timings in the JSON report");
  CLI::App* conv = app.add_subcommand("convergence", "repeat the analysis over quadrature.levels");
  add_common(conv, true);
  CLI::App* check = app.add_subcommand("randers-check", "evaluate the Randers solvability condition only");
  add_common(check, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (analyze->parsed() || grid->parsed()) return run_analyze(common);
    if (conv->parsed()) return run_convergence(common);
    if (check->parsed()) return run_randers_check(common);
  } catch (const berwald::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
