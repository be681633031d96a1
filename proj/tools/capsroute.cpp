// Command-line front end: data generation, training, evaluation, gradient
// checks, routing timings and the lambda_reg sweep.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "capsroute/bench.hpp"
#include "capsroute/config.hpp"
#include "capsroute/errors.hpp"
#include "capsroute/grad_suite.hpp"
#include "capsroute/synth.hpp"
#include "capsroute/train.hpp"

namespace fs = std::filesystem;
using namespace capsroute;

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("-c,--config", common.config_file, "key=value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("-s,--set", common.overrides, "override one key, e.g. --set train.lr=1e-3 (repeatable)");
}

ExperimentConfig resolve(const Common& common) {
  ExperimentConfig config;
  if (!common.config_file.empty()) apply_config(config, read_config_file(common.config_file));
  std::string text;
  for (const auto& kv : common.overrides) text += kv + '\n';
  apply_config(config, parse_config_text(text));
  return config;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

Dataset obtain_data(const std::string& path, const SynthConfig& synth, Phase phase) {
  return path.empty() ? generate(synth, phase) : load(path);
}

void write_reports(const fs::path& dir, const ExperimentRecord& record) {
  write_file(dir / "record.txt", record.to_text());
  write_file(dir / "timings.txt", record.timings_text());
  std::string confusion;
  for (const auto& [split, report] : record.metrics) {
    write_file(dir / ("metrics_" + split + ".csv"), "metric,value,seed\n" + report.to_csv_rows(record.seed));
    confusion += "[" + split + "]\n" + report.confusion_table();
  }
  write_file(dir / "confusion.txt", confusion);
}

std::vector<RoutingShape> bench_shapes(const std::vector<std::size_t>& n_in, std::size_t batch, std::size_t n_out,
                                       std::size_t d_out) {
  std::vector<RoutingShape> shapes;
  for (std::size_t n : n_in) shapes.push_back({batch, n, n_out, d_out});
  return shapes;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Capsule-network routing experiments on synthetic echo-like images"};
  app.require_subcommand(1);

  Common gen_common;
  std::string gen_out;
  std::string gen_phase = "train";
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset as an ECAP file");
  add_common(gen, gen_common);
  gen->add_option("-o,--out", gen_out, "output .ecap path")->required();
  gen->add_option("--phase", gen_phase, "train or test rotation range")->check(CLI::IsMember({"train", "test"}));

  Common train_common;
  std::string train_data, test_data, run_dir = "run";
  auto* trn = app.add_subcommand("train", "train one model and write its run directory");
  add_common(trn, train_common);
  trn->add_option("--data", train_data, "ECAP file to split; generated from synth.* keys when omitted");
  trn->add_option("--test-data", test_data, "separate ECAP test set replacing the test split");
  trn->add_option("-o,--run-dir", run_dir, "output directory");

  std::string eval_model, eval_data, eval_out = "eval";
  auto* evl = app.add_subcommand("eval", "evaluate a saved model on an ECAP file");
  evl->add_option("-m,--model", eval_model, "model.txt from a run directory")->required()->check(CLI::ExistingFile);
  evl->add_option("--data", eval_data, "ECAP file")->required()->check(CLI::ExistingFile);
  evl->add_option("-o,--out-dir", eval_out, "output directory");

  std::uint64_t grad_seed = 10;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference checks of every op, layer and loss");
  grad->add_option("--seed", grad_seed, "draw seed");

  std::vector<std::size_t> bench_n_in{128, 512, 1152};
  std::vector<int> bench_r{1, 2, 3, 4, 5};
  std::size_t bench_batch = 8, bench_n_out = 2, bench_d_out = 16, bench_repeats = 21;
  std::string bench_out;
  auto* bench = app.add_subcommand("bench-routing", "median wall time of dynamic and attention routing");
  bench->add_option("--n-in", bench_n_in, "input capsule counts");
  bench->add_option("--r", bench_r, "dynamic routing iteration counts");
  bench->add_option("--batch", bench_batch, "batch size");
  bench->add_option("--n-out", bench_n_out, "output capsules");
  bench->add_option("--d-out", bench_d_out, "output capsule dimension");
  bench->add_option("--repeats", bench_repeats, "timed calls per cell");
  bench->add_option("-o,--out", bench_out, "CSV path (stdout when omitted)");

  Common sweep_common;
  std::vector<double> sweep_grid{1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.5};
  std::string sweep_data, sweep_dir = "sweep";
  auto* sweep = app.add_subcommand("sweep-lambda", "train one model per lambda_reg on identical data");
  add_common(sweep, sweep_common);
  sweep->add_option("--grid", sweep_grid, "lambda_reg values");
  sweep->add_option("--data", sweep_data, "ECAP file; generated from synth.* keys when omitted");
  sweep->add_option("-o,--run-dir", sweep_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const ExperimentConfig config = resolve(gen_common);
      const Dataset data = generate(config.synth, gen_phase == "test" ? Phase::test : Phase::train);
      save(data, gen_out);
      std::cout << "wrote " << data.size() << " samples (" << data.positives() << " dilated) to " << gen_out << '\n';
    } else if (*trn) {
      const ExperimentConfig config = resolve(train_common);
      const Dataset data = obtain_data(train_data, config.synth, Phase::train);
      DatasetSplits splits = split(data, config.split, config.train.seed);
      if (!test_data.empty()) splits.test = load(test_data);
      Model model(config.model, Shape{data.channels, data.height, data.width}, config.train.seed);
      std::cout << model.shape_summary() << ", " << model.parameter_count() << " parameters\n";
      ExperimentRecord record = train(model, splits.train, splits.val, config.train);
      if (splits.test.size() > 0) record.metrics.emplace_back("test", evaluate(model, splits.test).report);
      fs::create_directories(run_dir);
      write_file(fs::path(run_dir) / "config.txt", to_config_text(config));
      write_reports(run_dir, record);
      save_model(model, fs::path(run_dir) / "model.txt");
      for (const auto& [split_name, report] : record.metrics) {
        std::printf("%-5s accuracy=%.4f f1=%.4f pr_auc=%s\n", split_name.c_str(), report.accuracy, report.f1,
                    report.pr_auc ? std::to_string(*report.pr_auc).c_str() : "undefined");
      }
      std::cout << "best epoch " << record.best_epoch << " of " << record.epochs.size() << "; run directory "
                << run_dir << '\n';
    } else if (*evl) {
      const Model model = load_model(eval_model);
      const Evaluation ev = evaluate(model, load(eval_data));
      fs::create_directories(eval_out);
      write_file(fs::path(eval_out) / "metrics.csv", "metric,value,seed\n" + ev.report.to_csv_rows(0));
      write_file(fs::path(eval_out) / "confusion.txt", ev.report.confusion_table());
      std::cout << ev.report.to_key_value();
    } else if (*grad) {
      bool ok = true;
      for (const auto& e : run_gradient_suite(grad_seed)) {
        std::printf("%-4s %-48s max_rel=%.3e tol=%.0e checked=%zu\n", e.passed() ? "ok" : "FAIL", e.name.c_str(),
                    e.result.max_rel_error, e.tolerance, e.result.checked);
        if (!e.passed()) std::printf("     worst: %s\n", e.result.worst.c_str());
        ok = ok && e.passed();
      }
      return ok ? 0 : 1;
    } else if (*bench) {
      const auto rows = bench_routing(bench_shapes(bench_n_in, bench_batch, bench_n_out, bench_d_out), bench_r,
                                      bench_repeats);
      const std::string csv = routing_table_csv(rows);
      if (bench_out.empty()) {
        std::cout << csv;
      } else {
        write_file(bench_out, csv);
      }
    } else if (*sweep) {
      const ExperimentConfig config = resolve(sweep_common);
      const Dataset data = obtain_data(sweep_data, config.synth, Phase::train);
      const DatasetSplits splits = split(data, config.split, config.train.seed);
      const auto rows = sweep_lambda(sweep_grid, config.model, config.train, splits, config.train.seed);
      fs::create_directories(sweep_dir);
      for (const auto& row : rows) {
        char name[64];
        std::snprintf(name, sizeof name, "record_lambda_%g.txt", row.lambda_reg);
        write_file(fs::path(sweep_dir) / name, row.record.to_text());
      }
      const std::string csv = sweep_table_csv(rows);
      write_file(fs::path(sweep_dir) / "sweep.csv", csv);
      std::cout << csv;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
