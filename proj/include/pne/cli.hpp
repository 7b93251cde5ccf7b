/* Copyright 2026 The PNE Contrast Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Command-line front end.
//
//   run              train one model, write report.json (+ embeddings.csv)
//   check-grad       finite-difference suite, JSON to stdout
//   oracle-test      brute-force and identity checks, JSON to stdout
//   dump-embeddings  train one model, write embeddings.csv only
//
// Exit codes: 0 success, 1 validation or runtime failure, 2 usage or
// configuration error.

#ifndef PNE_CLI_HPP_
#define PNE_CLI_HPP_

#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pne/config.hpp"
#include "pne/gradients.hpp"
#include "pne/metrics.hpp"
#include "pne/toytrain.hpp"
#include "pne/validation.hpp"

namespace pne::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

inline constexpr double kGradientTolerance = 1e-6;

/// Flags shared by `run` and `dump-embeddings`. Unset flags leave the
/// config file (or the defaults) alone.
struct RunOverrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> mode;
  std::optional<double> temperature;
  std::optional<double> alpha;
  std::optional<std::size_t> anchor_cap;
  std::optional<std::size_t> pairs_per_group;
  bool dump_embeddings = false;

  void attach(CLI::App& cmd) {
    cmd.add_option("--config", config_path, "JSON config file");
    cmd.add_option("--seed", seed, "global seed");
    cmd.add_option("--out", out, "output directory");
    cmd.add_option("--mode", mode, "ce, ce+nce or ce+pne");
    cmd.add_option("--temperature", temperature, "contrast temperature");
    cmd.add_option("--alpha", alpha, "contrast weight");
    cmd.add_option("--anchor-cap", anchor_cap, "max anchors per scene");
    cmd.add_option("--pairs-per-group", pairs_per_group, "max positives per group");
  }

  RunConfig resolve() const {
    RunConfig c = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (seed) c.seed = *seed;
    if (out) c.out = *out;
    if (mode) c.mode = parse_loss_mode(*mode);
    if (temperature) c.temperature = *temperature;
    if (alpha) c.alpha = *alpha;
    if (anchor_cap) c.anchor_cap = *anchor_cap;
    if (pairs_per_group) c.pairs_per_group = *pairs_per_group;
    c.validate();
    return c;
  }
};

namespace detail {

inline void ensure_directory(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw ConfigError("out", "cannot create directory " + dir);
  }
}

inline std::string embeddings_csv(const ToyModel& model, const SceneSpec& spec,
                                  const std::filesystem::path& path) {
  const Scene scene = evaluation_scene(spec);
  const ForwardResult fwd =
      forward(model, scene.raw, scene.labels.height(), scene.labels.width());
  dump_embeddings(fwd.embeddings, scene.labels, argmax_predict(fwd.scores), path);
  return path.string();
}

struct Trained {
  ExperimentReport report;
  ToyModel model;
};

inline Trained train(const RunConfig& cfg) {
  const TrainConfig tc = cfg.train_config();
  const SceneSpec spec = cfg.scene_spec();
  ToyModel model(tc.dims(spec));
  ExperimentReport report = run_experiment(tc, spec, &model);
  report.config = to_json(cfg);
  return Trained{std::move(report), std::move(model)};
}

}  // namespace detail

inline int cmd_run(const RunOverrides& o, std::ostream& out) {
  const RunConfig cfg = o.resolve();
  detail::ensure_directory(cfg.out);
  const detail::Trained t = detail::train(cfg);
  const std::filesystem::path dir(cfg.out);
  if (o.dump_embeddings) {
    detail::embeddings_csv(t.model, cfg.scene_spec(), dir / "embeddings.csv");
  }
  nlohmann::ordered_json timing;
  timing["wall_clock_seconds"] = t.report.wall_clock_seconds;
  write_file_atomically(dir / "timing.json", timing.dump(2) + "\n");
  write_file_atomically(dir / "report.json", to_json(t.report).dump(2) + "\n");

  const EvalRecord& last = t.report.final_record();
  out << "mode " << to_string(cfg.mode) << "  iterations " << cfg.iterations
      << "  miou " << last.miou << "  -> " << (dir / "report.json").string()
      << "\n";
  return kExitOk;
}

inline int cmd_dump_embeddings(const RunOverrides& o, std::ostream& out) {
  const RunConfig cfg = o.resolve();
  detail::ensure_directory(cfg.out);
  const detail::Trained t = detail::train(cfg);
  const auto path = std::filesystem::path(cfg.out) / "embeddings.csv";
  out << detail::embeddings_csv(t.model, cfg.scene_spec(), path) << "\n";
  return kExitOk;
}

inline nlohmann::ordered_json to_json(const GradCheckReport& r) {
  nlohmann::ordered_json j;
  j["max_relative_error"] = r.max_relative_error;
  j["instances"] = r.instances;
  j["parameter_blocks"] = r.per_parameter_errors.size();
  j["non_finite"] = r.non_finite;
  return j;
}

inline int cmd_check_grad(std::size_t trials, std::uint64_t seed,
                          std::ostream& out) {
  const GradientSuiteReport r = run_gradient_suite(trials, seed);
  const bool ok = r.passed(kGradientTolerance);
  nlohmann::ordered_json j;
  j["trials"] = trials;
  j["seed"] = seed;
  j["step"] = r.nce.step;
  j["tolerance"] = kGradientTolerance;
  j["max_relative_error"] = r.max_relative_error();
  j["passed"] = ok;
  j["losses"]["nce"] = to_json(r.nce);
  j["losses"]["pne_basic"] = to_json(r.pne_basic);
  j["losses"]["pne_weighted"] = to_json(r.pne_weighted);
  j["losses"]["cross_entropy"] = to_json(r.cross_entropy);
  out << j.dump(2) << "\n";
  return ok ? kExitOk : kExitFailure;
}

inline int cmd_oracle_test(std::uint64_t seed, std::ostream& out) {
  const std::vector<CheckResult> checks = run_oracle_suite(seed);
  bool ok = true;
  nlohmann::ordered_json j;
  j["seed"] = seed;
  auto& list = j["checks"] = nlohmann::ordered_json::array();
  for (const CheckResult& c : checks) {
    ok = ok && c.passed();
    list.push_back(pne::to_json(c));
  }
  j["passed"] = ok;
  out << j.dump(2) << "\n";
  return ok ? kExitOk : kExitFailure;
}

/// Parses `argv` and runs the chosen subcommand.
inline int main(int argc, const char* const* argv, std::ostream& out,
                std::ostream& err) {
  CLI::App app{"Contrastive segmentation loss toolkit"};
  app.name("pne");
  app.require_subcommand(1);

  RunOverrides run_opts, dump_opts;
  CLI::App* run = app.add_subcommand("run", "train one model and write report.json");
  run_opts.attach(*run);
  run->add_flag("--dump-embeddings", run_opts.dump_embeddings,
                "also write embeddings.csv");

  std::size_t trials = 100;
  std::uint64_t grad_seed = 0;
  CLI::App* grad = app.add_subcommand("check-grad", "finite-difference gradient suite");
  grad->add_option("--trials", trials, "instances per loss")->check(CLI::PositiveNumber);
  grad->add_option("--seed", grad_seed, "seed");

  std::uint64_t oracle_seed = 0;
  CLI::App* oracle = app.add_subcommand("oracle-test", "brute-force equivalence checks");
  oracle->add_option("--seed", oracle_seed, "seed");

  CLI::App* dump = app.add_subcommand("dump-embeddings",
                                      "train one model and write embeddings.csv");
  dump_opts.attach(*dump);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (run->parsed()) return cmd_run(run_opts, out);
    if (dump->parsed()) return cmd_dump_embeddings(dump_opts, out);
    if (grad->parsed()) return cmd_check_grad(trials, grad_seed, out);
    if (oracle->parsed()) return cmd_oracle_test(oracle_seed, out);
  } catch (const ConfigError& e) {
    err << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace pne::cli

#endif  // PNE_CLI_HPP_
