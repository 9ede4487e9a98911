#include "sadda/cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sadda/data.hpp"
#include "sadda/experiment.hpp"
#include "sadda/gradcheck.hpp"
#include "sadda/networks.hpp"
#include "sadda/pipeline.hpp"
#include "sadda/report.hpp"

namespace sadda {
namespace {

namespace fs = std::filesystem;

/// Raised for problems the user can fix by changing arguments or inputs.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string command;
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::size_t trials = 100;
  std::string inject_fault;
};

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

class Manifest {
 public:
  Manifest(const Options& opt) : opt_(opt), started_(utc_now()) {}

  void set_config(const ExperimentConfig& cfg) {
    std::istringstream lines(render_config(cfg));
    std::string line;
    while (std::getline(lines, line)) {
      const auto eq = line.find(" = ");
      if (eq != std::string::npos) resolved_[line.substr(0, eq)] = line.substr(eq + 3);
    }
  }

  fs::path artifact(const std::string& name) {
    artifacts_.push_back(name);
    return fs::path(opt_.out) / name;
  }

  void write() const {
    for (const auto& a : artifacts_) {
      if (!fs::exists(fs::path(opt_.out) / a)) throw std::runtime_error("artifact missing after run: " + a);
    }
    nlohmann::ordered_json j;
    j["command"] = opt_.command;
    j["config_path"] = opt_.config;
    j["output_dir"] = opt_.out;
    j["resolved_config"] = resolved_;
    j["started_at"] = started_;
    j["finished_at"] = utc_now();
    j["artifacts"] = artifacts_;
    write_text(fs::path(opt_.out) / (opt_.command + "_manifest.json"), j.dump(2) + "\n");
  }

 private:
  const Options& opt_;
  std::string started_;
  nlohmann::ordered_json resolved_ = nlohmann::ordered_json::object();
  std::vector<std::string> artifacts_;
};

ExperimentConfig load_experiment(const Options& opt) {
  if (opt.config.empty()) throw UsageError("--config is required for " + opt.command);
  if (!fs::is_regular_file(opt.config)) throw UsageError("config file not found: " + opt.config);
  ExperimentConfig cfg;
  try {
    cfg = experiment_from_config(load_config_file(opt.config));
  } catch (const FormatError& e) {
    throw UsageError(e.what());
  }
  if (opt.seed) cfg.train.seed = *opt.seed;
  return cfg;
}

ParameterSet<float> load_network(const Options& opt, const std::string& name,
                                 const ArchitecturePreset& preset, NetworkRole role) {
  const fs::path path = fs::path(opt.out) / name;
  if (!fs::is_regular_file(path)) throw UsageError("missing checkpoint: " + path.string());
  ParameterSet<float> params;
  try {
    params = load_checkpoint(path);
  } catch (const FormatError& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
  const auto expected = init_params<float>(preset, role, 0);
  bool compatible = params.size() == expected.size();
  for (const auto& [key, value] : expected) {
    compatible = compatible && params.contains(key) && params.at(key).shape() == value.shape();
  }
  if (!compatible) throw UsageError(path.string() + ": parameters do not match the configured model");
  return params;
}

int cmd_pretrain(const Options& opt, std::ostream& out) {
  const auto cfg = load_experiment(opt);
  Manifest manifest(opt);
  manifest.set_config(cfg);
  fs::create_directories(opt.out);
  const auto data = build_experiment_data(cfg);
  const auto result = pretrain(data.source.train, cfg.train);

  save_checkpoint(result.encoder, manifest.artifact("m_s.ckpt"));
  save_checkpoint(result.classifier, manifest.artifact("c_s.ckpt"));
  write_text(manifest.artifact("pretrain_metrics.csv"), pretrain_metrics_csv(result.report));
  Series loss{"classification", {}};
  for (const auto& m : result.report.history()) loss.values.push_back(m.class_loss);
  write_text(manifest.artifact("pretrain_loss.svg"), render_loss_svg("pretraining loss", {loss}));
  manifest.write();

  const double acc = compose_and_evaluate(result.encoder, result.classifier, cfg.train.preset,
                                          data.source.val);
  out << "pretrain: " << result.report.history().size() << " epochs, source val accuracy "
      << format_real(acc) << "\n";
  return kExitOk;
}

int cmd_adapt(const Options& opt, std::ostream& out) {
  const auto cfg = load_experiment(opt);
  const auto& preset = cfg.train.preset;
  const auto m_s = load_network(opt, "m_s.ckpt", preset, NetworkRole::encoder);
  const auto c_s = load_network(opt, "c_s.ckpt", preset, NetworkRole::classifier);
  Manifest manifest(opt);
  manifest.set_config(cfg);
  const auto data = build_experiment_data(cfg);

  AdaptMonitor monitor{&data.source.val, &data.target.val};
  const auto result = adapt(m_s, c_s, data.source.train, data.target.train.without_labels(),
                            cfg.train, monitor);

  save_checkpoint(result.target_encoder, manifest.artifact("m_t.ckpt"));
  save_checkpoint(result.discriminator, manifest.artifact("d.ckpt"));
  write_text(manifest.artifact("adapt_metrics.csv"), adapt_metrics_csv(result.report));
  Series disc{"discriminator", {}}, adv{"adversarial", {}};
  for (const auto& m : result.report.history()) {
    disc.values.push_back(m.disc_loss);
    adv.values.push_back(m.adv_loss);
  }
  write_text(manifest.artifact("adapt_loss.svg"), render_loss_svg("adaptation losses", {disc, adv}));
  const char* reason = stop_reason_name(result.report.stop_reason().value());
  write_text(manifest.artifact("stop_reason.txt"), std::string(reason) + "\n");
  manifest.write();

  out << "adapt: " << result.report.history().size() << " epochs, stop reason " << reason << "\n";
  return kExitOk;
}

int cmd_eval(const Options& opt, std::ostream& out) {
  const auto cfg = load_experiment(opt);
  const auto& preset = cfg.train.preset;
  const auto m_s = load_network(opt, "m_s.ckpt", preset, NetworkRole::encoder);
  const auto c_s = load_network(opt, "c_s.ckpt", preset, NetworkRole::classifier);
  const auto m_t = load_network(opt, "m_t.ckpt", preset, NetworkRole::encoder);
  Manifest manifest(opt);
  manifest.set_config(cfg);
  const auto data = build_experiment_data(cfg);
  const auto reference = train_on_target(data, cfg);

  const std::vector<AccuracyRow> rows{
      {"source_only", compose_and_evaluate(m_s, c_s, preset, data.target.test)},
      {"sadda", compose_and_evaluate(m_t, c_s, preset, data.target.test)},
      {"train_on_target",
       compose_and_evaluate(reference.encoder, reference.classifier, preset, data.target.test)},
  };
  const std::string text = report_text(rows, "target test accuracy (" +
                                                 std::to_string(data.target.test.size()) + " samples)");
  write_text(manifest.artifact("report.txt"), text);
  write_text(manifest.artifact("report.csv"), report_csv(rows));
  manifest.write();
  out << text;
  return kExitOk;
}

int cmd_export_embeddings(const Options& opt, std::ostream& out) {
  const auto cfg = load_experiment(opt);
  const auto& preset = cfg.train.preset;
  const auto m_s = load_network(opt, "m_s.ckpt", preset, NetworkRole::encoder);
  const auto m_t = load_network(opt, "m_t.ckpt", preset, NetworkRole::encoder);
  Manifest manifest(opt);
  manifest.set_config(cfg);
  const auto data = build_experiment_data(cfg);

  auto export_one = [&](const DomainDataset& ds, const ParameterSet<float>& encoder,
                        const std::string& name) {
    const auto rows = embedding_rows(ds, cfg.data.embeddings_per_label, cfg.train.seed);
    const auto picked = ds.gather(rows);
    const auto features = encode(encoder, preset, picked.inputs);
    write_text(manifest.artifact(name), embeddings_csv(*picked.labels, features));
    out << name << ": " << rows.size() << " rows, " << preset.feature_size() << " features\n";
  };
  export_one(data.source.test, m_s, "embeddings_source.csv");
  export_one(data.target.test, m_t, "embeddings_target.csv");
  manifest.write();
  return kExitOk;
}

int cmd_gradcheck(const Options& opt, std::ostream& out, std::ostream& err) {
  constexpr double kTolerance = 1e-5;
  if (!opt.inject_fault.empty()) {
    bool known = false;
    for (const auto& c : gradcheck_registry()) known = known || c.name == opt.inject_fault;
    if (!known) throw UsageError("--inject-fault: no registered op named '" + opt.inject_fault + "'");
  }
  const auto outcomes = run_gradcheck_suite(opt.trials, kTolerance, opt.inject_fault);
  bool ok = true;
  for (const auto& o : outcomes) {
    out << std::left << std::setw(44) << o.name << " trials " << o.trials << "  worst rel error "
        << std::scientific << std::setprecision(3) << o.worst_error << std::defaultfloat
        << (o.passed ? "  ok" : "  FAILED") << "\n";
    if (!o.passed) {
      err << "gradcheck failed for op " << o.name << ": worst relative error " << o.worst_error
          << " >= " << kTolerance << "\n";
      ok = false;
    }
  }
  return ok ? kExitOk : kExitVerificationFailed;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semi-supervised adversarial domain adaptation experiments", "sadda"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", opt.config, "experiment config file");
    if (config_required) c->required();
    sub->add_option("--out", opt.out, "directory for checkpoints and reports")->capture_default_str();
    sub->add_option("--seed", opt.seed, "override train.seed");
  };
  add_common(app.add_subcommand("pretrain", "train source encoder and classifier"), true);
  add_common(app.add_subcommand("adapt", "adversarially train the target encoder"), true);
  add_common(app.add_subcommand("eval", "compare source-only, adapted and target-trained models"), true);
  add_common(app.add_subcommand("export-embeddings", "write encoder features as CSV"), true);
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  add_common(gc, false);
  gc->add_option("--trials", opt.trials, "seeded trials per op")->capture_default_str()->check(CLI::PositiveNumber);
  gc->add_option("--inject-fault", opt.inject_fault, "corrupt the backward rule of this op");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, eo;
    const int rc = app.exit(e, o, eo);
    out << o.str();
    err << eo.str();
    return rc == 0 ? kExitOk : kExitUsage;
  }
  opt.command = app.get_subcommands().front()->get_name();

  try {
    if (opt.command == "pretrain") return cmd_pretrain(opt, out);
    if (opt.command == "adapt") return cmd_adapt(opt, out);
    if (opt.command == "eval") return cmd_eval(opt, out);
    if (opt.command == "export-embeddings") return cmd_export_embeddings(opt, out);
    return cmd_gradcheck(opt, out, err);
  } catch (const UsageError& e) {
    err << "sadda " << opt.command << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "sadda " << opt.command << ": runtime fault: " << e.what() << "\n";
    return kExitRuntimeFault;
  }
}

}  // namespace sadda
