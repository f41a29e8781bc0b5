// stepnet: synthesize, train, cross-validate, adapt, count and evaluate from the shell.
//
// Exit codes: 0 success, 1 usage error, 2 data or model error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stepnet/stepnet.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace stepnet;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr std::string_view kStepsSuffix = "_steps.csv";

fs::path annotation_for(const fs::path& csv) {
  return csv.parent_path() / (csv.stem().string() + std::string(kStepsSuffix));
}

Recording load_subject(const fs::path& csv, const std::optional<fs::path>& annot, bool require_annotation) {
  const fs::path a = annot ? *annot : annotation_for(csv);
  const std::string id = csv.stem().string();
  if (fs::exists(a)) return load_recording(csv, a, id, "csv");
  if (require_annotation) throw DataError("missing annotation file " + a.string());
  Recording rec;
  rec.subject_id = id;
  rec.device = "csv";
  rec.samples = load_samples(csv);
  if (rec.samples.size() < 2) throw DataError("need at least 2 samples to estimate the sample rate");
  rec.native_rate_hz =
      static_cast<double>(rec.samples.size() - 1) / (rec.samples.back().t - rec.samples.front().t);
  validate(rec);
  return rec;
}

/// Every `<id>.csv` in `dir` with its `<id>_steps.csv`, sorted by id.
std::vector<fs::path> subject_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("data directory " + dir.string() + " does not exist");
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.path().extension() != ".csv") continue;
    if (name.size() >= kStepsSuffix.size() && name.ends_with(kStepsSuffix)) continue;
    out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw DataError("no subject recordings in " + dir.string());
  return out;
}

std::vector<WindowSet> load_dir(const fs::path& dir, std::vector<std::string>& inputs) {
  std::vector<WindowSet> out;
  for (const auto& csv : subject_files(dir)) {
    out.push_back(prepare(load_subject(csv, std::nullopt, true)));
    inputs.push_back(csv.string());
    inputs.push_back(annotation_for(csv).string());
  }
  return out;
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

/// One per run, written next to the primary output. Reports refer to it by file name.
struct Manifest {
  std::string command;
  ordered_json config = ordered_json::object();
  std::optional<std::uint64_t> seed;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  fs::path path;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  std::string ref() const { return path.filename().string(); }

  void write() const {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ordered_json j = {{"command", command}, {"config", config}};
    j["seed"] = seed ? ordered_json(*seed) : ordered_json(nullptr);
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["wall_clock_s"] = secs;
    detail::write_atomic(path, dump(j));
  }
};

fs::path manifest_beside(const fs::path& primary, const std::string& command) {
  if (primary.empty()) return fs::path("stepnet-" + command + ".manifest.json");
  return fs::path(primary.string() + ".manifest.json");
}

void emit(const ordered_json& report, const std::string& out, Manifest& m) {
  if (out.empty()) {
    std::cout << dump(report);
  } else {
    detail::write_atomic(out, dump(report));
    m.outputs.push_back(out);
  }
}

std::string subject_name(const std::string& prefix, int k, int n) {
  const int width = std::max(2, static_cast<int>(std::to_string(n).size()));
  std::string num = std::to_string(k);
  return prefix + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(num.size()))), '0') + num;
}

std::string labels_string(std::span<const Foot> labels) {
  std::string s;
  for (Foot f : labels) s += foot_char(f);
  return s;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  int subjects = 10;
  double duration = 360.0;
  std::uint64_t seed = 0;
  std::string out;
  std::string prefix = "S";
  double rate = 100.0;
  double noise = 0.05;
  std::optional<double> cadence;
  bool shifted = false;
  DomainShift shift;
};

int run_synth(const SynthArgs& a) {
  if (a.subjects < 1) throw UsageError("--subjects must be >= 1");
  Manifest m{"synth"};
  m.seed = a.seed;
  m.config = {{"subjects", a.subjects}, {"duration_s", a.duration}, {"prefix", a.prefix},
              {"sample_rate_hz", a.rate}, {"noise_sd", a.noise}, {"shifted", a.shifted}};
  if (a.cadence) m.config["cadence_spm"] = *a.cadence;
  if (a.shifted) {
    m.config["shift"] = {{"scale", a.shift.scale}, {"rotation_deg", a.shift.rotation_deg},
                         {"noise_factor", a.shift.noise_factor}};
  }
  const fs::path dir(a.out);
  fs::create_directories(dir);
  m.path = dir / "synth.manifest.json";
  SynthConfig base;
  base.sample_rate_hz = a.rate;
  base.noise_sd = a.noise;
  for (int k = 1; k <= a.subjects; ++k) {
    const std::string id = subject_name(a.prefix, k, a.subjects);
    SynthConfig cfg = subject_config(id, a.seed, a.duration, base);
    if (a.cadence) cfg.cadence_spm = *a.cadence;
    if (a.shifted) cfg = shifted(cfg, a.shift);
    cfg.validate();
    const Recording rec = synthesize(cfg);
    const fs::path csv = dir / (id + ".csv"), steps = dir / (id + std::string(kStepsSuffix));
    const fs::path meta = dir / (id + ".meta.json");
    write_recording(rec, csv, steps);
    detail::write_atomic(meta, synth_meta(cfg));
    for (const auto& p : {csv, steps, meta}) m.outputs.push_back(p.string());
  }
  m.write();
  std::cerr << "wrote " << a.subjects << " subjects to " << dir.string() << "\n";
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string out;
  std::string report;
  TrainConfig cfg;
  std::size_t fold_size = 2;
};

ordered_json train_config_json(const TrainConfig& c) {
  return {{"epochs", c.epochs}, {"lr", c.lr}, {"batch_size", c.batch_size},
          {"clip", c.clip}, {"dropout_rate", c.dropout_rate}};
}

int run_train(const TrainArgs& a) {
  a.cfg.validate();
  Manifest m{"train"};
  m.seed = a.cfg.seed;
  m.config = train_config_json(a.cfg);
  m.path = manifest_beside(a.out, "train");
  const auto data = load_dir(a.data, m.inputs);
  const TrainResult r = train_general(data, a.cfg, NetShape{}, [](int e, double loss) {
    std::cerr << "epoch " << e + 1 << " loss " << loss << "\n";
  });
  save_model(r.net, a.out);
  m.outputs.push_back(a.out);
  if (!a.report.empty()) {
    std::vector<std::string> ids;
    for (const auto& ws : data) ids.push_back(ws.subject_id);
    emit({{"manifest", m.ref()}, {"subjects", ids}, {"epoch_loss", r.epoch_loss}, {"lineage", r.net.lineage}},
         a.report, m);
  }
  m.write();
  return 0;
}

int run_cv(const TrainArgs& a) {
  a.cfg.validate();
  if (a.fold_size < 1) throw UsageError("--fold-size must be >= 1");
  Manifest m{"cv"};
  m.seed = a.cfg.seed;
  m.config = train_config_json(a.cfg);
  m.config["fold_size"] = a.fold_size;
  m.path = manifest_beside(a.report, "cv");
  const auto data = load_dir(a.data, m.inputs);
  const CVReport cv = cross_validate(data, a.cfg, a.fold_size);
  if (!a.out.empty()) {
    save_model(cv.best_model, a.out);
    m.outputs.push_back(a.out);
  }
  ordered_json j = {{"manifest", m.ref()}};
  j.update(to_json(cv));
  emit(j, a.report, m);
  m.write();
  return 0;
}

struct AdaptArgs {
  std::string model;
  std::string subject;
  std::string annot;
  std::string out;
  std::string report;
  AdaptConfig cfg;
};

int run_adapt(const AdaptArgs& a) {
  if (!(a.cfg.budget_s > 0.0)) throw UsageError("--seconds must be > 0");
  a.cfg.validate();
  Manifest m{"adapt"};
  m.seed = a.cfg.seed;
  m.config = {{"seconds", a.cfg.budget_s}, {"epochs_head", a.cfg.epochs_head}, {"lr_head", a.cfg.lr_head},
              {"epochs_full", a.cfg.epochs_full}, {"lr_full", a.cfg.lr_full}, {"batch_size", a.cfg.batch_size},
              {"clip", a.cfg.clip}};
  m.path = manifest_beside(a.out, "adapt");
  const StepNet general = load_model(a.model);
  const std::optional<fs::path> annot = a.annot.empty() ? std::nullopt : std::optional<fs::path>(a.annot);
  const WindowSet target = prepare(load_subject(a.subject, annot, true));
  m.inputs = {a.model, a.subject, annot ? a.annot : annotation_for(a.subject).string()};

  const AdaptationSplit split = split_for_adaptation(target, a.cfg.budget_s);
  const StepNet adapted = adapt(general, target, a.cfg);
  save_model(adapted, a.out);
  m.outputs.push_back(a.out);

  ordered_json report = {{"manifest", m.ref()},
                         {"subject_id", target.subject_id},
                         {"adapt_windows", split.adapt.windows.size()},
                         {"heldout_windows", split.test.windows.size()}};
  if (split.test.windows.empty() || split.test.ground_truth_steps == 0) {
    report["note"] = "no held-out remainder after the adaptation budget";
  } else {
    const MetricsReport before = evaluate(general, split.test);
    const MetricsReport after = evaluate(adapted, split.test);
    report["before"] = to_json(before);
    report["after"] = to_json(after);
    report["delta"] = {{"accuracy_class", after.accuracy_class - before.accuracy_class},
                       {"accuracy_steps", after.accuracy_steps - before.accuracy_steps}};
  }
  emit(report, a.report.empty() ? a.out + ".delta.json" : a.report, m);
  m.write();
  return 0;
}

struct CountArgs {
  std::string model;
  std::string input;
  std::string annot;
  std::string out;
  PaaConfig paa;
};

int run_count(const CountArgs& a) {
  Manifest m{"count"};
  m.path = manifest_beside(a.out, "count");
  const StepNet net = load_model(a.model);
  const Recording rec = load_subject(a.input, a.annot.empty() ? std::nullopt : std::optional<fs::path>(a.annot), false);
  m.inputs = {a.model, a.input};
  const WindowSet ws = prepare(rec);
  const std::vector<Foot> labels = net.predict(ws.windows);
  ordered_json j = {{"manifest", m.ref()},
                    {"subject_id", ws.subject_id},
                    {"windows", ws.windows.size()},
                    {"steps", count_steps(labels)},
                    {"labels", labels_string(labels)}};
  if (!rec.events.empty() && ws.ground_truth_steps > 0) j["metrics"] = to_json(score(ws, labels));
  emit(j, a.out, m);
  m.write();
  return 0;
}

int run_baseline(const CountArgs& a) {
  Manifest m{"baseline"};
  m.config = {{"frame", a.paa.frame}, {"threshold", a.paa.peak_threshold}, {"merge_window_s", a.paa.merge_window_s}};
  m.path = manifest_beside(a.out, "baseline");
  const Recording rec = load_subject(a.input, a.annot.empty() ? std::nullopt : std::optional<fs::path>(a.annot), false);
  m.inputs = {a.input};
  const Recording rec15 = resample(rec);
  const std::size_t steps = baseline_count(rec15, a.paa);
  ordered_json j = {{"manifest", m.ref()}, {"subject_id", rec.subject_id}, {"steps", steps}};
  if (!rec.events.empty()) {
    j["steps_ground_truth"] = rec.events.size();
    j["accuracy_steps"] = accuracy_steps(static_cast<std::int64_t>(steps), static_cast<std::int64_t>(rec.events.size()));
  }
  emit(j, a.out, m);
  m.write();
  return 0;
}

struct EvalArgs {
  std::string model;
  std::string data;
  std::string input;
  std::string out;
};

int run_eval(const EvalArgs& a) {
  if (a.data.empty() == a.input.empty()) throw UsageError("give exactly one of --data or --input");
  Manifest m{"eval"};
  m.path = manifest_beside(a.out, "eval");
  const StepNet net = load_model(a.model);
  m.inputs.push_back(a.model);
  std::vector<WindowSet> sets;
  if (!a.data.empty()) {
    sets = load_dir(a.data, m.inputs);
  } else {
    sets.push_back(prepare(load_subject(a.input, std::nullopt, true)));
    m.inputs.push_back(a.input);
  }
  std::vector<MetricsReport> reports;
  for (const auto& ws : sets) reports.push_back(evaluate(net, ws));
  ordered_json j = {{"manifest", m.ref()}, {"lineage", net.lineage}};
  j.update(aggregate_json(reports));
  emit(j, a.out, m);
  m.write();
  return 0;
}

struct ConvertArgs {
  std::string sensor;
  std::string steps;
  double rate = 0.0;
  std::string id;
  std::string device = "wrist";
  std::string first_foot = "L";
  std::string out;
};

int run_convert(const ConvertArgs& a) {
  if (a.first_foot != "L" && a.first_foot != "R") throw UsageError("--first-foot must be L or R");
  Manifest m{"convert"};
  m.config = {{"rate_hz", a.rate}, {"id", a.id}, {"device", a.device}, {"first_foot", a.first_foot}};
  m.inputs = {a.sensor, a.steps};
  const fs::path dir(a.out);
  fs::create_directories(dir);
  m.path = dir / (a.id + ".convert.manifest.json");
  std::vector<std::string> warnings;
  const Recording rec = convert_indexed(a.sensor, a.steps, a.rate, a.id, a.device,
                                        a.first_foot == "L" ? Foot::Left : Foot::Right, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  const fs::path csv = dir / (a.id + ".csv"), steps = dir / (a.id + std::string(kStepsSuffix));
  write_recording(rec, csv, steps);
  m.outputs = {csv.string(), steps.string()};
  m.write();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wrist-IMU step counting with a personalized LSTM"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Write synthetic subject recordings");
  synth->add_option("--subjects", sa.subjects, "Number of subjects")->capture_default_str();
  synth->add_option("--duration", sa.duration, "Seconds per subject")->capture_default_str();
  synth->add_option("--seed", sa.seed)->capture_default_str();
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--prefix", sa.prefix, "Subject id prefix")->capture_default_str();
  synth->add_option("--rate", sa.rate, "Sample rate in Hz")->capture_default_str();
  synth->add_option("--noise", sa.noise, "Noise sd as a fraction of amplitude")->capture_default_str();
  synth->add_option("--cadence", sa.cadence, "Fixed cadence in steps/min (default: per-subject jitter)");
  synth->add_flag("--shifted", sa.shifted, "Apply a device shift (rotation, scale, extra noise)");
  synth->add_option("--shift-scale", sa.shift.scale)->capture_default_str();
  synth->add_option("--shift-rotation", sa.shift.rotation_deg)->capture_default_str();
  synth->add_option("--shift-noise", sa.shift.noise_factor)->capture_default_str();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a general model on every subject in a directory");
  TrainArgs ca;
  auto* cv = app.add_subcommand("cv", "Leave-subjects-out cross-validation");
  for (auto [sub, args] : {std::pair{train, &ta}, std::pair{cv, &ca}}) {
    sub->add_option("--data", args->data, "Directory of <id>.csv + <id>_steps.csv")->required();
    sub->add_option("--epochs", args->cfg.epochs)->capture_default_str();
    sub->add_option("--lr", args->cfg.lr)->capture_default_str();
    sub->add_option("--batch", args->cfg.batch_size)->capture_default_str();
    sub->add_option("--clip", args->cfg.clip)->capture_default_str();
    sub->add_option("--dropout", args->cfg.dropout_rate)->capture_default_str();
    sub->add_option("--seed", args->cfg.seed)->capture_default_str();
  }
  train->add_option("--out", ta.out, "Model file")->required();
  train->add_option("--report", ta.report, "Training report (epoch losses)");
  cv->add_option("--fold-size", ca.fold_size, "Subjects held out per fold")->capture_default_str();
  cv->add_option("--out", ca.report, "Report file (default stdout)");
  cv->add_option("--model-out", ca.out, "Write the best fold's model here");

  AdaptArgs aa;
  auto* adapt_cmd = app.add_subcommand("adapt", "Personalize a general model on a subject's first seconds");
  adapt_cmd->add_option("--model", aa.model)->required();
  adapt_cmd->add_option("--subject", aa.subject, "Subject CSV")->required();
  adapt_cmd->add_option("--annot", aa.annot, "Annotation CSV (default <stem>_steps.csv)");
  adapt_cmd->add_option("--seconds", aa.cfg.budget_s, "Adaptation budget")->capture_default_str();
  adapt_cmd->add_option("--epochs-head", aa.cfg.epochs_head)->capture_default_str();
  adapt_cmd->add_option("--lr-head", aa.cfg.lr_head)->capture_default_str();
  adapt_cmd->add_option("--epochs-full", aa.cfg.epochs_full)->capture_default_str();
  adapt_cmd->add_option("--lr-full", aa.cfg.lr_full)->capture_default_str();
  adapt_cmd->add_option("--batch", aa.cfg.batch_size)->capture_default_str();
  adapt_cmd->add_option("--seed", aa.cfg.seed)->capture_default_str();
  adapt_cmd->add_option("--out", aa.out, "Adapted model file")->required();
  adapt_cmd->add_option("--report", aa.report, "Delta report (default <out>.delta.json)");

  CountArgs ka;
  auto* count = app.add_subcommand("count", "Count steps with a model");
  count->add_option("--model", ka.model)->required();
  count->add_option("--input", ka.input, "Subject CSV")->required();
  count->add_option("--annot", ka.annot, "Annotation CSV, optional");
  count->add_option("--out", ka.out, "Report file (default stdout)");

  CountArgs ba;
  auto* baseline = app.add_subcommand("baseline", "Count steps with PAA + peak merging");
  baseline->add_option("--input", ba.input, "Subject CSV")->required();
  baseline->add_option("--annot", ba.annot, "Annotation CSV, optional");
  baseline->add_option("--frame", ba.paa.frame)->capture_default_str();
  baseline->add_option("--threshold", ba.paa.peak_threshold)->capture_default_str();
  baseline->add_option("--merge", ba.paa.merge_window_s)->capture_default_str();
  baseline->add_option("--out", ba.out, "Report file (default stdout)");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Per-subject metrics of a model");
  eval->add_option("--model", ea.model)->required();
  eval->add_option("--data", ea.data, "Directory of subjects");
  eval->add_option("--input", ea.input, "Single subject CSV");
  eval->add_option("--out", ea.out, "Report file (default stdout)");

  ConvertArgs va;
  auto* convert = app.add_subcommand("convert", "Convert an index-annotated recording to CSV");
  convert->add_option("--sensor", va.sensor, "Six-column sensor file")->required();
  convert->add_option("--steps", va.steps, "Step index file")->required();
  convert->add_option("--rate", va.rate, "Sample rate in Hz")->required();
  convert->add_option("--id", va.id, "Subject id")->required();
  convert->add_option("--device", va.device)->capture_default_str();
  convert->add_option("--first-foot", va.first_foot, "L or R")->capture_default_str();
  convert->add_option("--out", va.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*synth) return run_synth(sa);
    if (*train) return run_train(ta);
    if (*cv) return run_cv(ca);
    if (*adapt_cmd) return run_adapt(aa);
    if (*count) return run_count(ka);
    if (*baseline) return run_baseline(ba);
    if (*eval) return run_eval(ea);
    if (*convert) return run_convert(va);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
