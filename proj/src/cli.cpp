// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

#include "introspect/cli.hpp"

#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>

#include "introspect/dataset.hpp"
#include "introspect/errors.hpp"
#include "introspect/evaluation.hpp"
#include "introspect/hashing.hpp"
#include "introspect/introspector.hpp"

namespace introspect {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kProvenanceFile = "provenance.json";
constexpr const char* kRunConfigFile = "run.conf";
constexpr const char* kModelFile = "model.bin";

std::mutex& stdout_mutex() {
  static std::mutex m;
  return m;
}

void say(const std::string& text) {
  std::lock_guard lock(stdout_mutex());
  std::cout << text << std::flush;
}

struct Common {
  std::uint64_t seed = 0;
  std::string out;
};

void add_common(CLI::App* sub, Common& common, bool out_required = true) {
  // Consumed by apply_config_file before parsing; declared here for --help.
  sub->add_option("--config", "key=value file of option defaults; command-line flags take precedence");
  sub->add_option("--seed", common.seed, "top-level seed; every stage seed is derived from it")
      ->capture_default_str();
  auto* out = sub->add_option("--out", common.out, "output directory");
  if (out_required) out->required();
}

// Records what ran, with which resolved options and seeds, and the hash of
// every artifact written. Paths are recorded as given.
class Provenance {
 public:
  Provenance(std::string command, const CLI::App* sub, std::uint64_t seed)
      : command_(std::move(command)), config_(sub->config_to_str(true, false)), seed_(seed) {}

  void seed(const std::string& stage, std::uint64_t value) { seeds_[stage] = value; }
  void input(const fs::path& path) {
    if (fs::is_regular_file(path)) inputs_[path.string()] = sha256_file(path);
  }

  void write(const fs::path& directory) const {
    ordered_json j;
    j["command"] = command_;
    j["seed"] = seed_;
    ordered_json seeds = ordered_json::object();
    for (const auto& [k, v] : seeds_) seeds[k] = v;
    j["stage_seeds"] = seeds;
    ordered_json inputs = ordered_json::object();
    for (const auto& [k, v] : inputs_) inputs[k] = v;
    j["inputs"] = inputs;
    j["options"] = config_;
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(directory)) {
      if (!e.is_regular_file()) continue;
      const std::string rel = fs::relative(e.path(), directory).generic_string();
      if (rel == kProvenanceFile || rel == kRunConfigFile) continue;
      files.push_back(rel);
    }
    std::sort(files.begin(), files.end());
    ordered_json artifacts = ordered_json::object();
    for (const auto& f : files) artifacts[f] = sha256_file(directory / f);
    j["artifacts"] = artifacts;

    std::ofstream conf(directory / kRunConfigFile, std::ios::trunc);
    conf << config_;
    std::ofstream out(directory / kProvenanceFile, std::ios::trunc);
    out << j.dump(2) << '\n';
    if (!out || !conf) throw IoError("cannot write provenance in " + directory.string());
  }

 private:
  std::string command_;
  std::string config_;
  std::uint64_t seed_;
  std::map<std::string, std::uint64_t> seeds_;
  std::map<std::string, std::string> inputs_;
};

fs::path prepare_out(const std::string& out) {
  const fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

fs::path dataset_file(const fs::path& dir) { return dir / "dataset.jsonl"; }

fs::path model_path(const std::string& given) {
  const fs::path p(given);
  return fs::is_directory(p) ? p / kModelFile : p;
}

// --- option groups -------------------------------------------------------------------

struct TrainOptions {
  std::string arch;
  TrainConfig config;

  void add(CLI::App* sub, bool with_grid_fields = true) {
    sub->add_option("--arch", arch, "mlp, smallconv or cascade (default follows the representation)");
    if (with_grid_fields) {
      sub->add_option("--batch-size", config.batch_size)->capture_default_str();
      sub->add_option("--learning-rate", config.learning_rate)->capture_default_str();
      sub->add_option("--gamma", config.gamma, "focal loss focusing parameter")->capture_default_str();
    }
    sub->add_option("--max-epochs", config.max_epochs)->capture_default_str();
    sub->add_option("--patience", config.patience, "early stopping patience in epochs")->capture_default_str();
    sub->add_option("--momentum", config.momentum)->capture_default_str();
  }

  ArchConfig resolve_arch(RepresentationKind kind, std::uint64_t seed) const {
    ArchConfig a;
    a.kind = arch.empty() ? default_arch(kind) : parse_arch(arch);
    a.init_seed = derive_seed(seed, "init");
    return a;
  }
};

struct RepresentationOptions {
  std::string kind = "lf-ash";
  std::string mode = "P";
  double percentile = 0.75;

  void add(CLI::App* sub) {
    sub->add_option("--representation", kind, "lfr, lf-ash, sf, clf or himf")->capture_default_str();
    sub->add_option("--mode", mode, "shaping mode for lf-ash: P, B or S")->capture_default_str();
    sub->add_option("--percentile", percentile, "shaping percentile for lf-ash")->capture_default_str();
  }

  RepresentationConfig resolve() const {
    RepresentationConfig c;
    c.kind = parse_representation(kind);
    if (c.kind == RepresentationKind::kLfAsh) {
      c.shaping.mode = parse_shaping_mode(mode);
      c.shaping.percentile = percentile;
    }
    c.validate();
    return c;
  }
};

std::string fmt(double v) {
  std::ostringstream s;
  s.imbue(std::locale::classic());
  s.precision(6);
  s << v;
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  auto opt = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
  };
  r.split = j.value("split", "");
  r.representation = j.value("representation", "");
  r.auroc = opt("auroc");
  r.f1_macro = j.value("f1_macro", 0.0);
  r.f1_per_class = {j.value("f1_no_error", 0.0), j.value("f1_error", 0.0)};
  r.fnr = opt("fnr");
  r.counts = {j.value("tp", std::size_t{0}), j.value("fp", std::size_t{0}), j.value("tn", std::size_t{0}),
              j.value("fn", std::size_t{0})};
  r.n_per_label = {j.value("n_no_error", std::size_t{0}), j.value("n_error", std::size_t{0})};
  r.model_dataset = j.value("model_dataset", "");
  r.model_manifest = j.value("model_manifest", "");
  r.eval_dataset = j.value("eval_dataset", "");
  r.eval_manifest = j.value("eval_manifest", "");
  return r;
}

// --- subcommands ---------------------------------------------------------------------

struct GenSynthetic {
  Common common;
  SyntheticConfig config;
  bool no_images = false;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("gen-synthetic", "write a synthetic activation corpus");
    add_common(sub, common);
    sub->add_option("--frames", config.frame_count)->capture_default_str();
    sub->add_option("--channels", config.channels)->capture_default_str();
    sub->add_option("--height", config.height)->capture_default_str();
    sub->add_option("--width", config.width)->capture_default_str();
    sub->add_option("--layers", config.layers, "tapped backbone layers")->capture_default_str();
    sub->add_option("--prevalence", config.error_prevalence, "fraction of error frames")->capture_default_str();
    sub->add_option("--separation", config.separation, "activation offset of error frames")
        ->capture_default_str();
    sub->add_option("--base-mean", config.base_mean)->capture_default_str();
    sub->add_option("--noise-std", config.noise_std)->capture_default_str();
    sub->add_option("--drop-rate", config.drop_rate)->capture_default_str();
    sub->add_option("--jitter-rate", config.jitter_rate)->capture_default_str();
    sub->add_option("--false-positive-rate", config.false_positive_rate)->capture_default_str();
    sub->add_option("--clean-miss-rate", config.clean_miss_rate)->capture_default_str();
    sub->add_option("--target-tau", config.target_tau)->capture_default_str();
    sub->add_option("--image-width", config.image_width)->capture_default_str();
    sub->add_option("--image-height", config.image_height)->capture_default_str();
    sub->add_flag("--no-images", no_images, "omit the per-frame images");
    sub->callback([this, sub] { run(sub); });
  }

  void run(const CLI::App* sub) {
    const fs::path out = prepare_out(common.out);
    Provenance prov("gen-synthetic", sub, common.seed);
    config.images = !no_images;
    config.seed = derive_seed(common.seed, "synthetic");
    prov.seed("synthetic", config.seed);
    const SyntheticSummary s = generate_synthetic_corpus(config, out);
    prov.write(out);
    say("corpus " + out.string() + ": " + std::to_string(s.frame_count) + " frames, " +
        std::to_string(s.error_frames) + " error frames, realized prevalence " + fmt(s.realized_prevalence) +
        "\nmanifest " + s.manifest_path.string() + "\n");
  }
};

struct Build {
  Common common;
  std::string manifest;
  RepresentationOptions rep;
  BuildOptions options;
  std::string classes;
  bool lenient = false;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("build", "turn a corpus into a labelled error dataset");
    add_common(sub, common);
    sub->add_option("--manifest", manifest, "corpus manifest")->required();
    rep.add(sub);
    sub->add_option("--tau", options.tau, "frame mAP below this is an error")->capture_default_str();
    sub->add_option("--iou", options.iou_threshold, "IoU threshold for a true positive")->capture_default_str();
    sub->add_option("--train-ratio", options.ratios.train)->capture_default_str();
    sub->add_option("--val-ratio", options.ratios.val)->capture_default_str();
    sub->add_option("--test-ratio", options.ratios.test)->capture_default_str();
    sub->add_option("--classes", classes, "class mapping file (name=vehicle|people lines)");
    sub->add_flag("--lenient", lenient, "skip frames with missing inputs instead of failing");
    sub->callback([this, sub] { run(sub); });
  }

  void run(const CLI::App* sub) {
    const RepresentationConfig representation = rep.resolve();
    ClassMap class_map;
    if (!classes.empty()) {
      class_map = ClassMap::from_file(classes);
      options.classes = &class_map;
    }
    options.strict = !lenient;
    options.split_seed = derive_seed(common.seed, "split");
    ErrorDataset dataset = build_error_dataset(manifest, representation, options);

    const fs::path out = prepare_out(common.out);
    Provenance prov("build", sub, common.seed);
    prov.seed("split", options.split_seed);
    prov.input(manifest);
    if (!classes.empty()) prov.input(classes);
    save_error_dataset(dataset, out);
    prov.write(out);
    say(dataset_summary(dataset));
  }
};

ErrorDataset load_dataset_arg(const std::string& dir, Provenance& prov) {
  prov.input(dataset_file(dir));
  return load_error_dataset(dir);
}

struct Train {
  Common common;
  std::string dataset_dir;
  TrainOptions train_options;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("train", "train one introspector");
    add_common(sub, common);
    sub->add_option("--dataset", dataset_dir, "error dataset directory")->required();
    train_options.add(sub);
    sub->callback([this, sub] { run(sub); });
  }

  void run(const CLI::App* sub) {
    Provenance prov("train", sub, common.seed);
    const ErrorDataset dataset = load_dataset_arg(dataset_dir, prov);
    const ArchConfig arch = train_options.resolve_arch(dataset.representation.kind, common.seed);
    TrainConfig config = train_options.config;
    config.shuffle_seed = derive_seed(common.seed, "shuffle");
    prov.seed("init", arch.init_seed);
    prov.seed("shuffle", config.shuffle_seed);
    const TrainedIntrospector model = train(arch, dataset, config);

    const fs::path out = prepare_out(common.out);
    save_model(model, out / kModelFile);
    save_history(model, out / "history.jsonl");
    prov.write(out);
    say("trained " + arch.canonical() + "\n  " + config.canonical() + "\n  best epoch " +
        std::to_string(model.best_epoch) + " of " + std::to_string(model.history.size()) + ", val loss " +
        fmt(model.initial_val_loss) + " -> " + fmt(model.best_val_loss) + "\n  model " +
        (out / kModelFile).string() + "\n");
  }
};

struct Grid {
  Common common;
  std::string dataset_dir;
  std::string grid_file;
  TrainOptions train_options;
  std::vector<std::size_t> batch_sizes;
  std::vector<double> learning_rates;
  std::vector<double> gammas;
  unsigned jobs = 1;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("grid", "hyperparameter grid search with a resumable leaderboard");
    add_common(sub, common);
    sub->add_option("--dataset", dataset_dir, "error dataset directory")->required();
    sub->add_option("--grid", grid_file, "grid file (batch_size=, learning_rate=, gamma= comma lists)");
    train_options.add(sub, false);
    sub->add_option("--batch-sizes", batch_sizes)->delimiter(',');
    sub->add_option("--learning-rates", learning_rates)->delimiter(',');
    sub->add_option("--gammas", gammas)->delimiter(',');
    sub->add_option("--jobs", jobs, "parallel training jobs")->capture_default_str();
    sub->callback([this, sub] { run(sub); });
  }

  void run(const CLI::App* sub) {
    Provenance prov("grid", sub, common.seed);
    const ErrorDataset dataset = load_dataset_arg(dataset_dir, prov);
    GridSpec spec;
    if (!grid_file.empty()) {
      spec = GridSpec::from_file(grid_file);
      prov.input(grid_file);
    }
    if (!batch_sizes.empty()) spec.batch_sizes = batch_sizes;
    if (!learning_rates.empty()) spec.learning_rates = learning_rates;
    if (!gammas.empty()) spec.gammas = gammas;
    if (!sub->get_option("--max-epochs")->empty() || grid_file.empty()) {
      spec.base.max_epochs = train_options.config.max_epochs;
    }
    if (!sub->get_option("--patience")->empty() || grid_file.empty()) {
      spec.base.patience = train_options.config.patience;
    }
    if (!sub->get_option("--momentum")->empty() || grid_file.empty()) {
      spec.base.momentum = train_options.config.momentum;
    }
    spec.base.shuffle_seed = derive_seed(common.seed, "shuffle");
    const ArchConfig arch = train_options.resolve_arch(dataset.representation.kind, common.seed);
    prov.seed("init", arch.init_seed);
    prov.seed("shuffle", spec.base.shuffle_seed);

    const fs::path out = prepare_out(common.out);
    GridOptions options;
    options.cache_dir = out / "combos";
    options.jobs = jobs;
    const GridResult result = grid_search(arch, dataset, spec, options);
    save_model(result.best, out / kModelFile);
    write_leaderboard(result.leaderboard, out / "leaderboard.csv");
    prov.write(out);

    std::size_t reused = 0;
    for (const auto& r : result.leaderboard) reused += r.reused ? 1 : 0;
    std::ostringstream s;
    s << "grid of " << result.leaderboard.size() << " combinations (" << reused << " reused)\n";
    for (const auto& r : result.leaderboard) {
      s << (r.selected ? "* " : "  ") << "batch " << r.config.batch_size << " lr " << fmt(r.config.learning_rate)
        << " gamma " << fmt(r.config.gamma) << "  selection_loss " << fmt(r.selection_loss) << "  val_auroc "
        << (r.val_auroc ? fmt(*r.val_auroc) : std::string("undefined")) << "\n";
    }
    say(s.str());
  }
};

struct Eval {
  Common common;
  std::string model_arg;
  std::string dataset_dir;
  std::string split = "test";
  bool cross = false;

  void add(CLI::App& app, bool cross_corpus) {
    cross = cross_corpus;
    auto* sub = app.add_subcommand(cross ? "cross-eval" : "eval",
                                   cross ? "evaluate a model on a dataset from another corpus"
                                         : "evaluate a model on one split of its dataset");
    add_common(sub, common);
    sub->add_option("--model", model_arg, "model file or training output directory")->required();
    sub->add_option("--dataset", dataset_dir, "error dataset directory")->required();
    sub->add_option("--split", split, "train, val or test")->capture_default_str();
    sub->callback([this, sub] { run(sub); });
  }

  void run(const CLI::App* sub) {
    Provenance prov(cross ? "cross-eval" : "eval", sub, common.seed);
    const fs::path mp = model_path(model_arg);
    prov.input(mp);
    const Introspector model(load_model(mp));
    const ErrorDataset dataset = load_dataset_arg(dataset_dir, prov);
    const Split s = parse_split(split);
    const MetricsReport report = cross ? cross_evaluate(model, dataset, s) : evaluate(model, dataset, s);

    const fs::path out = prepare_out(common.out);
    write_text(out / "metrics.json", report.to_json_line() + "\n");
    write_text(out / "metrics.txt", report.to_text());
    prov.write(out);
    say(report.to_text());
  }
};

struct Sweep {
  Common common;
  std::string dataset_dir;
  std::vector<double> taus{0.4, 0.5, 0.6, 0.7};
  TrainOptions train_options;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("sweep", "relabel at several mAP thresholds and retrain at each");
    add_common(sub, common);
    sub->add_option("--dataset", dataset_dir, "error dataset directory")->required();
    sub->add_option("--taus", taus, "comma-separated thresholds")->delimiter(',')->capture_default_str();
    train_options.add(sub);
    sub->callback([this, sub] { run(sub); });
  }

  void run(const CLI::App* sub) {
    Provenance prov("sweep", sub, common.seed);
    const ErrorDataset dataset = load_dataset_arg(dataset_dir, prov);
    const ArchConfig arch = train_options.resolve_arch(dataset.representation.kind, common.seed);
    TrainConfig config = train_options.config;
    config.shuffle_seed = derive_seed(common.seed, "shuffle");
    prov.seed("init", arch.init_seed);
    prov.seed("shuffle", config.shuffle_seed);
    const auto rows = threshold_sweep(dataset, taus, arch, config);

    const fs::path out = prepare_out(common.out);
    write_sweep_csv(rows, out / "sweep.csv");
    {
      std::ofstream labels(out / "labels.jsonl", std::ios::trunc);
      for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.labels.size(); ++i) {
          labels << label_to_json_line(dataset.items[i].frame_id, r.labels[i]) << '\n';
        }
      }
    }
    prov.write(out);
    std::ostringstream s;
    s << std::left << std::setw(6) << "tau" << std::setw(7) << "n" << std::setw(8) << "errors" << std::setw(12)
      << "prevalence" << std::setw(10) << "auroc" << "fnr\n";
    for (const auto& r : rows) {
      s << std::setw(6) << fmt(r.tau) << std::setw(7) << r.n_total << std::setw(8) << r.n_error << std::setw(12)
        << fmt(r.prevalence) << std::setw(10) << (r.report.auroc ? fmt(*r.report.auroc) : std::string("undefined"))
        << (r.report.fnr ? fmt(*r.report.fnr) : std::string("undefined")) << "\n";
    }
    say(s.str());
  }
};

struct Profile {
  Common common;
  std::string manifest;
  std::vector<std::string> kinds{"himf", "sf", "lf-ash"};
  std::string mode = "P";
  double percentile = 0.75;
  std::size_t repetitions = 30;
  std::size_t frames = 50;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("profile", "time feature extraction and size the cached features");
    add_common(sub, common);
    sub->add_option("--manifest", manifest, "corpus manifest")->required();
    sub->add_option("--representations", kinds)->delimiter(',')->capture_default_str();
    sub->add_option("--mode", mode, "shaping mode for lf-ash")->capture_default_str();
    sub->add_option("--percentile", percentile)->capture_default_str();
    sub->add_option("--repetitions", repetitions, "timed repetitions (median reported)")->capture_default_str();
    sub->add_option("--frames", frames, "frames per repetition (0 = all)")->capture_default_str();
    sub->callback([this, sub] { run(sub); });
  }

  void run(const CLI::App* sub) {
    Provenance prov("profile", sub, common.seed);
    prov.input(manifest);
    const CorpusFrames corpus = load_corpus_frames(manifest, frames);
    const auto inputs = corpus.inputs();
    const fs::path out = prepare_out(common.out);
    std::vector<ProfileResult> results;
    for (const auto& k : kinds) {
      RepresentationConfig c;
      c.kind = parse_representation(k);
      if (c.kind == RepresentationKind::kLfAsh) c.shaping = {parse_shaping_mode(mode), percentile};
      results.push_back(profile_representation(c, inputs, repetitions, out / "features"));
    }
    const std::string table = profile_table(results);
    // Timings vary run to run; only the sizes belong in the hashed artifacts.
    write_text(out / "profile.txt", table);
    std::ostringstream sizes;
    sizes << "config,feature_bytes\n";
    for (const auto& r : results) sizes << r.config << ',' << r.feature_bytes << '\n';
    write_text(out / "sizes.csv", sizes.str());
    prov.write(out);
    say(table);
  }
};

struct Report {
  Common common;
  std::vector<std::string> inputs;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("report", "tabulate metrics from several eval output directories");
    add_common(sub, common, false);
    sub->add_option("inputs", inputs, "eval or cross-eval output directories")->required();
    sub->callback([this, sub] { run(sub); });
  }

  void run(const CLI::App* sub) {
    std::vector<MetricsReport> reports;
    std::vector<std::string> names;
    Provenance prov("report", sub, common.seed);
    for (const auto& dir : inputs) {
      const fs::path p = fs::path(dir) / "metrics.json";
      std::ifstream in(p);
      if (!in) throw IoError("cannot open " + p.string());
      std::string line;
      std::getline(in, line);
      try {
        reports.push_back(report_from_json(nlohmann::json::parse(line)));
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(p.string() + ": " + e.what());
      }
      names.push_back(dir);
      prov.input(p);
    }
    const std::string table = reports_table(reports, names);
    if (!common.out.empty()) {
      const fs::path out = prepare_out(common.out);
      write_text(out / "report.txt", table);
      prov.write(out);
    }
    say(table);
  }
};

// Splices options from the subcommand's --config file into the arguments,
// skipping any option already given on the command line. Keys use the long
// option names; '_' and '-' are interchangeable. Quoted values and [a,b] lists
// (as written to run.conf) are accepted.
std::vector<std::string> apply_config_file(const CLI::App& app, std::vector<std::string> args) {
  std::size_t sub_at = args.size();
  const CLI::App* sub = nullptr;
  for (std::size_t i = 0; i < args.size() && !sub; ++i) {
    for (const CLI::App* candidate : app.get_subcommands([](const CLI::App*) { return true; })) {
      if (candidate->get_name() == args[i]) {
        sub = candidate;
        sub_at = i;
        break;
      }
    }
  }
  if (!sub) return args;

  std::string config_path;
  for (std::size_t i = sub_at + 1; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw InputError("--config needs a file");
      config_path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (config_path.empty()) return args;

  std::ifstream in(config_path);
  if (!in) throw IoError("cannot open config file " + config_path);
  auto trim = [](const std::string& t) {
    const auto b = t.find_first_not_of(" \t\r");
    const auto e = t.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : t.substr(b, e - b + 1);
  };
  auto given = [&](const std::string& flag) {
    for (std::size_t i = sub_at + 1; i < args.size(); ++i) {
      if (args[i] == flag || args[i].rfind(flag + "=", 0) == 0) return true;
    }
    return false;
  };

  std::vector<std::string> extra;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';' || t[0] == '[') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw FormatError(config_path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = trim(t.substr(0, eq));
    std::replace(key.begin(), key.end(), '_', '-');
    std::string value = trim(t.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front()) {
      value = value.substr(1, value.size() - 2);
    }
    if (value.size() >= 2 && value.front() == '[' && value.back() == ']') value = value.substr(1, value.size() - 2);
    if (key == "config" || value.empty()) continue;
    const std::string flag = "--" + key;
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    if (!opt) throw InputError(config_path + ":" + std::to_string(line_no) + ": unknown option '" + key + "'");
    if (given(flag)) continue;
    if (opt->get_expected_min() == 0) {
      if (value == "true" || value == "1" || value == "yes" || value == "on") extra.push_back(flag);
    } else {
      extra.push_back(flag + "=" + value);
    }
  }
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub_at + 1), extra.begin(), extra.end());
  return args;
}

}  // namespace

int run_cli(const std::vector<std::string>& raw_args) {
  CLI::App app{"Introspection toolkit for object detection error prediction"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->capture_default_str();

  GenSynthetic gen;
  Build build;
  Train train_cmd;
  Grid grid;
  Eval eval_cmd;
  Eval cross_cmd;
  Sweep sweep;
  Profile profile;
  Report report;
  gen.add(app);
  build.add(app);
  train_cmd.add(app);
  grid.add(app);
  eval_cmd.add(app, false);
  cross_cmd.add(app, true);
  sweep.add(app);
  profile.add(app);
  report.add(app);
  app.parse_complete_callback([&] { spdlog::set_level(spdlog::level::from_str(log_level)); });

  try {
    std::vector<std::string> args = apply_config_file(app, raw_args);
    // CLI11 consumes the vector form back to front.
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ShapeMismatch& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitComputation;
  }
  return kExitOk;
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace introspect
