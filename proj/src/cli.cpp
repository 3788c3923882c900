#include "semg/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "semg/dataset_io.hpp"
#include "semg/evalbench.hpp"
#include "semg/stream.hpp"
#include "semg/synthgen.hpp"

namespace semg {

namespace fs = std::filesystem;

namespace {

struct Settings {
  std::uint64_t seed = 42;
  std::string config_path;
  std::string out = ".";
  bool no_timing = false;
  bool quiet = false;
  nlohmann::json config = nlohmann::json::object();

  const nlohmann::json& section(const char* name) const {
    static const nlohmann::json empty = nlohmann::json::object();
    return config.contains(name) ? config.at(name) : empty;
  }
  void log(const std::string& s) const {
    if (!quiet) std::cerr << s << '\n';
  }
};

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::io, "cannot write " + path.string());
  f << text;
  if (!f) throw Error(Errc::io, "failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_file_bytes(path.string());
  return {bytes.begin(), bytes.end()};
}

sedcnn::SedcnnConfig net_config(const Settings& s) {
  sedcnn::SedcnnConfig c;
  if (s.config.contains("sedcnn")) c = sedcnn::config_from_json(s.section("sedcnn").dump(), c);
  c.seed = s.seed;
  return c;
}

svm::MulticlassParams svm_params(const Settings& s) {
  svm::MulticlassParams p;
  const auto& j = s.section("svm");
  read_key(j, "C", p.smo.C);
  read_key(j, "kkt_tol", p.smo.kkt_tol);
  read_key(j, "max_passes", p.smo.max_passes);
  read_key(j, "sigma", p.sigma);
  read_key(j, "standardize", p.standardize);
  p.smo.seed = s.seed;
  return p;
}

struct SplitSettings {
  double test_fraction = 0.2;
  sedcnn::SplitMode mode = sedcnn::SplitMode::per_window;
};

SplitSettings split_settings(const Settings& s) {
  SplitSettings out;
  const auto& j = s.section("split");
  read_key(j, "test_fraction", out.test_fraction);
  if (j.contains("mode")) {
    const auto m = j.at("mode").get<std::string>();
    if (m == "per_recording") out.mode = sedcnn::SplitMode::per_recording;
    else if (m != "per_window") throw Error(Errc::config_validation, "unknown split mode " + m);
  }
  return out;
}

eval::ComparisonConfig comparison_config(const Settings& s) {
  eval::ComparisonConfig c;
  c.net = net_config(s);
  c.svm = svm_params(s);
  const auto sp = split_settings(s);
  c.test_fraction = sp.test_fraction;
  c.split_mode = sp.mode;
  c.seed = s.seed;
  read_key(s.section("knn"), "k", c.knn_k);
  const auto& a = s.section("ann");
  read_key(a, "hidden", c.ann.hidden);
  read_key(a, "epochs", c.ann.epochs);
  read_key(a, "batch_size", c.ann.batch_size);
  read_key(a, "lr", c.ann.lr);
  c.ann.seed = s.seed;
  c.log = [&s](const std::string& m) { s.log(m); };
  c.on_epoch = [&s](const sedcnn::EpochRecord& e) {
    std::ostringstream o;
    o << "epoch " << e.epoch << " loss " << e.train_loss << " train_acc " << e.train_accuracy
      << " val_acc " << e.val_accuracy;
    s.log(o.str());
  };
  return c;
}

fs::path out_dir(const Settings& s) {
  fs::path p(s.out);
  fs::create_directories(p);
  return p;
}

eval::WindowedCorpus load_windows(const std::string& data_dir) {
  const auto recs = signal::read_dataset(data_dir);
  return eval::prepare_windows(recs, signal::design_filter_bank());
}

std::string history_csv(const sedcnn::TrainingHistory& h) {
  std::ostringstream o;
  o << "epoch,train_loss,train_accuracy,val_accuracy\n";
  for (const auto& e : h.epochs) {
    o << e.epoch << ',' << format_real(e.train_loss) << ',' << format_real(e.train_accuracy)
      << ',' << format_real(e.val_accuracy) << '\n';
  }
  return o.str();
}

// ---------------------------------------------------------------- commands

int cmd_synth(const Settings& s, std::size_t reps, std::size_t subjects) {
  synth::TemplateParams tp;
  tp.seed = s.seed;
  synth::NoiseSpec noise;
  const auto& j = s.section("synth");
  read_key(j, "gestures", tp.gestures);
  read_key(j, "separation", tp.separation);
  read_key(j, "interference_50hz", noise.interference_50hz);
  read_key(j, "drift", noise.drift);
  read_key(j, "white_noise_sigma", noise.white_noise_sigma);
  read_key(j, "carrier_correlation", noise.carrier_correlation);
  read_key(j, "modulation_depth", noise.modulation_depth);
  read_key(j, "modulation_low_hz", noise.modulation_low_hz);
  read_key(j, "modulation_high_hz", noise.modulation_high_hz);
  read_key(j, "phase_jitter", noise.phase_jitter);
  read_key(j, "subject_jitter", noise.subject_jitter);
  read_key(j, "repetition_jitter", noise.repetition_jitter);
  const auto corpus =
      synth::generate_corpus(synth::make_template(tp), noise, reps, subjects, s.seed);
  signal::write_dataset(corpus, out_dir(s).string());
  s.log("wrote " + std::to_string(corpus.size()) + " recordings to " + s.out);
  if (!s.quiet) {
    const auto rep = synth::corpus_sanity(corpus);
    s.log("50 Hz line ratio raw " + format_real(rep.line_ratio_raw) + ", filtered " +
          format_real(rep.line_ratio_filtered));
    s.log("min in-band power fraction " + format_real(rep.band_fraction_min));
    s.log("1-NN accuracy on recording MAV " + format_real(rep.mav_1nn_accuracy));
  }
  return 0;
}

int cmd_preprocess(const Settings& s, const std::string& data) {
  const auto bank = signal::design_filter_bank();
  std::vector<signal::Recording> out;
  for (const auto& r : signal::read_dataset(data)) out.push_back(signal::filter_recording(r, bank));
  signal::write_dataset(out, out_dir(s).string());
  s.log("filtered " + std::to_string(out.size()) + " recordings");
  return 0;
}

int cmd_features(const Settings& s, const std::string& data) {
  const auto bank = signal::design_filter_bank();
  std::ostringstream o;
  o << features::feature_csv_header() << '\n';
  std::size_t rows = 0;
  for (const auto& r : signal::read_dataset(data)) {
    for (const auto& w : signal::segment_windows(signal::filter_recording(r, bank))) {
      o << features::feature_csv_row(features::extract_feature_vector(w)) << '\n';
      ++rows;
    }
  }
  write_text(out_dir(s) / "features.csv", o.str());
  s.log("wrote " + std::to_string(rows) + " feature rows");
  return 0;
}

int cmd_train(const Settings& s, const std::string& data, bool no_se, bool no_residual,
              const std::string& head) {
  const auto windows = load_windows(data);
  auto cfg = comparison_config(s);
  if (no_se) cfg.net.se_enabled = false;
  if (no_residual) cfg.net.residual_enabled = false;
  const auto split = sedcnn::stratified_split(windows.images, cfg.test_fraction, s.seed, cfg.split_mode);
  const auto train_set = windows.images.subset(split.train);
  const auto test_set = windows.images.subset(split.test);

  sedcnn::SedcnnModel model(cfg.net);
  sedcnn::train(model, train_set, test_set, cfg.on_epoch);
  const auto dir = out_dir(s);
  sedcnn::save_model(model, (dir / "model.sedcnn").string());
  write_text(dir / "history.csv", history_csv(model.history));

  if (head == "svm") {
    s.log("fitting SVM head");
    std::vector<svm::Vector> emb;
    for (const auto& x : train_set.inputs) {
      const auto e = sedcnn::embed_one(model.net, x);
      emb.emplace_back(e.begin(), e.end());
    }
    auto params = cfg.svm;
    params.num_classes = cfg.net.num_classes;
    stream::PipelineBundle bundle{{}, {}, model, svm::ovo_train(emb, train_set.labels, params)};
    bundle.validate();
    stream::save_bundle(bundle, (dir / "pipeline.bundle").string());
  }
  nlohmann::ordered_json meta;
  meta["head"] = head;
  meta["seed"] = s.seed;
  meta["se_enabled"] = cfg.net.se_enabled;
  meta["residual_enabled"] = cfg.net.residual_enabled;
  meta["best_epoch"] = model.history.best_epoch;
  meta["best_val_accuracy"] = model.history.best_val_accuracy;
  write_text(dir / "train.json", meta.dump(2) + "\n");
  s.log("best validation accuracy " + format_real(model.history.best_val_accuracy));
  return 0;
}

int cmd_eval(const Settings& s, const std::string& data, std::string model_dir) {
  if (model_dir.empty()) model_dir = s.out;
  const auto meta = nlohmann::json::parse(read_text(fs::path(model_dir) / "train.json"));
  const auto head = meta.at("head").get<std::string>();
  const auto windows = load_windows(data);
  const auto sp = split_settings(s);
  const auto split = sedcnn::stratified_split(windows.images, sp.test_fraction, s.seed, sp.mode);

  eval::ComparisonResult res;
  res.split = split;
  eval::MethodResult mr;
  std::vector<int> truth;
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t classes;
  if (head == "svm") {
    const auto bundle = stream::load_bundle((fs::path(model_dir) / "pipeline.bundle").string());
    classes = bundle.svm.num_classes;
    mr.method = bundle.model.config().se_enabled ? eval::Method::sedcnn_svm : eval::Method::dcnn_svm;
    for (auto i : split.test) {
      mr.predictions.push_back(stream::predict_window(bundle, windows.images.inputs[i]).label);
    }
  } else {
    const auto model = sedcnn::load_model((fs::path(model_dir) / "model.sedcnn").string());
    classes = model.config().num_classes;
    mr.method = eval::Method::dcnn;
    for (auto i : split.test) {
      mr.predictions.push_back(sedcnn::predict_softmax(model.net, windows.images.inputs[i]));
    }
  }
  mr.eval_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (auto i : split.test) truth.push_back(windows.images.labels[i]);
  mr.confusion = eval::confusion(truth, mr.predictions, classes);
  mr.report = eval::metrics(mr.confusion);
  res.methods.push_back(mr);

  const auto dir = out_dir(s);
  write_text(dir / "report.csv", eval::report_csv(res, !s.no_timing));
  write_text(dir / "confusion.csv", eval::confusion_csv(mr.confusion));
  if (!s.quiet) std::cout << eval::report_table(res);
  return 0;
}

int cmd_compare(const Settings& s, const std::string& data, const std::vector<std::string>& names) {
  std::vector<eval::Method> methods;
  if (names.empty()) {
    methods = eval::all_methods();
  } else {
    for (const auto& n : names) methods.push_back(eval::method_from_name(n));
  }
  const auto windows = load_windows(data);
  const auto cfg = comparison_config(s);
  const auto res = eval::run_comparison(windows, methods, cfg);
  const auto dir = out_dir(s);
  write_text(dir / "report.csv", eval::report_csv(res, !s.no_timing));
  write_text(dir / "report.txt", eval::report_table(res));
  for (const auto& m : res.methods) {
    write_text(dir / ("confusion_" + eval::method_name(m.method) + ".csv"),
               eval::confusion_csv(m.confusion));
  }
  if (!s.quiet) std::cout << eval::report_table(res);
  const auto check = eval::check_ordering(res);
  for (const auto& v : check.violations) std::cerr << "ordering: " << v << '\n';
  return check.fatal ? 2 : 0;
}

int cmd_stream(const Settings& s, const std::string& data, const std::string& bundle_path,
               bool realtime, std::size_t vote) {
  const auto bundle = stream::load_bundle(bundle_path);
  const auto recs = signal::read_dataset(data);
  stream::ReplayOptions opt;
  opt.realtime = realtime;
  opt.timing = !s.no_timing;
  opt.vote = vote;
  const auto res = stream::replay(bundle, recs, opt);
  const auto dir = out_dir(s);
  write_text(dir / "events.jsonl", stream::events_jsonl(res));
  write_text(dir / "summary.csv", stream::summary_csv(res, opt.timing));
  if (!s.quiet) std::cout << "trials " << res.trials.size() << ", trial accuracy "
            << format_real(res.summary.trial_accuracy) << ", window accuracy "
            << format_real(res.summary.window_metrics.accuracy) << '\n';
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"sEMG gesture recognition pipeline", "semg"};
  app.require_subcommand(1);
  app.fallthrough();
  Settings s;
  app.add_option("--seed", s.seed, "Seed for every random stream");
  app.add_option("--config", s.config_path, "JSON config with module sections");
  app.add_option("--out", s.out, "Output directory");
  app.add_flag("--no-timing", s.no_timing, "Write zero for wall-clock fields");
  app.add_flag("-q,--quiet", s.quiet, "Suppress progress and summary output");

  std::string data, model_dir, bundle_path, head = "svm";
  std::size_t reps = 15, subjects = 1, vote = 1;
  bool no_se = false, no_residual = false, realtime = false;
  std::vector<std::string> methods;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("--reps", reps, "Repetitions per gesture");
  synth->add_option("--subjects", subjects, "Number of subjects");

  auto* pre = app.add_subcommand("preprocess", "Filter a dataset");
  pre->add_option("--data", data, "Dataset directory")->required();

  auto* feat = app.add_subcommand("features", "Write the handcrafted feature CSV");
  feat->add_option("--data", data, "Dataset directory")->required();

  auto* train = app.add_subcommand("train", "Train the network and its classifier head");
  train->add_option("--data", data, "Dataset directory")->required();
  train->add_flag("--no-se", no_se, "Disable squeeze-and-excitation blocks");
  train->add_flag("--no-residual", no_residual, "Disable residual projections");
  train->add_option("--head", head, "Classifier head")->check(CLI::IsMember({"softmax", "svm"}));

  auto* ev = app.add_subcommand("eval", "Evaluate a trained model on the held-out split");
  ev->add_option("--data", data, "Dataset directory")->required();
  ev->add_option("--model-dir", model_dir, "Directory written by train (default: --out)");

  auto* cmp = app.add_subcommand("compare", "Six-method comparison");
  cmp->add_option("--data", data, "Dataset directory")->required();
  cmp->add_option("--methods", methods, "Subset of methods")->delimiter(',');

  auto* st = app.add_subcommand("stream", "Replay recordings through the online engine");
  st->add_option("--data", data, "Dataset directory")->required();
  st->add_option("--bundle", bundle_path, "Pipeline bundle")->required();
  st->add_flag("--realtime", realtime, "Pace frames at the sample rate");
  st->add_option("--vote", vote, "Majority vote over the last V windows")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (!s.config_path.empty()) {
      try {
        s.config = nlohmann::json::parse(read_text(s.config_path));
      } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::config_validation, "bad config file: " + std::string(e.what()));
      }
    }
    if (synth->parsed()) {
      // Command-line values win over the config file.
      if (synth->count("--reps") == 0) read_key(s.section("synth"), "reps", reps);
      if (synth->count("--subjects") == 0) read_key(s.section("synth"), "subjects", subjects);
      return cmd_synth(s, reps, subjects);
    }
    if (pre->parsed()) return cmd_preprocess(s, data);
    if (feat->parsed()) return cmd_features(s, data);
    if (train->parsed()) return cmd_train(s, data, no_se, no_residual, head);
    if (ev->parsed()) return cmd_eval(s, data, model_dir);
    if (cmp->parsed()) return cmd_compare(s, data, methods);
    if (st->parsed()) return cmd_stream(s, data, bundle_path, realtime, vote);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  std::cerr << app.help();
  return 1;
}

}  // namespace semg
