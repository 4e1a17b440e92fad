// SPDX-License-Identifier: Apache-2.0
// neuron: synthetic data, training, evaluation, gradient check and sweeps.
//
// Exit codes: 0 success, 1 file/format/data errors, 2 usage or config
// errors, 3 a verification (gradcheck) that ran but did not pass.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "neuron/neuron.hpp"

namespace fs = std::filesystem;
using namespace neuron;

namespace {

struct UsageError : Error {
  using Error::Error;
};

struct VerificationFailed : Error {
  using Error::Error;
};

/// Flag values before they are folded into the resolved config.
struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;

  std::size_t n_s = 0, n_t = 0, epochs = 0, batch_size = 0;
  double lr = 0, clip_norm = 0, temperature = 0, gamma_s = 0, gamma_t = 0, noise_std = 0;

  std::string data, bank, protocol, ckpt, mode = "gzsl";
  bool strict = false;
  double eps = kGradCheckStep;
  std::vector<std::size_t> grid{20, 50, 80, 100};
};

class Manifest {
 public:
  Manifest(std::string command, const RunConfig& cfg, int argc, char** argv) {
    doc_["format"] = "neuron.manifest";
    doc_["command"] = std::move(command);
    std::vector<std::string> args(argv + 1, argv + argc);
    doc_["argv"] = args;
    doc_["config"] = to_json(cfg);
    doc_["inputs"] = io::json::object();
    doc_["artifacts"] = io::json::object();
  }

  void input(const std::string& role, const fs::path& manifest) { record("inputs", role, manifest); }
  // Artifacts are named relative to the output directory.
  void artifact(const std::string& role, const fs::path& manifest) {
    record("artifacts", role, manifest);
    doc_["artifacts"][role]["path"] = manifest.filename().string();
  }
  io::json& doc() { return doc_; }

  void write(const fs::path& dir) const { io::write_json(dir / "manifest.json", doc_); }

 private:
  // A JSON manifest and its .bin payload are hashed together.
  void record(const char* section, const std::string& role, const fs::path& manifest) {
    io::json entry{{"path", manifest.string()}, {"fnv1a64", io::file_hash(manifest)}};
    const fs::path payload = io::payload_path_for(manifest);
    if (manifest.extension() == ".json" && fs::exists(payload)) entry["payload_fnv1a64"] = io::file_hash(payload);
    doc_[section][role] = entry;
  }

  io::json doc_;
};

fs::path prepare_out(const std::string& out) {
  if (out.empty()) throw UsageError("--out is required");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw FileError("cannot create output directory " + out + ": " + ec.message());
  return fs::path(out);
}

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config file or a previous run manifest");
  cmd->add_option("--seed", f.seed, "global seed (overrides config and NEURON_SEED)");
}

void add_model_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--n-s", f.n_s, "spatial micro-prototype count N_s")->check(CLI::PositiveNumber);
  cmd->add_option("--n-t", f.n_t, "temporal micro-prototype count N_t")->check(CLI::PositiveNumber);
  cmd->add_option("--temperature", f.temperature, "logit temperature")->check(CLI::PositiveNumber);
}

void add_train_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--epochs", f.epochs)->check(CLI::PositiveNumber);
  cmd->add_option("--lr", f.lr)->check(CLI::NonNegativeNumber);
  cmd->add_option("--batch-size", f.batch_size)->check(CLI::PositiveNumber);
  cmd->add_option("--clip-norm", f.clip_norm, "global gradient norm cap, 0 disables")->check(CLI::NonNegativeNumber);
}

void add_calib_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--gamma-s", f.gamma_s, "seen-class penalty, spatial stream");
  cmd->add_option("--gamma-t", f.gamma_t, "seen-class penalty, temporal stream");
}

/// Config file, then NEURON_SEED fallback, then every flag the user gave.
RunConfig resolve(const CLI::App& cmd, const Flags& f) {
  RunConfig c = resolve_config(f.config.empty() ? std::nullopt : std::optional<fs::path>(f.config));
  auto given = [&cmd](const char* name) {
    try {
      return cmd.get_option(name)->count() > 0;
    } catch (const CLI::OptionNotFound&) {
      return false;
    }
  };
  if (given("--n-s")) override_field(c, "model.N_s", c.model.N_s, f.n_s);
  if (given("--n-t")) override_field(c, "model.N_t", c.model.N_t, f.n_t);
  if (given("--temperature")) override_field(c, "model.temperature", c.model.temperature, f.temperature);
  if (given("--epochs")) override_field(c, "train.epochs", c.train.epochs, f.epochs);
  if (given("--lr")) override_field(c, "train.lr", c.train.lr, f.lr);
  if (given("--batch-size")) override_field(c, "train.batch_size", c.train.batch_size, f.batch_size);
  if (given("--clip-norm")) override_field(c, "train.clip_norm", c.train.clip_norm, f.clip_norm);
  if (given("--gamma-s")) override_field(c, "calib.gamma_s", c.calib.gamma_s, f.gamma_s);
  if (given("--gamma-t")) override_field(c, "calib.gamma_t", c.calib.gamma_t, f.gamma_t);
  if (given("--noise-std")) override_field(c, "synth.noise_std", c.synth.noise_std, f.noise_std);
  if (given("--seed")) override_seed(c, f.seed);
  c.model.validate();
  c.train.validate();
  return c;
}

struct LoadedData {
  std::vector<SkeletonSequence> skeletons;
  std::vector<FeatureMap<float>> features;
  bool is_features = false;
};

LoadedData load_data(const fs::path& path, std::size_t phases) {
  const io::json doc = io::read_json(path);
  LoadedData d;
  if (doc.value("format", "") == "neuron.features") {
    d.features = load_features(path, phases);
    d.is_features = true;
  } else {
    d.skeletons = load_skeletons(path).samples;
  }
  return d;
}

void save_synth(const fs::path& dir, const SynthData& data) {
  save_skeletons(dir / "train.json", data.train);
  save_skeletons(dir / "test.json", data.test);
  save_bank(dir / "bank.json", data.bank);
  save_protocol(dir / "protocol.json", data.protocol);
}

int cmd_gen_data(const CLI::App& cmd, const Flags& f, int argc, char** argv) {
  RunConfig c = resolve(cmd, f);
  const fs::path out = prepare_out(f.out);
  SynthData data = generate(c.synth);
  save_synth(out, data);
  Manifest m("gen-data", c, argc, argv);
  for (const char* name : {"train", "test", "bank", "protocol"}) m.artifact(name, out / (std::string(name) + ".json"));
  m.write(out);
  std::printf("wrote %zu train / %zu test samples, %zu classes (%zu seen) to %s\n", data.train.samples.size(),
              data.test.samples.size(), c.synth.num_classes, data.protocol.seen.size(), out.string().c_str());
  return 0;
}

template <class Sample>
TrainResult run_training(const std::vector<Sample>& data, const SemanticBank& bank, const SplitProtocol& protocol,
                         const RunConfig& c, std::ofstream& log) {
  log << "epoch,lr,loss\n";
  return train(data, bank, protocol, c.model, c.train, c.seed, [&log](std::size_t e, double lr, double loss) {
    log << e + 1 << ',' << lr << ',' << loss << '\n';
    std::printf("epoch %3zu  lr %.4g  loss %.6f\n", e + 1, lr, loss);
    std::fflush(stdout);
  });
}

int cmd_train(const CLI::App& cmd, const Flags& f, int argc, char** argv) {
  RunConfig c = resolve(cmd, f);
  const fs::path out = prepare_out(f.out);
  SemanticBank bank = load_bank(f.bank);
  const SplitProtocol protocol = load_protocol(f.protocol);
  LoadedData data = load_data(f.data, bank.phases());

  std::ofstream log(out / "train_log.csv");
  if (!log) throw FileError("cannot write " + (out / "train_log.csv").string());
  log.precision(9);
  TrainResult res = data.is_features ? run_training(data.features, bank, protocol, c, log)
                                     : run_training(data.skeletons, bank, protocol, c, log);
  log.close();
  save_checkpoint(out / "checkpoint.json", res.checkpoint);

  Manifest m("train", c, argc, argv);
  m.input("data", f.data);
  m.input("bank", f.bank);
  m.input("protocol", f.protocol);
  m.artifact("checkpoint", out / "checkpoint.json");
  m.artifact("log", out / "train_log.csv");
  m.doc()["initial_loss"] = res.log.initial_loss;
  m.doc()["final_loss"] = res.log.epoch_loss.empty() ? res.log.initial_loss : res.log.epoch_loss.back();
  m.write(out);
  return 0;
}

void print_report(const EvalReport& r) {
  if (r.acc) {
    std::printf("ZSL  Acc %.2f%%  (%zu unseen samples)\n", 100.0 * *r.acc, r.n_unseen);
  } else {
    std::printf("GZSL S %.2f%%  U %.2f%%  H %.2f%%  (%zu seen, %zu unseen samples)\n", 100.0 * *r.seen,
                100.0 * *r.unseen, 100.0 * *r.harmonic, r.n_seen, r.n_unseen);
  }
}

int cmd_eval(const CLI::App& cmd, const Flags& f, int argc, char** argv) {
  RunConfig c = resolve(cmd, f);
  const fs::path out = prepare_out(f.out);
  const Checkpoint ck = load_checkpoint(f.ckpt);
  SemanticBank bank = load_bank(f.bank);
  SplitProtocol protocol = load_protocol(f.protocol);
  protocol.mode = parse_mode(f.mode);
  LoadedData data = load_data(f.data, ck.model.phases);

  const EvalReport r = data.is_features ? evaluate(ck, data.features, bank, protocol, c.calib, f.strict)
                                        : evaluate(ck, data.skeletons, bank, protocol, c.calib, f.strict);
  io::write_json(out / "report.json", to_json(r));
  print_report(r);

  Manifest m("eval", c, argc, argv);
  m.input("checkpoint", f.ckpt);
  m.input("data", f.data);
  m.input("bank", f.bank);
  m.input("protocol", f.protocol);
  m.artifact("report", out / "report.json");
  m.write(out);
  return 0;
}

int cmd_gradcheck(const CLI::App& cmd, const Flags& f, int argc, char** argv) {
  RunConfig c = resolve(cmd, f);
  const auto start = std::chrono::steady_clock::now();
  const GradCheckFixture fixture = make_gradcheck_fixture(c.seed);
  const GradCheckReport r = check_fixture(fixture, f.eps);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool pass = r.max_rel_error < 1e-5;
  std::printf("max relative error %.3e at %s[%zu] (analytic %.6e, numeric %.6e)\n", r.max_rel_error,
              r.worst_param.c_str(), r.worst_index, r.analytic, r.numeric);
  std::printf("%zu coordinates, step %.1e, %.2f s: %s\n", r.coordinates, f.eps, seconds, pass ? "PASS" : "FAIL");
  if (!f.out.empty()) {
    const fs::path out = prepare_out(f.out);
    Manifest m("gradcheck", c, argc, argv);
    m.doc()["result"] = {{"max_rel_error", r.max_rel_error}, {"worst_param", r.worst_param},
                         {"worst_index", r.worst_index}, {"coordinates", r.coordinates},
                         {"eps", f.eps}, {"pass", pass}};
    m.write(out);
  }
  if (!pass) throw VerificationFailed("gradient check above 1e-5");
  return 0;
}

int cmd_sweep(const CLI::App& cmd, const Flags& f, int argc, char** argv) {
  RunConfig c = resolve(cmd, f);
  const fs::path out = prepare_out(f.out);
  const SynthData data = generate(c.synth);
  save_synth(out, data);
  SplitProtocol zsl = data.protocol;
  zsl.mode = EvalMode::zsl;

  std::ofstream csv(out / "sweep.csv");
  if (!csv) throw FileError("cannot write " + (out / "sweep.csv").string());
  csv.precision(9);
  csv << "N_s,N_t,final_loss,zsl_acc,gzsl_seen,gzsl_unseen,gzsl_h\n";
  for (std::size_t ns : f.grid) {
    for (std::size_t nt : f.grid) {
      RunConfig run = c;
      run.model.N_s = ns;
      run.model.N_t = nt;
      TrainResult res = train(data.train.samples, data.bank, data.protocol, run.model, run.train, run.seed);
      const auto scores = score_dataset(res.checkpoint, data.test.samples, data.bank, data.protocol);
      const EvalReport z = evaluate_scores(scores, zsl, run.calib);
      const EvalReport g = evaluate_scores(scores, data.protocol, run.calib);
      csv << ns << ',' << nt << ',' << res.log.epoch_loss.back() << ',' << *z.acc << ',' << *g.seen << ','
          << *g.unseen << ',' << *g.harmonic << '\n';
      csv.flush();
      std::printf("N_s %3zu  N_t %3zu  ZSL %.3f  S %.3f  U %.3f  H %.3f\n", ns, nt, *z.acc, *g.seen, *g.unseen,
                  *g.harmonic);
      std::fflush(stdout);
    }
  }
  csv.close();
  Manifest m("sweep", c, argc, argv);
  m.doc()["grid"] = f.grid;
  m.artifact("sweep", out / "sweep.csv");
  for (const char* name : {"train", "test", "bank", "protocol"}) m.artifact(name, out / (std::string(name) + ".json"));
  m.write(out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot skeleton action recognition with evolving micro-prototypes"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset, semantic bank and split");
  add_common(gen, f);
  gen->add_option("--noise-std", f.noise_std)->check(CLI::NonNegativeNumber);
  gen->add_option("--out", f.out)->required();

  auto* tr = app.add_subcommand("train", "train a model on seen classes");
  add_common(tr, f);
  add_model_flags(tr, f);
  add_train_flags(tr, f);
  tr->add_option("--data", f.data, "skeleton or feature manifest")->required();
  tr->add_option("--bank", f.bank)->required();
  tr->add_option("--protocol", f.protocol)->required();
  tr->add_option("--out", f.out)->required();

  auto* ev = app.add_subcommand("eval", "ZSL or GZSL evaluation of a checkpoint");
  add_common(ev, f);
  add_calib_flags(ev, f);
  ev->add_option("--ckpt", f.ckpt)->required();
  ev->add_option("--data", f.data)->required();
  ev->add_option("--bank", f.bank)->required();
  ev->add_option("--protocol", f.protocol)->required();
  ev->add_option("--mode", f.mode)->check(CLI::IsMember({"zsl", "gzsl"}));
  ev->add_flag("--strict", f.strict, "single fused label instead of the two-stream set");
  ev->add_option("--out", f.out)->required();

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full forward pass");
  add_common(gc, f);
  gc->add_option("--eps", f.eps, "central-difference step")->check(CLI::PositiveNumber);
  gc->add_option("--out", f.out);

  auto* sw = app.add_subcommand("sweep", "N_s x N_t grid on synthetic data, written as CSV");
  add_common(sw, f);
  add_train_flags(sw, f);
  add_calib_flags(sw, f);
  sw->add_option("--grid", f.grid, "prototype counts to try for both N_s and N_t")->delimiter(',');
  sw->add_option("--out", f.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_gen_data(*gen, f, argc, argv);
    if (*tr) return cmd_train(*tr, f, argc, argv);
    if (*ev) return cmd_eval(*ev, f, argc, argv);
    if (*gc) return cmd_gradcheck(*gc, f, argc, argv);
    if (*sw) return cmd_sweep(*sw, f, argc, argv);
  } catch (const VerificationFailed& e) {
    std::cerr << "neuron: " << e.what() << "\n";
    return 3;
  } catch (const UsageError& e) {
    std::cerr << "neuron: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "neuron: config: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "neuron: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "neuron: unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
