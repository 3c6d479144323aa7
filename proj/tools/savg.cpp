// savg: command-line front end for the scenario-aware audio-visual target
// speech extraction stack — dataset simulation, extractor/classifier
// training, extraction, cascade routing, evaluation and reporting.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "savg/cascade.hpp"
#include "savg/checkpoint.hpp"
#include "savg/config.hpp"
#include "savg/errors.hpp"
#include "savg/eval.hpp"
#include "savg/simulate.hpp"
#include "savg/train.hpp"

namespace fs = std::filesystem;
using namespace savg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalidInput = 2;
constexpr int kExitConfig = 3;
constexpr int kExitNumerical = 4;

std::string to_ini(const nn::GridNetConfig& g, const std::string& prefix) {
  std::string ini;
  auto put = [&](const std::string& key, const std::string& value) {
    ini += prefix + "." + key + " = " + value + "\n";
  };
  put("embed_dim", std::to_string(g.embed_dim));
  put("blocks", std::to_string(g.blocks));
  put("deconv_kernel", std::to_string(g.deconv_kernel));
  put("deconv_stride", std::to_string(g.deconv_stride));
  put("lstm_hidden", std::to_string(g.lstm_hidden));
  put("attn_heads", std::to_string(g.attn_heads));
  put("attn_qk_channels", std::to_string(g.attn_qk_channels));
  put("stft.window_size", std::to_string(g.stft.window_size));
  put("stft.hop_size", std::to_string(g.stft.hop_size));
  put("stft.fft_size", std::to_string(g.stft.fft_size));
  put("stft.window", g.stft.window == WindowKind::Hann ? "hann" : "sqrt_hann");
  put("visual.conv3d_channels", std::to_string(g.visual.conv3d_channels));
  put("visual.embed_dim", std::to_string(g.visual.embed_dim));
  put("visual.vtcn_reps", std::to_string(g.visual.vtcn_reps));
  put("visual.image_size", std::to_string(g.visual.image_size));
  return ini;
}

std::string to_ini(const nn::ClassifierConfig& c, const std::string& prefix) {
  std::string ini;
  auto put = [&](const std::string& key, const std::string& value) {
    ini += prefix + "." + key + " = " + value + "\n";
  };
  put("audio_channels", std::to_string(c.audio_channels));
  put("conv_kernel", std::to_string(c.conv_kernel));
  put("conv_stride", std::to_string(c.conv_stride));
  put("pool", std::to_string(c.pool));
  put("audio_tcn_blocks", std::to_string(c.audio_tcn_blocks));
  put("backend_tcn_blocks", std::to_string(c.backend_tcn_blocks));
  put("backend_hidden", std::to_string(c.backend_hidden));
  put("visual.conv3d_channels", std::to_string(c.visual.conv3d_channels));
  put("visual.embed_dim", std::to_string(c.visual.embed_dim));
  put("visual.vtcn_reps", std::to_string(c.visual.vtcn_reps));
  put("visual.image_size", std::to_string(c.visual.image_size));
  return ini;
}

std::string sidecar_path(const std::string& ckpt) { return ckpt + ".ini"; }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInputError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw InvalidInputError("failed writing " + path);
}

// The sidecar written next to a checkpoint pins the architecture it was
// trained with; when present it overrides the global config file.
Config config_for_model(const Config& base, const std::string& ckpt) {
  const std::string side = sidecar_path(ckpt);
  if (fs::exists(side)) return Config::load(side);
  return base;
}

std::vector<sim::Scene> load_dataset(const std::string& dir) {
  std::vector<sim::Scene> scenes;
  for (const sim::ManifestRow& row : sim::read_manifest(sim::manifest_path(dir))) {
    scenes.push_back(sim::load_scene(row));
  }
  if (scenes.empty()) throw InvalidInputError("dataset " + dir + " has no scenes");
  return scenes;
}

void require_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("missing checkpoint: " + path);
}

struct CommonOpts {
  std::string config_path;

  Config config() const {
    return config_path.empty() ? Config() : Config::load(config_path);
  }
};

int run_simulate(const CommonOpts& common, const std::string& out_dir) {
  const sim::SceneSpec spec = scene_spec_from(common.config());
  const auto rows = sim::build_dataset(spec, out_dir);
  std::printf("wrote %zu scenes to %s\n", rows.size(), out_dir.c_str());
  return kExitOk;
}

int run_train_extractor(const CommonOpts& common, const std::string& role_text,
                        const std::string& data_dir, const std::string& dev_dir,
                        const std::string& out_ckpt, const std::string& init_ckpt,
                        bool dynamic_mixing) {
  const Config cfg = common.config();
  const train::Role role = train::parse_role(role_text);
  nn::GridNetConfig gcfg = gridnet_from(cfg);
  train::TrainConfig tcfg = train_from(cfg);
  tcfg.dynamic_mixing = tcfg.dynamic_mixing || dynamic_mixing;

  std::vector<sim::Scene> train_scenes = load_dataset(data_dir);
  std::vector<sim::Scene> dev_scenes = dev_dir.empty() ? train_scenes : load_dataset(dev_dir);

  nn::ParamStore store(tcfg.seed);
  nn::AvGridNet model = nn::AvGridNet::build(store, gcfg);
  if (!init_ckpt.empty()) {
    require_checkpoint(init_ckpt);
    nn::load_checkpoint(init_ckpt, store);
    std::fprintf(stderr, "warm start from %s (fresh optimizer state)\n", init_ckpt.c_str());
  }

  std::optional<sim::StemPool> pool;
  if (tcfg.dynamic_mixing) pool = sim::build_stem_pool(scene_spec_from(cfg));

  const train::TrainResult result = train::train_extractor(
      model, store, role, train_scenes, dev_scenes, tcfg, pool ? &*pool : nullptr);
  nn::save_checkpoint(out_ckpt, store);
  write_text(sidecar_path(out_ckpt), to_ini(gcfg, "gridnet"));
  std::printf("trained %s extractor: %zu epochs, best dev loss %.6f (epoch %zu)%s\n",
              train::to_string(role), result.history.size(), result.best_dev_loss,
              result.best_epoch, result.stopped_early ? ", stopped early" : "");
  std::printf("checkpoint: %s\n", out_ckpt.c_str());
  return kExitOk;
}

int run_train_classifier(const CommonOpts& common, const std::string& data_dir,
                         const std::string& dev_dir, const std::string& out_ckpt) {
  const Config cfg = common.config();
  nn::ClassifierConfig ccfg = classifier_from(cfg);
  train::TrainConfig tcfg = train_from(cfg);

  std::vector<sim::Scene> train_scenes = load_dataset(data_dir);
  std::vector<sim::Scene> dev_scenes = dev_dir.empty() ? train_scenes : load_dataset(dev_dir);

  nn::ParamStore store(tcfg.seed);
  nn::ScenarioClassifier model = nn::ScenarioClassifier::build(store, ccfg);
  const train::TrainResult result =
      train::train_classifier(model, store, train_scenes, dev_scenes, tcfg);
  nn::save_checkpoint(out_ckpt, store);
  write_text(sidecar_path(out_ckpt), to_ini(ccfg, "classifier"));
  std::printf("trained classifier: %zu epochs, best dev BCE %.6f (epoch %zu)%s\n",
              result.history.size(), result.best_dev_loss, result.best_epoch,
              result.stopped_early ? ", stopped early" : "");
  std::printf("checkpoint: %s\n", out_ckpt.c_str());
  return kExitOk;
}

int run_extract(const CommonOpts& common, const std::string& model_ckpt,
                const std::string& scene_id, const std::string& data_dir,
                const std::string& wav_path, const std::string& face_path,
                const std::string& out_wav) {
  require_checkpoint(model_ckpt);
  const Config cfg = config_for_model(common.config(), model_ckpt);
  nn::ParamStore store;
  nn::AvGridNet model = nn::AvGridNet::build(store, gridnet_from(cfg));
  nn::load_checkpoint(model_ckpt, store);

  AudioClip mixture;
  nn::FaceTrack face;
  const AudioClip* reference = nullptr;
  sim::Scene scene;
  if (!scene_id.empty()) {
    if (data_dir.empty()) throw ConfigError("--scene needs --data DIR");
    bool found = false;
    for (const sim::ManifestRow& row : sim::read_manifest(sim::manifest_path(data_dir))) {
      if (row.scene_id == scene_id) {
        scene = sim::load_scene(row);
        found = true;
        break;
      }
    }
    if (!found) throw InvalidInputError("scene '" + scene_id + "' not found in " + data_dir);
    mixture = scene.mixture;
    face = scene.face;
    reference = &scene.target;
  } else {
    if (wav_path.empty() || face_path.empty()) {
      throw ConfigError("extract needs either --scene with --data, or --wav with --face");
    }
    mixture = wav_read(wav_path);
    face = nn::read_face_track(face_path);
  }

  const AudioClip estimate = model.extract(mixture, face);
  wav_write(out_wav, estimate);
  std::printf("wrote %s (%zu samples)\n", out_wav.c_str(), estimate.size());
  if (reference != nullptr) {
    std::printf("si_sdr_in %.3f dB -> si_sdr_out %.3f dB\n",
                eval::si_sdr_metric(reference->samples, mixture.samples),
                eval::si_sdr_metric(reference->samples, estimate.samples));
  }
  return kExitOk;
}

cascade::ModelSet load_bundle(const Config& base, const std::string& classifier_ckpt,
                              const std::string& universal_ckpt, const std::string& speech_ckpt,
                              const std::string& noise_ckpt) {
  const nn::ClassifierConfig ccfg =
      classifier_from(config_for_model(base, classifier_ckpt));
  const nn::GridNetConfig gcfg = gridnet_from(config_for_model(base, universal_ckpt));
  return cascade::load_model_set(classifier_ckpt, universal_ckpt, speech_ckpt, noise_ckpt, ccfg,
                                 gcfg);
}

int run_route(const CommonOpts& common, const std::string& strategy_text,
              const std::string& data_dir, const std::string& classifier_ckpt,
              const std::string& universal_ckpt, const std::string& speech_ckpt,
              const std::string& noise_ckpt, const std::string& trail_path,
              const std::string& out_dir) {
  const cascade::Strategy strategy = cascade::parse_strategy(strategy_text);
  const cascade::ModelSet models =
      load_bundle(common.config(), classifier_ckpt, universal_ckpt, speech_ckpt, noise_ckpt);
  const cascade::ExpertBundle bundle = models.bundle();

  const std::vector<sim::Scene> scenes = load_dataset(data_dir);
  std::vector<cascade::RoutingInput> inputs;
  inputs.reserve(scenes.size());
  for (const sim::Scene& sc : scenes) inputs.push_back(cascade::to_routing_input(sc));

  const std::vector<cascade::RouteResult> results =
      cascade::batch_route(inputs, bundle, strategy);

  std::string trail;
  std::vector<cascade::RoutingDecision> decisions;
  for (const cascade::RouteResult& r : results) {
    trail += cascade::trail_line(r.decision) + "\n";
    decisions.push_back(r.decision);
    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      wav_write((fs::path(out_dir) / (r.decision.scene_id + "_est.wav")).string(), r.output);
    }
  }
  if (!trail_path.empty()) write_text(trail_path, trail);

  const eval::ConfusionMatrix cm = eval::confusion(decisions, eval::truth_map(scenes));
  std::printf("routed %zu scenes with %s\n", results.size(), cascade::to_string(strategy));
  std::printf("confusion (noise=positive): tp=%zu fp=%zu fn=%zu tn=%zu accuracy=%.4f\n", cm.tp,
              cm.fp, cm.fn, cm.tn, cm.accuracy());
  return kExitOk;
}

int run_evaluate(const CommonOpts& common, const std::string& system, const std::string& data_dir,
                 const std::string& model_ckpt, const std::string& strategy_text,
                 const std::string& classifier_ckpt, const std::string& universal_ckpt,
                 const std::string& speech_ckpt, const std::string& noise_ckpt,
                 const std::string& csv_path, const std::string& trail_path) {
  const std::vector<sim::Scene> scenes = load_dataset(data_dir);
  std::vector<eval::EvalRecord> records;

  if (system == "mixture") {
    records = eval::evaluate(scenes, [](const sim::Scene& sc) { return sc.mixture; });
  } else if (system == "extractor") {
    if (model_ckpt.empty()) throw ConfigError("--system extractor needs --model CKPT");
    require_checkpoint(model_ckpt);
    const Config cfg = config_for_model(common.config(), model_ckpt);
    nn::ParamStore store;
    nn::AvGridNet model = nn::AvGridNet::build(store, gridnet_from(cfg));
    nn::load_checkpoint(model_ckpt, store);
    records = eval::evaluate(
        scenes, [&model](const sim::Scene& sc) { return model.extract(sc.mixture, sc.face); });
  } else if (system == "cascade") {
    const cascade::Strategy strategy = cascade::parse_strategy(strategy_text);
    const cascade::ModelSet models =
        load_bundle(common.config(), classifier_ckpt, universal_ckpt, speech_ckpt, noise_ckpt);
    records = eval::evaluate_routed(scenes, models.bundle(), strategy);
    if (!trail_path.empty()) {
      std::string trail;
      for (const eval::EvalRecord& r : records) {
        if (r.decision) trail += cascade::trail_line(*r.decision) + "\n";
      }
      write_text(trail_path, trail);
    }
  } else {
    throw ConfigError("unknown system '" + system + "' (expected mixture, extractor or cascade)");
  }

  if (!csv_path.empty()) write_text(csv_path, eval::records_csv(records));
  std::fputs(eval::summary_text(eval::summarize(records)).c_str(), stdout);
  return kExitOk;
}

int run_report(const std::string& records_path, const std::string& compare_path,
               double threshold_db) {
  std::ifstream in(records_path, std::ios::binary);
  if (!in) throw InvalidInputError("cannot open " + records_path);
  std::string csv((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::vector<eval::EvalRecord> records = eval::records_from_csv(csv);

  std::fputs(eval::summary_text(eval::summarize(records)).c_str(), stdout);
  const eval::OutlierReport outliers = eval::analyze_outliers(records, threshold_db);
  std::printf("outliers (SI-SDRi < %.2f dB): %zu total (%zu speech, %zu noise)\n", threshold_db,
              outliers.total, outliers.speech, outliers.noise);

  if (!compare_path.empty()) {
    std::ifstream cmp_in(compare_path, std::ios::binary);
    if (!cmp_in) throw InvalidInputError("cannot open " + compare_path);
    std::string cmp_csv((std::istreambuf_iterator<char>(cmp_in)),
                        std::istreambuf_iterator<char>());
    const std::vector<eval::EvalRecord> other = eval::records_from_csv(cmp_csv);
    const eval::StrategyComparison cmp = eval::compare_strategies(records, other, threshold_db);
    std::printf("comparison (second vs first): %zu wins, %zu losses, %zu ties, "
                "mean SI-SDRi delta %+.3f dB, outlier delta %+ld\n",
                cmp.wins, cmp.losses, cmp.ties, cmp.mean_delta, cmp.outlier_delta);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scenario-aware audio-visual target speech extraction"};
  app.require_subcommand(1);

  CommonOpts common;
  app.add_option("--config", common.config_path, "INI config file (dotted keys per module)");

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "synthesize a labeled scene dataset");
  std::string sim_out = "dataset";
  sim_cmd->add_option("--out", sim_out, "output dataset directory");

  // train-extractor
  auto* tex = app.add_subcommand("train-extractor", "train an extractor for one role");
  std::string tex_role, tex_data, tex_dev, tex_out = "extractor.ckpt", tex_init;
  bool tex_dm = false;
  tex->add_option("--role", tex_role, "universal | speech | noise")->required();
  tex->add_option("--data", tex_data, "training dataset directory")->required();
  tex->add_option("--dev", tex_dev, "dev dataset directory (default: training set)");
  tex->add_option("--out", tex_out, "output checkpoint path");
  tex->add_option("--init", tex_init, "warm-start checkpoint (optimizer state starts fresh)");
  tex->add_flag("--dynamic-mixing", tex_dm, "draw fresh mixtures each step from the stem pool");

  // train-classifier
  auto* tcl = app.add_subcommand("train-classifier", "train the scenario classifier");
  std::string tcl_data, tcl_dev, tcl_out = "classifier.ckpt";
  tcl->add_option("--data", tcl_data, "training dataset directory")->required();
  tcl->add_option("--dev", tcl_dev, "dev dataset directory (default: training set)");
  tcl->add_option("--out", tcl_out, "output checkpoint path");

  // extract
  auto* ext = app.add_subcommand("extract", "run one extractor on a scene or raw files");
  std::string ext_model, ext_scene, ext_data, ext_wav, ext_face, ext_out = "estimate.wav";
  ext->add_option("--model", ext_model, "extractor checkpoint")->required();
  ext->add_option("--scene", ext_scene, "scene id inside --data");
  ext->add_option("--data", ext_data, "dataset directory for --scene");
  ext->add_option("--wav", ext_wav, "mixture WAV path");
  ext->add_option("--face", ext_face, "face track (FTRK) path");
  ext->add_option("--out", ext_out, "output WAV path");

  // route
  auto* rt = app.add_subcommand("route", "classify and dispatch scenes through the cascade");
  std::string rt_strategy = "plain", rt_data, rt_classifier, rt_universal, rt_speech, rt_noise;
  std::string rt_trail, rt_outdir;
  rt->add_option("--strategy", rt_strategy, "plain | pp1 | pp2 | oracle");
  rt->add_option("--data", rt_data, "dataset directory")->required();
  rt->add_option("--classifier", rt_classifier, "classifier checkpoint")->required();
  rt->add_option("--universal", rt_universal, "universal extractor checkpoint")->required();
  rt->add_option("--speech", rt_speech, "speech expert checkpoint")->required();
  rt->add_option("--noise", rt_noise, "noise expert checkpoint")->required();
  rt->add_option("--trail", rt_trail, "write the decision trail to this file");
  rt->add_option("--out-dir", rt_outdir, "write per-scene estimates here");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "score a system on a dataset");
  std::string ev_system = "mixture", ev_data, ev_model, ev_strategy = "plain";
  std::string ev_classifier, ev_universal, ev_speech, ev_noise, ev_csv, ev_trail;
  ev->add_option("--system", ev_system, "mixture | extractor | cascade");
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--model", ev_model, "extractor checkpoint (system=extractor)");
  ev->add_option("--strategy", ev_strategy, "cascade strategy (system=cascade)");
  ev->add_option("--classifier", ev_classifier, "classifier checkpoint (system=cascade)");
  ev->add_option("--universal", ev_universal, "universal checkpoint (system=cascade)");
  ev->add_option("--speech", ev_speech, "speech expert checkpoint (system=cascade)");
  ev->add_option("--noise", ev_noise, "noise expert checkpoint (system=cascade)");
  ev->add_option("--csv", ev_csv, "write per-scene records CSV");
  ev->add_option("--trail", ev_trail, "write the decision trail (system=cascade)");

  // report
  auto* rp = app.add_subcommand("report", "summarize records CSVs");
  std::string rp_records, rp_compare;
  double rp_threshold = 1.0;
  rp->add_option("--records", rp_records, "records CSV from evaluate")->required();
  rp->add_option("--compare", rp_compare, "second records CSV to compare against");
  rp->add_option("--threshold-db", rp_threshold, "outlier threshold on SI-SDRi");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*sim_cmd) return run_simulate(common, sim_out);
    if (*tex) {
      return run_train_extractor(common, tex_role, tex_data, tex_dev, tex_out, tex_init, tex_dm);
    }
    if (*tcl) return run_train_classifier(common, tcl_data, tcl_dev, tcl_out);
    if (*ext) return run_extract(common, ext_model, ext_scene, ext_data, ext_wav, ext_face, ext_out);
    if (*rt) {
      return run_route(common, rt_strategy, rt_data, rt_classifier, rt_universal, rt_speech,
                       rt_noise, rt_trail, rt_outdir);
    }
    if (*ev) {
      return run_evaluate(common, ev_system, ev_data, ev_model, ev_strategy, ev_classifier,
                          ev_universal, ev_speech, ev_noise, ev_csv, ev_trail);
    }
    if (*rp) return run_report(rp_records, rp_compare, rp_threshold);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  } catch (const InvalidInputError& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return kExitInvalidInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInvalidInput;
  }
  return kExitOk;
}
