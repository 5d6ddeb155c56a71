// twrmcae command line: one subcommand per pipeline stage.
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "twrmcae/config.hpp"
#include "twrmcae/error.hpp"
#include "twrmcae/eval.hpp"
#include "twrmcae/io.hpp"
#include "twrmcae/parallel.hpp"
#include "twrmcae/pipeline.hpp"
#include "twrmcae/preprocess.hpp"
#include "twrmcae/sim.hpp"
#include "twrmcae/subspace.hpp"
#include "twrmcae/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace twrmcae;

namespace {

constexpr const char* kToolVersion = "0.1.0";
constexpr std::array<const char*, 3> kSubNames{"ta", "wa", "no"};

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Current UTC time, or SOURCE_DATE_EPOCH when set so model headers can be reproduced.
std::string utc_now() {
  std::time_t t = std::time(nullptr);
  if (const char* e = std::getenv("SOURCE_DATE_EPOCH")) t = static_cast<std::time_t>(std::strtoll(e, nullptr, 10));
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

/// Collects what a command read and wrote, then writes the manifest.
struct Manifest {
  explicit Manifest(std::string cmd) : command(std::move(cmd)) {}
  std::string command;
  json config = json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> inputs, outputs;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void write(const fs::path& path) const {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const json j = {{"command", command},
                    {"config_hash", hex(fnv1a(config.dump()))},
                    {"config", config},
                    {"seed", seed},
                    {"inputs", inputs},
                    {"outputs", outputs},
                    {"tool_version", kToolVersion},
                    {"threads", worker_count()},
                    {"finished", utc_now()},
                    {"duration_s", secs}};
    write_json(j, path);
  }
};

fs::path manifest_path_for(const fs::path& out) {
  if (fs::is_directory(out)) return out / "manifest.json";
  return fs::path(out.string() + ".manifest.json");
}

RadarConfig load_radar(const std::string& path) {
  RadarConfig cfg;
  if (!path.empty()) cfg = read_json(path).get<RadarConfig>();
  cfg.validate();
  return cfg;
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void save(const Tensor& t, const fs::path& p, Manifest& m) {
  ensure_parent(p);
  io::write_twrt(t, p);
  m.outputs.push_back(p.string());
}

CMatrix load_matrix(const fs::path& p) {
  const Tensor t = io::read_twrt(p);
  if (t.rank() != 2) throw ShapeError(p.string() + ": expected a rank-2 matrix");
  return to_cmatrix(t);
}

std::vector<sim::MotionState> parse_states(const std::string& list) {
  if (list.empty()) return {sim::kAllStates.begin(), sim::kAllStates.end()};
  std::vector<sim::MotionState> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(sim::parse_state(item));
  if (out.empty()) throw ValueError("no states selected");
  return out;
}

// ---------------------------------------------------------------- dataset layout

struct LabelRow {
  std::string id;
  std::string state;
  int label = 0;
  std::string split;
};

std::vector<LabelRow> read_labels(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw IoError("cannot open " + p.string());
  std::string line;
  std::getline(is, line);
  if (line != "id,state,label,split") throw IoError(p.string() + ": unexpected header");
  std::vector<LabelRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    LabelRow r;
    std::string label;
    std::getline(ss, r.id, ',');
    std::getline(ss, r.state, ',');
    std::getline(ss, label, ',');
    std::getline(ss, r.split, ',');
    r.label = std::stoi(label);
    rows.push_back(r);
  }
  return rows;
}

fs::path image_path(const fs::path& data, pipeline::MapKind kind, const std::string& group, const std::string& id) {
  return data / std::string(pipeline::kind_name(kind)) / group / (id + ".twrt");
}

std::array<Tensor, 3> load_subspaces(const fs::path& data, pipeline::MapKind kind, const std::string& prefix,
                                     const std::string& id) {
  std::array<Tensor, 3> out;
  for (std::size_t i = 0; i < 3; ++i) out[i] = io::read_twrt(image_path(data, kind, prefix + kSubNames[i], id));
  return out;
}

// ---------------------------------------------------------------- commands

struct CommonOpts {
  std::uint64_t seed = 0;
  std::string config;
  std::string out;
};

void add_common(CLI::App* app, CommonOpts& c, bool out_required = true) {
  app->add_option("--seed", c.seed, "Random seed");
  app->add_option("--config", c.config, "JSON configuration file");
  auto* o = app->add_option("--out", c.out, "Output path");
  if (out_required) o->required();
}

struct SimulateOpts {
  std::string state = "walk_parallel";
  std::uint64_t index = 0;
  double wall_amplitude = sim::SceneOptions{}.wall_amplitude;
  double snr_db = sim::SceneOptions{}.snr_db;
  bool no_noise = false;
  std::string clean, scene;
};

void cmd_simulate(const CommonOpts& c, const SimulateOpts& o) {
  Manifest m{"simulate"};
  m.seed = c.seed;
  const RadarConfig cfg = load_radar(c.config);
  sim::SceneOptions so;
  so.wall_amplitude = o.wall_amplitude;
  so.snr_db = o.no_noise ? sim::kNoNoise : o.snr_db;
  m.config = {{"radar", cfg}, {"state", o.state}, {"index", o.index}, {"wall_amplitude", so.wall_amplitude},
              {"snr_db", eval::number_or_inf(so.snr_db)}};
  if (!c.config.empty()) m.inputs.push_back(c.config);
  const pipeline::Frame f = pipeline::simulate_frame(sim::parse_state(o.state), o.index, c.seed, cfg, so);
  save(to_tensor(f.echo), c.out, m);
  if (!o.clean.empty()) save(to_tensor(f.clean), o.clean, m);
  if (!o.scene.empty()) {
    ensure_parent(o.scene);
    write_json(json(f.scene), o.scene);
    m.outputs.push_back(o.scene);
  }
  m.write(manifest_path_for(c.out));
}

struct DatasetOpts {
  std::string states;
  std::size_t frames = 20;
  double val_fraction = 0.3;
  double wall_amplitude = sim::SceneOptions{}.wall_amplitude;
  double snr_db = sim::SceneOptions{}.snr_db;
};

void cmd_dataset(const CommonOpts& c, const DatasetOpts& o) {
  Manifest m{"dataset"};
  m.seed = c.seed;
  const RadarConfig cfg = load_radar(c.config);
  const auto states = parse_states(o.states);
  if (o.frames == 0) throw ValueError("--frames must be >= 1");
  if (!(o.val_fraction >= 0 && o.val_fraction < 1)) throw ValueError("--val-fraction must lie in [0, 1)");
  sim::SceneOptions so;
  so.wall_amplitude = o.wall_amplitude;
  so.snr_db = o.snr_db;
  json state_names = json::array();
  for (auto s : states) state_names.push_back(sim::state_name(s));
  m.config = {{"radar", cfg}, {"states", state_names}, {"frames", o.frames}, {"val_fraction", o.val_fraction},
              {"wall_amplitude", o.wall_amplitude}, {"snr_db", o.snr_db}};
  if (!c.config.empty()) m.inputs.push_back(c.config);

  const fs::path out = c.out;
  fs::create_directories(out);
  const std::size_t n_val = static_cast<std::size_t>(static_cast<double>(o.frames) * o.val_fraction + 0.5);
  const std::size_t n = states.size() * o.frames;
  std::vector<std::string> ids(n);
  std::vector<std::vector<std::string>> written(n);
  parallel_for(n, [&](std::size_t k) {
    const auto state = states[k / o.frames];
    const std::size_t idx = k % o.frames;
    char id[64];
    std::snprintf(id, sizeof id, "%s_%03zu", std::string(sim::state_name(state)).c_str(), idx);
    ids[k] = id;
    const pipeline::Frame f = pipeline::simulate_frame(state, idx, c.seed, cfg, so);
    auto put = [&](const Tensor& t, const fs::path& p) {
      ensure_parent(p);
      io::write_twrt(t, p);
      written[k].push_back(p.string());
    };
    put(to_tensor(f.echo), out / "echo" / (ids[k] + ".twrt"));
    put(to_tensor(f.clean), out / "clean_echo" / (ids[k] + ".twrt"));
    fs::create_directories(out / "scene");
    write_json(json(f.scene), out / "scene" / (ids[k] + ".json"));
    for (auto kind : {pipeline::MapKind::rtm, pipeline::MapKind::dtm}) {
      const pipeline::Sample s = pipeline::make_sample(f, cfg, kind);
      put(s.raw, image_path(out, kind, "raw", ids[k]));
      put(s.clean, image_path(out, kind, "clean", ids[k]));
      for (std::size_t i = 0; i < 3; ++i) {
        put(s.noisy_sub[i], image_path(out, kind, std::string("noisy_") + kSubNames[i], ids[k]));
        put(s.clean_sub[i], image_path(out, kind, std::string("clean_") + kSubNames[i], ids[k]));
      }
    }
  });
  std::ofstream csv(out / "labels.csv");
  csv << "id,state,label,split\n";
  for (std::size_t k = 0; k < n; ++k) {
    const auto state = states[k / o.frames];
    const bool val = k % o.frames >= o.frames - n_val;
    csv << ids[k] << ',' << sim::state_name(state) << ',' << sim::state_label(state) << ',' << (val ? "val" : "train")
        << '\n';
    for (auto& w : written[k]) m.outputs.push_back(w);
  }
  csv.close();
  if (!csv) throw IoError("failed writing labels.csv");
  write_json(json(cfg), out / "radar.json");
  m.outputs.push_back((out / "labels.csv").string());
  m.write(out / "manifest.json");
}

struct PreprocessOpts {
  std::string in, rtm, dtm, phi, png_dir;
};

void cmd_preprocess(const CommonOpts& c, const PreprocessOpts& o) {
  Manifest m{"preprocess"};
  const RadarConfig cfg = load_radar(c.config);
  m.config = {{"radar", cfg}};
  m.inputs.push_back(o.in);
  if (o.rtm.empty() && o.dtm.empty() && o.phi.empty()) throw ValueError("nothing to write: give --rtm, --dtm or --phi");
  const CMatrix echo = load_matrix(o.in);
  const CMatrix phi = pre::mti(pre::range_profile(echo, cfg).data);
  if (!o.phi.empty()) {
    const pre::GateBins g = pre::gate_bins(cfg, static_cast<std::size_t>(phi.cols()));
    if (g.count() == 0) throw ValueError("no bins in range gate");
    save(to_tensor(CMatrix(phi.middleCols(static_cast<Eigen::Index>(g.first), static_cast<Eigen::Index>(g.count())))),
         o.phi, m);
  }
  std::map<std::string, Tensor> images;
  if (!o.rtm.empty()) save(images["rtm"] = pre::build_rtm(phi, cfg), o.rtm, m);
  if (!o.dtm.empty()) save(images["dtm"] = pre::build_dtm(phi, cfg), o.dtm, m);
  if (!o.png_dir.empty()) {
    fs::create_directories(o.png_dir);
    for (const auto& [name, img] : images) {
      const fs::path p = fs::path(o.png_dir) / (name + ".png");
      io::write_png(img, p);
      m.outputs.push_back(p.string());
    }
  }
  const std::string anchor = !o.rtm.empty() ? o.rtm : !o.dtm.empty() ? o.dtm : o.phi;
  m.write(manifest_path_for(anchor));
}

struct SeparateOpts {
  std::string in, prefix;
  double alpha = 1.0;
  double n_obs = 0.0;
};

void cmd_separate(const CommonOpts&, const SeparateOpts& o) {
  Manifest m{"separate"};
  m.inputs.push_back(o.in);
  const CMatrix phi = load_matrix(o.in);
  subspace::SeparationParams sp;
  sp.alpha = o.alpha;
  const double n_obs = o.n_obs > 0 ? o.n_obs : static_cast<double>(phi.rows());
  m.config = {{"alpha", o.alpha}, {"n_obs", n_obs}};
  subspace::SeparationReport rep;
  const subspace::SubspaceTriple t = subspace::svd_separate(phi, sp, n_obs, &rep);
  save(to_tensor(t.target), o.prefix + "ta.twrt", m);
  save(to_tensor(t.wall), o.prefix + "wa.twrt", m);
  save(to_tensor(t.noise), o.prefix + "no.twrt", m);
  write_json(rep.to_json(), o.prefix + "report.json");
  m.outputs.push_back(o.prefix + "report.json");
  m.write(o.prefix + "manifest.json");
}

struct TrainOpts {
  std::string data, kind = "rtm";
  std::size_t epochs = 0;
  std::string loss_json;
};

void cmd_train(const CommonOpts& c, const TrainOpts& o) {
  Manifest m{"train"};
  m.seed = c.seed;
  const pipeline::MapKind kind = pipeline::parse_kind(o.kind);
  json cj = c.config.empty() ? json::object() : read_json(c.config);
  if (!c.config.empty()) m.inputs.push_back(c.config);
  trainer::TrainConfig tc = cj.value("train", json::object()).get<trainer::TrainConfig>();
  tc.seed = c.seed;
  if (o.epochs > 0) tc.epochs = o.epochs;
  trainer::ModelConfig mc = cj.value("model", json::object()).get<trainer::ModelConfig>();
  m.config = {{"train", tc}, {"model", mc}, {"kind", o.kind}};

  const fs::path data = o.data;
  const auto rows = read_labels(data / "labels.csv");
  m.inputs.push_back((data / "labels.csv").string());
  std::vector<trainer::TrainPair> train, val;
  for (const auto& r : rows) {
    trainer::TrainPair p{load_subspaces(data, kind, "noisy_", r.id), load_subspaces(data, kind, "clean_", r.id)};
    (r.split == "val" ? val : train).push_back(std::move(p));
  }
  if (train.empty()) throw ValueError("empty dataset: no training rows in " + (data / "labels.csv").string());
  if (train.front().noisy[0].dim(1) != mc.image_size)
    throw ShapeError("dataset images are " + std::to_string(train.front().noisy[0].dim(1)) +
                     " px but the model expects " + std::to_string(mc.image_size));
  Rng rng(c.seed, 0x6d6f64656cULL);
  const trainer::ModelParams init = trainer::init_model(mc, rng);
  const trainer::TrainResult res = trainer::train(train, val, init, tc, [](std::size_t e, double l) {
    std::fprintf(stderr, "epoch %zu loss %.6g\n", e + 1, l);
  });
  trainer::ModelFile mf{kind, c.seed, utc_now(), res.params};
  ensure_parent(c.out);
  trainer::write_model(c.out, mf);
  m.outputs.push_back(c.out);
  const std::string loss_path = o.loss_json.empty() ? c.out + ".loss.json" : o.loss_json;
  write_json({{"batch_loss", res.batch_loss}, {"epoch_loss", res.epoch_loss}, {"validation_loss", res.validation_loss}},
             loss_path);
  m.outputs.push_back(loss_path);
  m.write(manifest_path_for(c.out));
}

struct AugmentOpts {
  std::string model, frame, data, kind = "rtm", scene, png;
  double alpha = 1.0;
};

void cmd_augment(const CommonOpts& c, const AugmentOpts& o) {
  Manifest m{"augment"};
  const pipeline::MapKind kind = pipeline::parse_kind(o.kind);
  const trainer::ModelFile mf = trainer::read_model(o.model);
  m.inputs.push_back(o.model);
  m.config = {{"kind", o.kind}};
  if (!o.data.empty() == !o.frame.empty()) throw ValueError("give exactly one of --frame or --data");
  if (!o.frame.empty()) {
    const RadarConfig cfg = load_radar(c.config);
    double alpha = o.alpha;
    if (!o.scene.empty()) {
      alpha = pipeline::scene_alpha(read_json(o.scene).get<sim::Scene>(), o.alpha);
      m.inputs.push_back(o.scene);
    }
    m.config["radar"] = cfg;
    m.config["alpha"] = alpha;
    m.inputs.push_back(o.frame);
    const pipeline::MatrixImages mi = pipeline::render_with_subspaces(load_matrix(o.frame), cfg, kind, alpha);
    const Tensor out = trainer::augment(mi.subspaces, mf, kind);
    save(out, c.out, m);
    if (!o.png.empty()) {
      io::write_png(out, o.png);
      m.outputs.push_back(o.png);
    }
    m.write(manifest_path_for(c.out));
    return;
  }
  const fs::path data = o.data, out = c.out;
  fs::create_directories(out);
  const auto rows = read_labels(data / "labels.csv");
  m.inputs.push_back((data / "labels.csv").string());
  std::vector<Tensor> results(rows.size());
  parallel_for(rows.size(), [&](std::size_t k) {
    results[k] = trainer::augment(load_subspaces(data, kind, "noisy_", rows[k].id), mf, kind);
  });
  for (std::size_t k = 0; k < rows.size(); ++k) save(results[k], out / (rows[k].id + ".twrt"), m);
  m.write(out / "manifest.json");
}

struct EvaluateOpts {
  std::string pred, target, raw, labels, report;
  std::size_t k = 5;
};

void cmd_evaluate(const CommonOpts&, const EvaluateOpts& o) {
  Manifest m{"evaluate"};
  m.config = {{"k", o.k}};
  const fs::path pred = o.pred, target = o.target;
  std::vector<std::string> ids;
  std::vector<LabelRow> rows;
  if (!o.labels.empty()) {
    rows = read_labels(o.labels);
    for (const auto& r : rows) ids.push_back(r.id);
    m.inputs.push_back(o.labels);
  } else {
    for (const auto& e : fs::directory_iterator(pred))
      if (e.path().extension() == ".twrt") ids.push_back(e.path().stem().string());
    std::sort(ids.begin(), ids.end());
  }
  if (ids.empty()) throw ValueError("no predictions found in " + pred.string());
  json frames = json::array();
  std::vector<double> p_aug, p_raw, p_prepost, mses;
  std::vector<Tensor> aug_img(ids.size()), raw_img(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    aug_img[i] = io::read_twrt(pred / (ids[i] + ".twrt"));
    const Tensor t = io::read_twrt(target / (ids[i] + ".twrt"));
    json f = {{"id", ids[i]}};
    const double ms = eval::mse(aug_img[i], t);
    mses.push_back(ms);
    p_aug.push_back(eval::psnr_from_mse(ms));
    f["psnr_to_target_db"] = eval::number_or_inf(p_aug.back());
    f["mse_to_target"] = ms;
    if (!o.raw.empty()) {
      raw_img[i] = io::read_twrt(fs::path(o.raw) / (ids[i] + ".twrt"));
      p_raw.push_back(eval::psnr(raw_img[i], t));
      p_prepost.push_back(eval::psnr(aug_img[i], raw_img[i]));
      f["raw_psnr_to_target_db"] = eval::number_or_inf(p_raw.back());
      f["pre_post_psnr_db"] = eval::number_or_inf(p_prepost.back());
    }
    frames.push_back(f);
  }
  json rep = {{"pred_dir", o.pred}, {"target_dir", o.target}, {"raw_dir", o.raw}, {"frames", frames}};
  rep["psnr_to_target_db"] = {{"median", eval::number_or_inf(eval::median(p_aug))},
                              {"mean", eval::number_or_inf(eval::mean(p_aug))}};
  rep["mse_to_target_mean"] = eval::mean(mses);
  if (!p_raw.empty()) {
    rep["raw_psnr_to_target_db"] = {{"median", eval::number_or_inf(eval::median(p_raw))},
                                    {"mean", eval::number_or_inf(eval::mean(p_raw))}};
    rep["pre_post_psnr_db"] = {{"median", eval::number_or_inf(eval::median(p_prepost))}};
  }
  if (!rows.empty() && !o.raw.empty()) {
    std::vector<Tensor> tr_aug, tr_raw, va_aug, va_raw;
    std::vector<int> tr_lab, va_lab;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const bool val = rows[i].split == "val";
      (val ? va_aug : tr_aug).push_back(aug_img[i]);
      (val ? va_raw : tr_raw).push_back(raw_img[i]);
      (val ? va_lab : tr_lab).push_back(rows[i].label);
    }
    if (!tr_lab.empty() && !va_lab.empty()) {
      const auto knn_aug = eval::knn_classify(tr_aug, tr_lab, va_aug, o.k);
      const auto knn_raw = eval::knn_classify(tr_raw, tr_lab, va_raw, o.k);
      const auto probe_aug = eval::softmax_probe(tr_aug, tr_lab, va_aug, va_lab);
      const auto probe_raw = eval::softmax_probe(tr_raw, tr_lab, va_raw, va_lab);
      auto table = [](const std::map<int, double>& t) {
        json j = json::object();
        for (const auto& [l, a] : t) j[std::to_string(l)] = a;
        return j;
      };
      rep["classifier"] = {
          {"knn_k", o.k},
          {"knn_accuracy_augmented", eval::accuracy(va_lab, knn_aug)},
          {"knn_accuracy_raw", eval::accuracy(va_lab, knn_raw)},
          {"knn_state_accuracy_augmented", table(eval::per_class_accuracy(va_lab, knn_aug))},
          {"knn_state_accuracy_raw", table(eval::per_class_accuracy(va_lab, knn_raw))},
          {"probe_convergence_epochs_augmented", probe_aug.convergence_epochs},
          {"probe_convergence_epochs_raw", probe_raw.convergence_epochs},
          {"probe_final_accuracy_augmented", probe_aug.validation_accuracy.back()},
          {"probe_final_accuracy_raw", probe_raw.validation_accuracy.back()}};
    }
  }
  m.inputs.push_back(o.pred);
  m.inputs.push_back(o.target);
  ensure_parent(o.report);
  write_json(rep, o.report);
  m.outputs.push_back(o.report);
  m.write(manifest_path_for(o.report));
}

struct GradcheckOpts {
  std::string profile = "desk64";
  std::size_t layers = 2, size = 16, samples = 3;
  double eps = 1e-5, tol = 1e-4;
};

void cmd_gradcheck(const CommonOpts& c, const GradcheckOpts& o) {
  Manifest m{"gradcheck"};
  m.seed = c.seed;
  trainer::ModelConfig mc;
  mc.cnn_profile = o.profile;
  mc.lista_layers = o.layers;
  mc.image_size = o.size;
  m.config = {{"model", mc}, {"eps", o.eps}, {"samples_per_group", o.samples}, {"tol", o.tol}};
  Rng rng(c.seed);
  const trainer::ModelParams p = trainer::init_model(mc, rng);
  trainer::TrainPair pair;
  Rng data_rng(c.seed, 1);
  for (std::size_t i = 0; i < trainer::kLinks; ++i) {
    pair.noisy[i] = Tensor({mc.channels, o.size, o.size});
    pair.clean[i] = Tensor({mc.channels, o.size, o.size});
    for (double& v : pair.noisy[i].raw()) v = data_rng.uniform();
    for (double& v : pair.clean[i].raw()) v = data_rng.uniform();
  }
  trainer::GradCheckOptions go;
  go.eps = o.eps;
  go.samples_per_group = o.samples;
  go.seed = c.seed;
  const auto rep = trainer::grad_check_model(p, pair, go);
  json j = rep.to_json();
  j["tolerance"] = o.tol;
  j["pass"] = rep.worst_rel < o.tol;
  if (!c.out.empty()) {
    ensure_parent(c.out);
    write_json(j, c.out);
    m.outputs.push_back(c.out);
    m.write(manifest_path_for(c.out));
  }
  std::printf("worst relative error %.3g (%s), %zu checked, %zu skipped at kinks\n", rep.worst_rel,
              rep.worst_group.c_str(), rep.checked, rep.skipped);
  if (!(rep.worst_rel < o.tol)) throw NumericError("gradient check exceeded tolerance " + std::to_string(o.tol));
}

struct ReportOpts {
  std::string eval;
};

// Table cells carry the JSON values verbatim.
std::string fmt_db(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

void cmd_report(const CommonOpts& c, const ReportOpts& o) {
  Manifest m{"report"};
  const json ev = read_json(o.eval);
  m.inputs.push_back(o.eval);
  const fs::path out = c.out;
  fs::create_directories(out / "png");
  const std::string pred = ev.at("pred_dir"), target = ev.at("target_dir"), raw = ev.value("raw_dir", "");
  std::ostringstream md;
  md << "# Augmentation report\n\n";
  md << "Source: `" << o.eval << "`\n\n";
  md << "| frame | PSNR to target (dB) |";
  if (!raw.empty()) md << " raw PSNR to target (dB) | pre/post PSNR (dB) |";
  md << " strip |\n|---|---|" << (raw.empty() ? "" : "---|---|") << "---|\n";
  for (const auto& f : ev.at("frames")) {
    const std::string id = f.at("id");
    // Strip: [raw |] augmented | target.
    std::vector<Tensor> parts;
    if (!raw.empty()) parts.push_back(io::read_twrt(fs::path(raw) / (id + ".twrt")));
    parts.push_back(io::read_twrt(fs::path(pred) / (id + ".twrt")));
    parts.push_back(io::read_twrt(fs::path(target) / (id + ".twrt")));
    const std::size_t h = parts[0].dim(1), w = parts[0].dim(2);
    Tensor strip({3, h, w * parts.size()});
    for (std::size_t p = 0; p < parts.size(); ++p) {
      require_same_shape(parts[p], parts[0], "report strip");
      for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) strip.at(ch, y, p * w + x) = std::clamp(parts[p].at(ch, y, x), 0.0, 1.0);
    }
    const fs::path png = out / "png" / (id + ".png");
    io::write_png(strip, png);
    m.outputs.push_back(png.string());
    md << "| " << id << " | " << fmt_db(f.at("psnr_to_target_db")) << " |";
    if (!raw.empty()) md << " " << fmt_db(f.at("raw_psnr_to_target_db")) << " | " << fmt_db(f.at("pre_post_psnr_db")) << " |";
    md << " ![](png/" << id << ".png) |\n";
  }
  md << "\nMedian PSNR to target: " << fmt_db(ev.at("psnr_to_target_db").at("median")) << " dB\n";
  if (ev.contains("raw_psnr_to_target_db"))
    md << "\nMedian raw PSNR to target: " << fmt_db(ev.at("raw_psnr_to_target_db").at("median")) << " dB\n";
  if (ev.contains("classifier")) {
    const json& cl = ev.at("classifier");
    md << "\n## Classifier\n\n| metric | raw | augmented |\n|---|---|---|\n";
    md << "| k-NN accuracy (k=" << cl.at("knn_k").get<int>() << ") | " << cl.at("knn_accuracy_raw").get<double>() << " | "
       << cl.at("knn_accuracy_augmented").get<double>() << " |\n";
    md << "| probe convergence epochs | " << cl.at("probe_convergence_epochs_raw").get<int>() << " | "
       << cl.at("probe_convergence_epochs_augmented").get<int>() << " |\n";
  }
  std::ofstream os(out / "report.md");
  os << md.str();
  if (!os) throw IoError("failed writing report.md");
  m.outputs.push_back((out / "report.md").string());
  m.write(out / "manifest.json");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Through-the-wall radar multilink augmentation pipeline"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: TWRMCAE_THREADS or all cores)");

  CommonOpts common;
  SimulateOpts sim_o;
  auto* simulate = app.add_subcommand("simulate", "Synthesise one echo frame");
  add_common(simulate, common);
  simulate->add_option("--state", sim_o.state, "Motion state");
  simulate->add_option("--index", sim_o.index, "Frame index within the state");
  simulate->add_option("--wall-amplitude", sim_o.wall_amplitude);
  simulate->add_option("--snr-db", sim_o.snr_db);
  simulate->add_flag("--no-noise", sim_o.no_noise);
  simulate->add_option("--clean", sim_o.clean, "Also write the clean target echo");
  simulate->add_option("--scene", sim_o.scene, "Also write the scene as JSON");

  DatasetOpts ds_o;
  auto* dataset = app.add_subcommand("dataset", "Generate a labelled frame/image dataset");
  add_common(dataset, common);
  dataset->add_option("--states", ds_o.states, "Comma-separated states (default: all seven)");
  dataset->add_option("--frames", ds_o.frames, "Frames per state");
  dataset->add_option("--val-fraction", ds_o.val_fraction);
  dataset->add_option("--wall-amplitude", ds_o.wall_amplitude);
  dataset->add_option("--snr-db", ds_o.snr_db);

  PreprocessOpts pre_o;
  auto* preprocess = app.add_subcommand("preprocess", "Echo frame to RTM / DTM images");
  add_common(preprocess, common, false);
  preprocess->add_option("--in", pre_o.in)->required();
  preprocess->add_option("--rtm", pre_o.rtm);
  preprocess->add_option("--dtm", pre_o.dtm);
  preprocess->add_option("--phi", pre_o.phi, "Gated MTI matrix (input of separate)");
  preprocess->add_option("--png-dir", pre_o.png_dir);

  SeparateOpts sep_o;
  auto* separate = app.add_subcommand("separate", "SVD subspace separation of a complex matrix");
  add_common(separate, common, false);
  separate->add_option("--in", sep_o.in)->required();
  separate->add_option("--alpha", sep_o.alpha);
  separate->add_option("--n-obs", sep_o.n_obs, "Observation count for AIC (default: rows)");
  separate->add_option("--out-prefix", sep_o.prefix)->required();

  TrainOpts tr_o;
  auto* train = app.add_subcommand("train", "Train the augmentation network");
  add_common(train, common);
  train->add_option("--data", tr_o.data)->required();
  train->add_option("--kind", tr_o.kind, "rtm or dtm");
  train->add_option("--epochs", tr_o.epochs, "Override the configured epoch count");
  train->add_option("--loss-json", tr_o.loss_json);

  AugmentOpts aug_o;
  auto* augment = app.add_subcommand("augment", "Run a trained model");
  add_common(augment, common);
  augment->add_option("--model", aug_o.model)->required();
  augment->add_option("--frame", aug_o.frame, "Echo frame (TWRT)");
  augment->add_option("--data", aug_o.data, "Dataset directory; --out is then a directory");
  augment->add_option("--kind", aug_o.kind);
  augment->add_option("--alpha", aug_o.alpha);
  augment->add_option("--scene", aug_o.scene, "Scene JSON supplying the separation multiplier");
  augment->add_option("--png", aug_o.png);

  EvaluateOpts ev_o;
  auto* evaluate = app.add_subcommand("evaluate", "PSNR and classifier metrics");
  add_common(evaluate, common, false);
  evaluate->add_option("--pred", ev_o.pred)->required();
  evaluate->add_option("--target", ev_o.target)->required();
  evaluate->add_option("--raw", ev_o.raw);
  evaluate->add_option("--labels", ev_o.labels);
  evaluate->add_option("--report", ev_o.report)->required();
  evaluate->add_option("--k", ev_o.k);

  GradcheckOpts gc_o;
  auto* gradcheck = app.add_subcommand("gradcheck", "Whole-model finite-difference check");
  add_common(gradcheck, common, false);
  gradcheck->add_option("--profile", gc_o.profile);
  gradcheck->add_option("--layers", gc_o.layers);
  gradcheck->add_option("--size", gc_o.size);
  gradcheck->add_option("--samples", gc_o.samples, "Coordinates per parameter group");
  gradcheck->add_option("--eps", gc_o.eps);
  gradcheck->add_option("--tol", gc_o.tol);

  ReportOpts rep_o;
  auto* report = app.add_subcommand("report", "Markdown + PNG summary of an evaluation");
  add_common(report, common);
  report->add_option("--eval", rep_o.eval)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (threads > 0) set_worker_count(threads);
    if (*simulate) cmd_simulate(common, sim_o);
    if (*dataset) cmd_dataset(common, ds_o);
    if (*preprocess) cmd_preprocess(common, pre_o);
    if (*separate) cmd_separate(common, sep_o);
    if (*train) cmd_train(common, tr_o);
    if (*augment) cmd_augment(common, aug_o);
    if (*evaluate) cmd_evaluate(common, ev_o);
    if (*gradcheck) cmd_gradcheck(common, gc_o);
    if (*report) cmd_report(common, rep_o);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::fprintf(stderr, "error: %s\n", msg.c_str());
    return 1;
  }
  return 0;
}
