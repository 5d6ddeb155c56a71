#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "twrmcae/adaptweight.hpp"
#include "twrmcae/attention.hpp"
#include "twrmcae/lista.hpp"
#include "twrmcae/pipeline.hpp"
#include "twrmcae/rng.hpp"
#include "twrmcae/tensor.hpp"

namespace twrmcae::trainer {

inline constexpr std::size_t kLinks = 3;  // target, wall, noise

struct ModelConfig {
  std::size_t channels = 3;
  std::size_t image_size = 64;
  std::size_t lista_layers = lista::kDefaultLayers;
  std::size_t patch = 8;
  lista::ListaOptions lista_options{};
  std::string cnn_profile = "desk64";
  std::size_t attention_reduction = 3;
  bool bypass_attention = false;
  bool use_inject = true;
  std::optional<std::array<double, kLinks>> forced_weights;  // replaces the learned z_a
  bool detach_weights_in_loss = false;

  void validate() const;
};
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// One subspace link: attention -> LISTA chain plus its weight CNN.
struct LinkParams {
  attention::CoordAttnParams attn;
  lista::ListaStackParams lista;
  adaptweight::WeightCnnParams cnn;
};

struct ModelParams {
  ModelConfig config;
  std::array<LinkParams, kLinks> links;

  /// Every trainable tensor as f("link<i>.<module>.<name>", tensor), in the
  /// fixed order used by the optimizer and the model file.
  template <class F>
  void visit(F&& f) {
    for (std::size_t i = 0; i < kLinks; ++i) {
      const std::string pre = "link" + std::to_string(i) + ".";
      links[i].attn.visit([&](const char* n, Tensor& t) { f(pre + "attn." + n, t); });
      for (std::size_t l = 0; l < links[i].lista.layers.size(); ++l) {
        const std::string lp = pre + "lista" + std::to_string(l) + ".";
        links[i].lista.layers[l].visit([&](const char* n, Tensor& t) { f(lp + n, t); });
      }
      links[i].cnn.visit([&](const char* n, Tensor& t) { f(pre + "cnn." + n, t); });
    }
  }
  template <class F>
  void visit(F&& f) const {
    const_cast<ModelParams*>(this)->visit(
        [&](const std::string& n, Tensor& t) { f(n, static_cast<const Tensor&>(t)); });
  }
  /// Trainables followed by the attention running statistics.
  template <class F>
  void visit_all(F&& f) {
    visit(f);
    for (std::size_t i = 0; i < kLinks; ++i) {
      const std::string pre = "link" + std::to_string(i) + ".attn.";
      f(pre + "running_mean", links[i].attn.running_mean);
      f(pre + "running_var", links[i].attn.running_var);
    }
  }
  template <class F>
  void visit_all(F&& f) const {
    const_cast<ModelParams*>(this)->visit_all(
        [&](const std::string& n, Tensor& t) { f(n, static_cast<const Tensor&>(t)); });
  }
};

/// Trainable initialisation: near-identity LISTA, open attention gates,
/// random weight CNNs.
ModelParams init_model(const ModelConfig& cfg, Rng& rng);
/// Inject projection bias of identity_model: sigmoid rounds to exactly 1.
inline constexpr double kIdentityInjectBias = 40.0;
/// Exact identity LISTA stacks, all-zero attention/CNN parameters and an
/// all-ones inject map.
ModelParams identity_model(const ModelConfig& cfg);
/// Same structure, every trainable tensor zero.
ModelParams zeros_like(const ModelParams& p);
/// p += scale * q over trainable tensors.
void axpy(ModelParams& p, double scale, const ModelParams& q);
double max_abs(const ModelParams& p);

/// W_d-derived matrices of every LISTA layer, reusable while parameters are fixed.
using Prepared = std::array<std::vector<lista::Derived>, kLinks>;
Prepared prepare(const ModelParams& p);

/// Forward state of one link applied to one image.
struct BranchState {
  Tensor input;
  attention::Cache attn_cache;
  Tensor attn_out;
  adaptweight::CnnCache cnn_cache;
  adaptweight::CnnOutput cnn_out;
  adaptweight::InjectCache inject_cache;
  Tensor inject;
  lista::StackResult stack;
};

struct ForwardResult {
  Tensor z_o;
  std::array<BranchState, kLinks> branches;
  std::array<double, kLinks> q{};
  adaptweight::LinkWeights weights;
};

/// Runs the three links on the subspace images x and fuses the last LISTA
/// outputs with the simplex weights. `prepared` may be null.
ForwardResult mcae_forward(const std::array<Tensor, kLinks>& x, const ModelParams& p,
                           attention::Mode mode, const Prepared* prepared = nullptr);

/// (1 / CHW) * ||a - b||^2.
double perceptual_loss(const Tensor& pred, const Tensor& target);
/// Sum over links and layers of z_a * perceptual_loss.
double total_loss(const std::array<std::vector<Tensor>, kLinks>& pred,
                  const std::array<std::vector<Tensor>, kLinks>& target,
                  const adaptweight::LinkWeights& w);

/// Inputs of one loss evaluation.
struct TrainPair {
  std::array<Tensor, kLinks> noisy;  // subspace images of the received frame
  std::array<Tensor, kLinks> clean;  // subspace images of the clean target
};
TrainPair make_pair(const pipeline::Sample& s);

struct LossEval {
  double loss = 0.0;
  std::array<double, kLinks> link_loss{};
  adaptweight::LinkWeights weights;
  std::uint64_t kink_signature = 0;  // hash of every piecewise-linear branch taken
  ForwardResult pred;                // noisy branch, kept for the running statistics
};

/// Loss of one pair in train mode (per-call attention statistics).
LossEval evaluate_loss(const TrainPair& pair, const ModelParams& p, const Prepared* prepared = nullptr);
/// Same, and accumulates dLoss/dparams into `grads`.
LossEval loss_and_grad(const TrainPair& pair, const ModelParams& p, ModelParams& grads,
                       const Prepared* prepared = nullptr);

/// v <- mu v - lr g; p <- p + v. `grads` must be taken at p + mu v.
void sgd_nesterov_step(ModelParams& params, ModelParams& velocity, const ModelParams& grads, double lr,
                       double mu);

struct TrainConfig {
  std::size_t batch_size = 32;
  double lr = 0.005;
  double momentum = 0.9;
  std::size_t epochs = 50;
  std::size_t shuffle_every_epochs = 1;
  std::uint64_t seed = 0;
  std::size_t validate_every_batches = 6;

  void validate() const;
};
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct TrainResult {
  ModelParams params;
  std::vector<double> batch_loss;
  std::vector<double> epoch_loss;       // mean batch loss per epoch
  std::vector<double> validation_loss;  // every validate_every_batches batches
};

using ProgressFn = std::function<void(std::size_t epoch, double epoch_loss)>;

/// Deterministic Nesterov training. Per-sample gradients run in parallel and
/// are summed in sample order; running statistics update serially after
/// every batch.
TrainResult train(const std::vector<TrainPair>& data, const std::vector<TrainPair>& validation,
                  ModelParams init, const TrainConfig& cfg, const ProgressFn& progress = {});

/// Mean of evaluate_loss over a set.
double mean_loss(const std::vector<TrainPair>& data, const ModelParams& p);

struct GradCheckOptions {
  double eps = 1e-5;
  std::size_t samples_per_group = 3;
  std::uint64_t seed = 0;
  double floor = 1e-6;  // denominator floor of the relative error
};

struct GroupReport {
  std::string name;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose +-eps probes crossed a kink
  double worst_rel = 0.0;
  double analytic = 0.0;  // values at the worst coordinate
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GroupReport> groups;
  double worst_rel = 0.0;
  std::string worst_group;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  nlohmann::json to_json() const;
};

/// Central differences of the full loss against loss_and_grad on a few
/// sampled coordinates of every parameter group.
GradCheckReport grad_check_model(const ModelParams& p, const TrainPair& pair,
                                 const GradCheckOptions& opts = {});

/// Serialised model: magic, JSON header, then TWRT blocks in visit_all order.
struct ModelFile {
  pipeline::MapKind map_kind = pipeline::MapKind::rtm;
  std::uint64_t seed = 0;
  std::string created;
  ModelParams params;
};
void write_model(std::ostream& os, const ModelFile& m);
void write_model(const std::string& path, const ModelFile& m);
ModelFile read_model(std::istream& is);
ModelFile read_model(const std::string& path);

/// Eval-mode forward clipped to [0, 1]. Throws if the model was trained for
/// another map kind.
Tensor augment(const std::array<Tensor, kLinks>& subspaces, const ModelFile& model,
               pipeline::MapKind kind);
Tensor augment(const std::array<Tensor, kLinks>& subspaces, const ModelParams& p);

}  // namespace twrmcae::trainer
