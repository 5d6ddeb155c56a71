#include "twrmcae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "twrmcae/error.hpp"
#include "twrmcae/image.hpp"
#include "twrmcae/io.hpp"
#include "twrmcae/parallel.hpp"

namespace twrmcae::trainer {

using attention::Mode;

// ---------------------------------------------------------------- config

void ModelConfig::validate() const {
  if (channels == 0 || image_size == 0 || lista_layers == 0 || patch == 0)
    throw ValueError("model config extents must be positive");
  if (image_size % patch != 0) throw ValueError("image_size must be a multiple of patch");
  if (attention_reduction == 0 || channels / attention_reduction == 0)
    throw ValueError("attention_reduction must leave at least one channel");
  adaptweight::profile_by_name(cnn_profile);
  if (forced_weights) {
    double s = 0.0;
    for (double w : *forced_weights) {
      if (!(w >= 0.0)) throw ValueError("forced weights must be >= 0");
      s += w;
    }
    if (std::abs(s - 1.0) > 1e-12) throw ValueError("forced weights must sum to 1");
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"channels", c.channels},
       {"image_size", c.image_size},
       {"lista_layers", c.lista_layers},
       {"patch", c.patch},
       {"threshold", c.lista_options.threshold == lista::Threshold::standard ? "standard" : "paper_literal"},
       {"encoder", c.lista_options.encoder == lista::Encoder::pseudo_inverse ? "pseudo_inverse" : "transpose"},
       {"untied_s", c.lista_options.untied_s},
       {"cnn_profile", c.cnn_profile},
       {"attention_reduction", c.attention_reduction},
       {"bypass_attention", c.bypass_attention},
       {"use_inject", c.use_inject},
       {"detach_weights_in_loss", c.detach_weights_in_loss}};
  j["forced_weights"] = c.forced_weights ? nlohmann::json(*c.forced_weights) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.channels = j.value("channels", d.channels);
  c.image_size = j.value("image_size", d.image_size);
  c.lista_layers = j.value("lista_layers", d.lista_layers);
  c.patch = j.value("patch", d.patch);
  const std::string th = j.value("threshold", std::string("standard"));
  if (th != "standard" && th != "paper_literal") throw ValueError("unknown threshold: " + th);
  c.lista_options.threshold = th == "standard" ? lista::Threshold::standard : lista::Threshold::paper_literal;
  const std::string enc = j.value("encoder", std::string("pseudo_inverse"));
  if (enc != "pseudo_inverse" && enc != "transpose") throw ValueError("unknown encoder: " + enc);
  c.lista_options.encoder = enc == "pseudo_inverse" ? lista::Encoder::pseudo_inverse : lista::Encoder::transpose;
  c.lista_options.untied_s = j.value("untied_s", false);
  c.cnn_profile = j.value("cnn_profile", d.cnn_profile);
  c.attention_reduction = j.value("attention_reduction", d.attention_reduction);
  c.bypass_attention = j.value("bypass_attention", false);
  c.use_inject = j.value("use_inject", true);
  c.detach_weights_in_loss = j.value("detach_weights_in_loss", false);
  c.forced_weights.reset();
  if (j.contains("forced_weights") && !j["forced_weights"].is_null())
    c.forced_weights = j["forced_weights"].get<std::array<double, kLinks>>();
  c.validate();
}

void TrainConfig::validate() const {
  if (batch_size == 0 || epochs == 0 || shuffle_every_epochs == 0 || validate_every_batches == 0)
    throw ValueError("train config counts must be positive");
  if (!(lr > 0)) throw ValueError("lr must be > 0");
  if (!(momentum >= 0 && momentum < 1)) throw ValueError("momentum must lie in [0, 1)");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size}, {"lr", c.lr},       {"momentum", c.momentum},
       {"epochs", c.epochs},         {"seed", c.seed},   {"shuffle_every_epochs", c.shuffle_every_epochs},
       {"validate_every_batches", c.validate_every_batches}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.batch_size = j.value("batch_size", d.batch_size);
  c.lr = j.value("lr", d.lr);
  c.momentum = j.value("momentum", d.momentum);
  c.epochs = j.value("epochs", d.epochs);
  c.seed = j.value("seed", d.seed);
  c.shuffle_every_epochs = j.value("shuffle_every_epochs", d.shuffle_every_epochs);
  c.validate_every_batches = j.value("validate_every_batches", d.validate_every_batches);
  c.validate();
}

// ---------------------------------------------------------------- params

ModelParams init_model(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams p;
  p.config = cfg;
  const auto profile = adaptweight::profile_by_name(cfg.cnn_profile);
  for (std::size_t i = 0; i < kLinks; ++i) {
    Rng r = rng.substream(i);
    p.links[i].attn = attention::init_params(cfg.channels, cfg.attention_reduction, r);
    p.links[i].lista = lista::init_stack(cfg.lista_layers, cfg.channels, cfg.patch, cfg.patch, r, cfg.lista_options);
    p.links[i].cnn = adaptweight::init_params(profile, cfg.channels, r);
  }
  return p;
}

ModelParams identity_model(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams p;
  p.config = cfg;
  const auto profile = adaptweight::profile_by_name(cfg.cnn_profile);
  for (auto& l : p.links) {
    l.attn = attention::zero_params(cfg.channels, cfg.attention_reduction);
    l.lista = lista::identity_stack(cfg.lista_layers, cfg.channels, cfg.patch, cfg.patch, cfg.lista_options);
    l.cnn = adaptweight::zero_params(profile, cfg.channels);
    l.cnn.inject_b.fill(kIdentityInjectBias);
  }
  return p;
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  z.visit([](const std::string&, Tensor& t) { t.fill(0.0); });
  return z;
}

void axpy(ModelParams& p, double scale, const ModelParams& q) {
  std::vector<const Tensor*> src;
  q.visit([&](const std::string&, const Tensor& t) { src.push_back(&t); });
  std::size_t k = 0;
  p.visit([&](const std::string&, Tensor& t) { t.axpy(scale, *src.at(k++)); });
}

double max_abs(const ModelParams& p) {
  double m = 0.0;
  p.visit([&](const std::string&, const Tensor& t) { m = std::max(m, t.max_abs()); });
  return m;
}

Prepared prepare(const ModelParams& p) {
  Prepared out;
  for (std::size_t i = 0; i < kLinks; ++i) out[i] = lista::derive_all(p.links[i].lista);
  return out;
}

// ---------------------------------------------------------------- forward

namespace {

void branch_forward(const Tensor& x, const LinkParams& link, const ModelConfig& cfg, Mode mode,
                    const std::vector<lista::Derived>& d, BranchState& st) {
  st.input = x;
  st.attn_out = cfg.bypass_attention ? x : attention::forward(x, link.attn, mode, &st.attn_cache);
  const std::size_t s = link.cnn.profile.input_size;
  st.cnn_out = adaptweight::forward(image::resize_bilinear(x, s, s), link.cnn, &st.cnn_cache);
  if (cfg.use_inject)
    st.inject = adaptweight::build_inject_map(st.cnn_out.conv5_map, link.cnn, x.dim(1), x.dim(2),
                                              &st.inject_cache);
  st.stack = lista::stack_forward(st.attn_out, link.lista, d, cfg.use_inject ? &st.inject : nullptr, true);
}

void branch_backward(const LinkParams& link, const ModelConfig& cfg, const std::vector<lista::Derived>& d,
                     const BranchState& st, const std::vector<Tensor>& tap_grads, double grad_q,
                     LinkParams& g) {
  const lista::StackGrads sg =
      lista::stack_backward(link.lista, d, cfg.use_inject ? &st.inject : nullptr, st.stack, tap_grads, g.lista);
  Tensor g_conv5;
  if (cfg.use_inject) g_conv5 = adaptweight::inject_backward(link.cnn, st.inject_cache, sg.inject, g.cnn);
  if (grad_q != 0.0 || cfg.use_inject)
    adaptweight::backward(link.cnn, st.cnn_cache, grad_q, cfg.use_inject ? &g_conv5 : nullptr, g.cnn);
  if (!cfg.bypass_attention) attention::backward(st.input, link.attn, st.attn_cache, sg.input, g.attn);
}

void check_inputs(const std::array<Tensor, kLinks>& x, const ModelConfig& cfg) {
  for (const Tensor& t : x) {
    if (t.rank() != 3 || t.dim(0) != cfg.channels || t.dim(1) != x[0].dim(1) || t.dim(2) != x[0].dim(2))
      throw ShapeError("link images must share one C x H x W shape with C = " + std::to_string(cfg.channels));
  }
}

std::uint64_t fold(std::uint64_t h, std::uint64_t v) { return Rng::mix(h ^ (v + 0x9E3779B97F4A7C15ULL)); }

std::uint64_t branch_signature(std::uint64_t h, const BranchState& st, const LinkParams& link) {
  for (std::size_t l = 0; l < 5; ++l) {
    for (double v : st.cnn_cache.conv_pre[l].raw()) h = fold(h, v > 0);
    for (std::size_t a : st.cnn_cache.pool_argmax[l]) h = fold(h, a);
  }
  for (std::size_t l = 0; l < 2; ++l)
    for (double v : st.cnn_cache.fc_pre[l].raw()) h = fold(h, v > 0);
  for (std::size_t l = 0; l < st.stack.caches.size(); ++l) {
    const double th = link.lista.layers[l].theta[0];
    const RMatrix& pre = st.stack.caches[l].pre;
    for (Eigen::Index i = 0; i < pre.size(); ++i) {
      const double v = pre.data()[i];
      h = fold(h, (v > th ? 1u : 0u) | (v < -th ? 2u : 0u) | (v > 0 ? 4u : 0u));
    }
  }
  return h;
}

}  // namespace

ForwardResult mcae_forward(const std::array<Tensor, kLinks>& x, const ModelParams& p, Mode mode,
                           const Prepared* prepared) {
  check_inputs(x, p.config);
  Prepared local;
  if (!prepared) {
    local = prepare(p);
    prepared = &local;
  }
  ForwardResult r;
  for (std::size_t i = 0; i < kLinks; ++i) {
    branch_forward(x[i], p.links[i], p.config, mode, (*prepared)[i], r.branches[i]);
    r.q[i] = r.branches[i].cnn_out.q;
  }
  if (p.config.forced_weights)
    r.weights.z = *p.config.forced_weights;
  else
    r.weights = adaptweight::normalize_weights(r.q);
  r.z_o = Tensor(x[0].shape());
  for (std::size_t i = 0; i < kLinks; ++i) r.z_o.axpy(r.weights.z[i], r.branches[i].stack.z);
  return r;
}

// ---------------------------------------------------------------- loss

double perceptual_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "perceptual loss");
  if (pred.numel() == 0) throw ShapeError("perceptual loss of empty taps");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double d = pred[i] - target[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.numel());
}

double total_loss(const std::array<std::vector<Tensor>, kLinks>& pred,
                  const std::array<std::vector<Tensor>, kLinks>& target, const adaptweight::LinkWeights& w) {
  double total = 0.0;
  for (std::size_t i = 0; i < kLinks; ++i) {
    if (pred[i].size() != target[i].size()) throw ShapeError("tap count mismatch");
    double link = 0.0;
    for (std::size_t j = 0; j < pred[i].size(); ++j) link += perceptual_loss(pred[i][j], target[i][j]);
    total += w.z[i] * link;
  }
  return total;
}

TrainPair make_pair(const pipeline::Sample& s) { return {s.noisy_sub, s.clean_sub}; }

namespace {

LossEval run(const TrainPair& pair, const ModelParams& p, const Prepared* prepared, ModelParams* grads) {
  check_inputs(pair.noisy, p.config);
  check_inputs(pair.clean, p.config);
  Prepared local;
  if (!prepared) {
    local = prepare(p);
    prepared = &local;
  }
  const ModelConfig& cfg = p.config;
  LossEval out;
  out.pred = mcae_forward(pair.noisy, p, Mode::train, prepared);
  std::array<BranchState, kLinks> tgt;
  for (std::size_t i = 0; i < kLinks; ++i)
    branch_forward(pair.clean[i], p.links[i], cfg, Mode::train, (*prepared)[i], tgt[i]);
  out.weights = out.pred.weights;

  std::uint64_t sig = 0;
  for (std::size_t i = 0; i < kLinks; ++i) {
    const auto& pt = out.pred.branches[i].stack.taps;
    const auto& tt = tgt[i].stack.taps;
    double l = 0.0;
    for (std::size_t j = 0; j < pt.size(); ++j) l += perceptual_loss(pt[j], tt[j]);
    out.link_loss[i] = l;
    out.loss += out.weights.z[i] * l;
    sig = branch_signature(sig, out.pred.branches[i], p.links[i]);
    sig = branch_signature(sig, tgt[i], p.links[i]);
  }
  out.kink_signature = sig;
  if (!grads) return out;

  std::array<double, kLinks> dq{};
  if (!cfg.forced_weights && !cfg.detach_weights_in_loss)
    dq = adaptweight::normalize_weights_backward(out.pred.q, out.link_loss);
  for (std::size_t i = 0; i < kLinks; ++i) {
    const auto& pt = out.pred.branches[i].stack.taps;
    const auto& tt = tgt[i].stack.taps;
    std::vector<Tensor> gp(pt.size()), gt(pt.size());
    for (std::size_t j = 0; j < pt.size(); ++j) {
      const double scale = 2.0 * out.weights.z[i] / static_cast<double>(pt[j].numel());
      gp[j] = pt[j] - tt[j];
      gp[j] *= scale;
      gt[j] = gp[j];
      gt[j] *= -1.0;
    }
    branch_backward(p.links[i], cfg, (*prepared)[i], out.pred.branches[i], gp, dq[i], grads->links[i]);
    branch_backward(p.links[i], cfg, (*prepared)[i], tgt[i], gt, 0.0, grads->links[i]);
  }
  return out;
}

}  // namespace

LossEval evaluate_loss(const TrainPair& pair, const ModelParams& p, const Prepared* prepared) {
  return run(pair, p, prepared, nullptr);
}

LossEval loss_and_grad(const TrainPair& pair, const ModelParams& p, ModelParams& grads,
                       const Prepared* prepared) {
  return run(pair, p, prepared, &grads);
}

// ---------------------------------------------------------------- optimiser

void sgd_nesterov_step(ModelParams& params, ModelParams& velocity, const ModelParams& grads, double lr,
                       double mu) {
  std::vector<Tensor*> v;
  std::vector<const Tensor*> g;
  velocity.visit([&](const std::string&, Tensor& t) { v.push_back(&t); });
  grads.visit([&](const std::string&, const Tensor& t) { g.push_back(&t); });
  if (v.size() != g.size()) throw ShapeError("velocity / gradient layout mismatch");
  std::size_t k = 0;
  params.visit([&](const std::string&, Tensor& t) {
    Tensor& vk = *v.at(k);
    vk *= mu;
    vk.axpy(-lr, *g[k]);
    t += vk;
    ++k;
  });
}

double mean_loss(const std::vector<TrainPair>& data, const ModelParams& p) {
  if (data.empty()) throw ValueError("empty dataset");
  const Prepared prep = prepare(p);
  std::vector<double> losses(data.size());
  parallel_for(data.size(), [&](std::size_t i) { losses[i] = evaluate_loss(data[i], p, &prep).loss; });
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(data.size());
}

TrainResult train(const std::vector<TrainPair>& data, const std::vector<TrainPair>& validation,
                  ModelParams init, const TrainConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  if (data.empty()) throw ValueError("empty dataset");
  TrainResult res;
  res.params = std::move(init);
  ModelParams& params = res.params;
  ModelParams velocity = zeros_like(params);
  Rng shuffle_rng(cfg.seed, 0x7368756666ULL);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t batches_done = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch % cfg.shuffle_every_epochs == 0) {
      for (std::size_t i = order.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
        std::swap(order[i - 1], order[j]);
      }
    }
    double epoch_sum = 0.0;
    std::size_t epoch_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      ModelParams look = params;
      axpy(look, cfg.momentum, velocity);
      const Prepared prep = prepare(look);
      ModelParams grad = zeros_like(params);
      double batch_sum = 0.0;
      std::vector<std::array<attention::Cache, kLinks>> stats;
      stats.reserve(end - start);

      const std::size_t chunk = std::max<std::size_t>(1, worker_count());
      for (std::size_t c0 = start; c0 < end; c0 += chunk) {
        const std::size_t c1 = std::min(end, c0 + chunk);
        std::vector<ModelParams> slot(c1 - c0);
        std::vector<LossEval> evals(c1 - c0);
        parallel_for(c1 - c0, [&](std::size_t k) {
          slot[k] = zeros_like(look);
          evals[k] = loss_and_grad(data[order[c0 + k]], look, slot[k], &prep);
        });
        for (std::size_t k = 0; k < slot.size(); ++k) {
          axpy(grad, 1.0, slot[k]);
          batch_sum += evals[k].loss;
          std::array<attention::Cache, kLinks> s;
          for (std::size_t i = 0; i < kLinks; ++i) s[i] = std::move(evals[k].pred.branches[i].attn_cache);
          stats.push_back(std::move(s));
        }
      }
      const double n = static_cast<double>(end - start);
      grad.visit([&](const std::string&, Tensor& t) { t *= 1.0 / n; });
      sgd_nesterov_step(params, velocity, grad, cfg.lr, cfg.momentum);
      if (!params.config.bypass_attention) {
        for (const auto& s : stats)
          for (std::size_t i = 0; i < kLinks; ++i) attention::update_running_stats(params.links[i].attn, s[i]);
      }
      const double batch_loss = batch_sum / n;
      res.batch_loss.push_back(batch_loss);
      epoch_sum += batch_loss;
      ++epoch_batches;
      ++batches_done;
      if (!validation.empty() && batches_done % cfg.validate_every_batches == 0)
        res.validation_loss.push_back(mean_loss(validation, params));
    }
    res.epoch_loss.push_back(epoch_sum / static_cast<double>(epoch_batches));
    if (progress) progress(epoch, res.epoch_loss.back());
  }
  return res;
}

// ---------------------------------------------------------------- grad check

nlohmann::json GradCheckReport::to_json() const {
  nlohmann::json g = nlohmann::json::array();
  for (const auto& r : groups) {
    g.push_back({{"name", r.name},
                 {"checked", r.checked},
                 {"skipped", r.skipped},
                 {"worst_rel", r.worst_rel},
                 {"analytic", r.analytic},
                 {"numeric", r.numeric}});
  }
  return {{"worst_rel", worst_rel}, {"worst_group", worst_group}, {"checked", checked},
          {"skipped", skipped},     {"groups", g}};
}

GradCheckReport grad_check_model(const ModelParams& p, const TrainPair& pair, const GradCheckOptions& opts) {
  const Prepared base = prepare(p);
  ModelParams grads = zeros_like(p);
  loss_and_grad(pair, p, grads, &base);
  std::vector<const Tensor*> analytic;
  grads.visit([&](const std::string&, const Tensor& t) { analytic.push_back(&t); });

  std::vector<std::pair<std::string, std::size_t>> groups;
  p.visit([&](const std::string& name, const Tensor& t) { groups.emplace_back(name, t.numel()); });

  // Coordinates to probe, drawn per group so the plan does not depend on
  // evaluation order.
  struct Probe {
    std::size_t group, index;
  };
  std::vector<Probe> probes;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const std::size_t n = groups[g].second;
    if (n == 0) continue;
    Rng r(opts.seed, g);
    std::vector<std::size_t> picked;
    const std::size_t want = std::min(opts.samples_per_group, n);
    while (picked.size() < want) {
      const auto idx = static_cast<std::size_t>(r.uniform_int(0, static_cast<std::int64_t>(n - 1)));
      if (std::find(picked.begin(), picked.end(), idx) == picked.end()) picked.push_back(idx);
    }
    std::sort(picked.begin(), picked.end());
    for (std::size_t idx : picked) probes.push_back({g, idx});
  }

  struct Result {
    double numeric = 0.0;
    bool kink = false;
  };
  std::vector<Result> results(probes.size());
  parallel_for(probes.size(), [&](std::size_t k) {
    ModelParams q = p;
    Tensor* target = nullptr;
    std::size_t g = 0;
    q.visit([&](const std::string&, Tensor& t) {
      if (g++ == probes[k].group) target = &t;
    });
    // Only W_d and S feed the derived LISTA matrices.
    const std::string& name = groups[probes[k].group].first;
    const bool rederive = name.ends_with(".w_d") || name.ends_with(".s_free");
    const double orig = (*target)[probes[k].index];
    (*target)[probes[k].index] = orig + opts.eps;
    const LossEval plus = evaluate_loss(pair, q, rederive ? nullptr : &base);
    (*target)[probes[k].index] = orig - opts.eps;
    const LossEval minus = evaluate_loss(pair, q, rederive ? nullptr : &base);
    results[k].numeric = (plus.loss - minus.loss) / (2.0 * opts.eps);
    results[k].kink = plus.kink_signature != minus.kink_signature;
  });

  GradCheckReport rep;
  rep.groups.resize(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) rep.groups[g].name = groups[g].first;
  for (std::size_t k = 0; k < probes.size(); ++k) {
    GroupReport& gr = rep.groups[probes[k].group];
    if (results[k].kink) {
      ++gr.skipped;
      ++rep.skipped;
      continue;
    }
    const double a = (*analytic[probes[k].group])[probes[k].index];
    const double n = results[k].numeric;
    const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), opts.floor});
    ++gr.checked;
    ++rep.checked;
    if (rel >= gr.worst_rel) {
      gr.worst_rel = rel;
      gr.analytic = a;
      gr.numeric = n;
    }
    if (rel > rep.worst_rel) {
      rep.worst_rel = rel;
      rep.worst_group = gr.name;
    }
  }
  return rep;
}

// ---------------------------------------------------------------- model file

namespace {

constexpr char kMagic[8] = {'T', 'W', 'R', 'M', 'C', 'A', 'E', '1'};
constexpr int kModelVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                     static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  os.write(b, 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated model file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_model(std::ostream& os, const ModelFile& m) {
  nlohmann::json blocks = nlohmann::json::array();
  m.params.visit_all([&](const std::string& n, const Tensor&) { blocks.push_back(n); });
  const nlohmann::json header = {{"version", kModelVersion},
                                 {"map_kind", pipeline::kind_name(m.map_kind)},
                                 {"cnn_profile", m.params.config.cnn_profile},
                                 {"created", m.created},
                                 {"seed", m.seed},
                                 {"model", m.params.config},
                                 {"blocks", blocks}};
  const std::string text = header.dump();
  os.write(kMagic, sizeof kMagic);
  put_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  m.params.visit_all([&](const std::string&, const Tensor& t) { io::write_twrt(t, os); });
  if (!os) throw IoError("failed writing model");
}

void write_model(const std::string& path, const ModelFile& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_model(os, m);
  os.flush();
  if (!os) throw IoError("failed writing " + path);
}

ModelFile read_model(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw IoError("not a model file");
  const std::uint32_t len = get_u32(is);
  std::string text(len, '\0');
  if (!is.read(text.data(), len)) throw IoError("truncated model header");
  const nlohmann::json h = nlohmann::json::parse(text);
  if (h.at("version").get<int>() != kModelVersion) throw IoError("unsupported model version");
  ModelFile m;
  m.map_kind = pipeline::parse_kind(h.at("map_kind").get<std::string>());
  m.seed = h.at("seed").get<std::uint64_t>();
  m.created = h.value("created", std::string());
  const ModelConfig cfg = h.at("model").get<ModelConfig>();
  m.params = identity_model(cfg);
  const auto names = h.at("blocks").get<std::vector<std::string>>();
  std::size_t k = 0;
  m.params.visit_all([&](const std::string& n, Tensor& t) {
    if (k >= names.size() || names[k] != n) throw IoError("model block order mismatch at " + n);
    Tensor in = io::read_twrt(is);
    if (in.shape() != t.shape()) throw ShapeError("model block " + n + " has the wrong shape");
    t = std::move(in);
    ++k;
  });
  if (k != names.size()) throw IoError("model file lists extra blocks");
  return m;
}

ModelFile read_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return read_model(is);
}

// ---------------------------------------------------------------- inference

Tensor augment(const std::array<Tensor, kLinks>& subspaces, const ModelParams& p) {
  Tensor z = mcae_forward(subspaces, p, Mode::eval).z_o;
  for (double& v : z.raw()) v = std::clamp(v, 0.0, 1.0);
  return z;
}

Tensor augment(const std::array<Tensor, kLinks>& subspaces, const ModelFile& model, pipeline::MapKind kind) {
  if (model.map_kind != kind) {
    throw ValueError("model was trained for " + std::string(pipeline::kind_name(model.map_kind)) +
                     " maps, got " + std::string(pipeline::kind_name(kind)));
  }
  return augment(subspaces, model.params);
}

}  // namespace twrmcae::trainer
