#include "twrmcae/eval.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "twrmcae/error.hpp"
#include "twrmcae/image.hpp"

namespace twrmcae::eval {

double mse(const Tensor& i, const Tensor& k) {
  require_same_shape(i, k, "mse");
  if (i.numel() == 0) throw ShapeError("mse of empty images");
  double s = 0.0;
  for (std::size_t n = 0; n < i.numel(); ++n) {
    const double d = i[n] - k[n];
    s += d * d;
  }
  return s / static_cast<double>(i.numel());
}

double psnr_from_mse(double m, double max_i) {
  if (!(max_i > 0)) throw ValueError("max_i must be > 0");
  if (m < 0) throw ValueError("mse must be >= 0");
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_i * max_i / m);
}

double psnr(const Tensor& i, const Tensor& k, double max_i) { return psnr_from_mse(mse(i, k), max_i); }

double accuracy(const Confusion& c) {
  const std::size_t total = c.tp + c.fp + c.tn + c.fn;
  if (total == 0) throw ValueError("accuracy of an empty confusion table");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(total);
}

double accuracy(const std::vector<int>& truth, const std::vector<int>& predicted) {
  if (truth.size() != predicted.size()) throw ShapeError("label count mismatch");
  if (truth.empty()) throw ValueError("accuracy of an empty label set");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) ok += truth[i] == predicted[i];
  return static_cast<double>(ok) / static_cast<double>(truth.size());
}

std::map<int, double> per_class_accuracy(const std::vector<int>& truth, const std::vector<int>& predicted) {
  if (truth.size() != predicted.size()) throw ShapeError("label count mismatch");
  std::map<int, std::pair<std::size_t, std::size_t>> counts;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    auto& c = counts[truth[i]];
    c.first += truth[i] == predicted[i];
    ++c.second;
  }
  std::map<int, double> out;
  for (const auto& [label, c] : counts) out[label] = static_cast<double>(c.first) / static_cast<double>(c.second);
  return out;
}

std::vector<double> gray_features(const Tensor& img) {
  if (img.rank() != 3) throw ShapeError("features expect a C x H x W image");
  const Tensor g = image::resize_bilinear(image::channel_mean(img), kFeatureSide, kFeatureSide);
  return {g.raw().begin(), g.raw().end()};
}

std::vector<int> knn_classify(const std::vector<std::vector<double>>& train, const std::vector<int>& labels,
                              const std::vector<std::vector<double>>& test, std::size_t k) {
  if (k == 0) throw ValueError("k must be >= 1");
  if (train.empty()) throw ValueError("empty training set");
  if (train.size() != labels.size()) throw ShapeError("label count mismatch");
  const std::size_t kk = std::min(k, train.size());
  std::vector<int> out;
  out.reserve(test.size());
  for (const auto& t : test) {
    std::vector<std::pair<double, int>> d(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (train[i].size() != t.size()) throw ShapeError("feature length mismatch");
      double s = 0.0;
      for (std::size_t j = 0; j < t.size(); ++j) s += (train[i][j] - t[j]) * (train[i][j] - t[j]);
      d[i] = {std::sqrt(s), labels[i]};
    }
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kk), d.end());
    std::map<int, std::pair<std::size_t, double>> votes;  // label -> (count, summed distance)
    for (std::size_t i = 0; i < kk; ++i) {
      auto& v = votes[d[i].second];
      ++v.first;
      v.second += d[i].first;
    }
    int best = votes.begin()->first;
    for (const auto& [label, v] : votes) {
      const auto& b = votes[best];
      if (v.first > b.first || (v.first == b.first && v.second < b.second)) best = label;
    }
    out.push_back(best);
  }
  return out;
}

std::vector<int> knn_classify(const std::vector<Tensor>& train, const std::vector<int>& labels,
                              const std::vector<Tensor>& test, std::size_t k) {
  std::vector<std::vector<double>> a, b;
  for (const auto& t : train) a.push_back(gray_features(t));
  for (const auto& t : test) b.push_back(gray_features(t));
  return knn_classify(a, labels, b, k);
}

std::size_t convergence_epochs(const std::vector<double>& curve, double band) {
  if (curve.empty()) throw ValueError("empty metric curve");
  const double final_value = curve.back();
  std::size_t e = curve.size();
  while (e > 0 && std::abs(curve[e - 1] - final_value) <= band + 1e-12) --e;
  return e + 1;
}

ProbeResult softmax_probe(const std::vector<Tensor>& train, const std::vector<int>& train_labels,
                          const std::vector<Tensor>& validation, const std::vector<int>& validation_labels,
                          const ProbeConfig& cfg) {
  if (train.empty()) throw ValueError("empty training set");
  if (train.size() != train_labels.size() || validation.size() != validation_labels.size())
    throw ShapeError("label count mismatch");
  if (validation.empty()) throw ValueError("empty validation set");
  const int classes = 1 + std::max(*std::max_element(train_labels.begin(), train_labels.end()),
                                   *std::max_element(validation_labels.begin(), validation_labels.end()));
  auto design = [](const std::vector<Tensor>& imgs) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(imgs.size()), static_cast<Eigen::Index>(kFeatureSide * kFeatureSide + 1));
    for (std::size_t i = 0; i < imgs.size(); ++i) {
      const auto f = gray_features(imgs[i]);
      for (std::size_t j = 0; j < f.size(); ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f[j];
      x(static_cast<Eigen::Index>(i), x.cols() - 1) = 1.0;
    }
    return x;
  };
  Eigen::MatrixXd xt = design(train), xv = design(validation);
  // Standardise with training statistics; the bias column stays at one.
  const Eigen::Index nf = xt.cols() - 1;
  const Eigen::RowVectorXd mu = xt.leftCols(nf).colwise().mean();
  const Eigen::RowVectorXd sd =
      ((xt.leftCols(nf).rowwise() - mu).array().square().colwise().mean().sqrt() + 1e-8).matrix();
  xt.leftCols(nf) = ((xt.leftCols(nf).rowwise() - mu).array().rowwise() / sd.array()).matrix();
  xv.leftCols(nf) = ((xv.leftCols(nf).rowwise() - mu).array().rowwise() / sd.array()).matrix();
  // The cross-entropy Hessian is bounded by lambda_max(X'X / n) / 2; lr is a fraction of 1 / L.
  const Eigen::MatrixXd gram = xt.transpose() * xt / static_cast<double>(xt.rows());
  const double lipschitz = 0.5 * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly)
                                     .eigenvalues()
                                     .maxCoeff() +
                           cfg.l2;
  const double step = cfg.lr / lipschitz;
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(xt.rows(), classes);
  for (std::size_t i = 0; i < train_labels.size(); ++i) y(static_cast<Eigen::Index>(i), train_labels[i]) = 1.0;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(xt.cols(), classes);

  auto softmax_rows = [](Eigen::MatrixXd s) {
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      s.row(r).array() -= s.row(r).maxCoeff();
      s.row(r) = s.row(r).array().exp().matrix();
      s.row(r) /= s.row(r).sum();
    }
    return s;
  };

  ProbeResult res;
  const double n = static_cast<double>(xt.rows());
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const Eigen::MatrixXd p = softmax_rows(xt * w);
    Eigen::MatrixXd g = xt.transpose() * (p - y) / n;
    g.topRows(g.rows() - 1) += cfg.l2 * w.topRows(w.rows() - 1);
    w -= step * g;
    const Eigen::MatrixXd sv = xv * w;
    std::size_t ok = 0;
    for (Eigen::Index r = 0; r < sv.rows(); ++r) {
      Eigen::Index arg = 0;
      sv.row(r).maxCoeff(&arg);
      ok += static_cast<int>(arg) == validation_labels[static_cast<std::size_t>(r)];
    }
    res.validation_accuracy.push_back(static_cast<double>(ok) / static_cast<double>(sv.rows()));
  }
  res.convergence_epochs = convergence_epochs(res.validation_accuracy);
  return res;
}

double median(std::vector<double> v) {
  if (v.empty()) throw ValueError("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) throw ValueError("mean of an empty set");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

nlohmann::json number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json acc = nlohmann::json::object();
  for (const auto& [label, a] : state_accuracy) acc[std::to_string(label)] = a;
  return {{"psnr_db", number_or_inf(psnr_db)},
          {"mse", mse},
          {"state_accuracy", acc},
          {"convergence_epochs", convergence_epochs ? nlohmann::json(*convergence_epochs) : nlohmann::json(nullptr)}};
}

}  // namespace twrmcae::eval
