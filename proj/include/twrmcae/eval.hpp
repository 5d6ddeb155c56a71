#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include <json.hpp>

#include "twrmcae/tensor.hpp"

namespace twrmcae::eval {

/// Mean squared difference over every element (channels folded into the count).
double mse(const Tensor& i, const Tensor& k);
/// 10 log10(max_i^2 / mse); +inf when mse is zero.
double psnr_from_mse(double mse, double max_i = 1.0);
double psnr(const Tensor& i, const Tensor& k, double max_i = 1.0);

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};
/// (TP + TN) / total.
double accuracy(const Confusion& c);
/// correct / total for any number of classes.
double accuracy(const std::vector<int>& truth, const std::vector<int>& predicted);

/// Per-label accuracy over the labels present in `truth`.
std::map<int, double> per_class_accuracy(const std::vector<int>& truth, const std::vector<int>& predicted);

inline constexpr std::size_t kFeatureSide = 16;

/// Channel mean, bilinear resize to 16 x 16, flattened.
std::vector<double> gray_features(const Tensor& image);

/// k nearest neighbours by Euclidean distance on gray_features. Majority
/// vote; ties go to the label with the smaller summed neighbour distance,
/// then to the smaller label.
std::vector<int> knn_classify(const std::vector<Tensor>& train, const std::vector<int>& train_labels,
                              const std::vector<Tensor>& test, std::size_t k);
/// Same on precomputed feature vectors.
std::vector<int> knn_classify(const std::vector<std::vector<double>>& train, const std::vector<int>& train_labels,
                              const std::vector<std::vector<double>>& test, std::size_t k);

/// First (1-based) epoch from which every later value stays within `band`
/// of the final value.
std::size_t convergence_epochs(const std::vector<double>& curve, double band = 0.01);

struct ProbeConfig {
  std::size_t epochs = 100;
  double lr = 1.0;  // fraction of 1 / L for the standardised design matrix
  double l2 = 1e-4;
};

struct ProbeResult {
  std::vector<double> validation_accuracy;  // one value per epoch
  std::size_t convergence_epochs = 0;
};

/// Multinomial logistic regression on standardised gray_features, zero-initialised and
/// trained by full-batch gradient descent; validation accuracy is recorded
/// after every epoch.
ProbeResult softmax_probe(const std::vector<Tensor>& train, const std::vector<int>& train_labels,
                          const std::vector<Tensor>& validation, const std::vector<int>& validation_labels,
                          const ProbeConfig& cfg = {});

double median(std::vector<double> v);
double mean(const std::vector<double>& v);

/// Summary written by the evaluate command.
struct MetricReport {
  double psnr_db = std::numeric_limits<double>::infinity();
  double mse = 0.0;
  std::map<int, double> state_accuracy;
  std::optional<std::size_t> convergence_epochs;
  nlohmann::json to_json() const;
};

/// JSON number, or the string "inf" for the PSNR sentinel.
nlohmann::json number_or_inf(double v);

}  // namespace twrmcae::eval
