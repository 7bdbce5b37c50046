#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "casediag/blob.hpp"
#include "casediag/data.hpp"
#include "casediag/model.hpp"

namespace casediag {

template <typename Scalar>
struct SupportItem {
  std::string id;
  int label = 0;
  ArrayX<Scalar> code;
  std::string source_dir;  // case directory, for loading volumes at explain time
};

/// Immutable support store: latent codes of the labeled reference pool,
/// the AlignDist parameter snapshot, the tuned k and the calibrated
/// confidence threshold tau. Safe to share read-only across threads.
template <typename Scalar>
struct SupportIndex {
  std::vector<SupportItem<Scalar>> items;
  ArrayX<Scalar> align_a, align_b;
  int k = -1;
  double tau = -1.0;

  int code_dim() const { return int(align_a.size()); }
};

struct Neighbor {
  std::string id;
  int label = 0;
  double distance = 0.0;
};

struct Prediction {
  int label = 0;
  double score = 0.0;  // distance-weighted malignant fraction in [0,1]
  bool confident = false;
  double d_min = 0.0;
  std::vector<Neighbor> neighbors;  // ascending by (distance, id), length k
};

/// Latent code of a case: centroid crop, no augmentation.
template <typename Scalar>
ArrayX<Scalar> encode_case(const UNetModel<Scalar>& model, const Case& c) {
  const auto ps = model.config().patch_shape;
  auto [patch, mask] = crop_patch(c, ps);
  (void)mask;
  return encode(model, to_tensor<Scalar>(patch)).values();
}

template <typename Scalar>
SupportIndex<Scalar> build_index(const UNetModel<Scalar>& model, const AlignDistHead<Scalar>& head,
                                 const std::vector<Case>& support_cases) {
  bool seen[2] = {false, false};
  for (const auto& c : support_cases) seen[c.label == 1] = true;
  if (!seen[0] || !seen[1])
    throw DataError("build_index: support set must contain both classes");
  SupportIndex<Scalar> index;
  index.align_a = head.A.values();
  index.align_b = head.b.values();
  index.items.reserve(support_cases.size());
  for (const auto& c : support_cases)
    index.items.push_back({c.id, c.label, encode_case(model, c)});
  return index;
}

/// ||A .* (a - b)||_2 under the index's alignment snapshot.
template <typename Scalar>
double aligned_distance(const SupportIndex<Scalar>& index, const ArrayX<Scalar>& a,
                        const ArrayX<Scalar>& b) {
  if (a.size() != b.size() || a.size() != index.align_a.size())
    throw DimensionError("aligned_distance: code length mismatch");
  return std::sqrt(double((index.align_a * (a - b)).square().sum()));
}

namespace detail {

template <typename Scalar>
std::vector<Neighbor> knn_impl(const SupportIndex<Scalar>& index, const ArrayX<Scalar>& code,
                               int k, const std::string* exclude_id) {
  std::vector<Neighbor> all;
  all.reserve(index.items.size());
  for (const auto& item : index.items) {
    if (exclude_id && item.id == *exclude_id) continue;
    all.push_back({item.id, item.label, aligned_distance(index, code, item.code)});
  }
  if (k < 1 || k > int(all.size()))
    throw ParameterError("knn_query: k = " + std::to_string(k) + " out of range [1, " +
                         std::to_string(all.size()) + "]");
  auto cmp = [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
  };
  std::partial_sort(all.begin(), all.begin() + k, all.end(), cmp);
  all.resize(k);
  return all;
}

}  // namespace detail

/// The k nearest support items, ascending by distance; ties broken by
/// lexicographic case id.
template <typename Scalar>
std::vector<Neighbor> knn_query(const SupportIndex<Scalar>& index, const ArrayX<Scalar>& code,
                                int k) {
  return detail::knn_impl(index, code, k, nullptr);
}

template <typename Scalar>
Prediction predict_from_code(const SupportIndex<Scalar>& index, const ArrayX<Scalar>& code) {
  if (index.k < 1) throw UsageError("predict: index has no tuned k (run tune_k)");
  Prediction p;
  p.neighbors = knn_query(index, code, index.k);
  int votes = 0;
  double w_mal = 0, w_all = 0;
  for (const auto& n : p.neighbors) {
    votes += n.label;
    const double w = 1.0 / (n.distance + 1e-8);
    w_all += w;
    if (n.label == 1) w_mal += w;
  }
  p.label = 2 * votes > int(p.neighbors.size()) ? 1 : 0;
  p.score = w_mal / w_all;
  p.d_min = p.neighbors.front().distance;
  p.confident = index.tau > 0 && p.d_min <= index.tau;
  return p;
}

/// Case-based classification of one query case (Eq.-4-style k-NN majority
/// vote over the support set).
template <typename Scalar>
Prediction predict(const SupportIndex<Scalar>& index, const UNetModel<Scalar>& model,
                   const Case& query) {
  return predict_from_code(index, encode_case(model, query));
}

/// Validation item for k tuning: id (for self-match exclusion), label, code.
template <typename Scalar>
struct ValItem {
  std::string id;
  int label = 0;
  ArrayX<Scalar> code;
};

/// Picks the k in `grid` maximizing validation accuracy; ties go to the
/// smallest k. Self-matches (identical id) are excluded from the neighbor
/// pool, so validation items may double as support members.
template <typename Scalar>
int tune_k(const SupportIndex<Scalar>& index, const std::vector<ValItem<Scalar>>& val,
           std::vector<int> grid = {1, 3, 5, 7, 9, 11, 13, 15}) {
  if (grid.empty()) throw ParameterError("tune_k: empty k grid");
  if (val.empty()) throw DataError("tune_k: empty validation set");
  std::sort(grid.begin(), grid.end());
  int best_k = -1, best_correct = -1;
  for (int k : grid) {
    if (k < 1 || k % 2 == 0)
      throw ParameterError("tune_k: grid entries must be odd and positive, got " +
                           std::to_string(k));
    int correct = 0;
    for (const auto& v : val) {
      int kk = std::min<int>(k, int(index.items.size()) - 1);
      if (kk % 2 == 0) --kk;
      if (kk < 1) throw DataError("tune_k: support set too small");
      auto nn = detail::knn_impl(index, v.code, kk, &v.id);
      int votes = 0;
      for (const auto& n : nn) votes += n.label;
      const int pred = 2 * votes > int(nn.size()) ? 1 : 0;
      correct += pred == v.label;
    }
    if (correct > best_correct) {
      best_correct = correct;
      best_k = k;
    }
  }
  return best_k;
}

/// Nearest-rank percentile: the ceil(p*n)-th order statistic.
inline double percentile_nearest_rank(std::vector<double> values, double p) {
  if (values.empty()) throw ParameterError("percentile: empty collection");
  std::sort(values.begin(), values.end());
  const std::size_t rank = std::size_t(std::ceil(p * double(values.size())));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

/// Confidence threshold: nearest-rank 95th percentile of the
/// nearest-neighbor distances of support items whose leave-one-out k-NN
/// prediction is correct.
template <typename Scalar>
double calibrate_threshold(const SupportIndex<Scalar>& index) {
  if (index.k < 1) throw UsageError("calibrate_threshold: index has no tuned k");
  int per_class[2] = {0, 0};
  for (const auto& it : index.items) ++per_class[it.label == 1];
  if (per_class[0] < 2 || per_class[1] < 2)
    throw DataError("calibrate_threshold: need >= 2 support items per class for leave-one-out");
  std::vector<double> correct_dmin;
  for (std::size_t i = 0; i < index.items.size(); ++i) {
    const auto& q = index.items[i];
    int kk = std::min<int>(index.k, int(index.items.size()) - 1);
    if (kk % 2 == 0) --kk;
    auto nn = detail::knn_impl(index, q.code, kk, &q.id);
    int votes = 0;
    for (const auto& n : nn) votes += n.label;
    const int pred = 2 * votes > int(nn.size()) ? 1 : 0;
    if (pred == q.label) correct_dmin.push_back(nn.front().distance);
  }
  if (correct_dmin.empty())
    throw CalibrationError("calibrate_threshold: no correct leave-one-out predictions");
  return percentile_nearest_rank(correct_dmin, 0.95);
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Mann-Whitney AUC: P(score_malignant > score_benign) + 0.5*P(equal).
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ParameterError("roc_auc: length mismatch");
  double wins = 0;
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j])
        wins += 1;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  if (pairs == 0) throw MetricError("roc_auc: both classes must be present");
  return wins / double(pairs);
}

/// ROC polyline (fpr, tpr), threshold swept from +inf down; monotone in fpr.
inline std::vector<std::pair<double, double>> roc_points(std::vector<double> scores,
                                                         std::vector<int> labels) {
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double pos = 0, neg = 0;
  for (int l : labels) (l == 1 ? pos : neg) += 1;
  if (pos == 0 || neg == 0) throw MetricError("roc_points: both classes must be present");
  std::vector<std::pair<double, double>> pts{{0.0, 0.0}};
  double tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
    pts.emplace_back(fp / neg, tp / pos);
  }
  return pts;
}

struct ClassificationReport {
  double accuracy = 0, recall = 0, precision = 0, f1 = 0;
  bool no_positive_predictions = false;
};

/// Standard binary metrics with malignant as the positive class. With no
/// positive predictions, precision and F1 are reported as 0 and the report
/// is flagged.
inline ClassificationReport classification_report(const std::vector<int>& predicted,
                                                  const std::vector<int>& truth) {
  if (predicted.size() != truth.size())
    throw ParameterError("classification_report: length mismatch");
  if (predicted.empty()) throw ParameterError("classification_report: empty input");
  double tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] == 1 && truth[i] == 1) ++tp;
    if (predicted[i] == 0 && truth[i] == 0) ++tn;
    if (predicted[i] == 1 && truth[i] == 0) ++fp;
    if (predicted[i] == 0 && truth[i] == 1) ++fn;
  }
  ClassificationReport r;
  r.accuracy = (tp + tn) / double(predicted.size());
  r.recall = tp + fn > 0 ? tp / (tp + fn) : 0;
  if (tp + fp == 0) {
    r.no_positive_predictions = true;
    r.precision = 0;
    r.f1 = 0;
  } else {
    r.precision = tp / (tp + fp);
    r.f1 = r.precision + r.recall > 0
               ? 2 * r.precision * r.recall / (r.precision + r.recall)
               : 0;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Serialization (JSON manifest + raw code blob)
// ---------------------------------------------------------------------------

template <typename Scalar>
void save_index(const SupportIndex<Scalar>& index, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  BlobWriter blob;
  Json j;
  j["format_version"] = 1;
  j["dtype"] = dtype_name<Scalar>();
  j["k"] = index.k;
  j["tau"] = index.tau;
  const int n = index.code_dim();
  j["code_dim"] = n;
  j["align"]["A"] = blob.add(index.align_a, {n});
  j["align"]["b"] = blob.add(index.align_b, {n});
  j["items"] = Json::array();
  for (const auto& it : index.items) {
    Json e = blob.add(it.code, {n});
    e["id"] = it.id;
    e["label"] = it.label;
    if (!it.source_dir.empty()) e["source_dir"] = it.source_dir;
    j["items"].push_back(std::move(e));
  }
  save_json(dir / "index.json", j);
  write_bytes(dir / "codes.bin", blob.bytes().data(), blob.bytes().size());
}

template <typename Scalar>
SupportIndex<Scalar> load_index(const std::filesystem::path& dir) {
  const Json j = load_json(dir / "index.json");
  const std::string where = "index " + dir.string();
  if (json_get<std::string>(j, "dtype", where) != dtype_name<Scalar>())
    throw FormatError(where + ": dtype mismatch");
  BlobReader blob(read_bytes(dir / "codes.bin"));
  SupportIndex<Scalar> index;
  index.k = json_get<int>(j, "k", where);
  index.tau = json_get<double>(j, "tau", where);
  if (!j.contains("align") || !j["align"].contains("A"))
    throw FormatError(where + ": missing field \"align.A\"");
  if (!j["align"].contains("b")) throw FormatError(where + ": missing field \"align.b\"");
  index.align_a = blob.read<Scalar>(j["align"]["A"], where + " align.A");
  index.align_b = blob.read<Scalar>(j["align"]["b"], where + " align.b");
  for (const auto& e : json_get<Json>(j, "items", where)) {
    SupportItem<Scalar> it;
    it.id = json_get<std::string>(e, "id", where + " item");
    it.label = json_get<int>(e, "label", where + " item");
    it.code = blob.read<Scalar>(e, where + " item " + it.id);
    if (e.contains("source_dir")) it.source_dir = e.at("source_dir").get<std::string>();
    index.items.push_back(std::move(it));
  }
  return index;
}

}  // namespace casediag
