#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "casediag/blob.hpp"
#include "casediag/config_json.hpp"
#include "casediag/data.hpp"
#include "casediag/inference.hpp"
#include "casediag/losses.hpp"
#include "casediag/model.hpp"
#include "casediag/rng.hpp"

namespace casediag {

struct TrainConfig {
  double lr_max = 1e-3;
  double lr_min = 1e-5;
  int sgdr_t0 = 10;
  int sgdr_tmult = 2;
  int epochs = 20;
  int pairs_per_epoch = 200;
  int batch_size = 8;
  std::uint64_t seed = 0;
  LossConfig loss;
  int val_knn_k = 5;  // neighbor count for the validation AUC metric

  void validate() const {
    if (!(lr_min < lr_max)) throw ConfigError("train: lr_min must be < lr_max");
    if (sgdr_t0 < 1) throw ConfigError("train: sgdr_t0 must be >= 1");
    if (sgdr_tmult < 1) throw ConfigError("train: sgdr_tmult must be >= 1");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (pairs_per_epoch < 1) throw ConfigError("train: pairs_per_epoch must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (val_knn_k < 1 || val_knn_k % 2 == 0)
      throw ConfigError("train: val_knn_k must be odd and positive");
    loss.validate();
  }

  bool operator==(const TrainConfig&) const = default;
};

inline Json to_json(const TrainConfig& c) {
  return Json{{"lr_max", c.lr_max},
              {"lr_min", c.lr_min},
              {"sgdr_t0", c.sgdr_t0},
              {"sgdr_tmult", c.sgdr_tmult},
              {"epochs", c.epochs},
              {"pairs_per_epoch", c.pairs_per_epoch},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"val_knn_k", c.val_knn_k},
              {"loss", to_json(c.loss)}};
}

inline TrainConfig train_from_json(const Json& j, const std::string& where) {
  check_keys(j,
             {"lr_max", "lr_min", "sgdr_t0", "sgdr_tmult", "epochs", "pairs_per_epoch",
              "batch_size", "seed", "val_knn_k", "loss"},
             where);
  TrainConfig c;
  if (j.contains("lr_max")) c.lr_max = json_get<double>(j, "lr_max", where);
  if (j.contains("lr_min")) c.lr_min = json_get<double>(j, "lr_min", where);
  if (j.contains("sgdr_t0")) c.sgdr_t0 = json_get<int>(j, "sgdr_t0", where);
  if (j.contains("sgdr_tmult")) c.sgdr_tmult = json_get<int>(j, "sgdr_tmult", where);
  if (j.contains("epochs")) c.epochs = json_get<int>(j, "epochs", where);
  if (j.contains("pairs_per_epoch"))
    c.pairs_per_epoch = json_get<int>(j, "pairs_per_epoch", where);
  if (j.contains("batch_size")) c.batch_size = json_get<int>(j, "batch_size", where);
  if (j.contains("seed")) c.seed = json_get<std::uint64_t>(j, "seed", where);
  if (j.contains("val_knn_k")) c.val_knn_k = json_get<int>(j, "val_knn_k", where);
  if (j.contains("loss")) c.loss = loss_from_json(j.at("loss"), where + ".loss");
  c.validate();
  return c;
}

/// Cosine-annealed LR with warm restarts. Cycle lengths are T0, T0*Tmult,
/// T0*Tmult^2, ...; within a cycle of length Ti at position t (continuous,
/// with t == Ti counted as the cycle end):
///   lr = lr_min + (lr_max - lr_min)/2 * (1 + cos(pi * t / Ti))
inline double sgdr_lr(double epoch_progress, const TrainConfig& cfg) {
  if (epoch_progress < 0) throw ParameterError("sgdr_lr: progress must be >= 0");
  double t = epoch_progress;
  double ti = double(cfg.sgdr_t0);
  while (t > ti) {
    t -= ti;
    ti *= double(cfg.sgdr_tmult);
  }
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(M_PI * t / ti));
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamHyper {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

template <typename Scalar>
struct AdamParamState {
  ArrayX<Scalar> m, v;
  std::int64_t t = 0;
};

/// One bias-corrected Adam step on a flat weight array.
template <typename Scalar>
void adam_update(ArrayX<Scalar>& w, const ArrayX<Scalar>& g, AdamParamState<Scalar>& st,
                 double lr, const AdamHyper& hp = {}, const std::string& name = "param") {
  if (w.size() != g.size())
    throw DimensionError("adam: gradient length " + std::to_string(g.size()) +
                         " does not match weights " + std::to_string(w.size()));
  if (!all_finite(g)) throw TrainingError("adam: non-finite gradient for " + name);
  if (st.m.size() != w.size()) {
    st.m = ArrayX<Scalar>::Zero(w.size());
    st.v = ArrayX<Scalar>::Zero(w.size());
    st.t = 0;
  }
  ++st.t;
  const Scalar b1 = Scalar(hp.beta1), b2 = Scalar(hp.beta2);
  st.m = b1 * st.m + (Scalar(1) - b1) * g;
  st.v = b2 * st.v + (Scalar(1) - b2) * g.square();
  const Scalar c1 = Scalar(1) - Scalar(std::pow(hp.beta1, double(st.t)));
  const Scalar c2 = Scalar(1) - Scalar(std::pow(hp.beta2, double(st.t)));
  w -= Scalar(lr) * (st.m / c1) / ((st.v / c2).sqrt() + Scalar(hp.eps));
}

/// Adam over a named parameter list. Parameters without a populated grad
/// (e.g. the AlignDist bias, which cancels out of d) are left untouched.
template <typename Scalar>
class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::vector<std::pair<std::string, Tensor<Scalar>>> params,
                         AdamHyper hp = {})
      : params_(std::move(params)), states_(params_.size()), hp_(hp) {}

  void step(double lr) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& [name, p] = params_[i];
      if (!p.has_grad()) continue;
      adam_update(p.values(), p.node()->grad, states_[i], lr, hp_, name);
    }
  }

 private:
  std::vector<std::pair<std::string, Tensor<Scalar>>> params_;
  std::vector<AdamParamState<Scalar>> states_;
  AdamHyper hp_;
};

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

template <typename Scalar>
struct Checkpoint {
  UNetConfig unet;
  TrainConfig train;
  int epoch = -1;
  std::vector<double> val_history;
  std::string rng_state;
  std::vector<std::pair<std::string, ArrayX<Scalar>>> tensors;  // deep value copies
  std::vector<Shape> shapes;
};

template <typename Scalar>
Checkpoint<Scalar> make_checkpoint(const UNetModel<Scalar>& model,
                                   const AlignDistHead<Scalar>& head, const TrainConfig& cfg,
                                   int epoch, std::string rng_state) {
  Checkpoint<Scalar> ck;
  ck.unet = model.config();
  ck.train = cfg;
  ck.epoch = epoch;
  ck.rng_state = std::move(rng_state);
  for (const auto& [name, t] : model.named_parameters()) {
    ck.tensors.emplace_back(name, t.values());
    ck.shapes.push_back(t.shape());
  }
  ck.tensors.emplace_back("align.A", head.A.values());
  ck.shapes.push_back(head.A.shape());
  ck.tensors.emplace_back("align.b", head.b.values());
  ck.shapes.push_back(head.b.shape());
  return ck;
}

/// Rebuilds the model and AlignDist head from a checkpoint. Every parameter
/// must be present with the exact shape; extras or gaps are format errors.
template <typename Scalar>
std::pair<UNetModel<Scalar>, AlignDistHead<Scalar>> restore_model(const Checkpoint<Scalar>& ck) {
  UNetModel<Scalar> model = UNetModel<Scalar>::build(ck.unet, 0);
  std::unordered_map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < ck.tensors.size(); ++i) by_name[ck.tensors[i].first] = i;
  std::size_t used = 0;
  auto fetch = [&](const std::string& name, const Shape& want) -> const ArrayX<Scalar>& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint: missing tensor \"" + name + "\"");
    if (ck.shapes[it->second] != want)
      throw FormatError("checkpoint: tensor \"" + name + "\" has shape " +
                        shape_str(ck.shapes[it->second]) + ", model expects " + shape_str(want));
    ++used;
    return ck.tensors[it->second].second;
  };
  for (const auto& [name, t] : model.named_parameters()) {
    Tensor<Scalar> handle = t;  // shares storage with the model
    handle.values() = fetch(name, t.shape());
  }
  AlignDistHead<Scalar> head = AlignDistHead<Scalar>::identity(ck.unet.latent_dim());
  head.A.values() = fetch("align.A", head.A.shape());
  head.b.values() = fetch("align.b", head.b.shape());
  if (used != ck.tensors.size())
    throw FormatError("checkpoint: holds " + std::to_string(ck.tensors.size()) +
                      " tensors, model uses " + std::to_string(used));
  return {std::move(model), std::move(head)};
}

template <typename Scalar>
void save_checkpoint(const Checkpoint<Scalar>& ck, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  BlobWriter blob;
  Json j;
  j["format_version"] = 1;
  j["dtype"] = dtype_name<Scalar>();
  j["unet"] = to_json(ck.unet);
  j["train"] = to_json(ck.train);
  j["epoch"] = ck.epoch;
  j["val_history"] = ck.val_history;
  j["rng_state"] = ck.rng_state;
  j["tensors"] = Json::array();
  for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
    Json e = blob.add(ck.tensors[i].second, ck.shapes[i]);
    e["name"] = ck.tensors[i].first;
    j["tensors"].push_back(std::move(e));
  }
  save_json(dir / "checkpoint.json", j);
  write_bytes(dir / "weights.bin", blob.bytes().data(), blob.bytes().size());
}

template <typename Scalar>
Checkpoint<Scalar> load_checkpoint(const std::filesystem::path& dir) {
  const Json j = load_json(dir / "checkpoint.json");
  const std::string where = "checkpoint " + dir.string();
  const int version = json_get<int>(j, "format_version", where);
  if (version != 1)
    throw FormatError(where + ": unsupported format_version " + std::to_string(version));
  if (json_get<std::string>(j, "dtype", where) != dtype_name<Scalar>())
    throw FormatError(where + ": dtype mismatch (expected " + dtype_name<Scalar>() + ")");
  Checkpoint<Scalar> ck;
  ck.unet = unet_from_json(json_get<Json>(j, "unet", where), where + ".unet");
  ck.train = train_from_json(json_get<Json>(j, "train", where), where + ".train");
  ck.epoch = json_get<int>(j, "epoch", where);
  ck.val_history = json_get<std::vector<double>>(j, "val_history", where);
  ck.rng_state = json_get<std::string>(j, "rng_state", where);
  BlobReader blob(read_bytes(dir / "weights.bin"));
  for (const auto& e : json_get<Json>(j, "tensors", where)) {
    const auto name = json_get<std::string>(e, "name", where + " tensor");
    ck.tensors.emplace_back(name, blob.read<Scalar>(e, where + " tensor " + name));
    ck.shapes.push_back(json_get<Shape>(e, "shape", where + " tensor " + name));
  }
  return ck;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainLogRecord {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_auc = 0;
};

template <typename Scalar>
struct TrainResult {
  Checkpoint<Scalar> best;
  std::vector<TrainLogRecord> log;
  bool diverged = false;
  int best_epoch = -1;
};

namespace detail {

/// k-NN AUC of the val split against the train split as support, using the
/// current model snapshot.
template <typename Scalar>
double validation_auc(const UNetModel<Scalar>& model, const AlignDistHead<Scalar>& head,
                      const std::vector<Case>& train_cases, const std::vector<Case>& val_cases,
                      int k) {
  SupportIndex<Scalar> index = build_index(model, head, train_cases);
  int kk = std::min<int>(k, int(index.items.size()));
  if (kk % 2 == 0) --kk;
  index.k = std::max(kk, 1);
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& c : val_cases) {
    scores.push_back(predict_from_code(index, encode_case(model, c)).score);
    labels.push_back(c.label);
  }
  return roc_auc(scores, labels);
}

inline void check_two_class(const std::vector<Case>& cases, const char* which) {
  bool seen[2] = {false, false};
  for (const auto& c : cases) seen[c.label == 1] = true;
  if (cases.empty() || !seen[0] || !seen[1])
    throw DataError(std::string("train: ") + which + " split must be nonempty and two-class");
}

}  // namespace detail

/// Minimizes the combined contrastive + weighted segmentation objective with
/// Adam under SGDR scheduling; retains the best-validation-AUC checkpoint.
/// Fully deterministic given (configs, seed). On divergence (non-finite
/// loss or gradients) aborts and returns the last good checkpoint with the
/// diverged flag set.
template <typename Scalar>
TrainResult<Scalar> train(const UNetConfig& unet_cfg, const AugmentConfig& aug_cfg,
                          const TrainConfig& cfg, const std::vector<Case>& train_cases,
                          const std::vector<Case>& val_cases) {
  unet_cfg.validate();
  cfg.validate();
  detail::check_two_class(train_cases, "train");
  detail::check_two_class(val_cases, "val");

  UNetModel<Scalar> model = UNetModel<Scalar>::build(unet_cfg, substream_seed(cfg.seed, "init"));
  AlignDistHead<Scalar> head = AlignDistHead<Scalar>::identity(unet_cfg.latent_dim());
  auto params = model.named_parameters();
  params.emplace_back("align.A", head.A);
  params.emplace_back("align.b", head.b);
  AdamOptimizer<Scalar> opt(params);

  std::mt19937_64 train_rng = make_rng(cfg.seed, "train");
  std::mt19937_64 aug_rng = make_rng(cfg.seed, "augment");
  auto rng_state = [&] {
    std::ostringstream os;
    os << train_rng;
    return os.str();
  };

  TrainResult<Scalar> res;
  res.best = make_checkpoint(model, head, cfg, -1, rng_state());
  double best_auc = -std::numeric_limits<double>::infinity();

  const int batches = (cfg.pairs_per_epoch + cfg.batch_size - 1) / cfg.batch_size;
  for (int epoch = 0; epoch < cfg.epochs && !res.diverged; ++epoch) {
    const double lr = sgdr_lr(double(epoch), cfg);
    double loss_sum = 0;
    int pairs_seen = 0;
    for (int b = 0; b < batches && !res.diverged; ++b) {
      const int bs = std::min(cfg.batch_size, cfg.pairs_per_epoch - b * cfg.batch_size);
      Tensor<Scalar> total;
      for (int i = 0; i < bs; ++i) {
        PairSample ps = sample_pair(train_cases, unet_cfg.patch_shape, aug_cfg, train_rng,
                                    &aug_rng);
        auto out = siamese_forward(model, head, to_tensor<Scalar>(ps.patch1),
                                   to_tensor<Scalar>(ps.patch2));
        Tensor<Scalar> li = combined_loss(out.distance, ps.y, out.branch1.mask_logits,
                                          to_tensor<Scalar>(ps.mask1), out.branch2.mask_logits,
                                          to_tensor<Scalar>(ps.mask2), cfg.loss);
        total = total.defined() ? add(total, li) : li;
      }
      Tensor<Scalar> batch_loss = scale(total, Scalar(1) / Scalar(bs));
      if (!std::isfinite(double(batch_loss.value()))) {
        res.diverged = true;
        break;
      }
      loss_sum += double(batch_loss.value()) * bs;
      pairs_seen += bs;
      backward(batch_loss);
      try {
        opt.step(lr);
      } catch (const TrainingError&) {
        res.diverged = true;
      }
    }
    if (res.diverged) break;
    const double val_auc =
        detail::validation_auc(model, head, train_cases, val_cases, cfg.val_knn_k);
    res.log.push_back({epoch, lr, loss_sum / std::max(pairs_seen, 1), val_auc});
    if (val_auc > best_auc) {
      best_auc = val_auc;
      res.best = make_checkpoint(model, head, cfg, epoch, rng_state());
      res.best_epoch = epoch;
    }
  }
  for (const auto& rec : res.log) res.best.val_history.push_back(rec.val_auc);
  return res;
}

}  // namespace casediag
