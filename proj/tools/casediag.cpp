// casediag — case-based nodule diagnosis pipeline:
//   gen-data    synthesize a labeled 3D nodule dataset
//   train       contrastive Siamese U-Net training
//   build-index encode the support set, tune k, calibrate the threshold
//   predict     k-NN diagnosis of one case, optionally with explanations
//   evaluate    AUC/Acc/Re/Pr/F1 + ROC points on a labeled split
//
// Exit codes: 0 success, 2 input/config error, 3 runtime/data error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "casediag/explain.hpp"
#include "casediag/inference.hpp"
#include "casediag/run_config.hpp"
#include "casediag/trainer.hpp"

namespace fs = std::filesystem;
using namespace casediag;

using Scalar = double;

namespace {

void write_command_echo(const fs::path& out_dir, Json echo) {
  save_json(out_dir / "config.resolved.json", echo);
}

int cmd_gen_data(const std::string& out, int n_train, int n_val, int n_test,
                 std::vector<int> dims, std::uint64_t seed) {
  const fs::path out_dir(out);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) throw FileError("gen-data: cannot create " + out);
  if (dims.size() != 3) throw ConfigError("gen-data: --dims needs 3 values");

  const std::uint64_t data_seed = substream_seed(seed, "data");
  std::vector<ManifestEntry> manifest;
  std::uint64_t counter = 0;
  for (const auto& [split, count] :
       {std::pair{std::string("train"), n_train}, {std::string("val"), n_val},
        {std::string("test"), n_test}}) {
    for (int i = 0; i < count; ++i) {
      const int label = i % 2;  // balanced classes
      Case c = synth_case(label, {dims[0], dims[1], dims[2]},
                          detail::splitmix64(data_seed + counter++));
      char buf[32];
      std::snprintf(buf, sizeof buf, "%s_%03d", split.c_str(), i);
      c.id = buf;
      const std::string rel = "cases/" + c.id;
      save_case(c, out_dir / rel);
      manifest.push_back({rel, split});
    }
  }
  save_manifest(manifest, out_dir / "manifest.json");
  write_command_echo(out_dir, Json{{"command", "gen-data"},
                                   {"seed", seed},
                                   {"n_train", n_train},
                                   {"n_val", n_val},
                                   {"n_test", n_test},
                                   {"dims", dims}});
  std::cout << "wrote " << manifest.size() << " cases to " << out_dir.string() << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data, const std::string& out) {
  const RunConfig cfg = load_run_config(config_path);
  validate_split_disjoint(data);
  const auto train_cases = load_split(data, "train");
  const auto val_cases = load_split(data, "val");

  const fs::path out_dir(out);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  save_json(out_dir / "config.resolved.json", to_json(cfg));

  TrainResult<Scalar> res = train<Scalar>(cfg.unet, cfg.augment, cfg.train, train_cases,
                                          val_cases);

  std::ofstream log(out_dir / "train_log.jsonl", std::ios::trunc);
  for (const auto& r : res.log) {
    Json line{{"epoch", r.epoch}, {"lr", r.lr}, {"train_loss", r.train_loss},
              {"val_auc", r.val_auc}};
    log << line.dump() << "\n";
  }
  save_checkpoint(res.best, out_dir / "checkpoint");
  if (res.diverged) {
    std::cerr << "train: diverged (non-finite loss); last good checkpoint saved\n";
    return 3;
  }
  std::cout << "best epoch " << res.best_epoch << ", val AUC "
            << (res.best.val_history.empty() ? 0.0 : res.best.val_history[res.best_epoch])
            << ", checkpoint at " << (out_dir / "checkpoint").string() << "\n";
  return 0;
}

int cmd_build_index(const std::string& checkpoint, const std::string& data,
                    const std::string& out, const std::string& config_path) {
  std::vector<int> grid = {1, 3, 5, 7, 9, 11, 13, 15};
  if (!config_path.empty()) grid = load_run_config(config_path).k_grid;

  const Checkpoint<Scalar> ck = load_checkpoint<Scalar>(checkpoint);
  auto [model, head] = restore_model(ck);

  // Support set is train + val; k is tuned on val with self-match exclusion.
  validate_split_disjoint(data);
  auto support = load_split(data, "train");
  const std::size_t n_train = support.size();
  auto val_cases = load_split(data, "val");
  support.insert(support.end(), val_cases.begin(), val_cases.end());

  SupportIndex<Scalar> index = build_index(model, head, support);
  const fs::path manifest_root = fs::path(data).parent_path();
  {
    const auto entries = load_manifest(data);
    std::size_t pos = 0;
    for (const auto& e : entries)
      if (e.split == "train" || e.split == "val")
        index.items[pos++].source_dir = fs::absolute(manifest_root / e.dir).string();
  }

  std::vector<ValItem<Scalar>> val_items;
  for (std::size_t i = n_train; i < index.items.size(); ++i)
    val_items.push_back({index.items[i].id, index.items[i].label, index.items[i].code});
  index.k = tune_k(index, val_items, grid);
  index.tau = calibrate_threshold(index);

  const fs::path out_dir(out);
  save_index(index, out_dir);
  write_command_echo(out_dir, Json{{"command", "build-index"},
                                   {"checkpoint", checkpoint},
                                   {"data", data},
                                   {"k_grid", grid},
                                   {"k", index.k},
                                   {"tau", index.tau}});
  std::cout << "index over " << index.items.size() << " cases: k* = " << index.k
            << ", tau = " << index.tau << "\n";
  return 0;
}

Json prediction_json(const std::string& query_id, const Prediction& p, double tau) {
  Json neighbors = Json::array();
  for (const auto& n : p.neighbors)
    neighbors.push_back(Json{{"id", n.id}, {"label", n.label}, {"distance", n.distance}});
  return Json{{"query_id", query_id}, {"label", p.label},     {"score", p.score},
              {"confident", p.confident}, {"d_min", p.d_min}, {"tau", tau},
              {"neighbors", neighbors}};
}

template <typename S>
void save_attention(const AttentionMap<S>& map, const fs::path& dir, const std::string& name) {
  BlobWriter blob;
  Json desc = blob.add(map.values, {map.dims[0], map.dims[1], map.dims[2]});
  desc["dtype"] = dtype_name<S>();
  desc["file"] = name + ".bin";
  save_json(dir / (name + ".json"), desc);
  write_bytes(dir / (name + ".bin"), blob.bytes().data(), blob.bytes().size());
}

int cmd_predict(const std::string& index_dir, const std::string& checkpoint,
                const std::string& case_dir, const std::string& out, bool explain) {
  const SupportIndex<Scalar> index = load_index<Scalar>(index_dir);
  const Checkpoint<Scalar> ck = load_checkpoint<Scalar>(checkpoint);
  auto [model, head] = restore_model(ck);
  const Case query = load_case(case_dir);

  const Prediction pred = predict(index, model, query);
  const fs::path out_dir(out);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  save_json(out_dir / "prediction.json", prediction_json(query.id, pred, index.tau));

  if (explain) {
    auto [qpatch, qmask] = crop_patch(query, model.config().patch_shape);
    (void)qmask;
    const Tensor<Scalar> qt = to_tensor<Scalar>(qpatch);
    OverlaySpec spec;
    for (std::size_t r = 0; r < pred.neighbors.size(); ++r) {
      const auto& nb = pred.neighbors[r];
      const SupportItem<Scalar>* item = nullptr;
      for (const auto& it : index.items)
        if (it.id == nb.id) item = &it;
      if (!item || item->source_dir.empty())
        throw DataError("predict: support case " + nb.id + " has no source directory in index");
      const Case support_case = load_case(item->source_dir);
      auto [spatch, smask] = crop_patch(support_case, model.config().patch_shape);
      (void)smask;
      SiameseCam<Scalar> cam = siamese_local_cam(model, head, qt, to_tensor<Scalar>(spatch));
      if (r == 0) {
        render_overlay(qpatch, cam.query.finest, spec, out_dir / "query.png");
        save_attention(cam.query.finest, out_dir, "attention_query");
      }
      const std::string tag = "support_" + std::to_string(r + 1);
      render_overlay(spatch, cam.support.finest, spec, out_dir / (tag + ".png"));
      save_attention(cam.support.finest, out_dir, "attention_" + tag);
    }
  }
  std::cout << "label " << pred.label << ", score " << pred.score << ", confident "
            << (pred.confident ? "yes" : "no") << "\n";
  return 0;
}

int cmd_evaluate(const std::string& index_dir, const std::string& checkpoint,
                 const std::string& data, const std::string& split, const std::string& out) {
  const SupportIndex<Scalar> index = load_index<Scalar>(index_dir);
  const Checkpoint<Scalar> ck = load_checkpoint<Scalar>(checkpoint);
  auto [model, head] = restore_model(ck);
  const auto cases = load_split(data, split);
  if (cases.empty()) throw DataError("evaluate: split \"" + split + "\" is empty");

  std::vector<double> scores;
  std::vector<int> labels, predicted;
  for (const auto& c : cases) {
    const Prediction p = predict(index, model, c);
    scores.push_back(p.score);
    predicted.push_back(p.label);
    labels.push_back(c.label);
  }
  const double auc = roc_auc(scores, labels);
  const ClassificationReport rep = classification_report(predicted, labels);
  if (rep.no_positive_predictions)
    std::cerr << "evaluate: warning: no positive predictions; precision/F1 reported as 0\n";

  const fs::path out_dir(out);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  save_json(out_dir / "metrics.json",
            Json{{"split", split},
                 {"n", cases.size()},
                 {"auc", auc},
                 {"accuracy", rep.accuracy},
                 {"recall", rep.recall},
                 {"precision", rep.precision},
                 {"f1", rep.f1}});
  std::ofstream roc(out_dir / "roc.csv", std::ios::trunc);
  roc << "fpr,tpr\n";
  for (const auto& [fpr, tpr] : roc_points(scores, labels)) roc << fpr << "," << tpr << "\n";

  std::cout << "AUC " << auc << "  Acc " << rep.accuracy << "  Re " << rep.recall << "  Pr "
            << rep.precision << "  F1 " << rep.f1 << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"case-based nodule diagnosis via contrastive metric learning"};
  app.require_subcommand(1);

  std::string out, config_path, data, checkpoint, index_dir, case_dir, split = "test";
  int n_train = 200, n_val = 50, n_test = 50;
  std::vector<int> dims = {24, 24, 12};
  std::uint64_t seed = 7;
  bool explain = false;

  auto* gen = app.add_subcommand("gen-data", "synthesize a balanced nodule dataset");
  gen->add_option("--out", out)->required();
  gen->add_option("--n-train", n_train);
  gen->add_option("--n-val", n_val);
  gen->add_option("--n-test", n_test);
  gen->add_option("--dims", dims)->expected(3);
  gen->add_option("--seed", seed);

  auto* tr = app.add_subcommand("train", "train the Siamese U-Net");
  tr->add_option("--config", config_path)->required();
  tr->add_option("--data", data)->required();
  tr->add_option("--out", out)->required();

  auto* bi = app.add_subcommand("build-index",
                                "build the support index, tune k, calibrate tau");
  bi->add_option("--checkpoint", checkpoint)->required();
  bi->add_option("--data", data)->required();
  bi->add_option("--out", out)->required();
  bi->add_option("--config", config_path);

  auto* pr = app.add_subcommand("predict", "classify one case against the support set");
  pr->add_option("--index", index_dir)->required();
  pr->add_option("--checkpoint", checkpoint)->required();
  pr->add_option("--case", case_dir)->required();
  pr->add_option("--out", out)->default_val(".");
  pr->add_flag("--explain", explain, "emit query/support overlays and attention volumes");

  auto* ev = app.add_subcommand("evaluate", "metrics on a labeled split");
  ev->add_option("--index", index_dir)->required();
  ev->add_option("--checkpoint", checkpoint)->required();
  ev->add_option("--data", data)->required();
  ev->add_option("--split", split);
  ev->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(out, n_train, n_val, n_test, dims, seed);
    if (tr->parsed()) return cmd_train(config_path, data, out);
    if (bi->parsed()) return cmd_build_index(checkpoint, data, out, config_path);
    if (pr->parsed()) return cmd_predict(index_dir, checkpoint, case_dir, out, explain);
    if (ev->parsed()) return cmd_evaluate(index_dir, checkpoint, data, split, out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FileError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
