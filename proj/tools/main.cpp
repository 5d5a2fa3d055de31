// hoi: generate synthetic data, train, evaluate, ablate and inspect models.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "hoi/checkpoint.hpp"
#include "hoi/config.hpp"
#include "hoi/dataset_io.hpp"
#include "hoi/m2s.hpp"
#include "hoi/reports.hpp"
#include "hoi/trainer.hpp"

namespace fs = std::filesystem;
using namespace hoi;

namespace {

struct Common {
  std::string config_path;
  std::map<std::string, std::string> overrides;  // --<key> flags
  std::vector<std::string> sets;                 // --set key=value
  std::optional<std::uint64_t> seed;
  std::string data_path;
};

void add_common(CLI::App* cmd, Common& c, bool seed_required) {
  cmd->add_option("--config", c.config_path, "key = value config file");
  cmd->add_option("--set", c.sets, "override one config key (key=value), repeatable");
  auto* s = cmd->add_option("--seed", c.seed, "root seed");
  if (seed_required) s->required();
  for (const auto& key : config_keys()) {
    if (key == "seed") continue;
    cmd->add_option_function<std::string>(
        "--" + key, [&c, key](const std::string& v) { c.overrides[key] = v; }, "config key " + key);
  }
  cmd->add_option_function<std::string>(
      "--c2c_on", [&c](const std::string& v) { c.overrides["c2c_on"] = v; }, "contrastive and calibration on/off");
  cmd->add_option_function<std::string>(
      "--m2s_on", [&c](const std::string& v) { c.overrides["m2s_on"] = v; }, "merge and split on/off");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : RunConfig::load(c.config_path);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  // group switches first so the specific keys can refine them
  for (const char* group : {"c2c_on", "m2s_on"})
    if (auto it = c.overrides.find(group); it != c.overrides.end()) cfg.set(it->first, it->second);
  for (const auto& [k, v] : c.overrides)
    if (k != "c2c_on" && k != "m2s_on") cfg.set(k, v);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

struct DataBundle {
  std::unique_ptr<Taxonomy> tax;
  Dataset data;
};

DataBundle obtain_data(const Common& c, const RunConfig& cfg) {
  if (!c.data_path.empty()) {
    auto loaded = load_dataset(c.data_path);
    if (loaded.dataset.config.grid.dim != cfg.model.dim)
      throw ConfigError("dataset grid width differs from the model dim");
    return {std::move(loaded.taxonomy), std::move(loaded.dataset)};
  }
  auto tax = std::make_unique<Taxonomy>(Taxonomy::default_taxonomy());
  Dataset data = generate_dataset(*tax, dataset_config(cfg));
  return {std::move(tax), std::move(data)};
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

void log_epoch(std::size_t epoch, const LossReport& l, const EvalReport& e) {
  std::fprintf(stderr, "epoch %3zu  l_all %.4f  l_det %.4f  mAP full %.4f rare %.4f non-rare %.4f\n", epoch + 1,
               l.l_all, l.l_detector, e.map_full, e.map_rare, e.map_nonrare);
}

int cmd_generate(const Common& c, const std::string& out) {
  const RunConfig cfg = resolve(c);
  const Taxonomy tax = Taxonomy::default_taxonomy();
  const Dataset data = generate_dataset(tax, dataset_config(cfg));
  save_dataset(out, tax, data);
  std::size_t shortfall = 0;
  for (const auto* split : {&data.train, &data.test})
    for (const auto& s : *split) shortfall += s.meta.sibling_shortfall + s.meta.placement_shortfall;
  std::printf("wrote %zu train / %zu test scenes to %s (%zu sampling shortfalls)\n", data.train.size(),
              data.test.size(), out.c_str(), shortfall);
  return 0;
}

int cmd_train(const Common& c, const fs::path& out_dir) {
  const RunConfig cfg = resolve(c);
  const DataBundle db = obtain_data(c, cfg);
  fs::create_directories(out_dir);
  write_text(out_dir / "config.txt", cfg.to_text());
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult res = train(cfg, *db.tax, db.data, {out_dir, log_epoch});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json(out_dir / "run_record.json", to_json(res.record));
  write_text(out_dir / "curves.csv", curves_csv(res.record));
  std::printf("trained %zu epochs in %.1f s; record in %s\n", cfg.epochs, secs, (out_dir / "run_record.json").c_str());
  return 0;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& predictions, bool known_object,
             const std::string& out, const std::string& dump_predictions) {
  const RunConfig cfg = resolve(c);
  const DataBundle db = obtain_data(c, cfg);
  const TrainingContext ctx = make_context(*db.tax, cfg, db.data);
  std::vector<PredictionRecord> preds;
  if (!checkpoint.empty()) {
    auto det = make_detector(ctx, cfg);
    load_checkpoint(checkpoint, *det);
    preds = predict_all(*det, *db.tax, db.data.test, forward_options(cfg), cfg.eval_top_k);
  } else if (!predictions.empty()) {
    preds = read_predictions(predictions);
  } else {
    throw ConfigError("eval needs --checkpoint or --predictions");
  }
  if (!dump_predictions.empty()) write_predictions(dump_predictions, preds);
  EvalOptions opt;
  if (known_object) opt.setting = EvalSetting::KnownObject;
  const EvalReport rep = evaluate(*db.tax, preds, db.data.test, ctx.train_counts, opt);
  const auto j = to_json(rep);
  if (out.empty()) std::cout << j.dump(2) << "\n";
  else write_json(out, j);
  return 0;
}

int cmd_ablate(const Common& c, const fs::path& out_dir, const std::vector<std::uint64_t>& extra_seeds,
               const std::vector<std::string>& rows) {
  const RunConfig cfg = resolve(c);
  std::vector<std::uint64_t> seeds{cfg.seed};
  seeds.insert(seeds.end(), extra_seeds.begin(), extra_seeds.end());
  std::vector<AblationRow> grid;
  for (const auto& r : incremental_grid())
    if (rows.empty() || std::find(rows.begin(), rows.end(), r.name) != rows.end()) grid.push_back(r);
  if (grid.empty()) throw ConfigError("no ablation row matches --rows");
  const auto runs = ablate(cfg, Taxonomy::default_taxonomy(), grid, seeds, {out_dir, log_epoch});
  nlohmann::json all = nlohmann::json::array();
  for (const auto& run : runs) {
    const fs::path dir = out_dir / ("seed" + std::to_string(run.seed)) / run.row;
    write_json(dir / "run_record.json", to_json(run.record));
    write_text(dir / "curves.csv", curves_csv(run.record));
  }
  write_text(out_dir / "ablation.csv", ablation_csv(runs));
  const std::string summary = summary_csv(summarize(runs));
  write_text(out_dir / "summary.csv", summary);
  std::cout << summary;
  return 0;
}

int cmd_diagnose(const Common& c, const std::string& checkpoint, const std::string& out) {
  const RunConfig cfg = resolve(c);
  const DataBundle db = obtain_data(c, cfg);
  const TrainingContext ctx = make_context(*db.tax, cfg, db.data);
  // the initial classifier rows come from a fresh model with the same seed
  const Tensor rows_at_init = make_detector(ctx, cfg)->hoi_classifier();
  auto det = make_detector(ctx, cfg);
  load_checkpoint(checkpoint, *det);
  const auto preds = predict_all(*det, *db.tax, db.data.test, forward_options(cfg), cfg.eval_top_k);
  const EvalReport rep = evaluate(*db.tax, preds, db.data.test, ctx.train_counts);
  const BiasReport bias = diagnose(*det, ctx, cfg, db.data.test, rows_at_init, rep);
  const auto j = to_json(bias);
  if (out.empty()) std::cout << j.dump(2) << "\n";
  else write_json(out, j);
  return 0;
}

int cmd_cluster_export(const Common& c, const std::string& out) {
  const RunConfig cfg = resolve(c);
  const Taxonomy tax = Taxonomy::default_taxonomy();
  const Dataset empty;
  const TrainingContext ctx = make_context(tax, cfg, empty);
  const auto j = superclasses_to_json(tax, ctx.superclasses);
  if (out.empty()) std::cout << j.dump(2) << "\n";
  else write_json(out, j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Debiased HOI detection on synthetic scenes"};
  app.require_subcommand(1);

  Common gen_c, train_c, eval_c, abl_c, diag_c, clu_c;
  std::string gen_out, eval_ckpt, eval_preds, eval_out, eval_dump, diag_ckpt, diag_out, clu_out;
  std::string train_dir, abl_dir;
  std::vector<std::uint64_t> abl_seeds;
  std::vector<std::string> abl_rows;
  bool known_object = false;

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
  add_common(gen, gen_c, false);
  gen->add_option("--out", gen_out, "dataset JSON path")->required();

  auto* tr = app.add_subcommand("train", "train one model");
  add_common(tr, train_c, true);
  tr->add_option("--out-dir", train_dir, "output directory")->required();
  tr->add_option("--data", train_c.data_path, "dataset from 'generate' (default: generate from the seed)");

  auto* ev = app.add_subcommand("eval", "mAP of a checkpoint or a predictions file on the test split");
  add_common(ev, eval_c, false);
  ev->add_option("--data", eval_c.data_path, "dataset file");
  ev->add_option("--checkpoint", eval_ckpt, "model checkpoint");
  ev->add_option("--predictions", eval_preds, "predictions (.json array or .jsonl)");
  ev->add_option("--dump-predictions", eval_dump, "write the scored predictions here");
  ev->add_flag("--known-object", known_object, "Known-Object setting");
  ev->add_option("--out", eval_out, "report path (default: stdout)");

  auto* ab = app.add_subcommand("ablate", "incremental objective grid");
  add_common(ab, abl_c, true);
  ab->add_option("--out-dir", abl_dir, "output directory")->required();
  ab->add_option("--extra-seeds", abl_seeds, "further seeds to repeat the grid with");
  ab->add_option("--rows", abl_rows, "subset of rows: baseline +hor_mask +contrastive +calibration +merge +split");

  auto* dg = app.add_subcommand("diagnose", "sibling-bias statistics of a checkpoint");
  add_common(dg, diag_c, false);
  dg->add_option("--data", diag_c.data_path, "dataset file");
  dg->add_option("--checkpoint", diag_ckpt, "model checkpoint")->required();
  dg->add_option("--out", diag_out, "report path (default: stdout)");

  auto* cl = app.add_subcommand("cluster-export", "superclass assignment as JSON");
  add_common(cl, clu_c, false);
  cl->add_option("--out", clu_out, "output path (default: stdout)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_generate(gen_c, gen_out);
    if (*tr) return cmd_train(train_c, train_dir);
    if (*ev) return cmd_eval(eval_c, eval_ckpt, eval_preds, known_object, eval_out, eval_dump);
    if (*ab) return cmd_ablate(abl_c, abl_dir, abl_seeds, abl_rows);
    if (*dg) return cmd_diagnose(diag_c, diag_ckpt, diag_out);
    if (*cl) return cmd_cluster_export(clu_c, clu_out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
