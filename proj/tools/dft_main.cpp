// dft: train and dissect deep-supervised fine-tuning on toy transformers.
//
// Subcommands map one-to-one onto library operations: gen-data, train,
// profile-entropy, evaluate, align, project, ablate, plot. Every run is
// seeded and reproduces byte-identical artifacts.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "dft/entropy.hpp"
#include "dft/error.hpp"
#include "dft/eval.hpp"
#include "dft/model.hpp"
#include "dft/supervision.hpp"
#include "dft/syndata.hpp"
#include "dft/trainer.hpp"
#include "dft/util/hash.hpp"
#include "dft/util/io.hpp"
#include "dft/util/svg.hpp"

using json = nlohmann::ordered_json;
using namespace dft;

namespace {

syndata::Split parse_split(const std::string& s) {
  if (s == "train") return syndata::Split::Train;
  if (s == "dev") return syndata::Split::Dev;
  if (s == "test") return syndata::Split::Test;
  fail(ErrorKind::Config, "unknown split '" + s + "'");
}

std::vector<std::vector<int>> split_sequences(const syndata::Dataset& ds, syndata::Split split) {
  std::vector<std::vector<int>> corpus;
  for (const auto* ex : ds.split_view(split)) {
    std::vector<int> seq = ex->x_tgt;
    seq.insert(seq.end(), ex->y_tgt.begin(), ex->y_tgt.end());
    corpus.push_back(std::move(seq));
  }
  if (corpus.empty())
    fail(ErrorKind::Value, std::string("split '") + syndata::to_string(split) + "' is empty");
  return corpus;
}

// ---------------------------------------------------------------------- gen-data

struct GenDataArgs {
  std::string task = "kv";
  int vocab = 256;
  int train = 1024, dev = 128, test = 128;
  std::uint64_t seed = 0, language_seed = 1;
  int payload_min = 2, payload_max = 4;
  int max_total_len = 64;
  std::string out;
};

int run_gen_data(const GenDataArgs& a) {
  syndata::TaskSpec spec;
  spec.kind = syndata::task_from_string(a.task);
  spec.vocab = a.vocab;
  spec.payload_min = a.payload_min;
  spec.payload_max = a.payload_max;
  spec.max_total_len = a.max_total_len;
  spec.seed = a.seed;
  auto lang = syndata::make_language(a.language_seed, a.vocab);
  auto ds = syndata::generate(spec, lang, {a.train, a.dev, a.test});
  syndata::write_dataset(ds, a.out);
  std::cout << "wrote " << ds.entries.size() << " examples to " << a.out << " (hash "
            << hex64(hash_file(a.out)) << ")\n";
  return 0;
}

// ---------------------------------------------------------------------- train

int run_train(const std::string& config_path, const std::string& out_dir_flag,
              const std::string& resume_path) {
  const std::string config_text = read_file(config_path);
  model::ModelConfig model_cfg;
  std::string data_path;
  trainer::TrainConfig cfg = trainer::parse_train_config_json(config_text, &model_cfg, &data_path);
  model_cfg.validate();
  cfg.validate(model_cfg);

  std::string out_dir = out_dir_flag;
  if (out_dir.empty()) {
    json j = json::parse(config_text);
    out_dir = j.value("out_dir", std::string("run"));
  }
  make_dirs(out_dir);
  cfg.out_dir = out_dir;

  auto dataset = syndata::read_dataset(data_path);
  if (dataset.vocab != model_cfg.vocab)
    fail(ErrorKind::Config, "dataset vocab " + std::to_string(dataset.vocab) +
                                " does not match model vocab " + std::to_string(model_cfg.vocab));

  model::ModelParams params;
  trainer::AdamState state;
  int start_step = 0;
  if (!resume_path.empty()) {
    params = model::load_checkpoint(resume_path);
    if (cfg.optimizer.kind != trainer::OptKind::Adam)
      fail(ErrorKind::Config, "resume requires the adam optimizer state");
    state = trainer::load_optimizer_state(resume_path + ".opt", params);
    start_step = static_cast<int>(state.t);
  } else {
    params = model::init_params(model_cfg, cfg.seed);
    state = trainer::make_adam_state(params);
  }
  const std::string init_hash = hex64(params.content_hash());

  write_file(out_dir + "/config.json", config_text);
  auto result = trainer::train(cfg, dataset, params, &state, start_step);
  write_file(out_dir + "/metrics.jsonl", result.metrics.as_jsonl());

  json manifest;
  manifest["config_copy"] = "config.json";
  manifest["config_hash"] = hex64(Hasher().update(config_text).digest());
  manifest["data_path"] = data_path;
  manifest["dataset_hash"] = hex64(hash_file(data_path));
  manifest["init_hash"] = init_hash;
  manifest["seed"] = cfg.seed;
  manifest["method"] = trainer::to_string(cfg.method);
  manifest["supervision"] = {{"lc_mode", supervision::to_string(cfg.supervision.lc_mode)},
                             {"et_mode", supervision::to_string(cfg.supervision.et_mode)},
                             {"layer_i", cfg.supervision.layer_i},
                             {"layer_j", cfg.supervision.layer_j},
                             {"weight_lc", cfg.supervision.weight_lc},
                             {"weight_et", cfg.supervision.weight_et}};
  manifest["status"] = result.status == trainer::TrainStatus::Completed ? "completed" : "diverged";
  manifest["steps"] = result.steps_run;
  manifest["final_checkpoint"] = out_dir + "/final.ckpt";
  manifest["metrics"] = out_dir + "/metrics.jsonl";
  write_file(out_dir + "/manifest.json", manifest.dump(2) + "\n");

  if (result.status != trainer::TrainStatus::Completed)
    fail(ErrorKind::Value, "training diverged at step " + std::to_string(result.steps_run) +
                               "; last good state kept in " + out_dir);
  std::cout << "trained " << result.steps_run << " steps; checkpoint " << out_dir << "/final.ckpt"
            << " (manifest " << out_dir << "/manifest.json)\n";
  return 0;
}

// ---------------------------------------------------------------------- evaluate

int run_evaluate(const std::string& checkpoint, const std::string& manifest_path, std::string data_path,
                 const std::string& split, std::optional<int> layer_i, std::optional<int> layer_j,
                 const std::string& out_prefix) {
  std::string ckpt_path = checkpoint;
  if (!manifest_path.empty()) {
    json manifest = json::parse(read_file(manifest_path));
    if (ckpt_path.empty()) ckpt_path = manifest.at("final_checkpoint").get<std::string>();
    if (data_path.empty()) data_path = manifest.at("data_path").get<std::string>();
    if (!layer_i && manifest.contains("supervision")) {
      const json& s = manifest["supervision"];
      if (s.value("lc_mode", "none") != "none") layer_i = s.value("layer_i", -1);
      if (s.value("et_mode", "none") != "none") layer_j = s.value("layer_j", -1);
    }
  }
  if (ckpt_path.empty()) fail(ErrorKind::Config, "evaluate needs --checkpoint or --manifest");
  if (data_path.empty()) fail(ErrorKind::Config, "evaluate needs --data or a manifest with data_path");

  auto params = model::load_checkpoint(ckpt_path);
  auto dataset = syndata::read_dataset(data_path);
  eval::EvalOptions options;
  options.layer_i = layer_i;
  options.layer_j = layer_j;
  auto report = eval::evaluate(params, dataset, parse_split(split), options);
  write_file(out_prefix + ".txt", report.as_text());
  write_file(out_prefix + ".jsonl", report.as_jsonl());
  std::cout << report.as_text();
  return 0;
}

// ---------------------------------------------------------------------- profile-entropy

int run_profile(const std::string& checkpoint, const std::string& data_path, const std::string& split,
                int window, double min_drop_fraction, const std::string& out_prefix) {
  auto params = model::load_checkpoint(checkpoint);
  auto dataset = syndata::read_dataset(data_path);
  auto corpus = split_sequences(dataset, parse_split(split));
  auto profile = entropy::profile(params, corpus);
  entropy::annotate(profile, window, min_drop_fraction);

  write_file(out_prefix + ".txt", entropy::profile_as_text(profile));
  write_file(out_prefix + ".heatmap.csv", entropy::heatmap_as_csv(profile));
  svg::Series series;
  series.label = "mean entropy (nats)";
  for (std::size_t k = 0; k < profile.per_layer.size(); ++k) {
    series.xs.push_back(static_cast<double>(k));
    series.ys.push_back(profile.per_layer[k]);
  }
  write_file(out_prefix + ".svg", svg::line_chart("per-layer entropy", "layer", "entropy", {series}));
  std::cout << entropy::profile_as_text(profile);
  return 0;
}

// ---------------------------------------------------------------------- align

int run_align(const std::string& checkpoint, const std::string& data_path, const std::string& split,
              const std::string& out_prefix) {
  auto params = model::load_checkpoint(checkpoint);
  auto dataset = syndata::read_dataset(data_path);
  auto view = dataset.split_view(parse_split(split));
  if (view.empty()) fail(ErrorKind::Value, "split '" + split + "' is empty");
  auto curve = eval::alignment_curve(params, view);

  std::string text = "layer mean_cosine\n";
  std::string jsonl;
  svg::Series series;
  series.label = "parallel cosine";
  for (std::size_t k = 0; k < curve.mean_cosine.size(); ++k) {
    text += strprintf("%zu %.12f\n", k, curve.mean_cosine[k]);
    json j = {{"layer", k}, {"mean_cosine", curve.mean_cosine[k]}, {"pairs", curve.pairs}};
    jsonl += j.dump() + "\n";
    series.xs.push_back(static_cast<double>(k));
    series.ys.push_back(curve.mean_cosine[k]);
  }
  write_file(out_prefix + ".txt", text);
  write_file(out_prefix + ".jsonl", jsonl);
  write_file(out_prefix + ".svg",
             svg::line_chart("parallel representation alignment", "layer", "mean cosine", {series}));
  std::cout << text;
  return 0;
}

// ---------------------------------------------------------------------- project

int run_project(const std::string& checkpoint, const std::string& data_path, const std::string& split,
                int layer, const std::string& out_prefix) {
  auto params = model::load_checkpoint(checkpoint);
  auto dataset = syndata::read_dataset(data_path);
  auto view = dataset.split_view(parse_split(split));
  if (view.empty()) fail(ErrorKind::Value, "split '" + split + "' is empty");
  if (layer < 0 || layer > params.config.n_layers)
    fail(ErrorKind::Index, "layer " + std::to_string(layer) + " outside [0, " +
                               std::to_string(params.config.n_layers) + "]");

  ad::NoGradGuard no_grad;
  std::vector<std::vector<double>> points;
  std::vector<std::string> labels;
  for (const auto* ex : view) {
    for (const auto& [tokens, label] :
         {std::pair{&ex->x_en, "en"}, std::pair{&ex->x_tgt, "tgt"}}) {
      auto r = model::forward(params, *tokens);
      const auto& h = r.acts.h[layer];
      const int T = h.rows(), d = h.cols();
      std::vector<double> pooled(d, 0.0);
      for (int t = 0; t < T; ++t)
        for (int j = 0; j < d; ++j) pooled[j] += h.data()[t * d + j];
      for (double& v : pooled) v /= T;
      points.push_back(std::move(pooled));
      labels.push_back(label);
    }
  }
  auto projection = eval::project_2d(points, labels);

  std::string jsonl;
  std::vector<svg::ScatterPoint> scatter;
  for (std::size_t i = 0; i < projection.coords.size(); ++i) {
    json j = {{"x", projection.coords[i][0]},
              {"y", projection.coords[i][1]},
              {"lang", projection.labels[i]},
              {"layer", layer}};
    jsonl += j.dump() + "\n";
    scatter.push_back({projection.coords[i][0], projection.coords[i][1], projection.labels[i]});
  }
  write_file(out_prefix + ".jsonl", jsonl);
  write_file(out_prefix + ".svg",
             svg::scatter_chart(strprintf("pooled representations, layer %d", layer), scatter));
  std::cout << "projected " << projection.coords.size() << " pooled sentence representations at layer "
            << layer << "\n";
  return 0;
}

// ---------------------------------------------------------------------- ablate

int run_ablate(const std::string& config_path, const std::string& out_dir) {
  const std::string text = read_file(config_path);
  std::string data_path;
  auto cfg = eval::parse_ablation_config_json(text, &data_path);
  auto dataset = syndata::read_dataset(data_path);
  make_dirs(out_dir);
  auto outcome = eval::run_ablation(cfg, dataset);

  write_file(out_dir + "/ablation.txt", outcome.table_text());
  write_file(out_dir + "/rows.jsonl", outcome.rows_jsonl());
  if (!outcome.sweep.empty()) {
    write_file(out_dir + "/sweep.jsonl", outcome.sweep_jsonl());
    std::vector<std::string> categories;
    svg::Series bars;
    bars.label = "answer token accuracy";
    for (const auto& p : outcome.sweep) {
      categories.push_back("L" + std::to_string(p.layer));
      bars.ys.push_back(p.token_accuracy);
    }
    std::vector<std::pair<std::string, double>> refs;
    for (const auto& row : outcome.rows)
      if (row.name == "tft") refs.emplace_back("tft", row.report.token_accuracy);
    write_file(out_dir + "/sweep.svg",
               svg::bar_chart("reasoning-stage supervision layer sweep", categories, {bars},
                              "token accuracy", refs));
  }
  std::cout << outcome.table_text();
  return 0;
}

// ---------------------------------------------------------------------- plot

int run_plot(const std::string& kind, const std::string& input, const std::string& output) {
  if (kind == "entropy") {
    // profile text: "layer mean_entropy drop_magnitude" records
    std::string text = read_file(input);
    svg::Series series;
    series.label = "mean entropy (nats)";
    std::size_t pos = 0;
    while (pos < text.size()) {
      const std::size_t eol = text.find('\n', pos);
      const std::string line = text.substr(pos, eol - pos);
      pos = eol == std::string::npos ? text.size() : eol + 1;
      int layer;
      double e, mag;
      if (std::sscanf(line.c_str(), "%d %lf %lf", &layer, &e, &mag) == 3) {
        series.xs.push_back(layer);
        series.ys.push_back(e);
      }
    }
    if (series.xs.empty()) fail(ErrorKind::Parse, "no profile records in " + input);
    write_file(output, svg::line_chart("per-layer entropy", "layer", "entropy", {series}));
  } else if (kind == "metrics") {
    svg::Series total, tft;
    total.label = "total";
    tft.label = "l_tft";
    std::string text = read_file(input);
    std::size_t pos = 0;
    while (pos < text.size()) {
      const std::size_t eol = text.find('\n', pos);
      const std::string line = text.substr(pos, eol - pos);
      pos = eol == std::string::npos ? text.size() : eol + 1;
      if (line.empty()) continue;
      json j = json::parse(line);
      total.xs.push_back(j.at("step").get<double>());
      total.ys.push_back(j.at("total").get<double>());
      tft.xs.push_back(j.at("step").get<double>());
      tft.ys.push_back(j.at("l_tft").get<double>());
    }
    if (total.xs.empty()) fail(ErrorKind::Parse, "no metric records in " + input);
    write_file(output, svg::line_chart("training loss", "step", "loss", {total, tft}));
  } else if (kind == "sweep") {
    std::vector<std::string> categories;
    svg::Series bars;
    bars.label = "answer token accuracy";
    std::string text = read_file(input);
    std::size_t pos = 0;
    while (pos < text.size()) {
      const std::size_t eol = text.find('\n', pos);
      const std::string line = text.substr(pos, eol - pos);
      pos = eol == std::string::npos ? text.size() : eol + 1;
      if (line.empty()) continue;
      json j = json::parse(line);
      if (!j.contains("layer")) continue;
      categories.push_back("L" + std::to_string(j.at("layer").get<int>()));
      bars.ys.push_back(j.at("token_accuracy").get<double>());
    }
    if (categories.empty()) fail(ErrorKind::Parse, "no sweep records in " + input);
    write_file(output, svg::bar_chart("layer sweep", categories, {bars}, "token accuracy", {}));
  } else if (kind == "align") {
    svg::Series series;
    series.label = "parallel cosine";
    std::string text = read_file(input);
    std::size_t pos = 0;
    while (pos < text.size()) {
      const std::size_t eol = text.find('\n', pos);
      const std::string line = text.substr(pos, eol - pos);
      pos = eol == std::string::npos ? text.size() : eol + 1;
      if (line.empty()) continue;
      json j = json::parse(line);
      series.xs.push_back(j.at("layer").get<double>());
      series.ys.push_back(j.at("mean_cosine").get<double>());
    }
    if (series.xs.empty()) fail(ErrorKind::Parse, "no alignment records in " + input);
    write_file(output, svg::line_chart("parallel representation alignment", "layer", "mean cosine",
                                       {series}));
  } else {
    fail(ErrorKind::Config, "unknown plot kind '" + kind + "'");
  }
  std::cout << "wrote " << output << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deep-supervised fine-tuning workbench for toy transformers"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* cmd_gen = app.add_subcommand("gen-data", "generate a synthetic parallel dataset");
  cmd_gen->add_option("--task", gen.task, "copy|reverse|kv|modadd")->capture_default_str();
  cmd_gen->add_option("--vocab", gen.vocab)->capture_default_str();
  cmd_gen->add_option("--train", gen.train)->capture_default_str();
  cmd_gen->add_option("--dev", gen.dev)->capture_default_str();
  cmd_gen->add_option("--test", gen.test)->capture_default_str();
  cmd_gen->add_option("--seed", gen.seed)->capture_default_str();
  cmd_gen->add_option("--language-seed", gen.language_seed)->capture_default_str();
  cmd_gen->add_option("--payload-min", gen.payload_min)->capture_default_str();
  cmd_gen->add_option("--payload-max", gen.payload_max)->capture_default_str();
  cmd_gen->add_option("--max-total-len", gen.max_total_len)->capture_default_str();
  cmd_gen->add_option("--out", gen.out, "output dataset path")->required();

  std::string train_config, train_out_dir, train_resume;
  auto* cmd_train = app.add_subcommand("train", "train a model per a JSON config");
  cmd_train->add_option("--config", train_config)->required();
  cmd_train->add_option("--out-dir", train_out_dir, "overrides out_dir from the config");
  cmd_train->add_option("--resume", train_resume, "checkpoint to resume from (expects .opt beside it)");

  std::string eval_ckpt, eval_manifest, eval_data, eval_split = "test", eval_out = "report";
  int eval_layer_i = -1, eval_layer_j = -1;
  auto* cmd_eval = app.add_subcommand("evaluate", "decode and score a checkpoint on a split");
  cmd_eval->add_option("--checkpoint", eval_ckpt);
  cmd_eval->add_option("--manifest", eval_manifest, "run manifest; supplies checkpoint/data/layers");
  cmd_eval->add_option("--data", eval_data);
  cmd_eval->add_option("--split", eval_split)->capture_default_str();
  cmd_eval->add_option("--layer-i", eval_layer_i, "conversion-stage lens layer");
  cmd_eval->add_option("--layer-j", eval_layer_j, "reasoning-stage lens layer");
  cmd_eval->add_option("--out", eval_out, "output prefix")->capture_default_str();

  std::string prof_ckpt, prof_data, prof_split = "dev", prof_out = "entropy";
  int prof_window = 1;
  double prof_fraction = 0.1;
  auto* cmd_prof = app.add_subcommand("profile-entropy", "per-layer lens entropy profile");
  cmd_prof->add_option("--checkpoint", prof_ckpt)->required();
  cmd_prof->add_option("--data", prof_data)->required();
  cmd_prof->add_option("--split", prof_split)->capture_default_str();
  cmd_prof->add_option("--window", prof_window)->capture_default_str();
  cmd_prof->add_option("--min-drop-fraction", prof_fraction)->capture_default_str();
  cmd_prof->add_option("--out", prof_out, "output prefix")->capture_default_str();

  std::string align_ckpt, align_data, align_split = "dev", align_out = "align";
  auto* cmd_align = app.add_subcommand("align", "per-layer parallel representation cosine");
  cmd_align->add_option("--checkpoint", align_ckpt)->required();
  cmd_align->add_option("--data", align_data)->required();
  cmd_align->add_option("--split", align_split)->capture_default_str();
  cmd_align->add_option("--out", align_out, "output prefix")->capture_default_str();

  std::string proj_ckpt, proj_data, proj_split = "dev", proj_out = "projection";
  int proj_layer = 0;
  auto* cmd_proj = app.add_subcommand("project", "2-D projection of pooled representations");
  cmd_proj->add_option("--checkpoint", proj_ckpt)->required();
  cmd_proj->add_option("--data", proj_data)->required();
  cmd_proj->add_option("--split", proj_split)->capture_default_str();
  cmd_proj->add_option("--layer", proj_layer, "layer to read representations from")->required();
  cmd_proj->add_option("--out", proj_out, "output prefix")->capture_default_str();

  std::string abl_config, abl_out = "ablation";
  auto* cmd_abl = app.add_subcommand("ablate", "train and compare a method grid from one init");
  cmd_abl->add_option("--config", abl_config)->required();
  cmd_abl->add_option("--out-dir", abl_out)->capture_default_str();

  std::string plot_kind, plot_in, plot_out;
  auto* cmd_plot = app.add_subcommand("plot", "render a record file as SVG");
  cmd_plot->add_option("--kind", plot_kind, "entropy|metrics|sweep|align")->required();
  cmd_plot->add_option("--in", plot_in)->required();
  cmd_plot->add_option("--out", plot_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_gen->parsed()) return run_gen_data(gen);
    if (cmd_train->parsed()) return run_train(train_config, train_out_dir, train_resume);
    if (cmd_eval->parsed())
      return run_evaluate(eval_ckpt, eval_manifest, eval_data, eval_split,
                          eval_layer_i >= 0 ? std::optional<int>(eval_layer_i) : std::nullopt,
                          eval_layer_j >= 0 ? std::optional<int>(eval_layer_j) : std::nullopt, eval_out);
    if (cmd_prof->parsed()) return run_profile(prof_ckpt, prof_data, prof_split, prof_window,
                                               prof_fraction, prof_out);
    if (cmd_align->parsed()) return run_align(align_ckpt, align_data, align_split, align_out);
    if (cmd_proj->parsed()) return run_project(proj_ckpt, proj_data, proj_split, proj_layer, proj_out);
    if (cmd_abl->parsed()) return run_ablate(abl_config, abl_out);
    if (cmd_plot->parsed()) return run_plot(plot_kind, plot_in, plot_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: unexpected: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
