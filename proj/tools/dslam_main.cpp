#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dslam/evaluation.hpp"
#include "dslam/export.hpp"
#include "dslam/training.hpp"

using namespace dslam;
using json = nlohmann::ordered_json;

namespace {

struct GlobalArgs {
  std::string config;
  uint64_t seed = 0;
  bool has_seed = false;
  std::string out_dir;
};

TrainConfig base_config(const GlobalArgs& g) {
  TrainConfig cfg;
  if (!g.config.empty()) cfg = load_train_config(g.config);
  if (g.has_seed) cfg.seed = g.seed;
  if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
  return cfg;
}

std::vector<uint64_t> parse_seeds(const std::string& text) {
  std::vector<uint64_t> seeds;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    size_t used = 0;
    seeds.push_back(std::stoull(tok, &used));
    if (used != tok.size()) throw std::invalid_argument("bad seed list entry: " + tok);
  }
  if (seeds.empty()) throw std::invalid_argument("empty seed list");
  return seeds;
}

void write_steps_csv(const std::string& path, const RolloutResult& rr) {
  std::ostringstream csv;
  csv << "t,a,n_eff,sigma_x2,sigma_y2,score,resampled,selected,gt_label,"
         "gt_x,gt_y,gt_theta,est_x,est_y,est_theta\n";
  for (const StepRecord& s : rr.steps) {
    csv << fmt_num(s.t) << "," << fmt_num(s.a) << "," << fmt_num(s.n_eff) << ","
        << fmt_num(s.sigma_x2) << "," << fmt_num(s.sigma_y2) << "," << fmt_num(s.score) << ","
        << (s.resampled ? 1 : 0) << "," << s.selected << "," << (s.gt_label ? 1 : 0) << ","
        << fmt_num(s.gt.x) << "," << fmt_num(s.gt.y) << "," << fmt_num(s.gt.theta) << ","
        << fmt_num(s.est.x) << "," << fmt_num(s.est.y) << "," << fmt_num(s.est.theta) << "\n";
  }
  write_text(path, csv.str());
}

std::vector<TrajectoryPoint> stamped(const RolloutResult& rr, bool ground_truth) {
  std::vector<TrajectoryPoint> out;
  for (const StepRecord& s : rr.steps) out.push_back({s.t, ground_truth ? s.gt : s.est});
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (first) {
      table.header = cells;
      first = false;
    } else {
      if (cells.size() != table.header.size())
        throw std::runtime_error("ragged CSV row in " + path);
      table.rows.push_back(cells);
    }
  }
  if (table.header.empty() || table.rows.empty())
    throw std::runtime_error("empty CSV " + path);
  return table;
}

std::vector<double> csv_column(const CsvTable& table, const std::string& name,
                               const std::string& path) {
  size_t idx = table.header.size();
  for (size_t i = 0; i < table.header.size(); i++)
    if (table.header[i] == name) idx = i;
  if (idx == table.header.size())
    throw std::runtime_error("no column '" + name + "' in " + path);
  std::vector<double> out;
  for (const auto& row : table.rows) {
    size_t used = 0;
    out.push_back(std::stod(row[idx], &used));
    if (used != row[idx].size())
      throw std::runtime_error("non-numeric cell in column '" + name + "' of " + path);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"2D lidar SLAM workbench with a learned degeneracy factor"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalArgs g;
  auto* seed_opt = app.add_option("--seed", g.seed, "override the config seed");
  app.add_option("--config", g.config, "JSON config file");
  app.add_option("--out-dir", g.out_dir, "override the output directory");

  auto* gen = app.add_subcommand("gen-world", "generate a world file");
  std::string gen_kind = "room";
  WorldGenParams gp;
  std::string gen_name = "world.json";
  gen->add_option("--kind", gen_kind, "room | corridor | mixed")
      ->check(CLI::IsMember({"room", "corridor", "mixed"}));
  gen->add_option("--resolution", gp.resolution, "cell size in meters");
  gen->add_option("--room-w", gp.room_w);
  gen->add_option("--room-h", gp.room_h);
  gen->add_option("--obstacles", gp.obstacles);
  gen->add_option("--corridor-len", gp.corridor_len);
  gen->add_option("--corridor-width", gp.corridor_width);
  gen->add_option("--corridor-features", gp.corridor_features,
                  "wall notches inside the corridor");
  gen->add_option("--name", gen_name, "output file name inside out-dir");

  auto* sim = app.add_subcommand("simulate", "run one SLAM rollout and dump its artifacts");
  std::string sim_mode = "vanilla", sim_ckpt, sim_world;
  int sim_steps = 0;
  sim->add_option("--mode", sim_mode, "doa | vanilla | analytic-baseline | constant:<a>");
  sim->add_option("--checkpoint", sim_ckpt, "agent checkpoint for doa mode");
  sim->add_option("--world", sim_world, "world JSON path (overrides config)");
  sim->add_option("--timesteps", sim_steps);

  auto* tr = app.add_subcommand("train", "train the degeneracy agent");
  std::string tr_world, tr_ablation, tr_source, tr_freeze;
  int tr_eps = 0;
  tr->add_option("--world", tr_world, "world JSON path (overrides config)");
  tr->add_option("--episodes", tr_eps);
  tr->add_option("--ablation", tr_ablation, "preset tag E1..E6");
  tr->add_option("--source-checkpoint", tr_source);
  tr->add_option("--freeze-scope", tr_freeze, "none | backbone | backbone+neck");

  auto* tf = app.add_subcommand("transfer", "fine-tune from a source checkpoint");
  std::string tf_source, tf_world, tf_freeze;
  int tf_eps = 0;
  tf->add_option("--source", tf_source, "source checkpoint")->required();
  tf->add_option("--world", tf_world, "world JSON path (overrides config)");
  tf->add_option("--episodes", tf_eps);
  tf->add_option("--freeze-scope", tf_freeze, "none | backbone | backbone+neck");

  auto* ev = app.add_subcommand("eval", "batch evaluation over seeds");
  std::string ev_mode = "vanilla", ev_ckpt, ev_seeds, ev_world;
  double ev_threshold = 0.75;
  int ev_steps = 0;
  ev->add_option("--mode", ev_mode, "doa | vanilla | analytic-baseline | constant:<a>");
  ev->add_option("--checkpoint", ev_ckpt);
  ev->add_option("--seeds", ev_seeds, "comma-separated seed list (default: the global seed)");
  ev->add_option("--threshold", ev_threshold, "detection threshold");
  ev->add_option("--world", ev_world, "world JSON path (overrides config)");
  ev->add_option("--timesteps", ev_steps);

  auto* de = app.add_subcommand("detect", "factor series and detection metrics for one rollout");
  std::string de_mode = "analytic-baseline", de_ckpt, de_world;
  double de_threshold = 0.75;
  int de_steps = 0;
  de->add_option("--mode", de_mode, "doa | vanilla | analytic-baseline | constant:<a>");
  de->add_option("--checkpoint", de_ckpt);
  de->add_option("--threshold", de_threshold);
  de->add_option("--world", de_world, "world JSON path (overrides config)");
  de->add_option("--timesteps", de_steps);

  auto* pl = app.add_subcommand("plot", "render CSV columns to an SVG chart");
  std::vector<std::string> pl_inputs;
  std::string pl_x, pl_y, pl_out = "plot.svg", pl_title;
  bool pl_no_band = false;
  pl->add_option("inputs", pl_inputs, "CSV files")->required();
  pl->add_option("--x", pl_x, "x column name (default: first column)");
  pl->add_option("--y", pl_y, "y column name (default: second column)");
  pl->add_option("--out", pl_out, "output file name inside out-dir");
  pl->add_option("--title", pl_title);
  pl->add_flag("--no-band", pl_no_band, "always one polyline per input");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  g.has_seed = seed_opt->count() > 0;

  try {
    if (app.got_subcommand(gen)) {
      const uint64_t seed = g.has_seed ? g.seed : 1;
      const std::string out_dir = g.out_dir.empty() ? "out" : g.out_dir;
      std::filesystem::create_directories(out_dir);
      const WorldModel world = generate_world(gen_kind, gp, seed);
      const std::string path = out_dir + "/" + gen_name;
      save_world(world, path);
      json cfg;
      cfg["kind"] = gen_kind;
      cfg["seed"] = seed;
      cfg["params"] = {{"resolution", gp.resolution},     {"room_w", gp.room_w},
                       {"room_h", gp.room_h},             {"obstacles", gp.obstacles},
                       {"corridor_len", gp.corridor_len}, {"corridor_width", gp.corridor_width},
                       {"corridor_features", gp.corridor_features}};
      cfg["output"] = path;
      write_manifest(out_dir, "gen-world", cfg);
      std::printf("wrote %s (%d x %d cells, %zu waypoints, %zu degenerate regions)\n",
                  path.c_str(), world.grid.geom.width, world.grid.geom.height,
                  world.waypoints.size(), world.degenerate_regions.size());
    } else if (app.got_subcommand(sim)) {
      TrainConfig cfg = base_config(g);
      if (!sim_world.empty()) cfg.world.path = sim_world;
      if (sim_steps > 0) cfg.rollout.timesteps = sim_steps;
      const WorldModel world = resolve_world(cfg.world);
      auto source = make_action_source(sim_mode, sim_ckpt);
      const RolloutResult rr = run_rollout(world, cfg.rollout, *source, cfg.seed);
      std::filesystem::create_directories(cfg.out_dir);
      write_pgm(rr.map, cfg.out_dir + "/map.pgm");
      write_trajectory(cfg.out_dir + "/est.tum", stamped(rr, false));
      write_trajectory(cfg.out_dir + "/gt.tum", stamped(rr, true));
      write_steps_csv(cfg.out_dir + "/steps.csv", rr);
      json manifest_cfg = train_config_to_json(cfg);
      manifest_cfg["mode"] = sim_mode;
      manifest_cfg["checkpoint"] = sim_ckpt;
      write_manifest(cfg.out_dir, "simulate", manifest_cfg);
      std::printf("%d steps: ate %.4f m, resamples %d, mean n_eff %.1f\n",
                  (int)rr.steps.size(), rr.ate_rmse, rr.resamples, rr.mean_neff);
    } else if (app.got_subcommand(tr) || app.got_subcommand(tf)) {
      const bool transfer = app.got_subcommand(tf);
      TrainConfig cfg = base_config(g);
      const std::string& world_flag = transfer ? tf_world : tr_world;
      const int eps_flag = transfer ? tf_eps : tr_eps;
      const std::string& freeze_flag = transfer ? tf_freeze : tr_freeze;
      if (!world_flag.empty()) cfg.world.path = world_flag;
      if (eps_flag > 0) cfg.episodes = eps_flag;
      if (!freeze_flag.empty()) cfg.freeze_scope = freeze_flag;
      if (transfer) {
        cfg.source_checkpoint = tf_source;
        if (cfg.freeze_scope.empty() || cfg.freeze_scope == "none") cfg.freeze_scope = "backbone";
      } else {
        if (!tr_ablation.empty()) cfg.ablation_tag = tr_ablation;
        if (!tr_source.empty()) cfg.source_checkpoint = tr_source;
      }
      apply_ablation(cfg);
      std::filesystem::create_directories(cfg.out_dir);
      write_manifest(cfg.out_dir, transfer ? "transfer" : "train", train_config_to_json(cfg));
      const TrainResult res = train(cfg);
      std::printf("trained %d episodes; best episode %d (mean step reward %.4f)\n",
                  (int)res.logs.size(), res.best_episode, res.best_mean_reward);
      std::printf("checkpoints: %s %s\n", res.best_checkpoint.c_str(),
                  res.final_checkpoint.c_str());
    } else if (app.got_subcommand(ev)) {
      TrainConfig cfg = base_config(g);
      if (!ev_world.empty()) cfg.world.path = ev_world;
      if (ev_steps > 0) cfg.rollout.timesteps = ev_steps;
      EvalConfig ec;
      ec.mode = ev_mode;
      ec.checkpoint = ev_ckpt;
      ec.world = cfg.world;
      ec.rollout = cfg.rollout;
      ec.detection_threshold = ev_threshold;
      ec.out_dir = cfg.out_dir;
      ec.seeds = ev_seeds.empty() ? std::vector<uint64_t>{cfg.seed} : parse_seeds(ev_seeds);
      json manifest_cfg = train_config_to_json(cfg);
      manifest_cfg["mode"] = ec.mode;
      manifest_cfg["checkpoint"] = ec.checkpoint;
      manifest_cfg["seeds"] = ec.seeds;
      manifest_cfg["detection_threshold"] = ec.detection_threshold;
      std::filesystem::create_directories(ec.out_dir);
      write_manifest(ec.out_dir, "eval", manifest_cfg);
      const EvalResult res = run_eval(ec);
      std::fputs(res.csv.c_str(), stdout);
    } else if (app.got_subcommand(de)) {
      TrainConfig cfg = base_config(g);
      if (!de_world.empty()) cfg.world.path = de_world;
      if (de_steps > 0) cfg.rollout.timesteps = de_steps;
      const WorldModel world = resolve_world(cfg.world);
      auto source = make_action_source(de_mode, de_ckpt);
      const RolloutResult rr = run_rollout(world, cfg.rollout, *source, cfg.seed);
      const std::vector<DetectionFrame> frames = detection_series(rr);
      const DetectionMetrics m = detection_metrics(frames, de_threshold);
      std::filesystem::create_directories(cfg.out_dir);
      std::ostringstream csv;
      csv << "t,factor,gt_label\n";
      PlotSeries factor{"factor", {}, {}}, label{"degenerate region", {}, {}};
      int positives = 0;
      for (const DetectionFrame& f : frames) {
        csv << fmt_num(f.t) << "," << fmt_num(f.factor) << "," << (f.gt_label ? 1 : 0) << "\n";
        factor.x.push_back(f.t);
        factor.y.push_back(f.factor);
        label.x.push_back(f.t);
        label.y.push_back(f.gt_label ? 1.0 : 0.0);
        positives += f.gt_label ? 1 : 0;
      }
      write_text(cfg.out_dir + "/detect.csv", csv.str());
      write_svg_plot(cfg.out_dir + "/detect.svg", {factor, label}, "degeneracy factor",
                     "time [s]", "factor", /*band=*/false);
      json metrics;
      metrics["success_ratio"] = m.success_ratio;
      metrics["fp"] = m.fp;
      metrics["fn"] = m.fn;
      metrics["frames"] = frames.size();
      metrics["degenerate_frames"] = positives;
      metrics["threshold"] = de_threshold;
      write_text(cfg.out_dir + "/detect_metrics.json", metrics.dump(1) + "\n");
      json manifest_cfg = train_config_to_json(cfg);
      manifest_cfg["mode"] = de_mode;
      manifest_cfg["checkpoint"] = de_ckpt;
      manifest_cfg["detection_threshold"] = de_threshold;
      write_manifest(cfg.out_dir, "detect", manifest_cfg);
      std::printf("success ratio %.1f%% (fp %d, fn %d) over %d frames, %d degenerate\n",
                  100.0 * m.success_ratio, m.fp, m.fn, (int)frames.size(), positives);
    } else if (app.got_subcommand(pl)) {
      std::vector<PlotSeries> series;
      std::string x_name, y_name;
      for (const std::string& input : pl_inputs) {
        const CsvTable table = read_csv(input);
        x_name = pl_x.empty() ? table.header.at(0) : pl_x;
        y_name = pl_y.empty() ? table.header.at(1) : pl_y;
        PlotSeries s;
        s.label = std::filesystem::path(input).stem().string();
        s.x = csv_column(table, x_name, input);
        s.y = csv_column(table, y_name, input);
        series.push_back(std::move(s));
      }
      const std::string out_dir = g.out_dir.empty() ? "." : g.out_dir;
      std::filesystem::create_directories(out_dir);
      const std::string path = out_dir + "/" + pl_out;
      write_svg_plot(path, series, pl_title.empty() ? y_name : pl_title, x_name, y_name,
                     !pl_no_band);
      std::printf("wrote %s\n", path.c_str());
    }
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
