// Command-line driver: train policies, evaluate them, probe perturbation
// recovery, chain shape morphs and render traces.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cubes/env.hpp"
#include "cubes/net.hpp"
#include "cubes/ppo.hpp"
#include "cubes/render.hpp"
#include "cubes/runner.hpp"
#include "cubes/shape_io.hpp"
#include "json.hpp"

namespace {

namespace fs = std::filesystem;
using cubes::net::Arch;
using nlohmann::json;

// Worker count for evaluation, from the CUBES_THREADS environment variable.
int env_threads() {
  const char* v = std::getenv("CUBES_THREADS");
  if (!v) return 1;
  const int t = std::atoi(v);
  return t > 0 ? t : 1;
}

// The architecture flag names the family; kernels pick the concrete net.
// mr-cnn with 3x3 kernels carries rotation invariance only — asking for the
// mirrored streams on top is rejected by the net with the 3x3 explanation.
Arch resolve_arch(const std::string& name, int k, bool mirror) {
  if (name == "cnn") {
    if (mirror)
      throw CLI::ValidationError("--mirror",
                                 "the reference cnn has no mirrored streams");
    return Arch::Reference;
  }
  if (k == 5 || mirror) return Arch::MirrorRot;
  return Arch::RotInv;
}

cubes::env::TargetShape load_target(const std::string& path) {
  const cubes::io::Shape s = cubes::io::load_shape(path);
  return cubes::env::make_target(s.name, s.cells);
}

json eval_options_json(const cubes::run::EvalOptions& opt) {
  return json{{"episodes", opt.episodes},
              {"budget", opt.budget},
              {"radius", opt.radius},
              {"mode", opt.mode == cubes::run::ActionMode::Argmax ? "argmax"
                                                                  : "sample"},
              {"seed", opt.seed},
              {"threads", opt.threads}};
}

json net_config_json(const cubes::net::NetConfig& nc) {
  return json{{"arch", cubes::net::arch_name(nc.arch)},
              {"kernel", nc.k},
              {"widths", nc.widths},
              {"n_cubes", nc.n_cubes},
              {"canvas_side", nc.canvas_side},
              {"max_steps", nc.max_steps},
              {"shape", nc.shape_name}};
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    json config, const std::vector<uint64_t>& seeds,
                    const json& outputs,
                    const std::vector<std::string>& argv) {
  config["argv"] = argv;
  const std::string manifest = cubes::run::manifest_json(
      command, config.dump(), seeds, outputs.dump());
  cubes::io::atomic_write_file(out_dir + "/manifest.json", manifest);
}

struct TrainArgs {
  std::string shape_path;
  std::string arch = "mr-cnn";
  int kernel = 3;
  int layers = 2;
  bool mirror = false;
  int canvas = 19;
  int steps = 40000;
  int episode_steps = 300;
  uint64_t seed = 12345;
  std::string out;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv) {
  const cubes::env::TargetShape target = load_target(a.shape_path);
  cubes::net::NetConfig nc;
  nc.arch = resolve_arch(a.arch, a.kernel, a.mirror);
  nc.k = a.kernel;
  nc.widths = cubes::net::standard_widths(a.layers);
  nc.n_cubes = target.o_max();
  nc.canvas_side = a.canvas;
  nc.max_steps = a.episode_steps;
  nc.shape_name = target.name;

  cubes::env::EnvConfig ec;
  ec.target = target;
  ec.n_cubes = nc.n_cubes;
  ec.canvas_side = a.canvas;
  ec.max_steps = a.episode_steps;
  ec.connectivity = cubes::sim::ConnectivityMode::full();

  cubes::rl::PPOConfig pc;
  pc.total_steps = a.steps;
  pc.seed = a.seed;

  cubes::rl::Trainer<float> trainer(ec, nc, pc);
  std::cout << "training " << cubes::net::arch_name(nc.arch) << " k=" << nc.k
            << " layers=" << nc.conv_layers() << " on '" << target.name
            << "' for " << pc.total_steps << " steps -> " << a.out
            << std::endl;
  const cubes::rl::TrainSummary sum = trainer.run(a.out);

  const json config{{"shape_file", a.shape_path},
                    {"net", net_config_json(nc)},
                    {"connectivity", "full"},
                    {"ppo",
                     {{"total_steps", pc.total_steps},
                      {"n_envs", pc.n_envs},
                      {"steps_per_rollout", pc.steps_per_rollout},
                      {"epochs_per_update", pc.epochs_per_update},
                      {"minibatch_size", pc.minibatch_size},
                      {"learning_rate", pc.learning_rate},
                      {"clip_range", pc.clip_range},
                      {"discount", pc.discount},
                      {"gae_lambda", pc.gae_lambda},
                      {"value_coef", pc.value_coef},
                      {"entropy_coef", pc.entropy_coef},
                      {"max_grad_norm", pc.max_grad_norm},
                      {"checkpoint_every", pc.checkpoint_every},
                      {"seed", pc.seed}}}};
  const json outputs{{"checkpoint", sum.final_checkpoint},
                     {"metrics", sum.metrics_path}};
  write_manifest(a.out, "train", config, {a.seed}, outputs, argv);
  std::cout << "trained: updates=" << sum.updates
            << " env_steps=" << sum.env_steps << " episodes=" << sum.episodes
            << " last_success_rate=" << sum.last_success_rate << "\n"
            << "checkpoint: " << sum.final_checkpoint << std::endl;
  return 0;
}

struct EvalArgs {
  std::string ckpt;
  std::string shape_path;
  int episodes = 500;
  int budget = 0;
  int radius = -1;
  bool argmax = false;
  uint64_t seed = 1;
  int m = 1;
  std::string out;
};

cubes::run::EvalOptions to_options(const EvalArgs& a) {
  cubes::run::EvalOptions opt;
  opt.episodes = a.episodes;
  opt.budget = a.budget;
  opt.radius = a.radius;
  opt.mode = a.argmax ? cubes::run::ActionMode::Argmax
                      : cubes::run::ActionMode::Sample;
  opt.seed = a.seed;
  opt.threads = env_threads();
  return opt;
}

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  const auto policy = cubes::net::PolicyValueNet<float>::load_file(a.ckpt);
  const cubes::env::TargetShape target = load_target(a.shape_path);
  const cubes::run::EvalOptions opt = to_options(a);
  const cubes::run::EvalReport rep =
      cubes::run::evaluate(policy, target, opt);
  fs::create_directories(a.out);
  const std::string report = cubes::run::report_to_json(rep);
  cubes::io::atomic_write_file(a.out + "/report.json", report);
  const json config{{"checkpoint", a.ckpt},
                    {"shape_file", a.shape_path},
                    {"net", net_config_json(policy.config())},
                    {"options", eval_options_json(opt)}};
  write_manifest(a.out, "eval", config, {a.seed},
                 json{{"report", a.out + "/report.json"}}, argv);
  std::cout << report;
  return 0;
}

int cmd_perturb(const EvalArgs& a, const std::vector<std::string>& argv) {
  const auto policy = cubes::net::PolicyValueNet<float>::load_file(a.ckpt);
  const cubes::env::TargetShape target = load_target(a.shape_path);
  const cubes::run::EvalOptions opt = to_options(a);
  const cubes::run::EvalReport rep =
      cubes::run::perturb_eval(policy, target, a.m, opt);
  fs::create_directories(a.out);
  const std::string report = cubes::run::report_to_json(rep);
  cubes::io::atomic_write_file(a.out + "/report.json", report);
  const json config{{"checkpoint", a.ckpt},
                    {"shape_file", a.shape_path},
                    {"m", a.m},
                    {"net", net_config_json(policy.config())},
                    {"options", eval_options_json(opt)}};
  write_manifest(a.out, "perturb", config, {a.seed},
                 json{{"report", a.out + "/report.json"}}, argv);
  std::cout << report;
  return 0;
}

struct MorphArgs {
  std::vector<std::string> ckpts;
  std::string shape_path;
  std::string shapes_dir;
  int budget = 0;
  int radius = -1;
  bool argmax = false;
  uint64_t seed = 1;
  std::string out;
};

// Each checkpoint drives the ensemble toward the shape it was trained on;
// the shape file is looked up by that name next to the start shape (or in
// --shapes-dir).
int cmd_morph(const MorphArgs& a, const std::vector<std::string>& argv) {
  const cubes::io::Shape start = cubes::io::load_shape(a.shape_path);
  const std::string dir = a.shapes_dir.empty()
                              ? fs::path(a.shape_path).parent_path().string()
                              : a.shapes_dir;
  std::vector<cubes::net::PolicyValueNet<float>> policies;
  policies.reserve(a.ckpts.size());
  std::vector<cubes::run::MorphPhase<float>> phases;
  for (const std::string& ckpt : a.ckpts)
    policies.push_back(cubes::net::PolicyValueNet<float>::load_file(ckpt));
  for (const auto& policy : policies) {
    const std::string shape_file =
        dir + "/" + policy.config().shape_name + ".json";
    if (!fs::exists(shape_file))
      throw std::runtime_error(
          "morph: no shape file for checkpoint target '" +
          policy.config().shape_name + "' (looked for " + shape_file + ")");
    phases.push_back({&policy, load_target(shape_file)});
  }

  cubes::run::EvalOptions opt;
  opt.budget = a.budget;
  opt.radius = a.radius;
  opt.mode = a.argmax ? cubes::run::ActionMode::Argmax
                      : cubes::run::ActionMode::Sample;
  opt.seed = a.seed;
  const cubes::run::MorphReport rep =
      cubes::run::morph(phases, start.cells, opt);

  fs::create_directories(a.out);
  cubes::io::write_trace(rep.trace, a.out + "/trace.jsonl");
  const std::string report = cubes::run::morph_report_to_json(rep);
  cubes::io::atomic_write_file(a.out + "/report.json", report);
  json config{{"start_shape_file", a.shape_path},
              {"shapes_dir", dir},
              {"checkpoints", a.ckpts},
              {"budget", a.budget},
              {"radius", a.radius},
              {"mode", a.argmax ? "argmax" : "sample"},
              {"seed", a.seed}};
  write_manifest(a.out, "morph", config, {a.seed},
                 json{{"trace", a.out + "/trace.jsonl"},
                      {"report", a.out + "/report.json"}},
                 argv);
  std::cout << report;
  return 0;
}

struct RenderArgs {
  std::string trace_path;
  std::string format = "svg-frames";
  std::string out;
  int px = 24;
  bool labels = false;
  int delay = 30;
};

int cmd_render(const RenderArgs& a, const std::vector<std::string>& argv) {
  const std::vector<cubes::io::TraceRecord> trace =
      cubes::io::read_trace(a.trace_path);
  cubes::render::RenderOptions opt;
  opt.cell_px = a.px;
  opt.labels = a.labels;
  opt.delay_cs = a.delay;
  fs::create_directories(a.out);
  json outputs;
  if (a.format == "gif") {
    const std::string gif = a.out + "/animation.gif";
    cubes::render::write_gif(trace, gif, opt);
    outputs = json{{"gif", gif}, {"frames", trace.size()}};
    std::cout << "wrote " << gif << " (" << trace.size() << " frames)"
              << std::endl;
  } else {
    const std::vector<std::string> frames =
        cubes::render::write_svg_frames(trace, a.out, opt);
    outputs = json{{"first_frame", frames.front()}, {"frames", frames.size()}};
    std::cout << "wrote " << frames.size() << " svg frames to " << a.out
              << std::endl;
  }
  const json config{{"trace", a.trace_path},
                    {"format", a.format},
                    {"cell_px", a.px},
                    {"labels", a.labels},
                    {"delay_cs", a.delay}};
  write_manifest(a.out, "render", config, {}, outputs, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> raw_argv(argv, argv + argc);
  CLI::App app{"Pivoting-cube ensembles: training, evaluation and rendering"};
  app.require_subcommand(1);

  TrainArgs ta;
  CLI::App* train = app.add_subcommand("train", "Train a policy (masked PPO)");
  train->add_option("--shape", ta.shape_path, "target shape JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--arch", ta.arch, "architecture family")
      ->check(CLI::IsMember({"cnn", "mr-cnn"}))
      ->capture_default_str();
  train->add_option("--kernel", ta.kernel, "convolution kernel size")
      ->check(CLI::IsMember({3, 5}))
      ->capture_default_str();
  train->add_option("--layers", ta.layers, "convolution layer count")
      ->check(CLI::Range(1, 4))
      ->capture_default_str();
  train->add_flag("--mirror", ta.mirror,
                  "require mirror-alternating streams (implied for 5x5 mr-cnn)");
  train->add_option("--canvas", ta.canvas, "observation canvas side")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train->add_option("--steps", ta.steps, "total environment steps")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train->add_option("--episode-steps", ta.episode_steps,
                    "per-episode step budget")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train->add_option("--seed", ta.seed, "training seed")->capture_default_str();
  train->add_option("--out", ta.out, "output directory")->required();

  EvalArgs ea;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  EvalArgs pa;
  CLI::App* perturb = app.add_subcommand(
      "perturb", "Recovery from m random pivots off the target");
  for (auto [sub, args] : {std::pair{eval, &ea}, std::pair{perturb, &pa}}) {
    sub->add_option("--ckpt", args->ckpt, "policy checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--shape", args->shape_path, "target shape JSON file")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--episodes", args->episodes, "episode count")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--budget", args->budget,
                    "per-episode step budget (0: training budget)")
        ->capture_default_str();
    sub->add_option("--radius", args->radius,
                    "local connectivity radius (-1: receptive radius, 0: full)")
        ->capture_default_str();
    sub->add_flag("--argmax", args->argmax, "pick argmax actions");
    sub->add_option("--seed", args->seed, "evaluation seed")
        ->capture_default_str();
    sub->add_option("--out", args->out, "output directory")->required();
  }
  perturb->add_option("--m", pa.m, "number of random perturbation pivots")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  MorphArgs ma;
  CLI::App* morph = app.add_subcommand(
      "morph", "Chain policies: drive to each checkpoint's target in turn");
  morph->add_option("--ckpt", ma.ckpts, "policy checkpoints, in phase order")
      ->required()
      ->expected(1, 8)
      ->check(CLI::ExistingFile);
  morph->add_option("--shape", ma.shape_path, "start shape JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  morph->add_option("--shapes-dir", ma.shapes_dir,
                    "directory holding the phase target shapes");
  morph->add_option("--budget", ma.budget,
                    "per-phase step budget (0: training budget)")
      ->capture_default_str();
  morph->add_option("--radius", ma.radius,
                    "local connectivity radius (-1: receptive radius, 0: full)")
      ->capture_default_str();
  morph->add_flag("--argmax", ma.argmax, "pick argmax actions");
  morph->add_option("--seed", ma.seed, "evaluation seed")
      ->capture_default_str();
  morph->add_option("--out", ma.out, "output directory")->required();

  RenderArgs ra;
  CLI::App* render = app.add_subcommand("render", "Render a trace");
  render->add_option("trace", ra.trace_path, "trace JSON-lines file")
      ->required()
      ->check(CLI::ExistingFile);
  render->add_option("--format", ra.format, "output format")
      ->check(CLI::IsMember({"svg-frames", "gif"}))
      ->capture_default_str();
  render->add_option("--px", ra.px, "pixels per lattice cell")
      ->check(CLI::Range(4, 128))
      ->capture_default_str();
  render->add_flag("--labels", ra.labels, "draw cube indices (svg)");
  render->add_option("--delay", ra.delay, "gif frame delay (centiseconds)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  render->add_option("--out", ra.out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (train->parsed()) return cmd_train(ta, raw_argv);
    if (eval->parsed()) return cmd_eval(ea, raw_argv);
    if (perturb->parsed()) return cmd_perturb(pa, raw_argv);
    if (morph->parsed()) return cmd_morph(ma, raw_argv);
    if (render->parsed()) return cmd_render(ra, raw_argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
