// voxgan: train, sample, scan, complete and evaluate voxel GANs.
#include "voxgan/container.hpp"
#include "voxgan/conv.hpp"
#include "voxgan/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

using namespace voxgan;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kConfig = 2, kData = 3, kNumeric = 4 };

std::string numbered(const std::string& stem, std::int64_t i, const std::string& ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%03lld", static_cast<long long>(i));
  return stem + buf + ext;
}

VoxelGrid read_grid(const fs::path& p) {
  if (p.extension() == ".binvox") return read_binvox(p);
  if (p.extension() == ".vxg") return read_vxg(p);
  throw DataError(p.string() + ": expected a .binvox or .vxg file");
}

void write_grid(const VoxelGrid& g, const fs::path& stem, bool binvox) {
  write_vxg(g, fs::path(stem).replace_extension(".vxg"));
  if (binvox) write_binvox(g.binarized(), fs::path(stem).replace_extension(".binvox"));
}

struct TrainArgs {
  std::string config_file;
  std::vector<std::pair<std::string, std::string>> overrides;
};

int cmd_train(const TrainArgs& args) {
  RunConfig config = args.config_file.empty() ? RunConfig{} : load_config(args.config_file);
  for (const auto& [k, v] : args.overrides) config.set(k, v, "--" + k);
  config.validate();

  const fs::path out = config.out;
  fs::create_directories(out);
  write_all(out / "config.resolved", config.serialize());
  if (config.train.epochs == 0) {
    std::cout << "epochs = 0: wrote " << (out / "config.resolved").string() << "\n";
    return kOk;
  }

  const auto grids = load_grids(config);
  const TrainingSet data = make_training_set(config, grids);
  TrainState state = init_state(config);
  Trainer trainer(state, data);
  std::cout << mode_name(config.train.mode) << ": " << data.size() << " samples, " << trainer.batches_per_epoch()
            << " batches per epoch, " << config.train.epochs << " epochs\n";

  auto save = [&](const TrainState& s) {
    checkpoint_save(s, out / "checkpoint.ckpt");
    write_all(out / "telemetry.csv", telemetry_csv(s.history));
  };
  const auto every = config.train.checkpoint_every;
  try {
    trainer.run_until_epoch(config.train.epochs, [&](const TrainState& s) {
      if (every > 0 && s.epoch % every == 0) {
        save(s);
        checkpoint_save(s, out / numbered("epoch", s.epoch, ".ckpt"));
      }
    });
  } catch (const NumericGuard& e) {
    // checkpoint.ckpt still holds the last good state
    checkpoint_save(state, out / "guard.ckpt");
    write_all(out / "telemetry.csv", telemetry_csv(state.history));
    std::cerr << "numeric guard: " << e.what() << "; forensic state in " << (out / "guard.ckpt").string() << "\n";
    return kNumeric;
  }
  save(state);
  const auto losses = state.epoch_disc_loss();
  std::cout << "done: " << state.step << " batches, final epoch disc loss " << losses.back() << "\n";
  return kOk;
}

int cmd_generate(const std::string& ckpt, std::int64_t count, std::uint64_t seed, const std::string& out,
                 bool binvox) {
  if (count < 1) throw ConfigError("--count must be positive");
  TrainState s = checkpoint_load(ckpt);
  const auto grids = generate_samples(s.generator, s.config.model.latent_dim, count, seed);
  fs::create_directories(out);
  for (std::size_t i = 0; i < grids.size(); ++i)
    write_grid(grids[i], fs::path(out) / numbered("sample", static_cast<std::int64_t>(i), ""), binvox);
  std::cout << "wrote " << grids.size() << " samples to " << out << "\n";
  return kOk;
}

int cmd_interpolate(const std::string& ckpt, std::uint64_t seed_a, std::uint64_t seed_b, std::int64_t steps,
                    const std::string& out, bool binvox) {
  if (steps < 2) throw ConfigError("--steps must be at least 2");
  TrainState s = checkpoint_load(ckpt);
  const auto L = s.config.model.latent_dim;
  Rng ra(seed_a), rb(seed_b);
  const auto path = interpolate_latents(ra.sample_normal({1, L}), rb.sample_normal({1, L}), steps);
  fs::create_directories(out);
  for (std::int64_t i = 0; i < steps; ++i) {
    const VoxelGrid g = decode_latents(s.generator, path[static_cast<std::size_t>(i)]).front();
    write_grid(g, fs::path(out) / numbered("interp", i, ""), binvox);
  }
  std::cout << "wrote " << steps << " steps to " << out << "\n";
  return kOk;
}

int cmd_scan(const std::string& grid_file, const std::string& view_name, const std::string& out) {
  const VoxelGrid g = read_grid(grid_file);
  const View view = parse_view(view_name);
  const DepthMap d = depth_scan(g, view);
  fs::create_directories(out);
  write_pgm(d, g.extent(), fs::path(out) / "depth.pgm");
  const VoxelGrid shell = occlude_to_grid(d, g.extent());
  write_vxg(shell, fs::path(out) / "shell.vxg");
  write_binvox(shell, fs::path(out) / "shell.binvox");
  std::cout << d.hits() << " surface voxels seen from " << view_name << "\n";
  return kOk;
}

int cmd_complete(const std::string& ckpt, const std::string& grid_file, const std::string& view_name,
                 const std::string& out) {
  TrainState s = checkpoint_load(ckpt);
  const VoxelGrid in = read_grid(grid_file);
  if (in.extent() != s.config.model.resolution)
    throw DataError(grid_file + ": extent does not match the checkpoint resolution");
  const VoxelGrid done = trained_completion_model(s, parse_view(view_name))(in);
  fs::create_directories(fs::path(out).parent_path().empty() ? "." : fs::path(out).parent_path());
  write_grid(done, fs::path(out).replace_extension(""), true);
  std::cout << "completed grid has " << done.binarized().count() << " occupied voxels\n";
  return kOk;
}

int cmd_evaluate(const std::string& ckpt, const TrainArgs& data_args, const std::string& model_kind,
                 const std::string& pooling, const std::string& out) {
  RunConfig config;
  std::optional<TrainState> state;
  if (model_kind == "checkpoint") {
    if (ckpt.empty()) throw ConfigError("--checkpoint is required for --model checkpoint");
    state = checkpoint_load(ckpt);
    config = state->config;
  }
  for (const auto& [k, v] : data_args.overrides) config.set(k, v, "--" + k);
  config.validate();

  const CompletionTask task = make_completion_task(load_grids(config));
  std::vector<EvalSample> test, train;
  for (const auto& p : task.test) test.push_back({p.condition, p.target});
  for (const auto& p : task.train) train.push_back({p.condition, p.target});

  CompletionModel model;
  if (model_kind == "copy") {
    // oracle: answers with the ground truth of the matching test condition
    model = [&test](const VoxelGrid& c) {
      for (const auto& s : test)
        if (s.condition == c) return s.target;
      throw DataError("copy model: unknown condition");
    };
  } else if (model_kind == "nearest") {
    model = nearest_neighbor_model(train);
  } else if (model_kind == "checkpoint") {
    if (state->config.encoder == NetworkBase::ImageEncoder) {
      // image conditions are renders of the target from the held-out view
      for (std::size_t i = 0; i < test.size(); ++i) test[i].condition = task.test[i].target;
      model = [&](const VoxelGrid& target) {
        for (const auto& p : task.test)
          if (p.target == target) return trained_completion_model(*state, p.view)(target);
        throw DataError("unknown target");
      };
    } else {
      model = trained_completion_model(*state);
    }
  } else {
    throw ConfigError("--model must be checkpoint, nearest or copy");
  }
  const EvalReport r = evaluate_completion(model, test, parse_pooling(pooling));
  fs::create_directories(out);
  write_all(fs::path(out) / "report.json", r.to_json());
  write_all(fs::path(out) / "ious.csv", r.ious_csv());
  std::cout << "mean AP " << r.mean_ap << ", mean IoU " << r.mean_iou() << " over " << r.sample_count << " samples\n";
  return kOk;
}

// Flags shared by train and evaluate map straight onto config keys.
void add_overrides(CLI::App* app, TrainArgs& args, bool training) {
  struct Flag {
    const char* flag;
    const char* key;
    const char* help;
  };
  static const Flag all[] = {
      {"--mode", "mode", "iwgan | vae-iwgan | vanilla-gan-baseline"},
      {"--data", "data", "toy:<boxes|spheres|ells|mixed> or a directory of .binvox/.vxg"},
      {"--res", "res", "voxel resolution"},
      {"--epochs", "epochs", "training epochs"},
      {"--batch", "batch", "batch size"},
      {"--seed", "seed", "run seed"},
      {"--out", "out", "output directory"},
      {"--lambda", "lambda", "gradient penalty weight"},
      {"--delta", "delta", "reconstruction weight in the generator loss"},
      {"--gen-interval", "gen_interval", "generator learns every n-th batch"},
      {"--encoder", "encoder", "voxel-encoder | image-encoder"},
      {"--data-count", "data_count", "toy shapes to generate"},
      {"--orientations", "orientations", "quarter turns per toy shape (1..4)"},
      {"--data-seed", "data_seed", "toy data seed"},
  };
  for (const auto& f : all) {
    const std::string key = f.key;
    if (!training && (key == "mode" || key == "epochs" || key == "batch" || key == "seed" || key == "out" ||
                      key == "lambda" || key == "delta" || key == "gen_interval" || key == "encoder"))
      continue;
    app->add_option_function<std::string>(
        f.flag, [&args, key](const std::string& v) { args.overrides.emplace_back(key, v); }, f.help);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxgan: Wasserstein GANs over voxel grids"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train a model; writes checkpoint, telemetry and resolved config");
  train->add_option("--config", train_args.config_file, "key = value config file")->check(CLI::ExistingFile);
  add_overrides(train, train_args, true);

  std::string ckpt, out = "out", view = "+z", grid, model_kind = "checkpoint", pooling = "dataset";
  std::int64_t count = 1, steps = 5;
  std::uint64_t seed = 0, seed_a = 0, seed_b = 1;
  bool binvox = false;

  auto* gen = app.add_subcommand("generate", "sample grids from a checkpoint");
  gen->add_option("--checkpoint", ckpt)->required();
  gen->add_option("--count", count);
  gen->add_option("--seed", seed);
  gen->add_option("--out", out);
  gen->add_flag("--binvox", binvox, "also write binarized .binvox files");

  auto* interp = app.add_subcommand("interpolate", "decode a straight latent path between two seeds");
  interp->add_option("--checkpoint", ckpt)->required();
  interp->add_option("--seed-a", seed_a);
  interp->add_option("--seed-b", seed_b);
  interp->add_option("--steps", steps);
  interp->add_option("--out", out);
  interp->add_flag("--binvox", binvox);

  auto* scan = app.add_subcommand("scan", "depth-scan a grid: depth.pgm plus the visible shell");
  scan->add_option("--grid", grid)->required();
  scan->add_option("--view", view, "+x -x +y -y +z -z");
  scan->add_option("--out", out);

  auto* complete = app.add_subcommand("complete", "complete an occluded grid with a vae-iwgan checkpoint");
  complete->add_option("--checkpoint", ckpt)->required();
  complete->add_option("--grid", grid)->required();
  complete->add_option("--view", view, "render view for image encoders");
  complete->add_option("--out", out);

  TrainArgs eval_args;
  auto* evaluate = app.add_subcommand("evaluate", "held-out-view completion report (AP, IoU)");
  evaluate->add_option("--checkpoint", ckpt);
  evaluate->add_option("--model", model_kind, "checkpoint | nearest | copy");
  evaluate->add_option("--pooling", pooling, "dataset | object");
  evaluate->add_option("--out", out);
  add_overrides(evaluate, eval_args, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (const char* t = std::getenv("VOXGAN_THREADS")) {
      const int n = std::atoi(t);
      if (n < 1) throw ConfigError("VOXGAN_THREADS must be a positive integer");
      set_conv_threads(n);
    }
    if (*train) return cmd_train(train_args);
    if (*gen) return cmd_generate(ckpt, count, seed, out, binvox);
    if (*interp) return cmd_interpolate(ckpt, seed_a, seed_b, steps, out, binvox);
    if (*scan) return cmd_scan(grid, view, out);
    if (*complete) return cmd_complete(ckpt, grid, view, out);
    if (*evaluate) return cmd_evaluate(ckpt, eval_args, model_kind, pooling, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const SpecError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const NumericGuard& e) {
    std::cerr << "numeric guard: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
