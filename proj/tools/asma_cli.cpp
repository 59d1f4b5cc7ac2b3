// asma: attack, evaluate, visualize, train-toy, gen-data.
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "asma/runner.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> epsilon;
  std::optional<int> iters;
  std::optional<double> alpha;
  std::optional<std::string> regions;
  std::optional<std::string> policy;
  std::optional<int> k;
  std::optional<double> threshold;
  std::optional<int> dilation;
  std::optional<std::string> distance;
  std::optional<std::string> metric_scale;
  std::optional<std::string> value_rate_mode;
  std::optional<int> workers;
  std::optional<std::string> dataset;
  std::vector<std::string> models;
  std::vector<std::string> images;
  std::vector<std::string> labels;
  std::optional<std::string> parser;
  std::optional<std::string> attacks;
  std::optional<std::string> sweep;
  std::optional<std::string> attack_dir;
  std::optional<int> epochs;
  std::optional<int> n_real;
  std::optional<int> n_fake;
};

void add_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config file");
  cmd->add_option("--seed", f.seed, "Master seed");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--epsilon", f.epsilon, "L-infinity budget in [0,1] units");
  cmd->add_option("--iters", f.iters, "Attack iterations");
  cmd->add_option("--alpha", f.alpha, "Step size");
  cmd->add_option("--regions", f.regions, "Comma-separated label names for the fixed policy");
  cmd->add_option("--policy", f.policy, "Mask policy")->check(CLI::IsMember({"fixed", "topk", "threshold"}));
  cmd->add_option("--k", f.k, "Region count for the topk policy");
  cmd->add_option("--threshold", f.threshold, "Score cut for the threshold policy");
  cmd->add_option("--dilation", f.dilation, "Mask dilation in pixels");
  cmd->add_option("--distance", f.distance, "Feature distance")
      ->check(CLI::IsMember({"l2_features", "l1_features", "cosine_features"}));
  cmd->add_option("--metric-scale", f.metric_scale, "Pixel scale for metrics")
      ->check(CLI::IsMember({"unit", "255"}));
  cmd->add_option("--value-rate-mode", f.value_rate_mode, "Value rate definition")
      ->check(CLI::IsMember({"cam_mass", "area"}));
  cmd->add_option("--workers", f.workers, "Worker threads");
  cmd->add_option("--dataset", f.dataset, "Dataset manifest.json");
  cmd->add_option("--model", f.models, "Detector weight file (repeatable)");
  cmd->add_option("--image", f.images, "Input image (repeatable)");
  cmd->add_option("--labels", f.labels, "Label map PNG per --image (repeatable)");
  cmd->add_option("--parser", f.parser, "Face parser command with {image} and {out}");
  cmd->add_option("--attacks", f.attacks, "Comma-separated attack names");
  cmd->add_option("--sweep", f.sweep, "Comma-separated epsilons for a perturbation sweep");
  cmd->add_option("--attack-dir", f.attack_dir, "Output directory of an attack run");
  cmd->add_option("--epochs", f.epochs, "Training epochs");
  cmd->add_option("--n-real", f.n_real, "Real samples to generate");
  cmd->add_option("--n-fake", f.n_fake, "Fake samples to generate");
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

asma::RunConfig resolve(const Flags& f) {
  asma::RunConfig c = f.config.empty() ? asma::RunConfig{} : asma::load_run_config(f.config);
  auto& a = c.attack;
  if (f.seed) c.seed = *f.seed;
  if (f.out) c.out = *f.out;
  if (f.epsilon) a.budget.epsilon = *f.epsilon;
  if (f.iters) a.budget.iterations = *f.iters;
  if (f.alpha) a.budget.step_alpha = *f.alpha;
  if (f.regions) a.mask_policy.labels = asma::parse_label_names(*f.regions);
  if (f.policy) a.mask_policy.kind = asma::parse_policy_kind(*f.policy);
  if (f.k) a.mask_policy.k = *f.k;
  if (f.threshold) a.mask_policy.threshold = *f.threshold;
  if (f.dilation) a.mask_dilation = *f.dilation;
  if (f.distance) a.distance = asma::parse_distance_kind(*f.distance);
  if (f.metric_scale) c.metric_scale = asma::parse_pixel_scale(*f.metric_scale);
  if (f.value_rate_mode) c.value_rate_mode = asma::parse_value_rate_mode(*f.value_rate_mode);
  if (f.workers) c.workers = *f.workers;
  if (f.dataset) c.dataset = *f.dataset;
  if (!f.models.empty()) c.models.assign(f.models.begin(), f.models.end());
  if (!f.images.empty()) c.images.assign(f.images.begin(), f.images.end());
  if (!f.labels.empty()) c.label_maps.assign(f.labels.begin(), f.labels.end());
  if (f.parser) c.parser_command = *f.parser;
  if (f.attacks) {
    c.attacks.clear();
    for (const auto& name : split_csv(*f.attacks)) c.attacks.push_back(asma::parse_attack_kind(name));
  }
  if (f.sweep) {
    c.sweep.clear();
    for (const auto& v : split_csv(*f.sweep)) {
      try {
        c.sweep.push_back(std::stod(v));
      } catch (const std::exception&) {
        throw asma::ConfigError("bad sweep value '" + v + "'");
      }
    }
  }
  if (f.attack_dir) c.attack_dir = *f.attack_dir;
  if (f.epochs) c.train.epochs = *f.epochs;
  if (f.n_real) c.n_real = *f.n_real;
  if (f.n_fake) c.n_fake = *f.n_fake;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial semantic mask attacks on face-forgery detectors"};
  app.require_subcommand(1);
  Flags flags;
  using Command = int (*)(const asma::RunConfig&, std::ostream&);
  std::vector<std::pair<CLI::App*, Command>> commands{
      {app.add_subcommand("attack", "Attack images and write adversarial artifacts"), asma::cmd_attack},
      {app.add_subcommand("evaluate", "Transfer matrix, quality table and optional sweep"), asma::cmd_evaluate},
      {app.add_subcommand("visualize", "CAM overlays, diff and mask outline for an attack run"),
       asma::cmd_visualize},
      {app.add_subcommand("train-toy", "Train the reference detector on synthetic faces"), asma::cmd_train_toy},
      {app.add_subcommand("gen-data", "Write a synthetic face dataset"), asma::cmd_gen_data},
  };
  for (auto& [cmd, fn] : commands) add_flags(cmd, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : asma::kExitConfig;
  }

  asma::RunConfig config;
  try {
    config = resolve(flags);
  } catch (const asma::Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return asma::kExitConfig;
  }
  for (auto& [cmd, fn] : commands)
    if (cmd->parsed()) return fn(config, std::cout);
  return asma::kExitConfig;
}
