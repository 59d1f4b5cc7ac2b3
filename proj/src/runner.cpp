#include "asma/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "asma/cam.hpp"
#include "asma/evaluation.hpp"

namespace asma {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ConfigError("unknown key '" + it.key() + "' in " + std::string(where));
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value for '") + key + "'");
  }
}

void read_path(const json& obj, const char* key, fs::path& out) {
  std::string s;
  read(obj, key, s);
  if (obj.contains(key)) out = s;
}

void read_paths(const json& obj, const char* key, std::vector<fs::path>& out) {
  std::vector<std::string> v;
  read(obj, key, v);
  if (obj.contains(key)) out.assign(v.begin(), v.end());
}

std::set<int> read_labels(const json& v) {
  if (v.is_string()) return parse_label_names(v.get<std::string>());
  if (!v.is_array()) throw ConfigError("label list must be a string or an array");
  std::string csv;
  for (const auto& item : v) {
    if (!item.is_string()) throw ConfigError("label names must be strings");
    if (!csv.empty()) csv += ',';
    csv += item.get<std::string>();
  }
  return csv.empty() ? std::set<int>{} : parse_label_names(csv);
}

json label_names(const std::set<int>& labels) {
  json out = json::array();
  for (int l : labels) out.push_back(std::string(label_name(l)));
  return out;
}

json paths_json(const std::vector<fs::path>& paths) {
  json out = json::array();
  for (const auto& p : paths) out.push_back(p.generic_string());
  return out;
}

void parse_attack(const json& a, AttackConfig& cfg) {
  check_keys(a,
             {"epsilon", "alpha", "iterations", "distance", "policy", "regions", "k", "threshold",
              "excluded", "dilation", "cam_mode", "target_class", "jitter", "random_start", "cw",
              "deepfool"},
             "attack");
  read(a, "epsilon", cfg.budget.epsilon);
  read(a, "alpha", cfg.budget.step_alpha);
  read(a, "iterations", cfg.budget.iterations);
  if (a.contains("distance")) cfg.distance = parse_distance_kind(a["distance"].get<std::string>());
  if (a.contains("policy")) cfg.mask_policy.kind = parse_policy_kind(a["policy"].get<std::string>());
  if (a.contains("regions")) cfg.mask_policy.labels = read_labels(a["regions"]);
  if (a.contains("excluded")) cfg.mask_policy.excluded = read_labels(a["excluded"]);
  read(a, "k", cfg.mask_policy.k);
  read(a, "threshold", cfg.mask_policy.threshold);
  read(a, "dilation", cfg.mask_dilation);
  if (a.contains("cam_mode")) cfg.cam_mode = parse_cam_mode(a["cam_mode"].get<std::string>());
  if (a.contains("target_class")) {
    if (a["target_class"].is_null())
      cfg.target_class.reset();
    else
      cfg.target_class = a["target_class"].get<int>();
  }
  read(a, "jitter", cfg.jitter);
  read(a, "random_start", cfg.random_start);
  if (a.contains("cw")) {
    const auto& c = a["cw"];
    check_keys(c, {"binary_steps", "iterations", "initial_const", "kappa", "learning_rate"}, "attack.cw");
    read(c, "binary_steps", cfg.cw_binary_steps);
    read(c, "iterations", cfg.cw_iterations);
    read(c, "initial_const", cfg.cw_initial_const);
    read(c, "kappa", cfg.cw_kappa);
    read(c, "learning_rate", cfg.cw_learning_rate);
  }
  if (a.contains("deepfool")) {
    const auto& d = a["deepfool"];
    check_keys(d, {"overshoot", "max_iterations"}, "attack.deepfool");
    read(d, "overshoot", cfg.deepfool_overshoot);
    read(d, "max_iterations", cfg.deepfool_max_iterations);
  }
}

json attack_json(const AttackConfig& cfg) {
  return {
      {"epsilon", cfg.budget.epsilon},
      {"alpha", cfg.budget.step_alpha},
      {"iterations", cfg.budget.iterations},
      {"distance", std::string(to_string(cfg.distance))},
      {"policy", std::string(to_string(cfg.mask_policy.kind))},
      {"regions", label_names(cfg.mask_policy.labels)},
      {"k", cfg.mask_policy.k},
      {"threshold", cfg.mask_policy.threshold},
      {"excluded", label_names(cfg.mask_policy.excluded)},
      {"dilation", cfg.mask_dilation},
      {"cam_mode", std::string(to_string(cfg.cam_mode))},
      {"target_class", cfg.target_class ? json(*cfg.target_class) : json(nullptr)},
      {"jitter", cfg.jitter},
      {"random_start", cfg.random_start},
      {"cw",
       {{"binary_steps", cfg.cw_binary_steps},
        {"iterations", cfg.cw_iterations},
        {"initial_const", cfg.cw_initial_const},
        {"kappa", cfg.cw_kappa},
        {"learning_rate", cfg.cw_learning_rate}}},
      {"deepfool", {{"overshoot", cfg.deepfool_overshoot}, {"max_iterations", cfg.deepfool_max_iterations}}},
  };
}

json config_json(const RunConfig& c) {
  json attacks = json::array();
  for (auto k : c.attacks) attacks.push_back(std::string(to_string(k)));
  return {
      {"dataset", c.dataset.generic_string()},
      {"images", paths_json(c.images)},
      {"label_maps", paths_json(c.label_maps)},
      {"parser_command", c.parser_command},
      {"models", paths_json(c.models)},
      {"attack_dir", c.attack_dir.generic_string()},
      {"out", c.out.generic_string()},
      {"seed", c.seed},
      {"workers", c.workers},
      {"metric_scale", std::string(to_string(c.metric_scale))},
      {"value_rate_mode", std::string(to_string(c.value_rate_mode))},
      {"attack", attack_json(c.attack)},
      {"attacks", attacks},
      {"sweep", c.sweep},
      {"data",
       {{"n_real", c.n_real},
        {"n_fake", c.n_fake},
        {"n_val_real", c.n_val_real},
        {"n_val_fake", c.n_val_fake},
        {"size", c.synthetic.size},
        {"pixel_noise", c.synthetic.pixel_noise},
        {"tint_min", c.synthetic.tint_min},
        {"tint_max", c.synthetic.tint_max},
        {"texture_amplitude", c.synthetic.texture_amplitude},
        {"radius_min", c.synthetic.radius_min},
        {"radius_max", c.synthetic.radius_max}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"learning_rate", c.train.learning_rate},
        {"beta1", c.train.beta1},
        {"beta2", c.train.beta2},
        {"adam_epsilon", c.train.adam_epsilon},
        {"channels", c.architecture.stage_channels},
        {"input_size", c.architecture.input_size},
        {"id", c.model_id}}},
      {"visualize", {{"opacity", c.overlay_opacity}, {"diff_gain", c.diff_gain}}},
  };
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

void write_manifest(const RunConfig& c, std::string_view command, json body) {
  body["command"] = std::string(command);
  body["config"] = config_json(c);
  write_text(c.out / "run_manifest.json", body.dump(2) + "\n");
}

std::string stem_for(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05zu", i);
  return buf;
}

FaceImage mask_to_image(const BinaryMask& m) {
  Tensor t(m.height(), m.width(), 1);
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) t.at(y, x, 0) = m.at(y, x);
  return FaceImage(std::move(t));
}

BinaryMask image_to_mask(const FaceImage& img) {
  BinaryMask m(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) m.set(y, x, img.pixels().at(y, x, 0) > 0.5);
  return m;
}

Tensor difference(const FaceImage& a, const FaceImage& b) {
  Tensor d = a.pixels();
  auto bv = b.pixels().values();
  auto dv = d.values();
  for (std::size_t i = 0; i < dv.size(); ++i) dv[i] -= bv[i];
  return d;
}

std::vector<ReferenceDetector> load_models(const RunConfig& c) {
  if (c.models.empty()) throw ConfigError("no model given (--model)");
  std::vector<ReferenceDetector> models;
  for (const auto& p : c.models) {
    if (!fs::exists(p)) throw ConfigError("model not found: " + p.string());
    models.push_back(ReferenceDetector::load(p));
  }
  return models;
}

struct Input {
  fs::path image;
  fs::path labels;
  std::optional<int> label;
};

std::vector<Input> collect_inputs(const RunConfig& c) {
  std::vector<Input> inputs;
  if (!c.dataset.empty()) {
    if (!fs::exists(c.dataset)) throw ConfigError("dataset not found: " + c.dataset.string());
    std::ifstream in(c.dataset);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("bad dataset manifest: " + std::string(e.what()));
    }
    auto root = c.dataset.parent_path();
    for (const auto& item : doc.at("samples")) {
      Input i;
      i.image = root / item.at("image").get<std::string>();
      if (item.contains("labels")) i.labels = root / item["labels"].get<std::string>();
      if (item.contains("label")) i.label = item["label"].get<std::string>() == "fake" ? kFakeClass : kRealClass;
      inputs.push_back(std::move(i));
    }
  }
  if (!c.label_maps.empty() && c.label_maps.size() != c.images.size())
    throw ConfigError("label map count must match image count");
  for (std::size_t k = 0; k < c.images.size(); ++k)
    inputs.push_back({c.images[k], c.label_maps.empty() ? fs::path() : c.label_maps[k], std::nullopt});
  return inputs;
}

template <typename Fn>
int guarded(std::ostream& log, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
  } catch (const ArgumentError& e) {
    log << "config error: " << e.what() << '\n';
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitPartial;
  }
  return kExitConfig;
}

std::optional<double> mean_value_rate(const Detector& model, const std::vector<SyntheticSample>& samples,
                                      const std::vector<AttackResult>& results, ValueRateMode mode) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    try {
      int cls = predicted_class(model, samples[i].image);
      auto cam = compute_cam(model, samples[i].image, cls);
      sum += value_rate(cam, results[i].mask, mode);
      ++n;
    } catch (const UndefinedRateError&) {
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

}  // namespace

std::string_view to_string(CamMode mode) {
  switch (mode) {
    case CamMode::Auto: return "auto";
    case CamMode::Weights: return "weights";
    case CamMode::Gradient: return "gradient";
  }
  return "?";
}

CamMode parse_cam_mode(std::string_view name) {
  if (name == "auto") return CamMode::Auto;
  if (name == "weights") return CamMode::Weights;
  if (name == "gradient") return CamMode::Gradient;
  throw ConfigError("unknown CAM mode '" + std::string(name) + "'");
}

ValueRateMode parse_value_rate_mode(std::string_view name) {
  if (name == "cam_mass") return ValueRateMode::CamMass;
  if (name == "area") return ValueRateMode::Area;
  throw ConfigError("unknown value rate mode '" + std::string(name) + "'");
}

void RunConfig::validate() const {
  if (workers < 1) throw ConfigError("workers must be at least 1");
  attack.validate();
  if (attacks.empty()) throw ConfigError("no attacks selected");
  if (!std::is_sorted(sweep.begin(), sweep.end())) throw ConfigError("sweep epsilons must be ascending");
  for (double e : sweep)
    if (e < 0.0 || e > 1.0) throw ConfigError("sweep epsilons must lie in [0,1]");
  if (n_real < 0 || n_fake < 0 || n_val_real < 0 || n_val_fake < 0)
    throw ConfigError("sample counts must be non-negative");
  if (synthetic.size <= 0) throw ConfigError("image size must be positive");
  if (overlay_opacity < 0.0 || overlay_opacity > 1.0) throw ConfigError("opacity must be in [0,1]");
  if (!(diff_gain > 0.0)) throw ConfigError("diff gain must be positive");
  if (train.epochs < 0 || train.batch_size <= 0 || !(train.learning_rate > 0.0))
    throw ConfigError("bad training options");
}

RunConfig parse_run_config(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  check_keys(doc,
             {"dataset", "images", "label_maps", "parser_command", "models", "attack_dir", "out", "seed",
              "workers", "metric_scale", "value_rate_mode", "attack", "attacks", "sweep", "data", "train",
              "visualize"},
             "config");
  RunConfig c;
  try {
    read_path(doc, "dataset", c.dataset);
    read_paths(doc, "images", c.images);
    read_paths(doc, "label_maps", c.label_maps);
    read(doc, "parser_command", c.parser_command);
    read_paths(doc, "models", c.models);
    read_path(doc, "attack_dir", c.attack_dir);
    read_path(doc, "out", c.out);
    read(doc, "seed", c.seed);
    read(doc, "workers", c.workers);
    if (doc.contains("metric_scale")) c.metric_scale = parse_pixel_scale(doc["metric_scale"].get<std::string>());
    if (doc.contains("value_rate_mode"))
      c.value_rate_mode = parse_value_rate_mode(doc["value_rate_mode"].get<std::string>());
    if (doc.contains("attack")) parse_attack(doc["attack"], c.attack);
    if (doc.contains("attacks")) {
      c.attacks.clear();
      for (const auto& a : doc["attacks"]) c.attacks.push_back(parse_attack_kind(a.get<std::string>()));
    }
    read(doc, "sweep", c.sweep);
    if (doc.contains("data")) {
      const auto& d = doc["data"];
      check_keys(d,
                 {"n_real", "n_fake", "n_val_real", "n_val_fake", "size", "pixel_noise", "tint_min", "tint_max",
                  "texture_amplitude", "radius_min", "radius_max"},
                 "data");
      read(d, "n_real", c.n_real);
      read(d, "n_fake", c.n_fake);
      read(d, "n_val_real", c.n_val_real);
      read(d, "n_val_fake", c.n_val_fake);
      read(d, "size", c.synthetic.size);
      read(d, "pixel_noise", c.synthetic.pixel_noise);
      read(d, "tint_min", c.synthetic.tint_min);
      read(d, "tint_max", c.synthetic.tint_max);
      read(d, "texture_amplitude", c.synthetic.texture_amplitude);
      read(d, "radius_min", c.synthetic.radius_min);
      read(d, "radius_max", c.synthetic.radius_max);
    }
    if (doc.contains("train")) {
      const auto& t = doc["train"];
      check_keys(t,
                 {"epochs", "batch_size", "learning_rate", "beta1", "beta2", "adam_epsilon", "channels",
                  "input_size", "id"},
                 "train");
      read(t, "epochs", c.train.epochs);
      read(t, "batch_size", c.train.batch_size);
      read(t, "learning_rate", c.train.learning_rate);
      read(t, "beta1", c.train.beta1);
      read(t, "beta2", c.train.beta2);
      read(t, "adam_epsilon", c.train.adam_epsilon);
      read(t, "channels", c.architecture.stage_channels);
      read(t, "input_size", c.architecture.input_size);
      read(t, "id", c.model_id);
    }
    if (doc.contains("visualize")) {
      const auto& v = doc["visualize"];
      check_keys(v, {"opacity", "diff_gain"}, "visualize");
      read(v, "opacity", c.overlay_opacity);
      read(v, "diff_gain", c.diff_gain);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string to_json_text(const RunConfig& config) { return config_json(config).dump(2) + "\n"; }

FaceImage noise_to_image(const Tensor& delta, double range) {
  if (!(range > 0.0)) throw ArgumentError("noise display range must be positive");
  Tensor t = delta;
  for (double& v : t.values()) v = 0.5 + 0.5 * v / range;
  return FaceImage::clamped(std::move(t));
}

BinaryMask mask_outline(const BinaryMask& mask) {
  BinaryMask out(mask.height(), mask.width());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(y, x)) continue;
      bool edge = false;
      for (auto [dy, dx] : {std::pair{-1, 0}, {1, 0}, {0, -1}, {0, 1}}) {
        int yy = y + dy, xx = x + dx;
        if (yy < 0 || yy >= mask.height() || xx < 0 || xx >= mask.width() || !mask.at(yy, xx)) edge = true;
      }
      out.set(y, x, edge);
    }
  }
  return out;
}

int cmd_attack(const RunConfig& c, std::ostream& log) {
  return guarded(log, [&] {
    c.validate();
    auto inputs = collect_inputs(c);
    auto models = inputs.empty() ? std::vector<ReferenceDetector>{} : load_models(c);
    fs::create_directories(c.out);

    struct Outcome {
      json entry;
      std::string message;
      bool ok = false;
    };
    std::vector<Outcome> outcomes(inputs.size() * c.attacks.size());

    parallel_for(outcomes.size(), c.workers, [&](std::size_t slot) {
      std::size_t i = slot / c.attacks.size();
      AttackKind kind = c.attacks[slot % c.attacks.size()];
      std::string name(to_string(kind));
      std::string stem = stem_for(i);
      Outcome& o = outcomes[slot];
      o.entry = {{"index", i}, {"attack", name}, {"image", inputs[i].image.generic_string()}};
      try {
        const Detector& model = models.front();
        FaceImage x = load_image(inputs[i].image);
        std::optional<LabelMap> labels;
        if (!inputs[i].labels.empty()) {
          labels = load_label_map(inputs[i].labels, std::pair{x.height(), x.width()});
          o.entry["labels"] = inputs[i].labels.generic_string();
        } else if (needs_label_map(kind) && !c.parser_command.empty()) {
          fs::path parsed = c.out / "parsed" / (stem + ".png");
          fs::create_directories(parsed.parent_path());
          labels = parse_with_external_command(c.parser_command, inputs[i].image, parsed,
                                               {x.height(), x.width()});
          o.entry["labels"] = parsed.generic_string();
        }
        AttackConfig cfg = c.attack;
        cfg.seed = sample_seed(c.seed, i);
        cfg.true_label = inputs[i].label;
        AttackResult r = run_attack(kind, model, x, labels ? &*labels : nullptr, cfg);

        fs::path dir = c.out / name;
        fs::create_directories(dir);
        Tensor applied = difference(r.adversarial, x);
        save_image(r.adversarial, dir / (stem + "_adv.png"));
        save_image(noise_to_image(applied, std::max(cfg.budget.epsilon, 1e-12)), dir / (stem + "_noise.png"));
        save_image(mask_to_image(r.mask), dir / (stem + "_mask.png"));

        QualityReport q = quality_report(x, r.adversarial, c.metric_scale);
        if (needs_label_map(kind)) {
          try {
            q.value_rate = value_rate(compute_cam(model, x, predicted_class(model, x), cfg.cam_mode), r.mask,
                                      c.value_rate_mode);
          } catch (const UndefinedRateError&) {
          }
        }
        json sidecar = {
            {"image", inputs[i].image.generic_string()},
            {"attack", name},
            {"model", model.identifier()},
            {"seed", cfg.seed},
            {"regions", label_names(r.regions)},
            {"iterations_run", r.iterations_run},
            {"feature_distance_trace", r.feature_distance_trace},
            {"label", r.label},
            {"adversarial_class", r.adversarial_class},
            {"flipped", r.flipped},
            {"metrics",
             {{"mse", q.mse},
              {"mae", q.mae},
              {"psnr", q.psnr},
              {"ssim", q.ssim},
              {"value_rate", q.value_rate ? json(*q.value_rate) : json(nullptr)},
              {"value_rate_mode", std::string(to_string(c.value_rate_mode))},
              {"pixel_scale", std::string(to_string(c.metric_scale))}}},
            {"config", attack_json(cfg)},
        };
        write_text(dir / (stem + ".json"), sidecar.dump(2) + "\n");

        o.entry["adversarial"] = (fs::path(name) / (stem + "_adv.png")).generic_string();
        o.entry["noise"] = (fs::path(name) / (stem + "_noise.png")).generic_string();
        o.entry["mask"] = (fs::path(name) / (stem + "_mask.png")).generic_string();
        o.entry["sidecar"] = (fs::path(name) / (stem + ".json")).generic_string();
        o.entry["flipped"] = r.flipped;
        o.entry["status"] = "ok";
        o.ok = true;
        o.message = name + " " + stem + (r.flipped ? " flipped" : " kept");
      } catch (const std::exception& e) {
        o.entry["status"] = "failed";
        o.entry["error"] = e.what();
        o.message = name + " " + stem + " failed: " + e.what();
      }
    });

    json results = json::array();
    int failures = 0;
    for (auto& o : outcomes) {
      log << o.message << '\n';
      if (!o.ok) ++failures;
      results.push_back(std::move(o.entry));
    }
    json body = {{"results", results}, {"failures", failures}};
    if (!models.empty()) body["model"] = models.front().identifier();
    write_manifest(c, "attack", std::move(body));
    return failures == 0 ? kExitOk : kExitPartial;
  });
}

int cmd_evaluate(const RunConfig& c, std::ostream& log) {
  return guarded(log, [&] {
    c.validate();
    if (c.dataset.empty()) throw ConfigError("evaluate needs a dataset");
    if (!fs::exists(c.dataset)) throw ConfigError("dataset not found: " + c.dataset.string());
    auto models = load_models(c);
    auto samples = read_dataset(c.dataset);
    fs::create_directories(c.out);

    std::vector<const Detector*> ptrs;
    for (const auto& m : models) ptrs.push_back(&m);
    AttackConfig cfg = c.attack;
    cfg.seed = c.seed;

    std::vector<std::vector<AttackResult>> generated;
    auto cells = transfer_matrix(ptrs, ptrs, c.attacks, samples, cfg, c.workers, AsrMode::Eligible, &generated);
    std::ostringstream csv;
    write_transfer_csv(csv, cells);
    write_text(c.out / "transfer.csv", csv.str());
    std::string table = format_transfer_table(cells);
    write_text(c.out / "transfer.txt", table);
    log << table;

    // White-box quality of every attack on the first model.
    std::vector<FaceImage> originals;
    for (const auto& s : samples) originals.push_back(s.image);
    std::vector<QualityRow> rows;
    for (std::size_t a = 0; a < c.attacks.size(); ++a) {
      std::vector<FaceImage> adversarials;
      for (const auto& r : generated[a]) adversarials.push_back(r.adversarial);
      QualityRow row;
      row.attack = std::string(to_string(c.attacks[a]));
      row.n = static_cast<int>(samples.size());
      row.quality = mean_quality(originals, adversarials, c.metric_scale);
      if (needs_label_map(c.attacks[a]))
        row.quality.value_rate = mean_value_rate(models.front(), samples, generated[a], c.value_rate_mode);
      rows.push_back(std::move(row));
    }
    std::ostringstream qcsv;
    write_quality_csv(qcsv, rows, c.value_rate_mode);
    write_text(c.out / "quality.csv", qcsv.str());
    std::string qtable = format_quality_table(rows, c.value_rate_mode);
    write_text(c.out / "quality.txt", qtable);
    log << qtable;

    json outputs = {"transfer.csv", "transfer.txt", "quality.csv", "quality.txt"};
    if (!c.sweep.empty()) {
      auto sweep = perturbation_sweep(models.front(), samples, c.sweep, cfg, c.metric_scale, c.workers);
      std::ostringstream scsv;
      write_sweep_csv(scsv, sweep);
      write_text(c.out / "sweep.csv", scsv.str());
      std::string stable = format_sweep_table(sweep);
      write_text(c.out / "sweep.txt", stable);
      log << stable;
      outputs.push_back("sweep.csv");
      outputs.push_back("sweep.txt");
    }
    write_manifest(c, "evaluate", {{"outputs", outputs}, {"samples", samples.size()}});
    return kExitOk;
  });
}

int cmd_visualize(const RunConfig& c, std::ostream& log) {
  return guarded(log, [&] {
    c.validate();
    if (c.attack_dir.empty()) throw ConfigError("visualize needs --attack-dir");
    fs::path manifest_path = c.attack_dir / "run_manifest.json";
    if (!fs::exists(manifest_path)) throw ConfigError("no run_manifest.json in " + c.attack_dir.string());
    std::ifstream in(manifest_path);
    json manifest = json::parse(in);

    RunConfig resolved = c;
    if (resolved.models.empty()) {
      for (const auto& p : manifest.at("config").at("models")) resolved.models.push_back(p.get<std::string>());
    }
    auto models = load_models(resolved);
    const Detector& model = models.front();
    fs::create_directories(c.out);

    const auto& results = manifest.at("results");
    std::vector<std::string> messages(results.size());
    std::vector<json> entries(results.size());
    std::vector<char> ok(results.size(), 0);
    parallel_for(results.size(), c.workers, [&](std::size_t i) {
      const json& r = results[i];
      std::string attack = r.value("attack", "asma");
      std::string stem = stem_for(r.value("index", i));
      entries[i] = {{"attack", attack}, {"index", r.value("index", i)}};
      if (r.value("status", "") != "ok") {
        messages[i] = attack + " " + stem + " skipped";
        entries[i]["status"] = "skipped";
        ok[i] = 1;
        return;
      }
      try {
        FaceImage x = load_image(r.at("image").get<std::string>());
        FaceImage adv = load_image(c.attack_dir / r.at("adversarial").get<std::string>());
        BinaryMask mask = image_to_mask(load_image(c.attack_dir / r.at("mask").get<std::string>()));
        int cls = predicted_class(model, x);
        auto before = compute_cam(model, x, cls, c.attack.cam_mode);
        auto after = compute_cam(model, adv, cls, c.attack.cam_mode);

        fs::path dir = c.out / attack;
        fs::create_directories(dir);
        save_image(overlay_cam(x, before, c.overlay_opacity), dir / (stem + "_cam_before.png"));
        save_image(overlay_cam(adv, after, c.overlay_opacity), dir / (stem + "_cam_after.png"));
        Tensor diff = difference(adv, x);
        save_image(noise_to_image(diff, 1.0 / c.diff_gain), dir / (stem + "_diff.png"));

        Tensor outlined = adv.pixels();
        BinaryMask edge = mask_outline(mask);
        for (int y = 0; y < edge.height(); ++y)
          for (int xx = 0; xx < edge.width(); ++xx)
            if (edge.at(y, xx)) {
              outlined.at(y, xx, 0) = 1.0;
              outlined.at(y, xx, 1) = 0.0;
              outlined.at(y, xx, 2) = 0.0;
            }
        save_image(FaceImage(std::move(outlined)), dir / (stem + "_outline.png"));
        entries[i]["status"] = "ok";
        entries[i]["outputs"] = {stem + "_cam_before.png", stem + "_cam_after.png", stem + "_diff.png",
                                 stem + "_outline.png"};
        messages[i] = attack + " " + stem + " ok";
        ok[i] = 1;
      } catch (const std::exception& e) {
        entries[i]["status"] = "failed";
        entries[i]["error"] = e.what();
        messages[i] = attack + " " + stem + " failed: " + e.what();
      }
    });
    int failures = 0;
    json list = json::array();
    for (std::size_t i = 0; i < results.size(); ++i) {
      log << messages[i] << '\n';
      failures += ok[i] ? 0 : 1;
      list.push_back(std::move(entries[i]));
    }
    write_manifest(resolved, "visualize", {{"results", list}, {"failures", failures}});
    return failures == 0 ? kExitOk : kExitPartial;
  });
}

int cmd_train_toy(const RunConfig& c, std::ostream& log) {
  return guarded(log, [&] {
    c.validate();
    if (c.synthetic.size != c.architecture.input_size)
      throw ConfigError("data size and model input size differ");
    auto train = generate_synthetic_dataset(c.n_real, c.n_fake, c.seed, c.synthetic);
    auto val = generate_synthetic_dataset(c.n_val_real, c.n_val_fake, c.seed + 1, c.synthetic);
    TrainOptions opt = c.train;
    opt.seed = c.seed;
    auto det = train_reference_detector(train, val, opt, c.architecture, c.model_id);
    fs::create_directories(c.out);
    det.save(c.out / "model.bin");
    const auto& r = det.report();
    json report = {{"epochs", r.epochs},
                   {"final_loss", r.final_loss},
                   {"train_accuracy", r.train_accuracy},
                   {"val_accuracy", r.val_accuracy}};
    write_text(c.out / "report.json", report.dump(2) + "\n");
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s: loss %.4f, train accuracy %.4f, val accuracy %.4f\n",
                  det.identifier().c_str(), r.final_loss, r.train_accuracy, r.val_accuracy);
    log << buf;
    write_manifest(c, "train-toy", {{"model", "model.bin"}, {"report", report}});
    return kExitOk;
  });
}

int cmd_gen_data(const RunConfig& c, std::ostream& log) {
  return guarded(log, [&] {
    c.validate();
    auto samples = generate_synthetic_dataset(c.n_real, c.n_fake, c.seed, c.synthetic);
    write_dataset(samples, c.out);
    log << "wrote " << samples.size() << " samples to " << c.out.string() << '\n';
    write_manifest(c, "gen-data", {{"dataset", "manifest.json"}, {"samples", samples.size()}});
    return kExitOk;
  });
}

}  // namespace asma
