#include "ampe/config.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace ampe {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& path) {
  require(j.is_object(), "config" + path + " must be an object");
  for (const auto& [key, _] : j.items())
    require(allowed.count(key) > 0, "unknown config key: " + path + "." + key);
}

template <typename T>
void get_to(const json& j, const std::string& key, T& out, const std::string& path) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw ValidationError("config" + path + "." + key + ": " + e.what());
  }
}

void parse_model(const json& j, ModelSpec& m, const std::string& path) {
  check_keys(j,
             {"family", "d_max", "k_clusters", "n_classes", "hidden_layers",
              "hidden_units", "activation", "sigma2", "tau"},
             path);
  std::string family = family_name(m.family), act;
  get_to(j, "family", family, path);
  m.family = family_from_name(family);
  get_to(j, "d_max", m.d_max, path);
  get_to(j, "k_clusters", m.k_clusters, path);
  get_to(j, "n_classes", m.n_classes, path);
  get_to(j, "hidden_layers", m.hidden_layers, path);
  get_to(j, "hidden_units", m.hidden_units, path);
  get_to(j, "activation", act, path);
  if (!act.empty()) {
    require(act == "relu" || act == "tanh", "config" + path + ".activation: relu|tanh");
    m.activation = act == "relu" ? Activation::Relu : Activation::Tanh;
  }
  get_to(j, "sigma2", m.sigma2, path);
  get_to(j, "tau", m.tau, path);
}

void parse_generator(const json& j, GeneratorConfig& g, const std::string& path) {
  check_keys(j,
             {"source", "csv_path", "n_lo", "n_hi", "x_dist", "dim_mode", "dim",
              "batch_size", "n_max"},
             path);
  std::string source = source_name(g.source), x_dist, dim_mode;
  get_to(j, "source", source, path);
  g.source = source_from_name(source);
  get_to(j, "csv_path", g.csv_path, path);
  get_to(j, "n_lo", g.n_lo, path);
  get_to(j, "n_hi", g.n_hi, path);
  get_to(j, "x_dist", x_dist, path);
  if (!x_dist.empty()) {
    require(x_dist == "std_normal" || x_dist == "uniform_pm1",
            "config" + path + ".x_dist: std_normal|uniform_pm1");
    g.x_dist = x_dist == "std_normal" ? XDist::StdNormal : XDist::UniformPm1;
  }
  get_to(j, "dim_mode", dim_mode, path);
  if (!dim_mode.empty()) {
    require(dim_mode == "fixed" || dim_mode == "uniform_up_to",
            "config" + path + ".dim_mode: fixed|uniform_up_to");
    g.dim_mode = dim_mode == "fixed" ? DimMode::Fixed : DimMode::UniformUpTo;
  }
  get_to(j, "dim", g.dim, path);
  get_to(j, "batch_size", g.batch_size, path);
  get_to(j, "n_max", g.n_max, path);
}

void parse_encoder(const json& j, EncoderConfig& e, const std::string& path) {
  check_keys(j, {"kind", "summary_dim", "transformer", "deepsets", "gru"}, path);
  std::string kind = encoder_name(e.kind);
  get_to(j, "kind", kind, path);
  e.kind = encoder_from_name(kind);
  get_to(j, "summary_dim", e.summary_dim, path);
  if (j.contains("transformer")) {
    const json& t = j.at("transformer");
    check_keys(t, {"layers", "model_dim", "ff_dim", "heads"}, path + ".transformer");
    get_to(t, "layers", e.transformer.layers, path + ".transformer");
    get_to(t, "model_dim", e.transformer.model_dim, path + ".transformer");
    get_to(t, "ff_dim", e.transformer.ff_dim, path + ".transformer");
    get_to(t, "heads", e.transformer.heads, path + ".transformer");
  }
  if (j.contains("deepsets")) {
    const json& d = j.at("deepsets");
    check_keys(d, {"embed_layers", "regress_layers", "hidden"}, path + ".deepsets");
    get_to(d, "embed_layers", e.deepsets.embed_layers, path + ".deepsets");
    get_to(d, "regress_layers", e.deepsets.regress_layers, path + ".deepsets");
    get_to(d, "hidden", e.deepsets.hidden, path + ".deepsets");
  }
  if (j.contains("gru")) {
    const json& g = j.at("gru");
    check_keys(g, {"layers", "hidden"}, path + ".gru");
    get_to(g, "layers", e.gru.layers, path + ".gru");
    get_to(g, "hidden", e.gru.hidden, path + ".gru");
  }
}

void parse_head(const json& j, HeadConfig& h, const std::string& path) {
  check_keys(j, {"kind", "gaussian", "flow"}, path);
  std::string kind = head_name(h.kind);
  get_to(j, "kind", kind, path);
  h.kind = head_from_name(kind);
  if (j.contains("gaussian")) {
    const json& g = j.at("gaussian");
    check_keys(g, {"hidden", "log_sigma_lo", "log_sigma_hi"}, path + ".gaussian");
    get_to(g, "hidden", h.gaussian.hidden, path + ".gaussian");
    get_to(g, "log_sigma_lo", h.gaussian.log_sigma_lo, path + ".gaussian");
    get_to(g, "log_sigma_hi", h.gaussian.log_sigma_hi, path + ".gaussian");
  }
  if (j.contains("flow")) {
    const json& f = j.at("flow");
    check_keys(f, {"blocks", "subnet_hidden", "clamp"}, path + ".flow");
    get_to(f, "blocks", h.flow.blocks, path + ".flow");
    get_to(f, "subnet_hidden", h.flow.subnet_hidden, path + ".flow");
    get_to(f, "clamp", h.flow.clamp, path + ".flow");
  }
}

void parse_train(const json& j, TrainConfig& t, const std::string& path) {
  check_keys(j,
             {"objective", "iterations", "warmup_iters", "mc_samples", "lr",
              "checkpoint_interval"},
             path);
  std::string objective = objective_name(t.objective);
  get_to(j, "objective", objective, path);
  t.objective = objective_from_name(objective);
  get_to(j, "iterations", t.iterations, path);
  get_to(j, "warmup_iters", t.warmup_iters, path);
  get_to(j, "mc_samples", t.mc_samples, path);
  get_to(j, "lr", t.lr, path);
  get_to(j, "checkpoint_interval", t.checkpoint_interval, path);
}

void parse_eval(const json& j, EvalConfig& e, const std::string& path) {
  check_keys(j,
             {"posterior_samples", "test_datasets", "metrics", "sym_kl_mc_samples",
              "w2_samples"},
             path);
  get_to(j, "posterior_samples", e.posterior_samples, path);
  get_to(j, "test_datasets", e.test_datasets, path);
  get_to(j, "metrics", e.metrics, path);
  get_to(j, "sym_kl_mc_samples", e.sym_kl_mc_samples, path);
  get_to(j, "w2_samples", e.w2_samples, path);
}

void parse_baseline(const json& j, BaselineConfig& b, const std::string& path) {
  check_keys(j, {"map_lr", "map_iters", "map_lr_grid", "map_grid_search", "mcmc"},
             path);
  get_to(j, "map_lr", b.map_lr, path);
  get_to(j, "map_iters", b.map_iters, path);
  get_to(j, "map_lr_grid", b.map_lr_grid, path);
  get_to(j, "map_grid_search", b.map_grid_search, path);
  if (j.contains("mcmc")) {
    const json& m = j.at("mcmc");
    check_keys(m, {"step_size", "total_steps", "burn_in", "thin_interval", "chains"},
               path + ".mcmc");
    get_to(m, "step_size", b.mcmc.step_size, path + ".mcmc");
    get_to(m, "total_steps", b.mcmc.total_steps, path + ".mcmc");
    get_to(m, "burn_in", b.mcmc.burn_in, path + ".mcmc");
    get_to(m, "thin_interval", b.mcmc.thin_interval, path + ".mcmc");
    get_to(m, "chains", b.mcmc.chains, path + ".mcmc");
  }
}

json merge(json base, const json& over) {
  if (!base.is_object() || !over.is_object()) return over;
  for (const auto& [key, value] : over.items()) {
    if (base.contains(key) && base[key].is_object() && value.is_object())
      base[key] = merge(base[key], value);
    else
      base[key] = value;
  }
  return base;
}

json preset_base(const std::string& family, int d, long iters, long warmup) {
  return json{{"model", {{"family", family}, {"d_max", d}}},
              {"generator", {{"dim_mode", "fixed"}, {"dim", d}}},
              {"train", {{"iterations", iters}, {"warmup_iters", warmup}}}};
}

json preset_vardim(const std::string& family, int d, long iters, long warmup) {
  json p = preset_base(family, d, iters, warmup);
  p["generator"]["dim_mode"] = "uniform_up_to";
  p["generator"]["dim"] = d;
  return p;
}

const std::map<std::string, json>& preset_table() {
  static const std::map<std::string, json> presets = [] {
    std::map<std::string, json> t;
    t["gm_2d"] = preset_base("gm", 2, 20000, 5000);
    t["gm_100d"] = preset_base("gm", 100, 20000, 5000);
    t["gmm_2d_k2"] =
        merge(preset_base("gmm", 2, 200000, 50000), json{{"model", {{"k_clusters", 2}}}});
    t["gmm_5d_k5"] =
        merge(preset_base("gmm", 5, 200000, 50000), json{{"model", {{"k_clusters", 5}}}});
    t["lr_1d"] = preset_base("lr", 1, 50000, 12500);
    t["lr_100d"] = preset_base("lr", 100, 50000, 12500);
    t["lc_2d"] = preset_base("lc", 2, 50000, 12500);
    t["lc_100d"] = preset_base("lc", 100, 50000, 12500);
    t["nlr_relu_1l_1d"] = merge(
        preset_base("nlr", 1, 100000, 25000),
        json{{"model", {{"hidden_layers", 1}, {"hidden_units", 32}, {"activation", "relu"}}}});
    t["nlr_tanh_1l_1d"] = merge(
        preset_base("nlr", 1, 100000, 25000),
        json{{"model", {{"hidden_layers", 1}, {"hidden_units", 32}, {"activation", "tanh"}}}});
    t["nlc_relu_1l_2d"] = merge(
        preset_base("nlc", 2, 100000, 25000),
        json{{"model", {{"hidden_layers", 1}, {"hidden_units", 32}, {"activation", "relu"}}}});
    t["gm_vardim_100"] = preset_vardim("gm", 100, 50000, 12500);
    t["gmm_vardim_5_k2"] = merge(preset_vardim("gmm", 5, 500000, 125000),
                                 json{{"model", {{"k_clusters", 2}}}});
    t["lr_vardim_100"] = preset_vardim("lr", 100, 100000, 25000);
    t["lc_vardim_100"] = preset_vardim("lc", 100, 100000, 25000);
    t["nlr_relu_1l_vardim_100"] = merge(
        preset_vardim("nlr", 100, 250000, 62500),
        json{{"model", {{"hidden_layers", 1}, {"hidden_units", 32}, {"activation", "relu"}}}});
    t["nlc_relu_1l_vardim_100"] = merge(
        preset_vardim("nlc", 100, 250000, 62500),
        json{{"model", {{"hidden_layers", 1}, {"hidden_units", 32}, {"activation", "relu"}}}});
    t["misspec_lr_1d"] = preset_base("lr", 1, 50000, 12500);
    t["misspec_nlr_tanh_1d"] = merge(
        preset_base("nlr", 1, 100000, 25000),
        json{{"model", {{"hidden_layers", 1}, {"hidden_units", 32}, {"activation", "tanh"}}}});
    return t;
  }();
  return presets;
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [name, _] : preset_table()) names.push_back(name);
  return names;
}

bool is_preset(const std::string& name) { return preset_table().count(name) > 0; }

json preset_json(const std::string& name) {
  auto it = preset_table().find(name);
  require(it != preset_table().end(), "unknown preset: " + name);
  return it->second;
}

void ExperimentConfig::validate() const {
  model.validate();
  generator.validate(model);
  encoder.validate();
  head.validate();
  train.validate();
  baseline.mcmc.validate();
  require(eval.posterior_samples >= 1, "eval.posterior_samples must be >= 1");
  require(eval.test_datasets >= 1, "eval.test_datasets must be >= 1");
  require(eval.sym_kl_mc_samples >= 2, "eval.sym_kl_mc_samples must be >= 2");
  require(eval.w2_samples >= 1 && eval.w2_samples <= 512,
          "eval.w2_samples must be in [1, 512]");
  require(baseline.map_lr > 0.0, "baseline.map_lr must be > 0");
  require(baseline.map_iters >= 0, "baseline.map_iters must be >= 0");
  require(!output_dir.empty(), "output_dir must not be empty");
  for (const auto& m : effective_metrics())
    require(m == "gm_l2" || m == "gmm_l2" || m == "predictive_l2" ||
                m == "accuracy" || m == "sym_kl" || m == "w2",
            "unknown metric: " + m);
  if (train.objective == Objective::ForwardKl)
    require(generator.source == Source::Model,
            "forward_kl can only train on datasets sampled from the assumed "
            "probabilistic model");
}

std::vector<std::string> ExperimentConfig::effective_metrics() const {
  if (!eval.metrics.empty()) return eval.metrics;
  switch (model.family) {
    case Family::GM: return {"gm_l2", "sym_kl", "w2"};
    case Family::GMM: return {"gmm_l2", "w2"};
    case Family::LR: return {"predictive_l2", "sym_kl", "w2"};
    case Family::NLR: return {"predictive_l2", "w2"};
    case Family::LC:
    case Family::NLC: return {"accuracy", "w2"};
  }
  return {};
}

ExperimentConfig config_from_json(const json& doc) {
  json j = doc;
  if (j.contains("preset")) {
    std::string preset = j.at("preset").get<std::string>();
    j.erase("preset");
    j = merge(preset_json(preset), j);
  }
  check_keys(j,
             {"name", "seed", "output_dir", "model", "generator", "encoder", "head",
              "train", "eval", "baseline"},
             "");
  ExperimentConfig cfg;
  get_to(j, "name", cfg.name, "");
  get_to(j, "seed", cfg.seed, "");
  get_to(j, "output_dir", cfg.output_dir, "");
  if (j.contains("model")) parse_model(j.at("model"), cfg.model, ".model");
  if (j.contains("generator"))
    parse_generator(j.at("generator"), cfg.generator, ".generator");
  if (j.contains("encoder")) parse_encoder(j.at("encoder"), cfg.encoder, ".encoder");
  if (j.contains("head")) parse_head(j.at("head"), cfg.head, ".head");
  if (j.contains("train")) parse_train(j.at("train"), cfg.train, ".train");
  if (j.contains("eval")) parse_eval(j.at("eval"), cfg.eval, ".eval");
  if (j.contains("baseline"))
    parse_baseline(j.at("baseline"), cfg.baseline, ".baseline");
  if (cfg.generator.dim == 0) cfg.generator.dim = cfg.model.d_max;
  cfg.train.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path_or_preset) {
  if (is_preset(path_or_preset)) {
    json j = preset_json(path_or_preset);
    j["name"] = path_or_preset;
    return config_from_json(j);
  }
  std::ifstream in(path_or_preset);
  require(in.good(), "cannot open config: " + path_or_preset);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("config parse error in " + path_or_preset + ": " + e.what());
  }
  return config_from_json(j);
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  j["model"] = {{"family", family_name(cfg.model.family)},
                {"d_max", cfg.model.d_max},
                {"k_clusters", cfg.model.k_clusters},
                {"n_classes", cfg.model.n_classes},
                {"hidden_layers", cfg.model.hidden_layers},
                {"hidden_units", cfg.model.hidden_units},
                {"activation", cfg.model.activation == Activation::Relu ? "relu" : "tanh"},
                {"sigma2", cfg.model.sigma2},
                {"tau", cfg.model.tau}};
  j["generator"] = {
      {"source", source_name(cfg.generator.source)},
      {"csv_path", cfg.generator.csv_path},
      {"n_lo", cfg.generator.n_lo},
      {"n_hi", cfg.generator.n_hi},
      {"x_dist", cfg.generator.x_dist == XDist::StdNormal ? "std_normal" : "uniform_pm1"},
      {"dim_mode", cfg.generator.dim_mode == DimMode::Fixed ? "fixed" : "uniform_up_to"},
      {"dim", cfg.generator.dim},
      {"batch_size", cfg.generator.batch_size},
      {"n_max", cfg.generator.n_max}};
  j["encoder"] = {{"kind", encoder_name(cfg.encoder.kind)},
                  {"summary_dim", cfg.encoder.summary_dim},
                  {"transformer",
                   {{"layers", cfg.encoder.transformer.layers},
                    {"model_dim", cfg.encoder.transformer.model_dim},
                    {"ff_dim", cfg.encoder.transformer.ff_dim},
                    {"heads", cfg.encoder.transformer.heads}}},
                  {"deepsets",
                   {{"embed_layers", cfg.encoder.deepsets.embed_layers},
                    {"regress_layers", cfg.encoder.deepsets.regress_layers},
                    {"hidden", cfg.encoder.deepsets.hidden}}},
                  {"gru", {{"layers", cfg.encoder.gru.layers}, {"hidden", cfg.encoder.gru.hidden}}}};
  j["head"] = {{"kind", head_name(cfg.head.kind)},
               {"gaussian",
                {{"hidden", cfg.head.gaussian.hidden},
                 {"log_sigma_lo", cfg.head.gaussian.log_sigma_lo},
                 {"log_sigma_hi", cfg.head.gaussian.log_sigma_hi}}},
               {"flow",
                {{"blocks", cfg.head.flow.blocks},
                 {"subnet_hidden", cfg.head.flow.subnet_hidden},
                 {"clamp", cfg.head.flow.clamp}}}};
  j["train"] = {{"objective", objective_name(cfg.train.objective)},
                {"iterations", cfg.train.iterations},
                {"warmup_iters", cfg.train.warmup_iters},
                {"mc_samples", cfg.train.mc_samples},
                {"lr", cfg.train.lr},
                {"checkpoint_interval", cfg.train.checkpoint_interval}};
  j["eval"] = {{"posterior_samples", cfg.eval.posterior_samples},
               {"test_datasets", cfg.eval.test_datasets},
               {"metrics", cfg.eval.metrics},
               {"sym_kl_mc_samples", cfg.eval.sym_kl_mc_samples},
               {"w2_samples", cfg.eval.w2_samples}};
  j["baseline"] = {{"map_lr", cfg.baseline.map_lr},
                   {"map_iters", cfg.baseline.map_iters},
                   {"map_lr_grid", cfg.baseline.map_lr_grid},
                   {"map_grid_search", cfg.baseline.map_grid_search},
                   {"mcmc",
                    {{"step_size", cfg.baseline.mcmc.step_size},
                     {"total_steps", cfg.baseline.mcmc.total_steps},
                     {"burn_in", cfg.baseline.mcmc.burn_in},
                     {"thin_interval", cfg.baseline.mcmc.thin_interval},
                     {"chains", cfg.baseline.mcmc.chains}}}};
  return j;
}

void apply_scale_divisor(ExperimentConfig& cfg, long divisor) {
  require(divisor >= 1, "scale divisor must be >= 1");
  if (divisor == 1) return;
  auto shrink = [divisor](long v) { return std::max<long>(v > 0 ? 1 : 0, v / divisor); };
  cfg.train.iterations = shrink(cfg.train.iterations);
  cfg.train.warmup_iters = std::min(cfg.train.warmup_iters / divisor,
                                    cfg.train.iterations);
  cfg.baseline.map_iters = shrink(cfg.baseline.map_iters);
  long burn = shrink(cfg.baseline.mcmc.burn_in);
  long kept = std::max<long>(1, cfg.baseline.mcmc.kept_per_chain() / divisor);
  cfg.baseline.mcmc.burn_in = burn;
  cfg.baseline.mcmc.total_steps = burn + kept * cfg.baseline.mcmc.thin_interval;
}

uint64_t config_hash(const ExperimentConfig& cfg) {
  const std::string canon = config_to_json(cfg).dump();
  return Rng::fnv1a64(canon);
}

}  // namespace ampe
