#include "darkdeblur/training.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <ATen/CPUGeneratorImpl.h>
#include <ATen/core/Generator.h>

#include "json.hpp"

#include "darkdeblur/errors.hpp"
#include "darkdeblur/log.hpp"

namespace darkdeblur {

// ---------------------------------------------------------------------------
// Variants and configuration
// ---------------------------------------------------------------------------

Ablation parse_ablation(std::string_view name) {
  if (name == "base") return Ablation::base;
  if (name == "ca") return Ablation::ca;
  if (name == "cg") return Ablation::cg;
  if (name == "full") return Ablation::full;
  throw ConfigError("unknown ablation '" + std::string(name) + "' (base, ca, cg, full)");
}

std::string_view ablation_name(Ablation a) {
  switch (a) {
    case Ablation::base: return "base";
    case Ablation::ca: return "ca";
    case Ablation::cg: return "cg";
    case Ablation::full: return "full";
  }
  return "full";
}

bool uses_multi_term_loss(Ablation a) { return a == Ablation::full; }

GeneratorConfig variant_config(Ablation a, GeneratorConfig base) {
  base.use_attention = a != Ablation::base;
  base.use_gates = a == Ablation::cg || a == Ablation::full;
  return base;
}

namespace {

std::string join(const std::vector<std::int64_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<std::int64_t> to_i64(const std::vector<long long>& v) {
  return {v.begin(), v.end()};
}

}  // namespace

KeyValues synth_to_key_values(const SynthConfig& cfg, const std::string& prefix,
                              bool include_seed) {
  KeyValues kv;
  kv.set(prefix + "canvas_size", std::to_string(cfg.canvas_size));
  kv.set(prefix + "traj_samples", std::to_string(cfg.traj_samples));
  kv.set(prefix + "impulse_prob", format_double(cfg.impulse_prob));
  kv.set(prefix + "inertia", format_double(cfg.inertia));
  kv.set(prefix + "max_anxiety", format_double(cfg.max_anxiety));
  kv.set(prefix + "noise_sigma_min", format_double(cfg.noise_sigma_range[0]));
  kv.set(prefix + "noise_sigma_max", format_double(cfg.noise_sigma_range[1]));
  if (include_seed) kv.set(prefix + "seed", std::to_string(cfg.seed));
  return kv;
}

std::vector<std::string> apply_synth_keys(SynthConfig& cfg, const KeyValues& kv,
                                          const std::string& prefix, bool include_seed) {
  std::vector<std::string> used;
  const auto take = [&](const char* name) -> std::optional<std::string> {
    auto v = kv.get(prefix + name);
    if (v) used.push_back(prefix + name);
    return v;
  };
  if (auto v = take("canvas_size")) cfg.canvas_size = static_cast<int>(parse_int(prefix + "canvas_size", *v));
  if (auto v = take("traj_samples")) cfg.traj_samples = static_cast<int>(parse_int(prefix + "traj_samples", *v));
  if (auto v = take("impulse_prob")) cfg.impulse_prob = parse_double(prefix + "impulse_prob", *v);
  if (auto v = take("inertia")) cfg.inertia = parse_double(prefix + "inertia", *v);
  if (auto v = take("max_anxiety")) cfg.max_anxiety = parse_double(prefix + "max_anxiety", *v);
  if (auto v = take("noise_sigma_min")) cfg.noise_sigma_range[0] = parse_double(prefix + "noise_sigma_min", *v);
  if (auto v = take("noise_sigma_max")) cfg.noise_sigma_range[1] = parse_double(prefix + "noise_sigma_max", *v);
  if (include_seed) {
    if (auto v = take("seed")) cfg.seed = static_cast<std::uint64_t>(parse_int(prefix + "seed", *v));
  }
  return used;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("beta1/beta2 must lie in [0, 1)");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (total_steps < 0) throw ConfigError("total_steps must be >= 0");
  if (checkpoint_every < 1 || log_every < 1) {
    throw ConfigError("checkpoint_every and log_every must be >= 1");
  }
  if (clip_norm < 0.0) throw ConfigError("clip_norm must be >= 0");
  if (patch_size < 8 || patch_size % 8 != 0) {
    throw ConfigError("patch_size must be a positive multiple of 8");
  }
  generator.validate();
  discriminator.validate();
  weights.validate();
  synth.validate();
}

KeyValues TrainConfig::to_key_values() const {
  KeyValues kv = synth_to_key_values(synth, "synth.", false);
  kv.set("lr", format_double(lr));
  kv.set("beta1", format_double(beta1));
  kv.set("beta2", format_double(beta2));
  kv.set("adam_eps", format_double(adam_eps));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("total_steps", std::to_string(total_steps));
  kv.set("ablation", std::string(ablation_name(ablation)));
  kv.set("seed", std::to_string(seed));
  kv.set("checkpoint_every", std::to_string(checkpoint_every));
  kv.set("log_every", std::to_string(log_every));
  kv.set("clip_norm", format_double(clip_norm));
  kv.set("patch_size", std::to_string(patch_size));
  kv.set("generator.feature_levels", join(generator.feature_levels));
  kv.set("generator.gate_widths", join(generator.gate_widths));
  kv.set("generator.dense_layers", std::to_string(generator.dense_layers));
  kv.set("generator.dense_growth", std::to_string(generator.dense_growth));
  kv.set("generator.leaky_slope", format_double(generator.leaky_slope));
  kv.set("generator.attention_reduction", std::to_string(generator.attention_reduction));
  kv.set("discriminator.base_width", std::to_string(discriminator.base_width));
  kv.set("discriminator.num_blocks", std::to_string(discriminator.num_blocks));
  kv.set("loss.lambda_f", format_double(weights.lambda_f));
  kv.set("loss.lambda_g", format_double(weights.lambda_g));
  return kv;
}

void TrainConfig::apply(const KeyValues& kv) {
  std::set<std::string> known;
  for (const auto& k : apply_synth_keys(synth, kv, "synth.", false)) known.insert(k);
  for (const auto& [key, value] : kv.entries()) {
    if (known.count(key)) continue;
    if (key == "lr") lr = parse_double(key, value);
    else if (key == "beta1") beta1 = parse_double(key, value);
    else if (key == "beta2") beta2 = parse_double(key, value);
    else if (key == "adam_eps") adam_eps = parse_double(key, value);
    else if (key == "batch_size") batch_size = static_cast<int>(parse_int(key, value));
    else if (key == "total_steps") total_steps = parse_int(key, value);
    else if (key == "ablation") ablation = parse_ablation(value);
    else if (key == "seed") seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "checkpoint_every") checkpoint_every = parse_int(key, value);
    else if (key == "log_every") log_every = parse_int(key, value);
    else if (key == "clip_norm") clip_norm = parse_double(key, value);
    else if (key == "patch_size") patch_size = static_cast<int>(parse_int(key, value));
    else if (key == "generator.feature_levels") generator.feature_levels = to_i64(parse_int_list(key, value));
    else if (key == "generator.gate_widths") generator.gate_widths = to_i64(parse_int_list(key, value));
    else if (key == "generator.dense_layers") generator.dense_layers = parse_int(key, value);
    else if (key == "generator.dense_growth") generator.dense_growth = parse_int(key, value);
    else if (key == "generator.leaky_slope") generator.leaky_slope = parse_double(key, value);
    else if (key == "generator.attention_reduction") generator.attention_reduction = parse_int(key, value);
    else if (key == "discriminator.base_width") discriminator.base_width = parse_int(key, value);
    else if (key == "discriminator.num_blocks") discriminator.num_blocks = parse_int(key, value);
    else if (key == "loss.lambda_f") weights.lambda_f = parse_double(key, value);
    else if (key == "loss.lambda_g") weights.lambda_g = parse_double(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
  }
}

torch::Device select_device() {
  const char* env = std::getenv("DARKDEBLUR_DEVICE");
  const std::string name = env && *env ? env : "cpu";
  try {
    torch::Device device(name);
    if (device.is_cuda() && !torch::cuda::is_available()) {
      throw ConfigError("DARKDEBLUR_DEVICE=" + name + " but CUDA is not available");
    }
    return device;
  } catch (const c10::Error&) {
    throw ConfigError("invalid DARKDEBLUR_DEVICE '" + name + "'");
  }
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

Trainer::Trainer(TrainConfig cfg, std::shared_ptr<FeatureExtractor> extractor,
                 torch::Device device)
    : cfg_(std::move(cfg)), extractor_(std::move(extractor)), device_(device) {
  cfg_.generator = variant_config(cfg_.ablation, cfg_.generator);
  cfg_.validate();
  const bool adversarial = uses_multi_term_loss(cfg_.ablation);
  if (adversarial && !extractor_) {
    throw ConfigError("the full variant needs a perceptual feature extractor");
  }
  torch::manual_seed(cfg_.seed);
  generator_ = Generator(cfg_.generator);
  generator_->to(device_);
  const auto adam = torch::optim::AdamOptions(cfg_.lr)
                        .betas({cfg_.beta1, cfg_.beta2})
                        .eps(cfg_.adam_eps)
                        .weight_decay(0.0);
  g_optim_ = std::make_unique<torch::optim::Adam>(generator_->parameters(), adam);
  if (adversarial) {
    discriminator_ = Discriminator(cfg_.discriminator);
    discriminator_->to(device_);
    d_optim_ = std::make_unique<torch::optim::Adam>(discriminator_->parameters(), adam);
    extractor_->to(device_);
  }
}

std::int64_t Trainer::trainable_parameters() const {
  std::int64_t n = count_parameters(*generator_);
  if (discriminator_) n += count_parameters(*discriminator_);
  return n;
}

StepResult Trainer::train_step(const Batch& batch) {
  const auto blurry = images_to_tensor(batch.blurry).to(device_);
  const auto sharp = images_to_tensor(batch.sharp).to(device_);
  generator_->train();
  StepResult result;

  const auto fake = generator_->forward(blurry);
  LossTerms terms;
  if (discriminator_) {
    discriminator_->train();
    d_optim_->zero_grad();
    const auto d_real = discriminator_->forward(sharp, blurry);
    const auto d_fake = discriminator_->forward(fake.detach(), blurry);
    const auto d_loss = discriminator_loss(d_real, d_fake);
    result.d_loss = d_loss.item<double>();
    result.adversarial = true;
    if (!std::isfinite(result.d_loss)) {
      throw IntegrityError("non-finite discriminator loss at step " + std::to_string(step_ + 1));
    }
    d_loss.backward();
    d_optim_->step();

    for (auto& p : discriminator_->parameters()) p.set_requires_grad(false);
    terms = total_loss(fake, sharp, discriminator_->forward(fake, blurry), extractor_.get(),
                       cfg_.weights);
    for (auto& p : discriminator_->parameters()) p.set_requires_grad(true);
  } else {
    terms = reconstruction_only(fake, sharp);
  }

  result.losses = terms.breakdown();
  if (!result.losses.finite()) {
    throw IntegrityError("non-finite generator loss at step " + std::to_string(step_ + 1));
  }
  g_optim_->zero_grad();
  terms.total.backward();
  if (cfg_.clip_norm > 0.0) {
    torch::nn::utils::clip_grad_norm_(generator_->parameters(), cfg_.clip_norm);
  }
  g_optim_->step();
  ++step_;
  return result;
}

namespace {

// libtorch's own optimizer serialisation keys state by parameter address,
// which makes the archive layout differ from one process to the next.
// State is stored here by parameter position instead.
void save_adam(const torch::optim::Adam& opt, torch::serialize::OutputArchive& out) {
  const auto& params = opt.param_groups().at(0).params();
  const auto& state = opt.state();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto it = state.find(params[i].unsafeGetTensorImpl());
    if (it == state.end()) continue;
    const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
    torch::serialize::OutputArchive entry;
    entry.write("step", c10::IValue(s.step()));
    entry.write("exp_avg", s.exp_avg());
    entry.write("exp_avg_sq", s.exp_avg_sq());
    out.write(std::to_string(i), entry);
  }
}

void load_adam(torch::optim::Adam& opt, torch::serialize::InputArchive& in) {
  const auto& params = opt.param_groups().at(0).params();
  auto& state = opt.state();
  state.clear();
  for (std::size_t i = 0; i < params.size(); ++i) {
    torch::serialize::InputArchive entry;
    if (!in.try_read(std::to_string(i), entry)) continue;
    c10::IValue step;
    torch::Tensor exp_avg, exp_avg_sq;
    entry.read("step", step);
    entry.read("exp_avg", exp_avg);
    entry.read("exp_avg_sq", exp_avg_sq);
    if (!exp_avg.sizes().equals(params[i].sizes())) {
      throw ConfigError("optimizer state does not match parameter " + std::to_string(i));
    }
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(step.toInt());
    s->exp_avg(exp_avg.to(params[i].device()));
    s->exp_avg_sq(exp_avg_sq.to(params[i].device()));
    state[params[i].unsafeGetTensorImpl()] = std::move(s);
  }
}

std::string stream_state_text(std::uint64_t seed, const StreamPosition& pos) {
  return std::to_string(seed) + " " + std::to_string(pos.epoch) + " " + std::to_string(pos.batch);
}

}  // namespace

void Trainer::save_checkpoint(const std::filesystem::path& path,
                              const StreamPosition& stream) const {
  torch::serialize::OutputArchive archive;
  archive.write("format", c10::IValue(std::string(kCheckpointFormat)));
  archive.write("step", c10::IValue(step_));
  archive.write("config", c10::IValue(cfg_.to_key_values().to_text()));
  archive.write("stream_state", c10::IValue(stream_state_text(cfg_.seed, stream)));
  archive.write("torch_rng_state", at::detail::getDefaultCPUGenerator().get_state());

  torch::serialize::OutputArchive g, g_opt;
  generator_->save(g);
  save_adam(*g_optim_, g_opt);
  archive.write("generator", g);
  archive.write("generator_optimizer", g_opt);
  if (discriminator_) {
    torch::serialize::OutputArchive d, d_opt;
    discriminator_->save(d);
    save_adam(*d_optim_, d_opt);
    archive.write("discriminator", d);
    archive.write("discriminator_optimizer", d_opt);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  archive.save_to(path.string());
}

namespace {

torch::serialize::InputArchive open_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("checkpoint not found: " + path.string());
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw ConfigError("cannot read checkpoint " + path.string() + ": " +
                      e.what_without_backtrace());
  }
  c10::IValue format;
  if (!archive.try_read("format", format) || !format.isString() ||
      format.toStringRef() != kCheckpointFormat) {
    throw ConfigError(path.string() + " is not a " + kCheckpointFormat + " checkpoint");
  }
  return archive;
}

TrainConfig config_from_archive(torch::serialize::InputArchive& archive) {
  c10::IValue text;
  archive.read("config", text);
  TrainConfig cfg;
  cfg.apply(KeyValues::parse(text.toStringRef(), "checkpoint config"));
  cfg.generator = variant_config(cfg.ablation, cfg.generator);
  return cfg;
}

}  // namespace

TrainConfig Trainer::read_checkpoint_config(const std::filesystem::path& path) {
  auto archive = open_checkpoint(path);
  return config_from_archive(archive);
}

StreamPosition Trainer::load_checkpoint(const std::filesystem::path& path) {
  auto archive = open_checkpoint(path);
  c10::IValue step, stream;
  archive.read("step", step);
  archive.read("stream_state", stream);
  torch::Tensor rng_state;
  archive.read("torch_rng_state", rng_state);

  torch::serialize::InputArchive g, g_opt;
  archive.read("generator", g);
  archive.read("generator_optimizer", g_opt);
  generator_->load(g);
  generator_->to(device_);
  load_adam(*g_optim_, g_opt);
  if (discriminator_) {
    torch::serialize::InputArchive d, d_opt;
    if (!archive.try_read("discriminator", d)) {
      throw ConfigError("checkpoint has no discriminator but the variant needs one");
    }
    archive.read("discriminator_optimizer", d_opt);
    discriminator_->load(d);
    discriminator_->to(device_);
    load_adam(*d_optim_, d_opt);
  }
  auto cpu_generator = at::detail::getDefaultCPUGenerator();
  cpu_generator.set_state(rng_state);
  step_ = step.toInt();

  std::uint64_t seed = 0;
  StreamPosition pos;
  std::istringstream in(stream.toStringRef());
  in >> seed >> pos.epoch >> pos.batch;
  return pos;
}

// ---------------------------------------------------------------------------

std::filesystem::path checkpoint_path(const std::filesystem::path& out, std::int64_t step) {
  char name[64];
  std::snprintf(name, sizeof(name), "checkpoint_%06lld.pt", static_cast<long long>(step));
  return out / name;
}

Trainer train(const TrainConfig& cfg, TrainingStream& stream, const std::filesystem::path& out,
              const std::optional<std::filesystem::path>& resume,
              std::shared_ptr<FeatureExtractor> extractor, torch::Device device) {
  Trainer trainer(cfg, std::move(extractor), device);
  if (resume) stream.seek(trainer.load_checkpoint(*resume));

  std::filesystem::create_directories(out);
  {
    std::ofstream snapshot(out / "config.txt");
    snapshot << trainer.config().to_key_values().to_text();
  }
  std::ofstream log(out / "train_log.jsonl", std::ios::app);
  const auto start = std::chrono::steady_clock::now();

  std::int64_t last_saved = -1;
  while (trainer.step() < cfg.total_steps) {
    const StreamPosition pos = stream.position();
    const Batch batch = stream.next();
    StepResult result;
    try {
      result = trainer.train_step(batch);
    } catch (const IntegrityError& e) {
      nlohmann::ordered_json record{{"step", trainer.step() + 1},
                                    {"error", e.what()},
                                    {"epoch", pos.epoch},
                                    {"batch_index", pos.batch}};
      log << record.dump() << "\n";
      throw IntegrityError(std::string(e.what()) + " (epoch " + std::to_string(pos.epoch) +
                           ", batch " + std::to_string(pos.batch) + "); training halted");
    }
    const std::int64_t step = trainer.step();
    if (step % cfg.log_every == 0) {
      const double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      nlohmann::ordered_json record{
          {"step", step},
          {"lr", cfg.lr},
          {"L_R", result.losses.reconstruction},
          {"L_S", result.losses.structure},
          {"L_F", result.losses.perceptual},
          {"L_G", result.losses.adversarial},
          {"total", result.losses.total},
          {"D_loss", result.adversarial ? nlohmann::ordered_json(result.d_loss) : nullptr},
          {"wall_clock", elapsed}};
      log << record.dump() << "\n" << std::flush;
    }
    if (step % cfg.checkpoint_every == 0 || step == cfg.total_steps) {
      trainer.save_checkpoint(checkpoint_path(out, step), stream.position());
      last_saved = step;
    }
  }
  if (last_saved != trainer.step() && !std::filesystem::exists(checkpoint_path(out, trainer.step()))) {
    trainer.save_checkpoint(checkpoint_path(out, trainer.step()), stream.position());
  }
  return trainer;
}

Generator load_generator(const std::filesystem::path& path, torch::Device device) {
  auto archive = open_checkpoint(path);
  const TrainConfig cfg = config_from_archive(archive);
  Generator generator(cfg.generator);
  torch::serialize::InputArchive g;
  archive.read("generator", g);
  generator->load(g);
  generator->to(device);
  generator->eval();
  return generator;
}

}  // namespace darkdeblur
