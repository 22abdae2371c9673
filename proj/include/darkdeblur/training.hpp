#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <torch/torch.h>

#include "darkdeblur/blur_synth.hpp"
#include "darkdeblur/config.hpp"
#include "darkdeblur/data.hpp"
#include "darkdeblur/model.hpp"
#include "darkdeblur/objectives.hpp"

namespace darkdeblur {

/// Ablation ladder. Each variant adds one component to the previous one:
/// base (plain dense blocks, identity skips, L1 only) -> ca (+channel
/// attention) -> cg (+contextual gates) -> full (+multi-term loss with the
/// adversarial discriminator).
enum class Ablation { base, ca, cg, full };

Ablation parse_ablation(std::string_view name);
std::string_view ablation_name(Ablation a);
bool uses_multi_term_loss(Ablation a);

/// `base` with the attention/gate switches set for the variant.
GeneratorConfig variant_config(Ablation a, GeneratorConfig base = {});

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double adam_eps = 1e-8;
  int batch_size = 16;
  std::int64_t total_steps = 100000;
  Ablation ablation = Ablation::full;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 5000;
  std::int64_t log_every = 100;
  /// Generator gradient-norm clip; 0 disables clipping.
  double clip_norm = 0.0;
  int patch_size = 128;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  LossWeights weights;
  SynthConfig synth;

  void validate() const;
  KeyValues to_key_values() const;
  /// Overrides fields present in `kv`; unknown keys are a ConfigError.
  void apply(const KeyValues& kv);
};

/// SynthConfig <-> key/values (keys optionally prefixed, e.g. "synth.").
KeyValues synth_to_key_values(const SynthConfig& cfg, const std::string& prefix = "",
                              bool include_seed = true);
/// Applies recognised keys; returns the keys it consumed.
std::vector<std::string> apply_synth_keys(SynthConfig& cfg, const KeyValues& kv,
                                          const std::string& prefix = "",
                                          bool include_seed = true);

inline constexpr const char* kCheckpointFormat = "darkdeblur-ckpt-v1";

/// Device from $DARKDEBLUR_DEVICE ("cpu" default, or "cuda[:n]").
torch::Device select_device();

struct StepResult {
  LossBreakdown losses;
  double d_loss = 0.0;
  bool adversarial = false;
};

/// Generator/discriminator pair, their Adam optimisers and the step counter.
class Trainer {
 public:
  /// `extractor` is required for the full variant.
  explicit Trainer(TrainConfig cfg, std::shared_ptr<FeatureExtractor> extractor = nullptr,
                   torch::Device device = torch::kCPU);

  /// One discriminator update on (sharp, blurry) vs detached (fake, blurry),
  /// then one generator update on the variant's objective. Throws
  /// IntegrityError if any loss is non-finite.
  StepResult train_step(const Batch& batch);

  /// Archive with parameters, buffers, optimiser moments, the step counter,
  /// RNG states and the configuration snapshot.
  void save_checkpoint(const std::filesystem::path& path, const StreamPosition& stream) const;
  /// Restores everything written by save_checkpoint; returns the data
  /// stream position to resume from.
  StreamPosition load_checkpoint(const std::filesystem::path& path);

  static TrainConfig read_checkpoint_config(const std::filesystem::path& path);

  std::int64_t step() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  Generator& generator() { return generator_; }
  /// Null for variants without the adversarial term.
  Discriminator& discriminator() { return discriminator_; }
  /// Trainable parameters of the networks the variant optimises.
  std::int64_t trainable_parameters() const;

 private:
  TrainConfig cfg_;
  std::shared_ptr<FeatureExtractor> extractor_;
  torch::Device device_;
  Generator generator_{nullptr};
  Discriminator discriminator_{nullptr};
  std::unique_ptr<torch::optim::Adam> g_optim_;
  std::unique_ptr<torch::optim::Adam> d_optim_;
  std::int64_t step_ = 0;
};

/// Loops train_step until cfg.total_steps, appending one JSON record per
/// log_every steps to <out>/train_log.jsonl and writing
/// <out>/checkpoint_<step>.pt every checkpoint_every steps and at the end.
/// With `resume`, continues from that checkpoint (same data order as an
/// uninterrupted run).
Trainer train(const TrainConfig& cfg, TrainingStream& stream, const std::filesystem::path& out,
              const std::optional<std::filesystem::path>& resume = std::nullopt,
              std::shared_ptr<FeatureExtractor> extractor = nullptr,
              torch::Device device = torch::kCPU);

std::filesystem::path checkpoint_path(const std::filesystem::path& out, std::int64_t step);

/// Generator stored in a checkpoint, in inference mode.
Generator load_generator(const std::filesystem::path& path, torch::Device device = torch::kCPU);

}  // namespace darkdeblur
