#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sadda/data.hpp"
#include "sadda/networks.hpp"
#include "sadda/objectives.hpp"

namespace sadda {

struct TrainConfig {
  ArchitecturePreset preset;
  std::uint64_t seed = 1;
  std::size_t batch_size = 32;
  std::size_t pretrain_epochs = 10;
  std::size_t adapt_max_epochs = 20;
  double pretrain_lr = 0.001;
  double adapt_lr = 0.0002;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::size_t disc_steps_per_encoder_step = 1;
  /// Epochs of discriminator-only updates before the alternating loop.
  std::size_t disc_warmup_epochs = 0;
  /// Weights of the supervised and source-vs-target terms of the
  /// discriminator loss.
  double sup_disc_weight = 1.0;
  double adv_disc_weight = 1.0;
  std::size_t early_stop_window = 5;
  double early_stop_rel_change = 0.01;
  double failure_loss_floor = 1e-4;

  void validate() const;
};

enum class StopReason { converged, max_epochs, failure_mode };

const char* stop_reason_name(StopReason r);

/// One epoch of either phase. Pretraining fills class_loss and
/// source_accuracy; adaptation fills the three adversarial losses too.
struct EpochMetrics {
  std::size_t epoch = 0;
  double class_loss = 0.0;
  double disc_loss = 0.0;
  double adv_loss = 0.0;
  double sup_disc_loss = 0.0;
  double source_accuracy = 0.0;
  std::optional<double> target_accuracy;
};

class RunReport {
 public:
  explicit RunReport(std::string phase) : phase_(std::move(phase)) {}

  const std::string& phase() const { return phase_; }
  const std::vector<EpochMetrics>& history() const { return history_; }
  void append(const EpochMetrics& m) { history_.push_back(m); }

  /// Throws if a reason was already recorded.
  void set_stop_reason(StopReason r);
  const std::optional<StopReason>& stop_reason() const { return stop_reason_; }

  std::vector<std::string> checkpoints;
  std::uint64_t disc_updates = 0;
  std::uint64_t encoder_updates = 0;
  std::uint64_t warmup_disc_updates = 0;

 private:
  std::string phase_;
  std::vector<EpochMetrics> history_;
  std::optional<StopReason> stop_reason_;
};

struct PretrainResult {
  ParameterSet<float> encoder;
  ParameterSet<float> classifier;
  RunReport report{"pretrain"};
};

/// Joint encoder + classifier training on labeled data with Adam.
PretrainResult pretrain(const DomainDataset& source, const TrainConfig& cfg);

/// Labeled sets used only to report accuracies during adaptation.
struct AdaptMonitor {
  const DomainDataset* source_eval = nullptr;
  const DomainDataset* target_eval = nullptr;
};

struct AdaptResult {
  ParameterSet<float> target_encoder;
  ParameterSet<float> discriminator;
  RunReport report{"adapt"};
};

/// Single-iteration hooks for inspecting the alternating updates.
struct AdaptObserver {
  std::function<void(const ParameterSet<float>& target_encoder,
                     const ParameterSet<float>& discriminator)>
      after_disc_step;
  std::function<void(const ParameterSet<float>& target_encoder,
                     const ParameterSet<float>& discriminator)>
      after_encoder_step;
};

/// Adversarial training of a target encoder initialised from `source_encoder`.
/// Target labels, if present, are ignored.
AdaptResult adapt(const ParameterSet<float>& source_encoder,
                  const ParameterSet<float>& source_classifier, const DomainDataset& source,
                  const DomainDataset& target, const TrainConfig& cfg,
                  const AdaptMonitor& monitor = {}, const AdaptObserver& observer = {});

/// Argmax accuracy of classifier(encoder(x)) on a labeled dataset. Work is
/// sharded over `threads` (0 reads SADDA_THREADS, default 1).
double compose_and_evaluate(const ParameterSet<float>& encoder,
                            const ParameterSet<float>& classifier,
                            const ArchitecturePreset& preset, const DomainDataset& ds,
                            std::size_t threads = 0);

std::size_t evaluation_threads();

bool detect_convergence(const std::vector<EpochMetrics>& history, const TrainConfig& cfg);
bool detect_failure(const std::vector<EpochMetrics>& history, const TrainConfig& cfg);

}  // namespace sadda
