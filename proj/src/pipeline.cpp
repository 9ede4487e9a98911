#include "sadda/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace sadda {

namespace {

// Independent shuffling streams derived from one run seed.
constexpr std::uint64_t kPretrainStream = 0x70726574ULL;
constexpr std::uint64_t kSourceStream = 0x73726300ULL;
constexpr std::uint64_t kTargetStream = 0x74677400ULL;
constexpr std::size_t kEvalChunk = 256;

AdamConfig adam_config(const TrainConfig& cfg, double lr) {
  return AdamConfig{lr, cfg.beta1, cfg.beta2, 1e-8};
}

Tensor<float> gather_rows(const Tensor<float>& x, std::span<const std::size_t> rows) {
  auto dims = x.shape().dims();
  const std::size_t stride = x.numel() / dims[0];
  dims[0] = rows.size();
  Tensor<float> out{Shape(dims)};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(x.raw() + rows[r] * stride, stride, out.raw() + r * stride);
  }
  return out;
}

// Row-chunked graph-free encoding of a whole dataset.
Tensor<float> encode_all(const ParameterSet<float>& encoder, const ArchitecturePreset& preset,
                         const DomainDataset& ds) {
  auto dims = preset.feature_shape().dims();
  dims.insert(dims.begin(), ds.size());
  Tensor<float> out{Shape(dims)};
  const std::size_t stride = out.numel() / ds.size();
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < ds.size(); start += kEvalChunk) {
    rows.clear();
    for (std::size_t i = start; i < std::min(ds.size(), start + kEvalChunk); ++i) rows.push_back(i);
    const auto f = encode(encoder, preset, ds.gather_inputs(rows));
    std::copy_n(f.raw(), f.numel(), out.raw() + start * stride);
  }
  return out;
}

// Endless sequence of shuffled batches; reshuffles on every new pass.
class BatchStream {
 public:
  BatchStream(std::size_t n, std::size_t batch_size, std::uint64_t seed, std::uint64_t first_pass)
      : n_(n), batch_size_(batch_size), seed_(seed), pass_(first_pass) {}

  const std::vector<std::size_t>& next() {
    if (pos_ == current_.size()) {
      current_ = batch_indices(n_, batch_size_, seed_, pass_++);
      pos_ = 0;
    }
    return current_[pos_++];
  }

 private:
  std::size_t n_, batch_size_;
  std::uint64_t seed_, pass_;
  std::vector<std::vector<std::size_t>> current_;
  std::size_t pos_ = 0;
};

void require_all_classes(const DomainDataset& ds, std::size_t num_classes) {
  if (ds.num_classes != num_classes) {
    throw ContractViolation("dataset has " + std::to_string(ds.num_classes) +
                            " classes, preset expects " + std::to_string(num_classes));
  }
  const auto counts = class_counts(ds);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      throw ContractViolation("class " + std::to_string(c) + " missing from training data");
    }
  }
}

void require_input_shape(const DomainDataset& ds, const ArchitecturePreset& preset) {
  if (!(ds.sample_shape() == preset.input_shape)) {
    throw ContractViolation("dataset samples " + ds.sample_shape().str() +
                            " do not match preset input " + preset.input_shape.str());
  }
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

void TrainConfig::validate() const {
  preset.validate();
  if (batch_size < 1) throw ContractViolation("batch_size must be >= 1");
  for (double r : {pretrain_lr, adapt_lr}) {
    if (!(r > 0.0)) throw ContractViolation("learning rates must be > 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ContractViolation("Adam betas must lie in [0, 1)");
  }
  if (early_stop_window < 2) throw ContractViolation("early_stop_window must be >= 2");
  if (disc_steps_per_encoder_step < 1) {
    throw ContractViolation("disc_steps_per_encoder_step must be >= 1");
  }
  if (!(early_stop_rel_change > 0.0)) throw ContractViolation("early_stop_rel_change must be > 0");
  if (!(failure_loss_floor >= 0.0)) throw ContractViolation("failure_loss_floor must be >= 0");
  if (!(sup_disc_weight >= 0.0) || !(adv_disc_weight >= 0.0)) {
    throw ContractViolation("discriminator loss weights must be >= 0");
  }
}

const char* stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::converged: return "converged";
    case StopReason::max_epochs: return "max_epochs";
    case StopReason::failure_mode: return "failure_mode";
  }
  return "?";
}

void RunReport::set_stop_reason(StopReason r) {
  if (stop_reason_) throw ContractViolation("stop reason already recorded for " + phase_);
  stop_reason_ = r;
}

std::size_t evaluation_threads() {
  const char* env = std::getenv("SADDA_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) return 1;
  return static_cast<std::size_t>(v);
}

double compose_and_evaluate(const ParameterSet<float>& encoder,
                            const ParameterSet<float>& classifier,
                            const ArchitecturePreset& preset, const DomainDataset& ds,
                            std::size_t threads) {
  const auto& labels = ds.require_labels();
  if (ds.size() == 0) throw ContractViolation("cannot evaluate on an empty dataset");
  require_input_shape(ds, preset);
  const std::size_t chunks = (ds.size() + kEvalChunk - 1) / kEvalChunk;
  if (threads == 0) threads = evaluation_threads();
  threads = std::min(threads, chunks);

  auto count_chunk = [&](std::size_t chunk) {
    std::vector<std::size_t> rows;
    for (std::size_t i = chunk * kEvalChunk; i < std::min(ds.size(), (chunk + 1) * kEvalChunk); ++i) {
      rows.push_back(i);
    }
    const auto probs = predict_probabilities(encoder, classifier, preset, ds.gather_inputs(rows));
    const std::size_t n = preset.num_classes;
    std::size_t correct = 0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const float* p = probs.raw() + r * n;
      const auto best = static_cast<int>(std::max_element(p, p + n) - p);
      if (best == labels[rows[r]]) ++correct;
    }
    return correct;
  };

  std::vector<std::size_t> correct(threads, 0);
  if (threads <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) correct[0] += count_chunk(c);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t c = t; c < chunks; c += threads) correct[t] += count_chunk(c);
      });
    }
    for (auto& th : pool) th.join();
  }
  std::size_t total = 0;
  for (std::size_t c : correct) total += c;
  return double(total) / double(ds.size());
}

PretrainResult pretrain(const DomainDataset& source, const TrainConfig& cfg) {
  cfg.validate();
  require_input_shape(source, cfg.preset);
  require_all_classes(source, cfg.preset.num_classes);
  const auto& labels = source.require_labels();

  PretrainResult out;
  out.encoder = init_params<float>(cfg.preset, NetworkRole::encoder, cfg.seed);
  out.classifier = init_params<float>(cfg.preset, NetworkRole::classifier, cfg.seed);
  AdamState<float> enc_state(adam_config(cfg, cfg.pretrain_lr));
  AdamState<float> cls_state(adam_config(cfg, cfg.pretrain_lr));

  for (std::size_t epoch = 1; epoch <= cfg.pretrain_epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (const auto& rows : batch_indices(source.size(), cfg.batch_size,
                                          cfg.seed ^ kPretrainStream, epoch)) {
      std::vector<int> batch_labels;
      for (std::size_t r : rows) batch_labels.push_back(labels[r]);
      Graph<float> g;
      const auto enc = bind(g, out.encoder, true);
      const auto cls = bind(g, out.classifier, true);
      auto probs = classifier_forward(
          cls, cfg.preset, encoder_forward(enc, cfg.preset, g.constant(source.gather_inputs(rows))));
      auto loss = cross_entropy(probs, OneHotLabels(batch_labels, cfg.preset.num_classes));
      loss_sum += loss.value().item();
      ++steps;
      BoundParams<float> all = enc;
      all.insert(cls.begin(), cls.end());
      auto grads = backward_named(loss, all);
      NamedGradients<float> enc_grads, cls_grads;
      for (auto& [name, grad] : grads) {
        (out.encoder.contains(name) ? enc_grads : cls_grads).emplace(name, std::move(grad));
      }
      adam_step(enc_state, out.encoder, enc_grads);
      adam_step(cls_state, out.classifier, cls_grads);
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.class_loss = loss_sum / double(steps);
    if (!finite(m.class_loss)) throw NumericFault("pretrain loss became non-finite");
    m.source_accuracy = compose_and_evaluate(out.encoder, out.classifier, cfg.preset, source, 1);
    out.report.append(m);
  }
  out.report.set_stop_reason(StopReason::max_epochs);
  return out;
}

AdaptResult adapt(const ParameterSet<float>& source_encoder,
                  const ParameterSet<float>& source_classifier, const DomainDataset& source,
                  const DomainDataset& target, const TrainConfig& cfg,
                  const AdaptMonitor& monitor, const AdaptObserver& observer) {
  cfg.validate();
  const auto& preset = cfg.preset;
  require_input_shape(source, preset);
  require_input_shape(target, preset);
  if (target.size() == 0) throw ContractViolation("target dataset is empty");
  const auto& source_labels = source.require_labels();

  AdaptResult out;
  out.target_encoder = clone_params(source_encoder);
  out.discriminator = init_params<float>(preset, NetworkRole::discriminator, cfg.seed);
  // Source features never change during this phase.
  const Tensor<float> source_features = encode_all(source_encoder, preset, source);
  {
    Graph<float> probe;
    const auto d = bind(probe, out.discriminator, false);
    auto dims = source_features.shape().dims();
    dims[0] = 1;
    discriminator_logits(d, preset, probe.constant(Tensor<float>{Shape(dims)}));
  }

  AdamState<float> disc_state(adam_config(cfg, cfg.adapt_lr));
  AdamState<float> enc_state(adam_config(cfg, cfg.adapt_lr));
  const std::size_t iterations =
      (std::max(source.size(), target.size()) + cfg.batch_size - 1) / cfg.batch_size;

  // One discriminator update on fixed source and target features.
  auto disc_step = [&](const Tensor<float>& fs, const Tensor<float>& ft, const OneHotLabels& onehot) {
    Graph<float> dg;
    const auto d = bind(dg, out.discriminator, true);
    const auto ls = discriminator_logits(d, preset, dg.constant(fs));
    const auto lt = discriminator_logits(d, preset, dg.constant(ft));
    auto sup = cross_entropy(discriminator_supervised(ls), onehot);
    auto adv = disc_adversarial_loss(discriminator_unsupervised(ls), discriminator_unsupervised(lt));
    auto total = add(affine(sup, float(cfg.sup_disc_weight), 0.0f),
                     affine(adv, float(cfg.adv_disc_weight), 0.0f));
    const double sup_v = sup.value().item(), adv_v = adv.value().item();
    if (!finite(sup_v) || !finite(adv_v)) throw NumericFault("discriminator loss is not finite");
    adam_step(disc_state, out.discriminator, backward_named(total, d));
    return std::pair{sup_v, adv_v};
  };
  auto labels_of = [&](const std::vector<std::size_t>& rows) {
    std::vector<int> batch_labels;
    for (std::size_t r : rows) batch_labels.push_back(source_labels[r]);
    return OneHotLabels(batch_labels, preset.num_classes);
  };

  // Warm-up: the discriminator trains against the frozen initial encoders.
  for (std::size_t w = 1; w <= cfg.disc_warmup_epochs; ++w) {
    const std::uint64_t pass = (cfg.adapt_max_epochs + w) << 20;
    BatchStream source_stream(source.size(), cfg.batch_size, cfg.seed ^ kSourceStream, pass);
    BatchStream target_stream(target.size(), cfg.batch_size, cfg.seed ^ kTargetStream, pass);
    for (std::size_t it = 0; it < iterations; ++it) {
      const auto& src_rows = source_stream.next();
      const auto ft = encode(out.target_encoder, preset, target.gather_inputs(target_stream.next()));
      try {
        disc_step(gather_rows(source_features, src_rows), ft, labels_of(src_rows));
      } catch (const NumericFault&) {
        out.report.append(EpochMetrics{0, 0.0, std::nan(""), std::nan(""), std::nan(""), 0.0, {}});
        out.report.set_stop_reason(StopReason::failure_mode);
        return out;
      }
      ++out.report.warmup_disc_updates;
    }
  }

  for (std::size_t epoch = 1; epoch <= cfg.adapt_max_epochs; ++epoch) {
    BatchStream source_stream(source.size(), cfg.batch_size, cfg.seed ^ kSourceStream, epoch << 20);
    BatchStream target_stream(target.size(), cfg.batch_size, cfg.seed ^ kTargetStream, epoch << 20);
    double disc_sum = 0.0, adv_sum = 0.0, sup_sum = 0.0;
    std::size_t disc_count = 0, enc_count = 0;
    bool numeric_failure = false;

    for (std::size_t it = 0; it < iterations && !numeric_failure; ++it) {
      const auto& src_rows = source_stream.next();
      const auto& tgt_rows = target_stream.next();
      const OneHotLabels onehot = labels_of(src_rows);
      const Tensor<float> fs = gather_rows(source_features, src_rows);

      try {
        // The target encoder graph is built once; its features feed the
        // discriminator step as constants and are reused by the encoder step.
        Graph<float> eg;
        const auto mt = bind(eg, out.target_encoder, true);
        auto ft = encoder_forward(mt, preset, eg.constant(target.gather_inputs(tgt_rows)));

        for (std::size_t k = 0; k < cfg.disc_steps_per_encoder_step; ++k) {
          const auto [sup_v, adv_v] = disc_step(fs, ft.value(), onehot);
          sup_sum += sup_v;
          disc_sum += adv_v;
          ++disc_count;
          ++out.report.disc_updates;
          if (observer.after_disc_step) observer.after_disc_step(out.target_encoder, out.discriminator);
        }

        const auto d = bind(eg, out.discriminator, false);
        auto loss = encoder_adversarial_loss(discriminator_unsupervised(discriminator_logits(d, preset, ft)));
        const double loss_v = loss.value().item();
        if (!finite(loss_v)) throw NumericFault("adversarial loss is not finite");
        adv_sum += loss_v;
        ++enc_count;
        adam_step(enc_state, out.target_encoder, backward_named(loss, mt));
        ++out.report.encoder_updates;
        if (observer.after_encoder_step) observer.after_encoder_step(out.target_encoder, out.discriminator);
        for (const auto& [name, value] : out.target_encoder) {
          if (!value.all_finite()) throw NumericFault("target encoder parameter " + name + " is not finite");
        }
      } catch (const NumericFault&) {
        numeric_failure = true;
      }
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.disc_loss = disc_count ? disc_sum / double(disc_count) : std::nan("");
    m.sup_disc_loss = disc_count ? sup_sum / double(disc_count) : std::nan("");
    m.adv_loss = enc_count ? adv_sum / double(enc_count) : std::nan("");
    if (numeric_failure) {
      out.report.append(m);
      out.report.set_stop_reason(StopReason::failure_mode);
      return out;
    }
    if (monitor.source_eval) {
      m.source_accuracy = compose_and_evaluate(out.target_encoder, source_classifier, preset,
                                               *monitor.source_eval);
    }
    if (monitor.target_eval) {
      m.target_accuracy = compose_and_evaluate(out.target_encoder, source_classifier, preset,
                                               *monitor.target_eval);
    }
    out.report.append(m);
    if (detect_failure(out.report.history(), cfg)) {
      out.report.set_stop_reason(StopReason::failure_mode);
      return out;
    }
    if (detect_convergence(out.report.history(), cfg)) {
      out.report.set_stop_reason(StopReason::converged);
      return out;
    }
  }
  out.report.set_stop_reason(StopReason::max_epochs);
  return out;
}

bool detect_convergence(const std::vector<EpochMetrics>& history, const TrainConfig& cfg) {
  const std::size_t w = cfg.early_stop_window;
  if (w < 2 || history.size() < w) return false;
  auto flat = [&](double EpochMetrics::*field) {
    double lo = INFINITY, hi = -INFINITY, sum = 0.0;
    for (std::size_t i = history.size() - w; i < history.size(); ++i) {
      const double v = history[i].*field;
      if (!finite(v)) return false;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
    }
    return (hi - lo) / std::max(sum / double(w), 1e-8) < cfg.early_stop_rel_change;
  };
  return flat(&EpochMetrics::disc_loss) && flat(&EpochMetrics::adv_loss);
}

bool detect_failure(const std::vector<EpochMetrics>& history, const TrainConfig& cfg) {
  if (history.empty()) return false;
  const auto& last = history.back();
  if (!finite(last.disc_loss) || !finite(last.adv_loss)) return true;
  return last.disc_loss < cfg.failure_loss_floor || last.adv_loss < cfg.failure_loss_floor;
}

}  // namespace sadda
