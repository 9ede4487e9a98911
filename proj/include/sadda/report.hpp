#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sadda/data.hpp"
#include "sadda/pipeline.hpp"

namespace sadda {

struct Series {
  std::string name;
  std::vector<double> values;
};

/// Line chart over epochs: one polyline per series, axis ticks and a legend.
/// Non-finite values are dropped from their polyline.
std::string render_loss_svg(const std::string& title, const std::vector<Series>& series);

/// epoch,class_loss,source_acc
std::string pretrain_metrics_csv(const RunReport& report);
/// epoch,disc_loss,adv_loss,sup_disc_loss,source_acc,target_acc
std::string adapt_metrics_csv(const RunReport& report);

struct AccuracyRow {
  std::string model;
  double accuracy = 0.0;
};

std::string report_csv(const std::vector<AccuracyRow>& rows);
std::string report_text(const std::vector<AccuracyRow>& rows, const std::string& heading);

/// At most `per_label` rows per class, picked by a seeded shuffle and
/// returned in ascending order.
std::vector<std::size_t> embedding_rows(const DomainDataset& ds, std::size_t per_label,
                                        std::uint64_t seed);

/// label,f_0..f_{d-1} with one row per sample of `features` (n x ...).
std::string embeddings_csv(const std::vector<int>& labels, const Tensor<float>& features);

}  // namespace sadda
