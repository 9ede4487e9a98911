#include "sadda/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

namespace sadda {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 64, kRight = 160, kTop = 40, kBottom = 48;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string tick_label(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string accuracy_field(double v) { return format_real(v); }

}  // namespace

std::string render_loss_svg(const std::string& title, const std::vector<Series>& series) {
  std::size_t points = 0;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& s : series) {
    points = std::max(points, s.values.size());
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) lo = 0, hi = 1;
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
  const double x_max = std::max<double>(points, 2);
  auto px = [&](double epoch) { return kLeft + (epoch - 1) / (x_max - 1) * plot_w; };
  auto py = [&](double v) { return kTop + (hi - v) / (hi - lo) * plot_h; };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " + fixed(kWidth, 0) +
                    " " + fixed(kHeight, 0) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fixed(kWidth / 2, 0) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" +
         escape_xml(title) + "</text>\n";
  svg += "<g stroke=\"black\" fill=\"none\">\n";
  svg += "<line x1=\"" + fixed(kLeft) + "\" y1=\"" + fixed(kTop + plot_h) + "\" x2=\"" +
         fixed(kLeft + plot_w) + "\" y2=\"" + fixed(kTop + plot_h) + "\"/>\n";
  svg += "<line x1=\"" + fixed(kLeft) + "\" y1=\"" + fixed(kTop) + "\" x2=\"" + fixed(kLeft) +
         "\" y2=\"" + fixed(kTop + plot_h) + "\"/>\n";
  svg += "</g>\n<g text-anchor=\"middle\">\n";
  const std::size_t x_ticks = std::min<std::size_t>(std::max<std::size_t>(points, 1), 10);
  for (std::size_t i = 0; i < x_ticks; ++i) {
    const double epoch = x_ticks == 1 ? 1.0 : std::round(1 + double(i) * (x_max - 1) / double(x_ticks - 1));
    svg += "<text x=\"" + fixed(px(epoch)) + "\" y=\"" + fixed(kTop + plot_h + 18) + "\">" +
           std::to_string(long(epoch)) + "</text>\n";
  }
  svg += "<text x=\"" + fixed(kLeft + plot_w / 2) + "\" y=\"" + fixed(kHeight - 8) + "\">epoch</text>\n";
  svg += "</g>\n<g text-anchor=\"end\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    svg += "<text x=\"" + fixed(kLeft - 6) + "\" y=\"" + fixed(py(v) + 4) + "\">" + tick_label(v) +
           "</text>\n";
  }
  svg += "</g>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    std::string pts;
    for (std::size_t i = 0; i < series[s].values.size(); ++i) {
      const double v = series[s].values[i];
      if (!std::isfinite(v)) continue;
      if (!pts.empty()) pts += ' ';
      pts += fixed(px(double(i + 1))) + "," + fixed(py(v));
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(kColors[s % 4]) +
           "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
  }
  svg += "<g class=\"legend\">\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double y = kTop + 10 + 20 * double(s);
    const double x = kLeft + plot_w + 16;
    svg += "<rect x=\"" + fixed(x) + "\" y=\"" + fixed(y - 8) + "\" width=\"12\" height=\"4\" fill=\"" +
           kColors[s % 4] + "\"/>\n";
    svg += "<text x=\"" + fixed(x + 18) + "\" y=\"" + fixed(y) + "\">" + escape_xml(series[s].name) +
           "</text>\n";
  }
  svg += "</g>\n</svg>\n";
  return svg;
}

std::string pretrain_metrics_csv(const RunReport& report) {
  std::string out = "epoch,class_loss,source_acc\n";
  for (const auto& m : report.history()) {
    out += std::to_string(m.epoch) + "," + format_real(m.class_loss) + "," +
           accuracy_field(m.source_accuracy) + "\n";
  }
  return out;
}

std::string adapt_metrics_csv(const RunReport& report) {
  std::string out = "epoch,disc_loss,adv_loss,sup_disc_loss,source_acc,target_acc\n";
  for (const auto& m : report.history()) {
    out += std::to_string(m.epoch) + "," + format_real(m.disc_loss) + "," + format_real(m.adv_loss) +
           "," + format_real(m.sup_disc_loss) + "," + accuracy_field(m.source_accuracy) + "," +
           (m.target_accuracy ? accuracy_field(*m.target_accuracy) : std::string()) + "\n";
  }
  return out;
}

std::string report_csv(const std::vector<AccuracyRow>& rows) {
  std::string out = "model,accuracy\n";
  for (const auto& r : rows) out += r.model + "," + format_real(r.accuracy) + "\n";
  return out;
}

std::string report_text(const std::vector<AccuracyRow>& rows, const std::string& heading) {
  std::string out = heading + "\n\n";
  std::size_t width = 0;
  for (const auto& r : rows) width = std::max(width, r.model.size());
  for (const auto& r : rows) {
    out += r.model + std::string(width - r.model.size() + 2, ' ') + fixed(100.0 * r.accuracy) + " %\n";
  }
  return out;
}

std::vector<std::size_t> embedding_rows(const DomainDataset& ds, std::size_t per_label,
                                        std::uint64_t seed) {
  const auto& labels = ds.require_labels();
  std::vector<std::size_t> order(ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> taken(ds.num_classes, 0), out;
  for (std::size_t i : order) {
    auto& t = taken.at(std::size_t(labels[i]));
    if (t < per_label) {
      ++t;
      out.push_back(i);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string embeddings_csv(const std::vector<int>& labels, const Tensor<float>& features) {
  const std::size_t n = features.dim(0);
  if (labels.size() != n) throw ContractViolation("embeddings: label count does not match features");
  const std::size_t d = features.numel() / n;
  std::string out = "label";
  for (std::size_t f = 0; f < d; ++f) out += ",f_" + std::to_string(f);
  out += '\n';
  for (std::size_t i = 0; i < n; ++i) {
    out += std::to_string(labels[i]);
    for (std::size_t f = 0; f < d; ++f) {
      out += ',';
      out += format_real(features[i * d + f]);
    }
    out += '\n';
  }
  return out;
}

}  // namespace sadda
