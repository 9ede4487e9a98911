#include <cmath>
#include <filesystem>
#include <limits>
#include <set>

#include <doctest.h>

#include "sadda/experiment.hpp"
#include "sadda/report.hpp"

using namespace sadda;

namespace {

std::string error_of(const std::string& text) {
  try {
    experiment_from_config(parse_config_text(text, "t.conf"));
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("config text parsing") {
  const auto f = parse_config_text("# header\n\ntrain.seed = 4   # trailing\n  data.kind=two_moons\n");
  REQUIRE(f.entries.size() == 2);
  CHECK(f.entries.at("train.seed").value == "4");
  CHECK(f.entries.at("train.seed").line == 3);
  CHECK(f.entries.at("data.kind").value == "two_moons");

  CHECK_THROWS_WITH_AS(parse_config_text("a = 1\njust words\n", "x.conf"), "x.conf:2: expected 'key = value'",
                       FormatError);
  CHECK_THROWS_AS(parse_config_text("= 3\n"), FormatError);
  CHECK_THROWS_AS(parse_config_text("a =\n"), FormatError);
  try {
    parse_config_text("a = 1\nb = 2\na = 3\n", "x.conf");
    FAIL("duplicate accepted");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()) == "x.conf:3: field 'a': duplicate of line 1");
    CHECK(e.offset() == 3);
  }
}

TEST_CASE("config values are checked per field") {
  CHECK(error_of("train.seed = 1\ntrain.batch_size = -4\n") ==
        "t.conf:2: field 'train.batch_size': expected a non-negative integer (got '-4')");
  CHECK(error_of("train.adapt_lr = 1e-3x\n").find("field 'train.adapt_lr': expected a number") !=
        std::string::npos);
  CHECK(error_of("data.rgb = yes\n").find("expected true or false") != std::string::npos);
  CHECK(error_of("shift.kinds = rotate, blur\n").find("shift.kinds") != std::string::npos);
  CHECK(error_of("model.encoder_widths = 8,,16\n").find("empty list item") != std::string::npos);
  CHECK(error_of("model.encoder_widths = 8,0\n").find("positive integers") != std::string::npos);
  CHECK(error_of("train.learning_rate = 1\n") == "t.conf:1: unknown field 'train.learning_rate'");
  CHECK(error_of("train.adapt_lr = 0\n").find("invalid configuration") != std::string::npos);
  CHECK(error_of("data.kind = two_moons\ndata.classes = 3\n").find("2 classes") != std::string::npos);
  CHECK(error_of("shift.kinds = rotate\nshift.angle = 200\n").find("invalid configuration") !=
        std::string::npos);
}

TEST_CASE("missing config file") {
  try {
    load_config_file("/nonexistent/run.conf");
    FAIL("no error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/run.conf") != std::string::npos);
  }
}

TEST_CASE("config overrides refine the preset") {
  const auto cfg = experiment_from_config(parse_config_text(
      "data.kind = two_moons\ntrain.seed = 9\nshift.kinds = rotate, translate\nshift.dx = 0.5\n"
      "train.disc_steps = 3\nmodel.encoder_widths = 16, 8\n"));
  CHECK(cfg.data.kind == DataKind::two_moons);
  CHECK(cfg.train.seed == 9);
  CHECK(cfg.shift.kinds == std::vector<ShiftKind>{ShiftKind::rotate, ShiftKind::translate});
  CHECK(cfg.shift.dx == 0.5);
  CHECK(cfg.train.disc_steps_per_encoder_step == 3);
  CHECK(cfg.train.preset.kind == ArchitectureKind::mlp_vector);
  CHECK(cfg.train.preset.encoder_widths == std::vector<std::size_t>{16, 8});
  CHECK(cfg.train.preset.input_shape == Shape{2});

  const auto glyph = experiment_from_config(parse_config_text("data.image_size = 32\ndata.rgb = false\n"));
  CHECK(glyph.train.preset.input_shape == Shape{32, 32, 1});
  CHECK(experiment_from_config(parse_config_text("shift.kinds = none\n")).shift.kinds.empty());
}

TEST_CASE("rendered config parses back to the same configuration") {
  for (const auto& cfg : {glyph_shift_experiment(), glyph_control_experiment(), two_moons_experiment()}) {
    const auto text = render_config(cfg);
    CHECK(render_config(experiment_from_config(parse_config_text(text))) == text);
  }
  std::set<std::string> keys;
  for (const auto& [k, help] : config_keys()) {
    CHECK(keys.insert(k).second);
    CHECK_FALSE(help.empty());
  }
  CHECK(count(render_config(two_moons_experiment()), "\n") == keys.size() - 4);  // idx paths unset
}

TEST_CASE("shipped configs match the presets") {
  const std::filesystem::path dir = SADDA_SOURCE_DIR "/configs";
  auto load = [&](const char* name) { return render_config(experiment_from_config(load_config_file(dir / name))); };
  CHECK(load("glyph_shift.conf") == render_config(glyph_shift_experiment()));
  CHECK(load("glyph_control.conf") == render_config(glyph_control_experiment()));
  CHECK(load("two_moons.conf") == render_config(two_moons_experiment()));
  auto unstable = two_moons_experiment();
  unstable.train.adapt_lr = 1.0;
  CHECK(load("two_moons_unstable.conf") == render_config(unstable));
}

TEST_CASE("experiment data") {
  auto cfg = two_moons_experiment();
  cfg.train.seed = 3;
  const auto a = build_experiment_data(cfg);
  const auto b = build_experiment_data(cfg);
  CHECK(a.source.train.inputs == b.source.train.inputs);
  CHECK(a.target.test.inputs == b.target.test.inputs);
  CHECK(a.source.train.size() == 240);
  CHECK(a.source.val.size() == 80);
  CHECK(a.source.test.size() == 80);
  CHECK(a.source.train.domain == Domain::source);
  CHECK(a.target.train.domain == Domain::target);
  CHECK_FALSE(a.source.train.inputs == a.target.train.inputs);

  cfg.train.seed = 4;
  CHECK_FALSE(build_experiment_data(cfg).source.train.inputs == a.source.train.inputs);

  cfg.data.target_is_source = true;
  cfg.shift.kinds.clear();
  const auto same = build_experiment_data(cfg);
  CHECK(same.target.train.inputs == same.source.train.inputs);
  CHECK(same.target.test.inputs == same.source.test.inputs);

  auto glyph = glyph_shift_experiment();
  glyph.data.source_samples = glyph.data.target_samples = 100;
  const auto g = build_experiment_data(glyph);
  CHECK(g.source.train.sample_shape() == Shape{16, 16, 3});
  CHECK(g.target.train.sample_shape() == Shape{16, 16, 3});
}

TEST_CASE("metrics csv") {
  RunReport pre("pretrain");
  EpochMetrics m;
  m.epoch = 1;
  m.class_loss = 0.5;
  m.source_accuracy = 0.75;
  pre.append(m);
  CHECK(pretrain_metrics_csv(pre) == "epoch,class_loss,source_acc\n1,0.5,0.75\n");

  RunReport ad("adapt");
  m.disc_loss = 1.25;
  m.adv_loss = 0.125;
  m.sup_disc_loss = 2;
  ad.append(m);
  m.epoch = 2;
  m.target_accuracy = 0.5;
  ad.append(m);
  CHECK(adapt_metrics_csv(ad) ==
        "epoch,disc_loss,adv_loss,sup_disc_loss,source_acc,target_acc\n"
        "1,1.25,0.125,2,0.75,\n"
        "2,1.25,0.125,2,0.75,0.5\n");

  CHECK(report_csv({{"source_only", 0.5}, {"sadda", 0.625}, {"train_on_target", 1}}) ==
        "model,accuracy\nsource_only,0.5\nsadda,0.625\ntrain_on_target,1\n");
  const auto text = report_text({{"source_only", 0.5}, {"sadda", 0.625}}, "heading");
  CHECK(text.find("heading") == 0);
  CHECK(text.find("62.50 %") != std::string::npos);
}

TEST_CASE("loss svg") {
  const auto svg = render_loss_svg("a < b", {{"discriminator", {1.0, 0.5, 0.4}}, {"adversarial", {2.0, 2.2, 2.3}}});
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("viewBox=\"0 0 640 400\"") != std::string::npos);
  CHECK(count(svg, "<polyline") == 2);
  CHECK(svg.find(">discriminator</text>") != std::string::npos);
  CHECK(svg.find(">adversarial</text>") != std::string::npos);
  CHECK(svg.find("a &lt; b") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  const auto gap = render_loss_svg("t", {{"x", {1.0, nan, 3.0}}});
  CHECK(gap.find("nan") == std::string::npos);
  CHECK(count(render_loss_svg("flat", {{"x", {1.0, 1.0}}}), "<polyline") == 1);
  CHECK(count(render_loss_svg("one", {{"x", {1.0}}}), "<polyline") == 1);
}

TEST_CASE("embedding export rows") {
  auto ds = gen_glyph_digits(300, 3, 2);
  const auto rows = embedding_rows(ds, 20, 7);
  CHECK(rows.size() == 60);
  CHECK(std::is_sorted(rows.begin(), rows.end()));
  CHECK(embedding_rows(ds, 20, 7) == rows);
  CHECK_FALSE(embedding_rows(ds, 20, 8) == rows);
  for (int c : class_counts(ds.gather(rows))) CHECK(c == 20);
  CHECK(embedding_rows(ds, 1000, 7).size() == 300);

  const Tensor<float> feats(Shape{2, 1, 1, 3}, {0.5f, 0, 1, 2, 3, 4});
  CHECK(embeddings_csv({4, 1}, feats) == "label,f_0,f_1,f_2\n4,0.5,0,1\n1,2,3,4\n");
  CHECK_THROWS_AS(embeddings_csv({1}, feats), ContractViolation);
}
