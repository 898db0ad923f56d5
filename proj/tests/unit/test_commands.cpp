#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <sstream>

#include "regseg/commands.hpp"
#include "regseg/errors.hpp"
#include "regseg/image_io.hpp"

using namespace regseg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("regseg_cmd_" + tag + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ClassMap map_of(int h, int w, std::vector<std::uint8_t> v) {
  ClassMap m(h, w);
  m.data = std::move(v);
  return m;
}

}  // namespace

TEST_CASE("argument parsing") {
  CHECK(parse_size("1024x2048") == std::pair{1024, 2048});
  CHECK_THROWS_AS(parse_size("1024"), ConfigError);
  CHECK_THROWS_AS(parse_size("ax5"), ConfigError);
  CHECK(parse_class_list("14,15,16") == std::set<int>{14, 15, 16});
  CHECK(parse_class_list("").empty());
  CHECK_THROWS_AS(parse_class_list("1,,2"), ConfigError);
  CHECK(parse_report_format("csv") == ReportFormat::kCsv);
  CHECK_THROWS_AS(parse_report_format("xml"), ConfigError);
}

TEST_CASE("run config invariants") {
  RunConfig c;
  CHECK_NOTHROW(c.validate());
  c.warmup = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.iters = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.height = 1000;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.width = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.warmup = 0;
  std::ostringstream out;
  CHECK_THROWS_AS(cmd_bench(c, out), ConfigError);
}

TEST_CASE("describe") {
  RunConfig c;
  const DescribeReport r = describe(c);
  CHECK(r.fov.field_of_view() == 3807);
  CHECK(std::abs(r.params - 3.34e6) <= 0.01 * 3.34e6);
  CHECK(r.violations.empty());
  std::ostringstream out;
  CHECK(cmd_describe(c, out) == 0);
  CHECK(out.str().find("field-of-view 3807") != std::string::npos);
  CHECK(out.str().find("(3.33M)") != std::string::npos);

  c.schedule = "(1,1)+(1,2)+(1,4)+10*(1,6)";
  CHECK(describe(c).fov.field_of_view() == 2207);
  c.report = ReportFormat::kCsv;
  std::ostringstream csv;
  cmd_describe(c, csv);
  CHECK(csv.str().find("fov,2207") != std::string::npos);
  CHECK(csv.str().find("operator,dilations,stride,channels,repeat") == 0);

  c.schedule = "(1,1)";
  CHECK_THROWS_AS(describe(c), SpecError);
  c.schedule = "(1,1";
  CHECK_THROWS_AS(describe(c), SyntaxError);
  c = RunConfig{};
  c.preset = "nope";
  CHECK_THROWS_AS(describe(c), ConfigError);
}

TEST_CASE("describe layer table mirrors the architecture") {
  const DescribeReport r = describe(RunConfig{});
  REQUIRE(r.table.size() == 10);
  CHECK(r.table[0].op == "conv 3x3");
  CHECK(r.table[0].channels == 32);
  CHECK(r.table[3].repeat == 2);
  CHECK(r.table[7].dilations == "1,4");
  CHECK(r.table[7].repeat == 4);
  CHECK(r.table[8].repeat == 6);
  CHECK(r.table[9].channels == 320);
}

TEST_CASE("fov command") {
  RunConfig c;
  std::ostringstream out;
  cmd_fov(c, out);
  CHECK(out.str().find("field-of-view: 3807") != std::string::npos);
  c.report = ReportFormat::kCsv;
  c.schedule = "7*(1,14)+6*(1,1)";
  std::ostringstream csv;
  cmd_fov(c, csv);
  CHECK(csv.str().find(",no\n") != std::string::npos);
}

TEST_CASE("eval on a hand tallied three-image set") {
  TempDir preds("p"), labels("l");
  // image a: labels [0 1; 1 255], preds [0 0; 1 2]
  save_label(preds.path / "a.png", map_of(2, 2, {0, 0, 1, 2}));
  save_label(labels.path / "a.png", map_of(2, 2, {0, 1, 1, 255}));
  // image b: labels [2 2 0], preds [2 1 0]
  save_label(preds.path / "b.png", map_of(1, 3, {2, 1, 0}));
  save_label(labels.path / "b.png", map_of(1, 3, {2, 2, 0}));
  // image c: labels [1], preds [1]
  save_label(preds.path / "c.png", map_of(1, 1, {1}));
  save_label(labels.path / "c.png", map_of(1, 1, {1}));
  // cm rows = truth: 0 -> {0:2}; 1 -> {0:1, 1:2}; 2 -> {1:1, 2:1}
  // IOU0 = 2/3, IOU1 = 2/4, IOU2 = 1/2
  RunConfig c;
  c.input = preds.path;
  c.labels = labels.path;
  c.classes = 3;
  c.exclude_classes = {};
  for (int threads : {1, 2, 3}) {
    c.threads = threads;
    const EvalReport r = evaluate(c);
    CHECK(r.images == 3);
    CHECK(*r.iou.per_class[0] == doctest::Approx(2.0 / 3));
    CHECK(*r.iou.per_class[1] == doctest::Approx(0.5));
    CHECK(*r.iou.per_class[2] == doctest::Approx(0.5));
    CHECK(r.iou.miou == doctest::Approx((2.0 / 3 + 1.0) / 3));
    CHECK(r.iou.miou_reduced == r.iou.miou);
  }
  c.exclude_classes = {2};
  CHECK(evaluate(c).iou.miou_reduced == doctest::Approx((2.0 / 3 + 0.5) / 2));

  std::ostringstream out;
  c.report = ReportFormat::kCsv;
  cmd_eval(c, out);
  CHECK(out.str().find("mIOU,0.555556") != std::string::npos);

  c.labels = preds.path;
  CHECK(evaluate(c).iou.miou == 1.0);

  save_label(preds.path / "extra.png", map_of(1, 1, {0}));
  c.labels = labels.path;
  CHECK_THROWS_AS(evaluate(c), ConfigError);
}

TEST_CASE("infer writes full-size deterministic label maps") {
  TempDir dir("infer");
  RunConfig c;
  c.output = (dir.path / "model.rtc").string();
  c.seed = 5;
  std::ostringstream log;
  CHECK(cmd_init_weights(c, log) == 0);

  Image img{40, 56, 3, {}};
  for (int i = 0; i < 40 * 56 * 3; ++i) img.pixels.push_back(static_cast<std::uint8_t>(i * 13));
  write_image(dir.path / "in.png", img);

  c.weights = (dir.path / "model.rtc").string();
  c.input = (dir.path / "in.png").string();
  c.output = (dir.path / "one.png").string();
  c.color = true;
  CHECK(cmd_infer(c, log) == 0);
  const ClassMap one = load_label(dir.path / "one.png");
  CHECK(one.height == 40);
  CHECK(one.width == 56);
  CHECK(fs::exists(dir.path / "one_color.png"));

  c.output = (dir.path / "two.png").string();
  c.threads = 2;
  c.color = false;
  cmd_infer(c, log);
  CHECK(load_label(dir.path / "two.png") == one);

  fs::create_directories(dir.path / "batch_in");
  fs::copy_file(dir.path / "in.png", dir.path / "batch_in" / "x.png");
  c.input = (dir.path / "batch_in").string();
  c.output = (dir.path / "batch_out").string();
  cmd_infer(c, log);
  CHECK(load_label(dir.path / "batch_out" / "x.png") == one);

  c.input = (dir.path / "in.png").string();
  c.classes = 7;
  CHECK_THROWS_AS(cmd_infer(c, log), BindingError);
}

TEST_CASE("bench reports every block and the four-row comparison") {
  RunConfig c;
  c.height = 32;
  c.width = 64;
  c.warmup = 1;
  c.iters = 2;
  const BenchReport r = bench(c);
  CHECK(r.model.total.samples.size() == 2);
  CHECK(r.model.blocks.size() == 20);
  CHECK(r.blocks.size() == 4);
  const std::string text = format_bench(r, ReportFormat::kText);
  CHECK(text.find("D block (1,10)") != std::string::npos);
  CHECK(text.find("warmup 1, measured 2") != std::string::npos);
  const std::string csv = format_bench(r, ReportFormat::kCsv);
  CHECK(csv.find("\"Y block\",") != std::string::npos);
}

TEST_CASE("defaults follow the benchmark protocol") {
  const RunConfig c;
  CHECK(c.warmup == 10);
  CHECK(c.iters == 100);
  CHECK(c.height == 1024);
  CHECK(c.width == 2048);
  CHECK(c.exclude_classes == std::set<int>{14, 15, 16});
}

TEST_CASE("selftest passes") {
  std::ostringstream out;
  CHECK(cmd_selftest(RunConfig{}, out) == 0);
  CHECK(out.str().find("FAIL") == std::string::npos);
}
