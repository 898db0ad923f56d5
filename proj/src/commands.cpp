#include "regseg/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include "regseg/container.hpp"
#include "regseg/errors.hpp"
#include "regseg/image_io.hpp"
#include "regseg/model.hpp"
#include "regseg/nn_ops.hpp"
#include "regseg/parallel.hpp"

namespace fs = std::filesystem;

namespace regseg {

namespace {

int parse_int(const std::string& text, const std::string& what) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("bad " + what + " '" + text + "'");
  }
  return v;
}

std::string fixed(double v, int digits) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(digits) << v;
  return o.str();
}

std::string millis(double seconds) { return fixed(seconds * 1e3, 3); }

std::string tuple_text(const DilationTuple& d) {
  std::string s;
  for (std::size_t i = 0; i < d.size(); ++i) s += (i ? "," : "") + std::to_string(d[i]);
  return s;
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".png" || ext == ".ppm" || ext == ".pgm";
}

std::map<std::string, fs::path> list_images(const fs::path& p) {
  std::map<std::string, fs::path> out;
  if (fs::is_directory(p)) {
    for (const auto& e : fs::directory_iterator(p)) {
      if (e.is_regular_file() && is_image_file(e.path())) {
        out.emplace(e.path().filename().string(), e.path());
      }
    }
  } else if (fs::is_regular_file(p)) {
    out.emplace(p.filename().string(), p);
  } else {
    throw ConfigError("no such file or directory: " + p.string());
  }
  return out;
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out.replace_filename(p.stem().string() + suffix + ".png");
  return out;
}

}  // namespace

void RunConfig::validate() const {
  if (warmup < 1) throw ConfigError("--warmup must be >= 1");
  if (iters < 1) throw ConfigError("--iters must be >= 1");
  if (threads < 1) throw ConfigError("--threads must be >= 1");
  if (height < 16 || width < 16 || height % 16 != 0 || width % 16 != 0) {
    throw ConfigError("--size " + std::to_string(height) + "x" + std::to_string(width) +
                      ": extents must be positive multiples of 16");
  }
  if (classes < 0) throw ConfigError("--classes must be positive");
}

std::pair<int, int> parse_size(const std::string& text) {
  const std::size_t x = text.find_first_of("xX");
  if (x == std::string::npos) throw ConfigError("--size expects HxW, got '" + text + "'");
  return {parse_int(text.substr(0, x), "height"), parse_int(text.substr(x + 1), "width")};
}

std::set<int> parse_class_list(const std::string& text) {
  std::set<int> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const int c = parse_int(text.substr(pos, comma - pos), "class id");
    if (c < 0 || c > 255) throw ConfigError("class id out of range: " + std::to_string(c));
    out.insert(c);
    pos = comma + 1;
  }
  return out;
}

ReportFormat parse_report_format(const std::string& text) {
  if (text == "text") return ReportFormat::kText;
  if (text == "csv") return ReportFormat::kCsv;
  throw ConfigError("--report must be text or csv, got '" + text + "'");
}

ArchitecturePreset resolve_preset(const RunConfig& config) {
  ArchitecturePreset p = config.preset_file.empty() ? preset_by_name(config.preset)
                                                    : load_preset_file(config.preset_file);
  if (!config.schedule.empty()) p.schedule = config.schedule;
  if (config.classes > 0) p.num_classes = config.classes;
  p.validate();
  return p;
}

// describe / fov ------------------------------------------------------------

DescribeReport describe(const RunConfig& config) {
  config.validate();
  DescribeReport r;
  r.preset = resolve_preset(config);
  r.height = config.height;
  r.width = config.width;
  r.table.push_back({"conv 3x3", "-", 2, r.preset.stem_channels, 1});
  for (const BlockSpec& b : expand_blocks(r.preset)) {
    const std::string d = tuple_text(b.dilations);
    LayerTableRow& last = r.table.back();
    if (last.op == "D block" && last.dilations == d && last.stride == b.stride &&
        last.channels == b.out_channels && b.stride == 1) {
      ++last.repeat;
    } else {
      r.table.push_back({"D block", d, b.stride, b.out_channels, 1});
    }
  }
  const ModelGraph full = build_regseg(r.preset);
  r.params = count_params(full);
  r.macs = count_macs(full, r.height, r.width);
  const ModelGraph backbone = build_backbone(r.preset);
  r.fov = analyze_graph_fov(backbone);
  r.violations = check_hole_free(backbone);
  return r;
}

std::string format_describe(const DescribeReport& r, ReportFormat format) {
  std::ostringstream o;
  if (format == ReportFormat::kCsv) {
    o << "operator,dilations,stride,channels,repeat\n";
    for (const LayerTableRow& t : r.table) {
      o << t.op << ",\"" << t.dilations << "\"," << t.stride << "," << t.channels << ","
        << t.repeat << "\n";
    }
    o << "\nkey,value\n"
      << "preset," << r.preset.name << "\n"
      << "schedule,\"" << r.preset.schedule << "\"\n"
      << "classes," << r.preset.num_classes << "\n"
      << "params," << r.params << "\n"
      << "input," << r.height << "x" << r.width << "\n"
      << "macs," << r.macs.macs << "\n"
      << "2*macs," << r.macs.flops() << "\n"
      << "fov," << r.fov.field_of_view() << "\n"
      << "hole_free," << (r.violations.empty() ? "yes" : "no") << "\n";
    return o.str();
  }
  o << "preset   " << r.preset.name << " (" << r.preset.num_classes << " classes)\n"
    << "schedule " << r.preset.schedule << "\n\n";
  o << std::left << std::setw(10) << "operator" << std::setw(12) << "dilations"
    << std::right << std::setw(7) << "stride" << std::setw(10) << "channels"
    << std::setw(8) << "repeat" << "\n";
  for (const LayerTableRow& t : r.table) {
    o << std::left << std::setw(10) << t.op << std::setw(12) << t.dilations << std::right
      << std::setw(7) << t.stride << std::setw(10) << t.channels << std::setw(8)
      << t.repeat << "\n";
  }
  o << "\nparams      " << r.params << " (" << fixed(r.params / 1e6, 2) << "M)\n"
    << "MACs        " << r.macs.macs << " (" << fixed(r.macs.macs / 1e9, 2) << "G) at "
    << r.height << "x" << r.width << "\n"
    << "2*MACs      " << r.macs.flops() << " (" << fixed(r.macs.flops() / 1e9, 2)
    << "G)\n"
    << "field-of-view " << r.fov.field_of_view() << "\n"
    << "hole-free   " << (r.violations.empty() ? "yes" : "no") << "\n";
  for (const HoleViolation& v : r.violations) {
    o << "  " << v.layer << ": r=" << v.dilation << " > k/s=" << v.before.k << "/"
      << v.before.s << "\n";
  }
  return o.str();
}

int cmd_describe(const RunConfig& config, std::ostream& out) {
  out << format_describe(describe(config), config.report);
  return exit_code::kOk;
}

int cmd_fov(const RunConfig& config, std::ostream& out) {
  config.validate();
  const ModelGraph backbone = build_backbone(resolve_preset(config));
  const FovReport report = analyze_graph_fov(backbone);
  const auto violations = check_hole_free(backbone);
  if (config.report == ReportFormat::kCsv) {
    out << "layer,kernel,stride,dilation,k,s,hole_free\n";
    for (const FovRow& r : report.rows) {
      out << r.layer << "," << r.kernel << "," << r.stride << "," << r.dilation << ","
          << r.after.k << "," << r.after.s << "," << (r.hole_free ? "yes" : "no") << "\n";
    }
    out << "total,,,," << report.field_of_view() << "," << report.final_state.s << ","
        << (violations.empty() ? "yes" : "no") << "\n";
  } else {
    out << format_fov_report(report, violations, config.height, config.width);
  }
  return exit_code::kOk;
}

// infer -----------------------------------------------------------------------

int cmd_infer(const RunConfig& config, std::ostream& out) {
  if (config.threads < 1) throw ConfigError("--threads must be >= 1");
  if (config.weights.empty()) throw ConfigError("infer needs --weights");
  if (config.input.empty()) throw ConfigError("infer needs --input");
  if (config.output.empty()) throw ConfigError("infer needs --output");

  RunConfig base_cfg = config;
  base_cfg.schedule.clear();
  base_cfg.classes = 0;
  LoadedModel model = load_model(config.weights, resolve_preset(base_cfg));
  if (!config.schedule.empty()) model.preset.schedule = config.schedule;
  if (config.classes > 0) model.preset.num_classes = config.classes;
  model.preset.validate();

  const Executor exec(build_regseg(model.preset), model.container.tensors,
                      ExecOptions{config.threads, false});
  const Palette palette =
      config.palette.empty() ? default_palette() : load_palette(config.palette);

  const fs::path in(config.input);
  const bool batch = fs::is_directory(in);
  const auto images = list_images(in);
  if (batch) fs::create_directories(config.output);
  for (const auto& [name, path] : images) {
    const Tensor x = load_image(path, model.norm);
    const ClassMap pred = argmax_classes(exec.run(x));
    const fs::path dst = batch ? fs::path(config.output) / with_suffix(name, "").filename()
                               : fs::path(config.output);
    save_label(dst, pred);
    out << path.string() << " -> " << dst.string();
    if (config.color) {
      const fs::path color = with_suffix(dst, "_color");
      save_color(color, pred, palette);
      out << ", " << color.string();
    }
    out << "\n";
  }
  return exit_code::kOk;
}

// eval ------------------------------------------------------------------------

EvalReport evaluate(const RunConfig& config) {
  if (config.input.empty()) throw ConfigError("eval needs --input (predictions)");
  if (config.labels.empty()) throw ConfigError("eval needs --labels");
  if (config.threads < 1) throw ConfigError("--threads must be >= 1");
  const int classes = config.classes > 0 ? config.classes : resolve_preset(config).num_classes;

  const auto preds = list_images(config.input);
  const auto labels = list_images(config.labels);
  std::vector<std::pair<fs::path, fs::path>> pairs;
  std::vector<std::string> unmatched;
  if (preds.size() == 1 && labels.size() == 1 && !fs::is_directory(config.input)) {
    pairs.emplace_back(preds.begin()->second, labels.begin()->second);
  } else {
    for (const auto& [name, p] : preds) {
      const auto it = labels.find(name);
      if (it == labels.end()) {
        unmatched.push_back(name + " (no label)");
      } else {
        pairs.emplace_back(p, it->second);
      }
    }
    for (const auto& [name, p] : labels) {
      if (!preds.count(name)) unmatched.push_back(name + " (no prediction)");
    }
  }
  if (!unmatched.empty()) {
    std::string msg = "prediction and label file names differ:";
    for (const std::string& u : unmatched) msg += " " + u;
    throw ConfigError(msg);
  }
  if (pairs.empty()) throw ConfigError("no images to evaluate");

  const int workers = std::min<int>(config.threads, static_cast<int>(pairs.size()));
  std::vector<ConfusionMatrix> partial(workers, ConfusionMatrix(classes));
  const std::size_t chunk = (pairs.size() + workers - 1) / workers;
  parallel_for(pairs.size(), workers, [&](std::size_t begin, std::size_t end) {
    ConfusionMatrix& cm = partial[begin / chunk];
    for (std::size_t i = begin; i < end; ++i) {
      cm.accumulate(load_label(pairs[i].first), load_label(pairs[i].second));
    }
  });
  ConfusionMatrix total(classes);
  for (const ConfusionMatrix& cm : partial) total += cm;

  EvalReport r;
  r.images = static_cast<int>(pairs.size());
  r.excluded = config.exclude_classes;
  r.iou = compute_iou(total, r.excluded);
  return r;
}

std::string format_eval(const EvalReport& r, ReportFormat format) {
  std::ostringstream o;
  const bool csv = format == ReportFormat::kCsv;
  o << (csv ? "class,iou\n" : "class       IOU\n");
  for (std::size_t c = 0; c < r.iou.per_class.size(); ++c) {
    const auto& v = r.iou.per_class[c];
    const std::string value = v ? fixed(*v, 6) : (csv ? "" : "n/a");
    if (csv) {
      o << c << "," << value << "\n";
    } else {
      o << std::left << std::setw(8) << c << std::right << std::setw(10) << value << "\n";
    }
  }
  std::string excluded;
  for (int c : r.excluded) excluded += (excluded.empty() ? "" : ",") + std::to_string(c);
  if (csv) {
    o << "mIOU," << fixed(r.iou.miou, 6) << "\nmIOU_R," << fixed(r.iou.miou_reduced, 6)
      << "\nimages," << r.images << "\nexcluded,\"" << excluded << "\"\n";
  } else {
    o << "mIOU    " << fixed(r.iou.miou, 6) << " over " << r.iou.counted << " classes\n"
      << "mIOU^R  " << fixed(r.iou.miou_reduced, 6) << " over " << r.iou.counted_reduced
      << " classes (excluding " << (excluded.empty() ? "none" : excluded) << ")\n"
      << "images  " << r.images << "\n";
  }
  return o.str();
}

int cmd_eval(const RunConfig& config, std::ostream& out) {
  out << format_eval(evaluate(config), config.report);
  return exit_code::kOk;
}

// bench -----------------------------------------------------------------------

BenchReport bench(const RunConfig& config) {
  config.validate();
  BenchReport r;
  r.height = config.height;
  r.width = config.width;
  r.threads = config.threads;
  ArchitecturePreset preset = resolve_preset(config);
  WeightMap weights;
  if (config.weights.empty()) {
    weights = random_weights(build_regseg(preset), config.seed);
  } else {
    RunConfig base_cfg = config;
    base_cfg.schedule.clear();
    base_cfg.classes = 0;
    LoadedModel m = load_model(config.weights, resolve_preset(base_cfg));
    if (!config.schedule.empty()) m.preset.schedule = config.schedule;
    if (config.classes > 0) m.preset.num_classes = config.classes;
    preset = m.preset;
    weights = std::move(m.container.tensors);
  }
  const Executor exec(build_regseg(preset), weights, ExecOptions{config.threads, false});
  Tensor x(Shape{1, preset.input_channels, r.height, r.width}, 0.0f);
  std::mt19937 rng(7);
  std::normal_distribution<float> dist;
  for (float& v : x.data()) v = dist(rng);
  r.model = time_model(exec, x, config.warmup, config.iters);
  if (!config.skip_blocks) {
    r.blocks = run_block_comparison(config.warmup, config.iters, config.threads);
  }
  return r;
}

std::string format_bench(const BenchReport& r, ReportFormat format) {
  std::ostringstream o;
  const TimingStats& t = r.model.total;
  if (format == ReportFormat::kCsv) {
    o << "item,mean_ms,stddev_ms,min_ms,max_ms,warmup,iters\n";
    auto row = [&](const std::string& name, const TimingStats& s) {
      o << "\"" << name << "\"," << millis(s.mean) << "," << millis(s.stddev) << ","
        << millis(s.min) << "," << millis(s.max) << "," << s.warmup << ","
        << s.samples.size() << "\n";
    };
    row("total", t);
    for (const auto& [name, s] : r.model.blocks) row(name, s);
    for (const BlockBenchRow& b : r.blocks) row(b.label, b.stats);
    return o.str();
  }
  o << "input 1x3x" << r.height << "x" << r.width << ", threads " << r.threads
    << ", warmup " << t.warmup << ", measured " << t.samples.size() << "\n"
    << "total latency  mean " << millis(t.mean) << " ms  stddev " << millis(t.stddev)
    << " ms  min " << millis(t.min) << " ms  max " << millis(t.max) << " ms\n\n";
  o << std::left << std::setw(20) << "block" << std::right << std::setw(12) << "mean ms"
    << std::setw(12) << "stddev ms" << "\n";
  for (const auto& [name, s] : r.model.blocks) {
    o << std::left << std::setw(20) << name << std::right << std::setw(12) << millis(s.mean)
      << std::setw(12) << millis(s.stddev) << "\n";
  }
  if (!r.blocks.empty()) {
    o << "\nsingle block, w=256 g=16, input 1x256x64x128\n";
    o << std::left << std::setw(20) << "block" << std::right << std::setw(12) << "mean ms"
      << std::setw(12) << "stddev ms" << "\n";
    for (const BlockBenchRow& b : r.blocks) {
      o << std::left << std::setw(20) << b.label << std::right << std::setw(12)
        << millis(b.stats.mean) << std::setw(12) << millis(b.stats.stddev) << "\n";
    }
  }
  return o.str();
}

int cmd_bench(const RunConfig& config, std::ostream& out) {
  out << format_bench(bench(config), config.report);
  return exit_code::kOk;
}

// selftest --------------------------------------------------------------------

namespace {

SelftestResult conv_suite(int threads) {
  std::mt19937_64 rng(20240601);
  auto pick = [&](std::initializer_list<int> v) {
    return *(v.begin() + std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng));
  };
  std::normal_distribution<float> normal;
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    ConvSpec s;
    s.kernel = pick({1, 3});
    s.stride = pick({1, 2});
    s.dilation = pick({1, 2, 4, 14});
    s.groups = pick({1, 2, 8, 16});
    s.in_channels = s.groups * pick({1, 2, 3});
    s.out_channels = s.groups * pick({1, 2, 4});
    s.bias = pick({0, 1}) == 1;
    const Shape in{1, s.in_channels, pick({7, 16, 33}), pick({9, 16, 31})};
    Tensor x(in, 0.0f);
    for (float& v : x.data()) v = normal(rng);
    Tensor w(s.weight_shape(), 0.0f);
    for (float& v : w.data()) v = normal(rng) * 0.2f;
    std::vector<float> b(s.bias ? s.out_channels : 0);
    for (float& v : b) v = normal(rng);
    const double d =
        max_abs_diff(conv2d_fast(x, w, b, s, threads), conv2d_direct(x, w, b, s));
    if (!(d <= worst)) worst = d;
  }
  return {"conv oracle equivalence", worst <= 1e-4,
          "200 configs, max abs diff " + [&] {
            std::ostringstream o;
            o << std::scientific << std::setprecision(2) << worst;
            return o.str();
          }()};
}

SelftestResult fov_suite() {
  const std::pair<const char*, std::int64_t> rows[] = {
      {"(1,1)+(1,2)+4*(1,4)+7*(1,14)", 3807},
      {"(1,1)+(1,2)+(1,4)+(1,6)+(1,8)+(1,10)+7*(1,12)", 3743},
      {"(1,1)+(1,2)+(1,4)+(1,6)+(1,8)+8*(1,10)", 3295},
      {"(1,1)+(1,2)+(1,4)+10*(1,6)", 2207},
      {"(1,1)+(1,2)+(1,4)+(1,6)+(1,8)+(1,10)+(1,12)+6*(1,14)", 4127},
      {"5*(1,4)+8*(1,10)", 3263},
  };
  std::string detail;
  bool ok = true;
  for (const auto& [schedule, expected] : rows) {
    const std::int64_t got =
        analyze_graph_fov(build_backbone(parse_schedule(schedule))).field_of_view();
    if (got != expected) ok = false;
    detail += (detail.empty() ? "" : " ") + std::to_string(got);
  }
  return {"FOV table", ok, detail};
}

SelftestResult container_suite() {
  std::mt19937_64 rng(99);
  WeightMap tensors;
  tensors.emplace("a.w", Tensor(Shape{1, 1, 1, 4}, 1.5f));
  tensors.emplace("b.w", Tensor(Shape{3, 1, 2, 2}, -2.0f));
  const std::string good = serialize_container(tensors, {{"preset", "regseg"}});
  if (parse_container(good).tensors != tensors) {
    return {"container fuzz", false, "round trip mismatch"};
  }
  int typed = 0;
  const int cases = 500;
  for (int i = 0; i < cases; ++i) {
    std::string bad = good;
    const std::size_t header_end = std::min<std::size_t>(bad.size(), 256);
    const std::size_t pos = std::uniform_int_distribution<std::size_t>(0, header_end - 1)(rng);
    const auto flip = static_cast<char>(std::uniform_int_distribution<int>(1, 255)(rng));
    bad[pos] = static_cast<char>(bad[pos] ^ flip);
    try {
      parse_container(bad);
    } catch (const FormatError&) {
      ++typed;
    } catch (const CorruptionError&) {
      ++typed;
    } catch (...) {
    }
  }
  return {"container fuzz", typed == cases,
          std::to_string(typed) + "/" + std::to_string(cases) + " rejected with a typed error"};
}

}  // namespace

std::vector<SelftestResult> selftest(int threads) {
  return {conv_suite(threads), fov_suite(), container_suite()};
}

int cmd_selftest(const RunConfig& config, std::ostream& out) {
  bool ok = true;
  for (const SelftestResult& r : selftest(config.threads)) {
    out << (r.passed ? "PASS " : "FAIL ") << r.suite << ": " << r.detail << "\n";
    ok = ok && r.passed;
  }
  return ok ? exit_code::kOk : exit_code::kFailure;
}

int cmd_init_weights(const RunConfig& config, std::ostream& out) {
  if (config.output.empty()) throw ConfigError("init-weights needs --output");
  const ArchitecturePreset preset = resolve_preset(config);
  const WeightMap w = random_weights(build_regseg(preset), config.seed);
  save_model(config.output, preset, w);
  out << "wrote " << w.size() << " tensors to " << config.output << "\n";
  return exit_code::kOk;
}

}  // namespace regseg
