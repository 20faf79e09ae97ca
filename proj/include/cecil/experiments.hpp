#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cecil/buffer.hpp"
#include "cecil/codec.hpp"
#include "cecil/config.hpp"
#include "cecil/csv.hpp"
#include "cecil/selection.hpp"
#include "cecil/svgplot.hpp"
#include "cecil/tasks.hpp"
#include "cecil/trainer.hpp"

namespace cecil {

struct StepMetrics {
  int step = 0;
  std::vector<int> task_classes;
  double seen_accuracy = 0;
  double old_accuracy = -1;  // -1 until there are old classes
  std::uint64_t buffer_bits = 0;
  long long buffer_capacity = 0;
  int buffer_count = 0;
};

struct RunRecord {
  std::vector<StepMetrics> steps;
  double avg_accuracy = 0;
  double last_accuracy = 0;
  CodecSpec codec;
  double bpp_ori = 0;
  double bpp_comp = 0;
  long long capacity = 0;
};

/// (mean of the per-step accuracies, final accuracy).
inline std::pair<double, double> aggregate_metrics(const std::vector<double>& accs) {
  require(!accs.empty(), "aggregate_metrics over an empty accuracy list");
  double sum = 0;
  for (double a : accs) sum += a;
  return {sum / double(accs.size()), accs.back()};
}

namespace detail {

inline std::vector<Sample> subset_by_classes(const std::vector<Sample>& split,
                                             const std::vector<int>& classes) {
  std::vector<Sample> out;
  for (const auto& s : split)
    if (std::find(classes.begin(), classes.end(), s.label) != classes.end())
      out.push_back(s);
  return out;
}

inline double accuracy_over(const std::vector<int>& labels,
                            const std::vector<int>& predicted,
                            const std::vector<int>& classes) {
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (std::find(classes.begin(), classes.end(), labels[i]) == classes.end())
      continue;
    ++total;
    if (labels[i] == predicted[i]) ++hits;
  }
  require(total > 0, "no evaluation samples for the requested classes");
  return double(hits) / double(total);
}

inline nlohmann::json codec_json(const CodecSpec& spec) {
  nlohmann::json j;
  j["method"] = method_name(spec.method);
  j["quality"] = spec.quality;
  if (!spec.external_command.empty()) j["command"] = spec.external_command;
  return j;
}

inline CodecSpec codec_from_json(const nlohmann::json& j) {
  CodecSpec spec;
  spec.method = detail::method_from_string(j.at("method").get<std::string>());
  spec.quality = j.at("quality").get<int>();
  if (j.contains("command")) spec.external_command = j["command"].get<std::string>();
  return spec;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pipeline: prepare -> rd-curve -> probe-rate -> select-codec -> train ->
// report, every stage persisted under the run directory and resumable through
// state.json. A PARTIAL marker exists from first write until the run report
// completes.
// ---------------------------------------------------------------------------
class Pipeline {
 public:
  explicit Pipeline(RunConfig cfg) : cfg_(std::move(cfg)), out_(cfg_.output_dir) {
    require<ConfigError>(!out_.empty(), "run.output_dir must not be empty");
    if (!cfg_.cache_dir.empty())
      cache_ = PayloadCache(cfg_.cache_dir);
    else
      cache_ = PayloadCache::from_env();
  }

  const RunConfig& config() const { return cfg_; }
  const DatasetHandle& dataset() {
    ensure_dataset();
    return ds_;
  }

  void prepare() {
    init_run_dir();
    ensure_dataset();
    if (state_value("prepare")) return;
    auto dir = out_ / "prepare";
    std::filesystem::create_directories(dir);

    nlohmann::json info;
    info["name"] = ds_.name;
    info["classes"] = ds_.num_classes;
    info["train_samples"] = ds_.train.size();
    info["test_samples"] = ds_.test.size();
    info["source_bpp"] = pooled_source_bpp(ds_.train);
    info["protocol"] = protocol_name(cfg_.protocol.kind);
    info["tasks"] = cfg_.protocol.num_tasks;
    write_text_file(dir / "dataset.json", info.dump(2) + "\n");

    // class-order provenance: the shuffled task split, one row per class
    auto seq = task_sequence();
    CsvWriter csv(dir / "tasks.csv");
    csv.row({"step", "class", "class_name"});
    for (int t = 0; t < seq.num_tasks(); ++t)
      for (int c : seq.task_classes[std::size_t(t)])
        csv.row({std::to_string(t), std::to_string(c),
                 ds_.class_names[std::size_t(c)]});
    set_state("prepare", true);
  }

  void rd_stage() {
    prepare();
    if (state_value("rd")) return;
    auto dir = out_ / "rd";
    std::filesystem::create_directories(dir);
    std::vector<std::vector<RatePoint>> curves;
    std::vector<RatePoint> all;
    for (const auto& cand : cfg_.candidates) {
      auto curve = rd_curve(ds_, cand.method, cand.qualities, cand.external_command,
                            cache_ptr());
      all.insert(all.end(), curve.begin(), curve.end());
      curves.push_back(std::move(curve));
    }
    write_rd_csv(dir / "rd_curve.csv", all);
    write_rd_plot(dir / "rd_curve.svg", curves);
    set_state("rd", true);
  }

  void probe_stage() {
    prepare();
    if (state_value("probe")) return;
    auto dir = out_ / "probe";
    std::filesystem::create_directories(dir);

    TrainConfig probe_cfg = cfg_.trainer;
    if (cfg_.probe_epochs > 0) {
      probe_cfg.epochs = cfg_.probe_epochs;
      // drop schedule points the shortened probe never reaches
      std::erase_if(probe_cfg.milestones,
                    [&](int m) { return m >= probe_cfg.epochs; });
    }

    std::vector<ForgettingProbeResult> results;
    for (const auto& spec : candidate_specs(cfg_)) {
      try {
        results.push_back(forgetting_probe(ds_, cfg_.protocol, spec,
                                           cfg_.reference_images, probe_cfg,
                                           cache_ptr()));
      } catch (const StageError& e) {
        throw StageError("rate probe failed at " + spec.id() + ": " + e.what());
      }
    }
    require(!results.empty(), "no codec candidates to probe");

    // one winning quality per method, identity excluded (it has no knob)
    nlohmann::json selected = nlohmann::json::object();
    std::vector<const ForgettingProbeResult*> winners;
    for (const auto& cand : cfg_.candidates) {
      if (cand.method == CodecMethod::identity) continue;
      std::vector<ForgettingProbeResult> mine;
      for (const auto& r : results)
        if (r.codec.method == cand.method &&
            r.codec.external_command == cand.external_command)
          mine.push_back(r);
      if (mine.empty()) continue;
      const auto& win = select_rate(mine);
      selected[method_name(cand.method)] = detail::codec_json(win.codec);
      for (const auto& r : results)
        if (r.codec == win.codec) winners.push_back(&r);
    }

    write_probe_csv(dir / "probe.csv", results);
    SvgPlot plot("Forgetting probe", "quality", "forgetting (acc points)");
    const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    std::map<std::string, SvgPlot::Series> series;
    int color = 0;
    for (const auto& r : results) {
      std::string m = method_name(r.codec.method);
      auto it = series.find(m);
      if (it == series.end()) {
        SvgPlot::Series s;
        s.label = m;
        s.color = palette[color++ % 5];
        it = series.emplace(m, std::move(s)).first;
      }
      it->second.x.push_back(double(r.codec.quality));
      it->second.y.push_back(r.forgetting);
    }
    for (auto& [name, s] : series) plot.add_series(std::move(s));
    for (const auto* w : winners)
      plot.mark_point(double(w->codec.quality), w->forgetting, "#000000");
    plot.save(dir / "probe.svg");

    write_text_file(dir / "selected_rates.json", selected.dump(2) + "\n");
    set_state("probe", true);
  }

  void select_stage() {
    if (state_value("select")) return;
    auto dir = out_ / "selection";
    std::filesystem::create_directories(dir);

    if (cfg_.codec_choice != "auto") {
      // explicit choice: record provenance, skip probing entirely
      prepare();
      CodecSpec spec;
      spec.method = detail::method_from_string(cfg_.codec_choice);
      spec.quality = std::max(0, cfg_.quality_choice);
      spec.external_command = cfg_.external_command;
      validate_quality(spec);
      nlohmann::json j;
      j["codec"] = detail::codec_json(spec);
      j["source"] = "config";
      write_text_file(dir / "selected_codec.json", j.dump(2) + "\n");
      set_state("select", true);
      return;
    }

    probe_stage();
    auto rates = nlohmann::json::parse(read_text_file(out_ / "probe" / "selected_rates.json"));
    std::vector<CodecSpec> finalists;
    for (const auto& [m, j] : rates.items()) finalists.push_back(detail::codec_from_json(j));
    require<ConfigError>(!finalists.empty(),
                         "automatic codec selection needs at least one lossy "
                         "candidate; set experiment.codec=identity for the "
                         "uncompressed baseline");

    // the scoring backbone trains on the first task of the source-form data
    auto seq = task_sequence();
    ModelSnapshot phi;
    phi = train_step(std::move(phi), ds_.train, seq.task_train_indices[0],
                     seq.task_classes[0], ExemplarBuffer{}, Method::wa, cfg_.trainer);

    std::vector<Sample> probe_set;
    for (int idx : seq.task_train_indices[0]) {
      probe_set.push_back(ds_.train[std::size_t(idx)]);
      if (static_cast<int>(probe_set.size()) >= cfg_.fmse_samples) break;
    }
    std::vector<CodecScore> scores;
    for (const auto& spec : finalists)
      scores.push_back(score_codec(*phi.backbone, probe_set, spec, cache_ptr()));
    const auto& best = select_codec(scores);
    write_codec_scores_csv(dir / "codec_scores.csv", scores, &best);

    nlohmann::json j;
    j["codec"] = detail::codec_json(best.codec);
    j["source"] = "feature-mse";
    j["f_mse"] = best.f_mse;
    j["bpp"] = best.mean_bpp;
    j["psnr"] = std::isfinite(best.mean_psnr) ? best.mean_psnr : -1.0;
    write_text_file(dir / "selected_codec.json", j.dump(2) + "\n");
    set_state("select", true);
  }

  RunRecord train_stage() {
    select_stage();
    prepare();
    CodecSpec codec = resolve_codec();
    auto dir = out_ / "train";
    std::filesystem::create_directories(dir);

    DatasetHandle pp = preprocess_with_codec(ds_, codec, cache_ptr());
    auto seq = task_sequence();
    MemoryBudget budget =
        budget_from_reference(ds_, cfg_.reference_images, pooled_encoded_bpp(pp.train));

    RunRecord record;
    record.codec = codec;
    record.bpp_ori = budget.bpp_ori;
    record.bpp_comp = budget.bpp_comp;
    record.capacity = equivalent_capacity(budget);

    const int total_steps = seq.num_tasks();
    int done = state_.value("train_steps", 0);
    ModelSnapshot model;
    ExemplarBuffer buffer;
    if (done > 0) {
      // resume: the checkpoint plus a deterministic buffer rebuild restore
      // the exact state the interrupted run had after its last full step
      model = load_snapshot(dir / step_name(done - 1));
      buffer = rebuild_for(model, pp, seq.classes_up_to(done - 1), budget);
      for (const auto& line : read_metric_lines())
        record.steps.push_back(step_from_json(line));
    }

    const std::vector<Sample>& eval_split =
        cfg_.test_preprocessing == "codec" ? pp.test : ds_.test;

    for (int t = done; t < total_steps; ++t) {
      model = train_step(std::move(model), pp.train, seq.task_train_indices[std::size_t(t)],
                         seq.task_classes[std::size_t(t)], buffer, cfg_.method,
                         cfg_.trainer);
      buffer = rebuild_for(model, pp, seq.classes_up_to(t), budget);

      auto seen = seq.classes_up_to(t);
      auto eval_set = detail::subset_by_classes(eval_split, seen);
      auto eval = evaluate(model, eval_set, cfg_.method, &buffer);

      StepMetrics m;
      m.step = t;
      m.task_classes = seq.task_classes[std::size_t(t)];
      m.seen_accuracy = eval.accuracy;
      if (t > 0)
        m.old_accuracy = detail::accuracy_over(eval.labels, eval.predicted,
                                               seq.classes_up_to(t - 1));
      m.buffer_bits = buffer.total_bits();
      m.buffer_capacity = buffer.capacity;
      m.buffer_count = static_cast<int>(buffer.entries.size());
      record.steps.push_back(m);

      save_snapshot(model, dir / step_name(t));
      write_buffer_manifest(dir / ("buffer_step_" + std::to_string(t) + ".csv"), t,
                            buffer);
      {
        CsvWriter csv(dir / ("predictions_step_" + std::to_string(t) + ".csv"));
        csv.row({"row", "label", "predicted"});
        for (std::size_t i = 0; i < eval.labels.size(); ++i)
          csv.row({std::to_string(i), std::to_string(eval.labels[i]),
                   std::to_string(eval.predicted[i])});
      }
      append_metric_line(step_to_json(m));
      set_state("train_steps", t + 1);
    }

    std::vector<double> accs;
    for (const auto& s : record.steps) accs.push_back(s.seen_accuracy);
    auto [avg, last] = aggregate_metrics(accs);
    record.avg_accuracy = avg;
    record.last_accuracy = last;

    nlohmann::json summary;
    summary["name"] = cfg_.name;
    summary["method"] = method_label(cfg_.method);
    summary["seed"] = cfg_.trainer.seed;
    summary["codec"] = detail::codec_json(codec);
    summary["bpp_ori"] = record.bpp_ori;
    summary["bpp_comp"] = record.bpp_comp;
    summary["capacity"] = record.capacity;
    summary["budget_bytes"] = budget.bytes;
    summary["steps"] = record.steps.size();
    summary["avg_accuracy"] = record.avg_accuracy;
    summary["last_accuracy"] = record.last_accuracy;
    summary["test_preprocessing"] = cfg_.test_preprocessing;
    write_text_file(out_ / "summary.json", summary.dump(2) + "\n");
    set_state("train", true);
    return record;
  }

  // Re-derives every report number from persisted artifacts; any metric that
  // disagrees with its stored prediction file beyond 1e-6 is a hard error.
  void report_stage() {
    init_run_dir();
    auto dir = out_ / "report";
    std::filesystem::create_directories(dir);
    auto lines = read_metric_lines();

    std::ostringstream txt;
    txt << "run: " << cfg_.name << "\n";
    if (std::filesystem::exists(out_ / "summary.json")) {
      auto summary = nlohmann::json::parse(read_text_file(out_ / "summary.json"));
      txt << "method: " << summary["method"].get<std::string>() << "   codec: "
          << summary["codec"]["method"].get<std::string>() << " q"
          << summary["codec"]["quality"].get<int>() << "\n";
      txt << "budget: " << summary["budget_bytes"].get<std::uint64_t>()
          << " bytes   bpp " << format_double(summary["bpp_ori"].get<double>())
          << " -> " << format_double(summary["bpp_comp"].get<double>())
          << "   capacity " << summary["capacity"].get<long long>() << "\n";
    }
    txt << "\nstep  classes            seen-acc   old-acc    buffer-bits\n";

    std::vector<double> accs;
    SvgPlot plot("Incremental accuracy", "step", "top-1 accuracy");
    SvgPlot::Series seen_series, old_series;
    seen_series.label = "seen classes";
    seen_series.color = "#1f77b4";
    old_series.label = "old classes";
    old_series.color = "#d62728";

    int expected = cfg_.protocol.num_tasks;
    for (int t = 0; t < expected; ++t) {
      const nlohmann::json* line = nullptr;
      for (const auto& l : lines)
        if (l.value("step", -1) == t) line = &l;
      if (!line) {
        txt << std::to_string(t) << "     MISSING (partial run)\n";
        continue;
      }
      StepMetrics m = step_from_json(*line);
      verify_step_against_predictions(m);
      accs.push_back(m.seen_accuracy);

      std::string classes;
      for (std::size_t i = 0; i < m.task_classes.size(); ++i)
        classes += (i ? "," : "") + std::to_string(m.task_classes[i]);
      if (classes.size() > 18) classes = classes.substr(0, 15) + "...";
      txt << t << "     " << classes << std::string(19 - std::min<std::size_t>(18, classes.size()), ' ')
          << format_double(m.seen_accuracy) << "   "
          << (m.old_accuracy < 0 ? std::string("-") : format_double(m.old_accuracy))
          << "    " << m.buffer_bits << "\n";
      seen_series.x.push_back(t);
      seen_series.y.push_back(m.seen_accuracy);
      if (m.old_accuracy >= 0) {
        old_series.x.push_back(t);
        old_series.y.push_back(m.old_accuracy);
      }
    }

    if (!accs.empty()) {
      auto [avg, last] = aggregate_metrics(accs);
      txt << "\nAvg " << format_double(avg) << "   Last " << format_double(last) << "\n";
    } else {
      txt << "\nno completed steps\n";
    }
    write_text_file(dir / "summary.txt", txt.str());

    plot.add_series(std::move(seen_series));
    if (!old_series.x.empty()) plot.add_series(std::move(old_series));
    plot.save(dir / "accuracy.svg");

    if (static_cast<int>(accs.size()) == expected) {
      set_state("report", true);
      clear_partial();
    }
  }

  RunRecord run_all() {
    prepare();
    rd_stage();
    auto record = train_stage();  // pulls probe + selection as needed
    report_stage();
    return record;
  }

  // Paired evaluation of every persisted step on the codec-preprocessed and
  // source-form test views; training is shared so the views are the only
  // difference.
  nlohmann::json domain_shift_stage() {
    if (!state_value("train")) train_stage();
    prepare();
    CodecSpec codec = resolve_codec();
    DatasetHandle pp = preprocess_with_codec(ds_, codec, cache_ptr());
    auto seq = task_sequence();
    MemoryBudget budget =
        budget_from_reference(ds_, cfg_.reference_images, pooled_encoded_bpp(pp.train));
    auto dir = out_ / "domain_shift";
    std::filesystem::create_directories(dir);

    CsvWriter csv(dir / "domain_shift.csv");
    csv.row({"step", "matched_seen", "mismatched_seen", "matched_old",
             "mismatched_old"});
    SvgPlot plot("Old-class accuracy under domain shift", "step", "old-class accuracy");
    SvgPlot::Series matched, mismatched;
    matched.label = "matched test preprocessing";
    matched.color = "#1f77b4";
    mismatched.label = "source-form test";
    mismatched.color = "#d62728";

    double matched_sum = 0, mismatched_sum = 0;
    int old_steps = 0;
    for (int t = 0; t < seq.num_tasks(); ++t) {
      auto model = load_snapshot(out_ / "train" / step_name(t));
      auto buffer = rebuild_for(model, pp, seq.classes_up_to(t), budget);
      auto seen = seq.classes_up_to(t);
      auto eval_m = evaluate(model, detail::subset_by_classes(pp.test, seen),
                             cfg_.method, &buffer);
      auto eval_s = evaluate(model, detail::subset_by_classes(ds_.test, seen),
                             cfg_.method, &buffer);
      double old_m = -1, old_s = -1;
      if (t > 0) {
        auto old_classes = seq.classes_up_to(t - 1);
        old_m = detail::accuracy_over(eval_m.labels, eval_m.predicted, old_classes);
        old_s = detail::accuracy_over(eval_s.labels, eval_s.predicted, old_classes);
        matched.x.push_back(t);
        matched.y.push_back(old_m);
        mismatched.x.push_back(t);
        mismatched.y.push_back(old_s);
        matched_sum += old_m;
        mismatched_sum += old_s;
        ++old_steps;
      }
      csv.row({std::to_string(t), format_double(eval_m.accuracy),
               format_double(eval_s.accuracy),
               old_m < 0 ? "-" : format_double(old_m),
               old_s < 0 ? "-" : format_double(old_s)});
    }
    plot.add_series(std::move(matched));
    plot.add_series(std::move(mismatched));
    plot.save(dir / "domain_shift.svg");

    nlohmann::json j;
    j["codec"] = detail::codec_json(codec);
    j["steps_with_old_classes"] = old_steps;
    if (old_steps > 0) {
      j["matched_mean_old_accuracy"] = matched_sum / old_steps;
      j["mismatched_mean_old_accuracy"] = mismatched_sum / old_steps;
      j["margin"] = (matched_sum - mismatched_sum) / old_steps;
    }
    write_text_file(dir / "domain_shift.json", j.dump(2) + "\n");
    return j;
  }

 private:
  RunConfig cfg_;
  std::filesystem::path out_;
  std::optional<PayloadCache> cache_;
  DatasetHandle ds_;
  bool loaded_ = false;
  bool dir_ready_ = false;
  nlohmann::json state_ = nlohmann::json::object();

  const PayloadCache* cache_ptr() const { return cache_ ? &*cache_ : nullptr; }

  static std::string step_name(int t) { return "step_" + std::to_string(t) + ".ckpt"; }

  void ensure_dataset() {
    if (loaded_) return;
    if (cfg_.dataset.kind == "synthetic") {
      ds_ = make_synthetic_dataset(cfg_.dataset.synth);
    } else if (cfg_.dataset.kind == "folders") {
      ds_ = load_class_folders(cfg_.dataset.path);
    } else {
      ds_ = load_packed(cfg_.dataset.path);
    }
    validate_dataset(ds_);
    loaded_ = true;
  }

  TaskSequence task_sequence() {
    ensure_dataset();
    return build_task_sequence(ds_, cfg_.protocol);
  }

  void init_run_dir() {
    if (dir_ready_) return;
    std::filesystem::create_directories(out_);
    auto echo_path = out_ / "config.yaml";
    if (std::filesystem::exists(echo_path)) {
      require<ConfigError>(read_text_file(echo_path) == cfg_.echo + "\n",
                           "output dir " + out_.string() +
                               " belongs to a run with a different config; "
                               "use a fresh output_dir or delete it");
    } else {
      write_text_file(echo_path, cfg_.echo + "\n");
    }
    if (std::filesystem::exists(out_ / "state.json"))
      state_ = nlohmann::json::parse(read_text_file(out_ / "state.json"));
    write_text_file(out_ / "PARTIAL",
                    "run in progress or interrupted; state.json has stage flags\n");
    dir_ready_ = true;
  }

  bool state_value(const std::string& key) { return state_.value(key, false); }

  template <typename T>
  void set_state(const std::string& key, T value) {
    state_[key] = value;
    write_text_file(out_ / "state.json", state_.dump(2) + "\n");
  }

  void clear_partial() { std::filesystem::remove(out_ / "PARTIAL"); }

  CodecSpec resolve_codec() {
    auto path = out_ / "selection" / "selected_codec.json";
    require(std::filesystem::exists(path),
            "no codec selected yet; run the select-codec stage first");
    auto j = nlohmann::json::parse(read_text_file(path));
    return detail::codec_from_json(j.at("codec"));
  }

  ExemplarBuffer rebuild_for(ModelSnapshot& model, const DatasetHandle& pp,
                             const std::vector<int>& seen, const MemoryBudget& budget) {
    FeatureFn fn = [&](const std::vector<const Image*>& imgs) {
      return extract_features(*model.backbone, imgs);
    };
    return rebuild_buffer(pp.train, seen, fn, budget);
  }

  static nlohmann::json step_to_json(const StepMetrics& m) {
    nlohmann::json j;
    j["step"] = m.step;
    j["task_classes"] = m.task_classes;
    j["seen_accuracy"] = m.seen_accuracy;
    j["old_accuracy"] = m.old_accuracy;
    j["buffer_bits"] = m.buffer_bits;
    j["buffer_capacity"] = m.buffer_capacity;
    j["buffer_count"] = m.buffer_count;
    return j;
  }

  static StepMetrics step_from_json(const nlohmann::json& j) {
    StepMetrics m;
    m.step = j.at("step").get<int>();
    m.task_classes = j.at("task_classes").get<std::vector<int>>();
    m.seen_accuracy = j.at("seen_accuracy").get<double>();
    m.old_accuracy = j.at("old_accuracy").get<double>();
    m.buffer_bits = j.at("buffer_bits").get<std::uint64_t>();
    m.buffer_capacity = j.at("buffer_capacity").get<long long>();
    m.buffer_count = j.at("buffer_count").get<int>();
    return m;
  }

  void append_metric_line(const nlohmann::json& j) {
    std::ofstream out(out_ / "metrics.jsonl", std::ios::app);
    require(bool(out), "cannot append to metrics.jsonl");
    out << j.dump() << "\n";
  }

  std::vector<nlohmann::json> read_metric_lines() {
    std::vector<nlohmann::json> lines;
    auto path = out_ / "metrics.jsonl";
    if (!std::filesystem::exists(path)) return lines;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      lines.push_back(nlohmann::json::parse(line));
    }
    return lines;
  }

  void verify_step_against_predictions(const StepMetrics& m) {
    auto path = out_ / "train" / ("predictions_step_" + std::to_string(m.step) + ".csv");
    require(std::filesystem::exists(path),
            "missing prediction file for step " + std::to_string(m.step));
    auto rows = read_csv(path);
    require(rows.size() > 1, "empty prediction file for step " + std::to_string(m.step));
    std::size_t hits = 0;
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (rows[i][1] == rows[i][2]) ++hits;
    double recomputed = double(hits) / double(rows.size() - 1);
    require(std::abs(recomputed - m.seen_accuracy) <= 1e-6,
            "step " + std::to_string(m.step) +
                " accuracy does not match its persisted predictions");
  }
};

/// Runs the full pipeline for `cfg` and returns the record.
inline RunRecord run_pipeline(const RunConfig& cfg) {
  Pipeline p(cfg);
  return p.run_all();
}

// Validates that the two configs form a legal matched/mismatched pair (they
// may differ only in the test-preprocessing flag), then emits the paired
// curves from one shared training run.
inline nlohmann::json domain_shift_report(const RunConfig& a, const RunConfig& b) {
  require<ConfigError>(a.test_preprocessing != b.test_preprocessing,
                       "domain-shift pair must differ in test preprocessing");
  auto strip = [](const RunConfig& c) {
    YAML::Node n = YAML::Load(c.echo);
    if (n["experiment"]) n["experiment"].remove("test_preprocessing");
    return YAML::Dump(n);
  };
  require<ConfigError>(strip(a) == strip(b),
                       "domain-shift pair differs in fields other than "
                       "experiment.test_preprocessing");
  Pipeline p(a);
  return p.domain_shift_stage();
}

}  // namespace cecil
