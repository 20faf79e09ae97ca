#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "cecil/codec.hpp"
#include "cecil/synth.hpp"
#include "cecil/tasks.hpp"
#include "cecil/trainer.hpp"

namespace cecil {

struct DatasetConfig {
  std::string kind = "synthetic";  // synthetic | folders | packed
  std::filesystem::path path;      // folders/packed root
  SynthSpec synth;
};

struct CodecCandidate {
  CodecMethod method = CodecMethod::jpeg;
  std::vector<int> qualities;
  std::string external_command;  // method == external
};

struct RunConfig {
  std::string name = "run";
  std::filesystem::path output_dir;
  DatasetConfig dataset;
  ProtocolSpec protocol{ProtocolKind::LFS, 5, 1993};
  long long reference_images = 20;  // budget anchor B
  std::vector<CodecCandidate> candidates;
  std::string cache_dir;        // empty -> CECIL_CACHE_DIR or no cache
  int fmse_samples = 64;        // sample count for codec scoring
  int probe_epochs = -1;        // -1 -> trainer epochs
  bool probe_rank_check = false;
  Method method = Method::icarl;
  TrainConfig trainer;
  std::string codec_choice = "auto";           // auto | codec method name
  int quality_choice = -1;                     // -1 -> probe-selected
  std::string external_command;                // codec_choice == external
  std::string test_preprocessing = "codec";    // codec | source
  std::string echo;  // merged yaml, persisted verbatim into the run dir
};

namespace detail {

inline void check_keys(const YAML::Node& node, const std::string& where,
                       const std::set<std::string>& allowed) {
  if (!node || !node.IsMap()) return;
  for (const auto& kv : node) {
    auto key = kv.first.as<std::string>();
    require<ConfigError>(allowed.count(key) > 0,
                         "unknown config key '" + where + "." + key + "'");
  }
}

template <typename T>
T field(const YAML::Node& node, const std::string& key, T fallback) {
  if (!node || !node[key]) return fallback;
  try {
    return node[key].as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

inline CodecMethod method_from_string(const std::string& s) {
  if (s == "identity") return CodecMethod::identity;
  if (s == "jpeg") return CodecMethod::jpeg;
  if (s == "webp") return CodecMethod::webp;
  if (s == "external") return CodecMethod::external;
  throw ConfigError("unknown codec method: " + s);
}

}  // namespace detail

/// Applies one `--set path.to.key=value` override onto the raw tree. Values
/// parse as YAML, so scalars and flow sequences ("[6,9]") both work.
inline void apply_override(YAML::Node root, const std::string& kv) {
  auto eq = kv.find('=');
  require<ConfigError>(eq != std::string::npos && eq > 0,
                       "override must look like key.path=value: " + kv);
  std::string path = kv.substr(0, eq);
  std::string value = kv.substr(eq + 1);

  std::vector<std::string> segs;
  std::size_t at = 0;
  while (at <= path.size()) {
    auto dot = path.find('.', at);
    if (dot == std::string::npos) dot = path.size();
    require<ConfigError>(dot > at, "empty segment in override path: " + path);
    segs.push_back(path.substr(at, dot - at));
    at = dot + 1;
  }

  YAML::Node node = root;
  for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
    YAML::Node next = node[segs[i]];
    require<ConfigError>(!next || next.IsMap(),
                         "override path crosses a non-map key: " + segs[i]);
    // reset() rebinds the handle; operator= would assign through it and
    // clobber the tree we are walking.
    node.reset(next);
  }
  try {
    node[segs.back()] = YAML::Load(value);
  } catch (const YAML::Exception& e) {
    throw ConfigError("cannot parse override value '" + value + "': " + e.what());
  }
}

inline RunConfig parse_run_config(const YAML::Node& root) {
  require<ConfigError>(root && root.IsMap(), "config root must be a mapping");
  detail::check_keys(root, "", {"run", "dataset", "protocol", "budget", "codecs",
                                "selection", "experiment", "trainer"});
  RunConfig cfg;

  auto run = root["run"];
  detail::check_keys(run, "run", {"name", "output_dir", "seed"});
  cfg.name = detail::field<std::string>(run, "name", cfg.name);
  cfg.output_dir = detail::field<std::string>(run, "output_dir", "runs/" + cfg.name);
  cfg.trainer.seed = detail::field<std::uint32_t>(run, "seed", 1993);

  auto ds = root["dataset"];
  detail::check_keys(ds, "dataset",
                     {"kind", "path", "classes", "train_per_class", "test_per_class",
                      "image_size", "seed"});
  cfg.dataset.kind = detail::field<std::string>(ds, "kind", "synthetic");
  require<ConfigError>(cfg.dataset.kind == "synthetic" || cfg.dataset.kind == "folders" ||
                           cfg.dataset.kind == "packed",
                       "dataset.kind must be synthetic, folders, or packed");
  cfg.dataset.path = detail::field<std::string>(ds, "path", "");
  if (cfg.dataset.kind != "synthetic")
    require<ConfigError>(!cfg.dataset.path.empty(),
                         "dataset.path is required for kind " + cfg.dataset.kind);
  cfg.dataset.synth.classes = detail::field<int>(ds, "classes", 10);
  cfg.dataset.synth.train_per_class = detail::field<int>(ds, "train_per_class", 64);
  cfg.dataset.synth.test_per_class = detail::field<int>(ds, "test_per_class", 24);
  int size = detail::field<int>(ds, "image_size", 32);
  cfg.dataset.synth.height = size;
  cfg.dataset.synth.width = size;
  cfg.dataset.synth.seed = detail::field<std::uint32_t>(ds, "seed", 1);
  require<ConfigError>(cfg.dataset.synth.classes > 0 && size > 0 &&
                           cfg.dataset.synth.train_per_class > 0 &&
                           cfg.dataset.synth.test_per_class > 0,
                       "synthetic dataset dimensions must be positive");

  auto proto = root["protocol"];
  detail::check_keys(proto, "protocol", {"kind", "tasks", "shuffle_seed"});
  cfg.protocol.kind = protocol_from_name(detail::field<std::string>(proto, "kind", "lfs"));
  cfg.protocol.num_tasks = detail::field<int>(proto, "tasks", 5);
  cfg.protocol.shuffle_seed = detail::field<std::uint32_t>(proto, "shuffle_seed", 1993);
  require<ConfigError>(cfg.protocol.num_tasks > 0, "protocol.tasks must be positive");

  auto budget = root["budget"];
  detail::check_keys(budget, "budget", {"reference_images"});
  cfg.reference_images = detail::field<long long>(budget, "reference_images", 20);
  require<ConfigError>(cfg.reference_images > 0,
                       "budget.reference_images must be positive");

  auto codecs = root["codecs"];
  detail::check_keys(codecs, "codecs", {"cache_dir", "candidates"});
  cfg.cache_dir = detail::field<std::string>(codecs, "cache_dir", "");
  if (codecs && codecs["candidates"]) {
    require<ConfigError>(codecs["candidates"].IsSequence(),
                         "codecs.candidates must be a list");
    for (const auto& c : codecs["candidates"]) {
      detail::check_keys(c, "codecs.candidates[]", {"method", "qualities", "command"});
      CodecCandidate cand;
      cand.method = detail::method_from_string(
          detail::field<std::string>(c, "method", "jpeg"));
      cand.qualities = detail::field<std::vector<int>>(c, "qualities", {});
      cand.external_command = detail::field<std::string>(c, "command", "");
      if (cand.method == CodecMethod::identity && cand.qualities.empty())
        cand.qualities = {0};
      require<ConfigError>(!cand.qualities.empty(),
                           "codec candidate needs a qualities list");
      require<ConfigError>(cand.method != CodecMethod::external ||
                               !cand.external_command.empty(),
                           "external codec candidates need a command");
      for (const auto& prev : cfg.candidates)
        require<ConfigError>(prev.method != cand.method ||
                                 prev.external_command != cand.external_command,
                             "duplicate codec candidate: " +
                                 detail::field<std::string>(c, "method", "jpeg"));
      cfg.candidates.push_back(std::move(cand));
    }
  }
  if (cfg.candidates.empty()) {
    CodecCandidate jpeg;
    jpeg.method = CodecMethod::jpeg;
    jpeg.qualities = {10, 35, 60, 85};
    cfg.candidates.push_back(std::move(jpeg));
  }

  auto sel = root["selection"];
  detail::check_keys(sel, "selection", {"fmse_samples", "probe_epochs", "rank_check"});
  cfg.fmse_samples = detail::field<int>(sel, "fmse_samples", 64);
  cfg.probe_epochs = detail::field<int>(sel, "probe_epochs", -1);
  cfg.probe_rank_check = detail::field<bool>(sel, "rank_check", false);
  require<ConfigError>(cfg.fmse_samples > 0, "selection.fmse_samples must be positive");

  auto exp = root["experiment"];
  detail::check_keys(exp, "experiment",
                     {"method", "codec", "quality", "command", "test_preprocessing"});
  cfg.method = method_from_label(detail::field<std::string>(exp, "method", "icarl"));
  cfg.codec_choice = detail::field<std::string>(exp, "codec", "auto");
  cfg.quality_choice = detail::field<int>(exp, "quality", -1);
  cfg.external_command = detail::field<std::string>(exp, "command", "");
  cfg.test_preprocessing =
      detail::field<std::string>(exp, "test_preprocessing", "codec");
  require<ConfigError>(cfg.test_preprocessing == "codec" ||
                           cfg.test_preprocessing == "source",
                       "experiment.test_preprocessing must be codec or source");
  if (cfg.codec_choice != "auto") {
    auto m = detail::method_from_string(cfg.codec_choice);  // validates the name
    require<ConfigError>(m != CodecMethod::external || !cfg.external_command.empty(),
                         "experiment.codec=external needs experiment.command");
    require<ConfigError>(m == CodecMethod::identity || cfg.quality_choice >= 1,
                         "explicit codec choice needs experiment.quality >= 1");
  }

  auto tr = root["trainer"];
  detail::check_keys(tr, "trainer",
                     {"backbone", "epochs", "batch_size", "lr", "milestones", "lr_decay",
                      "momentum", "weight_decay", "distill_temperature"});
  cfg.trainer.backbone = detail::field<std::string>(tr, "backbone", "resnet-lite-w8");
  cfg.trainer.epochs = detail::field<int>(tr, "epochs", 12);
  cfg.trainer.batch_size = detail::field<int>(tr, "batch_size", 32);
  cfg.trainer.lr = detail::field<double>(tr, "lr", 0.1);
  cfg.trainer.milestones = detail::field<std::vector<int>>(tr, "milestones", {});
  cfg.trainer.lr_decay = detail::field<double>(tr, "lr_decay", 0.1);
  cfg.trainer.momentum = detail::field<double>(tr, "momentum", 0.9);
  cfg.trainer.weight_decay = detail::field<double>(tr, "weight_decay", 5e-4);
  cfg.trainer.distill_temperature = detail::field<double>(tr, "distill_temperature", 2.0);
  validate_train_config(cfg.trainer);

  if (cfg.output_dir.empty()) cfg.output_dir = "runs/" + cfg.name;
  cfg.echo = YAML::Dump(root);
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& file,
                                 const std::vector<std::string>& overrides = {}) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(file.string());
  } catch (const YAML::BadFile&) {
    throw ConfigError("cannot open config file: " + file.string());
  } catch (const YAML::Exception& e) {
    throw ConfigError("config parse error in " + file.string() + ": " + e.what());
  }
  for (const auto& kv : overrides) apply_override(root, kv);
  return parse_run_config(root);
}

/// The candidate list expanded into concrete codec specs, grid order.
inline std::vector<CodecSpec> candidate_specs(const RunConfig& cfg) {
  std::vector<CodecSpec> specs;
  for (const auto& cand : cfg.candidates)
    for (int q : cand.qualities) {
      CodecSpec spec;
      spec.method = cand.method;
      spec.quality = q;
      spec.external_command = cand.external_command;
      try {
        validate_quality(spec);
      } catch (const CodecError& e) {
        throw ConfigError(e.what());
      }
      specs.push_back(std::move(spec));
    }
  return specs;
}

}  // namespace cecil
