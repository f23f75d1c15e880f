#include "voclab/cli.hpp"

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "voclab/aggregation.hpp"
#include "voclab/audio.hpp"
#include "voclab/classifier.hpp"
#include "voclab/dataset.hpp"
#include "voclab/error.hpp"
#include "voclab/features.hpp"
#include "voclab/report.hpp"
#include "voclab/service.hpp"
#include "voclab/util.hpp"

namespace voclab::cli {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// Every option a subcommand resolved, after config file and flags merged.
json effective_config(const CLI::App& app, const CLI::App& sub) {
  json j;
  j["subcommand"] = sub.get_name();
  auto add = [&j](const CLI::App& a) {
    for (const CLI::Option* opt : a.get_options()) {
      const std::string name = opt->get_name(false, true);
      if (name.empty() || name == "--help" || name == "--config") continue;
      std::string key = opt->get_single_name();
      std::vector<std::string> values = opt->reduced_results();
      if (values.empty() && !opt->get_default_str().empty()) values.push_back(opt->get_default_str());
      if (values.empty()) continue;
      if (opt->get_expected_max() > 1) {
        j[key] = values;
      } else {
        j[key] = values.front();
      }
    }
  };
  add(app);
  add(sub);
  return j;
}

void write_output(const std::string& out, const std::string& contents, std::ostream& stdout_stream) {
  if (out == "-") {
    stdout_stream << contents;
    stdout_stream.flush();
    return;
  }
  write_file_atomic(out, contents);
}

// JSONL and binary outputs carry their configuration in a sidecar file.
void write_sidecar(const std::string& out, const json& config) {
  if (out == "-") return;
  write_file_atomic(out + ".meta.json", config.dump(2) + "\n");
}

std::optional<json> read_sidecar(const fs::path& artifact) {
  fs::path p = artifact;
  p += ".meta.json";
  if (!fs::exists(p)) return std::nullopt;
  return json::parse(read_file(p));
}

std::array<Fraction, 3> parse_ratios(const std::string& s) {
  const auto parts = split(s, ',');
  if (parts.size() != 3) throw ValidationError("--ratios needs three comma-separated values, got \"" + s + "\"");
  std::array<Fraction, 3> r{};
  for (std::size_t i = 0; i < 3; ++i) r[i] = parse_fraction(parts[i]);
  check_ratios(r);
  return r;
}

std::map<std::string, Fold> fold_filter(const std::string& split_path, const std::string& fold) {
  if (split_path.empty()) return {};
  const auto a = read_split_file(split_path);
  if (fold.empty()) return a.clip_fold;
  const Fold f = fold_from_string(fold);
  std::map<std::string, Fold> out;
  for (const auto& [clip, cf] : a.clip_fold) {
    if (cf == f) out.emplace(clip, cf);
  }
  return out;
}

json feature_config_json(const FeatureConfig& c) {
  return json{{"kind", to_string(c.kind)}, {"n_mels", c.n_mels},   {"window_ms", c.window_ms},
              {"hop_ms", c.hop_ms},        {"fmin_hz", c.fmin_hz}, {"fmax_hz", c.fmax_hz},
              {"log_floor", c.log_floor}};
}

FeatureConfig feature_config_from_json(const json& j) {
  FeatureConfig c;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == to_string(FeatureKind::LogMelStats)) {
    c.kind = FeatureKind::LogMelStats;
  } else if (kind == to_string(FeatureKind::ImportedEmbedding)) {
    c.kind = FeatureKind::ImportedEmbedding;
  } else {
    throw ValidationError("unknown feature kind \"" + kind + "\"");
  }
  c.n_mels = j.at("n_mels").get<int>();
  c.window_ms = j.at("window_ms").get<double>();
  c.hop_ms = j.at("hop_ms").get<double>();
  c.fmin_hz = j.at("fmin_hz").get<double>();
  c.fmax_hz = j.at("fmax_hz").get<double>();
  c.log_floor = j.at("log_floor").get<double>();
  return c;
}

std::string with_extension(const std::string& path, const std::string& ext) {
  fs::path p(path);
  p.replace_extension(ext);
  return p.string();
}

struct Options {
  std::uint64_t seed = 0;

  // shared
  std::string manifest;
  std::vector<std::string> annotation_logs;
  std::string labels;
  std::string tier = "cleaned";
  std::string split;
  std::string out;

  // aggregate
  std::string majority = "2/3";
  int min_annotations = 3;
  std::string tie_policy = "exclude";

  // downsample
  std::string anchor_class = "laughing";
  std::string multiplier = "3";

  // split
  std::string ratios = "0.8,0.1,0.1";
  int age_bucket_months = 12;
  bool from_manifest = false;

  // prep / featurize
  std::string on_overflow = "error";
  std::string clips;
  std::string embeddings;
  int n_mels = 40;
  double fmin_hz = 20.0;
  double fmax_hz = 8000.0;

  // train / predict
  std::string features;
  std::string model;
  std::string fold;
  int epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  std::size_t hidden = 256;
  std::string optimizer = "sgd_momentum";
  bool no_standardize = false;

  // evaluate / agreement / report
  std::string predictions;
  std::string weights;
  std::size_t resamples = 1000;
  int min_pairs = 20;
  bool pooled = false;
  std::vector<std::string> strata{"environment"};
  std::string dataset_id = "dataset";
  std::string finetune_set;
  std::string markdown;
  std::vector<std::string> inputs;

  // serve
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string gold_manifest;
  std::string store;
  int target_per_clip = 3;
  bool continue_past_target = false;
  int qual_n = 10;
  std::string qual_threshold = "0.8";
  std::string secret;
  std::string static_dir;
};

Manifest load_with_logs(const Options& o) {
  Manifest m = load_manifest(o.manifest);
  for (const auto& log : o.annotation_logs) merge_annotation_log(m, log);
  return m;
}

WeightMatrix load_weights(const Options& o) {
  return o.weights.empty() ? WeightMatrix::hierarchical_default() : read_weight_matrix(o.weights);
}

std::map<std::string, FeatureVector> load_features(const std::string& path) {
  std::map<std::string, FeatureVector> out;
  for (auto& v : import_embeddings(path)) out.emplace(v.clip_id, std::move(v));
  return out;
}

void run_aggregate(const Options& o, const json& echo, std::ostream& out, std::ostream& err) {
  const Manifest m = load_with_logs(o);
  AggregationConfig cfg;
  cfg.strong_majority_threshold = parse_fraction(o.majority);
  cfg.min_annotations = o.min_annotations;
  cfg.tie_policy = tie_policy_from_string(o.tie_policy);
  const Tiers t = build_tiers(m, cfg);
  write_output(o.out, serialize_tier_file(t.per_clip), out);
  write_sidecar(o.out, echo);
  err << "aggregate: " << t.per_clip.size() << " clips, " << t.uncleaned.size() << " uncleaned, "
      << t.cleaned.size() << " cleaned, " << t.dropped.size() << " dropped\n";
}

void run_downsample(const Options& o, const json& echo, std::ostream& out, std::ostream& err) {
  const Manifest m = load_with_logs(o);
  const auto labels = read_tier_file(o.labels);
  const Tier tier = tier_from_string(o.tier);
  SamplingConfig cfg;
  cfg.anchor_class = label_from_string(o.anchor_class);
  cfg.multiplier = parse_fraction(o.multiplier);
  cfg.seed = o.seed;
  const auto kept = downsample(select_tier(m, labels, tier), cfg);

  std::map<std::string, const AggregatedLabel*> by_id;
  for (const auto& l : labels) by_id.emplace(l.clip_id, &l);
  std::vector<AggregatedLabel> subset;
  subset.reserve(kept.size());
  for (const auto& k : kept) subset.push_back(*by_id.at(k.clip.clip_id));
  write_output(o.out, serialize_tier_file(subset), out);
  write_sidecar(o.out, echo);
  err << "downsample: kept " << subset.size() << " clips\n";
}

void run_split(const Options& o, const json& echo, std::ostream& out, std::ostream& err) {
  const Manifest m = load_with_logs(o);
  SplitAssignment a;
  if (o.from_manifest) {
    std::vector<std::string> ids;
    if (!o.labels.empty()) {
      for (const auto& l : select_tier(m, read_tier_file(o.labels), tier_from_string(o.tier))) {
        ids.push_back(l.clip.clip_id);
      }
    }
    a = apply_split_hint(m, ids);
  } else {
    if (o.labels.empty()) throw ValidationError("split needs --labels unless --from-manifest is given");
    SplitConfig cfg;
    cfg.ratios = parse_ratios(o.ratios);
    cfg.seed = o.seed;
    cfg.age_bucket_months = o.age_bucket_months;
    a = split_children(select_tier(m, read_tier_file(o.labels), tier_from_string(o.tier)), cfg);
  }
  for (const auto& v : a.violations) err << "split: warning: " << v << "\n";
  write_output(o.out, serialize_split_file(a), out);
  json meta = echo;
  meta["achieved"] = a.achieved;
  write_sidecar(o.out, meta);
  err << "split: " << a.child_fold.size() << " children, " << a.clip_fold.size() << " clips, achieved "
      << format_double(a.achieved[0]) << "/" << format_double(a.achieved[1]) << "/" << format_double(a.achieved[2])
      << "\n";
}

void run_prep(const Options& o, const json& echo, std::ostream&, std::ostream& err) {
  if (o.out == "-") throw ValidationError("prep writes a binary file; --out must be a path");
  const Manifest m = load_manifest(o.manifest);
  const OverflowPolicy policy = o.on_overflow == "crop"    ? OverflowPolicy::Crop
                                : o.on_overflow == "error" ? OverflowPolicy::Error
                                                           : throw ValidationError("--on-overflow must be error or crop");
  std::vector<const ClipRecord*> wanted;
  if (o.labels.empty()) {
    for (const auto& c : m.clips) wanted.push_back(&c);
  } else {
    for (const auto& l : select_tier(m, read_tier_file(o.labels), tier_from_string(o.tier))) {
      wanted.push_back(m.find_clip(l.clip.clip_id));
    }
  }
  const fs::path base = fs::path(o.manifest).parent_path();
  std::vector<std::optional<ClipTensor>> slots(wanted.size());
  parallel_for(wanted.size(), [&](std::size_t i) {
    const ClipRecord& c = *wanted[i];
    const fs::path uri(c.audio_uri);
    try {
      const RawAudio raw = read_wav(uri.is_absolute() ? uri : base / uri);
      slots[i].emplace(ClipTensor{c.clip_id, prepare_clip(raw, policy)});
    } catch (const std::exception& e) {
      throw ValidationError("clip \"" + c.clip_id + "\": " + e.what());
    }
  });
  std::vector<ClipTensor> clips;
  clips.reserve(slots.size());
  for (auto& s : slots) clips.push_back(std::move(*s));
  write_clip_tensors(o.out, clips);
  write_sidecar(o.out, echo);
  err << "prep: wrote " << clips.size() << " clips\n";
}

void run_featurize(const Options& o, const json& echo, std::ostream& out, std::ostream& err) {
  FeatureConfig cfg;
  std::vector<FeatureVector> vectors;
  if (!o.embeddings.empty()) {
    cfg.kind = FeatureKind::ImportedEmbedding;
    vectors = import_embeddings(o.embeddings);
  } else {
    if (o.clips.empty()) throw ValidationError("featurize needs --clips or --embeddings");
    cfg.n_mels = o.n_mels;
    cfg.fmin_hz = o.fmin_hz;
    cfg.fmax_hz = o.fmax_hz;
    check_feature_config(cfg);
    const auto clips = read_clip_tensors(o.clips);
    vectors.resize(clips.size());
    const std::size_t chunks = std::max<std::size_t>(1, std::min(worker_count(), clips.size()));
    parallel_for(chunks, [&](std::size_t chunk) {
      LogMelExtractor ex(cfg);
      for (std::size_t i = chunk; i < clips.size(); i += chunks) vectors[i] = ex.extract(clips[i].clip_id, clips[i].clip);
    });
  }
  write_output(o.out, serialize_embeddings(vectors), out);
  json meta = echo;
  meta["feature_config"] = feature_config_json(cfg);
  write_sidecar(o.out, meta);
  err << "featurize: " << vectors.size() << " vectors of dimension "
      << (vectors.empty() ? 0 : vectors.front().values.size()) << "\n";
}

void run_train(const Options& o, const json& echo, std::ostream&, std::ostream& err) {
  if (o.out == "-") throw ValidationError("train writes a binary file; --out must be a path");
  const auto features = load_features(o.features);
  FeatureConfig fcfg;
  fcfg.kind = FeatureKind::ImportedEmbedding;
  if (auto meta = read_sidecar(o.features); meta && meta->contains("feature_config")) {
    fcfg = feature_config_from_json(meta->at("feature_config"));
  }
  const auto labels = read_tier_file(o.labels);
  const Tier tier = tier_from_string(o.tier);
  const auto folds = read_split_file(o.split).clip_fold;

  std::vector<LabeledFeatures> train_set, dev_set;
  for (const auto& l : labels) {
    if (!(tier == Tier::Cleaned ? l.in_cleaned : l.in_uncleaned)) continue;
    auto f = folds.find(l.clip_id);
    if (f == folds.end() || f->second == Fold::Test) continue;
    auto v = features.find(l.clip_id);
    if (v == features.end()) throw ValidationError("no features for clip \"" + l.clip_id + "\"");
    (f->second == Fold::Train ? train_set : dev_set).push_back({v->second, *l.label});
  }
  TrainConfig cfg;
  cfg.seed = o.seed;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.learning_rate = o.learning_rate;
  cfg.momentum = o.momentum;
  cfg.hidden_units = o.hidden;
  cfg.optimizer = optimizer_from_string(o.optimizer);
  cfg.standardize = !o.no_standardize;
  const ClassifierModel model = train(train_set, dev_set, cfg, fcfg);
  save_model(o.out, model);
  json meta = echo;
  json log = json::array();
  for (const auto& e : model.training_log) {
    log.push_back(json{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"dev_uar", e.dev_uar}});
  }
  meta["training_log"] = std::move(log);
  meta["selected_epoch"] = model.selected_epoch;
  write_sidecar(o.out, meta);
  for (const auto& e : model.training_log) {
    err << "train: epoch " << e.epoch << " loss " << format_double(e.train_loss) << " dev UAR "
        << format_double(e.dev_uar) << "\n";
  }
  err << "train: selected epoch " << model.selected_epoch << "\n";
}

void run_predict(const Options& o, const json& echo, std::ostream& out, std::ostream& err) {
  const ClassifierModel model = load_model(o.model);
  std::vector<FeatureVector> vectors = import_embeddings(o.features);
  if (!o.split.empty()) {
    const auto keep = fold_filter(o.split, o.fold);
    std::erase_if(vectors, [&](const FeatureVector& v) { return !keep.count(v.clip_id); });
  }
  const auto preds = predict(model, vectors);
  write_output(o.out, serialize_predictions(preds), out);
  write_sidecar(o.out, echo);
  err << "predict: " << preds.size() << " predictions\n";
}

AgreementOptions agreement_options(const Options& o) {
  AgreementOptions a;
  a.weights = load_weights(o);
  a.resamples = o.resamples;
  a.seed = o.seed;
  a.min_pairs = o.min_pairs;
  a.pooled = o.pooled;
  return a;
}

void write_report(const Options& o, const std::string& json_text, const std::string& md, std::ostream& out) {
  write_output(o.out, json_text, out);
  if (!o.markdown.empty()) {
    write_output(o.markdown, md, out);
  } else if (o.out != "-") {
    write_file_atomic(with_extension(o.out, ".md"), md);
  }
}

void run_evaluate(const Options& o, const json& echo, std::ostream& out, std::ostream& err) {
  const Manifest m = load_with_logs(o);
  const auto preds = read_predictions(o.predictions);
  const auto gold = read_tier_file(o.labels);
  std::optional<SplitAssignment> split;
  if (!o.split.empty()) split = read_split_file(o.split);
  EvaluateOptions opts;
  opts.dataset_id = o.dataset_id;
  opts.finetune_set = o.finetune_set.empty() ? o.dataset_id : o.finetune_set;
  opts.tier = tier_from_string(o.tier);
  opts.strata_keys = o.strata;
  opts.age_bucket_months = o.age_bucket_months;
  opts.seed = o.seed;
  opts.resamples = o.resamples;
  opts.agreement = agreement_options(o);
  opts.extra_echo = echo;
  const EvaluationReport r = evaluate(preds, gold, m, split ? &*split : nullptr, opts);
  write_report(o, to_json(r).dump(2) + "\n", render_markdown(r), out);
  err << "evaluate: " << r.clips << " clips, UAR " << format_double(r.overall.uar) << "\n";
}

void run_agreement(const Options& o, const json& echo, std::ostream& out, std::ostream& err) {
  const Manifest m = load_with_logs(o);
  std::vector<std::string> ids;
  if (o.labels.empty()) {
    for (const auto& c : m.clips) ids.push_back(c.clip_id);
  } else {
    for (const auto& l : select_tier(m, read_tier_file(o.labels), tier_from_string(o.tier))) {
      ids.push_back(l.clip.clip_id);
    }
  }
  std::vector<PredictionRecord> preds;
  if (!o.predictions.empty()) preds = read_predictions(o.predictions);
  const AgreementOptions opts = agreement_options(o);
  const AgreementReport r = compute_agreement(m, ids, preds, opts);
  json j;
  j["schema_version"] = kReportSchemaVersion;
  j["agreement"] = to_json(r, opts.weights);
  j["config_echo"] = echo;
  write_report(o, j.dump(2) + "\n", render_markdown(r), out);
  for (const auto& f : r.fleiss) {
    err << "agreement: " << f.name << " ";
    if (f.result) {
      err << "kappa " << format_double(f.result->kappa) << " over " << f.result->n_items << " clips\n";
    } else {
      err << "undefined (" << f.note << ")\n";
    }
  }
}

void run_report(const Options& o, const json&, std::ostream& out, std::ostream& err) {
  std::vector<ComparisonEntry> entries;
  for (const auto& path : o.inputs) entries.push_back(comparison_entry(json::parse(read_file(path))));
  const ComparisonTable t = compare_matrix(entries);
  write_output(o.out, render_comparison(t), out);
  err << "report: " << t.rows.size() << " x " << t.columns.size() << " table, " << t.missing.size()
      << " missing cells\n";
}

std::atomic<AnnotationHttpServer*> g_server{nullptr};

extern "C" void on_signal(int) {
  // Server::stop only flips flags and shuts the listening socket down.
  if (auto* s = g_server.load()) s->stop();
}

void run_serve(const Options& o, const json&, std::ostream& out, std::ostream& err) {
  ServiceConfig cfg;
  cfg.target_per_clip = o.target_per_clip;
  cfg.continue_past_target = o.continue_past_target;
  cfg.qualification_n = o.qual_n;
  cfg.qualification_threshold = parse_fraction(o.qual_threshold);
  cfg.seed = o.seed;
  if (!o.secret.empty()) cfg.shared_secret = o.secret;
  AnnotationService service(o.manifest, o.gold_manifest, o.store, cfg);
  std::optional<fs::path> static_dir;
  if (!o.static_dir.empty()) static_dir = o.static_dir;
  AnnotationHttpServer server(service, static_dir);
  int port = o.port;
  if (port == 0) {
    port = server.bind_ephemeral(o.host);
    if (port < 0) throw Error("cannot bind " + o.host);
  } else if (!server.bind(o.host, port)) {
    throw Error("cannot bind " + o.host + ":" + std::to_string(port));
  }
  out << "listening on http://" << o.host << ":" << port << "\n";
  out.flush();
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.serve();
  g_server = nullptr;
  err << "serve: stopped\n";
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"voclab: infant vocalization corpus tools", "voclab"};
  app.set_config("--config", "", "Read option defaults from a TOML file (flags override it)");
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--seed", o.seed, "Seed for every random choice")->capture_default_str();

  auto manifest = [&](CLI::App* s, bool required = true) {
    s->add_option("--manifest,--in", o.manifest, "Corpus manifest (JSONL)")->required(required)->check(
        CLI::ExistingFile);
    s->add_option("--annotations", o.annotation_logs, "Extra annotation logs to merge")->check(CLI::ExistingFile);
  };
  auto labels = [&](CLI::App* s, bool required) {
    s->add_option("--labels", o.labels, "Tier file from aggregate or downsample")->required(required)->check(
        CLI::ExistingFile);
    s->add_option("--tier", o.tier, "cleaned or uncleaned")
        ->check(CLI::IsMember({"cleaned", "uncleaned"}))
        ->capture_default_str();
  };
  auto outp = [&](CLI::App* s) { s->add_option("--out", o.out, "Output path, - for stdout")->required(); };
  auto agreement_flags = [&](CLI::App* s) {
    s->add_option("--weights", o.weights, "5x5 disagreement weight file")->check(CLI::ExistingFile);
    s->add_option("--resamples", o.resamples, "Bootstrap resamples")->capture_default_str();
    s->add_option("--min-pairs", o.min_pairs, "Minimum clips shared with the model per annotator")
        ->capture_default_str();
    s->add_flag("--pooled", o.pooled, "Pool all annotators for model agreement");
    s->add_option("--markdown", o.markdown, "Markdown output (default: --out with .md)");
  };

  auto* agg = app.add_subcommand("aggregate", "Plurality labels and cleaned/uncleaned tiers");
  manifest(agg);
  outp(agg);
  agg->add_option("--majority", o.majority, "Cleaned-tier agreement threshold")->capture_default_str();
  agg->add_option("--min-annotations", o.min_annotations, "Minimum annotations per clip")->capture_default_str();
  agg->add_option("--tie-policy", o.tie_policy, "exclude or fixed_priority")->capture_default_str();

  auto* ds = app.add_subcommand("downsample", "Cap each class relative to the anchor class");
  manifest(ds);
  labels(ds, true);
  outp(ds);
  ds->add_option("--anchor-class", o.anchor_class, "Class left untouched")->capture_default_str();
  ds->add_option("--multiplier", o.multiplier, "Cap = ceil(multiplier * anchor count)")->capture_default_str();

  auto* sp = app.add_subcommand("split", "Child-disjoint stratified train/dev/test folds");
  manifest(sp);
  labels(sp, false);
  outp(sp);
  sp->add_option("--ratios", o.ratios, "train,dev,test clip proportions")->capture_default_str();
  sp->add_option("--age-bucket-months", o.age_bucket_months, "Age stratum width")->capture_default_str();
  sp->add_option("--anchor-class", o.anchor_class, "Accepted for pipeline symmetry");
  sp->add_option("--multiplier", o.multiplier, "Accepted for pipeline symmetry");
  sp->add_flag("--from-manifest", o.from_manifest, "Use the manifest's split records instead");

  auto* prep = app.add_subcommand("prep", "Decode, mix down, resample and pad clips");
  manifest(prep);
  labels(prep, false);
  outp(prep);
  prep->add_option("--on-overflow", o.on_overflow, "error or crop")
      ->check(CLI::IsMember({"error", "crop"}))
      ->capture_default_str();

  auto* feat = app.add_subcommand("featurize", "Log-mel statistics or imported embeddings");
  feat->add_option("--clips", o.clips, "Clip-tensor file from prep")->check(CLI::ExistingFile);
  feat->add_option("--embeddings", o.embeddings, "Precomputed embedding CSV to import")->check(CLI::ExistingFile);
  outp(feat);
  feat->add_option("--n-mels", o.n_mels, "Mel bands")->capture_default_str();
  feat->add_option("--fmin", o.fmin_hz, "Lowest mel edge (Hz)")->capture_default_str();
  feat->add_option("--fmax", o.fmax_hz, "Highest mel edge (Hz)")->capture_default_str();

  auto* tr = app.add_subcommand("train", "Fit the softmax classifier");
  tr->add_option("--features", o.features, "Embedding CSV")->required()->check(CLI::ExistingFile);
  labels(tr, true);
  tr->add_option("--split", o.split, "Split file")->required()->check(CLI::ExistingFile);
  outp(tr);
  tr->add_option("--epochs", o.epochs)->capture_default_str();
  tr->add_option("--batch-size", o.batch_size)->capture_default_str();
  tr->add_option("--lr", o.learning_rate)->capture_default_str();
  tr->add_option("--momentum", o.momentum)->capture_default_str();
  tr->add_option("--hidden", o.hidden, "Hidden units, 0 for a linear head")->capture_default_str();
  tr->add_option("--optimizer", o.optimizer, "sgd_momentum or adaptive_moments")->capture_default_str();
  tr->add_flag("--no-standardize", o.no_standardize, "Feed raw features to the network");

  auto* pr = app.add_subcommand("predict", "Score clips with a trained model");
  pr->add_option("--model", o.model)->required()->check(CLI::ExistingFile);
  pr->add_option("--features", o.features)->required()->check(CLI::ExistingFile);
  pr->add_option("--split", o.split, "Restrict to clips in this split file")->check(CLI::ExistingFile);
  pr->add_option("--fold", o.fold, "Restrict to one fold (with --split)");
  outp(pr);

  auto* ev = app.add_subcommand("evaluate", "UAR, confusion, AUC, strata and agreement report");
  manifest(ev);
  labels(ev, true);
  ev->add_option("--predictions", o.predictions)->required()->check(CLI::ExistingFile);
  ev->add_option("--split", o.split, "Score only the test fold of this split")->check(CLI::ExistingFile);
  ev->add_option("--strata", o.strata, "Stratum keys")->delimiter(',')->capture_default_str();
  ev->add_option("--age-bucket-months", o.age_bucket_months)->capture_default_str();
  ev->add_option("--dataset-id", o.dataset_id, "Test-set name in comparison tables")->capture_default_str();
  ev->add_option("--finetune-set", o.finetune_set, "Training-set name in comparison tables");
  agreement_flags(ev);
  outp(ev);

  auto* ag = app.add_subcommand("agreement", "Weighted kappa between annotators and against a model");
  manifest(ag);
  labels(ag, false);
  ag->add_option("--predictions", o.predictions)->check(CLI::ExistingFile);
  agreement_flags(ag);
  outp(ag);

  auto* rep = app.add_subcommand("report", "Fine-tune x test comparison table from evaluate reports");
  rep->add_option("--inputs", o.inputs, "Evaluate report JSON files")->required()->check(CLI::ExistingFile);
  outp(rep);

  auto* sv = app.add_subcommand("serve", "Run the annotation service");
  sv->add_option("--manifest", o.manifest, "Research corpus manifest")->required()->check(CLI::ExistingFile);
  sv->add_option("--gold-manifest", o.gold_manifest, "Qualification clips")->required()->check(CLI::ExistingFile);
  sv->add_option("--store", o.store, "Append-only annotation log")->required();
  sv->add_option("--host", o.host)->capture_default_str();
  sv->add_option("--port", o.port, "0 picks a free port")->capture_default_str();
  sv->add_option("--target-per-clip", o.target_per_clip)->capture_default_str();
  sv->add_flag("--continue-past-target", o.continue_past_target);
  sv->add_option("--qual-n", o.qual_n)->capture_default_str();
  sv->add_option("--qual-threshold", o.qual_threshold)->capture_default_str();
  sv->add_option("--secret", o.secret, "Require this X-Voclab-Secret header");
  sv->add_option("--static-dir", o.static_dir, "Serve the annotation UI from here")->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    err << app.help("", CLI::AppFormatMode::Normal);
    return 2;
  }

  const std::vector<std::pair<CLI::App*, void (*)(const Options&, const json&, std::ostream&, std::ostream&)>>
      handlers{{agg, run_aggregate}, {ds, run_downsample}, {sp, run_split},      {prep, run_prep},
               {feat, run_featurize}, {tr, run_train},     {pr, run_predict},    {ev, run_evaluate},
               {ag, run_agreement},  {rep, run_report},    {sv, run_serve}};
  for (const auto& [sub, fn] : handlers) {
    if (!sub->parsed()) continue;
    try {
      fn(o, effective_config(app, *sub), out, err);
      return 0;
    } catch (const std::exception& e) {
      err << "voclab " << sub->get_name() << ": error: " << e.what() << "\n";
      return 1;
    }
  }
  return 2;
}

}  // namespace voclab::cli
