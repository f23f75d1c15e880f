#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "voclab/corpus.hpp"
#include "voclab/fraction.hpp"
#include "voclab/rng.hpp"

namespace voclab {

struct ServiceConfig {
  int target_per_clip = 3;
  bool continue_past_target = false;
  int qualification_n = 10;
  Fraction qualification_threshold{8, 10};
  std::uint64_t seed = 0;
  /// When set, every API request must carry it in X-Voclab-Secret.
  std::optional<std::string> shared_secret;
};

/// Append-only annotation log in the manifest's annotation record format.
/// Each append is flushed and fsync'ed before it returns.
class AnnotationStore {
 public:
  explicit AnnotationStore(std::filesystem::path path);
  ~AnnotationStore();
  AnnotationStore(const AnnotationStore&) = delete;
  AnnotationStore& operator=(const AnnotationStore&) = delete;

  /// Records already present in the file at open.
  const std::vector<Annotation>& initial() const noexcept { return initial_; }
  void append(const Annotation& a);
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::vector<Annotation> initial_;
  int fd_ = -1;
};

struct Progress {
  std::size_t total_clips = 0;
  std::size_t fully_annotated = 0;
  std::size_t annotations_total = 0;
  std::array<std::size_t, kNumClasses> per_class{};
};

struct AnnotatorSession {
  std::string annotator_id;
  bool qualified = false;
  Fraction qualification_score{0, 1};
  std::size_t clips_annotated = 0;
};

enum class SubmitStatus : std::uint8_t { Created, Duplicate, UnknownClip, InvalidLabel, NotQualified };

struct QualificationPrompt {
  std::string clip_id;
  std::string audio_url;
  int answered = 0;
  int total = 0;
};

struct QualificationOutcome {
  bool correct = false;
  int answered = 0;
  int correct_so_far = 0;
  int total = 0;
  bool finished = false;
  bool qualified = false;
  /// True when the attempt ended below threshold; the next prompt starts a
  /// fresh sample.
  bool retry = false;
};

class ServiceError : public std::runtime_error {
 public:
  enum class Code : std::uint8_t { NotQualified, UnknownAnnotator, NotGoldClip, NotCurrentClip, InvalidLabel };
  ServiceError(Code c, const std::string& what) : std::runtime_error(what), code_(c) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

/// Clip assignment, judgment recording and the qualification gate.
/// Thread-safe; submissions serialize through the store.
class AnnotationService {
 public:
  /// Loads the corpus and gold manifests (audio URIs resolve relative to
  /// each manifest's directory) and replays the existing store. Gold clips
  /// take their label from a "gold_label" field on the clip record or from
  /// an annotation record in the gold manifest.
  AnnotationService(const std::filesystem::path& corpus_manifest, const std::filesystem::path& gold_manifest,
                    const std::filesystem::path& store_path, ServiceConfig cfg, std::function<Timestamp()> clock = {});

  struct Assignment {
    std::string clip_id;
    std::string audio_url;
  };

  /// Least-annotated clip this annotator has not labeled, ties broken by
  /// the service generator; empty when nothing is below target.
  std::optional<Assignment> next_clip(const std::string& annotator_id);

  SubmitStatus submit_annotation(const std::string& annotator_id, const std::string& clip_id,
                                 const std::string& label);

  QualificationPrompt next_qualification(const std::string& annotator_id);
  QualificationOutcome qualification_step(const std::string& annotator_id, const std::string& clip_id,
                                          const std::string& label);

  Progress progress() const;
  AnnotatorSession session(const std::string& annotator_id) const;
  bool is_qualified(const std::string& annotator_id) const;

  /// Filesystem path of a corpus or gold clip's audio, or empty.
  std::optional<std::filesystem::path> audio_path(const std::string& clip_id) const;

  const ServiceConfig& config() const noexcept { return cfg_; }

 private:
  struct QualState {
    std::vector<std::string> sample;
    int answered = 0;
    int correct = 0;
    int attempts = 0;
  };

  void start_attempt(const std::string& annotator_id, QualState& q);

  Manifest corpus_;
  Manifest gold_;
  std::map<std::string, LabelClass> gold_labels_;
  std::vector<std::string> gold_ids_;
  ServiceConfig cfg_;
  std::function<Timestamp()> clock_;
  std::filesystem::path corpus_dir_;
  std::filesystem::path gold_dir_;

  mutable std::shared_mutex mu_;
  std::mutex store_mu_;
  std::unique_ptr<AnnotationStore> store_;
  std::unordered_map<std::string, std::size_t> clip_index_;
  std::vector<int> clip_counts_;
  std::set<std::pair<std::string, std::string>> seen_pairs_;  // (annotator, clip)
  std::array<std::size_t, kNumClasses> per_class_{};
  std::size_t total_annotations_ = 0;
  std::map<std::string, AnnotatorSession> sessions_;
  std::map<std::string, QualState> qual_;
  Rng rng_;
};

/// HTTP front end for AnnotationService (cpp-httplib).
class AnnotationHttpServer {
 public:
  explicit AnnotationHttpServer(AnnotationService& service, std::optional<std::filesystem::path> static_dir = {});
  ~AnnotationHttpServer();

  /// Binds an ephemeral port on host and returns it.
  int bind_ephemeral(const std::string& host = "127.0.0.1");
  bool bind(const std::string& host, int port);
  /// Blocks until stop().
  void serve();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace voclab
