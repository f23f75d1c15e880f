#include "voclab/service.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "voclab/error.hpp"
#include "voclab/util.hpp"

namespace voclab {

using json = nlohmann::ordered_json;

AnnotationStore::AnnotationStore(std::filesystem::path path) : path_(std::move(path)) {
  if (std::filesystem::exists(path_)) {
    std::string contents = read_file(path_);
    // A crash mid-append can leave a partial final line; it was never acknowledged.
    if (!contents.empty() && contents.back() != '\n') {
      const auto keep = contents.rfind('\n');
      contents.resize(keep == std::string::npos ? 0 : keep + 1);
      std::filesystem::resize_file(path_, contents.size());
    }
    std::istringstream in(contents);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        const json j = json::parse(line);
        if (j.value("kind", "") != "annotation") throw ValidationError("not an annotation record");
        initial_.push_back(annotation_from_json(j));
      } catch (const std::exception& e) {
        throw ParseError(lineno, path_.string() + ": " + e.what());
      }
    }
  }
  fd_ = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error("cannot open annotation store " + path_.string() + ": " + std::strerror(errno));
}

AnnotationStore::~AnnotationStore() {
  if (fd_ >= 0) ::close(fd_);
}

void AnnotationStore::append(const Annotation& a) {
  const std::string line = to_json(a).dump() + "\n";
  std::size_t done = 0;
  while (done < line.size()) {
    const ssize_t n = ::write(fd_, line.data() + done, line.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(std::string("annotation store write failed: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) throw Error(std::string("annotation store fsync failed: ") + std::strerror(errno));
}

namespace {

std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Timestamp system_now() {
  return std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
}

std::string audio_url(const std::string& clip_id) { return "/api/audio/" + clip_id; }

}  // namespace

AnnotationService::AnnotationService(const std::filesystem::path& corpus_manifest,
                                     const std::filesystem::path& gold_manifest,
                                     const std::filesystem::path& store_path, ServiceConfig cfg,
                                     std::function<Timestamp()> clock)
    : corpus_(load_manifest(corpus_manifest)),
      gold_(load_manifest(gold_manifest)),
      cfg_(std::move(cfg)),
      clock_(clock ? std::move(clock) : system_now),
      corpus_dir_(corpus_manifest.parent_path()),
      gold_dir_(gold_manifest.parent_path()),
      rng_(cfg_.seed) {
  if (cfg_.target_per_clip < 1) throw ValidationError("target_per_clip must be >= 1");
  if (cfg_.qualification_n < 1) throw ValidationError("qualification_n must be >= 1");
  if (cfg_.qualification_threshold.den <= 0 || cfg_.qualification_threshold > Fraction{1, 1}) {
    throw ValidationError("qualification threshold must be within [0, 1]");
  }

  for (const auto& a : gold_.annotations) gold_labels_.emplace(a.clip_id, a.label);
  for (const auto& c : gold_.clips) {
    if (!gold_labels_.count(c.clip_id)) {
      auto it = c.source.find("gold_label");
      if (it == c.source.end() || !it->is_string()) {
        throw ValidationError("gold clip \"" + c.clip_id + "\" has no gold label");
      }
      gold_labels_.emplace(c.clip_id, label_from_string(it->get<std::string>()));
    }
    if (corpus_.find_clip(c.clip_id)) {
      throw ValidationError("gold clip \"" + c.clip_id + "\" also appears in the research corpus");
    }
    gold_ids_.push_back(c.clip_id);
  }
  if (gold_ids_.size() < static_cast<std::size_t>(cfg_.qualification_n)) {
    throw ValidationError("gold manifest has " + std::to_string(gold_ids_.size()) + " clips, need at least " +
                          std::to_string(cfg_.qualification_n));
  }

  clip_counts_.assign(corpus_.clips.size(), 0);
  for (std::size_t i = 0; i < corpus_.clips.size(); ++i) clip_index_.emplace(corpus_.clips[i].clip_id, i);

  store_ = std::make_unique<AnnotationStore>(store_path);
  for (const auto& a : store_->initial()) {
    auto it = clip_index_.find(a.clip_id);
    if (it == clip_index_.end()) throw ValidationError("store references unknown clip \"" + a.clip_id + "\"");
    if (!seen_pairs_.emplace(a.annotator_id, a.clip_id).second) {
      throw ValidationError("store holds a duplicate annotation by \"" + a.annotator_id + "\" on \"" + a.clip_id + "\"");
    }
    ++clip_counts_[it->second];
    ++per_class_[index_of(a.label)];
    ++total_annotations_;
    auto& s = sessions_[a.annotator_id];
    s.annotator_id = a.annotator_id;
    ++s.clips_annotated;
  }
}

bool AnnotationService::is_qualified(const std::string& annotator_id) const {
  std::shared_lock lock(mu_);
  auto it = sessions_.find(annotator_id);
  return it != sessions_.end() && it->second.qualified;
}

AnnotatorSession AnnotationService::session(const std::string& annotator_id) const {
  std::shared_lock lock(mu_);
  auto it = sessions_.find(annotator_id);
  if (it == sessions_.end()) return AnnotatorSession{annotator_id, false, {0, 1}, 0};
  return it->second;
}

std::optional<AnnotationService::Assignment> AnnotationService::next_clip(const std::string& annotator_id) {
  std::unique_lock lock(mu_);
  auto s = sessions_.find(annotator_id);
  if (s == sessions_.end() || !s->second.qualified) {
    throw ServiceError(ServiceError::Code::NotQualified,
                       "annotator \"" + annotator_id + "\" must pass qualification first");
  }
  int best = -1;
  std::vector<std::size_t> ties;
  for (std::size_t i = 0; i < corpus_.clips.size(); ++i) {
    const int count = clip_counts_[i];
    if (!cfg_.continue_past_target && count >= cfg_.target_per_clip) continue;
    if (seen_pairs_.count({annotator_id, corpus_.clips[i].clip_id})) continue;
    if (best < 0 || count < best) {
      best = count;
      ties.clear();
    }
    if (count == best) ties.push_back(i);
  }
  if (ties.empty()) return std::nullopt;
  const std::size_t pick = ties[static_cast<std::size_t>(rng_.uniform_below(ties.size()))];
  const std::string& id = corpus_.clips[pick].clip_id;
  return Assignment{id, audio_url(id)};
}

SubmitStatus AnnotationService::submit_annotation(const std::string& annotator_id, const std::string& clip_id,
                                                  const std::string& label) {
  const auto parsed = parse_label(label);
  if (!parsed) return SubmitStatus::InvalidLabel;
  std::size_t clip_pos = 0;
  {
    std::shared_lock lock(mu_);
    auto s = sessions_.find(annotator_id);
    if (s == sessions_.end() || !s->second.qualified) return SubmitStatus::NotQualified;
    auto it = clip_index_.find(clip_id);
    if (it == clip_index_.end()) return SubmitStatus::UnknownClip;
    clip_pos = it->second;
  }

  std::lock_guard writer(store_mu_);
  {
    std::shared_lock lock(mu_);
    if (seen_pairs_.count({annotator_id, clip_id})) return SubmitStatus::Duplicate;
  }
  Annotation a;
  a.clip_id = clip_id;
  a.annotator_id = annotator_id;
  a.label = *parsed;
  a.submitted_at = clock_();
  store_->append(a);

  std::unique_lock lock(mu_);
  seen_pairs_.emplace(annotator_id, clip_id);
  ++clip_counts_[clip_pos];
  ++per_class_[index_of(*parsed)];
  ++total_annotations_;
  ++sessions_[annotator_id].clips_annotated;
  return SubmitStatus::Created;
}

void AnnotationService::start_attempt(const std::string& annotator_id, QualState& q) {
  std::vector<std::string> pool = gold_ids_;
  Rng rng(derive_seed(cfg_.seed, fnv1a(annotator_id) + static_cast<std::uint64_t>(q.attempts)));
  const auto n = static_cast<std::size_t>(cfg_.qualification_n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(n);
  q.sample = std::move(pool);
  q.answered = 0;
  q.correct = 0;
  ++q.attempts;
}

QualificationPrompt AnnotationService::next_qualification(const std::string& annotator_id) {
  std::unique_lock lock(mu_);
  auto& session = sessions_[annotator_id];
  session.annotator_id = annotator_id;
  QualificationPrompt p;
  p.total = cfg_.qualification_n;
  if (session.qualified) {
    p.answered = p.total;
    return p;
  }
  QualState& q = qual_[annotator_id];
  if (q.sample.empty() || q.answered >= static_cast<int>(q.sample.size())) start_attempt(annotator_id, q);
  p.clip_id = q.sample[static_cast<std::size_t>(q.answered)];
  p.audio_url = audio_url(p.clip_id);
  p.answered = q.answered;
  return p;
}

QualificationOutcome AnnotationService::qualification_step(const std::string& annotator_id,
                                                           const std::string& clip_id, const std::string& label) {
  auto gold = gold_labels_.find(clip_id);
  if (gold == gold_labels_.end()) {
    throw ServiceError(ServiceError::Code::NotGoldClip, "\"" + clip_id + "\" is not a qualification clip");
  }
  const auto parsed = parse_label(label);
  if (!parsed) throw ServiceError(ServiceError::Code::InvalidLabel, "unknown label \"" + label + "\"");

  std::unique_lock lock(mu_);
  auto& session = sessions_[annotator_id];
  session.annotator_id = annotator_id;
  QualState& q = qual_[annotator_id];
  if (session.qualified || q.sample.empty() || q.answered >= static_cast<int>(q.sample.size()) ||
      q.sample[static_cast<std::size_t>(q.answered)] != clip_id) {
    throw ServiceError(ServiceError::Code::NotCurrentClip,
                       "\"" + clip_id + "\" is not the pending qualification clip for \"" + annotator_id + "\"");
  }
  QualificationOutcome out;
  out.correct = *parsed == gold->second;
  ++q.answered;
  q.correct += out.correct ? 1 : 0;
  out.answered = q.answered;
  out.correct_so_far = q.correct;
  out.total = static_cast<int>(q.sample.size());
  if (q.answered == out.total) {
    out.finished = true;
    session.qualification_score = Fraction{q.correct, out.total};
    out.qualified = session.qualification_score >= cfg_.qualification_threshold;
    session.qualified = out.qualified;
    out.retry = !out.qualified;
  }
  return out;
}

Progress AnnotationService::progress() const {
  std::shared_lock lock(mu_);
  Progress p;
  p.total_clips = corpus_.clips.size();
  for (int c : clip_counts_) p.fully_annotated += c >= cfg_.target_per_clip ? 1 : 0;
  p.annotations_total = total_annotations_;
  p.per_class = per_class_;
  return p;
}

std::optional<std::filesystem::path> AnnotationService::audio_path(const std::string& clip_id) const {
  auto resolve = [](const std::filesystem::path& dir, const std::string& uri) {
    const std::filesystem::path p(uri);
    return p.is_absolute() ? p : dir / p;
  };
  if (const ClipRecord* c = corpus_.find_clip(clip_id)) return resolve(corpus_dir_, c->audio_uri);
  if (const ClipRecord* c = gold_.find_clip(clip_id)) return resolve(gold_dir_, c->audio_uri);
  return std::nullopt;
}

struct AnnotationHttpServer::Impl {
  explicit Impl(AnnotationService& s) : service(s) {}
  AnnotationService& service;
  httplib::Server server;
};

namespace {

void reply_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
  reply_json(res, status, json{{"error", message}});
}

std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res) {
  try {
    json j = json::parse(req.body);
    if (!j.is_object()) throw std::runtime_error("body must be an object");
    for (const char* k : {"annotator_id", "clip_id", "label"}) {
      if (!j.contains(k) || !j[k].is_string()) throw std::runtime_error(std::string("missing string field ") + k);
    }
    return j;
  } catch (const std::exception& e) {
    reply_error(res, 400, std::string("invalid request body: ") + e.what());
    return std::nullopt;
  }
}

}  // namespace

AnnotationHttpServer::AnnotationHttpServer(AnnotationService& service, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  auto& svc = impl_->service;

  srv.set_pre_routing_handler([&svc](const httplib::Request& req, httplib::Response& res) {
    const auto& secret = svc.config().shared_secret;
    if (secret && req.path.rfind("/api/", 0) == 0 && req.get_header_value("X-Voclab-Secret") != *secret) {
      reply_error(res, 401, "missing or wrong X-Voclab-Secret header");
      return httplib::Server::HandlerResponse::Handled;
    }
    return httplib::Server::HandlerResponse::Unhandled;
  });

  srv.Get("/api/clips/next", [&svc](const httplib::Request& req, httplib::Response& res) {
    const std::string annotator = req.get_param_value("annotator");
    if (annotator.empty()) return reply_error(res, 400, "annotator parameter required");
    try {
      auto a = svc.next_clip(annotator);
      if (!a) {
        res.status = 204;
        return;
      }
      reply_json(res, 200, json{{"clip_id", a->clip_id}, {"audio_url", a->audio_url}});
    } catch (const ServiceError& e) {
      reply_json(res, 403,
                 json{{"error", e.what()}, {"qualification_url", "/api/qualification/next?annotator=" + annotator}});
    }
  });

  srv.Get(R"(/api/audio/(.+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    const auto path = svc.audio_path(req.matches[1]);
    if (!path || !std::filesystem::exists(*path)) return reply_error(res, 404, "no audio for clip");
    res.set_content(read_file(*path), "audio/wav");
  });

  srv.Post("/api/annotations", [&svc](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req, res);
    if (!body) return;
    switch (svc.submit_annotation((*body)["annotator_id"], (*body)["clip_id"], (*body)["label"])) {
      case SubmitStatus::Created: return reply_json(res, 201, json{{"status", "created"}});
      case SubmitStatus::Duplicate: return reply_error(res, 409, "annotation already recorded for this clip");
      case SubmitStatus::UnknownClip: return reply_error(res, 400, "unknown clip");
      case SubmitStatus::InvalidLabel: return reply_error(res, 400, "invalid label");
      case SubmitStatus::NotQualified: return reply_error(res, 403, "annotator must pass qualification first");
    }
  });

  srv.Get("/api/qualification/next", [&svc](const httplib::Request& req, httplib::Response& res) {
    const std::string annotator = req.get_param_value("annotator");
    if (annotator.empty()) return reply_error(res, 400, "annotator parameter required");
    const auto p = svc.next_qualification(annotator);
    if (p.clip_id.empty()) {
      res.status = 204;
      return;
    }
    reply_json(res, 200,
               json{{"clip_id", p.clip_id}, {"audio_url", p.audio_url}, {"answered", p.answered}, {"total", p.total}});
  });

  srv.Post("/api/qualification/answer", [&svc](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req, res);
    if (!body) return;
    try {
      const auto o = svc.qualification_step((*body)["annotator_id"], (*body)["clip_id"], (*body)["label"]);
      reply_json(res, 200,
                 json{{"correct", o.correct},
                      {"progress", json{{"answered", o.answered}, {"correct", o.correct_so_far}, {"total", o.total}}},
                      {"finished", o.finished},
                      {"qualified", o.qualified},
                      {"retry", o.retry}});
    } catch (const ServiceError& e) {
      reply_error(res, e.code() == ServiceError::Code::NotCurrentClip ? 409 : 400, e.what());
    }
  });

  srv.Get("/api/progress", [&svc](const httplib::Request&, httplib::Response& res) {
    const Progress p = svc.progress();
    json per_class;
    for (std::size_t c = 0; c < kNumClasses; ++c) per_class[std::string(to_string(class_at(c)))] = p.per_class[c];
    reply_json(res, 200,
               json{{"total_clips", p.total_clips},
                    {"fully_annotated", p.fully_annotated},
                    {"annotations_total", p.annotations_total},
                    {"per_class_counts", per_class}});
  });

  if (static_dir) srv.set_mount_point("/", static_dir->string());
}

AnnotationHttpServer::~AnnotationHttpServer() { stop(); }

int AnnotationHttpServer::bind_ephemeral(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool AnnotationHttpServer::bind(const std::string& host, int port) { return impl_->server.bind_to_port(host, port); }

void AnnotationHttpServer::serve() { impl_->server.listen_after_bind(); }

void AnnotationHttpServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

void AnnotationHttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace voclab
