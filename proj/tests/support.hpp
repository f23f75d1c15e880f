#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "voclab/corpus.hpp"
#include "voclab/labels.hpp"

namespace testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("voclab_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  f << s;
}

inline voclab::ClipRecord clip(const std::string& id, const std::string& child = "k1", const std::string& lang = "en",
                               voclab::Environment env = voclab::Environment::Urban, std::int64_t age = 12) {
  voclab::ClipRecord c;
  c.clip_id = id;
  c.child_id = child;
  c.corpus_id = "c0";
  c.language = lang;
  c.environment = env;
  c.age_months = age;
  c.audio_uri = id + ".wav";
  c.duration_ms = 500;
  return c;
}

inline voclab::Annotation ann(const std::string& clip_id, const std::string& annotator, voclab::LabelClass label) {
  voclab::Annotation a;
  a.clip_id = clip_id;
  a.annotator_id = annotator;
  a.label = label;
  a.submitted_at = voclab::Timestamp{std::chrono::seconds{1'600'000'000}};
  return a;
}

inline std::string clip_line(const std::string& id, const std::string& child = "k1", int age = 12) {
  return R"({"kind":"clip","clip_id":")" + id + R"(","child_id":")" + child +
         R"(","corpus_id":"c0","language":"en","environment":"urban","age_months":)" + std::to_string(age) +
         R"(,"audio_uri":")" + id + R"(.wav","duration_ms":500})";
}

inline std::string ann_line(const std::string& clip_id, const std::string& annotator, const std::string& label) {
  return R"({"kind":"annotation","clip_id":")" + clip_id + R"(","annotator_id":")" + annotator + R"(","label":")" +
         label + R"(","submitted_at":"2024-01-02T03:04:05Z"})";
}

}  // namespace testing
