#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "support.hpp"
#include "voclab/audio.hpp"
#include "voclab/error.hpp"
#include "voclab/service.hpp"

using namespace voclab;
using json = nlohmann::json;

namespace {

// Corpus of n clips plus a gold manifest of g labeled clips (label i % 5).
struct World {
  testing::TempDir dir{"svc"};
  std::map<std::string, std::string> gold;
  std::vector<std::string> clips;

  World(int n, int g) {
    std::string corpus;
    for (int i = 0; i < n; ++i) {
      clips.push_back("c" + std::to_string(i));
      corpus += testing::clip_line(clips.back(), "k" + std::to_string(i % 4)) + "\n";
    }
    testing::write_text(dir / "corpus.jsonl", corpus);
    std::string gm;
    for (int i = 0; i < g; ++i) {
      const std::string id = "g" + std::to_string(i);
      gold[id] = std::string(to_string(class_at(static_cast<std::size_t>(i % 5))));
      json line = json::parse(testing::clip_line(id, "gk"));
      line["gold_label"] = gold[id];
      gm += line.dump() + "\n";
    }
    testing::write_text(dir / "gold.jsonl", gm);
  }

  std::unique_ptr<AnnotationService> open(ServiceConfig cfg = {}) const {
    return std::make_unique<AnnotationService>(dir / "corpus.jsonl", dir / "gold.jsonl", dir / "store.jsonl", cfg);
  }

  std::string wrong(const std::string& id) const {
    const auto l = *parse_label(gold.at(id));
    return std::string(to_string(class_at((index_of(l) + 1) % 5)));
  }

  // Answers one full attempt with `right` correct answers first.
  QualificationOutcome attempt(AnnotationService& s, const std::string& who, int right) const {
    QualificationOutcome last;
    for (int i = 0; i < s.config().qualification_n; ++i) {
      const auto p = s.next_qualification(who);
      REQUIRE_FALSE(p.clip_id.empty());
      CHECK(p.answered == i);
      last = s.qualification_step(who, p.clip_id, i < right ? gold.at(p.clip_id) : wrong(p.clip_id));
      CHECK(last.finished == (i + 1 == s.config().qualification_n));
    }
    return last;
  }

  std::vector<json> store_lines() const {
    std::vector<json> out;
    std::ifstream in(dir / "store.jsonl");
    std::string line;
    while (std::getline(in, line)) out.push_back(json::parse(line));
    return out;
  }
};

}  // namespace

TEST_CASE("qualification gate") {
  World w(5, 30);
  auto s = w.open();

  SUBCASE("ten of ten qualifies") {
    const auto o = w.attempt(*s, "ann", 10);
    CHECK(o.qualified);
    CHECK_FALSE(o.retry);
    CHECK(o.correct_so_far == 10);
    CHECK(s->is_qualified("ann"));
    CHECK(s->session("ann").qualification_score == Fraction{10, 10});
    CHECK(s->next_qualification("ann").clip_id.empty());
  }
  SUBCASE("eight of ten is on the boundary") {
    CHECK(w.attempt(*s, "ann", 8).qualified);
  }
  SUBCASE("seven of ten fails and offers a fresh sample") {
    const auto o = w.attempt(*s, "ann", 7);
    CHECK_FALSE(o.qualified);
    CHECK(o.retry);
    CHECK_FALSE(s->is_qualified("ann"));
    CHECK_THROWS_AS(s->next_clip("ann"), ServiceError);
    CHECK(w.attempt(*s, "ann", 9).qualified);
  }
  SUBCASE("wrong clips are rejected") {
    const auto p = s->next_qualification("ann");
    try {
      s->qualification_step("ann", "c0", "junk");
      FAIL("expected an error");
    } catch (const ServiceError& e) {
      CHECK(e.code() == ServiceError::Code::NotGoldClip);
    }
    const std::string other = p.clip_id == "g0" ? "g1" : "g0";
    try {
      s->qualification_step("ann", other, "junk");
      FAIL("expected an error");
    } catch (const ServiceError& e) {
      CHECK(e.code() == ServiceError::Code::NotCurrentClip);
    }
    CHECK_THROWS_AS(s->qualification_step("ann", p.clip_id, "shouting"), ServiceError);
  }
}

TEST_CASE("samples draw distinct gold clips") {
  World w(3, 12);
  auto s = w.open();
  std::set<std::string> seen;
  for (int i = 0; i < 10; ++i) {
    const auto p = s->next_qualification("x");
    CHECK(seen.insert(p.clip_id).second);
    s->qualification_step("x", p.clip_id, w.gold.at(p.clip_id));
  }
}

TEST_CASE("assignment and submission") {
  World w(4, 10);
  auto s = w.open();
  CHECK_THROWS_AS(s->next_clip("a"), ServiceError);
  CHECK(s->submit_annotation("a", "c0", "junk") == SubmitStatus::NotQualified);
  for (const char* who : {"a", "b", "c", "d"}) REQUIRE(w.attempt(*s, who, 10).qualified);

  CHECK(s->progress().annotations_total == 0);
  CHECK(s->progress().fully_annotated == 0);

  const auto first = s->next_clip("a");
  REQUIRE(first.has_value());
  CHECK(first->audio_url == "/api/audio/" + first->clip_id);

  CHECK(s->submit_annotation("a", "c0", "crying") == SubmitStatus::Created);
  CHECK(w.store_lines().size() == 1);
  CHECK(s->submit_annotation("a", "c0", "junk") == SubmitStatus::Duplicate);
  CHECK(w.store_lines().size() == 1);
  CHECK(s->submit_annotation("a", "nope", "junk") == SubmitStatus::UnknownClip);
  CHECK(s->submit_annotation("a", "c1", "loud") == SubmitStatus::InvalidLabel);
  CHECK(w.store_lines().size() == 1);

  // c0 now has one annotation, others none; "b" must get a zero-count clip
  CHECK(s->submit_annotation("b", "c1", "laughing") == SubmitStatus::Created);
  CHECK(s->submit_annotation("c", "c1", "laughing") == SubmitStatus::Created);
  CHECK(s->submit_annotation("b", "c2", "junk") == SubmitStatus::Created);
  const auto next = s->next_clip("d");
  REQUIRE(next.has_value());
  CHECK(next->clip_id == "c3");

  CHECK(s->submit_annotation("d", "c1", "canonical") == SubmitStatus::Created);
  const auto p = s->progress();
  CHECK(p.total_clips == 4);
  CHECK(p.fully_annotated == 1);
  CHECK(p.annotations_total == 5);
  CHECK(p.per_class[index_of(LabelClass::Laughing)] == 2);
  CHECK(s->session("b").clips_annotated == 2);
}

TEST_CASE("no-content once an annotator has seen everything") {
  World w(3, 10);
  ServiceConfig cfg;
  cfg.continue_past_target = true;
  auto s = w.open(cfg);
  REQUIRE(w.attempt(*s, "a", 10).qualified);
  for (int i = 0; i < 3; ++i) {
    const auto c = s->next_clip("a");
    REQUIRE(c.has_value());
    CHECK(s->submit_annotation("a", c->clip_id, "junk") == SubmitStatus::Created);
  }
  CHECK_FALSE(s->next_clip("a").has_value());
}

TEST_CASE("clips at target are no longer offered") {
  World w(2, 10);
  ServiceConfig cfg;
  cfg.target_per_clip = 1;
  auto s = w.open(cfg);
  for (const char* who : {"a", "b"}) REQUIRE(w.attempt(*s, who, 10).qualified);
  CHECK(s->submit_annotation("a", "c0", "junk") == SubmitStatus::Created);
  CHECK(s->submit_annotation("a", "c1", "junk") == SubmitStatus::Created);
  CHECK_FALSE(s->next_clip("b").has_value());
}

TEST_CASE("least-annotated-first keeps counts level") {
  World w(10, 10);
  auto s = w.open();
  std::vector<std::string> team;
  for (int i = 0; i < 6; ++i) {
    team.push_back("t" + std::to_string(i));
    REQUIRE(w.attempt(*s, team.back(), 10).qualified);
  }
  std::map<std::string, int> counts;
  for (const auto& c : w.clips) counts[c] = 0;
  for (int round = 0; round < 100; ++round) {
    const auto c = s->next_clip(team[static_cast<std::size_t>(round) % team.size()]);
    if (!c) break;
    REQUIRE(s->submit_annotation(team[static_cast<std::size_t>(round) % team.size()], c->clip_id, "junk") ==
            SubmitStatus::Created);
    ++counts[c->clip_id];
    int lo = 1 << 30, hi = 0;
    for (const auto& [id, n] : counts) {
      lo = std::min(lo, n);
      hi = std::max(hi, n);
    }
    CHECK(hi <= 3);
    CHECK(hi - lo <= 1);
  }
  CHECK(s->progress().fully_annotated == 10);
  CHECK(s->progress().annotations_total == 30);
}

TEST_CASE("concurrent submissions") {
  World w(20, 10);
  auto s = w.open();
  std::vector<std::string> people;
  for (int i = 0; i < 20; ++i) {
    people.push_back("p" + std::to_string(i));
    REQUIRE(w.attempt(*s, people.back(), 10).qualified);
  }

  SUBCASE("distinct pairs all land") {
    std::vector<std::thread> threads;
    std::vector<SubmitStatus> results(20);
    for (std::size_t i = 0; i < 20; ++i) {
      threads.emplace_back([&, i] { results[i] = s->submit_annotation(people[i], w.clips[i], "canonical"); });
    }
    for (auto& t : threads) t.join();
    for (auto r : results) CHECK(r == SubmitStatus::Created);
    const auto lines = w.store_lines();
    CHECK(lines.size() == 20);
    std::set<std::string> ids;
    for (const auto& l : lines) ids.insert(l.at("clip_id").get<std::string>());
    CHECK(ids.size() == 20);
  }
  SUBCASE("one pair is recorded at most once") {
    std::vector<std::thread> threads;
    std::atomic<int> created{0}, duplicate{0};
    for (int i = 0; i < 20; ++i) {
      threads.emplace_back([&] {
        const auto r = s->submit_annotation("p0", "c5", "junk");
        if (r == SubmitStatus::Created) ++created;
        if (r == SubmitStatus::Duplicate) ++duplicate;
      });
    }
    for (auto& t : threads) t.join();
    CHECK(created == 1);
    CHECK(duplicate == 19);
    CHECK(w.store_lines().size() == 1);
  }
}

TEST_CASE("store survives a restart and matches an offline recount") {
  World w(6, 10);
  {
    auto s = w.open();
    for (const char* who : {"a", "b", "c"}) REQUIRE(w.attempt(*s, who, 10).qualified);
    const char* labels[] = {"crying", "laughing", "canonical", "non_canonical", "junk", "junk"};
    for (int i = 0; i < 6; ++i) {
      REQUIRE(s->submit_annotation("a", w.clips[static_cast<std::size_t>(i)], labels[i]) == SubmitStatus::Created);
      REQUIRE(s->submit_annotation("b", w.clips[static_cast<std::size_t>(i)], labels[(i + 1) % 6]) ==
              SubmitStatus::Created);
    }
    REQUIRE(s->submit_annotation("c", "c0", "junk") == SubmitStatus::Created);
  }
  auto s = w.open();
  const auto p = s->progress();
  std::array<std::size_t, 5> offline{};
  std::map<std::string, int> per_clip;
  const auto lines = w.store_lines();
  for (const auto& l : lines) {
    CHECK(l.at("kind") == "annotation");
    ++offline[index_of(*parse_label(l.at("label").get<std::string>()))];
    ++per_clip[l.at("clip_id").get<std::string>()];
  }
  CHECK(p.annotations_total == lines.size());
  CHECK(p.annotations_total == 13);
  CHECK(p.per_class == offline);
  CHECK(p.fully_annotated == static_cast<std::size_t>(std::count_if(
                                 per_clip.begin(), per_clip.end(), [](const auto& kv) { return kv.second >= 3; })));
  CHECK(p.fully_annotated == 1);

  // restarted sessions must requalify, but pairs stay unique
  REQUIRE(w.attempt(*s, "a", 10).qualified);
  CHECK(s->submit_annotation("a", "c0", "junk") == SubmitStatus::Duplicate);

  // the store reads back as a manifest annotation log
  std::string manifest;
  for (const auto& c : w.clips) manifest += testing::clip_line(c) + "\n";
  std::ifstream in(w.dir / "store.jsonl");
  manifest += std::string(std::istreambuf_iterator<char>(in), {});
  testing::write_text(w.dir / "merged.jsonl", manifest);
  CHECK(load_manifest(w.dir / "merged.jsonl").annotations.size() == 13);
}

TEST_CASE("a torn trailing line is discarded on open") {
  World w(3, 10);
  testing::write_text(w.dir / "store.jsonl", testing::ann_line("c0", "a", "junk") + "\n" + R"({"kind":"annot)");
  auto s = w.open();
  CHECK(s->progress().annotations_total == 1);
  REQUIRE(w.attempt(*s, "b", 10).qualified);
  CHECK(s->submit_annotation("b", "c1", "crying") == SubmitStatus::Created);
  CHECK(w.store_lines().size() == 2);
}

TEST_CASE("bad stores and manifests are rejected") {
  World w(3, 10);
  SUBCASE("store line for an unknown clip") {
    testing::write_text(w.dir / "store.jsonl", testing::ann_line("zz", "a", "junk") + "\n");
    CHECK_THROWS_AS(w.open(), Error);
  }
  SUBCASE("corrupt complete line") {
    testing::write_text(w.dir / "store.jsonl", "{not json}\n");
    CHECK_THROWS_AS(w.open(), ParseError);
  }
  SUBCASE("too few gold clips") {
    ServiceConfig cfg;
    cfg.qualification_n = 11;
    CHECK_THROWS_AS(w.open(cfg), Error);
  }
}

TEST_CASE("http api") {
  World w(3, 10);
  write_wav(w.dir / "c0.wav", RawAudio{{std::vector<float>(160, 0.25f)}, 16000});
  auto svc = w.open();
  AnnotationHttpServer http(*svc);
  const int port = http.bind_ephemeral();
  REQUIRE(port > 0);
  std::thread runner([&] { http.serve(); });
  http.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);

  auto post = [&](const std::string& path, const json& body) {
    return cli.Post(path.c_str(), body.dump(), "application/json");
  };

  auto r = cli.Get("/api/clips/next?annotator=web");
  REQUIRE(r);
  CHECK(r->status == 403);
  CHECK(json::parse(r->body).contains("qualification_url"));
  CHECK(cli.Get("/api/clips/next")->status == 400);

  for (int i = 0; i < 10; ++i) {
    auto q = cli.Get("/api/qualification/next?annotator=web");
    REQUIRE(q);
    REQUIRE(q->status == 200);
    const auto body = json::parse(q->body);
    CHECK(body.at("answered") == i);
    CHECK(body.at("total") == 10);
    const auto id = body.at("clip_id").get<std::string>();
    auto a = post("/api/qualification/answer", {{"annotator_id", "web"}, {"clip_id", id}, {"label", w.gold.at(id)}});
    REQUIRE(a);
    CHECK(a->status == 200);
    const auto out = json::parse(a->body);
    CHECK(out.at("correct") == true);
    CHECK(out.at("progress").at("answered") == i + 1);
    CHECK(out.at("finished") == (i == 9));
  }
  CHECK(cli.Get("/api/qualification/next?annotator=web")->status == 204);
  CHECK(post("/api/qualification/answer", {{"annotator_id", "web"}, {"clip_id", "c0"}, {"label", "junk"}})->status ==
        400);

  r = cli.Get("/api/clips/next?annotator=web");
  REQUIRE(r);
  CHECK(r->status == 200);
  const auto assigned = json::parse(r->body);
  CHECK(assigned.at("audio_url") == "/api/audio/" + assigned.at("clip_id").get<std::string>());

  auto audio = cli.Get("/api/audio/c0");
  REQUIRE(audio);
  CHECK(audio->status == 200);
  CHECK(audio->get_header_value("Content-Type") == "audio/wav");
  CHECK(audio->body.substr(0, 4) == "RIFF");
  CHECK(cli.Get("/api/audio/c1")->status == 404);
  CHECK(cli.Get("/api/audio/nothing")->status == 404);

  CHECK(post("/api/annotations", {{"annotator_id", "web"}, {"clip_id", "c0"}, {"label", "canonical"}})->status == 201);
  CHECK(post("/api/annotations", {{"annotator_id", "web"}, {"clip_id", "c0"}, {"label", "junk"}})->status == 409);
  CHECK(post("/api/annotations", {{"annotator_id", "web"}, {"clip_id", "c9"}, {"label", "junk"}})->status == 400);
  CHECK(post("/api/annotations", {{"annotator_id", "web"}, {"clip_id", "c1"}, {"label", "yell"}})->status == 400);
  CHECK(post("/api/annotations", {{"annotator_id", "other"}, {"clip_id", "c1"}, {"label", "junk"}})->status == 403);
  CHECK(cli.Post("/api/annotations", "not json", "application/json")->status == 400);
  CHECK(post("/api/annotations", {{"annotator_id", "web"}})->status == 400);

  auto prog = cli.Get("/api/progress");
  REQUIRE(prog);
  const auto pj = json::parse(prog->body);
  CHECK(pj.at("total_clips") == 3);
  CHECK(pj.at("annotations_total") == 1);
  CHECK(pj.at("fully_annotated") == 0);
  CHECK(pj.at("per_class_counts").at("canonical") == 1);
  CHECK(pj.at("per_class_counts").at("junk") == 0);

  http.stop();
  runner.join();
}

TEST_CASE("http shared secret") {
  World w(2, 10);
  ServiceConfig cfg;
  cfg.shared_secret = "s3cret";
  auto svc = w.open(cfg);
  AnnotationHttpServer http(*svc);
  const int port = http.bind_ephemeral();
  std::thread runner([&] { http.serve(); });
  http.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);
  CHECK(cli.Get("/api/progress")->status == 401);
  CHECK(cli.Get("/api/progress", {{"X-Voclab-Secret", "wrong"}})->status == 401);
  CHECK(cli.Get("/api/progress", {{"X-Voclab-Secret", "s3cret"}})->status == 200);
  http.stop();
  runner.join();
}
