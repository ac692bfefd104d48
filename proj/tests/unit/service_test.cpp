#include <atomic>
#include <map>
#include <thread>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "redkit/model.hpp"
#include "service/server.hpp"
#include "service/session.hpp"
#include "test_support.hpp"

// After Eigen: the resolver header defines a `_res` macro.
#include <httplib.h>

namespace redkit::service {
namespace {

using nlohmann::json;
using redkit::testing::load_fixture;

class Harness {
 public:
  explicit Harness(StructuralModel model, ServerOptions options = {})
      : session_(std::make_shared<Session>(std::move(model))),
        server_(session_, options) {
    port_ = server_.bind("127.0.0.1", 0);
    if (port_ > 0) {
      thread_ = std::thread([this] { server_.listen(); });
      server_.wait_until_ready();
    }
  }
  ~Harness() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(60, 0);
    return c;
  }
  Session& session() { return *session_; }

 private:
  std::shared_ptr<Session> session_;
  Server server_;
  int port_ = -1;
  std::thread thread_;
};

json body_of(const httplib::Result& r) {
  EXPECT_TRUE(r) << "no response";
  return r ? json::parse(r->body) : json();
}

TEST(Session, RevisionCheckAndRetry) {
  Session s(load_fixture("tri_anchor.json"));
  EXPECT_EQ(s.snapshot().revision, 0);
  auto nudge = [](const StructuralModel& m) {
    StructuralModel next = m;
    next.nodes[0].coords.x() += 0.1;
    return next;
  };
  const Reply first = s.mutate(0, "nudge", nudge);
  EXPECT_EQ(first.status, 200);
  EXPECT_EQ(first.body["revision"], 1);

  const Reply retry = s.mutate(0, "nudge", nudge);
  EXPECT_EQ(retry.status, 200);
  EXPECT_EQ(retry.body, first.body);
  EXPECT_EQ(s.snapshot().revision, 1);

  const Reply stale = s.mutate(0, "other", nudge);
  EXPECT_EQ(stale.status, 409);
  EXPECT_EQ(stale.body["revision"], 1);

  const Reply unconditional = s.mutate(std::nullopt, "other", nudge);
  EXPECT_EQ(unconditional.body["revision"], 2);
  EXPECT_NEAR(s.snapshot().model->nodes[0].coords.x(), 0.2, 1e-15);
}

TEST(Session, InvalidEditKeepsRevision) {
  Session s(load_fixture("tri_anchor.json"));
  const Reply r = s.mutate(0, "bad", [](const StructuralModel& m) {
    StructuralModel next = m;
    next.elements[0].alpha = 2.0;
    return next;
  });
  EXPECT_EQ(r.status, 422);
  EXPECT_EQ(r.body["findings"].size(), 1u);
  EXPECT_EQ(s.snapshot().revision, 0);
}

TEST(Session, DerivedCacheFollowsHash) {
  Session s(load_fixture("tri_anchor.json"));
  const auto a = s.derived(s.snapshot());
  EXPECT_EQ(a, s.derived(s.snapshot()));
  s.mutate(std::nullopt, "move", [](const StructuralModel& m) {
    StructuralModel next = m;
    next.nodes[0].coords.y() -= 0.2;
    return next;
  });
  const auto b = s.derived(s.snapshot());
  EXPECT_NE(a, b);
  EXPECT_NE(a->redundancy.diagonal[1], b->redundancy.diagonal[1]);
}

TEST(Http, ModelAndRedundancy) {
  Harness h(load_fixture("tri_anchor.json"));
  ASSERT_GT(h.port(), 0);
  auto c = h.client();
  const auto model = c.Get("/model");
  ASSERT_TRUE(model);
  EXPECT_EQ(model->status, 200);
  EXPECT_EQ(model->get_header_value("Content-Type"), "application/json");
  const json m = json::parse(model->body);
  EXPECT_EQ(m["revision"], 0);
  EXPECT_EQ(m["result"]["model"]["elements"].size(), 3u);

  const json r = body_of(c.Get("/redundancy?matrix=1"));
  EXPECT_EQ(r["result"]["n_s"], 1);
  EXPECT_EQ(r["result"]["matrix"].size(), 3u);
  EXPECT_FALSE(body_of(c.Get("/redundancy"))["result"].contains("matrix"));
}

TEST(Http, DragNodeKeepsTraceIdentity) {
  Harness h(load_fixture("ridge_truss_3d.json"));
  auto c = h.client();
  const json before = body_of(c.Get("/redundancy"));
  const auto patch =
      c.Patch("/model/node/9", R"({"revision": 0, "delta": [0.3, -0.2, 0.5]})", "application/json");
  ASSERT_TRUE(patch);
  EXPECT_EQ(patch->status, 200);
  const json after = body_of(c.Get("/redundancy"));
  EXPECT_EQ(after["revision"], 1);
  EXPECT_NEAR(after["result"]["trace"].get<double>(), 5.0, 1e-9);
  EXPECT_NE(after["result"]["elements"][12]["redundancy"],
            before["result"]["elements"][12]["redundancy"]);

  const auto conflict =
      c.Patch("/model/node/9", R"({"revision": 0, "delta": [0.1, 0, 0]})", "application/json");
  EXPECT_EQ(conflict->status, 409);
  EXPECT_EQ(json::parse(conflict->body)["revision"], 1);

  httplib::Headers if_match{{"If-Match", "\"1\""}};
  const auto absolute =
      c.Patch("/model/node/9", if_match, R"({"coords": [0, 0, 4]})", "application/json");
  EXPECT_EQ(absolute->status, 200);
  EXPECT_EQ(body_of(c.Get("/model"))["result"]["model"]["nodes"][8]["coords"][2], 4.0);

  EXPECT_EQ(c.Patch("/model/node/99", R"({"delta": [0, 0, 0]})", "application/json")->status, 400);
  EXPECT_EQ(c.Patch("/model/node/9", R"({"delta": [0, 0]})", "application/json")->status, 400);
}

TEST(Http, PutModelValidates) {
  Harness h(load_fixture("tri_anchor.json"));
  auto c = h.client();
  json doc = model_to_json(load_fixture("determinate_triangle.json"));
  const auto ok = c.Put("/model", json({{"revision", 0}, {"model", doc}}).dump(), "application/json");
  EXPECT_EQ(ok->status, 200);
  EXPECT_EQ(body_of(c.Get("/redundancy"))["result"]["n_s"], 0);

  doc["elements"][0]["alpha"] = 3.0;
  const auto bad = c.Put("/model", json({{"model", doc}}).dump(), "application/json");
  EXPECT_EQ(bad->status, 422);
  EXPECT_EQ(json::parse(bad->body)["findings"][0]["kind"], "imperfection-range");

  EXPECT_EQ(c.Put("/model", "{\"model\": 5}", "application/json")->status, 400);
  EXPECT_EQ(c.Put("/model", "not json", "application/json")->status, 400);
}

TEST(Http, WhatIfRemove) {
  Harness h(load_fixture("tri_anchor.json"));
  auto c = h.client();
  const json one = body_of(c.Post("/whatif/remove", R"({"element": 2})", "application/json"));
  EXPECT_NEAR(one["result"]["delta_e"].get<double>(), 0.0828427124746, 1e-12);
  EXPECT_EQ(one["result"]["n_s_after"], 0);

  const json load = body_of(c.Post(
      "/whatif/remove", R"({"element": 2, "load": [{"node": 0, "vector": [0, -200]}]})",
      "application/json"));
  EXPECT_NEAR(load["result"]["delta_e"].get<double>(), 2 * 0.0828427124746, 1e-12);

  const auto critical = c.Post("/whatif/remove", R"({"elements": [2, 1]})", "application/json");
  EXPECT_EQ(critical->status, 422);
  EXPECT_NE(critical->body.find("statically determinate member"), std::string::npos);
  EXPECT_EQ(c.Post("/whatif/remove", R"({"element": 42})", "application/json")->status, 400);
  EXPECT_EQ(c.Post("/whatif/remove", R"({"element": "x"})", "application/json")->status, 400);
}

TEST(Http, DeterminateMemberIsUnprocessable) {
  Harness h(load_fixture("determinate_triangle.json"));
  auto c = h.client();
  const auto r = c.Post("/whatif/remove", R"({"element": 1})", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 422);
  const json body = json::parse(r->body);
  EXPECT_EQ(body["error"]["code"], "mechanism");
  EXPECT_NE(body["error"]["message"].get<std::string>().find("statically determinate member"),
            std::string::npos);
}

TEST(Http, RobustnessAndImperfection) {
  Harness h(load_fixture("assembly_truss_2d.json"));
  auto c = h.client();
  const json rob = body_of(c.Post("/robustness/table",
                                  R"({"load": [{"node": 5, "vector": [0, -10]}]})",
                                  "application/json"));
  EXPECT_EQ(rob["result"]["scenarios"].size(), 12u);
  const json imp = body_of(c.Post("/imperfection", R"({"alpha": {"9": 0.2}})", "application/json"));
  ASSERT_TRUE(imp["result"].is_object());
  EXPECT_EQ(c.Post("/imperfection", R"({"alpha": {"x": 0.2}})", "application/json")->status, 400);
  EXPECT_EQ(c.Post("/imperfection", R"({"alpha": {"77": 0.2}})", "application/json")->status, 400);
}

TEST(Http, SequenceEndpoints) {
  Harness h(load_fixture("assembly_truss_2d.json"));
  auto c = h.client();
  const json ev = body_of(c.Post("/sequence/evaluate", "{}", "application/json"));
  const json& steps = ev["result"]["steps"];
  ASSERT_EQ(steps.size(), 5u);
  EXPECT_GT(steps[3]["max_abs_strain"].get<double>(), ev["result"]["final_max"].get<double>());

  const json good = body_of(c.Post("/sequence/evaluate", R"({"order": [9, 10, 11, 12]})",
                                   "application/json"));
  EXPECT_EQ(good["result"]["exceeds_final"], false);

  const json search = body_of(c.Post("/sequence/search", R"({"max_plans": 3})", "application/json"));
  EXPECT_EQ(search["result"]["plans"].size(), 3u);
  const json tracked = body_of(c.Post(
      "/sequence/search", R"({"criterion": "element", "element": 12})", "application/json"));
  EXPECT_FALSE(tracked["result"]["plans"].empty());
  EXPECT_EQ(c.Post("/sequence/search", R"({"criterion": "fast"})", "application/json")->status,
            400);
  EXPECT_EQ(c.Post("/sequence/evaluate", R"({"order": [9, 10]})", "application/json")->status,
            400);
}

TEST(Http, ConcurrentReadsSeeWholeRevisions) {
  Harness h(load_fixture("ridge_truss_3d.json"));
  std::atomic<bool> writing{true};
  std::map<long long, std::string> hashes;
  hashes[0] = content_hash(*h.session().snapshot().model);
  std::mutex hashes_mutex;

  std::thread writer([&] {
    auto c = h.client();
    for (int i = 0; i < 20; ++i) {
      const json r = body_of(c.Patch("/model/node/10",
                                     R"({"delta": [0.0, 0.0, 0.01]})", "application/json"));
      std::lock_guard lock(hashes_mutex);
      hashes[r["revision"].get<long long>()] = r["result"]["hash"];
    }
    writing = false;
  });

  std::vector<std::thread> readers;
  std::atomic<int> failures{0};
  std::atomic<int> reads{0};
  std::vector<std::pair<long long, std::string>> seen;
  std::mutex seen_mutex;
  for (int t = 0; t < 50; ++t) {
    readers.emplace_back([&, t] {
      auto c = h.client();
      const bool model_reader = t % 2 == 0;
      for (int i = 0; i < 4; ++i) {
        const auto res = model_reader ? c.Get("/model") : c.Get("/redundancy");
        if (!res || res->status != 200) {
          ++failures;
          continue;
        }
        ++reads;
        const json body = json::parse(res->body);
        if (model_reader) {
          const std::string h = content_hash(model_from_json(body["result"]["model"]));
          if (h != body["result"]["hash"]) ++failures;
          std::lock_guard lock(seen_mutex);
          seen.emplace_back(body["revision"].get<long long>(), h);
        } else if (std::abs(body["result"]["trace"].get<double>() - 5.0) > 1e-9) {
          ++failures;
        }
      }
    });
  }
  for (auto& r : readers) r.join();
  writer.join();
  EXPECT_EQ(failures, 0);
  EXPECT_EQ(reads, 200);
  for (const auto& [rev, hash] : seen) {
    ASSERT_TRUE(hashes.count(rev)) << rev;
    EXPECT_EQ(hashes[rev], hash) << "revision " << rev;
  }
}

TEST(Http, OptimizationJobLifecycle) {
  Harness h(load_fixture("ridge_truss_3d.json"));
  auto c = h.client();
  const auto start = c.Post("/optimize/robust", "{}", "application/json");
  ASSERT_TRUE(start);
  EXPECT_EQ(start->status, 202);
  const std::string id = json::parse(start->body)["result"]["job"];

  json status;
  for (int i = 0; i < 600; ++i) {
    status = body_of(c.Get("/jobs/" + id));
    if (status["result"]["state"] != "running") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  ASSERT_EQ(status["result"]["state"], "done") << status.dump();
  EXPECT_LE(status["result"]["result"]["final_spread"].get<double>(), 1e-3);
  EXPECT_GT(status["result"]["iteration"].get<int>(), 0);
  EXPECT_EQ(status["result"]["incumbent"].size(), 7u);
  // Optimization never edits the session document.
  EXPECT_EQ(body_of(c.Get("/model"))["revision"], 0);

  EXPECT_EQ(c.Get("/jobs/job-999")->status, 404);
  EXPECT_EQ(c.Delete("/jobs/job-999")->status, 404);
}

TEST(Http, OptimizationJobCancel) {
  Harness h(load_fixture("ridge_truss_3d.json"));
  auto c = h.client();
  const auto start = c.Post("/optimize/robust", R"({"tolerance": 0, "max_iterations": 100000})",
                            "application/json");
  const std::string id = json::parse(start->body)["result"]["job"];
  EXPECT_EQ(c.Delete("/jobs/" + id)->status, 200);
  json status;
  for (int i = 0; i < 600; ++i) {
    status = body_of(c.Get("/jobs/" + id));
    if (status["result"]["state"] != "running") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  EXPECT_EQ(status["result"]["state"], "cancelled");
}

TEST(Http, OptimizationNeedsDesign) {
  Harness h(load_fixture("tri_anchor.json"));
  EXPECT_EQ(h.client().Post("/optimize/robust", "{}", "application/json")->status, 400);
}

TEST(Http, GuardTurnsSlowRequestsInto503) {
  ServerOptions opts;
  opts.guard = std::chrono::milliseconds(1);
  Harness h(redkit::testing::random_truss_with_members(1, 1200), opts);
  const auto r = h.client().Get("/redundancy");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 503);
  EXPECT_EQ(json::parse(r->body)["error"]["code"], "timeout");
}

TEST(Http, MechanismModelIsUnprocessable) {
  StructuralModel m = load_fixture("determinate_triangle.json");
  m.elements.pop_back();
  Harness h(m);
  const auto r = h.client().Get("/redundancy");
  EXPECT_EQ(r->status, 422);
  EXPECT_EQ(json::parse(r->body)["error"]["mechanisms"], 1);
}

}  // namespace
}  // namespace redkit::service
