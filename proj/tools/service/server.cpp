#include "server.hpp"

#include <future>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "redkit/errors.hpp"
#include "redkit/report.hpp"

namespace redkit::service {

using nlohmann::json;

namespace {

constexpr int kHttpWorkers = 16;

Reply run_catching(long long revision, const std::function<Reply()>& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    return {400, error_body(revision, "malformed", e.what())};
  } catch (const ModelError& e) {
    json body = error_body(revision, "invalid-request", e.what());
    body["error"]["path"] = e.path();
    return {400, std::move(body)};
  } catch (const MechanismError& e) {
    json body = error_body(revision, "mechanism", e.what());
    body["error"]["mechanisms"] = e.mechanism_count();
    if (e.element_id()) body["error"]["element"] = *e.element_id();
    return {422, std::move(body)};
  } catch (const NumericalError& e) {
    return {500, error_body(revision, "numerical", e.what())};
  } catch (const Error& e) {
    return {422, error_body(revision, "infeasible", e.what())};
  } catch (const std::exception& e) {
    return {500, error_body(revision, "internal", e.what())};
  }
}

void send(httplib::Response& res, const Reply& reply) {
  res.status = reply.status;
  res.set_content(dump_document(reply.body), "application/json");
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json body = json::parse(req.body);
  if (!body.is_object()) {
    throw ModelError(ModelError::Kind::kSchema, "", "request body must be an object");
  }
  return body;
}

std::optional<long long> expected_revision(const httplib::Request& req,
                                           const json& body) {
  if (auto it = body.find("revision"); it != body.end()) {
    if (!it->is_number_integer()) {
      throw ModelError(ModelError::Kind::kSchema, "/revision", "expected an integer");
    }
    return it->get<long long>();
  }
  if (req.has_header("If-Match")) {
    std::string value = req.get_header_value("If-Match");
    value.erase(std::remove(value.begin(), value.end(), '"'), value.end());
    try {
      return std::stoll(value);
    } catch (const std::exception&) {
      throw ModelError(ModelError::Kind::kSchema, "If-Match", "expected a revision");
    }
  }
  return std::nullopt;
}

std::string request_key(const httplib::Request& req, json body) {
  body.erase("revision");
  return req.method + " " + req.path + " " + body.dump();
}

std::optional<json> optional_member(const json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end() || it->is_null()) return std::nullopt;
  return std::optional<json>(std::in_place, *it);
}

std::optional<std::vector<int>> optional_ids(const json& body, const char* key) {
  auto v = optional_member(body, key);
  if (!v) return std::nullopt;
  return id_list(*v, std::string("/") + key);
}

template <typename T>
T member_or(const json& body, const char* key, T fallback) {
  auto it = body.find(key);
  if (it == body.end() || it->is_null()) return fallback;
  return it->get<T>();
}

}  // namespace

Server::Server(std::shared_ptr<Session> session, ServerOptions options)
    : session_(std::move(session)),
      options_(options),
      http_(std::make_unique<httplib::Server>()) {
  http_->new_task_queue = [] { return new httplib::ThreadPool(kHttpWorkers); };
  routes();
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
  if (port == 0) return http_->bind_to_any_port(host);
  return http_->bind_to_port(host, port) ? port : -1;
}

bool Server::listen() { return http_->listen_after_bind(); }

void Server::stop() {
  if (http_ && http_->is_running()) http_->stop();
}

void Server::wait_until_ready() const { http_->wait_until_ready(); }

void Server::routes() {
  using httplib::Request;
  using httplib::Response;
  auto session = session_;
  const auto guard = options_.guard;
  const int threads = options_.threads;

  // Synchronous computations run on a detached worker so the request can
  // answer 503 once the guard expires; the worker owns everything it reads.
  auto guarded = [guard](long long revision, std::function<Reply()> fn) {
    auto promise = std::make_shared<std::promise<Reply>>();
    auto future = promise->get_future();
    std::thread([promise, revision, fn = std::move(fn)] {
      promise->set_value(run_catching(revision, fn));
    }).detach();
    if (future.wait_for(guard) == std::future_status::timeout) {
      return Reply{503, error_body(revision, "timeout",
                                   fmt::format("computation exceeded the {} ms guard",
                                               guard.count()))};
    }
    return future.get();
  };

  using Compute = std::function<json(const Session::Snapshot&, const json&)>;
  auto read = [session, guarded](Compute compute) {
    return [session, guarded, compute](const Request& req, Response& res) {
      const Session::Snapshot snap = session->snapshot();
      json body;
      Reply early = run_catching(snap.revision, [&] {
        body = parse_body(req);
        for (const auto& [key, value] : req.params) body[key] = value;
        return Reply{};
      });
      if (early.status != 200) return send(res, early);
      send(res, guarded(snap.revision, [snap, body, compute] {
        return Reply{200, envelope(snap.revision, compute(snap, body))};
      }));
    };
  };

  http_->Get("/model", [session](const Request&, Response& res) {
    const Session::Snapshot snap = session->snapshot();
    send(res, {200, envelope(snap.revision, {{"model", model_to_json(*snap.model)},
                                             {"hash", snap.hash}})});
  });

  http_->Put("/model", [session](const Request& req, Response& res) {
    const long long rev = session->snapshot().revision;
    send(res, run_catching(rev, [&] {
      const json body = parse_body(req);
      const json& doc = body.contains("model") ? body.at("model") : body;
      json clean = doc;
      if (clean.is_object()) clean.erase("revision");
      StructuralModel model = model_from_json(clean);
      return session->mutate(expected_revision(req, body), request_key(req, body),
                             [&](const StructuralModel&) { return model; });
    }));
  });

  http_->Patch(R"(/model/node/(-?\d+))", [session](const Request& req, Response& res) {
    const long long rev = session->snapshot().revision;
    send(res, run_catching(rev, [&] {
      const int id = std::stoi(req.matches[1]);
      const json body = parse_body(req);
      return session->mutate(
          expected_revision(req, body), request_key(req, body),
          [&](const StructuralModel& current) {
            StructuralModel next = current;
            const int k = next.node_index(id);
            Node& node = next.nodes[k];
            const bool absolute = body.contains("coords");
            const json& v = absolute ? body.at("coords") : body.at("delta");
            if (!v.is_array() || static_cast<int>(v.size()) != next.dimension) {
              throw ModelError(ModelError::Kind::kSchema,
                               absolute ? "/coords" : "/delta",
                               fmt::format("expected {} components", next.dimension));
            }
            for (int a = 0; a < next.dimension; ++a) {
              const double x = v.at(a).get<double>();
              node.coords[a] = absolute ? x : node.coords[a] + x;
            }
            return next;
          });
    }));
  });

  http_->Get("/redundancy", read([session](const Session::Snapshot& snap, const json& body) {
    const bool matrix = body.contains("matrix") &&
                        (body["matrix"] == true || body["matrix"] == "1" ||
                         body["matrix"] == "true");
    return redundancy(*session->derived(snap), matrix);
  }));

  http_->Get("/analyze", read([session](const Session::Snapshot& snap, const json&) {
    return analyze(*snap.model, *session->derived(snap));
  }));

  http_->Post("/whatif/remove", read([session](const Session::Snapshot& snap,
                                               const json& body) {
    std::vector<int> ids;
    if (auto one = body.find("element"); one != body.end()) {
      if (!one->is_number_integer()) {
        throw ModelError(ModelError::Kind::kSchema, "/element", "expected an integer id");
      }
      ids.push_back(one->get<int>());
    } else {
      ids = id_list(body.at("elements"), "/elements");
    }
    return whatif_remove(*snap.model, *session->derived(snap), ids,
                         optional_member(body, "load"));
  }));

  http_->Post("/robustness/table", read([session, threads](const Session::Snapshot& snap,
                                                           const json& body) {
    return robustness(*snap.model, *session->derived(snap),
                      optional_member(body, "load"), {threads});
  }));

  http_->Post("/imperfection", read([session](const Session::Snapshot& snap,
                                              const json& body) {
    return imperfection(*snap.model, *session->derived(snap),
                        optional_member(body, "alpha").value_or(json()),
                        member_or(body, "matrix", false));
  }));

  http_->Post("/sequence/evaluate", read([](const Session::Snapshot& snap,
                                            const json& body) {
    const PlanSpec plan = plan_from(*snap.model, optional_ids(body, "base"),
                                    optional_ids(body, "order"));
    return sequence_evaluate(*snap.model, plan, member_or(body, "rank_one", false));
  }));

  http_->Post("/sequence/search", read([threads](const Session::Snapshot& snap,
                                                 const json& body) {
    const PlanSpec plan = plan_from(*snap.model, optional_ids(body, "base"), std::nullopt);
    SearchOptions opts;
    opts.threads = threads;
    const std::string criterion = member_or<std::string>(body, "criterion", "peak");
    if (criterion == "element") {
      opts.criterion = SequenceCriterion::kElementPeak;
      opts.tracked_element = body.at("element").get<int>();
    } else if (criterion != "peak") {
      throw ModelError(ModelError::Kind::kSchema, "/criterion",
                       "criterion must be \"peak\" or \"element\"");
    }
    opts.max_plans = member_or(body, "max_plans", opts.max_plans);
    return sequence_search(*snap.model, plan.base, opts);
  }));

  http_->Post("/optimize/robust", [this, session, threads](const Request& req,
                                                           Response& res) {
    const Session::Snapshot snap = session->snapshot();
    send(res, run_catching(snap.revision, [&] {
      const json body = parse_body(req);
      if (!snap.model->design || snap.model->design->size() == 0) {
        throw ModelError(ModelError::Kind::kSchema, "/design",
                         "model has no design variables");
      }
      OptimizerOptions opts;
      opts.threads = member_or(body, "threads", threads);
      opts.max_iterations = member_or(body, "max_iterations", opts.max_iterations);
      opts.objective_tolerance = member_or(body, "tolerance", opts.objective_tolerance);
      opts.smoothing_p = member_or(body, "smoothing_p", opts.smoothing_p);
      const std::string id = jobs_.start(snap.model, snap.revision, opts);
      return Reply{202, envelope(snap.revision, {{"job", id}, {"state", "running"}})};
    }));
  });

  http_->Get(R"(/jobs/([\w-]+))", [this, session](const Request& req, Response& res) {
    auto status = jobs_.status(req.matches[1]);
    if (!status) {
      return send(res, {404, error_body(session->snapshot().revision, "not-found",
                                        "unknown job")});
    }
    send(res, {200, *status});
  });

  http_->Delete(R"(/jobs/([\w-]+))", [this, session](const Request& req, Response& res) {
    const long long rev = session->snapshot().revision;
    if (!jobs_.cancel(req.matches[1])) {
      return send(res, {404, error_body(rev, "not-found", "unknown job")});
    }
    send(res, {200, envelope(rev, {{"job", std::string(req.matches[1])},
                                   {"state", "cancelling"}})});
  });

  http_->set_exception_handler([session](const Request&, Response& res,
                                         std::exception_ptr ep) {
    std::string message = "unknown error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      message = e.what();
    } catch (...) {
    }
    spdlog::error("unhandled exception in request: {}", message);
    send(res, {500, error_body(session->snapshot().revision, "internal", message)});
  });
}

}  // namespace redkit::service
