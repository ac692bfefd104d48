#include "session.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "redkit/errors.hpp"
#include "redkit/report.hpp"
#include "redkit/robustness.hpp"

namespace redkit::service {

using nlohmann::json;

namespace {

constexpr std::size_t kCacheEntries = 8;
constexpr std::size_t kRecordedReplies = 256;

}  // namespace

json error_body(long long revision, std::string_view code,
                std::string_view message) {
  return {{"revision", revision},
          {"error", {{"code", code}, {"message", message}}}};
}

Session::Session(StructuralModel model) {
  current_.revision = 0;
  current_.hash = content_hash(model);
  current_.model = std::make_shared<const StructuralModel>(std::move(model));
}

Session::Snapshot Session::snapshot() const {
  std::shared_lock lock(mutex_);
  return current_;
}

std::shared_ptr<const Derived> Session::derived(const Snapshot& snapshot) {
  {
    std::lock_guard lock(cache_mutex_);
    for (const auto& [hash, value] : cache_) {
      if (hash == snapshot.hash) return value;
    }
  }
  // Computed outside the lock; concurrent misses may both compute, which is
  // harmless since the result is a pure function of the model.
  auto value = std::make_shared<const Derived>(derive(*snapshot.model));
  std::lock_guard lock(cache_mutex_);
  cache_.emplace_back(snapshot.hash, value);
  if (cache_.size() > kCacheEntries) cache_.pop_front();
  return value;
}

Reply Session::mutate(std::optional<long long> expected,
                      const std::string& request_key, const Edit& edit) {
  std::unique_lock lock(mutex_);
  if (expected) {
    auto it = replies_.find({*expected, request_key});
    if (it != replies_.end()) return it->second;
    if (*expected != current_.revision) {
      return {409, error_body(current_.revision, "revision-conflict",
                              fmt::format("expected revision {}, current is {}",
                                          *expected, current_.revision))};
    }
  }

  StructuralModel next = edit(*current_.model);
  const ValidationReport findings = validate_model(next);
  if (!findings.ok()) {
    json body = error_body(current_.revision, "invalid-model",
                           findings.findings.front().message);
    body["findings"] = findings_json(findings);
    return {422, std::move(body)};
  }

  const long long previous = current_.revision;
  current_.revision = previous + 1;
  current_.hash = content_hash(next);
  current_.model = std::make_shared<const StructuralModel>(std::move(next));
  Reply reply{200, envelope(current_.revision, {{"hash", current_.hash},
                                                {"findings", json::array()}})};

  replies_[{previous, request_key}] = reply;
  reply_order_.emplace_back(previous, request_key);
  if (reply_order_.size() > kRecordedReplies) {
    replies_.erase(reply_order_.front());
    reply_order_.pop_front();
  }
  return reply;
}

// ---------------------------------------------------------------------------

JobManager::~JobManager() {
  std::lock_guard lock(mutex_);
  for (auto& [id, job] : jobs_) job->worker.request_stop();
  // Join here so no worker ever releases the last reference to its own job.
  for (auto& [id, job] : jobs_) {
    if (job->worker.joinable()) job->worker.join();
  }
}

std::string JobManager::start(std::shared_ptr<const StructuralModel> model,
                              long long revision, OptimizerOptions options) {
  auto job = std::make_shared<Job>();
  job->id = fmt::format("job-{}", next_id_++);
  job->revision = revision;
  {
    std::lock_guard lock(mutex_);
    jobs_[job->id] = job;
  }
  // The worker only holds a weak reference so the manager can drop jobs.
  std::weak_ptr<Job> weak = job;
  job->worker = std::jthread([weak, model, options](std::stop_token stop) {
    auto progress = [&](const ProgressSnapshot& snap) {
      if (auto j = weak.lock()) {
        std::lock_guard lock(j->mutex);
        j->progress = snap;
      }
    };
    json result;
    std::string error;
    std::string state = "done";
    try {
      HomogenizationResult r = homogenize_redundancy(*model, options, progress, stop);
      result = homogenization_json(r);
      if (r.optimization.status == OptimizerStatus::kCancelled) state = "cancelled";
    } catch (const std::exception& e) {
      error = e.what();
      state = "failed";
      spdlog::warn("optimization job failed: {}", e.what());
    }
    if (auto j = weak.lock()) {
      std::lock_guard lock(j->mutex);
      j->result = std::move(result);
      j->error = std::move(error);
      j->state = state;
    }
  });
  return job->id;
}

std::optional<json> JobManager::status(const std::string& id) const {
  std::shared_ptr<Job> job;
  {
    std::lock_guard lock(mutex_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return std::nullopt;
    job = it->second;
  }
  std::lock_guard lock(job->mutex);
  json incumbent = json::array();
  for (Eigen::Index i = 0; i < job->progress.incumbent.size(); ++i) {
    incumbent.push_back(job->progress.incumbent[i]);
  }
  json body = {{"job", job->id},
               {"state", job->state},
               {"iteration", job->progress.iteration},
               {"spread", job->progress.iteration > 0 ? json(job->progress.objective)
                                                      : json(nullptr)},
               {"incumbent", std::move(incumbent)}};
  if (!job->result.is_null()) body["result"] = job->result;
  if (!job->error.empty()) body["error"] = job->error;
  return envelope(job->revision, std::move(body));
}

bool JobManager::cancel(const std::string& id) {
  std::lock_guard lock(mutex_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return false;
  it->second->worker.request_stop();
  return true;
}

}  // namespace redkit::service
