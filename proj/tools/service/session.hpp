#pragma once

#include <atomic>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "operations.hpp"
#include "redkit/model.hpp"
#include "redkit/optimize.hpp"

namespace redkit::service {

/// Response of a service call: HTTP status plus the enveloped body.
struct Reply {
  int status = 200;
  nlohmann::json body;
};

/// nlohmann body for an error reply: {"revision", "error": {code, message}}.
nlohmann::json error_body(long long revision, std::string_view code,
                          std::string_view message);

/// The single model document edited in a design session. Reads work on
/// immutable snapshots; writes go through a revision check-and-swap.
class Session {
 public:
  struct Snapshot {
    long long revision = 0;
    std::shared_ptr<const StructuralModel> model;
    std::string hash;
  };

  explicit Session(StructuralModel model);

  Snapshot snapshot() const;

  /// Matrices and R for the snapshot's geometry, cached by content hash.
  std::shared_ptr<const Derived> derived(const Snapshot& snapshot);

  using Edit = std::function<StructuralModel(const StructuralModel&)>;

  /// Applies `edit` when `expected` (if given) equals the current revision.
  /// A retry carrying the same precondition and request key gets the
  /// recorded reply again instead of a conflict.
  Reply mutate(std::optional<long long> expected, const std::string& request_key,
               const Edit& edit);

 private:
  mutable std::shared_mutex mutex_;
  Snapshot current_;

  std::mutex cache_mutex_;
  std::deque<std::pair<std::string, std::shared_ptr<const Derived>>> cache_;

  std::map<std::pair<long long, std::string>, Reply> replies_;
  std::deque<std::pair<long long, std::string>> reply_order_;
};

/// Background redundancy homogenization jobs.
class JobManager {
 public:
  JobManager() = default;
  JobManager(const JobManager&) = delete;
  JobManager& operator=(const JobManager&) = delete;
  ~JobManager();

  std::string start(std::shared_ptr<const StructuralModel> model,
                    long long revision, OptimizerOptions options);
  /// Enveloped status, or nullopt for an unknown id.
  std::optional<nlohmann::json> status(const std::string& id) const;
  bool cancel(const std::string& id);

 private:
  struct Job {
    std::string id;
    long long revision = 0;
    mutable std::mutex mutex;
    std::string state = "running";
    ProgressSnapshot progress;
    nlohmann::json result;
    std::string error;
    std::jthread worker;
  };

  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::atomic<long long> next_id_{1};
};

}  // namespace redkit::service
