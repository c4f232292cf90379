#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "verbatim/topic_modeler.hpp"

namespace verbatim {

enum class JobState { Queued, Running, Succeeded, Failed, Cancelled };
std::string_view to_string(JobState state);

struct JobInfo {
  std::string id;
  std::string kind;
  JobState state = JobState::Queued;
  double progress = 0.0;  // non-decreasing, in [0, 1]
  nlohmann::json result;  // report on success
  std::string error;      // error kind on failure
  std::string message;

  [[nodiscard]] bool finished() const {
    return state == JobState::Succeeded || state == JobState::Failed ||
           state == JobState::Cancelled;
  }
  [[nodiscard]] nlohmann::json to_json() const;
};

// Bounded worker pool for pipeline runs.
class JobQueue {
 public:
  using Work = std::function<nlohmann::json(const RunControl&)>;

  explicit JobQueue(std::size_t workers);
  ~JobQueue();
  JobQueue(const JobQueue&) = delete;
  JobQueue& operator=(const JobQueue&) = delete;

  std::string submit(std::string kind, Work work);
  // Throws UnknownId.
  [[nodiscard]] JobInfo info(const std::string& id) const;
  // Queued jobs are dropped; running jobs stop at their next progress check.
  JobInfo cancel(const std::string& id);
  JobInfo wait(const std::string& id);

 private:
  struct Job {
    JobInfo info;
    Work work;
    bool cancel_requested = false;
  };

  void worker_loop();
  void run(const std::shared_ptr<Job>& job);

  mutable std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  std::deque<std::shared_ptr<Job>> queue_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::vector<std::thread> workers_;
  bool stopping_ = false;
};

}  // namespace verbatim
