#include "verbatim/jobs.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>

#include "verbatim/error.hpp"
#include "verbatim/text.hpp"

namespace verbatim {

std::string_view to_string(JobState state) {
  switch (state) {
    case JobState::Queued: return "queued";
    case JobState::Running: return "running";
    case JobState::Succeeded: return "succeeded";
    case JobState::Failed: return "failed";
    case JobState::Cancelled: return "cancelled";
  }
  return "queued";
}

nlohmann::json JobInfo::to_json() const {
  nlohmann::json j = {{"id", id}, {"kind", kind}, {"state", to_string(state)}, {"progress", progress}};
  j["result"] = result;
  if (!error.empty()) j["error"] = {{"error", error}, {"message", message}};
  return j;
}

JobQueue::JobQueue(std::size_t workers) {
  workers = std::max<std::size_t>(workers, 1);
  for (std::size_t i = 0; i < workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

JobQueue::~JobQueue() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
    for (auto& [id, job] : jobs_) job->cancel_requested = true;
  }
  wake_.notify_all();
  for (auto& t : workers_) t.join();
}

std::string JobQueue::submit(std::string kind, Work work) {
  auto job = std::make_shared<Job>();
  job->info.id = "job-" + text::random_token(8);
  job->info.kind = std::move(kind);
  job->work = std::move(work);
  {
    std::lock_guard lock(mutex_);
    jobs_[job->info.id] = job;
    queue_.push_back(job);
  }
  wake_.notify_one();
  return job->info.id;
}

JobInfo JobQueue::info(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) throw Error(Errc::UnknownId, "no job " + id);
  return it->second->info;
}

JobInfo JobQueue::cancel(const std::string& id) {
  std::lock_guard lock(mutex_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) throw Error(Errc::UnknownId, "no job " + id);
  Job& job = *it->second;
  job.cancel_requested = true;
  if (job.info.state == JobState::Queued) {
    std::erase(queue_, it->second);
    job.info.state = JobState::Cancelled;
    done_.notify_all();
  }
  return job.info;
}

JobInfo JobQueue::wait(const std::string& id) {
  std::unique_lock lock(mutex_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) throw Error(Errc::UnknownId, "no job " + id);
  auto job = it->second;
  done_.wait(lock, [&] { return job->info.finished(); });
  return job->info;
}

void JobQueue::worker_loop() {
  while (true) {
    std::shared_ptr<Job> job;
    {
      std::unique_lock lock(mutex_);
      wake_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      job = queue_.front();
      queue_.pop_front();
      job->info.state = JobState::Running;
    }
    run(job);
  }
}

void JobQueue::run(const std::shared_ptr<Job>& job) {
  RunControl control;
  control.progress = [this, job](double p) {
    std::lock_guard lock(mutex_);
    job->info.progress = std::clamp(std::max(job->info.progress, p), 0.0, 1.0);
  };
  control.cancelled = [this, job] {
    std::lock_guard lock(mutex_);
    return job->cancel_requested;
  };
  nlohmann::json result;
  JobState state = JobState::Succeeded;
  std::string error;
  std::string message;
  try {
    result = job->work(control);
  } catch (const Error& e) {
    state = e.code() == Errc::Cancelled ? JobState::Cancelled : JobState::Failed;
    error = to_string(e.code());
    message = e.detail();
  } catch (const std::exception& e) {
    state = JobState::Failed;
    error = "InternalError";
    message = e.what();
  }
  if (state == JobState::Failed) spdlog::warn("job {} failed: {}: {}", job->info.id, error, message);
  {
    std::lock_guard lock(mutex_);
    job->info.state = state;
    job->info.result = std::move(result);
    job->info.error = error;
    job->info.message = message;
    if (state == JobState::Succeeded) job->info.progress = 1.0;
  }
  done_.notify_all();
}

}  // namespace verbatim
