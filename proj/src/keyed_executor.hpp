#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

namespace metagadget::detail {

/// One FIFO lane (and one worker thread) per key. Jobs on a lane run one at a
/// time in submission order; lanes run independently of each other.
class KeyedExecutor {
public:
    using Job = std::function<void()>;

    explicit KeyedExecutor(std::size_t depth) : depth_(depth) {}
    KeyedExecutor(const KeyedExecutor&) = delete;
    KeyedExecutor& operator=(const KeyedExecutor&) = delete;
    ~KeyedExecutor() { stop(); }

    /// False when the lane already holds `depth` queued or running jobs, or
    /// after stop().
    bool submit(const std::string& key, Job job) {
        std::lock_guard lanes_lock(lanes_mutex_);
        if (stopped_) return false;
        auto& lane = lanes_[key];
        if (!lane) {
            lane = std::make_unique<Lane>();
            lane->worker = std::thread([l = lane.get()] { drain(*l); });
        }
        std::lock_guard lock(lane->mutex);
        if (lane->pending >= depth_) return false;
        ++lane->pending;
        lane->jobs.push_back(std::move(job));
        lane->cv.notify_one();
        return true;
    }

    /// Runs every queued job to completion, then joins the workers.
    void stop() {
        std::map<std::string, std::unique_ptr<Lane>> lanes;
        {
            std::lock_guard lock(lanes_mutex_);
            stopped_ = true;
            lanes.swap(lanes_);
        }
        for (auto& [key, lane] : lanes) {
            {
                std::lock_guard lock(lane->mutex);
                lane->closing = true;
            }
            lane->cv.notify_one();
            if (lane->worker.joinable()) lane->worker.join();
        }
    }

private:
    struct Lane {
        std::mutex mutex;
        std::condition_variable cv;
        std::deque<Job> jobs;
        std::size_t pending = 0;
        bool closing = false;
        std::thread worker;
    };

    static void drain(Lane& lane) {
        for (;;) {
            Job job;
            {
                std::unique_lock lock(lane.mutex);
                lane.cv.wait(lock, [&] { return lane.closing || !lane.jobs.empty(); });
                if (lane.jobs.empty()) return;
                job = std::move(lane.jobs.front());
                lane.jobs.pop_front();
            }
            job();
            std::lock_guard lock(lane.mutex);
            --lane.pending;
        }
    }

    std::size_t depth_;
    std::mutex lanes_mutex_;
    std::map<std::string, std::unique_ptr<Lane>> lanes_;
    bool stopped_ = false;
};

} // namespace metagadget::detail
