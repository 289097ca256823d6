#include "pointmtl/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <thread>

namespace pointmtl {

namespace {

thread_local bool tls_in_worker = false;

// Persistent pool shared by all kernels. Nested parallel_for calls from inside
// a worker fall back to serial execution, so composite operations (batch eval,
// verification sweeps) can parallelize at the outermost level only.
//
// Each submission gets its own reference-counted Job. A worker that wakes late
// still holds the old job, whose work counter is already exhausted, so it can
// never touch a newer job's items or call a destroyed function.
class Pool {
  public:
    static Pool& instance() {
        // Leaked deliberately: detached workers must outlive static teardown.
        static Pool* pool = new Pool(max_threads() - 1);
        return *pool;
    }

    void run(size_t n, const std::function<void(size_t)>& fn) {
        std::lock_guard<std::mutex> run_lock(run_mutex_);
        auto job = std::make_shared<Job>();
        job->fn = &fn;
        job->n = n;
        {
            std::lock_guard<std::mutex> lk(mutex_);
            job_ = job;
            ++job_id_;
        }
        cv_.notify_all();
        work(*job);  // caller participates
        {
            std::unique_lock<std::mutex> lk(mutex_);
            done_cv_.wait(lk, [&] { return job->done.load() == job->n; });
            job_.reset();
        }
    }

  private:
    struct Job {
        const std::function<void(size_t)>* fn = nullptr;
        size_t n = 0;
        std::atomic<size_t> next{0};
        std::atomic<size_t> done{0};
    };

    explicit Pool(int workers) {
        for (int i = 0; i < workers; ++i) {
            std::thread([this] { worker_loop(); }).detach();
        }
    }

    void work(Job& job) {
        bool saved = tls_in_worker;
        tls_in_worker = true;
        for (;;) {
            size_t i = job.next.fetch_add(1);
            if (i >= job.n) break;
            (*job.fn)(i);
            if (job.done.fetch_add(1) + 1 == job.n) {
                std::lock_guard<std::mutex> lk(mutex_);
                done_cv_.notify_all();
            }
        }
        tls_in_worker = saved;
    }

    void worker_loop() {
        uint64_t seen = 0;
        for (;;) {
            std::shared_ptr<Job> job;
            {
                std::unique_lock<std::mutex> lk(mutex_);
                cv_.wait(lk, [&] { return job_id_ != seen; });
                seen = job_id_;
                job = job_;
            }
            if (job) work(*job);
        }
    }

    std::mutex run_mutex_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    std::shared_ptr<Job> job_;  // guarded by mutex_
    uint64_t job_id_ = 0;
};

}  // namespace

int max_threads() {
    static int cached = [] {
        if (const char* env = std::getenv("POINTMTL_THREADS")) {
            int n = std::atoi(env);
            if (n >= 1) return n;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return cached;
}

void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
    if (tls_in_worker || max_threads() <= 1 || n < 2) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    Pool::instance().run(n, fn);
}

}  // namespace pointmtl
