#include "salt/parallel.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace salt {

int thread_count() {
    static const int n = [] {
        if (const char* env = std::getenv("SALT_THREADS")) {
            const int v = std::atoi(env);
            if (v > 0) return v;
        }
        const unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return n;
}

namespace {

// Persistent worker pool. parallel_for is issued from one thread at a time
// (the library never nests it), so a single job slot suffices.
class Pool {
  public:
    explicit Pool(int workers) : workers_(workers) {
        for (int t = 1; t < workers_; ++t) {
            threads_.emplace_back([this, t] { worker_loop(t); });
        }
    }

    ~Pool() {
        {
            std::lock_guard<std::mutex> lk(mu_);
            shutdown_ = true;
        }
        cv_.notify_all();
        for (auto& th : threads_) th.join();
    }

    void run(int64_t n, const std::function<void(int64_t, int64_t)>& body) {
        // concurrent issuers (e.g. parallel forward calls on a shared closed
        // module) serialize here; each still gets the whole pool
        std::lock_guard<std::mutex> run_lk(run_mu_);
        const int used = static_cast<int>(std::min<int64_t>(workers_, n));
        const int64_t chunk = (n + used - 1) / used;
        {
            std::lock_guard<std::mutex> lk(mu_);
            body_ = &body;
            total_ = n;
            chunk_ = chunk;
            remaining_ = used - 1;
            ++epoch_;
        }
        cv_.notify_all();
        body(0, std::min<int64_t>(n, chunk));
        std::unique_lock<std::mutex> lk(mu_);
        done_cv_.wait(lk, [this] { return remaining_ == 0; });
        body_ = nullptr;
    }

  private:
    void worker_loop(int id) {
        uint64_t seen = 0;
        for (;;) {
            const std::function<void(int64_t, int64_t)>* body = nullptr;
            int64_t lo = 0, hi = 0;
            {
                std::unique_lock<std::mutex> lk(mu_);
                cv_.wait(lk, [&] { return shutdown_ || epoch_ != seen; });
                if (shutdown_) return;
                seen = epoch_;
                lo = id * chunk_;
                hi = std::min<int64_t>(total_, lo + chunk_);
                body = body_;
            }
            if (lo < hi && body) (*body)(lo, hi);
            {
                std::lock_guard<std::mutex> lk(mu_);
                if (--remaining_ == 0) done_cv_.notify_one();
            }
        }
    }

    int workers_;
    std::vector<std::thread> threads_;
    std::mutex run_mu_;
    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    const std::function<void(int64_t, int64_t)>* body_ = nullptr;
    int64_t total_ = 0, chunk_ = 0;
    int remaining_ = 0;
    uint64_t epoch_ = 0;
    bool shutdown_ = false;
};

} // namespace

namespace {
thread_local bool g_in_pool_body = false;
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body) {
    if (n <= 0) return;
    const int workers = thread_count();
    if (workers <= 1 || n < 2 || g_in_pool_body) {
        body(0, n);
        return;
    }
    static Pool pool(thread_count());
    auto guarded = [&body](int64_t lo, int64_t hi) {
        g_in_pool_body = true;
        body(lo, hi);
        g_in_pool_body = false;
    };
    pool.run(n, guarded);
}

} // namespace salt
