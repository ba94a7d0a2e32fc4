#include "mnlfa/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace mnlfa {

int default_thread_count() {
    if (const char* env = std::getenv("MNLFA_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n > 0) {
                return n;
            }
        } catch (const std::exception&) {
        }
    }
    return 1;
}

void parallel_chunks(std::ptrdiff_t n, int threads,
                     const std::function<void(std::ptrdiff_t, std::ptrdiff_t, std::ptrdiff_t)>& body) {
    const std::ptrdiff_t chunks = chunk_count(n);
    if (threads <= 0) {
        threads = default_thread_count();
    }
    const auto workers = static_cast<std::ptrdiff_t>(std::min<std::ptrdiff_t>(threads, chunks));
    auto run = [&](std::ptrdiff_t c) {
        const std::ptrdiff_t begin = c * kChunkSize;
        body(begin, std::min(n, begin + kChunkSize), c);
    };
    if (workers <= 1) {
        for (std::ptrdiff_t c = 0; c < chunks; ++c) {
            run(c);
        }
        return;
    }

    std::atomic<std::ptrdiff_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (std::ptrdiff_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::ptrdiff_t c = next++; c < chunks; c = next++) {
                try {
                    run(c);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) {
                        error = std::current_exception();
                    }
                    next = chunks;
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

}  // namespace mnlfa
