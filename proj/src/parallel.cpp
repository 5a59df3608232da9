#include "covct/parallel.hpp"

#include <atomic>
#include <exception>
#include <thread>

namespace covct {

std::vector<std::string> run_batch(size_t n, int workers,
                                   const std::function<void(size_t)>& job) {
  std::vector<std::string> errors(n);
  if (n == 0) return errors;

  auto run_one = [&](size_t i) {
    try {
      job(i);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    } catch (...) {
      errors[i] = "unknown error";
    }
  };

  const size_t thread_count =
      std::min(n, static_cast<size_t>(workers < 1 ? 1 : workers));
  if (thread_count <= 1) {
    for (size_t i = 0; i < n; ++i) run_one(i);
    return errors;
  }

  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(thread_count);
  for (size_t t = 0; t < thread_count; ++t) {
    pool.emplace_back([&]() {
      while (true) {
        const size_t i = next.fetch_add(1);
        if (i >= n) break;
        run_one(i);
      }
    });
  }
  for (auto& th : pool) th.join();
  return errors;
}

}  // namespace covct
