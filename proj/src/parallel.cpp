#include "mvc/parallel.hpp"

#include <exception>
#include <thread>
#include <vector>

#include "mvc/tensor.hpp"

namespace mvc {

void parallel_for(int64_t n, bool concurrent, const std::function<void(int64_t)>& fn) {
    if (!concurrent || n < 2 || grad_enabled()) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(static_cast<size_t>(n));
    std::vector<std::thread> workers;
    workers.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        workers.emplace_back([&, i] {
            GradModeGuard mode(false);
            try {
                fn(i);
            } catch (...) {
                errors[static_cast<size_t>(i)] = std::current_exception();
            }
        });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace mvc
