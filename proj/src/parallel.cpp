#include "fmu/parallel.hpp"

#include <atomic>

namespace fmu {

namespace {
std::atomic<unsigned> g_threads{0};
}

void set_thread_count(unsigned count) { g_threads.store(count); }

unsigned thread_count() {
  const unsigned requested = g_threads.load();
  if (requested != 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace fmu
