#ifndef PLANAGENT_COMMON_HPP_
#define PLANAGENT_COMMON_HPP_

#include <cstdint>
#include <functional>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace planagent {

// Text that failed to parse: world specs, action strings, record files.
// `line` is 1-based when the source is a line-oriented file, 0 otherwise.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg, int line = 0)
      : std::runtime_error(msg), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Violated invariant or precondition (duplicate ids, degenerate fits,
// shape mismatches, references to unknown entities).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A planner/actor/judge port produced output that could not be used
// after the configured number of attempts.
class AgentOutputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Remote endpoint unreachable after retries.
class TransportError : public std::runtime_error {
 public:
  TransportError(const std::string& msg, int last_status)
      : std::runtime_error(msg), last_status_(last_status) {}
  int last_status() const { return last_status_; }

 private:
  int last_status_;
};

// Remote endpoint answered, but not in the expected wire format.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace log {

using Sink = std::function<void(std::string_view)>;

inline Sink& warn_sink() {
  static Sink sink = [](std::string_view msg) {
    std::cerr << "[warn] " << msg << "\n";
  };
  return sink;
}

inline void set_warn_sink(Sink sink) { warn_sink() = std::move(sink); }

inline void warn(const std::string& msg) {
  if (warn_sink()) warn_sink()(msg);
}

}  // namespace log

// Runs fn(i) for i in [0, n). With jobs > 1 the index space is split in
// contiguous blocks over worker threads; callers must make fn(i) touch
// only slot i of any shared output. The first exception thrown by any
// worker is rethrown after all threads join.
inline void parallel_for(std::size_t n, int jobs,
                         const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  if (jobs <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  std::vector<std::thread> threads;
  std::exception_ptr first_error;
  std::mutex error_mu;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w]() {
      const std::size_t lo = n * w / workers;
      const std::size_t hi = n * (w + 1) / workers;
      for (std::size_t i = lo; i < hi; ++i) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace planagent

#endif  // PLANAGENT_COMMON_HPP_
