#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace crl {

// Per-step event flags. Slots 0..K-1 carry the behavioral indicators, slot K
// carries the success indicator. The length is fixed for the lifetime of a
// run.
using EventVector = std::vector<std::uint8_t>;

enum class Bound { Upper, Lower };

// One constraint slot: a named indicator, the side it bounds, and the target
// rate in [0, 1].
struct ConstraintSpec {
  std::string name;
  Bound bound = Bound::Upper;
  double threshold = 0.0;
};

struct Transition {
  std::vector<double> state;
  std::vector<double> action;
  double reward = 0.0;
  std::vector<double> next_state;
  bool done = false;       // true termination; time limits go in `truncated`
  bool truncated = false;  // bootstrap targets must not mask on this
  EventVector events;
};

using Batch = std::vector<Transition>;

struct InsufficientData : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Fixed-capacity ring of transitions with uniform-with-replacement sampling
// and last-N retrieval. Single writer, single reader, no locking; parallel
// replicates each own their buffer.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  // Appends one transition, evicting the oldest once full. The first append
  // fixes the expected state/action/event dimensions; later mismatches throw.
  void append(Transition t);

  // n independent uniform draws with replacement; n may exceed the stored
  // count. Throws InsufficientData on an empty buffer. Warmup floors are the
  // trainer's job.
  Batch sample_uniform(std::size_t n, std::mt19937_64& rng) const;

  // The n most recently appended transitions, oldest first.
  Batch last_n(std::size_t n) const;

  std::size_t size() const { return count_; }
  std::size_t capacity() const { return capacity_; }

 private:
  const Transition& at_age(std::size_t age_from_oldest) const;

  std::size_t capacity_;
  std::vector<Transition> storage_;
  std::size_t write_cursor_ = 0;
  std::size_t count_ = 0;
  std::size_t state_dim_ = 0;
  std::size_t action_dim_ = 0;
  std::size_t event_dim_ = 0;
};

}  // namespace crl
